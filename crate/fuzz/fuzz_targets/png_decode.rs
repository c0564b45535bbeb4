#![no_main]
use hdrvfi::io::decode_png;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_png(data, false) {
        assert!(img.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }
    let _ = decode_png(data, true);
});
