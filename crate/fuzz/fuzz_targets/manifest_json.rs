#![no_main]
use hdrvfi::dataset::Manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = Manifest::from_json(data) {
        let json = m.to_json().expect("valid manifest serializes");
        assert_eq!(Manifest::from_json(json.as_bytes()).unwrap(), m);
    }
});
