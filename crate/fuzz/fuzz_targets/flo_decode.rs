#![no_main]
use hdrvfi::io::{decode_flo, encode_flo};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(flow) = decode_flo(data) {
        let bytes = encode_flo(&flow);
        assert_eq!(decode_flo(&bytes).unwrap(), flow);
    }
});
