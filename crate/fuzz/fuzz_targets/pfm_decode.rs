#![no_main]
use hdrvfi::io::{decode_float_map, decode_pfm, encode_float_map, encode_pfm};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(map) = decode_float_map(data) {
        // Whatever decodes must survive a re-encode unchanged.
        let bytes = encode_float_map(&map).expect("decoded map re-encodes");
        let again = decode_float_map(&bytes).expect("re-encoded map decodes");
        assert_eq!(encode_float_map(&again).unwrap(), bytes);
    }
    if let Ok(img) = decode_pfm(data) {
        let bytes = encode_pfm(&img).expect("decoded image re-encodes");
        assert_eq!(decode_pfm(&bytes).unwrap(), img);
    }
});
