//! Replays the checked-in fuzz seeds through the decoders on stable, with
//! the same round-trip checks the fuzz targets make.

use std::path::PathBuf;

use hdrvfi::config::PipelineConfig;
use hdrvfi::dataset::Manifest;
use hdrvfi::io::{decode_flo, decode_float_map, decode_pfm, decode_png, encode_flo, encode_float_map, encode_pfm};

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let b = std::fs::read(&p).unwrap();
            (p, b)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn pfm_seeds() {
    let mut decoded = 0;
    for (path, data) in seeds("pfm_decode") {
        if let Ok(map) = decode_float_map(&data) {
            let bytes = encode_float_map(&map).unwrap();
            assert_eq!(encode_float_map(&decode_float_map(&bytes).unwrap()).unwrap(), bytes, "{}", path.display());
            decoded += 1;
        }
        if let Ok(img) = decode_pfm(&data) {
            assert_eq!(decode_pfm(&encode_pfm(&img).unwrap()).unwrap(), img, "{}", path.display());
        }
    }
    assert_eq!(decoded, 3);
}

#[test]
fn flo_seeds() {
    let mut decoded = 0;
    for (path, data) in seeds("flo_decode") {
        if let Ok(flow) = decode_flo(&data) {
            assert_eq!(decode_flo(&encode_flo(&flow)).unwrap(), flow, "{}", path.display());
            decoded += 1;
        }
    }
    assert_eq!(decoded, 2);
}

#[test]
fn png_seeds() {
    for (path, data) in seeds("png_decode") {
        let img = decode_png(&data, false).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(decode_png(&data, true).is_ok());
    }
}

#[test]
fn manifest_seeds() {
    for (path, data) in seeds("manifest_json") {
        let name = path.file_name().unwrap().to_str().unwrap();
        match Manifest::from_json(&data) {
            Ok(m) => {
                assert!(!name.starts_with("bad_"), "{name} should be rejected");
                assert_eq!(Manifest::from_json(m.to_json().unwrap().as_bytes()).unwrap(), m);
            }
            Err(_) => assert!(name.starts_with("bad_"), "{name} should load"),
        }
    }
}

#[test]
fn config_seeds() {
    for (path, data) in seeds("config_json") {
        let name = path.file_name().unwrap().to_str().unwrap();
        match PipelineConfig::from_json(&data) {
            Ok(c) => {
                assert!(!name.starts_with("bad_"), "{name} should be rejected");
                assert_eq!(PipelineConfig::from_json(c.to_json().unwrap().as_bytes()).unwrap(), c);
            }
            Err(_) => assert!(name.starts_with("bad_"), "{name} should load"),
        }
    }
}
