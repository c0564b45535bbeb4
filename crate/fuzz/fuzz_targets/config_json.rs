#![no_main]
use hdrvfi::config::PipelineConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = PipelineConfig::from_json(data) {
        let json = cfg.to_json().expect("valid config serializes");
        assert_eq!(PipelineConfig::from_json(json.as_bytes()).unwrap(), cfg);
    }
});
