#![no_main]

use libfuzzer_sys::fuzz_target;
use timbre_core::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = ExperimentConfig::from_json(data) {
        let text = cfg.to_json_pretty().unwrap();
        let again = ExperimentConfig::from_json(text.as_bytes()).unwrap();
        assert_eq!(again.hash().unwrap(), cfg.hash().unwrap());
    }
});
