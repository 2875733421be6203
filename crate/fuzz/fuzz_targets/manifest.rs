#![no_main]

use libfuzzer_sys::fuzz_target;
use timbre_core::datasetgen::{parse_manifest, write_manifest};

fuzz_target!(|text: &str| {
    if let Ok(records) = parse_manifest(text) {
        let out = write_manifest(&records).unwrap();
        assert_eq!(parse_manifest(&out).unwrap(), records);
    }
});
