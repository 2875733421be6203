#![no_main]

use libfuzzer_sys::fuzz_target;
use timbre_core::encoder::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok((model, meta)) = decode_checkpoint(data) {
        let bytes = encode_checkpoint(&model, &meta).unwrap();
        let (again, meta2) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(again, model);
        assert_eq!(meta2, meta);
    }
});
