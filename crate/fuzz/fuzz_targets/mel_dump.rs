#![no_main]

use libfuzzer_sys::fuzz_target;
use timbre_core::dspfeatures::{decode_dump, encode_dump};

fuzz_target!(|data: &[u8]| {
    if let Ok(mel) = decode_dump(data) {
        assert_eq!(mel.data.len(), mel.frames * mel.n_mels);
        let bytes = encode_dump(&mel).unwrap();
        assert_eq!(decode_dump(&bytes).unwrap(), mel);
    }
});
