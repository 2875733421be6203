#![no_main]

use libfuzzer_sys::fuzz_target;
use timbre_core::AudioBuffer;

fuzz_target!(|data: &[u8]| {
    if let Ok(audio) = AudioBuffer::from_wav_bytes(data) {
        assert!(audio.is_finite());
        assert!(audio.peak() <= 1.0);
        // Whatever decodes must survive a write/read cycle unchanged.
        let bytes = audio.to_wav_bytes().unwrap();
        assert_eq!(AudioBuffer::from_wav_bytes(&bytes).unwrap(), audio);
    }
});
