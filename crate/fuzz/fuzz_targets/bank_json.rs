#![no_main]

use libfuzzer_sys::fuzz_target;
use timbre_core::synthbank::BankFile;

fuzz_target!(|data: &[u8]| {
    if let Ok(file) = BankFile::from_json_bytes(data) {
        let _ = file.bank();
        let again = BankFile::from_json_bytes(&file.to_json_bytes().unwrap()).unwrap();
        assert_eq!(again.patches, file.patches);
    }
});
