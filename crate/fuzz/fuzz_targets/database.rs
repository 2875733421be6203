#![no_main]

use libfuzzer_sys::fuzz_target;
use timbre_core::retrieval::{query, EmbeddingDatabase};

// First two bytes give the length of the binary part; the rest is the index.
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let split = (u16::from_le_bytes([data[0], data[1]]) as usize).min(data.len() - 2);
    let (bin, index) = data[2..].split_at(split);
    if let Ok(db) = EmbeddingDatabase::from_bytes(bin, index) {
        let q = vec![1.0; db.dim()];
        let _ = query(&db, &q, 3, None);
        let again = EmbeddingDatabase::from_bytes(&db.to_bin_bytes(), &db.to_index_json().unwrap()).unwrap();
        assert_eq!(again.ids(), db.ids());
    }
});
