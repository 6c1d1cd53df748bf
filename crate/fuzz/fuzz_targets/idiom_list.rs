#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(idioms) = ncmt::idiomdata::parse_idioms(text) {
            assert!(idioms.iter().all(|e| !e.lemmas.is_empty()));
        }
    }
});
