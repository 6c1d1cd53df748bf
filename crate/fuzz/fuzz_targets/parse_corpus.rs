#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(c) = ncmt::synlang::parse_corpus(text) {
            let again = ncmt::synlang::parse_corpus(&c.to_text()).expect("round trip parses");
            assert_eq!(again, c);
        }
    }
});
