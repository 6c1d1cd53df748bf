#![no_main]

use libfuzzer_sys::fuzz_target;

use ncmt::idiomdata::{match_idioms, parse_corpus_tsv, parse_idioms, LowercaseLemmatizer};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(corpus) = parse_corpus_tsv(text) {
        let idioms = parse_idioms(ncmt::idiomdata::fixture::IDIOMS_JSON).expect("bundled list parses");
        let m = match_idioms(&corpus, &idioms, &LowercaseLemmatizer);
        assert!(m.by_pair.keys().all(|&i| i < corpus.len()));
    }
});
