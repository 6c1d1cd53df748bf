#![no_main]

use libfuzzer_sys::fuzz_target;

use ncmt::synlang::{oracle_translate, pattern_count, SynLangSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = serde_json::from_slice::<SynLangSpec>(data) else { return };
    if spec.validate().is_err() {
        return;
    }
    let src: Vec<u32> = spec.src_vocab.iter().copied().cycle().take(spec.max_len.min(16)).collect();
    let _ = oracle_translate(&src, &spec);
    let _ = pattern_count(&src, &spec);
});
