#![no_main]

use libfuzzer_sys::fuzz_target;

use ncmt::evalkit::EvalReport;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = EvalReport::parse_sentences_csv(data) {
        let _ = EvalReport::from_records(records, ncmt::evalkit::BleuSmoothing::None);
    }
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = EvalReport::from_json(text);
    }
});
