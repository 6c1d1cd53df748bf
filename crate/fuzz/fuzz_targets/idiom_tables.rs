#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = ncmt::idiomdata::parse_labels(data);
    if let Ok(rows) = ncmt::idiomdata::parse_scores(data) {
        assert!(rows.iter().all(|r| r.score.is_finite()));
    }
});
