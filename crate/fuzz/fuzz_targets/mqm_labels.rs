#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(labels) = ncmt::evalkit::parse_labels(data) {
        if let Ok(s) = ncmt::evalkit::mqm_aggregate(&labels) {
            assert!((0.0..=1.0).contains(&s.accuracy));
        }
    }
});
