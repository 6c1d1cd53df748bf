#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(log) = ncmt::trainer::TrainLog::from_csv_reader(data) {
        let _ = log.to_csv_bytes();
    }
});
