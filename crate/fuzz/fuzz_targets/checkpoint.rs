#![no_main]

use libfuzzer_sys::fuzz_target;

use ncmt::numerics::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = Checkpoint::from_bytes(data) {
        let bytes = ck.to_bytes();
        assert_eq!(Checkpoint::from_bytes(&bytes).expect("re-encoded checkpoint parses").to_bytes(), bytes);
        let _ = ncmt::transformer::ModelParams::from_checkpoint(ck);
    }
});
