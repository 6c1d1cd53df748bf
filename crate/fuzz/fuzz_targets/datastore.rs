#![no_main]

use libfuzzer_sys::fuzz_target;

use ncmt::knnstore::Datastore;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = Datastore::from_bytes(data) {
        assert_eq!(Datastore::from_bytes(&ds.to_bytes()).expect("re-encoded store parses"), ds);
    }
});
