#![no_main]

use immsbm::dataset::{read_triplets, write_triplets};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((parsed, _)) = read_triplets(data) {
        assert!(parsed.is_symmetric());
        let mut buf = Vec::new();
        if write_triplets(&parsed, &mut buf).is_ok() {
            let (again, stats) = read_triplets(buf.as_slice()).expect("written triplets parse");
            assert_eq!(stats.symmetrized, 0);
            assert_eq!(again, parsed);
        }
    }
});
