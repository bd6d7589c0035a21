#![no_main]

use immsbm::corpus::{expand_messages, read_messages, SelfPairWeight, VocabPolicy};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_messages(data) {
        // Keep expansion cheap: it is quadratic in message length.
        if !records.is_empty()
            && records
                .iter()
                .all(|r| r.inputs.len() <= 16 && r.outputs.len() <= 16)
        {
            let expanded = expand_messages(&records, VocabPolicy::Build, SelfPairWeight::Double)
                .expect("validated records expand");
            assert!(expanded.is_symmetric());
        }
    }
});
