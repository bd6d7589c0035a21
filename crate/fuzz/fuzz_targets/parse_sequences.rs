#![no_main]

use immsbm::corpus::{expand_windows, read_sequences};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(sequences) = read_sequences(data) {
        for s in &sequences {
            for window in 1..4 {
                let records = expand_windows(s, window).expect("positive window");
                assert_eq!(records.len(), s.len().saturating_sub(window));
            }
        }
    }
});
