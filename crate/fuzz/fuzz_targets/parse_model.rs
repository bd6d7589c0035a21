#![no_main]

use immsbm::modelfile::{from_json, to_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(model) = from_json(text) {
            let again = from_json(&to_json(&model).expect("serializes")).expect("round trip");
            assert_eq!(again, model);
        }
    }
});
