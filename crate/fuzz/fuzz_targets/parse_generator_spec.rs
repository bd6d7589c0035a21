#![no_main]

use immsbm::synthetic::{generate, GeneratorSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(mut spec) = serde_json::from_slice::<GeneratorSpec>(data) {
        spec.samples = spec.samples.min(64);
        if spec.n_inputs <= 64 && spec.n_outputs <= 64 && spec.clusters <= 8 {
            if let Ok((data, truth)) = generate(&spec) {
                assert!(data.is_symmetric());
                assert!(truth.validate().is_ok());
            }
        }
    }
});
