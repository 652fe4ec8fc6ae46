#![no_main]

use libfuzzer_sys::fuzz_target;
use spider_em::harness::ExperimentSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = ExperimentSpec::parse(text, None) {
            assert!(spec.validate().is_ok());
        }
    }
});
