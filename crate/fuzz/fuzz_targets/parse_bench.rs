#![no_main]

use libfuzzer_sys::fuzz_target;
use spider_em::diagnostics::BenchResult;

// Whatever parses must survive a write/read round trip.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(result) = BenchResult::from_csv(text) {
            let again = BenchResult::from_csv(&result.to_csv()).expect("round trip");
            assert_eq!(again.to_csv(), result.to_csv());
        }
    }
});
