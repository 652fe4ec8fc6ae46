#![no_main]

use libfuzzer_sys::fuzz_target;
use spider_em::data::parse_csv;

// First byte picks the header flag; the rest is the file body.
fuzz_target!(|data: &[u8]| {
    if let Some((flag, body)) = data.split_first() {
        if let Ok(ds) = parse_csv(body, flag & 1 == 1, "fuzz") {
            assert!(ds.len() > 0 && ds.dim() > 0);
        }
    }
});
