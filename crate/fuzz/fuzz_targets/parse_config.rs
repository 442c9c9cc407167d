#![no_main]

use libfuzzer_sys::fuzz_target;
use nsf_stability::harness::parse_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_config(text) {
            // anything accepted must survive a round trip unchanged
            assert_eq!(parse_config(&cfg.to_json()).expect("re-parse"), cfg);
        }
    }
});
