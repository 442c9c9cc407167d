#![no_main]

use libfuzzer_sys::fuzz_target;
use nsf_stability::harness::parse_trace_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = parse_trace_csv(data) {
        for s in &table.samples {
            assert_eq!(s.rel_entropy.len(), table.l_values.len());
        }
    }
});
