#![no_main]

use libfuzzer_sys::fuzz_target;
use vvlc_core::dataset::{parse_pathloss_csv, write_pathloss_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(ingest) = parse_pathloss_csv(data) {
        // Accepted rows must survive a write/parse cycle unchanged.
        let text = write_pathloss_csv(&ingest.dataset);
        let again = parse_pathloss_csv(text.as_bytes()).expect("re-parse of canonical CSV");
        assert_eq!(again.dataset, ingest.dataset);
    }
});
