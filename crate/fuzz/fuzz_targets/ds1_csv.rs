#![no_main]

use libfuzzer_sys::fuzz_target;
use vvlc_core::dataset::{parse_cfr_csv, write_cfr_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(ingest) = parse_cfr_csv(data) {
        let text = write_cfr_csv(&ingest.dataset);
        let again = parse_cfr_csv(text.as_bytes()).expect("re-parse of canonical CSV");
        assert_eq!(again.dataset, ingest.dataset);
    }
});
