#![no_main]

use libfuzzer_sys::fuzz_target;
use vvlc_core::harness::parse_residual_cdf;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_residual_cdf(data) {
        assert!(rows.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
        assert_eq!(rows.last().map(|r| r.1), Some(1.0));
    }
});
