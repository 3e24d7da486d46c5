#![no_main]

use libfuzzer_sys::fuzz_target;
use vvlc_core::synthgen::{ground_truth_pl, GeneratorConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = GeneratorConfig::from_json(text) {
        let _ = ground_truth_pl(&cfg, 10.0, 200.0, 0.0, true, false);
    }
});
