#![no_main]

use libfuzzer_sys::fuzz_target;
use vvlc_core::harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        let _ = cfg.split_spec();
        let _ = cfg.model_spec();
        if let Some(grid) = &cfg.grid {
            let _ = grid.expand(&cfg.model_spec()).len();
        }
    }
});
