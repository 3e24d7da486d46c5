#![no_main]

use libfuzzer_sys::fuzz_target;
use vvlc_core::baselines::{eval_fit, FitSummary};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(summary) = FitSummary::from_json(text) {
        if let Ok(model) = summary.model() {
            let _ = eval_fit(&model, 10.0);
        }
    }
});
