#![no_main]

use libfuzzer_sys::fuzz_target;
use vvlc_core::harness::SavedModel;
use vvlc_core::model::Regressor;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(saved) = SavedModel::from_json(text) {
        let x = vec![0.5; saved.model.n_inputs()];
        let _ = saved.model.predict(&x);
        let _ = saved.model.predict(&[]);
    }
});
