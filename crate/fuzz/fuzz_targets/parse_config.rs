#![no_main]

use libfuzzer_sys::fuzz_target;
use sdnmt::model::{ModelConfig, ModelParams, ModelWeights};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ModelConfig::from_json(text) {
        let _ = cfg.kind();
        let shapes = ModelWeights::shapes(&cfg);
        let total: usize = shapes.named().iter().map(|(_, s)| s[0].saturating_mul(s[1])).sum();
        if total < 1 << 16 {
            let _ = ModelParams::init(&cfg);
        }
    }
});
