#![no_main]

use libfuzzer_sys::fuzz_target;
use phfcox::pipeline::{parse_config, PipelineConfig};
use phfcox::simulate::SimConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config::<PipelineConfig>(text, "pipeline config") {
        let _ = cfg.tuning_config().validate();
    }
    if let Ok(cfg) = parse_config::<SimConfig>(text, "simulation config") {
        let _ = cfg.validate();
    }
});
