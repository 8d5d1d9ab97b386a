#![no_main]
use dmnls::config::{RawConfig, SimConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(raw) = RawConfig::parse(text) else { return };
    let _ = raw.sweep_cells();
    if let Ok(cfg) = SimConfig::from_raw(&raw) {
        let again = RawConfig::parse(&cfg.to_config_text()).unwrap();
        assert_eq!(SimConfig::from_raw(&again).unwrap(), cfg);
    }
});
