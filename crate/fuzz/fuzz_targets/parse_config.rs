#![no_main]

use libfuzzer_sys::fuzz_target;
use tnsched::format::parse_config;

fuzz_target!(|data: &str| {
    let Ok(cfg) = parse_config(data) else { return };
    if let Some(tau) = cfg.tau {
        assert!(tau.is_finite() && tau > 0.0);
    }
    if let Some(r) = cfg.survival_ratio {
        assert!(r > 0.0 && r <= 1.0);
    }
});
