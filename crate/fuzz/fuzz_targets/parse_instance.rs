#![no_main]

use libfuzzer_sys::fuzz_target;
use tnsched::format::{instance_to_json, parse_instance, parse_instance_bytes};

fuzz_target!(|data: &[u8]| {
    // Accepted instances must survive a write/read cycle unchanged.
    if let Ok(instance) = parse_instance_bytes(data) {
        let text = instance_to_json(&instance);
        assert_eq!(parse_instance(&text).unwrap(), instance);
    }
});
