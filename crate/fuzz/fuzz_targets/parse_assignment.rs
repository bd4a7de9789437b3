#![no_main]

use libfuzzer_sys::fuzz_target;
use tnsched::format::parse_assignment;

fuzz_target!(|data: &str| {
    let _ = parse_assignment(data);
});
