#![no_main]

use libfuzzer_sys::fuzz_target;
use tnsched::format::parse_instance_bytes;
use tnsched::{brute_force, check_rules, solve_full, Error, NormalizedInstance};

fuzz_target!(|data: &[u8]| {
    let Ok(instance) = parse_instance_bytes(data) else { return };
    if instance.state_count() > 4096 || instance.rules().len() > 12 {
        return;
    }
    let oracle = brute_force(&instance).unwrap();
    match solve_full(&NormalizedInstance::prepare(&instance), 10.0) {
        Ok(x) => {
            assert!(check_rules(&x, instance.rules()).is_empty());
            assert!(oracle.optimum.is_some());
        }
        Err(Error::Infeasible(_)) => assert!(oracle.optimum.is_none()),
        Err(Error::SizeGuard { .. } | Error::MemoryCap { .. }) => {}
        Err(e) => panic!("{e}"),
    }
});
