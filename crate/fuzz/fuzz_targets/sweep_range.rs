#![no_main]

use libfuzzer_sys::fuzz_target;
use wald_liability::scenario::{SweepRange, MAX_SWEEP_POINTS};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = SweepRange::parse(text) {
        let values = r.values();
        assert!(!values.is_empty() && values.len() <= MAX_SWEEP_POINTS);
        assert!(values.iter().all(|v| v.is_finite()));
    }
});
