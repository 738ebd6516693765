#![no_main]

use libfuzzer_sys::fuzz_target;
use wald_liability::scenario::parse_tariff;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let cap = 1.2;
    if let Ok(t) = parse_tariff(text, cap) {
        for x in [-10.0, -1.0, 0.0, 0.5, 10.0] {
            assert!(t.eval(x) <= cap);
        }
    }
});
