#![no_main]

use libfuzzer_sys::fuzz_target;
use wald_liability::scenario::Scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = Scenario::from_json(text) {
        // Accepted scenarios must yield a usable grid or a typed error.
        let _ = s.solve_grid(None);
        let _ = s.solver_config(None);
    }
});
