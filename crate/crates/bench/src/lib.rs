//! Input builders shared by the benchmarks.

use margin_gate::{random_case, FrequencyResponse, GridSpec};

/// `[z_ppm_existing, z_net_old, z_ppm_new]` for a seeded random case on an
/// `n`-point grid over 1 Hz – 10 kHz.
pub fn case_curves(seed: u64, n: usize) -> [FrequencyResponse; 3] {
    let mut fx = random_case(seed, 3, (1.0, 1e4)).expect("random case");
    fx.grid = GridSpec::LogSpaced { f_min_hz: 1.0, f_max_hz: 1e4, points: n };
    fx.evaluate().expect("evaluate")
}
