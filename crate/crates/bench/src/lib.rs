//! Shared inputs for the criterion benches.

use mgstab_core::netmodel::Scenario;
use mgstab_core::presets;
use mgstab_core::sweep::SweepSpec;

/// Plug-in scenario shortened to end shortly after the CPL connects.
pub fn short_plug_in(p_l: f64) -> Scenario {
    let mut s = presets::plug_in(p_l);
    s.t_end = 30.0;
    s
}

/// Criteria-only region sweep of `n × n` cells.
pub fn criteria_sweep(n: usize) -> SweepSpec {
    let mut spec = presets::region_sweep(n);
    spec.sim_window = None;
    spec
}
