//! Reference scenarios used throughout the tests, benches and `gen-examples`.
//!
//! All use `v_min = 10 V`, below every operating equilibrium they produce.

use crate::netmodel::{BranchParams, CplParams, GridSpec, LoadParams, Scenario};
use crate::sweep::{Axis, ParamPath, SimWindow, SweepMode, SweepSpec};

pub const V_MIN: f64 = 10.0;

fn build(branches: Vec<BranchParams>, load: LoadParams, cpl: CplParams, t_end: f64, label: String) -> Scenario {
    let grid = GridSpec::new(branches, load, cpl).expect("preset parameters are valid");
    Scenario::new(grid, t_end).expect("preset scenario is valid").with_label(&label)
}

/// Two identical 100 V branches with heavy line resistance into a 2 Ω load;
/// the CPL connects at 20 s. Deliverable maximum ≈ 808.75 W.
pub fn plug_in(p_l: f64) -> Scenario {
    let b = BranchParams::proposed(100.0, 0.6, 0.9, 1.0, 3.0, 0.5, 5.0);
    build(
        vec![b, b],
        LoadParams { c_l: 1.0, r_l: 2.0 },
        CplParams::new(p_l, V_MIN, 20.0),
        80.0,
        format!("plug-in, P_L = {p_l} W"),
    )
}

/// Small bus capacitors and fast current loops, 500 W CPL at 3 s.
pub fn fast_bus() -> Scenario {
    let b = BranchParams::proposed(100.0, 0.6, 0.9, 0.01, 4.0, 0.5, 0.1);
    build(
        vec![b, b],
        LoadParams { c_l: 0.1, r_l: 20.0 },
        CplParams::new(500.0, V_MIN, 3.0),
        15.0,
        "fast bus, P_L = 500 W".into(),
    )
}

/// Proposed-controller grid whose droop twin has `r_pd = 1 Ω`; CPL at 5 s.
pub fn comparison(p_l: f64) -> Scenario {
    let b = BranchParams::proposed(100.0, 5.0, 1.25, 2.0, 0.01, 0.5, 0.01);
    build(
        vec![b, b],
        LoadParams { c_l: 0.05, r_l: 10.0 },
        CplParams::new(p_l, V_MIN, 5.0),
        15.0,
        format!("controller comparison, P_L = {p_l} W"),
    )
}

/// `(P_L, C_L)` plane on the [`comparison`] grid, simulating only near
/// `(1500 W, 0.07 F)`.
pub fn region_sweep(n: usize) -> SweepSpec {
    let mut base = comparison(1500.0);
    base.t_end = 25.0;
    base.label = Some("(P_L, C_L) region".into());
    SweepSpec {
        base,
        axis1: Axis {
            path: ParamPath::CplPower,
            min: 100.0,
            max: 2000.0,
            n,
        },
        axis2: Axis {
            path: ParamPath::LoadCapacitance,
            min: 0.01,
            max: 0.2,
            n,
        },
        mode: SweepMode::Both,
        sim_window: Some(SimWindow {
            center: [1500.0, 0.07],
            radius: 0.1,
        }),
    }
}

/// Every reference scenario with a file stem.
pub fn all() -> Vec<(String, Scenario)> {
    let mut v: Vec<(String, Scenario)> = [800.0, 805.0, 810.0, 825.0]
        .iter()
        .map(|&p| (format!("plug_in_{p}"), plug_in(p)))
        .collect();
    v.push(("fast_bus_500".into(), fast_bus()));
    v.push(("comparison_530".into(), comparison(530.0)));
    v
}
