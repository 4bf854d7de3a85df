//! Proposed controller versus its droop twin on the same scenario.

use serde::Serialize;

use crate::dynamics::{classify_run, simulate, window_overshoot, TimeSeries, TrajectoryMetrics, WindowOvershoot};
use crate::equilibrium::{solve_equilibria, upper_equilibrium};
use crate::error::{Error, Result};
use crate::netmodel::{GridSpec, Scenario};

/// `|Δ steady value|` below which the two controllers count as settling to the same voltage.
pub const STEADY_MATCH_TOL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerRun {
    pub metrics: TrajectoryMetrics,
    /// Steady state before plug-in (CPL disconnected).
    pub pre_plug_reference: f64,
    /// Start-up transient `[0, plug-in)` against `pre_plug_reference`; `None` if the CPL is connected at t = 0.
    pub startup: Option<WindowOvershoot>,
    /// Post-plug-in transient against the upper equilibrium.
    pub post_plug: Option<WindowOvershoot>,
    pub post_plug_reference: Option<f64>,
    #[serde(skip)]
    pub series: TimeSeries,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Claims {
    pub startup_overshoot_lower: bool,
    pub post_plug_overshoot_lower: bool,
    pub same_steady_state: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerComparison {
    pub proposed: ControllerRun,
    pub droop: ControllerRun,
    pub steady_difference: f64,
    pub claims: Claims,
}

fn run(scenario: &Scenario) -> Result<ControllerRun> {
    let grid = &scenario.grid;
    let series = simulate(scenario)?;
    let metrics = classify_run(&series, grid)?;
    let plug = grid.cpl.plug_in_time;
    let pre_plug_reference = solve_equilibria(grid, false)?[0].v_l;
    let startup = if plug > 0.0 {
        Some(window_overshoot(&series, 0.0, plug, pre_plug_reference)?)
    } else {
        None
    };
    let post_plug_reference = upper_equilibrium(grid).ok().map(|e| e.v_l);
    let post_plug = match post_plug_reference {
        Some(r) => match window_overshoot(&series, plug, f64::INFINITY, r) {
            Ok(w) => Some(w),
            Err(Error::EmptySeries) => None,
            Err(e) => return Err(e),
        },
        None => None,
    };
    Ok(ControllerRun {
        metrics,
        pre_plug_reference,
        startup,
        post_plug,
        post_plug_reference,
        series,
    })
}

fn lower(a: Option<WindowOvershoot>, b: Option<WindowOvershoot>) -> bool {
    matches!((a, b), (Some(a), Some(b)) if a.overshoot < b.overshoot)
}

/// Simulates `scenario` (all branches proposed) and its droop twin in parallel.
pub fn compare_controllers(scenario: &Scenario) -> Result<ControllerComparison> {
    if !scenario.grid.all_proposed() {
        return Err(Error::UnsupportedController(
            "comparison needs a grid of proposed-controller branches".into(),
        ));
    }
    let twin = Scenario {
        grid: GridSpec::droop_twin(&scenario.grid)?,
        ..scenario.clone()
    };
    let (p, d) = rayon::join(|| run(scenario), || run(&twin));
    let (proposed, droop) = (p?, d?);
    let steady_difference = (proposed.metrics.steady_value - droop.metrics.steady_value).abs();
    let claims = Claims {
        startup_overshoot_lower: lower(proposed.startup, droop.startup),
        post_plug_overshoot_lower: lower(proposed.post_plug, droop.post_plug),
        same_steady_state: steady_difference < STEADY_MATCH_TOL,
    };
    Ok(ControllerComparison {
        proposed,
        droop,
        steady_difference,
        claims,
    })
}
