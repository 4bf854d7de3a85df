use serde::Serialize;

use super::{Termination, TimeSeries};
use crate::equilibrium::{load_quadratic, solve_equilibria, Equilibrium};
use crate::error::{Error, Result};
use crate::netmodel::GridSpec;

/// Tolerance band around the target, as a fraction of `|target|`.
pub const DEFAULT_BAND_FRAC: f64 = 0.01;
/// Final fraction of the post-plug-in window that must stay inside the band.
pub const DEFAULT_HOLD_FRAC: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Stable,
    Oscillating,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryMetrics {
    /// Last sampled `v_l`.
    pub steady_value: f64,
    /// Largest `|v_l - steady_value|` after plug-in.
    pub overshoot: f64,
    /// First time after which `v_l` stays in the band; `None` if it never does.
    pub settling_time: Option<f64>,
    pub verdict: Verdict,
}

/// Classifies the post-plug-in behaviour of `v_l` against an equilibrium.
pub fn classify(series: &TimeSeries, target: &Equilibrium, band_frac: f64, hold_frac: f64) -> Result<TrajectoryMetrics> {
    classify_voltage(series, target.v_l, band_frac, hold_frac)
}

/// As [`classify`], against a bare target voltage (used when no equilibrium exists).
pub fn classify_voltage(series: &TimeSeries, target: f64, band_frac: f64, hold_frac: f64) -> Result<TrajectoryMetrics> {
    if series.times.is_empty() {
        return Err(Error::EmptySeries);
    }
    for (name, f) in [("band_frac", band_frac), ("hold_frac", hold_frac)] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::validation(name, format!("must lie in (0, 1) (got {f})")));
        }
    }
    let plug = series.plug_in_time;
    let band = band_frac * target.abs();
    let v: Vec<f64> = series.v_l().collect();
    let steady_value = *v.last().expect("nonempty");

    let after: Vec<usize> = (0..v.len()).filter(|&k| series.times[k] >= plug).collect();
    let overshoot = after.iter().map(|&k| (v[k] - steady_value).abs()).fold(0.0, f64::max);

    let diverged = series.termination == Termination::Diverged
        || v.iter().any(|x| !x.is_finite() || x.abs() > 100.0 * target.abs());

    let outside = |k: usize| (v[k] - target).abs() > band;
    let settling_time = match after.iter().rev().find(|&&k| outside(k)) {
        None => Some(plug),
        Some(&k) if k + 1 < v.len() => Some(series.times[k + 1]),
        Some(_) => None,
    };

    let hold_start = series.t_end - hold_frac * (series.t_end - plug);
    let reached_end = series.times.last().is_some_and(|&t| t >= series.t_end);
    let held = reached_end && after.iter().filter(|&&k| series.times[k] >= hold_start).all(|&k| !outside(k));

    let verdict = if diverged {
        Verdict::Diverged
    } else if held {
        Verdict::Stable
    } else {
        Verdict::Oscillating
    };
    Ok(TrajectoryMetrics {
        steady_value,
        overshoot,
        settling_time,
        verdict,
    })
}

/// Voltage a run on `grid` should settle to once the CPL is connected: the
/// highest operating equilibrium, or the saddle-node voltage `b / 2a` when
/// the demand exceeds what the sources can deliver.
pub fn settle_target(grid: &GridSpec) -> f64 {
    match solve_equilibria(grid, true) {
        Ok(eqs) if !eqs.is_empty() => eqs[0].v_l,
        _ => {
            let (a, b) = load_quadratic(grid);
            b / (2.0 * a)
        }
    }
}

/// [`classify_voltage`] against [`settle_target`] with the default band.
pub fn classify_run(series: &TimeSeries, grid: &GridSpec) -> Result<TrajectoryMetrics> {
    classify_voltage(series, settle_target(grid), DEFAULT_BAND_FRAC, DEFAULT_HOLD_FRAC)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowOvershoot {
    /// Overshoot beyond the reference after the largest excursion, on the opposite side.
    pub overshoot: f64,
    /// Largest `|v_l - reference|` in the window.
    pub max_deviation: f64,
}

/// Overshoot of `v_l` in `[t0, t1)` relative to `reference`.
///
/// The sample furthest from `reference` marks the initial disturbance (the
/// start from 0 V, or the dip at plug-in). The overshoot is the largest
/// excursion past `reference` in the opposite direction after that sample.
pub fn window_overshoot(series: &TimeSeries, t0: f64, t1: f64, reference: f64) -> Result<WindowOvershoot> {
    let idx: Vec<usize> = (0..series.times.len())
        .filter(|&k| series.times[k] >= t0 && series.times[k] < t1)
        .collect();
    if idx.is_empty() {
        return Err(Error::EmptySeries);
    }
    let dev = |k: usize| series.states[k].v_l - reference;
    let peak = *idx
        .iter()
        .max_by(|&&a, &&b| dev(a).abs().total_cmp(&dev(b).abs()))
        .expect("nonempty");
    let side = dev(peak).signum();
    let overshoot = idx
        .iter()
        .filter(|&&k| k > peak)
        .map(|&k| -side * dev(k))
        .fold(0.0, f64::max);
    Ok(WindowOvershoot {
        overshoot,
        max_deviation: dev(peak).abs(),
    })
}
