//! Averaged nonlinear dynamics of the microgrid, time-domain simulation and
//! trajectory metrics.

mod integrator;
mod metrics;

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::netmodel::{cpl_current, Controller, GridSpec, InitialState, Scenario};

pub use integrator::{simulate, simulate_with, IntegratorOptions};
pub use metrics::{
    classify, classify_run, classify_voltage, settle_target, window_overshoot, TrajectoryMetrics, Verdict,
    WindowOvershoot, DEFAULT_BAND_FRAC, DEFAULT_HOLD_FRAC,
};

/// Dynamic state `[i_q (proposed branches only), i_t, v_c, v_l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub i_q: Vec<f64>,
    pub i_t: Vec<f64>,
    pub v_c: Vec<f64>,
    pub v_l: f64,
}

impl State {
    pub fn zeros(grid: &GridSpec) -> Self {
        let n = grid.n_branches();
        State {
            i_q: vec![0.0; n_proposed(grid)],
            i_t: vec![0.0; n],
            v_c: vec![0.0; n],
            v_l: 0.0,
        }
    }

    pub fn dim(grid: &GridSpec) -> usize {
        n_proposed(grid) + 2 * grid.n_branches() + 1
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.i_q.len() + self.i_t.len() + self.v_c.len() + 1);
        x.extend_from_slice(&self.i_q);
        x.extend_from_slice(&self.i_t);
        x.extend_from_slice(&self.v_c);
        x.push(self.v_l);
        x
    }

    pub fn from_slice(grid: &GridSpec, x: &[f64]) -> Self {
        let (nq, n) = (n_proposed(grid), grid.n_branches());
        assert_eq!(x.len(), nq + 2 * n + 1, "state vector has wrong dimension");
        State {
            i_q: x[..nq].to_vec(),
            i_t: x[nq..nq + n].to_vec(),
            v_c: x[nq + n..nq + 2 * n].to_vec(),
            v_l: x[nq + 2 * n],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.i_q.iter().chain(&self.i_t).chain(&self.v_c).all(|v| v.is_finite()) && self.v_l.is_finite()
    }

    pub(crate) fn check_layout(&self, grid: &GridSpec) -> Result<(), String> {
        let (nq, n) = (n_proposed(grid), grid.n_branches());
        if self.i_q.len() != nq || self.i_t.len() != n || self.v_c.len() != n {
            return Err(format!(
                "expected {nq} i_q, {n} i_t and {n} v_c entries, got {}, {}, {}",
                self.i_q.len(),
                self.i_t.len(),
                self.v_c.len()
            ));
        }
        if !self.is_finite() {
            return Err("entries must be finite".into());
        }
        Ok(())
    }
}

pub(crate) fn n_proposed(grid: &GridSpec) -> usize {
    grid.branches.iter().filter(|b| b.is_proposed()).count()
}

/// Index bookkeeping for the flat state vector.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    /// `iq_slot[k]` is the flat index of branch `k`'s `i_q`, if it has one.
    pub iq_slot: Vec<Option<usize>>,
    pub it0: usize,
    pub vc0: usize,
    pub vl: usize,
}

impl Layout {
    pub fn new(grid: &GridSpec) -> Self {
        let n = grid.n_branches();
        let mut next = 0;
        let iq_slot = grid
            .branches
            .iter()
            .map(|b| {
                b.is_proposed().then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        Layout {
            iq_slot,
            it0: next,
            vc0: next + n,
            vl: next + 2 * n,
        }
    }

    pub fn dim(&self) -> usize {
        self.vl + 1
    }
}

pub(crate) fn rhs_flat(grid: &GridSpec, lay: &Layout, active: bool, x: &[f64], dx: &mut [f64]) {
    let v_l = x[lay.vl];
    let mut sum_it = 0.0;
    for (k, b) in grid.branches.iter().enumerate() {
        let i_t = x[lay.it0 + k];
        let v_c = x[lay.vc0 + k];
        sum_it += i_t;
        dx[lay.it0 + k] = (v_c - v_l - b.r_t * i_t) / b.l_t;
        match b.controller {
            Controller::Proposed { r_p, r_q, l_q } => {
                let s = lay.iq_slot[k].expect("proposed branch has an i_q slot");
                let i_q = x[s];
                dx[s] = (-i_q * r_q + b.v_ref - v_c) / l_q;
                dx[lay.vc0 + k] = ((b.v_ref - v_c) / r_p + i_q - i_t) / b.c_b;
            }
            Controller::Droop { r_pd } => {
                dx[lay.vc0 + k] = ((b.v_ref - v_c) / r_pd - i_t) / b.c_b;
            }
        }
    }
    let i_cpl = cpl_current(&grid.cpl, v_l, active);
    dx[lay.vl] = (sum_it - i_cpl - v_l / grid.load.r_l) / grid.load.c_l;
}

pub(crate) fn jacobian_flat(grid: &GridSpec, lay: &Layout, active: bool, x: &[f64]) -> DMatrix<f64> {
    let d = lay.dim();
    let mut j = DMatrix::zeros(d, d);
    let (c_l, vl) = (grid.load.c_l, lay.vl);
    for (k, b) in grid.branches.iter().enumerate() {
        let (it, vc) = (lay.it0 + k, lay.vc0 + k);
        j[(it, vc)] = 1.0 / b.l_t;
        j[(it, vl)] = -1.0 / b.l_t;
        j[(it, it)] = -b.r_t / b.l_t;
        j[(vc, it)] = -1.0 / b.c_b;
        match b.controller {
            Controller::Proposed { r_p, r_q, l_q } => {
                let s = lay.iq_slot[k].expect("proposed branch has an i_q slot");
                j[(s, s)] = -r_q / l_q;
                j[(s, vc)] = -1.0 / l_q;
                j[(vc, s)] = 1.0 / b.c_b;
                j[(vc, vc)] = -1.0 / (r_p * b.c_b);
            }
            Controller::Droop { r_pd } => j[(vc, vc)] = -1.0 / (r_pd * b.c_b),
        }
        j[(vl, it)] = 1.0 / c_l;
    }
    let v_l = x[vl];
    let cpl = &grid.cpl;
    // Only the hyperbolic segment depends on v_l.
    let dicpl = if active && v_l > cpl.v_min { -cpl.p_l / (v_l * v_l) } else { 0.0 };
    j[(vl, vl)] = (-1.0 / grid.load.r_l - dicpl) / c_l;
    j
}

/// Time derivative of the state at time `t`; the CPL is connected once `t >= plug_in_time`.
pub fn rhs(grid: &GridSpec, state: &State, t: f64) -> State {
    let lay = Layout::new(grid);
    let x = state.to_vec();
    let mut dx = vec![0.0; x.len()];
    rhs_flat(grid, &lay, t >= grid.cpl.plug_in_time, &x, &mut dx);
    State::from_slice(grid, &dx)
}

/// Analytic Jacobian of [`rhs`] with the CPL connected or not.
pub fn jacobian_at(grid: &GridSpec, state: &State, cpl_active: bool) -> DMatrix<f64> {
    jacobian_flat(grid, &Layout::new(grid), cpl_active, &state.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum EventKind {
    PlugIn,
    VminCross,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Completed,
    /// Stopped because the state norm exceeded the divergence threshold.
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub events: Vec<Event>,
    pub plug_in_time: f64,
    pub t_end: f64,
    pub termination: Termination,
}

impl TimeSeries {
    pub fn v_l(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.v_l)
    }

    pub fn last(&self) -> Option<&State> {
        self.states.last()
    }

    /// CSV with one row per sample and `# event,<t>,<kind>` comment lines at the end.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let first = self.states.first();
        let nq = first.map_or(0, |s| s.i_q.len());
        let n = first.map_or(0, |s| s.i_t.len());
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=nq).map(|k| format!("i_q_{k}")));
        cols.extend((1..=n).map(|k| format!("i_t_{k}")));
        cols.extend((1..=n).map(|k| format!("v_c_{k}")));
        cols.push("v_l".into());
        out.push_str(&cols.join(","));
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            out.push_str(&sig15(*t));
            for v in s.to_vec() {
                out.push(',');
                out.push_str(&sig15(v));
            }
            out.push('\n');
        }
        for e in &self.events {
            let _ = writeln!(out, "# event,{},{:?}", sig15(e.t), e.kind);
        }
        out
    }
}

/// 15 significant digits, shortest exact rendering when it is shorter.
pub(crate) fn sig15(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.14e}");
    let v: f64 = s.parse().unwrap_or(x);
    format!("{v}")
}

pub(crate) fn initial_vector(scenario: &Scenario) -> Vec<f64> {
    match &scenario.initial_state {
        InitialState::Zero => vec![0.0; State::dim(&scenario.grid)],
        InitialState::Given(s) => s.to_vec(),
    }
}
