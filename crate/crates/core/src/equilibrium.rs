//! Steady states of the microgrid.
//!
//! At steady state each branch reduces to a Thevenin source `v_ref` behind
//! `R_eq = R_p R_q / (R_p + R_q) + R_t` (or `R_pd + R_t` for droop). The PoL
//! balance then reads `a V² - b V + P_L = 0` with `a = 1/R_L + Σ 1/R_eq` and
//! `b = Σ v_ref / R_eq`.

use nalgebra::DVector;
use serde::Serialize;

use crate::dynamics::{jacobian_flat, rhs_flat, Layout, State};
use crate::error::{Error, Result};
use crate::netmodel::GridSpec;

/// Root of the load quadratic an equilibrium belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RootBranch {
    Upper,
    Lower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub state: State,
    pub v_l: f64,
    pub branch_tag: RootBranch,
    /// Per-unit rate norm, see [`residual`].
    pub residual: f64,
    /// `v_l >= v_min`: the CPL sits on its constant-power segment.
    pub on_hyperbola: bool,
}

/// Relative discriminant below which the two roots are reported as one.
pub const SADDLE_NODE_TOL: f64 = 1e-10;

/// Coefficients `(a, b)` of the load balance `a V² - b V + P_L = 0`.
pub fn load_quadratic(grid: &GridSpec) -> (f64, f64) {
    let mut a = 1.0 / grid.load.r_l;
    let mut b = 0.0;
    for br in &grid.branches {
        let r = br.thevenin_resistance();
        a += 1.0 / r;
        b += br.v_ref / r;
    }
    (a, b)
}

/// Largest CPL power for which the load balance has a real root.
pub fn max_deliverable_power(grid: &GridSpec) -> f64 {
    let (a, b) = load_quadratic(grid);
    b * b / (4.0 * a)
}

/// Derivative of `a V² - b V + P_L` at `v`; positive on the upper root, negative on the lower.
pub fn load_balance_slope(grid: &GridSpec, v: f64) -> f64 {
    let (a, b) = load_quadratic(grid);
    2.0 * a * v - b
}

/// Full state consistent with a PoL voltage at steady state.
pub fn state_for_voltage(grid: &GridSpec, v_l: f64) -> State {
    let mut s = State::zeros(grid);
    let mut q = 0;
    for (k, br) in grid.branches.iter().enumerate() {
        let i_t = (br.v_ref - v_l) / br.thevenin_resistance();
        let v_c = v_l + br.r_t * i_t;
        s.i_t[k] = i_t;
        s.v_c[k] = v_c;
        if let crate::netmodel::Controller::Proposed { r_q, .. } = br.controller {
            s.i_q[q] = (br.v_ref - v_c) / r_q;
            q += 1;
        }
    }
    s.v_l = v_l;
    s
}

/// `‖rhs‖∞` with component `k` divided by `max(1, |x_k|)`, CPL connected.
pub fn residual(grid: &GridSpec, state: &State) -> f64 {
    residual_with(grid, state, true)
}

pub fn residual_with(grid: &GridSpec, state: &State, cpl_active: bool) -> f64 {
    let lay = Layout::new(grid);
    let x = state.to_vec();
    let mut dx = vec![0.0; x.len()];
    rhs_flat(grid, &lay, cpl_active, &x, &mut dx);
    dx.iter().zip(&x).map(|(d, v)| (d / v.abs().max(1.0)).abs()).fold(0.0, f64::max)
}

fn polish(grid: &GridSpec, state: State, active: bool) -> Result<(State, f64)> {
    let lay = Layout::new(grid);
    let mut x = state.to_vec();
    let mut best = residual_with(grid, &state, active);
    let mut dx = vec![0.0; x.len()];
    for _ in 0..8 {
        if best < 1e-13 {
            break;
        }
        rhs_flat(grid, &lay, active, &x, &mut dx);
        let j = jacobian_flat(grid, &lay, active, &x);
        let Some(step) = j.lu().solve(&DVector::from_column_slice(&dx)) else { break };
        let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - s).collect();
        let r = residual_with(grid, &State::from_slice(grid, &cand), active);
        if r < best {
            best = r;
            x = cand;
        } else {
            break;
        }
    }
    if best < 1e-9 {
        Ok((State::from_slice(grid, &x), best))
    } else {
        Err(Error::Numerical(format!("equilibrium residual {best:e} after Newton polish")))
    }
}

fn make(grid: &GridSpec, v: f64, tag: RootBranch, active: bool) -> Result<Equilibrium> {
    let (state, residual) = polish(grid, state_for_voltage(grid, v), active)?;
    Ok(Equilibrium {
        v_l: state.v_l,
        state,
        branch_tag: tag,
        residual,
        on_hyperbola: v >= grid.cpl.v_min,
    })
}

/// Every equilibrium of the model, including constant-current points with `v_l <= 0`.
///
/// Unlike [`solve_equilibria`] this never fails for lack of a hyperbolic root:
/// when the demand exceeds [`max_deliverable_power`] the result is just the
/// constant-current collapse point.
pub fn all_equilibria(grid: &GridSpec, cpl_active: bool) -> Result<Vec<Equilibrium>> {
    let (a, b) = load_quadratic(grid);
    let cpl = &grid.cpl;
    if !cpl_active || cpl.p_l == 0.0 {
        return Ok(vec![make(grid, b / a, RootBranch::Upper, cpl_active)?]);
    }
    let mut out = Vec::with_capacity(2);
    let disc = b * b - 4.0 * a * cpl.p_l;
    if disc.abs() <= SADDLE_NODE_TOL * b * b {
        let v = b / (2.0 * a);
        if v >= cpl.v_min {
            out.push(make(grid, v, RootBranch::Upper, true)?);
        }
    } else if disc > 0.0 {
        let q = 0.5 * (b + disc.sqrt());
        for (v, tag) in [(q / a, RootBranch::Upper), (cpl.p_l / q, RootBranch::Lower)] {
            if v >= cpl.v_min {
                out.push(make(grid, v, tag, true)?);
            }
        }
    }
    // Constant-current segment: a V - b + I_max = 0, valid only below v_min.
    let v_cc = (b - cpl.i_max()) / a;
    if v_cc < cpl.v_min {
        out.push(make(grid, v_cc, RootBranch::Lower, true)?);
    }
    Ok(out)
}

/// Operating equilibria (`v_l > 0`), Upper first.
pub fn solve_equilibria(grid: &GridSpec, cpl_active: bool) -> Result<Vec<Equilibrium>> {
    if cpl_active && grid.cpl.p_l > 0.0 {
        let (a, b) = load_quadratic(grid);
        let disc = b * b - 4.0 * a * grid.cpl.p_l;
        if disc < -SADDLE_NODE_TOL * b * b {
            return Err(Error::NoEquilibrium {
                p_l: grid.cpl.p_l,
                p_max: max_deliverable_power(grid),
            });
        }
    }
    Ok(all_equilibria(grid, cpl_active)?.into_iter().filter(|e| e.v_l > 0.0).collect())
}

/// Upper operating equilibrium with the CPL connected, if one exists.
pub fn upper_equilibrium(grid: &GridSpec) -> Result<Equilibrium> {
    solve_equilibria(grid, true)?
        .into_iter()
        .find(|e| e.branch_tag == RootBranch::Upper)
        .ok_or(Error::NoEquilibrium {
            p_l: grid.cpl.p_l,
            p_max: max_deliverable_power(grid),
        })
}
