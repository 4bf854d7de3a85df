//! Random grids shared by the property and acceptance suites.
#![allow(dead_code)]

use mgstab_core::criteria::large_signal_verdict;
use mgstab_core::dynamics::State;
use mgstab_core::equilibrium::load_quadratic;
use mgstab_core::netmodel::{BranchParams, CplParams, GridSpec, LoadParams};
use mgstab_core::potential::assemble_forms;
use mgstab_core::StabilityReport;
use rand::Rng;

pub fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

/// 1–3 proposed branches with inductances scaled to the RC time constants,
/// so that σ_max < 1 is common but not guaranteed. `P_L` is up to 90 % of
/// the deliverable maximum; half the draws put `v_min` between the two roots
/// (unique operating point), half below the lower root.
pub fn random_grid(rng: &mut impl Rng) -> GridSpec {
    let n = rng.random_range(1..=3usize);
    let c_l = log_uniform(rng, 0.5, 5.0);
    let branches: Vec<BranchParams> = (0..n)
        .map(|_| {
            let v_ref = rng.random_range(50.0..150.0);
            let r_q = log_uniform(rng, 0.5, 2.0);
            let r_p = r_q * log_uniform(rng, 0.5, 5.0);
            let r_t = log_uniform(rng, 0.5, 3.0);
            let c_b = log_uniform(rng, 0.5, 5.0);
            let l_q = r_q * r_q * c_b * log_uniform(rng, 0.02, 0.5);
            let l_t = r_t * r_t * c_b.min(c_l / n as f64) * log_uniform(rng, 0.02, 0.5);
            BranchParams::proposed(v_ref, r_p, r_q, l_q, r_t, l_t, c_b)
        })
        .collect();
    let load = LoadParams {
        c_l,
        r_l: log_uniform(rng, 1.0, 20.0),
    };
    let mut grid = GridSpec::new(branches, load, CplParams::new(0.0, 1.0, 0.0)).unwrap();
    let (a, b) = load_quadratic(&grid);
    let p_l = rng.random_range(0.0..0.9) * b * b / (4.0 * a);
    let disc = (b * b - 4.0 * a * p_l).sqrt();
    let (lower, upper) = ((b - disc) / (2.0 * a), (b + disc) / (2.0 * a));
    let v_min = if rng.random_bool(0.5) {
        rng.random_range(lower..upper)
    } else {
        rng.random_range(0.05..0.95) * lower
    };
    grid.cpl = CplParams::new(p_l, v_min, 0.0);
    grid.validate().unwrap();
    grid
}

/// Draws until a grid passes the large-signal criteria.
pub fn random_stable_grid(rng: &mut impl Rng) -> (GridSpec, StabilityReport) {
    loop {
        let g = random_grid(rng);
        if assemble_forms(&g).unwrap().sigma_max() >= 1.0 {
            continue;
        }
        let r = large_signal_verdict(&g).unwrap();
        if r.large_signal == Some(true) {
            return (g, r);
        }
    }
}

/// `x_e ⊙ (1 + U(-½, ½))` componentwise.
pub fn perturb(rng: &mut impl Rng, grid: &GridSpec, x: &State) -> State {
    let v: Vec<f64> = x.to_vec().iter().map(|&c| c * (1.0 + rng.random_range(-0.5..0.5))).collect();
    State::from_slice(grid, &v)
}

/// Random state with currents in ±50 A and voltages in (1, 150) V.
pub fn random_state(rng: &mut impl Rng, grid: &GridSpec) -> State {
    let mut s = State::zeros(grid);
    for x in s.i_q.iter_mut().chain(s.i_t.iter_mut()) {
        *x = rng.random_range(-50.0..50.0);
    }
    for x in s.v_c.iter_mut() {
        *x = rng.random_range(1.0..150.0);
    }
    s.v_l = rng.random_range(1.0..150.0);
    s
}
