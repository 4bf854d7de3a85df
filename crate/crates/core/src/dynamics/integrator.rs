//! Dormand–Prince 5(4) with PI step-size control.
//!
//! The CPL plug-in instant is always a step boundary. While the CPL is
//! connected, every crossing of `v_l` through `v_min` is bracketed by
//! re-stepping with bisected step lengths until the bracket is shorter than
//! `event_tol`; the step is then cut at the crossing and the controller
//! restarts from there.

use super::{initial_vector, rhs_flat, Event, EventKind, Layout, State, Termination, TimeSeries};
use crate::error::{Error, Result};
use crate::netmodel::{GridSpec, Scenario};

#[derive(Debug, Clone, Copy)]
pub struct IntegratorOptions {
    pub h_min: f64,
    /// Halt with [`Termination::Diverged`] once `‖x‖∞` exceeds this.
    pub divergence_norm: f64,
    pub event_tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            h_min: 1e-14,
            divergence_norm: 1e9,
            event_tol: 1e-10,
            max_steps: 20_000_000,
        }
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// PI controller constants.
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - BETA * 0.75;
const SAFE: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

struct Stepper<'a> {
    grid: &'a GridSpec,
    lay: Layout,
    active: bool,
    atol: f64,
    rtol: f64,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(grid: &'a GridSpec, atol: f64, rtol: f64) -> Self {
        let lay = Layout::new(grid);
        let d = lay.dim();
        Stepper {
            grid,
            lay,
            active: false,
            atol,
            rtol,
            k: std::array::from_fn(|_| vec![0.0; d]),
            tmp: vec![0.0; d],
        }
    }

    fn f(&self, x: &[f64], out: &mut [f64]) {
        rhs_flat(self.grid, &self.lay, self.active, x, out);
    }

    /// One trial step from `y` (with `k[0] = f(y)` already filled); writes the
    /// fifth-order solution to `out`, `f(out)` to `k[6]`, and returns the error norm.
    fn step(&mut self, y: &[f64], h: f64, out: &mut [f64]) -> f64 {
        let d = y.len();
        macro_rules! stage {
            ($dst:expr, $($c:expr => $i:expr),+) => {{
                for n in 0..d {
                    self.tmp[n] = y[n] + h * (0.0 $(+ $c * self.k[$i][n])+);
                }
                let mut kk = std::mem::take(&mut self.k[$dst]);
                self.f(&self.tmp, &mut kk);
                self.k[$dst] = kk;
            }};
        }
        stage!(1, A21 => 0);
        stage!(2, A31 => 0, A32 => 1);
        stage!(3, A41 => 0, A42 => 1, A43 => 2);
        stage!(4, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
        stage!(5, A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
        for n in 0..d {
            out[n] = y[n]
                + h * (A71 * self.k[0][n] + A73 * self.k[2][n] + A74 * self.k[3][n] + A75 * self.k[4][n] + A76 * self.k[5][n]);
        }
        let mut k6 = std::mem::take(&mut self.k[6]);
        self.f(out, &mut k6);
        self.k[6] = k6;
        let mut acc = 0.0;
        for n in 0..d {
            let e = h
                * (E1 * self.k[0][n] + E3 * self.k[2][n] + E4 * self.k[3][n] + E5 * self.k[4][n] + E6 * self.k[5][n]
                    + E7 * self.k[6][n]);
            let sc = self.atol + self.rtol * y[n].abs().max(out[n].abs());
            acc += (e / sc) * (e / sc);
        }
        (acc / d as f64).sqrt()
    }

    fn initial_h(&mut self, y: &[f64], h_max: f64) -> f64 {
        let d = y.len();
        let mut f0 = vec![0.0; d];
        self.f(y, &mut f0);
        let sc: Vec<f64> = y.iter().map(|v| self.atol + self.rtol * v.abs()).collect();
        let rms = |v: &[f64]| (v.iter().zip(&sc).map(|(a, s)| (a / s) * (a / s)).sum::<f64>() / d as f64).sqrt();
        let (dnf, dny) = (rms(&f0), rms(y));
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { 0.01 * dny / dnf };
        h = h.min(h_max);
        let y1: Vec<f64> = y.iter().zip(&f0).map(|(a, b)| a + h * b).collect();
        let mut f1 = vec![0.0; d];
        self.f(&y1, &mut f1);
        let diff: Vec<f64> = f1.iter().zip(&f0).map(|(a, b)| a - b).collect();
        let der2 = rms(&diff) / h;
        let der12 = der2.max(dnf);
        let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(0.2) };
        (100.0 * h).min(h1).min(h_max)
    }
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Integrates `scenario` from its initial state to `t_end` with default options.
pub fn simulate(scenario: &Scenario) -> Result<TimeSeries> {
    simulate_with(scenario, &IntegratorOptions::default())
}

pub fn simulate_with(scenario: &Scenario, opts: &IntegratorOptions) -> Result<TimeSeries> {
    let grid = &scenario.grid;
    let t_end = scenario.t_end;
    let plug = grid.cpl.plug_in_time;
    let v_min = grid.cpl.v_min;
    let mut st = Stepper::new(grid, scenario.abs_tol, scenario.rel_tol);
    let vl = st.lay.vl;
    let d = st.lay.dim();

    let mut y = initial_vector(scenario);
    let mut series = TimeSeries {
        times: vec![0.0],
        states: vec![State::from_slice(grid, &y)],
        events: Vec::new(),
        plug_in_time: plug,
        t_end,
        termination: Termination::Completed,
    };

    let mut segments = Vec::new();
    if plug > 0.0 {
        segments.push((0.0, plug, false));
    }
    segments.push((plug, t_end, true));

    let mut y_new = vec![0.0; d];
    let mut steps = 0usize;
    for (t0, t1, active) in segments {
        st.active = active;
        if active {
            series.events.push(Event { t: t0, kind: EventKind::PlugIn });
        }
        let span = t1 - t0;
        let mut t = t0;
        let mut h = st.initial_h(&y, span);
        let mut fac_old: f64 = 1e-4;
        let mut last_rejected = false;
        let mut k0 = std::mem::take(&mut st.k[0]);
        st.f(&y, &mut k0);
        st.k[0] = k0;

        while t < t1 {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Numerical(format!("step budget of {} exhausted at t = {t}", opts.max_steps)));
            }
            let mut last = false;
            if t + h >= t1 || (t1 - (t + h)) < 1e-12 * span.max(1.0) {
                h = t1 - t;
                last = true;
            }
            if h < opts.h_min && !last {
                return Err(Error::StepSizeUnderflow { t, h, state: y.clone() });
            }
            let err = st.step(&y, h, &mut y_new);
            if !err.is_finite() {
                if h < opts.h_min {
                    return Err(Error::NonFiniteState { t });
                }
                h *= FAC_MIN;
                last_rejected = true;
                continue;
            }
            let fac11 = err.powf(EXPO);
            if err <= 1.0 {
                let mut h_taken = h;
                let mut t_new = if last { t1 } else { t + h };
                let mut crossed = false;

                let below = |v: f64| v <= v_min;
                if active && below(y[vl]) != below(y_new[vl]) {
                    // Bracket the crossing in step length.
                    let (mut lo, mut hi) = (0.0, h);
                    while hi - lo > opts.event_tol {
                        let mid = 0.5 * (lo + hi);
                        st.step(&y, mid, &mut y_new);
                        if below(y_new[vl]) != below(y[vl]) {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    st.step(&y, hi, &mut y_new);
                    h_taken = hi;
                    t_new = if hi < h { t + hi } else { t_new };
                    crossed = true;
                }

                if y_new.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteState { t: t_new });
                }
                t = t_new;
                y.copy_from_slice(&y_new);
                st.k.swap(0, 6);
                series.times.push(t);
                series.states.push(State::from_slice(grid, &y));
                if crossed {
                    series.events.push(Event { t, kind: EventKind::VminCross });
                    // Restart: the derivative jumps at the kink.
                    let mut k0 = std::mem::take(&mut st.k[0]);
                    st.f(&y, &mut k0);
                    st.k[0] = k0;
                    fac_old = 1e-4;
                    last_rejected = false;
                    h = h_taken.max(1e-3 * h);
                    continue;
                }
                if inf_norm(&y) > opts.divergence_norm {
                    series.termination = Termination::Diverged;
                    return Ok(series);
                }

                let fac = (fac11 / fac_old.powf(BETA) / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                let mut h_next = h / fac;
                fac_old = err.max(1e-4);
                if last_rejected {
                    h_next = h_next.min(h);
                }
                last_rejected = false;
                h = h_next;
            } else {
                h /= (fac11 / SAFE).min(1.0 / FAC_MIN);
                last_rejected = true;
            }
        }
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{BranchParams, CplParams, GridSpec, LoadParams};
    use crate::presets;

    #[test]
    fn linear_rc_matches_closed_form() {
        // One branch, no CPL: a linear network whose solution we compare against
        // an exact matrix-exponential reference.
        let g = GridSpec::new(
            vec![BranchParams::proposed(10.0, 2.0, 1.0, 0.5, 1.0, 0.2, 0.3)],
            LoadParams { c_l: 0.4, r_l: 5.0 },
            CplParams::new(0.0, 1.0, 0.0),
        )
        .unwrap();
        let mut s = Scenario::new(g.clone(), 3.0).unwrap();
        s.abs_tol = 1e-11;
        s.rel_tol = 1e-11;
        let ts = simulate(&s).unwrap();
        let lay = Layout::new(&g);
        let a = super::super::jacobian_flat(&g, &lay, true, &[0.0; 4]);
        let mut b = vec![0.0; 4];
        rhs_flat(&g, &lay, true, &[0.0; 4], &mut b);
        // x(t) = -A^{-1} b + exp(At) A^{-1} b, exp by scaling and squaring of a Taylor series
        let am = a.clone() * (3.0 / 1024.0);
        let mut e = nalgebra::DMatrix::<f64>::identity(4, 4);
        let mut term = e.clone();
        for k in 1..30 {
            term = &term * &am / k as f64;
            e += &term;
        }
        for _ in 0..10 {
            e = &e * &e;
        }
        let ainvb = a.lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
        let exact = &e * &ainvb - &ainvb;
        let got = ts.last().unwrap().to_vec();
        for k in 0..4 {
            assert!((got[k] - exact[k]).abs() < 1e-7, "{k}: {} vs {}", got[k], exact[k]);
        }
        assert_eq!(*ts.times.last().unwrap(), 3.0);
    }

    #[test]
    fn plug_in_is_a_step_boundary_and_times_increase() {
        let mut s = presets::plug_in(800.0);
        s.t_end = 21.0;
        let ts = simulate(&s).unwrap();
        assert!(ts.times.contains(&20.0));
        assert!(ts.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(ts.events[0], Event { t: 20.0, kind: EventKind::PlugIn });
        assert_eq!(ts.times.len(), ts.states.len());
    }

    #[test]
    fn collapse_records_vmin_crossing() {
        let ts = simulate(&presets::plug_in(825.0)).unwrap();
        let cross: Vec<_> = ts.events.iter().filter(|e| e.kind == EventKind::VminCross).collect();
        assert!(!cross.is_empty());
        // the crossing is located to within the event tolerance
        for e in cross {
            let k = ts.times.iter().position(|&t| t == e.t).unwrap();
            let (a, b) = (ts.states[k - 1].v_l - 10.0, ts.states[k].v_l - 10.0);
            assert!(a > 0.0 && b <= 0.0 || a <= 0.0 && b > 0.0);
            assert!(ts.times[k] - ts.times[k - 1] <= 1e-10 || b.abs() < 1e-6);
        }
    }

    #[test]
    fn divergence_halts() {
        // Negative-resistance-like runaway cannot happen with r_l > 0, so force it
        // with a huge initial state.
        let mut s = presets::plug_in(0.0);
        s.initial_state = crate::netmodel::InitialState::Given(State {
            i_q: vec![2e9, 0.0],
            i_t: vec![0.0, 0.0],
            v_c: vec![0.0, 0.0],
            v_l: 0.0,
        });
        let ts = simulate(&s).unwrap();
        assert_eq!(ts.termination, Termination::Diverged);
    }
}
