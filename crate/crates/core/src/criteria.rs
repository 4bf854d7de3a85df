//! Large-signal conditions C0–C4, the legacy Brayton–Moser conditions, and
//! small-signal eigenvalue verdicts.

use nalgebra::DMatrix;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::dynamics::{jacobian_at, State};
use crate::equilibrium::{all_equilibria, max_deliverable_power, solve_equilibria, state_for_voltage, Equilibrium, RootBranch};
use crate::error::{Error, Result};
use crate::netmodel::{Controller, GridSpec};
use crate::potential::{assemble_forms, PotentialForm, PotentialPoint, Region};

/// Semidefiniteness slack for C4.
pub const C4_TOL: f64 = 1e-10;
/// `δ` in the legacy `σ ≤ 1 - δ` condition.
pub const BM_DELTA: f64 = 1e-9;
/// Small-signal pass requires `max Re λ` below `-SMALL_SIGNAL_TOL`.
pub const SMALL_SIGNAL_TOL: f64 = 1e-9;
/// Largest one-sided gradient jump accepted as C¹.
pub const C0_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConditionId {
    C0,
    C1,
    C2,
    C3,
    C4,
    BM,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionResult {
    pub id: ConditionId,
    pub pass: bool,
    /// Signed distance to the threshold; positive means pass.
    pub margin: f64,
    pub detail: String,
    /// Index into [`StabilityReport::equilibria`] for per-equilibrium conditions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<usize>,
}

impl ConditionResult {
    fn new(id: ConditionId, pass: bool, margin: f64, detail: String) -> Self {
        ConditionResult {
            id,
            pass,
            margin,
            detail,
            equilibrium: None,
        }
    }
}

fn forms(grid: &GridSpec) -> Result<PotentialForm> {
    assemble_forms(grid)
}

/// Points straddling `v_min` at which the C¹ joint is probed.
fn joint_probes(grid: &GridSpec) -> Vec<PotentialPoint> {
    let v_min = grid.cpl.v_min;
    let base = state_for_voltage(grid, v_min);
    let mut out = Vec::new();
    for scale in [1.0, 0.5, 1.7] {
        let mut s = base.clone();
        s.i_q.iter_mut().for_each(|x| *x *= scale);
        s.i_t.iter_mut().for_each(|x| *x *= 2.0 - scale);
        s.v_c.iter_mut().for_each(|x| *x *= scale);
        s.v_l = v_min;
        if let Ok(p) = PotentialPoint::from_state(grid, &s) {
            out.push(p);
        }
    }
    out
}

/// Second-order one-sided derivative of `f` along `v_l`, from below (`dir = -1`) or above.
fn one_sided(f: impl Fn(f64) -> Result<f64>, x0: f64, h: f64, dir: f64) -> Result<f64> {
    let (f0, f1, f2) = (f(x0)?, f(x0 + dir * h)?, f(x0 + dir * 2.0 * h)?);
    Ok(dir * (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h))
}

/// C0: `P` and `P*` are C¹ across `v_min`; C² fails only at `(V_min, I_max)`.
pub fn cond0_smoothness(grid: &GridSpec) -> Result<ConditionResult> {
    let form = forms(grid)?;
    let cpl = grid.cpl;
    if cpl.p_l == 0.0 && cpl.i_max() == 0.0 {
        return Ok(ConditionResult::new(ConditionId::C0, true, C0_TOL, "no CPL: P is quadratic".into()));
    }
    let j = grid.n_branches();
    let h = 1e-4 * cpl.v_min;
    let mut worst: f64 = 0.0;
    for p in joint_probes(grid) {
        let at = |x: f64| {
            let mut q = p.clone();
            q.v[j] = x;
            q
        };
        let p_val = |x: f64| form.eval(&at(x));
        let pstar_val = |x: f64| {
            let q = at(x);
            let (gi, _) = form.grad(&q)?;
            Ok(form.eval(&q)? + gi.component_div(&form.a).dot(&gi))
        };
        let pairs = [
            (one_sided(p_val, cpl.v_min, h, -1.0)?, one_sided(p_val, cpl.v_min, h, 1.0)?),
            (one_sided(pstar_val, cpl.v_min, h, -1.0)?, one_sided(pstar_val, cpl.v_min, h, 1.0)?),
        ];
        for (lo, hi) in pairs {
            worst = worst.max((hi - lo).abs() / lo.abs().max(hi.abs()).max(1.0));
        }
    }
    let pass = worst < C0_TOL;
    let detail = format!(
        "max relative one-sided gradient jump across V_min = {} V: {worst:.3e}; \
         C² fails only at (V_L, I_PL) = ({}, {})",
        cpl.v_min,
        cpl.v_min,
        cpl.i_max()
    );
    Ok(ConditionResult::new(ConditionId::C0, pass, C0_TOL - worst, detail))
}

/// C1: `σ_max(L^{1/2} A⁻¹ γ C^{-1/2}) < 1`, strict, no slack.
pub fn cond1_sigma(grid: &GridSpec) -> Result<ConditionResult> {
    Ok(cond1_from_form(&forms(grid)?))
}

pub(crate) fn cond1_from_form(form: &PotentialForm) -> ConditionResult {
    let sigma = form.sigma_max();
    let js = j_star_positive(form);
    ConditionResult::new(
        ConditionId::C1,
        sigma < 1.0,
        1.0 - sigma,
        format!("sigma_max = {sigma:.6}; symmetric part of J* positive definite on non-virtual coordinates: {js}"),
    )
}

/// Whether `sym(J*)` is positive definite once the zero-inductance rows are removed.
pub fn j_star_positive(form: &PotentialForm) -> bool {
    let js = form.j_star();
    let keep: Vec<usize> = (0..js.nrows())
        .filter(|&k| k >= form.n_currents() || form.l[k] > 0.0)
        .collect();
    let sym = DMatrix::from_fn(keep.len(), keep.len(), |r, c| 0.5 * (js[(keep[r], keep[c])] + js[(keep[c], keep[r])]));
    sym.cholesky().is_some()
}

/// C2: the quadratic part of `P*` is positive definite on both CPL regions.
pub fn cond2_radial(grid: &GridSpec) -> Result<ConditionResult> {
    Ok(cond2_from_form(&forms(grid)?))
}

pub(crate) fn cond2_from_form(form: &PotentialForm) -> ConditionResult {
    let regions: &[Region] = if form.cpl.is_some() {
        &[Region::Hyperbola, Region::ConstCurrent]
    } else {
        &[Region::Hyperbola]
    };
    let lams: Vec<f64> = regions.iter().map(|&r| form.transform_unbounded(r).lambda_min).collect();
    let margin = lams.iter().copied().fold(f64::INFINITY, f64::min);
    let detail = if form.cpl.is_some() {
        format!(
            "lambda_min(P2) = {:.6e} (hyperbola), {:.6e} (constant current); \
             the sublinear P_L ln V_L term is excluded from P2",
            lams[0], lams[1]
        )
    } else {
        format!("lambda_min(P2) = {:.6e}", lams[0])
    };
    ConditionResult::new(ConditionId::C2, margin > 0.0, margin, detail)
}

/// C3: the operating equilibrium set is finite and nonempty.
pub fn cond3_compact(grid: &GridSpec) -> ConditionResult {
    match solve_equilibria(grid, true) {
        Ok(eqs) if !eqs.is_empty() => ConditionResult::new(
            ConditionId::C3,
            true,
            eqs.len() as f64,
            format!("{} equilibri{}", eqs.len(), if eqs.len() == 1 { "um" } else { "a" }),
        ),
        Ok(_) => ConditionResult::new(ConditionId::C3, false, -1.0, "no equilibrium with V_L > 0".into()),
        Err(Error::NoEquilibrium { p_l, p_max }) => ConditionResult::new(
            ConditionId::C3,
            false,
            p_max - p_l,
            format!("no equilibrium: P_L = {p_l} W exceeds P_max = {p_max:.4} W"),
        ),
        Err(e) => ConditionResult::new(ConditionId::C3, false, -1.0, e.to_string()),
    }
}

fn cpl_term_applies(grid: &GridSpec, eq: &Equilibrium) -> bool {
    eq.on_hyperbola && grid.cpl.p_l > 0.0
}

/// C4 in closed Schur-complement form:
/// `W - Σ 1 / (R_t² (1/R_p + 1/R_q + 1/R_t)) ≥ 0`, `W = 1/R_L - P_L/v_e² + Σ 1/R_t`.
pub fn cond4_schur(grid: &GridSpec, eq: &Equilibrium) -> Result<ConditionResult> {
    let mut w = 1.0 / grid.load.r_l;
    let mut sub = 0.0;
    for (k, b) in grid.branches.iter().enumerate() {
        let Controller::Proposed { r_p, r_q, .. } = b.controller else {
            return Err(Error::UnsupportedController(format!("branch {k} uses droop control")));
        };
        w += 1.0 / b.r_t;
        sub += 1.0 / (b.r_t * b.r_t * (1.0 / r_p + 1.0 / r_q + 1.0 / b.r_t));
    }
    let hyper = cpl_term_applies(grid, eq);
    if hyper {
        w -= grid.cpl.p_l / (eq.v_l * eq.v_l);
    }
    let margin = w - sub;
    let mut detail = format!("v_e = {:.6} V: W = {w:.6}, Σ = {sub:.6}", eq.v_l);
    if !eq.on_hyperbola && grid.cpl.p_l > 0.0 {
        detail.push_str("; constant-current segment, P_L term dropped (extrapolated)");
    }
    Ok(ConditionResult::new(ConditionId::C4, margin >= -C4_TOL, margin, detail))
}

/// C4 by the smallest eigenvalue of the full Hessian of `P*`.
pub fn cond4_full_hessian(grid: &GridSpec, eq: &Equilibrium) -> Result<ConditionResult> {
    let form = forms(grid)?;
    let pt = PotentialPoint::from_state(grid, &eq.state)?;
    let (_, h) = form.transform_condition4(&pt)?;
    let lam = h.symmetric_eigenvalues().min();
    let mut detail = format!("v_e = {:.6} V: lambda_min(Hess P*) = {lam:.6e}", eq.v_l);
    if !eq.on_hyperbola && grid.cpl.p_l > 0.0 {
        detail.push_str("; constant-current segment (extrapolated)");
    }
    Ok(ConditionResult::new(ConditionId::C4, lam >= -C4_TOL, lam, detail))
}

/// Legacy Brayton–Moser conditions on a potential form: `A ≻ 0`,
/// `B(v) + |γ v| → ∞`, and `σ_max ≤ 1 - δ`. There is no equilibrium test.
pub fn brayton_moser_form(form: &PotentialForm) -> ConditionResult {
    let a_min = form.a.min();
    let sigma = form.sigma_max();
    let sigma_margin = (1.0 - BM_DELTA) - sigma;

    // B grows quadratically along every coordinate with g_j > 0 and goes to
    // -∞ along any with g_j < 0; coordinates with g_j = 0 must be covered by |γ v|.
    let g_min = form.g.min();
    let zero_cols: Vec<usize> = (0..form.g.len()).filter(|&j| form.g[j] == 0.0).collect();
    let radial_margin = if g_min < 0.0 || zero_cols.is_empty() {
        g_min
    } else {
        let sub = DMatrix::from_fn(form.gamma.nrows(), zero_cols.len(), |r, c| form.gamma[(r, zero_cols[c])]);
        sub.singular_values().min()
    };

    let mut failed = Vec::new();
    if a_min <= 0.0 {
        failed.push("A is not positive definite");
    }
    if radial_margin <= 0.0 {
        failed.push("B(v) + |γv| does not tend to infinity");
    }
    if sigma_margin < 0.0 {
        failed.push("σ_max exceeds 1 - δ");
    }
    let pass = failed.is_empty();
    let margin = a_min.min(radial_margin).min(sigma_margin);
    let detail = if pass {
        format!("sigma_max = {sigma:.6}; legacy conditions hold but do not discriminate between equilibria")
    } else {
        format!("sigma_max = {sigma:.6}; fails: {}", failed.join(", "))
    };
    ConditionResult::new(ConditionId::BM, pass, margin, detail)
}

pub fn brayton_moser_verdict(grid: &GridSpec) -> Result<ConditionResult> {
    Ok(brayton_moser_form(&forms(grid)?))
}

/// Jacobian of the dynamics with the CPL connected.
pub fn jacobian(grid: &GridSpec, state: &State) -> DMatrix<f64> {
    jacobian_at(grid, state, true)
}

pub fn eigenvalues(j: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let mut ev: Vec<(f64, f64)> = j.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect();
    ev.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    ev
}

/// Eigenvalues at `eq` (sorted by decreasing real part) and whether all have `Re < -1e-9`.
pub fn small_signal_verdict(grid: &GridSpec, eq: &Equilibrium) -> (Vec<(f64, f64)>, bool) {
    let ev = eigenvalues(&jacobian(grid, &eq.state));
    let pass = ev.iter().all(|z| z.0 < -SMALL_SIGNAL_TOL);
    (ev, pass)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    pub equilibrium: Equilibrium,
    /// `v_l > 0`.
    pub operating: bool,
    pub small_signal: bool,
    pub max_real_eigenvalue: f64,
    /// Passes C4, i.e. belongs to the predicted attractor set.
    pub in_attractor_set: Option<bool>,
}

impl Serialize for EquilibriumReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Equilibrium", 8)?;
        st.serialize_field("v_l", &self.equilibrium.v_l)?;
        st.serialize_field("branch_tag", &self.equilibrium.branch_tag)?;
        st.serialize_field("on_hyperbola", &self.equilibrium.on_hyperbola)?;
        st.serialize_field("operating", &self.operating)?;
        st.serialize_field("residual", &self.equilibrium.residual)?;
        st.serialize_field("small_signal", &self.small_signal)?;
        st.serialize_field("max_real_eigenvalue", &self.max_real_eigenvalue)?;
        st.serialize_field("in_attractor_set", &self.in_attractor_set)?;
        st.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub conditions: Vec<ConditionResult>,
    /// Every equilibrium of the model, operating points first.
    pub equilibria: Vec<EquilibriumReport>,
    pub sigma_max: Option<f64>,
    /// Eigenvalues `[re, im]` at the upper operating equilibrium.
    pub eigenvalues: Vec<(f64, f64)>,
    /// `None` when the criteria do not apply (droop controllers).
    pub large_signal: Option<bool>,
    /// Small-signal verdict at the upper operating equilibrium; `None` without one.
    pub small_signal: Option<bool>,
    pub p_max: f64,
    pub notes: Vec<String>,
}

impl StabilityReport {
    pub fn condition(&self, id: ConditionId) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.id == id)
    }

    /// Equilibria passing C4.
    pub fn attractor_set(&self) -> impl Iterator<Item = &Equilibrium> {
        self.equilibria
            .iter()
            .filter(|e| e.in_attractor_set == Some(true))
            .map(|e| &e.equilibrium)
    }

    pub fn upper(&self) -> Option<&Equilibrium> {
        self.equilibria
            .iter()
            .find(|e| e.operating && e.equilibrium.branch_tag == RootBranch::Upper)
            .map(|e| &e.equilibrium)
    }
}

fn equilibrium_reports(grid: &GridSpec) -> Result<Vec<EquilibriumReport>> {
    let mut eqs = all_equilibria(grid, true)?;
    eqs.sort_by_key(|e| (e.v_l <= 0.0, e.branch_tag == RootBranch::Lower, !e.on_hyperbola));
    Ok(eqs
        .into_iter()
        .map(|e| {
            let (ev, pass) = small_signal_verdict(grid, &e);
            EquilibriumReport {
                operating: e.v_l > 0.0,
                small_signal: pass,
                max_real_eigenvalue: ev.first().map_or(f64::NAN, |z| z.0),
                in_attractor_set: None,
                equilibrium: e,
            }
        })
        .collect())
}

fn small_signal_summary(eqs: &[EquilibriumReport], grid: &GridSpec) -> (Vec<(f64, f64)>, Option<bool>) {
    match eqs
        .iter()
        .find(|e| e.operating && e.equilibrium.branch_tag == RootBranch::Upper && e.equilibrium.on_hyperbola)
        .or_else(|| eqs.iter().find(|e| e.operating))
    {
        Some(e) => {
            let (ev, pass) = small_signal_verdict(grid, &e.equilibrium);
            (ev, Some(pass))
        }
        None => (Vec::new(), None),
    }
}

/// Runs C0–C3 globally and C4 at every equilibrium.
///
/// `large_signal` holds iff C0–C3 pass and some operating equilibrium passes
/// C4; with `P_L = 0` the system is linear and the eigenvalue test decides. Errors with [`Error::UnsupportedController`] on droop grids.
pub fn large_signal_verdict(grid: &GridSpec) -> Result<StabilityReport> {
    let form = forms(grid)?;
    let mut conditions = vec![
        cond0_smoothness(grid)?,
        cond1_from_form(&form),
        cond2_from_form(&form),
        cond3_compact(grid),
    ];
    let global = conditions.iter().all(|c| c.pass);

    let mut eqs = equilibrium_reports(grid)?;
    let mut any_c4 = false;
    let mut notes = Vec::new();
    for (k, e) in eqs.iter_mut().enumerate() {
        let schur = cond4_schur(grid, &e.equilibrium)?;
        match cond4_full_hessian(grid, &e.equilibrium) {
            Ok(full) if full.pass != schur.pass => notes.push(format!(
                "equilibrium {k}: Schur form ({:.3e}) and Hessian eigenvalue ({:.3e}) disagree",
                schur.margin, full.margin
            )),
            Err(err) => notes.push(format!("equilibrium {k}: {err}")),
            _ => {}
        }
        e.in_attractor_set = Some(schur.pass);
        if schur.pass && e.operating {
            any_c4 = true;
        }
        conditions.push(ConditionResult {
            equilibrium: Some(k),
            ..schur
        });
    }
    if eqs.iter().any(|e| !e.operating) {
        notes.push("equilibria with V_L <= 0 lie on the constant-current segment (voltage collapse)".into());
    }
    notes.push("C2 is tested on the quadratic part of P*; the P_L ln V_L term grows sublinearly".into());

    let (eigenvalues, small_signal) = small_signal_summary(&eqs, grid);
    // Without a CPL the network is linear: global and local stability coincide.
    let linear = grid.cpl.p_l == 0.0;
    if linear {
        notes.push("P_L = 0: linear network, large-signal verdict taken from the eigenvalues".into());
    }
    let sigma_max = form.sigma_max();
    Ok(StabilityReport {
        conditions,
        equilibria: eqs,
        sigma_max: Some(sigma_max),
        eigenvalues,
        large_signal: Some(if linear { small_signal == Some(true) } else { global && any_c4 }),
        small_signal,
        p_max: max_deliverable_power(grid),
        notes,
    })
}

/// Full report for any grid: droop grids get small-signal results only.
pub fn stability_report(grid: &GridSpec) -> Result<StabilityReport> {
    match large_signal_verdict(grid) {
        Err(Error::UnsupportedController(msg)) => {
            let eqs = equilibrium_reports(grid)?;
            let (eigenvalues, small_signal) = small_signal_summary(&eqs, grid);
            Ok(StabilityReport {
                conditions: Vec::new(),
                equilibria: eqs,
                sigma_max: None,
                eigenvalues,
                large_signal: None,
                small_signal,
                p_max: max_deliverable_power(grid),
                notes: vec![format!("large-signal criteria unsupported: {msg}")],
            })
        }
        r => r,
    }
}

/// `max Re λ` of the Jacobian at a state; convenience for sweeps.
pub fn max_real_eigenvalue(grid: &GridSpec, state: &State) -> f64 {
    eigenvalues(&jacobian(grid, state)).first().map_or(f64::NAN, |z| z.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{BranchParams, CplParams, LoadParams};
    use crate::presets;

    fn verdict(p: f64) -> StabilityReport {
        large_signal_verdict(&presets::plug_in(p).grid).unwrap()
    }

    #[test]
    fn plug_in_power_checklist() {
        assert_eq!(verdict(800.0).large_signal, Some(true));
        assert_eq!(verdict(805.0).large_signal, Some(true));
        assert_eq!(verdict(810.0).large_signal, Some(false));
        assert_eq!(verdict(825.0).large_signal, Some(false));
    }

    #[test]
    fn c4_margins_plug_in() {
        let g = presets::plug_in(800.0).grid;
        let eqs = solve_equilibria(&g, true).unwrap();
        let up = cond4_schur(&g, &eqs[0]).unwrap();
        // 1/2 - 800/900 + 2/3 minus two identical branch terms
        let sub = 2.0 / (9.0 * (1.0 / 0.6 + 1.0 / 0.9 + 1.0 / 3.0));
        let want = 0.5 - 800.0 / (eqs[0].v_l * eqs[0].v_l) + 2.0 / 3.0 - sub;
        assert!((up.margin - want).abs() < 1e-12);
        assert!((up.margin - 0.20635).abs() < 1e-4 && up.pass);
        let lo = cond4_schur(&g, &eqs[1]).unwrap();
        assert!((lo.margin + 0.254).abs() < 2e-3 && !lo.pass, "{}", lo.margin);
        for e in &eqs {
            assert_eq!(cond4_full_hessian(&g, e).unwrap().pass, cond4_schur(&g, e).unwrap().pass);
        }
    }

    #[test]
    fn c4_fast_bus() {
        let g = presets::fast_bus().grid;
        let eqs = solve_equilibria(&g, true).unwrap();
        assert!((eqs[0].v_l - 77.5).abs() < 0.1);
        let c4 = cond4_schur(&g, &eqs[0]).unwrap();
        assert!((c4.margin - 0.425).abs() < 0.005, "{}", c4.margin);
    }

    #[test]
    fn c4_vanishes_at_saddle_node() {
        let g0 = presets::plug_in(800.0).grid;
        let g = g0.with_cpl_power(max_deliverable_power(&g0));
        let eq = &solve_equilibria(&g, true).unwrap()[0];
        let full = cond4_full_hessian(&g, eq).unwrap();
        assert!(full.margin.abs() < 1e-8, "{}", full.margin);
        assert!(cond4_schur(&g, eq).unwrap().margin.abs() < 1e-8);
    }

    #[test]
    fn c4_always_passes_without_cpl() {
        let g = presets::comparison(0.0).grid;
        let eq = &solve_equilibria(&g, true).unwrap()[0];
        assert!(cond4_full_hessian(&g, eq).unwrap().pass);
    }

    #[test]
    fn c1_values() {
        let c1 = cond1_sigma(&presets::plug_in(800.0).grid).unwrap();
        assert!(c1.pass && (c1.margin - (1.0 - 0.516)).abs() < 1e-3);
        // single branch, negligible line inductance: one dominant row
        let g = GridSpec::new(
            vec![BranchParams::proposed(100.0, 1.0, 2.0, 0.3, 1.0, 1e-30, 0.5)],
            LoadParams { c_l: 1.0, r_l: 5.0 },
            CplParams::new(0.0, 1.0, 0.0),
        )
        .unwrap();
        let f = assemble_forms(&g).unwrap();
        assert!((f.sigma_max() - 0.3f64.sqrt() / (2.0 * 0.5f64.sqrt())).abs() < 1e-12);
        // huge L_q
        let mut g2 = g.clone();
        g2.branches[0].controller = Controller::Proposed {
            r_p: 1.0,
            r_q: 2.0,
            l_q: 1e6,
        };
        assert!(!cond1_sigma(&g2).unwrap().pass);
    }

    #[test]
    fn c1_agrees_with_j_star_definiteness() {
        for s in [presets::plug_in(800.0), presets::fast_bus(), presets::comparison(530.0)] {
            let f = assemble_forms(&s.grid).unwrap();
            assert_eq!(f.sigma_max() < 1.0, j_star_positive(&f));
        }
    }

    #[test]
    fn c0_cases() {
        assert!(cond0_smoothness(&presets::plug_in(800.0).grid).unwrap().pass);
        assert!(cond0_smoothness(&presets::plug_in(0.0).grid).unwrap().pass);
        let mut g = presets::plug_in(800.0).grid;
        g.cpl = CplParams::with_mismatched_current_limit(800.0, 10.0, 90.0, 20.0);
        let c0 = cond0_smoothness(&g).unwrap();
        assert!(!c0.pass);
    }

    #[test]
    fn c2_and_c3() {
        let g = presets::plug_in(800.0).grid;
        assert!(cond2_radial(&g).unwrap().pass);
        let c3 = cond3_compact(&g);
        assert!(c3.pass && c3.margin == 2.0);
        assert!(!cond3_compact(&presets::plug_in(810.0).grid).pass);
        let c3 = cond3_compact(&presets::plug_in(0.0).grid);
        assert!(c3.pass && c3.margin == 1.0);
    }

    #[test]
    fn c2_margin_shrinks_with_load_resistance() {
        let mut prev = f64::INFINITY;
        for rl in [1.0, 2.0, 5.0, 20.0, 100.0, 1e4] {
            let mut g = presets::plug_in(800.0).grid;
            g.load.r_l = rl;
            let m = cond2_radial(&g).unwrap().margin;
            assert!(m <= prev + 1e-12, "r_l = {rl}: {m} > {prev}");
            prev = m;
        }
    }

    #[test]
    fn small_signal_plug_in() {
        let g = presets::plug_in(800.0).grid;
        let eqs = solve_equilibria(&g, true).unwrap();
        assert!(small_signal_verdict(&g, &eqs[0]).1);
        let (ev, pass) = small_signal_verdict(&g, &eqs[1]);
        assert!(!pass && ev[0].0 > 0.0);
        let g0 = presets::plug_in(0.0).grid;
        assert!(small_signal_verdict(&g0, &solve_equilibria(&g0, true).unwrap()[0]).1);
    }

    #[test]
    fn jacobian_load_row_at_upper_root() {
        let g = presets::plug_in(800.0).grid;
        let eq = &solve_equilibria(&g, true).unwrap()[0];
        let j = jacobian(&g, &eq.state);
        let want = -0.5 + 800.0 / (eq.v_l * eq.v_l);
        assert!((j[(6, 6)] - want).abs() < 1e-12);
        assert!((j[(6, 6)] - 0.3889).abs() < 1e-3);
        // without a CPL the Jacobian is constant
        let g0 = presets::plug_in(0.0).grid;
        assert_eq!(jacobian(&g0, &eq.state), jacobian(&g0, &State::zeros(&g0)));
    }

    #[test]
    fn brayton_moser_on_microgrid() {
        let bm = brayton_moser_verdict(&presets::plug_in(800.0).grid).unwrap();
        assert!(bm.pass);
        assert!(bm.detail.contains("do not discriminate"));
    }

    #[test]
    fn report_shape_and_json() {
        let r = verdict(800.0);
        assert_eq!(r.equilibria.iter().filter(|e| e.operating).count(), 2);
        assert_eq!(r.attractor_set().filter(|e| e.v_l > 0.0).count(), 1);
        assert_eq!(r.small_signal, Some(true));
        let js = serde_json::to_value(&r).unwrap();
        for key in ["conditions", "equilibria", "sigma_max", "eigenvalues", "large_signal", "small_signal"] {
            assert!(js.get(key).is_some(), "{key}");
        }
        assert!(js["eigenvalues"][0].as_array().unwrap().len() == 2);
        assert_eq!(js["conditions"][0]["id"], "C0");
    }

    #[test]
    fn droop_report_is_unsupported() {
        let g = presets::comparison(530.0).grid.droop_twin().unwrap();
        assert!(matches!(large_signal_verdict(&g), Err(Error::UnsupportedController(_))));
        let r = stability_report(&g).unwrap();
        assert_eq!(r.large_signal, None);
        assert_eq!(r.small_signal, Some(true));
    }
}
