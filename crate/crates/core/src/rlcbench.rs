//! Second-order RLC circuit feeding a constant (possibly negative) load
//! resistor: exact poles versus the proposed criteria versus the legacy
//! Brayton–Moser conditions.
//!
//! Circuit: source `v_s`, series `R` and `L`, shunt `C` with `R_L` across it.
//! The characteristic polynomial is `L C R_L s² + (L + C R_L R) s + R_L + R`,
//! and the potential is `A = R`, `γ = -1`, `α = -v_s`, `B = V_C² / (2 R_L)`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::criteria::{brayton_moser_form, C4_TOL};
use crate::error::{Error, Result};
use crate::potential::{PotentialForm, PotentialPoint, Region};

/// Absolute distance (ohms) from a region endpoint below which a sample counts as on the boundary.
pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RlcParams {
    pub v_s: f64,
    pub r: f64,
    pub l: f64,
    pub c: f64,
    pub r_l: f64,
}

impl RlcParams {
    pub fn new(v_s: f64, r: f64, l: f64, c: f64, r_l: f64) -> Result<Self> {
        let p = RlcParams { v_s, r, l, c, r_l };
        for (name, x) in [("l", l), ("c", c), ("r", r)] {
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::validation(name, format!("must be > 0 (got {x})")));
            }
        }
        if !r_l.is_finite() || r_l == 0.0 {
            return Err(Error::validation("r_l", "must be finite and nonzero"));
        }
        Ok(p)
    }

    pub fn form(&self) -> PotentialForm {
        PotentialForm {
            a: DVector::from_element(1, self.r),
            gamma: DMatrix::from_element(1, 1, -1.0),
            alpha: DVector::from_element(1, -self.v_s),
            g: DVector::from_element(1, 1.0 / self.r_l),
            l: DVector::from_element(1, self.l),
            c: DVector::from_element(1, self.c),
            cpl: None,
        }
    }

    /// The unique equilibrium `(I_L, V_C)`, if `R + R_L ≠ 0`.
    pub fn equilibrium(&self) -> Option<PotentialPoint> {
        let den = self.r + self.r_l;
        (den != 0.0).then(|| {
            let i = self.v_s / den;
            PotentialPoint {
                i: DVector::from_element(1, i),
                v: DVector::from_element(1, self.r_l * i),
            }
        })
    }
}

/// Open interval `(lo, hi)`; empty when `lo >= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn is_empty(&self) -> bool {
        self.lo >= self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    pub fn distance_to_boundary(&self, x: f64) -> f64 {
        (x - self.lo).abs().min((x - self.hi).abs())
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_empty() {
            write!(f, "{{∅}}")
        } else {
            write!(f, "({}, {})", fmt_num(self.lo), fmt_num(self.hi))
        }
    }
}

fn fmt_num(x: f64) -> String {
    if x.is_infinite() {
        "∞".into()
    } else {
        format!("{}", (x * 1e9).round() / 1e9)
    }
}

/// Poles `(re, im)` from the numerically stable quadratic formula.
pub fn rlc_poles(p: &RlcParams) -> Result<[(f64, f64); 2]> {
    let a = p.l * p.c * p.r_l;
    let b = p.l + p.c * p.r_l * p.r;
    let c = p.r_l + p.r;
    if a == 0.0 {
        return Err(Error::DegenerateDenominator);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        let re = -b / (2.0 * a);
        let im = (-disc).sqrt() / (2.0 * a).abs();
        return Ok([(re, im), (re, -im)]);
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return Ok([(0.0, 0.0), (0.0, 0.0)]);
    }
    Ok([(q / a, 0.0), (c / q, 0.0)])
}

/// Both poles strictly in the left half-plane. A real part within `1e-12 |λ|`
/// of zero is marginal (unstable), so the region endpoints classify the same
/// way regardless of rounding.
pub fn pole_stable(p: &RlcParams) -> Result<bool> {
    Ok(rlc_poles(p)?.iter().all(|z| z.0 < -1e-12 * z.0.hypot(z.1)))
}

/// Exact stability region in `R` for a negative load, `(L/(C|R_L|), |R_L|)`.
/// Positive loads are stable for every `R > 0`.
pub fn rlc_root_region(l: f64, c: f64, r_l: f64) -> Interval {
    if r_l > 0.0 {
        Interval { lo: 0.0, hi: f64::INFINITY }
    } else {
        Interval {
            lo: l / (c * r_l.abs()),
            hi: r_l.abs(),
        }
    }
}

/// The constituent bounds the proposed criteria impose on `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProposedBounds {
    /// `σ_max < 1` read literally: `R > √(L/C)`.
    pub sigma_literal: f64,
    /// `σ_max < 1` after substituting `R ≤ |R_L|` from C4: `R > L/(C|R_L|)`.
    pub sigma_converted: f64,
    /// C4, non-strict: `R ≤ |R_L|` (negative loads only).
    pub c4_upper: f64,
    /// Radial unboundedness, strict: `R < |R_L|` (negative loads only).
    pub radial_upper: f64,
}

pub fn rlc_proposed_bounds(l: f64, c: f64, r_l: f64) -> ProposedBounds {
    let upper = if r_l < 0.0 { r_l.abs() } else { f64::INFINITY };
    ProposedBounds {
        sigma_literal: (l / c).sqrt(),
        sigma_converted: if r_l < 0.0 { l / (c * r_l.abs()) } else { (l / c).sqrt() },
        c4_upper: upper,
        radial_upper: upper,
    }
}

/// Region delivered by the proposed criteria, `(L/(C|R_L|), |R_L|)` for a negative load.
///
/// The lower end comes from rewriting `√(L/C)/R < 1` with the C4 bound
/// `R ≤ |R_L|`; since that rewrite only holds one way, the plain intersection
/// of the three tests is the narrower [`rlc_proposed_region_literal`].
pub fn rlc_proposed_region(l: f64, c: f64, r_l: f64) -> Interval {
    let b = rlc_proposed_bounds(l, c, r_l);
    Interval {
        lo: b.sigma_converted,
        hi: b.c4_upper.min(b.radial_upper),
    }
}

/// Intersection of the three tests taken literally: `(√(L/C), |R_L|)`.
pub fn rlc_proposed_region_literal(l: f64, c: f64, r_l: f64) -> Interval {
    let b = rlc_proposed_bounds(l, c, r_l);
    Interval {
        lo: b.sigma_literal,
        hi: b.c4_upper.min(b.radial_upper),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BmRegion {
    /// No `R` satisfies the legacy conditions; names the failing condition.
    Empty { failing: String },
    /// Legacy conditions hold for every `R` at or above the bound.
    AtLeast(f64),
}

pub fn rlc_bm_region(l: f64, c: f64, r_l: f64) -> BmRegion {
    if r_l < 0.0 {
        BmRegion::Empty {
            failing: "B(v) + |γv| = V_C²/(2R_L) + |V_C| → -∞ because R_L < 0".into(),
        }
    } else {
        BmRegion::AtLeast((l / c).sqrt() / (1.0 - crate::criteria::BM_DELTA))
    }
}

impl std::fmt::Display for BmRegion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BmRegion::Empty { .. } => write!(f, "{{∅}}"),
            BmRegion::AtLeast(x) => write!(f, "[{}, ∞)", fmt_num(*x)),
        }
    }
}

/// Per-condition verdicts of the proposed criteria on one circuit, computed
/// with the generic potential machinery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProposedVerdict {
    pub sigma_max: f64,
    /// `σ_max < 1` as stated.
    pub c1_literal: bool,
    /// `σ_max² R / |R_L| < 1`, the form the region is published in.
    pub c1_converted: bool,
    pub c2: bool,
    pub c4: bool,
    pub stable: bool,
    pub stable_literal: bool,
}

pub fn proposed_verdict(p: &RlcParams) -> ProposedVerdict {
    let form = p.form();
    let sigma = form.sigma_max();
    let c1_literal = sigma < 1.0;
    let c1_converted = if p.r_l < 0.0 {
        sigma * sigma * p.r / p.r_l.abs() < 1.0
    } else {
        c1_literal
    };
    let c2 = form.transform_unbounded(Region::Hyperbola).lambda_min > 0.0;
    // Hess P* is constant for this linear circuit, so the origin stands in
    // when R = -R_L leaves no isolated equilibrium.
    let at = p.equilibrium().unwrap_or(PotentialPoint {
        i: DVector::zeros(1),
        v: DVector::zeros(1),
    });
    let c4 = form
        .transform_condition4(&at)
        .map(|(_, h)| h.symmetric_eigenvalues().min() >= -C4_TOL)
        .unwrap_or(false);
    ProposedVerdict {
        sigma_max: sigma,
        c1_literal,
        c1_converted,
        c2,
        c4,
        stable: c1_converted && c2 && c4,
        stable_literal: c1_literal && c2 && c4,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub r: f64,
    pub pole_stable: bool,
    pub proposed_stable: bool,
    pub proposed_literal_stable: bool,
    pub bm_stable: bool,
    pub off_boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodComparison {
    pub l: f64,
    pub c: f64,
    pub r_l: f64,
    pub root_region: Interval,
    pub proposed_region: Interval,
    pub proposed_region_literal: Interval,
    pub bm_region: BmRegion,
    pub n_samples: usize,
    pub n_off_boundary: usize,
    /// Fraction of off-boundary samples where the proposed verdict equals the pole verdict.
    pub proposed_agreement: f64,
    pub literal_agreement: f64,
    pub bm_stable_count: usize,
    pub pole_stable_count: usize,
    pub rows: [String; 3],
    pub samples: Vec<Sample>,
}

/// Compares the three methods at `n_samples` values of `R` spread
/// log-uniformly (deterministic stratified grid) over `(1e-3|R_L|, 1e3|R_L|)`.
pub fn compare_methods(l: f64, c: f64, r_l: f64, n_samples: usize) -> Result<MethodComparison> {
    RlcParams::new(1.0, 1.0, l, c, r_l)?;
    if n_samples == 0 {
        return Err(Error::validation("samples", "must be at least 1"));
    }
    let root = rlc_root_region(l, c, r_l);
    let (lo, hi) = ((1e-3 * r_l.abs()).ln(), (1e3 * r_l.abs()).ln());
    let mut samples = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let r = (lo + (k as f64 + 0.5) / n_samples as f64 * (hi - lo)).exp();
        let p = RlcParams::new(1.0, r, l, c, r_l)?;
        let pv = proposed_verdict(&p);
        let off = root.is_empty() || root.distance_to_boundary(r) > BOUNDARY_TOL;
        samples.push(Sample {
            r,
            pole_stable: pole_stable(&p)?,
            proposed_stable: pv.stable,
            proposed_literal_stable: pv.stable_literal,
            bm_stable: brayton_moser_form(&p.form()).pass,
            off_boundary: off,
        });
    }
    let off: Vec<&Sample> = samples.iter().filter(|s| s.off_boundary).collect();
    let frac = |f: &dyn Fn(&Sample) -> bool| {
        if off.is_empty() {
            1.0
        } else {
            off.iter().filter(|s| f(s)).count() as f64 / off.len() as f64
        }
    };
    let proposed_agreement = frac(&|s| s.proposed_stable == s.pole_stable);
    let literal_agreement = frac(&|s| s.proposed_literal_stable == s.pole_stable);
    let proposed_region = rlc_proposed_region(l, c, r_l);
    let bm_region = rlc_bm_region(l, c, r_l);
    let rows = [
        format!("{:<24}{}", "Poles", root),
        format!("{:<24}{}", "Proposed criteria", proposed_region),
        format!("{:<24}{}", "Brayton-Moser", bm_region),
    ];
    Ok(MethodComparison {
        l,
        c,
        r_l,
        root_region: root,
        proposed_region,
        proposed_region_literal: rlc_proposed_region_literal(l, c, r_l),
        bm_region,
        n_samples,
        n_off_boundary: off.len(),
        proposed_agreement,
        literal_agreement,
        bm_stable_count: samples.iter().filter(|s| s.bm_stable).count(),
        pole_stable_count: samples.iter().filter(|s| s.pole_stable).count(),
        rows,
        samples,
    })
}

impl MethodComparison {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "RLC benchmark: L = {}, C = {}, R_L = {}", self.l, self.c, self.r_l);
        let _ = writeln!(out, "{:<24}Stability region in R", "Method");
        for row in &self.rows {
            let _ = writeln!(out, "{row}");
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{} samples of R in ({}, {}), {} off the boundary",
            self.n_samples,
            1e-3 * self.r_l.abs(),
            1e3 * self.r_l.abs(),
            self.n_off_boundary
        );
        let _ = writeln!(out, "  pole-stable samples:            {}", self.pole_stable_count);
        let _ = writeln!(out, "  proposed vs poles agreement:    {:.2}%", 100.0 * self.proposed_agreement);
        let _ = writeln!(out, "  Brayton-Moser stable samples:   {}", self.bm_stable_count);
        let _ = writeln!(
            out,
            "  literal intersection {} agrees on {:.2}%",
            self.proposed_region_literal,
            100.0 * self.literal_agreement
        );
        out
    }
}
