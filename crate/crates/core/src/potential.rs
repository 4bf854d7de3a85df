//! Mixed potential `P(i, v) = -½ iᵀA i + B(v) + iᵀ(γ v - α)` and its transforms.
//!
//! For the microgrid, `i = [I_p, I_q, I_t]` (each of length N) and
//! `v = [V_C, V_L]`. The `I_p` rows belong to zero-valued virtual inductors:
//! they carry the algebraic constraint `I_p = (V_ref - V_C) / R_p` and are
//! never integrated. `B(v) = V_L² / (2 R_L) + ∫_{V_min}^{V_L} i_cpl`, i.e.
//! `P_L ln(V_L / V_min)` above `V_min` and `I_max (V_L - V_min)` below.
//!
//! The form is generic over dimensions so the same machinery serves the
//! second-order RLC benchmark.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::netmodel::{Controller, CplParams, GridSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialForm {
    /// Diagonal of `A`.
    pub a: DVector<f64>,
    pub gamma: DMatrix<f64>,
    pub alpha: DVector<f64>,
    /// Linear conductances: `B` contains `½ g_j v_j²`.
    pub g: DVector<f64>,
    /// Diagonal of the inductance matrix (zero on virtual rows).
    pub l: DVector<f64>,
    /// Diagonal of the capacitance matrix.
    pub c: DVector<f64>,
    /// CPL attached to voltage coordinate `.0`.
    pub cpl: Option<(usize, CplParams)>,
}

/// CPL operating segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Region {
    Hyperbola,
    ConstCurrent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialPoint {
    pub i: DVector<f64>,
    pub v: DVector<f64>,
}

impl PotentialPoint {
    /// Lifts a dynamic state, filling `I_p` from the virtual-inductor constraint.
    pub fn from_state(grid: &GridSpec, s: &State) -> Result<Self> {
        let n = grid.n_branches();
        let mut i = DVector::zeros(3 * n);
        let mut v = DVector::zeros(n + 1);
        for (k, b) in grid.branches.iter().enumerate() {
            let Controller::Proposed { r_p, .. } = b.controller else {
                return Err(Error::UnsupportedController(format!("branch {k} uses droop control")));
            };
            i[k] = (b.v_ref - s.v_c[k]) / r_p;
            i[n + k] = s.i_q[k];
            i[2 * n + k] = s.i_t[k];
            v[k] = s.v_c[k];
        }
        v[n] = s.v_l;
        Ok(PotentialPoint { i, v })
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.i.len() + self.v.len(), self.i.iter().chain(self.v.iter()).copied())
    }

    pub fn from_vector(x: &DVector<f64>, m: usize) -> Self {
        PotentialPoint {
            i: x.rows(0, m).into_owned(),
            v: x.rows(m, x.len() - m).into_owned(),
        }
    }
}

/// Quadratic model `½ xᵀP₂x + P₁ᵀx + P₀` of a transformed potential.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSummary {
    pub p2: DMatrix<f64>,
    pub p1: DVector<f64>,
    pub p0: f64,
    pub lambda_min: f64,
}

/// Builds the microgrid potential. Droop branches have no potential here.
pub fn assemble_forms(grid: &GridSpec) -> Result<PotentialForm> {
    let n = grid.n_branches();
    let m = 3 * n;
    let mut a = DVector::zeros(m);
    let mut alpha = DVector::zeros(m);
    let mut l = DVector::zeros(m);
    let mut c = DVector::zeros(n + 1);
    let mut gamma = DMatrix::zeros(m, n + 1);
    for (k, b) in grid.branches.iter().enumerate() {
        let Controller::Proposed { r_p, r_q, l_q } = b.controller else {
            return Err(Error::UnsupportedController(format!(
                "branch {k} uses droop control; no potential is available for it"
            )));
        };
        a[k] = r_p;
        a[n + k] = r_q;
        a[2 * n + k] = b.r_t;
        l[n + k] = l_q;
        l[2 * n + k] = b.l_t;
        alpha[k] = -b.v_ref;
        alpha[n + k] = -b.v_ref;
        gamma[(k, k)] = -1.0;
        gamma[(n + k, k)] = -1.0;
        gamma[(2 * n + k, k)] = 1.0;
        gamma[(2 * n + k, n)] = -1.0;
        c[k] = b.c_b;
    }
    c[n] = grid.load.c_l;
    let mut g = DVector::zeros(n + 1);
    g[n] = 1.0 / grid.load.r_l;
    Ok(PotentialForm {
        a,
        gamma,
        alpha,
        g,
        l,
        c,
        cpl: Some((n, grid.cpl)),
    })
}

impl PotentialForm {
    pub fn n_currents(&self) -> usize {
        self.a.len()
    }

    pub fn n_voltages(&self) -> usize {
        self.c.len()
    }

    /// Region of a point; exactly `v_min` counts as the hyperbola.
    pub fn region(&self, pt: &PotentialPoint) -> Region {
        match self.cpl {
            Some((j, cpl)) if pt.v[j] < cpl.v_min => Region::ConstCurrent,
            _ => Region::Hyperbola,
        }
    }

    fn check(pt: &PotentialPoint) -> Result<()> {
        if pt.i.iter().chain(pt.v.iter()).all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Domain("non-finite coordinate".into()))
        }
    }

    /// `B(v)` evaluated with the given CPL segment, regardless of where `v` lies.
    pub fn b_piece(&self, v: &DVector<f64>, region: Region) -> Result<f64> {
        let mut b: f64 = v.iter().zip(self.g.iter()).map(|(x, g)| 0.5 * g * x * x).sum();
        if let Some((j, cpl)) = self.cpl {
            let x = v[j];
            b += match region {
                Region::Hyperbola if cpl.p_l == 0.0 => 0.0,
                Region::Hyperbola if x <= 0.0 => {
                    return Err(Error::Domain(format!("ln(V_L / V_min) undefined at V_L = {x}")))
                }
                Region::Hyperbola => cpl.p_l * (x / cpl.v_min).ln(),
                Region::ConstCurrent => cpl.i_max() * (x - cpl.v_min),
            };
        }
        Ok(b)
    }

    fn db_piece(&self, v: &DVector<f64>, region: Region) -> DVector<f64> {
        let mut d = v.component_mul(&self.g);
        if let Some((j, cpl)) = self.cpl {
            d[j] += match region {
                Region::Hyperbola => cpl.p_l / v[j],
                Region::ConstCurrent => cpl.i_max(),
            };
        }
        d
    }

    fn bilinear(&self, pt: &PotentialPoint) -> f64 {
        let ai = pt.i.component_mul(&self.a);
        -0.5 * pt.i.dot(&ai) + pt.i.dot(&(&self.gamma * &pt.v - &self.alpha))
    }

    /// `P` using a fixed CPL segment.
    pub fn eval_piece(&self, pt: &PotentialPoint, region: Region) -> Result<f64> {
        Self::check(pt)?;
        Ok(self.bilinear(pt) + self.b_piece(&pt.v, region)?)
    }

    pub fn eval(&self, pt: &PotentialPoint) -> Result<f64> {
        self.eval_piece(pt, self.region(pt))
    }

    /// `(∂P/∂i, ∂P/∂v)` using a fixed CPL segment.
    pub fn grad_piece(&self, pt: &PotentialPoint, region: Region) -> Result<(DVector<f64>, DVector<f64>)> {
        Self::check(pt)?;
        let gi = -pt.i.component_mul(&self.a) + &self.gamma * &pt.v - &self.alpha;
        let gv = self.db_piece(&pt.v, region) + self.gamma.tr_mul(&pt.i);
        Ok((gi, gv))
    }

    pub fn grad(&self, pt: &PotentialPoint) -> Result<(DVector<f64>, DVector<f64>)> {
        self.grad_piece(pt, self.region(pt))
    }

    pub fn grad_vector(&self, pt: &PotentialPoint) -> Result<DVector<f64>> {
        let (gi, gv) = self.grad(pt)?;
        Ok(stack(&gi, &gv))
    }

    /// Second derivative of `B` along each voltage coordinate.
    pub fn b_curvature(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let mut d = self.g.clone();
        if let Some((j, cpl)) = self.cpl {
            if cpl.p_l > 0.0 && v[j] == cpl.v_min {
                return Err(Error::NotTwiceDifferentiable { v_min: cpl.v_min });
            }
            if v[j] > cpl.v_min {
                d[j] -= cpl.p_l / (v[j] * v[j]);
            }
        }
        Ok(d)
    }

    /// Block Hessian `[-A, γ; γᵀ, diag(B'')]`.
    pub fn hess(&self, pt: &PotentialPoint) -> Result<DMatrix<f64>> {
        Self::check(pt)?;
        let bvv = self.b_curvature(&pt.v)?;
        let (m, n) = (self.n_currents(), self.n_voltages());
        let mut h = DMatrix::zeros(m + n, m + n);
        for k in 0..m {
            h[(k, k)] = -self.a[k];
        }
        h.view_mut((0, m), (m, n)).copy_from(&self.gamma);
        h.view_mut((m, 0), (n, m)).copy_from(&self.gamma.transpose());
        for j in 0..n {
            h[(m + j, m + j)] = bvv[j];
        }
        Ok(h)
    }

    /// `M = diag(2A⁻¹, 0)`.
    pub fn m_matrix(&self) -> DMatrix<f64> {
        let (m, n) = (self.n_currents(), self.n_voltages());
        let mut mm = DMatrix::zeros(m + n, m + n);
        for k in 0..m {
            mm[(k, k)] = 2.0 / self.a[k];
        }
        mm
    }

    /// `J = diag(-L, C)`, so that `-J ẋ = ∂P/∂x`.
    pub fn j_matrix(&self) -> DMatrix<f64> {
        let d: Vec<f64> = self.l.iter().map(|x| -x).chain(self.c.iter().copied()).collect();
        DMatrix::from_diagonal(&DVector::from_vec(d))
    }

    /// `J* = (I + ∂²P/∂x² M) J = [L, 0; -2γᵀA⁻¹L, C]`; independent of the point.
    pub fn j_star(&self) -> DMatrix<f64> {
        let (m, n) = (self.n_currents(), self.n_voltages());
        let mut j = DMatrix::zeros(m + n, m + n);
        for k in 0..m {
            j[(k, k)] = self.l[k];
        }
        for r in 0..n {
            j[(m + r, m + r)] = self.c[r];
            for k in 0..m {
                j[(m + r, k)] = -2.0 * self.gamma[(k, r)] * self.l[k] / self.a[k];
            }
        }
        j
    }

    /// `P* = P + (∂P/∂i)ᵀ A⁻¹ (∂P/∂i)` and its Hessian
    /// `[A, -γ; -γᵀ, diag(B'') + 2γᵀA⁻¹γ]`. The Hessian is exact away from
    /// `v_min` because `∂P/∂i` is affine.
    pub fn transform_condition4(&self, pt: &PotentialPoint) -> Result<(f64, DMatrix<f64>)> {
        let p = self.eval(pt)?;
        let (gi, _) = self.grad(pt)?;
        let value = p + gi.component_div(&self.a).dot(&gi);
        let h = self.hess(pt)?;
        let hs = &h + &h * self.m_matrix() * &h;
        Ok((value, symmetrize(hs)))
    }

    /// `∂P*/∂x = (I + ∂²P/∂x² M) ∂P/∂x`.
    pub fn grad_condition4(&self, pt: &PotentialPoint) -> Result<DVector<f64>> {
        let g = self.grad_vector(pt)?;
        let h = self.hess_or_one_sided(pt)?;
        Ok(&g + h * (self.m_matrix() * &g))
    }

    /// Hessian, using the hyperbola side exactly at `v_min`. Only the current
    /// block of `M` is nonzero, so the `B''` entry never enters `H M g`.
    fn hess_or_one_sided(&self, pt: &PotentialPoint) -> Result<DMatrix<f64>> {
        match self.hess(pt) {
            Err(Error::NotTwiceDifferentiable { .. }) => {
                let mut q = pt.clone();
                if let Some((j, cpl)) = self.cpl {
                    q.v[j] = cpl.v_min * (1.0 + 1e-12);
                }
                self.hess(&q)
            }
            r => r,
        }
    }

    /// Closed-form Condition-4 block matrix at a point.
    pub fn condition4_blocks(&self, pt: &PotentialPoint) -> Result<DMatrix<f64>> {
        let (m, n) = (self.n_currents(), self.n_voltages());
        let bvv = self.b_curvature(&pt.v)?;
        let ainv_gamma = DMatrix::from_fn(m, n, |k, j| self.gamma[(k, j)] / self.a[k]);
        let lower = self.gamma.tr_mul(&ainv_gamma) * 2.0 + DMatrix::from_diagonal(&bvv);
        let mut out = DMatrix::zeros(m + n, m + n);
        for k in 0..m {
            out[(k, k)] = self.a[k];
        }
        out.view_mut((0, m), (m, n)).copy_from(&(-&self.gamma));
        out.view_mut((m, 0), (n, m)).copy_from(&(-self.gamma.transpose()));
        out.view_mut((m, m), (n, n)).copy_from(&lower);
        Ok(out)
    }

    /// Quadratic part of `P*` on one CPL region, dropping the sublinear
    /// `P_L ln V_L` term: `P₂ = [A, -γ; -γᵀ, diag(g) + 2γᵀA⁻¹γ]`,
    /// `P₁ = [α; -2γᵀA⁻¹α] + B'_lin`, `P₀ = αᵀA⁻¹α + B_const`.
    pub fn transform_unbounded(&self, region: Region) -> QuadraticSummary {
        let (m, n) = (self.n_currents(), self.n_voltages());
        let mut p2 = DMatrix::zeros(m + n, m + n);
        let ainv_gamma = DMatrix::from_fn(m, n, |k, j| self.gamma[(k, j)] / self.a[k]);
        let ainv_alpha = self.alpha.component_div(&self.a);
        for k in 0..m {
            p2[(k, k)] = self.a[k];
        }
        p2.view_mut((0, m), (m, n)).copy_from(&(-&self.gamma));
        p2.view_mut((m, 0), (n, m)).copy_from(&(-self.gamma.transpose()));
        let lower = self.gamma.tr_mul(&ainv_gamma) * 2.0 + DMatrix::from_diagonal(&self.g);
        p2.view_mut((m, m), (n, n)).copy_from(&lower);
        let p2 = symmetrize(p2);

        let mut p1 = stack(&self.alpha, &(self.gamma.tr_mul(&ainv_alpha) * -2.0));
        let mut p0 = self.alpha.dot(&ainv_alpha);
        if let (Some((j, cpl)), Region::ConstCurrent) = (self.cpl, region) {
            p1[m + j] += cpl.i_max();
            p0 -= cpl.i_max() * cpl.v_min;
        }
        let lambda_min = p2.clone().symmetric_eigenvalues().min();
        QuadraticSummary { p2, p1, p0, lambda_min }
    }

    /// `L^{1/2} A⁻¹ γ C^{-1/2}`; virtual rows vanish with `L`.
    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_currents(), self.n_voltages(), |k, j| {
            self.l[k].sqrt() / self.a[k] * self.gamma[(k, j)] / self.c[j].sqrt()
        })
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_matrix().singular_values().max()
    }
}

fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}
