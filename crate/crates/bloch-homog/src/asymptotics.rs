//! Two-cycle asymptotic expansion of the rescaled fiber resolvent, corrector
//! operators, the separating contour and fiber-level rate studies.
//!
//! Notation: `K00 = G0^* A G0`, `K01 = G0^* A X`, `K10 = X^* A G0`, `K11 = X^* A X`
//! where `G0` is the periodic symmetric gradient and `X = i X_chi`. The fiber
//! operator is `A_chi = K00 + K01 + K10 + K11` and `K0` is `K00` on zero-mean fields.

use faer::{c64, Mat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{fiber_hom_matrix, solve_chi_cell, CellSolver};
use crate::error::{Error, Result};
use crate::fiber::{assemble_fiber, SpectrumCache};
use crate::linalg::{
    gauss_legendre, herm_lambda_max, loglog_slope, m3_add, m3_eigvals_herm, m3_identity, m3_inverse, m3_mul,
    m3_vec, spectral_norm, M3, ZERO,
};
use crate::torus::{norm3, Quasimomentum, TorusField};

/// `(M - z)^-1` for a 3x3 Hermitian `M`, refusing near-spectral `z`.
pub fn shifted_inverse(m: &M3, z: c64) -> Result<M3> {
    let d = m3_eigvals_herm(m).iter().map(|l| (c64::new(*l, 0.0) - z).norm()).fold(f64::INFINITY, f64::min);
    if d < 1e-8 {
        return Err(Error::NearSpectrum { distance: d });
    }
    m3_inverse(&m3_add(m, &m3_identity(), -z))
}

fn m3_scale(m: &M3, s: f64) -> M3 {
    m.map(|r| r.map(|x| x * s))
}

/// `(K01 + K10) a + K11 b`.
fn coupling(solver: &CellSolver, chi: &[f64; 3], a: &[c64], b: &[c64]) -> Vec<c64> {
    let xa = solver.big_a(&solver.x(chi, a));
    let mut s = solver.g0(a);
    let xb = solver.x(chi, b);
    for (si, xi) in s.iter_mut().zip(&xb) {
        for p in 0..6 {
            si[p] += xi[p];
        }
    }
    let s = solver.big_a(&s);
    let mut out = solver.g0_adj(&xa);
    for (o, y) in out.iter_mut().zip(solver.x_adj(chi, &s)) {
        *o += y;
    }
    out
}

/// Mode-0 part of `K10 a + K11 b`.
fn coupling_mean(solver: &CellSolver, chi: &[f64; 3], a: &[c64], b: &[c64]) -> [c64; 3] {
    let mut s = solver.g0(a);
    let xb = solver.x(chi, b);
    for (si, xi) in s.iter_mut().zip(&xb) {
        for p in 0..6 {
            si[p] += xi[p];
        }
    }
    let mean = solver.big_a_mean(&s);
    let col = solver.x_adj(chi, &solver.constant_strain(mean));
    let z = solver.lattice.zero_index();
    [col[3 * z], col[3 * z + 1], col[3 * z + 2]]
}

fn embed(solver: &CellSolver, c: &[c64; 3]) -> Vec<c64> {
    TorusField::constant(solver.lattice, *c).coeffs
}

fn norm3c(v: &[c64; 3]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Terms of the expansion `u = u0 + u1 + u2 + u0_1 + u1_1 + u2_1 + ...` of the
/// solution of `(|chi|^-2 A_chi - z) u = f`.
#[derive(Clone, Debug)]
pub struct ExpansionBundle {
    pub chi: Quasimomentum,
    pub z: c64,
    pub f: TorusField,
    pub u0: [c64; 3],
    pub u1: TorusField,
    pub u2: TorusField,
    pub u0_1: Option<[c64; 3]>,
    pub u1_1: Option<TorusField>,
    pub u2_1: Option<TorusField>,
    pub u_exact: Option<TorusField>,
    /// Relative compatibility residuals of the two cycles.
    pub compat: [f64; 2],
    /// `[L2, H1]` norms of `u_exact - (u0 + u1 + u2)`.
    pub residual_cycle1: Option<[f64; 2]>,
    /// Same after adding the second cycle.
    pub residual_cycle2: Option<[f64; 2]>,
}

impl ExpansionBundle {
    /// `u0 + u1 + u2`.
    pub fn partial_sum1(&self) -> TorusField {
        TorusField::constant(self.f.lattice, self.u0).add(&self.u1).add(&self.u2)
    }

    /// Cycle-1 sum plus `u0_1 + u1_1 + u2_1`.
    pub fn partial_sum2(&self) -> Option<TorusField> {
        let c = TorusField::constant(self.f.lattice, self.u0_1?);
        Some(self.partial_sum1().add(&c).add(self.u1_1.as_ref()?).add(self.u2_1.as_ref()?))
    }

    fn measure(&mut self) {
        if let Some(u) = &self.u_exact {
            let d1 = u.sub(&self.partial_sum1());
            self.residual_cycle1 = Some([d1.l2_norm(), d1.h1_norm()]);
            if let Some(s2) = self.partial_sum2() {
                let d2 = u.sub(&s2);
                self.residual_cycle2 = Some([d2.l2_norm(), d2.h1_norm()]);
            }
        }
    }

    /// `-[(K01 + K10) u2 + K11 (u1 + u2) - z |chi|^2 (u1 + u2)]`, the load left over
    /// after the first cycle.
    pub fn error_load(&self, solver: &CellSolver) -> TorusField {
        let chi2 = self.chi.norm().powi(2);
        let u12 = self.u1.add(&self.u2);
        let c = coupling(solver, &self.chi.0, &self.u2.coeffs, &u12.coeffs);
        let coeffs = c.iter().zip(&u12.coeffs).map(|(a, b)| -(a - self.z * chi2 * b)).collect();
        TorusField::from_coeffs(self.f.lattice, coeffs)
    }
}

/// First cycle: `u0` from the 3x3 homogenized system, `u1 = B u0`, `u2` from the
/// order-`|chi|^2` cell problem.
pub fn expand_cycle1(solver: &CellSolver, chi: &Quasimomentum, z: c64, f: &TorusField) -> Result<ExpansionBundle> {
    let chi2 = chi.norm().powi(2);
    if chi2 == 0.0 {
        return Err(Error::InvalidParameter("expansion needs chi != 0".into()));
    }
    let hom = fiber_hom_matrix(solver, chi)?;
    let rh = shifted_inverse(&m3_scale(&hom.matrix, 1.0 / chi2), z)?;
    let u0 = m3_vec(&rh, &f.mean());
    let u1 = solve_chi_cell(solver, chi, u0)?.field;
    let e0 = embed(solver, &u0);
    let c = coupling(solver, &chi.0, &u1.coeffs, &e0);
    let rhs: Vec<c64> = f.coeffs.iter().zip(&c).map(|(fi, ci)| chi2 * fi - ci).collect();
    // mode-0 part must vanish: K10 u1 + K11 u0 - z |chi|^2 u0 - |chi|^2 S f
    let cm = coupling_mean(solver, &chi.0, &u1.coeffs, &e0);
    let fm = f.mean();
    let defect: Vec<c64> = (0..3).map(|i| cm[i] - z * chi2 * u0[i] - chi2 * fm[i]).collect();
    let scale = chi2 * f.l2_norm().max(1e-300);
    let compat1 = crate::linalg::vec_norm(&defect) / scale;
    if compat1 > 1e-8 {
        return Err(Error::Compatibility { residual: compat1 });
    }
    let (u2, res) = solver.solve_perp(&rhs);
    if res > 1e-10 {
        return Err(Error::Numerical(format!("u2 solve residual {res:.3e}")));
    }
    Ok(ExpansionBundle {
        chi: *chi,
        z,
        f: f.clone(),
        u0,
        u1,
        u2: TorusField::from_coeffs(solver.lattice, u2),
        u0_1: None,
        u1_1: None,
        u2_1: None,
        u_exact: None,
        compat: [compat1, 0.0],
        residual_cycle1: None,
        residual_cycle2: None,
    })
}

/// Second cycle: constant `u0_1`, `u1_1 = B u0_1`, and `u2_1`.
pub fn expand_cycle2(solver: &CellSolver, mut b: ExpansionBundle) -> Result<ExpansionBundle> {
    let chi = b.chi;
    let chi2 = chi.norm().powi(2);
    let hom = fiber_hom_matrix(solver, &chi)?;
    let rh = shifted_inverse(&m3_scale(&hom.matrix, 1.0 / chi2), b.z)?;
    let t = coupling_mean(solver, &chi.0, &b.u2.coeffs, &b.u1.coeffs);
    let c1 = m3_vec(&rh, &t).map(|x| -x / chi2);
    let u1_1 = solve_chi_cell(solver, &chi, c1)?.field;
    let a = u1_1.add(&b.u2);
    let bb = TorusField::constant(solver.lattice, c1).add(&b.u1);
    let c = coupling(solver, &chi.0, &a.coeffs, &bb.coeffs);
    let rhs: Vec<c64> = c.iter().zip(&b.u1.coeffs).map(|(ci, u1)| -ci + b.z * chi2 * u1).collect();
    let cm = coupling_mean(solver, &chi.0, &a.coeffs, &bb.coeffs);
    let defect: Vec<c64> = (0..3).map(|i| cm[i] - b.z * chi2 * c1[i]).collect();
    let scale = chi2 * b.f.l2_norm().max(1e-300);
    let compat2 = crate::linalg::vec_norm(&defect) / scale;
    if compat2 > 1e-8 {
        return Err(Error::Compatibility { residual: compat2 });
    }
    let (u2_1, res) = solver.solve_perp(&rhs);
    if res > 1e-10 {
        return Err(Error::Numerical(format!("u2_1 solve residual {res:.3e}")));
    }
    b.u0_1 = Some(c1);
    b.u1_1 = Some(u1_1);
    b.u2_1 = Some(TorusField::from_coeffs(solver.lattice, u2_1));
    b.compat[1] = compat2;
    b.measure();
    Ok(b)
}

/// Both cycles plus the exact fiber solve and the residual norms.
pub fn expand_full(solver: &CellSolver, chi: &Quasimomentum, z: c64, f: &TorusField) -> Result<ExpansionBundle> {
    let b = expand_cycle1(solver, chi, z, f)?;
    let mut b = expand_cycle2(solver, b)?;
    let op = assemble_fiber(&solver.tr, chi);
    b.u_exact = Some(crate::fiber::fiber_resolvent(&op, z, f)?);
    b.measure();
    Ok(b)
}

/// The `z`-independent pieces of the corrector operators at one quasimomentum.
#[derive(Clone, Debug)]
pub struct ChiBlocks {
    pub chi: Quasimomentum,
    pub chi2: f64,
    /// `B_corr1,chi` as a `3N x 3` matrix: column `j` is the corrector `u_{e_j}`.
    pub b: Mat<c64>,
    /// `A_chi^hom`.
    pub a_hom: M3,
    /// The 3x3 matrix `L` entering the second-order corrector.
    pub l: M3,
    zero: usize,
}

impl ChiBlocks {
    pub fn new(solver: &CellSolver, chi: &Quasimomentum) -> Result<Self> {
        let chi2 = chi.norm().powi(2);
        if chi2 == 0.0 {
            return Err(Error::InvalidParameter("corrector blocks need chi != 0".into()));
        }
        let n = solver.lattice.dim();
        let mut b = Mat::<c64>::zeros(n, 3);
        let mut l = [[ZERO; 3]; 3];
        let mut cols = Vec::with_capacity(3);
        for j in 0..3 {
            let mut c = [ZERO; 3];
            c[j] = c64::new(1.0, 0.0);
            let u = solve_chi_cell(solver, chi, c)?.field;
            for i in 0..n {
                b[(i, j)] = u.coeffs[i];
            }
            cols.push((c, u));
        }
        for (j, (c, u)) in cols.iter().enumerate() {
            let e0 = embed(solver, c);
            // W' e_j = -P_perp((K01 + K10) B e_j + K11 e_j)
            let w = coupling(solver, &chi.0, &u.coeffs, &e0);
            let t2 = coupling_mean(solver, &chi.0, &vec![ZERO; n], &u.coeffs);
            for i in 0..3 {
                let bw: c64 = (0..n).map(|r| b[(r, i)].conj() * (-w[r])).sum();
                l[i][j] = bw - t2[i];
            }
        }
        let hom = fiber_hom_matrix(solver, chi)?;
        Ok(Self { chi: *chi, chi2, b, a_hom: hom.matrix, l, zero: solver.lattice.zero_index() })
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    /// `||B_corr1,chi||` as an operator from constants to `L2`.
    pub fn b_norm(&self) -> Result<f64> {
        spectral_norm(self.b.as_ref())
    }

    /// Corrector operators at spectral parameter `z`.
    pub fn corrector_ops(&self, z: c64) -> Result<CorrectorOps> {
        let rh = shifted_inverse(&m3_scale(&self.a_hom, 1.0 / self.chi2), z)?;
        let lead = m3_scale(&m3_mul(&m3_mul(&rh, &self.l), &rh), 1.0 / self.chi2);
        Ok(self.assemble_ops(rh, lead, rh))
    }

    /// `R_corr,k,eps` through the closed-form functional calculus with
    /// `g(z) = (|chi|^2 eps^(-gamma-2) z + 1)^-1`. The second corrector vanishes
    /// when `chi` is outside the contour box.
    pub fn rescaled(&self, eps: f64, gamma: f64, in_box: bool) -> Result<CorrectorOps> {
        if gamma <= -2.0 || eps <= 0.0 {
            return Err(Error::InvalidParameter(format!("need gamma > -2 and eps > 0, got {gamma}, {eps}")));
        }
        let s = eps.powf(-gamma - 2.0);
        let y = m3_inverse(&m3_add(&m3_scale(&self.a_hom, s), &m3_identity(), c64::new(1.0, 0.0)))?;
        if in_box {
            let lead = m3_scale(&m3_mul(&m3_mul(&y, &self.l), &y), s);
            Ok(self.assemble_ops(y, lead, y))
        } else {
            Ok(self.assemble_ops(y, [[ZERO; 3]; 3], [[ZERO; 3]; 3]))
        }
    }

    fn assemble_ops(&self, rh: M3, lead: M3, q: M3) -> CorrectorOps {
        let n = self.dim();
        // second corrector row block: lead S + q B^* S_perp (B vanishes at mode 0)
        let mut r2 = Mat::<c64>::zeros(3, n);
        for i in 0..3 {
            for col in 0..n {
                let mut s = ZERO;
                for a in 0..3 {
                    s += q[i][a] * self.b[(col, a)].conj();
                }
                r2[(i, col)] = s;
            }
            for a in 0..3 {
                r2[(i, 3 * self.zero + a)] += lead[i][a];
            }
        }
        CorrectorOps { rh, b: self.b.clone(), r2, zero: self.zero }
    }
}

/// `R_corr1 = B R_h S` and `R_corr2 = E0 r2`, plus `R_h`.
#[derive(Clone, Debug)]
pub struct CorrectorOps {
    pub rh: M3,
    pub b: Mat<c64>,
    /// `3 x 3N` row block of the second corrector (its image is the constants).
    pub r2: Mat<c64>,
    zero: usize,
}

impl CorrectorOps {
    pub fn apply_r1(&self, f: &TorusField) -> TorusField {
        let c = m3_vec(&self.rh, &f.mean());
        let n = self.b.nrows();
        let coeffs = (0..n).map(|i| (0..3).map(|a| self.b[(i, a)] * c[a]).sum()).collect();
        TorusField::from_coeffs(f.lattice, coeffs)
    }

    pub fn apply_r2(&self, f: &TorusField) -> [c64; 3] {
        let mut out = [ZERO; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..f.coeffs.len()).map(|c| self.r2[(i, c)] * f.coeffs[c]).sum();
        }
        out
    }

    /// `R_h S f`.
    pub fn apply_hom(&self, f: &TorusField) -> [c64; 3] {
        m3_vec(&self.rh, &f.mean())
    }

    /// Dense `E0 R_h S + R_corr1 (+ R_corr2)`.
    pub fn dense(&self, with_second: bool) -> Mat<c64> {
        let n = self.b.nrows();
        let z = self.zero;
        let mut m = Mat::<c64>::zeros(n, n);
        for a in 0..3 {
            for c in 0..3 {
                m[(3 * z + a, 3 * z + c)] += self.rh[a][c];
            }
        }
        for i in 0..n {
            for c in 0..3 {
                let s: c64 = (0..3).map(|a| self.b[(i, a)] * self.rh[a][c]).sum();
                m[(i, 3 * z + c)] += s;
            }
        }
        if with_second {
            for a in 0..3 {
                for col in 0..n {
                    m[(3 * z + a, col)] += self.r2[(a, col)];
                }
            }
        }
        m
    }
}

/// `g_{eps,chi}(z) = (|chi|^2 eps^(-gamma-2) z + 1)^-1`.
pub fn g_eps(chi2: f64, eps: f64, gamma: f64, z: c64) -> c64 {
    c64::new(1.0, 0.0) / (z * (chi2 * eps.powf(-gamma - 2.0)) + 1.0)
}

/// Rectangle `[a, b] x [-h, h]` in the right half-plane, traversed counterclockwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub a: f64,
    pub b: f64,
    pub h: f64,
    /// Smallest observed distance from the contour to either rescaled spectrum.
    pub rho0: f64,
    /// Half-width of the quasimomentum box the contour is valid for.
    pub mu_nbhd: f64,
    #[serde(skip)]
    pub nodes: Vec<c64>,
    /// `dz` weights, so `int F dz ~ sum w_i F(z_i)`.
    #[serde(skip)]
    pub weights: Vec<c64>,
}

impl Contour {
    /// Rectangle with `per_side` Gauss-Legendre nodes on each edge.
    pub fn rectangle(a: f64, b: f64, h: f64, per_side: usize) -> Result<Self> {
        if !(a > 0.0 && b > a && h > 0.0) {
            return Err(Error::Contour(format!("degenerate rectangle a={a}, b={b}, h={h}")));
        }
        let (x, w) = gauss_legendre(per_side);
        let corners = [c64::new(a, -h), c64::new(b, -h), c64::new(b, h), c64::new(a, h)];
        let mut nodes = Vec::with_capacity(4 * per_side);
        let mut weights = Vec::with_capacity(4 * per_side);
        for s in 0..4 {
            let (p, q) = (corners[s], corners[(s + 1) % 4]);
            let mid = (p + q) * 0.5;
            let half = (q - p) * 0.5;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(mid + half * *xi);
                weights.push(half * *wi);
            }
        }
        Ok(Self { a, b, h, rho0: f64::NAN, mu_nbhd: f64::NAN, nodes, weights })
    }

    /// Distance from a real point to the boundary.
    pub fn distance(&self, x: f64) -> f64 {
        if x > self.a && x < self.b {
            (x - self.a).min(self.b - x).min(self.h)
        } else {
            let dx = if x <= self.a { self.a - x } else { x - self.b };
            dx
        }
    }

    pub fn encloses(&self, x: f64) -> bool {
        x > self.a && x < self.b
    }

    /// Midpoints of the four sides.
    pub fn side_midpoints(&self) -> [c64; 4] {
        let m = 0.5 * (self.a + self.b);
        [c64::new(m, -self.h), c64::new(self.b, 0.0), c64::new(m, self.h), c64::new(self.a, 0.0)]
    }

    pub fn in_box(&self, chi: &Quasimomentum) -> bool {
        chi.0.iter().all(|x| x.abs() <= self.mu_nbhd)
    }

    /// `-(2 pi i)^-1 sum_i w_i g(z_i) F(z_i)`.
    pub fn integrate<F>(&self, g: impl Fn(c64) -> c64, mut f: F) -> Result<Mat<c64>>
    where
        F: FnMut(c64) -> Result<Mat<c64>>,
    {
        let mut acc: Option<Mat<c64>> = None;
        for (z, w) in self.nodes.iter().zip(&self.weights) {
            let m = f(*z)?;
            let s = g(*z) * *w;
            match acc.as_mut() {
                None => acc = Some(Mat::from_fn(m.nrows(), m.ncols(), |i, j| s * m[(i, j)])),
                Some(a) => {
                    for j in 0..m.ncols() {
                        for i in 0..m.nrows() {
                            a[(i, j)] += s * m[(i, j)];
                        }
                    }
                }
            }
        }
        // -1 / (2 pi i) = i / (2 pi)
        let fac = c64::new(0.0, 1.0 / (2.0 * std::f64::consts::PI));
        let mut a = acc.unwrap_or_else(|| Mat::zeros(0, 0));
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                a[(i, j)] *= fac;
            }
        }
        Ok(a)
    }
}

/// Build the contour from the lowest fiber and homogenized eigenvalues over a
/// sample of quasimomenta in `[-mu, mu]^3 \ {0}`.
pub fn build_contour(solver: &CellSolver, chis: &[Quasimomentum], cache: Option<&SpectrumCache>) -> Result<Contour> {
    if chis.is_empty() || chis.iter().any(|c| c.norm() == 0.0) {
        return Err(Error::InvalidParameter("contour needs a nonempty grid without chi = 0".into()));
    }
    let data: Vec<(Vec<f64>, Vec<f64>, f64)> = chis
        .par_iter()
        .map(|chi| {
            let vals = match cache {
                Some(c) => (*c.eigenvalues(&solver.tr, chi)?).clone(),
                None => assemble_fiber(&solver.tr, chi).eigenvalues()?,
            };
            let hom = fiber_hom_matrix(solver, chi)?.eigenvalues();
            Ok((vals, hom, chi.norm().powi(2)))
        })
        .collect::<Result<_>>()?;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (v, h, c2) in &data {
        lo = lo.min(v[0].min(h[0]) / c2);
        hi = hi.max(v[2].max(h[2]) / c2);
    }
    let a = 0.5 * lo;
    let b = 2.0 * hi;
    for (v, _, c2) in &data {
        if v[3] / c2 < 2.0 * b {
            return Err(Error::Contour(format!(
                "fourth eigenvalue {:.3e} below 2b = {:.3e}; shrink mu_nbhd",
                v[3] / c2,
                2.0 * b
            )));
        }
    }
    let mut c = Contour::rectangle(a, b, a, 64)?;
    let mut rho0 = f64::INFINITY;
    for (v, h, c2) in &data {
        for x in v.iter().take(4).chain(h.iter()) {
            rho0 = rho0.min(c.distance(x / c2));
        }
    }
    c.rho0 = rho0;
    c.mu_nbhd = chis.iter().map(|q| q.0.iter().fold(0.0f64, |m, x| m.max(x.abs()))).fold(0.0, f64::max);
    Ok(c)
}

/// Rescaled correctors by closed form and, optionally, by contour quadrature.
#[derive(Clone, Debug)]
pub struct RescaledCorrectors {
    pub ops: CorrectorOps,
    /// Max entry difference between closed form and quadrature for `R_corr1_eps`
    /// and `R_corr2_eps`, when checked.
    pub contour_defect: Option<[f64; 2]>,
}

pub fn rescaled_correctors(
    blocks: &ChiBlocks,
    eps: f64,
    gamma: f64,
    contour: &Contour,
    check: bool,
) -> Result<RescaledCorrectors> {
    let in_box = contour.in_box(&blocks.chi);
    let ops = blocks.rescaled(eps, gamma, in_box)?;
    let mut defect = None;
    if check && in_box {
        let g = |z: c64| g_eps(blocks.chi2, eps, gamma, z);
        let n = blocks.dim();
        let q1 = contour.integrate(g, |z| {
            let o = blocks.corrector_ops(z)?;
            Ok(Mat::from_fn(n, 3, |i, c| (0..3).map(|a| o.b[(i, a)] * o.rh[a][c]).sum()))
        })?;
        let q2 = contour.integrate(g, |z| Ok(blocks.corrector_ops(z)?.r2))?;
        let mut d1: f64 = 0.0;
        for i in 0..n {
            for c in 0..3 {
                let direct: c64 = (0..3).map(|a| ops.b[(i, a)] * ops.rh[a][c]).sum();
                d1 = d1.max((direct - q1[(i, c)]).norm());
            }
        }
        let mut d2: f64 = 0.0;
        for i in 0..3 {
            for c in 0..n {
                d2 = d2.max((ops.r2[(i, c)] - q2[(i, c)]).norm());
            }
        }
        defect = Some([d1, d2]);
    }
    Ok(RescaledCorrectors { ops, contour_defect: defect })
}

/// One row of a rate table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub scale: f64,
    pub err_l2l2: f64,
    pub err_l2h1: f64,
    pub err_withcorr: f64,
}

/// Fitted log-log slopes of a rate table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slopes {
    pub l2l2: Option<f64>,
    pub l2h1: Option<f64>,
    pub withcorr: Option<f64>,
}

pub fn fit_slopes(rows: &[RateRow]) -> Slopes {
    let x: Vec<f64> = rows.iter().map(|r| r.scale).collect();
    let col = |f: fn(&RateRow) -> f64| loglog_slope(&x, &rows.iter().map(f).collect::<Vec<_>>(), 1e-13);
    Slopes { l2l2: col(|r| r.err_l2l2), l2h1: col(|r| r.err_l2h1), withcorr: col(|r| r.err_withcorr) }
}

/// Rate table for one spectral parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberRateTable {
    pub z: [f64; 2],
    pub rows: Vec<RateRow>,
    pub slopes: Slopes,
}

/// Operator norms along `chi = 2^-j theta`: rows hold `|chi|`, the `L2 -> L2` and
/// `L2 -> H1` norms of `(|chi|^-2 A_chi - z)^-1 - R_h S`, and the `L2 -> H1` norm
/// after subtracting both corrector operators as well.
pub fn fiber_rate_study(solver: &CellSolver, theta: [f64; 3], js: &[i32], zs: &[c64]) -> Result<Vec<FiberRateTable>> {
    let tn = norm3(&theta);
    if (tn - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("direction must be a unit vector, |theta| = {tn}")));
    }
    let lattice = solver.lattice;
    let n = lattice.dim();
    let weight: Vec<f64> = (0..n)
        .map(|i| {
            let w = lattice.wave(i / 3);
            (1.0 + w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt()
        })
        .collect();
    let per_chi: Vec<Vec<RateRow>> = js
        .par_iter()
        .map(|&j| {
            let s = 2f64.powi(-j);
            let chi = Quasimomentum(theta.map(|t| s * t));
            let chi2 = s * s;
            let op = assemble_fiber(&solver.tr, &chi);
            let e = op.eigen_refined()?;
            let (vals, vecs) = (e.values, e.vectors);
            let blocks = ChiBlocks::new(solver, &chi)?;
            zs.iter()
                .map(|&z| {
                    let d = crate::fiber::dist_to_spectrum(&vals, chi2, z);
                    if d < 1e-8 {
                        return Err(Error::NearSpectrum { distance: d });
                    }
                    let scaled = Mat::from_fn(n, n, |i, c| vecs[(i, c)] / (c64::new(vals[c] / chi2, 0.0) - z));
                    let r = &scaled * vecs.adjoint();
                    let ops = blocks.corrector_ops(z)?;
                    let p0 = {
                        let mut m = Mat::<c64>::zeros(n, n);
                        let zi = lattice.zero_index();
                        for a in 0..3 {
                            for c in 0..3 {
                                m[(3 * zi + a, 3 * zi + c)] = ops.rh[a][c];
                            }
                        }
                        m
                    };
                    let d0 = &r - &p0;
                    let d2 = &r - ops.dense(true);
                    let err_l2l2 = spectral_norm(d0.as_ref())?;
                    let err_l2h1 = weighted_norm(&d0, &weight)?;
                    let err_withcorr = weighted_norm(&d2, &weight)?;
                    Ok(RateRow { scale: s, err_l2l2, err_l2h1, err_withcorr })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(zs
        .iter()
        .enumerate()
        .map(|(zi, z)| {
            let rows: Vec<RateRow> = per_chi.iter().map(|v| v[zi].clone()).collect();
            let slopes = fit_slopes(&rows);
            FiberRateTable { z: [z.re, z.im], rows, slopes }
        })
        .collect())
}

/// `||W D||` with `W = diag(weight)`, through `lambda_max((WD)^* (WD))`.
fn weighted_norm(d: &Mat<c64>, weight: &[f64]) -> Result<f64> {
    let wd = Mat::from_fn(d.nrows(), d.ncols(), |i, j| d[(i, j)] * weight[i]);
    let g = wd.adjoint() * &wd;
    Ok(herm_lambda_max(g.as_ref())?.max(0.0).sqrt())
}

/// Measured sizes of the expansion terms along a dyadic ray.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundStudy {
    pub scales: Vec<f64>,
    /// Per scale: `|u0|, ||u1||_H1, ||u2||_H1, |u0_1|, ||u1_1||_H1, ||u2_1||_H1`.
    pub sizes: Vec<[f64; 6]>,
    /// Fitted slopes for the same six quantities.
    pub slopes: Vec<Option<f64>>,
    /// Largest compatibility residual seen.
    pub max_compat: f64,
    /// Largest `||B_corr1,chi|| / |chi|`.
    pub b_over_chi: f64,
}

pub fn expansion_bound_study(solver: &CellSolver, theta: [f64; 3], js: &[i32], z: c64, f: &TorusField) -> Result<BoundStudy> {
    let out: Vec<(f64, [f64; 6], f64, f64)> = js
        .par_iter()
        .map(|&j| {
            let s = 2f64.powi(-j);
            let chi = Quasimomentum(theta.map(|t| s * t));
            let b = expand_cycle2(solver, expand_cycle1(solver, &chi, z, f)?)?;
            let sizes = [
                norm3c(&b.u0),
                b.u1.h1_norm(),
                b.u2.h1_norm(),
                norm3c(&b.u0_1.unwrap()),
                b.u1_1.as_ref().unwrap().h1_norm(),
                b.u2_1.as_ref().unwrap().h1_norm(),
            ];
            let bn = ChiBlocks::new(solver, &chi)?.b_norm()? / s;
            Ok((s, sizes, b.compat[0].max(b.compat[1]), bn))
        })
        .collect::<Result<_>>()?;
    let scales: Vec<f64> = out.iter().map(|o| o.0).collect();
    let sizes: Vec<[f64; 6]> = out.iter().map(|o| o.1).collect();
    let slopes = (0..6)
        .map(|q| loglog_slope(&scales, &sizes.iter().map(|s| s[q]).collect::<Vec<_>>(), 1e-300))
        .collect();
    Ok(BoundStudy {
        scales,
        sizes,
        slopes,
        max_compat: out.iter().map(|o| o.2).fold(0.0, f64::max),
        b_over_chi: out.iter().map(|o| o.3).fold(0.0, f64::max),
    })
}
