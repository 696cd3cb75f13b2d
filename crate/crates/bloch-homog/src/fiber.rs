//! The Bloch fiber operator `A_chi = (sym grad + i X_chi)^* A (sym grad + i X_chi)`
//! on the truncated lattice, its spectrum and resolvent.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use faer::linalg::solvers::Solve;
use faer::{c64, Mat};

use crate::error::{Error, Result};
use crate::linalg::{herm_eig, herm_eigvals, vec_norm, ZERO};
use crate::tensor::{check_coefficients, sym_outer_voigt, CoefficientField};
use crate::torus::{Lattice, Quasimomentum, TorusField};

pub type V6 = [[c64; 6]; 6];

/// How the Fourier coefficients of the voxel field are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quadrature {
    /// Exact integrals of the piecewise-constant field against each exponential.
    Exact,
    /// Midpoint samples on a `grid^3` lattice (pseudospectral); needs `grid >= 4K + 1`.
    Midpoint { grid: usize },
}

/// Fourier coefficients `A_hat(m) = int_Y A(y) exp(-2 pi i m.y) dy` of the Voigt
/// matrix field for `|m_i| <= 2K`.
#[derive(Clone, Debug)]
pub struct CoefficientTransform {
    pub lattice: Lattice,
    pub hash: String,
    pub nu: f64,
    pub homogeneous: bool,
    table: Vec<V6>,
}

impl CoefficientTransform {
    pub fn new(field: &CoefficientField, k: usize, quad: Quadrature) -> Result<Self> {
        let cert = check_coefficients(field);
        if cert.symmetry_defect > 1e-10 {
            return Err(Error::CoefficientCheck { defect: cert.symmetry_defect, tol: 1e-10 });
        }
        let span = 2 * k;
        let side = 2 * span + 1;
        let voigt: Vec<[[f64; 6]; 6]> = field.voxels.iter().map(|v| v.voigt()).collect();
        let table = match quad {
            Quadrature::Exact => {
                let kernels: Vec<Vec<c64>> = (0..3).map(|d| exact_kernel(span, field.dims[d])).collect();
                separable_dft(&voigt, field.dims, &kernels, side)
            }
            Quadrature::Midpoint { grid } => {
                if grid < 2 * span + 1 {
                    return Err(Error::AliasingBudget { grid, k, need: 2 * span + 1 });
                }
                let mut samples = Vec::with_capacity(grid.pow(3));
                for a in 0..grid {
                    for b in 0..grid {
                        for c in 0..grid {
                            let y = [(a as f64 + 0.5) / grid as f64, (b as f64 + 0.5) / grid as f64, (c as f64 + 0.5) / grid as f64];
                            samples.push(field.at(y).voigt());
                        }
                    }
                }
                let kern = midpoint_kernel(span, grid);
                separable_dft(&samples, [grid; 3], &[kern.clone(), kern.clone(), kern], side)
            }
        };
        Ok(Self { lattice: Lattice::new(k), hash: field.hash(), nu: cert.nu_estimate, homogeneous: field.is_homogeneous(), table })
    }

    pub fn k(&self) -> usize {
        self.lattice.k
    }

    /// `A_hat(m)`, `|m_i| <= 2K`.
    pub fn get(&self, m: [i64; 3]) -> &V6 {
        let span = 2 * self.lattice.k as i64;
        let side = 2 * span + 1;
        debug_assert!(m.iter().all(|x| x.abs() <= span));
        &self.table[(((m[0] + span) * side + (m[1] + span)) * side + (m[2] + span)) as usize]
    }

    pub fn mean(&self) -> [[f64; 6]; 6] {
        let a = self.get([0, 0, 0]);
        let mut out = [[0.0; 6]; 6];
        for i in 0..6 {
            for j in 0..6 {
                out[i][j] = a[i][j].re;
            }
        }
        out
    }

    fn diff(&self, l: usize, k: usize) -> &V6 {
        let a = self.lattice.mode(l);
        let b = self.lattice.mode(k);
        self.get([a[0] - b[0], a[1] - b[1], a[2] - b[2]])
    }
}

/// Row `m` of the 1D kernel holds `int_{v/n}^{(v+1)/n} exp(-2 pi i m y) dy` for each voxel `v`.
fn exact_kernel(span: usize, n: usize) -> Vec<c64> {
    let side = 2 * span + 1;
    let mut out = vec![ZERO; side * n];
    for (r, m) in (-(span as i64)..=span as i64).enumerate() {
        for v in 0..n {
            out[r * n + v] = if m == 0 {
                c64::new(1.0 / n as f64, 0.0)
            } else {
                let w = 2.0 * PI * m as f64;
                let e0 = c64::from_polar(1.0, -w * v as f64 / n as f64);
                let e1 = c64::from_polar(1.0, -w * (v + 1) as f64 / n as f64);
                (e0 - e1) / c64::new(0.0, w)
            };
        }
    }
    out
}

fn midpoint_kernel(span: usize, g: usize) -> Vec<c64> {
    let side = 2 * span + 1;
    let mut out = vec![ZERO; side * g];
    for (r, m) in (-(span as i64)..=span as i64).enumerate() {
        for j in 0..g {
            let y = (j as f64 + 0.5) / g as f64;
            out[r * g + j] = c64::from_polar(1.0 / g as f64, -2.0 * PI * m as f64 * y);
        }
    }
    out
}

/// Contract a `dims` grid of Voigt matrices with one kernel per axis.
fn separable_dft(data: &[[[f64; 6]; 6]], dims: [usize; 3], kern: &[Vec<c64>], side: usize) -> Vec<V6> {
    let [n1, n2, n3] = dims;
    // axis 3
    let mut s3 = vec![[[ZERO; 6]; 6]; n1 * n2 * side];
    for a in 0..n1 {
        for b in 0..n2 {
            for r in 0..side {
                let acc = &mut s3[(a * n2 + b) * side + r];
                for c in 0..n3 {
                    let w = kern[2][r * n3 + c];
                    let v = &data[(a * n2 + b) * n3 + c];
                    for i in 0..6 {
                        for j in 0..6 {
                            acc[i][j] += w * v[i][j];
                        }
                    }
                }
            }
        }
    }
    // axis 2
    let mut s2 = vec![[[ZERO; 6]; 6]; n1 * side * side];
    for a in 0..n1 {
        for r2 in 0..side {
            for r3 in 0..side {
                let mut acc = [[ZERO; 6]; 6];
                for b in 0..n2 {
                    let w = kern[1][r2 * n2 + b];
                    let v = &s3[(a * n2 + b) * side + r3];
                    for i in 0..6 {
                        for j in 0..6 {
                            acc[i][j] += w * v[i][j];
                        }
                    }
                }
                s2[(a * side + r2) * side + r3] = acc;
            }
        }
    }
    // axis 1
    let mut out = vec![[[ZERO; 6]; 6]; side * side * side];
    for r1 in 0..side {
        for r2 in 0..side {
            for r3 in 0..side {
                let mut acc = [[ZERO; 6]; 6];
                for a in 0..n1 {
                    let w = kern[0][r1 * n1 + a];
                    let v = &s2[(a * side + r2) * side + r3];
                    for i in 0..6 {
                        for j in 0..6 {
                            acc[i][j] += w * v[i][j];
                        }
                    }
                }
                out[(r1 * side + r2) * side + r3] = acc;
            }
        }
    }
    out
}

/// Per-mode 6x3 strain symbols `B(2 pi k + chi)`.
pub fn strain_symbols(lattice: &Lattice, chi: &[f64; 3]) -> Vec<[[f64; 3]; 6]> {
    (0..lattice.n_modes()).map(|n| sym_outer_voigt(lattice.shifted_wave(n, chi))).collect()
}

/// `B_l^T A B_k` for 6x3 real symbols and a complex 6x6 block.
pub fn sandwich(bl: &[[f64; 3]; 6], a: &V6, bk: &[[f64; 3]; 6]) -> [[c64; 3]; 3] {
    let mut tmp = [[ZERO; 3]; 6];
    for p in 0..6 {
        for j in 0..3 {
            let mut s = ZERO;
            for q in 0..6 {
                if bk[q][j] != 0.0 {
                    s += a[p][q] * bk[q][j];
                }
            }
            tmp[p][j] = s;
        }
    }
    let mut out = [[ZERO; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = ZERO;
            for p in 0..6 {
                if bl[p][i] != 0.0 {
                    s += bl[p][i] * tmp[p][j];
                }
            }
            out[i][j] = s;
        }
    }
    out
}

/// Dense Galerkin matrix of the form `a_chi` on the truncated lattice.
#[derive(Clone, Debug)]
pub struct FiberOperator {
    pub chi: Quasimomentum,
    pub lattice: Lattice,
    pub coeffs_hash: String,
    pub matrix: Mat<c64>,
}

/// Assemble `H[l,k] = B(q_l)^T A_hat(l - k) B(q_k)` with `q = 2 pi k + chi`.
pub fn assemble_fiber(tr: &CoefficientTransform, chi: &Quasimomentum) -> FiberOperator {
    let l = tr.lattice;
    let n = l.n_modes();
    let syms = strain_symbols(&l, &chi.0);
    let mut h = Mat::<c64>::zeros(3 * n, 3 * n);
    for a in 0..n {
        for b in 0..=a {
            let blk = sandwich(&syms[a], tr.diff(a, b), &syms[b]);
            for i in 0..3 {
                for j in 0..3 {
                    h[(3 * a + i, 3 * b + j)] = blk[i][j];
                    if a != b {
                        h[(3 * b + j, 3 * a + i)] = blk[i][j].conj();
                    }
                }
            }
        }
    }
    // exact Hermitian symmetry on the diagonal blocks
    for a in 0..n {
        for i in 0..3 {
            for j in 0..i {
                let x = 0.5 * (h[(3 * a + i, 3 * a + j)] + h[(3 * a + j, 3 * a + i)].conj());
                h[(3 * a + i, 3 * a + j)] = x;
                h[(3 * a + j, 3 * a + i)] = x.conj();
            }
            let d = h[(3 * a + i, 3 * a + i)].re;
            h[(3 * a + i, 3 * a + i)] = c64::new(d, 0.0);
        }
    }
    FiberOperator { chi: *chi, lattice: l, coeffs_hash: tr.hash.clone(), matrix: h }
}

/// Convenience wrapper: certificate check, transform, assembly.
pub fn assemble_fiber_from_field(field: &CoefficientField, chi: &Quasimomentum, k: usize) -> Result<FiberOperator> {
    let tr = CoefficientTransform::new(field, k, Quadrature::Exact)?;
    Ok(assemble_fiber(&tr, chi))
}

impl FiberOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn hermitian_defect(&self) -> f64 {
        let n = self.dim();
        let mut d: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                d = d.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        d
    }

    pub fn apply(&self, u: &TorusField) -> TorusField {
        let n = self.dim();
        let mut out = vec![ZERO; n];
        for j in 0..n {
            let x = u.coeffs[j];
            if x == ZERO {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.matrix[(i, j)] * x;
            }
        }
        TorusField::from_coeffs(self.lattice, out)
    }

    /// `a_chi(u, v)`.
    pub fn form(&self, u: &TorusField, v: &TorusField) -> c64 {
        v.inner(&self.apply(u))
    }

    pub fn eigen(&self) -> Result<FiberEigen> {
        let (values, vectors) = herm_eig(self.matrix.as_ref())?;
        Ok(FiberEigen { chi: self.chi, lattice: self.lattice, values, vectors })
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        herm_eigvals(self.matrix.as_ref())
    }

    /// Dense eigendecomposition with the three lowest pairs redone by Rayleigh-Ritz.
    ///
    /// A dense solver gets small eigenvalues only to `~1e-16 ||A||` absolutely; for
    /// `lambda ~ |chi|^2` that is a poor relative accuracy. The projected 3x3 matrix
    /// `V^* A V` is evaluated from matrix-vector products whose terms are all of the
    /// size of the result, so its eigenvalues are accurate relative to `|chi|^2`.
    pub fn eigen_refined(&self) -> Result<FiberEigen> {
        let mut e = self.eigen()?;
        let n = self.dim();
        let m = 3.min(n);
        let low = e.vectors.as_ref().subcols(0, m).to_owned();
        let av = &self.matrix * &low;
        let proj = low.adjoint() * &av;
        let herm = Mat::from_fn(m, m, |i, j| 0.5 * (proj[(i, j)] + proj[(j, i)].conj()));
        let (vals, rot) = herm_eig(herm.as_ref())?;
        let rotated = &low * &rot;
        for j in 0..m {
            e.values[j] = vals[j];
            for i in 0..n {
                e.vectors[(i, j)] = rotated[(i, j)];
            }
        }
        Ok(e)
    }

    pub fn norm_estimate(&self) -> f64 {
        crate::linalg::frob(self.matrix.as_ref())
    }
}

/// Full eigendecomposition of one fiber.
#[derive(Clone, Debug)]
pub struct FiberEigen {
    pub chi: Quasimomentum,
    pub lattice: Lattice,
    pub values: Vec<f64>,
    pub vectors: Mat<c64>,
}

/// Leading part of the spectrum with the rank-3 low projector.
#[derive(Clone, Debug)]
pub struct FiberSpectrum {
    pub chi: Quasimomentum,
    pub values: Vec<f64>,
    pub vectors: Vec<TorusField>,
    /// Orthonormal basis (3 columns) of the range of `P_chi`.
    pub low_basis: Mat<c64>,
    pub max_residual: f64,
}

impl FiberSpectrum {
    /// `P_chi u`.
    pub fn project_low(&self, u: &TorusField) -> TorusField {
        let n = self.low_basis.nrows();
        let mut out = vec![ZERO; n];
        for c in 0..3 {
            let coef: c64 = (0..n).map(|i| self.low_basis[(i, c)].conj() * u.coeffs[i]).sum();
            for (i, o) in out.iter_mut().enumerate() {
                *o += coef * self.low_basis[(i, c)];
            }
        }
        TorusField::from_coeffs(u.lattice, out)
    }
}

/// First `count` eigenpairs with residual check `||A v - lambda v|| <= 1e-10 ||A||`.
pub fn fiber_spectrum(op: &FiberOperator, count: usize) -> Result<FiberSpectrum> {
    if count > op.dim() {
        return Err(Error::InvalidParameter(format!("requested {count} eigenpairs of a {}-dimensional operator", op.dim())));
    }
    let eig = op.eigen()?;
    let scale = op.norm_estimate().max(1e-300);
    let mut vectors = Vec::with_capacity(count);
    let mut max_residual: f64 = 0.0;
    for c in 0..count.max(3).min(op.dim()) {
        let v = TorusField::from_coeffs(op.lattice, crate::linalg::col_to_vec(eig.vectors.as_ref(), c));
        let av = op.apply(&v);
        let mut r = av.clone();
        r.axpy(c64::new(-eig.values[c], 0.0), &v);
        max_residual = max_residual.max(r.l2_norm() / scale);
        if c < count {
            vectors.push(v);
        }
    }
    if max_residual > 1e-10 {
        return Err(Error::Numerical(format!("eigen residual {max_residual:.3e} above 1e-10")));
    }
    let low_basis = eig.vectors.as_ref().subcols(0, 3.min(op.dim())).to_owned();
    Ok(FiberSpectrum { chi: op.chi, values: eig.values[..count].to_vec(), vectors, low_basis, max_residual })
}

/// Rayleigh-quotient band over a set of quasimomenta.
#[derive(Clone, Debug, PartialEq)]
pub struct RayleighBounds {
    /// `min lambda_1 / |chi|^2`.
    pub c_low: f64,
    /// `max lambda_3 / |chi|^2`.
    pub c_high: f64,
    /// `min lambda_4`.
    pub gap: f64,
    /// Per sample, the number of eigenvalues below `gap / 2`.
    pub counts_below_half_gap: Vec<usize>,
    /// Per sample, the four lowest eigenvalues.
    pub lowest: Vec<[f64; 4]>,
}

pub fn rayleigh_bounds(tr: &CoefficientTransform, chis: &[Quasimomentum], cache: Option<&SpectrumCache>) -> Result<RayleighBounds> {
    if chis.iter().any(|c| c.norm() == 0.0) {
        return Err(Error::InvalidParameter("rayleigh bounds need chi != 0".into()));
    }
    let mut c_low = f64::INFINITY;
    let mut c_high: f64 = 0.0;
    let mut gap = f64::INFINITY;
    let mut all = Vec::new();
    for chi in chis {
        let vals = match cache {
            Some(c) => c.eigenvalues(tr, chi)?,
            None => Arc::new(assemble_fiber(tr, chi).eigenvalues()?),
        };
        let n2 = chi.norm().powi(2);
        c_low = c_low.min(vals[0] / n2);
        c_high = c_high.max(vals[2] / n2);
        gap = gap.min(vals[3]);
        all.push(vals);
    }
    if !(c_low > 0.0) || !(gap > 0.0) {
        return Err(Error::Numerical(format!("Rayleigh band violated: c_low={c_low:.3e}, gap={gap:.3e}")));
    }
    let counts = all.iter().map(|v| v.iter().filter(|&&x| x < gap / 2.0).count()).collect();
    let lowest = all.iter().map(|v| [v[0], v[1], v[2], v[3]]).collect();
    Ok(RayleighBounds { c_low, c_high, gap, counts_below_half_gap: counts, lowest })
}

/// Distance from `z` to `{lambda_i / |chi|^2}`.
pub fn dist_to_spectrum(values: &[f64], chi2: f64, z: c64) -> f64 {
    values.iter().map(|l| (c64::new(l / chi2, 0.0) - z).norm()).fold(f64::INFINITY, f64::min)
}

/// Solve `(|chi|^-2 A_chi - z) u = f` by dense LU.
pub fn fiber_resolvent(op: &FiberOperator, z: c64, f: &TorusField) -> Result<TorusField> {
    let chi2 = op.chi.norm().powi(2);
    if chi2 == 0.0 {
        return Err(Error::InvalidParameter("rescaled resolvent needs chi != 0".into()));
    }
    let vals = op.eigenvalues()?;
    let d = dist_to_spectrum(&vals, chi2, z);
    if d < 1e-8 {
        return Err(Error::NearSpectrum { distance: d });
    }
    let n = op.dim();
    let m = Mat::from_fn(n, n, |i, j| op.matrix[(i, j)] / chi2 - if i == j { z } else { ZERO });
    let lu = m.partial_piv_lu();
    let rhs = crate::linalg::vec_to_col(&f.coeffs);
    let x = lu.solve(&rhs);
    let u = TorusField::from_coeffs(op.lattice, crate::linalg::col_to_vec(x.as_ref(), 0));
    // residual check
    let mut r = op.apply(&u).scaled(c64::new(1.0 / chi2, 0.0));
    r.axpy(-z, &u);
    let res = vec_norm(&r.sub(f).coeffs);
    if res > 1e-10 * f.l2_norm().max(1e-300) {
        return Err(Error::Numerical(format!("resolvent residual {res:.3e}")));
    }
    Ok(u)
}

/// Same solve through the eigendecomposition.
pub fn fiber_resolvent_eig(eig: &FiberEigen, z: c64, f: &TorusField) -> Result<TorusField> {
    let chi2 = eig.chi.norm().powi(2);
    let d = dist_to_spectrum(&eig.values, chi2, z);
    if d < 1e-8 {
        return Err(Error::NearSpectrum { distance: d });
    }
    let v = &eig.vectors;
    let n = v.nrows();
    let mut out = vec![ZERO; n];
    for c in 0..n {
        let coef: c64 = (0..n).map(|i| v[(i, c)].conj() * f.coeffs[i]).sum::<c64>() / (c64::new(eig.values[c] / chi2, 0.0) - z);
        for (i, o) in out.iter_mut().enumerate() {
            *o += coef * v[(i, c)];
        }
    }
    Ok(TorusField::from_coeffs(f.lattice, out))
}

/// Result of [`abstract_resolvent_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct AbstractCheck {
    /// Largest sampled `||u||_X / ||R||_X*`.
    pub worst_ratio: f64,
    /// `max{1, |z + 1| / dist(z, spectrum)}`.
    pub factor: f64,
    /// Explicit constant in `ratio <= C * factor`.
    pub constant: f64,
    /// Per-sample ratios.
    pub ratios: Vec<f64>,
}

impl AbstractCheck {
    pub fn holds(&self) -> bool {
        self.worst_ratio <= self.constant * self.factor * (1.0 + 1e-12)
    }
}

/// Sample the resolvent inequality for the rescaled operator `|chi|^-2 A_chi`.
///
/// Each functional is given by its Riesz representative `r` in
/// `X = (domain, ||(A^{1/2} + I) . ||)`, so `||R||_X* = ||r||_X` and the weak
/// problem reads `(A - z) u = (A^{1/2} + I)^2 r`. In the eigenbasis the ratio is
/// bounded by `max (sqrt(mu) + 1)^2 / |mu - z|`, which is at most
/// `4 max{1, |z + 1| / dist}`; the check uses `C = 4`.
pub fn abstract_resolvent_check(eig: &FiberEigen, z: c64, functionals: &[TorusField]) -> Result<AbstractCheck> {
    let chi2 = eig.chi.norm().powi(2);
    if chi2 == 0.0 {
        return Err(Error::InvalidParameter("abstract check needs chi != 0".into()));
    }
    let mu: Vec<f64> = eig.values.iter().map(|l| (l / chi2).max(0.0)).collect();
    let dist = mu.iter().map(|m| (c64::new(*m, 0.0) - z).norm()).fold(f64::INFINITY, f64::min);
    if dist < 1e-12 {
        return Err(Error::NearSpectrum { distance: dist });
    }
    let factor = 1f64.max((z + 1.0).norm() / dist);
    let v = &eig.vectors;
    let n = v.nrows();
    let mut ratios = Vec::with_capacity(functionals.len());
    for r in functionals {
        let mut num = 0.0;
        let mut den = 0.0;
        for c in 0..n {
            let rc: c64 = (0..n).map(|i| v[(i, c)].conj() * r.coeffs[i]).sum();
            let w = (mu[c].sqrt() + 1.0).powi(2);
            let uc = rc * w / (c64::new(mu[c], 0.0) - z);
            num += w * uc.norm_sqr();
            den += w * rc.norm_sqr();
        }
        ratios.push(if den == 0.0 { 0.0 } else { (num / den).sqrt() });
    }
    let worst_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(AbstractCheck { worst_ratio, factor, constant: 4.0, ratios })
}

type CacheKey = (String, [u64; 3], usize);

/// Thread-safe cache of fiber eigenvalues keyed by (coefficient hash, chi, K).
#[derive(Default)]
pub struct SpectrumCache {
    map: Mutex<HashMap<CacheKey, Arc<Vec<f64>>>>,
    hits: Mutex<usize>,
}

impl SpectrumCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn eigenvalues(&self, tr: &CoefficientTransform, chi: &Quasimomentum) -> Result<Arc<Vec<f64>>> {
        let key = (tr.hash.clone(), chi.0.map(f64::to_bits), tr.k());
        if let Some(v) = self.map.lock().unwrap().get(&key) {
            *self.hits.lock().unwrap() += 1;
            return Ok(v.clone());
        }
        let v = Arc::new(assemble_fiber(tr, chi).eigenvalues()?);
        self.map.lock().unwrap().insert(key, v.clone());
        Ok(v)
    }

    pub fn hits(&self) -> usize {
        *self.hits.lock().unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{make_isotropic, make_laminate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn iso() -> CoefficientField {
        CoefficientField::homogeneous(make_isotropic(1.0, 1.0).unwrap())
    }

    fn laminate() -> CoefficientField {
        make_laminate(make_isotropic(1.0, 1.0).unwrap(), make_isotropic(2.0, 2.0).unwrap(), 0.5, 1, 16).unwrap()
    }

    #[test]
    fn homogeneous_symbol_blocks() {
        let chi = Quasimomentum([0.3, -0.2, 0.1]);
        let op = assemble_fiber_from_field(&iso(), &chi, 2).unwrap();
        let l = op.lattice;
        for a in 0..l.n_modes() {
            let q = l.shifted_wave(a, &chi.0);
            let q2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2];
            for b in 0..l.n_modes() {
                for i in 0..3 {
                    for j in 0..3 {
                        let want = if a == b { (if i == j { q2 } else { 0.0 }) + 2.0 * q[i] * q[j] } else { 0.0 };
                        assert!((op.matrix[(3 * a + i, 3 * b + j)] - c64::new(want, 0.0)).norm() < 1e-11);
                    }
                }
            }
        }
    }

    #[test]
    fn kernel_at_zero_is_constants() {
        let op = assemble_fiber_from_field(&iso(), &Quasimomentum([0.0; 3]), 2).unwrap();
        let v = op.eigenvalues().unwrap();
        assert!(v[..3].iter().all(|x| x.abs() < 1e-12));
        assert!(v[3] > 1.0);
        let s = fiber_spectrum(&op, 3).unwrap();
        let z = op.lattice.zero_index();
        for c in 0..3 {
            let mut w = 0.0;
            for i in 0..3 {
                w += s.low_basis[(3 * z + i, c)].norm_sqr();
            }
            assert!((w - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn isotropic_spectrum_example() {
        let op = assemble_fiber_from_field(&iso(), &Quasimomentum([0.1, 0.0, 0.0]), 2).unwrap();
        let s = fiber_spectrum(&op, 4).unwrap();
        assert!((s.values[0] - 0.01).abs() < 1e-12);
        assert!((s.values[1] - 0.01).abs() < 1e-12);
        assert!((s.values[2] - 0.03).abs() < 1e-12);
        assert!((s.values[3] - (2.0 * PI - 0.1f64).powi(2)).abs() < 1e-9);
    }

    #[test]
    fn laminate_is_hermitian_psd() {
        let f = laminate();
        for chi in [[0.0; 3], [0.4, 0.1, -0.3]] {
            let op = assemble_fiber_from_field(&f, &Quasimomentum(chi), 2).unwrap();
            assert!(op.hermitian_defect() < 1e-12 * op.norm_estimate());
            let v = op.eigenvalues().unwrap();
            assert!(v[0] > -1e-12 * op.norm_estimate());
            if chi[0] != 0.0 {
                assert!(v[0] > 0.0);
            }
        }
    }

    #[test]
    fn midpoint_quadrature_and_aliasing_budget() {
        let f = laminate();
        assert!(matches!(CoefficientTransform::new(&f, 2, Quadrature::Midpoint { grid: 6 }), Err(Error::AliasingBudget { .. })));
        // a grid that is a multiple of the voxel grid samples every voxel exactly
        let e = CoefficientTransform::new(&f, 1, Quadrature::Exact).unwrap();
        let m = CoefficientTransform::new(&f, 1, Quadrature::Midpoint { grid: 64 }).unwrap();
        assert!((e.get([0, 0, 0])[0][0] - m.get([0, 0, 0])[0][0]).norm() < 1e-14);
        assert!((e.get([1, 0, 0])[0][0] - m.get([1, 0, 0])[0][0]).norm() < 1e-2);
    }

    /// Independent evaluation of the form for a field varying along y1 only:
    /// Gauss-Legendre per voxel slab in y1 and an aliasing-free uniform rule in y2, y3.
    fn quadrature_form(f: &CoefficientField, chi: &Quasimomentum, u: &TorusField, v: &TorusField) -> c64 {
        let l = u.lattice;
        let (gx, gw) = crate::linalg::gauss_legendre(12);
        let nt = 4 * l.k + 2;
        let n1 = f.dims[0];
        let strain = |w: &TorusField, y: [f64; 3]| -> [c64; 6] {
            let mut e = [ZERO; 6];
            for n in 0..l.n_modes() {
                let k = l.mode(n);
                let ph = c64::from_polar(1.0, 2.0 * PI * (k[0] as f64 * y[0] + k[1] as f64 * y[1] + k[2] as f64 * y[2]));
                let b = sym_outer_voigt(l.shifted_wave(n, &chi.0));
                for p in 0..6 {
                    for j in 0..3 {
                        e[p] += c64::new(0.0, 1.0) * b[p][j] * w.coeffs[3 * n + j] * ph;
                    }
                }
            }
            e
        };
        let mut total = ZERO;
        for s in 0..n1 {
            let a = f.voxel([s, 0, 0]).voigt();
            for (x, w) in gx.iter().zip(&gw) {
                let y1 = (s as f64 + 0.5 * (x + 1.0)) / n1 as f64;
                let wy = w * 0.5 / n1 as f64;
                for j2 in 0..nt {
                    for j3 in 0..nt {
                        let y = [y1, j2 as f64 / nt as f64, j3 as f64 / nt as f64];
                        let eu = strain(u, y);
                        let ev = strain(v, y);
                        let mut acc = ZERO;
                        for p in 0..6 {
                            for q in 0..6 {
                                acc += ev[p].conj() * a[p][q] * eu[q];
                            }
                        }
                        total += acc * wy / (nt * nt) as f64;
                    }
                }
            }
        }
        total
    }

    #[test]
    fn laminate_form_matches_quadrature() {
        let f = make_laminate(make_isotropic(1.0, 1.0).unwrap(), make_isotropic(2.0, 2.0).unwrap(), 0.5, 1, 4).unwrap();
        let chi = Quasimomentum([0.2, -0.1, 0.3]);
        let op = assemble_fiber_from_field(&f, &chi, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let u = TorusField::random(op.lattice, &mut rng);
            let v = TorusField::random(op.lattice, &mut rng);
            let a = op.form(&u, &v);
            let b = quadrature_form(&f, &chi, &u, &v);
            assert!((a - b).norm() < 1e-10 * a.norm().max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn resolvent_paths_agree() {
        let f = laminate();
        let chi = Quasimomentum([0.2, 0.1, 0.0]);
        let op = assemble_fiber_from_field(&f, &chi, 1).unwrap();
        let eig = op.eigen().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = TorusField::random(op.lattice, &mut rng);
        for z in [c64::new(-1.0, 0.0), c64::new(0.5, 0.5)] {
            let a = fiber_resolvent(&op, z, &g).unwrap();
            let b = fiber_resolvent_eig(&eig, z, &g).unwrap();
            assert!(a.sub(&b).l2_norm() < 1e-11 * a.l2_norm());
            let d = dist_to_spectrum(&eig.values, chi.norm().powi(2), z);
            assert!(a.l2_norm() <= g.l2_norm() / d * (1.0 + 1e-10));
        }
        let near = c64::new(eig.values[0] / chi.norm().powi(2), 0.0);
        assert!(matches!(fiber_resolvent(&op, near, &g), Err(Error::NearSpectrum { .. })));
    }

    #[test]
    fn homogeneous_constant_resolvent() {
        let chi = Quasimomentum([0.3, 0.2, 0.0]);
        let op = assemble_fiber_from_field(&iso(), &chi, 1).unwrap();
        let c = [c64::new(1.0, 0.0), c64::new(-0.5, 0.2), ZERO];
        let f = TorusField::constant(op.lattice, c);
        let u = fiber_resolvent(&op, c64::new(-1.0, 0.0), &f).unwrap();
        // (|chi|^-2 (mu |chi|^2 I + (mu + lambda) chi chi^T) + 1)^-1 c
        let x = chi.0;
        let n2 = chi.norm().powi(2);
        let mut m = [[ZERO; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = c64::new((if i == j { n2 + n2 } else { 0.0 } + 2.0 * x[i] * x[j]) / n2, 0.0);
            }
        }
        let inv = crate::linalg::m3_inverse(&m).unwrap();
        let want = crate::linalg::m3_vec(&inv, &c);
        let got = u.mean();
        for i in 0..3 {
            assert!((got[i] - want[i]).norm() < 1e-12);
        }
        assert!(u.without_mean().l2_norm() < 1e-14);
    }

    #[test]
    fn rayleigh_isotropic_and_symmetry() {
        let tr = CoefficientTransform::new(&iso(), 1, Quadrature::Exact).unwrap();
        let chis = [Quasimomentum([0.1, 0.0, 0.0]), Quasimomentum([0.0, 0.2, 0.1])];
        let rb = rayleigh_bounds(&tr, &chis, None).unwrap();
        assert!((rb.c_low - 1.0).abs() < 1e-10);
        assert!((rb.c_high - 3.0).abs() < 1e-10);
        assert!((rb.gap - ((2.0 * PI - 0.2f64).powi(2) + 0.01)).abs() < 1e-8);
        assert!(rb.counts_below_half_gap.iter().all(|&c| c == 3));
        let lam = CoefficientTransform::new(&laminate(), 1, Quadrature::Exact).unwrap();
        let c = Quasimomentum([0.3, -0.2, 0.5]);
        let a = rayleigh_bounds(&lam, &[c], None).unwrap();
        let b = rayleigh_bounds(&lam, &[c.neg()], None).unwrap();
        for i in 0..4 {
            assert!((a.lowest[0][i] - b.lowest[0][i]).abs() < 1e-11);
        }
    }

    #[test]
    fn abstract_inequality_samples() {
        let op = assemble_fiber_from_field(&laminate(), &Quasimomentum([0.2, 0.0, 0.1]), 1).unwrap();
        let eig = op.eigen().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let fs: Vec<TorusField> = (0..10).map(|_| TorusField::random(op.lattice, &mut rng)).collect();
        for z in [c64::new(-2.0, 0.0), c64::new(-0.1, 0.0), c64::new(1.3, 0.4)] {
            let c = abstract_resolvent_check(&eig, z, &fs).unwrap();
            assert!(c.holds());
        }
        // eigenvector functional: closed form (sqrt(mu) + 1)^2 / |mu - z|
        let z = c64::new(-0.5, 0.0);
        let mu = eig.values[5] / op.chi.norm().powi(2);
        let v = TorusField::from_coeffs(op.lattice, crate::linalg::col_to_vec(eig.vectors.as_ref(), 5));
        let c = abstract_resolvent_check(&eig, z, &[v, TorusField::zeros(op.lattice)]).unwrap();
        let want = (mu.sqrt() + 1.0).powi(2) / (mu - z.re).abs();
        assert!((c.ratios[0] - want).abs() < 1e-9 * want);
        assert_eq!(c.ratios[1], 0.0);
        let _ = rng.gen::<u8>();
    }

    #[test]
    fn cache_hits() {
        let tr = CoefficientTransform::new(&iso(), 1, Quadrature::Exact).unwrap();
        let cache = SpectrumCache::new();
        let chi = Quasimomentum([0.1, 0.0, 0.0]);
        let a = cache.eigenvalues(&tr, &chi).unwrap();
        let b = cache.eigenvalues(&tr, &chi).unwrap();
        assert_eq!(a, b);
        assert_eq!(cache.hits(), 1);
    }
}
