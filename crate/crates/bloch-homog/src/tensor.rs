//! Elastic tensors, the orthonormal basis of symmetric matrices, and voxel
//! coefficient fields on the unit cell.

use faer::c64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigvals_real, M3, ZERO};

/// Index pairs of the six basis elements.
pub const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Human-readable tag written next to every Voigt matrix we export.
pub const BASIS_TAG: &str = "ortho-voigt:E11,E22,E33,(E12+E21)/sqrt2,(E13+E31)/sqrt2,(E23+E32)/sqrt2";

/// Frobenius-orthonormal basis of real symmetric 3x3 matrices.
#[derive(Clone, Debug)]
pub struct SymBasis {
    pub elements: [[[f64; 3]; 3]; 6],
}

impl Default for SymBasis {
    fn default() -> Self {
        Self::standard()
    }
}

impl SymBasis {
    pub fn standard() -> Self {
        let mut elements = [[[0.0; 3]; 3]; 6];
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for (a, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
            if i == j {
                elements[a][i][i] = 1.0;
            } else {
                elements[a][i][j] = r;
                elements[a][j][i] = r;
            }
        }
        Self { elements }
    }

    /// Coordinates `e_a : m` (no conjugation, so the map is complex linear).
    pub fn coords(&self, m: &M3) -> [c64; 6] {
        let mut out = [ZERO; 6];
        for (a, e) in self.elements.iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    out[a] += m[i][j] * e[i][j];
                }
            }
        }
        out
    }

    pub fn matrix(&self, v: &[c64; 6]) -> M3 {
        let mut m = [[ZERO; 3]; 3];
        for (a, e) in self.elements.iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += v[a] * e[i][j];
                }
            }
        }
        m
    }

    pub fn gram_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for a in 0..6 {
            for b in 0..6 {
                let mut s = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        s += self.elements[a][i][j] * self.elements[b][i][j];
                    }
                }
                d = d.max((s - if a == b { 1.0 } else { 0.0 }).abs());
            }
        }
        d
    }
}

/// Voigt coordinates of `sym(a (x) q)` as a 6x3 real matrix acting on `a`.
pub fn sym_outer_voigt(q: [f64; 3]) -> [[f64; 3]; 6] {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut b = [[0.0; 3]; 6];
    for (alpha, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
        if i == j {
            b[alpha][i] = q[i];
        } else {
            // (a_i q_j + a_j q_i) / sqrt2
            b[alpha][i] += r * q[j];
            b[alpha][j] += r * q[i];
        }
    }
    b
}

/// Fourth-order tensor stored as `c[i][j][k][l]`, acting by
/// `(A m)_ij = sum_kl c[i][j][k][l] m_kl`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElasticTensor {
    pub c: [[[[f64; 3]; 3]; 3]; 3],
}

impl ElasticTensor {
    pub fn zero() -> Self {
        Self { c: [[[[0.0; 3]; 3]; 3]; 3] }
    }

    pub fn from_voigt(v: &[[f64; 6]; 6]) -> Self {
        let basis = SymBasis::standard();
        let mut t = Self::zero();
        for a in 0..6 {
            for b in 0..6 {
                if v[a][b] == 0.0 {
                    continue;
                }
                let ea = &basis.elements[a];
                let eb = &basis.elements[b];
                for i in 0..3 {
                    for j in 0..3 {
                        for k in 0..3 {
                            for l in 0..3 {
                                t.c[i][j][k][l] += v[a][b] * ea[i][j] * eb[k][l];
                            }
                        }
                    }
                }
            }
        }
        t
    }

    /// `V_ab = e_a : A e_b`.
    pub fn voigt(&self) -> [[f64; 6]; 6] {
        let basis = SymBasis::standard();
        let mut v = [[0.0; 6]; 6];
        for a in 0..6 {
            for b in 0..6 {
                let ea = &basis.elements[a];
                let eb = &basis.elements[b];
                let mut s = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        for k in 0..3 {
                            for l in 0..3 {
                                s += ea[i][j] * self.c[i][j][k][l] * eb[k][l];
                            }
                        }
                    }
                }
                v[a][b] = s;
            }
        }
        v
    }

    pub fn apply(&self, m: &M3) -> M3 {
        apply_tensor(self, m)
    }

    /// Largest violation of the minor and major index symmetries.
    pub fn symmetry_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let x = self.c[i][j][k][l];
                        d = d
                            .max((x - self.c[j][i][k][l]).abs())
                            .max((x - self.c[i][j][l][k]).abs())
                            .max((x - self.c[k][l][i][j]).abs());
                    }
                }
            }
        }
        d
    }

    pub fn max_entry(&self) -> f64 {
        self.c.iter().flatten().flatten().flatten().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Extreme eigenvalues of the (symmetrised) Voigt matrix.
    pub fn voigt_extremes(&self) -> (f64, f64) {
        let v = self.voigt();
        let flat: Vec<f64> = v.iter().flatten().copied().collect();
        let e = sym_eigvals_real(&flat, 6);
        (e[0], e[5])
    }
}

/// `(A m)_ij = sum_kl A_ijkl m_kl`.
pub fn apply_tensor(t: &ElasticTensor, m: &M3) -> M3 {
    let mut out = [[ZERO; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = ZERO;
            for k in 0..3 {
                for l in 0..3 {
                    s += m[k][l] * t.c[i][j][k][l];
                }
            }
            out[i][j] = s;
        }
    }
    out
}

/// Isotropic Hooke law `A xi = 2 mu sym(xi) + lambda tr(xi) I`.
pub fn make_isotropic(lambda: f64, mu: f64) -> Result<ElasticTensor> {
    if !(mu > 0.0) || !(3.0 * lambda + 2.0 * mu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "isotropic law needs mu > 0 and 3 lambda + 2 mu > 0, got lambda={lambda}, mu={mu}"
        )));
    }
    let mut t = ElasticTensor::zero();
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    t.c[i][j][k][l] = lambda * d(i, j) * d(k, l) + mu * (d(i, k) * d(j, l) + d(i, l) * d(j, k));
                }
            }
        }
    }
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lame {
    pub lambda: f64,
    pub mu: f64,
}

impl Lame {
    pub fn tensor(&self) -> Result<ElasticTensor> {
        make_isotropic(self.lambda, self.mu)
    }
}

/// Outcome of [`check_coefficients`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Smallest Voigt eigenvalue over all voxels.
    pub nu_estimate: f64,
    /// Largest Voigt eigenvalue over all voxels.
    pub upper: f64,
    pub linf: f64,
    pub symmetry_defect: f64,
}

impl Certificate {
    /// Constant `nu` with `nu |xi|^2 <= A xi : xi <= |xi|^2 / nu`.
    pub fn two_sided_nu(&self) -> f64 {
        self.nu_estimate.min(1.0 / self.upper)
    }
}

/// Piecewise-constant tensor field on an `n1 x n2 x n3` voxel grid over `[0,1)^3`.
///
/// Voxel `(i1, i2, i3)` covers `[i/n, (i+1)/n)` per axis and is stored at
/// `(i1 * n2 + i2) * n3 + i3`.
#[derive(Clone, Debug)]
pub struct CoefficientField {
    pub dims: [usize; 3],
    pub voxels: Vec<ElasticTensor>,
    pub nu: f64,
    pub linf: f64,
}

impl CoefficientField {
    pub fn new(dims: [usize; 3], voxels: Vec<ElasticTensor>) -> Result<Self> {
        if dims.iter().any(|&n| n == 0) || voxels.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::InvalidParameter(format!(
                "voxel count {} does not match dims {:?}",
                voxels.len(),
                dims
            )));
        }
        let mut f = Self { dims, voxels, nu: 0.0, linf: 0.0 };
        let cert = check_coefficients(&f);
        f.nu = cert.nu_estimate;
        f.linf = cert.linf;
        Ok(f)
    }

    pub fn homogeneous(t: ElasticTensor) -> Self {
        Self::new([1, 1, 1], vec![t]).expect("single voxel")
    }

    pub fn index(&self, i: [usize; 3]) -> usize {
        (i[0] * self.dims[1] + i[1]) * self.dims[2] + i[2]
    }

    pub fn voxel(&self, i: [usize; 3]) -> &ElasticTensor {
        &self.voxels[self.index(i)]
    }

    /// Tensor at a point of the torus (periodic lookup).
    pub fn at(&self, y: [f64; 3]) -> &ElasticTensor {
        let mut idx = [0; 3];
        for d in 0..3 {
            let t = y[d] - y[d].floor();
            idx[d] = ((t * self.dims[d] as f64).floor() as usize).min(self.dims[d] - 1);
        }
        self.voxel(idx)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.voxels.iter().all(|v| v == &self.voxels[0])
    }

    /// Content hash over dims and all stored entries.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for d in self.dims {
            h.update((d as u64).to_le_bytes());
        }
        for v in &self.voxels {
            for x in v.c.iter().flatten().flatten().flatten() {
                h.update(x.to_le_bytes());
            }
        }
        let out = h.finalize();
        out.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Report symmetry, ellipticity and size of a field; never fails.
pub fn check_coefficients(f: &CoefficientField) -> Certificate {
    let mut cert = Certificate { nu_estimate: f64::INFINITY, upper: 0.0, linf: 0.0, symmetry_defect: 0.0 };
    let mut seen: Vec<&ElasticTensor> = Vec::new();
    for v in &f.voxels {
        if seen.iter().any(|s| *s == v) {
            continue;
        }
        seen.push(v);
        cert.symmetry_defect = cert.symmetry_defect.max(v.symmetry_defect());
        cert.linf = cert.linf.max(v.max_entry());
        let (lo, hi) = v.voigt_extremes();
        cert.nu_estimate = cert.nu_estimate.min(lo);
        cert.upper = cert.upper.max(hi);
    }
    cert
}

/// Slab microstructure along `axis` (1-based). The first `round(fraction * resolution)`
/// slabs, clamped to `[1, resolution - 1]`, carry `phase_a`.
pub fn make_laminate(
    phase_a: ElasticTensor,
    phase_b: ElasticTensor,
    volume_fraction: f64,
    axis: usize,
    resolution: usize,
) -> Result<CoefficientField> {
    if !(volume_fraction > 0.0 && volume_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!("volume fraction {volume_fraction} outside (0,1)")));
    }
    if !(1..=3).contains(&axis) {
        return Err(Error::InvalidParameter(format!("axis {axis} not in 1..3")));
    }
    if resolution < 2 {
        return Err(Error::InvalidParameter("laminate needs resolution >= 2".into()));
    }
    for p in [&phase_a, &phase_b] {
        if p.symmetry_defect() > 1e-12 || p.voigt_extremes().0 <= 0.0 {
            return Err(Error::InvalidParameter("laminate phase is not a valid elastic tensor".into()));
        }
    }
    let n_a = ((volume_fraction * resolution as f64).round() as usize).clamp(1, resolution - 1);
    let mut dims = [1, 1, 1];
    dims[axis - 1] = resolution;
    let voxels = (0..resolution).map(|i| if i < n_a { phase_a } else { phase_b }).collect();
    CoefficientField::new(dims, voxels)
}

/// Cube inclusion of side `side` (in cell units, snapped to voxels) centred in the cell.
pub fn make_cube_inclusion(
    matrix: ElasticTensor,
    inclusion: ElasticTensor,
    side: f64,
    resolution: usize,
) -> Result<CoefficientField> {
    if !(side > 0.0 && side < 1.0) || resolution < 2 {
        return Err(Error::InvalidParameter(format!("cube side {side} / resolution {resolution} invalid")));
    }
    let n_in = ((side * resolution as f64).round() as usize).clamp(1, resolution - 1);
    let start = (resolution - n_in) / 2;
    let inside = |i: usize| i >= start && i < start + n_in;
    let n = resolution;
    let mut voxels = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                voxels.push(if inside(i) && inside(j) && inside(k) { inclusion } else { matrix });
            }
        }
    }
    CoefficientField::new([n, n, n], voxels)
}
