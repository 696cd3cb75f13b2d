//! Truncated Fourier lattices and periodic fields on the unit torus, plus the
//! Korn/rank-one inequality lab.

use std::f64::consts::PI;

use faer::{c64, Mat};
use rand::Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg::{herm_eigvals, sym_eigvals_real, M3, ZERO};
use crate::tensor::sym_outer_voigt;

/// All `k in Z^3` with `|k_i| <= K`, ordered lexicographically with the last
/// component fastest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Lattice {
    pub k: usize,
}

impl Lattice {
    pub fn new(k: usize) -> Self {
        Self { k }
    }

    pub fn side(&self) -> usize {
        2 * self.k + 1
    }

    pub fn n_modes(&self) -> usize {
        self.side().pow(3)
    }

    /// Dimension of the vector-field coefficient space.
    pub fn dim(&self) -> usize {
        3 * self.n_modes()
    }

    pub fn mode(&self, n: usize) -> [i64; 3] {
        let s = self.side();
        let k = self.k as i64;
        [(n / (s * s)) as i64 - k, ((n / s) % s) as i64 - k, (n % s) as i64 - k]
    }

    pub fn index(&self, m: [i64; 3]) -> Option<usize> {
        let k = self.k as i64;
        if m.iter().any(|x| x.abs() > k) {
            return None;
        }
        let s = self.side() as i64;
        Some((((m[0] + k) * s + (m[1] + k)) * s + (m[2] + k)) as usize)
    }

    pub fn zero_index(&self) -> usize {
        self.n_modes() / 2
    }

    pub fn modes(&self) -> impl Iterator<Item = [i64; 3]> + '_ {
        (0..self.n_modes()).map(|n| self.mode(n))
    }

    /// `2 pi k` for mode index `n`.
    pub fn wave(&self, n: usize) -> [f64; 3] {
        let m = self.mode(n);
        [2.0 * PI * m[0] as f64, 2.0 * PI * m[1] as f64, 2.0 * PI * m[2] as f64]
    }

    /// `2 pi k + chi`.
    pub fn shifted_wave(&self, n: usize, chi: &[f64; 3]) -> [f64; 3] {
        let w = self.wave(n);
        [w[0] + chi[0], w[1] + chi[1], w[2] + chi[2]]
    }
}

/// Quasimomentum in the dual cell `[-pi, pi)^3`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quasimomentum(pub [f64; 3]);

impl Quasimomentum {
    pub fn new(chi: [f64; 3]) -> Result<Self> {
        if chi.iter().any(|c| !(-PI..PI).contains(c)) {
            return Err(Error::InvalidParameter(format!("quasimomentum {chi:?} outside [-pi, pi)^3")));
        }
        Ok(Self(chi))
    }

    /// Reduce an arbitrary vector into the dual cell, returning the lattice shift.
    pub fn wrap(x: [f64; 3]) -> (Self, [i64; 3]) {
        let mut chi = [0.0; 3];
        let mut k = [0i64; 3];
        for d in 0..3 {
            let s = ((x[d] + PI) / (2.0 * PI)).floor();
            chi[d] = x[d] - 2.0 * PI * s;
            if chi[d] >= PI {
                chi[d] -= 2.0 * PI;
                k[d] = s as i64 + 1;
            } else {
                k[d] = s as i64;
            }
        }
        (Self(chi), k)
    }

    pub fn norm(&self) -> f64 {
        norm3(&self.0)
    }

    pub fn neg(&self) -> Self {
        Self([-self.0[0], -self.0[1], -self.0[2]])
    }
}

pub fn norm3(x: &[f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

/// Vector field `u(y) = sum_k a_k exp(2 pi i k.y)`; coefficient of component `i`
/// at mode index `n` sits at `3 n + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusField {
    pub lattice: Lattice,
    pub coeffs: Vec<c64>,
}

impl TorusField {
    pub fn zeros(lattice: Lattice) -> Self {
        Self { lattice, coeffs: vec![ZERO; lattice.dim()] }
    }

    pub fn from_coeffs(lattice: Lattice, coeffs: Vec<c64>) -> Self {
        assert_eq!(coeffs.len(), lattice.dim());
        Self { lattice, coeffs }
    }

    pub fn constant(lattice: Lattice, c: [c64; 3]) -> Self {
        let mut f = Self::zeros(lattice);
        let z = lattice.zero_index();
        f.coeffs[3 * z..3 * z + 3].copy_from_slice(&c);
        f
    }

    pub fn random<R: Rng>(lattice: Lattice, rng: &mut R) -> Self {
        let coeffs = (0..lattice.dim())
            .map(|_| c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        Self { lattice, coeffs }
    }

    /// Random field whose physical values are real (`a_{-k} = conj(a_k)`).
    pub fn random_real<R: Rng>(lattice: Lattice, rng: &mut R) -> Self {
        let mut f = Self::random(lattice, rng);
        f.symmetrize_real();
        f
    }

    pub fn symmetrize_real(&mut self) {
        let l = self.lattice;
        let old = self.coeffs.clone();
        for n in 0..l.n_modes() {
            let m = l.mode(n);
            let nn = l.index([-m[0], -m[1], -m[2]]).unwrap();
            for i in 0..3 {
                self.coeffs[3 * n + i] = 0.5 * (old[3 * n + i] + old[3 * nn + i].conj());
            }
        }
    }

    /// Largest violation of `a_{-k} = conj(a_k)`.
    pub fn real_defect(&self) -> f64 {
        let l = self.lattice;
        let mut d: f64 = 0.0;
        for n in 0..l.n_modes() {
            let m = l.mode(n);
            let nn = l.index([-m[0], -m[1], -m[2]]).unwrap();
            for i in 0..3 {
                d = d.max((self.coeffs[3 * n + i] - self.coeffs[3 * nn + i].conj()).norm());
            }
        }
        d
    }

    pub fn mean(&self) -> [c64; 3] {
        let z = self.lattice.zero_index();
        [self.coeffs[3 * z], self.coeffs[3 * z + 1], self.coeffs[3 * z + 2]]
    }

    pub fn without_mean(&self) -> Self {
        let mut f = self.clone();
        let z = self.lattice.zero_index();
        for i in 0..3 {
            f.coeffs[3 * z + i] = ZERO;
        }
        f
    }

    pub fn inner(&self, other: &Self) -> c64 {
        crate::linalg::vec_dot(&self.coeffs, &other.coeffs)
    }

    pub fn l2_norm(&self) -> f64 {
        crate::linalg::vec_norm(&self.coeffs)
    }

    /// `(||u||^2 + ||grad u||^2)^(1/2)`.
    pub fn h1_norm(&self) -> f64 {
        let l = self.lattice;
        let mut s = 0.0;
        for n in 0..l.n_modes() {
            let w = l.wave(n);
            let wt = 1.0 + w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
            for i in 0..3 {
                s += wt * self.coeffs[3 * n + i].norm_sqr();
            }
        }
        s.sqrt()
    }

    pub fn axpy(&mut self, a: c64, x: &Self) {
        for (y, xv) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *y += a * xv;
        }
    }

    pub fn scaled(&self, a: c64) -> Self {
        Self { lattice: self.lattice, coeffs: self.coeffs.iter().map(|x| a * x).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut f = self.clone();
        f.axpy(c64::new(-1.0, 0.0), other);
        f
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut f = self.clone();
        f.axpy(c64::new(1.0, 0.0), other);
        f
    }

    /// Values on the uniform grid `j / m`, `m >= 2K + 1`.
    pub fn to_grid(&self, m: usize) -> Vec<[c64; 3]> {
        let l = self.lattice;
        assert!(m >= l.side(), "grid must resolve the lattice");
        let mut comps: Vec<Vec<c64>> = vec![vec![ZERO; m * m * m]; 3];
        for n in 0..l.n_modes() {
            let k = l.mode(n);
            let g = |x: i64| x.rem_euclid(m as i64) as usize;
            let idx = (g(k[0]) * m + g(k[1])) * m + g(k[2]);
            for (i, c) in comps.iter_mut().enumerate() {
                c[idx] = self.coeffs[3 * n + i];
            }
        }
        for c in comps.iter_mut() {
            fft3(c, m, true);
        }
        (0..m * m * m).map(|j| [comps[0][j], comps[1][j], comps[2][j]]).collect()
    }
}

/// In-place 3D FFT on an `m^3` row-major cube. `inverse` computes
/// `sum_k a_k exp(+2 pi i k.j/m)` without normalisation.
pub fn fft3(data: &mut [c64], m: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(m) } else { planner.plan_fft_forward(m) };
    let mut line = vec![ZERO; m];
    for axis in 0..3 {
        let stride = m.pow(2 - axis as u32);
        for a in 0..m {
            for b in 0..m {
                let base = match axis {
                    0 => a * m + b,
                    1 => a * m * m + b,
                    _ => (a * m + b) * m,
                };
                for (t, x) in line.iter_mut().enumerate() {
                    *x = data[base + t * stride];
                }
                fft.process(&mut line);
                for (t, x) in line.iter().enumerate() {
                    data[base + t * stride] = *x;
                }
            }
        }
    }
}

/// Matrix-valued field, one 3x3 complex coefficient per mode.
#[derive(Clone, Debug)]
pub struct MatrixField {
    pub lattice: Lattice,
    pub coeffs: Vec<M3>,
}

impl MatrixField {
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().flatten().flatten().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Per mode `a_k -> sym(a_k (x) 2 pi i k)`.
pub fn sym_grad(u: &TorusField) -> MatrixField {
    let l = u.lattice;
    let coeffs = (0..l.n_modes())
        .map(|n| {
            let w = l.wave(n);
            sym_outer(&u.coeffs[3 * n..3 * n + 3], &w, c64::new(0.0, 1.0))
        })
        .collect();
    MatrixField { lattice: l, coeffs }
}

/// Per mode `a_k -> sym(a_k (x) chi)`.
pub fn x_chi_apply(chi: &Quasimomentum, u: &TorusField) -> MatrixField {
    let l = u.lattice;
    let coeffs = (0..l.n_modes())
        .map(|n| sym_outer(&u.coeffs[3 * n..3 * n + 3], &chi.0, c64::new(1.0, 0.0)))
        .collect();
    MatrixField { lattice: l, coeffs }
}

fn sym_outer(a: &[c64], q: &[f64; 3], s: c64) -> M3 {
    let mut m = [[ZERO; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = s * 0.5 * (a[i] * q[j] + a[j] * q[i]);
        }
    }
    m
}

/// Extremal constants of the discrete Korn/Fourier inequalities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KornConstants {
    /// `sup |chi| ||u|| / ||(sym grad + i X_chi) u||`; `None` at `chi = 0`.
    pub c_est1: Option<f64>,
    /// `sup ||grad u|| / ||(sym grad + i X_chi) u||` over fields with a nonzero form.
    pub c_est11: f64,
    /// `sup ||u - mean u|| / ||(sym grad + i X_chi) u||`.
    pub c_est12: f64,
}

/// Smallest eigenvalue of the per-mode symbol `B(q)^T B(q)`, i.e. of
/// `a -> |sym(a (x) q)|^2`.
fn symbol_min(q: &[f64; 3]) -> f64 {
    let b = sym_outer_voigt(*q);
    let mut g = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            g[3 * i + j] = (0..6).map(|a| b[a][i] * b[a][j]).sum();
        }
    }
    sym_eigvals_real(&g, 3)[0]
}

/// Korn constants on the truncated lattice.
///
/// None of the three quadratic forms involves the coefficients and all of them
/// are diagonal over Fourier modes, so the generalized extrema reduce to per-mode
/// 3x3 symbol eigenvalues. [`korn_constants_dense`] solves the same pencils as
/// dense generalized eigenproblems.
pub fn korn_constants(k: usize, chi: &Quasimomentum) -> Result<KornConstants> {
    let l = Lattice::new(k);
    let chin = chi.norm();
    let (mut c1, mut c11, mut c12) = (0.0f64, 0.0f64, 0.0f64);
    for n in 0..l.n_modes() {
        let q = l.shifted_wave(n, &chi.0);
        let s = symbol_min(&q);
        let w = norm3(&l.wave(n));
        let zero = n == l.zero_index();
        if s <= 1e-14 * (1.0 + w * w) {
            if !zero || chin > 0.0 {
                return Err(Error::Numerical(format!("singular Korn pencil at mode {:?}", l.mode(n))));
            }
            continue;
        }
        c1 = c1.max(chin * chin / s);
        c11 = c11.max(w * w / s);
        if !zero {
            c12 = c12.max(1.0 / s);
        }
    }
    Ok(KornConstants { c_est1: (chin > 0.0).then(|| c1.sqrt()), c_est11: c11.sqrt(), c_est12: c12.sqrt() })
}

/// Dense route: assemble the Gram matrices of the three forms and solve each
/// pencil through a Cholesky reduction of the strain form.
pub fn korn_constants_dense(k: usize, chi: &Quasimomentum) -> Result<KornConstants> {
    let l = Lattice::new(k);
    let chin = chi.norm();
    let zi = l.zero_index();
    // at chi = 0 the strain form is singular on constants; work on the complement
    let keep: Vec<usize> = (0..l.n_modes()).filter(|&n| chin > 0.0 || n != zi).collect();
    let d = 3 * keep.len();
    let mut strain = Mat::<c64>::zeros(d, d);
    let mut grad = Mat::<c64>::zeros(d, d);
    let mut mass = Mat::<c64>::zeros(d, d);
    let mut mass0 = Mat::<c64>::zeros(d, d);
    for (p, &n) in keep.iter().enumerate() {
        let q = l.shifted_wave(n, &chi.0);
        let b = sym_outer_voigt(q);
        let w = l.wave(n);
        let w2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
        for i in 0..3 {
            for j in 0..3 {
                strain[(3 * p + i, 3 * p + j)] = c64::new((0..6).map(|a| b[a][i] * b[a][j]).sum(), 0.0);
            }
            grad[(3 * p + i, 3 * p + i)] = c64::new(w2, 0.0);
            mass[(3 * p + i, 3 * p + i)] = c64::new(chin * chin, 0.0);
            if n != zi {
                mass0[(3 * p + i, 3 * p + i)] = c64::new(1.0, 0.0);
            }
        }
    }
    let llt = strain
        .llt(faer::Side::Lower)
        .map_err(|_| Error::Numerical("singular Korn pencil".into()))?;
    // lambda_max(S^-1 T) = lambda_max(L^-1 T L^-H) with S = L L^H
    let mut linv = Mat::<c64>::identity(d, d);
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(llt.L(), linv.as_mut(), faer::Par::Seq);
    let top = |t: &Mat<c64>| -> Result<f64> {
        let m = &linv * t * linv.adjoint();
        let h = Mat::from_fn(d, d, |i, j| 0.5 * (m[(i, j)] + m[(j, i)].conj()));
        Ok(herm_eigvals(h.as_ref())?.last().copied().unwrap_or(0.0).max(0.0).sqrt())
    };
    Ok(KornConstants {
        c_est1: if chin > 0.0 { Some(top(&mass)?) } else { None },
        c_est11: top(&grad)?,
        c_est12: top(&mass0)?,
    })
}

/// `|a (x) b| / |sym(a (x) b)|` for real vectors.
pub fn rank_one_ratio(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let mut full = 0.0;
    let mut sym = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            full += (a[i] * b[j]).powi(2);
            sym += (0.5 * (a[i] * b[j] + a[j] * b[i])).powi(2);
        }
    }
    (full / sym).sqrt()
}

/// Same ratio for complex vectors.
pub fn rank_one_ratio_complex(a: &[c64; 3], b: &[c64; 3]) -> f64 {
    let mut full = 0.0;
    let mut sym = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            full += (a[i] * b[j]).norm_sqr();
            sym += (0.5 * (a[i] * b[j] + a[j] * b[i])).norm_sqr();
        }
    }
    (full / sym).sqrt()
}

/// Worst sampled ratio over random real pairs, refined by a local ascent from
/// the best sample.
pub fn rank_one_sym_ratio<R: Rng>(samples: usize, rng: &mut R) -> f64 {
    assert!(samples >= 1);
    let mut best = (0.0, [0.0; 3], [0.0; 3]);
    for _ in 0..samples {
        let a = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let b = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if norm3(&a) < 1e-12 || norm3(&b) < 1e-12 {
            continue;
        }
        let r = rank_one_ratio(&a, &b);
        if r > best.0 {
            best = (r, a, b);
        }
    }
    // coordinate ascent with shrinking steps
    let (mut r, mut a, mut b) = best;
    let mut h = 0.1;
    while h > 1e-9 {
        let mut improved = false;
        for idx in 0..6 {
            for s in [-h, h] {
                let (mut a2, mut b2) = (a, b);
                if idx < 3 {
                    a2[idx] += s;
                } else {
                    b2[idx - 3] += s;
                }
                let r2 = rank_one_ratio(&a2, &b2);
                if r2 > r {
                    (r, a, b) = (r2, a2, b2);
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    r
}

/// Worst sampled ratio over random complex pairs (no refinement).
pub fn rank_one_sym_ratio_complex<R: Rng>(samples: usize, rng: &mut R) -> f64 {
    let mut g = || c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let a = [g(), g(), g()];
        let b = [g(), g(), g()];
        best = best.max(rank_one_ratio_complex(&a, &b));
    }
    best
}

/// Quadrature inner product `int_Y u . conj(v)` on an `m^3` grid.
pub fn quadrature_inner(u: &TorusField, v: &TorusField, m: usize) -> c64 {
    let gu = u.to_grid(m);
    let gv = v.to_grid(m);
    let s: c64 = gu
        .iter()
        .zip(&gv)
        .map(|(a, b)| (0..3).map(|i| b[i].conj() * a[i]).sum::<c64>())
        .sum();
    s / (m * m * m) as f64
}
