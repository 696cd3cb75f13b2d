//! Small dense helpers shared by the numerical modules.

use faer::{c64, Mat, MatRef, Side};

use crate::error::{Error, Result};

pub type M3 = [[c64; 3]; 3];

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub const I: c64 = c64 { re: 0.0, im: 1.0 };

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub fn herm_eig(m: MatRef<'_, c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    let e = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("hermitian eigensolver: {e:?}")))?;
    let s = e.S().column_vector();
    let vals = (0..s.nrows()).map(|i| s[i].re).collect();
    Ok((vals, e.U().to_owned()))
}

pub fn herm_eigvals(m: MatRef<'_, c64>) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("hermitian eigensolver: {e:?}")))
}

/// Eigenvalues of a small real symmetric matrix given row-major.
pub fn sym_eigvals_real(a: &[f64], n: usize) -> Vec<f64> {
    let m = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (a[i * n + j] + a[j * n + i]));
    m.self_adjoint_eigenvalues(Side::Lower)
        .expect("small symmetric eigensolve")
}

pub fn m3_zero() -> M3 {
    [[ZERO; 3]; 3]
}

pub fn m3_identity() -> M3 {
    let mut m = m3_zero();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = ONE;
    }
    m
}

pub fn m3_mul(a: &M3, b: &M3) -> M3 {
    let mut c = m3_zero();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

pub fn m3_vec(a: &M3, v: &[c64; 3]) -> [c64; 3] {
    let mut out = [ZERO; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i] += a[i][j] * v[j];
        }
    }
    out
}

pub fn m3_add(a: &M3, b: &M3, s: c64) -> M3 {
    let mut c = *a;
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] += s * b[i][j];
        }
    }
    c
}

pub fn m3_adjoint(a: &M3) -> M3 {
    let mut c = m3_zero();
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = a[j][i].conj();
        }
    }
    c
}

pub fn m3_inverse(a: &M3) -> Result<M3> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    let scale = a.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max);
    if det.norm() <= 1e-300 || det.norm() < 1e-14 * scale.powi(3) {
        return Err(Error::Numerical("singular 3x3 system".into()));
    }
    let mut inv = m3_zero();
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / det;
        }
    }
    Ok(inv)
}

pub fn m3_to_mat(a: &M3) -> Mat<c64> {
    Mat::from_fn(3, 3, |i, j| a[i][j])
}

pub fn m3_eigvals_herm(a: &M3) -> Vec<f64> {
    let h = Mat::from_fn(3, 3, |i, j| 0.5 * (a[i][j] + a[j][i].conj()));
    herm_eigvals(h.as_ref()).expect("3x3 hermitian eigensolve")
}

pub fn m3_max_abs_diff(a: &M3, b: &M3) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            d = d.max((a[i][j] - b[i][j]).norm());
        }
    }
    d
}

pub fn max_abs(m: MatRef<'_, c64>) -> f64 {
    let mut d: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            d = d.max(m[(i, j)].norm());
        }
    }
    d
}

pub fn vec_norm(v: &[c64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_dot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn col_to_vec(m: MatRef<'_, c64>, j: usize) -> Vec<c64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

pub fn vec_to_col(v: &[c64]) -> Mat<c64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

/// Largest singular value, dense.
pub fn spectral_norm(m: MatRef<'_, c64>) -> Result<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0.0);
    }
    let s = m
        .singular_values()
        .map_err(|e| Error::Numerical(format!("svd: {e:?}")))?;
    Ok(s.first().copied().unwrap_or(0.0))
}

/// `lambda_max` of a Hermitian matrix.
pub fn herm_lambda_max(m: MatRef<'_, c64>) -> Result<f64> {
    let v = herm_eigvals(m)?;
    Ok(v.last().copied().unwrap_or(0.0))
}

/// Spectral norm of `diag(d) - p r^*` without forming the n x n matrix.
///
/// Works on the Hermitian dilation `[[0, M], [M^*, 0]]`, whose largest eigenvalue
/// is `||M||`. The dilation is `Delta - U C U^*` with `Delta` a direct sum of 2x2
/// blocks `[[0, d_i], [conj d_i, 0]]`, `U = diag(p, r)` and `C = [[0, I], [I, 0]]`.
/// Its inertia at a shift `lambda` follows from the Haynsworth identity on the
/// bordered matrix `[[Delta - lambda, U], [U^*, C^-1]]`; bisection on the count of
/// eigenvalues below `lambda` gives the norm without squaring the operator.
pub fn norm_diag_minus_lowrank(d: &[c64], p: MatRef<'_, c64>, r: MatRef<'_, c64>) -> Result<f64> {
    let n = d.len();
    let m = p.ncols();
    assert_eq!(p.nrows(), n);
    assert_eq!(r.nrows(), n);
    assert_eq!(r.ncols(), m);
    if n == 0 {
        return Ok(0.0);
    }
    let dmax = d.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if m == 0 {
        return Ok(dmax);
    }
    let pr: Vec<c64> = (0..n).flat_map(|i| (0..m).map(move |a| (i, a))).map(|(i, a)| p[(i, a)]).collect();
    let rr: Vec<c64> = (0..n).flat_map(|i| (0..m).map(move |a| (i, a))).map(|(i, a)| r[(i, a)]).collect();

    // number of eigenvalues of the dilation below lam
    let count_below = |lam: f64| -> Result<usize> {
        let mut s = Mat::<c64>::zeros(2 * m, 2 * m);
        for a in 0..m {
            s[(a, m + a)] = ONE;
            s[(m + a, a)] = ONE;
        }
        let mut neg = 0usize;
        for i in 0..n {
            let di = d[i];
            let a = di.norm();
            // eigenvalues of the 2x2 block minus lam: -lam +- |d_i|
            neg += usize::from(a - lam < 0.0) + usize::from(-a - lam < 0.0);
            let mut den = lam * lam - a * a;
            if den == 0.0 {
                den = f64::MIN_POSITIVE;
            }
            // (block - lam)^-1 = [[-lam, -d], [-conj d, -lam]] / den
            let b11 = -lam / den;
            let b12 = -di / den;
            let b22 = -lam / den;
            let pi = &pr[i * m..(i + 1) * m];
            let ri = &rr[i * m..(i + 1) * m];
            for x in 0..m {
                let px = pi[x].conj();
                let rx = ri[x].conj();
                for y in 0..m {
                    s[(x, y)] -= px * b11 * pi[y];
                    s[(x, m + y)] -= px * b12 * ri[y];
                    s[(m + x, y)] -= rx * b12.conj() * pi[y];
                    s[(m + x, m + y)] -= rx * b22 * ri[y];
                }
            }
        }
        let ev = herm_eigvals(s.as_ref())?;
        let small_neg = ev.iter().filter(|&&x| x < 0.0).count();
        Ok(neg + small_neg - m)
    };

    let mut hi = (dmax + frob(p) * frob(r)) * 1.01 + 1e-300;
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(mid)? >= 2 * n {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn frob(m: MatRef<'_, c64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let (pn, pm) = (p1, p0);
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Least-squares slope of `log y` against `log x`, skipping entries with `y < floor`.
pub fn loglog_slope(x: &[f64], y: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b >= floor && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Largest eigenvalue of a Hermitian positive semidefinite operator given by its
/// action, via Lanczos with full reorthogonalisation from a fixed start vector.
pub fn lanczos_lambda_max(n: usize, apply: impl Fn(&[c64]) -> Vec<c64>, max_steps: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut q: Vec<Vec<c64>> = Vec::new();
    // deterministic, generic start vector
    let mut v: Vec<c64> = (0..n).map(|i| c64::new(1.0 + ((i * 7919) % 101) as f64 / 101.0, ((i * 104729) % 97) as f64 / 97.0)).collect();
    let nv = vec_norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let mut prev = f64::NEG_INFINITY;
    let mut stable = 0;
    let steps = max_steps.min(n);
    for k in 0..steps {
        let mut w = apply(&v);
        let a = vec_dot(&v, &w).re;
        q.push(v);
        alpha.push(a);
        for _ in 0..2 {
            for qi in &q {
                let c = vec_dot(qi, &w);
                for (wj, qj) in w.iter_mut().zip(qi) {
                    *wj -= c * qj;
                }
            }
        }
        let b = vec_norm(&w);
        let m = alpha.len();
        let mut t = vec![0.0; m * m];
        for i in 0..m {
            t[i * m + i] = alpha[i];
            if i + 1 < m {
                t[i * m + i + 1] = beta[i];
                t[(i + 1) * m + i] = beta[i];
            }
        }
        let theta = *sym_eigvals_real(&t, m).last().unwrap();
        let scale = theta.abs().max(1e-300);
        if b <= 1e-14 * scale || k + 1 == steps {
            return theta;
        }
        if (theta - prev).abs() <= 1e-13 * scale {
            stable += 1;
            if stable >= 3 {
                return theta;
            }
        } else {
            stable = 0;
        }
        prev = theta;
        beta.push(b);
        v = w.iter().map(|x| x / b).collect();
    }
    prev
}
