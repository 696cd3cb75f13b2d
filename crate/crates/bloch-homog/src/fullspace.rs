//! Full-space statements through the scaled Gelfand transform: smoothing, the
//! epsilon-rate study as a supremum of fiber norms, and two-scale agreement.

use std::f64::consts::PI;

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{build_contour, fit_slopes, ChiBlocks, Contour, RateRow, Slopes};
use crate::cell::{homogenized_tensor, solve_cell, CellSolver, HomogenizedTensor};
use crate::error::{Error, Result};
use crate::fiber::{assemble_fiber, FiberEigen};
use crate::linalg::{lanczos_lambda_max, m3_eigvals_herm, norm_diag_minus_lowrank, vec_norm, ZERO};
use crate::tensor::SymBasis;
use crate::torus::{norm3, Quasimomentum, TorusField};

/// `M(xi) = B(xi)^T V B(xi)`, the homogenized symbol.
fn symbol(hom: &HomogenizedTensor, xi: &[f64; 3]) -> Vec<f64> {
    m3_eigvals_herm(&hom.fiber_matrix(xi))
}

/// Worst observed ratios for the symbol bounds outside the cutoff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingCheck {
    pub epsilon: f64,
    pub gamma: f64,
    /// `max |(eps^-gamma M + I)^-1| / eps^(gamma+2)`.
    pub ratio_l2: f64,
    /// `max |xi| |(eps^-gamma M + I)^-1| / eps^(gamma+1)`.
    pub ratio_grad: f64,
    /// Guaranteed bounds `4 / nu1` and `2 / nu1`.
    pub bound_l2: f64,
    pub bound_grad: f64,
    pub nu1: f64,
}

impl SmoothingCheck {
    pub fn holds(&self) -> bool {
        self.ratio_l2 <= self.bound_l2 * (1.0 + 1e-12) && self.ratio_grad <= self.bound_grad * (1.0 + 1e-12)
    }
}

/// `nu1 = nu_hom / 2` bounds `M(xi) >= nu1 |xi|^2` (rank-one symmetric inequality).
pub fn smoothing_multiplier_check(hom: &HomogenizedTensor, epsilon: f64, gamma: f64, xis: &[[f64; 3]]) -> Result<SmoothingCheck> {
    if !(epsilon > 0.0 && gamma > -2.0) {
        return Err(Error::InvalidParameter(format!("need eps > 0 and gamma > -2, got {epsilon}, {gamma}")));
    }
    let cut = 1.0 / (2.0 * epsilon);
    let nu1 = hom.nu_hom / 2.0;
    let (mut r1, mut r2): (f64, f64) = (0.0, 0.0);
    for xi in xis {
        if xi.iter().all(|x| *x >= -cut && *x < cut) {
            return Err(Error::InvalidParameter(format!("sample {xi:?} lies inside the cutoff")));
        }
        let lmin = symbol(hom, xi)[0];
        // symbol of the inverse is Hermitian: its norm is 1 / (eps^-gamma lmin + 1)
        let norm = 1.0 / (epsilon.powf(-gamma) * lmin + 1.0);
        r1 = r1.max(norm / epsilon.powf(gamma + 2.0));
        r2 = r2.max(norm3(xi) * norm / epsilon.powf(gamma + 1.0));
    }
    Ok(SmoothingCheck { epsilon, gamma, ratio_l2: r1, ratio_grad: r2, bound_l2: 4.0 / nu1, bound_grad: 2.0 / nu1, nu1 })
}

/// Frequencies outside the cutoff cube: random points of `[-4c, 4c]^3` outside
/// `[-c, c)^3` with `c = 1/(2 eps)`, plus points on the cube faces.
pub fn sample_outside_cutoff<R: Rng>(epsilon: f64, count: usize, rng: &mut R) -> Vec<[f64; 3]> {
    let c = 1.0 / (2.0 * epsilon);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let xi: [f64; 3] = if out.len() % 4 == 0 {
            // on a face
            let mut p = [rng.gen_range(-c..c), rng.gen_range(-c..c), rng.gen_range(-c..c)];
            p[rng.gen_range(0..3)] = if rng.gen() { c } else { -c - 1e-12 * c };
            p
        } else {
            [rng.gen_range(-4.0 * c..4.0 * c), rng.gen_range(-4.0 * c..4.0 * c), rng.gen_range(-4.0 * c..4.0 * c)]
        };
        if !xi.iter().all(|x| *x >= -c && *x < c) {
            out.push(xi);
        }
    }
    out
}

/// Finitely many Fourier samples `(xi, value)` of a full-space vector field.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierSamples {
    pub freqs: Vec<[f64; 3]>,
    pub values: Vec<[c64; 3]>,
}

impl FourierSamples {
    /// `sum conj(a) . b`.
    pub fn inner(&self, other: &Self) -> c64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (0..3).map(|i| a[i].conj() * b[i]).sum::<c64>()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }

    pub fn sub(&self, other: &Self) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2]]).collect();
        Self { freqs: self.freqs.clone(), values }
    }
}

/// Zero every sample outside the cube `[-1/(2 eps), 1/(2 eps))^3`.
pub fn smoothing_apply(f: &FourierSamples, epsilon: f64) -> FourierSamples {
    let c = 1.0 / (2.0 * epsilon);
    let values = f
        .freqs
        .iter()
        .zip(&f.values)
        .map(|(xi, v)| if xi.iter().all(|x| *x >= -c && *x < c) { *v } else { [ZERO; 3] })
        .collect();
    FourierSamples { freqs: f.freqs.clone(), values }
}

/// The same cutoff through the scaled Gelfand picture: the plane wave of
/// frequency `xi` sits in fiber `chi` at lattice mode `k`, with
/// `2 pi eps xi = chi + 2 pi k`; the fiberwise mean keeps exactly `k = 0`.
pub fn smoothing_via_gelfand(f: &FourierSamples, epsilon: f64) -> FourierSamples {
    let values = f
        .freqs
        .iter()
        .zip(&f.values)
        .map(|(xi, v)| {
            let (_, k) = Quasimomentum::wrap(xi.map(|x| 2.0 * PI * epsilon * x));
            if k == [0, 0, 0] {
                *v
            } else {
                [ZERO; 3]
            }
        })
        .collect();
    FourierSamples { freqs: f.freqs.clone(), values }
}

/// `max |eps^-1 (2 pi k + chi) - omega| / |omega|` over plane waves `e^{i omega x}`:
/// the scaled transform turns `grad` into `eps^-1 (grad_y + i chi)`.
pub fn plane_wave_derivative_defect(omegas: &[[f64; 3]], epsilon: f64) -> f64 {
    omegas
        .iter()
        .map(|w| {
            let (chi, k) = Quasimomentum::wrap(w.map(|x| epsilon * x));
            let d: [f64; 3] = std::array::from_fn(|i| (2.0 * PI * k[i] as f64 + chi.0[i]) / epsilon - w[i]);
            norm3(&d) / norm3(w).max(1e-300)
        })
        .fold(0.0, f64::max)
}

/// Finite lattice signal `s_n`, `n in Z^3`.
pub type LatticeSignal = Vec<([i64; 3], c64)>;

/// `G(chi) = (eps / 2 pi)^(3/2) sum_n e^{-i chi . (y0 + n)} s_n`.
pub fn gelfand_forward(signal: &LatticeSignal, epsilon: f64, y0: [f64; 3], chi: &[f64; 3]) -> c64 {
    let pre = (epsilon / (2.0 * PI)).powf(1.5);
    signal
        .iter()
        .map(|(n, s)| {
            let ph: f64 = (0..3).map(|i| chi[i] * (y0[i] + n[i] as f64)).sum();
            s * c64::from_polar(1.0, -ph)
        })
        .sum::<c64>()
        * pre
}

/// Roundtrip and Parseval defects of the discrete transform with a uniform
/// `nodes^3` midpoint rule on `[-pi, pi)^3`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GelfandCheck {
    pub roundtrip: f64,
    pub parseval: f64,
}

pub fn gelfand_roundtrip_check(signal: &LatticeSignal, epsilon: f64, nodes: usize) -> GelfandCheck {
    let y0 = [0.0; 3];
    let h = 2.0 * PI / nodes as f64;
    let grid: Vec<[f64; 3]> = (0..nodes * nodes * nodes)
        .map(|q| {
            let idx = [q / (nodes * nodes), (q / nodes) % nodes, q % nodes];
            idx.map(|i| -PI + (i as f64 + 0.5) * h)
        })
        .collect();
    let values: Vec<c64> = grid.par_iter().map(|c| gelfand_forward(signal, epsilon, y0, c)).collect();
    let w = h.powi(3);
    let energy: f64 = values.iter().map(|v| v.norm_sqr()).sum::<f64>() * w;
    let sig: f64 = signal.iter().map(|(_, s)| s.norm_sqr()).sum::<f64>();
    let parseval = (energy - epsilon.powi(3) * sig).abs() / (epsilon.powi(3) * sig).max(1e-300);
    let pre = (2.0 * PI * epsilon).powf(-1.5);
    let mut rt: f64 = 0.0;
    for (m, s) in signal {
        let back: c64 = grid
            .iter()
            .zip(&values)
            .map(|(c, g)| {
                let ph: f64 = (0..3).map(|i| c[i] * (y0[i] + m[i] as f64)).sum();
                g * c64::from_polar(1.0, ph)
            })
            .sum::<c64>()
            * (w * pre);
        rt = rt.max((back - s).norm());
    }
    let smax = signal.iter().map(|(_, s)| s.norm()).fold(0.0, f64::max).max(1e-300);
    GelfandCheck { roundtrip: rt / smax, parseval }
}

/// `||R_corr1_eps f - N(y) . (i X_chi u0~)|| / ||f||`, maximised over the inputs,
/// where `N` is built from the six classical correctors.
pub fn two_scale_agreement(solver: &CellSolver, chi: &Quasimomentum, epsilon: f64, gamma: f64, fs: &[TorusField]) -> Result<f64> {
    let blocks = ChiBlocks::new(solver, chi)?;
    let ops = blocks.rescaled(epsilon, gamma, false)?;
    let basis = SymBasis::standard();
    let mut unit = Vec::with_capacity(6);
    for a in 0..6 {
        let mut v = [ZERO; 6];
        v[a] = c64::new(1.0, 0.0);
        unit.push(solve_cell(solver, &basis.matrix(&v))?.field);
    }
    let mut worst: f64 = 0.0;
    for f in fs {
        let u0 = ops.apply_hom(f);
        // i X_chi u0 as a symmetric matrix, then Voigt coordinates
        let mut m = [[ZERO; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = c64::new(0.0, 0.5) * (u0[i] * chi.0[j] + u0[j] * chi.0[i]);
            }
        }
        let v = basis.coords(&m);
        let mut two_scale = TorusField::zeros(solver.lattice);
        for (a, ua) in unit.iter().enumerate() {
            two_scale.axpy(v[a], ua);
        }
        let d = ops.apply_r1(f).sub(&two_scale).l2_norm() / f.l2_norm().max(1e-300);
        worst = worst.max(d);
    }
    Ok(worst)
}

/// Parameters of the epsilon-rate study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonStudyConfig {
    pub gammas: Vec<f64>,
    /// `eps = 2^-j` for these `j`.
    pub eps_exponents: Vec<i32>,
    /// Uniform grid: cell centres of an `n^3` partition of the dual cell.
    pub grid_n: usize,
    /// Directions of the dyadic rays.
    pub rays: Vec<[f64; 3]>,
    /// Largest `|chi|` on the rays.
    pub ray_max: f64,
    /// Rays stop at `|chi| = 2^-ray_min_exp`.
    pub ray_min_exp: i32,
    /// Points per octave on the rays.
    pub ray_per_octave: usize,
    /// Half-width of the box where the second corrector is active.
    pub mu_nbhd: f64,
}

impl Default for EpsilonStudyConfig {
    fn default() -> Self {
        Self {
            gammas: vec![-0.5, 0.0, 1.0],
            eps_exponents: vec![3, 4, 5, 6, 7],
            grid_n: 4,
            rays: vec![[1.0, 0.0, 0.0], [0.6, 0.8, 0.0], [1.0 / 3f64.sqrt(); 3]],
            ray_max: 0.5,
            ray_min_exp: 11,
            ray_per_octave: 3,
            mu_nbhd: 0.5,
        }
    }
}

impl EpsilonStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gammas.iter().any(|g| *g <= -2.0) {
            return Err(Error::Config("gamma must be > -2".into()));
        }
        if self.eps_exponents.len() < 2 || self.grid_n == 0 || self.ray_per_octave == 0 {
            return Err(Error::Config("need >= 2 epsilons, grid_n >= 1, ray_per_octave >= 1".into()));
        }
        if !(self.mu_nbhd > 0.0 && self.mu_nbhd < PI) || !(self.ray_max > 0.0 && self.ray_max < PI) {
            return Err(Error::Config("mu_nbhd and ray_max must lie in (0, pi)".into()));
        }
        for r in &self.rays {
            if (norm3(r) - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("ray direction {r:?} is not a unit vector")));
            }
        }
        Ok(())
    }

    /// Half of the uniform grid (the other half follows from `chi -> -chi`) plus the rays.
    pub fn chi_grid(&self) -> Vec<Quasimomentum> {
        let n = self.grid_n;
        let h = 2.0 * PI / n as f64;
        let mut out = Vec::new();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let chi = [a, b, c].map(|i| -PI + (i as f64 + 0.5) * h);
                    // keep one representative of each +-pair
                    let key = chi.map(|x| (x * 1e9).round() as i64);
                    let neg = key.map(|x| -x);
                    if key > neg || (key == neg && chi != [0.0; 3]) {
                        out.push(Quasimomentum(chi));
                    }
                }
            }
        }
        out.extend(self.ray_points());
        out
    }

    pub fn ray_points(&self) -> Vec<Quasimomentum> {
        let step = 2f64.powf(-1.0 / self.ray_per_octave as f64);
        let stop = 2f64.powi(-self.ray_min_exp);
        let mut out = Vec::new();
        for dir in &self.rays {
            let mut r = self.ray_max;
            while r >= stop * (1.0 - 1e-12) {
                out.push(Quasimomentum(dir.map(|x| r * x)));
                r *= step;
            }
        }
        out
    }

    /// Points used to build the contour: in-box ray points and the box skeleton.
    pub fn contour_grid(&self) -> Vec<Quasimomentum> {
        let mu = self.mu_nbhd;
        let mut out: Vec<Quasimomentum> =
            self.ray_points().into_iter().filter(|q| q.0.iter().all(|x| x.abs() <= mu)).collect();
        for a in -1..=1 {
            for b in -1..=1 {
                for c in -1..=1 {
                    if (a, b, c) != (0, 0, 0) {
                        out.push(Quasimomentum([a, b, c].map(|i| i as f64 * mu)));
                    }
                }
            }
        }
        out
    }
}

/// Rate table for one `gamma`; `err_l2l2`, `err_l2h1`, `err_withcorr` are the three
/// clauses (no corrector in `L2`, first corrector in scaled `H1`, both in `L2`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsRateTable {
    pub gamma: f64,
    pub rows: Vec<RateRow>,
    pub slopes: Slopes,
    /// Required slope floors for the three clauses.
    pub floors: [f64; 3],
    /// Quasimomentum attaining each supremum, per row.
    pub argmax: Vec<[[f64; 3]; 3]>,
}

impl EpsRateTable {
    pub fn passes(&self) -> [bool; 3] {
        let s = [self.slopes.l2l2, self.slopes.l2h1, self.slopes.withcorr];
        std::array::from_fn(|i| s[i].is_some_and(|x| x >= self.floors[i]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsStudy {
    pub tables: Vec<EpsRateTable>,
    pub contour: Contour,
    pub n_chi: usize,
    pub homogenized: HomogenizedTensor,
}

/// Expected slope floors `(gamma+2)/2`, `min{gamma+1, (gamma+2)/2}`, `gamma+2`, minus 0.1.
pub fn slope_floors(gamma: f64) -> [f64; 3] {
    [(gamma + 2.0) / 2.0 - 0.1, (gamma + 1.0).min((gamma + 2.0) / 2.0) - 0.1, gamma + 2.0 - 0.1]
}

/// `Err(eps) = sup_chi` of the fiber norms of the three differences.
pub fn epsilon_rate_study(solver: &CellSolver, cfg: &EpsilonStudyConfig) -> Result<EpsStudy> {
    cfg.validate()?;
    let contour = build_contour(solver, &cfg.contour_grid(), None)?;
    let chis = cfg.chi_grid();
    let eps: Vec<f64> = cfg.eps_exponents.iter().map(|j| 2f64.powi(-j)).collect();
    let per_chi: Vec<Vec<Vec<[f64; 3]>>> =
        chis.par_iter().map(|chi| fiber_eps_errors(solver, chi, &cfg.gammas, &eps, &contour)).collect::<Result<_>>()?;
    let mut tables = Vec::new();
    for (gi, &gamma) in cfg.gammas.iter().enumerate() {
        let mut rows = Vec::new();
        let mut argmax = Vec::new();
        for (ei, &e) in eps.iter().enumerate() {
            let mut best = [0.0f64; 3];
            let mut arg = [[0.0; 3]; 3];
            for (ci, per) in per_chi.iter().enumerate() {
                for q in 0..3 {
                    if per[gi][ei][q] > best[q] {
                        best[q] = per[gi][ei][q];
                        arg[q] = chis[ci].0;
                    }
                }
            }
            rows.push(RateRow { scale: e, err_l2l2: best[0], err_l2h1: best[1], err_withcorr: best[2] });
            argmax.push(arg);
        }
        let slopes = fit_slopes(&rows);
        tables.push(EpsRateTable { gamma, rows, slopes, floors: slope_floors(gamma), argmax });
    }
    Ok(EpsStudy { tables, contour, n_chi: chis.len(), homogenized: homogenized_tensor(solver)? })
}

/// Per `gamma`, per `eps`: the three fiber norms at one quasimomentum.
pub fn fiber_eps_errors(
    solver: &CellSolver,
    chi: &Quasimomentum,
    gammas: &[f64],
    eps: &[f64],
    contour: &Contour,
) -> Result<Vec<Vec<[f64; 3]>>> {
    let lattice = solver.lattice;
    let n = lattice.dim();
    let zi = lattice.zero_index();
    let op = assemble_fiber(&solver.tr, chi);
    let FiberEigen { values: vals, vectors: v, .. } = op.eigen_refined()?;
    let blocks = ChiBlocks::new(solver, chi)?;
    let in_box = contour.in_box(chi);
    let g: Vec<f64> = (0..n)
        .map(|i| {
            let q = lattice.shifted_wave(i / 3, &chi.0);
            q[0] * q[0] + q[1] * q[1] + q[2] * q[2]
        })
        .collect();
    let gv = Mat::from_fn(n, n, |i, j| v[(i, j)] * g[i]);
    let f = v.adjoint() * &gv;
    let p_e0 = Mat::from_fn(n, 3, |c, a| v[(3 * zi + a, c)].conj());
    let p_b = v.adjoint() * &blocks.b;
    let p_u = &p_e0 + &p_b;
    let mut out = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let mut row = Vec::with_capacity(eps.len());
        for &e in eps {
            let s = e.powf(-gamma - 2.0);
            let d: Vec<c64> = vals.iter().map(|l| c64::new(1.0 / (s * l + 1.0), 0.0)).collect();
            let ops = blocks.rescaled(e, gamma, in_box)?;
            let y = ops.rh;
            // r1 = V^* E0 Y^*, so that r1^* = Y E0^* V
            let r1 = Mat::from_fn(n, 3, |c, a| (0..3).map(|b| y[a][b].conj() * p_e0[(c, b)]).sum::<c64>());
            let c1 = norm_diag_minus_lowrank(&d, p_e0.as_ref(), r1.as_ref())?;
            // both correctors: diag(d) - [V^*U, V^*E0] [Y E0^* V; r2 V]
            let r2v = &ops.r2 * &v;
            let p3 = Mat::from_fn(n, 6, |c, a| if a < 3 { p_u[(c, a)] } else { p_e0[(c, a - 3)] });
            let r3 = Mat::from_fn(n, 6, |c, a| if a < 3 { r1[(c, a)] } else { r2v[(a - 3, c)].conj() });
            let c3 = norm_diag_minus_lowrank(&d, p3.as_ref(), r3.as_ref())?;
            // first corrector in the scaled H1 norm: lambda_max(Dt^* (I + F / eps^2) Dt)
            let inv_e2 = 1.0 / (e * e);
            let dt = |x: &[c64]| -> Vec<c64> {
                let t: [c64; 3] = std::array::from_fn(|a| (0..n).map(|c| r1[(c, a)].conj() * x[c]).sum());
                (0..n).map(|c| d[c] * x[c] - (0..3).map(|a| p_u[(c, a)] * t[a]).sum::<c64>()).collect()
            };
            let dt_adj = |x: &[c64]| -> Vec<c64> {
                let t: [c64; 3] = std::array::from_fn(|a| (0..n).map(|c| p_u[(c, a)].conj() * x[c]).sum());
                (0..n).map(|c| d[c].conj() * x[c] - (0..3).map(|a| r1[(c, a)] * t[a]).sum::<c64>()).collect()
            };
            let apply = |x: &[c64]| -> Vec<c64> {
                let y1 = dt(x);
                let col = crate::linalg::vec_to_col(&y1);
                let fy = &f * &col;
                let y2: Vec<c64> = (0..n).map(|i| y1[i] + fy[(i, 0)] * inv_e2).collect();
                dt_adj(&y2)
            };
            let c2 = lanczos_lambda_max(n, apply, 200).max(0.0).sqrt();
            row.push([c1, c2, c3]);
        }
        out.push(row);
    }
    Ok(out)
}

/// Random fields for the two-scale check, seeded.
pub fn random_fields(lattice: crate::torus::Lattice, count: usize, seed: u64) -> Vec<TorusField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| TorusField::random(lattice, &mut rng)).collect()
}

/// Norm of a vector of samples, helper for the smoothing checks.
pub fn samples_norm(v: &[c64]) -> f64 {
    vec_norm(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_norm;
    use faer::linalg::solvers::Solve;
    use crate::tensor::{make_isotropic, make_laminate, CoefficientField};

    fn lam_solver(k: usize) -> CellSolver {
        let f = make_laminate(make_isotropic(1.0, 1.0).unwrap(), make_isotropic(2.0, 2.0).unwrap(), 0.5, 1, 8).unwrap();
        CellSolver::new(&f, k).unwrap()
    }

    #[test]
    fn smoothing_bounds_and_scaling() {
        let hom = homogenized_tensor(&lam_solver(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst = Vec::new();
        for j in 2..7 {
            let e = 2f64.powi(-j);
            let xs = sample_outside_cutoff(e, 1000, &mut rng);
            let c = smoothing_multiplier_check(&hom, e, 0.0, &xs).unwrap();
            assert!(c.holds(), "{c:?}");
            worst.push(c.ratio_l2 * e.powi(2));
        }
        // worst bound roughly quarters when eps halves
        for w in worst.windows(2) {
            let r = w[1] / w[0];
            assert!(r > 0.2 && r < 0.3, "{r}");
        }
        let iso = HomogenizedTensor::from_voigt(make_isotropic(1.0, 1.0).unwrap().voigt(), String::new(), 0);
        let e = 0.1;
        let edge = [[1.0 / (2.0 * e), 0.0, 0.0]];
        let c = smoothing_multiplier_check(&iso, e, 0.0, &edge).unwrap();
        assert!(c.ratio_l2 <= 4.0 / c.nu1);
        assert!(smoothing_multiplier_check(&iso, e, 0.0, &[[0.0; 3]]).is_err());
    }

    #[test]
    fn smoothing_is_orthogonal_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = 0.05;
        let freqs: Vec<[f64; 3]> = (0..400).map(|_| [0; 3].map(|_: i32| rng.gen_range(-25.0..25.0))).collect();
        let mk = |rng: &mut ChaCha8Rng| FourierSamples {
            freqs: freqs.clone(),
            values: (0..freqs.len()).map(|_| [0; 3].map(|_: i32| c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))).collect(),
        };
        let (f, g) = (mk(&mut rng), mk(&mut rng));
        let pf = smoothing_apply(&f, e);
        assert_eq!(smoothing_apply(&pf, e), pf);
        let lhs = pf.inner(&g);
        let rhs = f.inner(&smoothing_apply(&g, e));
        assert!((lhs - rhs).norm() < 1e-12);
        // the Gelfand route agrees sample by sample
        assert_eq!(smoothing_via_gelfand(&f, e), pf);
        let rest = f.sub(&pf);
        assert!((f.norm().powi(2) - pf.norm().powi(2) - rest.norm().powi(2)).abs() < 1e-10);
        // inside / outside supports
        let inside = FourierSamples { freqs: vec![[1.0, -2.0, 3.0]], values: vec![[c64::new(1.0, 0.0); 3]] };
        assert_eq!(smoothing_apply(&inside, e), inside);
        let outside = FourierSamples { freqs: vec![[10.0, 0.0, 0.0]], values: vec![[c64::new(1.0, 0.0); 3]] };
        assert_eq!(smoothing_apply(&outside, e).norm(), 0.0);
    }

    #[test]
    fn plane_wave_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let om: Vec<[f64; 3]> = (0..200).map(|_| [0; 3].map(|_: i32| rng.gen_range(-300.0..300.0))).collect();
        assert!(plane_wave_derivative_defect(&om, 0.01) < 1e-12);
    }

    #[test]
    fn gelfand_roundtrip() {
        let spike: LatticeSignal = vec![([0, 0, 0], c64::new(1.0, 0.0))];
        let c = gelfand_roundtrip_check(&spike, 0.1, 8);
        assert!(c.roundtrip < 1e-12 && c.parseval < 1e-12);
        // translation picks up a phase
        let chi = [0.3, -0.7, 1.1];
        let a = gelfand_forward(&vec![([0, 0, 0], c64::new(2.0, 1.0))], 0.2, [0.0; 3], &chi);
        let b = gelfand_forward(&vec![([1, 2, -1], c64::new(2.0, 1.0))], 0.2, [0.0; 3], &chi);
        let ph = c64::from_polar(1.0, -(chi[0] + 2.0 * chi[1] - chi[2]));
        assert!((b - a * ph).norm() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut pos: Vec<[i64; 3]> = (0..40).map(|_| [0; 3].map(|_: i32| rng.gen_range(-3..=3))).collect();
        pos.sort();
        pos.dedup();
        let sig: LatticeSignal = pos.into_iter().map(|p| (p, c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))).collect();
        let c = gelfand_roundtrip_check(&sig, 0.3, 32);
        assert!(c.parseval < 1e-10 && c.roundtrip < 1e-10, "{c:?}");
        // too few nodes alias
        let c = gelfand_roundtrip_check(&sig, 0.3, 4);
        assert!(c.roundtrip > 1e-6);
    }

    #[test]
    fn two_scale_matches_corrector() {
        let s = lam_solver(1);
        let fs = random_fields(s.lattice, 5, 7);
        for &(chi, e) in &[([0.3, 0.1, -0.2], 0.1), ([1.5, -2.0, 0.4], 0.02)] {
            let d = two_scale_agreement(&s, &Quasimomentum(chi), e, 0.0, &fs).unwrap();
            assert!(d <= 1e-9, "{d}");
        }
        let h = CellSolver::new(&CoefficientField::homogeneous(make_isotropic(1.0, 1.0).unwrap()), 1).unwrap();
        assert!(two_scale_agreement(&h, &Quasimomentum([0.2, 0.0, 0.0]), 0.1, 0.0, &fs).unwrap() < 1e-14);
    }

    #[test]
    fn chi_grid_shape() {
        let cfg = EpsilonStudyConfig::default();
        let g = cfg.chi_grid();
        assert_eq!(g.len(), 32 + cfg.ray_points().len());
        assert!(g.iter().all(|q| q.norm() > 0.0 && q.0.iter().all(|x| *x >= -PI && *x < PI)));
        assert!(cfg.ray_points().iter().any(|q| (q.norm() - 2f64.powi(-11)).abs() < 1e-6 * 2f64.powi(-11)));
    }

    #[test]
    fn fiber_errors_match_dense() {
        let s = lam_solver(1);
        let cfg = EpsilonStudyConfig::default();
        let contour = build_contour(&s, &cfg.contour_grid(), None).unwrap();
        let chi = Quasimomentum([0.1, 0.05, -0.02]);
        let (gamma, e) = (0.0, 0.1);
        let got = fiber_eps_errors(&s, &chi, &[gamma], &[e], &contour).unwrap()[0][0];
        // dense reference
        let op = assemble_fiber(&s.tr, &chi);
        let n = op.dim();
        let sc = e.powf(-gamma - 2.0);
        let m = Mat::from_fn(n, n, |i, j| op.matrix[(i, j)] * sc + if i == j { c64::new(1.0, 0.0) } else { ZERO });
        let exact = m.partial_piv_lu().solve(Mat::<c64>::identity(n, n));
        let ops = ChiBlocks::new(&s, &chi).unwrap().rescaled(e, gamma, contour.in_box(&chi)).unwrap();
        let mut no_corr = ops.dense(false);
        let zi = s.lattice.zero_index();
        for i in 0..n {
            if i / 3 != zi {
                for c in 0..3 {
                    no_corr[(i, 3 * zi + c)] = ZERO;
                }
            }
        }
        let d1 = &exact - &no_corr;
        let d2 = &exact - ops.dense(false);
        let d3 = &exact - ops.dense(true);
        let w: Vec<f64> = (0..n)
            .map(|i| {
                let q = s.lattice.shifted_wave(i / 3, &chi.0);
                (1.0 + (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]) / (e * e)).sqrt()
            })
            .collect();
        let wd2 = Mat::from_fn(n, n, |i, j| d2[(i, j)] * w[i]);
        let r = [spectral_norm(d1.as_ref()).unwrap(), spectral_norm(wd2.as_ref()).unwrap(), spectral_norm(d3.as_ref()).unwrap()];
        for q in 0..3 {
            assert!((got[q] - r[q]).abs() <= 1e-8 * r[q].max(1e-12), "{q} {} {}", got[q], r[q]);
        }
    }
}
