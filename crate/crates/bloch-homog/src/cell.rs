//! Classical and quasimomentum cell problems, the homogenized tensor and the
//! fiber homogenized matrix.

use std::path::{Path, PathBuf};

use faer::linalg::solvers::{Llt, Solve};
use faer::{c64, Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{assemble_fiber, strain_symbols, CoefficientTransform, Quadrature, V6};
use crate::linalg::{m3_eigvals_herm, sym_eigvals_real, vec_norm, M3, ZERO};
use crate::tensor::{sym_outer_voigt, CoefficientField, ElasticTensor, SymBasis, BASIS_TAG};
use crate::torus::{Lattice, Quasimomentum, TorusField};

/// Strain fields: one Voigt 6-vector per lattice mode.
pub type Strain = Vec<[c64; 6]>;

const IU: c64 = c64 { re: 0.0, im: 1.0 };

/// Factorised cell operator `K0 = G0^* A G0` on the nonconstant modes, together with
/// the strain-space building blocks used by the expansions.
pub struct CellSolver {
    pub tr: CoefficientTransform,
    pub lattice: Lattice,
    syms0: Vec<[[f64; 3]; 6]>,
    k0: Mat<c64>,
    llt: Llt<c64>,
}

impl CellSolver {
    pub fn new(field: &CoefficientField, k: usize) -> Result<Self> {
        Self::from_transform(CoefficientTransform::new(field, k, Quadrature::Exact)?)
    }

    pub fn from_transform(tr: CoefficientTransform) -> Result<Self> {
        let lattice = tr.lattice;
        let a0 = assemble_fiber(&tr, &Quasimomentum([0.0; 3])).matrix;
        let z = lattice.zero_index();
        let keep: Vec<usize> = (0..lattice.dim()).filter(|i| i / 3 != z).collect();
        let d = keep.len();
        let k0 = Mat::from_fn(d, d, |i, j| a0[(keep[i], keep[j])]);
        let llt = k0
            .llt(Side::Lower)
            .map_err(|e| Error::Numerical(format!("cell operator not positive definite: {e:?}")))?;
        let syms0 = strain_symbols(&lattice, &[0.0; 3]);
        Ok(Self { tr, lattice, syms0, k0, llt })
    }

    pub fn k(&self) -> usize {
        self.lattice.k
    }

    fn compress(&self, v: &[c64]) -> Vec<c64> {
        let z = self.lattice.zero_index();
        v.iter().enumerate().filter(|(i, _)| i / 3 != z).map(|(_, x)| *x).collect()
    }

    fn expand(&self, v: &[c64]) -> Vec<c64> {
        let z = self.lattice.zero_index();
        let mut out = Vec::with_capacity(self.lattice.dim());
        let mut it = v.iter();
        for i in 0..self.lattice.dim() {
            out.push(if i / 3 == z { ZERO } else { *it.next().unwrap() });
        }
        out
    }

    /// Solve `K0 u = P_perp rhs` for a zero-mean `u`; returns `(u, relative residual)`.
    pub fn solve_perp(&self, rhs: &[c64]) -> (Vec<c64>, f64) {
        let b = self.compress(rhs);
        let bm = crate::linalg::vec_to_col(&b);
        let x = self.llt.solve(&bm);
        let r = &self.k0 * &x - &bm;
        let res = crate::linalg::frob(r.as_ref()) / vec_norm(&b).max(1e-300);
        (self.expand(&crate::linalg::col_to_vec(x.as_ref(), 0)), res)
    }

    /// Multi-column version of [`Self::solve_perp`]; columns are full-length vectors.
    pub fn solve_perp_mat(&self, rhs: &Mat<c64>) -> Mat<c64> {
        let z = self.lattice.zero_index();
        let keep: Vec<usize> = (0..self.lattice.dim()).filter(|i| i / 3 != z).collect();
        let b = Mat::from_fn(keep.len(), rhs.ncols(), |i, j| rhs[(keep[i], j)]);
        let x = self.llt.solve(&b);
        let mut out = Mat::<c64>::zeros(self.lattice.dim(), rhs.ncols());
        for (p, &i) in keep.iter().enumerate() {
            for j in 0..rhs.ncols() {
                out[(i, j)] = x[(p, j)];
            }
        }
        out
    }

    /// `G0 u`: per mode `i B(2 pi k) a_k`.
    pub fn g0(&self, u: &[c64]) -> Strain {
        apply_symbols(&self.syms0, u)
    }

    /// `X u`: per mode `i B(chi) a_k`.
    pub fn x(&self, chi: &[f64; 3], u: &[c64]) -> Strain {
        let b = sym_outer_voigt(*chi);
        (0..self.lattice.n_modes()).map(|n| sym_apply(&b, &u[3 * n..3 * n + 3])).collect()
    }

    /// `G0^* s`.
    pub fn g0_adj(&self, s: &Strain) -> Vec<c64> {
        let mut out = vec![ZERO; self.lattice.dim()];
        for (n, sn) in s.iter().enumerate() {
            sym_adj(&self.syms0[n], sn, &mut out[3 * n..3 * n + 3]);
        }
        out
    }

    /// `X^* s`.
    pub fn x_adj(&self, chi: &[f64; 3], s: &Strain) -> Vec<c64> {
        let b = sym_outer_voigt(*chi);
        let mut out = vec![ZERO; self.lattice.dim()];
        for (n, sn) in s.iter().enumerate() {
            sym_adj(&b, sn, &mut out[3 * n..3 * n + 3]);
        }
        out
    }

    /// `(A s)_l = sum_k A_hat(l - k) s_k`.
    pub fn big_a(&self, s: &Strain) -> Strain {
        let l = self.lattice;
        let n = l.n_modes();
        let support: Vec<usize> = (0..n).filter(|&k| s[k].iter().any(|x| *x != ZERO)).collect();
        let mut out = vec![[ZERO; 6]; n];
        for (a, o) in out.iter_mut().enumerate() {
            let ma = l.mode(a);
            for &b in &support {
                let mb = l.mode(b);
                let blk = self.tr.get([ma[0] - mb[0], ma[1] - mb[1], ma[2] - mb[2]]);
                mat6_vec_acc(blk, &s[b], o);
            }
        }
        out
    }

    /// Mode-0 value of `A s`, i.e. the cell average of the stress.
    pub fn big_a_mean(&self, s: &Strain) -> [c64; 6] {
        let l = self.lattice;
        let mut o = [ZERO; 6];
        for (b, sb) in s.iter().enumerate() {
            let mb = l.mode(b);
            mat6_vec_acc(self.tr.get([-mb[0], -mb[1], -mb[2]]), sb, &mut o);
        }
        o
    }

    /// Strain field that equals `v` at mode 0 and vanishes elsewhere.
    pub fn constant_strain(&self, v: [c64; 6]) -> Strain {
        let mut s = vec![[ZERO; 6]; self.lattice.n_modes()];
        s[self.lattice.zero_index()] = v;
        s
    }
}

fn apply_symbols(syms: &[[[f64; 3]; 6]], u: &[c64]) -> Strain {
    syms.iter().enumerate().map(|(n, b)| sym_apply(b, &u[3 * n..3 * n + 3])).collect()
}

fn sym_apply(b: &[[f64; 3]; 6], a: &[c64]) -> [c64; 6] {
    let mut e = [ZERO; 6];
    for p in 0..6 {
        e[p] = IU * (b[p][0] * a[0] + b[p][1] * a[1] + b[p][2] * a[2]);
    }
    e
}

fn sym_adj(b: &[[f64; 3]; 6], s: &[c64; 6], out: &mut [c64]) {
    for j in 0..3 {
        let mut acc = ZERO;
        for p in 0..6 {
            acc += b[p][j] * s[p];
        }
        out[j] += -IU * acc;
    }
}

fn mat6_vec_acc(a: &V6, v: &[c64; 6], out: &mut [c64; 6]) {
    for i in 0..6 {
        let mut s = ZERO;
        for j in 0..6 {
            s += a[i][j] * v[j];
        }
        out[i] += s;
    }
}

/// What a cell solution answers.
#[derive(Clone, Debug, PartialEq)]
pub enum CellRhs {
    /// Classical corrector for a constant strain.
    Strain(M3),
    /// Quasimomentum corrector for `(chi, c)`.
    Fiber { chi: Quasimomentum, c: [c64; 3] },
}

#[derive(Clone, Debug)]
pub struct CellSolution {
    pub rhs: CellRhs,
    pub field: TorusField,
    pub residual: f64,
}

fn checked(rhs: CellRhs, u: Vec<c64>, res: f64, lattice: Lattice) -> Result<CellSolution> {
    if res > 1e-10 {
        return Err(Error::Numerical(format!("cell solve residual {res:.3e}")));
    }
    Ok(CellSolution { rhs, field: TorusField::from_coeffs(lattice, u), residual: res })
}

/// Zero-mean `u` with `int A (xi + sym grad u) : sym grad v = 0` for all `v`.
pub fn solve_cell(solver: &CellSolver, xi: &M3) -> Result<CellSolution> {
    let v = SymBasis::standard().coords(xi);
    let load = solver.g0_adj(&solver.big_a(&solver.constant_strain(v)));
    let rhs: Vec<c64> = load.iter().map(|x| -x).collect();
    if vec_norm(&rhs) == 0.0 {
        return Ok(CellSolution { rhs: CellRhs::Strain(*xi), field: TorusField::zeros(solver.lattice), residual: 0.0 });
    }
    let (u, res) = solver.solve_perp(&rhs);
    checked(CellRhs::Strain(*xi), u, res, solver.lattice)
}

/// Zero-mean `u_c` with `int A (sym grad u_c + i X_chi c) : sym grad v = 0`.
pub fn solve_chi_cell(solver: &CellSolver, chi: &Quasimomentum, c: [c64; 3]) -> Result<CellSolution> {
    let mut u0 = vec![ZERO; solver.lattice.dim()];
    let z = solver.lattice.zero_index();
    u0[3 * z..3 * z + 3].copy_from_slice(&c);
    let load = solver.g0_adj(&solver.big_a(&solver.x(&chi.0, &u0)));
    let rhs: Vec<c64> = load.iter().map(|x| -x).collect();
    let rhs_desc = CellRhs::Fiber { chi: *chi, c };
    if vec_norm(&rhs) == 0.0 {
        return Ok(CellSolution { rhs: rhs_desc, field: TorusField::zeros(solver.lattice), residual: 0.0 });
    }
    let (u, res) = solver.solve_perp(&rhs);
    checked(rhs_desc, u, res, solver.lattice)
}

/// Effective tensor in the orthonormal Voigt basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedTensor {
    pub voigt: [[f64; 6]; 6],
    pub basis: String,
    /// Smallest eigenvalue of `voigt`.
    pub nu_hom: f64,
    /// Largest eigenvalue of `voigt`.
    pub upper_hom: f64,
    pub coeffs_hash: String,
    pub k: usize,
    /// Asymmetry of the direct assembly before averaging.
    pub symmetry_defect: f64,
    /// Difference between the direct and the energy-form assembly.
    pub energy_defect: f64,
}

impl HomogenizedTensor {
    pub fn from_voigt(voigt: [[f64; 6]; 6], coeffs_hash: String, k: usize) -> Self {
        let flat: Vec<f64> = voigt.iter().flatten().copied().collect();
        let e = sym_eigvals_real(&flat, 6);
        Self { voigt, basis: BASIS_TAG.into(), nu_hom: e[0], upper_hom: e[5], coeffs_hash, k, symmetry_defect: 0.0, energy_defect: 0.0 }
    }

    pub fn tensor(&self) -> ElasticTensor {
        ElasticTensor::from_voigt(&self.voigt)
    }

    /// `nu |xi|^2 <= A_hom xi : xi <= |xi|^2 / nu` with the measured constant.
    pub fn two_sided_nu(&self) -> f64 {
        self.nu_hom.min(1.0 / self.upper_hom)
    }

    /// `(i X_chi)^* A_hom (i X_chi) = B(chi)^T V B(chi)`.
    pub fn fiber_matrix(&self, chi: &[f64; 3]) -> M3 {
        let b = sym_outer_voigt(*chi);
        let mut m = [[ZERO; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for p in 0..6 {
                    for q in 0..6 {
                        s += b[p][i] * self.voigt[p][q] * b[q][j];
                    }
                }
                m[i][j] = c64::new(s, 0.0);
            }
        }
        m
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Build the effective tensor from the six basis correctors, cross-checked against
/// the symmetric energy form.
pub fn homogenized_tensor(solver: &CellSolver) -> Result<HomogenizedTensor> {
    let basis = SymBasis::standard();
    let mut direct = [[0.0; 6]; 6];
    let mut imag: f64 = 0.0;
    let mut strains: Vec<Strain> = Vec::with_capacity(6);
    for j in 0..6 {
        let xi = basis.matrix(&unit6(j));
        let u = solve_cell(solver, &xi)?;
        let mut s = solver.g0(&u.field.coeffs);
        s[solver.lattice.zero_index()] = unit6(j);
        let mean = solver.big_a_mean(&s);
        for i in 0..6 {
            direct[i][j] = mean[i].re;
            imag = imag.max(mean[i].im.abs());
        }
        strains.push(s);
    }
    let scale = direct.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    let mut sym_defect: f64 = imag / scale;
    for i in 0..6 {
        for j in 0..6 {
            sym_defect = sym_defect.max((direct[i][j] - direct[j][i]).abs() / scale);
        }
    }
    if sym_defect > 1e-10 {
        return Err(Error::Numerical(format!("homogenized tensor asymmetric: {sym_defect:.3e}")));
    }
    // energy form a(e_j, e_i) = <A E_j, E_i>
    let mut energy_defect: f64 = 0.0;
    let stresses: Vec<Strain> = strains.iter().map(|s| solver.big_a(s)).collect();
    for i in 0..6 {
        for j in 0..6 {
            let e: c64 = strains[i]
                .iter()
                .zip(&stresses[j])
                .map(|(a, b)| (0..6).map(|p| a[p].conj() * b[p]).sum::<c64>())
                .sum();
            energy_defect = energy_defect.max((e - c64::new(direct[i][j], 0.0)).norm() / scale);
        }
    }
    let mut voigt = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            voigt[i][j] = 0.5 * (direct[i][j] + direct[j][i]);
        }
    }
    let mut h = HomogenizedTensor::from_voigt(voigt, solver.tr.hash.clone(), solver.k());
    h.symmetry_defect = sym_defect;
    h.energy_defect = energy_defect;
    Ok(h)
}

fn unit6(j: usize) -> [c64; 6] {
    let mut v = [ZERO; 6];
    v[j] = c64::new(1.0, 0.0);
    v
}

/// Cache file for `(coefficient hash, K)` inside `dir`.
pub fn cache_path(dir: &Path, hash: &str, k: usize) -> PathBuf {
    dir.join(format!("ahom-{hash}-K{k}.json"))
}

/// [`homogenized_tensor`] backed by a JSON file cache; returns `(tensor, cache_hit)`.
pub fn homogenized_tensor_cached(solver: &CellSolver, dir: Option<&Path>) -> Result<(HomogenizedTensor, bool)> {
    if let Some(d) = dir {
        let p = cache_path(d, &solver.tr.hash, solver.k());
        if let Ok(text) = std::fs::read_to_string(&p) {
            if let Ok(h) = serde_json::from_str::<HomogenizedTensor>(&text) {
                return Ok((h, true));
            }
        }
        let h = homogenized_tensor(solver)?;
        std::fs::create_dir_all(d)?;
        std::fs::write(&p, h.to_json()?)?;
        return Ok((h, false));
    }
    Ok((homogenized_tensor(solver)?, false))
}

/// The 3x3 Hermitian matrix of the fiber-homogenized form.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberHomMatrix {
    pub chi: Quasimomentum,
    pub matrix: M3,
    pub hermitian_defect: f64,
    /// Difference to the symmetric-form assembly.
    pub form_defect: f64,
}

impl FiberHomMatrix {
    pub fn eigenvalues(&self) -> Vec<f64> {
        m3_eigvals_herm(&self.matrix)
    }
}

/// `<A_hom_chi c, d> = int A (sym grad u_c + i X_chi c) : conj(i X_chi d)`.
pub fn fiber_hom_matrix(solver: &CellSolver, chi: &Quasimomentum) -> Result<FiberHomMatrix> {
    let z = solver.lattice.zero_index();
    let mut strains = Vec::with_capacity(3);
    let mut m = [[ZERO; 3]; 3];
    for j in 0..3 {
        let mut c = [ZERO; 3];
        c[j] = c64::new(1.0, 0.0);
        let u = solve_chi_cell(solver, chi, c)?;
        let mut s = solver.g0(&u.field.coeffs);
        let mut e0 = vec![ZERO; solver.lattice.dim()];
        e0[3 * z + j] = c64::new(1.0, 0.0);
        let xs = solver.x(&chi.0, &e0);
        for p in 0..6 {
            s[z][p] += xs[z][p];
        }
        let stress_mean = solver.big_a_mean(&s);
        let col = solver.x_adj(&chi.0, &solver.constant_strain(stress_mean));
        for i in 0..3 {
            m[i][j] = col[3 * z + i];
        }
        strains.push(s);
    }
    let scale = m.iter().flatten().fold(0.0f64, |a, x| a.max(x.norm())).max(1e-300);
    let mut herm: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            herm = herm.max((m[i][j] - m[j][i].conj()).norm() / scale);
        }
    }
    let mut form: f64 = 0.0;
    let stresses: Vec<Strain> = strains.iter().map(|s| solver.big_a(s)).collect();
    for i in 0..3 {
        for j in 0..3 {
            let e: c64 = strains[i]
                .iter()
                .zip(&stresses[j])
                .map(|(a, b)| (0..6).map(|p| a[p].conj() * b[p]).sum::<c64>())
                .sum();
            form = form.max((e - m[i][j]).norm() / scale);
        }
    }
    let mut hm = m;
    for i in 0..3 {
        for j in 0..3 {
            hm[i][j] = 0.5 * (m[i][j] + m[j][i].conj());
        }
    }
    Ok(FiberHomMatrix { chi: *chi, matrix: hm, hermitian_defect: herm, form_defect: form })
}

/// Exact homogenized Voigt matrix of a slab laminate with normal `e_axis`,
/// from the piecewise-constant solution of the 1D cell ODE
/// `((A xi) n + K(y) u')' = 0`, `<u'> = 0`, where `K` is the acoustic tensor.
pub fn laminate_cell_oracle(layers: &[(ElasticTensor, f64)], axis: usize) -> Result<[[f64; 6]; 6]> {
    let n = unit3(axis);
    let total: f64 = layers.iter().map(|l| l.1).sum();
    let basis = SymBasis::standard();
    let mut kinv = Vec::with_capacity(layers.len());
    for (t, _) in layers {
        kinv.push(crate::linalg::m3_inverse(&acoustic(t, &n))?);
    }
    let mut avg_kinv = [[ZERO; 3]; 3];
    for ((_, th), ki) in layers.iter().zip(&kinv) {
        avg_kinv = crate::linalg::m3_add(&avg_kinv, ki, c64::new(th / total, 0.0));
    }
    let avg_kinv_inv = crate::linalg::m3_inverse(&avg_kinv)?;
    let mut out = [[0.0; 6]; 6];
    for b in 0..6 {
        let xi = basis.matrix(&unit6(b));
        let tractions: Vec<[c64; 3]> = layers.iter().map(|(t, _)| mat_vec_n(&t.apply(&xi), &n)).collect();
        let mut rhs = [ZERO; 3];
        for (((_, th), ki), tr) in layers.iter().zip(&kinv).zip(&tractions) {
            let w = crate::linalg::m3_vec(ki, tr);
            for i in 0..3 {
                rhs[i] += w[i] * (th / total);
            }
        }
        let traction = crate::linalg::m3_vec(&avg_kinv_inv, &rhs);
        let mut mean = [[ZERO; 3]; 3];
        for (((t, th), ki), tr) in layers.iter().zip(&kinv).zip(&tractions) {
            let diff = [traction[0] - tr[0], traction[1] - tr[1], traction[2] - tr[2]];
            let a = crate::linalg::m3_vec(ki, &diff);
            let mut strain = xi;
            for i in 0..3 {
                for j in 0..3 {
                    strain[i][j] += 0.5 * (a[i] * n[j] + a[j] * n[i]);
                }
            }
            mean = crate::linalg::m3_add(&mean, &t.apply(&strain), c64::new(th / total, 0.0));
        }
        let col = basis.coords(&mean);
        for a in 0..6 {
            out[a][b] = col[a].re;
        }
    }
    Ok(out)
}

/// The same laminate cell problem by a 1D Fourier-Galerkin solve with `|k| <= K`
/// along the normal; returns the homogenized Voigt matrix.
pub fn laminate_galerkin_1d(layers: &[(ElasticTensor, f64)], axis: usize, k: usize) -> Result<[[f64; 6]; 6]> {
    use std::f64::consts::PI;
    let n = unit3(axis);
    let total: f64 = layers.iter().map(|l| l.1).sum();
    let basis = SymBasis::standard();
    // slab boundaries
    let mut edges = vec![0.0];
    for (_, th) in layers {
        let last = *edges.last().unwrap();
        edges.push(last + th / total);
    }
    let slab_ft = |m: i64, s: usize| -> c64 {
        let (a, b) = (edges[s], edges[s + 1]);
        if m == 0 {
            c64::new(b - a, 0.0)
        } else {
            let w = 2.0 * PI * m as f64;
            (c64::from_polar(1.0, -w * a) - c64::from_polar(1.0, -w * b)) / c64::new(0.0, w)
        }
    };
    let ki = k as i64;
    let modes: Vec<i64> = (-ki..=ki).filter(|&m| m != 0).collect();
    let dim = 3 * modes.len();
    let acoustics: Vec<M3> = layers.iter().map(|(t, _)| acoustic(t, &n)).collect();
    // system: sum_k K_hat(l - k) (2 pi i k) a_k = -F_hat(l)
    let mut sys = Mat::<c64>::zeros(dim, dim);
    for (p, &lm) in modes.iter().enumerate() {
        for (q, &km) in modes.iter().enumerate() {
            for (s, ac) in acoustics.iter().enumerate() {
                let w = slab_ft(lm - km, s) * c64::new(0.0, 2.0 * PI * km as f64);
                for i in 0..3 {
                    for j in 0..3 {
                        sys[(3 * p + i, 3 * q + j)] += w * ac[i][j];
                    }
                }
            }
        }
    }
    let lu = sys.partial_piv_lu();
    let mut out = [[0.0; 6]; 6];
    for b in 0..6 {
        let xi = basis.matrix(&unit6(b));
        let tractions: Vec<[c64; 3]> = layers.iter().map(|(t, _)| mat_vec_n(&t.apply(&xi), &n)).collect();
        let rhs = Mat::from_fn(dim, 1, |r, _| {
            let (p, i) = (r / 3, r % 3);
            -(0..layers.len()).map(|s| slab_ft(modes[p], s) * tractions[s][i]).sum::<c64>()
        });
        let a = lu.solve(&rhs);
        // mean stress: sum_s [A_s xi |slab| + sum_k slab_ft(-k) A_s sym((2 pi i k a_k) (x) n)]
        let mut mean = [[ZERO; 3]; 3];
        for (s, (t, th)) in layers.iter().enumerate() {
            mean = crate::linalg::m3_add(&mean, &t.apply(&xi), c64::new(th / total, 0.0));
            for (p, &km) in modes.iter().enumerate() {
                let g = c64::new(0.0, 2.0 * PI * km as f64);
                let mut strain = [[ZERO; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        strain[i][j] = 0.5 * g * (a[(3 * p + i, 0)] * n[j] + a[(3 * p + j, 0)] * n[i]);
                    }
                }
                mean = crate::linalg::m3_add(&mean, &t.apply(&strain), slab_ft(-km, s));
            }
        }
        let col = basis.coords(&mean);
        for r in 0..6 {
            out[r][b] = col[r].re;
        }
    }
    Ok(out)
}

/// Slabs of a laminate field along `axis` (1-based), merged when adjacent voxels agree.
pub fn laminate_layers(field: &CoefficientField, axis: usize) -> Result<Vec<(ElasticTensor, f64)>> {
    let d = axis - 1;
    if (0..3).any(|e| e != d && field.dims[e] != 1) {
        return Err(Error::InvalidParameter(format!("field does not vary along axis {axis} only")));
    }
    let n = field.dims[d];
    let mut out: Vec<(ElasticTensor, f64)> = Vec::new();
    for i in 0..n {
        let mut idx = [0; 3];
        idx[d] = i;
        let t = *field.voxel(idx);
        match out.last_mut() {
            Some(last) if last.0 == t => last.1 += 1.0 / n as f64,
            _ => out.push((t, 1.0 / n as f64)),
        }
    }
    Ok(out)
}

fn unit3(axis: usize) -> [f64; 3] {
    let mut n = [0.0; 3];
    n[axis - 1] = 1.0;
    n
}

/// `K_ik = sum_jl A_ijkl n_j n_l`.
fn acoustic(t: &ElasticTensor, n: &[f64; 3]) -> M3 {
    let mut k = [[ZERO; 3]; 3];
    for i in 0..3 {
        for kk in 0..3 {
            let mut s = 0.0;
            for j in 0..3 {
                for l in 0..3 {
                    s += t.c[i][j][kk][l] * n[j] * n[l];
                }
            }
            k[i][kk] = c64::new(s, 0.0);
        }
    }
    k
}

fn mat_vec_n(m: &M3, n: &[f64; 3]) -> [c64; 3] {
    let mut out = [ZERO; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i] += m[i][j] * n[j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{make_cube_inclusion, make_isotropic, make_laminate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laminate(res: usize) -> CoefficientField {
        make_laminate(make_isotropic(1.0, 1.0).unwrap(), make_isotropic(2.0, 2.0).unwrap(), 0.5, 1, res).unwrap()
    }

    fn rand_sym(rng: &mut ChaCha8Rng) -> M3 {
        let mut m = [[ZERO; 3]; 3];
        for i in 0..3 {
            for j in i..3 {
                let x = c64::new(rng.gen_range(-1.0..1.0), 0.0);
                m[i][j] = x;
                m[j][i] = x;
            }
        }
        m
    }

    #[test]
    fn homogeneous_correctors_vanish() {
        let f = CoefficientField::homogeneous(make_isotropic(1.0, 1.0).unwrap());
        let s = CellSolver::new(&f, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = solve_cell(&s, &rand_sym(&mut rng)).unwrap();
        assert!(u.field.l2_norm() < 1e-14);
        let h = homogenized_tensor(&s).unwrap();
        let v = f.voxels[0].voigt();
        for i in 0..6 {
            for j in 0..6 {
                assert!((h.voigt[i][j] - v[i][j]).abs() < 1e-12);
            }
        }
        let c = solve_chi_cell(&s, &Quasimomentum([0.3, 0.1, 0.0]), [c64::new(1.0, 0.0), ZERO, ZERO]).unwrap();
        assert!(c.field.l2_norm() < 1e-14);
    }

    #[test]
    fn cell_is_linear_and_zero_mean() {
        let s = CellSolver::new(&laminate(8), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (x1, x2) = (rand_sym(&mut rng), rand_sym(&mut rng));
        let (al, be) = (0.7, -1.3);
        let mut comb = [[ZERO; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                comb[i][j] = al * x1[i][j] + be * x2[i][j];
            }
        }
        let u1 = solve_cell(&s, &x1).unwrap().field;
        let u2 = solve_cell(&s, &x2).unwrap().field;
        let u = solve_cell(&s, &comb).unwrap();
        let mut lin = u1.scaled(c64::new(al, 0.0));
        lin.axpy(c64::new(be, 0.0), &u2);
        assert!(u.field.sub(&lin).l2_norm() < 1e-11 * u.field.l2_norm());
        assert!(u.field.mean().iter().all(|x| *x == ZERO));
        assert!(u.residual <= 1e-10);
        // real strain gives a real corrector
        assert!(u.field.real_defect() < 1e-12);
    }

    #[test]
    fn laminate_corrector_depends_on_y1_only() {
        let s = CellSolver::new(&laminate(8), 2).unwrap();
        let mut xi = [[ZERO; 3]; 3];
        xi[0][0] = c64::new(1.0, 0.0);
        let u = solve_cell(&s, &xi).unwrap().field;
        let l = u.lattice;
        for n in 0..l.n_modes() {
            let k = l.mode(n);
            if k[1] != 0 || k[2] != 0 {
                for i in 0..3 {
                    assert!(u.coeffs[3 * n + i].norm() < 1e-13);
                }
            }
        }
        assert!(u.l2_norm() > 1e-3);
    }

    #[test]
    fn laminate_matches_1d_galerkin_same_cutoff() {
        let f = laminate(16);
        let layers = laminate_layers(&f, 1).unwrap();
        for k in [2, 3] {
            let h = homogenized_tensor(&CellSolver::new(&f, k).unwrap()).unwrap();
            let g = laminate_galerkin_1d(&layers, 1, k).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    assert!((h.voigt[i][j] - g[i][j]).abs() < 1e-10, "{k} {i} {j} {} {}", h.voigt[i][j], g[i][j]);
                }
            }
        }
    }

    #[test]
    fn galerkin_1d_converges_to_oracle() {
        let f = laminate(16);
        let layers = laminate_layers(&f, 1).unwrap();
        let exact = laminate_cell_oracle(&layers, 1).unwrap();
        let err = |k: usize| {
            let g = laminate_galerkin_1d(&layers, 1, k).unwrap();
            let mut e: f64 = 0.0;
            for i in 0..6 {
                for j in 0..6 {
                    e = e.max((g[i][j] - exact[i][j]).abs());
                }
            }
            e
        };
        let (e4, e16, e64) = (err(4), err(16), err(64));
        assert!(e16 < e4 && e64 < e16, "{e4} {e16} {e64}");
        assert!(e64 < 5e-3);
    }

    #[test]
    fn oracle_of_identical_layers_is_the_tensor() {
        let t = make_isotropic(1.5, 0.8).unwrap();
        let o = laminate_cell_oracle(&[(t, 0.3), (t, 0.7)], 2).unwrap();
        let v = t.voigt();
        for i in 0..6 {
            for j in 0..6 {
                assert!((o[i][j] - v[i][j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn tensor_symmetries_bounds_and_energy_form() {
        let f = make_cube_inclusion(make_isotropic(1.0, 1.0).unwrap(), make_isotropic(5.0, 3.0).unwrap(), 0.5, 4).unwrap();
        let s = CellSolver::new(&f, 2).unwrap();
        let h = homogenized_tensor(&s).unwrap();
        assert!(h.tensor().symmetry_defect() < 1e-10);
        assert!(h.energy_defect < 1e-10);
        assert!(h.nu_hom >= f.nu * (1.0 - 1e-12));
        assert!(h.nu_hom > 0.0);
    }

    #[test]
    fn chi_cell_identities() {
        let s = CellSolver::new(&laminate(8), 2).unwrap();
        let chi = Quasimomentum([0.3, -0.2, 0.4]);
        let c = [c64::new(0.5, 0.0), c64::new(-1.0, 0.0), c64::new(0.25, 0.0)];
        let u = solve_chi_cell(&s, &chi, c).unwrap().field;
        // u_c = i * u^{X_chi c}, and the latter is real
        let ut = u.scaled(c64::new(0.0, -1.0));
        assert!(ut.real_defect() < 1e-12);
        let mut xc = [[ZERO; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                xc[i][j] = 0.5 * (c[i] * chi.0[j] + c[j] * chi.0[i]);
            }
        }
        let v = solve_cell(&s, &xc).unwrap().field;
        assert!(ut.sub(&v).l2_norm() < 1e-10 * v.l2_norm());
        // linearity in c
        let c2 = [ZERO, c64::new(0.0, 1.0), ZERO];
        let u2 = solve_chi_cell(&s, &chi, c2).unwrap().field;
        let sum = [c[0] + c2[0], c[1] + c2[1], c[2] + c2[2]];
        let us = solve_chi_cell(&s, &chi, sum).unwrap().field;
        assert!(us.sub(&u.add(&u2)).l2_norm() < 1e-11 * us.l2_norm());
        // chi = 0: zero load
        let z = solve_chi_cell(&s, &Quasimomentum([0.0; 3]), c).unwrap();
        assert_eq!(z.field.l2_norm(), 0.0);
    }

    #[test]
    fn fiber_hom_isotropic_example() {
        let f = CoefficientField::homogeneous(make_isotropic(1.0, 1.0).unwrap());
        let s = CellSolver::new(&f, 1).unwrap();
        let chi = Quasimomentum([std::f64::consts::PI - 1e-15, 0.0, 0.0]);
        let m = fiber_hom_matrix(&s, &chi).unwrap();
        let e = m.eigenvalues();
        let p2 = chi.0[0] * chi.0[0];
        assert!((e[0] - p2).abs() < 1e-12 && (e[1] - p2).abs() < 1e-12 && (e[2] - 3.0 * p2).abs() < 1e-11);
    }

    #[test]
    fn fiber_hom_factorization_and_scaling() {
        let s = CellSolver::new(&laminate(8), 2).unwrap();
        let h = homogenized_tensor(&s).unwrap();
        let chi = Quasimomentum([0.5, 0.3, -0.2]);
        let m = fiber_hom_matrix(&s, &chi).unwrap();
        assert!(m.hermitian_defect < 1e-11);
        assert!(m.form_defect < 1e-10);
        let f = h.fiber_matrix(&chi.0);
        assert!(crate::linalg::m3_max_abs_diff(&m.matrix, &f) < 1e-9);
        let t = 0.4;
        let mt = fiber_hom_matrix(&s, &Quasimomentum(chi.0.map(|x| t * x))).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((mt.matrix[i][j] - t * t * m.matrix[i][j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn disk_cache_roundtrip() {
        let dir = std::env::temp_dir().join(format!("bh-cache-{}", std::process::id()));
        let s = CellSolver::new(&laminate(4), 1).unwrap();
        let (a, hit_a) = homogenized_tensor_cached(&s, Some(&dir)).unwrap();
        let (b, hit_b) = homogenized_tensor_cached(&s, Some(&dir)).unwrap();
        assert!(!hit_a && hit_b);
        assert_eq!(a, b);
        std::fs::remove_dir_all(&dir).ok();
    }
}
