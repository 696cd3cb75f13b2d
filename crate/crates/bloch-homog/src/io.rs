//! Binary container, medium descriptions and small CSV/JSON writers.
//!
//! # BHG1 container
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic      4 bytes  "BHG1"
//! section    u8 length + ASCII name: "coeffs" or "field"
//! note       u16 length + ASCII text describing the payload layout
//! payload
//! ```
//!
//! `coeffs` payload: `u64 n1, n2, n3`, then per voxel (index `(i1 n2 + i2) n3 + i3`)
//! the 21 entries `c_ijkl` with `(ij) <= (kl)` in the pair order
//! `11, 22, 33, 12, 13, 23`, upper triangle row by row, as `f64`. The remaining
//! entries follow from the minor and major symmetries.
//!
//! `field` payload: `u64 K`, then `3 (2K+1)^3` complex coefficients as interleaved
//! `f64` pairs `(re, im)`, modes ordered lexicographically with the last index
//! fastest and the three components of each mode adjacent.

use std::io::{Read, Write};
use std::path::Path;

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::asymptotics::RateRow;
use crate::error::{Error, Result};
use crate::tensor::{make_cube_inclusion, make_laminate, CoefficientField, ElasticTensor, Lame, VOIGT_PAIRS};
use crate::torus::{Lattice, Quasimomentum, TorusField};

pub const MAGIC: &[u8; 4] = b"BHG1";
pub const COEFFS_NOTE: &str = "c_ijkl, (ij)<=(kl), pairs 11,22,33,12,13,23, upper triangle row-major, 21 f64 LE per voxel";
pub const FIELD_NOTE: &str = "u64 K, then 3(2K+1)^3 complex (re,im f64 LE), last mode index fastest";

fn write_header(w: &mut impl Write, section: &str, note: &str) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[section.len() as u8])?;
    w.write_all(section.as_bytes())?;
    w.write_all(&(note.len() as u16).to_le_bytes())?;
    w.write_all(note.as_bytes())?;
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated container: {e}")))?;
    Ok(b)
}

fn read_header(r: &mut impl Read, expect: &str) -> Result<()> {
    if &read_exact::<4>(r)? != MAGIC {
        return Err(Error::Format("bad magic, expected BHG1".into()));
    }
    let [len] = read_exact::<1>(r)?;
    let mut name = vec![0u8; len as usize];
    r.read_exact(&mut name).map_err(|e| Error::Format(e.to_string()))?;
    if name != expect.as_bytes() {
        return Err(Error::Format(format!("section {:?}, expected {expect:?}", String::from_utf8_lossy(&name))));
    }
    let nl = u16::from_le_bytes(read_exact::<2>(r)?);
    let mut note = vec![0u8; nl as usize];
    r.read_exact(&mut note).map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact::<8>(r)?))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(read_exact::<8>(r)?))
}

/// The 21 unique entries of a tensor in container order.
pub fn unique_entries(t: &ElasticTensor) -> [f64; 21] {
    let mut out = [0.0; 21];
    let mut n = 0;
    for p in 0..6 {
        for q in p..6 {
            let (i, j) = VOIGT_PAIRS[p];
            let (k, l) = VOIGT_PAIRS[q];
            out[n] = t.c[i][j][k][l];
            n += 1;
        }
    }
    out
}

/// Inverse of [`unique_entries`], filling all symmetric positions.
pub fn from_unique_entries(e: &[f64; 21]) -> ElasticTensor {
    let mut t = ElasticTensor::zero();
    let mut n = 0;
    for p in 0..6 {
        for q in p..6 {
            let (i, j) = VOIGT_PAIRS[p];
            let (k, l) = VOIGT_PAIRS[q];
            for (a, b) in [(i, j), (j, i)] {
                for (c, d) in [(k, l), (l, k)] {
                    t.c[a][b][c][d] = e[n];
                    t.c[c][d][a][b] = e[n];
                }
            }
            n += 1;
        }
    }
    t
}

pub fn write_coeffs(w: &mut impl Write, f: &CoefficientField) -> Result<()> {
    write_header(w, "coeffs", COEFFS_NOTE)?;
    for n in f.dims {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for v in &f.voxels {
        for x in unique_entries(v) {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_coeffs(r: &mut impl Read) -> Result<CoefficientField> {
    read_header(r, "coeffs")?;
    let dims = [read_u64(r)?, read_u64(r)?, read_u64(r)?];
    let count = dims.iter().try_fold(1u64, |a, &d| a.checked_mul(d)).filter(|&c| c > 0 && c <= 1 << 30);
    let count = count.ok_or_else(|| Error::Format(format!("unreasonable dims {dims:?}")))?;
    let mut voxels = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let mut e = [0.0; 21];
        for x in e.iter_mut() {
            *x = read_f64(r)?;
        }
        voxels.push(from_unique_entries(&e));
    }
    CoefficientField::new(dims.map(|d| d as usize), voxels)
}

pub fn write_field(w: &mut impl Write, u: &TorusField) -> Result<()> {
    write_header(w, "field", FIELD_NOTE)?;
    w.write_all(&(u.lattice.k as u64).to_le_bytes())?;
    for c in &u.coeffs {
        w.write_all(&c.re.to_le_bytes())?;
        w.write_all(&c.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field(r: &mut impl Read) -> Result<TorusField> {
    read_header(r, "field")?;
    let k = read_u64(r)?;
    if k > 64 {
        return Err(Error::Format(format!("cutoff K = {k} too large")));
    }
    let l = Lattice::new(k as usize);
    let mut coeffs = Vec::with_capacity(l.dim());
    for _ in 0..l.dim() {
        let re = read_f64(r)?;
        let im = read_f64(r)?;
        coeffs.push(c64::new(re, im));
    }
    Ok(TorusField::from_coeffs(l, coeffs))
}

pub fn save_coeffs(path: &Path, f: &CoefficientField) -> Result<()> {
    let mut buf = Vec::new();
    write_coeffs(&mut buf, f)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_coeffs(path: &Path) -> Result<CoefficientField> {
    let bytes = std::fs::read(path)?;
    read_coeffs(&mut bytes.as_slice())
}

/// Built-in media and file references, as used in configs and JSON descriptions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Medium {
    Isotropic { lambda: f64, mu: f64 },
    Laminate { a: Lame, b: Lame, fraction: f64, axis: usize, resolution: usize },
    CubeInclusion { matrix: Lame, inclusion: Lame, side: f64, resolution: usize },
    /// A BHG1 `coeffs` file.
    File { path: String },
}

impl Medium {
    pub fn build(&self) -> Result<CoefficientField> {
        match self {
            Medium::Isotropic { lambda, mu } => {
                Ok(CoefficientField::homogeneous(Lame { lambda: *lambda, mu: *mu }.tensor()?))
            }
            Medium::Laminate { a, b, fraction, axis, resolution } => {
                make_laminate(a.tensor()?, b.tensor()?, *fraction, *axis, *resolution)
            }
            Medium::CubeInclusion { matrix, inclusion, side, resolution } => {
                make_cube_inclusion(matrix.tensor()?, inclusion.tensor()?, *side, *resolution)
            }
            Medium::File { path } => load_coeffs(Path::new(path)),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// The reference laminate: isotropic(1,1) / isotropic(2,2), half and half.
    pub fn reference_laminate() -> Self {
        Medium::Laminate {
            a: Lame { lambda: 1.0, mu: 1.0 },
            b: Lame { lambda: 2.0, mu: 2.0 },
            fraction: 0.5,
            axis: 1,
            resolution: 8,
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

/// `chi1,chi2,chi3,index,eigenvalue`, one row per eigenvalue.
pub fn spectra_csv(rows: &[(Quasimomentum, Vec<f64>)]) -> String {
    let mut s = String::from("chi1,chi2,chi3,index,eigenvalue\n");
    for (chi, vals) in rows {
        for (i, v) in vals.iter().enumerate() {
            s += &format!("{},{},{},{},{}\n", num(chi.0[0]), num(chi.0[1]), num(chi.0[2]), i + 1, num(*v));
        }
    }
    s
}

/// `scale,err_l2l2,err_l2h1,err_withcorr`.
pub fn rate_csv(rows: &[RateRow]) -> String {
    let mut s = String::from("scale,err_l2l2,err_l2h1,err_withcorr\n");
    for r in rows {
        s += &format!("{},{},{},{}\n", num(r.scale), num(r.err_l2l2), num(r.err_l2h1), num(r.err_withcorr));
    }
    s
}

/// Parse a rate CSV back; used by tests and for re-plotting.
pub fn parse_rate_csv(text: &str) -> Result<Vec<RateRow>> {
    let mut lines = text.lines();
    if lines.next() != Some("scale,err_l2l2,err_l2h1,err_withcorr") {
        return Err(Error::Format("unexpected rate table header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let v: Vec<f64> = l
                .split(',')
                .map(|x| x.parse::<f64>().map_err(|e| Error::Format(format!("{x}: {e}"))))
                .collect::<Result<_>>()?;
            if v.len() != 4 {
                return Err(Error::Format(format!("row {l:?} has {} columns", v.len())));
            }
            Ok(RateRow { scale: v[0], err_l2l2: v[1], err_l2h1: v[2], err_withcorr: v[3] })
        })
        .collect()
}

/// A gnuplot script drawing the three error columns of `csv` on log-log axes.
pub fn gnuplot_script(csv: &str, title: &str, png: &str) -> String {
    format!(
        "set terminal pngcairo size 800,600\n\
         set output '{png}'\n\
         set datafile separator ','\n\
         set key autotitle columnhead left top\n\
         set logscale xy\n\
         set format xy '%.0e'\n\
         set xlabel 'scale'\n\
         set ylabel 'error'\n\
         set title '{title}'\n\
         plot '{csv}' using 1:2 with linespoints, '' using 1:3 with linespoints, '' using 1:4 with linespoints\n"
    )
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}
