//! Homogenized tensor of a medium given as JSON (or the reference laminate).
//!
//! cargo run --release --example homogenize -- '{"kind":"isotropic","lambda":1.0,"mu":1.0}' 2

use bloch_homog::cell::{homogenized_tensor, CellSolver};
use bloch_homog::io::Medium;
use bloch_homog::tensor::check_coefficients;

fn main() -> bloch_homog::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let medium = match args.get(1) {
        Some(json) => Medium::from_json(json)?,
        None => Medium::reference_laminate(),
    };
    let k = args.get(2).map_or(2, |s| s.parse().expect("K must be an integer"));
    let field = medium.build()?;
    let cert = check_coefficients(&field);
    println!("coefficients: nu {:.4}, upper {:.4}, symmetry defect {:.1e}", cert.nu_estimate, cert.upper, cert.symmetry_defect);
    let h = homogenized_tensor(&CellSolver::new(&field, k)?)?;
    println!("homogenized tensor at K={k} ({})", h.basis);
    for row in &h.voigt {
        println!("  {}", row.map(|x| format!("{x:9.5}")).join(" "));
    }
    println!("nu_hom {:.5}, upper {:.5}, energy defect {:.1e}", h.nu_hom, h.upper_hom, h.energy_defect);
    Ok(())
}
