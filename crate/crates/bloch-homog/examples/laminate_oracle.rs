//! Laminate: closed-form cell solution against the 3D and 1D Fourier-Galerkin
//! solves. The Galerkin error decays like 1/K because the coefficients jump.

use bloch_homog::cell::{homogenized_tensor, laminate_cell_oracle, laminate_galerkin_1d, laminate_layers, CellSolver};
use bloch_homog::io::Medium;

fn diff(a: &[[f64; 6]; 6], b: &[[f64; 6]; 6]) -> f64 {
    (0..36).map(|i| (a[i / 6][i % 6] - b[i / 6][i % 6]).abs()).fold(0.0, f64::max)
}

fn main() -> bloch_homog::Result<()> {
    let field = Medium::reference_laminate().build()?;
    let layers = laminate_layers(&field, 1)?;
    let oracle = laminate_cell_oracle(&layers, 1)?;
    println!("{:>5} {:>12} {:>12}", "K", "3D error", "1D error");
    for k in 1..=3 {
        let h = homogenized_tensor(&CellSolver::new(&field, k)?)?;
        println!("{k:>5} {:12.3e} {:12.3e}", diff(&h.voigt, &oracle), diff(&laminate_galerkin_1d(&layers, 1, k)?, &oracle));
    }
    for k in [8, 32, 128, 512] {
        println!("{k:>5} {:>12} {:12.3e}", "-", diff(&laminate_galerkin_1d(&layers, 1, k)?, &oracle));
    }
    Ok(())
}
