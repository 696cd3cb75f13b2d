//! Lowest fiber eigenvalues along a dyadic ray: three acoustic branches scaling
//! like |chi|^2 and a gap above them.

use bloch_homog::cell::CellSolver;
use bloch_homog::fiber::rayleigh_bounds;
use bloch_homog::io::Medium;
use bloch_homog::torus::Quasimomentum;

fn main() -> bloch_homog::Result<()> {
    let field = Medium::reference_laminate().build()?;
    let solver = CellSolver::new(&field, 2)?;
    let theta = [0.6, 0.8, 0.0];
    let chis: Vec<Quasimomentum> = (1..=7).map(|j| Quasimomentum(theta.map(|t| 2f64.powi(-j) * t))).collect();
    let b = rayleigh_bounds(&solver.tr, &chis, None)?;
    println!("{:>10} {:>10} {:>10} {:>10} {:>10}", "|chi|", "l1/chi2", "l2/chi2", "l3/chi2", "l4");
    for (chi, l) in chis.iter().zip(&b.lowest) {
        let c2 = chi.norm().powi(2);
        println!("{:10.3e} {:10.4} {:10.4} {:10.4} {:10.4}", chi.norm(), l[0] / c2, l[1] / c2, l[2] / c2, l[3]);
    }
    println!("band [{:.4}, {:.4}], gap {:.4}", b.c_low, b.c_high, b.gap);
    Ok(())
}
