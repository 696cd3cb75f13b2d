//! The first rescaled corrector equals the classical two-scale term built from
//! the six cell correctors.

use bloch_homog::cell::CellSolver;
use bloch_homog::fullspace::{random_fields, two_scale_agreement};
use bloch_homog::io::Medium;
use bloch_homog::torus::Quasimomentum;

fn main() -> bloch_homog::Result<()> {
    let solver = CellSolver::new(&Medium::reference_laminate().build()?, 2)?;
    let fs = random_fields(solver.lattice, 10, 3);
    for (chi, eps) in [([0.3, 0.0, 0.0], 0.1), ([0.1, -0.2, 0.05], 0.02)] {
        let d = two_scale_agreement(&solver, &Quasimomentum(chi), eps, 0.0, &fs)?;
        println!("chi {chi:?} eps {eps}: relative defect {d:.1e}");
    }
    Ok(())
}
