//! Rescaled corrector operators: closed form against contour quadrature.

use bloch_homog::asymptotics::{build_contour, rescaled_correctors, ChiBlocks};
use bloch_homog::cell::CellSolver;
use bloch_homog::fullspace::EpsilonStudyConfig;
use bloch_homog::io::Medium;
use bloch_homog::torus::Quasimomentum;

fn main() -> bloch_homog::Result<()> {
    let solver = CellSolver::new(&Medium::reference_laminate().build()?, 1)?;
    let contour = build_contour(&solver, &EpsilonStudyConfig::default().contour_grid(), None)?;
    println!("contour [{:.4}, {:.4}] x [-{:.4}, {:.4}], rho0 {:.4}", contour.a, contour.b, contour.h, contour.h, contour.rho0);
    for (chi, eps, gamma) in [([0.2, 0.0, 0.0], 0.1, 0.0), ([0.1, 0.3, -0.2], 0.05, 1.0), ([0.01, 0.01, 0.0], 0.02, -0.5)] {
        let blocks = ChiBlocks::new(&solver, &Quasimomentum(chi))?;
        let r = rescaled_correctors(&blocks, eps, gamma, &contour, true)?;
        println!("chi {chi:?} eps {eps} gamma {gamma}: closed form vs contour {:?}", r.contour_defect);
    }
    Ok(())
}
