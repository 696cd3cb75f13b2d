//! Fiber resolvent rates along a ray for z = -1 and the contour side midpoints.

use bloch_homog::asymptotics::{build_contour, fiber_rate_study};
use bloch_homog::c64;
use bloch_homog::cell::CellSolver;
use bloch_homog::fullspace::EpsilonStudyConfig;
use bloch_homog::io::{rate_csv, Medium};

fn main() -> bloch_homog::Result<()> {
    let solver = CellSolver::new(&Medium::reference_laminate().build()?, 2)?;
    let contour = build_contour(&solver, &EpsilonStudyConfig::default().contour_grid(), None)?;
    let mut zs = vec![c64::new(-1.0, 0.0)];
    zs.extend(contour.side_midpoints());
    for t in fiber_rate_study(&solver, [1.0, 0.0, 0.0], &[2, 3, 4, 5, 6], &zs)? {
        println!("z = {:.3} {:+.3}i  slopes {:?}", t.z[0], t.z[1], t.slopes);
        print!("{}", rate_csv(&t.rows));
    }
    Ok(())
}
