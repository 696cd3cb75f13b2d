//! Two-cycle expansion of the fiber resolvent at one quasimomentum, compared
//! with a direct solve.

use bloch_homog::asymptotics::expand_full;
use bloch_homog::c64;
use bloch_homog::cell::CellSolver;
use bloch_homog::io::Medium;
use bloch_homog::torus::{Quasimomentum, TorusField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bloch_homog::Result<()> {
    let solver = CellSolver::new(&Medium::reference_laminate().build()?, 2)?;
    let f = TorusField::random(solver.lattice, &mut ChaCha8Rng::seed_from_u64(1));
    println!("{:>10} {:>12} {:>12} {:>12}", "|chi|", "cycle1 H1", "cycle2 H1", "compat");
    for j in 2..=6 {
        let s = 2f64.powi(-j);
        let chi = Quasimomentum([0.0, s, 0.0]);
        let b = expand_full(&solver, &chi, c64::new(-1.0, 0.0), &f)?;
        let (r1, r2) = (b.residual_cycle1.unwrap(), b.residual_cycle2.unwrap());
        println!("{s:10.3e} {:12.3e} {:12.3e} {:12.1e}", r1[1], r2[1], b.compat[0].max(b.compat[1]));
    }
    Ok(())
}
