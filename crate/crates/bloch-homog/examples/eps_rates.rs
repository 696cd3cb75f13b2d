//! Epsilon rates through the supremum of fiber norms over a quasimomentum grid.
//!
//! cargo run --release --example eps_rates -- 2

use bloch_homog::cell::CellSolver;
use bloch_homog::fullspace::{epsilon_rate_study, EpsilonStudyConfig};
use bloch_homog::io::{rate_csv, Medium};

fn main() -> bloch_homog::Result<()> {
    let k = std::env::args().nth(1).map_or(2, |s| s.parse().expect("K must be an integer"));
    let solver = CellSolver::new(&Medium::reference_laminate().build()?, k)?;
    let t0 = std::time::Instant::now();
    let study = epsilon_rate_study(&solver, &EpsilonStudyConfig::default())?;
    println!("{} quasimomenta, {:.1}s", study.n_chi, t0.elapsed().as_secs_f64());
    for t in &study.tables {
        println!("gamma {}: slopes {:?}, floors {:?}, pass {:?}", t.gamma, t.slopes, t.floors, t.passes());
        print!("{}", rate_csv(&t.rows));
    }
    Ok(())
}
