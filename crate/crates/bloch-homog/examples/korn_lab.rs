//! Rank-one and discrete Korn inequalities.

use bloch_homog::torus::{korn_constants, korn_constants_dense, rank_one_sym_ratio, rank_one_sym_ratio_complex, Quasimomentum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bloch_homog::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    println!("rank-one worst ratio, real {:.12}", rank_one_sym_ratio(200_000, &mut rng));
    println!("rank-one worst ratio, complex {:.6}", rank_one_sym_ratio_complex(200_000, &mut rng));
    for chi in [[0.5, 0.0, 0.0], [-3.0, 2.5, 1.0], [3.1, -3.1, 3.1]] {
        let q = Quasimomentum(chi);
        for k in [1, 2, 4] {
            let c = korn_constants(k, &q)?;
            println!("chi {chi:?} K={k}: est1 {:.4} est11 {:.4} est12 {:.4}", c.c_est1.unwrap(), c.c_est11, c.c_est12);
        }
        let d = korn_constants_dense(1, &q)?;
        println!("  dense K=1: est1 {:.4} est11 {:.4} est12 {:.4}", d.c_est1.unwrap(), d.c_est11, d.c_est12);
    }
    Ok(())
}
