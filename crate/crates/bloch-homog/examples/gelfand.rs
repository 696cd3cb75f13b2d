//! Scaled Gelfand transform: roundtrip, Parseval, and the smoothing operator
//! computed both directly and through the transform.

use std::collections::BTreeMap;

use bloch_homog::c64;
use bloch_homog::fullspace::{gelfand_roundtrip_check, smoothing_apply, smoothing_via_gelfand, FourierSamples, LatticeSignal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut entries = BTreeMap::new();
    while entries.len() < 50 {
        entries.insert([0; 3].map(|_| rng.gen_range(-3i64..=3)), c64::new(rng.gen(), rng.gen()));
    }
    let signal: LatticeSignal = entries.into_iter().collect();
    for eps in [0.5, 0.1, 0.01] {
        println!("eps {eps}: {:?}", gelfand_roundtrip_check(&signal, eps, 8));
    }
    let freqs: Vec<[f64; 3]> = (0..100).map(|_| [0; 3].map(|_| rng.gen_range(-8.0..8.0))).collect();
    let values = freqs.iter().map(|_| [0; 3].map(|_| c64::new(rng.gen(), rng.gen()))).collect();
    let f = FourierSamples { freqs, values };
    for eps in [0.25, 0.1] {
        let d = smoothing_apply(&f, eps).sub(&smoothing_via_gelfand(&f, eps)).norm();
        println!("eps {eps}: kept {:.3} of the norm, direct vs transform {d:.1e}", smoothing_apply(&f, eps).norm() / f.norm());
    }
}
