//! Seeded random streams.
//!
//! Every consumer draws from its own ChaCha stream selected by
//! `(seed, domain, index)`, e.g. one stream per simulated subject or per EM
//! start. Results therefore never depend on the order in which parallel work
//! is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

/// Stream domain for EM random starts.
pub const DOMAIN_EM_START: u64 = 1;
/// Stream domain for per-subject simulation.
pub const DOMAIN_SIMULATION: u64 = 2;
/// Stream domain for random parameter generation.
pub const DOMAIN_PARAMETERS: u64 = 3;

pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let key = seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Draws from a symmetric Dirichlet with concentration `alpha`.
pub fn dirichlet<R: rand::Rng>(rng: &mut R, n: usize, alpha: f64) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let total: f64 = v.iter().sum();
        if total > 0.0 && total.is_finite() {
            for x in &mut v {
                *x /= total;
            }
            return v;
        }
    }
}
