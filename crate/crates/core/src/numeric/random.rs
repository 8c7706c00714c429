use rand::distributions::{Distribution, Open01};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The crate-wide generator: a portable, seedable stream cipher RNG.
pub type Rng64 = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw on the open interval (0, 1).
pub fn open_uniform<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    Open01.sample(rng)
}

/// `-ln(-ln(u))`, the inverse CDF of Gumbel(0, 1).
pub fn gumbel_from_uniform(u: f64) -> f64 {
    -(-u.ln()).ln()
}

pub fn gumbel_sample<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    gumbel_from_uniform(open_uniform(rng))
}

pub fn gumbel_noise<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| gumbel_sample(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_points_of_the_inverse_cdf() {
        assert!(gumbel_from_uniform((-1.0f64).exp()).abs() < 1e-15);
        let e = std::f64::consts::E;
        assert!((gumbel_from_uniform((-e).exp()) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_excludes_endpoints() {
        let mut rng = seeded_rng(3);
        for _ in 0..100_000 {
            let u = open_uniform(&mut rng);
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let a = gumbel_noise(&mut seeded_rng(11), 16);
        let b = gumbel_noise(&mut seeded_rng(11), 16);
        assert_eq!(a, b);
    }
}
