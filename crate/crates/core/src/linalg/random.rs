//! Random matrix ensembles. All samplers take an explicit RNG so results are
//! reproducible under a seed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use super::{hermitize, CMat, C64};

pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for the `index`-th independent stream derived from `seed` (splitmix64).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Matrix of iid standard complex Gaussians (`E|z|² = 1`).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(s * re, s * im)
    })
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases
/// of `R`'s diagonal moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let g = complex_gaussian(rng, n, n);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// GUE-like random hermitian matrix.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    hermitize(&complex_gaussian(rng, n, n))
}

/// Random PSD matrix `G G*` with `G` an `n × rank` Ginibre matrix.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, n: usize, rank: usize) -> CMat {
    let g = complex_gaussian(rng, n, rank);
    &g * g.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_is_unitary_and_reproducible() {
        let mut a = rng_from_seed(11);
        let mut b = rng_from_seed(11);
        let u = haar_unitary(&mut a, 4);
        let v = haar_unitary(&mut b, 4);
        assert_eq!(u, v);
        assert!((&u * u.adjoint() - CMat::identity(4, 4)).norm() < 1e-12);
    }

    #[test]
    fn haar_phases_are_uniform_in_mean() {
        // For Haar U(1)-invariant columns E[U_11] = 0.
        let mut rng = rng_from_seed(3);
        let mut acc = C64::new(0.0, 0.0);
        let trials = 4000;
        for _ in 0..trials {
            acc += haar_unitary(&mut rng, 2)[(0, 0)];
        }
        assert!((acc / trials as f64).norm() < 0.05);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
