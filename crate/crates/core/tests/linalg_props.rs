use std::sync::Arc;

use matcone::duality::{dual_iso_tn, dual_iso_vn_to_tn, DualElement};
use matcone::linalg::random::{complex_gaussian, random_hermitian, random_psd, rng_from_seed};
use matcone::linalg::{
    kron, max_abs, min_eig, partial_trace_left, partial_trace_right, psd_factor, swap_factors, trace,
    tridiag_psd_complete, BlockTridiagonal, HermMat, PartialBandedMat,
};
use matcone::opsys::{make_system, SystemKind};
use matcone::Error;
use proptest::prelude::*;

proptest! {
    #[test]
    fn kron_is_mixed_product_compatible(seed in any::<u64>(), a in 1usize..4, b in 1usize..4) {
        let mut rng = rng_from_seed(seed);
        let (x, y) = (complex_gaussian(&mut rng, a, a), complex_gaussian(&mut rng, a, a));
        let (u, v) = (complex_gaussian(&mut rng, b, b), complex_gaussian(&mut rng, b, b));
        let lhs = kron(&x, &u) * kron(&y, &v);
        let rhs = kron(&(&x * &y), &(&u * &v));
        prop_assert!(max_abs(&(lhs - &rhs)) <= 1e-10 * (1.0 + max_abs(&rhs)));
    }

    #[test]
    fn partial_traces_of_products(seed in any::<u64>(), a in 1usize..4, b in 1usize..4) {
        let mut rng = rng_from_seed(seed);
        let x = complex_gaussian(&mut rng, a, a);
        let y = complex_gaussian(&mut rng, b, b);
        let k = kron(&x, &y);
        let left = partial_trace_left(&k, (a, b)).unwrap();
        let right = partial_trace_right(&k, (a, b)).unwrap();
        prop_assert!(max_abs(&(left - &y * trace(&x))) <= 1e-10 * (1.0 + x.norm() * y.norm()));
        prop_assert!(max_abs(&(right - &x * trace(&y))) <= 1e-10 * (1.0 + x.norm() * y.norm()));
        prop_assert!(partial_trace_left(&k, (a + 1, b)).is_err());
    }

    #[test]
    fn swap_exchanges_factors(seed in any::<u64>(), a in 1usize..4, b in 1usize..4) {
        let mut rng = rng_from_seed(seed);
        let x = complex_gaussian(&mut rng, a, a);
        let y = complex_gaussian(&mut rng, b, b);
        prop_assert!(max_abs(&(swap_factors(&kron(&x, &y), a, b) - kron(&y, &x))) <= 1e-12 * (1.0 + x.norm() * y.norm()));
    }

    #[test]
    fn psd_factor_reconstructs(seed in any::<u64>(), n in 1usize..8, rank in 1usize..8) {
        let mut rng = rng_from_seed(seed);
        let h = random_psd(&mut rng, n, rank.min(n));
        let x = psd_factor(&HermMat::new(h.clone()).unwrap(), 1e-10).unwrap();
        prop_assert!(max_abs(&(&x * x.adjoint() - &h)) <= 1e-9 * (1.0 + h.norm()));
    }

    #[test]
    fn psd_factor_rejects_indefinite(seed in any::<u64>(), n in 2usize..6) {
        let mut rng = rng_from_seed(seed);
        let h = random_hermitian(&mut rng, n);
        let shifted = &h - nalgebra::DMatrix::identity(n, n).scale(min_eig(&h) + 0.1);
        let rejected = matches!(psd_factor(&HermMat::new(shifted).unwrap(), 1e-10), Err(Error::NotPsd { .. }));
        prop_assert!(rejected);
    }

    #[test]
    fn completion_of_masked_psd_is_exact(seed in any::<u64>(), b in 1usize..=2, blocks in 2usize..=4) {
        let mut rng = rng_from_seed(seed);
        let full = random_psd(&mut rng, b * blocks, b * blocks);
        let partial = BlockTridiagonal::from_full(&full, b).unwrap();
        let done = tridiag_psd_complete(&partial, 1e-9).unwrap();
        prop_assert!(partial.matches(done.as_matrix()));
        prop_assert!(min_eig(done.as_matrix()) >= -1e-9 * (1.0 + full.norm()));
    }

    #[test]
    fn banded_completion_respects_the_band(seed in any::<u64>(), d in 3usize..8) {
        let mut rng = rng_from_seed(seed);
        let full = random_psd(&mut rng, d, d);
        prop_assert!(PartialBandedMat::from_band(&full, 2).unwrap().complete(1e-9).is_err());
        let p = PartialBandedMat::from_band(&full, 1).unwrap();
        let done = p.complete(1e-9).unwrap();
        prop_assert!(p.matches(done.as_matrix()));
        prop_assert!(min_eig(done.as_matrix()) >= -1e-9 * (1.0 + full.norm()));
    }

    #[test]
    fn tridiagonal_dual_round_trip(seed in any::<u64>(), n in 2usize..5, level in 1usize..3) {
        let t = Arc::new(make_system(SystemKind::Tn, n).unwrap());
        let mut rng = rng_from_seed(seed);
        let choi = random_hermitian(&mut rng, n * level);
        let g = DualElement::from_choi(Arc::clone(&t), &choi, level).unwrap();
        let back = dual_iso_vn_to_tn(&dual_iso_tn(&g).unwrap()).unwrap();
        for (x, y) in back.values.iter().zip(&g.values) {
            prop_assert!(max_abs(&(x - y)) <= 1e-12);
        }
    }
}
