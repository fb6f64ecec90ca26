use matcone::feasibility::{
    solve_feasibility, solve_with, verify_certificate, AffinePsdProblem, Method, SolverOptions, Status,
};
use matcone::linalg::random::{random_hermitian, random_psd, rng_from_seed};
use matcone::linalg::{min_eig, CMat};
use rand::Rng;
use rayon::prelude::*;

fn random_problem(seed: u64, dim: usize, k: usize) -> AffinePsdProblem {
    let mut rng = rng_from_seed(seed);
    loop {
        let offset = random_hermitian(&mut rng, dim);
        let basis: Vec<CMat> = (0..k)
            .map(|_| {
                let b = random_hermitian(&mut rng, dim);
                let n = b.norm();
                b.unscale(n)
            })
            .collect();
        if let Ok(p) = AffinePsdProblem::new(offset, basis) {
            return p;
        }
    }
}

/// Best smallest eigenvalue over the grid `t ∈ [−10, 10]²` at step `1e−2`.
fn grid_best(p: &AffinePsdProblem) -> f64 {
    let steps: Vec<f64> = (0..=2000).map(|i| -10.0 + 0.01 * i as f64).collect();
    let k = p.basis().len();
    steps
        .par_iter()
        .map(|&a| {
            if k == 1 {
                return min_eig(&p.point(&[a]));
            }
            steps.iter().map(|&b| min_eig(&p.point(&[a, b]))).fold(f64::NEG_INFINITY, f64::max)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

fn coordinates(p: &AffinePsdProblem, x: &CMat) -> Vec<f64> {
    let k = p.basis().len();
    let d = x - p.offset();
    let gram = nalgebra::DMatrix::from_fn(k, k, |i, j| matcone::linalg::inner(&p.basis()[i], &p.basis()[j]));
    let rhs = nalgebra::DVector::from_fn(k, |i, _| matcone::linalg::inner(&p.basis()[i], &d));
    gram.lu().solve(&rhs).unwrap().iter().copied().collect()
}

#[test]
fn solver_agrees_with_grid_search() {
    let mut checked = 0;
    for seed in 0..40u64 {
        let dim = 2 + (seed % 2) as usize;
        let k = 1 + (seed % 3 == 0) as usize;
        let p = random_problem(1000 + seed, dim, k);
        let best = grid_best(&p);
        if best.abs() < 0.05 {
            continue;
        }
        let cert = solve_feasibility(&p, 1e-9, 5000).unwrap();
        match cert.status {
            Status::Undecided => continue,
            Status::Feasible => {
                if best < 0.0 {
                    let t = coordinates(&p, cert.witness.as_ref().unwrap().as_matrix());
                    assert!(t.iter().any(|v| v.abs() > 10.0), "seed {seed}: feasible inside an infeasible box");
                }
            }
            Status::Infeasible => assert!(best < 0.0, "seed {seed}: grid found margin {best}"),
        }
        assert!(verify_certificate(&p, &cert, 1e-9));
        checked += 1;
        if checked >= 8 {
            break;
        }
    }
    assert!(checked >= 4, "too few decisive instances ({checked})");
}

#[test]
fn certificates_are_sound_up_to_dim_30() {
    let dims = [2usize, 3, 5, 8, 12, 20, 30];
    let results: Vec<(u64, bool, Status)> = (0..28u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = rng_from_seed(seed);
            let dim = dims[seed as usize % dims.len()];
            let k = rng.random_range(0..=dim.min(12));
            // mix of clearly feasible (PSD-shifted) and generic offsets
            let mut offset = random_hermitian(&mut rng, dim);
            if seed % 2 == 0 {
                offset = random_psd(&mut rng, dim, dim) + offset.scale(0.1);
            }
            let basis: Vec<CMat> = (0..k).map(|_| random_hermitian(&mut rng, dim)).collect();
            let p = AffinePsdProblem::from_spanning(offset, &basis).unwrap();
            let cert = solve_feasibility(&p, 1e-8, 4000).unwrap();
            let ok = cert.status == Status::Undecided || verify_certificate(&p, &cert, 1e-8);
            (seed, ok, cert.status)
        })
        .collect();
    for (seed, ok, status) in &results {
        assert!(ok, "seed {seed}: emitted {status:?} certificate fails verification");
    }
    let decided = results.iter().filter(|r| r.2 != Status::Undecided).count();
    assert!(decided * 10 >= results.len() * 9, "only {decided} decided");
}

#[test]
fn feasible_and_infeasible_are_exclusive_across_methods() {
    for seed in 0..20u64 {
        let p = random_problem(5000 + seed, 3, 2);
        let mut seen = Vec::new();
        for method in [Method::Auto, Method::Dykstra, Method::Barrier] {
            let opts = SolverOptions { method, ..SolverOptions::with_tol(1e-9) };
            let c = solve_with(&p, &opts).unwrap();
            if c.status != Status::Undecided {
                assert!(verify_certificate(&p, &c, 1e-9));
                seen.push(c.status);
            }
        }
        assert!(
            !(seen.contains(&Status::Feasible) && seen.contains(&Status::Infeasible)),
            "seed {seed}: contradictory certificates"
        );
    }
}
