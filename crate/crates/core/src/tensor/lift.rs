//! Max-cone lifts for `(M_n/J_n) ⊗ T` and `(T_n/J_n) ⊗ T`, and the property
//! checkers built on them.
//!
//! Instance blocks live in `M_p(T) ⊂ M_b ⊗ M_p` for `T ⊆ M_b`, with the system
//! factor outer. The min cone of the quotient tensor is inherited from the
//! ambient `M_b`, so it is the plain lift with blocks in `M_{bp}`; the max cone
//! restricts the free diagonal of the lift to `M_p(T)`.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::feasibility::{
    maximize_min_eig, solve_with, verify_certificate, AffinePsdProblem, ConeCertificate, SolverOptions, Status,
};
use crate::linalg::random::{derive_seed, rng_from_seed};
use crate::linalg::{hermitian_basis, kron, unit, CMat, HermMat, C64};
use crate::opsys::{MatOpSys, SPAN_TOL};
use crate::quotient::{sn_min_problem, wn_min_problem, SnInstance, SnJson, WnInstance, WnJson, MAX_ITER};

use super::hermitian_frame;

pub const DEFAULT_EPS_GRID: [f64; 3] = [1e-2, 1e-4, 1e-6];

/// Level `p` with `b·p = size`, for blocks of `M_p(T)`.
fn level_of(t: &MatOpSys, size: usize) -> Result<usize> {
    let b = t.ambient_dim();
    if size == 0 || size % b != 0 {
        return invalid(format!("block size {size} is not a multiple of the ambient dimension {b} of {}", t.name()));
    }
    Ok(size / b)
}

fn check_block(t: &MatOpSys, m: &CMat, p: usize, what: impl FnOnce() -> String) -> Result<()> {
    let (_, r) = t.level_coefficients(m, p)?;
    if r > SPAN_TOL * m.norm().max(1.0) {
        return invalid(format!("block {} is not in M_{p}({})", what(), t.name()));
    }
    Ok(())
}

/// Free directions `D ⊗ H ⊗ F` of the lift: `D` a trace-zero diagonal of `M_n`,
/// `H` a hermitian element of `T`, `F` hermitian in `M_p`.
fn diagonal_directions(n: usize, t: &MatOpSys, p: usize) -> Result<Vec<CMat>> {
    let frame = hermitian_frame(t)?;
    let fs = hermitian_basis(p);
    let mut out = Vec::with_capacity((n - 1) * frame.dim() * fs.len());
    for i in 0..n - 1 {
        let d = unit(n, i, i) - unit(n, i + 1, i + 1);
        for h in frame.basis() {
            let dh = kron(&d, h);
            out.extend(fs.iter().map(|f| kron(&dh, f)));
        }
    }
    Ok(out)
}

/// `R ⪰ 0` in `M_n(M_p(T))` with the off-diagonal blocks of the instance and
/// `Σ R_ii = n(A₁₁ + eps·1)`.
pub fn wn_max_problem(t: &MatOpSys, inst: &WnInstance, eps: f64) -> Result<AffinePsdProblem> {
    if !(eps >= 0.0) {
        return invalid("eps must be nonnegative");
    }
    let p = level_of(t, inst.p())?;
    let n = inst.n();
    check_block(t, inst.a11(), p, || "A11".into())?;
    for i in 0..n {
        for j in i + 1..n {
            check_block(t, inst.off(i, j), p, || format!("A{}{}", i + 1, j + 1))?;
        }
    }
    let dim = n * inst.p();
    let offset = inst.representative() + CMat::identity(dim, dim).scale(eps);
    AffinePsdProblem::new(offset, diagonal_directions(n, t, p)?)
}

pub fn wn_max_membership(t: &MatOpSys, inst: &WnInstance, eps: f64, tol: f64) -> Result<ConeCertificate> {
    solve_with(&wn_max_problem(t, inst, eps)?, &solver(tol))
}

/// Banded `R ⪰ 0` in `M_n(M_p(T))` with `R_{i,i+1} = A_i` and `Σ R_ii = A₀ + eps·1`.
pub fn sn_max_problem(t: &MatOpSys, inst: &SnInstance, eps: f64) -> Result<AffinePsdProblem> {
    if !(eps >= 0.0) {
        return invalid("eps must be nonnegative");
    }
    let p = level_of(t, inst.p())?;
    let n = inst.n();
    for i in 0..n as isize {
        check_block(t, inst.a(i), p, || format!("A{i}"))?;
    }
    let dim = n * inst.p();
    let offset = inst.representative() + CMat::identity(dim, dim).scale(eps / n as f64);
    AffinePsdProblem::new(offset, diagonal_directions(n, t, p)?)
}

pub fn sn_max_membership(t: &MatOpSys, inst: &SnInstance, eps: f64, tol: f64) -> Result<ConeCertificate> {
    solve_with(&sn_max_problem(t, inst, eps)?, &solver(tol))
}

fn solver(tol: f64) -> SolverOptions {
    SolverOptions { max_iter: MAX_ITER, ..SolverOptions::with_tol(tol) }
}

/// Complex element of `M_p(T)`: `X + iY` for hermitian `X, Y`.
fn random_block<R: Rng + ?Sized>(t: &Arc<MatOpSys>, p: usize, rng: &mut R) -> CMat {
    let x = t.random_hermitian_element(rng, p).assemble();
    let y = t.random_hermitian_element(rng, p).assemble();
    x + y * C64::new(0.0, 1.0)
}

pub fn random_wn_instance<R: Rng + ?Sized>(t: &Arc<MatOpSys>, n: usize, p: usize, rng: &mut R) -> Result<WnInstance> {
    let a11 = t.random_hermitian_element(rng, p).assemble();
    let size = a11.nrows();
    let mut off = vec![vec![CMat::zeros(size, size); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            off[i][j] = random_block(t, p, rng);
            off[j][i] = off[i][j].adjoint();
        }
    }
    WnInstance::new(a11, off)
}

pub fn random_sn_instance<R: Rng + ?Sized>(t: &Arc<MatOpSys>, n: usize, p: usize, rng: &mut R) -> Result<SnInstance> {
    let a0 = t.random_hermitian_element(rng, p).assemble();
    let mut a = vec![CMat::zeros(a0.nrows(), a0.nrows()); 2 * n - 1];
    a[n - 1] = a0;
    for i in 1..n {
        a[n - 1 + i] = random_block(t, p, rng);
        a[n - 1 - i] = a[n - 1 + i].adjoint();
    }
    SnInstance::new(n, a)
}

/// Shift along the unit that puts the instance on the min-cone boundary, from
/// the achieved end of the smallest-eigenvalue bracket (so the result is in
/// the cone up to the bracket width).
fn min_boundary_shift(prob: &AffinePsdProblem) -> Result<f64> {
    Ok(-maximize_min_eig(prob, 1e-10, 20 * MAX_ITER)?.lower)
}

pub fn wn_boundary_instance(inst: &WnInstance) -> Result<(WnInstance, f64)> {
    let shift = min_boundary_shift(&wn_min_problem(inst)?)?;
    let p = inst.p();
    let mut off = vec![vec![CMat::zeros(p, p); inst.n()]; inst.n()];
    for (i, row) in off.iter_mut().enumerate() {
        for (j, b) in row.iter_mut().enumerate() {
            if i != j {
                *b = inst.off(i, j).clone();
            }
        }
    }
    Ok((WnInstance::new(inst.a11() + CMat::identity(p, p).scale(shift), off)?, shift))
}

pub fn sn_boundary_instance(inst: &SnInstance) -> Result<(SnInstance, f64)> {
    // each diagonal block carries A₀/n
    let shift = inst.n() as f64 * min_boundary_shift(&sn_min_problem(inst)?)?;
    Ok((inst.with_a0_shifted(shift), shift))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyKind {
    /// Full lift of `(M_n/J_n) ⊗ T`.
    Pstar,
    /// Banded lift of `(T_n/J_n) ⊗ T`.
    Ps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "instance", rename_all = "lowercase")]
pub enum LiftData {
    Wn(WnJson),
    Sn(SnJson),
}

impl LiftData {
    pub fn problem(&self, t: &MatOpSys, eps: f64) -> Result<AffinePsdProblem> {
        match self {
            LiftData::Wn(j) => wn_max_problem(t, &WnInstance::from_json(j)?, eps),
            LiftData::Sn(j) => sn_max_problem(t, &SnInstance::from_json(j)?, eps),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyConfig {
    pub n: usize,
    pub p: usize,
    pub samples: usize,
    pub eps_grid: Vec<f64>,
    pub seed: u64,
    pub tol: f64,
    /// Added along the unit after moving to the min-cone boundary; positive
    /// values give strictly interior instances.
    pub offset: f64,
}

impl PropertyConfig {
    pub fn new(n: usize, p: usize, samples: usize, seed: u64) -> Self {
        Self { n, p, samples, eps_grid: DEFAULT_EPS_GRID.to_vec(), seed, tol: 1e-9, offset: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyInstance {
    pub id: usize,
    pub seed: u64,
    /// Unit shift that placed the sample on the min-cone boundary.
    pub threshold: f64,
    /// Smallest grid value with a feasible lift.
    pub eps_star: Option<f64>,
    /// Status per entry of the (descending) grid.
    pub statuses: Vec<Status>,
    pub certificate_ref: String,
}

/// A replayable lift certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftCertificate {
    pub name: String,
    pub instance: usize,
    pub eps: f64,
    pub data: LiftData,
    pub certificate: ConeCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub check: PropertyKind,
    pub system: String,
    #[serde(flatten)]
    pub config: PropertyConfig,
    pub instances: Vec<PropertyInstance>,
    /// Instances with a verified infeasibility certificate at the smallest eps.
    pub candidates: Vec<usize>,
    /// Instances undecided at the smallest eps.
    pub unresolved: Vec<usize>,
    pub verdict: String,
    pub certificates: Vec<LiftCertificate>,
}

impl PropertyReport {
    pub fn is_consistent(&self) -> bool {
        self.candidates.is_empty() && self.unresolved.is_empty()
    }
}

/// Re-check a stored certificate against the data it was issued for.
pub fn replay_lift_certificate(t: &MatOpSys, c: &LiftCertificate, tol: f64) -> Result<bool> {
    let prob = c.data.problem(t, c.eps)?;
    Ok(verify_certificate(&prob, &c.certificate, tol))
}

/// Near-boundary min-positive instances over `T`, lifted in the max cone
/// across the eps grid.
pub fn pstar_check(t: &Arc<MatOpSys>, cfg: &PropertyConfig) -> Result<PropertyReport> {
    property_check(PropertyKind::Pstar, t, cfg)
}

/// As [`pstar_check`] with the banded lift.
pub fn ps_check(t: &Arc<MatOpSys>, cfg: &PropertyConfig) -> Result<PropertyReport> {
    property_check(PropertyKind::Ps, t, cfg)
}

fn property_check(kind: PropertyKind, t: &Arc<MatOpSys>, cfg: &PropertyConfig) -> Result<PropertyReport> {
    if cfg.n < 2 || cfg.p == 0 {
        return invalid("need n ≥ 2 and p ≥ 1");
    }
    if !(cfg.tol > 0.0) || cfg.eps_grid.is_empty() || cfg.eps_grid.iter().any(|e| !(*e > 0.0)) {
        return invalid("tol and every grid eps must be positive");
    }
    if !cfg.offset.is_finite() {
        return invalid("offset must be finite");
    }
    let mut grid = cfg.eps_grid.clone();
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();
    let cfg = PropertyConfig { eps_grid: grid, ..cfg.clone() };
    let rows: Vec<(PropertyInstance, LiftCertificate)> =
        (0..cfg.samples).into_par_iter().map(|id| run_instance(kind, t, &cfg, id)).collect::<Result<_>>()?;
    let smallest = cfg.eps_grid.len() - 1;
    let candidates = rows.iter().filter(|r| r.0.statuses[smallest] == Status::Infeasible).map(|r| r.0.id).collect();
    let unresolved = rows.iter().filter(|r| r.0.statuses[smallest] == Status::Undecided).map(|r| r.0.id).collect();
    let mut report = PropertyReport {
        check: kind,
        system: t.descriptor().map_or_else(|| t.name().to_string(), |d| d.to_string()),
        config: cfg,
        instances: Vec::with_capacity(rows.len()),
        candidates,
        unresolved,
        verdict: String::new(),
        certificates: Vec::with_capacity(rows.len()),
    };
    for (i, c) in rows {
        report.instances.push(i);
        report.certificates.push(c);
    }
    report.verdict = if report.is_consistent() {
        "consistent".into()
    } else if !report.candidates.is_empty() {
        "candidates".into()
    } else {
        "inconclusive".into()
    };
    Ok(report)
}

fn run_instance(
    kind: PropertyKind,
    t: &Arc<MatOpSys>,
    cfg: &PropertyConfig,
    id: usize,
) -> Result<(PropertyInstance, LiftCertificate)> {
    let seed = derive_seed(cfg.seed, id as u64);
    let mut rng = rng_from_seed(seed);
    let (data, threshold) = match kind {
        PropertyKind::Pstar => {
            let (inst, th) = wn_boundary_instance(&random_wn_instance(t, cfg.n, cfg.p, &mut rng)?)?;
            let inst = if cfg.offset != 0.0 { shift_wn(&inst, cfg.offset)? } else { inst };
            (LiftData::Wn(inst.to_json()), th)
        }
        PropertyKind::Ps => {
            let (inst, th) = sn_boundary_instance(&random_sn_instance(t, cfg.n, cfg.p, &mut rng)?)?;
            (LiftData::Sn(inst.with_a0_shifted(cfg.n as f64 * cfg.offset).to_json()), th)
        }
    };
    let grid = &cfg.eps_grid;
    let mut statuses = vec![Status::Undecided; grid.len()];
    let mut kept: Option<(f64, ConeCertificate)> = None;
    // smallest eps first; a feasible lift stays feasible for every larger eps
    for gi in (0..grid.len()).rev() {
        let prob = data.problem(t, grid[gi])?;
        let cert = solve_with(&prob, &solver(cfg.tol))?;
        let status = if cert.status != Status::Undecided && verify_certificate(&prob, &cert, cfg.tol) {
            cert.status
        } else {
            Status::Undecided
        };
        statuses[gi] = status;
        if status == Status::Feasible {
            let w = cert.witness.as_ref().expect("feasible certificates carry a witness").as_matrix();
            for (gj, s) in statuses.iter_mut().enumerate().take(gi) {
                let larger = shifted_witness(&data, w, grid[gj] - grid[gi]);
                let prob = data.problem(t, grid[gj])?;
                let c = ConeCertificate { witness: Some(larger), ..cert.clone() };
                *s = if verify_certificate(&prob, &c, cfg.tol) { Status::Feasible } else { Status::Undecided };
            }
            kept = Some((grid[gi], cert));
            break;
        }
        if kept.is_none() || gi == grid.len() - 1 {
            kept = Some((grid[gi], cert));
        }
    }
    let (eps, certificate) = kept.expect("grid is nonempty");
    let eps_star = statuses.iter().rposition(|s| *s == Status::Feasible).map(|i| grid[i]);
    let name = format!("{}-{id:04}", match kind {
        PropertyKind::Pstar => "pstar",
        PropertyKind::Ps => "ps",
    });
    let instance = PropertyInstance { id, seed, threshold, eps_star, statuses, certificate_ref: name.clone() };
    Ok((instance, LiftCertificate { name, instance: id, eps, data, certificate }))
}

fn shift_wn(inst: &WnInstance, s: f64) -> Result<WnInstance> {
    let p = inst.p();
    let off = (0..inst.n()).map(|i| (0..inst.n()).map(|j| inst.off(i, j).clone()).collect()).collect();
    WnInstance::new(inst.a11() + CMat::identity(p, p).scale(s), off)
}

/// Lift for `eps + delta` from one for `eps`: each diagonal block gains the
/// matching share of `delta·1`.
fn shifted_witness(data: &LiftData, w: &CMat, delta: f64) -> HermMat {
    let per_block = match data {
        LiftData::Wn(_) => delta,
        LiftData::Sn(j) => delta / j.n as f64,
    };
    HermMat::hermitian_part(&(w + CMat::identity(w.nrows(), w.nrows()).scale(per_block)))
}

/// `(I_n ⊗ γ) R (I_n ⊗ γ)*` blockwise: every block `A ↦ γAγ*`.
pub fn conjugate_wn(inst: &WnInstance, gamma: &CMat) -> Result<WnInstance> {
    let c = |a: &CMat| gamma * a * gamma.adjoint();
    let n = inst.n();
    let off = (0..n).map(|i| (0..n).map(|j| c(inst.off(i, j))).collect()).collect();
    WnInstance::new(c(inst.a11()), off)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opsys::{make_system, SystemKind};
    use crate::quotient::wn_min_membership;

    fn sys(kind: SystemKind, n: usize) -> Arc<MatOpSys> {
        Arc::new(make_system(kind, n).unwrap())
    }

    #[test]
    fn zero_offdiagonals_lift_at_every_eps() {
        let t = sys(SystemKind::En, 2);
        let mut rng = rng_from_seed(2);
        let a11 = t.random_hermitian_element(&mut rng, 1).shift_unit(5.0).assemble();
        let off = vec![vec![CMat::zeros(2, 2); 3]; 3];
        let inst = WnInstance::new(a11, off).unwrap();
        for eps in DEFAULT_EPS_GRID {
            assert_eq!(wn_max_membership(&t, &inst, eps, 1e-9).unwrap().status, Status::Feasible);
        }
    }

    #[test]
    fn blocks_outside_the_system_are_rejected() {
        let t = sys(SystemKind::En, 2);
        let a11 = unit(2, 0, 0);
        let off = vec![vec![CMat::zeros(2, 2); 2]; 2];
        let inst = WnInstance::new(a11, off).unwrap();
        assert!(wn_max_membership(&t, &inst, 1e-3, 1e-9).is_err());
    }

    #[test]
    fn full_matrix_algebra_matches_min_lift() {
        let t = sys(SystemKind::Mn, 2);
        let mut rng = rng_from_seed(8);
        for _ in 0..6 {
            let inst = random_wn_instance(&t, 3, 1, &mut rng).unwrap();
            let a = wn_max_problem(&t, &inst, 0.0).unwrap();
            let b = wn_min_problem(&inst).unwrap();
            let la = maximize_min_eig(&a, 1e-9, 5000).unwrap();
            let lb = maximize_min_eig(&b, 1e-9, 5000).unwrap();
            assert!((la.lower - lb.lower).abs() < 1e-6, "{} vs {}", la.lower, lb.lower);
        }
    }

    #[test]
    fn pstar_on_matrix_algebra_has_no_candidates() {
        let t = sys(SystemKind::Mn, 2);
        let r = pstar_check(&t, &PropertyConfig::new(3, 2, 6, 7)).unwrap();
        assert!(r.candidates.is_empty(), "{:?}", r.candidates);
        assert_eq!(r.verdict, "consistent");
        for c in &r.certificates {
            assert!(replay_lift_certificate(&t, c, 1e-9).unwrap());
        }
    }

    #[test]
    fn ps_interior_instances_lift() {
        let t = sys(SystemKind::Un, 3);
        let cfg = PropertyConfig { offset: 0.5, ..PropertyConfig::new(3, 1, 4, 3) };
        let r = ps_check(&t, &cfg).unwrap();
        assert_eq!(r.verdict, "consistent");
        assert!(r.instances.iter().all(|i| i.statuses.iter().all(|s| *s == Status::Feasible)));
    }

    #[test]
    fn max_lift_implies_min_lift() {
        let t = sys(SystemKind::En, 2);
        let mut rng = rng_from_seed(21);
        for _ in 0..10 {
            let inst = random_wn_instance(&t, 2, 1, &mut rng).unwrap();
            let inst = shift_wn(&inst, rng.random_range(-1.0..3.0)).unwrap();
            let c = wn_max_membership(&t, &inst, 1e-4, 1e-9).unwrap();
            if c.status == Status::Feasible {
                assert_eq!(wn_min_membership(&shift_wn(&inst, 1e-4).unwrap(), 1e-9).unwrap().status, Status::Feasible);
            }
        }
    }
}
