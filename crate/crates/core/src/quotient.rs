//! Quotients of concrete operator systems by a kernel, chiefly `M_n/J_n` and
//! `T_n/J_n` with `J_n` the trace-zero diagonal matrices.
//!
//! A hermitian `x ∈ M_p(S/J)` lies in the D-cone when some `K ∈ M_p(J)_sa`
//! makes `x + K` PSD, and in the C-cone when `ε1 + x` does for every `ε > 0`.
//! Both are decided through [`AffinePsdProblem`]s whose free directions are
//! `J_a ⊗ F` with `F` ranging over a hermitian basis of `M_p`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::feasibility::{
    maximize_min_eig, solve_with, AffinePsdProblem, ConeCertificate, SolverOptions, Status,
};
use crate::linalg::json::MatrixJson;
use crate::linalg::random::{derive_seed, haar_unitary, rng_from_seed};
use crate::linalg::{
    block, hermitian_basis, hermitize, is_hermitian, kron, min_eigenpair, orthonormalize, psd_factor,
    set_block, swap_factors, unit, CMat, HermMat, DEFAULT_TOL,
};
use crate::opsys::{make_system, BlockElement, MatOpSys, SystemKind};

/// Iteration budget for the cone queries of this module.
pub const MAX_ITER: usize = 5000;

/// A *-closed subspace `J` of a system that avoids the unit.
#[derive(Debug, Clone)]
pub struct KernelSubspace {
    parent: Arc<MatOpSys>,
    /// Orthonormal hermitian basis of `J`.
    basis: Vec<CMat>,
}

impl KernelSubspace {
    pub fn new(parent: Arc<MatOpSys>, span: &[CMat]) -> Result<Self> {
        let d = parent.ambient_dim();
        for (i, k) in span.iter().enumerate() {
            if k.shape() != (d, d) || !parent.span_membership(k).in_span {
                return invalid(format!("kernel element {i} is not in the parent system"));
            }
        }
        // J* = J: the hermitian parts of a spanning set span J exactly when it is *-closed
        let herm = orthonormalize(&crate::linalg::hermitian_parts(span), 1e-9);
        let complex_dim = crate::linalg::orthonormalize_complex(span, 1e-9).len();
        if herm.len() != complex_dim {
            return invalid("kernel is not closed under the adjoint");
        }
        let id = CMat::identity(d, d);
        let mut r = id.clone();
        for q in &herm {
            r -= q.scale(crate::linalg::inner(q, &id));
        }
        if r.norm() < 1e-6 {
            return invalid("kernel contains the unit");
        }
        Ok(Self { parent, basis: herm })
    }

    /// `J_n`: diagonal matrices of trace zero, spanned by `E_ii − E_{i+1,i+1}`.
    pub fn trace_zero_diagonals(parent: Arc<MatOpSys>) -> Result<Self> {
        let n = parent.ambient_dim();
        let span: Vec<CMat> = (0..n - 1).map(|i| unit(n, i, i) - unit(n, i + 1, i + 1)).collect();
        Self::new(parent, &span)
    }

    pub fn parent(&self) -> &Arc<MatOpSys> {
        &self.parent
    }

    pub fn basis(&self) -> &[CMat] {
        &self.basis
    }

    /// Free directions `J_a ⊗ F` at level `p`.
    pub fn level_directions(&self, p: usize) -> Vec<CMat> {
        let fs = hermitian_basis(p);
        self.basis.iter().flat_map(|j| fs.iter().map(move |f| kron(j, f))).collect()
    }
}

#[derive(Debug, Clone)]
pub struct QuotientSystem {
    kernel: KernelSubspace,
}

impl QuotientSystem {
    pub fn new(kernel: KernelSubspace) -> Self {
        Self { kernel }
    }

    /// `M_n/J_n`.
    pub fn mn_jn(n: usize) -> Result<Self> {
        let parent = Arc::new(make_system(SystemKind::Mn, n)?);
        Ok(Self::new(KernelSubspace::trace_zero_diagonals(parent)?))
    }

    /// `T_n/J_n`.
    pub fn tn_jn(n: usize) -> Result<Self> {
        let parent = Arc::new(make_system(SystemKind::Tn, n)?);
        Ok(Self::new(KernelSubspace::trace_zero_diagonals(parent)?))
    }

    pub fn parent(&self) -> &Arc<MatOpSys> {
        &self.kernel.parent
    }

    pub fn kernel(&self) -> &KernelSubspace {
        &self.kernel
    }
}

/// The class of a representative in `M_p(S)` modulo `M_p(J)`.
#[derive(Debug, Clone)]
pub struct QuotientElement {
    pub quotient: Arc<QuotientSystem>,
    pub representative: BlockElement,
}

impl QuotientElement {
    pub fn new(quotient: Arc<QuotientSystem>, representative: BlockElement) -> Result<Self> {
        let parent = quotient.parent();
        if !Arc::ptr_eq(parent, &representative.system) && parent.basis() != representative.system.basis() {
            return invalid("representative does not belong to the quotient's parent system");
        }
        Ok(Self { quotient, representative })
    }

    /// Class of an ambient matrix `X ∈ M_d ⊗ M_p` (which must lie in `M_p(S)`).
    pub fn from_ambient(quotient: Arc<QuotientSystem>, x: &CMat, level: usize) -> Result<Self> {
        let rep = BlockElement::from_ambient(Arc::clone(quotient.parent()), x, level)?;
        Ok(Self { quotient, representative: rep })
    }

    /// `1̇ ⊗ I_p`.
    pub fn unit(quotient: Arc<QuotientSystem>, level: usize) -> Self {
        let rep = BlockElement::unit_tensor(Arc::clone(quotient.parent()), &CMat::identity(level, level));
        Self { quotient, representative: rep }
    }

    /// `e_ij = q(E_ij)` at level 1 (zero-based indices).
    pub fn e(quotient: Arc<QuotientSystem>, i: usize, j: usize) -> Result<Self> {
        let d = quotient.parent().ambient_dim();
        if i >= d || j >= d {
            return invalid(format!("matrix unit ({i}, {j}) out of range for dimension {d}"));
        }
        Self::from_ambient(quotient, &unit(d, i, j), 1)
    }

    pub fn level(&self) -> usize {
        self.representative.level
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { quotient: Arc::clone(&self.quotient), representative: self.representative.scale(s) }
    }

    pub fn shift_unit(&self, s: f64) -> Self {
        Self { quotient: Arc::clone(&self.quotient), representative: self.representative.shift_unit(s) }
    }
}

/// The lifting problem `x + K ⪰ 0, K ∈ M_p(J)_sa`.
pub fn d_cone_problem(x: &QuotientElement) -> Result<AffinePsdProblem> {
    let rep = x.representative.assemble();
    if !is_hermitian(&rep, 1e-10 * (1.0 + rep.norm())) {
        return invalid("quotient representative is not hermitian");
    }
    AffinePsdProblem::new(hermitize(&rep), x.quotient.kernel().level_directions(x.level()))
}

pub fn d_cone_membership(x: &QuotientElement, tol: f64) -> Result<ConeCertificate> {
    let prob = d_cone_problem(x)?;
    solve_with(&prob, &SolverOptions { max_iter: MAX_ITER, ..SolverOptions::with_tol(tol) })
}

pub fn c_cone_problem(x: &QuotientElement, eps: f64) -> Result<AffinePsdProblem> {
    if !(eps > 0.0) {
        return invalid("eps must be positive");
    }
    d_cone_problem(&x.shift_unit(eps))
}

/// D-membership of `ε·(1̇ ⊗ I_p) + x`.
pub fn c_cone_membership(x: &QuotientElement, eps: f64, tol: f64) -> Result<ConeCertificate> {
    let prob = c_cone_problem(x, eps)?;
    solve_with(&prob, &SolverOptions { max_iter: MAX_ITER, ..SolverOptions::with_tol(tol) })
}

/// Certified enclosure of a quotient norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBracket {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Norm of `x ∈ M_p(S/J)` via `‖x‖ ≤ t ⇔ [[t1̇, x], [x*, t1̇]] ∈ C_{2p}`.
///
/// Since `t` enters as a multiple of the unit, the infimum is `−max_K λ_min(Y₀ + K)`
/// where `Y₀ = [[0, x], [x*, 0]]`; the barrier solver returns that maximum
/// together with a dual upper bound, which gives a two-sided enclosure.
pub fn quotient_norm(x: &QuotientElement, tol: f64) -> Result<NormBracket> {
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let prob = norm_problem(x)?;
    let br = maximize_min_eig(&prob, tol / 4.0, 20 * MAX_ITER)?;
    let lower = (-br.upper).max(0.0);
    let upper = -br.lower;
    // the dual bound can overshoot the achieved value by rounding
    let lower = lower.min(upper);
    if !upper.is_finite() || !lower.is_finite() {
        return Err(Error::Domain("quotient norm could not be bracketed".into()));
    }
    Ok(NormBracket { value: 0.5 * (lower + upper), lower, upper })
}

/// Lifting problem for `[[0, x], [x*, 0]]` at level `2p`.
pub fn norm_problem(x: &QuotientElement) -> Result<AffinePsdProblem> {
    let p = x.level();
    let d = x.quotient.parent().ambient_dim();
    let m = x.representative.assemble();
    let dp = d * p;
    let mut y = CMat::zeros(2 * dp, 2 * dp);
    y.view_mut((0, dp), (dp, dp)).copy_from(&m);
    y.view_mut((dp, 0), (dp, dp)).copy_from(&m.adjoint());
    // M_2 ⊗ (M_d ⊗ M_p) → M_d ⊗ (M_p ⊗ M_2)
    let y = swap_factors(&y, 2, dp);
    AffinePsdProblem::new(y, x.quotient.kernel().level_directions(2 * p))
}

fn check_herm(m: &CMat, what: &str) -> Result<()> {
    if !m.is_square() || !is_hermitian(m, 1e-10 * (1.0 + m.norm())) {
        return invalid(format!("{what} must be a hermitian square matrix"));
    }
    Ok(())
}

/// Data `A₁₁, A_ij (i ≠ j)` of the element `1̇ ⊗ A₁₁ + Σ_{i≠j} e_ij ⊗ A_ij` of
/// `(M_n/J_n) ⊗ M_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct WnInstance {
    n: usize,
    p: usize,
    a11: CMat,
    /// `n × n` grid; diagonal entries are unused zeros.
    off: Vec<Vec<CMat>>,
}

impl WnInstance {
    pub fn new(a11: CMat, off: Vec<Vec<CMat>>) -> Result<Self> {
        let n = off.len();
        if n < 2 {
            return invalid("need n ≥ 2");
        }
        let p = a11.nrows();
        if p == 0 {
            return invalid("blocks must be nonempty");
        }
        check_herm(&a11, "A11")?;
        let mut off = off;
        for i in 0..n {
            if off[i].len() != n {
                return invalid("off-diagonal data must be an n x n grid");
            }
            for j in 0..n {
                if i != j && off[i][j].shape() != (p, p) {
                    return invalid(format!("block A_{}{} must be {p}x{p}", i + 1, j + 1));
                }
            }
            off[i][i] = CMat::zeros(p, p);
        }
        for i in 0..n {
            for j in i + 1..n {
                let d = (&off[j][i] - off[i][j].adjoint()).norm();
                if d > 1e-10 * (1.0 + off[i][j].norm()) {
                    return invalid(format!("A_{}{} is not the adjoint of A_{}{}", j + 1, i + 1, i + 1, j + 1));
                }
                off[j][i] = off[i][j].adjoint();
            }
        }
        Ok(Self { n, p, a11: hermitize(&a11), off })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn a11(&self) -> &CMat {
        &self.a11
    }

    pub fn off(&self, i: usize, j: usize) -> &CMat {
        &self.off[i][j]
    }

    /// Representative `Σ_i E_ii ⊗ A₁₁ + Σ_{i≠j} E_ij ⊗ A_ij` in `M_n ⊗ M_p`.
    pub fn representative(&self) -> CMat {
        let (n, p) = (self.n, self.p);
        let mut r = CMat::zeros(n * p, n * p);
        for i in 0..n {
            for j in 0..n {
                let b = if i == j { &self.a11 } else { &self.off[i][j] };
                set_block(&mut r, p, i, j, b);
            }
        }
        r
    }

    /// Same element with the off-diagonal blocks scaled by `s`.
    pub fn with_offdiag_scaled(&self, s: f64) -> Self {
        let off = self.off.iter().map(|row| row.iter().map(|b| b.scale(s)).collect()).collect();
        Self { n: self.n, p: self.p, a11: self.a11.clone(), off }
    }

    pub fn to_json(&self) -> WnJson {
        WnJson {
            a11: MatrixJson::from_matrix(&self.a11),
            off: self.off.iter().map(|row| row.iter().map(MatrixJson::from_matrix).collect()).collect(),
        }
    }

    pub fn from_json(json: &WnJson) -> Result<Self> {
        let off = json
            .off
            .iter()
            .map(|row| row.iter().map(MatrixJson::to_matrix).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::new(json.a11.to_matrix()?, off)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WnJson {
    pub a11: MatrixJson,
    pub off: Vec<Vec<MatrixJson>>,
}

/// The lift: `R ⪰ 0` with `R_ij = A_ij` off the diagonal and `Σ R_ii = n A₁₁`.
pub fn wn_min_problem(inst: &WnInstance) -> Result<AffinePsdProblem> {
    let q = QuotientSystem::mn_jn(inst.n)?;
    AffinePsdProblem::new(inst.representative(), q.kernel().level_directions(inst.p))
}

pub fn wn_min_membership(inst: &WnInstance, tol: f64) -> Result<ConeCertificate> {
    let prob = wn_min_problem(inst)?;
    solve_with(&prob, &SolverOptions { max_iter: MAX_ITER, ..SolverOptions::with_tol(tol) })
}

/// Data `A_i (−n < i < n)` of `Σ u_i ⊗ A_i`, with `A_{−i} = A_i*`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnInstance {
    n: usize,
    p: usize,
    /// `a[i + n − 1] = A_i`.
    a: Vec<CMat>,
}

impl SnInstance {
    pub fn new(n: usize, a: Vec<CMat>) -> Result<Self> {
        if n < 2 || a.len() != 2 * n - 1 {
            return invalid(format!("need n ≥ 2 and {} blocks A_{{1-n}}..A_{{n-1}}", 2 * n.max(1) - 1));
        }
        let p = a[0].nrows();
        if p == 0 || a.iter().any(|b| b.shape() != (p, p)) {
            return invalid("all blocks must be square of one size");
        }
        let mut a = a;
        check_herm(&a[n - 1], "A_0")?;
        a[n - 1] = hermitize(&a[n - 1]);
        for i in 1..n {
            let (pos, neg) = (n - 1 + i, n - 1 - i);
            if (&a[neg] - a[pos].adjoint()).norm() > 1e-10 * (1.0 + a[pos].norm()) {
                return invalid(format!("A_-{i} is not the adjoint of A_{i}"));
            }
            a[neg] = a[pos].adjoint();
        }
        Ok(Self { n, p, a })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `A_i` for `−n < i < n`.
    pub fn a(&self, i: isize) -> &CMat {
        &self.a[(i + self.n as isize - 1) as usize]
    }

    /// Banded representative with diagonal blocks `A₀/n`.
    pub fn representative(&self) -> CMat {
        let (n, p) = (self.n, self.p);
        let mut r = CMat::zeros(n * p, n * p);
        let d = self.a(0).unscale(n as f64);
        for i in 0..n {
            set_block(&mut r, p, i, i, &d);
        }
        for i in 0..n - 1 {
            set_block(&mut r, p, i, i + 1, self.a(i as isize + 1));
            set_block(&mut r, p, i + 1, i, self.a(-(i as isize) - 1));
        }
        r
    }

    pub fn to_json(&self) -> SnJson {
        SnJson { n: self.n, a: self.a.iter().map(MatrixJson::from_matrix).collect() }
    }

    pub fn from_json(json: &SnJson) -> Result<Self> {
        let a = json.a.iter().map(MatrixJson::to_matrix).collect::<Result<Vec<_>>>()?;
        Self::new(json.n, a)
    }

    /// Same element with `t·unit` added to `A₀`.
    pub fn with_a0_shifted(&self, t: f64) -> Self {
        let mut a = self.a.clone();
        let i = self.n - 1;
        a[i] += CMat::identity(self.p, self.p).scale(t);
        Self { n: self.n, p: self.p, a }
    }
}

/// `a[i + n − 1] = A_i` for `−n < i < n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnJson {
    pub n: usize,
    pub a: Vec<MatrixJson>,
}

/// The banded lift `R ⪰ 0`, `R_{i,i+1} = A_i`, `R_ij = 0` for `|i − j| ≥ 2`, `Σ R_ii = A₀`.
pub fn sn_min_problem(inst: &SnInstance) -> Result<AffinePsdProblem> {
    let q = QuotientSystem::tn_jn(inst.n)?;
    AffinePsdProblem::new(inst.representative(), q.kernel().level_directions(inst.p))
}

pub fn sn_min_membership(inst: &SnInstance, tol: f64) -> Result<ConeCertificate> {
    let prob = sn_min_problem(inst)?;
    solve_with(&prob, &SolverOptions { max_iter: MAX_ITER, ..SolverOptions::with_tol(tol) })
}

/// Unitaries `u_1..u_n ∈ U(r)` for which
/// `1_r ⊗ A₁₁ + (1/n) Σ_{i≠j} u_i u_j* ⊗ A_ij` has a negative eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefutationWitness {
    pub r: usize,
    pub trial: usize,
    pub seed: u64,
    pub unitaries: Vec<MatrixJson>,
    pub matrix: MatrixJson,
    pub min_eig: f64,
}

/// `1_r ⊗ A₁₁ + (1/n) Σ_{i≠j} u_i u_j* ⊗ A_ij`.
pub fn unitary_evaluation(inst: &WnInstance, u: &[CMat]) -> CMat {
    let n = inst.n;
    let r = u[0].nrows();
    let mut m = kron(&CMat::identity(r, r), &inst.a11);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m += kron(&(&u[i] * u[j].adjoint()), &inst.off[i][j]).unscale(n as f64);
            }
        }
    }
    hermitize(&m)
}

/// Sweeps of the see-saw refinement applied to each random start.
const SEE_SAW_SWEEPS: usize = 25;

/// Lower the smallest eigenvalue by coordinate updates of the unitaries.
///
/// With `v` a minimal eigenvector reshaped to `V ∈ M_{r×p}`, the Rayleigh
/// quotient depends on `u_i` through `2 Re tr(u_i G_i)`, `G_i = Σ_j u_j* V A_ijᵀ V*`,
/// which is minimized by `u_i = −W U*` for the SVD `G_i = U Σ W*`.
fn see_saw(inst: &WnInstance, u: &mut [CMat]) -> f64 {
    let (n, p) = (inst.n, inst.p);
    let r = u[0].nrows();
    let mut best = f64::INFINITY;
    for _ in 0..SEE_SAW_SWEEPS {
        let (lmin, v) = min_eigenpair(&unitary_evaluation(inst, u));
        if lmin > best - 1e-13 * (1.0 + best.abs()) {
            best = best.min(lmin);
            break;
        }
        best = lmin;
        let vm = CMat::from_fn(r, p, |a, b| v[a * p + b]);
        for i in 0..n {
            let mut g = CMat::zeros(r, r);
            for j in 0..n {
                if j != i {
                    let w = &vm * inst.off[i][j].transpose() * vm.adjoint();
                    g += u[j].adjoint() * w;
                }
            }
            if g.norm() < 1e-300 {
                continue;
            }
            let svd = g.svd(true, true);
            let (uu, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
            u[i] = -(vt.adjoint() * uu.adjoint());
        }
    }
    best.min(crate::linalg::min_eig(&unitary_evaluation(inst, u)))
}

fn single_trial(inst: &WnInstance, r: usize, seed: u64, trial: usize, tol: f64) -> Option<RefutationWitness> {
    let s = derive_seed(seed, trial as u64);
    let mut rng = rng_from_seed(s);
    let mut u: Vec<CMat> = (0..inst.n).map(|_| haar_unitary(&mut rng, r)).collect();
    let lmin = see_saw(inst, &mut u);
    if lmin >= -tol {
        return None;
    }
    let m = unitary_evaluation(inst, &u);
    let min_eig = crate::linalg::min_eig(&m);
    (min_eig < -tol).then(|| RefutationWitness {
        r,
        trial,
        seed,
        unitaries: u.iter().map(MatrixJson::from_matrix).collect(),
        matrix: MatrixJson::from_matrix(&m),
        min_eig,
    })
}

/// Random search for unitaries refuting min-positivity of a [`WnInstance`].
///
/// Trials run in parallel; the witness returned is the one with the lowest trial
/// index, so the result does not depend on scheduling. `None` is inconclusive.
pub fn unitary_refute(inst: &WnInstance, r: usize, trials: usize, seed: u64, tol: f64) -> Result<Option<RefutationWitness>> {
    if r < 1 {
        return invalid("trial dimension r must be at least 1");
    }
    const CHUNK: usize = 16;
    let mut start = 0;
    while start < trials {
        let end = (start + CHUNK).min(trials);
        let found = (start..end).into_par_iter().filter_map(|t| single_trial(inst, r, seed, t, tol)).min_by_key(|w| w.trial);
        if found.is_some() {
            return Ok(found);
        }
        start = end;
    }
    Ok(None)
}

/// Recompute a refutation from its unitaries.
pub fn verify_refutation(inst: &WnInstance, w: &RefutationWitness, tol: f64) -> bool {
    if w.unitaries.len() != inst.n {
        return false;
    }
    let Ok(u) = w.unitaries.iter().map(MatrixJson::to_matrix).collect::<Result<Vec<_>>>() else {
        return false;
    };
    for m in &u {
        if m.shape() != (w.r, w.r) || (m * m.adjoint() - CMat::identity(w.r, w.r)).norm() > 1e-10 {
            return false;
        }
    }
    crate::linalg::min_eig(&unitary_evaluation(inst, &u)) < -tol
}

/// Blocks `X_ik` with `Σ_k X_ik X_jk* = R_ij` for a lift `R` of `P = Σ u_i u_j* ⊗ A_ij`.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub lift: HermMat,
    /// `x[i][k] = X_ik`.
    pub x: Vec<Vec<CMat>>,
    /// `max_ij ‖Σ_k X_ik X_jk* − R_ij‖_F`.
    pub residual: f64,
    /// Deviation of `R` from the data: off-diagonal blocks and `Σ R_ii = Σ A_ii`.
    pub constraint_residual: f64,
}

/// Factor `Σ_{i,j} u_i u_j* ⊗ A_ij` as `Σ_k Y_k Y_k*` with `Y_k = Σ_i u_i ⊗ X_ik`.
pub fn free_factorization(a: &[Vec<CMat>], tol: f64) -> Result<Factorization> {
    let n = a.len();
    if n < 2 || a.iter().any(|row| row.len() != n) {
        return invalid("A must be an n x n grid of blocks with n ≥ 2");
    }
    let p = a[0][0].nrows();
    let mut mean = CMat::zeros(p, p);
    for (i, row) in a.iter().enumerate() {
        if row.iter().any(|b| b.shape() != (p, p)) {
            return invalid("all blocks must have the same square shape");
        }
        mean += &row[i];
    }
    let total = mean.clone();
    mean.unscale_mut(n as f64);
    let off: Vec<Vec<CMat>> = a.iter().map(|row| row.to_vec()).collect();
    let inst = WnInstance::new(mean, off)?;
    let cert = wn_min_membership(&inst, tol)?;
    if cert.status != Status::Feasible {
        return Err(Error::Domain(format!("element is not positive (membership {:?})", cert.status)));
    }
    let lift = cert.witness.expect("feasible certificate has a witness");
    let r = lift.as_matrix();
    let xm = psd_factor(&lift, tol.max(DEFAULT_TOL))?;
    let x: Vec<Vec<CMat>> = (0..n).map(|i| (0..n).map(|k| block(&xm, p, i, k)).collect()).collect();
    let mut residual: f64 = 0.0;
    let mut constraint_residual: f64 = 0.0;
    let mut diag_sum = CMat::zeros(p, p);
    for i in 0..n {
        for j in 0..n {
            let mut s = CMat::zeros(p, p);
            for k in 0..n {
                s += &x[i][k] * x[j][k].adjoint();
            }
            let rij = block(r, p, i, j);
            residual = residual.max((s - &rij).norm());
            if i != j {
                constraint_residual = constraint_residual.max((&rij - &a[i][j]).norm());
            }
        }
        diag_sum += block(r, p, i, i);
    }
    constraint_residual = constraint_residual.max((diag_sum - total).norm());
    Ok(Factorization { lift, x, residual, constraint_residual })
}

/// `Σ_k Y_k Y_k*` evaluated at concrete unitaries, for spot checks of a factorization.
pub fn factorization_at(x: &[Vec<CMat>], u: &[CMat]) -> CMat {
    let n = x.len();
    let r = u[0].nrows();
    let p = x[0][0].nrows();
    let mut out = CMat::zeros(r * p, r * p);
    for k in 0..n {
        let mut y = CMat::zeros(r * p, r * p);
        for i in 0..n {
            y += kron(&u[i], &x[i][k]);
        }
        out += &y * y.adjoint();
    }
    out
}

/// A boundary element `x + λ·1̇ ⊗ I_p` of the quotient cone and the estimate `λ*`.
#[derive(Debug, Clone)]
pub struct BoundaryProbe {
    pub element: QuotientElement,
    /// Estimated smallest shift `λ*` putting `x + λ*·1̇` in the cone.
    pub threshold: f64,
    pub offset: f64,
}

/// Random hermitian `x`, shifted to `λ* + offset` along the unit.
pub fn boundary_probe<R: rand::Rng + ?Sized>(
    quotient: &Arc<QuotientSystem>,
    p: usize,
    offset: f64,
    rng: &mut R,
) -> Result<BoundaryProbe> {
    let rep = quotient.parent().random_hermitian_element(rng, p);
    let x = QuotientElement::new(Arc::clone(quotient), rep)?;
    let br = maximize_min_eig(&d_cone_problem(&x)?, 1e-10, 20 * MAX_ITER)?;
    // λ* = −max_K λ_min(x + K); fall back to the conservative end if the bracket is loose
    let threshold = if br.upper - br.lower <= 1e-8 { -0.5 * (br.lower + br.upper) } else { -br.lower };
    Ok(BoundaryProbe { element: x.shift_unit(threshold + offset), threshold, offset })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::verify_certificate;
    use crate::linalg::{from_real_rows, C64, ONE};

    fn scalar(v: f64) -> CMat {
        CMat::from_element(1, 1, C64::new(v, 0.0))
    }

    fn wn2(a11: f64, a12: f64) -> WnInstance {
        let off = vec![vec![scalar(0.0), scalar(a12)], vec![scalar(a12), scalar(0.0)]];
        WnInstance::new(scalar(a11), off).unwrap()
    }

    #[test]
    fn d_cone_examples() {
        let q = Arc::new(QuotientSystem::mn_jn(2).unwrap());
        let one = QuotientElement::unit(Arc::clone(&q), 1);
        assert_eq!(d_cone_membership(&one, 1e-9).unwrap().status, Status::Feasible);

        let k = QuotientElement::from_ambient(Arc::clone(&q), &from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]), 1).unwrap();
        let c = d_cone_membership(&k, 1e-9).unwrap();
        assert_eq!(c.status, Status::Feasible);
        assert!(c.witness.unwrap().as_matrix().norm() < 1e-9);

        let s = QuotientElement::from_ambient(Arc::clone(&q), &from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]), 1).unwrap();
        let c = d_cone_membership(&s, 1e-9).unwrap();
        assert_eq!(c.status, Status::Infeasible);
        assert!(verify_certificate(&d_cone_problem(&s).unwrap(), &c, 1e-9));
    }

    #[test]
    fn c_cone_examples() {
        let q = Arc::new(QuotientSystem::mn_jn(2).unwrap());
        let s = QuotientElement::from_ambient(Arc::clone(&q), &from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]), 1).unwrap();
        assert_eq!(c_cone_membership(&s, 0.5, 1e-9).unwrap().status, Status::Infeasible);
        let one = QuotientElement::unit(Arc::clone(&q), 1);
        assert_eq!(c_cone_membership(&one, 1e-6, 1e-9).unwrap().status, Status::Feasible);
        let minus = one.scale(-1.0);
        assert_eq!(c_cone_membership(&minus, 0.9, 1e-9).unwrap().status, Status::Infeasible);
        assert!(c_cone_membership(&one, 0.0, 1e-9).is_err());
    }

    #[test]
    fn norm_of_matrix_units() {
        for n in 2..=4 {
            let q = Arc::new(QuotientSystem::mn_jn(n).unwrap());
            let e01 = QuotientElement::e(Arc::clone(&q), 0, 1).unwrap();
            let nb = quotient_norm(&e01, 1e-7).unwrap();
            assert!((nb.value - 1.0 / n as f64).abs() < 1e-6, "n={n}: {nb:?}");
            let e00 = QuotientElement::e(Arc::clone(&q), 0, 0).unwrap();
            assert!((quotient_norm(&e00, 1e-7).unwrap().value - 1.0 / n as f64).abs() < 1e-6);
            let one = QuotientElement::unit(Arc::clone(&q), 1);
            assert!((quotient_norm(&one, 1e-7).unwrap().value - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn wn_examples() {
        assert_eq!(wn_min_membership(&wn2(1.0, 1.0), 1e-9).unwrap().status, Status::Feasible);
        assert_eq!(wn_min_membership(&wn2(1.0, 1.2), 1e-9).unwrap().status, Status::Infeasible);
        assert_eq!(wn_min_membership(&wn2(2.0, 0.0), 1e-9).unwrap().status, Status::Feasible);
    }

    #[test]
    fn wn_rejects_asymmetric_data() {
        let off = vec![vec![scalar(0.0), scalar(1.0)], vec![scalar(0.5), scalar(0.0)]];
        assert!(WnInstance::new(scalar(1.0), off).is_err());
    }

    #[test]
    fn sn_identity_is_positive() {
        let mut a = vec![CMat::zeros(2, 2); 5];
        a[2] = CMat::identity(2, 2);
        let inst = SnInstance::new(3, a).unwrap();
        assert_eq!(sn_min_membership(&inst, 1e-9).unwrap().status, Status::Feasible);
    }

    #[test]
    fn refutes_scalar_counterexample() {
        let w = unitary_refute(&wn2(1.0, 1.2), 1, 50, 3, 1e-9).unwrap().expect("witness");
        assert!(verify_refutation(&wn2(1.0, 1.2), &w, 1e-9));
        assert!(unitary_refute(&wn2(1.0, 1.0), 2, 50, 3, 1e-9).unwrap().is_none());
        assert!(unitary_refute(&wn2(1.0, 0.0), 2, 20, 3, 1e-9).unwrap().is_none());
        assert!(unitary_refute(&wn2(1.0, 1.0), 0, 20, 3, 1e-9).is_err());
    }

    #[test]
    fn factorization_examples() {
        let ones: Vec<Vec<CMat>> = (0..2).map(|_| (0..2).map(|_| CMat::from_element(1, 1, ONE)).collect()).collect();
        let f = free_factorization(&ones, 1e-9).unwrap();
        assert!(f.residual < 1e-9 && f.constraint_residual < 1e-8);

        let p = 2;
        let ident: Vec<Vec<CMat>> = (0..3)
            .map(|i| (0..3).map(|j| if i == j { CMat::identity(p, p).unscale(3.0) } else { CMat::zeros(p, p) }).collect())
            .collect();
        let f = free_factorization(&ident, 1e-9).unwrap();
        assert!(f.residual < 1e-9);

        let bad: Vec<Vec<CMat>> = (0..2).map(|i| (0..2).map(|j| scalar(if i == j { 1.0 } else { 1.2 })).collect()).collect();
        assert!(matches!(free_factorization(&bad, 1e-9), Err(Error::Domain(_))));
    }
}
