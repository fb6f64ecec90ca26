//! Membership in (affine subspace) ∩ (PSD cone) with witness or separation
//! certificate.
//!
//! The feasible set of an [`AffinePsdProblem`] is `{H₀ + Σ tᵢ Bᵢ : t ∈ ℝᵏ} ∩ PSD(n)`.
//! [`solve_feasibility`] first runs Dykstra alternating projections between the
//! affine set and the PSD cone, which settles well-separated instances quickly,
//! and then falls back to a log-barrier path that maximizes the smallest
//! eigenvalue over the affine set. Along that path `μ Z⁻¹` is a dual point, so an
//! infeasible instance yields a separator `F ⪰ 0` with `⟨F, Bᵢ⟩ = 0` and
//! `⟨F, H₀⟩ < 0` without a separate phase.
//!
//! Every emitted Feasible/Infeasible certificate is re-checked by
//! [`verify_certificate`] before it is returned; a candidate that fails the
//! check is downgraded to `Undecided`.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{
    all_finite, eigvalsh, herm_to_vec, hermitian_basis, hermitize, inner, is_hermitian, min_eig,
    min_eigenpair, orthonormalize, psd_part, vec_to_herm, CMat, HermMat, C64, DEFAULT_TOL,
};

/// Linear independence threshold on the Gram matrix of the free directions.
pub const INDEPENDENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct AffinePsdProblem {
    dim: usize,
    basis: Vec<CMat>,
    offset: CMat,
}

impl AffinePsdProblem {
    pub fn new(offset: CMat, basis: Vec<CMat>) -> Result<Self> {
        let dim = offset.nrows();
        if dim == 0 || !offset.is_square() {
            return invalid("offset must be a nonempty square matrix");
        }
        if !all_finite(&offset) || !is_hermitian(&offset, 1e-10) {
            return invalid("offset must be a finite hermitian matrix");
        }
        for (i, b) in basis.iter().enumerate() {
            if b.shape() != (dim, dim) {
                return invalid(format!("free direction {i} has shape {:?}, expected {dim}x{dim}", b.shape()));
            }
            if !all_finite(b) || !is_hermitian(b, 1e-10) {
                return invalid(format!("free direction {i} is not a finite hermitian matrix"));
            }
        }
        let basis: Vec<CMat> = basis.iter().map(hermitize).collect();
        if !basis.is_empty() {
            let k = basis.len();
            let gram = DMatrix::from_fn(k, k, |i, j| inner(&basis[i], &basis[j]));
            let ev = gram.symmetric_eigenvalues();
            let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ev.iter().copied().fold(0.0, f64::max);
            if lo <= INDEPENDENCE_TOL * hi.max(1e-300) {
                return invalid("free directions are linearly dependent");
            }
        }
        Ok(Self { dim, basis, offset: hermitize(&offset) })
    }

    /// Problem with free directions taken from an arbitrary spanning list;
    /// dependent directions are dropped and the rest orthonormalized.
    pub fn from_spanning(offset: CMat, span: &[CMat]) -> Result<Self> {
        let herm: Vec<CMat> = span.iter().map(hermitize).collect();
        Self::new(offset, orthonormalize(&herm, 1e-9))
    }

    /// The affine set `{X hermitian : ⟨Aᵣ, X⟩ = bᵣ}` for hermitian `Aᵣ`.
    ///
    /// Fails when the equations are inconsistent.
    pub fn from_hermitian_equations(dim: usize, equations: &[(CMat, f64)]) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be positive");
        }
        let cols = dim * dim;
        let rows = equations.len().max(cols);
        let mut l = DMatrix::<f64>::zeros(rows, cols);
        let mut rhs = DVector::<f64>::zeros(rows);
        for (r, (a, b)) in equations.iter().enumerate() {
            if a.shape() != (dim, dim) || !is_hermitian(a, 1e-10) {
                return invalid(format!("equation {r} does not have a hermitian {dim}x{dim} coefficient"));
            }
            l.set_row(r, &herm_to_vec(a).transpose());
            rhs[r] = *b;
        }
        let svd = l.clone().svd(true, true);
        let (u, v_t) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let cut = 1e-10 * smax.max(1e-300);
        let mut x0 = DVector::<f64>::zeros(cols);
        let mut null = Vec::new();
        for (k, &s) in svd.singular_values.iter().enumerate() {
            let vk = v_t.row(k).transpose();
            if s > cut {
                let coef = u.column(k).dot(&rhs) / s;
                x0 += vk * coef;
            } else {
                null.push(vec_to_herm(vk.as_slice(), dim));
            }
        }
        let resid = (&l * &x0 - &rhs).norm();
        if resid > 1e-8 * (1.0 + rhs.norm()) {
            return invalid(format!("linear constraints are inconsistent (residual {resid:.3e})"));
        }
        Self::new(vec_to_herm(x0.as_slice(), dim), orthonormalize(&null, 1e-9))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &[CMat] {
        &self.basis
    }

    pub fn offset(&self) -> &CMat {
        &self.offset
    }

    pub fn point(&self, t: &[f64]) -> CMat {
        let mut x = self.offset.clone();
        for (ti, b) in t.iter().zip(&self.basis) {
            x += b.scale(*ti);
        }
        x
    }

    /// Frobenius distance from `x` to the affine set.
    pub fn affine_residual(&self, x: &CMat) -> f64 {
        let frame = Frame::new(self);
        let d = x - &self.offset;
        let mut r = d.clone();
        for q in &frame.q {
            r -= q.scale(inner(q, &d));
        }
        r.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Feasible,
    Infeasible,
    Undecided,
}

/// Outcome of a cone-membership query.
///
/// `margin` is the smallest eigenvalue of the witness (Feasible), the pairing
/// `⟨F, H₀⟩` of the trace-one separator (Infeasible), or the best smallest
/// eigenvalue reached on the affine set (Undecided).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeCertificate {
    pub status: Status,
    pub witness: Option<HermMat>,
    pub separator: Option<HermMat>,
    pub margin: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl ConeCertificate {
    pub fn is_feasible(&self) -> bool {
        self.status == Status::Feasible
    }

    pub fn is_infeasible(&self) -> bool {
        self.status == Status::Infeasible
    }

    fn undecided(margin: f64, iterations: usize) -> Self {
        // keep the record JSON-representable
        let margin = if margin.is_finite() { margin } else { f64::MIN };
        Self { status: Status::Undecided, witness: None, separator: None, margin, iterations, residual: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Dykstra projections, then the barrier path if still undecided.
    Auto,
    Dykstra,
    Barrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: Method,
    /// Iteration budget for the projection phase under [`Method::Auto`].
    pub dykstra_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: 5000, method: Method::Auto, dykstra_iters: 200 }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

pub fn solve_feasibility(prob: &AffinePsdProblem, tol: f64, max_iter: usize) -> Result<ConeCertificate> {
    solve_with(prob, &SolverOptions { tol, max_iter, ..SolverOptions::default() })
}

pub fn solve_with(prob: &AffinePsdProblem, opts: &SolverOptions) -> Result<ConeCertificate> {
    if !(opts.tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let frame = Frame::new(prob);
    if frame.q.is_empty() {
        return Ok(certify_fixed(prob.offset(), opts.tol));
    }
    let mut used = 0;
    let mut best = f64::NEG_INFINITY;
    if matches!(opts.method, Method::Auto | Method::Dykstra) {
        let budget = match opts.method {
            Method::Dykstra => opts.max_iter,
            _ => opts.dykstra_iters.min(opts.max_iter),
        };
        let (outcome, it) = dykstra(prob, &frame, opts.tol, budget);
        used += it;
        match outcome {
            Outcome::Decided(cert) => return Ok(finish(cert, used)),
            Outcome::Open(b) => best = best.max(b),
        }
    }
    if matches!(opts.method, Method::Auto | Method::Barrier) && used < opts.max_iter {
        let (outcome, it) = barrier(prob, &frame, opts.tol, opts.max_iter - used, Goal::Decide);
        used += it;
        match outcome {
            BarrierOutcome::Decided(cert) => return Ok(finish(cert, used)),
            BarrierOutcome::Open { best_lambda, .. } => best = best.max(best_lambda),
        }
    }
    Ok(ConeCertificate::undecided(best, used))
}

fn finish(mut cert: ConeCertificate, iterations: usize) -> ConeCertificate {
    cert.iterations = iterations;
    cert
}

/// Direct decision when there are no free directions: the offset itself is the
/// witness, or the minimum eigenprojector separates it.
pub fn certify_fixed(h: &CMat, tol: f64) -> ConeCertificate {
    let (lmin, v) = min_eigenpair(h);
    if lmin >= -tol {
        ConeCertificate {
            status: Status::Feasible,
            witness: Some(HermMat::hermitian_part(h)),
            separator: None,
            margin: lmin,
            iterations: 0,
            residual: 0.0,
        }
    } else {
        let f = &v * v.adjoint();
        ConeCertificate {
            status: Status::Infeasible,
            witness: None,
            separator: Some(HermMat::hermitian_part(&f)),
            margin: lmin,
            iterations: 0,
            residual: 0.0,
        }
    }
}

/// Independently re-check a certificate against the problem data.
pub fn verify_certificate(prob: &AffinePsdProblem, cert: &ConeCertificate, tol: f64) -> bool {
    match cert.status {
        Status::Undecided => false,
        Status::Feasible => {
            let Some(w) = &cert.witness else { return false };
            let w = w.as_matrix();
            if w.shape() != (prob.dim, prob.dim) || !all_finite(w) {
                return false;
            }
            let scale = 1.0 + prob.offset.norm();
            min_eig(w) >= -tol && prob.affine_residual(w) <= tol * scale
        }
        Status::Infeasible => {
            let Some(f) = &cert.separator else { return false };
            let f = f.as_matrix();
            if f.shape() != (prob.dim, prob.dim) || !all_finite(f) {
                return false;
            }
            let tr = crate::linalg::trace(f).re;
            if !(tr > 0.0) {
                return false;
            }
            // judge the trace-normalized separator
            let f = f.unscale(tr);
            min_eig(&f) >= -tol
                && prob.basis.iter().all(|b| inner(&f, b).abs() <= tol * b.norm())
                && inner(&f, &prob.offset) <= -tol
        }
    }
}

/// Orthonormal frame of the affine set: minimum-norm point plus an orthonormal
/// basis of the direction space.
struct Frame {
    h0: CMat,
    q: Vec<CMat>,
}

impl Frame {
    fn new(prob: &AffinePsdProblem) -> Self {
        let q = orthonormalize(&prob.basis, 1e-12);
        let mut h0 = prob.offset.clone();
        for b in &q {
            h0 -= b.scale(inner(b, &prob.offset));
        }
        Self { h0, q }
    }

    fn project(&self, x: &CMat) -> CMat {
        let d = x - &self.h0;
        let mut p = self.h0.clone();
        for b in &self.q {
            p += b.scale(inner(b, &d));
        }
        p
    }

    fn point(&self, t: &[f64]) -> CMat {
        let mut x = self.h0.clone();
        for (ti, b) in t.iter().zip(&self.q) {
            x += b.scale(*ti);
        }
        x
    }

    fn remove_directions(&self, f: &CMat) -> CMat {
        let mut r = f.clone();
        for b in &self.q {
            r -= b.scale(inner(b, f));
        }
        r
    }
}

enum Outcome {
    Decided(ConeCertificate),
    Open(f64),
}

fn feasible_cert(prob: &AffinePsdProblem, x: CMat, lmin: f64) -> ConeCertificate {
    let residual = prob.affine_residual(&x);
    ConeCertificate {
        status: Status::Feasible,
        witness: Some(HermMat::hermitian_part(&x)),
        separator: None,
        margin: lmin,
        iterations: 0,
        residual,
    }
}

/// Turn a candidate normal direction into a verified separator, if possible.
fn try_separator(prob: &AffinePsdProblem, frame: &Frame, direction: &CMat, tol: f64) -> Option<ConeCertificate> {
    let mut f = hermitize(direction);
    for _ in 0..4 {
        f = frame.remove_directions(&psd_part(&f));
    }
    let tr = crate::linalg::trace(&f).re;
    if !(tr > 0.0) {
        return None;
    }
    let f = f.unscale(tr);
    let value = inner(&f, &prob.offset);
    let residual = frame.q.iter().map(|b| inner(&f, b).abs()).fold(0.0, f64::max);
    let cert = ConeCertificate {
        status: Status::Infeasible,
        witness: None,
        separator: Some(HermMat::hermitian_part(&f)),
        margin: value,
        iterations: 0,
        residual,
    };
    verify_certificate(prob, &cert, tol).then_some(cert)
}

const SEPARATOR_WINDOW: usize = 50;

fn dykstra(prob: &AffinePsdProblem, frame: &Frame, tol: f64, budget: usize) -> (Outcome, usize) {
    let mut x = frame.h0.clone();
    let mut corr = CMat::zeros(prob.dim, prob.dim);
    let mut window: VecDeque<CMat> = VecDeque::with_capacity(SEPARATOR_WINDOW);
    let mut best = f64::NEG_INFINITY;
    for it in 0..budget {
        let lmin = min_eig(&x);
        best = best.max(lmin);
        if lmin >= -tol {
            let cert = feasible_cert(prob, x, lmin);
            if verify_certificate(prob, &cert, tol) {
                return (Outcome::Decided(cert), it);
            }
            return (Outcome::Open(best), it);
        }
        // negative part of the affine iterate: normal direction of the cone
        let neg = psd_part(&(-&x));
        if window.len() == SEPARATOR_WINDOW {
            window.pop_front();
        }
        window.push_back(neg);
        if window.len() == SEPARATOR_WINDOW && it % SEPARATOR_WINDOW == 0 {
            let avg = window.iter().fold(CMat::zeros(prob.dim, prob.dim), |acc, m| acc + m);
            if let Some(cert) = try_separator(prob, frame, &avg, tol) {
                return (Outcome::Decided(cert), it);
            }
        }
        let y = psd_part(&(&x + &corr));
        corr = &x + &corr - &y;
        x = frame.project(&y);
    }
    (Outcome::Open(best), budget)
}

#[derive(Clone, Copy, PartialEq)]
enum Goal {
    /// Stop at the first verified witness or separator.
    Decide,
    /// Drive the duality gap below the given absolute accuracy.
    Optimize(f64),
}

enum BarrierOutcome {
    Decided(ConeCertificate),
    Open { best_lambda: f64, best_point: Option<CMat>, dual_bound: f64 },
}

/// Cholesky of a hermitian matrix, `None` unless positive definite.
fn chol(z: &CMat) -> Option<Cholesky<C64, nalgebra::Dyn>> {
    Cholesky::new(z.clone())
}

fn log_det(c: &Cholesky<C64, nalgebra::Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.re.ln()).sum::<f64>()
}

/// Log-barrier path for `max λ s.t. X(t) − λI ⪰ 0`, `X(t) = h₀ + Σ tᵢ qᵢ`.
fn barrier(prob: &AffinePsdProblem, frame: &Frame, tol: f64, budget: usize, goal: Goal) -> (BarrierOutcome, usize) {
    let n = prob.dim;
    let k = frame.q.len();
    let eye = CMat::identity(n, n);
    let mut t = vec![0.0; k];
    let x0 = frame.h0.clone();
    let ev0 = eigvalsh(&x0);
    let lmin0 = ev0[0];
    let spread = ev0.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let mut best_lambda = lmin0;
    let mut best_point = Some(x0.clone());
    let mut dual_bound = f64::INFINITY;
    if goal == Goal::Decide && lmin0 >= -tol {
        let cert = feasible_cert(prob, x0, lmin0);
        if verify_certificate(prob, &cert, tol) {
            return (BarrierOutcome::Decided(cert), 0);
        }
    }

    // λ is kept below `cap` and t is weakly damped so the barrier problem stays
    // bounded when the identity or a PSD matrix lies in the free span
    let cap = match goal {
        Goal::Decide => spread,
        Goal::Optimize(_) => 10.0 * spread + 10.0,
    };
    let damping = |mu: f64| 1e-8 * mu / spread;
    let mut lambda = lmin0 - spread;
    let mut mu = spread / n as f64;
    let mut used = 0;
    // directions: q_1..q_k, then −I for λ
    let dirs: Vec<&CMat> = frame.q.iter().collect();
    let neg_eye = -eye.clone();

    let objective = |t: &[f64], lambda: f64, mu: f64| -> Option<f64> {
        let z = frame.point(t) - eye.scale(lambda);
        let prox = 0.5 * damping(mu) * t.iter().map(|v| v * v).sum::<f64>();
        if lambda >= cap {
            return None;
        }
        chol(&z).map(|c| -lambda - mu * log_det(&c) - mu * (cap - lambda).ln() + prox)
    };

    'outer: loop {
        // centering
        for _ in 0..80 {
            if used >= budget {
                break 'outer;
            }
            used += 1;
            let z = frame.point(&t) - eye.scale(lambda);
            let Some(c) = chol(&z) else { break 'outer };
            let l = c.l();
            let linv = match l.solve_lower_triangular(&eye) {
                Some(m) => m,
                None => break 'outer,
            };
            let zi = linv.adjoint() * &linv;
            // whitened directions W_a = L⁻¹ A_a L⁻*
            let mut w: Vec<CMat> = Vec::with_capacity(k + 1);
            for d in dirs.iter().copied().chain(std::iter::once(&neg_eye)) {
                w.push(&linv * d * linv.adjoint());
            }
            let m = k + 1;
            let mut grad = DVector::<f64>::zeros(m);
            for a in 0..m {
                let ad = if a < k { dirs[a] } else { &neg_eye };
                grad[a] = -mu * inner(&zi, ad);
            }
            grad[k] += -1.0 + mu / (cap - lambda);
            let rho = damping(mu);
            for a in 0..k {
                grad[a] += rho * t[a];
            }
            let mut hess = DMatrix::<f64>::zeros(m, m);
            for a in 0..m {
                for b in a..m {
                    let v = mu * inner(&w[a], &w[b]);
                    hess[(a, b)] = v;
                    hess[(b, a)] = v;
                }
            }
            for a in 0..k {
                hess[(a, a)] += rho;
            }
            hess[(k, k)] += mu / (cap - lambda).powi(2);
            let step = solve_spd(&hess, &(-&grad));
            let decrement = -grad.dot(&step);
            if !(decrement.is_finite()) {
                break 'outer;
            }
            if decrement < 1e-10 {
                break;
            }
            let Some(f0) = objective(&t, lambda, mu) else { break 'outer };
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let tn: Vec<f64> = t.iter().zip(step.iter()).map(|(ti, si)| ti + alpha * si).collect();
                let ln = lambda + alpha * step[k];
                if let Some(f1) = objective(&tn, ln, mu) {
                    if f1 <= f0 - 0.25 * alpha * decrement {
                        t = tn;
                        lambda = ln;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
            if t.iter().any(|v| v.abs() > 1e12) {
                break 'outer;
            }
            let x = frame.point(&t);
            let lmin = min_eig(&x);
            if lmin > best_lambda {
                best_lambda = lmin;
                best_point = Some(x.clone());
            }
            if goal == Goal::Decide && lmin >= -tol {
                let cert = feasible_cert(prob, x, lmin);
                if verify_certificate(prob, &cert, tol) {
                    return (BarrierOutcome::Decided(cert), used);
                }
            }
            if decrement < 1e-9 {
                break;
            }
        }
        // dual point from the (approximately) centered iterate
        let z = frame.point(&t) - eye.scale(lambda);
        if let Some(c) = chol(&z) {
            let zi = c.inverse();
            let f = zi.scale(mu);
            match goal {
                Goal::Decide => {
                    if let Some(cert) = try_separator(prob, frame, &f, tol) {
                        return (BarrierOutcome::Decided(cert), used);
                    }
                }
                Goal::Optimize(_) => {
                    if let Some(bound) = dual_value(prob, frame, &f) {
                        dual_bound = dual_bound.min(bound);
                    }
                }
            }
        }
        if let Goal::Optimize(acc) = goal {
            if dual_bound - best_lambda <= acc {
                break;
            }
        }
        if mu * (n as f64) < 1e-4 * tol {
            break;
        }
        mu *= 0.2;
    }
    (BarrierOutcome::Open { best_lambda, best_point, dual_bound }, used)
}

/// Upper bound on `max_t λ_min(X(t))` from a candidate dual direction:
/// any trace-one PSD `F ⊥ qᵢ` satisfies `λ_min(X(t)) ≤ ⟨F, H₀⟩`.
fn dual_value(prob: &AffinePsdProblem, frame: &Frame, direction: &CMat) -> Option<f64> {
    let mut f = hermitize(direction);
    for _ in 0..4 {
        f = frame.remove_directions(&psd_part(&f));
    }
    let tr = crate::linalg::trace(&f).re;
    if !(tr > 0.0) {
        return None;
    }
    let f = f.unscale(tr);
    // account for residual non-orthogonality and negativity conservatively
    let leak: f64 = frame.q.iter().map(|b| inner(&f, b).abs()).sum();
    let neg = (-min_eig(&f)).max(0.0);
    if leak > 1e-9 || neg > 1e-9 {
        return None;
    }
    Some(inner(&f, &prob.offset))
}

fn solve_spd(h: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    if let Some(c) = h.clone().cholesky() {
        return c.solve(rhs);
    }
    let scale = h.diagonal().iter().copied().fold(0.0, f64::max).max(1e-300);
    let mut reg = h.clone();
    for i in 0..reg.nrows() {
        reg[(i, i)] += 1e-12 * scale;
    }
    if let Some(c) = reg.clone().cholesky() {
        return c.solve(rhs);
    }
    reg.svd(true, true).solve(rhs, 1e-14 * scale).unwrap_or_else(|_| DVector::zeros(rhs.len()))
}

/// Bracket on `max_t λ_min(H₀ + Σ tᵢ Bᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinEigBracket {
    /// Achieved value with its point.
    pub lower: f64,
    pub point: CMat,
    /// Certified upper bound from a dual point (`+∞` if none was found).
    pub upper: f64,
    pub iterations: usize,
}

/// Maximize the smallest eigenvalue over the affine set to absolute accuracy
/// `accuracy` (when the optimum is finite).
pub fn maximize_min_eig(prob: &AffinePsdProblem, accuracy: f64, max_iter: usize) -> Result<MinEigBracket> {
    if !(accuracy > 0.0) {
        return invalid("accuracy must be positive");
    }
    let frame = Frame::new(prob);
    if frame.q.is_empty() {
        let v = min_eig(prob.offset());
        return Ok(MinEigBracket { lower: v, point: prob.offset().clone(), upper: v, iterations: 0 });
    }
    let (outcome, used) = barrier(prob, &frame, accuracy, max_iter, Goal::Optimize(accuracy));
    match outcome {
        BarrierOutcome::Open { best_lambda, best_point, dual_bound } => Ok(MinEigBracket {
            lower: best_lambda,
            point: best_point.unwrap_or_else(|| frame.h0.clone()),
            upper: dual_bound,
            iterations: used,
        }),
        BarrierOutcome::Decided(_) => unreachable!("optimize goal never decides"),
    }
}

/// Re-express a complex scalar constraint `⟨A, X⟩ = c` on hermitian `X` as two
/// real equations with hermitian coefficients.
pub fn split_complex_equation(a: &CMat, c: C64) -> [(CMat, f64); 2] {
    // ⟨A, X⟩ = tr(A_h X) − i tr(A_s X) with A = A_h + i A_s
    let ah = hermitize(a);
    let as_ = (a - a.adjoint()) * C64::new(0.0, -0.5);
    [(ah, c.re), (as_, -c.im)]
}

/// Orthonormal basis of the hermitian matrices of size `n`; re-exported for
/// building free-direction sets.
pub fn full_hermitian_directions(n: usize) -> Vec<CMat> {
    hermitian_basis(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{from_real_rows, identity, unit};

    fn swap2() -> CMat {
        from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
    }

    #[test]
    fn identity_without_directions_is_feasible() {
        let p = AffinePsdProblem::new(identity(2), vec![]).unwrap();
        let c = solve_feasibility(&p, 1e-9, 100).unwrap();
        assert_eq!(c.status, Status::Feasible);
        assert_eq!(c.witness.as_ref().unwrap().as_matrix(), &identity(2));
        assert!(verify_certificate(&p, &c, 1e-9));
    }

    #[test]
    fn swap_without_directions_is_separated() {
        let p = AffinePsdProblem::new(swap2(), vec![]).unwrap();
        let c = solve_feasibility(&p, 1e-9, 100).unwrap();
        assert_eq!(c.status, Status::Infeasible);
        let f = c.separator.as_ref().unwrap().as_matrix();
        let expect = from_real_rows(&[&[0.5, -0.5], &[-0.5, 0.5]]);
        assert!((f - expect).norm() < 1e-12);
        assert!((inner(f, &swap2()) + 1.0).abs() < 1e-12);
        assert!(verify_certificate(&p, &c, 1e-9));
    }

    #[test]
    fn swap_with_identity_direction_is_feasible() {
        let p = AffinePsdProblem::new(swap2(), vec![identity(2)]).unwrap();
        for method in [Method::Auto, Method::Dykstra, Method::Barrier] {
            let opts = SolverOptions { method, ..SolverOptions::default() };
            let c = solve_with(&p, &opts).unwrap();
            assert_eq!(c.status, Status::Feasible, "{method:?}");
            assert!(verify_certificate(&p, &c, 1e-9));
        }
    }

    #[test]
    fn tampered_witness_fails_verification() {
        let p = AffinePsdProblem::new(swap2(), vec![identity(2)]).unwrap();
        let mut c = solve_feasibility(&p, 1e-9, 1000).unwrap();
        let w = c.witness.take().unwrap().into_inner() + unit(2, 0, 0);
        c.witness = Some(HermMat::new(w).unwrap());
        assert!(!verify_certificate(&p, &c, 1e-9));
    }

    #[test]
    fn non_psd_separator_fails_verification() {
        let p = AffinePsdProblem::new(swap2(), vec![]).unwrap();
        let mut c = solve_feasibility(&p, 1e-9, 10).unwrap();
        c.separator = Some(HermMat::new(from_real_rows(&[&[1.0, 0.0], &[0.0, -0.5]])).unwrap());
        assert!(!verify_certificate(&p, &c, 1e-9));
    }

    #[test]
    fn undecided_never_verifies() {
        let p = AffinePsdProblem::new(identity(2), vec![]).unwrap();
        let c = ConeCertificate::undecided(0.0, 0);
        assert!(!verify_certificate(&p, &c, 1e-9));
    }

    #[test]
    fn dependent_directions_rejected() {
        let e = unit(2, 0, 0);
        assert!(AffinePsdProblem::new(identity(2), vec![e.clone(), e.scale(2.0)]).is_err());
        assert!(AffinePsdProblem::from_spanning(identity(2), &[e.clone(), e.scale(2.0)]).is_ok());
    }

    #[test]
    fn tangent_boundary_instance_is_feasible() {
        // [[1+t, 1], [1, 1−t]] is PSD only at t = 0
        let h0 = from_real_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let b = from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]);
        let p = AffinePsdProblem::new(h0, vec![b]).unwrap();
        let c = solve_feasibility(&p, 1e-9, 1000).unwrap();
        assert_eq!(c.status, Status::Feasible);
    }

    #[test]
    fn equations_build_the_expected_affine_set() {
        // diagonal entries fixed to 1 in M_2: free directions are the off-diagonal hermitians
        let eqs = vec![(unit(2, 0, 0), 1.0), (unit(2, 1, 1), 1.0)];
        let p = AffinePsdProblem::from_hermitian_equations(2, &eqs).unwrap();
        assert_eq!(p.basis().len(), 2);
        assert!((p.offset() - identity(2)).norm() < 1e-12);
        let inconsistent = vec![(unit(2, 0, 0), 1.0), (unit(2, 0, 0), 2.0)];
        assert!(AffinePsdProblem::from_hermitian_equations(2, &inconsistent).is_err());
    }

    #[test]
    fn maximize_min_eig_on_simple_family() {
        // λ_min([[t, 1], [1, −t]]) = −√(t²+1), maximized at t = 0 with value −1
        let p = AffinePsdProblem::new(swap2(), vec![from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])]).unwrap();
        let b = maximize_min_eig(&p, 1e-8, 2000).unwrap();
        assert!((b.lower + 1.0).abs() < 1e-7, "{b:?}");
        assert!(b.upper >= b.lower - 1e-12 && b.upper - b.lower < 1e-6);
    }
}
