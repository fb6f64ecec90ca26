//! Min and max tensor cones of concrete systems.
//!
//! For `S ⊆ M_a` and `T ⊆ M_b` the min cone of `S ⊗ T` at level `p` is the PSD
//! cone of `M_a ⊗ M_b ⊗ M_p` intersected with the tensor subspace. The max cone
//! is the closure of compressions `α(P ⊗ Q)α*` with `P ∈ M_k(S)_+` and
//! `Q ∈ M_m(T)_+`; it is certified here only from below, by explicit witnesses.

mod gap;
mod lift;

pub use gap::*;
pub use lift::*;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::feasibility::{certify_fixed, maximize_min_eig, AffinePsdProblem, ConeCertificate, Status};
use crate::linalg::json::MatrixJson;
use crate::linalg::random::{derive_seed, rng_from_seed};
use crate::linalg::{
    clip_spectrum, herm_to_vec, hermitian_parts, hermitize, inner, kron, max_abs, min_eig, min_eigenpair, op_norm,
    orthonormalize, psd_part, vec_to_herm, CMat, C64, ONE, ZERO,
};
use crate::opsys::{ambient_cone_membership, assemble, BlockElement, ElementJson, MatOpSys};

/// `S ⊗ T` together with its factors.
#[derive(Debug, Clone)]
pub struct TensorPair {
    s: Arc<MatOpSys>,
    t: Arc<MatOpSys>,
    product: Arc<MatOpSys>,
}

impl TensorPair {
    pub fn new(s: Arc<MatOpSys>, t: Arc<MatOpSys>) -> Result<Self> {
        let product = Arc::new(s.tensor(&t)?);
        Ok(Self { s, t, product })
    }

    pub fn s(&self) -> &Arc<MatOpSys> {
        &self.s
    }

    pub fn t(&self) -> &Arc<MatOpSys> {
        &self.t
    }

    pub fn product(&self) -> &Arc<MatOpSys> {
        &self.product
    }

    /// Element of `S ⊗ T ⊗ M_p` read off an ambient matrix; fails outside the span.
    pub fn from_ambient(&self, m: &CMat, level: usize) -> Result<BlockElement> {
        BlockElement::from_ambient(Arc::clone(&self.product), m, level)
    }

    /// `1 ⊗ 1 ⊗ I_p`.
    pub fn unit(&self, level: usize) -> BlockElement {
        BlockElement::unit_tensor(Arc::clone(&self.product), &CMat::identity(level, level))
    }

    /// `s ⊗ t ∈ M_{km}(S ⊗ T)`.
    pub fn elementary(&self, s: &BlockElement, t: &BlockElement) -> Result<BlockElement> {
        self.check_factors(s, t)?;
        let mut blocks = Vec::with_capacity(self.product.dim());
        for pa in &s.blocks {
            for qb in &t.blocks {
                blocks.push(kron(pa, qb));
            }
        }
        BlockElement::new(Arc::clone(&self.product), s.level * t.level, blocks)
    }

    /// `α(P ⊗ Q)α*` for `α: C^k ⊗ C^m → C^p` given as a `p × km` matrix.
    pub fn compress(&self, s: &BlockElement, t: &BlockElement, alpha: &CMat) -> Result<BlockElement> {
        self.check_factors(s, t)?;
        let (k, m) = (s.level, t.level);
        if alpha.ncols() != k * m || alpha.nrows() == 0 {
            return invalid(format!("α must have {} columns", k * m));
        }
        let p = alpha.nrows();
        // row r of α as a k × m matrix
        let rows: Vec<CMat> = (0..p).map(|r| CMat::from_fn(k, m, |i, j| alpha[(r, i * m + j)])).collect();
        let conj: Vec<CMat> = rows.iter().map(|a| a.map(|z| z.conj())).collect();
        let mut blocks = Vec::with_capacity(self.product.dim());
        for pa in &s.blocks {
            let left: Vec<CMat> = conj.iter().map(|c| pa * c).collect();
            for qb in &t.blocks {
                let qt = qb.transpose();
                let mut out = CMat::zeros(p, p);
                for (sidx, l) in left.iter().enumerate() {
                    let w = l * &qt;
                    for r in 0..p {
                        out[(r, sidx)] = rows[r].component_mul(&w).sum();
                    }
                }
                blocks.push(out);
            }
        }
        BlockElement::new(Arc::clone(&self.product), p, blocks)
    }

    fn check_factors(&self, s: &BlockElement, t: &BlockElement) -> Result<()> {
        if s.blocks.len() != self.s.dim() || t.blocks.len() != self.t.dim() {
            return invalid("factor elements do not belong to this tensor pair");
        }
        Ok(())
    }

    fn check_element(&self, x: &BlockElement) -> Result<()> {
        if x.blocks.len() != self.product.dim() || x.system.ambient_dim() != self.product.ambient_dim() {
            return invalid(format!("element is not in {}", self.product.name()));
        }
        Ok(())
    }
}

/// Min-cone membership: the assembled element in `M_a ⊗ M_b ⊗ M_p` is PSD.
pub fn min_tensor_membership(pair: &TensorPair, x: &BlockElement, tol: f64) -> Result<ConeCertificate> {
    pair.check_element(x)?;
    ambient_cone_membership(x, tol)
}

/// Min-cone membership for an ambient matrix, after checking it lies in `S ⊗ T ⊗ M_p`.
pub fn min_tensor_membership_ambient(pair: &TensorPair, m: &CMat, level: usize, tol: f64) -> Result<ConeCertificate> {
    let x = pair.from_ambient(m, level)?;
    ambient_cone_membership(&x, tol)
}

/// `P ∈ M_k(S)_+`, `Q ∈ M_m(T)_+` and `α` with `α(P ⊗ Q)α* = x + eps·(1 ⊗ 1 ⊗ I_p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxConeWitness {
    pub k: usize,
    pub m: usize,
    pub level: usize,
    pub p_factor: ElementJson,
    pub q_factor: ElementJson,
    pub alpha: MatrixJson,
    pub eps: f64,
    /// `max_abs` of the reconstruction error in coefficient blocks.
    pub residual: f64,
}

impl MaxConeWitness {
    pub fn factors(&self, pair: &TensorPair) -> Result<(BlockElement, BlockElement, CMat)> {
        let p = BlockElement::from_json(Arc::clone(pair.s()), &self.p_factor)?;
        let q = BlockElement::from_json(Arc::clone(pair.t()), &self.q_factor)?;
        Ok((p, q, self.alpha.to_rect_matrix()?))
    }

    /// `α(P ⊗ Q)α*`.
    pub fn reconstruct(&self, pair: &TensorPair) -> Result<BlockElement> {
        let (p, q, a) = self.factors(pair)?;
        pair.compress(&p, &q, &a)
    }
}

/// Re-check a witness: both factors in their ambient cones and the
/// reconstruction equal to `x + eps·unit` up to `tol` (relative to `x`).
pub fn verify_max_witness(pair: &TensorPair, x: &BlockElement, w: &MaxConeWitness, tol: f64) -> bool {
    let Ok((p, q, a)) = w.factors(pair) else { return false };
    if p.level != w.k || q.level != w.m || x.level != w.level || !(w.eps >= 0.0) {
        return false;
    }
    let cone_ok = |e: &BlockElement| ambient_cone_membership(e, tol).map(|c| c.status == Status::Feasible).unwrap_or(false);
    if !cone_ok(&p) || !cone_ok(&q) {
        return false;
    }
    let Ok(r) = pair.compress(&p, &q, &a) else { return false };
    let target = x.shift_unit(w.eps);
    let scale = 1.0 + target.blocks.iter().map(max_abs).fold(0.0, f64::max);
    r.blocks.iter().zip(&target.blocks).all(|(u, v)| max_abs(&(u - v)) <= tol * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxSearchOptions {
    /// Level of the `T`-factor; the `S`-factor has level `p·m`.
    pub m: usize,
    pub eps: f64,
    pub restarts: usize,
    pub seed: u64,
    pub tol: f64,
}

impl MaxSearchOptions {
    /// `m = ⌈√dim T⌉`, enough for the contraction map to reach every target.
    pub fn for_pair(pair: &TensorPair, eps: f64, seed: u64) -> Self {
        let m = (pair.t().dim() as f64).sqrt().ceil() as usize;
        Self { m: m.max(1), eps, restarts: 4, seed, tol: 1e-9 }
    }
}

/// Hermitian basis of a system scaled to unit operator norm.
pub(crate) fn hermitian_frame(s: &MatOpSys) -> Result<MatOpSys> {
    let h = orthonormalize(&hermitian_parts(s.basis()), 1e-9);
    if h.len() != s.dim() {
        return invalid(format!("{} is not closed under the adjoint", s.name()));
    }
    let h: Vec<CMat> = h.iter().map(|m| m.unscale(op_norm(m))).collect();
    MatOpSys::new(format!("{}ʰ", s.name()), s.ambient_dim(), h)
}

/// `Σ_{j,l} q[j,l] · x[(·,j),(·,l)]` for `x ∈ M_p ⊗ M_m`: the fixed contraction
/// `α = I_p ⊗ vec(I_m)ᵀ` applied to `x ⊗ q`.
fn contract(x: &CMat, q: &CMat, p: usize, m: usize) -> CMat {
    CMat::from_fn(p, p, |r, s| {
        let mut acc = ZERO;
        for j in 0..m {
            for l in 0..m {
                let w = q[(j, l)];
                if w != ZERO {
                    acc += w * x[(r * m + j, s * m + l)];
                }
            }
        }
        acc
    })
}

/// The contraction as a `p × (pm·m)` matrix.
fn contraction_alpha(p: usize, m: usize) -> CMat {
    let k = p * m;
    let mut a = CMat::zeros(p, k * m);
    for r in 0..p {
        for j in 0..m {
            a[(r, (r * m + j) * m + j)] = ONE;
        }
    }
    a
}

/// Real matrix of a real-linear map on hermitian `n × n` matrices.
fn real_matrix(n: usize, f: impl Fn(&CMat) -> Vec<CMat>) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = (0..n * n)
        .map(|c| {
            let mut e = vec![0.0; n * n];
            e[c] = 1.0;
            let outs = f(&vec_to_herm(&e, n));
            let parts: Vec<f64> = outs.iter().flat_map(|o| herm_to_vec(&hermitize(o)).iter().copied().collect::<Vec<_>>()).collect();
            DVector::from_vec(parts)
        })
        .collect();
    DMatrix::from_columns(&cols)
}

struct LeastSquares {
    x0: Vec<DVector<f64>>,
    null: Vec<DVector<f64>>,
}

fn least_squares(mat: &DMatrix<f64>, rhs: &[DVector<f64>]) -> LeastSquares {
    let (r, c) = mat.shape();
    let mut padded = DMatrix::<f64>::zeros(r.max(c), c);
    padded.view_mut((0, 0), (r, c)).copy_from(mat);
    let svd = padded.svd(true, true);
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cut = 1e-10 * smax.max(1e-300);
    let mut null = Vec::new();
    let mut x0 = vec![DVector::zeros(c); rhs.len()];
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let v = vt.row(k).transpose();
        if s > cut {
            for (x, b) in x0.iter_mut().zip(rhs) {
                let coef = u.column(k).rows(0, r).dot(b) / s;
                *x += &v * coef;
            }
        } else {
            null.push(v);
        }
    }
    LeastSquares { x0, null }
}

/// Alternating search over `P = Σ H_a ⊗ P_a` (level `pm`) and `Q = Σ G_b ⊗ Q_b`
/// (level `m`) in hermitian frames, with the contraction fixed.
struct Als<'a> {
    fs: &'a MatOpSys,
    ft: &'a MatOpSys,
    p: usize,
    m: usize,
    /// `y[a][b]`, hermitian `p × p`.
    y: Vec<Vec<CMat>>,
}

const ALS_ITERS: usize = 300;
const ASCENT_ITERS: usize = 200;

impl Als<'_> {
    fn k(&self) -> usize {
        self.p * self.m
    }

    fn scale(&self) -> f64 {
        1.0 + self.y.iter().flatten().map(|b| b.norm()).fold(0.0, f64::max)
    }

    fn p_system(&self, q: &[CMat]) -> (DMatrix<f64>, Vec<DVector<f64>>) {
        let (p, m) = (self.p, self.m);
        let mat = real_matrix(self.k(), |x| q.iter().map(|qb| contract(x, qb, p, m)).collect());
        let rhs = self.y.iter().map(|row| stack(row)).collect();
        (mat, rhs)
    }

    fn q_system(&self, pf: &[CMat]) -> (DMatrix<f64>, Vec<DVector<f64>>) {
        let (p, m) = (self.p, self.m);
        let mat = real_matrix(m, |qb| pf.iter().map(|pa| contract(pa, qb, p, m)).collect());
        let nb = self.ft.dim();
        let rhs = (0..nb).map(|b| stack(&self.y.iter().map(|row| row[b].clone()).collect::<Vec<_>>())).collect();
        (mat, rhs)
    }

    fn solve_p(&self, q: &[CMat]) -> Vec<CMat> {
        let (mat, rhs) = self.p_system(q);
        least_squares(&mat, &rhs).x0.iter().map(|v| vec_to_herm(v.as_slice(), self.k())).collect()
    }

    fn solve_q(&self, pf: &[CMat]) -> Vec<CMat> {
        let (mat, rhs) = self.q_system(pf);
        least_squares(&mat, &rhs).x0.iter().map(|v| vec_to_herm(v.as_slice(), self.m)).collect()
    }

    fn residual(&self, pf: &[CMat], q: &[CMat]) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, pa) in pf.iter().enumerate() {
            for (b, qb) in q.iter().enumerate() {
                worst = worst.max((contract(pa, qb, self.p, self.m) - &self.y[a][b]).norm());
            }
        }
        worst
    }

    /// Best `P` for a fixed `Q`: the least-squares fit moved to maximize its
    /// smallest eigenvalue over the exact-fit set; `None` if no exact fit exists.
    fn p_step(&self, q: &[CMat]) -> Result<Option<PStep>> {
        let (mat, rhs) = self.p_system(q);
        let ls = least_squares(&mat, &rhs);
        let k = self.k();
        let pf: Vec<CMat> = ls.x0.iter().map(|v| vec_to_herm(v.as_slice(), k)).collect();
        if self.residual(&pf, q) > 1e-9 * self.scale() {
            return Ok(None);
        }
        let offset = hermitize(&assemble(self.fs.basis(), &pf));
        let (value, point) = if ls.null.is_empty() {
            (min_eig(&offset), offset)
        } else {
            let dirs: Vec<CMat> = self
                .fs
                .basis()
                .iter()
                .flat_map(|h| ls.null.iter().map(move |v| kron(h, &vec_to_herm(v.as_slice(), k))))
                .collect();
            let acc = 1e-7 * (1.0 + offset.norm());
            let br = maximize_min_eig(&AffinePsdProblem::new(offset, dirs)?, acc, 400)?;
            (br.lower, br.point)
        };
        let (blocks, _) = self.fs.level_coefficients(&point, k)?;
        Ok(Some(PStep { pf: blocks.iter().map(hermitize).collect(), value, mat }))
    }

    /// Gradient of `f(Q) = max λ_min(P)` over the fit set, from the minimal
    /// eigenvector of the optimal `P` and the least-squares multiplier of the fit.
    fn f_gradient(&self, st: &PStep) -> Vec<DVector<f64>> {
        let (p, m, k) = (self.p, self.m, self.k());
        let (_, v) = min_eigenpair(&assemble(self.fs.basis(), &st.pf));
        let z = &v * v.adjoint();
        let ecs: Vec<CMat> = (0..k * k).map(|c| herm_unit(c, k)).collect();
        let g: Vec<DVector<f64>> =
            self.fs.basis().iter().map(|h| DVector::from_fn(k * k, |c, _| inner(&z, &kron(h, &ecs[c])))).collect();
        let w = least_squares(&st.mat.transpose(), &g).x0;
        let pp = p * p;
        let eds: Vec<CMat> = (0..m * m).map(|d| herm_unit(d, m)).collect();
        (0..self.ft.dim())
            .map(|b| {
                DVector::from_fn(m * m, |d, _| {
                    -st.pf
                        .iter()
                        .zip(&w)
                        .map(|(pa, wa)| wa.rows(b * pp, pp).dot(&herm_to_vec(&hermitize(&contract(pa, &eds[d], p, m)))))
                        .sum::<f64>()
                })
            })
            .collect()
    }

    fn q_min_eig(&self, q: &[CMat]) -> f64 {
        min_eig(&assemble(self.ft.basis(), q))
    }

    fn q_gradient(&self, q: &[CMat]) -> Vec<DVector<f64>> {
        let m = self.m;
        let (_, v) = min_eigenpair(&assemble(self.ft.basis(), q));
        let z = &v * v.adjoint();
        let eds: Vec<CMat> = (0..m * m).map(|d| herm_unit(d, m)).collect();
        self.ft.basis().iter().map(|g| DVector::from_fn(m * m, |d, _| inner(&z, &kron(g, &eds[d])))).collect()
    }

    /// Smallest of the two margins, with `f` measured relative to the data.
    fn merit(&self, st: &PStep, q: &[CMat]) -> f64 {
        (st.value / self.scale()).min(self.q_min_eig(q))
    }

    fn run(&self, q0: Vec<CMat>) -> Result<Option<(Vec<CMat>, Vec<CMat>)>> {
        let scale = self.scale();
        let mut q = q0;
        if self.m * self.m < self.ft.dim() {
            // the fit is not automatic: alternate least squares first
            let mut pf = self.solve_p(&q);
            let mut prev = f64::INFINITY;
            for it in 0..ALS_ITERS {
                q = self.solve_q(&pf);
                pf = self.solve_p(&q);
                balance(&mut pf, &mut q);
                let r = self.residual(&pf, &q);
                if r <= 1e-12 * scale || (it > 30 && r > 0.999 * prev) {
                    break;
                }
                prev = r;
            }
            if crate::linalg::trace(&assemble(self.ft.basis(), &q)).re < 0.0 {
                q.iter_mut().for_each(|b| b.neg_mut());
            }
        }
        normalize(&mut q);
        let Some(mut st) = self.p_step(&q)? else { return Ok(None) };
        let mut merit = self.merit(&st, &q);
        let mut step = 0.25;
        for _ in 0..ASCENT_ITERS {
            if st.value >= 0.0 && self.q_min_eig(&q) >= 0.0 {
                break;
            }
            let (fv, lq) = (st.value / scale, self.q_min_eig(&q));
            let grad = if (fv - lq).abs() <= 0.1 * fv.abs().max(lq.abs()) {
                // both margins active: smallest element of the hull of the two gradients
                let gf: Vec<DVector<f64>> = self.f_gradient(&st).into_iter().map(|g| g / scale).collect();
                hull_direction(&gf, &self.q_gradient(&q))
            } else if fv < lq {
                self.f_gradient(&st)
            } else {
                self.q_gradient(&q)
            };
            let gnorm = grad.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
            if !(gnorm > 0.0) {
                break;
            }
            let mut accepted = false;
            while step > 1e-8 {
                let mut qn: Vec<CMat> = q
                    .iter()
                    .zip(&grad)
                    .map(|(qb, g)| qb + vec_to_herm((g * (step / gnorm)).as_slice(), self.m))
                    .collect();
                normalize(&mut qn);
                if let Some(sn) = self.p_step(&qn)? {
                    let mn = self.merit(&sn, &qn);
                    if mn > merit {
                        (q, st, merit) = (qn, sn, mn);
                        step *= 1.5;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Ok(Some((st.pf, q)))
    }
}

struct PStep {
    pf: Vec<CMat>,
    value: f64,
    /// Real matrix of the fit map for the `Q` that produced this step.
    mat: DMatrix<f64>,
}

/// Minimal-norm point of the segment between two gradients, an ascent
/// direction for the smaller of the two functions.
fn hull_direction(a: &[DVector<f64>], b: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let dot = |x: &[DVector<f64>], y: &[DVector<f64>]| x.iter().zip(y).map(|(u, v)| u.dot(v)).sum::<f64>();
    let diff: Vec<DVector<f64>> = a.iter().zip(b).map(|(u, v)| u - v).collect();
    let dd = dot(&diff, &diff);
    let theta = if dd > 0.0 { (-dot(&diff, b) / dd).clamp(0.0, 1.0) } else { 0.5 };
    a.iter().zip(b).map(|(u, v)| u * theta + v * (1.0 - theta)).collect()
}

/// The `c`-th element of the coordinate basis used by `vec_to_herm`.
fn herm_unit(c: usize, n: usize) -> CMat {
    let mut e = vec![0.0; n * n];
    e[c] = 1.0;
    vec_to_herm(&e, n)
}

fn normalize(q: &mut [CMat]) {
    let n: f64 = q.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt();
    if n > 0.0 {
        q.iter_mut().for_each(|b| *b /= C64::new(n, 0.0));
    }
}

fn stack(blocks: &[CMat]) -> DVector<f64> {
    DVector::from_vec(blocks.iter().flat_map(|b| herm_to_vec(&hermitize(b)).iter().copied().collect::<Vec<_>>()).collect())
}

fn balance(pf: &mut [CMat], q: &mut [CMat]) {
    let np: f64 = pf.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt();
    let nq: f64 = q.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt();
    if np > 0.0 && nq > 0.0 {
        let c = (nq / np).sqrt();
        pf.iter_mut().for_each(|b| *b *= C64::new(c, 0.0));
        q.iter_mut().for_each(|b| *b *= C64::new(1.0 / c, 0.0));
    }
}

/// Explicit witness for `c·(1 ⊗ 1 ⊗ I_p) + Σ H_a ⊗ G_b ⊗ R_ab`, using
/// `1⊗1 ± H⊗G = ½[(1±H)⊗(1+G) + (1∓H)⊗(1−G)]` with `‖H‖, ‖G‖ ≤ 1`.
///
/// Returns `P` and `Q` as ambient-piece lists and `α` blocks per piece pair, or
/// `None` when `c·I_p` does not dominate `Σ |R_ab|`.
struct Absorption {
    p_pieces: Vec<CMat>,
    q_pieces: Vec<CMat>,
    /// `(i, j, M_ij)`: pair of pieces and its PSD weight.
    weights: Vec<(usize, usize, CMat)>,
}

fn absorb(fs: &MatOpSys, ft: &MatOpSys, r: &[Vec<CMat>], c: f64, p: usize) -> Option<Absorption> {
    let (ds, dt) = (fs.ambient_dim(), ft.ambient_dim());
    let (is, it) = (CMat::identity(ds, ds), CMat::identity(dt, dt));
    let mut p_pieces = Vec::new();
    for h in fs.basis() {
        p_pieces.push(&is + h);
        p_pieces.push(&is - h);
    }
    p_pieces.push(is.clone());
    let mut q_pieces = Vec::new();
    for g in ft.basis() {
        q_pieces.push(&it + g);
        q_pieces.push(&it - g);
    }
    q_pieces.push(it.clone());
    let (ua, ub) = (p_pieces.len() - 1, q_pieces.len() - 1);
    let mut weights = Vec::new();
    let mut used = CMat::zeros(p, p);
    for (a, row) in r.iter().enumerate() {
        for (b, rab) in row.iter().enumerate() {
            let rab = hermitize(rab);
            let pos = psd_part(&rab).unscale(2.0);
            let neg = psd_part(&(-&rab)).unscale(2.0);
            used += (&pos + &neg).scale(2.0);
            if pos.norm() > 0.0 {
                weights.push((2 * a, 2 * b, pos.clone()));
                weights.push((2 * a + 1, 2 * b + 1, pos));
            }
            if neg.norm() > 0.0 {
                weights.push((2 * a, 2 * b + 1, neg.clone()));
                weights.push((2 * a + 1, 2 * b, neg));
            }
        }
    }
    let rem = CMat::identity(p, p).scale(c) - used;
    if min_eig(&rem) < 0.0 {
        return None;
    }
    weights.push((ua, ub, hermitize(&rem)));
    Some(Absorption { p_pieces, q_pieces, weights })
}

/// Search for a max-cone witness of `x + eps·(1 ⊗ 1 ⊗ I_p)`.
///
/// Alternates between the two factors with the contraction `α = I_p ⊗ vec(I_m)ᵀ`
/// fixed, so the `S`-factor has level `k = p·m`; each half-step is a least-squares
/// fit followed by a smallest-eigenvalue maximization over the fitting set. The
/// remaining fit error and the unused slack are absorbed by an explicit witness
/// joined as a direct sum. `None` is inconclusive.
pub fn max_tensor_inner_search(pair: &TensorPair, x: &BlockElement, opts: &MaxSearchOptions) -> Result<Option<MaxConeWitness>> {
    pair.check_element(x)?;
    if opts.m == 0 || !(opts.eps > 0.0) || !(opts.tol > 0.0) {
        return invalid("m, eps and tol must be positive");
    }
    if !x.is_hermitian(1e-10 * (1.0 + x.assemble().norm())) {
        return invalid("element is not hermitian");
    }
    let fs = hermitian_frame(pair.s())?;
    let ft = hermitian_frame(pair.t())?;
    let fpair = fs.tensor(&ft)?;
    let p = x.level;
    let xa = x.assemble();
    let eye = CMat::identity(xa.nrows(), xa.nrows());
    let us: Vec<f64> = fs.unit_coeffs().iter().map(|z| z.re).collect();
    let ut: Vec<f64> = ft.unit_coeffs().iter().map(|z| z.re).collect();
    let coords = |m: &CMat| -> Result<Vec<Vec<CMat>>> {
        let (blocks, _) = fpair.level_coefficients(m, p)?;
        Ok(blocks.chunks(ft.dim()).map(|row| row.iter().map(hermitize).collect()).collect())
    };
    let full = coords(&(&xa + eye.scale(opts.eps)))?;
    for eta in [0.5 * opts.eps, 0.0] {
        let als = Als { fs: &fs, ft: &ft, p, m: opts.m, y: coords(&(&xa + eye.scale(eta)))? };
        for restart in 0..opts.restarts.max(1) {
            let mut rng = rng_from_seed(derive_seed(opts.seed, restart as u64));
            let q0 = if restart == 0 {
                let u = BlockElement::unit_tensor(Arc::new(ft.clone()), &CMat::identity(opts.m, opts.m));
                u.blocks
            } else {
                let t = Arc::new(ft.clone());
                let e = t.random_hermitian_element(&mut rng, opts.m);
                let l = crate::opsys::element_min_eig(&e);
                e.shift_unit(1.0 - l).blocks
            };
            let Some((pf, q)) = als.run(q0)? else { continue };
            if let Some(w) = assemble_witness(pair, &fs, &ft, &full, &pf, &q, &us, &ut, opts, eta, p)? {
                if verify_max_witness(pair, x, &w, opts.tol) {
                    return Ok(Some(w));
                }
            }
        }
    }
    Ok(None)
}

#[allow(clippy::too_many_arguments)]
fn assemble_witness(
    pair: &TensorPair,
    fs: &MatOpSys,
    ft: &MatOpSys,
    full: &[Vec<CMat>],
    pf: &[CMat],
    q: &[CMat],
    us: &[f64],
    ut: &[f64],
    opts: &MaxSearchOptions,
    eta: f64,
    p: usize,
) -> Result<Option<MaxConeWitness>> {
    let (m, k) = (opts.m, p * opts.m);
    // push tiny negative eigenvalues into the cone; the shift is absorbed below
    let shift = |frame: &MatOpSys, blocks: &[CMat], level: usize, units: &[f64]| -> Vec<CMat> {
        let l = min_eig(&assemble(frame.basis(), blocks));
        let tau = if l < 0.0 { -l * (1.0 + 1e-12) } else { 0.0 };
        blocks.iter().zip(units).map(|(b, u)| b + CMat::identity(level, level).scale(tau * u)).collect()
    };
    let pf = shift(fs, pf, k, us);
    let q = shift(ft, q, m, ut);
    let slack = opts.eps - eta;
    let mut resid = vec![vec![CMat::zeros(p, p); ft.dim()]; fs.dim()];
    for a in 0..fs.dim() {
        for b in 0..ft.dim() {
            let unit = CMat::identity(p, p).scale(slack * us[a] * ut[b]);
            resid[a][b] = &full[a][b] - contract(&pf[a], &q[b], p, m) - unit;
        }
    }
    let Some(abs) = absorb(fs, ft, &resid, slack, p) else { return Ok(None) };

    let (np, nq) = (abs.p_pieces.len(), abs.q_pieces.len());
    let (k2, m2) = (np * p, nq);
    let (kk, mm) = (k + k2, m + m2);
    // S-factor: P₁ ⊕ (⊕_i piece_i ⊗ I_p)
    let p1 = pair.s().level_coefficients(&assemble(fs.basis(), &pf), k)?.0;
    let piece_coeffs = |sys: &MatOpSys, pieces: &[CMat]| -> Vec<Vec<C64>> {
        pieces.iter().map(|pc| sys.span_membership(pc).coeffs).collect()
    };
    let pc = piece_coeffs(pair.s(), &abs.p_pieces);
    let p_blocks: Vec<CMat> = (0..pair.s().dim())
        .map(|c| {
            let mut blk = CMat::zeros(kk, kk);
            blk.view_mut((0, 0), (k, k)).copy_from(&p1[c]);
            for (i, co) in pc.iter().enumerate() {
                for r in 0..p {
                    let d = k + i * p + r;
                    blk[(d, d)] = co[c];
                }
            }
            blk
        })
        .collect();
    let q1 = pair.t().level_coefficients(&assemble(ft.basis(), &q), m)?.0;
    let qc = piece_coeffs(pair.t(), &abs.q_pieces);
    let q_blocks: Vec<CMat> = (0..pair.t().dim())
        .map(|c| {
            let mut blk = CMat::zeros(mm, mm);
            blk.view_mut((0, 0), (m, m)).copy_from(&q1[c]);
            for (j, co) in qc.iter().enumerate() {
                blk[(m + j, m + j)] = co[c];
            }
            blk
        })
        .collect();
    let mut alpha = CMat::zeros(p, kk * mm);
    let a1 = contraction_alpha(p, m);
    for i in 0..k {
        for j in 0..m {
            for r in 0..p {
                alpha[(r, i * mm + j)] = a1[(r, i * m + j)];
            }
        }
    }
    for (i, j, w) in &abs.weights {
        let root = clip_spectrum(w, |l| l.max(0.0).sqrt());
        for c in 0..p {
            let col = (k + i * p + c) * mm + (m + j);
            for r in 0..p {
                alpha[(r, col)] = root[(r, c)];
            }
        }
    }
    let pe = BlockElement::new(Arc::clone(pair.s()), kk, p_blocks)?;
    let qe = BlockElement::new(Arc::clone(pair.t()), mm, q_blocks)?;
    let recon = pair.compress(&pe, &qe, &alpha)?;
    let target_blocks = pair.product().level_coefficients(&assemble(&fpair_basis(fs, ft), &flatten(full)), p)?.0;
    let residual = recon.blocks.iter().zip(&target_blocks).map(|(u, v)| max_abs(&(u - v))).fold(0.0, f64::max);
    Ok(Some(MaxConeWitness {
        k: kk,
        m: mm,
        level: p,
        p_factor: pe.to_json(),
        q_factor: qe.to_json(),
        alpha: MatrixJson::from_matrix(&alpha),
        eps: opts.eps,
        residual,
    }))
}

fn fpair_basis(fs: &MatOpSys, ft: &MatOpSys) -> Vec<CMat> {
    fs.basis().iter().flat_map(|h| ft.basis().iter().map(move |g| kron(h, g))).collect()
}

fn flatten(rows: &[Vec<CMat>]) -> Vec<CMat> {
    rows.iter().flatten().cloned().collect()
}

/// Min-cone certificate for the target of a witness, for the sandwich check.
pub fn witness_target_min_certificate(x: &BlockElement, w: &MaxConeWitness, tol: f64) -> ConeCertificate {
    certify_fixed(&hermitize(&x.shift_unit(w.eps).assemble()), tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random::complex_gaussian;
    use crate::opsys::{make_system, SystemKind};

    fn pair(kind: SystemKind, n: usize) -> TensorPair {
        let s = Arc::new(make_system(kind, n).unwrap());
        TensorPair::new(Arc::clone(&s), s).unwrap()
    }

    fn member(sys: &Arc<MatOpSys>, level: usize, rng: &mut crate::linalg::random::SeededRng) -> BlockElement {
        let e = sys.random_hermitian_element(rng, level);
        let l = crate::opsys::element_min_eig(&e);
        e.shift_unit(-l + 0.1)
    }

    #[test]
    fn elementary_tensor_has_a_witness() {
        let pr = pair(SystemKind::En, 2);
        let mut rng = rng_from_seed(3);
        let s = member(pr.s(), 1, &mut rng);
        let t = member(pr.t(), 1, &mut rng);
        let x = pr.elementary(&s, &t).unwrap();
        let opts = MaxSearchOptions { m: 1, eps: 1e-6, restarts: 2, seed: 1, tol: 1e-9 };
        let w = max_tensor_inner_search(&pr, &x, &opts).unwrap().expect("witness");
        assert!(verify_max_witness(&pr, &x, &w, 1e-9));
        assert_eq!(witness_target_min_certificate(&x, &w, 1e-9).status, Status::Feasible);
    }

    #[test]
    fn planted_instance_is_recovered() {
        let pr = pair(SystemKind::En, 2);
        let mut rng = rng_from_seed(11);
        for p in 1..=2 {
            let s = member(pr.s(), 2, &mut rng);
            let t = member(pr.t(), 2, &mut rng);
            let alpha = complex_gaussian(&mut rng, p, 4);
            let x = pr.compress(&s, &t, &alpha).unwrap();
            let opts = MaxSearchOptions::for_pair(&pr, 1e-4, 5);
            let w = max_tensor_inner_search(&pr, &x, &opts).unwrap();
            assert!(w.is_some(), "p={p}");
        }
    }

    #[test]
    fn negative_unit_has_no_witness() {
        let pr = pair(SystemKind::En, 2);
        let x = pr.unit(1).scale(-1.0);
        let opts = MaxSearchOptions::for_pair(&pr, 1e-3, 1);
        assert!(max_tensor_inner_search(&pr, &x, &opts).unwrap().is_none());
        assert_eq!(min_tensor_membership(&pr, &x, 1e-9).unwrap().status, Status::Infeasible);
        assert_eq!(min_tensor_membership(&pr, &pr.unit(2), 1e-9).unwrap().status, Status::Feasible);
    }
}
