//! Duals of concrete operator systems.
//!
//! An element `G = [g_kl] ∈ M_p(S^d)` is stored through its values on the system
//! basis, `values[a] = Ĝ(B_a) = [g_kl(B_a)] ∈ M_p`. `G` is positive when
//! `Ĝ: S → M_p` is completely positive, which for a subsystem of `M_d` holds iff
//! `Ĝ` extends to a completely positive map on `M_d`, i.e. iff some PSD Choi
//! matrix `C ∈ M_d ⊗ M_p` with `Σ_ij B[i,j] C_[ij] = Ĝ(B)` exists.
//!
//! The dual order unit is the normalized trace `δ(X) = tr(X)/d`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::feasibility::{
    certify_fixed, maximize_min_eig, solve_with, split_complex_equation, verify_certificate, AffinePsdProblem,
    ConeCertificate, SolverOptions, Status,
};
use crate::linalg::json::MatrixJson;
use crate::linalg::random::{derive_seed, random_hermitian, rng_from_seed};
use crate::linalg::{hermitize, kron, min_eig, unit, CMat, C64, ONE, ZERO};
use crate::opsys::{assemble, make_system, BlockElement, MatOpSys, SystemKind};
use crate::quotient::QuotientSystem;

/// Iteration budget for dual-cone feasibility problems.
pub const MAX_ITER: usize = 5000;

/// `G ∈ M_p(S^d)` through its values `Ĝ(B_a)` on the system basis.
#[derive(Debug, Clone)]
pub struct DualElement {
    pub system: Arc<MatOpSys>,
    pub level: usize,
    pub values: Vec<CMat>,
}

impl DualElement {
    /// Checks shapes and the symmetry `Ĝ(B*) = Ĝ(B)*`.
    pub fn new(system: Arc<MatOpSys>, level: usize, values: Vec<CMat>) -> Result<Self> {
        if values.len() != system.dim() || level == 0 || values.iter().any(|v| v.shape() != (level, level)) {
            return invalid(format!("dual element needs {} blocks of size {level}x{level}", system.dim()));
        }
        let g = Self { system, level, values };
        let defect = g.symmetry_defect();
        if defect > 1e-9 * (1.0 + g.values.iter().map(|v| v.norm()).fold(0.0, f64::max)) {
            return invalid(format!("dual element is not hermitian (defect {defect:.3e})"));
        }
        Ok(g)
    }

    pub fn zero(system: Arc<MatOpSys>, level: usize) -> Self {
        let values = vec![CMat::zeros(level, level); system.dim()];
        Self { system, level, values }
    }

    /// Restriction of the map with Choi matrix `C ∈ M_d ⊗ M_p` to the system.
    pub fn from_choi(system: Arc<MatOpSys>, choi: &CMat, level: usize) -> Result<Self> {
        let d = system.ambient_dim();
        if choi.shape() != (d * level, d * level) {
            return invalid("Choi matrix has the wrong shape");
        }
        let values = system.basis().iter().map(|b| apply_choi(choi, b, level)).collect();
        Ok(Self { system, level, values })
    }

    /// The normalized trace at level `p`: `Ĝ(B) = tr(B)/d · I_p`.
    pub fn order_unit(system: Arc<MatOpSys>, level: usize) -> Self {
        let d = system.ambient_dim() as f64;
        let id = CMat::identity(level, level);
        let values = system.basis().iter().map(|b| &id * (crate::linalg::trace(b) / d)).collect();
        Self { system, level, values }
    }

    /// `Ĝ(X)` for `X` in the span of the system.
    pub fn evaluate(&self, x: &CMat) -> Result<CMat> {
        let m = self.system.span_membership(x);
        if !m.in_span {
            return invalid("matrix is not in the system");
        }
        let mut out = CMat::zeros(self.level, self.level);
        for (c, v) in m.coeffs.iter().zip(&self.values) {
            out += v * *c;
        }
        Ok(out)
    }

    /// Pairing `Σ_kl g_kl(X_kl)` with `X = Σ_a B_a ⊗ X_a ∈ M_p(S)`.
    pub fn pair(&self, x: &BlockElement) -> C64 {
        x.blocks.iter().zip(&self.values).map(|(xa, va)| (xa.component_mul(va)).sum()).sum()
    }

    fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, b) in self.system.basis().iter().enumerate() {
            let adj = self.system.span_membership(&b.adjoint());
            let mut v = CMat::zeros(self.level, self.level);
            for (c, g) in adj.coeffs.iter().zip(&self.values) {
                v += g * *c;
            }
            worst = worst.max((v - self.values[a].adjoint()).norm());
        }
        worst
    }

    pub fn add(&self, other: &DualElement) -> DualElement {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Self { system: Arc::clone(&self.system), level: self.level, values }
    }

    pub fn scale(&self, s: f64) -> DualElement {
        Self { system: Arc::clone(&self.system), level: self.level, values: self.values.iter().map(|v| v.scale(s)).collect() }
    }

    pub fn to_json(&self) -> DualJson {
        DualJson { system: self.system.descriptor(), level: self.level, values: self.values.iter().map(MatrixJson::from_matrix).collect() }
    }

    pub fn from_json(system: Arc<MatOpSys>, json: &DualJson) -> Result<Self> {
        let values = json.values.iter().map(MatrixJson::to_matrix).collect::<Result<Vec<_>>>()?;
        Self::new(system, json.level, values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<crate::opsys::SystemDescriptor>,
    pub level: usize,
    pub values: Vec<MatrixJson>,
}

/// `Σ_ij B[i,j] C_[ij]` for a Choi matrix `C ∈ M_d ⊗ M_p`.
fn apply_choi(choi: &CMat, b: &CMat, p: usize) -> CMat {
    let d = b.nrows();
    let mut out = CMat::zeros(p, p);
    for i in 0..d {
        for j in 0..d {
            let w = b[(i, j)];
            if w != ZERO {
                out += choi.view((i * p, j * p), (p, p)) * w;
            }
        }
    }
    out
}

/// Choi matrices `C ⪰ 0` reproducing `Ĝ` on the system basis.
pub fn dual_cone_problem(g: &DualElement) -> Result<AffinePsdProblem> {
    let d = g.system.ambient_dim();
    let p = g.level;
    let mut eqs = Vec::with_capacity(2 * g.values.len() * p * p);
    for (b, v) in g.system.basis().iter().zip(&g.values) {
        let bc = b.map(|z| z.conj());
        for k in 0..p {
            for l in 0..p {
                // ⟨B̄ ⊗ E_kl, C⟩ = Ĝ(B)_kl
                let a = kron(&bc, &unit(p, k, l));
                eqs.extend(split_complex_equation(&a, v[(k, l)]));
            }
        }
    }
    AffinePsdProblem::from_hermitian_equations(d * p, &eqs)
}

pub fn dual_cone_membership(g: &DualElement, tol: f64) -> Result<ConeCertificate> {
    let prob = dual_cone_problem(g)?;
    if prob.basis().is_empty() {
        return Ok(certify_fixed(prob.offset(), tol));
    }
    solve_with(&prob, &SolverOptions { max_iter: MAX_ITER, ..SolverOptions::with_tol(tol) })
}

/// A functional on a quotient `S/J_n` of `M_n` or `T_n`, stored through its
/// values on the quotient basis `1̇` followed by the off-diagonal matrix units of
/// the parent basis (in parent order).
#[derive(Debug, Clone)]
pub struct QuotientDual {
    pub quotient: Arc<QuotientSystem>,
    pub level: usize,
    pub values: Vec<CMat>,
}

/// Parent-basis indices of the off-diagonal matrix units.
fn off_diagonal_indices(parent: &MatOpSys) -> Result<Vec<(usize, usize, usize)>> {
    let d = parent.ambient_dim();
    let mut out = Vec::new();
    let mut diag = 0;
    for (a, b) in parent.basis().iter().enumerate() {
        let nz: Vec<(usize, usize)> =
            (0..d * d).map(|k| (k / d, k % d)).filter(|&(i, j)| b[(i, j)] != ZERO).collect();
        match nz.as_slice() {
            [(i, j)] if b[(*i, *j)] == ONE => {
                if i == j {
                    diag += 1;
                } else {
                    out.push((a, *i, *j));
                }
            }
            _ => return invalid("quotient duals need a parent basis of matrix units"),
        }
    }
    if diag != d {
        return invalid("parent basis must contain every diagonal matrix unit");
    }
    Ok(out)
}

impl QuotientDual {
    pub fn new(quotient: Arc<QuotientSystem>, level: usize, values: Vec<CMat>) -> Result<Self> {
        let k = off_diagonal_indices(quotient.parent())?.len() + 1;
        if values.len() != k || level == 0 || values.iter().any(|v| v.shape() != (level, level)) {
            return invalid(format!("quotient dual element needs {k} blocks of size {level}x{level}"));
        }
        let q = Self { quotient, level, values };
        // symmetry is checked on the pullback
        DualElement::new(Arc::clone(q.quotient.parent()), level, q.pullback_values()?)?;
        Ok(q)
    }

    pub fn coord_dim(quotient: &QuotientSystem) -> Result<usize> {
        Ok(off_diagonal_indices(quotient.parent())?.len() + 1)
    }

    fn pullback_values(&self) -> Result<Vec<CMat>> {
        let parent = self.quotient.parent();
        let n = parent.ambient_dim() as f64;
        let idx = off_diagonal_indices(parent)?;
        let diag = self.values[0].unscale(n);
        let mut out = vec![diag; parent.dim()];
        for (slot, (a, _, _)) in idx.iter().enumerate() {
            out[*a] = self.values[slot + 1].clone();
        }
        Ok(out)
    }

    /// `G ∘ q` as a functional on the parent system.
    pub fn pullback(&self) -> DualElement {
        let values = self.pullback_values().expect("validated at construction");
        DualElement { system: Arc::clone(self.quotient.parent()), level: self.level, values }
    }

    /// Inverse of [`pullback`](Self::pullback); the functional must vanish on `J_n`.
    pub fn from_pullback(quotient: Arc<QuotientSystem>, g: &DualElement) -> Result<Self> {
        let parent = Arc::clone(quotient.parent());
        let idx = off_diagonal_indices(&parent)?;
        let n = parent.ambient_dim();
        let diag: Vec<CMat> = (0..n).map(|i| g.evaluate(&unit(n, i, i))).collect::<Result<_>>()?;
        let scale = 1.0 + diag.iter().map(|m| m.norm()).fold(0.0, f64::max);
        if diag.iter().any(|m| (m - &diag[0]).norm() > 1e-10 * scale) {
            return Err(Error::Domain("functional does not annihilate the trace-zero diagonals".into()));
        }
        let mut values = vec![diag[0].scale(n as f64)];
        for (a, _, _) in &idx {
            values.push(g.values[*a].clone());
        }
        Ok(Self { quotient, level: g.level, values })
    }
}

fn require_kind(sys: &MatOpSys, kind: SystemKind) -> Result<usize> {
    match sys.descriptor() {
        Some(d) if d.name == kind => Ok(d.n),
        _ => invalid(format!("expected a {kind} system, got {}", sys.name())),
    }
}

fn system_arc(kind: SystemKind, n: usize) -> Result<Arc<MatOpSys>> {
    Ok(Arc::new(make_system(kind, n)?))
}

/// `W_n^d → E_n`: diagonal `g(1̇)/n`, entry `(i, j)` equal to `g(e_ij)`.
pub fn dual_iso_wd_to_en(g: &QuotientDual) -> Result<BlockElement> {
    let n = require_kind(g.quotient.parent(), SystemKind::Mn)?;
    let pulled = g.pullback();
    let en = system_arc(SystemKind::En, n)?;
    let choi = assemble(pulled.system.basis(), &pulled.values);
    BlockElement::from_ambient(en, &choi, g.level)
}

/// Inverse of [`dual_iso_wd_to_en`].
pub fn dual_iso_en_to_wd(x: &BlockElement) -> Result<QuotientDual> {
    let n = require_kind(&x.system, SystemKind::En)?;
    let q = Arc::new(QuotientSystem::mn_jn(n)?);
    let mn = Arc::clone(q.parent());
    let m = x.assemble();
    let (values, _) = mn.level_coefficients(&m, x.level)?;
    let pulled = DualElement { system: mn, level: x.level, values };
    QuotientDual::from_pullback(q, &pulled)
}

/// Index of `E_ij` in the tridiagonal basis.
fn tn_index(n: usize, i: usize, j: usize) -> usize {
    let mut k = 0;
    for r in 0..n {
        for c in 0..n {
            if r.abs_diff(c) <= 1 {
                if (r, c) == (i, j) {
                    return k;
                }
                k += 1;
            }
        }
    }
    unreachable!("({i}, {j}) is outside the band")
}

/// `θ^d: T_n^d → V_n`, `Σ a_ij S_ij ↦ ⊕_k [[a_kk, a_k,k+1], [a_k+1,k, a_k+1,k+1]]`.
pub fn dual_iso_tn(g: &DualElement) -> Result<BlockElement> {
    let n = require_kind(&g.system, SystemKind::Tn)?;
    let v = system_arc(SystemKind::Vn, n)?;
    let mut blocks = Vec::with_capacity(v.dim());
    for k in 0..n {
        blocks.push(g.values[tn_index(n, k, k)].clone());
    }
    for k in 0..n - 1 {
        blocks.push(g.values[tn_index(n, k, k + 1)].clone());
        blocks.push(g.values[tn_index(n, k + 1, k)].clone());
    }
    BlockElement::new(v, g.level, blocks)
}

/// Inverse of [`dual_iso_tn`].
pub fn dual_iso_vn_to_tn(x: &BlockElement) -> Result<DualElement> {
    let n = require_kind(&x.system, SystemKind::Vn)?;
    let t = system_arc(SystemKind::Tn, n)?;
    let mut values = vec![CMat::zeros(x.level, x.level); t.dim()];
    for k in 0..n {
        values[tn_index(n, k, k)] = x.blocks[k].clone();
    }
    for k in 0..n - 1 {
        values[tn_index(n, k, k + 1)] = x.blocks[n + 2 * k].clone();
        values[tn_index(n, k + 1, k)] = x.blocks[n + 2 * k + 1].clone();
    }
    DualElement::new(t, x.level, values)
}

/// `S_{n−1}^d → U_n` for a functional on `T_n` that vanishes on `J_n`.
pub fn dual_iso_sn(g: &DualElement) -> Result<BlockElement> {
    let n = require_kind(&g.system, SystemKind::Tn)?;
    let diag: Vec<&CMat> = (0..n).map(|k| &g.values[tn_index(n, k, k)]).collect();
    let scale = 1.0 + diag.iter().map(|m| m.norm()).fold(0.0, f64::max);
    if diag.iter().any(|m| (*m - diag[0]).norm() > 1e-10 * scale) {
        return Err(Error::Domain("functional does not annihilate the trace-zero diagonals".into()));
    }
    let u = system_arc(SystemKind::Un, n)?;
    let mut blocks = vec![diag[0].clone()];
    for k in 0..n - 1 {
        blocks.push(g.values[tn_index(n, k, k + 1)].clone());
        blocks.push(g.values[tn_index(n, k + 1, k)].clone());
    }
    BlockElement::new(u, g.level, blocks)
}

/// Inverse of [`dual_iso_sn`].
pub fn dual_iso_un_to_sn(x: &BlockElement) -> Result<DualElement> {
    let n = require_kind(&x.system, SystemKind::Un)?;
    let t = system_arc(SystemKind::Tn, n)?;
    let mut values = vec![CMat::zeros(x.level, x.level); t.dim()];
    for k in 0..n {
        values[tn_index(n, k, k)] = x.blocks[0].clone();
    }
    for k in 0..n - 1 {
        values[tn_index(n, k, k + 1)] = x.blocks[1 + 2 * k].clone();
        values[tn_index(n, k + 1, k)] = x.blocks[2 + 2 * k].clone();
    }
    DualElement::new(t, x.level, values)
}

/// A cone decision together with the problem it certifies against.
#[derive(Debug, Clone)]
pub struct Membership {
    pub cert: ConeCertificate,
    pub problem: AffinePsdProblem,
}

impl Membership {
    pub fn verified(&self, tol: f64) -> bool {
        verify_certificate(&self.problem, &self.cert, tol)
    }
}

/// A matrix-ordered space with coordinates, as seen by [`verify_coi`].
///
/// A level-`k` element is a list of `k × k` coordinate blocks.
pub trait OrderedSpace: Sync {
    fn label(&self) -> String;

    fn coord_dim(&self) -> usize;

    fn membership(&self, x: &[CMat], tol: f64) -> Result<Membership>;

    /// `x + λ·(e ⊗ I_k)` for the order unit `e`.
    fn shift_unit(&self, x: &[CMat], lambda: f64) -> Vec<CMat>;

    fn random_hermitian(&self, rng: &mut dyn rand::RngCore, level: usize) -> Vec<CMat>;

    /// Enclosure `[lo, hi]` of the smallest `λ` with `x + λe` in the cone.
    fn threshold(&self, x: &[CMat], tol: f64) -> Result<(f64, f64)>;
}

/// A concrete system with its ambient PSD cones.
pub struct ConcreteSpace(pub Arc<MatOpSys>);

impl OrderedSpace for ConcreteSpace {
    fn label(&self) -> String {
        self.0.name().to_string()
    }

    fn coord_dim(&self) -> usize {
        self.0.dim()
    }

    fn membership(&self, x: &[CMat], tol: f64) -> Result<Membership> {
        let m = hermitize(&assemble(self.0.basis(), x));
        let problem = AffinePsdProblem::new(m, vec![])?;
        let cert = certify_fixed(problem.offset(), tol);
        Ok(Membership { cert, problem })
    }

    fn shift_unit(&self, x: &[CMat], lambda: f64) -> Vec<CMat> {
        let k = x[0].nrows();
        let id = CMat::identity(k, k);
        x.iter().zip(self.0.unit_coeffs()).map(|(b, u)| b + &id * (u * lambda)).collect()
    }

    fn random_hermitian(&self, rng: &mut dyn rand::RngCore, level: usize) -> Vec<CMat> {
        self.0.random_hermitian_element(rng, level).blocks
    }

    fn threshold(&self, x: &[CMat], _tol: f64) -> Result<(f64, f64)> {
        let l = -min_eig(&assemble(self.0.basis(), x));
        Ok((l, l))
    }
}

/// The dual of a concrete system, ordered by complete positivity.
pub struct DualSpace(pub Arc<MatOpSys>);

impl DualSpace {
    fn element(&self, x: &[CMat]) -> DualElement {
        DualElement { system: Arc::clone(&self.0), level: x[0].nrows(), values: x.to_vec() }
    }
}

fn choi_threshold(prob: &AffinePsdProblem, d: usize, tol: f64) -> Result<(f64, f64)> {
    // adding λδ ⊗ I_k adds (λ/d)·I to every Choi matrix
    let br = maximize_min_eig(prob, tol, 20 * MAX_ITER)?;
    let d = d as f64;
    Ok((-d * br.upper, -d * br.lower))
}

impl OrderedSpace for DualSpace {
    fn label(&self) -> String {
        format!("{}^d", self.0.name())
    }

    fn coord_dim(&self) -> usize {
        self.0.dim()
    }

    fn membership(&self, x: &[CMat], tol: f64) -> Result<Membership> {
        let g = self.element(x);
        let problem = dual_cone_problem(&g)?;
        let cert = dual_cone_membership(&g, tol)?;
        Ok(Membership { cert, problem })
    }

    fn shift_unit(&self, x: &[CMat], lambda: f64) -> Vec<CMat> {
        let u = DualElement::order_unit(Arc::clone(&self.0), x[0].nrows());
        self.element(x).add(&u.scale(lambda)).values
    }

    fn random_hermitian(&self, rng: &mut dyn rand::RngCore, level: usize) -> Vec<CMat> {
        let choi = random_hermitian(rng, self.0.ambient_dim() * level);
        DualElement::from_choi(Arc::clone(&self.0), &choi, level).expect("shape matches").values
    }

    fn threshold(&self, x: &[CMat], tol: f64) -> Result<(f64, f64)> {
        choi_threshold(&dual_cone_problem(&self.element(x))?, self.0.ambient_dim(), tol)
    }
}

/// The dual of a quotient `S/J_n`, in [`QuotientDual`] coordinates.
pub struct QuotientDualSpace(pub Arc<QuotientSystem>);

impl QuotientDualSpace {
    fn element(&self, x: &[CMat]) -> QuotientDual {
        QuotientDual { quotient: Arc::clone(&self.0), level: x[0].nrows(), values: x.to_vec() }
    }
}

impl OrderedSpace for QuotientDualSpace {
    fn label(&self) -> String {
        format!("({}/J)^d", self.0.parent().name())
    }

    fn coord_dim(&self) -> usize {
        QuotientDual::coord_dim(&self.0).expect("matrix-unit parent")
    }

    fn membership(&self, x: &[CMat], tol: f64) -> Result<Membership> {
        let g = self.element(x).pullback();
        let problem = dual_cone_problem(&g)?;
        let cert = dual_cone_membership(&g, tol)?;
        Ok(Membership { cert, problem })
    }

    fn shift_unit(&self, x: &[CMat], lambda: f64) -> Vec<CMat> {
        // δ(1̇) = 1 and δ vanishes on the off-diagonal units
        let k = x[0].nrows();
        let mut out = x.to_vec();
        out[0] += CMat::identity(k, k).scale(lambda);
        out
    }

    fn random_hermitian(&self, rng: &mut dyn rand::RngCore, level: usize) -> Vec<CMat> {
        let parent = Arc::clone(self.0.parent());
        let n = parent.ambient_dim();
        // average the diagonal blocks of a random Choi matrix so the functional kills J_n
        let mut choi = random_hermitian(rng, n * level);
        let mut mean = CMat::zeros(level, level);
        for i in 0..n {
            mean += choi.view((i * level, i * level), (level, level));
        }
        mean.unscale_mut(n as f64);
        for i in 0..n {
            choi.view_mut((i * level, i * level), (level, level)).copy_from(&mean);
        }
        let g = DualElement::from_choi(parent, &choi, level).expect("shape matches");
        QuotientDual::from_pullback(Arc::clone(&self.0), &g).expect("annihilates J").values
    }

    fn threshold(&self, x: &[CMat], tol: f64) -> Result<(f64, f64)> {
        let g = self.element(x).pullback();
        choi_threshold(&dual_cone_problem(&g)?, self.0.parent().ambient_dim(), tol)
    }
}

/// Complex-linear map on coordinates, applied blockwise: `y_b = Σ_a M[b, a] x_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub matrix: DMatrix<C64>,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<C64>) -> Self {
        Self { matrix }
    }

    /// Matrix of a coordinate map, read off from its action on level-1 unit vectors.
    pub fn from_fn(dim_in: usize, f: impl Fn(&[CMat]) -> Result<Vec<CMat>>) -> Result<Self> {
        let mut cols = Vec::with_capacity(dim_in);
        for a in 0..dim_in {
            let x: Vec<CMat> =
                (0..dim_in).map(|b| CMat::from_element(1, 1, if a == b { ONE } else { ZERO })).collect();
            cols.push(f(&x)?);
        }
        let dim_out = cols.first().map_or(0, |c| c.len());
        Ok(Self { matrix: DMatrix::from_fn(dim_out, dim_in, |b, a| cols[a][b][(0, 0)]) })
    }

    pub fn identity(n: usize) -> Self {
        Self { matrix: DMatrix::identity(n, n) }
    }

    pub fn apply(&self, x: &[CMat]) -> Vec<CMat> {
        let k = x[0].nrows();
        (0..self.matrix.nrows())
            .map(|b| {
                let mut y = CMat::zeros(k, k);
                for (a, xa) in x.iter().enumerate() {
                    let w = self.matrix[(b, a)];
                    if w != ZERO {
                        y += xa * w;
                    }
                }
                y
            })
            .collect()
    }

    fn rank(&self) -> usize {
        let svd = self.matrix.clone().svd(false, false);
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax).count()
    }

    pub fn inverse(&self) -> Option<LinearMap> {
        self.matrix.clone().try_inverse().map(LinearMap::new)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleKind {
    /// A certified cone member must map into the target cone.
    Member,
    /// A certified non-member must map outside the target cone.
    NonMember,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    pub direction: Option<Direction>,
    pub members_tested: usize,
    pub members_passed: usize,
    pub nonmembers_tested: usize,
    pub nonmembers_passed: usize,
    /// Samples whose image could not be decided at the tolerance.
    pub inconclusive: usize,
    /// Samples dropped because the source element itself was not certified.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoiFailure {
    pub level: usize,
    pub direction: Direction,
    pub kind: SampleKind,
    pub sample: usize,
    pub element: Vec<MatrixJson>,
    pub image: Vec<MatrixJson>,
    pub image_certificate: ConeCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoiReport {
    pub domain: String,
    pub codomain: String,
    pub levels: usize,
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    pub bijective: bool,
    pub stats: Vec<LevelStats>,
    pub failures: Vec<CoiFailure>,
    /// Certificates re-checked with `verify_certificate`, and how many failed.
    pub certificates_checked: usize,
    pub certificates_rejected: usize,
    pub passed: bool,
}

enum SampleOutcome {
    Skipped,
    Passed,
    Inconclusive,
    Failed(Box<CoiFailure>),
}

struct SampleResult {
    outcome: SampleOutcome,
    kind: SampleKind,
    checked: usize,
    rejected: usize,
}

#[allow(clippy::too_many_arguments)]
fn run_sample(
    map: &LinearMap,
    src: &dyn OrderedSpace,
    dst: &dyn OrderedSpace,
    level: usize,
    direction: Direction,
    kind: SampleKind,
    sample: usize,
    seed: u64,
    tol: f64,
) -> Result<SampleResult> {
    let mut rng = rng_from_seed(seed);
    let x = src.random_hermitian(&mut rng, level);
    let (lo, hi) = src.threshold(&x, tol * 1e-2)?;
    let scale = 1.0 + lo.abs().max(hi.abs());
    let gap = scale * 10f64.powf(rng.random_range(-3.0..-1.0));
    let y = match kind {
        SampleKind::Member => src.shift_unit(&x, hi + gap),
        SampleKind::NonMember => src.shift_unit(&x, lo - gap),
    };
    let mut checked = 0;
    let mut rejected = 0;
    let want = match kind {
        SampleKind::Member => Status::Feasible,
        SampleKind::NonMember => Status::Infeasible,
    };
    let source = src.membership(&y, tol)?;
    if source.cert.status != Status::Undecided {
        checked += 1;
        if !source.verified(tol) {
            rejected += 1;
        }
    }
    if source.cert.status != want || rejected > 0 {
        return Ok(SampleResult { outcome: SampleOutcome::Skipped, kind, checked, rejected });
    }
    let image = map.apply(&y);
    let target = dst.membership(&image, tol)?;
    let outcome = match target.cert.status {
        Status::Undecided => SampleOutcome::Inconclusive,
        s => {
            checked += 1;
            if !target.verified(tol) {
                rejected += 1;
                SampleOutcome::Inconclusive
            } else if s == want {
                SampleOutcome::Passed
            } else {
                SampleOutcome::Failed(Box::new(CoiFailure {
                    level,
                    direction,
                    kind,
                    sample,
                    element: y.iter().map(MatrixJson::from_matrix).collect(),
                    image: image.iter().map(MatrixJson::from_matrix).collect(),
                    image_certificate: target.cert,
                }))
            }
        }
    };
    Ok(SampleResult { outcome, kind, checked, rejected })
}

/// Sample-based check that `map: domain → codomain` is a complete order
/// isomorphism (or, for a non-surjective injective map, a complete order
/// injection) at levels `1..=levels`.
///
/// For every level and direction, `samples` random hermitian elements are moved
/// just inside and just outside the source cone along the order unit; each
/// certified member must map to a member and each certified non-member to a
/// non-member. A single verified counterexample fails the report.
pub fn verify_coi(
    map: &LinearMap,
    domain: &dyn OrderedSpace,
    codomain: &dyn OrderedSpace,
    levels: usize,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<CoiReport> {
    if map.matrix.shape() != (codomain.coord_dim(), domain.coord_dim()) {
        return invalid("map shape does not match the spaces");
    }
    if map.rank() < domain.coord_dim() {
        return invalid("map is not injective");
    }
    if levels == 0 || !(tol > 0.0) {
        return invalid("levels and tolerance must be positive");
    }
    let inverse = if map.matrix.is_square() { map.inverse() } else { None };
    let bijective = inverse.is_some();
    let mut stats = Vec::new();
    let mut failures = Vec::new();
    let mut checked = 0;
    let mut rejected = 0;
    let mut passes: Vec<(Direction, &LinearMap, &dyn OrderedSpace, &dyn OrderedSpace)> =
        vec![(Direction::Forward, map, domain, codomain)];
    if let Some(inv) = &inverse {
        passes.push((Direction::Inverse, inv, codomain, domain));
    }
    for level in 1..=levels {
        for (di, (direction, f, src, dst)) in passes.iter().enumerate() {
            let jobs: Vec<(usize, SampleKind)> = (0..samples)
                .flat_map(|s| [(s, SampleKind::Member), (s, SampleKind::NonMember)])
                .collect();
            let results: Vec<Result<SampleResult>> = jobs
                .par_iter()
                .map(|&(s, kind)| {
                    let stream = ((level * 2 + di) * samples + s) as u64 * 2 + (kind == SampleKind::NonMember) as u64;
                    run_sample(f, *src, *dst, level, *direction, kind, s, derive_seed(seed, stream), tol)
                })
                .collect();
            let mut st = LevelStats { level, direction: Some(*direction), ..LevelStats::default() };
            for r in results {
                let r = r?;
                checked += r.checked;
                rejected += r.rejected;
                let tested = !matches!(r.outcome, SampleOutcome::Skipped);
                match (r.kind, tested) {
                    (SampleKind::Member, true) => st.members_tested += 1,
                    (SampleKind::NonMember, true) => st.nonmembers_tested += 1,
                    _ => {}
                }
                match r.outcome {
                    SampleOutcome::Skipped => st.skipped += 1,
                    SampleOutcome::Inconclusive => st.inconclusive += 1,
                    SampleOutcome::Passed => match r.kind {
                        SampleKind::Member => st.members_passed += 1,
                        SampleKind::NonMember => st.nonmembers_passed += 1,
                    },
                    SampleOutcome::Failed(f) => failures.push(*f),
                }
            }
            stats.push(st);
        }
    }
    failures.sort_by_key(|f| (f.level, f.direction == Direction::Inverse, f.sample, f.kind == SampleKind::NonMember));
    let passed = failures.is_empty() && rejected == 0;
    Ok(CoiReport {
        domain: domain.label(),
        codomain: codomain.label(),
        levels,
        samples,
        seed,
        tol,
        bijective,
        stats,
        failures,
        certificates_checked: checked,
        certificates_rejected: rejected,
        passed,
    })
}

/// Coordinate maps of the named isomorphisms, for use with [`verify_coi`].
pub mod maps {
    use super::*;

    /// `W_n^d → E_n` with its spaces.
    pub fn wd_to_en(n: usize) -> Result<(LinearMap, QuotientDualSpace, ConcreteSpace)> {
        let q = Arc::new(QuotientSystem::mn_jn(n)?);
        let en = system_arc(SystemKind::En, n)?;
        let dim = QuotientDual::coord_dim(&q)?;
        let qc = Arc::clone(&q);
        let map = LinearMap::from_fn(dim, move |x| {
            let g = QuotientDual { quotient: Arc::clone(&qc), level: 1, values: x.to_vec() };
            Ok(dual_iso_wd_to_en(&g)?.blocks)
        })?;
        Ok((map, QuotientDualSpace(q), ConcreteSpace(en)))
    }

    /// `T_n^d → V_n`.
    pub fn tn_to_vn(n: usize) -> Result<(LinearMap, DualSpace, ConcreteSpace)> {
        let t = system_arc(SystemKind::Tn, n)?;
        let v = system_arc(SystemKind::Vn, n)?;
        let tc = Arc::clone(&t);
        let map = LinearMap::from_fn(t.dim(), move |x| {
            let g = DualElement { system: Arc::clone(&tc), level: 1, values: x.to_vec() };
            Ok(dual_iso_tn(&g)?.blocks)
        })?;
        Ok((map, DualSpace(t), ConcreteSpace(v)))
    }

    /// `S_{n−1}^d → U_n`, with `S_{n−1}` realized as `T_n/J_n`.
    pub fn sn_to_un(n: usize) -> Result<(LinearMap, QuotientDualSpace, ConcreteSpace)> {
        let q = Arc::new(QuotientSystem::tn_jn(n)?);
        let u = system_arc(SystemKind::Un, n)?;
        let dim = QuotientDual::coord_dim(&q)?;
        let qc = Arc::clone(&q);
        let map = LinearMap::from_fn(dim, move |x| {
            let g = QuotientDual { quotient: Arc::clone(&qc), level: 1, values: x.to_vec() };
            Ok(dual_iso_sn(&g.pullback())?.blocks)
        })?;
        Ok((map, QuotientDualSpace(q), ConcreteSpace(u)))
    }

    /// The inclusion `E_n ↪ M_n`.
    pub fn en_into_mn(n: usize) -> Result<(LinearMap, ConcreteSpace, ConcreteSpace)> {
        let e = system_arc(SystemKind::En, n)?;
        let m = system_arc(SystemKind::Mn, n)?;
        let (ec, mc) = (Arc::clone(&e), Arc::clone(&m));
        let map = LinearMap::from_fn(e.dim(), move |x| {
            let el = BlockElement::new(Arc::clone(&ec), 1, x.to_vec())?;
            Ok(mc.level_coefficients(&el.assemble(), 1)?.0)
        })?;
        Ok((map, ConcreteSpace(e), ConcreteSpace(m)))
    }

    /// The transpose on `M_n`.
    pub fn transpose(n: usize) -> Result<(LinearMap, ConcreteSpace, ConcreteSpace)> {
        let m = system_arc(SystemKind::Mn, n)?;
        let map = LinearMap::from_fn(n * n, |x| Ok((0..n * n).map(|k| x[(k % n) * n + k / n].clone()).collect()))?;
        Ok((map, ConcreteSpace(Arc::clone(&m)), ConcreteSpace(m)))
    }
}

/// Sample `M_k(S)_+` for the dual-cone consistency check: ambient PSD matrices
/// compressed into the span would leave the cone, so members are built as
/// `x + λ*·unit` from random hermitian `x`.
pub fn sample_cone_member<R: Rng + ?Sized>(system: &Arc<MatOpSys>, level: usize, rng: &mut R) -> BlockElement {
    let x = system.random_hermitian_element(rng, level);
    let lmin = crate::opsys::element_min_eig(&x);
    let slack: f64 = rng.random_range(0.0..0.1);
    x.shift_unit(-lmin + slack)
}

/// Smallest pairing `Σ_kl g_kl(X_kl)` over sampled members `X` of `M_k(S)_+`.
pub fn sampled_min_pairing(g: &DualElement, samples: usize, seed: u64) -> f64 {
    (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = rng_from_seed(derive_seed(seed, s as u64));
            let x = sample_cone_member(&g.system, g.level, &mut rng);
            g.pair(&x).re
        })
        .reduce(|| f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random::random_psd;

    fn arc(kind: SystemKind, n: usize) -> Arc<MatOpSys> {
        Arc::new(make_system(kind, n).unwrap())
    }

    #[test]
    fn states_and_zero_are_positive() {
        let e = arc(SystemKind::En, 3);
        let delta = DualElement::order_unit(Arc::clone(&e), 1);
        assert_eq!(dual_cone_membership(&delta, 1e-9).unwrap().status, Status::Feasible);
        let zero = DualElement::zero(e, 2);
        assert_eq!(dual_cone_membership(&zero, 1e-9).unwrap().status, Status::Feasible);
    }

    #[test]
    fn transpose_pattern_is_not_positive() {
        // g_kl(X) = X_lk on M_2
        let m = arc(SystemKind::Mn, 2);
        let values: Vec<CMat> = m.basis().iter().map(|b| b.transpose()).collect();
        let g = DualElement::new(Arc::clone(&m), 2, values).unwrap();
        let c = dual_cone_membership(&g, 1e-9).unwrap();
        assert_eq!(c.status, Status::Infeasible);
        assert!(verify_certificate(&dual_cone_problem(&g).unwrap(), &c, 1e-9));
        // the identity pattern g_kl(X) = X_kl is completely positive
        let values: Vec<CMat> = m.basis().to_vec();
        let g = DualElement::new(m, 2, values).unwrap();
        assert_eq!(dual_cone_membership(&g, 1e-9).unwrap().status, Status::Feasible);
    }

    #[test]
    fn state_of_all_ones_density_maps_to_positive_en() {
        let n = 3;
        let q = Arc::new(QuotientSystem::mn_jn(n).unwrap());
        let k = QuotientDual::coord_dim(&q).unwrap();
        // ṡ(1̇) = 1, ṡ(e_ij) = 1/n
        let mut values = vec![CMat::from_element(1, 1, C64::new(1.0 / n as f64, 0.0)); k];
        values[0] = CMat::from_element(1, 1, ONE);
        let s = QuotientDual::new(Arc::clone(&q), 1, values).unwrap();
        let e = dual_iso_wd_to_en(&s).unwrap();
        assert!(crate::opsys::element_min_eig(&e) > -1e-12);
        let back = dual_iso_en_to_wd(&e).unwrap();
        for (a, b) in back.values.iter().zip(&s.values) {
            assert!((a - b).norm() < 1e-12);
        }
        let zero = QuotientDual::new(q, 1, vec![CMat::zeros(1, 1); k]).unwrap();
        assert!(dual_iso_wd_to_en(&zero).unwrap().assemble().norm() == 0.0);
    }

    #[test]
    fn s11_maps_to_first_corner() {
        let t = arc(SystemKind::Tn, 3);
        let mut values = vec![CMat::zeros(1, 1); t.dim()];
        values[0] = CMat::from_element(1, 1, ONE);
        let g = DualElement::new(t, 1, values).unwrap();
        let v = dual_iso_tn(&g).unwrap();
        assert_eq!(v.assemble(), unit(4, 0, 0));
        let back = dual_iso_vn_to_tn(&v).unwrap();
        assert_eq!(back.values, g.values);
    }

    #[test]
    fn sn_requires_annihilator() {
        let t = arc(SystemKind::Tn, 3);
        let mut values = vec![CMat::zeros(1, 1); t.dim()];
        values[0] = CMat::from_element(1, 1, ONE);
        let g = DualElement::new(Arc::clone(&t), 1, values).unwrap();
        assert!(matches!(dual_iso_sn(&g), Err(Error::Domain(_))));
        let zero = DualElement::zero(t, 1);
        assert_eq!(dual_iso_sn(&zero).unwrap().assemble().norm(), 0.0);
    }

    #[test]
    fn identity_map_on_en_passes() {
        let e = arc(SystemKind::En, 3);
        let rep = verify_coi(&LinearMap::identity(e.dim()), &ConcreteSpace(Arc::clone(&e)), &ConcreteSpace(e), 2, 10, 1, 1e-9).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn transpose_fails_at_level_two() {
        let (map, d, c) = maps::transpose(2).unwrap();
        let rep = verify_coi(&map, &d, &c, 2, 20, 5, 1e-9).unwrap();
        assert!(!rep.passed);
        assert!(rep.failures.iter().all(|f| f.level == 2));
        let rep1 = verify_coi(&map, &d, &c, 1, 20, 5, 1e-9).unwrap();
        assert!(rep1.passed);
    }

    #[test]
    fn choi_members_are_positive_functionals() {
        let t = arc(SystemKind::Tn, 3);
        let mut rng = rng_from_seed(2);
        let choi = random_psd(&mut rng, 6, 2);
        let g = DualElement::from_choi(Arc::clone(&t), &choi, 2).unwrap();
        assert_eq!(dual_cone_membership(&g, 1e-9).unwrap().status, Status::Feasible);
        let x = sample_cone_member(&t, 2, &mut rng);
        assert!(g.pair(&x).re > -1e-9);
    }
}
