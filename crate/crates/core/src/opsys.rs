//! Concrete operator systems: unital, involution-closed subspaces of a matrix
//! algebra `M_d`, with level-`p` cones `M_p(S)_+ = (M_d ⊗ M_p)_+ ∩ (S ⊗ M_p)`.
//!
//! Elements of `S ⊗ M_p` are stored as coefficient blocks against the system
//! basis, `x = Σ_a B_a ⊗ C_a` (system factor on the left).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::feasibility::{certify_fixed, ConeCertificate};
use crate::linalg::json::MatrixJson;
use crate::linalg::random::random_hermitian;
use crate::linalg::{hermitize, inner_c, is_hermitian, kron, min_eig, unit, CMat, C64, ZERO};

/// Relative residual below which a matrix counts as lying in a span.
pub const SPAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SystemKind {
    /// The full matrix algebra.
    Mn,
    /// Tridiagonal matrices.
    Tn,
    /// Matrices with constant diagonal.
    En,
    /// Direct sums of `n − 1` copies of `M_2` with one common diagonal value.
    Un,
    /// Direct sums of `n − 1` copies of `M_2` whose diagonals chain `a₂₂ᵏ = a₁₁ᵏ⁺¹`.
    Vn,
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Mn" => Ok(Self::Mn),
            "Tn" => Ok(Self::Tn),
            "En" => Ok(Self::En),
            "Un" => Ok(Self::Un),
            "Vn" => Ok(Self::Vn),
            other => invalid(format!("unknown system '{other}' (expected Mn, Tn, En, Un or Vn)")),
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Serializable name of a built-in system, `{"name": "Tn", "n": 3}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemDescriptor {
    pub name: SystemKind,
    pub n: usize,
}

impl SystemDescriptor {
    pub fn build(&self) -> Result<MatOpSys> {
        make_system(self.name, self.n)
    }
}

impl FromStr for SystemDescriptor {
    type Err = Error;

    /// Parses `Name:n`, e.g. `Tn:3`.
    fn from_str(s: &str) -> Result<Self> {
        let Some((name, n)) = s.split_once(':') else {
            return invalid(format!("system '{s}' must have the form Name:n"));
        };
        let n = n.trim().parse().map_err(|_| Error::InvalidInput(format!("bad size in system '{s}'")))?;
        Ok(Self { name: name.trim().parse()?, n })
    }
}

impl fmt::Display for SystemDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.name, self.n)
    }
}

/// A unital, involution-closed subspace of `M_d` given by a basis.
#[derive(Debug, Clone)]
pub struct MatOpSys {
    name: String,
    descriptor: Option<SystemDescriptor>,
    ambient_dim: usize,
    basis: Vec<CMat>,
    /// Inverse Gram matrix of the basis in `tr(A* B)`.
    gram_inv: DMatrix<C64>,
}

impl MatOpSys {
    /// Validates linear independence, involution closure and the unit.
    pub fn new(name: impl Into<String>, ambient_dim: usize, basis: Vec<CMat>) -> Result<Self> {
        let name = name.into();
        if ambient_dim == 0 || basis.is_empty() {
            return invalid(format!("system '{name}' must have a positive dimension and a nonempty basis"));
        }
        if let Some(b) = basis.iter().find(|b| b.shape() != (ambient_dim, ambient_dim)) {
            return invalid(format!("system '{name}': basis element of shape {:?}", b.shape()));
        }
        let k = basis.len();
        let gram = DMatrix::from_fn(k, k, |i, j| inner_c(&basis[i], &basis[j]));
        let ev = crate::linalg::eigvalsh(&gram);
        if ev[0] <= 1e-10 * ev[k - 1] {
            return invalid(format!("system '{name}': basis is linearly dependent"));
        }
        let gram_inv = gram.try_inverse().ok_or_else(|| Error::InvalidInput("singular Gram matrix".into()))?;
        let sys = Self { name, descriptor: None, ambient_dim, basis, gram_inv };
        sys.self_test()?;
        Ok(sys)
    }

    /// Involution closure and unit membership.
    pub fn self_test(&self) -> Result<()> {
        for (i, b) in self.basis.iter().enumerate() {
            let m = self.span_membership(&b.adjoint());
            if !m.in_span {
                return invalid(format!("system '{}': adjoint of basis element {i} leaves the span", self.name));
            }
        }
        if !self.span_membership(&CMat::identity(self.ambient_dim, self.ambient_dim)).in_span {
            return invalid(format!("system '{}' does not contain the unit", self.name));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn descriptor(&self) -> Option<SystemDescriptor> {
        self.descriptor
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn basis(&self) -> &[CMat] {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Least-squares coefficients of a `d × d` matrix against the basis.
    pub fn span_membership(&self, x: &CMat) -> SpanMembership {
        let k = self.basis.len();
        let rhs = DVector::from_fn(k, |a, _| inner_c(&self.basis[a], x));
        let c = &self.gram_inv * rhs;
        let mut r = x.clone();
        for (a, b) in self.basis.iter().enumerate() {
            r -= b * c[a];
        }
        let residual = r.norm();
        SpanMembership {
            in_span: residual <= SPAN_TOL * x.norm().max(1.0),
            coeffs: c.iter().copied().collect(),
            residual,
        }
    }

    /// Coefficient blocks of `X ∈ M_d ⊗ M_p` (least squares) and the residual.
    pub fn level_coefficients(&self, x: &CMat, p: usize) -> Result<(Vec<CMat>, f64)> {
        let d = self.ambient_dim;
        if x.shape() != (d * p, d * p) {
            return invalid(format!("expected a {0}x{0} matrix, got {1:?}", d * p, x.shape()));
        }
        // partial pairings ⟨B_b ⊗ ·, X⟩ as p×p blocks
        let pairings: Vec<CMat> = self
            .basis
            .iter()
            .map(|b| {
                let mut acc = CMat::zeros(p, p);
                for i in 0..d {
                    for j in 0..d {
                        let w = b[(i, j)].conj();
                        if w != ZERO {
                            acc += x.view((i * p, j * p), (p, p)) * w;
                        }
                    }
                }
                acc
            })
            .collect();
        let k = self.basis.len();
        let coeffs: Vec<CMat> = (0..k)
            .map(|a| {
                let mut c = CMat::zeros(p, p);
                for (b, pb) in pairings.iter().enumerate() {
                    c += pb * self.gram_inv[(a, b)];
                }
                c
            })
            .collect();
        let residual = (x - assemble(&self.basis, &coeffs)).norm();
        Ok((coeffs, residual))
    }

    /// Coefficients of the unit.
    pub fn unit_coeffs(&self) -> Vec<C64> {
        self.span_membership(&CMat::identity(self.ambient_dim, self.ambient_dim)).coeffs
    }

    /// Orthogonal projection of a random hermitian matrix onto `S ⊗ M_p`.
    pub fn random_hermitian_element<R: Rng + ?Sized>(self: &Arc<Self>, rng: &mut R, p: usize) -> BlockElement {
        let x = random_hermitian(rng, self.ambient_dim * p);
        let (coeffs, _) = self.level_coefficients(&x, p).expect("shape matches");
        let mut el = BlockElement { system: Arc::clone(self), level: p, blocks: coeffs };
        el.hermitize();
        el
    }

    /// The system `S ⊗ T ⊆ M_a ⊗ M_b` spanned by products of basis elements.
    pub fn tensor(&self, other: &MatOpSys) -> Result<MatOpSys> {
        let mut basis = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.basis {
            for b in &other.basis {
                basis.push(kron(a, b));
            }
        }
        MatOpSys::new(format!("{}⊗{}", self.name, other.name), self.ambient_dim * other.ambient_dim, basis)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanMembership {
    pub in_span: bool,
    pub coeffs: Vec<C64>,
    pub residual: f64,
}

pub fn subspace_membership(s: &MatOpSys, x: &CMat) -> Result<SpanMembership> {
    if x.shape() != (s.ambient_dim, s.ambient_dim) {
        return invalid(format!("matrix shape {:?} does not match ambient dimension {}", x.shape(), s.ambient_dim));
    }
    Ok(s.span_membership(x))
}

/// `M_2` block `(k)` of a direct sum of `n − 1` copies, embedded in `M_{2(n−1)}`.
fn summand_unit(n: usize, k: usize, i: usize, j: usize) -> CMat {
    unit(2 * (n - 1), 2 * k + i, 2 * k + j)
}

pub fn make_system(kind: SystemKind, n: usize) -> Result<MatOpSys> {
    if n < 2 {
        return invalid(format!("system size must be at least 2, got {n}"));
    }
    let (dim, basis) = match kind {
        SystemKind::Mn => (n, (0..n * n).map(|k| unit(n, k / n, k % n)).collect()),
        SystemKind::Tn => {
            let mut b = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if i.abs_diff(j) <= 1 {
                        b.push(unit(n, i, j));
                    }
                }
            }
            (n, b)
        }
        SystemKind::En => {
            let mut b = vec![CMat::identity(n, n)];
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        b.push(unit(n, i, j));
                    }
                }
            }
            (n, b)
        }
        SystemKind::Vn => {
            let d = 2 * (n - 1);
            let mut b = Vec::new();
            // linked diagonals D_k = E₂₂^(k−1) + E₁₁^(k)
            for k in 0..n {
                let mut m = CMat::zeros(d, d);
                if k > 0 {
                    m += summand_unit(n, k - 1, 1, 1);
                }
                if k < n - 1 {
                    m += summand_unit(n, k, 0, 0);
                }
                b.push(m);
            }
            for k in 0..n - 1 {
                b.push(summand_unit(n, k, 0, 1));
                b.push(summand_unit(n, k, 1, 0));
            }
            (d, b)
        }
        SystemKind::Un => {
            let d = 2 * (n - 1);
            let mut b = vec![CMat::identity(d, d)];
            for k in 0..n - 1 {
                b.push(summand_unit(n, k, 0, 1));
                b.push(summand_unit(n, k, 1, 0));
            }
            (d, b)
        }
    };
    let mut sys = MatOpSys::new(format!("{kind}({n})"), dim, basis)?;
    sys.descriptor = Some(SystemDescriptor { name: kind, n });
    Ok(sys)
}

/// An element `Σ_a B_a ⊗ C_a` of `S ⊗ M_p`.
#[derive(Debug, Clone)]
pub struct BlockElement {
    pub system: Arc<MatOpSys>,
    pub level: usize,
    pub blocks: Vec<CMat>,
}

impl BlockElement {
    pub fn new(system: Arc<MatOpSys>, level: usize, blocks: Vec<CMat>) -> Result<Self> {
        if blocks.len() != system.dim() {
            return invalid(format!("expected {} coefficient blocks, got {}", system.dim(), blocks.len()));
        }
        if level == 0 || blocks.iter().any(|b| b.shape() != (level, level)) {
            return invalid(format!("coefficient blocks must be {level}x{level}"));
        }
        Ok(Self { system, level, blocks })
    }

    /// Element with coefficient blocks read off an ambient matrix in `M_d ⊗ M_p`.
    pub fn from_ambient(system: Arc<MatOpSys>, x: &CMat, level: usize) -> Result<Self> {
        let (blocks, residual) = system.level_coefficients(x, level)?;
        if residual > SPAN_TOL * x.norm().max(1.0) {
            return invalid(format!("matrix is not in {} ⊗ M_{level} (residual {residual:.3e})", system.name()));
        }
        Ok(Self { system, level, blocks })
    }

    /// `unit ⊗ C`.
    pub fn unit_tensor(system: Arc<MatOpSys>, c: &CMat) -> Self {
        let blocks = system.unit_coeffs().iter().map(|&u| c * u).collect();
        Self { system, level: c.nrows(), blocks }
    }

    pub fn zero(system: Arc<MatOpSys>, level: usize) -> Self {
        let blocks = vec![CMat::zeros(level, level); system.dim()];
        Self { system, level, blocks }
    }

    pub fn assemble(&self) -> CMat {
        assemble(self.system.basis(), &self.blocks)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        is_hermitian(&self.assemble(), tol)
    }

    /// Replace the element by its hermitian part.
    pub fn hermitize(&mut self) {
        let h = hermitize(&self.assemble());
        let (blocks, _) = self.system.level_coefficients(&h, self.level).expect("shape matches");
        self.blocks = blocks;
    }

    pub fn add(&self, other: &BlockElement) -> BlockElement {
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + b).collect();
        Self { system: Arc::clone(&self.system), level: self.level, blocks }
    }

    pub fn scale(&self, s: f64) -> BlockElement {
        Self { system: Arc::clone(&self.system), level: self.level, blocks: self.blocks.iter().map(|b| b.scale(s)).collect() }
    }

    /// `x + s·(unit ⊗ I_p)`.
    pub fn shift_unit(&self, s: f64) -> BlockElement {
        let u = BlockElement::unit_tensor(Arc::clone(&self.system), &CMat::identity(self.level, self.level));
        self.add(&u.scale(s))
    }

    /// `(1 ⊗ γ) x (1 ⊗ γ*)` for a `q × p` matrix `γ`.
    pub fn conjugate(&self, gamma: &CMat) -> Result<BlockElement> {
        if gamma.ncols() != self.level {
            return invalid("conjugating matrix has the wrong number of columns");
        }
        let blocks = self.blocks.iter().map(|c| gamma * c * gamma.adjoint()).collect();
        Ok(Self { system: Arc::clone(&self.system), level: gamma.nrows(), blocks })
    }

    pub fn to_json(&self) -> ElementJson {
        ElementJson {
            system: self.system.descriptor(),
            level: self.level,
            blocks: self.blocks.iter().map(MatrixJson::from_matrix).collect(),
        }
    }

    pub fn from_json(system: Arc<MatOpSys>, json: &ElementJson) -> Result<Self> {
        let blocks = json.blocks.iter().map(MatrixJson::to_matrix).collect::<Result<Vec<_>>>()?;
        Self::new(system, json.level, blocks)
    }
}

pub(crate) fn assemble(basis: &[CMat], coeffs: &[CMat]) -> CMat {
    let d = basis[0].nrows();
    let p = coeffs[0].nrows();
    let mut out = CMat::zeros(d * p, d * p);
    for (b, c) in basis.iter().zip(coeffs) {
        for i in 0..d {
            for j in 0..d {
                let w = b[(i, j)];
                if w != ZERO {
                    let mut v = out.view_mut((i * p, j * p), (p, p));
                    v += c * w;
                }
            }
        }
    }
    out
}

/// JSON form of a [`BlockElement`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemDescriptor>,
    pub level: usize,
    pub blocks: Vec<MatrixJson>,
}

/// Direct PSD check of the assembled element (no free directions).
pub fn ambient_cone_membership(x: &BlockElement, tol: f64) -> Result<ConeCertificate> {
    let m = x.assemble();
    if !is_hermitian(&m, 1e-10 * (1.0 + m.norm())) {
        return invalid("element is not hermitian");
    }
    if !(tol >= 0.0) {
        return invalid("tolerance must be nonnegative");
    }
    Ok(certify_fixed(&m, tol))
}

/// Smallest eigenvalue of the assembled element.
pub fn element_min_eig(x: &BlockElement) -> f64 {
    min_eig(&x.assemble())
}
