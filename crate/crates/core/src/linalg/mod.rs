//! Dense complex hermitian linear algebra.
//!
//! Every matrix in the crate is a `DMatrix<Complex64>`. Tensor products follow
//! the Kronecker convention `kron(A, B)[(i, k), (j, l)] = A[i, j] * B[k, l]`, so
//! the left factor indexes the outer blocks.

mod completion;
mod herm;
pub mod json;
pub mod random;

pub use completion::{tridiag_psd_complete, BlockTridiagonal, PartialBandedMat};
pub use herm::HermMat;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Default numerical tolerance used throughout the crate.
pub const DEFAULT_TOL: f64 = 1e-9;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdCheck {
    pub is_psd: bool,
    pub min_eig: f64,
}

/// Eigendecomposition of a hermitian matrix with eigenvalues sorted ascending.
///
/// The input is hermitized before decomposition; the result is a deterministic
/// function of the input entries.
pub fn eigh(m: &CMat) -> (DVector<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), CMat::zeros(0, 0));
    }
    let h = hermitize(m);
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn eigvalsh(m: &CMat) -> DVector<f64> {
    if m.nrows() == 0 {
        return DVector::zeros(0);
    }
    let mut v = SymmetricEigen::new(hermitize(m)).eigenvalues;
    v.as_mut_slice().sort_by(f64::total_cmp);
    v
}

pub fn min_eig(m: &CMat) -> f64 {
    eigvalsh(m).iter().copied().fold(f64::INFINITY, f64::min)
}

/// Smallest eigenvalue together with a unit eigenvector.
pub fn min_eigenpair(m: &CMat) -> (f64, DVector<C64>) {
    let (vals, vecs) = eigh(m);
    (vals[0], vecs.column(0).into_owned())
}

pub fn all_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `(M + M*) / 2`.
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Largest entrywise deviation from hermitian symmetry.
pub fn hermitian_defect(m: &CMat) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    m.is_square() && hermitian_defect(m) <= tol * (1.0 + max_abs(m))
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Real Frobenius inner product `Re tr(A* B)`.
pub fn inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Complex Frobenius inner product `tr(A* B)`.
pub fn inner_c(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Bilinear pairing `Σ A_ij B_ij` (no conjugation).
pub fn pairing(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

/// Spectral norm (largest singular value).
pub fn op_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().iter().copied().fold(0.0, f64::max)
}

/// Matrix unit `E_ij` of size `n`.
pub fn unit(n: usize, i: usize, j: usize) -> CMat {
    let mut m = CMat::zeros(n, n);
    m[(i, j)] = ONE;
    m
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Build a complex matrix from real rows.
pub fn from_real_rows(rows: &[&[f64]]) -> CMat {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    CMat::from_fn(n, m, |i, j| C64::new(rows[i][j], 0.0))
}

pub fn psd_check(h: &HermMat, tol: f64) -> Result<PsdCheck> {
    psd_check_matrix(h.as_matrix(), tol)
}

/// Same as [`psd_check`] for a raw matrix, which is hermitized first.
pub fn psd_check_matrix(m: &CMat, tol: f64) -> Result<PsdCheck> {
    if !(tol >= 0.0) {
        return invalid("tolerance must be nonnegative");
    }
    if !all_finite(m) {
        return invalid("matrix has non-finite entries");
    }
    if !m.is_square() {
        return invalid("matrix is not square");
    }
    let min_eig = min_eig(m);
    Ok(PsdCheck { is_psd: min_eig >= -tol, min_eig })
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Kronecker product of a list of factors, left to right.
pub fn kron_all(factors: &[&CMat]) -> CMat {
    let mut acc = CMat::from_element(1, 1, ONE);
    for f in factors {
        acc = kron(&acc, f);
    }
    acc
}

/// Contract the first tensor slot: `(tr ⊗ id)(H)` for `H ∈ M_a ⊗ M_b`.
pub fn partial_trace_left(h: &CMat, dims: (usize, usize)) -> Result<CMat> {
    let (a, b) = dims;
    if !h.is_square() || h.nrows() != a * b {
        return invalid(format!(
            "partial trace: matrix of size {}x{} does not match dims ({a}, {b})",
            h.nrows(),
            h.ncols()
        ));
    }
    let mut out = CMat::zeros(b, b);
    for k in 0..a {
        out += h.view((k * b, k * b), (b, b));
    }
    Ok(out)
}

/// Contract the second tensor slot: `(id ⊗ tr)(H)` for `H ∈ M_a ⊗ M_b`.
pub fn partial_trace_right(h: &CMat, dims: (usize, usize)) -> Result<CMat> {
    let (a, b) = dims;
    if !h.is_square() || h.nrows() != a * b {
        return invalid(format!(
            "partial trace: matrix of size {}x{} does not match dims ({a}, {b})",
            h.nrows(),
            h.ncols()
        ));
    }
    Ok(CMat::from_fn(a, a, |i, j| {
        (0..b).map(|k| h[(i * b + k, j * b + k)]).sum()
    }))
}

/// Factor a PSD matrix as `H = X X*` with `X` square (eigen-based square root).
///
/// Eigenvalues in `[-tol, 0)` are clipped to zero.
pub fn psd_factor(h: &HermMat, tol: f64) -> Result<CMat> {
    let check = psd_check(h, tol)?;
    if !check.is_psd {
        return Err(Error::NotPsd { min_eig: check.min_eig });
    }
    let (vals, vecs) = eigh(h.as_matrix());
    let mut x = vecs;
    for (j, &v) in vals.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        x.column_mut(j).scale_mut(s);
    }
    Ok(x)
}

/// Projection onto the PSD cone by eigenvalue clipping.
pub fn psd_part(m: &CMat) -> CMat {
    clip_spectrum(m, |v| v.max(0.0))
}

/// Apply a scalar function to the spectrum of a hermitian matrix.
pub fn clip_spectrum(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(m);
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        scaled.column_mut(j).scale_mut(f(v));
    }
    scaled * vecs.adjoint()
}

/// Moore–Penrose pseudoinverse of a hermitian matrix; eigenvalues with
/// magnitude at most `rel_cutoff * ‖H‖` are treated as zero.
pub fn pinv_hermitian(m: &CMat, rel_cutoff: f64) -> CMat {
    let (vals, vecs) = eigh(m);
    let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let cut = rel_cutoff * scale;
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let s = if v.abs() > cut && v.abs() > 0.0 { 1.0 / v } else { 0.0 };
        scaled.column_mut(j).scale_mut(s);
    }
    scaled * vecs.adjoint()
}

/// Orthonormal basis of the real space of `n × n` hermitian matrices
/// (`E_ii`, `(E_ij + E_ji)/√2`, `i(E_ij − E_ji)/√2`).
pub fn hermitian_basis(n: usize) -> Vec<CMat> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.push(unit(n, i, i));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = CMat::zeros(n, n);
            s[(i, j)] = C64::new(r, 0.0);
            s[(j, i)] = C64::new(r, 0.0);
            out.push(s);
            let mut a = CMat::zeros(n, n);
            a[(i, j)] = C64::new(0.0, r);
            a[(j, i)] = C64::new(0.0, -r);
            out.push(a);
        }
    }
    out
}

/// Real coordinates of a hermitian matrix against [`hermitian_basis`].
pub fn herm_to_vec(m: &CMat) -> DVector<f64> {
    let n = m.nrows();
    let s = std::f64::consts::SQRT_2;
    let mut v = Vec::with_capacity(n * n);
    for i in 0..n {
        v.push(m[(i, i)].re);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let z = m[(i, j)];
            v.push(s * z.re);
            v.push(s * z.im);
        }
    }
    DVector::from_vec(v)
}

/// Inverse of [`herm_to_vec`].
pub fn vec_to_herm(v: &[f64], n: usize) -> CMat {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = C64::new(v[i], 0.0);
    }
    let mut k = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let z = C64::new(r * v[k], r * v[k + 1]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

/// Hermitian parts `(M + M*)/2` and `(M − M*)/(2i)` of each matrix; a *-closed
/// complex span has the same real dimension on its hermitian part.
pub fn hermitian_parts(mats: &[CMat]) -> Vec<CMat> {
    let mut out = Vec::with_capacity(2 * mats.len());
    for m in mats {
        out.push(hermitize(m));
        out.push((m - m.adjoint()) * C64::new(0.0, -0.5));
    }
    out
}

/// Gram–Schmidt in the real Frobenius inner product; vectors whose residual
/// norm drops below `drop_tol` (relative to their original norm) are discarded.
pub fn orthonormalize(mats: &[CMat], drop_tol: f64) -> Vec<CMat> {
    let mut out: Vec<CMat> = Vec::new();
    for m in mats {
        let norm0 = m.norm();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = m.clone();
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for q in &out {
                let c = inner(q, &v);
                v -= q.scale(c);
            }
        }
        let nv = v.norm();
        if nv > drop_tol * norm0 {
            out.push(v.unscale(nv));
        }
    }
    out
}

/// Orthonormal complex basis (in `tr(A* B)`) of the complex span of `mats`.
pub fn orthonormalize_complex(mats: &[CMat], drop_tol: f64) -> Vec<CMat> {
    let mut out: Vec<CMat> = Vec::new();
    for m in mats {
        let norm0 = m.norm();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = m.clone();
        for _ in 0..2 {
            for q in &out {
                let c = inner_c(q, &v);
                v -= q * c;
            }
        }
        let nv = v.norm();
        if nv > drop_tol * norm0 {
            out.push(v.unscale(nv));
        }
    }
    out
}

/// Embed `blocks` (all square) block-diagonally.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(b);
        off += k;
    }
    out
}

/// The `(i, j)` block of size `b` of a block matrix.
pub fn block(m: &CMat, b: usize, i: usize, j: usize) -> CMat {
    m.view((i * b, j * b), (b, b)).into_owned()
}

pub fn set_block(m: &mut CMat, b: usize, i: usize, j: usize, value: &CMat) {
    m.view_mut((i * b, j * b), (b, b)).copy_from(value);
}

/// Permute `M_a ⊗ M_b` into `M_b ⊗ M_a`.
pub fn swap_factors(m: &CMat, a: usize, b: usize) -> CMat {
    let n = a * b;
    CMat::from_fn(n, n, |r, c| {
        let (i, k) = (r / a, r % a);
        let (j, l) = (c / a, c % a);
        m[(k * b + i, l * b + j)]
    })
}
