//! PSD completion of partially specified banded (tridiagonal) matrices.
//!
//! A block-tridiagonal partial matrix over a path graph is completable iff every
//! fully specified 2×2 principal block is PSD. The completion fills the band
//! `|i − k| = 2, 3, …` sequentially through the intermediate index `j = k − 1`:
//!
//! `Y_ik = Y_ij · Y_jj⁺ · Y_jk`
//!
//! which is the Gaussian-conditioning (maximum-determinant) fill; singular pivots
//! use the Moore–Penrose pseudoinverse.

use super::json::MatrixJson;
use super::{block, hermitian_defect, max_abs, min_eig, pinv_hermitian, set_block, CMat, HermMat};
use crate::error::{invalid, Error, Result};

/// Relative singular-value cutoff for pseudoinverse pivots.
pub const PIVOT_CUTOFF: f64 = 1e-10;

/// Scalar partial matrix with a band structure; entries outside the mask are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialBandedMat {
    dim: usize,
    bandwidth: usize,
    entries: CMat,
    mask: Vec<Vec<bool>>,
}

impl PartialBandedMat {
    pub fn new(entries: CMat, mask: Vec<Vec<bool>>, bandwidth: usize) -> Result<Self> {
        let dim = entries.nrows();
        if dim == 0 || !entries.is_square() {
            return invalid("partial matrix must be square and nonempty");
        }
        if mask.len() != dim || mask.iter().any(|r| r.len() != dim) {
            return invalid("mask shape does not match the matrix");
        }
        for i in 0..dim {
            if !mask[i][i] {
                return invalid(format!("diagonal entry ({i}, {i}) is not specified"));
            }
            for j in 0..dim {
                if mask[i][j] != mask[j][i] {
                    return invalid(format!("mask is not symmetric at ({i}, {j})"));
                }
                if mask[i][j] && i.abs_diff(j) > bandwidth {
                    return invalid(format!("entry ({i}, {j}) lies outside bandwidth {bandwidth}"));
                }
                if mask[i][j] {
                    let (a, b) = (entries[(i, j)], entries[(j, i)].conj());
                    if !(a.re.is_finite() && a.im.is_finite()) {
                        return invalid(format!("entry ({i}, {j}) is not finite"));
                    }
                    if (a - b).norm() > HermMat::SYMMETRY_SLACK * (1.0 + a.norm()) {
                        return invalid(format!("entries ({i}, {j}) and ({j}, {i}) are not conjugate"));
                    }
                }
            }
        }
        Ok(Self { dim, bandwidth, entries, mask })
    }

    /// Band of a full matrix with every entry `|i − j| ≤ bandwidth` specified.
    pub fn from_band(full: &CMat, bandwidth: usize) -> Result<Self> {
        let n = full.nrows();
        let mask = (0..n).map(|i| (0..n).map(|j| i.abs_diff(j) <= bandwidth).collect()).collect();
        let entries = CMat::from_fn(n, n, |i, j| {
            if i.abs_diff(j) <= bandwidth {
                full[(i, j)]
            } else {
                super::ZERO
            }
        });
        Self::new(entries, mask, bandwidth)
    }

    pub fn from_json(json: &MatrixJson) -> Result<Self> {
        let entries = json.to_matrix()?;
        let n = json.dim;
        let mask = json
            .mask_bools()?
            .unwrap_or_else(|| (0..n).map(|i| (0..n).map(|j| i.abs_diff(j) <= 1).collect()).collect());
        let bandwidth = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| mask[i][j])
            .map(|(i, j)| i.abs_diff(j))
            .max()
            .unwrap_or(0);
        Self::new(entries, mask, bandwidth)
    }

    pub fn to_json(&self) -> MatrixJson {
        let mut j = MatrixJson::from_matrix(&self.entries);
        j.mask = Some(self.mask.iter().map(|r| r.iter().map(|&b| b as u8).collect()).collect());
        j
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn is_specified(&self, i: usize, j: usize) -> bool {
        self.mask[i][j]
    }

    pub fn entry(&self, i: usize, j: usize) -> Option<super::C64> {
        self.mask[i][j].then(|| self.entries[(i, j)])
    }

    /// Scalar block-tridiagonal view; requires bandwidth ≤ 1.
    pub fn to_block_tridiagonal(&self) -> Result<BlockTridiagonal> {
        if self.bandwidth > 1 {
            return invalid("only bandwidth ≤ 1 partial matrices can be completed");
        }
        let n = self.dim;
        let scalar = |z| CMat::from_element(1, 1, z);
        let diag = (0..n).map(|i| scalar(self.entries[(i, i)])).collect();
        let upper = (0..n.saturating_sub(1))
            .map(|i| self.mask[i][i + 1].then(|| scalar(self.entries[(i, i + 1)])))
            .collect();
        BlockTridiagonal::new(diag, upper)
    }

    /// True when `full` agrees bit-for-bit with every specified entry.
    pub fn matches(&self, full: &CMat) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|j| !self.mask[i][j] || full[(i, j)] == self.entries[(i, j)]))
    }

    pub fn complete(&self, tol: f64) -> Result<HermMat> {
        tridiag_psd_complete(&self.to_block_tridiagonal()?, tol)
    }
}

/// Block-tridiagonal partial matrix: diagonal blocks `Y_kk` and the upper
/// band `Y_k,k+1` (the lower band is its adjoint). An absent upper block is
/// unconstrained and filled with zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonal {
    block: usize,
    diag: Vec<CMat>,
    upper: Vec<Option<CMat>>,
}

impl BlockTridiagonal {
    pub fn new(diag: Vec<CMat>, upper: Vec<Option<CMat>>) -> Result<Self> {
        let Some(first) = diag.first() else {
            return invalid("block-tridiagonal matrix needs at least one block");
        };
        let b = first.nrows();
        if b == 0 {
            return invalid("blocks must be nonempty");
        }
        if upper.len() + 1 != diag.len() {
            return invalid("need exactly one upper block per adjacent pair");
        }
        for (k, d) in diag.iter().enumerate() {
            if d.shape() != (b, b) {
                return invalid(format!("diagonal block {k} has the wrong shape"));
            }
            if hermitian_defect(d) > HermMat::SYMMETRY_SLACK * (1.0 + max_abs(d)) {
                return invalid(format!("diagonal block {k} is not hermitian"));
            }
        }
        for (k, u) in upper.iter().enumerate() {
            if let Some(u) = u {
                if u.shape() != (b, b) {
                    return invalid(format!("upper block {k} has the wrong shape"));
                }
            }
        }
        Ok(Self { block: b, diag, upper })
    }

    /// Tridiagonal band of a full `n·b × n·b` matrix.
    pub fn from_full(full: &CMat, block_size: usize) -> Result<Self> {
        if block_size == 0 || full.nrows() % block_size != 0 || !full.is_square() {
            return invalid("matrix size is not a multiple of the block size");
        }
        let n = full.nrows() / block_size;
        let diag = (0..n).map(|k| block(full, block_size, k, k)).collect();
        let upper = (0..n.saturating_sub(1)).map(|k| Some(block(full, block_size, k, k + 1))).collect();
        Self::new(diag, upper)
    }

    pub fn blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn block_size(&self) -> usize {
        self.block
    }

    pub fn diag(&self, k: usize) -> &CMat {
        &self.diag[k]
    }

    pub fn upper(&self, k: usize) -> Option<&CMat> {
        self.upper[k].as_ref()
    }

    /// The specified 2×2 principal block `[[Y_kk, Y_k,k+1], [Y_k,k+1*, Y_k+1,k+1]]`.
    pub fn principal_pair(&self, k: usize) -> CMat {
        let b = self.block;
        let mut m = CMat::zeros(2 * b, 2 * b);
        set_block(&mut m, b, 0, 0, &self.diag[k]);
        set_block(&mut m, b, 1, 1, &self.diag[k + 1]);
        if let Some(u) = &self.upper[k] {
            set_block(&mut m, b, 0, 1, u);
            set_block(&mut m, b, 1, 0, &u.adjoint());
        }
        m
    }

    /// True when `full` reproduces every specified block exactly.
    pub fn matches(&self, full: &CMat) -> bool {
        let b = self.block;
        (0..self.blocks()).all(|k| block(full, b, k, k) == self.diag[k])
            && self.upper.iter().enumerate().all(|(k, u)| {
                u.as_ref().is_none_or(|u| block(full, b, k, k + 1) == *u && block(full, b, k + 1, k) == u.adjoint())
            })
    }
}

/// Complete a block-tridiagonal partial matrix to a PSD matrix.
///
/// Fails with [`Error::InfeasibleBlock`] naming the first specified 2×2
/// principal block whose minimum eigenvalue is below `-tol`.
pub fn tridiag_psd_complete(partial: &BlockTridiagonal, tol: f64) -> Result<HermMat> {
    if !(tol >= 0.0) {
        return invalid("tolerance must be nonnegative");
    }
    let n = partial.blocks();
    let b = partial.block;
    if n == 1 {
        let d = &partial.diag[0];
        let m = min_eig(d);
        if m < -tol {
            return Err(Error::NotPsd { min_eig: m });
        }
        return HermMat::new(d.clone());
    }
    for k in 0..n - 1 {
        let m = min_eig(&partial.principal_pair(k));
        if m < -tol {
            return Err(Error::InfeasibleBlock { index: k, min_eig: m });
        }
    }

    let mut y = CMat::zeros(n * b, n * b);
    for k in 0..n {
        set_block(&mut y, b, k, k, &partial.diag[k]);
    }
    for k in 0..n - 1 {
        let u = partial.upper[k].clone().unwrap_or_else(|| CMat::zeros(b, b));
        set_block(&mut y, b, k + 1, k, &u.adjoint());
        set_block(&mut y, b, k, k + 1, &u);
    }
    let pivots: Vec<CMat> = partial.diag.iter().map(|d| pinv_hermitian(d, PIVOT_CUTOFF)).collect();
    for gap in 2..n {
        for i in 0..n - gap {
            let k = i + gap;
            let j = k - 1;
            let fill = block(&y, b, i, j) * &pivots[j] * block(&y, b, j, k);
            set_block(&mut y, b, k, i, &fill.adjoint());
            set_block(&mut y, b, i, k, &fill);
        }
    }
    // The specified band is written verbatim and the fill is set as exact
    // adjoint pairs, so the result is hermitian without re-symmetrization.
    HermMat::new(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{from_real_rows, min_eig, C64};

    fn scalar_partial(diag: &[f64], upper: &[Option<f64>]) -> BlockTridiagonal {
        let s = |x: f64| CMat::from_element(1, 1, C64::new(x, 0.0));
        BlockTridiagonal::new(diag.iter().map(|&d| s(d)).collect(), upper.iter().map(|u| u.map(s)).collect())
            .unwrap()
    }

    #[test]
    fn diagonal_only_fills_zero() {
        let p = scalar_partial(&[1.0, 2.0, 3.0], &[None, None]);
        let y = tridiag_psd_complete(&p, 1e-9).unwrap();
        let expect = from_real_rows(&[&[1.0, 0.0, 0.0], &[0.0, 2.0, 0.0], &[0.0, 0.0, 3.0]]);
        assert_eq!(y.as_matrix(), &expect);
    }

    #[test]
    fn all_ones_chain() {
        let p = scalar_partial(&[1.0, 1.0, 1.0], &[Some(1.0), Some(1.0)]);
        let y = tridiag_psd_complete(&p, 1e-9).unwrap();
        assert_eq!(y.as_matrix(), &CMat::from_element(3, 3, C64::new(1.0, 0.0)));
        assert!(min_eig(y.as_matrix()).abs() < 1e-12);
    }

    #[test]
    fn sign_flip_chain() {
        let p = scalar_partial(&[1.0, 1.0, 1.0], &[Some(1.0), Some(-1.0)]);
        let y = tridiag_psd_complete(&p, 1e-9).unwrap();
        let expect = from_real_rows(&[&[1.0, 1.0, -1.0], &[1.0, 1.0, -1.0], &[-1.0, -1.0, 1.0]]);
        assert_eq!(y.as_matrix(), &expect);
        assert!(min_eig(y.as_matrix()) > -1e-12);
    }

    #[test]
    fn infeasible_block_is_named() {
        let p = scalar_partial(&[1.0, 1.0, 1.0, 1.0], &[Some(0.5), Some(0.5), Some(2.0)]);
        match tridiag_psd_complete(&p, 1e-9) {
            Err(Error::InfeasibleBlock { index, min_eig }) => {
                assert_eq!(index, 2);
                assert!((min_eig + 1.0).abs() < 1e-12);
            }
            other => panic!("expected InfeasibleBlock, got {other:?}"),
        }
    }

    #[test]
    fn partial_banded_json_roundtrip_and_completion() {
        let full = from_real_rows(&[&[1.0, 1.0, 7.0], &[1.0, 1.0, 1.0], &[7.0, 1.0, 1.0]]);
        let p = PartialBandedMat::from_band(&full, 1).unwrap();
        let back = PartialBandedMat::from_json(&p.to_json()).unwrap();
        assert_eq!(p, back);
        let y = back.complete(1e-9).unwrap();
        assert!(back.matches(y.as_matrix()));
        assert_eq!(y.as_matrix()[(0, 2)], C64::new(1.0, 0.0));
    }

    #[test]
    fn rejects_wide_band_and_unspecified_diagonal() {
        let full = CMat::identity(3, 3);
        assert!(PartialBandedMat::from_band(&full, 2).unwrap().complete(1e-9).is_err());
        let mask = vec![vec![true, false, false], vec![false, false, false], vec![false, false, true]];
        assert!(PartialBandedMat::new(full, mask, 1).is_err());
    }
}
