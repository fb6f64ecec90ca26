use serde::{Deserialize, Serialize};

use super::{all_finite, hermitian_defect, hermitize, max_abs, CMat};
use crate::error::{invalid, Result};
use crate::linalg::json::MatrixJson;

/// Dense complex hermitian matrix.
///
/// Construction hermitizes the input after checking it is hermitian up to
/// rounding, so the stored entries satisfy `H[i][j] == conj(H[j][i])` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct HermMat(CMat);

impl HermMat {
    /// Relative rounding slack accepted before a matrix is rejected as non-hermitian.
    pub const SYMMETRY_SLACK: f64 = 1e-10;

    pub fn new(m: CMat) -> Result<Self> {
        if !m.is_square() {
            return invalid(format!("matrix is {}x{}, not square", m.nrows(), m.ncols()));
        }
        if m.nrows() == 0 {
            return invalid("matrix has dimension 0");
        }
        if !all_finite(&m) {
            return invalid("matrix has non-finite entries");
        }
        let defect = hermitian_defect(&m);
        if defect > Self::SYMMETRY_SLACK * (1.0 + max_abs(&m)) {
            return invalid(format!("matrix is not hermitian (defect {defect:.3e})"));
        }
        Ok(Self(hermitize(&m)))
    }

    /// Hermitian part `(M + M*)/2` of an arbitrary square matrix.
    pub fn hermitian_part(m: &CMat) -> Self {
        Self(hermitize(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMat::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_inner(self) -> CMat {
        self.0
    }
}

impl AsRef<CMat> for HermMat {
    fn as_ref(&self) -> &CMat {
        &self.0
    }
}

impl TryFrom<MatrixJson> for HermMat {
    type Error = crate::error::Error;

    fn try_from(value: MatrixJson) -> Result<Self> {
        HermMat::new(value.to_matrix()?)
    }
}

impl From<HermMat> for MatrixJson {
    fn from(value: HermMat) -> Self {
        MatrixJson::from_matrix(&value.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{from_real_rows, C64};

    #[test]
    fn rejects_non_hermitian() {
        let m = from_real_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(HermMat::new(m).is_err());
    }

    #[test]
    fn symmetrizes_rounding() {
        let mut m = from_real_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
        m[(0, 1)] += C64::new(1e-14, 0.0);
        let h = HermMat::new(m).unwrap();
        assert_eq!(h.as_matrix()[(0, 1)], h.as_matrix()[(1, 0)].conj());
    }
}
