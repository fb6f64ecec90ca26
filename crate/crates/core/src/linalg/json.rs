//! Matrix JSON format: `{"dim": n, "re": [[...]], "im": [[...]]}`, with an
//! optional `"mask": [[0|1]]` marking specified entries of a partial matrix.

use serde::{Deserialize, Serialize};

use super::{CMat, C64};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<Vec<u8>>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMat) -> Self {
        let (r, c) = m.shape();
        Self {
            dim: r,
            re: (0..r).map(|i| (0..c).map(|j| m[(i, j)].re).collect()).collect(),
            im: (0..r).map(|i| (0..c).map(|j| m[(i, j)].im).collect()).collect(),
            mask: None,
        }
    }

    /// Square `dim × dim` matrix; a missing `im` is read as zero.
    pub fn to_matrix(&self) -> Result<CMat> {
        let n = self.dim;
        check_rows("re", &self.re, n)?;
        let has_im = !self.im.is_empty();
        if has_im {
            check_rows("im", &self.im, n)?;
        }
        Ok(CMat::from_fn(n, n, |i, j| {
            let im = if has_im { self.im[i][j] } else { 0.0 };
            C64::new(self.re[i][j], im)
        }))
    }

    /// Rectangular matrix with `dim` rows and the column count of `re`.
    pub fn to_rect_matrix(&self) -> Result<CMat> {
        let r = self.dim;
        let c = self.re.first().map_or(0, |row| row.len());
        let bad = |rows: &[Vec<f64>]| rows.len() != r || rows.iter().any(|row| row.len() != c);
        if bad(&self.re) || (!self.im.is_empty() && bad(&self.im)) {
            return invalid(format!("fields 're'/'im' must be {r}x{c} arrays"));
        }
        let has_im = !self.im.is_empty();
        Ok(CMat::from_fn(r, c, |i, j| C64::new(self.re[i][j], if has_im { self.im[i][j] } else { 0.0 })))
    }

    pub fn mask_bools(&self) -> Result<Option<Vec<Vec<bool>>>> {
        match &self.mask {
            None => Ok(None),
            Some(mask) => {
                if mask.len() != self.dim || mask.iter().any(|r| r.len() != self.dim) {
                    return invalid("mask shape does not match dim");
                }
                if mask.iter().flatten().any(|&v| v > 1) {
                    return invalid("mask entries must be 0 or 1");
                }
                Ok(Some(mask.iter().map(|r| r.iter().map(|&v| v == 1).collect()).collect()))
            }
        }
    }
}

fn check_rows(field: &str, rows: &[Vec<f64>], n: usize) -> Result<()> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return invalid(format!("field '{field}' is not a {n}x{n} array"));
    }
    Ok(())
}
