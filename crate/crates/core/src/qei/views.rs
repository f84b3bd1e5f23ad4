use nalgebra::{DMatrix, DVector};

use super::MomentPair;
use crate::error::Result;
use crate::mvn::{self, CdfAccuracy, CdfCallCounter, SpdMatrix};

/// Moments of `Z^(k)`, with `Z_j = Y_j - Y_k` for `j != k` and `Z_k = T - Y_k`.
#[derive(Debug, Clone)]
pub struct AffineView {
    pub k: usize,
    pub mean: DVector<f64>,
    pub cov: SpdMatrix,
}

impl AffineView {
    pub fn new(pair: &MomentPair, k: usize) -> Result<Self> {
        let q = pair.q();
        let m = &pair.mean;
        let s = pair.cov.matrix();
        let mean = DVector::from_fn(q, |j, _| if j == k { pair.threshold - m[k] } else { m[j] - m[k] });
        let skk = s[(k, k)];
        let cov = DMatrix::from_fn(q, q, |j, l| match (j == k, l == k) {
            (true, true) => skk,
            (true, false) => skk - s[(l, k)],
            (false, true) => skk - s[(j, k)],
            (false, false) => s[(j, l)] - s[(j, k)] - s[(k, l)] + skk,
        });
        let cov = SpdMatrix::new(cov)?;
        Ok(Self { k, mean, cov })
    }

    /// The linear part `L^(k)` of the map `Y -> Z^(k)`.
    pub fn map(&self) -> DMatrix<f64> {
        map_matrix(self.mean.len(), self.k)
    }
}

fn map_matrix(q: usize, k: usize) -> DMatrix<f64> {
    let mut l = DMatrix::identity(q, q);
    for j in 0..q {
        l[(j, k)] = -1.0;
    }
    l
}

/// Pair `(m^(k)_|i, Σ^(k)_|i)` of the orthant left after fixing coordinate `i`.
#[derive(Debug, Clone)]
pub struct ConditionalView {
    pub k: usize,
    pub i: usize,
    pub mean: DVector<f64>,
    pub cov: SpdMatrix,
}

impl ConditionalView {
    pub fn new(view: &AffineView, i: usize) -> Result<Self> {
        let neg: Vec<f64> = view.mean.iter().map(|v| -v).collect();
        let (a, cov) = mvn::reduce_raw(&neg, view.cov.matrix(), i)?;
        let cov = SpdMatrix::new(cov)?;
        Ok(Self {
            k: view.k,
            i,
            mean: DVector::from_iterator(a.len(), a.iter().map(|v| -v)),
            cov,
        })
    }

    /// Indices of the original coordinates kept by the reduction.
    pub fn others(&self) -> Vec<usize> {
        (0..=self.mean.len()).filter(|&j| j != self.i).collect()
    }

    /// `Φ_{q-1}(-m_|i; Σ_|i)`; one call at dimension `q - 1`.
    pub fn orthant(&self, acc: &CdfAccuracy, counter: &mut CdfCallCounter) -> Result<f64> {
        let a: Vec<f64> = self.mean.iter().map(|v| -v).collect();
        counter.record(a.len());
        mvn::cdf_uncounted(&a, self.cov.matrix(), acc)
    }
}
