//! 2D layouts of component embeddings. PCA is the shipped method; other
//! projections plug in through [`LayoutMethod`].

use crate::error::Result;
use crate::linalg::pca_2d;
use crate::matrix::Matrix;

pub trait LayoutMethod: Send + Sync {
    /// Stable identifier recorded in provenance.
    fn name(&self) -> &str;
    /// `[n x d]` embeddings to `[n x 2]` coordinates.
    fn project(&self, embeddings: &Matrix<f64>) -> Result<Matrix<f64>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PcaLayout;

impl LayoutMethod for PcaLayout {
    fn name(&self) -> &str {
        "pca2"
    }

    fn project(&self, embeddings: &Matrix<f64>) -> Result<Matrix<f64>> {
        Ok(pca_2d(embeddings)?.coords)
    }
}
