//! Concatenated latent codes, polynomial affinities on the encoded rows, and
//! the locality preserving projection that maps codes to final features.

mod kernel;
mod lpp;

pub use kernel::{
    build_affinity, degree_matrix, knn_polynomial_kernel, polynomial_kernel, Affinity, KernelSpec,
    SparseAffinity,
};
pub use lpp::{
    locality_penalty, penalty_from_pencil, project, project_all, solve_lpp, LppSolution, Pencil,
};

use ndarray::{concatenate, Array2, ArrayView2, Axis};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("kernel matrix is not symmetric at ({row}, {col})")]
    AsymmetricInput { row: usize, col: usize },
    #[error("requested {l} output dimensions, embedding has {max}")]
    BadL { l: usize, max: usize },
    #[error("pencil is singular: {0}")]
    RankDeficient(String),
    #[error("non-finite input")]
    NonFinite,
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
}

/// `d × n` matrix whose column `i` is `[y_cat_i; y_num_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentEmbedding {
    pub w: Array2<f64>,
    pub cat_dim: usize,
    pub num_dim: usize,
}

impl LatentEmbedding {
    pub fn n(&self) -> usize {
        self.w.ncols()
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }
}

/// Stack the latent codes of the two networks, categorical block first.
/// Both inputs hold one sample per row.
pub fn concat_latents(
    y_num: ArrayView2<'_, f64>,
    y_cat: ArrayView2<'_, f64>,
) -> Result<LatentEmbedding, EmbeddingError> {
    if y_num.nrows() != y_cat.nrows() || y_num.nrows() == 0 {
        return Err(EmbeddingError::ShapeMismatch(format!(
            "latent row counts {} and {}",
            y_num.nrows(),
            y_cat.nrows()
        )));
    }
    if y_num.iter().chain(y_cat.iter()).any(|v| !v.is_finite()) {
        return Err(EmbeddingError::NonFinite);
    }
    let rows = concatenate(Axis(1), &[y_cat.view(), y_num.view()]).expect("row counts checked");
    Ok(LatentEmbedding {
        w: rows.reversed_axes().as_standard_layout().to_owned(),
        cat_dim: y_cat.ncols(),
        num_dim: y_num.ncols(),
    })
}
