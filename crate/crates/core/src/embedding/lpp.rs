use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{Affinity, EmbeddingError};

/// The symmetric pencil `(A, B) = (W(Λ−S)Wᵀ, WΛWᵀ)` for a `d × n` embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Pencil {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
}

impl Pencil {
    pub fn build(w: ArrayView2<f64>, affinity: &Affinity) -> Result<Self, EmbeddingError> {
        if w.ncols() != affinity.n() {
            return Err(EmbeddingError::ShapeMismatch(format!(
                "embedding has {} columns, kernel is {}x{}",
                w.ncols(),
                affinity.n(),
                affinity.n()
            )));
        }
        let degrees = affinity.degrees();
        let w_lambda = &w * &degrees.view().insert_axis(Axis(0));
        let b = symmetrize(w_lambda.dot(&w.t()));
        let s_wt = affinity.mul(w.t());
        let a = symmetrize(&b - &w.dot(&s_wt));
        Ok(Self { a, b })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `scale · Tr(B) / d`.
    pub fn relative_ridge(&self, scale: f64) -> f64 {
        scale * self.b.diag().sum() / self.dim() as f64
    }

    /// `1e-8 · Tr(B) / d`.
    pub fn default_ridge(&self) -> f64 {
        self.relative_ridge(1e-8)
    }
}

fn symmetrize(m: Array2<f64>) -> Array2<f64> {
    (&m + &m.t()) * 0.5
}

/// Generalized eigenvectors of `A v = η (B + ridge·I) v`, smallest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LppSolution {
    /// `d × L`, columns `(B + ridge·I)`-orthonormal.
    pub v: Array2<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub ridge: f64,
}

impl LppSolution {
    pub fn dim(&self) -> usize {
        self.v.ncols()
    }

    /// Keep the first `l` eigenpairs.
    pub fn truncate(&self, l: usize) -> Result<Self, EmbeddingError> {
        if l == 0 || l > self.dim() {
            return Err(EmbeddingError::BadL { l, max: self.dim() });
        }
        Ok(Self {
            v: self.v.slice(ndarray::s![.., ..l]).to_owned(),
            eigenvalues: self.eigenvalues[..l].to_vec(),
            ridge: self.ridge,
        })
    }
}

fn to_na(m: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

/// Solve the projection problem for `l` output dimensions.
///
/// `ridge = None` uses [`Pencil::default_ridge`]. Each eigenvector's sign is
/// fixed so that its largest-magnitude entry (first on ties) is positive.
pub fn solve_lpp(
    pencil: &Pencil,
    l: usize,
    ridge: Option<f64>,
) -> Result<LppSolution, EmbeddingError> {
    let d = pencil.dim();
    if l == 0 || l > d {
        return Err(EmbeddingError::BadL { l, max: d });
    }
    if pencil
        .a
        .iter()
        .chain(pencil.b.iter())
        .any(|v| !v.is_finite())
    {
        return Err(EmbeddingError::NonFinite);
    }
    let ridge = ridge.unwrap_or_else(|| pencil.default_ridge());
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(EmbeddingError::RankDeficient(format!(
            "invalid ridge {ridge}"
        )));
    }
    let mut b = to_na(&pencil.b);
    for i in 0..d {
        b[(i, i)] += ridge;
    }
    let scale = b.diagonal().amax().max(f64::MIN_POSITIVE);
    let chol = Cholesky::new(b).ok_or_else(|| {
        EmbeddingError::RankDeficient("B + ridge·I is not positive definite".into())
    })?;
    let lower = chol.l();
    let min_pivot = lower
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v * v));
    if min_pivot <= f64::EPSILON * scale {
        return Err(EmbeddingError::RankDeficient(format!(
            "smallest Cholesky pivot {min_pivot:.3e} against scale {scale:.3e}"
        )));
    }
    // C = L⁻¹ A L⁻ᵀ, whose eigenvectors u give v = L⁻ᵀ u.
    let a = to_na(&pencil.a);
    let l_inv_a = lower
        .solve_lower_triangular(&a)
        .ok_or_else(|| EmbeddingError::RankDeficient("triangular solve failed".into()))?;
    let c = lower
        .solve_lower_triangular(&l_inv_a.transpose())
        .ok_or_else(|| EmbeddingError::RankDeficient("triangular solve failed".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .total_cmp(&eig.eigenvalues[j])
            .then(i.cmp(&j))
    });
    let lt = lower.transpose();
    let mut v = Array2::zeros((d, l));
    let mut eigenvalues = Vec::with_capacity(l);
    for (col, &idx) in order.iter().take(l).enumerate() {
        let u = eig.eigenvectors.column(idx).into_owned();
        let x = lt
            .solve_upper_triangular(&u)
            .ok_or_else(|| EmbeddingError::RankDeficient("triangular solve failed".into()))?;
        let mut vec: Array1<f64> = x.iter().copied().collect();
        fix_sign(&mut vec);
        v.column_mut(col).assign(&vec);
        eigenvalues.push(eig.eigenvalues[idx]);
    }
    Ok(LppSolution {
        v,
        eigenvalues,
        ridge,
    })
}

fn fix_sign(v: &mut Array1<f64>) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

/// `φ = Vᵀ w`.
pub fn project(v: ArrayView2<f64>, w: ArrayView1<f64>) -> Result<Array1<f64>, EmbeddingError> {
    if v.nrows() != w.len() {
        return Err(EmbeddingError::ShapeMismatch(format!(
            "V has {} rows, w has length {}",
            v.nrows(),
            w.len()
        )));
    }
    Ok(v.t().dot(&w))
}

/// Feature maps for every column of `w` (`d × n`), returned as `n × L` rows.
pub fn project_all(v: ArrayView2<f64>, w: ArrayView2<f64>) -> Result<Array2<f64>, EmbeddingError> {
    if v.nrows() != w.nrows() {
        return Err(EmbeddingError::ShapeMismatch(format!(
            "V has {} rows, W has {} rows",
            v.nrows(),
            w.nrows()
        )));
    }
    Ok(w.t().dot(&v))
}

/// `Σ_ij s_ij ‖Vᵀw_i − Vᵀw_j‖²` by the double sum over kept kernel entries.
pub fn locality_penalty(
    v: ArrayView2<f64>,
    w: ArrayView2<f64>,
    affinity: &Affinity,
) -> Result<f64, EmbeddingError> {
    if w.ncols() != affinity.n() {
        return Err(EmbeddingError::ShapeMismatch(format!(
            "W has {} columns, kernel has {} rows",
            w.ncols(),
            affinity.n()
        )));
    }
    let phi = project_all(v, w)?;
    let sq_dist = |i: usize, j: usize| -> f64 {
        phi.row(i)
            .iter()
            .zip(phi.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    let mut total = 0.0;
    match affinity {
        Affinity::Dense(s) => {
            for i in 0..s.nrows() {
                for j in 0..s.ncols() {
                    total += s[[i, j]] * sq_dist(i, j);
                }
            }
        }
        Affinity::Sparse(s) => {
            for i in 0..affinity.n() {
                for (j, val) in s.row(i) {
                    total += val * sq_dist(i, j);
                }
            }
        }
    }
    Ok(total)
}

/// `2·Tr(Vᵀ A V)`, equal to [`locality_penalty`] for the same inputs.
pub fn penalty_from_pencil(v: ArrayView2<f64>, pencil: &Pencil) -> f64 {
    2.0 * (v.t().dot(&pencil.a).dot(&v)).diag().sum()
}
