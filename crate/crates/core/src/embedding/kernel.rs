use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::EmbeddingError;

/// `s(x, y) = (x·y + offset)^degree`, optionally on unit-normalised rows and
/// optionally sparsified to the `neighbors` largest entries per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelSpec {
    pub degree: u32,
    pub offset: f64,
    pub row_normalize: bool,
    /// `Some(k)`: keep the `k` largest entries of each row, then symmetrise
    /// with `max(s_ij, s_ji)`.
    pub neighbors: Option<usize>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            degree: 2,
            offset: 1.0,
            row_normalize: false,
            neighbors: None,
        }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.degree == 0 {
            return Err(EmbeddingError::InvalidKernel("degree must be >= 1".into()));
        }
        if !(self.offset >= 0.0 && self.offset.is_finite()) {
            return Err(EmbeddingError::InvalidKernel(
                "offset must be finite and >= 0".into(),
            ));
        }
        if self.neighbors == Some(0) {
            return Err(EmbeddingError::InvalidKernel(
                "neighbors must be >= 1".into(),
            ));
        }
        Ok(())
    }

    fn eval(&self, dot: f64) -> f64 {
        (dot + self.offset).powi(self.degree as i32)
    }
}

/// Symmetric sparse affinity in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAffinity {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseAffinity {
    /// From per-row `(col, value)` lists that are already symmetric.
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out[[i, j]] = v;
            }
        }
        out
    }
}

/// Kernel matrix `S`, dense or sparse.
#[derive(Debug, Clone, PartialEq)]
pub enum Affinity {
    Dense(Array2<f64>),
    Sparse(SparseAffinity),
}

impl Affinity {
    pub fn n(&self) -> usize {
        match self {
            Affinity::Dense(s) => s.nrows(),
            Affinity::Sparse(s) => s.n,
        }
    }

    /// Row sums `λ_ii = Σ_j s_ij`.
    pub fn degrees(&self) -> Array1<f64> {
        match self {
            Affinity::Dense(s) => s.sum_axis(Axis(1)),
            Affinity::Sparse(s) => (0..s.n).map(|i| s.row(i).map(|(_, v)| v).sum()).collect(),
        }
    }

    /// `S · m` for an `n × c` matrix `m`.
    pub fn mul(&self, m: ArrayView2<f64>) -> Array2<f64> {
        match self {
            Affinity::Dense(s) => s.dot(&m),
            Affinity::Sparse(s) => {
                let mut out = Array2::zeros((s.n, m.ncols()));
                for i in 0..s.n {
                    let mut acc = out.row_mut(i);
                    for (j, v) in s.row(i) {
                        acc.scaled_add(v, &m.row(j));
                    }
                }
                out
            }
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            Affinity::Dense(s) => s.clone(),
            Affinity::Sparse(s) => s.to_dense(),
        }
    }
}

fn prepared_rows(x: ArrayView2<f64>, spec: &KernelSpec) -> Result<Array2<f64>, EmbeddingError> {
    spec.validate()?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(EmbeddingError::NonFinite);
    }
    let mut rows = x.to_owned();
    if spec.row_normalize {
        for mut r in rows.rows_mut() {
            let norm = r.dot(&r).sqrt();
            if norm > 0.0 {
                r /= norm;
            }
        }
    }
    Ok(rows)
}

/// Dense `n × n` kernel on the rows of `x`. Negative entries (possible for
/// odd degrees) are clamped to zero; the number clamped is returned.
pub fn polynomial_kernel(
    x: ArrayView2<f64>,
    spec: &KernelSpec,
) -> Result<(Array2<f64>, usize), EmbeddingError> {
    let rows = prepared_rows(x, spec)?;
    let gram = rows.dot(&rows.t());
    let n = gram.nrows();
    let mut clamped = 0;
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            // Upper triangle only, mirrored, so S is exactly symmetric.
            let mut v = spec.eval(gram[[i, j]]);
            if v < 0.0 {
                v = 0.0;
                clamped += if i == j { 1 } else { 2 };
            }
            s[[i, j]] = v;
            s[[j, i]] = v;
        }
    }
    warn_clamped(clamped);
    Ok((s, clamped))
}

/// Sparse k-nearest-neighbour kernel: each row keeps its `k` largest kernel
/// values (ties to the lower column index), then `s_ij = max(s_ij, s_ji)`
/// over the union of kept entries. Never materialises the dense matrix.
pub fn knn_polynomial_kernel(
    x: ArrayView2<f64>,
    spec: &KernelSpec,
    k: usize,
) -> Result<(SparseAffinity, usize), EmbeddingError> {
    let rows = prepared_rows(x, spec)?;
    let n = rows.nrows();
    let k = k.clamp(1, n);
    const BLOCK: usize = 128;
    let mut kept: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut clamped = 0;
    let mut scratch: Vec<(usize, f64)> = Vec::with_capacity(n);
    for start in (0..n).step_by(BLOCK) {
        let end = (start + BLOCK).min(n);
        let block = rows.slice(s![start..end, ..]).dot(&rows.t());
        for r in block.rows() {
            scratch.clear();
            for (j, &dot) in r.iter().enumerate() {
                let mut v = spec.eval(dot);
                if v < 0.0 {
                    v = 0.0;
                    clamped += 1;
                }
                scratch.push((j, v));
            }
            let by_value_desc =
                |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
            if k < n {
                scratch.select_nth_unstable_by(k - 1, by_value_desc);
            }
            kept.push(scratch[..k].to_vec());
        }
    }
    // Symmetrise: union of both directions, taking the max value.
    let mut sym: Vec<Vec<(usize, f64)>> = kept.clone();
    for (i, row) in kept.iter().enumerate() {
        for &(j, v) in row {
            if i != j {
                sym[j].push((i, v));
            }
        }
    }
    for row in &mut sym {
        row.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
        row.dedup_by_key(|e| e.0);
    }
    warn_clamped(clamped);
    Ok((SparseAffinity::from_rows(sym), clamped))
}

/// Build the affinity requested by `spec`.
pub fn build_affinity(x: ArrayView2<f64>, spec: &KernelSpec) -> Result<Affinity, EmbeddingError> {
    Ok(match spec.neighbors {
        None => Affinity::Dense(polynomial_kernel(x, spec)?.0),
        Some(k) => Affinity::Sparse(knn_polynomial_kernel(x, spec, k)?.0),
    })
}

fn warn_clamped(count: usize) {
    if count > 0 {
        log::warn!("clamped {count} negative kernel entries to 0");
    }
}

/// Diagonal of the degree matrix `Λ`. Fails if `S` is not symmetric.
pub fn degree_matrix(s: ArrayView2<f64>) -> Result<Array1<f64>, EmbeddingError> {
    let (r, c) = s.dim();
    if r != c {
        return Err(EmbeddingError::ShapeMismatch(format!("S is {r}x{c}")));
    }
    for i in 0..r {
        for j in (i + 1)..r {
            let (a, b) = (s[[i, j]], s[[j, i]]);
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return Err(EmbeddingError::AsymmetricInput { row: i, col: j });
            }
        }
    }
    Ok(s.sum_axis(Axis(1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn hand_evaluated_entries() {
        let spec = KernelSpec::default();
        let (s, _) = polynomial_kernel(array![[0.0, 0.0], [0.0, 0.0]].view(), &spec).unwrap();
        assert_eq!(s[[0, 1]], 1.0);
        let (s, _) = polynomial_kernel(array![[1.0, 0.0], [0.0, 1.0]].view(), &spec).unwrap();
        assert_eq!(s[[0, 1]], 1.0);
        assert_eq!(s[[0, 0]], 4.0);
        let cubic = KernelSpec {
            degree: 3,
            offset: 0.0,
            ..Default::default()
        };
        let (s, _) = polynomial_kernel(array![[1.0, 1.0], [1.0, 1.0]].view(), &cubic).unwrap();
        assert_eq!(s[[0, 1]], 8.0);
    }

    #[test]
    fn odd_degree_negatives_are_clamped() {
        let cubic = KernelSpec {
            degree: 3,
            offset: 0.0,
            ..Default::default()
        };
        let (s, clamped) = polynomial_kernel(array![[1.0], [-1.0]].view(), &cubic).unwrap();
        assert_eq!(clamped, 2);
        assert_eq!(s[[0, 1]], 0.0);
        assert_eq!(s[[1, 0]], 0.0);
    }

    #[test]
    fn degree_examples() {
        assert_eq!(
            degree_matrix(array![[1.0, 2.0], [2.0, 3.0]].view()).unwrap(),
            array![3.0, 5.0]
        );
        assert_eq!(
            degree_matrix(Array2::eye(3).view()).unwrap(),
            Array1::<f64>::ones(3)
        );
        assert_eq!(
            degree_matrix(Array2::ones((3, 3)).view()).unwrap(),
            array![3.0, 3.0, 3.0]
        );
        assert!(matches!(
            degree_matrix(array![[1.0, 2.0], [0.0, 1.0]].view()),
            Err(EmbeddingError::AsymmetricInput { .. })
        ));
    }

    #[test]
    fn knn_with_all_neighbours_equals_dense() {
        let x = Array2::from_shape_fn((9, 3), |(i, j)| ((i * 5 + j * 3) % 7) as f64 / 3.0 - 1.0);
        let spec = KernelSpec::default();
        let (dense, _) = polynomial_kernel(x.view(), &spec).unwrap();
        let (sparse, _) = knn_polynomial_kernel(x.view(), &spec, 9).unwrap();
        assert_eq!(sparse.to_dense(), dense);
    }

    #[test]
    fn knn_is_symmetric_and_sparse() {
        let x = Array2::from_shape_fn((30, 4), |(i, j)| ((i * 7 + j * 11) % 13) as f64 / 6.0 - 1.0);
        let (sparse, _) = knn_polynomial_kernel(x.view(), &KernelSpec::default(), 3).unwrap();
        let d = sparse.to_dense();
        assert_eq!(d, d.t());
        assert!(sparse.nnz() <= 30 * 6);
        for i in 0..30 {
            assert!(sparse.row(i).count() >= 3);
        }
        let aff = Affinity::Sparse(sparse);
        let m = Array2::from_shape_fn((30, 2), |(i, j)| (i + j) as f64);
        let diff = &aff.mul(m.view()) - &d.dot(&m);
        assert!(diff.iter().all(|v| v.abs() < 1e-9));
        let deg_diff = &aff.degrees() - &d.sum_axis(Axis(1));
        assert!(deg_diff.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn row_normalisation_bounds_dot_products() {
        let spec = KernelSpec {
            row_normalize: true,
            ..Default::default()
        };
        let (s, _) = polynomial_kernel(array![[3.0, 4.0], [10.0, 0.0]].view(), &spec).unwrap();
        assert!((s[[0, 0]] - 4.0).abs() < 1e-12);
        assert!((s[[0, 1]] - 1.6 * 1.6).abs() < 1e-12);
    }
}
