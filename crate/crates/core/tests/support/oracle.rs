//! Reference implementations that share no code with the library.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView2};

/// Cyclic Jacobi rotations on a symmetric matrix. Returns eigenvalues
/// ascending and the matching orthonormal eigenvectors as columns.
pub fn jacobi_eigen(m: ArrayView2<f64>) -> (Vec<f64>, Array2<f64>) {
    let d = m.nrows();
    let mut a = m.to_owned();
    let mut v = Array2::<f64>::eye(d);
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum();
        let scale: f64 = a.iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                if a[[p, q]] == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..d {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[[i, i]].total_cmp(&a[[j, j]]));
    let values = order.iter().map(|&i| a[[i, i]]).collect();
    let mut vectors = Array2::zeros((d, d));
    for (c, &i) in order.iter().enumerate() {
        vectors.column_mut(c).assign(&v.column(i));
    }
    (values, vectors)
}

/// Eigenvalues of `A x = η B x` for symmetric `A` and positive definite `B`,
/// via `B^{-1/2} A B^{-1/2}` with both factors from Jacobi.
pub fn generalized_eigenvalues(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Vec<f64> {
    let (beta, u) = jacobi_eigen(b);
    let inv_sqrt = Array1::from_iter(beta.iter().map(|x| 1.0 / x.sqrt()));
    let half = &u * &inv_sqrt;
    let b_inv_half = half.dot(&u.t());
    let c = b_inv_half.dot(&a).dot(&b_inv_half);
    let c = (&c + &c.t()) * 0.5;
    jacobi_eigen(c.view()).0
}

/// `Σ_ij s_ij ‖φ_i − φ_j‖²` with `φ_i = Vᵀ w_i`, by explicit loops.
pub fn penalty_double_sum(v: ArrayView2<f64>, w: ArrayView2<f64>, s: ArrayView2<f64>) -> f64 {
    let (d, n) = w.dim();
    let l = v.ncols();
    let mut phi = vec![vec![0.0; l]; n];
    for i in 0..n {
        for c in 0..l {
            for r in 0..d {
                phi[i][c] += v[[r, c]] * w[[r, i]];
            }
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let dist: f64 = (0..l).map(|c| (phi[i][c] - phi[j][c]).powi(2)).sum();
            total += s[[i, j]] * dist;
        }
    }
    total
}

/// `(tp, tn, fp, fn)` by visiting every unordered pair.
pub fn pair_counts(pred: &[usize], truth: &[usize]) -> (u64, u64, u64, u64) {
    let mut c = (0, 0, 0, 0);
    for i in 0..pred.len() {
        for j in i + 1..pred.len() {
            match (pred[i] == pred[j], truth[i] == truth[j]) {
                (true, true) => c.0 += 1,
                (false, false) => c.1 += 1,
                (true, false) => c.2 += 1,
                (false, true) => c.3 += 1,
            }
        }
    }
    c
}

pub fn rand_index(pred: &[usize], truth: &[usize]) -> f64 {
    let (tp, tn, fp, fn_) = pair_counts(pred, truth);
    (tp + tn) as f64 / (tp + tn + fp + fn_) as f64
}

fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

/// NMI from a hash-map contingency table, geometric-mean normalisation,
/// 0 when either partition is constant, clamped to [0, 1]. Terms are summed in sorted order.
pub fn nmi(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let mut joint: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *joint.entry((p, t)).or_default() += 1;
        *rows.entry(p).or_default() += 1;
        *cols.entry(t).or_default() += 1;
    }
    let mi = sorted_sum(
        joint
            .iter()
            .map(|(&(p, t), &c)| {
                let c = c as f64;
                c * (n * c / (rows[&p] as f64 * cols[&t] as f64)).ln()
            })
            .collect(),
    );
    let entropy = |m: &HashMap<usize, u64>| {
        sorted_sum(
            m.values()
                .map(|&x| {
                    let x = x as f64;
                    x * (n / x).ln()
                })
                .collect(),
        )
    };
    let (hp, ht) = (entropy(&rows), entropy(&cols));
    if hp == 0.0 || ht == 0.0 {
        return 0.0;
    }
    (mi / (hp * ht).sqrt()).clamp(0.0, 1.0)
}
