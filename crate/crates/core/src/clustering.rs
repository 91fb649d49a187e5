//! Seeded K-means: k-means++ seeding, Lloyd iterations, best-of-restarts.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusteringError {
    #[error("cannot form {k} clusters from {n} samples")]
    DegenerateInput { k: usize, n: usize },
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("invalid k-means configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once the relative inertia decrease falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 2,
            restarts: 10,
            max_iters: 300,
            tol: 1e-6,
            seed: 0,
        }
    }
}

impl KMeansConfig {
    pub fn validate(&self) -> Result<(), ClusteringError> {
        if self.k == 0 || self.restarts == 0 || self.max_iters == 0 {
            return Err(ClusteringError::InvalidConfig(
                "k, restarts and max_iters must be positive",
            ));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(ClusteringError::InvalidConfig("tol must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// `k × L`.
    pub centroids: Array2<f64>,
    pub inertia: f64,
    pub iterations_used: usize,
    pub restart_index: usize,
    /// Number of empty clusters that were reseeded to the farthest point.
    pub reseeded_clusters: usize,
    /// Inertia after every Lloyd step of the winning restart.
    pub inertia_trace: Vec<f64>,
}

/// Output of a single Lloyd iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydStep {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Sum of squared distances of every point to its (updated) centroid.
    pub inertia: f64,
    pub reseeded: usize,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest(point: ArrayView1<f64>, centroids: ArrayView2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.outer_iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Sum of squared distances from each point to the centroid of its label.
pub fn inertia(x: ArrayView2<f64>, labels: &[usize], centroids: ArrayView2<f64>) -> f64 {
    x.outer_iter()
        .zip(labels)
        .map(|(row, &l)| sq_dist(row, centroids.row(l)))
        .sum()
}

/// One assignment + update step. Empty clusters take the point farthest from
/// its assigned centroid (taken from clusters with at least two members).
pub fn lloyd_step(x: ArrayView2<f64>, centroids: ArrayView2<f64>) -> LloydStep {
    let (n, dim) = x.dim();
    let k = centroids.nrows();
    let mut labels = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(n);
    for row in x.outer_iter() {
        let (c, d) = nearest(row, centroids);
        labels.push(c);
        dists.push(d);
    }

    let mut sizes = vec![0usize; k];
    for &l in &labels {
        sizes[l] += 1;
    }
    let mut reseeded = 0;
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let donor = (0..n)
            .filter(|&i| sizes[labels[i]] > 1)
            .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
        let Some(i) = donor else { break };
        sizes[labels[i]] -= 1;
        labels[i] = empty;
        sizes[empty] = 1;
        dists[i] = 0.0;
        reseeded += 1;
    }

    let mut updated = Array2::<f64>::zeros((k, dim));
    for (row, &l) in x.outer_iter().zip(&labels) {
        let mut target = updated.row_mut(l);
        target += &row;
    }
    for (c, mut row) in updated.outer_iter_mut().enumerate() {
        if sizes[c] > 0 {
            row /= sizes[c] as f64;
        } else {
            row.assign(&centroids.row(c));
        }
    }
    let inertia = inertia(x, &labels, updated.view());
    LloydStep {
        labels,
        centroids: updated,
        inertia,
        reseeded,
    }
}

/// k-means++ seeding: first centre uniform, then proportional to squared
/// distance from the nearest chosen centre.
pub fn kmeans_plus_plus<R: Rng>(x: ArrayView2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = x.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut closest: Vec<f64> = x
        .outer_iter()
        .map(|row| sq_dist(row, x.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = closest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in closest.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // Rounding can walk past the last positive weight.
            if closest[pick] == 0.0 {
                pick = (0..n).rev().find(|&i| closest[i] > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // All remaining points coincide with a centre already.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, row) in x.outer_iter().enumerate() {
            let d = sq_dist(row, x.row(next));
            if d < closest[i] {
                closest[i] = d;
            }
        }
    }
    x.select(Axis(0), &chosen)
}

fn run_restart(x: ArrayView2<f64>, cfg: &KMeansConfig, restart: usize) -> KMeansResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ restart as u64);
    let mut centroids = kmeans_plus_plus(x, cfg.k, &mut rng);
    let mut labels = Vec::new();
    let mut trace = Vec::new();
    let mut reseeded_total = 0;
    let mut previous = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let step = lloyd_step(x, centroids.view());
        iterations += 1;
        debug_assert!(
            step.inertia <= previous * (1.0 + 1e-12) + 1e-12,
            "inertia increased: {} -> {}",
            previous,
            step.inertia
        );
        let unchanged = step.labels == labels;
        let current = step.inertia;
        reseeded_total += step.reseeded;
        trace.push(current);
        labels = step.labels;
        centroids = step.centroids;
        let rel_change = if previous.is_finite() && previous > 0.0 {
            (previous - current) / previous
        } else {
            f64::INFINITY
        };
        previous = current;
        if current == 0.0 || unchanged || rel_change < cfg.tol {
            break;
        }
    }
    KMeansResult {
        labels,
        centroids,
        inertia: previous,
        iterations_used: iterations,
        restart_index: restart,
        reseeded_clusters: reseeded_total,
        inertia_trace: trace,
    }
}

/// Best-inertia clustering over `cfg.restarts` k-means++ initialisations.
/// Restart `r` draws from a generator seeded with `cfg.seed ^ r`; ties in
/// inertia go to the lowest restart index.
pub fn kmeans(x: ArrayView2<f64>, cfg: &KMeansConfig) -> Result<KMeansResult, ClusteringError> {
    let n = x.nrows();
    cfg.validate()?;
    if cfg.k > n {
        return Err(ClusteringError::DegenerateInput { k: cfg.k, n });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ClusteringError::NonFinite);
    }
    let mut best: Option<KMeansResult> = None;
    for restart in 0..cfg.restarts {
        let candidate = run_restart(x, cfg, restart);
        if best.as_ref().is_none_or(|b| candidate.inertia < b.inertia) {
            best = Some(candidate);
        }
    }
    let best = best.expect("restarts >= 1");
    if best.reseeded_clusters > 0 {
        log::info!(
            "k-means reseeded {} empty cluster(s) during restart {}",
            best.reseeded_clusters,
            best.restart_index
        );
    }
    Ok(best)
}
