//! Latent class clusters from the learned graph.
//!
//! The coefficient matrix is symmetrized and taken entrywise-absolute to
//! form a nonnegative affinity (coefficients may be negative because the
//! reconstruction is unconstrained), then classes are grouped by k-means on
//! the bottom eigenvectors of the graph Laplacian.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SrgError};
use crate::linalg;
use crate::parallel::map_indexed;

/// Which Laplacian the spectral embedding uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianKind {
    /// `L = Deg - W`
    #[default]
    Unnormalized,
    /// `L = I - Deg^{-1/2} W Deg^{-1/2}` (isolated nodes keep a unit row)
    SymmetricNormalized,
}

/// Cluster assignment of every class plus the eigenvalue trace that hints
/// at the natural cluster count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterResult {
    /// class id -> cluster index in `[0, n_clusters)`
    pub assignments: BTreeMap<usize, usize>,
    pub n_clusters: usize,
    /// The smallest `n_clusters + 1` Laplacian eigenvalues, ascending.
    pub eigengap_trace: Vec<f64>,
}

/// Symmetrize a zero-diagonal coefficient matrix into a nonnegative
/// affinity: `|A + A'|` entrywise, computed once per unordered pair so the
/// output is symmetric at the bit level.
pub fn balance_graph(coefficients: &Array2<f64>) -> Result<Array2<f64>> {
    let k = coefficients.nrows();
    if coefficients.ncols() != k {
        return Err(SrgError::NonSquare {
            rows: k,
            cols: coefficients.ncols(),
        });
    }
    debug_assert!((0..k).all(|i| coefficients[[i, i]] == 0.0));
    let mut balanced = Array2::zeros((k, k));
    for i in 0..k {
        for j in i + 1..k {
            let weight = (coefficients[[i, j]] + coefficients[[j, i]]).abs();
            balanced[[i, j]] = weight;
            balanced[[j, i]] = weight;
        }
    }
    Ok(balanced)
}

/// Graph Laplacian of a symmetric nonnegative affinity.
pub fn laplacian(affinity: &Array2<f64>, kind: LaplacianKind) -> Result<Array2<f64>> {
    let k = affinity.nrows();
    if affinity.ncols() != k {
        return Err(SrgError::NonSquare {
            rows: k,
            cols: affinity.ncols(),
        });
    }
    let degrees: Vec<f64> = (0..k).map(|i| affinity.row(i).sum()).collect();
    let mut lap = Array2::zeros((k, k));
    match kind {
        LaplacianKind::Unnormalized => {
            for i in 0..k {
                for j in 0..k {
                    lap[[i, j]] = if i == j {
                        degrees[i] - affinity[[i, j]]
                    } else {
                        -affinity[[i, j]]
                    };
                }
            }
        }
        LaplacianKind::SymmetricNormalized => {
            let inv_sqrt: Vec<f64> = degrees
                .iter()
                .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
                .collect();
            for i in 0..k {
                for j in 0..k {
                    let eye = if i == j { 1.0 } else { 0.0 };
                    lap[[i, j]] = eye - inv_sqrt[i] * affinity[[i, j]] * inv_sqrt[j];
                }
            }
        }
    }
    Ok(lap)
}

/// k-means++ seeding: first centroid uniform, the rest sampled with
/// probability proportional to squared distance from the chosen set.
pub fn kmeans_pp_init(points: &Array2<f64>, n_clusters: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let dim = points.ncols();
    let mut centroids = Array2::zeros((n_clusters, dim));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));

    let mut dist_sq = Array1::<f64>::zeros(n);
    for i in 0..n {
        let diff = &points.row(i) - &centroids.row(0);
        dist_sq[i] = diff.dot(&diff);
    }
    for c in 1..n_clusters {
        let total: f64 = dist_sq.sum();
        let chosen = if total > 0.0 {
            let mut draw = rng.random_range(0.0..total);
            let mut picked = n - 1;
            for i in 0..n {
                draw -= dist_sq[i];
                if draw <= 0.0 {
                    picked = i;
                    break;
                }
            }
            picked
        } else {
            // all remaining points coincide with a centroid
            c % n
        };
        centroids.row_mut(c).assign(&points.row(chosen));
        for i in 0..n {
            let diff = &points.row(i) - &centroids.row(c);
            dist_sq[i] = dist_sq[i].min(diff.dot(&diff));
        }
    }
    centroids
}

fn assign(points: &Array2<f64>, centroids: &Array2<f64>) -> (Vec<usize>, f64) {
    let mut labels = vec![0usize; points.nrows()];
    let mut inertia = 0.0;
    for (label, point) in labels.iter_mut().zip(points.rows()) {
        let mut best = (f64::INFINITY, 0usize);
        for c in 0..centroids.nrows() {
            let diff = &point - &centroids.row(c);
            let d = diff.dot(&diff);
            if d < best.0 {
                best = (d, c);
            }
        }
        *label = best.1;
        inertia += best.0;
    }
    (labels, inertia)
}

/// Lloyd iterations from explicit initial centroids, to centroid stability
/// 1e-9 or 300 rounds. Empty clusters are reseeded from the point farthest
/// from its current centroid. Exposed so tests can drive the loop against
/// an independent implementation from the same start.
pub fn lloyd_from(points: &Array2<f64>, mut centroids: Array2<f64>) -> (Vec<usize>, f64) {
    let n = points.nrows();
    let dim = points.ncols();
    let n_clusters = centroids.nrows();
    for _ in 0..300 {
        let (mut labels, _) = assign(points, &centroids);

        let mut sums = Array2::<f64>::zeros((n_clusters, dim));
        let mut counts = vec![0usize; n_clusters];
        for (i, &c) in labels.iter().enumerate() {
            let mut row = sums.row_mut(c);
            row += &points.row(i);
            counts[c] += 1;
        }
        // reseed empty clusters from the worst-fit point
        for c in 0..n_clusters {
            if counts[c] == 0 {
                let mut farthest = (f64::NEG_INFINITY, 0usize);
                for i in 0..n {
                    let diff = &points.row(i) - &centroids.row(labels[i]);
                    let d = diff.dot(&diff);
                    if d > farthest.0 {
                        farthest = (d, i);
                    }
                }
                sums.row_mut(c).assign(&points.row(farthest.1));
                counts[c] = 1;
                labels[farthest.1] = c;
            }
        }

        let mut movement = 0.0_f64;
        for c in 0..n_clusters {
            let new_centroid = &sums.row(c) / counts[c] as f64;
            let diff = &new_centroid - &centroids.row(c);
            movement = movement.max(diff.dot(&diff).sqrt());
            centroids.row_mut(c).assign(&new_centroid);
        }
        if movement < 1e-9 {
            break;
        }
    }
    assign(points, &centroids)
}

/// k-means with k-means++ seeding and multiple restarts; the run with the
/// lowest inertia wins, ties by restart index, so the result is a
/// deterministic function of `(points, n_clusters, seed, restarts)`.
pub fn kmeans(
    points: &Array2<f64>,
    n_clusters: usize,
    seed: u64,
    restarts: usize,
) -> Result<(Vec<usize>, f64)> {
    let n = points.nrows();
    if n_clusters == 0 || n_clusters > n {
        return Err(SrgError::InvalidParam(format!(
            "n_clusters must be in [1, {n}], got {n_clusters}"
        )));
    }
    if restarts == 0 {
        return Err(SrgError::InvalidParam("restarts must be at least 1".into()));
    }
    let runs = map_indexed(restarts, |restart| {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (restart as u64).wrapping_mul(0x9E3779B97F4A7C15));
        let init = kmeans_pp_init(points, n_clusters, &mut rng);
        lloyd_from(points, init)
    });
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(i, (_, a)), (j, (_, b))| a.total_cmp(b).then(i.cmp(j)))
        .expect("at least one restart");
    Ok(best.1)
}

/// Relabel clusters by order of first appearance so indices are contiguous
/// from zero and independent of centroid numbering.
fn canonical_labels(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut mapping: BTreeMap<usize, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(labels.len());
    for &l in labels {
        let next = mapping.len();
        let id = *mapping.entry(l).or_insert(next);
        out.push(id);
    }
    let n = mapping.len();
    (out, n)
}

/// Spectral clustering of classes on a symmetric nonnegative affinity.
///
/// Builds the Laplacian, embeds each class as its coordinates in the `n`
/// eigenvectors with smallest eigenvalues, and k-means the embedded points.
/// `class_ids` names the rows of the affinity.
pub fn spectral_cluster_with(
    affinity: &Array2<f64>,
    class_ids: &[usize],
    n: usize,
    seed: u64,
    kind: LaplacianKind,
    restarts: usize,
) -> Result<ClusterResult> {
    let k = affinity.nrows();
    if affinity.ncols() != k {
        return Err(SrgError::NonSquare {
            rows: k,
            cols: affinity.ncols(),
        });
    }
    if class_ids.len() != k {
        return Err(SrgError::dim("class ids for affinity rows", k, class_ids.len()));
    }
    if n == 0 || n > k {
        return Err(SrgError::InvalidParam(format!(
            "cluster count must be in [1, {k}], got {n}"
        )));
    }
    for i in 0..k {
        for j in 0..k {
            if affinity[[i, j]] != affinity[[j, i]] {
                return Err(SrgError::InvalidParam("affinity must be symmetric".into()));
            }
            if i != j && affinity[[i, j]] < 0.0 {
                return Err(SrgError::InvalidParam(
                    "affinity must be nonnegative off the diagonal".into(),
                ));
            }
        }
    }
    let lap = laplacian(affinity, kind)?;
    let (values, vectors) = linalg::symmetric_eigen(lap.view())?;
    let eigengap_trace: Vec<f64> = values.iter().take(n + 1).copied().collect();

    // rows = classes, columns = the n bottom eigenvectors
    let points = vectors.slice(ndarray::s![.., ..n]).to_owned();
    let (raw_labels, _) = kmeans(&points, n, seed, restarts)?;
    let (labels, n_found) = canonical_labels(&raw_labels);

    let mut assignments = BTreeMap::new();
    for (row, &class) in class_ids.iter().enumerate() {
        assignments.insert(class, labels[row]);
    }
    Ok(ClusterResult {
        assignments,
        n_clusters: n_found,
        eigengap_trace,
    })
}

/// [`spectral_cluster_with`] on the unnormalized Laplacian with 10 k-means
/// restarts.
pub fn spectral_cluster(
    affinity: &Array2<f64>,
    class_ids: &[usize],
    n: usize,
    seed: u64,
) -> Result<ClusterResult> {
    spectral_cluster_with(affinity, class_ids, n, seed, LaplacianKind::Unnormalized, 10)
}

impl ClusterResult {
    /// Text table, one row per cluster listing its classes. `names` maps a
    /// class id to a display name; ids print directly when absent.
    pub fn to_table(&self, names: Option<&BTreeMap<usize, String>>) -> String {
        let mut rows: Vec<Vec<String>> = vec![Vec::new(); self.n_clusters];
        for (&class, &cluster) in &self.assignments {
            let label = names
                .and_then(|n| n.get(&class).cloned())
                .unwrap_or_else(|| class.to_string());
            rows[cluster].push(label);
        }
        let mut out = String::new();
        for (i, members) in rows.iter().enumerate() {
            out.push_str(&format!("{:<3} {}\n", i + 1, members.join("  ")));
        }
        out
    }
}
