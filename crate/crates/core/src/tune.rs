//! Weight selection by class-stratified cross-validation.
//!
//! Unseen classes cannot be validated against, so the seen classes are
//! split into folds and each fold plays the unseen role in turn: its image
//! prototypes are dropped, the graph is fit on the remaining classes, the
//! fold's prototypes are synthesized, and the fold's held-out samples are
//! classified among the fold's classes. The weight pair with the best mean
//! accuracy across folds wins.

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify;
use crate::data::{compute_prototypes, Dataset, EmbeddingSpace};
use crate::error::{Result, SrgError};
use crate::parallel::map_indexed;
use crate::srg::{fit, Hyperparams};

/// Search grids for the two weights plus the fold layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub lambda_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub n_folds: usize,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        // half-decade steps: lambda over 10^[-2, 2], gamma over 10^[-2, 0)
        let lambda_grid = (0..9).map(|i| 10f64.powf(-2.0 + 0.5 * i as f64)).collect();
        let gamma_grid = (0..4).map(|i| 10f64.powf(-2.0 + 0.5 * i as f64)).collect();
        GridSpec {
            lambda_grid,
            gamma_grid,
            n_folds: 5,
            seed: 0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() || self.gamma_grid.is_empty() {
            return Err(SrgError::InvalidParam("grids must be non-empty".into()));
        }
        if self.lambda_grid.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(SrgError::InvalidParam(
                "lambda grid entries must be finite and nonnegative".into(),
            ));
        }
        if self.gamma_grid.iter().any(|&g| !(g > 0.0 && g < 1.0)) {
            return Err(SrgError::InvalidParam(
                "gamma grid entries must lie in (0, 1)".into(),
            ));
        }
        if self.n_folds < 2 {
            return Err(SrgError::InvalidParam("need at least 2 folds".into()));
        }
        Ok(())
    }
}

/// One measured grid point on one fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRow {
    pub lambda: f64,
    pub gamma: f64,
    pub fold: usize,
    pub accuracy: f64,
}

/// Search outcome: the winning pair and the full score table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_lambda: f64,
    pub best_gamma: f64,
    pub best_mean_accuracy: f64,
    pub scores: Vec<ScoreRow>,
}

/// Partition the seen class ids into `n_folds` near-equal folds,
/// deterministically under `seed`. Earlier folds take the remainder.
pub fn make_folds(seen_classes: &[usize], n_folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n_folds == 0 || n_folds > seen_classes.len() {
        return Err(SrgError::TooFewClasses {
            needed: n_folds,
            available: seen_classes.len(),
        });
    }
    let mut shuffled = seen_classes.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let base = shuffled.len() / n_folds;
    let remainder = shuffled.len() % n_folds;
    let mut folds = Vec::with_capacity(n_folds);
    let mut start = 0;
    for f in 0..n_folds {
        let size = base + usize::from(f < remainder);
        let mut fold: Vec<usize> = shuffled[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    Ok(folds)
}

/// Accuracy of one `(lambda, gamma)` pair on one fold of pseudo-unseen
/// classes. Training uses only samples of the pseudo-seen classes; held-out
/// samples are classified among the fold's classes by their synthesized
/// prototypes.
fn score_fold(
    dataset: &Dataset,
    semantic: &EmbeddingSpace,
    fold: &[usize],
    hp: &Hyperparams,
) -> Result<f64> {
    let pseudo_seen: Vec<usize> = dataset
        .seen_classes()
        .iter()
        .copied()
        .filter(|c| !fold.contains(c))
        .collect();

    // training world: pseudo-seen rows only, fold classes play unseen
    let train_rows: Vec<usize> = dataset
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, l)| pseudo_seen.contains(l))
        .map(|(i, _)| i)
        .collect();
    let train = Dataset::new(
        dataset.features().select(Axis(0), &train_rows),
        train_rows.iter().map(|&i| dataset.labels()[i]).collect(),
        pseudo_seen.clone(),
        fold.to_vec(),
    )?;
    train.validate_training()?;

    let mut order = pseudo_seen.clone();
    order.extend_from_slice(fold);
    let sub_semantic = semantic.restrict(&order)?;

    let prototypes = compute_prototypes(&train)?;
    let model = fit(&sub_semantic, &prototypes.seen, hp)?;

    let fold_space = EmbeddingSpace::new(
        "held-out prototypes",
        model.synthesized_unseen,
        fold.to_vec(),
    )?;

    let mut hits = 0usize;
    let mut total = 0usize;
    for (i, label) in dataset.labels().iter().enumerate() {
        if !fold.contains(label) {
            continue;
        }
        let predicted = classify::classify(dataset.features().row(i), &fold_space, fold)?;
        hits += usize::from(predicted == *label);
        total += 1;
    }
    if total == 0 {
        return Err(SrgError::EmptyClass(fold[0]));
    }
    Ok(hits as f64 / total as f64)
}

/// Exhaustive search over the weight grids. Grid points run independently
/// (in parallel when enabled); ties on mean accuracy prefer the larger
/// lambda, then the smaller gamma.
pub fn grid_search(
    dataset: &Dataset,
    semantic: &EmbeddingSpace,
    grid: &GridSpec,
    base: &Hyperparams,
) -> Result<TuneResult> {
    grid.validate()?;
    dataset.validate_training()?;
    let folds = make_folds(dataset.seen_classes(), grid.n_folds, grid.seed)?;

    let mut jobs = Vec::new();
    for &lambda in &grid.lambda_grid {
        for &gamma in &grid.gamma_grid {
            for fold_index in 0..folds.len() {
                jobs.push((lambda, gamma, fold_index));
            }
        }
    }

    let rows = map_indexed(jobs.len(), |j| -> Result<ScoreRow> {
        let (lambda, gamma, fold_index) = jobs[j];
        let hp = Hyperparams {
            lambda,
            gamma,
            ..base.clone()
        };
        let accuracy =
            score_fold(dataset, semantic, &folds[fold_index], &hp).map_err(|err| {
                SrgError::InvalidParam(format!(
                    "grid point (lambda={lambda}, gamma={gamma}, fold={fold_index}) failed: {err}"
                ))
            })?;
        Ok(ScoreRow {
            lambda,
            gamma,
            fold: fold_index,
            accuracy,
        })
    });
    let scores: Vec<ScoreRow> = rows.into_iter().collect::<Result<_>>()?;

    let mut best: Option<(f64, f64, f64)> = None; // (mean, lambda, gamma)
    for &lambda in &grid.lambda_grid {
        for &gamma in &grid.gamma_grid {
            let fold_scores: Vec<f64> = scores
                .iter()
                .filter(|r| r.lambda == lambda && r.gamma == gamma)
                .map(|r| r.accuracy)
                .collect();
            let mean = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
            let better = match best {
                None => true,
                Some((bm, bl, bg)) => {
                    mean > bm
                        || (mean == bm && lambda > bl)
                        || (mean == bm && lambda == bl && gamma < bg)
                }
            };
            if better {
                best = Some((mean, lambda, gamma));
            }
        }
    }
    let (best_mean_accuracy, best_lambda, best_gamma) =
        best.expect("grids are non-empty after validation");
    Ok(TuneResult {
        best_lambda,
        best_gamma,
        best_mean_accuracy,
        scores,
    })
}
