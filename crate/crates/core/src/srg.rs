//! Learning the shared reconstruction graph.
//!
//! The loss being minimized, per class `k`, is
//!
//! ```text
//!   ||e_k - E a_k||^2 + gamma ||f_k - F a_k||^2 + lambda ||D_k a_k||_1,
//!   subject to a_k[k] = 0
//! ```
//!
//! where `E` holds semantic prototypes, `F = [F_seen | F_unseen]` holds
//! image prototypes, and `D_k` is a diagonal locality penalty. Both the
//! coefficients `A` and the unseen image block `F_unseen` are unknown, so
//! fitting alternates two steps: a per-class L1 solve for the coefficient
//! columns (the image block of the stacked design is scaled by sqrt(gamma)
//! so the subproblem's quadratic term is exactly the loss above), and a
//! closed-form synthesis of the unseen prototypes that zeroes the unseen
//! reconstruction residuals through a pivoted linear solve.

use ndarray::{concatenate, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSpace;
use crate::error::{Result, SrgError};
use crate::lasso::{solve_lasso, LassoProblem};
use crate::linalg;
use crate::parallel::map_indexed;

/// Smallest admissible locality penalty; entries that evaluate at or below
/// this are clamped up to it.
pub const LOCALITY_EPS: f64 = 1e-6;

/// Condition-number ceiling above which the unseen block is treated as
/// singular rather than silently regularized.
pub const SINGULAR_CONDITION_LIMIT: f64 = 1e12;

/// How the per-class diagonal penalties are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalityMode {
    /// Every penalty is the identity (the small-dataset setting).
    #[default]
    None,
    /// Penalty grows with semantic distance: `log(1 + ||e_i - e_k||)`.
    LogDistance,
}

/// The two regularization weights plus solver budgets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Sparsity weight on the L1 term; nonnegative.
    pub lambda: f64,
    /// Weight of the image-space reconstruction loss; must stay below 1
    /// because the unseen image prototypes are estimates.
    pub gamma: f64,
    /// Relative objective-change threshold for outer convergence.
    pub outer_tol: f64,
    pub max_outer_iter: usize,
    pub lasso_tol: f64,
    pub lasso_max_iter: usize,
    pub locality: LocalityMode,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda: 0.1,
            gamma: 0.1,
            outer_tol: 1e-5,
            max_outer_iter: 100,
            lasso_tol: 1e-7,
            lasso_max_iter: 10_000,
            locality: LocalityMode::None,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(SrgError::InvalidParam(format!(
                "lambda must be finite and nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(SrgError::InvalidParam(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        let tol_ok = |t: f64| t > 0.0 && !t.is_nan();
        if !tol_ok(self.outer_tol) || !tol_ok(self.lasso_tol) {
            return Err(SrgError::InvalidParam("tolerances must be positive".into()));
        }
        if self.max_outer_iter == 0 || self.lasso_max_iter == 0 {
            return Err(SrgError::InvalidParam(
                "iteration caps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-class diagonal penalties: row `k` is the diagonal of `D_k`.
#[derive(Debug, Clone)]
pub struct LocalityWeights {
    diagonals: Array2<f64>,
}

impl LocalityWeights {
    /// All-ones penalties for `k` classes.
    pub fn identity(k: usize) -> Self {
        LocalityWeights {
            diagonals: Array2::ones((k, k)),
        }
    }

    /// Wrap a precomputed penalty matrix. Entries must be strictly positive
    /// and finite, with unit self-penalties on the diagonal.
    pub fn from_diagonals(diagonals: Array2<f64>) -> Result<Self> {
        if diagonals.nrows() != diagonals.ncols() {
            return Err(SrgError::NonSquare {
                rows: diagonals.nrows(),
                cols: diagonals.ncols(),
            });
        }
        if diagonals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(SrgError::InvalidParam(
                "locality penalties must be strictly positive and finite".into(),
            ));
        }
        for k in 0..diagonals.nrows() {
            if diagonals[[k, k]] != 1.0 {
                return Err(SrgError::InvalidParam(format!(
                    "self-penalty of class position {k} must be 1"
                )));
            }
        }
        Ok(LocalityWeights { diagonals })
    }

    pub fn n_classes(&self) -> usize {
        self.diagonals.nrows()
    }

    pub fn diagonals(&self) -> &Array2<f64> {
        &self.diagonals
    }

    /// Diagonal of `D_k`.
    pub fn diagonal_of(&self, k: usize) -> ndarray::ArrayView1<'_, f64> {
        self.diagonals.row(k)
    }
}

/// Build the locality penalties from semantic distances. Besides the
/// weights, returns the pairs of distinct classes whose embeddings coincide
/// (their penalty would be zero and is clamped to [`LOCALITY_EPS`]); callers
/// may surface these as warnings.
pub fn build_locality(
    semantic: &EmbeddingSpace,
    mode: LocalityMode,
) -> Result<(LocalityWeights, Vec<(usize, usize)>)> {
    let k = semantic.n_classes();
    if k < 2 {
        return Err(SrgError::TooFewClasses {
            needed: 2,
            available: k,
        });
    }
    match mode {
        LocalityMode::None => Ok((LocalityWeights::identity(k), Vec::new())),
        LocalityMode::LogDistance => {
            let e = semantic.prototypes();
            let mut diagonals = Array2::ones((k, k));
            let mut duplicates = Vec::new();
            for row in 0..k {
                for col in row + 1..k {
                    let diff = &e.column(row) - &e.column(col);
                    let dist = diff.dot(&diff).sqrt();
                    if dist == 0.0 {
                        duplicates
                            .push((semantic.class_order()[row], semantic.class_order()[col]));
                    }
                    let penalty = (1.0 + dist).ln().max(LOCALITY_EPS);
                    diagonals[[row, col]] = penalty;
                    diagonals[[col, row]] = penalty;
                }
            }
            Ok((LocalityWeights { diagonals }, duplicates))
        }
    }
}

/// The learned graph: coefficients (zero diagonal), synthesized unseen image
/// prototypes, and the objective value after every outer iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SrgModel {
    /// K x K, column `k` holds the reconstruction coefficients of class `k`.
    pub coefficients: Array2<f64>,
    /// d x K_u, one column per unseen class in canonical order.
    pub synthesized_unseen: Array2<f64>,
    pub loss_trace: Vec<f64>,
    pub converged: bool,
}

impl SrgModel {
    /// The full image prototype space: seen prototypes followed by the
    /// synthesized unseen block, labeled with the canonical class order.
    pub fn image_space(
        &self,
        seen_prototypes: &Array2<f64>,
        class_order: &[usize],
    ) -> Result<EmbeddingSpace> {
        let total = seen_prototypes.ncols() + self.synthesized_unseen.ncols();
        if total != class_order.len() {
            return Err(SrgError::dim("image space columns", class_order.len(), total));
        }
        let full = if self.synthesized_unseen.ncols() == 0 {
            seen_prototypes.clone()
        } else {
            concatenate(
                Axis(1),
                &[seen_prototypes.view(), self.synthesized_unseen.view()],
            )
            .expect("prototype blocks share their row count")
        };
        EmbeddingSpace::new("image", full, class_order.to_vec())
    }
}

/// One full pass of per-class L1 solves with the current image prototypes.
///
/// `image` is the full d x K prototype matrix in the semantic space's class
/// order; it may be `None` only when the effective gamma is zero (then the
/// image rows are omitted from the stacked system entirely). Returns the
/// K x K coefficient matrix with an exactly zero diagonal.
pub fn a_step(
    semantic: &EmbeddingSpace,
    image: Option<&Array2<f64>>,
    weights: &LocalityWeights,
    hp: &Hyperparams,
    gamma_override: Option<f64>,
) -> Result<Array2<f64>> {
    let k = semantic.n_classes();
    if weights.n_classes() != k {
        return Err(SrgError::dim(
            "locality weight classes",
            k,
            weights.n_classes(),
        ));
    }
    let gamma = gamma_override.unwrap_or(hp.gamma);
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(SrgError::InvalidParam(format!(
            "effective gamma must be finite and nonnegative, got {gamma}"
        )));
    }
    let image = if gamma > 0.0 {
        let f = image.ok_or_else(|| {
            SrgError::InvalidParam("image prototypes required when gamma > 0".into())
        })?;
        if f.ncols() != k {
            return Err(SrgError::dim("image prototype columns", k, f.ncols()));
        }
        Some(f)
    } else {
        None
    };
    // sqrt so the stacked quadratic term is gamma * ||f_k - F a_k||^2
    let image_scale = gamma.sqrt();
    let e = semantic.prototypes();
    let p = e.nrows();
    let rows = p + image.map_or(0, |f| f.nrows());

    let columns = map_indexed(k, |class| -> Result<Array1<f64>> {
        let dk = weights.diagonal_of(class);
        let mut design = Array2::<f64>::zeros((rows, k));
        for i in 0..k {
            let scale = 1.0 / dk[i];
            let mut col = design.column_mut(i);
            for r in 0..p {
                col[r] = e[[r, i]] * scale;
            }
            if let Some(f) = image {
                let fs = image_scale * scale;
                for r in 0..f.nrows() {
                    col[p + r] = f[[r, i]] * fs;
                }
            }
        }
        let mut target = Array1::<f64>::zeros(rows);
        target.slice_mut(ndarray::s![..p]).assign(&e.column(class));
        if let Some(f) = image {
            target
                .slice_mut(ndarray::s![p..])
                .assign(&(&f.column(class) * image_scale));
        }
        let problem = LassoProblem::new(design, target, hp.lambda, class)?;
        let solution =
            solve_lasso(&problem, hp.lasso_tol, hp.lasso_max_iter).map_err(|err| match err {
                SrgError::NotConverged {
                    iterations,
                    kkt_residual,
                    best,
                    ..
                } => SrgError::NotConverged {
                    class: Some(class),
                    iterations,
                    kkt_residual,
                    best,
                },
                other => other,
            })?;
        // back out a_k = D_k^{-1} beta_k
        Ok(&solution.beta / &dk)
    });

    let mut coefficients = Array2::<f64>::zeros((k, k));
    for (class, column) in columns.into_iter().enumerate() {
        coefficients.column_mut(class).assign(&column?);
    }
    Ok(coefficients)
}

/// Split `theta = I - A` into the blocks acting on the unseen columns.
/// Returns `(theta_seen, theta_unseen)`: the top K_s x K_u and bottom-right
/// K_u x K_u blocks.
fn unseen_blocks(coefficients: &Array2<f64>, n_seen: usize) -> (Array2<f64>, Array2<f64>) {
    let k = coefficients.nrows();
    let k_u = k - n_seen;
    let mut theta_seen = Array2::zeros((n_seen, k_u));
    let mut theta_unseen = Array2::zeros((k_u, k_u));
    for (j, col) in (n_seen..k).enumerate() {
        for i in 0..n_seen {
            theta_seen[[i, j]] = -coefficients[[i, col]];
        }
        for i in n_seen..k {
            let eye = if i == col { 1.0 } else { 0.0 };
            theta_unseen[[i - n_seen, j]] = eye - coefficients[[i, col]];
        }
    }
    (theta_seen, theta_unseen)
}

/// Closed-form synthesis of the unseen image prototypes: solves
/// `F_unseen theta_unseen = -F_seen theta_seen` with partial pivoting, so
/// the unseen reconstruction residuals vanish exactly. Errors when the
/// unseen block is singular or its condition exceeds
/// [`SINGULAR_CONDITION_LIMIT`].
pub fn f_step(seen_prototypes: &Array2<f64>, coefficients: &Array2<f64>) -> Result<Array2<f64>> {
    let k = coefficients.nrows();
    if coefficients.ncols() != k {
        return Err(SrgError::NonSquare {
            rows: coefficients.nrows(),
            cols: coefficients.ncols(),
        });
    }
    let n_seen = seen_prototypes.ncols();
    if n_seen > k {
        return Err(SrgError::dim("seen prototype columns", k, n_seen));
    }
    let d = seen_prototypes.nrows();
    let k_u = k - n_seen;
    if k_u == 0 {
        return Ok(Array2::zeros((d, 0)));
    }
    let (theta_seen, theta_unseen) = unseen_blocks(coefficients, n_seen);
    let condition = linalg::condition_estimate(theta_unseen.view());
    if !condition.is_finite() || condition > SINGULAR_CONDITION_LIMIT {
        return Err(SrgError::SingularBlock { condition });
    }
    // F_u theta_u = -F_s theta_s  <=>  theta_u' F_u' = -(F_s theta_s)'
    let rhs = -seen_prototypes.dot(&theta_seen);
    let transposed = linalg::solve(theta_unseen.t(), rhs.t())?;
    let synthesized = transposed.t().to_owned();
    if synthesized.iter().any(|v| !v.is_finite()) {
        return Err(SrgError::NumericalFailure("synthesized prototypes".into()));
    }
    Ok(synthesized)
}

/// The full regularized loss at `(coefficients, image)`:
/// `sum_k ||e_k - E a_k||^2 + gamma ||f_k - F a_k||^2 + lambda ||D_k a_k||_1`.
pub fn objective(
    semantic: &EmbeddingSpace,
    image: &Array2<f64>,
    coefficients: &Array2<f64>,
    weights: &LocalityWeights,
    hp: &Hyperparams,
) -> Result<f64> {
    let k = semantic.n_classes();
    if coefficients.nrows() != k || coefficients.ncols() != k {
        return Err(SrgError::dim(
            "coefficient matrix size",
            k,
            coefficients.nrows(),
        ));
    }
    if image.ncols() != k {
        return Err(SrgError::dim("image prototype columns", k, image.ncols()));
    }
    if weights.n_classes() != k {
        return Err(SrgError::dim(
            "locality weight classes",
            k,
            weights.n_classes(),
        ));
    }
    let e = semantic.prototypes();
    let semantic_residual = e - &e.dot(coefficients);
    let image_residual = image - &image.dot(coefficients);
    let quad: f64 = semantic_residual.iter().map(|v| v * v).sum::<f64>()
        + hp.gamma * image_residual.iter().map(|v| v * v).sum::<f64>();
    let mut l1 = 0.0;
    for class in 0..k {
        let dk = weights.diagonal_of(class);
        for i in 0..k {
            l1 += dk[i] * coefficients[[i, class]].abs();
        }
    }
    Ok(quad + hp.lambda * l1)
}

/// Alternating optimization. The first iteration solves the coefficients
/// with gamma forced to zero (the unseen image prototypes do not exist yet),
/// then synthesizes them; subsequent iterations alternate at full gamma.
/// Stops when the relative objective change drops below `outer_tol`, or
/// flags `converged = false` after `max_outer_iter` iterations.
///
/// `seen_prototypes` must hold the first `K_s` columns of the class order
/// covered by `semantic`. With no unseen classes the fit degenerates to a
/// single coefficient pass at full gamma.
pub fn fit(
    semantic: &EmbeddingSpace,
    seen_prototypes: &Array2<f64>,
    hp: &Hyperparams,
) -> Result<SrgModel> {
    hp.validate()?;
    let k = semantic.n_classes();
    let n_seen = seen_prototypes.ncols();
    if n_seen > k {
        return Err(SrgError::dim("seen prototype columns", k, n_seen));
    }
    let d = seen_prototypes.nrows();
    let (weights, _duplicates) = build_locality(semantic, hp.locality)?;

    if n_seen == k {
        let coefficients = a_step(semantic, Some(seen_prototypes), &weights, hp, None)?;
        let loss = objective(semantic, seen_prototypes, &coefficients, &weights, hp)?;
        return Ok(SrgModel {
            coefficients,
            synthesized_unseen: Array2::zeros((d, 0)),
            loss_trace: vec![loss],
            converged: true,
        });
    }

    let mut loss_trace = Vec::new();
    let mut converged = false;

    // first iteration: coefficients from the semantic space alone
    let mut coefficients = a_step(semantic, None, &weights, hp, Some(0.0))?;
    let mut synthesized = f_step(seen_prototypes, &coefficients)?;
    let mut full = concatenate(Axis(1), &[seen_prototypes.view(), synthesized.view()])
        .expect("prototype blocks share their row count");
    loss_trace.push(objective(semantic, &full, &coefficients, &weights, hp)?);

    for _ in 1..hp.max_outer_iter {
        coefficients = a_step(semantic, Some(&full), &weights, hp, None)?;
        synthesized = f_step(seen_prototypes, &coefficients)?;
        full = concatenate(Axis(1), &[seen_prototypes.view(), synthesized.view()])
            .expect("prototype blocks share their row count");
        let loss = objective(semantic, &full, &coefficients, &weights, hp)?;
        let previous = *loss_trace.last().expect("trace has the first iteration");
        loss_trace.push(loss);
        if (loss - previous).abs() / previous.max(1e-12) < hp.outer_tol {
            converged = true;
            break;
        }
    }

    Ok(SrgModel {
        coefficients,
        synthesized_unseen: synthesized,
        loss_trace,
        converged,
    })
}
