//! Command implementations. Every command reads and validates all of its
//! inputs before writing anything, so a failed run leaves no partial
//! outputs.

use std::fs;
use std::path::PathBuf;

use ndarray::Array2;

use srg_core::classify::{evaluate, EvalOptions, Protocol};
use srg_core::cluster::{balance_graph, spectral_cluster_with, LaplacianKind};
use srg_core::data::{
    compute_prototypes, fuse_embeddings, normalize_columns, subsample_per_class, Dataset,
    EmbeddingSpace, Subsample,
};
use srg_core::io;
use srg_core::srg::{build_locality, fit, Hyperparams, LocalityMode};
use srg_core::synth::{generate, space_shift_report, SyntheticSpec};
use srg_core::tune::{grid_search, GridSpec};
use srg_core::{Result, SrgError};

use crate::config::Config;

fn hyperparams(config: &Config) -> Result<Hyperparams> {
    let defaults = Hyperparams::default();
    let locality = match config.parsed_or::<String>("locality", "none".into())?.as_str() {
        "none" => LocalityMode::None,
        "log_distance" => LocalityMode::LogDistance,
        other => {
            return Err(SrgError::InvalidParam(format!(
                "locality must be none or log_distance, got '{other}'"
            )))
        }
    };
    let hp = Hyperparams {
        lambda: config.parsed_or("lambda", defaults.lambda)?,
        gamma: config.parsed_or("gamma", defaults.gamma)?,
        outer_tol: config.parsed_or("outer_tol", defaults.outer_tol)?,
        max_outer_iter: config.parsed_or("max_outer_iter", defaults.max_outer_iter)?,
        lasso_tol: config.parsed_or("lasso_tol", defaults.lasso_tol)?,
        lasso_max_iter: config.parsed_or("lasso_max_iter", defaults.lasso_max_iter)?,
        locality,
    };
    hp.validate()?;
    Ok(hp)
}

fn seed(config: &Config, override_seed: Option<u64>) -> Result<u64> {
    match override_seed {
        Some(s) => Ok(s),
        None => config.parsed_or("seed", 0u64),
    }
}

/// Load the training dataset: features, labels, and the class split, with
/// optional per-class subsampling.
fn load_training(config: &Config, seed: u64) -> Result<Dataset> {
    let (seen, unseen) = io::read_split(&config.path("split")?)?;
    let features = io::read_matrix_auto(&config.path("features")?)?;
    let labels = io::read_labels(&config.path("labels")?)?;
    let dataset = Dataset::new(features, labels, seen, unseen)?;
    let dataset = match (config.has("subsample_fraction"), config.has("subsample_count")) {
        (true, true) => {
            return Err(SrgError::InvalidParam(
                "choose one of subsample_fraction and subsample_count".into(),
            ))
        }
        (true, false) => subsample_per_class(
            &dataset,
            Subsample::Fraction(config.parsed("subsample_fraction")?),
            seed,
        )?,
        (false, true) => subsample_per_class(
            &dataset,
            Subsample::Count(config.parsed("subsample_count")?),
            seed,
        )?,
        (false, false) => dataset,
    };
    Ok(dataset)
}

/// The canonical class order implied by the split, cross-checked against
/// the manifest file.
fn verified_manifest(config: &Config, dataset: &Dataset) -> Result<Vec<usize>> {
    let manifest = io::read_manifest(&config.path("manifest")?)?;
    let canonical = dataset.class_order();
    if manifest != canonical {
        return Err(SrgError::ManifestMismatch(format!(
            "manifest order {manifest:?} does not match the canonical split order {canonical:?}"
        )));
    }
    Ok(manifest)
}

/// Load every embedding file against the manifest and fuse them.
fn load_semantic(config: &Config, class_order: &[usize]) -> Result<EmbeddingSpace> {
    let paths = config.paths("embeddings")?;
    let mut spaces = Vec::with_capacity(paths.len());
    for path in &paths {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "embedding".into());
        spaces.push(io::read_embedding(path, &name, class_order)?);
    }
    if spaces.len() == 1 {
        Ok(spaces.into_iter().next().expect("one space"))
    } else {
        fuse_embeddings(&spaces)
    }
}

/// Per-class means of the training features, optionally unit-normalized.
fn seen_prototypes(config: &Config, dataset: &Dataset) -> Result<Array2<f64>> {
    let mut prototypes = compute_prototypes(dataset)?.seen;
    if config.bool_or("normalize_image", false)? {
        normalize_columns(&mut prototypes, dataset.seen_classes(), "image")?;
    }
    Ok(prototypes)
}

fn out_dir(config: &Config) -> Result<PathBuf> {
    let dir = config.path("out_dir")?;
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub fn cmd_fit(config: &Config, override_seed: Option<u64>) -> Result<i32> {
    let seed = seed(config, override_seed)?;
    let hp = hyperparams(config)?;
    let dataset = load_training(config, seed)?;
    dataset.validate_training()?;
    let class_order = verified_manifest(config, &dataset)?;
    let semantic = load_semantic(config, &class_order)?;
    let prototypes = seen_prototypes(config, &dataset)?;

    let (_, duplicates) = build_locality(&semantic, hp.locality)?;
    for (a, b) in &duplicates {
        eprintln!("warning: classes {a} and {b} have identical semantic embeddings");
    }

    let model = fit(&semantic, &prototypes, &hp)?;
    let converged = model.converged;

    let dir = out_dir(config)?;
    let file = io::ModelFile {
        class_order,
        n_seen: dataset.seen_classes().len(),
        hyperparams: hp,
        model,
    };
    io::write_model(&dir.join("model.json"), &file)?;
    let mut trace = String::from("iteration,loss\n");
    for (i, loss) in file.model.loss_trace.iter().enumerate() {
        trace.push_str(&format!("{i},{loss}\n"));
    }
    fs::write(dir.join("loss_trace.csv"), trace)?;

    println!(
        "fit: {} outer iterations, final loss {:.6e}, converged: {converged}",
        file.model.loss_trace.len(),
        file.model.loss_trace.last().copied().unwrap_or(f64::NAN),
    );
    if !converged {
        eprintln!("warning: outer loop hit the iteration cap; model written anyway");
        return Ok(4);
    }
    Ok(0)
}

fn load_test_set(config: &Config, train: &Dataset) -> Result<Dataset> {
    let features = io::read_matrix_auto(&config.path("test_features")?)?;
    let labels = io::read_labels(&config.path("test_labels")?)?;
    Dataset::new(
        features,
        labels,
        train.seen_classes().to_vec(),
        train.unseen_classes().to_vec(),
    )
}

pub fn cmd_eval(config: &Config, override_seed: Option<u64>) -> Result<i32> {
    let seed = seed(config, override_seed)?;
    let model_file = io::read_model(&config.path("model")?)?;
    let dataset = load_training(config, seed)?;
    dataset.validate_training()?;
    let class_order = verified_manifest(config, &dataset)?;
    if model_file.class_order != class_order {
        return Err(SrgError::ManifestMismatch(format!(
            "model was fit on classes {:?}, run describes {:?}",
            model_file.class_order, class_order
        )));
    }
    if model_file.n_seen != dataset.seen_classes().len() {
        return Err(SrgError::ManifestMismatch(format!(
            "model has {} seen classes, split has {}",
            model_file.n_seen,
            dataset.seen_classes().len()
        )));
    }
    let prototypes = seen_prototypes(config, &dataset)?;
    let space = model_file.model.image_space(&prototypes, &class_order)?;
    let test = load_test_set(config, &dataset)?;

    let protocol = match config.parsed_or::<String>("protocol", "zsl".into())?.as_str() {
        "zsl" => Protocol::Zsl,
        "gzsl" => Protocol::Gzsl,
        other => {
            return Err(SrgError::InvalidParam(format!(
                "protocol must be zsl or gzsl, got '{other}'"
            )))
        }
    };
    let options = EvalOptions {
        ks: config.list_or("top_k", vec![1, 5])?,
        per_class_mean: config.bool_or("per_class_mean", false)?,
    };
    let report = evaluate(&test, &space, protocol, &options)?;

    let dir = out_dir(config)?;
    io::write_json(&dir.join("eval_report.json"), &report)?;
    fs::write(dir.join("eval_report.txt"), report.to_table())?;
    print!("{}", report.to_table());
    Ok(0)
}

pub fn cmd_cluster(config: &Config, override_seed: Option<u64>) -> Result<i32> {
    let seed = seed(config, override_seed)?;
    let model_file = io::read_model(&config.path("model")?)?;
    let n = config.parsed::<usize>("n_clusters")?;
    let kind = if config.bool_or("normalized_laplacian", false)? {
        LaplacianKind::SymmetricNormalized
    } else {
        LaplacianKind::Unnormalized
    };
    let restarts = config.parsed_or("restarts", 10usize)?;
    let names = if config.has("class_names") {
        Some(io::read_class_names(&config.path("class_names")?)?)
    } else {
        None
    };

    let affinity = balance_graph(&model_file.model.coefficients)?;
    let result =
        spectral_cluster_with(&affinity, &model_file.class_order, n, seed, kind, restarts)?;

    let dir = out_dir(config)?;
    io::write_json(&dir.join("cluster_report.json"), &result)?;
    let table = result.to_table(names.as_ref());
    fs::write(dir.join("cluster_report.txt"), &table)?;
    print!("{table}");
    println!(
        "eigenvalues (smallest {}): {}",
        result.eigengap_trace.len(),
        result
            .eigengap_trace
            .iter()
            .map(|v| format!("{v:.3e}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    Ok(0)
}

/// Serialized tuning outcome.
#[derive(serde::Serialize)]
struct BestParams {
    lambda: f64,
    gamma: f64,
    mean_accuracy: f64,
    n_folds: usize,
    seed: u64,
}

pub fn cmd_tune(config: &Config, override_seed: Option<u64>) -> Result<i32> {
    let seed = seed(config, override_seed)?;
    let hp = hyperparams(config)?;
    let dataset = load_training(config, seed)?;
    dataset.validate_training()?;
    let class_order = verified_manifest(config, &dataset)?;
    let semantic = load_semantic(config, &class_order)?;

    let defaults = GridSpec::default();
    let grid = GridSpec {
        lambda_grid: config.list_or("lambda_grid", defaults.lambda_grid)?,
        gamma_grid: config.list_or("gamma_grid", defaults.gamma_grid)?,
        n_folds: config.parsed_or("n_folds", defaults.n_folds)?,
        seed,
    };
    let result = grid_search(&dataset, &semantic, &grid, &hp)?;

    let dir = out_dir(config)?;
    io::write_scores_csv(&dir.join("scores.csv"), &result.scores)?;
    io::write_json(
        &dir.join("best_params.json"),
        &BestParams {
            lambda: result.best_lambda,
            gamma: result.best_gamma,
            mean_accuracy: result.best_mean_accuracy,
            n_folds: grid.n_folds,
            seed,
        },
    )?;
    println!(
        "tune: best lambda {} gamma {} (mean fold accuracy {:.4})",
        result.best_lambda, result.best_gamma, result.best_mean_accuracy
    );
    Ok(0)
}

pub fn cmd_gen(config: &Config, override_seed: Option<u64>) -> Result<i32> {
    let seed = seed(config, override_seed)?;
    let spec = SyntheticSpec {
        n_seen: config.parsed("gen_seen")?,
        n_unseen: config.parsed("gen_unseen")?,
        image_dim: config.parsed("gen_image_dim")?,
        semantic_dim: config.parsed("gen_semantic_dim")?,
        sparsity: config.parsed("gen_sparsity")?,
        scale: config.parsed_or("gen_scale", 1.0)?,
        noise_sigma: config.parsed_or("gen_noise", 0.0)?,
        shift: config.parsed_or("gen_shift", 0.0)?,
        samples_per_class: config.parsed("gen_samples")?,
        seed,
    };
    let data = generate(&spec)?;

    let dir = out_dir(config)?;
    io::write_matrix_csv(&dir.join("features.csv"), data.train.features().view())?;
    io::write_labels(&dir.join("labels.txt"), data.train.labels())?;
    io::write_matrix_csv(&dir.join("test_features.csv"), data.test.features().view())?;
    io::write_labels(&dir.join("test_labels.txt"), data.test.labels())?;
    io::write_split(
        &dir.join("split.txt"),
        data.train.seen_classes(),
        data.train.unseen_classes(),
    )?;
    io::write_manifest(&dir.join("manifest.txt"), &data.train.class_order())?;
    io::write_embedding(&dir.join("semantic.csv"), &data.semantic)?;
    io::write_json(&dir.join("truth.json"), &data.truth)?;

    // a ready-to-run configuration pointing at the generated files
    let run = format!(
        "features = features.csv\n\
         labels = labels.txt\n\
         split = split.txt\n\
         embeddings = semantic.csv\n\
         manifest = manifest.txt\n\
         test_features = test_features.csv\n\
         test_labels = test_labels.txt\n\
         model = model.json\n\
         out_dir = .\n\
         lambda = 0.01\n\
         gamma = 0.1\n\
         protocol = zsl\n\
         top_k = 1,5\n\
         n_clusters = {}\n\
         seed = {}\n",
        data.truth.groups.len(),
        seed,
    );
    fs::write(dir.join("run.config"), run)?;

    println!(
        "gen: {} train samples, {} test samples, {} classes in {} groups",
        data.train.n_samples(),
        data.test.n_samples(),
        data.train.class_order().len(),
        data.truth.groups.len()
    );
    Ok(0)
}

pub fn cmd_shift_report(config: &Config, _override_seed: Option<u64>) -> Result<i32> {
    let paths = config.paths("embeddings")?;
    let report = if paths.len() >= 2 {
        // compare the first two embedding spaces over the full class set
        let manifest = io::read_manifest(&config.path("manifest")?)?;
        let a = io::read_embedding(&paths[0], "space-a", &manifest)?;
        let b = io::read_embedding(&paths[1], "space-b", &manifest)?;
        space_shift_report(&a, &b)?
    } else {
        // compare the semantic space against the seen image prototypes
        let dataset = load_training(config, 0)?;
        dataset.validate_training()?;
        let class_order = verified_manifest(config, &dataset)?;
        let semantic = load_semantic(config, &class_order)?;
        let seen_semantic = semantic.restrict(dataset.seen_classes())?;
        let prototypes = seen_prototypes(config, &dataset)?;
        let image = EmbeddingSpace::new("image", prototypes, dataset.seen_classes().to_vec())?;
        space_shift_report(&seen_semantic, &image)?
    };

    let dir = out_dir(config)?;
    io::write_json(&dir.join("shift_report.json"), &report)?;
    let table = report.to_table();
    fs::write(dir.join("shift_report.txt"), &table)?;
    print!("{table}");
    Ok(0)
}

/// Map an error to the process exit code: 3 for numerical failures, 4 for
/// solver non-convergence, 2 for anything wrong with inputs or parameters.
pub fn exit_code(err: &SrgError) -> i32 {
    match err {
        SrgError::SingularBlock { .. }
        | SrgError::EigenFailure(_)
        | SrgError::NumericalFailure(_)
        | SrgError::ConditioningFailure { .. } => 3,
        SrgError::NotConverged { .. } => 4,
        _ => 2,
    }
}

