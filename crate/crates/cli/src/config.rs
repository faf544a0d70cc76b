//! Plain `key = value` run configuration with a schema pass.
//!
//! Lines are `key = value`; `#` starts a comment. Every key must belong to
//! the known-key list below, so typos fail loudly before any compute. All
//! randomness in a run flows from the single `seed` key (overridable with
//! `--seed`).

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use srg_core::{Result, SrgError};

/// Every key a config file may contain, with the units and formats the
/// values use.
pub const KNOWN_KEYS: &[&str] = &[
    // input paths
    "features",        // training feature matrix (csv or .bin)
    "labels",          // training labels, one integer per line
    "split",           // [seen]/[unseen] class-id sections
    "embeddings",      // comma-separated list of embedding matrix files
    "manifest",        // class-id manifest, one id per line, canonical order
    "test_features",   // evaluation feature matrix
    "test_labels",     // evaluation labels
    "model",           // fitted model JSON (eval / cluster)
    "class_names",     // optional 'id name' lines for cluster tables
    "out_dir",         // where command outputs are written
    // graph weights and solver budgets
    "lambda",          // sparsity weight, nonnegative
    "gamma",           // image-loss weight in (0, 1)
    "outer_tol",       // relative objective-change stopping threshold
    "max_outer_iter",
    "lasso_tol",
    "lasso_max_iter",
    "locality",        // none | log_distance
    "normalize_image", // true | false: unit-normalize image prototypes
    // evaluation
    "protocol",        // zsl | gzsl
    "top_k",           // comma-separated k values, e.g. 1,5
    "per_class_mean",  // true | false
    // clustering
    "n_clusters",
    "normalized_laplacian", // true | false
    "restarts",
    // tuning
    "lambda_grid", // comma-separated values
    "gamma_grid",
    "n_folds",
    // training-set subsampling (at most one of the two)
    "subsample_fraction",
    "subsample_count",
    // misc
    "seed",
    "threads", // 0 = library default
    // synthetic generation
    "gen_seen",
    "gen_unseen",
    "gen_image_dim",
    "gen_semantic_dim",
    "gen_sparsity",
    "gen_scale",
    "gen_noise",
    "gen_shift",
    "gen_samples",
];

#[derive(Debug, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
    dir: PathBuf,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path)?;
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| SrgError::Parse {
                path: path.display().to_string(),
                message: format!("line {}: expected 'key = value'", i + 1),
            })?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(SrgError::Parse {
                    path: path.display().to_string(),
                    message: format!("line {}: unknown key '{}'", i + 1, key),
                });
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(SrgError::Parse {
                    path: path.display().to_string(),
                    message: format!("line {}: duplicate key '{}'", i + 1, key),
                });
            }
        }
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(Config { values, dir })
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn raw(&self, key: &str) -> Result<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| SrgError::InvalidParam(format!("config key '{key}' is required")))
    }

    /// Required path, resolved relative to the config file's directory.
    pub fn path(&self, key: &str) -> Result<PathBuf> {
        let value = self.raw(key)?;
        let p = PathBuf::from(value);
        Ok(if p.is_absolute() { p } else { self.dir.join(p) })
    }

    /// Required list of paths (comma-separated).
    pub fn paths(&self, key: &str) -> Result<Vec<PathBuf>> {
        let value = self.raw(key)?;
        value
            .split(',')
            .map(|part| {
                let p = PathBuf::from(part.trim());
                if part.trim().is_empty() {
                    Err(SrgError::InvalidParam(format!("empty path in '{key}'")))
                } else if p.is_absolute() {
                    Ok(p)
                } else {
                    Ok(self.dir.join(p))
                }
            })
            .collect()
    }

    pub fn parsed<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)?.parse().map_err(|e| {
            SrgError::InvalidParam(format!("config key '{key}': {e}"))
        })
    }

    pub fn parsed_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        if self.has(key) {
            self.parsed(key)
        } else {
            Ok(default)
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        if !self.has(key) {
            return Ok(default);
        }
        match self.raw(key)? {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(SrgError::InvalidParam(format!(
                "config key '{key}': expected true or false, got '{other}'"
            ))),
        }
    }

    /// Comma-separated list of parseable values.
    pub fn list<T>(&self, key: &str) -> Result<Vec<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)?
            .split(',')
            .map(|part| {
                part.trim().parse().map_err(|e| {
                    SrgError::InvalidParam(format!("config key '{key}': {e}"))
                })
            })
            .collect()
    }

    pub fn list_or<T>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if self.has(key) {
            self.list(key)
        } else {
            Ok(default)
        }
    }
}
