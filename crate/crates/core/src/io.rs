//! File formats.
//!
//! Everything textual is line-oriented and written with Rust's shortest
//! round-trip float formatting, so writing and re-reading a file reproduces
//! every value bit-exactly and identical inputs produce byte-identical
//! outputs.
//!
//! * feature / embedding matrices (CSV): first line `rows,cols`, then one
//!   comma-separated row per line. Embedding files store one row per class
//!   in manifest order.
//! * feature matrices (binary, `.bin`): magic `SRGFEAT1`, little-endian u64
//!   row and column counts, then row-major little-endian f64 values.
//! * labels: one integer per line, one line per sample row.
//! * split: a `[seen]` section and an `[unseen]` section, one class id per
//!   line.
//! * manifest: one class id per line in canonical order.
//! * model / reports: JSON.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSpace;
use crate::error::{Result, SrgError};
use crate::srg::{Hyperparams, SrgModel};
use crate::tune::ScoreRow;

const FEATURE_MAGIC: &[u8; 8] = b"SRGFEAT1";

fn display(path: &Path) -> String {
    path.display().to_string()
}

/// Write a matrix as CSV with a `rows,cols` header line.
pub fn write_matrix_csv(path: &Path, matrix: ArrayView2<'_, f64>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("{},{}\n", matrix.nrows(), matrix.ncols()));
    for row in matrix.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a `rows,cols`-headed CSV matrix.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| SrgError::parse(display(path), "empty file"))?;
    let dims: Vec<&str> = header.split(',').collect();
    if dims.len() != 2 {
        return Err(SrgError::parse(
            display(path),
            format!("header must be 'rows,cols', got '{header}'"),
        ));
    }
    let rows: usize = dims[0]
        .trim()
        .parse()
        .map_err(|_| SrgError::parse(display(path), "bad row count"))?;
    let cols: usize = dims[1]
        .trim()
        .parse()
        .map_err(|_| SrgError::parse(display(path), "bad column count"))?;
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for field in line.split(',') {
            let value: f64 = field.trim().parse().map_err(|_| {
                SrgError::parse(
                    display(path),
                    format!("line {}: bad float '{}'", i + 2, field),
                )
            })?;
            data.push(value);
            count += 1;
        }
        if count != cols {
            return Err(SrgError::parse(
                display(path),
                format!("line {}: expected {} values, got {}", i + 2, cols, count),
            ));
        }
    }
    if data.len() != rows * cols {
        return Err(SrgError::parse(
            display(path),
            format!("expected {} rows, got {}", rows, data.len() / cols.max(1)),
        ));
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| SrgError::parse(display(path), e.to_string()))
}

/// Write a matrix in the binary feature format.
pub fn write_matrix_bin(path: &Path, matrix: ArrayView2<'_, f64>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(FEATURE_MAGIC)?;
    file.write_all(&(matrix.nrows() as u64).to_le_bytes())?;
    file.write_all(&(matrix.ncols() as u64).to_le_bytes())?;
    for value in matrix.iter() {
        file.write_all(&value.to_le_bytes())?;
    }
    Ok(())
}

/// Read the binary feature format.
pub fn read_matrix_bin(path: &Path) -> Result<Array2<f64>> {
    let mut file = fs::File::open(path)?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != FEATURE_MAGIC {
        return Err(SrgError::parse(display(path), "bad magic bytes"));
    }
    let mut word = [0u8; 8];
    file.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    file.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        file.read_exact(&mut word)?;
        data.push(f64::from_le_bytes(word));
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| SrgError::parse(display(path), e.to_string()))
}

/// Dispatch on extension: `.bin` is binary, anything else CSV.
pub fn read_matrix_auto(path: &Path) -> Result<Array2<f64>> {
    if path.extension().is_some_and(|e| e == "bin") {
        read_matrix_bin(path)
    } else {
        read_matrix_csv(path)
    }
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::new();
    for label in labels {
        out.push_str(&format!("{label}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        labels.push(trimmed.parse().map_err(|_| {
            SrgError::parse(display(path), format!("line {}: bad label", i + 1))
        })?);
    }
    Ok(labels)
}

/// Write the seen/unseen class split.
pub fn write_split(path: &Path, seen: &[usize], unseen: &[usize]) -> Result<()> {
    let mut out = String::from("[seen]\n");
    for c in seen {
        out.push_str(&format!("{c}\n"));
    }
    out.push_str("[unseen]\n");
    for c in unseen {
        out.push_str(&format!("{c}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read the seen/unseen class split.
pub fn read_split(path: &Path) -> Result<(Vec<usize>, Vec<usize>)> {
    let text = fs::read_to_string(path)?;
    let mut seen = Vec::new();
    let mut unseen = Vec::new();
    let mut section: Option<bool> = None; // true = seen
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match trimmed {
            "[seen]" => section = Some(true),
            "[unseen]" => section = Some(false),
            id => {
                let class: usize = id.parse().map_err(|_| {
                    SrgError::parse(display(path), format!("line {}: bad class id", i + 1))
                })?;
                match section {
                    Some(true) => seen.push(class),
                    Some(false) => unseen.push(class),
                    None => {
                        return Err(SrgError::parse(
                            display(path),
                            format!("line {}: class id before any section header", i + 1),
                        ))
                    }
                }
            }
        }
    }
    if seen.is_empty() {
        return Err(SrgError::parse(display(path), "no seen classes listed"));
    }
    Ok((seen, unseen))
}

pub fn write_manifest(path: &Path, class_order: &[usize]) -> Result<()> {
    write_labels(path, class_order)
}

pub fn read_manifest(path: &Path) -> Result<Vec<usize>> {
    read_labels(path)
}

/// Write an embedding space: one row per class, in its class order.
pub fn write_embedding(path: &Path, space: &EmbeddingSpace) -> Result<()> {
    write_matrix_csv(path, space.prototypes().t())
}

/// Read an embedding matrix against a class manifest. Rows must match the
/// manifest length; columns of the returned space follow manifest order.
pub fn read_embedding(path: &Path, name: &str, class_order: &[usize]) -> Result<EmbeddingSpace> {
    let rows = read_matrix_auto(path)?;
    if rows.nrows() != class_order.len() {
        return Err(SrgError::ManifestMismatch(format!(
            "{}: {} embedding rows but {} classes in the manifest",
            display(path),
            rows.nrows(),
            class_order.len()
        )));
    }
    EmbeddingSpace::new(name, rows.t().to_owned(), class_order.to_vec())
}

/// A fitted model with everything needed to reuse it: the class manifest
/// (canonical order), how many of those classes are seen, the weights it
/// was trained with, and the learned matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub class_order: Vec<usize>,
    pub n_seen: usize,
    pub hyperparams: Hyperparams,
    pub model: SrgModel,
}

impl ModelFile {
    pub fn validate(&self) -> Result<()> {
        let k = self.class_order.len();
        if self.n_seen > k {
            return Err(SrgError::ManifestMismatch(format!(
                "n_seen {} exceeds {} classes",
                self.n_seen, k
            )));
        }
        if self.model.coefficients.dim() != (k, k) {
            return Err(SrgError::dim(
                "model coefficient matrix",
                k,
                self.model.coefficients.nrows(),
            ));
        }
        if self.model.synthesized_unseen.ncols() != k - self.n_seen {
            return Err(SrgError::dim(
                "synthesized unseen columns",
                k - self.n_seen,
                self.model.synthesized_unseen.ncols(),
            ));
        }
        for i in 0..k {
            if self.model.coefficients[[i, i]] != 0.0 {
                return Err(SrgError::InvalidParam(format!(
                    "model diagonal entry {i} is nonzero"
                )));
            }
        }
        Ok(())
    }
}

/// Serialize any report as pretty JSON (stable field order, shortest
/// round-trip floats).
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_model(path: &Path, model: &ModelFile) -> Result<()> {
    model.validate()?;
    write_json(path, model)
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    let model: ModelFile = read_json(path)?;
    model.validate()?;
    Ok(model)
}

/// Score table as CSV: `lambda,gamma,fold,accuracy`.
pub fn write_scores_csv(path: &Path, scores: &[ScoreRow]) -> Result<()> {
    let mut out = String::from("lambda,gamma,fold,accuracy\n");
    for row in scores {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.lambda, row.gamma, row.fold, row.accuracy
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Optional display names for classes: one `id name` pair per line.
pub fn read_class_names(path: &Path) -> Result<BTreeMap<usize, String>> {
    let text = fs::read_to_string(path)?;
    let mut names = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (id, name) = trimmed.split_once(char::is_whitespace).ok_or_else(|| {
            SrgError::parse(display(path), format!("line {}: expected 'id name'", i + 1))
        })?;
        let class: usize = id.parse().map_err(|_| {
            SrgError::parse(display(path), format!("line {}: bad class id", i + 1))
        })?;
        names.insert(class, name.trim().to_string());
    }
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    #[test]
    fn csv_matrix_round_trips_bit_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Array2::<f64>::from_shape_fn((7, 3), |_| {
            rng.random_range(-1.0..1.0) * 1e-7 + std::f64::consts::PI
        });
        write_matrix_csv(&path, m.view()).unwrap();
        let back = read_matrix_csv(&path).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn binary_matrix_round_trips_bit_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = array![[1.0e-300, 2.5], [f64::MIN_POSITIVE, -0.0]];
        write_matrix_bin(&path, m.view()).unwrap();
        let back = read_matrix_auto(&path).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "2,3\n1,2,3\n4,5\n").unwrap();
        assert!(matches!(
            read_matrix_csv(&path).unwrap_err(),
            SrgError::Parse { .. }
        ));
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        let labels = vec![0, 5, 2, 2, 9];
        write_labels(&path, &labels).unwrap();
        assert_eq!(read_labels(&path).unwrap(), labels);
    }

    #[test]
    fn split_round_trips_and_validates_sections() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("split.txt");
        write_split(&path, &[0, 1, 4], &[2, 7]).unwrap();
        let (seen, unseen) = read_split(&path).unwrap();
        assert_eq!(seen, vec![0, 1, 4]);
        assert_eq!(unseen, vec![2, 7]);

        fs::write(&path, "3\n[seen]\n1\n").unwrap();
        assert!(matches!(
            read_split(&path).unwrap_err(),
            SrgError::Parse { .. }
        ));
    }

    #[test]
    fn embedding_checks_the_manifest() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        let space = EmbeddingSpace::new(
            "sem",
            array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]],
            vec![0, 1, 2],
        )
        .unwrap();
        write_embedding(&path, &space).unwrap();
        let back = read_embedding(&path, "sem", &[0, 1, 2]).unwrap();
        assert_eq!(back.prototypes(), space.prototypes());

        assert!(matches!(
            read_embedding(&path, "sem", &[0, 1]).unwrap_err(),
            SrgError::ManifestMismatch(_)
        ));
    }

    #[test]
    fn model_file_round_trips_bit_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut coefficients =
            Array2::<f64>::from_shape_fn((4, 4), |_| rng.random_range(-1.0..1.0) / 3.0);
        for i in 0..4 {
            coefficients[[i, i]] = 0.0;
        }
        let model = ModelFile {
            class_order: vec![3, 5, 8, 9],
            n_seen: 3,
            hyperparams: Hyperparams::default(),
            model: SrgModel {
                coefficients,
                synthesized_unseen: Array2::from_shape_fn((6, 1), |_| {
                    rng.random_range(-1.0..1.0) / 7.0
                }),
                loss_trace: vec![3.000000000000001, 2.1e-17],
                converged: true,
            },
        };
        write_model(&path, &model).unwrap();
        let back = read_model(&path).unwrap();
        assert_eq!(back.class_order, model.class_order);
        for (a, b) in model
            .model
            .coefficients
            .iter()
            .zip(back.model.coefficients.iter())
        {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in model
            .model
            .synthesized_unseen
            .iter()
            .zip(back.model.synthesized_unseen.iter())
        {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in model.model.loss_trace.iter().zip(back.model.loss_trace.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn model_validation_rejects_nonzero_diagonal() {
        let model = ModelFile {
            class_order: vec![0, 1],
            n_seen: 1,
            hyperparams: Hyperparams::default(),
            model: SrgModel {
                coefficients: array![[0.1, 0.0], [0.0, 0.0]],
                synthesized_unseen: Array2::zeros((2, 1)),
                loss_trace: vec![],
                converged: true,
            },
        };
        assert!(model.validate().is_err());
    }

    #[test]
    fn identical_models_serialize_to_identical_bytes() {
        let dir = tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        let model = ModelFile {
            class_order: vec![0, 1, 2],
            n_seen: 2,
            hyperparams: Hyperparams::default(),
            model: SrgModel {
                coefficients: Array2::zeros((3, 3)),
                synthesized_unseen: Array2::zeros((2, 1)),
                loss_trace: vec![1.0, 0.5],
                converged: true,
            },
        };
        write_model(&a, &model).unwrap();
        write_model(&b, &model).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn scores_csv_has_header_and_rows() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let scores = vec![
            ScoreRow {
                lambda: 0.01,
                gamma: 0.1,
                fold: 0,
                accuracy: 0.875,
            },
            ScoreRow {
                lambda: 0.01,
                gamma: 0.1,
                fold: 1,
                accuracy: 1.0,
            },
        ];
        write_scores_csv(&path, &scores).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "lambda,gamma,fold,accuracy");
        assert_eq!(lines[1], "0.01,0.1,0,0.875");
    }

    #[test]
    fn class_names_parse() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("names.txt");
        fs::write(&path, "0 beaver\n3 polar bear\n").unwrap();
        let names = read_class_names(&path).unwrap();
        assert_eq!(names[&0], "beaver");
        assert_eq!(names[&3], "polar bear");
    }
}
