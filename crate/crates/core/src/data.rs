//! Datasets, embedding spaces, and prototype construction.
//!
//! Every matrix in the pipeline indexes classes the same way: the canonical
//! order is seen class ids ascending, then unseen class ids ascending. The
//! constructors here validate that convention once so downstream numerical
//! code never has to re-check it.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SrgError};

/// Labeled feature matrix plus the seen/unseen class split.
///
/// Hard invariants (checked at construction): the two class lists are
/// disjoint, together they cover every label that appears, and the features
/// are finite. Whether unseen classes may carry samples depends on the role
/// of the dataset; [`Dataset::validate_training`] adds the training-only
/// checks.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    seen_classes: Vec<usize>,
    unseen_classes: Vec<usize>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        mut seen_classes: Vec<usize>,
        mut unseen_classes: Vec<usize>,
    ) -> Result<Self> {
        if labels.len() != features.nrows() {
            return Err(SrgError::dim("labels per sample", features.nrows(), labels.len()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(SrgError::NumericalFailure("dataset features".into()));
        }
        seen_classes.sort_unstable();
        unseen_classes.sort_unstable();
        if seen_classes.windows(2).any(|w| w[0] == w[1])
            || unseen_classes.windows(2).any(|w| w[0] == w[1])
        {
            return Err(SrgError::InvalidParam("duplicate class id in split".into()));
        }
        if seen_classes.iter().any(|c| unseen_classes.binary_search(c).is_ok()) {
            return Err(SrgError::InvalidParam(
                "seen and unseen class sets overlap".into(),
            ));
        }
        for &label in &labels {
            if seen_classes.binary_search(&label).is_err()
                && unseen_classes.binary_search(&label).is_err()
            {
                return Err(SrgError::InvalidParam(format!(
                    "label {label} appears in data but in neither class list"
                )));
            }
        }
        Ok(Dataset {
            features,
            labels,
            seen_classes,
            unseen_classes,
        })
    }

    /// Training-role checks: every seen class has at least one sample and no
    /// unseen class has any.
    pub fn validate_training(&self) -> Result<()> {
        for &c in &self.seen_classes {
            if !self.labels.contains(&c) {
                return Err(SrgError::EmptyClass(c));
            }
        }
        if let Some(&l) = self
            .labels
            .iter()
            .find(|&&l| self.unseen_classes.binary_search(&l).is_ok())
        {
            return Err(SrgError::InvalidParam(format!(
                "unseen class {l} has training samples"
            )));
        }
        Ok(())
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn seen_classes(&self) -> &[usize] {
        &self.seen_classes
    }

    pub fn unseen_classes(&self) -> &[usize] {
        &self.unseen_classes
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Canonical class order: seen ascending, then unseen ascending.
    pub fn class_order(&self) -> Vec<usize> {
        let mut order = self.seen_classes.clone();
        order.extend_from_slice(&self.unseen_classes);
        order
    }

    /// Row indices of all samples labeled `class`, in row order.
    pub fn samples_of(&self, class: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_seen(&self, class: usize) -> bool {
        self.seen_classes.binary_search(&class).is_ok()
    }
}

/// A named matrix of per-class prototype vectors, one column per class in
/// canonical order. `class_order` is the manifest that lets independent
/// spaces verify they line up column-for-column.
#[derive(Debug, Clone)]
pub struct EmbeddingSpace {
    name: String,
    prototypes: Array2<f64>,
    class_order: Vec<usize>,
}

impl EmbeddingSpace {
    pub fn new(
        name: impl Into<String>,
        prototypes: Array2<f64>,
        class_order: Vec<usize>,
    ) -> Result<Self> {
        let name = name.into();
        if prototypes.ncols() != class_order.len() {
            return Err(SrgError::dim(
                format!("columns of space '{name}'"),
                class_order.len(),
                prototypes.ncols(),
            ));
        }
        if prototypes.iter().any(|v| !v.is_finite()) {
            return Err(SrgError::NumericalFailure(format!("space '{name}'")));
        }
        Ok(EmbeddingSpace {
            name,
            prototypes,
            class_order,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// p x K matrix, one column per class.
    pub fn prototypes(&self) -> &Array2<f64> {
        &self.prototypes
    }

    pub fn class_order(&self) -> &[usize] {
        &self.class_order
    }

    pub fn n_classes(&self) -> usize {
        self.class_order.len()
    }

    pub fn dim(&self) -> usize {
        self.prototypes.nrows()
    }

    /// Column index of a class id, if present.
    pub fn position_of(&self, class: usize) -> Option<usize> {
        self.class_order.iter().position(|&c| c == class)
    }

    pub fn column_of_class(&self, class: usize) -> Result<ArrayView1<'_, f64>> {
        let pos = self
            .position_of(class)
            .ok_or(SrgError::MissingPrototype(class))?;
        Ok(self.prototypes.column(pos))
    }

    /// Sub-space restricted to `classes`, columns in the given order.
    pub fn restrict(&self, classes: &[usize]) -> Result<EmbeddingSpace> {
        let mut cols = Vec::with_capacity(classes.len());
        for &c in classes {
            cols.push(self.position_of(c).ok_or(SrgError::MissingPrototype(c))?);
        }
        let prototypes = self.prototypes.select(Axis(1), &cols);
        EmbeddingSpace::new(self.name.clone(), prototypes, classes.to_vec())
    }
}

/// Image prototypes split into the seen block and the (possibly still empty)
/// unseen block.
#[derive(Debug, Clone)]
pub struct PrototypePartition {
    pub seen: Array2<f64>,
    pub unseen: Array2<f64>,
}

impl PrototypePartition {
    /// `[seen | unseen]`, the full d x K prototype matrix.
    pub fn full(&self) -> Array2<f64> {
        if self.unseen.ncols() == 0 {
            return self.seen.clone();
        }
        ndarray::concatenate(Axis(1), &[self.seen.view(), self.unseen.view()])
            .expect("seen and unseen blocks share their row count")
    }
}

/// Per-class mean of the training features, one column per seen class in
/// canonical order. The unseen block is an empty placeholder until the
/// graph synthesizes it.
pub fn compute_prototypes(dataset: &Dataset) -> Result<PrototypePartition> {
    let d = dataset.dim();
    let mut seen = Array2::zeros((d, dataset.seen_classes().len()));
    for (j, &class) in dataset.seen_classes().iter().enumerate() {
        let rows = dataset.samples_of(class);
        if rows.is_empty() {
            return Err(SrgError::EmptyClass(class));
        }
        let mut mean = Array1::<f64>::zeros(d);
        for &r in &rows {
            mean += &dataset.features().row(r);
        }
        mean /= rows.len() as f64;
        seen.column_mut(j).assign(&mean);
    }
    Ok(PrototypePartition {
        seen,
        unseen: Array2::zeros((d, 0)),
    })
}

/// Scale every column of `m` to unit Euclidean norm in place.
/// Errors with the offending class id when a column has zero norm.
pub fn normalize_columns(m: &mut Array2<f64>, class_order: &[usize], space: &str) -> Result<()> {
    for (j, mut col) in m.columns_mut().into_iter().enumerate() {
        let norm = col.dot(&col).sqrt();
        if norm == 0.0 {
            return Err(SrgError::ZeroColumn {
                class: class_order.get(j).copied().unwrap_or(j),
                space: space.to_string(),
            });
        }
        col /= norm;
    }
    Ok(())
}

/// Fuse several embedding spaces into one: each input's columns are scaled
/// to unit norm, then the spaces are stacked vertically. Inputs must agree
/// on class order; the output dimension is the sum of the input dimensions.
pub fn fuse_embeddings(spaces: &[EmbeddingSpace]) -> Result<EmbeddingSpace> {
    let first = spaces.first().ok_or(SrgError::EmptyCandidateSet)?;
    let order = first.class_order().to_vec();
    for s in spaces.iter().skip(1) {
        if s.class_order() != order.as_slice() {
            return Err(SrgError::ClassOrderMismatch);
        }
    }
    let total_dim: usize = spaces.iter().map(|s| s.dim()).sum();
    let mut fused = Array2::zeros((total_dim, order.len()));
    let mut row = 0;
    for s in spaces {
        let mut block = s.prototypes().clone();
        normalize_columns(&mut block, &order, s.name())?;
        fused
            .slice_mut(ndarray::s![row..row + s.dim(), ..])
            .assign(&block);
        row += s.dim();
    }
    let name = spaces
        .iter()
        .map(|s| s.name())
        .collect::<Vec<_>>()
        .join("+");
    EmbeddingSpace::new(name, fused, order)
}

/// How much of each seen class to keep when subsampling.
#[derive(Debug, Clone, Copy)]
pub enum Subsample {
    /// Keep `ceil(fraction * n_k)` samples; fraction must be in (0, 1].
    Fraction(f64),
    /// Keep `min(count, n_k)` samples; count must be at least 1.
    Count(usize),
}

/// Uniformly subsample every seen class, deterministically under `seed`.
/// Rows of non-seen classes are kept untouched; retained rows stay in their
/// original order.
pub fn subsample_per_class(dataset: &Dataset, amount: Subsample, seed: u64) -> Result<Dataset> {
    match amount {
        Subsample::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(SrgError::InvalidParam(format!(
                "subsample fraction must be in (0, 1], got {f}"
            )));
        }
        Subsample::Count(0) => {
            return Err(SrgError::InvalidParam(
                "subsample count must be at least 1".into(),
            ));
        }
        _ => {}
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = dataset
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, &l)| !dataset.is_seen(l))
        .map(|(i, _)| i)
        .collect();
    for &class in dataset.seen_classes() {
        let rows = dataset.samples_of(class);
        let n_k = rows.len();
        if n_k == 0 {
            continue;
        }
        let take = match amount {
            Subsample::Fraction(f) => ((f * n_k as f64).ceil() as usize).clamp(1, n_k),
            Subsample::Count(c) => c.min(n_k),
        };
        let chosen = sample(&mut rng, n_k, take);
        keep.extend(chosen.iter().map(|i| rows[i]));
    }
    keep.sort_unstable();
    let features = dataset.features().select(Axis(0), &keep);
    let labels = keep.iter().map(|&i| dataset.labels()[i]).collect();
    Dataset::new(
        features,
        labels,
        dataset.seen_classes().to_vec(),
        dataset.unseen_classes().to_vec(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn tiny_dataset() -> Dataset {
        // classes 0 and 1 seen, 2 unseen
        let features = array![[0.0, 0.0], [2.0, 2.0], [2.0, 4.0]];
        Dataset::new(features, vec![0, 0, 1], vec![0, 1], vec![2]).unwrap()
    }

    #[test]
    fn rejects_overlapping_split() {
        let features = array![[1.0]];
        let err = Dataset::new(features, vec![0], vec![0, 1], vec![1]).unwrap_err();
        assert!(matches!(err, SrgError::InvalidParam(_)));
    }

    #[test]
    fn rejects_uncovered_label() {
        let features = array![[1.0]];
        let err = Dataset::new(features, vec![7], vec![0], vec![1]).unwrap_err();
        assert!(matches!(err, SrgError::InvalidParam(_)));
    }

    #[test]
    fn rejects_nonfinite_features() {
        let features = array![[f64::NAN]];
        let err = Dataset::new(features, vec![0], vec![0], vec![]).unwrap_err();
        assert!(matches!(err, SrgError::NumericalFailure(_)));
    }

    #[test]
    fn training_validation_flags_empty_seen_class() {
        let features = array![[1.0]];
        let ds = Dataset::new(features, vec![0], vec![0, 5], vec![]).unwrap();
        let err = ds.validate_training().unwrap_err();
        assert!(matches!(err, SrgError::EmptyClass(5)));
    }

    #[test]
    fn single_sample_prototype_is_the_sample() {
        let features = array![[2.0, 4.0]];
        let ds = Dataset::new(features, vec![3], vec![3], vec![]).unwrap();
        let p = compute_prototypes(&ds).unwrap();
        assert_eq!(p.seen.column(0).to_vec(), vec![2.0, 4.0]);
        assert_eq!(p.unseen.ncols(), 0);
    }

    #[test]
    fn two_sample_prototype_is_midpoint() {
        let ds = tiny_dataset();
        let p = compute_prototypes(&ds).unwrap();
        assert_eq!(p.seen.column(0).to_vec(), vec![1.0, 1.0]);
        assert_eq!(p.seen.column(1).to_vec(), vec![2.0, 4.0]);
    }

    #[test]
    fn prototypes_match_mean_oracle() {
        // 3 classes, 5 samples each, 4 dims, against an independently coded
        // column-mean.
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for class in 0..3usize {
            for _ in 0..5 {
                rows.push([(); 4].map(|_| rng.random_range(-1.0..1.0)));
                labels.push(class);
            }
        }
        let features =
            Array2::from_shape_vec((15, 4), rows.iter().flatten().copied().collect()).unwrap();
        let ds = Dataset::new(features.clone(), labels.clone(), vec![0, 1, 2], vec![]).unwrap();
        let p = compute_prototypes(&ds).unwrap();
        for class in 0..3usize {
            for dim in 0..4usize {
                let mut acc = 0.0;
                let mut n = 0.0;
                for (i, &l) in labels.iter().enumerate() {
                    if l == class {
                        acc += features[[i, dim]];
                        n += 1.0;
                    }
                }
                assert_abs_diff_eq!(p.seen[[dim, class]], acc / n, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fuse_two_one_dim_spaces() {
        let a = EmbeddingSpace::new("a", array![[2.0]], vec![0]).unwrap();
        let b = EmbeddingSpace::new("b", array![[3.0]], vec![0]).unwrap();
        let fused = fuse_embeddings(&[a, b]).unwrap();
        assert_eq!(fused.prototypes().column(0).to_vec(), vec![1.0, 1.0]);
        assert_eq!(fused.name(), "a+b");
    }

    #[test]
    fn fuse_detects_order_mismatch() {
        let a = EmbeddingSpace::new("a", array![[1.0, 2.0]], vec![0, 1]).unwrap();
        let b = EmbeddingSpace::new("b", array![[1.0, 2.0]], vec![1, 0]).unwrap();
        assert!(matches!(
            fuse_embeddings(&[a, b]).unwrap_err(),
            SrgError::ClassOrderMismatch
        ));
    }

    #[test]
    fn fuse_reports_zero_column() {
        let a = EmbeddingSpace::new("a", array![[1.0, 0.0]], vec![4, 9]).unwrap();
        let err = fuse_embeddings(&[a]).unwrap_err();
        match err {
            SrgError::ZeroColumn { class, space } => {
                assert_eq!(class, 9);
                assert_eq!(space, "a");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn fused_blocks_have_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        use rand::Rng;
        let a = Array2::from_shape_fn((3, 4), |_| rng.random_range(-2.0..2.0));
        let b = Array2::from_shape_fn((5, 4), |_| rng.random_range(-2.0..2.0));
        let sa = EmbeddingSpace::new("a", a, vec![0, 1, 2, 3]).unwrap();
        let sb = EmbeddingSpace::new("b", b, vec![0, 1, 2, 3]).unwrap();
        let fused = fuse_embeddings(&[sa, sb]).unwrap();
        for col in fused.prototypes().columns() {
            let block_a = col.slice(ndarray::s![..3]);
            let block_b = col.slice(ndarray::s![3..]);
            assert_abs_diff_eq!(block_a.dot(&block_a).sqrt(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(block_b.dot(&block_b).sqrt(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn subsample_identity_at_full_fraction() {
        let ds = tiny_dataset();
        let out = subsample_per_class(&ds, Subsample::Fraction(1.0), 3).unwrap();
        assert_eq!(out.features(), ds.features());
        assert_eq!(out.labels(), ds.labels());
    }

    #[test]
    fn subsample_count_one_keeps_one_row() {
        let features = Array2::from_shape_fn((10, 2), |(i, j)| (i * 2 + j) as f64);
        let ds = Dataset::new(features, vec![5; 10], vec![5], vec![]).unwrap();
        let out = subsample_per_class(&ds, Subsample::Count(1), 0).unwrap();
        assert_eq!(out.n_samples(), 1);
    }

    #[test]
    fn subsample_fraction_is_deterministic_and_ceiled() {
        let features = Array2::from_shape_fn((17, 1), |(i, _)| i as f64);
        let labels: Vec<usize> = (0..17).map(|i| if i < 10 { 0 } else { 1 }).collect();
        let ds = Dataset::new(features, labels, vec![0, 1], vec![]).unwrap();
        let a = subsample_per_class(&ds, Subsample::Fraction(0.3), 42).unwrap();
        let b = subsample_per_class(&ds, Subsample::Fraction(0.3), 42).unwrap();
        assert_eq!(a.samples_of(0).len(), 3); // ceil(0.3 * 10)
        assert_eq!(a.samples_of(1).len(), 3); // ceil(0.3 * 7)
        assert_eq!(a.features(), b.features());
        assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn restrict_selects_and_reorders() {
        let s = EmbeddingSpace::new("s", array![[1.0, 2.0, 3.0]], vec![10, 20, 30]).unwrap();
        let r = s.restrict(&[30, 10]).unwrap();
        assert_eq!(r.prototypes().row(0).to_vec(), vec![3.0, 1.0]);
        assert_eq!(r.class_order(), &[30, 10]);
    }

    proptest! {
        #[test]
        fn prototype_stays_in_coordinate_hull(
            rows in proptest::collection::vec(
                proptest::collection::vec(-100.0f64..100.0, 3), 1..20)
        ) {
            let n = rows.len();
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let features = Array2::from_shape_vec((n, 3), flat).unwrap();
            let ds = Dataset::new(features.clone(), vec![0; n], vec![0], vec![]).unwrap();
            let p = compute_prototypes(&ds).unwrap();
            for dim in 0..3 {
                let col = features.column(dim);
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(p.seen[[dim, 0]] >= lo - 1e-9 && p.seen[[dim, 0]] <= hi + 1e-9);
            }
        }

        #[test]
        fn prototypes_ignore_sample_order(perm_seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let features = Array2::from_shape_fn((12, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
            let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
            let ds = Dataset::new(features.clone(), labels.clone(), vec![0, 1, 2], vec![]).unwrap();
            let base = compute_prototypes(&ds).unwrap();

            let mut idx: Vec<usize> = (0..12).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
            idx.shuffle(&mut rng);
            let shuffled = features.select(Axis(0), &idx);
            let shuffled_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let ds2 = Dataset::new(shuffled, shuffled_labels, vec![0, 1, 2], vec![]).unwrap();
            let permuted = compute_prototypes(&ds2).unwrap();

            for (a, b) in base.seen.iter().zip(permuted.seen.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
