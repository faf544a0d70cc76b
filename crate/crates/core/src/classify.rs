//! Nearest-prototype classification and the zero-shot evaluation metrics.
//!
//! A test instance is assigned the class of its nearest prototype column;
//! squared Euclidean distance is used since it preserves the argmin. Under
//! the conventional protocol the candidates are the unseen classes only;
//! under the generalized protocol every class competes.

use std::collections::BTreeMap;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EmbeddingSpace};
use crate::error::{Result, SrgError};
use crate::parallel::map_indexed;

/// Which label set test instances are classified into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Unseen test instances against unseen prototypes only.
    Zsl,
    /// Any test instance against the union of seen and unseen prototypes.
    Gzsl,
}

/// Accuracy metrics of one evaluation run. Fields that a protocol does not
/// produce stay `None` (the conventional protocol fills only `u_to_u` and
/// `top_k`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Unseen instances classified among unseen classes.
    pub u_to_u: Option<f64>,
    /// Seen instances classified among seen classes.
    pub s_to_s: Option<f64>,
    /// Unseen instances classified among all classes.
    pub u_to_tau: Option<f64>,
    /// Seen instances classified among all classes.
    pub s_to_tau: Option<f64>,
    /// k -> fraction of instances whose true label is within the k nearest
    /// prototypes of the protocol's full candidate set.
    pub top_k: BTreeMap<usize, f64>,
    /// True class -> accuracy of its instances on the protocol's full
    /// candidate set.
    pub per_class_accuracy: BTreeMap<usize, f64>,
}

/// Evaluation switches: which top-k values to report and whether headline
/// metrics average per sample (default) or per class.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    pub per_class_mean: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ks: vec![1, 5],
            per_class_mean: false,
        }
    }
}

/// Index of the candidate column nearest to `instance`; ties go to the
/// candidate with the smallest class id.
fn nearest(
    instance: ArrayView1<'_, f64>,
    prototypes: &EmbeddingSpace,
    candidates: &[usize],
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(SrgError::EmptyCandidateSet);
    }
    if instance.len() != prototypes.dim() {
        return Err(SrgError::dim(
            "instance dimension",
            prototypes.dim(),
            instance.len(),
        ));
    }
    let mut best: Option<(f64, usize)> = None;
    for &class in candidates {
        let col = prototypes.column_of_class(class)?;
        let diff = &instance - &col;
        let dist = diff.dot(&diff);
        best = match best {
            None => Some((dist, class)),
            Some((bd, bc)) if dist < bd || (dist == bd && class < bc) => Some((dist, class)),
            keep => keep,
        };
    }
    Ok(best.expect("candidate set is non-empty").1)
}

/// Classify one instance among an explicit candidate label set.
pub fn classify(
    instance: ArrayView1<'_, f64>,
    prototypes: &EmbeddingSpace,
    candidates: &[usize],
) -> Result<usize> {
    nearest(instance, prototypes, candidates)
}

/// Classify one instance among every class the space covers.
pub fn classify_gzsl(instance: ArrayView1<'_, f64>, prototypes: &EmbeddingSpace) -> Result<usize> {
    nearest(instance, prototypes, prototypes.class_order())
}

/// Candidate classes sorted by distance (ascending), ties by class id.
/// Used for top-k accuracy.
pub fn rank_candidates(
    instance: ArrayView1<'_, f64>,
    prototypes: &EmbeddingSpace,
    candidates: &[usize],
) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(SrgError::EmptyCandidateSet);
    }
    let mut scored = Vec::with_capacity(candidates.len());
    for &class in candidates {
        let col = prototypes.column_of_class(class)?;
        let diff = &instance - &col;
        scored.push((diff.dot(&diff), class));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().map(|(_, c)| c).collect())
}

fn accuracy(hits: &[(usize, bool)], per_class_mean: bool) -> Option<f64> {
    if hits.is_empty() {
        return None;
    }
    if per_class_mean {
        let mut per_class: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for &(class, hit) in hits {
            let entry = per_class.entry(class).or_insert((0, 0));
            entry.0 += hit as usize;
            entry.1 += 1;
        }
        let sum: f64 = per_class
            .values()
            .map(|&(h, n)| h as f64 / n as f64)
            .sum();
        Some(sum / per_class.len() as f64)
    } else {
        Some(hits.iter().filter(|(_, hit)| *hit).count() as f64 / hits.len() as f64)
    }
}

/// Evaluate a labeled test set against the model's image prototypes.
///
/// Every test label must have a prototype column for the candidate sets it
/// participates in. Top-k counts a hit when the true label ranks within the
/// k nearest prototypes of the protocol's full candidate set.
pub fn evaluate(
    test: &Dataset,
    prototypes: &EmbeddingSpace,
    protocol: Protocol,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let seen: Vec<usize> = test.seen_classes().to_vec();
    let unseen: Vec<usize> = test.unseen_classes().to_vec();
    let all: Vec<usize> = prototypes.class_order().to_vec();

    struct SampleOutcome {
        class: usize,
        is_unseen: bool,
        restricted_hit: Option<bool>,
        /// rank of the true label in the protocol's full candidate set;
        /// `None` for seen samples under the conventional protocol, which
        /// only scores unseen instances
        full_rank: Option<usize>,
    }

    let outcomes = map_indexed(test.n_samples(), |i| -> Result<SampleOutcome> {
        let instance = test.features().row(i);
        let class = test.labels()[i];
        let is_unseen = !test.is_seen(class);
        // restricted task: unseen -> unseen, or seen -> seen (gzsl only)
        let restricted_hit = match (protocol, is_unseen) {
            (_, true) => Some(nearest(instance, prototypes, &unseen)? == class),
            (Protocol::Gzsl, false) => Some(nearest(instance, prototypes, &seen)? == class),
            (Protocol::Zsl, false) => None,
        };
        let full: Option<&[usize]> = match (protocol, is_unseen) {
            (Protocol::Zsl, true) => Some(&unseen),
            (Protocol::Zsl, false) => None,
            (Protocol::Gzsl, _) => Some(&all),
        };
        let full_rank = match full {
            Some(candidates) => {
                let ranking = rank_candidates(instance, prototypes, candidates)?;
                Some(
                    ranking
                        .iter()
                        .position(|&c| c == class)
                        .ok_or(SrgError::MissingPrototype(class))?,
                )
            }
            None => None,
        };
        Ok(SampleOutcome {
            class,
            is_unseen,
            restricted_hit,
            full_rank,
        })
    });

    let mut u_restricted: Vec<(usize, bool)> = Vec::new();
    let mut s_restricted: Vec<(usize, bool)> = Vec::new();
    let mut u_full: Vec<(usize, bool)> = Vec::new();
    let mut s_full: Vec<(usize, bool)> = Vec::new();
    let mut full_ranks: Vec<(usize, usize)> = Vec::new();

    for outcome in outcomes {
        let o = outcome?;
        if let Some(hit) = o.restricted_hit {
            if o.is_unseen {
                u_restricted.push((o.class, hit));
            } else {
                s_restricted.push((o.class, hit));
            }
        }
        if let Some(rank) = o.full_rank {
            if o.is_unseen {
                u_full.push((o.class, rank == 0));
            } else {
                s_full.push((o.class, rank == 0));
            }
            full_ranks.push((o.class, rank));
        }
    }

    if full_ranks.is_empty() {
        return Err(SrgError::InvalidParam(
            "test set has no instances for the selected protocol".into(),
        ));
    }

    let mut top_k = BTreeMap::new();
    for &k in &options.ks {
        if k == 0 {
            return Err(SrgError::InvalidParam("top-k requires k >= 1".into()));
        }
        let hits: Vec<(usize, bool)> = full_ranks
            .iter()
            .map(|&(class, rank)| (class, rank < k))
            .collect();
        top_k.insert(k, accuracy(&hits, options.per_class_mean).unwrap_or(0.0));
    }

    let full_hits: Vec<(usize, bool)> = full_ranks
        .iter()
        .map(|&(class, rank)| (class, rank == 0))
        .collect();
    let mut per_class_accuracy = BTreeMap::new();
    {
        let mut grouped: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for &(class, hit) in &full_hits {
            let entry = grouped.entry(class).or_insert((0, 0));
            entry.0 += hit as usize;
            entry.1 += 1;
        }
        for (class, (h, n)) in grouped {
            per_class_accuracy.insert(class, h as f64 / n as f64);
        }
    }

    let report = match protocol {
        Protocol::Zsl => EvalReport {
            u_to_u: accuracy(&u_restricted, options.per_class_mean),
            s_to_s: None,
            u_to_tau: None,
            s_to_tau: None,
            top_k,
            per_class_accuracy,
        },
        Protocol::Gzsl => EvalReport {
            u_to_u: accuracy(&u_restricted, options.per_class_mean),
            s_to_s: accuracy(&s_restricted, options.per_class_mean),
            u_to_tau: accuracy(&u_full, options.per_class_mean),
            s_to_tau: accuracy(&s_full, options.per_class_mean),
            top_k,
            per_class_accuracy,
        },
    };
    Ok(report)
}

impl EvalReport {
    /// Aligned text table, one metric per row.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let fmt = |v: Option<f64>| match v {
            Some(a) => format!("{:.4}", a),
            None => "-".to_string(),
        };
        out.push_str("metric      accuracy\n");
        out.push_str(&format!("u->u        {}\n", fmt(self.u_to_u)));
        out.push_str(&format!("s->s        {}\n", fmt(self.s_to_s)));
        out.push_str(&format!("u->tau      {}\n", fmt(self.u_to_tau)));
        out.push_str(&format!("s->tau      {}\n", fmt(self.s_to_tau)));
        for (k, v) in &self.top_k {
            out.push_str(&format!("top-{:<7} {:.4}\n", k, v));
        }
        out
    }
}
