//! Gold-standard construction by majority voting and seeded train/test splits.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::AnnotationMatrix;
use crate::error::{Error, Result};

/// How a tied majority vote is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiePolicy {
    /// Take the positive class when it is among the tied categories.
    PreferPositive,
    /// Take a tied category other than the positive class.
    PreferNegative,
    /// Re-vote among expert annotators restricted to the tied categories;
    /// a tie among experts is an error.
    PreferExpert,
    /// Any tie is an error.
    Error,
}

impl fmt::Display for TiePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TiePolicy::PreferPositive => "prefer-positive",
            TiePolicy::PreferNegative => "prefer-negative",
            TiePolicy::PreferExpert => "prefer-expert",
            TiePolicy::Error => "error",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for TiePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prefer-positive" => Ok(TiePolicy::PreferPositive),
            "prefer-negative" => Ok(TiePolicy::PreferNegative),
            "prefer-expert" => Ok(TiePolicy::PreferExpert),
            "error" => Ok(TiePolicy::Error),
            other => Err(Error::Invalid(format!("unknown tie policy {other:?}"))),
        }
    }
}

/// Item → aggregated label, with provenance and tie bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldStandard {
    pub labels: BTreeMap<String, String>,
    /// Group id or `"overall"`.
    pub source: String,
    pub tie_policy: Option<TiePolicy>,
    pub tie_count: usize,
    /// Items with no annotation from the source annotators.
    pub excluded: Vec<String>,
}

impl GoldStandard {
    pub fn from_labels<I>(labels: I, source: &str) -> Self
    where
        I: IntoIterator<Item = (String, String)>,
    {
        GoldStandard {
            labels: labels.into_iter().collect(),
            source: source.to_string(),
            tie_policy: None,
            tie_count: 0,
            excluded: Vec::new(),
        }
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.labels.keys().map(|s| s.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Keep only the given item ids.
    pub fn restrict(&self, keep: &HashSet<String>) -> GoldStandard {
        GoldStandard {
            labels: self
                .labels
                .iter()
                .filter(|(id, _)| keep.contains(*id))
                .map(|(id, l)| (id.clone(), l.clone()))
                .collect(),
            source: self.source.clone(),
            tie_policy: self.tie_policy,
            tie_count: self.tie_count,
            excluded: self.excluded.clone(),
        }
    }

    /// Emit the gold CSV (`item_id,label`), sorted by item id.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "item_id,label")?;
        for (id, label) in &self.labels {
            writeln!(w, "{id},{label}")?;
        }
        Ok(())
    }
}

/// Load a gold CSV (`item_id,label`); labels validated against the scheme
/// when one is given. The source is the file stem.
pub fn load_gold_csv(
    path: &std::path::Path,
    scheme: Option<&crate::corpus::LabelScheme>,
) -> Result<GoldStandard> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let source = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "gold".to_string());
    let mut labels = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() < 2 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 2 fields, got {}", rec.len()),
            });
        }
        let label = rec[1].trim().to_string();
        if let Some(s) = scheme {
            if s.index_of(&label).is_none() {
                return Err(Error::UnknownLabel { label, line });
            }
        }
        labels.insert(rec[0].trim().to_string(), label);
    }
    Ok(GoldStandard::from_labels(labels, &source))
}

/// Per-item modal label of the subset's annotations, ties resolved by policy.
pub fn majority_gold(
    matrix: &AnnotationMatrix,
    annotator_subset: &[String],
    tie_policy: TiePolicy,
    source: &str,
) -> Result<GoldStandard> {
    if annotator_subset.is_empty() {
        return Err(Error::Invalid("empty annotator subset".into()));
    }
    let positions = matrix.positions_of(annotator_subset);
    if positions.is_empty() {
        return Err(Error::Invalid(
            "no subset annotator present in the matrix".into(),
        ));
    }
    if tie_policy == TiePolicy::PreferExpert
        && !positions
            .iter()
            .any(|&j| matrix.annotators()[j].expert)
    {
        return Err(Error::NoExpert);
    }
    let scheme = matrix.scheme();
    let mut labels = BTreeMap::new();
    let mut tie_count = 0;
    let mut excluded = Vec::new();
    for (i, item) in matrix.items().iter().enumerate() {
        let counts = matrix.item_counts(i, &positions);
        let n: usize = counts.iter().sum();
        if n == 0 {
            excluded.push(item.clone());
            continue;
        }
        let max = *counts.iter().max().unwrap();
        let tied: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] == max).collect();
        let winner = if tied.len() == 1 {
            tied[0]
        } else {
            tie_count += 1;
            resolve_tie(matrix, i, &positions, &tied, tie_policy, item)?
        };
        labels.insert(item.clone(), scheme.categories()[winner].clone());
    }
    Ok(GoldStandard {
        labels,
        source: source.to_string(),
        tie_policy: Some(tie_policy),
        tie_count,
        excluded,
    })
}

fn resolve_tie(
    matrix: &AnnotationMatrix,
    item_idx: usize,
    positions: &[usize],
    tied: &[usize],
    policy: TiePolicy,
    item: &str,
) -> Result<usize> {
    let scheme = matrix.scheme();
    let positive = scheme.positive_index();
    match policy {
        TiePolicy::PreferPositive => Ok(if tied.contains(&positive) {
            positive
        } else {
            tied[0]
        }),
        TiePolicy::PreferNegative => Ok(*tied
            .iter()
            .find(|&&c| c != positive)
            .unwrap_or(&tied[0])),
        TiePolicy::PreferExpert => {
            let expert_positions: Vec<usize> = positions
                .iter()
                .copied()
                .filter(|&j| matrix.annotators()[j].expert)
                .collect();
            let counts = matrix.item_counts(item_idx, &expert_positions);
            let max = tied.iter().map(|&c| counts[c]).max().unwrap();
            let winners: Vec<usize> = tied
                .iter()
                .copied()
                .filter(|&c| counts[c] == max)
                .collect();
            if max > 0 && winners.len() == 1 {
                Ok(winners[0])
            } else {
                Err(Error::UnresolvedTie {
                    item: item.to_string(),
                    policy: policy.to_string(),
                })
            }
        }
        TiePolicy::Error => Err(Error::UnresolvedTie {
            item: item.to_string(),
            policy: policy.to_string(),
        }),
    }
}

/// Seeded train/test split parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64, stratified: bool) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Invalid(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        Ok(SplitSpec {
            train_fraction,
            seed,
            stratified,
        })
    }
}

/// Deterministic train/test item-id split over a labeled id set.
///
/// Stratified mode shuffles within each class and keeps the class ratio
/// within one item per class.
pub fn split_ids(
    labeled: &BTreeMap<String, String>,
    spec: &SplitSpec,
) -> Result<(Vec<String>, Vec<String>)> {
    let n = labeled.len();
    if n < 2 {
        return Err(Error::TooFewItems { got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    if spec.stratified {
        let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (id, label) in labeled {
            by_class.entry(label).or_default().push(id);
        }
        for ids in by_class.values_mut() {
            ids.shuffle(&mut rng);
            let n_c = ids.len();
            let train_c = split_size(n_c, spec.train_fraction);
            train.extend(ids[..train_c].iter().map(|s| s.to_string()));
            test.extend(ids[train_c..].iter().map(|s| s.to_string()));
        }
    } else {
        let mut ids: Vec<&str> = labeled.keys().map(|s| s.as_str()).collect();
        ids.shuffle(&mut rng);
        let train_n = split_size(n, spec.train_fraction);
        train.extend(ids[..train_n].iter().map(|s| s.to_string()));
        test.extend(ids[train_n..].iter().map(|s| s.to_string()));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn split_size(n: usize, fraction: f64) -> usize {
    let raw = (n as f64 * fraction).round() as usize;
    raw.clamp(if n > 1 { 1 } else { 0 }, n.saturating_sub(1).max(1)).min(n)
}

/// Split a gold standard into train and test gold standards.
pub fn train_test_split(
    gold: &GoldStandard,
    spec: &SplitSpec,
) -> Result<(GoldStandard, GoldStandard)> {
    if spec.stratified {
        let present: HashSet<&str> = gold.labels.values().map(|s| s.as_str()).collect();
        if present.len() < 2 {
            let missing = if present.is_empty() { "all" } else { "other" };
            return Err(Error::MissingClass {
                class: missing.to_string(),
            });
        }
    }
    let (train_ids, test_ids) = split_ids(&gold.labels, spec)?;
    let train_set: HashSet<String> = train_ids.into_iter().collect();
    let test_set: HashSet<String> = test_ids.into_iter().collect();
    Ok((gold.restrict(&train_set), gold.restrict(&test_set)))
}

/// The split manifest persisted next to the gold files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub stratified: bool,
}
