//! Annotator partitions: enumeration of all unordered k-partitions and the
//! exhaustive search for the partition maximizing the average polarization
//! index.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::corpus::AnnotationMatrix;
use crate::error::{Error, Result};
use crate::polarization::average_p_index;

/// Partitions beyond this count require an explicit override to enumerate.
pub const ENUMERATION_GUARD: u128 = 1_000_000;

/// Assignment of annotators to k disjoint non-empty groups.
///
/// Groups are kept in canonical order (sorted by their smallest member) so
/// equality and tie-breaking are well defined.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    groups: Vec<BTreeSet<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl Partition {
    pub fn new(mut groups: Vec<BTreeSet<String>>) -> Result<Self> {
        if groups.iter().any(|g| g.is_empty()) {
            return Err(Error::Invalid("empty partition group".into()));
        }
        let total: usize = groups.iter().map(|g| g.len()).sum();
        let union: BTreeSet<&String> = groups.iter().flatten().collect();
        if union.len() != total {
            return Err(Error::Invalid("partition groups overlap".into()));
        }
        groups.sort_by(|a, b| a.iter().next().cmp(&b.iter().next()));
        Ok(Partition {
            groups,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.groups.len() {
            return Err(Error::Invalid("one label per group required".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Natural partition from annotator group tags; `None` when no annotator
    /// carries a tag.
    pub fn natural(matrix: &AnnotationMatrix) -> Option<Partition> {
        let groups = matrix.natural_groups();
        if groups.is_empty() {
            return None;
        }
        let labels: Vec<String> = groups.iter().map(|(g, _)| g.clone()).collect();
        let sets: Vec<BTreeSet<String>> = groups
            .into_iter()
            .map(|(_, ids)| ids.into_iter().collect())
            .collect();
        // label order must survive canonical group reordering
        let mut pairs: Vec<(BTreeSet<String>, String)> =
            sets.into_iter().zip(labels).collect();
        pairs.sort_by(|a, b| a.0.iter().next().cmp(&b.0.iter().next()));
        let (groups, labels): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        Partition::new(groups)
            .ok()
            .and_then(|p| p.with_labels(labels).ok())
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[BTreeSet<String>] {
        &self.groups
    }

    pub fn group_name(&self, w: usize) -> String {
        match &self.labels {
            Some(labels) => labels[w].clone(),
            None => format!("group{}", w + 1),
        }
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn same_group(&self, a: &str, b: &str) -> bool {
        self.groups
            .iter()
            .any(|g| g.contains(a) && g.contains(b))
    }

    pub fn member_ids(&self) -> Vec<String> {
        self.groups.iter().flatten().cloned().collect()
    }

    /// Sorted member positions per group, for matrix lookups.
    pub fn group_positions(&self, matrix: &AnnotationMatrix) -> Vec<Vec<usize>> {
        self.groups
            .iter()
            .map(|g| {
                let ids: Vec<String> = g.iter().cloned().collect();
                matrix.positions_of(&ids)
            })
            .collect()
    }

    /// Canonical comparison key: the sorted group membership lists.
    pub fn key(&self) -> Vec<Vec<String>> {
        self.groups
            .iter()
            .map(|g| g.iter().cloned().collect())
            .collect()
    }

    /// `group1|group2` rendering for dumps.
    pub fn render(&self) -> String {
        self.groups
            .iter()
            .map(|g| g.iter().cloned().collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// Stirling number of the second kind, saturating; used for the explosion
/// guard before enumeration.
fn stirling2(n: usize, k: usize) -> u128 {
    if k == 0 {
        return (n == 0) as u128;
    }
    let mut row = vec![0u128; k + 1];
    row[0] = 1;
    for _ in 1..=n {
        for j in (1..=k).rev() {
            row[j] = row[j]
                .saturating_mul(j as u128)
                .saturating_add(row[j - 1]);
        }
        row[0] = 0;
    }
    row[k]
}

/// All unordered k-partitions of the annotator set with every group at least
/// `min_size`, in deterministic lexicographic order over sorted annotator ids.
pub fn enumerate_partitions(
    annotators: &[String],
    k: usize,
    min_size: usize,
) -> Result<Vec<Partition>> {
    enumerate_partitions_with_limit(annotators, k, min_size, false)
}

/// As [`enumerate_partitions`], with an override for very large spaces.
pub fn enumerate_partitions_with_limit(
    annotators: &[String],
    k: usize,
    min_size: usize,
    allow_large: bool,
) -> Result<Vec<Partition>> {
    let m = annotators.len();
    if k == 0 {
        return Err(Error::InfeasiblePartition("k must be at least 1".into()));
    }
    if m < k * min_size.max(1) {
        return Err(Error::InfeasiblePartition(format!(
            "{m} annotators cannot form {k} groups of at least {min_size}"
        )));
    }
    let count = stirling2(m, k);
    if count > ENUMERATION_GUARD && !allow_large {
        return Err(Error::PartitionSpaceTooLarge { count });
    }
    let mut ids: Vec<String> = annotators.to_vec();
    ids.sort_unstable();
    // restricted growth strings: element 0 in block 0, each next element in an
    // existing block or the first unused one; each unordered partition once
    let mut assignment = vec![0usize; m];
    let mut out = Vec::new();
    fn recurse(
        ids: &[String],
        pos: usize,
        used: usize,
        k: usize,
        min_size: usize,
        assignment: &mut Vec<usize>,
        out: &mut Vec<Partition>,
    ) {
        let m = ids.len();
        if pos == m {
            if used != k {
                return;
            }
            let mut sizes = vec![0usize; k];
            for &b in assignment.iter() {
                sizes[b] += 1;
            }
            if sizes.iter().any(|&s| s < min_size) {
                return;
            }
            let mut groups = vec![BTreeSet::new(); k];
            for (i, &b) in assignment.iter().enumerate() {
                groups[b].insert(ids[i].clone());
            }
            out.push(Partition::new(groups).expect("valid by construction"));
            return;
        }
        // remaining elements must still be able to open the missing blocks
        let remaining = m - pos;
        let missing = k.saturating_sub(used);
        if remaining < missing {
            return;
        }
        let max_block = (used + 1).min(k);
        for b in 0..max_block {
            assignment[pos] = b;
            let next_used = used.max(b + 1);
            recurse(ids, pos + 1, next_used, k, min_size, assignment, out);
        }
    }
    recurse(&ids, 0, 0, k, min_size, &mut assignment, &mut out);
    Ok(out)
}

/// One scored partition from the exhaustive search.
#[derive(Debug, Clone, Serialize)]
pub struct ScoredPartition {
    pub partition: Partition,
    pub avg_p: f64,
    pub defined_items: usize,
}

/// Result of the exhaustive max-polarization search.
#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    pub best: Partition,
    pub best_avg_p: f64,
    /// Every enumerated partition with its score, best first; partitions with
    /// no defined item carry `avg_p = NaN` and sort last.
    pub ranking: Vec<ScoredPartition>,
}

/// Exhaustively score every partition by average P-index and return the
/// argmax. Ties break toward the lexicographically smallest group-1 set,
/// which the enumeration order provides.
pub fn search_max_polarization(
    matrix: &AnnotationMatrix,
    k: usize,
    min_size: usize,
    allow_large: bool,
) -> Result<SearchResult> {
    let ids = matrix.annotator_ids();
    let partitions = enumerate_partitions_with_limit(&ids, k, min_size, allow_large)?;
    let mut ranking: Vec<ScoredPartition> = Vec::with_capacity(partitions.len());
    for partition in partitions {
        let (avg_p, defined_items) = match average_p_index::<f64>(matrix, &partition) {
            Ok(r) => (r.mean, r.defined_items),
            Err(_) => (f64::NAN, 0),
        };
        ranking.push(ScoredPartition {
            partition,
            avg_p,
            defined_items,
        });
    }
    let best = ranking
        .iter()
        .filter(|s| s.avg_p.is_finite())
        .fold(None::<&ScoredPartition>, |acc, s| match acc {
            Some(cur)
                if s.avg_p > cur.avg_p
                    || (s.avg_p == cur.avg_p && s.partition.key() < cur.partition.key()) =>
            {
                Some(s)
            }
            Some(cur) => Some(cur),
            None => Some(s),
        })
        .cloned()
        .ok_or(Error::NoDefinedScores)?;
    ranking.sort_by(|a, b| {
        // finite scores descending, ties by canonical key, NaN last
        b.avg_p
            .partial_cmp(&a.avg_p)
            .unwrap_or_else(|| a.avg_p.is_nan().cmp(&b.avg_p.is_nan()))
            .then_with(|| a.partition.key().cmp(&b.partition.key()))
    });
    Ok(SearchResult {
        best_avg_p: best.avg_p,
        best: best.partition,
        ranking,
    })
}

/// Natural-vs-searched comparison in the Table-4 layout: the natural
/// partition's score next to the max and min over all other splits.
#[derive(Debug, Clone, Serialize)]
pub struct NaturalComparison {
    pub natural_avg_p: f64,
    pub max_other: Option<f64>,
    pub min_other: Option<f64>,
}

pub fn natural_comparison(
    matrix: &AnnotationMatrix,
    natural: &Partition,
    min_size: usize,
    allow_large: bool,
) -> Result<NaturalComparison> {
    let natural_avg = average_p_index::<f64>(matrix, natural)?.mean;
    let search = search_max_polarization(matrix, natural.k(), min_size, allow_large)?;
    let others: Vec<f64> = search
        .ranking
        .iter()
        .filter(|s| s.avg_p.is_finite() && s.partition.key() != natural.key())
        .map(|s| s.avg_p)
        .collect();
    Ok(NaturalComparison {
        natural_avg_p: natural_avg,
        max_other: others.iter().cloned().fold(None, |m, x| {
            Some(m.map_or(x, |m: f64| m.max(x)))
        }),
        min_other: others.iter().cloned().fold(None, |m, x| {
            Some(m.map_or(x, |m: f64| m.min(x)))
        }),
    })
}
