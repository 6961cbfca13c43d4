//! Per-item polarization index and its aggregates.
//!
//! The P-index of an item combines high intra-group agreement with low
//! overall agreement: `p = (1/k) * sum_w a(G_w) * (1 - a(G))`, where `a(.)`
//! is the normalized chi-square agreement. It is 0 when nobody polarizes
//! (overall unanimity, or every group internally split) and 1 when the
//! groups are each unanimous while the overall counts are exactly uniform.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::agreement::intra_agreement_counts;
use crate::corpus::{AnnotationMatrix, CorpusItem};
use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::scalar::Scalar;

/// Census equality tolerance for p = 1 and p = 0.
pub const CENSUS_TOLERANCE: f64 = 1e-9;

/// Polarization score of one item, with the agreement components it was
/// built from.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationScore<T> {
    pub item_id: String,
    pub p: T,
    pub group_agreements: Vec<T>,
    pub overall_agreement: T,
    /// For binary schemes: indices of the groups whose modal label is the
    /// positive class.
    pub positive_groups: Option<Vec<usize>>,
}

/// P-index from per-group per-category counts. Every group must contribute
/// at least 2 annotations, otherwise the score is undefined.
pub fn p_index_from_counts<T: Scalar>(group_counts: &[Vec<usize>]) -> Result<(T, Vec<T>, T)> {
    let k = group_counts.len();
    if k == 0 {
        return Err(Error::EmptyAnnotationSet);
    }
    let c = group_counts[0].len();
    let mut group_agreements = Vec::with_capacity(k);
    let mut overall = vec![0usize; c];
    for counts in group_counts {
        let score = intra_agreement_counts::<T>(counts)?;
        group_agreements.push(score.value);
        for (j, &n) in counts.iter().enumerate() {
            overall[j] += n;
        }
    }
    let overall_agreement = intra_agreement_counts::<T>(&overall)?.value;
    let sum = group_agreements
        .iter()
        .fold(T::zero(), |acc, a| acc + a.clone());
    let p = sum / T::from_count(k) * (T::one() - overall_agreement.clone());
    Ok((p, group_agreements, overall_agreement))
}

/// P-index of one item of the matrix under a partition.
pub fn p_index<T: Scalar>(
    matrix: &AnnotationMatrix,
    item_idx: usize,
    group_positions: &[Vec<usize>],
) -> Result<PolarizationScore<T>> {
    let group_counts: Vec<Vec<usize>> = group_positions
        .iter()
        .map(|positions| matrix.item_counts(item_idx, positions))
        .collect();
    let (p, group_agreements, overall_agreement) = p_index_from_counts(&group_counts)?;
    let positive_groups = if matrix.scheme().is_binary() {
        let pos = matrix.scheme().positive_index();
        Some(
            group_counts
                .iter()
                .enumerate()
                .filter(|(_, counts)| {
                    let other: usize = counts
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != pos)
                        .map(|(_, &n)| n)
                        .sum();
                    counts[pos] > other
                })
                .map(|(w, _)| w)
                .collect(),
        )
    } else {
        None
    };
    Ok(PolarizationScore {
        item_id: matrix.items()[item_idx].clone(),
        p,
        group_agreements,
        overall_agreement,
        positive_groups,
    })
}

/// P-index for every item; `None` where undefined.
pub fn p_index_all<T: Scalar>(
    matrix: &AnnotationMatrix,
    partition: &Partition,
) -> Vec<Option<PolarizationScore<T>>> {
    let group_positions = partition.group_positions(matrix);
    (0..matrix.items().len())
        .map(|i| p_index(matrix, i, &group_positions).ok())
        .collect()
}

/// Mean P-index over the items where it is defined.
#[derive(Debug, Clone)]
pub struct AverageP<T> {
    pub mean: T,
    pub defined_items: usize,
    pub skipped_items: usize,
}

pub fn average_p_index<T: Scalar>(
    matrix: &AnnotationMatrix,
    partition: &Partition,
) -> Result<AverageP<T>> {
    let scores = p_index_all::<T>(matrix, partition);
    let defined: Vec<&PolarizationScore<T>> = scores.iter().flatten().collect();
    if defined.is_empty() {
        return Err(Error::NoDefinedScores);
    }
    let sum = defined
        .iter()
        .fold(T::zero(), |acc, s| acc + s.p.clone());
    Ok(AverageP {
        mean: sum / T::from_count(defined.len()),
        defined_items: defined.len(),
        skipped_items: scores.len() - defined.len(),
    })
}

/// One row of the polarization ranking.
#[derive(Debug, Clone)]
pub struct RankedItem<T> {
    pub item_id: String,
    /// `None` marks an undefined score; such items sort last.
    pub p: Option<T>,
}

/// Items sorted by P-index (ties by item id ascending), undefined items
/// appended last in id order.
pub fn rank_by_polarization<T: Scalar>(
    matrix: &AnnotationMatrix,
    partition: &Partition,
    descending: bool,
) -> Vec<RankedItem<T>> {
    let scores = p_index_all::<T>(matrix, partition);
    let mut defined: Vec<RankedItem<T>> = Vec::new();
    let mut undefined: Vec<RankedItem<T>> = Vec::new();
    for (item, score) in matrix.items().iter().zip(scores) {
        match score {
            Some(s) => defined.push(RankedItem {
                item_id: item.clone(),
                p: Some(s.p),
            }),
            None => undefined.push(RankedItem {
                item_id: item.clone(),
                p: None,
            }),
        }
    }
    defined.sort_by(|a, b| {
        let pa = a.p.as_ref().unwrap();
        let pb = b.p.as_ref().unwrap();
        let ord = if descending {
            pb.partial_cmp(pa)
        } else {
            pa.partial_cmp(pb)
        };
        ord.unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.item_id.cmp(&b.item_id))
    });
    undefined.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    defined.extend(undefined);
    defined
}

/// Write the ranked TSV `item_id<TAB>p[<TAB>text]`.
pub fn write_ranking_tsv<T: Scalar, W: Write>(
    ranking: &[RankedItem<T>],
    texts: Option<&[CorpusItem]>,
    mut w: W,
) -> Result<()> {
    let text_of: BTreeMap<&str, &str> = texts
        .unwrap_or(&[])
        .iter()
        .map(|t| (t.id.as_str(), t.text.as_str()))
        .collect();
    for row in ranking {
        let p = match &row.p {
            Some(p) => format!("{:.6}", p.to_f64_lossy()),
            None => "undefined".to_string(),
        };
        match texts {
            Some(_) => {
                let text = text_of.get(row.item_id.as_str()).copied().unwrap_or("");
                writeln!(w, "{}\t{}\t{}", row.item_id, p, text)?;
            }
            None => writeln!(w, "{}\t{}", row.item_id, p)?,
        }
    }
    Ok(())
}

/// Counts of maximally and zero-polarized items, with the per-group
/// direction of the positive vote at p = 1.
#[derive(Debug, Clone, Serialize)]
pub struct PolarizationCensus {
    pub defined_items: usize,
    pub undefined_items: usize,
    pub max_polarization: usize,
    pub zero_polarization: usize,
    /// Percentage of defined items at p = 1, rounded to 0.1.
    pub max_polarization_pct: f64,
    /// Percentage of defined items at p = 0, rounded to 0.1.
    pub zero_polarization_pct: f64,
    /// For binary schemes: group name -> number of p = 1 items where that
    /// group held the positive label. For other schemes: `group=label`
    /// modal-label counts over the p = 1 items.
    pub direction: BTreeMap<String, usize>,
}

/// Round a ratio to a percentage with one decimal, e.g. 62/1120 -> 5.5.
pub fn percentage(count: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    (count as f64 / total as f64 * 1000.0).round() / 10.0
}

pub fn polarization_census(
    matrix: &AnnotationMatrix,
    partition: &Partition,
) -> PolarizationCensus {
    let scores = p_index_all::<f64>(matrix, partition);
    let group_positions = partition.group_positions(matrix);
    let mut defined = 0usize;
    let mut undefined = 0usize;
    let mut max_p = 0usize;
    let mut zero_p = 0usize;
    let mut direction: BTreeMap<String, usize> = BTreeMap::new();
    let binary = matrix.scheme().is_binary();
    for (i, score) in scores.iter().enumerate() {
        let Some(score) = score else {
            undefined += 1;
            continue;
        };
        defined += 1;
        if (score.p - 1.0).abs() < CENSUS_TOLERANCE {
            max_p += 1;
            if binary {
                for &w in score.positive_groups.as_deref().unwrap_or(&[]) {
                    *direction.entry(partition.group_name(w)).or_insert(0) += 1;
                }
            } else {
                for (w, positions) in group_positions.iter().enumerate() {
                    let counts = matrix.item_counts(i, positions);
                    let max = *counts.iter().max().unwrap();
                    let modal = counts.iter().position(|&c| c == max).unwrap();
                    let key = format!(
                        "{}={}",
                        partition.group_name(w),
                        matrix.scheme().categories()[modal]
                    );
                    *direction.entry(key).or_insert(0) += 1;
                }
            }
        } else if score.p.abs() < CENSUS_TOLERANCE {
            zero_p += 1;
        }
    }
    PolarizationCensus {
        defined_items: defined,
        undefined_items: undefined,
        max_polarization: max_p,
        zero_polarization: zero_p,
        max_polarization_pct: percentage(max_p, defined),
        zero_polarization_pct: percentage(zero_p, defined),
        direction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelScheme;
    use crate::Exact;
    use num_rational::Ratio;
    use std::collections::BTreeSet;

    fn partition2(g1: &[&str], g2: &[&str]) -> Partition {
        Partition::new(vec![
            g1.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
            g2.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
        ])
        .unwrap()
    }

    /// One-item matrix with explicit per-annotator labels.
    fn one_item(g1: &[&str], g2: &[&str]) -> (AnnotationMatrix, Partition) {
        let mut triples = Vec::new();
        let mut g1_ids = BTreeSet::new();
        let mut g2_ids = BTreeSet::new();
        for (idx, label) in g1.iter().enumerate() {
            let id = format!("a{idx}");
            triples.push(("i1".to_string(), id.clone(), label.to_string()));
            g1_ids.insert(id);
        }
        for (idx, label) in g2.iter().enumerate() {
            let id = format!("b{idx}");
            triples.push(("i1".to_string(), id.clone(), label.to_string()));
            g2_ids.insert(id);
        }
        let m = AnnotationMatrix::from_triples(triples, LabelScheme::binary()).unwrap();
        let p = Partition::new(vec![g1_ids, g2_ids]).unwrap();
        (m, p)
    }

    #[test]
    fn worked_example_one() {
        // G1={1,0,0}, G2={1,1,1} -> p = 40/81
        let (m, p) = one_item(&["1", "0", "0"], &["1", "1", "1"]);
        let score = p_index::<Exact>(&m, 0, &p.group_positions(&m)).unwrap();
        assert_eq!(score.p, Ratio::new(40, 81));
        assert_eq!(score.group_agreements, vec![Ratio::new(1, 9), Ratio::new(1, 1)]);
        assert_eq!(score.overall_agreement, Ratio::new(1, 9));
    }

    #[test]
    fn worked_example_two() {
        // G1={0,0,0}, G2={1,1,1} -> p = 1
        let (m, p) = one_item(&["0", "0", "0"], &["1", "1", "1"]);
        let score = p_index::<Exact>(&m, 0, &p.group_positions(&m)).unwrap();
        assert_eq!(score.p, Ratio::new(1, 1));
    }

    #[test]
    fn worked_example_three() {
        // G1={0,0}, G2={1,0,1} -> p = 24/45
        let (m, p) = one_item(&["0", "0"], &["1", "0", "1"]);
        let score = p_index::<Exact>(&m, 0, &p.group_positions(&m)).unwrap();
        assert_eq!(score.p, Ratio::new(24, 45));
        assert_eq!(score.overall_agreement, Ratio::new(1, 25));
    }

    #[test]
    fn single_annotation_group_undefined() {
        let (m, p) = one_item(&["1"], &["0", "0"]);
        assert!(p_index::<f64>(&m, 0, &p.group_positions(&m)).is_err());
    }

    #[test]
    fn average_p_mean() {
        // item with p = 0 (everyone agrees) and one with p = 1
        let triples = vec![
            ("i1", "a0", "1"), ("i1", "a1", "1"), ("i1", "b0", "1"), ("i1", "b1", "1"),
            ("i2", "a0", "1"), ("i2", "a1", "1"), ("i2", "b0", "0"), ("i2", "b1", "0"),
        ];
        let m = AnnotationMatrix::from_triples(triples, LabelScheme::binary()).unwrap();
        let p = partition2(&["a0", "a1"], &["b0", "b1"]);
        let avg = average_p_index::<f64>(&m, &p).unwrap();
        assert!((avg.mean - 0.5).abs() < 1e-12);
        assert_eq!(avg.defined_items, 2);
    }

    #[test]
    fn all_unanimous_average_zero() {
        let triples = vec![
            ("i1", "a0", "1"), ("i1", "a1", "1"), ("i1", "b0", "1"), ("i1", "b1", "1"),
            ("i2", "a0", "0"), ("i2", "a1", "0"), ("i2", "b0", "0"), ("i2", "b1", "0"),
        ];
        let m = AnnotationMatrix::from_triples(triples, LabelScheme::binary()).unwrap();
        let p = partition2(&["a0", "a1"], &["b0", "b1"]);
        let avg = average_p_index::<Exact>(&m, &p).unwrap();
        assert_eq!(avg.mean, Ratio::new(0, 1));
    }

    #[test]
    fn ranking_tie_break_by_id() {
        // i1 and i3 share p, i2 has p = 1
        let triples = vec![
            ("i1", "a0", "1"), ("i1", "a1", "0"), ("i1", "b0", "1"), ("i1", "b1", "1"),
            ("i2", "a0", "1"), ("i2", "a1", "1"), ("i2", "b0", "0"), ("i2", "b1", "0"),
            ("i3", "a0", "1"), ("i3", "a1", "0"), ("i3", "b0", "1"), ("i3", "b1", "1"),
        ];
        let m = AnnotationMatrix::from_triples(triples, LabelScheme::binary()).unwrap();
        let p = partition2(&["a0", "a1"], &["b0", "b1"]);
        let ranked = rank_by_polarization::<f64>(&m, &p, true);
        let ids: Vec<&str> = ranked.iter().map(|r| r.item_id.as_str()).collect();
        assert_eq!(ids, vec!["i2", "i1", "i3"]);
    }

    #[test]
    fn ranking_all_ties_stable_by_id() {
        let triples = vec![
            ("i2", "a0", "1"), ("i2", "a1", "1"), ("i2", "b0", "1"), ("i2", "b1", "1"),
            ("i1", "a0", "1"), ("i1", "a1", "1"), ("i1", "b0", "1"), ("i1", "b1", "1"),
        ];
        let m = AnnotationMatrix::from_triples(triples, LabelScheme::binary()).unwrap();
        let p = partition2(&["a0", "a1"], &["b0", "b1"]);
        let ranked = rank_by_polarization::<f64>(&m, &p, true);
        let ids: Vec<&str> = ranked.iter().map(|r| r.item_id.as_str()).collect();
        assert_eq!(ids, vec!["i1", "i2"]);
    }

    #[test]
    fn ranking_undefined_appended_last() {
        let triples = vec![
            ("i1", "a0", "1"), ("i1", "a1", "0"), ("i1", "b0", "1"), ("i1", "b1", "1"),
            ("i2", "a0", "1"), ("i2", "b0", "0"), ("i2", "b1", "0"),
        ];
        let m = AnnotationMatrix::from_triples(triples, LabelScheme::binary()).unwrap();
        let p = partition2(&["a0", "a1"], &["b0", "b1"]);
        let ranked = rank_by_polarization::<f64>(&m, &p, true);
        assert_eq!(ranked.last().unwrap().item_id, "i2");
        assert!(ranked.last().unwrap().p.is_none());
    }

    #[test]
    fn census_direction() {
        let triples = vec![
            ("i1", "a0", "0"), ("i1", "a1", "0"), ("i1", "b0", "1"), ("i1", "b1", "1"),
        ];
        let m = AnnotationMatrix::from_triples(triples, LabelScheme::binary()).unwrap();
        let p = partition2(&["a0", "a1"], &["b0", "b1"]);
        let census = polarization_census(&m, &p);
        assert_eq!(census.max_polarization, 1);
        assert_eq!(census.direction.get("group2"), Some(&1));
        assert_eq!(census.direction.get("group1"), None);
    }

    #[test]
    fn census_unanimous_corpus() {
        let triples = vec![
            ("i1", "a0", "1"), ("i1", "a1", "1"), ("i1", "b0", "1"), ("i1", "b1", "1"),
            ("i2", "a0", "0"), ("i2", "a1", "0"), ("i2", "b0", "0"), ("i2", "b1", "0"),
        ];
        let m = AnnotationMatrix::from_triples(triples, LabelScheme::binary()).unwrap();
        let p = partition2(&["a0", "a1"], &["b0", "b1"]);
        let census = polarization_census(&m, &p);
        assert_eq!(census.zero_polarization, 2);
        assert_eq!(census.max_polarization, 0);
    }

    #[test]
    fn census_percentage_rendering() {
        assert_eq!(percentage(62, 1120), 5.5);
        assert_eq!(percentage(40, 168), 23.8);
        assert_eq!(percentage(13, 1120), 1.2);
    }
}
