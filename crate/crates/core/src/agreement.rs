//! Agreement statistics: the normalized chi-square agreement `a(.)` used by
//! the polarization index, Fleiss' kappa, pairwise Cohen's kappa, and the
//! pairwise agreement network.
//!
//! `a(.)` maps an annotation multiset to `[0, 1]`: 1 for unanimity, 0 for an
//! exactly uniform count distribution. It is `chi2 / (n * (c - 1))` where `n`
//! is the number of annotations present and `c` the category count; for the
//! binary case this reduces to `chi2 / n`, which reproduces all the worked
//! reference values (0.11, 1, 0.04).

use std::collections::BTreeMap;

use serde::Serialize;

use crate::corpus::AnnotationMatrix;
use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::scalar::Scalar;

/// An agreement value together with the number of annotations behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementScore<T> {
    pub value: T,
    pub support: usize,
}

/// Chi-square statistic of per-category counts against the uniform
/// distribution.
pub fn chi_square_uniform<T: Scalar>(counts: &[usize]) -> Result<T> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(Error::EmptyAnnotationSet);
    }
    let c = counts.len();
    let expected = T::from_count(n) / T::from_count(c);
    let mut chi2 = T::zero();
    for &count in counts {
        let diff = T::from_count(count) - expected.clone();
        chi2 = chi2 + diff.clone() * diff / expected.clone();
    }
    Ok(chi2)
}

/// Intra-agreement `a(.)` of an annotation multiset given as per-category
/// counts: `chi2 / (n * (c - 1))`.
pub fn intra_agreement_counts<T: Scalar>(counts: &[usize]) -> Result<AgreementScore<T>> {
    let n: usize = counts.iter().sum();
    if n < 2 {
        return Err(Error::TooFewAnnotations { got: n });
    }
    let c = counts.len();
    let chi2: T = chi_square_uniform(counts)?;
    let norm = T::from_count(n) * T::from_count(c - 1);
    Ok(AgreementScore {
        value: chi2 / norm,
        support: n,
    })
}

/// Intra-agreement of a multiset of category indices.
pub fn intra_agreement<T: Scalar>(
    annotations: &[usize],
    n_categories: usize,
) -> Result<AgreementScore<T>> {
    let mut counts = vec![0usize; n_categories];
    for &a in annotations {
        counts[a] += 1;
    }
    intra_agreement_counts(&counts)
}

/// Fleiss' kappa outcome over a matrix scope.
#[derive(Debug, Clone, Serialize)]
pub struct FleissResult {
    pub kappa: f64,
    pub items_used: usize,
    /// Items with fewer than 2 in-scope annotations, excluded from the
    /// computation.
    pub excluded_items: Vec<String>,
}

/// Fleiss' kappa over the items with at least 2 annotations from the subset
/// (all annotators when `subset` is `None`). Uses the ragged generalization:
/// per-item observed agreement is the pair-agreement fraction, chance
/// agreement comes from the pooled category proportions.
pub fn fleiss_kappa(
    matrix: &AnnotationMatrix,
    subset: Option<&[String]>,
) -> Result<FleissResult> {
    let positions = match subset {
        Some(ids) => matrix.positions_of(ids),
        None => matrix.all_positions(),
    };
    let c = matrix.scheme().len();
    let mut per_item_agreement = Vec::new();
    let mut pooled = vec![0usize; c];
    let mut pooled_total = 0usize;
    let mut excluded = Vec::new();
    for (i, item) in matrix.items().iter().enumerate() {
        let counts = matrix.item_counts(i, &positions);
        let n: usize = counts.iter().sum();
        if n < 2 {
            excluded.push(item.clone());
            continue;
        }
        let agreeing_pairs: usize = counts.iter().map(|&k| k * (k.saturating_sub(1))).sum();
        per_item_agreement.push(agreeing_pairs as f64 / (n * (n - 1)) as f64);
        for (j, &k) in counts.iter().enumerate() {
            pooled[j] += k;
        }
        pooled_total += n;
    }
    if per_item_agreement.is_empty() {
        return Err(Error::NoUsableItems);
    }
    let p_bar: f64 = per_item_agreement.iter().sum::<f64>() / per_item_agreement.len() as f64;
    let p_e: f64 = pooled
        .iter()
        .map(|&k| {
            let p = k as f64 / pooled_total as f64;
            p * p
        })
        .sum();
    if (1.0 - p_e).abs() < f64::EPSILON {
        return Err(Error::DegenerateKappa);
    }
    Ok(FleissResult {
        kappa: (p_bar - p_e) / (1.0 - p_e),
        items_used: per_item_agreement.len(),
        excluded_items: excluded,
    })
}

/// Two-rater Cohen's kappa over the co-annotated items.
pub fn cohen_kappa(matrix: &AnnotationMatrix, annotator_a: &str, annotator_b: &str) -> Result<f64> {
    let ja = matrix
        .annotator_position(annotator_a)
        .ok_or_else(|| Error::Invalid(format!("unknown annotator {annotator_a:?}")))?;
    let jb = matrix
        .annotator_position(annotator_b)
        .ok_or_else(|| Error::Invalid(format!("unknown annotator {annotator_b:?}")))?;
    let c = matrix.scheme().len();
    let mut joint = vec![vec![0usize; c]; c];
    let mut n = 0usize;
    for i in 0..matrix.items().len() {
        let a = matrix.item_annotations(i, &[ja]);
        let b = matrix.item_annotations(i, &[jb]);
        if let (Some(&la), Some(&lb)) = (a.first(), b.first()) {
            joint[la][lb] += 1;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoUsableItems);
    }
    let nf = n as f64;
    let p_o: f64 = (0..c).map(|k| joint[k][k] as f64).sum::<f64>() / nf;
    let p_e: f64 = (0..c)
        .map(|k| {
            let row: usize = joint[k].iter().sum();
            let col: usize = (0..c).map(|r| joint[r][k]).sum();
            (row as f64 / nf) * (col as f64 / nf)
        })
        .sum();
    if (1.0 - p_e).abs() < f64::EPSILON {
        return Err(Error::DegenerateKappa);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Intra-group vs inter-group classification of an annotator pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairTag {
    Intra,
    Inter,
}

/// One entry of the pairwise agreement network.
#[derive(Debug, Clone, Serialize)]
pub struct PairAgreement {
    pub annotator_a: String,
    pub annotator_b: String,
    /// `None` when kappa is undefined for the pair (no co-annotated items or
    /// degenerate chance agreement).
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tag: Option<PairTag>,
}

/// Min/max kappa per tag, the Table-6-style summary.
#[derive(Debug, Clone, Serialize)]
pub struct PairSummary {
    pub min: f64,
    pub max: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairwiseNetwork {
    pub pairs: Vec<PairAgreement>,
    pub summary: BTreeMap<String, PairSummary>,
}

/// Cohen's kappa for every unordered annotator pair; when a partition is
/// given each pair is tagged intra- or inter-group and the summary reports
/// the per-tag range.
pub fn pairwise_network(
    matrix: &AnnotationMatrix,
    partition: Option<&Partition>,
) -> PairwiseNetwork {
    let ids = matrix.annotator_ids();
    let mut pairs = Vec::new();
    for (x, a) in ids.iter().enumerate() {
        for b in ids.iter().skip(x + 1) {
            let kappa = cohen_kappa(matrix, a, b).ok();
            let tag = partition.map(|p| {
                if p.same_group(a, b) {
                    PairTag::Intra
                } else {
                    PairTag::Inter
                }
            });
            pairs.push(PairAgreement {
                annotator_a: a.clone(),
                annotator_b: b.clone(),
                kappa,
                tag,
            });
        }
    }
    let mut summary: BTreeMap<String, PairSummary> = BTreeMap::new();
    for pair in &pairs {
        let Some(kappa) = pair.kappa else { continue };
        let key = match &pair.tag {
            Some(PairTag::Intra) => "intra",
            Some(PairTag::Inter) => "inter",
            None => "all",
        };
        summary
            .entry(key.to_string())
            .and_modify(|s| {
                s.min = s.min.min(kappa);
                s.max = s.max.max(kappa);
                s.pairs += 1;
            })
            .or_insert(PairSummary {
                min: kappa,
                max: kappa,
                pairs: 1,
            });
    }
    PairwiseNetwork { pairs, summary }
}

/// Full agreement report: overall and per-group Fleiss' kappa plus the
/// pairwise network.
#[derive(Debug, Clone, Serialize)]
pub struct AgreementReport {
    pub overall_kappa: Option<f64>,
    pub group_kappas: BTreeMap<String, Option<f64>>,
    pub pairwise: PairwiseNetwork,
    pub excluded_items: Vec<String>,
}

pub fn agreement_report(
    matrix: &AnnotationMatrix,
    partition: Option<&Partition>,
) -> AgreementReport {
    let overall = fleiss_kappa(matrix, None).ok();
    let mut group_kappas = BTreeMap::new();
    if let Some(p) = partition {
        for (w, group) in p.groups().iter().enumerate() {
            let ids: Vec<String> = group.iter().cloned().collect();
            let name = p.group_name(w);
            group_kappas.insert(name, fleiss_kappa(matrix, Some(&ids)).ok().map(|r| r.kappa));
        }
    }
    AgreementReport {
        excluded_items: overall
            .as_ref()
            .map(|r| r.excluded_items.clone())
            .unwrap_or_default(),
        overall_kappa: overall.map(|r| r.kappa),
        group_kappas,
        pairwise: pairwise_network(matrix, partition),
    }
}

impl AgreementReport {
    /// Aligned-text rendering for human reading.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        match self.overall_kappa {
            Some(k) => out.push_str(&format!("overall kappa   {k:.3}\n")),
            None => out.push_str("overall kappa   undefined\n"),
        }
        for (g, k) in &self.group_kappas {
            match k {
                Some(k) => out.push_str(&format!("{g:<15} {k:.3}\n")),
                None => out.push_str(&format!("{g:<15} undefined\n")),
            }
        }
        out.push_str("\npairwise\n");
        for p in &self.pairwise.pairs {
            let tag = match &p.tag {
                Some(PairTag::Intra) => " intra",
                Some(PairTag::Inter) => " inter",
                None => "",
            };
            match p.kappa {
                Some(k) => out.push_str(&format!(
                    "  {:<8} {:<8} {k:>6.3}{tag}\n",
                    p.annotator_a, p.annotator_b
                )),
                None => out.push_str(&format!(
                    "  {:<8} {:<8} absent{tag}\n",
                    p.annotator_a, p.annotator_b
                )),
            }
        }
        for (tag, s) in &self.pairwise.summary {
            out.push_str(&format!(
                "{tag}: min {:.3} max {:.3} over {} pairs\n",
                s.min, s.max, s.pairs
            ));
        }
        out
    }
}
