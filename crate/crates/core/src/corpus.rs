//! Corpus and annotation-matrix loading, cleaning and description.
//!
//! Owns all file-format parsing: the long CSV annotation format
//! (`item_id,annotator_id,label`), the wide TSV format
//! (`item_id<TAB>text<TAB><annotator>...`, empty cell = missing), the
//! JSON-lines text companion, and the optional annotator metadata CSV
//! (`annotator_id,group,expert`).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goldstd::GoldStandard;

/// A single text item of the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl CorpusItem {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        CorpusItem {
            id: id.into(),
            text: text.into(),
            meta: BTreeMap::new(),
        }
    }
}

/// The categorical label scheme, with one category designated as the
/// positive (detection) class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    categories: Vec<String>,
    positive: String,
}

impl LabelScheme {
    pub fn new(categories: Vec<String>, positive: &str) -> Result<Self> {
        if categories.len() < 2 {
            return Err(Error::Invalid("scheme needs at least 2 categories".into()));
        }
        let set: HashSet<&String> = categories.iter().collect();
        if set.len() != categories.len() {
            return Err(Error::Invalid("scheme categories must be distinct".into()));
        }
        if !categories.iter().any(|c| c == positive) {
            return Err(Error::Invalid(format!(
                "positive class {positive:?} not among categories"
            )));
        }
        Ok(LabelScheme {
            categories,
            positive: positive.to_string(),
        })
    }

    /// The default binary scheme `{0, 1}` with `1` positive.
    pub fn binary() -> Self {
        LabelScheme {
            categories: vec!["0".into(), "1".into()],
            positive: "1".into(),
        }
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn positive(&self) -> &str {
        &self.positive
    }

    pub fn positive_index(&self) -> usize {
        self.index_of(&self.positive).unwrap()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == label)
    }

    pub fn is_binary(&self) -> bool {
        self.categories.len() == 2
    }
}

/// An annotator, with optional natural-group tag and expert flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotator {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default)]
    pub expert: bool,
}

impl Annotator {
    pub fn new(id: impl Into<String>) -> Self {
        Annotator {
            id: id.into(),
            group: None,
            expert: false,
        }
    }
}

/// Items × annotators categorical label grid with missing cells.
///
/// Cell values index into the scheme's category list. Items keep first-seen
/// order; annotators are kept sorted by id so emission is deterministic.
#[derive(Debug, Clone)]
pub struct AnnotationMatrix {
    scheme: LabelScheme,
    items: Vec<String>,
    item_index: HashMap<String, usize>,
    annotators: Vec<Annotator>,
    annotator_index: HashMap<String, usize>,
    /// `cells[item][annotator]` = category index or `None` for MISSING.
    cells: Vec<Vec<Option<usize>>>,
}

impl PartialEq for AnnotationMatrix {
    fn eq(&self, other: &Self) -> bool {
        // Content equality: same scheme, same item/annotator sets, same cells.
        if self.scheme != other.scheme {
            return false;
        }
        let a: BTreeMap<(&str, &str), usize> = self.triples().collect();
        let b: BTreeMap<(&str, &str), usize> = other.triples().collect();
        let mut sa: Vec<&str> = self.items.iter().map(|s| s.as_str()).collect();
        let mut sb: Vec<&str> = other.items.iter().map(|s| s.as_str()).collect();
        sa.sort_unstable();
        sb.sort_unstable();
        a == b && sa == sb
    }
}

impl AnnotationMatrix {
    /// Build a matrix from `(item_id, annotator_id, label)` triples.
    pub fn from_triples<I, S1, S2, S3>(triples: I, scheme: LabelScheme) -> Result<Self>
    where
        I: IntoIterator<Item = (S1, S2, S3)>,
        S1: AsRef<str>,
        S2: AsRef<str>,
        S3: AsRef<str>,
    {
        let mut builder = MatrixBuilder::new(scheme);
        for (line, (item, annotator, label)) in triples.into_iter().enumerate() {
            builder.push(
                item.as_ref(),
                annotator.as_ref(),
                label.as_ref(),
                line as u64 + 1,
            )?;
        }
        builder.finish()
    }

    pub fn scheme(&self) -> &LabelScheme {
        &self.scheme
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn annotators(&self) -> &[Annotator] {
        &self.annotators
    }

    pub fn annotator_ids(&self) -> Vec<String> {
        self.annotators.iter().map(|a| a.id.clone()).collect()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_index.get(id).copied()
    }

    pub fn annotator_position(&self, id: &str) -> Option<usize> {
        self.annotator_index.get(id).copied()
    }

    pub fn cell(&self, item: &str, annotator: &str) -> Option<usize> {
        let i = self.item_index(item)?;
        let j = self.annotator_position(annotator)?;
        self.cells[i][j]
    }

    pub fn cell_label(&self, item: &str, annotator: &str) -> Option<&str> {
        self.cell(item, annotator)
            .map(|c| self.scheme.categories()[c].as_str())
    }

    /// Non-missing annotations of one item restricted to a set of annotator
    /// positions, as category indices.
    pub fn item_annotations(&self, item_idx: usize, annotator_positions: &[usize]) -> Vec<usize> {
        annotator_positions
            .iter()
            .filter_map(|&j| self.cells[item_idx][j])
            .collect()
    }

    /// Per-category counts of one item over a set of annotator positions.
    pub fn item_counts(&self, item_idx: usize, annotator_positions: &[usize]) -> Vec<usize> {
        let mut counts = vec![0usize; self.scheme.len()];
        for &j in annotator_positions {
            if let Some(c) = self.cells[item_idx][j] {
                counts[c] += 1;
            }
        }
        counts
    }

    /// Positions of annotators whose ids are in `ids`, sorted.
    pub fn positions_of(&self, ids: &[String]) -> Vec<usize> {
        let mut v: Vec<usize> = ids
            .iter()
            .filter_map(|id| self.annotator_position(id))
            .collect();
        v.sort_unstable();
        v
    }

    pub fn all_positions(&self) -> Vec<usize> {
        (0..self.annotators.len()).collect()
    }

    /// Iterate all non-missing cells as `(item_id, annotator_id, category_idx)`.
    pub fn triples(&self) -> impl Iterator<Item = ((&str, &str), usize)> + '_ {
        self.items.iter().enumerate().flat_map(move |(i, item)| {
            self.annotators.iter().enumerate().filter_map(move |(j, a)| {
                self.cells[i][j].map(|c| ((item.as_str(), a.id.as_str()), c))
            })
        })
    }

    /// Attach group/expert metadata to annotators. Unknown ids in `meta` are
    /// ignored; annotators absent from `meta` keep their defaults.
    pub fn apply_annotator_meta(&mut self, meta: &[Annotator]) {
        for m in meta {
            if let Some(&j) = self.annotator_index.get(&m.id) {
                self.annotators[j].group = m.group.clone();
                self.annotators[j].expert = m.expert;
            }
        }
    }

    /// Annotator ids grouped by their natural group tag, sorted by tag.
    pub fn natural_groups(&self) -> Vec<(String, Vec<String>)> {
        let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for a in &self.annotators {
            if let Some(g) = &a.group {
                map.entry(g.clone()).or_default().push(a.id.clone());
            }
        }
        map.into_iter().collect()
    }

    /// Emit the canonical long CSV (stable ordering: item id, then annotator
    /// id). Loading the emitted bytes reproduces an equal matrix.
    pub fn write_long_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "item_id,annotator_id,label")?;
        let mut rows: Vec<(&str, &str, &str)> = self
            .triples()
            .map(|((item, ann), c)| (item, ann, self.scheme.categories()[c].as_str()))
            .collect();
        rows.sort_unstable();
        for (item, ann, label) in rows {
            writeln!(w, "{item},{ann},{label}")?;
        }
        Ok(())
    }

    pub fn restrict_items(&self, keep: &HashSet<String>) -> AnnotationMatrix {
        let triples: Vec<(String, String, String)> = self
            .triples()
            .filter(|((item, _), _)| keep.contains(*item))
            .map(|((item, ann), c)| {
                (
                    item.to_string(),
                    ann.to_string(),
                    self.scheme.categories()[c].clone(),
                )
            })
            .collect();
        let mut m = AnnotationMatrix::from_triples(triples, self.scheme.clone())
            .expect("restriction of a valid matrix is valid");
        m.apply_annotator_meta(&self.annotators);
        m
    }
}

struct MatrixBuilder {
    scheme: LabelScheme,
    items: Vec<String>,
    item_index: HashMap<String, usize>,
    annotator_ids: Vec<String>,
    annotator_index: HashMap<String, usize>,
    cells: HashMap<(usize, usize), usize>,
}

impl MatrixBuilder {
    fn new(scheme: LabelScheme) -> Self {
        MatrixBuilder {
            scheme,
            items: Vec::new(),
            item_index: HashMap::new(),
            annotator_ids: Vec::new(),
            annotator_index: HashMap::new(),
            cells: HashMap::new(),
        }
    }

    fn push(&mut self, item: &str, annotator: &str, label: &str, line: u64) -> Result<()> {
        if item.is_empty() || annotator.is_empty() {
            return Err(Error::MalformedRow {
                line,
                reason: "empty item or annotator id".into(),
            });
        }
        let cat = self
            .scheme
            .index_of(label)
            .ok_or_else(|| Error::UnknownLabel {
                label: label.to_string(),
                line,
            })?;
        let i = *self.item_index.entry(item.to_string()).or_insert_with(|| {
            self.items.push(item.to_string());
            self.items.len() - 1
        });
        let j = *self
            .annotator_index
            .entry(annotator.to_string())
            .or_insert_with(|| {
                self.annotator_ids.push(annotator.to_string());
                self.annotator_ids.len() - 1
            });
        if self.cells.insert((i, j), cat).is_some() {
            return Err(Error::DuplicateCell {
                item: item.to_string(),
                annotator: annotator.to_string(),
            });
        }
        Ok(())
    }

    fn finish(self) -> Result<AnnotationMatrix> {
        if self.cells.is_empty() {
            return Err(Error::NoAnnotations);
        }
        let mut sorted: Vec<String> = self.annotator_ids.clone();
        sorted.sort_unstable();
        let annotator_index: HashMap<String, usize> = sorted
            .iter()
            .enumerate()
            .map(|(j, id)| (id.clone(), j))
            .collect();
        let mut cells = vec![vec![None; sorted.len()]; self.items.len()];
        for ((i, j_old), cat) in self.cells {
            let j = annotator_index[&self.annotator_ids[j_old]];
            cells[i][j] = Some(cat);
        }
        Ok(AnnotationMatrix {
            scheme: self.scheme,
            item_index: self.item_index,
            items: self.items,
            annotators: sorted.into_iter().map(Annotator::new).collect(),
            annotator_index,
            cells,
        })
    }
}

/// On-disk annotation formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnnotationFormat {
    LongCsv,
    WideTsv,
}

impl fmt::Display for AnnotationFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnnotationFormat::LongCsv => write!(f, "long-csv"),
            AnnotationFormat::WideTsv => write!(f, "wide-tsv"),
        }
    }
}

/// Load an annotation matrix from a file in the given format.
pub fn load_annotations(
    path: &Path,
    format: AnnotationFormat,
    scheme: LabelScheme,
) -> Result<AnnotationMatrix> {
    match format {
        AnnotationFormat::LongCsv => load_long_csv(path, scheme),
        AnnotationFormat::WideTsv => Ok(load_wide_tsv(path, scheme)?.0),
    }
}

fn load_long_csv(path: &Path, scheme: LabelScheme) -> Result<AnnotationMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let mut builder = MatrixBuilder::new(scheme);
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 3 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 3 fields, got {}", rec.len()),
            });
        }
        builder.push(rec[0].trim(), rec[1].trim(), rec[2].trim(), line)?;
    }
    builder.finish()
}

/// Load the wide TSV format; returns the matrix together with the inline texts.
pub fn load_wide_tsv(path: &Path, scheme: LabelScheme) -> Result<(AnnotationMatrix, Vec<CorpusItem>)> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or(Error::NoAnnotations)?;
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.len() < 3 || cols[0] != "item_id" || cols[1] != "text" {
        return Err(Error::MalformedRow {
            line: 1,
            reason: "wide-tsv header must start with item_id<TAB>text".into(),
        });
    }
    let annotator_cols: Vec<String> = cols[2..].iter().map(|s| s.to_string()).collect();
    let mut builder = MatrixBuilder::new(scheme);
    let mut texts = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx as u64 + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != annotator_cols.len() + 2 {
            return Err(Error::MalformedRow {
                line: line_no,
                reason: format!(
                    "expected {} fields, got {}",
                    annotator_cols.len() + 2,
                    fields.len()
                ),
            });
        }
        texts.push(CorpusItem::new(fields[0], fields[1]));
        for (ann, &cell) in annotator_cols.iter().zip(&fields[2..]) {
            if !cell.is_empty() {
                builder.push(fields[0], ann, cell.trim(), line_no)?;
            }
        }
    }
    Ok((builder.finish()?, texts))
}

/// Load the JSON-lines text companion (`{"id": ..., "text": ..., "meta"?: ...}`).
pub fn load_texts_jsonl(path: &Path) -> Result<Vec<CorpusItem>> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        text: String,
        #[serde(default)]
        meta: BTreeMap<String, String>,
    }
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
            line: idx as u64 + 1,
            reason: e.to_string(),
        })?;
        out.push(CorpusItem {
            id: row.id,
            text: row.text,
            meta: row.meta,
        });
    }
    Ok(out)
}

/// Load annotator metadata CSV: `annotator_id,group,expert` (group may be
/// empty; expert is `true`/`false`/`1`/`0`).
pub fn load_annotator_meta(path: &Path) -> Result<Vec<Annotator>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() < 1 {
            continue;
        }
        let group = rec.get(1).map(str::trim).filter(|g| !g.is_empty());
        let expert = match rec.get(2).map(str::trim) {
            None | Some("") | Some("0") | Some("false") => false,
            Some("1") | Some("true") => true,
            Some(other) => {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("bad expert flag {other:?}"),
                })
            }
        };
        out.push(Annotator {
            id: rec[0].trim().to_string(),
            group: group.map(String::from),
            expert,
        });
    }
    Ok(out)
}

fn is_url_token(tok: &str) -> bool {
    tok.starts_with("http://") || tok.starts_with("https://") || tok == "http" || tok == "https"
}

/// Normalization used for duplicate detection: lowercase, strip a leading
/// retweet marker (`RT @user:`), drop URL tokens, collapse whitespace.
pub fn normalize_for_dedup(text: &str) -> String {
    let lower = text.to_lowercase();
    let mut rest = lower.trim();
    if rest.starts_with("rt @") {
        if let Some(colon) = rest.find(':') {
            rest = rest[colon + 1..].trim_start();
        }
    }
    let tokens: Vec<&str> = rest
        .split_whitespace()
        .filter(|t| !is_url_token(t))
        .collect();
    tokens.join(" ")
}

/// Drop items whose normalized text collides with an earlier item; keeps the
/// first occurrence and the original order.
pub fn deduplicate(items: &[CorpusItem]) -> Vec<CorpusItem> {
    let mut seen = HashSet::new();
    items
        .iter()
        .filter(|item| seen.insert(normalize_for_dedup(&item.text)))
        .cloned()
        .collect()
}

/// Lowercase token stream used for keyword matching: alphanumeric runs
/// (hyphens kept so hyphenated keywords match), hashtag prefix stripped.
pub fn keyword_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for ch in text.to_lowercase().chars() {
        if ch.is_alphanumeric() || ch == '-' {
            cur.push(ch);
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
        .into_iter()
        .map(|t| t.trim_matches('-').to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Keep items containing at least one keyword as a whole token.
pub fn keyword_filter(items: &[CorpusItem], keywords: &[String]) -> Vec<CorpusItem> {
    let kw: HashSet<&str> = keywords.iter().map(|k| k.as_str()).collect();
    items
        .iter()
        .filter(|item| keyword_tokens(&item.text).iter().any(|t| kw.contains(t.as_str())))
        .cloned()
        .collect()
}

/// Token-occurrence counts per keyword across all items, in input keyword order.
pub fn keyword_frequencies(items: &[CorpusItem], keywords: &[String]) -> Vec<(String, usize)> {
    let mut counts: Vec<usize> = vec![0; keywords.len()];
    let index: HashMap<&str, usize> = keywords
        .iter()
        .enumerate()
        .map(|(i, k)| (k.as_str(), i))
        .collect();
    for item in items {
        for tok in keyword_tokens(&item.text) {
            if let Some(&i) = index.get(tok.as_str()) {
                counts[i] += 1;
            }
        }
    }
    keywords.iter().cloned().zip(counts).collect()
}

/// Per-category counts and total, over gold labels when given, else over the
/// per-item modal raw annotation (ties broken by scheme category order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelDistribution {
    pub counts: Vec<(String, usize)>,
    pub total: usize,
}

pub fn label_distribution(
    matrix: &AnnotationMatrix,
    gold: Option<&GoldStandard>,
) -> LabelDistribution {
    let scheme = matrix.scheme();
    let mut counts = vec![0usize; scheme.len()];
    let mut total = 0;
    match gold {
        Some(g) => {
            for label in g.labels.values() {
                if let Some(c) = scheme.index_of(label) {
                    counts[c] += 1;
                    total += 1;
                }
            }
        }
        None => {
            let all = matrix.all_positions();
            for i in 0..matrix.items().len() {
                let item_counts = matrix.item_counts(i, &all);
                if item_counts.iter().sum::<usize>() == 0 {
                    continue;
                }
                let max = *item_counts.iter().max().unwrap();
                let modal = item_counts.iter().position(|&c| c == max).unwrap();
                counts[modal] += 1;
                total += 1;
            }
        }
    }
    LabelDistribution {
        counts: scheme
            .categories()
            .iter()
            .cloned()
            .zip(counts)
            .collect(),
        total,
    }
}
