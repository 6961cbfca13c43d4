//! Deterministic reference text classifier (unigram tokenizer, TF-IDF,
//! L2-regularized logistic regression trained by full-batch gradient
//! descent) and the ingestion path for externally produced predictions.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusItem, LabelScheme};
use crate::error::{Error, Result};
use crate::goldstd::GoldStandard;

/// A document reduced to lowercase unigram tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDoc {
    pub item_id: String,
    pub tokens: Vec<String>,
}

/// Lowercase unigrams; URLs and user mentions dropped, hashtag prefixes
/// stripped, everything else split on non-alphanumeric characters.
pub fn tokenize_text(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for raw in text.split_whitespace() {
        let lower = raw.to_lowercase();
        if lower.starts_with("http") || lower.starts_with('@') {
            continue;
        }
        let mut cur = String::new();
        for ch in lower.chars() {
            if ch.is_alphanumeric() {
                cur.push(ch);
            } else if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            tokens.push(cur);
        }
    }
    tokens
}

pub fn tokenize(item: &CorpusItem) -> TokenizedDoc {
    TokenizedDoc {
        item_id: item.id.clone(),
        tokens: tokenize_text(&item.text),
    }
}

/// Vocabulary and smoothed inverse document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tfidf {
    /// Token -> feature index, tokens in sorted order.
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
}

impl Tfidf {
    /// Fit on training documents: `idf_t = ln((1 + D) / (1 + df_t)) + 1`.
    pub fn fit(docs: &[TokenizedDoc]) -> Result<Tfidf> {
        if docs.iter().all(|d| d.tokens.is_empty()) {
            return Err(Error::AllDocsEmpty);
        }
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in docs {
            let mut seen: Vec<&str> = doc.tokens.iter().map(|t| t.as_str()).collect();
            seen.sort_unstable();
            seen.dedup();
            for tok in seen {
                *df.entry(tok).or_insert(0) += 1;
            }
        }
        let d = docs.len() as f64;
        let mut vocabulary = BTreeMap::new();
        let mut idf = Vec::with_capacity(df.len());
        for (i, (tok, count)) in df.iter().enumerate() {
            vocabulary.insert(tok.to_string(), i);
            idf.push(((1.0 + d) / (1.0 + *count as f64)).ln() + 1.0);
        }
        Ok(Tfidf { vocabulary, idf })
    }

    /// Sparse TF-IDF vector, L2-normalized; empty or all-OOV docs map to the
    /// zero vector.
    pub fn transform(&self, doc: &TokenizedDoc) -> Vec<(usize, f64)> {
        let mut tf: HashMap<usize, f64> = HashMap::new();
        for tok in &doc.tokens {
            if let Some(&i) = self.vocabulary.get(tok) {
                *tf.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let mut vec: Vec<(usize, f64)> = tf
            .into_iter()
            .map(|(i, count)| (i, count * self.idf[i]))
            .collect();
        vec.sort_unstable_by_key(|&(i, _)| i);
        let norm: f64 = vec.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in &mut vec {
                *v /= norm;
            }
        }
        vec
    }
}

/// Gradient-descent hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.5,
            epochs: 300,
            l2: 1e-4,
        }
    }
}

/// TF-IDF + logistic-regression model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub tfidf: Tfidf,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub positive: String,
    pub negative: String,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Regularized logistic loss and its analytic gradient over a sparse design
/// matrix. Exposed for the finite-difference check in tests.
pub fn loss_and_gradient(
    rows: &[Vec<(usize, f64)>],
    targets: &[f64],
    weights: &[f64],
    bias: f64,
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (row, &y) in rows.iter().zip(targets) {
        let z: f64 = bias + row.iter().map(|&(i, v)| weights[i] * v).sum::<f64>();
        let p = sigmoid(z);
        let eps = 1e-12;
        loss -= y * (p + eps).ln() + (1.0 - y) * (1.0 - p + eps).ln();
        let delta = p - y;
        for &(i, v) in row {
            grad_w[i] += delta * v;
        }
        grad_b += delta;
    }
    loss /= n;
    grad_b /= n;
    let mut reg = 0.0;
    for (g, w) in grad_w.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
        reg += w * w;
    }
    loss += 0.5 * l2 * reg;
    (loss, grad_w, grad_b)
}

/// Train the reference model on gold-labeled documents. Full-batch descent,
/// no stochastic path: the result is a pure function of the inputs.
pub fn train_linear(
    docs: &[TokenizedDoc],
    gold: &GoldStandard,
    scheme: &LabelScheme,
    hyperparams: Hyperparams,
    seed: u64,
) -> Result<LinearModel> {
    let positive = scheme.positive().to_string();
    let labeled: Vec<(&TokenizedDoc, f64)> = docs
        .iter()
        .filter_map(|d| {
            gold.labels
                .get(&d.item_id)
                .map(|l| (d, if *l == positive { 1.0 } else { 0.0 }))
        })
        .collect();
    if labeled.is_empty() {
        return Err(Error::Invalid("no gold-labeled training documents".into()));
    }
    let pos = labeled.iter().filter(|(_, y)| *y == 1.0).count();
    if pos == 0 || pos == labeled.len() {
        return Err(Error::SingleClassTrain);
    }
    let train_docs: Vec<TokenizedDoc> = labeled.iter().map(|(d, _)| (*d).clone()).collect();
    let tfidf = Tfidf::fit(&train_docs)?;
    let rows: Vec<Vec<(usize, f64)>> = train_docs.iter().map(|d| tfidf.transform(d)).collect();
    let targets: Vec<f64> = labeled.iter().map(|(_, y)| *y).collect();
    let mut weights = vec![0.0; tfidf.idf.len()];
    let mut bias = 0.0;
    for _ in 0..hyperparams.epochs {
        let (_, grad_w, grad_b) = loss_and_gradient(&rows, &targets, &weights, bias, hyperparams.l2);
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= hyperparams.learning_rate * g;
        }
        bias -= hyperparams.learning_rate * grad_b;
    }
    let negative = scheme
        .categories()
        .iter()
        .find(|c| **c != positive)
        .expect("scheme has at least 2 categories")
        .clone();
    Ok(LinearModel {
        tfidf,
        weights,
        bias,
        hyperparams,
        seed,
        positive,
        negative,
    })
}

/// Item → predicted label with optional scores, from one classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub predictions: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scores: BTreeMap<String, f64>,
    pub source: String,
}

impl PredictionSet {
    pub fn ids(&self) -> std::collections::BTreeSet<&str> {
        self.predictions.keys().map(|s| s.as_str()).collect()
    }

    /// Predictions CSV: `item_id,label[,score]`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let with_scores = !self.scores.is_empty();
        if with_scores {
            writeln!(w, "item_id,label,score")?;
        } else {
            writeln!(w, "item_id,label")?;
        }
        for (id, label) in &self.predictions {
            if with_scores {
                let score = self.scores.get(id).copied().unwrap_or(f64::NAN);
                writeln!(w, "{id},{label},{score:.12}")?;
            } else {
                writeln!(w, "{id},{label}")?;
            }
        }
        Ok(())
    }
}

impl LinearModel {
    pub fn score(&self, doc: &TokenizedDoc) -> f64 {
        let row = self.tfidf.transform(doc);
        let z: f64 = self.bias + row.iter().map(|&(i, v)| self.weights[i] * v).sum::<f64>();
        sigmoid(z)
    }

    /// Deterministic predictions; positive iff score >= 0.5. Empty and
    /// all-OOV documents fall back to the bias-only decision.
    pub fn predict(&self, docs: &[TokenizedDoc], source: &str) -> PredictionSet {
        let mut predictions = BTreeMap::new();
        let mut scores = BTreeMap::new();
        for doc in docs {
            let s = self.score(doc);
            let label = if s >= 0.5 {
                self.positive.clone()
            } else {
                self.negative.clone()
            };
            predictions.insert(doc.item_id.clone(), label);
            scores.insert(doc.item_id.clone(), s);
        }
        PredictionSet {
            predictions,
            scores,
            source: source.to_string(),
        }
    }

    pub fn save_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn load_json<R: Read>(r: R) -> Result<LinearModel> {
        Ok(serde_json::from_reader(r)?)
    }
}

/// Load externally produced predictions (`item_id,label[,score]`). Labels
/// are validated against the scheme; ids unknown to the supplied gold are
/// returned as warnings, not errors.
pub fn import_predictions(
    path: &Path,
    scheme: &LabelScheme,
    gold: Option<&GoldStandard>,
) -> Result<(PredictionSet, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let source = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "import".to_string());
    let mut predictions = BTreeMap::new();
    let mut scores = BTreeMap::new();
    let mut warnings = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() < 2 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected at least 2 fields, got {}", rec.len()),
            });
        }
        let id = rec[0].trim().to_string();
        let label = rec[1].trim().to_string();
        if scheme.index_of(&label).is_none() {
            return Err(Error::UnknownLabel { label, line });
        }
        if let Some(raw) = rec.get(2).map(str::trim).filter(|s| !s.is_empty()) {
            let score: f64 = raw.parse().map_err(|_| Error::MalformedRow {
                line,
                reason: format!("bad score {raw:?}"),
            })?;
            scores.insert(id.clone(), score);
        }
        if let Some(g) = gold {
            if !g.labels.contains_key(&id) {
                warnings.push(id.clone());
            }
        }
        predictions.insert(id, label);
    }
    if predictions.is_empty() {
        return Err(Error::NoAnnotations);
    }
    Ok((
        PredictionSet {
            predictions,
            scores,
            source,
        },
        warnings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_drops_urls() {
        assert_eq!(
            tokenize_text("Deport them NOW http://t.co/x"),
            vec!["deport", "them", "now"]
        );
    }

    #[test]
    fn tokenize_mentions_and_hashtags() {
        assert_eq!(tokenize_text("@user #Brexit!!"), vec!["brexit"]);
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize_text("").is_empty());
    }

    #[test]
    fn tokenize_idempotent_on_rendering() {
        let toks = tokenize_text("Some #mixed @m text, http://x with-punct!");
        let rendered = toks.join(" ");
        assert_eq!(tokenize_text(&rendered), toks);
    }

    fn doc(id: &str, text: &str) -> TokenizedDoc {
        TokenizedDoc {
            item_id: id.to_string(),
            tokens: tokenize_text(text),
        }
    }

    #[test]
    fn idf_saturation_and_rare() {
        let docs = vec![
            doc("1", "common rare1"),
            doc("2", "common x"),
            doc("3", "common y"),
            doc("4", "common z"),
        ];
        let tfidf = Tfidf::fit(&docs).unwrap();
        let common = tfidf.idf[tfidf.vocabulary["common"]];
        assert!((common - 1.0).abs() < 1e-12);
        let rare = tfidf.idf[tfidf.vocabulary["rare1"]];
        assert!((rare - ((5.0f64 / 2.0).ln() + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn all_empty_docs_error() {
        let docs = vec![doc("1", ""), doc("2", "@only http://x")];
        assert!(matches!(Tfidf::fit(&docs), Err(Error::AllDocsEmpty)));
    }

    #[test]
    fn transform_rows_unit_norm() {
        let docs = vec![doc("1", "a b b c"), doc("2", "a d")];
        let tfidf = Tfidf::fit(&docs).unwrap();
        for d in &docs {
            let row = tfidf.transform(d);
            let norm: f64 = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        // OOV-only doc transforms to the zero vector
        assert!(tfidf.transform(&doc("3", "zzz qqq")).is_empty());
    }

    fn separable_fixture() -> (Vec<TokenizedDoc>, GoldStandard, LabelScheme) {
        let mut docs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            let (text, label) = if i % 2 == 0 {
                ("angry bad insult", "1")
            } else {
                ("calm nice words", "0")
            };
            let id = format!("i{i}");
            docs.push(doc(&id, text));
            labels.push((id, label.to_string()));
        }
        (
            docs,
            GoldStandard::from_labels(labels, "overall"),
            LabelScheme::binary(),
        )
    }

    #[test]
    fn separable_set_learns_perfectly() {
        let (docs, gold, scheme) = separable_fixture();
        let model = train_linear(&docs, &gold, &scheme, Hyperparams::default(), 0).unwrap();
        let preds = model.predict(&docs, "ref");
        for (id, label) in &gold.labels {
            assert_eq!(&preds.predictions[id], label);
        }
    }

    #[test]
    fn training_loss_non_increasing() {
        let (docs, gold, _scheme) = separable_fixture();
        let tfidf = Tfidf::fit(&docs).unwrap();
        let rows: Vec<_> = docs.iter().map(|d| tfidf.transform(d)).collect();
        let targets: Vec<f64> = docs
            .iter()
            .map(|d| if gold.labels[&d.item_id] == "1" { 1.0 } else { 0.0 })
            .collect();
        let hp = Hyperparams::default();
        let mut weights = vec![0.0; tfidf.idf.len()];
        let mut bias = 0.0;
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let (loss, gw, gb) = loss_and_gradient(&rows, &targets, &weights, bias, hp.l2);
            assert!(loss <= last + 1e-12, "loss increased: {loss} > {last}");
            last = loss;
            for (w, g) in weights.iter_mut().zip(&gw) {
                *w -= hp.learning_rate * g;
            }
            bias -= hp.learning_rate * gb;
        }
    }

    #[test]
    fn duplicated_train_set_same_predictions() {
        let (docs, gold, scheme) = separable_fixture();
        let model = train_linear(&docs, &gold, &scheme, Hyperparams::default(), 0).unwrap();
        let mut doubled_docs = docs.clone();
        let mut doubled_labels = gold.labels.clone();
        for d in &docs {
            let id = format!("{}-copy", d.item_id);
            doubled_docs.push(TokenizedDoc {
                item_id: id.clone(),
                tokens: d.tokens.clone(),
            });
            doubled_labels.insert(id, gold.labels[&d.item_id].clone());
        }
        let doubled_gold = GoldStandard::from_labels(doubled_labels, "overall");
        let model2 =
            train_linear(&doubled_docs, &doubled_gold, &scheme, Hyperparams::default(), 0).unwrap();
        let p1 = model.predict(&docs, "a");
        let p2 = model2.predict(&docs, "b");
        assert_eq!(p1.predictions, p2.predictions);
    }

    #[test]
    fn seed_does_not_change_model() {
        let (docs, gold, scheme) = separable_fixture();
        let m1 = train_linear(&docs, &gold, &scheme, Hyperparams::default(), 1).unwrap();
        let m2 = train_linear(&docs, &gold, &scheme, Hyperparams::default(), 99).unwrap();
        assert_eq!(m1.weights, m2.weights);
        assert_eq!(m1.bias, m2.bias);
    }

    #[test]
    fn single_class_train_errors() {
        let docs = vec![doc("i1", "a"), doc("i2", "b")];
        let gold = GoldStandard::from_labels(
            [("i1".to_string(), "1".to_string()), ("i2".to_string(), "1".to_string())],
            "overall",
        );
        assert!(matches!(
            train_linear(&docs, &gold, &LabelScheme::binary(), Hyperparams::default(), 0),
            Err(Error::SingleClassTrain)
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // 5-feature fixture
        let rows = vec![
            vec![(0, 0.5), (2, 0.8)],
            vec![(1, 1.0)],
            vec![(0, 0.2), (3, 0.4), (4, 0.9)],
            vec![(2, 0.7), (4, 0.1)],
        ];
        let targets = vec![1.0, 0.0, 1.0, 0.0];
        let weights = vec![0.3, -0.2, 0.1, 0.5, -0.4];
        let bias = 0.05;
        let l2 = 0.01;
        let (_, grad_w, grad_b) = loss_and_gradient(&rows, &targets, &weights, bias, l2);
        let h = 1e-6;
        for i in 0..weights.len() {
            let mut wp = weights.clone();
            let mut wm = weights.clone();
            wp[i] += h;
            wm[i] -= h;
            let (lp, _, _) = loss_and_gradient(&rows, &targets, &wp, bias, l2);
            let (lm, _, _) = loss_and_gradient(&rows, &targets, &wm, bias, l2);
            let numeric = (lp - lm) / (2.0 * h);
            let rel = (grad_w[i] - numeric).abs() / numeric.abs().max(1e-8);
            assert!(rel < 1e-6, "feature {i}: analytic {} vs numeric {numeric}", grad_w[i]);
        }
        let (lp, _, _) = loss_and_gradient(&rows, &targets, &weights, bias + h, l2);
        let (lm, _, _) = loss_and_gradient(&rows, &targets, &weights, bias - h, l2);
        let numeric = (lp - lm) / (2.0 * h);
        assert!((grad_b - numeric).abs() / numeric.abs().max(1e-8) < 1e-6);
    }

    #[test]
    fn model_json_round_trip() {
        let (docs, gold, scheme) = separable_fixture();
        let model = train_linear(&docs, &gold, &scheme, Hyperparams::default(), 7).unwrap();
        let mut buf = Vec::new();
        model.save_json(&mut buf).unwrap();
        let loaded = LinearModel::load_json(buf.as_slice()).unwrap();
        assert_eq!(model, loaded);
    }

    #[test]
    fn import_predictions_happy_path() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "item_id,label,score").unwrap();
        writeln!(f, "i1,1,0.9").unwrap();
        writeln!(f, "i2,0,0.123456789").unwrap();
        writeln!(f, "i3,1,").unwrap();
        let (preds, warnings) = import_predictions(f.path(), &LabelScheme::binary(), None).unwrap();
        assert_eq!(preds.predictions.len(), 3);
        assert!(warnings.is_empty());
        assert!((preds.scores["i2"] - 0.123456789).abs() < 1e-9);
    }

    #[test]
    fn import_predictions_bad_label() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "item_id,label").unwrap();
        writeln!(f, "i1,maybe").unwrap();
        let err = import_predictions(f.path(), &LabelScheme::binary(), None).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { .. }));
    }

    #[test]
    fn import_predictions_unknown_id_warns() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "item_id,label").unwrap();
        writeln!(f, "i1,1").unwrap();
        writeln!(f, "ghost,0").unwrap();
        let gold = GoldStandard::from_labels(
            [("i1".to_string(), "1".to_string()), ("i2".to_string(), "0".to_string())],
            "overall",
        );
        let (_, warnings) =
            import_predictions(f.path(), &LabelScheme::binary(), Some(&gold)).unwrap();
        assert_eq!(warnings, vec!["ghost".to_string()]);
    }

    #[test]
    fn score_round_trip_preserved() {
        let (docs, gold, scheme) = separable_fixture();
        let model = train_linear(&docs, &gold, &scheme, Hyperparams::default(), 0).unwrap();
        let preds = model.predict(&docs, "ref");
        let mut buf = Vec::new();
        preds.write_csv(&mut buf).unwrap();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(&buf).unwrap();
        let (loaded, _) = import_predictions(f.path(), &scheme, None).unwrap();
        for (id, s) in &preds.scores {
            assert!((loaded.scores[id] - s).abs() < 1e-9);
        }
    }
}
