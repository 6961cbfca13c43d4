//! End-to-end orchestration: one config in, a reproducible artifact
//! directory out.
//!
//! Stages run sequentially (ingest → clean → partition → polarization →
//! agreement → gold → split → augment → train → ensemble → evaluate →
//! diverge); a failure aborts with the stage name, partial artifacts are
//! retained and the manifest carries a `FAILED` status. Two runs with
//! identical config and inputs produce byte-identical artifact directories.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agreement::{agreement_report, AgreementReport};
use crate::augment::{replicate_by_polarization, AugmentPolicy, TrainInstance};
use crate::classify::{tokenize_text, train_linear, Hyperparams, PredictionSet, TokenizedDoc};
use crate::corpus::{
    deduplicate, keyword_filter, load_annotations, load_annotator_meta, load_texts_jsonl,
    load_wide_tsv, AnnotationFormat, AnnotationMatrix, CorpusItem, LabelScheme,
};
use crate::error::{Error, Result};
use crate::evalens::{
    classifier_disagreement, evaluate, inclusive_ensemble, render_comparison, DisagreementCensus,
    MetricsReport,
};
use crate::goldstd::{majority_gold, train_test_split, GoldStandard, SplitManifest, SplitSpec, TiePolicy};
use crate::partition::{natural_comparison, search_max_polarization, NaturalComparison, Partition};
use crate::polarization::{
    p_index_all, polarization_census, rank_by_polarization, write_ranking_tsv, PolarizationCensus,
};

/// How annotator groups are obtained.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum PartitionMode {
    /// Use the group tags from the annotator metadata and compare the natural
    /// split against all other k-partitions.
    Natural { min_size: usize, allow_large: bool },
    /// Exhaustive search for the k-partition maximizing the average P-index.
    Search {
        k: usize,
        min_size: usize,
        allow_large: bool,
    },
}

/// Full-pipeline configuration; serialized verbatim into the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub annotations: PathBuf,
    pub format: AnnotationFormat,
    /// JSON-lines text companion; unnecessary when the wide TSV carries texts.
    pub texts: Option<PathBuf>,
    pub annotator_meta: Option<PathBuf>,
    pub scheme: LabelScheme,
    pub dedup: bool,
    pub keywords: Option<Vec<String>>,
    pub partition: PartitionMode,
    pub tie_policy: TiePolicy,
    pub train_fraction: f64,
    pub stratified: bool,
    pub seed: u64,
    pub augment: Option<AugmentPolicy>,
    pub hyperparams: Hyperparams,
    pub output_dir: PathBuf,
}

/// Reproducibility manifest written last, atomically, into the output
/// directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Input path → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// Artifact file names, in emission order.
    pub artifacts: Vec<String>,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
}

/// Everything the pipeline produced, in memory, for downstream inspection.
#[derive(Debug)]
pub struct PipelineReport {
    pub partition: Partition,
    pub natural_comparison: Option<NaturalComparison>,
    pub census: PolarizationCensus,
    pub agreement: AgreementReport,
    pub overall_gold_train: GoldStandard,
    pub overall_gold_test: GoldStandard,
    /// Group name → that group's gold restricted to the shared test ids.
    pub group_gold_tests: BTreeMap<String, GoldStandard>,
    /// Group name → test-set predictions of the group classifier.
    pub predictions: BTreeMap<String, PredictionSet>,
    pub ensemble: PredictionSet,
    /// Classifier name → metrics against the overall-gold test set.
    pub overall_metrics: Vec<(String, MetricsReport)>,
    /// Group name → metrics of its classifier against its own group-gold test.
    pub group_metrics: BTreeMap<String, MetricsReport>,
    /// Pairwise divergence between group classifiers on the test set.
    pub disagreements: Vec<(String, String, DisagreementCensus)>,
    pub manifest: Manifest,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.at_stage(name))
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

struct ArtifactWriter {
    dir: PathBuf,
    names: Vec<String>,
}

impl ArtifactWriter {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            names: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }
}

/// Run every stage and write the artifact directory. On failure the manifest
/// is still written, with `status: "FAILED"` and the failing stage name.
pub fn full_pipeline(config: &RunConfig) -> Result<PipelineReport> {
    let mut artifacts = ArtifactWriter::new(&config.output_dir)?;
    let mut inputs = BTreeMap::new();
    for path in [Some(&config.annotations), config.texts.as_ref(), config.annotator_meta.as_ref()]
        .into_iter()
        .flatten()
    {
        inputs.insert(path.display().to_string(), stage("ingest", sha256_hex(path))?);
    }
    match run_stages(config, &mut artifacts) {
        Ok(report) => {
            let manifest = write_manifest(config, inputs, artifacts.names, "ok", None)?;
            Ok(PipelineReport { manifest, ..report })
        }
        Err(err) => {
            let failed_stage = match &err {
                Error::Stage { stage, .. } => Some(stage.clone()),
                _ => None,
            };
            write_manifest(config, inputs, artifacts.names, "FAILED", failed_stage)?;
            Err(err)
        }
    }
}

fn write_manifest(
    config: &RunConfig,
    inputs: BTreeMap<String, String>,
    artifacts: Vec<String>,
    status: &str,
    failed_stage: Option<String>,
) -> Result<Manifest> {
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config: config.clone(),
        inputs,
        artifacts,
        status: status.to_string(),
        failed_stage,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    let tmp = config.output_dir.join("manifest.json.tmp");
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, config.output_dir.join("manifest.json"))?;
    Ok(manifest)
}

fn run_stages(config: &RunConfig, artifacts: &mut ArtifactWriter) -> Result<PipelineReport> {
    // ingest
    let (mut matrix, mut texts) = stage("ingest", load_inputs(config))?;

    // clean: dedup and keyword filter shrink the text set; the matrix follows
    if config.dedup {
        texts = deduplicate(&texts);
    }
    if let Some(keywords) = &config.keywords {
        texts = keyword_filter(&texts, keywords);
    }
    if config.dedup || config.keywords.is_some() {
        let keep: HashSet<String> = texts.iter().map(|t| t.id.clone()).collect();
        matrix = stage(
            "clean",
            if keep.is_empty() {
                Err(Error::NoUsableItems)
            } else {
                Ok(matrix.restrict_items(&keep))
            },
        )?;
    }
    let mut cleaned = Vec::new();
    matrix.write_long_csv(&mut cleaned)?;
    artifacts.write("annotations.csv", &cleaned)?;

    // partition
    let (partition, comparison) = stage("partition", build_partition(config, &matrix))?;
    artifacts.write_json("partition.json", &partition)?;
    if let Some(cmp) = &comparison {
        artifacts.write_json("natural_comparison.json", cmp)?;
    }

    // polarization
    let census = polarization_census(&matrix, &partition);
    artifacts.write_json("census.json", &census)?;
    let ranking = rank_by_polarization::<f64>(&matrix, &partition, true);
    let mut ranking_bytes = Vec::new();
    write_ranking_tsv(&ranking, Some(&texts), &mut ranking_bytes)?;
    artifacts.write("ranking.tsv", &ranking_bytes)?;
    let p_scores: BTreeMap<String, f64> = p_index_all::<f64>(&matrix, &partition)
        .into_iter()
        .flatten()
        .map(|s| (s.item_id, s.p))
        .collect();

    // agreement
    let agreement = agreement_report(&matrix, Some(&partition));
    artifacts.write_json("agreement.json", &agreement)?;

    // gold: one overall standard plus one per group
    let overall_gold = stage(
        "gold",
        majority_gold(&matrix, &matrix.annotator_ids(), config.tie_policy, "overall"),
    )?;
    let mut group_golds: BTreeMap<String, GoldStandard> = BTreeMap::new();
    for (w, group) in partition.groups().iter().enumerate() {
        let name = partition.group_name(w);
        let ids: Vec<String> = group.iter().cloned().collect();
        let gold = stage("gold", majority_gold(&matrix, &ids, config.tie_policy, &name))?;
        group_golds.insert(name, gold);
    }
    for (name, gold) in
        std::iter::once((&"overall".to_string(), &overall_gold)).chain(group_golds.iter())
    {
        let mut bytes = Vec::new();
        gold.write_csv(&mut bytes)?;
        artifacts.write(&format!("gold_{name}.csv"), &bytes)?;
    }

    // split: one seeded split over the overall gold, shared by every variant
    let spec = stage(
        "split",
        SplitSpec::new(config.train_fraction, config.seed, config.stratified),
    )?;
    let (overall_train, overall_test) = stage("split", train_test_split(&overall_gold, &spec))?;
    let train_set: HashSet<String> = overall_train.labels.keys().cloned().collect();
    let test_set: HashSet<String> = overall_test.labels.keys().cloned().collect();
    artifacts.write_json(
        "split.json",
        &SplitManifest {
            seed: config.seed,
            train_ids: overall_train.labels.keys().cloned().collect(),
            test_ids: overall_test.labels.keys().cloned().collect(),
            stratified: config.stratified,
        },
    )?;
    let group_gold_tests: BTreeMap<String, GoldStandard> = group_golds
        .iter()
        .map(|(name, g)| (name.clone(), g.restrict(&test_set)))
        .collect();

    // augment + train one classifier per group, predict on the shared test
    let text_of: BTreeMap<&str, &str> = texts
        .iter()
        .map(|t| (t.id.as_str(), t.text.as_str()))
        .collect();
    let test_docs: Vec<TokenizedDoc> = overall_test
        .labels
        .keys()
        .map(|id| TokenizedDoc {
            item_id: id.clone(),
            tokens: tokenize_text(text_of.get(id.as_str()).copied().unwrap_or("")),
        })
        .collect();
    let mut predictions: BTreeMap<String, PredictionSet> = BTreeMap::new();
    for (name, gold) in &group_golds {
        let group_train = gold.restrict(&train_set);
        let instances: Vec<TrainInstance> = group_train
            .labels
            .iter()
            .map(|(id, label)| TrainInstance {
                item_id: id.clone(),
                label: label.clone(),
                text: text_of.get(id.as_str()).copied().unwrap_or("").to_string(),
            })
            .collect();
        let (train_docs, train_gold) = match &config.augment {
            Some(policy) => {
                let augmented = replicate_by_polarization(&instances, &p_scores, policy);
                let mut bytes = Vec::new();
                augmented.write_csv(&mut bytes)?;
                artifacts.write(&format!("augmented_{name}.csv"), &bytes)?;
                let docs: Vec<TokenizedDoc> = augmented
                    .expanded()
                    .iter()
                    .map(|inst| TokenizedDoc {
                        item_id: inst.item_id.clone(),
                        tokens: tokenize_text(&inst.text),
                    })
                    .collect();
                let gold = GoldStandard::from_labels(
                    augmented
                        .instances
                        .iter()
                        .map(|i| (i.item_id.clone(), i.label.clone())),
                    name,
                );
                (docs, gold)
            }
            None => {
                let docs = instances
                    .iter()
                    .map(|inst| TokenizedDoc {
                        item_id: inst.item_id.clone(),
                        tokens: tokenize_text(&inst.text),
                    })
                    .collect();
                (docs, group_train.clone())
            }
        };
        let model = stage(
            "train",
            train_linear(&train_docs, &train_gold, &config.scheme, config.hyperparams, config.seed),
        )?;
        let mut bytes = Vec::new();
        model.save_json(&mut bytes)?;
        artifacts.write(&format!("model_{name}.json"), &bytes)?;
        let preds = model.predict(&test_docs, name);
        let mut bytes = Vec::new();
        preds.write_csv(&mut bytes)?;
        artifacts.write(&format!("predictions_{name}.csv"), &bytes)?;
        predictions.insert(name.clone(), preds);
    }

    // inclusive ensemble over the group classifiers
    let members: Vec<&PredictionSet> = predictions.values().collect();
    let ensemble = stage("ensemble", inclusive_ensemble(&members, &config.scheme))?;
    let mut bytes = Vec::new();
    ensemble.write_csv(&mut bytes)?;
    artifacts.write("predictions_inclusive.csv", &bytes)?;

    // evaluate everything against the overall-gold test set; each group
    // classifier additionally against its own group-gold test
    let mut overall_metrics: Vec<(String, MetricsReport)> = Vec::new();
    for (name, preds) in &predictions {
        overall_metrics.push((
            name.clone(),
            stage("evaluate", evaluate(preds, &overall_test, &config.scheme))?,
        ));
    }
    overall_metrics.push((
        "inclusive".to_string(),
        stage("evaluate", evaluate(&ensemble, &overall_test, &config.scheme))?,
    ));
    let mut group_metrics = BTreeMap::new();
    for (name, preds) in &predictions {
        let gold = &group_gold_tests[name];
        group_metrics.insert(
            name.clone(),
            stage("evaluate", evaluate(preds, gold, &config.scheme))?,
        );
    }
    #[derive(Serialize)]
    struct MetricsRow<'a> {
        classifier: &'a str,
        #[serde(flatten)]
        metrics: &'a MetricsReport,
    }
    let rows: Vec<MetricsRow> = overall_metrics
        .iter()
        .map(|(name, m)| MetricsRow {
            classifier: name,
            metrics: m,
        })
        .collect();
    artifacts.write_json("metrics.json", &rows)?;
    artifacts.write("comparison.txt", render_comparison(&overall_metrics).as_bytes())?;

    // diverge: pairwise divergence of the group classifiers on the test set
    let names: Vec<&String> = predictions.keys().collect();
    let mut disagreements = Vec::new();
    for (x, a) in names.iter().enumerate() {
        for b in names.iter().skip(x + 1) {
            let census = stage(
                "diverge",
                classifier_disagreement(&predictions[*a], &predictions[*b], &config.scheme),
            )?;
            disagreements.push(((*a).clone(), (*b).clone(), census));
        }
    }
    #[derive(Serialize)]
    struct DivergeRow<'a> {
        first: &'a str,
        second: &'a str,
        #[serde(flatten)]
        census: &'a DisagreementCensus,
    }
    let rows: Vec<DivergeRow> = disagreements
        .iter()
        .map(|(a, b, c)| DivergeRow {
            first: a,
            second: b,
            census: c,
        })
        .collect();
    artifacts.write_json("disagreement.json", &rows)?;

    Ok(PipelineReport {
        partition,
        natural_comparison: comparison,
        census,
        agreement,
        overall_gold_train: overall_train,
        overall_gold_test: overall_test,
        group_gold_tests,
        predictions,
        ensemble,
        overall_metrics,
        group_metrics,
        disagreements,
        // replaced with the real manifest by the caller
        manifest: Manifest {
            version: String::new(),
            seed: config.seed,
            config: config.clone(),
            inputs: BTreeMap::new(),
            artifacts: Vec::new(),
            status: String::new(),
            failed_stage: None,
        },
    })
}

fn load_inputs(config: &RunConfig) -> Result<(AnnotationMatrix, Vec<CorpusItem>)> {
    let (mut matrix, texts) = match config.format {
        AnnotationFormat::WideTsv => load_wide_tsv(&config.annotations, config.scheme.clone())?,
        AnnotationFormat::LongCsv => {
            let matrix =
                load_annotations(&config.annotations, config.format, config.scheme.clone())?;
            let texts = match &config.texts {
                Some(path) => load_texts_jsonl(path)?,
                None => {
                    return Err(Error::Invalid(
                        "long-csv annotations need a texts file".into(),
                    ))
                }
            };
            (matrix, texts)
        }
    };
    if let Some(meta_path) = &config.annotator_meta {
        let meta = load_annotator_meta(meta_path)?;
        matrix.apply_annotator_meta(&meta);
    }
    Ok((matrix, texts))
}

fn build_partition(
    config: &RunConfig,
    matrix: &AnnotationMatrix,
) -> Result<(Partition, Option<NaturalComparison>)> {
    match &config.partition {
        PartitionMode::Natural {
            min_size,
            allow_large,
        } => {
            let natural = Partition::natural(matrix).ok_or_else(|| {
                Error::Invalid("no annotator carries a natural group tag".into())
            })?;
            let cmp = natural_comparison(matrix, &natural, *min_size, *allow_large)?;
            Ok((natural, Some(cmp)))
        }
        PartitionMode::Search {
            k,
            min_size,
            allow_large,
        } => {
            let result = search_max_polarization(matrix, *k, *min_size, *allow_large)?;
            Ok((result.best, None))
        }
    }
}
