//! `annopol` — subcommand CLI over the polarization toolkit.
//!
//! Every subcommand writes its artifacts plus a `manifest.json` (tool
//! version, input content hashes, parsed config, seed where applicable) into
//! the output directory, so any output can be reproduced from its manifest.
//!
//! Exit codes: 0 success, 1 runtime error (single-line message on stderr),
//! 2 usage error.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use annopol::agreement::agreement_report;
use annopol::augment::{replicate_by_polarization, AugmentPolicy, TrainInstance};
use annopol::classify::{
    import_predictions, tokenize, train_linear, Hyperparams, LinearModel, PredictionSet,
};
use annopol::corpus::{
    deduplicate, keyword_filter, keyword_frequencies, label_distribution, load_annotations,
    load_annotator_meta, load_texts_jsonl, load_wide_tsv, AnnotationFormat, AnnotationMatrix,
    CorpusItem, LabelScheme,
};
use annopol::error::Error;
use annopol::evalens::{
    classifier_disagreement, evaluate, inclusive_ensemble, render_comparison,
};
use annopol::goldstd::{
    load_gold_csv, majority_gold, train_test_split, SplitManifest, SplitSpec, TiePolicy,
};
use annopol::partition::{natural_comparison, search_max_polarization, Partition};
use annopol::pipeline::{full_pipeline, RunConfig};
use annopol::polarization::{
    p_index_all, polarization_census, rank_by_polarization, write_ranking_tsv,
};

type Result<T> = std::result::Result<T, Error>;

#[derive(Parser)]
#[command(name = "annopol", version, about = "Multi-annotator polarization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load annotations (and texts) and emit the canonical long CSV.
    Ingest(IngestArgs),
    /// Drop near-duplicate texts and restrict the annotations to the survivors.
    Dedup(IngestArgs),
    /// Keep only items matching at least one keyword; report keyword counts.
    Filter(FilterArgs),
    /// Corpus shape and label distribution.
    Stats(StatsArgs),
    /// Fleiss/Cohen agreement report, optionally per partition.
    Agreement(PartitionedArgs),
    /// Per-item polarization index under a partition.
    Polarize(PartitionedArgs),
    /// Items ranked by polarization, with texts when available.
    Rank(RankArgs),
    /// Search for the maximally polarized partition, or score the natural one.
    Partition(PartitionSearchArgs),
    /// Majority-vote gold standard for an annotator subset.
    Gold(GoldArgs),
    /// Seeded train/test split of a gold standard.
    Split(SplitArgs),
    /// Replicate low-polarization training items, drop maximally polarized ones.
    Augment(AugmentArgs),
    /// Train the reference TF-IDF + logistic-regression classifier.
    Train(TrainArgs),
    /// Predict with a trained reference model.
    Predict(PredictArgs),
    /// Validate and normalize externally produced predictions.
    Import(ImportArgs),
    /// Inclusive (OR) fusion of several prediction sets.
    Ensemble(EnsembleArgs),
    /// Metrics of one prediction set against a gold standard.
    Evaluate(EvaluateArgs),
    /// Divergence census between two classifiers.
    Diverge(DivergeArgs),
    /// Run the full pipeline from a JSON config.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FormatArg {
    LongCsv,
    WideTsv,
}

impl From<FormatArg> for AnnotationFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::LongCsv => AnnotationFormat::LongCsv,
            FormatArg::WideTsv => AnnotationFormat::WideTsv,
        }
    }
}

#[derive(Args, Serialize)]
struct InputArgs {
    /// Annotation file.
    #[arg(long)]
    annotations: PathBuf,
    /// Annotation file format.
    #[arg(long, value_enum, default_value_t = FormatArg::LongCsv)]
    format: FormatArg,
    /// JSON-lines text companion (unnecessary for wide TSV).
    #[arg(long)]
    texts: Option<PathBuf>,
    /// Annotator metadata CSV (`annotator_id,group,expert`).
    #[arg(long)]
    annotator_meta: Option<PathBuf>,
}

impl InputArgs {
    fn load(&self, scheme: &LabelScheme) -> Result<(AnnotationMatrix, Vec<CorpusItem>)> {
        let (mut matrix, texts) = match self.format {
            FormatArg::WideTsv => load_wide_tsv(&self.annotations, scheme.clone())?,
            FormatArg::LongCsv => {
                let matrix =
                    load_annotations(&self.annotations, AnnotationFormat::LongCsv, scheme.clone())?;
                let texts = match &self.texts {
                    Some(path) => load_texts_jsonl(path)?,
                    None => Vec::new(),
                };
                (matrix, texts)
            }
        };
        if let Some(meta) = &self.annotator_meta {
            matrix.apply_annotator_meta(&load_annotator_meta(meta)?);
        }
        Ok((matrix, texts))
    }

    fn paths(&self) -> Vec<&Path> {
        [Some(self.annotations.as_path()), self.texts.as_deref(), self.annotator_meta.as_deref()]
            .into_iter()
            .flatten()
            .collect()
    }
}

#[derive(Args, Serialize)]
struct SchemeArgs {
    /// Comma-separated label categories.
    #[arg(long, default_value = "0,1")]
    categories: String,
    /// The positive (detection) class.
    #[arg(long, default_value = "1")]
    positive: String,
}

impl SchemeArgs {
    fn build(&self) -> Result<LabelScheme> {
        let categories: Vec<String> = self
            .categories
            .split(',')
            .map(|c| c.trim().to_string())
            .collect();
        LabelScheme::new(categories, self.positive.trim())
    }
}

#[derive(Args, Serialize)]
struct GroupArgs {
    /// Explicit groups, e.g. `a,b|c,d`.
    #[arg(long, conflicts_with = "natural")]
    groups: Option<String>,
    /// Use the group tags from the annotator metadata.
    #[arg(long)]
    natural: bool,
}

impl GroupArgs {
    fn resolve(&self, matrix: &AnnotationMatrix) -> Result<Option<Partition>> {
        match (&self.groups, self.natural) {
            (Some(spec), _) => Ok(Some(parse_groups(spec)?)),
            (None, true) => Partition::natural(matrix)
                .map(Some)
                .ok_or_else(|| Error::Invalid("no annotator carries a natural group tag".into())),
            (None, false) => Ok(None),
        }
    }

    fn require(&self, matrix: &AnnotationMatrix) -> Result<Partition> {
        self.resolve(matrix)?
            .ok_or_else(|| Error::Invalid("a partition is required: pass --groups or --natural".into()))
    }
}

fn parse_groups(spec: &str) -> Result<Partition> {
    let groups = spec
        .split('|')
        .map(|g| {
            g.split(',')
                .map(|a| a.trim().to_string())
                .filter(|a| !a.is_empty())
                .collect()
        })
        .collect();
    Partition::new(groups)
}

#[derive(Args, Serialize)]
struct FilterArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Keyword to match as a whole token; repeatable.
    #[arg(long = "keyword", required = true)]
    keywords: Vec<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct StatsArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Count labels over this gold standard instead of modal raw annotations.
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct IngestArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct PartitionedArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[command(flatten)]
    partition: GroupArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct RankArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[command(flatten)]
    partition: GroupArgs,
    /// Sort ascending instead of descending.
    #[arg(long)]
    ascending: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct PartitionSearchArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Exhaustive search over all k-partitions.
    #[arg(long, conflicts_with = "natural")]
    search: bool,
    /// Score the natural partition against all other splits.
    #[arg(long)]
    natural: bool,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    min_size: usize,
    /// Enumerate even when the partition space exceeds the guard.
    #[arg(long)]
    allow_large: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct GoldArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Comma-separated annotator ids; default all annotators.
    #[arg(long)]
    annotators: Option<String>,
    /// Use the annotators carrying this natural group tag.
    #[arg(long, conflicts_with = "annotators")]
    group: Option<String>,
    #[arg(long, default_value = "prefer-positive")]
    tie_policy: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SplitArgs {
    /// Gold CSV to split.
    #[arg(long)]
    gold: PathBuf,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, default_value_t = 0.85)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Disable per-class stratification.
    #[arg(long)]
    no_stratify: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct AugmentArgs {
    /// Training gold CSV.
    #[arg(long)]
    gold: PathBuf,
    /// JSON-lines text companion.
    #[arg(long)]
    texts: PathBuf,
    /// Per-item polarization TSV as produced by `polarize`.
    #[arg(long)]
    scores: PathBuf,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Replication factor F.
    #[arg(long, default_value_t = 3)]
    factor: u32,
    /// Deletion threshold on p.
    #[arg(long, default_value_t = 1.0)]
    delete_threshold: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Training gold CSV.
    #[arg(long)]
    gold: PathBuf,
    /// JSON-lines text companion.
    #[arg(long)]
    texts: PathBuf,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, default_value_t = 0.5)]
    learning_rate: f64,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct PredictArgs {
    /// Trained model JSON.
    #[arg(long)]
    model: PathBuf,
    /// JSON-lines texts to predict on.
    #[arg(long)]
    texts: PathBuf,
    /// Name recorded as the prediction source.
    #[arg(long, default_value = "reference")]
    name: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ImportArgs {
    /// Predictions CSV (`item_id,label[,score]`).
    #[arg(long)]
    predictions: PathBuf,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Gold CSV to validate item coverage against.
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EnsembleArgs {
    /// Member prediction CSV; pass at least twice.
    #[arg(long = "predictions", required = true)]
    predictions: Vec<PathBuf>,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct DivergeArgs {
    /// Prediction CSV; pass exactly twice.
    #[arg(long = "predictions", required = true)]
    predictions: Vec<PathBuf>,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ReportArgs {
    /// Pipeline config JSON.
    #[arg(long)]
    config: PathBuf,
}

/// Manifest accumulator shared by all subcommands.
struct Run {
    out: PathBuf,
    inputs: BTreeMap<String, String>,
    artifacts: Vec<String>,
}

#[derive(Serialize)]
struct CliManifest<'a> {
    version: &'a str,
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    config: serde_json::Value,
    inputs: &'a BTreeMap<String, String>,
    artifacts: &'a [String],
}

impl Run {
    fn new(out: &Path, input_paths: &[&Path]) -> Result<Run> {
        std::fs::create_dir_all(out)?;
        let mut inputs = BTreeMap::new();
        for path in input_paths {
            let bytes = std::fs::read(path)?;
            let mut hasher = Sha256::new();
            hasher.update(&bytes);
            inputs.insert(path.display().to_string(), format!("{:x}", hasher.finalize()));
        }
        Ok(Run {
            out: out.to_path_buf(),
            inputs,
            artifacts: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.out.join(name), bytes)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    fn finish<C: Serialize>(self, command: &str, config: &C, seed: Option<u64>) -> Result<()> {
        let manifest = CliManifest {
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config: serde_json::to_value(config)?,
            inputs: &self.inputs,
            artifacts: &self.artifacts,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        let tmp = self.out.join("manifest.json.tmp");
        std::fs::write(&tmp, &bytes)?;
        std::fs::rename(tmp, self.out.join("manifest.json"))?;
        Ok(())
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli.command) {
        let msg: String = err
            .to_string()
            .chars()
            .map(|c| if c == '\n' { ' ' } else { c })
            .collect();
        eprintln!("error: {msg}");
        std::process::exit(1);
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => cmd_ingest(a, false),
        Command::Dedup(a) => cmd_ingest(a, true),
        Command::Filter(a) => cmd_filter(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Agreement(a) => cmd_agreement(a),
        Command::Polarize(a) => cmd_polarize(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Partition(a) => cmd_partition(a),
        Command::Gold(a) => cmd_gold(a),
        Command::Split(a) => cmd_split(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Import(a) => cmd_import(a),
        Command::Ensemble(a) => cmd_ensemble(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Diverge(a) => cmd_diverge(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn write_matrix_and_texts(
    run: &mut Run,
    matrix: &AnnotationMatrix,
    texts: &[CorpusItem],
) -> Result<()> {
    let mut bytes = Vec::new();
    matrix.write_long_csv(&mut bytes)?;
    run.write("annotations.csv", &bytes)?;
    if !texts.is_empty() {
        let mut bytes = Vec::new();
        for item in texts {
            serde_json::to_writer(&mut bytes, item)?;
            bytes.push(b'\n');
        }
        run.write("texts.jsonl", &bytes)?;
    }
    Ok(())
}

fn cmd_ingest(args: IngestArgs, dedup: bool) -> Result<()> {
    let scheme = args.scheme.build()?;
    let (matrix, mut texts) = args.input.load(&scheme)?;
    let mut run = Run::new(&args.out, &args.input.paths())?;
    let matrix = if dedup {
        if texts.is_empty() {
            return Err(Error::Invalid("dedup needs item texts".into()));
        }
        texts = deduplicate(&texts);
        let keep: HashSet<String> = texts.iter().map(|t| t.id.clone()).collect();
        matrix.restrict_items(&keep)
    } else {
        matrix
    };
    write_matrix_and_texts(&mut run, &matrix, &texts)?;
    let name = if dedup { "dedup" } else { "ingest" };
    println!(
        "{name}: {} items, {} annotators",
        matrix.items().len(),
        matrix.annotators().len()
    );
    run.finish(name, &args, None)
}

fn cmd_filter(args: FilterArgs) -> Result<()> {
    let scheme = args.scheme.build()?;
    let (matrix, texts) = args.input.load(&scheme)?;
    if texts.is_empty() {
        return Err(Error::Invalid("filter needs item texts".into()));
    }
    let mut run = Run::new(&args.out, &args.input.paths())?;
    let frequencies = keyword_frequencies(&texts, &args.keywords);
    let kept = keyword_filter(&texts, &args.keywords);
    let keep: HashSet<String> = kept.iter().map(|t| t.id.clone()).collect();
    if keep.is_empty() {
        return Err(Error::NoUsableItems);
    }
    let matrix = matrix.restrict_items(&keep);
    write_matrix_and_texts(&mut run, &matrix, &kept)?;
    let mut table = String::new();
    for (kw, count) in &frequencies {
        table.push_str(&format!("{kw}\t{count}\n"));
    }
    run.write("keyword_counts.tsv", table.as_bytes())?;
    println!("filter: kept {} of {} items", kept.len(), texts.len());
    run.finish("filter", &args, None)
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let scheme = args.scheme.build()?;
    let (matrix, texts) = args.input.load(&scheme)?;
    let mut input_paths = args.input.paths();
    if let Some(gold) = &args.gold {
        input_paths.push(gold);
    }
    let mut run = Run::new(&args.out, &input_paths)?;
    let gold = args
        .gold
        .as_ref()
        .map(|p| load_gold_csv(p, Some(&scheme)))
        .transpose()?;
    #[derive(Serialize)]
    struct Stats {
        items: usize,
        annotators: usize,
        texts: usize,
        distribution: annopol::corpus::LabelDistribution,
    }
    let stats = Stats {
        items: matrix.items().len(),
        annotators: matrix.annotators().len(),
        texts: texts.len(),
        distribution: label_distribution(&matrix, gold.as_ref()),
    };
    run.write_json("stats.json", &stats)?;
    println!(
        "stats: {} items, {} annotators, total labeled {}",
        stats.items, stats.annotators, stats.distribution.total
    );
    run.finish("stats", &args, None)
}

fn cmd_agreement(args: PartitionedArgs) -> Result<()> {
    let scheme = args.scheme.build()?;
    let (matrix, _) = args.input.load(&scheme)?;
    let mut run = Run::new(&args.out, &args.input.paths())?;
    let partition = args.partition.resolve(&matrix)?;
    let report = agreement_report(&matrix, partition.as_ref());
    run.write_json("agreement.json", &report)?;
    run.write("agreement.txt", report.render_text().as_bytes())?;
    print!("{}", report.render_text());
    run.finish("agreement", &args, None)
}

fn cmd_polarize(args: PartitionedArgs) -> Result<()> {
    let scheme = args.scheme.build()?;
    let (matrix, _) = args.input.load(&scheme)?;
    let mut run = Run::new(&args.out, &args.input.paths())?;
    let partition = args.partition.require(&matrix)?;
    let scores = p_index_all::<f64>(&matrix, &partition);
    let mut tsv = String::new();
    for (item, score) in matrix.items().iter().zip(&scores) {
        match score {
            Some(s) => tsv.push_str(&format!("{item}\t{:.6}\n", s.p)),
            None => tsv.push_str(&format!("{item}\tundefined\n")),
        }
    }
    run.write("polarization.tsv", tsv.as_bytes())?;
    let census = polarization_census(&matrix, &partition);
    run.write_json("census.json", &census)?;
    println!(
        "polarize: {} defined, {} undefined, {} at p=1, {} at p=0",
        census.defined_items, census.undefined_items, census.max_polarization, census.zero_polarization
    );
    run.finish("polarize", &args, None)
}

fn cmd_rank(args: RankArgs) -> Result<()> {
    let scheme = args.scheme.build()?;
    let (matrix, texts) = args.input.load(&scheme)?;
    let mut run = Run::new(&args.out, &args.input.paths())?;
    let partition = args.partition.require(&matrix)?;
    let ranking = rank_by_polarization::<f64>(&matrix, &partition, !args.ascending);
    let mut bytes = Vec::new();
    let texts_opt = if texts.is_empty() { None } else { Some(texts.as_slice()) };
    write_ranking_tsv(&ranking, texts_opt, &mut bytes)?;
    run.write("ranking.tsv", &bytes)?;
    println!("rank: {} items", ranking.len());
    run.finish("rank", &args, None)
}

fn cmd_partition(args: PartitionSearchArgs) -> Result<()> {
    let scheme = args.scheme.build()?;
    let (matrix, _) = args.input.load(&scheme)?;
    let mut run = Run::new(&args.out, &args.input.paths())?;
    if args.natural {
        let natural = Partition::natural(&matrix)
            .ok_or_else(|| Error::Invalid("no annotator carries a natural group tag".into()))?;
        let cmp = natural_comparison(&matrix, &natural, args.min_size, args.allow_large)?;
        run.write_json("partition.json", &natural)?;
        run.write_json("natural_comparison.json", &cmp)?;
        println!(
            "partition: natural avg p {:.4}, max other {:?}, min other {:?}",
            cmp.natural_avg_p, cmp.max_other, cmp.min_other
        );
    } else {
        let result = search_max_polarization(&matrix, args.k, args.min_size, args.allow_large)?;
        run.write_json("partition.json", &result.best)?;
        let mut scores = String::new();
        for s in &result.ranking {
            scores.push_str(&format!(
                "{}\t{:.6}\t{}\n",
                s.partition.render(),
                s.avg_p,
                s.defined_items
            ));
        }
        run.write("scores.tsv", scores.as_bytes())?;
        println!(
            "partition: best {} with avg p {:.4} over {} candidates",
            result.best.render(),
            result.best_avg_p,
            result.ranking.len()
        );
    }
    run.finish("partition", &args, None)
}

fn cmd_gold(args: GoldArgs) -> Result<()> {
    let scheme = args.scheme.build()?;
    let (matrix, _) = args.input.load(&scheme)?;
    let mut run = Run::new(&args.out, &args.input.paths())?;
    let tie_policy: TiePolicy = args.tie_policy.parse()?;
    let (subset, source) = if let Some(list) = &args.annotators {
        let ids: Vec<String> = list.split(',').map(|a| a.trim().to_string()).collect();
        (ids, "subset".to_string())
    } else if let Some(tag) = &args.group {
        let ids: Vec<String> = matrix
            .annotators()
            .iter()
            .filter(|a| a.group.as_deref() == Some(tag.as_str()))
            .map(|a| a.id.clone())
            .collect();
        if ids.is_empty() {
            return Err(Error::Invalid(format!("no annotator in group {tag:?}")));
        }
        (ids, tag.clone())
    } else {
        (matrix.annotator_ids(), "overall".to_string())
    };
    let gold = majority_gold(&matrix, &subset, tie_policy, &source)?;
    let mut bytes = Vec::new();
    gold.write_csv(&mut bytes)?;
    run.write("gold.csv", &bytes)?;
    println!(
        "gold: {} items labeled, {} ties, {} excluded",
        gold.len(),
        gold.tie_count,
        gold.excluded.len()
    );
    run.finish("gold", &args, None)
}

fn cmd_split(args: SplitArgs) -> Result<()> {
    let scheme = args.scheme.build()?;
    let gold = load_gold_csv(&args.gold, Some(&scheme))?;
    let mut run = Run::new(&args.out, &[args.gold.as_path()])?;
    let spec = SplitSpec::new(args.train_fraction, args.seed, !args.no_stratify)?;
    let (train, test) = train_test_split(&gold, &spec)?;
    let mut bytes = Vec::new();
    train.write_csv(&mut bytes)?;
    run.write("gold_train.csv", &bytes)?;
    let mut bytes = Vec::new();
    test.write_csv(&mut bytes)?;
    run.write("gold_test.csv", &bytes)?;
    run.write_json(
        "split.json",
        &SplitManifest {
            seed: args.seed,
            train_ids: train.labels.keys().cloned().collect(),
            test_ids: test.labels.keys().cloned().collect(),
            stratified: !args.no_stratify,
        },
    )?;
    println!("split: {} train, {} test", train.len(), test.len());
    run.finish("split", &args, Some(args.seed))
}

fn load_scores_tsv(path: &Path) -> Result<BTreeMap<String, f64>> {
    let content = std::fs::read_to_string(path)?;
    let mut scores = BTreeMap::new();
    for (idx, line) in content.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(id), Some(p)) = (fields.next(), fields.next()) else {
            return Err(Error::MalformedRow {
                line: idx as u64 + 1,
                reason: "expected item_id<TAB>p".into(),
            });
        };
        if p == "undefined" {
            continue;
        }
        let p: f64 = p.parse().map_err(|_| Error::MalformedRow {
            line: idx as u64 + 1,
            reason: format!("bad p value {p:?}"),
        })?;
        scores.insert(id.to_string(), p);
    }
    Ok(scores)
}

fn cmd_augment(args: AugmentArgs) -> Result<()> {
    let scheme = args.scheme.build()?;
    let gold = load_gold_csv(&args.gold, Some(&scheme))?;
    let texts = load_texts_jsonl(&args.texts)?;
    let scores = load_scores_tsv(&args.scores)?;
    let mut run = Run::new(
        &args.out,
        &[args.gold.as_path(), args.texts.as_path(), args.scores.as_path()],
    )?;
    let text_of: BTreeMap<&str, &str> = texts
        .iter()
        .map(|t| (t.id.as_str(), t.text.as_str()))
        .collect();
    let instances: Vec<TrainInstance> = gold
        .labels
        .iter()
        .map(|(id, label)| TrainInstance {
            item_id: id.clone(),
            label: label.clone(),
            text: text_of.get(id.as_str()).copied().unwrap_or("").to_string(),
        })
        .collect();
    let policy = AugmentPolicy::new(args.factor, args.delete_threshold)?;
    let augmented = replicate_by_polarization(&instances, &scores, &policy);
    let mut bytes = Vec::new();
    augmented.write_csv(&mut bytes)?;
    run.write("augmented.csv", &bytes)?;
    let expanded = augmented.expanded().len();
    println!(
        "augment: {} instances ({expanded} after expansion), {} without a defined p",
        augmented.instances.len(),
        augmented.undefined_p_items.len()
    );
    run.finish("augment", &args, None)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let scheme = args.scheme.build()?;
    let gold = load_gold_csv(&args.gold, Some(&scheme))?;
    let texts = load_texts_jsonl(&args.texts)?;
    let mut run = Run::new(&args.out, &[args.gold.as_path(), args.texts.as_path()])?;
    let docs: Vec<_> = texts.iter().map(tokenize).collect();
    let hyperparams = Hyperparams {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        l2: args.l2,
    };
    let model = train_linear(&docs, &gold, &scheme, hyperparams, args.seed)?;
    let mut bytes = Vec::new();
    model.save_json(&mut bytes)?;
    run.write("model.json", &bytes)?;
    println!(
        "train: {} features over {} labeled documents",
        model.weights.len(),
        gold.len()
    );
    run.finish("train", &args, Some(args.seed))
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = LinearModel::load_json(std::fs::File::open(&args.model)?)?;
    let texts = load_texts_jsonl(&args.texts)?;
    let mut run = Run::new(&args.out, &[args.model.as_path(), args.texts.as_path()])?;
    let docs: Vec<_> = texts.iter().map(tokenize).collect();
    let preds = model.predict(&docs, &args.name);
    let mut bytes = Vec::new();
    preds.write_csv(&mut bytes)?;
    run.write("predictions.csv", &bytes)?;
    println!("predict: {} items", preds.predictions.len());
    run.finish("predict", &args, None)
}

fn cmd_import(args: ImportArgs) -> Result<()> {
    let scheme = args.scheme.build()?;
    let gold = args
        .gold
        .as_ref()
        .map(|p| load_gold_csv(p, Some(&scheme)))
        .transpose()?;
    let mut input_paths = vec![args.predictions.as_path()];
    if let Some(g) = &args.gold {
        input_paths.push(g);
    }
    let mut run = Run::new(&args.out, &input_paths)?;
    let (preds, warnings) = import_predictions(&args.predictions, &scheme, gold.as_ref())?;
    for id in &warnings {
        eprintln!("warning: predicted item {id:?} is unknown to the gold standard");
    }
    let mut bytes = Vec::new();
    preds.write_csv(&mut bytes)?;
    run.write("predictions.csv", &bytes)?;
    println!(
        "import: {} predictions from {:?}, {} warnings",
        preds.predictions.len(),
        preds.source,
        warnings.len()
    );
    run.finish("import", &args, None)
}

fn load_prediction_sets(paths: &[PathBuf], scheme: &LabelScheme) -> Result<Vec<PredictionSet>> {
    paths
        .iter()
        .map(|p| import_predictions(p, scheme, None).map(|(preds, _)| preds))
        .collect()
}

fn cmd_ensemble(args: EnsembleArgs) -> Result<()> {
    let scheme = args.scheme.build()?;
    let sets = load_prediction_sets(&args.predictions, &scheme)?;
    let input_paths: Vec<&Path> = args.predictions.iter().map(|p| p.as_path()).collect();
    let mut run = Run::new(&args.out, &input_paths)?;
    let members: Vec<&PredictionSet> = sets.iter().collect();
    let fused = inclusive_ensemble(&members, &scheme)?;
    let mut bytes = Vec::new();
    fused.write_csv(&mut bytes)?;
    run.write("predictions.csv", &bytes)?;
    let positives = fused
        .predictions
        .values()
        .filter(|l| l.as_str() == scheme.positive())
        .count();
    println!(
        "ensemble: {} items fused from {} members, {positives} positive",
        fused.predictions.len(),
        members.len()
    );
    run.finish("ensemble", &args, None)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let scheme = args.scheme.build()?;
    let gold = load_gold_csv(&args.gold, Some(&scheme))?;
    let (preds, _) = import_predictions(&args.predictions, &scheme, Some(&gold))?;
    let mut run = Run::new(&args.out, &[args.predictions.as_path(), args.gold.as_path()])?;
    let metrics = evaluate(&preds, &gold, &scheme)?;
    run.write_json("metrics.json", &metrics)?;
    let table = render_comparison(&[(preds.source.clone(), metrics)]);
    run.write("metrics.txt", table.as_bytes())?;
    print!("{table}");
    run.finish("evaluate", &args, None)
}

fn cmd_diverge(args: DivergeArgs) -> Result<()> {
    if args.predictions.len() != 2 {
        return Err(Error::Invalid(format!(
            "diverge compares exactly 2 prediction sets, got {}",
            args.predictions.len()
        )));
    }
    let scheme = args.scheme.build()?;
    let sets = load_prediction_sets(&args.predictions, &scheme)?;
    let input_paths: Vec<&Path> = args.predictions.iter().map(|p| p.as_path()).collect();
    let mut run = Run::new(&args.out, &input_paths)?;
    let census = classifier_disagreement(&sets[0], &sets[1], &scheme)?;
    run.write_json("disagreement.json", &census)?;
    println!(
        "diverge: {} of {} items ({}%)",
        census.diverging, census.compared, census.diverging_pct
    );
    run.finish("diverge", &args, None)
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let config: RunConfig = serde_json::from_reader(std::fs::File::open(&args.config)?)?;
    let report = full_pipeline(&config)?;
    println!("partition: {}", report.partition.render());
    if let Some(cmp) = &report.natural_comparison {
        println!(
            "natural avg p {:.4} (other splits: max {:?}, min {:?})",
            cmp.natural_avg_p, cmp.max_other, cmp.min_other
        );
    }
    println!(
        "polarization: {} defined items, {} at p=1 ({}%), {} at p=0 ({}%)",
        report.census.defined_items,
        report.census.max_polarization,
        report.census.max_polarization_pct,
        report.census.zero_polarization,
        report.census.zero_polarization_pct
    );
    print!("{}", render_comparison(&report.overall_metrics));
    for (a, b, census) in &report.disagreements {
        println!(
            "diverge {a} vs {b}: {} of {} items ({}%)",
            census.diverging, census.compared, census.diverging_pct
        );
    }
    println!("artifacts: {}", config.output_dir.display());
    Ok(())
}
