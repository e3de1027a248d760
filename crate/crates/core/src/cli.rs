//! The `segvote` command line.
//!
//! Exit codes: 0 success, 1 data errors, 2 usage errors. Data goes to the
//! files named by flags; logs and summaries go to stderr.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::corpus::{corpus_stats, read_corpus, Document, Label};
use crate::ensemble::{Scheme, VotingConfig};
use crate::eval::{evaluate, SliceKey};
use crate::pipeline::detect_corpus;
use crate::protocol::Endpoint;
use crate::scoring::features::FeatureConfig;
use crate::scoring::ngram::{train_ngram_scorer, NgramScorerModel, TrainConfig};
use crate::scoring::{ExternalScorer, Scorer, ScorerSelector, ScoringError};
use crate::segmenter::{segment_text, SegmentRecord, SegmenterConfig};
use crate::syntax::gradcheck::{random_gradient_check, DEFAULT_EPSILON, DEFAULT_TOLERANCE};
use crate::syntax::model::{ModelConfig, SyntaxModel};
use crate::syntax::tagger::{read_tagged, TaggedCorpus, TaggerClient};
use crate::syntax::train::{predicted_label, SyntaxTrainConfig};
use crate::syntax::{checkpoint, train_syntax, UposSequence};

#[derive(Debug, Parser)]
#[command(name = "segvote", version, about = "Segment-and-vote detection of machine-generated text")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split every document into segments (JSONL, one segment per line).
    Segment(SegmentArgs),
    /// Corpus counts and word-count quantiles.
    Stats(StatsArgs),
    /// Train the built-in n-gram scorer on document-labelled segments.
    TrainScorer(TrainScorerArgs),
    /// Segment, score and vote; one verdict line per document.
    Detect(DetectArgs),
    /// Metrics and confusion matrix of verdicts against gold labels.
    Evaluate(EvaluateArgs),
    /// Train the UPOS BiLSTM classifier.
    TrainSyntax(TrainSyntaxArgs),
    /// Classify UPOS sequences with a trained syntax model.
    DetectSyntax(DetectSyntaxArgs),
    /// Check syntax-model gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Abort on the first malformed record instead of skipping it.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct SegmenterArgs {
    /// Also split at the Arabic question mark (U+061F).
    #[arg(long)]
    pub arabic_question_mark: bool,
}

impl SegmenterArgs {
    fn config(&self) -> SegmenterConfig {
        SegmenterConfig { arabic_question_mark: self.arabic_question_mark, ..Default::default() }
    }
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub segmenter: SegmenterArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub corpus: CorpusArgs,
}

#[derive(Debug, Args)]
pub struct TrainScorerArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 2)]
    pub n_low: usize,
    #[arg(long, default_value_t = 4)]
    pub n_high: usize,
    /// Hash dimension is 2^dim_bits.
    #[arg(long, default_value_t = 18)]
    pub dim_bits: u32,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub segmenter: SegmenterArgs,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// builtin:MODEL.json, exec:COMMAND or tcp:HOST:PORT
    #[arg(long)]
    pub scorer: ScorerSelector,
    #[arg(long, default_value = "wsoft")]
    pub scheme: Scheme,
    #[arg(long, default_value_t = 0.95)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Seconds to wait for an external scorer's handshake or reply.
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub segmenter: SegmenterArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub verdicts: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// language, generator or source
    #[arg(long)]
    pub slice: Option<SliceKey>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the confusion matrix as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub corpus: CorpusArgs,
}

/// Where UPOS sequences come from: a tagged JSONL file, or a corpus plus tagger.
#[derive(Debug, Args)]
pub struct TagSourceArgs {
    /// JSONL rows `{"id","tags":[...],"label"?}`.
    #[arg(long = "in", required_unless_present = "corpus_path", conflicts_with = "corpus_path")]
    pub input: Option<PathBuf>,
    /// Corpus to tag with --tagger.
    #[arg(long = "corpus", requires = "tagger")]
    pub corpus_path: Option<PathBuf>,
    /// exec:COMMAND or tcp:HOST:PORT
    #[arg(long)]
    pub tagger: Option<String>,
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
}

#[derive(Debug, Args)]
pub struct TrainSyntaxArgs {
    #[command(flatten)]
    pub source: TagSourceArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Separate validation file (tagged JSONL); otherwise --valid-fraction is held out.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub valid_fraction: f64,
    /// Per-epoch statistics as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 16)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 512)]
    pub max_len: usize,
}

#[derive(Debug, Args)]
pub struct DetectSyntaxArgs {
    #[command(flatten)]
    pub source: TagSourceArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Number of random models to check.
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 2)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 2)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    /// Sequence length.
    #[arg(long, default_value_t = 3)]
    pub length: usize,
    /// Full per-block report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Data(e.to_string())
    }
}

fn data_err(msg: impl Into<String>) -> CliError {
    CliError::Data(msg.into())
}

type CliResult = Result<(), CliError>;

/// Parse `argv` (including the program name) and run. Returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Segment(a) => cmd_segment(a),
        Command::Stats(a) => cmd_stats(a),
        Command::TrainScorer(a) => cmd_train_scorer(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::TrainSyntax(a) => cmd_train_syntax(a),
        Command::DetectSyntax(a) => cmd_detect_syntax(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nUsage: segvote <COMMAND> [OPTIONS]; see `segvote --help`");
            2
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| data_err(format!("cannot create {}: {e}", path.display())))
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn load_docs(path: &Path, corpus: &CorpusArgs) -> Result<Vec<Document>, CliError> {
    let (docs, skipped) = read_corpus(path, corpus.strict)?;
    if !skipped.is_empty() {
        log::warn!("{}: skipped {} malformed record(s)", path.display(), skipped.len());
    }
    Ok(docs)
}

fn cmd_segment(a: SegmentArgs) -> CliResult {
    let docs = load_docs(&a.input, &a.corpus)?;
    let cfg = a.segmenter.config();
    let mut out = create(&a.out)?;
    let mut count = 0;
    for doc in &docs {
        for seg in segment_text(doc, &cfg)? {
            serde_json::to_writer(&mut out, &SegmentRecord::from(&seg))?;
            out.write_all(b"\n")?;
            count += 1;
        }
    }
    out.flush()?;
    log::info!("wrote {count} segments from {} documents", docs.len());
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> CliResult {
    let docs = load_docs(&a.input, &a.corpus)?;
    let stats = corpus_stats(&docs);
    match &a.out {
        Some(path) => write_json_file(path, &stats),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            serde_json::to_writer_pretty(&mut lock, &stats)?;
            writeln!(lock)?;
            Ok(())
        }
    }
}

fn cmd_train_scorer(a: TrainScorerArgs) -> CliResult {
    if a.dim_bits == 0 || a.dim_bits > 28 {
        return Err(CliError::Usage(format!("--dim-bits must be in 1..=28, got {}", a.dim_bits)));
    }
    let docs = load_docs(&a.input, &a.corpus)?;
    let seg_cfg = a.segmenter.config();
    let mut segments = Vec::new();
    let mut unlabelled = 0;
    for doc in &docs {
        let Some(label) = doc.label else {
            unlabelled += 1;
            continue;
        };
        for seg in segment_text(doc, &seg_cfg)? {
            segments.push((seg.text, label));
        }
    }
    if unlabelled > 0 {
        log::warn!("ignored {unlabelled} unlabelled document(s)");
    }
    let examples: Vec<(&str, Label)> = segments.iter().map(|(t, l)| (t.as_str(), *l)).collect();
    let cfg = TrainConfig {
        features: FeatureConfig { n_low: a.n_low, n_high: a.n_high, dim: 1 << a.dim_bits },
        epochs: a.epochs,
        learning_rate: a.lr,
        batch_size: a.batch_size,
        seed: a.seed,
    };
    let model = train_ngram_scorer::<f64>(&examples, &cfg)?;
    let trace = &model.meta.loss_trace;
    eprintln!(
        "trained on {} segments: loss {:.4} -> {:.4}",
        examples.len(),
        trace[0],
        trace.last().unwrap()
    );
    model.save(&a.out)?;
    Ok(())
}

fn cmd_detect(a: DetectArgs) -> CliResult {
    if a.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let voting = VotingConfig::new(a.scheme, a.threshold).map_err(|e| CliError::Usage(e.to_string()))?;
    if !(a.timeout > 0.0 && a.timeout.is_finite()) {
        return Err(CliError::Usage("--timeout must be positive".into()));
    }
    let timeout = Duration::from_secs_f64(a.timeout);
    let docs = load_docs(&a.input, &a.corpus)?;
    let seg_cfg = a.segmenter.config();

    let builtin = match &a.scorer {
        ScorerSelector::Builtin(path) => Some(NgramScorerModel::<f64>::load(path)?),
        ScorerSelector::External(_) => None,
    };
    let make_scorer = || -> Result<Box<dyn Scorer + '_>, ScoringError> {
        match (&a.scorer, &builtin) {
            (ScorerSelector::Builtin(_), Some(model)) => Ok(Box::new(model.scorer())),
            (ScorerSelector::External(endpoint), _) => Ok(Box::new(ExternalScorer::connect(endpoint, timeout)?)),
            _ => unreachable!("builtin model loaded above"),
        }
    };
    let results = detect_corpus(&docs, &seg_cfg, &voting, a.workers, make_scorer);

    let mut out = create(&a.out)?;
    let mut failures = 0;
    for (doc, res) in docs.iter().zip(results) {
        match res {
            Ok(verdict) => {
                serde_json::to_writer(&mut out, &verdict.to_record())?;
                out.write_all(b"\n")?;
            }
            Err(e) => {
                failures += 1;
                log::error!("document {:?}: {e}", doc.id);
                if failures == 1 {
                    eprintln!("document {:?}: {e}", doc.id);
                }
            }
        }
    }
    out.flush()?;
    if failures > 0 {
        return Err(data_err(format!("{failures} of {} document(s) could not be classified", docs.len())));
    }
    Ok(())
}

fn read_verdicts(path: &Path) -> Result<Vec<(String, Label)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).map_err(|e| data_err(format!("{}:{}: {e}", path.display(), n + 1)))?;
        let id = v.get("doc_id").and_then(Value::as_str);
        let predicted = v.get("predicted").and_then(Value::as_u64).and_then(|p| u8::try_from(p).ok()).and_then(Label::from_u8);
        match (id, predicted) {
            (Some(id), Some(p)) => out.push((id.to_string(), p)),
            _ => return Err(data_err(format!("{}:{}: verdict needs doc_id and predicted 0|1", path.display(), n + 1))),
        }
    }
    Ok(out)
}

fn cmd_evaluate(a: EvaluateArgs) -> CliResult {
    let predictions = read_verdicts(&a.verdicts)?;
    let gold = load_docs(&a.gold, &a.corpus)?;
    let report = evaluate(&predictions, &gold, a.slice)?;
    write_json_file(&a.out, &report)?;
    if let Some(csv) = &a.csv {
        let mut out = create(csv)?;
        out.write_all(report.counts.to_csv().as_bytes())?;
        out.flush()?;
    }
    eprint!("{}", report.render_text());
    Ok(())
}

fn tag_source(src: &TagSourceArgs, max_len: usize) -> Result<TaggedCorpus, CliError> {
    let tagged = match (&src.input, &src.corpus_path, &src.tagger) {
        (Some(path), _, _) => {
            let file = File::open(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
            read_tagged(BufReader::new(file), max_len)?
        }
        (None, Some(corpus), Some(tagger)) => {
            let endpoint = match tagger.split_once(':') {
                Some(("exec", cmd)) if !cmd.is_empty() => Endpoint::Exec(cmd.to_string()),
                Some(("tcp", addr)) if !addr.is_empty() => Endpoint::Tcp(addr.to_string()),
                _ => return Err(CliError::Usage(format!("--tagger must be exec:CMD or tcp:HOST:PORT, got {tagger:?}"))),
            };
            let docs = load_docs(corpus, &CorpusArgs { strict: false })?;
            let channel = endpoint.open(Duration::from_secs_f64(src.timeout.max(0.001)))?;
            TaggerClient::handshake(channel)?.tag_documents(&docs, max_len)?
        }
        _ => return Err(CliError::Usage("give --in TAGGED.jsonl or --corpus C.jsonl --tagger ENDPOINT".into())),
    };
    for skip in &tagged.skipped {
        log::warn!("skipped {:?}: {}", skip.doc_id, skip.reason);
    }
    if !tagged.skipped.is_empty() {
        eprintln!("skipped {} document(s) without usable tags", tagged.skipped.len());
    }
    Ok(tagged)
}

fn cmd_train_syntax(a: TrainSyntaxArgs) -> CliResult {
    if !(0.0..1.0).contains(&a.valid_fraction) {
        return Err(CliError::Usage("--valid-fraction must be in [0, 1)".into()));
    }
    let config = ModelConfig { embed_dim: a.embed_dim, hidden: a.hidden, layers: a.layers, max_len: a.max_len };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut train = tag_source(&a.source, a.max_len)?.labelled();
    let valid = match &a.valid {
        Some(path) => {
            let file = File::open(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
            read_tagged(BufReader::new(file), a.max_len)?.labelled()
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            train.shuffle(&mut rng);
            let n_valid = (train.len() as f64 * a.valid_fraction).round() as usize;
            train.split_off(train.len() - n_valid)
        }
    };
    let cfg = SyntaxTrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        batch_size: a.batch_size,
        clip_norm: a.clip,
        seed: a.seed,
        target_accuracy: None,
    };
    let (model, report) = train_syntax::<f64>(config, a.seed, &train, &valid, &cfg)?;
    if let Some(last) = report.last() {
        eprintln!(
            "trained on {} sequences ({} validation): loss {:.4}, train acc {:.3}, valid acc {}",
            train.len(),
            valid.len(),
            last.train_loss,
            last.train_accuracy,
            last.valid_accuracy.map_or("n/a".into(), |v| format!("{v:.3}"))
        );
    }
    let meta = json!({"train": cfg, "epochs": report.epochs});
    checkpoint::save(&model, meta, &a.out)?;
    if let Some(path) = &a.report {
        write_json_file(path, &report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SyntaxVerdict<'a> {
    doc_id: &'a str,
    predicted: u8,
    p_machine: f64,
    threshold: f64,
    length: usize,
}

fn cmd_detect_syntax(a: DetectSyntaxArgs) -> CliResult {
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return Err(CliError::Usage("--threshold must lie strictly between 0 and 1".into()));
    }
    let model: SyntaxModel<f64> = checkpoint::load(&a.model)?;
    let tagged = tag_source(&a.source, model.config.max_len)?;
    let mut out = create(&a.out)?;
    for (seq, _) in &tagged.sequences {
        let UposSequence { doc_id, tags, .. } = seq;
        let p = model.predict(tags)?;
        let verdict = SyntaxVerdict {
            doc_id,
            predicted: predicted_label(p, a.threshold).as_u8(),
            p_machine: p,
            threshold: a.threshold,
            length: tags.len(),
        };
        serde_json::to_writer(&mut out, &verdict)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> CliResult {
    let config = ModelConfig { embed_dim: a.embed_dim, hidden: a.hidden, layers: a.layers, max_len: a.length };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut reports = Vec::new();
    for seed in a.seed..a.seed + a.seeds {
        let report = random_gradient_check(config, seed, a.epsilon, a.tolerance)?;
        eprintln!(
            "seed {seed}: worst relative error {:.3e} over {} blocks -> {}",
            report.worst(),
            report.blocks.len(),
            if report.passed() { "ok" } else { "FAIL" }
        );
        for b in report.blocks.iter().filter(|b| b.max_rel_error >= a.tolerance) {
            eprintln!("  {} [{}]: {:.3e}", b.name, b.worst_index, b.max_rel_error);
        }
        reports.push(report);
    }
    if let Some(path) = &a.out {
        write_json_file(path, &reports)?;
    }
    if reports.iter().all(|r| r.passed()) {
        Ok(())
    } else {
        Err(data_err("gradient check exceeded tolerance"))
    }
}
