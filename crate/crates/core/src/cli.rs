//! Command-line front end. `run` returns the process exit code:
//! 0 success, 1 usage, 2 input, 3 internal invariant violation.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, Cursor, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::Config;
use crate::datagen::{generate_dataset, write_dataset, DatasetSpec};
use crate::error::{Error, Result};
use crate::filter::{filter_reader, match_pattern};
use crate::metrics::{EvalReport, MatchStats};
use crate::parser::parse;
use crate::pattern_model::{select_patterns, PatternModel};
use crate::privacy::{
    aggregate, encode_pattern, load_encodings, write_encodings, BloomConfig, EncodingStore,
    StoreOptions, DEFAULT_STORE_PERMUTATIONS, DEFAULT_STORE_THRESHOLD,
};
use crate::tokenizer::{preprocess_reader, LineCache, Pattern};

#[derive(Debug, Parser)]
#[command(
    name = "logsieve",
    version,
    about = "Mine log templates, filter logs down to anomalies, and share learned patterns as Bloom encodings"
)]
struct Cli {
    /// Worker threads [default: available cores]
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a pattern model from log files
    Train(TrainArgs),
    /// Report the anomalous lines of a log file
    Filter(FilterArgs),
    /// Quality loss of a model, on its training stats or on new logs
    Eval(EvalArgs),
    /// Bloom-encode a model's patterns, or the patterns of a log/pattern file
    Encode(EncodeArgs),
    /// Merge encoding files into a shared store
    Aggregate(AggregateArgs),
    /// Generate a synthetic train/test dataset with ground truth
    GenData(GenDataArgs),
}

/// Every `Config` field. Precedence: defaults < --config file < flags.
#[derive(Debug, Args, Default)]
struct ConfigArgs {
    /// JSON file with any subset of the config fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// LCS similarity fraction for grouping and matching [default: 0.65]
    #[arg(long)]
    alpha: Option<f64>,
    /// Mode frequency fraction that makes an alignment column constant [default: 0.7]
    #[arg(long)]
    beta: Option<f64>,
    /// Occurrences above which an unmatched pattern is suppressed [default: 250]
    #[arg(long)]
    gamma: Option<u64>,
    /// LSH Jaccard similarity threshold [default: 0.75]
    #[arg(long = "jaccard-threshold")]
    jaccard_threshold: Option<f64>,
    /// MinHash permutations [default: 100]
    #[arg(long = "permutations")]
    num_permutations: Option<usize>,
    /// Token shingle width [default: 2]
    #[arg(long = "shingle-n")]
    shingle_n: Option<usize>,
    /// Share of training lines the selected patterns must cover [default: 0.98]
    #[arg(long = "coverage")]
    coverage_fraction: Option<f64>,
    /// Share of training files that forces a pattern into the model [default: 0.7]
    #[arg(long = "file-presence")]
    file_presence_fraction: Option<f64>,
    /// Reduction rounds before giving up on a fixed point [default: 10]
    #[arg(long = "max-iterations")]
    max_iterations: Option<usize>,
    /// Hashing seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(path) => Config::from_json(&read_text(path)?)?,
            None => Config::default(),
        };
        macro_rules! apply {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        apply!(
            alpha,
            beta,
            gamma,
            jaccard_threshold,
            num_permutations,
            shingle_n,
            coverage_fraction,
            file_presence_fraction,
            max_iterations,
            seed
        );
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct StoreArgs {
    /// Bitmap Jaccard an encoding match needs [default: 0.9]
    #[arg(long = "store-threshold")]
    store_threshold: Option<f64>,
    /// MinHash permutations of the store's LSH index [default: 128]
    #[arg(long = "store-permutations")]
    store_permutations: Option<usize>,
}

impl StoreArgs {
    fn options(&self) -> StoreOptions {
        StoreOptions {
            threshold: self.store_threshold.unwrap_or(DEFAULT_STORE_THRESHOLD),
            num_permutations: self.store_permutations.unwrap_or(DEFAULT_STORE_PERMUTATIONS),
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Log files or directories of log files ("-" for stdin); one training file each
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Model file to write
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[arg(long)]
    model: PathBuf,
    /// Log file to filter ("-" for stdin)
    #[arg(long = "in")]
    input: PathBuf,
    /// Encoding store from `aggregate`
    #[arg(long)]
    encodings: Option<PathBuf>,
    /// Report file [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    store: StoreArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Logs to measure on; without it the model's training stats are used
    #[arg(long = "in", num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Include the per-pattern terms
    #[arg(long)]
    terms: bool,
    /// Report file [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct BloomArgs {
    /// Bitmap width in bits, a power of two [default: 1024]
    #[arg(long = "bloom-m")]
    m: Option<usize>,
    /// Hash positions per shingle [default: 2]
    #[arg(long = "bloom-k")]
    k: Option<usize>,
    /// Token shingle width [default: 2]
    #[arg(long = "shingle-n")]
    shingle_n: Option<usize>,
    /// Hashing seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

impl BloomArgs {
    fn over(&self, base: BloomConfig) -> Result<BloomConfig> {
        let cfg = BloomConfig {
            m: self.m.unwrap_or(base.m),
            k: self.k.unwrap_or(base.k),
            shingle_n: self.shingle_n.unwrap_or(base.shingle_n),
            seed: self.seed.unwrap_or(base.seed),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "source")]
struct EncodeSource {
    /// Encode the patterns of this model, weighted by their frequency
    #[arg(long)]
    model: Option<PathBuf>,
    /// Encode the distinct patterns of a log or pattern file
    #[arg(long = "in")]
    input: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[command(flatten)]
    source: EncodeSource,
    /// Encoding file to write
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    bloom: BloomArgs,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    /// Encoding files or directories of them; each file is one client
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Store file to write
    #[arg(long)]
    out: PathBuf,
    /// Share of total frequency the kept blocks must cover [default: 0.98]
    #[arg(long)]
    coverage: Option<f64>,
    #[command(flatten)]
    store: StoreArgs,
    /// Expected bloom settings [default: those of the first input]
    #[command(flatten)]
    bloom: BloomArgs,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// JSON file with any subset of the dataset fields
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Number of templates [default: 12968]
    #[arg(long)]
    templates: Option<usize>,
    /// Share of templates used as success templates [default: 0.75]
    #[arg(long = "success-fraction")]
    success_fraction: Option<f64>,
    /// Files per split [default: 8]
    #[arg(long)]
    files: Option<usize>,
    /// Lines per file [default: 15000]
    #[arg(long)]
    lines: Option<usize>,
    /// Share of success templates present in every training file [default: 0.5]
    #[arg(long = "universal-fraction")]
    universal_fraction: Option<f64>,
    /// Chance a slot holds a plain word [default: 0]
    #[arg(long = "word-slot-rate")]
    word_slot_rate: Option<f64>,
    /// Zipf exponent of line frequencies, 0 for uniform [default: 0]
    #[arg(long)]
    zipf: Option<f64>,
    /// Generator seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) | Error::Config(_) | Error::InfeasibleSpec(_) => 1,
        Error::Input { .. }
        | Error::Io { .. }
        | Error::MalformedRecord { .. }
        | Error::VersionMismatch { .. }
        | Error::ChecksumMismatch { .. }
        | Error::MixedBloomConfig(_)
        | Error::EmptyPatternSet => 2,
        Error::EmptyShingleSet | Error::EmptyMatrix | Error::AllRowsMisfit | Error::Invariant(_) => 3,
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// exit code. Errors are printed to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = match cli.workers {
        Some(0) => Err(Error::Usage("--workers must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Error::Usage(format!("cannot start {n} workers: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => train(a),
        Command::Filter(a) => filter(a),
        Command::Eval(a) => eval(a),
        Command::Encode(a) => encode(a),
        Command::Aggregate(a) => aggregate_cmd(a),
        Command::GenData(a) => gen_data(a),
    }
}

#[derive(Serialize)]
struct TimingLine<'a> {
    stage: &'a str,
    elapsed_ms: f64,
}

fn timing(stage: &str, elapsed: Duration) {
    let line = TimingLine {
        stage,
        elapsed_ms: elapsed.as_secs_f64() * 1e3,
    };
    eprintln!("{}", serde_json::to_string(&line).expect("timing serializes"));
}

fn timed<T>(stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    timing(stage, start.elapsed());
    Ok(out)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Expands directories (sorted, regular files only, not recursive).
fn expand_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for path in paths {
        if path.as_os_str() == "-" {
            out.push(path.clone());
            continue;
        }
        let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
        if meta.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(path, e)))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(Error::Usage(format!("{} contains no files", path.display())));
            }
            out.extend(files);
        } else {
            out.push(path.clone());
        }
    }
    Ok(out)
}

type Source = Box<dyn io::BufRead + Send>;

fn open_input(path: &Path) -> Result<Source> {
    if path.as_os_str() == "-" {
        let mut buf = Vec::new();
        io::stdin()
            .read_to_end(&mut buf)
            .map_err(|source| Error::Input { offset: 0, source })?;
        return Ok(Box::new(Cursor::new(buf)));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(Box::new(BufReader::new(file)))
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).map_err(|e| Error::io(path, e)),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let paths = expand_inputs(&a.inputs)?;
    let readers = paths.iter().map(|p| open_input(p)).collect::<Result<Vec<_>>>()?;
    let outcome = parse(readers, &cfg)?;
    for t in &outcome.timings {
        timing(&t.stage, t.elapsed);
    }
    let model = timed("select", || select_patterns(&outcome.patterns, &cfg))?;
    timed("save", || model.save(&a.out))?;
    log::info!(
        "{} files, {} unique preprocessed patterns, {} after reduction, {} selected",
        paths.len(),
        outcome.preprocessed,
        outcome.patterns.len(),
        model.len()
    );
    Ok(())
}

fn load_store(path: &Path, args: &StoreArgs) -> Result<EncodingStore> {
    EncodingStore::load(path, args.options())
}

fn filter(a: FilterArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let model = timed("load_model", || PatternModel::load(&a.model))?;
    let store = match &a.encodings {
        Some(path) => Some(timed("load_encodings", || load_store(path, &a.store))?),
        None => None,
    };
    let input = open_input(&a.input)?;
    let report = timed("filter", || filter_reader(&model, store.as_ref(), input, &cfg))?;
    let mut bytes = Vec::new();
    report.write_to(&mut bytes).expect("writing to memory");
    write_output(a.out.as_deref(), &bytes)
}

#[derive(Serialize)]
struct EvalOutput {
    #[serde(flatten)]
    report: EvalReport,
    lines_in: u64,
    unmatched_lines: u64,
}

fn eval(a: EvalArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let model = PatternModel::load(&a.model)?;
    let mut stats: BTreeMap<Pattern, MatchStats> = BTreeMap::new();
    let (mut lines_in, mut unmatched) = (0u64, 0u64);
    if a.inputs.is_empty() {
        for p in model.patterns() {
            stats.insert(
                p.pattern.clone(),
                MatchStats {
                    frequency: p.frequency,
                    match_count: p.match_count,
                    length_sum: p.length_sum,
                    files: Default::default(),
                },
            );
            lines_in += p.frequency;
        }
    } else {
        for path in expand_inputs(&a.inputs)? {
            let counts = preprocess_reader(open_input(&path)?, &mut LineCache::default())?;
            lines_in += counts.source_lines + counts.blank_lines;
            let mut entries: Vec<_> = counts.entries.into_iter().collect();
            entries.sort();
            for (p, n) in entries {
                match match_pattern(&model, &p, cfg.alpha) {
                    Some(id) => {
                        let target = model.patterns()[id].pattern.clone();
                        let s = MatchStats::for_sequence(p.len(), n, Default::default());
                        stats.entry(target).or_default().merge(&s);
                    }
                    None => unmatched += n,
                }
            }
        }
    }
    let report = EvalReport::build(&stats, a.terms)?;
    let out = EvalOutput {
        report,
        lines_in,
        unmatched_lines: unmatched,
    };
    let mut bytes = serde_json::to_vec(&out).expect("report serializes");
    bytes.push(b'\n');
    write_output(a.out.as_deref(), &bytes)
}

fn encode(a: EncodeArgs) -> Result<()> {
    let cfg = a.bloom.over(BloomConfig::default())?;
    let mut weighted: Vec<(Pattern, u64)> = match (&a.source.model, &a.source.input) {
        (Some(path), _) => PatternModel::load(path)?
            .patterns()
            .iter()
            .map(|p| (p.pattern.clone(), p.frequency))
            .collect(),
        (None, Some(path)) => preprocess_reader(open_input(path)?, &mut LineCache::default())?
            .entries
            .into_iter()
            .collect(),
        (None, None) => return Err(Error::Usage("encode needs --model or --in".into())),
    };
    weighted.sort();
    let encodings: Vec<_> = weighted
        .iter()
        .map(|(p, f)| encode_pattern(p, &cfg).with_frequency(*f))
        .collect();
    let bytes = write_encodings(&cfg, &encodings);
    fs::write(&a.out, bytes).map_err(|e| Error::io(&a.out, e))
}

fn aggregate_cmd(a: AggregateArgs) -> Result<()> {
    let coverage = a.coverage.unwrap_or(Config::default().coverage_fraction);
    let mut submissions = Vec::new();
    let mut base: Option<BloomConfig> = None;
    for path in expand_inputs(&a.inputs)? {
        let (cfg, encodings) = load_encodings(&path)?;
        base.get_or_insert(cfg);
        let client = path.display().to_string();
        submissions.extend(encodings.into_iter().map(|e| (e, client.clone())));
    }
    let cfg = a.bloom.over(base.unwrap_or_default())?;
    let store = timed("aggregate", || aggregate(&submissions, &cfg, coverage, a.store.options()))?;
    store.save(&a.out)
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(path) => serde_json::from_str::<DatasetSpec>(&read_text(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        None => DatasetSpec::default(),
    };
    macro_rules! apply {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = a.$flag { spec.$field = v; })*
        };
    }
    apply!(
        templates => template_count,
        success_fraction => success_fraction,
        files => files_per_split,
        lines => lines_per_file,
        universal_fraction => universal_fraction,
        word_slot_rate => word_slot_rate,
        zipf => zipf_exponent,
        seed => seed
    );
    let ds = timed("generate", || generate_dataset(&spec))?;
    timed("write", || write_dataset(&ds, &a.out))
}
