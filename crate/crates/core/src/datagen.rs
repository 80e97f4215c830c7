//! Deterministic synthetic log corpora with known templates.
//!
//! Templates are short sentences over a log lexicon (levels, component
//! names, verbs, nouns) with one to three variable slots. Slots are filled
//! with numbers, decimals, hex values, address:port pairs, long encoded ids
//! or paths, all of which the tokenizer turns into wildcards. Optional word
//! slots take plain words and must be found by reduction instead.
//!
//! [`generate_dataset`] builds the success/error train/test protocol;
//! [`generate_corpus`] builds a single split where every file holds every
//! template.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{tokenize_line, Pattern};

const LEVELS: &[&str] = &["INFO", "WARN", "ERROR", "DEBUG", "TRACE"];

const COMPONENTS: &[&str] = &[
    "BlockManager", "TaskSetManager", "DAGScheduler", "Executor", "ShuffleReader",
    "MemoryStore", "DiskStore", "NettyTransport", "ContextHandler", "SparkContext",
    "StorageMonitor", "ResourceManager", "NodeManager", "ContainerLauncher", "JobTracker",
    "DataNode", "NameNode", "SecondaryNameNode", "HiveMetaStore", "QueryPlanner",
    "SessionState", "Coordinator", "Dispatcher", "StatementClient", "CacheManager",
    "ReplicaWriter", "LeaseRenewer", "FsDatasetImpl", "RpcServer", "HttpServer",
    "AuthFilter", "TokenRenewer", "CheckpointWriter", "WalReader", "Compactor",
    "Balancer", "Scheduler", "AppMaster", "Heartbeater", "MetricsSystem",
];

const VERBS: &[&str] = &[
    "started", "stopped", "registered", "removed", "added", "created", "deleted",
    "loaded", "saved", "received", "sent", "opened", "closed", "acquired", "released",
    "allocated", "freed", "committed", "aborted", "scheduled", "cancelled", "finished",
    "failed", "retried", "skipped", "merged", "split", "flushed", "evicted", "cached",
    "spilled", "fetched", "pushed", "pulled", "granted", "denied", "renewed", "expired",
    "launched", "killed", "resumed", "paused", "connected", "disconnected", "reported",
    "updated", "validated", "rejected", "accepted", "assigned",
];

const NOUNS: &[&str] = &[
    "block", "task", "stage", "job", "executor", "container", "partition", "shuffle",
    "broadcast", "variable", "segment", "file", "directory", "lease", "token", "session",
    "query", "plan", "split", "replica", "checkpoint", "snapshot", "heartbeat", "worker",
    "driver", "application", "queue", "reservation", "resource", "memory", "disk",
    "buffer", "channel", "connection", "socket", "request", "response", "transaction",
    "commit", "record", "batch", "window", "watermark", "offset", "topic", "consumer",
    "producer", "listener", "handler", "servlet", "context", "metric", "counter",
    "gauge", "timer", "report", "event", "callback", "future", "promise", "thread",
    "pool", "lock", "monitor", "volume", "region", "table", "schema", "column", "index",
    "cursor", "statement", "catalog", "database", "policy", "quota", "limit", "attempt",
    "epoch", "generation",
];

const CONNECTORS: &[&str] = &[
    "on", "for", "to", "from", "in", "at", "with", "of", "by", "after", "before",
    "into", "via", "under", "over", "without",
];

const WORD_VALUES: &[&str] = &[
    "alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi", "ivan",
    "judy", "mallory", "oscar", "peggy", "trent", "victor", "walter",
];

const SLOT_PREFIXES: &[&str] = &["id=", "size=", "attempt=", "#", "port:", "tid="];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Number,
    Decimal,
    Hex,
    IpPort,
    Id,
    Path,
    /// A plain word the tokenizer keeps as a constant.
    Word,
}

const VALUE_SLOTS: &[SlotKind] = &[
    SlotKind::Number,
    SlotKind::Decimal,
    SlotKind::Hex,
    SlotKind::IpPort,
    SlotKind::Id,
    SlotKind::Path,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Piece {
    Literal(String),
    Slot { kind: SlotKind, prefix: String },
}

/// One whitespace-separated piece per element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub pieces: Vec<Piece>,
}

fn slot_value(kind: SlotKind, rng: &mut impl Rng) -> String {
    match kind {
        SlotKind::Number => rng.gen_range(0..100_000u32).to_string(),
        SlotKind::Decimal => format!("{}.{}", rng.gen_range(0..1000u32), rng.gen_range(0..100u32)),
        SlotKind::Hex => format!("0x{:08x}", rng.gen::<u32>()),
        SlotKind::IpPort => format!(
            "10.{}.{}.{}:{}",
            rng.gen_range(0..256u32),
            rng.gen_range(0..256u32),
            rng.gen_range(1..255u32),
            rng.gen_range(1024..65536u32)
        ),
        SlotKind::Id => {
            const ALNUM: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
            let mut id: Vec<u8> = (0..18).map(|_| ALNUM[rng.gen_range(0..ALNUM.len())]).collect();
            id[3] = b'0' + rng.gen_range(0..10u8);
            id[11] = b'0' + rng.gen_range(0..10u8);
            String::from_utf8(id).expect("ascii")
        }
        SlotKind::Path => format!(
            "/data/{}/part-{:05}",
            NOUNS[rng.gen_range(0..NOUNS.len())],
            rng.gen_range(0..100_000u32)
        ),
        SlotKind::Word => WORD_VALUES[rng.gen_range(0..WORD_VALUES.len())].to_owned(),
    }
}

impl Template {
    pub fn render(&self, rng: &mut impl Rng) -> String {
        self.render_with(|kind| slot_value(kind, rng))
    }

    fn render_with(&self, mut fill: impl FnMut(SlotKind) -> String) -> String {
        let mut out = String::new();
        for (i, piece) in self.pieces.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            match piece {
                Piece::Literal(w) => out.push_str(w),
                Piece::Slot { kind, prefix } => {
                    out.push_str(prefix);
                    out.push_str(&fill(*kind));
                }
            }
        }
        out
    }

    /// The pattern every instance should reduce to: each slot becomes a
    /// wildcard, with the usual collapsing.
    pub fn pattern(&self) -> Pattern {
        tokenize_line(&self.render_with(|_| "0".into())).expect("templates have literals")
    }

    /// Readable form with `<kind>` markers.
    pub fn describe(&self) -> String {
        self.render_with(|kind| {
            format!("<{}>", serde_json::to_value(kind).unwrap().as_str().unwrap())
        })
    }

    pub fn has_word_slot(&self) -> bool {
        self.pieces
            .iter()
            .any(|p| matches!(p, Piece::Slot { kind: SlotKind::Word, .. }))
    }
}

fn random_template(rng: &mut impl Rng, min_slots: usize, max_slots: usize, word_rate: f64) -> Template {
    let pick = |rng: &mut dyn rand::RngCore, list: &[&str]| list[rng.gen_range(0..list.len())].to_owned();
    let mut words: Vec<String> = vec![pick(rng, LEVELS), format!("{}:", pick(rng, COMPONENTS))];
    let body = rng.gen_range(3..=7);
    for _ in 0..body {
        let list = match rng.gen_range(0..10) {
            0..=3 => NOUNS,
            4..=6 => VERBS,
            _ => CONNECTORS,
        };
        words.push(pick(rng, list));
    }
    let mut pieces: Vec<Piece> = words.into_iter().map(Piece::Literal).collect();
    let slots = rng.gen_range(min_slots..=max_slots);
    for _ in 0..slots {
        let kind = if rng.gen_bool(word_rate) {
            SlotKind::Word
        } else {
            VALUE_SLOTS[rng.gen_range(0..VALUE_SLOTS.len())]
        };
        let prefix = if kind != SlotKind::Path && rng.gen_bool(0.3) {
            SLOT_PREFIXES[rng.gen_range(0..SLOT_PREFIXES.len())].to_owned()
        } else {
            String::new()
        };
        // never before the level and component
        let at = rng.gen_range(2..=pieces.len());
        pieces.insert(at, Piece::Slot { kind, prefix });
    }
    Template { pieces }
}

/// `count` templates with pairwise distinct patterns.
fn generate_templates(
    count: usize,
    min_slots: usize,
    max_slots: usize,
    word_rate: f64,
    rng: &mut impl Rng,
) -> Vec<Template> {
    let mut seen: HashSet<Pattern> = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let t = random_template(rng, min_slots, max_slots, word_rate);
        if seen.insert(t.pattern()) {
            out.push(t);
        }
    }
    out
}

/// Lines for one file: one line per template, the rest drawn at random
/// (uniformly, or Zipf-weighted by position when `zipf > 0`), shuffled.
fn fill_file(
    templates: &[Template],
    members: &[usize],
    lines: usize,
    zipf: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<String>, Vec<u32>) {
    let mut ids: Vec<usize> = members.to_vec();
    if lines > members.len() {
        let weights: Vec<f64> = (0..members.len())
            .map(|r| 1.0 / ((r + 1) as f64).powf(zipf))
            .collect();
        let dist = WeightedIndex::new(&weights).expect("positive weights");
        ids.extend((members.len()..lines).map(|_| members[dist.sample(rng)]));
    }
    ids.shuffle(rng);
    let text = ids.iter().map(|&t| templates[t].render(rng)).collect();
    (text, ids.into_iter().map(|t| t as u32).collect())
}

fn file_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub template_count: usize,
    pub success_fraction: f64,
    pub files_per_split: usize,
    pub lines_per_file: usize,
    /// Share of success templates present in every training file.
    pub universal_fraction: f64,
    pub min_slots: usize,
    pub max_slots: usize,
    /// Chance that a slot holds a plain word instead of a value.
    pub word_slot_rate: f64,
    /// 0 for uniform line interleaving.
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            template_count: 12968,
            success_fraction: 0.75,
            files_per_split: 8,
            lines_per_file: 15000,
            universal_fraction: 0.5,
            min_slots: 1,
            max_slots: 3,
            word_slot_rate: 0.0,
            zipf_exponent: 0.0,
            seed: 0,
        }
    }
}

fn check_slots(min: usize, max: usize, word: f64, zipf: f64) -> Result<()> {
    if min == 0 || min > max {
        return Err(Error::InfeasibleSpec(format!("slot range {min}..={max}")));
    }
    if !(0.0..=1.0).contains(&word) || !(zipf >= 0.0 && zipf.is_finite()) {
        return Err(Error::InfeasibleSpec("word_slot_rate must be in [0, 1] and zipf_exponent >= 0".into()));
    }
    Ok(())
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.success_fraction > 0.0 && self.success_fraction < 1.0) {
            return Err(Error::InfeasibleSpec("success_fraction must be in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.universal_fraction) {
            return Err(Error::InfeasibleSpec("universal_fraction must be in [0, 1]".into()));
        }
        if self.template_count < 2 || self.files_per_split == 0 || self.lines_per_file == 0 {
            return Err(Error::InfeasibleSpec("counts must be at least 1 (2 templates)".into()));
        }
        check_slots(self.min_slots, self.max_slots, self.word_slot_rate, self.zipf_exponent)?;
        let (success, error) = self.split_counts();
        if success == 0 || error == 0 {
            return Err(Error::InfeasibleSpec("both success and error sets must be nonempty".into()));
        }
        if self.universal_count() > self.lines_per_file {
            return Err(Error::InfeasibleSpec(format!(
                "{} universal templates do not fit in {} lines per file",
                self.universal_count(),
                self.lines_per_file
            )));
        }
        Ok(())
    }

    /// `(success, error)` template counts.
    pub fn split_counts(&self) -> (usize, usize) {
        let success = (self.template_count as f64 * self.success_fraction).round() as usize;
        (success, self.template_count - success)
    }

    pub fn universal_count(&self) -> usize {
        (self.split_counts().0 as f64 * self.universal_fraction).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateInfo {
    pub id: usize,
    pub template: String,
    pub pattern: String,
    pub success: bool,
    pub universal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub templates: Vec<TemplateInfo>,
    /// Template ids present in each training file, ascending.
    pub train_files: Vec<Vec<usize>>,
    pub test_files: Vec<Vec<usize>>,
    /// Template id of every line, per file.
    pub train_lines: Vec<Vec<u32>>,
    pub test_lines: Vec<Vec<u32>>,
}

impl GroundTruth {
    pub fn pattern(&self, id: usize) -> Pattern {
        Pattern::parse(&self.templates[id].pattern).expect("stored patterns are nonempty")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub train: Vec<Vec<String>>,
    pub test: Vec<Vec<String>>,
    pub truth: GroundTruth,
}

/// Assigns each id to a random nonempty set of at most `files / 2` files
/// (at least one file).
fn scatter(ids: &[usize], files: usize, rng: &mut impl Rng) -> Vec<BTreeSet<usize>> {
    let mut per_file = vec![BTreeSet::new(); files];
    let max_files = (files / 2).max(1);
    let all: Vec<usize> = (0..files).collect();
    for &id in ids {
        let n = rng.gen_range(1..=max_files);
        for &f in all.choose_multiple(rng, n) {
            per_file[f].insert(id);
        }
    }
    per_file
}

pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = file_rng(spec.seed, 0);
    let templates = generate_templates(
        spec.template_count,
        spec.min_slots,
        spec.max_slots,
        spec.word_slot_rate,
        &mut rng,
    );
    let (success_count, _) = spec.split_counts();
    let universal_count = spec.universal_count();
    let mut order: Vec<usize> = (0..templates.len()).collect();
    order.shuffle(&mut rng);
    let success: Vec<usize> = order[..success_count].to_vec();
    let error: Vec<usize> = order[success_count..].to_vec();
    let universal: BTreeSet<usize> = success[..universal_count].iter().copied().collect();
    let scattered = &success[universal_count..];

    let files = spec.files_per_split;
    let mut train_sets = scatter(scattered, files, &mut rng);
    for set in &mut train_sets {
        set.extend(universal.iter().copied());
    }
    let mut test_sets = scatter(scattered, files, &mut rng);
    let test_errors = scatter(&error, files, &mut rng);
    for (set, errs) in test_sets.iter_mut().zip(test_errors) {
        set.extend(universal.iter().copied());
        set.extend(errs);
    }
    if let Some(big) = train_sets.iter().chain(&test_sets).map(BTreeSet::len).max() {
        if big > spec.lines_per_file {
            return Err(Error::InfeasibleSpec(format!(
                "a file needs {big} templates but holds only {} lines",
                spec.lines_per_file
            )));
        }
    }

    let sets: Vec<Vec<usize>> = train_sets
        .iter()
        .chain(&test_sets)
        .map(|s| s.iter().copied().collect())
        .collect();
    let generated: Vec<(Vec<String>, Vec<u32>)> = sets
        .par_iter()
        .enumerate()
        .map(|(i, members)| {
            let mut frng = file_rng(spec.seed, 1 + i as u64);
            fill_file(&templates, members, spec.lines_per_file, spec.zipf_exponent, &mut frng)
        })
        .collect();

    let success_set: HashSet<usize> = success.iter().copied().collect();
    let infos = templates
        .iter()
        .enumerate()
        .map(|(id, t)| TemplateInfo {
            id,
            template: t.describe(),
            pattern: t.pattern().to_string(),
            success: success_set.contains(&id),
            universal: universal.contains(&id),
        })
        .collect();
    let (train_gen, test_gen) = generated.split_at(files);
    let truth = GroundTruth {
        templates: infos,
        train_files: sets[..files].to_vec(),
        test_files: sets[files..].to_vec(),
        train_lines: train_gen.iter().map(|g| g.1.clone()).collect(),
        test_lines: test_gen.iter().map(|g| g.1.clone()).collect(),
    };
    let mut train = Vec::with_capacity(files);
    let mut test = Vec::with_capacity(files);
    for (i, (text, _)) in generated.into_iter().enumerate() {
        if i < files {
            train.push(text);
        } else {
            test.push(text);
        }
    }
    Ok(Dataset { train, test, truth })
}

/// A single split where every file holds every template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub template_count: usize,
    pub files: usize,
    pub lines_per_file: usize,
    pub min_slots: usize,
    pub max_slots: usize,
    pub word_slot_rate: f64,
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            template_count: 100,
            files: 4,
            lines_per_file: 25_000,
            min_slots: 1,
            max_slots: 3,
            word_slot_rate: 0.0,
            zipf_exponent: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub files: Vec<Vec<String>>,
    pub templates: Vec<Template>,
    pub line_templates: Vec<Vec<u32>>,
}

impl Corpus {
    pub fn patterns(&self) -> Vec<Pattern> {
        self.templates.iter().map(Template::pattern).collect()
    }

    pub fn line_count(&self) -> usize {
        self.files.iter().map(Vec::len).sum()
    }
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    if spec.template_count == 0 || spec.files == 0 {
        return Err(Error::InfeasibleSpec("counts must be at least 1".into()));
    }
    if spec.template_count > spec.lines_per_file {
        return Err(Error::InfeasibleSpec(format!(
            "{} templates do not fit in {} lines per file",
            spec.template_count, spec.lines_per_file
        )));
    }
    check_slots(spec.min_slots, spec.max_slots, spec.word_slot_rate, spec.zipf_exponent)?;
    let mut rng = file_rng(spec.seed, 0);
    let templates = generate_templates(
        spec.template_count,
        spec.min_slots,
        spec.max_slots,
        spec.word_slot_rate,
        &mut rng,
    );
    let members: Vec<usize> = (0..templates.len()).collect();
    let generated: Vec<(Vec<String>, Vec<u32>)> = (0..spec.files)
        .into_par_iter()
        .map(|i| {
            let mut frng = file_rng(spec.seed, 1 + i as u64);
            fill_file(&templates, &members, spec.lines_per_file, spec.zipf_exponent, &mut frng)
        })
        .collect();
    let (files, line_templates) = generated.into_iter().unzip();
    Ok(Corpus {
        files,
        templates,
        line_templates,
    })
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = lines.join("\n");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `train/train_NN.log`, `test/test_NN.log` and `ground_truth.json`
/// under `dir`.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    for (sub, files) in [("train", &ds.train), ("test", &ds.test)] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        for (i, lines) in files.iter().enumerate() {
            write_lines(&d.join(format!("{sub}_{i:02}.log")), lines)?;
        }
    }
    let truth_path = dir.join("ground_truth.json");
    let json = serde_json::to_vec(&ds.truth).expect("ground truth serializes");
    fs::write(&truth_path, json).map_err(|e| Error::io(&truth_path, e))
}
