//! Pattern selection by line coverage and file presence, and the model file.

use std::collections::HashMap;
use std::cmp::Reverse;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::jsonl::{parse_record, read_checked, ChecksumWriter};
use crate::minhash_lsh::{estimate_jaccard, LshIndex, MinHashSignature, MinHasher};
use crate::seq_align::similarity_holds;
use crate::parser::PatternSet;
use crate::tokenizer::{Pattern, Token};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Tolerance for floating-point share comparisons.
const SHARE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub training_files: u32,
    pub total_lines: u64,
}

/// A selected pattern and its training statistics. `files` is the number of
/// training files it occurred in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectedPattern {
    pub pattern: Pattern,
    pub frequency: u64,
    pub files: u32,
    pub match_count: u64,
    pub length_sum: u64,
}

/// Frozen matching model. Pattern ids are indices into [`PatternModel::patterns`].
#[derive(Debug, Clone)]
pub struct PatternModel {
    patterns: Vec<SelectedPattern>,
    signatures: Vec<MinHashSignature>,
    hasher: MinHasher,
    lsh: LshIndex<usize>,
    // constant token -> (id, occurrences in that pattern)
    postings: HashMap<String, Vec<(usize, u32)>>,
    config: Config,
    provenance: Provenance,
}

impl PartialEq for PatternModel {
    fn eq(&self, other: &Self) -> bool {
        self.patterns == other.patterns
            && self.config == other.config
            && self.provenance == other.provenance
            && self.signatures == other.signatures
    }
}

/// Indices (into `freqs`) of the shortest frequency-descending prefix whose
/// sum reaches `coverage * total`. `order` must already be sorted.
fn coverage_prefix(freqs: &[u64], order: &[usize], coverage: f64, total: u64) -> usize {
    let target = coverage * total as f64;
    let mut cum = 0u64;
    for (taken, &i) in order.iter().enumerate() {
        if cum as f64 >= target - SHARE_EPS * total as f64 {
            return taken;
        }
        cum += freqs[i];
    }
    order.len()
}

/// Picks patterns covering `coverage_fraction` of training lines plus every
/// pattern seen in at least `file_presence_fraction` of the training files.
/// Patterns come out sorted by frequency descending, ties by pattern order.
pub fn select_patterns(ps: &PatternSet, cfg: &Config) -> Result<PatternModel> {
    cfg.validate()?;
    if ps.is_empty() || ps.total_frequency() == 0 {
        return Err(Error::EmptyPatternSet);
    }
    let entries: Vec<(&Pattern, &crate::metrics::MatchStats)> = ps.iter().collect();
    let mut order: Vec<usize> = (0..entries.len()).collect();
    // BTreeMap iteration is already lexicographic, and the sort is stable
    order.sort_by_key(|&i| Reverse(entries[i].1.frequency));

    let freqs: Vec<u64> = entries.iter().map(|(_, s)| s.frequency).collect();
    let cut = coverage_prefix(&freqs, &order, cfg.coverage_fraction, ps.total_frequency());
    let presence_min = cfg.file_presence_fraction * ps.file_count() as f64 - SHARE_EPS;

    let selected: Vec<SelectedPattern> = order
        .iter()
        .enumerate()
        .filter(|&(rank, &i)| {
            rank < cut || (ps.file_count() > 0 && entries[i].1.files.len() as f64 >= presence_min)
        })
        .map(|(_, &i)| {
            let (p, s) = entries[i];
            SelectedPattern {
                pattern: p.clone(),
                frequency: s.frequency,
                files: s.files.len() as u32,
                match_count: s.match_count,
                length_sum: s.length_sum,
            }
        })
        .collect();

    let provenance = Provenance {
        training_files: ps.file_count(),
        total_lines: ps.total_lines(),
    };
    PatternModel::from_selected(selected, cfg.clone(), provenance)
}

fn constant_counts(tokens: &[Token]) -> HashMap<&str, u32> {
    let mut counts = HashMap::new();
    for t in tokens {
        if let Token::Constant(c) = t {
            *counts.entry(c.as_str()).or_insert(0) += 1;
        }
    }
    counts
}

impl PatternModel {
    /// Builds the index over already-selected patterns, keeping their order.
    pub fn from_selected(
        patterns: Vec<SelectedPattern>,
        config: Config,
        provenance: Provenance,
    ) -> Result<Self> {
        config.validate()?;
        let hasher = MinHasher::new(config.num_permutations, config.seed);
        let signatures: Vec<MinHashSignature> = patterns
            .iter()
            .map(|p| hasher.signature_of(&p.pattern, config.shingle_n))
            .collect();
        let mut lsh = LshIndex::new(config.num_permutations, config.jaccard_threshold, config.seed);
        for (id, sig) in signatures.iter().enumerate() {
            lsh.insert(id, sig)?;
        }
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        for (id, p) in patterns.iter().enumerate() {
            for (tok, n) in constant_counts(p.pattern.tokens()) {
                postings.entry(tok.to_owned()).or_default().push((id, n));
            }
        }
        Ok(PatternModel {
            patterns,
            signatures,
            hasher,
            lsh,
            postings,
            config,
            provenance,
        })
    }

    pub fn patterns(&self) -> &[SelectedPattern] {
        &self.patterns
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&SelectedPattern> {
        self.patterns.get(id)
    }

    pub fn signature(&self, id: usize) -> &MinHashSignature {
        &self.signatures[id]
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Signature of `p` under this model's hash family.
    pub fn signature_of(&self, p: &Pattern) -> MinHashSignature {
        self.hasher.signature_of(p, self.config.shingle_n)
    }

    /// LSH candidates for `sig`, by estimated Jaccard descending, then id.
    pub fn candidates(&self, sig: &MinHashSignature) -> Vec<usize> {
        let ids = self
            .lsh
            .query(sig)
            .expect("signature built with the model's own hasher");
        let mut scored: Vec<(f64, usize)> = ids
            .into_iter()
            .map(|id| {
                let est = estimate_jaccard(sig, &self.signatures[id]).expect("same family");
                (est, id)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        scored.into_iter().map(|(_, id)| id).collect()
    }

    /// Ids, ascending, of patterns that could satisfy the similarity
    /// constraint against `p`: a pattern's wildcards plus the constants it
    /// shares with `p` bound the LCS from above.
    pub fn feasible_ids(&self, p: &Pattern, alpha: f64) -> Vec<usize> {
        let mut shared = vec![0u32; self.patterns.len()];
        for (tok, np) in constant_counts(p.tokens()) {
            for &(id, nq) in self.postings.get(tok).map(Vec::as_slice).unwrap_or_default() {
                shared[id] += nq.min(np);
            }
        }
        (0..self.patterns.len())
            .filter(|&id| {
                let q = &self.patterns[id].pattern;
                let bound = (q.wildcard_count() as u32 + shared[id]).min(p.len() as u32) as usize;
                similarity_holds(bound, q.len(), p.len(), alpha)
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ChecksumWriter::new();
        w.record(&Header {
            format_version: MODEL_FORMAT_VERSION,
            config: self.config.clone(),
            provenance: self.provenance,
        })
        .expect("header serializes");
        for p in &self.patterns {
            w.record(&PatternRecord::from(p)).expect("record serializes");
        }
        w.finish()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let lines = read_checked(reader)?;
        let Some(((header_line, header_text), records)) = lines.split_first() else {
            return Err(Error::MalformedRecord {
                line: 1,
                message: "missing header".into(),
            });
        };
        let version: VersionProbe = parse_record(*header_line, header_text)?;
        if version.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let header: Header = parse_record(*header_line, header_text)?;
        header.config.validate().map_err(|e| Error::MalformedRecord {
            line: *header_line,
            message: e.to_string(),
        })?;
        let patterns = records
            .iter()
            .map(|(line, text)| {
                let rec: PatternRecord = parse_record(*line, text)?;
                rec.into_selected().map_err(|message| Error::MalformedRecord {
                    line: *line,
                    message,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        PatternModel::from_selected(patterns, header.config, header.provenance)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        PatternModel::from_reader(BufReader::new(file))
    }
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    config: Config,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
enum TokenRecord {
    #[serde(rename = "c")]
    Constant { text: String },
    #[serde(rename = "w")]
    Wildcard,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatternRecord {
    tokens: Vec<TokenRecord>,
    frequency: u64,
    files: u32,
    match_count: u64,
    length_sum: u64,
}

impl From<&SelectedPattern> for PatternRecord {
    fn from(p: &SelectedPattern) -> Self {
        PatternRecord {
            tokens: p
                .pattern
                .tokens()
                .iter()
                .map(|t| match t {
                    Token::Constant(text) => TokenRecord::Constant { text: text.clone() },
                    _ => TokenRecord::Wildcard,
                })
                .collect(),
            frequency: p.frequency,
            files: p.files,
            match_count: p.match_count,
            length_sum: p.length_sum,
        }
    }
}

impl PatternRecord {
    fn into_selected(self) -> std::result::Result<SelectedPattern, String> {
        let n = self.tokens.len();
        let mut tokens = Vec::with_capacity(n);
        for t in self.tokens {
            tokens.push(match t {
                TokenRecord::Constant { text } => {
                    if text.is_empty() || text.chars().any(char::is_whitespace) {
                        return Err(format!("invalid constant token {text:?}"));
                    }
                    Token::Constant(text)
                }
                TokenRecord::Wildcard => Token::Wildcard,
            });
        }
        let pattern = Pattern::collapse(tokens).ok_or("pattern has no tokens")?;
        if pattern.len() != n {
            return Err("pattern has adjacent wildcards".into());
        }
        if self.frequency == 0 || self.match_count == 0 {
            return Err("frequency and match_count must be positive".into());
        }
        Ok(SelectedPattern {
            pattern,
            frequency: self.frequency,
            files: self.files,
            match_count: self.match_count,
            length_sum: self.length_sum,
        })
    }
}
