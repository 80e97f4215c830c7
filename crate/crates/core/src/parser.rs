//! Training pipeline: preprocess, block with LSH, verify blocks with LCS,
//! align, reduce, and repeat until the pattern count settles.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::time::{Duration, Instant};

use rayon::prelude::*;

pub use crate::config::Config;
use crate::error::{Error, Result};
use crate::metrics::MatchStats;
use crate::minhash_lsh::{lsh_blocks, MinHashSignature, MinHasher};
use crate::seq_align::{align_block, reduce_matrix, satisfies_similarity};
use crate::tokenizer::{preprocess_reader, LineCache, Pattern, PatternCounts};

/// Patterns with the training statistics merged into each.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PatternSet {
    patterns: BTreeMap<Pattern, MatchStats>,
    file_count: u32,
    total_lines: u64,
}

impl PatternSet {
    pub fn new(file_count: u32, total_lines: u64) -> Self {
        PatternSet {
            patterns: BTreeMap::new(),
            file_count,
            total_lines,
        }
    }

    /// One entry per unique preprocessed pattern, with file presence taken
    /// from which of `per_file` contained it.
    pub fn from_file_counts(per_file: Vec<PatternCounts>) -> Self {
        let mut set = PatternSet::new(per_file.len() as u32, 0);
        for (file, counts) in per_file.into_iter().enumerate() {
            set.total_lines += counts.source_lines;
            for (pattern, count) in counts.entries {
                let stats = MatchStats {
                    frequency: count,
                    match_count: 0,
                    length_sum: 0,
                    files: BTreeSet::from([file as u32]),
                };
                set.patterns
                    .entry(pattern)
                    .and_modify(|s| s.merge(&stats))
                    .or_insert(stats);
            }
        }
        for (pattern, stats) in set.patterns.iter_mut() {
            stats.match_count = 1;
            stats.length_sum = pattern.len() as u64;
        }
        set
    }

    /// Adds `stats` to `pattern`, merging if it already exists.
    pub fn insert(&mut self, pattern: Pattern, stats: MatchStats) {
        self.patterns
            .entry(pattern)
            .and_modify(|s| s.merge(&stats))
            .or_insert(stats);
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn file_count(&self) -> u32 {
        self.file_count
    }

    pub fn total_lines(&self) -> u64 {
        self.total_lines
    }

    pub fn total_frequency(&self) -> u64 {
        self.patterns.values().map(|s| s.frequency).sum()
    }

    pub fn get(&self, pattern: &Pattern) -> Option<&MatchStats> {
        self.patterns.get(pattern)
    }

    pub fn contains(&self, pattern: &Pattern) -> bool {
        self.patterns.contains_key(pattern)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Pattern, &MatchStats)> {
        self.patterns.iter()
    }

    pub fn patterns(&self) -> impl Iterator<Item = &Pattern> {
        self.patterns.keys()
    }

    pub fn stats(&self) -> &BTreeMap<Pattern, MatchStats> {
        &self.patterns
    }
}

/// Greedy regrouping of one LSH block: each pattern joins the first
/// sub-block whose first member satisfies the LCS similarity constraint.
fn verify_block<'a>(block: &[&'a Pattern], alpha: f64) -> Vec<Vec<&'a Pattern>> {
    let mut sorted: Vec<&Pattern> = block.to_vec();
    sorted.sort();
    let mut groups: Vec<Vec<&Pattern>> = Vec::new();
    for p in sorted {
        match groups
            .iter_mut()
            .find(|g| satisfies_similarity(g[0], p, alpha))
        {
            Some(g) => g.push(p),
            None => groups.push(vec![p]),
        }
    }
    groups
}

pub fn verify_blocks(blocks: &[Vec<Pattern>], alpha: f64) -> Vec<Vec<Pattern>> {
    blocks
        .iter()
        .flat_map(|block| {
            let refs: Vec<&Pattern> = block.iter().collect();
            verify_block(&refs, alpha)
                .into_iter()
                .map(|g| g.into_iter().cloned().collect::<Vec<_>>())
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Aligns and reduces one verified sub-block. Misfits come back unchanged.
fn reduce_group(group: &[&Pattern], set: &PatternSet, beta: f64) -> Vec<(Pattern, MatchStats)> {
    let passthrough =
        || -> Vec<(Pattern, MatchStats)> {
            group
                .iter()
                .map(|p| ((*p).clone(), set.patterns[*p].clone()))
                .collect()
        };
    if group.len() == 1 {
        return passthrough();
    }
    let owned: Vec<Pattern> = group.iter().map(|p| (*p).clone()).collect();
    let matrix = match align_block(&owned) {
        Ok(m) => m,
        Err(e) => {
            log::warn!("alignment failed, keeping block as is: {e}");
            return passthrough();
        }
    };
    let outcome = match reduce_matrix(&matrix, beta) {
        Ok(o) => o,
        Err(Error::AllRowsMisfit) => return passthrough(),
        Err(e) => {
            log::warn!("reduction failed, keeping block as is: {e}");
            return passthrough();
        }
    };
    let mut merged = MatchStats::default();
    let mut out = Vec::with_capacity(outcome.misfits.len() + 1);
    for (i, p) in group.iter().enumerate() {
        let stats = &set.patterns[*p];
        if outcome.misfits.contains(&i) {
            out.push(((*p).clone(), stats.clone()));
        } else {
            merged.merge(stats);
        }
    }
    out.push((outcome.reduced, merged));
    out
}

fn signatures(set: &PatternSet, cfg: &Config) -> Vec<(usize, MinHashSignature)> {
    let hasher = MinHasher::new(cfg.num_permutations, cfg.seed);
    let keys: Vec<&Pattern> = set.patterns.keys().collect();
    keys.par_iter()
        .enumerate()
        .map(|(i, p)| (i, hasher.signature_of(p, cfg.shingle_n)))
        .collect()
}

/// One round of block, verify, align and reduce.
pub fn reduce_once(set: &PatternSet, cfg: &Config) -> Result<PatternSet> {
    let mut next = PatternSet::new(set.file_count, set.total_lines);
    if set.is_empty() {
        return Ok(next);
    }
    let keys: Vec<&Pattern> = set.patterns.keys().collect();
    let blocks = lsh_blocks(&signatures(set, cfg), cfg.jaccard_threshold)?;

    let reduced: Vec<Vec<(Pattern, MatchStats)>> = blocks
        .par_iter()
        .map(|block| {
            let members: Vec<&Pattern> = block.iter().map(|&i| keys[i]).collect();
            verify_block(&members, cfg.alpha)
                .iter()
                .flat_map(|group| reduce_group(group, set, cfg.beta))
                .collect()
        })
        .collect();

    for (pattern, stats) in reduced.into_iter().flatten() {
        next.insert(pattern, stats);
    }
    if next.total_frequency() != set.total_frequency() {
        return Err(Error::Invariant(format!(
            "reduction changed total frequency from {} to {}",
            set.total_frequency(),
            next.total_frequency()
        )));
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageTiming {
    pub stage: String,
    pub elapsed: Duration,
}

/// Result of a full training run.
#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub patterns: PatternSet,
    /// Unique preprocessed patterns before reduction.
    pub preprocessed: usize,
    /// Pattern count after preprocessing and after each reduction round.
    pub trace: Vec<usize>,
    pub blank_lines: u64,
    pub timings: Vec<StageTiming>,
}

/// Preprocesses every file in parallel, one line cache per file.
pub fn preprocess_files<R>(files: Vec<R>) -> Result<Vec<PatternCounts>>
where
    R: BufRead + Send,
{
    files
        .into_par_iter()
        .map(|reader| preprocess_reader(reader, &mut LineCache::default()))
        .collect()
}

/// Reduces preprocessed counts to a fixed point.
pub fn parse_counts(per_file: Vec<PatternCounts>, cfg: &Config) -> Result<ParseOutcome> {
    cfg.validate()?;
    let blank_lines = per_file.iter().map(|c| c.blank_lines).sum();
    let mut set = PatternSet::from_file_counts(per_file);
    let preprocessed = set.len();
    if set.is_empty() {
        log::warn!("no parsable lines in the training input");
    }
    let mut trace = vec![set.len()];
    let mut timings = Vec::new();
    for round in 0..cfg.max_iterations {
        if set.is_empty() {
            break;
        }
        let start = Instant::now();
        let next = reduce_once(&set, cfg)?;
        timings.push(StageTiming {
            stage: format!("reduce_{round}"),
            elapsed: start.elapsed(),
        });
        let settled = next.len() == set.len();
        set = next;
        trace.push(set.len());
        if settled {
            break;
        }
    }
    Ok(ParseOutcome {
        patterns: set,
        preprocessed,
        trace,
        blank_lines,
        timings,
    })
}

/// Full training run over line streams, one per file.
pub fn parse<R>(files: Vec<R>, cfg: &Config) -> Result<ParseOutcome>
where
    R: BufRead + Send,
{
    if files.is_empty() {
        return Err(Error::Usage("training needs at least one file".into()));
    }
    let start = Instant::now();
    let counts = preprocess_files(files)?;
    let preprocess_time = start.elapsed();
    let mut outcome = parse_counts(counts, cfg)?;
    outcome.timings.insert(
        0,
        StageTiming {
            stage: "preprocess".into(),
            elapsed: preprocess_time,
        },
    );
    Ok(outcome)
}

/// Parses in-memory files.
pub fn parse_lines<S: AsRef<str> + Sync>(files: &[Vec<S>], cfg: &Config) -> Result<ParseOutcome> {
    let counts = files
        .par_iter()
        .map(|lines| {
            crate::tokenizer::preprocess_lines(
                lines.iter().map(AsRef::as_ref),
                &mut LineCache::default(),
            )
        })
        .collect();
    parse_counts(counts, cfg)
}
