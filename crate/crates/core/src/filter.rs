//! Inference: drop lines that match a trained pattern or a shared encoding,
//! suppress unmatched patterns that occur more than `gamma` times, and report
//! what is left as anomalies.
//!
//! Verdicts are a pure function of the file. Pass 1 tokenizes every line and
//! matches each distinct preprocessed pattern once. Pass 2 applies the
//! frequency filter with the complete counts.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::Config;
use crate::error::Result;
use crate::pattern_model::PatternModel;
use crate::privacy::EncodingStore;
use crate::seq_align::{similarity_holds, wildcard_lcs_length};
use crate::tokenizer::{for_each_line, tokenize_line, LineCache, Pattern, DEFAULT_CACHE_CAPACITY};

const SHARD_LINES: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Verdict {
    MatchedPattern(usize),
    MatchedEncoding(usize),
    FrequencySuppressed,
    Anomaly,
    /// The line has no tokens.
    Blank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchResult {
    /// 1-based.
    pub line_number: usize,
    pub verdict: Verdict,
}

/// Occurrences of each unmatched preprocessed pattern.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTracker {
    counts: HashMap<Pattern, u64>,
    gamma: u64,
}

impl FrequencyTracker {
    pub fn new(gamma: u64) -> Self {
        FrequencyTracker {
            counts: HashMap::new(),
            gamma,
        }
    }

    pub fn record(&mut self, p: &Pattern, occurrences: u64) {
        *self.counts.entry(p.clone()).or_insert(0) += occurrences;
    }

    pub fn merge(&mut self, other: FrequencyTracker) {
        for (p, c) in other.counts {
            *self.counts.entry(p).or_insert(0) += c;
        }
    }

    pub fn count(&self, p: &Pattern) -> u64 {
        self.counts.get(p).copied().unwrap_or(0)
    }

    /// `f_i > gamma`.
    pub fn suppresses(&self, p: &Pattern) -> bool {
        self.count(p) > self.gamma
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FilterTotals {
    pub lines_in: u64,
    /// Lines matched by a pattern or an encoding.
    pub matched: u64,
    /// The part of `matched` that only an encoding matched.
    pub matched_by_encoding: u64,
    pub frequency_suppressed: u64,
    pub anomalous: u64,
    pub blank: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterReport {
    pub anomalies: Vec<(usize, String)>,
    pub totals: FilterTotals,
    pub results: Vec<MatchResult>,
}

impl FilterReport {
    pub fn summary_json(&self) -> String {
        serde_json::to_string(&self.totals).expect("totals serialize")
    }

    /// `LINE <n>: <raw>` per anomaly, then the JSON totals.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (n, line) in &self.anomalies {
            writeln!(w, "LINE {n}: {line}")?;
        }
        writeln!(w, "{}", self.summary_json())
    }
}

/// First pattern satisfying the similarity constraint, or `None`. LSH
/// candidates are tried first, by estimated Jaccard; if none passes, every
/// pattern that could still match is checked in id order.
pub fn match_pattern(model: &PatternModel, p: &Pattern, alpha: f64) -> Option<usize> {
    let holds = |id: usize| {
        let q = &model.patterns()[id].pattern;
        let lcs = wildcard_lcs_length(q.tokens(), p.tokens());
        similarity_holds(lcs, q.len(), p.len(), alpha)
    };
    let sig = model.signature_of(p);
    let candidates = model.candidates(&sig);
    if let Some(id) = candidates.iter().copied().find(|&id| holds(id)) {
        return Some(id);
    }
    model
        .feasible_ids(p, alpha)
        .into_iter()
        .filter(|id| !candidates.contains(id))
        .find(|&id| holds(id))
}

pub fn match_line(model: &PatternModel, line: &str, alpha: f64) -> Option<usize> {
    match_pattern(model, &tokenize_line(line)?, alpha)
}

/// Filters in-memory lines.
pub fn filter_lines<S>(
    model: &PatternModel,
    encodings: Option<&EncodingStore>,
    lines: &[S],
    cfg: &Config,
) -> Result<FilterReport>
where
    S: AsRef<str> + Sync,
{
    cfg.validate()?;

    // pass 1a: tokenize shards, one LRU cache per shard
    let per_line: Vec<Option<Pattern>> = lines
        .par_chunks(SHARD_LINES)
        .flat_map_iter(|shard| {
            let mut cache = LineCache::new(DEFAULT_CACHE_CAPACITY.min(shard.len()));
            shard
                .iter()
                .map(|l| cache.tokenize(l.as_ref()))
                .collect::<Vec<_>>()
        })
        .collect();

    let mut index: HashMap<Pattern, usize> = HashMap::new();
    let mut unique: Vec<Pattern> = Vec::new();
    let mut occurrences: Vec<u64> = Vec::new();
    let line_ids: Vec<Option<usize>> = per_line
        .into_iter()
        .map(|p| {
            let p = p?;
            let id = *index.entry(p).or_insert_with_key(|p| {
                unique.push(p.clone());
                occurrences.push(0);
                unique.len() - 1
            });
            occurrences[id] += 1;
            Some(id)
        })
        .collect();

    // pass 1b: one match per distinct pattern
    let matched: Vec<Option<Verdict>> = unique
        .par_iter()
        .map(|p| {
            if let Some(id) = match_pattern(model, p, cfg.alpha) {
                return Some(Verdict::MatchedPattern(id));
            }
            encodings
                .and_then(|store| store.best_match(p))
                .map(Verdict::MatchedEncoding)
        })
        .collect();

    let mut tracker = FrequencyTracker::new(cfg.gamma);
    for (i, p) in unique.iter().enumerate() {
        if matched[i].is_none() {
            tracker.record(p, occurrences[i]);
        }
    }

    // pass 2
    let verdicts: Vec<Verdict> = unique
        .iter()
        .zip(&matched)
        .map(|(p, m)| match m {
            Some(v) => *v,
            None if tracker.suppresses(p) => Verdict::FrequencySuppressed,
            None => Verdict::Anomaly,
        })
        .collect();

    let mut totals = FilterTotals {
        lines_in: lines.len() as u64,
        ..FilterTotals::default()
    };
    let mut anomalies = Vec::new();
    let mut results = Vec::with_capacity(lines.len());
    for (i, id) in line_ids.into_iter().enumerate() {
        let verdict = id.map_or(Verdict::Blank, |id| verdicts[id]);
        match verdict {
            Verdict::MatchedPattern(_) => totals.matched += 1,
            Verdict::MatchedEncoding(_) => {
                totals.matched += 1;
                totals.matched_by_encoding += 1;
            }
            Verdict::FrequencySuppressed => totals.frequency_suppressed += 1,
            Verdict::Anomaly => {
                totals.anomalous += 1;
                anomalies.push((i + 1, lines[i].as_ref().to_owned()));
            }
            Verdict::Blank => totals.blank += 1,
        }
        results.push(MatchResult {
            line_number: i + 1,
            verdict,
        });
    }
    Ok(FilterReport {
        anomalies,
        totals,
        results,
    })
}

/// Reads the whole stream, then filters it. A read failure yields the error
/// and no report.
pub fn filter_reader<R: BufRead>(
    model: &PatternModel,
    encodings: Option<&EncodingStore>,
    reader: R,
    cfg: &Config,
) -> Result<FilterReport> {
    let mut lines = Vec::new();
    for_each_line(reader, |l| lines.push(l.to_owned()))?;
    filter_lines(model, encodings, &lines, cfg)
}
