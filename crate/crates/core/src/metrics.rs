//! Quality loss of a trained pattern set: the mean squared fraction of
//! tokens each pattern gives up to wildcards.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tokenizer::Pattern;

/// What was merged into a pattern during training.
///
/// `match_count` counts distinct preprocessed sequences, `length_sum` their
/// token lengths, `frequency` the raw lines behind them, and `files` the
/// training files those lines came from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchStats {
    pub frequency: u64,
    pub match_count: u64,
    pub length_sum: u64,
    pub files: BTreeSet<u32>,
}

impl MatchStats {
    /// Stats for one preprocessed sequence seen `frequency` times.
    pub fn for_sequence(len: usize, frequency: u64, files: BTreeSet<u32>) -> Self {
        MatchStats {
            frequency,
            match_count: 1,
            length_sum: len as u64,
            files,
        }
    }

    pub fn merge(&mut self, other: &MatchStats) {
        self.frequency += other.frequency;
        self.match_count += other.match_count;
        self.length_sum += other.length_sum;
        self.files.extend(other.files.iter().copied());
    }

    pub fn average_match_length(&self) -> f64 {
        self.length_sum as f64 / self.match_count as f64
    }
}

/// `averageMatchLength(p) - p.length`, floored at zero.
///
/// A wildcard that absorbed nothing in some rows can pull the average below
/// the pattern length; that is not a loss of tokens.
pub fn average_tokens_lost(pattern_len: usize, stats: &MatchStats) -> f64 {
    assert!(stats.match_count >= 1, "pattern has no matched sequences");
    (stats.average_match_length() - pattern_len as f64).max(0.0)
}

/// Per-pattern term `(average_tokens_lost / len)^2`.
pub fn loss_term(pattern_len: usize, stats: &MatchStats) -> f64 {
    let lost = average_tokens_lost(pattern_len, stats) / pattern_len as f64;
    lost * lost
}

/// Mean of [`loss_term`] over all patterns.
pub fn quality_loss<'a, I>(patterns: I) -> Result<f64>
where
    I: IntoIterator<Item = (usize, &'a MatchStats)>,
{
    let mut sum = 0.0;
    let mut count = 0usize;
    for (len, stats) in patterns {
        sum += loss_term(len, stats);
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyPatternSet);
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternTerm {
    pub pattern: String,
    pub term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub pattern_count: usize,
    pub quality_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<PatternTerm>>,
}

impl EvalReport {
    pub fn build(stats: &BTreeMap<Pattern, MatchStats>, with_terms: bool) -> Result<Self> {
        let quality_loss = quality_loss(stats.iter().map(|(p, s)| (p.len(), s)))?;
        let terms = with_terms.then(|| {
            stats
                .iter()
                .map(|(p, s)| PatternTerm {
                    pattern: p.to_string(),
                    term: loss_term(p.len(), s),
                })
                .collect()
        });
        Ok(EvalReport {
            pattern_count: stats.len(),
            quality_loss,
            terms,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(lengths: &[u64]) -> MatchStats {
        MatchStats {
            frequency: lengths.len() as u64,
            match_count: lengths.len() as u64,
            length_sum: lengths.iter().sum(),
            files: BTreeSet::new(),
        }
    }

    #[test]
    fn tokens_lost_examples() {
        assert_eq!(average_tokens_lost(5, &stats(&[7, 7])), 2.0);
        assert_eq!(average_tokens_lost(5, &stats(&[5, 5, 5])), 0.0);
        assert_eq!(average_tokens_lost(5, &stats(&[5, 9])), 2.0);
    }

    #[test]
    fn quality_loss_examples() {
        let lossless = stats(&[4, 4]);
        assert_eq!(quality_loss([(4, &lossless)]).unwrap(), 0.0);

        let lossy = stats(&[7]);
        let single = quality_loss([(5, &lossy)]).unwrap();
        assert!((single - 0.16).abs() < 1e-12);

        let both = quality_loss([(5, &lossy), (4, &lossless)]).unwrap();
        assert!((both - 0.08).abs() < 1e-12);
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(matches!(
            quality_loss(std::iter::empty()),
            Err(Error::EmptyPatternSet)
        ));
    }

    #[test]
    fn terms_are_bounded() {
        // matches at most Lmax long keep each term within ((Lmax - L) / L)^2
        for len in 1..8usize {
            for lmax in len as u64..12 {
                let s = stats(&[lmax, len as u64, lmax]);
                let t = loss_term(len, &s);
                let bound = ((lmax as f64 - len as f64) / len as f64).powi(2);
                assert!((0.0..=bound + 1e-12).contains(&t));
            }
        }
    }
}
