//! Line preprocessing: typing tokens, collapsing trivial variables into
//! wildcards, and counting unique patterns.
//!
//! A raw line is split on whitespace. URL- and path-like tokens become a
//! single wildcard. Every other token is split on non-alphanumeric characters
//! and each alphanumeric piece is classified: numbers, hexadecimal values and
//! long encoded strings are variables, anything else is a constant. Runs of
//! variables collapse into one wildcard, so a pattern never holds two
//! wildcards in a row.
//!
//! ```
//! use logsieve::tokenizer::tokenize_line;
//!
//! let p = tokenize_line("Task 12 finished in 0.5 s").unwrap();
//! assert_eq!(p.to_string(), "Task * finished in * s");
//! ```

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::num::NonZeroUsize;

use lru::LruCache;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Text form of a wildcard in rendered patterns and model files.
pub const WILDCARD: &str = "*";

/// Per-worker cache capacity used when none is given.
pub const DEFAULT_CACHE_CAPACITY: usize = 65_536;

const ENCODED_MIN_LEN: usize = 16;
const ENCODED_MIN_DIGITS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Token {
    /// A literal word. Nonempty, no whitespace.
    Constant(String),
    Wildcard,
    /// Alignment filler. Never produced by the tokenizer.
    Gap,
}

impl Token {
    pub fn constant(text: impl Into<String>) -> Token {
        let text = text.into();
        debug_assert!(!text.is_empty() && !text.chars().any(char::is_whitespace));
        Token::Constant(text)
    }

    pub fn is_wildcard(&self) -> bool {
        matches!(self, Token::Wildcard)
    }

    pub fn is_gap(&self) -> bool {
        matches!(self, Token::Gap)
    }

    /// Rendering used for display and shingling.
    pub fn as_str(&self) -> &str {
        match self {
            Token::Constant(text) => text,
            Token::Wildcard => WILDCARD,
            Token::Gap => "-",
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A preprocessed log pattern: at least one token, no gaps, and never two
/// wildcards in a row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern {
    tokens: Vec<Token>,
}

impl Pattern {
    /// Builds a pattern from tokens, dropping gaps and collapsing runs of
    /// wildcards. Returns `None` if nothing is left.
    pub fn collapse(tokens: impl IntoIterator<Item = Token>) -> Option<Pattern> {
        let mut out: Vec<Token> = Vec::new();
        for token in tokens {
            match token {
                Token::Gap => {}
                Token::Wildcard if out.last().is_some_and(Token::is_wildcard) => {}
                token => out.push(token),
            }
        }
        if out.is_empty() {
            None
        } else {
            Some(Pattern { tokens: out })
        }
    }

    /// Parses the rendered text form (the inverse of `Display`).
    pub fn parse(text: &str) -> Option<Pattern> {
        tokenize_line(text)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn wildcard_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_wildcard()).count()
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, token) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(token.as_str())?;
        }
        Ok(())
    }
}

fn is_path_like(raw: &str) -> bool {
    raw.contains("://") || raw.matches('/').count() >= 2
}

fn is_hex(piece: &str) -> bool {
    if let Some(rest) = piece
        .strip_prefix("0x")
        .or_else(|| piece.strip_prefix("0X"))
    {
        return !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_hexdigit());
    }
    piece.bytes().all(|b| b.is_ascii_hexdigit()) && piece.bytes().any(|b| b.is_ascii_digit())
}

fn is_encoded(piece: &str) -> bool {
    piece.len() >= ENCODED_MIN_LEN
        && piece.bytes().all(|b| b.is_ascii_alphanumeric())
        && piece.bytes().filter(u8::is_ascii_digit).count() >= ENCODED_MIN_DIGITS
}

/// True for pieces that are numbers, hexadecimal values or encoded strings.
fn is_variable(piece: &str) -> bool {
    piece.bytes().all(|b| b.is_ascii_digit()) || is_hex(piece) || is_encoded(piece)
}

fn push_wildcard(out: &mut Vec<Token>) {
    if !out.last().is_some_and(Token::is_wildcard) {
        out.push(Token::Wildcard);
    }
}

/// Classifies one whitespace-free token.
pub fn classify_token(raw: &str) -> Vec<Token> {
    let mut out = Vec::new();
    classify_into(raw, &mut out);
    out
}

fn classify_into(raw: &str, out: &mut Vec<Token>) {
    if raw.is_empty() {
        return;
    }
    if raw == WILDCARD || is_path_like(raw) {
        push_wildcard(out);
        return;
    }
    for piece in raw.split(|c: char| !c.is_alphanumeric()) {
        if piece.is_empty() {
            continue;
        }
        if is_variable(piece) {
            push_wildcard(out);
        } else {
            out.push(Token::Constant(piece.to_owned()));
        }
    }
}

/// Preprocesses one line. `None` signals a line with no tokens (blank or
/// punctuation only); such lines are counted but never mined.
pub fn tokenize_line(line: &str) -> Option<Pattern> {
    let mut tokens = Vec::new();
    for raw in line.split_whitespace() {
        classify_into(raw, &mut tokens);
    }
    if tokens.is_empty() {
        None
    } else {
        Some(Pattern { tokens })
    }
}

/// LRU memoization of [`tokenize_line`] keyed by the raw line.
pub struct LineCache {
    inner: Option<LruCache<String, Option<Pattern>>>,
}

impl LineCache {
    pub fn new(capacity: usize) -> Self {
        LineCache {
            inner: NonZeroUsize::new(capacity).map(LruCache::new),
        }
    }

    pub fn disabled() -> Self {
        LineCache { inner: None }
    }

    pub fn tokenize(&mut self, line: &str) -> Option<Pattern> {
        let Some(cache) = self.inner.as_mut() else {
            return tokenize_line(line);
        };
        if let Some(hit) = cache.get(line) {
            return hit.clone();
        }
        let pattern = tokenize_line(line);
        cache.put(line.to_owned(), pattern.clone());
        pattern
    }
}

impl Default for LineCache {
    fn default() -> Self {
        LineCache::new(DEFAULT_CACHE_CAPACITY)
    }
}

/// Unique preprocessed patterns with their line frequencies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PatternCounts {
    pub entries: HashMap<Pattern, u64>,
    /// Lines that produced a pattern. Equals the sum of `entries`.
    pub source_lines: u64,
    /// Lines that produced no tokens.
    pub blank_lines: u64,
}

impl PatternCounts {
    pub fn record(&mut self, pattern: Option<Pattern>) {
        match pattern {
            Some(p) => {
                *self.entries.entry(p).or_insert(0) += 1;
                self.source_lines += 1;
            }
            None => self.blank_lines += 1,
        }
    }

    /// Key-wise addition.
    pub fn merge(&mut self, other: PatternCounts) {
        for (pattern, count) in other.entries {
            *self.entries.entry(pattern).or_insert(0) += count;
        }
        self.source_lines += other.source_lines;
        self.blank_lines += other.blank_lines;
    }

    pub fn unique(&self) -> usize {
        self.entries.len()
    }
}

/// Preprocesses an in-memory line sequence.
pub fn preprocess_lines<I, S>(lines: I, cache: &mut LineCache) -> PatternCounts
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts = PatternCounts::default();
    for line in lines {
        counts.record(cache.tokenize(line.as_ref()));
    }
    counts
}

/// Reads `reader` line by line, calling `visit` with each line (without its
/// terminator). Invalid UTF-8 is replaced rather than rejected; I/O failures
/// carry the byte offset where reading stopped.
pub fn for_each_line<R: BufRead>(mut reader: R, mut visit: impl FnMut(&str)) -> Result<()> {
    let mut buf = Vec::new();
    let mut offset = 0u64;
    loop {
        buf.clear();
        let read = reader
            .read_until(b'\n', &mut buf)
            .map_err(|source| Error::Input { offset, source })?;
        if read == 0 {
            return Ok(());
        }
        offset += read as u64;
        let mut end = buf.len();
        if buf[..end].ends_with(b"\n") {
            end -= 1;
        }
        if buf[..end].ends_with(b"\r") {
            end -= 1;
        }
        visit(&String::from_utf8_lossy(&buf[..end]));
    }
}

/// Streaming variant of [`preprocess_lines`].
pub fn preprocess_reader<R: BufRead>(reader: R, cache: &mut LineCache) -> Result<PatternCounts> {
    let mut counts = PatternCounts::default();
    for_each_line(reader, |line| counts.record(cache.tokenize(line)))?;
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::{self, Read};

    fn c(s: &str) -> Token {
        Token::constant(s)
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_token("127.0.0.1:8080"), vec![Token::Wildcard]);
        assert_eq!(classify_token("Started"), vec![c("Started")]);
        assert_eq!(classify_token("task_12"), vec![c("task"), Token::Wildcard]);
        assert!(classify_token("").is_empty());
    }

    #[test]
    fn urls_and_paths_are_single_wildcards() {
        assert_eq!(classify_token("https://example.com/a"), vec![Token::Wildcard]);
        assert_eq!(classify_token("/var/log/app.log"), vec![Token::Wildcard]);
        assert_eq!(classify_token("hdfs://nn:8020"), vec![Token::Wildcard]);
        // one slash is not enough
        assert_eq!(classify_token("read/write"), vec![c("read"), c("write")]);
    }

    #[test]
    fn hex_and_encoded_pieces() {
        assert_eq!(classify_token("0x1F"), vec![Token::Wildcard]);
        assert_eq!(classify_token("deadbeef42"), vec![Token::Wildcard]);
        // all-hex letters without digits read as words
        assert_eq!(classify_token("cafe"), vec![c("cafe")]);
        assert_eq!(classify_token("aGVsbG8gd29ybGQ9Zm9v1x"), vec![Token::Wildcard]);
        // long but only one digit: prose-like
        assert_eq!(
            classify_token("Internationalization1"),
            vec![c("Internationalization1")]
        );
    }

    #[test]
    fn adjacent_variables_merge() {
        assert_eq!(
            classify_token("10/01/2018"),
            vec![Token::Wildcard],
            "path rule catches dates with two slashes"
        );
        assert_eq!(
            classify_token("2018-10-01T12:00:00"),
            vec![Token::Wildcard, c("01T12"), Token::Wildcard],
            "the 'T' joins its neighbours into one alphanumeric piece"
        );
        assert_eq!(
            classify_token("a_1_2_b"),
            vec![c("a"), Token::Wildcard, c("b")]
        );
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize_line("Task 12 finished in 0.5 s").unwrap().to_string(),
            "Task * finished in * s"
        );
        assert_eq!(
            tokenize_line("Shutting down gracefully").unwrap().to_string(),
            "Shutting down gracefully"
        );
        let p = tokenize_line(
            "ContextHandler Started ServeletContextHandler rdd null AVAILABLE Spark",
        )
        .unwrap();
        assert_eq!(p.len(), 7);
        assert!(p.tokens().iter().all(|t| matches!(t, Token::Constant(_))));
    }

    #[test]
    fn wildcards_collapse_across_tokens() {
        assert_eq!(
            tokenize_line("took 12 ms 0x3f 7 then").unwrap().to_string(),
            "took * ms * then"
        );
        assert_eq!(tokenize_line("12 13 14").unwrap().to_string(), "*");
    }

    #[test]
    fn blank_lines_signal_none() {
        assert!(tokenize_line("").is_none());
        assert!(tokenize_line("   \t ").is_none());
        assert!(tokenize_line("---- ====").is_none());
    }

    #[test]
    fn preprocess_dedupes() {
        let lines = vec!["Worker started on port 8080"; 1000];
        let counts = preprocess_lines(&lines, &mut LineCache::default());
        assert_eq!(counts.unique(), 1);
        assert_eq!(counts.source_lines, 1000);
        assert_eq!(counts.entries.values().sum::<u64>(), 1000);
    }

    #[test]
    fn context_handler_pair_stays_distinct() {
        let lines = [
            "ContextHandler Started ServeletContextHandler rdd null AVAILABLE Spark",
            "ContextHandler Started ServeletContextHandler static Spark",
        ];
        let counts = preprocess_lines(lines, &mut LineCache::default());
        assert_eq!(counts.unique(), 2);
    }

    #[test]
    fn reader_tracks_blank_lines_and_crlf() {
        let data = b"alpha 1\r\n\nalpha 2\nbeta";
        let counts = preprocess_reader(&data[..], &mut LineCache::default()).unwrap();
        assert_eq!(counts.source_lines, 3);
        assert_eq!(counts.blank_lines, 1);
        assert_eq!(counts.unique(), 2);
    }

    struct FailAfter {
        data: Vec<u8>,
        pos: usize,
    }

    impl Read for FailAfter {
        fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
            if self.pos >= self.data.len() {
                return Err(io::Error::other("disk on fire"));
            }
            let n = buf.len().min(self.data.len() - self.pos);
            buf[..n].copy_from_slice(&self.data[self.pos..self.pos + n]);
            self.pos += n;
            Ok(n)
        }
    }

    #[test]
    fn read_failure_reports_offset() {
        let reader = io::BufReader::new(FailAfter {
            data: b"one line\ntwo li".to_vec(),
            pos: 0,
        });
        match preprocess_reader(reader, &mut LineCache::default()) {
            Err(Error::Input { offset, .. }) => assert_eq!(offset, 9),
            other => panic!("expected input error, got {other:?}"),
        }
    }

    fn line_strategy() -> impl Strategy<Value = String> {
        let word = prop_oneof![
            "[A-Za-z]{1,8}",
            "[0-9]{1,5}",
            "[a-f0-9]{4,12}",
            "[a-z]{1,5}[_:=.-][0-9a-z]{1,5}",
            Just("/tmp/x/y".to_string()),
            Just("*".to_string()),
        ];
        prop::collection::vec(word, 0..12).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn no_consecutive_wildcards(line in line_strategy()) {
            if let Some(p) = tokenize_line(&line) {
                for pair in p.tokens().windows(2) {
                    prop_assert!(!(pair[0].is_wildcard() && pair[1].is_wildcard()));
                }
                prop_assert!(p.tokens().iter().all(|t| !t.is_gap()));
            }
        }

        #[test]
        fn tokenize_is_idempotent_on_rendering(line in line_strategy()) {
            if let Some(p) = tokenize_line(&line) {
                prop_assert_eq!(tokenize_line(&p.to_string()), Some(p));
            }
        }

        #[test]
        fn cache_changes_nothing(lines in prop::collection::vec(line_strategy(), 0..40)) {
            let cached = preprocess_lines(&lines, &mut LineCache::new(4));
            let plain = preprocess_lines(&lines, &mut LineCache::disabled());
            prop_assert_eq!(cached.entries.values().sum::<u64>(), cached.source_lines);
            prop_assert_eq!(cached.source_lines + cached.blank_lines, lines.len() as u64);
            prop_assert_eq!(cached, plain);
        }
    }
}
