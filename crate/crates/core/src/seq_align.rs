//! Longest common subsequence, Needleman-Wunsch pairwise alignment,
//! longest-first progressive alignment of a block, and reduction of the
//! resulting alignment matrix to a single pattern.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::tokenizer::{Pattern, Token};

pub const MATCH_SCORE: i32 = 1;
pub const MISMATCH_SCORE: i32 = -1;
pub const GAP_SCORE: i32 = -1;

/// Slack for `f64` rounding in `alpha * len` and `beta * n` comparisons.
const EPS: f64 = 1e-9;

/// LCS length under an arbitrary token equivalence.
pub fn lcs_length_by<F>(p: &[Token], q: &[Token], eq: F) -> usize
where
    F: Fn(&Token, &Token) -> bool,
{
    if p.is_empty() || q.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; q.len() + 1];
    let mut cur = vec![0usize; q.len() + 1];
    for a in p {
        for (j, b) in q.iter().enumerate() {
            cur[j + 1] = if eq(a, b) {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[q.len()]
}

/// LCS length where every token, wildcards included, equals only itself.
pub fn lcs_length(p: &[Token], q: &[Token]) -> usize {
    lcs_length_by(p, q, |a, b| a == b)
}

/// LCS length where a wildcard in `pattern` absorbs any single token of
/// `line`. Used when matching lines against trained patterns.
pub fn wildcard_lcs_length(pattern: &[Token], line: &[Token]) -> usize {
    lcs_length_by(pattern, line, |pt, lt| pt.is_wildcard() || pt == lt)
}

/// `lcs - alpha * max(len_p, len_q) >= 0`.
pub fn similarity_holds(lcs: usize, len_p: usize, len_q: usize, alpha: f64) -> bool {
    lcs as f64 - alpha * len_p.max(len_q) as f64 >= -EPS
}

pub fn satisfies_similarity(p: &Pattern, q: &Pattern, alpha: f64) -> bool {
    similarity_holds(lcs_length(p.tokens(), q.tokens()), p.len(), q.len(), alpha)
}

/// A pattern with gaps inserted by alignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AlignedPattern {
    pub tokens: Vec<Token>,
}

impl AlignedPattern {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn strip_gaps(&self) -> Vec<Token> {
        self.tokens.iter().filter(|t| !t.is_gap()).cloned().collect()
    }
}

fn pair_score(a: &Token, b: &Token) -> i32 {
    if a == b {
        MATCH_SCORE
    } else {
        MISMATCH_SCORE
    }
}

/// Score of an alignment of two gap-free sequences. Empty columns (gap
/// against gap) score zero.
pub fn alignment_score(a: &[Token], b: &[Token]) -> i32 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| match (x.is_gap(), y.is_gap()) {
            (true, true) => 0,
            (true, false) | (false, true) => GAP_SCORE,
            (false, false) => pair_score(x, y),
        })
        .sum()
}

/// Optimal global alignment score without traceback.
pub fn optimal_score(a: &[Token], b: &[Token]) -> i32 {
    suffix_table(a, b)[0]
}

/// `table[i * (m + 1) + j]` is the best score aligning `a[i..]` with `b[j..]`.
fn suffix_table(a: &[Token], b: &[Token]) -> Vec<i32> {
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    let mut t = vec![0i32; (n + 1) * w];
    for i in (0..=n).rev() {
        for j in (0..=m).rev() {
            t[i * w + j] = if i == n {
                (m - j) as i32 * GAP_SCORE
            } else if j == m {
                (n - i) as i32 * GAP_SCORE
            } else {
                let diag = pair_score(&a[i], &b[j]) + t[(i + 1) * w + j + 1];
                let skip_b = GAP_SCORE + t[i * w + j + 1];
                let skip_a = GAP_SCORE + t[(i + 1) * w + j];
                diag.max(skip_b).max(skip_a)
            };
        }
    }
    t
}

/// Needleman-Wunsch global alignment (match +1, mismatch -1, gap -1).
///
/// The table is filled over suffixes and traced forward from the start, so
/// among equally good alignments the one that pairs tokens earliest wins.
/// Ties prefer a match/mismatch, then a gap in `a`, then a gap in `b`.
pub fn align_pair(a: &[Token], b: &[Token]) -> (AlignedPattern, AlignedPattern) {
    let t = suffix_table(a, b);
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    let mut out_a = Vec::with_capacity(n + m);
    let mut out_b = Vec::with_capacity(n + m);
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        let here = t[i * w + j];
        if i < n && j < m && here == pair_score(&a[i], &b[j]) + t[(i + 1) * w + j + 1] {
            out_a.push(a[i].clone());
            out_b.push(b[j].clone());
            i += 1;
            j += 1;
        } else if j < m && here == GAP_SCORE + t[i * w + j + 1] {
            out_a.push(Token::Gap);
            out_b.push(b[j].clone());
            j += 1;
        } else {
            out_a.push(a[i].clone());
            out_b.push(Token::Gap);
            i += 1;
        }
    }
    (
        AlignedPattern { tokens: out_a },
        AlignedPattern { tokens: out_b },
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMode {
    pub token: Token,
    pub frequency: usize,
}

/// Equal-length aligned rows with per-column modes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentMatrix {
    rows: Vec<AlignedPattern>,
    width: usize,
    column_modes: Vec<ColumnMode>,
}

impl AlignmentMatrix {
    pub fn from_rows(rows: Vec<AlignedPattern>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::EmptyMatrix);
        };
        let width = first.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != width) {
            return Err(Error::Invariant(format!(
                "alignment row {bad} has length {} but row 0 has {width}",
                rows[bad].len()
            )));
        }
        let column_modes = (0..width).map(|j| column_mode(&rows, j)).collect();
        Ok(AlignmentMatrix {
            rows,
            width,
            column_modes,
        })
    }

    pub fn rows(&self) -> &[AlignedPattern] {
        &self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.rows.len()
    }

    pub fn column_modes(&self) -> &[ColumnMode] {
        &self.column_modes
    }
}

/// Most frequent token in column `j`; ties go to the smallest token.
fn column_mode(rows: &[AlignedPattern], j: usize) -> ColumnMode {
    let mut counts: HashMap<&Token, usize> = HashMap::new();
    for row in rows {
        *counts.entry(&row.tokens[j]).or_insert(0) += 1;
    }
    let (token, frequency) = counts
        .into_iter()
        .max_by(|(ta, ca), (tb, cb)| ca.cmp(cb).then_with(|| tb.cmp(ta)))
        .expect("matrix has rows");
    ColumnMode {
        token: token.clone(),
        frequency,
    }
}

/// Attempts made to fit a sequence under the last row before falling back
/// to trailing-gap padding.
const MAX_REFITS: usize = 64;

type Row = (usize, Vec<Token>);

fn pad_to(row: &mut Vec<Token>, width: usize) {
    row.resize(width, Token::Gap);
}

/// Longest-first progressive alignment. Rows carry their input index.
fn align_sequence(rows: Vec<Row>) -> Vec<Row> {
    let mut sorted = rows;
    sorted.sort_by_key(|e| std::cmp::Reverse(e.1.len()));
    if sorted.len() < 2 {
        return sorted;
    }
    let mut rest = sorted.into_iter();
    let (i0, r0) = rest.next().unwrap();
    let (i1, r1) = rest.next().unwrap();
    let (x, y) = align_pair(&r0, &r1);
    let mut aligned: Vec<Row> = vec![(i0, x.tokens), (i1, y.tokens)];

    for (idx, seq) in rest {
        let mut attempts = 0;
        loop {
            let last = &aligned.last().expect("at least two rows").1;
            let (new_last, new_row) = align_pair(last, &seq);
            if new_last.len() > last.len() {
                attempts += 1;
                if attempts > MAX_REFITS {
                    let width = aligned[0].1.len().max(new_row.len());
                    for (_, r) in aligned.iter_mut() {
                        pad_to(r, width);
                    }
                    let mut row = new_row.tokens;
                    pad_to(&mut row, width);
                    aligned.push((idx, row));
                    break;
                }
                let (last_idx, _) = aligned.pop().unwrap();
                aligned.push((last_idx, new_last.tokens));
                aligned = align_sequence(aligned);
                let width = aligned[0].1.len();
                if new_row.len() == width {
                    aligned.push((idx, new_row.tokens));
                    break;
                }
                // The re-alignment widened the frame; fit `seq` again.
            } else {
                aligned.push((idx, new_row.tokens));
                break;
            }
        }
    }
    aligned
}

/// Aligns a block of patterns; row `i` of the result strips back to
/// `patterns[i]`.
pub fn align_block(patterns: &[Pattern]) -> Result<AlignmentMatrix> {
    if patterns.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let rows: Vec<Row> = patterns
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.tokens().to_vec()))
        .collect();
    let mut aligned = align_sequence(rows);
    aligned.sort_by_key(|(i, _)| *i);
    AlignmentMatrix::from_rows(
        aligned
            .into_iter()
            .map(|(_, tokens)| AlignedPattern { tokens })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionOutcome {
    pub reduced: Pattern,
    /// Row indices eliminated for disagreeing with a constant column.
    pub misfits: BTreeSet<usize>,
}

/// Collapses a matrix to one pattern. Column `j` is constant when
/// `f_j >= beta * n`; rows disagreeing with any constant column's mode are
/// misfits. Constant columns emit their mode, variable columns a wildcard;
/// all-gap columns vanish.
pub fn reduce_matrix(m: &AlignmentMatrix, beta: f64) -> Result<ReductionOutcome> {
    let n = m.height();
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    let cutoff = beta * n as f64 - EPS;
    let mut misfits = BTreeSet::new();
    let mut out = Vec::with_capacity(m.width());
    for (j, mode) in m.column_modes().iter().enumerate() {
        let constant = mode.frequency as f64 >= cutoff;
        match (constant, mode.token.is_gap()) {
            (true, false) => {
                for (i, row) in m.rows().iter().enumerate() {
                    if row.tokens[j] != mode.token {
                        misfits.insert(i);
                    }
                }
                out.push(mode.token.clone());
            }
            (true, true) if mode.frequency == n => {}
            _ => out.push(Token::Wildcard),
        }
    }
    if misfits.len() == n {
        return Err(Error::AllRowsMisfit);
    }
    let reduced = Pattern::collapse(out).ok_or_else(|| {
        Error::Invariant("reduction produced an empty pattern".to_string())
    })?;
    Ok(ReductionOutcome { reduced, misfits })
}

/// Does `line` instantiate `pattern`? Each wildcard absorbs zero or more
/// tokens; constants must appear in order with nothing in between.
pub fn matches_skeleton(pattern: &[Token], line: &[Token]) -> bool {
    fn go(p: &[Token], l: &[Token], memo: &mut HashMap<(usize, usize), bool>) -> bool {
        let key = (p.len(), l.len());
        if let Some(&v) = memo.get(&key) {
            return v;
        }
        let v = match p.first() {
            None => l.is_empty(),
            Some(Token::Wildcard) => (0..=l.len()).any(|k| go(&p[1..], &l[k..], memo)),
            Some(t) => l.first() == Some(t) && go(&p[1..], &l[1..], memo),
        };
        memo.insert(key, v);
        v
    }
    go(pattern, line, &mut HashMap::new())
}
