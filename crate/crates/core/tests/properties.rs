use std::collections::BTreeSet;

use proptest::prelude::*;

use logsieve::filter::filter_lines;
use logsieve::metrics::{loss_term, MatchStats};
use logsieve::minhash_lsh::{shingle, LshIndex, MinHasher};
use logsieve::parser::{parse_lines, reduce_once, Config, PatternSet};
use logsieve::pattern_model::select_patterns;
use logsieve::privacy::{aggregate, encode_pattern, BloomConfig, BloomEncoding, StoreOptions};
use logsieve::seq_align::{align_block, align_pair, matches_skeleton, reduce_matrix};
use logsieve::tokenizer::{preprocess_lines, tokenize_line, LineCache, Pattern, Token};

const WORDS: [&str; 12] = [
    "open", "close", "read", "block", "node", "task", "INFO", "WARN", "failed", "done", "from", "to",
];

fn word() -> impl Strategy<Value = String> {
    prop_oneof![
        4 => proptest::sample::select(WORDS.to_vec()).prop_map(str::to_owned),
        1 => (0u32..100_000).prop_map(|n| n.to_string()),
        1 => "[a-f0-9]{4,8}",
        1 => "/[a-z]{1,5}/[a-z]{1,5}",
        1 => "[a-z]{1,3}",
    ]
}

fn line() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..10).prop_map(|w| w.join(" "))
}

fn constants() -> impl Strategy<Value = Vec<Token>> {
    prop::collection::vec(proptest::sample::select(WORDS.to_vec()), 1..9)
        .prop_map(|w| w.into_iter().map(Token::constant).collect())
}

fn pattern() -> impl Strategy<Value = Pattern> {
    line().prop_filter_map("blank", |l| tokenize_line(&l))
}

fn corpus() -> impl Strategy<Value = Vec<Vec<String>>> {
    prop::collection::vec(prop::collection::vec(line(), 1..40), 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tokenizing_a_rendered_pattern_is_identity(p in pattern()) {
        prop_assert_eq!(tokenize_line(&p.to_string()), Some(p));
    }

    #[test]
    fn preprocessing_counts_sum_to_lines_with_or_without_cache(
        lines in prop::collection::vec(prop_oneof![4 => line(), 1 => Just("  ".to_owned())], 0..50)
    ) {
        let cached = preprocess_lines(lines.iter(), &mut LineCache::new(8));
        let plain = preprocess_lines(lines.iter(), &mut LineCache::disabled());
        prop_assert_eq!(cached.entries.values().sum::<u64>(), cached.source_lines);
        prop_assert_eq!(cached.source_lines + cached.blank_lines, lines.len() as u64);
        prop_assert_eq!(cached.entries, plain.entries);
    }

    #[test]
    fn shingle_count_is_bounded(p in pattern(), n in 1usize..4) {
        let s = shingle(&p, n);
        if p.len() >= n {
            prop_assert!(s.len() <= p.len() - n + 1);
        } else {
            prop_assert_eq!(s.len(), 1);
        }
    }

    #[test]
    fn lsh_finds_every_inserted_key(ps in prop::collection::vec(pattern(), 1..20), seed in 0u64..50) {
        let hasher = MinHasher::new(100, seed);
        let mut index = LshIndex::new(100, 0.75, seed);
        let sigs: Vec<_> = ps.iter().map(|p| hasher.signature_of(p, 2)).collect();
        for (i, s) in sigs.iter().enumerate() {
            index.insert(i, s).unwrap();
        }
        for (i, s) in sigs.iter().enumerate() {
            prop_assert!(index.query(s).unwrap().contains(&i));
        }
    }

    #[test]
    fn pairwise_alignment_is_reversible(a in constants(), b in constants()) {
        let (ra, rb) = align_pair(&a, &b);
        prop_assert_eq!(ra.len(), rb.len());
        prop_assert_eq!(ra.strip_gaps(), a);
        prop_assert_eq!(rb.strip_gaps(), b);
    }

    #[test]
    fn reduction_keeps_rows_matchable(rows in prop::collection::vec(constants(), 1..6), beta in 0.3f64..1.0) {
        let ps: Vec<Pattern> = rows.into_iter().map(|r| Pattern::collapse(r).unwrap()).collect();
        let m = align_block(&ps).unwrap();
        // every row disagreeing with the modes is a reported error, not a result
        let Ok(out) = reduce_matrix(&m, beta) else { return Ok(()) };
        let t = out.reduced.tokens();
        prop_assert!(!t.contains(&Token::Gap));
        prop_assert!(t.windows(2).all(|w| !(w[0] == Token::Wildcard && w[1] == Token::Wildcard)));
        for (i, row) in m.rows().iter().enumerate() {
            if !out.misfits.contains(&i) {
                prop_assert!(matches_skeleton(t, &row.strip_gaps()));
            }
        }
    }

    #[test]
    fn reduction_conserves_frequency_and_settles(files in corpus()) {
        let cfg = Config::default();
        let out = parse_lines(&files, &cfg).unwrap();
        let lines: usize = files.iter().map(Vec::len).sum();
        prop_assert_eq!(out.patterns.total_frequency() + out.blank_lines, lines as u64);
        if *out.trace.last().unwrap() == out.trace[out.trace.len() - 2] {
            let again = reduce_once(&out.patterns, &cfg).unwrap();
            prop_assert_eq!(again.total_frequency(), out.patterns.total_frequency());
            prop_assert_eq!(&again, &out.patterns);
        }
    }

    #[test]
    fn selection_meets_coverage_and_is_monotone(
        freqs in prop::collection::vec((1u64..200, 0u32..8), 1..25),
        lo in 0.1f64..1.0,
        hi in 0.1f64..1.0,
    ) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let mut ps = PatternSet::new(8, freqs.iter().map(|f| f.0).sum());
        for (i, (f, file)) in freqs.iter().enumerate() {
            let p = tokenize_line(&format!("event kind{i} happened")).unwrap();
            ps.insert(p, MatchStats::for_sequence(3, *f, BTreeSet::from([*file])));
        }
        let select = |coverage: f64, presence: f64| {
            let cfg = Config { coverage_fraction: coverage, file_presence_fraction: presence, ..Config::default() };
            select_patterns(&ps, &cfg).unwrap()
        };
        let ids = |m: &logsieve::pattern_model::PatternModel| -> BTreeSet<Pattern> {
            m.patterns().iter().map(|s| s.pattern.clone()).collect()
        };
        let small = select(lo, 1.0);
        let covered: u64 = small.patterns().iter().map(|s| s.frequency).sum();
        prop_assert!(covered as f64 >= lo * ps.total_frequency() as f64 - 1e-6);
        prop_assert!(ids(&small).is_subset(&ids(&select(hi, 1.0))));
        prop_assert!(ids(&select(0.5, hi)).is_subset(&ids(&select(0.5, lo))));
    }

    #[test]
    fn loss_terms_stay_in_bounds(len in 1usize..20, lengths in prop::collection::vec(1u64..40, 1..10)) {
        let stats = MatchStats {
            frequency: lengths.len() as u64,
            match_count: lengths.len() as u64,
            length_sum: lengths.iter().sum(),
            files: BTreeSet::new(),
        };
        let lmax = *lengths.iter().max().unwrap() as f64;
        let term = loss_term(len, &stats);
        prop_assert!(term >= 0.0);
        prop_assert!(term <= ((lmax - len as f64).max(0.0) / len as f64).powi(2) + 1e-12);
    }

    #[test]
    fn raising_gamma_never_hides_anomalies(train in corpus(), test in prop::collection::vec(line(), 1..60), g in 1u64..5) {
        let cfg = Config::default();
        let Ok(parsed) = parse_lines(&train, &cfg) else { return Ok(()) };
        let Ok(model) = select_patterns(&parsed.patterns, &cfg) else { return Ok(()) };
        let low = filter_lines(&model, None, &test, &Config { gamma: g, ..cfg.clone() }).unwrap();
        let high = filter_lines(&model, None, &test, &Config { gamma: g + 3, ..cfg.clone() }).unwrap();
        let low: BTreeSet<usize> = low.anomalies.iter().map(|a| a.0).collect();
        let high_set: BTreeSet<usize> = high.anomalies.iter().map(|a| a.0).collect();
        prop_assert!(low.is_subset(&high_set));
        let again = filter_lines(&model, None, &test, &Config { gamma: g + 3, ..cfg }).unwrap();
        prop_assert_eq!(again, high);
    }

    #[test]
    fn aggregating_a_store_reproduces_it(ps in prop::collection::vec((pattern(), 1u64..50), 1..20)) {
        let bloom = BloomConfig::default();
        let subs: Vec<(BloomEncoding, String)> = ps
            .iter()
            .enumerate()
            .map(|(i, (p, f))| (encode_pattern(p, &bloom).with_frequency(*f), format!("c{}", i % 3)))
            .collect();
        let store = aggregate(&subs, &bloom, 1.0, StoreOptions::default()).unwrap();
        let resubmitted: Vec<(BloomEncoding, String)> =
            store.encodings().iter().map(|e| (e.clone(), "server".to_owned())).collect();
        let again = aggregate(&resubmitted, &bloom, 1.0, StoreOptions::default()).unwrap();
        prop_assert_eq!(again.encodings(), store.encodings());
    }

    #[test]
    fn encodings_survive_the_wire_format(p in pattern(), f in 1u64..1000) {
        let bloom = BloomConfig::default();
        let e = encode_pattern(&p, &bloom).with_frequency(f);
        let back = BloomEncoding::from_bytes(bloom, &e.to_bytes(), f).unwrap();
        prop_assert_eq!(back, e);
    }
}
