use std::collections::BTreeSet;

use logsieve::datagen::{generate_corpus, CorpusSpec};
use logsieve::parser::{parse_lines, Config};
use logsieve::pattern_model::select_patterns;
use logsieve::privacy::{
    aggregate, encode_pattern, read_encodings, write_encodings, BloomConfig, BloomEncoding, StoreOptions,
};
use logsieve::tokenizer::{tokenize_line, Token};

/// Every Constant of every pattern in a few random corpora.
fn corpus_tokens(seed: u64) -> (Vec<logsieve::tokenizer::Pattern>, BTreeSet<String>) {
    let corpus = generate_corpus(&CorpusSpec {
        template_count: 150,
        files: 2,
        lines_per_file: 3000,
        word_slot_rate: 0.2,
        seed,
        ..CorpusSpec::default()
    })
    .unwrap();
    let mut patterns: Vec<_> = corpus.files.iter().flatten().filter_map(|l| tokenize_line(l)).collect();
    patterns.sort();
    patterns.dedup();
    let tokens = patterns
        .iter()
        .flat_map(|p| p.tokens().iter().filter(|t| !t.is_wildcard()).map(|t| t.as_str().to_owned()))
        .collect();
    (patterns, tokens)
}

/// Leaf values of a JSON record, split into random payload (bitmaps and the
/// checksum) and everything else. Keys are fixed schema text.
fn leaves(v: &serde_json::Value, key: &str, payload: &mut Vec<String>, other: &mut Vec<String>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                leaves(v, k, payload, other);
            }
        }
        serde_json::Value::Array(items) => items.iter().for_each(|v| leaves(v, key, payload, other)),
        serde_json::Value::String(s) if key == "bitmap" || key == "sha256" => payload.push(s.clone()),
        serde_json::Value::String(s) => other.push(s.clone()),
        v => other.push(v.to_string()),
    }
}

/// Random payload contains short strings by chance, so it is held to tokens
/// of six or more characters; every other value to three or more.
#[test]
fn serialized_encodings_leak_no_tokens() {
    let bloom = BloomConfig::default();
    for seed in 0..4 {
        let (patterns, tokens) = corpus_tokens(seed);
        let subs: Vec<(BloomEncoding, String)> = patterns
            .iter()
            .map(|p| (encode_pattern(p, &bloom).with_frequency(1), "c".to_owned()))
            .collect();
        let store = aggregate(&subs, &bloom, 1.0, StoreOptions::default()).unwrap();
        let encoded = [store.to_bytes(), write_encodings(&bloom, store.encodings())];
        for bytes in &encoded {
            let (mut payload, mut other) = (Vec::new(), Vec::new());
            for line in std::str::from_utf8(bytes).unwrap().lines() {
                leaves(&serde_json::from_str(line).unwrap(), "", &mut payload, &mut other);
            }
            assert!(!payload.is_empty());
            for t in &tokens {
                if t.len() >= 3 {
                    assert!(!other.iter().any(|v| v.contains(t.as_str())), "seed {seed}: {t:?} leaked");
                }
                if t.len() >= 6 {
                    assert!(!payload.iter().any(|v| v.contains(t.as_str())), "seed {seed}: {t:?} in payload");
                }
            }
        }
    }
}

#[test]
fn encoding_file_round_trips() {
    let bloom = BloomConfig { m: 2048, k: 3, shingle_n: 2, seed: 4 };
    let (patterns, _) = corpus_tokens(9);
    let encs: Vec<BloomEncoding> = patterns
        .iter()
        .take(50)
        .enumerate()
        .map(|(i, p)| encode_pattern(p, &bloom).with_frequency(i as u64 + 1))
        .collect();
    let bytes = write_encodings(&bloom, &encs);
    let (cfg, back) = read_encodings(&bytes[..]).unwrap();
    assert_eq!(cfg, bloom);
    assert_eq!(back, encs);
}

#[test]
fn a_models_own_patterns_match_its_encoding_store() {
    let corpus = generate_corpus(&CorpusSpec { template_count: 80, files: 2, lines_per_file: 2000, seed: 1, ..CorpusSpec::default() })
        .unwrap();
    let cfg = Config { coverage_fraction: 1.0, ..Config::default() };
    let model = select_patterns(&parse_lines(&corpus.files, &cfg).unwrap().patterns, &cfg).unwrap();
    let bloom = BloomConfig::default();
    let subs: Vec<(BloomEncoding, String)> = model
        .patterns()
        .iter()
        .map(|s| (encode_pattern(&s.pattern, &bloom).with_frequency(s.frequency), "m".to_owned()))
        .collect();
    let store = aggregate(&subs, &bloom, 1.0, StoreOptions::default()).unwrap();
    for s in model.patterns() {
        assert!(store.match_encoded(&s.pattern), "{}", s.pattern);
    }
    let novel = logsieve::tokenizer::Pattern::collapse(
        ["quantum", "flux", "capacitor", "overheated", "badly"].map(Token::constant),
    )
    .unwrap();
    assert!(!store.match_encoded(&novel));
}
