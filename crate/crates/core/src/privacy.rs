//! Bloom-filter encodings of patterns, server-side aggregation and encoded
//! matching.
//!
//! A pattern is shared as an `m`-bit bitmap: every token shingle sets `k`
//! positions chosen by seeded double hashing. Two bitmaps are compared by the
//! Jaccard similarity of their set bits, which tracks the Jaccard similarity
//! of the underlying shingle sets while the fill ratio stays low. No decode
//! operation exists.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_128_with_seed;

use crate::error::{Error, Result};
use crate::jsonl::{parse_record, read_checked, ChecksumWriter};
use crate::minhash_lsh::{lsh_blocks, shingle, LshIndex, MinHashSignature, MinHasher, ShingleSet};
use crate::tokenizer::Pattern;

pub const ENCODING_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_STORE_THRESHOLD: f64 = 0.9;
pub const DEFAULT_STORE_PERMUTATIONS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BloomConfig {
    /// Bitmap width in bits.
    pub m: usize,
    /// Positions set per shingle.
    pub k: usize,
    pub shingle_n: usize,
    pub seed: u64,
}

impl Default for BloomConfig {
    fn default() -> Self {
        BloomConfig {
            m: 1024,
            k: 2,
            shingle_n: 2,
            seed: 0,
        }
    }
}

impl BloomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 64 || !self.m.is_power_of_two() {
            return Err(Error::Config(format!(
                "bloom width m must be a power of two >= 64, got {}",
                self.m
            )));
        }
        if self.k == 0 || self.shingle_n == 0 {
            return Err(Error::Config("bloom k and shingle_n must be at least 1".into()));
        }
        Ok(())
    }

    fn words(&self) -> usize {
        self.m / 64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomEncoding {
    config: BloomConfig,
    bits: Vec<u64>,
    frequency: u64,
    set_bits: u32,
}

impl BloomEncoding {
    fn from_bits(config: BloomConfig, bits: Vec<u64>, frequency: u64) -> Self {
        let set_bits = bits.iter().map(|w| w.count_ones()).sum();
        BloomEncoding {
            config,
            bits,
            frequency,
            set_bits,
        }
    }

    pub fn config(&self) -> &BloomConfig {
        &self.config
    }

    pub fn frequency(&self) -> u64 {
        self.frequency
    }

    pub fn with_frequency(mut self, frequency: u64) -> Self {
        assert!(frequency >= 1, "encodings carry a positive frequency");
        self.frequency = frequency;
        self
    }

    pub fn set_bits(&self) -> u32 {
        self.set_bits
    }

    pub fn fill_ratio(&self) -> f64 {
        self.set_bits as f64 / self.config.m as f64
    }

    pub fn bit(&self, i: usize) -> bool {
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    /// Indices of set bits, ascending.
    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().flat_map(|(w, &word)| {
            (0..64).filter(move |b| word >> b & 1 == 1).map(move |b| w * 64 + b)
        })
    }

    /// Bitmap as `m / 8` bytes, bit 0 in the most significant bit of byte 0.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.config.m / 8];
        for i in self.positions() {
            out[i / 8] |= 0x80 >> (i % 8);
        }
        out
    }

    pub fn from_bytes(config: BloomConfig, bytes: &[u8], frequency: u64) -> Result<Self> {
        config.validate()?;
        if bytes.len() != config.m / 8 {
            return Err(Error::Usage(format!(
                "bitmap has {} bytes, expected {}",
                bytes.len(),
                config.m / 8
            )));
        }
        let mut bits = vec![0u64; config.words()];
        for (byte_idx, &byte) in bytes.iter().enumerate() {
            for b in 0..8 {
                if byte & (0x80 >> b) != 0 {
                    let i = byte_idx * 8 + b;
                    bits[i / 64] |= 1 << (i % 64);
                }
            }
        }
        Ok(BloomEncoding::from_bits(config, bits, frequency))
    }

    pub fn to_base64(&self) -> String {
        BASE64.encode(self.to_bytes())
    }
}

fn positions_for(item: &str, cfg: &BloomConfig) -> impl Iterator<Item = usize> {
    let h = xxh3_128_with_seed(item.as_bytes(), cfg.seed);
    let h1 = h as u64;
    let h2 = (h >> 64) as u64 | 1;
    let mask = cfg.m as u64 - 1;
    (0..cfg.k as u64).map(move |i| (h1.wrapping_add(i.wrapping_mul(h2)) & mask) as usize)
}

/// Bitmap of an arbitrary shingle set, frequency 1.
pub fn encode_shingles(shingles: &ShingleSet, cfg: &BloomConfig) -> BloomEncoding {
    let mut bits = vec![0u64; cfg.words()];
    for s in shingles.iter() {
        for i in positions_for(s, cfg) {
            bits[i / 64] |= 1 << (i % 64);
        }
    }
    BloomEncoding::from_bits(*cfg, bits, 1)
}

/// Bitmap of the pattern's token shingles, frequency 1.
pub fn encode_pattern(p: &Pattern, cfg: &BloomConfig) -> BloomEncoding {
    encode_shingles(&shingle(p, cfg.shingle_n), cfg)
}

/// `|a AND b| / |a OR b|`; 1.0 for two empty bitmaps.
pub fn encoding_jaccard(a: &BloomEncoding, b: &BloomEncoding) -> Result<f64> {
    if a.config != b.config {
        return Err(Error::Usage(
            "cannot compare encodings built with different bloom configurations".into(),
        ));
    }
    Ok(bitmap_jaccard(&a.bits, &b.bits))
}

fn bitmap_jaccard(a: &[u64], b: &[u64]) -> f64 {
    let (mut inter, mut union) = (0u32, 0u32);
    for (x, y) in a.iter().zip(b) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoreOptions {
    /// Bitmap Jaccard needed to block together or to match.
    pub threshold: f64,
    pub num_permutations: usize,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions {
            threshold: DEFAULT_STORE_THRESHOLD,
            num_permutations: DEFAULT_STORE_PERMUTATIONS,
        }
    }
}

fn bitmap_signature(hasher: &MinHasher, e: &BloomEncoding) -> Result<MinHashSignature> {
    hasher.signature_from_hashes(
        e.positions()
            .map(|i| hasher.base_hash(&(i as u32).to_le_bytes())),
    )
}

/// Frozen set of shared encodings. Ids are indices into
/// [`EncodingStore::encodings`].
#[derive(Debug, Clone)]
pub struct EncodingStore {
    config: BloomConfig,
    encodings: Vec<BloomEncoding>,
    options: StoreOptions,
    hasher: MinHasher,
    lsh: LshIndex<usize>,
}

impl PartialEq for EncodingStore {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.encodings == other.encodings
            && self.options == other.options
    }
}

impl EncodingStore {
    pub fn new(
        config: BloomConfig,
        encodings: Vec<BloomEncoding>,
        options: StoreOptions,
    ) -> Result<Self> {
        config.validate()?;
        if !(options.threshold > 0.0 && options.threshold <= 1.0) || options.num_permutations == 0
        {
            return Err(Error::Config(format!("invalid store options {options:?}")));
        }
        if encodings.iter().any(|e| e.config != config) {
            return Err(Error::Usage("encoding does not match the store's bloom configuration".into()));
        }
        let hasher = MinHasher::new(options.num_permutations, config.seed);
        let mut lsh = LshIndex::new(options.num_permutations, options.threshold, config.seed);
        for (id, e) in encodings.iter().enumerate() {
            lsh.insert(id, &bitmap_signature(&hasher, e)?)?;
        }
        Ok(EncodingStore {
            config,
            encodings,
            options,
            hasher,
            lsh,
        })
    }

    pub fn empty(config: BloomConfig, options: StoreOptions) -> Result<Self> {
        EncodingStore::new(config, Vec::new(), options)
    }

    pub fn config(&self) -> &BloomConfig {
        &self.config
    }

    pub fn options(&self) -> StoreOptions {
        self.options
    }

    pub fn encodings(&self) -> &[BloomEncoding] {
        &self.encodings
    }

    pub fn len(&self) -> usize {
        self.encodings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.encodings.is_empty()
    }

    /// First stored encoding at or above the threshold, scanning candidates
    /// by bitmap Jaccard descending, then id.
    pub fn best_match_encoding(&self, e: &BloomEncoding) -> Option<usize> {
        if self.encodings.is_empty() || e.config != self.config || e.set_bits == 0 {
            return None;
        }
        let sig = bitmap_signature(&self.hasher, e).ok()?;
        let ids = self.lsh.query(&sig).expect("store hasher signature");
        ids.into_iter()
            .map(|id| (bitmap_jaccard(&e.bits, &self.encodings[id].bits), id))
            .filter(|&(j, _)| j >= self.options.threshold)
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
            .map(|(_, id)| id)
    }

    pub fn best_match(&self, p: &Pattern) -> Option<usize> {
        self.best_match_encoding(&encode_pattern(p, &self.config))
    }

    pub fn match_encoded(&self, p: &Pattern) -> bool {
        self.best_match(p).is_some()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        write_encodings(&self.config, &self.encodings)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn from_reader<R: BufRead>(reader: R, options: StoreOptions) -> Result<Self> {
        let (config, encodings) = read_encodings(reader)?;
        EncodingStore::new(config, encodings, options)
    }

    pub fn load(path: impl AsRef<Path>, options: StoreOptions) -> Result<Self> {
        let (config, encodings) = load_encodings(path)?;
        EncodingStore::new(config, encodings, options)
    }
}

/// Blocks submissions by bitmap similarity, sums frequencies per block, keeps
/// the highest-frequency member as the block's bitmap, then keeps the most
/// frequent blocks until `coverage` of the total frequency is reached.
pub fn aggregate(
    submissions: &[(BloomEncoding, String)],
    config: &BloomConfig,
    coverage: f64,
    options: StoreOptions,
) -> Result<EncodingStore> {
    config.validate()?;
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::Config(format!("coverage must be in (0, 1], got {coverage}")));
    }
    let mut offenders: Vec<String> = submissions
        .iter()
        .filter(|(e, _)| e.config != *config)
        .map(|(_, client)| client.clone())
        .collect();
    if !offenders.is_empty() {
        offenders.sort();
        offenders.dedup();
        return Err(Error::MixedBloomConfig(offenders));
    }
    if submissions.is_empty() {
        return EncodingStore::empty(*config, options);
    }

    let hasher = MinHasher::new(options.num_permutations, config.seed);
    let sigs = submissions
        .iter()
        .enumerate()
        .map(|(i, (e, _))| Ok((i, bitmap_signature(&hasher, e)?)))
        .collect::<Result<Vec<_>>>()?;
    let blocks = lsh_blocks(&sigs, options.threshold)?;

    // (representative index, summed frequency)
    let mut clusters: Vec<(usize, u64)> = Vec::new();
    for mut block in blocks {
        block.sort_by(|&a, &b| {
            let (ea, eb) = (&submissions[a].0, &submissions[b].0);
            eb.frequency
                .cmp(&ea.frequency)
                .then_with(|| ea.bits.cmp(&eb.bits))
                .then(a.cmp(&b))
        });
        let start = clusters.len();
        for i in block {
            let e = &submissions[i].0;
            let home = clusters[start..].iter_mut().find(|(rep, _)| {
                bitmap_jaccard(&submissions[*rep].0.bits, &e.bits) >= options.threshold
            });
            match home {
                Some((_, freq)) => *freq += e.frequency,
                None => clusters.push((i, e.frequency)),
            }
        }
    }

    clusters.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then_with(|| submissions[a.0].0.bits.cmp(&submissions[b.0].0.bits))
    });
    let total: u64 = clusters.iter().map(|c| c.1).sum();
    let target = coverage * total as f64 - 1e-9 * total as f64;
    let mut cum = 0u64;
    let mut kept = Vec::new();
    for (rep, freq) in clusters {
        if cum as f64 >= target {
            break;
        }
        cum += freq;
        kept.push(submissions[rep].0.clone().with_frequency(freq));
    }
    EncodingStore::new(*config, kept, options)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EncodingHeader {
    format_version: u32,
    bloom: BloomConfig,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EncodingRecord {
    bitmap: String,
    frequency: u64,
}

/// Serializes encodings in the exchange format.
pub fn write_encodings(config: &BloomConfig, encodings: &[BloomEncoding]) -> Vec<u8> {
    let mut w = ChecksumWriter::new();
    w.record(&EncodingHeader {
        format_version: ENCODING_FORMAT_VERSION,
        bloom: *config,
    })
    .expect("header serializes");
    for e in encodings {
        w.record(&EncodingRecord {
            bitmap: e.to_base64(),
            frequency: e.frequency,
        })
        .expect("record serializes");
    }
    w.finish()
}

pub fn read_encodings<R: BufRead>(reader: R) -> Result<(BloomConfig, Vec<BloomEncoding>)> {
    let lines = read_checked(reader)?;
    let Some(((header_line, header_text), records)) = lines.split_first() else {
        return Err(Error::MalformedRecord {
            line: 1,
            message: "missing header".into(),
        });
    };
    let probe: VersionProbe = parse_record(*header_line, header_text)?;
    if probe.format_version != ENCODING_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: probe.format_version,
            expected: ENCODING_FORMAT_VERSION,
        });
    }
    let header: EncodingHeader = parse_record(*header_line, header_text)?;
    let malformed = |line: usize, message: String| Error::MalformedRecord { line, message };
    header
        .bloom
        .validate()
        .map_err(|e| malformed(*header_line, e.to_string()))?;
    let encodings = records
        .iter()
        .map(|(line, text)| {
            let rec: EncodingRecord = parse_record(*line, text)?;
            let bytes = BASE64
                .decode(rec.bitmap.as_bytes())
                .map_err(|e| malformed(*line, format!("bad base64: {e}")))?;
            if rec.frequency == 0 {
                return Err(malformed(*line, "frequency must be positive".into()));
            }
            let e = BloomEncoding::from_bytes(header.bloom, &bytes, rec.frequency)
                .map_err(|e| malformed(*line, e.to_string()))?;
            if e.set_bits == 0 {
                return Err(malformed(*line, "bitmap has no set bits".into()));
            }
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header.bloom, encodings))
}

pub fn load_encodings(path: impl AsRef<Path>) -> Result<(BloomConfig, Vec<BloomEncoding>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_encodings(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::tokenize_line;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pat(s: &str) -> Pattern {
        tokenize_line(s).unwrap()
    }

    fn cfg(seed: u64) -> BloomConfig {
        BloomConfig {
            seed,
            ..BloomConfig::default()
        }
    }

    /// Two token sequences whose 2-shingle sets have Jaccard exactly 0.5:
    /// 9 shared leading tokens give 8 shared shingles, 4-token tails give 4
    /// private shingles each.
    fn half_overlap(rng: &mut ChaCha8Rng) -> (Pattern, Pattern) {
        let mut word = || -> String { (0..8).map(|_| rng.gen_range(b'g'..=b'z') as char).collect() };
        let shared: Vec<String> = (0..9).map(|_| word()).collect();
        let tail_a: Vec<String> = (0..4).map(|_| word()).collect();
        let tail_b: Vec<String> = (0..4).map(|_| word()).collect();
        let a = [shared.clone(), tail_a].concat().join(" ");
        let b = [shared, tail_b].concat().join(" ");
        (pat(&a), pat(&b))
    }

    #[test]
    fn encoding_is_deterministic() {
        let p = pat("Executor lost on host node");
        assert_eq!(encode_pattern(&p, &cfg(3)), encode_pattern(&p, &cfg(3)));
        assert_ne!(encode_pattern(&p, &cfg(3)), encode_pattern(&p, &cfg(4)));
    }

    #[test]
    fn single_shingle_sets_at_most_k_bits() {
        let e = encode_pattern(&pat("Shutting down"), &cfg(0));
        assert!((1..=2).contains(&e.set_bits()));
        assert_eq!(e.set_bits() as usize, e.positions().count());
    }

    #[test]
    fn self_similarity_is_one() {
        let e = encode_pattern(&pat("a b c d e"), &cfg(0));
        assert_eq!(encoding_jaccard(&e, &e).unwrap(), 1.0);
    }

    #[test]
    fn half_overlap_stays_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..200 {
            let (a, b) = half_overlap(&mut rng);
            assert_eq!(shingle(&a, 2).jaccard(&shingle(&b, 2)), 0.5);
            let j = encoding_jaccard(&encode_pattern(&a, &cfg(seed)), &encode_pattern(&b, &cfg(seed)))
                .unwrap();
            assert!((j - 0.5).abs() <= 0.15, "seed {seed}: {j}");
        }
    }

    #[test]
    fn disjoint_patterns_barely_collide() {
        let a = encode_pattern(&pat("alpha beta gamma delta epsilon zeta"), &cfg(0));
        let b = encode_pattern(&pat("one two three four five six seven"), &cfg(0));
        assert!(encoding_jaccard(&a, &b).unwrap() <= 0.1);
    }

    #[test]
    fn mismatched_configs_refuse_to_compare() {
        let p = pat("x y z");
        let small = BloomConfig { m: 512, ..cfg(0) };
        assert!(encoding_jaccard(&encode_pattern(&p, &cfg(0)), &encode_pattern(&p, &small)).is_err());
    }

    #[test]
    fn bytes_round_trip_msb_first() {
        let mut bits = vec![0u64; 16];
        bits[0] = 1; // bit 0
        bits[0] |= 1 << 9; // bit 9
        let e = BloomEncoding::from_bits(cfg(0), bits, 1);
        let bytes = e.to_bytes();
        assert_eq!(bytes[0], 0x80);
        assert_eq!(bytes[1], 0x40);
        assert_eq!(BloomEncoding::from_bytes(cfg(0), &bytes, 1).unwrap(), e);
    }

    #[test]
    fn config_validation() {
        assert!(BloomConfig { m: 1000, ..cfg(0) }.validate().is_err());
        assert!(BloomConfig { m: 32, ..cfg(0) }.validate().is_err());
        assert!(BloomConfig { k: 0, ..cfg(0) }.validate().is_err());
        cfg(0).validate().unwrap();
    }

    fn submit(text: &str, freq: u64, client: &str) -> (BloomEncoding, String) {
        (
            encode_pattern(&pat(text), &cfg(0)).with_frequency(freq),
            client.to_owned(),
        )
    }

    #[test]
    fn identical_submissions_merge() {
        let subs = [
            submit("Block replicated to node", 10, "a"),
            submit("Block replicated to node", 5, "b"),
        ];
        let store = aggregate(&subs, &cfg(0), 1.0, StoreOptions::default()).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.encodings()[0].frequency(), 15);
    }

    #[test]
    fn empty_submissions_give_empty_store() {
        let store = aggregate(&[], &cfg(0), 1.0, StoreOptions::default()).unwrap();
        assert!(store.is_empty());
        assert!(!store.match_encoded(&pat("anything at all")));
    }

    #[test]
    fn disjoint_submissions_stay_apart() {
        let subs = [
            submit("alpha beta gamma delta", 3, "a"),
            submit("one two three four", 2, "b"),
        ];
        let store = aggregate(&subs, &cfg(0), 1.0, StoreOptions::default()).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.encodings()[0].frequency(), 3);
    }

    #[test]
    fn mixed_configs_name_the_clients() {
        let other = BloomConfig { k: 3, ..cfg(0) };
        let subs = [
            submit("a b c", 1, "good"),
            (encode_pattern(&pat("a b c"), &other), "bad2".to_owned()),
            (encode_pattern(&pat("d e f"), &other), "bad1".to_owned()),
        ];
        match aggregate(&subs, &cfg(0), 1.0, StoreOptions::default()) {
            Err(Error::MixedBloomConfig(ids)) => assert_eq!(ids, ["bad1", "bad2"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coverage_drops_rare_blocks() {
        let subs = [
            submit("alpha beta gamma delta", 90, "a"),
            submit("one two three four", 9, "a"),
            submit("red green blue yellow", 1, "b"),
        ];
        let store = aggregate(&subs, &cfg(0), 0.95, StoreOptions::default()).unwrap();
        assert_eq!(store.len(), 2);
        assert!(!store.match_encoded(&pat("red green blue yellow")));
    }

    #[test]
    fn stored_patterns_match_and_novel_ones_do_not() {
        let subs = [
            submit("Registered executor on host", 4, "a"),
            submit("Removed broadcast piece from memory", 2, "b"),
        ];
        let store = aggregate(&subs, &cfg(0), 1.0, StoreOptions::default()).unwrap();
        assert!(store.match_encoded(&pat("Registered executor on host")));
        assert!(!store.match_encoded(&pat("Lost task in stage because of fetch failure")));
    }

    #[test]
    fn near_duplicates_match_at_high_threshold() {
        // 40 tokens, the last one changed: shingle Jaccard 38/40
        let words: Vec<String> = (0..40).map(|i| format!("tok{}", (b'a' + (i % 26) as u8) as char)
            .repeat(1 + i / 26)).collect();
        let base = words.join(" ");
        let mut changed = words.clone();
        *changed.last_mut().unwrap() = "different".into();
        let (p, q) = (pat(&base), pat(&changed.join(" ")));
        let exact = shingle(&p, 2).jaccard(&shingle(&q, 2));
        assert!((exact - 0.95).abs() < 1e-12, "{exact}");
        let mut hits = 0;
        for seed in 0..100u64 {
            let store = aggregate(
                &[(encode_pattern(&p, &cfg(seed)), "a".into())],
                &cfg(seed),
                1.0,
                StoreOptions::default(),
            )
            .unwrap();
            hits += store.match_encoded(&q) as u32;
        }
        assert!(hits >= 95, "{hits}/100");
    }

    #[test]
    fn file_round_trip_and_errors() {
        let subs = [
            submit("alpha beta gamma delta", 3, "a"),
            submit("one two three four", 2, "b"),
        ];
        let store = aggregate(&subs, &cfg(7), 1.0, StoreOptions::default()).unwrap_err();
        assert!(matches!(store, Error::MixedBloomConfig(_)));

        let store = aggregate(&subs, &cfg(0), 1.0, StoreOptions::default()).unwrap();
        let bytes = store.to_bytes();
        let back = EncodingStore::from_reader(&bytes[..], StoreOptions::default()).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.to_bytes(), bytes);

        let mut tampered = bytes.clone();
        let pos = tampered.iter().position(|&b| b == b'"').unwrap();
        tampered[pos + 1] ^= 0x20;
        assert!(EncodingStore::from_reader(&tampered[..], StoreOptions::default()).is_err());
    }

    #[test]
    fn aggregation_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vocab: Vec<String> = (0..40).map(|i| format!("word{}", (b'a' + i as u8 % 26) as char).repeat(1 + i / 26)).collect();
        let subs: Vec<(BloomEncoding, String)> = (0..300)
            .map(|i| {
                let len = rng.gen_range(3..12);
                let text: Vec<&str> = (0..len).map(|_| vocab[rng.gen_range(0..vocab.len())].as_str()).collect();
                let e = encode_pattern(&pat(&text.join(" ")), &cfg(0)).with_frequency(rng.gen_range(1..20));
                (e, format!("client{}", i % 4))
            })
            .collect();
        let first = aggregate(&subs, &cfg(0), 1.0, StoreOptions::default()).unwrap();
        let again: Vec<(BloomEncoding, String)> = first
            .encodings()
            .iter()
            .map(|e| (e.clone(), "server".to_owned()))
            .collect();
        let second = aggregate(&again, &cfg(0), 1.0, StoreOptions::default()).unwrap();
        assert_eq!(second, first);
    }
}
