//! Token-level shingles, MinHash signatures and a banded LSH index.
//!
//! Each permutation is an affine map `(a * h + b) mod (2^61 - 1)` over a
//! single 64-bit base hash of the shingle, with `a`, `b` drawn from a seeded
//! ChaCha stream. Signatures built from different seeds or lengths refuse to
//! compare.

use std::collections::{BTreeSet, HashMap};
use std::hash::Hash;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::error::{Error, Result};
use crate::tokenizer::{Pattern, Token};

const MERSENNE_61: u64 = (1 << 61) - 1;

/// Set of token n-grams. Patterns shorter than `n` yield a single shingle
/// covering the whole pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShingleSet {
    shingles: BTreeSet<String>,
    n: usize,
}

impl ShingleSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.shingles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shingles.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.shingles.iter().map(String::as_str)
    }

    pub fn contains(&self, shingle: &str) -> bool {
        self.shingles.contains(shingle)
    }

    /// Exact Jaccard similarity of two shingle sets.
    pub fn jaccard(&self, other: &ShingleSet) -> f64 {
        let inter = self.shingles.intersection(&other.shingles).count();
        let union = self.shingles.len() + other.shingles.len() - inter;
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

impl FromIterator<String> for ShingleSet {
    /// Collects ready-made shingles. `n` is recorded as 0 (unknown width).
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        ShingleSet {
            shingles: iter.into_iter().collect(),
            n: 0,
        }
    }
}

/// Sliding-window n-grams over rendered tokens.
pub fn shingle(pattern: &Pattern, n: usize) -> ShingleSet {
    shingle_tokens(pattern.tokens(), n)
}

pub fn shingle_tokens(tokens: &[Token], n: usize) -> ShingleSet {
    assert!(n >= 1, "shingle width must be at least 1");
    let join = |window: &[Token]| {
        window
            .iter()
            .map(Token::as_str)
            .collect::<Vec<_>>()
            .join(" ")
    };
    let shingles = if tokens.len() < n {
        if tokens.is_empty() {
            BTreeSet::new()
        } else {
            BTreeSet::from([join(tokens)])
        }
    } else {
        tokens.windows(n).map(join).collect()
    };
    ShingleSet { shingles, n }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashSignature {
    values: Vec<u64>,
    seed: u64,
}

impl MinHashSignature {
    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_compatible(&self, other: &MinHashSignature) -> Result<()> {
        if self.seed != other.seed || self.values.len() != other.values.len() {
            return Err(Error::Usage(format!(
                "incompatible signatures: ({} values, seed {}) vs ({} values, seed {})",
                self.values.len(),
                self.seed,
                other.values.len(),
                other.seed
            )));
        }
        Ok(())
    }
}

/// A seeded family of `num_permutations` hash functions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHasher {
    seed: u64,
    coeffs: Vec<(u64, u64)>,
}

impl MinHasher {
    pub fn new(num_permutations: usize, seed: u64) -> Self {
        assert!(num_permutations >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..num_permutations)
            .map(|_| (rng.gen_range(1..MERSENNE_61), rng.gen_range(0..MERSENNE_61)))
            .collect();
        MinHasher { seed, coeffs }
    }

    pub fn num_permutations(&self) -> usize {
        self.coeffs.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn base_hash(&self, item: &[u8]) -> u64 {
        xxh3_64_with_seed(item, self.seed)
    }

    /// Signature over pre-hashed items.
    pub fn signature_from_hashes<I>(&self, hashes: I) -> Result<MinHashSignature>
    where
        I: IntoIterator<Item = u64>,
    {
        let mut values = vec![u64::MAX; self.coeffs.len()];
        let mut any = false;
        for h in hashes {
            any = true;
            let x = (h % MERSENNE_61) as u128;
            for (slot, &(a, b)) in values.iter_mut().zip(&self.coeffs) {
                let v = ((a as u128 * x + b as u128) % MERSENNE_61 as u128) as u64;
                if v < *slot {
                    *slot = v;
                }
            }
        }
        if !any {
            return Err(Error::EmptyShingleSet);
        }
        Ok(MinHashSignature {
            values,
            seed: self.seed,
        })
    }

    pub fn signature(&self, shingles: &ShingleSet) -> Result<MinHashSignature> {
        self.signature_from_hashes(shingles.iter().map(|s| self.base_hash(s.as_bytes())))
    }

    pub fn signature_of(&self, pattern: &Pattern, n: usize) -> MinHashSignature {
        self.signature(&shingle(pattern, n))
            .expect("patterns are nonempty so their shingle sets are too")
    }
}

pub fn minhash_signature(
    shingles: &ShingleSet,
    num_permutations: usize,
    seed: u64,
) -> Result<MinHashSignature> {
    MinHasher::new(num_permutations, seed).signature(shingles)
}

/// Fraction of agreeing signature positions.
pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64> {
    a.check_compatible(b)?;
    let agree = a
        .values
        .iter()
        .zip(&b.values)
        .filter(|(x, y)| x == y)
        .count();
    Ok(agree as f64 / a.values.len() as f64)
}

/// Picks `(bands, rows)` with `bands * rows == num_permutations` whose S-curve
/// inflection `(1/b)^(1/r)` lies closest to `threshold`.
pub fn band_layout(num_permutations: usize, threshold: f64) -> (usize, usize) {
    (1..=num_permutations)
        .filter(|b| num_permutations.is_multiple_of(*b))
        .map(|b| {
            let r = num_permutations / b;
            let inflection = (1.0 / b as f64).powf(1.0 / r as f64);
            (b, r, (inflection - threshold).abs())
        })
        .min_by(|x, y| x.2.total_cmp(&y.2))
        .map(|(b, r, _)| (b, r))
        .expect("1 divides everything")
}

/// Probability that a pair at Jaccard `j` shares at least one band.
pub fn candidate_probability(j: f64, bands: usize, rows: usize) -> f64 {
    1.0 - (1.0 - j.powi(rows as i32)).powi(bands as i32)
}

fn band_hashes(sig: &MinHashSignature, rows: usize) -> impl Iterator<Item = u64> + '_ {
    sig.values.chunks(rows).map(move |band| {
        let mut bytes = Vec::with_capacity(band.len() * 8);
        for v in band {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        xxh3_64_with_seed(&bytes, sig.seed)
    })
}

/// Banded MinHash index mapping keys to buckets.
#[derive(Debug, Clone)]
pub struct LshIndex<K> {
    bands: usize,
    rows: usize,
    threshold: f64,
    seed: u64,
    buckets: Vec<HashMap<u64, Vec<K>>>,
    keys: HashMap<K, Vec<u64>>,
}

impl<K: Clone + Eq + Hash + Ord> LshIndex<K> {
    pub fn new(num_permutations: usize, threshold: f64, seed: u64) -> Self {
        let (bands, rows) = band_layout(num_permutations, threshold);
        LshIndex {
            bands,
            rows,
            threshold,
            seed,
            buckets: vec![HashMap::new(); bands],
            keys: HashMap::new(),
        }
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    fn check(&self, sig: &MinHashSignature) -> Result<()> {
        if sig.seed != self.seed || sig.values.len() != self.bands * self.rows {
            return Err(Error::Usage(format!(
                "signature ({} values, seed {}) does not fit index ({} values, seed {})",
                sig.values.len(),
                sig.seed,
                self.bands * self.rows,
                self.seed
            )));
        }
        Ok(())
    }

    /// Adds `key`. Re-inserting an existing key replaces its old buckets.
    pub fn insert(&mut self, key: K, sig: &MinHashSignature) -> Result<()> {
        self.check(sig)?;
        if let Some(old) = self.keys.remove(&key) {
            log::warn!("LSH key inserted twice; replacing earlier signature");
            for (band, h) in old.into_iter().enumerate() {
                if let Some(members) = self.buckets[band].get_mut(&h) {
                    members.retain(|k| k != &key);
                    if members.is_empty() {
                        self.buckets[band].remove(&h);
                    }
                }
            }
        }
        let hashes: Vec<u64> = band_hashes(sig, self.rows).collect();
        for (band, &h) in hashes.iter().enumerate() {
            self.buckets[band].entry(h).or_default().push(key.clone());
        }
        self.keys.insert(key, hashes);
        Ok(())
    }

    /// Keys sharing at least one band bucket with `sig`. May contain false
    /// positives.
    pub fn query(&self, sig: &MinHashSignature) -> Result<BTreeSet<K>> {
        self.check(sig)?;
        let mut out = BTreeSet::new();
        for (band, h) in band_hashes(sig, self.rows).enumerate() {
            if let Some(members) = self.buckets[band].get(&h) {
                out.extend(members.iter().cloned());
            }
        }
        Ok(out)
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Partitions keys into connected components of the "shares a band bucket"
/// graph. Blocks come out sorted by their smallest key, members sorted.
pub fn lsh_blocks<K: Ord + Clone>(
    items: &[(K, MinHashSignature)],
    threshold: f64,
) -> Result<Vec<Vec<K>>> {
    let Some((_, first)) = items.first() else {
        return Ok(Vec::new());
    };
    for (_, sig) in items {
        first.check_compatible(sig)?;
    }
    let (_, rows) = band_layout(first.len(), threshold);

    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[a].0.cmp(&items[b].0));

    let mut uf = UnionFind::new(items.len());
    let mut seen: HashMap<(usize, u64), usize> = HashMap::new();
    for &i in &order {
        for (band, h) in band_hashes(&items[i].1, rows).enumerate() {
            match seen.get(&(band, h)) {
                Some(&j) => uf.union(i, j),
                None => {
                    seen.insert((band, h), i);
                }
            }
        }
    }

    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for &i in &order {
        let root = uf.find(i);
        groups.entry(root).or_default().push(i);
    }
    let mut blocks: Vec<Vec<K>> = groups
        .into_values()
        .map(|members| members.into_iter().map(|i| items[i].0.clone()).collect())
        .collect();
    blocks.sort();
    Ok(blocks)
}
