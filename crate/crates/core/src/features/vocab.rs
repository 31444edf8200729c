use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FeatureError, SparseVector, TokenSequence};
use crate::Scalar;

/// Joins the two tokens of a bigram entry.
pub const BIGRAM_JOINER: char = '_';

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub entry: String,
    pub index: usize,
    pub df: usize,
    pub order: u8,
}

/// Frozen unigram + bigram vocabulary with contiguous indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<VocabEntry>", into = "Vec<VocabEntry>")]
pub struct Vocabulary {
    entries: Vec<VocabEntry>,
    unigrams: HashMap<String, usize>,
    bigrams: HashMap<String, usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Binary,
    Count,
}

impl std::str::FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "binary" => Ok(Weighting::Binary),
            "count" => Ok(Weighting::Count),
            other => Err(format!("unknown weighting {other:?}")),
        }
    }
}

fn bigram_key(a: &str, b: &str) -> String {
    let mut s = String::with_capacity(a.len() + b.len() + 1);
    s.push_str(a);
    s.push(BIGRAM_JOINER);
    s.push_str(b);
    s
}

impl Vocabulary {
    /// Entries in index order; indices must run 0..n.
    pub fn from_entries(entries: Vec<VocabEntry>) -> Result<Self, FeatureError> {
        let mut unigrams = HashMap::new();
        let mut bigrams = HashMap::new();
        for (pos, e) in entries.iter().enumerate() {
            if e.index != pos {
                return Err(FeatureError::InvalidVocabulary(format!(
                    "entry {:?} has index {} at position {pos}",
                    e.entry, e.index
                )));
            }
            let map = match e.order {
                1 => &mut unigrams,
                2 => &mut bigrams,
                o => return Err(FeatureError::InvalidVocabulary(format!("n-gram order {o}"))),
            };
            if map.insert(e.entry.clone(), pos).is_some() {
                return Err(FeatureError::InvalidVocabulary(format!("duplicate entry {:?}", e.entry)));
            }
        }
        Ok(Vocabulary {
            entries,
            unigrams,
            bigrams,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn unigram(&self, token: &str) -> Option<usize> {
        self.unigrams.get(token).copied()
    }

    pub fn bigram(&self, a: &str, b: &str) -> Option<usize> {
        self.bigrams.get(&bigram_key(a, b)).copied()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), FeatureError> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e).map_err(|e| FeatureError::Io(e.into()))?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, FeatureError> {
        let mut entries = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: VocabEntry = serde_json::from_str(&line)
                .map_err(|e| FeatureError::InvalidVocabulary(format!("line {}: {e}", n + 1)))?;
            entries.push(e);
        }
        Self::from_entries(entries)
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"ngram-vocabulary\n");
        for e in &self.entries {
            h.update(format!("{}\t{}\t{}\n", e.order, e.index, e.entry).as_bytes());
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl TryFrom<Vec<VocabEntry>> for Vocabulary {
    type Error = FeatureError;

    fn try_from(entries: Vec<VocabEntry>) -> Result<Self, FeatureError> {
        Self::from_entries(entries)
    }
}

impl From<Vocabulary> for Vec<VocabEntry> {
    fn from(v: Vocabulary) -> Self {
        v.entries
    }
}

/// Every unigram and adjacent bigram whose document frequency is at least
/// `min_df`, indexed in lexicographic order of `(entry, order)`.
pub fn build_vocabulary(corpus: &[TokenSequence], min_df: usize) -> Vocabulary {
    let min_df = min_df.max(1);
    let mut df: BTreeMap<(String, u8), usize> = BTreeMap::new();
    for doc in corpus {
        let mut seen: BTreeSet<(String, u8)> = BTreeSet::new();
        for t in doc.iter() {
            seen.insert((t.clone(), 1));
        }
        for w in doc.windows(2) {
            seen.insert((bigram_key(&w[0], &w[1]), 2));
        }
        for key in seen {
            *df.entry(key).or_insert(0) += 1;
        }
    }
    let entries = df
        .into_iter()
        .filter(|(_, d)| *d >= min_df)
        .enumerate()
        .map(|(index, ((entry, order), df))| VocabEntry {
            entry,
            index,
            df,
            order,
        })
        .collect();
    Vocabulary::from_entries(entries).expect("lexicographic build is well formed")
}

/// Unigram + bigram vector over `vocab`; unknown n-grams are ignored.
pub fn vectorize_ngrams<F: Scalar>(seq: &TokenSequence, vocab: &Vocabulary, weighting: Weighting) -> SparseVector<F> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for t in seq.iter() {
        if let Some(i) = vocab.unigram(t) {
            *counts.entry(i).or_insert(0) += 1;
        }
    }
    for w in seq.windows(2) {
        if let Some(i) = vocab.bigram(&w[0], &w[1]) {
            *counts.entry(i).or_insert(0) += 1;
        }
    }
    let pairs = counts
        .into_iter()
        .map(|(i, c)| {
            let v = match weighting {
                Weighting::Binary => F::one(),
                Weighting::Count => F::of(c as f64),
            };
            (i, v)
        })
        .collect();
    SparseVector::new(vocab.len(), pairs).expect("BTreeMap keys are sorted and in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq(tokens: &[&str]) -> TokenSequence {
        TokenSequence::new(tokens.iter().copied())
    }

    fn entry(entry: &str, index: usize, order: u8) -> VocabEntry {
        VocabEntry {
            entry: entry.into(),
            index,
            df: 0,
            order,
        }
    }

    #[test]
    fn single_document_vocabulary() {
        let v = build_vocabulary(&[seq(&["a", "b"])], 1);
        let names: BTreeSet<&str> = v.entries().iter().map(|e| e.entry.as_str()).collect();
        assert_eq!(names, ["a", "b", "a_b"].into_iter().collect());
        assert_eq!(v.unigram("a"), Some(0));
        assert_eq!(v.bigram("a", "b"), Some(1));
        assert_eq!(v.unigram("b"), Some(2));
    }

    #[test]
    fn min_df_above_corpus_size_is_empty() {
        let v = build_vocabulary(&[seq(&["a", "b"]), seq(&["a"])], 3);
        assert!(v.is_empty());
    }

    #[test]
    fn empty_sequence_vectorizes_to_nothing() {
        let v = build_vocabulary(&[seq(&["a", "b"])], 1);
        let x: SparseVector<f64> = vectorize_ngrams(&seq(&[]), &v, Weighting::Binary);
        assert!(x.is_empty());
        assert_eq!(x.dim(), 3);
    }

    #[test]
    fn hand_built_vocabulary_vector() {
        let v = Vocabulary::from_entries(vec![entry("a", 0, 1), entry("b", 1, 1), entry("a_b", 2, 2)]).unwrap();
        let x: SparseVector<f64> = vectorize_ngrams(&seq(&["a", "b"]), &v, Weighting::Binary);
        assert_eq!(x.iter().collect::<Vec<_>>(), vec![(0, 1.0), (1, 1.0), (2, 1.0)]);
        let x: SparseVector<f32> = vectorize_ngrams(&seq(&["a", "b", "a", "b"]), &v, Weighting::Count);
        assert_eq!(x.iter().collect::<Vec<_>>(), vec![(0, 2.0), (1, 2.0), (2, 2.0)]);
    }

    #[test]
    fn jsonl_round_trip_and_fingerprint() {
        let v = build_vocabulary(&[seq(&["誤報", "です"]), seq(&["誤報"])], 1);
        let mut buf = Vec::new();
        v.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"entry":"です","index":0,"df":1,"order":1}"#));
        let back = Vocabulary::read_jsonl(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.fingerprint(), v.fingerprint());
        let other = build_vocabulary(&[seq(&["誤報"])], 1);
        assert_ne!(other.fingerprint(), v.fingerprint());
    }

    fn random_corpus(rng: &mut ChaCha8Rng) -> Vec<TokenSequence> {
        let words = ["a", "b", "c", "d", "e"];
        (0..rng.random_range(1..15))
            .map(|_| {
                let n = rng.random_range(0..6);
                TokenSequence::new((0..n).map(|_| words[rng.random_range(0..words.len())]))
            })
            .collect()
    }

    #[test]
    fn entries_match_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let corpus = random_corpus(&mut rng);
            let min_df = rng.random_range(1..4);
            let v = build_vocabulary(&corpus, min_df);
            // count documents containing each candidate directly
            let words = ["a", "b", "c", "d", "e"];
            let mut oracle = BTreeSet::new();
            for x in words {
                let df = corpus.iter().filter(|d| d.iter().any(|t| t == x)).count();
                if df >= min_df {
                    oracle.insert((x.to_string(), 1u8));
                }
                for y in words {
                    let df = corpus
                        .iter()
                        .filter(|d| d.windows(2).any(|w| w[0] == x && w[1] == y))
                        .count();
                    if df >= min_df {
                        oracle.insert((format!("{x}_{y}"), 2u8));
                    }
                }
            }
            let got: BTreeSet<(String, u8)> = v.entries().iter().map(|e| (e.entry.clone(), e.order)).collect();
            assert_eq!(got, oracle);
        }
    }

    #[test]
    fn vectors_match_dense_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let corpus = random_corpus(&mut rng);
            let v = build_vocabulary(&corpus, 1);
            let probe = &random_corpus(&mut rng)[0];
            for weighting in [Weighting::Binary, Weighting::Count] {
                let mut dense = vec![0.0f64; v.len()];
                for e in v.entries() {
                    let hits = if e.order == 1 {
                        probe.iter().filter(|t| **t == e.entry).count()
                    } else {
                        probe.windows(2).filter(|w| format!("{}_{}", w[0], w[1]) == e.entry).count()
                    };
                    dense[e.index] = match (weighting, hits) {
                        (_, 0) => 0.0,
                        (Weighting::Binary, _) => 1.0,
                        (Weighting::Count, h) => h as f64,
                    };
                }
                let x: SparseVector<f64> = vectorize_ngrams(probe, &v, weighting);
                assert_eq!(x.to_dense(), dense);
            }
        }
    }

    proptest! {
        #[test]
        fn vocabulary_ignores_document_order(docs in proptest::collection::vec(proptest::collection::vec("[abc]", 0..5), 1..8)) {
            let corpus: Vec<TokenSequence> = docs.iter().map(|d| TokenSequence::new(d.iter().cloned())).collect();
            let mut reversed = corpus.clone();
            reversed.reverse();
            prop_assert_eq!(build_vocabulary(&corpus, 1), build_vocabulary(&reversed, 1));
        }
    }
}
