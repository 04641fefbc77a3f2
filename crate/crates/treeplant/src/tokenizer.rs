//! Deterministic byte-level BPE with exact word-to-subword alignment.
//!
//! Merges never cross a word boundary, so every word owns a contiguous span
//! of subword positions and attention mass can be aggregated per word
//! exactly. IDs `0..=255` are raw bytes, `256`/`257` are the BOS/EOS
//! specials, and merged tokens follow in learning order.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::treebank::{Sentence, BOS_WORD, EOS_WORD};

pub const BYTE_VOCAB: usize = 256;
pub const NUM_SPECIALS: usize = 2;
pub const BOS_ID: u32 = 256;
pub const EOS_ID: u32 = 257;

/// A trained BPE vocabulary: the ordered merge list fully determines the
/// token set and the encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    merges: Vec<(u32, u32)>,
    /// Byte string of every token id (specials hold their marker text).
    tokens: Vec<Vec<u8>>,
    /// Merge pair -> rank (position in the merge list).
    ranks: HashMap<(u32, u32), u32>,
}

/// Inclusive subword span of each word in an encoded sentence. Spans are
/// contiguous, ordered, and tile the whole id sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordAlignment {
    pub spans: Vec<(usize, usize)>,
}

impl WordAlignment {
    pub fn words(&self) -> usize {
        self.spans.len()
    }

    pub fn subwords(&self) -> usize {
        self.spans.last().map_or(0, |&(_, end)| end + 1)
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    bos_id: u32,
    eos_id: u32,
    merges: Vec<(u32, u32)>,
}

impl Vocabulary {
    fn from_merges(merges: Vec<(u32, u32)>) -> Result<Self> {
        let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        tokens.push(BOS_WORD.as_bytes().to_vec());
        tokens.push(EOS_WORD.as_bytes().to_vec());
        let mut ranks = HashMap::new();
        for (rank, &(a, b)) in merges.iter().enumerate() {
            let next = tokens.len() as u32;
            if a >= next || b >= next || a == BOS_ID || b == BOS_ID || a == EOS_ID || b == EOS_ID {
                return Err(Error::Config(format!(
                    "merge {rank} references invalid token ids ({a}, {b})"
                )));
            }
            let mut bytes = tokens[a as usize].clone();
            bytes.extend_from_slice(&tokens[b as usize]);
            tokens.push(bytes);
            ranks.insert((a, b), rank as u32);
        }
        Ok(Self { merges, tokens, ranks })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn token_bytes(&self, id: u32) -> &[u8] {
        &self.tokens[id as usize]
    }

    /// Encodes one word (never a special marker) to subword ids by greedy
    /// lowest-rank merging of its byte sequence.
    pub fn encode_word(&self, word: &str) -> Vec<u32> {
        let mut symbols: Vec<u32> = word.bytes().map(u32::from).collect();
        loop {
            let mut best: Option<(u32, usize)> = None;
            for i in 0..symbols.len().saturating_sub(1) {
                if let Some(&rank) = self.ranks.get(&(symbols[i], symbols[i + 1])) {
                    if best.map_or(true, |(r, _)| rank < r) {
                        best = Some((rank, i));
                    }
                }
            }
            let Some((rank, _)) = best else { break };
            let (a, b) = self.merges[rank as usize];
            let merged = (BYTE_VOCAB + NUM_SPECIALS) as u32 + rank;
            // Replace every occurrence of the chosen pair, left to right.
            let mut out = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == a && symbols[i + 1] == b {
                    out.push(merged);
                    i += 2;
                } else {
                    out.push(symbols[i]);
                    i += 1;
                }
            }
            symbols = out;
        }
        symbols
    }

    /// Recovers the words of an encoded sentence using its alignment.
    pub fn decode_words(&self, ids: &[u32], align: &WordAlignment) -> Result<Vec<String>> {
        if align.subwords() != ids.len() {
            return Err(Error::Shape(format!(
                "alignment covers {} subwords but sequence has {}",
                align.subwords(),
                ids.len()
            )));
        }
        let mut words = Vec::with_capacity(align.words());
        for &(start, end) in &align.spans {
            let mut bytes = Vec::new();
            for &id in &ids[start..=end] {
                if id == BOS_ID {
                    bytes.extend_from_slice(BOS_WORD.as_bytes());
                } else if id == EOS_ID {
                    bytes.extend_from_slice(EOS_WORD.as_bytes());
                } else {
                    bytes.extend_from_slice(self.token_bytes(id));
                }
            }
            words.push(String::from_utf8(bytes).map_err(|e| {
                Error::Data(format!("decoded word is not valid UTF-8: {e}"))
            })?);
        }
        Ok(words)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = VocabFile {
            version: 1,
            bos_id: BOS_ID,
            eos_id: EOS_ID,
            merges: self.merges.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: VocabFile = serde_json::from_str(text)?;
        if file.version != 1 || file.bos_id != BOS_ID || file.eos_id != EOS_ID {
            return Err(Error::Config("unsupported vocabulary file".into()));
        }
        Self::from_merges(file.merges)
    }
}

/// Learns byte-level BPE merges greedily by pair frequency within words,
/// ties broken by lexicographic order of the pair's byte strings. Special
/// marker words contribute nothing. `vocab_size` counts bytes + specials +
/// merges.
pub fn train_vocab(corpus: &[Sentence], vocab_size: usize) -> Result<Vocabulary> {
    let floor = BYTE_VOCAB + NUM_SPECIALS;
    if vocab_size < floor {
        return Err(Error::Config(format!(
            "vocab_size {vocab_size} below byte alphabet + specials ({floor})"
        )));
    }
    let mut word_freq: HashMap<&str, u64> = HashMap::new();
    for s in corpus {
        for w in &s.words {
            if w != BOS_WORD && w != EOS_WORD {
                *word_freq.entry(w.as_str()).or_insert(0) += 1;
            }
        }
    }
    if word_freq.is_empty() {
        return Err(Error::Config("empty corpus".into()));
    }

    // Working symbol sequences per distinct word, weighted by frequency.
    let mut entries: Vec<(Vec<u32>, u64)> = {
        let mut sorted: Vec<(&str, u64)> = word_freq.into_iter().collect();
        sorted.sort_unstable_by_key(|&(w, _)| w);
        sorted
            .into_iter()
            .map(|(w, f)| (w.bytes().map(u32::from).collect(), f))
            .collect()
    };

    let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    tokens.push(BOS_WORD.as_bytes().to_vec());
    tokens.push(EOS_WORD.as_bytes().to_vec());
    let mut merges: Vec<(u32, u32)> = Vec::new();

    while tokens.len() < vocab_size {
        let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
        for (symbols, freq) in &entries {
            for pair in symbols.windows(2) {
                *pair_counts.entry((pair[0], pair[1])).or_insert(0) += freq;
            }
        }
        let Some(best) = pair_counts
            .iter()
            .max_by(|(pa, ca), (pb, cb)| {
                ca.cmp(cb).then_with(|| {
                    // Higher comparison rank = preferred, so invert the
                    // lexicographic order: smallest pair wins ties.
                    let ka = (&tokens[pa.0 as usize], &tokens[pa.1 as usize]);
                    let kb = (&tokens[pb.0 as usize], &tokens[pb.1 as usize]);
                    kb.cmp(&ka)
                })
            })
            .map(|(&pair, _)| pair)
        else {
            break; // every word is a single token already
        };
        let new_id = tokens.len() as u32;
        let mut bytes = tokens[best.0 as usize].clone();
        bytes.extend_from_slice(&tokens[best.1 as usize]);
        tokens.push(bytes);
        merges.push(best);
        for (symbols, _) in &mut entries {
            let mut out = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == best.0 && symbols[i + 1] == best.1 {
                    out.push(new_id);
                    i += 2;
                } else {
                    out.push(symbols[i]);
                    i += 1;
                }
            }
            *symbols = out;
        }
    }
    Vocabulary::from_merges(merges)
}

/// Encodes an augmented sentence word by word, recording each word's
/// inclusive subword span. BOS/EOS words map to their dedicated ids.
pub fn encode_with_alignment(
    sentence: &Sentence,
    vocab: &Vocabulary,
) -> (Vec<u32>, WordAlignment) {
    let mut ids = Vec::new();
    let mut spans = Vec::with_capacity(sentence.len());
    for word in &sentence.words {
        let start = ids.len();
        match word.as_str() {
            BOS_WORD => ids.push(BOS_ID),
            EOS_WORD => ids.push(EOS_ID),
            w => ids.extend(vocab.encode_word(w)),
        }
        spans.push((start, ids.len() - 1));
    }
    (ids, WordAlignment { spans })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sent(words: &[&str]) -> Sentence {
        Sentence::new(words.iter().map(|w| w.to_string()).collect()).unwrap()
    }

    #[test]
    fn first_merge_on_dominant_pair() {
        let corpus = vec![sent(&["aa", "aa", "aa"])];
        let vocab = train_vocab(&corpus, BYTE_VOCAB + NUM_SPECIALS + 1).unwrap();
        assert_eq!(vocab.merges(), &[(97, 97)]);
        assert_eq!(vocab.encode_word("aa"), vec![258]);
    }

    #[test]
    fn floor_vocab_means_byte_fallback() {
        let corpus = vec![sent(&["hello", "world"])];
        let vocab = train_vocab(&corpus, BYTE_VOCAB + NUM_SPECIALS).unwrap();
        assert!(vocab.merges().is_empty());
        assert_eq!(vocab.encode_word("hi"), vec![104, 105]);
        assert!(train_vocab(&corpus, 10).is_err());
        assert!(train_vocab(&[], 300).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = vec![
            sent(&["the", "cat", "sat"]),
            sent(&["the", "cats", "sit"]),
            sent(&["a", "cat", "naps"]),
        ];
        let a = train_vocab(&corpus, 280).unwrap();
        let b = train_vocab(&corpus, 280).unwrap();
        assert_eq!(a.merges(), b.merges());
    }

    #[test]
    fn specials_and_spans() {
        let corpus = vec![sent(&["hi"])];
        let vocab = train_vocab(&corpus, BYTE_VOCAB + NUM_SPECIALS + 1).unwrap();
        let s = sent(&[BOS_WORD, "hi", EOS_WORD]);
        let (ids, align) = encode_with_alignment(&s, &vocab);
        assert_eq!(ids, vec![BOS_ID, 258, EOS_ID]);
        assert_eq!(align.spans, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn multi_subword_middle_span() {
        // No merges: each word splits to bytes.
        let vocab = train_vocab(&[sent(&["x"])], BYTE_VOCAB + NUM_SPECIALS).unwrap();
        let s = sent(&["a", "dog", "b"]);
        let (ids, align) = encode_with_alignment(&s, &vocab);
        assert_eq!(ids.len(), 5);
        assert_eq!(align.spans, vec![(0, 0), (1, 3), (4, 4)]);
    }

    #[test]
    fn alignment_tiles_sequence() {
        let corpus = vec![sent(&["sentence", "tokens", "sentence", "align"])];
        let vocab = train_vocab(&corpus, 270).unwrap();
        let s = sent(&[BOS_WORD, "sentence", "align", "tokens", EOS_WORD]);
        let (ids, align) = encode_with_alignment(&s, &vocab);
        assert_eq!(align.subwords(), ids.len());
        let mut next = 0usize;
        for &(start, end) in &align.spans {
            assert_eq!(start, next);
            assert!(start <= end);
            next = end + 1;
        }
        assert_eq!(next, ids.len());
    }

    #[test]
    fn vocab_json_round_trip_is_bit_exact() {
        let corpus = vec![sent(&["roundtrip", "tokens", "roundtrip"])];
        let vocab = train_vocab(&corpus, 290).unwrap();
        let json = vocab.to_json().unwrap();
        let back = Vocabulary::from_json(&json).unwrap();
        assert_eq!(back, vocab);
        assert_eq!(back.to_json().unwrap(), json);
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(words in proptest::collection::vec("[a-z]{1,8}", 1..8)) {
            let corpus = vec![Sentence::new(words.clone()).unwrap()];
            let vocab = train_vocab(&corpus, 300).unwrap();
            let mut augmented = vec![BOS_WORD.to_string()];
            augmented.extend(words.clone());
            augmented.push(EOS_WORD.to_string());
            let s = Sentence::new(augmented.clone()).unwrap();
            let (ids, align) = encode_with_alignment(&s, &vocab);
            let decoded = vocab.decode_words(&ids, &align).unwrap();
            prop_assert_eq!(decoded, augmented);
        }

        #[test]
        fn spans_always_tile(words in proptest::collection::vec("[a-z]{1,6}", 1..6)) {
            let vocab = train_vocab(
                &[Sentence::new(words.clone()).unwrap()],
                BYTE_VOCAB + NUM_SPECIALS + 4,
            ).unwrap();
            let s = Sentence::new(words).unwrap();
            let (ids, align) = encode_with_alignment(&s, &vocab);
            let total: usize = align.spans.iter().map(|&(a, b)| b - a + 1).sum();
            prop_assert_eq!(total, ids.len());
        }
    }
}
