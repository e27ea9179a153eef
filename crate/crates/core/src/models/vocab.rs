use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::models::Tokenizer;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token to dense id map. Ids 0 and 1 are padding and unknown.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    min_frequency: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    min_frequency: usize,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_tokens(r.tokens, r.min_frequency)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            tokens: v.tokens,
            min_frequency: v.min_frequency,
        }
    }
}

impl Vocabulary {
    /// `tokens` must start with the two reserved entries.
    pub(crate) fn from_tokens(tokens: Vec<String>, min_frequency: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            tokens,
            index,
            min_frequency,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn min_frequency(&self) -> usize {
        self.min_frequency
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Builds a vocabulary from the training corpus. Tokens seen at least
/// `min_frequency` times get ids in order of descending frequency, then
/// lexicographically.
pub fn build_vocab(train: &Corpus, min_frequency: usize, tokenizer: &Tokenizer) -> Vocabulary {
    let mut freq: HashMap<String, usize> = HashMap::new();
    for inst in train {
        for tok in tokenizer.tokenize(&inst.text) {
            *freq.entry(tok).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = freq
        .into_iter()
        .filter(|(t, n)| *n >= min_frequency.max(1) && t != PAD_TOKEN && t != UNK_TOKEN)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    tokens.extend(kept.into_iter().map(|(t, _)| t));
    Vocabulary::from_tokens(tokens, min_frequency)
}

/// Token ids without padding, truncated to `max_seq_len`.
pub fn encode_unpadded(text: &str, vocab: &Vocabulary, max_seq_len: usize, tokenizer: &Tokenizer) -> Vec<u32> {
    tokenizer
        .tokenize(text)
        .iter()
        .take(max_seq_len)
        .map(|t| vocab.id(t))
        .collect()
}

/// Token ids right-padded with [`PAD_ID`] to exactly `max_seq_len`.
pub fn encode(text: &str, vocab: &Vocabulary, max_seq_len: usize, tokenizer: &Tokenizer) -> Vec<u32> {
    let mut ids = encode_unpadded(text, vocab, max_seq_len, tokenizer);
    ids.resize(max_seq_len, PAD_ID);
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CitationInstance, LabelScheme};

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus::new(
            "v",
            LabelScheme::intent(),
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| CitationInstance::new(i.to_string(), *t, 0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn small_vocab() {
        let tk = Tokenizer::default();
        let v = build_vocab(&corpus(&["a b", "a c"]), 1, &tk);
        assert_eq!(v.len(), 5);
        assert_eq!(v.tokens(), ["<pad>", "<unk>", "a", "b", "c"]);
        let v2 = build_vocab(&corpus(&["a b", "a c"]), 2, &tk);
        assert_eq!(v2.tokens(), ["<pad>", "<unk>", "a"]);
    }

    #[test]
    fn encoding_pads_and_truncates() {
        let tk = Tokenizer::default();
        let v = build_vocab(&corpus(&["a b", "a c"]), 1, &tk);
        assert_eq!(encode("a b", &v, 4, &tk), vec![v.id("a"), v.id("b"), 0, 0]);
        assert_eq!(encode("zz yy", &v, 2, &tk), vec![UNK_ID, UNK_ID]);
        let long: String = (0..300).map(|i| if i % 2 == 0 { "a " } else { "b " }).collect();
        let ids = encode(&long, &v, 256, &tk);
        assert_eq!(ids.len(), 256);
        assert_eq!(&ids[..2], &[v.id("a"), v.id("b")]);
    }

    #[test]
    fn serde_round_trip() {
        let tk = Tokenizer::default();
        let v = build_vocab(&corpus(&["x y z", "x"]), 1, &tk);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("x"), 2);
    }
}
