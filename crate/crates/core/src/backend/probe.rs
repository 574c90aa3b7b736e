use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::hash::fnv1a64;

pub type TokenId = u32;

/// What prompting needs to know about a backend's vocabulary.
///
/// Implementations must be deterministic: the same text always yields the
/// same ids.
pub trait VocabularyProbe {
    /// Tokenizes running text (instance content, template literals).
    fn tokenize(&self, text: &str) -> Vec<TokenId>;

    /// Token ids of a single label word.
    fn token_ids(&self, word: &str) -> Vec<TokenId> {
        self.tokenize(word)
    }

    fn token_count(&self, word: &str) -> usize {
        self.token_ids(word).len()
    }

    /// Whether every piece of `word` is a known vocabulary entry.
    fn in_vocabulary(&self, word: &str) -> bool;

    fn mask_id(&self) -> TokenId;

    /// Placeholder id written at a soft-slot position. The backend replaces it
    /// with the slot's trainable embedding.
    fn soft_id(&self, slot: usize) -> TokenId;
}

pub const MOCK_MASK_ID: TokenId = 1;
const MOCK_SOFT_BASE: TokenId = 16;
const MOCK_RESERVED: TokenId = 1024;

/// Deterministic stand-in tokenizer.
///
/// Lowercases, splits on whitespace, emits each punctuation character as its
/// own token and cuts alphanumeric runs longer than `max_piece` characters
/// into `##`-prefixed continuation pieces. Ids are hashes of the piece
/// string, so no vocabulary file is needed; an optional closed vocabulary
/// only affects [`VocabularyProbe::in_vocabulary`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockTokenizer {
    pub max_piece: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<BTreeSet<String>>,
}

impl Default for MockTokenizer {
    fn default() -> Self {
        Self { max_piece: 16, vocabulary: None }
    }
}

impl MockTokenizer {
    pub fn with_vocabulary<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.vocabulary = Some(words.into_iter().map(Into::into).collect());
        self
    }

    pub fn pieces(&self, text: &str) -> Vec<String> {
        let lower = text.to_lowercase();
        let mut out = Vec::new();
        for chunk in lower.split_whitespace() {
            let mut run = String::new();
            for ch in chunk.chars() {
                if ch.is_alphanumeric() {
                    run.push(ch);
                } else {
                    self.flush_run(&mut run, &mut out);
                    out.push(String::from(ch));
                }
            }
            self.flush_run(&mut run, &mut out);
        }
        out
    }

    fn flush_run(&self, run: &mut String, out: &mut Vec<String>) {
        if run.is_empty() {
            return;
        }
        let chars: Vec<char> = run.chars().collect();
        let step = self.max_piece.max(1);
        for (i, piece) in chars.chunks(step).enumerate() {
            let mut s = String::new();
            if i > 0 {
                s.push_str("##");
            }
            s.extend(piece.iter());
            out.push(s);
        }
        run.clear();
    }

    pub fn piece_id(piece: &str) -> TokenId {
        let span = u64::from(u32::MAX - MOCK_RESERVED);
        MOCK_RESERVED + (fnv1a64(piece.as_bytes()) % span) as TokenId
    }
}

impl VocabularyProbe for MockTokenizer {
    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        self.pieces(text).iter().map(|p| Self::piece_id(p)).collect()
    }

    fn in_vocabulary(&self, word: &str) -> bool {
        match &self.vocabulary {
            None => true,
            Some(vocab) => self.pieces(word).iter().all(|p| vocab.contains(p)),
        }
    }

    fn mask_id(&self) -> TokenId {
        MOCK_MASK_ID
    }

    fn soft_id(&self, slot: usize) -> TokenId {
        MOCK_SOFT_BASE + (slot as TokenId).min(MOCK_RESERVED - MOCK_SOFT_BASE - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn splits_punctuation_and_lowercases() {
        let t = MockTokenizer::default();
        assert_eq!(t.pieces("Prior work, shows."), vec!["prior", "work", ",", "shows", "."]);
        assert_eq!(t.tokenize("Method"), t.tokenize("method"));
    }

    #[test]
    fn long_words_split_into_pieces() {
        let t = MockTokenizer { max_piece: 4, vocabulary: None };
        assert_eq!(t.pieces("abcdefghij"), vec!["abcd", "##efgh", "##ij"]);
        assert_eq!(t.token_count("abcdefghij"), 3);
    }

    #[test]
    fn reserved_ids_do_not_collide_with_pieces() {
        let t = MockTokenizer::default();
        for w in ["a", "mask", "[mask]", "soft", "x"] {
            for id in t.tokenize(w) {
                assert!(id >= MOCK_RESERVED);
            }
        }
        assert!(t.soft_id(0) < MOCK_RESERVED && t.soft_id(0) != t.mask_id());
    }

    #[test]
    fn closed_vocabulary() {
        let t = MockTokenizer::default().with_vocabulary(["result", "method"]);
        assert!(t.in_vocabulary("Result"));
        assert!(!t.in_vocabulary("approach"));
    }
}
