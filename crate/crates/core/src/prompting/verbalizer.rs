use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::{TokenId, VocabularyProbe};
use crate::data::{Finding, FindingKind, LabelSpace, ValidationReport};
use crate::error::{Error, Result};

/// Maps each label to an ordered list of label words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verbalizer {
    space: LabelSpace,
    /// Indexed by label index.
    words: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbalizerEntry {
    pub label: String,
    pub words: Vec<String>,
}

impl Verbalizer {
    /// Builds without checking injectivity or completeness, so that
    /// [`validate_verbalizer`] can report on it. Entries naming unknown
    /// labels are still rejected.
    pub fn from_entries<I, L, W, S>(space: &LabelSpace, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (L, W)>,
        L: AsRef<str>,
        W: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut words = alloc::vec![Vec::new(); space.len()];
        for (label, ws) in entries {
            let label = space.by_name(label.as_ref()).ok_or_else(|| Error::UnknownLabel(label.as_ref().to_string()))?;
            words[label.index].extend(ws.into_iter().map(Into::into));
        }
        Ok(Self { space: space.clone(), words })
    }

    /// Checked constructor: every label has at least one word and no word is
    /// shared between labels.
    pub fn new<I, L, W, S>(space: &LabelSpace, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (L, W)>,
        L: AsRef<str>,
        W: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let v = Self::from_entries(space, entries)?;
        let report = v.structural_report();
        if let Some(f) = report.errors().next() {
            return Err(Error::InvalidVerbalizer(f.kind.to_string()));
        }
        Ok(v)
    }

    pub fn space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn words(&self, label: usize) -> &[String] {
        self.words.get(label).map_or(&[], Vec::as_slice)
    }

    pub fn entries(&self) -> Vec<VerbalizerEntry> {
        self.space
            .labels()
            .iter()
            .map(|l| VerbalizerEntry { label: l.name.clone(), words: self.words[l.index].clone() })
            .collect()
    }

    pub fn from_entry_list(space: &LabelSpace, entries: &[VerbalizerEntry]) -> Result<Self> {
        Self::new(space, entries.iter().map(|e| (e.label.as_str(), e.words.iter().cloned())))
    }

    fn structural_report(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for label in self.space.labels() {
            if self.words[label.index].is_empty() {
                report.push(Finding::error(FindingKind::MissingVerbalizerEntry(label.name.clone())));
            }
        }
        let mut owners: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for label in self.space.labels() {
            for w in &self.words[label.index] {
                let labels = owners.entry(w.as_str()).or_default();
                if !labels.contains(&label.name) {
                    labels.push(label.name.clone());
                }
            }
        }
        for (word, labels) in owners {
            if labels.len() > 1 {
                report.push(Finding::error(FindingKind::WordCollision { word: word.to_string(), labels }));
            }
        }
        report
    }
}

/// Checks a verbalizer against a backend vocabulary: out-of-vocabulary words
/// and cross-label collisions are errors, multi-token words are warnings.
pub fn validate_verbalizer(verbalizer: &Verbalizer, probe: &impl VocabularyProbe) -> ValidationReport {
    let mut report = verbalizer.structural_report();
    for label in verbalizer.space.labels() {
        for word in verbalizer.words(label.index) {
            if !probe.in_vocabulary(word) {
                report.push(Finding::error(FindingKind::OutOfVocabulary {
                    label: label.name.clone(),
                    word: word.clone(),
                }));
            }
            let tokens = probe.token_count(word);
            if tokens > 1 {
                report.push(Finding::warning(FindingKind::MultiTokenWord {
                    label: label.name.clone(),
                    word: word.clone(),
                    tokens,
                }));
            }
        }
    }
    report
}

/// One constituent token of one label word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbalizerToken {
    pub label: usize,
    pub word: usize,
    pub token: TokenId,
}

/// A verbalizer resolved against a vocabulary: the flat list of token slots
/// that backends produce one logit each for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbalizerLayout {
    tokens: Vec<VerbalizerToken>,
    /// `word_lengths[label][word]` = number of tokens of that word.
    word_lengths: Vec<Vec<usize>>,
}

impl VerbalizerLayout {
    pub fn compile(verbalizer: &Verbalizer, probe: &impl VocabularyProbe) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut word_lengths = Vec::with_capacity(verbalizer.space.len());
        for label in verbalizer.space.labels() {
            let mut lengths = Vec::new();
            for (w, word) in verbalizer.words(label.index).iter().enumerate() {
                let ids = probe.token_ids(word);
                if ids.is_empty() {
                    return Err(Error::InvalidVerbalizer(format!("label word `{word}` has no tokens")));
                }
                lengths.push(ids.len());
                tokens.extend(ids.into_iter().map(|token| VerbalizerToken { label: label.index, word: w, token }));
            }
            word_lengths.push(lengths);
        }
        Self::from_parts(tokens, word_lengths)
    }

    /// Layout for tests and adapters that already know the token structure.
    pub fn from_parts(tokens: Vec<VerbalizerToken>, word_lengths: Vec<Vec<usize>>) -> Result<Self> {
        if tokens.is_empty() || word_lengths.is_empty() {
            return Err(Error::EmptyVerbalizer);
        }
        let counted: usize = word_lengths.iter().flatten().sum();
        if counted != tokens.len() {
            return Err(Error::InvalidVerbalizer(format!(
                "{} tokens listed, word lengths account for {counted}",
                tokens.len()
            )));
        }
        Ok(Self { tokens, word_lengths })
    }

    pub fn tokens(&self) -> &[VerbalizerToken] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.word_lengths.len()
    }

    pub fn word_count(&self, label: usize) -> usize {
        self.word_lengths.get(label).map_or(0, Vec::len)
    }

    pub fn word_len(&self, label: usize, word: usize) -> usize {
        self.word_lengths[label][word]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockTokenizer;
    use alloc::vec;

    fn scicite_space() -> LabelSpace {
        LabelSpace::new(["Background", "Method", "Result"]).unwrap()
    }

    fn scicite() -> Verbalizer {
        Verbalizer::new(
            &scicite_space(),
            [
                ("Background", vec!["background", "literature"]),
                ("Method", vec!["method", "approach"]),
                ("Result", vec!["result"]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn scicite_words_in_vocabulary_give_empty_report() {
        let probe =
            MockTokenizer::default().with_vocabulary(["background", "literature", "method", "approach", "result"]);
        assert!(validate_verbalizer(&scicite(), &probe).is_empty());
    }

    #[test]
    fn shared_word_is_one_injectivity_error() {
        let v = Verbalizer::from_entries(
            &scicite_space(),
            [("Background", vec!["background", "method"]), ("Method", vec!["method"]), ("Result", vec!["result"])],
        )
        .unwrap();
        let report = validate_verbalizer(&v, &MockTokenizer::default());
        assert_eq!(report.len(), 1);
        assert!(matches!(report.findings[0].kind, FindingKind::WordCollision { .. }));
        assert!(Verbalizer::new(&scicite_space(), [("Background", vec!["x"]), ("Method", vec!["x"])]).is_err());
    }

    #[test]
    fn three_piece_word_is_one_warning() {
        let probe = MockTokenizer { max_piece: 4, vocabulary: None };
        let v = Verbalizer::new(&LabelSpace::new(["A", "B"]).unwrap(), [("A", vec!["abcdefghij"]), ("B", vec!["b"])])
            .unwrap();
        let report = validate_verbalizer(&v, &probe);
        assert_eq!(report.len(), 1);
        assert_eq!(report.warnings().count(), 1);
        assert!(matches!(report.findings[0].kind, FindingKind::MultiTokenWord { tokens: 3, .. }));
    }

    #[test]
    fn out_of_vocabulary_reported() {
        let probe = MockTokenizer::default().with_vocabulary(["background"]);
        let report = validate_verbalizer(&scicite(), &probe);
        assert_eq!(report.errors().count(), 4);
    }

    #[test]
    fn missing_label_rejected_by_checked_constructor() {
        let err = Verbalizer::new(&scicite_space(), [("Background", vec!["b"]), ("Method", vec!["m"])]);
        assert!(matches!(err, Err(Error::InvalidVerbalizer(_))));
        assert!(matches!(Verbalizer::new(&scicite_space(), [("Nope", vec!["b"])]), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn layout_order_follows_labels_then_words() {
        let layout = VerbalizerLayout::compile(&scicite(), &MockTokenizer::default()).unwrap();
        assert_eq!(layout.len(), 5);
        let labels: Vec<usize> = layout.tokens().iter().map(|t| t.label).collect();
        assert_eq!(labels, vec![0, 0, 1, 1, 2]);
        assert_eq!(layout.word_count(0), 2);
    }
}
