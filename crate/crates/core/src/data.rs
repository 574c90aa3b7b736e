//! Instances, labels, datasets and unlabeled pools.
//!
//! Everything here is an immutable value once built. Construction is cheap
//! and unchecked where the caller may legitimately hold invalid data (a
//! freshly parsed file, for example); [`validate_dataset`] reports every
//! problem instead of stopping at the first one.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Field name under which [`Instance::text`] is addressed by templates and
/// adapters.
pub const TEXT_FIELD: &str = "text";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label {
    pub index: usize,
    pub name: String,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Ordered set of class labels. Indices always run `0..len` in order.
///
/// Serializes as the plain list of names so index order survives a round
/// trip through any format.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    labels: Vec<Label>,
}

impl LabelSpace {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::TooFewLabels(names.len()));
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if name.trim().is_empty() {
                return Err(Error::EmptyLabelName);
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateLabel(name.clone()));
            }
        }
        let labels = names.into_iter().enumerate().map(|(index, name)| Label { index, name }).collect();
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, index: usize) -> Option<&Label> {
        self.labels.get(index)
    }

    pub fn label(&self, index: usize) -> Result<&Label> {
        self.get(index).ok_or(Error::LabelOutOfSpace(index))
    }

    pub fn by_name(&self, name: &str) -> Option<&Label> {
        self.labels.iter().find(|l| l.name == name)
    }

    /// Case-insensitive lookup, used by adapters whose corpora spell labels
    /// in lower or upper case.
    pub fn by_name_ignore_case(&self, name: &str) -> Option<&Label> {
        self.by_name(name).or_else(|| self.labels.iter().find(|l| l.name.eq_ignore_ascii_case(name)))
    }

    /// True when `label` is exactly one of this space's labels (index and name).
    pub fn contains(&self, label: &Label) -> bool {
        self.get(label.index).is_some_and(|l| l.name == label.name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(|l| l.name.as_str())
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(space: LabelSpace) -> Self {
        space.labels.into_iter().map(|l| l.name).collect()
    }
}

/// One piece of text to classify, plus optional named side fields (title and
/// abstract for the keyword task).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub aux: BTreeMap<String, String>,
}

impl Instance {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self { id: id.into(), text: text.into(), aux: BTreeMap::new() }
    }

    pub fn with_aux(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.aux.insert(name.into(), value.into());
        self
    }

    /// Resolves a template field: `"text"` is the primary content, anything
    /// else is looked up in `aux`.
    pub fn field(&self, name: &str) -> Option<&str> {
        if name == TEXT_FIELD {
            Some(&self.text)
        } else {
            self.aux.get(name).map(String::as_str)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub instance: Instance,
    pub label: Label,
}

impl LabeledExample {
    pub fn new(instance: Instance, label: Label) -> Self {
        Self { instance, label }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub space: LabelSpace,
    pub examples: Vec<LabeledExample>,
}

impl Dataset {
    pub fn new(space: LabelSpace, examples: Vec<LabeledExample>) -> Self {
        Self { space, examples }
    }

    pub fn empty(space: LabelSpace) -> Self {
        Self::new(space, Vec::new())
    }

    /// Builds a dataset and rejects it if [`validate_dataset`] finds anything.
    pub fn try_new(space: LabelSpace, examples: Vec<LabeledExample>) -> core::result::Result<Self, ValidationReport> {
        let dataset = Self::new(space, examples);
        let report = validate_dataset(&dataset);
        if report.is_empty() {
            Ok(dataset)
        } else {
            Err(report)
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.examples.iter().map(|e| e.instance.id.as_str())
    }

    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.examples.iter().map(|e| &e.instance)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlabeledPool {
    pub instances: Vec<Instance>,
}

impl UnlabeledPool {
    pub fn new(instances: Vec<Instance>) -> Self {
        Self { instances }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.instances.iter().map(|i| i.id.as_str())
    }

    pub fn get(&self, id: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// Id-keyed view for repeated lookups.
    pub fn index(&self) -> BTreeMap<&str, &Instance> {
        self.instances.iter().map(|i| (i.id.as_str(), i)).collect()
    }

    /// Problems with the pool on its own and against a labeled dataset it
    /// must not overlap with.
    pub fn validate_against(&self, labeled: &Dataset) -> ValidationReport {
        let mut report = ValidationReport::default();
        let mut seen = BTreeSet::new();
        for inst in &self.instances {
            if !seen.insert(inst.id.as_str()) {
                report.push(Finding::error(FindingKind::DuplicateId(inst.id.clone())));
            }
            if inst.text.trim().is_empty() {
                report.push(Finding::error(FindingKind::EmptyText(inst.id.clone())));
            }
        }
        let labeled_ids: BTreeSet<&str> = labeled.ids().collect();
        for id in seen {
            if labeled_ids.contains(id) {
                report.push(Finding::error(FindingKind::OverlapsLabeled(id.to_string())));
            }
        }
        report
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    DuplicateId(String),
    EmptyId,
    EmptyText(String),
    LabelOutOfSpace { id: String, index: usize },
    LabelNameMismatch { id: String, index: usize, name: String },
    OverlapsLabeled(String),
    MissingVerbalizerEntry(String),
    EmptyWordList(String),
    OutOfVocabulary { label: String, word: String },
    MultiTokenWord { label: String, word: String, tokens: usize },
    WordCollision { word: String, labels: Vec<String> },
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DuplicateId(id) => write!(f, "duplicate id `{id}`"),
            Self::EmptyId => write!(f, "empty id"),
            Self::EmptyText(id) => write!(f, "`{id}` has empty text"),
            Self::LabelOutOfSpace { id, index } => {
                write!(f, "`{id}` has label index {index} outside the label space")
            }
            Self::LabelNameMismatch { id, index, name } => {
                write!(f, "`{id}` label {index} is named `{name}` but the space disagrees")
            }
            Self::OverlapsLabeled(id) => write!(f, "pool id `{id}` is also labeled"),
            Self::MissingVerbalizerEntry(label) => write!(f, "label `{label}` has no label words"),
            Self::EmptyWordList(label) => write!(f, "label `{label}` has an empty word list"),
            Self::OutOfVocabulary { label, word } => {
                write!(f, "label word `{word}` of `{label}` is out of vocabulary")
            }
            Self::MultiTokenWord { label, word, tokens } => {
                write!(f, "label word `{word}` of `{label}` splits into {tokens} tokens")
            }
            Self::WordCollision { word, labels } => {
                write!(f, "label word `{word}` is shared by {}", labels.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub kind: FindingKind,
}

impl Finding {
    pub fn error(kind: FindingKind) -> Self {
        Self { severity: Severity::Error, kind }
    }

    pub fn warning(kind: FindingKind) -> Self {
        Self { severity: Severity::Warning, kind }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag}: {}", self.kind)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn push(&mut self, finding: Finding) {
        self.findings.push(finding);
    }

    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.findings.len()
    }

    pub fn has_errors(&self) -> bool {
        self.findings.iter().any(|f| f.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Warning)
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.findings.extend(other.findings);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for finding in &self.findings {
            writeln!(f, "{finding}")?;
        }
        Ok(())
    }
}

/// Lists every violated dataset invariant. An empty report means the dataset
/// is valid.
pub fn validate_dataset(dataset: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = BTreeSet::new();
    for ex in &dataset.examples {
        let id = &ex.instance.id;
        if id.is_empty() {
            report.push(Finding::error(FindingKind::EmptyId));
        } else if !seen.insert(id.as_str()) {
            report.push(Finding::error(FindingKind::DuplicateId(id.clone())));
        }
        if ex.instance.text.trim().is_empty() {
            report.push(Finding::error(FindingKind::EmptyText(id.clone())));
        }
        match dataset.space.get(ex.label.index) {
            None => report.push(Finding::error(FindingKind::LabelOutOfSpace { id: id.clone(), index: ex.label.index })),
            Some(l) if l.name != ex.label.name => report.push(Finding::error(FindingKind::LabelNameMismatch {
                id: id.clone(),
                index: ex.label.index,
                name: ex.label.name.clone(),
            })),
            Some(_) => {}
        }
    }
    report
}

/// Per-class counts indexed by label index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassCounts(Vec<usize>);

impl ClassCounts {
    pub fn zeros(classes: usize) -> Self {
        Self(alloc::vec![0; classes])
    }

    pub fn from_vec(counts: Vec<usize>) -> Self {
        Self(counts)
    }

    pub fn get(&self, index: usize) -> usize {
        self.0.get(index).copied().unwrap_or(0)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.iter().copied().enumerate()
    }

    pub fn increment(&mut self, index: usize) {
        if index >= self.0.len() {
            self.0.resize(index + 1, 0);
        }
        self.0[index] += 1;
    }
}

/// Number of examples per label. Every label of the space is present, with
/// zero for unused ones. Examples whose label lies outside the space are
/// not counted; [`validate_dataset`] flags them.
pub fn class_counts(dataset: &Dataset) -> ClassCounts {
    let mut counts = ClassCounts::zeros(dataset.space.len());
    for ex in &dataset.examples {
        if ex.label.index < dataset.space.len() {
            counts.increment(ex.label.index);
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    fn space3() -> LabelSpace {
        LabelSpace::new(["A", "B", "C"]).unwrap()
    }

    fn ex(space: &LabelSpace, id: &str, label: usize) -> LabeledExample {
        LabeledExample::new(Instance::new(id, format!("text of {id}")), space.get(label).unwrap().clone())
    }

    #[test]
    fn label_space_rules() {
        assert_eq!(LabelSpace::new(["A"]), Err(Error::TooFewLabels(1)));
        assert_eq!(LabelSpace::new(["A", "A"]), Err(Error::DuplicateLabel("A".into())));
        assert_eq!(LabelSpace::new(["A", " "]), Err(Error::EmptyLabelName));
        let s = space3();
        assert_eq!(s.label(2).unwrap().name, "C");
        assert!(s.label(3).is_err());
        assert_eq!(s.by_name_ignore_case("b").unwrap().index, 1);
    }

    #[test]
    fn duplicate_id_is_reported_once() {
        let s = space3();
        let d = Dataset::new(s.clone(), vec![ex(&s, "a1", 0), ex(&s, "a1", 1), ex(&s, "a2", 2)]);
        let report = validate_dataset(&d);
        assert_eq!(report.len(), 1);
        assert_eq!(report.findings[0].kind, FindingKind::DuplicateId("a1".into()));
    }

    #[test]
    fn well_formed_dataset_has_empty_report() {
        let s = space3();
        let d = Dataset::new(s.clone(), vec![ex(&s, "a", 0), ex(&s, "b", 1), ex(&s, "c", 2)]);
        assert!(validate_dataset(&d).is_empty());
        assert!(Dataset::try_new(d.space.clone(), d.examples.clone()).is_ok());
    }

    #[test]
    fn out_of_space_label_is_reported() {
        let s = space3();
        let bad = LabeledExample::new(Instance::new("x", "t"), Label { index: 7, name: "Z".into() });
        let d = Dataset::new(s.clone(), vec![ex(&s, "a", 0), bad]);
        let report = validate_dataset(&d);
        assert_eq!(report.len(), 1);
        assert_eq!(report.findings[0].kind, FindingKind::LabelOutOfSpace { id: "x".into(), index: 7 });
    }

    #[test]
    fn validation_is_idempotent() {
        let s = space3();
        let d = Dataset::new(s.clone(), vec![ex(&s, "a", 0), ex(&s, "a", 0)]);
        assert_eq!(validate_dataset(&d), validate_dataset(&d));
    }

    #[test]
    fn counts() {
        let s = LabelSpace::new(["A", "B"]).unwrap();
        let mut examples = Vec::new();
        for i in 0..4 {
            examples.push(ex(&s, &format!("a{i}"), 0));
        }
        for i in 0..2 {
            examples.push(ex(&s, &format!("b{i}"), 1));
        }
        let d = Dataset::new(s.clone(), examples);
        assert_eq!(class_counts(&d).as_slice(), &[4, 2]);
        assert_eq!(class_counts(&Dataset::empty(s)).as_slice(), &[0, 0]);

        let s3 = space3();
        let balanced: Vec<_> = (0..48).map(|i| ex(&s3, &format!("e{i}"), i % 3)).collect();
        let c = class_counts(&Dataset::new(s3, balanced));
        assert_eq!(c.as_slice(), &[16, 16, 16]);
        assert_eq!(c.total(), 48);
    }

    #[test]
    fn pool_overlap_is_reported() {
        let s = space3();
        let d = Dataset::new(s.clone(), vec![ex(&s, "a", 0)]);
        let pool = UnlabeledPool::new(vec![Instance::new("a", "t"), Instance::new("b", "u")]);
        let report = pool.validate_against(&d);
        assert_eq!(report.len(), 1);
        assert_eq!(report.findings[0].kind, FindingKind::OverlapsLabeled("a".into()));
    }
}
