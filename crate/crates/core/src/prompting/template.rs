use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::VocabularyProbe;
use crate::error::{Error, Result};

/// One piece of a prompt template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    /// Fixed text, tokenized as-is.
    Literal(String),
    /// Content of a named instance field (`"text"` or an aux field).
    Slot(String),
    /// A trainable continuous token, numbered within the template.
    Soft(usize),
    /// The single position whose filler is scored against the verbalizer.
    Mask,
    /// Where the template's task description is placed.
    Description,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    Hard,
    Soft,
}

/// A cloze pattern wrapping an instance around exactly one mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTemplate", into = "RawTemplate")]
pub struct PromptTemplate {
    id: String,
    kind: TemplateKind,
    segments: Vec<Segment>,
    task_description: Option<String>,
    truncation_order: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RawTemplate {
    id: String,
    kind: TemplateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    task_description: Option<String>,
    segments: Vec<Segment>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    truncation_order: Vec<String>,
}

impl TryFrom<RawTemplate> for PromptTemplate {
    type Error = Error;

    fn try_from(raw: RawTemplate) -> Result<Self> {
        let mut t = PromptTemplate::new(raw.id, raw.kind, raw.segments)?;
        if let Some(desc) = raw.task_description {
            t = t.with_description(desc)?;
        } else {
            t.check()?;
        }
        if !raw.truncation_order.is_empty() {
            t = t.with_truncation_order(raw.truncation_order)?;
        }
        Ok(t)
    }
}

impl From<PromptTemplate> for RawTemplate {
    fn from(t: PromptTemplate) -> Self {
        let default_order = t.slot_fields();
        let truncation_order = if t.truncation_order == default_order { Vec::new() } else { t.truncation_order };
        Self { id: t.id, kind: t.kind, task_description: t.task_description, segments: t.segments, truncation_order }
    }
}

impl PromptTemplate {
    /// Builds a template without a task description. Slot fields are
    /// truncated in declaration order by default.
    pub fn new(id: impl Into<String>, kind: TemplateKind, segments: Vec<Segment>) -> Result<Self> {
        let mut t = Self { id: id.into(), kind, segments, task_description: None, truncation_order: Vec::new() };
        t.truncation_order = t.slot_fields();
        t.check_structure()?;
        Ok(t)
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Result<Self> {
        self.task_description = Some(description.into());
        self.check()?;
        Ok(self)
    }

    /// Fields listed here are shortened from the tail, in this order, when the
    /// wrapped input would exceed its budget. Unlisted fields are never cut.
    pub fn with_truncation_order<I, S>(mut self, fields: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.truncation_order = fields.into_iter().map(Into::into).collect();
        let slots = self.slot_fields();
        if let Some(f) = self.truncation_order.iter().find(|f| !slots.contains(f)) {
            return Err(self.invalid(format!("truncation field `{f}` is not a slot")));
        }
        Ok(self)
    }

    fn invalid(&self, reason: String) -> Error {
        Error::InvalidTemplate { id: self.id.clone(), reason }
    }

    fn check_structure(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(self.invalid("empty id".to_string()));
        }
        let masks = self.segments.iter().filter(|s| matches!(s, Segment::Mask)).count();
        if masks != 1 {
            return Err(self.invalid(format!("needs exactly one mask, found {masks}")));
        }
        if !self.segments.iter().any(|s| matches!(s, Segment::Slot(_))) {
            return Err(self.invalid("needs at least one instance slot".to_string()));
        }
        let softs = self.soft_slot_count();
        match self.kind {
            TemplateKind::Hard if softs > 0 => {
                return Err(self.invalid("hard templates cannot contain soft slots".to_string()))
            }
            TemplateKind::Soft if softs == 0 => {
                return Err(self.invalid("soft templates need at least one soft slot".to_string()))
            }
            _ => {}
        }
        let mut slots: Vec<usize> = self
            .segments
            .iter()
            .filter_map(|s| match s {
                Segment::Soft(i) => Some(*i),
                _ => None,
            })
            .collect();
        slots.sort_unstable();
        slots.dedup();
        if slots.len() != softs {
            return Err(self.invalid("soft slot indices must be distinct".to_string()));
        }
        Ok(())
    }

    fn check(&self) -> Result<()> {
        self.check_structure()?;
        let placed = self.segments.iter().filter(|s| matches!(s, Segment::Description)).count();
        match (&self.task_description, placed) {
            (Some(_), 1) | (None, 0) => Ok(()),
            (Some(_), 0) => Err(self.invalid("description given but not placed".to_string())),
            (None, _) => Err(self.invalid("description placed but not given".to_string())),
            (Some(_), _) => Err(self.invalid("description placed more than once".to_string())),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn task_description(&self) -> Option<&str> {
        self.task_description.as_deref()
    }

    pub fn truncation_order(&self) -> &[String] {
        &self.truncation_order
    }

    pub fn soft_slot_count(&self) -> usize {
        self.segments.iter().filter(|s| matches!(s, Segment::Soft(_))).count()
    }

    /// Distinct slot field names in order of first appearance.
    pub fn slot_fields(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.segments {
            if let Segment::Slot(f) = s {
                if !out.contains(f) {
                    out.push(f.clone());
                }
            }
        }
        out
    }

    /// Tokens the template itself contributes: literals, description, soft
    /// slots and the mask.
    pub fn fixed_token_count(&self, probe: &impl VocabularyProbe) -> usize {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Literal(text) => probe.tokenize(text).len(),
                Segment::Description => self.task_description.as_deref().map_or(0, |d| probe.tokenize(d).len()),
                Segment::Soft(_) | Segment::Mask => 1,
                Segment::Slot(_) => 0,
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockTokenizer;
    use alloc::vec;

    fn lit(s: &str) -> Segment {
        Segment::Literal(s.into())
    }

    fn slot() -> Segment {
        Segment::Slot("text".into())
    }

    #[test]
    fn mask_count_enforced() {
        let none = PromptTemplate::new("t", TemplateKind::Hard, vec![slot(), lit("x")]);
        assert!(matches!(none, Err(Error::InvalidTemplate { .. })));
        let two = PromptTemplate::new("t", TemplateKind::Hard, vec![slot(), Segment::Mask, Segment::Mask]);
        assert!(two.is_err());
    }

    #[test]
    fn kind_matches_soft_slots() {
        let hard_with_soft =
            PromptTemplate::new("t", TemplateKind::Hard, vec![slot(), Segment::Soft(0), Segment::Mask]);
        assert!(hard_with_soft.is_err());
        let soft_without = PromptTemplate::new("t", TemplateKind::Soft, vec![slot(), Segment::Mask]);
        assert!(soft_without.is_err());
        let dup = PromptTemplate::new(
            "t",
            TemplateKind::Soft,
            vec![slot(), Segment::Soft(0), Segment::Soft(0), Segment::Mask],
        );
        assert!(dup.is_err());
    }

    #[test]
    fn needs_instance_slot() {
        assert!(PromptTemplate::new("t", TemplateKind::Hard, vec![lit("a"), Segment::Mask]).is_err());
    }

    #[test]
    fn description_must_be_placed() {
        let t = PromptTemplate::new("t", TemplateKind::Hard, vec![slot(), Segment::Mask]).unwrap();
        assert!(t.clone().with_description("d").is_err());
        let placed = PromptTemplate::new("t", TemplateKind::Hard, vec![Segment::Description, slot(), Segment::Mask]);
        // Placed without text is rejected once checked via deserialization,
        // and accepted once a description is attached.
        assert!(placed.unwrap().with_description("d").is_ok());
    }

    #[test]
    fn fixed_tokens() {
        let t = PromptTemplate::new(
            "t",
            TemplateKind::Soft,
            vec![slot(), lit(". Citation Function:"), Segment::Soft(0), Segment::Soft(1), Segment::Mask],
        )
        .unwrap();
        // ". citation function :" = 4 tokens, 2 soft, 1 mask
        assert_eq!(t.fixed_token_count(&MockTokenizer::default()), 7);
    }

    #[test]
    fn truncation_fields_must_exist() {
        let t = PromptTemplate::new("t", TemplateKind::Hard, vec![slot(), Segment::Mask]).unwrap();
        assert!(t.clone().with_truncation_order(["abstract"]).is_err());
        assert_eq!(t.truncation_order(), &["text".to_string()]);
    }
}
