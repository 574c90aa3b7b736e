//! Bundled templates, verbalizers and task descriptions for the three
//! academic-function tasks: citation function, abstract sentence structure
//! function and keyword function.
//!
//! Every task gets two soft templates (two and three soft tokens between
//! the content and the mask) and four hard templates, the first two of
//! which carry the task description. Keyword-task wording is the English
//! rendering of the original Chinese prompts.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::template::{PromptTemplate, Segment, TemplateKind};
use super::verbalizer::Verbalizer;
use crate::data::{LabelSpace, TEXT_FIELD};

pub const CITATION_DESCRIPTION: &str =
    "Citation function identifies the meaning or purpose behind a particular citation.";
pub const STRUCTURE_DESCRIPTION: &str =
    "An abstract is divided into semantic headings such as background, objective, method, result, and conclusion.";
pub const KEYWORD_DESCRIPTION: &str =
    "The functions carried by the keywords in the literature are problem, method and others.";

/// Everything needed to run one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPreset {
    pub name: String,
    pub space: LabelSpace,
    pub verbalizer: Verbalizer,
    pub templates: Vec<PromptTemplate>,
    pub description: Option<String>,
    /// Default wrapping budget in tokens.
    pub max_length: usize,
}

impl TaskPreset {
    pub fn template(&self, id: &str) -> Option<&PromptTemplate> {
        self.templates.iter().find(|t| t.id() == id)
    }

    pub fn hard_templates(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.iter().filter(|t| t.kind() == TemplateKind::Hard)
    }

    pub fn soft_templates(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.iter().filter(|t| t.kind() == TemplateKind::Soft)
    }
}

pub fn by_name(name: &str) -> Option<TaskPreset> {
    match name {
        "scicite" | "citation" => Some(scicite()),
        "rct" | "structure" => Some(rct()),
        "keyword" | "pmo-kw" => Some(keyword()),
        "synthetic" => Some(crate::synthetic::preset()),
        _ => None,
    }
}

fn lit(s: &str) -> Segment {
    Segment::Literal(s.to_string())
}

fn slot(field: &str) -> Segment {
    Segment::Slot(field.to_string())
}

fn text() -> Segment {
    slot(TEXT_FIELD)
}

/// `x. <soft>… [MASK]` with `count` soft tokens.
pub fn soft_template(task: &str, count: usize) -> PromptTemplate {
    let mut segments = vec![text(), lit(".")];
    segments.extend((0..count).map(Segment::Soft));
    segments.push(Segment::Mask);
    PromptTemplate::new(alloc::format!("{task}-soft-{count}"), TemplateKind::Soft, segments)
        .expect("static soft template")
}

fn hard(id: &str, segments: Vec<Segment>, description: Option<&str>) -> PromptTemplate {
    let t = PromptTemplate::new(id, TemplateKind::Hard, segments).expect("static hard template");
    match description {
        Some(d) => t.with_description(d).expect("static description"),
        None => t,
    }
}

/// Hard templates of the form `[desc] x. <cue> [MASK]` for the two
/// sentence-level tasks.
fn sentence_templates(
    task: &str,
    short_cue: &str,
    long_cue_desc: &str,
    long_cue: &str,
    desc: &str,
) -> Vec<PromptTemplate> {
    let d = Segment::Description;
    vec![
        soft_template(task, 2),
        soft_template(task, 3),
        hard(&alloc::format!("{task}-hard-1"), vec![d.clone(), text(), lit(short_cue), Segment::Mask], Some(desc)),
        hard(&alloc::format!("{task}-hard-2"), vec![d, text(), lit(long_cue_desc), Segment::Mask], Some(desc)),
        hard(&alloc::format!("{task}-hard-3"), vec![text(), lit(long_cue), Segment::Mask], None),
        hard(&alloc::format!("{task}-hard-4"), vec![text(), lit(short_cue), Segment::Mask], None),
    ]
}

pub fn scicite() -> TaskPreset {
    let space = LabelSpace::new(["Background", "Method", "Result"]).expect("static labels");
    let verbalizer = Verbalizer::new(
        &space,
        [
            ("Background", vec!["background", "literature"]),
            ("Method", vec!["method", "approach"]),
            ("Result", vec!["result"]),
        ],
    )
    .expect("static verbalizer");
    TaskPreset {
        name: "scicite".into(),
        space,
        verbalizer,
        templates: sentence_templates(
            "scicite",
            ". Citation Function:",
            ". The function of this citation is",
            ". The function of this citation is",
            CITATION_DESCRIPTION,
        ),
        description: Some(CITATION_DESCRIPTION.into()),
        max_length: 128,
    }
}

pub fn rct() -> TaskPreset {
    let space =
        LabelSpace::new(["Background", "Objective", "Methods", "Results", "Conclusions"]).expect("static labels");
    let verbalizer = Verbalizer::new(
        &space,
        [
            ("Background", vec!["background"]),
            ("Objective", vec!["objective"]),
            ("Methods", vec!["methods"]),
            ("Results", vec!["results"]),
            ("Conclusions", vec!["conclusions"]),
        ],
    )
    .expect("static verbalizer");
    TaskPreset {
        name: "rct".into(),
        space,
        verbalizer,
        templates: sentence_templates(
            "rct",
            ". Structure Function:",
            ". The structure function of this sentence is",
            ". The Structure function of this sentence is",
            STRUCTURE_DESCRIPTION,
        ),
        description: Some(STRUCTURE_DESCRIPTION.into()),
        max_length: 128,
    }
}

pub fn keyword() -> TaskPreset {
    let space = LabelSpace::new(["Problem", "Method", "Others"]).expect("static labels");
    let verbalizer = Verbalizer::new(
        &space,
        [
            ("Problem", vec!["problem", "target", "orientation"]),
            ("Method", vec!["method", "algorithm", "technology"]),
            ("Others", vec!["data", "metric", "tool"]),
        ],
    )
    .expect("static verbalizer");

    let abstract_ = || slot("abstract");
    let title = || slot("title");
    let order = ["abstract", "title"];
    let with_title = |id: &str, mut head: Vec<Segment>| {
        head.extend([title(), lit("."), Segment::Description]);
        hard(id, head, Some(KEYWORD_DESCRIPTION)).with_truncation_order(order).expect("static truncation order")
    };
    let without_title = |id: &str, segments: Vec<Segment>| {
        hard(id, segments, None).with_truncation_order(["abstract"]).expect("static truncation order")
    };

    let templates = vec![
        soft_template("keyword", 2),
        soft_template("keyword", 3),
        with_title(
            "keyword-hard-1",
            vec![Segment::Mask, lit("is the function of"), text(), lit("in"), abstract_(), lit(".")],
        ),
        with_title(
            "keyword-hard-2",
            vec![lit("Keyword function:"), Segment::Mask, lit("."), text(), lit("in"), abstract_(), lit(".")],
        ),
        without_title(
            "keyword-hard-3",
            vec![Segment::Mask, lit("is the function of"), text(), lit("in"), abstract_(), lit(".")],
        ),
        without_title(
            "keyword-hard-4",
            vec![lit("Keyword function:"), Segment::Mask, lit("."), text(), lit("in"), abstract_(), lit(".")],
        ),
    ];
    TaskPreset {
        name: "keyword".into(),
        space,
        verbalizer,
        templates,
        description: Some(KEYWORD_DESCRIPTION.into()),
        max_length: 256,
    }
}
