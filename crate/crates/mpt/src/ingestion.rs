//! Dataset adapters.
//!
//! | format          | layout                                                        |
//! |-----------------|---------------------------------------------------------------|
//! | `scicite-jsonl` | one JSON object per line (`string`, `label`, `unique_id`)     |
//! | `rct-lines`     | `###<abstract id>` headers, then `LABEL<TAB>sentence` lines   |
//! | `keyword-table` | CSV with a header row (`keyword,title,abstract,label`)        |
//! | `generic-jsonl` | one JSON object per line, fields given by the field map       |
//!
//! Records without an id field get `path:ordinal` ids, with `ordinal`
//! counting records from 0. RCT sentences get `<abstract id>:<position>`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use mpt_core::data::{class_counts, Dataset, Instance, Label, LabelSpace, LabeledExample, UnlabeledPool};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Aux field holding an RCT sentence's abstract id.
pub const RCT_ABSTRACT_FIELD: &str = "abstract_id";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    SciciteJsonl,
    RctLines,
    KeywordTable,
    GenericJsonl,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "scicite-jsonl" => Some(Self::SciciteJsonl),
            "rct-lines" => Some(Self::RctLines),
            "keyword-table" => Some(Self::KeywordTable),
            "generic-jsonl" => Some(Self::GenericJsonl),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SciciteJsonl => "scicite-jsonl",
            Self::RctLines => "rct-lines",
            Self::KeywordTable => "keyword-table",
            Self::GenericJsonl => "generic-jsonl",
        }
    }
}

/// Source field names. `id` is optional in the data; `aux` fields are
/// copied into [`Instance::aux`] under the same names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMap {
    pub text: String,
    pub label: String,
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub aux: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub format: Format,
    pub fields: FieldMap,
    /// Raw label spelling to label name. Unmapped labels are matched
    /// case-insensitively against the label space.
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
}

impl AdapterConfig {
    /// Default field names for a format.
    pub fn for_format(format: Format) -> Self {
        let fields = match format {
            Format::SciciteJsonl => {
                FieldMap { text: "string".into(), label: "label".into(), id: Some("unique_id".into()), aux: Vec::new() }
            }
            Format::RctLines => FieldMap { text: "text".into(), label: "label".into(), id: None, aux: Vec::new() },
            Format::KeywordTable => FieldMap {
                text: "keyword".into(),
                label: "label".into(),
                id: Some("id".into()),
                aux: vec!["title".into(), "abstract".into()],
            },
            Format::GenericJsonl => {
                FieldMap { text: "text".into(), label: "label".into(), id: Some("id".into()), aux: Vec::new() }
            }
        };
        Self { format, fields, labels: BTreeMap::new() }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.fields.text.is_empty() {
            out.push("field map: text field name is empty".into());
        }
        if self.fields.label.is_empty() {
            out.push("field map: label field name is empty".into());
        }
        if self.fields.aux.iter().any(|a| a == &self.fields.text || a == &self.fields.label) {
            out.push("field map: aux fields must differ from the text and label fields".into());
        }
        out
    }

    fn resolve_label(&self, space: &LabelSpace, raw: &str, path: &Path, line: usize) -> Result<Label> {
        let name = self.labels.get(raw).map(String::as_str).unwrap_or(raw);
        space.by_name(name).or_else(|| space.by_name_ignore_case(name)).cloned().ok_or_else(|| Error::UnknownLabel {
            path: path.into(),
            line,
            label: raw.into(),
        })
    }
}

/// One parsed record: line number, instance, raw label if present.
struct Record {
    line: usize,
    instance: Instance,
    label: Option<String>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse { path: path.into(), line, reason: reason.into() }
}

fn default_id(path: &Path, ordinal: usize) -> String {
    format!("{}:{ordinal}", path.display())
}

fn json_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn jsonl_records(path: &Path, text: &str, cfg: &AdapterConfig, labeled: bool) -> Result<Vec<Record>> {
    let f = &cfg.fields;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let obj: Map<String, Value> =
            serde_json::from_str(raw).map_err(|e| parse_err(path, line, format!("invalid JSON object: {e}")))?;
        let get = |name: &str| obj.get(name).filter(|v| !v.is_null()).and_then(json_string);
        let body = get(&f.text).ok_or_else(|| parse_err(path, line, format!("missing text field `{}`", f.text)))?;
        let id = f.id.as_deref().and_then(get).unwrap_or_else(|| default_id(path, out.len()));
        let mut instance = Instance::new(id, body);
        for a in &f.aux {
            if let Some(v) = get(a) {
                instance = instance.with_aux(a.clone(), v);
            }
        }
        let label = get(&f.label);
        if labeled && label.is_none() {
            return Err(parse_err(path, line, format!("missing label field `{}`", f.label)));
        }
        out.push(Record { line, instance, label });
    }
    Ok(out)
}

fn rct_records(path: &Path, text: &str, labeled: bool) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    let mut abstract_id: Option<String> = None;
    let mut position = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        if let Some(id) = raw.strip_prefix("###") {
            let id = id.trim();
            if id.is_empty() {
                return Err(parse_err(path, line, "empty abstract id"));
            }
            abstract_id = Some(id.to_string());
            position = 0;
            continue;
        }
        let abs =
            abstract_id.as_deref().ok_or_else(|| parse_err(path, line, "sentence before the first `###` header"))?;
        let (label, sentence) = match raw.split_once('\t') {
            Some((l, s)) => (Some(l.to_string()), s.to_string()),
            None if !labeled => (None, raw.to_string()),
            None => return Err(parse_err(path, line, "expected `LABEL<TAB>sentence`")),
        };
        let instance = Instance::new(format!("{abs}:{position}"), sentence).with_aux(RCT_ABSTRACT_FIELD, abs);
        position += 1;
        out.push(Record { line, instance, label });
    }
    Ok(out)
}

fn table_records(path: &Path, text: &str, cfg: &AdapterConfig, labeled: bool) -> Result<Vec<Record>> {
    let f = &cfg.fields;
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let text_col = column(&f.text).ok_or_else(|| parse_err(path, 1, format!("no `{}` column", f.text)))?;
    let label_col = column(&f.label);
    if labeled && label_col.is_none() {
        return Err(parse_err(path, 1, format!("no `{}` column", f.label)));
    }
    let id_col = f.id.as_deref().and_then(column);
    let aux_cols: Vec<(String, usize)> = f.aux.iter().filter_map(|a| column(a).map(|c| (a.clone(), c))).collect();

    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let cell = |c: usize| row.get(c).map(str::to_string);
        let body = cell(text_col).ok_or_else(|| parse_err(path, line, "short row"))?;
        let id = id_col.and_then(cell).filter(|s| !s.is_empty()).unwrap_or_else(|| default_id(path, out.len()));
        let mut instance = Instance::new(id, body);
        for (name, c) in &aux_cols {
            if let Some(v) = cell(*c) {
                instance = instance.with_aux(name.clone(), v);
            }
        }
        let label = label_col.and_then(cell);
        if labeled && label.as_deref().is_none_or(str::is_empty) {
            return Err(parse_err(path, line, "missing label"));
        }
        out.push(Record { line, instance, label });
    }
    Ok(out)
}

fn records(path: &Path, cfg: &AdapterConfig, labeled: bool) -> Result<Vec<Record>> {
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let text = read(path)?;
    match cfg.format {
        Format::SciciteJsonl | Format::GenericJsonl => jsonl_records(path, &text, cfg, labeled),
        Format::RctLines => rct_records(path, &text, labeled),
        Format::KeywordTable => table_records(path, &text, cfg, labeled),
    }
}

/// Loads a labeled file in record order.
pub fn load_labeled(path: impl AsRef<Path>, cfg: &AdapterConfig, space: &LabelSpace) -> Result<Dataset> {
    let path = path.as_ref();
    let mut examples = Vec::new();
    for r in records(path, cfg, true)? {
        let raw = r.label.expect("labeled records carry labels");
        let label = cfg.resolve_label(space, &raw, path, r.line)?;
        examples.push(LabeledExample::new(r.instance, label));
    }
    Ok(Dataset::new(space.clone(), examples))
}

/// Loads a file as unlabeled instances; labels, if present, are ignored.
pub fn load_unlabeled(path: impl AsRef<Path>, cfg: &AdapterConfig) -> Result<UnlabeledPool> {
    let path = path.as_ref();
    Ok(UnlabeledPool::new(records(path, cfg, false)?.into_iter().map(|r| r.instance).collect()))
}

/// Writes `dataset` in `cfg`'s format so that loading it back yields the
/// same dataset.
pub fn write_labeled(dataset: &Dataset, cfg: &AdapterConfig, out: &mut impl Write) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<output>", e);
    let f = &cfg.fields;
    match cfg.format {
        Format::SciciteJsonl | Format::GenericJsonl => {
            let id_field = f.id.as_deref().unwrap_or("id");
            for ex in &dataset.examples {
                let mut obj = Map::new();
                obj.insert(id_field.into(), Value::String(ex.instance.id.clone()));
                obj.insert(f.text.clone(), Value::String(ex.instance.text.clone()));
                for (k, v) in &ex.instance.aux {
                    obj.insert(k.clone(), Value::String(v.clone()));
                }
                obj.insert(f.label.clone(), Value::String(ex.label.name.clone()));
                writeln!(out, "{}", Value::Object(obj)).map_err(io)?;
            }
        }
        Format::RctLines => {
            let mut current: Option<&str> = None;
            for ex in &dataset.examples {
                let abs = ex.instance.field(RCT_ABSTRACT_FIELD).ok_or_else(|| {
                    Error::config(format!("`{}` has no `{RCT_ABSTRACT_FIELD}` field", ex.instance.id))
                })?;
                if current != Some(abs) {
                    if current.is_some() {
                        writeln!(out).map_err(io)?;
                    }
                    writeln!(out, "###{abs}").map_err(io)?;
                    current = Some(abs);
                }
                writeln!(out, "{}\t{}", ex.label.name.to_uppercase(), ex.instance.text).map_err(io)?;
            }
        }
        Format::KeywordTable => {
            let mut w = csv::Writer::from_writer(out);
            let id_field = f.id.as_deref().unwrap_or("id");
            let mut header = vec![id_field, f.text.as_str()];
            header.extend(f.aux.iter().map(String::as_str));
            header.push(&f.label);
            w.write_record(&header).map_err(|e| Error::config(e.to_string()))?;
            for ex in &dataset.examples {
                let mut row = vec![ex.instance.id.as_str(), ex.instance.text.as_str()];
                row.extend(f.aux.iter().map(|a| ex.instance.field(a).unwrap_or("")));
                row.push(&ex.label.name);
                w.write_record(&row).map_err(|e| Error::config(e.to_string()))?;
            }
            w.flush().map_err(io)?;
        }
    }
    Ok(())
}

pub fn save_labeled(dataset: &Dataset, cfg: &AdapterConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_labeled(dataset, cfg, &mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub size: usize,
    pub class_counts: BTreeMap<String, usize>,
    pub class_distribution: BTreeMap<String, f64>,
    /// Whitespace-token length percentiles (nearest rank): p50, p90, max.
    pub length_p50: usize,
    pub length_p90: usize,
    pub length_max: usize,
}

fn nearest_rank(sorted: &[usize], q: f64) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

pub fn summarize(dataset: &Dataset) -> Summary {
    let counts = class_counts(dataset);
    let n = dataset.len();
    let mut lengths: Vec<usize> = dataset.instances().map(|x| x.text.split_whitespace().count()).collect();
    lengths.sort_unstable();
    let names = dataset.space.labels().iter().map(|l| l.name.clone());
    Summary {
        size: n,
        class_counts: names.clone().zip(counts.as_slice().iter().copied()).collect(),
        class_distribution: names
            .zip(counts.as_slice())
            .map(|(name, &c)| (name, if n == 0 { 0.0 } else { c as f64 / n as f64 }))
            .collect(),
        length_p50: nearest_rank(&lengths, 0.5),
        length_p90: nearest_rank(&lengths, 0.9),
        length_max: lengths.last().copied().unwrap_or(0),
    }
}

/// Directory of the bundled fixtures.
pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}
