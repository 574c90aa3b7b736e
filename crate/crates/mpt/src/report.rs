//! Comparison tables built from run manifests alone.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::manifest::{RunManifest, RunStatus, MANIFEST_FILE};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub task: String,
    pub k: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub run: String,
    pub best: bool,
}

/// Manifest files under `path`: the file itself, a run directory, or a
/// directory of run directories.
pub fn manifest_paths(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let own = path.join(MANIFEST_FILE);
    if own.is_file() {
        return Ok(vec![own]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<PathBuf> =
        entries.filter_map(|e| e.ok()).map(|e| e.path().join(MANIFEST_FILE)).filter(|p| p.is_file()).collect();
    out.sort();
    if out.is_empty() {
        return Err(Error::Manifest { path: path.into(), reason: "no manifest found".into() });
    }
    Ok(out)
}

fn rows_of(m: &RunManifest, run: &str, with_baselines: bool) -> Vec<ReportRow> {
    let Some(metrics) = &m.metrics else { return Vec::new() };
    let row = |method: String, r: &mpt_core::evaluation::EvalReport| ReportRow {
        method,
        task: m.config.task.clone(),
        k: m.config.k,
        seed: m.seed,
        accuracy: r.accuracy,
        macro_f1: r.macro_f1,
        run: run.into(),
        best: false,
    };
    let mut out = vec![row(m.config.name.clone(), &metrics.classifier)];
    if with_baselines {
        out.extend(metrics.baselines.iter().map(|b| row(format!("prompt:{}", b.template_id), &b.metrics)));
    }
    out
}

/// Rows from every readable manifest, plus one error per unreadable or
/// failed run.
pub fn collect(paths: &[PathBuf], with_baselines: bool) -> (Vec<ReportRow>, Vec<Error>) {
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for p in paths {
        let files = match manifest_paths(p) {
            Ok(f) => f,
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        for f in files {
            match RunManifest::load(&f) {
                Ok(m) => {
                    if let RunStatus::Failed { error, .. } = &m.status {
                        errors.push(Error::Manifest { path: f.clone(), reason: format!("run failed: {error}") });
                        continue;
                    }
                    let run = f.parent().map(|d| d.display().to_string()).unwrap_or_default();
                    rows.extend(rows_of(&m, &run, with_baselines));
                }
                Err(e) => errors.push(e),
            }
        }
    }
    (rows, errors)
}

/// Orders rows by `(K, method, seed)` and flags the highest macro-F1 in
/// every `(method, K)` group with more than one row (first wins ties).
pub fn group_and_flag(mut rows: Vec<ReportRow>) -> Vec<ReportRow> {
    rows.sort_by(|a, b| {
        a.k.cmp(&b.k)
            .then_with(|| a.method.cmp(&b.method))
            .then_with(|| a.seed.cmp(&b.seed))
            .then_with(|| a.run.cmp(&b.run))
    });
    let mut start = 0;
    while start < rows.len() {
        let end =
            start + rows[start..].iter().take_while(|r| r.k == rows[start].k && r.method == rows[start].method).count();
        if end - start > 1 {
            let mut best = start;
            for i in start + 1..end {
                if rows[i].macro_f1 > rows[best].macro_f1 {
                    best = i;
                }
            }
            rows[best].best = true;
        }
        start = end;
    }
    rows
}

pub fn render_text(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:<10} {:>5} {:>6} {:>9} {:>9}  best",
        "method", "task", "K", "seed", "accuracy", "macro_f1"
    );
    let mut last: Option<(usize, &str)> = None;
    for r in rows {
        if last.is_some() && last != Some((r.k, r.method.as_str())) {
            out.push('\n');
        }
        last = Some((r.k, r.method.as_str()));
        let _ = writeln!(
            out,
            "{:<28} {:<10} {:>5} {:>6} {:>9.4} {:>9.4}  {}",
            r.method,
            r.task,
            r.k,
            r.seed,
            r.accuracy,
            r.macro_f1,
            if r.best { "*" } else { "" }
        );
    }
    out
}

pub fn write_csv(rows: &[ReportRow], out: impl Write) -> Result<()> {
    let err = |e: csv::Error| Error::config(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "task", "k", "seed", "accuracy", "macro_f1", "best", "run"]).map_err(err)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.task.clone(),
            r.k.to_string(),
            r.seed.to_string(),
            format!("{:.6}", r.accuracy),
            format!("{:.6}", r.macro_f1),
            r.best.to_string(),
            r.run.clone(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<report>", e))
}
