use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mpt::files::SplitRecord;
use mpt::ingestion::{fixtures_dir, save_labeled, AdapterConfig, Format};
use mpt::manifest::{RunManifest, RunStatus};
use mpt_core::data::Dataset;
use mpt_core::synthetic::SyntheticTask;

fn mpt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpt")).args(args).current_dir(cwd).env_remove("MPT_RUN_ROOT").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Synthetic examples with the given per-class counts, written as generic
/// JSONL.
fn synthetic_file(dir: &Path, counts: [usize; 3]) -> PathBuf {
    let all = SyntheticTask::default().generate(3 * counts.iter().max().unwrap(), "s", 5);
    let mut left = counts;
    let examples = all
        .examples
        .into_iter()
        .filter(|e| {
            let y = e.label.index;
            let keep = left[y] > 0;
            left[y] = left[y].saturating_sub(1);
            keep
        })
        .collect();
    let d = Dataset::new(all.space, examples);
    let path = dir.join("source.jsonl");
    save_labeled(&d, &AdapterConfig::for_format(Format::GenericJsonl), &path).unwrap();
    path
}

fn read_split(path: &Path) -> SplitRecord {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn missing_data_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = mpt(&["validate", "--data", "absent.jsonl", "--format", "scicite-jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("absent.jsonl"));
}

#[test]
fn zero_lambda_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = mpt(&["run", "--lambda", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lambda must lie in (0, 1]"), "{}", stderr(&o));
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "lambda = 0.5\nlamda = 0.3\n").unwrap();
    let o = mpt(&["validate", "--config", "c.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn validate_fixtures_and_task_files() {
    let data = fixtures_dir().join("data");
    let templates = fixtures_dir().join("templates");
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("scicite.jsonl", "scicite-jsonl", "scicite.json", "5 examples"),
        ("rct.txt", "rct-lines", "rct.json", "9 examples"),
        ("keyword.csv", "keyword-table", "keyword.json", "6 examples"),
    ];
    for (file, format, task, expect) in cases {
        let o = mpt(
            &[
                "validate",
                "--data",
                data.join(file).to_str().unwrap(),
                "--format",
                format,
                "--task-file",
                templates.join(task).to_str().unwrap(),
            ],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{file}: {}", stderr(&o));
        assert!(stdout(&o).contains(expect), "{}", stdout(&o));
    }
}

#[test]
fn sample_balanced_and_proportional() {
    let dir = tempfile::tempdir().unwrap();
    let src = synthetic_file(dir.path(), [58, 29, 13]);
    let src = src.to_str().unwrap();

    let o = mpt(
        &[
            "sample",
            "--data",
            src,
            "--format",
            "generic-jsonl",
            "--task",
            "synthetic",
            "--k",
            "6",
            "--seed",
            "3",
            "--out",
            "b.json",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rec = read_split(&dir.path().join("b.json"));
    assert_eq!(rec.train_ids.len(), 18);
    assert_eq!(rec.validation_ids.len(), 18);

    let o = mpt(
        &[
            "sample",
            "--data",
            src,
            "--format",
            "generic-jsonl",
            "--task",
            "synthetic",
            "--mode",
            "proportional",
            "--total",
            "48",
            "--out",
            "p.json",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("\"Music\": 6"), "{}", stdout(&o));
    assert!(stdout(&o).contains("\"Science\": 14"), "{}", stdout(&o));
    assert!(stdout(&o).contains("\"Sports\": 28"), "{}", stdout(&o));

    let o = mpt(
        &["sample", "--data", src, "--format", "generic-jsonl", "--task", "synthetic", "--k", "20", "--out", "x.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn run_report_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let common = ["--k", "4", "--seeds", "1,2", "--unlabeled-count", "120", "--generations", "1"];
    let mut args = vec!["run", "--run-root", "a"];
    args.extend(common);
    let o = mpt(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let run1 = dir.path().join("a").join("mpt-synthetic-k4-seed1");
    for f in
        ["manifest.json", "config.toml", "split.json", "metrics.csv", "classifier/state.json", "classifier/meta.json"]
    {
        assert!(run1.join(f).is_file(), "{f}");
    }
    assert!(dir.path().join("a").join("mpt-synthetic-k4-metrics.csv").is_file());
    let m = RunManifest::load(&run1).unwrap();
    assert_eq!(m.status, RunStatus::Completed);
    assert_eq!(m.generations.len(), 2);
    for t in &m.generations[1].templates {
        assert!(run1.join(t.snapshot.as_ref().unwrap()).is_file());
        assert!(run1.join(t.checkpoint.as_ref().unwrap()).join("state.json").is_file());
    }

    let o = mpt(&["run", "--manifest", run1.to_str().unwrap(), "--run-root", "b", "--seeds", "1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let again = RunManifest::load(&dir.path().join("b").join("mpt-synthetic-k4-seed1")).unwrap();
    assert_eq!(again.hash, m.hash);

    let o = mpt(&args, dir.path());
    assert_eq!(o.status.code(), Some(2), "existing run dirs need --overwrite: {}", stderr(&o));

    let o = mpt(&["report", "a", "--with-baselines", "--csv", "table.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("mpt ") && l.ends_with('*')), "{text}");
    assert!(text.contains("prompt:synthetic-hard-1"));
    let csv = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("mpt,")).count(), 2);
}

#[test]
fn hard_only_single_round() {
    let dir = tempfile::tempdir().unwrap();
    let o = mpt(
        &[
            "run",
            "--templates",
            "hard-only",
            "--generations",
            "0",
            "--k",
            "4",
            "--seeds",
            "1",
            "--unlabeled-count",
            "90",
            "--name",
            "single-round",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = RunManifest::load(&dir.path().join("runs").join("single-round-synthetic-k4-seed1")).unwrap();
    assert_eq!(m.generations.len(), 1);
    assert!(m.generations[0].templates.iter().all(|t| t.template_id.contains("hard")));
    assert_eq!(m.distillation_rows, Some(12 + 90));
}

#[test]
fn report_of_missing_path_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = mpt(&["report", "nowhere"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}
