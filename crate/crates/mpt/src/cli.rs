use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mpt_core::backend::MockTokenizer;
use mpt_core::data::validate_dataset;
use mpt_core::prompting::tasks::{self, TaskPreset};
use mpt_core::prompting::validate_verbalizer;
use mpt_core::sampling::{SampleMode, SamplePlan};
use mpt_core::scheduler::WeightMode;

use crate::config::{Overrides, RunConfig, TemplateSelection};
use crate::error::{exit, Error, Result};
use crate::files::{load_task_file, write_json, SplitRecord};
use crate::ingestion::{load_labeled, summarize, AdapterConfig, Format};
use crate::manifest::RunManifest;
use crate::report;
use crate::run::{execute_all, DEFAULT_RUN_ROOT, RUN_ROOT_ENV};

#[derive(Debug, Parser)]
#[command(name = "mpt", version, about = "Mixed hard/soft prompt ensembles with pseudo-label self-training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a few-shot split and write it as a split record.
    Sample(SampleArgs),
    /// Run the full pipeline for every configured seed.
    Run(RunArgs),
    /// Tabulate finished runs from their manifests.
    Report(ReportArgs),
    /// Check a run configuration, a data file or a task file.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    SciciteJsonl,
    RctLines,
    KeywordTable,
    GenericJsonl,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::SciciteJsonl => Format::SciciteJsonl,
            FormatArg::RctLines => Format::RctLines,
            FormatArg::KeywordTable => Format::KeywordTable,
            FormatArg::GenericJsonl => Format::GenericJsonl,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Balanced,
    Proportional,
}

impl From<ModeArg> for SampleMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Balanced => SampleMode::Balanced,
            ModeArg::Proportional => SampleMode::Proportional,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SelectionArg {
    All,
    HardOnly,
    SoftOnly,
}

impl From<SelectionArg> for TemplateSelection {
    fn from(s: SelectionArg) -> Self {
        match s {
            SelectionArg::All => TemplateSelection::All,
            SelectionArg::HardOnly => TemplateSelection::HardOnly,
            SelectionArg::SoftOnly => TemplateSelection::SoftOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightArg {
    Uniform,
    SeedAccuracy,
}

impl From<WeightArg> for WeightMode {
    fn from(w: WeightArg) -> Self {
        match w {
            WeightArg::Uniform => WeightMode::Uniform,
            WeightArg::SeedAccuracy => WeightMode::SeedAccuracy,
        }
    }
}

#[derive(Debug, Args)]
pub struct TaskArgs {
    /// Bundled task: scicite, rct, keyword or synthetic.
    #[arg(long, default_value = "scicite")]
    pub task: String,
    /// Task definition file; overrides --task.
    #[arg(long)]
    pub task_file: Option<PathBuf>,
}

impl TaskArgs {
    fn preset(&self) -> Result<TaskPreset> {
        match &self.task_file {
            Some(p) => load_task_file(p),
            None => tasks::by_name(&self.task).ok_or_else(|| Error::config(format!("unknown task `{}`", self.task))),
        }
    }
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub format: FormatArg,
    #[command(flatten)]
    pub task: TaskArgs,
    #[arg(long, value_enum, default_value = "balanced")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 16)]
    pub k: usize,
    /// Proportional-mode total; defaults to k times the number of labels.
    #[arg(long)]
    pub total: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Fail when a non-empty class would get no examples.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "manifest")]
    pub config: Option<PathBuf>,
    /// Rerun the configuration embedded in an earlier manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, env = RUN_ROOT_ENV, default_value = DEFAULT_RUN_ROOT)]
    pub run_root: PathBuf,
    /// Replace existing run directories.
    #[arg(long)]
    pub overwrite: bool,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long, value_enum)]
    pub templates: Option<SelectionArg>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub total: Option<usize>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub unlabeled_count: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub growth: Option<u64>,
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long, value_enum)]
    pub weight_mode: Option<WeightArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            name: self.name.clone(),
            task: self.task.clone(),
            backend: self.backend.clone(),
            templates: self.templates.map(Into::into),
            mode: self.mode.map(Into::into),
            k: self.k,
            total: self.total,
            seeds: self.seeds.clone(),
            unlabeled_count: self.unlabeled_count,
            lambda: self.lambda,
            growth: self.growth,
            generations: self.generations,
            weight_mode: self.weight_mode.map(Into::into),
            epochs: self.epochs,
        }
    }

    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, &self.manifest) {
            (Some(p), _) => RunConfig::load(p)?,
            (None, Some(m)) => RunManifest::load(m)?.config,
            (None, None) => RunConfig::default(),
        };
        cfg.apply(&self.overrides());
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories, run roots or manifest files.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Add each run's single-template generation-0 rows.
    #[arg(long)]
    pub with_baselines: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, requires = "format")]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[command(flatten)]
    pub task: TaskArgs,
}

/// Parses `args` and runs the command; returns the exit status.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::OK };
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
            } else {
                let _ = write!(out, "{}", e.render());
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Sample(a) => sample(&a, out, err),
        Command::Run(a) => run(&a, out, err),
        Command::Report(a) => report_cmd(&a, out, err),
        Command::Validate(a) => validate(&a, out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

fn sample(a: &SampleArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let preset = a.task.preset()?;
    let adapter = AdapterConfig::for_format(a.format.into());
    let source = load_labeled(&a.data, &adapter, &preset.space)?;
    let plan = SamplePlan { mode: a.mode.into(), k: a.k, seed: a.seed, total: a.total, strict: a.strict };
    let split = plan.apply(&source)?;
    for w in &split.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    let record = SplitRecord::new(plan.mode, a.k, a.seed, a.total, &source, &split);
    write_json(&a.out, &record)?;
    let train = summarize(&split.train);
    let _ = writeln!(out, "wrote {}", a.out.display());
    let _ = writeln!(out, "train: {} examples {:?}", train.size, train.class_counts);
    let _ = writeln!(out, "validation: {} examples", split.validation.len());
    Ok(exit::OK)
}

fn run(a: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let cfg = a.resolve()?;
    cfg.validate()?;
    let (outcomes, aggregate) = execute_all(&cfg, &a.run_root, a.overwrite)?;
    for o in &outcomes {
        for w in &o.manifest.warnings {
            let _ = writeln!(err, "warning: {w}");
        }
        let m = &o.manifest;
        let line = match (&m.metrics, m.best_baseline()) {
            (Some(metrics), Some(best)) => format!(
                "macro_f1 {:.4} accuracy {:.4} (best single template {} {:.4})",
                metrics.classifier.macro_f1, metrics.classifier.accuracy, best.template_id, best.metrics.macro_f1
            ),
            _ => String::new(),
        };
        let _ = writeln!(out, "{}  hash {}  {line}", o.dir.display(), m.hash);
    }
    let _ = writeln!(out, "metrics: {}", aggregate.display());
    Ok(exit::OK)
}

fn report_cmd(a: &ReportArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let (rows, errors) = report::collect(&a.runs, a.with_baselines);
    for e in &errors {
        let _ = writeln!(err, "error: {e}");
    }
    let rows = report::group_and_flag(rows);
    let _ = write!(out, "{}", report::render_text(&rows));
    if let Some(p) = &a.csv {
        let file = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
        report::write_csv(&rows, file)?;
    }
    Ok(if errors.is_empty() { exit::OK } else { exit::DATA })
}

fn validate_data(path: &Path, format: Format, preset: &TaskPreset, out: &mut dyn Write) -> Result<i32> {
    let d = load_labeled(path, &AdapterConfig::for_format(format), &preset.space)?;
    let report = validate_dataset(&d);
    for f in report.errors().chain(report.warnings()) {
        let _ = writeln!(out, "{f}");
    }
    let s = summarize(&d);
    let _ = writeln!(out, "{}: {} examples", path.display(), s.size);
    for (label, p) in &s.class_distribution {
        let _ = writeln!(out, "  {label:<14} {:>6} ({:.3})", s.class_counts[label], p);
    }
    let _ = writeln!(out, "  length p50 {} p90 {} max {}", s.length_p50, s.length_p90, s.length_max);
    Ok(if report.has_errors() { exit::DATA } else { exit::OK })
}

fn validate_task(preset: &TaskPreset, out: &mut dyn Write) -> i32 {
    let probe = MockTokenizer::default();
    let report = validate_verbalizer(&preset.verbalizer, &probe);
    for f in report.errors().chain(report.warnings()) {
        let _ = writeln!(out, "verbalizer: {f}");
    }
    for t in &preset.templates {
        let _ = writeln!(out, "template {:<22} {:?} fixed tokens {}", t.id(), t.kind(), t.fixed_token_count(&probe));
    }
    if report.has_errors() {
        exit::CONFIG
    } else {
        exit::OK
    }
}

fn validate(a: &ValidateArgs, out: &mut dyn Write, _err: &mut dyn Write) -> Result<i32> {
    let mut code = exit::OK;
    if let Some(p) = &a.config {
        let cfg = RunConfig::load(p)?;
        cfg.validate()?;
        let preset = cfg.preset()?;
        code = code.max(validate_task(&preset, out));
        if let Some(d) = &cfg.data {
            code = code.max(validate_data(&d.train, d.format, &preset, out)?);
            code = code.max(validate_data(&d.test, d.format, &preset, out)?);
        }
        let _ = writeln!(out, "{}: configuration ok", p.display());
        return Ok(code);
    }
    let preset = a.task.preset()?;
    code = code.max(validate_task(&preset, out));
    if let (Some(path), Some(format)) = (&a.data, a.format) {
        code = code.max(validate_data(path, format.into(), &preset, out)?);
    }
    Ok(code)
}
