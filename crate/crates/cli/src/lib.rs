//! Command-line front end: audit reports, mitigation pipelines, plot data
//! and synthetic datasets.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use fairaudit::data::CsvSchema;
use fairaudit::{apply_policy, CsvTable, Dataset, Error, Group, PredictionSet, Result, ThresholdPolicy, ThresholdRule};

pub mod mitigate;
pub mod plot;
pub mod report;

/// Version of the JSON documents written by this tool.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "fairaudit", version, about = "Group and individual fairness audits for binary classifiers")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Md,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Sensitive attribute column (0/1).
    #[arg(long, global = true, default_value = "s")]
    pub s_col: String,
    /// Outcome column (0/1).
    #[arg(long, global = true, default_value = "y")]
    pub y_col: String,
    /// Score column in [0, 1]; `score` is used when present.
    #[arg(long, global = true)]
    pub score_col: Option<String>,
    /// Record weight column; `w` is used when present.
    #[arg(long, global = true)]
    pub weight_col: Option<String>,
    /// Feature columns (default: every column not otherwise mapped).
    #[arg(long, global = true, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    /// Legitimate factors for conditional parity.
    #[arg(long, global = true, value_delimiter = ',')]
    pub legitimate: Vec<String>,
    /// Column of precomputed decisions (0/1 or acceptance probabilities).
    #[arg(long, global = true)]
    pub prediction_col: Option<String>,
    /// Shared decision threshold: accept when score > threshold.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// Group-specific threshold, e.g. `1=0.55`; repeatable.
    #[arg(long = "threshold-by-group", global = true, value_parser = parse_group_threshold)]
    pub threshold_by_group: Vec<(Group, f64)>,
    /// Tolerance for pass/fail flags.
    #[arg(long, global = true, default_value_t = 0.05)]
    pub epsilon: f64,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

fn parse_group_threshold(s: &str) -> std::result::Result<(Group, f64), String> {
    let (g, t) = s.split_once('=').ok_or_else(|| format!("expected g=t, got `{s}`"))?;
    let g = match g.trim() {
        "0" => Group::Zero,
        "1" => Group::One,
        other => return Err(format!("group must be 0 or 1, got `{other}`")),
    };
    let t: f64 = t.trim().parse().map_err(|_| format!("`{t}` is not a number"))?;
    Ok((g, t))
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute group, independence and individual fairness measures.
    Audit(report::AuditArgs),
    /// Apply a bias-mitigation method and report metrics before and after.
    Mitigate(mitigate::MitigateArgs),
    /// Write plot data (CSV) and a static SVG.
    Plot(plot::PlotArgs),
    /// Generate a seeded synthetic dataset.
    Synth(plot::SynthArgs),
    /// Check a CSV against the schema and summarize it.
    Validate(plot::ValidateArgs),
}

impl GlobalArgs {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            s_col: self.s_col.clone(),
            y_col: self.y_col.clone(),
            score_col: self.score_col.clone(),
            weight_col: self.weight_col.clone(),
            feature_cols: self.features.clone(),
            prediction_col: self.prediction_col.clone(),
            legitimate_cols: self.legitimate.clone(),
            ..CsvSchema::default()
        }
    }

    /// Threshold policy from `--threshold` and `--threshold-by-group`.
    pub fn threshold_policy(&self) -> Result<Option<ThresholdPolicy>> {
        if self.threshold.is_none() && self.threshold_by_group.is_empty() {
            return Ok(None);
        }
        let mut policy = self.threshold.map(ThresholdPolicy::shared).unwrap_or_default();
        for &(g, t) in &self.threshold_by_group {
            policy.set(g, ThresholdRule::deterministic(t));
        }
        for g in Group::BOTH {
            if let Some(rule) = policy.rule(g) {
                rule.validate()?;
            }
        }
        Ok(Some(policy))
    }
}

/// A CSV file together with its parsed dataset and content digest.
pub struct Input {
    pub path: PathBuf,
    pub sha256: String,
    pub table: CsvTable,
    pub dataset: Dataset,
}

impl Input {
    pub fn load(path: &Path, global: &GlobalArgs) -> Result<Input> {
        let bytes = std::fs::read(path)?;
        let table = CsvTable::from_reader(bytes.as_slice())?;
        let dataset = table.to_dataset(&global.schema())?;
        Ok(Input {
            path: path.to_path_buf(),
            sha256: format!("{:x}", Sha256::digest(&bytes)),
            table,
            dataset,
        })
    }

    pub fn file_name(&self) -> String {
        self.path
            .file_name()
            .map_or_else(|| self.path.display().to_string(), |f| f.to_string_lossy().into_owned())
    }
}

/// How decisions were obtained.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum PolicySource {
    Thresholds { policy: ThresholdPolicy },
    PredictionColumn { column: String },
}

/// Decisions from the prediction column if given, else from the thresholds.
pub fn decisions(global: &GlobalArgs, input: &Input) -> Result<Option<(PolicySource, PredictionSet)>> {
    if let Some(col) = &global.prediction_col {
        let pred = input.table.predictions(col)?;
        return Ok(Some((PolicySource::PredictionColumn { column: col.clone() }, pred)));
    }
    match global.threshold_policy()? {
        Some(policy) => {
            let pred = apply_policy(&input.dataset, &policy)?;
            Ok(Some((PolicySource::Thresholds { policy }, pred)))
        }
        None => Ok(None),
    }
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Exit status for a failed command: 2 for bad input, 3 when the data
/// cannot support the computation.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_input_error() {
        2
    } else {
        3
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Audit(args) => report::run(&cli.global, args),
        Command::Mitigate(args) => mitigate::run(&cli.global, args),
        Command::Plot(args) => plot::run_plot(&cli.global, args),
        Command::Synth(args) => plot::run_synth(&cli.global, args),
        Command::Validate(args) => plot::run_validate(&cli.global, args),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(format!("{:x}", Sha256::digest(std::fs::read(path)?)))
}
