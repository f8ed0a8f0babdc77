//! `plot`, `synth` and `validate`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use fairaudit::rocstats::{roc_curve, roc_svg, RocCurve};
use fairaudit::synth::{credit_spec, penalty_benchmark, sample_scores, BetaSpec};
use fairaudit::{validate, Dataset, Error, Group, Result};

use crate::{write_json, Format, GlobalArgs, Input, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Roc,
    ScoreHist,
    RocByGroup,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub kind: PlotKind,
    /// Output prefix: writes `<prefix>.csv` and `<prefix>.svg`.
    #[arg(long)]
    pub output: PathBuf,
    /// Histogram bins on [0, 1].
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
}

/// Weighted score counts per group in `bins` equal-width bins on [0, 1].
pub fn histogram(d: &Dataset, bins: usize) -> Result<Vec<[f64; 2]>> {
    if bins == 0 {
        return Err(Error::invalid("need at least one bin"));
    }
    let scores = d.scores()?;
    let mut counts = vec![[0.0; 2]; bins];
    for (r, m) in d.records().iter().zip(scores) {
        let b = ((m * bins as f64) as usize).min(bins - 1);
        counts[b][r.s.index()] += r.weight;
    }
    Ok(counts)
}

pub fn histogram_svg(counts: &[[f64; 2]]) -> String {
    const W: f64 = 400.0;
    const H: f64 = 300.0;
    const COLORS: [&str; 2] = ["#1f77b4", "#d62728"];
    let top = counts.iter().flatten().cloned().fold(0.0, f64::max).max(1e-300);
    let bw = W / counts.len() as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r##"<rect x="0" y="0" width="{W}" height="{H}" fill="none" stroke="#000"/>"##);
    for (b, c) in counts.iter().enumerate() {
        for g in 0..2 {
            let h = c[g] / top * H;
            let _ = writeln!(
                svg,
                r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{}" fill-opacity="0.8"><title>s={g}: {}</title></rect>"#,
                b as f64 * bw + g as f64 * bw / 2.0,
                H - h,
                bw / 2.0,
                h,
                COLORS[g],
                c[g]
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn curve_csv(curves: &[(&str, &RocCurve)]) -> String {
    let mut out = String::from("curve,fpr,tpr,threshold\n");
    for (name, c) in curves {
        for (x, y, t) in c.rates() {
            let _ = writeln!(out, "{name},{x},{y},{t}");
        }
    }
    out
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut p = prefix.as_os_str().to_owned();
    p.push(".");
    p.push(ext);
    PathBuf::from(p)
}

pub fn run_plot(global: &GlobalArgs, args: &PlotArgs) -> Result<()> {
    let input = Input::load(&args.data, global)?;
    let d = &input.dataset;
    let (csv, svg) = match args.kind {
        PlotKind::Roc => {
            let c = roc_curve(d, None)?;
            let mut buf = Vec::new();
            c.write_csv(&mut buf)?;
            (String::from_utf8_lossy(&buf).into_owned(), roc_svg(&[("all", &c)]))
        }
        PlotKind::RocByGroup => {
            let c0 = roc_curve(d, Some(Group::Zero))?;
            let c1 = roc_curve(d, Some(Group::One))?;
            let curves = [("s=0", &c0), ("s=1", &c1)];
            (curve_csv(&curves), roc_svg(&curves))
        }
        PlotKind::ScoreHist => {
            let counts = histogram(d, args.bins)?;
            let mut csv = String::from("lower,upper,s0,s1,total\n");
            let k = counts.len() as f64;
            for (b, c) in counts.iter().enumerate() {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    b as f64 / k,
                    (b + 1) as f64 / k,
                    c[0],
                    c[1],
                    c[0] + c[1]
                );
            }
            (csv, histogram_svg(&counts))
        }
    };
    std::fs::write(with_ext(&args.output, "csv"), csv)?;
    std::fs::write(with_ext(&args.output, "svg"), svg)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Beta-distributed scores matching a credit-screening operating point.
    Credit,
    /// Uniform scores in every cell.
    Uniform,
    /// Five normal features with a shifted first feature; no scores.
    Benchmark,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = Preset::Credit)]
    pub preset: Preset,
    /// JSON score specification (`cells[y][s]` of alpha, beta, probability);
    /// overrides the preset.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Output CSV; the generator settings go to `<output>.json`.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSidecar {
    pub schema_version: u32,
    pub preset: Option<Preset>,
    pub spec: Option<BetaSpec>,
    pub n: usize,
    pub seed: u64,
    pub generator: String,
}

/// CSV with `s`, `y`, the features, and `score` / `w` when present.
pub fn dataset_csv(d: &Dataset) -> String {
    let weighted = d.records().iter().any(|r| r.weight != 1.0);
    let mut header: Vec<String> = vec!["s".into(), "y".into()];
    header.extend(d.feature_names().iter().cloned());
    if d.has_scores() {
        header.push("score".into());
    }
    if weighted {
        header.push("w".into());
    }
    let mut out = header.join(",");
    out.push('\n');
    for r in d.records() {
        let mut row = vec![r.s.index().to_string(), u8::from(r.y).to_string()];
        row.extend(r.features.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }));
        if let Some(m) = r.score {
            row.push(m.to_string());
        }
        if weighted {
            row.push(r.weight.to_string());
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn run_synth(global: &GlobalArgs, args: &SynthArgs) -> Result<()> {
    let (preset, spec) = match &args.spec {
        Some(path) => {
            let spec: BetaSpec = serde_json::from_slice(&std::fs::read(path)?)?;
            (None, Some(spec))
        }
        None => match args.preset {
            Preset::Credit => (Some(Preset::Credit), Some(credit_spec())),
            Preset::Uniform => (
                Some(Preset::Uniform),
                Some(BetaSpec::symmetric((1.0, 1.0), (1.0, 1.0), 0.5, 0.5)),
            ),
            Preset::Benchmark => (Some(Preset::Benchmark), None),
        },
    };
    let d = match &spec {
        Some(spec) => sample_scores(spec, args.n, global.seed)?,
        None => penalty_benchmark(args.n, global.seed)?,
    };
    std::fs::write(&args.output, dataset_csv(&d))?;
    write_json(
        &with_ext(&args.output, "json"),
        &SynthSidecar {
            schema_version: SCHEMA_VERSION,
            preset,
            spec,
            n: args.n,
            seed: global.seed,
            generator: "splitmix64".into(),
        },
    )
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    pub data: PathBuf,
}

pub fn run_validate(global: &GlobalArgs, args: &ValidateArgs) -> Result<()> {
    let input = Input::load(&args.data, global)?;
    let v = validate(&input.dataset);
    match global.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&v)?),
        Format::Md => {
            println!("# Validation: `{}`\n", input.file_name());
            println!("- records: {}", v.records);
            println!("- group sizes: s=0 {}, s=1 {}", v.group_sizes[0], v.group_sizes[1]);
            for m in &v.missing_features {
                println!("- missing values in `{}`: {}", m.column, m.count);
            }
            for w in &v.warnings {
                println!("- warning: {w}");
            }
        }
    }
    Ok(())
}
