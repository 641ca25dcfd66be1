//! `esg-stack` command-line tool.
//!
//! Exit codes: 0 on success, 2 on a validation error (bad arguments,
//! configuration or input data), 1 on a runtime failure. Log verbosity comes
//! from `ESG_STACK_LOG` (for example `ESG_STACK_LOG=debug`).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use esg_stack::data::{self, Aspect, SentimentClass};
use esg_stack::pipeline::{self, FitOn, PipelineConfig};
use esg_stack::timeline::{self, TimelineFilter};
use esg_stack::{Error, Result};

const LOG_ENV: &str = "ESG_STACK_LOG";

#[derive(Parser, Debug)]
#[command(name = "esg-stack", version, about = "Multi-aspect ESG sentiment stacking toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalOpts {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seeds, comma separated. `split` takes exactly one.
    #[arg(
        long,
        visible_alias = "seed",
        global = true,
        value_delimiter = ',',
        value_name = "SEEDS"
    )]
    seeds: Vec<u64>,
    /// Parallel seed workers for `run`; 0 uses every core.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Output directory. Without it results go to standard output.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stratified split of a labels file into parts.
    Split {
        #[arg(long, value_name = "FILE")]
        labels: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.8,0.2")]
        fractions: Vec<f64>,
    },
    /// Run the full stacking pipeline described by `--config`.
    Run,
    /// Score a predictions file (JSONL probabilities or CSV hard labels).
    Evaluate {
        #[arg(long, value_name = "FILE")]
        pred: PathBuf,
        #[arg(long, value_name = "FILE")]
        gold: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Fleiss' kappa per aspect from an annotations file.
    Agreement {
        #[arg(long, value_name = "FILE")]
        annotations: PathBuf,
        /// Also write per-item category counts to this CSV.
        #[arg(long, value_name = "FILE")]
        counts: Option<PathBuf>,
    },
    /// Per-year sentiment counts per company and aspect.
    Timeline {
        #[arg(long, value_name = "FILE")]
        articles: PathBuf,
        /// Keep only these companies (repeatable).
        #[arg(long = "company", value_name = "NAME")]
        companies: Vec<String>,
        #[arg(long, value_name = "YEAR")]
        from: Option<i32>,
        #[arg(long, value_name = "YEAR")]
        to: Option<i32>,
        /// Print whole-period totals instead of the yearly series.
        #[arg(long)]
        summary: bool,
    },
    /// Majority-class baseline scored on a test labels file.
    Baseline {
        #[arg(long, value_name = "FILE")]
        train: PathBuf,
        #[arg(long, value_name = "FILE")]
        test: PathBuf,
        #[arg(long, value_enum, default_value_t = FitSide::Train)]
        fit_on: FitSide,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Md,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FitSide {
    Train,
    Test,
}

impl From<FitSide> for FitOn {
    fn from(f: FitSide) -> FitOn {
        match f {
            FitSide::Train => FitOn::Train,
            FitSide::Test => FitOn::Test,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let g = cli.global;
    match cli.command {
        Command::Split { labels, fractions } => split(&g, &labels, fractions),
        Command::Run => run(&g),
        Command::Evaluate { pred, gold, format } => evaluate(&g, &pred, &gold, format),
        Command::Agreement { annotations, counts } => agreement(&g, &annotations, counts.as_deref()),
        Command::Timeline {
            articles,
            companies,
            from,
            to,
            summary,
        } => timeline_cmd(
            &g,
            &articles,
            TimelineFilter {
                companies,
                from_year: from,
                to_year: to,
            },
            summary,
        ),
        Command::Baseline { train, test, fit_on } => baseline(&g, &train, &test, fit_on.into()),
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

/// Writes `files` into `--out`, or prints the first one when no directory is given.
fn emit(g: &GlobalOpts, files: &[(&str, String)]) -> Result<()> {
    match &g.out {
        Some(dir) => {
            for (name, text) in files {
                let path = dir.join(name);
                data::write_text(&path, text)?;
                log::info!("wrote {}", path.display());
            }
        }
        None => print!("{}", files[0].1),
    }
    Ok(())
}

fn to_json(value: &serde_json::Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn split(g: &GlobalOpts, labels: &Path, fractions: Vec<f64>) -> Result<()> {
    let seed = match g.seeds.as_slice() {
        [] => 0,
        [s] => *s,
        many => return Err(invalid(format!("split takes one seed, got {many:?}"))),
    };
    let labels = data::read_labels(labels)?;
    let splits = pipeline::split_labels(&labels, fractions, seed)?;
    let sizes: Vec<usize> = splits.parts.iter().map(Vec::len).collect();
    log::info!("split {} documents into parts of {sizes:?}", labels.len());
    emit(g, &[("splits.json", serde_json::to_string_pretty(&splits)? + "\n")])
}

fn run(g: &GlobalOpts) -> Result<()> {
    let path = g.config.as_ref().ok_or_else(|| invalid("run needs --config"))?;
    let mut cfg = PipelineConfig::load(path)?;
    if !g.seeds.is_empty() {
        cfg.seeds = g.seeds.clone();
    }
    if let Some(jobs) = g.jobs {
        cfg.jobs = jobs;
    }
    if let Some(out) = &g.out {
        let abs = if out.is_absolute() {
            out.clone()
        } else {
            std::env::current_dir()
                .map_err(|e| invalid(format!("working directory: {e}")))?
                .join(out)
        };
        cfg.output_dir = abs.to_string_lossy().into_owned();
    }
    let outcome = pipeline::run_pipeline(&cfg)?;
    println!("{}", outcome.report_path.display());
    Ok(())
}

fn evaluate(g: &GlobalOpts, pred: &Path, gold: &Path, format: Format) -> Result<()> {
    let report = pipeline::evaluate_files(pred, gold)?;
    let json = report.to_json()?;
    let md = report.to_markdown();
    match format {
        Format::Json => emit(g, &[(pipeline::REPORT_FILE, json), (pipeline::MARKDOWN_FILE, md)]),
        Format::Md => emit(g, &[(pipeline::MARKDOWN_FILE, md), (pipeline::REPORT_FILE, json)]),
    }
}

fn agreement(g: &GlobalOpts, annotations: &Path, counts: Option<&Path>) -> Result<()> {
    let anns = data::read_annotations(annotations)?;
    let report = pipeline::agreement_report(&anns);
    if let Some(path) = counts {
        data::write_text(path, &report.counts_csv()?)?;
    }
    let text = to_json(&json!({ "aspects": report.aspects }))?;
    emit(g, &[("agreement.json", text)])
}

fn timeline_cmd(g: &GlobalOpts, articles: &Path, filter: TimelineFilter, summary: bool) -> Result<()> {
    let articles = data::read_articles(articles)?;
    let series = timeline::build_timelines(&articles, &filter)?;
    if series.is_empty() {
        log::warn!("no article matches the filter");
    }
    let yearly = timeline::timelines_to_csv(&series)?;
    let totals = timeline::summary_to_csv(&timeline::summary_table(&series))?;
    if summary {
        emit(g, &[("summary.csv", totals), ("timeline.csv", yearly)])
    } else {
        emit(g, &[("timeline.csv", yearly), ("summary.csv", totals)])
    }
}

fn baseline(g: &GlobalOpts, train: &Path, test: &Path, fit_on: FitOn) -> Result<()> {
    let train = data::read_labels(train)?;
    let test = data::read_labels(test)?;
    let (fit, report) = pipeline::majority_report(&train, &test, fit_on)?;
    let classes: serde_json::Map<String, serde_json::Value> = Aspect::ALL
        .iter()
        .zip(fit.classes)
        .map(|(a, c)| {
            let class = SentimentClass::from_index(c).expect("class index");
            (a.to_string(), json!(class))
        })
        .collect();
    let text = to_json(&json!({ "fit_on": fit_on, "classes": classes, "report": report }))?;
    let mut preds = Vec::new();
    data::write_labels_to(&mut preds, &pipeline::majority_labels(&fit, &test))
        .map_err(|e| invalid(format!("predictions buffer: {e}")))?;
    let preds = String::from_utf8(preds).map_err(|e| invalid(e.to_string()))?;
    emit(g, &[("baseline.json", text), ("majority_predictions.csv", preds)])
}
