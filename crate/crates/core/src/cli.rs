//! Command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input, 3 file system failure, 4 numeric failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::dsl::{parse_rule_file, NameTable};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::io::{
    load_model, read_corpus, read_json, read_text, resolve_names, save_model, write_atomic, write_corpus, write_json,
    IntensityTrace, RunConfig,
};
use crate::mining::mine;
use crate::model::RuleSet;
use crate::simulation::{ScenarioSpec, Simulator};
use crate::training::fit;

#[derive(Debug, Parser)]
#[command(name = "hrtpp", version, about = "Rule-augmented temporal point processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a corpus from a scenario (TOML, or JSON by extension).
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        /// Directory receiving corpus.jsonl, manifest.json and truth.rules.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit rule weights to a corpus.
    Fit {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter predicates, generate candidates and search rule subsets.
    Mine {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Winning rules with weights; defaults to the report path with a `.rules` extension.
        #[arg(long)]
        rules_out: Option<PathBuf>,
    },
    /// Sample the intensity of one sequence.
    Trace {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        seq: usize,
        #[arg(long)]
        out: PathBuf,
        /// Grid step; defaults to horizon / 2000.
        #[arg(long)]
        dt: Option<f64>,
        /// Trigger and event markers; defaults to `<out stem>.annotations.csv`.
        #[arg(long)]
        annotations: Option<PathBuf>,
    },
    /// Held-out NLL, RMSE and rule accuracy.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-sequence rows as CSV.
        #[arg(long)]
        details: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn load_spec(path: &Path) -> Result<ScenarioSpec> {
    if path.extension().is_some_and(|e| e == "json") {
        read_json(path).map_err(|e| Error::InvalidScenario(e.to_string()))
    } else {
        toml::from_str(&read_text(path)?).map_err(|e| Error::InvalidScenario(e.to_string()))
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn load_rules(path: &Path, names: &NameTable, target: u32, max_predicates: usize) -> Result<RuleSet> {
    let lines = parse_rule_file(&read_text(path)?, names, max_predicates)?;
    let mut set = RuleSet::unbounded(target);
    for l in lines {
        if l.rule.target() != target {
            return Err(Error::InvalidRule(format!(
                "line {}: rule concludes type {}, corpus target is {target}",
                l.line,
                l.rule.target()
            )));
        }
        if !set.insert(l.rule)? {
            log::warn!("line {}: duplicate rule ignored", l.line);
        }
    }
    Ok(set)
}

fn run_command(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { spec, out } => {
            let spec = load_spec(&spec)?;
            let sim = Simulator::new(&spec)?;
            let corpus = sim.corpus()?;
            let manifest = sim.manifest()?;
            write_corpus(&out.join("corpus.jsonl"), &corpus)?;
            write_json(&out.join("manifest.json"), &manifest)?;
            let mut truth = manifest.true_rules.join("\n");
            if !truth.is_empty() {
                truth.push('\n');
            }
            write_atomic(&out.join("truth.rules"), truth.as_bytes())?;
            println!("wrote {} sequences to {}", corpus.len(), out.display());
        }
        Command::Fit {
            corpus,
            rules,
            config,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let data = read_corpus(&corpus)?;
            let first = data.first().ok_or(Error::EmptyCorpus)?;
            let names = resolve_names(cfg.paths.manifest.as_deref(), &corpus, first.num_types())?;
            let set = load_rules(&rules, &names, first.target_type(), cfg.model.max_predicates)?;
            let model = fit(&data, &set, &cfg.model_options(), &cfg.fit_config())?;
            save_model(&out, &model, &names)?;
            println!("train_nll = {}", model.train_nll);
            println!("epochs = {}", model.epochs_run);
        }
        Command::Mine {
            corpus,
            config,
            out,
            rules_out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let data = read_corpus(&corpus)?;
            let first = data.first().ok_or(Error::EmptyCorpus)?;
            let names = resolve_names(cfg.paths.manifest.as_deref(), &corpus, first.num_types())?;
            let report = mine(
                &data,
                &cfg.model_options(),
                &cfg.fit_config(),
                &cfg.mining,
                cfg.model.max_predicates,
            )?;
            if report.best_rules().is_empty() {
                log::warn!("no rules mined; the result is rule-free");
                eprintln!("warning: empty rule set after filtering");
            }
            write_json(&out, &report.to_document(&names)?)?;
            let rules_path = rules_out.unwrap_or_else(|| out.with_extension("rules"));
            write_atomic(&rules_path, report.rules_text(&names)?.as_bytes())?;
            println!(
                "evaluations = {} cache_hit_rate = {:.3}",
                report.evaluations.len(),
                report.cache_hit_rate()
            );
            print!("{}", report.rules_text(&names)?);
        }
        Command::Trace {
            model,
            corpus,
            seq,
            out,
            dt,
            annotations,
        } => {
            let (model, names) = load_model(&model)?;
            let data = read_corpus(&corpus)?;
            let s = data.get(seq).ok_or(Error::IndexOutOfRange {
                index: seq,
                len: data.len(),
            })?;
            let trace = IntensityTrace::compute(&model, s, dt)?;
            write_atomic(&out, trace.rows_csv(&model, &names)?.as_bytes())?;
            let ann = annotations.unwrap_or_else(|| sibling(&out, ".annotations.csv"));
            write_atomic(&ann, trace.annotations_csv(&model, &names)?.as_bytes())?;
        }
        Command::Evaluate {
            model,
            corpus,
            truth,
            out,
            details,
        } => {
            let (model, names) = load_model(&model)?;
            let data = read_corpus(&corpus)?;
            let truth = truth
                .map(|p| load_rules(&p, &names, model.target_type, usize::MAX))
                .transpose()?;
            let report = evaluate(&model, &data, truth.as_ref())?;
            write_json(&out, &report)?;
            if let Some(d) = details {
                write_atomic(&d, report.details_csv()?.as_bytes())?;
            }
            print!("{}", report.table("HRTPP"));
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run_command(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}
