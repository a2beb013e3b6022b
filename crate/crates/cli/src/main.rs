use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use comvt::data::write_jsonl;
use comvt::harness::{
    configured_vocab, estimate_flops, evaluate, load_eval_data, load_params, load_run_data, run_gradcheck,
    segment_file, synthetic_splits, train, RunConfig,
};
use comvt::heads::build_model;
use comvt::{Error, ErrorKind};
use serde_json::json;

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "comvt", version, about = "Future-utterance prediction with a co-attentional video transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cut transcripts into context/future examples with candidate pools
    Segment(Common),
    /// Write the synthetic benchmark (train and eval splits)
    Synth(Common),
    /// Train a model and write checkpoint, vocabulary and report
    Train(Common),
    /// Recall@1/5 of a trained model on the evaluation set
    Eval(Common),
    /// Analytic multiply-accumulate counts with and without compact extraction
    Flops(Common),
    /// Compare analytic gradients against finite differences
    Gradcheck(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Run(Error),
    /// Already reported; exit with this code.
    Exit(u8),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type Outcome = Result<(), Failure>;

impl Common {
    fn load(&self) -> Result<RunConfig, Failure> {
        let mut config = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }

    fn out_dir(&self, command: &str) -> Result<&Path, Failure> {
        let dir = self
            .out
            .as_deref()
            .ok_or_else(|| Failure::Usage(format!("`{command}` needs --out DIR")))?;
        fs::create_dir_all(dir).map_err(Error::from)?;
        Ok(dir)
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{value}");
}

fn segment(args: &Common) -> Outcome {
    let config = args.load()?;
    let out = args.out_dir("segment")?;
    let transcripts = config
        .data
        .transcripts
        .as_deref()
        .ok_or_else(|| Failure::Usage("`segment` needs data.transcripts in the config".into()))?;
    config.check_paths()?;
    let (examples, candidates) = segment_file(&config, transcripts)?;
    let examples_path = out.join("examples.jsonl");
    let candidates_path = out.join("candidates.jsonl");
    write_jsonl(&examples_path, &examples)?;
    write_jsonl(&candidates_path, &candidates)?;
    print_json(&json!({
        "examples": examples.len(),
        "examples_file": examples_path,
        "candidates_file": candidates_path,
    }));
    Ok(())
}

fn synth(args: &Common) -> Outcome {
    let config = args.load()?;
    let out = args.out_dir("synth")?;
    let (train_set, eval_set) = synthetic_splits(&config)?;
    let train_files = train_set.write(out, "train")?;
    let eval_files = eval_set.write(out, "eval")?;
    print_json(&json!({
        "train_examples": train_files.examples,
        "train_candidates": train_files.candidates,
        "eval_examples": eval_files.examples,
        "eval_candidates": eval_files.candidates,
    }));
    Ok(())
}

fn train_cmd(args: &Common) -> Outcome {
    let config = args.load()?;
    let (train_set, eval_set) = load_run_data(&config)?;
    let vocab = configured_vocab(&config)?;
    let outcome = train(&config, &train_set, eval_set.as_ref(), vocab, args.out.as_deref())?;
    let last = outcome.report.losses.last();
    print_json(&json!({
        "variant": outcome.report.variant,
        "steps": config.steps,
        "final_loss": last.map(|l| l.total),
        "r_at_1": outcome.final_eval.as_ref().map(|r| r.r_at_1),
        "r_at_5": outcome.final_eval.as_ref().map(|r| r.r_at_5),
        "steps_per_second": outcome.report.steps_per_second,
    }));
    Ok(())
}

fn eval_cmd(args: &Common) -> Outcome {
    let config = args.load()?;
    let (Some(checkpoint), Some(_)) = (&config.data.checkpoint, &config.data.vocab) else {
        return Err(Failure::Usage("`eval` needs data.checkpoint and data.vocab in the config".into()));
    };
    let data = load_eval_data(&config)?;
    let vocab = configured_vocab(&config)?.expect("vocab path checked above");
    let mut model = build_model(&config.model, vocab.len(), config.seed)?;
    load_params(&mut model.params, checkpoint)?;
    let mut report = evaluate(&model, &vocab, &data)?;
    if let Some(out) = &args.out {
        fs::create_dir_all(out).map_err(Error::from)?;
        let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
        fs::write(out.join("eval.json"), text).map_err(Error::from)?;
    }
    report.ranks.clear();
    let mut value = serde_json::to_value(&report).map_err(Error::from)?;
    value["variant"] = json!(config.model.variant);
    print_json(&value);
    Ok(())
}

fn flops(args: &Common) -> Outcome {
    let config = args.load()?;
    let report = estimate_flops(&config.model);
    print_json(&serde_json::to_value(report).map_err(Error::from)?);
    Ok(())
}

fn gradcheck(args: &Common) -> Outcome {
    let config = args.load()?;
    let report = run_gradcheck(&config)?;
    print_json(&serde_json::to_value(&report).map_err(Error::from)?);
    if report.max_rel_error >= GRADCHECK_TOLERANCE || !report.max_rel_error.is_finite() {
        eprintln!(
            "gradient check failed: max relative error {:e} >= {GRADCHECK_TOLERANCE:e}",
            report.max_rel_error
        );
        return Err(Failure::Exit(3));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Segment(a) => segment(a),
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Flops(a) => flops(a),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Exit(code)) => ExitCode::from(code),
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numeric => 3,
            })
        }
    }
}
