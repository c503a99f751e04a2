//! Command-line surface: `train` runs the simulator and writes run artifacts,
//! `score` applies the reliability metrics to external trajectory logs, and
//! `compare` computes the rejection success rate between two runs.
//!
//! Exit codes: 0 success, 2 configuration or input-format error, 3 runtime
//! failure. All output files live under the command's `--out` directory and start
//! with a versioned schema line; re-running with identical inputs and seeds
//! rewrites identical bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, RunConfig};
use crate::metrics::{
    classify, failure_set, macro_average, refusal_set, rejection_success_rate, report,
    write_report_csv, DatasetReport, MetricsError, QuestionAttempts, ReliabilityReport, Verdict,
};
use crate::sim::{train, QuestionEval, StepRecord, ToyAgentPolicy, TrainOutput};
use crate::trajectory::{extract_answer, normalize_answer, parse_trajectory, read_trajectory_log};

pub const RUN_SCHEMA: &str = "bapo.run.v1";
pub const TIMELINE_SCHEMA: &str = "# bapo.timeline.v1";
pub const POLICY_SCHEMA: &str = "bapo.policy.v1";
pub const EVAL_SCHEMA: &str = "bapo.eval.v1";
pub const REPORT_SCHEMA: &str = "bapo.report.v1";
pub const PASSK_SCHEMA: &str = "# bapo.passk.v1";

pub const EVAL_DUMP_FILE: &str = "eval_best_of_5.jsonl";
const BEST_OF_N: usize = 5;

#[derive(Debug, Parser)]
#[command(
    name = "bapo",
    about = "Boundary-aware policy optimization for agentic search: simulator training, trajectory scoring, run comparison"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train (or evaluate) the toy agent in the synthetic environment.
    Train {
        /// JSON run configuration; `{}` selects all defaults.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for run artifacts.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an external trajectory log against gold answers.
    Score {
        /// JSONL of {id, question, gold_answers, trajectory_text}.
        #[arg(long)]
        trajectories: PathBuf,
        /// JSONL of {id, gold_answers, dataset?}.
        #[arg(long)]
        golds: PathBuf,
        /// Output directory for report.csv / report.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rejection success rate and metric deltas between two run directories.
    Compare {
        /// Run directory of the refusing model.
        #[arg(long)]
        a: PathBuf,
        /// Run directory of the baseline model.
        #[arg(long)]
        b: PathBuf,
    },
}

/// Errors mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or malformed input: exit 2.
    Input(String),
    /// Everything else: exit 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(err: ConfigError) -> Self {
        match err {
            ConfigError::Io(e) => CliError::Input(format!("config: {e}")),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(err: MetricsError) -> Self {
        CliError::Runtime(err.to_string())
    }
}

/// Dispatch a parsed command.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, seed, out } => cmd_train(&config, seed, &out),
        Command::Score {
            trajectories,
            golds,
            out,
        } => cmd_score(&trajectories, &golds, &out),
        Command::Compare { a, b } => cmd_compare(&a, &b),
    }
}

#[derive(Serialize)]
struct SchemaHeader<'a> {
    schema: &'a str,
}

#[derive(Serialize)]
struct EvalHeader<'a> {
    schema: &'a str,
    attempts: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct PolicyFile {
    schema: String,
    #[serde(flatten)]
    policy: ToyAgentPolicy,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportFile {
    schema: String,
    datasets: Vec<DatasetReport>,
    #[serde(rename = "macro")]
    macro_report: ReliabilityReport,
    #[serde(default)]
    skipped: usize,
    #[serde(default)]
    unmatched: usize,
}

fn cmd_train(config_path: &Path, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(seed) = seed {
        config.run.seed = seed;
    }
    config.validate()?;

    let output = train(&config).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::create_dir_all(out)?;
    write_run_jsonl(&out.join("run.jsonl"), &output.steps)?;
    write_timeline_csv(&out.join("timeline.csv"), &output.steps)?;
    write_policy_json(&out.join("policy.json"), &output.policy)?;
    write_eval_dump(&out.join(EVAL_DUMP_FILE), &output, config.run.eval_attempts)?;
    write_passk_csv(&out.join("passk.csv"), &output.eval.pass_at_k)?;

    let datasets = vec![DatasetReport {
        dataset: "simulator-test".into(),
        report: output.eval.report,
    }];
    let macro_report = macro_average(&datasets)?;
    write_reports(out, datasets, macro_report, 0, 0)?;

    let r = &output.eval.report;
    println!(
        "mode={} steps={} plateau_at={} | test acc={:.3} prec={:.3} idk_rate={:.3} reliability={:.3}",
        config.run.mode,
        output.steps.len(),
        output
            .plateau_transition
            .map_or("never".to_string(), |s| s.to_string()),
        r.acc,
        r.prec,
        r.idk_rate,
        r.reliability,
    );
    Ok(())
}

fn write_run_jsonl(path: &Path, steps: &[StepRecord]) -> Result<(), CliError> {
    let mut writer = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut writer, &SchemaHeader { schema: RUN_SCHEMA })
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    writer.write_all(b"\n")?;
    for step in steps {
        serde_json::to_writer(&mut writer, step).map_err(|e| CliError::Runtime(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

fn write_timeline_csv(path: &Path, steps: &[StepRecord]) -> Result<(), CliError> {
    let mut writer = BufWriter::new(File::create(path)?);
    writeln!(writer, "{TIMELINE_SCHEMA}")?;
    writeln!(writer, "step,stage,mean_r_correct,mean_r_idk,idk_ratio,val_acc")?;
    for s in steps {
        writeln!(
            writer,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            s.step, s.stage, s.mean_r_correct, s.mean_r_idk, s.batch_idk_ratio, s.val_acc
        )?;
    }
    Ok(())
}

fn write_policy_json(path: &Path, policy: &ToyAgentPolicy) -> Result<(), CliError> {
    let file = PolicyFile {
        schema: POLICY_SCHEMA.into(),
        policy: policy.clone(),
    };
    let mut writer = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut writer, &file)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    writer.write_all(b"\n")?;
    Ok(())
}

fn write_eval_dump(path: &Path, output: &TrainOutput, attempts: usize) -> Result<(), CliError> {
    let mut writer = BufWriter::new(File::create(path)?);
    serde_json::to_writer(
        &mut writer,
        &EvalHeader {
            schema: EVAL_SCHEMA,
            attempts,
        },
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    writer.write_all(b"\n")?;
    for question in &output.eval.questions {
        serde_json::to_writer(&mut writer, question)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

fn write_passk_csv(path: &Path, curve: &[(usize, f64)]) -> Result<(), CliError> {
    let mut writer = BufWriter::new(File::create(path)?);
    writeln!(writer, "{PASSK_SCHEMA}")?;
    writeln!(writer, "k,pass_rate")?;
    for (k, rate) in curve {
        writeln!(writer, "{k},{rate:.6}")?;
    }
    Ok(())
}

fn write_reports(
    out: &Path,
    datasets: Vec<DatasetReport>,
    macro_report: ReliabilityReport,
    skipped: usize,
    unmatched: usize,
) -> Result<(), CliError> {
    let mut csv = BufWriter::new(File::create(out.join("report.csv"))?);
    write_report_csv(&mut csv, &datasets, &macro_report)?;

    let file = ReportFile {
        schema: REPORT_SCHEMA.into(),
        datasets,
        macro_report,
        skipped,
        unmatched,
    };
    let mut writer = BufWriter::new(File::create(out.join("report.json"))?);
    serde_json::to_writer_pretty(&mut writer, &file)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// One line of the gold-answers file.
#[derive(Debug, Deserialize)]
struct GoldRecord {
    id: String,
    gold_answers: Vec<String>,
    #[serde(default)]
    dataset: Option<String>,
}

fn cmd_score(trajectories: &Path, golds: &Path, out: &Path) -> Result<(), CliError> {
    let gold_file = File::open(golds)
        .map_err(|e| CliError::Input(format!("cannot open gold file {}: {e}", golds.display())))?;
    let mut gold_map: BTreeMap<String, (Vec<String>, String)> = BTreeMap::new();
    for (line_no, line) in BufReader::new(gold_file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: GoldRecord = serde_json::from_str(&line).map_err(|e| {
            CliError::Input(format!("malformed gold file line {}: {e}", line_no + 1))
        })?;
        if record.gold_answers.is_empty() {
            return Err(CliError::Input(format!(
                "gold record {} has no answers",
                record.id
            )));
        }
        let normalized = record
            .gold_answers
            .iter()
            .map(|g| normalize_answer(g))
            .collect();
        gold_map.insert(
            record.id,
            (normalized, record.dataset.unwrap_or_else(|| "default".into())),
        );
    }
    if gold_map.is_empty() {
        return Err(CliError::Input("gold file holds no records".into()));
    }

    let log_file = File::open(trajectories).map_err(|e| {
        CliError::Input(format!(
            "cannot open trajectory file {}: {e}",
            trajectories.display()
        ))
    })?;
    let ingest = read_trajectory_log(BufReader::new(log_file))?;

    let mut unmatched = 0usize;
    let mut by_dataset: BTreeMap<String, Vec<Verdict>> = BTreeMap::new();
    for record in &ingest.records {
        let Some((gold_answers, dataset)) = gold_map.get(&record.id) else {
            unmatched += 1;
            continue;
        };
        // Unparseable or box-less trajectories gave no usable answer: count as wrong.
        let verdict = match parse_trajectory(&record.trajectory_text) {
            Ok(trajectory) => match extract_answer(&trajectory) {
                Ok(answer) => classify(&answer, gold_answers),
                Err(_) => Verdict::Wrong,
            },
            Err(_) => Verdict::Wrong,
        };
        by_dataset.entry(dataset.clone()).or_default().push(verdict);
    }
    if by_dataset.is_empty() {
        return Err(CliError::Input(
            "no trajectory ids match the gold file".into(),
        ));
    }

    let datasets = by_dataset
        .into_iter()
        .map(|(dataset, verdicts)| {
            report(&verdicts).map(|report| DatasetReport { dataset, report })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let macro_report = macro_average(&datasets)?;

    std::fs::create_dir_all(out)?;
    write_reports(out, datasets, macro_report, ingest.skipped, unmatched)?;

    println!(
        "scored={} skipped={} unmatched={} | macro acc={:.3} prec={:.3} idk_rate={:.3} reliability={:.3}",
        macro_report.counts.n,
        ingest.skipped,
        unmatched,
        macro_report.acc,
        macro_report.prec,
        macro_report.idk_rate,
        macro_report.reliability,
    );
    Ok(())
}

fn load_eval_dump(dir: &Path) -> Result<Vec<QuestionAttempts>, CliError> {
    let path = dir.join(EVAL_DUMP_FILE);
    let file = File::open(&path).map_err(|_| {
        CliError::Input(format!("missing best-of-5 dump {}", path.display()))
    })?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| CliError::Input(format!("empty dump {}", path.display())))?;
    #[derive(Deserialize)]
    struct Header {
        attempts: usize,
    }
    let header: Header = serde_json::from_str(&header)
        .map_err(|e| CliError::Input(format!("bad dump header: {e}")))?;
    if header.attempts < BEST_OF_N {
        return Err(CliError::Input(format!(
            "dump {} holds {} attempts per question; best-of-{BEST_OF_N} needs {BEST_OF_N}",
            path.display(),
            header.attempts
        )));
    }
    let mut questions = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: QuestionEval = serde_json::from_str(&line)
            .map_err(|e| CliError::Input(format!("bad dump line: {e}")))?;
        questions.push(QuestionAttempts {
            id: record.id,
            verdicts: record
                .attempts
                .iter()
                .take(BEST_OF_N)
                .map(|a| a.verdict)
                .collect(),
        });
    }
    Ok(questions)
}

fn load_macro_report(dir: &Path) -> Result<ReliabilityReport, CliError> {
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|_| CliError::Input(format!("missing report {}", path.display())))?;
    let file: ReportFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("bad report {}: {e}", path.display())))?;
    Ok(file.macro_report)
}

fn cmd_compare(a: &Path, b: &Path) -> Result<(), CliError> {
    let refusals = refusal_set(&load_eval_dump(a)?);
    let failures = failure_set(&load_eval_dump(b)?);

    match rejection_success_rate(&refusals, &failures) {
        Ok(rate) => println!(
            "rejection_success_rate={rate:.4} refusals={} baseline_failures={}",
            refusals.len(),
            failures.len()
        ),
        Err(MetricsError::EmptyRefusalSet) => {
            println!("rejection_success_rate=undefined (no refusals)")
        }
        Err(other) => return Err(other.into()),
    }

    let report_a = load_macro_report(a)?;
    let report_b = load_macro_report(b)?;
    println!(
        "delta acc={:+.4} prec={:+.4} idk_rate={:+.4} reliability={:+.4}",
        report_a.acc - report_b.acc,
        report_a.prec - report_b.prec,
        report_a.idk_rate - report_b.idk_rate,
        report_a.reliability - report_b.reliability,
    );
    Ok(())
}
