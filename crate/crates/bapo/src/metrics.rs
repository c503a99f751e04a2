//! Reliability metrics over answer verdicts: accuracy, precision, IDK rate, the
//! reliability interpolation between them, rejection success rate, and pass@K.
//!
//! Verdicts use normalized exact match against one or more gold answers. Reliability
//! is `(1 − ρ) · prec + ρ · acc` where ρ is the IDK rate; on a single answer set this
//! equals `acc · (1 + ρ)` identically. When several datasets are scored together the
//! per-dataset reports are macro-averaged, in which case the identity no longer
//! holds on the averaged numbers.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::ExtractedAnswer;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("cannot build a report from an empty verdict list")]
    EmptyInput,
    #[error("rejection success rate is undefined for an empty refusal set")]
    EmptyRefusalSet,
    #[error("pass@{k} needs at least {k} attempts per question, found {found}")]
    InsufficientAttempts { k: usize, found: usize },
}

/// How one answer compares to the golds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Wrong,
    Idk,
}

/// Raw answer counts: `n = n_correct + n_wrong + n_idk`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub n: usize,
    pub n_correct: usize,
    pub n_wrong: usize,
    pub n_idk: usize,
}

impl VerdictCounts {
    pub fn from_verdicts(verdicts: &[Verdict]) -> Self {
        let mut counts = VerdictCounts {
            n: verdicts.len(),
            n_correct: 0,
            n_wrong: 0,
            n_idk: 0,
        };
        for verdict in verdicts {
            match verdict {
                Verdict::Correct => counts.n_correct += 1,
                Verdict::Wrong => counts.n_wrong += 1,
                Verdict::Idk => counts.n_idk += 1,
            }
        }
        counts
    }
}

/// Derived reliability metrics for one answer set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    #[serde(flatten)]
    pub counts: VerdictCounts,
    pub acc: f64,
    pub prec: f64,
    pub idk_rate: f64,
    pub reliability: f64,
}

/// The reliability interpolation: precision weighted by the answer rate plus
/// accuracy weighted by the refusal rate.
pub fn reliability_interpolation(acc: f64, prec: f64, idk_rate: f64) -> f64 {
    (1.0 - idk_rate) * prec + idk_rate * acc
}

/// Classify one answer: IDK wins first, then normalized exact match against any
/// gold, otherwise wrong. Golds must already be normalized.
pub fn classify(pred: &ExtractedAnswer, golds: &[String]) -> Verdict {
    debug_assert!(!golds.is_empty(), "classify needs at least one gold answer");
    if pred.is_idk {
        Verdict::Idk
    } else if golds.contains(&pred.text) {
        Verdict::Correct
    } else {
        Verdict::Wrong
    }
}

/// Build a report from a verdict list.
pub fn report(verdicts: &[Verdict]) -> Result<ReliabilityReport, MetricsError> {
    if verdicts.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    ReliabilityReport::from_counts(VerdictCounts::from_verdicts(verdicts))
}

impl ReliabilityReport {
    /// Derive the metrics from raw counts. Precision is defined as accuracy when
    /// everything was refused, which keeps reliability continuous at full refusal.
    pub fn from_counts(counts: VerdictCounts) -> Result<Self, MetricsError> {
        if counts.n == 0 {
            return Err(MetricsError::EmptyInput);
        }
        debug_assert_eq!(counts.n, counts.n_correct + counts.n_wrong + counts.n_idk);
        let n = counts.n as f64;
        let acc = counts.n_correct as f64 / n;
        let idk_rate = counts.n_idk as f64 / n;
        let prec = if counts.n > counts.n_idk {
            counts.n_correct as f64 / (counts.n - counts.n_idk) as f64
        } else {
            acc
        };
        let reliability = reliability_interpolation(acc, prec, idk_rate);
        Ok(ReliabilityReport {
            counts,
            acc,
            prec,
            idk_rate,
            reliability,
        })
    }
}

/// Fraction of the refused questions that the baseline also fails.
pub fn rejection_success_rate(
    refusals: &BTreeSet<String>,
    baseline_failures: &BTreeSet<String>,
) -> Result<f64, MetricsError> {
    if refusals.is_empty() {
        return Err(MetricsError::EmptyRefusalSet);
    }
    let hits = refusals.intersection(baseline_failures).count();
    Ok(hits as f64 / refusals.len() as f64)
}

/// Attempt verdicts for one question, in sampling order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionAttempts {
    pub id: String,
    pub verdicts: Vec<Verdict>,
}

/// Questions counted as refused under best-of-N: every attempt answered IDK.
pub fn refusal_set(questions: &[QuestionAttempts]) -> BTreeSet<String> {
    questions
        .iter()
        .filter(|q| !q.verdicts.is_empty() && q.verdicts.iter().all(|v| *v == Verdict::Idk))
        .map(|q| q.id.clone())
        .collect()
}

/// Questions counted as failed under best-of-N: no attempt was correct.
pub fn failure_set(questions: &[QuestionAttempts]) -> BTreeSet<String> {
    questions
        .iter()
        .filter(|q| !q.verdicts.contains(&Verdict::Correct))
        .map(|q| q.id.clone())
        .collect()
}

/// Fraction of questions with at least one correct verdict among their first `k`
/// attempts. Every question must have at least `k` attempts.
pub fn pass_at_k(attempts: &[Vec<Verdict>], k: usize) -> Result<f64, MetricsError> {
    if attempts.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    for question in attempts {
        if question.len() < k {
            return Err(MetricsError::InsufficientAttempts {
                k,
                found: question.len(),
            });
        }
    }
    let solved = attempts
        .iter()
        .filter(|question| question[..k].contains(&Verdict::Correct))
        .count();
    Ok(solved as f64 / attempts.len() as f64)
}

/// A named report, one per dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub dataset: String,
    #[serde(flatten)]
    pub report: ReliabilityReport,
}

/// Unweighted mean of each metric across datasets; counts are summed.
pub fn macro_average(reports: &[DatasetReport]) -> Result<ReliabilityReport, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n_datasets = reports.len() as f64;
    let counts = VerdictCounts {
        n: reports.iter().map(|r| r.report.counts.n).sum(),
        n_correct: reports.iter().map(|r| r.report.counts.n_correct).sum(),
        n_wrong: reports.iter().map(|r| r.report.counts.n_wrong).sum(),
        n_idk: reports.iter().map(|r| r.report.counts.n_idk).sum(),
    };
    Ok(ReliabilityReport {
        counts,
        acc: reports.iter().map(|r| r.report.acc).sum::<f64>() / n_datasets,
        prec: reports.iter().map(|r| r.report.prec).sum::<f64>() / n_datasets,
        idk_rate: reports.iter().map(|r| r.report.idk_rate).sum::<f64>() / n_datasets,
        reliability: reports.iter().map(|r| r.report.reliability).sum::<f64>() / n_datasets,
    })
}

pub const REPORT_CSV_SCHEMA: &str = "# bapo.report.v1";

/// Write per-dataset rows plus a macro-average row as CSV with a schema header line.
pub fn write_report_csv<W: Write>(
    writer: &mut W,
    reports: &[DatasetReport],
    macro_report: &ReliabilityReport,
) -> std::io::Result<()> {
    writeln!(writer, "{REPORT_CSV_SCHEMA}")?;
    writeln!(
        writer,
        "dataset,n,n_correct,n_wrong,n_idk,acc,prec,idk_rate,reliability"
    )?;
    for row in reports {
        write_report_row(writer, &row.dataset, &row.report)?;
    }
    write_report_row(writer, "macro", macro_report)
}

fn write_report_row<W: Write>(
    writer: &mut W,
    name: &str,
    report: &ReliabilityReport,
) -> std::io::Result<()> {
    writeln!(
        writer,
        "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
        name,
        report.counts.n,
        report.counts.n_correct,
        report.counts.n_wrong,
        report.counts.n_idk,
        report.acc,
        report.prec,
        report.idk_rate,
        report.reliability
    )
}
