//! Report rows, their CSV/JSON encodings and the console tables.
//!
//! Report files carry full-precision numbers so they re-parse to the same
//! bits; console tables round scores to 4 places and probabilities to 2.

use std::fmt::Write as _;

use obayes_core::diagnostics::{Contrast, HeterogeneityReport};
use obayes_core::discrimination::{CandidateDesign, Criterion};
use obayes_core::factorial::yates_index;
use obayes_core::posterior::{factor_activity, Analysis, ModelPosterior};
use obayes_core::CandidateTable;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::config::Format;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRow {
    pub model: String,
    pub f: usize,
    pub t: usize,
    pub prior_odds: f64,
    pub log_bf: f64,
    pub posterior_prob: f64,
    pub q: f64,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityRow {
    pub factor: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowupRow {
    pub rank: usize,
    /// 1-based full-factorial run numbers, space separated.
    pub runs: String,
    /// 1-based rows of the candidate table, space separated.
    pub candidate_rows: String,
    pub score: f64,
    pub criterion: String,
    pub n_star: usize,
    pub model_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastRow {
    pub term: String,
    pub contrast: f64,
    pub normal_quantile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneitySummary {
    pub analysis: String,
    pub runs: usize,
    pub model_count: usize,
    pub normalizer_count: usize,
    pub shannon_normalized: f64,
    pub cv_factors: f64,
    pub factor_activity: Vec<ActivityRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub n: usize,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub heterogeneity: HeterogeneitySummary,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reference_check: Option<Vec<ReferencePoint>>,
}

/// Screening versus combined heterogeneity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedDiagnostics {
    pub before: HeterogeneitySummary,
    pub after: HeterogeneitySummary,
    pub shannon_delta: f64,
    pub cv_delta: f64,
}

pub fn analysis_name(a: Analysis) -> &'static str {
    match a {
        Analysis::Objective => "objective",
        Analysis::Conventional => "conventional",
    }
}

/// Models by posterior probability, descending.
pub fn posterior_rows(post: &ModelPosterior) -> Vec<PosteriorRow> {
    post.ranked()
        .into_iter()
        .map(|i| {
            let e = &post.entries[i];
            PosteriorRow {
                model: e.model.label(&post.space),
                f: e.model.f(),
                t: e.model.t(),
                prior_odds: e.log_prior_odds.exp(),
                log_bf: e.log_bf,
                posterior_prob: e.prob,
                q: e.q,
                saturated: e.saturated,
            }
        })
        .collect()
}

pub fn activity_rows(post: &ModelPosterior) -> Vec<ActivityRow> {
    post.space
        .names()
        .iter()
        .zip(factor_activity(post))
        .map(|(name, probability)| ActivityRow {
            factor: name.clone(),
            probability,
        })
        .collect()
}

fn join(v: impl IntoIterator<Item = usize>) -> String {
    v.into_iter().map(|r| r.to_string()).collect::<Vec<_>>().join(" ")
}

/// Full-factorial run number of a candidate row.
pub fn standard_run(candidates: &CandidateTable, row: usize) -> usize {
    yates_index(candidates.run(row)) + 1
}

pub fn followup_rows(
    designs: &[CandidateDesign],
    candidates: &CandidateTable,
    criterion: Criterion,
    model_count: usize,
) -> Vec<FollowupRow> {
    designs
        .iter()
        .enumerate()
        .map(|(i, d)| FollowupRow {
            rank: i + 1,
            runs: join(d.runs.iter().map(|&r| standard_run(candidates, r))),
            candidate_rows: join(d.runs.iter().copied()),
            score: d.score,
            criterion: criterion.name().to_string(),
            n_star: d.runs.len(),
            model_count,
        })
        .collect()
}

/// Contrasts with standard normal quantiles of their plotting positions.
pub fn contrast_rows(contrasts: &[Contrast]) -> Vec<ContrastRow> {
    let normal = Normal::standard();
    contrasts
        .iter()
        .map(|c| ContrastRow {
            term: c.label.clone(),
            contrast: c.value,
            normal_quantile: normal.inverse_cdf(c.plot_position),
        })
        .collect()
}

pub fn heterogeneity_summary(post: &ModelPosterior, h: &HeterogeneityReport) -> HeterogeneitySummary {
    HeterogeneitySummary {
        analysis: analysis_name(post.analysis).to_string(),
        runs: post.n,
        model_count: h.model_count,
        normalizer_count: h.normalizer_count,
        shannon_normalized: h.shannon_normalized,
        cv_factors: h.cv_factors,
        factor_activity: activity_rows(post),
    }
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Serialize(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Serialize(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Serialize(e.to_string()))
}

pub fn from_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| CliError::Serialize(e.to_string()))
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Serialize(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Rows in the requested file format.
pub fn encode<T: Serialize>(rows: &[T], format: Format) -> Result<String> {
    match format {
        Format::Csv => to_csv(rows),
        Format::Json => to_json(rows),
    }
}

/// Top models with probabilities to two places.
pub fn posterior_table(rows: &[PosteriorRow], activity: &[ActivityRow], top: usize) -> String {
    let width = rows.iter().take(top).map(|r| r.model.len()).max().unwrap_or(5).max(5);
    let mut s = String::new();
    let _ = writeln!(s, "{:<width$}  {:>11}", "model", "probability");
    for r in rows.iter().take(top) {
        let _ = writeln!(s, "{:<width$}  {:>11.2}", r.model, r.posterior_prob);
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<width$}  {:>11}", "factor", "probability");
    for a in activity {
        let _ = writeln!(s, "{:<width$}  {:>11.2}", a.factor, a.probability);
    }
    s
}

/// Ranked designs with scores to four places.
pub fn followup_table(rows: &[FollowupRow]) -> String {
    let width = rows.iter().map(|r| r.runs.len()).max().unwrap_or(4).max(4);
    let mut s = String::new();
    let crit = rows.first().map_or("score", |r| r.criterion.as_str());
    let _ = writeln!(s, "{:>4}  {:<width$}  {:>12}", "rank", "runs", crit);
    for r in rows {
        let _ = writeln!(s, "{:>4}  {:<width$}  {:>12.4}", r.rank, r.runs, r.score);
    }
    s
}

pub fn heterogeneity_table(label: &str, h: &HeterogeneitySummary) -> String {
    format!(
        "{label}: Shannon {:.2}  CV {:.2}  ({} models, {} runs)\n",
        h.shannon_normalized, h.cv_factors, h.model_count, h.runs
    )
}
