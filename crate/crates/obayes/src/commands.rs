//! The four subcommands as pure functions from inputs to report text.
//!
//! Each command returns its report files and a console summary; writing
//! them out is left to the caller, which keeps runs byte-comparable.

use std::fs;
use std::path::{Path, PathBuf};

use obayes_core::diagnostics::{
    factorial_contrasts, heterogeneity, robust_vs_reference_check, ReferenceCheck, ShannonNormalizer,
};
use obayes_core::discrimination::{exchange_search, Criterion, Discriminator};
use obayes_core::factorial::enumerate_candidate_runs;
use obayes_core::posterior::{conventional_posterior, objective_posterior, ModelPosterior};
use obayes_core::{AliasPolicy, CandidateTable, DesignTable, FactorSpace};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::input::{read_candidates, DesignFile};
use crate::report::{self, CombinedDiagnostics, DiagnosticsReport, ReferencePoint};
use crate::search::parallel_search;

pub const SCREENING_LABEL: &str = "screening";
pub const FOLLOWUP_LABEL: &str = "followup";

/// Report files (name, contents) plus the console summary.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Output {
    pub files: Vec<(String, String)>,
    pub summary: String,
}

impl Output {
    /// Writes every report file into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let io = |path: &Path, source| CliError::Io {
            path: path.to_path_buf(),
            source,
        };
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, body) in &self.files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_str())
    }
}

fn check_design(path: &Path, file: &DesignFile) -> Result<()> {
    if file.n() < 2 {
        return Err(CliError::input(path, format!("need at least 2 runs, found {}", file.n())));
    }
    if file.y.iter().all(|&v| v == file.y[0]) {
        return Err(CliError::input(
            path,
            "all responses are identical, so the null model fits exactly",
        ));
    }
    Ok(())
}

/// Posterior under the analysis that matches the configured criterion.
pub fn analyze(space: &FactorSpace, design: &DesignTable, with_block: bool, cfg: &ExperimentConfig) -> Result<ModelPosterior> {
    let prior = cfg.model_prior();
    let post = match cfg.criterion {
        Criterion::Omd => objective_posterior(space, design, with_block, &prior, AliasPolicy::Prune)?,
        Criterion::Cmd => conventional_posterior(space, design, with_block, cfg.gamma, &prior)?,
    };
    Ok(post)
}

struct Loaded {
    space: FactorSpace,
    design: DesignTable,
    file: DesignFile,
}

fn load(path: &Path, cfg: &ExperimentConfig) -> Result<Loaded> {
    let file = DesignFile::read(path)?;
    check_design(path, &file)?;
    if cfg.with_block && file.block.is_none() {
        return Err(CliError::input(path, "--block needs a \"block\" column"));
    }
    Ok(Loaded {
        space: file.space(cfg.order)?,
        design: file.design()?,
        file,
    })
}

fn posterior_output(post: &ModelPosterior, cfg: &ExperimentConfig) -> Result<Output> {
    let rows = report::posterior_rows(post);
    let activity = report::activity_rows(post);
    let ext = cfg.format.extension();
    Ok(Output {
        files: vec![
            (format!("posterior.{ext}"), report::encode(&rows, cfg.format)?),
            (format!("factor_activity.{ext}"), report::encode(&activity, cfg.format)?),
        ],
        summary: report::posterior_table(&rows, &activity, 5) + &rejected_note(post),
    })
}

fn rejected_note(post: &ModelPosterior) -> String {
    if post.rejected.is_empty() {
        return String::new();
    }
    let labels: Vec<String> = post.rejected.iter().map(|m| format!("{{{}}}", m.label(&post.space))).collect();
    format!("\nnot estimable on this design: {}\n", labels.join(" "))
}

/// Model posterior and factor activity of one design.
pub fn posterior(path: &Path, cfg: &ExperimentConfig) -> Result<Output> {
    let l = load(path, cfg)?;
    let post = analyze(&l.space, &l.design, cfg.with_block, cfg)?;
    posterior_output(&post, cfg)
}

/// Ranked follow-up designs for one screening design.
pub fn followup(path: &Path, candidates: Option<&Path>, cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Output> {
    if cfg.with_block {
        return Err(CliError::Config(
            "follow-up search runs without a block column; drop --block".to_string(),
        ));
    }
    let l = load(path, cfg)?;
    let post = analyze(&l.space, &l.design, false, cfg)?;
    let table: CandidateTable = match candidates {
        Some(p) => read_candidates(p, &l.file.names)?,
        None => enumerate_candidate_runs(&l.space),
    };
    let disc = Discriminator::new(&post, &table, cfg.prob_floor)?;
    let designs = if cfg.exchange {
        exchange_search(&disc, cfg.n_star, cfg.top_k, cfg.starts, cfg.seed)?
    } else {
        parallel_search(&disc, cfg.n_star, cfg.top_k, cfg.max_designs, threads)?
    };
    let rows = report::followup_rows(&designs, &table, disc.criterion(), disc.model_count());
    Ok(Output {
        files: vec![(format!("followup.{}", cfg.format.extension()), report::encode(&rows, cfg.format)?)],
        summary: report::followup_table(&rows),
    })
}

fn summary_of(post: &ModelPosterior) -> Result<report::HeterogeneitySummary> {
    let h = heterogeneity(post, ShannonNormalizer::ModelSpace)?;
    Ok(report::heterogeneity_summary(post, &h))
}

struct Stages {
    screening: ModelPosterior,
    combined: Option<ModelPosterior>,
}

fn stages(screening: &Path, followup: &Path, cfg: &ExperimentConfig) -> Result<Stages> {
    let base_cfg = ExperimentConfig {
        with_block: false,
        ..cfg.clone()
    };
    let s = load(screening, &base_cfg)?;
    // block labels in the follow-up file are replaced by the stage labels
    let f = DesignFile {
        block: None,
        ..DesignFile::read(followup)?.aligned_to(&s.file.names, followup)?
    };
    let first = analyze(&s.space, &s.design, false, cfg)?;
    if f.is_empty() {
        return Ok(Stages {
            screening: first,
            combined: None,
        });
    }
    let stacked = s.design.concat_blocked(&f.design()?, [SCREENING_LABEL, FOLLOWUP_LABEL])?;
    let second = analyze(&s.space, &stacked, true, cfg)?;
    Ok(Stages {
        screening: first,
        combined: Some(second),
    })
}

fn before_after(st: &Stages) -> Result<Option<CombinedDiagnostics>> {
    let Some(after) = &st.combined else {
        return Ok(None);
    };
    let before = summary_of(&st.screening)?;
    let after = summary_of(after)?;
    Ok(Some(CombinedDiagnostics {
        shannon_delta: after.shannon_normalized - before.shannon_normalized,
        cv_delta: after.cv_factors - before.cv_factors,
        before,
        after,
    }))
}

fn delta_summary(d: &CombinedDiagnostics) -> String {
    let mut s = report::heterogeneity_table("screening", &d.before);
    s.push_str(&report::heterogeneity_table("combined", &d.after));
    s.push_str(&format!(
        "change: Shannon {:+.2}  CV {:+.2}\n",
        d.shannon_delta, d.cv_delta
    ));
    s
}

/// Re-analysis of screening plus follow-up runs with a block effect.
/// An empty follow-up file reduces to the screening posterior.
pub fn combined(screening: &Path, followup: &Path, cfg: &ExperimentConfig) -> Result<Output> {
    let st = stages(screening, followup, cfg)?;
    let post = st.combined.as_ref().unwrap_or(&st.screening);
    let mut out = posterior_output(post, cfg)?;
    if let Some(d) = before_after(&st)? {
        out.files.push(("diagnostics.json".to_string(), report::to_json(&d)?));
        out.summary.push('\n');
        out.summary.push_str(&delta_summary(&d));
    }
    Ok(out)
}

/// Heterogeneity of one design, or before/after for a screening plus
/// follow-up pair; contrast plot data when the design is a full factorial.
pub fn diagnostics(path: &Path, followup: Option<&Path>, cfg: &ExperimentConfig, reference: bool) -> Result<Output> {
    let mut out = Output::default();
    let reference_check = if reference {
        let curve = robust_vs_reference_check(&ReferenceCheck::two_factor(cfg.seed))?;
        Some(curve.into_iter().map(|(n, kl)| ReferencePoint { n, kl }).collect::<Vec<_>>())
    } else {
        None
    };
    let l = load(path, cfg)?;
    match followup {
        Some(f) => {
            let st = stages(path, f, cfg)?;
            match before_after(&st)? {
                Some(d) => {
                    out.summary.push_str(&delta_summary(&d));
                    out.files.push(("diagnostics.json".to_string(), report::to_json(&d)?));
                }
                None => push_single(&mut out, &st.screening, reference_check.clone())?,
            }
            if let Some(curve) = &reference_check {
                out.files.push(("reference_check.json".to_string(), report::to_json(curve)?));
            }
        }
        None => {
            let post = analyze(&l.space, &l.design, cfg.with_block, cfg)?;
            push_single(&mut out, &post, reference_check)?;
        }
    }
    if l.design.is_full_factorial() {
        let contrasts = factorial_contrasts(&l.design, &l.space, l.space.order().max_order())?;
        out.files.push(("contrasts.csv".to_string(), report::to_csv(&report::contrast_rows(&contrasts))?));
    }
    Ok(out)
}

fn push_single(out: &mut Output, post: &ModelPosterior, reference_check: Option<Vec<ReferencePoint>>) -> Result<()> {
    let heterogeneity = summary_of(post)?;
    out.summary.push_str(&report::heterogeneity_table("design", &heterogeneity));
    if let Some(curve) = &reference_check {
        for p in curve {
            out.summary.push_str(&format!("reference check n = {:>3}: KL {:.4}\n", p.n, p.kl));
        }
    }
    let r = DiagnosticsReport {
        heterogeneity,
        reference_check,
    };
    out.files.push(("diagnostics.json".to_string(), report::to_json(&r)?));
    Ok(())
}
