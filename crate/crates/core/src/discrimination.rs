//! Follow-up design criteria: posterior-weighted KL divergence between the
//! models' predictive distributions for the new runs, and the search over
//! candidate designs.
//!
//! For models `i` and `j` with predictive means `ŷ_i`, `ŷ_j` and scale
//! matrices `V_i`, `V_j` (all for the same `n*` new runs), the criterion
//! sums
//!
//! `p_i p_j · ½ [tr(V_j⁻¹V_i) + λ_i (ŷ_i − ŷ_j)'V_j⁻¹(ŷ_i − ŷ_j) − n*]`
//!
//! over ordered pairs `i ≠ j`, where `λ_i` is the posterior mean of `1/σ²`
//! under model `i`. The log-determinant terms of each KL divergence cancel
//! over the symmetric sum and are left out.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::designs::{design_count, DesignIter};
use crate::error::{Error, Result};
use crate::factorial::{CandidateTable, FactorModel};
use crate::linalg::cholesky_flat;
use crate::posterior::{Analysis, ModelPosterior, PosteriorEntry};

/// Default cap on exhaustive search size.
pub const DEFAULT_MAX_DESIGNS: u64 = 200_000_000;

/// Largest `candidates² · models` for which cross products are tabulated.
const TABLE_LIMIT: usize = 1 << 24;

/// Predictive distribution of the new runs under one model.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    pub y_hat: DVector<f64>,
    pub v: DMatrix<f64>,
    /// Posterior mean of `1/σ²`.
    pub precision: f64,
}

/// `ŷ* = Z* coef`, `V* = I + Z* M Z*'`.
pub fn predictive_summary(
    coef: &DVector<f64>,
    scale: &DMatrix<f64>,
    precision: f64,
    z_star: &DMatrix<f64>,
) -> Result<PredictiveSummary> {
    if z_star.ncols() != coef.len() || scale.nrows() != coef.len() || scale.ncols() != coef.len()
    {
        return Err(Error::DimensionMismatch(format!(
            "follow-up matrix has {} columns, model has {} coefficients",
            z_star.ncols(),
            coef.len()
        )));
    }
    let n_star = z_star.nrows();
    let v = DMatrix::identity(n_star, n_star) + z_star * scale * z_star.transpose();
    Ok(PredictiveSummary {
        y_hat: z_star * coef,
        v,
        precision,
    })
}

/// Rows of `[1 Xi]` for the given candidate runs (1-based).
pub fn follow_up_matrix(
    model: &FactorModel,
    candidates: &CandidateTable,
    runs: &[usize],
) -> Result<DMatrix<f64>> {
    if let Some(&bad) = runs.iter().find(|&&r| r == 0 || r > candidates.len()) {
        return Err(Error::InvalidDesign(format!(
            "run {bad} is not in the {}-row candidate table",
            candidates.len()
        )));
    }
    if let Some(f) = model.active_factors().find(|&f| f >= candidates.k()) {
        return Err(Error::DimensionMismatch(format!(
            "model uses factor {} but candidates have {} factors",
            f + 1,
            candidates.k()
        )));
    }
    let t = model.t();
    Ok(DMatrix::from_fn(runs.len(), t + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            f64::from(model.terms()[c - 1].sign(candidates.run(runs[r])))
        }
    }))
}

pub fn entry_predictive(
    entry: &PosteriorEntry,
    candidates: &CandidateTable,
    runs: &[usize],
) -> Result<PredictiveSummary> {
    let z = follow_up_matrix(&entry.model, candidates, runs)?;
    predictive_summary(&entry.coef, &entry.scale, entry.precision, &z)
}

/// KL divergence `N(mu0, s0) ‖ N(mu1, s1)`.
pub fn kl_gaussian(
    mu0: &DVector<f64>,
    s0: &DMatrix<f64>,
    mu1: &DVector<f64>,
    s1: &DMatrix<f64>,
) -> Result<f64> {
    let s = mu0.len();
    if mu1.len() != s || s0.shape() != (s, s) || s1.shape() != (s, s) {
        return Err(Error::DimensionMismatch("KL arguments differ in dimension".to_string()));
    }
    let c1 = s1.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let c0 = s0.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let trace = c1.solve(s0).trace();
    let d = mu1 - mu0;
    let quad = d.dot(&c1.solve(&d));
    let log_det = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|v| libm::log(*v)).sum::<f64>();
    let ld = log_det(&c1.l()) - log_det(&c0.l());
    Ok(0.5 * (trace + quad + ld - s as f64))
}

/// Expected KL between the predictives of models `i` and `j`, averaged over
/// the posterior of `σ²` under model `i`. Log-determinant terms included.
pub fn kl_predictive(pi: &PredictiveSummary, pj: &PredictiveSummary) -> Result<f64> {
    let s = pi.y_hat.len();
    if pj.y_hat.len() != s {
        return Err(Error::DimensionMismatch("predictives differ in n*".to_string()));
    }
    if !pi.precision.is_finite() {
        return Err(Error::Degenerate("saturated model has no residual scale".to_string()));
    }
    let cj = pj.v.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let ci = pi.v.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let d = &pi.y_hat - &pj.y_hat;
    let log_det = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|v| libm::log(*v)).sum::<f64>();
    Ok(0.5
        * (cj.solve(&pi.v).trace() + pi.precision * d.dot(&cj.solve(&d)) + log_det(&cj.l())
            - log_det(&ci.l())
            - s as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// Objective analysis.
    Omd,
    /// Conventional analysis.
    Cmd,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Self::Omd => "OMD",
            Self::Cmd => "CMD",
        }
    }

    pub fn for_analysis(a: Analysis) -> Self {
        match a {
            Analysis::Objective => Self::Omd,
            Analysis::Conventional => Self::Cmd,
        }
    }
}

#[derive(Debug, Clone)]
enum Cross {
    /// `K[r][s] = z_r' M z_s` for every candidate pair, row-major `c × c`.
    Table(Vec<f64>),
    /// Candidate rows `z_r` and `M z_r`, row-major `c × p`.
    Factors { z: Vec<f64>, mz: Vec<f64>, p: usize },
}

#[derive(Debug, Clone)]
struct ModelCache {
    weight: f64,
    precision: f64,
    saturated: bool,
    means: Vec<f64>,
    cross: Cross,
}

impl ModelCache {
    #[inline]
    fn cross(&self, c: usize, r: usize, s: usize) -> f64 {
        match &self.cross {
            Cross::Table(k) => k[r * c + s],
            Cross::Factors { z, mz, p } => {
                let (zr, ms) = (&z[r * p..(r + 1) * p], &mz[s * p..(s + 1) * p]);
                zr.iter().zip(ms).map(|(a, b)| a * b).sum()
            }
        }
    }
}

/// Precomputed state for scoring follow-up designs against one posterior.
#[derive(Debug, Clone)]
pub struct Discriminator {
    criterion: Criterion,
    candidates: usize,
    models: Vec<ModelCache>,
}

/// Scratch buffers for [`Discriminator::score_with`].
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    chol: Vec<f64>,
    linv: Vec<f64>,
    means: Vec<f64>,
    tmp: Vec<f64>,
    log_det: Vec<f64>,
}

impl Discriminator {
    /// Models with posterior probability below `prob_floor` are dropped and
    /// the remaining weights renormalized.
    pub fn new(post: &ModelPosterior, candidates: &CandidateTable, prob_floor: f64) -> Result<Self> {
        if post.with_block {
            return Err(Error::InvalidDesign(
                "follow-up search needs a posterior fitted without a block column".to_string(),
            ));
        }
        if candidates.k() != post.space.k() {
            return Err(Error::DimensionMismatch(format!(
                "candidate table has {} factors, the posterior {}",
                candidates.k(),
                post.space.k()
            )));
        }
        if !(0.0..1.0).contains(&prob_floor) {
            return Err(Error::Domain(format!("probability floor {prob_floor} outside [0, 1)")));
        }
        let kept: Vec<&PosteriorEntry> =
            post.entries.iter().filter(|e| e.prob >= prob_floor && e.prob > 0.0).collect();
        if kept.is_empty() {
            return Err(Error::EmptyModelSet);
        }
        let total: f64 = kept.iter().map(|e| e.prob).sum();
        let c = candidates.len();
        let all_runs: Vec<usize> = (1..=c).collect();
        let tabulate = c.saturating_mul(c).saturating_mul(kept.len()) <= TABLE_LIMIT;
        let mut models = Vec::with_capacity(kept.len());
        for e in kept {
            let z = follow_up_matrix(&e.model, candidates, &all_runs)?;
            let means = (&z * &e.coef).iter().copied().collect();
            let mz = &z * &e.scale;
            let cross = if tabulate {
                let k = &mz * z.transpose();
                Cross::Table(k.transpose().iter().copied().collect())
            } else {
                let p = z.ncols();
                Cross::Factors {
                    z: z.transpose().iter().copied().collect(),
                    mz: mz.transpose().iter().copied().collect(),
                    p,
                }
            };
            models.push(ModelCache {
                weight: e.prob / total,
                precision: e.precision,
                saturated: e.saturated || !e.precision.is_finite(),
                means,
                cross,
            });
        }
        Ok(Self {
            criterion: Criterion::for_analysis(post.analysis),
            candidates: c,
            models,
        })
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    pub fn model_count(&self) -> usize {
        self.models.len()
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates
    }

    pub fn score(&self, runs: &[usize]) -> Result<f64> {
        self.score_with(runs, &mut Workspace::default(), false)
    }

    /// Score with the pairwise log-determinant terms added back in.
    pub fn score_with_log_det(&self, runs: &[usize]) -> Result<f64> {
        self.score_with(runs, &mut Workspace::default(), true)
    }

    /// Scores one design (1-based run numbers, any order).
    pub fn score_with(&self, runs: &[usize], ws: &mut Workspace, with_log_det: bool) -> Result<f64> {
        let n = runs.len();
        if n == 0 {
            return Err(Error::InvalidDesign("empty follow-up design".to_string()));
        }
        if let Some(&bad) = runs.iter().find(|&&r| r == 0 || r > self.candidates) {
            return Err(Error::InvalidDesign(format!(
                "run {bad} is not in the {}-row candidate table",
                self.candidates
            )));
        }
        let m = self.models.len();
        let nn = n * n;
        ws.chol.resize(m * nn, 0.0);
        ws.linv.resize(m * nn, 0.0);
        ws.means.resize(m * n, 0.0);
        ws.tmp.resize(nn.max(n), 0.0);
        ws.log_det.resize(m, 0.0);
        let c = self.candidates;

        for (j, model) in self.models.iter().enumerate() {
            let chol = &mut ws.chol[j * nn..(j + 1) * nn];
            for a in 0..n {
                ws.means[j * n + a] = model.means[runs[a] - 1];
                for b in 0..=a {
                    let v = model.cross(c, runs[a] - 1, runs[b] - 1) + f64::from(u8::from(a == b));
                    chol[a * n + b] = v;
                    chol[b * n + a] = v;
                }
            }
            cholesky_flat(chol, n)?;
            ws.log_det[j] = 2.0 * (0..n).map(|a| libm::log(chol[a * n + a])).sum::<f64>();
            // explicit inverse of the lower factor, row-major lower triangle
            let linv = &mut ws.linv[j * nn..(j + 1) * nn];
            for col in 0..n {
                for row in 0..n {
                    linv[row * n + col] = 0.0;
                }
                linv[col * n + col] = 1.0 / chol[col * n + col];
                for row in col + 1..n {
                    let mut s = 0.0;
                    for q in col..row {
                        s -= chol[row * n + q] * linv[q * n + col];
                    }
                    linv[row * n + col] = s / chol[row * n + row];
                }
            }
        }

        let mut total = 0.0;
        for (i, mi) in self.models.iter().enumerate() {
            if mi.saturated {
                continue;
            }
            let li = &ws.chol[i * nn..(i + 1) * nn];
            let yi = &ws.means[i * n..(i + 1) * n];
            for (j, mj) in self.models.iter().enumerate() {
                if i == j {
                    continue;
                }
                let lj_inv = &ws.linv[j * nn..(j + 1) * nn];
                let yj = &ws.means[j * n..(j + 1) * n];
                // tr(V_j⁻¹ V_i) = ‖L_j⁻¹ L_i‖²_F, both lower triangular
                let mut trace = 0.0;
                for r in 0..n {
                    for s in 0..=r {
                        let mut w = 0.0;
                        for q in s..=r {
                            w += lj_inv[r * n + q] * li[q * n + s];
                        }
                        trace += w * w;
                    }
                }
                // (ŷ_i − ŷ_j)' V_j⁻¹ (ŷ_i − ŷ_j) = ‖L_j⁻¹ d‖²
                let mut quad = 0.0;
                for r in 0..n {
                    let mut w = 0.0;
                    for q in 0..=r {
                        w += lj_inv[r * n + q] * (yi[q] - yj[q]);
                    }
                    quad += w * w;
                }
                let mut kl = trace + mi.precision * quad - n as f64;
                if with_log_det {
                    kl += ws.log_det[j] - ws.log_det[i];
                }
                total += mi.weight * mj.weight * 0.5 * kl;
            }
        }
        if !total.is_finite() {
            return Err(Error::Degenerate("non-finite criterion value".to_string()));
        }
        Ok(total)
    }
}

/// Criterion value for one design with every model in the posterior.
pub fn md_score(post: &ModelPosterior, candidates: &CandidateTable, runs: &[usize]) -> Result<f64> {
    Discriminator::new(post, candidates, 0.0)?.score(runs)
}

pub fn omd_score(post: &ModelPosterior, candidates: &CandidateTable, runs: &[usize]) -> Result<f64> {
    if post.analysis != Analysis::Objective {
        return Err(Error::Domain("OMD needs the objective posterior".to_string()));
    }
    md_score(post, candidates, runs)
}

pub fn cmd_score(post: &ModelPosterior, candidates: &CandidateTable, runs: &[usize]) -> Result<f64> {
    if post.analysis != Analysis::Conventional {
        return Err(Error::Domain("CMD needs the conventional posterior".to_string()));
    }
    md_score(post, candidates, runs)
}

/// A scored follow-up design; `runs` is sorted nondecreasing and 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateDesign {
    pub runs: Vec<usize>,
    pub score: f64,
}

/// Score descending, then run numbers ascending.
pub fn rank_order(a: &CandidateDesign, b: &CandidateDesign) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.runs.cmp(&b.runs))
}

/// Keeps the best `k` designs under [`rank_order`].
#[derive(Debug, Clone)]
pub struct TopK {
    k: usize,
    items: Vec<CandidateDesign>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    fn admits(&self, runs: &[usize], score: f64) -> bool {
        if self.k == 0 {
            return false;
        }
        match self.items.last() {
            Some(worst) if self.items.len() == self.k => {
                score > worst.score || (score == worst.score && runs < worst.runs.as_slice())
            }
            _ => true,
        }
    }

    pub fn offer(&mut self, runs: &[usize], score: f64) {
        if !self.admits(runs, score) {
            return;
        }
        let cand = CandidateDesign {
            runs: runs.to_vec(),
            score,
        };
        if self.items.iter().any(|d| d.runs == cand.runs) {
            return;
        }
        let pos = self
            .items
            .partition_point(|d| rank_order(d, &cand) == Ordering::Less);
        self.items.insert(pos, cand);
        self.items.truncate(self.k);
    }

    pub fn merge(&mut self, other: TopK) {
        for d in other.items {
            self.offer(&d.runs, d.score);
        }
    }

    pub fn into_vec(self) -> Vec<CandidateDesign> {
        self.items
    }
}

/// Exhaustively scores the designs with lexicographic ranks `start..end`.
pub fn search_range(
    disc: &Discriminator,
    n_star: usize,
    start: u64,
    end: u64,
    top_k: usize,
) -> Result<TopK> {
    let mut top = TopK::new(top_k);
    let mut ws = Workspace::default();
    let mut failure = None;
    DesignIter::range(disc.candidate_count(), n_star, start, end)?.for_each_design(|runs| {
        if failure.is_some() {
            return;
        }
        match disc.score_with(runs, &mut ws, false) {
            Ok(s) => top.offer(runs, s),
            Err(e) => failure = Some(e),
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(top),
    }
}

/// Checked design count, refusing spaces above `max_designs`.
pub fn exhaustive_count(candidates: usize, n_star: usize, max_designs: u64) -> Result<u64> {
    let total = design_count(candidates, n_star)?;
    if total > max_designs {
        return Err(Error::DesignSpaceOverflow(format!(
            "{total} designs exceed the exhaustive limit of {max_designs}"
        )));
    }
    Ok(total)
}

/// Exhaustive single-threaded search.
pub fn search_followup(
    disc: &Discriminator,
    n_star: usize,
    top_k: usize,
    max_designs: u64,
) -> Result<Vec<CandidateDesign>> {
    let total = exhaustive_count(disc.candidate_count(), n_star, max_designs)?;
    Ok(search_range(disc, n_star, 0, total, top_k)?.into_vec())
}

/// Greedy coordinate exchange from seeded random starts. Not exhaustive:
/// returns the best designs visited.
pub fn exchange_search(
    disc: &Discriminator,
    n_star: usize,
    top_k: usize,
    starts: usize,
    seed: u64,
) -> Result<Vec<CandidateDesign>> {
    let c = disc.candidate_count();
    design_count(c, n_star).or_else(|e| match e {
        Error::DesignSpaceOverflow(_) => Ok(u64::MAX),
        other => Err(other),
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut top = TopK::new(top_k);
    let mut ws = Workspace::default();
    let mut design = vec![0usize; n_star];
    let mut trial = vec![0usize; n_star];
    for _ in 0..starts.max(1) {
        for r in design.iter_mut() {
            *r = rng.random_range(1..=c);
        }
        design.sort_unstable();
        let mut best = disc.score_with(&design, &mut ws, false)?;
        top.offer(&design, best);
        loop {
            let mut improved = false;
            for pos in 0..n_star {
                for cand in 1..=c {
                    if cand == design[pos] {
                        continue;
                    }
                    trial.copy_from_slice(&design);
                    trial[pos] = cand;
                    trial.sort_unstable();
                    let s = disc.score_with(&trial, &mut ws, false)?;
                    top.offer(&trial, s);
                    if s > best {
                        best = s;
                        design.copy_from_slice(&trial);
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
    }
    Ok(top.into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_scalar_cases() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let z = DVector::from_element(1, 0.0);
        let u = DVector::from_element(1, 1.0);
        assert!(kl_gaussian(&z, &one, &z, &one).unwrap().abs() < 1e-15);
        assert!((kl_gaussian(&z, &one, &u, &one).unwrap() - 0.5).abs() < 1e-15);
        let bad = DMatrix::from_element(1, 1, -1.0);
        assert_eq!(kl_gaussian(&z, &bad, &z, &one), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn kl_predictive_same_scale() {
        let v = DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 1.3]);
        let pi = PredictiveSummary {
            y_hat: DVector::from_vec(vec![1.0, 2.0]),
            v: v.clone(),
            precision: 0.25,
        };
        let pj = PredictiveSummary {
            y_hat: DVector::from_vec(vec![0.0, 3.0]),
            v: v.clone(),
            precision: 9.0,
        };
        let d = &pi.y_hat - &pj.y_hat;
        let want = 0.5 * 0.25 * d.dot(&v.clone().cholesky().unwrap().solve(&d));
        assert!((kl_predictive(&pi, &pj).unwrap() - want).abs() < 1e-14);
        assert!(kl_predictive(&pi, &pi).unwrap().abs() < 1e-14);
    }

    #[test]
    fn top_k_ordering() {
        let mut top = TopK::new(3);
        top.offer(&[2, 3], 1.0);
        top.offer(&[1, 4], 1.0);
        top.offer(&[1, 1], 0.5);
        top.offer(&[5, 5], 2.0);
        top.offer(&[1, 2], 0.1);
        let runs: Vec<Vec<usize>> = top.into_vec().into_iter().map(|d| d.runs).collect();
        assert_eq!(runs, vec![vec![5, 5], vec![1, 4], vec![2, 3]]);
    }

    #[test]
    fn top_k_merge_matches_single_pass() {
        let scores: Vec<(Vec<usize>, f64)> = (0..40)
            .map(|i| (vec![i / 7 + 1, i % 7 + 1], ((i * 37) % 11) as f64))
            .collect();
        let mut whole = TopK::new(5);
        for (r, s) in &scores {
            whole.offer(r, *s);
        }
        let mut merged = TopK::new(5);
        for chunk in scores.chunks(6) {
            let mut part = TopK::new(5);
            for (r, s) in chunk {
                part.offer(r, *s);
            }
            merged.merge(part);
        }
        assert_eq!(whole.into_vec(), merged.into_vec());
    }
}
