//! Model-space priors, Bayes factors and posterior model probabilities.
//!
//! Two analyses share one [`ModelPosterior`] type:
//!
//! * the objective analysis, with the robust hierarchical g-prior on model
//!   coefficients (closed-form Bayes factor against the null model) and a
//!   beta-binomial or fixed-π prior on the model space;
//! * the conventional analysis, with `β_i ~ N(0, γ²σ² I)`, a flat prior on
//!   the common coefficients and `1/σ` on the scale.
//!
//! Each entry also carries what the follow-up predictive needs: coefficient
//! estimates, the matrix `M` in `V* = I + Z* M Z*'`, and the posterior mean
//! of `1/σ²`.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::factorial::{
    build_model_matrix, enumerate_models, subsets_by_size, AliasPolicy, DesignTable, FactorModel,
    FactorSpace, ModelMatrix,
};
use crate::linalg;
use crate::specfun::{log_beta, log_gamma, log_hyp2f1, Hyp2F1Args};

/// Smallest SSE ratio used in the Bayes factor; exact fits are capped here.
pub const Q_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpacePrior {
    /// Factor activity probability integrated against Beta(a, b).
    BetaBinomial { a: f64, b: f64 },
    /// Each factor independently active with probability π.
    FixedPi(f64),
}

impl Default for ModelSpacePrior {
    fn default() -> Self {
        Self::BetaBinomial { a: 1.0, b: 1.0 }
    }
}

impl ModelSpacePrior {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::BetaBinomial { a, b } if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() => {
                Ok(())
            }
            Self::FixedPi(p) if p > 0.0 && p < 1.0 => Ok(()),
            Self::BetaBinomial { a, b } => Err(Error::Domain(format!(
                "beta-binomial parameters must be positive, got a = {a}, b = {b}"
            ))),
            Self::FixedPi(p) => Err(Error::Domain(format!("π must lie in (0, 1), got {p}"))),
        }
    }

    /// `ln P(M)/P(M_0)` for a model with `f` of `k` factors active.
    pub fn log_prior_odds(&self, f: usize, k: usize) -> Result<f64> {
        self.validate()?;
        if f > k {
            return Err(Error::Domain(format!("{f} active factors out of {k}")));
        }
        let (f64f, kf) = (f as f64, k as f64);
        match *self {
            Self::BetaBinomial { a, b } => Ok(log_beta(a + f64f, b + kf - f64f)? - log_beta(a, b + kf)?),
            Self::FixedPi(p) => Ok(f64f * libm::log(p / (1.0 - p))),
        }
    }
}

pub fn prior_odds(model: &FactorModel, k: usize, prior: &ModelSpacePrior) -> Result<f64> {
    prior.log_prior_odds(model.f(), k).map(libm::exp)
}

/// Least-squares fit of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsSummary {
    pub gamma_hat: DVector<f64>,
    pub sse: f64,
    pub df: usize,
    pub gram_inv: DMatrix<f64>,
}

pub fn fit_ols(mm: &ModelMatrix, y: &[f64]) -> Result<OlsSummary> {
    if y.len() != mm.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} responses for a {}-row model matrix",
            y.len(),
            mm.n()
        )));
    }
    if !mm.rank_ok() {
        return Err(Error::RankDeficient);
    }
    let z = mm.z();
    let yv = DVector::from_column_slice(y);
    let mut gamma_hat = linalg::least_squares(&z, &yv)?;
    // one step of iterative refinement on the residual
    gamma_hat += linalg::least_squares(&z, &(&yv - &z * &gamma_hat))?;
    let resid = &yv - &z * &gamma_hat;
    let gram_inv = linalg::gram_inverse(&z)?;
    Ok(OlsSummary {
        gamma_hat,
        sse: resid.norm_squared(),
        df: mm.df() as usize,
        gram_inv,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesFactor {
    pub log_bf: f64,
    /// `SSE_i / SSE_0` after capping.
    pub q: f64,
    /// The fit was exact and `q` was raised to [`Q_FLOOR`].
    pub saturated: bool,
}

/// Log Bayes factor of a model with `t` terms against the null model under
/// the robust hierarchical g-prior.
pub fn robust_log_bf(sse_i: f64, sse_0: f64, n: usize, t0: usize, t: usize) -> Result<BayesFactor> {
    if !(sse_0 > 0.0) {
        return Err(Error::Degenerate(
            "null-model residual sum of squares is zero (constant response)".to_string(),
        ));
    }
    if t == 0 {
        return Ok(BayesFactor {
            log_bf: 0.0,
            q: 1.0,
            saturated: false,
        });
    }
    if n <= t + t0 {
        return Err(Error::Domain(format!(
            "model with {t} terms needs more than {} runs, got {n}",
            t + t0
        )));
    }
    if !(sse_i >= 0.0) {
        return Err(Error::Domain(format!("negative residual sum of squares {sse_i}")));
    }
    let mut q = sse_i / sse_0;
    let saturated = q < Q_FLOOR;
    if saturated {
        q = Q_FLOOR;
    }
    let (nf, tf, t0f) = (n as f64, t as f64, t0 as f64);
    let z = (1.0 - 1.0 / q) * (tf + t0f) / (nf + 1.0);
    let args = Hyp2F1Args::new((tf + 1.0) / 2.0, (nf - t0f) / 2.0, (tf + 3.0) / 2.0, z)?;
    let log_bf = -(tf / 2.0) * libm::log((nf + 1.0) / (tf + t0f))
        - ((nf - t0f) / 2.0) * libm::log(q)
        - libm::log(tf + 1.0)
        + log_hyp2f1(args)?;
    Ok(BayesFactor { log_bf, q, saturated })
}

/// Log marginal likelihood under the conventional prior: flat on the common
/// coefficients, `1/σ` on the scale and `N(0, γ²σ²I)` on the model terms.
///
/// `log_det_a` is `ln|Z'Z + diag(0, I/γ²)|` and `resid` the shrunk residual
/// `y'y − y'Z A⁻¹ Z'y`.
pub fn conventional_log_ml(
    resid: f64,
    log_det_a: f64,
    gamma: f64,
    n: usize,
    t0: usize,
    t: usize,
) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("prior scale γ must be positive, got {gamma}")));
    }
    let m = n as f64 - t0 as f64;
    if !(m > 0.0) {
        return Err(Error::Domain("need more runs than common columns".to_string()));
    }
    if !(resid > 0.0) {
        return Err(Error::Degenerate("shrunk residual is zero".to_string()));
    }
    Ok(-(m / 2.0) * libm::log(2.0 * core::f64::consts::PI) - t as f64 * libm::log(gamma)
        - 0.5 * log_det_a
        + log_gamma(m / 2.0)?
        - core::f64::consts::LN_2
        - (m / 2.0) * libm::log(resid / 2.0))
}

/// The `γ → ∞` limit of [`conventional_log_ml`] after adding `t ln γ`:
/// the same integral with a flat prior on every coefficient.
pub fn flat_prior_log_ml(sse: f64, log_det_gram: f64, n: usize, t0: usize) -> Result<f64> {
    let m = n as f64 - t0 as f64;
    if !(sse > 0.0) || !(m > 0.0) {
        return Err(Error::Degenerate("flat-prior marginal needs sse > 0 and n > t0".to_string()));
    }
    Ok(-(m / 2.0) * libm::log(2.0 * core::f64::consts::PI) - 0.5 * log_det_gram + log_gamma(m / 2.0)?
        - core::f64::consts::LN_2
        - (m / 2.0) * libm::log(sse / 2.0))
}

/// Conjugate fit of one model under the conventional prior.
#[derive(Debug, Clone, PartialEq)]
pub struct ConventionalFit {
    /// Posterior mean `A⁻¹Z'y` of all coefficients.
    pub coef: DVector<f64>,
    pub a_inv: DMatrix<f64>,
    pub resid: f64,
    pub log_ml: f64,
}

pub fn fit_conventional(mm: &ModelMatrix, y: &[f64], gamma: f64) -> Result<ConventionalFit> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("prior scale γ must be positive, got {gamma}")));
    }
    if y.len() != mm.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} responses for a {}-row model matrix",
            y.len(),
            mm.n()
        )));
    }
    let z = mm.z();
    let yv = DVector::from_column_slice(y);
    let mut a = z.transpose() * &z;
    let ridge = 1.0 / (gamma * gamma);
    for j in mm.t0()..a.ncols() {
        a[(j, j)] += ridge;
    }
    let log_det_a = linalg::spd_log_det(&a)?;
    let a_inv = linalg::spd_inverse(a)?;
    let zty = z.transpose() * &yv;
    let coef = &a_inv * &zty;
    // y'y − y'Z A⁻¹ Z'y, written as ‖y − Zc‖² + c'Dc to avoid cancellation
    let penalty: f64 = coef.rows(mm.t0(), mm.t()).norm_squared() * ridge;
    let resid = ((&yv - &z * &coef).norm_squared() + penalty).max(f64::MIN_POSITIVE);
    let log_ml = conventional_log_ml(resid, log_det_a, gamma, mm.n(), mm.t0(), mm.t())?;
    Ok(ConventionalFit {
        coef,
        a_inv,
        resid,
        log_ml,
    })
}

/// One model in a posterior, with what its follow-up predictive needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEntry {
    pub model: FactorModel,
    pub matrix: ModelMatrix,
    /// Log Bayes factor against the null model.
    pub log_bf: f64,
    pub log_prior_odds: f64,
    pub prob: f64,
    /// Residual ratio against the null model (diagnostic).
    pub q: f64,
    pub saturated: bool,
    /// Coefficients of `[X0 Xi]` used for predictive means.
    pub coef: DVector<f64>,
    /// `M` in the predictive scale matrix `I + Z* M Z*'`.
    pub scale: DMatrix<f64>,
    /// Posterior mean of `1/σ²`.
    pub precision: f64,
    /// Residual sum of squares (OLS or shrunk).
    pub sse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Analysis {
    Objective,
    Conventional,
}

#[derive(Debug, Clone)]
pub struct ModelPosterior {
    pub analysis: Analysis,
    pub space: FactorSpace,
    pub with_block: bool,
    pub n: usize,
    pub entries: Vec<PosteriorEntry>,
    /// Factor sets dropped as inadmissible.
    pub rejected: Vec<FactorModel>,
}

impl ModelPosterior {
    pub fn probs(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.prob).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn t0(&self) -> usize {
        self.entries.first().map_or(1, |e| e.matrix.t0())
    }

    /// Entry indices by probability descending; ties keep enumeration order.
    pub fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.entries.len()).collect();
        idx.sort_by(|&i, &j| {
            self.entries[j]
                .prob
                .partial_cmp(&self.entries[i].prob)
                .unwrap_or(core::cmp::Ordering::Equal)
        });
        idx
    }

    pub fn saturated_count(&self) -> usize {
        self.entries.iter().filter(|e| e.saturated).count()
    }
}

/// Normalizes `log_bf + log_prior_odds` into probabilities with a max-shift.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    if log_w.is_empty() {
        return Err(Error::EmptyModelSet);
    }
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Degenerate("non-finite model evidence".to_string()));
    }
    let w: Vec<f64> = log_w.iter().map(|l| libm::exp(l - max)).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// Fills in `prob` for every entry from its log Bayes factor and prior odds.
pub fn model_posterior(entries: &mut [PosteriorEntry]) -> Result<()> {
    let log_w: Vec<f64> = entries.iter().map(|e| e.log_bf + e.log_prior_odds).collect();
    let probs = normalize_log_weights(&log_w)?;
    for (e, p) in entries.iter_mut().zip(probs) {
        e.prob = p;
    }
    Ok(())
}

/// Posterior activity probability of each factor.
pub fn factor_activity(post: &ModelPosterior) -> Vec<f64> {
    let k = post.space.k();
    let mut act = alloc::vec![0.0; k];
    for e in &post.entries {
        for f in e.model.active_factors() {
            act[f] += e.prob;
        }
    }
    act
}

/// Objective analysis over the admissible model space.
pub fn objective_posterior(
    space: &FactorSpace,
    design: &DesignTable,
    with_block: bool,
    prior: &ModelSpacePrior,
    policy: AliasPolicy,
) -> Result<ModelPosterior> {
    prior.validate()?;
    let models = enumerate_models(space, design, with_block, policy)?;
    let y = design.y();
    let n = design.n();
    let k = space.k();
    let mut entries = Vec::with_capacity(models.admissible.len());
    let mut sse_0 = 0.0;
    for (model, matrix) in models.admissible {
        let ols = fit_ols(&matrix, y)?;
        if model.is_null() {
            sse_0 = ols.sse;
        }
        let bf = robust_log_bf(ols.sse, sse_0, n, matrix.t0(), matrix.t())?;
        let precision = if ols.sse > 0.0 {
            ols.df as f64 / ols.sse
        } else {
            f64::INFINITY
        };
        entries.push(PosteriorEntry {
            log_prior_odds: prior.log_prior_odds(model.f(), k)?,
            log_bf: bf.log_bf,
            prob: 0.0,
            q: bf.q,
            saturated: bf.saturated,
            coef: ols.gamma_hat,
            scale: ols.gram_inv,
            precision,
            sse: ols.sse,
            model,
            matrix,
        });
    }
    model_posterior(&mut entries)?;
    Ok(ModelPosterior {
        analysis: Analysis::Objective,
        space: space.clone(),
        with_block,
        n,
        entries,
        rejected: models.rejected,
    })
}

/// Conventional analysis over all `2^k` effect-forced models.
///
/// The proper prior on the model terms keeps every marginal finite, so no
/// rank filter or alias pruning is applied.
pub fn conventional_posterior(
    space: &FactorSpace,
    design: &DesignTable,
    with_block: bool,
    gamma: f64,
    prior: &ModelSpacePrior,
) -> Result<ModelPosterior> {
    prior.validate()?;
    if design.k() != space.k() {
        return Err(Error::DimensionMismatch(format!(
            "factor space has {} factors, design has {}",
            space.k(),
            design.k()
        )));
    }
    let y = design.y();
    let n = design.n();
    let k = space.k();
    let mut entries: Vec<PosteriorEntry> = Vec::with_capacity(1 << k);
    let mut null_log_ml = 0.0;
    let mut null_resid = 1.0;
    for mask in subsets_by_size(k) {
        let model = FactorModel::effect_forced(mask, space.order());
        let matrix = build_model_matrix(design, &model, with_block)?;
        let fit = fit_conventional(&matrix, y, gamma)?;
        if model.is_null() {
            null_log_ml = fit.log_ml;
            null_resid = fit.resid;
        }
        entries.push(PosteriorEntry {
            log_prior_odds: prior.log_prior_odds(model.f(), k)?,
            log_bf: fit.log_ml - null_log_ml,
            prob: 0.0,
            q: fit.resid / null_resid,
            saturated: false,
            precision: (n - matrix.t0()) as f64 / fit.resid,
            coef: fit.coef,
            scale: fit.a_inv,
            sse: fit.resid,
            model,
            matrix,
        });
    }
    model_posterior(&mut entries)?;
    Ok(ModelPosterior {
        analysis: Analysis::Conventional,
        space: space.clone(),
        with_block,
        n,
        entries,
        rejected: Vec::new(),
    })
}
