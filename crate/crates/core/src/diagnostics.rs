//! Posterior heterogeneity summaries, factorial contrasts for normal-plot
//! data, and a consistency check of the robust-prior predictive against the
//! reference-prior predictive.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::discrimination::kl_gaussian;
use crate::error::{Error, Result};
use crate::factorial::{
    build_model_matrix, subsets_by_size, CandidateTable, DesignTable, FactorModel, FactorSpace,
    Term,
};
use crate::linalg;
use crate::posterior::{factor_activity, fit_ols, ModelPosterior};
use crate::quad::{integrate, Tolerance};

/// Number of models the Shannon entropy is normalized against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShannonNormalizer {
    /// All `2^k` factor subsets; inadmissible ones count with probability 0.
    #[default]
    ModelSpace,
    /// Only the admissible models in the posterior.
    Admissible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneityReport {
    pub shannon_normalized: f64,
    pub cv_factors: f64,
    pub model_count: usize,
    pub normalizer_count: usize,
}

/// `−Σ p ln p / ln(count)`, with `0 ln 0 = 0`.
pub fn shannon_heterogeneity(probs: &[f64], count: usize) -> Result<f64> {
    if count < 2 {
        return Err(Error::Domain(format!(
            "Shannon heterogeneity needs at least two models, got {count}"
        )));
    }
    if probs.len() > count {
        return Err(Error::Domain(format!(
            "{} probabilities for a normalizer of {count} models",
            probs.len()
        )));
    }
    let h: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * libm::log(p))
        .sum();
    Ok(h / libm::log(count as f64))
}

/// Coefficient of variation with the population standard deviation.
pub fn cv_factor_activity(activity: &[f64]) -> Result<f64> {
    let k = activity.len() as f64;
    let mean = activity.iter().sum::<f64>() / k;
    if !(mean > 0.0) {
        return Err(Error::Domain("factor activities have zero mean".to_string()));
    }
    let var = activity.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / k;
    Ok(libm::sqrt(var) / mean)
}

pub fn heterogeneity(post: &ModelPosterior, normalizer: ShannonNormalizer) -> Result<HeterogeneityReport> {
    let count = match normalizer {
        ShannonNormalizer::ModelSpace => 1usize << post.space.k(),
        ShannonNormalizer::Admissible => post.len(),
    };
    Ok(HeterogeneityReport {
        shannon_normalized: shannon_heterogeneity(&post.probs(), count)?,
        cv_factors: cv_factor_activity(&factor_activity(post))?,
        model_count: post.len(),
        normalizer_count: count,
    })
}

/// One factorial effect estimate with its normal-plot position.
#[derive(Debug, Clone, PartialEq)]
pub struct Contrast {
    pub term: Term,
    pub label: String,
    pub value: f64,
    /// `(i − 0.5)/m` where `i` is the 1-based rank of `value` among the `m` contrasts.
    pub plot_position: f64,
}

/// Effect estimates `col·y / 2^{k−1}` for every term up to `order` on a full
/// factorial, in canonical term order.
pub fn factorial_contrasts(
    design: &DesignTable,
    space: &FactorSpace,
    order: usize,
) -> Result<Vec<Contrast>> {
    if !design.is_full_factorial() {
        return Err(Error::InvalidDesign(
            "contrasts need a complete two-level factorial".to_string(),
        ));
    }
    if design.k() != space.k() {
        return Err(Error::DimensionMismatch(format!(
            "factor space has {} factors, design has {}",
            space.k(),
            design.k()
        )));
    }
    let k = design.k();
    let order = order.clamp(1, 3.min(k));
    let scale = 1.0 / (1u64 << (k - 1)) as f64;
    let mut terms: Vec<Term> = Vec::new();
    for size in 1..=order {
        for mask in subsets_by_size(k) {
            if mask.count_ones() as usize == size {
                let idx: Vec<usize> = (0..k).filter(|j| mask & (1 << j) != 0).collect();
                terms.push(Term::new(&idx)?);
            }
        }
    }
    let mut out: Vec<Contrast> = terms
        .into_iter()
        .map(|term| {
            let value = design
                .runs()
                .zip(design.y())
                .map(|(run, y)| f64::from(term.sign(run)) * y)
                .sum::<f64>()
                * scale;
            Contrast {
                label: space.term_label(&term),
                term,
                value,
                plot_position: 0.0,
            }
        })
        .collect();
    let m = out.len();
    let mut order_idx: Vec<usize> = (0..m).collect();
    order_idx.sort_by(|&a, &b| {
        out[a]
            .value
            .partial_cmp(&out[b].value)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    for (rank, &i) in order_idx.iter().enumerate() {
        out[i].plot_position = (rank as f64 + 0.5) / m as f64;
    }
    Ok(out)
}

/// Lower end of the support of the robust g-prior, `(1+n)/(t+t0) − 1`.
pub fn g_lower(n: usize, t0: usize, t: usize) -> f64 {
    (1.0 + n as f64) / (t + t0) as f64 - 1.0
}

/// Density of the robust g-prior, zero below [`g_lower`].
pub fn g_density(g: f64, n: usize, t0: usize, t: usize) -> f64 {
    let c = (1.0 + n as f64) / (t + t0) as f64;
    if g <= c - 1.0 {
        return 0.0;
    }
    0.5 * libm::sqrt(c) * libm::pow(g + 1.0, -1.5)
}

/// Total mass of the g-prior by quadrature in `u = 1/(1+g)`, `u = v²`.
pub fn g_density_mass(n: usize, t0: usize, t: usize) -> Result<f64> {
    let c = (1.0 + n as f64) / (t + t0) as f64;
    let v_max = 1.0 / libm::sqrt(c);
    // g = 1/v² − 1, dg = −2 v⁻³ dv
    integrate(
        |v| {
            if v <= 0.0 {
                return 0.0;
            }
            let g = 1.0 / (v * v) - 1.0;
            g_density(g.max(c - 1.0 + f64::EPSILON * c), n, t0, t) * 2.0 / (v * v * v)
        },
        0.0,
        v_max,
        Tolerance {
            abs: 1e-14,
            rel: 1e-13,
            max_intervals: 4000,
        },
    )
}

/// Moment-matched Gaussian predictives for the new runs.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictivePair {
    pub reference_mean: DVector<f64>,
    pub reference_cov: DMatrix<f64>,
    pub robust_mean: DVector<f64>,
    pub robust_cov: DMatrix<f64>,
}

/// Robust and reference predictives of one model for the `targets` runs.
///
/// Both use `σ²` at `1/E[1/σ²]`: `SSE/df` for the reference fit and
/// `(s SSE + (1−s) SSE_0)/(n − 1)` given `g`, `s = g/(1+g)`, for the robust
/// fit. The robust mixture over `g` is reduced to its mean and covariance.
pub fn predictive_pair(
    design: &DesignTable,
    model: &FactorModel,
    targets: &CandidateTable,
) -> Result<PredictivePair> {
    if model.is_null() {
        return Err(Error::Domain("the check needs a non-null model".to_string()));
    }
    let mm = build_model_matrix(design, model, false)?;
    if !mm.rank_ok() {
        return Err(Error::RankDeficient);
    }
    let (n, t0, t) = (mm.n(), mm.t0(), mm.t());
    let y = design.y();
    let ols = fit_ols(&mm, y)?;
    let null = fit_ols(&build_model_matrix(design, &FactorModel::null(), false)?, y)?;
    if !(null.sse > 0.0) {
        return Err(Error::Degenerate("constant response".to_string()));
    }
    let sse_i = ols.sse.max(f64::MIN_POSITIVE);
    let sse_0 = null.sse;
    let q = sse_i / sse_0;

    let m = targets.len();
    let xi_star = DMatrix::from_fn(m, t, |r, c| {
        f64::from(model.terms()[c].sign(targets.run(r + 1)))
    });
    let mut z_star = DMatrix::from_element(m, t + 1, 1.0);
    z_star.columns_mut(1, t).copy_from(&xi_star);

    let v_ref = DMatrix::identity(m, m) + &z_star * &ols.gram_inv * z_star.transpose();
    let reference_mean = &z_star * &ols.gamma_hat;
    let reference_cov = v_ref * (sse_i / ols.df as f64);

    // centred slopes: the same fitted values, with the intercept at ȳ
    let xi = mm.xi();
    let x_bar = DVector::from_fn(t, |c, _| xi.column(c).mean());
    let y_bar = y.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, t, |r, c| xi[(r, c)] - x_bar[c]);
    let xc_star = DMatrix::from_fn(m, t, |r, c| xi_star[(r, c)] - x_bar[c]);
    let vtv_inv = linalg::spd_inverse(xc.transpose() * &xc)?;
    let slopes = ols.gamma_hat.rows(1, t).into_owned();
    let h = &xc_star * &slopes;
    let h_scale = &xc_star * &vtv_inv * xc_star.transpose();
    let common = DMatrix::identity(m, m) + DMatrix::from_element(m, m, 1.0 / n as f64);

    let (w0, w1, w2) = g_moments(n, t0, t, q)?;
    let (es, es2) = (w1 / w0, w2 / w0);
    let var_s = (es2 - es * es).max(0.0);
    let delta = sse_0 - sse_i;
    let dof = (n - t0) as f64;

    let robust_mean = DVector::from_element(m, y_bar) + &h * es;
    let robust_cov = common * ((sse_0 - es * delta) / dof)
        + h_scale * ((es * sse_0 - es2 * delta) / dof)
        + &h * h.transpose() * var_s;

    Ok(PredictivePair {
        reference_mean,
        reference_cov,
        robust_mean,
        robust_cov,
    })
}

/// Unnormalized posterior moments `∫w`, `∫w s`, `∫w s²` of `s = g/(1+g)`,
/// with `w(g) ∝ (1+g)^{(n−t0−t)/2} (1+gQ)^{−(n−t0)/2} p(g)`.
fn g_moments(n: usize, t0: usize, t: usize, q: f64) -> Result<(f64, f64, f64)> {
    let c = (1.0 + n as f64) / (t + t0) as f64;
    let v_max = 1.0 / libm::sqrt(c);
    let half = (n - t0) as f64 / 2.0;
    // in v with u = v² = 1/(1+g): w ∝ v^t (v² + Q(1 − v²))^{−(n−t0)/2}
    let log_w = |v: f64| {
        let u = v * v;
        t as f64 * libm::log(v) - half * libm::log(u + q * (1.0 - u))
    };
    let shift = (1..=64)
        .map(|i| log_w(v_max * i as f64 / 64.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = Tolerance::default();
    let moment = |power: i32| {
        integrate(
            |v| {
                if v <= 0.0 {
                    return 0.0;
                }
                let s = 1.0 - v * v;
                libm::exp(log_w(v) - shift) * libm::pow(s, f64::from(power))
            },
            0.0,
            v_max,
            tol,
        )
    };
    Ok((moment(0)?, moment(1)?, moment(2)?))
}

/// `KL(reference ‖ robust)` for the moment-matched predictives.
pub fn predictive_divergence(
    design: &DesignTable,
    model: &FactorModel,
    targets: &CandidateTable,
) -> Result<f64> {
    let p = predictive_pair(design, model, targets)?;
    kl_gaussian(&p.reference_mean, &p.reference_cov, &p.robust_mean, &p.robust_cov)
}

/// Synthetic setting for [`robust_vs_reference_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCheck {
    /// Base runs, replicated to reach each sample size; also the prediction targets.
    pub base: CandidateTable,
    pub model: FactorModel,
    pub intercept: f64,
    /// One coefficient per model term.
    pub coefficients: Vec<f64>,
    pub noise_sd: f64,
    pub sizes: Vec<usize>,
    pub seed: u64,
}

impl ReferenceCheck {
    /// Replicated 2², model {A,B} with its interaction, n = 8, 16, 32, 64.
    pub fn two_factor(seed: u64) -> Self {
        let space = FactorSpace::with_letters(2, crate::factorial::InteractionOrder::Two)
            .expect("two factors");
        Self {
            base: crate::factorial::enumerate_candidate_runs(&space),
            model: FactorModel::from_factors(&[0, 1], space.order()),
            intercept: 10.0,
            coefficients: vec![1.0, 0.5, 0.3],
            noise_sd: 1.0,
            sizes: vec![8, 16, 32, 64],
            seed,
        }
    }
}

/// Divergence between the reference and robust predictives for growing
/// replicated samples. The noise draws are nested: each sample extends the
/// previous one.
pub fn robust_vs_reference_check(cfg: &ReferenceCheck) -> Result<Vec<(usize, f64)>> {
    if cfg.coefficients.len() != cfg.model.t() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} model terms",
            cfg.coefficients.len(),
            cfg.model.t()
        )));
    }
    let base = cfg.base.len();
    let n_max = cfg.sizes.iter().copied().max().unwrap_or(0);
    if cfg.sizes.iter().any(|&n| n == 0 || n % base != 0) {
        return Err(Error::InvalidDesign(format!(
            "sample sizes must be positive multiples of {base}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise: Vec<f64> = (0..n_max)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * cfg.noise_sd
        })
        .collect();
    let k = cfg.base.k();
    let mut out = Vec::with_capacity(cfg.sizes.len());
    for &n in &cfg.sizes {
        let mut runs = Vec::with_capacity(n * k);
        let mut y = Vec::with_capacity(n);
        for (r, e) in noise[..n].iter().enumerate() {
            let run = cfg.base.run(r % base + 1);
            runs.extend_from_slice(run);
            let mean = cfg.intercept
                + cfg
                    .model
                    .terms()
                    .iter()
                    .zip(&cfg.coefficients)
                    .map(|(term, b)| f64::from(term.sign(run)) * b)
                    .sum::<f64>();
            y.push(mean + e);
        }
        let design = DesignTable::new(k, runs, y, None)?;
        out.push((n, predictive_divergence(&design, &cfg.model, &cfg.base)?));
    }
    Ok(out)
}
