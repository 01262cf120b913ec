//! Checks against independent oracles: frozen extended-precision tables and
//! direct numerical integration.

mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use obayes_core::discrimination::{entry_predictive, kl_gaussian, kl_predictive};
use obayes_core::factorial::{build_model_matrix, FactorModel, InteractionOrder};
use obayes_core::posterior::{
    conventional_log_ml, fit_conventional, fit_ols, flat_prior_log_ml, objective_posterior,
    robust_log_bf, ModelSpacePrior,
};
use obayes_core::quad::{integrate, Tolerance};
use obayes_core::specfun::{hyp2f1, Hyp2F1Args};
use obayes_core::AliasPolicy;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn read_table(name: &str) -> Vec<Vec<f64>> {
    let path = format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|v| v.trim().parse().unwrap()).collect())
        .collect()
}

#[test]
fn hyp2f1_matches_extended_precision_grid() {
    let rows = read_table("hyp2f1_grid.csv");
    assert_eq!(rows.len(), 100);
    assert!(rows.iter().any(|r| r[3] <= -39.0));
    for r in rows {
        let got = hyp2f1(Hyp2F1Args::new(r[0], r[1], r[2], r[3]).unwrap()).unwrap();
        let rel = ((got - r[4]) / r[4]).abs();
        assert!(rel < 1e-10, "2F1({}, {}; {}; {}) = {got}, want {}", r[0], r[1], r[2], r[3], r[4]);
    }
}

#[test]
fn robust_bf_matches_frozen_quadrature() {
    for r in read_table("robust_bf_cases.csv") {
        let (n, t0, t, q) = (r[0] as usize, r[1] as usize, r[2] as usize, r[3]);
        let got = robust_log_bf(q, 1.0, n, t0, t).unwrap().log_bf;
        let rel = (got.exp() - r[4].exp()).abs() / r[4].exp();
        assert!(rel < 1e-8, "n={n} t0={t0} t={t} q={q}: {got} vs {}", r[4]);
    }
}

/// `BF = ∫ (1+g)^{(n−t0−t)/2} (1+gQ)^{−(n−t0)/2} p(g) dg` computed live.
fn bf_by_quadrature(q: f64, n: usize, t0: usize, t: usize) -> f64 {
    let c = (1.0 + n as f64) / (t + t0) as f64;
    let lo = c - 1.0;
    let (e1, e2) = ((n - t0 - t) as f64 / 2.0, (n - t0) as f64 / 2.0);
    let w = |g: f64| {
        (1.0 + g).powf(e1) * (1.0 + g * q).powf(-e2) * 0.5 * c.sqrt() * (g + 1.0).powf(-1.5)
    };
    // g = lo + x/(1−x) maps [0, 1) onto [lo, ∞)
    integrate(
        |x| {
            if x >= 1.0 {
                return 0.0;
            }
            let g = lo + x / (1.0 - x);
            w(g) / ((1.0 - x) * (1.0 - x))
        },
        0.0,
        1.0,
        Tolerance::default(),
    )
    .unwrap()
}

#[test]
fn robust_bf_matches_live_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    use rand::Rng;
    for _ in 0..20 {
        let t = rng.random_range(1..=8usize);
        let t0 = rng.random_range(1..=2usize);
        let n = rng.random_range(t + t0 + 1..=32usize);
        let q = rng.random_range(0.02..1.5);
        let closed = robust_log_bf(q, 1.0, n, t0, t).unwrap().log_bf.exp();
        let numeric = bf_by_quadrature(q, n, t0, t);
        assert!(
            ((closed - numeric) / numeric).abs() < 1e-6,
            "n={n} t0={t0} t={t} q={q}: {closed} vs {numeric}"
        );
    }
}

#[test]
fn reactor_model_bf_matches_quadrature() {
    let d = screening();
    let null = fit_ols(&build_model_matrix(&d, &FactorModel::null(), false).unwrap(), d.y()).unwrap();
    let b = FactorModel::from_factors(&[1], InteractionOrder::Two);
    let fb = fit_ols(&build_model_matrix(&d, &b, false).unwrap(), d.y()).unwrap();
    let closed = robust_log_bf(fb.sse, null.sse, 8, 1, 1).unwrap().log_bf.exp();
    let numeric = bf_by_quadrature(fb.sse / null.sse, 8, 1, 1);
    assert!(((closed - numeric) / numeric).abs() < 1e-9);
}

#[test]
fn reactor_null_fit() {
    let d = screening();
    let f = fit_ols(&build_model_matrix(&d, &FactorModel::null(), false).unwrap(), d.y()).unwrap();
    assert!((f.gamma_hat[0] - 64.625).abs() < 1e-12);
    assert!((f.sse - 1903.875).abs() < 1e-9, "{}", f.sse);
    assert_eq!(f.df, 7);
}

#[test]
fn reactor_bde_fit_matches_pseudoinverse() {
    let d = screening();
    let m = FactorModel::from_factors(&[1, 3, 4], InteractionOrder::Two);
    let mm = build_model_matrix(&d, &m, false).unwrap();
    assert_eq!((mm.t(), mm.df()), (6, 1));
    assert!(mm.rank_ok());
    let z = mm.z();
    let y = DVector::from_column_slice(d.y());
    let pinv = z.clone().pseudo_inverse(1e-12).unwrap();
    let beta = &pinv * &y;
    let sse = (&y - &z * &beta).norm_squared();
    let f = fit_ols(&mm, d.y()).unwrap();
    assert!((f.sse - sse).abs() < 1e-8 * sse.max(1.0));
    assert!((f.gamma_hat - beta).amax() < 1e-9);
}

#[test]
fn exact_fit_has_zero_sse() {
    let d = screening();
    let m = FactorModel::from_factors(&[1], InteractionOrder::Two);
    let mm = build_model_matrix(&d, &m, false).unwrap();
    let y: Vec<f64> = (0..8).map(|r| 3.0 + 2.0 * mm.xi()[(r, 0)]).collect();
    assert!(fit_ols(&mm, &y).unwrap().sse < 1e-20);
}

/// Log of the conventional marginal likelihood for model {B} by integrating
/// the intercept out analytically and (β_B, σ) numerically.
#[test]
fn conventional_marginal_matches_two_dimensional_quadrature() {
    let d = screening();
    let gamma = 0.4;
    let m = FactorModel::from_factors(&[1], InteractionOrder::Two);
    let mm = build_model_matrix(&d, &m, false).unwrap();
    let closed = fit_conventional(&mm, d.y(), gamma).unwrap().log_ml;

    let n = d.n() as f64;
    let y = d.y();
    let x: Vec<f64> = (0..d.n()).map(|r| mm.xi()[(r, 0)]).collect();
    let (ym, xm) = (y.iter().sum::<f64>() / n, x.iter().sum::<f64>() / n);
    let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
    let xc: Vec<f64> = x.iter().map(|v| v - xm).collect();
    let s = |b: f64| yc.iter().zip(&xc).map(|(a, c)| (a - b * c).powi(2)).sum::<f64>();
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    // log integrand after the intercept integral, minus the closed form
    let log_f = |b: f64, sigma: f64| {
        let s2 = sigma * sigma;
        -(n / 2.0) * (ln2pi + s2.ln()) + 0.5 * (ln2pi + s2.ln() - n.ln()) - s(b) / (2.0 * s2)
            - 0.5 * (ln2pi + (gamma * gamma * s2).ln())
            - b * b / (2.0 * gamma * gamma * s2)
            - sigma.ln()
            - closed
    };
    let tol = Tolerance {
        abs: 1e-14,
        rel: 1e-10,
        max_intervals: 4000,
    };
    // σ = e^u, dσ = σ du
    let total = integrate(
        |u| {
            let sigma = u.exp();
            let sd = gamma * sigma;
            integrate(|b| (log_f(b, sigma)).exp(), -40.0 * sd, 40.0 * sd, tol).unwrap() * sigma
        },
        -2.0,
        8.0,
        tol,
    )
    .unwrap();
    assert!((total - 1.0).abs() < 1e-6, "ratio {total}");
}

#[test]
fn conventional_marginal_flat_limit() {
    let d = screening();
    let m = FactorModel::from_factors(&[1, 3], InteractionOrder::Two);
    let mm = build_model_matrix(&d, &m, false).unwrap();
    let ols = fit_ols(&mm, d.y()).unwrap();
    let z = mm.z();
    let log_det = (z.transpose() * &z).determinant().ln();
    let flat = flat_prior_log_ml(ols.sse, log_det, d.n(), 1).unwrap();
    let gamma = 1e6;
    let fit = fit_conventional(&mm, d.y(), gamma).unwrap();
    let limit = fit.log_ml + mm.t() as f64 * gamma.ln();
    assert!((limit - flat).abs() < 1e-6, "{limit} vs {flat}");
}

#[test]
fn conventional_null_equals_flat_null() {
    let d = screening();
    let mm = build_model_matrix(&d, &FactorModel::null(), false).unwrap();
    let fit = fit_conventional(&mm, d.y(), 2.0).unwrap();
    let flat = flat_prior_log_ml(1903.875, 8f64.ln(), 8, 1).unwrap();
    assert!((fit.log_ml - flat).abs() < 1e-12, "{} {}", fit.log_ml, flat);
    assert!(conventional_log_ml(1.0, 0.0, 0.0, 8, 1, 0).is_err());
}

fn random_spd(rng: &mut ChaCha8Rng, s: usize) -> DMatrix<f64> {
    let a = DMatrix::<f64>::from_fn(s, s, |_, _| StandardNormal.sample(rng));
    &a * a.transpose() + DMatrix::identity(s, s) * 0.5
}

#[test]
fn gaussian_kl_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let s = 3;
    let s0 = random_spd(&mut rng, s);
    let s1 = random_spd(&mut rng, s);
    let mu0 = DVector::from_fn(s, |_, _| StandardNormal.sample(&mut rng));
    let mu1 = DVector::from_fn(s, |_, _| StandardNormal.sample(&mut rng));
    let exact = kl_gaussian(&mu0, &s0, &mu1, &s1).unwrap();

    let l0 = s0.clone().cholesky().unwrap().l();
    let (p0, p1) = (s0.clone().try_inverse().unwrap(), s1.clone().try_inverse().unwrap());
    let ld = (s1.determinant() / s0.determinant()).ln();
    let samples = 1_000_000;
    let (mut sum, mut sum2) = (0.0, 0.0);
    let mut e = DVector::<f64>::zeros(s);
    for _ in 0..samples {
        for v in e.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let x = &mu0 + &l0 * &e;
        let (d0, d1) = (&x - &mu0, &x - &mu1);
        // log f0(x) − log f1(x)
        let v = 0.5 * (ld + d1.dot(&(&p1 * &d1)) - d0.dot(&(&p0 * &d0)));
        sum += v;
        sum2 += v * v;
    }
    let mean = sum / samples as f64;
    let se = ((sum2 / samples as f64 - mean * mean) / samples as f64).sqrt();
    assert!((mean - exact).abs() < 3.0 * se, "MC {mean} ± {se}, exact {exact}");
}

#[test]
fn predictive_kl_averages_conditional_kl_over_sigma() {
    let d = screening();
    let post = objective_posterior(
        &space(InteractionOrder::Two),
        &d,
        false,
        &ModelSpacePrior::default(),
        AliasPolicy::Prune,
    )
    .unwrap();
    let s = space(InteractionOrder::Two);
    let find = |label: &str| post.entries.iter().find(|e| e.model.label(&s) == label).unwrap();
    let (ei, ej) = (find("B"), find("B,D,E"));
    let c = candidates();
    let pi = entry_predictive(ei, &c, &FOLLOWUP_2FI).unwrap();
    let pj = entry_predictive(ej, &c, &FOLLOWUP_2FI).unwrap();
    let closed = kl_predictive(&pi, &pj).unwrap();

    // 1/σ² | y, M_i ~ Gamma(df/2, rate SSE/2); conditional KL from the Gaussian lemma
    let (shape, rate) = (ei.matrix.df() as f64 / 2.0, ei.sse / 2.0);
    let log_norm = shape * rate.ln() - libm::lgamma(shape);
    let conditional = |lambda: f64| {
        let var = 1.0 / lambda;
        kl_gaussian(&pi.y_hat, &(&pi.v * var), &pj.y_hat, &(&pj.v * var)).unwrap()
    };
    let mean_lambda = shape / rate;
    let averaged = integrate(
        |lambda| {
            if lambda <= 0.0 {
                return 0.0;
            }
            let dens = (log_norm + (shape - 1.0) * lambda.ln() - rate * lambda).exp();
            dens * conditional(lambda)
        },
        0.0,
        mean_lambda * 60.0,
        Tolerance::default(),
    )
    .unwrap();
    assert!(((closed - averaged) / closed).abs() < 1e-8, "{closed} vs {averaged}");
}

#[test]
fn null_predictive_summary() {
    let d = screening();
    let post = objective_posterior(
        &space(InteractionOrder::Two),
        &d,
        false,
        &ModelSpacePrior::default(),
        AliasPolicy::Prune,
    )
    .unwrap();
    let p = entry_predictive(&post.entries[0], &candidates(), &[17]).unwrap();
    assert!((p.y_hat[0] - 64.625).abs() < 1e-12);
    assert!((p.v[(0, 0)] - 1.125).abs() < 1e-12);
    let dup = entry_predictive(&post.entries[3], &candidates(), &[5, 5]).unwrap();
    assert_eq!(dup.v[(0, 0)], dup.v[(1, 1)]);
    assert!(dup.v[(0, 1)] > 0.0);
}
