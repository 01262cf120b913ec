//! Invariants checked over randomized inputs.

mod common;

use common::*;
use nalgebra::DVector;
use obayes_core::designs::{multiset_count, rank_design, unrank_design, DesignIter};
use obayes_core::diagnostics::{factorial_contrasts, shannon_heterogeneity};
use obayes_core::discrimination::{Discriminator, Workspace};
use obayes_core::factorial::{
    build_model_matrix, enumerate_candidate_runs, enumerate_models, subsets_by_size, Block,
    FactorModel, FactorSpace, InteractionOrder,
};
use obayes_core::linalg::least_squares;
use obayes_core::posterior::{
    conventional_posterior, fit_ols, objective_posterior, robust_log_bf, ModelPosterior,
    ModelSpacePrior,
};
use obayes_core::specfun::{hyp2f1, hyp2f1_pfaff, Hyp2F1Args, PfaffForm};
use obayes_core::{AliasPolicy, DesignTable};
use proptest::prelude::*;

fn objective(design: &DesignTable, order: InteractionOrder) -> ModelPosterior {
    let s = FactorSpace::with_letters(design.k(), order).unwrap();
    objective_posterior(&s, design, false, &ModelSpacePrior::default(), AliasPolicy::Prune).unwrap()
}

/// Random ±1 design of `n` runs in `k` factors, with responses.
fn design_strategy() -> impl Strategy<Value = DesignTable> {
    (2usize..=4, 6usize..=12).prop_flat_map(|(k, n)| {
        (
            proptest::collection::vec(prop::bool::ANY, n * k),
            proptest::collection::vec(-50.0f64..50.0, n),
        )
            .prop_map(move |(cells, y)| {
                let runs = cells.into_iter().map(|b| if b { 1 } else { -1 }).collect();
                DesignTable::new(k, runs, y, None).unwrap()
            })
    })
}

fn screening_with(y: Vec<f64>) -> DesignTable {
    screening().with_response(y).unwrap()
}

fn responses() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..100.0, 8)
}

fn design_runs() -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(1usize..=32, 1..=4)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn spread(y: &[f64]) -> bool {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - m).powi(2)).sum::<f64>() > 1e-6
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_sums_to_one(d in design_strategy(), three in any::<bool>()) {
        prop_assume!(spread(d.y()));
        let order = if three { InteractionOrder::Three } else { InteractionOrder::Two };
        let post = objective(&d, order);
        let total: f64 = post.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(post.probs().iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert_eq!(post.entries[0].log_bf, 0.0);
        prop_assert_eq!(post.entries[0].log_prior_odds, 0.0);
        let s = FactorSpace::with_letters(d.k(), order).unwrap();
        let conv = conventional_posterior(&s, &d, false, 2.0, &ModelSpacePrior::FixedPi(0.25)).unwrap();
        prop_assert!((conv.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn posterior_scale_and_location_invariant(y in responses(), c in 0.01f64..100.0, shift in -1e3f64..1e3) {
        prop_assume!(spread(&y));
        let base = objective(&screening_with(y.clone()), InteractionOrder::Two).probs();
        let scaled = objective(&screening_with(y.iter().map(|v| v * c).collect()), InteractionOrder::Two).probs();
        let shifted = objective(&screening_with(y.iter().map(|v| v + shift).collect()), InteractionOrder::Two).probs();
        for ((a, b), s) in base.iter().zip(&scaled).zip(&shifted) {
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
            prop_assert!((a - s).abs() < 1e-9, "{} vs {}", a, s);
        }
    }

    #[test]
    fn bf_decreasing_in_q(q1 in 0.001f64..2.0, q2 in 0.001f64..2.0, t in 1usize..6) {
        prop_assume!((q1 - q2).abs() > 1e-9);
        let (lo, hi) = if q1 < q2 { (q1, q2) } else { (q2, q1) };
        let a = robust_log_bf(lo, 1.0, 12, 1, t).unwrap().log_bf;
        let b = robust_log_bf(hi, 1.0, 12, 1, t).unwrap().log_bf;
        prop_assert!(a > b);
    }

    #[test]
    fn omd_nonnegative_and_invariant(y in responses(), runs in design_runs(), c in 0.1f64..10.0, seed in any::<u64>()) {
        prop_assume!(spread(&y));
        let cands = candidates();
        let post = objective(&screening_with(y.clone()), InteractionOrder::Two);
        let disc = Discriminator::new(&post, &cands, 0.0).unwrap();
        let score = disc.score(&runs).unwrap();
        prop_assert!(score >= -1e-9);

        let scaled = objective(&screening_with(y.iter().map(|v| v * c).collect()), InteractionOrder::Two);
        let s2 = Discriminator::new(&scaled, &cands, 0.0).unwrap().score(&runs).unwrap();
        prop_assert!(close(score, s2, 1e-9), "{} vs {}", score, s2);

        let mut permuted = runs.clone();
        let len = permuted.len();
        permuted.rotate_left((seed as usize) % len);
        if seed % 2 == 0 { permuted.reverse(); }
        let s3 = disc.score(&permuted).unwrap();
        prop_assert!(close(score, s3, 1e-9), "{} vs {}", score, s3);

        let with_det = disc.score_with(&runs, &mut Workspace::default(), true).unwrap();
        prop_assert!((with_det - score).abs() < 1e-9, "{} vs {}", with_det, score);
    }

    #[test]
    fn cmd_log_det_cancels(y in responses(), runs in design_runs(), gamma in 0.2f64..5.0) {
        prop_assume!(spread(&y));
        let s = space(InteractionOrder::Two);
        let post = conventional_posterior(&s, &screening_with(y), false, gamma, &ModelSpacePrior::FixedPi(0.25)).unwrap();
        let disc = Discriminator::new(&post, &candidates(), 0.0).unwrap();
        let a = disc.score(&runs).unwrap();
        let b = disc.score_with_log_det(&runs).unwrap();
        prop_assert!(a >= -1e-9);
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn sign_flip_keeps_rank(d in design_strategy(), factor in 0usize..4) {
        let f = factor % d.k();
        let runs: Vec<i8> = d.runs().flat_map(|r| {
            let mut r = r.to_vec();
            r[f] = -r[f];
            r
        }).collect();
        let flipped = DesignTable::new(d.k(), runs, d.y().to_vec(), None).unwrap();
        for mask in subsets_by_size(d.k()) {
            let m = FactorModel::effect_forced(mask, InteractionOrder::Three);
            let a = build_model_matrix(&d, &m, false).unwrap();
            let b = build_model_matrix(&flipped, &m, false).unwrap();
            prop_assert_eq!(a.rank_ok(), b.rank_ok());
        }
    }

    #[test]
    fn block_coding_does_not_change_sse(y in proptest::collection::vec(0.0f64..100.0, 12)) {
        let labels: Vec<&str> = (0..12).map(|i| if i < 8 { "s" } else { "f" }).collect();
        let rows = combined(&FOLLOWUP_2FI);
        let d = rows.with_response(y.clone()).unwrap().with_block(Some(Block::from_labels(&labels).unwrap())).unwrap();
        let e = enumerate_models(&space(InteractionOrder::Two), &d, true, AliasPolicy::Prune).unwrap();
        for (_, mm) in &e.admissible {
            let ols = fit_ols(mm, &y).unwrap();
            let mut z = mm.z();
            for r in 0..12 {
                z[(r, 1)] = if r < 8 { 0.0 } else { 1.0 };
            }
            let yv = DVector::from_vec(y.clone());
            let beta = least_squares(&z, &yv).unwrap();
            let sse = (&yv - &z * beta).norm_squared();
            prop_assert!(close(ols.sse, sse, 1e-9), "{} vs {}", ols.sse, sse);
        }
    }

    #[test]
    fn columns_square_to_one(d in design_strategy()) {
        for mask in subsets_by_size(d.k()) {
            let m = FactorModel::effect_forced(mask, InteractionOrder::Three);
            let mm = build_model_matrix(&d, &m, false).unwrap();
            prop_assert!(mm.xi().iter().all(|v| v * v == 1.0));
        }
    }

    #[test]
    fn replicate_at_null_fit_keeps_q_at_most_one(y in responses(), run in 0usize..8) {
        prop_assume!(spread(&y));
        let base = screening_with(y.clone());
        let mean = y.iter().sum::<f64>() / 8.0;
        let mut rows: Vec<Vec<i8>> = base.runs().map(|r| r.to_vec()).collect();
        rows.push(rows[run].clone());
        let mut y2 = y.clone();
        y2.push(mean);
        let d = DesignTable::from_rows(&rows, y2).unwrap();
        let post = objective(&d, InteractionOrder::Two);
        prop_assert!(post.entries.iter().all(|e| e.q <= 1.0 + 1e-12));
    }

    #[test]
    fn shannon_ignores_order(mut p in proptest::collection::vec(0.0f64..1.0, 2..10), seed in any::<u64>()) {
        let total: f64 = p.iter().sum();
        prop_assume!(total > 0.0);
        for v in p.iter_mut() { *v /= total; }
        let a = shannon_heterogeneity(&p, p.len()).unwrap();
        let len = p.len();
        p.rotate_left(seed as usize % len);
        let b = shannon_heterogeneity(&p, p.len()).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a <= 1.0 + 1e-12);
    }

    #[test]
    fn contrasts_ignore_shift(shift in -100.0f64..100.0) {
        let d = full();
        let s = space(InteractionOrder::Three);
        let a = factorial_contrasts(&d, &s, 3).unwrap();
        let shifted = d.with_response(d.y().iter().map(|v| v + shift).collect()).unwrap();
        let b = factorial_contrasts(&shifted, &s, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.value - y.value).abs() < 1e-9);
        }
    }

    #[test]
    fn pfaff_forms_agree(a in 0.1f64..8.0, b in 0.1f64..12.0, extra in 0.0f64..6.0, z in -50.0f64..-1e-3) {
        let c = a.max(b) + extra;
        let args = Hyp2F1Args::new(a, b, c, z).unwrap();
        let x = hyp2f1_pfaff(args, PfaffForm::A).unwrap();
        let y = hyp2f1_pfaff(args, PfaffForm::B).unwrap();
        prop_assert!(((x - y) / y).abs() < 1e-10, "{} vs {}", x, y);
    }

    #[test]
    fn contiguous_relation(a in 1.1f64..5.0, b in 0.1f64..5.0, extra in 0.0f64..4.0, z in -20.0f64..0.9) {
        // c F(a,b;c) − c F(a−1,b;c) − b z F(a,b+1;c+1) = 0
        let c = a.max(b + 1.0) + extra;
        let f = |a: f64, b: f64, c: f64| hyp2f1(Hyp2F1Args::new(a, b, c, z).unwrap()).unwrap();
        let lhs = c * f(a, b, c) - c * f(a - 1.0, b, c) - b * z * f(a, b + 1.0, c + 1.0);
        let scale = (c * f(a, b, c)).abs().max((b * z * f(a, b + 1.0, c + 1.0)).abs());
        prop_assert!(lhs.abs() <= 1e-9 * scale.max(1.0), "residual {}", lhs);
    }

    #[test]
    fn hyp2f1_increasing_on_unit_interval(a in 0.1f64..5.0, b in 0.1f64..5.0, c in 0.1f64..5.0, z1 in 0.0f64..0.9, z2 in 0.0f64..0.9) {
        prop_assume!((z1 - z2).abs() > 1e-6);
        let (lo, hi) = if z1 < z2 { (z1, z2) } else { (z2, z1) };
        let f = |z: f64| hyp2f1(Hyp2F1Args::new(a, b, c, z).unwrap()).unwrap();
        prop_assert!(f(lo) < f(hi));
    }

    #[test]
    fn unrank_matches_enumeration(c in 1usize..12, n in 1usize..5, pick in any::<u64>()) {
        let total = multiset_count(c as u64, n as u64).unwrap();
        let r = pick % total;
        let d = unrank_design(r, c, n).unwrap();
        prop_assert!(d.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(rank_design(&d, c), Some(r));
        prop_assert_eq!(DesignIter::range(c, n, r, r + 1).unwrap().next(), Some(d));
    }
}

/// Multisets of size `n` from `c` items, by recursion on the first item.
fn count_recursive(c: u64, n: u64) -> u64 {
    match (c, n) {
        (_, 0) => 1,
        (0, _) => 0,
        _ => count_recursive(c, n - 1) + count_recursive(c - 1, n),
    }
}

#[test]
fn multiset_counts_match_recursion() {
    for c in 1..=8u64 {
        for n in 1..=4u64 {
            let formula = multiset_count(c, n).unwrap();
            assert_eq!(formula, count_recursive(c, n), "c={c} n*={n}");
            assert_eq!(DesignIter::all(c as usize, n as usize).unwrap().count() as u64, formula);
        }
    }
}

#[test]
fn full_factorial_admits_all_when_df_allows() {
    for k in 1..=4usize {
        let s = FactorSpace::with_letters(k, InteractionOrder::Two).unwrap();
        let c = enumerate_candidate_runs(&s);
        let rows: Vec<Vec<i8>> = c.iter().map(|r| r.to_vec()).collect();
        let y: Vec<f64> = (0..rows.len()).map(|i| (i * i % 7) as f64).collect();
        let d = DesignTable::from_rows(&rows, y).unwrap();
        let t_max = k + k * (k - 1) / 2;
        let e = enumerate_models(&s, &d, false, AliasPolicy::Strict).unwrap();
        if d.n() > 1 + t_max {
            assert_eq!(e.admissible.len(), 1 << k, "k={k}");
        }
    }
}

#[test]
fn aliased_half_fraction_is_rank_deficient() {
    // replicated 2^{4−1} with I = ACEH: the pairs alias each other
    let s = FactorSpace::new(
        ["A", "C", "E", "H"].iter().map(|v| v.to_string()).collect(),
        InteractionOrder::Two,
    )
    .unwrap();
    let c = enumerate_candidate_runs(&s);
    let mut rows: Vec<Vec<i8>> = c.iter().filter(|r| r.iter().product::<i8>() == 1).map(|r| r.to_vec()).collect();
    rows.extend(rows.clone());
    let y: Vec<f64> = (0..rows.len()).map(|i| i as f64).collect();
    let d = DesignTable::from_rows(&rows, y).unwrap();
    let m = FactorModel::from_factors(&[0, 1, 2, 3], InteractionOrder::Two);
    assert!(!build_model_matrix(&d, &m, false).unwrap().rank_ok());
}

#[test]
fn single_candidate_single_design() {
    let post = objective(&screening(), InteractionOrder::Two);
    let one = obayes_core::CandidateTable::from_rows(5, vec![1, 1, 1, 1, 1]).unwrap();
    let disc = Discriminator::new(&post, &one, 0.0).unwrap();
    let found = obayes_core::discrimination::search_followup(&disc, 2, 5, u64::MAX).unwrap();
    assert_eq!(found.len(), 1);
    assert_eq!(found[0].runs, vec![1, 1]);
}

#[test]
fn single_model_posterior_scores_zero() {
    let d = DesignTable::from_rows(&[vec![-1], vec![1]], vec![1.0, 2.0]).unwrap();
    let s = FactorSpace::with_letters(1, InteractionOrder::Two).unwrap();
    let post = objective_posterior(&s, &d, false, &ModelSpacePrior::default(), AliasPolicy::Prune).unwrap();
    let disc = Discriminator::new(&post, &enumerate_candidate_runs(&s), 0.0).unwrap();
    assert_eq!(disc.score(&[1, 2]).unwrap(), 0.0);
}
