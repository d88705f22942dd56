mod common;

use common::{quadratic_1d, random_box_problem};
use dirattack_core::dsm::{
    cdsm_run, covering_step, householder_poll, poll_step, CoveringMode, DsmConfig,
};
use dirattack_core::problem::{evaluate, Mode, TrialHistory, TrialTag};
use dirattack_core::trace::{StopReason, WinningStep};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn random_covering_stays_in_the_unit_ball() {
    let p = quadratic_1d(Mode::Exact, 0.0);
    let mut h = TrialHistory::new();
    evaluate(&p, &mut h, &[0.0], TrialTag::Initial).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = DsmConfig::default();
    for _ in 0..1000 {
        let d = covering_step(&[0.0], &h, &cfg, &mut rng);
        assert_eq!(d.len(), 1);
        assert!(d[0][0].abs() <= 1.0);
    }
}

#[test]
fn farthest_of_k_picks_the_farthest_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = random_box_problem(&mut rng, Mode::Exact);
    let x = p.x0().to_vec();
    let mut h = TrialHistory::new();
    evaluate(&p, &mut h, &x, TrialTag::Initial).unwrap();
    let cfg = DsmConfig {
        covering_mode: CoveringMode::FarthestOfK,
        k_samples: 16,
        ..DsmConfig::default()
    };
    let chosen = covering_step(&x, &h, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).remove(0);
    // the same stream drawn one sample at a time gives the candidate set
    let single = DsmConfig {
        covering_mode: CoveringMode::RandomUnitBall,
        ..cfg
    };
    let mut replay = ChaCha8Rng::seed_from_u64(9);
    let candidates: Vec<Vec<f64>> = (0..16)
        .map(|_| covering_step(&x, &h, &single, &mut replay).remove(0))
        .collect();
    assert!(candidates.contains(&chosen));
    let dist = |d: &[f64]| d.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for c in &candidates {
        assert!(dist(&chosen) >= dist(c));
    }
}

#[test]
fn poll_directions_are_orthonormal_and_positively_spanning() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 1..=6 {
        let r = rng.random_range(0.01..3.0);
        let dirs = poll_step(n, r, &mut rng);
        assert_eq!(dirs.len(), 2 * n);
        for d in &dirs {
            assert!((dot(d, d).sqrt() - r).abs() < 1e-12 * r.max(1.0));
        }
        for i in 0..n {
            for j in 0..n {
                let g = dot(&dirs[2 * i], &dirs[2 * j]) / (r * r);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-12);
            }
        }
        for _ in 0..1000 {
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(dirs.iter().any(|d| dot(&w, d) > 0.0));
        }
    }
    let forced = householder_poll(&[0.0, 1.0], 2.0);
    assert_eq!(forced[0], vec![2.0, 0.0]);
    assert_eq!(forced[2], vec![-0.0, -2.0]);
}

#[test]
fn cdsm_solves_the_one_dimensional_quadratic() {
    let p = quadratic_1d(Mode::Exact, 1.0);
    for seed in 0..5 {
        let cfg = DsmConfig {
            rng_seed: seed,
            ..DsmConfig::default()
        };
        let run = cdsm_run(&p, &cfg).unwrap();
        assert!(
            run.incumbent.fval >= -1e-6,
            "seed {seed}: {}",
            run.incumbent.fval
        );
        let mut last = f64::INFINITY;
        for it in &run.trace.iterations {
            let x = run.history.get(it.incumbent_index).unwrap().x[0].abs();
            assert!(x <= last);
            last = x;
        }
    }
}

#[test]
fn zero_budget_returns_the_start() {
    let p = quadratic_1d(Mode::Exact, 1.0);
    let cfg = DsmConfig {
        budget: 0,
        ..DsmConfig::default()
    };
    let run = cdsm_run(&p, &cfg).unwrap();
    assert_eq!(run.incumbent.x, vec![1.0]);
    assert!(run.trace.iterations.is_empty());
    assert_eq!(run.trace.stop, StopReason::Budget);
}

#[test]
fn budget_caps_evaluations() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = random_box_problem(&mut rng, Mode::Exact);
    for budget in [1, 2, 7, 50, 333] {
        let cfg = DsmConfig {
            budget,
            ..DsmConfig::default()
        };
        let run = cdsm_run(&p, &cfg).unwrap();
        assert!(run.history.evaluations() <= budget);
        assert_eq!(run.trace.evaluations, run.history.evaluations());
    }
}

#[test]
fn cdsm_trace_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..10 {
        let mode = if seed % 2 == 0 {
            Mode::Exact
        } else {
            Mode::Relaxed
        };
        let p = random_box_problem(&mut rng, mode);
        let cfg = DsmConfig {
            rng_seed: seed,
            budget: 2000,
            covering_mode: if seed % 3 == 0 {
                CoveringMode::FarthestOfK
            } else {
                CoveringMode::RandomUnitBall
            },
            ..DsmConfig::default()
        };
        let run = cdsm_run(&p, &cfg).unwrap();
        let mut prev_f = f64::NEG_INFINITY;
        let mut prev_len = 1;
        for it in &run.trace.iterations {
            let r = it.r_dsm.unwrap();
            let next = it.next_r_dsm.unwrap();
            let improved = it.winning_step != WinningStep::None;
            if !it.truncated {
                assert_eq!(next, if improved { 2.0 * r } else { 0.5 * r });
            }
            let exponent = (r / cfg.r0).log2();
            assert_eq!(exponent, exponent.round());
            assert!(it.incumbent_f >= prev_f);
            prev_f = it.incumbent_f;
            let inc = run.history.get(it.incumbent_index).unwrap();
            assert!(inc.feasible);
            let tags: Vec<TrialTag> = it
                .trials
                .iter()
                .map(|&i| run.history.get(i).unwrap().tag)
                .collect();
            if it.winning_step == WinningStep::Covering {
                assert!(tags
                    .iter()
                    .all(|t| *t != TrialTag::Search && *t != TrialTag::Poll));
            }
            if it.winning_step == WinningStep::Search {
                assert!(tags.iter().all(|t| *t != TrialTag::Poll));
            }
            assert!(it.trials.iter().all(|&i| i < run.history.len()));
            assert!(it.evals_so_far >= prev_len);
            prev_len = it.evals_so_far;
        }
        match run.trace.stop {
            StopReason::Radius => {
                let last = run.trace.iterations.last().unwrap();
                assert!(last.next_r_dsm.unwrap() < cfg.stop_radius);
            }
            StopReason::Budget => assert!(run.history.evaluations() >= cfg.budget),
        }
        let best = run.trace.curve.last().unwrap().best_f;
        assert_eq!(best, run.incumbent.fval);
    }
}

#[test]
fn cdsm_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = random_box_problem(&mut rng, Mode::Exact);
    let cfg = DsmConfig {
        rng_seed: 42,
        budget: 500,
        ..DsmConfig::default()
    };
    let a = cdsm_run(&p, &cfg).unwrap();
    let b = cdsm_run(&p, &cfg).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.history.records(), b.history.records());
}
