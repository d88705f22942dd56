mod common;

use std::sync::Arc;

use common::{random_box_problem, random_mlp, rel_err};
use dirattack_core::netdiff::{
    finite_difference_jacobian, load_network, save_network, Activation, AugmentedMap,
    DifferentiableMap, DifferentialMap, Layer, MlpNetwork, ScaledDifferentialMap, SharedMap,
};
use dirattack_core::problem::Mode;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// Worst relative error between `vjp(x, e_j)` and FD row `j`.
fn vjp_fd_error(map: &dyn DifferentiableMap, x: &[f64]) -> f64 {
    let jac = finite_difference_jacobian(map, x, 1e-6).unwrap();
    let mut worst: f64 = 0.0;
    for (j, row) in jac.iter().enumerate() {
        let mut e = vec![0.0; map.out_dim()];
        e[j] = 1.0;
        let g = map.vjp(x, &e).unwrap();
        for (a, b) in g.iter().zip(row) {
            worst = worst.max(rel_err(*a, *b));
        }
    }
    worst
}

fn probe_away_from_kinks(net: &MlpNetwork, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let x = random_point(rng, net.in_dim());
        if net.relu_margin(&x).unwrap() > 1e-4 {
            return x;
        }
    }
}

#[test]
fn vjp_matches_finite_differences_on_random_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let net = random_mlp(&mut rng);
        let x = probe_away_from_kinks(&net, &mut rng);
        let err = vjp_fd_error(&net, &x);
        assert!(err < 1e-6, "relative error {err}");
    }
}

#[test]
fn vjp_is_linear_in_cotangent() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let net = random_mlp(&mut rng);
        let x = random_point(&mut rng, net.in_dim());
        let u1 = random_point(&mut rng, net.out_dim());
        let u2 = random_point(&mut rng, net.out_dim());
        let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let mix: Vec<f64> = u1.iter().zip(&u2).map(|(p, q)| a * p + b * q).collect();
        let lhs = net.vjp(&x, &mix).unwrap();
        let g1 = net.vjp(&x, &u1).unwrap();
        let g2 = net.vjp(&x, &u2).unwrap();
        for i in 0..lhs.len() {
            assert!((lhs[i] - (a * g1[i] + b * g2[i])).abs() < 1e-12);
        }
    }
}

#[test]
fn softmax_outputs_are_a_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let widths = [
            rng.random_range(1..=8),
            rng.random_range(1..=8),
            rng.random_range(2..=8),
        ];
        let net =
            MlpNetwork::random(&widths, Activation::Relu, Activation::Softmax, &mut rng).unwrap();
        let x: Vec<f64> = (0..widths[0])
            .map(|_| rng.random_range(-50.0..50.0))
            .collect();
        let y = net.forward(&x).unwrap();
        assert!(y.iter().all(|v| *v > 0.0 || *v == 0.0));
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn weight_file_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for i in 0..20 {
        let net = random_mlp(&mut rng);
        let path = dir.path().join(format!("net{i}.json"));
        save_network(&net, &path).unwrap();
        let back = load_network(&path).unwrap();
        for _ in 0..5 {
            let x = random_point(&mut rng, net.in_dim());
            let a = net.forward(&x).unwrap();
            let b = back.forward(&x).unwrap();
            let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
        }
    }
}

#[test]
fn single_layer_examples() {
    let net = MlpNetwork::new(vec![Layer::new(
        1,
        1,
        vec![2.0],
        vec![0.0],
        Activation::Relu,
    )
    .unwrap()])
    .unwrap();
    assert_eq!(net.forward(&[1.0]).unwrap(), vec![2.0]);
    assert_eq!(net.forward(&[-1.0]).unwrap(), vec![0.0]);
    assert_eq!(net.vjp(&[1.0], &[1.0]).unwrap(), vec![2.0]);
    assert_eq!(net.vjp(&[-1.0], &[1.0]).unwrap(), vec![0.0]);
    assert!(net.forward(&[1.0, 2.0]).is_err());
    let soft = MlpNetwork::new(vec![Layer::new(
        2,
        2,
        vec![1.0, 0.0, 0.0, 1.0],
        vec![0.0, 0.0],
        Activation::Softmax,
    )
    .unwrap()])
    .unwrap();
    assert_eq!(soft.forward(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
}

#[test]
fn composite_maps_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut checked = 0;
    while checked < 30 {
        let problem = random_box_problem(&mut rng, Mode::Relaxed);
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.5..2.5)).collect();
        let aug: SharedMap = Arc::new(AugmentedMap::new(&problem));
        let y = problem.phi().eval(&x).unwrap();
        // keep probes away from relu kinks inside Ψ and at the box boundary
        let c = problem.constraint().eval(&y).unwrap();
        if c.iter().any(|v| v.abs() < 1e-3) {
            continue;
        }
        let psi_ok = (0..20).all(|_| {
            let d: Vec<f64> = (0..2).map(|_| rng.random_range(-1e-5..1e-5)).collect();
            let xp: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
            let g1 = aug.vjp(&x, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
            let g2 = aug.vjp(&xp, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
            g1 == g2
        });
        if !psi_ok {
            continue;
        }
        assert!(vjp_fd_error(aug.as_ref(), &x) < 1e-6);
        let diff = DifferentialMap::new(Arc::clone(&aug), x.clone()).unwrap();
        assert!(diff.eval(&[0.0, 0.0]).unwrap().iter().all(|v| *v == 0.0));
        let r = rng.random_range(0.1..1.0);
        let scaled = ScaledDifferentialMap::new(Arc::clone(&aug), x.clone(), r).unwrap();
        assert!(scaled.eval(&[0.5, 0.5]).unwrap().iter().all(|v| *v == 0.0));
        // the scaled map runs 2r times faster through the same network
        let u: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gs = scaled.vjp(&[0.5, 0.5], &u).unwrap();
        let ga = aug.vjp(&x, &u).unwrap();
        for (a, b) in gs.iter().zip(&ga) {
            assert!(rel_err(*a, 2.0 * r * b) < 1e-12);
        }
        checked += 1;
    }
}

#[test]
fn augmented_block_is_zero_on_feasible_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let problem = random_box_problem(&mut rng, Mode::Exact);
        let aug = AugmentedMap::new(&problem);
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
        let out = aug.eval(&x).unwrap();
        assert!(out[4..].iter().all(|z| *z == 0.0));
        let x_out: Vec<f64> = (0..2).map(|_| rng.random_range(2.1..5.0)).collect();
        let out = aug.eval(&x_out).unwrap();
        assert!(out[4..].iter().all(|z| *z > 0.0));
        let relaxed = problem.with_mode(Mode::Relaxed).unwrap();
        assert_eq!(
            relaxed.assess(&x).unwrap().fval,
            problem.assess(&x).unwrap().fval
        );
    }
}

proptest! {
    #[test]
    fn differential_map_vanishes_at_zero(seed in 0u64..10_000, scale in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_mlp(&mut rng);
        let x: Vec<f64> = (0..net.in_dim()).map(|_| rng.random_range(-scale..scale)).collect();
        let diff = DifferentialMap::new(Arc::new(net), x).unwrap();
        let zero = vec![0.0; diff.in_dim()];
        prop_assert!(diff.eval(&zero).unwrap().iter().all(|v| *v == 0.0));
    }
}
