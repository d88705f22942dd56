#![allow(dead_code)]

use std::sync::Arc;

use dirattack_core::netdiff::{concat_with_input, Activation, FnMap, MlpNetwork, SharedMap};
use dirattack_core::problem::{FnGoal, Mode, ProblemSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `|a − b| / max(1, |a|, |b|)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Random MLP with 1 to 3 layers and all widths in `1..=8`.
pub fn random_mlp(rng: &mut ChaCha8Rng) -> MlpNetwork {
    let layers = rng.random_range(1..=3);
    let widths: Vec<usize> = (0..=layers).map(|_| rng.random_range(1..=8)).collect();
    let output = match rng.random_range(0..3) {
        0 => Activation::Identity,
        1 => Activation::Relu,
        _ => Activation::Softmax,
    };
    MlpNetwork::random(&widths, Activation::Relu, output, rng).unwrap()
}

pub fn identity_map(n: usize) -> SharedMap {
    Arc::new(FnMap::new(n, n, |x| x.to_vec(), |_, u| u.to_vec()))
}

/// `Φ = id` on R, `f(y) = −y²`, no active constraints, started at `x0`.
pub fn quadratic_1d(mode: Mode, x0: f64) -> ProblemSpec {
    let goal = Arc::new(FnGoal::new(1, |y| -y[0] * y[0], |y| vec![-2.0 * y[0]]));
    let c: SharedMap = Arc::new(FnMap::constant(1, vec![-1.0]));
    ProblemSpec::new(identity_map(1), goal, c, mode, vec![x0]).unwrap()
}

/// `Φ = id` on R, `f(y) = y`, constraint `y ≤ bound`.
pub fn linear_1d(x0: f64, bound: f64) -> ProblemSpec {
    let goal = Arc::new(FnGoal::new(1, |y| y[0], |_| vec![1.0]));
    let c: SharedMap = Arc::new(FnMap::new(
        1,
        1,
        move |y| vec![y[0] - bound],
        |_, u| u.to_vec(),
    ));
    ProblemSpec::new(identity_map(1), goal, c, Mode::Exact, vec![x0]).unwrap()
}

/// `Φ(x) = [Ψ(x), x]` with a random 2→8→2 MLP `Ψ`, `f(y) = −‖Ψ − t‖²` for a
/// random target `t`, box `|x_i| ≤ 2` on the input block.
pub fn random_box_problem(rng: &mut ChaCha8Rng, mode: Mode) -> ProblemSpec {
    let psi = MlpNetwork::random(&[2, 8, 2], Activation::Relu, Activation::Identity, rng).unwrap();
    let phi: SharedMap = Arc::new(concat_with_input(Arc::new(psi)));
    let t: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
    let t2 = t.clone();
    let goal = Arc::new(FnGoal::new(
        4,
        move |y| -((y[0] - t[0]).powi(2) + (y[1] - t[1]).powi(2)),
        move |y| vec![-2.0 * (y[0] - t2[0]), -2.0 * (y[1] - t2[1]), 0.0, 0.0],
    ));
    let c: SharedMap = Arc::new(FnMap::new(
        4,
        2,
        |y| vec![y[2] * y[2] - 4.0, y[3] * y[3] - 4.0],
        |y, u| vec![0.0, 0.0, 2.0 * y[2] * u[0], 2.0 * y[3] * u[1]],
    ));
    let x0: Vec<f64> = (0..2).map(|_| rng.random_range(-1.9..1.9)).collect();
    ProblemSpec::new(phi, goal, c, mode, x0).unwrap()
}
