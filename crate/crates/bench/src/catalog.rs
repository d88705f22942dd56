//! Named toy problems with deterministic seeded builders.
//!
//! Every problem has the composite form `f(Φ(x))` subject to `c(Φ(x)) ≤ 0`
//! with `Φ` a small network, usually concatenated with its input so that box
//! bounds on `x` become output constraints.

use std::sync::Arc;

use dirattack_core::hybrid::HybridConfig;
use dirattack_core::netdiff::{concat_with_input, Activation, FnMap, Layer, MlpNetwork, SharedMap};
use dirattack_core::problem::FnGoal;
use dirattack_core::{Mode, ProblemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{BenchError, BenchResult};
use crate::reactor;

/// A certified supremum of the objective over the feasible set.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KnownOptimum {
    pub value: f64,
    /// Distance to `value` within which a run counts as converged.
    pub tolerance: f64,
    /// How `value` was certified.
    pub provenance: &'static str,
}

pub struct ProblemCatalogEntry {
    pub name: &'static str,
    pub notes: &'static str,
    /// Number of leading output components the goal depends on, passed to
    /// the attack as its active block.
    pub component_count: Option<usize>,
    builder: fn(u64) -> BenchResult<ProblemSpec>,
    optimum: fn(u64) -> BenchResult<Option<KnownOptimum>>,
}

impl ProblemCatalogEntry {
    pub fn build(&self, seed: u64) -> BenchResult<ProblemSpec> {
        (self.builder)(seed)
    }

    pub fn known_optimum(&self, seed: u64) -> BenchResult<Option<KnownOptimum>> {
        (self.optimum)(seed)
    }
}

static CATALOG: [ProblemCatalogEntry; 5] = [
    ProblemCatalogEntry {
        name: "quadratic_1d",
        notes: "maximise -y^2 with y = x through a 1x1 identity layer, |x| <= 10, x0 = 1; \
                optimum 0 at x = 0 (analytic)",
        component_count: None,
        builder: |_| build_quadratic_1d(),
        optimum: |_| {
            Ok(Some(KnownOptimum {
                value: 0.0,
                tolerance: 1e-3,
                provenance: "analytic",
            }))
        },
    },
    ProblemCatalogEntry {
        name: "target_recovery",
        notes: "n = 10 softmax weights over fixed anchors fed to a random network; maximise \
                minus the distance to the image of anchor 1; |x_i| <= 10, x0 = 0, relaxed; \
                supremum 0, certified by evaluating the vertex x_1 = 10, x_j = -10",
        component_count: Some(TARGET_OUT),
        builder: |seed| build_target_recovery(seed, TARGET_N, TARGET_OUT),
        optimum: |_| {
            Ok(Some(KnownOptimum {
                value: 0.0,
                tolerance: 1e-2,
                provenance: "vertex evaluation",
            }))
        },
    },
    ProblemCatalogEntry {
        name: "active_subspace",
        notes: "random 4 -> 8 -> 3 network concatenated with x; maximise minus the squared \
                distance of the first 3 outputs to the image of a hidden point; |x_i| <= 2; \
                optimum 0 at the hidden point (analytic)",
        component_count: Some(ACTIVE_K),
        builder: |seed| build_active_subspace_toy(seed, ACTIVE_N, ACTIVE_K),
        optimum: |_| {
            Ok(Some(KnownOptimum {
                value: 0.0,
                tolerance: 1e-3,
                provenance: "analytic",
            }))
        },
    },
    ProblemCatalogEntry {
        name: "surrogate_reactor",
        notes: "network fitted to reactor kinetics, read at 21 times along the horizon t; \
                inputs (t, Q); maximise the mean conversion ratio under a temperature cap, \
                Q t <= 900 and the box; optimum certified by a 401 x 401 grid sweep",
        component_count: Some(reactor::READOUT_DIM),
        builder: build_surrogate_reactor_toy,
        optimum: |seed| {
            let (value, _) = reactor::certified_optimum(seed)?;
            Ok(Some(KnownOptimum {
                value,
                tolerance: 1e-3,
                provenance: "401x401 grid",
            }))
        },
    },
    ProblemCatalogEntry {
        name: "random_box_2d",
        notes: "random 2 -> 8 -> 2 network concatenated with x; maximise minus the squared \
                distance to a random target; |x_i| <= 2; random feasible start",
        component_count: None,
        builder: |seed| build_random_box_2d(seed, Mode::Exact),
        optimum: |_| Ok(None),
    },
];

pub const TARGET_N: usize = 10;
pub const TARGET_OUT: usize = 5;
/// Width of the anchor vectors combined by the softmax weights.
pub const TARGET_ANCHOR_DIM: usize = 6;
pub const ACTIVE_N: usize = 4;
pub const ACTIVE_K: usize = 3;

pub fn catalog() -> &'static [ProblemCatalogEntry] {
    &CATALOG
}

pub fn problem_names() -> Vec<&'static str> {
    CATALOG.iter().map(|e| e.name).collect()
}

pub fn find(name: &str) -> BenchResult<&'static ProblemCatalogEntry> {
    CATALOG
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| BenchError::UnknownProblem {
            name: name.to_string(),
            valid: problem_names().join(", "),
        })
}

/// Configuration shared by all four methods on `entry` for one seeded run;
/// [`run_method`](dirattack_core::hybrid::run_method) picks the parts each
/// method uses.
pub fn run_config(entry: &ProblemCatalogEntry, seed: u64, budget: usize) -> HybridConfig {
    let mut config = HybridConfig::default();
    config.attack.component_count = entry.component_count;
    config.dsm.rng_seed = seed;
    config.dsm.budget = budget;
    config
}

fn box_constraint(m: usize, offset: usize, bound: f64) -> FnMap {
    let p = m - offset;
    FnMap::new(
        m,
        p,
        move |y| y[offset..].iter().map(|v| v * v - bound * bound).collect(),
        move |y, u| {
            let mut g = vec![0.0; m];
            for i in 0..p {
                g[offset + i] = 2.0 * y[offset + i] * u[i];
            }
            g
        },
    )
}

/// `y ↦ -‖y[..k] - target‖^α` for `α ∈ {1, 2}`, on outputs of length `m`.
fn distance_goal(m: usize, target: Vec<f64>, squared: bool) -> FnGoal {
    let k = target.len();
    let t2 = target.clone();
    FnGoal::new(
        m,
        move |y| {
            let d2: f64 = y[..k]
                .iter()
                .zip(&target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if squared {
                -d2
            } else {
                -d2.sqrt()
            }
        },
        move |y| {
            let mut g = vec![0.0; m];
            let d2: f64 = y[..k].iter().zip(&t2).map(|(a, b)| (a - b) * (a - b)).sum();
            let scale = if squared {
                2.0
            } else if d2 > 0.0 {
                1.0 / d2.sqrt()
            } else {
                0.0
            };
            for i in 0..k {
                g[i] = -scale * (y[i] - t2[i]);
            }
            g
        },
    )
}

pub fn build_quadratic_1d() -> BenchResult<ProblemSpec> {
    let layer = Layer::new(1, 1, vec![1.0], vec![0.0], Activation::Identity)?;
    let phi: SharedMap = Arc::new(MlpNetwork::new(vec![layer])?);
    let goal = FnGoal::new(1, |y| -y[0] * y[0], |y| vec![-2.0 * y[0]]);
    let c = box_constraint(1, 0, 10.0);
    Ok(ProblemSpec::new(
        phi,
        Arc::new(goal),
        Arc::new(c),
        Mode::Exact,
        vec![1.0],
    )?)
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// The random tail `R^q → R^out` shared by the target-recovery network and
/// its target computation.
fn recovery_tail(rng: &mut ChaCha8Rng, q: usize, out: usize) -> BenchResult<Vec<Layer>> {
    let tail = MlpNetwork::random(
        &[q, 2 * q, out],
        Activation::Relu,
        Activation::Identity,
        rng,
    )?;
    Ok(tail.layers().to_vec())
}

/// `Ψ(x) = tail(Σ_j softmax(x)_j a_j)` for `n` random anchors `a_j ∈ R^6`,
/// `Φ = (Ψ, x)`, goal `-‖Ψ - tail(a_1)‖`, box `|x_i| ≤ 10`, start `0`.
pub fn build_target_recovery(seed: u64, n: usize, out: usize) -> BenchResult<ProblemSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = TARGET_ANCHOR_DIM;
    let mut identity = vec![0.0; n * n];
    for i in 0..n {
        identity[i * n + i] = 1.0;
    }
    let anchors = gaussian_matrix(&mut rng, q * n);
    let tail = recovery_tail(&mut rng, q, out)?;
    let mut layers = vec![
        Layer::new(n, n, identity, vec![0.0; n], Activation::Softmax)?,
        Layer::new(n, q, anchors.clone(), vec![0.0; q], Activation::Identity)?,
    ];
    layers.extend(tail.iter().cloned());
    let psi = MlpNetwork::new(layers)?;
    let anchor_1: Vec<f64> = (0..q).map(|i| anchors[i * n]).collect();
    let target = MlpNetwork::new(tail)?.forward(&anchor_1)?;
    let m = out + n;
    let phi: SharedMap = Arc::new(concat_with_input(Arc::new(psi)));
    let goal = distance_goal(m, target, false);
    let c = box_constraint(m, out, 10.0);
    Ok(ProblemSpec::new(
        phi,
        Arc::new(goal),
        Arc::new(c),
        Mode::Relaxed,
        vec![0.0; n],
    )?)
}

/// The point `x_1 = 10, x_j = -10` where the softmax weights saturate on the
/// first anchor.
pub fn target_recovery_vertex(n: usize) -> Vec<f64> {
    let mut x = vec![-10.0; n];
    x[0] = 10.0;
    x
}

/// `Φ = (Ψ(x), x)` with a random `n → 8 → k` network, goal
/// `-‖Ψ(x) - Ψ(x*)‖²` for a hidden `x* ∈ [-1.5, 1.5]^n`, box `|x_i| ≤ 2`,
/// start `0`, exact mode.
pub fn build_active_subspace_toy(seed: u64, n: usize, k: usize) -> BenchResult<ProblemSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = MlpNetwork::random(&[n, 8, k], Activation::Relu, Activation::Identity, &mut rng)?;
    let hidden: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
    let target = psi.forward(&hidden)?;
    let m = k + n;
    let phi: SharedMap = Arc::new(concat_with_input(Arc::new(psi)));
    let goal = distance_goal(m, target, true);
    let c = box_constraint(m, k, 2.0);
    Ok(ProblemSpec::new(
        phi,
        Arc::new(goal),
        Arc::new(c),
        Mode::Exact,
        vec![0.0; n],
    )?)
}

/// The hidden point of [`build_active_subspace_toy`], where the goal is `0`.
pub fn active_subspace_solution(seed: u64, n: usize, k: usize) -> BenchResult<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MlpNetwork::random(&[n, 8, k], Activation::Relu, Activation::Identity, &mut rng)?;
    Ok((0..n).map(|_| rng.random_range(-1.5..1.5)).collect())
}

pub fn build_surrogate_reactor_toy(seed: u64) -> BenchResult<ProblemSpec> {
    Ok(reactor::problem_from_network(reactor::network(seed)?)?)
}

/// `Φ = (Ψ(x), x)` with a random `2 → 8 → 2` network, goal `-‖Ψ(x) - t‖²`
/// for a random target `t`, box `|x_i| ≤ 2`, random start in the box.
pub fn build_random_box_2d(seed: u64, mode: Mode) -> BenchResult<ProblemSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = MlpNetwork::random(&[2, 8, 2], Activation::Relu, Activation::Identity, &mut rng)?;
    let target: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
    let x0: Vec<f64> = (0..2).map(|_| rng.random_range(-1.9..1.9)).collect();
    let phi: SharedMap = Arc::new(concat_with_input(Arc::new(psi)));
    let goal = distance_goal(4, target, true);
    let c = box_constraint(4, 2, 2.0);
    Ok(ProblemSpec::new(
        phi,
        Arc::new(goal),
        Arc::new(c),
        mode,
        x0,
    )?)
}

/// Value of the goal of `problem` at `x`, constraints ignored.
pub fn goal_at(problem: &ProblemSpec, x: &[f64]) -> BenchResult<f64> {
    let y = problem.phi().eval(x)?;
    Ok(problem.goal().value(&y))
}
