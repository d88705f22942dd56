//! Reactor toy: a small network fitted to synthetic transesterification
//! kinetics, read out along the reaction horizon.
//!
//! Species `TG → DG → MG → G`, each step releasing one `ME`, with rate
//! constants growing with the reactor temperature
//! `T(s, Q) = 25 + 6Q(1 − e^{−s/40})`. The ester also degrades, faster at
//! high temperature, so conversion peaks at a moderate heating rate. The
//! fitted network maps `(s, Q)` to `[TG, DG, MG, G, ME, T]`; the problem reads it at `s = i·t/N` for
//! `i = 0..=N` and maximises the average conversion ratio
//! `ME / (TG + DG + MG + G)` under a temperature cap, an energy budget and
//! the input box.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use dirattack_core::netdiff::{
    concat_with_input, Activation, DifferentiableMap, FnMap, Layer, MlpNetwork, SharedMap,
};
use dirattack_core::problem::FnGoal;
use dirattack_core::{Mode, ProblemSpec, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Time steps of the read-out; the network is evaluated `N + 1` times.
pub const STEPS: usize = 20;
/// Outputs per read-out: four glycerides, methyl ester, temperature.
pub const SPECIES: usize = 6;
pub const T_MAX: f64 = 120.0;
pub const Q_MAX: f64 = 12.0;
pub const TEMPERATURE_CAP: f64 = 70.0;
pub const ENERGY_BUDGET: f64 = 900.0;

const HIDDEN: usize = 16;
const EPOCHS: usize = 2500;
const TEMPERATURE_SCALE: f64 = 50.0;

pub fn temperature(s: f64, q: f64) -> f64 {
    25.0 + 6.0 * q * (1.0 - (-s / 40.0).exp())
}

fn rates(temp: f64) -> [f64; 4] {
    let a = (0.05 * (temp - 25.0)).exp();
    let degradation = 0.001 * (0.1 * (temp - 25.0)).exp();
    [0.004 * a, 0.006 * a, 0.008 * a, degradation]
}

fn kinetics(s: f64, q: f64, y: &[f64; 5]) -> [f64; 5] {
    let [k1, k2, k3, k4] = rates(temperature(s, q));
    let (r1, r2, r3) = (k1 * y[0], k2 * y[1], k3 * y[2]);
    [-r1, r1 - r2, r2 - r3, r3, r1 + r2 + r3 - k4 * y[4]]
}

/// `[TG, DG, MG, G, ME]` at each time in `times` (nondecreasing, from 0),
/// by classical RK4 with step at most `0.25`. Starts from pure TG.
pub fn simulate(q: f64, times: &[f64]) -> Vec<[f64; 5]> {
    let mut y = [1.0, 0.0, 0.0, 0.0, 0.0];
    let mut s = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let span = target - s;
        let substeps = (span / 0.25).ceil().max(0.0) as usize;
        let h = if substeps > 0 {
            span / substeps as f64
        } else {
            0.0
        };
        for _ in 0..substeps {
            let a = kinetics(s, q, &y);
            let b = kinetics(s + h / 2.0, q, &axpy(&y, h / 2.0, &a));
            let c = kinetics(s + h / 2.0, q, &axpy(&y, h / 2.0, &b));
            let d = kinetics(s + h, q, &axpy(&y, h, &c));
            for i in 0..5 {
                y[i] += h / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]);
            }
            s += h;
        }
        s = target;
        out.push(y);
    }
    out
}

fn axpy(y: &[f64; 5], h: f64, k: &[f64; 5]) -> [f64; 5] {
    let mut out = *y;
    for i in 0..5 {
        out[i] += h * k[i];
    }
    out
}

/// Largest absolute error of `net` over the training lattice, with the
/// temperature measured in units of 50 degrees.
pub fn fit_error(net: &MlpNetwork) -> Result<f64> {
    let mut worst = 0.0f64;
    for (x, target) in training_data() {
        let out = net.forward(&[x[0] * T_MAX, x[1] * Q_MAX])?;
        for (k, (o, t)) in out.iter().zip(&target).enumerate() {
            let scale = if k == SPECIES - 1 {
                TEMPERATURE_SCALE
            } else {
                1.0
            };
            worst = worst.max((o - t * scale).abs() / scale);
        }
    }
    Ok(worst)
}

/// Training set on a regular `(s, Q)` lattice over the input box.
fn training_data() -> Vec<([f64; 2], [f64; SPECIES])> {
    let times: Vec<f64> = (0..=24).map(|i| 5.0 * i as f64).collect();
    let mut data = Vec::new();
    for j in 0..=12 {
        let q = j as f64;
        for (s, y) in times.iter().zip(simulate(q, &times)) {
            let t = temperature(*s, q) / TEMPERATURE_SCALE;
            data.push(([s / T_MAX, q / Q_MAX], [y[0], y[1], y[2], y[3], y[4], t]));
        }
    }
    data
}

/// Fits a `2 → 16 → 16 → 6` relu network by full-batch Adam on squared
/// error with a linear output layer, then folds the input normalisation and
/// the temperature scale into the first and last layers and switches the
/// output to relu so every predicted concentration is nonnegative.
pub fn fit_surrogate(seed: u64) -> Result<MlpNetwork> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = MlpNetwork::random(
        &[2, HIDDEN, HIDDEN, SPECIES],
        Activation::Relu,
        Activation::Identity,
        &mut rng,
    )?;
    let data = training_data();
    let count = data.len() as f64;
    let sizes: Vec<(usize, usize)> = net
        .layers()
        .iter()
        .map(|l| (l.weights().len(), l.biases().len()))
        .collect();
    let zeros = || -> Vec<(Vec<f64>, Vec<f64>)> {
        sizes
            .iter()
            .map(|&(w, b)| (vec![0.0; w], vec![0.0; b]))
            .collect()
    };
    let (mut m1, mut m2) = (zeros(), zeros());
    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
    for epoch in 1..=EPOCHS {
        let mut grad = zeros();
        for (x, target) in &data {
            let out = net.forward(x)?;
            let u: Vec<f64> = out
                .iter()
                .zip(target)
                .map(|(o, t)| 2.0 * (o - t) / count)
                .collect();
            let (_, g) = net.parameter_gradient(x, &u)?;
            for ((gw, gb), lg) in grad.iter_mut().zip(&g) {
                gw.iter_mut().zip(&lg.weights).for_each(|(a, b)| *a += b);
                gb.iter_mut().zip(&lg.biases).for_each(|(a, b)| *a += b);
            }
        }
        let lr = 1e-2 * (1.0 - epoch as f64 / EPOCHS as f64).max(0.02);
        let c1 = 1.0 - beta1.powi(epoch as i32);
        let c2 = 1.0 - beta2.powi(epoch as i32);
        for (i, layer) in net.layers_mut().iter_mut().enumerate() {
            let step = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                for k in 0..p.len() {
                    m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                    v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                    p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
                }
            };
            step(layer.weights_mut(), &grad[i].0, &mut m1[i].0, &mut m2[i].0);
            step(layer.biases_mut(), &grad[i].1, &mut m1[i].1, &mut m2[i].1);
        }
    }
    fold_scales(net)
}

fn fold_scales(net: MlpNetwork) -> Result<MlpNetwork> {
    let last = net.layers().len() - 1;
    let mut layers = Vec::with_capacity(net.layers().len());
    for (i, l) in net.layers().iter().enumerate() {
        let mut w = l.weights().to_vec();
        let mut b = l.biases().to_vec();
        if i == 0 {
            for row in w.chunks_mut(2) {
                row[0] /= T_MAX;
                row[1] /= Q_MAX;
            }
        }
        if i == last {
            let t_row = SPECIES - 1;
            let width = l.in_dim();
            for v in &mut w[t_row * width..(t_row + 1) * width] {
                *v *= TEMPERATURE_SCALE;
            }
            b[t_row] *= TEMPERATURE_SCALE;
        }
        let act = if i == last {
            Activation::Relu
        } else {
            l.activation()
        };
        layers.push(Layer::new(l.in_dim(), l.out_dim(), w, b, act)?);
    }
    MlpNetwork::new(layers)
}

/// `(t, Q) ↦ [net(i·t/N, Q)]_{i=0..=N}`, output dimension `6(N + 1)`.
pub struct HorizonReadout {
    net: Arc<MlpNetwork>,
}

impl HorizonReadout {
    pub fn new(net: Arc<MlpNetwork>) -> Self {
        Self { net }
    }

    fn time(i: usize, t: f64) -> f64 {
        i as f64 * t / STEPS as f64
    }
}

impl DifferentiableMap for HorizonReadout {
    fn in_dim(&self) -> usize {
        2
    }
    fn out_dim(&self) -> usize {
        SPECIES * (STEPS + 1)
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != 2 {
            return Err(dirattack_core::Error::Dimension {
                expected: 2,
                got: x.len(),
            });
        }
        let mut out = Vec::with_capacity(self.out_dim());
        for i in 0..=STEPS {
            out.extend(self.net.forward(&[Self::time(i, x[0]), x[1]])?);
        }
        Ok(out)
    }
    fn vjp(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.out_dim() {
            return Err(dirattack_core::Error::Dimension {
                expected: self.out_dim(),
                got: u.len(),
            });
        }
        let mut g = [0.0, 0.0];
        for i in 0..=STEPS {
            let ui = &u[SPECIES * i..SPECIES * (i + 1)];
            if ui.iter().all(|v| *v == 0.0) {
                continue;
            }
            let gi = self.net.vjp(&[Self::time(i, x[0]), x[1]], ui)?;
            g[0] += gi[0] * i as f64 / STEPS as f64;
            g[1] += gi[1];
        }
        Ok(g.to_vec())
    }
}

pub fn readout(net: Arc<MlpNetwork>) -> SharedMap {
    Arc::new(HorizonReadout::new(net))
}

type Cache<T> = OnceLock<Mutex<HashMap<u64, T>>>;

static NETWORKS: Cache<Arc<MlpNetwork>> = OnceLock::new();
static OPTIMA: Cache<(f64, Vec<f64>)> = OnceLock::new();

fn cached<T: Clone>(cache: &Cache<T>, seed: u64, make: impl FnOnce() -> Result<T>) -> Result<T> {
    let map = cache.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = map.lock().expect("cache lock").get(&seed) {
        return Ok(v.clone());
    }
    let v = make()?;
    map.lock().expect("cache lock").insert(seed, v.clone());
    Ok(v)
}

/// The surrogate fitted with `seed`, memoised per process.
pub fn network(seed: u64) -> Result<Arc<MlpNetwork>> {
    cached(&NETWORKS, seed, || fit_surrogate(seed).map(Arc::new))
}

/// Grid size per axis of the certifying sweep.
pub const CERTIFY_GRID: usize = 401;

/// Grid-certified optimum of the problem built from `network(seed)`,
/// memoised per process.
pub fn certified_optimum(seed: u64) -> Result<(f64, Vec<f64>)> {
    cached(&OPTIMA, seed, || {
        grid_optimum(&problem_from_network(network(seed)?)?, CERTIFY_GRID)
    })
}

/// Length of the network block of `Φ`, the active components of the goal.
pub const READOUT_DIM: usize = SPECIES * (STEPS + 1);
/// Constraint count: per read-out five nonnegativity rows and the
/// temperature cap, then the input box and the energy budget.
pub const CONSTRAINT_DIM: usize = READOUT_DIM + 5;
/// Box centre, the starting point.
pub const START: [f64; 2] = [T_MAX / 2.0, Q_MAX / 2.0];

fn conversion(y: &[f64]) -> f64 {
    let mut sum = 0.0;
    for i in 0..=STEPS {
        let z = &y[SPECIES * i..SPECIES * (i + 1)];
        sum += z[4] / (z[0] + z[1] + z[2] + z[3]);
    }
    sum / (STEPS + 1) as f64
}

fn conversion_gradient(y: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; y.len()];
    let w = 1.0 / (STEPS + 1) as f64;
    for i in 0..=STEPS {
        let z = &y[SPECIES * i..SPECIES * (i + 1)];
        let d = z[0] + z[1] + z[2] + z[3];
        let gi = &mut g[SPECIES * i..SPECIES * (i + 1)];
        for v in &mut gi[..4] {
            *v = -w * z[4] / (d * d);
        }
        gi[4] = w / d;
    }
    g
}

fn constraint_values(y: &[f64]) -> Vec<f64> {
    let mut c = Vec::with_capacity(CONSTRAINT_DIM);
    for i in 0..=STEPS {
        let z = &y[SPECIES * i..SPECIES * (i + 1)];
        c.extend(z[..5].iter().map(|v| -v));
        c.push(z[5] - TEMPERATURE_CAP);
    }
    let (t, q) = (y[READOUT_DIM], y[READOUT_DIM + 1]);
    c.extend([-t, t - T_MAX, -q, q - Q_MAX, q * t - ENERGY_BUDGET]);
    c
}

fn constraint_vjp(y: &[f64], u: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; y.len()];
    for i in 0..=STEPS {
        for k in 0..5 {
            g[SPECIES * i + k] = -u[SPECIES * i + k];
        }
        g[SPECIES * i + 5] = u[SPECIES * i + 5];
    }
    let (t, q) = (y[READOUT_DIM], y[READOUT_DIM + 1]);
    let w = &u[READOUT_DIM..];
    g[READOUT_DIM] = -w[0] + w[1] + w[4] * q;
    g[READOUT_DIM + 1] = -w[2] + w[3] + w[4] * t;
    g
}

/// The reactor problem around a surrogate network, in exact mode from the
/// box centre.
pub fn problem_from_network(net: Arc<MlpNetwork>) -> Result<ProblemSpec> {
    let m = READOUT_DIM + 2;
    let phi: SharedMap = Arc::new(concat_with_input(readout(net)));
    let goal = FnGoal::new(m, conversion, conversion_gradient);
    let constraint = FnMap::new(m, CONSTRAINT_DIM, constraint_values, constraint_vjp);
    ProblemSpec::new(
        phi,
        Arc::new(goal),
        Arc::new(constraint),
        Mode::Exact,
        START.to_vec(),
    )
}

/// Best feasible objective over the `points × points` lattice covering the
/// box, with its argmax (lowest lattice index on ties).
pub fn grid_optimum(problem: &ProblemSpec, points: usize) -> Result<(f64, Vec<f64>)> {
    let axis = |max: f64, j: usize| max * j as f64 / (points - 1) as f64;
    let rows: Vec<Option<(f64, Vec<f64>)>> = (0..points)
        .into_par_iter()
        .map(|i| -> Result<Option<(f64, Vec<f64>)>> {
            let mut best: Option<(f64, Vec<f64>)> = None;
            for j in 0..points {
                let x = vec![axis(T_MAX, i), axis(Q_MAX, j)];
                let v = problem.assess(&x)?;
                if v.feasible && best.as_ref().map_or(true, |(f, _)| v.fval > *f) {
                    best = Some((v.fval, x));
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (f, x) in rows.into_iter().flatten() {
        if best.as_ref().map_or(true, |(b, _)| f > *b) {
            best = Some((f, x));
        }
    }
    best.ok_or_else(|| dirattack_core::Error::Config("no feasible grid point".into()))
}
