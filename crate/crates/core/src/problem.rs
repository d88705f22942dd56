//! Problem representation, evaluation caching and incumbent selection.

use std::collections::HashMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::netdiff::SharedMap;

/// A smooth scalar goal on the network output space, with its gradient.
pub trait Goal: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, y: &[f64]) -> f64;
    fn gradient(&self, y: &[f64]) -> Vec<f64>;
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A [`Goal`] given by closures.
pub struct FnGoal {
    dim: usize,
    value: Box<ValueFn>,
    gradient: Box<GradFn>,
}

impl FnGoal {
    pub fn new<V, G>(dim: usize, value: V, gradient: G) -> Self
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            value: Box::new(value),
            gradient: Box::new(gradient),
        }
    }
}

impl Goal for FnGoal {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, y: &[f64]) -> f64 {
        (self.value)(y)
    }
    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        (self.gradient)(y)
    }
}

/// Whether the constraints are enforced as a barrier (`Exact`) or folded into
/// the objective as the penalty `‖relu(c)‖²` (`Relaxed`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Relaxed,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exact" => Ok(Mode::Exact),
            "relaxed" => Ok(Mode::Relaxed),
            other => Err(format!(
                "unknown mode {other:?} (expected exact or relaxed)"
            )),
        }
    }
}

/// `maximize f(Φ(x)) subject to c(Φ(x)) ≤ 0`, started from `x0`.
///
/// Immutable once built and cheap to clone; every piece is shared behind an
/// `Arc`.
#[derive(Clone)]
pub struct ProblemSpec {
    phi: SharedMap,
    goal: Arc<dyn Goal>,
    constraint: SharedMap,
    mode: Mode,
    x0: Vec<f64>,
}

/// Objective and feasibility of one point, before it is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct PointValue {
    pub y: Vec<f64>,
    pub cvals: Vec<f64>,
    pub fval: f64,
    pub feasible: bool,
}

impl ProblemSpec {
    pub fn new(
        phi: SharedMap,
        goal: Arc<dyn Goal>,
        constraint: SharedMap,
        mode: Mode,
        x0: Vec<f64>,
    ) -> Result<Self> {
        check_dim(phi.in_dim(), x0.len())?;
        check_dim(phi.out_dim(), goal.dim())?;
        check_dim(phi.out_dim(), constraint.in_dim())?;
        let spec = Self {
            phi,
            goal,
            constraint,
            mode,
            x0,
        };
        spec.check_start()?;
        Ok(spec)
    }

    /// Same problem under another feasibility mode.
    pub fn with_mode(&self, mode: Mode) -> Result<Self> {
        let spec = Self {
            mode,
            ..self.clone()
        };
        spec.check_start()?;
        Ok(spec)
    }

    /// Same problem started elsewhere.
    pub fn with_start(&self, x0: Vec<f64>) -> Result<Self> {
        check_dim(self.n(), x0.len())?;
        let spec = Self { x0, ..self.clone() };
        spec.check_start()?;
        Ok(spec)
    }

    fn check_start(&self) -> Result<()> {
        if !self.x0.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinitePoint);
        }
        if self.mode == Mode::Exact {
            let value = self.assess(&self.x0)?;
            if !value.feasible {
                let worst = value
                    .cvals
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                return Err(Error::InfeasibleStart(worst));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.phi.in_dim()
    }
    pub fn m(&self) -> usize {
        self.phi.out_dim()
    }
    pub fn p(&self) -> usize {
        self.constraint.out_dim()
    }
    pub fn phi(&self) -> &SharedMap {
        &self.phi
    }
    pub fn goal(&self) -> &Arc<dyn Goal> {
        &self.goal
    }
    pub fn constraint(&self) -> &SharedMap {
        &self.constraint
    }
    pub fn mode(&self) -> Mode {
        self.mode
    }
    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    /// Objective value of an already computed `(Φ(x), c(Φ(x)))` pair.
    pub fn objective_from(&self, y: &[f64], cvals: &[f64]) -> f64 {
        let f = self.goal.value(y);
        match self.mode {
            Mode::Exact => f,
            Mode::Relaxed => f - cvals.iter().map(|c| c.max(0.0).powi(2)).sum::<f64>(),
        }
    }

    /// Evaluates `Φ`, `c` and the objective at `x` without touching any
    /// history. Non-finite outputs give `fval = -∞` and `feasible = false`.
    pub fn assess(&self, x: &[f64]) -> Result<PointValue> {
        check_dim(self.n(), x.len())?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinitePoint);
        }
        let y = self.phi.eval(x)?;
        let cvals = if y.iter().all(|v| v.is_finite()) {
            self.constraint.eval(&y)?
        } else {
            vec![f64::NAN; self.p()]
        };
        let fval = self.objective_from(&y, &cvals);
        let finite = fval.is_finite() && cvals.iter().all(|v| v.is_finite());
        if !finite {
            return Ok(PointValue {
                y,
                cvals,
                fval: f64::NEG_INFINITY,
                feasible: false,
            });
        }
        let feasible = match self.mode {
            Mode::Exact => cvals.iter().all(|&c| c <= 0.0),
            Mode::Relaxed => true,
        };
        Ok(PointValue {
            y,
            cvals,
            fval,
            feasible,
        })
    }

    /// Largest relative error between the analytic goal gradient and central
    /// finite differences (step `1e-6`) at `probes` random points around
    /// `Φ(x0)`, offset by Gaussians of standard deviation `0.05`. Relative
    /// error is `|g - fd| / max(1, |g|)`.
    pub fn goal_gradient_error(&self, probes: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = self.phi.eval(&self.x0)?;
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for _ in 0..probes {
            let y: Vec<f64> = base
                .iter()
                .map(|v| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    v + 0.05 * noise
                })
                .collect();
            let g = self.goal.gradient(&y);
            check_dim(self.m(), g.len())?;
            let mut probe = y.clone();
            for i in 0..y.len() {
                probe[i] = y[i] + h;
                let fp = self.goal.value(&probe);
                probe[i] = y[i] - h;
                let fm = self.goal.value(&probe);
                probe[i] = y[i];
                let fd = (fp - fm) / (2.0 * h);
                worst = worst.max((g[i] - fd).abs() / g[i].abs().max(1.0));
            }
        }
        Ok(worst)
    }
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("n", &self.n())
            .field("m", &self.m())
            .field("p", &self.p())
            .field("mode", &self.mode)
            .field("x0", &self.x0)
            .finish()
    }
}

/// Which step produced a trial point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialTag {
    Initial,
    Attack,
    Covering,
    Search,
    Poll,
    LineSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Position in evaluation order; also the tie-break key.
    pub index: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub cvals: Vec<f64>,
    pub fval: f64,
    pub feasible: bool,
    pub tag: TrialTag,
}

/// Every point evaluated during a run, in evaluation order.
#[derive(Debug, Clone, Default)]
pub struct TrialHistory {
    records: Vec<EvalRecord>,
    dedupe_tol: f64,
    by_bits: HashMap<Vec<u64>, usize>,
}

fn bits(x: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same point.
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

impl TrialHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Points within `tol` in max-norm of a stored point reuse its record.
    pub fn with_dedupe_tol(tol: f64) -> Self {
        Self {
            dedupe_tol: tol.max(0.0),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of actual evaluations of `Φ`; cache hits never count.
    pub fn evaluations(&self) -> usize {
        self.records.len()
    }

    pub fn records(&self) -> &[EvalRecord] {
        &self.records
    }

    pub fn get(&self, index: usize) -> Option<&EvalRecord> {
        self.records.get(index)
    }

    pub fn dedupe_tol(&self) -> f64 {
        self.dedupe_tol
    }

    pub fn lookup(&self, x: &[f64]) -> Option<&EvalRecord> {
        if let Some(&i) = self.by_bits.get(&bits(x)) {
            return Some(&self.records[i]);
        }
        if self.dedupe_tol > 0.0 {
            return self.records.iter().find(|r| {
                r.x.len() == x.len() && crate::vecops::max_abs_diff(&r.x, x) <= self.dedupe_tol
            });
        }
        None
    }

    /// Returns the cached record for `x` if there is one, otherwise evaluates
    /// `x`, stores it and returns the new record.
    pub fn evaluate(
        &mut self,
        problem: &ProblemSpec,
        x: &[f64],
        tag: TrialTag,
    ) -> Result<&EvalRecord> {
        if let Some(idx) = self.lookup(x).map(|r| r.index) {
            return Ok(&self.records[idx]);
        }
        let value = problem.assess(x)?;
        let index = self.records.len();
        self.by_bits.insert(bits(x), index);
        self.records.push(EvalRecord {
            index,
            x: x.to_vec(),
            y: value.y,
            cvals: value.cvals,
            fval: value.fval,
            feasible: value.feasible,
            tag,
        });
        Ok(&self.records[index])
    }

    /// Minimum max-norm distance from `x` to a stored point; `+∞` when empty.
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        self.records
            .iter()
            .map(|r| crate::vecops::max_abs_diff(&r.x, x))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn evaluate<'h>(
    problem: &ProblemSpec,
    history: &'h mut TrialHistory,
    x: &[f64],
    tag: TrialTag,
) -> Result<&'h EvalRecord> {
    history.evaluate(problem, x, tag)
}

pub fn distance_to_history(history: &TrialHistory, x: &[f64]) -> f64 {
    history.distance_to(x)
}

/// Best feasible record if it strictly beats the incumbent, otherwise the
/// incumbent. Equal maxima go to the earliest evaluation.
pub fn best_feasible<'a>(records: &'a [EvalRecord], incumbent: &'a EvalRecord) -> &'a EvalRecord {
    let mut best: Option<&EvalRecord> = None;
    for r in records.iter().filter(|r| r.feasible) {
        best = match best {
            Some(b) if r.fval > b.fval || (r.fval == b.fval && r.index < b.index) => Some(r),
            Some(b) => Some(b),
            None => Some(r),
        };
    }
    match best {
        Some(b) if b.fval > incumbent.fval => b,
        _ => incumbent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netdiff::FnMap;

    fn identity_quadratic(mode: Mode) -> ProblemSpec {
        let phi: SharedMap = Arc::new(FnMap::new(1, 1, |x| x.to_vec(), |_, u| u.to_vec()));
        let goal = Arc::new(FnGoal::new(1, |y| -y[0] * y[0], |y| vec![-2.0 * y[0]]));
        let c: SharedMap = Arc::new(FnMap::constant(1, vec![-1.0]));
        ProblemSpec::new(phi, goal, c, mode, vec![0.0]).unwrap()
    }

    fn record(index: usize, fval: f64, feasible: bool) -> EvalRecord {
        EvalRecord {
            index,
            x: vec![index as f64],
            y: vec![],
            cvals: vec![],
            fval,
            feasible,
            tag: TrialTag::Poll,
        }
    }

    #[test]
    fn evaluate_direct_formula() {
        let p = identity_quadratic(Mode::Exact);
        let mut h = TrialHistory::new();
        let r = evaluate(&p, &mut h, &[0.0], TrialTag::Initial).unwrap();
        assert_eq!(r.fval, 0.0);
        assert!(r.feasible);
        let r = evaluate(&p, &mut h, &[2.0], TrialTag::Poll).unwrap();
        assert_eq!(r.fval, -4.0);
    }

    #[test]
    fn repeated_point_is_cached() {
        let p = identity_quadratic(Mode::Exact);
        let mut h = TrialHistory::new();
        evaluate(&p, &mut h, &[2.0], TrialTag::Poll).unwrap();
        assert_eq!(h.evaluations(), 1);
        let again = evaluate(&p, &mut h, &[2.0], TrialTag::Search).unwrap();
        assert_eq!(again.index, 0);
        assert_eq!(again.tag, TrialTag::Poll);
        assert_eq!(h.evaluations(), 1);
        evaluate(&p, &mut h, &[-0.0], TrialTag::Poll).unwrap();
        evaluate(&p, &mut h, &[0.0], TrialTag::Poll).unwrap();
        assert_eq!(h.evaluations(), 2);
    }

    #[test]
    fn dedupe_tolerance_merges_nearby_points() {
        let p = identity_quadratic(Mode::Exact);
        let mut h = TrialHistory::with_dedupe_tol(1e-3);
        evaluate(&p, &mut h, &[1.0], TrialTag::Poll).unwrap();
        evaluate(&p, &mut h, &[1.0005], TrialTag::Poll).unwrap();
        assert_eq!(h.evaluations(), 1);
        evaluate(&p, &mut h, &[1.01], TrialTag::Poll).unwrap();
        assert_eq!(h.evaluations(), 2);
    }

    #[test]
    fn non_finite_output_is_dominated() {
        let phi: SharedMap = Arc::new(FnMap::new(1, 1, |x| vec![1.0 / x[0]], |_, u| u.to_vec()));
        let goal = Arc::new(FnGoal::new(1, |y| y[0], |_| vec![1.0]));
        let c: SharedMap = Arc::new(FnMap::constant(1, vec![-1.0]));
        let p = ProblemSpec::new(phi, goal, c, Mode::Relaxed, vec![1.0]).unwrap();
        let mut h = TrialHistory::new();
        let r = evaluate(&p, &mut h, &[0.0], TrialTag::Poll)
            .unwrap()
            .clone();
        assert_eq!(r.fval, f64::NEG_INFINITY);
        assert!(!r.feasible);
        let inc = record(9, -1e300, true);
        assert_eq!(best_feasible(&[r], &inc).index, 9);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let p = identity_quadratic(Mode::Exact);
        let mut h = TrialHistory::new();
        assert!(matches!(
            evaluate(&p, &mut h, &[f64::NAN], TrialTag::Poll),
            Err(Error::NonFinitePoint)
        ));
        assert!(evaluate(&p, &mut h, &[1.0, 2.0], TrialTag::Poll).is_err());
    }

    #[test]
    fn relaxed_mode_subtracts_penalty() {
        let phi: SharedMap = Arc::new(FnMap::new(1, 1, |x| x.to_vec(), |_, u| u.to_vec()));
        let goal = Arc::new(FnGoal::new(1, |y| y[0], |_| vec![1.0]));
        let c: SharedMap = Arc::new(FnMap::new(1, 1, |y| vec![y[0] - 1.0], |_, u| u.to_vec()));
        let exact = ProblemSpec::new(phi, goal, c, Mode::Exact, vec![0.0]).unwrap();
        let relaxed = exact.with_mode(Mode::Relaxed).unwrap();
        let v = relaxed.assess(&[3.0]).unwrap();
        assert_eq!(v.fval, 3.0 - 4.0);
        assert!(v.feasible);
        let v = exact.assess(&[3.0]).unwrap();
        assert_eq!(v.fval, 3.0);
        assert!(!v.feasible);
        let v = relaxed.assess(&[0.5]).unwrap();
        assert_eq!(v.fval, 0.5);
        assert!(matches!(
            exact.with_start(vec![2.0]),
            Err(Error::InfeasibleStart(_))
        ));
    }

    #[test]
    fn best_feasible_examples() {
        let inc = record(10, -2.0, true);
        let recs = vec![record(0, -4.0, true), record(1, -1.0, true)];
        assert_eq!(best_feasible(&recs, &inc).fval, -1.0);
        let recs = vec![record(0, -4.0, true)];
        assert_eq!(best_feasible(&recs, &inc).index, 10);
        let recs = vec![record(0, 5.0, false), record(1, 7.0, false)];
        assert_eq!(best_feasible(&recs, &inc).index, 10);
        assert_eq!(best_feasible(&[], &inc).index, 10);
        let tie = record(10, -1.0, true);
        assert_eq!(best_feasible(&[record(3, -1.0, true)], &tie).index, 10);
    }

    #[test]
    fn best_feasible_ties_go_to_first_evaluated() {
        let inc = record(10, -2.0, true);
        let recs = vec![
            record(5, 1.0, true),
            record(2, 1.0, true),
            record(7, 1.0, true),
        ];
        assert_eq!(best_feasible(&recs, &inc).index, 2);
    }

    #[test]
    fn distance_examples() {
        let h = TrialHistory::new();
        assert_eq!(distance_to_history(&h, &[1.0, 0.0]), f64::INFINITY);
        let phi: SharedMap = Arc::new(FnMap::new(2, 2, |x| x.to_vec(), |_, u| u.to_vec()));
        let goal = Arc::new(FnGoal::new(2, |y| y[0], |_| vec![1.0, 0.0]));
        let c: SharedMap = Arc::new(FnMap::constant(2, vec![-1.0]));
        let p2 = ProblemSpec::new(phi, goal, c, Mode::Exact, vec![0.0, 0.0]).unwrap();
        let mut h = TrialHistory::new();
        evaluate(&p2, &mut h, &[0.0, 0.0], TrialTag::Initial).unwrap();
        assert_eq!(distance_to_history(&h, &[1.0, 0.0]), 1.0);
        evaluate(&p2, &mut h, &[2.0, 2.0], TrialTag::Poll).unwrap();
        assert_eq!(distance_to_history(&h, &[1.0, 1.0]), 1.0);
    }

    #[test]
    fn goal_gradient_check_detects_wrong_gradient() {
        let p = identity_quadratic(Mode::Exact);
        assert!(p.goal_gradient_error(20, 1).unwrap() < 1e-6);
        let phi: SharedMap = Arc::new(FnMap::new(1, 1, |x| x.to_vec(), |_, u| u.to_vec()));
        let goal = Arc::new(FnGoal::new(1, |y| -y[0] * y[0], |y| vec![-y[0]]));
        let c: SharedMap = Arc::new(FnMap::constant(1, vec![-1.0]));
        let wrong = ProblemSpec::new(phi, goal, c, Mode::Exact, vec![1.0]).unwrap();
        assert!(wrong.goal_gradient_error(20, 1).unwrap() > 1e-3);
    }
}
