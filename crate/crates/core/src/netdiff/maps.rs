//! Composite maps built from `Φ`: the differential network, the augmented
//! network `Φ̃ = (Φ, relu(c∘Φ))` and its box-scaled differential.

use std::sync::Arc;

use super::{DifferentiableMap, SharedMap};
use crate::error::{check_dim, Result};
use crate::problem::ProblemSpec;

/// `d ↦ base(anchor + d) − base(anchor)`.
pub struct DifferentialMap {
    base: SharedMap,
    anchor: Vec<f64>,
    base_value: Vec<f64>,
}

impl DifferentialMap {
    pub fn new(base: SharedMap, anchor: Vec<f64>) -> Result<Self> {
        let base_value = base.eval(&anchor)?;
        Ok(Self {
            base,
            anchor,
            base_value,
        })
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    /// `base(anchor)`, computed once at construction.
    pub fn base_value(&self) -> &[f64] {
        &self.base_value
    }
}

impl DifferentiableMap for DifferentialMap {
    fn in_dim(&self) -> usize {
        self.base.in_dim()
    }
    fn out_dim(&self) -> usize {
        self.base.out_dim()
    }
    fn eval(&self, d: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.in_dim(), d.len())?;
        let x: Vec<f64> = self.anchor.iter().zip(d).map(|(a, b)| a + b).collect();
        let y = self.base.eval(&x)?;
        Ok(y.iter().zip(&self.base_value).map(|(a, b)| a - b).collect())
    }
    fn vjp(&self, d: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.in_dim(), d.len())?;
        let x: Vec<f64> = self.anchor.iter().zip(d).map(|(a, b)| a + b).collect();
        self.base.vjp(&x, u)
    }
}

/// `x ↦ (Φ(x), relu(c(Φ(x))))`, output dimension `m + p`.
///
/// The second block is zero exactly where `x` is feasible, so the relaxed
/// objective `f(y) − ‖z‖²` agrees with `f` on the feasible set.
pub struct AugmentedMap {
    phi: SharedMap,
    constraint: SharedMap,
}

impl AugmentedMap {
    pub fn new(problem: &ProblemSpec) -> Self {
        Self {
            phi: Arc::clone(problem.phi()),
            constraint: Arc::clone(problem.constraint()),
        }
    }

    pub fn m(&self) -> usize {
        self.phi.out_dim()
    }

    pub fn p(&self) -> usize {
        self.constraint.out_dim()
    }
}

impl DifferentiableMap for AugmentedMap {
    fn in_dim(&self) -> usize {
        self.phi.in_dim()
    }
    fn out_dim(&self) -> usize {
        self.m() + self.p()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.phi.eval(x)?;
        let c = self.constraint.eval(&y)?;
        y.extend(c.into_iter().map(|v| v.max(0.0)));
        Ok(y)
    }
    fn vjp(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.out_dim(), u.len())?;
        let m = self.m();
        let mut w = u[..m].to_vec();
        if self.p() > 0 {
            let y = self.phi.eval(x)?;
            let c = self.constraint.eval(&y)?;
            // relu pullback, subgradient 0 at c = 0
            let masked: Vec<f64> = u[m..]
                .iter()
                .zip(&c)
                .map(|(ui, ci)| if *ci > 0.0 { *ui } else { 0.0 })
                .collect();
            if masked.iter().any(|v| *v != 0.0) {
                let back = self.constraint.vjp(&y, &masked)?;
                for (wi, bi) in w.iter_mut().zip(&back) {
                    *wi += bi;
                }
            }
        }
        self.phi.vjp(x, &w)
    }
}

/// The augmented differential at `x` seen through the box map
/// `δ ↦ 2r(δ − ½𝟙)`, so that `[0,1]^n` covers the max-norm ball of radius `r`.
///
/// Solvers work with the centred variable `δ − ½𝟙 ∈ [−½, ½]^n`; the
/// `*_centered` methods take that variable directly and every direction they
/// report is produced by [`ScaledDifferentialMap::direction_centered`].
pub struct ScaledDifferentialMap {
    base: SharedMap,
    anchor: Vec<f64>,
    anchor_value: Vec<f64>,
    radius: f64,
}

impl ScaledDifferentialMap {
    /// Wraps an arbitrary map; attacks use [`ScaledDifferentialMap::augmented`].
    pub fn new(base: SharedMap, anchor: Vec<f64>, radius: f64) -> Result<Self> {
        check_dim(base.in_dim(), anchor.len())?;
        let anchor_value = base.eval(&anchor)?;
        Ok(Self {
            base,
            anchor,
            anchor_value,
            radius,
        })
    }

    pub fn augmented(problem: &ProblemSpec, anchor: Vec<f64>, radius: f64) -> Result<Self> {
        Self::new(Arc::new(AugmentedMap::new(problem)), anchor, radius)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    /// `base(anchor)`.
    pub fn anchor_value(&self) -> &[f64] {
        &self.anchor_value
    }

    /// `d_r(δ) = 2r(δ − ½𝟙)`.
    pub fn direction(&self, delta: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = delta.iter().map(|v| v - 0.5).collect();
        self.direction_centered(&centered)
    }

    /// `2r·c` for a centred variable `c = δ − ½𝟙`.
    pub fn direction_centered(&self, centered: &[f64]) -> Vec<f64> {
        let s = 2.0 * self.radius;
        centered.iter().map(|v| s * v).collect()
    }

    fn shifted(&self, d: &[f64]) -> Vec<f64> {
        self.anchor.iter().zip(d).map(|(a, b)| a + b).collect()
    }

    /// `base(anchor + 2r·c)`, before subtracting the anchor value.
    pub fn base_eval_centered(&self, centered: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.in_dim(), centered.len())?;
        let d = self.direction_centered(centered);
        self.base.eval(&self.shifted(&d))
    }

    pub fn eval_centered(&self, centered: &[f64]) -> Result<Vec<f64>> {
        let y = self.base_eval_centered(centered)?;
        Ok(y.iter()
            .zip(&self.anchor_value)
            .map(|(a, b)| a - b)
            .collect())
    }

    pub fn vjp_centered(&self, centered: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.in_dim(), centered.len())?;
        let d = self.direction_centered(centered);
        let g = self.base.vjp(&self.shifted(&d), u)?;
        let s = 2.0 * self.radius;
        Ok(g.into_iter().map(|v| s * v).collect())
    }
}

impl DifferentiableMap for ScaledDifferentialMap {
    fn in_dim(&self) -> usize {
        self.base.in_dim()
    }
    fn out_dim(&self) -> usize {
        self.base.out_dim()
    }
    fn eval(&self, delta: &[f64]) -> Result<Vec<f64>> {
        let centered: Vec<f64> = delta.iter().map(|v| v - 0.5).collect();
        self.eval_centered(&centered)
    }
    fn vjp(&self, delta: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let centered: Vec<f64> = delta.iter().map(|v| v - 0.5).collect();
        self.vjp_centered(&centered, u)
    }
}
