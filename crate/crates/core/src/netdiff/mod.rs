//! Feedforward-network engine and the composite maps built on top of `Φ`.
//!
//! Every solver touches `Φ` only through [`DifferentiableMap`]: a forward
//! evaluation and a vector-Jacobian product. Nothing else about the network
//! is assumed.

mod maps;
mod mlp;
mod weights;

use std::sync::Arc;

use crate::error::{check_dim, Result};

pub use maps::{AugmentedMap, DifferentialMap, ScaledDifferentialMap};
pub(crate) use mlp::softmax;
pub use mlp::{Activation, Layer, LayerGradient, MlpNetwork};
pub use weights::{
    load_network, network_from_str, network_to_string, save_network, FORMAT_VERSION,
};

/// A map `R^a → R^b` exposing evaluation and vector-Jacobian products.
pub trait DifferentiableMap: Send + Sync {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Gradient of `u · map(x)` with respect to `x`, i.e. `J(x)ᵀ u`.
    fn vjp(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>>;
}

pub type SharedMap = Arc<dyn DifferentiableMap>;

impl<M: DifferentiableMap + ?Sized> DifferentiableMap for Arc<M> {
    fn in_dim(&self) -> usize {
        (**self).in_dim()
    }
    fn out_dim(&self) -> usize {
        (**self).out_dim()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).eval(x)
    }
    fn vjp(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        (**self).vjp(x, u)
    }
}

type EvalFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type VjpFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;

/// A differentiable map given by a pair of closures, for analytic pieces such
/// as constraint functions.
pub struct FnMap {
    in_dim: usize,
    out_dim: usize,
    eval: Box<EvalFn>,
    vjp: Box<VjpFn>,
}

impl FnMap {
    pub fn new<E, V>(in_dim: usize, out_dim: usize, eval: E, vjp: V) -> Self
    where
        E: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        V: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            in_dim,
            out_dim,
            eval: Box::new(eval),
            vjp: Box::new(vjp),
        }
    }

    /// The constant map `x ↦ value`.
    pub fn constant(in_dim: usize, value: Vec<f64>) -> Self {
        let out_dim = value.len();
        Self::new(
            in_dim,
            out_dim,
            move |_| value.clone(),
            move |_, _| vec![0.0; in_dim],
        )
    }
}

impl DifferentiableMap for FnMap {
    fn in_dim(&self) -> usize {
        self.in_dim
    }
    fn out_dim(&self) -> usize {
        self.out_dim
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.in_dim, x.len())?;
        let y = (self.eval)(x);
        check_dim(self.out_dim, y.len())?;
        Ok(y)
    }
    fn vjp(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.in_dim, x.len())?;
        check_dim(self.out_dim, u.len())?;
        let g = (self.vjp)(x, u);
        check_dim(self.in_dim, g.len())?;
        Ok(g)
    }
}

/// `x ↦ (Ψ(x), x)`, the input-concatenated form that lets constraints on `x`
/// be written as constraints on the network output.
pub struct ConcatWithInput {
    psi: SharedMap,
}

pub fn concat_with_input(psi: SharedMap) -> ConcatWithInput {
    ConcatWithInput { psi }
}

impl ConcatWithInput {
    pub fn inner(&self) -> &SharedMap {
        &self.psi
    }
}

impl DifferentiableMap for ConcatWithInput {
    fn in_dim(&self) -> usize {
        self.psi.in_dim()
    }
    fn out_dim(&self) -> usize {
        self.psi.out_dim() + self.psi.in_dim()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.psi.eval(x)?;
        y.extend_from_slice(x);
        Ok(y)
    }
    fn vjp(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.out_dim(), u.len())?;
        let k = self.psi.out_dim();
        let mut g = self.psi.vjp(x, &u[..k])?;
        for (gi, ui) in g.iter_mut().zip(&u[k..]) {
            *gi += ui;
        }
        Ok(g)
    }
}

/// Central finite-difference Jacobian, row `j` holding `∂ map_j / ∂x`.
///
/// Used as an independent check of [`DifferentiableMap::vjp`].
pub fn finite_difference_jacobian(
    map: &dyn DifferentiableMap,
    x: &[f64],
    step: f64,
) -> Result<Vec<Vec<f64>>> {
    let n = map.in_dim();
    check_dim(n, x.len())?;
    let mut jac = vec![vec![0.0; n]; map.out_dim()];
    let mut probe = x.to_vec();
    for i in 0..n {
        probe[i] = x[i] + step;
        let plus = map.eval(&probe)?;
        probe[i] = x[i] - step;
        let minus = map.eval(&probe)?;
        probe[i] = x[i];
        for (row, (p, m)) in jac.iter_mut().zip(plus.iter().zip(&minus)) {
            row[i] = (p - m) / (2.0 * step);
        }
    }
    Ok(jac)
}
