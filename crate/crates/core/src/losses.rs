//! Attack losses and the well-suited loss property.
//!
//! A loss `L` is well suited when `L(y1, y2) < L(0, y2)` forces
//! `⟨y1, y2⟩ > 0`: any perturbation that beats the null perturbation then
//! moves the output along the target direction. Squared error has the
//! property; cross-entropy does not.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::netdiff::softmax;
use crate::vecops::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    /// `‖y2 − y1‖²`.
    #[serde(rename = "se")]
    SquaredError,
    /// `−⟨ln softmax(y1), softmax(y2)⟩`.
    #[serde(rename = "ce")]
    CrossEntropy,
}

impl std::str::FromStr for LossKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "se" => Ok(LossKind::SquaredError),
            "ce" => Ok(LossKind::CrossEntropy),
            other => Err(format!("unknown loss {other:?} (expected se or ce)")),
        }
    }
}

fn log_softmax(y: &[f64]) -> Vec<f64> {
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = y.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    y.iter().map(|v| v - max - lse).collect()
}

pub fn loss(kind: LossKind, y1: &[f64], y2: &[f64]) -> Result<f64> {
    check_dim(y1.len(), y2.len())?;
    Ok(match kind {
        LossKind::SquaredError => y1.iter().zip(y2).map(|(a, b)| (b - a) * (b - a)).sum(),
        LossKind::CrossEntropy => {
            if y1.is_empty() {
                return Ok(0.0);
            }
            let target = softmax(y2);
            -dot(&log_softmax(y1), &target)
        }
    })
}

/// Gradient of [`loss`] with respect to `y1`.
pub fn loss_grad(kind: LossKind, y1: &[f64], y2: &[f64]) -> Result<Vec<f64>> {
    check_dim(y1.len(), y2.len())?;
    Ok(match kind {
        LossKind::SquaredError => y1.iter().zip(y2).map(|(a, b)| 2.0 * (a - b)).collect(),
        LossKind::CrossEntropy => {
            if y1.is_empty() {
                return Ok(Vec::new());
            }
            let s1 = softmax(y1);
            let s2 = softmax(y2);
            s1.iter().zip(&s2).map(|(a, b)| a - b).collect()
        }
    })
}

/// Whether `L(y1, y2) < L(0, y2) ⇒ ⟨y1, y2⟩ > 0` holds at this pair.
pub fn wslp_check(kind: LossKind, y1: &[f64], y2: &[f64]) -> Result<bool> {
    let zero = vec![0.0; y1.len()];
    let beats_null = loss(kind, y1, y2)? < loss(kind, &zero, y2)?;
    Ok(!beats_null || dot(y1, y2) > 0.0)
}

/// A pair `(y1, y2)` violating the well-suited loss property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WslpWitness {
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
}

/// Samples pairs uniformly from `[−5, 5]^dim` and returns the first one that
/// violates the property, or `None` after `max_tries` samples.
pub fn find_wslp_counterexample(
    kind: LossKind,
    dim: usize,
    seed: u64,
    max_tries: usize,
) -> Option<WslpWitness> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..dim).map(|_| rng.random_range(-5.0..=5.0)).collect()
    };
    for _ in 0..max_tries {
        let y1 = draw(&mut rng);
        let y2 = draw(&mut rng);
        if !wslp_check(kind, &y1, &y2).unwrap_or(true) {
            return Some(WslpWitness { y1, y2 });
        }
    }
    None
}
