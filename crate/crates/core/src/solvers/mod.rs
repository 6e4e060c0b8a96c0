//! Declipping solvers.
//!
//! Both solvers minimize the same smooth consistency term
//!
//! ```text
//! ½‖M_R x − M_R y‖² + ½‖h(M_H x − θc)‖² + ½‖h(−M_L x − θc)‖²
//! ```
//!
//! plus a sparsity prior on time-frequency coefficients: in the synthesis
//! model the unknown is the coefficient grid `z` and `x = Dz`
//! ([`fista`]); in the analysis model the unknown is `x` itself and the
//! prior acts on `Ax` ([`lv`]). [`continuation`] drives either of them
//! through a decreasing sequence of thresholds.

pub mod continuation;
pub mod fista;
pub mod lv;

use crate::clip::{hinge_scalar, ClipThreshold, SampleClass, SampleMasks, Signal};
use crate::error::{check_len, Error, Result};

pub use continuation::{
    declip, declip_with_masks, ContinuationConfig, DeclipConfig, SolverKind, SolverRun, StageRecord, Weighting,
};
pub use fista::{solve_fista, FistaConfig, FistaOutput, GammaSchedule};
pub use lv::{solve_lv, LvConfig, LvOutput, LvParams};

/// Observed clipped samples together with their masks and threshold.
#[derive(Debug, Clone)]
pub struct DataFit {
    y: Vec<f64>,
    masks: SampleMasks,
    theta: f64,
}

impl DataFit {
    pub fn new(y: Vec<f64>, masks: SampleMasks, theta: ClipThreshold) -> Result<Self> {
        check_len(y.len(), masks.total_len())?;
        Ok(Self {
            y,
            masks,
            theta: theta.value(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn observed(&self) -> &[f64] {
        &self.y
    }

    pub fn masks(&self) -> &SampleMasks {
        &self.masks
    }

    /// Gradient of the consistency term at `v`, written into `out`.
    pub fn gradient_into(&self, v: &[f64], out: &mut [f64]) {
        let t = self.theta;
        for (((g, &v), &y), c) in out.iter_mut().zip(v).zip(&self.y).zip(self.masks.labels()) {
            *g = match c {
                SampleClass::Reliable => v - y,
                SampleClass::High => hinge_scalar(v - t),
                // d/dv ½ h(−v − θ)² = −h(−v − θ)
                SampleClass::Low => -hinge_scalar(-v - t),
            };
        }
    }

    pub fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; v.len()];
        self.gradient_into(v, &mut g);
        g
    }

    pub fn terms(&self, v: &[f64]) -> DataTerms {
        let t = self.theta;
        let mut d = DataTerms::default();
        for ((&v, &y), c) in v.iter().zip(&self.y).zip(self.masks.labels()) {
            match c {
                SampleClass::Reliable => d.reliable += 0.5 * (v - y) * (v - y),
                SampleClass::High => d.high += 0.5 * hinge_scalar(v - t).powi(2),
                SampleClass::Low => d.low += 0.5 * hinge_scalar(-v - t).powi(2),
            }
        }
        d
    }
}

/// The three halves-of-squared-norm consistency terms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DataTerms {
    pub reliable: f64,
    pub high: f64,
    pub low: f64,
}

impl DataTerms {
    pub fn total(&self) -> f64 {
        self.reliable + self.high + self.low
    }

    /// Clipping-constraint violation only.
    pub fn hinge(&self) -> f64 {
        self.high + self.low
    }
}

/// Gradient of the consistency term: `v − y` on reliable samples,
/// `h(v − θc)` on high ones and `−h(−v − θc)` on low ones.
pub fn data_gradient(v: &Signal, y: &Signal, masks: &SampleMasks, theta: ClipThreshold) -> Result<Signal> {
    check_len(y.len(), v.len())?;
    let fit = DataFit::new(y.samples().to_vec(), masks.clone(), theta)?;
    Signal::new(fit.gradient(v.samples()), v.sample_rate())
}

/// Iteration budget and early-stop threshold on the time-domain step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub max_iter: usize,
    pub epsilon: f64,
}

pub(crate) fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

pub(crate) fn ensure_finite(v: &[f64], iteration: usize, what: &str) -> Result<()> {
    if v.iter().all(|s| s.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence {
            iteration,
            what: format!("non-finite {what}"),
        })
    }
}
