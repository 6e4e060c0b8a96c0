//! Synthesis-model declipper: ISTA with optional FISTA-type extrapolation.

use serde::{Deserialize, Serialize};

use super::{ensure_finite, norm_diff, DataFit, StopRule};
use crate::error::{check_len, Error, Result};
use crate::gabor::{CoefGrid, GaborFrame};
use crate::shrinkage::{apply_with_lambda, ShrinkageSpec};

/// Extrapolation factor as a function of the inner iteration counter `k ≥ 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaSchedule {
    /// `(k − 1) / (k + 5)`.
    #[default]
    Fista,
    /// Fixed factor; zero gives plain ISTA.
    Constant(f64),
}

impl GammaSchedule {
    pub fn gamma(&self, k: usize) -> f64 {
        match *self {
            Self::Fista => (k as f64 - 1.0) / (k as f64 + 5.0),
            Self::Constant(g) => g,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FistaConfig {
    pub gamma: GammaSchedule,
    /// `‖DD*‖` of the synthesis operator.
    pub delta: f64,
}

impl FistaConfig {
    pub fn new(gamma: GammaSchedule, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Config(format!("delta must be positive, got {delta}")));
        }
        if let GammaSchedule::Constant(g) = gamma {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::Config(format!("extrapolation factor must lie in [0, 1), got {g}")));
            }
        }
        Ok(Self { gamma, delta })
    }
}

#[derive(Debug, Clone)]
pub struct FistaOutput {
    /// Final shrinkage output `ẑ`.
    pub coefs: CoefGrid,
    /// `Dẑ`.
    pub signal: Vec<f64>,
    pub iterations: usize,
}

/// Runs the synthesis solver at a fixed `lambda`, starting from
/// `ẑ = z = z0`. The momentum counter starts at one on every call.
///
/// Each iteration evaluates the consistency gradient at the extrapolated
/// point, takes a gradient step of size `1/δ` in the coefficient domain,
/// shrinks with threshold `λ/δ` and extrapolates. Iterations stop early when
/// consecutive time-domain estimates `Dẑ` differ by less than `epsilon`.
pub fn solve_fista(
    frame: &GaborFrame,
    data: &DataFit,
    shrink: &ShrinkageSpec,
    cfg: &FistaConfig,
    lambda: f64,
    z0: &CoefGrid,
    stop: StopRule,
) -> Result<FistaOutput> {
    check_len(frame.config().signal_len, data.len())?;
    check_len(frame.config().n_bins(), z0.n_bins())?;
    check_len(frame.config().n_frames(), z0.n_frames())?;
    let inv_delta = 1.0 / cfg.delta;
    let threshold = lambda / cfg.delta;

    let mut z_hat = z0.clone();
    let mut z = z0.clone();
    let mut x_hat = frame.adjoint(&z_hat)?;
    let mut x_z = x_hat.clone();
    let mut grad = vec![0.0; data.len()];
    let mut iterations = 0;

    for i in 0..stop.max_iter {
        let k = i + 1;
        data.gradient_into(&x_z, &mut grad);
        let g = frame.analyze(&grad)?;
        let mut step = z.clone();
        for (s, d) in step.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *s -= d * inv_delta;
        }
        let z_next = apply_with_lambda(&step, shrink, threshold)?;
        let x_next = frame.adjoint(&z_next)?;
        ensure_finite(&x_next, i, "synthesis iterate")?;

        let gamma = cfg.gamma.gamma(k);
        z = z_next.clone();
        for (zz, (n, p)) in z.as_mut_slice().iter_mut().zip(z_next.as_slice().iter().zip(z_hat.as_slice())) {
            *zz = n + (n - p) * gamma;
        }
        for (xz, (n, p)) in x_z.iter_mut().zip(x_next.iter().zip(&x_hat)) {
            *xz = n + gamma * (n - p);
        }
        let moved = norm_diff(&x_next, &x_hat);
        z_hat = z_next;
        x_hat = x_next;
        iterations = k;
        if moved < stop.epsilon {
            break;
        }
    }

    Ok(FistaOutput {
        coefs: z_hat,
        signal: x_hat,
        iterations,
    })
}
