//! Analysis-model declipper: Loris–Verhoeven primal-dual iteration.

use serde::{Deserialize, Serialize};

use super::{ensure_finite, norm_diff, DataFit, StopRule};
use crate::error::{check_len, Error, Result};
use crate::gabor::{CoefGrid, GaborFrame};
use crate::shrinkage::{apply_with_lambda, ShrinkageSpec};

/// User-facing step parameters; `σ` is derived from `τ` and `‖A‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LvParams {
    pub tau: f64,
    pub rho: f64,
}

impl Default for LvParams {
    fn default() -> Self {
        Self { tau: 1.5, rho: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LvConfig {
    pub tau: f64,
    pub sigma: f64,
    pub rho: f64,
}

impl LvConfig {
    /// Infers `σ = 1/(τ‖A‖²)`.
    pub fn from_params(p: LvParams, op_norm_sq: f64) -> Result<Self> {
        Self::new(p.tau, 1.0 / (p.tau * op_norm_sq), p.rho, op_norm_sq)
    }

    pub fn new(tau: f64, sigma: f64, rho: f64, op_norm_sq: f64) -> Result<Self> {
        let cfg = Self { tau, sigma, rho };
        cfg.validate(op_norm_sq)?;
        Ok(cfg)
    }

    pub fn validate(&self, op_norm_sq: f64) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 2.0) {
            return Err(Error::Config(format!("tau must lie in (0, 2), got {}", self.tau)));
        }
        if !(self.sigma > 0.0) || self.sigma * self.tau * op_norm_sq > 1.0 + 1e-12 {
            return Err(Error::Config(format!(
                "step sizes violate sigma*tau*|A|^2 <= 1 (sigma {}, tau {}, |A|^2 {op_norm_sq})",
                self.sigma, self.tau
            )));
        }
        let rho_max = 2.0 - self.tau / 2.0;
        if !(0.0..=rho_max).contains(&self.rho) {
            return Err(Error::Config(format!("rho must lie in [0, {rho_max}], got {}", self.rho)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LvOutput {
    pub signal: Vec<f64>,
    pub dual: CoefGrid,
    pub iterations: usize,
}

/// Runs the analysis solver at a fixed `lambda` from the primal/dual pair
/// `(x0, u0)`.
///
/// The dual update is the proximity operator of the conjugate of the
/// shrinkage, evaluated through the Moreau identity
/// `u = v − σ S_{λ/σ}(v/σ)`. Stops early when consecutive primal iterates
/// differ by less than `epsilon` in ℓ2.
#[allow(clippy::too_many_arguments)]
pub fn solve_lv(
    frame: &GaborFrame,
    data: &DataFit,
    shrink: &ShrinkageSpec,
    cfg: &LvConfig,
    lambda: f64,
    x0: &[f64],
    u0: &CoefGrid,
    stop: StopRule,
) -> Result<LvOutput> {
    cfg.validate(frame.op_norm_sq())?;
    check_len(frame.config().signal_len, data.len())?;
    check_len(data.len(), x0.len())?;
    check_len(frame.config().n_bins(), u0.n_bins())?;
    check_len(frame.config().n_frames(), u0.n_frames())?;
    let LvConfig { tau, sigma, rho } = *cfg;
    let inv_sigma = 1.0 / sigma;
    let threshold = lambda / sigma;

    let mut x = x0.to_vec();
    let mut u = u0.clone();
    let mut at_u = frame.adjoint(&u)?;
    let mut grad = vec![0.0; x.len()];
    let mut work = vec![0.0; x.len()];
    let mut iterations = 0;

    for i in 0..stop.max_iter {
        data.gradient_into(&x, &mut grad);
        for (w, ((&xi, &gi), &ai)) in work.iter_mut().zip(x.iter().zip(&grad).zip(&at_u)) {
            *w = xi - tau * gi - tau * ai;
        }
        let mut v = frame.analyze(&work)?;
        for (vv, uu) in v.as_mut_slice().iter_mut().zip(u.as_slice()) {
            *vv = uu + *vv * sigma;
        }
        let shrunk = apply_with_lambda(&v.scaled(inv_sigma), shrink, threshold)?;
        let mut u_half = v;
        for (uh, s) in u_half.as_mut_slice().iter_mut().zip(shrunk.as_slice()) {
            *uh -= s * sigma;
        }
        let at_u_half = frame.adjoint(&u_half)?;

        let x_prev = std::mem::take(&mut x);
        x = x_prev
            .iter()
            .zip(grad.iter().zip(&at_u_half))
            .map(|(&xi, (&gi, &ai))| xi - rho * tau * (gi + ai))
            .collect();
        ensure_finite(&x, i, "primal iterate")?;
        for (uu, uh) in u.as_mut_slice().iter_mut().zip(u_half.as_slice()) {
            *uu += (uh - *uu) * rho;
        }
        for (a, ah) in at_u.iter_mut().zip(&at_u_half) {
            *a += rho * (ah - *a);
        }
        iterations = i + 1;
        if norm_diff(&x, &x_prev) < stop.epsilon {
            break;
        }
    }

    Ok(LvOutput {
        signal: x,
        dual: u,
        iterations,
    })
}
