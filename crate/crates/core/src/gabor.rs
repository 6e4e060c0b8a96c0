//! Painless oversampled Gabor frame (STFT with a Hann window) on a cyclic
//! signal domain.
//!
//! Coefficients of real signals are conjugate symmetric in frequency, so only
//! the `⌊M/2⌋+1` non-negative bins are stored. All inner products and norms
//! on [`CoefGrid`] count interior bins twice so they agree with the full
//! `M`-channel grid; with that convention [`GaborFrame::adjoint`] is the exact
//! adjoint of [`GaborFrame::analyze`].

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Window and channel parameters, independent of the signal length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformParams {
    pub win_len: usize,
    pub hop: usize,
    pub n_channels: usize,
}

impl Default for TransformParams {
    fn default() -> Self {
        Self {
            win_len: 8192,
            hop: 2048,
            n_channels: 16384,
        }
    }
}

impl TransformParams {
    /// Frame configuration and zero padding for a signal of `len` samples:
    /// one window of zeros on each side, and the tail rounded up to a
    /// multiple of the hop.
    pub fn for_signal(&self, len: usize) -> Result<(GaborConfig, Padding)> {
        if self.hop == 0 {
            return Err(Error::Config("hop must be positive".into()));
        }
        let round = (self.hop - len % self.hop) % self.hop;
        let padding = Padding {
            before: self.win_len,
            after: self.win_len + round,
        };
        let cfg = GaborConfig::new(self.win_len, self.hop, self.n_channels, len + padding.before + padding.after)?;
        Ok((cfg, padding))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameNormalization {
    /// Window scaled so that the upper frame bound is exactly one.
    #[default]
    Tight,
    /// Plain Hann window with unit peak.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaborConfig {
    pub win_len: usize,
    pub hop: usize,
    pub n_channels: usize,
    pub signal_len: usize,
    pub normalization: FrameNormalization,
}

impl GaborConfig {
    pub fn new(win_len: usize, hop: usize, n_channels: usize, signal_len: usize) -> Result<Self> {
        let cfg = Self {
            win_len,
            hop,
            n_channels,
            signal_len,
            normalization: FrameNormalization::Tight,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_normalization(mut self, normalization: FrameNormalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0 < self.hop && self.hop <= self.win_len && self.win_len <= self.n_channels) {
            return Err(Error::Config(format!(
                "need 0 < hop ({}) <= win_len ({}) <= n_channels ({})",
                self.hop, self.win_len, self.n_channels
            )));
        }
        if !self.signal_len.is_multiple_of(self.hop) {
            return Err(Error::Config(format!(
                "hop {} does not divide signal length {}",
                self.hop, self.signal_len
            )));
        }
        if self.signal_len < self.win_len {
            return Err(Error::Config(format!(
                "signal length {} shorter than the window {}",
                self.signal_len, self.win_len
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_channels / 2 + 1
    }

    pub fn n_frames(&self) -> usize {
        self.signal_len / self.hop
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Padding {
    pub before: usize,
    pub after: usize,
}

impl Padding {
    pub fn pad(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.before];
        out.extend_from_slice(x);
        out.resize(self.before + x.len() + self.after, 0.0);
        out
    }

    pub fn crop<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.before..x.len() - self.after]
    }
}

/// Number of times a stored bin appears in the full conjugate-symmetric grid.
#[inline]
pub fn bin_multiplicity(f: usize, n_channels: usize) -> f64 {
    if f == 0 || (n_channels.is_multiple_of(2) && f == n_channels / 2) {
        1.0
    } else {
        2.0
    }
}

/// Time-frequency coefficients, frame-major: frame `t` occupies
/// `data[t * n_bins .. (t + 1) * n_bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefGrid {
    n_channels: usize,
    n_frames: usize,
    data: Vec<Complex64>,
}

impl CoefGrid {
    pub fn zeros(n_channels: usize, n_frames: usize) -> Self {
        Self {
            n_channels,
            n_frames,
            data: vec![Complex64::new(0.0, 0.0); (n_channels / 2 + 1) * n_frames],
        }
    }

    pub fn zeros_for(cfg: &GaborConfig) -> Self {
        Self::zeros(cfg.n_channels, cfg.n_frames())
    }

    pub fn from_vec(n_channels: usize, n_frames: usize, data: Vec<Complex64>) -> Result<Self> {
        check_len((n_channels / 2 + 1) * n_frames, data.len())?;
        Ok(Self {
            n_channels,
            n_frames,
            data,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_bins(&self) -> usize {
        self.n_channels / 2 + 1
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn same_shape(&self, other: &CoefGrid) -> bool {
        self.n_channels == other.n_channels && self.n_frames == other.n_frames
    }

    pub fn check_shape(&self, other: &CoefGrid) -> Result<()> {
        check_len(self.n_bins(), other.n_bins())?;
        check_len(self.n_frames, other.n_frames)
    }

    #[inline]
    pub fn get(&self, f: usize, t: usize) -> Complex64 {
        self.data[t * self.n_bins() + f]
    }

    #[inline]
    pub fn set(&mut self, f: usize, t: usize, v: Complex64) {
        let nb = self.n_bins();
        self.data[t * nb + f] = v;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        let nb = self.n_bins();
        &self.data[t * nb..(t + 1) * nb]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Real part of the full-grid inner product `⟨self, other⟩`.
    pub fn inner_re(&self, other: &CoefGrid) -> f64 {
        let nb = self.n_bins();
        self.data
            .iter()
            .zip(&other.data)
            .enumerate()
            .map(|(i, (a, b))| bin_multiplicity(i % nb, self.n_channels) * (a.re * b.re + a.im * b.im))
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner_re(self)
    }

    /// Full-grid weighted ℓ1 norm `Σ w |z|`.
    pub fn weighted_l1(&self, weights: Option<&[f64]>) -> f64 {
        let nb = self.n_bins();
        self.data
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let w = weights.map_or(1.0, |w| w[i]);
                bin_multiplicity(i % nb, self.n_channels) * w * c.norm()
            })
            .sum()
    }

    pub fn scaled(&self, a: f64) -> CoefGrid {
        CoefGrid {
            n_channels: self.n_channels,
            n_frames: self.n_frames,
            data: self.data.iter().map(|c| c * a).collect(),
        }
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| 0.5 * (1.0 - (2.0 * PI * j as f64 / n as f64).cos()))
        .collect()
}

/// Analysis/synthesis pair for one [`GaborConfig`].
pub struct GaborFrame {
    cfg: GaborConfig,
    window: Vec<f64>,
    dual: Vec<f64>,
    /// Diagonal of the frame operator, periodic with period `hop`.
    diag: Vec<f64>,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
}

impl std::fmt::Debug for GaborFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaborFrame").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

fn frame_diagonal(window: &[f64], hop: usize, n_channels: usize) -> Vec<f64> {
    let mut d = vec![0.0; hop];
    for (j, g) in window.iter().enumerate() {
        d[j % hop] += g * g;
    }
    d.iter_mut().for_each(|v| *v *= n_channels as f64);
    d
}

impl GaborFrame {
    pub fn new(cfg: GaborConfig) -> Result<Self> {
        let mut window = hann_periodic(cfg.win_len);
        if cfg.normalization == FrameNormalization::Tight {
            let peak = frame_diagonal(&window, cfg.hop, cfg.n_channels)
                .into_iter()
                .fold(0.0, f64::max);
            let s = 1.0 / peak.sqrt();
            window.iter_mut().for_each(|g| *g *= s);
        }
        Self::with_window(cfg, window)
    }

    /// Frame with an arbitrary window of length `cfg.win_len`.
    pub fn with_window(cfg: GaborConfig, window: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        check_len(cfg.win_len, window.len())?;
        let diag = frame_diagonal(&window, cfg.hop, cfg.n_channels);
        if diag.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Config("window does not cover every sample; frame operator is singular".into()));
        }
        let dual = window
            .iter()
            .enumerate()
            .map(|(j, g)| g / diag[j % cfg.hop])
            .collect();
        let mut planner = RealFftPlanner::<f64>::new();
        let r2c = planner.plan_fft_forward(cfg.n_channels);
        let c2r = planner.plan_fft_inverse(cfg.n_channels);
        Ok(Self {
            cfg,
            window,
            dual,
            diag,
            r2c,
            c2r,
        })
    }

    pub fn config(&self) -> &GaborConfig {
        &self.cfg
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn dual_window(&self) -> &[f64] {
        &self.dual
    }

    /// Squared operator norm `‖A‖²` (upper frame bound): the maximum of the
    /// diagonal frame operator.
    pub fn op_norm_sq(&self) -> f64 {
        self.diag.iter().copied().fold(0.0, f64::max)
    }

    pub fn analyze(&self, x: &[f64]) -> Result<CoefGrid> {
        check_len(self.cfg.signal_len, x.len())?;
        let cfg = &self.cfg;
        let (m, l, nb) = (cfg.n_channels, cfg.signal_len, cfg.n_bins());
        let mut out = CoefGrid::zeros_for(cfg);
        out.data.par_chunks_mut(nb).enumerate().for_each_init(
            || (vec![0.0; m], self.r2c.make_scratch_vec()),
            |(buf, scratch), (t, spec)| {
                let start = t * cfg.hop;
                for (j, g) in self.window.iter().enumerate() {
                    buf[j] = x[(start + j) % l] * g;
                }
                buf[cfg.win_len..].iter_mut().for_each(|v| *v = 0.0);
                self.r2c
                    .process_with_scratch(buf, spec, scratch)
                    .expect("forward fft buffer sizes");
            },
        );
        Ok(out)
    }

    fn overlap_add(&self, z: &CoefGrid, window: &[f64]) -> Result<Vec<f64>> {
        let cfg = &self.cfg;
        check_len(cfg.n_bins(), z.n_bins())?;
        check_len(cfg.n_frames(), z.n_frames())?;
        let (m, l, w) = (cfg.n_channels, cfg.signal_len, cfg.win_len);
        let last = if m % 2 == 0 { Some(m / 2) } else { None };
        let segments: Vec<Vec<f64>> = z
            .data
            .par_chunks(cfg.n_bins())
            .map_init(
                || (vec![Complex64::new(0.0, 0.0); cfg.n_bins()], vec![0.0; m], self.c2r.make_scratch_vec()),
                |(spec, buf, scratch), frame| {
                    spec.copy_from_slice(frame);
                    // conjugate symmetry forces the self-paired bins to be real
                    spec[0].im = 0.0;
                    if let Some(k) = last {
                        spec[k].im = 0.0;
                    }
                    self.c2r
                        .process_with_scratch(spec, buf, scratch)
                        .expect("inverse fft buffer sizes");
                    buf[..w].iter().zip(window).map(|(v, g)| v * g).collect()
                },
            )
            .collect();
        let mut out = vec![0.0; l];
        for (t, seg) in segments.iter().enumerate() {
            let start = t * cfg.hop;
            for (j, v) in seg.iter().enumerate() {
                out[(start + j) % l] += v;
            }
        }
        Ok(out)
    }

    /// Adjoint `A*` of [`analyze`](Self::analyze) with respect to the
    /// full-grid inner product.
    pub fn adjoint(&self, z: &CoefGrid) -> Result<Vec<f64>> {
        self.overlap_add(z, &self.window)
    }

    /// Synthesis with the canonical dual window; inverts `analyze` exactly.
    /// For the tight normalization this coincides with [`adjoint`](Self::adjoint).
    pub fn synthesize(&self, z: &CoefGrid) -> Result<Vec<f64>> {
        self.overlap_add(z, &self.dual)
    }

    /// Estimates `‖A‖²` by power iteration on `A*A`.
    pub fn power_iteration_norm_sq(&self, rel_tol: f64, max_iter: usize) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut v: Vec<f64> = (0..self.cfg.signal_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut est = 0.0;
        for _ in 0..max_iter {
            let norm = v.iter().map(|s| s * s).sum::<f64>().sqrt();
            v.iter_mut().for_each(|s| *s /= norm);
            let w = self.adjoint(&self.analyze(&v)?)?;
            let next: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            if (next - est).abs() <= rel_tol * next.abs() {
                return Ok(next);
            }
            est = next;
            v = w;
        }
        Err(Error::Numerical(format!("power iteration did not converge in {max_iter} iterations")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GaborConfig {
        GaborConfig::new(32, 8, 64, 256).unwrap()
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let n: f64 = b.iter().map(|x| x * x).sum();
        (d / n).sqrt()
    }

    #[test]
    fn config_invariants() {
        assert!(GaborConfig::new(32, 0, 64, 256).is_err());
        assert!(GaborConfig::new(32, 40, 64, 240).is_err());
        assert!(GaborConfig::new(64, 8, 32, 256).is_err());
        assert!(GaborConfig::new(32, 8, 64, 250).is_err());
        let c = small();
        assert_eq!((c.n_bins(), c.n_frames()), (33, 32));
    }

    #[test]
    fn padding_layout() {
        let p = TransformParams {
            win_len: 32,
            hop: 8,
            n_channels: 64,
        };
        let (cfg, pad) = p.for_signal(100).unwrap();
        assert_eq!(cfg.signal_len % 8, 0);
        assert_eq!(pad.before, 32);
        assert_eq!(cfg.signal_len, 100 + 64 + 4);
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let padded = pad.pad(&x);
        assert_eq!(pad.crop(&padded), &x[..]);
    }

    #[test]
    fn zero_and_linearity() {
        let f = GaborFrame::new(small()).unwrap();
        let z = f.analyze(&vec![0.0; 256]).unwrap();
        assert!(z.as_slice().iter().all(|c| c.norm() == 0.0));
        assert!(f.synthesize(&z).unwrap().iter().all(|&v| v == 0.0));
        let x = noise(256, 1);
        let a = f.analyze(&x).unwrap();
        let b = f.analyze(&x.iter().map(|v| -2.5 * v).collect::<Vec<_>>()).unwrap();
        for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((p * -2.5 - q).norm() < 1e-12);
        }
    }

    #[test]
    fn tone_peaks_at_its_bin_and_frame() {
        let cfg = small();
        let f = GaborFrame::new(cfg).unwrap();
        // a windowed tone at bin 10 occupying exactly frame 5
        let mut x = vec![0.0; 256];
        for j in 0..32 {
            x[40 + j] = (2.0 * PI * 10.0 * j as f64 / 64.0).cos() * hann_periodic(32)[j];
        }
        let z = f.analyze(&x).unwrap();
        let mut best = (0.0, 0, 0);
        for t in 0..z.n_frames() {
            for b in 0..z.n_bins() {
                let m = z.get(b, t).norm();
                if m > best.0 {
                    best = (m, b, t);
                }
            }
        }
        assert_eq!((best.1, best.2), (10, 5));
    }

    #[test]
    fn perfect_reconstruction_and_tightness() {
        let f = GaborFrame::new(small()).unwrap();
        assert!((f.op_norm_sq() - 1.0).abs() < 1e-12);
        let x = noise(256, 2);
        let y = f.synthesize(&f.analyze(&x).unwrap()).unwrap();
        assert!(rel_err(&y, &x) < 1e-12);
        let y2 = f.adjoint(&f.analyze(&x).unwrap()).unwrap();
        assert!(rel_err(&y2, &x) < 1e-12);
    }

    #[test]
    fn adjoint_identity_on_random_grids() {
        let f = GaborFrame::new(small()).unwrap();
        let x = noise(256, 3);
        let raw = noise(2 * 33 * 32, 4);
        let z = CoefGrid::from_vec(
            64,
            32,
            raw.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect(),
        )
        .unwrap();
        let lhs = f.analyze(&x).unwrap().inner_re(&z);
        let rhs: f64 = x.iter().zip(f.adjoint(&z).unwrap()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn raw_norm_and_window_scaling() {
        let cfg = small().with_normalization(FrameNormalization::Raw);
        let f = GaborFrame::new(cfg).unwrap();
        // 75% overlap Hann: M * 3/8 * win/hop
        assert!((f.op_norm_sq() - 64.0 * 1.5).abs() < 1e-9);
        let doubled: Vec<f64> = f.window().iter().map(|g| 2.0 * g).collect();
        let g = GaborFrame::with_window(cfg, doubled).unwrap();
        assert!((g.op_norm_sq() - 4.0 * f.op_norm_sq()).abs() < 1e-9);
    }

    #[test]
    fn power_iteration_agrees_with_diagonal() {
        // hop not dividing the window: non-constant frame diagonal
        let cfg = GaborConfig::new(30, 12, 64, 240).unwrap().with_normalization(FrameNormalization::Raw);
        let f = GaborFrame::new(cfg).unwrap();
        let pi = f.power_iteration_norm_sq(1e-9, 10_000).unwrap();
        let an = f.op_norm_sq();
        assert!((pi - an).abs() <= 1e-6 * an, "{pi} vs {an}");
        let x = noise(240, 5);
        let ax = f.analyze(&x).unwrap().norm_sq();
        assert!(ax <= an * x.iter().map(|v| v * v).sum::<f64>() * (1.0 + 1e-12));
    }

    #[test]
    fn real_output_for_real_input() {
        // conjugate-symmetric grid synthesizes to the original real signal;
        // imaginary junk in DC/Nyquist is ignored
        let f = GaborFrame::new(small()).unwrap();
        let x = noise(256, 6);
        let mut z = f.analyze(&x).unwrap();
        for t in 0..z.n_frames() {
            assert!(z.get(0, t).im.abs() < 1e-12);
            assert!(z.get(32, t).im.abs() < 1e-12);
            let dc = z.get(0, t);
            z.set(0, t, Complex64::new(dc.re, 0.3));
        }
        assert!(rel_err(&f.synthesize(&z).unwrap(), &x) < 1e-12);
    }
}
