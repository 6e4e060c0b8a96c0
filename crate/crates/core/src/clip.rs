//! Time-domain signals, the hard-clipping degradation, consistency masks and
//! waveform metrics.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Mono time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidSignal("signal must contain at least one sample".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidSignal("sample rate must be positive".into()));
        }
        if let Some(n) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidSignal(format!("non-finite sample at index {n}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

/// Clipping threshold θc, strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ClipThreshold(f64);

impl ClipThreshold {
    pub fn new(theta: f64) -> Result<Self> {
        if theta.is_finite() && theta > 0.0 {
            Ok(Self(theta))
        } else {
            Err(Error::Config(format!("clipping threshold must be positive and finite, got {theta}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleClass {
    Reliable,
    High,
    Low,
}

/// Partition of the sample indices into reliable, clipped-high and
/// clipped-low sets. Indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleMasks {
    labels: Vec<SampleClass>,
}

impl SampleMasks {
    /// Every sample reliable.
    pub fn all_reliable(len: usize) -> Self {
        Self {
            labels: vec![SampleClass::Reliable; len],
        }
    }

    pub fn from_labels(labels: Vec<SampleClass>) -> Self {
        Self { labels }
    }

    /// Builds masks from explicit high and low index sets; every remaining
    /// index is reliable.
    pub fn from_sets(total_len: usize, high: &[usize], low: &[usize]) -> Result<Self> {
        let mut labels = vec![SampleClass::Reliable; total_len];
        for (set, class) in [(high, SampleClass::High), (low, SampleClass::Low)] {
            for &n in set {
                if n >= total_len {
                    return Err(Error::Config(format!("mask index {n} out of range 0..{total_len}")));
                }
                if labels[n] != SampleClass::Reliable {
                    return Err(Error::Config(format!("mask index {n} appears in more than one set")));
                }
                labels[n] = class;
            }
        }
        Ok(Self { labels })
    }

    pub fn total_len(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[SampleClass] {
        &self.labels
    }

    pub fn class(&self, n: usize) -> SampleClass {
        self.labels[n]
    }

    fn indices(&self, class: SampleClass) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == class)
            .map(|(n, _)| n)
            .collect()
    }

    pub fn reliable(&self) -> Vec<usize> {
        self.indices(SampleClass::Reliable)
    }

    pub fn high(&self) -> Vec<usize> {
        self.indices(SampleClass::High)
    }

    pub fn low(&self) -> Vec<usize> {
        self.indices(SampleClass::Low)
    }

    /// Indices in the union of the high and low sets.
    pub fn clipped(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != SampleClass::Reliable)
            .map(|(n, _)| n)
            .collect()
    }

    pub fn n_clipped(&self) -> usize {
        self.labels.iter().filter(|c| **c != SampleClass::Reliable).count()
    }

    /// Extends the masks with `before` and `after` reliable samples.
    pub fn padded(&self, before: usize, after: usize) -> Self {
        let mut labels = vec![SampleClass::Reliable; before];
        labels.extend_from_slice(&self.labels);
        labels.resize(before + self.labels.len() + after, SampleClass::Reliable);
        Self { labels }
    }
}

/// Saturates every sample whose magnitude reaches θc.
pub fn hard_clip(x: &Signal, theta: ClipThreshold) -> Signal {
    let t = theta.value();
    let samples = x
        .samples()
        .iter()
        .map(|&s| if s.abs() < t { s } else { t * s.signum() })
        .collect();
    Signal {
        samples,
        sample_rate: x.sample_rate,
    }
}

/// `h(u) = min(u, 0)`.
#[inline]
pub fn hinge_scalar(u: f64) -> f64 {
    u.min(0.0)
}

pub fn hinge(u: &[f64]) -> Vec<f64> {
    u.iter().map(|&v| hinge_scalar(v)).collect()
}

fn norm2(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|s| s * s).sum::<f64>().sqrt()
}

fn sdr_slices(u: &[f64], v: &[f64]) -> f64 {
    let num = norm2(u.iter().copied());
    let den = norm2(u.iter().zip(v).map(|(a, b)| a - b));
    if den == 0.0 {
        return f64::INFINITY;
    }
    20.0 * (num / den).log10()
}

/// Signal-to-distortion ratio in dB; identical inputs give `+inf`.
pub fn sdr(u: &Signal, v: &Signal) -> Result<f64> {
    check_len(u.len(), v.len())?;
    Ok(sdr_slices(u.samples(), v.samples()))
}

/// Same as [`sdr`] on raw sample slices.
pub fn sdr_raw(u: &[f64], v: &[f64]) -> Result<f64> {
    check_len(u.len(), v.len())?;
    Ok(sdr_slices(u, v))
}

/// SDR improvement of `x_hat` over `y`, measured on clipped samples only.
pub fn delta_sdr_clipped(x: &Signal, y: &Signal, x_hat: &Signal, masks: &SampleMasks) -> Result<f64> {
    check_len(x.len(), y.len())?;
    check_len(x.len(), x_hat.len())?;
    check_len(x.len(), masks.total_len())?;
    let idx = masks.clipped();
    if idx.is_empty() {
        return Err(Error::UndefinedMetric("no clipped samples".into()));
    }
    let pick = |s: &Signal| idx.iter().map(|&n| s.samples()[n]).collect::<Vec<_>>();
    let (xc, yc, hc) = (pick(x), pick(y), pick(x_hat));
    let restored = sdr_slices(&xc, &hc);
    let degraded = sdr_slices(&xc, &yc);
    if restored == degraded {
        // covers inf - inf when the estimate is as exact as the input
        return Ok(0.0);
    }
    Ok(restored - degraded)
}

/// Default detection tolerance relative to θc.
pub const DEFAULT_DETECT_REL_TOL: f64 = 1e-10;

/// Classifies samples of a clipped signal against θc with tolerance
/// `detect_tol` (absolute amplitude).
pub fn build_masks_with_tol(y: &Signal, theta: ClipThreshold, detect_tol: f64) -> SampleMasks {
    let t = theta.value();
    let labels = y
        .samples()
        .iter()
        .map(|&s| {
            if s >= t - detect_tol {
                SampleClass::High
            } else if s <= -t + detect_tol {
                SampleClass::Low
            } else {
                SampleClass::Reliable
            }
        })
        .collect();
    SampleMasks { labels }
}

pub fn build_masks(y: &Signal, theta: ClipThreshold) -> SampleMasks {
    build_masks_with_tol(y, theta, DEFAULT_DETECT_REL_TOL * theta.value())
}

/// Output equals `y` on reliable samples and `x_hat` elsewhere.
pub fn replace_reliable(x_hat: &Signal, y: &Signal, masks: &SampleMasks) -> Result<Signal> {
    check_len(y.len(), x_hat.len())?;
    check_len(y.len(), masks.total_len())?;
    let samples = x_hat
        .samples()
        .iter()
        .zip(y.samples())
        .zip(masks.labels())
        .map(|((&h, &o), c)| if *c == SampleClass::Reliable { o } else { h })
        .collect();
    Ok(Signal {
        samples,
        sample_rate: x_hat.sample_rate,
    })
}

pub const THRESHOLD_MAX_ITER: usize = 200;
pub const DEFAULT_SDR_TOL_DB: f64 = 0.01;

/// Finds θc such that clipping `x` at θc yields the requested input SDR,
/// by bisection on (0, max|x|).
pub fn threshold_for_input_sdr(x: &Signal, target_sdr_db: f64, tol_db: f64) -> Result<ClipThreshold> {
    if !target_sdr_db.is_finite() {
        return Err(Error::Config(format!("target SDR must be finite, got {target_sdr_db}")));
    }
    let peak = x.peak();
    if peak == 0.0 {
        return Err(Error::InvalidSignal("cannot clip an all-zero signal".into()));
    }
    // θ → 0⁺ drives the clipped signal to zero, i.e. SDR → 0 dB; θ → peak
    // leaves the signal intact.
    if target_sdr_db <= 0.0 {
        return Err(Error::UnreachableTarget {
            target_db: target_sdr_db,
            min_db: 0.0,
            max_db: f64::INFINITY,
        });
    }
    let eval = |theta: f64| {
        let t = ClipThreshold(theta);
        let y = hard_clip(x, t);
        sdr_slices(x.samples(), y.samples())
    };
    let (mut lo, mut hi) = (0.0, peak);
    let mut best = (f64::INFINITY, peak);
    for _ in 0..THRESHOLD_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= 0.0 {
            break;
        }
        let s = eval(mid);
        let err = (s - target_sdr_db).abs();
        if err < best.0 {
            best = (err, mid);
        }
        if err <= tol_db {
            return Ok(ClipThreshold(mid));
        }
        if s < target_sdr_db {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.0 <= tol_db {
        Ok(ClipThreshold(best.1))
    } else {
        Err(Error::Numerical(format!(
            "bisection for {target_sdr_db} dB input SDR stalled {} dB away",
            best.0
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(v: &[f64]) -> Signal {
        Signal::new(v.to_vec(), 44_100).unwrap()
    }

    fn theta(t: f64) -> ClipThreshold {
        ClipThreshold::new(t).unwrap()
    }

    fn sine(n: usize) -> Signal {
        let v = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 44_100.0).sin())
            .collect();
        Signal::new(v, 44_100).unwrap()
    }

    #[test]
    fn rejects_bad_signals() {
        assert!(Signal::new(vec![], 8000).is_err());
        assert!(Signal::new(vec![0.1, f64::NAN], 8000).is_err());
        assert!(Signal::new(vec![f64::INFINITY], 8000).is_err());
        assert!(ClipThreshold::new(0.0).is_err());
        assert!(ClipThreshold::new(-1.0).is_err());
    }

    #[test]
    fn hard_clip_branches() {
        let y = hard_clip(&sig(&[0.3, -0.9, 0.5, -0.5]), theta(0.5));
        assert_eq!(y.samples(), &[0.3, -0.5, 0.5, -0.5]);
    }

    #[test]
    fn masks_exact_threshold() {
        let m = build_masks_with_tol(&sig(&[0.2, 0.5, -0.5]), theta(0.5), 0.0);
        assert_eq!(m.reliable(), vec![0]);
        assert_eq!(m.high(), vec![1]);
        assert_eq!(m.low(), vec![2]);
    }

    #[test]
    fn masks_nothing_clipped() {
        let m = build_masks(&sig(&[0.1, -0.2, 0.3]), theta(0.5));
        assert!(m.high().is_empty() && m.low().is_empty());
        assert_eq!(m.reliable().len(), 3);
    }

    #[test]
    fn masks_identify_saturation_of_generic_signal() {
        let x = sine(2000);
        let t = theta(0.6123);
        let y = hard_clip(&x, t);
        let m = build_masks(&y, t);
        for (n, &s) in x.samples().iter().enumerate() {
            let expect = if s >= t.value() {
                SampleClass::High
            } else if s <= -t.value() {
                SampleClass::Low
            } else {
                SampleClass::Reliable
            };
            assert_eq!(m.class(n), expect, "sample {n}");
        }
    }

    #[test]
    fn from_sets_validates() {
        assert!(SampleMasks::from_sets(4, &[1], &[1]).is_err());
        assert!(SampleMasks::from_sets(4, &[4], &[]).is_err());
        let m = SampleMasks::from_sets(4, &[1], &[3]).unwrap();
        assert_eq!(m.reliable(), vec![0, 2]);
    }

    #[test]
    fn hinge_values() {
        assert_eq!(hinge(&[2.0, -3.0, 0.0]), vec![0.0, -3.0, 0.0]);
    }

    #[test]
    fn sdr_closed_forms() {
        let u = sig(&[0.3, -0.4, 1.2, 0.05]);
        let half = sig(&u.samples().iter().map(|s| s / 2.0).collect::<Vec<_>>());
        let zero = sig(&[0.0; 4]);
        assert!((sdr(&u, &half).unwrap() - 20.0 * 2f64.log10()).abs() < 1e-12);
        assert!(sdr(&u, &zero).unwrap().abs() < 1e-12);
        assert_eq!(sdr(&u, &u).unwrap(), f64::INFINITY);
        assert!(matches!(sdr(&u, &sig(&[0.0; 3])), Err(Error::Dimension { .. })));
    }

    #[test]
    fn delta_sdr_edge_cases() {
        let x = sig(&[0.1, 0.9, -0.8, 0.2, 0.7]);
        let t = theta(0.5);
        let y = hard_clip(&x, t);
        let m = build_masks(&y, t);
        assert_eq!(delta_sdr_clipped(&x, &y, &y, &m).unwrap(), 0.0);
        assert_eq!(delta_sdr_clipped(&x, &y, &x, &m).unwrap(), f64::INFINITY);
        let none = SampleMasks::all_reliable(5);
        assert!(matches!(
            delta_sdr_clipped(&x, &y, &x, &none),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn delta_sdr_matches_restricted_hand_computation() {
        let x = sig(&[0.1, 0.9, -0.8, 0.2, 0.7, -0.6]);
        let t = theta(0.5);
        let y = hard_clip(&x, t);
        let xh = sig(&[0.0, 0.8, -0.7, 0.3, 0.55, -0.9]);
        let m = build_masks(&y, t);
        // clipped indices 1, 2, 4, 5
        let xc = [0.9, -0.8, 0.7, -0.6];
        let yc = [0.5, -0.5, 0.5, -0.5];
        let hc = [0.8, -0.7, 0.55, -0.9];
        let f = |u: &[f64], v: &[f64]| {
            let a: f64 = u.iter().map(|s| s * s).sum::<f64>().sqrt();
            let b: f64 = u.iter().zip(v).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            20.0 * (a / b).log10()
        };
        let expect = f(&xc, &hc) - f(&xc, &yc);
        assert!((delta_sdr_clipped(&x, &y, &xh, &m).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn replace_reliable_cases() {
        let y = sig(&[0.1, 0.5, -0.5, 0.2]);
        let xh = sig(&[0.0, 0.7, -0.9, 0.25]);
        assert_eq!(replace_reliable(&xh, &y, &SampleMasks::all_reliable(4)).unwrap(), y);
        let none = SampleMasks::from_sets(4, &[0, 1, 3], &[2]).unwrap();
        assert_eq!(replace_reliable(&xh, &y, &none).unwrap(), xh);
        let m = build_masks(&y, theta(0.5));
        let r = replace_reliable(&xh, &y, &m).unwrap();
        assert_eq!(r.samples(), &[0.1, 0.7, -0.9, 0.2]);
        assert!(replace_reliable(&sig(&[0.0]), &y, &m).is_err());
    }

    #[test]
    fn threshold_hits_target_on_sinusoid() {
        let x = sine(4096);
        let t = threshold_for_input_sdr(&x, 7.0, 0.01).unwrap();
        let s = sdr(&x, &hard_clip(&x, t)).unwrap();
        assert!((s - 7.0).abs() <= 0.01, "{s}");
    }

    #[test]
    fn threshold_above_peak_is_lossless() {
        let x = sine(512);
        let y = hard_clip(&x, theta(x.peak() + 0.01));
        assert_eq!(sdr(&x, &y).unwrap(), f64::INFINITY);
    }

    #[test]
    fn threshold_unreachable_target() {
        let x = sine(4096);
        // the infimum of the achievable range, evaluated numerically
        let tiny = sdr(&x, &hard_clip(&x, theta(1e-9))).unwrap();
        assert!((0.0..1e-6).contains(&tiny));
        assert!(matches!(
            threshold_for_input_sdr(&x, -10.0, 0.01),
            Err(Error::UnreachableTarget { .. })
        ));
    }

    proptest! {
        #[test]
        fn clip_idempotent_and_contracting(v in prop::collection::vec(-2.0f64..2.0, 1..64), t in 0.05f64..1.5) {
            let x = sig(&v);
            let th = theta(t);
            let y = hard_clip(&x, th);
            prop_assert_eq!(hard_clip(&y, th), y.clone());
            for (a, b) in x.samples().iter().zip(y.samples()) {
                prop_assert!(b.abs() <= a.abs());
                prop_assert!(b.abs() <= t);
            }
        }

        #[test]
        fn sdr_nondecreasing_in_theta(v in prop::collection::vec(-1.0f64..1.0, 4..64)) {
            let x = sig(&v);
            prop_assume!(x.peak() > 0.0);
            let mut prev = f64::NEG_INFINITY;
            for k in 1..=40 {
                let t = x.peak() * k as f64 / 40.0;
                let s = sdr(&x, &hard_clip(&x, theta(t))).unwrap();
                prop_assert!(s >= prev - 1e-9);
                prev = s;
            }
        }

        #[test]
        fn delta_sdr_of_identity_is_zero(v in prop::collection::vec(-1.0f64..1.0, 4..64), t in 0.1f64..0.9) {
            let x = sig(&v);
            let y = hard_clip(&x, theta(t));
            let m = build_masks(&y, theta(t));
            prop_assume!(m.n_clipped() > 0);
            prop_assert_eq!(delta_sdr_clipped(&x, &y, &y, &m).unwrap(), 0.0);
        }

        #[test]
        fn hinge_properties(v in prop::collection::vec(-5.0f64..5.0, 0..32)) {
            for (u, h) in v.iter().zip(hinge(&v)) {
                prop_assert!(h <= 0.0);
                if *u < 0.0 { prop_assert_eq!(h, *u); }
            }
        }
    }
}
