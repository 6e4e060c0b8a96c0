//! Coefficient shrinkage operators: LASSO (L), windowed group LASSO (WGL),
//! empirical Wiener (EW) and persistent empirical Wiener (PEW), all with
//! optional per-coefficient weights.
//!
//! WGL and PEW decide on a coefficient from the energy of a rectangular
//! time-frequency neighborhood centered on it. Positions outside the stored
//! plane contribute nothing; the frequency window does not wrap around DC or
//! Nyquist.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::gabor::{bin_multiplicity, CoefGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShrinkageKind {
    L,
    Wgl,
    Ew,
    Pew,
}

impl ShrinkageKind {
    pub const ALL: [ShrinkageKind; 4] = [Self::L, Self::Wgl, Self::Ew, Self::Pew];

    pub fn uses_neighborhood(self) -> bool {
        matches!(self, Self::Wgl | Self::Pew)
    }

    /// L and WGL are proximity operators of a penalty; EW and PEW are not.
    pub fn has_penalty(self) -> bool {
        matches!(self, Self::L | Self::Wgl)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::L => "l",
            Self::Wgl => "wgl",
            Self::Ew => "ew",
            Self::Pew => "pew",
        }
    }
}

impl fmt::Display for ShrinkageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShrinkageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l" | "lasso" => Ok(Self::L),
            "wgl" => Ok(Self::Wgl),
            "ew" => Ok(Self::Ew),
            "pew" => Ok(Self::Pew),
            _ => Err(Error::Config(format!("unknown shrinkage '{s}' (expected l, wgl, ew, pew)"))),
        }
    }
}

/// Odd-sized rectangular neighborhood, in bins × frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub n_freq: usize,
    pub n_time: usize,
}

impl Default for Neighborhood {
    fn default() -> Self {
        Self { n_freq: 3, n_time: 7 }
    }
}

impl Neighborhood {
    pub const SINGLE: Neighborhood = Neighborhood { n_freq: 1, n_time: 1 };

    pub fn new(n_freq: usize, n_time: usize) -> Result<Self> {
        let n = Self { n_freq, n_time };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_freq % 2 == 1 && self.n_time % 2 == 1 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "neighborhood dimensions must be odd and positive, got {}x{}",
                self.n_freq, self.n_time
            )))
        }
    }
}

/// Positive per-coefficient weights, laid out like [`CoefGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGrid {
    n_bins: usize,
    n_frames: usize,
    data: Vec<f64>,
}

impl WeightGrid {
    pub fn uniform(n_bins: usize, n_frames: usize) -> Self {
        Self {
            n_bins,
            n_frames,
            data: vec![1.0; n_bins * n_frames],
        }
    }

    /// Weights that depend on frequency only.
    pub fn per_bin(profile: &[f64], n_frames: usize) -> Result<Self> {
        if let Some(w) = profile.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::Config(format!("weights must be positive and finite, got {w}")));
        }
        let mut data = Vec::with_capacity(profile.len() * n_frames);
        for _ in 0..n_frames {
            data.extend_from_slice(profile);
        }
        Ok(Self {
            n_bins: profile.len(),
            n_frames,
            data,
        })
    }

    /// Quadratically increasing weights `(f / F)²`, `f = 1..=F`, where
    /// `F = ⌊M/2⌋+1` is the number of stored bins; the top bin has weight 1.
    pub fn parabolic(n_channels: usize, n_frames: usize) -> Self {
        let nb = n_channels / 2 + 1;
        let profile: Vec<f64> = (1..=nb).map(|f| (f as f64 / nb as f64).powi(2)).collect();
        Self::per_bin(&profile, n_frames).expect("parabolic weights are positive")
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, f: usize, t: usize) -> f64 {
        self.data[t * self.n_bins + f]
    }

    /// Weights of the first frame.
    pub fn bin_profile(&self) -> &[f64] {
        &self.data[..self.n_bins]
    }
}

/// How the weight enters EW and PEW next to `λ²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightExponent {
    /// `λ²·w`: the form that works better in practice.
    #[default]
    Linear,
    /// `λ²·w²`: makes the EW zeroing threshold exactly `λ·w`.
    Squared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageSpec {
    pub kind: ShrinkageKind,
    pub lambda: f64,
    pub nbhd: Neighborhood,
    /// `None` means all weights equal one.
    pub weights: Option<Arc<WeightGrid>>,
    pub weight_exponent: WeightExponent,
}

impl ShrinkageSpec {
    pub fn new(kind: ShrinkageKind, lambda: f64) -> Self {
        Self {
            kind,
            lambda,
            nbhd: Neighborhood::default(),
            weights: None,
            weight_exponent: WeightExponent::Linear,
        }
    }

    pub fn with_neighborhood(mut self, nbhd: Neighborhood) -> Self {
        self.nbhd = nbhd;
        self
    }

    pub fn with_weights(mut self, weights: Option<Arc<WeightGrid>>) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_weight_exponent(mut self, e: WeightExponent) -> Self {
        self.weight_exponent = e;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        self.nbhd.validate()
    }

    /// Neighborhood actually used by the operator.
    pub fn effective_neighborhood(&self) -> Neighborhood {
        if self.kind.uses_neighborhood() {
            self.nbhd
        } else {
            Neighborhood::SINGLE
        }
    }

    fn check_weights(&self, z: &CoefGrid) -> Result<()> {
        if let Some(w) = &self.weights {
            check_len(z.n_bins(), w.n_bins())?;
            check_len(z.n_frames(), w.n_frames())?;
        }
        Ok(())
    }
}

/// Energy `Σ |z|²` of the neighborhood around every coefficient, computed as
/// two separable window sums.
pub fn neighborhood_energy(z: &CoefGrid, nbhd: Neighborhood) -> Vec<f64> {
    let (nb, nt) = (z.n_bins(), z.n_frames());
    let (hf, ht) = (nbhd.n_freq / 2, nbhd.n_time / 2);
    let energy: Vec<f64> = z.as_slice().iter().map(|c| c.norm_sqr()).collect();

    let mut along_freq = vec![0.0; nb * nt];
    along_freq
        .par_chunks_mut(nb)
        .zip(energy.par_chunks(nb))
        .for_each(|(out, e)| {
            for (f, o) in out.iter_mut().enumerate() {
                let lo = f.saturating_sub(hf);
                let hi = (f + hf).min(nb - 1);
                *o = e[lo..=hi].iter().fold(0.0, |a, v| a + v);
            }
        });

    let mut out = vec![0.0; nb * nt];
    out.par_chunks_mut(nb).enumerate().for_each(|(t, row)| {
        let lo = t.saturating_sub(ht);
        let hi = (t + ht).min(nt - 1);
        for (f, o) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for tt in lo..=hi {
                s += along_freq[tt * nb + f];
            }
            *o = s;
        }
    });
    out
}

#[inline]
fn gain(kind: ShrinkageKind, lambda: f64, w: f64, exponent: WeightExponent, mag_sq: f64, nbhd_energy: f64) -> f64 {
    let ratio = match kind {
        ShrinkageKind::L => {
            if mag_sq == 0.0 {
                return 0.0;
            }
            lambda * w / mag_sq.sqrt()
        }
        ShrinkageKind::Wgl => {
            if nbhd_energy == 0.0 {
                return 0.0;
            }
            lambda * w / nbhd_energy.sqrt()
        }
        ShrinkageKind::Ew | ShrinkageKind::Pew => {
            let e = if kind == ShrinkageKind::Ew { mag_sq } else { nbhd_energy };
            if e == 0.0 {
                return 0.0;
            }
            let wp = match exponent {
                WeightExponent::Linear => w,
                WeightExponent::Squared => w * w,
            };
            lambda * lambda * wp / e
        }
    };
    (1.0 - ratio).max(0.0)
}

/// Applies the operator with threshold `lambda` in place of `spec.lambda`.
pub fn apply_with_lambda(z: &CoefGrid, spec: &ShrinkageSpec, lambda: f64) -> Result<CoefGrid> {
    spec.check_weights(z)?;
    let energy = if spec.kind.uses_neighborhood() {
        Some(neighborhood_energy(z, spec.nbhd))
    } else {
        None
    };
    let weights = spec.weights.as_deref().map(|w| w.as_slice());
    let mut out = z.clone();
    out.as_mut_slice()
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, c)| {
            let w = weights.map_or(1.0, |w| w[i]);
            let e = energy.as_ref().map_or(0.0, |e| e[i]);
            *c *= gain(spec.kind, lambda, w, spec.weight_exponent, c.norm_sqr(), e);
        });
    Ok(out)
}

pub fn apply_shrinkage(z: &CoefGrid, spec: &ShrinkageSpec) -> Result<CoefGrid> {
    apply_with_lambda(z, spec, spec.lambda)
}

/// Value of the penalty `λ·R(z)` whose proximity operator the shrinkage is
/// (weighted ℓ1 for L, weighted sum of neighborhood norms for WGL), counted
/// over the full conjugate-symmetric grid. `None` for EW and PEW.
pub fn penalty(z: &CoefGrid, spec: &ShrinkageSpec, lambda: f64) -> Option<f64> {
    let weights = spec.weights.as_deref().map(|w| w.as_slice());
    match spec.kind {
        ShrinkageKind::L => Some(lambda * z.weighted_l1(weights)),
        ShrinkageKind::Wgl => {
            let e = neighborhood_energy(z, spec.nbhd);
            let nb = z.n_bins();
            let s: f64 = e
                .iter()
                .enumerate()
                .map(|(i, v)| bin_multiplicity(i % nb, z.n_channels()) * weights.map_or(1.0, |w| w[i]) * v.sqrt())
                .sum();
            Some(lambda * s)
        }
        ShrinkageKind::Ew | ShrinkageKind::Pew => None,
    }
}

/// Number of stored coefficients that are nonzero.
pub fn count_nonzero(z: &CoefGrid) -> usize {
    z.as_slice().iter().filter(|c| c.norm_sqr() > 0.0).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn grid_from(nb: usize, nt: usize, vals: Vec<Complex64>) -> CoefGrid {
        CoefGrid::from_vec(2 * (nb - 1), nt, vals).unwrap()
    }

    fn random_grid(nb: usize, nt: usize, seed: u64) -> CoefGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..nb * nt)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        grid_from(nb, nt, v)
    }

    fn scalar(kind: ShrinkageKind, lambda: f64, z: Complex64) -> Complex64 {
        let g = grid_from(2, 1, vec![z, c(0.0, 0.0)]);
        let spec = ShrinkageSpec::new(kind, lambda).with_neighborhood(Neighborhood::SINGLE);
        apply_shrinkage(&g, &spec).unwrap().get(0, 0)
    }

    #[test]
    fn neighborhood_validation() {
        assert!(Neighborhood::new(2, 7).is_err());
        assert!(Neighborhood::new(3, 0).is_err());
        assert!(Neighborhood::new(3, 7).is_ok());
    }

    #[test]
    fn energy_single_cell_is_magnitude_squared() {
        let g = random_grid(5, 4, 1);
        let e = neighborhood_energy(&g, Neighborhood::SINGLE);
        for (v, z) in e.iter().zip(g.as_slice()) {
            assert_eq!(*v, z.norm_sqr());
        }
    }

    #[test]
    fn energy_interior_count() {
        let g = grid_from(4, 4, vec![c(1.0, 0.0); 16]);
        let e = neighborhood_energy(&g, Neighborhood::new(3, 3).unwrap());
        // (f, t) = (2, 2) one-indexed
        assert_eq!(e[4 + 1], 9.0);
        // corner sees a 2x2 block
        assert_eq!(e[0], 4.0);
    }

    #[test]
    fn shrinkage_scalar_values() {
        assert_eq!(scalar(ShrinkageKind::L, 1.0, c(3.0, 0.0)), c(2.0, 0.0));
        assert_eq!(scalar(ShrinkageKind::L, 1.0, c(0.5, 0.0)), c(0.0, 0.0));
        assert_eq!(scalar(ShrinkageKind::Ew, 1.0, c(2.0, 0.0)), c(1.5, 0.0));
        for k in ShrinkageKind::ALL {
            assert_eq!(scalar(k, 1.0, c(0.0, 0.0)), c(0.0, 0.0));
        }
    }

    #[test]
    fn weight_exponent_switch() {
        let g = grid_from(2, 1, vec![c(2.0, 0.0), c(0.0, 0.0)]);
        let w = Arc::new(WeightGrid::per_bin(&[0.25, 1.0], 1).unwrap());
        let base = ShrinkageSpec::new(ShrinkageKind::Ew, 1.0).with_weights(Some(w));
        let lin = apply_shrinkage(&g, &base).unwrap().get(0, 0);
        let sq = apply_shrinkage(&g, &base.clone().with_weight_exponent(WeightExponent::Squared))
            .unwrap()
            .get(0, 0);
        assert!((lin.re - 2.0 * (1.0 - 0.25 / 4.0)).abs() < 1e-15);
        assert!((sq.re - 2.0 * (1.0 - 0.0625 / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let g = random_grid(5, 4, 2);
        let w = Arc::new(WeightGrid::uniform(5, 3));
        let spec = ShrinkageSpec::new(ShrinkageKind::L, 0.1).with_weights(Some(w));
        assert!(matches!(apply_shrinkage(&g, &spec), Err(Error::Dimension { .. })));
    }

    #[test]
    fn degenerate_neighborhoods_match_pointwise_operators() {
        let g = random_grid(9, 6, 3);
        for (nk, pk) in [(ShrinkageKind::Wgl, ShrinkageKind::L), (ShrinkageKind::Pew, ShrinkageKind::Ew)] {
            let a = apply_shrinkage(&g, &ShrinkageSpec::new(nk, 0.4).with_neighborhood(Neighborhood::SINGLE)).unwrap();
            let b = apply_shrinkage(&g, &ShrinkageSpec::new(pk, 0.4)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn parabolic_profile() {
        let w = WeightGrid::parabolic(16384, 2);
        let p = w.bin_profile();
        assert_eq!(p.len(), 8193);
        assert_eq!(p[8192], 1.0);
        let expect = (1.0f64 / 8193.0).powi(2);
        assert!((p[0] - expect).abs() < 1e-22);
        assert!((p[0] - 1.49e-8).abs() < 1e-10);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(w.get(7, 1), w.get(7, 0));
    }

    #[test]
    fn uniform_weights_match_unweighted() {
        let g = random_grid(9, 6, 4);
        for k in ShrinkageKind::ALL {
            let spec = ShrinkageSpec::new(k, 0.3);
            let w = spec.clone().with_weights(Some(Arc::new(WeightGrid::uniform(9, 6))));
            assert_eq!(apply_shrinkage(&g, &spec).unwrap(), apply_shrinkage(&g, &w).unwrap());
        }
    }

    #[test]
    fn lasso_penalty_counts_full_grid() {
        let g = grid_from(3, 1, vec![c(1.0, 0.0), c(0.0, 2.0), c(-3.0, 0.0)]);
        let spec = ShrinkageSpec::new(ShrinkageKind::L, 0.5);
        // DC and Nyquist once, the interior bin twice
        assert_eq!(penalty(&g, &spec, 0.5), Some(0.5 * (1.0 + 4.0 + 3.0)));
        assert_eq!(penalty(&g, &ShrinkageSpec::new(ShrinkageKind::Ew, 0.5), 0.5), None);
    }

    fn kind_strategy() -> impl Strategy<Value = ShrinkageKind> {
        prop::sample::select(ShrinkageKind::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn phase_preserving_and_non_expansive(seed in 0u64..1000, kind in kind_strategy(), lambda in 0.01f64..2.0) {
            let g = random_grid(7, 9, seed);
            let out = apply_shrinkage(&g, &ShrinkageSpec::new(kind, lambda)).unwrap();
            for (a, b) in g.as_slice().iter().zip(out.as_slice()) {
                prop_assert!(b.norm() <= a.norm() * (1.0 + 1e-15));
                if b.norm() > 0.0 {
                    // out = c·z with real c in [0, 1]
                    let r = b / a;
                    prop_assert!(r.im.abs() < 1e-12 && r.re >= 0.0 && r.re <= 1.0 + 1e-15);
                }
            }
        }

        #[test]
        fn monotone_in_lambda(seed in 0u64..1000, kind in kind_strategy(), l1 in 0.01f64..1.0, dl in 0.0f64..1.0) {
            let g = random_grid(6, 8, seed);
            let spec = ShrinkageSpec::new(kind, l1);
            let lo = apply_with_lambda(&g, &spec, l1).unwrap();
            let hi = apply_with_lambda(&g, &spec, l1 + dl).unwrap();
            for (a, b) in lo.as_slice().iter().zip(hi.as_slice()) {
                prop_assert!(b.norm() <= a.norm() + 1e-15);
            }
        }

        #[test]
        fn lasso_is_the_l1_prox(v in -3.0f64..3.0, t in 0.0f64..2.0) {
            prop_assume!(t > 1e-6);
            let got = scalar(ShrinkageKind::L, t, c(v, 0.0)).re;
            let mut best = (f64::INFINITY, 0.0);
            let mut z = -4.0;
            while z <= 4.0 {
                let obj = 0.5 * (v - z) * (v - z) + t * z.abs();
                if obj < best.0 { best = (obj, z); }
                z += 1e-4;
            }
            prop_assert!((got - best.1).abs() < 1e-3);
        }
    }
}
