//! Deterministic synthetic test signals.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clip::Signal;
use crate::error::{Error, Result};

pub const FIXTURE_RATE: u32 = 44_100;
pub const FIXTURE_SECONDS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fixture {
    /// 440, 1320 and 2750 Hz with amplitudes 0.6, 0.3, 0.15.
    ThreeSines,
    /// Linear sweep from 100 Hz to 8 kHz at amplitude 0.8.
    Chirp,
    /// Seeded white noise through a one-pole low-pass, peak 0.8.
    FilteredNoise,
}

impl Fixture {
    pub const ALL: [Fixture; 3] = [Self::ThreeSines, Self::Chirp, Self::FilteredNoise];

    pub fn name(self) -> &'static str {
        match self {
            Self::ThreeSines => "three-sines",
            Self::Chirp => "chirp",
            Self::FilteredNoise => "filtered-noise",
        }
    }

    /// The full-length (2 s at 44.1 kHz) version.
    pub fn signal(self) -> Signal {
        self.signal_with_len((FIXTURE_SECONDS * FIXTURE_RATE as f64) as usize)
    }

    pub fn signal_with_len(self, len: usize) -> Signal {
        let fs = FIXTURE_RATE as f64;
        let samples: Vec<f64> = match self {
            Self::ThreeSines => (0..len)
                .map(|n| {
                    let t = n as f64 / fs;
                    0.6 * (2.0 * PI * 440.0 * t).sin()
                        + 0.3 * (2.0 * PI * 1320.0 * t + 0.3).sin()
                        + 0.15 * (2.0 * PI * 2750.0 * t + 1.1).sin()
                })
                .collect(),
            Self::Chirp => {
                let dur = len as f64 / fs;
                let (f0, f1) = (100.0, 8000.0);
                (0..len)
                    .map(|n| {
                        let t = n as f64 / fs;
                        0.8 * (2.0 * PI * (f0 * t + 0.5 * (f1 - f0) / dur * t * t)).sin()
                    })
                    .collect()
            }
            Self::FilteredNoise => {
                let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
                let mut state = 0.0;
                let raw: Vec<f64> = (0..len)
                    .map(|_| {
                        state = 0.9 * state + 0.1 * rng.gen_range(-1.0..1.0);
                        state
                    })
                    .collect();
                let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
                raw.into_iter().map(|v| 0.8 * v / peak).collect()
            }
        };
        Signal::new(samples, FIXTURE_RATE).expect("fixtures are finite and non-empty")
    }
}

impl fmt::Display for Fixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fixture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown fixture '{s}' (expected three-sines, chirp, filtered-noise)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_deterministic_and_bounded() {
        for f in Fixture::ALL {
            let a = f.signal();
            assert_eq!(a.len(), 88_200);
            assert_eq!(a, f.signal());
            assert!(a.peak() <= 1.05 && a.peak() > 0.5, "{f}: {}", a.peak());
            assert_eq!(f.name().parse::<Fixture>().unwrap(), f);
        }
        assert!("pink".parse::<Fixture>().is_err());
    }
}
