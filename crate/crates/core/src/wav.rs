//! Minimal RIFF/WAVE codec: PCM 16/24/32-bit and IEEE float 32/64-bit,
//! including `WAVE_FORMAT_EXTENSIBLE` headers.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clip::Signal;
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavFormat {
    Pcm16,
    Pcm24,
    Pcm32,
    #[default]
    Float32,
    Float64,
}

impl WavFormat {
    pub fn bits(self) -> u16 {
        match self {
            Self::Pcm16 => 16,
            Self::Pcm24 => 24,
            Self::Pcm32 | Self::Float32 => 32,
            Self::Float64 => 64,
        }
    }

    pub fn is_float(self) -> bool {
        matches!(self, Self::Float32 | Self::Float64)
    }

    fn from_header(tag: u16, bits: u16) -> Result<Self> {
        match (tag, bits) {
            (FORMAT_PCM, 16) => Ok(Self::Pcm16),
            (FORMAT_PCM, 24) => Ok(Self::Pcm24),
            (FORMAT_PCM, 32) => Ok(Self::Pcm32),
            (FORMAT_FLOAT, 32) => Ok(Self::Float32),
            (FORMAT_FLOAT, 64) => Ok(Self::Float64),
            _ => Err(Error::Wav(format!("unsupported codec: format tag {tag}, {bits} bits per sample"))),
        }
    }
}

impl fmt::Display for WavFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pcm16 => "pcm16",
            Self::Pcm24 => "pcm24",
            Self::Pcm32 => "pcm32",
            Self::Float32 => "f32",
            Self::Float64 => "f64",
        })
    }
}

impl FromStr for WavFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pcm16" | "s16" => Ok(Self::Pcm16),
            "pcm24" | "s24" => Ok(Self::Pcm24),
            "pcm32" | "s32" => Ok(Self::Pcm32),
            "f32" | "float32" => Ok(Self::Float32),
            "f64" | "float64" => Ok(Self::Float64),
            _ => Err(Error::Config(format!("unknown wav format '{s}'"))),
        }
    }
}

/// Decoded file contents, one vector per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct WavData {
    pub sample_rate: u32,
    pub format: WavFormat,
    pub channels: Vec<Vec<f64>>,
}

impl WavData {
    /// Selects one channel; files with several channels need an explicit
    /// selection.
    pub fn into_signal(mut self, channel: Option<usize>) -> Result<Signal> {
        let n = self.channels.len();
        let idx = match (channel, n) {
            (Some(c), _) if c < n => c,
            (Some(c), _) => return Err(Error::Wav(format!("channel {c} requested but the file has {n}"))),
            (None, 1) => 0,
            (None, _) => {
                return Err(Error::Wav(format!(
                    "file has {n} channels; select one with --channel"
                )))
            }
        };
        Signal::new(self.channels.swap_remove(idx), self.sample_rate)
    }
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

pub fn decode(bytes: &[u8]) -> Result<WavData> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Wav("not a RIFF/WAVE file".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<(WavFormat, u16, u32)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start.checked_add(size).filter(|e| *e <= bytes.len());
        match id {
            b"fmt " => {
                let end = body_end.ok_or_else(|| Error::Wav("truncated fmt chunk".into()))?;
                let b = &bytes[body_start..end];
                if b.len() < 16 {
                    return Err(Error::Wav("fmt chunk too short".into()));
                }
                let mut tag = u16_at(b, 0);
                let channels = u16_at(b, 2);
                let rate = u32_at(b, 4);
                let bits = u16_at(b, 14);
                if tag == FORMAT_EXTENSIBLE {
                    if b.len() < 26 {
                        return Err(Error::Wav("extensible fmt chunk too short".into()));
                    }
                    tag = u16_at(b, 24);
                }
                if channels == 0 || rate == 0 {
                    return Err(Error::Wav("fmt chunk declares zero channels or sample rate".into()));
                }
                fmt = Some((WavFormat::from_header(tag, bits)?, channels, rate));
            }
            b"data" => {
                let end = body_end.ok_or_else(|| Error::Wav("truncated data chunk".into()))?;
                data = Some(&bytes[body_start..end]);
            }
            _ => {}
        }
        if data.is_some() && fmt.is_some() {
            break;
        }
        // chunks are word aligned
        pos = body_start.saturating_add(size).saturating_add(size & 1);
    }
    let (format, n_ch, sample_rate) = fmt.ok_or_else(|| Error::Wav("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Wav("missing data chunk".into()))?;
    let width = format.bits() as usize / 8;
    let block = width * n_ch as usize;
    if data.len() % block != 0 {
        return Err(Error::Wav("truncated sample data".into()));
    }
    let frames = data.len() / block;
    let mut channels = vec![Vec::with_capacity(frames); n_ch as usize];
    for (i, s) in data.chunks_exact(width).enumerate() {
        let v = match format {
            WavFormat::Pcm16 => i16::from_le_bytes([s[0], s[1]]) as f64 / 32768.0,
            WavFormat::Pcm24 => {
                let raw = i32::from_le_bytes([0, s[0], s[1], s[2]]) >> 8;
                raw as f64 / 8_388_608.0
            }
            WavFormat::Pcm32 => i32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64 / 2_147_483_648.0,
            WavFormat::Float32 => f32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64,
            WavFormat::Float64 => f64::from_le_bytes(s.try_into().expect("8-byte chunk")),
        };
        channels[i % n_ch as usize].push(v);
    }
    Ok(WavData {
        sample_rate,
        format,
        channels,
    })
}

/// Result of encoding; integer formats clamp out-of-range samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EncodeReport {
    pub clamped: usize,
}

pub fn encode(signal: &Signal, format: WavFormat) -> (Vec<u8>, EncodeReport) {
    let width = format.bits() as usize / 8;
    let data_len = signal.len() * width;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    let tag = if format.is_float() { FORMAT_FLOAT } else { FORMAT_PCM };
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&signal.sample_rate().to_le_bytes());
    out.extend_from_slice(&(signal.sample_rate() * width as u32).to_le_bytes());
    out.extend_from_slice(&(width as u16).to_le_bytes());
    out.extend_from_slice(&format.bits().to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());

    let mut report = EncodeReport::default();
    let mut int = |v: f64, bits: u32| -> i64 {
        let full = (1i64 << (bits - 1)) as f64;
        let q = (v * full).round();
        let (lo, hi) = (-full, full - 1.0);
        if q < lo || q > hi {
            report.clamped += 1;
        }
        q.clamp(lo, hi) as i64
    };
    for &v in signal.samples() {
        match format {
            WavFormat::Pcm16 => out.extend_from_slice(&(int(v, 16) as i16).to_le_bytes()),
            WavFormat::Pcm24 => out.extend_from_slice(&(int(v, 24) as i32).to_le_bytes()[..3]),
            WavFormat::Pcm32 => out.extend_from_slice(&(int(v, 32) as i32).to_le_bytes()),
            WavFormat::Float32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            WavFormat::Float64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    (out, report)
}

pub fn read_wav_all(path: impl AsRef<Path>) -> Result<WavData> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Wav(format!("cannot read {}: {e}", path.display())))?;
    decode(&bytes).map_err(|e| match e {
        Error::Wav(m) => Error::Wav(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Reads a mono signal, or one channel of a multichannel file.
pub fn read_wav(path: impl AsRef<Path>, channel: Option<usize>) -> Result<Signal> {
    read_wav_all(path)?.into_signal(channel)
}

pub fn write_wav(signal: &Signal, path: impl AsRef<Path>, format: WavFormat) -> Result<EncodeReport> {
    let path = path.as_ref();
    let (bytes, report) = encode(signal, format);
    std::fs::write(path, bytes).map_err(|e| Error::Wav(format!("cannot write {}: {e}", path.display())))?;
    Ok(report)
}
