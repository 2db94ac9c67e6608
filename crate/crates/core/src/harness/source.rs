//! Deterministic event generation: uniform, Zipf, constant-key, bursty and
//! trace-replay sources. Identical (spec, seed) pairs always produce
//! identical streams.

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datapath::Key;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("trace {path}: line {line}: {message}")]
    TraceParse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("trace {path}: {source}")]
    TraceIo {
        path: String,
        source: std::io::Error,
    },
    #[error("key_space must be at least 1")]
    EmptyKeySpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceKind {
    Uniform,
    /// Consecutive keys starting at `seed`, wrapping at the key space; every
    /// key is unique while count <= key_space.
    Sequential,
    Zipf { exponent: f64 },
    ConstantKey,
    /// Events fire during the first `width` cycles of every `period`-cycle
    /// window, with uniform random keys.
    Burst { period: u64, width: u64 },
    Trace { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceSpec {
    #[serde(flatten)]
    pub kind: SourceKind,
    pub key_space: u64,
    pub count: u64,
    pub seed: u64,
    /// One event every `stride` polled cycles; 1 = full rate.
    pub stride: u64,
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self {
            kind: SourceKind::Uniform,
            key_space: 1 << 24,
            count: 0,
            seed: 1,
            stride: 1,
        }
    }
}

/// splitmix64; stable across platforms and releases.
#[derive(Debug, Clone)]
pub struct Rng64 {
    state: u64,
}

impl Rng64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, bound) by 128-bit multiply.
    pub fn below(&mut self, bound: u64) -> u64 {
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// Uniform in [0, 1) with 53-bit resolution.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Bounded Zipf sampler over {0..n-1} with P(k) proportional to (k+1)^-s,
/// by rejection inversion of the integral envelope.
#[derive(Debug, Clone)]
struct ZipfSampler {
    n: f64,
    exponent: f64,
    h_x1: f64,
    h_n: f64,
    shift: f64,
}

impl ZipfSampler {
    fn new(n: u64, exponent: f64) -> Self {
        let n = n as f64;
        let h = |x: f64| Self::h(x, exponent);
        let h_inv = |x: f64| Self::h_inv(x, exponent);
        let h_x1 = h(1.5) - 1.0;
        let h_n = h(n + 0.5);
        let shift = 2.0 - h_inv(h(2.5) - 2f64.powf(-exponent));
        Self {
            n,
            exponent,
            h_x1,
            h_n,
            shift,
        }
    }

    fn h(x: f64, q: f64) -> f64 {
        if (q - 1.0).abs() < 1e-12 {
            x.ln()
        } else {
            x.powf(1.0 - q) / (1.0 - q)
        }
    }

    fn h_inv(x: f64, q: f64) -> f64 {
        if (q - 1.0).abs() < 1e-12 {
            x.exp()
        } else {
            ((1.0 - q) * x).powf(1.0 / (1.0 - q))
        }
    }

    fn sample(&self, rng: &mut Rng64) -> u64 {
        loop {
            let u = self.h_n + rng.unit_f64() * (self.h_x1 - self.h_n);
            let x = Self::h_inv(u, self.exponent);
            let k = x.round().clamp(1.0, self.n);
            if k - x <= self.shift
                || u >= Self::h(k + 0.5, self.exponent) - k.powf(-self.exponent)
            {
                return k as u64 - 1;
            }
        }
    }

    /// Analytic probability of rank `k` (0-based).
    fn mass(n: u64, exponent: f64, k: u64) -> f64 {
        let norm: f64 = (1..=n).map(|i| (i as f64).powf(-exponent)).sum();
        ((k + 1) as f64).powf(-exponent) / norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourcePoll {
    Event(Key),
    Gap,
    Exhausted,
}

/// Stateful generator; local time advances only when polled, so backpressure
/// holds the stream without reshaping it.
#[derive(Debug)]
pub struct EventSource {
    spec: SourceSpec,
    rng: Rng64,
    zipf: Option<ZipfSampler>,
    trace: Option<Vec<Option<Key>>>,
    trace_pos: usize,
    emitted: u64,
    local_cycle: u64,
}

impl EventSource {
    pub fn new(spec: &SourceSpec) -> Result<Self, SourceError> {
        if spec.key_space == 0 {
            return Err(SourceError::EmptyKeySpace);
        }
        let zipf = match spec.kind {
            SourceKind::Zipf { exponent } => Some(ZipfSampler::new(spec.key_space, exponent)),
            _ => None,
        };
        let trace = match &spec.kind {
            SourceKind::Trace { path } => Some(load_trace(path)?),
            _ => None,
        };
        Ok(Self {
            spec: spec.clone(),
            rng: Rng64::new(spec.seed),
            zipf,
            trace,
            trace_pos: 0,
            emitted: 0,
            local_cycle: 0,
        })
    }

    /// Events remaining to emit.
    pub fn remaining(&self) -> u64 {
        self.total().saturating_sub(self.emitted)
    }

    pub fn total(&self) -> u64 {
        match &self.trace {
            Some(t) => t.iter().filter(|e| e.is_some()).count() as u64,
            None => self.spec.count,
        }
    }

    pub fn is_exhausted(&self) -> bool {
        self.remaining() == 0
    }

    pub fn poll(&mut self) -> SourcePoll {
        if self.is_exhausted() {
            return SourcePoll::Exhausted;
        }
        let cycle = self.local_cycle;
        self.local_cycle += 1;
        if self.spec.stride > 1 && !cycle.is_multiple_of(self.spec.stride) {
            return SourcePoll::Gap;
        }
        let key = match &self.spec.kind {
            SourceKind::Uniform => self.rng.below(self.spec.key_space),
            SourceKind::Sequential => {
                (self.spec.seed.wrapping_add(self.emitted)) % self.spec.key_space
            }
            SourceKind::Zipf { .. } => self.zipf.as_ref().unwrap().sample(&mut self.rng),
            SourceKind::ConstantKey => self.spec.seed % self.spec.key_space,
            SourceKind::Burst { period, width } => {
                let period = (*period).max(1);
                if cycle % period < (*width).min(period) {
                    self.rng.below(self.spec.key_space)
                } else {
                    return SourcePoll::Gap;
                }
            }
            SourceKind::Trace { .. } => {
                let trace = self.trace.as_ref().unwrap();
                let entry = trace[self.trace_pos];
                self.trace_pos += 1;
                match entry {
                    Some(key) => key,
                    None => return SourcePoll::Gap,
                }
            }
        };
        self.emitted += 1;
        SourcePoll::Event(key)
    }
}

/// One key per line; `-` marks an idle cycle; blank lines and `#` comments
/// are skipped.
fn load_trace(path: &PathBuf) -> Result<Vec<Option<Key>>, SourceError> {
    let text = fs::read_to_string(path).map_err(|source| SourceError::TraceIo {
        path: path.display().to_string(),
        source,
    })?;
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "-" {
            entries.push(None);
            continue;
        }
        let key = line.parse::<u64>().map_err(|e| SourceError::TraceParse {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        entries.push(Some(key));
    }
    Ok(entries)
}

/// Analytic Zipf mass of the top-ranked key, for calibration tests.
pub fn zipf_top1_mass(key_space: u64, exponent: f64) -> f64 {
    ZipfSampler::mass(key_space, exponent, 0)
}
