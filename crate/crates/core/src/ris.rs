//! RIS reflection model with `b`-bit phase quantization.
//!
//! Phases are held as grid indices `k`, with `θ = 2πk / 2^b` materialized on
//! demand, so crossover and sampling never leave the quantization grid.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};
use crate::seed;

pub const MIN_BITS: u8 = 1;
pub const MAX_BITS: u8 = 16;

fn check_bits(bits: u8) -> Result<()> {
    if !(MIN_BITS..=MAX_BITS).contains(&bits) {
        return Err(Error::Config(format!("phase quantization must be {MIN_BITS}..={MAX_BITS} bits, got {bits}")));
    }
    Ok(())
}

/// The `2^b` equally spaced phases `{0, 2π/2^b, …}` in radians.
pub fn phase_set(bits: u8) -> Result<Vec<f64>> {
    check_bits(bits)?;
    let levels = 1u32 << bits;
    Ok((0..levels).map(|k| phase_of(k, bits)).collect())
}

fn phase_of(index: u32, bits: u8) -> f64 {
    TAU * f64::from(index) / f64::from(1u32 << bits)
}

/// Quantized phase configuration for all RIS elements.
///
/// Serializes as `{bits, amplitude, indices}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfiguration", into = "RawConfiguration")]
pub struct RisConfiguration {
    bits: u8,
    amplitude: f64,
    indices: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct RawConfiguration {
    bits: u8,
    amplitude: f64,
    indices: Vec<u32>,
}

impl TryFrom<RawConfiguration> for RisConfiguration {
    type Error = Error;

    fn try_from(raw: RawConfiguration) -> Result<Self> {
        RisConfiguration::new(raw.bits, raw.amplitude, raw.indices)
    }
}

impl From<RisConfiguration> for RawConfiguration {
    fn from(c: RisConfiguration) -> Self {
        RawConfiguration { bits: c.bits, amplitude: c.amplitude, indices: c.indices }
    }
}

impl RisConfiguration {
    pub fn new(bits: u8, amplitude: f64, indices: Vec<u32>) -> Result<Self> {
        check_bits(bits)?;
        if !(0.0..=1.0).contains(&amplitude) {
            return Err(Error::Config(format!("RIS amplitude {amplitude} outside [0, 1]")));
        }
        let levels = 1u32 << bits;
        if let Some(bad) = indices.iter().find(|&&k| k >= levels) {
            return Err(Error::Config(format!("phase index {bad} outside a {bits}-bit grid")));
        }
        Ok(RisConfiguration { bits, amplitude, indices })
    }

    /// All elements at phase zero.
    pub fn uniform(n_ris: usize, bits: u8, amplitude: f64) -> Result<Self> {
        Self::new(bits, amplitude, vec![0; n_ris])
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.indices.iter().map(|&k| phase_of(k, self.bits)).collect()
    }

    /// Diagonal entries `A e^{jθ_n}`.
    pub fn coefficients(&self) -> Vec<C64> {
        self.thetas().into_iter().map(|t| C64::from_polar(self.amplitude, t)).collect()
    }

    pub(crate) fn with_index(&self, element: usize, index: u32) -> Self {
        let mut out = self.clone();
        out.indices[element] = index;
        out
    }
}

/// `Φ = diag(A e^{jθ_1}, …, A e^{jθ_N})`.
pub fn reflection_matrix(cfg: &RisConfiguration) -> ComplexMatrix {
    ComplexMatrix::from_diag(&cfg.coefficients())
}

/// Draws `count` configurations with every phase uniform over the `b`-bit grid.
pub fn sample_configurations(
    count: usize,
    n_ris: usize,
    bits: u8,
    amplitude: f64,
    seed: u64,
) -> Result<Vec<RisConfiguration>> {
    if count < 2 {
        return Err(Error::Config(format!("need at least two random configurations, got {count}")));
    }
    check_bits(bits)?;
    let levels = 1u32 << bits;
    let mut rng = seed::rng(seed);
    (0..count)
        .map(|_| {
            let indices = (0..n_ris).map(|_| rng.random_range(0..levels)).collect();
            RisConfiguration::new(bits, amplitude, indices)
        })
        .collect()
}
