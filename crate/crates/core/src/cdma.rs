//! Spread-spectrum injection and despreading.
//!
//! The flattened host is cut into `n_blocks` contiguous blocks of
//! `s = SF · d` weights. Transmitted element `k` (a ±1 symbol) belongs to block
//! `k / d` and is spread with its own code: chips `200 + k·s .. 200 + (k+1)·s`
//! of the chip stream. Chips `0..200` are the preamble symbols themselves.
//!
//! Injection adds `γ · C_j b_j` to each block; despreading correlates each
//! block with every code it carries. The first 200 despread values are the
//! known preamble and give the channel gain and normalized noise level.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keystream::{ChipStream, CHIP_DOMAIN};

pub const PREAMBLE_LEN: usize = 200;
pub const GAMMA_MIN: f64 = 1e-5;
pub const GAMMA_MAX: f64 = 9e-3;
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Minimum preamble correlation t-statistic (`√200 / sigma`) for a signal to
/// count as present. Below this the gain is indistinguishable from zero.
pub const MIN_PREAMBLE_T: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedParams {
    pub seed: u64,
    pub gamma: f64,
    pub spreading_factor: usize,
    pub bits_per_block: usize,
    pub ldpc_n: usize,
    /// Allows `gamma` outside `[GAMMA_MIN, GAMMA_MAX]`.
    #[serde(default)]
    pub unsafe_gamma: bool,
}

impl Default for EmbedParams {
    fn default() -> Self {
        Self {
            seed: 42,
            gamma: 2e-3,
            spreading_factor: 6,
            bits_per_block: 100,
            ldpc_n: 2048,
            unsafe_gamma: false,
        }
    }
}

impl EmbedParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// Weights per block.
    pub fn block_len(&self) -> usize {
        self.spreading_factor * self.bits_per_block
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !self.unsafe_gamma && !(GAMMA_MIN..=GAMMA_MAX).contains(&self.gamma) {
            return Err(Error::InvalidParams(format!(
                "gamma {} outside [{GAMMA_MIN:e}, {GAMMA_MAX:e}] (use the unsafe-gamma override)",
                self.gamma
            )));
        }
        if self.spreading_factor < 2 {
            return Err(Error::InvalidParams("spreading factor must be at least 2".into()));
        }
        if self.bits_per_block < 1 {
            return Err(Error::InvalidParams("bits per block must be at least 1".into()));
        }
        if self.ldpc_n < 6 || self.ldpc_n % 2 != 0 {
            return Err(Error::InvalidParams(format!(
                "LDPC length must be even and at least 6, got {}",
                self.ldpc_n
            )));
        }
        Ok(())
    }
}

/// Assignment of transmitted elements to host blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub host_len: usize,
    pub bits_per_block: usize,
    pub spreading_factor: usize,
    pub block_len: usize,
    pub n_blocks: usize,
    pub capacity_bits: usize,
}

impl Layout {
    /// Blocks touched when `n_transmit` elements are sent.
    pub fn blocks_used(&self, n_transmit: usize) -> usize {
        n_transmit.div_ceil(self.bits_per_block)
    }

    pub fn weights_touched(&self, n_transmit: usize) -> usize {
        self.blocks_used(n_transmit) * self.block_len
    }

    /// First chip index of the code for element `k`.
    pub fn chip_offset(&self, k: usize) -> u64 {
        PREAMBLE_LEN as u64 + k as u64 * self.block_len as u64
    }

    fn check_fits(&self, n_transmit: usize) -> Result<()> {
        if n_transmit > self.capacity_bits {
            return Err(Error::Capacity {
                capacity_bits: self.capacity_bits as u64,
                required_bits: n_transmit as u64,
            });
        }
        Ok(())
    }
}

pub fn plan(host_len: usize, n_transmit: usize, params: &EmbedParams) -> Result<Layout> {
    params.validate()?;
    let block_len = params.block_len();
    let n_blocks = host_len / block_len;
    let layout = Layout {
        host_len,
        bits_per_block: params.bits_per_block,
        spreading_factor: params.spreading_factor,
        block_len,
        n_blocks,
        capacity_bits: n_blocks * params.bits_per_block,
    };
    if n_blocks == 0 {
        return Err(Error::Capacity {
            capacity_bits: 0,
            required_bits: n_transmit as u64,
        });
    }
    layout.check_fits(n_transmit)?;
    Ok(layout)
}

/// The 200 known ±1 preamble symbols for `seed`.
pub fn preamble(seed: u64) -> Vec<i8> {
    ChipStream::new(seed, CHIP_DOMAIN).chips(0, PREAMBLE_LEN)
}

/// Maps bits to antipodal symbols: 1 ↦ +1, 0 ↦ −1.
pub fn bits_to_symbols(bits: &[u8]) -> Vec<i8> {
    bits.iter().map(|&b| if b & 1 == 1 { 1 } else { -1 }).collect()
}

/// Adds `γ · Σ_k chip_k · b_k` to every used block. Chip sums are formed
/// exactly in integers before the single scaled addition per weight.
pub fn inject(host: &mut [f64], transmit: &[i8], gamma: f64, seed: u64, layout: &Layout) -> Result<()> {
    if host.len() != layout.host_len {
        return Err(Error::Length {
            expected: layout.host_len,
            actual: host.len(),
        });
    }
    layout.check_fits(transmit.len())?;
    let stream = ChipStream::new(seed, CHIP_DOMAIN);
    let s = layout.block_len;
    let d = layout.bits_per_block;
    let used = layout.weights_touched(transmit.len());
    host[..used].par_chunks_mut(s).enumerate().for_each(|(j, block)| {
        let mut acc = vec![0i32; s];
        let mut chips = vec![0i8; s];
        let end = ((j + 1) * d).min(transmit.len());
        for (k, &b) in transmit.iter().enumerate().take(end).skip(j * d) {
            stream.fill_chips(layout.chip_offset(k), &mut chips);
            for (a, &c) in acc.iter_mut().zip(&chips) {
                *a += i32::from(c * b);
            }
        }
        for (w, &a) in block.iter_mut().zip(&acc) {
            *w += gamma * f64::from(a);
        }
    });
    Ok(())
}

/// Correlates each code with its block: `y_k = Σ_t chip_k(t) · w[j·s + t]`.
pub fn despread(host: &[f64], seed: u64, layout: &Layout, n_transmit: usize) -> Result<Vec<f64>> {
    if host.len() != layout.host_len {
        return Err(Error::Length {
            expected: layout.host_len,
            actual: host.len(),
        });
    }
    layout.check_fits(n_transmit)?;
    let stream = ChipStream::new(seed, CHIP_DOMAIN);
    let s = layout.block_len;
    let d = layout.bits_per_block;
    let mut y = vec![0.0f64; n_transmit];
    y.par_chunks_mut(d).enumerate().for_each(|(j, out)| {
        let block = &host[j * s..(j + 1) * s];
        let mut chips = vec![0i8; s];
        for (slot, value) in out.iter_mut().enumerate() {
            stream.fill_chips(layout.chip_offset(j * d + slot), &mut chips);
            *value = chips.iter().zip(block).map(|(&c, &w)| if c > 0 { w } else { -w }).sum();
        }
    });
    Ok(y)
}

/// Channel estimate from the despread preamble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelEstimate {
    /// Estimate of `s·γ`.
    pub gain: f64,
    /// Noise standard deviation after dividing by the gain.
    pub sigma: f64,
    pub snr_db: f64,
    #[serde(skip)]
    pub soft_preamble: Vec<f64>,
    #[serde(skip)]
    pub soft_data: Vec<f64>,
}

pub fn estimate(y: &[f64], seed: u64) -> Result<ChannelEstimate> {
    if y.len() < PREAMBLE_LEN {
        return Err(Error::Length {
            expected: PREAMBLE_LEN,
            actual: y.len(),
        });
    }
    let pre = preamble(seed);
    let corr: Vec<f64> = y[..PREAMBLE_LEN]
        .iter()
        .zip(&pre)
        .map(|(&v, &p)| v * f64::from(p))
        .collect();
    let gain = corr.iter().sum::<f64>() / PREAMBLE_LEN as f64;
    let mean_norm = corr.iter().map(|c| c / gain).sum::<f64>() / PREAMBLE_LEN as f64;
    let var = corr.iter().map(|c| (c / gain - mean_norm).powi(2)).sum::<f64>() / PREAMBLE_LEN as f64;
    let sigma = var.sqrt().max(SIGMA_FLOOR);
    if !(gain > 0.0) || !(sigma.is_finite()) || (PREAMBLE_LEN as f64).sqrt() / sigma < MIN_PREAMBLE_T {
        return Err(Error::SignalNotFound { gain, sigma });
    }
    Ok(ChannelEstimate {
        gain,
        sigma,
        snr_db: -20.0 * sigma.log10(),
        soft_preamble: y[..PREAMBLE_LEN].iter().map(|v| v / gain).collect(),
        soft_data: y[PREAMBLE_LEN..].iter().map(|v| v / gain).collect(),
    })
}

/// Predicted normalized noise level for a Gaussian host of standard deviation
/// `host_std`: host interference plus cross-talk from the other codes in the
/// same block.
pub fn predicted_sigma(host_std: f64, gamma: f64, block_len: usize, bits_per_block: usize) -> f64 {
    let s = block_len as f64;
    (host_std * host_std / (s * gamma * gamma) + (bits_per_block as f64 - 1.0) / s).sqrt()
}

pub fn snr_db(sigma: f64) -> f64 {
    -20.0 * sigma.log10()
}
