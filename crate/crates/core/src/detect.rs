//! Statistical detectability: two-sample Kolmogorov–Smirnov and moment/quantile summaries.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::keystream::{ChipStream, CHIP_DOMAIN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub d_stat: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                actual: s.len(),
            });
        }
    }
    let (sa, sb) = rayon::join(|| sorted(a), || sorted(b));
    Ok(ks_sorted(&sa, &sb))
}

/// KS on samples that are already sorted ascending (by `f64::total_cmp`).
pub fn ks_sorted(a: &[f64], b: &[f64]) -> KsResult {
    let (n1, n2) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < n1 && j < n2 {
        let x = if a[i].total_cmp(&b[j]).is_le() { a[i] } else { b[j] };
        while i < n1 && a[i].total_cmp(&x).is_eq() {
            i += 1;
        }
        while j < n2 && b[j].total_cmp(&x).is_eq() {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    let ne = (n1 as f64 * n2 as f64) / (n1 + n2) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    KsResult {
        d_stat: d,
        p_value: kolmogorov_q(lambda),
        n1,
        n2,
    }
}

/// Kolmogorov survival function `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let a = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=1_000_000u64 {
        let term = (a * (k * k) as f64).exp();
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionReport {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// `(probability, value)` pairs at [`REPORT_QUANTILES`].
    pub quantiles: Vec<(f64, f64)>,
}

pub const REPORT_QUANTILES: [f64; 7] = [0.001, 0.01, 0.25, 0.5, 0.75, 0.99, 0.999];

pub fn distribution_report(samples: &[f64]) -> Result<DistributionReport> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            actual: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let s = sorted(samples);
    Ok(DistributionReport {
        n: samples.len(),
        mean,
        std: m2.sqrt(),
        skewness,
        excess_kurtosis,
        quantiles: REPORT_QUANTILES.iter().map(|&p| (p, quantile_sorted(&s, p))).collect(),
    })
}

/// Linear-interpolation quantile of sorted data (`h = (n − 1)·p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pure spread-spectrum perturbations: `n` values, each `γ` times a sum of
/// `d` independent ±1 chips drawn from `seed`.
pub fn signal_reference(seed: u64, gamma: f64, bits_per_block: usize, n: usize) -> Vec<f64> {
    let stream = ChipStream::new(seed, CHIP_DOMAIN);
    let mut chips = vec![0i8; bits_per_block];
    (0..n)
        .map(|i| {
            stream.fill_chips((i * bits_per_block) as u64, &mut chips);
            gamma * chips.iter().map(|&c| f64::from(c)).sum::<f64>()
        })
        .collect()
}

/// KS distance between suspect weights and a pure binomial-shaped signal.
/// Informational: real stego weights are dominated by the host and do not
/// follow the signal's distribution.
pub fn binomiality_probe(samples: &[f64], seed: u64, gamma: f64, bits_per_block: usize) -> Result<KsResult> {
    let reference = signal_reference(seed, gamma, bits_per_block, samples.len());
    ks_two_sample(samples, &reference)
}
