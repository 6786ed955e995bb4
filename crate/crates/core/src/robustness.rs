//! Perturbations applied to a stego host and the harness that scores them.
//!
//! Fine-tuning is approximated by additive Gaussian noise. Random draws come
//! from the chip domain at counters far above anything an embedding uses, so
//! an attack seeded with the embedding seed never replays spreading chips.

use serde::Serialize;

use crate::cdma::{self, EmbedParams};
use crate::error::{Error, Result};
use crate::keystream::{ChipStream, CHIP_DOMAIN};
use crate::pipeline;
use crate::tensorstore::{f64_to_f16, DType, TensorStore};

const ATTACK_COUNTER_BASE: u64 = 1 << 62;
const NOISE_COUNTER_BASE: u64 = (1 << 62) + (1 << 61);
const FEDAVG_COUNTER_BASE: u64 = 1 << 63;
const FEDAVG_STRIDE: u64 = 1 << 40;

fn check_ratio(ratio: f64) -> Result<()> {
    if (0.0..1.0).contains(&ratio) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "prune ratio must be in [0, 1), got {ratio}"
        )))
    }
}

/// Zeroes the `floor(ratio·L)` smallest-magnitude weights; ties go to the
/// lower index first.
pub fn prune_magnitude(values: &mut [f64], ratio: f64) -> Result<usize> {
    check_ratio(ratio)?;
    let count = (ratio * values.len() as f64).floor() as usize;
    if count == 0 {
        return Ok(0);
    }
    let mut order: Vec<u32> = (0..values.len() as u32).collect();
    let key = |&i: &u32| (values[i as usize].abs(), i);
    order.select_nth_unstable_by(count - 1, |a, b| {
        let (va, ia) = key(a);
        let (vb, ib) = key(b);
        va.total_cmp(&vb).then(ia.cmp(&ib))
    });
    for &i in &order[..count] {
        values[i as usize] = 0.0;
    }
    Ok(count)
}

/// Zeroes a uniformly random subset of `floor(ratio·L)` weights.
pub fn prune_random(values: &mut [f64], ratio: f64, seed: u64) -> Result<usize> {
    check_ratio(ratio)?;
    let count = (ratio * values.len() as f64).floor() as usize;
    if count == 0 {
        return Ok(0);
    }
    let perm = ChipStream::new(seed, CHIP_DOMAIN).permutation(ATTACK_COUNTER_BASE, len_u32(values.len())?);
    for &i in &perm[..count] {
        values[i as usize] = 0.0;
    }
    Ok(count)
}

/// Permutes all weights. Extraction depends on weight order, so this
/// destroys any embedded payload.
pub fn shuffle(values: &mut [f64], seed: u64) -> Result<()> {
    let perm = ChipStream::new(seed, CHIP_DOMAIN).permutation(ATTACK_COUNTER_BASE, len_u32(values.len())?);
    let src = values.to_vec();
    for (dst, &p) in values.iter_mut().zip(&perm) {
        *dst = src[p as usize];
    }
    Ok(())
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::InvalidParams("view too large for permutation".into()))
}

/// Adds i.i.d. `N(0, std²)` noise.
pub fn add_noise(values: &mut [f64], std: f64, seed: u64) -> Result<()> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "noise std must be non-negative, got {std}"
        )));
    }
    if std == 0.0 {
        return Ok(());
    }
    let mut noise = vec![0.0; values.len()];
    ChipStream::new(seed, CHIP_DOMAIN).fill_normal(NOISE_COUNTER_BASE, std, &mut noise);
    values.iter_mut().zip(&noise).for_each(|(v, n)| *v += n);
    Ok(())
}

/// Rounds every value through IEEE binary16.
pub fn quantize_roundtrip(values: &mut [f64]) {
    for v in values {
        *v = f64_to_f16(*v).to_f64();
    }
}

/// `global + (alpha / n') · Σ updates`.
pub fn fedavg_round(global: &[f64], updates: &[&[f64]], alpha: f64) -> Result<Vec<f64>> {
    if updates.is_empty() {
        return Err(Error::InvalidParams("federated round needs at least one update".into()));
    }
    let mut sum = vec![0.0; global.len()];
    for u in updates {
        if u.len() != global.len() {
            return Err(Error::Length {
                expected: global.len(),
                actual: u.len(),
            });
        }
        sum.iter_mut().zip(*u).for_each(|(s, x)| *s += x);
    }
    let scale = alpha / updates.len() as f64;
    Ok(global.iter().zip(&sum).map(|(g, s)| g + scale * s).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    IntegrityError,
    SignalNotFound,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackReport {
    pub attack: String,
    pub parameters: serde_json::Value,
    pub pre_snr_db: Option<f64>,
    pub post_snr_db: Option<f64>,
    pub outcome: Outcome,
    /// Hard-decision symbol errors in the codeword region, before decoding.
    pub raw_bit_errors: Option<usize>,
    /// LDPC blocks whose decoder converged.
    pub converged_blocks: Option<usize>,
    /// Federated rounds until the payload first extracted cleanly.
    pub rounds_used: Option<u32>,
}

/// Outcome of extracting `payload` from `values`; errors other than the
/// typed extraction failures propagate.
pub fn extraction_outcome(
    values: &[f64],
    payload: &[u8],
    params: &EmbedParams,
) -> Result<(Outcome, Option<pipeline::Extraction>)> {
    match pipeline::extract_values_detailed(values, payload.len(), params) {
        Ok(x) if x.digest_ok && x.payload == payload => Ok((Outcome::Ok, Some(x))),
        Ok(x) => Ok((Outcome::IntegrityError, Some(x))),
        Err(Error::SignalNotFound { .. }) => Ok((Outcome::SignalNotFound, None)),
        Err(e) => Err(e),
    }
}

fn snr_or_none(values: &[f64], params: &EmbedParams) -> Result<Option<f64>> {
    match pipeline::probe_values(values, params) {
        Ok(e) => Ok(Some(e.snr_db)),
        Err(Error::SignalNotFound { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Scores an attack that turned `before` into `after`, with `payload` as
/// ground truth.
pub fn assess(
    attack: &str,
    parameters: serde_json::Value,
    before: &[f64],
    after: &[f64],
    payload: &[u8],
    params: &EmbedParams,
) -> Result<AttackReport> {
    let (outcome, extraction) = extraction_outcome(after, payload, params)?;
    let raw_bit_errors = match &extraction {
        Some(x) => {
            let truth = pipeline::transmit_symbols(payload, params)?;
            Some(
                truth[cdma::PREAMBLE_LEN..]
                    .iter()
                    .zip(&x.raw_bits)
                    .filter(|(&t, &b)| (t > 0) != (b == 1))
                    .count(),
            )
        }
        None => None,
    };
    Ok(AttackReport {
        attack: attack.to_owned(),
        parameters,
        pre_snr_db: snr_or_none(before, params)?,
        post_snr_db: snr_or_none(after, params)?,
        outcome,
        raw_bit_errors,
        converged_blocks: extraction.as_ref().map(|x| x.converged_blocks),
        rounds_used: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FedAvgConfig {
    pub participants: usize,
    pub rounds: u32,
    pub boost: f64,
    pub benign_update_std: f64,
    /// Server learning rate.
    pub alpha: f64,
    /// Seed for benign update noise.
    pub sim_seed: u64,
}

/// Simulates federated averaging with one adversarial participant.
///
/// Each round every participant sends Gaussian noise as its update; the
/// adversary adds `boost` times the spread-spectrum signal to its own. The
/// adversary keeps re-injecting until the payload extracts from the global
/// model, then behaves benignly. The global model is rounded to the store's
/// precision after every round.
pub fn fedavg_survival(
    global: &TensorStore,
    filter: Option<&str>,
    payload: &[u8],
    params: &EmbedParams,
    config: &FedAvgConfig,
) -> Result<AttackReport> {
    if !(config.boost > 0.0) {
        return Err(Error::InvalidParams("boost must be positive".into()));
    }
    if config.participants == 0 || config.rounds == 0 {
        return Err(Error::InvalidParams(
            "need at least one participant and one round".into(),
        ));
    }
    let mut store = global.clone();
    let view = store.gather(filter)?;
    let host = view.values.clone();

    let mut signal = vec![0.0; host.len()];
    pipeline::embed_values(&mut signal, payload, params)?;

    let local: Vec<f64> = host.iter().zip(&signal).map(|(h, s)| h + s).collect();
    let pre_snr_db = snr_or_none(&local, params)?;

    let noise = ChipStream::new(config.sim_seed, CHIP_DOMAIN);
    let mut rounds_used = None;
    let mut update = vec![0.0; host.len()];
    for round in 0..config.rounds {
        let mut current = store.gather(filter)?;
        let mut sum = vec![0.0; host.len()];
        for p in 0..config.participants {
            let base = FEDAVG_COUNTER_BASE + (u64::from(round) * config.participants as u64 + p as u64) * FEDAVG_STRIDE;
            noise.fill_normal(base, config.benign_update_std, &mut update);
            if p == 0 && rounds_used.is_none() {
                update.iter_mut().zip(&signal).for_each(|(u, s)| *u += config.boost * s);
            }
            sum.iter_mut().zip(&update).for_each(|(a, u)| *a += u);
        }
        current.values = fedavg_round(&current.values, &[&sum], config.alpha / config.participants as f64)?;
        store = store.scatter(&current)?;
        if rounds_used.is_none() {
            let values = store.gather(filter)?.values;
            if extraction_outcome(&values, payload, params)?.0 == Outcome::Ok {
                rounds_used = Some(round + 1);
            }
        }
    }

    let final_values = store.gather(filter)?.values;
    let mut report = assess(
        "fedavg",
        serde_json::json!({
            "participants": config.participants,
            "rounds": config.rounds,
            "boost": config.boost,
            "benign_update_std": config.benign_update_std,
            "alpha": config.alpha,
            "sim_seed": config.sim_seed,
        }),
        &local,
        &final_values,
        payload,
        params,
    )?;
    report.pre_snr_db = pre_snr_db;
    report.rounds_used = rounds_used;
    Ok(report)
}

/// Rounds values to the precision they would have after a store round trip.
pub fn round_to(dtype: DType, values: &mut [f64]) {
    match dtype {
        DType::F32 => values.iter_mut().for_each(|v| *v = f64::from(*v as f32)),
        DType::F16 => quantize_roundtrip(values),
    }
}
