//! End-to-end embedding and extraction.
//!
//! Embedding: frame the payload with its SHA-256 digest, split the frame into
//! `k`-bit LDPC messages (last one zero-padded), encode, prepend the 200
//! preamble symbols, map to ±1 and inject. Extraction reverses this with a
//! single channel estimate from the preamble shared by every LDPC block.
//!
//! Nothing about the embedding is stored in the host: extraction needs the
//! seed, the shape parameters and the payload length.

use rayon::prelude::*;
use serde::Serialize;

use crate::cdma::{self, ChannelEstimate, EmbedParams, Layout, PREAMBLE_LEN};
use crate::detect::{self, DistributionReport};
use crate::error::{Error, Result};
use crate::framing;
use crate::ldpc::{self, LdpcCode, SoftWord, DEFAULT_MAX_ITER};
use crate::tensorstore::TensorStore;

#[derive(Debug, Clone, Serialize)]
pub struct EmbedRecord {
    pub params: EmbedParams,
    pub payload_len: usize,
    pub ldpc_blocks: usize,
    pub codeword_bits: usize,
    pub transmit_len: usize,
    pub blocks_used: usize,
    pub weights_touched: usize,
    /// Summary of the touched weights before injection.
    pub region_before: DistributionReport,
    /// Summary of the touched weights after injection.
    pub region_after: DistributionReport,
}

/// LDPC blocks needed for a payload of `payload_len` bytes.
pub fn ldpc_blocks(payload_len: usize, ldpc_n: usize) -> usize {
    framing::framed_bits(payload_len).div_ceil(ldpc_n / 2)
}

/// Total transmitted elements (preamble plus codewords).
pub fn transmit_len(payload_len: usize, ldpc_n: usize) -> usize {
    PREAMBLE_LEN + ldpc_blocks(payload_len, ldpc_n) * ldpc_n
}

/// The full ±1 sequence injected for `payload`.
pub fn transmit_symbols(payload: &[u8], params: &EmbedParams) -> Result<Vec<i8>> {
    params.validate()?;
    let code = ldpc::build(params.seed, params.ldpc_n)?;
    transmit_with(&code, payload, params.seed)
}

fn transmit_with(code: &LdpcCode, payload: &[u8], seed: u64) -> Result<Vec<i8>> {
    let frame = framing::frame(payload)?;
    let k = code.k();
    let mut symbols = cdma::preamble(seed);
    for chunk in frame.bits().chunks(k) {
        let mut message = chunk.to_vec();
        message.resize(k, 0);
        symbols.extend(cdma::bits_to_symbols(&code.encode(&message)?));
    }
    Ok(symbols)
}

/// Embeds into a flat weight vector in place.
pub fn embed_values(values: &mut [f64], payload: &[u8], params: &EmbedParams) -> Result<EmbedRecord> {
    params.validate()?;
    if payload.is_empty() {
        return Err(Error::EmptyPayload);
    }
    let n_transmit = transmit_len(payload.len(), params.ldpc_n);
    let layout = cdma::plan(values.len(), n_transmit, params)?;
    let code = ldpc::build(params.seed, params.ldpc_n)?;
    let symbols = transmit_with(&code, payload, params.seed)?;
    debug_assert_eq!(symbols.len(), n_transmit);

    let touched = layout.weights_touched(n_transmit);
    let region_before = detect::distribution_report(&values[..touched])?;
    cdma::inject(values, &symbols, params.gamma, params.seed, &layout)?;
    let region_after = detect::distribution_report(&values[..touched])?;

    Ok(EmbedRecord {
        params: *params,
        payload_len: payload.len(),
        ldpc_blocks: ldpc_blocks(payload.len(), params.ldpc_n),
        codeword_bits: n_transmit - PREAMBLE_LEN,
        transmit_len: n_transmit,
        blocks_used: layout.blocks_used(n_transmit),
        weights_touched: touched,
        region_before,
        region_after,
    })
}

/// Embeds into the tensors selected by `filter` and returns the stego store.
pub fn embed(
    store: &TensorStore,
    payload: &[u8],
    params: &EmbedParams,
    filter: Option<&str>,
) -> Result<(TensorStore, EmbedRecord)> {
    let mut view = store.gather(filter)?;
    let record = embed_values(&mut view.values, payload, params)?;
    Ok((store.scatter(&view)?, record))
}

/// Everything recovered by an extraction, whether or not the digest matched.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub payload: Vec<u8>,
    pub digest_ok: bool,
    pub estimate: ChannelEstimate,
    pub layout: Layout,
    /// LDPC blocks whose decoder reached a valid codeword.
    pub converged_blocks: usize,
    pub ldpc_blocks: usize,
    /// Hard decisions on the normalized soft values, before LDPC decoding.
    pub raw_bits: Vec<u8>,
}

impl Extraction {
    pub fn into_verified(self) -> Result<Vec<u8>> {
        if self.digest_ok {
            Ok(self.payload)
        } else {
            Err(Error::Integrity)
        }
    }
}

/// Runs extraction without failing on a digest mismatch.
pub fn extract_values_detailed(values: &[f64], payload_len: usize, params: &EmbedParams) -> Result<Extraction> {
    params.validate()?;
    if payload_len == 0 {
        return Err(Error::EmptyPayload);
    }
    let n = params.ldpc_n;
    let blocks = ldpc_blocks(payload_len, n);
    let n_transmit = transmit_len(payload_len, n);
    let layout = cdma::plan(values.len(), n_transmit, params)?;
    let y = cdma::despread(values, params.seed, &layout, n_transmit)?;
    let estimate = cdma::estimate(&y, params.seed)?;
    let code = ldpc::build(params.seed, n)?;

    let decoded = estimate
        .soft_data
        .par_chunks(n)
        .map(|chunk| {
            let out = code.decode(&SoftWord::new(chunk.to_vec(), estimate.sigma)?, DEFAULT_MAX_ITER)?;
            Ok((code.generator().message(&out.bits)?, out.converged))
        })
        .collect::<Result<Vec<_>>>()?;

    let converged_blocks = decoded.iter().filter(|(_, c)| *c).count();
    let bits: Vec<u8> = decoded.into_iter().flat_map(|(m, _)| m).collect();
    let (payload, digest_ok) = framing::split(&bits, payload_len)?;
    let raw_bits = estimate.soft_data.iter().map(|&v| u8::from(v > 0.0)).collect();
    Ok(Extraction {
        payload,
        digest_ok,
        estimate,
        layout,
        converged_blocks,
        ldpc_blocks: blocks,
        raw_bits,
    })
}

pub fn extract_values(values: &[f64], payload_len: usize, params: &EmbedParams) -> Result<Vec<u8>> {
    extract_values_detailed(values, payload_len, params)?.into_verified()
}

pub fn extract(store: &TensorStore, payload_len: usize, params: &EmbedParams, filter: Option<&str>) -> Result<Vec<u8>> {
    extract_values(&store.gather(filter)?.values, payload_len, params)
}

/// Channel estimate from the preamble alone; no payload length needed.
pub fn probe_values(values: &[f64], params: &EmbedParams) -> Result<ChannelEstimate> {
    let layout = cdma::plan(values.len(), PREAMBLE_LEN, params)?;
    let y = cdma::despread(values, params.seed, &layout, PREAMBLE_LEN)?;
    cdma::estimate(&y, params.seed)
}

pub fn probe(store: &TensorStore, params: &EmbedParams, filter: Option<&str>) -> Result<ChannelEstimate> {
    probe_values(&store.gather(filter)?.values, params)
}
