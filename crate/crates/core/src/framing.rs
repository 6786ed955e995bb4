//! Payload framing: payload bits followed by their SHA-256 digest.
//!
//! Bits are stored one per `u8` (0 or 1), most significant bit of each byte
//! first. The payload length is never embedded; the extractor must supply it.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DIGEST_BITS: usize = 256;

/// A payload with its integrity digest, ready for channel coding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramedMessage {
    bits: Vec<u8>,
    payload_len: usize,
}

impl FramedMessage {
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn payload_len(&self) -> usize {
        self.payload_len
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn into_bits(self) -> Vec<u8> {
        self.bits
    }
}

/// Frame length in bits for a payload of `payload_len` bytes.
pub fn framed_bits(payload_len: usize) -> usize {
    8 * payload_len + DIGEST_BITS
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    let mut bits = Vec::with_capacity(bytes.len() * 8);
    for &b in bytes {
        bits.extend((0..8).rev().map(|k| (b >> k) & 1));
    }
    bits
}

/// Packs MSB-first bits into bytes; a trailing partial byte is zero-filled.
pub fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (k, &bit)| acc | ((bit & 1) << (7 - k)))
        })
        .collect()
}

pub fn frame(payload: &[u8]) -> Result<FramedMessage> {
    if payload.is_empty() {
        return Err(Error::EmptyPayload);
    }
    let mut bits = bytes_to_bits(payload);
    bits.extend(bytes_to_bits(&sha256(payload)));
    Ok(FramedMessage {
        bits,
        payload_len: payload.len(),
    })
}

/// Splits recovered bits into payload and digest and checks the digest.
/// Bits beyond the frame are ignored.
pub fn verify(bits: &[u8], payload_len: usize) -> Result<Vec<u8>> {
    let (payload, digest_ok) = split(bits, payload_len)?;
    if digest_ok {
        Ok(payload)
    } else {
        Err(Error::Integrity)
    }
}

/// Like [`verify`], but returns the payload bytes regardless of the digest
/// outcome together with whether the digest matched.
pub fn split(bits: &[u8], payload_len: usize) -> Result<(Vec<u8>, bool)> {
    let need = framed_bits(payload_len);
    if bits.len() < need {
        return Err(Error::Length {
            expected: need,
            actual: bits.len(),
        });
    }
    let payload = bits_to_bytes(&bits[..8 * payload_len]);
    let digest = bits_to_bytes(&bits[8 * payload_len..need]);
    let ok = digest[..] == sha256(&payload)[..];
    Ok((payload, ok))
}
