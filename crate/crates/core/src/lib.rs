//! Spread-spectrum payload embedding for floating-point tensor stores.
//!
//! Payloads are framed with a SHA-256 digest, protected with a rate-1/2 LDPC
//! code and spread over host weights with seeded ±1 codes. Extraction
//! despreads with the same codes, estimates the channel from a known
//! preamble and decodes with belief propagation.

pub mod cdma;
pub mod detect;
pub mod error;
pub mod framing;
pub mod keystream;
pub mod ldpc;
pub mod pipeline;
pub mod robustness;
pub mod tensorstore;

pub use cdma::{ChannelEstimate, EmbedParams, Layout};
pub use error::{Error, Result};
pub use tensorstore::{DType, FlatView, Tensor, TensorStore};
