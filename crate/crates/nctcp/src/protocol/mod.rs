//! The coding layer between TCP and the network.
//!
//! A transmitter buffers TCP data segments until it holds k of them, encodes
//! the block into n segments and hands all n to the network. The receiver
//! acknowledges every segment it sees and rebuilds the block from any k of
//! them. Once the transmitter has collected `spec_threshold` distinct
//! acknowledgments for a block it acknowledges the buffered segments to its
//! local TCP (a speculative acknowledgment: the receiver-side TCP may not
//! have seen them yet). TCP-level acknowledgments never cross the network;
//! the ACK flag on the wire marks the layer's own acknowledgment segments.
//!
//! Connection management (SYN/FIN/RST) passes through transparently, with
//! the MSS option on SYNs rewritten so encoded segments fit the code's
//! segment size.

mod receiver;
mod transmitter;
mod wire;

pub use receiver::{NcReceiver, RxOutput};
pub use transmitter::{NcTransmitter, TxOutput, TxTimerKind, TxTimerToken};
pub use wire::{
    parse_nc_segment, position, restore_header, strip_header, tx_rewrite_mss, NcFlags, NcHeader,
    NcSegment, FRAME_OVERHEAD, NC_FIXED_HEADER_LEN, RESIDUAL_HEADER_LEN,
};

use thiserror::Error;

use crate::codec::{CodecError, CodeParams};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NcError {
    /// Wire bytes too short or inconsistent to be a layer segment.
    #[error("malformed segment: {0}")]
    MalformedSegment(String),
    /// Segment body does not deserialize back into a TCP segment.
    #[error("malformed body: {0}")]
    MalformedBody(String),
    /// Acknowledgment for a block that is no longer outstanding.
    #[error("stale acknowledgment for position mu={mu} nu={nu}")]
    StaleAck { mu: u32, nu: u8 },
    /// Receiver-side TCP produced payload, which half-duplex operation
    /// rules out.
    #[error("unexpected payload from receiver-side TCP")]
    UnexpectedData,
    /// SYN rewrite requested on a segment without an MSS option.
    #[error("segment carries no MSS option")]
    NoMssOption,
    /// Layer configuration outside the supported envelope.
    #[error("invalid layer configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Smallest workable segment size: frame length prefix, residual TCP
/// header, options length byte, and at least one payload byte.
pub const MIN_SEGMENT_SIZE: usize =
    wire::FRAME_OVERHEAD + wire::RESIDUAL_HEADER_LEN + 1 + 1;

/// Configuration shared by both ends of a coded connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NcConfig {
    pub params: CodeParams,
    /// Distinct acknowledgments required before the buffered TCP segments
    /// are acknowledged locally; in [k, n].
    pub spec_threshold: u32,
    /// Blocks the transmitter may hold un-acknowledged at once.
    pub window: u32,
    /// Blocks ahead of the in-order delivery point the receiver buffers.
    pub reorder_pool: u32,
}

impl NcConfig {
    /// Defaults: threshold k (the weakest setting that still witnesses
    /// decodability), window 3, pool 4. Three blocks in flight keep the
    /// pipeline busy through a timeout without overrunning a small
    /// bottleneck queue.
    pub fn new(params: CodeParams) -> Result<Self, NcError> {
        Self::with_threshold(params, params.k())
    }

    pub fn with_threshold(params: CodeParams, spec_threshold: u32) -> Result<Self, NcError> {
        let cfg = Self { params, spec_threshold, window: 3, reorder_pool: 4 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), NcError> {
        let (n, k) = (self.params.n(), self.params.k());
        if !(k..=n).contains(&self.spec_threshold) {
            return Err(NcError::BadConfig(format!(
                "spec_threshold {} outside [k={k}, n={n}]",
                self.spec_threshold
            )));
        }
        if self.window == 0 {
            return Err(NcError::BadConfig("window must be at least 1".into()));
        }
        if self.window > self.reorder_pool {
            // A transmitter running further ahead than the receiver can
            // buffer would force the receiver to drop segments the
            // transmitter may already have cleared.
            return Err(NcError::BadConfig(format!(
                "window {} exceeds receiver reorder pool {}",
                self.window, self.reorder_pool
            )));
        }
        if self.params.segment_size() < MIN_SEGMENT_SIZE {
            return Err(NcError::BadConfig(format!(
                "segment_size {} below minimum {MIN_SEGMENT_SIZE}",
                self.params.segment_size()
            )));
        }
        Ok(())
    }

    /// Largest TCP payload that still fits a framed, stripped segment.
    pub fn max_payload(&self) -> usize {
        self.params.segment_size() - MIN_SEGMENT_SIZE + 1
    }
}
