//! Wire format of the coding layer and the TCP header strip/restore pair.
//!
//! Layer segments reuse four TCP header field groups verbatim: source port,
//! destination port, sequence number, and all control flags except ACK.
//! Everything else (acknowledgment number, offset/reserved, window,
//! checksum, urgent pointer, options) plus the payload is serialized into
//! the segment body, which is what gets encoded. The ACK flag on the wire
//! belongs to the layer itself and marks its empty-bodied acknowledgment
//! segments.
//!
//! Fixed header layout, big-endian:
//!
//! ```text
//! src_port(16) | dst_port(16) | seq_no(32) | symbol_indicator(8) |
//! flags(8: bit0 ACK, bit1 SYN, bit2 FIN, bit3 RST) | nc_options_len(8) |
//! nc_options(variable) | body(variable)
//! ```

use crate::codec::CodeParams;
use crate::segment::{replace_mss_option, TcpFlags, TcpSegmentModel};

use super::NcError;

/// Layer flags on the wire; bit assignments are part of the format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NcFlags(u8);

impl NcFlags {
    pub const NONE: Self = Self(0);
    pub const ACK: Self = Self(0x01);
    pub const SYN: Self = Self(0x02);
    pub const FIN: Self = Self(0x04);
    pub const RST: Self = Self(0x08);

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn from_bits(bits: u8) -> Self {
        Self(bits & 0x0F)
    }

    pub fn contains(self, other: Self) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn with(self, other: Self) -> Self {
        Self(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// The reused TCP flags: everything except ACK, which the layer owns.
    pub fn from_tcp(flags: TcpFlags) -> Self {
        let mut out = Self::NONE;
        if flags.contains(TcpFlags::SYN) {
            out = out.with(Self::SYN);
        }
        if flags.contains(TcpFlags::FIN) {
            out = out.with(Self::FIN);
        }
        if flags.contains(TcpFlags::RST) {
            out = out.with(Self::RST);
        }
        out
    }
}

/// Fixed part of the layer header in bytes.
pub const NC_FIXED_HEADER_LEN: usize = 11;

/// Serialized size of the non-reused TCP header fields (ack_no, offset and
/// reserved, window, checksum, urgent pointer).
pub const RESIDUAL_HEADER_LEN: usize = 12;

/// Length prefix framing a stripped segment inside a fixed-size coded body.
pub const FRAME_OVERHEAD: usize = 2;

/// nc_options byte 0 value flagging a zero-payload filler segment.
pub const NC_OPT_FILLER: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NcHeader {
    pub src_port: u16,
    pub dst_port: u16,
    /// Reused sequence number (mu).
    pub seq_no: u32,
    /// Position within a codeword (nu): 0 for the k information segments,
    /// 1..=n-k for the redundancy segments that share the k-th segment's
    /// sequence number.
    pub symbol_indicator: u8,
    pub flags: NcFlags,
    /// Carried but unused by the basic protocol; byte 0 flags fillers.
    pub nc_options: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NcSegment {
    pub header: NcHeader,
    pub body: Vec<u8>,
}

impl NcSegment {
    /// An acknowledgment for the segment at (mu, nu): ACK flag, empty body.
    pub fn ack(src_port: u16, dst_port: u16, mu: u32, nu: u8) -> Self {
        Self {
            header: NcHeader {
                src_port,
                dst_port,
                seq_no: mu,
                symbol_indicator: nu,
                flags: NcFlags::ACK,
                nc_options: Vec::new(),
            },
            body: Vec::new(),
        }
    }

    pub fn is_ack(&self) -> bool {
        self.header.flags.contains(NcFlags::ACK)
    }

    pub fn wire_len(&self) -> usize {
        NC_FIXED_HEADER_LEN + self.header.nc_options.len() + self.body.len()
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(&self.header.src_port.to_be_bytes());
        out.extend_from_slice(&self.header.dst_port.to_be_bytes());
        out.extend_from_slice(&self.header.seq_no.to_be_bytes());
        out.push(self.header.symbol_indicator);
        out.push(self.header.flags.bits());
        debug_assert!(self.header.nc_options.len() <= u8::MAX as usize);
        out.push(self.header.nc_options.len() as u8);
        out.extend_from_slice(&self.header.nc_options);
        out.extend_from_slice(&self.body);
        out
    }
}

/// Parses wire bytes into a layer segment.
pub fn parse_nc_segment(bytes: &[u8]) -> Result<NcSegment, NcError> {
    if bytes.len() < NC_FIXED_HEADER_LEN {
        return Err(NcError::MalformedSegment(format!(
            "{} bytes is shorter than the {NC_FIXED_HEADER_LEN}-byte fixed header",
            bytes.len()
        )));
    }
    let src_port = u16::from_be_bytes([bytes[0], bytes[1]]);
    let dst_port = u16::from_be_bytes([bytes[2], bytes[3]]);
    let seq_no = u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
    let symbol_indicator = bytes[8];
    let flags = NcFlags::from_bits(bytes[9]);
    let opt_len = bytes[10] as usize;
    if bytes.len() < NC_FIXED_HEADER_LEN + opt_len {
        return Err(NcError::MalformedSegment("options run past the segment".into()));
    }
    let nc_options = bytes[NC_FIXED_HEADER_LEN..NC_FIXED_HEADER_LEN + opt_len].to_vec();
    let body = bytes[NC_FIXED_HEADER_LEN + opt_len..].to_vec();
    if flags.contains(NcFlags::ACK) && !body.is_empty() {
        return Err(NcError::MalformedSegment(
            "acknowledgment segments must have an empty body".into(),
        ));
    }
    Ok(NcSegment {
        header: NcHeader { src_port, dst_port, seq_no, symbol_indicator, flags, nc_options },
        body,
    })
}

/// Position of a segment within the stream: 2^8 * mu + nu. Strictly
/// increasing in (mu, nu) lexicographic order.
#[inline]
pub fn position(mu: u32, nu: u8) -> u64 {
    (mu as u64) << 8 | nu as u64
}

/// Splits a TCP segment into the reused header fields and the serialized
/// remainder (residual header fields, options, payload).
///
/// Body layout, big-endian: ack_no(32) | offset_reserved(16, low six bits
/// carry the original TCP flags) | window(16) | checksum(16) |
/// urgent_ptr(16) | options_len(8) | options | payload.
pub fn strip_header(seg: &TcpSegmentModel) -> (NcHeader, Vec<u8>) {
    let header = NcHeader {
        src_port: seg.src_port,
        dst_port: seg.dst_port,
        seq_no: seg.seq_no,
        symbol_indicator: 0,
        flags: NcFlags::from_tcp(seg.flags),
        nc_options: Vec::new(),
    };
    let mut body =
        Vec::with_capacity(RESIDUAL_HEADER_LEN + 1 + seg.options.len() + seg.payload.len());
    body.extend_from_slice(&seg.ack_no.to_be_bytes());
    let offres = (seg.offset_reserved & 0xFFC0) | seg.flags.bits() as u16;
    body.extend_from_slice(&offres.to_be_bytes());
    body.extend_from_slice(&seg.window.to_be_bytes());
    body.extend_from_slice(&seg.checksum.to_be_bytes());
    body.extend_from_slice(&seg.urgent_ptr.to_be_bytes());
    debug_assert!(seg.options.len() <= u8::MAX as usize);
    body.push(seg.options.len() as u8);
    body.extend_from_slice(&seg.options);
    body.extend_from_slice(&seg.payload);
    (header, body)
}

/// Inverse of [`strip_header`].
pub fn restore_header(hdr: &NcHeader, body: &[u8]) -> Result<TcpSegmentModel, NcError> {
    if body.len() < RESIDUAL_HEADER_LEN + 1 {
        return Err(NcError::MalformedBody(format!(
            "{} bytes cannot hold the {RESIDUAL_HEADER_LEN}-byte residual header and options length",
            body.len()
        )));
    }
    let ack_no = u32::from_be_bytes([body[0], body[1], body[2], body[3]]);
    let offres = u16::from_be_bytes([body[4], body[5]]);
    let flags = TcpFlags::from_bits((offres & 0x3F) as u8);
    let window = u16::from_be_bytes([body[6], body[7]]);
    let checksum = u16::from_be_bytes([body[8], body[9]]);
    let urgent_ptr = u16::from_be_bytes([body[10], body[11]]);
    let opt_len = body[12] as usize;
    if body.len() < RESIDUAL_HEADER_LEN + 1 + opt_len {
        return Err(NcError::MalformedBody("options run past the body".into()));
    }
    let options = body[13..13 + opt_len].to_vec();
    let payload = body[13 + opt_len..].to_vec();
    Ok(TcpSegmentModel {
        src_port: hdr.src_port,
        dst_port: hdr.dst_port,
        seq_no: hdr.seq_no,
        ack_no,
        flags,
        offset_reserved: offres & 0xFFC0,
        window,
        checksum,
        urgent_ptr,
        options,
        payload,
    })
}

/// Frames a stripped body into a fixed-size coded segment:
/// length(16) | body | zero padding. A zero length marks a filler.
pub fn frame_body(body: &[u8], segment_size: usize) -> Result<Vec<u8>, NcError> {
    if body.len() + FRAME_OVERHEAD > segment_size {
        return Err(NcError::MalformedBody(format!(
            "{}-byte body does not fit a {segment_size}-byte coded segment",
            body.len()
        )));
    }
    let mut out = vec![0u8; segment_size];
    out[..2].copy_from_slice(&(body.len() as u16).to_be_bytes());
    out[2..2 + body.len()].copy_from_slice(body);
    Ok(out)
}

/// Recovers the stripped body from a coded segment; `None` for fillers.
pub fn unframe_body(framed: &[u8]) -> Result<Option<&[u8]>, NcError> {
    if framed.len() < FRAME_OVERHEAD {
        return Err(NcError::MalformedBody("coded segment shorter than its length prefix".into()));
    }
    let len = u16::from_be_bytes([framed[0], framed[1]]) as usize;
    if len == 0 {
        return Ok(None);
    }
    if FRAME_OVERHEAD + len > framed.len() {
        return Err(NcError::MalformedBody("length prefix runs past the coded segment".into()));
    }
    Ok(Some(&framed[FRAME_OVERHEAD..FRAME_OVERHEAD + len]))
}

/// Rewrites the MSS option on a SYN so that a stripped data segment of that
/// size still fits the code's segment size once framed. Leaves compatible
/// offers unchanged.
pub fn tx_rewrite_mss(syn: &TcpSegmentModel, code: CodeParams) -> Result<TcpSegmentModel, NcError> {
    let offered = syn.mss_option().ok_or(NcError::NoMssOption)?;
    // Data segments carry no TCP options: frame prefix + residual header +
    // options length byte is the whole overhead.
    let budget = code.segment_size() - FRAME_OVERHEAD - RESIDUAL_HEADER_LEN - 1;
    let budget = budget.min(u16::MAX as usize) as u16;
    if offered <= budget {
        return Ok(syn.clone());
    }
    let mut out = syn.clone();
    out.options = replace_mss_option(&syn.options, budget).ok_or(NcError::NoMssOption)?;
    Ok(out)
}
