//! Simplified TCP segment model.
//!
//! Sequence numbers count segments rather than bytes: the coding layer's
//! position arithmetic relies on the sequence number advancing by one per
//! data segment, and nothing in the experiments needs sub-segment
//! addressing.

/// TCP control flags as a small bit set. Serialized bit positions follow
/// the classic header layout (byte 13): ACK 0x10, RST 0x04, SYN 0x02,
/// FIN 0x01.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct TcpFlags(u8);

impl TcpFlags {
    pub const NONE: Self = Self(0);
    pub const FIN: Self = Self(0x01);
    pub const SYN: Self = Self(0x02);
    pub const RST: Self = Self(0x04);
    pub const ACK: Self = Self(0x10);

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn from_bits(bits: u8) -> Self {
        Self(bits & (Self::FIN.0 | Self::SYN.0 | Self::RST.0 | Self::ACK.0))
    }

    pub fn contains(self, other: Self) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn with(self, other: Self) -> Self {
        Self(self.0 | other.0)
    }

    pub fn without(self, other: Self) -> Self {
        Self(self.0 & !other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

/// Fixed TCP header length without options.
pub const TCP_HEADER_LEN: usize = 20;

/// One TCP segment as exchanged between the endpoints and the coding layer.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TcpSegmentModel {
    pub src_port: u16,
    pub dst_port: u16,
    /// Segment-granularity sequence number.
    pub seq_no: u32,
    pub ack_no: u32,
    pub flags: TcpFlags,
    /// Data offset and reserved bits; the low six (flag) bits are kept zero
    /// in the model and merged in on serialization.
    pub offset_reserved: u16,
    pub window: u16,
    pub checksum: u16,
    pub urgent_ptr: u16,
    pub options: Vec<u8>,
    pub payload: Vec<u8>,
}

impl TcpSegmentModel {
    /// Bytes this segment occupies on an uncoded wire.
    pub fn wire_len(&self) -> usize {
        TCP_HEADER_LEN + self.options.len() + self.payload.len()
    }

    /// ACK flag only, no payload: the kind of segment the coding layer owns.
    pub fn is_pure_ack(&self) -> bool {
        self.flags == TcpFlags::ACK && self.payload.is_empty()
    }

    pub fn syn(src_port: u16, dst_port: u16, seq_no: u32, mss: u16) -> Self {
        Self {
            src_port,
            dst_port,
            seq_no,
            flags: TcpFlags::SYN,
            window: u16::MAX,
            options: mss_option_bytes(mss).to_vec(),
            ..Default::default()
        }
    }

    pub fn data(src_port: u16, dst_port: u16, seq_no: u32, payload: Vec<u8>) -> Self {
        Self {
            src_port,
            dst_port,
            seq_no,
            flags: TcpFlags::ACK,
            window: u16::MAX,
            payload,
            ..Default::default()
        }
    }

    pub fn pure_ack(src_port: u16, dst_port: u16, seq_no: u32, ack_no: u32) -> Self {
        Self {
            src_port,
            dst_port,
            seq_no,
            ack_no,
            flags: TcpFlags::ACK,
            window: u16::MAX,
            ..Default::default()
        }
    }

    pub fn fin(src_port: u16, dst_port: u16, seq_no: u32, ack_no: u32) -> Self {
        Self {
            src_port,
            dst_port,
            seq_no,
            ack_no,
            flags: TcpFlags::FIN.with(TcpFlags::ACK),
            window: u16::MAX,
            ..Default::default()
        }
    }

    /// Negotiated MSS carried in the options, if any.
    pub fn mss_option(&self) -> Option<u16> {
        find_mss_option(&self.options)
    }
}

/// Kind byte of the maximum-segment-size TCP option.
pub const OPTION_KIND_MSS: u8 = 2;

pub fn mss_option_bytes(mss: u16) -> [u8; 4] {
    let b = mss.to_be_bytes();
    [OPTION_KIND_MSS, 4, b[0], b[1]]
}

/// Walks the option TLVs looking for an MSS option.
pub fn find_mss_option(options: &[u8]) -> Option<u16> {
    let mut i = 0;
    while i < options.len() {
        match options[i] {
            0 => return None,           // end of options
            1 => i += 1,                // no-op padding
            kind => {
                if i + 1 >= options.len() {
                    return None;
                }
                let len = options[i + 1] as usize;
                if len < 2 || i + len > options.len() {
                    return None;
                }
                if kind == OPTION_KIND_MSS && len == 4 {
                    return Some(u16::from_be_bytes([options[i + 2], options[i + 3]]));
                }
                i += len;
            }
        }
    }
    None
}

/// Returns a copy of `options` with the MSS option value replaced, or None
/// when no MSS option is present.
pub fn replace_mss_option(options: &[u8], mss: u16) -> Option<Vec<u8>> {
    let mut out = options.to_vec();
    let mut i = 0;
    while i < out.len() {
        match out[i] {
            0 => return None,
            1 => i += 1,
            kind => {
                if i + 1 >= out.len() {
                    return None;
                }
                let len = out[i + 1] as usize;
                if len < 2 || i + len > out.len() {
                    return None;
                }
                if kind == OPTION_KIND_MSS && len == 4 {
                    let b = mss.to_be_bytes();
                    out[i + 2] = b[0];
                    out[i + 3] = b[1];
                    return Some(out);
                }
                i += len;
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_are_a_set() {
        let f = TcpFlags::SYN.with(TcpFlags::ACK);
        assert!(f.contains(TcpFlags::SYN));
        assert!(f.contains(TcpFlags::ACK));
        assert!(!f.contains(TcpFlags::FIN));
        assert_eq!(f.without(TcpFlags::ACK), TcpFlags::SYN);
        assert_eq!(TcpFlags::from_bits(0xFF).bits(), 0x17);
    }

    #[test]
    fn mss_option_roundtrip() {
        let syn = TcpSegmentModel::syn(1000, 2000, 0, 1460);
        assert_eq!(syn.mss_option(), Some(1460));
        let replaced = replace_mss_option(&syn.options, 1448).unwrap();
        assert_eq!(find_mss_option(&replaced), Some(1448));
        // NOP padding before the option is walked over.
        let mut padded = vec![1u8, 1];
        padded.extend_from_slice(&mss_option_bytes(536));
        assert_eq!(find_mss_option(&padded), Some(536));
        assert_eq!(find_mss_option(&[]), None);
        assert_eq!(replace_mss_option(&[1, 1], 100), None);
    }

    #[test]
    fn pure_ack_detection() {
        assert!(TcpSegmentModel::pure_ack(1, 2, 0, 5).is_pure_ack());
        assert!(!TcpSegmentModel::data(1, 2, 0, vec![1]).is_pure_ack());
        assert!(!TcpSegmentModel::fin(1, 2, 9, 0).is_pure_ack());
    }

    #[test]
    fn wire_len_counts_header_options_payload() {
        let seg = TcpSegmentModel::data(1, 2, 3, vec![0u8; 100]);
        assert_eq!(seg.wire_len(), 120);
        let syn = TcpSegmentModel::syn(1, 2, 0, 1460);
        assert_eq!(syn.wire_len(), 24);
    }
}
