//! Receiver side of the coding layer.
//!
//! Every data segment that arrives is acknowledged, duplicates included.
//! Segments are keyed into blocks by their wire position; once a block
//! holds k distinct segments it is decoded and its information segments
//! are handed to the local TCP in order, fillers dropped and TCP sequence
//! numbers reassigned in delivery order (the inverse of the transmitter's
//! wire-sequence translation). Blocks ahead of the in-order delivery point
//! wait in a bounded reorder pool; segments of already-delivered blocks
//! are acknowledged and discarded.
//!
//! TCP acknowledgments coming up from the local (sink) TCP are discarded:
//! the transmitter-side layer acknowledges TCP itself.

use std::collections::BTreeMap;

use crate::codec::{ReceivedSet, SegmentCodec};
use crate::segment::{TcpFlags, TcpSegmentModel};

use super::wire::{restore_header, strip_header, tx_rewrite_mss, unframe_body, NcFlags, NcSegment};
use super::{NcConfig, NcError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RxOutput {
    /// Hand a layer segment (acknowledgment or reverse passthrough) to the
    /// network.
    EmitNc(NcSegment),
    /// Deliver a reconstructed TCP segment to the local TCP.
    TcpDeliver(TcpSegmentModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RxPhase {
    Closed,
    Established,
}

pub struct NcReceiver {
    cfg: NcConfig,
    codec: SegmentCodec,
    phase: RxPhase,
    isn: u32,
    /// Wire sequence number of the first data segment (isn + 1).
    wire_base: u32,
    /// Next block index to deliver in order.
    next_deliver: u64,
    pool: BTreeMap<u64, ReceivedSet>,
    /// Next TCP sequence number to assign on delivery.
    tcp_seq_out: u32,
    ports: (u16, u16),
    /// Remembers the delivered FIN so a retransmitted one (its
    /// acknowledgment was lost) is re-acknowledged and re-delivered
    /// identically after the reset.
    time_wait: Option<(u32, TcpSegmentModel)>,
    // counters
    data_received: u64,
    data_acks_emitted: u64,
    duplicate_segments: u64,
    discarded_delivered: u64,
    discarded_ahead: u64,
    unplaceable: u64,
    delivered_segments: u64,
    fillers_dropped: u64,
    tcp_acks_discarded: u64,
}

impl NcReceiver {
    pub fn new(cfg: NcConfig) -> Result<Self, NcError> {
        cfg.validate()?;
        let codec = SegmentCodec::new(cfg.params)?;
        Ok(Self {
            cfg,
            codec,
            phase: RxPhase::Closed,
            isn: 0,
            wire_base: 0,
            next_deliver: 0,
            pool: BTreeMap::new(),
            tcp_seq_out: 0,
            ports: (0, 0),
            time_wait: None,
            data_received: 0,
            data_acks_emitted: 0,
            duplicate_segments: 0,
            discarded_delivered: 0,
            discarded_ahead: 0,
            unplaceable: 0,
            delivered_segments: 0,
            fillers_dropped: 0,
            tcp_acks_discarded: 0,
        })
    }

    pub fn config(&self) -> &NcConfig {
        &self.cfg
    }

    pub fn is_reset(&self) -> bool {
        self.phase == RxPhase::Closed && self.pool.is_empty()
    }

    pub fn data_received(&self) -> u64 {
        self.data_received
    }

    pub fn data_acks_emitted(&self) -> u64 {
        self.data_acks_emitted
    }

    pub fn duplicate_segments(&self) -> u64 {
        self.duplicate_segments
    }

    pub fn delivered_segments(&self) -> u64 {
        self.delivered_segments
    }

    pub fn fillers_dropped(&self) -> u64 {
        self.fillers_dropped
    }

    pub fn tcp_acks_discarded(&self) -> u64 {
        self.tcp_acks_discarded
    }

    fn reset(&mut self) {
        self.phase = RxPhase::Closed;
        self.isn = 0;
        self.wire_base = 0;
        self.next_deliver = 0;
        self.pool.clear();
        self.tcp_seq_out = 0;
        self.ports = (0, 0);
    }

    fn ack_for(&self, seg: &NcSegment) -> NcSegment {
        NcSegment::ack(
            seg.header.dst_port,
            seg.header.src_port,
            seg.header.seq_no,
            seg.header.symbol_indicator,
        )
    }

    /// Segments arriving from the network.
    pub fn on_nc_segment(&mut self, seg: NcSegment) -> Vec<RxOutput> {
        let mut out = Vec::new();
        let flags = seg.header.flags;
        if flags.contains(NcFlags::ACK) {
            // Layer acknowledgments belong to the transmitter side; under
            // half duplex none should arrive here.
            return out;
        }
        if flags.contains(NcFlags::SYN) {
            self.handle_syn(&seg, &mut out);
        } else if flags.contains(NcFlags::RST) {
            out.push(RxOutput::EmitNc(self.ack_for(&seg)));
            if let Ok(mut rst) = restore_header(&seg.header, &seg.body) {
                rst.seq_no = self.tcp_seq_out;
                out.push(RxOutput::TcpDeliver(rst));
            }
            self.reset();
            self.time_wait = None;
        } else if flags.contains(NcFlags::FIN) {
            self.handle_fin(&seg, &mut out);
        } else {
            self.handle_data(seg, &mut out);
        }
        out
    }

    fn handle_syn(&mut self, seg: &NcSegment, out: &mut Vec<RxOutput>) {
        let fresh = !(self.phase == RxPhase::Established && seg.header.seq_no == self.isn);
        if fresh {
            self.reset();
            self.phase = RxPhase::Established;
            self.isn = seg.header.seq_no;
            self.wire_base = seg.header.seq_no.wrapping_add(1);
            self.tcp_seq_out = seg.header.seq_no.wrapping_add(1);
            self.ports = (seg.header.src_port, seg.header.dst_port);
            self.time_wait = None;
        }
        out.push(RxOutput::EmitNc(self.ack_for(seg)));
        match restore_header(&seg.header, &seg.body) {
            Ok(syn) => out.push(RxOutput::TcpDeliver(syn)),
            Err(_) => self.unplaceable += 1,
        }
    }

    fn handle_fin(&mut self, seg: &NcSegment, out: &mut Vec<RxOutput>) {
        out.push(RxOutput::EmitNc(self.ack_for(seg)));
        if let Some((mu, fin)) = &self.time_wait {
            if *mu == seg.header.seq_no {
                // Retransmitted FIN after our state was already torn down.
                out.push(RxOutput::TcpDeliver(fin.clone()));
                return;
            }
        }
        match restore_header(&seg.header, &seg.body) {
            Ok(mut fin) => {
                fin.seq_no = self.tcp_seq_out;
                self.time_wait = Some((seg.header.seq_no, fin.clone()));
                out.push(RxOutput::TcpDeliver(fin));
            }
            Err(_) => self.unplaceable += 1,
        }
        self.reset();
    }

    fn handle_data(&mut self, seg: NcSegment, out: &mut Vec<RxOutput>) {
        self.data_received += 1;
        // Every received data segment is acknowledged, duplicates included.
        out.push(RxOutput::EmitNc(self.ack_for(&seg)));
        self.data_acks_emitted += 1;
        if self.phase != RxPhase::Established {
            self.unplaceable += 1;
            return;
        }
        let k = self.cfg.params.k();
        let n = self.cfg.params.n();
        let mu = seg.header.seq_no;
        let nu = seg.header.symbol_indicator;
        let offset = mu.wrapping_sub(self.wire_base);
        if offset >= u32::MAX / 2 {
            // Far below the base: not a position this connection produced.
            self.unplaceable += 1;
            return;
        }
        let index = (offset / k) as u64;
        let column = offset % k;
        let pos = if nu == 0 {
            column
        } else {
            if column != k - 1 || nu as u32 > n - k {
                self.unplaceable += 1;
                return;
            }
            k - 1 + nu as u32
        };
        if index < self.next_deliver {
            // Block already delivered: acknowledged above, now discarded.
            self.discarded_delivered += 1;
            return;
        }
        if index >= self.next_deliver + self.cfg.reorder_pool as u64 {
            // Beyond the reorder pool; unreachable when the transmitter
            // window respects the pool bound (enforced at configuration).
            self.discarded_ahead += 1;
            return;
        }
        if seg.body.len() != self.cfg.params.segment_size() {
            self.unplaceable += 1;
            return;
        }
        let set = self
            .pool
            .entry(index)
            .or_insert_with(|| ReceivedSet::new(self.cfg.params));
        match set.insert(pos, seg.body) {
            Ok(true) => {}
            Ok(false) => {
                self.duplicate_segments += 1;
                return;
            }
            Err(_) => {
                self.unplaceable += 1;
                return;
            }
        }
        self.deliver_ready(out);
    }

    fn deliver_ready(&mut self, out: &mut Vec<RxOutput>) {
        let k = self.cfg.params.k();
        while self
            .pool
            .get(&self.next_deliver)
            .is_some_and(|set| set.len() as u32 >= k)
        {
            let set = self.pool.remove(&self.next_deliver).expect("checked above");
            // k segments of an erasure-only channel always decode.
            let block = self.codec.decode(&set).expect("k segments decode");
            for framed in block.segments() {
                match unframe_body(framed).expect("well-formed coded segment") {
                    None => {
                        self.fillers_dropped += 1;
                    }
                    Some(body) => {
                        let hdr = super::wire::NcHeader {
                            src_port: self.ports.0,
                            dst_port: self.ports.1,
                            seq_no: self.tcp_seq_out,
                            symbol_indicator: 0,
                            flags: NcFlags::NONE,
                            nc_options: Vec::new(),
                        };
                        let tcp =
                            restore_header(&hdr, body).expect("decoded body restores");
                        self.tcp_seq_out = self.tcp_seq_out.wrapping_add(1);
                        self.delivered_segments += 1;
                        out.push(RxOutput::TcpDeliver(tcp));
                    }
                }
            }
            self.next_deliver += 1;
        }
    }

    /// Segments handed down by the local (sink) TCP: pure acknowledgments
    /// are discarded, connection management passes through toward the
    /// transmitter, payload is a half-duplex violation.
    pub fn on_tcp_segment(&mut self, seg: TcpSegmentModel) -> Result<Vec<RxOutput>, NcError> {
        if seg.flags.contains(TcpFlags::SYN) {
            // SYN-ACK: rewrite this side's MSS offer too, so the minimum
            // of the two offers always fits the code geometry.
            let rewritten = match tx_rewrite_mss(&seg, self.cfg.params) {
                Ok(s) => s,
                Err(NcError::NoMssOption) => seg,
                Err(e) => return Err(e),
            };
            let (header, body) = strip_header(&rewritten);
            return Ok(vec![RxOutput::EmitNc(NcSegment { header, body })]);
        }
        if seg.flags.contains(TcpFlags::RST) {
            let (header, body) = strip_header(&seg);
            self.reset();
            return Ok(vec![RxOutput::EmitNc(NcSegment { header, body })]);
        }
        if seg.flags.contains(TcpFlags::FIN) {
            // Teardown handling is inherited: forward, do not discard.
            let (header, body) = strip_header(&seg);
            return Ok(vec![RxOutput::EmitNc(NcSegment { header, body })]);
        }
        if !seg.payload.is_empty() {
            return Err(NcError::UnexpectedData);
        }
        self.tcp_acks_discarded += 1;
        Ok(Vec::new())
    }
}
