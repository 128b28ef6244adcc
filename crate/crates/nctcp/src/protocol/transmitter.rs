//! Transmitter side of the coding layer.
//!
//! Data segments from the local TCP are buffered until k are held, encoded
//! into n layer segments and handed to the network. Each block stays
//! outstanding until `spec_threshold` distinct positions of it have been
//! acknowledged, at which point the buffered TCP segments are acknowledged
//! locally (cumulatively, once all earlier blocks have completed too). A
//! per-block retransmission timer re-emits the whole block when too few
//! acknowledgments return.
//!
//! Blocks are emitted inside a sliding window anchored at the oldest
//! incomplete block, never running further ahead than the receiver's
//! reorder pool can hold.
//!
//! Wire sequence numbers normally copy the TCP sequence numbers, but
//! filler-padded blocks consume wire numbers TCP knows nothing about, so
//! the layer keeps its own counter; the receiver reassigns TCP numbers in
//! delivery order, which makes the translation exact on both sides.

use std::collections::{BTreeMap, VecDeque};

use crate::codec::{SegmentBlock, SegmentCodec};
use crate::segment::{TcpFlags, TcpSegmentModel};

use super::wire::{
    frame_body, position, restore_header, strip_header, tx_rewrite_mss, NcFlags, NcHeader,
    NcSegment, NC_OPT_FILLER,
};
use super::{NcConfig, NcError};

/// Fallback RTT estimate until the handshake seeds the real one.
const DEFAULT_SRTT_NS: u64 = 100_000_000;
const MIN_SRTT_NS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxOutput {
    /// Hand a layer segment to the network.
    EmitNc(NcSegment),
    /// Hand a TCP segment up to the local TCP (speculative acknowledgments,
    /// restored handshake segments).
    TcpDeliver(TcpSegmentModel),
    /// Ask the scheduler for a timer callback after `delay_ns`.
    ArmTimer { token: TxTimerToken, delay_ns: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxTimerKind {
    /// Per-block retransmission timer.
    Retransmit,
    /// Partial-fill flush timer: pads the buffer with fillers so a stalled
    /// TCP window cannot deadlock the block pipeline.
    Flush,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxTimerToken {
    pub kind: TxTimerKind,
    pub block: u64,
    pub gen: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TxPhase {
    Closed,
    SynSent,
    Established,
    Closing,
}

/// One buffered, not-yet-encoded segment.
struct FillSegment {
    header: NcHeader,
    framed: Vec<u8>,
    /// TCP sequence number; None for fillers.
    tcp_seq: Option<u32>,
}

struct Block {
    index: u64,
    segments: Vec<NcSegment>,
    /// Highest TCP sequence number carried by this block, for the
    /// cumulative acknowledgment to TCP.
    last_tcp_seq: u32,
}

struct PositionSet {
    words: Vec<u64>,
    count: u32,
}

impl PositionSet {
    fn new(n: u32) -> Self {
        Self { words: vec![0; n.div_ceil(64) as usize], count: 0 }
    }

    /// Returns true when the position was not yet present.
    fn insert(&mut self, pos: u32) -> bool {
        let (w, b) = (pos as usize / 64, pos % 64);
        if self.words[w] >> b & 1 == 1 {
            return false;
        }
        self.words[w] |= 1 << b;
        self.count += 1;
        true
    }
}

struct Outstanding {
    block: Block,
    acked: PositionSet,
    retries: u64,
    last_emit_at: u64,
}

struct FinState {
    tcp_seq: u32,
    header: NcHeader,
    body: Vec<u8>,
    wire_seq: Option<u32>,
}

pub struct NcTransmitter {
    cfg: NcConfig,
    codec: SegmentCodec,
    phase: TxPhase,
    isn: u32,
    /// Next fresh data sequence number expected from TCP; anything else is
    /// a TCP-level retransmission the layer already owns.
    next_tcp_seq: u32,
    /// Next wire sequence number to assign (data base is isn + 1).
    next_wire_seq: u32,
    fill: Vec<FillSegment>,
    blocks_ready: VecDeque<Block>,
    next_block_index: u64,
    outstanding: BTreeMap<u64, Outstanding>,
    /// Lowest block index not yet completed.
    frontier: u64,
    /// Completed out of order, waiting for the frontier.
    completed: BTreeMap<u64, u32>,
    fin: Option<FinState>,
    syn_sent_at: Option<u64>,
    srtt_ns: Option<u64>,
    rttvar_ns: u64,
    flush_gen: u64,
    // counters
    stale_acks: u64,
    tcp_segments_ignored: u64,
    blocks_retransmitted: u64,
    fillers_emitted: u64,
    spec_acks_sent: u64,
    emitted_positions: Vec<u64>,
}

impl NcTransmitter {
    pub fn new(cfg: NcConfig) -> Result<Self, NcError> {
        cfg.validate()?;
        let codec = SegmentCodec::new(cfg.params)?;
        Ok(Self {
            cfg,
            codec,
            phase: TxPhase::Closed,
            isn: 0,
            next_tcp_seq: 0,
            next_wire_seq: 0,
            fill: Vec::new(),
            blocks_ready: VecDeque::new(),
            next_block_index: 0,
            outstanding: BTreeMap::new(),
            frontier: 0,
            completed: BTreeMap::new(),
            fin: None,
            syn_sent_at: None,
            srtt_ns: None,
            rttvar_ns: 0,
            flush_gen: 0,
            stale_acks: 0,
            tcp_segments_ignored: 0,
            blocks_retransmitted: 0,
            fillers_emitted: 0,
            spec_acks_sent: 0,
            emitted_positions: Vec::new(),
        })
    }

    pub fn config(&self) -> &NcConfig {
        &self.cfg
    }

    /// True when the machine is back in its initial state.
    pub fn is_reset(&self) -> bool {
        self.phase == TxPhase::Closed
            && self.fill.is_empty()
            && self.blocks_ready.is_empty()
            && self.outstanding.is_empty()
            && self.fin.is_none()
    }

    pub fn stale_acks(&self) -> u64 {
        self.stale_acks
    }

    pub fn blocks_retransmitted(&self) -> u64 {
        self.blocks_retransmitted
    }

    pub fn fillers_emitted(&self) -> u64 {
        self.fillers_emitted
    }

    pub fn spec_acks_sent(&self) -> u64 {
        self.spec_acks_sent
    }

    pub fn outstanding_blocks(&self) -> usize {
        self.outstanding.len()
    }

    /// Positions (2^8 mu + nu) of every distinct data segment emitted, in
    /// first-emission order; retransmissions do not repeat entries.
    pub fn emitted_positions(&self) -> &[u64] {
        &self.emitted_positions
    }

    pub fn srtt_ns(&self) -> u64 {
        self.srtt_ns.unwrap_or(DEFAULT_SRTT_NS).max(MIN_SRTT_NS)
    }

    /// Two round-trip times plus a variance margin, doubling per retry,
    /// capped at 64x the smoothed estimate. Acknowledgment latency swings
    /// with the bottleneck queue, so the margin matters.
    fn rto_ns(&self, retries: u64) -> u64 {
        let srtt = self.srtt_ns();
        let base = 2 * srtt + 4 * self.rttvar_ns;
        let capped_shift = retries.min(5);
        (base << capped_shift).min(64 * srtt.max(base / 2))
    }

    fn observe_rtt(&mut self, sample_ns: u64) {
        let sample = sample_ns.max(MIN_SRTT_NS);
        match self.srtt_ns {
            None => {
                self.srtt_ns = Some(sample);
                self.rttvar_ns = sample / 2;
            }
            Some(srtt) => {
                let diff = srtt.abs_diff(sample);
                self.rttvar_ns = self.rttvar_ns - self.rttvar_ns / 4 + diff / 4;
                self.srtt_ns = Some(srtt - srtt / 8 + sample / 8);
            }
        }
    }

    fn reset(&mut self) {
        self.phase = TxPhase::Closed;
        self.isn = 0;
        self.next_tcp_seq = 0;
        self.next_wire_seq = 0;
        self.fill.clear();
        self.blocks_ready.clear();
        self.next_block_index = 0;
        self.outstanding.clear();
        self.frontier = 0;
        self.completed.clear();
        self.fin = None;
        self.syn_sent_at = None;
        self.srtt_ns = None;
        self.rttvar_ns = 0;
        self.flush_gen += 1;
    }

    /// Segments handed down by the local TCP. Everything is consumed:
    /// connection management passes through, data is buffered and encoded,
    /// TCP acknowledgments never leave the host.
    pub fn on_tcp_segment(&mut self, seg: TcpSegmentModel, now: u64) -> Vec<TxOutput> {
        let mut out = Vec::new();
        if seg.flags.contains(TcpFlags::SYN) {
            self.handle_syn(seg, now, &mut out);
        } else if seg.flags.contains(TcpFlags::RST) {
            let (header, body) = strip_header(&seg);
            out.push(TxOutput::EmitNc(NcSegment { header, body }));
            self.reset();
        } else if seg.flags.contains(TcpFlags::FIN) {
            self.handle_fin(seg, now, &mut out);
        } else if seg.is_pure_ack() {
            // TCP acknowledgments are "transmitted" only between the layer
            // and TCP; the final handshake acknowledgment establishes us.
            if self.phase == TxPhase::SynSent {
                self.phase = TxPhase::Established;
            }
        } else if !seg.payload.is_empty() {
            self.handle_data(seg, now, &mut out);
        }
        out
    }

    fn handle_syn(&mut self, seg: TcpSegmentModel, now: u64, out: &mut Vec<TxOutput>) {
        if self.phase == TxPhase::Closed {
            self.phase = TxPhase::SynSent;
            self.isn = seg.seq_no;
            self.next_tcp_seq = seg.seq_no.wrapping_add(1);
            self.next_wire_seq = seg.seq_no.wrapping_add(1);
        }
        // SYN retransmissions pass through again unchanged.
        let rewritten = match tx_rewrite_mss(&seg, self.cfg.params) {
            Ok(s) => s,
            Err(NcError::NoMssOption) => seg,
            Err(_) => unreachable!("rewrite only fails on a missing option"),
        };
        let (header, body) = strip_header(&rewritten);
        self.syn_sent_at = Some(now);
        out.push(TxOutput::EmitNc(NcSegment { header, body }));
    }

    fn handle_fin(&mut self, seg: TcpSegmentModel, now: u64, out: &mut Vec<TxOutput>) {
        match self.phase {
            TxPhase::Established => {
                self.phase = TxPhase::Closing;
                let (header, body) = strip_header(&seg);
                self.fin = Some(FinState { tcp_seq: seg.seq_no, header, body, wire_seq: None });
                // Flush a partial block right away; the drain check emits
                // the FIN once nothing is left outstanding.
                if !self.fill.is_empty() {
                    self.pad_fill_with_fillers();
                    self.form_block();
                }
                self.try_emit(now, out);
                self.drain_check(out);
            }
            TxPhase::Closing => {
                // TCP retransmitting its FIN; re-emit ours if it is already
                // on the wire, otherwise the drain is still in progress.
                if let Some(fin) = &self.fin {
                    if let Some(wire_seq) = fin.wire_seq {
                        let mut header = fin.header.clone();
                        header.seq_no = wire_seq;
                        out.push(TxOutput::EmitNc(NcSegment { header, body: fin.body.clone() }));
                    }
                }
            }
            _ => {
                // No connection state: transparent passthrough.
                let (header, body) = strip_header(&seg);
                out.push(TxOutput::EmitNc(NcSegment { header, body }));
            }
        }
    }

    fn handle_data(&mut self, seg: TcpSegmentModel, now: u64, out: &mut Vec<TxOutput>) {
        if self.phase != TxPhase::Established {
            self.tcp_segments_ignored += 1;
            return;
        }
        if seg.seq_no != self.next_tcp_seq {
            // TCP-level retransmission of a segment the layer already
            // buffered or encoded; recovery is the layer's job now.
            self.tcp_segments_ignored += 1;
            return;
        }
        let (mut header, body) = strip_header(&seg);
        let framed = match frame_body(&body, self.cfg.params.segment_size()) {
            Ok(f) => f,
            Err(_) => {
                // Oversized despite the MSS rewrite; nothing sane to do
                // with it.
                self.tcp_segments_ignored += 1;
                return;
            }
        };
        self.next_tcp_seq = self.next_tcp_seq.wrapping_add(1);
        header.seq_no = self.next_wire_seq;
        self.next_wire_seq = self.next_wire_seq.wrapping_add(1);
        if self.fill.is_empty() {
            self.flush_gen += 1;
            out.push(TxOutput::ArmTimer {
                token: TxTimerToken { kind: TxTimerKind::Flush, block: 0, gen: self.flush_gen },
                delay_ns: 2 * self.srtt_ns(),
            });
        }
        self.fill.push(FillSegment { header, framed, tcp_seq: Some(seg.seq_no) });
        if self.fill.len() == self.cfg.params.k() as usize {
            self.form_block();
        }
        self.try_emit(now, out);
    }

    fn pad_fill_with_fillers(&mut self) {
        let k = self.cfg.params.k() as usize;
        let (src_port, dst_port) = self
            .fill
            .first()
            .map(|f| (f.header.src_port, f.header.dst_port))
            .expect("padding requires a non-empty fill");
        while self.fill.len() < k {
            let header = NcHeader {
                src_port,
                dst_port,
                seq_no: self.next_wire_seq,
                symbol_indicator: 0,
                flags: NcFlags::NONE,
                nc_options: vec![NC_OPT_FILLER],
            };
            self.next_wire_seq = self.next_wire_seq.wrapping_add(1);
            // A filler's coded form is all zeros: zero length prefix, zero
            // padding. The receiver recognizes it even when reconstructed.
            let framed = vec![0u8; self.cfg.params.segment_size()];
            self.fill.push(FillSegment { header, framed, tcp_seq: None });
            self.fillers_emitted += 1;
        }
    }

    fn form_block(&mut self) {
        let k = self.cfg.params.k() as usize;
        let n = self.cfg.params.n() as usize;
        debug_assert_eq!(self.fill.len(), k);
        let info: Vec<Vec<u8>> = self.fill.iter().map(|f| f.framed.clone()).collect();
        let block = SegmentBlock::new(self.cfg.params, info).expect("fill matches code geometry");
        let codeword = self.codec.encode(&block).expect("encode of a well-formed block");
        let last_tcp_seq = self
            .fill
            .iter()
            .filter_map(|f| f.tcp_seq)
            .max()
            .expect("every block carries at least one real segment");
        let last_mu = self.fill.last().expect("fill is full").header.seq_no;
        let (src_port, dst_port) =
            (self.fill[0].header.src_port, self.fill[0].header.dst_port);

        let mut segments = Vec::with_capacity(n);
        for f in self.fill.drain(..) {
            segments.push(NcSegment { header: f.header, body: f.framed });
        }
        for r in 1..=(n - k) {
            // Redundancy segments share the k-th segment's sequence number
            // and are told apart by the symbol indicator.
            segments.push(NcSegment {
                header: NcHeader {
                    src_port,
                    dst_port,
                    seq_no: last_mu,
                    symbol_indicator: r as u8,
                    flags: NcFlags::NONE,
                    nc_options: Vec::new(),
                },
                body: codeword.segments()[k - 1 + r].clone(),
            });
        }
        let index = self.next_block_index;
        self.next_block_index += 1;
        self.blocks_ready.push_back(Block { index, segments, last_tcp_seq });
        self.flush_gen += 1; // any pending flush timer is now stale
    }

    fn try_emit(&mut self, now: u64, out: &mut Vec<TxOutput>) {
        while let Some(front) = self.blocks_ready.front() {
            let anchor =
                self.outstanding.keys().next().copied().unwrap_or(front.index);
            if front.index - anchor >= self.cfg.window as u64 {
                break;
            }
            let block = self.blocks_ready.pop_front().expect("front exists");
            for seg in &block.segments {
                self.emitted_positions
                    .push(position(seg.header.seq_no, seg.header.symbol_indicator));
                out.push(TxOutput::EmitNc(seg.clone()));
            }
            let index = block.index;
            self.outstanding.insert(
                index,
                Outstanding {
                    acked: PositionSet::new(self.cfg.params.n()),
                    block,
                    retries: 0,
                    last_emit_at: now,
                },
            );
            out.push(TxOutput::ArmTimer {
                token: TxTimerToken { kind: TxTimerKind::Retransmit, block: index, gen: 0 },
                delay_ns: self.rto_ns(0),
            });
        }
    }

    /// Emits the deferred FIN once every block has been speculatively
    /// acknowledged; by then the receiver provably holds all data.
    fn drain_check(&mut self, out: &mut Vec<TxOutput>) {
        if self.phase != TxPhase::Closing {
            return;
        }
        if !(self.fill.is_empty() && self.blocks_ready.is_empty() && self.outstanding.is_empty())
        {
            return;
        }
        if let Some(fin) = &mut self.fin {
            if fin.wire_seq.is_none() {
                let wire_seq = self.next_wire_seq;
                self.next_wire_seq = self.next_wire_seq.wrapping_add(1);
                fin.wire_seq = Some(wire_seq);
                let mut header = fin.header.clone();
                header.seq_no = wire_seq;
                out.push(TxOutput::EmitNc(NcSegment { header, body: fin.body.clone() }));
            }
        }
    }

    /// Segments arriving from the network: layer acknowledgments, plus the
    /// transparently forwarded reverse handshake/teardown segments.
    pub fn on_nc_segment(
        &mut self,
        seg: NcSegment,
        now: u64,
    ) -> Result<Vec<TxOutput>, NcError> {
        let mut out = Vec::new();
        let h = seg.header.clone();
        if seg.is_ack() {
            self.handle_nc_ack(h.seq_no, h.symbol_indicator, now, &mut out)?;
        } else if h.flags.contains(NcFlags::SYN) {
            // SYN-ACK passing back through; also our first RTT sample.
            if let Some(sent) = self.syn_sent_at.take() {
                self.observe_rtt(now - sent);
            }
            out.push(TxOutput::TcpDeliver(restore_header(&h, &seg.body)?));
        } else if h.flags.contains(NcFlags::RST) {
            out.push(TxOutput::TcpDeliver(restore_header(&h, &seg.body)?));
            self.reset();
        } else if h.flags.contains(NcFlags::FIN) {
            // Half duplex: a reverse FIN only appears outside the coded
            // data flow; hand it up untouched.
            out.push(TxOutput::TcpDeliver(restore_header(&h, &seg.body)?));
        }
        // Plain data segments do not arrive at a transmitter.
        Ok(out)
    }

    fn handle_nc_ack(
        &mut self,
        mu: u32,
        nu: u8,
        now: u64,
        out: &mut Vec<TxOutput>,
    ) -> Result<(), NcError> {
        // Acknowledgment of the deferred FIN finishes the teardown.
        if let Some(fin) = &self.fin {
            if fin.wire_seq == Some(mu) && nu == 0 {
                let fin_seq = fin.tcp_seq;
                out.push(TxOutput::TcpDeliver(TcpSegmentModel::pure_ack(
                    0,
                    0,
                    0,
                    fin_seq.wrapping_add(1),
                )));
                self.reset();
                return Ok(());
            }
        }
        // Acknowledgment of the handshake SYN: only an RTT sample.
        if self.phase != TxPhase::Closed && mu == self.isn && nu == 0 {
            if let Some(sent) = self.syn_sent_at.take() {
                self.observe_rtt(now - sent);
            }
            return Ok(());
        }
        let base = self.isn.wrapping_add(1);
        let k = self.cfg.params.k();
        let n = self.cfg.params.n();
        let offset = mu.wrapping_sub(base);
        if self.phase == TxPhase::Closed || mu.wrapping_sub(base) >= self.next_wire_seq.wrapping_sub(base) {
            self.stale_acks += 1;
            return Err(NcError::StaleAck { mu, nu });
        }
        let index = (offset / k) as u64;
        let column = offset % k;
        let pos = if nu == 0 {
            column
        } else {
            if column != k - 1 || nu as u32 > n - k {
                self.stale_acks += 1;
                return Err(NcError::StaleAck { mu, nu });
            }
            k - 1 + nu as u32
        };
        let Some(o) = self.outstanding.get_mut(&index) else {
            self.stale_acks += 1;
            return Err(NcError::StaleAck { mu, nu });
        };
        if !o.acked.insert(pos) {
            // Same position acknowledged twice: counted once.
            return Ok(());
        }
        let sample = now.saturating_sub(o.last_emit_at);
        let completed = o.acked.count >= self.cfg.spec_threshold;
        self.observe_rtt(sample);
        if completed {
            let o = self.outstanding.remove(&index).expect("present");
            self.completed.insert(index, o.block.last_tcp_seq);
            let mut ack_through = None;
            while let Some(seq) = self.completed.remove(&self.frontier) {
                self.frontier += 1;
                ack_through = Some(seq);
            }
            if let Some(seq) = ack_through {
                // One cumulative speculative acknowledgment; never a
                // duplicate, so TCP's duplicate-ACK machinery stays quiet.
                self.spec_acks_sent += 1;
                out.push(TxOutput::TcpDeliver(TcpSegmentModel::pure_ack(
                    0,
                    0,
                    0,
                    seq.wrapping_add(1),
                )));
            }
            self.try_emit(now, out);
            self.drain_check(out);
        }
        Ok(())
    }

    /// Timer callbacks. Stale tokens (superseded generation, block no
    /// longer outstanding) are ignored.
    pub fn on_timer(&mut self, token: TxTimerToken, now: u64) -> Vec<TxOutput> {
        let mut out = Vec::new();
        match token.kind {
            TxTimerKind::Retransmit => {
                if let Some(o) = self.outstanding.get_mut(&token.block) {
                    if o.retries == token.gen {
                        o.retries += 1;
                        o.last_emit_at = now;
                        self.blocks_retransmitted += 1;
                        for seg in &o.block.segments {
                            out.push(TxOutput::EmitNc(seg.clone()));
                        }
                        let retries = o.retries;
                        out.push(TxOutput::ArmTimer {
                            token: TxTimerToken {
                                kind: TxTimerKind::Retransmit,
                                block: token.block,
                                gen: retries,
                            },
                            delay_ns: self.rto_ns(retries),
                        });
                    }
                }
            }
            TxTimerKind::Flush => {
                if token.gen == self.flush_gen && !self.fill.is_empty() {
                    self.pad_fill_with_fillers();
                    self.form_block();
                    self.try_emit(now, &mut out);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodeParams;

    fn config(n: u32, k: u32) -> NcConfig {
        NcConfig::new(CodeParams::new(n, k, 64).unwrap()).unwrap()
    }

    fn established(cfg: NcConfig) -> NcTransmitter {
        let mut tx = NcTransmitter::new(cfg).unwrap();
        let syn = TcpSegmentModel::syn(10, 20, 0, 40);
        let outs = tx.on_tcp_segment(syn, 0);
        assert_eq!(outs.len(), 1);
        tx.on_tcp_segment(TcpSegmentModel::pure_ack(10, 20, 1, 1), 1_000_000);
        tx
    }

    fn data_seg(seq: u32) -> TcpSegmentModel {
        TcpSegmentModel::data(10, 20, seq, vec![seq as u8; 16])
    }

    fn emitted(outs: &[TxOutput]) -> Vec<&NcSegment> {
        outs.iter()
            .filter_map(|o| match o {
                TxOutput::EmitNc(s) => Some(s),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn buffers_until_k_then_emits_n() {
        let mut tx = established(config(6, 3));
        for seq in 1..3u32 {
            let outs = tx.on_tcp_segment(data_seg(seq), 10);
            assert!(emitted(&outs).is_empty(), "k-1 segments stay buffered");
        }
        let outs = tx.on_tcp_segment(data_seg(3), 11);
        let segs = emitted(&outs);
        assert_eq!(segs.len(), 6);
        // Symbol indicator sequence [0,0,0,1,2,3]; redundancy shares the
        // k-th segment's sequence number.
        let nus: Vec<u8> = segs.iter().map(|s| s.header.symbol_indicator).collect();
        assert_eq!(nus, vec![0, 0, 0, 1, 2, 3]);
        assert_eq!(segs[0].header.seq_no, 1);
        assert_eq!(segs[2].header.seq_no, 3);
        assert!(segs[3..].iter().all(|s| s.header.seq_no == 3));
        // A retransmit timer was armed for the block.
        assert!(outs.iter().any(|o| matches!(
            o,
            TxOutput::ArmTimer { token: TxTimerToken { kind: TxTimerKind::Retransmit, .. }, .. }
        )));
    }

    #[test]
    fn speculative_ack_fires_at_threshold() {
        let mut tx = established(config(6, 3));
        for seq in 1..=3u32 {
            tx.on_tcp_segment(data_seg(seq), 10);
        }
        // Two distinct acknowledgments: nothing yet (s = k = 3).
        for (mu, nu) in [(1u32, 0u8), (3, 2)] {
            let outs = tx.on_nc_segment(NcSegment::ack(20, 10, mu, nu), 50).unwrap();
            assert!(outs.iter().all(|o| !matches!(o, TxOutput::TcpDeliver(_))));
        }
        // Duplicate of an already-counted position: counted once.
        let outs = tx.on_nc_segment(NcSegment::ack(20, 10, 1, 0), 60).unwrap();
        assert!(outs.is_empty());
        // Third distinct acknowledgment completes the block.
        let outs = tx.on_nc_segment(NcSegment::ack(20, 10, 2, 0), 70).unwrap();
        let acks: Vec<_> = outs
            .iter()
            .filter_map(|o| match o {
                TxOutput::TcpDeliver(s) => Some(s),
                _ => None,
            })
            .collect();
        assert_eq!(acks.len(), 1);
        assert!(acks[0].is_pure_ack());
        assert_eq!(acks[0].ack_no, 4, "cumulative over seq 1..=3");
        assert_eq!(tx.outstanding_blocks(), 0);
    }

    #[test]
    fn stale_ack_leaves_state_unchanged() {
        let mut tx = established(config(6, 3));
        for seq in 1..=3u32 {
            tx.on_tcp_segment(data_seg(seq), 10);
        }
        for (mu, nu) in [(1u32, 0u8), (2, 0), (3, 0)] {
            let _ = tx.on_nc_segment(NcSegment::ack(20, 10, mu, nu), 50);
        }
        assert_eq!(tx.outstanding_blocks(), 0);
        let before = tx.stale_acks();
        // Block already cleared: stale.
        let err = tx.on_nc_segment(NcSegment::ack(20, 10, 3, 1), 80).unwrap_err();
        assert_eq!(err, NcError::StaleAck { mu: 3, nu: 1 });
        assert_eq!(tx.stale_acks(), before + 1);
        assert_eq!(tx.outstanding_blocks(), 0);
    }

    #[test]
    fn timeout_reemits_block_and_doubles_timer() {
        let mut tx = established(config(6, 3));
        for seq in 1..=3u32 {
            tx.on_tcp_segment(data_seg(seq), 10);
        }
        let srtt = tx.srtt_ns();
        let token = TxTimerToken { kind: TxTimerKind::Retransmit, block: 0, gen: 0 };
        let outs = tx.on_timer(token, 1_000_000_000);
        assert_eq!(emitted(&outs).len(), 6, "whole block re-emitted");
        let TxOutput::ArmTimer { token: t1, delay_ns: d1 } =
            outs.last().unwrap().clone()
        else {
            panic!("timer re-armed");
        };
        assert_eq!(d1, 4 * srtt, "doubled from the 2x srtt initial value");
        // Second timeout: 4x the initial timer value.
        let outs = tx.on_timer(t1, 2_000_000_000);
        let TxOutput::ArmTimer { delay_ns: d2, .. } = outs.last().unwrap() else {
            panic!("timer re-armed");
        };
        assert_eq!(*d2, 8 * srtt);
        // Stale generation: no output.
        assert!(tx.on_timer(token, 3_000_000_000).is_empty());
        assert_eq!(tx.blocks_retransmitted(), 2);
    }

    #[test]
    fn timeout_after_completion_is_silent() {
        let mut tx = established(config(6, 3));
        for seq in 1..=3u32 {
            tx.on_tcp_segment(data_seg(seq), 10);
        }
        for mu in 1..=3u32 {
            let _ = tx.on_nc_segment(NcSegment::ack(20, 10, mu, 0), 50);
        }
        let token = TxTimerToken { kind: TxTimerKind::Retransmit, block: 0, gen: 0 };
        assert!(tx.on_timer(token, 1_000_000_000).is_empty());
    }

    #[test]
    fn rst_forwards_and_resets() {
        let mut tx = established(config(6, 3));
        tx.on_tcp_segment(data_seg(1), 10);
        assert!(!tx.is_reset());
        let mut rst = TcpSegmentModel::data(10, 20, 2, Vec::new());
        rst.flags = TcpFlags::RST;
        let outs = tx.on_tcp_segment(rst, 20);
        let segs = emitted(&outs);
        assert_eq!(segs.len(), 1);
        assert!(segs[0].header.flags.contains(NcFlags::RST));
        assert!(tx.is_reset());
    }

    #[test]
    fn window_holds_back_blocks() {
        let mut cfg = config(4, 2);
        cfg.window = 2;
        cfg.reorder_pool = 2;
        let mut tx = established(cfg);
        // Three full blocks of data; only two may be outstanding.
        let mut wire = Vec::new();
        for seq in 1..=6u32 {
            let outs = tx.on_tcp_segment(data_seg(seq), 10);
            wire.extend(emitted(&outs).into_iter().cloned());
        }
        assert_eq!(wire.len(), 8, "blocks 0 and 1 on the wire, block 2 held");
        assert_eq!(tx.outstanding_blocks(), 2);
        // Completing block 0 slides the window and releases block 2.
        let mut outs = Vec::new();
        for mu in [1u32, 2] {
            outs.extend(tx.on_nc_segment(NcSegment::ack(20, 10, mu, 0), 50).unwrap());
        }
        assert_eq!(emitted(&outs).len(), 4);
        assert_eq!(tx.outstanding_blocks(), 2);
    }

    #[test]
    fn out_of_order_completion_acks_cumulatively() {
        let mut tx = established(config(4, 2));
        for seq in 1..=4u32 {
            tx.on_tcp_segment(data_seg(seq), 10);
        }
        assert_eq!(tx.outstanding_blocks(), 2);
        // Complete block 1 first: no TCP acknowledgment yet.
        let mut outs = Vec::new();
        for mu in [3u32, 4] {
            outs.extend(tx.on_nc_segment(NcSegment::ack(20, 10, mu, 0), 50).unwrap());
        }
        assert!(outs.iter().all(|o| !matches!(o, TxOutput::TcpDeliver(_))));
        // Completing block 0 acknowledges through both blocks at once.
        for mu in [1u32, 2] {
            outs.extend(tx.on_nc_segment(NcSegment::ack(20, 10, mu, 0), 60).unwrap());
        }
        let acks: Vec<_> = outs
            .iter()
            .filter_map(|o| match o {
                TxOutput::TcpDeliver(s) => Some(s.ack_no),
                _ => None,
            })
            .collect();
        assert_eq!(acks, vec![5]);
    }

    #[test]
    fn flush_timer_pads_partial_block() {
        let mut tx = established(config(6, 3));
        let outs = tx.on_tcp_segment(data_seg(1), 10);
        let flush = outs
            .iter()
            .find_map(|o| match o {
                TxOutput::ArmTimer { token: t @ TxTimerToken { kind: TxTimerKind::Flush, .. }, .. } => {
                    Some(*t)
                }
                _ => None,
            })
            .expect("flush timer armed on first buffered segment");
        let outs = tx.on_timer(flush, 500_000_000);
        let segs = emitted(&outs);
        assert_eq!(segs.len(), 6, "padded block goes out whole");
        assert_eq!(tx.fillers_emitted(), 2);
        // Fillers carry the filler flag in their layer options.
        assert_eq!(segs[1].header.nc_options, vec![NC_OPT_FILLER]);
        assert_eq!(segs[2].header.nc_options, vec![NC_OPT_FILLER]);
        // A stale flush token does nothing.
        assert!(tx.on_timer(flush, 600_000_000).is_empty());
    }

    #[test]
    fn fin_waits_for_drain_then_resets_on_ack() {
        let mut tx = established(config(4, 2));
        tx.on_tcp_segment(data_seg(1), 10);
        tx.on_tcp_segment(data_seg(2), 10);
        // FIN while a block is outstanding: held back.
        let outs = tx.on_tcp_segment(TcpSegmentModel::fin(10, 20, 3, 0), 20);
        assert!(emitted(&outs).is_empty());
        // Completing the block releases the FIN.
        let mut outs = Vec::new();
        for mu in [1u32, 2] {
            outs.extend(tx.on_nc_segment(NcSegment::ack(20, 10, mu, 0), 30).unwrap());
        }
        let segs = emitted(&outs);
        assert_eq!(segs.len(), 1);
        assert!(segs[0].header.flags.contains(NcFlags::FIN));
        let fin_mu = segs[0].header.seq_no;
        assert_eq!(fin_mu, 3, "wire sequence continues after the data");
        assert!(!tx.is_reset());
        // The FIN's acknowledgment acknowledges TCP and resets the layer.
        let outs = tx.on_nc_segment(NcSegment::ack(20, 10, fin_mu, 0), 40).unwrap();
        let acks: Vec<_> = outs
            .iter()
            .filter_map(|o| match o {
                TxOutput::TcpDeliver(s) => Some(s.ack_no),
                _ => None,
            })
            .collect();
        assert_eq!(acks, vec![4]);
        assert!(tx.is_reset());
    }

    #[test]
    fn duplicate_tcp_segments_are_ignored() {
        let mut tx = established(config(6, 3));
        tx.on_tcp_segment(data_seg(1), 10);
        let outs = tx.on_tcp_segment(data_seg(1), 20);
        assert!(emitted(&outs).is_empty());
        assert_eq!(tx.tcp_segments_ignored, 1);
    }

    #[test]
    fn position_log_is_injective() {
        let mut tx = established(config(6, 3));
        for seq in 1..=30u32 {
            tx.on_tcp_segment(data_seg(seq), 10);
            // Complete every block immediately to keep the window open.
            if seq % 3 == 0 {
                for mu in (seq - 2)..=seq {
                    let _ = tx.on_nc_segment(NcSegment::ack(20, 10, mu, 0), 20);
                }
            }
        }
        let positions = tx.emitted_positions();
        assert_eq!(positions.len(), 60, "10 blocks of 6 segments");
        let mut sorted = positions.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), positions.len(), "no two segments share a position");
    }
}
