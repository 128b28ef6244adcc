//! Reno-style TCP endpoints: a congestion-controlled bulk source and a
//! reassembling sink.
//!
//! The model keeps the loss response that matters for the experiments
//! (slow start, congestion avoidance, fast retransmit on three duplicate
//! acknowledgments, timeout with exponential backoff) and drops everything
//! else: sequence numbers count segments, every data segment carries
//! exactly MSS bytes, delayed acknowledgments are disabled, and the
//! advertised window is a fixed 65535 bytes so the congestion window
//! dominates.

use crate::segment::{find_mss_option, TcpFlags, TcpSegmentModel};

/// Fixed advertised receive window in bytes.
pub const ADVERTISED_WINDOW: u32 = 65_535;

/// Initial congestion window in segments.
const INITIAL_CWND: f64 = 10.0;

/// Retransmission timeout bounds: classic 1 s floor, 64 s cap.
const MIN_RTO_NS: u64 = 1_000_000_000;
const MAX_RTO_NS: u64 = 64_000_000_000;

/// SYN retransmissions before the handshake is abandoned.
const MAX_SYN_RETRIES: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TcpOutput {
    /// Hand a segment down the stack.
    Send(TcpSegmentModel),
    /// Ask the scheduler for a timer callback after `delay_ns`.
    ArmTimer { token: TcpTimerToken, delay_ns: u64 },
    /// In-order application data (sink side).
    DeliverData { seq: u32, payload: Vec<u8> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TcpTimerToken {
    pub gen: u64,
}

/// Deterministic payload for a flow's data segment; both ends of a test can
/// regenerate the exact byte stream from (seed, seq).
pub fn payload_for(seed: u64, seq: u32, len: usize) -> Vec<u8> {
    let mut state = seed ^ (seq as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    (0..len)
        .map(|_| {
            // splitmix64 step, one byte per output
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            (z ^ (z >> 31)) as u8
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourcePhase {
    Closed,
    SynSent,
    Established,
    FinWait,
    Done,
    /// Handshake abandoned after the SYN retry budget.
    HandshakeTimeout,
}

#[derive(Debug, Clone)]
pub struct TcpSourceConfig {
    pub src_port: u16,
    pub dst_port: u16,
    /// MSS this side offers; the negotiated value is the minimum of both
    /// offers as seen after any rewrite by the coding layer.
    pub mss_offer: u16,
    pub isn: u32,
    pub payload_seed: u64,
    /// Number of MSS-sized segments to transfer; None keeps the source
    /// busy forever (bulk FTP).
    pub total_segments: Option<u64>,
}

/// Congestion-controlled sending endpoint.
pub struct TcpSource {
    cfg: TcpSourceConfig,
    phase: SourcePhase,
    mss: u16,
    cwnd: f64,
    ssthresh: f64,
    send_base: u32,
    /// Send cursor; rewound to the acknowledgment point on timeout so the
    /// whole unacknowledged window is resent (go-back-N recovery; payload
    /// regenerates deterministically).
    next_seq: u32,
    /// High-water mark of fresh sequence numbers.
    highest_sent: u32,
    dup_acks: u32,
    app_bytes: u64,
    srtt_ns: Option<u64>,
    rttvar_ns: u64,
    base_rto_ns: u64,
    /// Exponential backoff factor; doubles per timeout, clears on any
    /// acknowledgment of new data.
    backoff: u32,
    /// One segment timed at a time for RTT estimation; cleared when a
    /// retransmission would taint the sample.
    timing: Option<(u32, u64)>,
    timer_gen: u64,
    syn_sent_at: u64,
    syn_retries: u32,
    fin_seq: Option<u32>,
    // stats
    pub segments_sent: u64,
    pub retransmissions: u64,
    pub timeouts: u64,
    pub fast_retransmits: u64,
}

impl TcpSource {
    pub fn new(cfg: TcpSourceConfig) -> Self {
        let app_bytes = cfg
            .total_segments
            .map(|n| n * cfg.mss_offer as u64)
            .unwrap_or(0);
        Self {
            phase: SourcePhase::Closed,
            mss: cfg.mss_offer,
            cwnd: INITIAL_CWND,
            ssthresh: 1e9,
            send_base: cfg.isn.wrapping_add(1),
            next_seq: cfg.isn.wrapping_add(1),
            highest_sent: cfg.isn.wrapping_add(1),
            dup_acks: 0,
            app_bytes,
            srtt_ns: None,
            rttvar_ns: 0,
            base_rto_ns: MIN_RTO_NS,
            backoff: 1,
            timing: None,
            timer_gen: 0,
            syn_sent_at: 0,
            syn_retries: 0,
            fin_seq: None,
            segments_sent: 0,
            retransmissions: 0,
            timeouts: 0,
            fast_retransmits: 0,
            cfg,
        }
    }

    pub fn phase(&self) -> SourcePhase {
        self.phase
    }

    pub fn cwnd(&self) -> f64 {
        self.cwnd
    }

    pub fn ssthresh(&self) -> f64 {
        self.ssthresh
    }

    pub fn rto_ns(&self) -> u64 {
        self.base_rto_ns
            .saturating_mul(self.backoff as u64)
            .clamp(MIN_RTO_NS, MAX_RTO_NS)
    }

    pub fn mss(&self) -> u16 {
        self.mss
    }

    pub fn in_flight(&self) -> u32 {
        self.next_seq.wrapping_sub(self.send_base)
    }

    pub fn is_done(&self) -> bool {
        self.phase == SourcePhase::Done
    }

    /// Opens the connection: emits the SYN and arms the handshake timer.
    pub fn start(&mut self, now: u64) -> Vec<TcpOutput> {
        assert_eq!(self.phase, SourcePhase::Closed, "start on a fresh endpoint");
        self.phase = SourcePhase::SynSent;
        self.syn_sent_at = now;
        let syn =
            TcpSegmentModel::syn(self.cfg.src_port, self.cfg.dst_port, self.cfg.isn, self.cfg.mss_offer);
        vec![TcpOutput::Send(syn), self.arm_timer()]
    }

    /// Queues application bytes; full-MSS segments go out while the window
    /// allows.
    pub fn enqueue_app_bytes(&mut self, bytes: u64, now: u64) -> Vec<TcpOutput> {
        self.app_bytes = self.app_bytes.saturating_add(bytes);
        let mut out = Vec::new();
        if self.phase == SourcePhase::Established {
            self.pump(now, &mut out);
        }
        out
    }

    fn arm_timer(&mut self) -> TcpOutput {
        self.timer_gen += 1;
        TcpOutput::ArmTimer {
            token: TcpTimerToken { gen: self.timer_gen },
            delay_ns: self.rto_ns(),
        }
    }

    fn effective_window(&self) -> u32 {
        let rwnd_segments = (ADVERTISED_WINDOW / self.mss.max(1) as u32).max(1);
        (self.cwnd as u32).min(rwnd_segments).max(1)
    }

    fn segments_available(&self) -> u64 {
        self.app_bytes / self.mss.max(1) as u64
    }

    fn make_data(&self, seq: u32) -> TcpSegmentModel {
        TcpSegmentModel::data(
            self.cfg.src_port,
            self.cfg.dst_port,
            seq,
            payload_for(self.cfg.payload_seed, seq, self.mss as usize),
        )
    }

    fn make_segment(&self, seq: u32) -> TcpSegmentModel {
        if Some(seq) == self.fin_seq {
            TcpSegmentModel::fin(self.cfg.src_port, self.cfg.dst_port, seq, 0)
        } else {
            self.make_data(seq)
        }
    }

    fn pump(&mut self, now: u64, out: &mut Vec<TcpOutput>) {
        if !matches!(self.phase, SourcePhase::Established | SourcePhase::FinWait) {
            return;
        }
        let window = self.effective_window();
        let was_idle = self.in_flight() == 0;
        let mut sent = false;
        while self.in_flight() < window {
            let seq = self.next_seq;
            if seq != self.highest_sent {
                // Behind the high-water mark: window-driven resend of a
                // segment presumed lost (go-back-N after a timeout).
                self.next_seq = self.next_seq.wrapping_add(1);
                self.retransmissions += 1;
                out.push(TcpOutput::Send(self.make_segment(seq)));
                sent = true;
            } else if self.segments_available() > 0 {
                self.next_seq = self.next_seq.wrapping_add(1);
                self.highest_sent = self.next_seq;
                self.app_bytes -= self.mss as u64;
                if self.timing.is_none() {
                    self.timing = Some((seq, now));
                }
                self.segments_sent += 1;
                out.push(TcpOutput::Send(self.make_data(seq)));
                sent = true;
            } else {
                break;
            }
        }
        // A bounded transfer closes once everything is sent and
        // acknowledged; app-driven sources never initiate teardown.
        if self.cfg.total_segments.is_some()
            && self.segments_available() == 0
            && self.in_flight() == 0
            && self.fin_seq.is_none()
        {
            let seq = self.next_seq;
            self.next_seq = self.next_seq.wrapping_add(1);
            self.highest_sent = self.next_seq;
            self.fin_seq = Some(seq);
            self.phase = SourcePhase::FinWait;
            out.push(TcpOutput::Send(TcpSegmentModel::fin(
                self.cfg.src_port,
                self.cfg.dst_port,
                seq,
                0,
            )));
            out.push(self.arm_timer());
            return;
        }
        if sent && was_idle {
            out.push(self.arm_timer());
        }
    }

    /// Segment from the layer below (network or coding layer).
    pub fn on_segment(&mut self, seg: TcpSegmentModel, now: u64) -> Vec<TcpOutput> {
        let mut out = Vec::new();
        if seg.flags.contains(TcpFlags::SYN) && seg.flags.contains(TcpFlags::ACK) {
            if self.phase == SourcePhase::SynSent {
                let peer_offer = find_mss_option(&seg.options).unwrap_or(self.cfg.mss_offer);
                self.mss = self.cfg.mss_offer.min(peer_offer);
                if let Some(total) = self.cfg.total_segments {
                    // Re-derive the byte budget under the negotiated MSS.
                    self.app_bytes = total * self.mss as u64;
                }
                let sample = now.saturating_sub(self.syn_sent_at);
                self.observe_rtt(sample);
                self.phase = SourcePhase::Established;
                out.push(TcpOutput::Send(TcpSegmentModel::pure_ack(
                    self.cfg.src_port,
                    self.cfg.dst_port,
                    self.cfg.isn.wrapping_add(1),
                    seg.seq_no.wrapping_add(1),
                )));
                self.pump(now, &mut out);
            }
            return out;
        }
        if seg.flags.contains(TcpFlags::ACK) {
            self.on_ack(seg.ack_no, now, &mut out);
        }
        out
    }

    fn observe_rtt(&mut self, sample_ns: u64) {
        let sample = sample_ns.max(1);
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
        let srtt = self.srtt_ns.unwrap();
        self.base_rto_ns =
            (srtt + (4 * self.rttvar_ns).max(1_000_000)).clamp(MIN_RTO_NS, MAX_RTO_NS);
    }

    fn on_ack(&mut self, ack_no: u32, now: u64, out: &mut Vec<TcpOutput>) {
        if !matches!(self.phase, SourcePhase::Established | SourcePhase::FinWait) {
            return;
        }
        let newly = ack_no.wrapping_sub(self.send_base);
        let unacked = self.highest_sent.wrapping_sub(self.send_base);
        if newly == 0 || newly > unacked {
            // Duplicate acknowledgment: same value, data still outstanding.
            if newly == 0 && unacked > 0 {
                self.dup_acks += 1;
                if self.dup_acks == 3 {
                    // Fast retransmit with simplified recovery.
                    self.fast_retransmits += 1;
                    self.retransmissions += 1;
                    self.ssthresh = (self.cwnd / 2.0).max(2.0);
                    self.cwnd = self.ssthresh;
                    self.timing = None;
                    out.push(self.retransmit_base());
                    out.push(self.arm_timer());
                }
            }
            return;
        }
        // New acknowledgment: backoff clears, the cursor never lags the
        // acknowledged prefix.
        self.dup_acks = 0;
        self.backoff = 1;
        if let Some((seq, sent_at)) = self.timing {
            if ack_no.wrapping_sub(self.send_base) > seq.wrapping_sub(self.send_base) {
                self.timing = None;
                self.observe_rtt(now.saturating_sub(sent_at));
            }
        }
        self.send_base = ack_no;
        if self.next_seq.wrapping_sub(ack_no) > self.highest_sent.wrapping_sub(ack_no) {
            self.next_seq = ack_no;
        }
        if self.cwnd < self.ssthresh {
            self.cwnd += 1.0; // slow start
        } else {
            self.cwnd += 1.0 / self.cwnd; // congestion avoidance
        }
        if let Some(fin_seq) = self.fin_seq {
            if ack_no.wrapping_sub(fin_seq) == 1 {
                self.phase = SourcePhase::Done;
                self.timer_gen += 1; // disarm
                return;
            }
        }
        if self.send_base != self.highest_sent {
            out.push(self.arm_timer());
        } else {
            self.timer_gen += 1; // disarm
        }
        self.pump(now, out);
    }

    fn retransmit_base(&mut self) -> TcpOutput {
        if Some(self.send_base) == self.fin_seq {
            TcpOutput::Send(TcpSegmentModel::fin(
                self.cfg.src_port,
                self.cfg.dst_port,
                self.send_base,
                0,
            ))
        } else {
            TcpOutput::Send(self.make_data(self.send_base))
        }
    }

    /// Retransmission timer expiry.
    pub fn on_timer(&mut self, token: TcpTimerToken, now: u64) -> Vec<TcpOutput> {
        let mut out = Vec::new();
        if token.gen != self.timer_gen {
            return out;
        }
        match self.phase {
            SourcePhase::SynSent => {
                self.syn_retries += 1;
                if self.syn_retries > MAX_SYN_RETRIES {
                    self.phase = SourcePhase::HandshakeTimeout;
                    return out;
                }
                self.backoff = self.backoff.saturating_mul(2);
                self.syn_sent_at = now;
                out.push(TcpOutput::Send(TcpSegmentModel::syn(
                    self.cfg.src_port,
                    self.cfg.dst_port,
                    self.cfg.isn,
                    self.cfg.mss_offer,
                )));
                out.push(self.arm_timer());
            }
            SourcePhase::Established | SourcePhase::FinWait => {
                if self.send_base == self.highest_sent {
                    return out; // nothing outstanding
                }
                self.timeouts += 1;
                self.retransmissions += 1;
                self.ssthresh = (self.cwnd / 2.0).max(2.0);
                self.cwnd = 1.0;
                self.dup_acks = 0;
                self.timing = None;
                self.backoff = self.backoff.saturating_mul(2);
                // Retransmit the base segment now; the rewound cursor
                // resends the rest of the window as acknowledgments return.
                out.push(self.retransmit_base());
                self.next_seq = self.send_base.wrapping_add(1);
                out.push(self.arm_timer());
            }
            _ => {}
        }
        out
    }

    #[cfg(test)]
    pub(crate) fn force_window_for_test(&mut self, cwnd: f64, ssthresh: f64) {
        self.cwnd = cwnd;
        self.ssthresh = ssthresh;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinkPhase {
    Closed,
    SynReceived,
    Established,
    Done,
}

/// Reassembling receive endpoint. Acknowledges every arriving segment
/// (delayed acknowledgments disabled) and delivers payload in order.
pub struct TcpSink {
    src_port: u16,
    dst_port: u16,
    isn: u32,
    mss_offer: u16,
    phase: SinkPhase,
    peer_isn: u32,
    rcv_next: u32,
    reorder: std::collections::BTreeMap<u32, Vec<u8>>,
    fin_seq: Option<u32>,
    // stats
    pub delivered_segments: u64,
    pub delivered_bytes: u64,
    /// Arrivals of segments already delivered or already buffered.
    pub duplicate_arrivals: u64,
}

impl TcpSink {
    pub fn new(src_port: u16, dst_port: u16, isn: u32, mss_offer: u16) -> Self {
        Self {
            src_port,
            dst_port,
            isn,
            mss_offer,
            phase: SinkPhase::Closed,
            peer_isn: 0,
            rcv_next: 0,
            reorder: std::collections::BTreeMap::new(),
            fin_seq: None,
            delivered_segments: 0,
            delivered_bytes: 0,
            duplicate_arrivals: 0,
        }
    }

    pub fn phase(&self) -> SinkPhase {
        self.phase
    }

    pub fn is_done(&self) -> bool {
        self.phase == SinkPhase::Done
    }

    fn cumulative_ack(&self) -> TcpSegmentModel {
        TcpSegmentModel::pure_ack(
            self.src_port,
            self.dst_port,
            self.isn.wrapping_add(1),
            self.rcv_next,
        )
    }

    pub fn on_segment(&mut self, seg: TcpSegmentModel, _now: u64) -> Vec<TcpOutput> {
        let mut out = Vec::new();
        if seg.flags.contains(TcpFlags::SYN) {
            self.peer_isn = seg.seq_no;
            self.rcv_next = seg.seq_no.wrapping_add(1);
            self.phase = SinkPhase::SynReceived;
            let mut syn_ack = TcpSegmentModel::syn(self.src_port, self.dst_port, self.isn, self.mss_offer);
            syn_ack.flags = TcpFlags::SYN.with(TcpFlags::ACK);
            syn_ack.ack_no = self.rcv_next;
            out.push(TcpOutput::Send(syn_ack));
            return out;
        }
        if seg.flags.contains(TcpFlags::RST) {
            self.phase = SinkPhase::Closed;
            self.reorder.clear();
            return out;
        }
        if seg.flags.contains(TcpFlags::FIN) {
            // The final handshake ACK may never arrive through the coding
            // layer; any in-window activity establishes.
            if self.phase == SinkPhase::SynReceived {
                self.phase = SinkPhase::Established;
            }
            self.fin_seq = Some(seg.seq_no);
            self.drain(&mut out);
            out.push(TcpOutput::Send(self.cumulative_ack()));
            return out;
        }
        if !seg.payload.is_empty() {
            if self.phase == SinkPhase::SynReceived {
                self.phase = SinkPhase::Established;
            }
            if self.phase != SinkPhase::Established {
                return out;
            }
            let offset = seg.seq_no.wrapping_sub(self.rcv_next);
            if offset >= u32::MAX / 2 || self.reorder.contains_key(&seg.seq_no) {
                // Below the window or already buffered.
                self.duplicate_arrivals += 1;
            } else {
                self.reorder.insert(seg.seq_no, seg.payload);
                self.drain(&mut out);
            }
            out.push(TcpOutput::Send(self.cumulative_ack()));
            return out;
        }
        if seg.is_pure_ack() && self.phase == SinkPhase::SynReceived {
            self.phase = SinkPhase::Established;
        }
        out
    }

    fn drain(&mut self, out: &mut Vec<TcpOutput>) {
        while let Some(payload) = self.reorder.remove(&self.rcv_next) {
            let seq = self.rcv_next;
            self.rcv_next = self.rcv_next.wrapping_add(1);
            self.delivered_segments += 1;
            self.delivered_bytes += payload.len() as u64;
            out.push(TcpOutput::DeliverData { seq, payload });
        }
        if self.fin_seq == Some(self.rcv_next) {
            self.rcv_next = self.rcv_next.wrapping_add(1);
            self.phase = SinkPhase::Done;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn established_source(total: Option<u64>) -> (TcpSource, Vec<TcpOutput>) {
        let mut src = TcpSource::new(TcpSourceConfig {
            src_port: 10,
            dst_port: 20,
            mss_offer: 100,
            isn: 0,
            payload_seed: 42,
            total_segments: total,
        });
        let outs = src.start(0);
        assert!(matches!(&outs[0], TcpOutput::Send(s) if s.flags.contains(TcpFlags::SYN)));
        let mut syn_ack = TcpSegmentModel::syn(20, 10, 0, 100);
        syn_ack.flags = TcpFlags::SYN.with(TcpFlags::ACK);
        syn_ack.ack_no = 1;
        let outs = src.on_segment(syn_ack, 80_000_000);
        (src, outs)
    }

    /// Sent segments that carry payload or FIN; handshake acknowledgments
    /// are not part of the data flow.
    fn sent(outs: &[TcpOutput]) -> Vec<&TcpSegmentModel> {
        outs.iter()
            .filter_map(|o| match o {
                TcpOutput::Send(s) if !s.is_pure_ack() && !s.flags.contains(TcpFlags::SYN) => {
                    Some(s)
                }
                _ => None,
            })
            .collect()
    }

    #[test]
    fn window_limits_emission() {
        let (mut src, _) = established_source(None);
        src.force_window_for_test(2.0, 1e9);
        // Queue 10 MSS worth of bytes: only cwnd = 2 segments go out.
        let outs = src.enqueue_app_bytes(1000, 1_000_000);
        let segs = sent(&outs);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].seq_no, 1);
        assert_eq!(segs[0].payload.len(), 100);
        // Window full: nothing further even with data queued.
        let outs = src.enqueue_app_bytes(0, 2_000_000);
        assert!(sent(&outs).is_empty());
        // An acknowledgment sliding the window by one releases exactly one
        // more segment (avoidance growth stays below the next integer).
        src.force_window_for_test(2.0, 2.0);
        let outs = src.on_segment(TcpSegmentModel::pure_ack(20, 10, 1, 2), 3_000_000);
        let segs = sent(&outs);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].seq_no, 3);
    }

    #[test]
    fn empty_queue_emits_nothing() {
        let (mut src, outs) = established_source(None);
        assert!(sent(&outs).is_empty(), "no application data yet");
        // A partial segment's worth of bytes stays queued.
        let outs = src.enqueue_app_bytes(99, 1_000);
        assert!(sent(&outs).is_empty());
        // Topping it up to one full MSS releases one segment.
        let outs = src.enqueue_app_bytes(1, 2_000);
        assert_eq!(sent(&outs).len(), 1);
    }

    #[test]
    fn slow_start_and_congestion_avoidance_growth() {
        let (mut src, _) = established_source(None);
        src.enqueue_app_bytes(100 * 100, 0);
        src.force_window_for_test(4.0, 1e9);
        src.on_segment(TcpSegmentModel::pure_ack(20, 10, 1, 2), 1000);
        assert_eq!(src.cwnd(), 5.0, "slow start adds one per ACK");
        src.force_window_for_test(4.0, 2.0);
        src.on_segment(TcpSegmentModel::pure_ack(20, 10, 1, 3), 2000);
        assert_eq!(src.cwnd(), 4.25, "avoidance adds 1/cwnd per ACK");
    }

    #[test]
    fn three_duplicate_acks_trigger_one_fast_retransmit() {
        let (mut src, outs) = established_source(None);
        assert!(sent(&outs).is_empty());
        src.force_window_for_test(8.0, 1e9);
        let outs = src.enqueue_app_bytes(10_000, 0);
        assert_eq!(sent(&outs).len(), 8);
        // Acknowledge nothing new three times.
        let dup = TcpSegmentModel::pure_ack(20, 10, 1, 1);
        assert!(sent(&src.on_segment(dup.clone(), 10)).is_empty());
        assert!(sent(&src.on_segment(dup.clone(), 20)).is_empty());
        let outs = src.on_segment(dup.clone(), 30);
        let segs = sent(&outs);
        assert_eq!(segs.len(), 1, "third duplicate retransmits the base segment");
        assert_eq!(segs[0].seq_no, 1);
        assert_eq!(src.ssthresh(), 4.0);
        assert_eq!(src.cwnd(), 4.0);
        // A fourth duplicate does nothing further.
        assert!(sent(&src.on_segment(dup, 40)).is_empty());
    }

    #[test]
    fn timeout_collapses_window_and_backs_off() {
        let (mut src, _) = established_source(None);
        src.enqueue_app_bytes(10_000, 0);
        src.force_window_for_test(8.0, 1e9);
        src.enqueue_app_bytes(0, 0);
        let rto0 = src.rto_ns();
        let token = TcpTimerToken { gen: src.timer_gen };
        let outs = src.on_timer(token, 2_000_000_000);
        let segs = sent(&outs);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].seq_no, 1);
        assert_eq!(src.cwnd(), 1.0);
        assert_eq!(src.ssthresh(), 4.0);
        assert_eq!(src.rto_ns(), 2 * rto0);
        // Second consecutive timeout doubles again.
        let token = TcpTimerToken { gen: src.timer_gen };
        src.on_timer(token, 5_000_000_000);
        assert_eq!(src.rto_ns(), 4 * rto0);
        // Stale generation: no effect.
        assert!(src.on_timer(token, 6_000_000_000).is_empty());
    }

    #[test]
    fn timeout_with_nothing_outstanding_is_a_noop() {
        let (mut src, _) = established_source(None);
        let token = TcpTimerToken { gen: src.timer_gen };
        let outs = src.on_timer(token, 1_000_000_000);
        assert!(outs.is_empty());
        assert_eq!(src.timeouts, 0);
    }

    #[test]
    fn handshake_gives_up_after_retry_budget() {
        let mut src = TcpSource::new(TcpSourceConfig {
            src_port: 10,
            dst_port: 20,
            mss_offer: 100,
            isn: 0,
            payload_seed: 7,
            total_segments: Some(10),
        });
        src.start(0);
        let mut now = 0;
        for _ in 0..MAX_SYN_RETRIES {
            now += src.rto_ns();
            let token = TcpTimerToken { gen: src.timer_gen };
            let outs = src.on_timer(token, now);
            let syns = outs
                .iter()
                .filter(|o| matches!(o, TcpOutput::Send(s) if s.flags.contains(TcpFlags::SYN)))
                .count();
            assert_eq!(syns, 1, "SYN retransmitted");
        }
        let token = TcpTimerToken { gen: src.timer_gen };
        let outs = src.on_timer(token, now + src.rto_ns());
        assert!(outs.is_empty());
        assert_eq!(src.phase(), SourcePhase::HandshakeTimeout);
    }

    #[test]
    fn mss_negotiation_takes_the_minimum() {
        let mut src = TcpSource::new(TcpSourceConfig {
            src_port: 10,
            dst_port: 20,
            mss_offer: 1460,
            isn: 0,
            payload_seed: 7,
            total_segments: None,
        });
        src.start(0);
        let mut syn_ack = TcpSegmentModel::syn(20, 10, 0, 1200);
        syn_ack.flags = TcpFlags::SYN.with(TcpFlags::ACK);
        syn_ack.ack_no = 1;
        src.on_segment(syn_ack, 1000);
        assert_eq!(src.mss(), 1200);
    }

    #[test]
    fn sink_reassembles_and_acks_every_segment() {
        let mut sink = TcpSink::new(20, 10, 0, 100);
        let outs = sink.on_segment(TcpSegmentModel::syn(10, 20, 0, 100), 0);
        assert!(matches!(&outs[0], TcpOutput::Send(s)
            if s.flags.contains(TcpFlags::SYN) && s.flags.contains(TcpFlags::ACK)));
        // Out of order: 2 before 1.
        let outs = sink.on_segment(TcpSegmentModel::data(10, 20, 2, vec![2; 10]), 1);
        assert!(outs.iter().all(|o| !matches!(o, TcpOutput::DeliverData { .. })));
        let acked: Vec<u32> = outs
            .iter()
            .filter_map(|o| match o {
                TcpOutput::Send(s) => Some(s.ack_no),
                _ => None,
            })
            .collect();
        assert_eq!(acked, vec![1], "duplicate cumulative acknowledgment");
        let outs = sink.on_segment(TcpSegmentModel::data(10, 20, 1, vec![1; 10]), 2);
        let delivered: Vec<u32> = outs
            .iter()
            .filter_map(|o| match o {
                TcpOutput::DeliverData { seq, .. } => Some(*seq),
                _ => None,
            })
            .collect();
        assert_eq!(delivered, vec![1, 2]);
        assert_eq!(sink.delivered_bytes, 20);
        // Duplicate arrival is counted and re-acknowledged.
        let outs = sink.on_segment(TcpSegmentModel::data(10, 20, 1, vec![1; 10]), 3);
        assert_eq!(sink.duplicate_arrivals, 1);
        let acked: Vec<u32> = outs
            .iter()
            .filter_map(|o| match o {
                TcpOutput::Send(s) => Some(s.ack_no),
                _ => None,
            })
            .collect();
        assert_eq!(acked, vec![3]);
    }

    #[test]
    fn sink_fin_closes_in_order() {
        let mut sink = TcpSink::new(20, 10, 0, 100);
        sink.on_segment(TcpSegmentModel::syn(10, 20, 0, 100), 0);
        sink.on_segment(TcpSegmentModel::data(10, 20, 1, vec![1; 10]), 1);
        // FIN arrives before segment 2: held.
        let outs = sink.on_segment(TcpSegmentModel::fin(10, 20, 3, 0), 2);
        assert!(!sink.is_done());
        let acked: Vec<u32> = outs
            .iter()
            .filter_map(|o| match o {
                TcpOutput::Send(s) => Some(s.ack_no),
                _ => None,
            })
            .collect();
        assert_eq!(acked, vec![2]);
        sink.on_segment(TcpSegmentModel::data(10, 20, 2, vec![2; 10]), 3);
        assert!(sink.is_done(), "FIN consumed once the stream is complete");
    }

    #[test]
    fn source_closes_after_transfer() {
        // A bounded transfer starts pumping right at establishment.
        let (mut src, outs) = established_source(Some(3));
        assert_eq!(sent(&outs).len(), 3);
        let outs = src.on_segment(TcpSegmentModel::pure_ack(20, 10, 1, 4), 200);
        let segs = sent(&outs);
        assert_eq!(segs.len(), 1);
        assert!(segs[0].flags.contains(TcpFlags::FIN));
        assert_eq!(segs[0].seq_no, 4);
        assert!(!src.is_done());
        src.on_segment(TcpSegmentModel::pure_ack(20, 10, 1, 5), 300);
        assert!(src.is_done());
    }

    #[test]
    fn payloads_are_deterministic_and_seed_dependent() {
        let a = payload_for(1, 5, 32);
        assert_eq!(a, payload_for(1, 5, 32));
        assert_ne!(a, payload_for(2, 5, 32));
        assert_ne!(a, payload_for(1, 6, 32));
    }
}
