//! Dumbbell scenarios: configuration format, topology wiring, and the
//! world that connects TCP endpoints (optionally through the coding layer)
//! to the simulated links.
//!
//! The topology is the classic two-source dumbbell: A1 and A2 send through
//! routers N3 and N4 to sinks S1 and S2, with N3->N4 as the 1 Mbit/s
//! bottleneck. Erasures happen on the bottleneck; access links are clean.
//!
//! Configuration files are flat `key = value` text with `#` comments; see
//! [`ScenarioConfig::parse`] for the key set.

use std::collections::VecDeque;

use thiserror::Error;

use crate::codec::CodeParams;
use crate::metrics::{fnv1a, FlowMetrics, RunMetrics};
use crate::protocol::{
    parse_nc_segment, NcConfig, NcError, NcReceiver, NcTransmitter, RxOutput, TxOutput,
};
use crate::sim::{
    EventKind, FlowId, LinkConfig, LinkId, NodeId, Packet, SimTime, SimTimer, Simulator,
    WirePacket, World,
};
use crate::tcp::{payload_for, SourcePhase, TcpOutput, TcpSink, TcpSource, TcpSourceConfig};

pub const A1: NodeId = 0;
pub const A2: NodeId = 1;
pub const N3: NodeId = 2;
pub const N4: NodeId = 3;
pub const S1: NodeId = 4;
pub const S2: NodeId = 5;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("configuration error: {0}")]
    Config(String),
}

fn cfg_err(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Config(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub source: NodeId,
    pub sink: NodeId,
    pub start_s: f64,
    pub nc_enabled: bool,
    /// Number of segments to transfer; None is an unbounded bulk source.
    pub total_segments: Option<u64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { source: A1, sink: S1, start_s: 0.0, nc_enabled: true, total_segments: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub access_rate_bps: u64,
    pub access_delay: SimTime,
    pub bottleneck_rate_bps: u64,
    pub bottleneck_delay: SimTime,
    pub queue_capacity: usize,
    /// Erasure probability on the forward bottleneck link.
    pub per: f64,
    /// Erasure probability on the reverse bottleneck link.
    pub reverse_per: f64,
    pub code_n: u32,
    pub code_k: u32,
    /// Coded segment size in bytes; derived from the MSS when absent.
    pub segment_size: Option<usize>,
    /// Speculative acknowledgment threshold; defaults to k.
    pub spec_threshold: Option<u32>,
    /// Blocks the transmitter keeps in flight.
    pub nc_window: u32,
    pub mss: u16,
    pub t_end_s: f64,
    pub seed: u64,
    /// Record the sink-side byte stream of every flow (memory-heavy; used
    /// by the end-to-end checks).
    pub capture_streams: bool,
    pub flows: Vec<FlowConfig>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            access_rate_bps: 10_000_000,
            access_delay: SimTime::from_millis(10),
            bottleneck_rate_bps: 1_000_000,
            bottleneck_delay: SimTime::from_millis(20),
            queue_capacity: 50,
            per: 0.1,
            reverse_per: 0.0,
            code_n: 16,
            code_k: 8,
            segment_size: None,
            spec_threshold: None,
            nc_window: 3,
            mss: 1000,
            t_end_s: 200.0,
            seed: 1,
            capture_streams: false,
            flows: vec![FlowConfig::default()],
        }
    }
}

fn node_name(node: NodeId) -> &'static str {
    match node {
        A1 => "A1",
        A2 => "A2",
        N3 => "N3",
        N4 => "N4",
        S1 => "S1",
        S2 => "S2",
        _ => "?",
    }
}

fn parse_node(s: &str) -> Result<NodeId, ScenarioError> {
    match s {
        "A1" => Ok(A1),
        "A2" => Ok(A2),
        "N3" => Ok(N3),
        "N4" => Ok(N4),
        "S1" => Ok(S1),
        "S2" => Ok(S2),
        other => Err(cfg_err(format!("unknown node {other:?}"))),
    }
}

impl ScenarioConfig {
    /// Coded segment size: explicit, or just large enough that an
    /// MSS-sized payload fits once framed (frame prefix + residual header
    /// + options length byte).
    pub fn derived_segment_size(&self) -> usize {
        self.segment_size.unwrap_or(self.mss as usize + 15)
    }

    /// MSS both ends converge on once the coding layer has rewritten the
    /// offers.
    pub fn negotiated_mss(&self) -> u16 {
        let budget = self.derived_segment_size().saturating_sub(15).min(u16::MAX as usize);
        self.mss.min(budget as u16)
    }

    pub fn code_params(&self) -> Result<CodeParams, ScenarioError> {
        CodeParams::new(self.code_n, self.code_k, self.derived_segment_size())
            .map_err(|e| cfg_err(e.to_string()))
    }

    pub fn nc_config(&self) -> Result<NcConfig, ScenarioError> {
        let params = self.code_params()?;
        let mut cfg = NcConfig::with_threshold(
            params,
            self.spec_threshold.unwrap_or(self.code_k),
        )
        .map_err(|e| cfg_err(e.to_string()))?;
        cfg.window = self.nc_window;
        cfg.reorder_pool = self.nc_window.max(4);
        cfg.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(0.0..=1.0).contains(&self.per) || !(0.0..=1.0).contains(&self.reverse_per) {
            return Err(cfg_err("per must lie in [0, 1]"));
        }
        if self.t_end_s <= 0.0 {
            return Err(cfg_err("t_end_s must be positive"));
        }
        if self.mss == 0 {
            return Err(cfg_err("mss must be positive"));
        }
        if self.flows.is_empty() {
            return Err(cfg_err("at least one flow is required"));
        }
        for (i, f) in self.flows.iter().enumerate() {
            if !matches!(f.source, A1 | A2) {
                return Err(cfg_err(format!("flow {i}: source must be A1 or A2")));
            }
            if !matches!(f.sink, S1 | S2) {
                return Err(cfg_err(format!("flow {i}: sink must be S1 or S2")));
            }
            if f.start_s < 0.0 || f.start_s >= self.t_end_s {
                return Err(cfg_err(format!("flow {i}: start_s outside the run")));
            }
        }
        if self.flows.iter().any(|f| f.nc_enabled) {
            self.nc_config()?;
        }
        Ok(())
    }

    /// Parses the flat key = value format.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut cfg = Self::default();
        cfg.flows.clear();
        let mut flows: Vec<FlowConfig> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                cfg_err(format!("line {}: invalid {what} value {value:?}", lineno + 1))
            };
            if let Some(rest) = key.strip_prefix("flow.") {
                let (idx, field) = rest
                    .split_once('.')
                    .ok_or_else(|| cfg_err(format!("line {}: flow keys are flow.N.field", lineno + 1)))?;
                let idx: usize =
                    idx.parse().map_err(|_| cfg_err(format!("line {}: bad flow index", lineno + 1)))?;
                if idx >= 8 {
                    return Err(cfg_err(format!("line {}: flow index {idx} too large", lineno + 1)));
                }
                while flows.len() <= idx {
                    flows.push(FlowConfig::default());
                }
                let f = &mut flows[idx];
                match field {
                    "source" => f.source = parse_node(value)?,
                    "sink" => f.sink = parse_node(value)?,
                    "start_s" => f.start_s = value.parse().map_err(|_| bad("start_s"))?,
                    "nc" => f.nc_enabled = value.parse().map_err(|_| bad("nc"))?,
                    "segments" => {
                        let n: u64 = value.parse().map_err(|_| bad("segments"))?;
                        f.total_segments = if n == 0 { None } else { Some(n) };
                    }
                    other => {
                        return Err(cfg_err(format!("line {}: unknown flow field {other:?}", lineno + 1)))
                    }
                }
                continue;
            }
            match key {
                "access_rate_bps" => cfg.access_rate_bps = value.parse().map_err(|_| bad(key))?,
                "access_delay_ms" => {
                    cfg.access_delay = SimTime::from_millis(value.parse().map_err(|_| bad(key))?)
                }
                "bottleneck_rate_bps" => {
                    cfg.bottleneck_rate_bps = value.parse().map_err(|_| bad(key))?
                }
                "bottleneck_delay_ms" => {
                    cfg.bottleneck_delay = SimTime::from_millis(value.parse().map_err(|_| bad(key))?)
                }
                "queue_capacity" => cfg.queue_capacity = value.parse().map_err(|_| bad(key))?,
                "per" => cfg.per = value.parse().map_err(|_| bad(key))?,
                "reverse_per" => cfg.reverse_per = value.parse().map_err(|_| bad(key))?,
                "code_n" => cfg.code_n = value.parse().map_err(|_| bad(key))?,
                "code_k" => cfg.code_k = value.parse().map_err(|_| bad(key))?,
                "segment_size" => cfg.segment_size = Some(value.parse().map_err(|_| bad(key))?),
                "spec_threshold" => cfg.spec_threshold = Some(value.parse().map_err(|_| bad(key))?),
                "nc_window" => cfg.nc_window = value.parse().map_err(|_| bad(key))?,
                "mss" => cfg.mss = value.parse().map_err(|_| bad(key))?,
                "t_end_s" => cfg.t_end_s = value.parse().map_err(|_| bad(key))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad(key))?,
                "capture_streams" => cfg.capture_streams = value.parse().map_err(|_| bad(key))?,
                other => return Err(cfg_err(format!("line {}: unknown key {other:?}", lineno + 1))),
            }
        }
        if flows.is_empty() {
            flows.push(FlowConfig::default());
        }
        cfg.flows = flows;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form: every key explicit, fixed order. Equal configs
    /// serialize identically, which makes the digest a run identifier.
    pub fn canonical(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "access_rate_bps = {}", self.access_rate_bps);
        let _ = writeln!(s, "access_delay_ms = {}", self.access_delay.0 / 1_000_000);
        let _ = writeln!(s, "bottleneck_rate_bps = {}", self.bottleneck_rate_bps);
        let _ = writeln!(s, "bottleneck_delay_ms = {}", self.bottleneck_delay.0 / 1_000_000);
        let _ = writeln!(s, "queue_capacity = {}", self.queue_capacity);
        let _ = writeln!(s, "per = {}", self.per);
        let _ = writeln!(s, "reverse_per = {}", self.reverse_per);
        let _ = writeln!(s, "code_n = {}", self.code_n);
        let _ = writeln!(s, "code_k = {}", self.code_k);
        let _ = writeln!(s, "segment_size = {}", self.derived_segment_size());
        let _ = writeln!(s, "spec_threshold = {}", self.spec_threshold.unwrap_or(self.code_k));
        let _ = writeln!(s, "nc_window = {}", self.nc_window);
        let _ = writeln!(s, "mss = {}", self.mss);
        let _ = writeln!(s, "t_end_s = {}", self.t_end_s);
        let _ = writeln!(s, "seed = {}", self.seed);
        for (i, f) in self.flows.iter().enumerate() {
            let _ = writeln!(s, "flow.{i}.source = {}", node_name(f.source));
            let _ = writeln!(s, "flow.{i}.sink = {}", node_name(f.sink));
            let _ = writeln!(s, "flow.{i}.start_s = {}", f.start_s);
            let _ = writeln!(s, "flow.{i}.nc = {}", f.nc_enabled);
            let _ = writeln!(s, "flow.{i}.segments = {}", f.total_segments.unwrap_or(0));
        }
        s
    }

    pub fn digest(&self) -> u64 {
        fnv1a(self.canonical().as_bytes())
    }
}

/// Per-flow deterministic payload seed.
pub fn flow_payload_seed(run_seed: u64, flow: FlowId) -> u64 {
    run_seed ^ (flow as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// The byte stream a bounded flow is expected to deliver.
pub fn expected_stream(cfg: &ScenarioConfig, flow: FlowId, segments: u64) -> Vec<u8> {
    let mss = if cfg.flows[flow as usize].nc_enabled {
        cfg.negotiated_mss()
    } else {
        cfg.mss
    } as usize;
    let seed = flow_payload_seed(cfg.seed, flow);
    let mut out = Vec::with_capacity(segments as usize * mss);
    for seq in 1..=segments {
        out.extend(payload_for(seed, seq as u32, mss));
    }
    out
}

struct Links {
    a1_n3: LinkId,
    a2_n3: LinkId,
    n3_n4: LinkId,
    n4_s1: LinkId,
    n4_s2: LinkId,
    s1_n4: LinkId,
    s2_n4: LinkId,
    n4_n3: LinkId,
    n3_a1: LinkId,
    n3_a2: LinkId,
}

impl Links {
    fn build(sim: &mut Simulator, cfg: &ScenarioConfig) -> Self {
        let access = |to_node| LinkConfig {
            to_node,
            rate_bps: cfg.access_rate_bps,
            delay: cfg.access_delay,
            queue_capacity: cfg.queue_capacity,
            per: 0.0,
        };
        Self {
            a1_n3: sim.add_link(access(N3)),
            a2_n3: sim.add_link(access(N3)),
            n3_n4: sim.add_link(LinkConfig {
                to_node: N4,
                rate_bps: cfg.bottleneck_rate_bps,
                delay: cfg.bottleneck_delay,
                queue_capacity: cfg.queue_capacity,
                per: cfg.per,
            }),
            n4_s1: sim.add_link(access(S1)),
            n4_s2: sim.add_link(access(S2)),
            s1_n4: sim.add_link(access(N4)),
            s2_n4: sim.add_link(access(N4)),
            n4_n3: sim.add_link(LinkConfig {
                to_node: N3,
                rate_bps: cfg.bottleneck_rate_bps,
                delay: cfg.bottleneck_delay,
                queue_capacity: cfg.queue_capacity,
                per: cfg.reverse_per,
            }),
            n3_a1: sim.add_link(access(A1)),
            n3_a2: sim.add_link(access(A2)),
        }
    }

    fn named(&self) -> [(&'static str, LinkId); 10] {
        [
            ("A1->N3", self.a1_n3),
            ("A2->N3", self.a2_n3),
            ("N3->N4", self.n3_n4),
            ("N4->S1", self.n4_s1),
            ("N4->S2", self.n4_s2),
            ("S1->N4", self.s1_n4),
            ("S2->N4", self.s2_n4),
            ("N4->N3", self.n4_n3),
            ("N3->A1", self.n3_a1),
            ("N3->A2", self.n3_a2),
        ]
    }
}

struct FlowRuntime {
    cfg: FlowConfig,
    tcp_src: TcpSource,
    nc_tx: Option<NcTransmitter>,
    tcp_sink: TcpSink,
    nc_rx: Option<NcReceiver>,
    metrics: FlowMetrics,
    sink_stream: Vec<u8>,
    nc_positions: Vec<u64>,
}

/// The dumbbell world: routes packets between nodes and drives the
/// per-flow protocol stacks.
pub struct DumbbellWorld {
    links: Links,
    flows: Vec<FlowRuntime>,
    capture: bool,
}

impl DumbbellWorld {
    pub fn new(sim: &mut Simulator, cfg: &ScenarioConfig) -> Result<Self, ScenarioError> {
        cfg.validate()?;
        let links = Links::build(sim, cfg);
        let mut flows = Vec::new();
        for (i, fc) in cfg.flows.iter().enumerate() {
            let (nc_tx, nc_rx) = if fc.nc_enabled {
                let nc_cfg = cfg.nc_config()?;
                (
                    Some(NcTransmitter::new(nc_cfg).map_err(|e| cfg_err(e.to_string()))?),
                    Some(NcReceiver::new(nc_cfg).map_err(|e| cfg_err(e.to_string()))?),
                )
            } else {
                (None, None)
            };
            let src_port = 1000 + i as u16;
            let dst_port = 2000 + i as u16;
            flows.push(FlowRuntime {
                cfg: fc.clone(),
                tcp_src: TcpSource::new(TcpSourceConfig {
                    src_port,
                    dst_port,
                    mss_offer: cfg.mss,
                    isn: 0,
                    payload_seed: flow_payload_seed(cfg.seed, i as FlowId),
                    total_segments: fc.total_segments,
                }),
                nc_tx,
                tcp_sink: TcpSink::new(dst_port, src_port, 0, cfg.mss),
                nc_rx,
                metrics: FlowMetrics::default(),
                sink_stream: Vec::new(),
                nc_positions: Vec::new(),
            });
        }
        Ok(Self { links, flows, capture: cfg.capture_streams })
    }

    fn fwd_access(&self, flow: usize) -> LinkId {
        if self.flows[flow].cfg.source == A1 {
            self.links.a1_n3
        } else {
            self.links.a2_n3
        }
    }

    fn fwd_exit(&self, flow: usize) -> LinkId {
        if self.flows[flow].cfg.sink == S1 {
            self.links.n4_s1
        } else {
            self.links.n4_s2
        }
    }

    fn rev_access(&self, flow: usize) -> LinkId {
        if self.flows[flow].cfg.sink == S1 {
            self.links.s1_n4
        } else {
            self.links.s2_n4
        }
    }

    fn rev_exit(&self, flow: usize) -> LinkId {
        if self.flows[flow].cfg.source == A1 {
            self.links.n3_a1
        } else {
            self.links.n3_a2
        }
    }

    /// Runs the source-host stack to quiescence: TCP outputs feed the
    /// coding layer, restored segments feed back into TCP.
    fn drive_source(
        &mut self,
        sim: &mut Simulator,
        flow: usize,
        tcp_outputs: Vec<TcpOutput>,
        nc_outputs: Vec<TxOutput>,
    ) {
        let mut tcp_q: VecDeque<TcpOutput> = tcp_outputs.into();
        let mut nc_q: VecDeque<TxOutput> = nc_outputs.into();
        let now = sim.now().0;
        loop {
            if let Some(out) = tcp_q.pop_front() {
                match out {
                    TcpOutput::Send(seg) => {
                        let f = &mut self.flows[flow];
                        if let Some(nc) = f.nc_tx.as_mut() {
                            nc_q.extend(nc.on_tcp_segment(seg, now));
                        } else {
                            sim.transmit(
                                self.fwd_access(flow),
                                Packet { flow: flow as FlowId, payload: WirePacket::Tcp(seg) },
                            );
                        }
                    }
                    TcpOutput::ArmTimer { token, delay_ns } => {
                        sim.schedule_in(
                            delay_ns,
                            EventKind::TimerExpiry {
                                timer: SimTimer::TcpSource { flow: flow as FlowId, token },
                            },
                        );
                    }
                    TcpOutput::DeliverData { .. } => unreachable!("source TCP delivers no data"),
                }
                continue;
            }
            if let Some(out) = nc_q.pop_front() {
                match out {
                    TxOutput::EmitNc(seg) => {
                        self.flows[flow].nc_positions.push(crate::protocol::position(
                            seg.header.seq_no,
                            seg.header.symbol_indicator,
                        ));
                        sim.transmit(
                            self.fwd_access(flow),
                            Packet {
                                flow: flow as FlowId,
                                payload: WirePacket::Nc(seg.serialize()),
                            },
                        );
                    }
                    TxOutput::TcpDeliver(seg) => {
                        tcp_q.extend(self.flows[flow].tcp_src.on_segment(seg, now));
                    }
                    TxOutput::ArmTimer { token, delay_ns } => {
                        sim.schedule_in(
                            delay_ns,
                            EventKind::TimerExpiry {
                                timer: SimTimer::NcTransmitter { flow: flow as FlowId, token },
                            },
                        );
                    }
                }
                continue;
            }
            break;
        }
    }

    /// Runs the sink-host stack to quiescence.
    fn drive_sink(
        &mut self,
        sim: &mut Simulator,
        flow: usize,
        tcp_outputs: Vec<TcpOutput>,
        nc_outputs: Vec<RxOutput>,
    ) {
        let mut tcp_q: VecDeque<TcpOutput> = tcp_outputs.into();
        let mut nc_q: VecDeque<RxOutput> = nc_outputs.into();
        let now = sim.now().0;
        loop {
            if let Some(out) = nc_q.pop_front() {
                match out {
                    RxOutput::EmitNc(seg) => {
                        sim.transmit(
                            self.rev_access(flow),
                            Packet {
                                flow: flow as FlowId,
                                payload: WirePacket::Nc(seg.serialize()),
                            },
                        );
                    }
                    RxOutput::TcpDeliver(seg) => {
                        tcp_q.extend(self.flows[flow].tcp_sink.on_segment(seg, now));
                    }
                }
                continue;
            }
            if let Some(out) = tcp_q.pop_front() {
                match out {
                    TcpOutput::Send(seg) => {
                        let f = &mut self.flows[flow];
                        if let Some(nc) = f.nc_rx.as_mut() {
                            match nc.on_tcp_segment(seg) {
                                Ok(outs) => nc_q.extend(outs),
                                Err(NcError::UnexpectedData) => {
                                    unreachable!("sink TCP never produces payload")
                                }
                                Err(_) => {}
                            }
                        } else {
                            sim.transmit(
                                self.rev_access(flow),
                                Packet { flow: flow as FlowId, payload: WirePacket::Tcp(seg) },
                            );
                        }
                    }
                    TcpOutput::DeliverData { payload, .. } => {
                        let now_s = sim.now().as_secs_f64();
                        let f = &mut self.flows[flow];
                        f.metrics.record_delivery(now_s, 1, payload.len() as u64);
                        if self.capture {
                            f.sink_stream.extend_from_slice(&payload);
                        }
                    }
                    TcpOutput::ArmTimer { .. } => unreachable!("sink TCP arms no timers"),
                }
                continue;
            }
            break;
        }
    }

    fn source_receive(&mut self, sim: &mut Simulator, flow: usize, packet: Packet) {
        let now = sim.now().0;
        match packet.payload {
            WirePacket::Nc(bytes) => {
                let Ok(seg) = parse_nc_segment(&bytes) else { return };
                let f = &mut self.flows[flow];
                let Some(nc) = f.nc_tx.as_mut() else { return };
                match nc.on_nc_segment(seg, now) {
                    Ok(outs) => self.drive_source(sim, flow, Vec::new(), outs),
                    Err(NcError::StaleAck { .. }) => {}
                    Err(_) => {}
                }
            }
            WirePacket::Tcp(seg) => {
                let outs = self.flows[flow].tcp_src.on_segment(seg, now);
                self.drive_source(sim, flow, outs, Vec::new());
            }
        }
    }

    fn sink_receive(&mut self, sim: &mut Simulator, flow: usize, packet: Packet) {
        let now = sim.now().0;
        match packet.payload {
            WirePacket::Nc(bytes) => {
                let Ok(seg) = parse_nc_segment(&bytes) else { return };
                let f = &mut self.flows[flow];
                let Some(nc) = f.nc_rx.as_mut() else { return };
                let outs = nc.on_nc_segment(seg);
                self.drive_sink(sim, flow, Vec::new(), outs);
            }
            WirePacket::Tcp(seg) => {
                let outs = self.flows[flow].tcp_sink.on_segment(seg, now);
                self.drive_sink(sim, flow, outs, Vec::new());
            }
        }
    }

    /// Folds protocol counters into the collected metrics.
    fn finalize(mut self, duration_s: f64) -> Vec<FlowMetrics> {
        let bins = duration_s.floor() as usize;
        self.flows
            .drain(..)
            .map(|mut f| {
                let m = &mut f.metrics;
                if m.bins.len() < bins {
                    m.bins.resize(bins, 0);
                }
                m.tcp_retransmissions = f.tcp_src.retransmissions;
                m.tcp_timeouts = f.tcp_src.timeouts;
                m.duplicate_arrivals = f.tcp_sink.duplicate_arrivals;
                m.handshake_failed = f.tcp_src.phase() == SourcePhase::HandshakeTimeout;
                m.completed = f.tcp_src.is_done();
                if let Some(nc) = &f.nc_tx {
                    m.nc_blocks_retransmitted = nc.blocks_retransmitted();
                    m.nc_fillers = nc.fillers_emitted();
                    m.nc_stale_acks = nc.stale_acks();
                }
                m.negotiated_mss = f.tcp_src.mss();
                m.sink_stream = f.sink_stream;
                m.nc_positions = f.nc_positions;
                f.metrics
            })
            .collect()
    }
}

impl World for DumbbellWorld {
    fn on_packet(&mut self, sim: &mut Simulator, link: LinkId, at: NodeId, packet: Packet) {
        let flow = packet.flow as usize;
        if flow >= self.flows.len() {
            return;
        }
        match at {
            N3 => {
                if link == self.links.a1_n3 || link == self.links.a2_n3 {
                    sim.transmit(self.links.n3_n4, packet);
                } else {
                    sim.transmit(self.rev_exit(flow), packet);
                }
            }
            N4 => {
                if link == self.links.n3_n4 {
                    sim.transmit(self.fwd_exit(flow), packet);
                } else {
                    sim.transmit(self.links.n4_n3, packet);
                }
            }
            A1 | A2 => self.source_receive(sim, flow, packet),
            S1 | S2 => self.sink_receive(sim, flow, packet),
            _ => {}
        }
    }

    fn on_timer(&mut self, sim: &mut Simulator, timer: SimTimer) {
        let now = sim.now().0;
        match timer {
            SimTimer::TcpSource { flow, token } => {
                let flow = flow as usize;
                if flow >= self.flows.len() {
                    return;
                }
                let outs = self.flows[flow].tcp_src.on_timer(token, now);
                self.drive_source(sim, flow, outs, Vec::new());
            }
            SimTimer::NcTransmitter { flow, token } => {
                let flow = flow as usize;
                if flow >= self.flows.len() {
                    return;
                }
                let Some(nc) = self.flows[flow].nc_tx.as_mut() else { return };
                let outs = nc.on_timer(token, now);
                self.drive_source(sim, flow, Vec::new(), outs);
            }
        }
    }

    fn on_flow_start(&mut self, sim: &mut Simulator, flow: FlowId) {
        let flow = flow as usize;
        if flow >= self.flows.len() {
            return;
        }
        let now = sim.now().0;
        let mut outs = self.flows[flow].tcp_src.start(now);
        if self.flows[flow].cfg.total_segments.is_none() {
            // Bulk FTP source: backlog the application queue so the window
            // is always the binding constraint.
            outs.extend(self.flows[flow].tcp_src.enqueue_app_bytes(u64::MAX / 4, now));
        }
        self.drive_source(sim, flow, outs, Vec::new());
    }
}

/// Runs one scenario to its configured end time.
pub fn run(cfg: &ScenarioConfig) -> Result<RunMetrics, ScenarioError> {
    let mut sim = Simulator::new(cfg.seed);
    let mut world = DumbbellWorld::new(&mut sim, cfg)?;
    for (i, f) in cfg.flows.iter().enumerate() {
        sim.schedule(
            SimTime::from_secs_f64(f.start_s),
            EventKind::FlowStart { flow: i as FlowId },
        )
        .expect("start times precede the run");
    }
    sim.run_until(&mut world, SimTime::from_secs_f64(cfg.t_end_s));
    let links = world
        .links
        .named()
        .iter()
        .map(|&(name, id)| (name.to_string(), sim.link_counters(id)))
        .collect();
    let flows = world.finalize(cfg.t_end_s);
    Ok(RunMetrics {
        seed: cfg.seed,
        duration_s: cfg.t_end_s,
        config_digest: cfg.digest(),
        flows,
        links,
    })
}
