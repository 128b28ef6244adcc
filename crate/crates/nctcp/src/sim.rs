//! Deterministic discrete-event simulator.
//!
//! Time is integer nanoseconds. Events are processed in (time, seq) order
//! where seq is assigned monotonically at scheduling, so ties break in
//! scheduling order and a run is a pure function of its inputs and seed.
//!
//! Links are unidirectional FIFO drop-tail queues with a serialization
//! rate, a propagation delay, and a packet erasure probability drawn once
//! per packet from a per-link ChaCha stream (stream index = link index, all
//! streams derived from the run seed).

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::protocol::TxTimerToken;
use crate::segment::TcpSegmentModel;
use crate::tcp::TcpTimerToken;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("event at {event_ns} ns lies before current time {now_ns} ns")]
    PastEvent { event_ns: u64, now_ns: u64 },
}

/// Simulated time in nanoseconds since run start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Hash)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: Self = Self(0);

    pub fn from_secs_f64(s: f64) -> Self {
        Self((s * 1e9).round() as u64)
    }

    pub fn from_millis(ms: u64) -> Self {
        Self(ms * 1_000_000)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn saturating_add(self, ns: u64) -> Self {
        Self(self.0.saturating_add(ns))
    }
}

pub type NodeId = usize;
pub type LinkId = usize;
pub type FlowId = u16;

/// What travels inside a simulated packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WirePacket {
    /// Serialized coding-layer segment.
    Nc(Vec<u8>),
    /// Plain TCP segment (traditional flows).
    Tcp(TcpSegmentModel),
}

impl WirePacket {
    pub fn wire_len(&self) -> usize {
        match self {
            WirePacket::Nc(bytes) => bytes.len(),
            WirePacket::Tcp(seg) => seg.wire_len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub flow: FlowId,
    pub payload: WirePacket,
}

/// Timer callbacks routed back to the protocol machines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimTimer {
    TcpSource { flow: FlowId, token: TcpTimerToken },
    NcTransmitter { flow: FlowId, token: TxTimerToken },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    /// A packet finished serialization on a link (internal).
    LinkService { link: LinkId },
    /// A packet reached the receiving end of a link.
    PacketArrival { link: LinkId, packet: Packet },
    TimerExpiry { timer: SimTimer },
    /// Application-level start of a flow.
    FlowStart { flow: FlowId },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    pub to_node: NodeId,
    pub rate_bps: u64,
    pub delay: SimTime,
    pub queue_capacity: usize,
    /// Packet erasure probability in [0, 1].
    pub per: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LinkCounters {
    pub injected: u64,
    pub delivered: u64,
    pub erased: u64,
    pub dropped: u64,
}

impl LinkCounters {
    /// Packets still queued, in service, or propagating.
    pub fn in_flight(&self) -> u64 {
        self.injected - self.delivered - self.erased - self.dropped
    }
}

struct LinkRuntime {
    cfg: LinkConfig,
    queue: VecDeque<Packet>,
    in_service: Option<Packet>,
    rng: ChaCha8Rng,
    counters: LinkCounters,
}

#[derive(PartialEq, Eq)]
struct QueuedEvent {
    time: SimTime,
    seq: u64,
    kind: EventKind,
}

impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Everything above the links: hosts, routers, protocol machines.
pub trait World {
    fn on_packet(&mut self, sim: &mut Simulator, link: LinkId, at: NodeId, packet: Packet);
    fn on_timer(&mut self, sim: &mut Simulator, timer: SimTimer);
    fn on_flow_start(&mut self, sim: &mut Simulator, flow: FlowId);
}

pub struct Simulator {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Reverse<QueuedEvent>>,
    links: Vec<LinkRuntime>,
    seed: u64,
}

impl Simulator {
    pub fn new(seed: u64) -> Self {
        Self { now: SimTime::ZERO, next_seq: 0, heap: BinaryHeap::new(), links: Vec::new(), seed }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Registers a link; its erasure draws come from ChaCha stream number
    /// `link index` of the run seed, so a link's sequence of draws depends
    /// only on the packets it carries.
    pub fn add_link(&mut self, cfg: LinkConfig) -> LinkId {
        let id = self.links.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id as u64);
        self.links.push(LinkRuntime {
            cfg,
            queue: VecDeque::new(),
            in_service: None,
            rng,
            counters: LinkCounters::default(),
        });
        id
    }

    pub fn link_counters(&self, link: LinkId) -> LinkCounters {
        self.links[link].counters
    }

    pub fn link_counters_all(&self) -> Vec<LinkCounters> {
        self.links.iter().map(|l| l.counters).collect()
    }

    /// Enqueues an event; events may not be scheduled in the past.
    pub fn schedule(&mut self, time: SimTime, kind: EventKind) -> Result<(), SimError> {
        if time < self.now {
            return Err(SimError::PastEvent { event_ns: time.0, now_ns: self.now.0 });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(QueuedEvent { time, seq, kind }));
        Ok(())
    }

    pub fn schedule_in(&mut self, delay_ns: u64, kind: EventKind) {
        let time = self.now.saturating_add(delay_ns);
        self.schedule(time, kind).expect("future event");
    }

    fn serialization_ns(&self, link: LinkId, packet: &Packet) -> u64 {
        let bits = packet.payload.wire_len() as u128 * 8;
        let rate = self.links[link].cfg.rate_bps.max(1) as u128;
        ((bits * 1_000_000_000) / rate) as u64
    }

    /// Hands a packet to a link: drop-tail when the queue is full,
    /// otherwise serialization, one erasure draw, then propagation.
    pub fn transmit(&mut self, link: LinkId, packet: Packet) {
        self.links[link].counters.injected += 1;
        if self.links[link].in_service.is_some() {
            if self.links[link].queue.len() >= self.links[link].cfg.queue_capacity {
                self.links[link].counters.dropped += 1;
                return;
            }
            self.links[link].queue.push_back(packet);
        } else {
            self.start_service(link, packet);
        }
    }

    fn start_service(&mut self, link: LinkId, packet: Packet) {
        let tau = self.serialization_ns(link, &packet);
        self.links[link].in_service = Some(packet);
        self.schedule_in(tau, EventKind::LinkService { link });
    }

    fn finish_service(&mut self, link: LinkId) {
        let l = &mut self.links[link];
        let packet = l.in_service.take().expect("service completion without a packet");
        let erased = l.rng.random::<f64>() < l.cfg.per;
        if erased {
            l.counters.erased += 1;
        } else {
            let delay = l.cfg.delay.0;
            self.schedule_in(delay, EventKind::PacketArrival { link, packet });
        }
        if let Some(next) = self.links[link].queue.pop_front() {
            self.start_service(link, next);
        }
    }

    /// Processes events in order up to and including `t_end`, then parks
    /// the clock there. Later events stay queued.
    pub fn run_until(&mut self, world: &mut dyn World, t_end: SimTime) {
        while let Some(Reverse(ev)) = self.heap.peek() {
            if ev.time > t_end {
                break;
            }
            let Reverse(ev) = self.heap.pop().expect("peeked");
            debug_assert!(ev.time >= self.now, "event order violates causality");
            self.now = ev.time;
            match ev.kind {
                EventKind::LinkService { link } => self.finish_service(link),
                EventKind::PacketArrival { link, packet } => {
                    self.links[link].counters.delivered += 1;
                    let node = self.links[link].cfg.to_node;
                    world.on_packet(self, link, node, packet);
                }
                EventKind::TimerExpiry { timer } => world.on_timer(self, timer),
                EventKind::FlowStart { flow } => world.on_flow_start(self, flow),
            }
        }
        self.now = t_end.max(self.now);
    }

    /// True when no events remain.
    pub fn idle(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Recorder {
        arrivals: Vec<(u64, Packet)>,
        timers: Vec<(u64, SimTimer)>,
        starts: Vec<(u64, FlowId)>,
    }

    impl Recorder {
        fn new() -> Self {
            Self { arrivals: Vec::new(), timers: Vec::new(), starts: Vec::new() }
        }
    }

    impl World for Recorder {
        fn on_packet(&mut self, sim: &mut Simulator, _link: LinkId, _at: NodeId, packet: Packet) {
            self.arrivals.push((sim.now().0, packet));
        }
        fn on_timer(&mut self, sim: &mut Simulator, timer: SimTimer) {
            self.timers.push((sim.now().0, timer));
        }
        fn on_flow_start(&mut self, sim: &mut Simulator, flow: FlowId) {
            self.starts.push((sim.now().0, flow));
        }
    }

    fn tcp_packet(flow: FlowId, bytes: usize) -> Packet {
        Packet {
            flow,
            payload: WirePacket::Tcp(TcpSegmentModel::data(
                1,
                2,
                0,
                vec![0u8; bytes.saturating_sub(20)],
            )),
        }
    }

    #[test]
    fn equal_times_process_in_scheduling_order() {
        let mut sim = Simulator::new(1);
        let t = SimTime::from_millis(5);
        for flow in 0..3u16 {
            sim.schedule(t, EventKind::FlowStart { flow }).unwrap();
        }
        let mut world = Recorder::new();
        sim.run_until(&mut world, SimTime::from_millis(10));
        let flows: Vec<FlowId> = world.starts.iter().map(|(_, f)| *f).collect();
        assert_eq!(flows, vec![0, 1, 2]);
    }

    #[test]
    fn past_events_are_rejected() {
        let mut sim = Simulator::new(1);
        sim.schedule(SimTime::from_millis(5), EventKind::FlowStart { flow: 0 }).unwrap();
        let mut world = Recorder::new();
        sim.run_until(&mut world, SimTime::from_millis(5));
        let err = sim.schedule(SimTime::from_millis(4), EventKind::FlowStart { flow: 1 });
        assert_eq!(
            err,
            Err(SimError::PastEvent { event_ns: 4_000_000, now_ns: 5_000_000 })
        );
    }

    #[test]
    fn empty_queue_run_terminates_immediately() {
        let mut sim = Simulator::new(1);
        let mut world = Recorder::new();
        sim.run_until(&mut world, SimTime::from_secs_f64(100.0));
        assert!(world.arrivals.is_empty());
        assert_eq!(sim.now(), SimTime::from_secs_f64(100.0));
        assert!(sim.idle());
    }

    #[test]
    fn lossless_link_delivers_everything_in_order_with_correct_timing() {
        let mut sim = Simulator::new(7);
        // 1 Mbit/s, 20 ms delay: a 1000-byte packet serializes in 8 ms.
        let link = sim.add_link(LinkConfig {
            to_node: 3,
            rate_bps: 1_000_000,
            delay: SimTime::from_millis(20),
            queue_capacity: 50,
            per: 0.0,
        });
        for _ in 0..3 {
            sim.transmit(link, tcp_packet(0, 1000));
        }
        let mut world = Recorder::new();
        sim.run_until(&mut world, SimTime::from_secs_f64(1.0));
        assert_eq!(world.arrivals.len(), 3);
        // Arrival i at i-th serialization boundary plus propagation.
        let times: Vec<u64> = world.arrivals.iter().map(|(t, _)| *t).collect();
        assert_eq!(times, vec![28_000_000, 36_000_000, 44_000_000]);
        let c = sim.link_counters(link);
        assert_eq!(c.injected, 3);
        assert_eq!(c.delivered, 3);
        assert_eq!(c.in_flight(), 0);
    }

    #[test]
    fn full_queue_drops_tail() {
        let mut sim = Simulator::new(7);
        let link = sim.add_link(LinkConfig {
            to_node: 0,
            rate_bps: 1_000_000,
            delay: SimTime::ZERO,
            queue_capacity: 2,
            per: 0.0,
        });
        // One in service, two queued, two dropped.
        for _ in 0..5 {
            sim.transmit(link, tcp_packet(0, 500));
        }
        let c = sim.link_counters(link);
        assert_eq!(c.dropped, 2);
        let mut world = Recorder::new();
        sim.run_until(&mut world, SimTime::from_secs_f64(1.0));
        assert_eq!(world.arrivals.len(), 3);
    }

    #[test]
    fn erasure_probability_extremes() {
        for (per, expect_delivered) in [(0.0, 100), (1.0, 0)] {
            let mut sim = Simulator::new(3);
            let link = sim.add_link(LinkConfig {
                to_node: 0,
                rate_bps: 1_000_000_000,
                delay: SimTime::ZERO,
                queue_capacity: 1000,
                per,
            });
            for _ in 0..100 {
                sim.transmit(link, tcp_packet(0, 100));
            }
            let mut world = Recorder::new();
            sim.run_until(&mut world, SimTime::from_secs_f64(10.0));
            assert_eq!(world.arrivals.len(), expect_delivered);
            let c = sim.link_counters(link);
            assert_eq!(c.erased, 100 - expect_delivered as u64);
            assert_eq!(c.in_flight(), 0);
        }
    }

    #[test]
    fn erasure_fraction_concentrates_at_per() {
        let mut sim = Simulator::new(42);
        let link = sim.add_link(LinkConfig {
            to_node: 0,
            rate_bps: 1_000_000_000,
            delay: SimTime::ZERO,
            queue_capacity: usize::MAX,
            per: 0.3,
        });
        let total = 100_000;
        for _ in 0..total {
            sim.transmit(link, tcp_packet(0, 100));
        }
        let mut world = Recorder::new();
        sim.run_until(&mut world, SimTime::from_secs_f64(1000.0));
        let erased = sim.link_counters(link).erased as f64;
        let fraction = erased / total as f64;
        assert!(
            (fraction - 0.3).abs() < 0.01,
            "empirical erasure fraction {fraction} strays from 0.3"
        );
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let run = |seed: u64| -> Vec<(u64, u64, u64, u64)> {
            let mut sim = Simulator::new(seed);
            let link = sim.add_link(LinkConfig {
                to_node: 0,
                rate_bps: 10_000_000,
                delay: SimTime::from_millis(1),
                queue_capacity: 10,
                per: 0.25,
            });
            for _ in 0..500 {
                sim.transmit(link, tcp_packet(0, 600));
            }
            let mut world = Recorder::new();
            sim.run_until(&mut world, SimTime::from_secs_f64(10.0));
            let c = sim.link_counters(link);
            vec![(c.injected, c.delivered, c.erased, c.dropped)]
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10), "different seeds draw differently");
    }

    #[test]
    fn conservation_holds_mid_flight() {
        let mut sim = Simulator::new(5);
        let link = sim.add_link(LinkConfig {
            to_node: 0,
            rate_bps: 1_000_000,
            delay: SimTime::from_millis(50),
            queue_capacity: 100,
            per: 0.1,
        });
        for _ in 0..50 {
            sim.transmit(link, tcp_packet(0, 1000));
        }
        let mut world = Recorder::new();
        // Stop while packets are still propagating.
        sim.run_until(&mut world, SimTime::from_millis(100));
        let c = sim.link_counters(link);
        assert_eq!(
            c.injected,
            c.delivered + c.erased + c.dropped + c.in_flight()
        );
        assert!(c.in_flight() > 0, "some packets still in flight at the cut");
        // Draining the queue empties the pipe.
        sim.run_until(&mut world, SimTime::from_secs_f64(10.0));
        assert_eq!(sim.link_counters(link).in_flight(), 0);
    }
}
