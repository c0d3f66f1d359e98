//! Echo probes and a minimal ACK-clocked request/response protocol driven
//! over a [`Network`].

use std::collections::BTreeMap;

use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::net::{Ev, Network};
use crate::packet::{Direction, FlowId, Packet, Segment, ECHO_PACKET_SIZE, TCP_IP_HEADER};
use crate::sim::{Engine, SimError, TraceMode, VirtualTime};

const TIMER_PROBE: u32 = 0;
const TIMER_START: u32 = 1;
const TIMER_SERVER_READY: u32 = 2;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("throughput undefined: transfer took no time")]
    ZeroDuration,
    #[error("the flow finished without {0}")]
    Incomplete(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EchoFlow {
    pub count: u32,
    pub interval_us: u64,
    pub probe_size: u32,
    /// Send time of the first probe.
    pub start_us: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EchoResult {
    /// Round trips in probe order (all probes are answered on a lossless link).
    pub rtt_samples: Vec<u64>,
    pub trace_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowState {
    Handshake,
    SlowStart,
    CongestionAvoidance,
}

/// Sender-side window state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliableFlow {
    pub mss: u32,
    /// Segments; fractional growth in congestion avoidance.
    pub cwnd: f64,
    /// `f64::INFINITY` for pure slow start.
    pub ssthresh: f64,
    pub bytes_acked: u64,
    pub next_seq: u64,
    pub state: FlowState,
}

impl ReliableFlow {
    pub fn new(mss: u32, initial_cwnd: f64, ssthresh: Option<f64>) -> Self {
        assert!(mss > 0 && initial_cwnd >= 1.0);
        ReliableFlow {
            mss,
            cwnd: initial_cwnd,
            ssthresh: ssthresh.unwrap_or(f64::INFINITY),
            bytes_acked: 0,
            next_seq: 0,
            state: FlowState::Handshake,
        }
    }

    pub fn in_flight(&self) -> u64 {
        self.next_seq - self.bytes_acked
    }

    /// Bytes the window allows in flight.
    pub fn window_bytes(&self) -> u64 {
        (self.cwnd.floor() as u64).max(1) * self.mss as u64
    }

    /// Applies a cumulative ACK. Returns the newly acknowledged bytes;
    /// stale or duplicate ACKs change nothing.
    pub fn on_ack(&mut self, cumulative: u64) -> u64 {
        if cumulative <= self.bytes_acked {
            return 0;
        }
        assert!(cumulative <= self.next_seq, "ACK beyond sent data");
        let newly = cumulative - self.bytes_acked;
        self.bytes_acked = cumulative;
        let segs = newly as f64 / self.mss as f64;
        match self.state {
            FlowState::Handshake => {}
            FlowState::SlowStart => {
                // +1 segment per ACKed segment: doubling per window.
                self.cwnd += segs;
                if self.cwnd >= self.ssthresh {
                    self.state = FlowState::CongestionAvoidance;
                }
            }
            FlowState::CongestionAvoidance => {
                self.cwnd += segs / self.cwnd;
            }
        }
        newly
    }

    /// Length of the next segment the window allows, if any.
    pub fn next_segment(&self, size: u64) -> Option<u32> {
        if self.next_seq >= size {
            return None;
        }
        let len = (size - self.next_seq).min(self.mss as u64);
        (self.in_flight() + len <= self.window_bytes()).then_some(len as u32)
    }
}

/// Timestamps of one fetch, in absolute virtual time.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTimeline {
    pub t_request: VirtualTime,
    pub t_connected: VirtualTime,
    pub t_first_byte: VirtualTime,
    pub t_start_transfer: VirtualTime,
    pub t_complete: VirtualTime,
    pub bytes_total: u64,
    /// (arrival time, cumulative in-order bytes) per data segment.
    pub progress: Vec<(VirtualTime, u64)>,
    pub trace_hash: String,
}

impl FlowTimeline {
    pub fn connect_s(&self) -> f64 {
        self.t_connected.since(self.t_request) as f64 / 1e6
    }

    pub fn start_transfer_s(&self) -> f64 {
        self.t_start_transfer.since(self.t_request) as f64 / 1e6
    }

    pub fn first_byte_s(&self) -> f64 {
        self.t_first_byte.since(self.t_request) as f64 / 1e6
    }

    pub fn complete_s(&self) -> f64 {
        self.t_complete.since(self.t_request) as f64 / 1e6
    }

    /// Time from the first payload byte until the goodput over the trailing
    /// `window_us` first reaches `fraction * capacity_bps`.
    pub fn ramp_up_us(&self, capacity_bps: f64, fraction: f64, window_us: u64) -> Option<u64> {
        let target = fraction * capacity_bps / 8.0 * window_us as f64 / 1e6;
        let mut lo = 0;
        for &(t, bytes) in &self.progress {
            while self.progress[lo].0.as_micros() + window_us <= t.as_micros() {
                lo += 1;
            }
            let base = if lo == 0 { 0 } else { self.progress[lo - 1].1 };
            let span = t.since(self.t_start_transfer);
            if span >= window_us && (bytes - base) as f64 >= target {
                return Some(span);
            }
        }
        None
    }

    /// Maximum goodput (bit/s) over any trailing window of `window_us`.
    pub fn max_window_goodput_bps(&self, window_us: u64) -> f64 {
        let mut best: f64 = 0.0;
        let mut lo = 0;
        for &(t, bytes) in &self.progress {
            while self.progress[lo].0.as_micros() + window_us <= t.as_micros() {
                lo += 1;
            }
            // Bytes that arrived in (t - window, t].
            let base = if lo == 0 { 0 } else { self.progress[lo - 1].1 };
            if t.since(self.t_start_transfer) >= window_us {
                best = best.max((bytes - base) as f64 * 8.0 * 1e6 / window_us as f64);
            }
        }
        best
    }
}

/// `bytes_total / (t_complete - t_start_transfer)` in kB/s (1 kB = 1000 B).
pub fn throughput(timeline: &FlowTimeline) -> Result<f64, TransportError> {
    let dt = timeline.t_complete.since(timeline.t_start_transfer);
    if dt == 0 {
        return Err(TransportError::ZeroDuration);
    }
    Ok(timeline.bytes_total as f64 / 1_000.0 / (dt as f64 / 1e6))
}

/// What to fetch once connected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FetchSpec {
    pub t_request_us: u64,
    /// `None` stops after the handshake.
    pub response_bytes: Option<u64>,
    pub server_processing_us: u64,
}

fn limit(cfg: &ScenarioConfig) -> VirtualTime {
    VirtualTime::from_secs_f64(cfg.max_time_s)
}

/// Runs `count` echo probes from the terminal.
pub fn run_echo(cfg: &ScenarioConfig, seed: u64, flow: &EchoFlow) -> Result<EchoResult, TransportError> {
    let mut eng: Engine<Ev> = Engine::new(seed).with_trace(TraceMode::Hash);
    let mut net = Network::new(cfg, eng.rng());
    let n = flow.count as usize;
    let mut sent = vec![VirtualTime::ZERO; n];
    let mut rtts: Vec<Option<u64>> = vec![None; n];
    let mut answered = 0;
    if n == 0 {
        return Ok(EchoResult {
            rtt_samples: Vec::new(),
            trace_hash: eng.trace_hash(),
        });
    }
    eng.schedule(
        VirtualTime::from_micros(flow.start_us),
        Ev::Timer { tag: TIMER_PROBE, arg: 0 },
    )?;
    let f = FlowId(0);
    eng.run(limit(cfg), |eng, ev| match ev {
        Ev::Service { dir, gen } => net.on_service(eng, dir, gen),
        Ev::Timer { arg, .. } => {
            let i = arg as usize;
            sent[i] = eng.now();
            net.send(eng, Direction::Return, f, flow.probe_size, Segment::EchoRequest { probe: i as u32 })?;
            if i + 1 < n {
                eng.schedule_in(flow.interval_us, Ev::Timer { tag: TIMER_PROBE, arg: arg + 1 })?;
            }
            Ok(())
        }
        Ev::Arrive { packet, .. } => match packet.segment {
            Segment::EchoRequest { probe } => net
                .send(eng, Direction::Forward, f, packet.size, Segment::EchoReply { probe })
                .map(|_| ()),
            Segment::EchoReply { probe } => {
                let i = probe as usize;
                rtts[i] = Some(eng.now().since(sent[i]));
                answered += 1;
                if answered == n {
                    eng.halt();
                }
                Ok(())
            }
            other => Err(SimError::Model(format!("unexpected {} on echo flow", other.label()))),
        },
    })?;
    Ok(EchoResult {
        rtt_samples: rtts.into_iter().flatten().collect(),
        trace_hash: eng.trace_hash(),
    })
}

pub fn default_echo(cfg: &ScenarioConfig, start_us: u64) -> EchoFlow {
    EchoFlow {
        count: cfg.workload.probes,
        interval_us: (cfg.workload.probe_interval_ms * 1_000.0).round() as u64,
        probe_size: ECHO_PACKET_SIZE,
        start_us,
    }
}

struct Client {
    t_connected: Option<VirtualTime>,
    t_first: Option<VirtualTime>,
    t_complete: Option<VirtualTime>,
    rcv_next: u64,
    out_of_order: BTreeMap<u64, u32>,
    progress: Vec<(VirtualTime, u64)>,
}

/// Handshake, request, server think time, then a window-limited response.
pub fn fetch(cfg: &ScenarioConfig, seed: u64, spec: &FetchSpec) -> Result<FlowTimeline, TransportError> {
    let mut eng: Engine<Ev> = Engine::new(seed).with_trace(TraceMode::Hash);
    let mut net = Network::new(cfg, eng.rng());
    let t = &cfg.transport;
    let mut flow = ReliableFlow::new(t.mss, t.initial_cwnd, t.ssthresh);
    let size = spec.response_bytes.unwrap_or(0);
    let mut c = Client {
        t_connected: None,
        t_first: None,
        t_complete: None,
        rcv_next: 0,
        out_of_order: BTreeMap::new(),
        progress: Vec::new(),
    };
    let f = FlowId(1);
    let request_size = TCP_IP_HEADER + t.request_bytes;
    eng.schedule(
        VirtualTime::from_micros(spec.t_request_us),
        Ev::Timer { tag: TIMER_START, arg: 0 },
    )?;

    fn pump(
        eng: &mut Engine<Ev>,
        net: &mut Network,
        flow: &mut ReliableFlow,
        size: u64,
        f: FlowId,
    ) -> Result<(), SimError> {
        while let Some(len) = flow.next_segment(size) {
            let offset = flow.next_seq;
            flow.next_seq += len as u64;
            net.send(eng, Direction::Forward, f, TCP_IP_HEADER + len, Segment::Data { offset, len })?;
        }
        Ok(())
    }

    let handler = |eng: &mut Engine<Ev>, ev: Ev| -> Result<(), SimError> {
        match ev {
            Ev::Service { dir, gen } => net.on_service(eng, dir, gen),
            Ev::Timer { tag: TIMER_START, .. } => {
                net.send(eng, Direction::Return, f, TCP_IP_HEADER, Segment::Syn).map(|_| ())
            }
            Ev::Timer { tag: TIMER_SERVER_READY, .. } => {
                flow.state = FlowState::SlowStart;
                if size == 0 {
                    net.send(eng, Direction::Forward, f, TCP_IP_HEADER, Segment::Data { offset: 0, len: 0 })
                        .map(|_| ())
                } else {
                    pump(eng, &mut net, &mut flow, size, f)
                }
            }
            Ev::Timer { tag, .. } => Err(SimError::Model(format!("unknown timer {tag}"))),
            Ev::Arrive { dir, packet } => on_arrive(eng, &mut net, &mut flow, &mut c, spec, size, request_size, dir, packet),
        }
    };

    #[allow(clippy::too_many_arguments)]
    fn on_arrive(
        eng: &mut Engine<Ev>,
        net: &mut Network,
        flow: &mut ReliableFlow,
        c: &mut Client,
        spec: &FetchSpec,
        size: u64,
        request_size: u32,
        dir: Direction,
        packet: Packet,
    ) -> Result<(), SimError> {
        let f = packet.flow;
        match (dir, packet.segment) {
            // server side
            (Direction::Return, Segment::Syn) => {
                net.send(eng, Direction::Forward, f, TCP_IP_HEADER, Segment::SynAck).map(|_| ())
            }
            (Direction::Return, Segment::Request { .. }) => {
                eng.schedule_in(spec.server_processing_us, Ev::Timer { tag: TIMER_SERVER_READY, arg: 0 })
                    .map(|_| ())
            }
            (Direction::Return, Segment::Ack { cumulative }) => {
                flow.on_ack(cumulative);
                pump(eng, net, flow, size, f)
            }
            // client side
            (Direction::Forward, Segment::SynAck) => {
                c.t_connected = Some(eng.now());
                if spec.response_bytes.is_none() {
                    eng.halt();
                    return Ok(());
                }
                net.send(
                    eng,
                    Direction::Return,
                    f,
                    request_size,
                    Segment::Request { bytes: request_size - TCP_IP_HEADER },
                )
                .map(|_| ())
            }
            (Direction::Forward, Segment::Data { offset, len }) => {
                let now = eng.now();
                c.t_first.get_or_insert(now);
                if offset == c.rcv_next {
                    c.rcv_next += len as u64;
                    while let Some((&o, &l)) = c.out_of_order.first_key_value() {
                        if o > c.rcv_next {
                            break;
                        }
                        c.out_of_order.pop_first();
                        c.rcv_next = c.rcv_next.max(o + l as u64);
                    }
                } else if offset > c.rcv_next {
                    c.out_of_order.insert(offset, len);
                }
                c.progress.push((now, c.rcv_next));
                if c.rcv_next >= size {
                    c.t_complete = Some(now);
                    eng.halt();
                    return Ok(());
                }
                net.send(eng, Direction::Return, f, TCP_IP_HEADER, Segment::Ack { cumulative: c.rcv_next })
                    .map(|_| ())
            }
            (_, seg) => Err(SimError::Model(format!("unexpected {} on {dir} link", seg.label()))),
        }
    }

    eng.run(limit(cfg), handler)?;
    let t_connected = c.t_connected.ok_or(TransportError::Incomplete("a handshake"))?;
    let (t_first, t_complete) = if spec.response_bytes.is_none() {
        (t_connected, t_connected)
    } else {
        (
            c.t_first.ok_or(TransportError::Incomplete("a response"))?,
            c.t_complete.ok_or(TransportError::Incomplete("completing"))?,
        )
    };
    Ok(FlowTimeline {
        t_request: VirtualTime::from_micros(spec.t_request_us),
        t_connected,
        t_first_byte: t_first,
        t_start_transfer: t_first,
        t_complete,
        bytes_total: c.rcv_next,
        progress: c.progress,
        trace_hash: eng.trace_hash(),
    })
}

/// Handshake only; returns `t_connected - t_request` in microseconds.
pub fn connect(cfg: &ScenarioConfig, seed: u64, t_request_us: u64) -> Result<u64, TransportError> {
    let tl = fetch(
        cfg,
        seed,
        &FetchSpec {
            t_request_us,
            response_bytes: None,
            server_processing_us: 0,
        },
    )?;
    Ok(tl.t_connected.since(tl.t_request))
}

/// Connects and pulls `size` bytes with no server think time.
pub fn transfer(cfg: &ScenarioConfig, seed: u64, t_request_us: u64, size: u64) -> Result<FlowTimeline, TransportError> {
    fetch(
        cfg,
        seed,
        &FetchSpec {
            t_request_us,
            response_bytes: Some(size),
            server_processing_us: 0,
        },
    )
}
