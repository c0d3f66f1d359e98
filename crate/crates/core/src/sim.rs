//! Deterministic discrete-event engine.
//!
//! Time is an integer count of microseconds. Events are ordered by
//! `(fire_at, seq)` where `seq` is the insertion counter, so two events
//! never compare equal and ties resolve in FIFO order. Randomness comes
//! from named streams, each seeded from `(global_seed, name)`, so adding a
//! consumer of one stream never perturbs another.
//!
//! The engine owns only the clock, the queue, the random streams and the
//! optional trace. Model state lives in the caller and is reached through
//! the handler closure passed to [`Engine::run_until`] / [`Engine::run`].

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Identifier of the random generator and seeding scheme, recorded in every
/// report so results can be reproduced by other implementations.
pub const RNG_ALGORITHM: &str = "chacha8;seed=sha256(\"geosim-rng-v1\"|seed_le64|name);uniform=u64>>11*2^-53";

/// Microseconds since the start of the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct VirtualTime(u64);

impl VirtualTime {
    pub const ZERO: VirtualTime = VirtualTime(0);
    pub const MAX: VirtualTime = VirtualTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        VirtualTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        VirtualTime(ms * 1_000)
    }

    pub fn from_secs_f64(s: f64) -> Self {
        assert!(s.is_finite() && s >= 0.0, "invalid time {s} s");
        VirtualTime((s * 1e6).round() as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    /// `self + us`, panicking on overflow: a wrapped clock would silently
    /// reorder the whole queue.
    pub fn after(self, us: u64) -> Self {
        VirtualTime(self.0.checked_add(us).expect("virtual time overflow"))
    }

    /// Microseconds elapsed since `earlier` (saturating at zero).
    pub fn since(self, earlier: VirtualTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl fmt::Display for VirtualTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

/// Something that can sit in the event queue.
pub trait Action {
    /// Short stable name used in traces and diagnostics.
    fn kind(&self) -> &'static str;
    /// Free-form detail for the trace line; must be deterministic.
    fn detail(&self) -> String {
        String::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

/// A queued event.
#[derive(Debug)]
pub struct Event<A> {
    pub fire_at: VirtualTime,
    pub seq: u64,
    pub action: A,
}

impl<A> PartialEq for Event<A> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl<A> Eq for Event<A> {}

impl<A> PartialOrd for Event<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<A> Ord for Event<A> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.fire_at, self.seq).cmp(&(other.fire_at, other.seq))
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("handler `{handler}` scheduled an event at {at}, before the current time {now}")]
    ScheduleInPast {
        handler: &'static str,
        at: VirtualTime,
        now: VirtualTime,
    },
    #[error("unknown random stream `{0}`")]
    UnknownStream(String),
    #[error("simulation did not finish before the time limit {limit}")]
    Timeout { limit: VirtualTime },
    #[error("event `{kind}` (seq {seq}) at {time} failed: {source}")]
    Event {
        time: VirtualTime,
        seq: u64,
        kind: &'static str,
        #[source]
        source: Box<SimError>,
    },
    #[error("{0}")]
    Model(String),
}

/// One named, independently seeded generator.
#[derive(Debug, Clone)]
pub struct RngStream {
    name: String,
    rng: ChaCha8Rng,
    draws: u64,
}

impl RngStream {
    pub fn new(global_seed: u64, name: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"geosim-rng-v1");
        h.update(global_seed.to_le_bytes());
        h.update(name.as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        RngStream {
            name: name.to_owned(),
            rng: ChaCha8Rng::from_seed(seed),
            draws: 0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Uniform draw on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        self.draws += 1;
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Handle to a registered stream; cheaper than looking up by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamId(usize);

#[derive(Debug, Clone)]
pub struct RngStreams {
    global_seed: u64,
    streams: Vec<RngStream>,
    by_name: BTreeMap<String, usize>,
}

impl RngStreams {
    pub fn new(global_seed: u64) -> Self {
        RngStreams {
            global_seed,
            streams: Vec::new(),
            by_name: BTreeMap::new(),
        }
    }

    pub fn global_seed(&self) -> u64 {
        self.global_seed
    }

    /// Registers `name` (idempotent) and returns its handle.
    pub fn register(&mut self, name: &str) -> StreamId {
        if let Some(&i) = self.by_name.get(name) {
            return StreamId(i);
        }
        let i = self.streams.len();
        self.streams.push(RngStream::new(self.global_seed, name));
        self.by_name.insert(name.to_owned(), i);
        StreamId(i)
    }

    pub fn id(&self, name: &str) -> Result<StreamId, SimError> {
        self.by_name
            .get(name)
            .map(|&i| StreamId(i))
            .ok_or_else(|| SimError::UnknownStream(name.to_owned()))
    }

    pub fn draw_uniform(&mut self, name: &str) -> Result<f64, SimError> {
        let id = self.id(name)?;
        Ok(self.uniform(id))
    }

    pub fn uniform(&mut self, id: StreamId) -> f64 {
        self.streams[id.0].uniform()
    }
}

/// What to do with processed events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceMode {
    #[default]
    Off,
    /// Feed every trace line into a running SHA-256.
    Hash,
    /// Hash and also keep the lines.
    Record,
}

#[derive(Debug, Clone, Default)]
struct Trace {
    mode: TraceMode,
    hasher: Sha256,
    lines: Vec<String>,
}

impl Trace {
    fn push(&mut self, time: VirtualTime, seq: u64, kind: &str, detail: &str) {
        if self.mode == TraceMode::Off {
            return;
        }
        let line = format!("{},{},{},{}", time.as_micros(), seq, kind, detail);
        self.hasher.update(line.as_bytes());
        self.hasher.update(b"\n");
        if self.mode == TraceMode::Record {
            self.lines.push(line);
        }
    }
}

pub struct Engine<A> {
    now: VirtualTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Event<A>>>,
    rng: RngStreams,
    trace: Trace,
    current: Option<&'static str>,
    processed: u64,
    halted: bool,
}

impl<A: Action> Engine<A> {
    pub fn new(global_seed: u64) -> Self {
        Engine {
            now: VirtualTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            rng: RngStreams::new(global_seed),
            trace: Trace::default(),
            current: None,
            processed: 0,
            halted: false,
        }
    }

    pub fn with_trace(mut self, mode: TraceMode) -> Self {
        self.trace.mode = mode;
        self
    }

    pub fn now(&self) -> VirtualTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn rng(&mut self) -> &mut RngStreams {
        &mut self.rng
    }

    pub fn schedule(&mut self, fire_at: VirtualTime, action: A) -> Result<EventId, SimError> {
        if fire_at < self.now {
            return Err(SimError::ScheduleInPast {
                handler: self.current.unwrap_or("<setup>"),
                at: fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Event {
            fire_at,
            seq,
            action,
        }));
        Ok(EventId(seq))
    }

    pub fn schedule_in(&mut self, delay_us: u64, action: A) -> Result<EventId, SimError> {
        let at = self.now.after(delay_us);
        self.schedule(at, action)
    }

    /// Stops the current `run*` call after the handler returns.
    pub fn halt(&mut self) {
        self.halted = true;
    }

    /// Processes every event with `fire_at <= t_end`, then advances the
    /// clock to `t_end` (unless a handler halted the run).
    pub fn run_until<F>(&mut self, t_end: VirtualTime, mut handler: F) -> Result<u64, SimError>
    where
        F: FnMut(&mut Engine<A>, A) -> Result<(), SimError>,
    {
        let n = self.drain(t_end, &mut handler)?;
        if !self.halted && t_end > self.now {
            self.now = t_end;
        }
        Ok(n)
    }

    /// Runs until the queue is empty or a handler halts. Fails with
    /// [`SimError::Timeout`] if an event beyond `limit` would be needed.
    pub fn run<F>(&mut self, limit: VirtualTime, mut handler: F) -> Result<u64, SimError>
    where
        F: FnMut(&mut Engine<A>, A) -> Result<(), SimError>,
    {
        let n = self.drain(limit, &mut handler)?;
        if !self.halted && !self.queue.is_empty() {
            return Err(SimError::Timeout { limit });
        }
        Ok(n)
    }

    fn drain<F>(&mut self, t_end: VirtualTime, handler: &mut F) -> Result<u64, SimError>
    where
        F: FnMut(&mut Engine<A>, A) -> Result<(), SimError>,
    {
        self.halted = false;
        let mut n = 0;
        while !self.halted {
            match self.queue.peek() {
                Some(Reverse(ev)) if ev.fire_at <= t_end => {}
                _ => break,
            }
            let Reverse(ev) = self.queue.pop().expect("peeked");
            debug_assert!(ev.fire_at >= self.now);
            self.now = ev.fire_at;
            let kind = ev.action.kind();
            if self.trace.mode != TraceMode::Off {
                let detail = ev.action.detail();
                self.trace.push(ev.fire_at, ev.seq, kind, &detail);
            }
            self.current = Some(kind);
            let res = handler(self, ev.action);
            self.current = None;
            n += 1;
            self.processed += 1;
            res.map_err(|source| SimError::Event {
                time: ev.fire_at,
                seq: ev.seq,
                kind,
                source: Box::new(source),
            })?;
        }
        Ok(n)
    }

    /// Hex SHA-256 of all trace lines so far (empty-input hash if tracing is off).
    pub fn trace_hash(&self) -> String {
        hex::encode(self.trace.hasher.clone().finalize())
    }

    pub fn trace_lines(&self) -> &[String] {
        &self.trace.lines
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Tag(&'static str, u32);

    impl Action for Tag {
        fn kind(&self) -> &'static str {
            self.0
        }
        fn detail(&self) -> String {
            self.1.to_string()
        }
    }

    #[test]
    fn zero_delay_runs_before_later_events() {
        let mut e = Engine::new(1);
        e.schedule(VirtualTime::from_micros(5), Tag("late", 0)).unwrap();
        e.schedule(e.now(), Tag("now", 0)).unwrap();
        let mut seen = Vec::new();
        e.run(VirtualTime::MAX, |_, a| {
            seen.push(a.0);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, ["now", "late"]);
    }

    #[test]
    fn equal_times_are_fifo() {
        let mut e = Engine::new(1);
        let t = VirtualTime::from_micros(100);
        e.schedule(t, Tag("A", 0)).unwrap();
        e.schedule(t, Tag("B", 0)).unwrap();
        let mut seen = Vec::new();
        e.run(VirtualTime::MAX, |_, a| {
            seen.push(a.0);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, ["A", "B"]);
    }

    #[test]
    fn empty_run_until_advances_clock() {
        let mut e: Engine<Tag> = Engine::new(1);
        let n = e
            .run_until(VirtualTime::from_micros(1_000_000_000), |_, _| Ok(()))
            .unwrap();
        assert_eq!(n, 0);
        assert_eq!(e.now().as_micros(), 1_000_000_000);
    }

    #[test]
    fn run_until_stops_at_boundary() {
        let mut e = Engine::new(1);
        for t in 1..=3 {
            e.schedule(VirtualTime::from_micros(t), Tag("x", t as u32)).unwrap();
        }
        let n = e.run_until(VirtualTime::from_micros(2), |_, _| Ok(())).unwrap();
        assert_eq!(n, 2);
        assert_eq!(e.now().as_micros(), 2);
        assert_eq!(e.pending(), 1);
    }

    #[test]
    fn scheduling_in_the_past_names_the_handler() {
        let mut e = Engine::new(1);
        e.schedule(VirtualTime::from_micros(10), Tag("probe", 0)).unwrap();
        let err = e
            .run(VirtualTime::MAX, |eng, _| {
                eng.schedule(VirtualTime::from_micros(3), Tag("bad", 0))?;
                Ok(())
            })
            .unwrap_err();
        match err {
            SimError::Event { kind, source, .. } => {
                assert_eq!(kind, "probe");
                assert!(matches!(*source, SimError::ScheduleInPast { handler: "probe", .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn handler_error_carries_event_context() {
        let mut e = Engine::new(1);
        e.schedule(VirtualTime::from_micros(7), Tag("boom", 0)).unwrap();
        let err = e
            .run(VirtualTime::MAX, |_, _| Err(SimError::Model("nope".into())))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("boom") && msg.contains("7us") && msg.contains("nope"), "{msg}");
    }

    #[test]
    fn run_reports_timeout() {
        let mut e = Engine::new(1);
        e.schedule(VirtualTime::from_micros(50), Tag("x", 0)).unwrap();
        let err = e.run(VirtualTime::from_micros(10), |_, _| Ok(())).unwrap_err();
        assert!(matches!(err, SimError::Timeout { .. }));
    }

    #[test]
    fn random_events_come_out_sorted() {
        // Oracle: stable sort of (time, insertion index).
        let mut rng = RngStream::new(99, "times");
        let n = 1_000_000u32;
        let mut e = Engine::new(0);
        let mut expected = Vec::with_capacity(n as usize);
        for i in 0..n {
            let t = (rng.uniform() * 50_000.0) as u64;
            e.schedule(VirtualTime::from_micros(t), Tag("e", i)).unwrap();
            expected.push((t, i));
        }
        expected.sort();
        let mut got = Vec::with_capacity(n as usize);
        e.run(VirtualTime::MAX, |eng, a| {
            got.push((eng.now().as_micros(), a.1));
            Ok(())
        })
        .unwrap();
        assert_eq!(got, expected);
    }

    #[test]
    fn trace_hash_is_reproducible() {
        let build = || {
            let mut e = Engine::new(5).with_trace(TraceMode::Record);
            let s = e.rng().register("jitter");
            for i in 0..100 {
                let d = (e.rng().uniform(s) * 1000.0) as u64;
                e.schedule(VirtualTime::from_micros(d), Tag("e", i)).unwrap();
            }
            e.run(VirtualTime::MAX, |_, _| Ok(())).unwrap();
            (e.trace_hash(), e.trace_lines().len())
        };
        let (a, n) = build();
        let (b, _) = build();
        assert_eq!(a, b);
        assert_eq!(n, 100);
    }

    #[test]
    fn streams_are_named_and_isolated() {
        let mut s = RngStreams::new(42);
        s.register("a");
        s.register("b");
        let a1: Vec<f64> = (0..5).map(|_| s.draw_uniform("a").unwrap()).collect();

        let mut t = RngStreams::new(42);
        t.register("a");
        t.register("b");
        for _ in 0..17 {
            t.draw_uniform("b").unwrap();
        }
        let a2: Vec<f64> = (0..5).map(|_| t.draw_uniform("a").unwrap()).collect();
        assert_eq!(a1, a2);
        assert!(matches!(s.draw_uniform("c"), Err(SimError::UnknownStream(_))));
    }

    #[test]
    fn uniform_mean_is_one_half() {
        let mut r = RngStream::new(7, "mean");
        let n = 100_000;
        let m: f64 = (0..n).map(|_| r.uniform()).sum::<f64>() / n as f64;
        assert!((m - 0.5).abs() < 0.01, "mean {m}");
    }

    #[test]
    fn distinct_streams_pass_chi_square_independence() {
        // 10x10 table of paired draws against a uniform-independent null: 99 dof,
        // 99.9% critical value ~ 148.
        let mut a = RngStream::new(3, "alpha");
        let mut b = RngStream::new(3, "beta");
        let n = 100_000;
        let mut cells = [[0u32; 10]; 10];
        for _ in 0..n {
            let i = (a.uniform() * 10.0) as usize;
            let j = (b.uniform() * 10.0) as usize;
            cells[i][j] += 1;
        }
        let expected = n as f64 / 100.0;
        let chi2: f64 = cells
            .iter()
            .flatten()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 148.0, "chi2 {chi2}");
    }

    #[test]
    #[should_panic(expected = "overflow")]
    fn clock_overflow_panics() {
        VirtualTime::MAX.after(1);
    }
}
