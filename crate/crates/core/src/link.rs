//! The interface every per-direction link layer implements, plus the ideal
//! pipe used when framing is disabled.

use std::collections::VecDeque;

use crate::packet::Packet;
use crate::sim::VirtualTime;

/// A packet whose last byte has left the transmitter.
#[derive(Debug, Clone, PartialEq)]
pub struct Departure {
    pub at: VirtualTime,
    pub packet: Packet,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CarrierStats {
    pub frames: u64,
    pub capacity_bits: u64,
    pub used_bits: u64,
    pub packets: u64,
    /// Capacity requests sent (DVB return link only).
    pub requests: u64,
}

/// One direction of one access stack.
///
/// The driver calls [`Carrier::service`] at the times the carrier asks for,
/// never earlier; the carrier tolerates spurious calls by doing nothing.
pub trait Carrier {
    fn name(&self) -> &'static str;

    /// Queues a packet; returns when the carrier next wants service.
    fn enqueue(&mut self, now: VirtualTime, packet: Packet) -> Option<VirtualTime>;

    /// Transmits whatever is due at `now`, appending completed packets to
    /// `out`. Returns the next service time, if any.
    fn service(&mut self, now: VirtualTime, out: &mut Vec<Departure>) -> Option<VirtualTime>;

    fn stats(&self) -> CarrierStats;

    /// Long-run payload capacity in bit/s, if the carrier has one.
    fn capacity_bps(&self) -> Option<f64>;
}

/// Zero-airtime, unlimited-capacity pipe.
#[derive(Debug, Default)]
pub struct IdealCarrier {
    queue: VecDeque<Packet>,
    stats: CarrierStats,
}

impl IdealCarrier {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Carrier for IdealCarrier {
    fn name(&self) -> &'static str {
        "ideal"
    }

    fn enqueue(&mut self, now: VirtualTime, packet: Packet) -> Option<VirtualTime> {
        self.queue.push_back(packet);
        Some(now)
    }

    fn service(&mut self, now: VirtualTime, out: &mut Vec<Departure>) -> Option<VirtualTime> {
        for packet in self.queue.drain(..) {
            self.stats.frames += 1;
            self.stats.packets += 1;
            self.stats.used_bits += packet.size as u64 * 8;
            self.stats.capacity_bits += packet.size as u64 * 8;
            out.push(Departure { at: now, packet });
        }
        None
    }

    fn stats(&self) -> CarrierStats {
        self.stats
    }

    fn capacity_bps(&self) -> Option<f64> {
        None
    }
}

/// Smallest `origin + k * period_ns / 1000` (in us) that is `>= t`, with the
/// grid point index. `period_ns` lets non-integer microsecond frame
/// durations stay an exact progression.
pub fn grid_at_or_after(origin: VirtualTime, period_ns: u64, t: VirtualTime) -> (u64, VirtualTime) {
    assert!(period_ns > 0);
    if t <= origin {
        return (0, origin);
    }
    let rel_ns = (t.as_micros() - origin.as_micros()) as u128 * 1_000;
    let mut k = rel_ns.div_ceil(period_ns as u128) as u64;
    // Flooring to whole microseconds can land one point early.
    loop {
        let at = grid_point(origin, period_ns, k);
        if at >= t {
            return (k, at);
        }
        k += 1;
    }
}

pub fn grid_point(origin: VirtualTime, period_ns: u64, k: u64) -> VirtualTime {
    origin.after((k as u128 * period_ns as u128 / 1_000) as u64)
}
