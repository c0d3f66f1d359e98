//! 5G-NTN-style link layer: FDD slot grids, per-slot transport blocks and
//! grant-based uplink access.

use crate::channel::{CodingScheme, NrCarrier};
use crate::framing::{CarrierFrame, Fill, FrameKind, FramingRules, SegmentingQueue};
use crate::link::{grid_at_or_after, Carrier, CarrierStats, Departure};
use crate::packet::Packet;
use crate::sim::VirtualTime;

/// Exact arithmetic progression of slot boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotGrid {
    pub slot_duration_us: u64,
    pub origin: VirtualTime,
}

impl SlotGrid {
    pub fn new(slot_duration_us: u64) -> Self {
        assert!(slot_duration_us > 0);
        SlotGrid {
            slot_duration_us,
            origin: VirtualTime::ZERO,
        }
    }

    pub fn boundary_at_or_after(&self, t: VirtualTime) -> VirtualTime {
        grid_at_or_after(self.origin, self.slot_duration_us * 1_000, t).1
    }

    /// First boundary strictly after `t`.
    pub fn boundary_after(&self, t: VirtualTime) -> VirtualTime {
        self.boundary_at_or_after(t.after(1))
    }
}

/// Encapsulation cost of the NR user plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NrOverheadModel {
    /// Tunnel and convergence-layer headers, once per IP packet.
    pub per_packet_header: u32,
    /// MAC framing, once per transport block.
    pub per_tb_header: u32,
    /// Reassembly header on every fragment of a split packet.
    pub segment_header: u32,
}

impl Default for NrOverheadModel {
    fn default() -> Self {
        NrOverheadModel {
            per_packet_header: 23,
            per_tb_header: 3,
            segment_header: 2,
        }
    }
}

impl NrOverheadModel {
    pub fn framing(&self) -> FramingRules {
        FramingRules {
            sdu_overhead: self.per_packet_header,
            complete_header: 0,
            first_header: self.segment_header,
            continuation_header: self.segment_header,
        }
    }
}

/// `floor(SE * bandwidth * slot)`.
pub fn slot_capacity_bits(scheme: &CodingScheme, carrier: &NrCarrier) -> u64 {
    let bits = scheme.spectral_efficiency
        * carrier.nominal_bandwidth_hz() as f64
        * carrier.slot_duration_us() as f64
        / 1e6;
    // Guard against representation error just below an integer.
    (bits + 1e-9).floor() as u64
}

/// Per-slot capacity for a fixed PHY rate, as used by the calibration mode.
pub fn slot_capacity_from_rate(rate_bps: f64, slot_duration_us: u64) -> u64 {
    (rate_bps * slot_duration_us as f64 / 1e6 + 1e-9).floor() as u64
}

/// Fills one transport block. Returns `None` (the slot idles) when the
/// queue is empty.
pub fn build_transport_block(
    queue: &mut SegmentingQueue<Packet>,
    capacity_bits: u64,
    overhead: &NrOverheadModel,
    slot_start: VirtualTime,
    slot_duration_us: u64,
) -> Option<(CarrierFrame, Fill<Packet>)> {
    if queue.is_empty() {
        return None;
    }
    let usable = (capacity_bits / 8).saturating_sub(overhead.per_tb_header as u64) as u32;
    let fill = queue.fill(usable);
    let used = if fill.used_bytes > 0 {
        fill.used_bytes + overhead.per_tb_header
    } else {
        0
    };
    let frame = CarrierFrame {
        kind: FrameKind::NrSlot,
        start: slot_start,
        airtime_us: slot_duration_us,
        capacity_bits,
        used_bits: used as u64 * 8,
        pieces: fill.pieces.len(),
    };
    Some((frame, fill))
}

/// Scheduling-request based uplink access.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UplinkAccessState {
    pub sr_opportunity_period_us: u64,
    pub koffset_slots: u64,
    pub slot_duration_us: u64,
    /// Flight time of the scheduling request to the gNB.
    pub sr_flight_us: u64,
}

/// Delay from `request_time` until the first uplink byte may depart:
/// alignment to the next SR opportunity, SR flight, then `koffset` slots.
pub fn uplink_access_delay(state: &UplinkAccessState, request_time: VirtualTime) -> u64 {
    let sr_at = grid_at_or_after(
        VirtualTime::ZERO,
        state.sr_opportunity_period_us * 1_000,
        request_time,
    )
    .1;
    sr_at.since(request_time) + state.sr_flight_us + state.koffset_slots * state.slot_duration_us
}

/// How the terminal obtains uplink resources.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UplinkGrant {
    /// A standing per-slot grant: data leaves at the next slot boundary.
    Configured,
    /// Each idle-to-busy transition pays an SR/grant cycle.
    SchedulingRequest(UplinkAccessState),
}

/// One NR direction: a slot grid on which a transport block is built at
/// every boundary while the queue is backlogged.
#[derive(Debug)]
pub struct NrSlotCarrier {
    name: &'static str,
    grid: SlotGrid,
    capacity_bits: u64,
    overhead: NrOverheadModel,
    grant: UplinkGrant,
    queue: SegmentingQueue<Packet>,
    last_served: Option<VirtualTime>,
    /// Earliest time the current grant allows transmission.
    granted_from: Option<VirtualTime>,
    stats: CarrierStats,
}

impl NrSlotCarrier {
    pub fn downlink(slot_duration_us: u64, capacity_bits: u64, overhead: NrOverheadModel) -> Self {
        Self::build("nr-dl", slot_duration_us, capacity_bits, overhead, UplinkGrant::Configured)
    }

    pub fn uplink(
        slot_duration_us: u64,
        capacity_bits: u64,
        overhead: NrOverheadModel,
        grant: UplinkGrant,
    ) -> Self {
        Self::build("nr-ul", slot_duration_us, capacity_bits, overhead, grant)
    }

    fn build(
        name: &'static str,
        slot_duration_us: u64,
        capacity_bits: u64,
        overhead: NrOverheadModel,
        grant: UplinkGrant,
    ) -> Self {
        NrSlotCarrier {
            name,
            grid: SlotGrid::new(slot_duration_us),
            capacity_bits,
            overhead,
            grant,
            queue: SegmentingQueue::new(overhead.framing()),
            last_served: None,
            granted_from: None,
            stats: CarrierStats::default(),
        }
    }

    pub fn grid(&self) -> SlotGrid {
        self.grid
    }

    fn next_service(&self, now: VirtualTime) -> VirtualTime {
        let mut t = now;
        if let Some(g) = self.granted_from {
            t = t.max(g);
        }
        let b = self.grid.boundary_at_or_after(t);
        match self.last_served {
            Some(last) if b <= last => self.grid.boundary_after(last),
            _ => b,
        }
    }
}

impl Carrier for NrSlotCarrier {
    fn name(&self) -> &'static str {
        self.name
    }

    fn enqueue(&mut self, now: VirtualTime, packet: Packet) -> Option<VirtualTime> {
        if self.queue.is_empty() && self.granted_from.is_none() {
            self.granted_from = Some(match &self.grant {
                UplinkGrant::Configured => now,
                UplinkGrant::SchedulingRequest(state) => {
                    self.stats.requests += 1;
                    now.after(uplink_access_delay(state, now))
                }
            });
        }
        self.queue.push(now, packet);
        Some(self.next_service(now))
    }

    fn service(&mut self, now: VirtualTime, out: &mut Vec<Departure>) -> Option<VirtualTime> {
        if self.queue.is_empty() {
            return None;
        }
        if self.granted_from.is_some_and(|g| now < g) || self.last_served.is_some_and(|l| l >= now) {
            return Some(self.next_service(now));
        }
        self.last_served = Some(now);
        let slot = self.grid.slot_duration_us;
        if let Some((frame, fill)) =
            build_transport_block(&mut self.queue, self.capacity_bits, &self.overhead, now, slot)
        {
            self.stats.frames += 1;
            self.stats.capacity_bits += frame.capacity_bits;
            self.stats.used_bits += frame.used_bits;
            for packet in fill.completed {
                self.stats.packets += 1;
                out.push(Departure {
                    at: frame.end(),
                    packet,
                });
            }
        }
        if self.queue.is_empty() {
            // The grant lapses with the backlog.
            self.granted_from = None;
            None
        } else {
            Some(self.grid.boundary_after(now))
        }
    }

    fn stats(&self) -> CarrierStats {
        self.stats
    }

    fn capacity_bps(&self) -> Option<f64> {
        Some(self.capacity_bits as f64 * 1e6 / self.grid.slot_duration_us as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{FlowId, PacketId, Segment};

    fn pkt(id: u64, size: u32) -> Packet {
        Packet {
            id: PacketId(id),
            flow: FlowId(0),
            size,
            created: VirtualTime::ZERO,
            segment: Segment::Data {
                offset: 0,
                len: size,
            },
        }
    }

    fn no_overhead() -> NrOverheadModel {
        NrOverheadModel {
            per_packet_header: 0,
            per_tb_header: 0,
            segment_header: 0,
        }
    }

    #[test]
    fn mcs1_slot_capacity() {
        let c = NrCarrier::new(25, 15_000).unwrap();
        assert_eq!(slot_capacity_bits(&CodingScheme::nr_mcs1(), &c), 685);
        let unit = CodingScheme {
            spectral_efficiency: 1.0,
            ..CodingScheme::nr_mcs1()
        };
        assert_eq!(slot_capacity_from_rate(1e6, 1_000), 1000);
        let c2 = NrCarrier::new(25, 30_000).unwrap();
        // 9 MHz, 0.5 ms -> same bits per slot as 15 kHz.
        assert_eq!(slot_capacity_bits(&unit, &c2), 4500);
        assert_eq!(slot_capacity_from_rate(4.99e6, 1_000), 4990);
    }

    #[test]
    fn transport_block_examples() {
        let mut q = SegmentingQueue::new(no_overhead().framing());
        q.push(VirtualTime::ZERO, pkt(0, 100));
        let (frame, fill) =
            build_transport_block(&mut q, 685, &no_overhead(), VirtualTime::ZERO, 1_000).unwrap();
        assert_eq!(fill.pieces[0].len, 85);
        assert!(fill.completed.is_empty());
        assert_eq!(frame.used_bits, 680);

        let mut empty = SegmentingQueue::new(no_overhead().framing());
        assert!(build_transport_block(&mut empty, 685, &no_overhead(), VirtualTime::ZERO, 1_000).is_none());

        let ov = NrOverheadModel {
            per_packet_header: 5,
            ..no_overhead()
        };
        let mut q = SegmentingQueue::new(ov.framing());
        q.push(VirtualTime::ZERO, pkt(0, 20));
        q.push(VirtualTime::ZERO, pkt(1, 20));
        let (_, fill) = build_transport_block(&mut q, 685, &ov, VirtualTime::ZERO, 1_000).unwrap();
        assert_eq!(fill.completed.len(), 2);
        assert_eq!(fill.used_bytes, 50);
    }

    #[test]
    fn access_delay_alignment() {
        let s = UplinkAccessState {
            sr_opportunity_period_us: 10_000,
            koffset_slots: 520,
            slot_duration_us: 1_000,
            sr_flight_us: 260_000,
        };
        let at = uplink_access_delay(&s, VirtualTime::from_micros(20_000));
        assert_eq!(at, 520_000 + 260_000);
        let late = uplink_access_delay(&s, VirtualTime::from_micros(20_001));
        assert_eq!(late, at + 10_000 - 1);
        let tight = UplinkAccessState {
            sr_opportunity_period_us: 1_000,
            ..s.clone()
        };
        assert_eq!(uplink_access_delay(&tight, VirtualTime::from_micros(3_000)), 780_000);
        assert!(uplink_access_delay(&tight, VirtualTime::from_micros(3_001)) > 780_000);
    }

    #[test]
    fn backlog_uses_every_slot() {
        let mut c = NrSlotCarrier::downlink(1_000, 685, NrOverheadModel::default());
        let mut next = None;
        for i in 0..50 {
            next = c.enqueue(VirtualTime::from_micros(300), pkt(i, 1500)).or(next);
        }
        let mut out = Vec::new();
        let mut t = next.unwrap();
        assert_eq!(t.as_micros(), 1_000);
        let mut slots = Vec::new();
        while let Some(n) = c.service(t, &mut out) {
            slots.push(t.as_micros());
            t = n;
        }
        slots.push(t.as_micros());
        assert!(slots.windows(2).all(|w| w[1] - w[0] == 1_000));
        assert_eq!(out.len(), 50);
        // Order preserved, deliveries at slot ends.
        assert!(out.windows(2).all(|w| w[0].packet.id < w[1].packet.id));
        assert!(out.iter().all(|d| d.at.as_micros() % 1_000 == 0));
        let s = c.stats();
        assert_eq!(s.frames as usize, slots.len());
    }

    #[test]
    fn same_boundary_is_not_served_twice() {
        let mut c = NrSlotCarrier::downlink(1_000, 685, no_overhead());
        let t = c.enqueue(VirtualTime::from_micros(0), pkt(0, 10)).unwrap();
        let mut out = Vec::new();
        assert_eq!(c.service(t, &mut out), None);
        let again = c.enqueue(t, pkt(1, 10)).unwrap();
        assert_eq!(again.as_micros(), 1_000);
    }

    #[test]
    fn scheduling_request_defers_first_slot() {
        let s = UplinkAccessState {
            sr_opportunity_period_us: 10_000,
            koffset_slots: 520,
            slot_duration_us: 1_000,
            sr_flight_us: 260_000,
        };
        let mut c = NrSlotCarrier::uplink(1_000, 685, no_overhead(), UplinkGrant::SchedulingRequest(s));
        let t = c.enqueue(VirtualTime::from_micros(5_000), pkt(0, 10)).unwrap();
        assert_eq!(t.as_micros(), 5_000 + 5_000 + 780_000);
        let mut out = Vec::new();
        assert_eq!(c.service(VirtualTime::from_micros(6_000), &mut out), Some(t));
        assert!(out.is_empty());
        c.service(t, &mut out);
        assert_eq!(out[0].at.as_micros(), t.as_micros() + 1_000);
    }
}
