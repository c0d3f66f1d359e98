//! A terminal and a server joined by one forward and one return carrier
//! over the GEO link, with per-direction processing noise at the receiver.

use crate::channel::GeoLink;
use crate::config::{ScenarioConfig, Stack, UplinkGrantMode};
use crate::dvb::{
    bbframe_airtime_ns, bbframe_info_bits_with_header, gse_rules, DvbForwardCarrier,
    DvbReturnCarrier, ReturnSchedule,
};
use crate::link::{Carrier, CarrierStats, Departure, IdealCarrier};
use crate::ntn::{
    slot_capacity_bits, slot_capacity_from_rate, NrOverheadModel, NrSlotCarrier, UplinkAccessState,
    UplinkGrant,
};
use crate::packet::{Direction, FlowId, Packet, PacketId, Segment};
use crate::sim::{Action, Engine, RngStreams, SimError, StreamId, VirtualTime};

#[derive(Debug, Clone, PartialEq)]
pub enum Ev {
    Service { dir: Direction, gen: u64 },
    Arrive { dir: Direction, packet: Packet },
    Timer { tag: u32, arg: u64 },
}

impl Action for Ev {
    fn kind(&self) -> &'static str {
        match self {
            Ev::Service { .. } => "service",
            Ev::Arrive { .. } => "arrive",
            Ev::Timer { .. } => "timer",
        }
    }

    fn detail(&self) -> String {
        match self {
            Ev::Service { dir, gen } => format!("{dir}:{gen}"),
            Ev::Arrive { dir, packet } => format!("{dir}:{}", packet.describe()),
            Ev::Timer { tag, arg } => format!("{tag}:{arg}"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Noise {
    amplitude_us: f64,
    stream: StreamId,
}

/// Builds the (forward, return) link layers for a scenario.
pub fn build_carriers(cfg: &ScenarioConfig) -> [Box<dyn Carrier>; 2] {
    if !cfg.framing {
        return [Box::new(IdealCarrier::new()), Box::new(IdealCarrier::new())];
    }
    match cfg.stack {
        Stack::Ntn5g => {
            let carrier = cfg.nr_carrier();
            let slot = carrier.slot_duration_us();
            let overhead = NrOverheadModel {
                per_packet_header: cfg.nr.per_packet_header,
                per_tb_header: cfg.nr.per_tb_header,
                segment_header: cfg.nr.segment_header,
            };
            let ul_bits = slot_capacity_bits(&cfg.nr_scheme(), &carrier);
            let dl_bits = cfg
                .nr_rate_override()
                .map_or(ul_bits, |rate| slot_capacity_from_rate(rate, slot));
            let grant = match cfg.nr.uplink_grant {
                UplinkGrantMode::Configured => UplinkGrant::Configured,
                UplinkGrantMode::SchedulingRequest => UplinkGrant::SchedulingRequest(UplinkAccessState {
                    sr_opportunity_period_us: cfg.nr.sr_period_slots * slot,
                    koffset_slots: cfg.koffset(),
                    slot_duration_us: slot,
                    sr_flight_us: cfg.one_way_delay_us(),
                }),
            };
            [
                Box::new(NrSlotCarrier::downlink(slot, dl_bits, overhead)),
                Box::new(NrSlotCarrier::uplink(slot, ul_bits, overhead, grant)),
            ]
        }
        Stack::DvbS2Rcs2 => {
            let d = &cfg.dvb;
            let scheme = cfg.dvb_scheme();
            let rules = gse_rules(d.gse_header, d.gse_continuation_header);
            let info = bbframe_info_bits_with_header(d.fecframe.bits(), scheme.code_rate, d.bbheader_bits)
                .expect("validated");
            let airtime = bbframe_airtime_ns(d.fecframe.bits(), &scheme, &cfg.dvb_carrier());
            let schedule = ReturnSchedule {
                superframe_period_us: d.superframe_ms * 1_000.0,
                terminal_slot_offset_us: (d.terminal_slot_offset_ms * 1_000.0).round() as u64,
                grant_exchange: d.grant_exchange,
                grant_round_trip_us: cfg.rtt_us(),
            };
            [
                Box::new(DvbForwardCarrier::new(
                    info,
                    airtime,
                    (d.assembly_timer_ms * 1_000.0).round() as u64,
                    rules,
                )),
                Box::new(DvbReturnCarrier::new(
                    schedule,
                    d.cra_kbps * 1_000.0,
                    cfg.dvb_return_rate_bps(),
                    rules,
                )),
            ]
        }
    }
}

pub struct Network {
    carriers: [Box<dyn Carrier>; 2],
    geo: GeoLink,
    noise: [Option<Noise>; 2],
    last_delivery: [VirtualTime; 2],
    pending: [Option<VirtualTime>; 2],
    gen: [u64; 2],
    next_packet: u64,
    scratch: Vec<Departure>,
}

impl Network {
    pub fn new(cfg: &ScenarioConfig, rng: &mut RngStreams) -> Self {
        let (amp_ms, dirn) = match cfg.stack {
            Stack::Ntn5g => (cfg.nr.noise_ms, cfg.nr.noise_direction),
            Stack::DvbS2Rcs2 => (cfg.dvb.noise_ms, cfg.dvb.noise_direction),
        };
        let mut noise = [None, None];
        if amp_ms > 0.0 {
            if dirn.forward() {
                noise[0] = Some(Noise {
                    amplitude_us: amp_ms * 1_000.0,
                    stream: rng.register("noise.fwd"),
                });
            }
            if dirn.ret() {
                noise[1] = Some(Noise {
                    amplitude_us: amp_ms * 1_000.0,
                    stream: rng.register("noise.ret"),
                });
            }
        }
        Self::with_carriers(build_carriers(cfg), GeoLink::new(cfg.one_way_delay_us()), noise)
    }

    fn with_carriers(carriers: [Box<dyn Carrier>; 2], geo: GeoLink, noise: [Option<Noise>; 2]) -> Self {
        Network {
            carriers,
            geo,
            noise,
            last_delivery: [VirtualTime::ZERO; 2],
            pending: [None; 2],
            gen: [0; 2],
            next_packet: 0,
            scratch: Vec::new(),
        }
    }

    pub fn geo(&self) -> GeoLink {
        self.geo
    }

    pub fn stats(&self, dir: Direction) -> CarrierStats {
        self.carriers[dir.index()].stats()
    }

    pub fn capacity_bps(&self, dir: Direction) -> Option<f64> {
        self.carriers[dir.index()].capacity_bps()
    }

    /// Hands a new packet to the `dir` carrier.
    pub fn send(
        &mut self,
        eng: &mut Engine<Ev>,
        dir: Direction,
        flow: FlowId,
        size: u32,
        segment: Segment,
    ) -> Result<PacketId, SimError> {
        let id = PacketId(self.next_packet);
        self.next_packet += 1;
        let packet = Packet {
            id,
            flow,
            size,
            created: eng.now(),
            segment,
        };
        let want = self.carriers[dir.index()].enqueue(eng.now(), packet);
        self.request_service(eng, dir, want)?;
        Ok(id)
    }

    fn request_service(
        &mut self,
        eng: &mut Engine<Ev>,
        dir: Direction,
        want: Option<VirtualTime>,
    ) -> Result<(), SimError> {
        let i = dir.index();
        let Some(at) = want else { return Ok(()) };
        if self.pending[i].is_some_and(|p| p <= at) {
            return Ok(());
        }
        self.gen[i] += 1;
        self.pending[i] = Some(at);
        eng.schedule(at, Ev::Service { dir, gen: self.gen[i] })?;
        Ok(())
    }

    pub fn on_service(&mut self, eng: &mut Engine<Ev>, dir: Direction, gen: u64) -> Result<(), SimError> {
        let i = dir.index();
        if gen != self.gen[i] {
            return Ok(());
        }
        self.pending[i] = None;
        let mut out = std::mem::take(&mut self.scratch);
        let next = self.carriers[i].service(eng.now(), &mut out);
        for dep in out.drain(..) {
            let mut at = self.geo.arrival(dep.at);
            if let Some(n) = self.noise[i] {
                let u = eng.rng().uniform(n.stream);
                at = at.after((u * n.amplitude_us).round() as u64);
            }
            // Processing keeps per-direction order.
            at = at.max(self.last_delivery[i]);
            self.last_delivery[i] = at;
            eng.schedule(at, Ev::Arrive { dir, packet: dep.packet })?;
        }
        self.scratch = out;
        self.request_service(eng, dir, next)
    }
}
