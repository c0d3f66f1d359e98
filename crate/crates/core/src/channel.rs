//! Static link mathematics and the GEO propagation element.
//!
//! Everything here is a pure function of configuration except
//! [`GeoLink::propagate`], which schedules an arrival through the engine.

use thiserror::Error;

use crate::sim::{Action, Engine, EventId, SimError, VirtualTime};

/// ta-Common granule: 4.072e-3 us, kept in picoseconds so the division is exact.
pub const TA_COMMON_GRANULE_PS: u128 = 4_072;

/// ta-Common value printed in the NR configuration snippet. It does not
/// equal the exact quotient for 260 ms (63 851 669); both are reported.
pub const TA_COMMON_PUBLISHED: u64 = 63_813_480;

/// ECEF ephemeris position step in metres.
pub const ECEF_STEP_M: f64 = 1.3;

/// GEO altitude used for the published `positionZ-r17` value.
pub const GEO_ALTITUDE_M: f64 = 35_786_000.0;

pub const DEFAULT_ONE_WAY_DELAY_US: u64 = 260_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: String,
        reason: &'static str,
    },
    #[error("link SNR {snr_db} dB is below the {scheme} decode threshold {threshold_db} dB")]
    NotDecodable {
        scheme: String,
        snr_db: f64,
        threshold_db: f64,
    },
}

fn invalid(name: &'static str, value: impl ToString, reason: &'static str) -> ChannelError {
    ChannelError::InvalidParameter {
        name,
        value: value.to_string(),
        reason,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadMode {
    /// Bent pipe: no processing delay at the satellite.
    Transparent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeoLink {
    pub one_way_delay_us: u64,
    pub payload: PayloadMode,
}

impl Default for GeoLink {
    fn default() -> Self {
        GeoLink {
            one_way_delay_us: DEFAULT_ONE_WAY_DELAY_US,
            payload: PayloadMode::Transparent,
        }
    }
}

impl GeoLink {
    /// A zero delay is accepted for unit-test topologies.
    pub fn new(one_way_delay_us: u64) -> Self {
        GeoLink {
            one_way_delay_us,
            payload: PayloadMode::Transparent,
        }
    }

    pub fn rtt_us(&self) -> u64 {
        2 * self.one_way_delay_us
    }

    pub fn arrival(&self, departed: VirtualTime) -> VirtualTime {
        match self.payload {
            PayloadMode::Transparent => departed.after(self.one_way_delay_us),
        }
    }

    /// Schedules `arrival` one propagation delay after `departed`.
    pub fn propagate<A: Action>(
        &self,
        engine: &mut Engine<A>,
        departed: VirtualTime,
        arrival: A,
    ) -> Result<EventId, SimError> {
        engine.schedule(self.arrival(departed), arrival)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NrCarrier {
    pub n_prb: u32,
    pub scs_hz: u32,
}

impl NrCarrier {
    pub fn new(n_prb: u32, scs_hz: u32) -> Result<Self, ChannelError> {
        if n_prb == 0 {
            return Err(invalid("n_prb", n_prb, "must be at least 1"));
        }
        if ![15_000, 30_000, 60_000].contains(&scs_hz) {
            return Err(invalid("scs", scs_hz, "must be 15, 30 or 60 kHz"));
        }
        Ok(NrCarrier { n_prb, scs_hz })
    }

    /// 1 ms at 15 kHz, halving with each numerology step.
    pub fn slot_duration_us(&self) -> u64 {
        1_000 * 15_000 / self.scs_hz as u64
    }

    pub fn nominal_bandwidth_hz(&self) -> u64 {
        12 * self.n_prb as u64 * self.scs_hz as u64
    }
}

/// `12 * n_prb * scs`, exact.
pub fn nominal_bandwidth_nr(n_prb: u32, scs_hz: u32) -> Result<u64, ChannelError> {
    Ok(NrCarrier::new(n_prb, scs_hz)?.nominal_bandwidth_hz())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DvbCarrier {
    pub symbol_rate: f64,
    pub roll_off: f64,
}

impl DvbCarrier {
    pub fn new(symbol_rate: f64, roll_off: f64) -> Result<Self, ChannelError> {
        if !(symbol_rate.is_finite() && symbol_rate > 0.0) {
            return Err(invalid("symbol_rate", symbol_rate, "must be positive"));
        }
        if !(0.0..=1.0).contains(&roll_off) {
            return Err(invalid("roll_off", roll_off, "must lie in [0, 1]"));
        }
        Ok(DvbCarrier {
            symbol_rate,
            roll_off,
        })
    }

    pub fn occupied_bandwidth_hz(&self) -> f64 {
        self.symbol_rate * (1.0 + self.roll_off)
    }
}

/// `symbol_rate * (1 + roll_off)`.
pub fn occupied_bandwidth_dvb(symbol_rate: f64, roll_off: f64) -> Result<f64, ChannelError> {
    Ok(DvbCarrier::new(symbol_rate, roll_off)?.occupied_bandwidth_hz())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodingScheme {
    pub label: String,
    /// Bits per symbol.
    pub modulation_order: u32,
    pub code_rate: f64,
    /// bit/s/Hz
    pub spectral_efficiency: f64,
    pub decode_threshold_db: f64,
}

impl CodingScheme {
    /// NR MCS-1: QPSK, rate 0.0762, SE 0.1524.
    pub fn nr_mcs1() -> Self {
        CodingScheme {
            label: "MCS-1".into(),
            modulation_order: 2,
            code_rate: 0.0762,
            spectral_efficiency: 0.1524,
            decode_threshold_db: -3.0,
        }
    }

    /// DVB ModCod-1: QPSK, rate 0.2, SE 0.4.
    pub fn dvb_modcod1() -> Self {
        CodingScheme {
            label: "ModCod-1".into(),
            modulation_order: 2,
            code_rate: 0.2,
            spectral_efficiency: 0.4,
            decode_threshold_db: 6.0,
        }
    }

    /// Checks the common invariants; `nr` additionally demands
    /// `spectral_efficiency ~= modulation_order * code_rate` within 1 %.
    pub fn validate(&self, nr: bool) -> Result<(), ChannelError> {
        if self.modulation_order == 0 {
            return Err(invalid("modulation_order", self.modulation_order, "must be at least 1"));
        }
        if !(self.code_rate > 0.0 && self.code_rate < 1.0) {
            return Err(invalid("code_rate", self.code_rate, "must lie in (0, 1)"));
        }
        if !(self.spectral_efficiency > 0.0) {
            return Err(invalid("spectral_efficiency", self.spectral_efficiency, "must be positive"));
        }
        if nr {
            let nominal = self.modulation_order as f64 * self.code_rate;
            if ((self.spectral_efficiency - nominal) / nominal).abs() > 0.01 {
                return Err(invalid(
                    "spectral_efficiency",
                    self.spectral_efficiency,
                    "differs from modulation_order * code_rate by more than 1%",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub clear_sky_db: f64,
    pub attenuation_db: f64,
}

pub fn link_snr(budget: LinkBudget) -> f64 {
    budget.clear_sky_db - budget.attenuation_db
}

/// Inclusive at the threshold.
pub fn is_decodable(snr_db: f64, scheme: &CodingScheme) -> bool {
    snr_db >= scheme.decode_threshold_db
}

pub fn check_decodable(budget: LinkBudget, scheme: &CodingScheme) -> Result<f64, ChannelError> {
    let snr = link_snr(budget);
    if is_decodable(snr, scheme) {
        Ok(snr)
    } else {
        Err(ChannelError::NotDecodable {
            scheme: scheme.label.clone(),
            snr_db: snr,
            threshold_db: scheme.decode_threshold_db,
        })
    }
}

/// `floor(delay / 4.072 ns)` with the delay given in picoseconds.
pub fn ta_common_granules_ps(one_way_delay_ps: u128) -> u64 {
    (one_way_delay_ps / TA_COMMON_GRANULE_PS) as u64
}

/// Same as [`ta_common_granules_ps`] for a delay in (possibly fractional)
/// microseconds, rounded to the nearest picosecond first.
pub fn ta_common_granules(one_way_delay_us: f64) -> u64 {
    assert!(one_way_delay_us.is_finite() && one_way_delay_us >= 0.0);
    ta_common_granules_ps((one_way_delay_us * 1e6).round() as u128)
}

/// `ceil(rtt / slot)`: the offset has to cover the whole round trip.
pub fn koffset_slots(rtt_us: u64, slot_duration_us: u64) -> u64 {
    assert!(slot_duration_us > 0, "slot duration must be positive");
    rtt_us.div_ceil(slot_duration_us)
}

/// `round(distance / 1.3 m)`.
pub fn ecef_granules(distance_m: f64) -> u64 {
    assert!(distance_m.is_finite() && distance_m >= 0.0);
    (distance_m / ECEF_STEP_M).round() as u64
}
