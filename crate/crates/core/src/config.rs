//! Scenario configuration: a flat `key = value` format with dotted
//! sections, strict key checking, a canonical serialisation and its hash.

use std::fmt;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{
    check_decodable, koffset_slots, CodingScheme, DvbCarrier, LinkBudget, NrCarrier,
};
use crate::dvb::{FECFRAME_NORMAL, FECFRAME_SHORT};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: key `{key}` given twice")]
    DuplicateKey { key: String, line: usize },
    #[error("`{key}`: invalid value `{value}`, expected {expected}")]
    InvalidValue {
        key: String,
        value: String,
        expected: String,
    },
    #[error("`{key}`: {message}")]
    Inconsistent { key: String, message: String },
}

impl ConfigError {
    /// Dotted path of the offending key, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey { key, .. }
            | ConfigError::DuplicateKey { key, .. }
            | ConfigError::InvalidValue { key, .. }
            | ConfigError::Inconsistent { key, .. } => Some(key),
            _ => None,
        }
    }
}

fn invalid(key: &str, value: &str, expected: &str) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
        expected: expected.into(),
    }
}

fn inconsistent(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Inconsistent {
        key: key.into(),
        message: message.into(),
    }
}

macro_rules! keyword_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }

            fn parse(key: &str, v: &str) -> Result<Self, ConfigError> {
                match v {
                    $($text => Ok($name::$variant),)+
                    _ => Err(invalid(key, v, concat!("one of:" $(, " ", $text)+))),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl std::str::FromStr for $name {
            type Err = ConfigError;
            fn from_str(s: &str) -> Result<Self, ConfigError> {
                Self::parse(stringify!($name), s)
            }
        }
    };
}

keyword_enum!(Stack { Ntn5g => "ntn5g", DvbS2Rcs2 => "dvb-s2-rcs2" });
keyword_enum!(Mode { CapacityTrue => "capacity-true", PaperCalibration => "paper-calibration" });
keyword_enum!(UplinkGrantMode { Configured => "configured", SchedulingRequest => "scheduling-request" });
keyword_enum!(NoiseDirection { Forward => "forward", Return => "return", Both => "both" });
keyword_enum!(FecFrame { Normal => "normal", Short => "short" });

impl Stack {
    pub fn short_name(self) -> &'static str {
        match self {
            Stack::Ntn5g => "5G",
            Stack::DvbS2Rcs2 => "DVB",
        }
    }
}

impl FecFrame {
    pub fn bits(self) -> u32 {
        match self {
            FecFrame::Normal => FECFRAME_NORMAL,
            FecFrame::Short => FECFRAME_SHORT,
        }
    }
}

impl NoiseDirection {
    pub fn forward(self) -> bool {
        matches!(self, NoiseDirection::Forward | NoiseDirection::Both)
    }

    pub fn ret(self) -> bool {
        matches!(self, NoiseDirection::Return | NoiseDirection::Both)
    }
}

/// Effective NR PHY rate used by the paper-calibration mode when no
/// explicit override is given.
pub const CALIBRATION_NR_RATE_BPS: f64 = 4.99e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Koffset {
    Auto,
    Fixed(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NrConfig {
    pub n_prb: u32,
    pub scs_khz: u32,
    pub mcs: u32,
    pub koffset: Koffset,
    pub sr_period_slots: u64,
    pub uplink_grant: UplinkGrantMode,
    pub per_packet_header: u32,
    pub per_tb_header: u32,
    pub segment_header: u32,
    pub noise_ms: f64,
    pub noise_direction: NoiseDirection,
    pub phy_rate_override_bps: Option<f64>,
    pub decode_threshold_db: f64,
    /// Satellite position along z in the ECEF ephemeris, metres.
    pub ephemeris_z_m: f64,
}

impl Default for NrConfig {
    fn default() -> Self {
        NrConfig {
            n_prb: 25,
            scs_khz: 15,
            mcs: 1,
            koffset: Koffset::Auto,
            sr_period_slots: 10,
            uplink_grant: UplinkGrantMode::Configured,
            per_packet_header: 23,
            per_tb_header: 3,
            segment_header: 2,
            noise_ms: 12.0,
            noise_direction: NoiseDirection::Forward,
            phy_rate_override_bps: None,
            decode_threshold_db: -3.0,
            ephemeris_z_m: 35_786_000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DvbConfig {
    pub symbol_rate: f64,
    pub roll_off: f64,
    pub modcod: u32,
    pub fecframe: FecFrame,
    pub bbheader_bits: u64,
    pub gse_header: u32,
    pub gse_continuation_header: u32,
    pub superframe_ms: f64,
    pub terminal_slot_offset_ms: f64,
    pub assembly_timer_ms: f64,
    pub grant_exchange: bool,
    pub cra_kbps: f64,
    /// `None`: symbol rate times spectral efficiency.
    pub return_rate_kbps: Option<f64>,
    pub noise_ms: f64,
    pub noise_direction: NoiseDirection,
    pub decode_threshold_db: f64,
}

impl Default for DvbConfig {
    fn default() -> Self {
        DvbConfig {
            symbol_rate: 5e6,
            roll_off: 0.35,
            modcod: 1,
            fecframe: FecFrame::Normal,
            bbheader_bits: 80,
            gse_header: 10,
            gse_continuation_header: 3,
            superframe_ms: 30.0,
            terminal_slot_offset_ms: 0.0,
            assembly_timer_ms: 2.0,
            grant_exchange: true,
            cra_kbps: 64.0,
            return_rate_kbps: None,
            noise_ms: 0.0,
            noise_direction: NoiseDirection::Forward,
            decode_threshold_db: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportConfig {
    pub mss: u32,
    pub initial_cwnd: f64,
    /// `None`: unbounded (pure slow start).
    pub ssthresh: Option<f64>,
    /// HTTP request payload carried after the handshake.
    pub request_bytes: u32,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            mss: 1460,
            initial_cwnd: 10.0,
            ssthresh: None,
            request_bytes: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadConfig {
    pub repetitions: u32,
    pub probes: u32,
    pub probe_interval_ms: f64,
    pub video_buffer_bytes: u64,
    pub webpage_bytes: u64,
    pub webpage_processing_ms: f64,
    pub download_bytes: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            repetitions: 5,
            probes: 100,
            probe_interval_ms: 1000.0,
            video_buffer_bytes: 33_500_000,
            webpage_bytes: 3_000_000,
            webpage_processing_ms: 7000.0,
            download_bytes: 100_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub stack: Stack,
    pub mode: Mode,
    pub seed: u64,
    pub one_way_delay_ms: f64,
    /// `false` replaces both link layers with ideal pipes.
    pub framing: bool,
    pub max_time_s: f64,
    clear_sky_db: Option<f64>,
    attenuation_db: Option<f64>,
    pub nr: NrConfig,
    pub dvb: DvbConfig,
    pub transport: TransportConfig,
    pub workload: WorkloadConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            stack: Stack::Ntn5g,
            mode: Mode::CapacityTrue,
            seed: 1,
            one_way_delay_ms: 260.0,
            framing: true,
            max_time_s: 7200.0,
            clear_sky_db: None,
            attenuation_db: None,
            nr: NrConfig::default(),
            dvb: DvbConfig::default(),
            transport: TransportConfig::default(),
            workload: WorkloadConfig::default(),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| invalid(key, v, "a finite number"))
}

fn parse_non_negative(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x = parse_f64(key, v)?;
    if x < 0.0 {
        return Err(invalid(key, v, "a number >= 0"));
    }
    Ok(x)
}

fn parse_positive(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x = parse_f64(key, v)?;
    if x <= 0.0 {
        return Err(invalid(key, v, "a number > 0"));
    }
    Ok(x)
}

fn parse_int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.replace('_', "")
        .parse::<T>()
        .map_err(|_| invalid(key, v, "a non-negative integer"))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(invalid(key, v, "true or false")),
    }
}

fn parse_optional(v: &str) -> Option<&str> {
    match v {
        "none" | "auto" => None,
        other => Some(other),
    }
}

impl ScenarioConfig {
    pub fn for_stack(stack: Stack) -> Self {
        ScenarioConfig {
            stack,
            ..Self::default()
        }
    }

    /// Resolved link budget; the defaults depend on the stack.
    pub fn budget(&self) -> LinkBudget {
        let (cs, att) = match self.stack {
            Stack::Ntn5g => (0.0, 3.0),
            Stack::DvbS2Rcs2 => (50.0, 44.0),
        };
        LinkBudget {
            clear_sky_db: self.clear_sky_db.unwrap_or(cs),
            attenuation_db: self.attenuation_db.unwrap_or(att),
        }
    }

    pub fn set_budget(&mut self, clear_sky_db: f64, attenuation_db: f64) {
        self.clear_sky_db = Some(clear_sky_db);
        self.attenuation_db = Some(attenuation_db);
    }

    pub fn one_way_delay_us(&self) -> u64 {
        (self.one_way_delay_ms * 1_000.0).round() as u64
    }

    pub fn rtt_us(&self) -> u64 {
        2 * self.one_way_delay_us()
    }

    pub fn nr_carrier(&self) -> NrCarrier {
        NrCarrier::new(self.nr.n_prb, self.nr.scs_khz * 1_000).expect("validated")
    }

    pub fn dvb_carrier(&self) -> DvbCarrier {
        DvbCarrier::new(self.dvb.symbol_rate, self.dvb.roll_off).expect("validated")
    }

    pub fn nr_scheme(&self) -> CodingScheme {
        CodingScheme {
            decode_threshold_db: self.nr.decode_threshold_db,
            ..CodingScheme::nr_mcs1()
        }
    }

    pub fn dvb_scheme(&self) -> CodingScheme {
        CodingScheme {
            decode_threshold_db: self.dvb.decode_threshold_db,
            ..CodingScheme::dvb_modcod1()
        }
    }

    pub fn koffset(&self) -> u64 {
        match self.nr.koffset {
            Koffset::Fixed(k) => k,
            Koffset::Auto => koffset_slots(self.rtt_us(), self.nr_carrier().slot_duration_us()),
        }
    }

    /// Downlink PHY rate override in effect, if any.
    pub fn nr_rate_override(&self) -> Option<f64> {
        match self.mode {
            Mode::CapacityTrue => None,
            Mode::PaperCalibration => {
                Some(self.nr.phy_rate_override_bps.unwrap_or(CALIBRATION_NR_RATE_BPS))
            }
        }
    }

    pub fn dvb_return_rate_bps(&self) -> f64 {
        match self.dvb.return_rate_kbps {
            Some(k) => k * 1_000.0,
            None => self.dvb.symbol_rate * self.dvb_scheme().spectral_efficiency,
        }
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "stack" => self.stack = Stack::parse(key, v)?,
            "mode" => self.mode = Mode::parse(key, v)?,
            "seed" => self.seed = parse_int(key, v)?,
            "one_way_delay_ms" => self.one_way_delay_ms = parse_non_negative(key, v)?,
            "framing" => self.framing = parse_bool(key, v)?,
            "sim.max_time_s" => self.max_time_s = parse_positive(key, v)?,
            "budget.clear_sky_db" => self.clear_sky_db = Some(parse_f64(key, v)?),
            "budget.attenuation_db" => self.attenuation_db = Some(parse_f64(key, v)?),

            "nr.n_prb" => self.nr.n_prb = parse_int(key, v)?,
            "nr.scs_khz" => self.nr.scs_khz = parse_int(key, v)?,
            "nr.mcs" => self.nr.mcs = parse_int(key, v)?,
            "nr.koffset" => {
                self.nr.koffset = match v {
                    "auto" => Koffset::Auto,
                    _ => Koffset::Fixed(parse_int(key, v)?),
                }
            }
            "nr.sr_period_slots" => self.nr.sr_period_slots = parse_int(key, v)?,
            "nr.uplink_grant" => self.nr.uplink_grant = UplinkGrantMode::parse(key, v)?,
            "nr.per_packet_header" => self.nr.per_packet_header = parse_int(key, v)?,
            "nr.per_tb_header" => self.nr.per_tb_header = parse_int(key, v)?,
            "nr.segment_header" => self.nr.segment_header = parse_int(key, v)?,
            "nr.noise_ms" => self.nr.noise_ms = parse_non_negative(key, v)?,
            "nr.noise_direction" => self.nr.noise_direction = NoiseDirection::parse(key, v)?,
            "nr.phy_rate_override_bps" => {
                self.nr.phy_rate_override_bps =
                    parse_optional(v).map(|x| parse_positive(key, x)).transpose()?
            }
            "nr.decode_threshold_db" => self.nr.decode_threshold_db = parse_f64(key, v)?,
            "nr.ephemeris_z_m" => self.nr.ephemeris_z_m = parse_non_negative(key, v)?,

            "dvb.symbol_rate" => self.dvb.symbol_rate = parse_positive(key, v)?,
            "dvb.roll_off" => self.dvb.roll_off = parse_non_negative(key, v)?,
            "dvb.modcod" => self.dvb.modcod = parse_int(key, v)?,
            "dvb.fecframe" => self.dvb.fecframe = FecFrame::parse(key, v)?,
            "dvb.bbheader_bits" => self.dvb.bbheader_bits = parse_int(key, v)?,
            "dvb.gse_header" => self.dvb.gse_header = parse_int(key, v)?,
            "dvb.gse_continuation_header" => self.dvb.gse_continuation_header = parse_int(key, v)?,
            "dvb.superframe_ms" => self.dvb.superframe_ms = parse_positive(key, v)?,
            "dvb.terminal_slot_offset_ms" => {
                self.dvb.terminal_slot_offset_ms = parse_non_negative(key, v)?
            }
            "dvb.assembly_timer_ms" => self.dvb.assembly_timer_ms = parse_non_negative(key, v)?,
            "dvb.grant_exchange" => self.dvb.grant_exchange = parse_bool(key, v)?,
            "dvb.cra_kbps" => self.dvb.cra_kbps = parse_non_negative(key, v)?,
            "dvb.return_rate_kbps" => {
                self.dvb.return_rate_kbps =
                    parse_optional(v).map(|x| parse_positive(key, x)).transpose()?
            }
            "dvb.noise_ms" => self.dvb.noise_ms = parse_non_negative(key, v)?,
            "dvb.noise_direction" => self.dvb.noise_direction = NoiseDirection::parse(key, v)?,
            "dvb.decode_threshold_db" => self.dvb.decode_threshold_db = parse_f64(key, v)?,

            "transport.mss" => self.transport.mss = parse_int(key, v)?,
            "transport.initial_cwnd" => self.transport.initial_cwnd = parse_positive(key, v)?,
            "transport.ssthresh" => {
                self.transport.ssthresh = match v {
                    "inf" | "none" => None,
                    _ => Some(parse_positive(key, v)?),
                }
            }
            "transport.request_bytes" => self.transport.request_bytes = parse_int(key, v)?,

            "workload.repetitions" => self.workload.repetitions = parse_int(key, v)?,
            "workload.probes" => self.workload.probes = parse_int(key, v)?,
            "workload.probe_interval_ms" => self.workload.probe_interval_ms = parse_positive(key, v)?,
            "workload.video_buffer_bytes" => self.workload.video_buffer_bytes = parse_int(key, v)?,
            "workload.webpage_bytes" => self.workload.webpage_bytes = parse_int(key, v)?,
            "workload.webpage_processing_ms" => {
                self.workload.webpage_processing_ms = parse_non_negative(key, v)?
            }
            "workload.download_bytes" => self.workload.download_bytes = parse_int(key, v)?,
            _ => return Err(ConfigError::UnknownKey { key: key.into(), line: 0 }),
        }
        Ok(())
    }

    /// Cross-field checks; run after every modification.
    pub fn validate(&self) -> Result<(), ConfigError> {
        NrCarrier::new(self.nr.n_prb, self.nr.scs_khz.saturating_mul(1_000)).map_err(|e| {
            let key = if self.nr.n_prb == 0 { "nr.n_prb" } else { "nr.scs_khz" };
            inconsistent(key, e.to_string())
        })?;
        DvbCarrier::new(self.dvb.symbol_rate, self.dvb.roll_off)
            .map_err(|e| inconsistent("dvb.roll_off", e.to_string()))?;
        if self.nr.mcs != 1 {
            return Err(invalid("nr.mcs", &self.nr.mcs.to_string(), "1 (only MCS-1 is modelled)"));
        }
        if self.dvb.modcod != 1 {
            return Err(invalid(
                "dvb.modcod",
                &self.dvb.modcod.to_string(),
                "1 (only ModCod-1 is modelled)",
            ));
        }
        if self.nr.sr_period_slots == 0 {
            return Err(invalid("nr.sr_period_slots", "0", "at least 1"));
        }
        if self.transport.mss == 0 {
            return Err(invalid("transport.mss", "0", "at least 1"));
        }
        if self.transport.initial_cwnd < 1.0 {
            return Err(inconsistent("transport.initial_cwnd", "cwnd must be at least 1 segment"));
        }
        if self.workload.repetitions == 0 {
            return Err(invalid("workload.repetitions", "0", "at least 1"));
        }
        if self.workload.probes < 2 {
            return Err(inconsistent("workload.probes", "jitter needs at least 2 probes"));
        }
        if let Koffset::Fixed(k) = self.nr.koffset {
            let needed = koffset_slots(self.rtt_us(), self.nr_carrier().slot_duration_us());
            if k < needed {
                return Err(inconsistent(
                    "nr.koffset",
                    format!("{k} slots do not cover the {} us round trip (need >= {needed})", self.rtt_us()),
                ));
            }
        }
        if self.mode == Mode::CapacityTrue && self.nr.phy_rate_override_bps.is_some() {
            return Err(inconsistent(
                "nr.phy_rate_override_bps",
                "a PHY rate override is only allowed in paper-calibration mode",
            ));
        }
        let info = crate::dvb::bbframe_info_bits_with_header(
            self.dvb.fecframe.bits(),
            self.dvb_scheme().code_rate,
            self.dvb.bbheader_bits,
        )
        .map_err(|e| inconsistent("dvb.fecframe", e.to_string()))?;
        if info / 8 <= self.dvb.gse_header as u64 {
            return Err(inconsistent("dvb.bbheader_bits", "BBFRAME leaves no room for a GSE PDU"));
        }
        if self.dvb.cra_kbps * 1_000.0 > self.dvb_return_rate_bps() {
            return Err(inconsistent("dvb.cra_kbps", "standing allocation exceeds the return rate"));
        }
        let scheme = match self.stack {
            Stack::Ntn5g => self.nr_scheme(),
            Stack::DvbS2Rcs2 => self.dvb_scheme(),
        };
        check_decodable(self.budget(), &scheme)
            .map_err(|e| inconsistent("budget.attenuation_db", e.to_string()))?;
        Ok(())
    }

    /// Every key with its resolved value, in a fixed order. Only the active
    /// stack's block is emitted.
    pub fn canonical(&self) -> String {
        let mut kv: Vec<(&str, String)> = vec![
            ("stack", self.stack.to_string()),
            ("mode", self.mode.to_string()),
            ("seed", self.seed.to_string()),
            ("one_way_delay_ms", self.one_way_delay_ms.to_string()),
            ("framing", self.framing.to_string()),
            ("sim.max_time_s", self.max_time_s.to_string()),
            ("budget.clear_sky_db", self.budget().clear_sky_db.to_string()),
            ("budget.attenuation_db", self.budget().attenuation_db.to_string()),
        ];
        let opt = |x: Option<f64>| x.map_or("none".to_string(), |v| v.to_string());
        match self.stack {
            Stack::Ntn5g => {
                let n = &self.nr;
                kv.extend([
                    ("nr.n_prb", n.n_prb.to_string()),
                    ("nr.scs_khz", n.scs_khz.to_string()),
                    ("nr.mcs", n.mcs.to_string()),
                    (
                        "nr.koffset",
                        match n.koffset {
                            Koffset::Auto => "auto".into(),
                            Koffset::Fixed(k) => k.to_string(),
                        },
                    ),
                    ("nr.sr_period_slots", n.sr_period_slots.to_string()),
                    ("nr.uplink_grant", n.uplink_grant.to_string()),
                    ("nr.per_packet_header", n.per_packet_header.to_string()),
                    ("nr.per_tb_header", n.per_tb_header.to_string()),
                    ("nr.segment_header", n.segment_header.to_string()),
                    ("nr.noise_ms", n.noise_ms.to_string()),
                    ("nr.noise_direction", n.noise_direction.to_string()),
                    ("nr.phy_rate_override_bps", opt(n.phy_rate_override_bps)),
                    ("nr.decode_threshold_db", n.decode_threshold_db.to_string()),
                    ("nr.ephemeris_z_m", n.ephemeris_z_m.to_string()),
                ]);
            }
            Stack::DvbS2Rcs2 => {
                let d = &self.dvb;
                kv.extend([
                    ("dvb.symbol_rate", d.symbol_rate.to_string()),
                    ("dvb.roll_off", d.roll_off.to_string()),
                    ("dvb.modcod", d.modcod.to_string()),
                    ("dvb.fecframe", d.fecframe.to_string()),
                    ("dvb.bbheader_bits", d.bbheader_bits.to_string()),
                    ("dvb.gse_header", d.gse_header.to_string()),
                    ("dvb.gse_continuation_header", d.gse_continuation_header.to_string()),
                    ("dvb.superframe_ms", d.superframe_ms.to_string()),
                    ("dvb.terminal_slot_offset_ms", d.terminal_slot_offset_ms.to_string()),
                    ("dvb.assembly_timer_ms", d.assembly_timer_ms.to_string()),
                    ("dvb.grant_exchange", d.grant_exchange.to_string()),
                    ("dvb.cra_kbps", d.cra_kbps.to_string()),
                    ("dvb.return_rate_kbps", opt(d.return_rate_kbps)),
                    ("dvb.noise_ms", d.noise_ms.to_string()),
                    ("dvb.noise_direction", d.noise_direction.to_string()),
                    ("dvb.decode_threshold_db", d.decode_threshold_db.to_string()),
                ]);
            }
        }
        let t = &self.transport;
        let w = &self.workload;
        kv.extend([
            ("transport.mss", t.mss.to_string()),
            ("transport.initial_cwnd", t.initial_cwnd.to_string()),
            ("transport.ssthresh", t.ssthresh.map_or("inf".into(), |v| v.to_string())),
            ("transport.request_bytes", t.request_bytes.to_string()),
            ("workload.repetitions", w.repetitions.to_string()),
            ("workload.probes", w.probes.to_string()),
            ("workload.probe_interval_ms", w.probe_interval_ms.to_string()),
            ("workload.video_buffer_bytes", w.video_buffer_bytes.to_string()),
            ("workload.webpage_bytes", w.webpage_bytes.to_string()),
            ("workload.webpage_processing_ms", w.webpage_processing_ms.to_string()),
            ("workload.download_bytes", w.download_bytes.to_string()),
        ]);
        let mut s = String::new();
        for (k, v) in kv {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    /// Hex SHA-256 of [`ScenarioConfig::canonical`].
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

/// Parses configuration text. Keys of the inactive stack block are
/// rejected so that a mis-targeted file cannot silently do nothing.
pub fn parse_scenario_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = ScenarioConfig::default();
    let mut seen: Vec<(String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = key.trim();
        let value = value.trim().trim_matches('"');
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
            return Err(ConfigError::Syntax {
                line,
                message: format!("malformed key `{key}`"),
            });
        }
        if seen.iter().any(|(k, _)| k == key) {
            return Err(ConfigError::DuplicateKey { key: key.into(), line });
        }
        cfg.set(key, value).map_err(|e| match e {
            ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { key, line },
            other => other,
        })?;
        seen.push((key.to_string(), line));
    }
    let inactive = match cfg.stack {
        Stack::Ntn5g => "dvb.",
        Stack::DvbS2Rcs2 => "nr.",
    };
    if let Some((key, _)) = seen.iter().find(|(k, _)| k.starts_with(inactive)) {
        return Err(inconsistent(
            key,
            format!("belongs to the inactive stack block (stack = {})", cfg.stack),
        ));
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_scenario_str("").unwrap();
        assert_eq!(c, ScenarioConfig::default());
        assert_eq!(c.nr_carrier().nominal_bandwidth_hz(), 4_500_000);
        assert_eq!(c.koffset(), 520);
    }

    #[test]
    fn dvb_defaults() {
        let c = parse_scenario_str("stack = dvb-s2-rcs2\n").unwrap();
        assert_eq!(c.dvb_carrier().occupied_bandwidth_hz(), 6_750_000.0);
        assert_eq!(crate::channel::link_snr(c.budget()), 6.0);
    }

    #[test]
    fn comments_and_spacing() {
        let c = parse_scenario_str("# header\n  seed=7   # trailing\n\nnr.koffset = 600\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.koffset(), 600);
    }

    #[test]
    fn errors_name_the_key() {
        let e = parse_scenario_str("nr.bogus = 1").unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey { line: 1, .. }));
        assert_eq!(e.key(), Some("nr.bogus"));

        let e = parse_scenario_str("nr.koffset = 100").unwrap_err();
        assert!(matches!(e, ConfigError::Inconsistent { .. }));
        assert_eq!(e.key(), Some("nr.koffset"));

        let e = parse_scenario_str("dvb.roll_off = abc\nstack = dvb-s2-rcs2").unwrap_err();
        assert!(matches!(e, ConfigError::InvalidValue { .. }));
        assert_eq!(e.key(), Some("dvb.roll_off"));

        let e = parse_scenario_str("seed = 1\nseed = 2").unwrap_err();
        assert!(matches!(e, ConfigError::DuplicateKey { line: 2, .. }));

        let e = parse_scenario_str("nr.phy_rate_override_bps = 4.99e6").unwrap_err();
        assert_eq!(e.key(), Some("nr.phy_rate_override_bps"));

        let e = parse_scenario_str("dvb.superframe_ms = 10").unwrap_err();
        assert_eq!(e.key(), Some("dvb.superframe_ms"));

        let e = parse_scenario_str("budget.attenuation_db = 4").unwrap_err();
        assert_eq!(e.key(), Some("budget.attenuation_db"));

        assert!(matches!(
            parse_scenario_str("just words").unwrap_err(),
            ConfigError::Syntax { line: 1, .. }
        ));
        assert!(matches!(
            parse_scenario(Path::new("/nonexistent/x.cfg")).unwrap_err(),
            ConfigError::Io { .. }
        ));
    }

    #[test]
    fn calibration_override() {
        let c = parse_scenario_str("mode = paper-calibration").unwrap();
        assert_eq!(c.nr_rate_override(), Some(4.99e6));
        let c = parse_scenario_str("mode = paper-calibration\nnr.phy_rate_override_bps = 5e6").unwrap();
        assert_eq!(c.nr_rate_override(), Some(5e6));
        assert_eq!(ScenarioConfig::default().nr_rate_override(), None);
    }

    #[test]
    fn canonical_round_trip() {
        for text in [
            "",
            "stack = dvb-s2-rcs2\ndvb.superframe_ms = 30.25",
            "mode = paper-calibration\nnr.koffset = 530\none_way_delay_ms = 120.5",
        ] {
            let a = parse_scenario_str(text).unwrap();
            let b = parse_scenario_str(&a.canonical()).unwrap();
            assert_eq!(a.fingerprint(), b.fingerprint());
            assert_eq!(b.canonical(), a.canonical());
        }
        let a = parse_scenario_str("seed = 1").unwrap();
        let b = parse_scenario_str("seed = 2").unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn zero_delay_is_valid() {
        let c = parse_scenario_str("one_way_delay_ms = 0").unwrap();
        assert_eq!(c.koffset(), 0);
    }
}
