//! Derived static parameters of a scenario as a diffable key-value listing.

use crate::channel::{
    ecef_granules, link_snr, ta_common_granules, TA_COMMON_PUBLISHED,
};
use crate::config::{ScenarioConfig, Stack};
use crate::dvb::{bbframe_airtime_ns, bbframe_info_bits_with_header};
use crate::ntn::{slot_capacity_bits, slot_capacity_from_rate};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamList(pub Vec<(String, String)>);

impl ParamList {
    fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let w = self.0.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        self.0.iter().map(|(k, v)| format!("{k:<w$} = {v}\n")).collect()
    }
}

fn num(x: f64) -> String {
    // Integral values print without a fractional part so they diff cleanly.
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

pub fn static_params(cfg: &ScenarioConfig) -> ParamList {
    let mut p = ParamList(Vec::new());
    p.push("stack", cfg.stack);
    p.push("mode", cfg.mode);
    p.push("config_fingerprint", cfg.fingerprint());
    p.push("one_way_delay_us", cfg.one_way_delay_us());
    p.push("rtt_us", cfg.rtt_us());
    let snr = link_snr(cfg.budget());
    match cfg.stack {
        Stack::Ntn5g => {
            let carrier = cfg.nr_carrier();
            let scheme = cfg.nr_scheme();
            let slot = carrier.slot_duration_us();
            p.push("nr.nominal_bandwidth_hz", carrier.nominal_bandwidth_hz());
            p.push("nr.slot_duration_us", slot);
            let exact = ta_common_granules(cfg.one_way_delay_us() as f64);
            p.push("nr.ta_common_exact", exact);
            p.push("nr.ta_common_published", TA_COMMON_PUBLISHED);
            p.push("nr.ta_common_discrepancy", exact != TA_COMMON_PUBLISHED);
            p.push("nr.koffset_slots", cfg.koffset());
            p.push("nr.ecef_z_granules", ecef_granules(cfg.nr.ephemeris_z_m));
            p.push("nr.link_snr_db", num(snr));
            p.push("nr.decodable", snr >= scheme.decode_threshold_db);
            let bound = scheme.spectral_efficiency * carrier.nominal_bandwidth_hz() as f64;
            p.push("nr.capacity_bound_bps", num(bound.round()));
            let bits = slot_capacity_bits(&scheme, &carrier);
            p.push("nr.slot_capacity_bits", bits);
            p.push("nr.uplink_capacity_bps", bits * 1_000_000 / slot);
            let dl = cfg
                .nr_rate_override()
                .map_or(bits, |r| slot_capacity_from_rate(r, slot));
            p.push("nr.downlink_capacity_bps", dl * 1_000_000 / slot);
        }
        Stack::DvbS2Rcs2 => {
            let d = &cfg.dvb;
            let carrier = cfg.dvb_carrier();
            let scheme = cfg.dvb_scheme();
            p.push("dvb.occupied_bandwidth_hz", num(carrier.occupied_bandwidth_hz()));
            p.push("dvb.link_snr_db", num(snr));
            p.push("dvb.decodable", snr >= scheme.decode_threshold_db);
            let info = bbframe_info_bits_with_header(d.fecframe.bits(), scheme.code_rate, d.bbheader_bits)
                .expect("validated");
            let air_ns = bbframe_airtime_ns(d.fecframe.bits(), &scheme, &carrier);
            p.push("dvb.bbframe_info_bits", info);
            p.push("dvb.bbframe_airtime_us", num(air_ns as f64 / 1e3));
            let rate = info as f64 * 1e9 / air_ns as f64;
            p.push("dvb.forward_info_rate_bps", num(rate.floor()));
            p.push("dvb.forward_info_rate_kBps", format!("{:.2}", rate / 8e3));
            p.push("dvb.return_rate_bps", num(cfg.dvb_return_rate_bps()));
            p.push("dvb.superframe_ms", num(d.superframe_ms));
            p.push("dvb.cra_kbps", num(d.cra_kbps));
        }
    }
    p
}
