//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fail.

use std::time::Instant;

use geosim::config::{Mode, ScenarioConfig, Stack};
use geosim::params::static_params;
use geosim::selftest::{run_suite, SUITES};
use geosim::transport::transfer;
use geosim::workloads::{compare, run_experiment, ExperimentKind, KpiReport};

struct Tally {
    failed: Vec<String>,
}

impl Tally {
    fn check(&mut self, id: &str, name: &str, ok: bool, detail: String) {
        println!("{} {id} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(id.to_string());
        }
    }
}

fn nr_calibrated() -> ScenarioConfig {
    let mut c = ScenarioConfig::for_stack(Stack::Ntn5g);
    c.mode = Mode::PaperCalibration;
    c
}

fn dvb_default() -> ScenarioConfig {
    ScenarioConfig::for_stack(Stack::DvbS2Rcs2)
}

fn paired(kind: ExperimentKind) -> KpiReport {
    let (nr, dvb) = std::thread::scope(|s| {
        let a = s.spawn(|| run_experiment("5G", &nr_calibrated(), kind).unwrap());
        let b = s.spawn(|| run_experiment("DVB", &dvb_default(), kind).unwrap());
        (a.join().unwrap(), b.join().unwrap())
    });
    compare(&nr, &dvb).unwrap()
}

fn values(r: &KpiReport, side: usize, metric: &str) -> Vec<f64> {
    r.scenarios[side].rows.iter().map(|row| row.get(metric).unwrap()).collect()
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(", ")
}

fn ratios(r: &KpiReport) -> Vec<f64> {
    r.ratios.iter().map(|x| x.ratio.unwrap_or(f64::NAN)).collect()
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

fn criterion_1(t: &mut Tally) {
    const SPEC_TA_COMMON: &str = "63851669";
    let start = Instant::now();
    let nr = static_params(&ScenarioConfig::default());
    let dvb = static_params(&dvb_default());
    let elapsed = start.elapsed().as_secs_f64();
    let exact = [
        (nr.get("nr.nominal_bandwidth_hz"), "4500000"),
        (dvb.get("dvb.occupied_bandwidth_hz"), "6750000"),
        (nr.get("nr.koffset_slots"), "520"),
        (nr.get("nr.ecef_z_granules"), "27527692"),
        (dvb.get("dvb.link_snr_db"), "6"),
        (nr.get("nr.ta_common_published"), "63813480"),
        (nr.get("nr.ta_common_discrepancy"), "true"),
    ];
    let printed_ok = exact.iter().all(|(got, want)| *got == Some(*want));
    let ta = nr.get("nr.ta_common_exact").unwrap_or("?");
    t.check(
        "1",
        "static parameters",
        printed_ok && ta == SPEC_TA_COMMON && elapsed < 1.0,
        format!(
            "bandwidths/koffset/ECEF/SNR/published ta-Common {}; ta-Common exact {ta} vs expected {SPEC_TA_COMMON} \
             (floor(260 ms / 4.072 ns) = 63850687); {elapsed:.3} s",
            if printed_ok { "match" } else { "MISMATCH" }
        ),
    );
}

fn criterion_2_3(t: &mut Tally, download: &KpiReport) {
    let dvb = values(download, 1, "throughput_kBps");
    let start = Instant::now();
    let _ = transfer(&dvb_default(), 1, 0, 100_000_000).unwrap();
    let wall = start.elapsed().as_secs_f64();
    let ok = dvb.iter().all(|&x| within(x, 274.0 * 0.8, 274.0 * 1.2));
    t.check(
        "2",
        "DVB throughput 274 kB/s +-20%",
        ok && wall < 10.0,
        format!("runs [{}] kB/s; one 100 MB run {wall:.2} s wall", list(&dvb)),
    );
    let r = ratios(download);
    t.check(
        "3",
        "5G/DVB throughput ratio in [2.1, 2.3]",
        r.iter().all(|&x| within(x, 2.1, 2.3)),
        format!(
            "ratios [{}] (5G [{}] kB/s)",
            list(&r),
            list(&values(download, 0, "throughput_kBps"))
        ),
    );
}

fn criterion_4(t: &mut Tally) {
    let mut nr = ScenarioConfig::for_stack(Stack::Ntn5g);
    nr.mode = Mode::CapacityTrue;
    let bound_bps = 685_800.0;
    let tl = transfer(&nr, 1, 0, 12_000_000).unwrap();
    // Steady goodput: bytes delivered after the trailing 1 s window first
    // reaches 80 % of the bound.
    let ramp = tl.ramp_up_us(bound_bps, 0.8, 1_000_000);
    let steady = ramp.map(|r| {
        let t0 = tl.t_start_transfer.after(r);
        let (tb, b0) = tl.progress.iter().copied().find(|p| p.0 >= t0).unwrap();
        (tl.bytes_total - b0) as f64 / tl.t_complete.since(tb) as f64 * 1e3
    });
    let nr_peak = tl.max_window_goodput_bps(1_000_000) / 8e3;
    let dvb_tl = transfer(&dvb_default(), 1, 0, 20_000_000).unwrap();
    let dvb_peak = dvb_tl.max_window_goodput_bps(1_000_000) / 8e3;
    let floor = 0.8 * bound_bps / 8e3;
    let ok = nr_peak <= 85.8 && steady.is_some_and(|s| s >= floor) && dvb_peak <= 248.5;
    t.check(
        "4",
        "capacity-true bounds",
        ok,
        format!(
            "NR peak 1 s goodput {nr_peak:.2} kB/s (<= 85.8), steady {} kB/s (>= {floor:.2}); DVB peak {dvb_peak:.2} kB/s (<= 248.5)",
            steady.map_or("n/a".into(), |s| format!("{s:.2}"))
        ),
    );
}

fn criterion_5(t: &mut Tally) {
    let start = Instant::now();
    let r = paired(ExperimentKind::Jitter);
    let wall = start.elapsed().as_secs_f64();
    let nr = r.scenarios[0].mean("jitter_ms").unwrap();
    let dvb = r.scenarios[1].mean("jitter_ms").unwrap();
    let ratio = r.mean_ratio.unwrap_or(f64::NAN);
    t.check(
        "5",
        "jitter comparison",
        within(ratio, 2.8, 3.6) && within(nr, 3.5, 4.5) && within(dvb, 11.0, 14.0) && wall < 5.0,
        format!("5G {nr:.2} ms, DVB {dvb:.2} ms, ratio mean {ratio:.2}; {wall:.2} s wall"),
    );
}

fn criterion_6(t: &mut Tally) {
    let r = paired(ExperimentKind::Video);
    let rs = ratios(&r);
    let connect: Vec<f64> = values(&r, 0, "connect_s").into_iter().chain(values(&r, 1, "connect_s")).collect();
    let ok = rs.iter().all(|&x| within(x, 1.9, 2.2)) && connect.iter().all(|&c| within(c, 0.50, 0.56));
    t.check(
        "6",
        "video TTFF ratio in [1.9, 2.2], connect 0.52-0.54 +-0.02 s",
        ok,
        format!(
            "ratios [{}]; TTFF 5G [{}] s, DVB [{}] s; connect [{}] s",
            list(&rs),
            list(&values(&r, 0, "ttff_s")),
            list(&values(&r, 1, "ttff_s")),
            list(&connect)
        ),
    );
}

fn criterion_7(t: &mut Tally) {
    let r = paired(ExperimentKind::Webpage);
    let pair = |m: &str| values(&r, 0, m).into_iter().zip(values(&r, 1, m)).collect::<Vec<_>>();
    let ttfb_ok = pair("ttfb_s").iter().all(|(a, b)| (b - a).abs() <= 0.15 * a.min(*b));
    let conn_ok = pair("connect_s").iter().all(|(a, b)| (b - a).abs() <= 0.05 + 1e-9);
    let st_ok = pair("start_transfer_s").iter().all(|(a, b)| (b - a).abs() <= 0.05 + 1e-9);
    t.check(
        "7",
        "webpage comparability",
        ttfb_ok && conn_ok && st_ok,
        format!(
            "TTFB 5G [{}] s vs DVB [{}] s; connect diff ok: {conn_ok}; start-transfer diff ok: {st_ok}",
            list(&values(&r, 0, "ttfb_s")),
            list(&values(&r, 1, "ttfb_s"))
        ),
    );
}

fn main() {
    let mut t = Tally { failed: Vec::new() };
    criterion_1(&mut t);
    let download = paired(ExperimentKind::Download);
    criterion_2_3(&mut t, &download);
    criterion_4(&mut t);
    criterion_5(&mut t);
    criterion_6(&mut t);
    criterion_7(&mut t);
    for (id, _) in SUITES {
        let r = run_suite(id).unwrap();
        let ok = r.passed && r.elapsed.as_secs_f64() < 30.0;
        t.check(&format!("8{id}"), r.name, ok, format!("{} ({:.2} s)", r.detail, r.elapsed.as_secs_f64()));
    }
    if t.failed.is_empty() {
        println!("all criteria passed");
    } else {
        println!("failed: {}", t.failed.join(", "));
        std::process::exit(1);
    }
}
