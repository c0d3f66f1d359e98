use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn geosim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geosim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const QUICK_NR: &str = "stack = ntn5g\nworkload.repetitions = 2\nworkload.probes = 5\n";

#[test]
fn params_prints_static_values() {
    let dir = tempfile::tempdir().unwrap();
    let nr = scenario(dir.path(), "nr.cfg", "");
    let out = geosim(&["params", s(&nr)]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for line in [
        "nr.nominal_bandwidth_hz  = 4500000",
        "nr.koffset_slots         = 520",
        "nr.ecef_z_granules       = 27527692",
        "nr.ta_common_published   = 63813480",
    ] {
        assert!(text.contains(line), "missing `{line}` in\n{text}");
    }
    let dvb = scenario(dir.path(), "dvb.cfg", "stack = dvb-s2-rcs2\n");
    let text = String::from_utf8(geosim(&["params", s(&dvb)]).stdout).unwrap();
    assert!(text.contains("dvb.occupied_bandwidth_hz  = 6750000"), "{text}");
    assert!(text.contains("dvb.link_snr_db            = 6\n"), "{text}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let nr = scenario(dir.path(), "nr.cfg", QUICK_NR);
    assert_eq!(geosim(&["run", s(&nr), "ping"]).status.code(), Some(2));
    assert_eq!(geosim(&["launch"]).status.code(), Some(2));
    assert_eq!(geosim(&["run", s(&nr), "jitter", "--format", "xml"]).status.code(), Some(2));
    assert_eq!(geosim(&["selftest", "--suite", "q"]).status.code(), Some(2));
}

#[test]
fn config_errors_exit_3_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.cfg");
    assert_eq!(geosim(&["params", s(&missing)]).status.code(), Some(3));
    let bad = scenario(dir.path(), "bad.cfg", "nr.n_prbs = 25\n");
    let out = geosim(&["params", s(&bad)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nr.n_prbs"));
    let koff = scenario(dir.path(), "koff.cfg", "nr.koffset = 100\n");
    let out = geosim(&["params", s(&koff)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nr.koffset"));
}

#[test]
fn simulation_timeout_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let slow = scenario(
        dir.path(),
        "slow.cfg",
        "mode = capacity-true\nsim.max_time_s = 5\nworkload.repetitions = 1\nworkload.download_bytes = 10000000\n",
    );
    let out = geosim(&["run", s(&slow), "download"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unwritable_output_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let nr = scenario(dir.path(), "nr.cfg", QUICK_NR);
    let blocker = scenario(dir.path(), "not-a-dir", "");
    assert_eq!(geosim(&["run", s(&nr), "jitter", s(&blocker)]).status.code(), Some(5));
}

#[test]
fn run_writes_identical_reports_on_replay() {
    let dir = tempfile::tempdir().unwrap();
    let nr = scenario(dir.path(), "nr.cfg", QUICK_NR);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = geosim(&["run", s(&nr), "jitter", "--out", s(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for ext in ["txt", "csv", "json"] {
        let name = format!("nr-jitter.{ext}");
        let x = fs::read(a.join(&name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.join(&name)).unwrap(), "{name} differs");
    }
    let csv = fs::read_to_string(a.join("nr-jitter.csv")).unwrap();
    assert!(csv.starts_with("scenario,run,metric,value\nnr,1,jitter_ms,"));
}

#[test]
fn seed_flag_changes_the_fingerprint() {
    let dir = tempfile::tempdir().unwrap();
    let nr = scenario(dir.path(), "nr.cfg", QUICK_NR);
    let fp = |seed: &str| {
        let out = geosim(&["params", s(&nr), "--seed", seed]);
        String::from_utf8(out.stdout)
            .unwrap()
            .lines()
            .find(|l| l.starts_with("config_fingerprint"))
            .unwrap()
            .to_string()
    };
    assert_ne!(fp("1"), fp("2"));
}

#[test]
fn compare_identical_scenarios_gives_unit_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let nr = scenario(dir.path(), "nr.cfg", QUICK_NR);
    let out = geosim(&["compare", s(&nr), s(&nr), "--experiment", "jitter", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let ratio = &v["reports"][0]["ratio"];
    assert_eq!(ratio["mean"], serde_json::json!(1.0));
    for row in ratio["rows"].as_array().unwrap() {
        assert_eq!(row["value"], serde_json::json!(1.0));
    }
}

#[test]
fn selftest_single_suite() {
    let out = geosim(&["selftest", "--suite", "d"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("PASS 8d"));
}
