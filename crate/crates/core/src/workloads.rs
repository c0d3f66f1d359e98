//! The four experiments, their KPI rows, and the cross-stack comparison.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::config::{ScenarioConfig, Stack};
use crate::sim::{RngStream, RNG_ALGORITHM};
use crate::transport::{
    default_echo, fetch, run_echo, throughput, FetchSpec, FlowTimeline, TransportError,
};

#[derive(Debug, Error)]
pub enum KpiError {
    #[error("jitter needs at least 2 RTT samples, got {0}")]
    TooFewSamples(usize),
    #[error("cannot compare {0} with {1} repetitions")]
    RepetitionMismatch(usize, usize),
    #[error("cannot compare different experiments ({0} vs {1})")]
    KindMismatch(ExperimentKind, ExperimentKind),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Jitter,
    Video,
    Webpage,
    Download,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::Jitter,
        ExperimentKind::Video,
        ExperimentKind::Webpage,
        ExperimentKind::Download,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Jitter => "jitter",
            ExperimentKind::Video => "video",
            ExperimentKind::Webpage => "webpage",
            ExperimentKind::Download => "download",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Metric the ratio column is computed on.
    pub fn primary_metric(self) -> &'static str {
        match self {
            ExperimentKind::Jitter => "jitter_ms",
            ExperimentKind::Video => "ttff_s",
            ExperimentKind::Webpage => "ttfb_s",
            ExperimentKind::Download => "throughput_kBps",
        }
    }

    /// Throughput ratios put 5G on top; delay-like metrics put DVB on top.
    pub fn ratio_label(self) -> &'static str {
        match self {
            ExperimentKind::Download => "5G/DVB",
            _ => "DVB/5G",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            ExperimentKind::Jitter => "Jitter (echo probes)",
            ExperimentKind::Video => "Video start-up (time to first frame)",
            ExperimentKind::Webpage => "Web page load",
            ExperimentKind::Download => "File download",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub repetitions: u32,
    /// Response size; probe count for the jitter experiment.
    pub payload_bytes: u64,
    pub probes: u32,
    pub probe_interval_us: u64,
    pub server_processing_us: u64,
}

impl ExperimentSpec {
    pub fn from_config(kind: ExperimentKind, cfg: &ScenarioConfig) -> Self {
        let w = &cfg.workload;
        let payload_bytes = match kind {
            ExperimentKind::Jitter => 0,
            ExperimentKind::Video => w.video_buffer_bytes,
            ExperimentKind::Webpage => w.webpage_bytes,
            ExperimentKind::Download => w.download_bytes,
        };
        let server_processing_us = match kind {
            ExperimentKind::Webpage => (w.webpage_processing_ms * 1_000.0).round() as u64,
            _ => 0,
        };
        ExperimentSpec {
            kind,
            repetitions: w.repetitions,
            payload_bytes,
            probes: w.probes,
            probe_interval_us: (w.probe_interval_ms * 1_000.0).round() as u64,
            server_processing_us,
        }
    }
}

/// Mean absolute difference of consecutive RTTs, in ms.
pub fn jitter(rtts_us: &[u64]) -> Result<f64, KpiError> {
    if rtts_us.len() < 2 {
        return Err(KpiError::TooFewSamples(rtts_us.len()));
    }
    let total: u64 = rtts_us.windows(2).map(|w| w[0].abs_diff(w[1])).sum();
    Ok(total as f64 / (rtts_us.len() - 1) as f64 / 1_000.0)
}

/// Rounds to the reporting precision of a metric.
pub fn report_precision(metric: &str) -> u32 {
    if metric.ends_with("_kBps") {
        0
    } else {
        2
    }
}

pub fn round_to(x: f64, decimals: u32) -> f64 {
    let p = 10f64.powi(decimals as i32);
    (x * p).round() / p
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KpiRow {
    pub run_index: u32,
    /// (metric, value at reporting precision), in table column order.
    pub metrics: Vec<(String, f64)>,
}

impl KpiRow {
    fn new(run_index: u32, raw: &[(&str, f64)]) -> Self {
        KpiRow {
            run_index,
            metrics: raw
                .iter()
                .map(|&(m, v)| (m.to_string(), round_to(v, report_precision(m))))
                .collect(),
        }
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.metrics.iter().find(|(m, _)| m == metric).map(|&(_, v)| v)
    }
}

/// Everything one repetition produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub row: KpiRow,
    pub rtt_samples: Vec<u64>,
    pub timeline: Option<FlowTimeline>,
    pub trace_hash: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub scenario: String,
    pub stack: Stack,
    pub kind: ExperimentKind,
    pub fingerprint: String,
    pub runs: Vec<RunOutcome>,
}

impl ExperimentResult {
    pub fn rows(&self) -> Vec<KpiRow> {
        self.runs.iter().map(|r| r.row.clone()).collect()
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        let v: Vec<f64> = self.runs.iter().filter_map(|r| r.row.get(metric)).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

pub fn run_seed(cfg: &ScenarioConfig, run_index: u32) -> u64 {
    cfg.seed.wrapping_add(run_index as u64)
}

/// Start phase of a run within one probe interval, from its own stream.
fn start_phase(seed: u64, interval_us: u64) -> u64 {
    let mut s = RngStream::new(seed, "start-phase");
    (s.uniform() * interval_us as f64) as u64
}

pub fn run_jitter_experiment(
    spec: &ExperimentSpec,
    cfg: &ScenarioConfig,
    run_index: u32,
) -> Result<RunOutcome, KpiError> {
    let seed = run_seed(cfg, run_index);
    let mut flow = default_echo(cfg, start_phase(seed, spec.probe_interval_us));
    flow.count = spec.probes;
    flow.interval_us = spec.probe_interval_us;
    let r = run_echo(cfg, seed, &flow)?;
    let j = jitter(&r.rtt_samples)?;
    let mean_rtt = r.rtt_samples.iter().sum::<u64>() as f64 / r.rtt_samples.len() as f64 / 1_000.0;
    Ok(RunOutcome {
        row: KpiRow::new(run_index, &[("jitter_ms", j), ("mean_rtt_ms", mean_rtt)]),
        rtt_samples: r.rtt_samples,
        timeline: None,
        trace_hash: r.trace_hash,
    })
}

fn run_fetch(spec: &ExperimentSpec, cfg: &ScenarioConfig, run_index: u32) -> Result<FlowTimeline, KpiError> {
    let seed = run_seed(cfg, run_index);
    Ok(fetch(
        cfg,
        seed,
        &FetchSpec {
            t_request_us: start_phase(seed, spec.probe_interval_us),
            response_bytes: Some(spec.payload_bytes),
            server_processing_us: spec.server_processing_us,
        },
    )?)
}

fn fetch_outcome(row: KpiRow, tl: FlowTimeline) -> RunOutcome {
    RunOutcome {
        row,
        rtt_samples: Vec::new(),
        trace_hash: tl.trace_hash.clone(),
        timeline: Some(tl),
    }
}

pub fn run_video_experiment(
    spec: &ExperimentSpec,
    cfg: &ScenarioConfig,
    run_index: u32,
) -> Result<RunOutcome, KpiError> {
    let tl = run_fetch(spec, cfg, run_index)?;
    let row = KpiRow::new(
        run_index,
        &[
            ("ttff_s", tl.complete_s()),
            ("connect_s", tl.connect_s()),
            ("start_transfer_s", tl.start_transfer_s()),
        ],
    );
    Ok(fetch_outcome(row, tl))
}

pub fn run_webpage_experiment(
    spec: &ExperimentSpec,
    cfg: &ScenarioConfig,
    run_index: u32,
) -> Result<RunOutcome, KpiError> {
    let tl = run_fetch(spec, cfg, run_index)?;
    let row = KpiRow::new(
        run_index,
        &[
            ("ttfb_s", tl.first_byte_s()),
            ("connect_s", tl.connect_s()),
            ("start_transfer_s", tl.start_transfer_s()),
            ("total_s", tl.complete_s()),
        ],
    );
    Ok(fetch_outcome(row, tl))
}

pub fn run_download_experiment(
    spec: &ExperimentSpec,
    cfg: &ScenarioConfig,
    run_index: u32,
) -> Result<RunOutcome, KpiError> {
    let tl = run_fetch(spec, cfg, run_index)?;
    let row = KpiRow::new(
        run_index,
        &[
            ("throughput_kBps", throughput(&tl)?),
            ("duration_s", tl.t_complete.since(tl.t_start_transfer) as f64 / 1e6),
        ],
    );
    Ok(fetch_outcome(row, tl))
}

pub fn run_experiment(
    scenario: &str,
    cfg: &ScenarioConfig,
    kind: ExperimentKind,
) -> Result<ExperimentResult, KpiError> {
    let spec = ExperimentSpec::from_config(kind, cfg);
    let runner = match kind {
        ExperimentKind::Jitter => run_jitter_experiment,
        ExperimentKind::Video => run_video_experiment,
        ExperimentKind::Webpage => run_webpage_experiment,
        ExperimentKind::Download => run_download_experiment,
    };
    let runs = (0..spec.repetitions)
        .map(|i| runner(&spec, cfg, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentResult {
        scenario: scenario.to_string(),
        stack: cfg.stack,
        kind,
        fingerprint: cfg.fingerprint(),
        runs,
    })
}

/// One ratio cell; `None` when the denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub run_index: u32,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub stack: String,
    pub fingerprint: String,
    pub rows: Vec<KpiRow>,
    /// Column means over the runs.
    pub means: Vec<(String, f64)>,
}

impl ScenarioSummary {
    fn from_result(r: &ExperimentResult) -> Self {
        let rows = r.rows();
        let means = rows
            .first()
            .map(|first| {
                first
                    .metrics
                    .iter()
                    .map(|(m, _)| (m.clone(), r.mean(m).unwrap_or(0.0)))
                    .collect()
            })
            .unwrap_or_default();
        ScenarioSummary {
            scenario: r.scenario.clone(),
            stack: r.stack.short_name().to_string(),
            fingerprint: r.fingerprint.clone(),
            rows,
            means,
        }
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.means.iter().find(|(m, _)| m == metric).map(|&(_, v)| v)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KpiReport {
    pub kind: ExperimentKind,
    pub rng_algorithm: String,
    pub scenarios: Vec<ScenarioSummary>,
    pub ratio_metric: String,
    pub ratio_label: String,
    /// Index into `scenarios` of the numerator and denominator.
    pub numerator: usize,
    pub denominator: usize,
    pub ratios: Vec<RatioRow>,
    pub mean_ratio: Option<f64>,
}

pub fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0 && num.is_finite() && den.is_finite()).then(|| num / den)
}

/// Single-scenario report (no ratio column).
pub fn single(result: &ExperimentResult) -> KpiReport {
    KpiReport {
        kind: result.kind,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        scenarios: vec![ScenarioSummary::from_result(result)],
        ratio_metric: result.kind.primary_metric().to_string(),
        ratio_label: result.kind.ratio_label().to_string(),
        numerator: 0,
        denominator: 0,
        ratios: Vec::new(),
        mean_ratio: None,
    }
}

/// Pairs two results row by row with the ratio in the fixed orientation (DVB on top for delays).
pub fn compare(a: &ExperimentResult, b: &ExperimentResult) -> Result<KpiReport, KpiError> {
    if a.kind != b.kind {
        return Err(KpiError::KindMismatch(a.kind, b.kind));
    }
    if a.runs.len() != b.runs.len() {
        return Err(KpiError::RepetitionMismatch(a.runs.len(), b.runs.len()));
    }
    let kind = a.kind;
    let dvb_on_top = kind != ExperimentKind::Download;
    // Which of (a, b) is the DVB side; with equal stacks, b.
    let dvb_is_b = !(a.stack == Stack::DvbS2Rcs2 && b.stack == Stack::Ntn5g);
    let (numerator, denominator) = match (dvb_on_top, dvb_is_b) {
        (true, true) | (false, false) => (1, 0),
        _ => (0, 1),
    };
    let sides = [a, b];
    let metric = kind.primary_metric();
    let ratios: Vec<RatioRow> = sides[numerator]
        .runs
        .iter()
        .zip(&sides[denominator].runs)
        .map(|(n, d)| RatioRow {
            run_index: n.row.run_index,
            ratio: match (n.row.get(metric), d.row.get(metric)) {
                (Some(x), Some(y)) => ratio(x, y),
                _ => None,
            },
        })
        .collect();
    let defined: Vec<f64> = ratios.iter().filter_map(|r| r.ratio).collect();
    let mean_ratio = (defined.len() == ratios.len() && !defined.is_empty())
        .then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(KpiReport {
        kind,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        scenarios: vec![ScenarioSummary::from_result(a), ScenarioSummary::from_result(b)],
        ratio_metric: metric.to_string(),
        ratio_label: kind.ratio_label().to_string(),
        numerator,
        denominator,
        ratios,
        mean_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_examples() {
        assert_eq!(jitter(&[520_000, 520_000, 520_000]).unwrap(), 0.0);
        assert_eq!(jitter(&[520_000, 524_000, 528_000]).unwrap(), 4.0);
        assert_eq!(jitter(&[520_000, 524_000, 520_000]).unwrap(), 4.0);
        assert!(matches!(jitter(&[1]), Err(KpiError::TooFewSamples(1))));
    }

    fn fake(stack: Stack, kind: ExperimentKind, values: &[f64]) -> ExperimentResult {
        ExperimentResult {
            scenario: stack.short_name().into(),
            stack,
            kind,
            fingerprint: String::new(),
            runs: values
                .iter()
                .enumerate()
                .map(|(i, &v)| RunOutcome {
                    row: KpiRow::new(i as u32, &[(kind.primary_metric(), v)]),
                    rtt_samples: vec![],
                    timeline: None,
                    trace_hash: String::new(),
                })
                .collect(),
        }
    }

    #[test]
    fn ratio_orientation() {
        let nr = fake(Stack::Ntn5g, ExperimentKind::Jitter, &[4.15]);
        let dvb = fake(Stack::DvbS2Rcs2, ExperimentKind::Jitter, &[13.60]);
        for r in [compare(&nr, &dvb).unwrap(), compare(&dvb, &nr).unwrap()] {
            assert_eq!(round_to(r.ratios[0].ratio.unwrap(), 2), 3.28);
        }
        let nr = fake(Stack::Ntn5g, ExperimentKind::Download, &[608.0]);
        let dvb = fake(Stack::DvbS2Rcs2, ExperimentKind::Download, &[274.0]);
        for r in [compare(&nr, &dvb).unwrap(), compare(&dvb, &nr).unwrap()] {
            assert_eq!(round_to(r.ratios[0].ratio.unwrap(), 2), 2.22);
        }
        let same = compare(&nr, &nr).unwrap();
        assert_eq!(same.ratios[0].ratio, Some(1.0));
    }

    #[test]
    fn zero_denominator_is_undefined() {
        let a = fake(Stack::Ntn5g, ExperimentKind::Jitter, &[0.0, 1.0]);
        let b = fake(Stack::DvbS2Rcs2, ExperimentKind::Jitter, &[3.0, 2.0]);
        let r = compare(&a, &b).unwrap();
        assert_eq!(r.ratios[0].ratio, None);
        assert_eq!(r.ratios[1].ratio, Some(2.0));
        assert_eq!(r.mean_ratio, None);
        let c = fake(Stack::DvbS2Rcs2, ExperimentKind::Jitter, &[3.0]);
        assert!(matches!(compare(&a, &c), Err(KpiError::RepetitionMismatch(2, 1))));
    }

    #[test]
    fn ttfb_is_processing_plus_two_round_trips() {
        // SYN/SYN-ACK costs one RTT, request out and first byte back another.
        for text in [
            "stack = ntn5g\nmode = paper-calibration\nnr.noise_ms = 0\n",
            "stack = dvb-s2-rcs2\ndvb.noise_ms = 0\n",
        ] {
            let mut cfg = crate::config::parse_scenario_str(text).unwrap();
            cfg.workload.repetitions = 1;
            let r = run_experiment("x", &cfg, ExperimentKind::Webpage).unwrap();
            let ttfb = r.runs[0].row.get("ttfb_s").unwrap();
            let floor = 7.0 + 2.0 * 0.520;
            assert!(ttfb >= floor && ttfb < floor + 0.08, "{text}: {ttfb}");
        }
    }
}
