//! Text tables, CSV and JSON renderings of KPI reports.

use serde_json::{json, Map, Value};

use crate::workloads::{report_precision, KpiReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Text => "txt",
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

pub fn fmt_value(metric: &str, v: f64) -> String {
    format!("{:.*}", report_precision(metric) as usize, v)
}

pub fn fmt_ratio(r: Option<f64>) -> String {
    r.map_or_else(|| "undefined".to_string(), |x| format!("{x:.2}"))
}

fn short(fp: &str) -> &str {
    &fp[..fp.len().min(12)]
}

pub fn to_text(report: &KpiReport) -> String {
    let mut header = vec!["Run".to_string()];
    for s in &report.scenarios {
        if let Some(first) = s.rows.first() {
            for (m, _) in &first.metrics {
                header.push(format!("{} {}", s.scenario, m));
            }
        }
    }
    let paired = report.scenarios.len() == 2;
    if paired {
        header.push(report.ratio_label.clone());
    }
    let n_rows = report.scenarios.iter().map(|s| s.rows.len()).max().unwrap_or(0);
    let mut body: Vec<Vec<String>> = Vec::new();
    for i in 0..n_rows {
        let mut line = vec![(i + 1).to_string()];
        for s in &report.scenarios {
            if let Some(row) = s.rows.get(i) {
                line.extend(row.metrics.iter().map(|(m, v)| fmt_value(m, *v)));
            }
        }
        if paired {
            line.push(fmt_ratio(report.ratios.get(i).and_then(|r| r.ratio)));
        }
        body.push(line);
    }
    let mut mean = vec!["Mean".to_string()];
    for s in &report.scenarios {
        mean.extend(s.means.iter().map(|(m, v)| fmt_value(m, *v)));
    }
    if paired {
        mean.push(fmt_ratio(report.mean_ratio));
    }
    body.push(mean);

    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            std::iter::once(&header)
                .chain(&body)
                .filter_map(|r| r.get(c))
                .map(|s| s.len())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let render = |cells: &[String]| -> String {
        cells
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:>w$}", w = widths[c]))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = String::new();
    out.push_str(&format!("{}\n", report.kind.title()));
    for s in &report.scenarios {
        out.push_str(&format!("  {} [{}] config {}\n", s.scenario, s.stack, short(&s.fingerprint)));
    }
    out.push_str(&render(&header));
    out.push('\n');
    let rule: usize = widths.iter().sum::<usize>() + 2 * (widths.len().saturating_sub(1));
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for (i, line) in body.iter().enumerate() {
        if i + 1 == body.len() {
            out.push_str(&"-".repeat(rule));
            out.push('\n');
        }
        out.push_str(&render(line));
        out.push('\n');
    }
    out
}

pub const CSV_HEADER: &str = "scenario,run,metric,value";

/// One line per (scenario, run, metric); ratio rows use the scenario name
/// `ratio:<orientation>`.
pub fn to_csv_rows(report: &KpiReport) -> String {
    let mut out = String::new();
    for s in &report.scenarios {
        for row in &s.rows {
            for (m, v) in &row.metrics {
                out.push_str(&format!("{},{},{},{}\n", s.scenario, row.run_index + 1, m, fmt_value(m, *v)));
            }
        }
    }
    if report.scenarios.len() == 2 {
        for r in &report.ratios {
            out.push_str(&format!(
                "ratio:{},{},{},{}\n",
                report.ratio_label,
                r.run_index + 1,
                report.ratio_metric,
                fmt_ratio(r.ratio)
            ));
        }
    }
    out
}

pub fn to_csv(reports: &[KpiReport]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in reports {
        out.push_str(&to_csv_rows(r));
    }
    out
}

fn number(metric: &str, v: f64) -> Value {
    // Serialise at reporting precision so files are byte-stable.
    let s = fmt_value(metric, v);
    serde_json::from_str(&s).unwrap_or(Value::Null)
}

fn ratio_value(r: Option<f64>) -> Value {
    r.map_or(Value::Null, |x| serde_json::from_str(&format!("{x:.2}")).unwrap_or(Value::Null))
}

pub fn to_json_value(report: &KpiReport) -> Value {
    let scenarios: Vec<Value> = report
        .scenarios
        .iter()
        .map(|s| {
            let rows: Vec<Value> = s
                .rows
                .iter()
                .map(|row| {
                    let mut m = Map::new();
                    m.insert("run".into(), json!(row.run_index + 1));
                    for (k, v) in &row.metrics {
                        m.insert(k.clone(), number(k, *v));
                    }
                    Value::Object(m)
                })
                .collect();
            let mut means = Map::new();
            for (k, v) in &s.means {
                means.insert(k.clone(), number(k, *v));
            }
            json!({
                "scenario": s.scenario,
                "stack": s.stack,
                "config_fingerprint": s.fingerprint,
                "rows": rows,
                "means": means,
            })
        })
        .collect();
    let mut v = json!({
        "experiment": report.kind.name(),
        "rng_algorithm": report.rng_algorithm,
        "scenarios": scenarios,
    });
    if report.scenarios.len() == 2 {
        v["ratio"] = json!({
            "metric": report.ratio_metric,
            "orientation": report.ratio_label,
            "numerator": report.scenarios[report.numerator].scenario,
            "denominator": report.scenarios[report.denominator].scenario,
            "rows": report.ratios.iter().map(|r| json!({
                "run": r.run_index + 1,
                "value": ratio_value(r.ratio),
            })).collect::<Vec<_>>(),
            "mean": ratio_value(report.mean_ratio),
        });
    }
    v
}

pub fn to_json(reports: &[KpiReport]) -> String {
    let v = json!({
        "rng_algorithm": reports.first().map(|r| r.rng_algorithm.clone()),
        "reports": reports.iter().map(to_json_value).collect::<Vec<_>>(),
    });
    let mut s = serde_json::to_string_pretty(&v).expect("serialisable");
    s.push('\n');
    s
}

pub fn render(reports: &[KpiReport], format: Format) -> String {
    match format {
        Format::Text => reports.iter().map(to_text).collect::<Vec<_>>().join("\n"),
        Format::Csv => to_csv(reports),
        Format::Json => to_json(reports),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Stack;
    use crate::workloads::{compare, ExperimentKind, ExperimentResult, KpiRow, RunOutcome};

    fn fake(stack: Stack, vals: &[f64]) -> ExperimentResult {
        ExperimentResult {
            scenario: stack.short_name().into(),
            stack,
            kind: ExperimentKind::Jitter,
            fingerprint: "0123456789abcdef".into(),
            runs: vals
                .iter()
                .enumerate()
                .map(|(i, &v)| RunOutcome {
                    row: KpiRow {
                        run_index: i as u32,
                        metrics: vec![("jitter_ms".into(), v)],
                    },
                    rtt_samples: vec![],
                    timeline: None,
                    trace_hash: String::new(),
                })
                .collect(),
        }
    }

    #[test]
    fn renders_all_formats() {
        let r = compare(&fake(Stack::Ntn5g, &[4.15, 0.0]), &fake(Stack::DvbS2Rcs2, &[13.6, 12.0])).unwrap();
        let text = to_text(&r);
        assert!(text.contains("3.28"));
        assert!(text.contains("undefined"));
        let csv = to_csv(std::slice::from_ref(&r));
        assert!(csv.starts_with("scenario,run,metric,value\n"));
        assert!(csv.contains("5G,1,jitter_ms,4.15\n"));
        assert!(csv.contains("ratio:DVB/5G,1,jitter_ms,3.28\n"));
        assert!(csv.contains("ratio:DVB/5G,2,jitter_ms,undefined\n"));
        let js: Value = serde_json::from_str(&to_json(&[r])).unwrap();
        let ratio = &js["reports"][0]["ratio"];
        assert_eq!(ratio["rows"][0]["value"], json!(3.28));
        assert_eq!(ratio["rows"][1]["value"], Value::Null);
        assert_eq!(ratio["numerator"], json!("DVB"));
    }
}
