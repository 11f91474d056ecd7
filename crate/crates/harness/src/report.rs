//! Suite reports and their JSON, CSV and markdown exports.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub seed: u64,
    pub version: String,
    pub threads: usize,
}

impl Environment {
    pub fn current(seed: u64) -> Self {
        Environment { seed, version: env!("CARGO_PKG_VERSION").to_string(), threads: rayon::current_num_threads() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    /// Records sharing a group are summarised together.
    pub group: String,
    pub config: String,
    /// Outcome of an acceptance check; `None` when the case only records a
    /// measurement.
    pub passed: Option<bool>,
    pub metric: Option<f64>,
    pub detail: String,
    pub wall_ms: f64,
    /// Named wall-clock phases in milliseconds.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub phase_ms: BTreeMap<String, f64>,
}

impl CaseRecord {
    pub fn new(id: impl Into<String>, group: impl Into<String>, config: impl Into<String>) -> Self {
        CaseRecord {
            id: id.into(),
            group: group.into(),
            config: config.into(),
            passed: None,
            metric: None,
            detail: String::new(),
            wall_ms: 0.0,
            phase_ms: BTreeMap::new(),
        }
    }

    pub fn check(mut self, passed: bool) -> Self {
        self.passed = Some(passed);
        self
    }

    /// Non-finite values are stored as missing so that JSON stays lossless.
    pub fn metric(mut self, value: f64) -> Self {
        self.metric = value.is_finite().then_some(value);
        self
    }

    pub fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub cases: usize,
    pub checks: usize,
    pub failed: usize,
    pub metric_mean: Option<f64>,
    /// Population standard deviation of the group's metrics.
    pub metric_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cases: usize,
    pub checks: usize,
    pub passed: usize,
    pub failed: usize,
    pub groups: Vec<GroupSummary>,
}

impl Summary {
    /// Groups appear in order of their first record.
    pub fn from_records(records: &[CaseRecord]) -> Self {
        let mut order: Vec<&str> = Vec::new();
        let mut members: BTreeMap<&str, Vec<&CaseRecord>> = BTreeMap::new();
        for r in records {
            if !members.contains_key(r.group.as_str()) {
                order.push(&r.group);
            }
            members.entry(&r.group).or_default().push(r);
        }
        let groups = order
            .iter()
            .map(|g| {
                let rs = &members[g];
                let metrics: Vec<f64> = rs.iter().filter_map(|r| r.metric).collect();
                let (mean, std) = match metrics.len() {
                    0 => (None, None),
                    n => {
                        let mean = metrics.iter().sum::<f64>() / n as f64;
                        let var = metrics.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
                        (Some(mean), Some(var.sqrt()))
                    }
                };
                GroupSummary {
                    group: g.to_string(),
                    cases: rs.len(),
                    checks: rs.iter().filter(|r| r.passed.is_some()).count(),
                    failed: rs.iter().filter(|r| r.passed == Some(false)).count(),
                    metric_mean: mean,
                    metric_std: std,
                }
            })
            .collect();
        Summary {
            cases: records.len(),
            checks: records.iter().filter(|r| r.passed.is_some()).count(),
            passed: records.iter().filter(|r| r.passed == Some(true)).count(),
            failed: records.iter().filter(|r| r.passed == Some(false)).count(),
            groups,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for Format {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            _ => Err(HarnessError::Input(format!("unknown report format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub environment: Environment,
    /// Column title for group metrics in markdown, e.g. a dataset name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_name: Option<String>,
    pub records: Vec<CaseRecord>,
    pub summary: Summary,
}

impl SuiteReport {
    pub fn new(suite: impl Into<String>, environment: Environment, records: Vec<CaseRecord>) -> Self {
        let summary = Summary::from_records(&records);
        SuiteReport { suite: suite.into(), environment, metric_name: None, records, summary }
    }

    pub fn with_metric_name(mut self, name: impl Into<String>) -> Self {
        self.metric_name = Some(name.into());
        self
    }

    pub fn all_passed(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn failures(&self) -> impl Iterator<Item = &CaseRecord> {
        self.records.iter().filter(|r| r.passed == Some(false))
    }

    pub fn record(&self, id: &str) -> Option<&CaseRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn group(&self, group: &str) -> Option<&GroupSummary> {
        self.summary.groups.iter().find(|g| g.group == group)
    }

    pub fn is_consistent(&self) -> bool {
        let mut ids: Vec<&str> = self.records.iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        ids.windows(2).all(|w| w[0] != w[1]) && self.summary == Summary::from_records(&self.records)
    }

    /// JSON with wall times and the thread count zeroed: equal for runs with
    /// the same seed, version and inputs.
    pub fn reproducible_json(&self) -> String {
        let mut r = self.clone();
        r.environment.threads = 0;
        for rec in &mut r.records {
            rec.wall_ms = 0.0;
            rec.phase_ms.values_mut().for_each(|v| *v = 0.0);
        }
        serde_json::to_string(&r).expect("reports serialize")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One row per record.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["suite", "id", "group", "config", "passed", "metric", "detail", "wall_ms"])?;
        for r in &self.records {
            let passed = r.passed.map_or(String::new(), |p| p.to_string());
            let metric = r.metric.map_or(String::new(), |m| m.to_string());
            w.write_record([&self.suite, &r.id, &r.group, &r.config, &passed, &metric, &r.detail, &r.wall_ms.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Input(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv of UTF-8 fields"))
    }

    pub fn to_markdown(&self) -> String {
        let env = &self.environment;
        let mut out = format!("## {}\n\nseed {}, version {}, {} threads\n\n", self.suite, env.seed, env.version, env.threads);
        let s = &self.summary;
        out += &format!("{} cases, {} checks, {} passed, {} failed\n\n", s.cases, s.checks, s.passed, s.failed);

        let measured: Vec<&GroupSummary> = s.groups.iter().filter(|g| g.metric_mean.is_some()).collect();
        if let (Some(name), false) = (&self.metric_name, measured.is_empty()) {
            out += &format!("| Model | {name} |\n|---|---|\n");
            for g in &measured {
                let (m, sd) = (g.metric_mean.unwrap_or(f64::NAN), g.metric_std.unwrap_or(f64::NAN));
                out += &format!("| {} | {m:.1} ± {sd:.1} |\n", g.group);
            }
            out.push('\n');
        }
        out += "| Group | Cases | Checks | Failed | Metric |\n|---|---:|---:|---:|---|\n";
        for g in &s.groups {
            let metric = match (g.metric_mean, g.metric_std) {
                (Some(m), Some(sd)) => format!("{m:.4} ± {sd:.4}"),
                _ => String::new(),
            };
            out += &format!("| {} | {} | {} | {} | {metric} |\n", g.group, g.cases, g.checks, g.failed);
        }
        let failures: Vec<&CaseRecord> = self.failures().collect();
        if !failures.is_empty() {
            out += "\nFailed cases:\n\n";
            for r in failures {
                out += &format!("- `{}`: {}\n", r.id, r.detail);
            }
        }
        out
    }

    pub fn export(&self, fmt: Format) -> Result<Vec<u8>> {
        Ok(match fmt {
            Format::Json => self.to_json().into_bytes(),
            Format::Csv => self.to_csv()?.into_bytes(),
            Format::Markdown => self.to_markdown().into_bytes(),
        })
    }
}

/// A unit of suite work producing one record.
pub type CaseFn<'a> = Box<dyn Fn() -> Result<CaseRecord> + Send + Sync + 'a>;

/// Runs cases in parallel and returns their records in input order, each
/// stamped with its wall time. The first error, in input order, aborts with
/// the failing case id.
pub fn run_cases(cases: Vec<(String, CaseFn<'_>)>) -> Result<Vec<CaseRecord>> {
    cases
        .into_par_iter()
        .map(|(id, f)| {
            let start = Instant::now();
            let mut rec = f().map_err(|e| e.in_case(&id))?;
            rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
            Ok(rec)
        })
        .collect::<Vec<Result<CaseRecord>>>()
        .into_iter()
        .collect()
}
