//! All-pairs distinguishability on strongly regular graph families.

use pathlab_core::format::parse_graph6;
use pathlab_core::generate::{check_srg, rook_4x4, shrikhande};
use pathlab_core::refine::{distinguish, distinguish_wl, InitColors, RefinementConfig, Verdict};
use pathlab_core::{Error, Graph, PathKind};

use crate::error::{read_file, HarnessError, Result};
use crate::report::{run_cases, CaseFn, CaseRecord, Environment, SuiteReport};

/// Largest failure rate accepted on an instance other than the hard one.
pub const MAX_FAILURE_RATE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct SrInstance {
    pub name: String,
    pub graphs: Vec<Graph>,
}

impl SrInstance {
    /// Shrikhande against the 4x4 rook's graph, both SRG(16, 6, 2, 2).
    pub fn builtin() -> Self {
        SrInstance { name: "sr16622".into(), graphs: vec![shrikhande(), rook_4x4()] }
    }

    /// Graph6 file; the instance is named after the file stem.
    pub fn from_file(path: &str) -> Result<Self> {
        let graphs = parse_graph6(&read_file(path)?)?;
        let name = std::path::Path::new(path)
            .file_stem()
            .map_or_else(|| path.to_string(), |s| s.to_string_lossy().into_owned());
        Ok(SrInstance { name, graphs })
    }

    /// The SRG parameters shared by every graph, if any.
    pub fn params(&self) -> Option<(usize, usize, usize, usize)> {
        let first = check_srg(self.graphs.first()?)?;
        self.graphs
            .iter()
            .all(|g| check_srg(g) == Some(first))
            .then_some((first.n, first.k, first.lambda, first.mu))
    }

    /// SR(29, 14, 6, 7) is exempt from the failure-rate bound.
    pub fn is_hard(&self) -> bool {
        self.params() == Some((29, 14, 6, 7))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrConfig {
    pub max_len: usize,
    pub budget: usize,
    pub seed: u64,
}

impl Default for SrConfig {
    fn default() -> Self {
        SrConfig { max_len: 4, budget: pathlab_core::paths::DEFAULT_BUDGET, seed: 0 }
    }
}

/// For every instance and pair of graphs: AP refinement with and without
/// distance annotation, and 1-WL. A record's metric is 1 for an
/// undistinguished pair, so each group's mean is that setting's failure rate.
/// Exceeding the budget counts as a failure.
pub fn run_sr_benchmark(instances: &[SrInstance], cfg: &SrConfig) -> Result<SuiteReport> {
    let mut cases: Vec<(String, CaseFn)> = Vec::new();
    for inst in instances {
        let n = inst.graphs.len();
        for i in 0..n {
            for j in i + 1..n {
                for setting in Setting::ALL {
                    let id = format!("{}/{i:03}-{j:03}/{}", inst.name, setting.name(cfg.max_len));
                    let (a, b) = (&inst.graphs[i], &inst.graphs[j]);
                    let rid = id.clone();
                    cases.push((id, Box::new(move || pair_case(&rid, inst, a, b, setting, cfg))));
                }
            }
        }
    }
    let mut records = run_cases(cases)?;
    for inst in instances {
        let group = format!("{}/{}", inst.name, Setting::Distance.name(cfg.max_len));
        let rates: Vec<f64> = records.iter().filter(|r| r.group == group).filter_map(|r| r.metric).collect();
        let rate = if rates.is_empty() { 0.0 } else { rates.iter().sum::<f64>() / rates.len() as f64 };
        let mut rec = CaseRecord::new(format!("{}/failure-rate", inst.name), "failure-rate", group)
            .metric(rate)
            .detail(format!("{} pairs, params {:?}", rates.len(), inst.params()));
        if !inst.is_hard() {
            rec = rec.check(rate <= MAX_FAILURE_RATE);
        }
        records.push(rec);
    }
    Ok(SuiteReport::new("sr-bench", Environment::current(cfg.seed), records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Setting {
    Distance,
    Plain,
    Wl,
}

impl Setting {
    const ALL: [Setting; 3] = [Setting::Distance, Setting::Plain, Setting::Wl];

    fn name(self, k: usize) -> String {
        match self {
            Setting::Distance => format!("ap{k}-distance"),
            Setting::Plain => format!("ap{k}"),
            Setting::Wl => "wl".into(),
        }
    }
}

fn pair_case(id: &str, inst: &SrInstance, a: &Graph, b: &Graph, setting: Setting, cfg: &SrConfig) -> Result<CaseRecord> {
    let rc = RefinementConfig::new(PathKind::Ap, cfg.max_len);
    let verdict = match setting {
        Setting::Distance => distinguish(a, b, &rc.with_distance(true), cfg.budget),
        Setting::Plain => distinguish(a, b, &rc, cfg.budget),
        Setting::Wl => distinguish_wl(a, b, a.num_nodes(), InitColors::Uniform),
    };
    let (distinguished, detail) = match verdict {
        Ok(v) => (v.is_distinguished(), verdict_text(v)),
        Err(Error::BudgetExceeded { budget, found }) => (false, format!("budget {budget} exceeded at {found}")),
        Err(e) => return Err(HarnessError::from(e)),
    };
    let group = format!("{}/{}", inst.name, setting.name(cfg.max_len));
    let mut rec = CaseRecord::new(id, group, format!("{} vs {}", a.id(), b.id()))
        .metric(f64::from(u8::from(!distinguished)))
        .detail(detail);
    // the builtin pair is the always-runnable smoke test
    if *inst == SrInstance::builtin() {
        match setting {
            Setting::Distance => rec = rec.check(distinguished),
            Setting::Wl => rec = rec.check(!distinguished),
            Setting::Plain => {}
        }
    }
    Ok(rec)
}

fn verdict_text(v: Verdict) -> String {
    match v {
        Verdict::DistinguishedAt(k) => format!("distinguished at iteration {k}"),
        Verdict::Indistinguishable => "indistinguishable".into(),
    }
}
