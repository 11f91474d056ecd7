//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the lines reach the console under `cargo test`.
//! The process fails when a criterion outside `KNOWN_FAILURES` fails, or
//! when a known failure stops failing in the documented way.

use pathlab::expressiveness::{run_expressiveness_suite, ExpressivenessConfig};
use pathlab::sr::{run_sr_benchmark, SrConfig, SrInstance, MAX_FAILURE_RATE};
use pathlab::training::{csl_runs, csl_training_set, run_gradcheck, run_training, GradVariant};
use pathlab::SuiteReport;
use pathlab_core::PathKind;
use pathlab_neural::{ModelConfig, Norm, PathNN, Phi};

/// WL-trees that differ while all-paths trees coincide, once tree labels are
/// erased: node pair (2, 3) of this corpus graph at height 3.
const KNOWN_FAILURES: &[(usize, &str)] = &[(2, "wl-tree-to-path-tree/er_9_0.4_41")];

const GRADCHECK_SEED: u64 = 5;
const SEED: u64 = 0;

struct Outcome {
    criterion: usize,
    passed: bool,
    line: String,
}

fn report(criterion: usize, title: &str, passed: bool, detail: String) -> Outcome {
    let line = format!("[{}] criterion {criterion:>2} {title}: {detail}", if passed { "PASS" } else { "FAIL" });
    println!("{line}");
    Outcome { criterion, passed, line }
}

fn secs(r: &SuiteReport, groups: &[&str]) -> f64 {
    r.records.iter().filter(|c| groups.contains(&c.group.as_str())).map(|c| c.wall_ms).sum::<f64>() / 1e3
}

fn group_ok(r: &SuiteReport, group: &str) -> bool {
    r.group(group).is_some_and(|g| g.failed == 0 && g.checks == g.cases && g.cases > 0)
}

struct Reports {
    expressiveness: SuiteReport,
    sr: SuiteReport,
    gradcheck: SuiteReport,
    training: SuiteReport,
}

fn run_all() -> Reports {
    let expressiveness = run_expressiveness_suite(&ExpressivenessConfig { seed: SEED, ..Default::default() }).expect("expressiveness suite");
    let mut instances = vec![SrInstance::builtin()];
    if let Ok(dir) = std::env::var("PATHLAB_SR_DIR") {
        let mut files: Vec<_> = std::fs::read_dir(&dir).expect("readable PATHLAB_SR_DIR").filter_map(|e| e.ok()).map(|e| e.path()).collect();
        files.sort();
        for f in files.iter().filter(|f| f.extension().is_some_and(|x| x == "g6")) {
            instances.push(SrInstance::from_file(&f.to_string_lossy()).expect("graph6 instance"));
        }
    }
    let sr = run_sr_benchmark(&instances, &SrConfig { seed: SEED, ..Default::default() }).expect("sr benchmark");
    let gradcheck = run_gradcheck(&GradVariant::ALL, GRADCHECK_SEED).expect("gradient check");
    let spp = csl_runs(SEED).remove(0);
    let training = run_training(&csl_training_set(SEED), &[spp], SEED).expect("csl training");
    Reports { expressiveness, sr, gradcheck, training }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool").install(f)
}

fn main() {
    let threads = std::thread::available_parallelism().map_or(2, |n| n.get()).max(2);
    let start = std::time::Instant::now();
    let reports = in_pool(threads, run_all);
    let r = &reports.expressiveness;
    let mut out = Vec::new();

    let t = secs(r, &["oracle"]);
    let g = r.group("oracle").expect("oracle group");
    out.push(report(
        1,
        "enumeration matches the naive oracle",
        group_ok(r, "oracle") && t < 30.0,
        format!("{} graphs x 3 kinds x K<=4 plus shortest-path counts, {} mismatching graphs, {t:.1} s (< 30 s)", g.cases, g.failed),
    ));

    let t = secs(r, &["wl-tree-to-path-tree", "wl-tree-to-path-tree-witness"]);
    let fails: Vec<String> = r.records.iter().filter(|c| c.group == "wl-tree-to-path-tree" && c.passed == Some(false)).map(|c| format!("{} ({})", c.id, c.detail)).collect();
    let witness = r.record("wl-tree-to-path-tree-witness").expect("witness");
    out.push(report(
        2,
        "WL-tree difference implies AP-tree difference",
        fails.is_empty() && witness.passed == Some(true) && t < 120.0,
        format!("{} violating graphs {:?}; witness: {}; {t:.1} s (< 120 s)", fails.len(), fails, witness.detail),
    ));

    out.push(report(
        3,
        "path-tree levels embed in WL-tree levels; pruned WL-tree equals AP-tree",
        group_ok(r, "level-subset") && group_ok(r, "pruned-wl-tree"),
        format!(
            "{} + {} graphs, {} + {} failing",
            r.group("level-subset").map_or(0, |g| g.cases),
            r.group("pruned-wl-tree").map_or(0, |g| g.cases),
            r.group("level-subset").map_or(0, |g| g.failed),
            r.group("pruned-wl-tree").map_or(0, |g| g.failed)
        ),
    ));

    let blind = r.record("shortest-path-blind-spot").expect("blind spot case");
    out.push(report(4, "P3 centre vs K3 node", blind.passed == Some(true), blind.detail.clone()));

    let t = secs(r, &["refines-wl"]);
    out.push(report(
        5,
        "padded path refinement refines 1-WL",
        group_ok(r, "refines-wl") && t < 120.0,
        format!("{} graphs x 3 kinds x 5 iterations, {} failing, {t:.1} s (< 120 s)", r.group("refines-wl").map_or(0, |g| g.cases), r.group("refines-wl").map_or(0, |g| g.failed)),
    ));

    let t = secs(r, &["csl"]);
    let csl: Vec<String> = r.records.iter().filter(|c| c.group == "csl").map(|c| format!("{}: {}", c.id, c.detail)).collect();
    out.push(report(6, "CSL fingerprint separation", group_ok(r, "csl") && t < 60.0, format!("{}; {t:.1} s (< 60 s)", csl.join("; "))));

    let sr = &reports.sr;
    let plain = sr.record("sr16622/000-001/ap4").expect("plain AP record");
    let mut sr_ok = sr.record("sr16622/000-001/wl").and_then(|c| c.passed) == Some(true)
        && sr.record("sr16622/000-001/ap4-distance").and_then(|c| c.passed) == Some(true);
    let mut rates = Vec::new();
    for c in sr.records.iter().filter(|c| c.group == "failure-rate" && !c.id.starts_with("sr16622/")) {
        sr_ok &= c.passed != Some(false);
        rates.push(format!("{} {:.3}{}", c.id, c.metric.unwrap_or(0.0), if c.passed.is_none() { " (exempt)" } else { "" }));
    }
    let files = if rates.is_empty() { "no user instances (set PATHLAB_SR_DIR)".to_string() } else { format!("failure rates {rates:?}, bound {MAX_FAILURE_RATE}") };
    out.push(report(
        7,
        "strongly regular smoke test",
        sr_ok,
        format!("1-WL equal on shrikhande vs rook_4x4, AP K=4 with distance distinguishes; without distance: {}; {files}", plain.detail),
    ));

    let gc = &reports.gradcheck;
    let worst = gc.records.iter().filter_map(|c| c.metric).fold(0.0, f64::max);
    let t = secs(gc, &["plain", "distance", "edge"]);
    out.push(report(
        8,
        "gradients match central differences",
        gc.all_passed() && gc.summary.checks == 36 && t < 60.0,
        format!("{}/{} configurations (3 cells x 2 phi x 2 agg x 3 norms), worst rel. error {worst:.2e} (< 1e-5), {t:.1} s (< 60 s)", gc.summary.passed, gc.summary.checks),
    ));

    let tr = &reports.training;
    let folds: Vec<String> = tr.records.iter().map(|c| format!("{:.1}", c.metric.unwrap_or(f64::NAN))).collect();
    let t = secs(tr, &[tr.records[0].group.as_str()]);
    out.push(report(
        9,
        "CSL training, SP+ K=11",
        tr.all_passed() && tr.summary.checks == 5 && t <= 1800.0,
        format!("fold test accuracies {folds:?}, {t:.0} s (<= 1800 s)"),
    ));

    let mut deltas = Vec::new();
    let mut c10 = true;
    for norm in [Norm::None, Norm::Euclidean, Norm::BatchNorm] {
        for hidden in [4, 16, 64] {
            let count = |k| {
                let mut cfg = ModelConfig::new(PathKind::Ap, k, hidden, 3, 2);
                cfg.phi = Phi::Identity;
                cfg.norm = norm;
                PathNN::init(&cfg, 0).expect("model").1.num_params()
            };
            let norm_size = if norm == Norm::BatchNorm { 2 * hidden } else { 0 };
            for k in 1..6 {
                let d = count(k + 1) - count(k);
                c10 &= d == norm_size;
                deltas.push(d);
            }
        }
    }
    deltas.sort_unstable();
    deltas.dedup();
    out.push(report(10, "parameter count grows only by norm parameters", c10, format!("K -> K+1 differences {deltas:?} over d in {{4, 16, 64}}, K in 1..=5, 3 norms")));

    let again = in_pool(1, run_all);
    let pairs = [
        (&reports.expressiveness, &again.expressiveness),
        (&reports.sr, &again.sr),
        (&reports.gradcheck, &again.gradcheck),
        (&reports.training, &again.training),
    ];
    let differing: Vec<&str> = pairs.iter().filter(|(a, b)| a.reproducible_json() != b.reproducible_json()).map(|(a, _)| a.suite.as_str()).collect();
    out.push(report(
        11,
        "reports are identical across thread counts",
        differing.is_empty() && pairs.iter().all(|(a, b)| a.is_consistent() && b.is_consistent()),
        format!("{threads} vs 1 threads, differing suites {differing:?}"),
    ));

    let elapsed = start.elapsed();
    let failed: Vec<usize> = out.iter().filter(|o| !o.passed).map(|o| o.criterion).collect();
    println!("{} of {} criteria passed in {:.0} s", out.len() - failed.len(), out.len(), elapsed.as_secs_f64());

    let mut unexpected = Vec::new();
    for o in &out {
        let known = KNOWN_FAILURES.iter().find(|(c, _)| *c == o.criterion);
        match (o.passed, known) {
            (false, None) => unexpected.push(o.line.clone()),
            (true, Some(_)) => unexpected.push(format!("criterion {} was expected to fail", o.criterion)),
            (false, Some((_, case))) => {
                // the failure must be exactly the analysed counterexample
                let only: Vec<&str> = reports.expressiveness.failures().map(|c| c.id.as_str()).collect();
                if only != [*case] {
                    unexpected.push(format!("criterion {} failed on {only:?}, expected only {case}", o.criterion));
                } else {
                    println!("criterion {} fails on the documented counterexample {case}", o.criterion);
                }
            }
            (true, None) => {}
        }
    }
    if !unexpected.is_empty() {
        for u in &unexpected {
            eprintln!("unexpected: {u}");
        }
        std::process::exit(1);
    }
}
