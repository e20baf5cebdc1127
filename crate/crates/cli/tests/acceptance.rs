//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines reach the
//! terminal. By default a FAIL line is reported but does not fail the
//! target; set `UDRN_ACCEPTANCE_STRICT=1` to turn any FAIL into a non-zero
//! exit.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::path::Path;
use std::time::Instant;

use support::{
    batch_edge_oracle, distance_oracle, gradient_check, knn_oracle, random_matrix, smd_oracle, toy_problem,
};
use udrn::augment::batch_edges;
use udrn::eval::{smd, SyntheticSpec};
use udrn::graph::{build_knn_edges, pairwise_sq_dist, AttributedGraph};
use udrn::objective::{gaussian_kernel, t_kernel};
use udrn::tensor::Tape;
use udrn::trainer::{ablation_variant, record_objective, Ablation, FuzzyStructure, TrainConfig};
use udrn_cli::commands::{cmd_sweep, cmd_train, load_data, run_training};
use udrn_cli::{artifacts, RunConfig};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Verdict {
    name: &'static str,
    pass: bool,
}

fn verdict(name: &'static str, pass: bool, detail: String) -> Verdict {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    Verdict { name, pass }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// The benchmark configuration: default training settings, a 10-feature
/// target, and the default 1500 x 50 synthetic set.
fn benchmark(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.train.loss.target_features = Some(10);
    cfg.synthetic = Some(SyntheticSpec::default());
    cfg.with_seed(seed)
}

fn gradients() -> Verdict {
    let t = Instant::now();
    let frozen = gradient_check(&toy_problem(true), 1e-5);
    let faithful = gradient_check(&toy_problem(false), 1e-5);
    let secs = t.elapsed().as_secs_f64();
    let worst = frozen.max_rel_err.max(faithful.max_rel_err);
    verdict(
        "gradient suite",
        worst < 1e-4 && secs < 10.0,
        format!(
            "max rel err {worst:.2e} over {} partials (frozen target {:.2e}, faithful {:.2e}), {secs:.2}s",
            frozen.checked + faithful.checked,
            frozen.max_rel_err,
            faithful.max_rel_err
        ),
    )
}

fn oracles() -> Verdict {
    let t = Instant::now();
    let x = random_matrix(20, 5, 100);
    let knn: Vec<Vec<usize>> = build_knn_edges(&x, 4)
        .unwrap()
        .iter()
        .map(|l| l.iter().map(|nb| nb.index).collect())
        .collect();
    let knn_ok = knn == knn_oracle(&x, 4);

    let d = random_matrix(10, 6, 101);
    let dist_ok = pairwise_sq_dist(&d, &d).unwrap() == distance_oracle(&d, &d);

    let s = random_matrix(50, 20, 102);
    let xs = s.select_cols(&[1, 5, 8, 13, 19]);
    let smd_ok = (1..=10).all(|k| smd(&s, &xs, k).unwrap().mean_rank_diff == smd_oracle(&s, &xs, k));

    let graph = AttributedGraph::unsupervised(random_matrix(40, 4, 103), 5).unwrap();
    let edges_ok = [(0..40).collect::<Vec<_>>(), vec![7, 3, 39, 12, 0], vec![5]]
        .iter()
        .all(|ids| batch_edges(&graph, ids) == batch_edge_oracle(&graph, ids));
    let secs = t.elapsed().as_secs_f64();
    verdict(
        "oracle equivalence",
        knn_ok && dist_ok && smd_ok && edges_ok && secs < 5.0,
        format!("knn {knn_ok}, distances {dist_ok}, smd {smd_ok}, batch edges {edges_ok}, {secs:.2}s"),
    )
}

fn kernels() -> Verdict {
    let pi = std::f64::consts::PI;
    let cases = [
        ("gaussian(0,1)", gaussian_kernel(0.0, 1.0).unwrap(), 1.0 / (2.0 * pi).sqrt()),
        ("gaussian(2,1)", gaussian_kernel(2.0, 1.0).unwrap(), (-1.0f64).exp() / (2.0 * pi).sqrt()),
        ("t(0,1)", t_kernel(0.0, 1.0).unwrap(), 1.0 / pi),
        ("t(1,1)", t_kernel(1.0, 1.0).unwrap(), 1.0 / (2.0 * pi)),
    ];
    let worst = cases.iter().map(|(_, got, want)| (got - want).abs()).fold(0.0, f64::max);
    let listing: Vec<String> = cases.iter().map(|(n, got, _)| format!("{n}={got:.6}")).collect();
    verdict("kernel values", worst < 1e-6, format!("{}, max err {worst:.1e}", listing.join(" ")))
}

fn leakage() -> Verdict {
    fn fingerprint(p: &support::ToyProblem) -> Vec<u64> {
        let structural = FuzzyStructure::from_config(&p.loss).unwrap();
        let mut tape = Tape::new();
        let obj = record_objective(&mut tape, &p.model, &p.batch, &structural, p.lambda).unwrap();
        let grads = tape.backward(obj.total).unwrap();
        let out = p.model.forward(&p.batch.rows).unwrap();
        let mut all: Vec<u64> = out.zh.as_slice().iter().chain(out.zl.as_slice()).map(|v| v.to_bits()).collect();
        for id in obj.bound.all() {
            all.extend(grads.get(id).as_slice().iter().map(|v| v.to_bits()));
        }
        all
    }
    let mut trials = 0;
    let mut ok = true;
    for detach in [true, false] {
        let mut p = toy_problem(detach);
        p.model.gate.w.as_mut_slice()[2] = 0.0;
        let closed: Vec<usize> = (0..p.model.gate.dim()).filter(|&j| !p.model.gate.is_open(j)).collect();
        let reference = fingerprint(&p);
        for (t, scale) in [1e-6, 1.0, 1e8].into_iter().enumerate() {
            let noise = random_matrix(p.batch.rows.rows(), p.batch.rows.cols(), 200 + t as u64);
            let mut q = toy_problem(detach);
            q.model = p.model.clone();
            for r in 0..q.batch.rows.rows() {
                for &j in &closed {
                    let v = q.batch.rows.get(r, j) + scale * noise.get(r, j);
                    q.batch.rows.set(r, j, v);
                }
            }
            ok &= fingerprint(&q) == reference;
            trials += 1;
        }
    }
    verdict("no leakage", ok, format!("{trials} perturbations of closed features, outputs and gradients bit-identical: {ok}"))
}

struct BenchRun {
    recovery: f64,
    accuracy: f64,
    active: usize,
    lambda_ok: bool,
    lambda_detail: String,
    seconds: f64,
}

/// Checks the adaptive-lambda contract on one report.
fn lambda_contract(records: &[udrn::trainer::EpochRecord], cfg: &TrainConfig) -> (bool, String) {
    let warm = cfg.loss.warmup_epochs;
    let target = cfg.loss.target_features.unwrap_or(usize::MAX);
    let zero_warmup = records.iter().take(warm).all(|r| r.lambda == 0.0);
    let mut growth_ok = true;
    for pair in records.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        if next.epoch <= warm || prev.lambda == 0.0 {
            continue;
        }
        // lambda for epoch e+1 is decided from the count at the end of epoch e
        let expected = if prev.active_features > target { prev.lambda * cfg.loss.growth } else { prev.lambda };
        if (next.lambda - expected).abs() > 1e-12 * expected.abs() {
            growth_ok = false;
        }
    }
    let final_active = records.last().map_or(usize::MAX, |r| r.active_features);
    let met = final_active <= target;
    (
        zero_warmup && growth_ok && met,
        format!("zero warmup {zero_warmup}, growth {growth_ok}, final active {final_active}"),
    )
}

fn benchmark_runs(scratch: &Path) -> (Vec<BenchRun>, Vec<f64>) {
    let mut runs = Vec::new();
    for seed in SEEDS {
        let cfg = benchmark(seed);
        let t = Instant::now();
        let outcome = cmd_train(&cfg, &scratch.join(format!("seed{seed}")), false).expect("benchmark run");
        let seconds = t.elapsed().as_secs_f64();
        let (lambda_ok, lambda_detail) = lambda_contract(&outcome.report.epochs, &cfg.train);
        let run = BenchRun {
            recovery: outcome.metrics.feature_recovery.unwrap_or(0.0),
            accuracy: outcome.metrics.knn_accuracy.unwrap_or(0.0),
            active: outcome.metrics.active_features,
            lambda_ok,
            lambda_detail,
            seconds,
        };
        println!(
            "  seed {seed}: active {} recovery {:.2} knn {:.3} ({seconds:.0}s)",
            run.active, run.recovery, run.accuracy
        );
        runs.push(run);
    }
    let acc = runs.iter().map(|r| r.accuracy).collect();
    (runs, acc)
}

fn recovery(runs: &[BenchRun]) -> Verdict {
    // Keeping every feature open would trivially "select" all informative
    // dims, so a hit also needs the 10-feature target to be met.
    let hits = runs.iter().filter(|r| r.recovery >= 0.8 && r.active <= 10).count();
    let slowest = runs.iter().map(|r| r.seconds).fold(0.0, f64::max);
    let per_seed: Vec<String> = runs.iter().map(|r| format!("{:.1} of {}", r.recovery, r.active)).collect();
    verdict(
        "feature recovery",
        hits >= 4 && slowest < 300.0,
        format!("{hits}/5 seeds with >= 8 of 10 informative dims among <= 10 selected [recovery of active: {}], slowest run {slowest:.0}s", per_seed.join(", ")),
    )
}

fn embedding(acc: &[f64]) -> Verdict {
    let m = median(acc);
    verdict("embedding quality", m >= 0.95, format!("median 5-NN accuracy {m:.3} over {acc:.3?}"))
}

fn lambda(runs: &[BenchRun]) -> Verdict {
    let ok = runs.iter().all(|r| r.lambda_ok);
    let detail: Vec<String> = runs.iter().map(|r| r.lambda_detail.clone()).collect();
    verdict("lambda schedule", ok, detail.join("; "))
}

fn ablations(full: &[f64]) -> Verdict {
    let mut accs = [Vec::new(), Vec::new()];
    for seed in SEEDS {
        let base = benchmark(seed);
        let data = load_data(&base).unwrap();
        for (slot, which) in [Ablation::NoTau, Ablation::NoLtp].into_iter().enumerate() {
            let mut cfg = base.clone();
            cfg.train = ablation_variant(&base.train, which);
            let outcome = run_training(&cfg, &data, false).expect("ablation run");
            accs[slot].push(outcome.metrics.knn_accuracy.unwrap_or(0.0));
        }
    }
    let (f, t, l) = (median(full), median(&accs[0]), median(&accs[1]));
    verdict(
        "ablation ordering",
        f >= t && f >= l,
        format!("median 5-NN accuracy full {f:.3}, w/o tau {t:.3}, w/o L_tp {l:.3}"),
    )
}

/// Reduced setting for the 21-cell grid: 600 points, 150 epochs, no
/// lambda phase. The full benchmark would need ~20 full-length runs.
fn sweep_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.synthetic = Some(SyntheticSpec {
        n: 600,
        ..SyntheticSpec::default()
    });
    cfg.train.epochs = 150;
    cfg.train.batch_size = 100;
    cfg
}

fn sweep(scratch: &Path) -> Verdict {
    let cfg = sweep_config();
    let records = cmd_sweep(&cfg, scratch, false).expect("sweep");
    let cells = cfg.sweep.kinds.len() * cfg.sweep.values.len();
    let on_disk = std::fs::read_to_string(scratch.join(artifacts::SWEEP)).unwrap().lines().count();
    let mut summary = Vec::new();
    let mut dominated = true;
    for kind in &cfg.sweep.kinds {
        let of_kind: Vec<_> = records.iter().filter(|r| &r.kind == kind).collect();
        let none = of_kind.iter().find(|r| r.p == 0.0).and_then(|r| r.knn_accuracy).unwrap_or(f64::NAN);
        let rest: Vec<f64> = of_kind.iter().filter(|r| r.p > 0.0).filter_map(|r| r.knn_accuracy).collect();
        let med = median(&rest);
        dominated &= med >= none;
        summary.push(format!("{kind}: none {none:.3} vs median {med:.3}"));
    }
    verdict(
        "augmentation sweep",
        records.len() == cells && on_disk == cells && dominated,
        format!("{} records ({on_disk} on disk); {}", records.len(), summary.join(", ")),
    )
}

fn determinism(scratch: &Path) -> Verdict {
    let cfg = benchmark(0);
    let again = scratch.join("seed0-again");
    cmd_train(&cfg, &again, false).expect("repeat run");
    let first = scratch.join("seed0");
    let mut names: Vec<String> = std::fs::read_dir(&first)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != artifacts::TIMINGS)
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(first.join(n)).ok() != std::fs::read(again.join(n)).ok())
        .collect();
    verdict(
        "determinism",
        differing.is_empty() && !names.is_empty(),
        format!("{} artifacts compared (timings excluded), differing: {differing:?}", names.len()),
    )
}

fn main() {
    // `cargo test -- --list` and filters: behave like an empty harness.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let strict = std::env::var("UDRN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let scratch = tempfile::tempdir().unwrap();
    let started = Instant::now();
    let mut verdicts = vec![gradients(), oracles(), kernels(), leakage()];
    let (runs, acc) = benchmark_runs(&scratch.path().join("bench"));
    verdicts.push(recovery(&runs));
    verdicts.push(embedding(&acc));
    verdicts.push(lambda(&runs));
    verdicts.push(determinism(&scratch.path().join("bench")));
    verdicts.push(ablations(&acc));
    verdicts.push(sweep(&scratch.path().join("sweep")));

    let failed: Vec<&str> = verdicts.iter().filter(|v| !v.pass).map(|v| v.name).collect();
    println!(
        "acceptance: {}/{} criteria pass in {:.0}s",
        verdicts.len() - failed.len(),
        verdicts.len(),
        started.elapsed().as_secs_f64()
    );
    if strict && !failed.is_empty() {
        eprintln!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
