//! End-to-end acceptance checks. Each check prints one `PASS` or `FAIL` line;
//! the process exits non-zero if any check fails.

use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use dp_kde::baseline::{CountingTree, HighDimCountingTree};
use dp_kde::format::{Kernel, Structure};
use dp_kde::harness::{
    run_plan, time_queries, DatasetSpec, ExperimentPlan, PlanParams, ReportRow, SweepVar,
};
use dp_kde::harness::{Arm, DEFAULT_NODE_CAP};
use dp_kde::l1tree::{analytic_query_variance, QueryAccumulators};
use dp_kde::lptree::choose_lp_layers;
use dp_kde::noise::compose_budgets;
use dp_kde::oracle::{exact_l1_1d, exact_l1_restricted, exact_l2, exact_lpp_restricted};
use dp_kde::{
    EmbeddingSpec, HighDimLpTree, HighDimTree, L2KdeStructure, NoisyL1Tree, NoisyLpTree,
    PrivacyBudget, RngSeed, TreeConfig,
};

type Check = (&'static str, Duration, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() * bound).collect()
}

fn pure(eps: f64) -> PrivacyBudget {
    PrivacyBudget::pure(eps).unwrap()
}

fn decomposition_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=128);
        let points = uniform(&mut rng, n, 1.0);
        let y = rng.random::<f64>();
        let exact = exact_l1_1d(&points, y);
        let got = QueryAccumulators::from_sets(&points, y).combine(y);
        worst = worst.max((got - exact).abs() / exact.max(f64::MIN_POSITIVE));
    }
    outcome(
        worst <= 1e-9,
        format!("max relative error {worst:.2e} over 1000 instances"),
    )
}

fn noiseless_matches_restricted_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_match = 0.0f64;
    let mut truncation_violations = 0;
    let mut worst_omitted = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=256);
        let points = uniform(&mut rng, n, 1.0);
        let y = rng.random::<f64>();
        let tol = 1e-9 * n as f64;

        let config = TreeConfig::new(n, 1.0, pure(1.0)).unwrap();
        let leaf = config.leaf_interval(y).unwrap();
        let in_leaf = points.iter().filter(|x| leaf.contains(x)).count() as f64;
        let got = NoisyL1Tree::build(&points, config, None)
            .unwrap()
            .query(y)
            .unwrap();
        let restricted = exact_l1_restricted(&points, y, leaf.clone());
        worst_match = worst_match.max((got - restricted).abs() / tol);
        let omitted = exact_l1_1d(&points, y) - got;
        worst_omitted = worst_omitted.max(omitted);
        if omitted > in_leaf * config.leaf_width() + tol || omitted < -tol {
            truncation_violations += 1;
        }

        for p in 1..=3u32 {
            let layers = choose_lp_layers(n, p).unwrap();
            let config = TreeConfig::with_layers(n, 1.0, layers, pure(1.0)).unwrap();
            let leaf = config.leaf_interval(y).unwrap();
            let in_leaf = points.iter().filter(|x| leaf.contains(x)).count() as f64;
            let got = NoisyLpTree::build(&points, config, p, None)
                .unwrap()
                .query(y)
                .unwrap();
            let restricted = exact_lpp_restricted(&points, y, p, leaf.clone());
            worst_match = worst_match.max((got - restricted).abs() / tol);
            let omitted = exact_lpp_restricted(&points, y, p, 0.0..0.0) - got;
            if omitted > in_leaf * config.leaf_width().powi(p as i32) + tol || omitted < -tol {
                truncation_violations += 1;
            }
        }
    }
    outcome(
        worst_match <= 1.0 && truncation_violations == 0,
        format!(
            "worst mismatch {worst_match:.2e} of tolerance, {truncation_violations} truncation-bound violations, \
             largest l1 omitted mass {worst_omitted:.3} (R = 1)"
        ),
    )
}

fn noise_calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let points = uniform(&mut rng, 256, 1.0);
    let y = 0.37;
    let config = TreeConfig::new(256, 1.0, pure(1.0)).unwrap();
    let clean = NoisyL1Tree::build(&points, config, None)
        .unwrap()
        .query(y)
        .unwrap();
    let trials = 10_000;
    let root = RngSeed(3);
    let answers: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut stream = root.derive("trial", t as u64).stream();
            NoisyL1Tree::build(&points, config, Some(&mut stream))
                .unwrap()
                .query(y)
                .unwrap()
        })
        .collect();
    let mean = answers.iter().sum::<f64>() / trials as f64;
    let var = answers.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let analytic = analytic_query_variance(&config, y).unwrap();
    let mean_tol = 4.0 * (analytic / trials as f64).sqrt();
    let var_rel = (var / analytic - 1.0).abs();
    outcome(
        (mean - clean).abs() <= mean_tol && var_rel <= 0.10,
        format!(
            "mean offset {:.3} (limit {mean_tol:.3}), variance {var:.1} vs analytic {analytic:.1} ({:.1}% off)",
            mean - clean,
            100.0 * var_rel
        ),
    )
}

fn l1_plan(
    sweep: SweepVar,
    grid: Vec<f64>,
    params: PlanParams,
    trials: usize,
    queries: usize,
) -> ExperimentPlan {
    ExperimentPlan {
        name: "acceptance".into(),
        arm: Arm::FasterL1,
        sweep,
        grid,
        params,
        trials,
        queries,
        dataset: DatasetSpec::Uniform,
        seed: 11,
        noise: true,
        timing: false,
        node_cap: DEFAULT_NODE_CAP,
    }
}

fn one_d(n: usize) -> PlanParams {
    PlanParams {
        n,
        d: 1,
        bound: 1.0,
        epsilon: 1.0,
        alpha: 0.5,
        p: 2,
    }
}

fn errors(rows: &[ReportRow]) -> Vec<f64> {
    rows.iter().map(|r| r.mean_abs_err).collect()
}

fn epsilon_scaling() -> Outcome {
    let rows = run_plan(&l1_plan(
        SweepVar::Epsilon,
        vec![0.5, 1.0],
        one_d(4096),
        2000,
        16,
    ))
    .unwrap();
    let e = errors(&rows);
    let ratio = e[0] / e[1];
    outcome(
        (1.5..=2.5).contains(&ratio),
        format!(
            "error {:.2} at eps 0.5, {:.2} at eps 1, ratio {ratio:.3}",
            e[0], e[1]
        ),
    )
}

fn n_scaling() -> Outcome {
    let rows = run_plan(&l1_plan(
        SweepVar::N,
        vec![1024.0, 65536.0],
        one_d(1024),
        500,
        16,
    ))
    .unwrap();
    let e = errors(&rows);
    let ratio = e[1] / e[0];
    outcome(
        ratio <= 2.5,
        format!(
            "error {:.2} at n=2^10, {:.2} at n=2^16, ratio {ratio:.3}",
            e[0], e[1]
        ),
    )
}

fn d_scaling() -> Outcome {
    let rows = run_plan(&l1_plan(
        SweepVar::D,
        vec![2.0, 8.0, 32.0],
        one_d(1024),
        500,
        16,
    ))
    .unwrap();
    let e = errors(&rows);
    let xs = [2f64.ln(), 8f64.ln(), 32f64.ln()];
    let ys: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / 3.0;
    let my = ys.iter().sum::<f64>() / 3.0;
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    outcome(
        (1.2..=1.8).contains(&slope),
        format!(
            "errors {:.1}, {:.1}, {:.1} at d = 2, 8, 32; log-log slope {slope:.3}",
            e[0], e[1], e[2]
        ),
    )
}

fn query_work() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_excess = i64::MIN;
    let mut timings = Vec::new();
    for k in [4u32, 8, 10, 12, 16, 20] {
        let n = 1usize << k;
        let points = uniform(&mut rng, n, 1.0);
        let config = TreeConfig::new(n, 1.0, pure(1.0)).unwrap();
        let mut stream = RngSeed(u64::from(k)).stream();
        let tree = NoisyL1Tree::build(&points, config, Some(&mut stream)).unwrap();
        let queries: Vec<Vec<f64>> = (0..4000).map(|_| vec![rng.random::<f64>()]).collect();
        for q in &queries {
            let used = tree.accumulate(q[0]).unwrap().siblings as i64;
            worst_excess = worst_excess.max(used - (i64::from(config.layers()) - 1));
        }
        if k == 10 || k == 20 {
            let samples: Vec<u64> = (0..5)
                .map(|_| time_queries(&tree, &queries).unwrap().median_ns)
                .collect();
            timings.push(*samples.iter().min().unwrap());
        }
    }
    let ratio = timings[1] as f64 / timings[0].max(1) as f64;
    outcome(
        worst_excess <= 0 && ratio <= 5.0,
        format!(
            "max siblings minus (L-1) = {worst_excess}, median query {} ns at n=2^10, {} ns at n=2^20, ratio {ratio:.2}",
            timings[0], timings[1]
        ),
    )
}

fn two_arm_comparison() -> Outcome {
    let grid = vec![0.25, 0.5, 1.0, 2.0];
    let ours = run_plan(&l1_plan(
        SweepVar::Epsilon,
        grid.clone(),
        one_d(4096),
        2000,
        20,
    ))
    .unwrap();
    let baseline = run_plan(&ExperimentPlan {
        arm: Arm::Baseline,
        ..l1_plan(SweepVar::Epsilon, grid.clone(), one_d(4096), 2000, 20)
    })
    .unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for ((eps, a), b) in grid.iter().zip(&ours).zip(&baseline) {
        pass &= a.mean_abs_err <= b.mean_abs_err;
        parts.push(format!(
            "eps {eps}: {:.1} vs {:.1}",
            a.mean_abs_err, b.mean_abs_err
        ));
    }
    outcome(
        pass,
        format!("ours vs baseline mean error: {}", parts.join("; ")),
    )
}

fn l2_embedding() -> Outcome {
    let alpha = 0.2;
    let d = 50;
    let k = dp_kde::l2kde::target_dimension(1000, alpha).unwrap();
    let unit: Vec<f64> = (0..d)
        .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } / (d as f64).sqrt())
        .collect();
    let within = (0..2000u64)
        .into_par_iter()
        .filter(|&t| {
            let spec = EmbeddingSpec::with_dimension(d, k, alpha, RngSeed(t)).unwrap();
            let norm: f64 = spec.embed(&unit).unwrap().iter().map(|v| v.abs()).sum();
            (1.0 - alpha..=1.0 + alpha).contains(&norm)
        })
        .count();
    let embed_rate = within as f64 / 2000.0;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let side = 1.0 / (d as f64).sqrt();
    let points: Vec<Vec<f64>> = (0..1000).map(|_| uniform(&mut rng, d, side)).collect();
    let spec = EmbeddingSpec::new(d, alpha, 1000, RngSeed(9)).unwrap();
    let structure = L2KdeStructure::build(&points, spec, pure(1.0), None).unwrap();
    let good = (0..100)
        .map(|_| uniform(&mut rng, d, side))
        .filter(|y| {
            let exact = exact_l2(points.iter().map(Vec::as_slice), y).unwrap();
            let got = structure.query(y).unwrap();
            (got - exact).abs() <= alpha * exact
        })
        .count();
    outcome(
        embed_rate >= 0.99 && good >= 95,
        format!(
            "k = {k}: {:.2}% of embeddings within 1 +- alpha; noiseless pipeline within alpha on {good}/100 queries",
            100.0 * embed_rate
        ),
    )
}

fn budget_accounting() -> Outcome {
    let eps = 0.7;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let flat = uniform(&mut rng, 300, 1.0);
    let points: Vec<Vec<f64>> = flat.chunks(3).map(<[f64]>::to_vec).collect();
    let config = TreeConfig::new(300, 1.0, pure(eps)).unwrap();
    let seed = Some(RngSeed(10));
    let spec = EmbeddingSpec::new(3, 0.5, 100, RngSeed(4)).unwrap();
    let families: Vec<(&str, Vec<PrivacyBudget>)> = vec![
        (
            "l1 tree",
            NoisyL1Tree::build(&flat, config, None)
                .unwrap()
                .noise_families(),
        ),
        (
            "lp tree",
            NoisyLpTree::build(&flat, config, 3, None)
                .unwrap()
                .noise_families(),
        ),
        (
            "counting tree",
            CountingTree::build(&flat, config, 0.5, None)
                .unwrap()
                .noise_families(),
        ),
        (
            "d-dim l1",
            HighDimTree::build(&points, 3, 1.0, pure(eps), seed)
                .unwrap()
                .noise_families(),
        ),
        (
            "d-dim lp",
            HighDimLpTree::build(&points, 3, 1.0, 4, None, pure(eps), seed)
                .unwrap()
                .noise_families(),
        ),
        (
            "d-dim counting",
            HighDimCountingTree::build(&points, 3, 1.0, 0.5, pure(eps), seed)
                .unwrap()
                .noise_families(),
        ),
        (
            "l2",
            L2KdeStructure::build(&points, spec.clone(), pure(eps), seed)
                .unwrap()
                .noise_families(),
        ),
        (
            "saved l2",
            Structure::new(Kernel::L2(
                L2KdeStructure::build(&points, spec, pure(eps), seed).unwrap(),
            ))
            .noise_families(),
        ),
    ];
    let mut worst = 0.0f64;
    let mut worst_name = "";
    for (name, fam) in &families {
        let total = compose_budgets(fam).unwrap().epsilon();
        if (total - eps).abs() >= worst {
            worst = (total - eps).abs();
            worst_name = name;
        }
    }
    outcome(
        worst <= 1e-12,
        format!(
            "{} structures, largest deviation {worst:.1e} ({worst_name})",
            families.len()
        ),
    )
}

fn bench_determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("dp-kde-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let run = |name: &str| -> Vec<u8> {
        let out: PathBuf = dir.join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_dp-kde"))
            .args(["bench", "--seed", "7", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(&out).unwrap()
    };
    let a = run("a.csv");
    let b = run("b.csv");
    let _ = std::fs::remove_dir_all(&dir);
    let rows = a.iter().filter(|&&c| c == b'\n').count().saturating_sub(2);
    outcome(
        a == b && rows > 0,
        format!(
            "two `bench --seed 7` runs: {} bytes, {rows} rows, identical = {}",
            a.len(),
            a == b
        ),
    )
}

fn main() {
    let checks: [Check; 11] = [
        (
            "decomposition identity",
            Duration::from_secs(5),
            decomposition_identity,
        ),
        (
            "noiseless tree equals restricted oracle",
            Duration::from_secs(30),
            noiseless_matches_restricted_oracle,
        ),
        (
            "noise calibration",
            Duration::from_secs(60),
            noise_calibration,
        ),
        ("epsilon scaling", Duration::from_secs(60), epsilon_scaling),
        ("n scaling", Duration::from_secs(300), n_scaling),
        ("d scaling", Duration::from_secs(300), d_scaling),
        ("query work bound", Duration::from_secs(120), query_work),
        (
            "two-arm comparison",
            Duration::from_secs(600),
            two_arm_comparison,
        ),
        (
            "l2 embedding distortion",
            Duration::from_secs(300),
            l2_embedding,
        ),
        (
            "budget accounting",
            Duration::from_secs(60),
            budget_accounting,
        ),
        (
            "bench determinism",
            Duration::from_secs(300),
            bench_determinism,
        ),
    ];
    let mut failures = 0;
    for (i, (name, limit, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= *limit;
        if !pass {
            failures += 1;
        }
        println!(
            "{} [{:>2}] {name}: {} ({:.1} s, limit {} s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        checks.len() - failures
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
