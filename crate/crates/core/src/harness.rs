//! Experiment runner for privacy-utility and efficiency comparisons.
//!
//! A plan fixes an arm (which structure), a sweep variable with its grid, and
//! the remaining parameters. For every grid point the runner draws one
//! dataset and one query batch, rebuilds the structure `trials` times with
//! fresh noise, compares every answer with the exact oracle and aggregates
//! the errors into one [`ReportRow`]. Everything is derived from the plan's
//! seed, so a report is reproducible byte for byte as long as wall-clock
//! timing is off.

use std::fmt::{self, Write as _};
use std::hint::black_box;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{CountingTree, HighDimCountingTree};
use crate::data::{gen_gaussian_clipped, gen_uniform, Dataset};
use crate::error::{Error, Result};
use crate::l1tree::NoisyL1Tree;
use crate::l2kde::{EmbeddedPoints, EmbeddingSpec, L2KdeStructure};
use crate::lptree::{choose_lp_layers, HighDimLpTree, NoisyLpTree};
use crate::multidim::HighDimTree;
use crate::noise::{PrivacyBudget, RngSeed};
use crate::oracle::{exact_l1, exact_l2, exact_lpp};
use crate::tree::choose_layers;

/// Version string stamped on every report row.
pub const ARTIFACT_VERSION: &str = concat!("dp-kde ", env!("CARGO_PKG_VERSION"));

/// First line of every report.
pub const SCHEMA_COMMENT: &str = "# dp-kde bench schema v1";

pub const CSV_COLUMNS: [&str; 21] = [
    "arm",
    "sweep_var",
    "sweep_value",
    "n",
    "d",
    "R",
    "epsilon",
    "alpha",
    "p",
    "trials",
    "mean_abs_err",
    "stderr",
    "fit_M",
    "fit_Z",
    "median_query_ns",
    "init_ms",
    "op_count",
    "seed",
    "config_hash",
    "version",
    "status",
];

/// Default cap on stored tree nodes per structure.
pub const DEFAULT_NODE_CAP: usize = 1 << 26;

/// Warmup rounds over the query batch before timing.
pub const WARMUP_ROUNDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    FasterL1,
    Baseline,
    Lp,
    L2,
}

impl Arm {
    pub fn label(self) -> &'static str {
        match self {
            Arm::FasterL1 => "faster-l1",
            Arm::Baseline => "baseline-blm",
            Arm::Lp => "lp",
            Arm::L2 => "l2",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "faster-l1" => Ok(Arm::FasterL1),
            "baseline-blm" => Ok(Arm::Baseline),
            "lp" => Ok(Arm::Lp),
            "l2" => Ok(Arm::L2),
            _ => Err(Error::InvalidParameter(format!("unknown arm `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVar {
    Epsilon,
    N,
    D,
    Alpha,
    P,
}

impl SweepVar {
    pub fn label(self) -> &'static str {
        match self {
            SweepVar::Epsilon => "epsilon",
            SweepVar::N => "n",
            SweepVar::D => "d",
            SweepVar::Alpha => "alpha",
            SweepVar::P => "p",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    Uniform,
    Gaussian { mean: f64, sigma: f64 },
}

/// Parameters of one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanParams {
    pub n: usize,
    pub d: usize,
    #[serde(rename = "R")]
    pub bound: f64,
    pub epsilon: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_p")]
    pub p: u32,
}

fn default_alpha() -> f64 {
    0.5
}

fn default_p() -> u32 {
    2
}

fn default_true() -> bool {
    true
}

fn default_node_cap() -> usize {
    DEFAULT_NODE_CAP
}

fn default_queries() -> usize {
    32
}

impl PlanParams {
    /// These parameters with the sweep variable set to `value`.
    pub fn with(self, var: SweepVar, value: f64) -> Result<Self> {
        let as_count = |v: f64, what: &str| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidParameter(format!(
                    "{what} must be a whole number, got {v}"
                )))
            }
        };
        let mut p = self;
        match var {
            SweepVar::Epsilon => p.epsilon = value,
            SweepVar::Alpha => p.alpha = value,
            SweepVar::N => p.n = as_count(value, "n")?,
            SweepVar::D => p.d = as_count(value, "d")?,
            SweepVar::P => p.p = as_count(value, "p")? as u32,
        }
        Ok(p)
    }
}

/// One arm swept over one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    #[serde(default)]
    pub name: String,
    pub arm: Arm,
    pub sweep: SweepVar,
    pub grid: Vec<f64>,
    pub params: PlanParams,
    pub trials: usize,
    #[serde(default = "default_queries")]
    pub queries: usize,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub seed: u64,
    /// `false` builds noiseless structures (sanity runs only).
    #[serde(default = "default_true")]
    pub noise: bool,
    /// Measure wall-clock build and query times. Makes reports
    /// non-reproducible; timing columns are 0 otherwise.
    #[serde(default)]
    pub timing: bool,
    #[serde(default = "default_node_cap")]
    pub node_cap: usize,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "plan `{}` has an empty grid",
                self.name
            )));
        }
        if self.trials == 0 || self.queries == 0 {
            return Err(Error::InvalidParameter(format!(
                "plan `{}` needs at least one trial and one query",
                self.name
            )));
        }
        for &v in &self.grid {
            self.params.with(self.sweep, v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PlanFile {
    plan: Vec<ExperimentPlan>,
}

/// Parses a TOML plan file holding one or more `[[plan]]` tables.
pub fn parse_plan_file(text: &str) -> Result<Vec<ExperimentPlan>> {
    let file: PlanFile =
        toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("plan file: {e}")))?;
    for p in &file.plan {
        p.validate()?;
    }
    Ok(file.plan)
}

/// Names accepted by [`named_plans`].
pub const PLAN_NAMES: [&str; 6] = [
    "fig2-style",
    "fig3-style",
    "dim-sweep",
    "lp-sweep",
    "l2-alpha",
    "smoke",
];

/// Built-in plans.
///
/// - `fig2-style`: error against epsilon, ours and the baseline, uniform 1-D
///   data with `n = 4096`.
/// - `fig3-style`: error and per-query work against `n`, ours and the
///   baseline, at `eps = 1`.
/// - `dim-sweep`: error against `d` for the l1 tree.
/// - `lp-sweep`: error against `p` for the power-sum tree.
/// - `l2-alpha`: error against the embedding distortion.
/// - `smoke`: a tiny two-arm run for tests.
pub fn named_plans(name: &str) -> Result<Vec<ExperimentPlan>> {
    let base = |name: &str,
                arm: Arm,
                sweep: SweepVar,
                grid: Vec<f64>,
                params: PlanParams,
                trials: usize| ExperimentPlan {
        name: name.to_string(),
        arm,
        sweep,
        grid,
        params,
        trials,
        queries: 32,
        dataset: DatasetSpec::Uniform,
        seed: crate::noise::DEFAULT_SEED,
        noise: true,
        timing: false,
        node_cap: DEFAULT_NODE_CAP,
    };
    let one_d = |n: usize| PlanParams {
        n,
        d: 1,
        bound: 1.0,
        epsilon: 1.0,
        alpha: 0.5,
        p: 2,
    };
    let both = |name: &str, sweep: SweepVar, grid: Vec<f64>, params: PlanParams, trials: usize| {
        vec![
            base(name, Arm::FasterL1, sweep, grid.clone(), params, trials),
            base(name, Arm::Baseline, sweep, grid, params, trials),
        ]
    };
    let plans = match name {
        "fig2-style" => both(
            name,
            SweepVar::Epsilon,
            vec![0.25, 0.5, 1.0, 2.0, 4.0],
            one_d(4096),
            200,
        ),
        "fig3-style" => both(
            name,
            SweepVar::N,
            vec![256.0, 1024.0, 4096.0, 16384.0, 65536.0],
            one_d(4096),
            50,
        ),
        "dim-sweep" => vec![base(
            name,
            Arm::FasterL1,
            SweepVar::D,
            vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            one_d(1024),
            100,
        )],
        "lp-sweep" => vec![base(
            name,
            Arm::Lp,
            SweepVar::P,
            vec![1.0, 2.0, 3.0, 4.0],
            one_d(1024),
            100,
        )],
        "l2-alpha" => vec![ExperimentPlan {
            queries: 16,
            ..base(
                name,
                Arm::L2,
                SweepVar::Alpha,
                vec![0.2, 0.4, 0.8],
                PlanParams {
                    n: 200,
                    d: 10,
                    ..one_d(200)
                },
                5,
            )
        }],
        "smoke" => both(name, SweepVar::Epsilon, vec![0.5, 1.0], one_d(256), 10)
            .into_iter()
            .map(|p| ExperimentPlan { queries: 8, ..p })
            .collect(),
        _ => {
            return Err(Error::UnknownPlan {
                name: name.to_string(),
                available: PLAN_NAMES.join(", "),
            })
        }
    };
    Ok(plans)
}

/// A structure that answers distance-sum queries and reports its work.
pub trait DistanceQuery {
    fn answer(&self, y: &[f64]) -> Result<f64>;

    /// Architecture-independent work for one query: sibling accumulations
    /// for the trees, summed nodes for the baseline.
    fn op_count(&self, y: &[f64]) -> Result<usize>;
}

impl DistanceQuery for NoisyL1Tree {
    fn answer(&self, y: &[f64]) -> Result<f64> {
        self.query(single(y)?)
    }

    fn op_count(&self, y: &[f64]) -> Result<usize> {
        Ok(self.accumulate(single(y)?)?.siblings)
    }
}

impl DistanceQuery for HighDimTree {
    fn answer(&self, y: &[f64]) -> Result<f64> {
        self.query(y)
    }

    fn op_count(&self, y: &[f64]) -> Result<usize> {
        self.trees()
            .iter()
            .zip(y)
            .map(|(t, &v)| Ok(t.accumulate(v)?.siblings))
            .sum()
    }
}

impl DistanceQuery for NoisyLpTree {
    fn answer(&self, y: &[f64]) -> Result<f64> {
        self.query(single(y)?)
    }

    fn op_count(&self, y: &[f64]) -> Result<usize> {
        self.config().leaf_index(single(y)?)?;
        Ok(self.config().layers() as usize - 1)
    }
}

impl DistanceQuery for HighDimLpTree {
    fn answer(&self, y: &[f64]) -> Result<f64> {
        self.query(y)
    }

    fn op_count(&self, y: &[f64]) -> Result<usize> {
        self.trees()
            .iter()
            .zip(y)
            .map(|(t, &v)| t.op_count(&[v]))
            .sum()
    }
}

impl DistanceQuery for L2KdeStructure {
    fn answer(&self, y: &[f64]) -> Result<f64> {
        self.query(y)
    }

    fn op_count(&self, y: &[f64]) -> Result<usize> {
        let (coords, _) = self.embed_query(y)?;
        self.inner().op_count(&coords)
    }
}

impl DistanceQuery for CountingTree {
    fn answer(&self, y: &[f64]) -> Result<f64> {
        self.query(single(y)?)
    }

    fn op_count(&self, y: &[f64]) -> Result<usize> {
        Ok(self.query_detailed(single(y)?)?.nodes)
    }
}

impl DistanceQuery for HighDimCountingTree {
    fn answer(&self, y: &[f64]) -> Result<f64> {
        self.query(y)
    }

    fn op_count(&self, y: &[f64]) -> Result<usize> {
        self.trees()
            .iter()
            .zip(y)
            .map(|(t, &v)| t.op_count(&[v]))
            .sum()
    }
}

fn single(y: &[f64]) -> Result<f64> {
    match y {
        [v] => Ok(*v),
        _ => Err(Error::DimensionMismatch {
            expected: 1,
            got: y.len(),
        }),
    }
}

/// Wall-clock query statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryTiming {
    pub median_ns: u64,
    pub p90_ns: u64,
    /// Largest [`DistanceQuery::op_count`] over the batch.
    pub op_count: usize,
}

/// Times every query once after [`WARMUP_ROUNDS`] untimed passes.
pub fn time_queries<Q: DistanceQuery + ?Sized>(
    structure: &Q,
    queries: &[Vec<f64>],
) -> Result<QueryTiming> {
    let mut op_count = 0;
    for q in queries {
        op_count = op_count.max(structure.op_count(q)?);
    }
    for _ in 0..WARMUP_ROUNDS {
        for q in queries {
            black_box(structure.answer(black_box(q))?);
        }
    }
    let mut nanos = Vec::with_capacity(queries.len());
    for q in queries {
        let start = Instant::now();
        black_box(structure.answer(black_box(q))?);
        nanos.push(start.elapsed().as_nanos() as u64);
    }
    nanos.sort_unstable();
    let pick = |f: f64| {
        nanos
            .get(((nanos.len() as f64 - 1.0) * f).round() as usize)
            .copied()
            .unwrap_or(0)
    };
    Ok(QueryTiming {
        median_ns: pick(0.5),
        p90_ns: pick(0.9),
        op_count,
    })
}

/// Fit of `|A - A'| ~ (M - 1) * A' + Z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityFit {
    pub m: f64,
    pub z: f64,
    /// Fewer than two distinct true values: only `Z` was fitted and `M = 1`.
    pub degenerate: bool,
}

/// Least-squares fit of `|estimate - truth|` against `truth` over
/// `(estimate, truth)` pairs. Slope and intercept are floored at 0.
pub fn fit_similarity_error(pairs: &[(f64, f64)]) -> SimilarityFit {
    if pairs.is_empty() {
        return SimilarityFit {
            m: 1.0,
            z: 0.0,
            degenerate: true,
        };
    }
    let n = pairs.len() as f64;
    let mean_x = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let mean_e = pairs.iter().map(|p| (p.0 - p.1).abs()).sum::<f64>() / n;
    let (mut sxx, mut sxe) = (0.0, 0.0);
    for &(a, t) in pairs {
        sxx += (t - mean_x) * (t - mean_x);
        sxe += (t - mean_x) * ((a - t).abs() - mean_e);
    }
    if sxx <= f64::EPSILON * mean_x.abs().max(1.0) * n {
        return SimilarityFit {
            m: 1.0,
            z: mean_e.max(0.0),
            degenerate: true,
        };
    }
    let slope = sxe / sxx;
    SimilarityFit {
        m: 1.0 + slope.max(0.0),
        z: (mean_e - slope * mean_x).max(0.0),
        degenerate: false,
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub arm: Arm,
    pub sweep_var: SweepVar,
    pub sweep_value: f64,
    pub params: PlanParams,
    pub trials: usize,
    pub mean_abs_err: f64,
    pub stderr: f64,
    pub fit: SimilarityFit,
    pub median_query_ns: u64,
    pub init_ms: u64,
    pub op_count: usize,
    pub seed: u64,
    pub config_hash: String,
    pub status: &'static str,
}

impl ReportRow {
    pub fn is_skipped(&self) -> bool {
        self.status != "ok"
    }

    pub fn csv_line(&self) -> String {
        let p = &self.params;
        let fields = [
            self.arm.label().to_string(),
            self.sweep_var.label().to_string(),
            self.sweep_value.to_string(),
            p.n.to_string(),
            p.d.to_string(),
            p.bound.to_string(),
            p.epsilon.to_string(),
            p.alpha.to_string(),
            p.p.to_string(),
            self.trials.to_string(),
            self.mean_abs_err.to_string(),
            self.stderr.to_string(),
            self.fit.m.to_string(),
            self.fit.z.to_string(),
            self.median_query_ns.to_string(),
            self.init_ms.to_string(),
            self.op_count.to_string(),
            self.seed.to_string(),
            self.config_hash.clone(),
            ARTIFACT_VERSION.to_string(),
            self.status.to_string(),
        ];
        fields.join(",")
    }
}

/// Schema comment, header and one line per row.
pub fn render_csv(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{SCHEMA_COMMENT}");
    let _ = writeln!(out, "{}", CSV_COLUMNS.join(","));
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

pub fn write_csv(rows: &[ReportRow], path: &Path) -> Result<()> {
    std::fs::write(path, render_csv(rows))?;
    Ok(())
}

/// Runs every grid point of `plan` in order.
pub fn run_plan(plan: &ExperimentPlan) -> Result<Vec<ReportRow>> {
    plan.validate()?;
    plan.grid
        .iter()
        .enumerate()
        .map(|(i, &v)| run_point(plan, i, v))
        .collect()
}

/// Runs several plans and concatenates their rows.
pub fn run_plans(plans: &[ExperimentPlan]) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for p in plans {
        rows.extend(run_plan(p)?);
    }
    Ok(rows)
}

fn config_hash(plan: &ExperimentPlan, params: &PlanParams) -> String {
    let canonical = format!(
        "{}|{}|{:?}|{:?}|trials={}|queries={}|seed={}|noise={}",
        plan.arm.label(),
        plan.sweep.label(),
        params,
        plan.dataset,
        plan.trials,
        plan.queries,
        plan.seed,
        plan.noise
    );
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// The prepared inputs of one grid point.
struct PointInputs {
    data: Dataset,
    queries: Vec<Vec<f64>>,
    truth: Vec<f64>,
}

fn prepare_point(plan: &ExperimentPlan, params: &PlanParams) -> Result<PointInputs> {
    let root = RngSeed(plan.seed);
    // l2 data live in a box whose diagonal is R, so every pairwise l2
    // distance stays below R.
    let bound = match plan.arm {
        Arm::L2 => params.bound / (params.d as f64).sqrt(),
        _ => params.bound,
    };
    let data = match plan.dataset {
        DatasetSpec::Uniform => gen_uniform(params.n, params.d, bound, root.derive("dataset", 0))?,
        DatasetSpec::Gaussian { mean, sigma } => gen_gaussian_clipped(
            params.n,
            params.d,
            mean * bound,
            sigma * bound,
            bound,
            root.derive("dataset", 0),
        )?,
    };
    let query_set = gen_uniform(plan.queries, params.d, bound, root.derive("queries", 0))?;
    let queries: Vec<Vec<f64>> = query_set.rows().into_iter().map(<[f64]>::to_vec).collect();
    let rows = data.rows();
    let truth = queries
        .par_iter()
        .map(|q| match plan.arm {
            Arm::FasterL1 | Arm::Baseline => exact_l1(rows.iter().copied(), q),
            Arm::Lp => exact_lpp(rows.iter().copied(), q, params.p),
            Arm::L2 => exact_l2(rows.iter().copied(), q),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PointInputs {
        data,
        queries,
        truth,
    })
}

/// Stored entries of the structure a grid point would build.
fn planned_nodes(arm: Arm, params: &PlanParams) -> Result<usize> {
    let (trees, layers, width) = match arm {
        Arm::FasterL1 => (params.d, choose_layers(params.n), 2),
        Arm::Baseline => (params.d, choose_layers(params.n), 1),
        Arm::Lp => (
            params.d,
            choose_lp_layers(params.n, params.p)?,
            params.p as usize + 1,
        ),
        Arm::L2 => (
            crate::l2kde::target_dimension(params.n, params.alpha)?,
            choose_layers(params.n),
            2,
        ),
    };
    let per_tree = 1usize.checked_shl(layers).map_or(usize::MAX, |v| v - 1);
    Ok(per_tree.saturating_mul(trees).saturating_mul(width))
}

enum Built {
    L1(HighDimTree),
    Baseline(HighDimCountingTree),
    Lp(HighDimLpTree),
    L2(L2KdeStructure),
}

impl Built {
    fn as_query(&self) -> &dyn DistanceQuery {
        match self {
            Built::L1(s) => s,
            Built::Baseline(s) => s,
            Built::Lp(s) => s,
            Built::L2(s) => s,
        }
    }
}

fn build_arm(
    plan: &ExperimentPlan,
    params: &PlanParams,
    data: &Dataset,
    embedded: Option<&EmbeddedPoints>,
    noise: Option<RngSeed>,
) -> Result<Built> {
    let budget = PrivacyBudget::pure(params.epsilon)?;
    let rows = data.rows();
    Ok(match plan.arm {
        Arm::FasterL1 => Built::L1(HighDimTree::build(
            &rows,
            params.d,
            data.bound(),
            budget,
            noise,
        )?),
        Arm::Baseline => Built::Baseline(HighDimCountingTree::build(
            &rows,
            params.d,
            data.bound(),
            params.alpha,
            budget,
            noise,
        )?),
        Arm::Lp => Built::Lp(HighDimLpTree::build(
            &rows,
            params.d,
            data.bound(),
            params.p,
            None,
            budget,
            noise,
        )?),
        Arm::L2 => Built::L2(
            embedded
                .ok_or_else(|| Error::InvalidParameter("l2 arm needs an embedding".into()))?
                .build(budget, noise)?,
        ),
    })
}

struct TrialOutcome {
    answers: Vec<f64>,
    build_nanos: u64,
}

fn run_point(plan: &ExperimentPlan, index: usize, value: f64) -> Result<ReportRow> {
    let params = plan.params.with(plan.sweep, value)?;
    let mut row = ReportRow {
        arm: plan.arm,
        sweep_var: plan.sweep,
        sweep_value: value,
        params,
        trials: plan.trials,
        mean_abs_err: f64::NAN,
        stderr: f64::NAN,
        fit: SimilarityFit {
            m: f64::NAN,
            z: f64::NAN,
            degenerate: true,
        },
        median_query_ns: 0,
        init_ms: 0,
        op_count: 0,
        seed: plan.seed,
        config_hash: config_hash(plan, &params),
        status: "ok",
    };
    if planned_nodes(plan.arm, &params)? > plan.node_cap {
        row.status = "skipped-node-cap";
        return Ok(row);
    }

    let inputs = prepare_point(plan, &params)?;
    let root = RngSeed(plan.seed);
    let embedded = match plan.arm {
        Arm::L2 => {
            let spec = EmbeddingSpec::new(
                params.d,
                params.alpha,
                params.n,
                root.derive("embedding", 0),
            )?;
            Some(EmbeddedPoints::new(&inputs.data.rows(), spec)?)
        }
        _ => None,
    };

    let run_trial = |t: usize| -> Result<(TrialOutcome, Option<Built>)> {
        let noise = plan
            .noise
            .then(|| root.derive("noise", index as u64).derive("trial", t as u64));
        let start = Instant::now();
        let built = build_arm(plan, &params, &inputs.data, embedded.as_ref(), noise)?;
        let build_nanos = start.elapsed().as_nanos() as u64;
        let answers = inputs
            .queries
            .iter()
            .map(|q| built.as_query().answer(q))
            .collect::<Result<Vec<_>>>()?;
        let keep = (t == 0).then_some(built);
        Ok((
            TrialOutcome {
                answers,
                build_nanos,
            },
            keep,
        ))
    };

    // Timed runs are sequential so trials do not compete for cores.
    let results: Vec<(TrialOutcome, Option<Built>)> = if plan.timing {
        (0..plan.trials).map(run_trial).collect::<Result<_>>()?
    } else {
        (0..plan.trials)
            .into_par_iter()
            .map(run_trial)
            .collect::<Result<_>>()?
    };

    let mut pairs = Vec::with_capacity(plan.trials * inputs.queries.len());
    let mut trial_means = Vec::with_capacity(plan.trials);
    let mut build_nanos = Vec::with_capacity(plan.trials);
    for (outcome, _) in &results {
        let mut sum = 0.0;
        for (&a, &t) in outcome.answers.iter().zip(&inputs.truth) {
            pairs.push((a, t));
            sum += (a - t).abs();
        }
        trial_means.push(sum / inputs.queries.len() as f64);
        build_nanos.push(outcome.build_nanos);
    }
    let errors: Vec<f64> = pairs.iter().map(|(a, t)| (a - t).abs()).collect();
    row.mean_abs_err = errors.iter().sum::<f64>() / errors.len() as f64;
    // Trials are the independent units; a single trial falls back to the
    // spread across queries.
    let units = if trial_means.len() >= 2 {
        &trial_means
    } else {
        &errors
    };
    row.stderr = standard_error(units);
    row.fit = fit_similarity_error(&pairs);

    let first = results[0].1.as_ref().expect("trial 0 keeps its structure");
    if plan.timing {
        let timing = time_queries(first.as_query(), &inputs.queries)?;
        row.median_query_ns = timing.median_ns;
        row.op_count = timing.op_count;
        build_nanos.sort_unstable();
        row.init_ms = build_nanos[build_nanos.len() / 2] / 1_000_000;
    } else {
        for q in &inputs.queries {
            row.op_count = row.op_count.max(first.as_query().op_count(q)?);
        }
    }
    Ok(row)
}

fn standard_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_planted_model() {
        // |A - A'| = 0.1 * A' + 5 exactly, alternating the sign of the error.
        let pairs: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let t = 10.0 + i as f64;
                let e = 0.1 * t + 5.0;
                (if i % 2 == 0 { t + e } else { t - e }, t)
            })
            .collect();
        let fit = fit_similarity_error(&pairs);
        assert!(!fit.degenerate);
        assert!((fit.m - 1.1).abs() < 0.05 * 1.1);
        assert!((fit.z - 5.0).abs() < 0.05 * 5.0);
    }

    #[test]
    fn fit_of_exact_answers() {
        let pairs: Vec<(f64, f64)> = (1..50).map(|i| (i as f64, i as f64)).collect();
        let fit = fit_similarity_error(&pairs);
        assert_eq!((fit.m, fit.z), (1.0, 0.0));
    }

    #[test]
    fn degenerate_fit_reports_only_z() {
        let fit = fit_similarity_error(&[(3.0, 5.0), (8.0, 5.0)]);
        assert!(fit.degenerate);
        assert_eq!(fit.m, 1.0);
        assert_eq!(fit.z, 2.5);
    }

    #[test]
    fn unknown_plan_lists_names() {
        let err = named_plans("nope").unwrap_err();
        let msg = err.to_string();
        for name in PLAN_NAMES {
            assert!(msg.contains(name), "{msg}");
            assert!(named_plans(name).is_ok());
        }
    }

    #[test]
    fn plan_validation() {
        let mut p = named_plans("smoke").unwrap().remove(0);
        p.trials = 0;
        assert!(p.validate().is_err());
        let mut p = named_plans("smoke").unwrap().remove(0);
        p.grid.clear();
        assert!(p.validate().is_err());
        let mut p = named_plans("fig3-style").unwrap().remove(0);
        p.grid.push(10.5);
        assert!(p.validate().is_err());
    }

    #[test]
    fn noiseless_run_is_near_zero() {
        let mut plan = named_plans("smoke").unwrap().remove(0);
        plan.noise = false;
        plan.trials = 1;
        let rows = run_plan(&plan).unwrap();
        for r in &rows {
            // 256 points on 256 leaves: at most a handful share a leaf.
            assert!(r.mean_abs_err < 8.0 / 256.0, "{}", r.mean_abs_err);
            assert!(r.fit.m < 1.01);
        }
    }

    #[test]
    fn node_cap_skips_rows() {
        let mut plan = named_plans("smoke").unwrap().remove(0);
        plan.node_cap = 10;
        let rows = run_plan(&plan).unwrap();
        assert!(rows.iter().all(ReportRow::is_skipped));
        assert!(render_csv(&rows).contains("skipped-node-cap"));
    }

    #[test]
    fn plan_file_parses() {
        let text = r#"
[[plan]]
name = "mine"
arm = "faster-l1"
sweep = "epsilon"
grid = [0.5, 1.0]
trials = 4
queries = 3
dataset = { kind = "gaussian", mean = 0.5, sigma = 0.1 }
params = { n = 64, d = 2, R = 1.0, epsilon = 1.0 }
"#;
        let plans = parse_plan_file(text).unwrap();
        assert_eq!(plans.len(), 1);
        assert_eq!(plans[0].params.alpha, 0.5);
        assert!(plans[0].noise);
        let rows = run_plan(&plans[0]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(parse_plan_file("[[plan]]\narm = \"x\"").is_err());
    }

    #[test]
    fn csv_has_schema_header() {
        let rows = run_plans(&named_plans("smoke").unwrap()).unwrap();
        let csv = render_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(SCHEMA_COMMENT));
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
        for line in lines {
            assert_eq!(line.split(',').count(), CSV_COLUMNS.len());
        }
    }

    #[test]
    fn timing_fills_timing_columns() {
        let mut plan = named_plans("smoke").unwrap().remove(0);
        plan.timing = true;
        plan.trials = 3;
        let rows = run_plan(&plan).unwrap();
        assert!(rows.iter().all(|r| r.median_query_ns > 0));
        assert_eq!(rows[0].op_count, 8);
    }
}
