use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dp_kde::data::{
    gen_gaussian_clipped, gen_uniform, load_csv, resolve_data_path, CsvOptions, Dataset, Provenance,
};
use dp_kde::format::{Kernel, Structure};
use dp_kde::harness::{named_plans, parse_plan_file, render_csv, run_plans};
use dp_kde::noise::DEFAULT_SEED;
use dp_kde::{
    EmbeddingSpec, Error, HighDimLpTree, HighDimTree, L2KdeStructure, PrivacyBudget, Result,
    RngSeed,
};

/// Differentially private distance-sum queries.
#[derive(Debug, Parser)]
#[command(name = "dp-kde", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a noisy structure from a dataset and write it to a file.
    Build(BuildArgs),
    /// Answer one query from a saved structure.
    Query(QueryArgs),
    /// Run an experiment plan and write a CSV report.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelKind {
    L1,
    L2,
    Lpp,
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// CSV file, one point per row. Relative paths fall back to $DP_KDE_DATA_DIR.
    #[arg(long, conflicts_with = "gen", required_unless_present = "gen")]
    data: Option<PathBuf>,
    /// Synthetic data: `uniform:N:D` or `gaussian:N:D:MEAN:SIGMA`, with MEAN
    /// and SIGMA as fractions of the bound.
    #[arg(long)]
    gen: Option<String>,
    #[arg(long, value_enum, default_value = "l1")]
    kernel: KernelKind,
    /// Exponent for `--kernel lpp`.
    #[arg(long, default_value_t = 2)]
    p: u32,
    /// Embedding distortion for `--kernel l2`.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Release exact statistics. Not private; for testing only.
    #[arg(long)]
    no_noise: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Exclusive coordinate bound R. Inferred from CSV data when omitted;
    /// defaults to 1 for generated data.
    #[arg(long)]
    bound: Option<f64>,
    /// Skip the first CSV line.
    #[arg(long)]
    header: bool,
    /// Subtract each coordinate's minimum instead of rejecting negative values.
    /// Queries against the structure are shifted the same way.
    #[arg(long)]
    shift_to_domain: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long)]
    structure: PathBuf,
    /// Comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true)]
    point: String,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// A built-in plan name or a TOML plan file.
    #[arg(long, default_value = "fig2-style")]
    plan: String,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed of every plan.
    #[arg(long)]
    seed: Option<u64>,
    /// Fill the wall-clock columns. Timed reports are not reproducible.
    #[arg(long)]
    timing: bool,
    /// Monte-Carlo mode: every trial rebuilds the structure with fresh noise.
    /// This is how error statistics are estimated and is NOT how a private
    /// release is used. A deployed structure is built once with `build` and
    /// every query reads that single noise draw.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    fresh_noise: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(args) => build(args),
        Command::Query(args) => query(args),
        Command::Bench(args) => bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn parse_gen(spec: &str, bound: f64, seed: RngSeed) -> Result<Dataset> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || {
        Error::InvalidParameter(format!(
            "bad --gen spec `{spec}`; expected uniform:N:D or gaussian:N:D:MEAN:SIGMA"
        ))
    };
    let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
    let real = |s: &str| s.parse::<f64>().map_err(|_| bad());
    match parts.as_slice() {
        ["uniform", n, d] => gen_uniform(int(n)?, int(d)?, bound, seed),
        ["gaussian", n, d, mean, sigma] => gen_gaussian_clipped(
            int(n)?,
            int(d)?,
            real(mean)? * bound,
            real(sigma)? * bound,
            bound,
            seed,
        ),
        _ => Err(bad()),
    }
}

fn build(args: BuildArgs) -> Result<()> {
    let root = RngSeed(args.seed);
    let data = match (&args.data, &args.gen) {
        (Some(path), _) => load_csv(
            &resolve_data_path(path),
            &CsvOptions {
                bound: args.bound,
                header: args.header,
                shift_to_domain: args.shift_to_domain,
            },
        )?,
        (None, Some(spec)) => {
            parse_gen(spec, args.bound.unwrap_or(1.0), root.derive("dataset", 0))?
        }
        (None, None) => {
            return Err(Error::InvalidParameter(
                "one of --data or --gen is required".into(),
            ))
        }
    };
    let budget = PrivacyBudget::pure(args.epsilon)?;
    let noise = (!args.no_noise).then(|| root.derive("noise", 0));
    let rows = data.rows();
    let kernel = match args.kernel {
        KernelKind::L1 => Kernel::L1(HighDimTree::build(
            &rows,
            data.dim(),
            data.bound(),
            budget,
            noise,
        )?),
        KernelKind::Lpp => Kernel::Lpp(HighDimLpTree::build(
            &rows,
            data.dim(),
            data.bound(),
            args.p,
            None,
            budget,
            noise,
        )?),
        KernelKind::L2 => {
            let spec = EmbeddingSpec::new(
                data.dim(),
                args.alpha,
                data.len(),
                root.derive("embedding", 0),
            )?;
            Kernel::L2(L2KdeStructure::build(&rows, spec, budget, noise)?)
        }
    };
    let mut structure = Structure::new(kernel);
    if let Provenance::Csv { shift: Some(s), .. } = data.provenance() {
        structure.input_shift = Some(s.clone());
    }
    structure.save(&args.out)?;
    let config = structure.tree_config();
    println!(
        "built {} n={} d={} L={} nodes={} epsilon={} noisy={} source={}",
        structure.kind(),
        data.len(),
        data.dim(),
        config.layers(),
        structure.node_count(),
        structure.total_budget().epsilon(),
        structure.is_noisy(),
        data.provenance()
    );
    Ok(())
}

fn query(args: QueryArgs) -> Result<()> {
    let structure = Structure::load(&args.structure)?;
    let point = args
        .point
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad coordinate `{s}` in --point")))
        })
        .collect::<Result<Vec<_>>>()?;
    println!("{}", structure.query(&point)?);
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    if !args.fresh_noise {
        return Err(Error::InvalidParameter(
            "bench estimates error over repeated noise draws and requires --fresh-noise".into(),
        ));
    }
    let path = PathBuf::from(&args.plan);
    let mut plans = if path.is_file() {
        parse_plan_file(&std::fs::read_to_string(&path)?)?
    } else {
        named_plans(&args.plan)?
    };
    for p in &mut plans {
        if let Some(seed) = args.seed {
            p.seed = seed;
        }
        p.timing = args.timing;
    }
    let csv = render_csv(&run_plans(&plans)?);
    match &args.out {
        Some(out) => std::fs::write(out, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}
