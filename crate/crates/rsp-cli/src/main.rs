//! Command-line frontend: spectral analysis, simulation, covariance
//! reports, confidence intervals, topology tests, the verification suite,
//! and the exact oracles, all as reproducible invocations.
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 check failure in
//! `verify`. Results go to stdout (or --out); the resolved configuration is
//! echoed on stderr so stdout stays machine-readable.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use rsp_core::asymptotics::{covariance_report, sigma_tilde_sq, AppendixOracleInput};
use rsp_core::dynamics::{
    enumerate_exact, simulate, ForcingVariant, ReinforcementSchedule, Stride,
};
use rsp_core::harness::{run_checks, ExperimentConfig};
use rsp_core::inference::{confidence_interval, standardizer, topology_test};
use rsp_core::network::{cycle, mean_field, special_vertex, WeightedNetwork};
use rsp_core::spectral::{classify_regime, decompose, REGIME_TOL_DEFAULT};

#[derive(Parser)]
#[command(
    name = "rsp",
    version,
    about = "Simulator and inference toolkit for interacting reinforced stochastic processes on weighted directed networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenstructure of a network: eigenvalues, left/right eigenvectors, v1.
    Spectrum(SpectrumArgs),
    /// Simulate one trajectory and emit CSV (or a JSON summary).
    Simulate(SimulateArgs),
    /// Asymptotic covariance report for a network and schedule.
    Covariance(CovarianceArgs),
    /// Confidence interval for the shared limit from one late observation.
    Ci(CiArgs),
    /// Chi-square topology test of a hypothesized network against a state.
    Test(TestArgs),
    /// Run the Monte Carlo verification checks from an experiment config.
    Verify(VerifyArgs),
    /// Exact oracles: path enumeration and the product-sum limits.
    Oracle(OracleArgs),
}

/// Network source shared by most subcommands: a JSON file or a generator.
#[derive(Args)]
struct NetArgs {
    /// Path to a network JSON file ({"n": N, "weights": [[row-major]]}).
    #[arg(long, conflicts_with = "gen")]
    network: Option<PathBuf>,
    /// Built-in generator: mean-field | cycle | special-vertex.
    #[arg(long, value_name = "NAME")]
    gen: Option<String>,
    /// Vertex count for --gen.
    #[arg(long)]
    n: Option<usize>,
    /// Coupling strength for --gen mean-field, in (0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Influence of the special vertex for --gen special-vertex, in (0, 1).
    #[arg(long)]
    p: Option<f64>,
}

impl NetArgs {
    fn resolve(&self) -> Result<(WeightedNetwork, String)> {
        if let Some(path) = &self.network {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading network file {}", path.display()))?;
            let net = WeightedNetwork::from_json(&text)?;
            let echo = format!("network={} n={}", path.display(), net.n_vertices());
            return Ok((net, echo));
        }
        let gen = self
            .gen
            .as_deref()
            .ok_or_else(|| anyhow!("either --network FILE or --gen NAME is required"))?;
        let n = self
            .n
            .ok_or_else(|| anyhow!("--n is required with --gen {gen}"))?;
        match gen {
            "mean-field" => {
                let alpha = self
                    .alpha
                    .ok_or_else(|| anyhow!("--alpha is required with --gen mean-field"))?;
                Ok((
                    mean_field(n, alpha)?,
                    format!("gen=mean-field n={n} alpha={alpha}"),
                ))
            }
            "cycle" => Ok((cycle(n)?, format!("gen=cycle n={n}"))),
            "special-vertex" => {
                let p = self
                    .p
                    .ok_or_else(|| anyhow!("--p is required with --gen special-vertex"))?;
                Ok((
                    special_vertex(n, p)?,
                    format!("gen=special-vertex n={n} p={p}"),
                ))
            }
            other => bail!("unknown generator '{other}' (expected mean-field | cycle | special-vertex)"),
        }
    }
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    net: NetArgs,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    net: NetArgs,
    /// Reinforcement decay exponent, in (1/2, 1].
    #[arg(long)]
    gamma: f64,
    /// Reinforcement scale c > 0.
    #[arg(long)]
    c: f64,
    /// Schedule offset override (default keeps every rate below 1).
    #[arg(long)]
    n0: Option<u64>,
    /// Number of update steps.
    #[arg(long)]
    horizon: u64,
    /// Initial state: one value broadcast to all vertices, or a comma list.
    #[arg(long, default_value = "0.5")]
    z0: String,
    /// Master seed (decimal 64-bit unsigned).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replication index (its own derived RNG stream).
    #[arg(long, default_value_t = 0)]
    replication: u64,
    /// Forcing mixture weight rho in [0, 1); requires --q.
    #[arg(long, requires = "q")]
    rho: Option<f64>,
    /// Forcing target q in [0, 1]; requires --rho.
    #[arg(long, requires = "rho")]
    q: Option<f64>,
    /// Recording stride: geometric | every=K | comma-separated steps.
    #[arg(long, default_value = "geometric")]
    stride: String,
    /// Output format: csv (trajectory) or json (summary).
    #[arg(long, default_value = "csv")]
    format: String,
    /// Write the output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CovarianceArgs {
    #[command(flatten)]
    net: NetArgs,
    /// Reinforcement decay exponent, in (1/2, 1].
    #[arg(long)]
    gamma: f64,
    /// Reinforcement scale c > 0.
    #[arg(long)]
    c: f64,
    /// Tolerance for critical-line membership.
    #[arg(long, default_value_t = REGIME_TOL_DEFAULT)]
    tol: f64,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CiArgs {
    #[command(flatten)]
    net: NetArgs,
    /// Observed synchronized component at the observation step.
    #[arg(long, conflicts_with = "state", required_unless_present = "state")]
    z_tilde: Option<f64>,
    /// Observed full state as a comma-separated vector (projected for you).
    #[arg(long)]
    state: Option<String>,
    /// Step (update count) the observation was taken at.
    #[arg(long)]
    step: u64,
    /// Reinforcement decay exponent, in (1/2, 1].
    #[arg(long)]
    gamma: f64,
    /// Reinforcement scale c > 0.
    #[arg(long)]
    c: f64,
    /// Two-sided confidence level in (0, 1).
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    /// Hypothesized network (the null).
    #[command(flatten)]
    net: NetArgs,
    /// Observed state as a comma-separated vector.
    #[arg(long)]
    state: String,
    /// Step the state was observed at.
    #[arg(long)]
    step: u64,
    /// Reinforcement decay exponent, in (1/2, 1].
    #[arg(long)]
    gamma: f64,
    /// Reinforcement scale c > 0.
    #[arg(long)]
    c: f64,
    /// Test level theta in (0, 1).
    #[arg(long, default_value_t = 0.05)]
    theta: f64,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Experiment config JSON (network, schedule, checks, thresholds).
    #[arg(long)]
    config: PathBuf,
    /// Directory for per-check CSV tables and the report JSON.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(subcommand)]
    command: OracleCommand,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Exact law of Z_n by exhausting all Bernoulli paths (N*steps <= 24).
    Enumerate(EnumerateArgs),
    /// Truncated product-sum whose limits the covariance kernels encode.
    Limit(LimitArgs),
}

#[derive(Args)]
struct EnumerateArgs {
    #[command(flatten)]
    net: NetArgs,
    /// Reinforcement decay exponent, in (1/2, 1].
    #[arg(long)]
    gamma: f64,
    /// Reinforcement scale c > 0.
    #[arg(long)]
    c: f64,
    #[arg(long)]
    n0: Option<u64>,
    /// Number of update steps to enumerate.
    #[arg(long)]
    steps: u32,
    /// Initial state: one value broadcast to all vertices, or a comma list.
    #[arg(long, default_value = "0.5")]
    z0: String,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LimitArgs {
    /// Real part of the first exponent (must be positive).
    #[arg(long, allow_negative_numbers = true)]
    a1_re: f64,
    /// Imaginary part of the first exponent.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    a1_im: f64,
    /// Real part of the second exponent (must be positive).
    #[arg(long, allow_negative_numbers = true)]
    a2_re: f64,
    /// Imaginary part of the second exponent.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    a2_im: f64,
    /// Reinforcement decay exponent, in (1/2, 1].
    #[arg(long)]
    gamma: f64,
    /// Reinforcement scale c > 0.
    #[arg(long)]
    c: f64,
    /// Product start index (default: minimal admissible).
    #[arg(long)]
    m0: Option<u64>,
    /// Truncation index.
    #[arg(long)]
    n: u64,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successes, anything else is usage error
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Spectrum(args) => cmd_spectrum(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Covariance(args) => cmd_covariance(args),
        Command::Ci(args) => cmd_ci(args),
        Command::Test(args) => cmd_test(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Oracle(args) => match args.command {
            OracleCommand::Enumerate(a) => cmd_oracle_enumerate(a),
            OracleCommand::Limit(a) => cmd_oracle_limit(a),
        },
    }
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)
            .with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{content}");
            if !content.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn parse_state(s: &str, n: usize, flag: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let values: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| anyhow!("{flag}: '{p}' is not a number"))
        })
        .collect::<Result<_>>()?;
    if values.len() == 1 {
        return Ok(vec![values[0]; n]);
    }
    if values.len() != n {
        bail!("{flag} has {} entries for {} vertices", values.len(), n);
    }
    Ok(values)
}

fn parse_stride(s: &str) -> Result<Stride> {
    if s == "geometric" {
        return Ok(Stride::Geometric);
    }
    if let Some(k) = s.strip_prefix("every=") {
        let k: u64 = k.parse().map_err(|_| anyhow!("--stride every=K needs an integer K"))?;
        return Ok(Stride::Every(k));
    }
    let steps: Vec<u64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .map_err(|_| anyhow!("--stride: '{p}' is not a step index"))
        })
        .collect::<Result<_>>()?;
    Ok(Stride::Explicit(steps))
}

fn cmd_spectrum(args: SpectrumArgs) -> Result<u8> {
    let (net, echo) = args.net.resolve()?;
    eprintln!("spectrum: {echo}");
    let spec = decompose(&net)?;
    emit(&args.out, &spec.to_json())?;
    Ok(0)
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8> {
    let (net, echo) = args.net.resolve()?;
    let sched = match args.n0 {
        Some(n0) => ReinforcementSchedule::with_offset(args.gamma, args.c, n0)?,
        None => ReinforcementSchedule::new(args.gamma, args.c)?,
    };
    let z0 = parse_state(&args.z0, net.n_vertices(), "--z0")?;
    let stride = parse_stride(&args.stride)?;
    let variant = match (args.rho, args.q) {
        (Some(rho), Some(q)) => Some(ForcingVariant::new(rho, q)?),
        _ => None,
    };
    eprintln!(
        "simulate: {echo} gamma={} c={} n0={} horizon={} seed={} replication={} stride={} forcing={}",
        args.gamma,
        args.c,
        sched.n0(),
        args.horizon,
        args.seed,
        args.replication,
        args.stride,
        variant.map_or("none".to_string(), |f| format!("rho={} q={}", f.rho, f.q)),
    );
    let trajectory = simulate(
        &net,
        &sched,
        &z0,
        args.horizon,
        &stride,
        variant,
        args.seed,
        args.replication,
    )?;
    match args.format.as_str() {
        "csv" => emit(&args.out, &trajectory.to_csv())?,
        "json" => {
            let spec = if net.is_irreducible() {
                Some(decompose(&net)?)
            } else {
                None
            };
            emit(&args.out, &trajectory.summary_json(spec.as_ref()))?;
        }
        other => bail!("unknown format '{other}' (expected csv | json)"),
    }
    Ok(0)
}

fn cmd_covariance(args: CovarianceArgs) -> Result<u8> {
    let (net, echo) = args.net.resolve()?;
    eprintln!(
        "covariance: {echo} gamma={} c={} tol={}",
        args.gamma, args.c, args.tol
    );
    let spec = decompose(&net)?;
    let regime = classify_regime(&spec, args.gamma, args.c, args.tol)?;
    let report = covariance_report(&spec, &regime)?;
    emit(&args.out, &report.to_json())?;
    Ok(0)
}

fn cmd_ci(args: CiArgs) -> Result<u8> {
    let (net, echo) = args.net.resolve()?;
    let spec = decompose(&net)?;
    let st_sq = sigma_tilde_sq(&spec, args.gamma, args.c)?;
    let z_tilde = match (&args.state, args.z_tilde) {
        (Some(state), _) => {
            let z = parse_state(state, spec.n_vertices(), "--state")?;
            rsp_core::dynamics::project(&spec, &z)?.0
        }
        (None, Some(z)) => z,
        (None, None) => bail!("either --z-tilde or --state is required"),
    };
    eprintln!(
        "ci: {echo} z_tilde={z_tilde} step={} gamma={} c={} level={} sigma_tilde_sq={st_sq}",
        args.step, args.gamma, args.c, args.level
    );
    let ci = confidence_interval(z_tilde, args.step, args.gamma, st_sq, args.level)?;
    emit(&args.out, &serde_json::to_string_pretty(&ci)?)?;
    Ok(0)
}

fn cmd_test(args: TestArgs) -> Result<u8> {
    let (net, echo) = args.net.resolve()?;
    let spec = decompose(&net)?;
    let state = parse_state(&args.state, spec.n_vertices(), "--state")?;
    let regime = classify_regime(&spec, args.gamma, args.c, REGIME_TOL_DEFAULT)?;
    eprintln!(
        "test: {echo} step={} gamma={} c={} theta={} case={:?}",
        args.step, args.gamma, args.c, args.theta, regime.case
    );
    let report = covariance_report(&spec, &regime)?;
    let std = standardizer(&report.sigma_hat)?;
    let result = topology_test(&spec, &regime, &std, &state, args.step, args.theta)?;
    emit(&args.out, &serde_json::to_string_pretty(&result)?)?;
    Ok(0)
}

fn cmd_verify(args: VerifyArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let config = ExperimentConfig::from_json(&text)?;
    eprintln!("verify: resolved config follows");
    eprintln!("{}", config.to_json());
    let reports = run_checks(&config)?;
    for report in &reports {
        let status = if report.passed { "PASS" } else { "FAIL" };
        let observed: Vec<String> = report
            .observed
            .iter()
            .map(|(k, v)| format!("{k}={v:.6}"))
            .collect();
        eprintln!("[{status}] {}: {}", report.name, observed.join(" "));
    }
    let json = rsp_core::harness::reports_to_json(&reports);
    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("reports.json"), format!("{json}\n"))?;
        for report in &reports {
            write_check_csvs(dir, report)?;
        }
    }
    println!("{json}");
    Ok(if reports.iter().all(|r| r.passed) { 0 } else { 2 })
}

fn write_check_csvs(dir: &Path, report: &rsp_core::harness::CheckReport) -> Result<()> {
    std::fs::write(
        dir.join(format!("{}.metrics.csv", report.name)),
        report.observed_csv(),
    )?;
    if !report.table.is_empty() {
        std::fs::write(
            dir.join(format!("{}.table.csv", report.name)),
            report.table_csv(),
        )?;
    }
    Ok(())
}

fn cmd_oracle_enumerate(args: EnumerateArgs) -> Result<u8> {
    let (net, echo) = args.net.resolve()?;
    let sched = match args.n0 {
        Some(n0) => ReinforcementSchedule::with_offset(args.gamma, args.c, n0)?,
        None => ReinforcementSchedule::new(args.gamma, args.c)?,
    };
    let z0 = parse_state(&args.z0, net.n_vertices(), "--z0")?;
    eprintln!(
        "oracle enumerate: {echo} gamma={} c={} n0={} steps={}",
        args.gamma,
        args.c,
        sched.n0(),
        args.steps
    );
    let dist = enumerate_exact(&net, &sched, &z0, args.steps)?;
    emit(&args.out, &dist.to_json())?;
    Ok(0)
}

fn cmd_oracle_limit(args: LimitArgs) -> Result<u8> {
    use num_complex::Complex64;
    let alpha1 = Complex64::new(args.a1_re, args.a1_im);
    let alpha2 = Complex64::new(args.a2_re, args.a2_im);
    let m0 = match args.m0 {
        Some(m0) => m0,
        None => AppendixOracleInput::minimal_m0(args.gamma, args.c, alpha1, alpha2)?,
    };
    eprintln!(
        "oracle limit: a1={}+{}i a2={}+{}i gamma={} c={} m0={m0} n={}",
        args.a1_re, args.a1_im, args.a2_re, args.a2_im, args.gamma, args.c, args.n
    );
    let input = AppendixOracleInput {
        alpha1,
        alpha2,
        gamma: args.gamma,
        c: args.c,
        m0,
        n: args.n,
    };
    let value = rsp_core::asymptotics::appendix_limit_partial(&input)?;
    let log_normalized =
        args.gamma == 1.0 && (args.c * (args.a1_re + args.a2_re) - 1.0).abs() <= 1e-12;
    let out = serde_json::json!({
        "value_re": value.re,
        "value_im": value.im,
        "m0": m0,
        "n": args.n,
        "log_normalized": log_normalized,
    });
    emit(&args.out, &serde_json::to_string_pretty(&out)?)?;
    Ok(0)
}
