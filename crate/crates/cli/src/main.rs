//! `esh`: run ESH and baseline sampler benchmarks from the command line.
//!
//! Exit status: 0 on success, 1 if any result row is flagged (or a run
//! fails), 2 on configuration errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use esh_core::energy::{Benchmark, BenchmarkName};
use esh_core::esh::eps_warning;
use esh_core::harness::{
    default_checkpoints, emit, gradcheck, random_gaussian, run_experiment, run_logz,
    sample_trajectory, trajectory_to_csv, ExperimentConfig, LogzConfig, OutputFormat, SamplerSpec,
    GRADCHECK_TOL,
};
use esh_core::Error;

#[derive(Parser)]
#[command(
    name = "esh",
    version,
    about = "Energy Sampling Hamiltonian dynamics: sampling and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark × sampler × seed sweep and write MMD/ESS/energy rows.
    Bench(Common),
    /// Dump a single ESH trajectory (step, t̄, t, r, x) as CSV.
    Sample(Common),
    /// Estimate log Z of a Gaussian target with Jarzynski-weighted ESH flows.
    Logz(LogzArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Benchmark name(s), comma separated (e.g. MOG2D_PRIOR,SCG2D_BIAS).
    #[arg(long)]
    benchmark: Option<String>,
    /// Sampler(s) as `name[:eps[:k]]`, comma separated
    /// (esh-leap, esh-orig, ula, mala, hmc).
    #[arg(long)]
    sampler: Option<String>,
    /// Step size, applied to every sampler.
    #[arg(long)]
    eps: Option<f64>,
    /// HMC leapfrog steps per transition.
    #[arg(long)]
    k: Option<usize>,
    /// Energy scale for ULA/MALA/HMC.
    #[arg(long = "energy-scale")]
    energy_scale: Option<f64>,
    /// Chains per cell.
    #[arg(long)]
    chains: Option<usize>,
    /// Gradient evaluations per chain (`sample`: number of steps).
    #[arg(long)]
    budget: Option<u64>,
    /// Master seed(s), comma separated.
    #[arg(long)]
    seed: Option<String>,
    /// Output file (`sample`: stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LogzArgs {
    /// A Gaussian benchmark; a random 2D Gaussian (drawn from the seed) when
    /// omitted.
    #[arg(long)]
    benchmark: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 1000)]
    chains: usize,
    /// Scaled-time horizon.
    #[arg(long, default_value_t = 5.0)]
    tbar: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Start the flow from the target itself instead of N(0, I).
    #[arg(long)]
    from_target: bool,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Benchmark(s) to check; all synthetic benchmarks when omitted.
    #[arg(long)]
    benchmark: Option<String>,
    #[arg(long, default_value_t = 100)]
    probes: usize,
    #[arg(long, default_value_t = 1e-4)]
    h: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::UnknownBenchmark(_) => Failure::Config(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

type CliResult = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Bench(a) => bench(a),
        Command::Sample(a) => sample(a),
        Command::Logz(a) => logz(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn config_err(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

fn parse_benchmarks(s: &str) -> Result<Vec<BenchmarkName>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|e: Error| config_err(e.to_string())))
        .collect()
}

/// Config file first, then command-line overrides.
fn resolve(a: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(b) = &a.benchmark {
        cfg.benchmarks = parse_benchmarks(b)?;
    }
    if let Some(s) = &a.sampler {
        cfg.samplers = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse::<SamplerSpec>)
            .collect::<Result<_, _>>()?;
    }
    for s in &mut cfg.samplers {
        if let Some(eps) = a.eps {
            s.eps = eps;
        }
        if let Some(k) = a.k {
            s.k_leapfrog = k;
        }
        if let Some(scale) = a.energy_scale {
            if !s.kind.is_esh() {
                s.energy_scale = scale;
            }
        }
    }
    if let Some(c) = a.chains {
        cfg.n_chains = c;
    }
    if let Some(b) = a.budget {
        cfg.grad_budget = b;
        if cfg.measure_at.last().is_some_and(|&l| l > b) || a.config.is_none() {
            cfg.measure_at = default_checkpoints(b);
        }
    }
    if let Some(s) = &a.seed {
        cfg.seeds = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u64>()
                    .map_err(|_| config_err(format!("bad seed `{t}`")))
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some(out) = &a.out {
        if out.extension().and_then(|e| e.to_str()) == Some("json") {
            cfg.format = OutputFormat::Json;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn warn_eps(samplers: &[SamplerSpec]) {
    for s in samplers.iter().filter(|s| s.kind.is_esh()) {
        if let Some(w) = eps_warning(s.eps) {
            eprintln!("warning: {w}");
        }
    }
}

fn write_out(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)
                    .map_err(|e| Failure::Run(format!("{}: {e}", dir.display())))?;
            }
            fs::write(p, text).map_err(|e| Failure::Run(format!("{}: {e}", p.display())))
        }
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Run(e.to_string())),
    }
}

fn bench(a: Common) -> CliResult {
    let cfg = resolve(&a)?;
    warn_eps(&cfg.samplers);
    let rows = run_experiment(&cfg)?;
    let path = a.out.clone().unwrap_or_else(|| cfg.output_path("bench"));
    emit(&rows, cfg.format, &path, &cfg)?;
    let flagged: Vec<_> = rows.iter().filter(|r| r.is_error()).collect();
    for r in &flagged {
        eprintln!(
            "flagged: {} {} seed {} checkpoint {}: {}",
            r.benchmark,
            r.sampler,
            r.seed,
            r.checkpoint,
            r.error.as_deref().unwrap_or("")
        );
    }
    eprintln!("wrote {} rows to {}", rows.len(), path.display());
    Ok(flagged.is_empty())
}

fn sample(a: Common) -> CliResult {
    let cfg = resolve(&Common {
        out: None,
        ..a.clone()
    })?;
    let [name] = cfg.benchmarks[..] else {
        return Err(config_err("sample takes exactly one benchmark"));
    };
    let [spec] = cfg.samplers[..] else {
        return Err(config_err("sample takes exactly one sampler"));
    };
    if !spec.kind.is_esh() {
        return Err(config_err(
            "sample needs an ESH sampler (esh-leap or esh-orig)",
        ));
    }
    warn_eps(&cfg.samplers);
    let steps = a.budget.unwrap_or(1000) as usize;
    let bench = Benchmark::with_params(name, &cfg.params)?;
    let points = sample_trajectory(&bench, spec, steps, cfg.seeds[0])?;
    write_out(a.out.as_deref(), &trajectory_to_csv(&points))?;
    Ok(true)
}

fn logz(a: LogzArgs) -> CliResult {
    let target = match &a.benchmark {
        Some(b) => {
            let name: BenchmarkName = b.parse().map_err(|e: Error| config_err(e.to_string()))?;
            let bench = Benchmark::new(name)?;
            if !matches!(bench.truth, esh_core::energy::TruthSampler::Gaussian(_)) {
                return Err(config_err(format!("{name} is not a Gaussian benchmark")));
            }
            bench
        }
        None => random_gaussian(2, a.seed)?,
    };
    if let Some(w) = eps_warning(a.eps) {
        eprintln!("warning: {w}");
    }
    if a.chains < 2 || !(a.eps > 0.0) || !(a.tbar >= 0.0) {
        return Err(config_err("need chains ≥ 2, eps > 0 and tbar ≥ 0"));
    }
    let mut cfg = LogzConfig::new(target);
    cfg.eps = a.eps;
    cfg.n_chains = a.chains;
    cfg.tbar = a.tbar;
    cfg.seed = a.seed;
    if a.from_target {
        cfg.base = esh_core::harness::LogzBase::Target;
    }
    let report = run_logz(&cfg)?;
    write_out(a.out.as_deref(), &report.to_csv())?;
    if let Some(last) = report.rows.last() {
        eprintln!(
            "log Z at t̄ = {}: {:.6} (analytic {:.6}, relative error {:.3e})",
            last.tbar, last.log_z, last.log_z_true, last.rel_error
        );
    }
    Ok(!report.is_flagged())
}

fn gradcheck_cmd(a: GradcheckArgs) -> CliResult {
    let names = match &a.benchmark {
        Some(b) => parse_benchmarks(b)?,
        None => BenchmarkName::SYNTHETIC.to_vec(),
    };
    if a.probes == 0 || !(a.h > 0.0) {
        return Err(config_err("need probes ≥ 1 and h > 0"));
    }
    let mut ok = true;
    for name in names {
        let bench = Benchmark::new(name)?;
        let err = gradcheck(&bench, a.probes, a.h, a.seed)?;
        let pass = err <= GRADCHECK_TOL;
        ok &= pass;
        println!("{name}\t{err:.3e}\t{}", if pass { "PASS" } else { "FAIL" });
    }
    Ok(ok)
}
