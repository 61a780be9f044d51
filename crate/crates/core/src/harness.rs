//! Experiment engine behind the `esh` CLI.
//!
//! A sweep is the product (benchmark × sampler × seed). Every cell runs
//! `n_chains` independent chains up to a gradient-evaluation budget and, at
//! each checkpoint, takes one sample per chain (the reservoir sample for
//! ESH, the current state for MCMC baselines). The sample set is scored by
//! unbiased MMD² against fresh ground-truth draws. ESS/N over the full
//! chains is reported on the final checkpoint row.
//!
//! Results are sorted by `(benchmark, sampler, seed, checkpoint)` and
//! written as CSV or JSON. Nothing in a row depends on thread scheduling,
//! so two runs of the same config produce identical bytes (wall-clock
//! timing is off by default for that reason).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, BaselineKind, ChainState};
use crate::energy::{
    check_gradient, gaussian_energy, Benchmark, BenchmarkName, BenchmarkParams, EnergyModel,
};
use crate::esh::{random_unit_vector, time_rescale, PhaseState, ScaledState};
use crate::exec::Execution;
use crate::metrics::{ess_scalar, mmd2_unbiased, MmdConfig, MIN_ESS_LEN};
use crate::sampling::{
    estimate_log_partition, uniform_time_grid_path, weight_diagnostics, Reservoir,
};
use crate::seed::{derive_rng, label_tag, ChainRng};
use crate::{Error, Result};

/// Exact CSV header of sweep output.
pub const CSV_HEADER: &str =
    "benchmark,sampler,seed,checkpoint,mmd2,ess,mean_energy,wall_clock,error";

/// Exact CSV header of `logz` output.
pub const LOGZ_CSV_HEADER: &str =
    "step,tbar,log_z,log_z_true,rel_error,hamiltonian,max_rel_drift,mean_energy,weight_ess,error";

/// 17 significant digits: enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------------------
// samplers

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplerKind {
    /// ESH, time-scaled leapfrog.
    EshLeap,
    /// ESH, leapfrog in the original coordinates.
    EshOrig,
    Ula,
    Mala,
    Hmc,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 5] = [
        SamplerKind::EshLeap,
        SamplerKind::EshOrig,
        SamplerKind::Ula,
        SamplerKind::Mala,
        SamplerKind::Hmc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::EshLeap => "esh-leap",
            SamplerKind::EshOrig => "esh-orig",
            SamplerKind::Ula => "ula",
            SamplerKind::Mala => "mala",
            SamplerKind::Hmc => "hmc",
        }
    }

    pub fn is_esh(self) -> bool {
        matches!(self, SamplerKind::EshLeap | SamplerKind::EshOrig)
    }

    pub fn default_eps(self) -> f64 {
        match self {
            SamplerKind::Hmc => 0.01,
            _ => 0.1,
        }
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown sampler `{s}` (expected esh-leap, esh-orig, ula, mala or hmc)"
                ))
            })
    }
}

/// A sampler with its hyper-parameters. Written as `name[:eps[:k]]`, with an
/// optional trailing `:scale=<s>` for a non-unit energy scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    pub eps: f64,
    /// Leapfrog steps per HMC transition; ignored by the other samplers.
    pub k_leapfrog: usize,
    pub energy_scale: f64,
}

impl SamplerSpec {
    pub fn new(kind: SamplerKind, eps: f64) -> Self {
        Self {
            kind,
            eps,
            k_leapfrog: 5,
            energy_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!(
                "{}: eps must be positive, got {}",
                self.kind.name(),
                self.eps
            )));
        }
        if self.k_leapfrog == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.energy_scale > 0.0 && self.energy_scale.is_finite()) {
            return Err(Error::Config(format!(
                "energy scale must be positive, got {}",
                self.energy_scale
            )));
        }
        if self.kind.is_esh() && self.energy_scale != 1.0 {
            return Err(Error::Config(
                "energy scale applies to ula, mala and hmc only".into(),
            ));
        }
        Ok(())
    }

    pub fn baseline(&self) -> Option<BaselineConfig> {
        let kind = match self.kind {
            SamplerKind::Ula => BaselineKind::Ula,
            SamplerKind::Mala => BaselineKind::Mala,
            SamplerKind::Hmc => BaselineKind::Hmc,
            _ => return None,
        };
        Some(BaselineConfig {
            kind,
            eps: self.eps,
            k_leapfrog: self.k_leapfrog,
            energy_scale: self.energy_scale,
        })
    }
}

impl fmt::Display for SamplerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.name(), self.eps)?;
        if self.kind == SamplerKind::Hmc {
            write!(f, ":{}", self.k_leapfrog)?;
        }
        if self.energy_scale != 1.0 {
            write!(f, ":scale={}", self.energy_scale)?;
        }
        Ok(())
    }
}

impl FromStr for SamplerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let kind: SamplerKind = parts.next().unwrap_or_default().parse()?;
        let mut spec = SamplerSpec::new(kind, kind.default_eps());
        let bad =
            |what: &str, v: &str| Error::Config(format!("sampler `{s}`: invalid {what} `{v}`"));
        let mut positional = 0;
        for part in parts {
            if let Some(v) = part.strip_prefix("scale=") {
                spec.energy_scale = v.parse().map_err(|_| bad("energy scale", v))?;
                continue;
            }
            match positional {
                0 => spec.eps = part.parse().map_err(|_| bad("eps", part))?,
                1 => spec.k_leapfrog = part.parse().map_err(|_| bad("k", part))?,
                _ => return Err(bad("field", part)),
            }
            positional += 1;
        }
        spec.validate()?;
        Ok(spec)
    }
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown output format `{other}`"))),
        }
    }
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// A benchmark × sampler × seed sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub benchmarks: Vec<BenchmarkName>,
    pub samplers: Vec<SamplerSpec>,
    pub n_chains: usize,
    pub grad_budget: u64,
    /// Gradient-evaluation checkpoints, strictly ascending, `≤ grad_budget`.
    pub measure_at: Vec<u64>,
    pub seeds: Vec<u64>,
    pub truth_n: usize,
    pub output_dir: PathBuf,
    pub format: OutputFormat,
    pub params: BenchmarkParams,
    pub execution: Execution,
    /// Off by default: timings make output non-reproducible.
    pub record_wall_clock: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            benchmarks: vec![BenchmarkName::Mog2dPrior],
            samplers: vec![SamplerSpec::new(SamplerKind::EshLeap, 0.1)],
            n_chains: 500,
            grad_budget: 500,
            measure_at: default_checkpoints(500),
            seeds: vec![0],
            truth_n: 500,
            output_dir: PathBuf::from("results"),
            format: OutputFormat::Csv,
            params: BenchmarkParams::default(),
            execution: Execution::default(),
            record_wall_clock: false,
        }
    }
}

/// `0, 50, 100, 200, 500` clipped to the budget, plus the budget itself.
pub fn default_checkpoints(budget: u64) -> Vec<u64> {
    let mut v: Vec<u64> = [0, 50, 100, 200, 500]
        .into_iter()
        .filter(|&c| c < budget)
        .collect();
    v.push(budget);
    v
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    split_list(v)
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{s}`")))
        })
        .collect()
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse::<T>()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{}`", v.trim())))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(Error::Config(format!(
            "`{key}`: expected a boolean, got `{other}`"
        ))),
    }
}

/// Splits `key = value` lines. `#` starts a comment; blank lines are skipped;
/// repeated keys are an error.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        let k = k.trim().to_ascii_lowercase();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{k}`",
                n + 1
            )));
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Builds a config from flat `key = value` text. Keys mirror the struct
    /// fields; lists are comma separated; `energy.<name>.<param>` overrides
    /// benchmark constants.
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_entries(&parse_key_values(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn from_entries(entries: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut checkpoints_given = false;
        for (key, v) in entries {
            match key.as_str() {
                "benchmark" | "benchmarks" => {
                    cfg.benchmarks = split_list(v)
                        .map(|s| s.parse().map_err(|e: Error| Error::Config(e.to_string())))
                        .collect::<Result<_>>()?
                }
                "sampler" | "samplers" => {
                    cfg.samplers = split_list(v).map(str::parse).collect::<Result<_>>()?
                }
                "n_chains" | "chains" => cfg.n_chains = parse_one(key, v)?,
                "grad_budget" | "budget" => cfg.grad_budget = parse_one(key, v)?,
                "measure_at" | "checkpoints" => {
                    cfg.measure_at = parse_list(key, v)?;
                    checkpoints_given = true;
                }
                "seed" | "seeds" => cfg.seeds = parse_list(key, v)?,
                "truth_n" => cfg.truth_n = parse_one(key, v)?,
                "output_dir" => cfg.output_dir = PathBuf::from(v.trim()),
                "format" => cfg.format = v.parse()?,
                "execution" => {
                    cfg.execution = match v.trim().to_ascii_lowercase().as_str() {
                        "parallel" => Execution::Parallel,
                        "sequential" => Execution::Sequential,
                        other => {
                            return Err(Error::Config(format!(
                                "unknown execution policy `{other}`"
                            )))
                        }
                    }
                }
                "record_wall_clock" => cfg.record_wall_clock = parse_bool(key, v)?,
                k if k.starts_with("energy.") => {}
                other => return Err(Error::Config(format!("unknown key `{other}`"))),
            }
        }
        cfg.params.apply_overrides(entries)?;
        if !checkpoints_given {
            cfg.measure_at = default_checkpoints(cfg.grad_budget);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.benchmarks.is_empty() || self.samplers.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config(
                "benchmark, sampler and seed lists must be non-empty".into(),
            ));
        }
        if self.n_chains < 2 {
            return Err(Error::Config("n_chains must be at least 2".into()));
        }
        if self.truth_n < 2 {
            return Err(Error::Config("truth_n must be at least 2".into()));
        }
        if self.measure_at.is_empty() {
            return Err(Error::Config("measure_at must be non-empty".into()));
        }
        if self.measure_at.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "measure_at must be strictly ascending".into(),
            ));
        }
        if let Some(&last) = self.measure_at.last() {
            if last > self.grad_budget {
                return Err(Error::Config(format!(
                    "checkpoint {last} exceeds grad_budget {}",
                    self.grad_budget
                )));
            }
        }
        for s in &self.samplers {
            s.validate()?;
        }
        for &b in &self.benchmarks {
            Benchmark::with_params(b, &self.params).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// The fully resolved configuration as flat key/value pairs, in the same
    /// format [`from_text`](Self::from_text) reads.
    pub fn resolved_entries(&self) -> BTreeMap<String, String> {
        let join = |it: Vec<String>| it.join(",");
        let p = &self.params;
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put(
            "benchmarks",
            join(self.benchmarks.iter().map(ToString::to_string).collect()),
        );
        put(
            "samplers",
            join(self.samplers.iter().map(ToString::to_string).collect()),
        );
        put("n_chains", self.n_chains.to_string());
        put("grad_budget", self.grad_budget.to_string());
        put(
            "measure_at",
            join(self.measure_at.iter().map(ToString::to_string).collect()),
        );
        put(
            "seeds",
            join(self.seeds.iter().map(ToString::to_string).collect()),
        );
        put("truth_n", self.truth_n.to_string());
        put("output_dir", self.output_dir.display().to_string());
        put("format", self.format.extension().to_string());
        put(
            "execution",
            match self.execution {
                Execution::Parallel => "parallel",
                Execution::Sequential => "sequential",
            }
            .to_string(),
        );
        put("record_wall_clock", self.record_wall_clock.to_string());
        put("energy.mog2d.modes", p.mog_modes.to_string());
        put("energy.mog2d.radius", p.mog_radius.to_string());
        put("energy.mog2d.sigma", p.mog_sigma.to_string());
        put("energy.mog2d.prior_mode", p.mog_prior_mode.to_string());
        put("energy.icg50.dim", p.icg_dim.to_string());
        put("energy.icg50.min_std", p.icg_min_std.to_string());
        put("energy.icg50.max_std", p.icg_max_std.to_string());
        put("energy.scg2d.rho", p.scg_rho.to_string());
        put("energy.scg2d.bias_stds", p.scg_bias_stds.to_string());
        put("energy.funnel20.dim", p.funnel_dim.to_string());
        put("energy.funnel20.sigma", p.funnel_sigma.to_string());
        m
    }

    pub fn to_text(&self) -> String {
        self.resolved_entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Default output file inside `output_dir`.
    pub fn output_path(&self, stem: &str) -> PathBuf {
        self.output_dir
            .join(format!("{stem}.{}", self.format.extension()))
    }
}

// ---------------------------------------------------------------------------
// records and emission

/// One measurement of one (benchmark, sampler, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub benchmark: String,
    pub sampler: String,
    pub seed: u64,
    /// Gradient evaluations per chain spent when the sample was taken.
    pub checkpoint: u64,
    pub mmd2: Option<f64>,
    /// ESS/N over the full chains; only on the last checkpoint row.
    pub ess: Option<f64>,
    pub mean_energy: Option<f64>,
    pub wall_clock: f64,
    /// Set when the cell failed; the metric columns are then empty.
    pub error: Option<String>,
}

impl RunRecord {
    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }

    fn sort_key(&self) -> (&str, &str, u64, u64) {
        (&self.benchmark, &self.sampler, self.seed, self.checkpoint)
    }
}

fn opt_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

pub fn records_to_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
    w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.benchmark.clone(),
            r.sampler.clone(),
            r.seed.to_string(),
            r.checkpoint.to_string(),
            opt_float(r.mmd2),
            opt_float(r.ess),
            opt_float(r.mean_energy),
            format_float(r.wall_clock),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
}

/// Parses sweep CSV written by [`records_to_csv`]. The header must match
/// exactly.
pub fn parse_records_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let bad = |msg: String| Error::InvalidArgument(format!("csv: {msg}"));
    let header = rd
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != CSV_HEADER {
        return Err(bad(format!("unexpected header `{header}`")));
    }
    let float = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| bad(format!("bad number `{s}`")))
        }
    };
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let f = |i: usize| row.get(i).unwrap_or("");
        out.push(RunRecord {
            benchmark: f(0).to_string(),
            sampler: f(1).to_string(),
            seed: f(2)
                .parse()
                .map_err(|_| bad(format!("bad seed `{}`", f(2))))?,
            checkpoint: f(3)
                .parse()
                .map_err(|_| bad(format!("bad checkpoint `{}`", f(3))))?,
            mmd2: float(f(4))?,
            ess: float(f(5))?,
            mean_energy: float(f(6))?,
            wall_clock: float(f(7))?.unwrap_or(0.0),
            error: Some(f(8).to_string()).filter(|s| !s.is_empty()),
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct JsonOut<'a> {
    config: BTreeMap<String, String>,
    rows: &'a [RunRecord],
}

pub fn records_to_json(records: &[RunRecord], config: &ExperimentConfig) -> Result<String> {
    let out = JsonOut {
        config: config.resolved_entries(),
        rows: records,
    };
    serde_json::to_string_pretty(&out)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::InvalidArgument(format!("json: {e}")))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(path, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Writes records to `path`. An empty record list is an error and no file is
/// created.
pub fn emit(
    records: &[RunRecord],
    format: OutputFormat,
    path: &Path,
    config: &ExperimentConfig,
) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to emit".into()));
    }
    let text = match format {
        OutputFormat::Csv => records_to_csv(records)?,
        OutputFormat::Json => records_to_json(records, config)?,
    };
    write_file(path, &text)
}

// ---------------------------------------------------------------------------
// chains

/// A sampler chain with lazy start: nothing (not even the initial gradient)
/// is evaluated until the first `advance`.
enum Chain {
    Unstarted(Vec<f64>),
    Leap { s: ScaledState, res: Reservoir },
    Orig { s: PhaseState, res: Reservoir },
    Baseline { s: ChainState, cfg: BaselineConfig },
}

struct ChainCtx<'a> {
    spec: SamplerSpec,
    model: &'a EnergyModel,
    rng: ChainRng,
    reservoir_rng: Option<ChainRng>,
}

impl Chain {
    /// Gradient evaluations the next `advance` will spend.
    fn next_cost(&self) -> u64 {
        match self {
            Chain::Unstarted(_) | Chain::Leap { .. } | Chain::Orig { .. } => 1,
            Chain::Baseline { cfg, .. } => cfg.grads_per_transition(),
        }
    }

    fn advance(&mut self, ctx: &mut ChainCtx<'_>) -> Result<()> {
        match self {
            Chain::Unstarted(x0) => {
                let x0 = std::mem::take(x0);
                let spec = ctx.spec;
                *self = match spec.kind {
                    SamplerKind::EshLeap | SamplerKind::EshOrig => {
                        let u = random_unit_vector(x0.len(), &mut ctx.rng);
                        let mut res = Reservoir::from_rng(
                            ctx.reservoir_rng.take().expect("reservoir stream"),
                        );
                        if spec.kind == SamplerKind::EshLeap {
                            let s = ScaledState::new(x0, u, ctx.model)?;
                            res.update(&s.x, s.r);
                            Chain::Leap { s, res }
                        } else {
                            let s = PhaseState::new(x0, u, ctx.model)?;
                            res.update(&s.x, 0.0);
                            Chain::Orig { s, res }
                        }
                    }
                    _ => Chain::Baseline {
                        s: ChainState::new(x0, ctx.model)?,
                        cfg: spec.baseline().expect("baseline sampler"),
                    },
                };
            }
            Chain::Leap { s, res } => {
                s.step(ctx.model, ctx.spec.eps)?;
                res.update(&s.x, s.r);
            }
            Chain::Orig { s, res } => {
                s.step(ctx.model, ctx.spec.eps)?;
                // original-coordinate steps are already uniform in time
                res.update(&s.x, 0.0);
            }
            Chain::Baseline { s, cfg } => {
                cfg.transition(s, ctx.model, &mut ctx.rng)?;
            }
        }
        Ok(())
    }

    fn position(&self) -> &[f64] {
        match self {
            Chain::Unstarted(x) => x,
            Chain::Leap { s, .. } => &s.x,
            Chain::Orig { s, .. } => &s.x,
            Chain::Baseline { s, .. } => &s.x,
        }
    }

    fn log_speed(&self) -> f64 {
        match self {
            Chain::Leap { s, .. } => s.r,
            _ => 0.0,
        }
    }

    fn snapshot(&self) -> Vec<f64> {
        match self {
            Chain::Leap { res, .. } | Chain::Orig { res, .. } => {
                res.current().expect("reservoir is fed on start").to_vec()
            }
            _ => self.position().to_vec(),
        }
    }
}

struct ChainRun {
    snapshots: Vec<Vec<f64>>,
    counters: Vec<u64>,
    elapsed: Vec<f64>,
    /// Positions after every advance (the start point included).
    path: Vec<Vec<f64>>,
    /// Log-speeds alongside `path` (ESH leapfrog only).
    log_speed: Vec<f64>,
}

fn run_chain(
    bench: &Benchmark,
    spec: SamplerSpec,
    checkpoints: &[u64],
    seed: u64,
    chain: usize,
    keep_path: bool,
) -> Result<ChainRun> {
    let btag = label_tag(&bench.name.to_string());
    let stag = label_tag(&spec.to_string());
    let c = chain as u64;
    // the start point depends only on (benchmark, seed, chain) so every
    // sampler sees the same initial cloud
    let x0 = bench.init_point(&mut derive_rng(seed, &[label_tag("init"), btag, c]));
    let model = bench.model();
    let mut ctx = ChainCtx {
        spec,
        model: &model,
        rng: derive_rng(seed, &[btag, stag, c]),
        reservoir_rng: Some(derive_rng(seed, &[btag, stag, c, label_tag("reservoir")])),
    };
    let mut state = Chain::Unstarted(x0);
    let start = Instant::now();
    let mut run = ChainRun {
        snapshots: Vec::with_capacity(checkpoints.len()),
        counters: Vec::with_capacity(checkpoints.len()),
        elapsed: Vec::with_capacity(checkpoints.len()),
        path: Vec::new(),
        log_speed: Vec::new(),
    };
    let mut step = 0usize;
    for &cp in checkpoints {
        while model.grad_evals() + state.next_cost() <= cp {
            state.advance(&mut ctx).map_err(|e| e.at_step(step))?;
            step += 1;
            if keep_path {
                run.path.push(state.position().to_vec());
                run.log_speed.push(state.log_speed());
            }
        }
        run.snapshots.push(match &state {
            Chain::Unstarted(x) => x.clone(),
            s => s.snapshot(),
        });
        run.counters.push(model.grad_evals());
        run.elapsed.push(start.elapsed().as_secs_f64());
    }
    Ok(run)
}

/// ESS/N of one chain: minimum over coordinates. A coordinate that never
/// moved counts as a single effective sample.
fn chain_ess(series: &[Vec<f64>]) -> Result<f64> {
    let d = series.first().map_or(0, Vec::len);
    let n = series.len() as f64;
    let mut worst = f64::INFINITY;
    for i in 0..d {
        let xs: Vec<f64> = series.iter().map(|x| x[i]).collect();
        let e = match ess_scalar(&xs) {
            Ok(e) => e,
            Err(Error::Degenerate(_)) => 1.0 / n,
            Err(e) => return Err(e),
        };
        worst = worst.min(e);
    }
    Ok(worst)
}

/// The series an ESS is computed on: the chain itself for MCMC and for
/// original-coordinate ESH (already uniform in time), the trajectory
/// resampled on a uniform unscaled-time grid for ESH leapfrog.
fn ess_series(spec: &SamplerSpec, run: &ChainRun, dim: usize) -> Result<Vec<Vec<f64>>> {
    if spec.kind != SamplerKind::EshLeap || run.path.len() < 2 {
        return Ok(run.path.clone());
    }
    // only relative times matter here; shifting r keeps e^r representable
    let top = run
        .log_speed
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = run.log_speed.iter().map(|r| r - top).collect();
    let ts = time_rescale(&shifted, spec.eps, dim)?;
    uniform_time_grid_path(&ts, &run.path, run.path.len())
}

fn run_cell(
    cfg: &ExperimentConfig,
    bench: &Benchmark,
    spec: SamplerSpec,
    seed: u64,
    truth: &[Vec<f64>],
) -> Vec<RunRecord> {
    let checkpoints = &cfg.measure_at;
    let row = |cp: u64| RunRecord {
        benchmark: bench.name.to_string(),
        sampler: spec.to_string(),
        seed,
        checkpoint: cp,
        mmd2: None,
        ess: None,
        mean_energy: None,
        wall_clock: 0.0,
        error: None,
    };
    let fail = |e: Error| -> Vec<RunRecord> {
        checkpoints
            .iter()
            .map(|&cp| RunRecord {
                error: Some(e.to_string()),
                ..row(cp)
            })
            .collect()
    };

    let exec = cfg.execution;
    let runs = exec.map_indexed(cfg.n_chains, |c| {
        run_chain(bench, spec, checkpoints, seed, c, true).map_err(|e| Error::InChain {
            chain: c,
            source: Box::new(e),
        })
    });
    let runs = match runs.into_iter().collect::<Result<Vec<_>>>() {
        Ok(r) => r,
        Err(e) => return fail(e),
    };

    let mmd_cfg = MmdConfig {
        exec,
        ..MmdConfig::default()
    };
    let energy = bench.energy();
    let mut rows = Vec::with_capacity(checkpoints.len());
    for (k, &cp) in checkpoints.iter().enumerate() {
        let counter = runs[0].counters[k];
        if let Some(r) = runs.iter().position(|r| r.counters[k] != counter) {
            return fail(Error::InvalidArgument(format!(
                "chain {r} spent {} gradients at checkpoint {cp}, chain 0 spent {counter}",
                runs[r].counters[k]
            )));
        }
        let samples: Vec<Vec<f64>> = runs.iter().map(|r| r.snapshots[k].clone()).collect();
        let mmd2 = match mmd2_unbiased(&samples, truth, &mmd_cfg) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => {
                return fail(Error::NonFinite {
                    what: "MMD²",
                    x: vec![v],
                })
            }
            Err(e) => return fail(e),
        };
        let mean_energy =
            samples.iter().map(|x| energy.energy(x)).sum::<f64>() / samples.len() as f64;
        let wall_clock = if cfg.record_wall_clock {
            runs.iter().map(|r| r.elapsed[k]).fold(0.0, f64::max)
        } else {
            0.0
        };
        rows.push(RunRecord {
            checkpoint: counter,
            mmd2: Some(mmd2),
            mean_energy: Some(mean_energy),
            wall_clock,
            ..row(counter)
        });
    }

    let dim = bench.dim();
    let per_chain = exec.map_slice(&runs, |r| -> Result<Option<f64>> {
        let series = ess_series(&spec, r, dim)?;
        if series.len() < MIN_ESS_LEN {
            return Ok(None);
        }
        chain_ess(&series).map(Some)
    });
    match per_chain.into_iter().collect::<Result<Vec<_>>>() {
        Ok(v) => {
            if let (Some(last), Some(vals)) =
                (rows.last_mut(), v.into_iter().collect::<Option<Vec<f64>>>())
            {
                last.ess = Some(vals.iter().sum::<f64>() / vals.len() as f64);
            }
        }
        Err(e) => return fail(e),
    }
    rows
}

/// Runs every (benchmark, sampler, seed) cell of the sweep. A failing cell
/// yields rows with the error column set; the other cells are unaffected.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &name in &cfg.benchmarks {
        let bench = Benchmark::with_params(name, &cfg.params)?;
        for &seed in &cfg.seeds {
            let truth = bench.truth_samples(
                cfg.truth_n,
                &mut derive_rng(seed, &[label_tag("truth"), label_tag(&name.to_string())]),
            );
            for &spec in &cfg.samplers {
                rows.extend(run_cell(cfg, &bench, spec, seed, &truth));
            }
        }
    }
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(rows)
}

// ---------------------------------------------------------------------------
// partition-function estimation

/// Where the Jarzynski flow starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogzBase {
    /// `N(0, I)` with `E₀ = ½|x|²`.
    #[default]
    StandardNormal,
    /// Exact samples of the target itself, `E₀ = E`.
    Target,
}

#[derive(Debug, Clone)]
pub struct LogzConfig {
    /// Must have a closed-form `log Z`.
    pub target: Benchmark,
    pub base: LogzBase,
    pub n_chains: usize,
    pub eps: f64,
    /// Scaled-time horizon; the number of steps is `round(tbar/eps)`.
    pub tbar: f64,
    pub seed: u64,
    pub execution: Execution,
}

impl LogzConfig {
    pub fn new(target: Benchmark) -> Self {
        Self {
            target,
            base: LogzBase::StandardNormal,
            n_chains: 1000,
            eps: 0.1,
            tbar: 5.0,
            seed: 0,
            execution: Execution::default(),
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.tbar / self.eps).round() as usize
    }
}

/// One scaled-time point of a `logz` trace.
#[derive(Debug, Clone, PartialEq)]
pub struct LogzRow {
    pub step: usize,
    pub tbar: f64,
    pub log_z: f64,
    pub log_z_true: f64,
    pub rel_error: f64,
    /// Chain average of `E(x) + d·r − (d/2) log d`.
    pub hamiltonian: f64,
    /// Largest per-chain `|H(t̄) − H(0)| / max(|H(0)|, 1)`.
    pub max_rel_drift: f64,
    /// Unweighted chain average of `E(x)`.
    pub mean_energy: f64,
    /// Kish ESS of the normalized weights.
    pub weight_ess: f64,
    /// Set when the weights collapsed (ESS < 2).
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogzReport {
    pub log_z_true: f64,
    pub rows: Vec<LogzRow>,
}

impl LogzReport {
    pub fn is_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.error.is_some())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(LOGZ_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let f = [
                r.tbar,
                r.log_z,
                r.log_z_true,
                r.rel_error,
                r.hamiltonian,
                r.max_rel_drift,
                r.mean_energy,
                r.weight_ess,
            ]
            .map(format_float)
            .join(",");
            s.push_str(&format!(
                "{},{f},{}\n",
                r.step,
                r.error.as_deref().unwrap_or("")
            ));
        }
        s
    }
}

struct LogzChain {
    w0: f64,
    r: Vec<f64>,
    energy: Vec<f64>,
    hamiltonian: Vec<f64>,
}

/// A Gaussian target with a random orientation, covariance eigenvalues
/// drawn from `U[0.5, 1.5]` and mean from `U[−0.5, 0.5]ᵈ`. Eigenvalues stay
/// below 2 so importance weights from an `N(0, I)` base have finite
/// variance.
pub fn random_gaussian(dim: usize, seed: u64) -> Result<Benchmark> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let mut rng = derive_rng(seed, &[label_tag("random-gaussian"), dim as u64]);
    // Gram-Schmidt on Gaussian vectors gives a Haar-random rotation
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while q.len() < dim {
        let mut v = crate::energy::benchmarks_standard_normal(dim, &mut rng);
        for b in &q {
            let p: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            v.iter_mut().zip(b).for_each(|(a, c)| *a -= p * c);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-8 {
            q.push(v.into_iter().map(|a| a / n).collect());
        }
    }
    let lambda: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..1.5)).collect();
    let mean: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mut cov = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            cov[i * dim + j] = (0..dim).map(|k| lambda[k] * q[k][i] * q[k][j]).sum();
        }
    }
    // exact symmetry for the SPD check
    for i in 0..dim {
        for j in 0..i {
            cov[i * dim + j] = cov[j * dim + i];
        }
    }
    Ok(Benchmark::gaussian(
        BenchmarkName::Gaussian(dim),
        gaussian_energy(&mean, &cov)?,
        crate::energy::Initializer::StandardNormal,
    ))
}

/// Jarzynski estimate of `log Z` along the flow, with conservation and
/// energy traces.
pub fn run_logz(cfg: &LogzConfig) -> Result<LogzReport> {
    let log_z_true = cfg.target.log_partition().ok_or_else(|| {
        Error::InvalidArgument(format!("{} has no closed-form log Z", cfg.target.name))
    })?;
    if cfg.n_chains < 2 {
        return Err(Error::InvalidArgument("need at least 2 chains".into()));
    }
    if !(cfg.eps > 0.0 && cfg.eps.is_finite()) || !(cfg.tbar >= 0.0) {
        return Err(Error::InvalidArgument(
            "eps must be positive and tbar non-negative".into(),
        ));
    }
    let d = cfg.target.dim();
    let n_steps = cfg.n_steps();
    let (base_model, log_z0) = match cfg.base {
        LogzBase::StandardNormal => {
            let mut cov = vec![0.0; d * d];
            for i in 0..d {
                cov[i * d + i] = 1.0;
            }
            let g = gaussian_energy(&vec![0.0; d], &cov)?;
            let lz = g.log_partition();
            (EnergyModel::new(g), lz)
        }
        LogzBase::Target => (cfg.target.model(), log_z_true),
    };
    let chains = cfg
        .execution
        .map_indexed(cfg.n_chains, |c| -> Result<LogzChain> {
            let mut rng = derive_rng(cfg.seed, &[label_tag("logz"), c as u64]);
            let x0 = match cfg.base {
                LogzBase::StandardNormal => crate::energy::benchmarks_standard_normal(d, &mut rng),
                LogzBase::Target => cfg.target.truth.draw(&mut rng),
            };
            let model = cfg.target.model();
            let mut s = ScaledState::with_random_direction(x0, &model, &mut rng)?;
            let w0 = base_model.energy(&s.x) - s.energy;
            let mut out = LogzChain {
                w0,
                r: Vec::with_capacity(n_steps + 1),
                energy: Vec::with_capacity(n_steps + 1),
                hamiltonian: Vec::with_capacity(n_steps + 1),
            };
            for i in 0..=n_steps {
                if i > 0 {
                    s.step(&model, cfg.eps).map_err(|e| e.at_step(i))?;
                }
                out.r.push(s.r);
                out.energy.push(s.energy);
                out.hamiltonian.push(s.hamiltonian());
            }
            Ok(out)
        });
    let chains = chains.into_iter().collect::<Result<Vec<_>>>()?;
    let n = chains.len() as f64;
    let mut rows = Vec::with_capacity(n_steps + 1);
    for k in 0..=n_steps {
        let log_w: Vec<f64> = chains.iter().map(|c| c.w0 + c.r[k]).collect();
        let log_z = estimate_log_partition(&log_w, log_z0)?;
        let diag = weight_diagnostics(&log_w);
        let max_rel_drift = chains
            .iter()
            .map(|c| (c.hamiltonian[k] - c.hamiltonian[0]).abs() / c.hamiltonian[0].abs().max(1.0))
            .fold(0.0, f64::max);
        rows.push(LogzRow {
            step: k,
            tbar: k as f64 * cfg.eps,
            log_z,
            log_z_true,
            rel_error: (log_z - log_z_true).abs() / log_z_true.abs().max(f64::MIN_POSITIVE),
            hamiltonian: chains.iter().map(|c| c.hamiltonian[k]).sum::<f64>() / n,
            max_rel_drift,
            mean_energy: chains.iter().map(|c| c.energy[k]).sum::<f64>() / n,
            weight_ess: diag.ess,
            error: (diag.ess < 2.0).then(|| format!("weight collapse: ESS {:.3} < 2", diag.ess)),
        });
    }
    Ok(LogzReport { log_z_true, rows })
}

// ---------------------------------------------------------------------------
// single trajectories and gradient checks

/// One point of a trajectory dump.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub tbar: f64,
    pub t: f64,
    pub r: f64,
    pub x: Vec<f64>,
}

/// Runs one ESH chain from the benchmark initializer and records every
/// step. For the original-coordinate integrator `t` is the integration
/// variable and `t̄ = ∫ d/|v| dt`.
pub fn sample_trajectory(
    bench: &Benchmark,
    spec: SamplerSpec,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<TrajectoryPoint>> {
    if !spec.kind.is_esh() {
        return Err(Error::InvalidArgument(format!(
            "trajectory dumps need an ESH sampler, got {}",
            spec.kind.name()
        )));
    }
    spec.validate()?;
    let mut rng = derive_rng(
        seed,
        &[label_tag("sample"), label_tag(&bench.name.to_string())],
    );
    let x0 = bench.init_point(&mut rng);
    let u = random_unit_vector(x0.len(), &mut rng);
    let model = bench.model();
    let dim = x0.len();
    let d = dim as f64;
    let mut out = Vec::with_capacity(n_steps + 1);
    match spec.kind {
        SamplerKind::EshLeap => {
            let mut s = ScaledState::new(x0, u, &model)?;
            let mut rs = vec![s.r];
            out.push((s.x.clone(), s.r));
            for i in 0..n_steps {
                s.step(&model, spec.eps).map_err(|e| e.at_step(i + 1))?;
                rs.push(s.r);
                out.push((s.x.clone(), s.r));
            }
            let ts = time_rescale(&rs, spec.eps, dim)?;
            Ok(out
                .into_iter()
                .enumerate()
                .map(|(k, (x, r))| TrajectoryPoint {
                    step: k,
                    tbar: k as f64 * spec.eps,
                    t: ts[k],
                    r,
                    x,
                })
                .collect())
        }
        _ => {
            let mut s = PhaseState::new(x0, u, &model)?;
            let mut tbar = 0.0;
            let mut prev = s.log_speed();
            let mut pts = vec![TrajectoryPoint {
                step: 0,
                tbar,
                t: 0.0,
                r: prev,
                x: s.x.clone(),
            }];
            for i in 0..n_steps {
                s.step(&model, spec.eps).map_err(|e| e.at_step(i + 1))?;
                let r = s.log_speed();
                tbar += 0.5 * spec.eps * d * ((-prev).exp() + (-r).exp());
                prev = r;
                pts.push(TrajectoryPoint {
                    step: i + 1,
                    tbar,
                    t: s.t,
                    r,
                    x: s.x.clone(),
                });
            }
            Ok(pts)
        }
    }
}

/// CSV with columns `step,tbar,t,r,x0,…,x{d−1}`.
pub fn trajectory_to_csv(points: &[TrajectoryPoint]) -> String {
    let d = points.first().map_or(0, |p| p.x.len());
    let mut s = String::from("step,tbar,t,r");
    for i in 0..d {
        s.push_str(&format!(",x{i}"));
    }
    s.push('\n');
    for p in points {
        s.push_str(&format!(
            "{},{},{},{}",
            p.step,
            format_float(p.tbar),
            format_float(p.t),
            format_float(p.r)
        ));
        for v in &p.x {
            s.push(',');
            s.push_str(&format_float(*v));
        }
        s.push('\n');
    }
    s
}

/// Maximum tolerated relative gradient error.
pub const GRADCHECK_TOL: f64 = 1e-4;

/// Finite-difference check of a benchmark's gradient on `n_probes` seeded
/// points, half from the initializer and half from the target.
pub fn gradcheck(bench: &Benchmark, n_probes: usize, h: f64, seed: u64) -> Result<f64> {
    let mut rng = derive_rng(
        seed,
        &[label_tag("gradcheck"), label_tag(&bench.name.to_string())],
    );
    let probes: Vec<Vec<f64>> = (0..n_probes)
        .map(|i| {
            if i % 2 == 0 {
                bench.init_point(&mut rng)
            } else {
                bench.truth.draw(&mut rng)
            }
        })
        .collect();
    check_gradient(&bench.model(), &probes, h)
}
