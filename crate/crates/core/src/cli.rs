//! Config files, subcommands and report rendering behind the `detcov` binary.
//!
//! A run is described by one JSON document:
//!
//! ```json
//! {
//!   "mode": "pairs",
//!   "transmitters": [[0.0, 0.0]],
//!   "receivers": [[0.1, 0.0]],
//!   "kernel": {"type": "explicit_K", "matrix": [[0.5]]},
//!   "pathloss": {"type": "power_law", "kappa": 1.0, "beta": 4.0},
//!   "fading_mean": 1.0,
//!   "noise": 0.0,
//!   "threshold": 1.0,
//!   "simulate": {"reps": 10000, "seed": 7}
//! }
//! ```
//!
//! TX/RX runs use `"mode": "txrx"` and a single `"nodes"` list.
//!
//! Exit codes: 0 success, 1 validation failure, 2 I/O or parse failure,
//! 3 computation error.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::coverage::{full_report, pair_coverage, txrx_coverage, CoverageReport};
use crate::dpp::SpectralSampler;
use crate::error::Error;
use crate::kernels::{build_kernel, build_l, matrix_from_rows, validate, KernelSpec, LEnsemble, MarginalKernel, ValidationReport};
use crate::montecarlo::{simulate, SimulationPlan, Target};
use crate::propagation::{Mode, NetworkGeometry, PathLossModel, Point, PropagationParams};
use crate::rng::substream;
use crate::NodeId;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;

pub const DEFAULT_REPS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulateSection {
    pub reps: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transmitters: Option<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receivers: Option<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<Point>>,
    pub kernel: KernelSpec,
    pub pathloss: PathLossModel,
    pub fading_mean: f64,
    pub noise: f64,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
}

impl RunConfig {
    pub fn geometry(&self) -> crate::Result<NetworkGeometry> {
        match self.mode {
            Mode::Pairs => NetworkGeometry::pairs(
                self.transmitters.clone().unwrap_or_default(),
                self.receivers.clone().unwrap_or_default(),
            ),
            Mode::Txrx => NetworkGeometry::txrx(self.nodes.clone().unwrap_or_default()),
        }
    }

    pub fn params(&self) -> crate::Result<PropagationParams> {
        PropagationParams::new(self.pathloss.clone(), self.fading_mean, self.noise, self.threshold)
    }

    pub fn kernel(&self) -> crate::Result<MarginalKernel> {
        build_kernel(&self.kernel, &self.geometry()?)
    }

    pub fn l_ensemble(&self) -> crate::Result<LEnsemble> {
        build_l(&self.kernel, &self.geometry()?)
    }

    /// Normalized JSON form; parses back to an equal config.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    fn new(path: impl Into<String>, message: impl fmt::Display) -> Self {
        FieldError {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Io(String),
    Parse(String),
    Invalid(Vec<FieldError>),
    Compute(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) | CliError::Parse(_) => EXIT_IO,
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Compute(_) => EXIT_COMPUTE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Parse(m) => write!(f, "malformed config: {m}"),
            CliError::Invalid(errs) => {
                write!(f, "invalid config:")?;
                for e in errs {
                    write!(f, "\n  {e}")?;
                }
                Ok(())
            }
            CliError::Compute(e @ Error::NotLRepresentable { .. }) => write!(
                f,
                "{e}; sampling needs an L-ensemble, so give the kernel in an L form or use a K with all eigenvalues below 1"
            ),
            CliError::Compute(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Compute(e)
    }
}

const KNOWN_KEYS: [&str; 10] = [
    "mode",
    "transmitters",
    "receivers",
    "nodes",
    "kernel",
    "pathloss",
    "fading_mean",
    "noise",
    "threshold",
    "simulate",
];

fn take<T: DeserializeOwned>(obj: &Map<String, Value>, key: &str, errs: &mut Vec<FieldError>) -> Option<T> {
    match obj.get(key) {
        None | Some(Value::Null) => None,
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| errs.push(FieldError::new(key, e)))
            .ok(),
    }
}

fn required<T: DeserializeOwned>(obj: &Map<String, Value>, key: &str, errs: &mut Vec<FieldError>) -> Option<T> {
    if matches!(obj.get(key), None | Some(Value::Null)) {
        errs.push(FieldError::new(key, "missing required field"));
        return None;
    }
    take(obj, key, errs)
}

/// Schema and invariant checks on a JSON document. Returns the config when
/// the schema is satisfied, plus every problem found.
pub fn check_document(doc: &Value) -> (Option<RunConfig>, Vec<FieldError>) {
    let mut errs = Vec::new();
    let Some(obj) = doc.as_object() else {
        return (None, vec![FieldError::new("$", "config must be a JSON object")]);
    };
    for key in obj.keys().filter(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        errs.push(FieldError::new(key.clone(), "unknown field"));
    }
    let mode: Option<Mode> = required(obj, "mode", &mut errs);
    let transmitters: Option<Vec<Point>> = take(obj, "transmitters", &mut errs);
    let receivers: Option<Vec<Point>> = take(obj, "receivers", &mut errs);
    let nodes: Option<Vec<Point>> = take(obj, "nodes", &mut errs);
    let kernel: Option<KernelSpec> = required(obj, "kernel", &mut errs);
    let pathloss: Option<PathLossModel> = required(obj, "pathloss", &mut errs);
    let fading_mean: Option<f64> = required(obj, "fading_mean", &mut errs);
    let noise: Option<f64> = required(obj, "noise", &mut errs);
    let threshold: Option<f64> = required(obj, "threshold", &mut errs);
    let simulate: Option<SimulateSection> = take(obj, "simulate", &mut errs);

    match mode {
        Some(Mode::Pairs) => {
            for (key, v) in [("transmitters", &transmitters), ("receivers", &receivers)] {
                if v.is_none() && !obj.contains_key(key) {
                    errs.push(FieldError::new(key, "required in pairs mode"));
                }
            }
            if obj.contains_key("nodes") {
                errs.push(FieldError::new("nodes", "not allowed in pairs mode"));
            }
            if let (Some(t), Some(r)) = (&transmitters, &receivers) {
                if t.len() != r.len() {
                    errs.push(FieldError::new(
                        "transmitters, receivers",
                        format!("transmitters has {} points but receivers has {}", t.len(), r.len()),
                    ));
                }
            }
        }
        Some(Mode::Txrx) => {
            if nodes.is_none() && !obj.contains_key("nodes") {
                errs.push(FieldError::new("nodes", "required in txrx mode"));
            }
            for key in ["transmitters", "receivers"] {
                if obj.contains_key(key) {
                    errs.push(FieldError::new(key, "not allowed in txrx mode"));
                }
            }
        }
        None => {}
    }
    if let Some(s) = simulate {
        if s.reps == 0 {
            errs.push(FieldError::new("simulate.reps", "must be >= 1"));
        }
    }
    let (Some(mode), Some(kernel), Some(pathloss), Some(fading_mean), Some(noise), Some(threshold)) =
        (mode, kernel, pathloss, fading_mean, noise, threshold)
    else {
        return (None, errs);
    };
    if !errs.is_empty() {
        return (None, errs);
    }
    let config = RunConfig {
        mode,
        transmitters,
        receivers,
        nodes,
        kernel,
        pathloss,
        fading_mean,
        noise,
        threshold,
        simulate,
    };
    errs.extend(validate_config(&config));
    (Some(config), errs)
}

/// Invariant checks of a schema-correct config.
pub fn validate_config(config: &RunConfig) -> Vec<FieldError> {
    let mut errs = Vec::new();
    let geometry_path = match config.mode {
        Mode::Pairs => "transmitters, receivers",
        Mode::Txrx => "nodes",
    };
    if let Err(e) = config.pathloss.check() {
        errs.push(FieldError::new("pathloss", e));
    }
    for (key, v, ok) in [
        ("fading_mean", config.fading_mean, config.fading_mean > 0.0 && config.fading_mean.is_finite()),
        ("noise", config.noise, config.noise >= 0.0 && config.noise.is_finite()),
        ("threshold", config.threshold, config.threshold >= 0.0 && config.threshold.is_finite()),
    ] {
        if !ok {
            let bound = if key == "fading_mean" { "> 0" } else { ">= 0" };
            errs.push(FieldError::new(key, format!("must be finite and {bound}, got {v}")));
        }
    }
    let geometry = match config.geometry() {
        Ok(g) => g,
        Err(e) => {
            errs.push(FieldError::new(geometry_path, e));
            return errs;
        }
    };
    if let Err(e) = geometry.check_links(&config.pathloss) {
        errs.push(FieldError::new(geometry_path, e));
    }
    if let Err(e) = build_kernel(&config.kernel, &geometry) {
        errs.push(FieldError::new("kernel", e));
    }
    errs
}

fn read_document(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

/// Reads and fully validates a config; all problems are reported together.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let doc = read_document(path)?;
    match check_document(&doc) {
        (Some(config), errs) if errs.is_empty() => Ok(config),
        (_, errs) => Err(CliError::Invalid(errs)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// 17 significant digits; enough to round-trip any f64.
pub fn csv_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(csv_number).unwrap_or_default()
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

pub fn render_coverage(report: &CoverageReport, format: Format) -> String {
    match format {
        Format::Json => json(report),
        Format::Csv => {
            let mut s = String::from(
                "tx,rx,selection_probability,conditional_coverage,coverage,local_delay_mean,delay_infinite,diagnostic\n",
            );
            for l in &report.links {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    l.tx,
                    l.rx,
                    csv_number(l.selection_probability),
                    csv_opt(l.conditional_coverage),
                    csv_opt(l.coverage),
                    csv_opt(l.local_delay_mean),
                    l.delay_infinite,
                    csv_text(l.diagnostic.as_deref().unwrap_or("")),
                ));
            }
            s
        }
    }
}

pub fn cmd_coverage(config: &RunConfig, format: Format) -> Result<String, CliError> {
    let geometry = config.geometry()?;
    let report = full_report(&geometry, &config.kernel()?, &config.params()?)?;
    Ok(render_coverage(&report, format))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationRow {
    pub target: Target,
    /// Closed-form value; for local delay, `1 / coverage` (absent when infinite).
    pub closed_form: Option<f64>,
    pub estimate: f64,
    pub std_error: f64,
    /// `|estimate - closed_form| / std_error`; absent when undefined.
    pub z: Option<f64>,
    pub replications: u64,
    pub censored: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub mode: Mode,
    pub replications: u64,
    pub seed: u64,
    pub rows: Vec<SimulationRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulateOptions {
    pub reps: Option<u64>,
    pub seed: Option<u64>,
    /// Local delay is simulated only for pairs whose closed-form coverage is at
    /// least this value; smaller coverage means very long runs.
    pub delay_min_coverage: f64,
    pub workers: Option<usize>,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        SimulateOptions {
            reps: None,
            seed: None,
            delay_min_coverage: 0.01,
            workers: None,
        }
    }
}

fn z_score(estimate: f64, se: f64, closed: Option<f64>) -> Option<f64> {
    let c = closed?;
    let d = (estimate - c).abs();
    if se > 0.0 {
        Some(d / se)
    } else if d == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

pub fn cmd_simulate(config: &RunConfig, opts: SimulateOptions, format: Format) -> Result<String, CliError> {
    let geometry = config.geometry()?;
    let params = config.params()?;
    let k = config.kernel()?;
    let l = config.l_ensemble()?;
    let reps = opts.reps.or(config.simulate.map(|s| s.reps)).unwrap_or(DEFAULT_REPS);
    let seed = opts.seed.or(config.simulate.map(|s| s.seed)).unwrap_or(0);
    let n = geometry.len();
    let mut targets = Vec::new();
    let mut closed = Vec::new();
    match geometry.mode() {
        Mode::Pairs => {
            let cov: Vec<f64> = (0..n)
                .map(|i| pair_coverage(&geometry, &k, NodeId(i), &params))
                .collect::<crate::Result<_>>()?;
            for (i, &c) in cov.iter().enumerate() {
                targets.push(Target::PairCoverage { i: NodeId(i) });
                closed.push(Some(c));
            }
            for (i, &c) in cov.iter().enumerate() {
                if c >= opts.delay_min_coverage && c > 0.0 {
                    targets.push(Target::LocalDelay { i: NodeId(i) });
                    closed.push(Some(1.0 / c));
                }
            }
        }
        Mode::Txrx => {
            for i in (0..n).map(NodeId) {
                for j in (0..n).map(NodeId).filter(|&j| j != i) {
                    targets.push(Target::Txrx { i, j });
                    closed.push(Some(txrx_coverage(&geometry, &k, i, j, &params)?));
                }
            }
        }
    }
    if targets.is_empty() {
        return Err(CliError::Compute(Error::BadArgument("nothing to simulate".into())));
    }
    let mut plan = SimulationPlan::new(reps, seed, targets)?;
    plan.workers = opts.workers;
    let estimates = simulate(&geometry, &l, &params, &plan)?;
    let rows: Vec<SimulationRow> = estimates
        .into_iter()
        .zip(closed)
        .map(|(t, c)| SimulationRow {
            target: t.target,
            closed_form: c,
            estimate: t.estimate.mean,
            std_error: t.estimate.std_error,
            z: z_score(t.estimate.mean, t.estimate.std_error, c),
            replications: t.estimate.replications,
            censored: t.estimate.censored,
        })
        .collect();
    let report = SimulationReport {
        mode: geometry.mode(),
        replications: reps,
        seed,
        rows,
    };
    Ok(match format {
        Format::Json => json(&report),
        Format::Csv => {
            let mut s = String::from("target,i,j,closed_form,estimate,std_error,z,replications,censored\n");
            for r in &report.rows {
                let (name, i, j) = match r.target {
                    Target::PairCoverage { i } => ("pair_coverage", i, String::new()),
                    Target::Txrx { i, j } => ("txrx", i, j.to_string()),
                    Target::LocalDelay { i } => ("local_delay", i, String::new()),
                };
                s.push_str(&format!(
                    "{name},{i},{j},{},{},{},{},{},{}\n",
                    csv_opt(r.closed_form),
                    csv_number(r.estimate),
                    csv_number(r.std_error),
                    csv_opt(r.z),
                    r.replications,
                    r.censored
                ));
            }
            s
        }
    })
}

/// `count` draws, one sorted JSON array of node ids per line. Draw `d` uses
/// substream `d` of `seed`.
pub fn cmd_sample(config: &RunConfig, count: u64, seed: Option<u64>) -> Result<String, CliError> {
    let l = config.l_ensemble()?;
    let seed = seed.or(config.simulate.map(|s| s.seed)).unwrap_or(0);
    let sampler = SpectralSampler::new(&l);
    let mut pos = Vec::new();
    let mut out = String::new();
    for d in 0..count {
        let mut rng = substream(seed, d);
        sampler.sample_positions(&mut rng, &mut pos);
        let ids: Vec<NodeId> = pos.iter().map(|&p| l.node_ids()[p]).collect();
        out.push_str(&serde_json::to_string(&ids).expect("ids serialize"));
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigValidation {
    pub valid: bool,
    pub errors: Vec<FieldError>,
    /// Symmetry and spectrum of the marginal kernel, when one could be formed.
    pub kernel: Option<ValidationReport>,
}

fn kernel_diagnostics(doc: &Value) -> Option<ValidationReport> {
    let spec: KernelSpec = serde_json::from_value(doc.get("kernel")?.clone()).ok()?;
    if let KernelSpec::ExplicitK { matrix } = &spec {
        return matrix_from_rows(matrix).ok().map(|m| validate(&m));
    }
    let geometry = match doc.get("mode")?.as_str()? {
        "pairs" => NetworkGeometry::pairs(
            serde_json::from_value(doc.get("transmitters")?.clone()).ok()?,
            serde_json::from_value(doc.get("receivers")?.clone()).ok()?,
        ),
        _ => NetworkGeometry::txrx(serde_json::from_value(doc.get("nodes")?.clone()).ok()?),
    }
    .ok()?;
    build_kernel(&spec, &geometry).ok().map(|k| validate(k.matrix()))
}

/// Report-only validation; the exit code is 0 iff the config is valid.
pub fn cmd_validate(path: &Path, format: Format) -> Result<(String, i32), CliError> {
    let doc = read_document(path)?;
    let (_, errors) = check_document(&doc);
    let report = ConfigValidation {
        valid: errors.is_empty(),
        kernel: kernel_diagnostics(&doc),
        errors,
    };
    let code = if report.valid { EXIT_OK } else { EXIT_INVALID };
    let text = match format {
        Format::Json => json(&report),
        Format::Csv => {
            let mut s = String::from("path,message\n");
            for e in &report.errors {
                s.push_str(&format!("{},{}\n", csv_text(&e.path), csv_text(&e.message)));
            }
            s
        }
    };
    Ok((text, code))
}

#[derive(Debug, Parser)]
#[command(name = "detcov", version, about = "Coverage probabilities for networks scheduled by a determinantal point process")]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Print the normalized config and exit without computing.
    #[arg(long, global = true)]
    pub echo_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form coverage for every link.
    Coverage { config: PathBuf },
    /// Monte Carlo estimates next to the closed forms.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Skip local-delay simulation for pairs with smaller closed-form coverage.
        #[arg(long, default_value_t = 0.01)]
        delay_min_coverage: f64,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Draw scheduled sets from the kernel.
    Sample {
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a config and report kernel diagnostics.
    Validate { config: PathBuf },
}

impl Command {
    fn config_path(&self) -> &Path {
        match self {
            Command::Coverage { config }
            | Command::Simulate { config, .. }
            | Command::Sample { config, .. }
            | Command::Validate { config } => config,
        }
    }
}

fn execute(cli: &Cli) -> Result<(String, i32), CliError> {
    if let Command::Validate { config } = &cli.command {
        if !cli.echo_config {
            return cmd_validate(config, cli.format);
        }
    }
    let config = parse_config(cli.command.config_path())?;
    if cli.echo_config {
        return Ok((config.to_json(), EXIT_OK));
    }
    let text = match &cli.command {
        Command::Coverage { .. } => cmd_coverage(&config, cli.format)?,
        Command::Simulate {
            reps,
            seed,
            delay_min_coverage,
            workers,
            ..
        } => cmd_simulate(
            &config,
            SimulateOptions {
                reps: *reps,
                seed: *seed,
                delay_min_coverage: *delay_min_coverage,
                workers: *workers,
            },
            cli.format,
        )?,
        Command::Sample { count, seed, .. } => cmd_sample(&config, *count, *seed)?,
        Command::Validate { .. } => unreachable!(),
    };
    Ok((text, EXIT_OK))
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let (text, code) = match execute(cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let written = match &cli.output {
        Some(path) => fs::write(path, text.as_bytes()).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout().lock().write_all(text.as_bytes()).map_err(|e| e.to_string()),
    };
    match written {
        Ok(()) => code,
        Err(e) => {
            eprintln!("error: i/o error: {e}");
            EXIT_IO
        }
    }
}
