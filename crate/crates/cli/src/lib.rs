//! Scenario runner behind the `scalesync` binary.
//!
//! Exit codes: 0 success, 1 failed assumptions / infeasible synthesis / failed
//! sweep, 2 input errors, 3 simulation divergence.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use scalesync_core::io::{read_json, write_json};
use scalesync_core::netsim::{self, SyncSummary};
use scalesync_core::protocol::{self, DeltaConstants};
use scalesync_core::structure::{compose, verify_lemma1};
use scalesync_core::verify::{self, NecessityAudit, SweepReport};
use scalesync_core::{
    Complex64,
    DiGraph, GraphSpec, LtiModel, PreCompensator, Protocol, ProtocolKind, Scenario, SynthOptions,
    TimeDomain,
};

/// Overrides the directory that relative `output_dir` entries resolve against.
pub const OUTPUT_ROOT_ENV: &str = "SCALESYNC_OUTPUT_ROOT";

pub const SYNC_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Core(#[from] scalesync_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use scalesync_core::Error as E;
        match self {
            CliError::Input(_) => 2,
            CliError::Failed(_) => 1,
            CliError::Core(e) => match e {
                E::Divergence { .. } => 3,
                E::Parse(_)
                | E::Io(_)
                | E::Json(_)
                | E::ShapeMismatch(_)
                | E::InvalidGraph(_)
                | E::TimeDomainMismatch(_)
                | E::BoundTooSmall { .. } => 2,
                _ => 1,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "scalesync", version, about = "Scale-free synchronization protocol toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structural checks on an agent model (and optional pre-compensator).
    Check {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        precomp: Option<PathBuf>,
        /// Print the reports as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Synthesize the protocol described by a run config and write protocol.json.
    Synth(RunArgs),
    /// Simulate a run config and write trajectory CSVs and summary.json.
    Simulate(RunArgs),
    /// Spectral sweep of the protocol over coupling eigenvalues.
    Sweep(RunArgs),
    /// Simulate several run configs concurrently.
    Batch {
        configs: Vec<PathBuf>,
        #[arg(long)]
        override_gain_bound: bool,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    pub config: PathBuf,
    /// Accept ε or δ above the certified bound.
    #[arg(long)]
    pub override_gain_bound: bool,
    /// Use an existing protocol file instead of synthesizing.
    #[arg(long)]
    pub protocol: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    pub rho: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    #[serde(default)]
    pub override_gain_bound: bool,
    #[serde(default)]
    pub refine_delta: bool,
}

/// Hand-picked design matrices replacing the automatic ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Design {
    #[serde(rename = "P", default, with = "scalesync_core::io::opt_matrix")]
    pub p: Option<DMatrix<f64>>,
    #[serde(rename = "H", default, with = "scalesync_core::io::opt_matrix")]
    pub h: Option<DMatrix<f64>>,
    #[serde(rename = "S", default, with = "scalesync_core::io::opt_matrix")]
    pub s: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    /// Final time (continuous) or number of steps (discrete).
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub record_every: usize,
    /// Stop once the sync error falls below this fraction of the initial one.
    pub stop_below: Option<f64>,
    /// Per-agent in-degree bounds for discrete-time coupling.
    pub din_bar: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

impl Default for SimParams {
    fn default() -> Self {
        Self { horizon: None, dt: None, seed: 0, record_every: 1, stop_below: None, din_bar: None }
    }
}

/// Scenario description read from JSON. Relative paths resolve against the
/// config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: PathBuf,
    pub precompensator: Option<PathBuf>,
    pub protocol: ProtocolKind,
    /// Generator (`cycle(60)`, `path(4)`, `star(8)`, `random_tree(25, 7)`) or
    /// edge-list path.
    pub graph: String,
    #[serde(default)]
    pub gains: Gains,
    #[serde(default)]
    pub design: Design,
    #[serde(default)]
    pub simulation: SimParams,
    pub output_dir: PathBuf,
}

/// A config with every path made absolute.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = Self { config, base };
        loaded.validate()?;
        Ok(loaded)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn validate(&self) -> CliResult<()> {
        let mut files = vec![self.resolve(&self.config.model)];
        files.extend(self.config.precompensator.as_ref().map(|p| self.resolve(p)));
        if let GraphSpec::EdgeList(p) = self.graph_spec()? {
            files.push(PathBuf::from(p));
        }
        for f in files {
            if !f.is_file() {
                return Err(CliError::Input(format!("referenced file {} does not exist", f.display())));
            }
        }
        Ok(())
    }

    pub fn graph_spec(&self) -> CliResult<GraphSpec> {
        match self.config.graph.parse::<GraphSpec>()? {
            GraphSpec::EdgeList(p) => {
                Ok(GraphSpec::EdgeList(self.resolve(Path::new(&p)).to_string_lossy().into_owned()))
            }
            spec => Ok(spec),
        }
    }

    pub fn model(&self) -> CliResult<LtiModel> {
        let model = load_model(&self.resolve(&self.config.model))?;
        if model.time_domain() != self.config.protocol.time_domain() {
            return Err(CliError::Input(format!(
                "protocol {} needs a {} model, got {}",
                self.config.protocol.label(),
                self.config.protocol.time_domain().label(),
                model.time_domain().label()
            )));
        }
        Ok(model)
    }

    pub fn precompensator(&self) -> CliResult<Option<PreCompensator>> {
        self.config
            .precompensator
            .as_ref()
            .map(|p| load_json::<PreCompensator>(&self.resolve(p)))
            .transpose()
    }

    pub fn graph(&self) -> CliResult<DiGraph> {
        Ok(self.graph_spec()?.build()?)
    }

    /// `--out`, then `$SCALESYNC_OUTPUT_ROOT/<output_dir>`, then the config
    /// directory.
    pub fn output_dir(&self, args_out: Option<&Path>) -> PathBuf {
        if let Some(o) = args_out {
            return o.to_path_buf();
        }
        let dir = &self.config.output_dir;
        if dir.is_absolute() {
            return dir.clone();
        }
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root).join(dir),
            _ => self.base.join(dir),
        }
    }

    pub fn synth_options(&self, override_flag: bool) -> SynthOptions {
        let c = &self.config;
        SynthOptions {
            rho: c.gains.rho,
            epsilon: c.gains.epsilon,
            delta: c.gains.delta,
            override_gain_bound: c.gains.override_gain_bound || override_flag,
            p: c.design.p.clone(),
            h: c.design.h.clone(),
            s: c.design.s.clone(),
            refine_delta: c.gains.refine_delta,
        }
    }

    pub fn synthesize(&self, override_flag: bool) -> CliResult<Protocol> {
        let model = self.model()?;
        let opts = self.synth_options(override_flag);
        Ok(match self.config.protocol {
            ProtocolKind::CtFull => Protocol::CtFull(protocol::synth_ct_full(&model, &opts)?),
            ProtocolKind::CtPartial => {
                let pc = match self.precompensator()? {
                    Some(pc) => pc,
                    None => PreCompensator::identity(model.inputs()),
                };
                Protocol::CtPartial(protocol::synth_ct_partial(&model, &pc, &opts)?)
            }
            ProtocolKind::DtFull => Protocol::DtFull(protocol::synth_dt_full(&model, &opts)?),
            ProtocolKind::DtPartial => Protocol::DtPartial(protocol::synth_dt_partial(&model, &opts)?),
        })
    }

    /// Loads `--protocol` if given, otherwise synthesizes.
    pub fn protocol(&self, args: &RunArgs) -> CliResult<Protocol> {
        match &args.protocol {
            Some(p) => {
                let proto: Protocol = load_json(p)?;
                if proto.kind() != self.config.protocol {
                    return Err(CliError::Input(format!(
                        "protocol file is {}, config asks for {}",
                        proto.kind().label(),
                        self.config.protocol.label()
                    )));
                }
                Ok(proto)
            }
            None => self.synthesize(args.override_gain_bound),
        }
    }

    pub fn scenario(&self, proto: Protocol) -> CliResult<Scenario> {
        let graph = self.graph()?;
        let sim = &self.config.simulation;
        let mut s = Scenario::seeded(proto, graph, sim.seed);
        if let Some(h) = sim.horizon {
            s.horizon = h;
        }
        if let Some(dt) = sim.dt {
            s.dt = dt;
        }
        s.record_every = sim.record_every;
        s.stop_below = sim.stop_below;
        s.din_bar = sim.din_bar.clone();
        s.validate()?;
        Ok(s)
    }
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    read_json(path).map_err(|e| CliError::Input(format!("cannot load {}: {e}", path.display())))
}

fn load_model(path: &Path) -> CliResult<LtiModel> {
    load_json(path)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Check { model, precomp, json } => cmd_check(&model, precomp.as_deref(), json),
        Command::Synth(args) => cmd_synth(&args).map(|_| ()),
        Command::Simulate(args) => cmd_simulate(&args).map(|_| ()),
        Command::Sweep(args) => cmd_sweep(&args).map(|_| ()),
        Command::Batch { configs, override_gain_bound, jobs } => {
            cmd_batch(&configs, override_gain_bound, jobs)
        }
    }
}

#[derive(Debug, Serialize)]
struct CheckOutput {
    model: scalesync_core::StructuralReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    necessity: Option<NecessityAudit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lemma1: Option<scalesync_core::Lemma1Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    compensated: Option<scalesync_core::StructuralReport>,
    design_path_ok: bool,
    violations: Vec<String>,
}

pub fn cmd_check(model: &Path, precomp: Option<&Path>, json: bool) -> CliResult<()> {
    let m = load_model(model)?;
    let pc = precomp.map(load_json::<PreCompensator>).transpose()?;
    let report = m.feasibility_report()?;
    let necessity = if m.is_siso() { Some(verify::siso_necessity_audit(&m)?) } else { None };

    let mut violations = Vec::new();
    let (lemma1, compensated, ok) = match (&pc, m.time_domain()) {
        (Some(pc), TimeDomain::Continuous) => {
            let l1 = verify_lemma1(&m, pc)?;
            let comp = compose(&m, pc)?.model().feasibility_report()?;
            violations.extend(l1.failures.iter().map(|f| format!("pre-compensator: {f}")));
            violations.extend(comp.violations.iter().map(|v| format!("compensated agent: {v}")));
            if !report.neutrally_stable {
                violations.extend(report.violations.iter().cloned());
            }
            let ok = l1.pass() && comp.design_assumptions_hold && report.neutrally_stable;
            (Some(l1), Some(comp), ok)
        }
        (Some(_), TimeDomain::Discrete) => {
            return Err(CliError::Input("pre-compensators apply to continuous-time agents only".into()))
        }
        (None, _) => {
            violations.extend(report.violations.iter().cloned());
            (None, None, report.design_assumptions_hold)
        }
    };
    if let Some(a) = &necessity {
        for c in a.violations() {
            let v = format!("necessary condition {} fails: {}", c.name, c.witness.clone().unwrap_or_default());
            violations.push(v);
        }
    }
    let ok = ok && necessity.as_ref().is_none_or(|a| a.pass);

    let out = CheckOutput { model: report, necessity, lemma1, compensated, design_path_ok: ok, violations };
    if json {
        println!("{}", serde_json::to_string_pretty(&out).map_err(scalesync_core::Error::from)?);
    } else {
        print_check(&out);
    }
    if ok {
        Ok(())
    } else {
        Err(CliError::Failed(format!("assumptions violated: {}", out.violations.join("; "))))
    }
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn print_check(out: &CheckOutput) {
    let r = &out.model;
    println!("time domain            {}", r.time_domain.label());
    println!("stabilizable           {}", yes(r.stabilizable));
    println!("detectable             {}", yes(r.detectable));
    println!("neutrally stable       {}", yes(r.neutrally_stable));
    println!("minimum phase          {}", yes(r.minimum_phase));
    println!("weakly minimum phase   {}", yes(r.weakly_minimum_phase));
    println!("uniform rank one       {}", yes(r.uniform_rank_one));
    if let Some(rd) = r.relative_degree_one {
        println!("relative degree one    {}", yes(rd));
    }
    if let Some(l1) = &out.lemma1 {
        println!("pre-compensator check  {}", if l1.pass() { "pass" } else { "fail" });
    }
    if let Some(a) = &out.necessity {
        println!("necessary conditions   {}", if a.pass { "hold" } else { "violated" });
    }
    for v in &out.violations {
        println!("  violation: {v}");
    }
    println!("design path            {}", if out.design_path_ok { "ok" } else { "infeasible" });
}

fn print_gain_info(proto: &Protocol) {
    match proto {
        Protocol::DtFull(p) => println!("epsilon* = {}  epsilon = {}", p.epsilon_star, p.epsilon),
        Protocol::DtPartial(p) => {
            let DeltaConstants { delta1, delta2, .. } = &p.constants;
            println!("delta* = {}  delta = {}  (delta1 = {delta1}, delta2 = {delta2})", p.delta_star, p.delta);
        }
        Protocol::CtFull(p) => println!("rho = {}", p.rho),
        Protocol::CtPartial(p) => println!("rho = {}", p.rho),
    }
}

pub fn cmd_synth(args: &RunArgs) -> CliResult<PathBuf> {
    let cfg = LoadedConfig::load(&args.config)?;
    let proto = cfg.synthesize(args.override_gain_bound)?;
    let dir = cfg.output_dir(args.out.as_deref());
    create_dir(&dir)?;
    let path = dir.join("protocol.json");
    write_json(&path, &proto)?;
    print_gain_info(&proto);
    println!("wrote {}", path.display());
    Ok(path)
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub protocol: ProtocolKind,
    pub graph: String,
    pub agents: usize,
    pub seed: u64,
    pub gain: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_bound: Option<f64>,
    pub horizon: f64,
    pub dt: f64,
    #[serde(flatten)]
    pub sync: SyncSummary,
    pub synchronized: bool,
}

pub fn cmd_simulate(args: &RunArgs) -> CliResult<RunSummary> {
    let cfg = LoadedConfig::load(&args.config)?;
    let proto = cfg.protocol(args)?;
    let dir = cfg.output_dir(args.out.as_deref());
    simulate_into(&cfg, proto, &dir)
}

fn simulate_into(cfg: &LoadedConfig, proto: Protocol, dir: &Path) -> CliResult<RunSummary> {
    let scenario = cfg.scenario(proto)?;
    let tr = netsim::simulate(&scenario)?;
    create_dir(dir)?;
    write_json(dir.join("protocol.json"), &scenario.protocol)?;
    netsim::write_trajectory_csv(&tr, File::create(dir.join("trajectory.csv")).map_err(scalesync_core::Error::from)?)?;
    netsim::write_sync_error_csv(&tr, File::create(dir.join("sync_error.csv")).map_err(scalesync_core::Error::from)?)?;
    netsim::write_error_states_csv(&tr, File::create(dir.join("error_states.csv")).map_err(scalesync_core::Error::from)?)?;
    let sync = netsim::sync_metrics(&tr, SYNC_THRESHOLD);
    let summary = RunSummary {
        protocol: scenario.protocol.kind(),
        graph: cfg.config.graph.clone(),
        agents: scenario.graph.node_count(),
        seed: cfg.config.simulation.seed,
        gain: scenario.protocol.gain(),
        gain_bound: scenario.protocol.gain_bound(),
        horizon: scenario.horizon,
        dt: scenario.dt,
        synchronized: sync.time_to_threshold.is_some(),
        sync,
    };
    write_json(dir.join("summary.json"), &summary)?;
    println!(
        "{}: sync error {:.3e} -> {:.3e} (ratio {:.3e}) at t = {}",
        dir.display(),
        summary.sync.initial_sync_error,
        summary.sync.final_sync_error,
        summary.sync.ratio,
        summary.sync.final_time
    );
    Ok(summary)
}

pub fn cmd_sweep(args: &RunArgs) -> CliResult<SweepReport> {
    let cfg = LoadedConfig::load(&args.config)?;
    let proto = cfg.protocol(args)?;
    let report = verify::sweep(&proto)?;
    let dir = cfg.output_dir(args.out.as_deref());
    create_dir(&dir)?;
    write_json(dir.join("sweep.json"), &report)?;
    print_sweep(&report);
    if report.pass {
        Ok(report)
    } else {
        Err(CliError::Failed(format!(
            "sweep failed at {} of {} points; worst margin {:.3e} at lambda = {}",
            report.failing_points,
            report.grid.len(),
            report.worst_margin,
            report.worst_lambda
        )))
    }
}

/// One row per ring (discrete time) or per real part (continuous time).
fn print_sweep(r: &SweepReport) {
    let key = |l: &Complex64| match r.time_domain {
        TimeDomain::Continuous => l.re,
        TimeDomain::Discrete => l.norm(),
    };
    let label = match r.time_domain {
        TimeDomain::Continuous => "re(lambda)",
        TimeDomain::Discrete => "|lambda|",
    };
    println!("{label:>12} {:>7} {:>8} {:>12}  worst lambda", "points", "failing", "worst");
    let mut i = 0;
    while i < r.grid.len() {
        let k = key(&r.grid[i]);
        let mut j = i;
        let (mut worst, mut at, mut failing) = (f64::NEG_INFINITY, r.grid[i], 0);
        while j < r.grid.len() && (key(&r.grid[j]) - k).abs() <= 1e-9 * k.abs().max(1.0) {
            if r.margins[j] > worst || r.margins[j].is_nan() {
                worst = r.margins[j];
                at = r.grid[j];
            }
            failing += usize::from(!(r.margins[j] < 0.0));
            j += 1;
        }
        println!("{k:>12.4e} {:>7} {failing:>8} {worst:>12.3e}  {at:.4}", j - i);
        i = j;
    }
    println!(
        "{}: worst margin {:.3e} at lambda = {:.4}",
        if r.pass { "PASS" } else { "FAIL" },
        r.worst_margin,
        r.worst_lambda
    );
}

pub fn cmd_batch(configs: &[PathBuf], override_flag: bool, jobs: Option<usize>) -> CliResult<()> {
    let run_all = || {
        configs
            .par_iter()
            .map(|c| {
                let args = RunArgs { config: c.clone(), override_gain_bound: override_flag, protocol: None, out: None };
                (c, cmd_simulate(&args))
            })
            .collect::<Vec<_>>()
    };
    let results = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Input(format!("cannot start {n} workers: {e}")))?
            .install(run_all),
        None => run_all(),
    };
    let mut worst: Option<CliError> = None;
    for (c, r) in results {
        match r {
            Ok(s) => println!("{}: ok (synchronized: {})", c.display(), s.synchronized),
            Err(e) => {
                println!("{}: error (exit {}): {e}", c.display(), e.exit_code());
                if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                    worst = Some(e);
                }
            }
        }
    }
    worst.map_or(Ok(()), Err)
}
