//! Command-line front end.
//!
//! Subcommands: `generate` (graphs as edge lists), `simulate` (trajectory
//! CSVs), `solve` (steady-state certificate JSON), `experiment` (figure
//! presets) and `verify` (invariant checks on one config). Exit code 0 means
//! success, 2 a validation error and 3 a numerical failure or a run that
//! did not converge.

pub mod config;
pub mod experiment;
pub mod verify;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, iterate_discrete, IntegratorConfig, Method};
use crate::equilibrium::{
    leading_pivots, linear_fj_equilibrium, linear_fj_jacobian, matrix_stability, multistart_uniqueness,
    taylor_equilibrium, taylor_jacobian_check, verify_nash, EquilibriumCertificate,
};
use crate::error::{Error, Result};
use crate::graph::{self, degree_data, write_edge_list, Network};
use crate::models::{discrete_step_fj, Model};
use config::{ExperimentConfig, ModelKind};
use experiment::{group_stats, run_experiment, write_group_stats_csv, Preset, PresetOptions};

pub const THREADS_ENV: &str = "OPFLOW_THREADS";

#[derive(Debug, Parser)]
#[command(name = "opflow", version, about = "Opinion dynamics on networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a generated graph as an edge list.
    Generate {
        #[command(subcommand)]
        graph: GenerateCmd,
        /// Output file; stdout when omitted.
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Integrate a configured model and write trajectory CSVs.
    Simulate(RunArgs),
    /// Solve for the steady state and write its certificate.
    Solve(RunArgs),
    /// Run a figure preset.
    Experiment(ExperimentArgs),
    /// Run the invariant checks on a config.
    Verify(RunArgs),
}

#[derive(Debug, Subcommand)]
pub enum GenerateCmd {
    Er {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Sbm {
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long)]
        pin: f64,
        #[arg(long)]
        pout: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    CorePeriphery {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        pe: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Complete {
        #[arg(long)]
        n: usize,
    },
}

/// A config file plus flags that override its values.
#[derive(Debug, Args)]
pub struct RunArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub adaptive: bool,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub discrete: bool,
}

impl RunArgs {
    pub fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
            cfg.solver.seed = s;
        }
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(m) = self.model {
            cfg.model = m;
        }
        if let Some(t) = self.t_end {
            cfg.integrator.t_end = t;
        }
        if let Some(dt) = self.dt {
            cfg.integrator.dt = dt;
        }
        if self.adaptive {
            cfg.integrator.method = Method::Rk4Adaptive;
        }
        if let Some(s) = self.starts {
            cfg.solver.starts = s;
        }
        if self.discrete {
            cfg.discrete = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub preset: Preset,
    #[arg(long, default_value_t = 150)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 100.0)]
    pub t_end: f64,
    /// Edge probability of the random graph (fig1) or periphery (fig2).
    #[arg(long)]
    pub pe: Option<f64>,
    #[arg(long, default_value_t = 0.2)]
    pub pin: f64,
    #[arg(long, default_value_t = 0.02)]
    pub pout: f64,
    #[arg(long)]
    pub jazz: Option<PathBuf>,
    #[arg(long)]
    pub college: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub output_dir: PathBuf,
}

/// Caps the global thread pool at `OPFLOW_THREADS` when it is set.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| Error::Config(format!("{THREADS_ENV}={v:?} is not a count")))?;
        if n == 0 {
            return Err(Error::Config(format!("{THREADS_ENV} must be positive")));
        }
        // Fails only if a pool already exists, which leaves its size in place.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    init_threads()?;
    match cli.command {
        Command::Generate { graph, out } => cmd_generate(&graph, out.as_deref()),
        Command::Simulate(args) => cmd_simulate(&args.load()?),
        Command::Solve(args) => cmd_solve(&args.load()?),
        Command::Experiment(args) => {
            let opts = PresetOptions {
                n: args.n,
                seed: args.seed,
                t_end: args.t_end,
                p_e: args.pe,
                p_in: args.pin,
                p_out: args.pout,
                jazz: args.jazz,
                college: args.college,
                output_dir: args.output_dir,
            };
            let manifest = run_experiment(args.preset, &opts)?;
            println!(
                "{}: {} panels ({} graphs x {} models x {}) in {}",
                args.preset.name(),
                manifest.panels.len(),
                manifest.rows,
                manifest.models.len(),
                manifest.cols,
                opts.output_dir.display()
            );
            Ok(0)
        }
        Command::Verify(args) => cmd_verify(&args.load()?),
    }
}

pub fn generate(graph: &GenerateCmd) -> Result<Network> {
    match graph {
        GenerateCmd::Er { n, p, seed } => graph::erdos_renyi(*n, *p, *seed),
        GenerateCmd::Sbm { sizes, pin, pout, seed } => graph::stochastic_block_model(sizes, *pin, *pout, *seed),
        GenerateCmd::CorePeriphery { n, pe, seed } => graph::core_periphery(*n, *pe, *seed),
        GenerateCmd::Complete { n } => graph::complete_graph(*n),
    }
}

pub fn cmd_generate(graph: &GenerateCmd, out: Option<&Path>) -> Result<i32> {
    let net = generate(graph)?;
    let fiedler = degree_data(&net).fiedler;
    let summary = format!("n = {}, edges = {}, fiedler = {fiedler}", net.n(), net.edge_count());
    match out {
        Some(path) => {
            graph::save_edge_list(&net, path)?;
            println!("{summary}");
        }
        None => {
            write_edge_list(&net, std::io::stdout().lock())?;
            eprintln!("{summary}");
        }
    }
    Ok(0)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const GROUPS_FILE: &str = "groups.csv";
pub const CERTIFICATE_FILE: &str = "certificate.json";
pub const VERIFY_FILE: &str = "verify.json";

/// Writes `trajectory.csv`, `summary.csv` and `groups.csv` into the
/// config's output directory. Exit code 3 when a continuous run stopped at
/// `t_end` without converging.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<i32> {
    let inst = cfg.instantiate()?;
    let traj = if cfg.discrete {
        iterate_discrete(&inst.net, &inst.model, &inst.x0, cfg.steps)?
    } else {
        integrate(&inst.net, &inst.model, &inst.x0, &cfg.integrator)?
    };
    fs::create_dir_all(&cfg.output_dir)?;
    traj.write_csv(create(&cfg.output_dir.join(TRAJECTORY_FILE))?)?;
    traj.write_summary_csv(create(&cfg.output_dir.join(SUMMARY_FILE))?)?;
    write_group_stats_csv(&group_stats(&traj, &inst.groups), create(&cfg.output_dir.join(GROUPS_FILE))?)?;
    println!(
        "{}: t = {}, steps = {}, converged = {}, final spread = {:e}",
        inst.model.name(),
        traj.final_time(),
        traj.steps,
        traj.converged,
        traj.spread.last().copied().unwrap_or(0.0)
    );
    Ok(if cfg.discrete || traj.converged { 0 } else { 3 })
}

/// Certificate of a linear model's steady state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCertificate {
    pub model: ModelKind,
    pub x_star: Vec<f64>,
    pub residual: f64,
    pub jac_min_eig: f64,
    pub m_matrix_ok: bool,
    /// Sup-distance between the closed form and an independent route to the
    /// same point (discrete iteration or the flow's limit).
    pub reference_discrepancy: f64,
    pub reference: String,
    pub params_echo: serde_json::Value,
    pub seed: u64,
}

/// Writes `certificate.json`. Exit code 3 unless the state is certified.
pub fn cmd_solve(cfg: &ExperimentConfig) -> Result<i32> {
    let inst = cfg.instantiate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join(CERTIFICATE_FILE);
    let echo = serde_json::to_value(cfg)?;
    match &inst.model {
        Model::Nfj(params) => {
            let mut solver = cfg.solver.clone();
            solver.seed = cfg.seed;
            let mut cert: EquilibriumCertificate = multistart_uniqueness(&inst.net, params, &solver)?;
            let nash = verify_nash(&inst.net, params, &cert.x_star, cfg.nash_grid);
            if let Err(e) = &nash {
                log::warn!("{e}");
            }
            cert.nash_ok = Some(nash.is_ok());
            cert.params_echo = Some(echo);
            cert.seed = Some(cfg.seed);
            fs::write(&path, serde_json::to_string_pretty(&cert)?)?;
            println!(
                "residual = {:e}, jac_min_eig = {:e}, m_matrix_ok = {}, nash_ok = {}, agreement = {:e}",
                cert.residual,
                cert.jac_min_eig,
                cert.m_matrix_ok,
                nash.is_ok(),
                cert.multistart_agreement.unwrap_or(0.0)
            );
            Ok(if cert.m_matrix_ok && nash.is_ok() && cert.jac_min_eig > 0.0 { 0 } else { 3 })
        }
        Model::Taylor(params) => {
            let x = taylor_equilibrium(&inst.net, params)?;
            let a = graph::normalized_adjacency(&inst.net)?;
            let n = x.len();
            let jac = nalgebra::DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - params.lambda[i] * a[(i, j)]);
            let step = discrete_step_fj(&inst.net, params, &x)?;
            let residual = sup_gap(&step, &x);
            let jac_min_eig = taylor_jacobian_check(&inst.net, params)?;
            let offdiag_ok = (0..n).all(|i| (0..n).all(|j| i == j || jac[(i, j)] <= 0.0));
            let m_matrix_ok = offdiag_ok && leading_pivots(&jac).iter().all(|&p| p > 1e-10);
            let (reference, reference_discrepancy) = taylor_reference(&inst, params, &x)?;
            let cert = LinearCertificate {
                model: ModelKind::Taylor,
                x_star: x,
                residual,
                jac_min_eig,
                m_matrix_ok,
                reference_discrepancy,
                reference,
                params_echo: echo,
                seed: cfg.seed,
            };
            finish_linear(&path, &cert)
        }
        Model::LinearFj(params) => {
            let x = linear_fj_equilibrium(&inst.net, params)?;
            let jac = linear_fj_jacobian(&inst.net, params);
            let r = &jac * nalgebra::DVector::from_column_slice(&x);
            let residual =
                (0..x.len()).fold(0.0, |m: f64, i| m.max((r[i] - params.sigma[i] * params.u[i]).abs()));
            let st = matrix_stability(&jac);
            let long = IntegratorConfig { method: Method::Rk4Adaptive, stop_tol: 1e-13, t_end: 1e5, ..cfg.integrator.clone() };
            let traj = integrate(&inst.net, &inst.model, &inst.x0, &long)?;
            let cert = LinearCertificate {
                model: ModelKind::LinearFj,
                reference_discrepancy: sup_gap(&x, traj.final_state()),
                x_star: x,
                residual,
                jac_min_eig: st.min_eig,
                m_matrix_ok: st.m_matrix_ok,
                reference: "flow_limit".into(),
                params_echo: echo,
                seed: cfg.seed,
            };
            finish_linear(&path, &cert)
        }
        Model::Abelson | Model::Laplacian => Err(Error::InvalidParameter(format!(
            "the {} model has a one-parameter family of steady states; use simulate",
            inst.model.name()
        ))),
    }
}

/// Runs the discrete protocol to its limit when `λ < 1` somewhere, which
/// makes it a contraction on a connected graph.
fn taylor_reference(inst: &config::Instance, params: &crate::models::TaylorParams, x: &[f64]) -> Result<(String, f64)> {
    let scale = sup(x).max(1.0);
    let mut y = inst.x0.clone();
    for _ in 0..1_000_000 {
        let next = discrete_step_fj(&inst.net, params, &y)?;
        let change = sup_gap(&next, &y);
        y = next;
        if change <= 1e-15 * scale {
            break;
        }
    }
    Ok(("discrete_iteration".into(), sup_gap(&y, x)))
}

fn finish_linear(path: &Path, cert: &LinearCertificate) -> Result<i32> {
    fs::write(path, serde_json::to_string_pretty(cert)?)?;
    println!(
        "residual = {:e}, jac_min_eig = {:e}, m_matrix_ok = {}, {} discrepancy = {:e}",
        cert.residual, cert.jac_min_eig, cert.m_matrix_ok, cert.reference, cert.reference_discrepancy
    );
    Ok(if cert.jac_min_eig > 0.0 && cert.m_matrix_ok { 0 } else { 3 })
}

fn sup(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Prints one line per check and writes `verify.json`. Exit code 3 if any
/// check fails.
pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<i32> {
    let checks = verify::run_checks(cfg)?;
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join(VERIFY_FILE), serde_json::to_string_pretty(&checks)?)?;
    let mut out = std::io::stdout().lock();
    for c in &checks {
        writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
    }
    Ok(if checks.iter().all(|c| c.passed) { 0 } else { 3 })
}
