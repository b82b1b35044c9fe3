//! Figure presets: a sweep over convictions and stubbornness for the linear
//! and nonlinear anchored models on two networks, written as per-panel CSVs
//! plus a manifest.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, GraphSpec, ModelKind, VectorSpec, SCHEMA_VERSION};
use crate::dynamics::{integrate, IntegratorConfig, Method, Trajectory};
use crate::error::{Error, Result};
use crate::graph::{save_edge_list, Indexing};

/// Per-group mean and (population) standard deviation over time.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub group: usize,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl GroupStats {
    pub fn final_mean(&self) -> f64 {
        *self.mean.last().unwrap_or(&f64::NAN)
    }
}

pub fn group_stats(traj: &Trajectory, labels: &[usize]) -> Vec<GroupStats> {
    let n_groups = labels.iter().copied().max().map_or(0, |g| g + 1);
    (0..n_groups)
        .filter(|g| labels.contains(g))
        .map(|g| {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == g).collect();
            let count = members.len() as f64;
            let (mean, std) = traj
                .states
                .iter()
                .map(|x| {
                    let m = members.iter().map(|&i| x[i]).sum::<f64>() / count;
                    let var = members.iter().map(|&i| (x[i] - m).powi(2)).sum::<f64>() / count;
                    (m, var.sqrt())
                })
                .unzip();
            GroupStats { group: g, times: traj.times.clone(), mean, std }
        })
        .collect()
}

/// Long format `t,group,mean,std`, ordered by time then group.
pub fn write_group_stats_csv<W: Write>(stats: &[GroupStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "group", "mean", "std"])?;
    let len = stats.first().map_or(0, |s| s.times.len());
    for k in 0..len {
        for s in stats {
            w.write_record([s.times[k].to_string(), s.group.to_string(), s.mean[k].to_string(), s.std[k].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Fig1,
    Fig2,
    Fig3,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
        }
    }
}

/// Conviction/stubbornness pairs `(κ, δ)` in column order.
pub const SWEEP: [(f64, f64); 4] = [(10.0, 0.5), (10.0, 2.0), (100.0, 0.5), (100.0, 2.0)];
pub const MODELS: [ModelKind; 2] = [ModelKind::LinearFj, ModelKind::Nfj];

#[derive(Debug, Clone, PartialEq)]
pub struct PresetOptions {
    pub n: usize,
    pub seed: u64,
    pub t_end: f64,
    /// Edge probability of the random graph (fig1) or of the periphery (fig2).
    pub p_e: Option<f64>,
    pub p_in: f64,
    pub p_out: f64,
    pub jazz: Option<PathBuf>,
    pub college: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for PresetOptions {
    fn default() -> Self {
        PresetOptions {
            n: 150,
            seed: 1,
            t_end: 100.0,
            p_e: None,
            p_in: 0.2,
            p_out: 0.02,
            jazz: None,
            college: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// One cell of the panel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSpec {
    pub graph_name: String,
    pub row: usize,
    pub col: usize,
    pub kappa: f64,
    pub delta: f64,
    pub config: ExperimentConfig,
}

impl PanelSpec {
    pub fn stem(&self) -> String {
        format!("{}_{}_k{}_d{}", self.graph_name, self.config.model.name(), self.kappa, self.delta)
    }
}

/// Panels cover the whole window `[0, t_end]`, so the stopping test is
/// effectively disabled.
pub fn preset_integrator(t_end: f64) -> IntegratorConfig {
    IntegratorConfig { t_end, method: Method::Rk4Adaptive, stop_tol: f64::MIN_POSITIVE, ..Default::default() }
}

fn preset_graphs(preset: Preset, opts: &PresetOptions) -> Result<Vec<(String, GraphSpec, bool)>> {
    let n = opts.n;
    Ok(match preset {
        Preset::Fig1 => {
            let first = super::config::default_split(n);
            vec![
                ("er".into(), GraphSpec::Er { n, p: opts.p_e.unwrap_or(0.08), seed: None }, false),
                (
                    "sbm".into(),
                    GraphSpec::Sbm { sizes: vec![first, n - first], p_in: opts.p_in, p_out: opts.p_out, seed: None },
                    false,
                ),
            ]
        }
        Preset::Fig2 => vec![
            ("core_periphery".into(), GraphSpec::CorePeriphery { n, p_e: opts.p_e.unwrap_or(0.01), seed: None }, false),
            ("complete".into(), GraphSpec::Complete { n }, false),
        ],
        Preset::Fig3 => {
            let (Some(jazz), Some(college)) = (&opts.jazz, &opts.college) else {
                return Err(Error::Config("fig3 needs both --jazz and --college dataset paths".into()));
            };
            let absolute = |p: &Path| fs::canonicalize(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())));
            vec![
                (
                    "jazz".into(),
                    GraphSpec::EdgeList { path: absolute(jazz)?, indexing: Indexing::One, symmetrize: true, ignore_weights: true },
                    true,
                ),
                (
                    "college_msg".into(),
                    GraphSpec::EdgeList {
                        path: absolute(college)?,
                        indexing: Indexing::One,
                        symmetrize: true,
                        ignore_weights: true,
                    },
                    true,
                ),
            ]
        }
    })
}

/// The `graphs × models × 4` panel configs of a preset.
pub fn preset_panels(preset: Preset, opts: &PresetOptions) -> Result<Vec<PanelSpec>> {
    let mut panels = Vec::new();
    for (row, (graph_name, graph, randomize)) in preset_graphs(preset, opts)?.into_iter().enumerate() {
        for model in MODELS {
            for (col, &(kappa, delta)) in SWEEP.iter().enumerate() {
                let mut cfg = ExperimentConfig::new(graph.clone(), model);
                cfg.name = Some(format!("{}/{graph_name}", preset.name()));
                cfg.u = VectorSpec::TwoGroup { first: kappa, rest: 1.0, split: None, randomize };
                cfg.sigma = VectorSpec::TwoGroup { first: delta, rest: 1.0, split: None, randomize };
                cfg.p = 1.0;
                cfg.seed = opts.seed;
                cfg.integrator = preset_integrator(opts.t_end);
                cfg.output_dir = opts.output_dir.clone();
                panels.push(PanelSpec { graph_name: graph_name.clone(), row, col, kappa, delta, config: cfg });
            }
        }
    }
    Ok(panels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEntry {
    pub name: String,
    pub row: usize,
    pub edge_list: String,
    pub n: usize,
    pub edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelEntry {
    pub graph: String,
    pub model: ModelKind,
    pub kappa: f64,
    pub delta: f64,
    pub row: usize,
    pub col: usize,
    pub group_stats: String,
    pub summary: String,
    pub final_time: f64,
    /// `‖field‖∞` at `final_time`.
    pub final_field_norm: f64,
    pub config: ExperimentConfig,
}

/// Index of an experiment's outputs. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub preset: Preset,
    pub rows: usize,
    pub cols: usize,
    pub models: Vec<ModelKind>,
    pub graphs: Vec<GraphEntry>,
    pub panels: Vec<PanelEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Outcome of one panel, kept in memory for callers that inspect results.
#[derive(Debug, Clone)]
pub struct PanelResult {
    pub spec: PanelSpec,
    pub stats: Vec<GroupStats>,
    pub trajectory: Trajectory,
}

/// Runs one panel without touching the file system.
pub fn run_panel(spec: &PanelSpec) -> Result<PanelResult> {
    let inst = spec.config.instantiate()?;
    let trajectory = integrate(&inst.net, &inst.model, &inst.x0, &spec.config.integrator)?;
    let stats = group_stats(&trajectory, &inst.groups);
    Ok(PanelResult { spec: spec.clone(), stats, trajectory })
}

pub fn run_panels(panels: &[PanelSpec]) -> Result<Vec<PanelResult>> {
    panels.par_iter().map(run_panel).collect()
}

fn create_in<P: AsRef<Path>>(path: P) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Runs a preset and writes its artifacts into `opts.output_dir`.
///
/// Panels run in parallel into a staging directory; nothing is moved into
/// place unless every panel succeeds, and the manifest is written last.
pub fn run_experiment(preset: Preset, opts: &PresetOptions) -> Result<Manifest> {
    let panels = preset_panels(preset, opts)?;
    let out = &opts.output_dir;
    fs::create_dir_all(out)?;
    let staging = out.join(format!(".staging-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;

    let result = stage_experiment(preset, &panels, &staging);
    let manifest = match result {
        Ok(m) => m,
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
    };
    for entry in fs::read_dir(&staging)? {
        let entry = entry?;
        fs::rename(entry.path(), out.join(entry.file_name()))?;
    }
    fs::remove_dir(&staging)?;

    let tmp = out.join(format!("{MANIFEST_FILE}.tmp"));
    fs::write(&tmp, serde_json::to_string_pretty(&manifest)?)?;
    fs::rename(&tmp, out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn stage_experiment(preset: Preset, panels: &[PanelSpec], staging: &Path) -> Result<Manifest> {
    let mut graphs = Vec::new();
    for spec in panels.iter().filter(|s| s.col == 0 && s.config.model == MODELS[0]) {
        let net = spec.config.graph.build(spec.config.seed)?;
        let file = format!("{}.edges", spec.graph_name);
        save_edge_list(&net, staging.join(&file))?;
        graphs.push(GraphEntry { name: spec.graph_name.clone(), row: spec.row, edge_list: file, n: net.n(), edges: net.edge_count() });
    }

    let entries: Vec<PanelEntry> = panels
        .par_iter()
        .map(|spec| {
            let res = run_panel(spec)?;
            let stem = spec.stem();
            let group_file = format!("{stem}_groups.csv");
            let summary_file = format!("{stem}_summary.csv");
            write_group_stats_csv(&res.stats, create_in(staging.join(&group_file))?)?;
            res.trajectory.write_summary_csv(create_in(staging.join(&summary_file))?)?;
            log::info!("panel {stem}: t = {}, |f| = {:e}", res.trajectory.final_time(), res.trajectory.final_field_norm);
            Ok(PanelEntry {
                graph: spec.graph_name.clone(),
                model: spec.config.model,
                kappa: spec.kappa,
                delta: spec.delta,
                row: spec.row,
                col: spec.col,
                group_stats: group_file,
                summary: summary_file,
                final_time: res.trajectory.final_time(),
                final_field_norm: res.trajectory.final_field_norm,
                config: spec.config.clone(),
            })
        })
        .collect::<Result<_>>()?;

    Ok(Manifest {
        schema: SCHEMA_VERSION,
        preset,
        rows: graphs.len(),
        cols: SWEEP.len(),
        models: MODELS.to_vec(),
        graphs,
        panels: entries,
    })
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let m: Manifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    if m.schema != SCHEMA_VERSION {
        return Err(Error::Config(format!("unsupported manifest schema {}", m.schema)));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::complete_graph;
    use crate::models::Model;

    #[test]
    fn group_stats_by_hand() {
        let traj = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![vec![1.0, 3.0, 5.0], vec![2.0, 2.0, 8.0]],
            energy: None,
            spread: vec![4.0, 6.0],
            converged: false,
            final_field_norm: 0.0,
            steps: 1,
            rejected_steps: 0,
        };
        let stats = group_stats(&traj, &[0, 0, 1]);
        assert_eq!(stats.len(), 2);
        assert_eq!(stats[0].mean, vec![2.0, 2.0]);
        assert_eq!(stats[0].std, vec![1.0, 0.0]);
        assert_eq!(stats[1].mean, vec![5.0, 8.0]);
        let mut buf = Vec::new();
        write_group_stats_csv(&stats, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,group,mean,std\n0,0,2,1\n0,1,5,0\n1,0,2,0\n1,1,8,0\n");
    }

    #[test]
    fn preset_panel_grid() {
        let opts = PresetOptions { n: 30, ..Default::default() };
        let panels = preset_panels(Preset::Fig1, &opts).unwrap();
        assert_eq!(panels.len(), 2 * 2 * 4);
        let fig2 = preset_panels(Preset::Fig2, &opts).unwrap();
        assert_eq!(fig2.len(), 16);
        assert!(matches!(preset_panels(Preset::Fig3, &opts), Err(Error::Config(_))));
        match &panels[0].config.graph {
            GraphSpec::Er { n, p, .. } => assert_eq!((*n, *p), (30, 0.08)),
            g => panic!("{g:?}"),
        }
        match &panels[8].config.graph {
            GraphSpec::Sbm { sizes, .. } => assert_eq!(sizes, &vec![10, 20]),
            g => panic!("{g:?}"),
        }
    }

    #[test]
    fn panel_runs_on_small_complete_graph() {
        let mut opts = PresetOptions { n: 12, t_end: 5.0, ..Default::default() };
        opts.p_e = Some(0.3);
        let panels = preset_panels(Preset::Fig2, &opts).unwrap();
        let res = run_panel(&panels[15]).unwrap();
        assert_eq!(res.stats.len(), 2);
        assert!(res.stats.iter().all(|s| s.std.iter().all(|&v| v >= 0.0)));
        let inst = panels[15].config.instantiate().unwrap();
        assert!(matches!(inst.model, Model::Nfj(_)));
        assert_eq!(inst.net, complete_graph(12).unwrap());
    }
}
