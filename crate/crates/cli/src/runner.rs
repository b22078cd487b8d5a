//! Engine execution and artifact emission.

use std::fs;
use std::path::{Path, PathBuf};

use clusterbound::analysis::{collapse, phase_classify, CollapsePoint, CollapseResult, SearchBox};
use clusterbound::boundary::{circuit_boundary, evolve, CircuitOptions, RowDiagnostics};
use clusterbound::ising::{boltzmann_z, cluster_to_ising};
use clusterbound::lattice::{Lattice, LatticeKind, LatticeSpec};
use clusterbound::measure::{measured_weight, sample_layout, Concrete, OutcomePolicy, Weight};
use clusterbound::mps::{prefix_renyi2, renyi2_profile, TensorTrain};
use clusterbound::oracle::{dense_boundary, dense_full_overlap, dense_renyi2};
use clusterbound::stabilizer::{
    ring_interval, site_basis, site_coin, sliding_with, sweep as stab_sweep, Accumulator, Outcomes, StabModel,
    Stabilizer, Tableau, UnsignedTableau,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, Engine, RunConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trajectory {trajectory}: {msg}")]
    Trajectory { trajectory: u64, msg: String },
    #[error("{0}")]
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn rt(e: impl std::fmt::Display) -> RunError {
    RunError::Runtime(e.to_string())
}

fn traj_err(trajectory: u64) -> impl Fn(String) -> RunError {
    move |msg| RunError::Trajectory { trajectory, msg }
}

fn name(lat: &Lattice) -> String {
    match lat.spec.kind {
        LatticeKind::Square => "square".into(),
        LatticeKind::Lieb => format!("lieb-{}", serde_json::to_value(lat.spec.bottom).unwrap().as_str().unwrap()),
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(rt)?;
    for r in rows {
        w.serialize(r).map_err(rt)?;
    }
    w.flush().map_err(rt)
}

struct Out<'a> {
    cfg: &'a RunConfig,
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Out<'_> {
    fn csv<T: Serialize>(&mut self, stem: &str, rows: &[T]) -> Result<(), RunError> {
        let path = self.dir.join(self.cfg.artifact(stem, "csv"));
        write_csv(&path, rows)?;
        self.written.push(path);
        Ok(())
    }

    fn text(&mut self, stem: &str, ext: &str, body: &str) -> Result<(), RunError> {
        let path = self.dir.join(self.cfg.artifact(stem, ext));
        fs::write(&path, body).map_err(rt)?;
        self.written.push(path);
        Ok(())
    }
}

fn output<'a>(cfg: &'a RunConfig, out: Option<&Path>) -> Result<Out<'a>, RunError> {
    let dir = out.map(Path::to_path_buf).or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("results"));
    fs::create_dir_all(&dir).map_err(rt)?;
    Ok(Out { cfg, dir, written: Vec::new() })
}

/// Per-row diagnostics of a tensor-engine trajectory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RowRecord {
    pub lattice: String,
    pub engine: String,
    #[serde(rename = "Lx")]
    pub lx: usize,
    #[serde(rename = "Ly")]
    pub ly: usize,
    pub trajectory: u64,
    pub seed: u64,
    pub row: usize,
    pub max_bond: usize,
    pub discarded_weight: f64,
    pub log_norm_delta: f64,
    #[serde(rename = "S2_half")]
    pub s2_half: Option<f64>,
}

/// Entropy of the final boundary state at one cut.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntropyRecord {
    pub lattice: String,
    pub engine: String,
    #[serde(rename = "Lx")]
    pub lx: usize,
    #[serde(rename = "Ly")]
    pub ly: usize,
    pub trajectory: u64,
    pub seed: u64,
    pub cut: usize,
    pub entropy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IsingRecord {
    pub lattice: String,
    #[serde(rename = "Lx")]
    pub lx: usize,
    #[serde(rename = "Ly")]
    pub ly: usize,
    pub trajectory: u64,
    pub seed: u64,
    pub ln_abs_z: f64,
    pub arg_z: f64,
    pub ln_abs_overlap: f64,
    pub arg_overlap: f64,
    pub ln_ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub lattice: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub p_x: f64,
    pub p_y: f64,
    pub p_z: f64,
    pub trajectory: u64,
    pub seed: u64,
    pub s_half: f64,
    pub i_ab: f64,
}

/// Aggregated tensor-engine sweep row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AngleRow {
    pub lattice: String,
    pub kind: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub theta_spin: f64,
    pub theta_coupling: f64,
    pub observable: String,
    pub region: String,
    pub mean: f64,
    pub sem: f64,
    pub n_traj: u64,
    pub seed: u64,
    pub max_bond: usize,
    pub discarded_weight: f64,
}

/// Boundary state of one tensor-engine trajectory.
pub struct TensorRun {
    pub state: TensorTrain,
    pub rows: Vec<RowDiagnostics>,
}

/// Tensor path (`mps`) or effective circuit (`circuit`) for one concrete layout.
pub fn tensor_run(cfg: &RunConfig, lat: &Lattice, layout: &Concrete) -> Result<TensorRun, String> {
    let policy = cfg.policy();
    let n_boundary = lat.boundary_sites().len();
    match cfg.engine {
        Engine::Mps => {
            let (state, rows) = evolve(lat, layout, &policy, &[n_boundary / 2]).map_err(|e| e.to_string())?;
            Ok(TensorRun { state, rows })
        }
        _ => {
            let cuts = match lat.spec.kind {
                LatticeKind::Square => vec![lat.spec.lx / 2],
                LatticeKind::Lieb => Vec::new(),
            };
            let (state, rows, _) =
                circuit_boundary(lat, layout, &policy, &cuts, CircuitOptions::default()).map_err(|e| e.to_string())?;
            Ok(TensorRun { state, rows })
        }
    }
}

fn concrete(cfg: &RunConfig, lat: &Lattice, t: u64) -> Result<Concrete, RunError> {
    sample_layout(&cfg.layout(lat, t), t).map_err(|e| traj_err(t)(e.to_string()))
}

fn engine_name(cfg: &RunConfig) -> String {
    serde_json::to_value(cfg.engine).unwrap().as_str().unwrap().to_string()
}

/// Execute a `run` configuration; returns the written artifact paths.
pub fn run(cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<PathBuf>, RunError> {
    let lat = cfg.validate()?;
    let mut o = output(cfg, out)?;
    let n_traj = cfg.n_traj();
    let (lx, ly, seed) = (lat.spec.lx, lat.spec.ly, cfg.seed);
    let lname = name(&lat);
    let engine = engine_name(cfg);
    match cfg.engine {
        Engine::Mps | Engine::Circuit => {
            let runs: Vec<(Vec<RowRecord>, Vec<EntropyRecord>)> = (0..n_traj)
                .into_par_iter()
                .map(|t| {
                    let layout = concrete(cfg, &lat, t)?;
                    let r = tensor_run(cfg, &lat, &layout).map_err(traj_err(t))?;
                    let rows = r
                        .rows
                        .iter()
                        .map(|d| RowRecord {
                            lattice: lname.clone(),
                            engine: engine.clone(),
                            lx,
                            ly,
                            trajectory: t,
                            seed,
                            row: d.row,
                            max_bond: d.max_bond,
                            discarded_weight: d.discarded_weight,
                            log_norm_delta: d.log_norm_delta,
                            s2_half: d.entropies.first().map(|e| e.1),
                        })
                        .collect();
                    let prof = renyi2_profile(&r.state).map_err(|e| traj_err(t)(e.to_string()))?;
                    let ents = prof
                        .into_iter()
                        .enumerate()
                        .map(|(k, s)| EntropyRecord {
                            lattice: lname.clone(),
                            engine: engine.clone(),
                            lx,
                            ly,
                            trajectory: t,
                            seed,
                            cut: k + 1,
                            entropy: s,
                        })
                        .collect();
                    Ok((rows, ents))
                })
                .collect::<Result<_, RunError>>()?;
            let (rows, ents): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
            o.csv("rows", &rows.concat())?;
            o.csv("entropy", &ents.concat())?;
        }
        Engine::Oracle => {
            let ents: Vec<Vec<EntropyRecord>> = (0..n_traj)
                .into_par_iter()
                .map(|t| {
                    let layout = concrete(cfg, &lat, t)?;
                    let (st, _) = dense_boundary(&lat, &layout).map_err(|e| traj_err(t)(e.to_string()))?;
                    let n = st.n_qubits();
                    (1..n)
                        .map(|c| {
                            let region: Vec<usize> = (0..c).collect();
                            let s = dense_renyi2(&st, &region).map_err(|e| traj_err(t)(e.to_string()))?;
                            Ok(EntropyRecord {
                                lattice: lname.clone(),
                                engine: engine.clone(),
                                lx,
                                ly,
                                trajectory: t,
                                seed,
                                cut: c,
                                entropy: s,
                            })
                        })
                        .collect()
                })
                .collect::<Result<_, RunError>>()?;
            o.csv("entropy", &ents.concat())?;
        }
        Engine::Ising => {
            let recs: Vec<IsingRecord> = (0..n_traj)
                .into_par_iter()
                .map(|t| {
                    let layout = concrete(cfg, &lat, t)?;
                    let w: Vec<Weight> = layout.iter().map(|&(d, mu)| measured_weight(d, mu)).collect();
                    let e = traj_err(t);
                    let model = cluster_to_ising(&lat, &w, true).map_err(|x| e(x.to_string()))?;
                    let z = boltzmann_z(&model).map_err(|x| e(x.to_string()))?;
                    let (ln_ov, ph) = dense_full_overlap(&lat, &w, true).map_err(|x| e(x.to_string()))?;
                    Ok(IsingRecord {
                        lattice: lname.clone(),
                        lx,
                        ly,
                        trajectory: t,
                        seed,
                        ln_abs_z: z.norm().ln(),
                        arg_z: z.arg(),
                        ln_abs_overlap: ln_ov,
                        arg_overlap: ph.arg(),
                        ln_ratio: ln_ov - z.norm().ln(),
                    })
                })
                .collect::<Result<_, RunError>>()?;
            o.csv("ising", &recs)?;
        }
        Engine::Stabilizer => {
            let model = StabModel { mix: cfg.mix()?, x_vertex: cfg.stabilizer.x_vertex };
            let ents: Vec<Vec<EntropyRecord>> = (0..n_traj)
                .into_par_iter()
                .map(|t| {
                    let bits = stabilizer_profile(cfg, &lat, &model, t)?;
                    Ok(bits
                        .into_iter()
                        .enumerate()
                        .map(|(k, s)| EntropyRecord {
                            lattice: lname.clone(),
                            engine: engine.clone(),
                            lx,
                            ly,
                            trajectory: t,
                            seed,
                            cut: k + 1,
                            entropy: s,
                        })
                        .collect())
                })
                .collect::<Result<_, RunError>>()?;
            o.csv("entropy", &ents.concat())?;
        }
    }
    Ok(o.written)
}

/// Prefix entropies `S([0, k))` in nats of one stabilizer trajectory.
fn stabilizer_profile(cfg: &RunConfig, lat: &Lattice, model: &StabModel, t: u64) -> Result<Vec<f64>, RunError> {
    let seed = cfg.seed;
    let basis = |i| site_basis(lat, model, seed, t, i);
    let coin = |i| site_coin(seed, t, i);
    let bits = match cfg.layout.outcomes {
        OutcomePolicy::Plus | OutcomePolicy::Minus => {
            let o = if cfg.layout.outcomes == OutcomePolicy::Plus {
                clusterbound::measure::Outcome::Plus
            } else {
                clusterbound::measure::Outcome::Minus
            };
            let run = sliding_with(lat, model, Tableau::new, basis, Outcomes::Forced(o), coin)
                .map_err(|e| traj_err(t)(e.to_string()))?;
            let n = run.boundary.len();
            run.tableau.prefix_entropy_bits(&run.slots_of(&ring_interval(0, n.saturating_sub(1), n)))
        }
        _ => {
            let run = sliding_with(lat, model, UnsignedTableau::new, basis, Outcomes::Born, |_| false)
                .map_err(|e| traj_err(t)(e.to_string()))?;
            let n = run.boundary.len();
            run.tableau.prefix_entropy_bits(&run.slots_of(&ring_interval(0, n.saturating_sub(1), n)))
        }
    };
    Ok(bits.into_iter().map(|b| b as f64 * std::f64::consts::LN_2).collect())
}

#[derive(Clone, Debug, Serialize)]
struct PhaseEntry {
    lattice: String,
    theta_spin: f64,
    theta_coupling: f64,
    sizes: Vec<usize>,
    means: Vec<f64>,
    phase: clusterbound::analysis::Phase,
    slope: f64,
}

/// Execute a `sweep` configuration; returns the written artifact paths.
pub fn sweep(cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<PathBuf>, RunError> {
    cfg.validate()?;
    cfg.validate_sweep()?;
    let mut o = output(cfg, out)?;
    let n_traj = cfg.n_traj();
    match cfg.engine {
        Engine::Stabilizer => {
            let family = cfg.family();
            for &l in &cfg.sweep.sizes {
                family.lattice(l).map_err(|e| ConfigError(format!("size {l}: {e}")))?;
            }
            let (rows, trajs) = stab_sweep(&family, &cfg.sweep.sizes, &cfg.grid()?, n_traj, cfg.seed).map_err(rt)?;
            o.csv("scaling", &rows)?;
            let trajs: Vec<TrajectoryRow> = trajs
                .into_iter()
                .map(|r| TrajectoryRow {
                    lattice: family.name(),
                    l: r.l,
                    p_x: r.mix.0,
                    p_y: r.mix.1,
                    p_z: r.mix.2,
                    trajectory: r.trajectory,
                    seed: r.seed,
                    s_half: r.s_half,
                    i_ab: r.i_ab,
                })
                .collect();
            o.csv("trajectories", &trajs)?;
        }
        _ => {
            let (rows, phases) = angle_sweep(cfg)?;
            o.csv("scaling", &rows)?;
            o.text("phases", "json", &serde_json::to_string_pretty(&phases).map_err(rt)?)?;
        }
    }
    Ok(o.written)
}

fn angle_sweep(cfg: &RunConfig) -> Result<(Vec<AngleRow>, Vec<PhaseEntry>), RunError> {
    let mut rows = Vec::new();
    let mut phases = Vec::new();
    let n_traj = cfg.n_traj();
    let kind = if cfg.layout.sign_random { "rbim" } else { "xz" };
    for &theta in &cfg.sweep.thetas {
        let angle = theta * std::f64::consts::FRAC_PI_2;
        let mut c = cfg.clone();
        c.layout.theta_coupling = angle;
        if !cfg.layout.sign_random {
            c.layout.theta_spin = angle;
        }
        let mut means = Vec::new();
        for &lx in &cfg.sweep.sizes {
            c.lattice.lx = lx;
            let spec = match c.lattice.kind {
                LatticeKind::Square => LatticeSpec::square(lx, c.lattice.ly),
                LatticeKind::Lieb => LatticeSpec::lieb(lx, c.lattice.ly, c.lattice.bottom),
            };
            let lat = Lattice::new(spec).map_err(|e| ConfigError(format!("Lx = {lx}: {e}")))?;
            let per: Vec<(f64, usize, f64)> = (0..n_traj)
                .into_par_iter()
                .map(|t| {
                    let layout = concrete(&c, &lat, t)?;
                    let r = tensor_run(&c, &lat, &layout).map_err(traj_err(t))?;
                    let s = prefix_renyi2(&r.state, r.state.len() / 2).map_err(|e| traj_err(t)(e.to_string()))?;
                    let bond = r.rows.iter().map(|d| d.max_bond).max().unwrap_or(1).max(r.state.max_bond());
                    let disc = r.rows.iter().map(|d| d.discarded_weight).sum();
                    Ok((s, bond, disc))
                })
                .collect::<Result<_, RunError>>()?;
            let mut acc = Accumulator::default();
            per.iter().for_each(|p| acc.push(p.0));
            means.push(acc.mean);
            rows.push(AngleRow {
                lattice: name(&lat),
                kind: kind.into(),
                l: lx,
                theta_spin: c.layout.theta_spin,
                theta_coupling: c.layout.theta_coupling,
                observable: "S2_A".into(),
                region: format!("A=0..{}", lat.boundary_sites().len() / 2),
                mean: acc.mean,
                sem: acc.sem(),
                n_traj,
                seed: c.seed,
                max_bond: per.iter().map(|p| p.1).max().unwrap_or(1),
                discarded_weight: per.iter().map(|p| p.2).fold(0.0, f64::max),
            });
        }
        if cfg.sweep.sizes.len() >= 4 {
            let ls: Vec<f64> = cfg.sweep.sizes.iter().map(|&l| l as f64).collect();
            let cls = phase_classify(&ls, &means).map_err(rt)?;
            phases.push(PhaseEntry {
                lattice: rows.last().map(|r: &AngleRow| r.lattice.clone()).unwrap_or_default(),
                theta_spin: c.layout.theta_spin,
                theta_coupling: c.layout.theta_coupling,
                sizes: cfg.sweep.sizes.clone(),
                means,
                phase: cls.phase,
                slope: cls.slope,
            });
        }
    }
    Ok((rows, phases))
}

/// Rows of a stabilizer scaling CSV.
#[derive(Clone, Debug, Deserialize)]
struct ScalingIn {
    #[serde(rename = "L")]
    l: usize,
    p_x: f64,
    p_y: f64,
    p_z: f64,
    observable: String,
    mean: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CollapseReport {
    pub input: String,
    pub observable: String,
    pub parameter: String,
    pub search: SearchBox,
    pub sizes: Vec<usize>,
    pub n_points: usize,
    pub result: CollapseResult,
}

/// Collapse `observable` of a scaling CSV against the column `parameter`
/// (`p_x`, `p_y` or `p_z`). Without `p_range` the search spans the data.
pub fn collapse_csv(
    path: &Path,
    observable: &str,
    parameter: &str,
    p_range: Option<(f64, f64)>,
    nu_range: (f64, f64),
) -> Result<CollapseReport, RunError> {
    let mut rd = csv::Reader::from_path(path).map_err(rt)?;
    let mut points = Vec::new();
    for r in rd.deserialize::<ScalingIn>() {
        let r = r.map_err(rt)?;
        if r.observable != observable {
            continue;
        }
        let p = match parameter {
            "p_x" => r.p_x,
            "p_y" => r.p_y,
            "p_z" => r.p_z,
            other => return Err(RunError::Config(ConfigError(format!("unknown parameter column {other}")))),
        };
        points.push(CollapsePoint { l: r.l as f64, p, y: r.mean });
    }
    if points.is_empty() {
        return Err(rt(format!("no rows with observable {observable}")));
    }
    let lo = points.iter().map(|q| q.p).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|q| q.p).fold(f64::NEG_INFINITY, f64::max);
    let search = SearchBox { p_c: p_range.unwrap_or((lo, hi)), nu: nu_range };
    let result = collapse(&points, search).map_err(rt)?;
    let mut sizes: Vec<usize> = points.iter().map(|q| q.l as usize).collect();
    sizes.sort_unstable();
    sizes.dedup();
    Ok(CollapseReport {
        input: path.display().to_string(),
        observable: observable.into(),
        parameter: parameter.into(),
        search,
        sizes,
        n_points: points.len(),
        result,
    })
}
