//! Verification suites with machine-readable reports.

use std::f64::consts::{LN_2, PI};
use std::time::Instant;

use clusterbound::boundary::{circuit_boundary, evolve, CircuitOptions, WeakMeasSpec};
use clusterbound::ising::{boltzmann_z, cluster_to_ising};
use clusterbound::lattice::{Bottom, Lattice, LatticeKind, LatticeSpec, Role};
use clusterbound::measure::{
    bra, hadamard_weight, measured_weight, projector, Concrete, Direction, Outcome, Pauli, Weight,
};
use clusterbound::mps::{apply_ot, contract, renyi2_profile, tt_overlap_log, CompressionPolicy, OpSite, OperatorTrain, Site, TensorTrain};
use clusterbound::oracle::{dense_boundary, dense_full_overlap, dense_renyi2, fidelity};
use clusterbound::stabilizer::{sliding_run, trajectory, Family, PauliMix, StabModel, Stabilizer};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub const SUITES: [&str; 5] = ["oracle-equivalence", "povm", "ising-ratio", "stabilizer-limits", "percolation-smoke"];

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value <= bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, passed: value <= bound }
    }

    /// Passes when `value >= bound`.
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, passed: value >= bound }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(suite: &str, checks: Vec<Check>) -> Self {
        Self { suite: suite.into(), passed: checks.iter().all(|c| c.passed), checks }
    }
}

pub fn run_suite(name: &str, seed: u64) -> Option<Report> {
    Some(match name {
        "oracle-equivalence" => oracle_equivalence(seed, 20),
        "povm" => povm(seed, 100),
        "ising-ratio" => ising_ratio(seed, 50),
        "stabilizer-limits" => stabilizer_limits(seed),
        "percolation-smoke" => percolation_smoke(seed),
        _ => return None,
    })
}

pub fn random_layout(lat: &Lattice, rng: &mut ChaCha8Rng) -> Concrete {
    (0..lat.len())
        .map(|_| {
            let d = Direction::new(rng.gen_range(0.0..PI), rng.gen_range(0.0..2.0 * PI)).expect("in range");
            (d, Outcome::from_bit(rng.gen()))
        })
        .collect()
}

fn triangle_lattices() -> Vec<(String, LatticeSpec)> {
    vec![
        ("square 3x3".into(), LatticeSpec::square(3, 3)),
        ("square 4x4".into(), LatticeSpec::square(4, 4)),
        ("lieb-smooth 3x2".into(), LatticeSpec::lieb(3, 2, Bottom::Smooth)),
        ("lieb-rough 3x2".into(), LatticeSpec::lieb(3, 2, Bottom::Rough)),
    ]
}

/// Tensor path, effective circuit and dense oracle on `n_layouts` random
/// layouts per lattice: worst pairwise infidelity and entropy gap.
pub fn oracle_equivalence(seed: u64, n_layouts: usize) -> Report {
    let start = Instant::now();
    let exact = CompressionPolicy::exact();
    let mut checks = Vec::new();
    for (k, (label, spec)) in triangle_lattices().into_iter().enumerate() {
        let lat = Lattice::new(spec).expect("valid lattice");
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ k as u64);
        let layouts: Vec<Concrete> = (0..n_layouts).map(|_| random_layout(&lat, &mut rng)).collect();
        let worst: Vec<(f64, f64)> = layouts
            .par_iter()
            .map(|layout| {
                let (dense, _) = dense_boundary(&lat, layout).expect("dense");
                let (tt, _) = evolve(&lat, layout, &exact, &[]).expect("tensor path");
                let (cc, _, _) = circuit_boundary(&lat, layout, &exact, &[], CircuitOptions::default()).expect("circuit");
                let (a, b) = (tt.dense(), cc.dense());
                let inf = [fidelity(&a, &dense.amps), fidelity(&b, &dense.amps), fidelity(&a, &b)]
                    .into_iter()
                    .map(|f| 1.0 - f)
                    .fold(0.0, f64::max);
                let (pa, pb) = (renyi2_profile(&tt).expect("profile"), renyi2_profile(&cc).expect("profile"));
                let mut gap = 0.0f64;
                for c in 1..dense.n_qubits() {
                    let d = dense_renyi2(&dense, &(0..c).collect::<Vec<_>>()).expect("dense entropy");
                    gap = gap.max((pa[c - 1] - d).abs()).max((pb[c - 1] - d).abs()).max((pa[c - 1] - pb[c - 1]).abs());
                }
                (inf, gap)
            })
            .collect();
        let inf = worst.iter().map(|w| w.0).fold(0.0, f64::max);
        let gap = worst.iter().map(|w| w.1).fold(0.0, f64::max);
        checks.push(Check::at_most(format!("{label} max infidelity"), inf, 1e-10));
        checks.push(Check::at_most(format!("{label} max entropy gap"), gap, 1e-8));
        checks.push(Check::at_least(format!("{label} layouts"), n_layouts as f64, 20.0));
    }
    checks.push(Check::at_most("runtime seconds", start.elapsed().as_secs_f64(), 30.0));
    Report::new("oracle-equivalence", checks)
}

fn cplx(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

fn random_tt(rng: &mut ChaCha8Rng, n: usize, chi: usize) -> TensorTrain {
    let mut dims = vec![1];
    for k in 1..n {
        dims.push(rng.gen_range(1..=chi).min(1 << k.min(n - k)));
    }
    dims.push(1);
    let sites = (0..n)
        .map(|k| Site::new(dims[k], 2, dims[k + 1], (0..dims[k] * 2 * dims[k + 1]).map(|_| cplx(rng)).collect()))
        .collect();
    TensorTrain { sites, center: None, discarded: 0.0, log_norm: 0.0 }
}

fn random_ot(rng: &mut ChaCha8Rng, n: usize) -> OperatorTrain {
    let sites = (0..n)
        .map(|k| {
            let dl = if k == 0 { 1 } else { 3 };
            let dr = if k + 1 == n { 1 } else { 3 };
            OpSite::new(dl, 2, 2, dr, (0..dl * 4 * dr).map(|_| cplx(rng)).collect())
        })
        .collect();
    OperatorTrain { sites }
}

fn overlap_infidelity(a: &[C64], b: &[C64]) -> f64 {
    let ov: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let na: f64 = a.iter().map(|x| x.norm_sqr()).sum();
    let nb: f64 = b.iter().map(|x| x.norm_sqr()).sum();
    1.0 - ov.norm_sqr() / (na * nb)
}

fn mat_dist(a: [[C64; 2]; 2], b: [[C64; 2]; 2]) -> f64 {
    (0..2).flat_map(|i| (0..2).map(move |j| (a[i][j] - b[i][j]).norm())).fold(0.0, f64::max)
}

/// Weak-measurement closure, weight algebra and the truncation certificate.
pub fn povm(seed: u64, n_dirs: usize) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]];
    let (mut closure, mut complete, mut involution) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..n_dirs {
        let d = Direction::new(rng.gen_range(0.0..=PI), rng.gen_range(0.0..2.0 * PI)).expect("in range");
        let mut sum = [[C64::new(0.0, 0.0); 2]; 2];
        for mu in [Outcome::Plus, Outcome::Minus] {
            let k = WeakMeasSpec::new(d, mu).kraus();
            for i in 0..2 {
                for j in 0..2 {
                    sum[i][j] += k[0][i].conj() * k[0][j] + k[1][i].conj() * k[1][j];
                }
            }
        }
        closure = closure.max(mat_dist(sum, id));
        let (pp, pm) = (projector(measured_weight(d, Outcome::Plus)), projector(measured_weight(d, Outcome::Minus)));
        let total = std::array::from_fn(|i| std::array::from_fn(|j| pp[i][j] + pm[i][j]));
        complete = complete.max(mat_dist(total, id));
        let w = measured_weight(d, Outcome::Plus);
        if !hadamard_weight(hadamard_weight(w)).approx_eq(w, 1e-12) {
            involution = involution.max(1.0);
        }
    }
    for w in [Weight::Infinity, Weight::real(0.0), Weight::real(-1.0), Weight::real(1.0)] {
        if !hadamard_weight(hadamard_weight(w)).approx_eq(w, 1e-12) {
            involution = 1.0;
        }
    }
    let mut excess = f64::NEG_INFINITY;
    for _ in 0..50 {
        let n = rng.gen_range(3..=10usize);
        let tt = random_tt(&mut rng, n, 4);
        let ot = random_ot(&mut rng, n);
        let exact = contract(&tt, &ot).expect("contract").dense();
        let policy = CompressionPolicy { epsilon: rng.gen_range(1e-6..0.2), ..CompressionPolicy::default() };
        let (trunc, diag) = apply_ot(&tt, &ot, &policy).expect("apply");
        excess = excess.max(overlap_infidelity(&exact, &trunc.dense()) - diag.discarded_weight);
    }
    Report::new(
        "povm",
        vec![
            Check::at_most("kraus closure max deviation", closure, 1e-12),
            Check::at_most("basis completeness max deviation", complete, 1e-12),
            Check::at_most("hadamard involution failures", involution, 0.0),
            Check::at_most("truncation infidelity minus certificate", excess, 1e-12),
        ],
    )
}

/// Relative spread of `exp(x_i - mean)`.
pub fn relative_std(logs: &[f64]) -> f64 {
    let m = logs.iter().sum::<f64>() / logs.len() as f64;
    let r: Vec<f64> = logs.iter().map(|x| (x - m).exp()).collect();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r.len() - 1) as f64;
    var.sqrt() / mean
}

/// `ln |Omega| - ln |Z|` over `n_configs` outcome sets at fixed random
/// directions, through the dense oracle and the tensor path.
pub fn ising_ratio_logs(spec: LatticeSpec, seed: u64, n_configs: usize) -> (Vec<f64>, Vec<f64>) {
    let lat = Lattice::new(spec).expect("valid lattice");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs: Vec<Direction> = (0..lat.len())
        .map(|_| Direction::new(rng.gen_range(0.1..PI - 0.1), rng.gen_range(0.0..2.0 * PI)).expect("in range"))
        .collect();
    let configs: Vec<Vec<Outcome>> =
        (0..n_configs).map(|_| (0..lat.len()).map(|_| Outcome::from_bit(rng.gen())).collect()).collect();
    let boundary = lat.boundary_sites();
    let policy = CompressionPolicy::exact();
    configs
        .par_iter()
        .map(|mus| {
            let layout: Concrete = dirs.iter().zip(mus).map(|(&d, &m)| (d, m)).collect();
            let w: Vec<Weight> = layout.iter().map(|&(d, m)| measured_weight(d, m)).collect();
            let ln_z = boltzmann_z(&cluster_to_ising(&lat, &w, true).expect("model")).expect("z").norm().ln();
            let (ln_dense, _) = dense_full_overlap(&lat, &w, true).expect("overlap");
            let (tt, _) = evolve(&lat, &layout, &policy, &[]).expect("tensor path");
            let bras: Vec<[C64; 2]> = boundary.iter().map(|&b| bra(w[b], true)).collect();
            let (ln_mps, _) = tt_overlap_log(&tt, &bras);
            (ln_dense - ln_z, ln_mps - ln_z)
        })
        .unzip()
}

pub fn ising_ratio(seed: u64, n_configs: usize) -> Report {
    let mut checks = Vec::new();
    for (label, spec) in [("lieb 3x2", LatticeSpec::lieb(3, 2, Bottom::Smooth)), ("square 3x3", LatticeSpec::square(3, 3))] {
        let (dense, mps) = ising_ratio_logs(spec, seed, n_configs);
        checks.push(Check::at_most(format!("{label} dense relative std"), relative_std(&dense), 1e-8));
        checks.push(Check::at_most(format!("{label} mps relative std"), relative_std(&mps), 1e-8));
    }
    Report::new("ising-ratio", checks)
}

/// Mismatches of the all-Z square boundary against the cluster chain whose
/// stabilizer signs are the outcomes of the row below.
pub fn all_z_square_mismatches(lx: usize, ly: usize, seed: u64, n_traj: u64) -> usize {
    let lat = Lattice::new(LatticeSpec::square(lx, ly)).expect("valid lattice");
    let model = StabModel { mix: PauliMix::new(0.0, 0.0, 1.0).expect("mix"), x_vertex: false };
    let mut bad = 0;
    for t in 0..n_traj {
        let mut run = sliding_run(&lat, &model, seed, t).expect("run");
        let outcome: std::collections::HashMap<usize, Outcome> = run.record.iter().map(|&(s, _, m)| (s, m)).collect();
        for q in 0..lx {
            let mut ops = vec![(run.slots[q], Pauli::X)];
            for nb in [q.wrapping_sub(1), q + 1] {
                if nb < lx {
                    ops.push((run.slots[nb], Pauli::Z));
                }
            }
            let below = lat.find(Role::Plain, q, ly - 1).expect("site below");
            if run.tableau.stabilizer_sign(&ops) != Some(outcome[&below]) {
                bad += 1;
            }
        }
        if !run.tableau.is_consistent() {
            bad += 1;
        }
    }
    bad
}

/// Deviations from zero entropy (rough) and from one bit on every proper
/// vertex interval (smooth) for the all-X Lieb bulk.
pub fn lieb_all_x_mismatches(lx: usize, ly: usize, seed: u64, n_traj: u64) -> (usize, usize) {
    let all_x = StabModel { mix: PauliMix::new(1.0, 0.0, 0.0).expect("mix"), x_vertex: false };
    let (mut rough_bad, mut smooth_bad) = (0, 0);
    for t in 0..n_traj {
        let rough = Lattice::new(LatticeSpec::lieb(lx, ly, Bottom::Rough)).expect("lattice");
        let run = sliding_run(&rough, &all_x, seed, t).expect("run");
        let n = run.boundary.len();
        for a in 0..n {
            for b in a + 1..=n {
                if run.tableau.entropy_bits(&run.slots_of(&(a..b).collect::<Vec<_>>())) != 0 {
                    rough_bad += 1;
                }
            }
        }
        let smooth = Lattice::new(LatticeSpec::lieb(lx, ly, Bottom::Smooth)).expect("lattice");
        let run = sliding_run(&smooth, &all_x, seed, t).expect("run");
        let n = run.boundary.len();
        let vertices: Vec<usize> = (0..n).step_by(2).collect();
        for a in 0..vertices.len() {
            for b in a + 1..=vertices.len() {
                if b - a == vertices.len() {
                    continue;
                }
                let span: Vec<usize> = (vertices[a]..=vertices[b - 1]).collect();
                let only: Vec<usize> = vertices[a..b].to_vec();
                for region in [span, only] {
                    if run.tableau.entropy(&run.slots_of(&region)) != LN_2 {
                        smooth_bad += 1;
                    }
                }
            }
        }
    }
    (rough_bad, smooth_bad)
}

pub fn stabilizer_limits(seed: u64) -> Report {
    let square = all_z_square_mismatches(8, 6, seed, 10);
    let (rough, smooth) = lieb_all_x_mismatches(6, 4, seed, 10);
    Report::new(
        "stabilizer-limits",
        vec![
            Check::at_most("all-z square cluster-chain sign mismatches", square as f64, 0.0),
            Check::at_most("all-x lieb rough nonzero interval entropies", rough as f64, 0.0),
            Check::at_most("all-x lieb smooth vertex intervals without ln 2", smooth as f64, 0.0),
        ],
    )
}

/// X-vertex Lieb family used by the percolation experiments.
pub fn x_vertex_family() -> Family {
    Family {
        kind: LatticeKind::Lieb,
        bottom: Bottom::Rough,
        x_vertex: true,
        periodic: true,
        depth_ratio: 1.0,
        mi_divisor: 4,
    }
}

/// Small-size checks of the X-vertex model on both sides of `p_x = 1/2`.
pub fn percolation_smoke(seed: u64) -> Report {
    let fam = x_vertex_family();
    let mi = |p_x: f64| -> Vec<f64> {
        let mix = PauliMix::new(p_x, 0.0, 1.0 - p_x).expect("mix");
        (0..100u64).into_par_iter().map(|t| trajectory(&fam, 32, mix, seed, t).expect("trajectory").i_ab).collect()
    };
    let ordered = mi(0.2);
    let off = ordered.iter().filter(|&&v| v != LN_2).count();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let critical = mean(&mi(0.5));
    let disordered = mean(&mi(0.8));
    Report::new(
        "percolation-smoke",
        vec![
            Check::at_most("p_x = 0.2 trajectories with I_AB != ln 2", off as f64, 0.0),
            Check::at_least("p_x = 0.5 mean I_AB minus p_x = 0.8 mean", critical - disordered, 0.0),
            Check::at_most("p_x = 0.8 mean I_AB / ln 2", disordered / LN_2, 0.25),
        ],
    )
}
