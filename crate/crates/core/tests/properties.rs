use std::f64::consts::PI;

use clusterbound::analysis::{collapse_objective, cross_ratio, CollapsePoint};
use clusterbound::boundary::{transfer_gates, WeakMeasSpec};
use clusterbound::ising::{brute_force_z, IsingModel, IsingTerm};
use clusterbound::lattice::{Bottom, Lattice, LatticeKind, LatticeSpec, Sublattice};
use clusterbound::measure::{
    bra, hadamard_weight, local_state, outcome_weight, projector, Direction, Outcome, Pauli, Weight,
};
use clusterbound::mps::{
    apply_ot, contract, prefix_renyi2, segment_renyi2, CompressionPolicy, OpSite, OperatorTrain, Site, TensorTrain,
};
use clusterbound::oracle::{dense_boundary, dense_cluster, dense_project, dense_renyi2, DenseState};
use clusterbound::stabilizer::{
    sliding_run, sliding_run_unsigned, trajectory, Family, PauliMix, StabModel, Stabilizer, Tableau, UnsignedTableau,
};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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
        .map(|k| {
            let (dl, dr) = (dims[k], dims[k + 1]);
            Site::new(dl, 2, dr, (0..dl * 2 * dr).map(|_| cplx(rng)).collect())
        })
        .collect();
    TensorTrain { sites, center: None, discarded: 0.0, log_norm: 0.0 }
}

fn random_ot(rng: &mut ChaCha8Rng, n: usize) -> OperatorTrain {
    let sites = (0..n)
        .map(|k| {
            let dl = if k == 0 { 1 } else { 2 };
            let dr = if k + 1 == n { 1 } else { 2 };
            OpSite::new(dl, 2, 2, dr, (0..dl * 4 * dr).map(|_| cplx(rng)).collect())
        })
        .collect();
    OperatorTrain { sites }
}

fn matvec(m: &[Vec<C64>], v: &[C64]) -> Vec<C64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn infidelity(a: &[C64], b: &[C64]) -> f64 {
    let ov: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    1.0 - ov.norm_sqr() / (norm(a) * norm(b)).powi(2)
}

fn weight_strategy() -> impl Strategy<Value = Weight> {
    prop_oneof![
        (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b)| Weight::Finite(C64::new(a, b))),
        Just(Weight::Infinity),
        Just(Weight::real(0.0)),
        Just(Weight::real(-1.0)),
    ]
}

fn lattice_strategy() -> impl Strategy<Value = LatticeSpec> {
    (2..6usize, 2..6usize, any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(lx, ly, lieb, rough, per)| {
        let mut spec = if lieb {
            LatticeSpec::lieb(lx, ly, if rough { Bottom::Rough } else { Bottom::Smooth })
        } else {
            LatticeSpec::square(lx, ly)
        };
        if per && lx >= 3 {
            spec = spec.periodic();
        }
        spec
    })
}

fn pure_boundary(seed: u64) -> DenseState {
    let lat = Lattice::new(LatticeSpec::square(4, 3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = (0..lat.len())
        .map(|_| (Direction::new(rng.gen_range(0.0..PI), rng.gen_range(0.0..2.0 * PI)).unwrap(), Outcome::from_bit(rng.gen())))
        .collect::<Vec<_>>();
    dense_boundary(&lat, &layout).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lattice_neighbors_symmetric_and_bipartite(spec in lattice_strategy()) {
        let lat = Lattice::new(spec).unwrap();
        // An odd periodic square ring is not bipartite.
        let bipartite = !(spec.kind == LatticeKind::Square && spec.x_periodic && spec.lx % 2 == 1);
        for a in 0..lat.len() {
            for &b in lat.neighbors(a).unwrap() {
                prop_assert!(lat.neighbors(b).unwrap().contains(&a));
                if bipartite {
                    prop_assert_ne!(lat.sublattice(a), lat.sublattice(b));
                }
            }
        }
        let (lx, ly) = (spec.lx, spec.ly);
        if spec.kind == LatticeKind::Square {
            prop_assert_eq!(lat.len(), lx * ly);
        } else if !spec.x_periodic && spec.bottom == Bottom::Smooth {
            prop_assert_eq!(lat.len(), lx * ly + (lx - 1) * ly + lx * (ly - 1));
        }
        let spins = (0..lat.len()).filter(|&i| lat.sublattice(i) == Sublattice::Spin).count();
        prop_assert!(spins > 0 && spins < lat.len());
    }

    #[test]
    fn outcome_states_orthogonal_and_complete(w in weight_strategy()) {
        let plus = local_state(outcome_weight(w, Outcome::Plus));
        let minus = local_state(outcome_weight(w, Outcome::Minus));
        let b = bra(outcome_weight(w, Outcome::Plus), true);
        prop_assert!((b[0] * minus[0] + b[1] * minus[1]).norm() < 1e-12);
        prop_assert!((b[0] * plus[0] + b[1] * plus[1] - 1.0).norm() < 1e-12);
        let (p, q) = (projector(w), projector(w.antipode()));
        for i in 0..2 {
            for j in 0..2 {
                let id = if i == j { 1.0 } else { 0.0 };
                prop_assert!((p[i][j] + q[i][j] - id).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn weight_maps_are_involutions(w in weight_strategy()) {
        prop_assert!(hadamard_weight(hadamard_weight(w)).approx_eq(w, 1e-12));
        if w != Weight::real(0.0) {
            let back = outcome_weight(outcome_weight(w, Outcome::Minus), Outcome::Minus);
            prop_assert!(back.approx_eq(w, 1e-12));
        }
    }

    #[test]
    fn povm_closure(theta in 0.0..PI, phi in 0.0..2.0 * PI) {
        let d = Direction::new(theta, phi).unwrap();
        let mut sum = [[C64::new(0.0, 0.0); 2]; 2];
        for mu in [Outcome::Plus, Outcome::Minus] {
            let m = WeakMeasSpec::new(d, mu).kraus();
            for i in 0..2 {
                for j in 0..2 {
                    sum[i][j] += (0..2).map(|k| m[k][i].conj() * m[k][j]).sum::<C64>();
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let id = if i == j { 1.0 } else { 0.0 };
                prop_assert!((sum[i][j] - id).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn transfer_gates_commute_with_x_string(ws in weight_strategy(), wt in weight_strategy(), wv in weight_strategy()) {
        let g = transfer_gates(ws, wt, wv);
        for (m, n) in [(&g.t_zz.matrix, 2usize), (&g.t_x.matrix, 3)] {
            let dim = 1 << n;
            // The all-X string flips every bit of the basis index.
            for i in 0..dim {
                for j in 0..dim {
                    let flipped = m[i ^ (dim - 1)][j ^ (dim - 1)];
                    prop_assert!((m[i][j] - flipped).norm() < 1e-12 * (1.0 + m[i][j].norm()));
                }
            }
        }
    }

    #[test]
    fn ising_z_invariant_under_relabeling(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..9usize);
        let terms: Vec<IsingTerm> = (0..rng.gen_range(1..12))
            .map(|_| {
                let k = rng.gen_range(1..=4usize.min(n));
                let mut spins: Vec<usize> = (0..n).collect();
                for i in 0..k {
                    let j = rng.gen_range(i..n);
                    spins.swap(i, j);
                }
                spins.truncate(k);
                IsingTerm::new(spins, Weight::Finite(cplx(&mut rng)), None)
            })
            .collect();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let relabeled = terms
            .iter()
            .map(|t| IsingTerm::new(t.spins.iter().map(|&s| perm[s]).collect(), t.v, None))
            .collect();
        let a = brute_force_z(&IsingModel { n_spins: n, spin_sites: vec![], terms }).unwrap();
        let b = brute_force_z(&IsingModel { n_spins: n, spin_sites: vec![], terms: relabeled }).unwrap();
        prop_assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
    }

    #[test]
    fn dense_complement_symmetry(seed in any::<u64>(), mask in 1u32..15) {
        let st = pure_boundary(seed);
        let a: Vec<usize> = (0..4).filter(|k| mask >> k & 1 == 1).collect();
        let b: Vec<usize> = (0..4).filter(|k| mask >> k & 1 == 0).collect();
        prop_assert!((dense_renyi2(&st, &a).unwrap() - dense_renyi2(&st, &b).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn projection_order_irrelevant(seed in any::<u64>()) {
        let lat = Lattice::new(LatticeSpec::lieb(2, 2, Bottom::Rough)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ws: Vec<Weight> = (0..lat.len()).map(|_| Weight::Finite(cplx(&mut rng))).collect();
        let bulk = lat.bulk_sites();
        let mut shuffled = bulk.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.gen_range(0..=i));
        }
        let run = |order: &[usize]| {
            let mut st = dense_cluster(&lat).unwrap();
            for &s in order {
                st = dense_project(&st, s, ws[s], true).unwrap();
            }
            st
        };
        let (a, b) = (run(&bulk), run(&shuffled));
        prop_assert!((a.log_norm - b.log_norm).abs() < 1e-12);
        for (x, y) in a.amps.iter().zip(&b.amps) {
            prop_assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn truncation_certificate(seed in any::<u64>(), eps in 1e-6..0.2f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(3..=8usize);
        let tt = random_tt(&mut rng, n, 4);
        let ot = random_ot(&mut rng, n);
        let exact = contract(&tt, &ot).unwrap().dense();
        let policy = CompressionPolicy { epsilon: eps, ..CompressionPolicy::default() };
        let (trunc, diag) = apply_ot(&tt, &ot, &policy).unwrap();
        let inf = infidelity(&exact, &trunc.dense());
        prop_assert!(inf <= diag.discarded_weight + 1e-12, "{} > {}", inf, diag.discarded_weight);
    }

    #[test]
    fn prefix_and_segment_agree(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=8usize);
        let tt = random_tt(&mut rng, n, 4);
        for cut in 1..n {
            let a = prefix_renyi2(&tt, cut).unwrap();
            let b = segment_renyi2(&tt, 0..cut).unwrap();
            let c = segment_renyi2(&tt, cut..n).unwrap();
            prop_assert!((a - b).abs() < 1e-9 && (a - c).abs() < 1e-9);
        }
    }

    #[test]
    fn log_norm_bookkeeping(seed in any::<u64>(), k in 1..4usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=6usize);
        let mut tt = random_tt(&mut rng, n, 3);
        let mut exact = tt.dense();
        for _ in 0..k {
            let ot = random_ot(&mut rng, n);
            exact = matvec(&ot.dense(), &exact);
            tt = apply_ot(&tt, &ot, &CompressionPolicy::exact()).unwrap().0;
        }
        let got = tt.log_norm + norm(&tt.dense()).ln();
        prop_assert!((got - norm(&exact).ln()).abs() < 1e-8);
        prop_assert!(infidelity(&exact, &tt.dense()) < 1e-10);
    }

    #[test]
    fn tableau_entropy_complement_symmetry(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=12usize);
        let mut t = Tableau::new(n);
        let mut u = UnsignedTableau::new(n);
        for _ in 0..4 * n {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            match rng.gen_range(0..4) {
                0 => { t.h(a); u.h(a); }
                1 => { t.s(a); u.s(a); }
                2 if a != b => { t.cz(a, b); u.cz(a, b); }
                _ => {
                    let p = [Pauli::X, Pauli::Y, Pauli::Z][rng.gen_range(0..3)];
                    let (mu, _) = t.measure_pauli(a, p, None, rng.gen()).unwrap();
                    u.measure_pauli(a, p, Some(mu), false).unwrap();
                }
            }
        }
        prop_assert!(t.is_consistent());
        let region: Vec<usize> = (0..n).filter(|_| rng.gen()).collect();
        let rest: Vec<usize> = (0..n).filter(|q| !region.contains(q)).collect();
        prop_assert_eq!(t.entropy_bits(&region), t.entropy_bits(&rest));
        prop_assert_eq!(t.entropy_bits(&region), u.entropy_bits(&region));
    }

    #[test]
    fn cross_ratio_in_unit_interval(l in 4.0..200.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64, c in 0.0..1.0f64, d in 0.0..1.0f64) {
        let mut x = [a, b, c, d].map(|v| v * l * 0.999);
        x.sort_by(f64::total_cmp);
        prop_assume!(x.windows(2).all(|w| w[1] - w[0] > 1e-6));
        let chi = cross_ratio(x, l).unwrap();
        prop_assert!(chi > 0.0 && chi < 1.0);
    }

    #[test]
    fn collapse_objective_ignores_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts: Vec<CollapsePoint> = [8.0, 16.0, 32.0]
            .iter()
            .flat_map(|&l| (0..6).map(move |k| (l, 0.4 + 0.04 * k as f64)))
            .map(|(l, p)| CollapsePoint { l, p, y: rng.gen() })
            .collect();
        let q = collapse_objective(&pts, 0.5, 1.0);
        for i in (1..pts.len()).rev() {
            pts.swap(i, rng.gen_range(0..=i));
        }
        prop_assert_eq!(q, collapse_objective(&pts, 0.5, 1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sliding_matches_dense(seed in any::<u64>(), lieb in any::<bool>(), px in 0.0..1.0f64, py in 0.0..1.0f64) {
        let spec = if lieb { LatticeSpec::lieb(2, 3, Bottom::Rough) } else { LatticeSpec::square(4, 4) };
        let lat = Lattice::new(spec).unwrap();
        let (px, py) = (px * 0.5, py * 0.5);
        let model = StabModel { mix: PauliMix::new(px, py, 1.0 - px - py).unwrap(), x_vertex: false };
        let run = sliding_run(&lat, &model, seed, 0).unwrap();
        let fast = sliding_run_unsigned(&lat, &model, seed, 0);
        let (dense, _) = dense_boundary(&lat, &run.concrete(lat.len())).unwrap();
        let n = run.boundary.len();
        for len in 1..n {
            let pos: Vec<usize> = (0..len).collect();
            let want = dense_renyi2(&dense, &pos).unwrap();
            prop_assert!((run.tableau.entropy(&run.slots_of(&pos)) - want).abs() < 1e-9);
            prop_assert!((fast.tableau.entropy(&fast.slots_of(&pos)) - want).abs() < 1e-9);
        }
    }

    #[test]
    fn free_fermion_sector_stays_logarithmic(traj in 0..1000u64) {
        let fam = Family { kind: LatticeKind::Lieb, bottom: Bottom::Rough, x_vertex: true, periodic: true, depth_ratio: 1.0, mi_divisor: 4 };
        for l in [16usize, 32, 64] {
            let rec = trajectory(&fam, l, PauliMix::new(0.5, 0.0, 0.5).unwrap(), 5, traj).unwrap();
            let bits = rec.s_half / std::f64::consts::LN_2;
            prop_assert!(bits <= 2.0 * (l as f64).log2() + 4.0, "L={} S/ln2={}", l, bits);
        }
    }
}
