//! Classical Ising models with complex Boltzmann weights.
//!
//! Each term stores the ratio `V = f(-1)/f(+1)` of its Boltzmann factors as a
//! [`Weight`], so `K = +inf` (V = 0), `K = -inf` (V = inf) and `K = i pi/4`
//! (V = -i) are exact values rather than overflowing couplings.

use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

use crate::lattice::{Lattice, Sublattice};
use crate::measure::{hadamard_weight, Weight};

pub const MAX_BRUTE_FORCE_SPINS: usize = 26;

#[derive(Debug, Error, PartialEq)]
pub enum IsingError {
    #[error("expected {expected} site weights, got {got}")]
    MissingWeights { expected: usize, got: usize },
    #[error("{0} spins exceeds the brute-force cap of {MAX_BRUTE_FORCE_SPINS}")]
    TooManySpins(usize),
    #[error("spin index {spin} out of range for {n} spins")]
    BadSpin { spin: usize, n: usize },
    #[error("term has a zero or infinite factor ratio; the symmetric normalization is undefined")]
    SingularTerm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Field,
    Pair,
    Plaquette,
}

impl TermKind {
    pub fn for_spins(n: usize) -> Self {
        match n {
            1 => TermKind::Field,
            2 => TermKind::Pair,
            _ => TermKind::Plaquette,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IsingTerm {
    pub kind: TermKind,
    pub spins: Vec<usize>,
    pub v: Weight,
    /// Lattice site the term was generated from, if any.
    pub source: Option<usize>,
}

impl IsingTerm {
    pub fn new(spins: Vec<usize>, v: Weight, source: Option<usize>) -> Self {
        Self { kind: TermKind::for_spins(spins.len()), spins, v, source }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IsingModel {
    pub n_spins: usize,
    /// Lattice site of each spin, when the model came from a lattice.
    pub spin_sites: Vec<usize>,
    pub terms: Vec<IsingTerm>,
}

/// `(f_plus, f_minus)` for a term: `(1, V)`, or `(0, 1)` when `V` is infinite.
pub fn term_factors(t: &IsingTerm) -> (C64, C64) {
    t.v.pair()
}

/// Ising model of the overlap between a product measurement state and the
/// cluster state. Spins live on [`Sublattice::Spin`] sites; each spin site adds
/// a field term with `V = W`, each coupling site a term on all of its
/// neighbours with `V = (1 - W)/(1 + W)`. On the Lieb lattice that is a pair
/// term per edge (a field for dangling rough edges); on the square lattice a
/// plaquette of up to four spins.
///
/// `conjugate = true` builds the model from `conj(W)`, which is what the
/// physical amplitude `<mu, w|Psi>` equals.
pub fn cluster_to_ising(lat: &Lattice, weights: &[Weight], conjugate: bool) -> Result<IsingModel, IsingError> {
    if weights.len() != lat.len() {
        return Err(IsingError::MissingWeights { expected: lat.len(), got: weights.len() });
    }
    let mut spin_of = vec![usize::MAX; lat.len()];
    let mut spin_sites = Vec::new();
    for s in lat.sites() {
        if lat.sublattice(s.index) == Sublattice::Spin {
            spin_of[s.index] = spin_sites.len();
            spin_sites.push(s.index);
        }
    }
    let mut terms = Vec::new();
    for s in lat.sites() {
        let w = if conjugate { weights[s.index].conj() } else { weights[s.index] };
        match lat.sublattice(s.index) {
            Sublattice::Spin => terms.push(IsingTerm::new(vec![spin_of[s.index]], w, Some(s.index))),
            Sublattice::Coupling => {
                let spins = lat.neighbors(s.index).expect("site in range").iter().map(|&j| spin_of[j]).collect();
                terms.push(IsingTerm::new(spins, hadamard_weight(w), Some(s.index)));
            }
        }
    }
    Ok(IsingModel { n_spins: spin_sites.len(), spin_sites, terms })
}

/// Domain-wall model of the toric code: one pair term with `V = W` per edge.
pub fn toric_edge_model(n_spins: usize, edges: &[(usize, usize, Weight)]) -> Result<IsingModel, IsingError> {
    let mut terms = Vec::with_capacity(edges.len());
    for &(a, b, w) in edges {
        for spin in [a, b] {
            if spin >= n_spins {
                return Err(IsingError::BadSpin { spin, n: n_spins });
            }
        }
        terms.push(IsingTerm::new(vec![a, b], w, None));
    }
    Ok(IsingModel { n_spins, spin_sites: Vec::new(), terms })
}

/// Exhaustive sum over spin configurations in lexicographic order; bit `k` of
/// the configuration index set means spin `k` is down.
pub fn brute_force_z(m: &IsingModel) -> Result<C64, IsingError> {
    if m.n_spins > MAX_BRUTE_FORCE_SPINS {
        return Err(IsingError::TooManySpins(m.n_spins));
    }
    let mut masks = Vec::with_capacity(m.terms.len());
    for t in &m.terms {
        let mut mask = 0u32;
        for &s in &t.spins {
            if s >= m.n_spins {
                return Err(IsingError::BadSpin { spin: s, n: m.n_spins });
            }
            mask ^= 1 << s;
        }
        masks.push((mask, term_factors(t)));
    }
    let mut z = C64::new(0.0, 0.0);
    for config in 0u32..(1u32 << m.n_spins) {
        let mut prod = C64::new(1.0, 0.0);
        for &(mask, (fp, fm)) in &masks {
            prod *= if (config & mask).count_ones() & 1 == 1 { fm } else { fp };
            if prod == C64::new(0.0, 0.0) {
                break;
            }
        }
        z += prod;
    }
    Ok(z)
}

/// `sum_s exp(sum_t K_t sigma_t)` with `exp(-2 K_t) = V_t`, i.e. the factor
/// pairs rescaled to `(V^-1/2, V^1/2)`. Unlike [`brute_force_z`] its magnitude
/// relative to the measurement amplitude does not depend on the outcomes.
pub fn boltzmann_z(m: &IsingModel) -> Result<C64, IsingError> {
    let mut scale = C64::new(1.0, 0.0);
    for t in &m.terms {
        match t.v {
            Weight::Finite(v) if v.norm() > 0.0 => scale /= v.sqrt(),
            _ => return Err(IsingError::SingularTerm),
        }
    }
    Ok(brute_force_z(m)? * scale)
}

/// Fixture-exchange record for one term.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermRecord {
    pub kind: TermKind,
    pub spins: Vec<usize>,
    #[serde(rename = "V_re")]
    pub v_re: f64,
    #[serde(rename = "V_im")]
    pub v_im: f64,
    #[serde(rename = "V_inf")]
    pub v_inf: bool,
}

pub fn dump_terms(m: &IsingModel) -> Vec<TermRecord> {
    m.terms
        .iter()
        .map(|t| {
            let (v_re, v_im, v_inf) = match t.v {
                Weight::Finite(z) => (z.re, z.im, false),
                Weight::Infinity => (0.0, 0.0, true),
            };
            TermRecord { kind: t.kind, spins: t.spins.clone(), v_re, v_im, v_inf }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Bottom, LatticeSpec, Role};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn factor_examples() {
        let t = |v| IsingTerm::new(vec![0], v, None);
        assert_eq!(term_factors(&t(Weight::real(1.0))), (c(1.0, 0.0), c(1.0, 0.0)));
        assert_eq!(term_factors(&t(Weight::real(0.0))), (c(1.0, 0.0), c(0.0, 0.0)));
        assert_eq!(term_factors(&t(Weight::Infinity)), (c(0.0, 0.0), c(1.0, 0.0)));
    }

    #[test]
    fn small_sums() {
        let free = IsingModel { n_spins: 3, spin_sites: vec![], terms: vec![] };
        assert_eq!(brute_force_z(&free).unwrap(), c(8.0, 0.0));
        let v = c(0.3, -1.2);
        let pair = toric_edge_model(2, &[(0, 1, Weight::Finite(v))]).unwrap();
        assert!((brute_force_z(&pair).unwrap() - (2.0 + 2.0 * v)).norm() < 1e-15);
        let big = IsingModel { n_spins: 27, spin_sites: vec![], terms: vec![] };
        assert_eq!(brute_force_z(&big), Err(IsingError::TooManySpins(27)));
    }

    #[test]
    fn toric_limits() {
        // Ring of 4 spins.
        let ring = |w: Weight| (0..4).map(|i| (i, (i + 1) % 4, w)).collect::<Vec<_>>();
        let zero = toric_edge_model(4, &ring(Weight::real(0.0))).unwrap();
        assert_eq!(brute_force_z(&zero).unwrap(), c(2.0, 0.0));
        let one = toric_edge_model(4, &ring(Weight::real(1.0))).unwrap();
        assert_eq!(brute_force_z(&one).unwrap(), c(16.0, 0.0));
    }

    #[test]
    fn lieb_term_examples() {
        let lat = Lattice::new(LatticeSpec::lieb(2, 2, Bottom::Smooth)).unwrap();
        let mut w = vec![Weight::real(0.0); lat.len()];
        let v = lat.find(Role::Vertex, 0, 1).unwrap();
        let e = lat.find(Role::HorizontalEdge, 0, 1).unwrap();
        w[v] = Weight::real(1.0);
        w[e] = Weight::real(1.0);
        let m = cluster_to_ising(&lat, &w, true).unwrap();
        assert_eq!(m.n_spins, 4);
        let field = m.terms.iter().find(|t| t.source == Some(v)).unwrap();
        assert_eq!((field.kind, field.v), (TermKind::Field, Weight::real(1.0)));
        let pair = m.terms.iter().find(|t| t.source == Some(e)).unwrap();
        assert_eq!(pair.kind, TermKind::Pair);
        assert!(pair.v.approx_eq(Weight::real(0.0), 1e-15));
        let other = lat.find(Role::VerticalEdge, 1, 1).unwrap();
        let t = m.terms.iter().find(|t| t.source == Some(other)).unwrap();
        assert!(t.v.approx_eq(Weight::real(1.0), 1e-15));
        assert!(cluster_to_ising(&lat, &w[1..], true).is_err());
    }

    #[test]
    fn square_plaquettes() {
        let lat = Lattice::new(LatticeSpec::square(3, 3)).unwrap();
        let m = cluster_to_ising(&lat, &vec![Weight::real(0.5); 9], false).unwrap();
        assert_eq!(m.n_spins, 5);
        let edge = lat.find(Role::Plain, 1, 1).unwrap();
        let t = m.terms.iter().find(|t| t.source == Some(edge)).unwrap();
        assert_eq!((t.kind, t.spins.len()), (TermKind::Plaquette, 3));
        let lat = Lattice::new(LatticeSpec::square(4, 4)).unwrap();
        let m = cluster_to_ising(&lat, &vec![Weight::real(0.5); 16], false).unwrap();
        let inner = lat.find(Role::Plain, 2, 2).unwrap();
        let t = m.terms.iter().find(|t| t.source == Some(inner)).unwrap();
        assert_eq!((t.kind, t.spins.len()), (TermKind::Plaquette, 4));
        assert_eq!(m.terms.len(), 16);
    }

    #[test]
    fn dump_shape() {
        let m = toric_edge_model(2, &[(0, 1, Weight::Infinity)]).unwrap();
        let r = dump_terms(&m);
        assert_eq!(r.len(), 1);
        assert!(r[0].v_inf);
    }
}
