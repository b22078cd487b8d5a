//! Measurement directions, outcomes and the extended-complex weight `W`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Lattice, Sublattice};

#[derive(Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("direction out of range: theta={theta}, phi={phi}")]
    BadDirection { theta: f64, phi: f64 },
    #[error("born outcome policy is only available in the stabilizer engine")]
    BornOutsideStabilizer,
    #[error("layout has {directions} directions but {policies} outcome policies")]
    LengthMismatch { directions: usize, policies: usize },
}

/// Bloch-sphere axis `n = (sin t cos p, sin t sin p, cos t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub theta: f64,
    pub phi: f64,
}

impl Direction {
    pub fn new(theta: f64, phi: f64) -> Result<Self, MeasureError> {
        if !(0.0..=PI).contains(&theta) || !(0.0..2.0 * PI).contains(&phi) {
            return Err(MeasureError::BadDirection { theta, phi });
        }
        Ok(Self { theta, phi })
    }

    /// Angle `theta` from +z inside the x-z plane; negative angles tilt toward -x.
    pub fn xz(theta: f64) -> Self {
        if theta >= 0.0 {
            Self { theta, phi: 0.0 }
        } else {
            Self { theta: -theta, phi: PI }
        }
    }

    pub fn pauli(p: Pauli) -> Self {
        match p {
            Pauli::X => Self { theta: PI / 2.0, phi: 0.0 },
            Pauli::Y => Self { theta: PI / 2.0, phi: PI / 2.0 },
            Pauli::Z => Self { theta: 0.0, phi: 0.0 },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub fn sign(self) -> i32 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Outcome::Minus
        } else {
            Outcome::Plus
        }
    }

    pub fn is_minus(self) -> bool {
        self == Outcome::Minus
    }

    pub fn flip(self) -> Self {
        Outcome::from_bit(!self.is_minus())
    }
}

/// Extended complex number on the Riemann sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weight {
    Finite(C64),
    Infinity,
}

impl Weight {
    pub fn real(x: f64) -> Self {
        Weight::Finite(C64::new(x, 0.0))
    }

    pub fn conj(self) -> Self {
        match self {
            Weight::Finite(z) => Weight::Finite(z.conj()),
            Weight::Infinity => Weight::Infinity,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Weight::Infinity)
    }

    pub fn finite(self) -> Option<C64> {
        match self {
            Weight::Finite(z) => Some(z),
            Weight::Infinity => None,
        }
    }

    /// `-1 / conj(W)`, the weight of the antipodal outcome.
    pub fn antipode(self) -> Self {
        match self {
            Weight::Infinity => Weight::Finite(C64::new(0.0, 0.0)),
            Weight::Finite(z) if z == C64::new(0.0, 0.0) => Weight::Infinity,
            Weight::Finite(z) => Weight::Finite(-1.0 / z.conj()),
        }
    }

    /// Factor pair `(1, W)`, or `(0, 1)` at infinity.
    pub fn pair(self) -> (C64, C64) {
        match self {
            Weight::Finite(z) => (C64::new(1.0, 0.0), z),
            Weight::Infinity => (C64::new(0.0, 0.0), C64::new(1.0, 0.0)),
        }
    }

    /// Rebuild a weight from a projective pair `(a, b)` meaning `b / a`.
    pub fn from_pair(a: C64, b: C64) -> Self {
        if a.norm() <= 1e-300 {
            Weight::Infinity
        } else {
            Weight::Finite(b / a)
        }
    }

    pub fn approx_eq(self, other: Weight, tol: f64) -> bool {
        match (self, other) {
            (Weight::Infinity, Weight::Infinity) => true,
            (Weight::Finite(a), Weight::Finite(b)) => (a - b).norm() <= tol * (1.0 + a.norm()),
            _ => false,
        }
    }
}

pub fn direction_weight(d: Direction) -> Weight {
    if d.theta >= PI {
        return Weight::Infinity;
    }
    Weight::Finite(C64::from_polar((d.theta / 2.0).tan(), d.phi))
}

pub fn outcome_weight(w: Weight, mu: Outcome) -> Weight {
    match mu {
        Outcome::Plus => w,
        Outcome::Minus => w.antipode(),
    }
}

/// Weight of the state `|mu, n>`; exact at the poles.
pub fn measured_weight(d: Direction, mu: Outcome) -> Weight {
    outcome_weight(direction_weight(d), mu)
}

/// Normalized ket `N (1, W)`.
pub fn local_state(w: Weight) -> [C64; 2] {
    match w {
        Weight::Infinity => [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        Weight::Finite(z) => {
            let n = 1.0 / (1.0 + z.norm_sqr()).sqrt();
            [C64::new(n, 0.0), z * n]
        }
    }
}

/// Bra coefficients `<W|k>`; `conjugate = false` drops the complex conjugation.
pub fn bra(w: Weight, conjugate: bool) -> [C64; 2] {
    let [a, b] = local_state(w);
    if conjugate {
        [a.conj(), b.conj()]
    } else {
        [a, b]
    }
}

pub fn hadamard_weight(w: Weight) -> Weight {
    let one = C64::new(1.0, 0.0);
    match w {
        Weight::Infinity => Weight::Finite(-one),
        Weight::Finite(z) => {
            let den = one + z;
            if den.norm() == 0.0 {
                Weight::Infinity
            } else {
                Weight::Finite((one - z) / den)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomePolicy {
    Plus,
    Minus,
    Random,
    Born,
}

/// Per-site directions and outcome policies. Entries for unmeasured boundary
/// sites are carried along and ignored by the engines.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementLayout {
    pub directions: Vec<Direction>,
    pub policies: Vec<OutcomePolicy>,
    pub seed: u64,
}

impl MeasurementLayout {
    pub fn uniform(n: usize, d: Direction, policy: OutcomePolicy, seed: u64) -> Self {
        Self { directions: vec![d; n], policies: vec![policy; n], seed }
    }
}

/// Per-sublattice directions. With `sign_random`, each coupling site instead
/// takes `Direction::xz(+-theta)` of `coupling` with a random sign drawn from
/// `seed`.
pub fn sublattice_layout(
    lat: &Lattice,
    spin: Direction,
    coupling: Direction,
    policy: OutcomePolicy,
    sign_random: bool,
    seed: u64,
) -> MeasurementLayout {
    let directions = (0..lat.len())
        .map(|i| match lat.sublattice(i) {
            Sublattice::Spin => spin,
            Sublattice::Coupling if sign_random => {
                let flip = counter_hash(seed ^ 0xA076_1D64_78BD_642F, i as u64, 0) & 1 == 1;
                Direction::xz(if flip { -coupling.theta } else { coupling.theta })
            }
            Sublattice::Coupling => coupling,
        })
        .collect();
    MeasurementLayout { directions, policies: vec![policy; lat.len()], seed }
}

/// Concrete per-site `(direction, outcome)` assignment.
pub type Concrete = Vec<(Direction, Outcome)>;

/// SplitMix64 finalizer over `(seed, a, b)`; the counter-based hash behind every
/// random draw in the crate.
pub fn counter_hash(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw in `[0, 1)` from the counter hash.
pub fn counter_uniform(seed: u64, a: u64, b: u64) -> f64 {
    (counter_hash(seed, a, b) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn sample_layout(layout: &MeasurementLayout, trajectory: u64) -> Result<Concrete, MeasureError> {
    if layout.directions.len() != layout.policies.len() {
        return Err(MeasureError::LengthMismatch {
            directions: layout.directions.len(),
            policies: layout.policies.len(),
        });
    }
    layout
        .directions
        .iter()
        .zip(&layout.policies)
        .enumerate()
        .map(|(i, (&d, &p))| {
            let mu = match p {
                OutcomePolicy::Plus => Outcome::Plus,
                OutcomePolicy::Minus => Outcome::Minus,
                OutcomePolicy::Random => {
                    Outcome::from_bit(counter_hash(layout.seed, i as u64, trajectory) & 1 == 1)
                }
                OutcomePolicy::Born => return Err(MeasureError::BornOutsideStabilizer),
            };
            Ok((d, mu))
        })
        .collect()
}

/// Projector `|W><W|` with the physical (conjugated) bra.
pub fn projector(w: Weight) -> [[C64; 2]; 2] {
    let k = local_state(w);
    [[k[0] * k[0].conj(), k[0] * k[1].conj()], [k[1] * k[0].conj(), k[1] * k[1].conj()]]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn direction_examples() {
        assert_eq!(direction_weight(Direction::new(0.0, 0.0).unwrap()), Weight::real(0.0));
        assert!(direction_weight(Direction::pauli(Pauli::X)).approx_eq(Weight::real(1.0), 1e-15));
        assert!(direction_weight(Direction::pauli(Pauli::Y)).approx_eq(Weight::Finite(c(0.0, 1.0)), 1e-15));
        assert_eq!(direction_weight(Direction::new(PI, 0.3).unwrap()), Weight::Infinity);
        assert!(Direction::new(-0.1, 0.0).is_err());
        assert!(Direction::new(0.1, 2.0 * PI).is_err());
    }

    #[test]
    fn outcome_examples() {
        assert!(outcome_weight(Weight::real(1.0), Outcome::Minus).approx_eq(Weight::real(-1.0), 1e-15));
        assert_eq!(outcome_weight(Weight::real(0.0), Outcome::Minus), Weight::Infinity);
        let w = outcome_weight(Weight::Finite(c(0.0, 1.0)), Outcome::Minus);
        assert!(w.approx_eq(Weight::Finite(c(0.0, -1.0)), 1e-15));
        assert_eq!(outcome_weight(Weight::Infinity, Outcome::Minus), Weight::real(0.0));
    }

    #[test]
    fn local_state_examples() {
        assert_eq!(local_state(Weight::real(0.0)), [c(1.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(local_state(Weight::Infinity), [c(0.0, 0.0), c(1.0, 0.0)]);
        let s = local_state(Weight::real(1.0));
        assert!((s[0] - s[1]).norm() < 1e-15 && (s[0].re - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn local_state_matches_bloch_vector() {
        // |+n> = cos(t/2)|0> + e^{ip} sin(t/2)|1>, up to phase.
        let d = Direction::new(1.1, 4.0).unwrap();
        let s = local_state(measured_weight(d, Outcome::Plus));
        let expect = [c((d.theta / 2.0).cos(), 0.0), C64::from_polar((d.theta / 2.0).sin(), d.phi)];
        assert!((s[0] - expect[0]).norm() < 1e-14 && (s[1] - expect[1]).norm() < 1e-14);
    }

    #[test]
    fn hadamard_examples() {
        assert!(hadamard_weight(Weight::real(1.0)).approx_eq(Weight::real(0.0), 1e-15));
        assert!(hadamard_weight(Weight::real(0.0)).approx_eq(Weight::real(1.0), 1e-15));
        assert!(hadamard_weight(Weight::real(3.0)).approx_eq(Weight::real(-0.5), 1e-15));
        assert_eq!(hadamard_weight(Weight::real(-1.0)), Weight::Infinity);
        assert!(hadamard_weight(Weight::Infinity).approx_eq(Weight::real(-1.0), 1e-15));
    }

    #[test]
    fn sampling() {
        let n = 10_000;
        let d = Direction::pauli(Pauli::X);
        let forced = MeasurementLayout::uniform(n, d, OutcomePolicy::Plus, 3);
        assert!(sample_layout(&forced, 0).unwrap().iter().all(|&(_, m)| m == Outcome::Plus));
        let rnd = MeasurementLayout::uniform(n, d, OutcomePolicy::Random, 7);
        let a = sample_layout(&rnd, 1).unwrap();
        assert_eq!(a, sample_layout(&rnd, 1).unwrap());
        assert_ne!(a, sample_layout(&rnd, 2).unwrap());
        let frac = a.iter().filter(|&&(_, m)| m == Outcome::Plus).count() as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
        let born = MeasurementLayout::uniform(3, d, OutcomePolicy::Born, 0);
        assert_eq!(sample_layout(&born, 0), Err(MeasureError::BornOutsideStabilizer));
    }
}
