//! Stabilizer simulation of random Pauli bulk measurements.
//!
//! The lattice is never held in full. Sites are created in enumeration order,
//! entangled with their already-present neighbours, and measured as soon as
//! their last neighbour exists; the freed slot is reset to `|+>` and reused.
//! The register therefore stays at about one row plus the boundary.
//!
//! Two tableaus share the [`Stabilizer`] trait: [`Tableau`] keeps signs and
//! destabilizers (outcomes, stabilizer signs), [`UnsignedTableau`] keeps only
//! the stabilizer X/Z bits, which is all entropies need.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Lattice, LatticeKind, LatticeSpec, Role};
use crate::measure::{counter_hash, counter_uniform, Concrete, Direction, Outcome, Pauli};

#[derive(Debug, Error, PartialEq)]
pub enum StabError {
    #[error("qubit {q} out of range for {n} qubits")]
    Range { q: usize, n: usize },
    #[error("forced outcome {forced:?} contradicts the deterministic outcome")]
    ForcedInconsistent { forced: Outcome },
    #[error("regions overlap")]
    Overlap,
    #[error("invalid Pauli mix ({0}, {1}, {2})")]
    BadMix(f64, f64, f64),
    #[error("site {0} is not on the boundary")]
    NotBoundary(usize),
}

pub trait Stabilizer {
    fn n(&self) -> usize;
    fn h(&mut self, q: usize);
    fn s(&mut self, q: usize);
    /// Pauli Z; only changes signs.
    fn z(&mut self, q: usize);
    fn cz(&mut self, a: usize, b: usize);
    /// Measure `Z_q`. `coin` decides a random outcome unless `forced` is set.
    /// Returns the outcome and whether it was deterministic.
    fn measure_z(&mut self, q: usize, forced: Option<Outcome>, coin: bool) -> Result<(Outcome, bool), StabError>;
    /// GF(2) rank of the stabilizer generators restricted to `qubits`.
    fn restricted_rank(&self, qubits: &[usize]) -> usize;

    /// Number of stabilizer generator rows.
    fn rows(&self) -> usize;
    /// `(x, z)` bits of generator `row` on qubit `q`.
    fn bits(&self, row: usize, q: usize) -> (bool, bool);

    /// Entropies in units of `ln 2` of every prefix `qubits[..k]`, `k = 1..=len`,
    /// for a pure register. Columns are inserted into a GF(2) basis one qubit
    /// at a time.
    fn prefix_entropy_bits(&self, qubits: &[usize]) -> Vec<usize> {
        let m = self.rows();
        let w = words(m);
        let mut basis: Vec<(usize, Vec<u64>)> = Vec::new();
        let mut out = Vec::with_capacity(qubits.len());
        for (k, &q) in qubits.iter().enumerate() {
            for pick in [0, 1] {
                let mut col = vec![0u64; w];
                for row in 0..m {
                    let (xb, zb) = self.bits(row, q);
                    if (pick == 0 && xb) || (pick == 1 && zb) {
                        flip(&mut col, row);
                    }
                }
                for (lead, b) in &basis {
                    if bit(&col, *lead) {
                        for (c, v) in col.iter_mut().zip(b) {
                            *c ^= v;
                        }
                    }
                }
                if let Some(lead) = (0..m).find(|&r| bit(&col, r)) {
                    basis.push((lead, col));
                }
            }
            out.push(basis.len() - (k + 1));
        }
        out
    }

    fn sdg(&mut self, q: usize) {
        self.s(q);
        self.z(q);
    }

    /// Measure a single-qubit Pauli, leaving the qubit rotated so that the
    /// post-measurement state is a `Z` eigenstate.
    fn measure_pauli(&mut self, q: usize, p: Pauli, forced: Option<Outcome>, coin: bool) -> Result<(Outcome, bool), StabError> {
        match p {
            Pauli::X => self.h(q),
            Pauli::Y => {
                self.sdg(q);
                self.h(q);
            }
            Pauli::Z => {}
        }
        self.measure_z(q, forced, coin)
    }

    /// Return a measured qubit (in a `Z` eigenstate) to `|+>`.
    fn reset_plus(&mut self, q: usize, outcome: Outcome) {
        self.h(q);
        if outcome.is_minus() {
            self.z(q);
        }
    }

    /// Stabilizer entropy of `qubits` in units of `ln 2`.
    fn entropy_bits(&self, qubits: &[usize]) -> usize {
        self.restricted_rank(qubits) - qubits.len()
    }

    fn entropy(&self, qubits: &[usize]) -> f64 {
        self.entropy_bits(qubits) as f64 * LN_2
    }

    fn mutual_info(&self, a: &[usize], b: &[usize]) -> Result<f64, StabError> {
        if a.iter().any(|q| b.contains(q)) {
            return Err(StabError::Overlap);
        }
        let ab: Vec<usize> = a.iter().chain(b).copied().collect();
        let bits = self.entropy_bits(a) + self.entropy_bits(b) - self.entropy_bits(&ab);
        Ok(bits as f64 * LN_2)
    }
}

fn words(n: usize) -> usize {
    n.div_ceil(64)
}

#[inline]
fn bit(row: &[u64], q: usize) -> bool {
    (row[q >> 6] >> (q & 63)) & 1 == 1
}

#[inline]
fn flip(row: &mut [u64], q: usize) {
    row[q >> 6] ^= 1 << (q & 63);
}

#[inline]
fn set(row: &mut [u64], q: usize, v: bool) {
    let m = 1u64 << (q & 63);
    if v {
        row[q >> 6] |= m;
    } else {
        row[q >> 6] &= !m;
    }
}

/// Rank over GF(2) of packed bit vectors.
fn gf2_rank(mut rows: Vec<Vec<u64>>) -> usize {
    let mut rank = 0;
    let w = rows.first().map_or(0, |r| r.len());
    for col in 0..w * 64 {
        let Some(p) = (rank..rows.len()).find(|&i| bit(&rows[i], col)) else { continue };
        rows.swap(rank, p);
        let pivot = rows[rank].clone();
        for (i, r) in rows.iter_mut().enumerate() {
            if i != rank && bit(r, col) {
                for (a, b) in r.iter_mut().zip(&pivot) {
                    *a ^= b;
                }
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

fn restrict(x: &[u64], z: &[u64], qubits: &[usize]) -> Vec<u64> {
    let mut out = vec![0u64; words(2 * qubits.len())];
    for (j, &q) in qubits.iter().enumerate() {
        if bit(x, q) {
            flip(&mut out, 2 * j);
        }
        if bit(z, q) {
            flip(&mut out, 2 * j + 1);
        }
    }
    out
}

/// Signed tableau with destabilizers: rows `0..n` destabilizers, `n..2n`
/// stabilizers, row `2n` scratch. Starts in `|+..+>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tableau {
    n: usize,
    w: usize,
    x: Vec<u64>,
    z: Vec<u64>,
    r: Vec<bool>,
}

impl Tableau {
    pub fn new(n: usize) -> Self {
        let w = words(n);
        let mut t = Self { n, w, x: vec![0; (2 * n + 1) * w], z: vec![0; (2 * n + 1) * w], r: vec![false; 2 * n + 1] };
        for i in 0..n {
            // Destabilizer Z_i, stabilizer X_i.
            flip(&mut t.z[i * w..(i + 1) * w], i);
            flip(&mut t.x[(n + i) * w..(n + i + 1) * w], i);
        }
        t
    }

    fn xb(&self, row: usize, q: usize) -> bool {
        bit(&self.x[row * self.w..(row + 1) * self.w], q)
    }

    fn zb(&self, row: usize, q: usize) -> bool {
        bit(&self.z[row * self.w..(row + 1) * self.w], q)
    }

    /// Row `h` := row `i` * row `h`, with the phase tracked mod 4.
    fn rowsum(&mut self, h: usize, i: usize) {
        let w = self.w;
        let mut sum: i64 = 2 * (self.r[h] as i64) + 2 * (self.r[i] as i64);
        for k in 0..w {
            let (a, b) = (self.x[i * w + k], self.z[i * w + k]);
            let (c, d) = (self.x[h * w + k], self.z[h * w + k]);
            let plus = (a & b & d & !c) | (a & !b & d & c) | (!a & b & c & !d);
            let minus = (a & b & c & !d) | (a & !b & d & !c) | (!a & b & c & d);
            sum += plus.count_ones() as i64 - minus.count_ones() as i64;
            self.x[h * w + k] = a ^ c;
            self.z[h * w + k] = b ^ d;
        }
        self.r[h] = sum.rem_euclid(4) == 2;
    }

    /// Sign of a Pauli string if it belongs to the stabilizer group.
    pub fn stabilizer_sign(&mut self, ops: &[(usize, Pauli)]) -> Option<Outcome> {
        let (n, w) = (self.n, self.w);
        let mut px = vec![0u64; w];
        let mut pz = vec![0u64; w];
        for &(q, p) in ops {
            match p {
                Pauli::X => flip(&mut px, q),
                Pauli::Z => flip(&mut pz, q),
                Pauli::Y => {
                    flip(&mut px, q);
                    flip(&mut pz, q);
                }
            }
        }
        let anticommutes = |t: &Self, row: usize| {
            let mut par = 0u32;
            for k in 0..w {
                par ^= ((t.x[row * w + k] & pz[k]) ^ (t.z[row * w + k] & px[k])).count_ones() & 1;
            }
            par == 1
        };
        if (n..2 * n).any(|row| anticommutes(self, row)) {
            return None;
        }
        let s = 2 * n;
        self.x[s * w..(s + 1) * w].fill(0);
        self.z[s * w..(s + 1) * w].fill(0);
        self.r[s] = false;
        for i in 0..n {
            if anticommutes(self, i) {
                self.rowsum(s, i + n);
            }
        }
        if self.x[s * w..(s + 1) * w] != px[..] || self.z[s * w..(s + 1) * w] != pz[..] {
            return None;
        }
        Some(Outcome::from_bit(self.r[s]))
    }

    /// Symplectic consistency: stabilizers commute pairwise, each destabilizer
    /// anticommutes with exactly its partner.
    pub fn is_consistent(&self) -> bool {
        let w = self.w;
        let sp = |a: usize, b: usize| {
            let mut par = 0u32;
            for k in 0..w {
                par ^= ((self.x[a * w + k] & self.z[b * w + k]) ^ (self.z[a * w + k] & self.x[b * w + k])).count_ones() & 1;
            }
            par == 1
        };
        for i in 0..self.n {
            for j in 0..self.n {
                if sp(self.n + i, self.n + j) || sp(i, self.n + j) != (i == j) {
                    return false;
                }
            }
        }
        true
    }
}

impl Stabilizer for Tableau {
    fn n(&self) -> usize {
        self.n
    }

    fn rows(&self) -> usize {
        self.n
    }

    fn bits(&self, row: usize, q: usize) -> (bool, bool) {
        (self.xb(self.n + row, q), self.zb(self.n + row, q))
    }

    fn h(&mut self, q: usize) {
        for row in 0..2 * self.n {
            let (xb, zb) = (self.xb(row, q), self.zb(row, q));
            self.r[row] ^= xb & zb;
            let o = row * self.w;
            set(&mut self.x[o..o + self.w], q, zb);
            set(&mut self.z[o..o + self.w], q, xb);
        }
    }

    fn s(&mut self, q: usize) {
        for row in 0..2 * self.n {
            let (xb, zb) = (self.xb(row, q), self.zb(row, q));
            self.r[row] ^= xb & zb;
            if xb {
                let o = row * self.w;
                flip(&mut self.z[o..o + self.w], q);
            }
        }
    }

    fn z(&mut self, q: usize) {
        for row in 0..2 * self.n {
            self.r[row] ^= self.xb(row, q);
        }
    }

    fn cz(&mut self, a: usize, b: usize) {
        for row in 0..2 * self.n {
            let (xa, xb) = (self.xb(row, a), self.xb(row, b));
            if !(xa || xb) {
                continue;
            }
            let (za, zb) = (self.zb(row, a), self.zb(row, b));
            self.r[row] ^= xa & xb & (za ^ zb);
            let o = row * self.w;
            if xb {
                flip(&mut self.z[o..o + self.w], a);
            }
            if xa {
                flip(&mut self.z[o..o + self.w], b);
            }
        }
    }

    fn measure_z(&mut self, q: usize, forced: Option<Outcome>, coin: bool) -> Result<(Outcome, bool), StabError> {
        if q >= self.n {
            return Err(StabError::Range { q, n: self.n });
        }
        let (n, w) = (self.n, self.w);
        if let Some(p) = (n..2 * n).find(|&row| self.xb(row, q)) {
            for row in 0..2 * n {
                if row != p && self.xb(row, q) {
                    self.rowsum(row, p);
                }
            }
            let d = p - n;
            self.x.copy_within(p * w..(p + 1) * w, d * w);
            self.z.copy_within(p * w..(p + 1) * w, d * w);
            self.r[d] = self.r[p];
            self.x[p * w..(p + 1) * w].fill(0);
            self.z[p * w..(p + 1) * w].fill(0);
            flip(&mut self.z[p * w..(p + 1) * w], q);
            let outcome = forced.unwrap_or(Outcome::from_bit(coin));
            self.r[p] = outcome.is_minus();
            return Ok((outcome, false));
        }
        let s = 2 * n;
        self.x[s * w..(s + 1) * w].fill(0);
        self.z[s * w..(s + 1) * w].fill(0);
        self.r[s] = false;
        for i in 0..n {
            if self.xb(i, q) {
                self.rowsum(s, i + n);
            }
        }
        let outcome = Outcome::from_bit(self.r[s]);
        if let Some(f) = forced {
            if f != outcome {
                return Err(StabError::ForcedInconsistent { forced: f });
            }
        }
        Ok((outcome, true))
    }

    fn restricted_rank(&self, qubits: &[usize]) -> usize {
        let w = self.w;
        let rows = (self.n..2 * self.n)
            .map(|row| restrict(&self.x[row * w..(row + 1) * w], &self.z[row * w..(row + 1) * w], qubits))
            .collect();
        gf2_rank(rows)
    }
}

/// Stabilizer generators only, without signs. Starts in `|+..+>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnsignedTableau {
    n: usize,
    w: usize,
    x: Vec<u64>,
    z: Vec<u64>,
}

impl UnsignedTableau {
    pub fn new(n: usize) -> Self {
        let w = words(n);
        let mut x = vec![0; n * w];
        for i in 0..n {
            flip(&mut x[i * w..(i + 1) * w], i);
        }
        Self { n, w, x, z: vec![0; n * w] }
    }
}

impl Stabilizer for UnsignedTableau {
    fn n(&self) -> usize {
        self.n
    }

    fn rows(&self) -> usize {
        self.n
    }

    fn bits(&self, row: usize, q: usize) -> (bool, bool) {
        let o = row * self.w;
        (bit(&self.x[o..o + self.w], q), bit(&self.z[o..o + self.w], q))
    }

    fn h(&mut self, q: usize) {
        let (word, m) = (q >> 6, 1u64 << (q & 63));
        for row in 0..self.n {
            let k = row * self.w + word;
            let (xv, zv) = (self.x[k] & m, self.z[k] & m);
            self.x[k] = (self.x[k] & !m) | zv;
            self.z[k] = (self.z[k] & !m) | xv;
        }
    }

    fn s(&mut self, q: usize) {
        let (word, m) = (q >> 6, 1u64 << (q & 63));
        for row in 0..self.n {
            let k = row * self.w + word;
            self.z[k] ^= self.x[k] & m;
        }
    }

    fn z(&mut self, _q: usize) {}

    fn cz(&mut self, a: usize, b: usize) {
        let (wa, ma) = (a >> 6, 1u64 << (a & 63));
        let (wb, mb) = (b >> 6, 1u64 << (b & 63));
        for row in 0..self.n {
            let o = row * self.w;
            if self.x[o + wa] & ma != 0 {
                self.z[o + wb] ^= mb;
            }
            if self.x[o + wb] & mb != 0 {
                self.z[o + wa] ^= ma;
            }
        }
    }

    fn measure_z(&mut self, q: usize, forced: Option<Outcome>, coin: bool) -> Result<(Outcome, bool), StabError> {
        if q >= self.n {
            return Err(StabError::Range { q, n: self.n });
        }
        let (w, word, m) = (self.w, q >> 6, 1u64 << (q & 63));
        let Some(p) = (0..self.n).find(|&row| self.x[row * w + word] & m != 0) else {
            // The sign is not tracked; report the forced value or the coin.
            return Ok((forced.unwrap_or(Outcome::from_bit(coin)), true));
        };
        for row in 0..self.n {
            if row != p && self.x[row * w + word] & m != 0 {
                for k in 0..w {
                    self.x[row * w + k] ^= self.x[p * w + k];
                    self.z[row * w + k] ^= self.z[p * w + k];
                }
            }
        }
        self.x[p * w..(p + 1) * w].fill(0);
        self.z[p * w..(p + 1) * w].fill(0);
        self.z[p * w + word] = m;
        Ok((forced.unwrap_or(Outcome::from_bit(coin)), false))
    }

    fn restricted_rank(&self, qubits: &[usize]) -> usize {
        let w = self.w;
        let rows = (0..self.n)
            .map(|row| restrict(&self.x[row * w..(row + 1) * w], &self.z[row * w..(row + 1) * w], qubits))
            .collect();
        gf2_rank(rows)
    }
}

/// Probabilities of bulk X, Y and Z measurements.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliMix {
    pub p_x: f64,
    pub p_y: f64,
    pub p_z: f64,
}

impl PauliMix {
    pub fn new(p_x: f64, p_y: f64, p_z: f64) -> Result<Self, StabError> {
        let ok = [p_x, p_y, p_z].iter().all(|&p| p >= 0.0) && (p_x + p_y + p_z - 1.0).abs() < 1e-9;
        if !ok {
            return Err(StabError::BadMix(p_x, p_y, p_z));
        }
        Ok(Self { p_x, p_y, p_z })
    }

    pub fn pick(&self, u: f64) -> Pauli {
        if u < self.p_x {
            Pauli::X
        } else if u < self.p_x + self.p_y {
            Pauli::Y
        } else {
            Pauli::Z
        }
    }
}

/// Which sites are measured in which basis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabModel {
    pub mix: PauliMix,
    /// Lieb only: measure every vertex in X, including the top row, so the
    /// boundary is the top row of horizontal edges.
    pub x_vertex: bool,
}

/// How outcomes are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcomes {
    Born,
    Forced(Outcome),
}

/// Result of a sliding run.
#[derive(Clone, Debug)]
pub struct SlidingRun<T> {
    pub tableau: T,
    /// Boundary sites in order and the register slot of each.
    pub boundary: Vec<usize>,
    pub slots: Vec<usize>,
    /// `(site, basis, outcome)` for every measured site, in measurement order.
    pub record: Vec<(usize, Pauli, Outcome)>,
}

impl<T: Stabilizer> SlidingRun<T> {
    pub fn slots_of(&self, positions: &[usize]) -> Vec<usize> {
        positions.iter().map(|&p| self.slots[p]).collect()
    }

    /// Concrete layout reproducing the run, for the dense oracle.
    pub fn concrete(&self, n_sites: usize) -> Concrete {
        let mut c = vec![(Direction::pauli(Pauli::Z), Outcome::Plus); n_sites];
        for &(site, p, mu) in &self.record {
            c[site] = (Direction::pauli(p), mu);
        }
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Step {
    Create(usize),
    Cz(usize, usize),
    Measure(usize),
}

fn measured_sites(lat: &Lattice, model: &StabModel) -> Vec<bool> {
    lat.sites()
        .iter()
        .map(|s| !s.boundary || (model.x_vertex && s.role == Role::Vertex))
        .collect()
}

/// Eager schedule: a site is measured right after its last neighbour is created.
fn schedule(lat: &Lattice, measured: &[bool]) -> (Vec<Step>, usize) {
    let n = lat.len();
    let last: Vec<usize> = (0..n)
        .map(|i| lat.neighbors(i).expect("site").iter().copied().chain([i]).max().unwrap_or(i))
        .collect();
    let mut due: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        if measured[i] {
            due[last[i]].push(i);
        }
    }
    let mut steps = Vec::new();
    let (mut live, mut peak) = (0usize, 0usize);
    for s in 0..n {
        steps.push(Step::Create(s));
        live += 1;
        peak = peak.max(live);
        for &j in lat.neighbors(s).expect("site") {
            if j < s {
                steps.push(Step::Cz(j, s));
            }
        }
        for &m in &due[s] {
            steps.push(Step::Measure(m));
            live -= 1;
        }
    }
    (steps, peak)
}

/// Basis for site `i` of trajectory `traj`.
pub fn site_basis(lat: &Lattice, model: &StabModel, seed: u64, traj: u64, i: usize) -> Pauli {
    if model.x_vertex && lat.sites()[i].role == Role::Vertex {
        return Pauli::X;
    }
    model.mix.pick(counter_uniform(seed, i as u64, traj))
}

/// Outcome coin for site `i`; independent of the basis draw.
pub fn site_coin(seed: u64, traj: u64, i: usize) -> bool {
    counter_hash(seed ^ 0x5851_F42D_4C95_7F2D, i as u64, traj) & 1 == 1
}

/// Sliding protocol with bases from `basis(site)`.
pub fn sliding_with<T: Stabilizer>(
    lat: &Lattice,
    model: &StabModel,
    make: impl FnOnce(usize) -> T,
    mut basis: impl FnMut(usize) -> Pauli,
    outcomes: Outcomes,
    mut coin: impl FnMut(usize) -> bool,
) -> Result<SlidingRun<T>, StabError> {
    let measured = measured_sites(lat, model);
    let (steps, peak) = schedule(lat, &measured);
    let mut t = make(peak);
    let mut free: Vec<usize> = (0..peak).rev().collect();
    let mut slot = vec![usize::MAX; lat.len()];
    let mut record = Vec::new();
    for step in steps {
        match step {
            Step::Create(s) => slot[s] = free.pop().expect("register sized by schedule"),
            Step::Cz(a, b) => t.cz(slot[a], slot[b]),
            Step::Measure(m) => {
                let p = basis(m);
                let forced = match outcomes {
                    Outcomes::Born => None,
                    Outcomes::Forced(o) => Some(o),
                };
                let (mu, _) = t.measure_pauli(slot[m], p, forced, coin(m))?;
                t.reset_plus(slot[m], mu);
                record.push((m, p, mu));
                free.push(slot[m]);
            }
        }
    }
    let boundary: Vec<usize> = (0..lat.len()).filter(|&i| !measured[i]).collect();
    let slots = boundary.iter().map(|&b| slot[b]).collect();
    Ok(SlidingRun { tableau: t, boundary, slots, record })
}

/// One trajectory of the sliding protocol with Born outcomes (signed tableau).
pub fn sliding_run(lat: &Lattice, model: &StabModel, seed: u64, traj: u64) -> Result<SlidingRun<Tableau>, StabError> {
    sliding_with(
        lat,
        model,
        Tableau::new,
        |i| site_basis(lat, model, seed, traj, i),
        Outcomes::Born,
        |i| site_coin(seed, traj, i),
    )
}

/// Same trajectory without signs; only entropies are meaningful.
pub fn sliding_run_unsigned(lat: &Lattice, model: &StabModel, seed: u64, traj: u64) -> SlidingRun<UnsignedTableau> {
    sliding_with(
        lat,
        model,
        UnsignedTableau::new,
        |i| site_basis(lat, model, seed, traj, i),
        Outcomes::Born,
        |_| false,
    )
    .expect("unsigned runs cannot fail")
}

/// Contiguous interval `[start, start + len)` on a ring of `l` positions.
pub fn ring_interval(start: usize, len: usize, l: usize) -> Vec<usize> {
    (0..len).map(|k| (start + k) % l).collect()
}

/// Mean over trajectories and over `starts` evenly spaced origins of the
/// interval entropy `S([s, s + L_A))`, for `L_A = 1..L`.
pub fn entropy_profile(family: &Family, l: usize, mix: PauliMix, n_traj: u64, seed: u64, starts: usize) -> Vec<(f64, f64)> {
    let Ok(lat) = family.lattice(l) else { return Vec::new() };
    let model = StabModel { mix, x_vertex: family.x_vertex };
    let per: Vec<Vec<f64>> = (0..n_traj)
        .into_par_iter()
        .map(|t| {
            let run = sliding_run_unsigned(&lat, &model, seed, t);
            let n = run.boundary.len();
            let mut sum = vec![0.0; n - 1];
            for k in 0..starts.max(1) {
                let order = run.slots_of(&ring_interval(k * n / starts.max(1), n - 1, n));
                for (acc, bits) in sum.iter_mut().zip(run.tableau.prefix_entropy_bits(&order)) {
                    *acc += bits as f64 * LN_2 / starts.max(1) as f64;
                }
            }
            sum
        })
        .collect();
    let n = per.first().map_or(0, |v| v.len());
    (0..n)
        .map(|k| {
            let mut acc = Accumulator::default();
            for v in &per {
                acc.push(v[k]);
            }
            ((k + 1) as f64, acc.mean)
        })
        .collect()
}

/// Antipodal regions `A = [0, la)` and `B = [l/2, l/2 + la)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RegionPair {
    pub l: usize,
    pub la: usize,
}

impl RegionPair {
    pub fn antipodal(l: usize, la: usize) -> Self {
        Self { l, la }
    }

    pub fn a(&self) -> Vec<usize> {
        ring_interval(0, self.la, self.l)
    }

    pub fn b(&self) -> Vec<usize> {
        ring_interval(self.l / 2, self.la, self.l)
    }

    pub fn label(&self) -> String {
        format!("A=0..{};B={}..{}", self.la, self.l / 2, self.l / 2 + self.la)
    }
}

/// Lattice family of a sweep; `L` is the number of boundary qubits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub kind: LatticeKind,
    pub bottom: crate::lattice::Bottom,
    pub x_vertex: bool,
    pub periodic: bool,
    /// Depth `Ly` as a multiple of `L` (at least 2 rows).
    pub depth_ratio: f64,
    /// `L_A = L_B = L / mi_divisor` for the mutual information.
    pub mi_divisor: usize,
}

impl Family {
    /// Lattice whose boundary holds `l` qubits.
    pub fn lattice(&self, l: usize) -> Result<Lattice, crate::lattice::LatticeError> {
        let lx = match (self.kind, self.x_vertex) {
            (LatticeKind::Lieb, false) => l / 2,
            _ => l,
        };
        let ly = ((self.depth_ratio * l as f64).round() as usize).max(2);
        let mut spec = match self.kind {
            LatticeKind::Square => LatticeSpec::square(lx, ly),
            LatticeKind::Lieb => LatticeSpec::lieb(lx, ly, self.bottom),
        };
        if self.periodic {
            spec = spec.periodic();
        }
        Lattice::new(spec)
    }

    pub fn name(&self) -> String {
        match self.kind {
            LatticeKind::Square => "square".into(),
            LatticeKind::Lieb => format!("lieb-{}", if self.bottom == crate::lattice::Bottom::Rough { "rough" } else { "smooth" }),
        }
    }

    pub fn model_name(&self) -> &'static str {
        if self.x_vertex {
            "x-vertex"
        } else {
            "pauli"
        }
    }
}

/// Observables of one trajectory: half-system entropy and antipodal MI.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub l: usize,
    pub mix: (f64, f64, f64),
    pub trajectory: u64,
    pub seed: u64,
    pub s_half: f64,
    pub i_ab: f64,
}

pub fn trajectory(family: &Family, l: usize, mix: PauliMix, seed: u64, traj: u64) -> Result<TrajectoryRecord, StabError> {
    let lat = family.lattice(l).map_err(|_| StabError::BadMix(mix.p_x, mix.p_y, mix.p_z))?;
    let model = StabModel { mix, x_vertex: family.x_vertex };
    let run = sliding_run_unsigned(&lat, &model, seed, traj);
    let n = run.boundary.len();
    let half = run.slots_of(&ring_interval(0, n / 2, n));
    let rp = RegionPair::antipodal(n, (n / family.mi_divisor).max(1));
    let (a, b) = (run.slots_of(&rp.a()), run.slots_of(&rp.b()));
    Ok(TrajectoryRecord {
        l: n,
        mix: (mix.p_x, mix.p_y, mix.p_z),
        trajectory: traj,
        seed,
        s_half: run.tableau.entropy(&half),
        i_ab: run.tableau.mutual_info(&a, &b)?,
    })
}

/// Streaming mean and variance.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Accumulator {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let d = v - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn sem(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        (self.m2 / (self.count - 1) as f64 / self.count as f64).sqrt()
    }
}

/// One aggregated dataset row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub lattice: String,
    pub kind: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub p_x: f64,
    pub p_y: f64,
    pub p_z: f64,
    pub observable: String,
    pub region: String,
    pub mean: f64,
    pub sem: f64,
    pub n_traj: u64,
    pub seed: u64,
}

pub const SCALING_HEADER: &str = "lattice,kind,L,p_x,p_y,p_z,observable,region,mean,sem,n_traj,seed";

impl ScalingRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.lattice, self.kind, self.l, self.p_x, self.p_y, self.p_z, self.observable, self.region, self.mean,
            self.sem, self.n_traj, self.seed
        )
    }
}

/// Run `n_traj` trajectories for every `(L, mix)`; trajectories run in
/// parallel and are merged in index order.
pub fn sweep(
    family: &Family,
    sizes: &[usize],
    grid: &[PauliMix],
    n_traj: u64,
    seed: u64,
) -> Result<(Vec<ScalingRow>, Vec<TrajectoryRecord>), StabError> {
    let mut rows = Vec::new();
    let mut trajs = Vec::new();
    for &l in sizes {
        for (gi, &mix) in grid.iter().enumerate() {
            let point_seed = counter_hash(seed, l as u64, gi as u64);
            let recs: Vec<TrajectoryRecord> = (0..n_traj)
                .into_par_iter()
                .map(|t| trajectory(family, l, mix, point_seed, t))
                .collect::<Result<_, _>>()?;
            let (mut s, mut i) = (Accumulator::default(), Accumulator::default());
            for r in &recs {
                s.push(r.s_half);
                i.push(r.i_ab);
            }
            let n = recs.first().map_or(l, |r| r.l);
            let base = ScalingRow {
                lattice: family.name(),
                kind: family.model_name().into(),
                l: n,
                p_x: mix.p_x,
                p_y: mix.p_y,
                p_z: mix.p_z,
                observable: "S_A".into(),
                region: format!("A=0..{}", n / 2),
                mean: s.mean,
                sem: s.sem(),
                n_traj,
                seed: point_seed,
            };
            let rp = RegionPair::antipodal(n, (n / family.mi_divisor).max(1));
            rows.push(ScalingRow {
                observable: "I_AB".into(),
                region: rp.label(),
                mean: i.mean,
                sem: i.sem(),
                ..base.clone()
            });
            rows.push(base);
            trajs.extend(recs);
        }
    }
    Ok((rows, trajs))
}
