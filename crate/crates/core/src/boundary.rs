//! Dynamic construction of the boundary state.
//!
//! Two independent paths produce the state left on the unmeasured top row:
//!
//! * the tensor path ([`evolve`]) contracts the measured lattice row by row as
//!   an MPS on the vertical bonds, with row MPOs built from [`vertex_tensor`];
//! * the circuit path ([`run_circuit`]) replays the same lattice as a (1+1)D
//!   circuit of Hadamards, CZ gates and weak measurements on an `Lx`-qubit
//!   register, gate by gate.
//!
//! On the Lieb lattice both paths drive the vertex register with one-site
//! weak measurements and diagonal link gates; the tensor path folds each row
//! into a bond-2 MPO, the circuit path applies the gates one at a time.
//!
//! Both paths return the exact (unnormalized) amplitude vector as
//! `exp(log_norm) * state`, so boundary magnitudes agree with the dense oracle.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

use crate::lattice::{Bottom, Lattice, LatticeKind, Role};
use crate::measure::{bra, measured_weight, Concrete, Direction, Outcome, Weight};
use crate::mps::{
    apply_ot, prefix_renyi2, product_tt, CompressionPolicy, MpsError, OpSite, OperatorTrain, Site, TensorTrain,
};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

type Mat2 = [[C64; 2]; 2];

#[derive(Debug, Error, PartialEq)]
pub enum BoundaryError {
    #[error("vertex tensors need 2 to 4 legs, got {0}")]
    LegCount(usize),
    #[error("the MPS engines need an open spatial boundary")]
    Periodic,
    #[error("layout has {got} entries, lattice has {expected} sites")]
    LayoutLength { expected: usize, got: usize },
    #[error("row {row}: {source}")]
    Row { row: usize, source: MpsError },
}

fn row_err(row: usize) -> impl Fn(MpsError) -> BoundaryError {
    move |source| BoundaryError::Row { row, source }
}

fn hadamard() -> Mat2 {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    [[h, h], [h, -h]]
}

fn diag(a: C64, b: C64) -> Mat2 {
    [[a, ZERO], [ZERO, b]]
}

fn plus() -> [C64; 2] {
    [C64::new(FRAC_1_SQRT_2, 0.0); 2]
}

/// The two components of the CZ decomposition `CZ = sum_s O_s (x) O_s`:
/// `O_0 = sqrt2 P0` and `O_1 = i Z`.
pub fn cz_factors() -> [Mat2; 2] {
    [diag(C64::new(SQRT_2, 0.0), ZERO), diag(I, -I)]
}

/// Cluster-state tensor with `legs` virtual indices of dimension 2 and an
/// optional physical index. Data is indexed `[n][s_1 .. s_k]` with `s_1` the
/// most significant bit; without a physical index it is `[s_1 .. s_k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteTensor {
    pub legs: usize,
    pub physical: bool,
    pub data: Vec<C64>,
}

impl SiteTensor {
    fn idx(&self, n: usize, sigma: &[usize]) -> usize {
        debug_assert_eq!(sigma.len(), self.legs);
        let bits = sigma.iter().fold(0usize, |acc, &s| (acc << 1) | s);
        (n << self.legs) | bits
    }

    pub fn get(&self, n: usize, sigma: &[usize]) -> C64 {
        self.data[self.idx(n, sigma)]
    }

    /// Value of a tensor without physical index.
    pub fn value(&self, sigma: &[usize]) -> C64 {
        debug_assert!(!self.physical);
        self.data[self.idx(0, sigma)]
    }
}

/// `T^n_{s_1..s_k} = <n| O_{s_1} .. O_{s_k} |+>`.
pub fn vertex_tensor(k: usize) -> Result<SiteTensor, BoundaryError> {
    if !(2..=4).contains(&k) {
        return Err(BoundaryError::LegCount(k));
    }
    let o = cz_factors();
    let mut data = vec![ZERO; 2 << k];
    for n in 0..2 {
        for bits in 0..(1usize << k) {
            let mut v = C64::new(FRAC_1_SQRT_2, 0.0);
            for j in 0..k {
                v *= o[(bits >> j) & 1][n][n];
            }
            data[(n << k) | bits] = v;
        }
    }
    Ok(SiteTensor { legs: k, physical: true, data })
}

/// Contract the physical leg with `<s|R^dag`, where `R` rotates `z` to the
/// measurement axis: `R|0> = |+n>`, `R|1> = |-n>`.
pub fn measured_tensor(t: &SiteTensor, d: Direction, mu: Outcome) -> SiteTensor {
    assert!(t.physical, "tensor has no physical leg");
    let (c, s) = ((d.theta / 2.0).cos(), (d.theta / 2.0).sin());
    let e = C64::from_polar(1.0, d.phi);
    let ket = match mu {
        Outcome::Plus => [C64::new(c, 0.0), e * s],
        Outcome::Minus => [C64::new(s, 0.0), -e * c],
    };
    contract_physical(t, [ket[0].conj(), ket[1].conj()])
}

/// Contract the physical leg with bra coefficients `b`.
pub fn contract_physical(t: &SiteTensor, b: [C64; 2]) -> SiteTensor {
    let half = 1usize << t.legs;
    let data = (0..half).map(|i| b[0] * t.data[i] + b[1] * t.data[half + i]).collect();
    SiteTensor { legs: t.legs, physical: false, data }
}

fn check_layout(lat: &Lattice, layout: &Concrete) -> Result<(), BoundaryError> {
    if lat.spec.x_periodic {
        return Err(BoundaryError::Periodic);
    }
    if layout.len() != lat.len() {
        return Err(BoundaryError::LayoutLength { expected: lat.len(), got: layout.len() });
    }
    Ok(())
}

fn site_bra(layout: &Concrete, site: usize) -> [C64; 2] {
    let (d, mu) = layout[site];
    bra(measured_weight(d, mu), true)
}

/// Legs of square site `(x, y)` in the order down, left, right, up.
fn square_legs(lx: usize, ly: usize, x: usize, y: usize) -> [bool; 4] {
    [y > 1, x > 0, x + 1 < lx, y < ly]
}

fn square_tensor(lat: &Lattice, layout: &Concrete, x: usize, y: usize) -> Result<SiteTensor, BoundaryError> {
    let legs = square_legs(lat.spec.lx, lat.spec.ly, x, y);
    let t = vertex_tensor(legs.iter().filter(|&&b| b).count())?;
    if y == lat.spec.ly {
        return Ok(t);
    }
    let site = lat.find(Role::Plain, x, y).expect("square site");
    Ok(contract_physical(&t, site_bra(layout, site)))
}

fn sigma_of(legs: [bool; 4], vals: [usize; 4]) -> Vec<usize> {
    (0..4).filter(|&j| legs[j]).map(|j| vals[j]).collect()
}

/// Initial state of the evolution.
///
/// Square: the measured bottom row as an MPS over the upward bonds.
/// Lieb: the vertex register, `|+..+>` for a smooth bottom and the product
/// state left by the dangling edges for a rough one.
pub fn bottom_mps(lat: &Lattice, layout: &Concrete) -> Result<TensorTrain, BoundaryError> {
    check_layout(lat, layout)?;
    let (lx, ly) = (lat.spec.lx, lat.spec.ly);
    match lat.spec.kind {
        LatticeKind::Square => {
            let mut sites = Vec::with_capacity(lx);
            for x in 0..lx {
                let legs = square_legs(lx, ly, x, 1);
                let t = square_tensor(lat, layout, x, 1)?;
                let (dl, dr) = (if legs[1] { 2 } else { 1 }, if legs[2] { 2 } else { 1 });
                let mut data = vec![ZERO; dl * 2 * dr];
                for l in 0..dl {
                    for u in 0..2 {
                        for r in 0..dr {
                            data[(l * 2 + u) * dr + r] = t.value(&sigma_of(legs, [0, l, r, u]));
                        }
                    }
                }
                sites.push(Site::new(dl, 2, dr, data));
            }
            let mut tt = TensorTrain { sites, center: None, discarded: 0.0, log_norm: 0.0 };
            tt.normalize().map_err(row_err(1))?;
            Ok(tt)
        }
        LatticeKind::Lieb => match lat.spec.bottom {
            Bottom::Smooth => Ok(product_tt(&vec![plus(); lx])),
            Bottom::Rough => {
                let locals: Vec<[C64; 2]> = (0..lx)
                    .map(|x| {
                        let b = site_bra(layout, lat.find(Role::VerticalEdge, x, 0).expect("dangling edge"));
                        [(b[0] + b[1]) * 0.5, (b[0] - b[1]) * 0.5]
                    })
                    .collect();
                if locals.iter().any(|v| v[0].norm() == 0.0 && v[1].norm() == 0.0) {
                    return Err(BoundaryError::Row { row: 0, source: MpsError::ZeroNorm });
                }
                Ok(product_tt(&locals))
            }
        },
    }
}

/// Row MPO of the tensor path. Square: the measured row `y` mapping downward
/// bonds to upward bonds; `y = Ly` gives the unmeasured top row whose output
/// is the physical boundary qubit. Lieb: row `y < Ly` of the vertex register.
pub fn row_mpo(lat: &Lattice, y: usize, layout: &Concrete) -> Result<OperatorTrain, BoundaryError> {
    check_layout(lat, layout)?;
    match lat.spec.kind {
        LatticeKind::Square => square_row_mpo(lat, y, layout),
        LatticeKind::Lieb => Ok(lieb_row_mpo(lat, y, layout)),
    }
}

fn square_row_mpo(lat: &Lattice, y: usize, layout: &Concrete) -> Result<OperatorTrain, BoundaryError> {
    let (lx, ly) = (lat.spec.lx, lat.spec.ly);
    let mut sites = Vec::with_capacity(lx);
    for x in 0..lx {
        let legs = square_legs(lx, ly, x, y);
        let t = square_tensor(lat, layout, x, y)?;
        let (dl, dr) = (if legs[1] { 2 } else { 1 }, if legs[2] { 2 } else { 1 });
        let mut data = vec![ZERO; dl * 4 * dr];
        for l in 0..dl {
            for o in 0..2 {
                for i in 0..2 {
                    for r in 0..dr {
                        data[((l * 2 + o) * 2 + i) * dr + r] = if y == ly {
                            t.get(o, &sigma_of(legs, [i, l, r, 0]))
                        } else {
                            t.value(&sigma_of(legs, [i, l, r, o]))
                        };
                    }
                }
            }
        }
        sites.push(OpSite::new(dl, 2, 2, dr, data));
    }
    Ok(OperatorTrain { sites })
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Lieb row `y < Ly`: horizontal-edge link factors `(b0 + b1 Z Z)/sqrt2`,
/// then per column `H diag(b_V) H diag(b_v)`.
fn lieb_row_mpo(lat: &Lattice, y: usize, layout: &Concrete) -> OperatorTrain {
    let lx = lat.spec.lx;
    let z = diag(ONE, -ONE);
    let id = diag(ONE, ONE);
    let h = hadamard();
    let mut sites = Vec::with_capacity(lx);
    for x in 0..lx {
        let bv = site_bra(layout, lat.find(Role::Vertex, x, y).expect("vertex"));
        let be = site_bra(layout, lat.find(Role::VerticalEdge, x, y).expect("vertical edge"));
        let local = mat_mul(&h, &mat_mul(&diag(be[0], be[1]), &mat_mul(&h, &diag(bv[0], bv[1]))));
        let dl = if x > 0 { 2 } else { 1 };
        let link = lat.find(Role::HorizontalEdge, x, y).map(|e| site_bra(layout, e));
        let dr = if link.is_some() { 2 } else { 1 };
        let mut data = vec![ZERO; dl * 4 * dr];
        for l in 0..dl {
            for r in 0..dr {
                let coeff = match link {
                    Some(b) => b[r] * FRAC_1_SQRT_2,
                    None => ONE,
                };
                let mut m = if l == 1 { z } else { id };
                if r == 1 {
                    m = mat_mul(&z, &m);
                }
                let w = mat_mul(&local, &m);
                for o in 0..2 {
                    for i in 0..2 {
                        data[((l * 2 + o) * 2 + i) * dr + r] = coeff * w[o][i];
                    }
                }
            }
        }
        sites.push(OpSite::new(dl, 2, 2, dr, data));
    }
    OperatorTrain { sites }
}

/// Nearest-neighbour CZ chain as a bond-2 MPO.
pub fn cz_chain_mpo(n: usize) -> OperatorTrain {
    let mut sites = Vec::with_capacity(n);
    for k in 0..n {
        let dl = if k == 0 { 1 } else { 2 };
        let dr = if k + 1 == n { 1 } else { 2 };
        let mut data = vec![ZERO; dl * 4 * dr];
        for l in 0..dl {
            for p in 0..2 {
                let sign = if l == 1 && p == 1 { -ONE } else { ONE };
                for r in 0..dr {
                    if dr == 1 || r == p {
                        data[((l * 2 + p) * 2 + p) * dr + r] = sign;
                    }
                }
            }
        }
        sites.push(OpSite::new(dl, 2, 2, dr, data));
    }
    OperatorTrain { sites }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RowDiagnostics {
    pub row: usize,
    pub max_bond: usize,
    pub discarded_weight: f64,
    pub log_norm_delta: f64,
    /// `(cut, S2)` pairs; a cut `c` splits the boundary into sites `0..c` and the rest.
    pub entropies: Vec<(usize, f64)>,
}

fn record(tt: &TensorTrain, cuts: &[usize]) -> Result<Vec<(usize, f64)>, MpsError> {
    cuts.iter().filter(|&&c| c < tt.len()).map(|&c| Ok((c, prefix_renyi2(tt, c)?))).collect()
}

/// Tensor-path boundary state. With nonempty `cuts`, the boundary state a
/// lattice of the current depth would have is formed after every row and its
/// entropies at those cuts are recorded.
pub fn evolve(
    lat: &Lattice,
    layout: &Concrete,
    policy: &CompressionPolicy,
    cuts: &[usize],
) -> Result<(TensorTrain, Vec<RowDiagnostics>), BoundaryError> {
    let mut tt = bottom_mps(lat, layout)?;
    let ly = lat.spec.ly;
    let mut diags = Vec::new();
    let first = match lat.spec.kind {
        LatticeKind::Square => 2,
        LatticeKind::Lieb => 1,
    };
    for y in first..ly {
        let ot = row_mpo(lat, y, layout)?;
        let (next, d) = apply_ot(&tt, &ot, policy).map_err(row_err(y))?;
        tt = next;
        let mut rd = RowDiagnostics {
            row: y,
            max_bond: d.max_bond,
            discarded_weight: d.discarded_weight,
            log_norm_delta: d.log_norm_delta,
            entropies: Vec::new(),
        };
        if !cuts.is_empty() {
            let top = top_map(lat, &tt, policy).map_err(row_err(y))?;
            rd.entropies = record(&top, cuts).map_err(row_err(y))?;
        }
        diags.push(rd);
    }
    let out = top_map(lat, &tt, policy).map_err(row_err(ly))?;
    Ok((out, diags))
}

fn top_map(lat: &Lattice, tt: &TensorTrain, policy: &CompressionPolicy) -> Result<TensorTrain, MpsError> {
    match lat.spec.kind {
        LatticeKind::Square => {
            let empty = vec![(Direction::pauli(crate::measure::Pauli::Z), Outcome::Plus); lat.len()];
            let ot = square_row_mpo(lat, lat.spec.ly, &empty).expect("top row");
            Ok(apply_ot(tt, &ot, policy)?.0)
        }
        LatticeKind::Lieb => {
            let mut t = tt.clone();
            for x in (0..lat.spec.lx - 1).rev() {
                t.insert_site(x + 1, plus());
            }
            let n = t.len();
            Ok(apply_ot(&t, &cz_chain_mpo(n), policy)?.0)
        }
    }
}

/// Weak measurement `M_mu = e^{i phi Z/2} Z^[mu = -] P_mu(beta)` with
/// `P_+ = diag(cos t/2, sin t/2)`, `P_- = diag(sin t/2, cos t/2)`, i.e.
/// `P_mu proportional to exp(+-beta Z)` with `tanh beta = tan(pi/4 - theta/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeakMeasSpec {
    pub theta: f64,
    pub phi: f64,
    pub outcome: Outcome,
}

impl WeakMeasSpec {
    pub fn new(d: Direction, outcome: Outcome) -> Self {
        Self { theta: d.theta, phi: d.phi, outcome }
    }

    pub fn tanh_beta(&self) -> f64 {
        (PI / 4.0 - self.theta / 2.0).tan()
    }

    /// Measurement strength; infinite at the poles.
    pub fn beta(&self) -> f64 {
        -0.5 * (self.theta / 2.0).tan().ln()
    }

    pub fn povm(&self) -> Mat2 {
        let (c, s) = ((self.theta / 2.0).cos(), (self.theta / 2.0).sin());
        match self.outcome {
            Outcome::Plus => diag(C64::new(c, 0.0), C64::new(s, 0.0)),
            Outcome::Minus => diag(C64::new(s, 0.0), C64::new(c, 0.0)),
        }
    }

    /// Outcome-dependent unitary `e^{i phi Z/2} Z^[mu = -]`.
    pub fn correction(&self) -> Mat2 {
        let sign = if self.outcome.is_minus() { -1.0 } else { 1.0 };
        diag(C64::from_polar(1.0, self.phi / 2.0), C64::from_polar(sign, -self.phi / 2.0))
    }

    pub fn kraus(&self) -> Mat2 {
        mat_mul(&self.correction(), &self.povm())
    }
}

/// Diagonal link gate `diag(g_+, g_-, g_-, g_+)` of a measured Lieb edge:
/// `g^+_pm = cos(t/2) pm e^{-i phi} sin(t/2)`, `g^-_pm = sin(t/2) -+ e^{-i phi} cos(t/2)`.
pub fn lieb_link_gate(theta: f64, phi: f64, m: Outcome) -> [C64; 4] {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let e = C64::from_polar(1.0, -phi);
    let (gp, gm) = match m {
        Outcome::Plus => (c + e * s, c - e * s),
        Outcome::Minus => (s - e * c, s + e * c),
    };
    [gp, gm, gm, gp]
}

#[derive(Clone, Debug, PartialEq)]
pub enum Gate {
    H(usize),
    /// CZ on `(k, k+1)`.
    Cz(usize),
    Weak(usize, WeakMeasSpec),
    /// Diagonal one-site operator.
    Diag(usize, [C64; 2]),
    /// Diagonal two-site operator on `(k, k+1)`, entries indexed `(p<<1)|q`.
    Diag2(usize, [C64; 4]),
    /// Insert a `|+>` qubit at position `k`.
    Insert(usize),
    /// Row boundary: renormalize and record diagnostics for `row`.
    Mark(usize),
}

/// One square-lattice row: CZ row, then a weak measurement and a Hadamard on every site.
pub fn circuit_layer(row: &[(Direction, Outcome)]) -> Vec<Gate> {
    let n = row.len();
    let mut gates: Vec<Gate> = (0..n - 1).map(Gate::Cz).collect();
    for (x, &(d, mu)) in row.iter().enumerate().rev() {
        gates.push(Gate::Weak(x, WeakMeasSpec::new(d, mu)));
        gates.push(Gate::H(x));
    }
    gates
}

/// Full gate list of the circuit path. `Mark(y)` follows the point where the
/// register holds the boundary state of a depth-`y` lattice (square), or the
/// vertex register after row `y` (Lieb).
pub fn lattice_circuit(lat: &Lattice, layout: &Concrete) -> Result<Vec<Gate>, BoundaryError> {
    check_layout(lat, layout)?;
    let (lx, ly) = (lat.spec.lx, lat.spec.ly);
    let mut gates = Vec::new();
    match lat.spec.kind {
        LatticeKind::Square => {
            for y in 1..ly {
                let row: Vec<_> = (0..lx).map(|x| layout[lat.find(Role::Plain, x, y).expect("site")]).collect();
                let layer = circuit_layer(&row);
                gates.extend(layer[..lx - 1].iter().cloned());
                gates.push(Gate::Mark(y));
                gates.extend(layer[lx - 1..].iter().cloned());
            }
            gates.extend((0..lx - 1).map(Gate::Cz));
            gates.push(Gate::Mark(ly));
        }
        LatticeKind::Lieb => {
            if lat.spec.bottom == Bottom::Rough {
                for x in 0..lx {
                    let (d, mu) = layout[lat.find(Role::VerticalEdge, x, 0).expect("dangling edge")];
                    let k = WeakMeasSpec::new(d, mu).kraus();
                    let s = FRAC_1_SQRT_2;
                    gates.push(Gate::Diag(x, [(k[0][0] + k[1][1]) * s, (k[0][0] - k[1][1]) * s]));
                }
            }
            for y in 1..ly {
                for x in 0..lx - 1 {
                    let (d, mu) = layout[lat.find(Role::HorizontalEdge, x, y).expect("edge")];
                    let g = lieb_link_gate(d.theta, d.phi, mu).map(|v| v * FRAC_1_SQRT_2);
                    gates.push(Gate::Diag2(x, g));
                }
                for x in (0..lx).rev() {
                    let v = layout[lat.find(Role::Vertex, x, y).expect("vertex")];
                    let e = layout[lat.find(Role::VerticalEdge, x, y).expect("edge")];
                    gates.push(Gate::Weak(x, WeakMeasSpec::new(v.0, v.1)));
                    gates.push(Gate::H(x));
                    gates.push(Gate::Weak(x, WeakMeasSpec::new(e.0, e.1)));
                    gates.push(Gate::H(x));
                }
                gates.push(Gate::Mark(y));
            }
            for x in (0..lx - 1).rev() {
                gates.push(Gate::Insert(x + 1));
            }
            gates.extend((0..2 * lx - 2).map(Gate::Cz));
            gates.push(Gate::Mark(ly));
        }
    }
    Ok(gates)
}

/// Outcome-dependent Paulis pushed to the end of the circuit instead of being
/// applied. The physical state equals `prod_q X_q^x Z_q^z` applied to the
/// simulated one, up to a global phase.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PauliFrame {
    pub x: Vec<bool>,
    pub z: Vec<bool>,
}

impl PauliFrame {
    pub fn new(n: usize) -> Self {
        Self { x: vec![false; n], z: vec![false; n] }
    }

    pub fn is_identity(&self) -> bool {
        !self.x.iter().chain(&self.z).any(|&b| b)
    }

    /// Apply the frame to a tensor train (turning a simulated state physical).
    pub fn apply(&self, tt: &mut TensorTrain) {
        let x = [[ZERO, ONE], [ONE, ZERO]];
        let z = diag(ONE, -ONE);
        for q in 0..self.x.len() {
            if self.z[q] {
                tt.apply_one_site(q, &z);
            }
            if self.x[q] {
                tt.apply_one_site(q, &x);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CircuitOptions {
    /// Track outcome Paulis in a [`PauliFrame`] instead of applying them.
    pub track_frame: bool,
}

fn apply_diag2(tt: &mut TensorTrain, k: usize, g: [C64; 4], policy: &CompressionPolicy) -> Result<f64, MpsError> {
    let mut op = [[ZERO; 4]; 4];
    for (i, v) in g.into_iter().enumerate() {
        op[i][i] = v;
    }
    tt.apply_two_site(k, &op, policy)
}

/// Run a gate list on an initial register. Returns the final train, the
/// per-row diagnostics at every `Mark`, and the Pauli frame.
pub fn run_circuit(
    init: TensorTrain,
    gates: &[Gate],
    policy: &CompressionPolicy,
    cuts: &[usize],
    opts: CircuitOptions,
) -> Result<(TensorTrain, Vec<RowDiagnostics>, PauliFrame), BoundaryError> {
    let mut tt = init;
    let mut frame = PauliFrame::new(tt.len());
    let mut diags = Vec::new();
    let mut disc = 0.0;
    let mut row = 0usize;
    for g in gates {
        match *g {
            Gate::H(k) => {
                tt.apply_one_site(k, &hadamard());
                std::mem::swap(&mut frame.x[k], &mut frame.z[k]);
            }
            Gate::Cz(k) => {
                disc += apply_diag2(&mut tt, k, [ONE, ONE, ONE, -ONE], policy).map_err(row_err(row + 1))?;
                let (xa, xb) = (frame.x[k], frame.x[k + 1]);
                frame.z[k + 1] ^= xa;
                frame.z[k] ^= xb;
            }
            Gate::Weak(k, w) => {
                let mut m = if opts.track_frame { w.povm() } else { w.kraus() };
                if opts.track_frame {
                    let c = w.correction();
                    m = mat_mul(&diag(c[0][0], c[1][1] * if w.outcome.is_minus() { -1.0 } else { 1.0 }), &m);
                }
                if frame.x[k] {
                    m = diag(m[1][1], m[0][0]);
                }
                tt.apply_one_site(k, &m);
                if opts.track_frame && w.outcome.is_minus() {
                    frame.z[k] ^= true;
                }
            }
            Gate::Diag(k, d) => {
                let d = if frame.x[k] { [d[1], d[0]] } else { d };
                tt.apply_one_site(k, &diag(d[0], d[1]));
            }
            Gate::Diag2(k, d) => {
                let flip = (usize::from(frame.x[k]) << 1) | usize::from(frame.x[k + 1]);
                let d = std::array::from_fn(|i| d[i ^ flip]);
                disc += apply_diag2(&mut tt, k, d, policy).map_err(row_err(row + 1))?;
            }
            Gate::Insert(k) => {
                tt.insert_site(k, plus());
                frame.x.insert(k, false);
                frame.z.insert(k, false);
            }
            Gate::Mark(y) => {
                let delta = tt.normalize().map_err(row_err(row + 1))?;
                let entropies = record(&tt, cuts).map_err(row_err(row + 1))?;
                diags.push(RowDiagnostics {
                    row: y,
                    max_bond: tt.max_bond(),
                    discarded_weight: disc,
                    log_norm_delta: delta,
                    entropies,
                });
                disc = 0.0;
                row = y;
            }
        }
    }
    tt.normalize().map_err(row_err(row))?;
    Ok((tt, diags, frame))
}

/// Circuit-path boundary state of a lattice.
pub fn circuit_boundary(
    lat: &Lattice,
    layout: &Concrete,
    policy: &CompressionPolicy,
    cuts: &[usize],
    opts: CircuitOptions,
) -> Result<(TensorTrain, Vec<RowDiagnostics>, PauliFrame), BoundaryError> {
    let gates = lattice_circuit(lat, layout)?;
    run_circuit(product_tt(&vec![plus(); lat.spec.lx]), &gates, policy, cuts, opts)
}

/// Half-chain Renyi-2 entropy of the boundary state (circuit path) together
/// with the per-row diagnostics; for the square lattice the diagnostics carry
/// the half-chain entropy at every depth.
pub fn half_entropy(
    lat: &Lattice,
    layout: &Concrete,
    policy: &CompressionPolicy,
) -> Result<(f64, Vec<RowDiagnostics>), BoundaryError> {
    let cuts = match lat.spec.kind {
        LatticeKind::Square => vec![lat.spec.lx / 2],
        LatticeKind::Lieb => Vec::new(),
    };
    let (tt, diags, _) = circuit_boundary(lat, layout, policy, &cuts, CircuitOptions::default())?;
    let s = prefix_renyi2(&tt, tt.len() / 2).map_err(row_err(lat.spec.ly))?;
    Ok((s, diags))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateClass {
    /// Proportional to a projector `(1 +- P)/2`.
    Projector,
    /// Proportional to the identity or to the Pauli string itself.
    Pauli,
    /// Proportional to `exp(+-i pi/4 P)`.
    QuarterRotation,
    Generic,
}

/// `a 1 + b P` form of a transfer-matrix gate with its classification.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransferGate {
    pub a: C64,
    pub b: C64,
    pub class: GateClass,
    /// Dense matrix, row-major, qubit 0 most significant.
    pub matrix: Vec<Vec<C64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GateTriple {
    /// `exp(K Z_a Z_b)` from a spatial edge.
    pub t_zz: TransferGate,
    /// `exp(h Z)` from a vertex.
    pub t_z: TransferGate,
    /// `exp(K~ X_e Z_k Z_l)` from a temporal edge, qubit order `(e, k, l)`.
    pub t_x: TransferGate,
}

fn classify(a: C64, b: C64, tol: f64) -> GateClass {
    let scale = a.norm().max(b.norm());
    if a.norm() <= tol * scale || b.norm() <= tol * scale {
        return GateClass::Pauli;
    }
    let r = b / a;
    if (r.norm() - 1.0).abs() <= tol {
        if r.im.abs() <= tol {
            return GateClass::Projector;
        }
        if r.re.abs() <= tol {
            return GateClass::QuarterRotation;
        }
    }
    GateClass::Generic
}

fn pauli_mat(p: char) -> Mat2 {
    match p {
        'I' => diag(ONE, ONE),
        'X' => [[ZERO, ONE], [ONE, ZERO]],
        'Z' => diag(ONE, -ONE),
        _ => unreachable!(),
    }
}

fn kron_string(s: &str) -> Vec<Vec<C64>> {
    let mut m = vec![vec![ONE]];
    for p in s.chars() {
        let q = pauli_mat(p);
        let n = m.len();
        let mut out = vec![vec![ZERO; 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                for a in 0..2 {
                    for b in 0..2 {
                        out[2 * i + a][2 * j + b] = m[i][j] * q[a][b];
                    }
                }
            }
        }
        m = out;
    }
    m
}

fn gate(a: C64, b: C64, pauli: &str) -> TransferGate {
    let id = kron_string(&"I".repeat(pauli.len()));
    let p = kron_string(pauli);
    let matrix = id.iter().zip(&p).map(|(ri, rp)| ri.iter().zip(rp).map(|(&x, &y)| a * x + b * y).collect()).collect();
    TransferGate { a, b, class: classify(a, b, 1e-12), matrix }
}

/// Transfer-matrix gates from the factor pairs of the three Ising terms. Edge
/// weights enter through their Hadamard-mapped couplings, vertex weights
/// directly; infinite couplings stay finite as `(0, 1)` pairs.
pub fn transfer_gates(w_spatial: Weight, w_temporal: Weight, w_vertex: Weight) -> GateTriple {
    use crate::measure::hadamard_weight;
    let half = C64::new(0.5, 0.0);
    let (p, m) = hadamard_weight(w_spatial).pair();
    let t_zz = gate((p + m) * half, (p - m) * half, "ZZ");
    let (p, m) = w_vertex.pair();
    let t_z = gate((p + m) * half, (p - m) * half, "Z");
    let (p, m) = hadamard_weight(w_temporal).pair();
    let t_x = gate(p, m, "XZZ");
    GateTriple { t_zz, t_z, t_x }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;
    use crate::measure::{direction_weight, Pauli};
    use crate::oracle::{dense_boundary, fidelity};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_layout(lat: &Lattice, rng: &mut ChaCha8Rng) -> Concrete {
        (0..lat.len())
            .map(|_| {
                let d = Direction::new(rng.gen_range(0.0..PI), rng.gen_range(0.0..2.0 * PI)).unwrap();
                (d, Outcome::from_bit(rng.gen()))
            })
            .collect()
    }

    #[test]
    fn cz_reconstruction() {
        let o = cz_factors();
        for p in 0..2 {
            for q in 0..2 {
                let v = o[0][p][p] * o[0][q][q] + o[1][p][p] * o[1][q][q];
                let want = if p == 1 && q == 1 { -1.0 } else { 1.0 };
                assert!((v - want).norm() < 1e-15);
            }
        }
        assert!(vertex_tensor(1).is_err() && vertex_tensor(5).is_err());
        assert_eq!(vertex_tensor(3).unwrap().data.len(), 16);
    }

    #[test]
    fn measured_tensor_paths_agree() {
        let t = vertex_tensor(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let d = Direction::new(rng.gen_range(0.01..PI - 0.01), rng.gen_range(0.0..2.0 * PI)).unwrap();
            for mu in [Outcome::Plus, Outcome::Minus] {
                let a = measured_tensor(&t, d, mu);
                let b = contract_physical(&t, bra(measured_weight(d, mu), true));
                for (x, y) in a.data.iter().zip(&b.data) {
                    assert!((x - y).norm() < 1e-14);
                }
            }
        }
        let z = measured_tensor(&t, Direction::pauli(Pauli::Z), Outcome::Plus);
        assert_eq!(z.data[..], t.data[..8]);
    }

    #[test]
    fn square_paths_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (lx, ly) in [(2, 2), (3, 3), (4, 4), (3, 4)] {
            let lat = Lattice::new(LatticeSpec::square(lx, ly)).unwrap();
            for _ in 0..3 {
                let layout = random_layout(&lat, &mut rng);
                let (dense, log_mag) = dense_boundary(&lat, &layout).unwrap();
                let (tt, _) = evolve(&lat, &layout, &CompressionPolicy::exact(), &[]).unwrap();
                assert!((tt.log_norm - log_mag).abs() < 1e-9, "{lx}x{ly}");
                assert!(fidelity(&tt.dense(), &dense.amps) > 1.0 - 1e-12);
                let (cc, _, _) =
                    circuit_boundary(&lat, &layout, &CompressionPolicy::exact(), &[], CircuitOptions::default()).unwrap();
                assert!((cc.log_norm - log_mag).abs() < 1e-9);
                assert!(fidelity(&cc.dense(), &dense.amps) > 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn lieb_paths_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for bottom in [Bottom::Smooth, Bottom::Rough] {
            for (lx, ly) in [(2, 2), (3, 2), (2, 3)] {
                let lat = Lattice::new(LatticeSpec::lieb(lx, ly, bottom)).unwrap();
                for _ in 0..3 {
                    let layout = random_layout(&lat, &mut rng);
                    let (dense, log_mag) = dense_boundary(&lat, &layout).unwrap();
                    let (tt, _) = evolve(&lat, &layout, &CompressionPolicy::exact(), &[]).unwrap();
                    assert!((tt.log_norm - log_mag).abs() < 1e-9);
                    assert!(fidelity(&tt.dense(), &dense.amps) > 1.0 - 1e-12);
                    let (cc, _, _) =
                        circuit_boundary(&lat, &layout, &CompressionPolicy::exact(), &[], CircuitOptions::default())
                            .unwrap();
                    assert!((cc.log_norm - log_mag).abs() < 1e-9);
                    assert!(fidelity(&cc.dense(), &dense.amps) > 1.0 - 1e-12);
                }
            }
        }
    }

    #[test]
    fn frame_tracking_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lat = Lattice::new(LatticeSpec::square(4, 3)).unwrap();
        for _ in 0..3 {
            let layout = random_layout(&lat, &mut rng);
            let (dense, _) = dense_boundary(&lat, &layout).unwrap();
            let opts = CircuitOptions { track_frame: true };
            let (mut tt, _, frame) = circuit_boundary(&lat, &layout, &CompressionPolicy::exact(), &[], opts).unwrap();
            frame.apply(&mut tt);
            assert!(fidelity(&tt.dense(), &dense.amps) > 1.0 - 1e-12);
        }
    }

    #[test]
    fn all_z_square_is_cluster_chain() {
        let lat = Lattice::new(LatticeSpec::square(5, 4)).unwrap();
        let layout: Concrete = (0..lat.len())
            .map(|i| (Direction::pauli(Pauli::Z), Outcome::from_bit(i % 3 == 0)))
            .collect();
        let opts = CircuitOptions { track_frame: true };
        let (tt, _, frame) = circuit_boundary(&lat, &layout, &CompressionPolicy::exact(), &[], opts).unwrap();
        let (dense, _) = dense_boundary(&lat, &layout).unwrap();
        let x = [[ZERO, ONE], [ONE, ZERO]];
        let z = diag(ONE, -ONE);
        for q in 0..5usize {
            let mut ops = vec![(q, x)];
            let mut paulis = vec![(q, crate::measure::Pauli::X)];
            for nb in [q.wrapping_sub(1), q + 1] {
                if nb < 5 {
                    ops.push((nb, z));
                    paulis.push((nb, crate::measure::Pauli::Z));
                }
            }
            let computed = tt.expectation(&ops);
            assert!((computed.norm() - 1.0).abs() < 1e-12 && computed.im.abs() < 1e-12);
            let flips = ops.iter().filter(|&&(k, m)| if m == x { frame.z[k] } else { frame.x[k] }).count();
            let predicted = computed.re * if flips % 2 == 1 { -1.0 } else { 1.0 };
            let physical = crate::oracle::pauli_expectation(&dense, &paulis);
            assert!((physical.re - predicted).abs() < 1e-12);
        }
    }

    #[test]
    fn povm_closure() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let d = Direction::new(rng.gen_range(0.0..=PI), rng.gen_range(0.0..2.0 * PI)).unwrap();
            let mut sum = [[ZERO; 2]; 2];
            for mu in [Outcome::Plus, Outcome::Minus] {
                let k = WeakMeasSpec::new(d, mu).kraus();
                for i in 0..2 {
                    for j in 0..2 {
                        sum[i][j] += k[0][i].conj() * k[0][j] + k[1][i].conj() * k[1][j];
                    }
                }
            }
            assert!((sum[0][0] - 1.0).norm() < 1e-12 && (sum[1][1] - 1.0).norm() < 1e-12);
            assert!(sum[0][1].norm() < 1e-12);
        }
        let z = WeakMeasSpec::new(Direction::pauli(Pauli::Z), Outcome::Plus);
        assert_eq!(z.povm(), diag(ONE, ZERO));
        assert_eq!(z.beta(), f64::INFINITY);
        let x = WeakMeasSpec::new(Direction::pauli(Pauli::X), Outcome::Minus);
        assert!(x.beta().abs() < 1e-15);
    }

    #[test]
    fn link_gate_limits() {
        let g = lieb_link_gate(PI / 2.0, 0.0, Outcome::Plus);
        assert!((g[0] - SQRT_2).norm() < 1e-15 && g[1].norm() < 1e-15);
        // phi = pi/2 gives a unitary diagonal gate.
        for m in [Outcome::Plus, Outcome::Minus] {
            let g = lieb_link_gate(0.7, PI / 2.0, m);
            assert!((g[0].norm() - g[1].norm()).abs() < 1e-14);
        }
        // phi = 0 gives real positive-definite or sign-flipped weak ZZ measurement.
        let g = lieb_link_gate(0.7, 0.0, Outcome::Plus);
        assert!(g[0].im == 0.0 && g[1].im == 0.0 && g[0].re > g[1].re);
    }

    #[test]
    fn transfer_limits() {
        let one = Weight::real(1.0);
        let t = transfer_gates(one, Weight::real(0.0), one);
        assert_eq!(t.t_zz.class, GateClass::Projector);
        assert_eq!(t.t_x.class, GateClass::Projector);
        assert_eq!(t.t_z.class, GateClass::Pauli);
        let t = transfer_gates(Weight::real(-1.0), Weight::Infinity, Weight::real(0.0));
        assert_eq!(t.t_zz.class, GateClass::Projector);
        assert!((t.t_x.b / t.t_x.a + 1.0).norm() < 1e-12);
        assert_eq!(t.t_z.class, GateClass::Projector);
        let y = direction_weight(Direction::pauli(Pauli::Y));
        let t = transfer_gates(y, y, y);
        assert_eq!(t.t_zz.class, GateClass::QuarterRotation);
        assert_eq!(t.t_x.class, GateClass::QuarterRotation);
        assert_eq!(t.t_z.class, GateClass::QuarterRotation);
    }

    #[test]
    fn lieb_gauge_stabilizers() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let lat = Lattice::new(LatticeSpec::lieb(4, 3, Bottom::Smooth)).unwrap();
        let layout = random_layout(&lat, &mut rng);
        let (tt, _) = evolve(&lat, &layout, &CompressionPolicy::default(), &[]).unwrap();
        let x = [[ZERO, ONE], [ONE, ZERO]];
        let z = diag(ONE, -ONE);
        for e in (1..tt.len()).step_by(2) {
            let v = tt.expectation(&[(e - 1, z), (e, x), (e + 1, z)]);
            assert!((v - 1.0).norm() < 1e-9);
        }
    }
}
