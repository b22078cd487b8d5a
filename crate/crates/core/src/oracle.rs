//! Dense state-vector reference engine for small lattices.
//!
//! Qubit `k` of a [`DenseState`] is bit `k` of the amplitude index. The state
//! represented is `exp(log_norm) * amps`; projections keep `amps` at unit norm
//! and move the scale into `log_norm` so the final scalar stays recoverable.

use faer::Mat;
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::lattice::Lattice;
use crate::measure::{bra, measured_weight, Concrete, Pauli, Weight};

pub const MAX_DENSE_QUBITS: usize = 26;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("{0} qubits exceeds the dense cap of {MAX_DENSE_QUBITS}")]
    TooLarge(usize),
    #[error("site {0} is not (or no longer) in the register")]
    NotInRegister(usize),
    #[error("state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("layout has {got} entries, lattice has {expected} sites")]
    LayoutLength { expected: usize, got: usize },
    #[error("qubit {0} out of range")]
    BadQubit(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    pub amps: Vec<C64>,
    pub log_norm: f64,
    /// Lattice site carried by each qubit.
    pub sites: Vec<usize>,
}

impl DenseState {
    pub fn n_qubits(&self) -> usize {
        self.sites.len()
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Self {
        let n = amps.len().trailing_zeros() as usize;
        assert_eq!(1 << n, amps.len(), "amplitude count must be a power of two");
        Self { amps, log_norm: 0.0, sites: (0..n).collect() }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Move the amplitude norm into the accumulator.
    pub fn renormalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            for a in &mut self.amps {
                *a /= n;
            }
            self.log_norm += n.ln();
        } else {
            self.log_norm = f64::NEG_INFINITY;
        }
    }

    /// Full contraction result once every qubit is projected: `(ln|z|, z/|z|)`.
    pub fn scalar(&self) -> (f64, C64) {
        assert!(self.sites.is_empty(), "scalar needs an empty register");
        let a = self.amps[0];
        (self.log_norm + a.norm().ln(), if a.norm() > 0.0 { a / a.norm() } else { C64::new(0.0, 0.0) })
    }

    pub fn position(&self, site: usize) -> Option<usize> {
        self.sites.iter().position(|&s| s == site)
    }
}

pub fn dense_cluster(lat: &Lattice) -> Result<DenseState, OracleError> {
    let n = lat.len();
    if n > MAX_DENSE_QUBITS {
        return Err(OracleError::TooLarge(n));
    }
    let edges: Vec<u32> = lat.edges().iter().map(|&(a, b)| (1u32 << a) | (1u32 << b)).collect();
    let amp = (0.5f64).powf(n as f64 / 2.0);
    let amps = (0u32..(1u32 << n))
        .map(|b| {
            let odd = edges.iter().filter(|&&m| b & m == m).count() & 1 == 1;
            C64::new(if odd { -amp } else { amp }, 0.0)
        })
        .collect();
    Ok(DenseState { amps, log_norm: 0.0, sites: (0..n).collect() })
}

/// Contract the qubit carrying `site` with `<W|`, removing it from the register.
pub fn dense_project(state: &DenseState, site: usize, w: Weight, conjugate: bool) -> Result<DenseState, OracleError> {
    let k = state.position(site).ok_or(OracleError::NotInRegister(site))?;
    Ok(project_qubit(state, k, bra(w, conjugate)))
}

/// Contract qubit position `k` with bra coefficients `b` (`<phi| = b0 <0| + b1 <1|`).
pub fn project_qubit(state: &DenseState, k: usize, b: [C64; 2]) -> DenseState {
    let low = (1usize << k) - 1;
    let half = state.amps.len() / 2;
    let amps = (0..half)
        .map(|i| {
            let i0 = (i & low) | ((i & !low) << 1);
            b[0] * state.amps[i0] + b[1] * state.amps[i0 | (1 << k)]
        })
        .collect();
    let mut sites = state.sites.clone();
    sites.remove(k);
    let mut out = DenseState { amps, log_norm: state.log_norm, sites };
    out.renormalize();
    out
}

/// Boundary state after projecting every bulk site with the physical bra.
/// Returns the normalized state and `ln` of the pre-normalization magnitude.
pub fn dense_boundary(lat: &Lattice, layout: &Concrete) -> Result<(DenseState, f64), OracleError> {
    if layout.len() != lat.len() {
        return Err(OracleError::LayoutLength { expected: lat.len(), got: layout.len() });
    }
    let mut st = dense_cluster(lat)?;
    for site in lat.bulk_sites() {
        let (d, mu) = layout[site];
        st = dense_project(&st, site, measured_weight(d, mu), true)?;
    }
    let log_mag = st.log_norm;
    st.log_norm = 0.0;
    Ok((st, log_mag))
}

/// Scalar `<mu, w|Psi>` with every site projected, as `(ln|z|, phase)`.
pub fn dense_full_overlap(lat: &Lattice, weights: &[Weight], conjugate: bool) -> Result<(f64, C64), OracleError> {
    let mut st = dense_cluster(lat)?;
    for site in 0..lat.len() {
        st = dense_project(&st, site, weights[site], conjugate)?;
    }
    Ok(st.scalar())
}

/// Second Renyi entropy of the qubits at positions `region`.
pub fn dense_renyi2(state: &DenseState, region: &[usize]) -> Result<f64, OracleError> {
    let norm = state.norm_sqr();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(OracleError::NotNormalized(norm));
    }
    let n = state.n_qubits();
    let mut in_a = vec![false; n];
    for &q in region {
        if q >= n {
            return Err(OracleError::BadQubit(q));
        }
        in_a[q] = true;
    }
    let a_bits: Vec<usize> = (0..n).filter(|&q| in_a[q]).collect();
    let b_bits: Vec<usize> = (0..n).filter(|&q| !in_a[q]).collect();
    let (rows, cols) = if a_bits.len() <= b_bits.len() { (a_bits, b_bits) } else { (b_bits, a_bits) };
    let gather = |idx: usize, bits: &[usize]| bits.iter().enumerate().fold(0usize, |acc, (j, &q)| acc | (((idx >> q) & 1) << j));
    let mut m = Mat::<C64>::zeros(1 << rows.len(), 1 << cols.len());
    for (idx, &a) in state.amps.iter().enumerate() {
        m[(gather(idx, &rows), gather(idx, &cols))] = a;
    }
    let rho = &m * m.adjoint();
    let mut purity = 0.0;
    for j in 0..rho.ncols() {
        for i in 0..rho.nrows() {
            purity += rho[(i, j)].norm_sqr();
        }
    }
    Ok(-purity.ln())
}

/// `<psi| P |psi>` for a Pauli string given as `(qubit, pauli)` pairs.
pub fn pauli_expectation(state: &DenseState, ops: &[(usize, Pauli)]) -> C64 {
    let mut flip = 0usize;
    let mut zmask = 0usize;
    let mut ny = 0usize;
    for &(q, p) in ops {
        match p {
            Pauli::X => flip ^= 1 << q,
            Pauli::Z => zmask ^= 1 << q,
            Pauli::Y => {
                flip ^= 1 << q;
                zmask ^= 1 << q;
                ny += 1;
            }
        }
    }
    // Y = i X Z, so P|b> = i^ny (-1)^{popcount(b & zmask)} |b ^ flip>.
    let phase = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)][ny % 4];
    let mut acc = C64::new(0.0, 0.0);
    for (b, &a) in state.amps.iter().enumerate() {
        let sign = if (b & zmask).count_ones() & 1 == 1 { -1.0 } else { 1.0 };
        acc += state.amps[b ^ flip].conj() * a * sign;
    }
    acc * phase / state.norm_sqr()
}

/// `|<a|b>|^2 / (<a|a><b|b>)`.
pub fn fidelity(a: &[C64], b: &[C64]) -> f64 {
    let ov: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let na: f64 = a.iter().map(|x| x.norm_sqr()).sum();
    let nb: f64 = b.iter().map(|x| x.norm_sqr()).sum();
    ov.norm_sqr() / (na * nb)
}
