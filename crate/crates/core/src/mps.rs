//! Matrix-product states and operators with certified truncation.
//!
//! Site tensors are stored row-major as `[left][phys][right]`, so the same
//! buffer reads as a `(left*phys) x right` or a `left x (phys*right)` matrix.
//! Site `k` of a train is bit `k` of a dense amplitude index.
//!
//! Compression is one left-to-right QR sweep followed by one right-to-left SVD
//! sweep. Because every truncation then acts in canonical gauge, the product of
//! the kept weights is exactly the fidelity with the untruncated state, and
//! the summed discarded weight bounds `1 - F`.

use faer::{Mat, MatRef};
use num_complex::Complex64 as C64;
use thiserror::Error;

/// Singular values below this fraction of the largest are always dropped.
pub const NOISE_FLOOR: f64 = 1e-14;

#[derive(Debug, Error, PartialEq)]
pub enum MpsError {
    #[error("length mismatch: train has {train} sites, operator has {op}")]
    LengthMismatch { train: usize, op: usize },
    #[error("bond {bond} needs {required} singular values, cap is {cap}")]
    BondCap { bond: usize, required: usize, cap: usize },
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("cut {cut} out of range for {n} sites")]
    BadCut { cut: usize, n: usize },
    #[error("empty interval")]
    EmptyInterval,
    #[error("physical dimension mismatch at site {0}")]
    PhysMismatch(usize),
    #[error("singular value decomposition failed")]
    Svd,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Site {
    pub dl: usize,
    pub d: usize,
    pub dr: usize,
    pub data: Vec<C64>,
}

impl Site {
    pub fn new(dl: usize, d: usize, dr: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), dl * d * dr);
        Self { dl, d, dr, data }
    }

    pub fn at(&self, l: usize, p: usize, r: usize) -> C64 {
        self.data[(l * self.d + p) * self.dr + r]
    }

    fn left_mat(&self) -> Mat<C64> {
        from_rows(&self.data, self.dl * self.d, self.dr)
    }

    fn right_mat(&self) -> Mat<C64> {
        from_rows(&self.data, self.dl, self.d * self.dr)
    }
}

fn from_rows(data: &[C64], rows: usize, cols: usize) -> Mat<C64> {
    Mat::from_fn(rows, cols, |i, j| data[i * cols + j])
}

fn to_rows(m: MatRef<'_, C64>) -> Vec<C64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompressionPolicy {
    /// Budget for the normalized discarded weight of one sweep, summed over bonds.
    pub epsilon: f64,
    pub chi_max: Option<usize>,
    pub renormalize: bool,
}

impl Default for CompressionPolicy {
    fn default() -> Self {
        Self { epsilon: 1e-9, chi_max: None, renormalize: true }
    }
}

impl CompressionPolicy {
    pub fn exact() -> Self {
        Self { epsilon: 0.0, chi_max: None, renormalize: true }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepDiagnostics {
    pub max_bond: usize,
    pub discarded_weight: f64,
    pub log_norm_delta: f64,
}

/// Matrix-product state. The represented vector is `exp(log_norm)` times the
/// contraction of `sites`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorTrain {
    pub sites: Vec<Site>,
    /// Orthogonality center, if the train is known to be in mixed canonical form.
    pub center: Option<usize>,
    pub discarded: f64,
    pub log_norm: f64,
}

/// Product state from local kets; the local norms go to the log-norm.
pub fn product_tt(locals: &[[C64; 2]]) -> TensorTrain {
    assert!(!locals.is_empty(), "product_tt needs at least one site");
    let mut log_norm = 0.0;
    let sites = locals
        .iter()
        .map(|v| {
            let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
            log_norm += n.ln();
            Site::new(1, 2, 1, vec![v[0] / n, v[1] / n])
        })
        .collect();
    TensorTrain { sites, center: Some(0), discarded: 0.0, log_norm }
}

impl TensorTrain {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites.iter().take(self.len() - 1).map(|s| s.dr).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.sites.iter().map(|s| s.dr).max().unwrap_or(1)
    }

    /// Squared norm of the stored tensors (without the log-norm factor).
    pub fn raw_norm_sqr(&self) -> f64 {
        match self.center {
            Some(c) => self.sites[c].data.iter().map(|x| x.norm_sqr()).sum(),
            None => self.dense().iter().map(|x| x.norm_sqr()).sum(),
        }
    }

    /// Full amplitude vector of the stored tensors; small trains only.
    pub fn dense(&self) -> Vec<C64> {
        let mut acc: Vec<C64> = vec![C64::new(1.0, 0.0)];
        let mut dim = 1usize;
        for s in &self.sites {
            // acc is indexed [index][bond], bit k of index = site k.
            let mut next = vec![C64::new(0.0, 0.0); dim * s.d * s.dr];
            for idx in 0..dim {
                for l in 0..s.dl {
                    let a = acc[idx * s.dl + l];
                    if a == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for p in 0..s.d {
                        for r in 0..s.dr {
                            next[(idx + p * dim) * s.dr + r] += a * s.at(l, p, r);
                        }
                    }
                }
            }
            acc = next;
            dim *= s.d;
        }
        acc
    }

    fn qr_step_right(&mut self, k: usize) {
        let m = self.sites[k].left_mat();
        let qr = m.qr();
        let q = qr.compute_thin_Q();
        let r = qr.thin_R().to_owned();
        let (dl, d) = (self.sites[k].dl, self.sites[k].d);
        self.sites[k] = Site::new(dl, d, q.ncols(), to_rows(q.as_ref()));
        let next = &self.sites[k + 1];
        let merged = &r * next.right_mat();
        let (nd, ndr) = (next.d, next.dr);
        self.sites[k + 1] = Site::new(r.nrows(), nd, ndr, to_rows(merged.as_ref()));
    }

    fn qr_step_left(&mut self, k: usize) {
        let m = self.sites[k].right_mat();
        let qr = m.adjoint().qr();
        let q = qr.compute_thin_Q();
        let r = qr.thin_R().to_owned();
        let (d, dr) = (self.sites[k].d, self.sites[k].dr);
        self.sites[k] = Site::new(q.ncols(), d, dr, to_rows(q.adjoint().to_owned().as_ref()));
        let prev = &self.sites[k - 1];
        let merged = prev.left_mat() * r.adjoint();
        let (pdl, pd) = (prev.dl, prev.d);
        self.sites[k - 1] = Site::new(pdl, pd, merged.ncols(), to_rows(merged.as_ref()));
    }

    /// Bring the train to mixed canonical form with center `c`.
    pub fn canonicalize(&mut self, c: usize) {
        let n = self.len();
        assert!(c < n);
        let (lo, hi) = match self.center {
            Some(old) => (old.min(c), old.max(c)),
            None => (0, n - 1),
        };
        if self.center.is_none() {
            for k in 0..c {
                self.qr_step_right(k);
            }
            for k in (c + 1..n).rev() {
                self.qr_step_left(k);
            }
        } else if let Some(old) = self.center {
            if old < c {
                for k in lo..hi {
                    self.qr_step_right(k);
                }
            } else {
                for k in (lo + 1..=hi).rev() {
                    self.qr_step_left(k);
                }
            }
        }
        self.center = Some(c);
    }

    /// Fold the center norm into the log-norm. Returns the log of the removed factor.
    pub fn normalize(&mut self) -> Result<f64, MpsError> {
        let c = match self.center {
            Some(c) => c,
            None => {
                self.canonicalize(0);
                0
            }
        };
        let n = self.sites[c].data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(MpsError::ZeroNorm);
        }
        for x in &mut self.sites[c].data {
            *x /= n;
        }
        self.log_norm += n.ln();
        Ok(n.ln())
    }

    /// QR sweep to the right end, then truncating SVD sweep back to site 0.
    pub fn compress(&mut self, policy: &CompressionPolicy) -> Result<StepDiagnostics, MpsError> {
        let n = self.len();
        let mut diag = StepDiagnostics::default();
        if n > 1 {
            self.canonicalize(n - 1);
            let budget = policy.epsilon / (n - 1) as f64;
            for k in (1..n).rev() {
                let m = self.sites[k].right_mat();
                let svd = m.thin_svd().map_err(|_| MpsError::Svd)?;
                let s: Vec<f64> = (0..svd.S().dim()).map(|i| svd.S()[i].re).collect();
                let total: f64 = s.iter().map(|x| x * x).sum();
                if total == 0.0 || !total.is_finite() {
                    return Err(MpsError::ZeroNorm);
                }
                let keep = truncation_rank(&s, total, budget);
                if let Some(cap) = policy.chi_max {
                    if keep > cap {
                        return Err(MpsError::BondCap { bond: k, required: keep, cap });
                    }
                }
                diag.discarded_weight += s[keep..].iter().map(|x| x * x).sum::<f64>() / total;
                let u = svd.U();
                let v = svd.V();
                let (d, dr) = (self.sites[k].d, self.sites[k].dr);
                let vh = v.get(.., ..keep).adjoint().to_owned();
                self.sites[k] = Site::new(keep, d, dr, to_rows(vh.as_ref()));
                let us = Mat::from_fn(u.nrows(), keep, |i, j| u[(i, j)] * s[j]);
                let prev = &self.sites[k - 1];
                let merged = prev.left_mat() * us;
                let (pdl, pd) = (prev.dl, prev.d);
                self.sites[k - 1] = Site::new(pdl, pd, keep, to_rows(merged.as_ref()));
            }
            self.center = Some(0);
        }
        if policy.renormalize {
            diag.log_norm_delta = self.normalize()?;
        }
        self.discarded += diag.discarded_weight;
        diag.max_bond = self.max_bond();
        Ok(diag)
    }

    /// Schmidt spectra (normalized squared singular values) at every bond.
    pub fn bond_spectra(&self) -> Result<Vec<Vec<f64>>, MpsError> {
        let mut t = self.clone();
        t.canonicalize(0);
        let n = t.len();
        let mut out = Vec::with_capacity(n.saturating_sub(1));
        for k in 0..n.saturating_sub(1) {
            let m = t.sites[k].left_mat();
            let svd = m.thin_svd().map_err(|_| MpsError::Svd)?;
            let s: Vec<f64> = (0..svd.S().dim()).map(|i| svd.S()[i].re).collect();
            let total: f64 = s.iter().map(|x| x * x).sum();
            if total == 0.0 {
                return Err(MpsError::ZeroNorm);
            }
            out.push(s.iter().map(|x| x * x / total).collect());
            let (dl, d) = (t.sites[k].dl, t.sites[k].d);
            let r = s.len();
            t.sites[k] = Site::new(dl, d, r, to_rows(svd.U()));
            let sv = Mat::from_fn(r, svd.V().nrows(), |i, j| svd.V()[(j, i)].conj() * s[i]);
            let next = &t.sites[k + 1];
            let merged = sv * next.right_mat();
            let (nd, ndr) = (next.d, next.dr);
            t.sites[k + 1] = Site::new(r, nd, ndr, to_rows(merged.as_ref()));
        }
        Ok(out)
    }

    /// Insert a product site in front of position `pos`, copying the bond there.
    pub fn insert_site(&mut self, pos: usize, local: [C64; 2]) {
        let bond = if pos == 0 { 1 } else { self.sites[pos - 1].dr };
        let n = (local[0].norm_sqr() + local[1].norm_sqr()).sqrt();
        let mut data = vec![C64::new(0.0, 0.0); bond * 2 * bond];
        for b in 0..bond {
            data[b * 2 * bond + b] = local[0] / n;
            data[(b * 2 + 1) * bond + b] = local[1] / n;
        }
        self.sites.insert(pos, Site::new(bond, 2, bond, data));
        self.log_norm += n.ln();
        if let Some(c) = self.center {
            if c >= pos {
                self.center = Some(c + 1);
            }
        }
    }

    /// Apply a one-site operator `op[out][in]`. The center is moved to `k`
    /// first, so canonical form survives non-unitary operators.
    pub fn apply_one_site(&mut self, k: usize, op: &[[C64; 2]; 2]) {
        if self.center.is_some() {
            self.canonicalize(k);
        }
        let s = &mut self.sites[k];
        for l in 0..s.dl {
            for r in 0..s.dr {
                let a0 = s.data[(l * 2) * s.dr + r];
                let a1 = s.data[(l * 2 + 1) * s.dr + r];
                s.data[(l * 2) * s.dr + r] = op[0][0] * a0 + op[0][1] * a1;
                s.data[(l * 2 + 1) * s.dr + r] = op[1][0] * a0 + op[1][1] * a1;
            }
        }
    }

    /// Apply a two-site operator on `(k, k+1)`; `op[(p<<1)|q][(p'<<1)|q']` with
    /// `p` on site `k`. Splits by SVD with the per-bond budget `policy.epsilon`.
    pub fn apply_two_site(&mut self, k: usize, op: &[[C64; 4]; 4], policy: &CompressionPolicy) -> Result<f64, MpsError> {
        self.canonicalize(k);
        let (a, b) = (&self.sites[k], &self.sites[k + 1]);
        let (dl, dm, dr) = (a.dl, a.dr, b.dr);
        let mut theta = vec![C64::new(0.0, 0.0); dl * 4 * dr];
        for l in 0..dl {
            for p in 0..2 {
                for m in 0..dm {
                    let x = a.at(l, p, m);
                    if x == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for q in 0..2 {
                        for r in 0..dr {
                            theta[(l * 4 + p * 2 + q) * dr + r] += x * b.at(m, q, r);
                        }
                    }
                }
            }
        }
        let mut out = vec![C64::new(0.0, 0.0); dl * 4 * dr];
        for l in 0..dl {
            for po in 0..4 {
                for pi in 0..4 {
                    let g = op[po][pi];
                    if g == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for r in 0..dr {
                        out[(l * 4 + po) * dr + r] += g * theta[(l * 4 + pi) * dr + r];
                    }
                }
            }
        }
        let m = from_rows(&out, dl * 2, 2 * dr);
        let svd = m.thin_svd().map_err(|_| MpsError::Svd)?;
        let s: Vec<f64> = (0..svd.S().dim()).map(|i| svd.S()[i].re).collect();
        let total: f64 = s.iter().map(|x| x * x).sum();
        if total == 0.0 {
            return Err(MpsError::ZeroNorm);
        }
        let keep = truncation_rank(&s, total, policy.epsilon);
        if let Some(cap) = policy.chi_max {
            if keep > cap {
                return Err(MpsError::BondCap { bond: k + 1, required: keep, cap });
            }
        }
        let disc = s[keep..].iter().map(|x| x * x).sum::<f64>() / total;
        let u = svd.U().get(.., ..keep).to_owned();
        let sv = Mat::from_fn(keep, 2 * dr, |i, j| svd.V()[(j, i)].conj() * s[i]);
        self.sites[k] = Site::new(dl, 2, keep, to_rows(u.as_ref()));
        self.sites[k + 1] = Site::new(keep, 2, dr, to_rows(sv.as_ref()));
        self.center = Some(k + 1);
        self.discarded += disc;
        Ok(disc)
    }

    /// `<psi| prod_k O_k |psi> / <psi|psi>` for one-site operators `O_k[out][in]`.
    pub fn expectation(&self, ops: &[(usize, [[C64; 2]; 2])]) -> C64 {
        let n = self.len();
        let mut local: Vec<Option<[[C64; 2]; 2]>> = vec![None; n];
        for &(k, op) in ops {
            local[k] = Some(match local[k] {
                None => op,
                Some(prev) => mul2(&op, &prev),
            });
        }
        let num = self.sandwich(&local);
        let den = self.sandwich(&vec![None; n]);
        num / den
    }

    fn sandwich(&self, local: &[Option<[[C64; 2]; 2]>]) -> C64 {
        let mut env = vec![C64::new(1.0, 0.0)];
        let mut dim = 1usize;
        for (k, s) in self.sites.iter().enumerate() {
            let mut next = vec![C64::new(0.0, 0.0); s.dr * s.dr];
            for l in 0..dim {
                for lp in 0..dim {
                    let e = env[l * dim + lp];
                    if e == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for p in 0..2 {
                        for q in 0..2 {
                            let o = match &local[k] {
                                Some(op) => op[p][q],
                                None if p == q => C64::new(1.0, 0.0),
                                None => continue,
                            };
                            if o == C64::new(0.0, 0.0) {
                                continue;
                            }
                            for r in 0..s.dr {
                                let bra = s.at(l, p, r).conj() * e * o;
                                if bra == C64::new(0.0, 0.0) {
                                    continue;
                                }
                                for rp in 0..s.dr {
                                    next[r * s.dr + rp] += bra * s.at(lp, q, rp);
                                }
                            }
                        }
                    }
                }
            }
            env = next;
            dim = s.dr;
        }
        env[0]
    }
}

fn mul2(a: &[[C64; 2]; 2], b: &[[C64; 2]; 2]) -> [[C64; 2]; 2] {
    let mut out = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Smallest rank whose discarded normalized weight fits `budget`, never keeping
/// values under the noise floor.
fn truncation_rank(s: &[f64], total: f64, budget: f64) -> usize {
    let floor = s[0] * NOISE_FLOOR;
    let mut keep = s.iter().take_while(|&&x| x > floor).count().max(1);
    let mut tail: f64 = s[keep..].iter().map(|x| x * x).sum();
    while keep > 1 {
        let next = tail + s[keep - 1] * s[keep - 1];
        if next / total > budget {
            break;
        }
        tail = next;
        keep -= 1;
    }
    keep
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpSite {
    pub dl: usize,
    pub dout: usize,
    pub din: usize,
    pub dr: usize,
    /// Row-major `[left][out][in][right]`.
    pub data: Vec<C64>,
}

impl OpSite {
    pub fn new(dl: usize, dout: usize, din: usize, dr: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), dl * dout * din * dr);
        Self { dl, dout, din, dr, data }
    }

    pub fn at(&self, l: usize, o: usize, i: usize, r: usize) -> C64 {
        self.data[((l * self.dout + o) * self.din + i) * self.dr + r]
    }

    pub fn local(op: &[[C64; 2]; 2]) -> Self {
        Self::new(1, 2, 2, 1, vec![op[0][0], op[0][1], op[1][0], op[1][1]])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorTrain {
    pub sites: Vec<OpSite>,
}

impl OperatorTrain {
    pub fn identity(n: usize) -> Self {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        Self { sites: vec![OpSite::local(&[[one, zero], [zero, one]]); n] }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Multiply a one-site operator onto the output side of site `k`.
    pub fn left_multiply(&mut self, k: usize, op: &[[C64; 2]; 2]) {
        let s = &mut self.sites[k];
        let mut out = vec![C64::new(0.0, 0.0); s.data.len()];
        for l in 0..s.dl {
            for o in 0..s.dout {
                for m in 0..s.dout {
                    let g = op[o][m];
                    if g == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for i in 0..s.din {
                        for r in 0..s.dr {
                            out[((l * s.dout + o) * s.din + i) * s.dr + r] += g * s.at(l, m, i, r);
                        }
                    }
                }
            }
        }
        s.data = out;
    }

    /// Dense matrix `[out index][in index]`; small trains only.
    pub fn dense(&self) -> Vec<Vec<C64>> {
        let n = self.len();
        let dim = 1usize << n;
        let mut m = vec![vec![C64::new(0.0, 0.0); dim]; dim];
        for col in 0..dim {
            let mut tt = product_tt(&(0..n).map(|k| basis((col >> k) & 1)).collect::<Vec<_>>());
            tt = contract(&tt, self).expect("lengths match");
            for (row, a) in tt.dense().into_iter().enumerate() {
                m[row][col] = a;
            }
        }
        m
    }
}

fn basis(b: usize) -> [C64; 2] {
    if b == 0 {
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
    } else {
        [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]
    }
}

/// Exact site-wise contraction of an operator train onto a state; no compression.
pub fn contract(tt: &TensorTrain, ot: &OperatorTrain) -> Result<TensorTrain, MpsError> {
    if tt.len() != ot.len() {
        return Err(MpsError::LengthMismatch { train: tt.len(), op: ot.len() });
    }
    let mut sites = Vec::with_capacity(tt.len());
    for (k, (a, w)) in tt.sites.iter().zip(&ot.sites).enumerate() {
        if a.d != w.din {
            return Err(MpsError::PhysMismatch(k));
        }
        let (dl, dr) = (a.dl * w.dl, a.dr * w.dr);
        let mut data = vec![C64::new(0.0, 0.0); dl * w.dout * dr];
        for al in 0..a.dl {
            for wl in 0..w.dl {
                let l = al * w.dl + wl;
                for o in 0..w.dout {
                    for i in 0..w.din {
                        for wr in 0..w.dr {
                            let g = w.at(wl, o, i, wr);
                            if g == C64::new(0.0, 0.0) {
                                continue;
                            }
                            for ar in 0..a.dr {
                                data[(l * w.dout + o) * dr + ar * w.dr + wr] += g * a.at(al, i, ar);
                            }
                        }
                    }
                }
            }
        }
        sites.push(Site::new(dl, w.dout, dr, data));
    }
    Ok(TensorTrain { sites, center: None, discarded: tt.discarded, log_norm: tt.log_norm })
}

/// Apply an operator train and compress under `policy`.
pub fn apply_ot(tt: &TensorTrain, ot: &OperatorTrain, policy: &CompressionPolicy) -> Result<(TensorTrain, StepDiagnostics), MpsError> {
    let mut out = contract(tt, ot)?;
    let diag = out.compress(policy)?;
    Ok((out, diag))
}

fn renyi2_of(spectrum: &[f64]) -> f64 {
    -spectrum.iter().map(|p| p * p).sum::<f64>().ln()
}

/// Renyi-2 entropy of sites `0..cut`.
pub fn prefix_renyi2(tt: &TensorTrain, cut: usize) -> Result<f64, MpsError> {
    let n = tt.len();
    if cut > n {
        return Err(MpsError::BadCut { cut, n });
    }
    if cut == 0 || cut == n {
        return Ok(0.0);
    }
    let mut t = tt.clone();
    t.canonicalize(cut - 1);
    let svd = t.sites[cut - 1].left_mat().thin_svd().map_err(|_| MpsError::Svd)?;
    let s: Vec<f64> = (0..svd.S().dim()).map(|i| svd.S()[i].re.powi(2)).collect();
    let total: f64 = s.iter().sum();
    if total == 0.0 {
        return Err(MpsError::ZeroNorm);
    }
    Ok(renyi2_of(&s.iter().map(|x| x / total).collect::<Vec<_>>()))
}

/// Renyi-2 entropies at every cut `1..n`.
pub fn renyi2_profile(tt: &TensorTrain) -> Result<Vec<f64>, MpsError> {
    Ok(tt.bond_spectra()?.iter().map(|s| renyi2_of(s)).collect())
}

/// Renyi-2 entropy of the contiguous sites `range` via the two-layer contraction
/// of `tr rho_A^2`. Cost grows as `chi^5`; intended for moderate bonds.
pub fn segment_renyi2(tt: &TensorTrain, range: std::ops::Range<usize>) -> Result<f64, MpsError> {
    if range.is_empty() {
        return Err(MpsError::EmptyInterval);
    }
    let n = tt.len();
    if range.end > n {
        return Err(MpsError::BadCut { cut: range.end, n });
    }
    let mut t = tt.clone();
    t.canonicalize(range.start);
    let norm: f64 = t.sites[range.start].data.iter().map(|x| x.norm_sqr()).sum();
    if norm == 0.0 {
        return Err(MpsError::ZeroNorm);
    }
    // env[(l, l'), (m, m')] = sum over segment physical indices of A[l..m] conj(A[l'..m']).
    let dl = t.sites[range.start].dl;
    let mut dm = dl;
    let mut env = vec![C64::new(0.0, 0.0); dl * dl * dm * dm];
    for l in 0..dl {
        for lp in 0..dl {
            env[(l * dl + lp) * dm * dm + l * dm + lp] = C64::new(1.0, 0.0);
        }
    }
    let rows = dl * dl;
    for k in range.clone() {
        let s = &t.sites[k];
        let dr = s.dr;
        // First contract m with A[m, p, r]: tmp[row, m', p, r].
        let mut tmp = vec![C64::new(0.0, 0.0); rows * dm * 2 * dr];
        for row in 0..rows {
            for m in 0..dm {
                for mp in 0..dm {
                    let e = env[row * dm * dm + m * dm + mp];
                    if e == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for p in 0..s.d {
                        for r in 0..dr {
                            tmp[((row * dm + mp) * 2 + p) * dr + r] += e * s.at(m, p, r);
                        }
                    }
                }
            }
        }
        let mut next = vec![C64::new(0.0, 0.0); rows * dr * dr];
        for row in 0..rows {
            for mp in 0..dm {
                for p in 0..s.d {
                    for r in 0..dr {
                        let x = tmp[((row * dm + mp) * 2 + p) * dr + r];
                        if x == C64::new(0.0, 0.0) {
                            continue;
                        }
                        for rp in 0..dr {
                            next[row * dr * dr + r * dr + rp] += x * s.at(mp, p, rp).conj();
                        }
                    }
                }
            }
        }
        env = next;
        dm = dr;
    }
    let purity: f64 = env.iter().map(|x| x.norm_sqr()).sum::<f64>() / (norm * norm);
    Ok(-purity.ln())
}

/// `<bra|tt>` including the log-norm, as `(ln|z|, z/|z|)`. `bra[k]` holds the
/// coefficients `b` of `<phi_k| = b0 <0| + b1 <1|`.
pub fn tt_overlap_log(tt: &TensorTrain, bra: &[[C64; 2]]) -> (f64, C64) {
    assert_eq!(tt.len(), bra.len());
    let mut v = vec![C64::new(1.0, 0.0)];
    let mut log = tt.log_norm;
    for (s, b) in tt.sites.iter().zip(bra) {
        let mut next = vec![C64::new(0.0, 0.0); s.dr];
        for l in 0..s.dl {
            if v[l] == C64::new(0.0, 0.0) {
                continue;
            }
            for p in 0..2 {
                for r in 0..s.dr {
                    next[r] += v[l] * b[p] * s.at(l, p, r);
                }
            }
        }
        let n = next.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if n == 0.0 {
            return (f64::NEG_INFINITY, C64::new(0.0, 0.0));
        }
        for x in &mut next {
            *x /= n;
        }
        log += n.ln();
        v = next;
    }
    (log + v[0].norm().ln(), v[0] / v[0].norm())
}

pub fn tt_overlap(tt: &TensorTrain, bra: &[[C64; 2]]) -> C64 {
    let (l, ph) = tt_overlap_log(tt, bra);
    if l == f64::NEG_INFINITY {
        return C64::new(0.0, 0.0);
    }
    ph * l.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn plus() -> [C64; 2] {
        [c(0.5f64.sqrt()), c(0.5f64.sqrt())]
    }

    pub(crate) fn cz_chain(n: usize) -> OperatorTrain {
        // CZ(k, k+1) = P0 (x) I + P1 (x) Z; the right bond carries the projector index.
        let mut sites = Vec::new();
        for k in 0..n {
            let dl = if k == 0 { 1 } else { 2 };
            let dr = if k + 1 == n { 1 } else { 2 };
            let mut data = vec![c(0.0); dl * 4 * dr];
            for l in 0..dl {
                for r in 0..dr {
                    for p in 0..2 {
                        // Left bond l: Z^l from the previous site's P1 branch.
                        // Right bond r: r = 0 -> P0, r = 1 -> P1 on this site.
                        let mut v = if l == 1 && p == 1 { -1.0 } else { 1.0 };
                        if dr == 2 && r != p {
                            v = 0.0;
                        }
                        data[((l * 2 + p) * 2 + p) * dr + r] = c(v);
                    }
                }
            }
            sites.push(OpSite::new(dl, 2, 2, dr, data));
        }
        OperatorTrain { sites }
    }

    #[test]
    fn product_norms() {
        let tt = product_tt(&vec![plus(); 4]);
        assert!((tt_overlap(&tt, &vec![plus(); 4]) - 1.0).norm() < 1e-14);
        let tt = product_tt(&[[c(3.0), c(4.0)], [c(1.0), c(0.0)]]);
        assert!((tt.log_norm - 5f64.ln()).abs() < 1e-14);
        let single = product_tt(&[plus()]);
        assert_eq!(single.len(), 1);
        let orth = tt_overlap(&product_tt(&[[c(1.0), c(0.0)]]), &[[c(0.0), c(1.0)]]);
        assert_eq!(orth, c(0.0));
    }

    #[test]
    fn cluster_chain_entropy() {
        let n = 6;
        let tt = product_tt(&vec![plus(); n]);
        let (out, diag) = apply_ot(&tt, &cz_chain(n), &CompressionPolicy::default()).unwrap();
        assert!(diag.discarded_weight < 1e-20);
        assert!((prefix_renyi2(&out, 3).unwrap() - LN_2).abs() < 1e-10);
        assert!((segment_renyi2(&out, 2..4).unwrap() - 2.0 * LN_2).abs() < 1e-10);
        let profile = renyi2_profile(&out).unwrap();
        for (k, s) in profile.iter().enumerate() {
            assert!((s - LN_2).abs() < 1e-10, "cut {k}: {s}");
        }
    }

    #[test]
    fn identity_is_exact() {
        let tt = product_tt(&[plus(), [c(0.6), c(0.8)], plus()]);
        let (out, diag) = apply_ot(&tt, &OperatorTrain::identity(3), &CompressionPolicy::exact()).unwrap();
        assert_eq!(diag.discarded_weight, 0.0);
        let a = tt.dense();
        let b = out.dense();
        let f = crate::oracle::fidelity(&a, &b);
        assert!((f - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bell_pair() {
        let s = 0.5f64.sqrt();
        let a = Site::new(1, 2, 2, vec![c(s), c(0.0), c(0.0), c(s)]);
        let b = Site::new(2, 2, 1, vec![c(1.0), c(0.0), c(0.0), c(1.0)]);
        let tt = TensorTrain { sites: vec![a, b], center: None, discarded: 0.0, log_norm: 0.0 };
        assert!((prefix_renyi2(&tt, 1).unwrap() - LN_2).abs() < 1e-12);
        assert!(prefix_renyi2(&tt, 3).is_err());
        assert!(segment_renyi2(&tt, 1..1).is_err());
        assert!(segment_renyi2(&tt, 0..2).unwrap().abs() < 1e-12);
    }

    #[test]
    fn bond_cap_reported() {
        let n = 6;
        let tt = product_tt(&vec![plus(); n]);
        let policy = CompressionPolicy { chi_max: Some(1), ..Default::default() };
        assert!(matches!(apply_ot(&tt, &cz_chain(n), &policy), Err(MpsError::BondCap { .. })));
    }
}
