//! Entropy-scaling fits, cross ratios, finite-size collapse and phase labels.
//!
//! Every routine is deterministic. Half-widths are one standard error from the
//! residual variance.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("abscissae are degenerate")]
    Degenerate,
    #[error("value out of domain: {0}")]
    Domain(String),
    #[error("coincident or misordered endpoints")]
    Endpoints,
    #[error("collapse needs at least 3 distinct sizes, got {0}")]
    TooFewSizes(usize),
    #[error("degenerate search box")]
    SearchBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub residual_norm: f64,
    pub n_points: usize,
    /// Abscissa window the points were taken from, if one was applied.
    pub window: Option<(f64, f64)>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        let i = self.names.iter().position(|n| n == name)?;
        Some((self.estimates[i], self.half_widths[i]))
    }
}

/// Ordinary least squares `y = slope * x + intercept`.
/// Returns `(slope, intercept, se_slope, se_intercept, rss)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64, f64, f64), AnalysisError> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(AnalysisError::TooFewPoints { need: 2, got: n.min(ys.len()) });
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-14 * (1.0 + mx * mx) * nf {
        return Err(AnalysisError::Degenerate);
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let (se_s, se_i) = if n > 2 {
        let s2 = rss / (nf - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / nf + mx * mx / sxx)).sqrt())
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Ok((slope, intercept, se_s, se_i, rss))
}

fn check_finite(v: &[f64]) -> Result<(), AnalysisError> {
    match v.iter().find(|x| !x.is_finite()) {
        Some(x) => Err(AnalysisError::Domain(format!("non-finite value {x}"))),
        None => Ok(()),
    }
}

/// Default window on `L_A / L` for [`log_sine_fit`].
pub const LOG_SINE_WINDOW: (f64, f64) = (0.1, 0.9);

/// Fit `S / ln 2 = a ln sin(pi L_A / L) + b` over points `(L_A, S)` with
/// `L_A / L` inside `window`. Entropies are in nats.
pub fn log_sine_fit(l: f64, points: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<FitResult, AnalysisError> {
    let (lo, hi) = window.unwrap_or((0.0, 1.0));
    let kept: Vec<(f64, f64)> = points.iter().copied().filter(|&(la, _)| la / l >= lo && la / l <= hi).collect();
    if kept.len() < 4 {
        return Err(AnalysisError::TooFewPoints { need: 4, got: kept.len() });
    }
    if kept.iter().any(|&(la, _)| la <= 0.0 || la >= l) {
        return Err(AnalysisError::Domain("need 0 < L_A < L".into()));
    }
    let xs: Vec<f64> = kept.iter().map(|&(la, _)| (PI * la / l).sin().ln()).collect();
    let ys: Vec<f64> = kept.iter().map(|&(_, s)| s / LN_2).collect();
    check_finite(&ys)?;
    let (a, b, sa, sb, rss) = linear_fit(&xs, &ys)?;
    Ok(FitResult {
        model: "log-sine".into(),
        names: vec!["a".into(), "b".into()],
        estimates: vec![a, b],
        half_widths: vec![sa, sb],
        residual_norm: rss.sqrt(),
        n_points: kept.len(),
        window,
    })
}

/// Chord length on a ring of circumference `l`.
pub fn chord(d: f64, l: f64) -> f64 {
    l / PI * (PI * d.abs() / l).sin()
}

/// Cross ratio `x12 x34 / (x13 x24)` of intervals `A = [x1, x2]`, `B = [x3, x4]`
/// with `x1 < x2 < x3 < x4 < x1 + l`.
pub fn cross_ratio(x: [f64; 4], l: f64) -> Result<f64, AnalysisError> {
    if !(x[0] < x[1] && x[1] < x[2] && x[2] < x[3] && x[3] < x[0] + l) || !(l > 0.0) {
        return Err(AnalysisError::Endpoints);
    }
    let c = |i: usize, j: usize| chord(x[j] - x[i], l);
    Ok(c(0, 1) * c(2, 3) / (c(0, 2) * c(1, 3)))
}

/// Default upper cut on the cross ratio for [`power_fit`].
pub const POWER_WINDOW: f64 = 0.3;

/// Log-log fit `I = A chi^Delta` over pairs `(chi, I)` with `chi <= chi_max`.
pub fn power_fit(pairs: &[(f64, f64)], chi_max: f64) -> Result<FitResult, AnalysisError> {
    let kept: Vec<(f64, f64)> = pairs.iter().copied().filter(|&(c, _)| c <= chi_max).collect();
    if kept.iter().any(|&(c, i)| c <= 0.0 || i <= 0.0) {
        return Err(AnalysisError::Domain("power fit needs positive values".into()));
    }
    if kept.len() < 3 {
        return Err(AnalysisError::TooFewPoints { need: 3, got: kept.len() });
    }
    let xs: Vec<f64> = kept.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = kept.iter().map(|p| p.1.ln()).collect();
    let (d, b, sd, sb, rss) = linear_fit(&xs, &ys)?;
    Ok(FitResult {
        model: "power".into(),
        names: vec!["delta".into(), "ln_amplitude".into()],
        estimates: vec![d, b],
        half_widths: vec![sd, sb],
        residual_norm: rss.sqrt(),
        n_points: kept.len(),
        window: Some((0.0, chi_max)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapsePoint {
    pub l: f64,
    pub p: f64,
    pub y: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub p_c: (f64, f64),
    pub nu: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseResult {
    pub p_c: f64,
    pub nu: f64,
    /// Mean squared deviation from the master curve at the optimum.
    pub quality: f64,
}

/// Collapse misfit: each point is compared against the linear interpolant of
/// the two nearest points (one on each side in scaled abscissa) pooled from
/// all other sizes. Returns the mean squared deviation; infinite when fewer
/// than half of the points have bracketing neighbours.
pub fn collapse_objective(points: &[CollapsePoint], p_c: f64, nu: f64) -> f64 {
    let mut sizes: Vec<f64> = points.iter().map(|q| q.l).collect();
    sizes.sort_by(f64::total_cmp);
    sizes.dedup();
    let scaled: Vec<Vec<(f64, f64)>> = sizes
        .iter()
        .map(|&l| {
            let mut v: Vec<(f64, f64)> = points
                .iter()
                .filter(|q| q.l == l)
                .map(|q| (l.powf(1.0 / nu) * (q.p - p_c), q.y))
                .collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            v
        })
        .collect();
    let (mut sum, mut count) = (0.0, 0usize);
    for (si, own) in scaled.iter().enumerate() {
        for &(x, y) in own {
            let mut left: Option<(f64, f64)> = None;
            let mut right: Option<(f64, f64)> = None;
            for (sj, other) in scaled.iter().enumerate() {
                if sj == si {
                    continue;
                }
                for &(ox, oy) in other {
                    if ox <= x && left.is_none_or(|l| ox > l.0) {
                        left = Some((ox, oy));
                    }
                    if ox >= x && right.is_none_or(|r| ox < r.0) {
                        right = Some((ox, oy));
                    }
                }
            }
            if let (Some(a), Some(b)) = (left, right) {
                let fit = if b.0 > a.0 { a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0) } else { 0.5 * (a.1 + b.1) };
                sum += (y - fit).powi(2);
                count += 1;
            }
        }
    }
    if count == 0 || 2 * count < points.len() {
        return f64::INFINITY;
    }
    sum / count as f64
}

fn golden(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Grid scan of the search box followed by alternating golden-section
/// refinement in a cell around the best grid point.
pub fn collapse(points: &[CollapsePoint], search: SearchBox) -> Result<CollapseResult, AnalysisError> {
    let mut sizes: Vec<f64> = points.iter().map(|q| q.l).collect();
    sizes.sort_by(f64::total_cmp);
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(AnalysisError::TooFewSizes(sizes.len()));
    }
    let SearchBox { p_c: (p0, p1), nu: (n0, n1) } = search;
    if !(p1 > p0) || !(n1 > n0) || n0 <= 0.0 {
        return Err(AnalysisError::SearchBox);
    }
    const GRID: usize = 60;
    let (dp, dn) = ((p1 - p0) / GRID as f64, (n1 - n0) / GRID as f64);
    let mut best = (f64::INFINITY, p0, n0);
    for i in 0..=GRID {
        for j in 0..=GRID {
            let (p, n) = (p0 + i as f64 * dp, n0 + j as f64 * dn);
            let q = collapse_objective(points, p, n);
            if q < best.0 {
                best = (q, p, n);
            }
        }
    }
    let (_, mut p, mut n) = best;
    for _ in 0..4 {
        p = golden((p - dp).max(p0), (p + dp).min(p1), |x| collapse_objective(points, x, n));
        n = golden((n - dn).max(n0), (n + dn).min(n1), |x| collapse_objective(points, p, x));
    }
    let q = collapse_objective(points, p, n);
    if q > best.0 {
        return Ok(CollapseResult { p_c: best.1, nu: best.2, quality: best.0 });
    }
    Ok(CollapseResult { p_c: p, nu: n, quality: q })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Area,
    Log,
    Volume,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification {
    pub phase: Phase,
    /// Slope of the selected growing model (zero for area).
    pub slope: f64,
    pub fits: Vec<FitResult>,
}

/// Label a half-system entropy series `S(L)` by BIC among `c`, `c + a ln L`
/// and `c + a L`. A growing model is only accepted when its slope is positive
/// by more than two standard errors.
pub fn phase_classify(ls: &[f64], s: &[f64]) -> Result<Classification, AnalysisError> {
    let n = ls.len();
    if n < 4 || s.len() != n {
        return Err(AnalysisError::TooFewPoints { need: 4, got: n.min(s.len()) });
    }
    check_finite(s)?;
    let nf = n as f64;
    let mean = s.iter().sum::<f64>() / nf;
    let rss0: f64 = s.iter().map(|v| (v - mean).powi(2)).sum();
    let floor = 1e-12 * (1.0 + s.iter().map(|v| v * v).sum::<f64>());
    let bic = |rss: f64, k: f64| nf * ((rss + floor) / nf).ln() + k * nf.ln();
    let constant = FitResult {
        model: "area".into(),
        names: vec!["c".into()],
        estimates: vec![mean],
        half_widths: vec![(rss0 / (nf - 1.0) / nf).sqrt()],
        residual_norm: rss0.sqrt(),
        n_points: n,
        window: None,
    };
    let mut best = (bic(rss0, 1.0), Phase::Area, 0.0);
    let mut fits = vec![constant];
    for (phase, tag) in [(Phase::Log, "log"), (Phase::Volume, "volume")] {
        let xs: Vec<f64> = ls.iter().map(|&l| if phase == Phase::Log { l.ln() } else { l }).collect();
        let (a, c, sa, sc, rss) = linear_fit(&xs, s)?;
        let score = bic(rss, 2.0);
        if score < best.0 && a > 0.0 && a > 2.0 * sa {
            best = (score, phase, a);
        }
        fits.push(FitResult {
            model: tag.into(),
            names: vec!["a".into(), "c".into()],
            estimates: vec![a, c],
            half_widths: vec![sa, sc],
            residual_norm: rss.sqrt(),
            n_points: n,
            window: None,
        });
    }
    Ok(Classification { phase: best.1, slope: best.2, fits })
}
