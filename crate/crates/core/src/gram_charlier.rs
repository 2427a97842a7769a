//! Gram-Charlier type A reconstruction of densities and distribution
//! functions from cumulants, using probabilists' Hermite polynomials.

use serde::Serialize;
use thiserror::Error;

use crate::stochastics::{normal_cdf, normal_pdf, CumulantSet};

pub const DEFAULT_GRID_POINTS: usize = 513;
/// Grid half-width in standard deviations.
pub const GRID_HALF_WIDTH: f64 = 6.0;
/// Normalized cumulants above this magnitude mark a curve as unreliable.
pub const DIVERGENCE_LIMIT: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GramCharlierError {
    #[error("degenerate distribution (variance {variance:e})")]
    Degenerate { variance: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// He_n(x): He₀ = 1, He₁ = x, He_{n+1} = x·He_n − n·He_{n−1}.
pub fn hermite(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// He₀..He_n at `x`.
fn hermite_table(n: usize, x: f64) -> [f64; 9] {
    let mut h = [0.0; 9];
    h[0] = 1.0;
    if n >= 1 {
        h[1] = x;
    }
    for k in 1..n.min(8) {
        h[k + 1] = x * h[k] - k as f64 * h[k - 1];
    }
    h
}

/// g_v = γ_v / γ₂^{v/2}, v = 3..K.
pub fn normalized_cumulants(c: &CumulantSet) -> Result<Vec<f64>, GramCharlierError> {
    c.normalized().ok_or(GramCharlierError::Degenerate { variance: c.variance() })
}

/// Series coefficients multiplying He_k, k = 3..8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesCoefficients([f64; 9]);

impl SeriesCoefficients {
    /// `g` holds g₃, g₄, ...; missing orders are zero and orders above 8 are ignored.
    pub fn new(g: &[f64]) -> Self {
        let gv = |v: usize| g.get(v - 3).copied().unwrap_or(0.0);
        let (g3, g4, g5, g6, g7, g8) = (gv(3), gv(4), gv(5), gv(6), gv(7), gv(8));
        let mut c = [0.0; 9];
        c[3] = g3 / 6.0;
        c[4] = g4 / 24.0;
        c[5] = g5 / 120.0;
        c[6] = (g6 + 10.0 * g3 * g3) / 720.0;
        c[7] = (g7 + 35.0 * g3 * g4) / 5040.0;
        c[8] = (g8 + 56.0 * g3 * g5 + 35.0 * g4 * g4) / 40320.0;
        Self(c)
    }

    pub fn coefficient(&self, k: usize) -> f64 {
        self.0.get(k).copied().unwrap_or(0.0)
    }

    /// Standardized density φ(z)·[1 + Σ c_k He_k(z)].
    pub fn standard_pdf(&self, z: f64) -> f64 {
        let h = hermite_table(8, z);
        let s: f64 = (3..=8).map(|k| self.0[k] * h[k]).sum();
        normal_pdf(z) * (1.0 + s)
    }

    /// Standardized distribution Φ(z) − φ(z)·Σ c_k He_{k−1}(z).
    pub fn standard_cdf(&self, z: f64) -> f64 {
        let h = hermite_table(7, z);
        let s: f64 = (3..=8).map(|k| self.0[k] * h[k - 1]).sum();
        normal_cdf(z) - normal_pdf(z) * s
    }
}

/// Evaluated series with clamping counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesValues {
    pub values: Vec<f64>,
    /// Points clamped into the admissible range.
    pub clamped: usize,
    /// Points raised to restore monotonicity (distribution functions only).
    pub monotonized: usize,
    /// Unclamped value at the last grid point.
    pub raw_end: f64,
}

fn check_inputs(sigma: f64, grid: &[f64]) -> Result<(), GramCharlierError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(GramCharlierError::Degenerate { variance: sigma * sigma });
    }
    if grid.is_empty() {
        return Err(GramCharlierError::InvalidGrid("empty grid".into()));
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(GramCharlierError::InvalidGrid("grid must be finite and sorted".into()));
    }
    Ok(())
}

pub fn pdf_series(g: &[f64], mu: f64, sigma: f64, grid: &[f64]) -> Result<SeriesValues, GramCharlierError> {
    check_inputs(sigma, grid)?;
    let c = SeriesCoefficients::new(g);
    let mut clamped = 0;
    let mut raw_end = 0.0;
    let values = grid
        .iter()
        .map(|&x| {
            let f = c.standard_pdf((x - mu) / sigma) / sigma;
            raw_end = f;
            if f < 0.0 {
                clamped += 1;
                0.0
            } else {
                f
            }
        })
        .collect();
    Ok(SeriesValues {
        values,
        clamped,
        monotonized: 0,
        raw_end,
    })
}

pub fn cdf_series(g: &[f64], mu: f64, sigma: f64, grid: &[f64]) -> Result<SeriesValues, GramCharlierError> {
    check_inputs(sigma, grid)?;
    let c = SeriesCoefficients::new(g);
    let mut clamped = 0;
    let mut monotonized = 0;
    let mut raw_end = 0.0;
    let mut running = 0.0f64;
    let values = grid
        .iter()
        .map(|&x| {
            let raw = c.standard_cdf((x - mu) / sigma);
            raw_end = raw;
            let mut f = raw;
            if !(0.0..=1.0).contains(&f) {
                clamped += 1;
                f = f.clamp(0.0, 1.0);
            }
            if f < running {
                monotonized += 1;
                f = running;
            }
            running = f;
            f
        })
        .collect();
    Ok(SeriesValues {
        values,
        clamped,
        monotonized,
        raw_end,
    })
}

/// `n` evenly spaced points over μ ± 6σ.
pub fn standard_grid(mu: f64, sigma: f64, n: usize) -> Vec<f64> {
    let lo = mu - GRID_HALF_WIDTH * sigma;
    let hi = mu + GRID_HALF_WIDTH * sigma;
    linspace(lo, hi, n)
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Series,
    /// All probability at the mean; used when the variance vanishes.
    PointMass,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CurveDiagnostics {
    pub pdf_clamped: usize,
    pub cdf_clamped: usize,
    pub cdf_monotonized: usize,
    /// Unclamped distribution function at the upper grid end.
    pub cdf_raw_end: f64,
    /// Some |g_v| exceeded the divergence limit.
    pub quality_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionCurve {
    pub variable: String,
    pub kind: CurveKind,
    pub x: Vec<f64>,
    pub pdf: Vec<f64>,
    pub cdf: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// g₃..g_K
    pub g: Vec<f64>,
    pub diagnostics: CurveDiagnostics,
}

/// Variances below this (relative to the squared mean scale) are treated as zero.
const DEGENERATE_STD: f64 = 1e-12;

pub fn is_degenerate(c: &CumulantSet) -> bool {
    !(c.std() > DEGENERATE_STD * c.mean().abs().max(1.0))
}

impl DistributionCurve {
    /// Reconstruct from cumulants on `n` points over μ ± 6σ.
    pub fn from_cumulants(variable: &str, c: &CumulantSet, n: usize) -> Result<Self, GramCharlierError> {
        if n < 2 {
            return Err(GramCharlierError::InvalidGrid(format!("need at least 2 points, got {n}")));
        }
        if is_degenerate(c) {
            return Ok(Self::point_mass(variable, c.mean(), n));
        }
        let (mu, sigma) = (c.mean(), c.std());
        Self::on_grid(variable, c, standard_grid(mu, sigma, n))
    }

    /// Reconstruct on a caller-supplied sorted grid.
    pub fn on_grid(variable: &str, c: &CumulantSet, x: Vec<f64>) -> Result<Self, GramCharlierError> {
        let g = normalized_cumulants(c)?;
        let (mu, sigma) = (c.mean(), c.std());
        let pdf = pdf_series(&g, mu, sigma, &x)?;
        let cdf = cdf_series(&g, mu, sigma, &x)?;
        let quality_warning = g.iter().any(|v| v.abs() > DIVERGENCE_LIMIT);
        if quality_warning {
            log::debug!("{variable}: normalized cumulants exceed {DIVERGENCE_LIMIT}; series may be unreliable");
        }
        if !(0.999..=1.001).contains(&cdf.raw_end) && x.last().is_some_and(|&e| e >= mu + GRID_HALF_WIDTH * sigma) {
            log::warn!("{variable}: distribution function ends at {:.6}", cdf.raw_end);
        }
        if pdf.clamped > 0 || cdf.clamped > 0 || cdf.monotonized > 0 {
            log::debug!(
                "{variable}: clamped {} density and {} distribution points, {} monotonized",
                pdf.clamped,
                cdf.clamped,
                cdf.monotonized
            );
        }
        Ok(Self {
            variable: variable.to_string(),
            kind: CurveKind::Series,
            x,
            pdf: pdf.values,
            cdf: cdf.values,
            mean: mu,
            std: sigma,
            g,
            diagnostics: CurveDiagnostics {
                pdf_clamped: pdf.clamped,
                cdf_clamped: cdf.clamped,
                cdf_monotonized: cdf.monotonized,
                cdf_raw_end: cdf.raw_end,
                quality_warning,
            },
        })
    }

    /// Step distribution at `value` on a narrow symmetric grid.
    pub fn point_mass(variable: &str, value: f64, n: usize) -> Self {
        let n = n.max(3);
        let half = 1e-6 * value.abs().max(1.0);
        let mut x = linspace(value - half, value + half, n);
        let mid = n / 2;
        if n % 2 == 1 {
            x[mid] = value;
        }
        let dx = 2.0 * half / (n - 1) as f64;
        let pdf = (0..n).map(|i| if i == mid { 1.0 / dx } else { 0.0 }).collect();
        let cdf = (0..n).map(|i| if i >= mid { 1.0 } else { 0.0 }).collect();
        Self {
            variable: variable.to_string(),
            kind: CurveKind::PointMass,
            x,
            pdf,
            cdf,
            mean: value,
            std: 0.0,
            g: Vec::new(),
            diagnostics: CurveDiagnostics {
                cdf_raw_end: 1.0,
                ..Default::default()
            },
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.kind == CurveKind::PointMass
    }

    /// Distribution function of the underlying model at any point.
    pub fn cdf_at(&self, x: f64) -> f64 {
        match self.kind {
            CurveKind::PointMass => {
                if x >= self.mean {
                    1.0
                } else {
                    0.0
                }
            }
            CurveKind::Series => SeriesCoefficients::new(&self.g)
                .standard_cdf((x - self.mean) / self.std)
                .clamp(0.0, 1.0),
        }
    }

    /// Copy of the curve with extra grid points (series evaluated exactly there).
    pub fn with_points(&self, extra: &[f64]) -> Self {
        let mut x: Vec<f64> = self.x.iter().chain(extra).copied().filter(|v| v.is_finite()).collect();
        x.sort_by(f64::total_cmp);
        x.dedup();
        match self.kind {
            CurveKind::PointMass => {
                let pdf = x.iter().map(|&v| if v == self.mean { self.pdf[self.x.len() / 2] } else { 0.0 }).collect();
                let cdf = x.iter().map(|&v| self.cdf_at(v)).collect();
                Self {
                    x,
                    pdf,
                    cdf,
                    ..self.clone()
                }
            }
            CurveKind::Series => {
                let c = SeriesCoefficients::new(&self.g);
                let pdf = x
                    .iter()
                    .map(|&v| (c.standard_pdf((v - self.mean) / self.std) / self.std).max(0.0))
                    .collect();
                let mut running = 0.0f64;
                let cdf = x
                    .iter()
                    .map(|&v| {
                        running = running.max(self.cdf_at(v));
                        running
                    })
                    .collect();
                Self {
                    x,
                    pdf,
                    cdf,
                    ..self.clone()
                }
            }
        }
    }
}
