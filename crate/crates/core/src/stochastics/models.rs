use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use libm::erfc;
use statrs::function::erf::erfc_inv;

use super::cumulants::{beta_origin_moments, gaussian_cumulants, moments_to_cumulants, CumulantSet};
use super::StochasticsError;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

pub fn normal_quantile(p: f64) -> f64 {
    let mut x = -SQRT_2 * erfc_inv(2.0 * p);
    if !x.is_finite() {
        return x;
    }
    // erfc_inv is good to ~1e-10; polish against erfc on the tail side
    for _ in 0..2 {
        let f = if x > 0.0 {
            (1.0 - p) - 0.5 * erfc(x / SQRT_2)
        } else {
            normal_cdf(x) - p
        };
        let d = normal_pdf(x);
        if d == 0.0 {
            break;
        }
        x -= f / d;
    }
    x
}

/// Shape parameters of a Beta distribution on [0, 1] with the given mean and std.
pub fn beta_params_from_stats(mean: f64, std: f64) -> Result<(f64, f64), StochasticsError> {
    if !(mean > 0.0 && mean < 1.0) {
        return Err(StochasticsError::InvalidArgument(format!("mean must lie in (0, 1), got {mean}")));
    }
    let var = std * std;
    let limit = mean * (1.0 - mean);
    if !(var > 0.0) || var >= limit {
        return Err(StochasticsError::InfeasibleMoments { variance: var, limit });
    }
    let k = limit / var - 1.0;
    let (a, b) = (mean * k, (1.0 - mean) * k);
    if !(a > 0.0 && b > 0.0) {
        return Err(StochasticsError::InfeasibleMoments { variance: var, limit });
    }
    Ok((a, b))
}

/// Rated PV output `r_max·Σ A_m·η_m`.
pub fn pv_max_power(r_max: f64, areas: &[f64], efficiencies: &[f64]) -> Result<f64, StochasticsError> {
    if areas.len() != efficiencies.len() {
        return Err(StochasticsError::InvalidArgument(format!(
            "{} module areas but {} efficiencies",
            areas.len(),
            efficiencies.len()
        )));
    }
    if areas.is_empty() {
        log::warn!("PV model has no modules; rated output is zero");
        return Ok(0.0);
    }
    if !(r_max > 0.0) || areas.iter().any(|a| !(*a > 0.0)) {
        return Err(StochasticsError::InvalidArgument("irradiance and areas must be positive".into()));
    }
    if efficiencies.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
        return Err(StochasticsError::InvalidArgument("efficiencies must lie in (0, 1]".into()));
    }
    Ok(r_max * areas.iter().zip(efficiencies).map(|(a, e)| a * e).sum::<f64>())
}

/// Regularized incomplete beta inverse by safeguarded Newton iteration.
pub fn beta_inverse_cdf(p: f64, a: f64, b: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    if p > 0.5 {
        // I_x(a, b) = 1 − I_{1−x}(b, a)
        return 1.0 - lower_beta_inverse(1.0 - p, b, a);
    }
    lower_beta_inverse(p, a, b)
}

fn lower_beta_inverse(p: f64, a: f64, b: f64) -> f64 {
    let lnb = ln_beta(a, b);
    // tail approximations I_x ≈ x^a/(a·B) near 0 and 1 − (1−x)^b/(b·B) near 1
    let lo_guess = ((p.ln() + a.ln() + lnb) / a).exp();
    let hi_guess = 1.0 - (((1.0 - p).ln() + b.ln() + lnb) / b).exp();
    let mean = a / (a + b);
    let mut x = if lo_guess < mean.min(0.5) {
        lo_guess
    } else if hi_guess > mean.max(0.5) {
        hi_guess
    } else {
        mean
    };
    if !(x > 0.0 && x < 1.0) {
        x = mean;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let f = beta_reg(a, b, x) - p;
        if f == 0.0 {
            return x;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let ln_pdf = (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - lnb;
        let step = f / ln_pdf.exp();
        let mut next = x - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.max(1e-300) || hi - lo <= f64::EPSILON * hi {
            return next;
        }
        x = next;
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPvModel {
    pub alpha: f64,
    pub beta: f64,
    /// Rated output R_M in p.u.
    pub rated_power: f64,
}

impl BetaPvModel {
    pub fn new(alpha: f64, beta: f64, rated_power: f64) -> Result<Self, StochasticsError> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(StochasticsError::InvalidArgument(format!(
                "shape parameters must be positive, got ({alpha}, {beta})"
            )));
        }
        if !(rated_power > 0.0 && rated_power.is_finite()) {
            return Err(StochasticsError::InvalidArgument(format!(
                "rated power must be positive, got {rated_power}"
            )));
        }
        Ok(Self {
            alpha,
            beta,
            rated_power,
        })
    }

    /// Rated output from module data, see [`pv_max_power`].
    pub fn from_modules(
        alpha: f64,
        beta: f64,
        r_max: f64,
        areas: &[f64],
        efficiencies: &[f64],
    ) -> Result<Self, StochasticsError> {
        Self::new(alpha, beta, pv_max_power(r_max, areas, efficiencies)?)
    }

    /// Cumulants of the active output `R_M·x`, x ~ Beta(α, β).
    pub fn cumulants(&self, order: usize) -> Result<CumulantSet, StochasticsError> {
        let normalized = moments_to_cumulants(&beta_origin_moments(self.alpha, self.beta, order)?)?;
        Ok(normalized.affine(self.rated_power, 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianLoadModel {
    pub mu_p: f64,
    pub sigma_p: f64,
    pub mu_q: f64,
    pub sigma_q: f64,
}

impl GaussianLoadModel {
    pub fn new(mu_p: f64, sigma_p: f64, mu_q: f64, sigma_q: f64) -> Result<Self, StochasticsError> {
        if !(sigma_p >= 0.0 && sigma_q >= 0.0) {
            return Err(StochasticsError::InvalidArgument("load std must be non-negative".into()));
        }
        Ok(Self {
            mu_p,
            sigma_p,
            mu_q,
            sigma_q,
        })
    }
}

/// Distribution known only through data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EmpiricalModel {
    /// Sorted sample values.
    Samples(Vec<f64>),
    /// Piecewise-linear CDF through `(x[i], p[i])`.
    CdfTable { x: Vec<f64>, p: Vec<f64> },
}

impl EmpiricalModel {
    pub fn from_samples(mut samples: Vec<f64>) -> Result<Self, StochasticsError> {
        if samples.len() < 2 {
            return Err(StochasticsError::InvalidArgument(format!(
                "need at least two samples, got {}",
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(StochasticsError::InvalidArgument("samples must be finite".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self::Samples(samples))
    }

    pub fn from_cdf_table(x: Vec<f64>, p: Vec<f64>) -> Result<Self, StochasticsError> {
        if x.len() != p.len() || x.len() < 2 {
            return Err(StochasticsError::InvalidArgument(
                "CDF table needs at least two (x, p) pairs of equal length".into(),
            ));
        }
        if p.windows(2).any(|w| !(w[1] > w[0])) || x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(StochasticsError::InvalidArgument(
                "CDF table must be strictly increasing in x and probability".into(),
            ));
        }
        if p[0] < 0.0 || p[p.len() - 1] > 1.0 {
            return Err(StochasticsError::InvalidArgument("CDF probabilities must lie in [0, 1]".into()));
        }
        Ok(Self::CdfTable { x, p })
    }

    /// Mean and standard deviation; CDF tables are uniform within each
    /// segment, with any probability outside the table at its end points.
    pub fn mean_std(&self) -> (f64, f64) {
        let (m1, m2) = match self {
            Self::Samples(s) => {
                let n = s.len() as f64;
                let m = s.iter().sum::<f64>() / n;
                let v = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
                return (m, v.sqrt());
            }
            Self::CdfTable { x, p } => {
                let n = x.len();
                let mut m1 = p[0] * x[0] + (1.0 - p[n - 1]) * x[n - 1];
                let mut m2 = p[0] * x[0] * x[0] + (1.0 - p[n - 1]) * x[n - 1] * x[n - 1];
                for i in 0..n - 1 {
                    let (a, b, w) = (x[i], x[i + 1], p[i + 1] - p[i]);
                    m1 += w * 0.5 * (a + b);
                    m2 += w * (a * a + a * b + b * b) / 3.0;
                }
                (m1, m2)
            }
        };
        (m1, (m2 - m1 * m1).max(0.0).sqrt())
    }

    pub fn cdf(&self, v: f64) -> f64 {
        match self {
            Self::Samples(s) => s.partition_point(|x| *x <= v) as f64 / s.len() as f64,
            Self::CdfTable { x, p } => interp(x, p, v),
        }
    }

    pub fn inverse_cdf(&self, q: f64) -> f64 {
        match self {
            Self::Samples(s) => {
                let h = (s.len() - 1) as f64 * q.clamp(0.0, 1.0);
                let i = (h.floor() as usize).min(s.len() - 2);
                s[i] + (h - i as f64) * (s[i + 1] - s[i])
            }
            Self::CdfTable { x, p } => interp(p, x, q),
        }
    }
}

/// Linear interpolation in a strictly increasing table, clamped at the ends.
fn interp(xs: &[f64], ys: &[f64], v: f64) -> f64 {
    if v <= xs[0] {
        return ys[0];
    }
    let n = xs.len();
    if v >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|x| *x <= v) - 1;
    let t = (v - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

/// Marginal distribution of one stochastic source quantity.
#[derive(Debug, Clone, PartialEq)]
pub enum Marginal {
    Normal { mean: f64, std: f64 },
    /// `scale·x`, x ~ Beta(α, β)
    Beta { alpha: f64, beta: f64, scale: f64 },
    Empirical(EmpiricalModel),
}

impl Marginal {
    pub fn is_gaussian(&self) -> bool {
        matches!(self, Marginal::Normal { .. })
    }

    pub fn cdf(&self, v: f64) -> f64 {
        match self {
            Marginal::Normal { mean, std } => {
                if *std > 0.0 {
                    normal_cdf((v - mean) / std)
                } else if v >= *mean {
                    1.0
                } else {
                    0.0
                }
            }
            Marginal::Beta { alpha, beta, scale } => beta_reg(*alpha, *beta, (v / scale).clamp(0.0, 1.0)),
            Marginal::Empirical(e) => e.cdf(v),
        }
    }

    pub fn inverse_cdf(&self, p: f64) -> f64 {
        match self {
            Marginal::Normal { mean, std } => mean + std * normal_quantile(p),
            Marginal::Beta { alpha, beta, scale } => scale * beta_inverse_cdf(p, *alpha, *beta),
            Marginal::Empirical(e) => e.inverse_cdf(p),
        }
    }

    /// Mean and standard deviation of the distribution.
    pub fn mean_std(&self) -> (f64, f64) {
        match self {
            Marginal::Normal { mean, std } => (*mean, *std),
            Marginal::Beta { alpha, beta, scale } => {
                let s = alpha + beta;
                let m = alpha / s;
                let v = alpha * beta / (s * s * (s + 1.0));
                (scale * m, scale.abs() * v.sqrt())
            }
            Marginal::Empirical(e) => e.mean_std(),
        }
    }

    /// `F⁻¹(Φ(z))`, exact for normal marginals.
    pub fn from_standard_normal(&self, z: f64) -> f64 {
        match self {
            Marginal::Normal { mean, std } => mean + std * z,
            _ => self.inverse_cdf(normal_cdf(z)),
        }
    }

    /// Closed-form cumulants where available.
    pub fn analytic_cumulants(&self, order: usize) -> Option<CumulantSet> {
        match self {
            Marginal::Normal { mean, std } => gaussian_cumulants(*mean, *std, order).ok(),
            Marginal::Beta { alpha, beta, scale } => BetaPvModel::new(*alpha, *beta, *scale)
                .and_then(|m| m.cumulants(order))
                .ok(),
            Marginal::Empirical(_) => None,
        }
    }
}
