//! Accuracy measures for comparing reconstructed distributions against the
//! Monte Carlo reference.

use serde::Serialize;
use thiserror::Error;

use crate::gram_charlier::DistributionCurve;
use crate::solver::VariableClass;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("reference value is zero; relative error undefined")]
    UndefinedBaseline,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("threshold {threshold} outside the curve grid [{lo}, {hi}]")]
    ExtrapolationRefused { threshold: f64, lo: f64, hi: f64 },
}

/// |cm − mcs| / |mcs| in percent.
pub fn relative_error(cm: f64, mcs: f64) -> Result<f64, MetricsError> {
    if mcs == 0.0 {
        return Err(MetricsError::UndefinedBaseline);
    }
    Ok((cm - mcs).abs() / mcs.abs() * 100.0)
}

fn paired_len(a: &[f64], b: &[f64]) -> Result<usize, MetricsError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(MetricsError::InvalidArgument(format!(
            "curves must share a non-empty grid ({} vs {} points)",
            a.len(),
            b.len()
        )));
    }
    Ok(a.len())
}

/// Average root-mean-square deviation of two distribution functions, percent:
/// √(Σ(a_i − b_i)²) / N × 100.
pub fn arms(cdf_a: &[f64], cdf_b: &[f64]) -> Result<f64, MetricsError> {
    let n = paired_len(cdf_a, cdf_b)?;
    let ss: f64 = cdf_a.iter().zip(cdf_b).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(ss.sqrt() / n as f64 * 100.0)
}

/// Theil inequality coefficient of two densities, in [0, 1].
pub fn tic(pdf_a: &[f64], pdf_b: &[f64]) -> Result<f64, MetricsError> {
    let l = paired_len(pdf_a, pdf_b)? as f64;
    let rms = |v: &mut dyn Iterator<Item = f64>| (v.map(|x| x * x).sum::<f64>() / l).sqrt();
    let num = rms(&mut pdf_a.iter().zip(pdf_b).map(|(a, b)| a - b));
    let den = rms(&mut pdf_a.iter().copied()) + rms(&mut pdf_b.iter().copied());
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

/// Linear interpolation in a sorted table; `None` outside it.
pub fn interpolate(x: &[f64], y: &[f64], t: f64) -> Option<f64> {
    let n = x.len();
    if n == 0 || t < x[0] || t > x[n - 1] {
        return None;
    }
    let i = x.partition_point(|v| *v <= t);
    if i == 0 {
        return Some(y[0]);
    }
    if i == n {
        // t equals the last grid point (possibly repeated)
        return Some(y[n - 1]);
    }
    let (x0, x1) = (x[i - 1], x[i]);
    if x1 == x0 {
        return Some(y[i]);
    }
    Some(y[i - 1] + (t - x0) / (x1 - x0) * (y[i] - y[i - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandThresholds {
    pub ov: f64,
    pub hi: f64,
    pub lv: f64,
}

impl Default for BandThresholds {
    fn default() -> Self {
        Self {
            ov: 1.05,
            hi: 1.1,
            lv: 0.9,
        }
    }
}

impl BandThresholds {
    pub fn as_array(&self) -> [f64; 3] {
        [self.ov, self.hi, self.lv]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandProbabilities {
    /// P(x > ov)
    pub ovp: f64,
    /// P(x > hi)
    pub ovp_hi: f64,
    /// P(x < lv)
    pub lvp: f64,
}

/// Band probabilities read off a tabulated distribution function.
pub fn band_probabilities(x: &[f64], cdf: &[f64], t: BandThresholds) -> Result<BandProbabilities, MetricsError> {
    paired_len(x, cdf)?;
    let at = |th: f64| {
        interpolate(x, cdf, th).ok_or(MetricsError::ExtrapolationRefused {
            threshold: th,
            lo: x[0],
            hi: x[x.len() - 1],
        })
    };
    Ok(BandProbabilities {
        ovp: 1.0 - at(t.ov)?,
        ovp_hi: 1.0 - at(t.hi)?,
        lvp: at(t.lv)?,
    })
}

/// Band probabilities of a reconstructed curve, extending its grid to the
/// thresholds with exact series values where needed.
pub fn curve_band_probabilities(curve: &DistributionCurve, t: BandThresholds) -> BandProbabilities {
    let ext = curve.with_points(&t.as_array());
    band_probabilities(&ext.x, &ext.cdf, t).expect("grid spans thresholds after extension")
}

/// A distribution that can be evaluated anywhere on the real line.
pub trait CurveSource {
    fn grid(&self) -> &[f64];
    fn pdf_at(&self, x: f64) -> f64;
    fn cdf_at(&self, x: f64) -> f64;
}

impl CurveSource for DistributionCurve {
    fn grid(&self) -> &[f64] {
        &self.x
    }

    fn pdf_at(&self, x: f64) -> f64 {
        interpolate(&self.x, &self.pdf, x).unwrap_or(0.0)
    }

    fn cdf_at(&self, x: f64) -> f64 {
        match interpolate(&self.x, &self.cdf, x) {
            Some(v) => v,
            None if x < self.x[0] => 0.0,
            None => 1.0,
        }
    }
}

/// Sorted union of two grids.
pub fn union_grid(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = a.iter().chain(b).copied().collect();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// ARMS and TIC of two curves on the union of their grids.
pub fn curve_distances(cm: &dyn CurveSource, mcs: &dyn CurveSource) -> Result<(f64, f64), MetricsError> {
    let g = union_grid(cm.grid(), mcs.grid());
    let c1: Vec<f64> = g.iter().map(|&x| cm.cdf_at(x)).collect();
    let c2: Vec<f64> = g.iter().map(|&x| mcs.cdf_at(x)).collect();
    let p1: Vec<f64> = g.iter().map(|&x| cm.pdf_at(x)).collect();
    let p2: Vec<f64> = g.iter().map(|&x| mcs.pdf_at(x)).collect();
    Ok((arms(&c1, &c2)?, tic(&p1, &p2)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableMetrics {
    pub variable: String,
    pub class: VariableClass,
    /// `None` when the reference is zero.
    pub eps_mu: Option<f64>,
    pub eps_sigma: Option<f64>,
    pub arms: f64,
    pub tic: f64,
}

impl VariableMetrics {
    pub fn new(
        variable: &str,
        class: VariableClass,
        (mu_cm, sigma_cm): (f64, f64),
        (mu_mcs, sigma_mcs): (f64, f64),
        cm: &dyn CurveSource,
        mcs: &dyn CurveSource,
    ) -> Result<Self, MetricsError> {
        let (arms, tic) = curve_distances(cm, mcs)?;
        Ok(Self {
            variable: variable.to_string(),
            class,
            eps_mu: relative_error(mu_cm, mu_mcs).ok(),
            eps_sigma: relative_error(sigma_cm, sigma_mcs).ok(),
            arms,
            tic,
        })
    }
}

/// Per-class summary; each statistic skips variables where it is undefined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: VariableClass,
    pub count: usize,
    pub eps_mu_mean: Option<f64>,
    pub eps_mu_max: Option<f64>,
    pub eps_sigma_mean: Option<f64>,
    pub eps_sigma_max: Option<f64>,
    pub arms_mean: Option<f64>,
    pub arms_max: Option<f64>,
    /// Largest TIC in the class.
    pub tic: Option<f64>,
}

fn mean_max(v: impl Iterator<Item = Option<f64>>) -> (Option<f64>, Option<f64>) {
    let vals: Vec<f64> = v.flatten().collect();
    if vals.is_empty() {
        return (None, None);
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (Some(mean), Some(max))
}

pub fn class_metrics(vars: &[VariableMetrics]) -> Vec<ClassMetrics> {
    VariableClass::ALL
        .iter()
        .filter_map(|&class| {
            let members: Vec<&VariableMetrics> = vars.iter().filter(|v| v.class == class).collect();
            if members.is_empty() {
                return None;
            }
            let (eps_mu_mean, eps_mu_max) = mean_max(members.iter().map(|v| v.eps_mu));
            let (eps_sigma_mean, eps_sigma_max) = mean_max(members.iter().map(|v| v.eps_sigma));
            let (arms_mean, arms_max) = mean_max(members.iter().map(|v| Some(v.arms)));
            let (_, tic) = mean_max(members.iter().map(|v| Some(v.tic)));
            Some(ClassMetrics {
                class,
                count: members.len(),
                eps_mu_mean,
                eps_mu_max,
                eps_sigma_mean,
                eps_sigma_max,
                arms_mean,
                arms_max,
                tic,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub variables: Vec<VariableMetrics>,
    pub classes: Vec<ClassMetrics>,
    /// Cumulant-method wall time over Monte Carlo wall time.
    pub timing_ratio: f64,
}

impl MetricsReport {
    pub fn new(variables: Vec<VariableMetrics>, cm_seconds: f64, mcs_seconds: f64) -> Self {
        let classes = class_metrics(&variables);
        Self {
            variables,
            classes,
            timing_ratio: if mcs_seconds > 0.0 { cm_seconds / mcs_seconds } else { f64::NAN },
        }
    }
}
