use serde::{Deserialize, Serialize};

use super::StochasticsError;

pub const DEFAULT_ORDER: usize = 8;

/// Cumulants γ₁..γ_K of a scalar random quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantSet {
    gammas: Vec<f64>,
}

impl CumulantSet {
    pub fn new(gammas: Vec<f64>) -> Result<Self, StochasticsError> {
        if gammas.len() < 2 {
            return Err(StochasticsError::InvalidArgument(format!(
                "need at least two cumulants, got {}",
                gammas.len()
            )));
        }
        if gammas.iter().any(|g| !g.is_finite()) {
            return Err(StochasticsError::InvalidArgument("cumulants must be finite".into()));
        }
        if gammas[1] < 0.0 {
            return Err(StochasticsError::InvalidArgument(format!(
                "second cumulant must be non-negative, got {}",
                gammas[1]
            )));
        }
        Ok(Self { gammas })
    }

    /// A constant: γ₁ = `value`, all higher cumulants zero.
    pub fn constant(value: f64, order: usize) -> Self {
        let mut gammas = vec![0.0; order.max(2)];
        gammas[0] = value;
        Self { gammas }
    }

    pub fn order(&self) -> usize {
        self.gammas.len()
    }

    /// γ_k, 1-based; zero beyond the stored order.
    pub fn gamma(&self, k: usize) -> f64 {
        assert!(k >= 1, "cumulant orders start at 1");
        self.gammas.get(k - 1).copied().unwrap_or(0.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gammas
    }

    pub fn mean(&self) -> f64 {
        self.gammas[0]
    }

    pub fn variance(&self) -> f64 {
        self.gammas[1]
    }

    pub fn std(&self) -> f64 {
        self.gammas[1].sqrt()
    }

    /// g_v = γ_v / γ₂^{v/2} for v = 3..K; `None` for a degenerate distribution.
    pub fn normalized(&self) -> Option<Vec<f64>> {
        let var = self.gammas[1];
        if !(var > 0.0) {
            return None;
        }
        Some(
            (3..=self.order())
                .map(|v| self.gammas[v - 1] / var.powf(v as f64 / 2.0))
                .collect(),
        )
    }

    /// Cumulants of `a·X + b`.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        let gammas = self
            .gammas
            .iter()
            .enumerate()
            .map(|(i, g)| if i == 0 { a * g + b } else { a.powi(i as i32 + 1) * g })
            .collect();
        Self { gammas }
    }

    /// Cumulants of the sum of two independent quantities.
    pub fn add(&self, other: &CumulantSet) -> Self {
        let k = self.order().max(other.order());
        Self {
            gammas: (1..=k).map(|i| self.gamma(i) + other.gamma(i)).collect(),
        }
    }

    /// Same distribution truncated or zero-padded to `order` cumulants.
    pub fn with_order(&self, order: usize) -> Self {
        Self {
            gammas: (1..=order.max(2)).map(|i| self.gamma(i)).collect(),
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Raw moments α₁..α_K of Beta(α, β) on [0, 1].
pub fn beta_origin_moments(alpha: f64, beta: f64, order: usize) -> Result<Vec<f64>, StochasticsError> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(StochasticsError::InvalidArgument(format!(
            "shape parameters must be positive, got ({alpha}, {beta})"
        )));
    }
    let mut out = Vec::with_capacity(order);
    let mut m = 1.0;
    for i in 0..order {
        let i = i as f64;
        m *= (alpha + i) / (alpha + beta + i);
        out.push(m);
    }
    Ok(out)
}

/// γ_n = α_n − Σ_{j=1}^{n−1} C(n−1, j−1)·γ_j·α_{n−j}
pub fn moments_to_cumulants(moments: &[f64]) -> Result<CumulantSet, StochasticsError> {
    if moments.len() < 2 {
        return Err(StochasticsError::InvalidArgument(format!(
            "need at least two moments, got {}",
            moments.len()
        )));
    }
    let mut g: Vec<f64> = Vec::with_capacity(moments.len());
    for n in 1..=moments.len() {
        let mut v = moments[n - 1];
        for j in 1..n {
            v -= binomial(n - 1, j - 1) * g[j - 1] * moments[n - j - 1];
        }
        g.push(v);
    }
    // rounding can leave a tiny negative variance for near-constant inputs
    if g[1] < 0.0 && g[1] > -1e-12 * moments[1].abs().max(1e-300) {
        g[1] = 0.0;
    }
    CumulantSet::new(g)
}

pub fn gaussian_cumulants(mean: f64, std: f64, order: usize) -> Result<CumulantSet, StochasticsError> {
    if !(std >= 0.0) {
        return Err(StochasticsError::InvalidArgument(format!("std must be non-negative, got {std}")));
    }
    let mut g = vec![0.0; order.max(2)];
    g[0] = mean;
    g[1] = std * std;
    CumulantSet::new(g)
}

/// Cumulants estimated from samples. Moments are taken about the sample
/// mean, which is then restored on γ₁.
pub fn sample_cumulants(samples: &[f64], order: usize) -> Result<CumulantSet, StochasticsError> {
    if samples.len() < 2 {
        return Err(StochasticsError::InvalidArgument(format!(
            "need at least two samples, got {}",
            samples.len()
        )));
    }
    if order < 2 {
        return Err(StochasticsError::InvalidArgument("order must be at least 2".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let mut central = vec![0.0; order];
    for &x in samples {
        let d = x - mean;
        let mut p = d;
        for m in central.iter_mut() {
            *m += p;
            p *= d;
        }
    }
    for m in central.iter_mut() {
        *m /= n;
    }
    central[0] = 0.0;
    let c = moments_to_cumulants(&central)?;
    Ok(c.affine(1.0, mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn gaussian_moments() {
        let c = moments_to_cumulants(&[0.0, 1.0, 0.0, 3.0, 0.0, 15.0]).unwrap();
        assert!(close(c.as_slice(), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0], 1e-12));
    }

    #[test]
    fn exponential_moments() {
        let c = moments_to_cumulants(&[1.0, 2.0, 6.0, 24.0, 120.0]).unwrap();
        assert!(close(c.as_slice(), &[1.0, 1.0, 2.0, 6.0, 24.0], 1e-12));
    }

    #[test]
    fn constant_moments() {
        let c = moments_to_cumulants(&[2.5, 6.25, 15.625, 39.0625]).unwrap();
        assert!(close(c.as_slice(), &[2.5, 0.0, 0.0, 0.0], 1e-12));
    }

    #[test]
    fn beta_moments() {
        let m = beta_origin_moments(1.0, 1.0, 5).unwrap();
        assert!(close(&m, &[1.0 / 2.0, 1.0 / 3.0, 1.0 / 4.0, 1.0 / 5.0, 1.0 / 6.0], 1e-15));
        let m = beta_origin_moments(0.6799, 1.7787, 1).unwrap();
        assert!((m[0] - 0.276_539_5).abs() < 1e-6);
        let m = beta_origin_moments(1e9, 1.0, 4).unwrap();
        assert!(m.iter().all(|v| (v - 1.0).abs() < 1e-8));
        assert!(beta_origin_moments(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn gaussian_and_constants() {
        let c = gaussian_cumulants(0.0, 1.0, 8).unwrap();
        assert_eq!(c.as_slice(), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let c = gaussian_cumulants(5.0, 0.0, 8).unwrap();
        assert_eq!(c.mean(), 5.0);
        assert_eq!(c.variance(), 0.0);
        let c = gaussian_cumulants(0.03, 0.006, 8).unwrap();
        assert!((c.gamma(2) - 3.6e-5).abs() < 1e-18);
        assert!(gaussian_cumulants(0.0, -1.0, 4).is_err());
    }

    #[test]
    fn sample_constant() {
        let c = sample_cumulants(&[0.7; 50], 6).unwrap();
        assert!((c.mean() - 0.7).abs() < 1e-15);
        assert!(c.as_slice()[1..].iter().all(|v| v.abs() < 1e-15));
        assert!(sample_cumulants(&[1.0], 4).is_err());
    }

    #[test]
    fn normalized_and_affine() {
        let c = CumulantSet::new(vec![0.0, 4.0, 2.0]).unwrap();
        assert_eq!(c.normalized().unwrap(), vec![0.25]);
        assert!(CumulantSet::constant(1.0, 4).normalized().is_none());
        let n = CumulantSet::new(vec![1.0, 0.04, 0.003, 0.0001]).unwrap().affine(-1.0, 0.0);
        assert_eq!(n.as_slice(), &[-1.0, 0.04, -0.003, 0.0001]);
        let s = gaussian_cumulants(1.0, 0.1, 4).unwrap().add(&gaussian_cumulants(2.0, 0.2, 4).unwrap());
        assert!((s.mean() - 3.0).abs() < 1e-15 && (s.variance() - 0.05).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn affine_homogeneity(a in -3.0f64..3.0, b in -2.0f64..2.0, xs in proptest::collection::vec(-1.0f64..1.0, 20..60)) {
            let k = 6;
            let base = sample_cumulants(&xs, k).unwrap();
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let direct = sample_cumulants(&ys, k).unwrap();
            let scaled = base.affine(a, b);
            for i in 1..=k {
                let tol = 1e-10 * (1.0 + scaled.gamma(i).abs());
                prop_assert!((direct.gamma(i) - scaled.gamma(i)).abs() < tol, "order {}", i);
            }
        }

        #[test]
        fn moments_round_trip(mu in -1.0f64..1.0, sigma in 0.0f64..1.0) {
            // N(mu, sigma²) raw moments
            let m = [mu, mu * mu + sigma * sigma, mu.powi(3) + 3.0 * mu * sigma * sigma,
                mu.powi(4) + 6.0 * mu * mu * sigma * sigma + 3.0 * sigma.powi(4)];
            let c = moments_to_cumulants(&m).unwrap();
            prop_assert!((c.gamma(1) - mu).abs() < 1e-12);
            prop_assert!((c.gamma(2) - sigma * sigma).abs() < 1e-12);
            prop_assert!(c.gamma(3).abs() < 1e-12 && c.gamma(4).abs() < 1e-12);
        }
    }
}
