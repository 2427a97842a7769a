use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::correlation::decorrelation_transform;
use super::models::Marginal;
use super::rng::substream;
use super::StochasticsError;

const QUADRATURE_NODES: usize = 64;

/// Gauss-Hermite rule for the standard normal weight (nodes, weights summing to 1).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let s = (k as f64).sqrt();
        jac[(k - 1, k)] = s;
        jac[(k, k - 1)] = s;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

struct Quadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Quadrature {
    fn new() -> Self {
        let (nodes, weights) = gauss_hermite(QUADRATURE_NODES);
        Self { nodes, weights }
    }

    fn moments(&self, m: &Marginal) -> (Vec<f64>, f64, f64) {
        let vals: Vec<f64> = self.nodes.iter().map(|&u| m.from_standard_normal(u)).collect();
        let mean: f64 = vals.iter().zip(&self.weights).map(|(v, w)| v * w).sum();
        let var: f64 = vals.iter().zip(&self.weights).map(|(v, w)| w * (v - mean).powi(2)).sum();
        (vals, mean, var.sqrt())
    }

    /// Correlation of `F_i⁻¹(Φ(z_i))`, `F_j⁻¹(Φ(z_j))` for standard normals with correlation `rho`.
    fn correlation(&self, rho: f64, mi: &Marginal, mj: &Marginal) -> f64 {
        let (gi, mu_i, sd_i) = self.moments(mi);
        let (_, mu_j, sd_j) = self.moments(mj);
        let s = (1.0 - rho * rho).max(0.0).sqrt();
        let mut e = 0.0;
        for (a, &u) in self.nodes.iter().enumerate() {
            let mut inner = 0.0;
            for (b, &v) in self.nodes.iter().enumerate() {
                inner += self.weights[b] * (mj.from_standard_normal(rho * u + s * v) - mu_j);
            }
            e += self.weights[a] * (gi[a] - mu_i) * inner;
        }
        e / (sd_i * sd_j)
    }
}

/// Correlation of the transformed pair for a Gaussian-copula correlation `rho_q`.
pub fn nataf_correlation(rho_q: f64, mi: &Marginal, mj: &Marginal) -> f64 {
    if mi.is_gaussian() && mj.is_gaussian() {
        return rho_q;
    }
    Quadrature::new().correlation(rho_q, mi, mj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NatafAdjustment {
    pub c_q: DMatrix<f64>,
    /// Set when the adjusted matrix had to be projected back onto the PSD cone.
    pub repaired: bool,
}

fn adjust_pair(
    q: &Quadrature,
    rho_w: f64,
    mi: &Marginal,
    mj: &Marginal,
    ij: (usize, usize),
) -> Result<f64, StochasticsError> {
    if rho_w == 0.0 || (mi.is_gaussian() && mj.is_gaussian()) {
        return Ok(rho_w);
    }
    let h = |r: f64| q.correlation(r, mi, mj) - rho_w;
    let (mut a, mut b) = (-1.0, 1.0);
    let (mut fa, mut fb) = (h(a), h(b));
    if fa > 0.0 || fb < 0.0 {
        return Err(StochasticsError::InfeasibleCorrelation {
            i: ij.0,
            j: ij.1,
            rho: rho_w,
            lo: fa + rho_w,
            hi: fb + rho_w,
        });
    }
    // Illinois false position
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = h(c);
        if fc.abs() < 1e-13 || (b - a).abs() < 1e-13 {
            return Ok(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == 1 {
                fa /= 2.0;
            }
            side = 1;
        } else {
            a = c;
            fa = fc;
            if side == -1 {
                fb /= 2.0;
            }
            side = -1;
        }
    }
    Ok(0.5 * (a + b))
}

fn nearest_psd(c: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(c.clone());
    let vals = eig.eigenvalues.map(|v| v.max(1e-8));
    let mut m = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    let d = m.diagonal().map(|v| 1.0 / v.sqrt());
    m = DMatrix::from_diagonal(&d) * m * DMatrix::from_diagonal(&d);
    let m = (&m + m.transpose()) * 0.5;
    let mut m = m;
    m.fill_diagonal(1.0);
    m
}

/// Gaussian-copula correlation matrix reproducing `c_w` under the given marginals.
pub fn nataf_adjust(c_w: &DMatrix<f64>, marginals: &[Marginal]) -> Result<NatafAdjustment, StochasticsError> {
    let n = c_w.nrows();
    if marginals.len() != n || !c_w.is_square() {
        return Err(StochasticsError::InvalidArgument(format!(
            "{} marginals for a {}×{} correlation matrix",
            marginals.len(),
            c_w.nrows(),
            c_w.ncols()
        )));
    }
    let q = Quadrature::new();
    let mut c_q = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let r = adjust_pair(&q, c_w[(i, j)], &marginals[i], &marginals[j], (i, j))?;
            c_q[(i, j)] = r;
            c_q[(j, i)] = r;
        }
    }
    match decorrelation_transform(&c_q) {
        Ok(_) => Ok(NatafAdjustment { c_q, repaired: false }),
        Err(StochasticsError::NotPositiveSemiDefinite { .. }) | Err(StochasticsError::RankDeficient { .. }) => {
            log::warn!("adjusted correlation matrix is not positive definite; projecting to the nearest valid matrix");
            Ok(NatafAdjustment {
                c_q: nearest_psd(&c_q),
                repaired: true,
            })
        }
        Err(e) => Err(e),
    }
}

/// Correlated sampler: `W = F⁻¹(Φ(G_Q·E))`.
#[derive(Debug, Clone)]
pub struct NatafSampler {
    pub c_w: DMatrix<f64>,
    pub c_q: DMatrix<f64>,
    pub g_q: DMatrix<f64>,
    pub marginals: Vec<Marginal>,
    pub repaired: bool,
}

impl NatafSampler {
    pub fn new(c_w: DMatrix<f64>, marginals: Vec<Marginal>) -> Result<Self, StochasticsError> {
        let adj = nataf_adjust(&c_w, &marginals)?;
        let (g_q, _) = decorrelation_transform(&adj.c_q)?;
        Ok(Self {
            c_w,
            c_q: adj.c_q,
            g_q,
            marginals,
            repaired: adj.repaired,
        })
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    /// One joint draw, consuming `dim()` standard normals from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.dim();
        let e: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        (0..n)
            .map(|i| {
                let z: f64 = (0..=i).map(|k| self.g_q[(i, k)] * e[k]).sum();
                self.marginals[i].from_standard_normal(z)
            })
            .collect()
    }
}

/// `n` joint draws; sample `s` uses its own sub-stream of `seed`, so the
/// result does not depend on thread count. Returned variable-major.
pub fn correlated_samples(sampler: &NatafSampler, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|s| sampler.sample(&mut substream(seed, s as u64)))
        .collect();
    let mut out = vec![Vec::with_capacity(n); sampler.dim()];
    for r in rows {
        for (i, v) in r.into_iter().enumerate() {
            out[i].push(v);
        }
    }
    out
}
