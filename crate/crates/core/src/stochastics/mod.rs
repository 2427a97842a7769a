//! Probability models of stochastic injections and the cumulant machinery
//! used to propagate them.

mod correlation;
mod cumulants;
mod models;
mod nataf;
mod rng;

pub use correlation::{
    compose, correlation_matrix_from_samples, decorrelate, decorrelation_transform, CorrelationModel,
};
pub use cumulants::{
    beta_origin_moments, gaussian_cumulants, moments_to_cumulants, sample_cumulants, CumulantSet,
    DEFAULT_ORDER,
};
pub use models::{
    beta_inverse_cdf, beta_params_from_stats, normal_cdf, normal_pdf, normal_quantile, pv_max_power,
    BetaPvModel, EmpiricalModel, GaussianLoadModel, Marginal,
};
pub use nataf::{correlated_samples, gauss_hermite, nataf_adjust, nataf_correlation, NatafAdjustment, NatafSampler};
pub use rng::{substream, substream_seed};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StochasticsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("infeasible moments: variance {variance} must be below μ(1−μ) = {limit}")]
    InfeasibleMoments { variance: f64, limit: f64 },
    #[error("correlation matrix is not positive semi-definite: leading minor {minor} has pivot {pivot:.3e}")]
    NotPositiveSemiDefinite { minor: usize, pivot: f64 },
    #[error("correlation matrix is singular at leading minor {minor}; variables are linearly dependent")]
    RankDeficient { minor: usize },
    #[error("variable {0} has zero variance")]
    DegenerateVariable(usize),
    #[error("correlation {rho} between variables {i} and {j} cannot be reached with these marginals (range {lo:.4} to {hi:.4})")]
    InfeasibleCorrelation {
        i: usize,
        j: usize,
        rho: f64,
        lo: f64,
        hi: f64,
    },
}
