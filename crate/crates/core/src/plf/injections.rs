use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::grid::ValidatedCase;
use crate::solver::Injections;
use crate::stochastics::{
    correlated_samples, gaussian_cumulants, sample_cumulants, substream, substream_seed, CorrelationModel,
    CumulantSet, Marginal, NatafSampler,
};
use rand::Rng;
use rand_distr::StandardNormal;

use super::PlfError;

/// Which balance equation a source feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    ActivePower,
    ReactivePower,
    DcPower,
}

/// Generation enters the injection with its sign, a load with the opposite one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generation,
    Load,
}

impl Role {
    pub fn sign(self) -> f64 {
        match self {
            Role::Generation => 1.0,
            Role::Load => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticSource {
    pub id: String,
    /// AC bus id, or DC bus id for `Quantity::DcPower`.
    pub bus: usize,
    pub quantity: Quantity,
    pub role: Role,
    pub marginal: Marginal,
}

impl StochasticSource {
    pub fn sign(&self) -> f64 {
        self.role.sign()
    }
}

/// Members are source ids in matrix order.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationGroup {
    pub members: Vec<String>,
    pub matrix: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StochasticSpec {
    pub sources: Vec<StochasticSource>,
    pub groups: Vec<CorrelationGroup>,
}

/// A source bound to its injection column.
#[derive(Debug, Clone)]
pub struct ResolvedSource {
    pub source: StochasticSource,
    pub column: usize,
    pub group: Option<usize>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone)]
pub struct ResolvedGroup {
    /// Indices into `ResolvedSpec::sources`, in matrix order.
    pub members: Vec<usize>,
    pub model: CorrelationModel,
}

impl ResolvedGroup {
    pub fn all_gaussian(&self, sources: &[ResolvedSource]) -> bool {
        self.members.iter().all(|&m| sources[m].source.marginal.is_gaussian())
    }
}

#[derive(Debug, Clone)]
pub struct ResolvedSpec {
    pub sources: Vec<ResolvedSource>,
    pub groups: Vec<ResolvedGroup>,
    pub n_columns: usize,
}

pub fn column_of(vc: &ValidatedCase, bus: usize, quantity: Quantity) -> Option<usize> {
    let n_ac = vc.n_ac();
    match quantity {
        Quantity::ActivePower => vc.ac_position(bus),
        Quantity::ReactivePower => vc.ac_position(bus).map(|p| n_ac + p),
        Quantity::DcPower => vc.dc_position(bus).map(|p| 2 * n_ac + p),
    }
}

impl StochasticSpec {
    /// Binds sources to injection columns and factorizes the correlation groups.
    pub fn resolve(&self, vc: &ValidatedCase) -> Result<ResolvedSpec, PlfError> {
        let mut by_id = HashMap::new();
        let mut sources = Vec::with_capacity(self.sources.len());
        for (i, s) in self.sources.iter().enumerate() {
            if by_id.insert(s.id.clone(), i).is_some() {
                return Err(PlfError::InvalidSpec(format!("duplicate source id '{}'", s.id)));
            }
            let column = column_of(vc, s.bus, s.quantity).ok_or_else(|| {
                PlfError::InvalidSpec(format!("source '{}' refers to unknown bus {}", s.id, s.bus))
            })?;
            let (mean, std) = s.marginal.mean_std();
            if !(mean.is_finite() && std.is_finite() && std >= 0.0) {
                return Err(PlfError::InvalidSpec(format!("source '{}' has no finite mean and std", s.id)));
            }
            sources.push(ResolvedSource {
                source: s.clone(),
                column,
                group: None,
                mean,
                std,
            });
        }
        let mut groups = Vec::with_capacity(self.groups.len());
        for (g, grp) in self.groups.iter().enumerate() {
            let mut members = Vec::with_capacity(grp.members.len());
            for id in &grp.members {
                let &i = by_id
                    .get(id)
                    .ok_or_else(|| PlfError::InvalidSpec(format!("correlation group {g} names unknown source '{id}'")))?;
                if let Some(other) = sources[i].group {
                    return Err(PlfError::InvalidSpec(format!(
                        "source '{id}' belongs to correlation groups {other} and {g}"
                    )));
                }
                if sources[i].std == 0.0 {
                    return Err(PlfError::InvalidSpec(format!(
                        "source '{id}' has zero variance and cannot be correlated"
                    )));
                }
                sources[i].group = Some(g);
                members.push(i);
            }
            let model = CorrelationModel::new(members.clone(), grp.matrix.clone()).map_err(PlfError::Correlation)?;
            groups.push(ResolvedGroup { members, model });
        }
        Ok(ResolvedSpec {
            sources,
            groups,
            n_columns: 2 * vc.n_ac() + vc.n_dc(),
        })
    }
}

impl ResolvedSpec {
    /// Scheduled injections plus the signed mean of every source.
    pub fn expected_injections(&self, vc: &ValidatedCase) -> Injections {
        let mut inj = Injections::scheduled(vc);
        for s in &self.sources {
            inj.add_at(s.column, s.source.sign() * s.mean);
        }
        inj
    }

    /// Groups whose correlation matrix is not the identity.
    pub fn correlated_groups(&self) -> impl Iterator<Item = (usize, &ResolvedGroup)> {
        self.groups.iter().enumerate().filter(|(_, g)| !g.model.is_identity())
    }

    pub fn is_independent(&self, i: usize) -> bool {
        match self.sources[i].group {
            None => true,
            Some(g) => self.groups[g].model.is_identity(),
        }
    }
}

/// Cumulants of one source's output before the sign is applied. Closed
/// forms for normal and Beta marginals, sampling otherwise.
pub fn source_cumulants(m: &Marginal, order: usize, n_samples: usize, seed: u64) -> Result<CumulantSet, PlfError> {
    if let Some(c) = m.analytic_cumulants(order) {
        return Ok(c);
    }
    let mut rng = substream(seed, 0);
    let samples: Vec<f64> = (0..n_samples).map(|_| draw_independent(m, &mut rng)).collect();
    sample_cumulants(&samples, order).map_err(PlfError::Cumulants)
}

/// Per-column cumulants of the independent sources: each source is signed by
/// homogeneity, then sources at the same column add order-wise.
pub fn injection_cumulants(
    spec: &ResolvedSpec,
    order: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<(usize, CumulantSet)>, PlfError> {
    let mut by_column: Vec<Option<CumulantSet>> = vec![None; spec.n_columns];
    for (i, s) in spec.sources.iter().enumerate() {
        if !spec.is_independent(i) {
            continue;
        }
        let c = source_cumulants(&s.source.marginal, order, n_samples, substream_seed(seed, i as u64))?
            .affine(s.source.sign(), 0.0);
        let slot = &mut by_column[s.column];
        *slot = Some(match slot.take() {
            Some(prev) => prev.add(&c),
            None => c,
        });
    }
    Ok(by_column
        .into_iter()
        .enumerate()
        .filter_map(|(col, c)| c.map(|c| (col, c)))
        .collect())
}

/// Cumulants of the decorrelated factors `Y = B·(W − μ)/σ` of a group.
/// γ₁ = 0 and γ₂ = 1 hold by construction; higher orders are zero for a
/// normal group and estimated from Nataf samples otherwise. The flag reports
/// whether the Nataf correlation matrix needed repair.
pub fn group_factor_cumulants(
    spec: &ResolvedSpec,
    group: &ResolvedGroup,
    order: usize,
    n_samples: usize,
    seed: u64,
) -> Result<(Vec<CumulantSet>, bool), PlfError> {
    let k = group.members.len();
    if group.all_gaussian(&spec.sources) {
        let c = gaussian_cumulants(0.0, 1.0, order).map_err(PlfError::Cumulants)?;
        return Ok((vec![c; k], false));
    }
    let marginals: Vec<Marginal> = group.members.iter().map(|&m| spec.sources[m].source.marginal.clone()).collect();
    let sampler = NatafSampler::new(group.model.c.clone(), marginals).map_err(PlfError::Correlation)?;
    let w = correlated_samples(&sampler, n_samples, seed);
    let standardized: Vec<Vec<f64>> = group
        .members
        .iter()
        .zip(&w)
        .map(|(&m, col)| {
            let s = &spec.sources[m];
            col.iter().map(|v| (v - s.mean) / s.std).collect()
        })
        .collect();
    let b = &group.model.b;
    let factors = (0..k)
        .map(|r| {
            let y: Vec<f64> = (0..n_samples)
                .map(|t| (0..=r).map(|m| b[(r, m)] * standardized[m][t]).sum())
                .collect();
            let mut g = sample_cumulants(&y, order).map_err(PlfError::Cumulants)?.as_slice().to_vec();
            g[0] = 0.0;
            g[1] = 1.0;
            CumulantSet::new(g).map_err(PlfError::Cumulants)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((factors, sampler.repaired))
}

/// Inverse-CDF draw used for independent sources in sampling paths.
pub fn draw_independent<R: Rng + ?Sized>(m: &Marginal, rng: &mut R) -> f64 {
    m.from_standard_normal(rng.sample(StandardNormal))
}
