use std::collections::BTreeMap;

use faer::sparse::linalg::solvers::Lu as SparseLu;
use faer::sparse::{SparseColMat, Triplet};
use faer::MatMut;
use faer::prelude::Solve;
use nalgebra::{DMatrix, Dyn, LU};

use super::SolverError;

/// LU factors of a square system, dense or sparse depending on size.
pub(crate) enum Factorization {
    Dense(LU<f64, Dyn, Dyn>),
    Sparse(Box<SparseLu<usize, f64>>),
}

/// Sums duplicate entries and drops explicit zeros.
pub(crate) fn summed(triplets: &[(usize, usize, f64)]) -> Vec<(usize, usize, f64)> {
    let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &(r, c, v) in triplets {
        *acc.entry((c, r)).or_insert(0.0) += v;
    }
    acc.into_iter()
        .filter(|(_, v)| *v != 0.0)
        .map(|((c, r), v)| (r, c, v))
        .collect()
}

pub(crate) fn dense_from(dim: usize, triplets: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    for &(r, c, v) in triplets {
        m[(r, c)] += v;
    }
    m
}

pub(crate) fn factorize(
    dim: usize,
    triplets: &[(usize, usize, f64)],
    dense_limit: usize,
) -> Result<Factorization, SolverError> {
    let entries = summed(triplets);
    let mut row_seen = vec![false; dim];
    let mut col_seen = vec![false; dim];
    for &(r, c, _) in &entries {
        row_seen[r] = true;
        col_seen[c] = true;
    }
    if let Some(r) = row_seen.iter().position(|s| !s) {
        return Err(SolverError::Structural(format!("equation row {r} has no entries")));
    }
    if let Some(c) = col_seen.iter().position(|s| !s) {
        return Err(SolverError::Structural(format!("state column {c} has no entries")));
    }

    if dim <= dense_limit {
        let lu = dense_from(dim, &entries).lu();
        let diag = lu.u().diagonal();
        let max = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if !(min > 1e-14 * max) || !max.is_finite() {
            return Err(SolverError::Singular {
                pivot_ratio: if max > 0.0 { min / max } else { 0.0 },
            });
        }
        Ok(Factorization::Dense(lu))
    } else {
        let trip: Vec<Triplet<usize, usize, f64>> =
            entries.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(dim, dim, &trip)
            .map_err(|e| SolverError::Structural(format!("{e:?}")))?;
        let lu = mat.sp_lu().map_err(|e| match e {
            faer::sparse::linalg::LuError::SymbolicSingular { index } => {
                SolverError::Structural(format!("no pivot available at step {index}"))
            }
            other => SolverError::Structural(format!("{other:?}")),
        })?;
        Ok(Factorization::Sparse(Box::new(lu)))
    }
}

impl Factorization {
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<(), SolverError> {
        match self {
            Factorization::Dense(lu) => {
                let mut v = nalgebra::DVector::from_column_slice(b);
                if !lu.solve_mut(&mut v) {
                    return Err(SolverError::Singular { pivot_ratio: 0.0 });
                }
                b.copy_from_slice(v.as_slice());
            }
            Factorization::Sparse(lu) => {
                let n = b.len();
                lu.solve_in_place(MatMut::from_column_major_slice_mut(b, n, 1));
            }
        }
        if b.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(SolverError::Singular { pivot_ratio: 0.0 })
        }
    }

    /// Solves for every column of `rhs`.
    pub fn solve_matrix(&self, rhs: &mut DMatrix<f64>) -> Result<(), SolverError> {
        let n = rhs.nrows();
        let ncols = rhs.ncols();
        match self {
            Factorization::Dense(lu) => {
                if !lu.solve_mut(rhs) {
                    return Err(SolverError::Singular { pivot_ratio: 0.0 });
                }
            }
            Factorization::Sparse(lu) => {
                lu.solve_in_place(MatMut::from_column_major_slice_mut(rhs.as_mut_slice(), n, ncols));
            }
        }
        if rhs.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(SolverError::Singular { pivot_ratio: 0.0 })
        }
    }
}
