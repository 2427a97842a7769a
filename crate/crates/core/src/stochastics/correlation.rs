use nalgebra::DMatrix;

use super::StochasticsError;

/// Correlation structure of a group of variables: `C = G·Gᵀ`, `B = G⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationModel {
    /// Identifiers of the member variables, in matrix order.
    pub members: Vec<usize>,
    pub c: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl CorrelationModel {
    pub fn new(members: Vec<usize>, c: DMatrix<f64>) -> Result<Self, StochasticsError> {
        if members.len() != c.nrows() {
            return Err(StochasticsError::InvalidArgument(format!(
                "{} members for a {}×{} matrix",
                members.len(),
                c.nrows(),
                c.ncols()
            )));
        }
        let (g, b) = decorrelation_transform(&c)?;
        Ok(Self { members, c, g, b })
    }

    pub fn is_identity(&self) -> bool {
        self.c == DMatrix::identity(self.c.nrows(), self.c.ncols())
    }
}

fn check_correlation_matrix(c: &DMatrix<f64>) -> Result<(), StochasticsError> {
    if !c.is_square() || c.nrows() == 0 {
        return Err(StochasticsError::InvalidArgument("correlation matrix must be square and non-empty".into()));
    }
    let n = c.nrows();
    for i in 0..n {
        if (c[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(StochasticsError::InvalidArgument(format!(
                "diagonal entry {i} is {}, expected 1",
                c[(i, i)]
            )));
        }
        for j in 0..i {
            if (c[(i, j)] - c[(j, i)]).abs() > 1e-12 || !(c[(i, j)].abs() <= 1.0 + 1e-12) {
                return Err(StochasticsError::InvalidArgument(format!(
                    "entry ({i}, {j}) is not a symmetric correlation"
                )));
            }
        }
    }
    Ok(())
}

/// Lower Cholesky factor `G` of a correlation matrix and its inverse `B`.
pub fn decorrelation_transform(c: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), StochasticsError> {
    check_correlation_matrix(c)?;
    let n = c.nrows();
    let mut g = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = c[(j, j)];
        for k in 0..j {
            d -= g[(j, k)] * g[(j, k)];
        }
        if d < -1e-10 {
            return Err(StochasticsError::NotPositiveSemiDefinite { minor: j + 1, pivot: d });
        }
        if d <= 1e-12 {
            return Err(StochasticsError::RankDeficient { minor: j + 1 });
        }
        let djj = d.sqrt();
        g[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = c[(i, j)];
            for k in 0..j {
                s -= g[(i, k)] * g[(j, k)];
            }
            g[(i, j)] = s / djj;
        }
    }
    // forward substitution on the identity
    let mut b = DMatrix::<f64>::zeros(n, n);
    for col in 0..n {
        for i in col..n {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in col..i {
                s -= g[(i, k)] * b[(k, col)];
            }
            b[(i, col)] = s / g[(i, i)];
        }
    }
    Ok((g, b))
}

/// `Y = B·Z`; columns of `z` are observations.
pub fn decorrelate(b: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    b * z
}

/// `Z = G·Y`
pub fn compose(g: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    g * y
}

/// Pearson correlation matrix; `samples[i]` holds every observation of variable `i`.
pub fn correlation_matrix_from_samples(samples: &[Vec<f64>]) -> Result<DMatrix<f64>, StochasticsError> {
    let n = samples.len();
    if n == 0 {
        return Err(StochasticsError::InvalidArgument("no variables".into()));
    }
    let len = samples[0].len();
    if len < 2 || samples.iter().any(|s| s.len() != len) {
        return Err(StochasticsError::InvalidArgument(
            "every variable needs the same number of samples, at least two".into(),
        ));
    }
    let centered: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let m = s.iter().sum::<f64>() / len as f64;
            s.iter().map(|v| v - m).collect()
        })
        .collect();
    let norms: Vec<f64> = centered.iter().map(|s| s.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    for (i, nrm) in norms.iter().enumerate() {
        if !(*nrm > 0.0) {
            return Err(StochasticsError::DegenerateVariable(i));
        }
    }
    let mut c = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            let r = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            c[(i, j)] = r;
            c[(j, i)] = r;
        }
    }
    Ok(c)
}
