//! SA and ICSA: independent column permutations in the latent space,
//! back-transform, binary rediscretization.

use nalgebra::DMatrix;
use rand::Rng;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::ics::{back_transform, fit_ics, Components, IcsModel};
use crate::rng::RngStream;
use crate::scatter::ScatterSpec;

/// Scatter pair driving one anonymization. SA is the (Identity, Mean-Cov)
/// special case.
#[derive(Debug, Clone, Copy)]
pub struct AnonymizationRequest {
    pub spec1: ScatterSpec,
    pub spec2: ScatterSpec,
}

impl AnonymizationRequest {
    pub fn sa() -> Self {
        Self {
            spec1: ScatterSpec::identity(),
            spec2: ScatterSpec::mean_cov(),
        }
    }

    pub fn icsa(spec1: ScatterSpec, spec2: ScatterSpec) -> Self {
        Self { spec1, spec2 }
    }
}

/// Permutes each column independently and uniformly.
///
/// Per column, indices are shuffled by Fisher-Yates: for i from n-1 down
/// to 1, draw j uniformly from 0..=i and swap entries i and j. Identity
/// permutations are admissible draws.
pub fn permute_columns(z: &DMatrix<f64>, rng: &mut RngStream) -> DMatrix<f64> {
    let mut out = z.clone();
    let n = z.nrows();
    for col in 0..z.ncols() {
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            out.swap((i, col), (j, col));
        }
    }
    out
}

/// Maps an anonymized column back to {0, 1} preserving the original count
/// of ones: the k largest values become 1, ties resolved toward the lower
/// row index.
pub fn rediscretize_binary(anonymized: &[f64], original: &[f64]) -> Result<Vec<f64>> {
    if original.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidColumnKind {
            column: "<unnamed>".into(),
        });
    }
    if anonymized.len() != original.len() {
        return Err(Error::ShapeError {
            expected: format!("{} rows", original.len()),
            got: format!("{} rows", anonymized.len()),
        });
    }
    let k = original.iter().filter(|&&v| v == 1.0).count();
    let mut order: Vec<usize> = (0..anonymized.len()).collect();
    order.sort_by(|&a, &b| {
        anonymized[b]
            .partial_cmp(&anonymized[a])
            .expect("finite values")
            .then_with(|| a.cmp(&b))
    });
    let mut out = vec![0.0; anonymized.len()];
    for &i in order.iter().take(k) {
        out[i] = 1.0;
    }
    Ok(out)
}

/// A fitted transform reusable for repeated anonymization draws of the
/// same dataset.
#[derive(Debug, Clone)]
pub struct FittedAnonymizer {
    model: IcsModel,
    components: Components,
    template: DataMatrix,
}

impl FittedAnonymizer {
    pub fn fit(x: &DataMatrix, req: &AnonymizationRequest, rng: &mut RngStream) -> Result<Self> {
        let (model, components) = fit_ics(x, &req.spec1, &req.spec2, rng)?;
        Ok(Self {
            model,
            components,
            template: x.clone(),
        })
    }

    pub fn model(&self) -> &IcsModel {
        &self.model
    }

    pub fn scores(&self) -> &DMatrix<f64> {
        &self.components.scores
    }

    /// One anonymization draw: permute latent columns, back-transform,
    /// rediscretize binary columns.
    pub fn draw(&self, rng: &mut RngStream) -> Result<DataMatrix> {
        let permuted = permute_columns(&self.components.scores, rng);
        self.reconstruct(&permuted)
    }

    /// Back-transform given latent scores (test hook; `draw` composes this
    /// with the column permutation).
    pub fn reconstruct(&self, scores: &DMatrix<f64>) -> Result<DataMatrix> {
        let mut values = back_transform(scores, &self.model)?;
        for j in self.template.binary_columns() {
            let anon: Vec<f64> = values.column(j).iter().copied().collect();
            let orig: Vec<f64> = self.template.values().column(j).iter().copied().collect();
            let fixed = rediscretize_binary(&anon, &orig).map_err(|e| match e {
                Error::InvalidColumnKind { .. } => Error::InvalidColumnKind {
                    column: self.template.names()[j].clone(),
                },
                other => other,
            })?;
            for (i, v) in fixed.into_iter().enumerate() {
                values[(i, j)] = v;
            }
        }
        DataMatrix::new(
            values,
            self.template.names().to_vec(),
            self.template.kinds().to_vec(),
        )
    }
}

/// Fits the scatter pair and performs a single anonymization draw.
pub fn anonymize(x: &DataMatrix, req: &AnonymizationRequest, rng: &mut RngStream) -> Result<DataMatrix> {
    FittedAnonymizer::fit(x, req, rng)?.draw(rng)
}
