//! The invariant coordinate selection transform: whiten by one scatter,
//! rotate by the eigenvectors of a second scatter computed on the whitened
//! data, and invert.

use nalgebra::{DMatrix, DVector};

use crate::data::DataMatrix;
use crate::error::{Error, IcsStage, Result};
use crate::matrix::{sym_eigen, sym_pow, SymMatrix};
use crate::rng::RngStream;
use crate::scatter::{estimate, ScatterSpec};

/// Fitted ICS transform. Immutable after `fit_ics`.
#[derive(Debug, Clone)]
pub struct IcsModel {
    pub location: DVector<f64>,
    pub s1_inv_sqrt: SymMatrix,
    pub s1_sqrt: SymMatrix,
    pub rotation: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub spec1: ScatterSpec,
    pub spec2: ScatterSpec,
}

/// Latent ICS scores of the data the model was fitted on.
#[derive(Debug, Clone)]
pub struct Components {
    pub scores: DMatrix<f64>,
}

fn stage(s: IcsStage) -> impl FnOnce(Error) -> Error {
    move |e| Error::IcsFit {
        stage: s,
        source: Box::new(e),
    }
}

pub fn fit_ics(
    x: &DataMatrix,
    spec1: &ScatterSpec,
    spec2: &ScatterSpec,
    rng: &mut RngStream,
) -> Result<(IcsModel, Components)> {
    let est1 = estimate(x, spec1, rng).map_err(stage(IcsStage::S1))?;
    let s1_inv_sqrt = sym_pow(&est1.scatter, -0.5).map_err(stage(IcsStage::S1))?;
    let s1_sqrt = sym_pow(&est1.scatter, 0.5).map_err(stage(IcsStage::S1))?;

    let centered = crate::matrix::center_rows(x.values(), &est1.location);
    let standardized = centered * s1_inv_sqrt.as_matrix();
    let x_st = DataMatrix::from_values(standardized.clone());

    // S2 is computed about its own location estimate of the standardized
    // data, not about the origin.
    let est2 = estimate(&x_st, spec2, rng).map_err(stage(IcsStage::S2))?;
    let eig = sym_eigen(&est2.scatter).map_err(stage(IcsStage::S2))?;
    let (eigenvalues, rotation) = order_ties(eig.values, eig.vectors);

    let scores = standardized * &rotation;
    let model = IcsModel {
        location: est1.location,
        s1_inv_sqrt,
        s1_sqrt,
        rotation,
        eigenvalues,
        spec1: *spec1,
        spec2: *spec2,
    };
    Ok((model, Components { scores }))
}

/// Components with equal eigenvalues are ordered by the leading entry of the
/// sign-fixed eigenvector so the fit is deterministic.
fn order_ties(values: Vec<f64>, vectors: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let p = values.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap()
            .then_with(|| vectors[(0, b)].partial_cmp(&vectors[(0, a)]).unwrap())
    });
    if order.iter().enumerate().all(|(i, &j)| i == j) {
        return (values, vectors);
    }
    let mut v2 = DMatrix::zeros(p, p);
    let mut vals = Vec::with_capacity(p);
    for (dst, &src) in order.iter().enumerate() {
        vals.push(values[src]);
        v2.set_column(dst, &vectors.column(src));
    }
    (vals, v2)
}

/// Maps latent scores back to the original data scale:
/// scores V' S1^{1/2} + 1 T'.
pub fn back_transform(scores: &DMatrix<f64>, model: &IcsModel) -> Result<DMatrix<f64>> {
    let p = model.rotation.nrows();
    if scores.ncols() != p {
        return Err(Error::ShapeError {
            expected: format!("{p} columns"),
            got: format!("{}", scores.ncols()),
        });
    }
    let mut out = scores * model.rotation.transpose() * model.s1_sqrt.as_matrix();
    for mut row in out.row_iter_mut() {
        for (v, t) in row.iter_mut().zip(model.location.iter()) {
            *v += t;
        }
    }
    Ok(out)
}
