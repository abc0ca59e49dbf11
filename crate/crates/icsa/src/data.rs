//! Tabular data with named, kind-tagged columns.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Numeric,
    Binary,
}

/// An n x p numeric table, the unit of anonymization.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, names: Vec<String>, kinds: Vec<ColumnKind>) -> Result<Self> {
        if names.len() != values.ncols() || kinds.len() != values.ncols() {
            return Err(Error::ShapeError {
                expected: format!("{} column names/kinds", values.ncols()),
                got: format!("{} names, {} kinds", names.len(), kinds.len()),
            });
        }
        for (j, kind) in kinds.iter().enumerate() {
            if *kind == ColumnKind::Binary
                && values.column(j).iter().any(|&v| v != 0.0 && v != 1.0)
            {
                return Err(Error::InvalidColumnKind {
                    column: names[j].clone(),
                });
            }
        }
        Ok(Self {
            names,
            kinds,
            values,
        })
    }

    /// All-numeric matrix with generated column names x1..xp.
    pub fn from_values(values: DMatrix<f64>) -> Self {
        let p = values.ncols();
        Self {
            names: (1..=p).map(|j| format!("x{j}")).collect(),
            kinds: vec![ColumnKind::Numeric; p],
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn binary_columns(&self) -> Vec<usize> {
        self.kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == ColumnKind::Binary)
            .map(|(j, _)| j)
            .collect()
    }

    /// Same names/kinds, new values of identical shape.
    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Self> {
        if values.shape() != self.values.shape() {
            return Err(Error::ShapeError {
                expected: format!("{:?}", self.values.shape()),
                got: format!("{:?}", values.shape()),
            });
        }
        Ok(Self {
            names: self.names.clone(),
            kinds: self.kinds.clone(),
            values,
        })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}
