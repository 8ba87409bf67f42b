//! Compatible finite element pair `(RT_k, dQ_{k-1})` on quadrilaterals.

mod dg;
mod rt;

use std::sync::Arc;

pub use dg::{DgSpace, DgTabulation};
pub use rt::{RtRefTabulation, RtSpace, RtTabulation};

use crate::error::{Error, Result};

/// Analytic scalar function of position and time.
pub type ScalarFn = Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;
/// Analytic vector function of position and time.
pub type VectorFn = Arc<dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync>;

pub trait FunctionSpace {
    fn ndofs(&self) -> usize;
}

/// Coefficient vector tied to a space by length.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros<S: FunctionSpace>(space: &S) -> Self {
        Field { values: vec![0.0; space.ndofs()] }
    }

    pub fn from_values<S: FunctionSpace>(space: &S, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.ndofs() {
            return Err(Error::SpaceMismatch(format!(
                "field has {} coefficients, space has {} dofs",
                values.len(),
                space.ndofs()
            )));
        }
        Ok(Field { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
