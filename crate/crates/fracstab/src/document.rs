//! Self-describing system documents: one JSON format for plants,
//! controllers, and report echoes, so synthesized controllers can be fed
//! straight back into simulation.
//!
//! Orders are carried as decimal strings, preserving the exact-rational
//! entry contract of the model layer.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MultiOrderSystem;
use crate::order::{commensurate_base, parse_order, RationalOrder};
use crate::synthesis::ControllerRealization;

/// A plant description with an optional controller block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDocument {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
    pub orders: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_deriv: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerDocument>,
}

/// Controller block of a document; order zero carries only the static
/// gain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerDocument {
    #[serde(rename = "Ac", default, skip_serializing_if = "Option::is_none")]
    pub ac: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Bc", default, skip_serializing_if = "Option::is_none")]
    pub bc: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Cc", default, skip_serializing_if = "Option::is_none")]
    pub cc: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Dc")]
    pub dc: Vec<Vec<f64>>,
    pub nc: usize,
}

fn nested_to_matrix(name: &str, data: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let rows = data.len();
    let cols = data.first().map(Vec::len).unwrap_or(0);
    for (i, row) in data.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Document(format!(
                "field {name:?}: row {i} has {} entries, expected {cols}",
                row.len()
            )));
        }
    }
    let mut m = DMatrix::zeros(rows, cols);
    for (i, row) in data.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Document(format!(
                    "field {name:?}: entry ({i}, {j}) is not finite"
                )));
            }
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

pub fn matrix_to_nested(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl SystemDocument {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| {
            Error::Document(format!(
                "{}: line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serialization cannot fail")
    }

    /// Validates and converts to the model type. The plant may omit `B`
    /// and `C` for pure stability analysis.
    pub fn to_system(&self) -> Result<MultiOrderSystem> {
        let a = nested_to_matrix("A", &self.a)?;
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Document(format!(
                "field \"A\": must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if self.orders.len() != n {
            return Err(Error::Document(format!(
                "field \"orders\": expected {n} entries, got {}",
                self.orders.len()
            )));
        }
        let orders: Vec<RationalOrder> = self
            .orders
            .iter()
            .map(|s| parse_order(s))
            .collect::<Result<_>>()?;
        let b = match &self.b {
            Some(b) => {
                let m = nested_to_matrix("B", b)?;
                if m.nrows() != n {
                    return Err(Error::Document(format!(
                        "field \"B\": expected {n} rows, got {}",
                        m.nrows()
                    )));
                }
                m
            }
            None => DMatrix::zeros(n, 0),
        };
        let c = match &self.c {
            Some(c) => {
                let m = nested_to_matrix("C", c)?;
                if m.ncols() != n {
                    return Err(Error::Document(format!(
                        "field \"C\": expected {n} columns, got {}",
                        m.ncols()
                    )));
                }
                m
            }
            None => DMatrix::zeros(0, n),
        };
        let x0 = match &self.x0 {
            Some(v) => {
                if v.len() != n {
                    return Err(Error::Document(format!(
                        "field \"x0\": expected {n} entries, got {}",
                        v.len()
                    )));
                }
                DVector::from_row_slice(v)
            }
            None => DVector::zeros(n),
        };
        let x0_deriv = match &self.x0_deriv {
            Some(v) => {
                if v.len() != n {
                    return Err(Error::Document(format!(
                        "field \"x0_deriv\": expected {n} entries, got {}",
                        v.len()
                    )));
                }
                DVector::from_row_slice(v)
            }
            None => DVector::zeros(n),
        };
        MultiOrderSystem::new(a, b, c, orders, x0, x0_deriv)
    }

    /// Builds the controller realization carried in the document, running
    /// at the plant's base order.
    pub fn controller_realization(&self) -> Result<Option<ControllerRealization>> {
        let Some(block) = &self.controller else {
            return Ok(None);
        };
        let system = self.to_system()?;
        let (alpha_c, _) = commensurate_base(system.orders())?;
        let l = system.input_dim();
        let m = system.output_dim();
        let nc = block.nc;
        let dc = nested_to_matrix("controller.Dc", &block.dc)?;
        if dc.nrows() != l || dc.ncols() != m {
            return Err(Error::Document(format!(
                "field \"controller.Dc\": expected {l}x{m}, got {}x{}",
                dc.nrows(),
                dc.ncols()
            )));
        }
        let take = |name: &str, field: &Option<Vec<Vec<f64>>>, rows: usize, cols: usize| match field
        {
            Some(data) => {
                let m = nested_to_matrix(name, data)?;
                if m.nrows() != rows || m.ncols() != cols {
                    return Err(Error::Document(format!(
                        "field {name:?}: expected {rows}x{cols}, got {}x{}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                Ok(m)
            }
            None if rows == 0 || cols == 0 => Ok(DMatrix::zeros(rows, cols)),
            None => Err(Error::Document(format!(
                "field {name:?} is required for a controller of order {nc}"
            ))),
        };
        let ac = take("controller.Ac", &block.ac, nc, nc)?;
        let bc = take("controller.Bc", &block.bc, nc, m)?;
        let cc = take("controller.Cc", &block.cc, l, nc)?;
        Ok(Some(ControllerRealization::new(ac, bc, cc, dc, alpha_c)?))
    }

    /// Document for a plant, echoing matrices and exact order strings.
    pub fn from_system(system: &MultiOrderSystem) -> Self {
        Self {
            a: matrix_to_nested(system.a()),
            b: (system.input_dim() > 0).then(|| matrix_to_nested(system.b())),
            c: (system.output_dim() > 0).then(|| matrix_to_nested(system.c())),
            orders: system.orders().iter().map(|o| o.decimal_string()).collect(),
            x0: Some(system.x0().iter().copied().collect()),
            x0_deriv: Some(system.x0_deriv().iter().copied().collect()),
            controller: None,
        }
    }

    pub fn with_controller(mut self, controller: &ControllerRealization) -> Self {
        self.controller = Some(ControllerDocument::from_realization(controller));
        self
    }
}

impl ControllerDocument {
    pub fn from_realization(controller: &ControllerRealization) -> Self {
        let nc = controller.order();
        Self {
            ac: (nc > 0).then(|| matrix_to_nested(&controller.ac)),
            bc: (nc > 0).then(|| matrix_to_nested(&controller.bc)),
            cc: (nc > 0).then(|| matrix_to_nested(&controller.cc)),
            dc: matrix_to_nested(&controller.dc),
            nc,
        }
    }
}

/// Writes a file atomically: the content lands under a temporary name in
/// the same directory and is renamed into place.
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
