//! Versioned JSON model files. Everything needed to predict is stored, so a
//! model never refers back to its training data.

use std::path::Path;

use nalgebra::DVector;
use rfpls_core::basis::block_ranges;
use rfpls_core::sofr::RobustReport;
use rfpls_core::{BasisSystem, FittedSofr, Method};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const FORMAT: &str = "rfpls-model";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorSpec {
    pub lower: f64,
    pub upper: f64,
    pub order: usize,
    pub num_basis: usize,
    /// Basis coefficients of the coefficient function.
    pub beta: Vec<f64>,
    /// Mean basis coefficients of the training curves.
    pub center: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustSpec {
    pub weights: Vec<f64>,
    pub tuning_c: f64,
    pub irpls_iterations: usize,
    pub irpls_converged: bool,
    pub m_iterations: usize,
    pub m_converged: bool,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub schema_version: u32,
    pub method: Method,
    pub components: usize,
    pub intercept: f64,
    pub predictors: Vec<PredictorSpec>,
    pub robust: Option<RobustSpec>,
    pub training_ids: Vec<String>,
}

impl ModelFile {
    pub fn from_fit(fit: &FittedSofr, training_ids: Vec<String>) -> Self {
        let ranges = block_ranges(&fit.systems);
        let predictors = fit
            .systems
            .iter()
            .zip(ranges)
            .map(|(s, r)| PredictorSpec {
                lower: s.lower(),
                upper: s.upper(),
                order: s.order(),
                num_basis: s.num_basis(),
                beta: fit.beta_coefs.as_slice()[r.clone()].to_vec(),
                center: fit.coef_center.as_slice()[r].to_vec(),
            })
            .collect();
        let robust = fit.robust.as_ref().map(|r| RobustSpec {
            weights: r.weights.as_slice().to_vec(),
            tuning_c: r.tuning_c,
            irpls_iterations: r.irpls_iterations,
            irpls_converged: r.irpls_converged,
            m_iterations: r.m_iterations,
            m_converged: r.m_converged,
            scale: r.scale,
        });
        Self {
            format: FORMAT.to_string(),
            schema_version: SCHEMA_VERSION,
            method: fit.method,
            components: fit.components,
            intercept: fit.intercept,
            predictors,
            robust,
            training_ids,
        }
    }

    pub fn to_fit(&self) -> CliResult<FittedSofr> {
        let mut systems = Vec::with_capacity(self.predictors.len());
        let mut beta = Vec::new();
        let mut center = Vec::new();
        for (m, p) in self.predictors.iter().enumerate() {
            let system = BasisSystem::new((p.lower, p.upper), p.num_basis, p.order)
                .map_err(|e| CliError::input(format!("model predictor {}: {e}", m + 1)))?;
            if p.beta.len() != p.num_basis || p.center.len() != p.num_basis {
                return Err(CliError::input(format!(
                    "model predictor {}: expected {} coefficients",
                    m + 1,
                    p.num_basis
                )));
            }
            systems.push(system);
            beta.extend_from_slice(&p.beta);
            center.extend_from_slice(&p.center);
        }
        Ok(FittedSofr {
            method: self.method,
            systems,
            beta_coefs: DVector::from_vec(beta),
            intercept: self.intercept,
            components: self.components,
            coef_center: DVector::from_vec(center),
            robust: self.robust.as_ref().map(|r| RobustReport {
                weights: DVector::from_vec(r.weights.clone()),
                tuning_c: r.tuning_c,
                irpls_iterations: r.irpls_iterations,
                irpls_converged: r.irpls_converged,
                m_iterations: r.m_iterations,
                m_converged: r.m_converged,
                scale: r.scale,
            }),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::input(format!("model file: {e}")))?;
        match value.get("format").and_then(|v| v.as_str()) {
            Some(FORMAT) => {}
            other => {
                return Err(CliError::input(format!(
                    "model file: format {other:?} is not '{FORMAT}'"
                )))
            }
        }
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            other => {
                return Err(CliError::input(format!(
                    "model file: schema version {other:?} is not supported (expected {SCHEMA_VERSION})"
                )))
            }
        }
        serde_json::from_value(value).map_err(|e| CliError::input(format!("model file: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| CliError::input(format!("{}: {}", path.display(), e.message)))
    }
}
