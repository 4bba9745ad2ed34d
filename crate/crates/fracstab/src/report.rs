//! Machine-readable analysis reports. Every section except `timing` is a
//! deterministic function of the input and flags, so identical runs
//! produce byte-identical reports up to that one section.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::document::{matrix_to_nested, ControllerDocument, SystemDocument};
use crate::model::CommensurateRealization;
use crate::spectral::{StabilityVerdict, VerdictMethod};
use crate::synthesis::SynthesisResult;

#[derive(Debug, Clone, Serialize)]
pub struct ComplexEntry {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LiftingReport {
    pub alpha_c: String,
    pub alpha_c_fraction: String,
    pub p: Vec<usize>,
    #[serde(rename = "N")]
    pub n_lifted: usize,
}

impl LiftingReport {
    pub fn from_realization(lifted: &CommensurateRealization) -> Self {
        Self {
            alpha_c: lifted.alpha_c().decimal_string(),
            alpha_c_fraction: format!(
                "{}/{}",
                lifted.alpha_c().numerator(),
                lifted.alpha_c().denominator()
            ),
            p: lifted.multiplicities().to_vec(),
            n_lifted: lifted.dim(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpandedReport {
    #[serde(rename = "Abig")]
    pub a_big: Vec<Vec<f64>>,
    #[serde(rename = "Bbig")]
    pub b_big: Vec<Vec<f64>>,
    #[serde(rename = "Cbig")]
    pub c_big: Vec<Vec<f64>>,
    pub z0: Vec<f64>,
}

impl ExpandedReport {
    pub fn from_realization(lifted: &CommensurateRealization) -> Self {
        Self {
            a_big: matrix_to_nested(lifted.a_big()),
            b_big: matrix_to_nested(lifted.b_big()),
            c_big: matrix_to_nested(lifted.c_big()),
            z0: lifted.z0().iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictReport {
    pub stable: bool,
    pub method: String,
    pub margin: f64,
    pub boundary: f64,
    pub eigenvalues: Vec<ComplexEntry>,
}

impl VerdictReport {
    pub fn from_verdict(v: &StabilityVerdict) -> Self {
        Self {
            stable: v.stable,
            method: match v.method {
                VerdictMethod::Spectral => "spectral".into(),
                VerdictMethod::Lmi => "lmi".into(),
            },
            margin: v.margin,
            boundary: v.boundary,
            eigenvalues: complex_entries(&v.eigenvalues),
        }
    }
}

pub fn complex_entries(values: &[Complex64]) -> Vec<ComplexEntry> {
    values
        .iter()
        .map(|z| ComplexEntry { re: z.re, im: z.im })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct LmiSection {
    /// feasible | infeasible | inconclusive
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<VerdictReport>,
    pub diagnostic: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthesisReport {
    pub nc: usize,
    pub controller: ControllerDocument,
    pub recovery: String,
    pub recovery_residual: f64,
    pub certificate_margin: f64,
    pub closed_loop: VerdictReport,
}

impl SynthesisReport {
    pub fn from_result(result: &SynthesisResult) -> Self {
        Self {
            nc: result.controller.order(),
            controller: ControllerDocument::from_realization(&result.controller),
            recovery: result.recovery.as_str().to_string(),
            recovery_residual: result.recovery_residual,
            certificate_margin: result.certificate_margin,
            closed_loop: VerdictReport::from_verdict(&result.closed_loop_verdict),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub step: f64,
    pub t_final: f64,
    pub closed_loop: bool,
    pub samples: usize,
    pub diverged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diverged_at: Option<f64>,
    pub final_state_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingReport {
    pub total_ms: u128,
}

/// The self-contained analysis report: the echoed input plus whichever
/// sections the command produced.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub input: SystemDocument,
    pub lifting: LiftingReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expanded: Option<ExpandedReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectral: Option<VerdictReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lmi: Option<LmiSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationReport>,
    pub timing: TimingReport,
}

impl AnalysisReport {
    pub fn new(input: SystemDocument, lifting: LiftingReport) -> Self {
        Self {
            input,
            lifting,
            expanded: None,
            spectral: None,
            lmi: None,
            synthesis: None,
            simulation: None,
            timing: TimingReport { total_ms: 0 },
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

pub fn matrix_report(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    matrix_to_nested(m)
}
