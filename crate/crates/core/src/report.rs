use serde::Serialize;

use crate::system::CaseTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DimensionKind {
    Minkowski,
    Hausdorff,
}

/// One term `(Σ_j P_{i,j}) · log_m t_{φ;i}` of the divisible Hausdorff series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainContribution {
    pub i: usize,
    pub weight: f64,
    pub t_phi: f64,
    pub contribution: f64,
}

/// Result of a dimension computation.
///
/// For series-based cases the true value lies in
/// `[value - tail_bound, value + tail_bound]` up to rounding; `tolerance`
/// adds an estimate of the accumulated rounding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionReport {
    pub value: f64,
    pub kind: DimensionKind,
    pub case_tag: CaseTag,
    pub truncation_index: usize,
    pub tail_bound: f64,
    pub tolerance: f64,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contributions: Option<Vec<ChainContribution>>,
}

impl DimensionReport {
    pub(crate) fn closed_form(value: f64, kind: DimensionKind, case_tag: CaseTag) -> Self {
        Self {
            value: value.clamp(0.0, 1.0),
            kind,
            case_tag,
            truncation_index: 0,
            tail_bound: 0.0,
            tolerance: 4.0 * f64::EPSILON,
            notes: Vec::new(),
            contributions: None,
        }
    }
}
