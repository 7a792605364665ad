//! Can a final distribution be written as a linear mixture of head
//! distributions? Least squares through the pseudoinverse, plus the part of
//! the final distribution no mixture reaches.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::numerics::{dot, norm2, pseudoinverse, Matrix, ProbVec};

pub const DEFAULT_TOL: f64 = 1e-6;

/// Margin for `mixture_bound_check`.
pub const BOUND_MARGIN: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttributionReport {
    /// `|V| x H`, one head distribution per column.
    #[serde(skip)]
    pub heads: Matrix,
    pub beta_hat: Vec<f64>,
    pub reconstructed: Vec<f64>,
    /// `(I - P P⁺) Π`
    pub residual: Vec<f64>,
    pub residual_norm: f64,
    pub tolerance: f64,
    pub attributable: bool,
}

impl AttributionReport {
    /// `Pᵀ d`, zero up to rounding.
    pub fn orthogonality(&self) -> Vec<f64> {
        (0..self.heads.cols()).map(|h| dot(&self.heads.column(h), &self.residual)).collect()
    }
}

pub fn attribute(head_dists: &[ProbVec], final_dist: &ProbVec, tolerance: f64) -> Result<AttributionReport> {
    if head_dists.is_empty() {
        return Err(invalid("no head distributions"));
    }
    if !(tolerance > 0.0) {
        return Err(invalid(format!("tolerance {tolerance} must be positive")));
    }
    let dim = final_dist.len();
    if head_dists.iter().any(|h| h.len() != dim) {
        return Err(invalid("head and final distributions differ in dimension"));
    }
    let cols: Vec<&[f64]> = head_dists.iter().map(|h| h.as_slice()).collect();
    let p = Matrix::from_columns(&cols)?;
    let beta_hat = pseudoinverse(&p)?.mul_vec(final_dist)?;
    let reconstructed = p.mul_vec(&beta_hat)?;
    let residual: Vec<f64> = final_dist.iter().zip(&reconstructed).map(|(a, b)| a - b).collect();
    let residual_norm = norm2(&residual);
    Ok(AttributionReport {
        heads: p,
        beta_hat,
        reconstructed,
        residual,
        residual_norm,
        tolerance,
        attributable: residual_norm < tolerance,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundVerdict {
    WithinEvidence,
    ExcessConfidence,
}

/// No convex mixture puts more mass on `outcome` than its most confident
/// head; anything above that bound came from somewhere else.
pub fn mixture_bound_check(head_dists: &[ProbVec], final_dist: &ProbVec, outcome: usize) -> Result<BoundVerdict> {
    if head_dists.is_empty() {
        return Err(invalid("no head distributions"));
    }
    if outcome >= final_dist.len() || head_dists.iter().any(|h| h.len() != final_dist.len()) {
        return Err(invalid("outcome or dimensions out of range"));
    }
    let bound = head_dists.iter().map(|h| h[outcome]).fold(f64::NEG_INFINITY, f64::max);
    Ok(if final_dist[outcome] > bound + BOUND_MARGIN {
        BoundVerdict::ExcessConfidence
    } else {
        BoundVerdict::WithinEvidence
    })
}
