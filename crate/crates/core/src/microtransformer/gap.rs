use serde::Serialize;

use super::forward::ForwardTrace;
use crate::error::{invalid, Error, Result};
use crate::numerics::{log_sum_exp, softmax, sorted_sum, ProbVec};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LseGapReport {
    /// `log Z_h` per head.
    pub head_log_partitions: Vec<f64>,
    /// `log Z` of the summed head logits.
    pub log_partition: f64,
    /// `Σ log Z_h - log Z`.
    pub gamma: f64,
    pub head_distributions: Vec<ProbVec>,
    pub poe: ProbVec,
    pub outcome: usize,
    /// `p_h = -log π^(h)_y`.
    pub head_losses: Vec<f64>,
    /// `p_0 = log Π_y` for the product of experts.
    pub aggregator: f64,
}

impl LseGapReport {
    /// `p_0 + Σ p_h`, which equals `gamma` up to rounding.
    pub fn payment_sum(&self) -> f64 {
        self.aggregator + sorted_sum(self.head_losses.clone())
    }
}

fn check_dims(head_logits: &[Vec<f64>]) -> Result<usize> {
    let Some(first) = head_logits.first() else {
        return Err(invalid("no head logits"));
    };
    if first.is_empty() || head_logits.iter().any(|l| l.len() != first.len()) {
        return Err(invalid("head logits differ in dimension or are empty"));
    }
    Ok(first.len())
}

fn summed(head_logits: &[Vec<f64>], dim: usize) -> Vec<f64> {
    (0..dim).map(|i| head_logits.iter().map(|l| l[i]).sum()).collect()
}

pub fn lse_gap_from_logits(head_logits: &[Vec<f64>], outcome: usize) -> Result<LseGapReport> {
    let dim = check_dims(head_logits)?;
    if outcome >= dim {
        return Err(invalid(format!("outcome {outcome} outside dimension {dim}")));
    }
    let head_log_partitions = head_logits.iter().map(|l| log_sum_exp(l)).collect::<Result<Vec<_>>>()?;
    let total = summed(head_logits, dim);
    let log_partition = log_sum_exp(&total)?;
    let gamma = sorted_sum(head_log_partitions.clone()) - log_partition;
    let head_distributions = head_logits.iter().map(|l| softmax(l)).collect::<Result<Vec<_>>>()?;
    let poe = poe_distribution(head_logits)?;
    let head_losses = head_logits.iter().zip(&head_log_partitions).map(|(l, z)| z - l[outcome]).collect();
    let aggregator = total[outcome] - log_partition;
    Ok(LseGapReport { head_log_partitions, log_partition, gamma, head_distributions, poe, outcome, head_losses, aggregator })
}

/// Gap of the attention heads of a trace, scored at the argmax of the full
/// distribution.
pub fn lse_gap(trace: &ForwardTrace) -> Result<LseGapReport> {
    lse_gap_from_logits(&trace.head_logits(), trace.argmax())
}

/// Normalized elementwise product of the head softmaxes.
pub fn poe_distribution(head_logits: &[Vec<f64>]) -> Result<ProbVec> {
    let dim = check_dims(head_logits)?;
    let heads = head_logits.iter().map(|l| softmax(l)).collect::<Result<Vec<_>>>()?;
    let prod: Vec<f64> = (0..dim).map(|i| heads.iter().map(|p| p[i]).product()).collect();
    let mass: f64 = prod.iter().sum();
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::DegenerateInput("product of experts has no mass".into()));
    }
    ProbVec::normalized(prod)
}

/// Logits shifted to zero mean.
pub fn centered(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().sum::<f64>() / logits.len() as f64;
    logits.iter().map(|x| x - m).collect()
}
