//! Strictly proper scoring rules and convex aggregation of beliefs.
//!
//! `contributions` splits the Jensen gap of a convex mixture into per-agent
//! terms `β_h L(π_h, y)` and the aggregator term `-L(Π, y)`; their sum is the
//! gap and is positive whenever two weighted beliefs differ.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{real, sorted_sum, ProbVec};

/// Tolerance on `Σ β_h = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringRule {
    /// `-ln π_y`; `+∞` when `π_y = 0`.
    Log,
    /// `Σ_k (π_k - [k = y])²`.
    Brier,
}

impl ScoringRule {
    pub fn loss(&self, reported: &ProbVec, outcome: usize) -> Result<f64> {
        if outcome >= reported.len() {
            return Err(invalid(format!("outcome {outcome} outside dimension {}", reported.len())));
        }
        Ok(match self {
            ScoringRule::Log => {
                let p = reported[outcome];
                if p == 0.0 {
                    f64::INFINITY
                } else {
                    -p.ln()
                }
            }
            ScoringRule::Brier => reported
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let d = p - if k == outcome { 1.0 } else { 0.0 };
                    d * d
                })
                .sum(),
        })
    }
}

/// `E_{y ~ truth} L(reported, y)`; outcomes with zero truth mass contribute
/// nothing, even when their loss is infinite.
pub fn expected_loss(rule: ScoringRule, reported: &ProbVec, truth: &ProbVec) -> Result<f64> {
    if reported.len() != truth.len() {
        return Err(invalid(format!(
            "reported has dimension {}, truth {}",
            reported.len(),
            truth.len()
        )));
    }
    let mut total = 0.0;
    for (y, t) in truth.iter().enumerate() {
        if *t > 0.0 {
            total += t * rule.loss(reported, y)?;
        }
    }
    Ok(total)
}

/// Beliefs `π_h` with nonnegative weights `β_h` summing to one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BeliefProfile {
    weights: Vec<f64>,
    beliefs: Vec<ProbVec>,
}

impl BeliefProfile {
    pub fn new(weights: Vec<f64>, beliefs: Vec<ProbVec>) -> Result<Self> {
        if beliefs.is_empty() {
            return Err(invalid("profile needs at least one belief"));
        }
        if weights.len() != beliefs.len() {
            return Err(invalid(format!("{} weights for {} beliefs", weights.len(), beliefs.len())));
        }
        let dim = beliefs[0].len();
        if beliefs.iter().any(|b| b.len() != dim) {
            return Err(invalid("beliefs differ in dimension"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(invalid(format!("weights sum to {s}, not 1")));
        }
        Ok(BeliefProfile { weights, beliefs })
    }

    pub fn equal_weights(beliefs: Vec<ProbVec>) -> Result<Self> {
        let n = beliefs.len().max(1);
        BeliefProfile::new(vec![1.0 / n as f64; beliefs.len()], beliefs)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn beliefs(&self) -> &[ProbVec] {
        &self.beliefs
    }

    pub fn dim(&self) -> usize {
        self.beliefs[0].len()
    }

    pub fn len(&self) -> usize {
        self.beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beliefs.is_empty()
    }
}

/// `Π = Σ β_h π_h`. Each entry is summed in sorted order, so the result does
/// not depend on the order of the agents.
pub fn aggregate_mixture(profile: &BeliefProfile) -> ProbVec {
    let dim = profile.dim();
    let entries = (0..dim)
        .map(|k| sorted_sum(profile.weights.iter().zip(&profile.beliefs).map(|(w, b)| w * b[k]).collect()))
        .collect();
    ProbVec::new(entries).expect("convex combination of probability vectors")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapReport {
    pub rule: ScoringRule,
    pub outcome: usize,
    #[serde(serialize_with = "real::serialize")]
    pub gamma: f64,
    /// `p_h = β_h L(π_h, y*)`.
    #[serde(serialize_with = "real::vec")]
    pub contributions: Vec<f64>,
    /// `p_0 = -L(Π, y*)`.
    pub aggregator: f64,
}

impl GapReport {
    pub fn total(&self) -> f64 {
        self.aggregator + sorted_sum(self.contributions.clone())
    }
}

pub fn contributions(profile: &BeliefProfile, rule: ScoringRule, outcome: usize) -> Result<GapReport> {
    if outcome >= profile.dim() {
        return Err(invalid(format!("outcome {outcome} outside dimension {}", profile.dim())));
    }
    let agg = rule.loss(&aggregate_mixture(profile), outcome)?;
    if agg.is_infinite() {
        return Err(Error::DegenerateInput(
            "the aggregate gives the realized outcome zero probability".into(),
        ));
    }
    let per: Vec<f64> = profile
        .weights
        .iter()
        .zip(&profile.beliefs)
        .map(|(w, b)| if *w == 0.0 { Ok(0.0) } else { rule.loss(b, outcome).map(|l| w * l) })
        .collect::<Result<_>>()?;
    let gamma = sorted_sum(per.clone()) - agg;
    Ok(GapReport { rule, outcome, gamma, contributions: per, aggregator: -agg })
}

/// Normalized exponentials of standard normals.
pub fn random_belief<R: Rng>(rng: &mut R, dim: usize) -> ProbVec {
    let w: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal).exp()).collect();
    ProbVec::normalized(w).expect("positive weights")
}

/// Random beliefs with random weights, both drawn by `random_belief`.
pub fn random_profile<R: Rng>(rng: &mut R, agents: usize, dim: usize) -> BeliefProfile {
    let beliefs = (0..agents).map(|_| random_belief(rng, dim)).collect();
    let weights = random_belief(rng, agents).into_vec();
    let s: f64 = weights.iter().sum();
    BeliefProfile::new(weights.iter().map(|w| w / s).collect(), beliefs).expect("valid random profile")
}

/// Every point of the simplex in `dim` coordinates whose entries are
/// multiples of `1/steps`.
pub fn simplex_grid(dim: usize, steps: usize) -> Vec<ProbVec> {
    fn rec(left: usize, slots: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<ProbVec>) {
        if slots == 1 {
            cur.push(left);
            let v = cur.iter().map(|c| *c as f64 / steps as f64).collect();
            out.push(ProbVec::normalized(v).expect("grid point"));
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(left - c, slots - 1, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if dim > 0 {
        rec(steps, dim, steps, &mut Vec::new(), &mut out);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProprietyScan {
    pub rule: ScoringRule,
    pub dim: usize,
    pub points: usize,
    /// Smallest `E L(reported) - E L(truth)` over grid pairs with
    /// `reported != truth`.
    #[serde(serialize_with = "real::serialize")]
    pub min_margin: f64,
    /// First pair `(truth, reported)` that failed the margin, if any.
    pub violation: Option<(Vec<f64>, Vec<f64>)>,
}

/// Checks on a simplex grid that the truthful report is the unique
/// expected-loss minimizer by more than `margin`.
pub fn propriety_scan(rule: ScoringRule, dim: usize, steps: usize, margin: f64) -> Result<ProprietyScan> {
    let grid = simplex_grid(dim, steps);
    let mut min_margin = f64::INFINITY;
    let mut violation = None;
    for t in &grid {
        let own = expected_loss(rule, t, t)?;
        for r in &grid {
            if std::ptr::eq(r, t) {
                continue;
            }
            let gap = expected_loss(rule, r, t)? - own;
            if gap < min_margin {
                min_margin = gap;
            }
            if !(gap > margin) && violation.is_none() {
                violation = Some((t.to_vec(), r.to_vec()));
            }
        }
    }
    Ok(ProprietyScan { rule, dim, points: grid.len(), min_margin, violation })
}

/// On-disk belief profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub weights: Vec<f64>,
    pub beliefs: Vec<Vec<f64>>,
    pub rule: ScoringRule,
    pub outcome: usize,
}

impl ProfileFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&crate::knowledge::read_text_file(path)?)
    }

    pub fn profile(&self) -> Result<BeliefProfile> {
        let beliefs = self.beliefs.iter().cloned().map(ProbVec::new).collect::<Result<Vec<_>>>()?;
        BeliefProfile::new(self.weights.clone(), beliefs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pv(v: &[f64]) -> ProbVec {
        ProbVec::new(v.to_vec()).unwrap()
    }

    #[test]
    fn expected_loss_examples() {
        let u = pv(&[0.5, 0.5]);
        assert!((expected_loss(ScoringRule::Log, &u, &u).unwrap() - 2f64.ln()).abs() < 1e-15);
        let t = pv(&[1.0, 0.0]);
        assert!((expected_loss(ScoringRule::Log, &u, &t).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(expected_loss(ScoringRule::Log, &t, &t).unwrap(), 0.0);
        assert_eq!(expected_loss(ScoringRule::Log, &pv(&[0.0, 1.0]), &t).unwrap(), f64::INFINITY);
        assert!(expected_loss(ScoringRule::Brier, &u, &pv(&[1.0])).is_err());
        // Brier: (0.5-1)^2 + 0.5^2
        assert!((ScoringRule::Brier.loss(&u, 0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mixture_examples() {
        let a = pv(&[0.2, 0.8]);
        let same = BeliefProfile::equal_weights(vec![a.clone(), a.clone()]).unwrap();
        assert!(crate::numerics::max_abs_diff(&aggregate_mixture(&same), &a) < 1e-15);
        let b = pv(&[0.6, 0.4]);
        let first = BeliefProfile::new(vec![1.0, 0.0], vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(aggregate_mixture(&first).as_slice(), a.as_slice());
        let fox = BeliefProfile::equal_weights(vec![pv(&[0.475, 0.525]), pv(&[0.146, 0.854])]).unwrap();
        assert!((aggregate_mixture(&fox)[0] - 0.3105).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_gap() {
        let p = BeliefProfile::equal_weights(vec![pv(&[0.9, 0.1]), pv(&[0.1, 0.9])]).unwrap();
        let g = contributions(&p, ScoringRule::Log, 0).unwrap();
        let oracle = 0.5 * -(0.9f64.ln()) + 0.5 * -(0.1f64.ln()) - -(0.5f64.ln());
        assert!((g.gamma - oracle).abs() < 1e-12);
        assert!((g.gamma - 0.5108256237659906).abs() < 1e-12);
        assert!((g.total() - g.gamma).abs() < 1e-12);
        let same = BeliefProfile::equal_weights(vec![pv(&[0.9, 0.1]), pv(&[0.9, 0.1])]).unwrap();
        assert!(contributions(&same, ScoringRule::Log, 0).unwrap().gamma.abs() <= 1e-12);
    }

    #[test]
    fn infinite_losses() {
        let p = BeliefProfile::equal_weights(vec![pv(&[1.0, 0.0]), pv(&[0.5, 0.5])]).unwrap();
        let g = contributions(&p, ScoringRule::Log, 1).unwrap();
        assert_eq!(g.gamma, f64::INFINITY);
        assert_eq!(g.contributions[0], f64::INFINITY);
        let dead = BeliefProfile::equal_weights(vec![pv(&[1.0, 0.0]), pv(&[1.0, 0.0])]).unwrap();
        assert!(matches!(contributions(&dead, ScoringRule::Log, 1), Err(Error::DegenerateInput(_))));
        let zero_w = BeliefProfile::new(vec![1.0, 0.0], vec![pv(&[0.5, 0.5]), pv(&[1.0, 0.0])]).unwrap();
        let g = contributions(&zero_w, ScoringRule::Log, 1).unwrap();
        assert_eq!(g.contributions[1], 0.0);
        assert!(g.gamma.abs() < 1e-15);
    }

    #[test]
    fn profile_validation() {
        let a = pv(&[0.5, 0.5]);
        assert!(BeliefProfile::new(vec![0.5, 0.6], vec![a.clone(), a.clone()]).is_err());
        assert!(BeliefProfile::new(vec![1.0], vec![a.clone(), a.clone()]).is_err());
        assert!(BeliefProfile::new(vec![0.5, 0.5], vec![a.clone(), pv(&[1.0])]).is_err());
        assert!(BeliefProfile::new(vec![], vec![]).is_err());
    }

    #[test]
    fn grid_size_and_small_scan() {
        // C(20 + 2, 2) points on the 3-simplex at step 0.05
        assert_eq!(simplex_grid(3, 20).len(), 231);
        let s = propriety_scan(ScoringRule::Brier, 2, 20, 1e-12).unwrap();
        assert!(s.violation.is_none());
        assert!((s.min_margin - 2.0 * 0.05f64.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn random_profiles_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_profile(&mut rng, 3, 5);
        assert_eq!(p.len(), 3);
        assert_eq!(p.dim(), 5);
        assert!(p.weights().iter().all(|w| *w > 0.0));
    }

    #[test]
    fn profile_file() {
        let f = ProfileFile::from_json(r#"{"weights":[0.5,0.5],"beliefs":[[0.9,0.1],[0.1,0.9]],"rule":"log","outcome":0}"#)
            .unwrap();
        assert_eq!(f.rule, ScoringRule::Log);
        assert!(f.profile().is_ok());
        assert!(ProfileFile::from_json(r#"{"weights":[1],"beliefs":[[1]],"rule":"log","outcome":0,"x":1}"#).is_err());
        assert!(ProfileFile::from_json(r#"{"weights":[1],"beliefs":[[1]],"rule":"hinge","outcome":0}"#).is_err());
    }
}
