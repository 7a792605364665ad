use serde::Serialize;

use super::{Context, FactSet, KnowledgeBase, MeasureSpec};
use crate::error::Result;

/// A chain of thought: baseline `B` and steps `K_0, K_1, ..., K_n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CotTrace {
    pub baseline: FactSet,
    pub steps: Vec<FactSet>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Meaningful,
    Vacuous,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CotVerdict {
    pub verdict: Verdict,
    pub conserves: bool,
    /// Measure of every step, `K_0` included.
    pub step_measures: Vec<f64>,
    /// Measure of `K_CoT`, the union of steps after `K_0`.
    pub cot_measure: f64,
}

impl CotVerdict {
    pub fn meaningful(&self) -> bool {
        self.verdict == Verdict::Meaningful
    }
}

impl CotTrace {
    /// `K_CoT = K_1 ∪ ... ∪ K_n`.
    pub fn contributions(&self) -> FactSet {
        self.steps.iter().skip(1).fold(FactSet::new(), |acc, s| acc.union(s))
    }

    /// Union of every step.
    pub fn support(&self) -> FactSet {
        self.steps.iter().fold(FactSet::new(), |acc, s| acc.union(s))
    }
}

impl KnowledgeBase {
    /// Checks the step containments of a trace.
    pub fn validate_trace(&self, trace: &CotTrace, q: &Context, budget: u64) -> Result<()> {
        self.space.check(&trace.baseline)?;
        let rel = self.relevant(q, budget)?;
        let mut prior = FactSet::new();
        for (i, step) in trace.steps.iter().enumerate() {
            self.space.check(step)?;
            if i == 0 {
                self.require(step.is_subset(&trace.baseline), || {
                    format!("first step {step:?} is not inside the baseline {:?}", trace.baseline)
                })?;
            } else {
                let allowed = self.emerge_within(&prior, &rel, budget).difference(&prior).intersection(&rel);
                self.require(step.is_subset(&allowed), || {
                    format!("step {i} {step:?} is not inside the newly emerged relevant facts {allowed:?}")
                })?;
            }
            prior.extend(step);
        }
        Ok(())
    }

    pub fn cot_audit(
        &self,
        trace: &CotTrace,
        q: &Context,
        budget: u64,
        spec: &MeasureSpec,
    ) -> Result<CotVerdict> {
        self.validate_trace(trace, q, budget)?;
        let rel = self.relevant(q, budget)?;
        let step_measures = trace
            .steps
            .iter()
            .map(|s| self.measure_within(s, &rel, budget, spec))
            .collect::<Result<Vec<_>>>()?;
        let cot_measure = self.measure_within(&trace.contributions(), &rel, budget, spec)?;
        let meaningful = step_measures.iter().skip(1).any(|m| *m > 0.0);
        Ok(CotVerdict {
            verdict: if meaningful { Verdict::Meaningful } else { Verdict::Vacuous },
            conserves: cot_measure == 0.0,
            step_measures,
            cot_measure,
        })
    }
}
