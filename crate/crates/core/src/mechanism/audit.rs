use serde::Serialize;

use super::{AuctionInstance, Engine, PaymentVector, TOL};
use crate::error::{Error, Result};
use crate::knowledge::FactSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaymentRule {
    /// VCG with the Clarke pivot.
    Clarke,
    /// Clarke payments minus their mean, so that they sum to zero.
    MeanShifted,
    /// No transfers at all.
    Zero,
}

/// Which report profiles of the other agents a truthfulness scan visits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthScope {
    OthersTruthful,
    /// Others truthful first, then every combination of their reports.
    AllReports,
}

/// A profitable misreport. `reports` is the profile the deviation is played
/// against, with the deviating agent's own entry set to its true knowledge.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Deviation {
    pub agent: usize,
    pub agent_id: String,
    pub report: FactSet,
    pub reports: Vec<FactSet>,
    pub truthful_utility: f64,
    pub deviating_utility: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruthAudit {
    pub truthful: bool,
    pub witness: Option<Deviation>,
    pub profiles_checked: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParticipationWitness {
    pub agent: usize,
    pub agent_id: String,
    pub utility: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimalityWitness {
    pub chosen: FactSet,
    pub chosen_cost: f64,
    /// Emergence of the available relevant knowledge.
    pub envelope: FactSet,
    pub inside_envelope: bool,
    pub best_feasible: Option<FactSet>,
    pub best_feasible_cost: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyAudit {
    pub rule: PaymentRule,
    pub scope: TruthScope,
    pub response: FactSet,
    pub payments: PaymentVector,
    pub utilities: Vec<f64>,
    pub truthful: bool,
    pub truthful_witness: Option<Deviation>,
    pub conserves: bool,
    pub reveals: bool,
    pub reveals_witness: Option<ParticipationWitness>,
    pub optimal: bool,
    pub optimal_witness: Option<OptimalityWitness>,
}

impl PropertyAudit {
    pub fn all_hold(&self) -> bool {
        self.truthful && self.conserves && self.reveals && self.optimal
    }
}

/// Clarke audit next to the re-audit with payments forced to sum to zero.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImpossibilityReport {
    pub clarke: PropertyAudit,
    pub imposed: PropertyAudit,
}

impl ImpossibilityReport {
    /// Clarke keeps truthfulness, revelation and optimality but spends money.
    pub fn clarke_violates_conservation_only(&self) -> bool {
        !self.clarke.conserves && self.clarke.truthful && self.clarke.reveals && self.clarke.optimal
    }

    /// Forcing conservation costs truthfulness or optimality.
    pub fn imposed_breaks_other_property(&self) -> bool {
        !self.imposed.truthful || !self.imposed.optimal
    }
}

fn submasks(universe: u64) -> Vec<u64> {
    let mut out = Vec::with_capacity(1 << universe.count_ones());
    let mut sub = universe;
    loop {
        out.push(sub);
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & universe;
    }
    out.reverse();
    out
}

impl AuctionInstance {
    /// Reports an agent may make: subsets of its closure plus fabrications
    /// from the relevant set.
    pub fn misreport_universe(&self, agent: usize) -> Result<FactSet> {
        let k = &self.agents[agent].knowledge;
        let cl = self.base.closure(k, &self.context, self.budget)?;
        Ok(cl.union(&self.relevant))
    }

    fn report_lists(&self) -> Result<Vec<Vec<u64>>> {
        (0..self.agents.len())
            .map(|i| {
                let u = self.misreport_universe(i)?;
                if u.len() > 16 {
                    return Err(Error::ResourceLimit(format!(
                        "agent {} has 2^{} possible reports",
                        self.agents[i].id,
                        u.len()
                    )));
                }
                Ok(submasks(u.to_mask()))
            })
            .collect()
    }

    /// Utility of `agent` (with its true knowledge) when `reports` are played.
    pub fn utility(&self, rule: PaymentRule, agent: usize, reports: &[FactSet]) -> f64 {
        let eng = self.engine();
        let masks: Vec<u64> = reports.iter().map(FactSet::to_mask).collect();
        let out = eng.outcome(&masks, rule);
        eng.utility(self.agents[agent].knowledge.to_mask(), &out, agent)
    }

    /// Truthfulness under Clarke payments, others truthful.
    pub fn audit_truthfulness(&self) -> Result<TruthAudit> {
        self.audit_truthfulness_with(PaymentRule::Clarke, TruthScope::OthersTruthful)
    }

    pub fn audit_truthfulness_with(&self, rule: PaymentRule, scope: TruthScope) -> Result<TruthAudit> {
        let eng = self.engine();
        let truth = self.truthful_reports();
        let lists = self.report_lists()?;
        let n = self.agents.len();

        let mut budget: u64 = 0;
        for i in 0..n {
            let others: u64 = match scope {
                TruthScope::OthersTruthful => 1,
                TruthScope::AllReports => {
                    1 + (0..n).filter(|j| *j != i).map(|j| lists[j].len() as u64).product::<u64>()
                }
            };
            budget = budget.saturating_add(others.saturating_mul(lists[i].len() as u64));
        }
        if budget > self.limits.max_profiles {
            return Err(Error::ResourceLimit(format!(
                "truthfulness scan needs {budget} profiles, limit {}",
                self.limits.max_profiles
            )));
        }

        let mut checked = 0u64;
        // stage 1 holds the others truthful; stage 2 lets them report anything
        let stages: &[TruthScope] = match scope {
            TruthScope::OthersTruthful => &[TruthScope::OthersTruthful],
            TruthScope::AllReports => &[TruthScope::OthersTruthful, TruthScope::AllReports],
        };
        for stage in stages {
            for i in 0..n {
                let mut profile = truth.clone();
                let mut counters = vec![0usize; n];
                if *stage == TruthScope::AllReports {
                    for j in (0..n).filter(|j| *j != i) {
                        profile[j] = lists[j][0];
                    }
                }
                loop {
                    if let Some(dev) = self.best_deviation(&eng, rule, i, &profile, &lists[i], &mut checked) {
                        return Ok(TruthAudit { truthful: false, witness: Some(dev), profiles_checked: checked });
                    }
                    if *stage == TruthScope::OthersTruthful || !advance(&mut counters, &lists, i) {
                        break;
                    }
                    for j in (0..n).filter(|j| *j != i) {
                        profile[j] = lists[j][counters[j]];
                    }
                }
            }
        }
        Ok(TruthAudit { truthful: true, witness: None, profiles_checked: checked })
    }

    fn best_deviation(
        &self,
        eng: &Engine,
        rule: PaymentRule,
        i: usize,
        profile: &[u64],
        options: &[u64],
        checked: &mut u64,
    ) -> Option<Deviation> {
        let k = self.agents[i].knowledge.to_mask();
        let base = eng.utility(k, &eng.outcome(profile, rule), i);
        let mut trial = profile.to_vec();
        for &d in options {
            if d == k {
                continue;
            }
            *checked += 1;
            trial[i] = d;
            let u = eng.utility(k, &eng.outcome(&trial, rule), i);
            if u > base + TOL {
                return Some(Deviation {
                    agent: i,
                    agent_id: self.agents[i].id.clone(),
                    report: FactSet::from_mask(d),
                    reports: profile.iter().map(|m| FactSet::from_mask(*m)).collect(),
                    truthful_utility: base,
                    deviating_utility: u,
                });
            }
        }
        None
    }

    /// Whether the chosen response attains the least hallucination cost
    /// among responses inside the emergence of the available knowledge.
    pub fn audit_optimality(&self, chosen: &FactSet) -> Result<(bool, OptimalityWitness)> {
        let km = self.model_knowledge();
        let avail = self.context.query.union(&km.intersection(&self.context.truth).intersection(&self.relevant));
        let envelope = self.base.emerge(&avail, &self.context, self.budget)?;
        let mut best: Option<(FactSet, f64)> = None;
        for r in self.responses.iter().filter(|r| r.is_subset(&envelope)) {
            let c = self.hallucination_cost(r)?;
            if best.as_ref().is_none_or(|(_, b)| c < *b) {
                best = Some((r.clone(), c));
            }
        }
        let chosen_cost = self.hallucination_cost(chosen)?;
        let inside = chosen.is_subset(&envelope);
        let optimal = inside && best.as_ref().is_some_and(|(_, b)| chosen_cost == *b);
        Ok((
            optimal,
            OptimalityWitness {
                chosen: chosen.clone(),
                chosen_cost,
                envelope,
                inside_envelope: inside,
                best_feasible_cost: best.as_ref().map(|b| b.1),
                best_feasible: best.map(|b| b.0),
            },
        ))
    }

    pub fn audit(&self, rule: PaymentRule, scope: TruthScope) -> Result<PropertyAudit> {
        let eng = self.engine();
        let truth = self.truthful_reports();
        let out = eng.outcome(&truth, rule);
        let utilities: Vec<f64> =
            (0..self.agents.len()).map(|i| eng.utility(truth[i], &out, i)).collect();
        let payments = PaymentVector::new(out.payments.clone());
        let response = self.responses[out.g].clone();

        let t = self.audit_truthfulness_with(rule, scope)?;
        let reveals_witness = self
            .agents
            .iter()
            .enumerate()
            .find(|(i, a)| !a.knowledge.is_disjoint(&self.relevant) && utilities[*i] < -TOL)
            .map(|(i, a)| ParticipationWitness { agent: i, agent_id: a.id.clone(), utility: utilities[i] });
        let (optimal, ow) = self.audit_optimality(&response)?;

        Ok(PropertyAudit {
            rule,
            scope,
            conserves: payments.sum.abs() <= TOL,
            response,
            utilities,
            truthful: t.truthful,
            truthful_witness: t.witness,
            reveals: reveals_witness.is_none(),
            reveals_witness,
            optimal,
            optimal_witness: if optimal { None } else { Some(ow) },
            payments,
        })
    }

    /// Runs the Clarke mechanism with all four audits, then forces payments
    /// to sum to zero and audits again against arbitrary reports of others.
    pub fn impossibility_witness(&self) -> Result<ImpossibilityReport> {
        if !self.is_nontrivial() {
            return Err(Error::PreconditionViolated(
                "instance is trivial: no two agents disagree on relevant knowledge".into(),
            ));
        }
        Ok(ImpossibilityReport {
            clarke: self.audit(PaymentRule::Clarke, TruthScope::OthersTruthful)?,
            imposed: self.audit(PaymentRule::MeanShifted, TruthScope::AllReports)?,
        })
    }
}

/// Mixed-radix increment over every agent but `skip`.
fn advance(counters: &mut [usize], lists: &[Vec<u64>], skip: usize) -> bool {
    for j in 0..counters.len() {
        if j == skip {
            continue;
        }
        counters[j] += 1;
        if counters[j] < lists[j].len() {
            return true;
        }
        counters[j] = 0;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::knowledge::Context;
    use crate::mechanism::{AgentSpec, Responses};

    #[test]
    fn submask_enumeration() {
        assert_eq!(submasks(0b101), vec![0, 1, 4, 5]);
        assert_eq!(submasks(0), vec![0]);
    }

    #[test]
    fn fox_dog_witness() {
        let inst = fixtures::fox_dog_auction();
        let rep = inst.impossibility_witness().unwrap();
        assert!(!rep.clarke.conserves);
        assert!(rep.clarke.truthful);
        assert!(rep.clarke.reveals);
        assert!(rep.clarke.optimal);
        assert!(rep.clarke_violates_conservation_only());
        assert!(rep.imposed.conserves);
        assert!(rep.imposed_breaks_other_property());
        let w = rep.imposed.truthful_witness.clone().unwrap();
        // re-evaluate the witness from scratch
        let mut dev = w.reports.clone();
        dev[w.agent] = w.report.clone();
        let u_true = inst.utility(PaymentRule::MeanShifted, w.agent, &w.reports);
        let u_dev = inst.utility(PaymentRule::MeanShifted, w.agent, &dev);
        assert_eq!(u_true, w.truthful_utility);
        assert_eq!(u_dev, w.deviating_utility);
        assert!(u_dev > u_true + TOL);
    }

    #[test]
    fn zero_payments_break_truthfulness() {
        // Without transfers the third agent fabricates fact 1 and drops fact
        // 0 from its report, flipping the outcome to the response it prefers.
        let (base, budget) = fixtures::identity_base(3);
        let inst = AuctionInstance::new(
            base,
            budget,
            vec![
                AgentSpec::new("a", FactSet::singleton(0)),
                AgentSpec::new("b", FactSet::singleton(0)),
                AgentSpec::new("c", FactSet::from_ids([0, 1, 2])),
            ],
            Context::new(FactSet::new(), FactSet::from_ids([0, 1])),
            Responses::Explicit(vec![FactSet::from_ids([0, 2]), FactSet::singleton(1)]),
        )
        .unwrap();
        assert!(inst.is_nontrivial());
        let t = inst.audit_truthfulness_with(PaymentRule::Zero, TruthScope::OthersTruthful).unwrap();
        assert!(!t.truthful);
        let w = t.witness.unwrap();
        assert_eq!(w.agent, 2);
        assert_eq!((w.truthful_utility, w.deviating_utility), (1.0, 2.0));
        // the same instance is truthful under Clarke
        assert!(inst.audit_truthfulness().unwrap().truthful);
    }

    #[test]
    fn trivial_instances() {
        let (base, budget) = fixtures::identity_base(2);
        let t = FactSet::from_ids([0, 1]);
        let single = AuctionInstance::new(
            base,
            budget,
            vec![AgentSpec::new("a", FactSet::singleton(0))],
            Context::new(FactSet::new(), t),
            Responses::RelevantSingletons,
        )
        .unwrap();
        assert!(single.audit_truthfulness().unwrap().truthful);
        assert!(matches!(single.impossibility_witness(), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn unknown_truth_breaks_optimality() {
        // Neither agent knows fact 2, which is in T. The welfare optimum
        // still lands on it by chance of J, which optimality flags.
        let (base, budget) = fixtures::identity_base(3);
        let inst = AuctionInstance::new(
            base,
            budget,
            vec![AgentSpec::new("a", FactSet::singleton(0)), AgentSpec::new("b", FactSet::singleton(1))],
            Context::new(FactSet::new(), FactSet::from_ids([0, 1, 2])),
            Responses::RelevantSubsets,
        )
        .unwrap();
        let a = inst.audit(PaymentRule::Clarke, TruthScope::OthersTruthful).unwrap();
        assert_eq!(a.response, FactSet::from_ids([0, 1, 2]));
        assert!(!a.optimal);
        let w = a.optimal_witness.unwrap();
        assert!(!w.inside_envelope);
        assert_eq!(w.best_feasible, Some(FactSet::from_ids([0, 1])));
    }

    #[test]
    fn scan_guard() {
        let inst = fixtures::fox_dog_auction();
        let mut limits = inst.limits();
        limits.max_profiles = 2;
        let small = AuctionInstance::with_limits(
            inst.base().clone(),
            inst.budget(),
            inst.agents().to_vec(),
            inst.context().clone(),
            Responses::Explicit(inst.responses().to_vec()),
            limits,
        )
        .unwrap();
        assert!(matches!(small.audit_truthfulness(), Err(Error::ResourceLimit(_))));
    }
}
