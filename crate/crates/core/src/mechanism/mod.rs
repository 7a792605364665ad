//! Brute-force auction of ideas: agents hold private fact sets, the mechanism
//! picks a response from a finite universe and charges VCG payments.
//!
//! Valuations are negative distances `-|(r ∩ K_i) Δ (T ∩ K_i)|` and the
//! hallucination cost is `|r Δ T|`, both with the symmetric-difference
//! metric. Internally fact sets are `u64` masks, which is what the size
//! guards protect.

mod audit;
mod scenario;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::knowledge::{Context, FactSet, KnowledgeBase};

pub use audit::{
    Deviation, ImpossibilityReport, OptimalityWitness, ParticipationWitness, PaymentRule,
    PropertyAudit, TruthAudit, TruthScope,
};
pub use scenario::{AgentFile, AuctionFile, AuctionScenario, ResponsesFile};

/// Tolerance used for payment signs, utility gains and sums.
pub const TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AgentSpec {
    pub id: String,
    pub knowledge: FactSet,
}

impl AgentSpec {
    pub fn new(id: impl Into<String>, knowledge: FactSet) -> Self {
        AgentSpec { id: id.into(), knowledge }
    }
}

/// How to build the response universe when it is not listed explicitly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Responses {
    /// Every subset of the relevant facts.
    RelevantSubsets,
    /// One relevant fact per response, as in next-token prediction.
    RelevantSingletons,
    Explicit(Vec<FactSet>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub max_facts: usize,
    pub max_agents: usize,
    pub max_responses: usize,
    /// Cap on the number of report profiles a truthfulness scan may visit.
    pub max_profiles: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_facts: 12, max_agents: 5, max_responses: 1 << 16, max_profiles: 1 << 24 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PaymentVector {
    pub payments: Vec<f64>,
    pub sum: f64,
}

impl PaymentVector {
    pub fn new(payments: Vec<f64>) -> Self {
        let sum = payments.iter().sum();
        PaymentVector { payments, sum }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WelfareOptimum {
    pub response: FactSet,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuctionInstance {
    base: KnowledgeBase,
    budget: u64,
    agents: Vec<AgentSpec>,
    context: Context,
    responses: Vec<FactSet>,
    relevant: FactSet,
    limits: Limits,
}

impl AuctionInstance {
    pub fn new(
        base: KnowledgeBase,
        budget: u64,
        agents: Vec<AgentSpec>,
        context: Context,
        responses: Responses,
    ) -> Result<Self> {
        Self::with_limits(base, budget, agents, context, responses, Limits::default())
    }

    pub fn with_limits(
        base: KnowledgeBase,
        budget: u64,
        agents: Vec<AgentSpec>,
        context: Context,
        responses: Responses,
        limits: Limits,
    ) -> Result<Self> {
        let n = base.space().len();
        if n > limits.max_facts.min(64) {
            return Err(Error::ResourceLimit(format!("{n} facts exceed the limit of {}", limits.max_facts)));
        }
        if agents.len() > limits.max_agents {
            return Err(Error::ResourceLimit(format!(
                "{} agents exceed the limit of {}",
                agents.len(),
                limits.max_agents
            )));
        }
        for a in &agents {
            base.space().check(&a.knowledge)?;
        }
        base.space().check(&context.facts())?;
        let relevant = base.relevant(&context, budget)?;
        let mut responses = match responses {
            Responses::RelevantSubsets => {
                if relevant.len() > 16 || (1usize << relevant.len()) > limits.max_responses {
                    return Err(Error::ResourceLimit(format!(
                        "2^{} responses exceed the limit of {}",
                        relevant.len(),
                        limits.max_responses
                    )));
                }
                let ids = relevant.to_vec();
                (0u32..1 << ids.len())
                    .map(|m| ids.iter().enumerate().filter(|(b, _)| m >> b & 1 == 1).map(|(_, i)| *i).collect())
                    .collect()
            }
            Responses::RelevantSingletons => relevant.iter().map(FactSet::singleton).collect(),
            Responses::Explicit(list) => {
                for r in &list {
                    base.space().check(r)?;
                }
                list
            }
        };
        responses.sort();
        responses.dedup();
        if responses.is_empty() {
            return Err(invalid("response universe is empty"));
        }
        if responses.len() > limits.max_responses {
            return Err(Error::ResourceLimit(format!(
                "{} responses exceed the limit of {}",
                responses.len(),
                limits.max_responses
            )));
        }
        Ok(AuctionInstance { base, budget, agents, context, responses, relevant, limits })
    }

    pub fn base(&self) -> &KnowledgeBase {
        &self.base
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn context(&self) -> &Context {
        &self.context
    }

    /// The response universe in canonical order.
    pub fn responses(&self) -> &[FactSet] {
        &self.responses
    }

    pub fn relevant(&self) -> &FactSet {
        &self.relevant
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    fn response_index(&self, r: &FactSet) -> Result<usize> {
        self.responses
            .binary_search(r)
            .map_err(|_| invalid(format!("response {r:?} is not in the response universe")))
    }

    fn agent_index(&self, id: &str) -> Result<usize> {
        self.agents
            .iter()
            .position(|a| a.id == id)
            .ok_or_else(|| invalid(format!("unknown agent {id:?}")))
    }

    /// `v_i(r, θ_i) = -|(r ∩ K_i) Δ (T ∩ K_i)|`.
    pub fn valuation(&self, agent: &AgentSpec, response: &FactSet) -> Result<f64> {
        self.response_index(response)?;
        Ok(value(agent.knowledge.to_mask(), response.to_mask(), self.context.truth.to_mask()))
    }

    /// `J(r, q) = |r Δ T(q)|`.
    pub fn hallucination_cost(&self, response: &FactSet) -> Result<f64> {
        self.base.space().check(response)?;
        Ok(response.symmetric_difference(&self.context.truth).len() as f64)
    }

    /// True reports of every agent as masks.
    pub(crate) fn truthful_reports(&self) -> Vec<u64> {
        self.agents.iter().map(|a| a.knowledge.to_mask()).collect()
    }

    pub(crate) fn engine(&self) -> Engine {
        let t = self.context.truth.to_mask();
        let responses: Vec<u64> = self.responses.iter().map(FactSet::to_mask).collect();
        let costs = responses.iter().map(|r| (r ^ t).count_ones() as f64).collect();
        Engine { t, responses, costs }
    }

    /// Exhaustive argmax of `Σ_{i ≠ exclude} v_i(r) - J(r)`, first response
    /// in canonical order on ties.
    pub fn welfare_optimum(&self, exclude: Option<&str>) -> Result<WelfareOptimum> {
        let skip = exclude.map(|id| self.agent_index(id)).transpose()?;
        let (g, value) = self.engine().argmax(&self.truthful_reports(), skip);
        Ok(WelfareOptimum { response: self.responses[g].clone(), value })
    }

    pub fn clarke_payments(&self) -> PaymentVector {
        let out = self.engine().outcome(&self.truthful_reports(), PaymentRule::Clarke);
        PaymentVector::new(out.payments)
    }

    /// Agents whose Clarke payment is strictly positive.
    pub fn pivotal_agents(&self) -> Vec<usize> {
        let p = self.clarke_payments();
        (0..self.agents.len()).filter(|i| p.payments[*i] > TOL).collect()
    }

    /// Two agents hold relevant knowledge and disagree on relevant facts.
    pub fn is_nontrivial(&self) -> bool {
        let rel = &self.relevant;
        let touches = |a: &FactSet| !a.is_disjoint(rel);
        self.agents.iter().enumerate().any(|(i, a)| {
            self.agents[i + 1..].iter().any(|b| {
                touches(&a.knowledge)
                    && touches(&b.knowledge)
                    && touches(&a.knowledge.symmetric_difference(&b.knowledge))
            })
        })
    }

    /// Union of the agents' knowledge, `K_M`.
    pub fn model_knowledge(&self) -> FactSet {
        self.agents.iter().fold(FactSet::new(), |acc, a| acc.union(&a.knowledge))
    }
}

pub(crate) fn value(k: u64, r: u64, t: u64) -> f64 {
    -(((r & k) ^ (t & k)).count_ones() as f64)
}

pub(crate) struct Outcome {
    pub g: usize,
    pub payments: Vec<f64>,
}

pub(crate) struct Engine {
    t: u64,
    pub responses: Vec<u64>,
    pub costs: Vec<f64>,
}

impl Engine {
    pub fn argmax(&self, reports: &[u64], exclude: Option<usize>) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (idx, r) in self.responses.iter().enumerate() {
            let mut w = -self.costs[idx];
            for (i, k) in reports.iter().enumerate() {
                if Some(i) != exclude {
                    w += value(*k, *r, self.t);
                }
            }
            if w > best.1 {
                best = (idx, w);
            }
        }
        best
    }

    pub fn outcome(&self, reports: &[u64], rule: PaymentRule) -> Outcome {
        let (g, _) = self.argmax(reports, None);
        if rule == PaymentRule::Zero {
            return Outcome { g, payments: vec![0.0; reports.len()] };
        }
        let r = self.responses[g];
        let mut payments: Vec<f64> = (0..reports.len())
            .map(|i| {
                let h = self.argmax(reports, Some(i)).1;
                let others: f64 = reports
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, k)| value(*k, r, self.t))
                    .sum();
                h - (others - self.costs[g])
            })
            .collect();
        if rule == PaymentRule::MeanShifted && !payments.is_empty() {
            let mean = payments.iter().sum::<f64>() / payments.len() as f64;
            payments.iter_mut().for_each(|p| *p -= mean);
        }
        Outcome { g, payments }
    }

    /// Utility of an agent with true knowledge `k` at the chosen response,
    /// using the nonnegative valuation `|K| + v`.
    pub fn utility(&self, k: u64, out: &Outcome, agent: usize) -> f64 {
        k.count_ones() as f64 + value(k, self.responses[out.g], self.t) - out.payments[agent]
    }
}
