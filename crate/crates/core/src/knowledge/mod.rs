//! Finite knowledge calculus: facts, cost-tagged rules, relevance, the
//! emergence operator and its fixed point, and counting measures.
//!
//! A rule is an explicit relation from premise sets to conclusion sets. It
//! fires on `A` for every entry whose premises are contained in `A`, and its
//! image `f(A)` is the union of the fired conclusions. Compositions of rules
//! cost the sum of their parts.

mod audit;
mod scenario;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use audit::{CotTrace, CotVerdict, Verdict};
pub(crate) use scenario::read_text_file;
pub use scenario::{
    ContextFile, EntryFile, KnowledgeFile, KnowledgeRef, KnowledgeScenario, ReasoningFile, ReasoningScenario, RuleFile,
};

/// Canonical fact set: sorted, duplicate free.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactSet(BTreeSet<usize>);

impl FactSet {
    pub fn new() -> Self {
        FactSet(BTreeSet::new())
    }

    pub fn from_ids(ids: impl IntoIterator<Item = usize>) -> Self {
        FactSet(ids.into_iter().collect())
    }

    pub fn singleton(id: usize) -> Self {
        FactSet::from_ids([id])
    }

    pub fn contains(&self, id: usize) -> bool {
        self.0.contains(&id)
    }

    pub fn insert(&mut self, id: usize) -> bool {
        self.0.insert(id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn is_subset(&self, other: &FactSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn union(&self, other: &FactSet) -> FactSet {
        FactSet(self.0.union(&other.0).copied().collect())
    }

    pub fn intersection(&self, other: &FactSet) -> FactSet {
        FactSet(self.0.intersection(&other.0).copied().collect())
    }

    pub fn difference(&self, other: &FactSet) -> FactSet {
        FactSet(self.0.difference(&other.0).copied().collect())
    }

    pub fn symmetric_difference(&self, other: &FactSet) -> FactSet {
        FactSet(self.0.symmetric_difference(&other.0).copied().collect())
    }

    pub fn is_disjoint(&self, other: &FactSet) -> bool {
        self.0.is_disjoint(&other.0)
    }

    pub fn extend(&mut self, other: &FactSet) {
        self.0.extend(other.0.iter().copied());
    }

    /// Sorted index sequence; the canonical encoding used for tie-breaks.
    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn to_mask(&self) -> u64 {
        self.iter().fold(0u64, |m, i| m | (1u64 << i))
    }

    pub fn from_mask(mask: u64) -> FactSet {
        FactSet((0..64).filter(|i| mask >> i & 1 == 1).collect())
    }
}

impl fmt::Debug for FactSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.iter()).finish()
    }
}

impl FromIterator<usize> for FactSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        FactSet(iter.into_iter().collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeSpace {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl KnowledgeSpace {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(invalid("knowledge space needs at least one fact"));
        }
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(invalid(format!("duplicate fact identifier {n:?}")));
            }
        }
        Ok(KnowledgeSpace { names, index })
    }

    /// Facts named `f0`, `f1`, ...
    pub fn anonymous(n: usize) -> Result<Self> {
        KnowledgeSpace::new((0..n).map(|i| format!("f{i}")))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| invalid(format!("unknown fact {name:?}")))
    }

    pub fn set<S: AsRef<str>>(&self, names: &[S]) -> Result<FactSet> {
        names.iter().map(|n| self.id(n.as_ref())).collect()
    }

    pub fn all(&self) -> FactSet {
        FactSet::from_ids(0..self.len())
    }

    pub fn check(&self, a: &FactSet) -> Result<()> {
        match a.iter().find(|i| *i >= self.len()) {
            Some(bad) => Err(invalid(format!("fact {bad} outside a space of {}", self.len()))),
            None => Ok(()),
        }
    }

    pub fn names_of(&self, a: &FactSet) -> Vec<String> {
        a.iter().map(|i| self.names[i].clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleEntry {
    pub premises: FactSet,
    pub conclusions: FactSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub id: String,
    pub cost: u64,
    pub entries: Vec<RuleEntry>,
}

impl Rule {
    pub fn new(id: impl Into<String>, cost: u64, entries: Vec<RuleEntry>) -> Result<Self> {
        let id = id.into();
        if cost == 0 {
            return Err(invalid(format!("rule {id}: cost must be at least 1")));
        }
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.premises.clone()) {
                return Err(invalid(format!("rule {id}: premise set {:?} mapped twice", e.premises)));
            }
        }
        Ok(Rule { id, cost, entries })
    }

    /// Single-entry rule.
    pub fn single(id: impl Into<String>, cost: u64, premises: FactSet, conclusions: FactSet) -> Result<Self> {
        Rule::new(id, cost, vec![RuleEntry { premises, conclusions }])
    }

    /// `f(A)`: union of conclusions of every entry whose premises lie in `A`.
    pub fn apply(&self, a: &FactSet) -> FactSet {
        let mut out = FactSet::new();
        for e in &self.entries {
            if e.premises.is_subset(a) {
                out.extend(&e.conclusions);
            }
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Self {
        RuleSet { rules }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn total_cost(&self) -> u64 {
        self.rules.iter().map(|r| r.cost).sum()
    }
}

/// Query facts `K(q)` and ground truth `T(q)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Context {
    pub query: FactSet,
    pub truth: FactSet,
}

impl Context {
    pub fn new(query: FactSet, truth: FactSet) -> Self {
        Context { query, truth }
    }

    /// `Q = K(q) ∪ T(q)`.
    pub fn facts(&self) -> FactSet {
        self.query.union(&self.truth)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKind {
    Counting,
    /// Placeholder for measures computed outside the fact calculus (the
    /// transformer energy); rejected here.
    DiscountedEnergyExternal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub kind: MeasureKind,
    pub scale: f64,
}

impl MeasureSpec {
    pub fn counting() -> Self {
        MeasureSpec { kind: MeasureKind::Counting, scale: 1.0 }
    }

    pub fn new(kind: MeasureKind, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid(format!("measure scale must be positive, got {scale}")));
        }
        Ok(MeasureSpec { kind, scale })
    }
}

/// Closure result with the number of emergence rounds it took.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Closure {
    pub facts: FactSet,
    pub iterations: usize,
}

/// A space together with its rules; every operation of the calculus hangs
/// off this type.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeBase {
    space: KnowledgeSpace,
    rules: RuleSet,
}

impl KnowledgeBase {
    pub fn new(space: KnowledgeSpace, rules: RuleSet) -> Result<Self> {
        for r in rules.rules() {
            for e in &r.entries {
                space.check(&e.premises)?;
                space.check(&e.conclusions)?;
            }
        }
        Ok(KnowledgeBase { space, rules })
    }

    pub fn space(&self) -> &KnowledgeSpace {
        &self.space
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    /// Budget at which no further derivation is possible.
    pub fn saturation_budget(&self) -> u64 {
        self.rules.total_cost() * self.space.len() as u64
    }

    /// Union of `f(A)` over every composition `f` of one or more rules whose
    /// summed cost fits the budget.
    pub fn images(&self, a: &FactSet, budget: u64) -> FactSet {
        let mut best: BTreeMap<FactSet, u64> = BTreeMap::new();
        let mut heap = BinaryHeap::new();
        let mut out = FactSet::new();
        heap.push(Reverse((0u64, a.clone(), true)));
        while let Some(Reverse((cost, set, is_start))) = heap.pop() {
            if !is_start && best.get(&set).is_some_and(|c| *c < cost) {
                continue;
            }
            for r in self.rules.rules() {
                let next_cost = cost + r.cost;
                if next_cost > budget {
                    continue;
                }
                let img = r.apply(&set);
                if best.get(&img).is_some_and(|c| *c <= next_cost) {
                    continue;
                }
                out.extend(&img);
                best.insert(img.clone(), next_cost);
                heap.push(Reverse((next_cost, img, false)));
            }
        }
        out
    }

    /// `R_C(Q)`: facts some admissible map sends into `Q`, plus the facts
    /// `Q` itself maps to.
    pub fn relevant(&self, q: &Context, budget: u64) -> Result<FactSet> {
        let qf = q.facts();
        self.space.check(&qf)?;
        let mut out = self.images(&qf, budget);
        for k in 0..self.space.len() {
            if !out.contains(k) && !self.images(&FactSet::singleton(k), budget).is_disjoint(&qf) {
                out.insert(k);
            }
        }
        Ok(out)
    }

    pub fn independent(&self, a: &FactSet, b: &FactSet, budget: u64) -> Result<bool> {
        self.space.check(a)?;
        self.space.check(b)?;
        Ok(self.images(a, budget).is_disjoint(b) && a.is_disjoint(&self.images(b, budget)))
    }

    pub fn emerge(&self, a: &FactSet, q: &Context, budget: u64) -> Result<FactSet> {
        self.space.check(a)?;
        let rel = self.relevant(q, budget)?;
        Ok(self.emerge_within(a, &rel, budget))
    }

    fn emerge_within(&self, a: &FactSet, rel: &FactSet, budget: u64) -> FactSet {
        a.union(&self.images(a, budget).intersection(rel))
    }

    pub fn closure(&self, a: &FactSet, q: &Context, budget: u64) -> Result<FactSet> {
        Ok(self.closure_counted(a, q, budget)?.facts)
    }

    /// Iterates emergence to its least fixed point above `a`.
    pub fn closure_counted(&self, a: &FactSet, q: &Context, budget: u64) -> Result<Closure> {
        self.space.check(a)?;
        let rel = self.relevant(q, budget)?;
        Ok(self.closure_within(a, &rel, budget))
    }

    fn closure_within(&self, a: &FactSet, rel: &FactSet, budget: u64) -> Closure {
        let mut cur = a.clone();
        let mut iterations = 0;
        loop {
            let next = self.emerge_within(&cur, rel, budget);
            if next == cur {
                return Closure { facts: cur, iterations };
            }
            cur = next;
            iterations += 1;
        }
    }

    pub fn equivalent(&self, a: &FactSet, b: &FactSet, q: &Context, budget: u64) -> Result<bool> {
        Ok(self.closure(a, q, budget)? == self.closure(b, q, budget)?)
    }

    pub fn measure(&self, a: &FactSet, q: &Context, budget: u64, spec: &MeasureSpec) -> Result<f64> {
        self.space.check(a)?;
        let rel = self.relevant(q, budget)?;
        self.measure_within(a, &rel, budget, spec)
    }

    fn measure_within(&self, a: &FactSet, rel: &FactSet, budget: u64, spec: &MeasureSpec) -> Result<f64> {
        match spec.kind {
            MeasureKind::Counting => {
                let hits = self.closure_within(a, rel, budget).facts.intersection(rel).len();
                Ok(spec.scale * (self.space.len() as f64).ln() * hits as f64)
            }
            MeasureKind::DiscountedEnergyExternal => Err(invalid(
                "the discounted-energy measure acts on transformer inputs, not fact sets",
            )),
        }
    }

    /// Checks `μ(cl(A)) = μ(A)` at the saturation budget.
    pub fn information_preserved(&self, a: &FactSet, q: &Context, spec: &MeasureSpec) -> Result<bool> {
        let budget = self.saturation_budget();
        let closed = self.closure(a, q, budget)?;
        Ok(self.measure(&closed, q, budget, spec)? == self.measure(a, q, budget, spec)?)
    }

    /// `B*_C`, the closure of the authorized baseline.
    pub fn safety_envelope(&self, baseline: &FactSet, q: &Context, budget: u64) -> Result<FactSet> {
        self.closure(baseline, q, budget)
    }

    pub fn creativity_bounded(
        &self,
        response: &FactSet,
        baseline: &FactSet,
        q: &Context,
        budget: u64,
    ) -> Result<bool> {
        self.space.check(response)?;
        Ok(response.is_subset(&self.safety_envelope(baseline, q, budget)?))
    }

    /// Authorized baseline `K(q) ∪ (K_M ∩ T(q) ∩ R_C(Q))` for a model that
    /// knows `model`.
    pub fn authorized_baseline(&self, model: &FactSet, q: &Context, budget: u64) -> Result<FactSet> {
        self.space.check(model)?;
        let rel = self.relevant(q, budget)?;
        Ok(q.query.union(&model.intersection(&q.truth).intersection(&rel)))
    }

    pub(crate) fn require(&self, cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
        if cond {
            Ok(())
        } else {
            Err(Error::TraceInvalid(msg()))
        }
    }
}
