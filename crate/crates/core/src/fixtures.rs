//! Reference instances and seeded generators shared by tests, the self test
//! and the command line.

use rand::Rng;

use crate::knowledge::{Context, CotTrace, FactSet, KnowledgeBase, KnowledgeSpace, Rule, RuleEntry, RuleSet};
use crate::mechanism::{AgentSpec, AuctionInstance, Responses};

/// `n` anonymous facts with one identity rule of cost 1. Returns the base
/// and the budget (1) at which every fact can reach itself.
pub fn identity_base(n: usize) -> (KnowledgeBase, u64) {
    let space = KnowledgeSpace::anonymous(n).expect("n >= 1");
    let entries = (0..n)
        .map(|i| RuleEntry { premises: FactSet::singleton(i), conclusions: FactSet::singleton(i) })
        .collect();
    let rule = Rule::new("id", 1, entries).expect("valid identity rule");
    (KnowledgeBase::new(space, RuleSet::new(vec![rule])).expect("rule inside space"), 1)
}

/// "The quick brown ___": both `fox` and `dog` are true continuations, the
/// response is one token, one agent knows each.
pub fn fox_dog_auction() -> AuctionInstance {
    let space = KnowledgeSpace::new(["brown", "fox", "dog"]).expect("distinct names");
    let entries = (0..3)
        .map(|i| RuleEntry { premises: FactSet::singleton(i), conclusions: FactSet::singleton(i) })
        .collect();
    let rule = Rule::new("id", 1, entries).expect("valid rule");
    let base = KnowledgeBase::new(space, RuleSet::new(vec![rule])).expect("rule inside space");
    AuctionInstance::new(
        base,
        1,
        vec![AgentSpec::new("fox-head", FactSet::singleton(1)), AgentSpec::new("dog-head", FactSet::singleton(2))],
        Context::new(FactSet::singleton(0), FactSet::from_ids([1, 2])),
        Responses::Explicit(vec![FactSet::singleton(1), FactSet::singleton(2)]),
    )
    .expect("fox/dog instance within limits")
}

/// Non-trivial instances over `2..=max_facts` facts with 2 or 3 agents, the
/// identity rule, empty query facts, every nonempty truth set, and both the
/// singleton and the subset response universes. Only instances whose truth
/// is covered by the agents' joint knowledge are kept.
pub fn mechanism_family(max_facts: usize) -> Vec<AuctionInstance> {
    let mut out = Vec::new();
    for n in 2..=max_facts {
        let (base, budget) = identity_base(n);
        let sets = 1u64 << n;
        for t in 1..sets {
            for agents in 2..=3 {
                for profile in multisets(sets, agents) {
                    let joint = profile.iter().fold(0, |a, k| a | k);
                    if t & !joint != 0 {
                        continue;
                    }
                    for responses in [Responses::RelevantSingletons, Responses::RelevantSubsets] {
                        let specs = profile
                            .iter()
                            .enumerate()
                            .map(|(i, k)| AgentSpec::new(format!("a{i}"), FactSet::from_mask(*k)))
                            .collect();
                        let ctx = Context::new(FactSet::new(), FactSet::from_mask(t));
                        let inst = AuctionInstance::new(base.clone(), budget, specs, ctx, responses)
                            .expect("family instance within limits");
                        if inst.is_nontrivial() {
                            out.push(inst);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Nondecreasing sequences of length `k` over `0..n`.
fn multisets(n: u64, k: usize) -> Vec<Vec<u64>> {
    fn rec(n: u64, k: usize, start: u64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for v in start..n {
            cur.push(v);
            rec(n, k, v, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, 0, &mut Vec::new(), &mut out);
    out
}

pub fn random_subset<R: Rng>(rng: &mut R, of: &FactSet, p: f64) -> FactSet {
    of.iter().filter(|_| rng.random_bool(p)).collect()
}

/// A random finite knowledge base with its context and a budget.
#[derive(Clone, Debug)]
pub struct RandomKnowledge {
    pub base: KnowledgeBase,
    pub context: Context,
    pub budget: u64,
}

pub fn random_knowledge<R: Rng>(rng: &mut R) -> RandomKnowledge {
    let n = rng.random_range(3..=7);
    let space = KnowledgeSpace::anonymous(n).expect("n >= 3");
    let all = space.all();
    let mut rules = Vec::new();
    for r in 0..rng.random_range(1..=4) {
        let mut entries: Vec<RuleEntry> = Vec::new();
        for _ in 0..rng.random_range(1..=3) {
            let premises = if rng.random_bool(0.1) {
                FactSet::new()
            } else {
                let mut p = random_subset(rng, &all, 0.3);
                if p.is_empty() {
                    p.insert(rng.random_range(0..n));
                }
                p
            };
            if entries.iter().any(|e| e.premises == premises) {
                continue;
            }
            let mut conclusions = random_subset(rng, &all, 0.25);
            conclusions.insert(rng.random_range(0..n));
            entries.push(RuleEntry { premises, conclusions });
        }
        rules.push(Rule::new(format!("r{r}"), rng.random_range(1..=2), entries).expect("distinct premises"));
    }
    let base = KnowledgeBase::new(space, RuleSet::new(rules)).expect("rules inside space");
    let context = Context::new(random_subset(rng, &all, 0.25), random_subset(rng, &all, 0.35));
    RandomKnowledge { base, context, budget: rng.random_range(0..=4) }
}

/// A valid chain of thought: `K_0` inside a random baseline, every later
/// step a random part of the newly emerged relevant facts.
pub fn random_trace<R: Rng>(rng: &mut R, k: &RandomKnowledge) -> CotTrace {
    let all = k.base.space().all();
    let baseline = random_subset(rng, &all, 0.4);
    let rel = k.base.relevant(&k.context, k.budget).expect("context inside space");
    let mut steps = vec![random_subset(rng, &baseline, 0.7)];
    let mut prior = steps[0].clone();
    for _ in 0..rng.random_range(0..=4) {
        let emerged = k.base.emerge(&prior, &k.context, k.budget).expect("prior inside space");
        let fresh = emerged.difference(&prior).intersection(&rel);
        let step = random_subset(rng, &fresh, 0.7);
        prior.extend(&step);
        steps.push(step);
    }
    CotTrace { baseline, steps }
}
