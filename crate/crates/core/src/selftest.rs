//! Golden values and reduced property sweeps, runnable from the binary.
//!
//! Every check carries the tolerance it is judged by. Sizes for the sweeps
//! are smaller than the full test suite so the whole run takes seconds.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attribution::{attribute, DEFAULT_TOL};
use crate::error::Result;
use crate::fixtures::{self, random_knowledge, random_subset, random_trace};
use crate::knowledge::MeasureSpec;
use crate::mechanism::{AuctionInstance, PaymentRule, TruthScope, TOL};
use crate::microtransformer::{emergence_states, lse_gap_from_logits, poe_distribution, semantic_energy, TransformerSpec};
use crate::numerics::{max_abs_diff, softmax, ProbVec};
use crate::scoring::{aggregate_mixture, contributions, propriety_scan, random_belief, random_profile, BeliefProfile, ScoringRule};

pub const GOLDEN_ALPHA: [f64; 3] = [0.25, 0.25, 0.50];
pub const GOLDEN_H1: [f64; 2] = [0.0, 1.5];
pub const GOLDEN_H2: [f64; 2] = [0.6, 0.0];
pub const GOLDEN_LOGITS: [f64; 6] = [0.0, -0.03, 0.21, 1.13, 1.31, 0.52];
pub const GOLDEN_PI: [f64; 6] = [0.086, 0.083, 0.106, 0.265, 0.317, 0.144];
pub const GOLDEN_HEAD_LOGITS: [[f64; 6]; 2] = [[0.0, 0.0, 0.0, 0.0, 1.5, 0.0], [0.0, 0.0, 0.0, 0.0, 0.0, 0.6]];
pub const GOLDEN_BETA: [f64; 2] = [0.55, 0.42];
pub const GOLDEN_FOX_RECONSTRUCTED: f64 = 0.325;
pub const GOLDEN_MIXTURE_FOX: f64 = 0.3105;
pub const GOLDEN_ENERGY: f64 = 2.61;
pub const GOLDEN_X1_ROW3: [f64; 5] = [-0.03, 0.21, 1.13, 1.31, 0.52];
pub const REPORTED_GAMMA_RANGE: (f64, f64) = (1.7, 2.0);

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub criterion: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

struct Sink {
    criterion: u8,
    checks: Vec<Check>,
}

impl Sink {
    fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { criterion: self.criterion, name: name.into(), passed, detail: detail.into() });
    }

    fn close(&mut self, name: &str, got: &[f64], want: &[f64], tol: f64) {
        let d = max_abs_diff(got, want);
        self.check(name, d <= tol, format!("got {got:?}, want {want:?} within {tol:e} (max diff {d:.3e})"));
    }

    fn fail(&mut self, name: &str, e: crate::Error) {
        self.check(name, false, format!("error: {e}"));
    }
}

pub fn run(seed: u64) -> SelftestReport {
    let mut s = Sink { criterion: 0, checks: Vec::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = TransformerSpec::builtin();
    type Step = fn(&mut Sink, &TransformerSpec, &mut ChaCha8Rng) -> Result<()>;
    let steps: [(u8, &str, Step); 9] = [
        (1, "forward", forward),
        (2, "gap", gap),
        (3, "poe", poe),
        (4, "attribution", attribution),
        (5, "mixture", mixture),
        (6, "energy", energy),
        (7, "mechanism", mechanism),
        (8, "scoring", scoring),
        (9, "knowledge", knowledge),
    ];
    for (c, name, f) in steps {
        s.criterion = c;
        if let Err(e) = f(&mut s, &spec, &mut rng) {
            s.fail(name, e);
        }
    }
    SelftestReport { seed, checks: s.checks }
}

fn forward(s: &mut Sink, spec: &TransformerSpec, _: &mut ChaCha8Rng) -> Result<()> {
    let tokens = spec.parse_tokens("The quick brown")?;
    let start = Instant::now();
    let tr = spec.forward(&tokens)?;
    let elapsed = start.elapsed();
    for h in 0..2 {
        s.close(&format!("alpha head {}", h + 1), &tr.last_step(0, h).weights, &GOLDEN_ALPHA, 1e-3);
    }
    s.close("context head 1", &tr.last_step(0, 0).context, &GOLDEN_H1, 1e-12);
    s.close("context head 2", &tr.last_step(0, 1).context, &GOLDEN_H2, 1e-12);
    s.close("logits", &tr.logits.total, &GOLDEN_LOGITS, 5e-3);
    s.close("distribution", &tr.distribution, &GOLDEN_PI, 5e-3);
    let top = spec.token_name(tr.argmax());
    s.check("argmax", top == "fox", format!("argmax {top}"));
    s.check("runtime", elapsed.as_secs_f64() < 0.010, format!("{:.3} ms", elapsed.as_secs_f64() * 1e3));
    Ok(())
}

fn gap(s: &mut Sink, _: &TransformerSpec, _: &mut ChaCha8Rng) -> Result<()> {
    let logits: Vec<Vec<f64>> = GOLDEN_HEAD_LOGITS.iter().map(|l| l.to_vec()).collect();
    let r = lse_gap_from_logits(&logits, 4)?;
    let (e15, e06) = (1.5f64.exp(), 0.6f64.exp());
    let oracle = (5.0 + e15).ln() + (5.0 + e06).ln() - (4.0 + e15 + e06).ln();
    s.check("gamma formula", (r.gamma - oracle).abs() <= 1e-9, format!("gamma {} vs {}", r.gamma, oracle));
    s.check("gamma positive", r.gamma > 0.0, format!("gamma {}", r.gamma));
    let (lo, hi) = REPORTED_GAMMA_RANGE;
    s.check("gamma range", (lo..=hi).contains(&r.gamma), format!("gamma {} in [{lo}, {hi}]", r.gamma));
    s.check(
        "payment identity",
        (r.payment_sum() - r.gamma).abs() <= 1e-12,
        format!("p_0 + sum p_h = {}", r.payment_sum()),
    );
    Ok(())
}

fn poe(s: &mut Sink, _: &TransformerSpec, rng: &mut ChaCha8Rng) -> Result<()> {
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let h = rng.random_range(1..=4);
        let v = rng.random_range(2..=10);
        let logits: Vec<Vec<f64>> =
            (0..h).map(|_| (0..v).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let sum: Vec<f64> = (0..v).map(|k| logits.iter().map(|l| l[k]).sum()).collect();
        worst = worst.max(max_abs_diff(&poe_distribution(&logits)?, &softmax(&sum)?));
    }
    s.check("softmax of sum", worst < 1e-12, format!("max deviation {worst:.3e} over 1000 instances"));
    Ok(())
}

fn builtin_heads(spec: &TransformerSpec) -> Result<(Vec<ProbVec>, ProbVec)> {
    let tr = spec.forward(&[1, 2, 3])?;
    Ok((tr.head_distributions()?, tr.distribution))
}

fn attribution(s: &mut Sink, spec: &TransformerSpec, rng: &mut ChaCha8Rng) -> Result<()> {
    let (heads, fin) = builtin_heads(spec)?;
    let r = attribute(&heads, &fin, DEFAULT_TOL)?;
    s.close("beta", &r.beta_hat, &GOLDEN_BETA, 0.01);
    s.close("reconstructed fox", &[r.reconstructed[4]], &[GOLDEN_FOX_RECONSTRUCTED], 5e-3);
    s.check("residual", r.residual_norm > 1e-6, format!("norm {}", r.residual_norm));
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let h = rng.random_range(1..=4);
        let v = rng.random_range(h + 1..=10);
        let hs: Vec<ProbVec> = (0..h).map(|_| random_belief(rng, v)).collect();
        let w = random_belief(rng, h);
        let mix = aggregate_mixture(&BeliefProfile::new(w.to_vec(), hs.clone())?);
        worst = worst.max(attribute(&hs, &mix, DEFAULT_TOL)?.residual_norm);
    }
    s.check("exact mixtures", worst < 1e-10, format!("max residual {worst:.3e} over 100 instances"));
    Ok(())
}

fn mixture(s: &mut Sink, spec: &TransformerSpec, _: &mut ChaCha8Rng) -> Result<()> {
    let (heads, _) = builtin_heads(spec)?;
    let m = aggregate_mixture(&BeliefProfile::equal_weights(heads)?);
    s.close("fox entry", &[m[4]], &[GOLDEN_MIXTURE_FOX], 1e-3);
    Ok(())
}

fn energy(s: &mut Sink, spec: &TransformerSpec, _: &mut ChaCha8Rng) -> Result<()> {
    let x0 = spec.forward(&[1, 2, 3])?.input();
    let e = semantic_energy(std::slice::from_ref(&x0), spec, 1, 0.5)?;
    s.close("mu_1", &[e], &[GOLDEN_ENERGY], 1e-12);
    let states = emergence_states(std::slice::from_ref(&x0), spec, 1)?;
    s.check("two states", states.len() == 2 && states[0] == x0, format!("{} states", states.len()));
    if let Some(x1) = states.get(1) {
        s.close("X_1 row 3", x1.row(2), &GOLDEN_X1_ROW3, 5e-3);
    }
    Ok(())
}

/// Clarke properties on one instance and, with two or more pivotal agents,
/// the zero-sum re-audit. Returns a description of the first failure.
pub fn mechanism_instance_check(inst: &AuctionInstance) -> Result<Option<String>> {
    let pivotal = inst.pivotal_agents().len();
    if pivotal >= 2 {
        let rep = inst.impossibility_witness()?;
        let c = &rep.clarke;
        if c.payments.payments.iter().any(|p| *p < -TOL) {
            return Ok(Some(format!("negative Clarke payment {:?}", c.payments.payments)));
        }
        if !(c.truthful && c.reveals && c.optimal) {
            return Ok(Some(format!("Clarke audit {:?}", (c.truthful, c.reveals, c.optimal))));
        }
        if c.payments.sum <= TOL {
            return Ok(Some(format!("payment sum {} with {pivotal} pivotal agents", c.payments.sum)));
        }
        if !rep.imposed_breaks_other_property() {
            return Ok(Some("zero-sum payments kept truthfulness and optimality".into()));
        }
    } else {
        let c = inst.audit(PaymentRule::Clarke, TruthScope::OthersTruthful)?;
        if c.payments.payments.iter().any(|p| *p < -TOL) || !(c.truthful && c.reveals && c.optimal) {
            return Ok(Some(format!("Clarke audit {:?}", (c.truthful, c.reveals, c.optimal))));
        }
    }
    Ok(None)
}

fn mechanism(s: &mut Sink, _: &TransformerSpec, _: &mut ChaCha8Rng) -> Result<()> {
    let family = fixtures::mechanism_family(3);
    let mut multi = 0;
    let mut failure = None;
    for inst in &family {
        if inst.pivotal_agents().len() >= 2 {
            multi += 1;
        }
        if let Some(f) = mechanism_instance_check(inst)? {
            failure.get_or_insert(f);
        }
    }
    let detail = match &failure {
        Some(f) => f.clone(),
        None => format!("{} instances, {multi} with two or more pivotal agents", family.len()),
    };
    s.check("family up to 3 facts", failure.is_none() && multi > 0, detail);
    let fd = fixtures::fox_dog_auction().impossibility_witness()?;
    s.check(
        "fox/dog",
        fd.clarke_violates_conservation_only() && fd.imposed_breaks_other_property(),
        format!("payments {:?}", fd.clarke.payments.payments),
    );
    Ok(())
}

fn scoring(s: &mut Sink, _: &TransformerSpec, rng: &mut ChaCha8Rng) -> Result<()> {
    for rule in [ScoringRule::Log, ScoringRule::Brier] {
        for dim in 2..=3 {
            let p = propriety_scan(rule, dim, 20, 1e-12)?;
            s.check(
                &format!("{rule:?} propriety dim {dim}"),
                p.violation.is_none(),
                format!("{} points, min margin {:.3e}", p.points, p.min_margin),
            );
        }
    }
    let (mut same, mut diff) = (0.0f64, f64::INFINITY);
    for _ in 0..100 {
        let agents = rng.random_range(2..=4);
        let dim = rng.random_range(2..=5);
        let y = rng.random_range(0..dim);
        let prof = random_profile(rng, agents, dim);
        let b = random_belief(rng, dim);
        let ident = BeliefProfile::new(prof.weights().to_vec(), vec![b; agents])?;
        for rule in [ScoringRule::Log, ScoringRule::Brier] {
            same = same.max(contributions(&ident, rule, y)?.gamma.abs());
            diff = diff.min(contributions(&prof, rule, y)?.gamma);
        }
    }
    s.check("identical beliefs", same <= 1e-12, format!("max |gamma| {same:.3e}"));
    s.check("differing beliefs", diff > 1e-12, format!("min gamma {diff:.3e}"));
    Ok(())
}

fn knowledge(s: &mut Sink, _: &TransformerSpec, rng: &mut ChaCha8Rng) -> Result<()> {
    let mut failure: Option<String> = None;
    let mut note = |cond: bool, what: &str| {
        if !cond && failure.is_none() {
            failure = Some(what.to_string());
        }
    };
    let counting = MeasureSpec::counting();
    for _ in 0..50 {
        let k = random_knowledge(rng);
        let (kb, q, c) = (&k.base, &k.context, k.budget);
        let all = kb.space().all();
        let b = random_subset(rng, &all, 0.5);
        let a = random_subset(rng, &b, 0.5);
        let ea = kb.emerge(&a, q, c)?;
        note(a.is_subset(&ea), "inflation");
        note(ea.is_subset(&kb.emerge(&b, q, c)?), "monotone emergence");
        let cl = kb.closure_counted(&a, q, c)?;
        note(cl.facts.is_subset(&kb.closure(&b, q, c)?), "monotone closure");
        note(kb.closure(&cl.facts, q, c)? == cl.facts, "closure idempotence");
        note(cl.iterations <= all.len(), "fixed point iterations");
        note(ea.is_subset(&kb.emerge(&a, q, c + 1)?), "budget monotone emergence");
        note(kb.measure(&a, q, c, &counting)? <= kb.measure(&a, q, c + 1, &counting)?, "budget monotone measure");
        for _ in 0..4 {
            let tr = random_trace(rng, &k);
            let v = kb.cot_audit(&tr, q, c, &counting)?;
            note(!(v.meaningful() && v.conserves), "dichotomy");
            if tr.support().is_subset(&kb.safety_envelope(&tr.baseline, q, c)?) {
                note(kb.creativity_bounded(&tr.support(), &tr.baseline, q, c)?, "aligned creativity");
            }
        }
    }
    let ok = failure.is_none();
    s.check("random instances", ok, failure.unwrap_or_else(|| "50 instances, 200 traces".into()));
    Ok(())
}
