use std::path::Path;

use anyhow::{Context as _, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use infauction::attribution::{attribute as attribute_dists, mixture_bound_check};
use infauction::knowledge::{FactSet, KnowledgeBase, MeasureSpec, ReasoningScenario};
use infauction::mechanism::{AuctionScenario, PaymentRule, TruthScope, TOL};
use infauction::microtransformer::{
    emergence_states, layer_energies, load_bundle, lse_gap, lse_gap_from_logits, poe_distribution,
    semantic_energy, FeatureMap, ForwardTrace, TransformerSpec,
};
use infauction::numerics::{max_abs_diff, softmax, ProbVec, PROB_SUM_TOL};
use infauction::scoring::{
    aggregate_mixture, contributions, propriety_scan, random_belief, random_profile, BeliefProfile, ProfileFile,
    ScoringRule,
};
use infauction::selftest;

use crate::report::{cell, real_value, reals, Report, Table};
use crate::{AuditLevel, FeatureMapArg, ModelArgs, RuleArg};

fn load_spec(model: &ModelArgs) -> Result<TransformerSpec> {
    Ok(match &model.weights {
        Some(dir) => load_bundle(dir).with_context(|| format!("loading weights from {}", dir.display()))?,
        None => TransformerSpec::builtin(),
    })
}

fn trace_of(model: &ModelArgs) -> Result<(TransformerSpec, ForwardTrace)> {
    let spec = load_spec(model)?;
    let tokens = spec.parse_tokens(&model.tokens)?;
    let tr = spec.forward(&tokens)?;
    Ok((spec, tr))
}

fn model_params(model: &ModelArgs) -> Value {
    json!({
        "weights": model.weights.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "built-in".into()),
        "tokens": model.tokens,
    })
}

fn names(spec: &TransformerSpec) -> Vec<String> {
    (0..spec.dims().vocab).map(|i| spec.token_name(i)).collect()
}

fn set_names(kb: &KnowledgeBase, a: &FactSet) -> Vec<String> {
    kb.space().names_of(a)
}

pub fn forward(model: &ModelArgs, linear: Option<FeatureMapArg>, full_trace: bool, seed: u64) -> Result<Report> {
    let spec = load_spec(model)?;
    let tokens = spec.parse_tokens(&model.tokens)?;
    let tr = match linear {
        None => spec.forward(&tokens)?,
        Some(FeatureMapArg::Elu1p) => spec.linear_attention_forward(&tokens, FeatureMap::Elu1p)?,
        Some(FeatureMapArg::Relu) => spec.linear_attention_forward(&tokens, FeatureMap::Relu)?,
    };
    let mut params = model_params(model);
    params["linear"] = serde_json::to_value(linear)?;
    let mut r = Report::new("forward", seed, params);
    let last = tokens.len() - 1;
    let heads: Vec<Value> = tr
        .blocks
        .iter()
        .enumerate()
        .flat_map(|(b, block)| {
            block.heads.iter().enumerate().map(move |(h, head)| {
                let st = &head.steps[last];
                json!({
                    "block": b + 1,
                    "head": h + 1,
                    "query": st.query,
                    "scores": st.scores,
                    "alpha": st.weights.as_slice(),
                    "context": st.context,
                    "output": st.output,
                    "logits": head.logits,
                })
            })
        })
        .collect();
    let lb = tr.blocks.last().expect("one block");
    let top = tr.argmax();
    r.result = json!({
        "tokens": tokens.iter().map(|t| spec.token_name(*t)).collect::<Vec<_>>(),
        "heads": heads,
        "attention_sum": lb.attention[last],
        "ffn": lb.ffn[last],
        "residual": lb.output[last],
        "logits": serde_json::to_value(&tr.logits)?,
        "distribution": tr.distribution.as_slice(),
        "argmax": top,
        "argmax_token": spec.token_name(top),
    });
    if full_trace {
        r.result["trace"] = serde_json::to_value(&tr)?;
    }

    let l = &tr.logits;
    let sum: Vec<f64> = (0..l.total.len()).map(|i| l.input[i] + l.attention[i] + l.ffn[i]).collect();
    let d = max_abs_diff(&sum, &l.total);
    r.check("logit split", d <= 1e-12, format!("|L_0 + L_a + L_f - L| = {d:.3e}"));
    let mut worst = 0.0f64;
    for (b, block) in tr.blocks.iter().enumerate() {
        for t in 0..=last {
            worst = worst.max(max_abs_diff(&spec.concatenated_output(block, b, t)?, &block.attention[t]));
        }
    }
    r.check("parallel heads", worst <= 1e-12, format!("concatenated vs summed heads {worst:.3e}"));
    let mass: f64 = tr.distribution.iter().sum();
    r.check("distribution", (mass - 1.0).abs() <= PROB_SUM_TOL, format!("mass {mass}"));

    let mut t = Table::new(&["token", "input", "attention", "ffn", "logit", "probability"]);
    for (i, name) in names(&spec).into_iter().enumerate() {
        t.push(vec![
            name,
            cell(l.input[i]),
            cell(l.attention[i]),
            cell(l.ffn[i]),
            cell(l.total[i]),
            cell(tr.distribution[i]),
        ]);
    }
    r.table = t;
    Ok(r)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LogitsFile {
    head_logits: Vec<Vec<f64>>,
    #[serde(default)]
    outcome: Option<usize>,
}

fn read_logits(path: &Path) -> Result<LogitsFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| infauction::Error::Io { path: path.display().to_string(), message: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| infauction::Error::Parse(format!("{}: {e}", path.display())).into())
}

/// Head logits with their outcome, the vocabulary names, and the full
/// distribution when they come from a forward pass.
struct HeadSource {
    logits: Vec<Vec<f64>>,
    outcome: usize,
    names: Vec<String>,
    full: Option<ProbVec>,
    params: Value,
}

fn head_source(model: &ModelArgs, scenario: Option<&Path>) -> Result<HeadSource> {
    match scenario {
        Some(p) => {
            let f = read_logits(p)?;
            let dim = f.head_logits.first().map_or(0, |l| l.len());
            let sum: Vec<f64> = (0..dim).map(|i| f.head_logits.iter().map(|l| l[i]).sum()).collect();
            let outcome = match f.outcome {
                Some(o) => o,
                None => softmax(&sum)?.argmax(),
            };
            Ok(HeadSource {
                logits: f.head_logits,
                outcome,
                names: (0..dim).map(|i| i.to_string()).collect(),
                full: None,
                params: json!({ "scenario": p.display().to_string() }),
            })
        }
        None => {
            let (spec, tr) = trace_of(model)?;
            Ok(HeadSource {
                logits: tr.head_logits(),
                outcome: tr.argmax(),
                names: names(&spec),
                full: Some(tr.distribution.clone()),
                params: model_params(model),
            })
        }
    }
}

pub fn gap(model: &ModelArgs, scenario: Option<&Path>, seed: u64) -> Result<Report> {
    let src = head_source(model, scenario)?;
    let g = if scenario.is_none() {
        let (_, tr) = trace_of(model)?;
        lse_gap(&tr)?
    } else {
        lse_gap_from_logits(&src.logits, src.outcome)?
    };
    let mut r = Report::new("gap", seed, src.params.clone());
    r.result = serde_json::to_value(&g)?;
    r.result["outcome_token"] = Value::String(src.names[g.outcome].clone());
    r.result["payment_sum"] = real_value(g.payment_sum());
    // Π of the forward pass also carries residual and FFN logits; the gap
    // is defined on the heads alone, so both are shown.
    if let Some(full) = &src.full {
        r.result["full_distribution"] = reals(full);
    }
    let d = (g.payment_sum() - g.gamma).abs();
    r.check("payment identity", d <= 1e-12, format!("|p_0 + sum p_h - gamma| = {d:.3e}"));
    r.check("gamma nonnegative", g.gamma >= -1e-12, format!("gamma {}", g.gamma));

    let mut t = Table::new(&["head", "logZ", "loss"]);
    for (h, (z, p)) in g.head_log_partitions.iter().zip(&g.head_losses).enumerate() {
        t.push(vec![(h + 1).to_string(), cell(*z), cell(*p)]);
    }
    t.push(vec!["aggregate".into(), cell(g.log_partition), cell(g.aggregator)]);
    r.table = t;
    Ok(r)
}

pub fn poe(model: &ModelArgs, scenario: Option<&Path>, seed: u64) -> Result<Report> {
    let src = head_source(model, scenario)?;
    let p = poe_distribution(&src.logits)?;
    let dim = p.len();
    let sum: Vec<f64> = (0..dim).map(|i| src.logits.iter().map(|l| l[i]).sum()).collect();
    let s = softmax(&sum)?;
    let d = max_abs_diff(&p, &s);
    let mut r = Report::new("poe", seed, src.params.clone());
    r.result = json!({
        "poe": p.as_slice(),
        "softmax_of_sum": s.as_slice(),
        "max_deviation": d,
        "argmax_token": src.names[p.argmax()],
    });
    r.check("softmax of summed logits", d < 1e-12, format!("max deviation {d:.3e}"));
    let mut t = Table::new(&["token", "poe", "softmax_sum"]);
    for i in 0..dim {
        t.push(vec![src.names[i].clone(), cell(p[i]), cell(s[i])]);
    }
    r.table = t;
    Ok(r)
}

pub fn attribute(model: &ModelArgs, scenario: Option<&Path>, tol: f64, seed: u64) -> Result<Report> {
    let (heads, fin, names, params) = match scenario {
        Some(p) => {
            let f = ProfileFile::load(p)?;
            let prof = f.profile()?;
            let logs: Vec<Vec<f64>> = prof.beliefs().iter().map(|b| b.iter().map(|x| x.ln()).collect()).collect();
            let fin = poe_distribution(&logs)?;
            let names = (0..prof.dim()).map(|i| i.to_string()).collect::<Vec<_>>();
            (prof.beliefs().to_vec(), fin, names, json!({ "scenario": p.display().to_string(), "tol": tol }))
        }
        None => {
            let (spec, tr) = trace_of(model)?;
            let mut params = model_params(model);
            params["tol"] = json!(tol);
            (tr.head_distributions()?, tr.distribution.clone(), names(&spec), params)
        }
    };
    let a = attribute_dists(&heads, &fin, tol)?;
    let outcome = fin.argmax();
    let verdict = mixture_bound_check(&heads, &fin, outcome)?;
    let mut r = Report::new("attribute", seed, params);
    r.result = serde_json::to_value(&a)?;
    r.result["final"] = reals(&fin);
    r.result["outcome"] = json!(outcome);
    r.result["outcome_token"] = json!(names[outcome]);
    r.result["bound"] = serde_json::to_value(verdict)?;

    let back: Vec<f64> = a.reconstructed.iter().zip(&a.residual).map(|(x, y)| x + y).collect();
    let d = max_abs_diff(&back, &fin);
    r.check("reconstruction", d <= 1e-9, format!("|P b + d - final| = {d:.3e}"));
    let o = a.orthogonality().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    r.check("residual orthogonality", o <= 1e-8, format!("|P^T d| = {o:.3e}"));

    let mut t = Table::new(&["token", "final", "reconstructed", "residual"]);
    for i in 0..fin.len() {
        t.push(vec![names[i].clone(), cell(fin[i]), cell(a.reconstructed[i]), cell(a.residual[i])]);
    }
    r.table = t;
    Ok(r)
}

pub fn auction(path: &Path, budget: Option<u64>, level: AuditLevel, seed: u64) -> Result<Report> {
    let sc = AuctionScenario::load(path, budget)?;
    let inst = &sc.instance;
    let kb = inst.base();
    let mut r = Report::new(
        "auction",
        seed,
        json!({ "scenario": path.display().to_string(), "budget": inst.budget(), "audit": level }),
    );
    let opt = inst.welfare_optimum(None)?;
    let pay = inst.clarke_payments();
    let pivotal: Vec<String> = inst.pivotal_agents().iter().map(|i| inst.agents()[*i].id.clone()).collect();
    r.result = json!({
        "facts": kb.space().names(),
        "relevant": set_names(kb, inst.relevant()),
        "responses": inst.responses().len(),
        "response": set_names(kb, &opt.response),
        "welfare": opt.value,
        "payments": pay.payments,
        "payment_sum": pay.sum,
        "pivotal": pivotal,
        "nontrivial": inst.is_nontrivial(),
    });
    let neg = pay.payments.iter().fold(0.0f64, |m, p| m.min(*p));
    r.check("clarke payments nonnegative", neg >= -TOL, format!("min payment {neg}"));

    let clarke = match level {
        AuditLevel::None => None,
        AuditLevel::Clarke => Some(inst.audit(PaymentRule::Clarke, TruthScope::OthersTruthful)?),
        AuditLevel::All if inst.is_nontrivial() => {
            let w = inst.impossibility_witness()?;
            r.result["imposed"] = serde_json::to_value(&w.imposed)?;
            if w.clarke.payments.sum > TOL {
                r.check(
                    "zero-sum payments break a property",
                    w.imposed_breaks_other_property(),
                    format!("truthful {} optimal {}", w.imposed.truthful, w.imposed.optimal),
                );
            }
            Some(w.clarke)
        }
        AuditLevel::All => Some(inst.audit(PaymentRule::Clarke, TruthScope::OthersTruthful)?),
    };
    if let Some(c) = clarke {
        let detail = c.truthful_witness.as_ref().map_or("no profitable misreport".into(), |w| {
            format!("{} gains {} by reporting {:?}", w.agent_id, w.deviating_utility - w.truthful_utility, w.report)
        });
        r.check("clarke truthful", c.truthful, detail);
        r.result["clarke"] = serde_json::to_value(&c)?;
    }

    let mut t = Table::new(&["agent", "id", "knowledge", "payment", "pivotal"]);
    for (i, a) in inst.agents().iter().enumerate() {
        t.push(vec![
            i.to_string(),
            a.id.clone(),
            set_names(kb, &a.knowledge).join(" "),
            cell(pay.payments[i]),
            (pay.payments[i] > TOL).to_string(),
        ]);
    }
    r.table = t;
    Ok(r)
}

fn rule_of(arg: RuleArg) -> ScoringRule {
    match arg {
        RuleArg::Log => ScoringRule::Log,
        RuleArg::Brier => ScoringRule::Brier,
    }
}

pub fn scoring(path: Option<&Path>, rule: Option<RuleArg>, steps: usize, profiles: usize, seed: u64) -> Result<Report> {
    if let Some(path) = path {
        let f = ProfileFile::load(path)?;
        let prof = f.profile()?;
        let rule = rule.map(rule_of).unwrap_or(f.rule);
        let g = contributions(&prof, rule, f.outcome)?;
        let mut r = Report::new("scoring", seed, json!({ "scenario": path.display().to_string(), "rule": rule }));
        r.result = serde_json::to_value(&g)?;
        r.result["aggregate"] = reals(&aggregate_mixture(&prof));
        r.result["total"] = real_value(g.total());
        if g.gamma.is_finite() {
            let d = (g.total() - g.gamma).abs();
            r.check("contributions sum to gamma", d <= 1e-12, format!("difference {d:.3e}"));
        }
        r.check("gamma nonnegative", g.gamma >= -1e-12, format!("gamma {}", g.gamma));
        let mut t = Table::new(&["agent", "weight", "contribution"]);
        for (h, (w, c)) in prof.weights().iter().zip(&g.contributions).enumerate() {
            t.push(vec![(h + 1).to_string(), cell(*w), cell(*c)]);
        }
        t.push(vec!["aggregate".into(), "1".into(), cell(g.aggregator)]);
        r.table = t;
        return Ok(r);
    }

    let rules: Vec<ScoringRule> = match rule {
        Some(a) => vec![rule_of(a)],
        None => vec![ScoringRule::Log, ScoringRule::Brier],
    };
    let mut r = Report::new(
        "scoring",
        seed,
        json!({ "rules": rules, "steps": steps, "profiles": profiles }),
    );
    let mut scans = Vec::new();
    let mut t = Table::new(&["rule", "dim", "points", "min_margin"]);
    for rule in &rules {
        for dim in 2..=4 {
            let s = propriety_scan(*rule, dim, steps, 1e-12)?;
            r.check(
                &format!("{rule:?} propriety dim {dim}"),
                s.violation.is_none(),
                format!("min margin {:.3e}", s.min_margin),
            );
            t.push(vec![format!("{rule:?}"), dim.to_string(), s.points.to_string(), cell(s.min_margin)]);
            scans.push(serde_json::to_value(&s)?);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut same, mut diff) = (0.0f64, f64::INFINITY);
    for _ in 0..profiles {
        use rand::Rng;
        let agents = rng.random_range(2..=4);
        let dim = rng.random_range(2..=6);
        let y = rng.random_range(0..dim);
        let prof = random_profile(&mut rng, agents, dim);
        let b = random_belief(&mut rng, dim);
        let ident = BeliefProfile::new(prof.weights().to_vec(), vec![b; agents])?;
        for rule in &rules {
            same = same.max(contributions(&ident, *rule, y)?.gamma.abs());
            diff = diff.min(contributions(&prof, *rule, y)?.gamma);
        }
    }
    r.check("identical beliefs", same <= 1e-12, format!("max |gamma| {same:.3e}"));
    r.check("differing beliefs", diff > 1e-12, format!("min gamma {diff:.3e}"));
    r.result = json!({
        "scans": scans,
        "identical_max_gamma": same,
        "differing_min_gamma": real_value(diff),
    });
    r.table = t;
    Ok(r)
}

pub fn emerge(
    model: &ModelArgs,
    scenario: Option<&Path>,
    budget: Option<u64>,
    depth: usize,
    gamma: f64,
    seed: u64,
) -> Result<Report> {
    if let Some(path) = scenario {
        let sc = ReasoningScenario::load(path, budget)?;
        let (kb, q, c) = (&sc.knowledge.base, &sc.knowledge.context, sc.budget);
        let a = &sc.trace.baseline;
        let rel = kb.relevant(q, c)?;
        let em = kb.emerge(a, q, c)?;
        let cl = kb.closure_counted(a, q, c)?;
        let spec = MeasureSpec::counting();
        let mut r =
            Report::new("emerge", seed, json!({ "scenario": path.display().to_string(), "budget": c }));
        r.result = json!({
            "start": set_names(kb, a),
            "relevant": set_names(kb, &rel),
            "emerged": set_names(kb, &em),
            "closure": set_names(kb, &cl.facts),
            "iterations": cl.iterations,
            "measure": kb.measure(a, q, c, &spec)?,
            "closure_measure": kb.measure(&cl.facts, q, c, &spec)?,
        });
        r.check("inflation", a.is_subset(&em), "start inside its emergence");
        r.check("idempotence", kb.closure(&cl.facts, q, c)? == cl.facts, "closure of the closure");
        let n = kb.space().len();
        r.check("fixed point", cl.iterations <= n, format!("{} iterations for {n} facts", cl.iterations));
        let mut t = Table::new(&["fact", "start", "relevant", "emerged", "closure"]);
        for (i, name) in kb.space().names().iter().enumerate() {
            t.push(vec![
                name.clone(),
                a.contains(i).to_string(),
                rel.contains(i).to_string(),
                em.contains(i).to_string(),
                cl.facts.contains(i).to_string(),
            ]);
        }
        r.table = t;
        return Ok(r);
    }

    let (spec, tr) = trace_of(model)?;
    let x0 = tr.input();
    let inputs = std::slice::from_ref(&x0);
    let states = emergence_states(inputs, &spec, depth)?;
    let energy = semantic_energy(inputs, &spec, depth, gamma)?;
    let layers = layer_energies(&x0, &spec, depth, gamma)?;
    let mut params = model_params(model);
    params["depth"] = json!(depth);
    params["gamma"] = json!(gamma);
    let mut r = Report::new("emerge", seed, params);
    r.result = json!({
        "states": states.iter().map(|m| m.row_vectors()).collect::<Vec<_>>(),
        "energy": energy,
        "layer_energies": layers,
    });
    r.check("inputs kept", states.first() == Some(&x0), format!("{} states", states.len()));
    r.check("energy nonnegative", energy >= 0.0, format!("energy {energy}"));
    let mut t = Table::new(&["layer", "discounted_energy"]);
    for (l, e) in layers.iter().enumerate() {
        t.push(vec![(l + 1).to_string(), cell(*e)]);
    }
    r.table = t;
    Ok(r)
}

pub fn cot_audit(path: &Path, budget: Option<u64>, seed: u64) -> Result<Report> {
    let sc = ReasoningScenario::load(path, budget)?;
    let (kb, q, c) = (&sc.knowledge.base, &sc.knowledge.context, sc.budget);
    let v = kb.cot_audit(&sc.trace, q, c, &MeasureSpec::counting())?;
    let mut r = Report::new("cot-audit", seed, json!({ "trace": path.display().to_string(), "budget": c }));
    r.result = serde_json::to_value(&v)?;
    r.result["contributions"] = json!(set_names(kb, &sc.trace.contributions()));
    r.check(
        "dichotomy",
        !(v.meaningful() && v.conserves),
        format!("meaningful {} conserves {}", v.meaningful(), v.conserves),
    );
    let mut t = Table::new(&["step", "facts", "measure"]);
    for (i, (s, m)) in sc.trace.steps.iter().zip(&v.step_measures).enumerate() {
        t.push(vec![i.to_string(), set_names(kb, s).join(" "), cell(*m)]);
    }
    r.table = t;
    Ok(r)
}

pub fn envelope(path: &Path, budget: Option<u64>, seed: u64) -> Result<Report> {
    let sc = ReasoningScenario::load(path, budget)?;
    let (kb, q, c) = (&sc.knowledge.base, &sc.knowledge.context, sc.budget);
    let base = &sc.trace.baseline;
    let env = kb.safety_envelope(base, q, c)?;
    let response = sc.response.clone().unwrap_or_else(|| sc.trace.support());
    let bounded = kb.creativity_bounded(&response, base, q, c)?;
    let mut r = Report::new("envelope", seed, json!({ "scenario": path.display().to_string(), "budget": c }));
    r.result = json!({
        "baseline": set_names(kb, base),
        "envelope": set_names(kb, &env),
        "response": set_names(kb, &response),
        "bounded": bounded,
        "outside": set_names(kb, &response.difference(&env)),
    });
    r.check("baseline inside envelope", base.is_subset(&env), "inflation");
    r.check("envelope closed", kb.closure(&env, q, c)? == env, "closure of the envelope");
    let mut t = Table::new(&["fact", "baseline", "envelope", "response"]);
    for (i, name) in kb.space().names().iter().enumerate() {
        t.push(vec![
            name.clone(),
            base.contains(i).to_string(),
            env.contains(i).to_string(),
            response.contains(i).to_string(),
        ]);
    }
    r.table = t;
    Ok(r)
}

pub fn selftest(seed: u64) -> Report {
    let s = selftest::run(seed);
    let mut r = Report::new("selftest", seed, json!({}));
    let mut t = Table::new(&["criterion", "check", "passed", "detail"]);
    for c in &s.checks {
        r.check(&format!("{}: {}", c.criterion, c.name), c.passed, c.detail.clone());
        t.push(vec![c.criterion.to_string(), c.name.clone(), c.passed.to_string(), c.detail.clone()]);
    }
    r.result = json!({ "checks": s.checks.len(), "failed": s.failures().count() });
    r.table = t;
    r
}
