//! Acceptance criteria 1 to 10. Runs without the libtest harness so every
//! criterion prints its own line; exits nonzero if any criterion fails.
//!
//! Library values are compared against oracles written here from scratch
//! (plain loops over the raw weights, brute-force auctions over bit masks)
//! and against the reference numbers with their stated tolerances.

use std::time::{Duration, Instant};

use infauction::attribution::{attribute, DEFAULT_TOL};
use infauction::fixtures::{self, random_knowledge, random_subset, random_trace};
use infauction::knowledge::MeasureSpec;
use infauction::mechanism::{AuctionInstance, PaymentRule, TruthScope};
use infauction::microtransformer::{emergence_states, lse_gap_from_logits, poe_distribution, semantic_energy, TransformerSpec};
use infauction::numerics::ProbVec;
use infauction::scoring::{aggregate_mixture, contributions, propriety_scan, random_belief, random_profile, BeliefProfile, ScoringRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Mat = Vec<Vec<f64>>;
type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    lines: Vec<String>,
    ok: bool,
}

impl Outcome {
    fn new() -> Self {
        Outcome { lines: Vec::new(), ok: true }
    }

    fn expect(&mut self, name: &str, cond: bool, detail: String) {
        if !cond {
            self.ok = false;
        }
        self.lines.push(format!("    {} {name}: {detail}", if cond { "ok  " } else { "FAIL" }));
    }

    fn near(&mut self, name: &str, got: &[f64], want: &[f64], tol: f64) {
        let d = diff(got, want);
        self.expect(name, d <= tol, format!("max diff {d:.3e} (tol {tol:e}) got {got:.6?}"));
    }
}

fn diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---- independent transformer oracle -------------------------------------

fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

fn with(mut m: Mat, entries: &[(usize, usize, f64)]) -> Mat {
    for (r, c, v) in entries {
        m[*r][*c] = *v;
    }
    m
}

fn vm(v: &[f64], m: &Mat) -> Vec<f64> {
    (0..m[0].len()).map(|c| (0..v.len()).map(|r| v[r] * m[r][c]).sum()).collect()
}

fn soft(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

struct Oracle {
    alpha: Vec<Vec<f64>>,
    // contexts[h][t]
    contexts: Vec<Vec<Vec<f64>>>,
    x0: Mat,
    x1: Mat,
    logits: Vec<f64>,
    head_logits: Vec<Vec<f64>>,
    pi: Vec<f64>,
}

fn oracle_forward(tokens: &[usize]) -> Oracle {
    let e = with(zeros(6, 5), &[(1, 0, 1.0), (2, 1, 1.0), (3, 2, 1.0), (4, 3, 1.0), (5, 4, 1.0)]);
    let heads = [
        (
            with(zeros(5, 2), &[(2, 1, 1.0)]),
            with(zeros(5, 2), &[(2, 1, 1.0)]),
            with(zeros(5, 2), &[(2, 1, 3.0)]),
            with(zeros(2, 5), &[(1, 3, 1.0)]),
        ),
        (
            with(zeros(5, 2), &[(2, 0, 1.0)]),
            with(zeros(5, 2), &[(2, 0, 1.0)]),
            with(zeros(5, 2), &[(2, 0, 1.2)]),
            with(zeros(2, 5), &[(0, 4, 1.0)]),
        ),
    ];
    let w1 = with(zeros(5, 6), &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (3, 3, 1.0), (4, 4, 1.0)]);
    let w2 = with(zeros(6, 5), &[(2, 2, 0.13), (3, 3, -0.13), (3, 4, -0.05), (4, 0, -0.05), (4, 1, 0.35)]);
    let x0: Mat = tokens.iter().map(|t| e[*t].clone()).collect();
    let n = x0.len();
    let mut a = zeros(n, 5);
    let mut alpha = Vec::new();
    let mut contexts = Vec::new();
    let mut head_out_last = Vec::new();
    for (wq, wk, wv, wo) in &heads {
        let q: Mat = x0.iter().map(|x| vm(x, wq)).collect();
        let k: Mat = x0.iter().map(|x| vm(x, wk)).collect();
        let v: Mat = x0.iter().map(|x| vm(x, wv)).collect();
        let mut ctx = Vec::new();
        for t in 0..n {
            let s: Vec<f64> = (0..=t).map(|j| (q[t][0] * k[j][0] + q[t][1] * k[j][1]) / 2f64.sqrt()).collect();
            let w = soft(&s);
            let h: Vec<f64> = (0..2).map(|c| (0..=t).map(|j| w[j] * v[j][c]).sum()).collect();
            let o = vm(&h, wo);
            for c in 0..5 {
                a[t][c] += o[c];
            }
            if t == n - 1 {
                alpha.push(w);
                head_out_last.push(o);
            }
            ctx.push(h);
        }
        contexts.push(ctx);
    }
    let x1: Mat = (0..n)
        .map(|t| {
            let pre: Vec<f64> = (0..5).map(|c| x0[t][c] + a[t][c]).collect();
            let hid: Vec<f64> = vm(&pre, &w1).into_iter().map(|z| z.max(0.0)).collect();
            let z = vm(&hid, &w2);
            (0..5).map(|c| pre[c] + z[c]).collect()
        })
        .collect();
    let u: Mat = (0..5).map(|c| (0..6).map(|r| e[r][c]).collect()).collect();
    let logits = vm(&x1[n - 1], &u);
    let head_logits = head_out_last.iter().map(|o| vm(o, &u)).collect();
    let pi = soft(&logits);
    Oracle { alpha, contexts, x0, x1, logits, head_logits, pi }
}

fn lse(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

// ---- criteria ------------------------------------------------------------

fn c1() -> Outcome {
    let mut o = Outcome::new();
    let spec = TransformerSpec::builtin();
    let orc = oracle_forward(&[1, 2, 3]);
    let start = Instant::now();
    let tr = spec.forward(&spec.parse_tokens("The quick brown").unwrap()).unwrap();
    let elapsed = start.elapsed();
    for h in 0..2 {
        o.near(&format!("alpha head {} vs oracle", h + 1), &tr.last_step(0, h).weights, &orc.alpha[h], 1e-12);
        o.near(&format!("alpha head {}", h + 1), &tr.last_step(0, h).weights, &[0.25, 0.25, 0.50], 1e-3);
    }
    o.near("h_3 head 1 vs oracle", &tr.last_step(0, 0).context, &orc.contexts[0][2], 1e-12);
    o.near("h_3 head 2 vs oracle", &tr.last_step(0, 1).context, &orc.contexts[1][2], 1e-12);
    o.near("h_3 head 1", &tr.last_step(0, 0).context, &[0.0, 1.5], 1e-12);
    o.near("h_3 head 2", &tr.last_step(0, 1).context, &[0.6, 0.0], 1e-12);
    o.near("L vs oracle", &tr.logits.total, &orc.logits, 1e-12);
    o.near("L", &tr.logits.total, &[0.0, -0.03, 0.21, 1.13, 1.31, 0.52], 5e-3);
    o.near("Pi vs oracle", &tr.distribution, &orc.pi, 1e-12);
    o.near("Pi", &tr.distribution, &[0.086, 0.083, 0.106, 0.265, 0.317, 0.144], 5e-3);
    let top = spec.token_name(tr.argmax());
    o.expect("argmax", top == "fox", top);
    o.expect("runtime", elapsed < Duration::from_millis(10), format!("{elapsed:?}"));
    o
}

fn c2() -> Outcome {
    let mut o = Outcome::new();
    let l = vec![vec![0.0, 0.0, 0.0, 0.0, 1.5, 0.0], vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.6]];
    let g = lse_gap_from_logits(&l, 4).unwrap().gamma;
    let formula = (5.0 + 1.5f64.exp()).ln() + (5.0 + 0.6f64.exp()).ln() - (4.0 + 1.5f64.exp() + 0.6f64.exp()).ln();
    let sum: Vec<f64> = (0..6).map(|i| l[0][i] + l[1][i]).collect();
    let generic = lse(&l[0]) + lse(&l[1]) - lse(&sum);
    o.near("gamma vs closed form", &[g], &[formula], 1e-9);
    o.near("gamma vs log-sum-exp oracle", &[g], &[generic], 1e-9);
    o.expect("gamma positive", g > 0.0, format!("{g}"));
    o.expect("reported 1.9 range", (1.7..=2.0).contains(&g), format!("{g} in [1.7, 2.0]; reported value 1.9"));
    o
}

fn c3() -> Outcome {
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let h = rng.random_range(1..=4);
        let v = rng.random_range(2..=10);
        let logits: Vec<Vec<f64>> = (0..h).map(|_| (0..v).map(|_| rng.random_range(-8.0..8.0)).collect()).collect();
        let sum: Vec<f64> = (0..v).map(|k| logits.iter().map(|l| l[k]).sum()).collect();
        worst = worst.max(diff(&poe_distribution(&logits).unwrap(), &soft(&sum)));
    }
    o.expect("max deviation", worst < 1e-12, format!("{worst:.3e} over 1000 instances"));
    o
}

fn c4() -> Outcome {
    let mut o = Outcome::new();
    let orc = oracle_forward(&[1, 2, 3]);
    let heads: Vec<ProbVec> = orc.head_logits.iter().map(|l| ProbVec::new(soft(l)).unwrap()).collect();
    let fin = ProbVec::new(orc.pi.clone()).unwrap();
    let r = attribute(&heads, &fin, DEFAULT_TOL).unwrap();
    // normal equations for the two-column case
    let (p1, p2) = (&heads[0], &heads[1]);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let (a, b, d) = (dot(p1, p1), dot(p1, p2), dot(p2, p2));
    let (y1, y2) = (dot(p1, &fin), dot(p2, &fin));
    let det = a * d - b * b;
    let beta = [(d * y1 - b * y2) / det, (a * y2 - b * y1) / det];
    o.near("beta vs normal equations", &r.beta_hat, &beta, 1e-9);
    o.near("beta", &r.beta_hat, &[0.55, 0.42], 0.01);
    o.near("reconstructed fox", &[r.reconstructed[4]], &[0.325], 5e-3);
    o.expect("residual nonzero", r.residual_norm > 1e-6, format!("norm {:.6}", r.residual_norm));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let h = rng.random_range(1..=4);
        let v = rng.random_range(h + 1..=12);
        let hs: Vec<ProbVec> = (0..h).map(|_| random_belief(&mut rng, v)).collect();
        let w = random_belief(&mut rng, h);
        let mix: Vec<f64> = (0..v).map(|k| (0..h).map(|j| w[j] * hs[j][k]).sum()).collect();
        worst = worst.max(attribute(&hs, &ProbVec::normalized(mix).unwrap(), DEFAULT_TOL).unwrap().residual_norm);
    }
    o.expect("exact mixtures", worst < 1e-10, format!("max residual {worst:.3e} over 500"));
    o
}

fn c5() -> Outcome {
    let mut o = Outcome::new();
    let orc = oracle_forward(&[1, 2, 3]);
    let heads: Vec<ProbVec> = orc.head_logits.iter().map(|l| ProbVec::new(soft(l)).unwrap()).collect();
    let direct = 0.5 * heads[0][4] + 0.5 * heads[1][4];
    let m = aggregate_mixture(&BeliefProfile::equal_weights(heads).unwrap());
    o.near("fox vs direct mean", &[m[4]], &[direct], 1e-15);
    o.near("fox entry", &[m[4]], &[0.3105], 1e-3);
    o
}

fn c6() -> Outcome {
    let mut o = Outcome::new();
    let spec = TransformerSpec::builtin();
    let orc = oracle_forward(&[1, 2, 3]);
    let x0 = spec.forward(&[1, 2, 3]).unwrap().input();
    let e = semantic_energy(std::slice::from_ref(&x0), &spec, 1, 0.5).unwrap();
    let oracle_e: f64 = orc.contexts.iter().flatten().flatten().map(|x| x * x).sum();
    o.near("mu_1 vs oracle", &[e], &[oracle_e], 1e-12);
    o.near("mu_1", &[e], &[2.61], 1e-12);
    let st = emergence_states(std::slice::from_ref(&x0), &spec, 1).unwrap();
    o.expect("two states", st.len() == 2, format!("{} states", st.len()));
    o.expect("X_0 kept", st[0].row_vectors() == orc.x0, String::new());
    o.near("X_1 row 3 vs oracle", st[1].row(2), &orc.x1[2], 1e-12);
    o.near("X_1 row 3", st[1].row(2), &[-0.03, 0.21, 1.13, 1.31, 0.52], 5e-3);
    o
}

// ---- brute-force auction oracle ---------------------------------------

struct Auction {
    t: u64,
    know: Vec<u64>,
    responses: Vec<u64>,
}

impl Auction {
    fn of(inst: &AuctionInstance) -> Self {
        Auction {
            t: inst.context().truth.to_mask(),
            know: inst.agents().iter().map(|a| a.knowledge.to_mask()).collect(),
            responses: inst.responses().iter().map(|r| r.to_mask()).collect(),
        }
    }

    fn v(&self, k: u64, r: u64) -> f64 {
        -(((r & k) ^ (self.t & k)).count_ones() as f64)
    }

    fn j(&self, r: u64) -> f64 {
        (r ^ self.t).count_ones() as f64
    }

    fn best(&self, reports: &[u64], skip: Option<usize>) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (g, r) in self.responses.iter().enumerate() {
            let w: f64 = reports.iter().enumerate().filter(|(i, _)| Some(*i) != skip).map(|(_, k)| self.v(*k, *r)).sum::<f64>()
                - self.j(*r);
            if w > best.1 {
                best = (g, w);
            }
        }
        best
    }

    /// Chosen response and payments under Clarke or mean-shifted Clarke.
    fn play(&self, reports: &[u64], shifted: bool) -> (usize, Vec<f64>) {
        let (g, _) = self.best(reports, None);
        let r = self.responses[g];
        let mut p: Vec<f64> = (0..reports.len())
            .map(|i| {
                let others: f64 =
                    reports.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, k)| self.v(*k, r)).sum::<f64>() - self.j(r);
                self.best(reports, Some(i)).1 - others
            })
            .collect();
        if shifted {
            let m = p.iter().sum::<f64>() / p.len() as f64;
            p.iter_mut().for_each(|x| *x -= m);
        }
        (g, p)
    }

    fn utility(&self, i: usize, reports: &[u64], shifted: bool) -> f64 {
        let (g, p) = self.play(reports, shifted);
        self.know[i].count_ones() as f64 + self.v(self.know[i], self.responses[g]) - p[i]
    }
}

fn c7() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let family = fixtures::mechanism_family(4);
    let (mut bad_pay, mut bad_truth, mut bad_ir, mut bad_opt, mut bad_sum, mut bad_imposed, mut bad_witness) =
        (0, 0, 0, 0, 0, 0, 0);
    let mut multi = 0;
    for inst in &family {
        let a = Auction::of(inst);
        let n = a.know.len();
        let facts = inst.base().space().len();
        let (_, p) = a.play(&a.know, false);
        let lib = inst.clarke_payments();
        if diff(&p, &lib.payments) > 1e-12 || p.iter().any(|x| *x < -1e-9) {
            bad_pay += 1;
        }
        // every report over every fact, others truthful
        let truthful = (0..n).all(|i| {
            let u0 = a.utility(i, &a.know, false);
            (0..1u64 << facts).all(|rep| {
                let mut prof = a.know.clone();
                prof[i] = rep;
                a.utility(i, &prof, false) <= u0 + 1e-9
            })
        });
        if !truthful {
            bad_truth += 1;
        }
        if (0..n).any(|i| a.utility(i, &a.know, false) < -1e-9) {
            bad_ir += 1;
        }
        let pivotal = p.iter().filter(|x| **x > 1e-9).count();
        if pivotal >= 2 {
            multi += 1;
            let w = inst.impossibility_witness().unwrap();
            if !w.clarke.optimal {
                bad_opt += 1;
            }
            if p.iter().sum::<f64>() <= 1e-9 {
                bad_sum += 1;
            }
            if !w.imposed_breaks_other_property() {
                bad_imposed += 1;
            }
            // the deviation the library reports must be profitable in the oracle
            if let Some(d) = &w.imposed.truthful_witness {
                let mut prof: Vec<u64> = d.reports.iter().map(|r| r.to_mask()).collect();
                prof[d.agent] = a.know[d.agent];
                let u0 = a.utility(d.agent, &prof, true);
                prof[d.agent] = d.report.to_mask();
                if a.utility(d.agent, &prof, true) <= u0 + 1e-9 {
                    bad_witness += 1;
                }
            }
        } else if !inst.audit(PaymentRule::Clarke, TruthScope::OthersTruthful).unwrap().optimal {
            bad_opt += 1;
        }
    }
    let elapsed = start.elapsed();
    o.expect("family", multi > 0, format!("{} instances, {multi} with two or more pivotal agents", family.len()));
    o.expect("payments match oracle and are nonnegative", bad_pay == 0, format!("{bad_pay} failures"));
    o.expect("truthful over all reports", bad_truth == 0, format!("{bad_truth} failures"));
    o.expect("participation", bad_ir == 0, format!("{bad_ir} failures"));
    o.expect("optimality", bad_opt == 0, format!("{bad_opt} failures"));
    o.expect("positive payment sum", bad_sum == 0, format!("{bad_sum} failures"));
    o.expect("zero-sum breaks a property", bad_imposed == 0, format!("{bad_imposed} failures"));
    o.expect("witnesses verified", bad_witness == 0, format!("{bad_witness} failures"));
    o.expect("runtime", elapsed < Duration::from_secs(60), format!("{elapsed:?}"));
    o
}

fn c8() -> Outcome {
    let mut o = Outcome::new();
    for rule in [ScoringRule::Log, ScoringRule::Brier] {
        for dim in 2..=4 {
            let s = propriety_scan(rule, dim, 20, 1e-12).unwrap();
            o.expect(&format!("{rule:?} dim {dim}"), s.violation.is_none(), format!("{} points, min margin {:.3e}", s.points, s.min_margin));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut same, mut differ, mut off) = (0.0f64, f64::INFINITY, 0.0f64);
    for _ in 0..500 {
        let agents = rng.random_range(2..=5);
        let dim = rng.random_range(2..=6);
        let y = rng.random_range(0..dim);
        let prof = random_profile(&mut rng, agents, dim);
        let b = random_belief(&mut rng, dim);
        let ident = BeliefProfile::new(prof.weights().to_vec(), vec![b; agents]).unwrap();
        for rule in [ScoringRule::Log, ScoringRule::Brier] {
            same = same.max(contributions(&ident, rule, y).unwrap().gamma.abs());
            let g = contributions(&prof, rule, y).unwrap().gamma;
            // oracle: weighted losses minus the loss of the mixture
            let mix: Vec<f64> = (0..dim).map(|k| (0..agents).map(|h| prof.weights()[h] * prof.beliefs()[h][k]).sum()).collect();
            let loss = |p: &[f64]| match rule {
                ScoringRule::Log => -p[y].ln(),
                ScoringRule::Brier => (0..dim).map(|k| (p[k] - if k == y { 1.0 } else { 0.0 }).powi(2)).sum(),
            };
            let og: f64 = (0..agents).map(|h| prof.weights()[h] * loss(prof.beliefs()[h].as_slice())).sum::<f64>() - loss(&mix);
            off = off.max((g - og).abs());
            differ = differ.min(g);
        }
    }
    o.expect("identical beliefs", same <= 1e-12, format!("max |gamma| {same:.3e}"));
    o.expect("differing beliefs", differ > 1e-12, format!("min gamma {differ:.3e}"));
    o.expect("gamma vs oracle", off <= 1e-12, format!("max diff {off:.3e}"));
    o
}

fn c9() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let counting = MeasureSpec::counting();
    let mut fails: Vec<&str> = Vec::new();
    let mut traces = 0;
    let mut bounded_checked = 0;
    while traces < 200 {
        let k = random_knowledge(&mut rng);
        let (kb, q, c) = (&k.base, &k.context, k.budget);
        let all = kb.space().all();
        let b = random_subset(&mut rng, &all, 0.5);
        let a = random_subset(&mut rng, &b, 0.5);
        let ea = kb.emerge(&a, q, c).unwrap();
        let cl = kb.closure_counted(&a, q, c).unwrap();
        let checks = [
            (a.is_subset(&ea), "inflation"),
            (ea.is_subset(&kb.emerge(&b, q, c).unwrap()), "monotone"),
            (cl.facts.is_subset(&kb.closure(&b, q, c).unwrap()), "monotone closure"),
            (ea.is_subset(&kb.emerge(&a, q, c + 1).unwrap()), "budget monotone"),
            (kb.measure(&a, q, c, &counting).unwrap() <= kb.measure(&a, q, c + 1, &counting).unwrap(), "insight monotone"),
            (kb.closure(&cl.facts, q, c).unwrap() == cl.facts, "idempotence"),
            (cl.iterations <= all.len(), "fixed point"),
        ];
        fails.extend(checks.iter().filter(|(ok, _)| !ok).map(|(_, n)| *n));
        for _ in 0..2 {
            let tr = random_trace(&mut rng, &k);
            traces += 1;
            let v = kb.cot_audit(&tr, q, c, &counting).unwrap();
            if v.meaningful() && v.conserves {
                fails.push("dichotomy");
            }
            let env = kb.safety_envelope(&tr.baseline, q, c).unwrap();
            if tr.support().is_subset(&env) {
                bounded_checked += 1;
                if !kb.creativity_bounded(&tr.support(), &tr.baseline, q, c).unwrap() {
                    fails.push("aligned creativity");
                }
            }
        }
    }
    let elapsed = start.elapsed();
    o.expect("properties", fails.is_empty(), format!("{traces} traces, {bounded_checked} inside the envelope, failures {fails:?}"));
    o.expect("runtime", elapsed < Duration::from_secs(30), format!("{elapsed:?}"));
    o
}

fn c10() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let r = infauction::selftest::run(0);
    let elapsed = start.elapsed();
    let failed: Vec<String> = r.failures().map(|c| format!("{}:{}", c.criterion, c.name)).collect();
    o.expect("selftest passes", r.passed(), format!("{} checks, failed {failed:?}", r.checks.len()));
    o.expect("runtime", elapsed < Duration::from_secs(180), format!("{elapsed:?}"));
    o
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful here
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let criteria: [Criterion; 10] = [
        ("golden forward pass", c1),
        ("Jensen gap", c2),
        ("PoE equivalence", c3),
        ("attribution", c4),
        ("mixture value", c5),
        ("semantic energy", c6),
        ("mechanism impossibility", c7),
        ("proper scoring", c8),
        ("knowledge calculus", c9),
        ("selftest", c10),
    ];
    let mut all = true;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let out = f();
        all &= out.ok;
        println!("criterion {:>2} {:<24} {}", i + 1, name, if out.ok { "PASS" } else { "FAIL" });
        for l in &out.lines {
            println!("{l}");
        }
    }
    if !all {
        std::process::exit(1);
    }
}
