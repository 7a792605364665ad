use std::sync::OnceLock;

use infauction::attribution::{attribute, DEFAULT_TOL};
use infauction::fixtures::{mechanism_family, random_knowledge, random_subset, random_trace};
use infauction::knowledge::MeasureSpec;
use infauction::mechanism::AuctionInstance;
use infauction::microtransformer::{centered, lse_gap_from_logits, poe_distribution};
use infauction::numerics::{log_sum_exp, softmax, ProbVec};
use infauction::scoring::{aggregate_mixture, contributions, BeliefProfile, ScoringRule};
use infauction::selftest::mechanism_instance_check;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn logits(v: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, v)
}

fn heads() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=4, 2usize..=8).prop_flat_map(|(h, v)| prop::collection::vec(logits(v), h))
}

fn belief(v: usize) -> impl Strategy<Value = ProbVec> {
    prop::collection::vec(0.01f64..1.0, v).prop_map(|w| ProbVec::normalized(w).unwrap())
}

fn profile() -> impl Strategy<Value = (BeliefProfile, usize)> {
    (2usize..=4, 2usize..=6).prop_flat_map(|(n, v)| {
        (prop::collection::vec(0.05f64..1.0, n), prop::collection::vec(belief(v), n), 0..v).prop_map(|(w, b, y)| {
            let s: f64 = w.iter().sum();
            (BeliefProfile::new(w.iter().map(|x| x / s).collect(), b).unwrap(), y)
        })
    })
}

fn family() -> &'static [AuctionInstance] {
    static F: OnceLock<Vec<AuctionInstance>> = OnceLock::new();
    F.get_or_init(|| mechanism_family(3))
}

proptest! {
    #[test]
    fn softmax_is_shift_invariant(l in logits(6), c in -50.0f64..50.0) {
        let p = softmax(&l).unwrap();
        let q = softmax(&l.iter().map(|x| x + c).collect::<Vec<_>>()).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in p.iter().zip(q.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn log_sum_exp_bounds(l in logits(7)) {
        let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z = log_sum_exp(&l).unwrap();
        prop_assert!(z >= m - 1e-12 && z <= m + 7f64.ln() + 1e-12);
    }

    #[test]
    fn poe_is_softmax_of_sum(h in heads()) {
        let v = h[0].len();
        let sum: Vec<f64> = (0..v).map(|k| h.iter().map(|l| l[k]).sum()).collect();
        let p = poe_distribution(&h).unwrap();
        let q = softmax(&sum).unwrap();
        for (a, b) in p.iter().zip(q.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gap_nonnegative_and_centering_free(h in heads(), y in 0usize..8) {
        let y = y % h[0].len();
        let r = lse_gap_from_logits(&h, y).unwrap();
        prop_assert!(r.gamma >= -1e-12);
        prop_assert!((r.payment_sum() - r.gamma).abs() < 1e-9);
        let c: Vec<Vec<f64>> = h.iter().map(|l| centered(l)).collect();
        prop_assert!((lse_gap_from_logits(&c, y).unwrap().gamma - r.gamma).abs() < 1e-9);
    }

    #[test]
    fn residual_orthogonal_to_heads(h in (1usize..=3, 4usize..=8).prop_flat_map(|(n, v)| (prop::collection::vec(belief(v), n), belief(v)))) {
        let (hs, fin) = h;
        let r = attribute(&hs, &fin, DEFAULT_TOL).unwrap();
        for o in r.orthogonality() {
            prop_assert!(o.abs() < 1e-8);
        }
    }

    #[test]
    fn exact_mixture_attributes((prof, _) in profile()) {
        prop_assume!(prof.len() < prof.dim());
        let mix = aggregate_mixture(&prof);
        let r = attribute(prof.beliefs(), &mix, DEFAULT_TOL).unwrap();
        prop_assert!(r.residual_norm < 1e-9);
    }

    #[test]
    fn jensen_gap_nonnegative((prof, y) in profile()) {
        for rule in [ScoringRule::Log, ScoringRule::Brier] {
            let g = contributions(&prof, rule, y).unwrap();
            prop_assert!(g.gamma >= -1e-12);
            prop_assert!((g.total() - g.gamma).abs() < 1e-9);
        }
    }

    #[test]
    fn knowledge_operators(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_knowledge(&mut rng);
        let (kb, q, c) = (&k.base, &k.context, k.budget);
        let all = kb.space().all();
        let b = random_subset(&mut rng, &all, 0.5);
        let a = random_subset(&mut rng, &b, 0.5);
        let ea = kb.emerge(&a, q, c).unwrap();
        prop_assert!(a.is_subset(&ea));
        prop_assert!(ea.is_subset(&kb.emerge(&b, q, c).unwrap()));
        let cl = kb.closure(&a, q, c).unwrap();
        prop_assert_eq!(kb.closure(&cl, q, c).unwrap(), cl.clone());
        prop_assert!(cl.is_subset(&kb.closure(&a, q, c + 1).unwrap()));
        let m = MeasureSpec::counting();
        prop_assert!(kb.measure(&a, q, c, &m).unwrap() <= kb.measure(&b, q, c, &m).unwrap());
        let tr = random_trace(&mut rng, &k);
        kb.validate_trace(&tr, q, c).unwrap();
        let v = kb.cot_audit(&tr, q, c, &m).unwrap();
        prop_assert!(!(v.meaningful() && v.conserves));
    }

    #[test]
    fn clarke_family(i in 0usize..100_000) {
        let f = family();
        let inst = &f[i % f.len()];
        prop_assert_eq!(mechanism_instance_check(inst).unwrap(), None);
        prop_assert!(inst.clarke_payments().payments.iter().all(|p| *p >= -1e-12));
    }
}
