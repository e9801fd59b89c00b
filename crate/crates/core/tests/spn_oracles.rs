//! Brute-force oracle equivalence for the SPN inference passes.

mod common;

use common::*;
use rand::Rng;
use toponets_core::learn;
use toponets_core::spn::{Evidence, SoftEvidence, VarId, VarTable};

#[test]
fn evaluate_matches_linear_expansion() {
    let mut rng = seeded(0xea1);
    for case in 0..60 {
        let n_vars = rng.random_range(2..=8);
        let spn = random_ternary_spn(&mut rng, n_vars);
        let ev = random_evidence(&mut rng, spn.vars());
        let lin = oracle_eval_linear(&spn, &ev);
        let log = spn.evaluate(&ev).unwrap();
        if lin == 0.0 {
            assert_eq!(log, f64::NEG_INFINITY, "case {case}");
        } else {
            assert!(
                (log - lin.ln()).abs() < 1e-9,
                "case {case}: {log} vs {}",
                lin.ln()
            );
        }
    }
}

#[test]
fn full_marginalization_of_normalized_network_is_log_one() {
    let mut rng = seeded(0x0f01);
    for _ in 0..20 {
        let n = rng.random_range(1..=10);
        let spn = random_ternary_spn(&mut rng, n);
        let ev = Evidence::marginalized(spn.vars());
        let v = spn.evaluate(&ev).unwrap();
        assert!(v.abs() < 1e-12, "expected log 1, got {v}");
    }
}

#[test]
fn indicator_network_semantics() {
    let mut vars = VarTable::new();
    let x = vars.add_var(2).unwrap();
    let mut b = toponets_core::SpnBuilder::new(vars.clone());
    let i1 = b.indicator(x, 1).unwrap();
    let spn = b.finish(i1).unwrap();
    let mut ev = Evidence::marginalized(&vars);
    ev.observe(x, 1).unwrap();
    assert_eq!(spn.evaluate(&ev).unwrap(), 0.0);
    ev.observe(x, 0).unwrap();
    assert_eq!(spn.evaluate(&ev).unwrap(), f64::NEG_INFINITY);
}

#[test]
fn marginals_match_enumeration() {
    let mut rng = seeded(0x3a26);
    for case in 0..40 {
        let n_vars = rng.random_range(2..=7);
        let spn = random_ternary_spn(&mut rng, n_vars);
        let ev = random_evidence(&mut rng, spn.vars());
        let (expected, total) = oracle_marginals(&spn, &ev);
        if total == 0.0 {
            assert!(spn.marginals(&ev).is_err());
            continue;
        }
        let got = spn.marginals(&ev).unwrap();
        for v in spn.vars().vars() {
            let row = got.posterior(v);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for (k, &e) in expected[v.index()].iter().enumerate() {
                assert!(
                    (row[k] - e).abs() < 1e-6,
                    "case {case}, var {v:?}, value {k}: {} vs {e}",
                    row[k]
                );
            }
        }
    }
}

#[test]
fn observed_variable_posterior_is_one_hot() {
    let mut rng = seeded(0x0b5e);
    let spn = random_ternary_spn(&mut rng, 5);
    let mut ev = Evidence::marginalized(spn.vars());
    ev.observe(VarId(2), 1).unwrap();
    let m = spn.marginals(&ev).unwrap();
    assert_eq!(m.posterior(VarId(2)), &[0.0, 1.0, 0.0]);
}

#[test]
fn naive_bayes_mixture_posterior_is_hand_computable() {
    // Three components over two binary variables; observing X1 = 0 gives a
    // posterior over X2 computable by direct mixture arithmetic.
    let comps = [
        (0.5, [0.3, 0.7], [0.6, 0.4]),
        (0.3, [0.9, 0.1], [0.2, 0.8]),
        (0.2, [0.5, 0.5], [0.5, 0.5]),
    ];
    let mut vars = VarTable::new();
    let x1 = vars.add_var(2).unwrap();
    let x2 = vars.add_var(2).unwrap();
    let mut b = toponets_core::SpnBuilder::new(vars.clone());
    let i1 = [b.indicator(x1, 0).unwrap(), b.indicator(x1, 1).unwrap()];
    let i2 = [b.indicator(x2, 0).unwrap(), b.indicator(x2, 1).unwrap()];
    let mut prods = Vec::new();
    let mut prior = Vec::new();
    for (w, wa, wb) in comps {
        let sa = b.sum(&i1, &wa).unwrap();
        let sb = b.sum(&i2, &wb).unwrap();
        prods.push(b.product(&[sa, sb]).unwrap());
        prior.push(w);
    }
    let root = b.sum(&prods, &prior).unwrap();
    let spn = b.finish(root).unwrap();

    let mut ev = Evidence::marginalized(&vars);
    ev.observe(x1, 0).unwrap();
    let m = spn.marginals(&ev).unwrap();

    // Brute-force over the 3 components.
    let joint0: f64 = comps.iter().map(|(w, wa, wb)| w * wa[0] * wb[0]).sum();
    let joint1: f64 = comps.iter().map(|(w, wa, wb)| w * wa[0] * wb[1]).sum();
    let expect = [joint0 / (joint0 + joint1), joint1 / (joint0 + joint1)];
    for k in 0..2 {
        assert!((m.posterior(x2)[k] - expect[k]).abs() < 1e-12);
    }
}

#[test]
fn mpe_attains_brute_force_max_product_optimum() {
    let mut rng = seeded(0x3c3);
    for case in 0..40 {
        let n_vars = rng.random_range(2..=6);
        let spn = random_ternary_spn(&mut rng, n_vars);
        let ev = random_evidence(&mut rng, spn.vars());
        let (_, best) = oracle_best_completion(&spn, &ev);
        if best == 0.0 {
            assert!(spn.mpe(&ev).is_err(), "case {case}");
            continue;
        }
        let got = spn.mpe(&ev).unwrap();
        assert!(
            (got.log_score - best.ln()).abs() < 1e-9,
            "case {case}: score {} vs best {}",
            got.log_score,
            best.ln()
        );
        // The returned assignment itself must attain the optimum.
        let completion: Vec<u16> = (0..n_vars)
            .map(|i| {
                let v = VarId(i as u32);
                if ev.is_observed(v) {
                    ev.mask(v).trailing_zeros() as u16
                } else {
                    *got.assignment.get(&v).expect("open variable must be assigned")
                }
            })
            .collect();
        let achieved = oracle_max_product_linear(&spn, &one_hot(spn.vars(), &completion));
        assert!(
            (achieved.ln() - best.ln()).abs() < 1e-9,
            "case {case}: assignment scores {achieved}, best {best}"
        );
    }
}

#[test]
fn mpe_of_fully_observed_evidence_is_empty_and_bounded_by_evaluate() {
    let mut rng = seeded(0xf0b5);
    for _ in 0..20 {
        let n = rng.random_range(2..=6);
        let spn = random_ternary_spn(&mut rng, n);
        let completion: Vec<u16> = (0..spn.vars().len())
            .map(|_| rng.random_range(0..3))
            .collect();
        let ev = one_hot(spn.vars(), &completion);
        let res = match spn.mpe(&ev) {
            Ok(r) => r,
            Err(_) => continue, // outside support
        };
        assert!(res.assignment.is_empty());
        let eval = spn.evaluate(&ev).unwrap();
        assert!(res.log_score <= eval + 1e-9, "max exceeded sum: {res:?} vs {eval}");
    }
}

#[test]
fn deterministic_one_hot_mixture_mpe_is_component_mode() {
    // A two-component mixture whose root weight is (almost) one-hot; MPE
    // must decode the surviving component's mode.
    let mut vars = VarTable::new();
    let x = vars.add_var(2).unwrap();
    let y = vars.add_var(2).unwrap();
    let mut b = toponets_core::SpnBuilder::new(vars.clone());
    let ix = [b.indicator(x, 0).unwrap(), b.indicator(x, 1).unwrap()];
    let iy = [b.indicator(y, 0).unwrap(), b.indicator(y, 1).unwrap()];
    // Component 0 mode: (0, 1); component 1 mode: (1, 0).
    let sa0 = b.sum(&ix, &[0.9, 0.1]).unwrap();
    let sb0 = b.sum(&iy, &[0.2, 0.8]).unwrap();
    let p0 = b.product(&[sa0, sb0]).unwrap();
    let sa1 = b.sum(&ix, &[0.1, 0.9]).unwrap();
    let sb1 = b.sum(&iy, &[0.8, 0.2]).unwrap();
    let p1 = b.product(&[sa1, sb1]).unwrap();
    let root = b.sum(&[p0, p1], &[1.0 - 1e-9, 1e-9]).unwrap();
    let spn = b.finish(root).unwrap();
    let res = spn.mpe(&Evidence::marginalized(&vars)).unwrap();
    assert_eq!(res.assignment.get(&x), Some(&0));
    assert_eq!(res.assignment.get(&y), Some(&1));
}

#[test]
fn marginalizing_a_variable_never_decreases_evaluate() {
    let mut rng = seeded(0x9070);
    for _ in 0..40 {
        let n = rng.random_range(2..=8);
        let spn = random_ternary_spn(&mut rng, n);
        let ev = random_evidence(&mut rng, spn.vars());
        let base = spn.evaluate(&ev).unwrap();
        for v in spn.vars().vars() {
            let mut freed = ev.clone();
            freed.marginalize(v).unwrap();
            let widened = spn.evaluate(&freed).unwrap();
            assert!(
                widened >= base - 1e-12,
                "marginalizing {v:?} decreased: {base} -> {widened}"
            );
        }
        // Normalized network: probabilities stay in [0, 1].
        assert!(base <= 1e-12);
    }
}

#[test]
fn repeated_calls_are_bit_identical() {
    let mut rng = seeded(0xb17);
    let spn = random_ternary_spn(&mut rng, 9);
    let ev = random_evidence(&mut rng, spn.vars());
    let a = spn.evaluate(&ev).unwrap();
    let b = spn.evaluate(&ev).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    let ma = spn.marginals(&ev).unwrap();
    let mb = spn.marginals(&ev).unwrap();
    for v in spn.vars().vars() {
        for (x, y) in ma.posterior(v).iter().zip(mb.posterior(v)) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn evaluation_cost_is_one_operation_per_edge() {
    let mut rng = seeded(0x09c0);
    for _ in 0..10 {
        let n = rng.random_range(2..=10);
        let spn = random_ternary_spn(&mut rng, n);
        let ev = random_evidence(&mut rng, spn.vars());
        let (_, stats) = spn.evaluate_counted(&ev).unwrap();
        assert_eq!(stats.edge_ops, spn.num_edges() as u64);
    }
}

#[test]
fn downward_marginals_match_finite_differences_of_evaluate() {
    let mut rng = seeded(0xfd1f);
    let h: f64 = 1e-5;
    for case in 0..25 {
        let n = rng.random_range(2..=6);
        let spn = random_ternary_spn(&mut rng, n);
        let vars = spn.vars().clone();
        let ev = {
            // Keep at least one variable open so there is something to check.
            let mut ev = random_evidence(&mut rng, &vars);
            ev.marginalize(VarId(0)).unwrap();
            ev
        };
        if spn.evaluate(&ev).unwrap() == f64::NEG_INFINITY {
            continue;
        }
        let marg = spn.marginals(&ev).unwrap();

        let base_rows: Vec<Vec<f64>> = vars
            .vars()
            .map(|v| {
                (0..vars.cardinality(v))
                    .map(|k| if ev.allows(v, k) { 0.0 } else { f64::NEG_INFINITY })
                    .collect()
            })
            .collect();
        for v in vars.vars() {
            if ev.is_observed(v) {
                continue;
            }
            let card = vars.cardinality(v);
            let mut fd = vec![0.0; card as usize];
            for k in 0..card {
                if !ev.allows(v, k) {
                    continue;
                }
                let mut plus = base_rows.clone();
                plus[v.index()][k as usize] = (1.0 + h).ln();
                let mut minus = base_rows.clone();
                minus[v.index()][k as usize] = (1.0 - h).ln();
                let sp = SoftEvidence::from_log_rows(&vars, plus).unwrap();
                let sm = SoftEvidence::from_log_rows(&vars, minus).unwrap();
                let vp = spn.evaluate_soft(&sp).unwrap().exp();
                let vm = spn.evaluate_soft(&sm).unwrap().exp();
                fd[k as usize] = (vp - vm) / (2.0 * h);
            }
            let total: f64 = fd.iter().sum();
            if total <= 0.0 {
                continue;
            }
            for k in 0..card as usize {
                let got = marg.posterior(v)[k];
                let want = fd[k] / total;
                let denom = want.abs().max(1e-12);
                assert!(
                    ((got - want) / denom).abs() < 1e-4 || (got - want).abs() < 1e-9,
                    "case {case}, var {v:?}, value {k}: {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn analytic_weight_gradients_match_finite_differences() {
    let mut rng = seeded(0x56fd);
    let h: f64 = 1e-6;
    for case in 0..15 {
        let n = rng.random_range(2..=6);
        let spn = random_ternary_spn(&mut rng, n);
        let ev = random_evidence(&mut rng, spn.vars());
        if spn.evaluate(&ev).unwrap() == f64::NEG_INFINITY {
            continue;
        }
        let grads = learn::loglik_weight_gradients(&spn, &ev).unwrap();
        let mut offset = 0;
        for s in spn.sum_nodes() {
            let w = spn.sum_weights(s).to_vec();
            for k in 0..w.len() {
                let mut plus = spn.clone();
                let mut wp = w.clone();
                wp[k] += h;
                plus.set_sum_weights(s, &wp).unwrap();
                let mut minus = spn.clone();
                let mut wm = w.clone();
                wm[k] -= h;
                minus.set_sum_weights(s, &wm).unwrap();
                let fd = (plus.evaluate(&ev).unwrap() - minus.evaluate(&ev).unwrap()) / (2.0 * h);
                let got = grads[offset + k];
                let denom = fd.abs().max(1e-9);
                assert!(
                    ((got - fd) / denom).abs() < 1e-4 || (got - fd).abs() < 1e-9,
                    "case {case}, sum {s:?}, edge {k}: {got} vs {fd}"
                );
            }
            offset += w.len();
        }
    }
}
