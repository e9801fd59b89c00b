//! Independent brute-force oracles shared by the integration suites.
//!
//! Everything here recomputes quantities from first principles — recursive
//! expansion of the network polynomial in linear (non-log) arithmetic,
//! exhaustive enumeration over completions, exact elimination on trees —
//! and never calls the inference paths it is used to check.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use toponets_core::learn::{generate_dense_structure, StructureConfig};
use toponets_core::spn::{Evidence, NodeId, NodeKind, Spn, VarId, VarTable};

/// Linear-space recursive expansion of the network polynomial at the
/// evidence: indicators contribute 0/1 by mask, sums weight their children,
/// products multiply. Memoized per node, which is the same value direct
/// expansion over all induced trees yields.
pub fn oracle_eval_linear(spn: &Spn, ev: &Evidence) -> f64 {
    fn rec(spn: &Spn, ev: &Evidence, node: NodeId, memo: &mut [Option<f64>]) -> f64 {
        if let Some(v) = memo[node.index()] {
            return v;
        }
        let v = match spn.kind(node) {
            NodeKind::Indicator { var, value } => {
                if ev.allows(var, value) {
                    1.0
                } else {
                    0.0
                }
            }
            NodeKind::Sum => spn
                .children(node)
                .iter()
                .zip(spn.sum_weights(node))
                .map(|(c, w)| w * rec(spn, ev, *c, memo))
                .sum(),
            NodeKind::Product => spn
                .children(node)
                .iter()
                .map(|c| rec(spn, ev, *c, memo))
                .product(),
        };
        memo[node.index()] = Some(v);
        v
    }
    let mut memo = vec![None; spn.num_nodes()];
    rec(spn, ev, spn.root(), &mut memo)
}

/// Linear-space max-product value: sums become weighted maxima.
pub fn oracle_max_product_linear(spn: &Spn, ev: &Evidence) -> f64 {
    fn rec(spn: &Spn, ev: &Evidence, node: NodeId, memo: &mut [Option<f64>]) -> f64 {
        if let Some(v) = memo[node.index()] {
            return v;
        }
        let v = match spn.kind(node) {
            NodeKind::Indicator { var, value } => {
                if ev.allows(var, value) {
                    1.0
                } else {
                    0.0
                }
            }
            NodeKind::Sum => spn
                .children(node)
                .iter()
                .zip(spn.sum_weights(node))
                .map(|(c, w)| w * rec(spn, ev, *c, memo))
                .fold(0.0f64, f64::max),
            NodeKind::Product => spn
                .children(node)
                .iter()
                .map(|c| rec(spn, ev, *c, memo))
                .product(),
        };
        memo[node.index()] = Some(v);
        v
    }
    let mut memo = vec![None; spn.num_nodes()];
    rec(spn, ev, spn.root(), &mut memo)
}

/// All full assignments consistent with the evidence masks.
pub fn completions(vars: &VarTable, ev: &Evidence) -> Vec<Vec<u16>> {
    let allowed: Vec<Vec<u16>> = vars
        .vars()
        .map(|v| {
            (0..vars.cardinality(v))
                .filter(|&k| ev.allows(v, k))
                .collect()
        })
        .collect();
    let mut out: Vec<Vec<u16>> = vec![Vec::new()];
    for row in &allowed {
        let mut next = Vec::with_capacity(out.len() * row.len());
        for prefix in &out {
            for &v in row {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

pub fn one_hot(vars: &VarTable, assignment: &[u16]) -> Evidence {
    let mut ev = Evidence::marginalized(vars);
    for (i, &v) in assignment.iter().enumerate() {
        ev.observe(VarId(i as u32), v).unwrap();
    }
    ev
}

/// Posterior per variable by exhaustive enumeration: sums the linear oracle
/// over every completion. Returns (rows, total linear mass).
pub fn oracle_marginals(spn: &Spn, ev: &Evidence) -> (Vec<Vec<f64>>, f64) {
    let vars = spn.vars();
    let mut rows: Vec<Vec<f64>> = vars
        .vars()
        .map(|v| vec![0.0; vars.cardinality(v) as usize])
        .collect();
    let mut total = 0.0;
    for completion in completions(vars, ev) {
        let p = oracle_eval_linear(spn, &one_hot(vars, &completion));
        total += p;
        for (i, &v) in completion.iter().enumerate() {
            rows[i][v as usize] += p;
        }
    }
    for row in rows.iter_mut() {
        for x in row.iter_mut() {
            *x /= total;
        }
    }
    (rows, total)
}

/// Best max-product score over all completions, in linear space.
pub fn oracle_best_completion(spn: &Spn, ev: &Evidence) -> (Vec<u16>, f64) {
    let vars = spn.vars();
    let mut best = (Vec::new(), -1.0);
    for completion in completions(vars, ev) {
        let s = oracle_max_product_linear(spn, &one_hot(vars, &completion));
        if s > best.1 {
            best = (completion, s);
        }
    }
    best
}

/// Random generation config with small counts, exercised across the whole
/// supported range.
pub fn random_structure_config(rng: &mut ChaCha8Rng) -> StructureConfig {
    StructureConfig {
        decompositions_per_level: rng.random_range(1..=3),
        subsets_per_decomposition: rng.random_range(2..=3),
        mixtures_per_scope: rng.random_range(1..=3),
        max_depth: rng.random_range(1..=3),
        rng_seed: rng.random(),
    }
}

/// A random valid normalized SPN over `n_vars` ternary variables.
pub fn random_ternary_spn(rng: &mut ChaCha8Rng, n_vars: usize) -> Spn {
    let vars = VarTable::uniform(n_vars, 3).unwrap();
    let scope: Vec<VarId> = vars.vars().collect();
    let cfg = random_structure_config(rng);
    let mut spn = generate_dense_structure(&vars, &scope, &cfg).unwrap();
    spn.normalize_weights().unwrap();
    spn
}

/// Random evidence: a mix of observed, marginalized, and subset masks.
pub fn random_evidence(rng: &mut ChaCha8Rng, vars: &VarTable) -> Evidence {
    let mut ev = Evidence::marginalized(vars);
    for v in vars.vars() {
        let card = vars.cardinality(v);
        match rng.random_range(0..10) {
            0..=4 => ev.observe(v, rng.random_range(0..card)).unwrap(),
            5..=7 => {} // marginalized
            _ => {
                let full = (1u16 << card) - 1;
                let mask = rng.random_range(1..=full);
                ev.set_mask(v, mask).unwrap();
            }
        }
    }
    ev
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
