//! Completeness and decomposability checking with interned scope sets.

use std::collections::HashMap;

use super::{NodeId, NodeKind, Spn, SpnError, VarId};

/// One violated constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Children of this sum node do not all share one scope.
    Incomplete { node: NodeId },
    /// Children of this product node have overlapping scopes; one shared
    /// variable is reported.
    NonDecomposable { node: NodeId, shared_var: VarId },
}

/// Outcome of [`Spn::check_validity`]: all violations plus the per-node
/// scopes computed along the way. An empty report means the network is a
/// valid SPN.
#[derive(Debug)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
    pub scopes: ScopeTable,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Per-node variable scopes, interned: equal scopes share one bit set.
#[derive(Debug)]
pub struct ScopeTable {
    num_vars: usize,
    words: usize,
    /// Interned scope bit sets, concatenated `words`-word blocks.
    sets: Vec<u64>,
    sizes: Vec<u32>,
    scope_of: Vec<u32>,
}

impl ScopeTable {
    pub fn scope_size(&self, node: NodeId) -> usize {
        self.sizes[self.scope_of[node.index()] as usize] as usize
    }

    /// Variables in the node's scope, ascending.
    pub fn scope_vars(&self, node: NodeId) -> Vec<VarId> {
        let set = self.set(self.scope_of[node.index()] as usize);
        let mut out = Vec::new();
        for (w, &bits) in set.iter().enumerate() {
            let mut bits = bits;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                let v = w * 64 + b;
                if v < self.num_vars {
                    out.push(VarId(v as u32));
                }
                bits &= bits - 1;
            }
        }
        out
    }

    pub fn same_scope(&self, a: NodeId, b: NodeId) -> bool {
        self.scope_of[a.index()] == self.scope_of[b.index()]
    }

    pub fn scopes_disjoint(&self, a: NodeId, b: NodeId) -> bool {
        let sa = self.set(self.scope_of[a.index()] as usize);
        let sb = self.set(self.scope_of[b.index()] as usize);
        sa.iter().zip(sb).all(|(x, y)| x & y == 0)
    }

    fn set(&self, id: usize) -> &[u64] {
        &self.sets[id * self.words..(id + 1) * self.words]
    }
}

impl Spn {
    /// Verifies completeness of every sum node and decomposability of every
    /// product node, computing per-node scopes bottom-up. Structural
    /// defects (dangling children, order violations, childless internals)
    /// are errors; constraint violations are listed in the report. An empty
    /// report marks the network validated.
    pub fn check_validity(&self) -> Result<ValidityReport, SpnError> {
        let n = self.num_nodes();
        let num_vars = self.vars().len();
        let words = num_vars.div_ceil(64).max(1);

        let mut interner: HashMap<Vec<u64>, u32> = HashMap::new();
        let mut sets: Vec<u64> = Vec::new();
        let mut sizes: Vec<u32> = Vec::new();
        let mut scope_of = vec![0u32; n];
        let mut violations = Vec::new();

        let mut intern = |buf: &[u64], sets: &mut Vec<u64>, sizes: &mut Vec<u32>| -> u32 {
            if let Some(&id) = interner.get(buf) {
                return id;
            }
            let id = sizes.len() as u32;
            sets.extend_from_slice(buf);
            sizes.push(buf.iter().map(|w| w.count_ones()).sum());
            interner.insert(buf.to_vec(), id);
            id
        };

        let mut buf = vec![0u64; words];
        for i in 0..n {
            let node = NodeId(i as u32);
            for c in self.children(node) {
                if c.index() >= i {
                    return Err(SpnError::OrderViolation { node: i as u32, child: c.0 });
                }
            }
            match self.kind(node) {
                NodeKind::Indicator { var, value } => {
                    if var.index() >= num_vars {
                        return Err(SpnError::UnknownVar { var: var.0 });
                    }
                    if value >= self.vars().cardinality(var) {
                        return Err(SpnError::BadValue {
                            var: var.0,
                            value,
                            cardinality: self.vars().cardinality(var),
                        });
                    }
                    buf.iter_mut().for_each(|w| *w = 0);
                    buf[var.index() / 64] |= 1u64 << (var.index() % 64);
                    scope_of[i] = intern(&buf, &mut sets, &mut sizes);
                }
                NodeKind::Sum => {
                    let kids = self.children(node);
                    if kids.is_empty() {
                        return Err(SpnError::NoChildren { node: i as u32 });
                    }
                    if self.sum_weights(node).len() != kids.len() {
                        return Err(SpnError::WeightCountMismatch {
                            node: i as u32,
                            weights: self.sum_weights(node).len(),
                            children: kids.len(),
                        });
                    }
                    let first = scope_of[kids[0].index()];
                    if kids.iter().any(|c| scope_of[c.index()] != first) {
                        violations.push(Violation::Incomplete { node });
                    }
                    // Scope is the union either way, so downstream checks
                    // keep working past a local violation.
                    buf.iter_mut().for_each(|w| *w = 0);
                    for c in kids {
                        let id = scope_of[c.index()] as usize;
                        for (w, &bits) in sets[id * words..(id + 1) * words].iter().enumerate() {
                            buf[w] |= bits;
                        }
                    }
                    scope_of[i] = intern(&buf, &mut sets, &mut sizes);
                }
                NodeKind::Product => {
                    let kids = self.children(node);
                    if kids.is_empty() {
                        return Err(SpnError::NoChildren { node: i as u32 });
                    }
                    buf.iter_mut().for_each(|w| *w = 0);
                    let mut overlap: Option<VarId> = None;
                    for c in kids {
                        let id = scope_of[c.index()] as usize;
                        for (w, &bits) in sets[id * words..(id + 1) * words].iter().enumerate() {
                            if overlap.is_none() && buf[w] & bits != 0 {
                                let b = (buf[w] & bits).trailing_zeros() as usize;
                                overlap = Some(VarId((w * 64 + b) as u32));
                            }
                            buf[w] |= bits;
                        }
                    }
                    if let Some(shared_var) = overlap {
                        violations.push(Violation::NonDecomposable { node, shared_var });
                    }
                    scope_of[i] = intern(&buf, &mut sets, &mut sizes);
                }
            }
        }

        let report = ValidityReport {
            violations,
            scopes: ScopeTable { num_vars, words, sets, sizes, scope_of },
        };
        if report.is_valid() {
            self.mark_validated();
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spn::{SpnBuilder, VarTable};

    fn two_var_table() -> (VarTable, VarId, VarId) {
        let mut vars = VarTable::new();
        let a = vars.add_var(2).unwrap();
        let b = vars.add_var(2).unwrap();
        (vars, a, b)
    }

    /// Naive Bayes mixture over two binary variables: root sum over
    /// per-component products of per-variable indicator sums.
    pub(crate) fn naive_bayes_mixture(components: &[(f64, [f64; 2], [f64; 2])]) -> crate::spn::Spn {
        let (vars, a, b) = two_var_table();
        let mut builder = SpnBuilder::new(vars);
        let ia = [builder.indicator(a, 0).unwrap(), builder.indicator(a, 1).unwrap()];
        let ib = [builder.indicator(b, 0).unwrap(), builder.indicator(b, 1).unwrap()];
        let mut prods = Vec::new();
        let mut prior = Vec::new();
        for (w, wa, wb) in components {
            let sa = builder.sum(&ia, wa).unwrap();
            let sb = builder.sum(&ib, wb).unwrap();
            prods.push(builder.product(&[sa, sb]).unwrap());
            prior.push(*w);
        }
        let root = builder.sum(&prods, &prior).unwrap();
        builder.finish(root).unwrap()
    }

    #[test]
    fn naive_bayes_mixture_is_valid() {
        let spn = naive_bayes_mixture(&[
            (0.5, [0.3, 0.7], [0.6, 0.4]),
            (0.3, [0.9, 0.1], [0.2, 0.8]),
            (0.2, [0.5, 0.5], [0.5, 0.5]),
        ]);
        let report = spn.check_validity().unwrap();
        assert!(report.is_valid());
        assert!(spn.is_validated());
        assert_eq!(report.scopes.scope_size(spn.root()), 2);
    }

    #[test]
    fn detects_non_decomposable_product() {
        let (vars, a, _) = two_var_table();
        let mut b = SpnBuilder::new(vars);
        let i0 = b.indicator(a, 0).unwrap();
        let i1 = b.indicator(a, 1).unwrap();
        let s0 = b.sum(&[i0, i1], &[0.5, 0.5]).unwrap();
        let s1 = b.sum(&[i0, i1], &[0.2, 0.8]).unwrap();
        let p = b.product(&[s0, s1]).unwrap();
        let spn = b.finish(p).unwrap();
        let report = spn.check_validity().unwrap();
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(
            report.violations[0],
            Violation::NonDecomposable { shared_var: VarId(0), .. }
        ));
        assert!(!spn.is_validated());
    }

    #[test]
    fn detects_incomplete_sum() {
        let (vars, a, bv) = two_var_table();
        let mut b = SpnBuilder::new(vars);
        let ia = b.indicator(a, 0).unwrap();
        let ib0 = b.indicator(bv, 0).unwrap();
        let ib1 = b.indicator(bv, 1).unwrap();
        let sb = b.sum(&[ib0, ib1], &[0.5, 0.5]).unwrap();
        // One child scoped {a, b}, the other {a}.
        let p = b.product(&[ia, sb]).unwrap();
        let s = b.sum(&[p, ia], &[0.5, 0.5]).unwrap();
        let spn = b.finish(s).unwrap();
        let report = spn.check_validity().unwrap();
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(report.violations[0], Violation::Incomplete { .. }));
    }
}
