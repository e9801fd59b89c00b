//! Inference passes: evaluation, gradients, marginals, and MPE decoding.
//!
//! Everything runs in natural-log space. Sum nodes use log-sum-exp with a
//! max shift (or a weighted max in MPE mode); `-inf` is the exact-zero
//! sentinel and is skipped by accumulations. Each pass is one linear sweep
//! over the topologically ordered node table, so the arithmetic cost is
//! O(edges); [`EvalStats`] reports the exact per-call edge-operation count.

use rayon::prelude::*;

use super::{Evidence, MpeResult, NodeId, NodeKind, Spn, SpnError, VarId};
use crate::util::log_add_exp;

/// Per-call operation counter: one unit per child edge visited.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalStats {
    pub edge_ops: u64,
}

/// Log-domain soft evidence: an explicit log input for every indicator.
///
/// Masked evidence is the special case where each entry is 0 or `-inf`;
/// general entries let callers splice externally computed log-likelihoods
/// into a network through its leaves.
#[derive(Debug, Clone)]
pub struct SoftEvidence {
    rows: Vec<Vec<f64>>,
}

impl SoftEvidence {
    /// `rows[var][value]` is the log input of that indicator. Row lengths
    /// must match the variable cardinalities.
    pub fn from_log_rows(vars: &super::VarTable, rows: Vec<Vec<f64>>) -> Result<Self, SpnError> {
        if rows.len() != vars.len() {
            return Err(SpnError::EvidenceShape { expected: vars.len(), got: rows.len() });
        }
        for (i, row) in rows.iter().enumerate() {
            let card = vars.cards()[i] as usize;
            if row.len() != card {
                return Err(SpnError::EvidenceShape { expected: card, got: row.len() });
            }
        }
        Ok(Self { rows })
    }

    #[inline]
    fn log_value(&self, var: VarId, value: u16) -> f64 {
        self.rows[var.index()][value as usize]
    }
}

/// Per-variable posteriors from the downward pass.
#[derive(Debug, Clone)]
pub struct Marginals {
    rows: Vec<Vec<f64>>,
}

impl Marginals {
    /// `P(var = value | evidence)`, normalized per variable.
    pub fn posterior(&self, var: VarId) -> &[f64] {
        &self.rows[var.index()]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

pub(crate) trait LeafInput: Sync {
    fn log_value(&self, var: VarId, value: u16) -> f64;
}

impl LeafInput for Evidence {
    #[inline]
    fn log_value(&self, var: VarId, value: u16) -> f64 {
        if self.allows(var, value) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }
}

impl LeafInput for SoftEvidence {
    #[inline]
    fn log_value(&self, var: VarId, value: u16) -> f64 {
        SoftEvidence::log_value(self, var, value)
    }
}

/// Phase boundaries for a parallel upward pass.
///
/// Nodes in `[0, leaf_end)` must be indicators. Each segment `[s, e)` may
/// reference only indicators and its own nodes, so segments evaluate
/// independently. Nodes from the end of the last segment onward form the
/// sequential tail. Values are identical to the single-threaded sweep for
/// any worker count.
#[derive(Debug, Clone)]
pub struct EvalPlan {
    pub leaf_end: u32,
    pub segments: Vec<(u32, u32)>,
}

impl Spn {
    fn check_evidence(&self, ev: &Evidence) -> Result<(), SpnError> {
        if ev.num_vars() != self.vars.len() {
            return Err(SpnError::EvidenceShape { expected: self.vars.len(), got: ev.num_vars() });
        }
        for v in self.vars.vars() {
            if ev.mask(v) == 0 {
                return Err(SpnError::EmptyMask { var: v.0 });
            }
        }
        Ok(())
    }

    #[inline]
    fn node_value<L: LeafInput, const MAX: bool>(&self, i: usize, input: &L, values: &[f64]) -> (f64, u64) {
        match self.kinds[i] {
            NodeKind::Indicator { var, value } => (input.log_value(var, value), 0),
            NodeKind::Product => {
                let cs = self.child_start[i] as usize;
                let ce = self.child_start[i + 1] as usize;
                let mut acc = 0.0;
                for c in &self.children[cs..ce] {
                    acc += values[c.index()];
                }
                (acc, (ce - cs) as u64)
            }
            NodeKind::Sum => {
                let cs = self.child_start[i] as usize;
                let ce = self.child_start[i + 1] as usize;
                let ws = self.weight_start[i] as usize;
                let kids = &self.children[cs..ce];
                let lws = &self.log_weights[ws..ws + kids.len()];
                let mut hi = f64::NEG_INFINITY;
                for (c, lw) in kids.iter().zip(lws) {
                    let t = lw + values[c.index()];
                    if t > hi {
                        hi = t;
                    }
                }
                let out = if MAX || hi == f64::NEG_INFINITY {
                    hi
                } else {
                    let mut acc = 0.0;
                    for (c, lw) in kids.iter().zip(lws) {
                        let t = lw + values[c.index()];
                        if t != f64::NEG_INFINITY {
                            acc += (t - hi).exp();
                        }
                    }
                    hi + acc.ln()
                };
                (out, (ce - cs) as u64)
            }
        }
    }

    fn sweep<L: LeafInput, const MAX: bool>(&self, input: &L, values: &mut Vec<f64>) -> EvalStats {
        let n = self.kinds.len();
        values.clear();
        values.reserve(n);
        let mut stats = EvalStats::default();
        for i in 0..n {
            let (v, ops) = self.node_value::<L, MAX>(i, input, values);
            values.push(v);
            stats.edge_ops += ops;
        }
        stats
    }

    /// Log-probability of the evidence: one upward pass. Returns `-inf`
    /// for evidence outside the network's support.
    pub fn evaluate(&self, ev: &Evidence) -> Result<f64, SpnError> {
        Ok(self.evaluate_values(ev)?[self.root.index()])
    }

    /// Upward pass exposing every node's log value.
    pub fn evaluate_values(&self, ev: &Evidence) -> Result<Vec<f64>, SpnError> {
        self.check_evidence(ev)?;
        let mut values = Vec::new();
        self.sweep::<_, false>(ev, &mut values);
        Ok(values)
    }

    /// Upward pass that also reports the exact edge-operation count.
    pub fn evaluate_counted(&self, ev: &Evidence) -> Result<(f64, EvalStats), SpnError> {
        self.check_evidence(ev)?;
        let mut values = Vec::new();
        let stats = self.sweep::<_, false>(ev, &mut values);
        Ok((values[self.root.index()], stats))
    }

    /// Evaluates the network polynomial at arbitrary log-domain leaf inputs.
    pub fn evaluate_soft(&self, soft: &SoftEvidence) -> Result<f64, SpnError> {
        if soft.rows.len() != self.vars.len() {
            return Err(SpnError::EvidenceShape { expected: self.vars.len(), got: soft.rows.len() });
        }
        let mut values = Vec::new();
        self.sweep::<_, false>(soft, &mut values);
        Ok(values[self.root.index()])
    }

    pub(crate) fn soft_values(&self, soft: &SoftEvidence) -> Vec<f64> {
        let mut values = Vec::new();
        self.sweep::<_, false>(soft, &mut values);
        values
    }

    /// Downward pass: log-derivatives of the root with respect to every
    /// node value, given precomputed upward `values`.
    pub(crate) fn log_gradients(&self, values: &[f64]) -> Vec<f64> {
        let n = self.kinds.len();
        let mut grads = vec![f64::NEG_INFINITY; n];
        grads[self.root.index()] = 0.0;
        for i in (0..n).rev() {
            let g = grads[i];
            if g == f64::NEG_INFINITY {
                continue;
            }
            match self.kinds[i] {
                NodeKind::Indicator { .. } => {}
                NodeKind::Sum => {
                    let cs = self.child_start[i] as usize;
                    let ce = self.child_start[i + 1] as usize;
                    let ws = self.weight_start[i] as usize;
                    for (k, c) in self.children[cs..ce].iter().enumerate() {
                        let contrib = g + self.log_weights[ws + k];
                        let slot = &mut grads[c.index()];
                        *slot = log_add_exp(*slot, contrib);
                    }
                }
                NodeKind::Product => {
                    let cs = self.child_start[i] as usize;
                    let ce = self.child_start[i + 1] as usize;
                    let kids = &self.children[cs..ce];
                    let mut finite_sum = 0.0;
                    let mut n_zero = 0usize;
                    for c in kids {
                        let v = values[c.index()];
                        if v == f64::NEG_INFINITY {
                            n_zero += 1;
                        } else {
                            finite_sum += v;
                        }
                    }
                    for c in kids {
                        let v = values[c.index()];
                        let contrib = match n_zero {
                            0 => g + finite_sum - v,
                            1 if v == f64::NEG_INFINITY => g + finite_sum,
                            _ => f64::NEG_INFINITY,
                        };
                        if contrib != f64::NEG_INFINITY {
                            let slot = &mut grads[c.index()];
                            *slot = log_add_exp(*slot, contrib);
                        }
                    }
                }
            }
        }
        grads
    }

    pub(crate) fn values_and_gradients<L: LeafInput>(&self, input: &L) -> (Vec<f64>, Vec<f64>) {
        let mut values = Vec::new();
        self.sweep::<_, false>(input, &mut values);
        let grads = self.log_gradients(&values);
        (values, grads)
    }

    /// Posterior `P(var | evidence)` for every variable, via root gradients
    /// with respect to the indicators, renormalized per variable.
    ///
    /// Variables outside the root scope get their (normalized) evidence
    /// mask back. Errors if the evidence itself has probability zero.
    pub fn marginals(&self, ev: &Evidence) -> Result<Marginals, SpnError> {
        self.check_evidence(ev)?;
        let (values, grads) = self.values_and_gradients(ev);
        let root_val = values[self.root.index()];
        if root_val == f64::NEG_INFINITY {
            return Err(SpnError::ImpossibleEvidence);
        }

        let mut rows: Vec<Vec<f64>> = self
            .vars
            .cards()
            .iter()
            .map(|&c| vec![f64::NEG_INFINITY; c as usize])
            .collect();
        let mut in_scope = vec![false; self.vars.len()];
        for (i, kind) in self.kinds.iter().enumerate() {
            if let NodeKind::Indicator { var, value } = kind {
                in_scope[var.index()] = true;
                if ev.allows(*var, *value) {
                    let row = &mut rows[var.index()][*value as usize];
                    *row = log_add_exp(*row, grads[i]);
                }
            }
        }

        for (vi, row) in rows.iter_mut().enumerate() {
            let var = VarId(vi as u32);
            if !in_scope[vi] {
                let card = self.vars.cardinality(var);
                let admitted = (0..card).filter(|&k| ev.allows(var, k)).count() as f64;
                for (k, slot) in row.iter_mut().enumerate() {
                    *slot = if ev.allows(var, k as u16) { 1.0 / admitted } else { 0.0 };
                }
                continue;
            }
            let mut total = 0.0;
            for slot in row.iter_mut() {
                *slot = (*slot - root_val).exp();
                total += *slot;
            }
            if total <= 0.0 {
                return Err(SpnError::ImpossibleEvidence);
            }
            for slot in row.iter_mut() {
                *slot /= total;
            }
        }
        Ok(Marginals { rows })
    }

    /// Max-product decoding: sums act as weighted maxima on the way up and
    /// the maximizing child is traced on the way down. Returns the chosen
    /// completion for variables the evidence leaves open, plus the
    /// max-product log score. Ties break toward the lowest child index.
    pub fn mpe(&self, ev: &Evidence) -> Result<MpeResult, SpnError> {
        self.check_evidence(ev)?;
        let mut values = Vec::new();
        self.sweep::<_, true>(ev, &mut values);
        let log_score = values[self.root.index()];
        if log_score == f64::NEG_INFINITY {
            return Err(SpnError::ImpossibleEvidence);
        }

        let mut assignment = std::collections::BTreeMap::new();
        let mut stack = vec![self.root];
        let mut visited = vec![false; self.kinds.len()];
        while let Some(node) = stack.pop() {
            let i = node.index();
            if visited[i] {
                continue;
            }
            visited[i] = true;
            match self.kinds[i] {
                NodeKind::Indicator { var, value } => {
                    if !ev.is_observed(var) {
                        assignment.insert(var, value);
                    }
                }
                NodeKind::Product => {
                    stack.extend_from_slice(self.children(node));
                }
                NodeKind::Sum => {
                    let cs = self.child_start[i] as usize;
                    let ws = self.weight_start[i] as usize;
                    let kids = self.children(node);
                    let mut best = 0usize;
                    let mut best_val = f64::NEG_INFINITY;
                    for (k, c) in kids.iter().enumerate() {
                        let t = self.log_weights[ws + k] + values[c.index()];
                        if t > best_val {
                            best_val = t;
                            best = k;
                        }
                    }
                    debug_assert!(best_val != f64::NEG_INFINITY);
                    stack.push(self.children[cs + best]);
                }
            }
        }
        Ok(MpeResult { assignment, log_score })
    }

    /// Upward pass honoring an [`EvalPlan`]: indicators and per-segment
    /// sub-networks evaluate in parallel, the tail sequentially. Bit-equal
    /// to [`Spn::evaluate`] regardless of thread count.
    pub fn evaluate_planned(&self, ev: &Evidence, plan: &EvalPlan) -> Result<f64, SpnError> {
        self.check_evidence(ev)?;
        let n = self.kinds.len();
        let leaf_end = plan.leaf_end as usize;
        let mut values = vec![f64::NEG_INFINITY; n];

        let tail_start = plan.segments.last().map_or(leaf_end, |&(_, e)| e as usize);
        {
            let (leaves, rest) = values.split_at_mut(leaf_end);
            leaves
                .par_iter_mut()
                .enumerate()
                .for_each(|(i, slot)| match self.kinds[i] {
                    NodeKind::Indicator { var, value } => {
                        *slot = <Evidence as LeafInput>::log_value(ev, var, value);
                    }
                    _ => unreachable!("plan leaf region must hold indicators only"),
                });

            let mut pieces: Vec<(usize, &mut [f64])> = Vec::with_capacity(plan.segments.len());
            let mut rest = rest;
            let mut cursor = leaf_end;
            for &(s, e) in &plan.segments {
                let (s, e) = (s as usize, e as usize);
                debug_assert_eq!(s, cursor);
                let (piece, next) = rest.split_at_mut(e - s);
                pieces.push((s, piece));
                rest = next;
                cursor = e;
            }
            let leaves = &*leaves;
            pieces.into_par_iter().for_each(|(start, piece)| {
                for i in start..start + piece.len() {
                    let (v, _) = self.node_value_split::<false>(i, leaves, start, piece);
                    piece[i - start] = v;
                }
            });
        }

        for i in tail_start..n {
            let (v, _) = self.node_value::<Evidence, false>(i, ev, &values);
            values[i] = v;
        }
        Ok(values[self.root.index()])
    }

    /// Like [`node_value`] but with the value buffer split into the shared
    /// leaf region and one segment-local piece.
    #[inline]
    fn node_value_split<const MAX: bool>(
        &self,
        i: usize,
        leaves: &[f64],
        seg_start: usize,
        piece: &[f64],
    ) -> (f64, u64) {
        let fetch = |c: NodeId| -> f64 {
            let ci = c.index();
            if ci < leaves.len() {
                leaves[ci]
            } else {
                debug_assert!(ci >= seg_start && ci < seg_start + piece.len());
                piece[ci - seg_start]
            }
        };
        match self.kinds[i] {
            NodeKind::Indicator { .. } => unreachable!("indicators live in the leaf region"),
            NodeKind::Product => {
                let cs = self.child_start[i] as usize;
                let ce = self.child_start[i + 1] as usize;
                let mut acc = 0.0;
                for c in &self.children[cs..ce] {
                    acc += fetch(*c);
                }
                (acc, (ce - cs) as u64)
            }
            NodeKind::Sum => {
                let cs = self.child_start[i] as usize;
                let ce = self.child_start[i + 1] as usize;
                let ws = self.weight_start[i] as usize;
                let kids = &self.children[cs..ce];
                let lws = &self.log_weights[ws..ws + kids.len()];
                let mut hi = f64::NEG_INFINITY;
                for (c, lw) in kids.iter().zip(lws) {
                    let t = lw + fetch(*c);
                    if t > hi {
                        hi = t;
                    }
                }
                let out = if MAX || hi == f64::NEG_INFINITY {
                    hi
                } else {
                    let mut acc = 0.0;
                    for (c, lw) in kids.iter().zip(lws) {
                        let t = lw + fetch(*c);
                        if t != f64::NEG_INFINITY {
                            acc += (t - hi).exp();
                        }
                    }
                    hi + acc.ln()
                };
                (out, (ce - cs) as u64)
            }
        }
    }
}
