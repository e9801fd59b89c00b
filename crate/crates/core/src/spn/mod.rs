//! Sum-product networks: representation, validation, and exact inference.
//!
//! An [`Spn`] is a directed acyclic graph of weighted sum, product and
//! indicator nodes stored as a flat, topologically ordered array (children
//! always precede parents), so every inference pass is a single linear sweep
//! over the node table. All probabilities are held in natural-log space;
//! zero probability is the `-inf` sentinel.
//!
//! A network is *complete* when every sum node's children share one variable
//! scope and *decomposable* when every product node's children have pairwise
//! disjoint scopes; [`Spn::check_validity`] verifies both, and validity
//! guarantees that `evaluate`, `marginals` and `mpe` are exact in one
//! upward (plus one downward) pass.

mod builder;
pub(crate) mod eval;
mod io;
mod validity;

pub use builder::SpnBuilder;
pub use eval::{EvalStats, Marginals, SoftEvidence};
pub use validity::{ScopeTable, ValidityReport, Violation};

use std::collections::BTreeMap;
use std::sync::OnceLock;

use thiserror::Error;

/// Largest supported cardinality of a categorical variable.
///
/// Evidence masks are stored as one `u16` bit set per variable.
pub const MAX_CARDINALITY: u16 = 16;

/// Dense handle of a variable in a [`VarTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub u32);

/// Dense handle of a node within one [`Spn`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl VarId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// The discrete variables an SPN is defined over: per-variable cardinality.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VarTable {
    cards: Vec<u16>,
}

impl VarTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Table of `n` variables that all share one cardinality.
    pub fn uniform(n: usize, cardinality: u16) -> Result<Self, SpnError> {
        let mut t = Self::new();
        for _ in 0..n {
            t.add_var(cardinality)?;
        }
        Ok(t)
    }

    pub fn add_var(&mut self, cardinality: u16) -> Result<VarId, SpnError> {
        if cardinality < 2 || cardinality > MAX_CARDINALITY {
            return Err(SpnError::BadCardinality {
                var: self.cards.len(),
                cardinality,
            });
        }
        let id = VarId(self.cards.len() as u32);
        self.cards.push(cardinality);
        Ok(id)
    }

    #[inline]
    pub fn cardinality(&self, var: VarId) -> u16 {
        self.cards[var.index()]
    }

    pub fn len(&self) -> usize {
        self.cards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cards.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        (0..self.cards.len() as u32).map(VarId)
    }

    pub(crate) fn cards(&self) -> &[u16] {
        &self.cards
    }
}

/// Node payload. Sum weights live in the owning [`Spn`]'s flat weight table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Sum,
    Product,
    Indicator { var: VarId, value: u16 },
}

/// Generalized evidence: one boolean mask per variable, stored as bit sets.
///
/// A mask with exactly one bit observes the variable, a full mask
/// marginalizes it out, and intermediate masks express subset evidence.
/// Every mask must keep at least one admissible value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evidence {
    masks: Vec<u16>,
    cards: Vec<u16>,
}

impl Evidence {
    /// Evidence that marginalizes every variable out (all masks full).
    pub fn marginalized(vars: &VarTable) -> Self {
        let masks = vars
            .cards()
            .iter()
            .map(|&c| full_mask(c))
            .collect();
        Self {
            masks,
            cards: vars.cards().to_vec(),
        }
    }

    /// Observes `var = value`, replacing any previous mask for `var`.
    pub fn observe(&mut self, var: VarId, value: u16) -> Result<(), SpnError> {
        let card = self.card_of(var)?;
        if value >= card {
            return Err(SpnError::BadValue { var: var.0, value, cardinality: card });
        }
        self.masks[var.index()] = 1 << value;
        Ok(())
    }

    /// Restores `var` to fully marginalized.
    pub fn marginalize(&mut self, var: VarId) -> Result<(), SpnError> {
        let card = self.card_of(var)?;
        self.masks[var.index()] = full_mask(card);
        Ok(())
    }

    /// Sets an explicit subset mask for `var`; must admit at least one value.
    pub fn set_mask(&mut self, var: VarId, mask: u16) -> Result<(), SpnError> {
        let card = self.card_of(var)?;
        let mask = mask & full_mask(card);
        if mask == 0 {
            return Err(SpnError::EmptyMask { var: var.0 });
        }
        self.masks[var.index()] = mask;
        Ok(())
    }

    #[inline]
    pub fn allows(&self, var: VarId, value: u16) -> bool {
        self.masks[var.index()] & (1 << value) != 0
    }

    #[inline]
    pub fn mask(&self, var: VarId) -> u16 {
        self.masks[var.index()]
    }

    /// True when the variable's mask admits every value.
    pub fn is_marginalized(&self, var: VarId) -> bool {
        self.masks[var.index()] == full_mask(self.cards[var.index()])
    }

    /// True when the variable's mask admits exactly one value.
    pub fn is_observed(&self, var: VarId) -> bool {
        self.masks[var.index()].count_ones() == 1
    }

    pub fn num_vars(&self) -> usize {
        self.masks.len()
    }

    fn card_of(&self, var: VarId) -> Result<u16, SpnError> {
        self.cards
            .get(var.index())
            .copied()
            .ok_or(SpnError::UnknownVar { var: var.0 })
    }
}

#[inline]
fn full_mask(card: u16) -> u16 {
    if card as u32 == 16 {
        u16::MAX
    } else {
        (1u16 << card) - 1
    }
}

/// Max-product decoding result: the chosen completion of unobserved
/// variables and the max-product log score it attains.
#[derive(Debug, Clone, PartialEq)]
pub struct MpeResult {
    /// Chosen value per variable, only for variables the evidence did not
    /// fully observe. Each chosen value is admitted by the evidence mask.
    pub assignment: BTreeMap<VarId, u16>,
    /// Log of the max-product network value at the completion.
    pub log_score: f64,
}

/// Errors from SPN construction, I/O, and inference entry points.
#[derive(Debug, Error)]
pub enum SpnError {
    #[error("variable {var} has unsupported cardinality {cardinality} (need 2..={MAX_CARDINALITY})")]
    BadCardinality { var: usize, cardinality: u16 },
    #[error("value {value} out of range for variable {var} with cardinality {cardinality}")]
    BadValue { var: u32, value: u16, cardinality: u16 },
    #[error("unknown variable id {var}")]
    UnknownVar { var: u32 },
    #[error("evidence mask for variable {var} admits no value")]
    EmptyMask { var: u32 },
    #[error("node {node}: child {child} does not precede it in topological order (cycle or dangling reference)")]
    OrderViolation { node: u32, child: u32 },
    #[error("node {node}: sum/product requires at least one child")]
    NoChildren { node: u32 },
    #[error("node {node}: {weights} weights for {children} children")]
    WeightCountMismatch { node: u32, weights: usize, children: usize },
    #[error("node {node}: non-positive or non-finite weight {weight}")]
    BadWeight { node: u32, weight: f64 },
    #[error("evidence covers {got} variables, network has {expected}")]
    EvidenceShape { expected: usize, got: usize },
    #[error("evidence has probability zero under the network")]
    ImpossibleEvidence,
    #[error("parse error{}: {msg}", node.map(|n| format!(" at node {n}")).unwrap_or_default())]
    Parse { node: Option<usize>, msg: String },
    #[error("node {node} is not a sum node")]
    NotASum { node: u32 },
}

/// A sum-product network over discrete variables.
///
/// Nodes are stored topologically ordered (children strictly precede
/// parents), with children and sum weights in flat side arrays. The
/// structure is immutable after construction; only sum weights may be
/// replaced, which keeps every evaluation a pure linear sweep that is safe
/// to run concurrently from many threads.
#[derive(Debug)]
pub struct Spn {
    vars: VarTable,
    kinds: Vec<NodeKind>,
    child_start: Vec<u32>,
    children: Vec<NodeId>,
    weight_start: Vec<u32>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    root: NodeId,
    /// Set once `check_validity` has passed with an empty report.
    validated: OnceLock<()>,
}

impl Clone for Spn {
    fn clone(&self) -> Self {
        Self {
            vars: self.vars.clone(),
            kinds: self.kinds.clone(),
            child_start: self.child_start.clone(),
            children: self.children.clone(),
            weight_start: self.weight_start.clone(),
            weights: self.weights.clone(),
            log_weights: self.log_weights.clone(),
            root: self.root,
            validated: OnceLock::new(),
        }
    }
}

impl Spn {
    pub fn num_nodes(&self) -> usize {
        self.kinds.len()
    }

    /// Total child-edge count; the arithmetic cost of one inference pass.
    pub fn num_edges(&self) -> usize {
        self.children.len()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn vars(&self) -> &VarTable {
        &self.vars
    }

    #[inline]
    pub fn kind(&self, node: NodeId) -> NodeKind {
        self.kinds[node.index()]
    }

    #[inline]
    pub fn children(&self, node: NodeId) -> &[NodeId] {
        let i = node.index();
        &self.children[self.child_start[i] as usize..self.child_start[i + 1] as usize]
    }

    #[inline]
    pub fn sum_weights(&self, node: NodeId) -> &[f64] {
        let i = node.index();
        &self.weights[self.weight_start[i] as usize..self.weight_start[i + 1] as usize]
    }

    /// Range of this node's weights within the flat weight table.
    #[inline]
    pub(crate) fn weight_range(&self, node: NodeId) -> std::ops::Range<usize> {
        let i = node.index();
        self.weight_start[i] as usize..self.weight_start[i + 1] as usize
    }

    /// Total sum-edge count (length of the flat weight table).
    pub fn num_weights(&self) -> usize {
        self.weights.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.kinds.len() as u32).map(NodeId)
    }

    /// True once `check_validity` has passed on this instance.
    pub fn is_validated(&self) -> bool {
        self.validated.get().is_some()
    }

    /// Replaces the weights of one sum node. Weights must be positive and
    /// finite; count must match the child count.
    pub fn set_sum_weights(&mut self, node: NodeId, new: &[f64]) -> Result<(), SpnError> {
        if !matches!(self.kind(node), NodeKind::Sum) {
            return Err(SpnError::NotASum { node: node.0 });
        }
        let i = node.index();
        let (ws, we) = (self.weight_start[i] as usize, self.weight_start[i + 1] as usize);
        if new.len() != we - ws {
            return Err(SpnError::WeightCountMismatch {
                node: node.0,
                weights: new.len(),
                children: we - ws,
            });
        }
        for &w in new {
            if !(w.is_finite() && w > 0.0) {
                return Err(SpnError::BadWeight { node: node.0, weight: w });
            }
        }
        self.weights[ws..we].copy_from_slice(new);
        for k in ws..we {
            self.log_weights[k] = self.weights[k].ln();
        }
        Ok(())
    }

    /// Rescales every sum node's weights to sum to one, flooring at
    /// `1e-8` so pruned-to-zero edges never become `-inf` log weights.
    /// Idempotent up to floating-point rounding. After normalization a
    /// fully marginalized evaluation yields exactly finite log 1 ≈ 0.
    pub fn normalize_weights(&mut self) -> Result<(), SpnError> {
        const FLOOR: f64 = 1e-8;
        for i in 0..self.kinds.len() {
            if !matches!(self.kinds[i], NodeKind::Sum) {
                continue;
            }
            let (ws, we) = (self.weight_start[i] as usize, self.weight_start[i + 1] as usize);
            let mut total = 0.0;
            for k in ws..we {
                let w = self.weights[k];
                if !(w.is_finite() && w > 0.0) {
                    return Err(SpnError::BadWeight { node: i as u32, weight: w });
                }
                total += w;
            }
            for k in ws..we {
                self.weights[k] /= total;
            }
            // Floor, then re-balance the residue over the floored entries.
            let mut floored_total = 0.0;
            for k in ws..we {
                if self.weights[k] < FLOOR {
                    self.weights[k] = FLOOR;
                }
                floored_total += self.weights[k];
            }
            if (floored_total - 1.0).abs() > 1e-15 {
                for k in ws..we {
                    self.weights[k] /= floored_total;
                }
            }
            for k in ws..we {
                self.log_weights[k] = self.weights[k].ln();
            }
        }
        Ok(())
    }

    /// All sum nodes together with their weight slices, for inspection.
    pub fn sum_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes()
            .filter(|&n| matches!(self.kind(n), NodeKind::Sum))
    }

    pub(crate) fn mark_validated(&self) {
        let _ = self.validated.set(());
    }
}
