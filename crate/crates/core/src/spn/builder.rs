//! Incremental construction of topologically ordered SPNs.

use std::collections::HashMap;
use std::sync::OnceLock;

use super::{NodeId, NodeKind, Spn, SpnError, VarId, VarTable};

/// Appends nodes bottom-up; children must already exist, which makes the
/// stored order topological by construction. Indicator nodes are
/// deduplicated per `(variable, value)` so leaves are shared across the
/// whole network.
pub struct SpnBuilder {
    vars: VarTable,
    kinds: Vec<NodeKind>,
    child_start: Vec<u32>,
    children: Vec<NodeId>,
    weight_start: Vec<u32>,
    weights: Vec<f64>,
    indicators: HashMap<(u32, u16), NodeId>,
}

impl SpnBuilder {
    pub fn new(vars: VarTable) -> Self {
        Self {
            vars,
            kinds: Vec::new(),
            child_start: vec![0],
            children: Vec::new(),
            weight_start: vec![0],
            weights: Vec::new(),
            indicators: HashMap::new(),
        }
    }

    pub fn vars(&self) -> &VarTable {
        &self.vars
    }

    pub fn num_nodes(&self) -> usize {
        self.kinds.len()
    }

    /// Next node id to be assigned; useful for recording layer boundaries.
    pub fn next_id(&self) -> NodeId {
        NodeId(self.kinds.len() as u32)
    }

    /// Returns the (shared) indicator node for `var = value`.
    pub fn indicator(&mut self, var: VarId, value: u16) -> Result<NodeId, SpnError> {
        let card = self
            .vars
            .cards()
            .get(var.index())
            .copied()
            .ok_or(SpnError::UnknownVar { var: var.0 })?;
        if value >= card {
            return Err(SpnError::BadValue { var: var.0, value, cardinality: card });
        }
        if let Some(&id) = self.indicators.get(&(var.0, value)) {
            return Ok(id);
        }
        let id = self.push(NodeKind::Indicator { var, value }, &[], &[])?;
        self.indicators.insert((var.0, value), id);
        Ok(id)
    }

    pub fn product(&mut self, children: &[NodeId]) -> Result<NodeId, SpnError> {
        if children.is_empty() {
            return Err(SpnError::NoChildren { node: self.kinds.len() as u32 });
        }
        self.push(NodeKind::Product, children, &[])
    }

    pub fn sum(&mut self, children: &[NodeId], weights: &[f64]) -> Result<NodeId, SpnError> {
        let node = self.kinds.len() as u32;
        if children.is_empty() {
            return Err(SpnError::NoChildren { node });
        }
        if children.len() != weights.len() {
            return Err(SpnError::WeightCountMismatch {
                node,
                weights: weights.len(),
                children: children.len(),
            });
        }
        for &w in weights {
            if !(w.is_finite() && w > 0.0) {
                return Err(SpnError::BadWeight { node, weight: w });
            }
        }
        self.push(NodeKind::Sum, children, weights)
    }

    /// Uniform-weight sum over `children`.
    pub fn uniform_sum(&mut self, children: &[NodeId]) -> Result<NodeId, SpnError> {
        let w = vec![1.0 / children.len().max(1) as f64; children.len()];
        self.sum(children, &w)
    }

    fn push(&mut self, kind: NodeKind, children: &[NodeId], weights: &[f64]) -> Result<NodeId, SpnError> {
        let id = self.kinds.len() as u32;
        for &c in children {
            if c.0 >= id {
                return Err(SpnError::OrderViolation { node: id, child: c.0 });
            }
        }
        self.kinds.push(kind);
        self.children.extend_from_slice(children);
        self.child_start.push(self.children.len() as u32);
        self.weights.extend_from_slice(weights);
        self.weight_start.push(self.weights.len() as u32);
        Ok(NodeId(id))
    }

    /// Copies `src`'s structure and weights into this builder, resolving
    /// each indicator leaf through `resolve` (to a re-bound indicator, or
    /// to an arbitrary existing sub-network root). Node and child order are
    /// preserved, so evaluations of the copy reproduce the source's
    /// arithmetic exactly. Returns the copied root.
    pub fn graft(
        &mut self,
        src: &Spn,
        mut resolve: impl FnMut(&mut Self, VarId, u16) -> Result<NodeId, SpnError>,
    ) -> Result<NodeId, SpnError> {
        let mut remap: Vec<NodeId> = Vec::with_capacity(src.num_nodes());
        for node in src.nodes() {
            let new_id = match src.kind(node) {
                NodeKind::Indicator { var, value } => resolve(self, var, value)?,
                NodeKind::Product => {
                    let kids: Vec<NodeId> =
                        src.children(node).iter().map(|c| remap[c.index()]).collect();
                    self.product(&kids)?
                }
                NodeKind::Sum => {
                    let kids: Vec<NodeId> =
                        src.children(node).iter().map(|c| remap[c.index()]).collect();
                    self.sum(&kids, src.sum_weights(node))?
                }
            };
            remap.push(new_id);
        }
        Ok(remap[src.root().index()])
    }

    pub fn finish(self, root: NodeId) -> Result<Spn, SpnError> {
        if root.index() >= self.kinds.len() {
            return Err(SpnError::OrderViolation { node: root.0, child: root.0 });
        }
        let log_weights = self.weights.iter().map(|w| w.ln()).collect();
        Ok(Spn {
            vars: self.vars,
            kinds: self.kinds,
            child_start: self.child_start,
            children: self.children,
            weight_start: self.weight_start,
            weights: self.weights,
            log_weights,
            root,
            validated: OnceLock::new(),
        })
    }
}
