//! Instantiation of the template model over a concrete map.
//!
//! The instantiated network is one flat SPN: shared per-(place, class)
//! gate networks (class indicator times a re-bound copy of the place
//! model's class network) at the bottom, per-part copies of the template
//! class layers above them, one product per decomposition, and a root sum
//! mixing the N decompositions uniformly. Gate networks are shared across
//! decompositions through the DAG, so N controls only the thin top layers.

use std::collections::{BTreeMap, BTreeSet};

use super::decompose::{decompose, Decomposition};
use super::{SubMapTemplate, TopoError, ToponetModel};
use crate::place::CELLS_PER_PLACE;
use crate::semmap::{MapNodeKind, PlaceId, SemanticMap};
use crate::spn::eval::EvalPlan;
use crate::spn::{Evidence, NodeId, Spn, SpnBuilder, VarId, VarTable};
use crate::util::derive_seed;

/// What one network variable stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarBinding {
    /// Semantic class of a map node (place or placeholder).
    Class(PlaceId),
    /// One polar geometry cell of an explored place.
    Cell(PlaceId, u16, u16),
}

/// One instantiated part: template, bound nodes, and its sub-network root.
#[derive(Debug, Clone)]
pub struct PartBinding {
    pub template_idx: usize,
    pub nodes: Vec<PlaceId>,
    pub root: NodeId,
}

/// One decomposition child of the root mixture.
#[derive(Debug, Clone)]
pub struct DecompositionBinding {
    pub parts: Vec<PartBinding>,
    pub product: NodeId,
}

/// The map-specific network plus its variable/topology bookkeeping.
#[derive(Debug)]
pub struct InstantiatedToponet {
    pub spn: Spn,
    /// Meaning of every variable, indexed by variable id.
    pub binding: Vec<VarBinding>,
    pub decompositions: Vec<DecompositionBinding>,
    /// Root of each (place, class) gate network.
    pub gates: BTreeMap<(PlaceId, usize), NodeId>,
    /// Sorted map nodes; node `j`'s class variable is `VarId(j)`.
    pub node_order: Vec<PlaceId>,
    /// Geometry variable base per explored place.
    pub geometry_base: BTreeMap<PlaceId, u32>,
    pub num_classes: usize,
    plan: EvalPlan,
}

impl InstantiatedToponet {
    pub fn class_var(&self, id: PlaceId) -> Result<VarId, TopoError> {
        self.node_order
            .binary_search(&id)
            .map(|j| VarId(j as u32))
            .map_err(|_| TopoError::UnknownPlace(id.0))
    }

    /// Number of root mixture children (the decomposition count N).
    pub fn num_decompositions(&self) -> usize {
        self.decompositions.len()
    }

    /// Evidence with all class variables latent and, when `clamp_geometry`,
    /// every explored place's grid observed.
    pub fn map_evidence(&self, map: &SemanticMap, clamp_geometry: bool) -> Result<Evidence, TopoError> {
        let mut ev = Evidence::marginalized(self.spn.vars());
        if clamp_geometry {
            for (&id, &base) in &self.geometry_base {
                let node = map.node(id).ok_or(TopoError::UnknownPlace(id.0))?;
                let grid = node
                    .grid
                    .as_ref()
                    .ok_or(TopoError::MissingGeometry(id.0))?;
                grid.write_evidence(&mut ev, base)?;
            }
        }
        Ok(ev)
    }

    /// Parallel-plan upward pass; bit-equal to `self.spn.evaluate`.
    pub fn evaluate(&self, ev: &Evidence) -> Result<f64, TopoError> {
        Ok(self.spn.evaluate_planned(ev, &self.plan)?)
    }

    pub fn plan(&self) -> &EvalPlan {
        &self.plan
    }
}

/// Draws `n` decompositions (distinct unless retries are exhausted, in
/// which case duplicates are kept with a warning) and builds the
/// instantiated network.
pub fn instantiate(
    model: &ToponetModel,
    map: &SemanticMap,
    n_decompositions: usize,
    seed: u64,
) -> Result<InstantiatedToponet, TopoError> {
    if n_decompositions == 0 {
        return Err(TopoError::BadDecompositionCount);
    }
    model.validate()?;
    if !model.place_model.is_trained() {
        return Err(TopoError::UntrainedPlaceModel);
    }
    for t in &model.templates {
        if !t.is_trained() {
            return Err(TopoError::UntrainedTemplate(t.template.name.clone()));
        }
    }
    map.validate()?;

    let shapes: Vec<SubMapTemplate> = model.template_shapes();
    let decompositions = draw_decompositions(map, &shapes, n_decompositions, seed)?;
    build_instantiation(model, map, &decompositions)
}

const DISTINCT_RETRIES: usize = 10;

fn draw_decompositions(
    map: &SemanticMap,
    shapes: &[SubMapTemplate],
    n: usize,
    seed: u64,
) -> Result<Vec<Decomposition>, TopoError> {
    let mut out = Vec::with_capacity(n);
    let mut seen = BTreeSet::new();
    for d in 0..n {
        let mut accepted = None;
        for attempt in 0..=DISTINCT_RETRIES {
            let s = derive_seed(seed, &[0xdec0, d as u64, attempt as u64]);
            let cand = decompose(map, shapes, s)?;
            if seen.insert(cand.canonical_key()) {
                accepted = Some(cand);
                break;
            }
            if attempt == DISTINCT_RETRIES {
                log::warn!(
                    "decomposition slot {d}: no distinct decomposition after {DISTINCT_RETRIES} retries; keeping a duplicate"
                );
                accepted = Some(cand);
            }
        }
        out.push(accepted.expect("loop always accepts"));
    }
    Ok(out)
}

fn build_instantiation(
    model: &ToponetModel,
    map: &SemanticMap,
    decompositions: &[Decomposition],
) -> Result<InstantiatedToponet, TopoError> {
    let num_classes = model.num_classes();
    let node_order = map.node_ids();
    let places: Vec<PlaceId> = map.places().map(|(id, _)| id).collect();

    // Variable layout: class variables for every map node (sorted), then a
    // 1176-cell geometry block per explored place (sorted). Placeholders
    // carry no geometry variables.
    let mut vars = VarTable::new();
    let mut binding = Vec::new();
    for &id in &node_order {
        vars.add_var(num_classes as u16)?;
        binding.push(VarBinding::Class(id));
    }
    let mut geometry_base = BTreeMap::new();
    for &id in &places {
        let base = vars.len() as u32;
        geometry_base.insert(id, base);
        for cell in 0..CELLS_PER_PLACE {
            vars.add_var(3)?;
            let (a, r) = crate::place::cell_coords(cell);
            binding.push(VarBinding::Cell(id, a as u16, r as u16));
        }
    }

    let mut builder = SpnBuilder::new(vars);

    // Phase A: every indicator, so downstream segments only reference
    // leaves and their own nodes.
    for (j, &id) in node_order.iter().enumerate() {
        let _ = id;
        for c in 0..num_classes {
            builder.indicator(VarId(j as u32), c as u16)?;
        }
    }
    for &id in &places {
        let base = geometry_base[&id];
        for cell in 0..CELLS_PER_PLACE as u32 {
            for v in 0..3u16 {
                builder.indicator(VarId(base + cell), v)?;
            }
        }
    }
    let leaf_end = builder.next_id().0;

    // Phase B: shared per-(place, class) gate networks, one contiguous
    // segment each. Placeholder gates are just the class indicators.
    let mut gates: BTreeMap<(PlaceId, usize), NodeId> = BTreeMap::new();
    let mut segments = Vec::new();
    for (j, &id) in node_order.iter().enumerate() {
        let class_var = VarId(j as u32);
        match map.node(id).unwrap().kind {
            MapNodeKind::Placeholder => {
                for c in 0..num_classes {
                    gates.insert((id, c), builder.indicator(class_var, c as u16)?);
                }
            }
            MapNodeKind::Place => {
                let base = geometry_base[&id];
                for c in 0..num_classes {
                    let start = builder.next_id().0;
                    let g = builder.graft(model.place_model.class_spn(c), |b, var, value| {
                        b.indicator(VarId(base + var.0), value)
                    })?;
                    let lambda = builder.indicator(class_var, c as u16)?;
                    let gate = builder.product(&[lambda, g])?;
                    gates.insert((id, c), gate);
                    segments.push((start, builder.next_id().0));
                }
            }
        }
    }

    // Phase C: per-part template layers, per-decomposition products, root.
    let mut bindings = Vec::with_capacity(decompositions.len());
    for decomposition in decompositions {
        let mut part_bindings = Vec::with_capacity(decomposition.parts.len());
        let mut part_roots = Vec::with_capacity(decomposition.parts.len());
        for part in &decomposition.parts {
            let template = &model.templates[part.template_idx];
            let root = builder.graft(template.skeleton(), |_, slot, class| {
                Ok(gates[&(part.nodes[slot.index()], class as usize)])
            })?;
            part_roots.push(root);
            part_bindings.push(PartBinding {
                template_idx: part.template_idx,
                nodes: part.nodes.clone(),
                root,
            });
        }
        let product = builder.product(&part_roots)?;
        bindings.push(DecompositionBinding { parts: part_bindings, product });
    }
    let products: Vec<NodeId> = bindings.iter().map(|b| b.product).collect();
    let n = products.len();
    let root = builder.sum(&products, &vec![1.0 / n as f64; n])?;
    let spn = builder.finish(root)?;

    Ok(InstantiatedToponet {
        spn,
        binding,
        decompositions: bindings,
        gates,
        node_order,
        geometry_base,
        num_classes,
        plan: EvalPlan { leaf_end, segments },
    })
}
