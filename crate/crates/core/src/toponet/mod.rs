//! Template-based networks instantiated over semantic-map topology.
//!
//! A small set of sub-map templates (single node, edge, 3-chain by
//! default) tiles a topological map into vertex-disjoint parts. Each
//! template owns a trainable class-layer network (its top layers); the
//! shared per-class place model supplies the bottom geometry layers. For a
//! concrete map, N random decompositions are drawn and every part
//! instantiates its template's structure and weights re-bound to the
//! part's places; per-decomposition products of part networks become the
//! children of a root mixture. The instantiated network answers semantic
//! classification, inference over unexplored placeholders, and novelty
//! scoring, all exactly.

mod decompose;
mod infer;
mod instantiate;
mod train;

pub use decompose::{decompose, Decomposition, Part};
pub use infer::{classify_places, infer_placeholders, novelty_score, NoveltyScore, PlaceInference};
pub use instantiate::{instantiate, DecompositionBinding, InstantiatedToponet, PartBinding, VarBinding};
pub use train::{train_toponet, ToponetTrainConfig, TrainReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::place::{PlaceError, PlaceModel, CELLS_PER_PLACE};
use crate::semmap::{ClassCatalogue, MapError, PlaceId};
use crate::spn::{NodeId, Spn, SpnBuilder, SpnError, VarId, VarTable};

#[derive(Debug, Error)]
pub enum TopoError {
    #[error("template {0:?} is not a connected graph")]
    DisconnectedTemplate(String),
    #[error("template set must include a single-node template")]
    MissingSingleNode,
    #[error("template {0:?} received no matching map parts")]
    NoPartsForTemplate(String),
    #[error("template {0:?} is untrained")]
    UntrainedTemplate(String),
    #[error("place model is untrained")]
    UntrainedPlaceModel,
    #[error("place {0} is missing geometry")]
    MissingGeometry(u32),
    #[error("map node {0} is not part of the instantiation")]
    UnknownPlace(u32),
    #[error("decompositions must be at least 1")]
    BadDecompositionCount,
    #[error("model parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Spn(#[from] SpnError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Place(#[from] PlaceError),
    #[error(transparent)]
    Learn(#[from] crate::learn::LearnError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A recurring small graph shape with ordered role slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubMapTemplate {
    pub name: String,
    pub vertices: usize,
    /// Slot pairs that must be edges of the map under an embedding.
    pub edges: Vec<(usize, usize)>,
}

impl SubMapTemplate {
    pub fn new(name: &str, vertices: usize, edges: Vec<(usize, usize)>) -> Result<Self, TopoError> {
        let t = Self { name: name.to_string(), vertices, edges };
        if !t.is_connected() {
            return Err(TopoError::DisconnectedTemplate(t.name));
        }
        Ok(t)
    }

    pub fn single_node() -> Self {
        Self { name: "single".into(), vertices: 1, edges: vec![] }
    }

    pub fn edge() -> Self {
        Self { name: "edge".into(), vertices: 2, edges: vec![(0, 1)] }
    }

    /// Three-vertex path; slot 1 is the middle vertex.
    pub fn chain3() -> Self {
        Self { name: "chain3".into(), vertices: 3, edges: vec![(0, 1), (1, 2)] }
    }

    /// The default template set: 3-chain, edge, single node.
    pub fn standard_set() -> Vec<Self> {
        vec![Self::chain3(), Self::edge(), Self::single_node()]
    }

    pub fn is_connected(&self) -> bool {
        if self.vertices == 0 {
            return false;
        }
        let mut adj = vec![Vec::new(); self.vertices];
        for &(a, b) in &self.edges {
            if a >= self.vertices || b >= self.vertices {
                return false;
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.vertices];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &n in &adj[v] {
                if !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn slot_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.vertices];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Canonical slot ordering of a matched part: for path shapes the
    /// endpoints are ordered by id (so statistics stay orientation
    /// consistent); slot/edge roles are preserved.
    pub fn canonicalize(&self, nodes: &mut [PlaceId]) {
        match (self.vertices, self.edges.as_slice()) {
            (2, [(0, 1)]) => nodes.sort_unstable(),
            (3, [(0, 1), (1, 2)]) => {
                if nodes[0] > nodes[2] {
                    nodes.swap(0, 2);
                }
            }
            _ => {}
        }
    }
}

/// A template's class-layer network over its slot class variables, built
/// as a tree factorization rooted at a maximum-degree slot: a root prior
/// mixture with per-tree-edge conditional mixtures below it. Geometry
/// enters through the slot-class leaves when the skeleton is grafted onto
/// gate networks.
#[derive(Debug, Clone)]
pub struct TemplateSpn {
    pub template: SubMapTemplate,
    skeleton: Spn,
    num_classes: usize,
    trained: bool,
}

/// BFS spanning tree of the template rooted at a max-degree slot; returns
/// (order, parent-in-order) with the root first.
fn spanning_order(template: &SubMapTemplate) -> (Vec<usize>, Vec<Option<usize>>) {
    let deg = template.slot_degrees();
    let root = (0..template.vertices)
        .max_by_key(|&s| (deg[s], usize::MAX - s))
        .unwrap_or(0);
    let mut adj = vec![Vec::new(); template.vertices];
    for &(a, b) in &template.edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    for l in adj.iter_mut() {
        l.sort_unstable();
    }
    let mut order = vec![root];
    let mut parent = vec![None; template.vertices];
    let mut seen = vec![false; template.vertices];
    seen[root] = true;
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        for &n in &adj[v] {
            if !seen[n] {
                seen[n] = true;
                parent[n] = Some(v);
                order.push(n);
            }
        }
    }
    (order, parent)
}

impl TemplateSpn {
    /// Builds the untrained skeleton with uniform mixture weights.
    pub fn build(template: SubMapTemplate, num_classes: usize) -> Result<Self, TopoError> {
        let vars = VarTable::uniform(template.vertices, num_classes as u16)
            .map_err(TopoError::Spn)?;
        let mut builder = SpnBuilder::new(vars);
        let root = build_class_layers(&mut builder, &template, num_classes, |b, slot, class| {
            b.indicator(VarId(slot as u32), class as u16)
        })?;
        let skeleton = builder.finish(root)?;
        Ok(Self { template, skeleton, num_classes, trained: false })
    }

    pub fn skeleton(&self) -> &Spn {
        &self.skeleton
    }

    pub fn skeleton_mut(&mut self) -> &mut Spn {
        &mut self.skeleton
    }

    /// The generative layer annotation: every skeleton sum is trainable.
    pub fn trainable_sums(&self) -> Vec<NodeId> {
        self.skeleton.sum_nodes().collect()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    /// Materializes the full joint network over the template's class and
    /// geometry variables: per slot and class, a copy of the place model's
    /// class network gated by the slot's class indicator, joined by the
    /// skeleton layers. Variable layout: slot class variables first, then
    /// per-slot geometry blocks.
    pub fn joint_spn(&self, place_model: &PlaceModel) -> Result<Spn, TopoError> {
        let slots = self.template.vertices;
        let mut vars = VarTable::new();
        for _ in 0..slots {
            vars.add_var(self.num_classes as u16).map_err(TopoError::Spn)?;
        }
        for _ in 0..slots * CELLS_PER_PLACE {
            vars.add_var(3).map_err(TopoError::Spn)?;
        }
        let mut builder = SpnBuilder::new(vars);
        let mut gates = vec![vec![NodeId(0); self.num_classes]; slots];
        for slot in 0..slots {
            let base = (slots + slot * CELLS_PER_PLACE) as u32;
            for class in 0..self.num_classes {
                let g = builder.graft(place_model.class_spn(class), |b, var, value| {
                    b.indicator(VarId(base + var.0), value)
                })?;
                let lambda = builder.indicator(VarId(slot as u32), class as u16)?;
                gates[slot][class] = builder.product(&[lambda, g])?;
            }
        }
        let root = builder.graft(&self.skeleton, |_, var, value| {
            Ok(gates[var.index()][value as usize])
        })?;
        Ok(builder.finish(root)?)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "format": "toponets-template",
            "version": 1,
            "template": serde_json::to_value(&self.template).expect("template serializes"),
            "num_classes": self.num_classes,
            "trained": self.trained,
            "skeleton": self.skeleton.to_json(),
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, TopoError> {
        let get = |k: &str| value.get(k).ok_or_else(|| TopoError::Parse(format!("missing {k}")));
        if get("format")?.as_str() != Some("toponets-template") {
            return Err(TopoError::Parse("bad template format tag".into()));
        }
        let template: SubMapTemplate = serde_json::from_value(get("template")?.clone())
            .map_err(|e| TopoError::Parse(e.to_string()))?;
        let num_classes = get("num_classes")?
            .as_u64()
            .ok_or_else(|| TopoError::Parse("bad num_classes".into()))? as usize;
        let trained = get("trained")?.as_bool().unwrap_or(false);
        let skeleton = Spn::from_json(get("skeleton")?.clone())?;
        Ok(Self { template, skeleton, num_classes, trained })
    }
}

/// Builds the class layers over per-(slot, class) gate nodes supplied by
/// `gate`: conditional mixtures along the template's spanning tree with a
/// root prior mixture. Used both for the skeleton (gates are indicators)
/// and for instantiation (gates are class-gated geometry networks).
pub(crate) fn build_class_layers(
    builder: &mut SpnBuilder,
    template: &SubMapTemplate,
    num_classes: usize,
    mut gate: impl FnMut(&mut SpnBuilder, usize, usize) -> Result<NodeId, SpnError>,
) -> Result<NodeId, TopoError> {
    let (order, parent) = spanning_order(template);
    // children_of[s] = tree children of slot s, in BFS order.
    let mut children_of = vec![Vec::new(); template.vertices];
    for &s in &order {
        if let Some(p) = parent[s] {
            children_of[p].push(s);
        }
    }
    // Bottom-up over the reversed BFS order: each slot's per-class factor
    // is its gate times, per tree child, a conditional mixture over the
    // child's factors.
    let mut factors: Vec<Vec<NodeId>> = vec![Vec::new(); template.vertices];
    for &s in order.iter().rev() {
        let mut per_class = Vec::with_capacity(num_classes);
        for c in 0..num_classes {
            let g = gate(builder, s, c)?;
            if children_of[s].is_empty() {
                per_class.push(g);
                continue;
            }
            let mut kids = Vec::with_capacity(1 + children_of[s].len());
            kids.push(g);
            for &child in &children_of[s] {
                kids.push(builder.uniform_sum(&factors[child])?);
            }
            per_class.push(builder.product(&kids)?);
        }
        factors[s] = per_class;
    }
    Ok(builder.uniform_sum(&factors[order[0]])?)
}

/// The template model: a set of template networks sharing one place model.
#[derive(Debug, Clone)]
pub struct ToponetModel {
    pub catalogue: ClassCatalogue,
    pub place_model: PlaceModel,
    pub templates: Vec<TemplateSpn>,
}

impl ToponetModel {
    pub fn num_classes(&self) -> usize {
        self.place_model.num_classes()
    }

    pub fn template_shapes(&self) -> Vec<SubMapTemplate> {
        self.templates.iter().map(|t| t.template.clone()).collect()
    }

    /// Every graph decomposes iff a single-node template is present.
    pub fn validate(&self) -> Result<(), TopoError> {
        if !self.templates.iter().any(|t| t.template.vertices == 1) {
            return Err(TopoError::MissingSingleNode);
        }
        Ok(())
    }

    pub fn is_trained(&self) -> bool {
        self.place_model.is_trained() && self.templates.iter().all(|t| t.trained)
    }

    /// Writes the model container: place model, per-template files, and a
    /// manifest with the catalogue.
    pub fn save_dir(&self, dir: &std::path::Path) -> Result<(), TopoError> {
        std::fs::create_dir_all(dir)?;
        let write = |path: std::path::PathBuf, v: &serde_json::Value| -> Result<(), TopoError> {
            std::fs::write(path, serde_json::to_vec(v).expect("model serializes"))?;
            Ok(())
        };
        write(dir.join("place_model.json"), &self.place_model.to_json())?;
        let mut names = Vec::new();
        for t in &self.templates {
            let file = format!("template_{}.json", t.template.name);
            write(dir.join(&file), &t.to_json())?;
            names.push(file);
        }
        let manifest = serde_json::json!({
            "format": "toponets-model",
            "version": 1,
            "catalogue": serde_json::to_value(&self.catalogue).expect("catalogue serializes"),
            "templates": names,
        });
        write(dir.join("model.json"), &manifest)?;
        Ok(())
    }

    pub fn load_dir(dir: &std::path::Path) -> Result<Self, TopoError> {
        let read = |name: &str| -> Result<serde_json::Value, TopoError> {
            let bytes = std::fs::read(dir.join(name))?;
            serde_json::from_slice(&bytes).map_err(|e| TopoError::Parse(format!("{name}: {e}")))
        };
        let manifest = read("model.json")?;
        if manifest.get("format").and_then(|f| f.as_str()) != Some("toponets-model") {
            return Err(TopoError::Parse("bad model manifest".into()));
        }
        let catalogue: ClassCatalogue =
            serde_json::from_value(manifest["catalogue"].clone())
                .map_err(|e| TopoError::Parse(e.to_string()))?;
        let place_model = PlaceModel::from_json(&read("place_model.json")?)?;
        let mut templates = Vec::new();
        for name in manifest["templates"]
            .as_array()
            .ok_or_else(|| TopoError::Parse("manifest lacks templates".into()))?
        {
            let name = name
                .as_str()
                .ok_or_else(|| TopoError::Parse("template entry must be a string".into()))?;
            templates.push(TemplateSpn::from_json(&read(name)?)?);
        }
        let model = Self { catalogue, place_model, templates };
        model.validate()?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::place::{build_place_model, PlaceModelConfig};

    #[test]
    fn standard_templates_are_connected_with_canonical_slots() {
        for t in SubMapTemplate::standard_set() {
            assert!(t.is_connected(), "{}", t.name);
        }
        let chain = SubMapTemplate::chain3();
        let mut nodes = [PlaceId(9), PlaceId(4), PlaceId(2)];
        chain.canonicalize(&mut nodes);
        assert_eq!(nodes, [PlaceId(2), PlaceId(4), PlaceId(9)]);
        assert!(SubMapTemplate::new("broken", 3, vec![(0, 1)]).is_err());
    }

    #[test]
    fn skeletons_are_valid_and_rooted_at_the_middle_slot() {
        for t in SubMapTemplate::standard_set() {
            let ts = TemplateSpn::build(t, 6).unwrap();
            assert!(ts.skeleton().check_validity().unwrap().is_valid());
        }
        let (order, parent) = spanning_order(&SubMapTemplate::chain3());
        assert_eq!(order[0], 1, "chain root must be the middle slot");
        assert_eq!(parent[0], Some(1));
        assert_eq!(parent[2], Some(1));
    }

    #[test]
    fn skeleton_marginalized_evaluation_is_log_one() {
        let ts = TemplateSpn::build(SubMapTemplate::chain3(), 4).unwrap();
        let ev = crate::spn::Evidence::marginalized(ts.skeleton().vars());
        assert!(ts.skeleton().evaluate(&ev).unwrap().abs() < 1e-12);
    }

    #[test]
    fn joint_network_is_valid_and_scoped_over_all_slot_variables() {
        let mut pm_cfg = PlaceModelConfig::default();
        pm_cfg.rng_seed = 3;
        let pm = build_place_model(2, &pm_cfg).unwrap();
        let ts = TemplateSpn::build(SubMapTemplate::edge(), 2).unwrap();
        let joint = ts.joint_spn(&pm).unwrap();
        let report = joint.check_validity().unwrap();
        assert!(report.is_valid());
        assert_eq!(
            report.scopes.scope_size(joint.root()),
            2 * (1 + CELLS_PER_PLACE)
        );
    }

    #[test]
    fn template_json_round_trip() {
        let mut ts = TemplateSpn::build(SubMapTemplate::edge(), 6).unwrap();
        ts.mark_trained();
        let back = TemplateSpn::from_json(&ts.to_json()).unwrap();
        assert_eq!(back.template, ts.template);
        assert!(back.is_trained());
        assert_eq!(back.skeleton().to_json_bytes(), ts.skeleton().to_json_bytes());
    }
}
