//! Topological semantic maps: places, placeholders, edges, local geometry,
//! and labels, plus a synthetic environment generator producing
//! office-building-like corpora.
//!
//! A map is an undirected connected graph. Place nodes carry a polar
//! geometry observation and (when known) a semantic class; placeholder
//! nodes mark reachable-but-unexplored frontiers and carry neither
//! geometry nor a known class.

mod explore;
mod generate;
mod io;

pub use explore::{simulate_exploration, swap_classes};
pub use generate::{
    class_prototype_grid, generate_environment, generate_sized, CorridorTopology, GeneratorConfig,
};
pub use io::{load_map, save_map, CorpusManifest, FloorEntry};

/// One synthetic observation of a class prototype with pose jitter and
/// cell noise; exposed for harness corpora and tests.
pub fn place_observation(
    class_name: &str,
    noise: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> crate::place::PolarGrid {
    generate::place_geometry(class_name, noise, rng)
}

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::place::{PlaceError, PolarGrid};

#[derive(Debug, Error)]
pub enum MapError {
    #[error("map is not connected")]
    Disconnected,
    #[error("place {0} is missing geometry")]
    MissingGeometry(u32),
    #[error("placeholder {0} carries geometry")]
    PlaceholderWithGeometry(u32),
    #[error("placeholder {0} has no explored neighbor")]
    IsolatedPlaceholder(u32),
    #[error("node {0} appears twice")]
    DuplicateNode(u32),
    #[error("edge references unknown node {0}")]
    UnknownNode(u32),
    #[error("label {label} out of range for {classes} classes (node {node})")]
    BadLabel { node: u32, label: usize, classes: usize },
    #[error("class {0:?} does not occur in the map")]
    ClassAbsent(String),
    #[error("infeasible generator config: {0}")]
    InfeasibleConfig(String),
    #[error("unsupported map schema: {0}")]
    Schema(String),
    #[error("map parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Place(#[from] PlaceError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Node handle within one map. Ids are stable but not necessarily dense.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PlaceId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapNodeKind {
    Place,
    Placeholder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapNode {
    pub kind: MapNodeKind,
    /// Semantic class index, when known; placeholders are always latent.
    pub label: Option<usize>,
    pub grid: Option<PolarGrid>,
}

/// Ordered class name catalogue for one experimental setup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCatalogue {
    pub name: String,
    pub classes: Vec<String>,
}

/// Class-name fixtures (6- and 10-class setups plus their merge mapping)
/// shipped as data so the catalogue can be corrected without code changes.
const CLASS_FIXTURE: &str = include_str!("../../assets/classes.json");

#[derive(Deserialize)]
struct ClassFixture {
    six: ClassCatalogue,
    ten: ClassCatalogue,
    merge_ten_to_six: BTreeMap<String, String>,
}

fn fixture() -> &'static ClassFixture {
    static FIX: std::sync::OnceLock<ClassFixture> = std::sync::OnceLock::new();
    FIX.get_or_init(|| serde_json::from_str(CLASS_FIXTURE).expect("bundled class fixture parses"))
}

impl ClassCatalogue {
    pub fn six() -> Self {
        fixture().six.clone()
    }

    pub fn ten() -> Self {
        fixture().ten.clone()
    }

    /// Catalogue for a class-count setup; only 6 and 10 are defined.
    pub fn for_setup(num_classes: usize) -> Result<Self, MapError> {
        match num_classes {
            6 => Ok(Self::six()),
            10 => Ok(Self::ten()),
            other => Err(MapError::InfeasibleConfig(format!(
                "unsupported class setup {other}; expected 6 or 10"
            ))),
        }
    }

    /// Maps a 10-class index onto the merged 6-class catalogue.
    pub fn merge_ten_to_six(ten_index: usize) -> Option<usize> {
        let fix = fixture();
        let name = fix.ten.classes.get(ten_index)?;
        let merged = fix.merge_ten_to_six.get(name)?;
        fix.six.classes.iter().position(|c| c == merged)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn class_name(&self, index: usize) -> &str {
        &self.classes[index]
    }
}

/// Topological semantic map; see the module docs for the invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMap {
    pub class_set: ClassCatalogue,
    nodes: BTreeMap<PlaceId, MapNode>,
    edges: BTreeSet<(PlaceId, PlaceId)>,
}

impl SemanticMap {
    pub fn new(class_set: ClassCatalogue) -> Self {
        Self { class_set, nodes: BTreeMap::new(), edges: BTreeSet::new() }
    }

    pub fn add_place(&mut self, id: PlaceId, label: Option<usize>, grid: PolarGrid) {
        self.nodes.insert(id, MapNode { kind: MapNodeKind::Place, label, grid: Some(grid) });
    }

    pub fn add_placeholder(&mut self, id: PlaceId) {
        self.nodes.insert(id, MapNode { kind: MapNodeKind::Placeholder, label: None, grid: None });
    }

    pub fn add_edge(&mut self, a: PlaceId, b: PlaceId) {
        if a != b {
            self.edges.insert((a.min(b), a.max(b)));
        }
    }

    pub fn node(&self, id: PlaceId) -> Option<&MapNode> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (PlaceId, &MapNode)> {
        self.nodes.iter().map(|(id, n)| (*id, n))
    }

    /// Node ids in ascending order.
    pub fn node_ids(&self) -> Vec<PlaceId> {
        self.nodes.keys().copied().collect()
    }

    pub fn places(&self) -> impl Iterator<Item = (PlaceId, &MapNode)> {
        self.nodes().filter(|(_, n)| n.kind == MapNodeKind::Place)
    }

    pub fn placeholders(&self) -> impl Iterator<Item = (PlaceId, &MapNode)> {
        self.nodes().filter(|(_, n)| n.kind == MapNodeKind::Placeholder)
    }

    pub fn edges(&self) -> impl Iterator<Item = (PlaceId, PlaceId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_places(&self) -> usize {
        self.places().count()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Neighbors of `id`, ascending.
    pub fn neighbors(&self, id: PlaceId) -> Vec<PlaceId> {
        let mut out: Vec<PlaceId> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == id {
                    Some(b)
                } else if b == id {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Adjacency list keyed by node id (ascending neighbor lists).
    pub fn adjacency(&self) -> BTreeMap<PlaceId, Vec<PlaceId>> {
        let mut adj: BTreeMap<PlaceId, Vec<PlaceId>> =
            self.nodes.keys().map(|&id| (id, Vec::new())).collect();
        for &(a, b) in &self.edges {
            adj.get_mut(&a).unwrap().push(b);
            adj.get_mut(&b).unwrap().push(a);
        }
        for list in adj.values_mut() {
            list.sort_unstable();
        }
        adj
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<(), MapError> {
        for (&(a, b), _) in self.edges.iter().zip(std::iter::repeat(())) {
            for id in [a, b] {
                if !self.nodes.contains_key(&id) {
                    return Err(MapError::UnknownNode(id.0));
                }
            }
        }
        for (id, node) in self.nodes() {
            match node.kind {
                MapNodeKind::Place => {
                    if node.grid.is_none() {
                        return Err(MapError::MissingGeometry(id.0));
                    }
                }
                MapNodeKind::Placeholder => {
                    if node.grid.is_some() {
                        return Err(MapError::PlaceholderWithGeometry(id.0));
                    }
                    let has_place_neighbor = self
                        .neighbors(id)
                        .iter()
                        .any(|n| self.nodes[n].kind == MapNodeKind::Place);
                    if !has_place_neighbor {
                        return Err(MapError::IsolatedPlaceholder(id.0));
                    }
                }
            }
            if let Some(label) = node.label {
                if label >= self.class_set.len() {
                    return Err(MapError::BadLabel {
                        node: id.0,
                        label,
                        classes: self.class_set.len(),
                    });
                }
            }
        }
        if !self.is_connected() {
            return Err(MapError::Disconnected);
        }
        Ok(())
    }

    pub fn is_connected(&self) -> bool {
        let Some(&start) = self.nodes.keys().next() else {
            return true;
        };
        let adj = self.adjacency();
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        seen.insert(start);
        while let Some(id) = queue.pop_front() {
            for &n in &adj[&id] {
                if seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen.len() == self.nodes.len()
    }

    /// Per-class place counts.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0usize; self.class_set.len()];
        for (_, node) in self.places() {
            if let Some(l) = node.label {
                hist[l] += 1;
            }
        }
        hist
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::place::CellState;

    pub(crate) fn tiny_map() -> SemanticMap {
        let mut map = SemanticMap::new(ClassCatalogue::six());
        map.add_place(PlaceId(0), Some(0), PolarGrid::filled(CellState::Free));
        map.add_place(PlaceId(1), Some(2), PolarGrid::filled(CellState::Occupied));
        map.add_placeholder(PlaceId(2));
        map.add_edge(PlaceId(0), PlaceId(1));
        map.add_edge(PlaceId(1), PlaceId(2));
        map
    }

    #[test]
    fn catalogue_fixtures() {
        let six = ClassCatalogue::six();
        let ten = ClassCatalogue::ten();
        assert_eq!(six.len(), 6);
        assert_eq!(ten.len(), 10);
        assert_eq!(six.index_of("corridor"), Some(0));
        // Every 10-class entry merges onto a 6-class entry.
        for i in 0..10 {
            assert!(ClassCatalogue::merge_ten_to_six(i).is_some(), "class {i}");
        }
        assert!(ClassCatalogue::for_setup(7).is_err());
    }

    #[test]
    fn validation_catches_each_invariant() {
        let map = tiny_map();
        assert!(map.validate().is_ok());

        let mut disconnected = map.clone();
        disconnected.add_place(PlaceId(9), Some(1), PolarGrid::default());
        assert!(matches!(disconnected.validate(), Err(MapError::Disconnected)));

        let mut lonely = SemanticMap::new(ClassCatalogue::six());
        lonely.add_placeholder(PlaceId(0));
        lonely.add_placeholder(PlaceId(1));
        lonely.add_edge(PlaceId(0), PlaceId(1));
        assert!(matches!(lonely.validate(), Err(MapError::IsolatedPlaceholder(_))));

        let mut bad_label = map.clone();
        bad_label.add_place(PlaceId(3), Some(99), PolarGrid::default());
        bad_label.add_edge(PlaceId(0), PlaceId(3));
        assert!(matches!(bad_label.validate(), Err(MapError::BadLabel { .. })));
    }

    #[test]
    fn neighbors_are_sorted_and_symmetric() {
        let map = tiny_map();
        assert_eq!(map.neighbors(PlaceId(1)), vec![PlaceId(0), PlaceId(2)]);
        assert_eq!(map.neighbors(PlaceId(2)), vec![PlaceId(1)]);
        assert_eq!(map.num_edges(), 2);
    }
}
