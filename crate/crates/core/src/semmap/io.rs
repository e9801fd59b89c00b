//! Map and corpus-manifest file formats (JSON, schema-versioned).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClassCatalogue, MapError, MapNodeKind, PlaceId, SemanticMap};
use crate::place::PolarGrid;

const MAP_FORMAT: &str = "toponets-map";
const MAP_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MapFile {
    format: String,
    version: u32,
    class_set: ClassCatalogue,
    nodes: Vec<NodeFile>,
    edges: Vec<(u32, u32)>,
}

#[derive(Serialize, Deserialize)]
struct NodeFile {
    id: u32,
    kind: MapNodeKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<serde_json::Value>,
}

impl SemanticMap {
    pub fn to_json(&self) -> serde_json::Value {
        let nodes = self
            .nodes()
            .map(|(id, n)| NodeFile {
                id: id.0,
                kind: n.kind,
                label: n.label,
                grid: n.grid.as_ref().map(|g| g.to_json()),
            })
            .collect();
        let edges = self.edges().map(|(a, b)| (a.0, b.0)).collect();
        serde_json::to_value(MapFile {
            format: MAP_FORMAT.into(),
            version: MAP_VERSION,
            class_set: self.class_set.clone(),
            nodes,
            edges,
        })
        .expect("map serialization cannot fail")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, MapError> {
        let file: MapFile =
            serde_json::from_value(value.clone()).map_err(|e| MapError::Parse(e.to_string()))?;
        if file.format != MAP_FORMAT {
            return Err(MapError::Schema(format!("format {:?}", file.format)));
        }
        if file.version != MAP_VERSION {
            return Err(MapError::Schema(format!(
                "version {} (supported: {MAP_VERSION})",
                file.version
            )));
        }
        let mut map = SemanticMap::new(file.class_set);
        for node in file.nodes {
            if map.node(PlaceId(node.id)).is_some() {
                return Err(MapError::DuplicateNode(node.id));
            }
            match node.kind {
                MapNodeKind::Place => {
                    let grid_json = node
                        .grid
                        .ok_or(MapError::MissingGeometry(node.id))?;
                    let grid = PolarGrid::from_json(&grid_json)?;
                    map.add_place(PlaceId(node.id), node.label, grid);
                }
                MapNodeKind::Placeholder => {
                    if node.grid.is_some() {
                        return Err(MapError::PlaceholderWithGeometry(node.id));
                    }
                    map.add_placeholder(PlaceId(node.id));
                }
            }
        }
        for (a, b) in file.edges {
            for id in [a, b] {
                if map.node(PlaceId(id)).is_none() {
                    return Err(MapError::UnknownNode(id));
                }
            }
            map.add_edge(PlaceId(a), PlaceId(b));
        }
        map.validate()?;
        Ok(map)
    }
}

pub fn save_map(map: &SemanticMap, path: &Path) -> Result<(), MapError> {
    let bytes = serde_json::to_vec(&map.to_json()).expect("map serialization cannot fail");
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_map(path: &Path) -> Result<SemanticMap, MapError> {
    let bytes = std::fs::read(path)?;
    let value: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| MapError::Parse(e.to_string()))?;
    SemanticMap::from_json(&value)
}

/// One generated map (floor traversal sequence) within a corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FloorEntry {
    pub floor: usize,
    pub sequence: usize,
    /// Map file path, relative to the manifest's directory.
    pub path: PathBuf,
    pub places: usize,
    pub seed: u64,
}

/// Corpus manifest: the floor map files a split draws from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format: String,
    pub version: u32,
    pub class_setup: usize,
    pub floors: Vec<FloorEntry>,
}

impl CorpusManifest {
    pub fn new(class_setup: usize) -> Self {
        Self {
            format: "toponets-corpus".into(),
            version: 1,
            class_setup,
            floors: Vec::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), MapError> {
        let bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MapError> {
        let bytes = std::fs::read(path)?;
        let manifest: Self =
            serde_json::from_slice(&bytes).map_err(|e| MapError::Parse(e.to_string()))?;
        if manifest.format != "toponets-corpus" || manifest.version != 1 {
            return Err(MapError::Schema("unsupported corpus manifest".into()));
        }
        Ok(manifest)
    }

    pub fn floor(&self, floor: usize) -> Option<&FloorEntry> {
        self.floors.iter().find(|f| f.floor == floor)
    }
}
