//! Canonical JSON model format.
//!
//! The container holds the variable table (cardinalities), the node table
//! (kind, children, weights) and the root id. Weights round-trip bit-exactly
//! through `serde_json`'s shortest-representation float encoding. Children
//! must precede their parents; a payload violating that (or any weight /
//! shape constraint) is rejected with the offending node index and no
//! partial network is returned.

use serde::{Deserialize, Serialize};

use super::{NodeId, NodeKind, Spn, SpnBuilder, SpnError, VarId, VarTable};

pub(crate) const FORMAT: &str = "toponets-spn";
pub(crate) const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SpnFile {
    format: String,
    version: u32,
    vars: Vec<u16>,
    root: u32,
    nodes: Vec<NodeFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "t")]
enum NodeFile {
    #[serde(rename = "ind")]
    Indicator { var: u32, val: u16 },
    #[serde(rename = "sum")]
    Sum { ch: Vec<u32>, w: Vec<f64> },
    #[serde(rename = "prod")]
    Product { ch: Vec<u32> },
}

impl Spn {
    pub fn to_json(&self) -> serde_json::Value {
        let nodes = self
            .nodes()
            .map(|n| match self.kind(n) {
                NodeKind::Indicator { var, value } => NodeFile::Indicator { var: var.0, val: value },
                NodeKind::Sum => NodeFile::Sum {
                    ch: self.children(n).iter().map(|c| c.0).collect(),
                    w: self.sum_weights(n).to_vec(),
                },
                NodeKind::Product => NodeFile::Product {
                    ch: self.children(n).iter().map(|c| c.0).collect(),
                },
            })
            .collect();
        let file = SpnFile {
            format: FORMAT.to_string(),
            version: VERSION,
            vars: self.vars().cards().to_vec(),
            root: self.root().0,
            nodes,
        };
        serde_json::to_value(&file).expect("spn serialization cannot fail")
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.to_json()).expect("spn serialization cannot fail")
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, SpnError> {
        let file: SpnFile = serde_json::from_slice(bytes).map_err(|e| SpnError::Parse {
            node: None,
            msg: e.to_string(),
        })?;
        Self::from_file(file)
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self, SpnError> {
        let file: SpnFile = serde_json::from_value(value).map_err(|e| SpnError::Parse {
            node: None,
            msg: e.to_string(),
        })?;
        Self::from_file(file)
    }

    fn from_file(file: SpnFile) -> Result<Self, SpnError> {
        if file.format != FORMAT {
            return Err(SpnError::Parse {
                node: None,
                msg: format!("unknown format tag {:?}", file.format),
            });
        }
        if file.version != VERSION {
            return Err(SpnError::Parse {
                node: None,
                msg: format!("unsupported version {}", file.version),
            });
        }
        let mut vars = VarTable::new();
        for (i, &card) in file.vars.iter().enumerate() {
            vars.add_var(card).map_err(|_| SpnError::Parse {
                node: None,
                msg: format!("variable {i} has bad cardinality {card}"),
            })?;
        }
        let mut builder = SpnBuilder::new(vars);
        let parse_at = |idx: usize, e: SpnError| SpnError::Parse { node: Some(idx), msg: e.to_string() };
        for (idx, node) in file.nodes.iter().enumerate() {
            let built = match node {
                NodeFile::Indicator { var, val } => builder.indicator(VarId(*var), *val),
                NodeFile::Sum { ch, w } => {
                    let ch: Vec<NodeId> = ch.iter().map(|&c| NodeId(c)).collect();
                    builder.sum(&ch, w)
                }
                NodeFile::Product { ch } => {
                    let ch: Vec<NodeId> = ch.iter().map(|&c| NodeId(c)).collect();
                    builder.product(&ch)
                }
            }
            .map_err(|e| parse_at(idx, e))?;
            // Indicator deduplication must not silently renumber a payload.
            if built.index() != idx {
                return Err(SpnError::Parse {
                    node: Some(idx),
                    msg: "duplicate indicator node".to_string(),
                });
            }
        }
        if file.root as usize >= file.nodes.len() {
            return Err(SpnError::Parse {
                node: Some(file.root as usize),
                msg: "root id out of range".to_string(),
            });
        }
        builder.finish(NodeId(file.root))
    }

    pub fn write_json(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json_bytes())
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self, SpnError> {
        let bytes = std::fs::read(path).map_err(|e| SpnError::Parse {
            node: None,
            msg: format!("{}: {e}", path.display()),
        })?;
        Self::from_json_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_spn() -> Spn {
        let mut vars = VarTable::new();
        let a = vars.add_var(3).unwrap();
        let b = vars.add_var(2).unwrap();
        let mut bld = SpnBuilder::new(vars);
        let ia: Vec<_> = (0..3).map(|v| bld.indicator(a, v).unwrap()).collect();
        let ib: Vec<_> = (0..2).map(|v| bld.indicator(b, v).unwrap()).collect();
        let sa = bld.sum(&ia, &[0.2, 0.5, 0.3]).unwrap();
        let sb = bld.sum(&ib, &[0.25, 0.75]).unwrap();
        let p = bld.product(&[sa, sb]).unwrap();
        bld.finish(p).unwrap()
    }

    #[test]
    fn round_trip_is_identity() {
        let spn = sample_spn();
        let bytes = spn.to_json_bytes();
        let back = Spn::from_json_bytes(&bytes).unwrap();
        assert_eq!(back.num_nodes(), spn.num_nodes());
        assert_eq!(back.root(), spn.root());
        for n in spn.nodes() {
            assert_eq!(back.kind(n), spn.kind(n));
            assert_eq!(back.children(n), spn.children(n));
            // Bit-exact weights.
            let (a, b) = (back.sum_weights(n), spn.sum_weights(n));
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let bytes = sample_spn().to_json_bytes();
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(Spn::from_json_bytes(cut), Err(SpnError::Parse { .. })));
    }

    #[test]
    fn forward_reference_is_rejected_with_node_index() {
        let payload = serde_json::json!({
            "format": FORMAT, "version": VERSION, "vars": [2], "root": 0,
            "nodes": [
                {"t": "sum", "ch": [1, 2], "w": [0.5, 0.5]},
                {"t": "ind", "var": 0, "val": 0},
                {"t": "ind", "var": 0, "val": 1},
            ],
        });
        match Spn::from_json(payload) {
            Err(SpnError::Parse { node: Some(0), .. }) => {}
            other => panic!("expected parse error at node 0, got {other:?}"),
        }
    }
}
