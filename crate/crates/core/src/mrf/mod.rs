//! Pairwise Markov random field baseline over the topological graph.
//!
//! Unary potentials come from the local place networks (`log P(x_i | y_i)`,
//! floored), the shared pairwise potential from class co-occurrence counts
//! over training edges, and inference from synchronous damped loopy belief
//! propagation in the log domain. Unlike the instantiated template
//! networks, the partition-function estimate here (Bethe) is approximate.

mod bp;

pub use bp::{bethe_log_partition, loopy_bp, BpConfig, BpResult};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::place::{PlaceError, PlaceModel};
use crate::semmap::{MapError, MapNodeKind, PlaceId, SemanticMap};
use crate::toponet::PlaceInference;

#[derive(Debug, Error)]
pub enum MrfError {
    #[error("pairwise learning requires a nonempty corpus")]
    EmptyCorpus,
    #[error("place {0} is missing geometry")]
    MissingGeometry(u32),
    #[error("pairwise matrix parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Place(#[from] PlaceError),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Log-domain floor applied to unary entries.
pub const UNARY_FLOOR: f64 = -50.0;

/// Symmetric positive class-pair potential.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairwisePotential {
    pub classes: usize,
    /// Row-major `classes x classes` probabilities; symmetric, positive.
    pub matrix: Vec<f64>,
}

impl PairwisePotential {
    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.matrix[a * self.classes + b]
    }

    #[inline]
    pub fn log_get(&self, a: usize, b: usize) -> f64 {
        self.get(a, b).ln()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.classes).all(|a| (0..self.classes).all(|b| self.get(a, b) == self.get(b, a)))
    }

    /// Uniform potential (decoupled field).
    pub fn uniform(classes: usize) -> Self {
        let p = 1.0 / (classes * classes) as f64;
        Self { classes, matrix: vec![p; classes * classes] }
    }
}

/// Counts class pairs over every edge of the corpus (both orientations),
/// adds the pseudo-count, and normalizes the result into a symmetric
/// positive matrix.
pub fn learn_pairwise(maps: &[SemanticMap], smoothing: f64) -> Result<PairwisePotential, MrfError> {
    let classes = maps.first().ok_or(MrfError::EmptyCorpus)?.class_set.len();
    let mut counts = vec![smoothing; classes * classes];
    for map in maps {
        for (a, b) in map.edges() {
            let (la, lb) = (
                map.node(a).and_then(|n| n.label),
                map.node(b).and_then(|n| n.label),
            );
            if let (Some(la), Some(lb)) = (la, lb) {
                counts[la * classes + lb] += 1.0;
                counts[lb * classes + la] += 1.0;
            }
        }
    }
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(MrfError::Parse("all-zero pairwise counts with zero smoothing".into()));
    }
    let matrix = counts.into_iter().map(|c| c / total).collect();
    Ok(PairwisePotential { classes, matrix })
}

/// The field instantiated over one map: per-node log unaries plus the
/// shared pairwise potential. Placeholders carry exactly uniform unaries.
#[derive(Debug, Clone)]
pub struct MrfInstance {
    pub node_order: Vec<PlaceId>,
    /// Edges as indices into `node_order`.
    pub edges: Vec<(usize, usize)>,
    /// Per node, per class, log unary (finite; floored).
    pub unary: Vec<Vec<f64>>,
    pub pairwise: PairwisePotential,
}

impl MrfInstance {
    pub fn num_nodes(&self) -> usize {
        self.node_order.len()
    }

    pub fn classes(&self) -> usize {
        self.pairwise.classes
    }

    pub fn index_of(&self, id: PlaceId) -> Option<usize> {
        self.node_order.binary_search(&id).ok()
    }
}

/// Builds the field: place unaries are the local models' per-class
/// log-likelihoods floored at [`UNARY_FLOOR`]; placeholder unaries uniform.
pub fn build_mrf(
    map: &SemanticMap,
    place_model: &PlaceModel,
    pairwise: &PairwisePotential,
) -> Result<MrfInstance, MrfError> {
    if !place_model.is_trained() {
        return Err(MrfError::Place(PlaceError::Untrained));
    }
    let node_order = map.node_ids();
    let classes = place_model.num_classes();
    let mut unary = Vec::with_capacity(node_order.len());
    for &id in &node_order {
        let node = map.node(id).unwrap();
        match node.kind {
            MapNodeKind::Placeholder => unary.push(vec![0.0; classes]),
            MapNodeKind::Place => {
                let grid = node.grid.as_ref().ok_or(MrfError::MissingGeometry(id.0))?;
                let local = crate::place::classify_local(place_model, grid)?;
                unary.push(
                    local
                        .log_likelihood
                        .iter()
                        .map(|&l| l.max(UNARY_FLOOR))
                        .collect(),
                );
            }
        }
    }
    let edges = map
        .edges()
        .map(|(a, b)| {
            let ia = node_order.binary_search(&a).expect("edge endpoints exist");
            let ib = node_order.binary_search(&b).expect("edge endpoints exist");
            (ia, ib)
        })
        .collect();
    Ok(MrfInstance { node_order, edges, unary, pairwise: pairwise.clone() })
}

/// Belief-argmax classification for each node, in the same shape the
/// template-network tasks produce.
pub fn mrf_node_inference(mrf: &MrfInstance, result: &BpResult) -> BTreeMap<PlaceId, PlaceInference> {
    mrf.node_order
        .iter()
        .zip(&result.beliefs)
        .map(|(&id, belief)| {
            let mpe_class = belief
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, _)| k)
                .unwrap();
            (id, PlaceInference { mpe_class, posterior: belief.clone() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::place::{build_place_model, PlaceModelConfig, PolarGrid};
    use crate::semmap::ClassCatalogue;

    fn labeled_pair_map(labels: &[(u32, usize)], edges: &[(u32, u32)]) -> SemanticMap {
        let mut map = SemanticMap::new(ClassCatalogue::six());
        for &(id, label) in labels {
            map.add_place(PlaceId(id), Some(label), PolarGrid::default());
        }
        for &(a, b) in edges {
            map.add_edge(PlaceId(a), PlaceId(b));
        }
        map
    }

    #[test]
    fn same_class_corpus_gives_diagonal_dominant_matrix() {
        let map = labeled_pair_map(&[(0, 2), (1, 2), (2, 2)], &[(0, 1), (1, 2)]);
        let pw = learn_pairwise(&[map], 0.5).unwrap();
        assert!(pw.is_symmetric());
        for a in 0..6 {
            for b in 0..6 {
                if a != b {
                    assert!(pw.get(2, 2) > pw.get(a, b).min(pw.get(2, 2) - f64::EPSILON) || (a == 2 && b == 2));
                }
            }
        }
        assert!(pw.get(2, 2) > pw.get(0, 1));
    }

    #[test]
    fn zero_data_with_smoothing_is_uniform() {
        let map = labeled_pair_map(&[(0, 0)], &[]);
        let pw = learn_pairwise(&[map], 1.0).unwrap();
        let expect = 1.0 / 36.0;
        assert!(pw.matrix.iter().all(|&p| (p - expect).abs() < 1e-12));
    }

    #[test]
    fn pairwise_counts_match_a_recount_oracle() {
        let map = labeled_pair_map(
            &[(0, 0), (1, 1), (2, 0), (3, 3)],
            &[(0, 1), (1, 2), (2, 3), (0, 2)],
        );
        let smoothing = 1.0;
        let pw = learn_pairwise(&[map.clone()], smoothing).unwrap();
        // Independent recount in integer space.
        let mut counts = vec![0u32; 36];
        for (a, b) in map.edges() {
            let la = map.node(a).unwrap().label.unwrap();
            let lb = map.node(b).unwrap().label.unwrap();
            counts[la * 6 + lb] += 1;
            counts[lb * 6 + la] += 1;
        }
        let total: f64 = counts.iter().map(|&c| c as f64 + smoothing).sum();
        for i in 0..36 {
            let expect = (counts[i] as f64 + smoothing) / total;
            assert!((pw.matrix[i] - expect).abs() < 1e-12, "entry {i}");
        }
    }

    #[test]
    fn placeholder_unaries_are_exactly_uniform_and_floors_apply() {
        let mut cfg = PlaceModelConfig::default();
        cfg.rng_seed = 4;
        let mut pm = build_place_model(6, &cfg).unwrap();
        pm.mark_trained();
        let mut map = labeled_pair_map(&[(0, 0)], &[]);
        map.add_placeholder(PlaceId(1));
        map.add_edge(PlaceId(0), PlaceId(1));
        let pw = PairwisePotential::uniform(6);
        let mrf = build_mrf(&map, &pm, &pw).unwrap();
        assert_eq!(mrf.unary[1], vec![0.0; 6]);
        assert!(mrf.unary[0].iter().all(|&u| u >= UNARY_FLOOR && u.is_finite()));
    }

    #[test]
    fn untrained_model_is_rejected() {
        let cfg = PlaceModelConfig::default();
        let pm = build_place_model(6, &cfg).unwrap();
        let map = labeled_pair_map(&[(0, 0)], &[]);
        assert!(matches!(
            build_mrf(&map, &pm, &PairwisePotential::uniform(6)),
            Err(MrfError::Place(PlaceError::Untrained))
        ));
    }
}
