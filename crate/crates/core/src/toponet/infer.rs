//! The three inference tasks over an instantiated network.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::instantiate::InstantiatedToponet;
use super::TopoError;
use crate::semmap::{MapNodeKind, PlaceId, SemanticMap};

/// Per-node class inference: max-product decoding plus the per-node
/// posterior marginal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaceInference {
    pub mpe_class: usize,
    pub posterior: Vec<f64>,
}

/// Joint class inference over every map node: geometry of explored places
/// clamped, placeholder geometry absent, all class variables latent. The
/// decoded classes come from one joint max-product pass; posteriors from
/// one downward pass.
fn joint_class_inference(
    inst: &InstantiatedToponet,
    map: &SemanticMap,
) -> Result<BTreeMap<PlaceId, PlaceInference>, TopoError> {
    for (id, node) in map.places() {
        if node.grid.is_none() {
            return Err(TopoError::MissingGeometry(id.0));
        }
    }
    let ev = inst.map_evidence(map, true)?;
    let mpe = inst.spn.mpe(&ev)?;
    let marginals = inst.spn.marginals(&ev)?;

    let mut out = BTreeMap::new();
    for &id in &inst.node_order {
        let var = inst.class_var(id)?;
        let mpe_class = *mpe
            .assignment
            .get(&var)
            .expect("latent class variables appear in the MPE assignment")
            as usize;
        let posterior = marginals.posterior(var).to_vec();
        out.insert(id, PlaceInference { mpe_class, posterior });
    }
    Ok(out)
}

/// Semantic place classification: classes of explored places, inferred
/// jointly with everything else latent.
pub fn classify_places(
    inst: &InstantiatedToponet,
    map: &SemanticMap,
) -> Result<BTreeMap<PlaceId, PlaceInference>, TopoError> {
    let mut joint = joint_class_inference(inst, map)?;
    joint.retain(|id, _| {
        map.node(*id)
            .map(|n| n.kind == MapNodeKind::Place)
            .unwrap_or(false)
    });
    Ok(joint)
}

/// Semantics of unexplored space: class posteriors and decodings for the
/// placeholders, from the same joint inference (explored places' classes
/// stay latent; no label clamping). An empty result for a map without
/// placeholders is not an error.
pub fn infer_placeholders(
    inst: &InstantiatedToponet,
    map: &SemanticMap,
) -> Result<BTreeMap<PlaceId, PlaceInference>, TopoError> {
    let mut joint = joint_class_inference(inst, map)?;
    joint.retain(|id, _| {
        map.node(*id)
            .map(|n| n.kind == MapNodeKind::Placeholder)
            .unwrap_or(false)
    });
    Ok(joint)
}

/// Novelty decision for one map under one instantiated network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoveltyScore {
    /// log sum_y P(y, x): all class variables marginalized out.
    pub total_log_likelihood: f64,
    /// Total normalized by the number of explored places.
    pub per_place_log_likelihood: f64,
    pub threshold: f64,
    pub novel: bool,
}

/// Evaluates the marginal likelihood of the clamped geometry (classes
/// summed out) and thresholds the per-place average: novel iff the average
/// falls below the threshold.
pub fn novelty_score(
    inst: &InstantiatedToponet,
    map: &SemanticMap,
    threshold: f64,
) -> Result<NoveltyScore, TopoError> {
    let ev = inst.map_evidence(map, true)?;
    let total = inst.evaluate(&ev)?;
    let places = map.num_places().max(1) as f64;
    let per_place = total / places;
    Ok(NoveltyScore {
        total_log_likelihood: total,
        per_place_log_likelihood: per_place,
        threshold,
        novel: per_place < threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toponet::instantiate::tests::{chain_map, stub_model};
    use crate::toponet::instantiate;

    #[test]
    fn classification_returns_places_only_with_normalized_posteriors() {
        let model = stub_model(6, 21);
        let mut map = chain_map(4, 22);
        map.add_placeholder(PlaceId(50));
        map.add_edge(PlaceId(3), PlaceId(50));
        let inst = instantiate(&model, &map, 3, 5).unwrap();
        let out = classify_places(&inst, &map).unwrap();
        assert_eq!(out.len(), 4);
        assert!(!out.contains_key(&PlaceId(50)));
        for inf in out.values() {
            assert_eq!(inf.posterior.len(), 6);
            assert!((inf.posterior.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(inf.mpe_class < 6);
        }
    }

    #[test]
    fn placeholder_inference_covers_exactly_the_placeholders() {
        let model = stub_model(6, 23);
        let mut map = chain_map(4, 24);
        map.add_placeholder(PlaceId(70));
        map.add_edge(PlaceId(0), PlaceId(70));
        let inst = instantiate(&model, &map, 2, 6).unwrap();
        let out = infer_placeholders(&inst, &map).unwrap();
        assert_eq!(out.keys().copied().collect::<Vec<_>>(), vec![PlaceId(70)]);

        // No placeholders: empty result, no error.
        let full = chain_map(3, 25);
        let inst2 = instantiate(&model, &full, 2, 7).unwrap();
        assert!(infer_placeholders(&inst2, &full).unwrap().is_empty());
    }

    #[test]
    fn novelty_score_is_deterministic_and_thresholds() {
        let model = stub_model(6, 26);
        let map = chain_map(5, 27);
        let inst = instantiate(&model, &map, 3, 8).unwrap();
        let a = novelty_score(&inst, &map, -100.0).unwrap();
        let b = novelty_score(&inst, &map, -100.0).unwrap();
        assert_eq!(a.total_log_likelihood.to_bits(), b.total_log_likelihood.to_bits());
        assert_eq!(
            a.per_place_log_likelihood,
            a.total_log_likelihood / 5.0
        );
        // Decision flips with the threshold around the observed average.
        let hi = novelty_score(&inst, &map, a.per_place_log_likelihood + 1.0).unwrap();
        let lo = novelty_score(&inst, &map, a.per_place_log_likelihood - 1.0).unwrap();
        assert!(hi.novel);
        assert!(!lo.novel);
    }
}
