//! Incremental exploration simulation and class-swap perturbation.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{MapError, PlaceId, SemanticMap};

/// Simulates exploration of a fully labeled map: starting from a seeded
/// place, frontier placeholders are converted into places one at a time
/// (uniform choice over the frontier, which biases growth toward breadth).
///
/// Returns the state after 0..=steps conversions. Each state is a valid
/// map whose placeholders are the current frontier; edges between two
/// frontier nodes are not yet known and are omitted. The final state of a
/// full run equals the input map. `steps` beyond full exploration is
/// truncated with a notice.
pub fn simulate_exploration(
    map: &SemanticMap,
    steps: usize,
    seed: u64,
) -> Result<Vec<SemanticMap>, MapError> {
    map.validate()?;
    if map.placeholders().next().is_some() {
        return Err(MapError::InfeasibleConfig(
            "exploration expects a fully labeled map without placeholders".into(),
        ));
    }
    let ids = map.node_ids();
    if ids.is_empty() {
        return Ok(vec![]);
    }
    let max_steps = ids.len() - 1;
    let steps = if steps > max_steps {
        log::warn!("exploration truncated: {steps} steps requested, {max_steps} possible");
        max_steps
    } else {
        steps
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adj = map.adjacency();
    let start = *ids.as_slice().choose(&mut rng).unwrap();

    let mut explored: BTreeSet<PlaceId> = BTreeSet::from([start]);
    let mut states = Vec::with_capacity(steps + 1);
    states.push(partial_state(map, &explored));
    for _ in 0..steps {
        let frontier: Vec<PlaceId> = frontier_of(&explored, &adj);
        debug_assert!(!frontier.is_empty());
        let chosen = *frontier.as_slice().choose(&mut rng).unwrap();
        explored.insert(chosen);
        states.push(partial_state(map, &explored));
    }
    Ok(states)
}

fn frontier_of(
    explored: &BTreeSet<PlaceId>,
    adj: &std::collections::BTreeMap<PlaceId, Vec<PlaceId>>,
) -> Vec<PlaceId> {
    let mut out = BTreeSet::new();
    for id in explored {
        for n in &adj[id] {
            if !explored.contains(n) {
                out.insert(*n);
            }
        }
    }
    out.into_iter().collect()
}

fn partial_state(map: &SemanticMap, explored: &BTreeSet<PlaceId>) -> SemanticMap {
    let mut out = SemanticMap::new(map.class_set.clone());
    let adj = map.adjacency();
    let frontier: BTreeSet<PlaceId> = frontier_of(explored, &adj).into_iter().collect();
    for &id in explored {
        let node = map.node(id).unwrap();
        out.add_place(id, node.label, node.grid.clone().unwrap());
    }
    for &id in &frontier {
        out.add_placeholder(id);
    }
    for (a, b) in map.edges() {
        let (ea, eb) = (explored.contains(&a), explored.contains(&b));
        let (fa, fb) = (frontier.contains(&a), frontier.contains(&b));
        // Known edges touch at least one explored endpoint.
        if (ea && eb) || (ea && fb) || (fa && eb) {
            out.add_edge(a, b);
        }
    }
    out
}

/// Exchanges the local geometry between the places of two classes, leaving
/// labels and topology untouched. Places are paired in ascending-id order
/// up to the smaller class count, which makes the operation an involution;
/// leftover places of the larger class keep their geometry.
pub fn swap_classes(
    map: &SemanticMap,
    class_a: usize,
    class_b: usize,
) -> Result<SemanticMap, MapError> {
    for class in [class_a, class_b] {
        if class >= map.class_set.len() {
            return Err(MapError::ClassAbsent(format!("index {class}")));
        }
        if !map.places().any(|(_, n)| n.label == Some(class)) {
            return Err(MapError::ClassAbsent(map.class_set.class_name(class).to_string()));
        }
    }
    let mut out = map.clone();
    if class_a == class_b {
        return Ok(out);
    }
    let ids_of = |class: usize| -> Vec<PlaceId> {
        map.places()
            .filter(|(_, n)| n.label == Some(class))
            .map(|(id, _)| id)
            .collect()
    };
    let a_ids = ids_of(class_a);
    let b_ids = ids_of(class_b);
    for (&a, &b) in a_ids.iter().zip(&b_ids) {
        let ga = map.node(a).unwrap().grid.clone().unwrap();
        let gb = map.node(b).unwrap().grid.clone().unwrap();
        let (la, lb) = (map.node(a).unwrap().label, map.node(b).unwrap().label);
        out.add_place(a, la, gb);
        out.add_place(b, lb, ga);
    }
    Ok(out)
}
