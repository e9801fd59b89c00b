//! Greedy randomized decomposition of a map into template-isomorphic parts.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{SubMapTemplate, TopoError};
use crate::semmap::{PlaceId, SemanticMap};

/// One matched part: the template and the map nodes bound to its slots.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Part {
    pub template_idx: usize,
    pub nodes: Vec<PlaceId>,
}

/// A vertex partition of the map into template-embedded parts. Edges
/// between different parts are not represented within one decomposition;
/// drawing several decompositions covers different edges in different
/// mixture children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub parts: Vec<Part>,
}

impl Decomposition {
    /// Canonical form for duplicate detection across random draws.
    pub fn canonical_key(&self) -> Vec<(usize, Vec<PlaceId>)> {
        let mut key: Vec<(usize, Vec<PlaceId>)> = self
            .parts
            .iter()
            .map(|p| (p.template_idx, p.nodes.clone()))
            .collect();
        key.sort();
        key
    }

    /// Re-checks the decomposition invariants: pairwise disjoint parts,
    /// full vertex coverage, and per-part template embedding (template
    /// edges present between the bound nodes).
    pub fn validate(&self, map: &SemanticMap, templates: &[SubMapTemplate]) -> Result<(), TopoError> {
        let mut covered = BTreeSet::new();
        for part in &self.parts {
            let template = templates.get(part.template_idx).ok_or_else(|| {
                TopoError::Parse(format!("part references template {}", part.template_idx))
            })?;
            if part.nodes.len() != template.vertices {
                return Err(TopoError::Parse(format!(
                    "part arity {} != template {} arity {}",
                    part.nodes.len(),
                    template.name,
                    template.vertices
                )));
            }
            for &n in &part.nodes {
                if map.node(n).is_none() {
                    return Err(TopoError::UnknownPlace(n.0));
                }
                if !covered.insert(n) {
                    return Err(TopoError::Parse(format!("node {} covered twice", n.0)));
                }
            }
            for &(a, b) in &template.edges {
                let (u, v) = (part.nodes[a], part.nodes[b]);
                if !map.neighbors(u).contains(&v) {
                    return Err(TopoError::Parse(format!(
                        "template {} edge ({a},{b}) not present between {} and {}",
                        template.name, u.0, v.0
                    )));
                }
            }
        }
        if covered.len() != map.num_nodes() {
            return Err(TopoError::Parse(format!(
                "decomposition covers {} of {} vertices",
                covered.len(),
                map.num_nodes()
            )));
        }
        Ok(())
    }
}

/// Attempts one embedding of `template` rooted at `start`, using only
/// unmatched vertices. Slots are filled in BFS order from slot 0; each
/// slot candidate must neighbor the images of all earlier-mapped adjacent
/// slots. Backtracks over shuffled candidate orders.
fn try_embed(
    map: &SemanticMap,
    adj: &std::collections::BTreeMap<PlaceId, Vec<PlaceId>>,
    template: &SubMapTemplate,
    start: PlaceId,
    matched: &BTreeSet<PlaceId>,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<PlaceId>> {
    let _ = map;
    let (order, _) = template_bfs(template);
    let mut image: Vec<Option<PlaceId>> = vec![None; template.vertices];
    image[order[0]] = Some(start);

    fn rec(
        adj: &std::collections::BTreeMap<PlaceId, Vec<PlaceId>>,
        template: &SubMapTemplate,
        order: &[usize],
        depth: usize,
        image: &mut Vec<Option<PlaceId>>,
        matched: &BTreeSet<PlaceId>,
        rng: &mut ChaCha8Rng,
    ) -> bool {
        if depth == order.len() {
            return true;
        }
        let slot = order[depth];
        // Candidates: unmatched, unused neighbors of some already-mapped
        // adjacent slot, consistent with every mapped adjacent slot.
        let anchors: Vec<usize> = template
            .edges
            .iter()
            .flat_map(|&(a, b)| [(a, b), (b, a)])
            .filter(|&(a, b)| b == slot && image[a].is_some())
            .map(|(a, _)| a)
            .collect();
        debug_assert!(!anchors.is_empty(), "BFS order keeps slots attached");
        let mut candidates: Vec<PlaceId> = adj[&image[anchors[0]].unwrap()]
            .iter()
            .copied()
            .filter(|c| !matched.contains(c) && !image.iter().flatten().any(|&u| u == *c))
            .filter(|c| {
                anchors
                    .iter()
                    .all(|&a| adj[&image[a].unwrap()].contains(c))
            })
            .collect();
        candidates.shuffle(rng);
        for c in candidates {
            image[slot] = Some(c);
            if rec(adj, template, order, depth + 1, image, matched, rng) {
                return true;
            }
            image[slot] = None;
        }
        false
    }

    if rec(adj, template, &order, 1, &mut image, matched, rng) {
        Some(image.into_iter().map(|i| i.unwrap()).collect())
    } else {
        None
    }
}

/// BFS order over template slots from slot 0.
fn template_bfs(template: &SubMapTemplate) -> (Vec<usize>, Vec<Option<usize>>) {
    let mut adj = vec![Vec::new(); template.vertices];
    for &(a, b) in &template.edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut order = vec![0usize];
    let mut parent = vec![None; template.vertices];
    let mut seen = vec![false; template.vertices];
    seen[0] = true;
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

/// Greedy randomized matching: larger templates first, one shuffled sweep
/// per template over unmatched vertices, leftovers covered by the
/// single-node template. Always succeeds when a single-node template is
/// present. Matched parts are slot-canonicalized.
pub fn decompose(
    map: &SemanticMap,
    templates: &[SubMapTemplate],
    seed: u64,
) -> Result<Decomposition, TopoError> {
    let single_idx = templates
        .iter()
        .position(|t| t.vertices == 1)
        .ok_or(TopoError::MissingSingleNode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adj = map.adjacency();
    let mut matched: BTreeSet<PlaceId> = BTreeSet::new();
    let mut parts: Vec<Part> = Vec::new();

    // Multi-vertex templates, largest first (stable on ties).
    let mut by_size: Vec<usize> = (0..templates.len()).filter(|&i| templates[i].vertices > 1).collect();
    by_size.sort_by_key(|&i| usize::MAX - templates[i].vertices);

    for &ti in &by_size {
        let template = &templates[ti];
        let mut vertices = map.node_ids();
        vertices.shuffle(&mut rng);
        for v in vertices {
            if matched.contains(&v) {
                continue;
            }
            if let Some(mut nodes) = try_embed(map, &adj, template, v, &matched, &mut rng) {
                template.canonicalize(&mut nodes);
                matched.extend(nodes.iter().copied());
                parts.push(Part { template_idx: ti, nodes });
            }
        }
    }
    for v in map.node_ids() {
        if !matched.contains(&v) {
            parts.push(Part { template_idx: single_idx, nodes: vec![v] });
        }
    }
    parts.sort();
    let decomposition = Decomposition { parts };
    debug_assert!(decomposition.validate(map, templates).is_ok());
    Ok(decomposition)
}
