//! Weight-threshold pruning of dense structures.

use super::LearnError;
use crate::spn::{NodeId, NodeKind, Spn, SpnBuilder};

/// Drops every sum-node child whose weight falls below `threshold`, removes
/// nodes no longer reachable from the root, and renormalizes the surviving
/// weights. Node count never increases and surviving nodes keep their
/// scopes, so a valid input stays valid. Refuses (naming the node) if a
/// threshold would strip some sum of all children — guaranteed not to
/// happen for normalized weights when `threshold < 1 / fan-in`.
pub fn prune(spn: &Spn, threshold: f64) -> Result<Spn, LearnError> {
    // Which children each sum keeps.
    let mut kept: Vec<Vec<usize>> = Vec::with_capacity(spn.num_nodes());
    for node in spn.nodes() {
        match spn.kind(node) {
            NodeKind::Sum => {
                let ws = spn.sum_weights(node);
                let keep: Vec<usize> = (0..ws.len()).filter(|&k| ws[k] >= threshold).collect();
                if keep.is_empty() {
                    return Err(LearnError::PruneWouldEmpty { node: node.0 });
                }
                kept.push(keep);
            }
            _ => kept.push((0..spn.children(node).len()).collect()),
        }
    }

    // Reachability over kept edges, from the root down.
    let mut reachable = vec![false; spn.num_nodes()];
    reachable[spn.root().index()] = true;
    for i in (0..spn.num_nodes()).rev() {
        if !reachable[i] {
            continue;
        }
        let node = NodeId(i as u32);
        let kids = spn.children(node);
        for &k in &kept[i] {
            reachable[kids[k].index()] = true;
        }
    }

    // Rebuild in the original (topological) order.
    let mut builder = SpnBuilder::new(spn.vars().clone());
    let mut remap: Vec<Option<NodeId>> = vec![None; spn.num_nodes()];
    for i in 0..spn.num_nodes() {
        if !reachable[i] {
            continue;
        }
        let node = NodeId(i as u32);
        let new_id = match spn.kind(node) {
            NodeKind::Indicator { var, value } => builder.indicator(var, value)?,
            NodeKind::Product => {
                let kids: Vec<NodeId> = spn
                    .children(node)
                    .iter()
                    .map(|c| remap[c.index()].expect("children precede parents"))
                    .collect();
                builder.product(&kids)?
            }
            NodeKind::Sum => {
                let kids_all = spn.children(node);
                let ws_all = spn.sum_weights(node);
                let mut kids = Vec::with_capacity(kept[i].len());
                let mut ws = Vec::with_capacity(kept[i].len());
                let total: f64 = kept[i].iter().map(|&k| ws_all[k]).sum();
                for &k in &kept[i] {
                    kids.push(remap[kids_all[k].index()].expect("children precede parents"));
                    ws.push(ws_all[k] / total);
                }
                builder.sum(&kids, &ws)?
            }
        };
        remap[i] = Some(new_id);
    }
    let root = remap[spn.root().index()].expect("root is reachable");
    Ok(builder.finish(root)?)
}
