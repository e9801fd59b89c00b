//! Loopy belief propagation: synchronous damped sum-product in log space.

use serde::{Deserialize, Serialize};

use super::MrfInstance;
use crate::util::log_sum_exp;

#[derive(Debug, Clone)]
pub struct BpConfig {
    pub max_iterations: usize,
    /// Log-domain damping weight on the previous message (0 = undamped).
    pub damping: f64,
    /// Convergence threshold on the max log-message change.
    pub tolerance: f64,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self { max_iterations: 1000, damping: 0.5, tolerance: 1e-6 }
    }
}

/// Outcome of one propagation run. Non-convergence is a reported state,
/// not an error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BpResult {
    /// Per node, normalized belief over classes.
    pub beliefs: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub max_residual: f64,
}

/// Directed messages on both orientations of every edge: directed edge
/// `2e` runs `a -> b` of undirected edge `e`, `2e + 1` runs `b -> a`.
struct Messages {
    msg: Vec<Vec<f64>>,
    dir: Vec<(usize, usize)>,
    incoming: Vec<Vec<usize>>,
    reverse: Vec<usize>,
}

impl Messages {
    fn new(mrf: &MrfInstance) -> Self {
        let classes = mrf.classes();
        let uniform = vec![-(classes as f64).ln(); classes];
        let mut dir = Vec::with_capacity(mrf.edges.len() * 2);
        let mut reverse = Vec::with_capacity(mrf.edges.len() * 2);
        for &(a, b) in &mrf.edges {
            dir.push((a, b));
            dir.push((b, a));
            reverse.push(dir.len() - 1);
            reverse.push(dir.len() - 2);
        }
        let mut incoming = vec![Vec::new(); mrf.num_nodes()];
        for (d, &(_, to)) in dir.iter().enumerate() {
            incoming[to].push(d);
        }
        Self { msg: vec![uniform; dir.len()], dir, incoming, reverse }
    }
}

fn run_messages(mrf: &MrfInstance, cfg: &BpConfig) -> (Messages, bool, usize, f64) {
    let classes = mrf.classes();
    let mut m = Messages::new(mrf);
    let mut converged = false;
    let mut iterations = 0;
    let mut max_residual = f64::INFINITY;
    let mut scratch = vec![0.0f64; classes];

    for iter in 0..cfg.max_iterations {
        iterations = iter + 1;
        let mut new_msgs = m.msg.clone();
        max_residual = 0.0;
        for (d, &(from, _)) in m.dir.iter().enumerate() {
            // Cavity field at the source: unary plus all incoming messages
            // except the reverse of this edge.
            let rev = m.reverse[d];
            for c in 0..classes {
                scratch[c] = mrf.unary[from][c];
            }
            for &inc in &m.incoming[from] {
                if inc != rev {
                    for c in 0..classes {
                        scratch[c] += m.msg[inc][c];
                    }
                }
            }
            let mut out = vec![0.0f64; classes];
            for (cj, out_c) in out.iter_mut().enumerate() {
                *out_c = log_sum_exp(
                    (0..classes)
                        .map(|ci| scratch[ci] + mrf.pairwise.log_get(ci, cj))
                        .collect::<Vec<_>>()
                        .into_iter(),
                );
            }
            normalize_log(&mut out);
            if cfg.damping > 0.0 {
                for (c, x) in out.iter_mut().enumerate() {
                    *x = cfg.damping * m.msg[d][c] + (1.0 - cfg.damping) * *x;
                }
                normalize_log(&mut out);
            }
            for c in 0..classes {
                max_residual = max_residual.max((out[c] - m.msg[d][c]).abs());
            }
            new_msgs[d] = out;
        }
        m.msg = new_msgs;
        if max_residual < cfg.tolerance {
            converged = true;
            break;
        }
    }
    (m, converged, iterations, max_residual)
}

fn normalize_log(xs: &mut [f64]) {
    let norm = log_sum_exp(xs.iter().copied());
    xs.iter_mut().for_each(|x| *x -= norm);
}

fn node_beliefs(mrf: &MrfInstance, m: &Messages) -> Vec<Vec<f64>> {
    let classes = mrf.classes();
    (0..mrf.num_nodes())
        .map(|i| {
            let mut b: Vec<f64> = (0..classes)
                .map(|c| mrf.unary[i][c] + m.incoming[i].iter().map(|&d| m.msg[d][c]).sum::<f64>())
                .collect();
            let norm = log_sum_exp(b.iter().copied());
            b.iter_mut().for_each(|x| *x = (*x - norm).exp());
            b
        })
        .collect()
}

/// Runs synchronous damped sum-product message passing and returns the
/// normalized beliefs plus convergence diagnostics. With damping 0 on a
/// tree, messages settle to the exact marginals within diameter-many
/// synchronous iterations.
pub fn loopy_bp(mrf: &MrfInstance, cfg: &BpConfig) -> BpResult {
    let (m, converged, iterations, max_residual) = run_messages(mrf, cfg);
    BpResult { beliefs: node_beliefs(mrf, &m), converged, iterations, max_residual }
}

/// Bethe approximation of the log partition function at the BP fixed
/// point; exact on trees. This is the (approximate) analogue of the
/// template networks' exact marginal likelihood:
///
/// `log Z ~ sum_i b_i (u_i - ln b_i)
///        + sum_(ij) b_ij (ln phi - ln b_ij + ln b_i + ln b_j)`
pub fn bethe_log_partition(mrf: &MrfInstance, cfg: &BpConfig) -> (f64, BpResult) {
    let classes = mrf.classes();
    let (m, converged, iterations, max_residual) = run_messages(mrf, cfg);
    let beliefs = node_beliefs(mrf, &m);

    let mut log_z = 0.0;
    for i in 0..mrf.num_nodes() {
        for c in 0..classes {
            let b = beliefs[i][c];
            if b > 0.0 {
                log_z += b * (mrf.unary[i][c] - b.ln());
            }
        }
    }
    for (e, &(i, j)) in mrf.edges.iter().enumerate() {
        // b_ij(ci,cj) ∝ phi(ci,cj) exp(h_i\j(ci) + h_j\i(cj)), where the
        // cavity field h excludes the message across this edge.
        let hi = cavity(mrf, &m, i, 2 * e + 1);
        let hj = cavity(mrf, &m, j, 2 * e);
        let mut pair = vec![0.0f64; classes * classes];
        for ci in 0..classes {
            for cj in 0..classes {
                pair[ci * classes + cj] = mrf.pairwise.log_get(ci, cj) + hi[ci] + hj[cj];
            }
        }
        let norm = log_sum_exp(pair.iter().copied());
        for ci in 0..classes {
            for cj in 0..classes {
                let lb = pair[ci * classes + cj] - norm;
                let b = lb.exp();
                if b > 0.0 {
                    let b_i = beliefs[i][ci].max(f64::MIN_POSITIVE);
                    let b_j = beliefs[j][cj].max(f64::MIN_POSITIVE);
                    log_z += b * (mrf.pairwise.log_get(ci, cj) - lb + b_i.ln() + b_j.ln());
                }
            }
        }
    }
    let result = BpResult { beliefs, converged, iterations, max_residual };
    (log_z, result)
}

/// Field at node `i` from its unary and all incoming messages except the
/// directed message `excluded`.
fn cavity(mrf: &MrfInstance, m: &Messages, i: usize, excluded: usize) -> Vec<f64> {
    let classes = mrf.classes();
    let mut h: Vec<f64> = (0..classes).map(|c| mrf.unary[i][c]).collect();
    for &d in &m.incoming[i] {
        if d != excluded {
            for c in 0..classes {
                h[c] += m.msg[d][c];
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mrf::PairwisePotential;
    use crate::semmap::PlaceId;

    fn instance(unary: Vec<Vec<f64>>, edges: Vec<(usize, usize)>, pw: PairwisePotential) -> MrfInstance {
        let node_order = (0..unary.len() as u32).map(PlaceId).collect();
        MrfInstance { node_order, edges, unary, pairwise: pw }
    }

    /// Exact marginals and log partition by explicit enumeration.
    fn enumerate(mrf: &MrfInstance) -> (Vec<Vec<f64>>, f64) {
        let n = mrf.num_nodes();
        let classes = mrf.classes();
        let mut marginals = vec![vec![0.0f64; classes]; n];
        let mut z = 0.0f64;
        let total = classes.pow(n as u32);
        for state in 0..total {
            let mut assign = Vec::with_capacity(n);
            let mut s = state;
            for _ in 0..n {
                assign.push(s % classes);
                s /= classes;
            }
            let mut logp = 0.0;
            for i in 0..n {
                logp += mrf.unary[i][assign[i]];
            }
            for &(a, b) in &mrf.edges {
                logp += mrf.pairwise.log_get(assign[a], assign[b]);
            }
            let p = logp.exp();
            z += p;
            for i in 0..n {
                marginals[i][assign[i]] += p;
            }
        }
        for row in marginals.iter_mut() {
            let t: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= t);
        }
        (marginals, z.ln())
    }

    fn random_pw(classes: usize, seed: u64) -> PairwisePotential {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut matrix = vec![0.0; classes * classes];
        for a in 0..classes {
            for b in a..classes {
                let v = rng.random_range(0.05..1.0);
                matrix[a * classes + b] = v;
                matrix[b * classes + a] = v;
            }
        }
        let total: f64 = matrix.iter().sum();
        matrix.iter_mut().for_each(|x| *x /= total);
        PairwisePotential { classes, matrix }
    }

    #[test]
    fn single_node_belief_is_normalized_unary() {
        let mrf = instance(vec![vec![0.0, -1.0, -2.0]], vec![], random_pw(3, 1));
        let res = loopy_bp(&mrf, &BpConfig::default());
        assert!(res.converged);
        let z: f64 = [0.0f64, -1.0, -2.0].iter().map(|l| l.exp()).sum();
        for (c, &b) in res.beliefs[0].iter().enumerate() {
            assert!((b - (-(c as f64)).exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn tree_beliefs_match_enumeration_quickly_without_damping() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        // A small tree: 0-1, 1-2, 1-3, 3-4 (diameter 3).
        let unary: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random_range(-3.0..0.0)).collect())
            .collect();
        let mrf = instance(unary, vec![(0, 1), (1, 2), (1, 3), (3, 4)], random_pw(3, 2));
        let cfg = BpConfig { damping: 0.0, ..BpConfig::default() };
        let res = loopy_bp(&mrf, &cfg);
        assert!(res.converged);
        assert!(
            res.iterations <= 4,
            "tree should converge within diameter+1, took {}",
            res.iterations
        );
        let (exact, log_z) = enumerate(&mrf);
        for (b, e) in res.beliefs.iter().zip(&exact) {
            for (x, y) in b.iter().zip(e) {
                assert!((x - y).abs() < 1e-8, "{x} vs {y}");
            }
        }
        let (bethe, _) = bethe_log_partition(&mrf, &cfg);
        assert!((bethe - log_z).abs() < 1e-6, "bethe {bethe} vs exact {log_z}");
    }

    #[test]
    fn loopy_beliefs_stay_close_to_enumeration() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        // 5 nodes with a cycle: 0-1-2-3-0 plus spur 3-4.
        let unary: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..0.0)).collect())
            .collect();
        let mrf = instance(
            unary,
            vec![(0, 1), (1, 2), (2, 3), (0, 3), (3, 4)],
            random_pw(3, 3),
        );
        let res = loopy_bp(&mrf, &BpConfig::default());
        let (exact, _) = enumerate(&mrf);
        for (b, e) in res.beliefs.iter().zip(&exact) {
            let tv: f64 = b.iter().zip(e).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0;
            assert!(tv < 0.05, "total variation {tv}");
        }
        assert!(res
            .beliefs
            .iter()
            .all(|b| (b.iter().sum::<f64>() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn uniform_pairwise_decouples_to_local_argmax() {
        let unary = vec![vec![-0.5, -2.0, -1.0], vec![-3.0, -0.1, -2.0]];
        let mrf = instance(unary.clone(), vec![(0, 1)], PairwisePotential::uniform(3));
        let res = loopy_bp(&mrf, &BpConfig::default());
        assert!(res.converged);
        for (i, b) in res.beliefs.iter().enumerate() {
            let argmax = b.iter().enumerate().max_by(|a, c| a.1.total_cmp(c.1)).unwrap().0;
            let local = unary[i]
                .iter()
                .enumerate()
                .max_by(|a, c| a.1.total_cmp(c.1))
                .unwrap()
                .0;
            assert_eq!(argmax, local);
        }
    }

    #[test]
    fn damped_runs_reach_a_stable_fixed_point() {
        let mrf = instance(
            vec![vec![-0.2, -1.0], vec![-0.7, -0.3], vec![-0.1, -2.0]],
            vec![(0, 1), (1, 2), (0, 2)],
            random_pw(2, 5),
        );
        for damping in [0.25, 0.5, 0.75] {
            let cfg = BpConfig { damping, ..BpConfig::default() };
            let first = loopy_bp(&mrf, &cfg);
            assert!(first.converged);
            assert!(first.max_residual < cfg.tolerance);
        }
    }
}
