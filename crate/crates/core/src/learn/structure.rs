//! Random dense structure generation by recursive scope decomposition.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

use super::LearnError;
use crate::spn::{NodeId, Spn, SpnBuilder, VarId, VarTable};

/// Knobs for [`generate_dense_structure`]. The seed fully determines the
/// generated structure.
///
/// Recursion branches `decompositions_per_level * mixtures_per_scope` ways
/// per level, so `max_depth` caps how deep the multi-decomposition regime
/// goes: scopes below the cap are factorized into their singletons by a
/// single product, which keeps networks over a thousand variables tractable
/// on a CPU while retaining hierarchical mixtures near the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureConfig {
    pub decompositions_per_level: usize,
    pub subsets_per_decomposition: usize,
    pub mixtures_per_scope: usize,
    pub max_depth: usize,
    pub rng_seed: u64,
}

impl Default for StructureConfig {
    fn default() -> Self {
        Self {
            decompositions_per_level: 2,
            subsets_per_decomposition: 2,
            mixtures_per_scope: 2,
            max_depth: 3,
            rng_seed: 0,
        }
    }
}

impl StructureConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        for (field, v) in [
            ("decompositions_per_level", self.decompositions_per_level),
            ("subsets_per_decomposition", self.subsets_per_decomposition),
            ("mixtures_per_scope", self.mixtures_per_scope),
        ] {
            if v < 1 {
                return Err(LearnError::BadConfig { field });
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

/// Supplies the leaf mixtures the recursion bottoms out in. Atom index
/// space is the generator's scope alphabet: plain variables for
/// [`generate_dense_structure`], whole sub-networks elsewhere.
pub(crate) trait AtomSource {
    fn num_atoms(&self) -> usize;
    fn mixtures(
        &mut self,
        builder: &mut SpnBuilder,
        atom: usize,
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<NodeId>, LearnError>;
}

/// Atoms are categorical variables; each requested mixture is a fresh sum
/// over the variable's indicators with random weights, so sibling mixture
/// components get their own leaf distributions.
pub(crate) struct VarAtoms {
    pub vars: Vec<VarId>,
}

impl AtomSource for VarAtoms {
    fn num_atoms(&self) -> usize {
        self.vars.len()
    }

    fn mixtures(
        &mut self,
        builder: &mut SpnBuilder,
        atom: usize,
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<NodeId>, LearnError> {
        let var = self.vars[atom];
        let card = builder.vars().cardinality(var);
        let indicators: Vec<NodeId> = (0..card)
            .map(|v| builder.indicator(var, v))
            .collect::<Result<_, _>>()?;
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let w = random_weights(rng, indicators.len());
            out.push(builder.sum(&indicators, &w)?);
        }
        Ok(out)
    }
}

fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Dirichlet(1): normalized exponentials.
    let mut w: Vec<f64> = (0..n)
        .map(|_| -(rng.random_range(1e-12f64..1.0)).ln())
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Splits `scope` into `k` nonempty random subsets.
fn random_partition(rng: &mut ChaCha8Rng, scope: &[usize], k: usize) -> Vec<Vec<usize>> {
    debug_assert!(k >= 1 && k <= scope.len());
    let mut items = scope.to_vec();
    items.shuffle(rng);
    let mut cuts: Vec<usize> = (1..items.len()).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(k - 1).collect();
    cuts.sort_unstable();
    cuts.push(items.len());
    let mut out = Vec::with_capacity(k);
    let mut lo = 0;
    for hi in cuts {
        out.push(items[lo..hi].to_vec());
        lo = hi;
    }
    out
}

/// Builds `want` mixture sums over `scope`, recursing per the config.
pub(crate) fn generate_mixtures(
    builder: &mut SpnBuilder,
    source: &mut dyn AtomSource,
    scope: &[usize],
    depth: usize,
    want: usize,
    cfg: &StructureConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<NodeId>, LearnError> {
    if scope.is_empty() {
        return Err(LearnError::EmptyScope);
    }
    if scope.len() == 1 {
        return source.mixtures(builder, scope[0], want, rng);
    }

    let capped = depth >= cfg.max_depth;
    let (n_decomps, n_subsets, child_mixtures) = if capped {
        (1, scope.len(), 1)
    } else {
        (
            cfg.decompositions_per_level,
            cfg.subsets_per_decomposition.min(scope.len()),
            cfg.mixtures_per_scope,
        )
    };

    let mut products = Vec::with_capacity(n_decomps * child_mixtures);
    for _ in 0..n_decomps {
        let parts = random_partition(rng, scope, n_subsets);
        let mut part_mixtures = Vec::with_capacity(parts.len());
        for part in &parts {
            part_mixtures.push(generate_mixtures(
                builder,
                source,
                part,
                depth + 1,
                child_mixtures,
                cfg,
                rng,
            )?);
        }
        for j in 0..child_mixtures {
            let kids: Vec<NodeId> = part_mixtures.iter().map(|m| m[j]).collect();
            products.push(builder.product(&kids)?);
        }
    }

    let mut sums = Vec::with_capacity(want);
    for _ in 0..want {
        let w = random_weights(rng, products.len());
        sums.push(builder.sum(&products, &w)?);
    }
    Ok(sums)
}

/// Generates a random dense SPN over `scope`, a subset of the variables in
/// `vars`. The root is a single sum; singleton scopes reduce to one sum
/// over the variable's indicators. The result always passes validity
/// checking and is identical across runs with an equal seed.
pub fn generate_dense_structure(
    vars: &VarTable,
    scope: &[VarId],
    cfg: &StructureConfig,
) -> Result<Spn, LearnError> {
    cfg.validate()?;
    if scope.is_empty() {
        return Err(LearnError::EmptyScope);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut builder = SpnBuilder::new(vars.clone());
    let mut source = VarAtoms { vars: scope.to_vec() };
    let atoms: Vec<usize> = (0..scope.len()).collect();
    let roots = generate_mixtures(&mut builder, &mut source, &atoms, 0, 1, cfg, &mut rng)?;
    Ok(builder.finish(roots[0])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spn::NodeKind;

    #[test]
    fn singleton_scope_is_a_sum_over_indicators() {
        let vars = VarTable::uniform(1, 3).unwrap();
        let spn = generate_dense_structure(&vars, &[VarId(0)], &StructureConfig::default()).unwrap();
        assert_eq!(spn.num_nodes(), 4);
        assert!(matches!(spn.kind(spn.root()), NodeKind::Sum));
        assert_eq!(spn.children(spn.root()).len(), 3);
        assert!(spn.check_validity().unwrap().is_valid());
    }

    #[test]
    fn two_vars_one_decomposition_gives_mixture_shape() {
        // Mirrors the classic naive-Bayes-mixture drawing: a root sum over
        // per-component products of per-variable indicator mixtures.
        let vars = VarTable::uniform(2, 2).unwrap();
        let cfg = StructureConfig {
            decompositions_per_level: 1,
            subsets_per_decomposition: 2,
            mixtures_per_scope: 3,
            max_depth: 4,
            rng_seed: 9,
        };
        let spn = generate_dense_structure(&vars, &[VarId(0), VarId(1)], &cfg).unwrap();
        // 4 indicators + 6 leaf sums + 3 products + root.
        assert_eq!(spn.num_nodes(), 14);
        let root_kids = spn.children(spn.root());
        assert_eq!(root_kids.len(), 3);
        for p in root_kids {
            assert!(matches!(spn.kind(*p), NodeKind::Product));
            assert_eq!(spn.children(*p).len(), 2);
        }
        assert!(spn.check_validity().unwrap().is_valid());
    }

    #[test]
    fn equal_seed_equal_structure() {
        let vars = VarTable::uniform(9, 3).unwrap();
        let scope: Vec<VarId> = vars.vars().collect();
        let cfg = StructureConfig::default().with_seed(42);
        let a = generate_dense_structure(&vars, &scope, &cfg).unwrap();
        let b = generate_dense_structure(&vars, &scope, &cfg).unwrap();
        assert_eq!(a.to_json_bytes(), b.to_json_bytes());
        let c = generate_dense_structure(&vars, &scope, &cfg.clone().with_seed(43)).unwrap();
        assert_ne!(a.to_json_bytes(), c.to_json_bytes());
    }

    #[test]
    fn empty_scope_is_an_error() {
        let vars = VarTable::uniform(2, 2).unwrap();
        assert!(matches!(
            generate_dense_structure(&vars, &[], &StructureConfig::default()),
            Err(LearnError::EmptyScope)
        ));
    }
}
