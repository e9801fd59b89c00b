//! The layered per-place model: per class, eight view sub-SPNs joined by a
//! place-level sub-SPN over the full 1176-cell grid.
//!
//! The per-class networks are the discriminatively trained bottom layers of
//! the whole system; template networks later stack generative layers on
//! top of them.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{place_var_table, PlaceError, PolarGrid, View, NUM_VIEWS};
use crate::learn::{self, LearnError, StructureConfig};
use crate::spn::{NodeId, Spn, SpnBuilder};
use crate::util::derive_seed;

/// Structure knobs for one class sub-SPN. Views get their own generation
/// config; a second config drives the place-level network that combines the
/// eight view sub-SPNs (whose products always join disjoint view scopes).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaceModelConfig {
    pub view: StructureConfigSer,
    pub place: StructureConfigSer,
    pub rng_seed: u64,
}

/// Serializable mirror of [`StructureConfig`] minus the seed (seeds are
/// derived per class and view).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureConfigSer {
    pub decompositions_per_level: usize,
    pub subsets_per_decomposition: usize,
    pub mixtures_per_scope: usize,
    pub max_depth: usize,
}

impl StructureConfigSer {
    fn with_seed(&self, seed: u64) -> StructureConfig {
        StructureConfig {
            decompositions_per_level: self.decompositions_per_level,
            subsets_per_decomposition: self.subsets_per_decomposition,
            mixtures_per_scope: self.mixtures_per_scope,
            max_depth: self.max_depth,
            rng_seed: seed,
        }
    }
}

impl Default for PlaceModelConfig {
    fn default() -> Self {
        Self {
            view: StructureConfigSer {
                decompositions_per_level: 2,
                subsets_per_decomposition: 2,
                mixtures_per_scope: 2,
                max_depth: 1,
            },
            place: StructureConfigSer {
                decompositions_per_level: 2,
                subsets_per_decomposition: 2,
                mixtures_per_scope: 2,
                max_depth: 2,
            },
            rng_seed: 0,
        }
    }
}

/// Per-class sub-SPNs over the shared 1176-variable table. The class
/// networks are the discriminative layer; everything above them (template
/// top layers) is generative.
#[derive(Debug, Clone)]
pub struct PlaceModel {
    num_classes: usize,
    class_spns: Vec<Spn>,
    config: PlaceModelConfig,
    trained: bool,
}

/// Terminal provider wiring view-level mixtures into the place-level
/// generator: atom `v` resolves to view `v`'s root mixtures.
struct ViewAtoms {
    mixtures: Vec<Vec<NodeId>>,
}

impl learn::AtomSource for ViewAtoms {
    fn num_atoms(&self) -> usize {
        self.mixtures.len()
    }

    fn mixtures(
        &mut self,
        _builder: &mut SpnBuilder,
        atom: usize,
        count: usize,
        _rng: &mut ChaCha8Rng,
    ) -> Result<Vec<NodeId>, LearnError> {
        let available = &self.mixtures[atom];
        Ok((0..count).map(|j| available[j % available.len()]).collect())
    }
}

/// Builds one class sub-SPN (views then place level) into `builder`,
/// returning its root. Exposed within the crate so template construction
/// can replay the exact same build for re-bound variables.
pub(crate) fn build_class_geometry(
    builder: &mut SpnBuilder,
    var_base: u32,
    cfg: &PlaceModelConfig,
    class_seed: u64,
) -> Result<NodeId, LearnError> {
    let place_cfg = cfg.place.with_seed(0);
    let view_cfg = cfg.view.with_seed(0);
    let want_per_view = place_cfg.mixtures_per_scope;

    let mut view_mixtures = Vec::with_capacity(NUM_VIEWS);
    for v in 0..NUM_VIEWS {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(class_seed, &[1, v as u64]));
        let vars: Vec<crate::spn::VarId> = View::var_indices(v)
            .map(|i| crate::spn::VarId(var_base + i as u32))
            .collect();
        let mut source = learn::VarAtoms { vars };
        let atoms: Vec<usize> = (0..source.vars.len()).collect();
        view_mixtures.push(learn::generate_mixtures(
            builder,
            &mut source,
            &atoms,
            0,
            want_per_view,
            &view_cfg,
            &mut rng,
        )?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(class_seed, &[2]));
    let mut source = ViewAtoms { mixtures: view_mixtures };
    let atoms: Vec<usize> = (0..NUM_VIEWS).collect();
    let roots = learn::generate_mixtures(builder, &mut source, &atoms, 0, 1, &place_cfg, &mut rng)?;
    Ok(roots[0])
}

/// Builds the untrained per-class model: independent structure draws per
/// class (seeded from the config), each normalized.
pub fn build_place_model(num_classes: usize, cfg: &PlaceModelConfig) -> Result<PlaceModel, PlaceError> {
    let vars = place_var_table();
    let mut class_spns = Vec::with_capacity(num_classes);
    for c in 0..num_classes {
        let mut builder = SpnBuilder::new(vars.clone());
        let root = build_class_geometry(
            &mut builder,
            0,
            cfg,
            derive_seed(cfg.rng_seed, &[0xc1a5, c as u64]),
        )?;
        let mut spn = builder.finish(root)?;
        spn.normalize_weights()?;
        class_spns.push(spn);
    }
    Ok(PlaceModel {
        num_classes,
        class_spns,
        config: cfg.clone(),
        trained: false,
    })
}

/// Per-place classification output: per-class log-likelihoods and the
/// normalized posterior under a uniform class prior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalPosterior {
    pub log_likelihood: Vec<f64>,
    pub posterior: Vec<f64>,
}

impl LocalPosterior {
    pub fn argmax(&self) -> usize {
        self.posterior
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0)
    }
}

/// Evaluates every class sub-SPN on the grid and softmaxes the log values
/// (uniform class prior). Requires a trained model.
pub fn classify_local(model: &PlaceModel, grid: &PolarGrid) -> Result<LocalPosterior, PlaceError> {
    if !model.trained {
        return Err(PlaceError::Untrained);
    }
    Ok(model.local_posterior(grid)?)
}

impl PlaceModel {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn config(&self) -> &PlaceModelConfig {
        &self.config
    }

    pub fn class_spn(&self, class: usize) -> &Spn {
        &self.class_spns[class]
    }

    pub fn class_spns(&self) -> &[Spn] {
        &self.class_spns
    }

    pub fn class_spns_mut(&mut self) -> &mut [Spn] {
        &mut self.class_spns
    }

    pub fn replace_class_spn(&mut self, class: usize, spn: Spn) {
        self.class_spns[class] = spn;
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    /// Log-likelihood of the grid under each class network plus the softmax
    /// posterior, without the trained gate (internal callers).
    pub(crate) fn local_posterior(&self, grid: &PolarGrid) -> Result<LocalPosterior, PlaceError> {
        let ev = grid.to_evidence(self.class_spns[0].vars())?;
        let log_likelihood: Vec<f64> = self
            .class_spns
            .iter()
            .map(|spn| spn.evaluate(&ev))
            .collect::<Result<_, _>>()?;
        let lse = crate::util::log_sum_exp(log_likelihood.iter().copied());
        let posterior: Vec<f64> = log_likelihood.iter().map(|l| (l - lse).exp()).collect();
        Ok(LocalPosterior { log_likelihood, posterior })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "format": "toponets-place-model",
            "version": 1,
            "num_classes": self.num_classes,
            "trained": self.trained,
            "config": serde_json::to_value(&self.config).expect("config serializes"),
            "class_spns": self.class_spns.iter().map(|s| s.to_json()).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, PlaceError> {
        let get = |k: &str| value.get(k).ok_or_else(|| PlaceError::Parse(format!("missing {k}")));
        if get("format")?.as_str() != Some("toponets-place-model") {
            return Err(PlaceError::Parse("bad place-model format tag".into()));
        }
        let num_classes = get("num_classes")?
            .as_u64()
            .ok_or_else(|| PlaceError::Parse("bad num_classes".into()))? as usize;
        let trained = get("trained")?.as_bool().unwrap_or(false);
        let config: PlaceModelConfig = serde_json::from_value(get("config")?.clone())
            .map_err(|e| PlaceError::Parse(e.to_string()))?;
        let spns = get("class_spns")?
            .as_array()
            .ok_or_else(|| PlaceError::Parse("class_spns must be an array".into()))?;
        if spns.len() != num_classes {
            return Err(PlaceError::Parse("class count mismatch".into()));
        }
        let class_spns = spns
            .iter()
            .map(|v| Spn::from_json(v.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { num_classes, class_spns, config, trained })
    }
}
