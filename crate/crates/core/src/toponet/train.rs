//! End-to-end training: discriminative place model, then generative
//! template layers over frozen bottoms.

use std::collections::{BTreeMap, BTreeSet};

use super::decompose::decompose;
use super::{SubMapTemplate, TemplateSpn, TopoError, ToponetModel};
use crate::learn::{
    self, init_leaf_weights_from_counts, LabeledSample, SoftSample, TrainConfig, TrainTrace,
};
use crate::place::{build_place_model, place_var_table, PlaceModelConfig};
use crate::semmap::{ClassCatalogue, PlaceId, SemanticMap};
use crate::spn::SoftEvidence;
use crate::util::derive_seed;

#[derive(Debug, Clone)]
pub struct ToponetTrainConfig {
    pub place: PlaceModelConfig,
    /// Phase 1: cross-entropy over the per-class place networks.
    pub discriminative: TrainConfig,
    /// Phase 2: mean log-likelihood over the template class layers.
    pub generative: TrainConfig,
    /// Decomposition draws per training map when collecting parts.
    pub decomposition_rounds: usize,
    /// Seed the leaf mixtures from per-class cell counts before phase 1.
    pub count_init: bool,
    pub rng_seed: u64,
}

impl Default for ToponetTrainConfig {
    fn default() -> Self {
        Self {
            place: PlaceModelConfig::default(),
            discriminative: TrainConfig {
                loss: learn::Loss::Discriminative,
                learning_rate: 0.4,
                epochs: 8,
                batch_size: 16,
                ..TrainConfig::default()
            },
            generative: TrainConfig {
                loss: learn::Loss::Generative,
                learning_rate: 0.5,
                epochs: 30,
                batch_size: 64,
                ..TrainConfig::default()
            },
            decomposition_rounds: 4,
            count_init: true,
            rng_seed: 0,
        }
    }
}

/// Loss traces and per-template sample counts from one training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub discriminative: TrainTrace,
    /// Per template: name, generative trace, unique part-sample count.
    pub templates: Vec<(String, TrainTrace, usize)>,
}

/// Trains the full model on labeled maps: the shared place model learns
/// discriminatively from every place observation, its weights freeze, and
/// each template's class layers learn generatively from the map parts the
/// template matched (collected over several decomposition rounds per map,
/// deduplicated). Errors if some template never matches a part.
pub fn train_toponet(
    catalogue: &ClassCatalogue,
    maps: &[SemanticMap],
    templates: Vec<SubMapTemplate>,
    cfg: &ToponetTrainConfig,
) -> Result<(ToponetModel, TrainReport), TopoError> {
    if maps.is_empty() {
        return Err(TopoError::Learn(learn::LearnError::EmptyData));
    }
    let num_classes = catalogue.len();
    let place_vars = place_var_table();

    // Phase 1: discriminative place model on all labeled places.
    let mut place_cfg = cfg.place.clone();
    place_cfg.rng_seed = derive_seed(cfg.rng_seed, &[1]);
    let mut place_model = build_place_model(num_classes, &place_cfg)?;

    let mut samples = Vec::new();
    for map in maps {
        for (id, node) in map.places() {
            let (Some(label), Some(grid)) = (node.label, node.grid.as_ref()) else {
                return Err(TopoError::MissingGeometry(id.0));
            };
            samples.push(LabeledSample {
                evidence: grid.to_evidence(&place_vars)?,
                label,
                weight: 1.0,
            });
        }
    }
    if cfg.count_init {
        for class in 0..num_classes {
            let class_evidence: Vec<&crate::spn::Evidence> = samples
                .iter()
                .filter(|s| s.label == class)
                .map(|s| &s.evidence)
                .collect();
            if !class_evidence.is_empty() {
                init_leaf_weights_from_counts(
                    &mut place_model.class_spns_mut()[class],
                    &class_evidence,
                    1.0,
                    0.05,
                    derive_seed(cfg.rng_seed, &[2, class as u64]),
                )?;
            }
        }
    }
    let mut disc_cfg = cfg.discriminative.clone();
    disc_cfg.rng_seed = derive_seed(cfg.rng_seed, &[3]);
    let discriminative =
        learn::train_discriminative(place_model.class_spns_mut(), &samples, &disc_cfg)?;
    place_model.mark_trained();

    // Collect unique parts per template across decomposition rounds.
    let mut parts_by_template: Vec<BTreeSet<(usize, Vec<PlaceId>)>> =
        vec![BTreeSet::new(); templates.len()];
    for (mi, map) in maps.iter().enumerate() {
        for round in 0..cfg.decomposition_rounds {
            let seed = derive_seed(cfg.rng_seed, &[4, mi as u64, round as u64]);
            let decomposition = decompose(map, &templates, seed)?;
            for part in decomposition.parts {
                parts_by_template[part.template_idx].insert((mi, part.nodes));
            }
        }
    }

    // Cache bottom outputs: log G_c(x_place) per (map, place, class).
    let mut g_cache: BTreeMap<(usize, PlaceId), Vec<f64>> = BTreeMap::new();
    for (ti, parts) in parts_by_template.iter().enumerate() {
        if parts.is_empty() {
            return Err(TopoError::NoPartsForTemplate(templates[ti].name.clone()));
        }
        for (mi, nodes) in parts {
            for &id in nodes {
                g_cache.entry((*mi, id)).or_default();
            }
        }
    }
    for (&(mi, id), values) in g_cache.iter_mut() {
        let grid = maps[mi]
            .node(id)
            .and_then(|n| n.grid.as_ref())
            .ok_or(TopoError::MissingGeometry(id.0))?;
        let ev = grid.to_evidence(&place_vars)?;
        *values = place_model
            .class_spns()
            .iter()
            .map(|spn| spn.evaluate(&ev))
            .collect::<Result<_, _>>()?;
    }

    // Phase 2: generative class layers per template, bottoms frozen and
    // entering through cached log-likelihood leaves.
    let mut trained_templates = Vec::with_capacity(templates.len());
    let mut template_reports = Vec::with_capacity(templates.len());
    for (ti, shape) in templates.into_iter().enumerate() {
        let mut template = TemplateSpn::build(shape, num_classes)?;
        let mut soft_samples = Vec::with_capacity(parts_by_template[ti].len());
        for (mi, nodes) in &parts_by_template[ti] {
            let rows: Vec<Vec<f64>> = nodes
                .iter()
                .map(|&id| {
                    let label = maps[*mi].node(id).unwrap().label.expect("training maps are labeled");
                    let g = &g_cache[&(*mi, id)];
                    (0..num_classes)
                        .map(|c| if c == label { g[c] } else { f64::NEG_INFINITY })
                        .collect()
                })
                .collect();
            soft_samples.push(SoftSample {
                soft: SoftEvidence::from_log_rows(template.skeleton().vars(), rows)?,
                weight: 1.0,
            });
        }
        let trainable = template.trainable_sums();
        let mut gen_cfg = cfg.generative.clone();
        gen_cfg.rng_seed = derive_seed(cfg.rng_seed, &[5, ti as u64]);
        let trace = learn::train_top_generative(
            template.skeleton_mut(),
            &soft_samples,
            &trainable,
            &gen_cfg,
        )?;
        template.mark_trained();
        template_reports.push((
            template.template.name.clone(),
            trace,
            parts_by_template[ti].len(),
        ));
        trained_templates.push(template);
    }

    let model = ToponetModel {
        catalogue: catalogue.clone(),
        place_model,
        templates: trained_templates,
    };
    model.validate()?;
    Ok((model, TrainReport { discriminative, templates: template_reports }))
}
