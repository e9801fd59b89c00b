//! Gradient-based parameter learning in log space.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::LearnError;
use crate::spn::eval::LeafInput;
use crate::spn::{Evidence, NodeId, NodeKind, SoftEvidence, Spn};
use crate::util::derive_seed;

/// Which objective a training run optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Maximize mean log-likelihood of the evidence.
    Generative,
    /// Minimize cross-entropy of class posteriors over per-class roots.
    Discriminative,
}

/// Update rule for the generative loss. Projected gradient ascent is the
/// default; the EM-style multiplicative update is a documented alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenerativeAlgo {
    ProjectedGd,
    Em,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub loss: Loss,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Lower bound kept on every sum weight after each projection step.
    pub weight_floor: f64,
    /// Threshold handed to [`super::prune`] by pipelines; 0 disables.
    pub prune_threshold: f64,
    pub algo: GenerativeAlgo,
    /// Seed for batch shuffling; training is deterministic given it.
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: Loss::Generative,
            learning_rate: 0.2,
            epochs: 20,
            batch_size: 16,
            weight_floor: 1e-6,
            prune_threshold: 0.0,
            algo: GenerativeAlgo::ProjectedGd,
            rng_seed: 0,
        }
    }
}

/// One training observation: evidence over the network's variables, a class
/// index (used by the discriminative loss), and a positive sample weight.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub evidence: Evidence,
    pub label: usize,
    pub weight: f64,
}

/// A log-domain soft-evidence observation for top-layer training, where
/// frozen bottom networks enter through their cached leaf log-values.
#[derive(Debug, Clone)]
pub struct SoftSample {
    pub soft: SoftEvidence,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: Option<f64>,
}

/// Per-epoch loss trace, exportable as `epoch,loss,accuracy` CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,accuracy\n");
        for r in &self.rows {
            match r.accuracy {
                Some(a) => out.push_str(&format!("{},{},{}\n", r.epoch, r.loss, a)),
                None => out.push_str(&format!("{},{},\n", r.epoch, r.loss)),
            }
        }
        out
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.loss)
    }
}

/// Per-sum-node weight updater with floor projection.
struct WeightUpdater {
    /// Sum nodes whose weights this run may change.
    sums: Vec<NodeId>,
    /// Gradient (or EM statistic) accumulator aligned with the network's
    /// flat weight table.
    acc: Vec<f64>,
}

impl WeightUpdater {
    fn new(spn: &Spn, trainable: Option<&[NodeId]>) -> Self {
        let sums = match trainable {
            Some(t) => t.to_vec(),
            None => spn.sum_nodes().collect(),
        };
        Self { sums, acc: vec![0.0; spn.num_weights()] }
    }

    fn clear(&mut self) {
        self.acc.iter_mut().for_each(|a| *a = 0.0);
    }

    /// Adds one sample's weight-gradient contribution.
    ///
    /// d log S / d w_(s,c) = exp(grad_s + val_c - val_root); the EM variant
    /// accumulates edge responsibilities w * d log S / d w instead.
    fn accumulate(&mut self, spn: &Spn, values: &[f64], grads: &[f64], sample_weight: f64, em: bool) {
        let root_val = values[spn.root().index()];
        for &s in &self.sums {
            let g = grads[s.index()];
            if g == f64::NEG_INFINITY {
                continue;
            }
            let range = spn.weight_range(s);
            let kids = spn.children(s);
            for (k, c) in kids.iter().enumerate() {
                let mut e = g + values[c.index()] - root_val;
                if em {
                    e += spn.sum_weights(s)[k].ln();
                }
                if e != f64::NEG_INFINITY {
                    self.acc[range.start + k] += sample_weight * e.exp();
                }
            }
        }
    }

    fn apply(&self, spn: &mut Spn, cfg: &TrainConfig, batch_weight: f64) -> Result<(), LearnError> {
        let mut new_w = Vec::new();
        for &s in &self.sums {
            let range = spn.weight_range(s);
            let old = spn.sum_weights(s);
            new_w.clear();
            match cfg.algo {
                GenerativeAlgo::ProjectedGd => {
                    for (k, &w) in old.iter().enumerate() {
                        new_w.push(w + cfg.learning_rate * self.acc[range.start + k] / batch_weight);
                    }
                }
                GenerativeAlgo::Em => {
                    for k in 0..old.len() {
                        new_w.push(self.acc[range.start + k] / batch_weight + cfg.weight_floor);
                    }
                }
            }
            project_to_simplex(&mut new_w, cfg.weight_floor);
            spn.set_sum_weights(s, &new_w)?;
        }
        Ok(())
    }
}

/// Clips at the floor and renormalizes to sum 1.
fn project_to_simplex(w: &mut [f64], floor: f64) {
    let mut total = 0.0;
    for x in w.iter_mut() {
        if !x.is_finite() || *x < floor {
            *x = floor;
        }
        total += *x;
    }
    for x in w.iter_mut() {
        *x /= total;
    }
}

fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

fn train_generative_impl<I: LeafInput>(
    spn: &mut Spn,
    items: &[(&I, f64)],
    trainable: Option<&[NodeId]>,
    cfg: &TrainConfig,
) -> Result<TrainTrace, LearnError> {
    if items.is_empty() {
        return Err(LearnError::EmptyData);
    }
    let em = matches!(cfg.algo, GenerativeAlgo::Em);
    let mut updater = WeightUpdater::new(spn, trainable);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, &[0x67e]));
    let mut trace = TrainTrace::default();

    for epoch in 0..cfg.epochs {
        let mut epoch_ll = 0.0;
        let mut epoch_weight = 0.0;
        for (batch_no, batch) in epoch_batches(items.len(), cfg.batch_size, &mut rng)
            .into_iter()
            .enumerate()
        {
            let passes: Vec<(Vec<f64>, Vec<f64>, f64)> = batch
                .par_iter()
                .map(|&i| {
                    let (input, w) = items[i];
                    let (values, grads) = spn.values_and_gradients(input);
                    (values, grads, w)
                })
                .collect();
            updater.clear();
            let mut batch_weight = 0.0;
            let mut batch_ll = 0.0;
            for (values, grads, w) in &passes {
                let root_val = values[spn.root().index()];
                batch_ll += w * root_val;
                batch_weight += w;
                updater.accumulate(spn, values, grads, *w, em);
            }
            if !batch_ll.is_finite() {
                return Err(LearnError::NanLoss { epoch, batch: batch_no });
            }
            updater.apply(spn, cfg, batch_weight)?;
            epoch_ll += batch_ll;
            epoch_weight += batch_weight;
        }
        trace.rows.push(TraceRow {
            epoch,
            loss: -epoch_ll / epoch_weight,
            accuracy: None,
        });
    }
    Ok(trace)
}

/// Generative training: maximizes the weighted mean log-likelihood of the
/// evidence by projected gradient ascent (or EM, per the config). Labels in
/// the samples are ignored. All sum weights stay at or above the weight
/// floor and renormalized after every step.
pub fn train_generative(
    spn: &mut Spn,
    data: &[LabeledSample],
    cfg: &TrainConfig,
) -> Result<TrainTrace, LearnError> {
    let items: Vec<(&Evidence, f64)> = data.iter().map(|s| (&s.evidence, s.weight)).collect();
    train_generative_impl(spn, &items, None, cfg)
}

/// Generative training of an annotated top layer over frozen bottoms: only
/// the listed sum nodes are updated, and samples carry the bottom networks'
/// cached outputs as log-domain soft evidence. Errors when the annotation
/// is empty.
pub fn train_top_generative(
    spn: &mut Spn,
    data: &[SoftSample],
    trainable: &[NodeId],
    cfg: &TrainConfig,
) -> Result<TrainTrace, LearnError> {
    if trainable.is_empty() {
        return Err(LearnError::MissingLayerAnnotation);
    }
    let items: Vec<(&SoftEvidence, f64)> = data.iter().map(|s| (&s.soft, s.weight)).collect();
    train_generative_impl(spn, &items, Some(trainable), cfg)
}

/// Discriminative training of a per-class network ensemble.
///
/// The class posterior is the softmax of the per-class root log-values
/// (uniform class prior); the loss is weighted cross-entropy. Each class
/// network's weights are updated by projected gradient descent on it.
pub fn train_discriminative(
    class_spns: &mut [Spn],
    data: &[LabeledSample],
    cfg: &TrainConfig,
) -> Result<TrainTrace, LearnError> {
    if data.is_empty() {
        return Err(LearnError::EmptyData);
    }
    let n_classes = class_spns.len();
    for (i, s) in data.iter().enumerate() {
        if s.label >= n_classes {
            return Err(LearnError::BadLabel { sample: i, label: s.label, classes: n_classes });
        }
    }
    let mut updaters: Vec<WeightUpdater> = class_spns
        .iter()
        .map(|s| WeightUpdater::new(s, None))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, &[0xd15cu64]));
    let mut trace = TrainTrace::default();

    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        let mut epoch_weight = 0.0;
        let mut epoch_correct = 0.0;
        for (batch_no, batch) in epoch_batches(data.len(), cfg.batch_size, &mut rng)
            .into_iter()
            .enumerate()
        {
            let passes: Vec<Vec<(Vec<f64>, Vec<f64>)>> = batch
                .par_iter()
                .map(|&i| {
                    class_spns
                        .iter()
                        .map(|spn| spn.values_and_gradients(&data[i].evidence))
                        .collect()
                })
                .collect();

            updaters.iter_mut().for_each(WeightUpdater::clear);
            let mut batch_weight = 0.0;
            let mut batch_loss = 0.0;
            for (&i, per_class) in batch.iter().zip(&passes) {
                let sample = &data[i];
                let logs: Vec<f64> = per_class
                    .iter()
                    .zip(class_spns.iter())
                    .map(|((values, _), spn)| values[spn.root().index()])
                    .collect();
                let lse = crate::util::log_sum_exp(logs.iter().copied());
                batch_loss += sample.weight * (lse - logs[sample.label]);
                batch_weight += sample.weight;
                let argmax = logs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(k, _)| k)
                    .unwrap();
                if argmax == sample.label {
                    epoch_correct += sample.weight;
                }
                for (c, ((values, grads), spn)) in
                    per_class.iter().zip(class_spns.iter()).enumerate()
                {
                    let p_c = (logs[c] - lse).exp();
                    let coeff = (if c == sample.label { 1.0 } else { 0.0 }) - p_c;
                    if coeff != 0.0 {
                        updaters[c].accumulate(spn, values, grads, sample.weight * coeff, false);
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(LearnError::NanLoss { epoch, batch: batch_no });
            }
            for (updater, spn) in updaters.iter().zip(class_spns.iter_mut()) {
                updater.apply(spn, cfg, batch_weight)?;
            }
            epoch_loss += batch_loss;
            epoch_weight += batch_weight;
        }
        trace.rows.push(TraceRow {
            epoch,
            loss: epoch_loss / epoch_weight,
            accuracy: Some(epoch_correct / epoch_weight),
        });
    }
    Ok(trace)
}

/// Analytic gradient of the log-likelihood with respect to every sum
/// weight, aligned with the network's flat weight table (sum nodes in node
/// order): `d log S / d w_(s,c) = exp(grad_s + val_c - val_root)`.
pub fn loglik_weight_gradients(spn: &Spn, ev: &Evidence) -> Result<Vec<f64>, LearnError> {
    let (values, grads) = spn.values_and_gradients(ev);
    let root_val = values[spn.root().index()];
    if root_val == f64::NEG_INFINITY {
        return Err(LearnError::Spn(crate::spn::SpnError::ImpossibleEvidence));
    }
    let mut out = vec![0.0; spn.num_weights()];
    for s in spn.sum_nodes() {
        let g = grads[s.index()];
        if g == f64::NEG_INFINITY {
            continue;
        }
        let range = spn.weight_range(s);
        for (k, c) in spn.children(s).iter().enumerate() {
            let e = g + values[c.index()] - root_val;
            if e != f64::NEG_INFINITY {
                out[range.start + k] = e.exp();
            }
        }
    }
    Ok(out)
}

/// Seeds leaf indicator mixtures from empirical value counts.
///
/// Every sum whose children are all indicators of one variable gets weights
/// proportional to `count(value) + smoothing`, jittered multiplicatively so
/// sibling mixtures stay distinguishable for subsequent training. Samples
/// that do not fully observe a variable do not contribute to its counts.
/// Returns the number of leaf sums initialized.
pub fn init_leaf_weights_from_counts(
    spn: &mut Spn,
    data: &[&Evidence],
    smoothing: f64,
    jitter: f64,
    seed: u64,
) -> Result<usize, LearnError> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x1ea_fu64]));
    // Count observed values per variable.
    let n_vars = spn.vars().len();
    let mut counts: Vec<Vec<f64>> = spn
        .vars()
        .cards()
        .iter()
        .map(|&c| vec![0.0; c as usize])
        .collect();
    for ev in data {
        for vi in 0..n_vars {
            let var = crate::spn::VarId(vi as u32);
            if ev.is_observed(var) {
                let mask = ev.mask(var);
                counts[vi][mask.trailing_zeros() as usize] += 1.0;
            }
        }
    }

    let mut initialized = 0;
    let leaf_sums: Vec<(NodeId, u32)> = spn
        .sum_nodes()
        .filter_map(|s| {
            let kids = spn.children(s);
            let mut var = None;
            for c in kids {
                match spn.kind(*c) {
                    NodeKind::Indicator { var: v, .. } if var.is_none() || var == Some(v) => {
                        var = Some(v);
                    }
                    _ => return None,
                }
            }
            var.map(|v| (s, v.0))
        })
        .collect();
    for (s, var) in leaf_sums {
        let kids: Vec<u16> = spn
            .children(s)
            .iter()
            .map(|c| match spn.kind(*c) {
                NodeKind::Indicator { value, .. } => value,
                _ => unreachable!(),
            })
            .collect();
        let row = &counts[var as usize];
        let mut w: Vec<f64> = kids
            .iter()
            .map(|&v| {
                let base = row[v as usize] + smoothing;
                base * (1.0 + jitter * rng.random_range(-1.0..1.0))
            })
            .collect();
        project_to_simplex(&mut w, 1e-8);
        spn.set_sum_weights(s, &w)?;
        initialized += 1;
    }
    Ok(initialized)
}
