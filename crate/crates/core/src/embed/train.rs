use log::{debug, info};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    ComplexEmbeddingTable, EmbedError, EncodedTriple, LabeledTriple, Result, ScoreVariant,
};
use crate::kg::{KnowledgeGraph, Term};
use crate::seeded_rng;

/// RNG stream offset for training runs, kept apart from per-entity streams.
const INIT_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Complex dimension per run; each node gets `2k` reals.
    pub k: usize,
    pub n_inits: usize,
    pub negatives_per_positive: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub init_std: f64,
    pub variant: ScoreVariant,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            k: 50,
            n_inits: 4,
            negatives_per_positive: 1,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 100,
            batch_size: 256,
            seed: 0,
            init_std: 0.1,
            variant: ScoreVariant::AsWritten,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(EmbedError::Config(m.to_owned()));
        if self.k == 0 {
            return err("k must be positive");
        }
        if self.n_inits == 0 {
            return err("n_inits must be positive");
        }
        if self.negatives_per_positive == 0 {
            return err("negatives_per_positive must be positive");
        }
        if self.batch_size == 0 {
            return err("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return err("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return err("Adam betas must lie in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return err("epsilon must be positive");
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return err("init_std must be finite and non-negative");
        }
        Ok(())
    }

    /// Length of one entity's feature vector across all runs.
    pub fn feature_dim(&self) -> usize {
        2 * self.k * self.n_inits
    }
}

/// Adam first/second moment estimates and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. The gradient is checked before anything
/// is modified, so a rejected step leaves params and state untouched.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    config: &TrainingConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len()
    {
        return Err(EmbedError::Shape(format!(
            "params {}, grads {}, moments {}/{}",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    let step = state.step + 1;
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(EmbedError::NonFiniteGradient { step });
    }
    state.step = step;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powf(step as f64);
    let c2 = 1.0 - b2.powf(step as f64);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionMode {
    Subject,
    Object,
    Both,
}

/// Replaces the chosen position(s) with a node drawn uniformly from the
/// other `n_nodes - 1` nodes. The relation is never changed.
pub fn corrupt<R: Rng + ?Sized>(
    triple: EncodedTriple,
    n_nodes: usize,
    mode: CorruptionMode,
    rng: &mut R,
) -> Result<LabeledTriple> {
    if n_nodes < 2 {
        return Err(EmbedError::CannotCorrupt(n_nodes));
    }
    let mut other = |current: usize| {
        let r = rng.random_range(0..n_nodes - 1);
        if r >= current {
            r + 1
        } else {
            r
        }
    };
    let mut t = triple;
    if matches!(mode, CorruptionMode::Subject | CorruptionMode::Both) {
        t.subject = other(triple.subject);
    }
    if matches!(mode, CorruptionMode::Object | CorruptionMode::Both) {
        t.object = other(triple.object);
    }
    Ok(LabeledTriple {
        triple: t,
        label: -1,
    })
}

/// All KG triples as node/relation indices, in store order.
pub fn encode_triples(kg: &KnowledgeGraph) -> Vec<EncodedTriple> {
    kg.triples()
        .iter()
        .map(|t| EncodedTriple {
            subject: kg.node_index(Term::Entity(t.subject)),
            relation: t.predicate.0 as usize,
            object: kg.node_index(t.object),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainedEmbedding {
    pub init: usize,
    pub table: ComplexEmbeddingTable,
    /// Mean loss per labelled triple, one entry per epoch.
    pub loss_curve: Vec<f64>,
}

/// Trains run number `init` of `config` on every triple of `kg`.
pub fn train(
    kg: &KnowledgeGraph,
    config: &TrainingConfig,
    init: usize,
) -> Result<TrainedEmbedding> {
    config.validate()?;
    if kg.is_empty() {
        return Err(EmbedError::Config("cannot train on an empty graph".into()));
    }
    let positives = encode_triples(kg);
    let mut rng = seeded_rng(config.seed, INIT_STREAM + init as u64);
    let mut table = ComplexEmbeddingTable::for_graph(kg, config.k, config.init_std, &mut rng);
    let n_nodes = table.n_nodes();
    let mut state = AdamState::new(table.params().len());
    let mut grads = vec![0.0; table.params().len()];
    let mut order: Vec<usize> = (0..positives.len()).collect();
    let mut batch = Vec::with_capacity(config.batch_size * (1 + config.negatives_per_positive));
    let mut corruption_count = 0usize;
    let mut loss_curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_examples = 0usize;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            for &i in chunk {
                batch.push(LabeledTriple {
                    triple: positives[i],
                    label: 1,
                });
                for _ in 0..config.negatives_per_positive {
                    let mode = if corruption_count.is_multiple_of(2) {
                        CorruptionMode::Subject
                    } else {
                        CorruptionMode::Object
                    };
                    corruption_count += 1;
                    batch.push(corrupt(positives[i], n_nodes, mode, &mut rng)?);
                }
            }
            epoch_loss += table.loss_and_gradient(&batch, config.variant, &mut grads)?;
            epoch_examples += batch.len();
            adam_step(table.params_mut(), &grads, &mut state, config)?;
        }
        let mean = epoch_loss / epoch_examples as f64;
        if !mean.is_finite() {
            return Err(EmbedError::Divergence { epoch: epoch + 1 });
        }
        debug!("init {init} epoch {} mean loss {mean:.6}", epoch + 1);
        loss_curve.push(mean);
    }
    if let (Some(first), Some(last)) = (loss_curve.first(), loss_curve.last()) {
        info!(
            "init {init}: mean loss {first:.4} -> {last:.4} over {} epochs",
            config.epochs
        );
    }
    Ok(TrainedEmbedding {
        init,
        table,
        loss_curve,
    })
}

/// Independent runs `0..n_inits`, returned in init order.
pub fn train_inits(kg: &KnowledgeGraph, config: &TrainingConfig) -> Result<Vec<TrainedEmbedding>> {
    (0..config.n_inits).map(|i| train(kg, config, i)).collect()
}

/// Probability that a random positive outscores a random negative, ties
/// counted as one half (Mann-Whitney U over the pooled ranks).
pub fn link_prediction_auc(
    table: &ComplexEmbeddingTable,
    positives: &[EncodedTriple],
    negatives: &[EncodedTriple],
    variant: ScoreVariant,
) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(EmbedError::Config(
            "AUC needs at least one positive and one negative".into(),
        ));
    }
    let mut scored = Vec::with_capacity(positives.len() + negatives.len());
    for &t in positives {
        scored.push((table.score(t, variant)?, true));
    }
    for &t in negatives {
        scored.push((table.score(t, variant)?, false));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        while j + 1 < scored.len() && scored[j + 1].0 == scored[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * scored[i..=j].iter().filter(|s| s.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (positives.len() as f64, negatives.len() as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}
