//! ComplEx knowledge-graph embeddings.
//!
//! Every entity and every distinct literal is an embedding node (literals
//! are numbered after entities, see [`KnowledgeGraph::node_index`]). All
//! parameters of one table live in a single flat vector laid out as
//! `[node_re | node_im | relation_re | relation_im]`, each block row-major
//! with `k` columns, so the optimizer can treat them uniformly.

mod features;
mod train;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::KnowledgeGraph;

pub use features::{
    entity_features, random_features, read_features_csv, write_features_csv, write_loss_csv,
    write_table_csv, FeatureTable,
};
pub use train::{
    adam_step, corrupt, encode_triples, link_prediction_auc, train, train_inits, AdamState,
    CorruptionMode, TrainedEmbedding, TrainingConfig,
};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{kind} id {id} out of range (0..{len})")]
    OutOfRange {
        kind: &'static str,
        id: usize,
        len: usize,
    },
    #[error("cannot corrupt a triple in a graph with {0} node(s)")]
    CannotCorrupt(usize),
    #[error("non-finite gradient at optimizer step {step}")]
    NonFiniteGradient { step: u64 },
    #[error("training diverged: non-finite loss in epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("malformed feature file: {0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EmbedError>;

/// Which sign the fourth term of the trilinear product carries.
///
/// `AsWritten` sums all four terms, which makes the score symmetric under
/// swapping subject and object. `Hermitian` is `Re(<s, p, conj(o)>)`, the
/// usual ComplEx form, whose fourth term is subtracted; it can model
/// antisymmetric relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreVariant {
    #[default]
    AsWritten,
    Hermitian,
}

impl ScoreVariant {
    fn sign(self) -> f64 {
        match self {
            ScoreVariant::AsWritten => 1.0,
            ScoreVariant::Hermitian => -1.0,
        }
    }
}

/// A triple addressed by embedding node and relation indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EncodedTriple {
    pub subject: usize,
    pub relation: usize,
    pub object: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledTriple {
    pub triple: EncodedTriple,
    /// `+1` for observed triples, `-1` for corruptions.
    pub label: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexEmbeddingTable {
    k: usize,
    n_nodes: usize,
    n_relations: usize,
    params: Vec<f64>,
}

impl ComplexEmbeddingTable {
    pub fn zeros(n_nodes: usize, n_relations: usize, k: usize) -> Self {
        ComplexEmbeddingTable {
            k,
            n_nodes,
            n_relations,
            params: vec![0.0; 2 * k * (n_nodes + n_relations)],
        }
    }

    /// Every parameter drawn independently from `N(0, std²)`.
    pub fn random<R: Rng + ?Sized>(
        n_nodes: usize,
        n_relations: usize,
        k: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let mut t = Self::zeros(n_nodes, n_relations, k);
        let dist = Normal::new(0.0, std).expect("std must be finite and non-negative");
        for p in &mut t.params {
            *p = dist.sample(rng);
        }
        t
    }

    pub fn for_graph<R: Rng + ?Sized>(
        kg: &KnowledgeGraph,
        k: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        Self::random(kg.node_count(), kg.relation_count(), k, std, rng)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn node_re_offset(&self, n: usize) -> usize {
        n * self.k
    }

    fn node_im_offset(&self, n: usize) -> usize {
        (self.n_nodes + n) * self.k
    }

    fn rel_re_offset(&self, r: usize) -> usize {
        (2 * self.n_nodes + r) * self.k
    }

    fn rel_im_offset(&self, r: usize) -> usize {
        (2 * self.n_nodes + self.n_relations + r) * self.k
    }

    pub fn node_re(&self, n: usize) -> &[f64] {
        let o = self.node_re_offset(n);
        &self.params[o..o + self.k]
    }

    pub fn node_im(&self, n: usize) -> &[f64] {
        let o = self.node_im_offset(n);
        &self.params[o..o + self.k]
    }

    pub fn relation_re(&self, r: usize) -> &[f64] {
        let o = self.rel_re_offset(r);
        &self.params[o..o + self.k]
    }

    pub fn relation_im(&self, r: usize) -> &[f64] {
        let o = self.rel_im_offset(r);
        &self.params[o..o + self.k]
    }

    /// Overwrites one node row.
    pub fn set_node(&mut self, n: usize, re: &[f64], im: &[f64]) {
        let (a, b) = (self.node_re_offset(n), self.node_im_offset(n));
        self.params[a..a + self.k].copy_from_slice(re);
        self.params[b..b + self.k].copy_from_slice(im);
    }

    pub fn set_relation(&mut self, r: usize, re: &[f64], im: &[f64]) {
        let (a, b) = (self.rel_re_offset(r), self.rel_im_offset(r));
        self.params[a..a + self.k].copy_from_slice(re);
        self.params[b..b + self.k].copy_from_slice(im);
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn check(&self, t: EncodedTriple) -> Result<()> {
        for (kind, id, len) in [
            ("node", t.subject, self.n_nodes),
            ("relation", t.relation, self.n_relations),
            ("node", t.object, self.n_nodes),
        ] {
            if id >= len {
                return Err(EmbedError::OutOfRange { kind, id, len });
            }
        }
        Ok(())
    }

    /// Trilinear ComplEx score of `(s, p, o)`.
    pub fn score(&self, t: EncodedTriple, variant: ScoreVariant) -> Result<f64> {
        self.check(t)?;
        Ok(self.score_unchecked(t, variant))
    }

    fn score_unchecked(&self, t: EncodedTriple, variant: ScoreVariant) -> f64 {
        let sigma = variant.sign();
        let (sr, si) = (self.node_re(t.subject), self.node_im(t.subject));
        let (pr, pi) = (self.relation_re(t.relation), self.relation_im(t.relation));
        let (or, oi) = (self.node_re(t.object), self.node_im(t.object));
        (0..self.k)
            .map(|d| {
                sr[d] * pr[d] * or[d]
                    + si[d] * pr[d] * oi[d]
                    + sr[d] * pi[d] * oi[d]
                    + sigma * si[d] * pi[d] * or[d]
            })
            .sum()
    }

    /// Adds `weight · ∂score/∂θ` into `grads` (same layout as the params).
    fn accumulate_score_gradient(
        &self,
        t: EncodedTriple,
        variant: ScoreVariant,
        weight: f64,
        grads: &mut [f64],
    ) {
        let sigma = variant.sign();
        let k = self.k;
        let (s_re, s_im) = (
            self.node_re_offset(t.subject),
            self.node_im_offset(t.subject),
        );
        let (p_re, p_im) = (
            self.rel_re_offset(t.relation),
            self.rel_im_offset(t.relation),
        );
        let (o_re, o_im) = (self.node_re_offset(t.object), self.node_im_offset(t.object));
        let p = &self.params;
        for d in 0..k {
            let (a_s, b_s) = (p[s_re + d], p[s_im + d]);
            let (a_r, b_r) = (p[p_re + d], p[p_im + d]);
            let (a_o, b_o) = (p[o_re + d], p[o_im + d]);
            grads[s_re + d] += weight * (a_r * a_o + b_r * b_o);
            grads[s_im + d] += weight * (a_r * b_o + sigma * b_r * a_o);
            grads[p_re + d] += weight * (a_s * a_o + b_s * b_o);
            grads[p_im + d] += weight * (a_s * b_o + sigma * b_s * a_o);
            grads[o_re + d] += weight * (a_s * a_r + sigma * b_s * b_r);
            grads[o_im + d] += weight * (b_s * a_r + a_s * b_r);
        }
    }

    /// Summed logistic loss over `batch`.
    pub fn loss(&self, batch: &[LabeledTriple], variant: ScoreVariant) -> Result<f64> {
        let mut total = 0.0;
        for lt in batch {
            total += logistic_loss(self.score(lt.triple, variant)?, lt.label);
        }
        Ok(total)
    }

    /// Summed logistic loss over `batch`, writing its gradient into `grads`
    /// (overwritten, not accumulated).
    pub fn loss_and_gradient(
        &self,
        batch: &[LabeledTriple],
        variant: ScoreVariant,
        grads: &mut [f64],
    ) -> Result<f64> {
        if grads.len() != self.params.len() {
            return Err(EmbedError::Shape(format!(
                "gradient buffer {} vs {} params",
                grads.len(),
                self.params.len()
            )));
        }
        grads.fill(0.0);
        let mut total = 0.0;
        for lt in batch {
            self.check(lt.triple)?;
            let f = self.score_unchecked(lt.triple, variant);
            let y = f64::from(lt.label);
            total += logistic_loss(f, lt.label);
            // d/df softplus(-y f) = -y · sigmoid(-y f)
            let dldf = -y * sigmoid(-y * f);
            self.accumulate_score_gradient(lt.triple, variant, dldf, grads);
        }
        Ok(total)
    }
}

pub fn score_complex(table: &ComplexEmbeddingTable, s: usize, p: usize, o: usize) -> Result<f64> {
    table.score(
        EncodedTriple {
            subject: s,
            relation: p,
            object: o,
        },
        ScoreVariant::AsWritten,
    )
}

/// `ln(1 + exp(-label · score))`, computed as a stable softplus.
pub fn logistic_loss(score: f64, label: i8) -> f64 {
    softplus(-f64::from(label) * score)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_dim(s: (f64, f64), p: (f64, f64), o: (f64, f64)) -> ComplexEmbeddingTable {
        let mut t = ComplexEmbeddingTable::zeros(2, 1, 1);
        t.set_node(0, &[s.0], &[s.1]);
        t.set_node(1, &[o.0], &[o.1]);
        t.set_relation(0, &[p.0], &[p.1]);
        t
    }

    const SPO: EncodedTriple = EncodedTriple {
        subject: 0,
        relation: 0,
        object: 1,
    };
    const OPS: EncodedTriple = EncodedTriple {
        subject: 1,
        relation: 0,
        object: 0,
    };

    #[test]
    fn zero_table_scores_zero() {
        let t = ComplexEmbeddingTable::zeros(3, 2, 4);
        assert_eq!(score_complex(&t, 0, 1, 2).unwrap(), 0.0);
    }

    #[test]
    fn four_term_example() {
        let t = one_dim((1.0, 2.0), (0.5, -1.0), (-1.0, 1.0));
        // 1·0.5·(-1) + 2·0.5·1 + 1·(-1)·1 + 2·(-1)·(-1)
        let by_hand = -0.5 + 1.0 - 1.0 + 2.0;
        assert_eq!(score_complex(&t, 0, 0, 1).unwrap(), by_hand);
        assert_eq!(by_hand, 1.5);
    }

    #[test]
    fn hermitian_breaks_symmetry() {
        let t = one_dim((1.0, 2.0), (0.5, -1.0), (-1.0, 1.0));
        let forward = t.score(SPO, ScoreVariant::Hermitian).unwrap();
        let backward = t.score(OPS, ScoreVariant::Hermitian).unwrap();
        assert_eq!(forward, -0.5 + 1.0 - 1.0 - 2.0);
        assert_ne!(forward, backward);
        // the four-plus form is symmetric for the same rows
        assert_eq!(
            t.score(SPO, ScoreVariant::AsWritten).unwrap(),
            t.score(OPS, ScoreVariant::AsWritten).unwrap()
        );
    }

    #[test]
    fn real_rows_are_symmetric() {
        let t = one_dim((1.3, 0.0), (-0.7, 0.0), (2.0, 0.0));
        for v in [ScoreVariant::AsWritten, ScoreVariant::Hermitian] {
            assert_eq!(t.score(SPO, v).unwrap(), t.score(OPS, v).unwrap());
        }
    }

    #[test]
    fn out_of_range_ids() {
        let t = ComplexEmbeddingTable::zeros(2, 1, 1);
        assert!(matches!(
            score_complex(&t, 2, 0, 0),
            Err(EmbedError::OutOfRange { kind: "node", .. })
        ));
        assert!(matches!(
            score_complex(&t, 0, 1, 0),
            Err(EmbedError::OutOfRange {
                kind: "relation",
                ..
            })
        ));
    }

    #[test]
    fn logistic_loss_values() {
        assert!((logistic_loss(0.0, 1) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((logistic_loss(2.0, -1) - (1.0 + 2f64.exp()).ln()).abs() < 1e-12);
        assert!((logistic_loss(2.0, -1) - 2.126928).abs() < 1e-6);
        let mut prev = f64::INFINITY;
        for s in [0.0, 1.0, 10.0, 100.0, 1e4] {
            let l = logistic_loss(s, 1);
            assert!(l < prev && l >= 0.0);
            prev = l;
        }
        assert_eq!(logistic_loss(1e4, -1), 1e4);
        assert!(logistic_loss(-1e4, -1).is_finite());
    }
}
