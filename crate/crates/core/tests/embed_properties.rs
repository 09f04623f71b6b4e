use ecokg_core::embed::{
    corrupt, encode_triples, link_prediction_auc, random_features, score_complex, train,
    ComplexEmbeddingTable, CorruptionMode, EncodedTriple, LabeledTriple, ScoreVariant,
    TrainingConfig,
};
use ecokg_core::seeded_rng;
use ecokg_core::synth::{generate, SynthConfig};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn t(s: usize, r: usize, o: usize) -> EncodedTriple {
    EncodedTriple {
        subject: s,
        relation: r,
        object: o,
    }
}

/// Score written out term by term from the component arrays.
fn oracle_score(table: &ComplexEmbeddingTable, x: EncodedTriple, variant: ScoreVariant) -> f64 {
    let (sr, si) = (table.node_re(x.subject), table.node_im(x.subject));
    let (pr, pi) = (table.relation_re(x.relation), table.relation_im(x.relation));
    let (or, oi) = (table.node_re(x.object), table.node_im(x.object));
    let mut total = 0.0;
    for d in 0..table.k() {
        total += match variant {
            ScoreVariant::AsWritten => {
                sr[d] * pr[d] * or[d]
                    + si[d] * pr[d] * oi[d]
                    + sr[d] * pi[d] * oi[d]
                    + si[d] * pi[d] * or[d]
            }
            ScoreVariant::Hermitian => {
                // Re((s p) conj(o)) with explicit complex products
                let (spr, spi) = (sr[d] * pr[d] - si[d] * pi[d], sr[d] * pi[d] + si[d] * pr[d]);
                spr * or[d] + spi * oi[d]
            }
        };
    }
    total
}

fn oracle_loss(
    table: &ComplexEmbeddingTable,
    batch: &[LabeledTriple],
    variant: ScoreVariant,
) -> f64 {
    batch
        .iter()
        .map(|b| (1.0 + (-f64::from(b.label) * oracle_score(table, b.triple, variant)).exp()).ln())
        .sum()
}

fn small_batch() -> Vec<LabeledTriple> {
    let pos = [t(0, 0, 1), t(1, 0, 2), t(2, 1, 3), t(3, 1, 4), t(4, 0, 0)];
    let mut rng = seeded_rng(3, 0);
    let mut batch: Vec<LabeledTriple> = pos
        .iter()
        .map(|&x| LabeledTriple {
            triple: x,
            label: 1,
        })
        .collect();
    for &x in &pos {
        batch.push(corrupt(x, 5, CorruptionMode::Both, &mut rng).unwrap());
    }
    batch
}

#[test]
fn gradient_matches_central_differences() {
    for variant in [ScoreVariant::AsWritten, ScoreVariant::Hermitian] {
        let mut rng = seeded_rng(11, 0);
        let mut table = ComplexEmbeddingTable::random(5, 2, 4, 0.5, &mut rng);
        let batch = small_batch();
        let mut grads = vec![0.0; table.params().len()];
        let loss = table
            .loss_and_gradient(&batch, variant, &mut grads)
            .unwrap();
        assert!((loss - oracle_loss(&table, &batch, variant)).abs() < 1e-10);
        let h = 1e-5;
        for (i, &analytic) in grads.iter().enumerate() {
            let orig = table.params()[i];
            table.params_mut()[i] = orig + h;
            let up = oracle_loss(&table, &batch, variant);
            table.params_mut()[i] = orig - h;
            let down = oracle_loss(&table, &batch, variant);
            table.params_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(
                rel < 1e-4 || (analytic - numeric).abs() < 1e-9,
                "{variant:?} param {i}: {analytic} vs {numeric}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn score_matches_term_by_term_oracle(seed in any::<u64>(), s in 0..4usize, r in 0..2usize, o in 0..4usize) {
        let mut rng = seeded_rng(seed, 0);
        let table = ComplexEmbeddingTable::random(4, 2, 3, 1.0, &mut rng);
        for variant in [ScoreVariant::AsWritten, ScoreVariant::Hermitian] {
            let got = table.score(t(s, r, o), variant).unwrap();
            prop_assert!((got - oracle_score(&table, t(s, r, o), variant)).abs() < 1e-12);
        }
        prop_assert_eq!(score_complex(&table, s, r, o).unwrap(), table.score(t(s, r, o), ScoreVariant::AsWritten).unwrap());
    }

    #[test]
    fn score_is_linear_in_each_row(seed in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let mut rng = seeded_rng(seed, 0);
        let base = ComplexEmbeddingTable::random(4, 1, 3, 1.0, &mut rng);
        let x = t(0, 0, 1);
        // node 2 and node 3 are the two rows combined into node 0
        let with = |re: Vec<f64>, im: Vec<f64>| {
            let mut tab = base.clone();
            tab.set_node(0, &re, &im);
            tab
        };
        let mix = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| a * p + b * q).collect::<Vec<_>>();
        let combined = with(mix(base.node_re(2), base.node_re(3)), mix(base.node_im(2), base.node_im(3)));
        let only2 = with(base.node_re(2).to_vec(), base.node_im(2).to_vec());
        let only3 = with(base.node_re(3).to_vec(), base.node_im(3).to_vec());
        for variant in [ScoreVariant::AsWritten, ScoreVariant::Hermitian] {
            let lhs = combined.score(x, variant).unwrap();
            let rhs = a * only2.score(x, variant).unwrap() + b * only3.score(x, variant).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn as_written_score_is_symmetric(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed, 0);
        let table = ComplexEmbeddingTable::random(3, 1, 5, 1.0, &mut rng);
        let f = table.score(t(0, 0, 2), ScoreVariant::AsWritten).unwrap();
        let g = table.score(t(2, 0, 0), ScoreVariant::AsWritten).unwrap();
        prop_assert!((f - g).abs() < 1e-12);
    }

    #[test]
    fn corruption_keeps_relation_and_changes_entity(seed in any::<u64>(), s in 0..7usize, o in 0..7usize) {
        let mut rng = seeded_rng(seed, 0);
        for mode in [CorruptionMode::Subject, CorruptionMode::Object, CorruptionMode::Both] {
            let c = corrupt(t(s, 1, o), 7, mode, &mut rng).unwrap();
            prop_assert_eq!(c.label, -1);
            prop_assert_eq!(c.triple.relation, 1);
            prop_assert!(c.triple.subject < 7 && c.triple.object < 7);
            match mode {
                CorruptionMode::Subject => { prop_assert_ne!(c.triple.subject, s); prop_assert_eq!(c.triple.object, o); }
                CorruptionMode::Object => { prop_assert_ne!(c.triple.object, o); prop_assert_eq!(c.triple.subject, s); }
                CorruptionMode::Both => { prop_assert_ne!(c.triple.subject, s); prop_assert_ne!(c.triple.object, o); }
            }
        }
    }
}

#[test]
fn hermitian_score_is_asymmetric_for_generic_imaginary_parts() {
    let mut table = ComplexEmbeddingTable::zeros(2, 1, 1);
    table.set_node(0, &[1.0], &[0.5]);
    table.set_node(1, &[0.3], &[-1.0]);
    table.set_relation(0, &[0.2], &[0.7]);
    let f = table.score(t(0, 0, 1), ScoreVariant::Hermitian).unwrap();
    let g = table.score(t(1, 0, 0), ScoreVariant::Hermitian).unwrap();
    assert!((f - g).abs() > 0.1, "{f} vs {g}");
}

#[test]
fn corrupted_entities_are_uniform() {
    let n = 10;
    let draws = 10_000;
    let mut rng = seeded_rng(5, 0);
    let mut counts = vec![0usize; n];
    for _ in 0..draws {
        counts[corrupt(t(4, 0, 4), n, CorruptionMode::Object, &mut rng)
            .unwrap()
            .triple
            .object] += 1;
    }
    assert_eq!(counts[4], 0);
    let expected = draws as f64 / (n - 1) as f64;
    let chi2: f64 = counts
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != 4)
        .map(|(_, &c)| (c as f64 - expected).powi(2) / expected)
        .sum();
    let critical = ChiSquared::new((n - 2) as f64).unwrap().inverse_cdf(0.999);
    assert!(chi2 < critical, "chi-square {chi2} above {critical}");
}

#[test]
fn random_features_are_standard_normal_and_stable() {
    let v = random_features(17, 20_000, 9);
    assert_eq!(v, random_features(17, 20_000, 9));
    assert_ne!(v[..10], random_features(18, 10, 9)[..]);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
    // five standard errors
    assert!(mean.abs() < 5.0 / (v.len() as f64).sqrt(), "mean {mean}");
    assert!((var - 1.0).abs() < 0.05, "variance {var}");
}

fn small_kg() -> ecokg_core::kg::KnowledgeGraph {
    let cfg = SynthConfig {
        n_species: 20,
        n_chemicals: 10,
        ..SynthConfig::default()
    };
    generate(&cfg).unwrap().kg
}

#[test]
fn training_reduces_loss_ranks_positives_and_is_reproducible() {
    let kg = small_kg();
    let cfg = TrainingConfig {
        k: 8,
        epochs: 10,
        learning_rate: 0.01,
        seed: 4,
        ..TrainingConfig::default()
    };
    let a = train(&kg, &cfg, 0).unwrap();
    let b = train(&kg, &cfg, 0).unwrap();
    assert_eq!(a.table, b.table);
    assert_eq!(a.loss_curve, b.loss_curve);
    assert!(a.loss_curve[9] < a.loss_curve[0], "{:?}", a.loss_curve);
    let other = train(&kg, &cfg, 1).unwrap();
    assert_ne!(a.table, other.table);

    let positives = encode_triples(&kg);
    let mut rng = seeded_rng(99, 0);
    let negatives: Vec<EncodedTriple> = positives
        .iter()
        .map(|&x| {
            corrupt(x, a.table.n_nodes(), CorruptionMode::Object, &mut rng)
                .unwrap()
                .triple
        })
        .collect();
    let auc = link_prediction_auc(&a.table, &positives, &negatives, cfg.variant).unwrap();
    assert!(auc > 0.5, "AUC {auc}");
}

#[test]
fn auc_matches_pairwise_count() {
    let mut rng = seeded_rng(2, 0);
    let table = ComplexEmbeddingTable::random(6, 2, 1, 1.0, &mut rng);
    let pos = vec![t(0, 0, 1), t(1, 1, 2), t(2, 0, 3), t(0, 0, 1)];
    let neg = vec![t(3, 1, 4), t(4, 0, 5), t(5, 1, 0), t(0, 0, 1)];
    let score = |x: EncodedTriple| table.score(x, ScoreVariant::AsWritten).unwrap();
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            wins += match score(p).partial_cmp(&score(n)).unwrap() {
                std::cmp::Ordering::Greater => 1.0,
                std::cmp::Ordering::Equal => 0.5,
                std::cmp::Ordering::Less => 0.0,
            };
        }
    }
    let expected = wins / (pos.len() * neg.len()) as f64;
    let got = link_prediction_auc(&table, &pos, &neg, ScoreVariant::AsWritten).unwrap();
    assert!((got - expected).abs() < 1e-12);
}
