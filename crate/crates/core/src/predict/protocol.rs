//! Repeated grouped cross-validation with nested grid search.

use std::io::{Read, Write};

use log::{info, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::grid::{
    fit_on_distances, grid_search_distances, predict_block, GridSpec, SolverSettings,
};
use super::metrics::{categorical_accuracy, mean_std, r_squared};
use super::svr::{cross_squared_distances, squared_distances};
use super::{PredictError, Result};
use crate::effects::{AggregatedSample, ToxicityCategory};
use crate::embed::FeatureTable;
use crate::grouping::{make_fold_plan, GroupAssignment, DEFAULT_FOLDS};
use crate::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    Embedding,
    RandomProjection,
}

impl FeatureSource {
    pub fn name(self) -> &'static str {
        match self {
            FeatureSource::Embedding => "embedding",
            FeatureSource::RandomProjection => "random",
        }
    }
}

/// Which side of the pair is held out: unseen species groups or unseen
/// chemical groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMode {
    Species,
    Chemical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub n_repeats: usize,
    pub n_folds: usize,
    pub inner_folds: usize,
    pub seed: u64,
    pub max_redraws: usize,
    pub grid: GridSpec,
    pub solver: SolverSettings,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            n_repeats: 100,
            n_folds: DEFAULT_FOLDS,
            inner_folds: 3,
            seed: 0,
            max_redraws: 10,
            grid: GridSpec::default(),
            solver: SolverSettings::default(),
        }
    }
}

/// Per-dimension z-scoring with statistics from training rows only.
/// Constant dimensions are centred but not scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Self {
        let dim = rows.first().map_or(0, |r| r.len());
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| if s > 0.0 { (s / n).sqrt() } else { 1.0 })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// Chemical features followed by species features, one row per sample.
pub fn pair_features(
    samples: &[AggregatedSample],
    features: &FeatureTable,
) -> Result<Vec<Vec<f64>>> {
    samples
        .iter()
        .map(|s| {
            let chem = features
                .get(&s.chemical)
                .ok_or_else(|| PredictError::MissingFeature(s.chemical.clone()))?;
            let spec = features
                .get(&s.species)
                .ok_or_else(|| PredictError::MissingFeature(s.species.clone()))?;
            Ok(chem.iter().chain(spec).copied().collect())
        })
        .collect()
}

/// Group label of every sample under the gap-filling mode.
pub fn sample_groups(
    samples: &[AggregatedSample],
    mode: GapMode,
    species: &GroupAssignment,
    chemicals: &GroupAssignment,
) -> Result<(Vec<usize>, usize)> {
    let (assignment, pick): (&GroupAssignment, fn(&AggregatedSample) -> &str) = match mode {
        GapMode::Species => (species, |s| &s.species),
        GapMode::Chemical => (chemicals, |s| &s.chemical),
    };
    let labels = samples
        .iter()
        .map(|s| {
            assignment
                .label_of(pick(s))
                .ok_or_else(|| PredictError::MissingGroup(pick(s).to_owned()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((labels, assignment.n_groups()))
}

#[derive(Debug, Clone)]
pub struct ProtocolInput<'a> {
    pub samples: &'a [AggregatedSample],
    pub features: &'a [Vec<f64>],
    pub groups: &'a [usize],
    pub n_groups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldRecord {
    pub repeat: usize,
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub c: f64,
    pub gamma: f64,
    pub inner_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub chemical: String,
    pub species: String,
    pub target: f64,
    pub mean_prediction: f64,
    pub abs_error: f64,
    pub true_category: u8,
    pub predicted_category: u8,
    pub categorical_error: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub source: FeatureSource,
    pub mode: GapMode,
    pub n_samples: usize,
    pub n_repeats: usize,
    pub n_folds: usize,
    pub r2_per_repeat: Vec<f64>,
    pub ca_per_repeat: Vec<f64>,
    pub r2_mean: f64,
    pub r2_std: f64,
    pub ca_mean: f64,
    pub ca_std: f64,
    pub folds: Vec<FoldRecord>,
    /// Fold index per group label, one plan per repeat.
    pub fold_plans: Vec<Vec<usize>>,
    #[serde(skip)]
    pub samples: Vec<SamplePrediction>,
}

fn category(target: f64) -> Result<u8> {
    if !target.is_finite() {
        return Err(PredictError::NonFinite);
    }
    Ok(ToxicityCategory::from_target(target)?.ordinal())
}

pub fn run_protocol(
    input: &ProtocolInput<'_>,
    source: FeatureSource,
    mode: GapMode,
    config: &ProtocolConfig,
) -> Result<EvaluationReport> {
    let n = input.samples.len();
    if input.features.len() != n || input.groups.len() != n {
        return Err(PredictError::Shape(format!(
            "{n} samples, {} feature rows, {} group labels",
            input.features.len(),
            input.groups.len()
        )));
    }
    if n < config.n_folds {
        return Err(PredictError::TooFewSamples(n));
    }
    if config.n_repeats == 0 || config.inner_folds < 2 {
        return Err(PredictError::Config(
            "need n_repeats >= 1 and inner_folds >= 2".into(),
        ));
    }
    if input.features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(PredictError::NonFinite);
    }
    let targets: Vec<f64> = input.samples.iter().map(|s| s.target).collect();
    let true_cats = targets
        .iter()
        .map(|&t| category(t))
        .collect::<Result<Vec<u8>>>()?;

    let mut r2_per_repeat = Vec::with_capacity(config.n_repeats);
    let mut ca_per_repeat = Vec::with_capacity(config.n_repeats);
    let mut folds = Vec::new();
    let mut fold_plans = Vec::with_capacity(config.n_repeats);
    let mut prediction_sum = vec![0.0; n];

    for repeat in 0..config.n_repeats {
        let mut rng = seeded_rng(config.seed, repeat as u64);
        let mut attempt = 0;
        let plan = loop {
            let plan = make_fold_plan(input.groups, input.n_groups, config.n_folds, &mut rng)?;
            if plan.fold_sizes().iter().all(|&s| s > 0) {
                break plan;
            }
            attempt += 1;
            warn!(
                "repeat {repeat}: fold plan with an empty fold, redrawing ({attempt}/{})",
                config.max_redraws
            );
            if attempt > config.max_redraws {
                return Err(PredictError::EmptyFolds {
                    repeat,
                    attempts: attempt,
                });
            }
        };
        let mut oof: Vec<Option<f64>> = vec![None; n];
        for fold in 0..config.n_folds {
            let train = plan.train_indices(fold);
            let test = plan.test_indices(fold);
            let train_rows: Vec<&[f64]> = train
                .iter()
                .map(|&i| input.features[i].as_slice())
                .collect();
            let scaler = Standardizer::fit(&train_rows);
            let z_train: Vec<Vec<f64>> = train_rows.iter().map(|r| scaler.transform(r)).collect();
            let z_test: Vec<Vec<f64>> = test
                .iter()
                .map(|&i| scaler.transform(&input.features[i]))
                .collect();
            let z_train_refs: Vec<&[f64]> = z_train.iter().map(Vec::as_slice).collect();
            let z_test_refs: Vec<&[f64]> = z_test.iter().map(Vec::as_slice).collect();
            let dist = squared_distances(&z_train_refs);
            let y_train: Vec<f64> = train.iter().map(|&i| targets[i]).collect();

            let m = train.len();
            let mut positions: Vec<usize> = (0..m).collect();
            positions.shuffle(&mut rng);
            let mut inner_fold = vec![0; m];
            for (rank, &p) in positions.iter().enumerate() {
                inner_fold[p] = rank % config.inner_folds;
            }
            let best = grid_search_distances(
                &dist,
                m,
                &y_train,
                &inner_fold,
                &config.grid,
                &config.solver,
            )?;
            let all: Vec<usize> = (0..m).collect();
            let sol =
                fit_on_distances(&dist, m, &all, &y_train, best.c, best.gamma, &config.solver)?;
            let cross: Vec<f64> = cross_squared_distances(&z_test_refs, &z_train_refs)
                .into_iter()
                .map(|d| (-best.gamma * d).exp())
                .collect();
            for (&i, p) in test.iter().zip(predict_block(&cross, &sol.coef, sol.bias)) {
                debug_assert!(oof[i].is_none());
                oof[i] = Some(p);
            }
            folds.push(FoldRecord {
                repeat,
                fold,
                n_train: m,
                n_test: test.len(),
                c: best.c,
                gamma: best.gamma,
                inner_r2: best.score,
            });
        }
        let oof: Vec<f64> = oof
            .into_iter()
            .map(|p| p.expect("every sample is tested exactly once"))
            .collect();
        let pred_cats = oof
            .iter()
            .map(|&p| category(p))
            .collect::<Result<Vec<u8>>>()?;
        let r2 = r_squared(&targets, &oof)?;
        let ca = categorical_accuracy(&true_cats, &pred_cats)?;
        info!(
            "{} / {:?}: repeat {} R2 {r2:.4} CA {ca:.4}",
            source.name(),
            mode,
            repeat + 1
        );
        for (s, p) in prediction_sum.iter_mut().zip(&oof) {
            *s += p;
        }
        r2_per_repeat.push(r2);
        ca_per_repeat.push(ca);
        fold_plans.push(plan.group_fold);
    }

    let mut samples = Vec::with_capacity(n);
    for (i, s) in input.samples.iter().enumerate() {
        let mean_prediction = prediction_sum[i] / config.n_repeats as f64;
        let predicted_category = category(mean_prediction)?;
        samples.push(SamplePrediction {
            chemical: s.chemical.clone(),
            species: s.species.clone(),
            target: s.target,
            mean_prediction,
            abs_error: (s.target - mean_prediction).abs(),
            true_category: true_cats[i],
            predicted_category,
            categorical_error: true_cats[i].abs_diff(predicted_category),
        });
    }
    let (r2_mean, r2_std) = mean_std(&r2_per_repeat);
    let (ca_mean, ca_std) = mean_std(&ca_per_repeat);
    Ok(EvaluationReport {
        source,
        mode,
        n_samples: n,
        n_repeats: config.n_repeats,
        n_folds: config.n_folds,
        r2_per_repeat,
        ca_per_repeat,
        r2_mean,
        r2_std,
        ca_mean,
        ca_std,
        folds,
        fold_plans,
        samples,
    })
}

pub fn write_predictions_csv<W: Write>(samples: &[SamplePrediction], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "chemical",
        "species",
        "target",
        "mean_prediction",
        "abs_error",
        "true_category",
        "predicted_category",
        "categorical_error",
    ])?;
    for s in samples {
        w.write_record([
            s.chemical.clone(),
            s.species.clone(),
            s.target.to_string(),
            s.mean_prediction.to_string(),
            s.abs_error.to_string(),
            s.true_category.to_string(),
            s.predicted_category.to_string(),
            s.categorical_error.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the output of [`write_predictions_csv`].
pub fn read_predictions_csv<R: Read>(reader: R) -> Result<Vec<SamplePrediction>> {
    let mut r = csv::Reader::from_reader(reader);
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<SamplePrediction>, _>>()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(chem: &str, species: &str, target: f64) -> AggregatedSample {
        AggregatedSample {
            chemical: chem.into(),
            species: species.into(),
            target,
            n_replicates: 3,
            replicate_std: 0.0,
            median_mg_per_l: 10f64.powf(-target),
        }
    }

    #[test]
    fn standardizer_uses_training_rows_only() {
        let a = [1.0, 5.0];
        let b = [3.0, 5.0];
        let s = Standardizer::fit(&[&a, &b]);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        assert_eq!(s.transform(&[4.0, 7.0]), vec![2.0, 2.0]);
    }

    #[test]
    fn small_protocol_is_reproducible_and_grouped() {
        let samples: Vec<AggregatedSample> = (0..30)
            .map(|i| {
                sample(
                    &format!("c{}", i % 6),
                    &format!("s{}", i % 5),
                    (i % 6) as f64 * 0.3 - 1.0,
                )
            })
            .collect();
        let features: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i % 6) as f64, (i % 5) as f64])
            .collect();
        let groups: Vec<usize> = (0..30).map(|i| i % 5).collect();
        let input = ProtocolInput {
            samples: &samples,
            features: &features,
            groups: &groups,
            n_groups: 5,
        };
        let config = ProtocolConfig {
            n_repeats: 2,
            grid: GridSpec {
                c_exponents: (-1, 1),
                gamma_exponents: (-1, 1),
            },
            ..ProtocolConfig::default()
        };
        let a = run_protocol(&input, FeatureSource::Embedding, GapMode::Species, &config).unwrap();
        let b = run_protocol(&input, FeatureSource::Embedding, GapMode::Species, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.r2_per_repeat.len(), 2);
        assert_eq!(a.folds.len(), 10);
        assert_eq!(
            a.folds
                .iter()
                .filter(|f| f.repeat == 0)
                .map(|f| f.n_test)
                .sum::<usize>(),
            30
        );
        // target depends only on the chemical, which every species group sees
        assert!(a.r2_mean > 0.9, "{}", a.r2_mean);
        let mut buf = Vec::new();
        write_predictions_csv(&a.samples, &mut buf).unwrap();
        assert_eq!(read_predictions_csv(buf.as_slice()).unwrap(), a.samples);
        for plan in &a.fold_plans {
            let mut sorted = plan.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn missing_feature_named() {
        let samples = vec![sample("c", "s", 0.0)];
        let mut table = FeatureTable::new(1);
        table.insert("c", vec![1.0]).unwrap();
        match pair_features(&samples, &table) {
            Err(PredictError::MissingFeature(iri)) => assert_eq!(iri, "s"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
