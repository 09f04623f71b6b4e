use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ExplainError, ForestConfig, RandomForest, Result, SimilarityIndex};
use crate::predict::{mean_std, SamplePrediction};
use crate::seeded_rng;

pub const MIN_PREDICTIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorModelConfig {
    pub n_runs: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub forest: ForestConfig,
}

impl Default for ErrorModelConfig {
    fn default() -> Self {
        ErrorModelConfig {
            n_runs: 100,
            test_fraction: 0.2,
            seed: 0,
            forest: ForestConfig::default(),
        }
    }
}

/// Forest mapping a pair's distance profile to its expected absolute error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorModel {
    pub forest: RandomForest,
}

impl ErrorModel {
    pub fn predict(
        &self,
        chemicals: &SimilarityIndex,
        species: &SimilarityIndex,
        chemical: &str,
        sp: &str,
    ) -> Result<f64> {
        let x = pair_inputs(chemicals, species, chemical, sp)?;
        if x.len() != self.forest.n_features() {
            return Err(ExplainError::Shape(format!(
                "{} inputs, model expects {}",
                x.len(),
                self.forest.n_features()
            )));
        }
        Ok(self.forest.predict(&x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorModelReport {
    pub n_predictions: usize,
    pub n_runs: usize,
    pub test_fraction: f64,
    /// Mean absolute deviation of the forest on each run's test split.
    pub run_errors: Vec<f64>,
    /// Same, for a model predicting the training-split mean.
    pub baseline_errors: Vec<f64>,
    pub mean_error: f64,
    pub std_error: f64,
    pub baseline_mean_error: f64,
    pub baseline_std_error: f64,
}

fn pair_inputs(
    chemicals: &SimilarityIndex,
    species: &SimilarityIndex,
    chemical: &str,
    sp: &str,
) -> Result<Vec<f64>> {
    let c = chemicals.position(chemical)?;
    let s = species.position(sp)?;
    Ok(chemicals
        .row(c)
        .iter()
        .chain(species.row(s))
        .copied()
        .collect())
}

/// Distances from the sample's chemical to every chemical, then from its
/// species to every species.
pub fn distance_inputs(
    chemicals: &SimilarityIndex,
    species: &SimilarityIndex,
    sample: &SamplePrediction,
) -> Result<Vec<f64>> {
    pair_inputs(chemicals, species, &sample.chemical, &sample.species)
}

fn mean_abs_deviation(truth: &[f64], predicted: impl Iterator<Item = f64>) -> f64 {
    truth
        .iter()
        .zip(predicted)
        .map(|(t, p)| (t - p).abs())
        .sum::<f64>()
        / truth.len() as f64
}

/// Repeated random train/test evaluation of the error forest, followed by a
/// final fit on every prediction.
pub fn fit_error_model(
    chemicals: &SimilarityIndex,
    species: &SimilarityIndex,
    samples: &[SamplePrediction],
    config: &ErrorModelConfig,
) -> Result<(ErrorModel, ErrorModelReport)> {
    let n = samples.len();
    if n < MIN_PREDICTIONS {
        return Err(ExplainError::TooFewPredictions {
            needed: MIN_PREDICTIONS,
            got: n,
        });
    }
    if !(config.test_fraction > 0.0 && config.test_fraction < 1.0) || config.n_runs == 0 {
        return Err(ExplainError::Config(format!(
            "need n_runs ≥ 1 and a test fraction in (0, 1), got {} and {}",
            config.n_runs, config.test_fraction
        )));
    }
    let x = samples
        .iter()
        .map(|s| distance_inputs(chemicals, species, s))
        .collect::<Result<Vec<_>>>()?;
    let y: Vec<f64> = samples.iter().map(|s| s.abs_error).collect();
    let n_test = ((n as f64 * config.test_fraction).round() as usize).clamp(1, n - 1);

    let mut run_errors = Vec::with_capacity(config.n_runs);
    let mut baseline_errors = Vec::with_capacity(config.n_runs);
    for run in 0..config.n_runs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seeded_rng(config.seed, run as u64));
        let (test, train) = order.split_at(n_test);
        let x_train: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let y_test: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        let forest_cfg = ForestConfig {
            seed: config.forest.seed ^ ((run as u64 + 1) << 32),
            ..config.forest
        };
        let forest = RandomForest::fit(&x_train, &y_train, &forest_cfg)?;
        run_errors.push(mean_abs_deviation(
            &y_test,
            test.iter().map(|&i| forest.predict(&x[i])),
        ));
        let mean = y_train.iter().sum::<f64>() / y_train.len() as f64;
        baseline_errors.push(mean_abs_deviation(&y_test, std::iter::repeat(mean)));
    }
    let forest = RandomForest::fit(&x, &y, &config.forest)?;
    let (mean_error, std_error) = mean_std(&run_errors);
    let (baseline_mean_error, baseline_std_error) = mean_std(&baseline_errors);
    let report = ErrorModelReport {
        n_predictions: n,
        n_runs: config.n_runs,
        test_fraction: config.test_fraction,
        run_errors,
        baseline_errors,
        mean_error,
        std_error,
        baseline_mean_error,
        baseline_std_error,
    };
    Ok((ErrorModel { forest }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::DistanceMetric;

    fn index(prefix: &str, n: usize) -> SimilarityIndex {
        let rows = (0..n)
            .map(|i| {
                (
                    format!("{prefix}{i}"),
                    vec![i as f64, (i as f64 * 0.7).sin()],
                )
            })
            .collect();
        SimilarityIndex::new(rows, DistanceMetric::Euclidean).unwrap()
    }

    fn sample(c: usize, s: usize, abs_error: f64) -> SamplePrediction {
        SamplePrediction {
            chemical: format!("c{c}"),
            species: format!("s{s}"),
            target: 0.0,
            mean_prediction: 0.0,
            abs_error,
            true_category: 0,
            predicted_category: 0,
            categorical_error: 0,
        }
    }

    fn small_config() -> ErrorModelConfig {
        ErrorModelConfig {
            n_runs: 5,
            forest: ForestConfig {
                n_trees: 10,
                ..ForestConfig::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn zero_error_predicts_zero() {
        let (chem, sp) = (index("c", 6), index("s", 5));
        let samples: Vec<_> = (0..30).map(|i| sample(i % 6, i % 5, 0.0)).collect();
        let (model, report) = fit_error_model(&chem, &sp, &samples, &small_config()).unwrap();
        assert!(report.mean_error < 1e-6);
        assert!(model.predict(&chem, &sp, "c1", "s2").unwrap().abs() < 1e-6);
    }

    #[test]
    fn reproducible_and_validated() {
        let (chem, sp) = (index("c", 6), index("s", 5));
        let samples: Vec<_> = (0..30)
            .map(|i| sample(i % 6, i % 5, (i % 6) as f64 * 0.3))
            .collect();
        let a = fit_error_model(&chem, &sp, &samples, &small_config()).unwrap();
        let b = fit_error_model(&chem, &sp, &samples, &small_config()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.run_errors.len(), 5);
        assert!(matches!(
            fit_error_model(&chem, &sp, &samples[..9], &small_config()),
            Err(ExplainError::TooFewPredictions { needed: 10, got: 9 })
        ));
        let bad = ErrorModelConfig {
            test_fraction: 1.0,
            ..small_config()
        };
        assert!(fit_error_model(&chem, &sp, &samples, &bad).is_err());
    }
}
