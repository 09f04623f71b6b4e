use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;
use statrs::function::beta::beta_reg;

use super::{common_facts, ExplainError, NeighbourhoodSide, Result, SimilarityIndex};
use crate::kg::KnowledgeGraph;
use crate::predict::SamplePrediction;

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(ExplainError::Shape(format!(
            "{} vs {} values",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(ExplainError::TooFewPredictions {
            needed: 2,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(ExplainError::UndefinedCorrelation(
            "one variable is constant".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub r: f64,
    pub t: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Pearson `r` with the two-sided p-value of `t = r √((n-2)/(1-r²))` under a
/// Student t distribution with `n - 2` degrees of freedom.
pub fn pearson_test(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() < 3 {
        return Err(ExplainError::TooFewPredictions {
            needed: 3,
            got: x.len(),
        });
    }
    let r = pearson(x, y)?;
    let df = (x.len() - 2) as f64;
    let (t, p_value) = if r.abs() == 1.0 {
        (r.signum() * f64::INFINITY, 0.0)
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        (t, beta_reg(df / 2.0, 0.5, df / (df + t * t)))
    };
    Ok(Correlation {
        r,
        t,
        p_value,
        n: x.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub side: NeighbourhoodSide,
    pub n: usize,
    pub n_predictions: usize,
    /// `None` when the correlation is undefined, see `note`.
    pub correlation: Option<Correlation>,
    pub note: Option<String>,
}

/// Correlates, for each `n` and each side, the number of facts an entity
/// shares with its `n` nearest neighbours against the absolute error.
pub fn fact_error_correlation(
    kg: &KnowledgeGraph,
    chemicals: &SimilarityIndex,
    species: &SimilarityIndex,
    samples: &[SamplePrediction],
    n_values: &[usize],
) -> Result<Vec<CorrelationRow>> {
    if samples.len() < 3 {
        return Err(ExplainError::TooFewPredictions {
            needed: 3,
            got: samples.len(),
        });
    }
    let errors: Vec<f64> = samples.iter().map(|s| s.abs_error).collect();
    let mut rows = Vec::with_capacity(2 * n_values.len());
    for side in [NeighbourhoodSide::Chemical, NeighbourhoodSide::Species] {
        let index = match side {
            NeighbourhoodSide::Chemical => chemicals,
            NeighbourhoodSide::Species => species,
        };
        for &n in n_values {
            let mut cache: HashMap<&str, usize> = HashMap::new();
            let mut counts = Vec::with_capacity(samples.len());
            for s in samples {
                let entity = match side {
                    NeighbourhoodSide::Chemical => s.chemical.as_str(),
                    NeighbourhoodSide::Species => s.species.as_str(),
                };
                let count = match cache.get(entity) {
                    Some(&c) => c,
                    None => {
                        let c = common_facts(kg, index, entity, n)?.count();
                        cache.insert(entity, c);
                        c
                    }
                };
                counts.push(count as f64);
            }
            let (correlation, note) = match pearson_test(&counts, &errors) {
                Ok(c) => (Some(c), None),
                Err(ExplainError::UndefinedCorrelation(msg)) => (None, Some(msg)),
                Err(e) => return Err(e),
            };
            rows.push(CorrelationRow {
                side,
                n,
                n_predictions: samples.len(),
                correlation,
                note,
            });
        }
    }
    Ok(rows)
}

/// Columns `side,n,n_predictions,r,p_value,note`; undefined cells are empty.
pub fn write_correlation_csv<W: Write>(rows: &[CorrelationRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["side", "n", "n_predictions", "r", "p_value", "note"])?;
    for row in rows {
        let (r, p) = row.correlation.map_or((String::new(), String::new()), |c| {
            (c.r.to_string(), c.p_value.to_string())
        });
        w.write_record([
            row.side.name().to_string(),
            row.n.to_string(),
            row.n_predictions.to_string(),
            r,
            p,
            row.note.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
