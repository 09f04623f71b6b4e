use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ExplainError, Result};
use crate::embed::FeatureTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`; a zero vector is treated as orthogonal to everything.
    Cosine,
}

impl DistanceMetric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            DistanceMetric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            DistanceMetric::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
                }
            }
        }
    }
}

/// Cached pairwise distances between a fixed set of entities.
#[derive(Debug, Clone)]
pub struct SimilarityIndex {
    labels: Vec<String>,
    positions: HashMap<String, usize>,
    dist: Vec<f64>,
    metric: DistanceMetric,
}

impl SimilarityIndex {
    /// Builds the index over `rows`, keeping their order.
    pub fn new(rows: Vec<(String, Vec<f64>)>, metric: DistanceMetric) -> Result<Self> {
        let n = rows.len();
        if let Some((label, _)) = rows.iter().find(|(_, r)| r.iter().any(|v| !v.is_finite())) {
            return Err(ExplainError::NonFinite(label.clone()));
        }
        if let Some((label, r)) = rows.iter().find(|(_, r)| r.len() != rows[0].1.len()) {
            return Err(ExplainError::Shape(format!(
                "<{label}> has {} features, expected {}",
                r.len(),
                rows[0].1.len()
            )));
        }
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = metric.distance(&rows[i].1, &rows[j].1);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        let mut positions = HashMap::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for (i, (label, _)) in rows.into_iter().enumerate() {
            if positions.insert(label.clone(), i).is_some() {
                return Err(ExplainError::Shape(format!("duplicate entity <{label}>")));
            }
            labels.push(label);
        }
        Ok(SimilarityIndex {
            labels,
            positions,
            dist,
            metric,
        })
    }

    /// Index over the feature rows of `entities`.
    pub fn from_features<S: AsRef<str>>(
        features: &FeatureTable,
        entities: &[S],
        metric: DistanceMetric,
    ) -> Result<Self> {
        let rows = entities
            .iter()
            .map(|e| {
                let e = e.as_ref();
                features
                    .get(e)
                    .map(|r| (e.to_string(), r.to_vec()))
                    .ok_or_else(|| ExplainError::UnknownEntity(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows, metric)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn position(&self, entity: &str) -> Result<usize> {
        self.positions
            .get(entity)
            .copied()
            .ok_or_else(|| ExplainError::UnknownEntity(entity.to_string()))
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.len() + j]
    }

    /// Distances from entity `i` to every indexed entity, in index order.
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.dist[i * n..(i + 1) * n]
    }

    /// Up to `n` nearest other entities, closest first, ties by index.
    pub fn nearest(&self, i: usize, n: usize) -> Vec<usize> {
        let row = self.row(i);
        let mut others: Vec<usize> = (0..self.len()).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        others.truncate(n);
        others
    }

    /// Number of other entities strictly closer than `radius`.
    pub fn count_within(&self, i: usize, radius: f64) -> usize {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|&(j, &d)| j != i && d < radius)
            .count()
    }

    /// Distance at quantile `q` of all off-diagonal pairs (nearest-rank).
    pub fn distance_quantile(&self, q: f64) -> Option<f64> {
        let n = self.len();
        let mut d: Vec<f64> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| self.distance(i, j))
            .collect();
        if d.is_empty() || !(0.0..=1.0).contains(&q) {
            return None;
        }
        d.sort_by(f64::total_cmp);
        let rank = ((q * d.len() as f64).ceil() as usize).clamp(1, d.len());
        Some(d[rank - 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> SimilarityIndex {
        let rows = points
            .iter()
            .enumerate()
            .map(|(i, &p)| (format!("e{i}"), vec![p]))
            .collect();
        SimilarityIndex::new(rows, DistanceMetric::Euclidean).unwrap()
    }

    #[test]
    fn threshold_count() {
        let idx = line(&[0.0, 0.5, 1.5, 2.0]);
        assert_eq!(idx.count_within(0, 1.0), 1);
        assert_eq!(idx.count_within(0, f64::INFINITY), 3);
        assert_eq!(idx.count_within(0, 0.5), 0);
    }

    #[test]
    fn symmetric_with_zero_diagonal() {
        let rows: Vec<_> = (0..6)
            .map(|i| (format!("e{i}"), vec![i as f64, (i * i) as f64 * 0.3, -1.0]))
            .collect();
        for metric in [DistanceMetric::Euclidean, DistanceMetric::Cosine] {
            let idx = SimilarityIndex::new(rows.clone(), metric).unwrap();
            for i in 0..6 {
                assert_eq!(idx.distance(i, i), 0.0);
                for j in 0..6 {
                    assert_eq!(idx.distance(i, j), idx.distance(j, i));
                    assert!(idx.distance(i, j) >= 0.0);
                }
            }
        }
    }

    #[test]
    fn nearest_breaks_ties_by_index() {
        let idx = line(&[0.0, 1.0, -1.0, 2.0]);
        assert_eq!(idx.nearest(0, 2), vec![1, 2]);
        assert_eq!(idx.nearest(0, 10), vec![1, 2, 3]);
    }

    #[test]
    fn cosine_ignores_scale() {
        let rows = vec![
            ("a".into(), vec![1.0, 0.0]),
            ("b".into(), vec![5.0, 0.0]),
            ("c".into(), vec![0.0, 2.0]),
        ];
        let idx = SimilarityIndex::new(rows, DistanceMetric::Cosine).unwrap();
        assert!(idx.distance(0, 1).abs() < 1e-12);
        assert!((idx.distance(0, 2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_duplicates_and_non_finite() {
        let dup = vec![("a".into(), vec![1.0]), ("a".into(), vec![2.0])];
        assert!(SimilarityIndex::new(dup, DistanceMetric::Euclidean).is_err());
        let nan = vec![("a".into(), vec![f64::NAN])];
        assert!(matches!(
            SimilarityIndex::new(nan, DistanceMetric::Euclidean),
            Err(ExplainError::NonFinite(_))
        ));
    }

    #[test]
    fn quantile_of_pairwise_distances() {
        let idx = line(&[0.0, 1.0, 3.0]);
        // pairwise distances 1, 2, 3
        assert_eq!(idx.distance_quantile(0.0), Some(1.0));
        assert_eq!(idx.distance_quantile(0.5), Some(2.0));
        assert_eq!(idx.distance_quantile(1.0), Some(3.0));
    }
}
