use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Result, SimilarityIndex};
use crate::kg::KnowledgeGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighbourhoodSide {
    Chemical,
    Species,
}

impl NeighbourhoodSide {
    pub fn name(self) -> &'static str {
        match self {
            NeighbourhoodSide::Chemical => "chemical",
            NeighbourhoodSide::Species => "species",
        }
    }
}

/// Objects shared by every neighbourhood member under one predicate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SharedFacts {
    pub predicate: String,
    pub objects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommonFacts {
    pub entity: String,
    /// Requested number of neighbours.
    pub n: usize,
    /// The entity followed by its nearest neighbours, closest first.
    pub members: Vec<String>,
    /// Fewer than `n` neighbours were available.
    pub truncated: bool,
    pub facts: Vec<SharedFacts>,
}

impl CommonFacts {
    /// Number of shared `(predicate, object)` pairs.
    pub fn count(&self) -> usize {
        self.facts.iter().map(|f| f.objects.len()).sum()
    }
}

/// `(predicate, object)` pairs asserted with `entity` as subject.
pub fn fact_set(kg: &KnowledgeGraph, entity: &str) -> Result<BTreeSet<(String, String)>> {
    let id = kg.require_entity(entity)?;
    Ok(kg
        .outgoing(id)
        .map(|t| {
            (
                kg.relation_iri(t.predicate).to_string(),
                kg.term_string(t.object),
            )
        })
        .collect())
}

/// Facts common to `entity` and its `n` nearest neighbours in `index`.
pub fn common_facts(
    kg: &KnowledgeGraph,
    index: &SimilarityIndex,
    entity: &str,
    n: usize,
) -> Result<CommonFacts> {
    let at = index.position(entity)?;
    let neighbours = index.nearest(at, n);
    let truncated = neighbours.len() < n;
    let members: Vec<String> = std::iter::once(entity.to_string())
        .chain(neighbours.iter().map(|&j| index.label(j).to_string()))
        .collect();
    let mut shared = fact_set(kg, entity)?;
    for m in &members[1..] {
        if shared.is_empty() {
            break;
        }
        let other = fact_set(kg, m)?;
        shared.retain(|f| other.contains(f));
    }
    let mut grouped: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (p, o) in shared {
        grouped.entry(p).or_default().push(o);
    }
    let facts = grouped
        .into_iter()
        .map(|(predicate, objects)| SharedFacts { predicate, objects })
        .collect();
    Ok(CommonFacts {
        entity: entity.to_string(),
        n,
        members,
        truncated,
        facts,
    })
}

/// Common facts of one side of a prediction, with that prediction's errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommonFactsReport {
    pub prediction: usize,
    pub side: NeighbourhoodSide,
    pub abs_error: f64,
    /// The prediction's term `1 / (1 + |c - ĉ|)` of categorical accuracy.
    pub categorical_accuracy: f64,
    pub common: CommonFacts,
}

impl CommonFactsReport {
    pub fn new(
        prediction: usize,
        side: NeighbourhoodSide,
        abs_error: f64,
        categorical_error: u8,
        common: CommonFacts,
    ) -> Self {
        CommonFactsReport {
            prediction,
            side,
            abs_error,
            categorical_accuracy: 1.0 / (1.0 + categorical_error as f64),
            common,
        }
    }
}

/// One row per shared predicate, objects joined by `" | "`; a report with no
/// shared facts still gets a row with empty predicate and objects.
pub fn write_common_facts_csv<W: Write>(reports: &[CommonFactsReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "prediction",
        "side",
        "abs_error",
        "categorical_accuracy",
        "n",
        "truncated",
        "entity",
        "predicate",
        "objects",
    ])?;
    for r in reports {
        let head = [
            r.prediction.to_string(),
            r.side.name().to_string(),
            r.abs_error.to_string(),
            r.categorical_accuracy.to_string(),
            r.common.n.to_string(),
            r.common.truncated.to_string(),
            r.common.entity.clone(),
        ];
        if r.common.facts.is_empty() {
            w.write_record(head.iter().map(String::as_str).chain(["", ""]))?;
        }
        for f in &r.common.facts {
            let objects = f.objects.join(" | ");
            w.write_record(
                head.iter()
                    .map(String::as_str)
                    .chain([f.predicate.as_str(), objects.as_str()]),
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::DistanceMetric;
    use crate::kg::KnowledgeGraphBuilder;

    const HABITAT: &str = "http://t/habitat";

    fn setup() -> (KnowledgeGraph, SimilarityIndex) {
        let mut b = KnowledgeGraphBuilder::new();
        for s in ["a", "b", "c"] {
            b.add_iri(&format!("http://t/{s}"), HABITAT, "http://t/freshwater");
        }
        b.add_iri("http://t/a", HABITAT, "http://t/marine");
        b.add_iri("http://t/b", HABITAT, "http://t/marine");
        b.add_iri("http://t/c", "http://t/region", "http://t/north");
        b.add_iri("http://t/d", "http://t/region", "http://t/south");
        let kg = b.build();
        let rows = [("a", 0.0), ("b", 1.0), ("c", 2.5), ("d", 10.0)]
            .iter()
            .map(|&(s, x)| (format!("http://t/{s}"), vec![x]))
            .collect();
        (
            kg,
            SimilarityIndex::new(rows, DistanceMetric::Euclidean).unwrap(),
        )
    }

    #[test]
    fn zero_neighbours_returns_own_facts() {
        let (kg, idx) = setup();
        let cf = common_facts(&kg, &idx, "http://t/a", 0).unwrap();
        assert_eq!(cf.members, vec!["http://t/a"]);
        assert_eq!(cf.count(), 2);
        assert_eq!(cf.facts.len(), 1);
        assert_eq!(
            cf.facts[0].objects,
            vec!["http://t/freshwater", "http://t/marine"]
        );
    }

    #[test]
    fn intersection_shrinks_with_neighbourhood() {
        let (kg, idx) = setup();
        assert_eq!(common_facts(&kg, &idx, "http://t/a", 1).unwrap().count(), 2);
        let three = common_facts(&kg, &idx, "http://t/a", 2).unwrap();
        assert_eq!(
            three.members,
            vec!["http://t/a", "http://t/b", "http://t/c"]
        );
        assert_eq!(
            three.facts,
            vec![SharedFacts {
                predicate: HABITAT.into(),
                objects: vec!["http://t/freshwater".into()]
            }]
        );
        let all = common_facts(&kg, &idx, "http://t/a", 3).unwrap();
        assert_eq!(all.count(), 0);
        let over = common_facts(&kg, &idx, "http://t/a", 5).unwrap();
        assert!(over.truncated && !all.truncated);
    }

    #[test]
    fn csv_rows_per_predicate() {
        let (kg, idx) = setup();
        let reports = vec![
            CommonFactsReport::new(
                0,
                NeighbourhoodSide::Species,
                0.5,
                1,
                common_facts(&kg, &idx, "http://t/a", 1).unwrap(),
            ),
            CommonFactsReport::new(
                1,
                NeighbourhoodSide::Species,
                0.1,
                0,
                common_facts(&kg, &idx, "http://t/d", 1).unwrap(),
            ),
        ];
        assert_eq!(reports[0].categorical_accuracy, 0.5);
        let mut buf = Vec::new();
        write_common_facts_csv(&reports, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("http://t/freshwater | http://t/marine"));
    }
}
