use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use super::{ComplexEmbeddingTable, EmbedError, Result};
use crate::kg::KnowledgeGraph;
use crate::seeded_rng;

/// Concatenates `[re ‖ im]` of node `node` from every table, in table order.
pub fn entity_features(tables: &[&ComplexEmbeddingTable], node: usize) -> Result<Vec<f64>> {
    let Some(first) = tables.first() else {
        return Err(EmbedError::Shape("no embedding tables".into()));
    };
    for t in tables {
        if (t.n_nodes(), t.n_relations(), t.k())
            != (first.n_nodes(), first.n_relations(), first.k())
        {
            return Err(EmbedError::Shape(format!(
                "tables disagree: {}x{} k={} vs {}x{} k={}",
                t.n_nodes(),
                t.n_relations(),
                t.k(),
                first.n_nodes(),
                first.n_relations(),
                first.k()
            )));
        }
    }
    if node >= first.n_nodes() {
        return Err(EmbedError::OutOfRange {
            kind: "node",
            id: node,
            len: first.n_nodes(),
        });
    }
    let mut out = Vec::with_capacity(tables.len() * 2 * first.k());
    for t in tables {
        out.extend_from_slice(t.node_re(node));
        out.extend_from_slice(t.node_im(node));
    }
    Ok(out)
}

/// Standard-normal vector that depends only on `(entity, seed)`.
pub fn random_features(entity: u64, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed, entity);
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Feature vectors keyed by entity IRI, all of one dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    dim: usize,
    rows: BTreeMap<String, Vec<f64>>,
}

impl FeatureTable {
    pub fn new(dim: usize) -> Self {
        FeatureTable {
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn insert(&mut self, iri: impl Into<String>, row: Vec<f64>) -> Result<()> {
        if row.len() != self.dim {
            return Err(EmbedError::Shape(format!(
                "row of length {} in a {}-dim table",
                row.len(),
                self.dim
            )));
        }
        self.rows.insert(iri.into(), row);
        Ok(())
    }

    pub fn get(&self, iri: &str) -> Option<&[f64]> {
        self.rows.get(iri).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.rows.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Embedding features for every entity (not literal) of the graph.
    pub fn from_embeddings(kg: &KnowledgeGraph, tables: &[&ComplexEmbeddingTable]) -> Result<Self> {
        let dim = tables.iter().map(|t| 2 * t.k()).sum();
        let mut out = FeatureTable::new(dim);
        for (node, iri) in kg.entity_iris().enumerate() {
            out.insert(iri, entity_features(tables, node)?)?;
        }
        Ok(out)
    }

    /// Random-projection features for every entity, keyed by entity id.
    pub fn random(kg: &KnowledgeGraph, dim: usize, seed: u64) -> Self {
        let mut out = FeatureTable::new(dim);
        for (id, iri) in kg.entity_iris().enumerate() {
            out.rows
                .insert(iri.to_owned(), random_features(id as u64, dim, seed));
        }
        out
    }
}

/// `entity,f0,...` with full round-trip float precision.
pub fn write_features_csv<W: Write>(features: &FeatureTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["entity".to_owned()];
    header.extend((0..features.dim).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for (iri, row) in features.iter() {
        let mut record = vec![iri.to_owned()];
        record.extend(row.iter().map(f64::to_string));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_csv<R: Read>(reader: R) -> Result<FeatureTable> {
    let mut r = csv::Reader::from_reader(reader);
    let dim = r
        .headers()?
        .len()
        .checked_sub(1)
        .ok_or_else(|| EmbedError::Parse("empty header".into()))?;
    let mut out = FeatureTable::new(dim);
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| EmbedError::Parse(format!("row {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        out.insert(&rec[0], row)?;
    }
    Ok(out)
}

/// One row per node: label, `k` real parts, `k` imaginary parts.
pub fn write_table_csv<W: Write>(
    table: &ComplexEmbeddingTable,
    kg: &KnowledgeGraph,
    writer: W,
) -> Result<()> {
    if table.n_nodes() != kg.node_count() {
        return Err(EmbedError::Shape(format!(
            "table has {} nodes, graph {}",
            table.n_nodes(),
            kg.node_count()
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["node".to_owned()];
    header.extend((0..table.k()).map(|i| format!("re{i}")));
    header.extend((0..table.k()).map(|i| format!("im{i}")));
    w.write_record(&header)?;
    for node in 0..table.n_nodes() {
        let mut record = vec![kg.node_label(node)];
        record.extend(
            table
                .node_re(node)
                .iter()
                .chain(table.node_im(node))
                .map(f64::to_string),
        );
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_loss_csv<W: Write>(loss_curve: &[f64], mut writer: W) -> Result<()> {
    writeln!(writer, "epoch,mean_loss")?;
    for (i, l) in loss_curve.iter().enumerate() {
        writeln!(writer, "{},{l}", i + 1)?;
    }
    Ok(())
}
