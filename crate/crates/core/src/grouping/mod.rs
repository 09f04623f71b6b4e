//! Species divisions, chemical fingerprint clusters and group-respecting
//! fold plans.

mod cluster;
mod fingerprint;
mod folds;

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::kg::{EntityId, KgError, KnowledgeGraph};

pub use cluster::{average_linkage, cluster_chemicals, tanimoto_matrix, Dendrogram, Merge};
pub use fingerprint::{
    read_fingerprints_tsv, write_fingerprints_tsv, Fingerprint, DEFAULT_FINGERPRINT_LENGTH,
};
pub use folds::{make_fold_plan, GroupedFoldPlan};

pub const DEFAULT_CHEMICAL_CLUSTERS: usize = 5;
pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Error)]
pub enum GroupingError {
    #[error("species without exactly one division root: {}", .0.join(", "))]
    AmbiguousDivision(Vec<String>),
    #[error("need at least {needed} items, found {found}")]
    TooFewItems { needed: usize, found: usize },
    #[error("{0} is assigned to more than one group")]
    DuplicateMember(String),
    #[error("fingerprint: {0}")]
    Fingerprint(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GroupingError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    SpeciesDivision,
    ChemicalCluster,
}

/// Maps entity IRIs to a group label index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupAssignment {
    pub kind: GroupKind,
    pub labels: Vec<String>,
    members: BTreeMap<String, usize>,
}

impl GroupAssignment {
    pub fn new(kind: GroupKind, labels: Vec<String>) -> Self {
        GroupAssignment {
            kind,
            labels,
            members: BTreeMap::new(),
        }
    }

    pub fn assign(&mut self, iri: &str, label: usize) -> Result<()> {
        assert!(label < self.labels.len(), "label index out of range");
        if self.members.insert(iri.to_owned(), label).is_some() {
            return Err(GroupingError::DuplicateMember(iri.to_owned()));
        }
        Ok(())
    }

    pub fn label_of(&self, iri: &str) -> Option<usize> {
        self.members.get(iri).copied()
    }

    pub fn label_name(&self, label: usize) -> &str {
        &self.labels[label]
    }

    pub fn n_groups(&self) -> usize {
        self.labels.len()
    }

    pub fn members(&self) -> impl Iterator<Item = (&str, usize)> {
        self.members.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn members_per_label(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for &l in self.members.values() {
            counts[l] += 1;
        }
        counts
    }

    /// `entity,label` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "entity,label")?;
        for (iri, label) in self.members() {
            writeln!(out, "{},{}", csv_field(iri), csv_field(&self.labels[label]))?;
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Labels each species with the single division root above it in the
/// hierarchy. Species reaching zero or several roots are reported together.
pub fn species_divisions(
    kg: &KnowledgeGraph,
    species: &[EntityId],
    roots: &[EntityId],
) -> Result<GroupAssignment> {
    let mut roots = roots.to_vec();
    roots.sort_unstable();
    roots.dedup();
    let labels = roots
        .iter()
        .map(|&r| kg.entity_iri(r).map(str::to_owned))
        .collect::<std::result::Result<_, _>>()?;
    let mut out = GroupAssignment::new(GroupKind::SpeciesDivision, labels);
    let mut offenders = Vec::new();
    for &s in species {
        let found: Vec<usize> = kg
            .hierarchy_ancestors(s, usize::MAX)?
            .into_iter()
            .filter_map(|(a, _)| roots.binary_search(&a).ok())
            .collect();
        let iri = kg.entity_iri(s)?;
        match found.as_slice() {
            [one] => out.assign(iri, *one)?,
            _ => offenders.push(iri.to_owned()),
        }
    }
    if offenders.is_empty() {
        Ok(out)
    } else {
        Err(GroupingError::AmbiguousDivision(offenders))
    }
}
