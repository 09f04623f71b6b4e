//! In-memory RDF-style triple store.
//!
//! IRIs are interned into dense integer ids (entities and predicates use
//! separate dictionaries, literals a third one). Dictionaries are assigned
//! in lexicographic order at build time, so the same set of triples always
//! produces the same ids regardless of input order. The store is immutable
//! once built.

mod hierarchy;
mod ntriples;
mod query;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use ntriples::{load_ntriples, write_ntriples};
pub use query::{Binding, PatternQuery, PatternTerm, TriplePattern, Value};

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const RDFS_SUBCLASS_OF: &str = "http://www.w3.org/2000/01/rdf-schema#subClassOf";
pub const RDFS_LABEL: &str = "http://www.w3.org/2000/01/rdf-schema#label";
pub const XSD_BOOLEAN: &str = "http://www.w3.org/2001/XMLSchema#boolean";
pub const XSD_DOUBLE: &str = "http://www.w3.org/2001/XMLSchema#double";

#[derive(Debug, Error)]
pub enum KgError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("query error: {0}")]
    Query(String),
    #[error("unknown entity id {0}")]
    UnknownEntity(u32),
    #[error("unknown entity <{0}>")]
    UnknownIri(String),
    #[error("no hierarchy predicate is configured")]
    NoHierarchy,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KgError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct RelationId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct LiteralId(pub u32);

/// A literal compares by its exact lexical form plus datatype IRI.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub lexical: String,
    pub datatype: Option<String>,
}

impl Literal {
    pub fn plain(lexical: impl Into<String>) -> Self {
        Literal {
            lexical: lexical.into(),
            datatype: None,
        }
    }

    pub fn typed(lexical: impl Into<String>, datatype: impl Into<String>) -> Self {
        Literal {
            lexical: lexical.into(),
            datatype: Some(datatype.into()),
        }
    }
}

impl fmt::Display for Literal {
    /// N-Triples form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("\"")?;
        for c in self.lexical.chars() {
            match c {
                '"' => f.write_str("\\\"")?,
                '\\' => f.write_str("\\\\")?,
                '\n' => f.write_str("\\n")?,
                '\r' => f.write_str("\\r")?,
                '\t' => f.write_str("\\t")?,
                c => write!(f, "{c}")?,
            }
        }
        f.write_str("\"")?;
        if let Some(dt) = &self.datatype {
            write!(f, "^^<{dt}>")?;
        }
        Ok(())
    }
}

/// Object position of a triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Entity(EntityId),
    Literal(LiteralId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: EntityId,
    pub predicate: RelationId,
    pub object: Term,
}

/// Object of a triple before interning.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RawObject {
    Iri(String),
    Literal(Literal),
}

#[derive(Debug, Clone, Default)]
struct Dictionary<T: Clone + Eq + std::hash::Hash> {
    values: Vec<T>,
    index: HashMap<T, u32>,
}

impl<T: Clone + Eq + std::hash::Hash + Ord> Dictionary<T> {
    fn from_sorted(values: BTreeSet<T>) -> Self {
        let values: Vec<T> = values.into_iter().collect();
        let index = values
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i as u32))
            .collect();
        Dictionary { values, index }
    }

    fn get(&self, v: &T) -> Option<u32> {
        self.index.get(v).copied()
    }

    fn len(&self) -> usize {
        self.values.len()
    }
}

/// Collects raw triples; [`KnowledgeGraphBuilder::build`] interns and deduplicates them.
#[derive(Debug, Default, Clone)]
pub struct KnowledgeGraphBuilder {
    raw: BTreeSet<(String, String, RawObject)>,
}

impl KnowledgeGraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_iri(&mut self, s: &str, p: &str, o: &str) -> &mut Self {
        self.raw
            .insert((s.to_owned(), p.to_owned(), RawObject::Iri(o.to_owned())));
        self
    }

    pub fn add_literal(&mut self, s: &str, p: &str, o: Literal) -> &mut Self {
        self.raw
            .insert((s.to_owned(), p.to_owned(), RawObject::Literal(o)));
        self
    }

    pub fn add(&mut self, s: String, p: String, o: RawObject) -> &mut Self {
        self.raw.insert((s, p, o));
        self
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn build(self) -> KnowledgeGraph {
        let mut entity_iris = BTreeSet::new();
        let mut relation_iris = BTreeSet::new();
        let mut literals = BTreeSet::new();
        for (s, p, o) in &self.raw {
            entity_iris.insert(s.clone());
            relation_iris.insert(p.clone());
            match o {
                RawObject::Iri(iri) => {
                    entity_iris.insert(iri.clone());
                }
                RawObject::Literal(lit) => {
                    literals.insert(lit.clone());
                }
            }
        }
        let entities = Dictionary::from_sorted(entity_iris);
        let relations = Dictionary::from_sorted(relation_iris);
        let literals = Dictionary::from_sorted(literals);

        let mut triples: Vec<Triple> = self
            .raw
            .iter()
            .map(|(s, p, o)| Triple {
                subject: EntityId(entities.get(s).expect("interned")),
                predicate: RelationId(relations.get(p).expect("interned")),
                object: match o {
                    RawObject::Iri(iri) => {
                        Term::Entity(EntityId(entities.get(iri).expect("interned")))
                    }
                    RawObject::Literal(lit) => {
                        Term::Literal(LiteralId(literals.get(lit).expect("interned")))
                    }
                },
            })
            .collect();
        triples.sort_unstable();
        triples.dedup();
        KnowledgeGraph::from_parts(entities, relations, literals, triples)
    }
}

/// Triple counts, serialized as the store statistics dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KgStats {
    pub entities: usize,
    pub relations: usize,
    pub literals: usize,
    pub triples: usize,
}

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Dictionary<String>,
    relations: Dictionary<String>,
    literals: Dictionary<Literal>,
    triples: Vec<Triple>,
    by_subject: Vec<Vec<u32>>,
    by_object: Vec<Vec<u32>>,
    by_predicate: Vec<Vec<u32>>,
    hierarchy: Option<hierarchy::HierarchyIndex>,
}

impl KnowledgeGraph {
    fn from_parts(
        entities: Dictionary<String>,
        relations: Dictionary<String>,
        literals: Dictionary<Literal>,
        triples: Vec<Triple>,
    ) -> Self {
        let mut by_subject = vec![Vec::new(); entities.len()];
        let mut by_object = vec![Vec::new(); entities.len()];
        let mut by_predicate = vec![Vec::new(); relations.len()];
        for (i, t) in triples.iter().enumerate() {
            by_subject[t.subject.0 as usize].push(i as u32);
            by_predicate[t.predicate.0 as usize].push(i as u32);
            if let Term::Entity(o) = t.object {
                by_object[o.0 as usize].push(i as u32);
            }
        }
        KnowledgeGraph {
            entities,
            relations,
            literals,
            triples,
            by_subject,
            by_object,
            by_predicate,
            hierarchy: None,
        }
    }

    /// Configures the predicates whose edges point from a node to its parent.
    /// Predicates absent from the graph are accepted and contribute no edges.
    pub fn with_hierarchy<S: AsRef<str>>(mut self, predicates: &[S]) -> Self {
        let ids: Vec<RelationId> = predicates
            .iter()
            .filter_map(|p| self.relation_id(p.as_ref()))
            .collect();
        self.hierarchy = Some(hierarchy::HierarchyIndex::build(&self, &ids));
        self
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triples.binary_search(t).is_ok()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn literal_count(&self) -> usize {
        self.literals.len()
    }

    pub fn stats(&self) -> KgStats {
        KgStats {
            entities: self.entity_count(),
            relations: self.relation_count(),
            literals: self.literal_count(),
            triples: self.len(),
        }
    }

    pub fn entity_id(&self, iri: &str) -> Option<EntityId> {
        self.entities.index.get(iri).map(|&i| EntityId(i))
    }

    pub fn relation_id(&self, iri: &str) -> Option<RelationId> {
        self.relations.index.get(iri).map(|&i| RelationId(i))
    }

    pub fn literal_id(&self, lit: &Literal) -> Option<LiteralId> {
        self.literals.get(lit).map(LiteralId)
    }

    pub fn entity_iri(&self, id: EntityId) -> Result<&str> {
        self.entities
            .values
            .get(id.0 as usize)
            .map(String::as_str)
            .ok_or(KgError::UnknownEntity(id.0))
    }

    pub fn relation_iri(&self, id: RelationId) -> &str {
        &self.relations.values[id.0 as usize]
    }

    pub fn literal(&self, id: LiteralId) -> &Literal {
        &self.literals.values[id.0 as usize]
    }

    pub fn entity_iris(&self) -> impl Iterator<Item = &str> {
        self.entities.values.iter().map(String::as_str)
    }

    pub fn require_entity(&self, iri: &str) -> Result<EntityId> {
        self.entity_id(iri)
            .ok_or_else(|| KgError::UnknownIri(iri.to_owned()))
    }

    pub(crate) fn check_entity(&self, id: EntityId) -> Result<()> {
        if (id.0 as usize) < self.entity_count() {
            Ok(())
        } else {
            Err(KgError::UnknownEntity(id.0))
        }
    }

    /// N-Triples rendering of an object term.
    pub fn term_string(&self, term: Term) -> String {
        match term {
            Term::Entity(e) => self.entities.values[e.0 as usize].clone(),
            Term::Literal(l) => self.literal(l).to_string(),
        }
    }

    /// Triples with the given subject, in store order.
    pub fn outgoing(&self, subject: EntityId) -> impl Iterator<Item = &Triple> {
        self.by_subject
            .get(subject.0 as usize)
            .into_iter()
            .flatten()
            .map(move |&i| &self.triples[i as usize])
    }

    /// Triples whose object is the given entity.
    pub fn incoming(&self, object: EntityId) -> impl Iterator<Item = &Triple> {
        self.by_object
            .get(object.0 as usize)
            .into_iter()
            .flatten()
            .map(move |&i| &self.triples[i as usize])
    }

    pub fn with_predicate(&self, predicate: RelationId) -> impl Iterator<Item = &Triple> {
        self.by_predicate
            .get(predicate.0 as usize)
            .into_iter()
            .flatten()
            .map(move |&i| &self.triples[i as usize])
    }

    /// Subjects `s` with `(s, rdf:type, class)` in the graph.
    pub fn instances_of(&self, class_iri: &str) -> Vec<EntityId> {
        let (Some(ty), Some(class)) = (self.relation_id(RDF_TYPE), self.entity_id(class_iri))
        else {
            return Vec::new();
        };
        let mut out: Vec<EntityId> = self
            .incoming(class)
            .filter(|t| t.predicate == ty)
            .map(|t| t.subject)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Number of embedding nodes: every entity plus every distinct literal.
    pub fn node_count(&self) -> usize {
        self.entities.len() + self.literals.len()
    }

    /// Dense node index used for embeddings; literals follow entities.
    pub fn node_index(&self, term: Term) -> usize {
        match term {
            Term::Entity(e) => e.0 as usize,
            Term::Literal(l) => self.entities.len() + l.0 as usize,
        }
    }

    /// Label of an embedding node: IRI for entities, N-Triples form for literals.
    pub fn node_label(&self, node: usize) -> String {
        if node < self.entities.len() {
            self.entities.values[node].clone()
        } else {
            self.literals.values[node - self.entities.len()].to_string()
        }
    }
}
