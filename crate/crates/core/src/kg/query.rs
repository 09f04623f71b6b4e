//! Conjunctive basic-graph-pattern matching.

use std::collections::BTreeMap;

use super::{EntityId, KgError, KnowledgeGraph, Literal, RelationId, Result, Term, Triple};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternTerm {
    Var(String),
    Iri(String),
    Literal(Literal),
}

impl PatternTerm {
    pub fn var(name: &str) -> Self {
        PatternTerm::Var(name.to_owned())
    }

    pub fn iri(iri: &str) -> Self {
        PatternTerm::Iri(iri.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

impl TriplePattern {
    pub fn new(subject: PatternTerm, predicate: PatternTerm, object: PatternTerm) -> Self {
        TriplePattern {
            subject,
            predicate,
            object,
        }
    }

    fn vars(&self) -> impl Iterator<Item = &str> {
        [&self.subject, &self.predicate, &self.object]
            .into_iter()
            .filter_map(|t| match t {
                PatternTerm::Var(v) => Some(v.as_str()),
                _ => None,
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternQuery {
    pub patterns: Vec<TriplePattern>,
    pub projection: Vec<String>,
}

impl PatternQuery {
    pub fn new(patterns: Vec<TriplePattern>, projection: &[&str]) -> Self {
        PatternQuery {
            patterns,
            projection: projection.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.patterns.is_empty() {
            return Err(KgError::Query("query has no patterns".into()));
        }
        for v in &self.projection {
            if !self.patterns.iter().any(|p| p.vars().any(|x| x == v)) {
                return Err(KgError::Query(format!(
                    "projected variable ?{v} appears in no pattern"
                )));
            }
        }
        Ok(())
    }
}

/// A value bound to a variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Node(Term),
    Relation(RelationId),
}

pub type Binding = BTreeMap<String, Value>;

/// Resolved pattern slot: a constant id, a variable, or a constant the graph
/// does not contain (which can never match).
#[derive(Clone, Copy)]
enum Slot<'q> {
    Const(Value),
    Var(&'q str),
    Absent,
}

impl<'q> Slot<'q> {
    fn resolve(kg: &KnowledgeGraph, term: &'q PatternTerm, predicate: bool) -> Self {
        match term {
            PatternTerm::Var(v) => Slot::Var(v),
            PatternTerm::Iri(iri) if predicate => kg
                .relation_id(iri)
                .map_or(Slot::Absent, |r| Slot::Const(Value::Relation(r))),
            PatternTerm::Iri(iri) => kg
                .entity_id(iri)
                .map_or(Slot::Absent, |e| Slot::Const(Value::Node(Term::Entity(e)))),
            PatternTerm::Literal(lit) => kg
                .literal_id(lit)
                .map_or(Slot::Absent, |l| Slot::Const(Value::Node(Term::Literal(l)))),
        }
    }

    fn bound(self, binding: &Binding) -> Option<Value> {
        match self {
            Slot::Const(v) => Some(v),
            Slot::Var(name) => binding.get(name).copied(),
            Slot::Absent => None,
        }
    }
}

impl KnowledgeGraph {
    /// All variable bindings satisfying every pattern, projected onto the
    /// query's projection. Solutions are produced in a deterministic order
    /// for a fixed store; duplicates after projection are kept.
    pub fn match_pattern(&self, q: &PatternQuery) -> Result<Vec<Binding>> {
        q.validate()?;
        let resolved: Vec<[Slot; 3]> = q
            .patterns
            .iter()
            .map(|p| {
                [
                    Slot::resolve(self, &p.subject, false),
                    Slot::resolve(self, &p.predicate, true),
                    Slot::resolve(self, &p.object, false),
                ]
            })
            .collect();
        if resolved.iter().flatten().any(|s| matches!(s, Slot::Absent)) {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        self.join(&resolved, 0, &mut Binding::new(), &mut out);
        Ok(out
            .into_iter()
            .map(|b| {
                b.into_iter()
                    .filter(|(k, _)| q.projection.contains(k))
                    .collect()
            })
            .collect())
    }

    fn join(
        &self,
        patterns: &[[Slot; 3]],
        depth: usize,
        binding: &mut Binding,
        out: &mut Vec<Binding>,
    ) {
        let Some(&[s, p, o]) = patterns.get(depth) else {
            out.push(binding.clone());
            return;
        };
        let bs = s.bound(binding);
        let bp = p.bound(binding);
        let bo = o.bound(binding);

        let candidates: Box<dyn Iterator<Item = &Triple>> = match (bs, bo, bp) {
            (Some(Value::Node(Term::Entity(e))), _, _) => Box::new(self.outgoing(e)),
            (Some(_), _, _) => return,
            (None, Some(Value::Node(Term::Entity(e))), _) => Box::new(self.incoming(e)),
            (None, _, Some(Value::Relation(r))) => Box::new(self.with_predicate(r)),
            (None, _, Some(_)) => return,
            _ => Box::new(self.triples().iter()),
        };

        for t in candidates {
            let values = [
                Value::Node(Term::Entity(t.subject)),
                Value::Relation(t.predicate),
                Value::Node(t.object),
            ];
            let mut added: Vec<&str> = Vec::with_capacity(3);
            let mut ok = true;
            for (slot, value) in [s, p, o].into_iter().zip(values) {
                match slot {
                    Slot::Const(c) => ok = c == value,
                    Slot::Var(name) => match binding.get(name) {
                        Some(&existing) => ok = existing == value,
                        None => {
                            binding.insert(name.to_owned(), value);
                            added.push(name);
                        }
                    },
                    Slot::Absent => ok = false,
                }
                if !ok {
                    break;
                }
            }
            if ok {
                self.join(patterns, depth + 1, binding, out);
            }
            for name in added {
                binding.remove(name);
            }
        }
    }

    /// Convenience: IRI of an entity-valued binding.
    pub fn binding_iri(&self, value: Value) -> Option<&str> {
        match value {
            Value::Node(Term::Entity(EntityId(i))) => self.entity_iri(EntityId(i)).ok(),
            Value::Relation(r) => Some(self.relation_iri(r)),
            Value::Node(Term::Literal(_)) => None,
        }
    }
}
