use std::collections::{BTreeSet, VecDeque};

use super::{EntityId, KgError, KnowledgeGraph, RelationId, Result, Term};

/// Parent/child adjacency for the configured hierarchy predicates.
/// An edge `(child, p, parent)` makes `parent` an ancestor of `child`.
#[derive(Debug, Clone)]
pub(super) struct HierarchyIndex {
    parents: Vec<Vec<EntityId>>,
    children: Vec<Vec<EntityId>>,
}

impl HierarchyIndex {
    pub(super) fn build(kg: &KnowledgeGraph, predicates: &[RelationId]) -> Self {
        let n = kg.entity_count();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &p in predicates {
            for t in kg.with_predicate(p) {
                if let Term::Entity(parent) = t.object {
                    parents[t.subject.0 as usize].push(parent);
                    children[parent.0 as usize].push(t.subject);
                }
            }
        }
        for v in parents.iter_mut().chain(children.iter_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        HierarchyIndex { parents, children }
    }
}

impl KnowledgeGraph {
    fn hierarchy_index(&self) -> Result<&HierarchyIndex> {
        self.hierarchy.as_ref().ok_or(KgError::NoHierarchy)
    }

    pub fn parents(&self, e: EntityId) -> Result<&[EntityId]> {
        self.check_entity(e)?;
        Ok(&self.hierarchy_index()?.parents[e.0 as usize])
    }

    pub fn children(&self, e: EntityId) -> Result<&[EntityId]> {
        self.check_entity(e)?;
        Ok(&self.hierarchy_index()?.children[e.0 as usize])
    }

    /// Ancestors within `max_depth` upward edges, each with its shortest
    /// distance. The entity itself is reported at depth 0. Sorted by
    /// `(depth, id)`.
    pub fn hierarchy_ancestors(
        &self,
        e: EntityId,
        max_depth: usize,
    ) -> Result<Vec<(EntityId, usize)>> {
        self.check_entity(e)?;
        let h = self.hierarchy_index()?;
        let mut seen = vec![false; self.entity_count()];
        let mut out = vec![(e, 0)];
        seen[e.0 as usize] = true;
        let mut queue = VecDeque::from([(e, 0usize)]);
        while let Some((node, d)) = queue.pop_front() {
            if d == max_depth {
                continue;
            }
            for &p in &h.parents[node.0 as usize] {
                if !seen[p.0 as usize] {
                    seen[p.0 as usize] = true;
                    out.push((p, d + 1));
                    queue.push_back((p, d + 1));
                }
            }
        }
        out.sort_unstable_by_key(|&(id, d)| (d, id));
        Ok(out)
    }

    /// All entities below `e` in the hierarchy that have no children.
    pub fn leaves_under(&self, e: EntityId) -> Result<BTreeSet<EntityId>> {
        self.check_entity(e)?;
        let h = self.hierarchy_index()?;
        let mut seen = BTreeSet::from([e]);
        let mut stack = vec![e];
        let mut leaves = BTreeSet::new();
        while let Some(node) = stack.pop() {
            let kids = &h.children[node.0 as usize];
            if kids.is_empty() {
                leaves.insert(node);
            }
            for &c in kids {
                if seen.insert(c) {
                    stack.push(c);
                }
            }
        }
        Ok(leaves)
    }

    /// Counts leaves `L != e` with data that sit under some ancestor of `e`
    /// reached by ascending at most `depth` levels.
    pub fn leaves_with_data_within_depth(
        &self,
        e: EntityId,
        depth: usize,
        has_data: impl Fn(EntityId) -> bool,
    ) -> Result<usize> {
        let mut leaves = BTreeSet::new();
        for (anc, _) in self.hierarchy_ancestors(e, depth)? {
            leaves.extend(self.leaves_under(anc)?);
        }
        Ok(leaves
            .into_iter()
            .filter(|&l| l != e && has_data(l))
            .count())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{KnowledgeGraphBuilder, RDFS_SUBCLASS_OF};
    use super::*;

    fn id(kg: &KnowledgeGraph, s: &str) -> EntityId {
        kg.entity_id(&format!("http://t/{s}")).unwrap()
    }

    fn tree(edges: &[(&str, &str)]) -> KnowledgeGraph {
        let mut b = KnowledgeGraphBuilder::new();
        for (c, p) in edges {
            b.add_iri(
                &format!("http://t/{c}"),
                RDFS_SUBCLASS_OF,
                &format!("http://t/{p}"),
            );
        }
        b.build().with_hierarchy(&[RDFS_SUBCLASS_OF])
    }

    #[test]
    fn chain_walk() {
        let kg = tree(&[("leaf", "genus"), ("genus", "family")]);
        let got = kg.hierarchy_ancestors(id(&kg, "leaf"), 2).unwrap();
        assert_eq!(
            got,
            vec![
                (id(&kg, "leaf"), 0),
                (id(&kg, "genus"), 1),
                (id(&kg, "family"), 2)
            ]
        );
        assert_eq!(
            kg.hierarchy_ancestors(id(&kg, "leaf"), 0).unwrap(),
            vec![(id(&kg, "leaf"), 0)]
        );
    }

    #[test]
    fn two_parents_at_depth_one() {
        let kg = tree(&[("deet", "pesticide"), ("deet", "organic")]);
        let got = kg.hierarchy_ancestors(id(&kg, "deet"), 5).unwrap();
        assert_eq!(got.len(), 3);
        assert!(got.contains(&(id(&kg, "pesticide"), 1)));
        assert!(got.contains(&(id(&kg, "organic"), 1)));
    }

    #[test]
    fn sibling_with_data() {
        let kg = tree(&[("a", "g"), ("b", "g"), ("g", "f"), ("c", "h"), ("h", "f")]);
        let n = kg
            .leaves_with_data_within_depth(id(&kg, "a"), 1, |_| true)
            .unwrap();
        assert_eq!(n, 1);
        let all = kg
            .leaves_with_data_within_depth(id(&kg, "a"), 10, |_| true)
            .unwrap();
        assert_eq!(all, 2);
        assert_eq!(
            kg.leaves_with_data_within_depth(id(&kg, "a"), 0, |_| true)
                .unwrap(),
            0
        );
    }

    #[test]
    fn cousins_with_partial_data() {
        // root -> {f1, f2}; f1 -> {g1, g2}; f2 -> {g3}; leaves under g*.
        let kg = tree(&[
            ("f1", "root"),
            ("f2", "root"),
            ("g1", "f1"),
            ("g2", "f1"),
            ("g3", "f2"),
            ("e", "g1"),
            ("s1", "g1"),
            ("c1", "g2"),
            ("c2", "g2"),
            ("c3", "g2"),
            ("c4", "g2"),
            ("x", "g3"),
        ]);
        let with_data = [id(&kg, "c1"), id(&kg, "c3")];
        let n = kg
            .leaves_with_data_within_depth(id(&kg, "e"), 2, |l| with_data.contains(&l))
            .unwrap();
        assert_eq!(n, 2);
    }

    #[test]
    fn errors() {
        let kg = tree(&[("a", "b")]);
        assert!(matches!(
            kg.hierarchy_ancestors(EntityId(99), 1),
            Err(KgError::UnknownEntity(99))
        ));
        let plain = KnowledgeGraphBuilder::new().build();
        assert!(matches!(
            plain.hierarchy_ancestors(EntityId(0), 1),
            Err(KgError::UnknownEntity(0))
        ));
        let mut b = KnowledgeGraphBuilder::new();
        b.add_iri("http://t/a", "http://t/p", "http://t/b");
        let unconfigured = b.build();
        assert!(matches!(
            unconfigured.hierarchy_ancestors(EntityId(0), 1),
            Err(KgError::NoHierarchy)
        ));
    }
}
