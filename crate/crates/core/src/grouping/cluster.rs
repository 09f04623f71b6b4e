//! Average-linkage agglomerative clustering on Tanimoto distances.

use super::fingerprint::Fingerprint;
use super::{GroupAssignment, GroupKind, GroupingError, Result};

/// One agglomeration step. `left < right` are the slots (lowest member
/// index of each cluster) that were joined; the merged cluster keeps `left`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    n_points: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Flat labels for `k` clusters. Labels are numbered by the smallest
    /// point index in each cluster, so label 0 always contains point 0.
    pub fn cut(&self, k: usize) -> Vec<usize> {
        assert!(
            k >= 1 && k <= self.n_points.max(1),
            "cannot cut {} points into {k} clusters",
            self.n_points
        );
        let mut parent: Vec<usize> = (0..self.n_points).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for m in &self.merges[..self.n_points - k] {
            let (a, b) = (find(&mut parent, m.left), find(&mut parent, m.right));
            let (lo, hi) = (a.min(b), a.max(b));
            parent[hi] = lo;
        }
        let mut label_of_root = vec![usize::MAX; self.n_points];
        let mut next = 0;
        (0..self.n_points)
            .map(|i| {
                let r = find(&mut parent, i);
                if label_of_root[r] == usize::MAX {
                    label_of_root[r] = next;
                    next += 1;
                }
                label_of_root[r]
            })
            .collect()
    }
}

/// Full UPGMA dendrogram over a symmetric distance matrix (row-major `n×n`).
/// Ties go to the lexicographically smallest slot pair.
pub fn average_linkage(n: usize, distances: &[f64]) -> Dendrogram {
    assert_eq!(distances.len(), n * n);
    let mut d = distances.to_vec();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if active[j] && d[i * n + j] < best.0 {
                    best = (d[i * n + j], i, j);
                }
            }
        }
        let (dist, i, j) = best;
        let (si, sj) = (size[i] as f64, size[j] as f64);
        for k in 0..n {
            if active[k] && k != i && k != j {
                let v = (si * d[i * n + k] + sj * d[j * n + k]) / (si + sj);
                d[i * n + k] = v;
                d[k * n + i] = v;
            }
        }
        active[j] = false;
        size[i] += size[j];
        merges.push(Merge {
            left: i,
            right: j,
            distance: dist,
            size: size[i],
        });
    }
    Dendrogram {
        n_points: n,
        merges,
    }
}

pub fn tanimoto_matrix(prints: &[&Fingerprint]) -> Vec<f64> {
    let n = prints.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = prints[i].tanimoto_distance(prints[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Clusters chemicals into `k` groups. Labels are named `cluster_<i>` and
/// numbered by first appearance in input order. With fully tied distances
/// the split is forced: the last `k - 1` chemicals end up as singletons.
pub fn cluster_chemicals(
    fingerprints: &[(String, Fingerprint)],
    k: usize,
) -> Result<(GroupAssignment, Dendrogram)> {
    if k == 0 || fingerprints.len() < k {
        return Err(GroupingError::TooFewItems {
            needed: k.max(1),
            found: fingerprints.len(),
        });
    }
    let len = fingerprints[0].1.len();
    if let Some((iri, fp)) = fingerprints.iter().find(|(_, fp)| fp.len() != len) {
        return Err(GroupingError::Fingerprint(format!(
            "{iri}: length {} differs from {len}",
            fp.len()
        )));
    }
    let prints: Vec<&Fingerprint> = fingerprints.iter().map(|(_, fp)| fp).collect();
    let dendrogram = average_linkage(prints.len(), &tanimoto_matrix(&prints));
    let labels = dendrogram.cut(k);
    let mut assignment = GroupAssignment::new(
        GroupKind::ChemicalCluster,
        (0..k).map(|i| format!("cluster_{i}")).collect(),
    );
    for ((iri, _), label) in fingerprints.iter().zip(labels) {
        assignment.assign(iri, label)?;
    }
    Ok((assignment, dendrogram))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_print(block: usize, variant: usize) -> Fingerprint {
        let mut fp = Fingerprint::zeros(100);
        for b in block * 20..block * 20 + 15 {
            fp.set(b, true);
        }
        fp.set(block * 20 + 15 + variant % 5, true);
        fp
    }

    #[test]
    fn identical_groups_become_clusters() {
        let prints: Vec<(String, Fingerprint)> = (0..15)
            .map(|i| (format!("c{i}"), block_print(i % 5, 0)))
            .collect();
        let (a, _) = cluster_chemicals(&prints, 5).unwrap();
        for i in 0..15 {
            assert_eq!(
                a.label_of(&format!("c{i}")),
                a.label_of(&format!("c{}", i % 5))
            );
        }
        assert_eq!(a.n_groups(), 5);
        assert_eq!(a.members_per_label(), vec![3; 5]);
    }

    #[test]
    fn fully_tied_input_forces_stable_split() {
        let prints: Vec<(String, Fingerprint)> = (0..8)
            .map(|i| (format!("c{i}"), block_print(0, 0)))
            .collect();
        let (a, _) = cluster_chemicals(&prints, 5).unwrap();
        let labels: Vec<usize> = (0..8)
            .map(|i| a.label_of(&format!("c{i}")).unwrap())
            .collect();
        assert_eq!(labels, vec![0, 0, 0, 0, 1, 2, 3, 4]);
    }

    #[test]
    fn too_few_chemicals() {
        let prints: Vec<(String, Fingerprint)> = (0..3)
            .map(|i| (format!("c{i}"), block_print(i, 0)))
            .collect();
        assert!(matches!(
            cluster_chemicals(&prints, 5),
            Err(GroupingError::TooFewItems { .. })
        ));
    }

    #[test]
    fn upgma_on_line() {
        // points at 0, 1, 5 on a line
        let x = [0.0f64, 1.0, 5.0];
        let d: Vec<f64> = (0..9).map(|k| (x[k / 3] - x[k % 3]).abs()).collect();
        let den = average_linkage(3, &d);
        assert_eq!(
            den.merges()[0],
            Merge {
                left: 0,
                right: 1,
                distance: 1.0,
                size: 2
            }
        );
        assert_eq!(
            den.merges()[1],
            Merge {
                left: 0,
                right: 2,
                distance: 4.5,
                size: 3
            }
        );
        assert_eq!(den.cut(2), vec![0, 0, 1]);
        assert_eq!(den.cut(3), vec![0, 1, 2]);
        assert_eq!(den.cut(1), vec![0, 0, 0]);
    }
}
