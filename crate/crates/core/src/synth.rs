//! Seeded generator for small TERA-like graphs with a known toxicity function.
//!
//! The graph has three parts: a species taxonomy (division roots, internal
//! ranks, leaf species) with habitat/region/type facts, a chemical class
//! hierarchy with substructure and boolean literal facts derived from
//! planted fingerprint blocks, and the effect records themselves.
//!
//! The latent log-toxicity of a pair depends only on the species division
//! and the chemical cluster:
//!
//! ```text
//! f(d, c) = intercept + s_div·a[d] + s_clu·b[c] + s_int/√r · Σ_r U[h(d), r]·V[c, r]
//! ```
//!
//! where `h(d)` is the habitat class of division `d`. Habitat classes are
//! shared between divisions and are visible in the graph through habitat
//! facts, which is what lets embedding features transfer to unseen
//! divisions. Replicate concentrations are `10^-(f + noise)` mg/L.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::effects::{ConcentrationUnit, Effect, EffectRecord, Endpoint};
use crate::grouping::{Fingerprint, DEFAULT_FINGERPRINT_LENGTH};
use crate::kg::{
    KnowledgeGraph, KnowledgeGraphBuilder, Literal, RDFS_LABEL, RDFS_SUBCLASS_OF, RDF_TYPE,
    XSD_BOOLEAN,
};

pub const NS: &str = "http://example.org/tera/";
pub const HIERARCHY_PREDICATE: &str = RDFS_SUBCLASS_OF;
pub const DIVISION_CLASS: &str = "http://example.org/tera/SpeciesDivision";
pub const HABITAT: &str = "http://example.org/tera/habitat";
pub const PRESENT: &str = "http://example.org/tera/present";
pub const HAS_SUBSTRUCTURE: &str = "http://example.org/tera/hasSubstructure";
pub const COMPOUND_IS_HEAVY: &str = "http://example.org/tera/compoundIsHeavy";

const ECOTOX_DIVISIONS: [&str; 7] = [
    "Fish",
    "Crustaceans",
    "Insects/Spiders",
    "Amphibians",
    "Worms",
    "Invertebrates",
    "Molluscs",
];
const HABITATS_PER_CLASS: usize = 3;
const DURATIONS: [f64; 4] = [24.0, 48.0, 72.0, 96.0];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
}

/// Relative weights of the latent toxicity terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentScales {
    pub intercept: f64,
    pub division: f64,
    pub cluster: f64,
    pub interaction: f64,
    pub rank: usize,
}

impl Default for LatentScales {
    fn default() -> Self {
        LatentScales {
            intercept: -1.0,
            division: 0.3,
            cluster: 0.72,
            interaction: 1.0,
            rank: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_species: usize,
    pub n_chemicals: usize,
    pub species_divisions: usize,
    pub chemical_clusters: usize,
    pub taxonomy_branching: usize,
    /// Number of geographic region objects available to species.
    pub trait_vocabulary_size: usize,
    pub habitat_classes: usize,
    pub fingerprint_length: usize,
    pub substructure_keys: usize,
    pub chemicals_per_species: usize,
    pub min_replicates: usize,
    pub max_replicates: usize,
    /// Replicate noise in log10-concentration units.
    pub noise_std: f64,
    pub latent: LatentScales,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            n_species: 140,
            n_chemicals: 40,
            species_divisions: 7,
            chemical_clusters: 5,
            taxonomy_branching: 3,
            trait_vocabulary_size: 12,
            habitat_classes: 3,
            fingerprint_length: DEFAULT_FINGERPRINT_LENGTH,
            substructure_keys: 32,
            chemicals_per_species: 5,
            min_replicates: 3,
            max_replicates: 5,
            noise_std: 0.5,
            latent: LatentScales::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let positive = [
            ("n_species", self.n_species),
            ("n_chemicals", self.n_chemicals),
            ("species_divisions", self.species_divisions),
            ("chemical_clusters", self.chemical_clusters),
            ("taxonomy_branching", self.taxonomy_branching),
            ("trait_vocabulary_size", self.trait_vocabulary_size),
            ("habitat_classes", self.habitat_classes),
            ("fingerprint_length", self.fingerprint_length),
            ("substructure_keys", self.substructure_keys),
            ("chemicals_per_species", self.chemicals_per_species),
            ("latent.rank", self.latent.rank),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(SynthError::Config(format!("{name} must be positive")));
            }
        }
        let fail = |m: String| Err(SynthError::Config(m));
        if self.n_species < self.species_divisions {
            return fail(format!(
                "{} species cannot fill {} divisions",
                self.n_species, self.species_divisions
            ));
        }
        if self.n_chemicals < self.chemical_clusters {
            return fail(format!(
                "{} chemicals cannot fill {} clusters",
                self.n_chemicals, self.chemical_clusters
            ));
        }
        if self.chemicals_per_species > self.n_chemicals {
            return fail("chemicals_per_species exceeds n_chemicals".into());
        }
        if self.substructure_keys > self.fingerprint_length {
            return fail("more substructure keys than fingerprint bits".into());
        }
        if self.min_replicates < crate::effects::MIN_REPLICATES
            || self.max_replicates < self.min_replicates
        {
            return fail(format!(
                "replicate range {}..={} must start at >= {}",
                self.min_replicates,
                self.max_replicates,
                crate::effects::MIN_REPLICATES
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return fail(format!(
                "noise_std {} must be finite and non-negative",
                self.noise_std
            ));
        }
        Ok(())
    }
}

/// Ground-truth toxicity function used to generate the effect data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentModel {
    pub intercept: f64,
    /// Scaled per-division sensitivity offsets.
    pub division_offsets: Vec<f64>,
    /// Scaled per-cluster potency offsets.
    pub cluster_offsets: Vec<f64>,
    pub habitat_of_division: Vec<usize>,
    /// Habitat-class loadings `U`, `habitat_classes × rank`.
    pub habitat_loadings: Vec<Vec<f64>>,
    /// Cluster loadings `V`, `chemical_clusters × rank`, already scaled.
    pub cluster_loadings: Vec<Vec<f64>>,
    pub noise_std: f64,
    pub species_division: BTreeMap<String, usize>,
    pub chemical_cluster: BTreeMap<String, usize>,
}

impl LatentModel {
    /// Noise-free `-log10(mg/L)` for a division and cluster.
    pub fn value(&self, division: usize, cluster: usize) -> f64 {
        let h = self.habitat_of_division[division];
        let interaction: f64 = self.habitat_loadings[h]
            .iter()
            .zip(&self.cluster_loadings[cluster])
            .map(|(u, v)| u * v)
            .sum();
        self.intercept
            + self.division_offsets[division]
            + self.cluster_offsets[cluster]
            + interaction
    }

    pub fn value_for(&self, species: &str, chemical: &str) -> Option<f64> {
        Some(self.value(
            *self.species_division.get(species)?,
            *self.chemical_cluster.get(chemical)?,
        ))
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub kg: KnowledgeGraph,
    pub records: Vec<EffectRecord>,
    pub latent: LatentModel,
    pub fingerprints: Vec<(String, Fingerprint)>,
    pub species: Vec<String>,
    pub chemicals: Vec<String>,
    pub division_roots: Vec<String>,
}

pub fn species_iri(i: usize) -> String {
    format!("{NS}species/S{i:04}")
}

pub fn chemical_iri(i: usize) -> String {
    format!("{NS}chemical/C{i:04}")
}

fn division_name(d: usize, n: usize) -> String {
    if n == ECOTOX_DIVISIONS.len() {
        ECOTOX_DIVISIONS[d].to_owned()
    } else {
        format!("Division{d}")
    }
}

fn is_vertebrate(name: &str, d: usize, n: usize) -> bool {
    if n == ECOTOX_DIVISIONS.len() {
        matches!(name, "Fish" | "Amphibians")
    } else {
        d.is_multiple_of(3)
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Makes the columns weighted-orthonormal around a zero weighted mean, so
/// the variance split between latent terms does not depend on the draw.
/// Columns that become degenerate (more columns than free rows) are zeroed.
fn standardize_columns(m: &mut [Vec<f64>], weights: &[f64]) {
    let Some(cols) = m.first().map(Vec::len) else {
        return;
    };
    let total: f64 = weights.iter().sum();
    let dot = |m: &[Vec<f64>], a: usize, b: usize| {
        m.iter()
            .zip(weights)
            .map(|(r, w)| w * r[a] * r[b])
            .sum::<f64>()
            / total
    };
    for c in 0..cols {
        let mean = m.iter().zip(weights).map(|(r, w)| w * r[c]).sum::<f64>() / total;
        for r in m.iter_mut() {
            r[c] -= mean;
        }
        for prev in 0..c {
            let proj = dot(m, c, prev);
            for r in m.iter_mut() {
                r[c] -= proj * r[prev];
            }
        }
        let norm = dot(m, c, c).sqrt();
        for r in m.iter_mut() {
            r[c] = if norm > 1e-9 { r[c] / norm } else { 0.0 };
        }
    }
}

fn standardized_draws(
    n: usize,
    cols: usize,
    weights: &[f64],
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..cols).map(|_| normal(rng)).collect())
        .collect();
    standardize_columns(&mut m, weights);
    for v in m.iter_mut().flatten() {
        *v *= scale;
    }
    m
}

pub fn generate(config: &SynthConfig) -> Result<SynthOutput, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut kg = KnowledgeGraphBuilder::new();
    let n_div = config.species_divisions;
    let n_hab = config.habitat_classes;

    // latent model
    let scales = &config.latent;
    let n_clu = config.chemical_clusters;
    let habitat_of_division: Vec<usize> = (0..n_div).map(|d| d % n_hab).collect();
    let divisions_per_habitat: Vec<f64> = (0..n_hab)
        .map(|h| habitat_of_division.iter().filter(|&&x| x == h).count() as f64)
        .collect();
    let division_offsets: Vec<f64> =
        standardized_draws(n_div, 1, &vec![1.0; n_div], scales.division, &mut rng)
            .into_iter()
            .map(|r| r[0])
            .collect();
    let cluster_offsets: Vec<f64> =
        standardized_draws(n_clu, 1, &vec![1.0; n_clu], scales.cluster, &mut rng)
            .into_iter()
            .map(|r| r[0])
            .collect();
    let habitat_loadings =
        standardized_draws(n_hab, scales.rank, &divisions_per_habitat, 1.0, &mut rng);
    let factor = scales.interaction / (scales.rank as f64).sqrt();
    let cluster_loadings =
        standardized_draws(n_clu, scales.rank, &vec![1.0; n_clu], factor, &mut rng);

    // species taxonomy
    let mut division_roots = Vec::with_capacity(n_div);
    let mut species_division = BTreeMap::new();
    let species: Vec<String> = (0..config.n_species).map(species_iri).collect();
    let regions: Vec<String> = (0..config.trait_vocabulary_size)
        .map(|r| format!("{NS}region/R{r:02}"))
        .collect();
    for (d, &h) in habitat_of_division.iter().enumerate() {
        let name = division_name(d, n_div);
        let root = format!("{NS}division/{}", name.replace('/', ""));
        kg.add_iri(&root, RDF_TYPE, DIVISION_CLASS);
        kg.add_literal(&root, RDFS_LABEL, Literal::plain(name.clone()));
        let members: Vec<usize> = (d..config.n_species).step_by(n_div).collect();
        let mut level: Vec<String> = members.iter().map(|&i| species[i].clone()).collect();
        let mut depth = 0;
        while level.len() > 1 && (depth == 0 || level.len() > config.taxonomy_branching) {
            depth += 1;
            let mut next = Vec::new();
            for (j, chunk) in level.chunks(config.taxonomy_branching).enumerate() {
                let node = format!("{NS}taxon/D{d}_L{depth}_{j}");
                for child in chunk {
                    kg.add_iri(child, HIERARCHY_PREDICATE, &node);
                }
                next.push(node);
            }
            level = next;
        }
        for node in &level {
            kg.add_iri(node, HIERARCHY_PREDICATE, &root);
        }
        let vertebrate = is_vertebrate(&name, d, n_div);
        let preferred: Vec<&String> = regions
            .iter()
            .enumerate()
            .filter(|(r, _)| r % n_hab == h)
            .map(|(_, s)| s)
            .collect();
        for &i in &members {
            let s = &species[i];
            species_division.insert(s.clone(), d);
            let class = if vertebrate {
                "Vertebrate"
            } else {
                "Invertebrate"
            };
            kg.add_iri(s, RDF_TYPE, &format!("{NS}{class}"));
            for j in index::sample(&mut rng, HABITATS_PER_CLASS, 2).into_iter() {
                kg.add_iri(s, HABITAT, &format!("{NS}habitat/H{h}_{j}"));
            }
            if rng.random_bool(0.1) {
                let other = rng.random_range(0..n_hab * HABITATS_PER_CLASS);
                kg.add_iri(
                    s,
                    HABITAT,
                    &format!(
                        "{NS}habitat/H{}_{}",
                        other / HABITATS_PER_CLASS,
                        other % HABITATS_PER_CLASS
                    ),
                );
            }
            let home = if preferred.is_empty() {
                &regions[0]
            } else {
                preferred[rng.random_range(0..preferred.len())]
            };
            kg.add_iri(s, PRESENT, home);
            kg.add_iri(s, PRESENT, &regions[rng.random_range(0..regions.len())]);
        }
        division_roots.push(root);
    }

    // chemicals: planted fingerprint blocks per cluster
    let len = config.fingerprint_length;
    let n_keys = config.substructure_keys;
    let block = |j: usize| (j * len / n_keys)..((j + 1) * len / n_keys);
    let prototypes: Vec<Vec<bool>> = (0..config.chemical_clusters)
        .map(|_| {
            let mut bits = vec![false; len];
            for j in 0..n_keys {
                let density = if rng.random_bool(0.35) { 0.6 } else { 0.05 };
                for b in block(j) {
                    bits[b] = rng.random_bool(density);
                }
            }
            bits
        })
        .collect();
    let compound = format!("{NS}chemclass/Compound");
    let mut chemical_cluster = BTreeMap::new();
    let mut fingerprints = Vec::with_capacity(config.n_chemicals);
    let chemicals: Vec<String> = (0..config.n_chemicals).map(chemical_iri).collect();
    for (i, chem) in chemicals.iter().enumerate() {
        let c = i % config.chemical_clusters;
        chemical_cluster.insert(chem.clone(), c);
        let bits: Vec<bool> = prototypes[c]
            .iter()
            .map(|&b| b ^ rng.random_bool(0.02))
            .collect();
        for j in 0..n_keys {
            let r = block(j);
            let width = r.len().max(1);
            let set = bits[r].iter().filter(|&&b| b).count();
            if set as f64 / width as f64 >= 0.3 {
                kg.add_iri(chem, HAS_SUBSTRUCTURE, &format!("{NS}substructure/F{j:02}"));
            }
        }
        let class = format!("{NS}chemclass/K{c}");
        let subclass = format!("{class}_{}", (i / config.chemical_clusters) % 2);
        kg.add_iri(chem, HIERARCHY_PREDICATE, &subclass);
        kg.add_iri(&subclass, HIERARCHY_PREDICATE, &class);
        kg.add_iri(&class, HIERARCHY_PREDICATE, &compound);
        let heavy = rng.random_bool(0.2);
        kg.add_literal(
            chem,
            COMPOUND_IS_HEAVY,
            Literal::typed(heavy.to_string(), XSD_BOOLEAN),
        );
        fingerprints.push((chem.clone(), Fingerprint::from_bits(&bits)));
    }

    let latent = LatentModel {
        intercept: scales.intercept,
        division_offsets,
        cluster_offsets,
        habitat_of_division,
        habitat_loadings,
        cluster_loadings,
        noise_std: config.noise_std,
        species_division,
        chemical_cluster,
    };

    // effect records
    let mut records = Vec::new();
    let mut chemical_order: Vec<usize> = (0..config.n_chemicals).collect();
    chemical_order.shuffle(&mut rng);
    let endpoints = [Endpoint::LC50, Endpoint::LD50, Endpoint::EC50];
    for (si, s) in species.iter().enumerate() {
        let d = si % n_div;
        // consecutive slots of a shuffled cyclic order: every chemical gets
        // the same number of species (±1), spread over the divisions
        let mut picked: Vec<usize> = (0..config.chemicals_per_species)
            .map(|t| chemical_order[(si * config.chemicals_per_species + t) % config.n_chemicals])
            .collect();
        picked.sort_unstable();
        for ci in picked {
            let truth = latent.value(d, ci % config.chemical_clusters);
            let n_rep = rng.random_range(config.min_replicates..=config.max_replicates);
            let unit = if rng.random_bool(0.5) {
                ConcentrationUnit::MgPerL
            } else {
                ConcentrationUnit::UgPerL
            };
            for _ in 0..n_rep {
                let noise = if config.noise_std > 0.0 {
                    config.noise_std * normal(&mut rng)
                } else {
                    0.0
                };
                let mg = 10f64.powf(-(truth + noise));
                let value = match unit {
                    ConcentrationUnit::UgPerL => mg * 1000.0,
                    _ => mg,
                };
                let endpoint = endpoints[rng.random_range(0..endpoints.len())].clone();
                let duration = DURATIONS[rng.random_range(0..DURATIONS.len())];
                records.push(EffectRecord {
                    chemical: chemicals[ci].clone(),
                    species: s.clone(),
                    endpoint,
                    effect: Effect::Mortality,
                    concentration: value,
                    unit: unit.clone(),
                    duration_hours: duration,
                });
            }
        }
    }

    Ok(SynthOutput {
        kg: kg.build().with_hierarchy(&[HIERARCHY_PREDICATE]),
        records,
        latent,
        fingerprints,
        species,
        chemicals,
        division_roots,
    })
}

/// Distinct objects of a predicate for one subject; used by tests and reports.
pub fn objects_of(kg: &KnowledgeGraph, subject: &str, predicate: &str) -> BTreeSet<String> {
    let (Some(s), Some(p)) = (kg.entity_id(subject), kg.relation_id(predicate)) else {
        return BTreeSet::new();
    };
    kg.outgoing(s)
        .filter(|t| t.predicate == p)
        .map(|t| kg.term_string(t.object))
        .collect()
}
