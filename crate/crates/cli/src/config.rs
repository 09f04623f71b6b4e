use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use ecokg_core::embed::TrainingConfig;
use ecokg_core::explain::{DistanceMetric, ErrorModelConfig};
use ecokg_core::grouping::{DEFAULT_CHEMICAL_CLUSTERS, DEFAULT_FINGERPRINT_LENGTH};
use ecokg_core::kg::RDFS_SUBCLASS_OF;
use ecokg_core::predict::{GapMode, ProtocolConfig};
use ecokg_core::synth::{SynthConfig, DIVISION_CLASS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Optional external inputs; unset paths fall back to the generated data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub kg: Option<PathBuf>,
    pub effects: Option<PathBuf>,
    pub fingerprints: Option<PathBuf>,
    pub features: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSettings {
    /// Predicates whose edges form the taxonomy / chemical class hierarchy.
    pub hierarchy_predicates: Vec<String>,
    /// Class whose instances are the species division roots.
    pub division_class: String,
    pub chemical_clusters: usize,
    pub fingerprint_length: usize,
    /// Bin width of the replicate standard-deviation histogram.
    pub std_bin_width: f64,
}

impl Default for GraphSettings {
    fn default() -> Self {
        GraphSettings {
            hierarchy_predicates: vec![RDFS_SUBCLASS_OF.to_string()],
            division_class: DIVISION_CLASS.to_string(),
            chemical_clusters: DEFAULT_CHEMICAL_CLUSTERS,
            fingerprint_length: DEFAULT_FINGERPRINT_LENGTH,
            std_bin_width: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSettings {
    pub metric: DistanceMetric,
    /// Radii as quantiles of each side's pairwise entity distances.
    pub radius_quantiles: Vec<f64>,
    pub depths: Vec<usize>,
    /// Neighbourhood sizes of the fact/error correlation table.
    pub n_values: Vec<usize>,
    /// Neighbourhood size of the common-facts report.
    pub facts_n: usize,
    pub error_model: ErrorModelConfig,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        ExplainSettings {
            metric: DistanceMetric::Euclidean,
            radius_quantiles: vec![0.05, 0.1, 0.25],
            depths: vec![1, 2, 3],
            n_values: vec![2, 3, 5, 7, 9, 11],
            facts_n: 3,
            error_model: ErrorModelConfig::default(),
        }
    }
}

/// Whole-run configuration. `seed` drives every stochastic stage and
/// overrides the per-section seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: GapMode,
    /// Run directory; excluded from the config hash.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    pub paths: InputPaths,
    pub graph: GraphSettings,
    pub synth: SynthConfig,
    pub embedding: TrainingConfig,
    pub protocol: ProtocolConfig,
    pub explain: ExplainSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            mode: GapMode::Species,
            out: PathBuf::from("run"),
            paths: InputPaths::default(),
            graph: GraphSettings::default(),
            synth: SynthConfig::default(),
            embedding: TrainingConfig::default(),
            protocol: ProtocolConfig::default(),
            explain: ExplainSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Copies the global seed into every section.
    pub fn propagate_seed(&mut self) {
        self.synth.seed = self.seed;
        self.embedding.seed = self.seed;
        self.protocol.seed = self.seed;
        self.explain.error_model.seed = self.seed;
        self.explain.error_model.forest.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.embedding.validate()?;
        let p = &self.protocol;
        ensure!(p.n_repeats >= 1, "protocol.n_repeats must be at least 1");
        ensure!(p.n_folds >= 2, "protocol.n_folds must be at least 2");
        ensure!(
            p.inner_folds >= 2,
            "protocol.inner_folds must be at least 2"
        );
        ensure!(
            p.grid.c_exponents.0 <= p.grid.c_exponents.1,
            "protocol.grid.c_exponents is empty"
        );
        ensure!(
            p.grid.gamma_exponents.0 <= p.grid.gamma_exponents.1,
            "protocol.grid.gamma_exponents is empty"
        );
        ensure!(
            p.solver.epsilon >= 0.0 && p.solver.tolerance > 0.0,
            "protocol.solver needs epsilon ≥ 0, tolerance > 0"
        );
        let g = &self.graph;
        ensure!(
            !g.hierarchy_predicates.is_empty(),
            "graph.hierarchy_predicates is empty"
        );
        ensure!(
            g.chemical_clusters >= 1,
            "graph.chemical_clusters must be positive"
        );
        ensure!(
            g.fingerprint_length >= 1,
            "graph.fingerprint_length must be positive"
        );
        ensure!(
            g.std_bin_width > 0.0,
            "graph.std_bin_width must be positive"
        );
        let e = &self.explain;
        if let Some(q) = e
            .radius_quantiles
            .iter()
            .find(|q| !(**q > 0.0 && **q <= 1.0))
        {
            bail!("explain.radius_quantiles must lie in (0, 1], got {q}");
        }
        ensure!(!e.n_values.is_empty(), "explain.n_values is empty");
        let m = &e.error_model;
        ensure!(
            m.n_runs >= 1,
            "explain.error_model.n_runs must be at least 1"
        );
        ensure!(
            m.test_fraction > 0.0 && m.test_fraction < 1.0,
            "explain.error_model.test_fraction must lie in (0, 1)"
        );
        ensure!(
            m.forest.n_trees >= 1,
            "explain.error_model.forest.n_trees must be at least 1"
        );
        ensure!(
            m.forest.min_samples_split >= 2,
            "explain.error_model.forest.min_samples_split must be at least 2"
        );
        Ok(())
    }

    /// SHA-256 of the JSON form of the effective configuration.
    pub fn digest(&self) -> Result<String> {
        Ok(hex(&Sha256::digest(serde_json::to_vec(self)?)))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
