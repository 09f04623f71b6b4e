use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ecokg_core::effects::{
    aggregate, filter_records, read_effects_tsv, replicate_std_distribution, write_effects_tsv,
    write_histogram_csv, write_samples_csv, AggregatedSample,
};
use ecokg_core::embed::{
    read_features_csv, train_inits, write_features_csv, write_loss_csv, write_table_csv,
    ComplexEmbeddingTable, FeatureTable,
};
use ecokg_core::explain::{
    common_facts, density_map, depth_density, fact_error_correlation, fit_error_model,
    radius_density, write_common_facts_csv, write_correlation_csv, write_density_csv,
    CommonFactsReport, DensityCell, DensityPartition, NeighbourhoodSide, SimilarityIndex,
};
use ecokg_core::grouping::{
    cluster_chemicals, read_fingerprints_tsv, species_divisions, tanimoto_matrix,
    write_fingerprints_tsv, Fingerprint, GroupAssignment, GroupKind,
};
use ecokg_core::kg::{load_ntriples, write_ntriples, KnowledgeGraph};
use ecokg_core::predict::{
    pair_features, read_predictions_csv, run_protocol, sample_groups, write_predictions_csv,
    EvaluationReport, FeatureSource, GapMode, ProtocolInput, SamplePrediction,
};
use ecokg_core::synth::generate;
use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{input_digest, InputDigest, Seeds, StageRef, StageWriter};

pub const DATA: &str = "data";
pub const EMBEDDINGS: &str = "embeddings";
pub const EVALUATION: &str = "evaluation";
pub const EXPLAIN: &str = "explain";

pub struct RunContext<'a> {
    pub cfg: &'a RunConfig,
    pub digest: String,
}

impl RunContext<'_> {
    fn out(&self) -> &Path {
        &self.cfg.out
    }

    fn kg_path(&self) -> PathBuf {
        self.cfg
            .paths
            .kg
            .clone()
            .unwrap_or_else(|| self.out().join(DATA).join("kg.nt"))
    }

    fn effects_path(&self) -> PathBuf {
        self.cfg
            .paths
            .effects
            .clone()
            .unwrap_or_else(|| self.out().join(DATA).join("effects.tsv"))
    }

    fn fingerprints_path(&self) -> PathBuf {
        self.cfg
            .paths
            .fingerprints
            .clone()
            .unwrap_or_else(|| self.out().join(DATA).join("fingerprints.tsv"))
    }

    fn features_path(&self) -> PathBuf {
        self.cfg
            .paths
            .features
            .clone()
            .unwrap_or_else(|| self.out().join(EMBEDDINGS).join("features.csv"))
    }

    fn predictions_path(&self) -> PathBuf {
        self.out()
            .join(EVALUATION)
            .join("predictions_embedding.csv")
    }

    fn commit(
        &self,
        stage: StageWriter,
        inputs: Vec<InputDigest>,
        summary: serde_json::Value,
    ) -> Result<String> {
        stage.commit(&self.digest, Seeds::of(self.cfg), inputs, summary)
    }
}

fn open(path: &Path, what: &str) -> Result<BufReader<File>> {
    let file =
        File::open(path).with_context(|| format!("cannot open {what} file {}", path.display()))?;
    Ok(BufReader::new(file))
}

fn load_kg(ctx: &RunContext, with_hierarchy: bool) -> Result<KnowledgeGraph> {
    let path = ctx.kg_path();
    let kg = load_ntriples(open(&path, "knowledge graph")?)
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(if with_hierarchy {
        kg.with_hierarchy(&ctx.cfg.graph.hierarchy_predicates)
    } else {
        kg
    })
}

fn load_features(path: &Path) -> Result<FeatureTable> {
    read_features_csv(open(path, "feature")?).with_context(|| format!("parsing {}", path.display()))
}

pub fn cmd_generate(ctx: &RunContext) -> Result<StageRef> {
    let out = generate(&ctx.cfg.synth)?;
    let mut stage = StageWriter::begin(ctx.out(), DATA)?;
    stage.write("kg.nt", |w| Ok(write_ntriples(&out.kg, w)?))?;
    stage.write("effects.tsv", |w| Ok(write_effects_tsv(&out.records, w)?))?;
    stage.write("fingerprints.tsv", |w| {
        Ok(write_fingerprints_tsv(&out.fingerprints, w)?)
    })?;
    stage.write_json("latent.json", &out.latent)?;
    let summary = json!({
        "triples": out.kg.len(),
        "entities": out.kg.entity_count(),
        "species": out.species.len(),
        "chemicals": out.chemicals.len(),
        "effect_records": out.records.len(),
    });
    info!(
        "generated {} triples and {} effect records",
        out.kg.len(),
        out.records.len()
    );
    let sha = ctx.commit(stage, vec![], summary)?;
    Ok(StageRef {
        stage: DATA.into(),
        manifest_sha256: sha,
    })
}

#[derive(Serialize)]
struct TableManifest<'a> {
    init: usize,
    k: usize,
    seed: u64,
    epochs: usize,
    n_nodes: usize,
    n_relations: usize,
    loss_curve: &'a [f64],
}

pub fn cmd_embed(ctx: &RunContext) -> Result<StageRef> {
    let kg = load_kg(ctx, false)?;
    let inputs = vec![input_digest("kg", &ctx.kg_path())?];
    let cfg = &ctx.cfg.embedding;
    let runs = train_inits(&kg, cfg).context("training embeddings")?;
    let mut stage = StageWriter::begin(ctx.out(), EMBEDDINGS)?;
    for run in &runs {
        let i = run.init;
        stage.write(&format!("table_{i}.csv"), |w| {
            Ok(write_table_csv(&run.table, &kg, w)?)
        })?;
        stage.write(&format!("loss_{i}.csv"), |w| {
            Ok(write_loss_csv(&run.loss_curve, w)?)
        })?;
        stage.write_json(
            &format!("table_{i}.json"),
            &TableManifest {
                init: i,
                k: cfg.k,
                seed: cfg.seed,
                epochs: cfg.epochs,
                n_nodes: run.table.n_nodes(),
                n_relations: run.table.n_relations(),
                loss_curve: &run.loss_curve,
            },
        )?;
    }
    let tables: Vec<&ComplexEmbeddingTable> = runs.iter().map(|r| &r.table).collect();
    let features = FeatureTable::from_embeddings(&kg, &tables)?;
    stage.write("features.csv", |w| Ok(write_features_csv(&features, w)?))?;
    let final_loss: Vec<f64> = runs
        .iter()
        .map(|r| r.loss_curve.last().copied().unwrap_or(f64::NAN))
        .collect();
    let summary = json!({ "n_inits": runs.len(), "feature_dim": features.dim(), "entities": features.len(), "final_loss": final_loss });
    let sha = ctx.commit(stage, inputs, summary)?;
    Ok(StageRef {
        stage: EMBEDDINGS.into(),
        manifest_sha256: sha,
    })
}

fn load_samples(ctx: &RunContext) -> Result<Vec<AggregatedSample>> {
    let path = ctx.effects_path();
    let records = read_effects_tsv(open(&path, "effects")?)
        .with_context(|| format!("parsing {}", path.display()))?;
    let samples = aggregate(&filter_records(records))?;
    if samples.is_empty() {
        bail!(
            "no (chemical, species) pair in {} has enough replicates",
            path.display()
        );
    }
    Ok(samples)
}

fn check_coverage(samples: &[AggregatedSample], features: &FeatureTable, what: &str) -> Result<()> {
    let missing: BTreeSet<&str> = samples
        .iter()
        .flat_map(|s| [s.chemical.as_str(), s.species.as_str()])
        .filter(|e| features.get(e).is_none())
        .collect();
    if !missing.is_empty() {
        let list: Vec<&str> = missing.into_iter().collect();
        bail!(
            "{} sample entities have no {what} features: {}",
            list.len(),
            list.join(", ")
        );
    }
    Ok(())
}

fn write_distance_matrix<W: Write>(prints: &[(String, Fingerprint)], writer: W) -> Result<()> {
    let refs: Vec<&Fingerprint> = prints.iter().map(|(_, f)| f).collect();
    let dist = tanimoto_matrix(&refs);
    let n = prints.len();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(std::iter::once("chemical").chain(prints.iter().map(|(iri, _)| iri.as_str())))?;
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| dist[i * n + j].to_string()).collect();
        w.write_record(
            std::iter::once(prints[i].0.as_str()).chain(row.iter().map(String::as_str)),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FoldPlans<'a> {
    mode: GapMode,
    group_labels: &'a [String],
    /// Fold index per group label, one plan per repeat.
    plans: &'a [Vec<usize>],
}

fn arm_metrics(r: &EvaluationReport) -> serde_json::Value {
    json!({ "r2_mean": r.r2_mean, "r2_std": r.r2_std, "ca_mean": r.ca_mean, "ca_std": r.ca_std })
}

pub fn cmd_evaluate(ctx: &RunContext) -> Result<StageRef> {
    let cfg = ctx.cfg;
    let kg = load_kg(ctx, true)?;
    let samples = load_samples(ctx)?;
    let features_path = ctx.features_path();
    let embedding = load_features(&features_path)?;
    check_coverage(&samples, &embedding, "embedding")?;
    let random = FeatureTable::random(&kg, embedding.dim(), cfg.seed);
    check_coverage(&samples, &random, "random")?;
    let mut inputs = vec![
        input_digest("kg", &ctx.kg_path())?,
        input_digest("effects", &ctx.effects_path())?,
        input_digest("features", &features_path)?,
    ];

    let species: BTreeSet<&str> = samples.iter().map(|s| s.species.as_str()).collect();
    let species_ids = species
        .iter()
        .map(|s| {
            kg.require_entity(s)
                .with_context(|| format!("species {s} is not in the knowledge graph"))
        })
        .collect::<Result<Vec<_>>>()?;
    let roots = kg.instances_of(&cfg.graph.division_class);
    if roots.is_empty() {
        bail!(
            "no instances of {} in the knowledge graph",
            cfg.graph.division_class
        );
    }
    let species_groups = species_divisions(&kg, &species_ids, &roots)?;

    let fp_path = ctx.fingerprints_path();
    let fingerprints = if fp_path.exists() {
        inputs.push(input_digest("fingerprints", &fp_path)?);
        let prints =
            read_fingerprints_tsv(open(&fp_path, "fingerprint")?, cfg.graph.fingerprint_length)
                .with_context(|| format!("parsing {}", fp_path.display()))?;
        Some(prints)
    } else if cfg.mode == GapMode::Chemical {
        bail!(
            "chemical gap-filling needs a fingerprint file, but {} does not exist",
            fp_path.display()
        );
    } else {
        warn!(
            "no fingerprint file at {}; skipping chemical clustering",
            fp_path.display()
        );
        None
    };
    let chemical_groups = match &fingerprints {
        Some(prints) => cluster_chemicals(prints, cfg.graph.chemical_clusters)?.0,
        None => GroupAssignment::new(GroupKind::ChemicalCluster, Vec::new()),
    };
    let (groups, n_groups) = sample_groups(&samples, cfg.mode, &species_groups, &chemical_groups)?;

    let mut reports = Vec::new();
    for (source, table) in [
        (FeatureSource::Embedding, &embedding),
        (FeatureSource::RandomProjection, &random),
    ] {
        let features = pair_features(&samples, table)?;
        let input = ProtocolInput {
            samples: &samples,
            features: &features,
            groups: &groups,
            n_groups,
        };
        let report = run_protocol(&input, source, cfg.mode, &cfg.protocol)?;
        info!(
            "{} arm: R2 {:.4} ± {:.4}, CA {:.4} ± {:.4}",
            source.name(),
            report.r2_mean,
            report.r2_std,
            report.ca_mean,
            report.ca_std
        );
        reports.push(report);
    }

    let mut stage = StageWriter::begin(ctx.out(), EVALUATION)?;
    stage.write("samples.csv", |w| Ok(write_samples_csv(&samples, w)?))?;
    let bins = replicate_std_distribution(&samples, cfg.graph.std_bin_width);
    stage.write("std_histogram.csv", |w| Ok(write_histogram_csv(&bins, w)?))?;
    stage.write("species_groups.csv", |w| Ok(species_groups.write_csv(w)?))?;
    if let Some(prints) = &fingerprints {
        stage.write("chemical_groups.csv", |w| Ok(chemical_groups.write_csv(w)?))?;
        stage.write("chemical_distances.csv", |w| {
            write_distance_matrix(prints, w)
        })?;
    }
    let group_labels = match cfg.mode {
        GapMode::Species => &species_groups.labels,
        GapMode::Chemical => &chemical_groups.labels,
    };
    stage.write_json(
        "fold_plans.json",
        &FoldPlans {
            mode: cfg.mode,
            group_labels,
            plans: &reports[0].fold_plans,
        },
    )?;
    let mut metrics = BTreeMap::new();
    for r in &reports {
        let name = r.source.name();
        stage.write_json(&format!("report_{name}.json"), r)?;
        stage.write(&format!("predictions_{name}.csv"), |w| {
            Ok(write_predictions_csv(&r.samples, w)?)
        })?;
        metrics.insert(name, arm_metrics(r));
    }
    let summary = json!({
        "mode": cfg.mode,
        "n_samples": samples.len(),
        "n_groups": n_groups,
        "n_repeats": cfg.protocol.n_repeats,
        "metrics": metrics,
    });
    stage.write_json("metrics.json", &summary)?;
    let sha = ctx.commit(stage, inputs, summary)?;
    Ok(StageRef {
        stage: EVALUATION.into(),
        manifest_sha256: sha,
    })
}

fn density_files(
    stage: &mut StageWriter,
    prefix: &str,
    partitions: &[DensityPartition],
    summary: &mut Vec<serde_json::Value>,
    scale: serde_json::Value,
) -> Result<()> {
    for p in partitions {
        let rel = format!("density/{prefix}_err{}.csv", p.error_class);
        stage.write(&rel, |w| Ok(write_density_csv(std::slice::from_ref(p), w)?))?;
    }
    let counts: Vec<usize> = partitions.iter().map(|p| p.count).collect();
    summary
        .push(json!({ "file_prefix": prefix, "scale": scale, "counts_per_error_class": counts }));
    Ok(())
}

pub fn cmd_explain(ctx: &RunContext) -> Result<StageRef> {
    let cfg = ctx.cfg;
    let ex = &cfg.explain;
    let pred_path = ctx.predictions_path();
    if !pred_path.exists() {
        bail!(
            "evaluation output {} is missing; run `evaluate` first",
            pred_path.display()
        );
    }
    let predictions: Vec<SamplePrediction> = read_predictions_csv(open(&pred_path, "predictions")?)
        .with_context(|| format!("parsing {}", pred_path.display()))?;
    let kg = load_kg(ctx, true)?;
    let features_path = ctx.features_path();
    let features = load_features(&features_path)?;
    let inputs = vec![
        input_digest("kg", &ctx.kg_path())?,
        input_digest("features", &features_path)?,
        input_digest("predictions", &pred_path)?,
    ];

    let chemicals: BTreeSet<&str> = predictions.iter().map(|p| p.chemical.as_str()).collect();
    let species: BTreeSet<&str> = predictions.iter().map(|p| p.species.as_str()).collect();
    let chemicals: Vec<&str> = chemicals.into_iter().collect();
    let species: Vec<&str> = species.into_iter().collect();
    let chem_index = SimilarityIndex::from_features(&features, &chemicals, ex.metric)?;
    let species_index = SimilarityIndex::from_features(&features, &species, ex.metric)?;

    let mut stage = StageWriter::begin(ctx.out(), EXPLAIN)?;
    let mut density_summary = Vec::new();
    for &q in &ex.radius_quantiles {
        let (Some(rc), Some(rs)) = (
            chem_index.distance_quantile(q),
            species_index.distance_quantile(q),
        ) else {
            warn!("fewer than two chemicals or species; skipping radius densities");
            break;
        };
        let cells = predictions
            .iter()
            .enumerate()
            .map(|(i, p)| radius_density(&chem_index, &species_index, i, p, rc, rs))
            .collect::<std::result::Result<Vec<DensityCell>, _>>()?;
        let scale = json!({ "quantile": q, "chemical_radius": rc, "species_radius": rs });
        density_files(
            &mut stage,
            &format!("radius_q{q}"),
            &density_map(&cells)?,
            &mut density_summary,
            scale,
        )?;
    }
    let with_data: BTreeSet<_> = chemicals
        .iter()
        .chain(&species)
        .filter_map(|e| kg.entity_id(e))
        .collect();
    for &depth in &ex.depths {
        let cells = predictions
            .iter()
            .enumerate()
            .map(|(i, p)| depth_density(&kg, i, p, depth, |e| with_data.contains(&e)))
            .collect::<std::result::Result<Vec<DensityCell>, _>>()?;
        let scale = json!({ "depth": depth });
        density_files(
            &mut stage,
            &format!("depth_{depth}"),
            &density_map(&cells)?,
            &mut density_summary,
            scale,
        )?;
    }
    stage.write_json("density/summary.json", &density_summary)?;

    let (_, error_report) =
        fit_error_model(&chem_index, &species_index, &predictions, &ex.error_model)?;
    info!(
        "error model: {:.4} ± {:.4} (constant baseline {:.4} ± {:.4})",
        error_report.mean_error,
        error_report.std_error,
        error_report.baseline_mean_error,
        error_report.baseline_std_error
    );
    stage.write_json("error_model.json", &error_report)?;

    let mut reports = Vec::with_capacity(2 * predictions.len());
    for (i, p) in predictions.iter().enumerate() {
        for (side, index, entity) in [
            (NeighbourhoodSide::Chemical, &chem_index, &p.chemical),
            (NeighbourhoodSide::Species, &species_index, &p.species),
        ] {
            let facts = common_facts(&kg, index, entity, ex.facts_n)?;
            reports.push(CommonFactsReport::new(
                i,
                side,
                p.abs_error,
                p.categorical_error,
                facts,
            ));
        }
    }
    stage.write("common_facts.csv", |w| {
        Ok(write_common_facts_csv(&reports, w)?)
    })?;

    let rows =
        fact_error_correlation(&kg, &chem_index, &species_index, &predictions, &ex.n_values)?;
    stage.write("correlation.csv", |w| Ok(write_correlation_csv(&rows, w)?))?;

    let summary = json!({
        "n_predictions": predictions.len(),
        "error_model": {
            "mean_error": error_report.mean_error,
            "std_error": error_report.std_error,
            "baseline_mean_error": error_report.baseline_mean_error,
            "baseline_std_error": error_report.baseline_std_error,
        },
        "correlations": rows,
    });
    let sha = ctx.commit(stage, inputs, summary)?;
    Ok(StageRef {
        stage: EXPLAIN.into(),
        manifest_sha256: sha,
    })
}
