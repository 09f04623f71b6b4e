use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::{ExplainError, Result, SimilarityIndex};
use crate::kg::{EntityId, KnowledgeGraph};
use crate::predict::SamplePrediction;

/// Neighbourhood definition a [`DensityCell`] was counted under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DensityScale {
    Radius { chemical: f64, species: f64 },
    Depth { depth: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityCell {
    pub prediction: usize,
    pub chemical_count: usize,
    pub species_count: usize,
    pub categorical_error: u8,
    pub scale: DensityScale,
}

/// Counts other chemicals within `r_chemical` and other species within
/// `r_species` of the prediction's pair.
pub fn radius_density(
    chemicals: &SimilarityIndex,
    species: &SimilarityIndex,
    prediction: usize,
    sample: &SamplePrediction,
    r_chemical: f64,
    r_species: f64,
) -> Result<DensityCell> {
    if !(r_chemical > 0.0 && r_species > 0.0) {
        return Err(ExplainError::Config(format!(
            "radii must be positive, got {r_chemical} and {r_species}"
        )));
    }
    let c = chemicals.position(&sample.chemical)?;
    let s = species.position(&sample.species)?;
    Ok(DensityCell {
        prediction,
        chemical_count: chemicals.count_within(c, r_chemical),
        species_count: species.count_within(s, r_species),
        categorical_error: sample.categorical_error,
        scale: DensityScale::Radius {
            chemical: r_chemical,
            species: r_species,
        },
    })
}

/// Counts leaves with data under the ancestors reached within `depth`
/// hierarchy steps of the prediction's chemical and species.
pub fn depth_density(
    kg: &KnowledgeGraph,
    prediction: usize,
    sample: &SamplePrediction,
    depth: usize,
    has_data: impl Fn(EntityId) -> bool,
) -> Result<DensityCell> {
    let c = kg.require_entity(&sample.chemical)?;
    let s = kg.require_entity(&sample.species)?;
    Ok(DensityCell {
        prediction,
        chemical_count: kg.leaves_with_data_within_depth(c, depth, &has_data)?,
        species_count: kg.leaves_with_data_within_depth(s, depth, &has_data)?,
        categorical_error: sample.categorical_error,
        scale: DensityScale::Depth { depth },
    })
}

/// Predictions sharing one categorical error, binned by neighbour counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityPartition {
    pub error_class: u8,
    pub count: usize,
    /// `(chemical count, species count) -> frequency`
    pub histogram: BTreeMap<(usize, usize), usize>,
}

/// One partition per categorical error class `0..=3`, empty ones included.
pub fn density_map(cells: &[DensityCell]) -> Result<Vec<DensityPartition>> {
    let mut parts: Vec<DensityPartition> = (0..=3)
        .map(|e| DensityPartition {
            error_class: e,
            count: 0,
            histogram: BTreeMap::new(),
        })
        .collect();
    for cell in cells {
        let part = parts
            .get_mut(cell.categorical_error as usize)
            .ok_or_else(|| {
                ExplainError::Config(format!(
                    "categorical error {} out of range",
                    cell.categorical_error
                ))
            })?;
        part.count += 1;
        *part
            .histogram
            .entry((cell.chemical_count, cell.species_count))
            .or_insert(0) += 1;
    }
    Ok(parts)
}

/// Long format: `error_class,chemical_count,species_count,frequency`.
pub fn write_density_csv<W: Write>(partitions: &[DensityPartition], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "error_class",
        "chemical_count",
        "species_count",
        "frequency",
    ])?;
    for p in partitions {
        for (&(c, s), &f) in &p.histogram {
            w.write_record([
                p.error_class.to_string(),
                c.to_string(),
                s.to_string(),
                f.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
