//! Effect-record filtering, unit normalization and per-pair aggregation.
//!
//! Records are kept when the endpoint is LC50, LD50 or EC50, the effect is
//! mortality, the concentration is given in mg/L or µg/L and the study ran
//! between 24 and 96 hours (both inclusive). Pairs with at least three
//! surviving records are reduced to their median concentration.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_REPLICATES: usize = 3;
pub const MIN_DURATION_HOURS: f64 = 24.0;
pub const MAX_DURATION_HOURS: f64 = 96.0;

#[derive(Debug, Error)]
pub enum EffectsError {
    #[error("unsupported concentration unit {0:?}")]
    UnsupportedUnit(String),
    #[error("concentration must be positive, got {0}")]
    NonPositiveConcentration(f64),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EffectsError>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    LC50,
    LD50,
    EC50,
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Effect {
    Mortality,
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConcentrationUnit {
    MgPerL,
    UgPerL,
    Other(String),
}

impl FromStr for Endpoint {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "LC50" => Endpoint::LC50,
            "LD50" => Endpoint::LD50,
            "EC50" => Endpoint::EC50,
            other => Endpoint::Other(other.to_owned()),
        })
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::LC50 => f.write_str("LC50"),
            Endpoint::LD50 => f.write_str("LD50"),
            Endpoint::EC50 => f.write_str("EC50"),
            Endpoint::Other(s) => f.write_str(s),
        }
    }
}

impl FromStr for Effect {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "MOR" => Effect::Mortality,
            other => Effect::Other(other.to_owned()),
        })
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Effect::Mortality => f.write_str("MOR"),
            Effect::Other(s) => f.write_str(s),
        }
    }
}

impl FromStr for ConcentrationUnit {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "mg/L" => ConcentrationUnit::MgPerL,
            "ug/L" | "µg/L" => ConcentrationUnit::UgPerL,
            other => ConcentrationUnit::Other(other.to_owned()),
        })
    }
}

impl fmt::Display for ConcentrationUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConcentrationUnit::MgPerL => f.write_str("mg/L"),
            ConcentrationUnit::UgPerL => f.write_str("ug/L"),
            ConcentrationUnit::Other(s) => f.write_str(s),
        }
    }
}

/// One experimental result for a (chemical, species) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRecord {
    pub chemical: String,
    pub species: String,
    pub endpoint: Endpoint,
    pub effect: Effect,
    pub concentration: f64,
    pub unit: ConcentrationUnit,
    pub duration_hours: f64,
}

impl EffectRecord {
    pub fn new(
        chemical: impl Into<String>,
        species: impl Into<String>,
        endpoint: Endpoint,
        effect: Effect,
        concentration: f64,
        unit: ConcentrationUnit,
        duration_hours: f64,
    ) -> Result<Self> {
        if !(concentration > 0.0 && concentration.is_finite()) {
            return Err(EffectsError::InvalidRecord(format!(
                "concentration {concentration}"
            )));
        }
        if !(duration_hours > 0.0 && duration_hours.is_finite()) {
            return Err(EffectsError::InvalidRecord(format!(
                "duration {duration_hours}"
            )));
        }
        Ok(EffectRecord {
            chemical: chemical.into(),
            species: species.into(),
            endpoint,
            effect,
            concentration,
            unit,
            duration_hours,
        })
    }

    fn passes_filter(&self) -> bool {
        matches!(
            self.endpoint,
            Endpoint::LC50 | Endpoint::LD50 | Endpoint::EC50
        ) && self.effect == Effect::Mortality
            && matches!(
                self.unit,
                ConcentrationUnit::MgPerL | ConcentrationUnit::UgPerL
            )
            && (MIN_DURATION_HOURS..=MAX_DURATION_HOURS).contains(&self.duration_hours)
    }
}

/// Keeps acute mortality records in mass-per-litre units; order preserved.
pub fn filter_records<I: IntoIterator<Item = EffectRecord>>(records: I) -> Vec<EffectRecord> {
    records
        .into_iter()
        .filter(EffectRecord::passes_filter)
        .collect()
}

/// Converts a concentration to mg/L.
pub fn normalize_unit(value: f64, unit: &ConcentrationUnit) -> Result<f64> {
    match unit {
        ConcentrationUnit::MgPerL => Ok(value),
        ConcentrationUnit::UgPerL => Ok(value / 1000.0),
        ConcentrationUnit::Other(u) => Err(EffectsError::UnsupportedUnit(u.clone())),
    }
}

/// Median-of-replicates target for one (chemical, species) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedSample {
    pub chemical: String,
    pub species: String,
    /// `-log10(median mg/L)`.
    pub target: f64,
    pub n_replicates: usize,
    /// Population standard deviation of the log10 concentrations.
    pub replicate_std: f64,
    pub median_mg_per_l: f64,
}

/// Reduces filtered records to one sample per pair with at least three
/// results. Output is sorted by (chemical, species) and does not depend on
/// input order.
pub fn aggregate(records: &[EffectRecord]) -> Result<Vec<AggregatedSample>> {
    let mut pairs: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for r in records {
        let mg = normalize_unit(r.concentration, &r.unit)?;
        pairs
            .entry((r.chemical.as_str(), r.species.as_str()))
            .or_default()
            .push(mg);
    }
    let mut out = Vec::new();
    for ((chemical, species), mut values) in pairs {
        if values.len() < MIN_REPLICATES {
            continue;
        }
        values.sort_by(f64::total_cmp);
        let median = median_sorted(&values);
        let logs: Vec<f64> = values.iter().map(|v| v.log10()).collect();
        out.push(AggregatedSample {
            chemical: chemical.to_owned(),
            species: species.to_owned(),
            target: -median.log10(),
            n_replicates: values.len(),
            replicate_std: population_std(&logs),
            median_mg_per_l: median,
        });
    }
    Ok(out)
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Welford's update keeps constant inputs at exactly zero spread.
fn population_std(v: &[f64]) -> f64 {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    if v.is_empty() {
        0.0
    } else {
        (m2 / v.len() as f64).max(0.0).sqrt()
    }
}

/// Regulatory toxicity class, ordered from most to least toxic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ToxicityCategory {
    VeryToxic = 0,
    Toxic = 1,
    Harmful = 2,
    MaybeHarmful = 3,
}

impl ToxicityCategory {
    pub const ALL: [ToxicityCategory; 4] = [
        ToxicityCategory::VeryToxic,
        ToxicityCategory::Toxic,
        ToxicityCategory::Harmful,
        ToxicityCategory::MaybeHarmful,
    ];

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn from_ordinal(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }

    /// Category of a `-log10(mg/L)` value.
    pub fn from_target(target: f64) -> Result<Self> {
        categorize(10f64.powf(-target))
    }
}

/// ≤1 mg/L very toxic, ≤10 toxic, ≤100 harmful, above that maybe harmful.
pub fn categorize(concentration_mg_per_l: f64) -> Result<ToxicityCategory> {
    let c = concentration_mg_per_l;
    if c.is_nan() || c <= 0.0 {
        return Err(EffectsError::NonPositiveConcentration(c));
    }
    Ok(if c <= 1.0 {
        ToxicityCategory::VeryToxic
    } else if c <= 10.0 {
        ToxicityCategory::Toxic
    } else if c <= 100.0 {
        ToxicityCategory::Harmful
    } else {
        ToxicityCategory::MaybeHarmful
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
}

/// Fixed-width histogram of replicate spreads; only non-empty bins are listed.
pub fn replicate_std_distribution(
    samples: &[AggregatedSample],
    bin_width: f64,
) -> Vec<HistogramBin> {
    assert!(bin_width > 0.0, "bin width must be positive");
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for s in samples {
        let bin = (s.replicate_std / bin_width).floor().max(0.0) as u64;
        *counts.entry(bin).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(b, count)| HistogramBin {
            bin_low: b as f64 * bin_width,
            bin_high: (b + 1) as f64 * bin_width,
            count,
        })
        .collect()
}

const TSV_HEADER: [&str; 7] = [
    "chemical",
    "species",
    "endpoint",
    "effect",
    "concentration",
    "unit",
    "duration_hours",
];

/// Reads the tab-separated effect file (header row required).
pub fn read_effects_tsv<R: Read>(reader: R) -> Result<Vec<EffectRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let err = |message: String| EffectsError::Parse { line, message };
        if row.len() != TSV_HEADER.len() {
            return Err(err(format!(
                "expected {} columns, found {}",
                TSV_HEADER.len(),
                row.len()
            )));
        }
        let num = |idx: usize| -> Result<f64> {
            row[idx]
                .trim()
                .parse::<f64>()
                .map_err(|e| err(format!("{}: {e}", TSV_HEADER[idx])))
        };
        let rec = EffectRecord::new(
            &row[0],
            &row[1],
            row[2].parse().unwrap(),
            row[3].parse().unwrap(),
            num(4)?,
            row[5].parse().unwrap(),
            num(6)?,
        )
        .map_err(|e| err(e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_effects_tsv<W: Write>(records: &[EffectRecord], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_writer(writer);
    w.write_record(TSV_HEADER)?;
    for r in records {
        w.write_record([
            r.chemical.clone(),
            r.species.clone(),
            r.endpoint.to_string(),
            r.effect.to_string(),
            r.concentration.to_string(),
            r.unit.to_string(),
            r.duration_hours.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_samples_csv<W: Write>(samples: &[AggregatedSample], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "chemical",
        "species",
        "median_mg_per_L",
        "target",
        "n",
        "std",
    ])?;
    for s in samples {
        w.write_record([
            s.chemical.clone(),
            s.species.clone(),
            s.median_mg_per_l.to_string(),
            s.target.to_string(),
            s.n_replicates.to_string(),
            s.replicate_std.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv<W: Write>(bins: &[HistogramBin], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bin_low", "bin_high", "count"])?;
    for b in bins {
        w.write_record([
            b.bin_low.to_string(),
            b.bin_high.to_string(),
            b.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
