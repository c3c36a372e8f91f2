//! Dataset records and sequence-sample construction.
//!
//! Raw inputs are per-feeder-per-year records (peak demand, customer
//! composition, large-customer changes, optional DER/EV growth) and
//! per-region-per-year records (economic/population drivers plus the seasonal
//! temperature extreme). [`build_sequence_samples`] rolls them into
//! overlapping fixed-length windows; [`split_dataset`] partitions the
//! resulting records into seeded train/test sets.

pub mod io;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Mode;
use crate::rng::{seed_stream, STREAM_SPLIT};

/// Seasonal pipelines are fully independent: summer models forecast summer
/// peaks against maximum temperatures, winter models winter peaks against
/// minimums.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Season {
    Summer,
    Winter,
}

impl std::fmt::Display for Season {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Season::Summer => "summer",
            Season::Winter => "winter",
        })
    }
}

/// One feeder-year of bottom-up features. Composition percentages are stored
/// as fractions summing to 1; `industrial_pct` is the residual of the other
/// two by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeederYearRecord {
    pub feeder_id: String,
    pub year: i32,
    /// Seasonal peak demand, amperes.
    pub peak_demand: f64,
    pub residential_pct: f64,
    pub commercial_pct: f64,
    pub industrial_pct: f64,
    /// Net large-customer load change during this year, amperes (signed).
    pub large_customer_net_change: f64,
    pub der_growth: Option<f64>,
    pub ev_growth: Option<f64>,
}

impl FeederYearRecord {
    pub fn check(&self) -> Result<()> {
        if !(self.peak_demand > 0.0) {
            return Err(Error::domain(format!(
                "feeder {} year {}: peak demand must be positive, got {}",
                self.feeder_id, self.year, self.peak_demand
            )));
        }
        for (name, v) in [
            ("residential_pct", self.residential_pct),
            ("commercial_pct", self.commercial_pct),
            ("industrial_pct", self.industrial_pct),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!(
                    "feeder {} year {}: {} = {} outside [0, 1]",
                    self.feeder_id, self.year, name, v
                )));
            }
        }
        let sum = self.residential_pct + self.commercial_pct + self.industrial_pct;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::consistency(format!(
                "feeder {} year {}: composition sums to {}, expected 1",
                self.feeder_id, self.year, sum
            )));
        }
        for (name, v) in [("der_growth", self.der_growth), ("ev_growth", self.ev_growth)] {
            if let Some(x) = v {
                if !(x >= 0.0) {
                    return Err(Error::domain(format!(
                        "feeder {} year {}: {} must be nonnegative, got {}",
                        self.feeder_id, self.year, name, x
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One region-year of top-down features. `econ` holds the values of the
/// economic/population columns in the order declared by the owning
/// [`RegionalTable`]; `temperature` is the seasonal extreme for the year.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionalYearRecord {
    pub year: i32,
    pub econ: Vec<f64>,
    pub temperature: f64,
    /// `temperature(year) − temperature(year − 1)`; absent when the prior
    /// year is not in the table.
    pub temperature_change: Option<f64>,
}

/// All regional history for one season, with named economic/population
/// columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionalTable {
    pub econ_columns: Vec<String>,
    pub rows: Vec<RegionalYearRecord>,
}

impl RegionalTable {
    pub fn new(econ_columns: Vec<String>, mut rows: Vec<RegionalYearRecord>) -> Result<Self> {
        rows.sort_by_key(|r| r.year);
        let mut table = RegionalTable { econ_columns, rows };
        table.check()?;
        table.fill_temperature_changes();
        Ok(table)
    }

    pub fn check(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for row in &self.rows {
            if !seen.insert(row.year) {
                return Err(Error::consistency(format!(
                    "regional table has duplicate year {}",
                    row.year
                )));
            }
            if row.econ.len() != self.econ_columns.len() {
                return Err(Error::shape(format!(
                    "regional year {} carries {} values for {} declared columns",
                    row.year,
                    row.econ.len(),
                    self.econ_columns.len()
                )));
            }
        }
        Ok(())
    }

    /// Recomputes `temperature_change` for every year whose predecessor is
    /// present.
    pub fn fill_temperature_changes(&mut self) {
        let temps: BTreeMap<i32, f64> = self.rows.iter().map(|r| (r.year, r.temperature)).collect();
        for row in &mut self.rows {
            row.temperature_change = temps.get(&(row.year - 1)).map(|prev| row.temperature - prev);
        }
    }

    pub fn get(&self, year: i32) -> Option<&RegionalYearRecord> {
        self.rows.iter().find(|r| r.year == year)
    }
}

/// One load-transfer event: the year switching happened and the feeders
/// involved (normally 2, possibly more).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferEvent {
    pub year: i32,
    pub feeder_ids: Vec<String>,
}

impl TransferEvent {
    pub fn check(&self) -> Result<()> {
        if self.feeder_ids.len() < 2 {
            return Err(Error::domain(format!(
                "transfer event in {} involves {} feeder(s); at least 2 required",
                self.year,
                self.feeder_ids.len()
            )));
        }
        let unique: BTreeSet<&String> = self.feeder_ids.iter().collect();
        if unique.len() != self.feeder_ids.len() {
            return Err(Error::consistency(format!(
                "transfer event in {} lists a feeder twice",
                self.year
            )));
        }
        Ok(())
    }
}

/// Fixed layout of one raw (pre-normalization) step feature vector:
/// `[prev_peak, residential_pct, commercial_pct, <econ columns...>,
/// temperature, temperature_change, large_customer_net_change,
/// (der_growth), (ev_growth)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSchema {
    pub econ_columns: Vec<String>,
    pub include_der: bool,
    pub include_ev: bool,
}

impl RawSchema {
    pub const IDX_PREV_PEAK: usize = 0;
    pub const IDX_RESIDENTIAL: usize = 1;
    pub const IDX_COMMERCIAL: usize = 2;
    pub const ECON_START: usize = 3;

    pub fn econ_count(&self) -> usize {
        self.econ_columns.len()
    }

    pub fn idx_temperature(&self) -> usize {
        Self::ECON_START + self.econ_count()
    }

    pub fn idx_temperature_change(&self) -> usize {
        self.idx_temperature() + 1
    }

    pub fn idx_large_customer(&self) -> usize {
        self.idx_temperature() + 2
    }

    pub fn idx_der(&self) -> Option<usize> {
        self.include_der.then(|| self.idx_temperature() + 3)
    }

    pub fn idx_ev(&self) -> Option<usize> {
        self.include_ev
            .then(|| self.idx_temperature() + 3 + usize::from(self.include_der))
    }

    pub fn width(&self) -> usize {
        3 + self.econ_count() + 3 + usize::from(self.include_der) + usize::from(self.include_ev)
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec![
            "prev_peak".to_string(),
            "residential_pct".to_string(),
            "commercial_pct".to_string(),
        ];
        names.extend(self.econ_columns.iter().cloned());
        names.push("temperature".to_string());
        names.push("temperature_change".to_string());
        names.push("large_customer_net_change".to_string());
        if self.include_der {
            names.push("der_growth".to_string());
        }
        if self.include_ev {
            names.push("ev_growth".to_string());
        }
        names
    }

    /// Assembles one raw step vector: previous-year feeder features from
    /// `prev`, forecast-year features from `current` and `regional`.
    pub fn assemble_step(
        &self,
        prev: &FeederYearRecord,
        current: &FeederYearRecord,
        regional: &RegionalYearRecord,
    ) -> Result<Vec<f64>> {
        if regional.econ.len() != self.econ_count() {
            return Err(Error::shape(format!(
                "regional year {} carries {} econ values, schema expects {}",
                regional.year,
                regional.econ.len(),
                self.econ_count()
            )));
        }
        let change = regional.temperature_change.ok_or_else(|| {
            Error::domain(format!(
                "regional year {} lacks a temperature change (no prior year)",
                regional.year
            ))
        })?;
        let mut step = Vec::with_capacity(self.width());
        step.push(prev.peak_demand);
        step.push(prev.residential_pct);
        step.push(prev.commercial_pct);
        step.extend_from_slice(&regional.econ);
        step.push(regional.temperature);
        step.push(change);
        step.push(current.large_customer_net_change);
        if self.include_der {
            step.push(current.der_growth.ok_or_else(|| {
                Error::consistency(format!(
                    "feeder {} year {} lacks der_growth but the schema includes it",
                    current.feeder_id, current.year
                ))
            })?);
        }
        if self.include_ev {
            step.push(current.ev_growth.ok_or_else(|| {
                Error::consistency(format!(
                    "feeder {} year {} lacks ev_growth but the schema includes it",
                    current.feeder_id, current.year
                ))
            })?);
        }
        Ok(step)
    }
}

/// One training/test record: a window of `n_steps` consecutive forecast
/// years. Step `t` carries previous-year features from year `t−1` and
/// forecast-year features from year `t`; targets are the actual peaks
/// (final year only for many-to-one, all years for many-to-many).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    pub record_id: u32,
    pub feeder_id: String,
    pub forecast_years: Vec<i32>,
    pub steps: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl SequenceSample {
    pub fn check(&self, mode: Mode, n_steps: usize, input_width: usize) -> Result<()> {
        if self.forecast_years.len() != n_steps {
            return Err(Error::shape(format!(
                "record {}: {} forecast years, expected {}",
                self.record_id,
                self.forecast_years.len(),
                n_steps
            )));
        }
        for w in self.forecast_years.windows(2) {
            if w[1] != w[0] + 1 {
                return Err(Error::consistency(format!(
                    "record {}: forecast years {:?} are not consecutive",
                    self.record_id, self.forecast_years
                )));
            }
        }
        if self.steps.len() != n_steps {
            return Err(Error::shape(format!(
                "record {}: {} steps, expected {}",
                self.record_id,
                self.steps.len(),
                n_steps
            )));
        }
        for (t, step) in self.steps.iter().enumerate() {
            if step.len() != input_width {
                return Err(Error::shape(format!(
                    "record {} step {}: {} features, expected {}",
                    self.record_id,
                    t,
                    step.len(),
                    input_width
                )));
            }
        }
        if self.targets.len() != mode.output_count(n_steps) {
            return Err(Error::shape(format!(
                "record {}: {} targets, expected {}",
                self.record_id,
                self.targets.len(),
                mode.output_count(n_steps)
            )));
        }
        Ok(())
    }

    pub fn to_example(&self) -> crate::net::TrainingExample {
        crate::net::TrainingExample {
            steps: self.steps.clone(),
            targets: self.targets.clone(),
        }
    }
}

/// Windowing configuration for sample construction.
#[derive(Clone, Debug)]
pub struct SampleBuildConfig {
    pub mode: Mode,
    pub n_steps: usize,
}

/// Builds one sample per (feeder, window of `n_steps` consecutive forecast
/// years), overlapping at stride 1. A window needs feeder records for the
/// `n_steps` forecast years plus the year before the window (previous-year
/// features), and regional records with temperature changes for every
/// forecast year; windows that can't be satisfied are skipped with a logged
/// reason.
pub fn build_sequence_samples(
    feeders: &[FeederYearRecord],
    regional: &RegionalTable,
    schema: &RawSchema,
    cfg: &SampleBuildConfig,
) -> Result<Vec<SequenceSample>> {
    if cfg.n_steps == 0 {
        return Err(Error::domain("n_steps must be positive"));
    }
    for rec in feeders {
        rec.check()?;
    }
    regional.check()?;

    let mut by_feeder: BTreeMap<&str, BTreeMap<i32, &FeederYearRecord>> = BTreeMap::new();
    for rec in feeders {
        if by_feeder
            .entry(rec.feeder_id.as_str())
            .or_default()
            .insert(rec.year, rec)
            .is_some()
        {
            return Err(Error::consistency(format!(
                "feeder {} has two records for year {}",
                rec.feeder_id, rec.year
            )));
        }
    }
    let regional_by_year: BTreeMap<i32, &RegionalYearRecord> =
        regional.rows.iter().map(|r| (r.year, r)).collect();

    let s = cfg.n_steps as i32;
    let mut samples = Vec::new();
    let mut record_id = 0u32;
    for (feeder_id, years) in &by_feeder {
        let (&first, _) = years.first_key_value().expect("feeder map entries are nonempty");
        let (&last, _) = years.last_key_value().expect("feeder map entries are nonempty");
        // window of forecast years [start, start + s - 1]
        for start in (first + 1)..=(last - s + 1) {
            let window: std::ops::RangeInclusive<i32> = start..=(start + s - 1);
            let mut steps = Vec::with_capacity(cfg.n_steps);
            let mut skip_reason: Option<String> = None;
            for y in window.clone() {
                let (prev, cur) = match (years.get(&(y - 1)), years.get(&y)) {
                    (Some(p), Some(c)) => (p, c),
                    _ => {
                        skip_reason = Some(format!("feeder data missing around year {y}"));
                        break;
                    }
                };
                let reg = match regional_by_year.get(&y) {
                    Some(r) => r,
                    None => {
                        skip_reason = Some(format!("no regional data for year {y}"));
                        break;
                    }
                };
                match schema.assemble_step(prev, cur, reg) {
                    Ok(step) => steps.push(step),
                    Err(e) => {
                        skip_reason = Some(e.to_string());
                        break;
                    }
                }
            }
            if let Some(reason) = skip_reason {
                log::warn!(
                    "skipping window {}..={} of feeder {}: {}",
                    start,
                    start + s - 1,
                    feeder_id,
                    reason
                );
                continue;
            }
            let targets = match cfg.mode {
                Mode::ManyToOne => vec![years[&(start + s - 1)].peak_demand],
                Mode::ManyToMany => window.clone().map(|y| years[&y].peak_demand).collect(),
            };
            samples.push(SequenceSample {
                record_id,
                feeder_id: feeder_id.to_string(),
                forecast_years: window.collect(),
                steps,
                targets,
            });
            record_id += 1;
        }
    }
    Ok(samples)
}

/// A record-level train/test partition.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<SequenceSample>,
    pub test: Vec<SequenceSample>,
    pub seed: u64,
}

/// Seeded shuffle-then-partition by record. The train side takes
/// `floor(ratio · total)` records, so 1997 records at 0.8 give 1597/400.
pub fn split_dataset(samples: Vec<SequenceSample>, ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if samples.is_empty() {
        return Err(Error::domain("cannot split an empty sample set"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::domain(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = seed_stream(seed, STREAM_SPLIT);
    order.shuffle(&mut rng);
    let n_train = (ratio * samples.len() as f64).floor() as usize;
    let train_idx: BTreeSet<usize> = order[..n_train].iter().copied().collect();
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(samples.len() - n_train);
    for (i, sample) in samples.into_iter().enumerate() {
        if train_idx.contains(&i) {
            train.push(sample);
        } else {
            test.push(sample);
        }
    }
    Ok(DatasetSplit { train, test, seed })
}
