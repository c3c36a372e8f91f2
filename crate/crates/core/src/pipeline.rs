//! End-to-end feature engineering: virtual feeders, sample construction,
//! train/test split, then normalization and component reduction fitted on
//! training rows only.
//!
//! The fitted [`FeaturePipeline`] travels with every model document so
//! inference can run on raw feature vectors. Engineered steps keep the raw
//! column order but min-max normalize every column and replace the
//! reduced economic/population block with its leading principal
//! components. Peak-demand targets are normalized with the previous-peak
//! column's statistics, which keeps inputs and outputs on one scale and
//! makes predictions invertible to amperes.

use serde::{Deserialize, Serialize};

use crate::data::{
    build_sequence_samples, split_dataset, DatasetSplit, FeederYearRecord, RawSchema, RegionalTable,
    SampleBuildConfig, Season, SequenceSample, TransferEvent,
};
use crate::error::{Error, Result};
use crate::features::pca::{fit_pca, PcaTransform};
use crate::features::{apply_virtual_feeders, NormalizationStats, VirtualFeederGroup};
use crate::net::Mode;

/// Everything `engineer` needs besides the data itself.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EngineerConfig {
    pub season: Season,
    pub mode: Mode,
    pub n_steps: usize,
    /// Train fraction of the record-level split.
    pub split_ratio: f64,
    pub seed: u64,
    /// Explained-variance threshold for picking the component count.
    pub pve_threshold: f64,
    /// Names of the regional columns to reduce; empty means all of them.
    pub pca_columns: Vec<String>,
    pub include_der: bool,
    pub include_ev: bool,
}

impl Default for EngineerConfig {
    fn default() -> Self {
        EngineerConfig {
            season: Season::Summer,
            mode: Mode::ManyToOne,
            n_steps: 3,
            split_ratio: 0.8,
            seed: 0,
            pve_threshold: 0.95,
            pca_columns: Vec::new(),
            include_der: false,
            include_ev: false,
        }
    }
}

/// Fitted per-season transformation from raw step vectors to model inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub raw_schema: RawSchema,
    pub season: Season,
    pub mode: Mode,
    pub n_steps: usize,
    /// Min-max stats over all raw step columns, fitted on training rows.
    pub normalization: NormalizationStats,
    /// Component transform over the normalized values of
    /// `pca_column_indices`; `None` when no columns are reduced.
    pub pca: Option<PcaTransform>,
    /// Raw-step indices (ascending) of the columns feeding the reduction.
    pub pca_column_indices: Vec<usize>,
    pub pve_threshold: f64,
}

impl FeaturePipeline {
    pub fn check(&self) -> Result<()> {
        let width = self.raw_schema.width();
        if self.normalization.width() != width {
            return Err(Error::shape(format!(
                "normalization covers {} columns, raw schema has {width}",
                self.normalization.width()
            )));
        }
        self.normalization.check()?;
        if self.n_steps == 0 {
            return Err(Error::domain("pipeline n_steps must be positive"));
        }
        for w in self.pca_column_indices.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::consistency(
                    "reduced-column indices must be strictly ascending",
                ));
            }
        }
        if let Some(&last) = self.pca_column_indices.last() {
            if last >= width {
                return Err(Error::shape(format!(
                    "reduced-column index {last} outside raw width {width}"
                )));
            }
        }
        match &self.pca {
            Some(t) => {
                t.check()?;
                if t.input_width() != self.pca_column_indices.len() {
                    return Err(Error::shape(format!(
                        "component transform takes {} columns, {} indices declared",
                        t.input_width(),
                        self.pca_column_indices.len()
                    )));
                }
                if self.pca_column_indices.is_empty() {
                    return Err(Error::consistency(
                        "component transform present but no columns declared",
                    ));
                }
            }
            None => {
                if !self.pca_column_indices.is_empty() {
                    return Err(Error::consistency(
                        "reduced columns declared but no component transform fitted",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn selected_components(&self) -> usize {
        self.pca.as_ref().map(|t| t.selected_count).unwrap_or(0)
    }

    /// Width of an engineered step vector.
    pub fn engineered_width(&self) -> usize {
        self.raw_schema.width() - self.pca_column_indices.len() + self.selected_components()
    }

    /// Engineered column names: raw names, with the reduced block replaced
    /// in place by `ep1..epT` at the position of its first column.
    pub fn engineered_columns(&self) -> Vec<String> {
        let raw_names = self.raw_schema.column_names();
        let mut out = Vec::with_capacity(self.engineered_width());
        for (idx, name) in raw_names.iter().enumerate() {
            match self.pca_column_indices.iter().position(|&i| i == idx) {
                None => out.push(name.clone()),
                Some(0) => out.extend((1..=self.selected_components()).map(|c| format!("ep{c}"))),
                Some(_) => {}
            }
        }
        out
    }

    /// Engineered position of a raw column, or `None` if the column was
    /// folded into the components.
    pub fn engineered_index_of(&self, raw_idx: usize) -> Option<usize> {
        if self.pca_column_indices.contains(&raw_idx) {
            return None;
        }
        let first_reduced = self.pca_column_indices.first().copied();
        let mut pos = 0;
        for idx in 0..raw_idx {
            if self.pca_column_indices.contains(&idx) {
                if first_reduced == Some(idx) {
                    pos += self.selected_components();
                }
            } else {
                pos += 1;
            }
        }
        Some(pos)
    }

    /// Normalizes a raw step and substitutes the component projections for
    /// the reduced block.
    pub fn transform_step(&self, raw_step: &[f64]) -> Result<Vec<f64>> {
        let normalized = self.normalization.apply_row(raw_step)?;
        let Some(pca) = &self.pca else {
            return Ok(normalized);
        };
        let reduced_input: Vec<f64> = self
            .pca_column_indices
            .iter()
            .map(|&i| normalized[i])
            .collect();
        let projected = pca.project_row(&reduced_input)?;
        let first_reduced = self.pca_column_indices[0];
        let mut out = Vec::with_capacity(self.engineered_width());
        for (idx, &v) in normalized.iter().enumerate() {
            if self.pca_column_indices.contains(&idx) {
                if idx == first_reduced {
                    out.extend_from_slice(&projected);
                }
            } else {
                out.push(v);
            }
        }
        Ok(out)
    }

    /// Peak demand and the previous-peak input column share scale; targets
    /// normalize through that column's stats.
    pub fn normalize_peak(&self, amperes: f64) -> f64 {
        self.normalization.apply_value(RawSchema::IDX_PREV_PEAK, amperes)
    }

    pub fn denormalize_peak(&self, normalized: f64) -> f64 {
        self.normalization.invert_value(RawSchema::IDX_PREV_PEAK, normalized)
    }

    /// Recovers the raw previous-year peak (amperes) from an engineered step.
    pub fn prev_peak_of_step(&self, engineered_step: &[f64]) -> Result<f64> {
        let idx = self
            .engineered_index_of(RawSchema::IDX_PREV_PEAK)
            .ok_or_else(|| Error::consistency("previous-peak column was folded into components"))?;
        let v = *engineered_step.get(idx).ok_or_else(|| {
            Error::shape(format!(
                "engineered step of {} values, expected {}",
                engineered_step.len(),
                self.engineered_width()
            ))
        })?;
        Ok(self.denormalize_peak(v))
    }

    /// Recovers the raw large-customer net change (amperes) from an
    /// engineered step.
    pub fn large_customer_of_step(&self, engineered_step: &[f64]) -> Result<f64> {
        let raw_idx = self.raw_schema.idx_large_customer();
        let idx = self
            .engineered_index_of(raw_idx)
            .ok_or_else(|| Error::consistency("large-customer column was folded into components"))?;
        let v = *engineered_step.get(idx).ok_or_else(|| {
            Error::shape(format!(
                "engineered step of {} values, expected {}",
                engineered_step.len(),
                self.engineered_width()
            ))
        })?;
        Ok(self.normalization.invert_value(raw_idx, v))
    }

    /// Transforms a raw sample: steps engineered, targets normalized.
    pub fn transform_sample(&self, sample: &SequenceSample) -> Result<SequenceSample> {
        let steps = sample
            .steps
            .iter()
            .map(|s| self.transform_step(s))
            .collect::<Result<Vec<_>>>()?;
        let targets = sample.targets.iter().map(|&t| self.normalize_peak(t)).collect();
        Ok(SequenceSample {
            record_id: sample.record_id,
            feeder_id: sample.feeder_id.clone(),
            forecast_years: sample.forecast_years.clone(),
            steps,
            targets,
        })
    }
}

/// The serializable product of `engineer`: the fitted pipeline plus the
/// engineered train/test records and the virtual-feeder groups that were
/// formed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EngineeredDataset {
    pub pipeline: FeaturePipeline,
    pub split: DatasetSplit,
    pub groups: Vec<VirtualFeederGroup>,
}

/// Runs the full engineering flow on one season's data. Normalization and
/// the component transform are fitted on training rows only, so the test
/// side never leaks into the fitted statistics.
pub fn engineer(
    feeders: &[FeederYearRecord],
    regional: &RegionalTable,
    transfers: &[TransferEvent],
    config: &EngineerConfig,
) -> Result<EngineeredDataset> {
    if !(config.pve_threshold > 0.0 && config.pve_threshold <= 1.0) {
        return Err(Error::domain(format!(
            "variance threshold {} outside (0, 1]",
            config.pve_threshold
        )));
    }
    let (records, groups) = apply_virtual_feeders(feeders, transfers)?;
    let raw_schema = RawSchema {
        econ_columns: regional.econ_columns.clone(),
        include_der: config.include_der,
        include_ev: config.include_ev,
    };
    let samples = build_sequence_samples(
        &records,
        regional,
        &raw_schema,
        &SampleBuildConfig {
            mode: config.mode,
            n_steps: config.n_steps,
        },
    )?;
    let raw_split = split_dataset(samples, config.split_ratio, config.seed)?;
    if raw_split.train.is_empty() {
        return Err(Error::domain(
            "split produced an empty training side; more records or a larger ratio needed",
        ));
    }

    let train_rows: Vec<Vec<f64>> = raw_split
        .train
        .iter()
        .flat_map(|s| s.steps.iter().cloned())
        .collect();
    let normalization = NormalizationStats::fit(&train_rows)?;

    let pca_names: Vec<String> = if config.pca_columns.is_empty() {
        raw_schema.econ_columns.clone()
    } else {
        config.pca_columns.clone()
    };
    let mut pca_column_indices = Vec::with_capacity(pca_names.len());
    for name in &pca_names {
        let pos = raw_schema
            .econ_columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| {
                Error::consistency(format!(
                    "reduced column '{name}' is not a regional column (have: {})",
                    raw_schema.econ_columns.join(", ")
                ))
            })?;
        pca_column_indices.push(RawSchema::ECON_START + pos);
    }
    pca_column_indices.sort_unstable();
    pca_column_indices.dedup();

    let pca = if pca_column_indices.is_empty() {
        None
    } else {
        let mut matrix = ndarray::Array2::zeros((train_rows.len(), pca_column_indices.len()));
        for (i, row) in train_rows.iter().enumerate() {
            let normalized = normalization.apply_row(row)?;
            for (j, &col) in pca_column_indices.iter().enumerate() {
                matrix[[i, j]] = normalized[col];
            }
        }
        let mut transform = fit_pca(matrix.view())?;
        transform.select_by_pve(config.pve_threshold)?;
        Some(transform)
    };

    let pipeline = FeaturePipeline {
        raw_schema,
        season: config.season,
        mode: config.mode,
        n_steps: config.n_steps,
        normalization,
        pca,
        pca_column_indices,
        pve_threshold: config.pve_threshold,
    };
    pipeline.check()?;

    let transform_all = |samples: &[SequenceSample]| -> Result<Vec<SequenceSample>> {
        samples.iter().map(|s| pipeline.transform_sample(s)).collect()
    };
    let split = DatasetSplit {
        train: transform_all(&raw_split.train)?,
        test: transform_all(&raw_split.test)?,
        seed: raw_split.seed,
    };
    for sample in split.train.iter().chain(&split.test) {
        sample.check(config.mode, config.n_steps, pipeline.engineered_width())?;
    }
    Ok(EngineeredDataset {
        pipeline,
        split,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn feeder(id: &str, year: i32, peak: f64) -> FeederYearRecord {
        FeederYearRecord {
            feeder_id: id.to_string(),
            year,
            peak_demand: peak,
            residential_pct: 0.55 + 0.001 * (year % 7) as f64,
            commercial_pct: 0.25,
            industrial_pct: 0.2 - 0.001 * (year % 7) as f64,
            large_customer_net_change: ((year * 13) % 5) as f64 - 2.0,
            der_growth: None,
            ev_growth: None,
        }
    }

    fn regional(years: std::ops::RangeInclusive<i32>) -> RegionalTable {
        let rows = years
            .map(|y| crate::data::RegionalYearRecord {
                year: y,
                econ: vec![
                    2.0 + ((y * 7) % 11) as f64 * 0.4,
                    1.0 + ((y * 3) % 5) as f64 * 0.3,
                    0.8 + ((y * 5) % 7) as f64 * 0.2,
                ],
                temperature: 33.0 + ((y * 11) % 13) as f64 * 0.35,
                temperature_change: None,
            })
            .collect();
        RegionalTable::new(
            vec!["gdp_growth".into(), "employment_growth".into(), "population_growth".into()],
            rows,
        )
        .unwrap()
    }

    fn small_dataset() -> (Vec<FeederYearRecord>, RegionalTable) {
        let mut feeders = Vec::new();
        for i in 0..6 {
            let id = format!("f{i}");
            for year in 2000..=2014 {
                feeders.push(feeder(&id, year, 200.0 + 10.0 * i as f64 + (year - 2000) as f64 * 3.0));
            }
        }
        (feeders, regional(1999..=2014))
    }

    #[test]
    fn engineer_produces_consistent_artifacts() {
        let (feeders, regional) = small_dataset();
        let config = EngineerConfig::default();
        let ds = engineer(&feeders, &regional, &[], &config).unwrap();
        ds.pipeline.check().unwrap();
        // raw width: prev_peak + R + C + 3 econ + temp + tchg + LC = 9
        assert_eq!(ds.pipeline.raw_schema.width(), 9);
        let t = ds.pipeline.selected_components();
        assert!(t >= 1 && t <= 3);
        assert_eq!(ds.pipeline.engineered_width(), 9 - 3 + t);
        let names = ds.pipeline.engineered_columns();
        assert_eq!(names.len(), ds.pipeline.engineered_width());
        assert_eq!(names[0], "prev_peak");
        assert_eq!(names[3], "ep1");
        assert_eq!(names.last().unwrap(), "large_customer_net_change");
        // 6 feeders × 15 years → 12 windows each at n_steps=3 → 72 records
        let total = ds.split.train.len() + ds.split.test.len();
        assert_eq!(total, 72);
        assert_eq!(ds.split.train.len(), (0.8f64 * 72.0).floor() as usize);
        for s in ds.split.train.iter().chain(&ds.split.test) {
            s.check(config.mode, 3, ds.pipeline.engineered_width()).unwrap();
        }
    }

    #[test]
    fn engineered_values_round_trip_to_amperes() {
        let (feeders, regional) = small_dataset();
        let ds = engineer(&feeders, &regional, &[], &EngineerConfig::default()).unwrap();
        // pick a training record; its normalized target must invert to the
        // actual peak of its final forecast year
        let rec = &ds.split.train[0];
        let feeder_id = &rec.feeder_id;
        let final_year = *rec.forecast_years.last().unwrap();
        let actual = feeders
            .iter()
            .find(|f| &f.feeder_id == feeder_id && f.year == final_year)
            .unwrap()
            .peak_demand;
        let recovered = ds.pipeline.denormalize_peak(*rec.targets.last().unwrap());
        assert_abs_diff_eq!(recovered, actual, epsilon = 1e-9);

        // previous-year peak of step 0 recovers the year-before record
        let prev = feeders
            .iter()
            .find(|f| &f.feeder_id == feeder_id && f.year == rec.forecast_years[0] - 1)
            .unwrap()
            .peak_demand;
        let recovered_prev = ds.pipeline.prev_peak_of_step(&rec.steps[0]).unwrap();
        assert_abs_diff_eq!(recovered_prev, prev, epsilon = 1e-9);

        // large-customer recovery
        let lc = feeders
            .iter()
            .find(|f| &f.feeder_id == feeder_id && f.year == rec.forecast_years[0])
            .unwrap()
            .large_customer_net_change;
        let recovered_lc = ds.pipeline.large_customer_of_step(&rec.steps[0]).unwrap();
        assert_abs_diff_eq!(recovered_lc, lc, epsilon = 1e-9);
    }

    #[test]
    fn training_rows_only_set_the_statistics() {
        let (feeders, regional) = small_dataset();
        let ds = engineer(&feeders, &regional, &[], &EngineerConfig::default()).unwrap();
        // normalized training prev-peaks stay in [0,1]; at least the overall
        // min and max of the training side hit the endpoints
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &ds.split.train {
            for step in &s.steps {
                lo = lo.min(step[0]);
                hi = hi.max(step[0]);
            }
        }
        assert_abs_diff_eq!(lo, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn reduced_subset_keeps_other_columns() {
        let (feeders, regional) = small_dataset();
        let config = EngineerConfig {
            pca_columns: vec!["gdp_growth".into(), "employment_growth".into()],
            ..EngineerConfig::default()
        };
        let ds = engineer(&feeders, &regional, &[], &config).unwrap();
        let names = ds.pipeline.engineered_columns();
        assert!(names.contains(&"population_growth".to_string()));
        assert!(names.iter().any(|n| n == "ep1"));
        assert!(!names.contains(&"gdp_growth".to_string()));
        ds.pipeline.check().unwrap();

        let bad = EngineerConfig {
            pca_columns: vec!["no_such_column".into()],
            ..EngineerConfig::default()
        };
        assert!(matches!(
            engineer(&feeders, &regional, &[], &bad),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn engineering_is_deterministic() {
        let (feeders, regional) = small_dataset();
        let config = EngineerConfig::default();
        let a = engineer(&feeders, &regional, &[], &config).unwrap();
        let b = engineer(&feeders, &regional, &[], &config).unwrap();
        assert_eq!(a.pipeline, b.pipeline);
        assert_eq!(a.split.train, b.split.train);
        assert_eq!(a.split.test, b.split.test);
    }

    #[test]
    fn transfer_log_feeds_through() {
        let (feeders, regional) = small_dataset();
        let transfers = vec![TransferEvent {
            year: 2007,
            feeder_ids: vec!["f0".into(), "f1".into()],
        }];
        let ds = engineer(&feeders, &regional, &transfers, &EngineerConfig::default()).unwrap();
        assert_eq!(ds.groups.len(), 1);
        assert_eq!(ds.groups[0].virtual_id, "vf-f0+f1");
        let ids: std::collections::BTreeSet<&str> = ds
            .split
            .train
            .iter()
            .chain(&ds.split.test)
            .map(|s| s.feeder_id.as_str())
            .collect();
        assert!(ids.contains("vf-f0+f1"));
        assert!(!ids.contains("f0") && !ids.contains("f1"));
    }

    #[test]
    fn engineered_index_mapping() {
        let (feeders, regional) = small_dataset();
        let ds = engineer(&feeders, &regional, &[], &EngineerConfig::default()).unwrap();
        let p = &ds.pipeline;
        assert_eq!(p.engineered_index_of(0), Some(0));
        assert_eq!(p.engineered_index_of(1), Some(1));
        assert_eq!(p.engineered_index_of(2), Some(2));
        assert_eq!(p.engineered_index_of(3), None); // folded into components
        let t = p.selected_components();
        assert_eq!(p.engineered_index_of(6), Some(3 + t)); // temperature
        assert_eq!(
            p.engineered_index_of(p.raw_schema.idx_large_customer()),
            Some(3 + t + 2)
        );
    }
}
