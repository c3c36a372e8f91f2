//! Accuracy and timing evaluation: mean absolute percentage error,
//! threshold cumulative percentages, error histograms, and per-model
//! reports that merge into a comparison grid.
//!
//! All accuracy numbers are computed on denormalized amperes, never on
//! normalized values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::baselines::ar2::{fit_ar2, forecast_ar2, Ar2Model};
use crate::baselines::bottom_up_forecast;
use crate::data::{FeederYearRecord, Season, SequenceSample};
use crate::document::ModelSpec;
use crate::error::{Error, Result};
use crate::pipeline::FeaturePipeline;

/// Per-record absolute percentage errors: `|Aᵢ − Fᵢ| / Aᵢ × 100`.
pub fn percentage_errors(actuals: &[f64], forecasts: &[f64]) -> Result<Vec<f64>> {
    if actuals.is_empty() {
        return Err(Error::domain("no records to score"));
    }
    if actuals.len() != forecasts.len() {
        return Err(Error::shape(format!(
            "{} actuals against {} forecasts",
            actuals.len(),
            forecasts.len()
        )));
    }
    actuals
        .iter()
        .zip(forecasts)
        .enumerate()
        .map(|(i, (&a, &f))| {
            if !(a > 0.0) {
                return Err(Error::domain(format!(
                    "record {i}: actual peak {a} is not positive; percentage error undefined"
                )));
            }
            if !f.is_finite() {
                return Err(Error::domain(format!("record {i}: forecast {f} is not finite")));
            }
            Ok((a - f).abs() / a * 100.0)
        })
        .collect()
}

/// Mean absolute percentage error over records, in percent.
pub fn mape(actuals: &[f64], forecasts: &[f64]) -> Result<f64> {
    let errors = percentage_errors(actuals, forecasts)?;
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// Percentage of records with error at or below the threshold.
pub fn cumulative_within(errors: &[f64], threshold: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::domain("no errors to threshold"));
    }
    let within = errors.iter().filter(|&&e| e <= threshold).count();
    Ok(100.0 * within as f64 / errors.len() as f64)
}

/// Half-open error bins `[i·w, (i+1)·w)` from zero through the largest
/// error; counts always sum to the record count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn from_errors(errors: &[f64], bin_width: f64) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::domain(format!("bin width {bin_width} must be positive")));
        }
        if errors.is_empty() {
            log::warn!("building a histogram over zero records");
            return Ok(Histogram {
                bin_width,
                counts: Vec::new(),
            });
        }
        let mut counts = Vec::new();
        for (i, &e) in errors.iter().enumerate() {
            if !(e >= 0.0) {
                return Err(Error::domain(format!(
                    "error {i} is {e}; percentage errors are nonnegative"
                )));
            }
            let bin = (e / bin_width).floor() as usize;
            if counts.len() <= bin {
                counts.resize(bin + 1, 0);
            }
            counts[bin] += 1;
        }
        Ok(Histogram { bin_width, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `[lo, hi)` edges of bin `i`.
    pub fn edges(&self, i: usize) -> (f64, f64) {
        (i as f64 * self.bin_width, (i + 1) as f64 * self.bin_width)
    }
}

/// One model's evaluation on one record set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub season: Option<Season>,
    /// Per-record absolute percentage errors, in record order.
    pub errors: Vec<f64>,
    pub mape: f64,
    pub cumulative_within_10: f64,
    pub histogram: Histogram,
    /// Wall-clock seconds spent in the train call; absent for untrained
    /// baselines and for re-evaluations of stored models (keeps
    /// re-evaluation output byte-identical).
    pub training_time_seconds: Option<f64>,
    pub record_count: usize,
}

impl EvalReport {
    pub fn new(
        label: &str,
        season: Option<Season>,
        actuals: &[f64],
        forecasts: &[f64],
        bin_width: f64,
        training_time_seconds: Option<f64>,
    ) -> Result<Self> {
        let errors = percentage_errors(actuals, forecasts)?;
        let mape = errors.iter().sum::<f64>() / errors.len() as f64;
        let cumulative_within_10 = cumulative_within(&errors, 10.0)?;
        let histogram = Histogram::from_errors(&errors, bin_width)?;
        Ok(EvalReport {
            label: label.to_string(),
            season,
            record_count: errors.len(),
            errors,
            mape,
            cumulative_within_10,
            histogram,
            training_time_seconds,
        })
    }

    pub fn check(&self) -> Result<()> {
        if self.errors.len() != self.record_count {
            return Err(Error::consistency(format!(
                "report {}: {} errors for {} records",
                self.label,
                self.errors.len(),
                self.record_count
            )));
        }
        let mean = self.errors.iter().sum::<f64>() / self.errors.len().max(1) as f64;
        if (mean - self.mape).abs() > 1e-9 {
            return Err(Error::consistency(format!(
                "report {}: stored mean {} disagrees with errors ({mean})",
                self.label, self.mape
            )));
        }
        if !(0.0..=100.0).contains(&self.cumulative_within_10) {
            return Err(Error::consistency(format!(
                "report {}: cumulative percentage {} outside [0, 100]",
                self.label, self.cumulative_within_10
            )));
        }
        if self.histogram.total() != self.record_count as u64 {
            return Err(Error::consistency(format!(
                "report {}: histogram counts {} records, report has {}",
                self.label,
                self.histogram.total(),
                self.record_count
            )));
        }
        Ok(())
    }

    /// Human-readable block, aligned for terminals.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let season = self
            .season
            .map(|s| format!(" [{s}]"))
            .unwrap_or_default();
        out.push_str(&format!("model: {}{season}\n", self.label));
        out.push_str(&format!("  records              {}\n", self.record_count));
        out.push_str(&format!("  MAPE                 {:.4} %\n", self.mape));
        out.push_str(&format!(
            "  within 10% error     {:.1} %\n",
            self.cumulative_within_10
        ));
        match self.training_time_seconds {
            Some(t) => out.push_str(&format!("  training time        {t:.2} s\n")),
            None => out.push_str("  training time        -\n"),
        }
        out.push_str(&format!("  histogram ({}% bins)\n", self.histogram.bin_width));
        for (i, &count) in self.histogram.counts.iter().enumerate() {
            if count > 0 {
                let (lo, hi) = self.histogram.edges(i);
                out.push_str(&format!("    [{lo:5.1}, {hi:5.1})   {count}\n"));
            }
        }
        out
    }
}

/// Merges reports into one aligned grid, one row per model.
pub fn comparison_grid(reports: &[EvalReport]) -> String {
    let label_width = reports
        .iter()
        .map(|r| r.label.len())
        .max()
        .unwrap_or(5)
        .max("model".len());
    let mut out = String::new();
    out.push_str(&format!(
        "{:<label_width$}  {:>9}  {:>9}  {:>9}  {:>8}\n",
        "model", "MAPE(%)", "<=10%(%)", "time(s)", "records"
    ));
    for r in reports {
        let time = r
            .training_time_seconds
            .map(|t| format!("{t:.2}"))
            .unwrap_or_else(|| "-".to_string());
        out.push_str(&format!(
            "{:<label_width$}  {:>9.4}  {:>9.1}  {:>9}  {:>8}\n",
            r.label, r.mape, r.cumulative_within_10, time, r.record_count
        ));
    }
    out
}

fn actuals_of(pipeline: &FeaturePipeline, test: &[SequenceSample]) -> Result<Vec<f64>> {
    test.iter()
        .map(|s| {
            let normalized = *s
                .targets
                .last()
                .ok_or_else(|| Error::shape(format!("record {} has no targets", s.record_id)))?;
            Ok(pipeline.denormalize_peak(normalized))
        })
        .collect()
}

/// Scores a trained network (sequence or feed-forward) on engineered test
/// records. Accuracy is always measured on the final forecast year, in
/// amperes.
pub fn evaluate_model(
    model: &ModelSpec,
    pipeline: &FeaturePipeline,
    test: &[SequenceSample],
    label: &str,
    season: Option<Season>,
    bin_width: f64,
    training_time_seconds: Option<f64>,
) -> Result<EvalReport> {
    let actuals = actuals_of(pipeline, test)?;
    let forecasts = test
        .iter()
        .map(|s| Ok(pipeline.denormalize_peak(model.predict_window(&s.steps)?)))
        .collect::<Result<Vec<f64>>>()?;
    EvalReport::new(label, season, &actuals, &forecasts, bin_width, training_time_seconds)
}

/// Scores the bottom-up baseline on the same engineered records: final
/// step's previous-year peak plus its large-customer change, both
/// recovered to amperes.
pub fn evaluate_bottom_up(
    pipeline: &FeaturePipeline,
    test: &[SequenceSample],
    season: Option<Season>,
    bin_width: f64,
) -> Result<EvalReport> {
    let actuals = actuals_of(pipeline, test)?;
    let forecasts = test
        .iter()
        .map(|s| {
            let last = s
                .steps
                .last()
                .ok_or_else(|| Error::shape(format!("record {} has no steps", s.record_id)))?;
            let prev = pipeline.prev_peak_of_step(last)?;
            let change = pipeline.large_customer_of_step(last)?;
            bottom_up_forecast(prev, change)
        })
        .collect::<Result<Vec<f64>>>()?;
    EvalReport::new("bottom-up", season, &actuals, &forecasts, bin_width, None)
}

/// Scores the autoregressive baseline: for each test record, fits an
/// order-2 model on the feeder's consecutive peak history before the
/// record's final year and forecasts one step. Records whose feeder lacks
/// the five consecutive prior years needed for a fit are skipped with a
/// warning.
pub fn evaluate_ar2(
    records: &[FeederYearRecord],
    test: &[SequenceSample],
    season: Option<Season>,
    bin_width: f64,
) -> Result<EvalReport> {
    let mut by_feeder: BTreeMap<&str, BTreeMap<i32, f64>> = BTreeMap::new();
    for rec in records {
        by_feeder
            .entry(rec.feeder_id.as_str())
            .or_default()
            .insert(rec.year, rec.peak_demand);
    }
    let mut fits: BTreeMap<(String, i32), Ar2Model> = BTreeMap::new();
    let mut actuals = Vec::new();
    let mut forecasts = Vec::new();
    let mut skipped = 0usize;
    for sample in test {
        let final_year = *sample
            .forecast_years
            .last()
            .ok_or_else(|| Error::shape(format!("record {} has no years", sample.record_id)))?;
        let Some(years) = by_feeder.get(sample.feeder_id.as_str()) else {
            return Err(Error::consistency(format!(
                "record {} references unknown feeder {}",
                sample.record_id, sample.feeder_id
            )));
        };
        let Some(&actual) = years.get(&final_year) else {
            return Err(Error::consistency(format!(
                "feeder {} has no actual peak for {final_year}",
                sample.feeder_id
            )));
        };
        // longest consecutive run ending the year before the forecast year
        let mut series = Vec::new();
        let mut y = final_year - 1;
        while let Some(&peak) = years.get(&y) {
            series.push(peak);
            y -= 1;
        }
        series.reverse();
        if series.len() < 5 {
            skipped += 1;
            continue;
        }
        let key = (sample.feeder_id.clone(), final_year);
        let model = match fits.get(&key) {
            Some(m) => *m,
            None => {
                let m = fit_ar2(&series)?;
                fits.insert(key, m);
                m
            }
        };
        let forecast = forecast_ar2(&model, series[series.len() - 2], series[series.len() - 1], 1)[0];
        actuals.push(actual);
        forecasts.push(forecast);
    }
    if skipped > 0 {
        log::warn!("autoregressive baseline skipped {skipped} records with short history");
    }
    if actuals.is_empty() {
        return Err(Error::domain(
            "no test record has enough history for an autoregressive fit",
        ));
    }
    EvalReport::new("autoregressive", season, &actuals, &forecasts, bin_width, None)
}
