//! Multi-year forecasting: conservative temperature scenarios and chained
//! window substitution.
//!
//! Long-term forecasts fix future temperatures at a conservative scenario
//! value (historical extreme plus a signed safety margin) so weather
//! variance doesn't leak into multi-year planning numbers. Forecasting year
//! Y+2 and beyond needs peak values that don't exist yet;
//! [`chain_forecast`] substitutes earlier chain outputs for the missing
//! actuals, window by window.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{FeederYearRecord, RegionalTable, RegionalYearRecord, Season};
use crate::error::{Error, Result};
use crate::pipeline::FeaturePipeline;

/// Historical extreme plus a signed margin: maximum for summer, minimum for
/// winter. The caller picks the margin's sign (a conservative winter margin
/// is negative).
pub fn normalize_temperature_scenario(
    history: &[f64],
    season: Season,
    margin: f64,
) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::domain("temperature history is empty"));
    }
    if history.iter().any(|t| !t.is_finite()) || !margin.is_finite() {
        return Err(Error::domain("non-finite temperature or margin"));
    }
    let extreme = match season {
        Season::Summer => history.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        Season::Winter => history.iter().cloned().fold(f64::INFINITY, f64::min),
    };
    Ok(extreme + margin)
}

/// Future economic assumptions for scenario extension.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum EconScenario {
    /// Repeat the last actual year's values for every future year.
    RepeatLast,
    /// Explicit values, one row per future year, in regional column order.
    Rows(Vec<Vec<f64>>),
}

/// Extends a regional table `horizon` years past its last actual year: the
/// scenario temperature on every future year (so the temperature change is
/// `scenario − last actual` in the first future year and 0 after), econ
/// values per the scenario. Returns the extended table and the scenario
/// temperature.
pub fn build_scenario(
    regional: &RegionalTable,
    season: Season,
    margin: f64,
    horizon: usize,
    econ: &EconScenario,
) -> Result<(RegionalTable, f64)> {
    let temps: Vec<f64> = regional.rows.iter().map(|r| r.temperature).collect();
    let scenario_temp = normalize_temperature_scenario(&temps, season, margin)?;
    if horizon == 0 {
        return Ok((regional.clone(), scenario_temp));
    }
    let last = regional
        .rows
        .last()
        .expect("nonempty table: temperature history was nonempty");
    let last_year = last.year;
    let mut rows = regional.rows.clone();
    for j in 1..=horizon {
        let econ_row = match econ {
            EconScenario::RepeatLast => last.econ.clone(),
            EconScenario::Rows(all) => all
                .get(j - 1)
                .ok_or_else(|| {
                    Error::shape(format!(
                        "economic scenario supplies {} rows for a {horizon}-year horizon",
                        all.len()
                    ))
                })?
                .clone(),
        };
        if econ_row.len() != regional.econ_columns.len() {
            return Err(Error::shape(format!(
                "economic scenario row has {} values for {} columns",
                econ_row.len(),
                regional.econ_columns.len()
            )));
        }
        rows.push(RegionalYearRecord {
            year: last_year + j as i32,
            econ: econ_row,
            temperature: scenario_temp,
            temperature_change: None,
        });
    }
    let table = RegionalTable::new(regional.econ_columns.clone(), rows)?;
    Ok((table, scenario_temp))
}

/// One chained forecast value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YearForecast {
    pub year: i32,
    pub peak: f64,
}

fn future_record(template: &FeederYearRecord, year: i32) -> FeederYearRecord {
    FeederYearRecord {
        feeder_id: template.feeder_id.clone(),
        year,
        peak_demand: template.peak_demand,
        residential_pct: template.residential_pct,
        commercial_pct: template.commercial_pct,
        industrial_pct: template.industrial_pct,
        // future large-customer changes are unknowable; assume none unless
        // the history is edited to carry planned projects
        large_customer_net_change: 0.0,
        der_growth: template.der_growth,
        ev_growth: template.ev_growth,
    }
}

/// Forecasts `horizon` consecutive years past the feeder's last actual
/// year. `predict` consumes one engineered window (n_steps step vectors)
/// and returns the normalized final-year peak. Each window substitutes
/// earlier chain outputs for future years' peaks; composition and growth
/// features hold at their last actual values, future large-customer change
/// is taken as zero.
pub fn chain_forecast<P>(
    mut predict: P,
    pipeline: &FeaturePipeline,
    history: &[FeederYearRecord],
    regional: &RegionalTable,
    horizon: usize,
) -> Result<Vec<YearForecast>>
where
    P: FnMut(&[Vec<f64>]) -> Result<f64>,
{
    if horizon == 0 {
        return Ok(Vec::new());
    }
    let Some(first) = history.first() else {
        return Err(Error::domain("feeder history is empty"));
    };
    let feeder_id = first.feeder_id.clone();
    let mut by_year: BTreeMap<i32, FeederYearRecord> = BTreeMap::new();
    for rec in history {
        if rec.feeder_id != feeder_id {
            return Err(Error::consistency(format!(
                "history mixes feeders {feeder_id} and {}",
                rec.feeder_id
            )));
        }
        if by_year.insert(rec.year, rec.clone()).is_some() {
            return Err(Error::consistency(format!(
                "feeder {feeder_id} has two records for year {}",
                rec.year
            )));
        }
    }
    let (&last_actual, last_rec) = by_year.last_key_value().expect("nonempty history");
    let template = last_rec.clone();
    let n = pipeline.n_steps as i32;
    for y in (last_actual - n + 1)..=last_actual {
        if !by_year.contains_key(&y) {
            return Err(Error::domain(format!(
                "feeder {feeder_id} needs actual years {}..={last_actual} to seed the first window; {y} is missing",
                last_actual - n + 1
            )));
        }
    }

    let mut out = Vec::with_capacity(horizon);
    for j in 1..=horizon as i32 {
        let f_year = last_actual + j;
        let mut steps = Vec::with_capacity(pipeline.n_steps);
        for y in (f_year - n + 1)..=f_year {
            let prev = by_year.get(&(y - 1)).ok_or_else(|| {
                Error::domain(format!(
                    "feeder {feeder_id}: no features for year {} (window for {f_year})",
                    y - 1
                ))
            })?;
            let current = match by_year.get(&y) {
                Some(rec) => rec.clone(),
                None => future_record(&template, y),
            };
            let reg = regional.get(y).ok_or_else(|| {
                Error::domain(format!(
                    "regional scenario does not cover year {y}; extend it to the forecast horizon"
                ))
            })?;
            let raw = pipeline.raw_schema.assemble_step(prev, &current, reg)?;
            steps.push(pipeline.transform_step(&raw)?);
        }
        let normalized = predict(&steps)?;
        let peak = pipeline.denormalize_peak(normalized);
        if !peak.is_finite() {
            return Err(Error::numeric(
                "chained forecast",
                format!("non-finite peak for {feeder_id} year {f_year}"),
            ));
        }
        if peak <= 0.0 {
            log::warn!("chained forecast for {feeder_id} year {f_year} is non-positive ({peak} A)");
        }
        let mut rec = future_record(&template, f_year);
        rec.peak_demand = peak;
        by_year.insert(f_year, rec);
        out.push(YearForecast { year: f_year, peak });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{engineer, EngineerConfig};
    use approx::assert_abs_diff_eq;

    #[test]
    fn scenario_temperature_hand_cases() {
        assert_eq!(
            normalize_temperature_scenario(&[31.0, 35.0, 33.5], Season::Summer, 1.0).unwrap(),
            36.0
        );
        assert_eq!(
            normalize_temperature_scenario(&[31.0, 35.0], Season::Summer, 0.0).unwrap(),
            35.0
        );
        assert_eq!(
            normalize_temperature_scenario(&[-30.0, -12.0, -25.5], Season::Winter, -1.0).unwrap(),
            -31.0
        );
        assert!(matches!(
            normalize_temperature_scenario(&[], Season::Summer, 1.0),
            Err(Error::Domain(_))
        ));
    }

    fn small_regional() -> RegionalTable {
        let rows = (2000..=2010)
            .map(|y| RegionalYearRecord {
                year: y,
                econ: vec![2.0 + (y % 4) as f64 * 0.3, 1.1],
                temperature: 30.0 + (y % 5) as f64,
                temperature_change: None,
            })
            .collect();
        RegionalTable::new(vec!["gdp_growth".into(), "pop_growth".into()], rows).unwrap()
    }

    #[test]
    fn scenario_extension_layout() {
        let regional = small_regional();
        let (ext, scen) = build_scenario(&regional, Season::Summer, 1.0, 3, &EconScenario::RepeatLast).unwrap();
        assert_eq!(scen, 35.0); // max temp 34 (y%5==4) + 1
        assert_eq!(ext.rows.len(), regional.rows.len() + 3);
        let y2011 = ext.get(2011).unwrap();
        let y2012 = ext.get(2012).unwrap();
        assert_eq!(y2011.temperature, 35.0);
        assert_eq!(y2011.temperature_change, Some(35.0 - regional.get(2010).unwrap().temperature));
        assert_eq!(y2012.temperature_change, Some(0.0));
        assert_eq!(y2011.econ, regional.get(2010).unwrap().econ);

        let rows = EconScenario::Rows(vec![vec![3.0, 1.5], vec![3.1, 1.6], vec![3.2, 1.7]]);
        let (ext2, _) = build_scenario(&regional, Season::Summer, 1.0, 3, &rows).unwrap();
        assert_eq!(ext2.get(2012).unwrap().econ, vec![3.1, 1.6]);

        let short = EconScenario::Rows(vec![vec![3.0, 1.5]]);
        assert!(build_scenario(&regional, Season::Summer, 1.0, 3, &short).is_err());
    }

    fn fixture() -> (Vec<FeederYearRecord>, RegionalTable, FeaturePipeline) {
        let mut feeders = Vec::new();
        for i in 0..4 {
            for year in 2000..=2010 {
                feeders.push(FeederYearRecord {
                    feeder_id: format!("f{i}"),
                    year,
                    peak_demand: 150.0 + 20.0 * i as f64 + 4.0 * (year - 2000) as f64,
                    residential_pct: 0.5,
                    commercial_pct: 0.3,
                    industrial_pct: 0.2,
                    large_customer_net_change: (year % 3) as f64,
                    der_growth: None,
                    ev_growth: None,
                });
            }
        }
        let regional = small_regional();
        let ds = engineer(&feeders, &regional, &[], &EngineerConfig::default()).unwrap();
        (feeders, regional, ds.pipeline)
    }

    #[test]
    fn zero_horizon_is_empty() {
        let (feeders, regional, pipeline) = fixture();
        let history: Vec<_> = feeders.iter().filter(|f| f.feeder_id == "f0").cloned().collect();
        let out = chain_forecast(|_| Ok(0.5), &pipeline, &history, &regional, 0).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn one_year_chain_equals_direct_window_prediction() {
        let (feeders, regional, pipeline) = fixture();
        let history: Vec<_> = feeders.iter().filter(|f| f.feeder_id == "f0").cloned().collect();
        let (ext, _) = build_scenario(&regional, Season::Summer, 1.0, 1, &EconScenario::RepeatLast).unwrap();

        let mut seen_window: Vec<Vec<f64>> = Vec::new();
        let out = chain_forecast(
            |steps| {
                seen_window = steps.to_vec();
                Ok(steps.last().unwrap()[0] + 0.1)
            },
            &pipeline,
            &history,
            &ext,
            1,
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].year, 2011);

        // rebuild the same window by hand: years 2009..=2011
        let rec = |y: i32| history.iter().find(|r| r.year == y).unwrap();
        let mut expect = Vec::new();
        for y in 2009..=2011 {
            let current = if y == 2011 { future_record(rec(2010), 2011) } else { rec(y).clone() };
            let prev = rec(y - 1);
            let raw = pipeline.raw_schema.assemble_step(prev, &current, ext.get(y).unwrap()).unwrap();
            expect.push(pipeline.transform_step(&raw).unwrap());
        }
        assert_eq!(seen_window, expect);
        assert_abs_diff_eq!(
            out[0].peak,
            pipeline.denormalize_peak(expect.last().unwrap()[0] + 0.1),
            epsilon = 1e-12
        );
    }

    #[test]
    fn chained_windows_substitute_prior_outputs() {
        let (feeders, regional, pipeline) = fixture();
        let history: Vec<_> = feeders.iter().filter(|f| f.feeder_id == "f1").cloned().collect();
        let (ext, _) = build_scenario(&regional, Season::Summer, 1.0, 3, &EconScenario::RepeatLast).unwrap();

        let mut windows: Vec<Vec<Vec<f64>>> = Vec::new();
        let out = chain_forecast(
            |steps| {
                windows.push(steps.to_vec());
                Ok(steps.last().unwrap()[0] * 1.02 + 0.01)
            },
            &pipeline,
            &history,
            &ext,
            3,
        )
        .unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out.iter().map(|f| f.year).collect::<Vec<_>>(), vec![2011, 2012, 2013]);

        // third window covers 2011..=2013: its first two steps' previous-year
        // peaks must be the chain outputs for 2010(actual)/2011 and 2012
        let third = &windows[2];
        let prev_peak_2011 = pipeline.prev_peak_of_step(&third[1]).unwrap();
        let prev_peak_2012 = pipeline.prev_peak_of_step(&third[2]).unwrap();
        assert_abs_diff_eq!(prev_peak_2011, out[0].peak, epsilon = 1e-9);
        assert_abs_diff_eq!(prev_peak_2012, out[1].peak, epsilon = 1e-9);
    }

    #[test]
    fn insufficient_history_or_scenario_errors() {
        let (feeders, regional, pipeline) = fixture();
        let history: Vec<_> = feeders
            .iter()
            .filter(|f| f.feeder_id == "f0" && f.year >= 2009)
            .cloned()
            .collect();
        // only 2 actual years; the first window needs 3
        assert!(matches!(
            chain_forecast(|_| Ok(0.5), &pipeline, &history, &regional, 1),
            Err(Error::Domain(_))
        ));

        // full history but un-extended regional table: year 2011 missing
        let full: Vec<_> = feeders.iter().filter(|f| f.feeder_id == "f0").cloned().collect();
        assert!(matches!(
            chain_forecast(|_| Ok(0.5), &pipeline, &full, &regional, 1),
            Err(Error::Domain(_))
        ));
    }
}
