//! Seeded synthetic grid generator: regional driver processes, per-feeder
//! annual peak-load histories, and load-transfer event injection.
//!
//! The load model is deliberately simple but has every hook the rest of the
//! toolkit exercises: peaks respond to composition-weighted economic growth
//! (with a lagged component and momentum, so multi-year context genuinely
//! helps), to the seasonal temperature extreme, and to occasional
//! large-customer connections; load transfers shift a constant block of load
//! between feeders from the event year onward, conserving the group total.
//!
//! Everything is a pure function of the seed. The regional process, each
//! feeder, and the transfer planner draw from their own RNG streams, so
//! generating feeders in parallel or reordering calls can never change the
//! output.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FeederYearRecord, RegionalTable, RegionalYearRecord, Season, TransferEvent};
use crate::error::{Error, Result};
use crate::rng::{
    seed_stream, STREAM_SYNTH_FEEDER_BASE, STREAM_SYNTH_REGIONAL, STREAM_SYNTH_TRANSFERS,
};

/// One regional economic/population indicator, expressed as an annual growth
/// percentage that tracks a shared business cycle plus its own noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EconProcess {
    pub name: String,
    /// Long-run mean of the growth percentage.
    pub drift: f64,
    /// Std-dev of the column's own noise, percentage points.
    pub volatility: f64,
    /// How strongly the column follows the shared cycle.
    pub cycle_loading: f64,
    /// How much of this driver's effect lands on residential load (the rest
    /// lands on commercial + industrial), in [0, 1].
    pub residential_affinity: f64,
}

/// A deterministic additive trend `start + step · t` for optional
/// DER/EV-growth columns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub start: f64,
    pub step: f64,
}

/// Full recipe for one synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_feeders: usize,
    pub years: usize,
    pub start_year: i32,
    /// Window length the generated history must support (bounds `years`).
    pub n_steps: usize,
    pub seed: u64,
    pub season: Season,

    // regional drivers
    pub econ: Vec<EconProcess>,
    /// AR(1) persistence of the shared business cycle, in [0, 1).
    pub cycle_persistence: f64,
    /// Std-dev of the shared-cycle innovations, percentage points.
    pub cycle_volatility: f64,
    /// Mean seasonal temperature extreme, °C.
    pub temperature_mean: f64,
    /// Std-dev of the yearly temperature extreme, °C.
    pub temperature_spread: f64,

    // feeder load model
    /// First-year weather-free peak, amperes, sampled uniformly per feeder.
    pub base_peak_range: (f64, f64),
    pub residential_range: (f64, f64),
    pub commercial_range: (f64, f64),
    /// Log-scale std-dev of the yearly composition random walk.
    pub composition_volatility: f64,
    /// Multiplier on the composition-weighted economic driver, per feeder.
    pub econ_sensitivity_range: (f64, f64),
    /// Amperes of peak per °C of temperature deviation, per feeder.
    pub temp_sensitivity_range: (f64, f64),
    /// Weight on last year's own growth rate, per feeder.
    pub momentum_range: (f64, f64),
    /// Share of the economic driver taken from the previous year instead of
    /// the forecast year, in [0, 1].
    pub lagged_driver_weight: f64,
    /// Std-dev of the additive yearly noise, amperes.
    pub noise_level: f64,
    /// Probability of a large-customer connection/disconnection per
    /// feeder-year.
    pub lc_event_rate: f64,
    /// Magnitude range of a large-customer change, amperes (sign is random).
    pub lc_magnitude_range: (f64, f64),

    // transfer planning
    /// Number of load-transfer events to plan.
    pub transfer_count: usize,
    /// Probability that an event involves three feeders instead of two.
    pub transfer_triple_share: f64,
    /// Transferred block as a fraction of the donor's smallest post-event
    /// peak, in (0, 1).
    pub transfer_fraction_range: (f64, f64),

    pub der_trend: Option<Trend>,
    pub ev_trend: Option<Trend>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_feeders: 60,
            years: 14,
            start_year: 2010,
            n_steps: 3,
            seed: 0,
            season: Season::Summer,
            econ: vec![
                EconProcess {
                    name: "gdp_growth".into(),
                    drift: 2.5,
                    volatility: 0.4,
                    cycle_loading: 1.2,
                    residential_affinity: 0.1,
                },
                EconProcess {
                    name: "employment_growth".into(),
                    drift: 1.2,
                    volatility: 0.3,
                    cycle_loading: 0.9,
                    residential_affinity: 0.45,
                },
                EconProcess {
                    name: "population_growth".into(),
                    drift: 1.0,
                    volatility: 0.15,
                    cycle_loading: 0.35,
                    residential_affinity: 0.9,
                },
            ],
            cycle_persistence: 0.35,
            cycle_volatility: 1.0,
            temperature_mean: 33.0,
            temperature_spread: 1.5,
            base_peak_range: (280.0, 650.0),
            residential_range: (0.25, 0.55),
            commercial_range: (0.15, 0.40),
            composition_volatility: 0.02,
            econ_sensitivity_range: (0.35, 0.8),
            temp_sensitivity_range: (2.5, 6.0),
            momentum_range: (0.45, 0.75),
            lagged_driver_weight: 0.7,
            noise_level: 3.5,
            lc_event_rate: 0.05,
            lc_magnitude_range: (15.0, 60.0),
            transfer_count: 12,
            transfer_triple_share: 0.25,
            transfer_fraction_range: (0.08, 0.25),
            der_trend: None,
            ev_trend: None,
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::domain(format!("{name} range ({lo}, {hi}) is invalid")));
    }
    Ok(())
}

impl SynthConfig {
    pub fn check(&self) -> Result<()> {
        if self.n_feeders < 1 {
            return Err(Error::domain("at least one feeder is required"));
        }
        if self.n_steps < 1 {
            return Err(Error::domain("window length must be at least 1"));
        }
        if self.years < self.n_steps + 2 {
            return Err(Error::domain(format!(
                "{} years cannot support windows of {} steps; need at least {}",
                self.years,
                self.n_steps,
                self.n_steps + 2
            )));
        }
        if self.econ.is_empty() {
            return Err(Error::domain("at least one economic driver is required"));
        }
        for p in &self.econ {
            if p.volatility < 0.0 {
                return Err(Error::domain(format!(
                    "driver {}: volatility must be nonnegative",
                    p.name
                )));
            }
            if !(0.0..=1.0).contains(&p.residential_affinity) {
                return Err(Error::domain(format!(
                    "driver {}: residential affinity {} outside [0, 1]",
                    p.name, p.residential_affinity
                )));
            }
        }
        for (name, v) in [
            ("cycle volatility", self.cycle_volatility),
            ("temperature spread", self.temperature_spread),
            ("composition volatility", self.composition_volatility),
            ("noise level", self.noise_level),
        ] {
            if v < 0.0 {
                return Err(Error::domain(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.cycle_persistence) {
            return Err(Error::domain("cycle persistence must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.lagged_driver_weight) {
            return Err(Error::domain("lagged driver weight must lie in [0, 1]"));
        }
        for (name, rate) in [
            ("large-customer event rate", self.lc_event_rate),
            ("transfer triple share", self.transfer_triple_share),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::domain(format!("{name} must lie in [0, 1], got {rate}")));
            }
        }
        check_range("base peak", self.base_peak_range)?;
        if self.base_peak_range.0 <= 0.0 {
            return Err(Error::domain("base peaks must be positive"));
        }
        check_range("residential share", self.residential_range)?;
        check_range("commercial share", self.commercial_range)?;
        for (name, (lo, hi)) in [
            ("residential share", self.residential_range),
            ("commercial share", self.commercial_range),
        ] {
            if lo <= 0.0 || hi >= 1.0 {
                return Err(Error::domain(format!("{name} range must lie inside (0, 1)")));
            }
        }
        if self.residential_range.1 + self.commercial_range.1 >= 0.98 {
            return Err(Error::domain(
                "residential + commercial maxima leave no industrial share",
            ));
        }
        check_range("economic sensitivity", self.econ_sensitivity_range)?;
        check_range("temperature sensitivity", self.temp_sensitivity_range)?;
        check_range("momentum", self.momentum_range)?;
        check_range("large-customer magnitude", self.lc_magnitude_range)?;
        if self.lc_magnitude_range.0 < 0.0 {
            return Err(Error::domain("large-customer magnitudes must be nonnegative"));
        }
        check_range("transfer fraction", self.transfer_fraction_range)?;
        if self.transfer_count > 0
            && !(self.transfer_fraction_range.0 > 0.0 && self.transfer_fraction_range.1 < 1.0)
        {
            return Err(Error::domain("transfer fractions must lie inside (0, 1)"));
        }
        for (name, trend) in [("der", self.der_trend), ("ev", self.ev_trend)] {
            if let Some(t) = trend {
                let last = t.start + t.step * (self.years.saturating_sub(1)) as f64;
                if t.start < 0.0 || last < 0.0 {
                    return Err(Error::domain(format!(
                        "{name} trend goes negative within the horizon"
                    )));
                }
            }
        }
        Ok(())
    }

    fn last_year(&self) -> i32 {
        self.start_year + self.years as i32 - 1
    }
}

/// The per-feeder coefficients actually used by the generator, returned so
/// experiments can compare learned behavior against the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeederTruth {
    pub feeder_id: String,
    pub base_peak: f64,
    pub econ_sensitivity: f64,
    pub temp_sensitivity: f64,
    pub momentum: f64,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub feeders: Vec<FeederTruth>,
}

/// Standard normal via Box–Muller. `u1` is mapped into (0, 1] so the log is
/// always finite.
fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn uniform_in(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

pub fn feeder_id(i: usize) -> String {
    format!("f{i:03}")
}

/// Generates the regional table and every feeder history for one season.
pub fn generate_synthetic_grid(
    config: &SynthConfig,
) -> Result<(RegionalTable, Vec<FeederYearRecord>, GroundTruth)> {
    config.check()?;

    // Regional drivers: shared AR(1) cycle plus per-column noise, and the
    // yearly temperature extreme.
    let mut rng = seed_stream(config.seed, STREAM_SYNTH_REGIONAL);
    let mut cycle = 0.0f64;
    let mut rows = Vec::with_capacity(config.years);
    for t in 0..config.years {
        cycle = config.cycle_persistence * cycle + config.cycle_volatility * gaussian(&mut rng);
        let econ = config
            .econ
            .iter()
            .map(|p| p.drift + p.cycle_loading * cycle + p.volatility * gaussian(&mut rng))
            .collect();
        rows.push(RegionalYearRecord {
            year: config.start_year + t as i32,
            econ,
            temperature: config.temperature_mean + config.temperature_spread * gaussian(&mut rng),
            temperature_change: None,
        });
    }
    let regional = RegionalTable::new(
        config.econ.iter().map(|p| p.name.clone()).collect(),
        rows,
    )?;

    let mut records = Vec::with_capacity(config.n_feeders * config.years);
    let mut truth = GroundTruth::default();
    for i in 0..config.n_feeders {
        let mut rng = seed_stream(config.seed, STREAM_SYNTH_FEEDER_BASE + i as u64);
        let id = feeder_id(i);
        let base_peak = uniform_in(&mut rng, config.base_peak_range);
        let econ_sensitivity = uniform_in(&mut rng, config.econ_sensitivity_range);
        let temp_sensitivity = uniform_in(&mut rng, config.temp_sensitivity_range);
        let momentum = uniform_in(&mut rng, config.momentum_range);
        let mut residential = uniform_in(&mut rng, config.residential_range);
        let mut commercial = uniform_in(&mut rng, config.commercial_range);

        // driver(t): regional growth percentages weighted by how much of
        // each driver lands on this feeder's current customer mix.
        let driver_at = |t: usize, residential: f64| -> f64 {
            let row = &regional.rows[t];
            let mut weighted = 0.0;
            let mut total = 0.0;
            for (p, &x) in config.econ.iter().zip(&row.econ) {
                let w = p.residential_affinity * residential
                    + (1.0 - p.residential_affinity) * (1.0 - residential);
                weighted += w * x;
                total += w;
            }
            weighted / total
        };

        // weather-free base peaks; the observed peak adds the temperature
        // response on top so weather never compounds through the recursion
        let mut base_history = vec![base_peak];
        for t in 0..config.years {
            let year = config.start_year + t as i32;
            let mut large_customer = 0.0;
            if t > 0 {
                // order of draws is fixed: composition, LC, noise
                let r_w = residential * (config.composition_volatility * gaussian(&mut rng)).exp();
                let c_w = commercial * (config.composition_volatility * gaussian(&mut rng)).exp();
                let i_w = (1.0 - residential - commercial)
                    * (config.composition_volatility * gaussian(&mut rng)).exp();
                let s = r_w + c_w + i_w;
                residential = r_w / s;
                commercial = c_w / s;

                if rng.random::<f64>() < config.lc_event_rate {
                    let magnitude = uniform_in(&mut rng, config.lc_magnitude_range);
                    large_customer = if rng.random::<f64>() < 0.5 { magnitude } else { -magnitude };
                }
                let noise = config.noise_level * gaussian(&mut rng);

                let prev = base_history[t - 1];
                let driver = (1.0 - config.lagged_driver_weight) * driver_at(t, residential)
                    + config.lagged_driver_weight * driver_at(t - 1, residential);
                let own_growth = if t >= 2 {
                    base_history[t - 1] / base_history[t - 2] - 1.0
                } else {
                    0.0
                };
                let growth = econ_sensitivity * driver / 100.0 + momentum * own_growth;
                let mut next = prev * (1.0 + growth) + large_customer + noise;
                if next <= 1.0 {
                    log::warn!("feeder {id} year {year}: base peak floored at 1 A");
                    next = 1.0;
                }
                base_history.push(next);
            }

            let temp = regional.rows[t].temperature;
            let mut peak =
                base_history[t] + temp_sensitivity * (temp - config.temperature_mean);
            if peak <= 1.0 {
                log::warn!("feeder {id} year {year}: observed peak floored at 1 A");
                peak = 1.0;
            }
            let record = FeederYearRecord {
                feeder_id: id.clone(),
                year,
                peak_demand: peak,
                residential_pct: residential,
                commercial_pct: commercial,
                industrial_pct: 1.0 - residential - commercial,
                large_customer_net_change: large_customer,
                der_growth: config.der_trend.map(|tr| tr.start + tr.step * t as f64),
                ev_growth: config.ev_trend.map(|tr| tr.start + tr.step * t as f64),
            };
            record.check()?;
            records.push(record);
        }
        truth.feeders.push(FeederTruth {
            feeder_id: id,
            base_peak,
            econ_sensitivity,
            temp_sensitivity,
            momentum,
        });
    }
    Ok((regional, records, truth))
}

/// One planned transfer: the event plus the constant block of load (amperes)
/// that moves from the first listed feeder to the rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedTransfer {
    pub event: TransferEvent,
    pub magnitude: f64,
}

/// Samples transfer events over a generated dataset. Magnitudes are sized
/// against the donor's smallest post-event peak after all previously planned
/// events, so the final injection can never drive a peak negative.
pub fn plan_transfer_events(
    config: &SynthConfig,
    records: &[FeederYearRecord],
) -> Result<Vec<PlannedTransfer>> {
    config.check()?;
    if config.transfer_count == 0 {
        return Ok(Vec::new());
    }
    if config.n_feeders < 3 {
        return Err(Error::domain(
            "transfer planning needs at least three feeders",
        ));
    }
    let mut rng = seed_stream(config.seed, STREAM_SYNTH_TRANSFERS);
    let mut scratch = records.to_vec();
    let mut planned = Vec::with_capacity(config.transfer_count);
    // events sit strictly inside the history so every member has peaks on
    // both sides of the jump
    let year_lo = config.start_year + 2;
    let year_hi = config.last_year() - 1;
    for _ in 0..config.transfer_count {
        let p = if config.n_feeders >= 4 && rng.random::<f64>() < config.transfer_triple_share {
            3
        } else {
            2
        };
        let mut picks: Vec<usize> = Vec::with_capacity(p);
        while picks.len() < p {
            let k = rng.random_range(0..config.n_feeders);
            if !picks.contains(&k) {
                picks.push(k);
            }
        }
        let year = rng.random_range(year_lo..=year_hi);
        let fraction = uniform_in(&mut rng, config.transfer_fraction_range);
        let donor = feeder_id(picks[0]);
        let donor_floor = scratch
            .iter()
            .filter(|r| r.feeder_id == donor && r.year >= year)
            .map(|r| r.peak_demand)
            .fold(f64::INFINITY, f64::min);
        if !donor_floor.is_finite() {
            return Err(Error::consistency(format!(
                "donor {donor} has no records from {year} onward"
            )));
        }
        let transfer = PlannedTransfer {
            event: TransferEvent {
                year,
                feeder_ids: picks.iter().map(|&k| feeder_id(k)).collect(),
            },
            magnitude: fraction * donor_floor,
        };
        scratch = inject_load_transfers(scratch, std::slice::from_ref(&transfer))?.0;
        planned.push(transfer);
    }
    Ok(planned)
}

/// Applies planned transfers: from each event's year onward the first listed
/// feeder loses the magnitude and the remaining feeders gain equal shares of
/// it, with recipient compositions blended toward the donor's mix. Returns
/// the modified records plus the bare event log.
pub fn inject_load_transfers(
    records: Vec<FeederYearRecord>,
    transfers: &[PlannedTransfer],
) -> Result<(Vec<FeederYearRecord>, Vec<TransferEvent>)> {
    let mut by_feeder: BTreeMap<String, Vec<FeederYearRecord>> = BTreeMap::new();
    for r in records {
        by_feeder.entry(r.feeder_id.clone()).or_default().push(r);
    }
    for recs in by_feeder.values_mut() {
        recs.sort_by_key(|r| r.year);
    }

    for transfer in transfers {
        transfer.event.check()?;
        if !(transfer.magnitude > 0.0 && transfer.magnitude.is_finite()) {
            return Err(Error::domain(format!(
                "transfer magnitude must be positive and finite, got {}",
                transfer.magnitude
            )));
        }
        for id in &transfer.event.feeder_ids {
            if !by_feeder.contains_key(id) {
                return Err(Error::consistency(format!(
                    "transfer event references unknown feeder {id}"
                )));
            }
        }
        let donor_id = &transfer.event.feeder_ids[0];
        let recipients = &transfer.event.feeder_ids[1..];
        let share = transfer.magnitude / recipients.len() as f64;

        // donor mix per affected year, captured before any mutation
        let donor_mix: BTreeMap<i32, (f64, f64)> = by_feeder[donor_id]
            .iter()
            .filter(|r| r.year >= transfer.event.year)
            .map(|r| (r.year, (r.residential_pct, r.commercial_pct)))
            .collect();
        if donor_mix.is_empty() {
            return Err(Error::consistency(format!(
                "donor {donor_id} has no records from {} onward",
                transfer.event.year
            )));
        }

        for r in by_feeder.get_mut(donor_id).unwrap() {
            if r.year >= transfer.event.year {
                if transfer.magnitude >= r.peak_demand {
                    return Err(Error::domain(format!(
                        "transfer of {:.3} A meets or exceeds donor {} peak {:.3} A in {}",
                        transfer.magnitude, donor_id, r.peak_demand, r.year
                    )));
                }
                r.peak_demand -= transfer.magnitude;
            }
        }
        for id in recipients {
            for r in by_feeder.get_mut(id).unwrap() {
                if r.year >= transfer.event.year {
                    let (donor_r, donor_c) = match donor_mix.get(&r.year) {
                        Some(&mix) => mix,
                        None => {
                            return Err(Error::consistency(format!(
                                "donor {donor_id} missing year {} that recipient {id} has",
                                r.year
                            )))
                        }
                    };
                    let new_peak = r.peak_demand + share;
                    r.residential_pct =
                        (r.peak_demand * r.residential_pct + share * donor_r) / new_peak;
                    r.commercial_pct =
                        (r.peak_demand * r.commercial_pct + share * donor_c) / new_peak;
                    r.industrial_pct = 1.0 - r.residential_pct - r.commercial_pct;
                    r.peak_demand = new_peak;
                }
            }
        }
    }

    let mut out: Vec<FeederYearRecord> = by_feeder.into_values().flatten().collect();
    out.sort_by(|a, b| a.feeder_id.cmp(&b.feeder_id).then(a.year.cmp(&b.year)));
    for r in &out {
        r.check()?;
    }
    let log = transfers.iter().map(|t| t.event.clone()).collect();
    Ok((out, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_config() -> SynthConfig {
        SynthConfig {
            n_feeders: 4,
            years: 8,
            cycle_volatility: 0.0,
            temperature_spread: 0.0,
            composition_volatility: 0.0,
            econ_sensitivity_range: (0.0, 0.0),
            temp_sensitivity_range: (0.0, 0.0),
            momentum_range: (0.0, 0.0),
            noise_level: 0.0,
            lc_event_rate: 0.0,
            transfer_count: 0,
            econ: vec![
                EconProcess {
                    name: "gdp_growth".into(),
                    drift: 2.0,
                    volatility: 0.0,
                    cycle_loading: 1.0,
                    residential_affinity: 0.2,
                },
                EconProcess {
                    name: "population_growth".into(),
                    drift: 1.0,
                    volatility: 0.0,
                    cycle_loading: 0.5,
                    residential_affinity: 0.9,
                },
            ],
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let config = SynthConfig { n_feeders: 6, ..SynthConfig::default() };
        let a = generate_synthetic_grid(&config).unwrap();
        let b = generate_synthetic_grid(&config).unwrap();
        assert_eq!(a, b);
        let other = generate_synthetic_grid(&SynthConfig { seed: 1, ..config }).unwrap();
        assert_ne!(a.1, other.1);
    }

    #[test]
    fn shapes_and_invariants() {
        let config = SynthConfig { n_feeders: 9, years: 11, ..SynthConfig::default() };
        let (regional, records, truth) = generate_synthetic_grid(&config).unwrap();
        assert_eq!(regional.rows.len(), 11);
        assert_eq!(regional.econ_columns.len(), 3);
        assert_eq!(records.len(), 9 * 11);
        assert_eq!(truth.feeders.len(), 9);
        for r in &records {
            r.check().unwrap();
            assert!(r.peak_demand > 0.0);
        }
        // first year has a temperature change of None, later years Some
        assert!(regional.rows[0].temperature_change.is_none());
        assert!(regional.rows[1].temperature_change.is_some());
        for t in &truth.feeders {
            assert!(t.econ_sensitivity >= config.econ_sensitivity_range.0);
            assert!(t.econ_sensitivity <= config.econ_sensitivity_range.1);
        }
    }

    #[test]
    fn frozen_dynamics_freeze_peaks() {
        let (_, records, _) = generate_synthetic_grid(&quiet_config()).unwrap();
        let mut by_feeder: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for r in &records {
            by_feeder.entry(&r.feeder_id).or_default().push(r.peak_demand);
        }
        assert_eq!(by_feeder.len(), 4);
        for peaks in by_feeder.values() {
            for w in peaks.windows(2) {
                assert!((w[0] - w[1]).abs() < 1e-9, "peaks drifted: {w:?}");
            }
        }
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut c = SynthConfig { n_feeders: 0, ..SynthConfig::default() };
        assert!(c.check().is_err());
        c = SynthConfig { years: 4, n_steps: 3, ..SynthConfig::default() };
        assert!(c.check().is_err());
        c = SynthConfig { noise_level: -1.0, ..SynthConfig::default() };
        assert!(c.check().is_err());
        c = SynthConfig { residential_range: (0.6, 0.7), commercial_range: (0.3, 0.4), ..SynthConfig::default() };
        assert!(c.check().is_err());
        c = SynthConfig { lagged_driver_weight: 1.5, ..SynthConfig::default() };
        assert!(c.check().is_err());
    }

    #[test]
    fn der_trend_fills_column() {
        let config = SynthConfig {
            der_trend: Some(Trend { start: 0.5, step: 0.25 }),
            ..quiet_config()
        };
        let (_, records, _) = generate_synthetic_grid(&config).unwrap();
        let f0: Vec<f64> = records
            .iter()
            .filter(|r| r.feeder_id == "f000")
            .map(|r| r.der_growth.unwrap())
            .collect();
        assert_eq!(f0[0], 0.5);
        assert!((f0[3] - 1.25).abs() < 1e-12);
        assert!(records.iter().all(|r| r.ev_growth.is_none()));
    }

    fn flat_records(years: usize) -> Vec<FeederYearRecord> {
        let config = SynthConfig { n_feeders: 5, years, ..quiet_config() };
        generate_synthetic_grid(&config).unwrap().1
    }

    fn peak_of(records: &[FeederYearRecord], id: &str, year: i32) -> f64 {
        records
            .iter()
            .find(|r| r.feeder_id == id && r.year == year)
            .unwrap()
            .peak_demand
    }

    #[test]
    fn pair_transfer_conserves_and_shifts() {
        let base = flat_records(8);
        let transfer = PlannedTransfer {
            event: TransferEvent { year: 2013, feeder_ids: vec!["f001".into(), "f003".into()] },
            magnitude: 40.0,
        };
        let (moved, log) = inject_load_transfers(base.clone(), &[transfer]).unwrap();
        assert_eq!(log.len(), 1);
        for year in 2010..2018 {
            let before = peak_of(&base, "f001", year) + peak_of(&base, "f003", year);
            let after = peak_of(&moved, "f001", year) + peak_of(&moved, "f003", year);
            assert!((before - after).abs() < 1e-9, "year {year} not conserved");
            if year >= 2013 {
                assert!(
                    (peak_of(&moved, "f001", year) - (peak_of(&base, "f001", year) - 40.0)).abs()
                        < 1e-9
                );
                assert!(
                    (peak_of(&moved, "f003", year) - (peak_of(&base, "f003", year) + 40.0)).abs()
                        < 1e-9
                );
            } else {
                assert_eq!(peak_of(&moved, "f001", year), peak_of(&base, "f001", year));
            }
        }
        // untouched feeder unchanged
        for year in 2010..2018 {
            assert_eq!(peak_of(&moved, "f000", year), peak_of(&base, "f000", year));
        }
    }

    #[test]
    fn empty_event_list_is_identity() {
        let base = flat_records(8);
        let (same, log) = inject_load_transfers(base.clone(), &[]).unwrap();
        assert_eq!(base, same);
        assert!(log.is_empty());
    }

    #[test]
    fn three_feeder_event_splits_and_conserves() {
        let base = flat_records(8);
        let transfer = PlannedTransfer {
            event: TransferEvent {
                year: 2014,
                feeder_ids: vec!["f000".into(), "f002".into(), "f004".into()],
            },
            magnitude: 60.0,
        };
        let (moved, _) = inject_load_transfers(base.clone(), &[transfer]).unwrap();
        for year in 2014..2018 {
            assert!((peak_of(&moved, "f000", year) - (peak_of(&base, "f000", year) - 60.0)).abs() < 1e-9);
            assert!((peak_of(&moved, "f002", year) - (peak_of(&base, "f002", year) + 30.0)).abs() < 1e-9);
            assert!((peak_of(&moved, "f004", year) - (peak_of(&base, "f004", year) + 30.0)).abs() < 1e-9);
            let before: f64 = ["f000", "f002", "f004"].iter().map(|f| peak_of(&base, f, year)).sum();
            let after: f64 = ["f000", "f002", "f004"].iter().map(|f| peak_of(&moved, f, year)).sum();
            assert!((before - after).abs() < 1e-9);
        }
    }

    #[test]
    fn composition_blends_toward_donor_mix() {
        let base = flat_records(8);
        let donor = base.iter().find(|r| r.feeder_id == "f001" && r.year == 2013).unwrap().clone();
        let recipient =
            base.iter().find(|r| r.feeder_id == "f003" && r.year == 2013).unwrap().clone();
        let transfer = PlannedTransfer {
            event: TransferEvent { year: 2013, feeder_ids: vec!["f001".into(), "f003".into()] },
            magnitude: 50.0,
        };
        let (moved, _) = inject_load_transfers(base, &[transfer]).unwrap();
        let blended =
            moved.iter().find(|r| r.feeder_id == "f003" && r.year == 2013).unwrap();
        let expected_r = (recipient.peak_demand * recipient.residential_pct
            + 50.0 * donor.residential_pct)
            / (recipient.peak_demand + 50.0);
        assert!((blended.residential_pct - expected_r).abs() < 1e-12);
        assert!(
            (blended.residential_pct + blended.commercial_pct + blended.industrial_pct - 1.0)
                .abs()
                < 1e-12
        );
        // donor mix is untouched by a proportional subtraction
        let donor_after = moved.iter().find(|r| r.feeder_id == "f001" && r.year == 2013).unwrap();
        assert_eq!(donor_after.residential_pct, donor.residential_pct);
    }

    #[test]
    fn oversized_transfer_is_rejected() {
        let base = flat_records(8);
        let donor_min = base
            .iter()
            .filter(|r| r.feeder_id == "f001")
            .map(|r| r.peak_demand)
            .fold(f64::INFINITY, f64::min);
        let transfer = PlannedTransfer {
            event: TransferEvent { year: 2012, feeder_ids: vec!["f001".into(), "f002".into()] },
            magnitude: donor_min + 1.0,
        };
        assert!(matches!(
            inject_load_transfers(base.clone(), &[transfer]),
            Err(Error::Domain(_))
        ));
        let unknown = PlannedTransfer {
            event: TransferEvent { year: 2012, feeder_ids: vec!["f001".into(), "nope".into()] },
            magnitude: 5.0,
        };
        assert!(matches!(
            inject_load_transfers(base, &[unknown]),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn planned_transfers_inject_cleanly_and_deterministically() {
        let config = SynthConfig { n_feeders: 12, transfer_count: 5, ..SynthConfig::default() };
        let (_, records, _) = generate_synthetic_grid(&config).unwrap();
        let plan_a = plan_transfer_events(&config, &records).unwrap();
        let plan_b = plan_transfer_events(&config, &records).unwrap();
        assert_eq!(plan_a, plan_b);
        assert_eq!(plan_a.len(), 5);
        for p in &plan_a {
            assert!(p.magnitude > 0.0);
            assert!(p.event.year > config.start_year + 1);
            assert!(p.event.year < config.start_year + config.years as i32 - 1);
        }
        let (moved, log) = inject_load_transfers(records.clone(), &plan_a).unwrap();
        assert_eq!(log.len(), 5);
        assert_eq!(moved.len(), records.len());

        // grid-wide peak total is conserved every year
        for year in config.start_year..config.start_year + config.years as i32 {
            let before: f64 = records.iter().filter(|r| r.year == year).map(|r| r.peak_demand).sum();
            let after: f64 = moved.iter().filter(|r| r.year == year).map(|r| r.peak_demand).sum();
            assert!((before - after).abs() < 1e-6, "year {year}: {before} vs {after}");
        }
    }
}
