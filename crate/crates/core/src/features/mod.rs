//! Feature engineering: load composition shares, virtual feeders for
//! load-transfer groups, min-max normalization, and principal-component
//! reduction of the economic/population block.

pub mod pca;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{FeederYearRecord, TransferEvent};
use crate::error::{Error, Result};

/// Splits a feeder's peak into residential/commercial/industrial shares.
/// The industrial share is the residual `1 − R − C`, so the three always
/// sum to exactly 1.
pub fn load_composition(
    feeder_peak: f64,
    residential_loads_at_peak: &[f64],
    commercial_loads_at_peak: &[f64],
) -> Result<(f64, f64, f64)> {
    if !(feeder_peak > 0.0) {
        return Err(Error::domain(format!(
            "feeder peak must be positive, got {feeder_peak}"
        )));
    }
    let sum_r: f64 = residential_loads_at_peak.iter().sum();
    let sum_c: f64 = commercial_loads_at_peak.iter().sum();
    if sum_r + sum_c > feeder_peak * (1.0 + 1e-12) {
        return Err(Error::consistency(format!(
            "residential + commercial loads ({}) exceed the feeder peak ({feeder_peak})",
            sum_r + sum_c
        )));
    }
    let r = sum_r / feeder_peak;
    let c = sum_c / feeder_peak;
    Ok((r, c, 1.0 - r - c))
}

/// Merges the records of feeders that exchange load, for one year: the peak
/// and the amp-valued features are plain averages over the members, while
/// the composition shares are peak-weighted averages. The optional growth
/// features average only when every member carries them.
pub fn build_virtual_feeder(members: &[&FeederYearRecord]) -> Result<FeederYearRecord> {
    let p = members.len();
    if p < 2 {
        return Err(Error::domain(format!(
            "a virtual feeder needs at least 2 members, got {p}"
        )));
    }
    let year = members[0].year;
    if members.iter().any(|m| m.year != year) {
        return Err(Error::consistency(
            "virtual feeder members span different years",
        ));
    }
    let pf = p as f64;
    let peak_sum: f64 = members.iter().map(|m| m.peak_demand).sum();
    let peak = peak_sum / pf;
    let weighted = |share: fn(&FeederYearRecord) -> f64| -> f64 {
        members.iter().map(|m| share(m) * m.peak_demand).sum::<f64>() / peak_sum
    };
    let r = weighted(|m| m.residential_pct);
    let c = weighted(|m| m.commercial_pct);
    let avg_opt = |name: &str, get: fn(&FeederYearRecord) -> Option<f64>| -> Result<Option<f64>> {
        let present = members.iter().filter(|m| get(m).is_some()).count();
        if present == 0 {
            Ok(None)
        } else if present == p {
            Ok(Some(members.iter().map(|m| get(m).unwrap()).sum::<f64>() / pf))
        } else {
            Err(Error::consistency(format!(
                "virtual feeder members disagree on whether {name} is present (year {year})"
            )))
        }
    };
    let mut ids: Vec<&str> = members.iter().map(|m| m.feeder_id.as_str()).collect();
    ids.sort_unstable();
    let rec = FeederYearRecord {
        feeder_id: format!("vf-{}", ids.join("+")),
        year,
        peak_demand: peak,
        residential_pct: r,
        commercial_pct: c,
        industrial_pct: 1.0 - r - c,
        large_customer_net_change: members
            .iter()
            .map(|m| m.large_customer_net_change)
            .sum::<f64>()
            / pf,
        der_growth: avg_opt("der_growth", |m| m.der_growth)?,
        ev_growth: avg_opt("ev_growth", |m| m.ev_growth)?,
    };
    rec.check()?;
    Ok(rec)
}

/// One merged group after transfer-log resolution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VirtualFeederGroup {
    pub virtual_id: String,
    pub members: Vec<String>,
    pub transfer_years: Vec<i32>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, i: usize) -> usize {
        if self.parent[i] != i {
            let root = self.find(self.parent[i]);
            self.parent[i] = root;
        }
        self.parent[i]
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Replaces every feeder that appears in the transfer log with its group's
/// virtual feeder across the whole history. Events sharing a feeder chain
/// into one group. A group contributes a virtual record only for years in
/// which every member has a record; partially-covered years are dropped
/// with a logged warning. Feeders outside the log pass through unchanged.
pub fn apply_virtual_feeders(
    records: &[FeederYearRecord],
    events: &[TransferEvent],
) -> Result<(Vec<FeederYearRecord>, Vec<VirtualFeederGroup>)> {
    for event in events {
        event.check()?;
    }
    let known: BTreeSet<&str> = records.iter().map(|r| r.feeder_id.as_str()).collect();
    for event in events {
        for id in &event.feeder_ids {
            if !known.contains(id.as_str()) {
                return Err(Error::consistency(format!(
                    "transfer event in {} names unknown feeder {}",
                    event.year, id
                )));
            }
        }
    }

    // connected components over the feeders named in events
    let mut involved: Vec<&str> = events
        .iter()
        .flat_map(|e| e.feeder_ids.iter().map(String::as_str))
        .collect::<BTreeSet<&str>>()
        .into_iter()
        .collect();
    involved.sort_unstable();
    let index: BTreeMap<&str, usize> = involved.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut uf = UnionFind::new(involved.len());
    for event in events {
        let first = index[event.feeder_ids[0].as_str()];
        for id in &event.feeder_ids[1..] {
            uf.union(first, index[id.as_str()]);
        }
    }
    let mut groups: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (i, id) in involved.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().push(id);
    }

    let mut by_feeder: BTreeMap<&str, BTreeMap<i32, &FeederYearRecord>> = BTreeMap::new();
    for rec in records {
        by_feeder
            .entry(rec.feeder_id.as_str())
            .or_default()
            .insert(rec.year, rec);
    }

    let grouped: BTreeSet<&str> = groups.values().flatten().copied().collect();
    let mut out: Vec<FeederYearRecord> = records
        .iter()
        .filter(|r| !grouped.contains(r.feeder_id.as_str()))
        .cloned()
        .collect();

    let mut summaries = Vec::new();
    for members in groups.values() {
        let member_years: Vec<&BTreeMap<i32, &FeederYearRecord>> =
            members.iter().map(|id| &by_feeder[id]).collect();
        let all_years: BTreeSet<i32> = member_years.iter().flat_map(|m| m.keys().copied()).collect();
        let mut virtual_id = None;
        for year in all_years {
            let rows: Vec<&FeederYearRecord> = member_years
                .iter()
                .filter_map(|m| m.get(&year).copied())
                .collect();
            if rows.len() < members.len() {
                log::warn!(
                    "dropping year {year} for merged feeders [{}]: only {}/{} members have records",
                    members.join(", "),
                    rows.len(),
                    members.len()
                );
                continue;
            }
            let merged = build_virtual_feeder(&rows)?;
            virtual_id.get_or_insert_with(|| merged.feeder_id.clone());
            out.push(merged);
        }
        let virtual_id = virtual_id.ok_or_else(|| {
            Error::consistency(format!(
                "merged feeders [{}] share no common year",
                members.join(", ")
            ))
        })?;
        summaries.push(VirtualFeederGroup {
            virtual_id,
            members: members.iter().map(|s| s.to_string()).collect(),
            transfer_years: events
                .iter()
                .filter(|e| e.feeder_ids.iter().any(|id| members.contains(&id.as_str())))
                .map(|e| e.year)
                .collect(),
        });
    }
    out.sort_by(|a, b| (a.feeder_id.as_str(), a.year).cmp(&(b.feeder_id.as_str(), b.year)));
    Ok((out, summaries))
}

/// Per-column min/max fitted on training rows; `(x − min)/(max − min)`
/// maps fitted values into [0, 1]. Unseen data may land outside and is not
/// clamped; constant (degenerate) columns map to 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationStats {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::domain("cannot fit normalization on an empty matrix"));
        };
        let width = first.len();
        let mut min = vec![f64::INFINITY; width];
        let mut max = vec![f64::NEG_INFINITY; width];
        for row in rows {
            if row.len() != width {
                return Err(Error::shape(format!(
                    "ragged matrix: row of {} values in a {width}-column fit",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::domain(format!(
                        "non-finite value {v} in normalization column {j}"
                    )));
                }
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        let stats = NormalizationStats { min, max };
        for col in stats.degenerate_columns() {
            log::warn!("normalization column {col} is constant; it will map to 0");
        }
        Ok(stats)
    }

    pub fn width(&self) -> usize {
        self.min.len()
    }

    pub fn check(&self) -> Result<()> {
        if self.min.len() != self.max.len() {
            return Err(Error::shape(format!(
                "normalization stats carry {} mins but {} maxes",
                self.min.len(),
                self.max.len()
            )));
        }
        for (j, (&lo, &hi)) in self.min.iter().zip(&self.max).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi >= lo) {
                return Err(Error::consistency(format!(
                    "normalization column {j} has min {lo}, max {hi}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_degenerate(&self, col: usize) -> bool {
        self.max[col] == self.min[col]
    }

    pub fn degenerate_columns(&self) -> Vec<usize> {
        (0..self.width()).filter(|&j| self.is_degenerate(j)).collect()
    }

    pub fn apply_value(&self, col: usize, v: f64) -> f64 {
        if self.is_degenerate(col) {
            0.0
        } else {
            (v - self.min[col]) / (self.max[col] - self.min[col])
        }
    }

    /// Inverse of [`Self::apply_value`] on non-degenerate columns; a
    /// degenerate column inverts to its constant.
    pub fn invert_value(&self, col: usize, v: f64) -> f64 {
        if self.is_degenerate(col) {
            self.min[col]
        } else {
            self.min[col] + v * (self.max[col] - self.min[col])
        }
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.width() {
            return Err(Error::shape(format!(
                "row of {} values against {}-column normalization stats",
                row.len(),
                self.width()
            )));
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, &v)| self.apply_value(j, v))
            .collect())
    }
}
