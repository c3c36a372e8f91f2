//! CSV readers and writers for the three input files.
//!
//! - feeder-years: `feeder_id, year, season, peak_demand_A, residential_pct,
//!   commercial_pct, large_customer_net_change_A[, der_growth, ev_growth]`
//!   (industrial share is the residual `1 − R − C` and is not a column);
//! - regional-years: `year, season, <econ columns...>, temperature_C` with
//!   the economic/population column names taken from the header;
//! - transfer-log: `year, feeder_ids` with the ids comma-joined inside one
//!   (quoted) field.
//!
//! Readers filter rows to one season; summer and winter are independent
//! datasets.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::{FeederYearRecord, RegionalTable, RegionalYearRecord, Season, TransferEvent};
use crate::error::{Error, Result};

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))
}

fn header_index(headers: &csv::StringRecord, path: &Path) -> BTreeMap<String, usize> {
    let _ = path;
    headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_string(), i))
        .collect()
}

fn require<'a>(
    idx: &'a BTreeMap<String, usize>,
    name: &str,
    path: &Path,
) -> Result<usize> {
    idx.get(name)
        .copied()
        .ok_or_else(|| Error::parse(path, format!("missing required column '{name}'")))
}

fn field<'a>(record: &'a csv::StringRecord, col: usize, line: u64, path: &Path) -> Result<&'a str> {
    record
        .get(col)
        .ok_or_else(|| Error::parse(path, format!("line {line}: too few fields")))
}

fn parse_f64(s: &str, name: &str, line: u64, path: &Path) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::parse(path, format!("line {line}: '{s}' is not a number for {name}")))
}

fn parse_year(s: &str, line: u64, path: &Path) -> Result<i32> {
    s.parse::<i32>()
        .map_err(|_| Error::parse(path, format!("line {line}: '{s}' is not a year")))
}

fn parse_season(s: &str, line: u64, path: &Path) -> Result<Season> {
    match s.to_ascii_lowercase().as_str() {
        "summer" => Ok(Season::Summer),
        "winter" => Ok(Season::Winter),
        other => Err(Error::parse(
            path,
            format!("line {line}: unknown season '{other}' (expected summer or winter)"),
        )),
    }
}

/// Reads feeder-year records for one season. The two optional columns are
/// detected from the header; when present they must be populated on every
/// row of that season.
pub fn read_feeder_csv(path: &Path, season: Season) -> Result<Vec<FeederYearRecord>> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers().map_err(|e| Error::parse(path, e.to_string()))?.clone();
    let idx = header_index(&headers, path);
    let c_id = require(&idx, "feeder_id", path)?;
    let c_year = require(&idx, "year", path)?;
    let c_season = require(&idx, "season", path)?;
    let c_peak = require(&idx, "peak_demand_A", path)?;
    let c_res = require(&idx, "residential_pct", path)?;
    let c_com = require(&idx, "commercial_pct", path)?;
    let c_lc = require(&idx, "large_customer_net_change_A", path)?;
    let c_der = idx.get("der_growth").copied();
    let c_ev = idx.get("ev_growth").copied();

    let mut out = Vec::new();
    for row in reader.records() {
        let record = row.map_err(|e| Error::parse(path, e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if parse_season(field(&record, c_season, line, path)?, line, path)? != season {
            continue;
        }
        let residential = parse_f64(field(&record, c_res, line, path)?, "residential_pct", line, path)?;
        let commercial = parse_f64(field(&record, c_com, line, path)?, "commercial_pct", line, path)?;
        let parse_opt = |col: Option<usize>, name: &str| -> Result<Option<f64>> {
            match col {
                None => Ok(None),
                Some(c) => {
                    let s = field(&record, c, line, path)?;
                    if s.is_empty() {
                        Ok(None)
                    } else {
                        parse_f64(s, name, line, path).map(Some)
                    }
                }
            }
        };
        let rec = FeederYearRecord {
            feeder_id: field(&record, c_id, line, path)?.to_string(),
            year: parse_year(field(&record, c_year, line, path)?, line, path)?,
            peak_demand: parse_f64(field(&record, c_peak, line, path)?, "peak_demand_A", line, path)?,
            residential_pct: residential,
            commercial_pct: commercial,
            industrial_pct: 1.0 - residential - commercial,
            large_customer_net_change: parse_f64(
                field(&record, c_lc, line, path)?,
                "large_customer_net_change_A",
                line,
                path,
            )?,
            der_growth: parse_opt(c_der, "der_growth")?,
            ev_growth: parse_opt(c_ev, "ev_growth")?,
        };
        rec.check()
            .map_err(|e| Error::parse(path, format!("line {line}: {e}")))?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::parse(path, format!("no {season} rows found")));
    }
    Ok(out)
}

/// Writes feeder-year records (one season per call appends nothing — the
/// caller passes the full multi-season set and each record carries its
/// season).
pub fn write_feeder_csv(path: &Path, records: &[(Season, &FeederYearRecord)]) -> Result<()> {
    let include_der = records.iter().any(|(_, r)| r.der_growth.is_some());
    let include_ev = records.iter().any(|(_, r)| r.ev_growth.is_some());
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut header = vec![
        "feeder_id",
        "year",
        "season",
        "peak_demand_A",
        "residential_pct",
        "commercial_pct",
        "large_customer_net_change_A",
    ];
    if include_der {
        header.push("der_growth");
    }
    if include_ev {
        header.push("ev_growth");
    }
    writer.write_record(&header).map_err(|e| Error::parse(path, e.to_string()))?;
    for (season, rec) in records {
        let mut row = vec![
            rec.feeder_id.clone(),
            rec.year.to_string(),
            season.to_string(),
            format!("{}", rec.peak_demand),
            format!("{}", rec.residential_pct),
            format!("{}", rec.commercial_pct),
            format!("{}", rec.large_customer_net_change),
        ];
        if include_der {
            row.push(rec.der_growth.map(|v| format!("{v}")).unwrap_or_default());
        }
        if include_ev {
            row.push(rec.ev_growth.map(|v| format!("{v}")).unwrap_or_default());
        }
        writer.write_record(&row).map_err(|e| Error::parse(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads the regional table for one season. Economic/population column names
/// are everything in the header except `year`, `season`, and
/// `temperature_C`, in header order.
pub fn read_regional_csv(path: &Path, season: Season) -> Result<RegionalTable> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers().map_err(|e| Error::parse(path, e.to_string()))?.clone();
    let idx = header_index(&headers, path);
    let c_year = require(&idx, "year", path)?;
    let c_season = require(&idx, "season", path)?;
    let c_temp = require(&idx, "temperature_C", path)?;
    let econ_cols: Vec<(String, usize)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != c_year && *i != c_season && *i != c_temp)
        .map(|(i, h)| (h.trim().to_string(), i))
        .collect();
    if econ_cols.is_empty() {
        return Err(Error::parse(path, "no economic/population columns in header"));
    }

    let mut rows = Vec::new();
    for row in reader.records() {
        let record = row.map_err(|e| Error::parse(path, e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if parse_season(field(&record, c_season, line, path)?, line, path)? != season {
            continue;
        }
        let econ = econ_cols
            .iter()
            .map(|(name, c)| parse_f64(field(&record, *c, line, path)?, name, line, path))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(RegionalYearRecord {
            year: parse_year(field(&record, c_year, line, path)?, line, path)?,
            econ,
            temperature: parse_f64(field(&record, c_temp, line, path)?, "temperature_C", line, path)?,
            temperature_change: None,
        });
    }
    if rows.is_empty() {
        return Err(Error::parse(path, format!("no {season} rows found")));
    }
    RegionalTable::new(econ_cols.into_iter().map(|(n, _)| n).collect(), rows)
        .map_err(|e| Error::parse(path, e.to_string()))
}

/// Writes a regional table; both seasons go through separate calls to
/// separate row sets, so the caller passes `(season, table)` pairs.
pub fn write_regional_csv(path: &Path, tables: &[(Season, &RegionalTable)]) -> Result<()> {
    let Some((_, first)) = tables.first() else {
        return Err(Error::domain("no regional tables to write"));
    };
    for (_, t) in tables {
        if t.econ_columns != first.econ_columns {
            return Err(Error::consistency(
                "regional tables for different seasons declare different econ columns",
            ));
        }
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut header = vec!["year".to_string(), "season".to_string()];
    header.extend(first.econ_columns.iter().cloned());
    header.push("temperature_C".to_string());
    writer.write_record(&header).map_err(|e| Error::parse(path, e.to_string()))?;
    for (season, table) in tables {
        for row in &table.rows {
            let mut out = vec![row.year.to_string(), season.to_string()];
            out.extend(row.econ.iter().map(|v| format!("{v}")));
            out.push(format!("{}", row.temperature));
            writer.write_record(&out).map_err(|e| Error::parse(path, e.to_string()))?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads the transfer log: `year, feeder_ids` with comma-joined ids in the
/// second field. Transfers are season-independent.
pub fn read_transfer_csv(path: &Path) -> Result<Vec<TransferEvent>> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers().map_err(|e| Error::parse(path, e.to_string()))?.clone();
    let idx = header_index(&headers, path);
    let c_year = require(&idx, "year", path)?;
    let c_ids = require(&idx, "feeder_ids", path)?;
    let mut out = Vec::new();
    for row in reader.records() {
        let record = row.map_err(|e| Error::parse(path, e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let ids: Vec<String> = field(&record, c_ids, line, path)?
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        let event = TransferEvent {
            year: parse_year(field(&record, c_year, line, path)?, line, path)?,
            feeder_ids: ids,
        };
        event
            .check()
            .map_err(|e| Error::parse(path, format!("line {line}: {e}")))?;
        out.push(event);
    }
    Ok(out)
}

pub fn write_transfer_csv(path: &Path, events: &[TransferEvent]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    writer
        .write_record(["year", "feeder_ids"])
        .map_err(|e| Error::parse(path, e.to_string()))?;
    for event in events {
        writer
            .write_record([event.year.to_string(), event.feeder_ids.join(",")])
            .map_err(|e| Error::parse(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn feeder_round_trip_with_optional_columns() {
        let rec = FeederYearRecord {
            feeder_id: "f001".into(),
            year: 2012,
            peak_demand: 550.0,
            residential_pct: 0.594,
            commercial_pct: 0.127,
            industrial_pct: 1.0 - 0.594 - 0.127,
            large_customer_net_change: -12.5,
            der_growth: Some(0.03),
            ev_growth: Some(0.01),
        };
        let tmp = tempfile::NamedTempFile::new().unwrap();
        write_feeder_csv(tmp.path(), &[(Season::Summer, &rec), (Season::Winter, &rec)]).unwrap();
        let back = read_feeder_csv(tmp.path(), Season::Summer).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].feeder_id, "f001");
        assert_eq!(back[0].peak_demand, 550.0);
        assert!((back[0].industrial_pct - 0.279).abs() < 1e-12);
        assert_eq!(back[0].der_growth, Some(0.03));
    }

    #[test]
    fn feeder_reader_filters_by_season_and_derives_industrial() {
        let tmp = write_tmp(
            "feeder_id,year,season,peak_demand_A,residential_pct,commercial_pct,large_customer_net_change_A\n\
             f1,2010,summer,433,0.665,0.2,42\n\
             f1,2010,winter,300,0.665,0.2,0\n",
        );
        let summer = read_feeder_csv(tmp.path(), Season::Summer).unwrap();
        assert_eq!(summer.len(), 1);
        assert_eq!(summer[0].peak_demand, 433.0);
        assert!((summer[0].industrial_pct - 0.135).abs() < 1e-12);
        assert_eq!(summer[0].der_growth, None);
    }

    #[test]
    fn feeder_reader_rejects_bad_rows() {
        let negative_peak = write_tmp(
            "feeder_id,year,season,peak_demand_A,residential_pct,commercial_pct,large_customer_net_change_A\n\
             f1,2010,summer,-5,0.6,0.2,0\n",
        );
        assert!(matches!(
            read_feeder_csv(negative_peak.path(), Season::Summer),
            Err(Error::Parse { .. })
        ));
        let missing_col = write_tmp("feeder_id,year,season,peak_demand_A\nf1,2010,summer,100\n");
        assert!(matches!(
            read_feeder_csv(missing_col.path(), Season::Summer),
            Err(Error::Parse { .. })
        ));
        let not_a_number = write_tmp(
            "feeder_id,year,season,peak_demand_A,residential_pct,commercial_pct,large_customer_net_change_A\n\
             f1,2010,summer,abc,0.6,0.2,0\n",
        );
        assert!(matches!(
            read_feeder_csv(not_a_number.path(), Season::Summer),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn regional_round_trip_infers_econ_columns() {
        let tmp = write_tmp(
            "year,season,gdp_growth,employment_growth,population_growth,temperature_C\n\
             2009,summer,2.9,1.1,1.4,36.2\n\
             2010,summer,-2.5,0.4,1.3,37.0\n\
             2010,winter,-2.5,0.4,1.3,-10.0\n",
        );
        let table = read_regional_csv(tmp.path(), Season::Summer).unwrap();
        assert_eq!(
            table.econ_columns,
            vec!["gdp_growth", "employment_growth", "population_growth"]
        );
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.get(2010).unwrap().econ, vec![-2.5, 0.4, 1.3]);
        assert_eq!(table.get(2010).unwrap().temperature_change, Some(37.0 - 36.2));
        assert_eq!(table.get(2009).unwrap().temperature_change, None);

        let out = tempfile::NamedTempFile::new().unwrap();
        write_regional_csv(out.path(), &[(Season::Summer, &table)]).unwrap();
        let back = read_regional_csv(out.path(), Season::Summer).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn transfer_round_trip_quotes_joined_ids() {
        let events = vec![
            TransferEvent {
                year: 2005,
                feeder_ids: vec!["f003".into(), "f017".into()],
            },
            TransferEvent {
                year: 2011,
                feeder_ids: vec!["f001".into(), "f002".into(), "f009".into()],
            },
        ];
        let tmp = tempfile::NamedTempFile::new().unwrap();
        write_transfer_csv(tmp.path(), &events).unwrap();
        let text = std::fs::read_to_string(tmp.path()).unwrap();
        assert!(text.contains("\"f003,f017\""), "ids field must be quoted: {text}");
        let back = read_transfer_csv(tmp.path()).unwrap();
        assert_eq!(back, events);
    }

    #[test]
    fn transfer_reader_rejects_single_feeder_events() {
        let tmp = write_tmp("year,feeder_ids\n2005,f001\n");
        assert!(matches!(read_transfer_csv(tmp.path()), Err(Error::Parse { .. })));
    }
}
