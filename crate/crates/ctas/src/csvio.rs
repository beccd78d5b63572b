//! `histories.csv` and `effort.csv`.
//!
//! Effort rows are `time,area_1,...,area_M` with 0/1 flags; their times form
//! the occasion grid. History rows are `id,time,obs`, one per sighting or
//! known zero; any further column is a numeric individual covariate, constant
//! per individual. Occasions an individual has no row for read as 0.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use ctas_core::data::{EncounterData, EncounterHistory, OccasionGrid};
use ctas_core::{Error, Issue, Result};

fn reader<R: Read>(r: R, delimiter: u8) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn writer<W: Write>(w: W, delimiter: u8) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(w)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn at_line(record: &csv::StringRecord, msg: impl std::fmt::Display) -> Error {
    match record.position() {
        Some(p) => Error::Format(format!("line {}: {msg}", p.line())),
        None => Error::Format(msg.to_string()),
    }
}

fn parse_time(record: &csv::StringRecord, field: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(t) if t.is_finite() => Ok(t),
        _ => Err(at_line(record, format!("invalid time `{field}`"))),
    }
}

/// Reads the survey grid. Times must strictly increase from 0 and every
/// occasion after the first needs a surveyed area.
pub fn read_effort<R: Read>(r: R, delimiter: u8) -> Result<OccasionGrid> {
    let mut rdr = reader(r, delimiter);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.get(0) != Some("time") || header.len() < 2 {
        return Err(Error::Format(
            "effort header must be `time,area_1,...,area_M`".into(),
        ));
    }
    for (k, name) in header.iter().enumerate().skip(1) {
        if name != format!("area_{k}") {
            return Err(Error::Format(format!(
                "effort column {} must be `area_{k}`, got `{name}`",
                k + 1
            )));
        }
    }
    let mut times = Vec::new();
    let mut effort = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let t = parse_time(&record, &record[0])?;
        if let Some(&last) = times.last() {
            if t <= last {
                return Err(at_line(
                    &record,
                    format!("effort times must strictly increase, {t} follows {last}"),
                ));
            }
        }
        let row = record
            .iter()
            .skip(1)
            .map(|v| match v {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(at_line(
                    &record,
                    format!("effort flag must be 0 or 1, got `{other}`"),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        times.push(t);
        effort.push(row);
    }
    let grid = OccasionGrid::new(times, effort)?;
    grid.require_effort()?;
    Ok(grid)
}

type RawHistory = (Vec<Option<u8>>, BTreeMap<String, f64>);

/// Reads histories against `grid`. The number of alive states is the number of
/// effort areas.
pub fn read_histories<R: Read>(r: R, delimiter: u8, grid: &OccasionGrid) -> Result<EncounterData> {
    let m = grid.n_areas();
    let mut rdr = reader(r, delimiter);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(id_col), Some(time_col), Some(obs_col)) = (col("id"), col("time"), col("obs")) else {
        return Err(Error::Format(
            "histories header must contain `id`, `time` and `obs`".into(),
        ));
    };
    let covariate_cols: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter(|(k, _)| ![id_col, time_col, obs_col].contains(k))
        .map(|(k, h)| (k, h.to_string()))
        .collect();

    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, RawHistory> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let id = record[id_col].to_string();
        if id.is_empty() {
            return Err(at_line(&record, "empty individual id"));
        }
        let t = parse_time(&record, &record[time_col])?;
        let u = grid
            .index_of(t)
            .ok_or_else(|| at_line(&record, format!("time {t} is not an effort occasion")))?;
        let obs: u8 = match record[obs_col].parse::<u8>() {
            Ok(x) if (x as usize) <= m => x,
            _ => {
                return Err(at_line(
                    &record,
                    format!(
                        "obs must be an integer in 0..={m}, got `{}`",
                        &record[obs_col]
                    ),
                ))
            }
        };
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            (vec![None; grid.len()], BTreeMap::new())
        });
        match entry.0[u] {
            Some(prev) if prev != obs => {
                return Err(at_line(
                    &record,
                    format!("individual `{id}` has conflicting rows at time {t}"),
                ))
            }
            _ => entry.0[u] = Some(obs),
        }
        for (k, name) in &covariate_cols {
            let field = &record[*k];
            if field.is_empty() {
                continue;
            }
            let v: f64 = field
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| {
                    at_line(
                        &record,
                        format!("covariate `{name}` is not a number: `{field}`"),
                    )
                })?;
            match entry.1.insert(name.clone(), v) {
                Some(prev) if prev != v => {
                    return Err(at_line(
                        &record,
                        format!("covariate `{name}` of `{id}` changes from {prev} to {v}"),
                    ))
                }
                _ => {}
            }
        }
    }

    let mut histories = Vec::with_capacity(order.len());
    let mut issues = Vec::new();
    for id in order {
        let (obs, covariates) = rows.remove(&id).expect("id recorded");
        let obs: Vec<u8> = obs.into_iter().map(|x| x.unwrap_or(0)).collect();
        match EncounterHistory::new(id.clone(), obs, covariates) {
            Ok(h) => histories.push(h),
            Err(e) => issues.push(Issue::new(e.to_string()).individual(id)),
        }
    }
    if !issues.is_empty() {
        return Err(Error::Validation(issues));
    }
    EncounterData::new(grid.clone(), histories, m)
}

pub fn read_encounter_data<H: Read, E: Read>(
    histories: H,
    effort: E,
    delimiter: u8,
) -> Result<EncounterData> {
    let grid = read_effort(effort, delimiter)?;
    read_histories(histories, delimiter, &grid)
}

fn io_error(e: impl std::fmt::Display) -> Error {
    Error::Format(format!("write failed: {e}"))
}

pub fn write_effort<W: Write>(w: W, grid: &OccasionGrid, delimiter: u8) -> Result<()> {
    let mut wtr = writer(w, delimiter);
    let mut header = vec!["time".to_string()];
    header.extend((1..=grid.n_areas()).map(|a| format!("area_{a}")));
    wtr.write_record(&header).map_err(io_error)?;
    for u in 0..grid.len() {
        let mut row = vec![grid.time(u).to_string()];
        row.extend(
            grid.effort_row(u)
                .iter()
                .map(|&e| if e { "1" } else { "0" }.to_string()),
        );
        wtr.write_record(&row).map_err(io_error)?;
    }
    wtr.flush().map_err(io_error)
}

/// Writes one row per sighting; covariate columns are the union of all names,
/// blank where an individual lacks the covariate.
pub fn write_histories<W: Write>(w: W, data: &EncounterData, delimiter: u8) -> Result<()> {
    let mut names: Vec<&str> = data
        .histories()
        .iter()
        .flat_map(|h| h.covariates().keys().map(String::as_str))
        .collect();
    names.sort_unstable();
    names.dedup();
    let mut wtr = writer(w, delimiter);
    let mut header = vec!["id", "time", "obs"];
    header.extend(&names);
    wtr.write_record(&header).map_err(io_error)?;
    let grid = data.grid();
    for h in data.histories() {
        for (u, &x) in h.observations().iter().enumerate() {
            if x == 0 {
                continue;
            }
            let mut row = vec![h.id().to_string(), grid.time(u).to_string(), x.to_string()];
            row.extend(
                names
                    .iter()
                    .map(|n| h.covariate(n).map_or_else(String::new, |v| v.to_string())),
            );
            wtr.write_record(&row).map_err(io_error)?;
        }
    }
    wtr.flush().map_err(io_error)
}
