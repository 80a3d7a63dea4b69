//! Delimited-text formats for climate series and extreme-index files.
//!
//! Climate input: one row per (cell, year, month) with header
//! `cell_id,latitude,longitude,year,month,precipitation,soil_water,soil_temperature`.
//! Extreme-index output: one row per (id, year) with header
//! `id,year,espi,esswi,essti`.

use std::collections::BTreeMap;
use std::path::Path;

use super::{ClimateError, ExtremeYearIndex, GridMonthlySeries, MonthRecord};
use crate::numfmt::sig9;

fn schema_err(path: &Path, message: impl Into<String>) -> ClimateError {
    ClimateError::Schema {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> ClimateError {
    ClimateError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a climate file into per-cell series, sorted by cell id; months are
/// sorted within each cell and validated.
pub fn read_climate_csv(path: &Path) -> Result<Vec<GridMonthlySeries>, ClimateError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| schema_err(path, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| schema_err(path, e.to_string()))?
        .clone();
    let expected = [
        "cell_id",
        "latitude",
        "longitude",
        "year",
        "month",
        "precipitation",
        "soil_water",
        "soil_temperature",
    ];
    let positions: Vec<usize> = expected
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| schema_err(path, format!("missing column {name}")))
        })
        .collect::<Result<_, _>>()?;
    let mut cells: BTreeMap<String, (f64, f64, Vec<MonthRecord>)> = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| schema_err(path, e.to_string()))?;
        let field = |i: usize| -> &str { record.get(positions[i]).unwrap_or("") };
        let parse_f64 = |i: usize| -> Result<f64, ClimateError> {
            field(i).parse::<f64>().map_err(|_| {
                schema_err(
                    path,
                    format!("row {}: bad {} value {:?}", line + 2, expected[i], field(i)),
                )
            })
        };
        let cell_id = field(0).to_string();
        let latitude = parse_f64(1)?;
        let longitude = parse_f64(2)?;
        let year: i32 = field(3).parse().map_err(|_| {
            schema_err(path, format!("row {}: bad year {:?}", line + 2, field(3)))
        })?;
        let month: u8 = field(4).parse().map_err(|_| {
            schema_err(path, format!("row {}: bad month {:?}", line + 2, field(4)))
        })?;
        let rec = MonthRecord {
            year,
            month,
            precipitation: parse_f64(5)?,
            soil_water: parse_f64(6)?,
            soil_temperature: parse_f64(7)?,
        };
        let entry = cells
            .entry(cell_id)
            .or_insert_with(|| (latitude, longitude, Vec::new()));
        entry.2.push(rec);
    }
    if cells.is_empty() {
        return Err(schema_err(path, "no data rows"));
    }
    let mut out = Vec::with_capacity(cells.len());
    for (cell_id, (latitude, longitude, mut months)) in cells {
        months.sort_by_key(|m| (m.year, m.month));
        let series = GridMonthlySeries {
            cell_id,
            latitude,
            longitude,
            months,
        };
        series.validate()?;
        out.push(series);
    }
    Ok(out)
}

/// Writes extreme-index rows sorted by (id, year).
pub fn write_extremes_csv(path: &Path, rows: &[ExtremeYearIndex]) -> Result<(), ClimateError> {
    let mut sorted: Vec<&ExtremeYearIndex> = rows.iter().collect();
    sorted.sort_by(|a, b| (&a.id, a.year).cmp(&(&b.id, b.year)));
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => io_err(path, io),
        other => schema_err(path, format!("{other:?}")),
    })?;
    w.write_record(["id", "year", "espi", "esswi", "essti"])
        .map_err(|e| schema_err(path, e.to_string()))?;
    for r in sorted {
        w.write_record([
            r.id.as_str(),
            &r.year.to_string(),
            &sig9(r.espi),
            &sig9(r.esswi),
            &sig9(r.essti),
        ])
        .map_err(|e| schema_err(path, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads an extreme-index file written by [`write_extremes_csv`].
pub fn read_extremes_csv(path: &Path) -> Result<Vec<ExtremeYearIndex>, ClimateError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| schema_err(path, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| schema_err(path, e.to_string()))?
        .clone();
    let expected = ["id", "year", "espi", "esswi", "essti"];
    let positions: Vec<usize> = expected
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| schema_err(path, format!("missing column {name}")))
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| schema_err(path, e.to_string()))?;
        let field = |i: usize| -> &str { record.get(positions[i]).unwrap_or("") };
        let parse_f64 = |i: usize| -> Result<f64, ClimateError> {
            field(i).parse::<f64>().map_err(|_| {
                schema_err(
                    path,
                    format!("row {}: bad {} value {:?}", line + 2, expected[i], field(i)),
                )
            })
        };
        rows.push(ExtremeYearIndex {
            id: field(0).to_string(),
            year: field(1).parse().map_err(|_| {
                schema_err(path, format!("row {}: bad year {:?}", line + 2, field(1)))
            })?,
            espi: parse_f64(2)?,
            esswi: parse_f64(3)?,
            essti: parse_f64(4)?,
        });
    }
    Ok(rows)
}
