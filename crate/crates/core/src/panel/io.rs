//! Delimited-text schemas for the panel and its upstream inputs.
//!
//! - panel: `town_id,year,exposure,claims,cost,sums_insured,espi,esswi,essti,clay,cat`
//! - exposure: `town_id,year,exposure,sums_insured`
//! - claims: `town_id,year,claims,cost`
//! - cat history: `town_id,year`
//! - geometry: `town_id,cell_id,weight`
//! - clay: `cell_id,clay`
//!
//! Currency columns carry two-decimal amounts; floats are written with nine
//! significant digits.

use std::collections::BTreeMap;
use std::path::Path;

use super::{check_panel, CatHistory, ClaimRow, ExposureRow, PanelError, TownGeometry, TownYearRecord};
use crate::numfmt::{cents_to_decimal, decimal_to_cents, sig9};

fn schema_err(path: &Path, message: impl Into<String>) -> PanelError {
    PanelError::Schema {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> PanelError {
    PanelError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Column-position lookup that reports missing columns by name.
fn positions(
    path: &Path,
    headers: &csv::StringRecord,
    expected: &[&str],
) -> Result<Vec<usize>, PanelError> {
    expected
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| schema_err(path, format!("missing column {name}")))
        })
        .collect()
}

struct RowReader<'a> {
    path: &'a Path,
    expected: &'a [&'a str],
    positions: Vec<usize>,
}

impl<'a> RowReader<'a> {
    fn new(
        path: &'a Path,
        headers: &csv::StringRecord,
        expected: &'a [&'a str],
    ) -> Result<Self, PanelError> {
        Ok(RowReader {
            path,
            expected,
            positions: positions(path, headers, expected)?,
        })
    }

    fn get<'r>(&self, record: &'r csv::StringRecord, i: usize) -> &'r str {
        record.get(self.positions[i]).unwrap_or("")
    }

    fn bad(&self, line: usize, i: usize, value: &str) -> PanelError {
        schema_err(
            self.path,
            format!("row {}: bad {} value {:?}", line + 2, self.expected[i], value),
        )
    }

    fn parse_f64(&self, record: &csv::StringRecord, line: usize, i: usize) -> Result<f64, PanelError> {
        let v = self.get(record, i);
        v.parse::<f64>().map_err(|_| self.bad(line, i, v))
    }

    fn parse_i32(&self, record: &csv::StringRecord, line: usize, i: usize) -> Result<i32, PanelError> {
        let v = self.get(record, i);
        v.parse::<i32>().map_err(|_| self.bad(line, i, v))
    }

    fn parse_u64(&self, record: &csv::StringRecord, line: usize, i: usize) -> Result<u64, PanelError> {
        let v = self.get(record, i);
        v.parse::<u64>().map_err(|_| self.bad(line, i, v))
    }

    fn parse_cents(&self, record: &csv::StringRecord, line: usize, i: usize) -> Result<i64, PanelError> {
        let v = self.get(record, i);
        decimal_to_cents(v).map_err(|_| self.bad(line, i, v))
    }
}

fn open(path: &Path) -> Result<(csv::Reader<std::fs::File>, csv::StringRecord), PanelError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| schema_err(path, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| schema_err(path, e.to_string()))?
        .clone();
    Ok((reader, headers))
}

const PANEL_COLUMNS: [&str; 11] = [
    "town_id",
    "year",
    "exposure",
    "claims",
    "cost",
    "sums_insured",
    "espi",
    "esswi",
    "essti",
    "clay",
    "cat",
];

/// Writes the panel sorted by (town, year).
pub fn write_panel_csv(path: &Path, records: &[TownYearRecord]) -> Result<(), PanelError> {
    let mut sorted: Vec<&TownYearRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (&a.town_id, a.year).cmp(&(&b.town_id, b.year)));
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => io_err(path, io),
        other => schema_err(path, format!("{other:?}")),
    })?;
    w.write_record(PANEL_COLUMNS)
        .map_err(|e| schema_err(path, e.to_string()))?;
    for r in sorted {
        w.write_record([
            r.town_id.as_str(),
            &r.year.to_string(),
            &r.exposure.to_string(),
            &r.claims.to_string(),
            &cents_to_decimal(r.cost_cents),
            &cents_to_decimal(r.sums_insured_cents),
            &sig9(r.espi),
            &sig9(r.esswi),
            &sig9(r.essti),
            &sig9(r.clay),
            &r.cat.to_string(),
        ])
        .map_err(|e| schema_err(path, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads and validates a panel file.
pub fn read_panel_csv(path: &Path) -> Result<Vec<TownYearRecord>, PanelError> {
    let (mut reader, headers) = open(path)?;
    let rr = RowReader::new(path, &headers, &PANEL_COLUMNS)?;
    let mut records = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| schema_err(path, e.to_string()))?;
        let cat_raw = rr.get(&record, 10);
        let cat: u8 = cat_raw.parse().map_err(|_| rr.bad(line, 10, cat_raw))?;
        records.push(TownYearRecord {
            town_id: rr.get(&record, 0).to_string(),
            year: rr.parse_i32(&record, line, 1)?,
            exposure: rr.parse_u64(&record, line, 2)?,
            claims: rr.parse_u64(&record, line, 3)?,
            cost_cents: rr.parse_cents(&record, line, 4)?,
            sums_insured_cents: rr.parse_cents(&record, line, 5)?,
            espi: rr.parse_f64(&record, line, 6)?,
            esswi: rr.parse_f64(&record, line, 7)?,
            essti: rr.parse_f64(&record, line, 8)?,
            clay: rr.parse_f64(&record, line, 9)?,
            cat,
        });
    }
    records.sort_by(|a, b| (&a.town_id, a.year).cmp(&(&b.town_id, b.year)));
    let mut seen: std::collections::BTreeSet<(&str, i32)> = std::collections::BTreeSet::new();
    for r in &records {
        if !seen.insert((r.town_id.as_str(), r.year)) {
            return Err(PanelError::DuplicateKey {
                town_id: r.town_id.clone(),
                year: r.year,
                context: path.display().to_string(),
            });
        }
    }
    check_panel(&records)?;
    Ok(records)
}

/// Reads the exposure file (`town_id,year,exposure,sums_insured`).
pub fn read_exposure_csv(path: &Path) -> Result<Vec<ExposureRow>, PanelError> {
    let (mut reader, headers) = open(path)?;
    let rr = RowReader::new(path, &headers, &["town_id", "year", "exposure", "sums_insured"])?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| schema_err(path, e.to_string()))?;
        rows.push(ExposureRow {
            town_id: rr.get(&record, 0).to_string(),
            year: rr.parse_i32(&record, line, 1)?,
            exposure: rr.parse_u64(&record, line, 2)?,
            sums_insured_cents: rr.parse_cents(&record, line, 3)?,
        });
    }
    Ok(rows)
}

/// Writes the exposure file sorted by (town, year).
pub fn write_exposure_csv(path: &Path, rows: &[ExposureRow]) -> Result<(), PanelError> {
    let mut sorted: Vec<&ExposureRow> = rows.iter().collect();
    sorted.sort_by(|a, b| (&a.town_id, a.year).cmp(&(&b.town_id, b.year)));
    let mut w = csv::Writer::from_path(path).map_err(|e| schema_err(path, e.to_string()))?;
    w.write_record(["town_id", "year", "exposure", "sums_insured"])
        .map_err(|e| schema_err(path, e.to_string()))?;
    for r in sorted {
        w.write_record([
            r.town_id.as_str(),
            &r.year.to_string(),
            &r.exposure.to_string(),
            &cents_to_decimal(r.sums_insured_cents),
        ])
        .map_err(|e| schema_err(path, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads the claims file (`town_id,year,claims,cost`).
pub fn read_claims_csv(path: &Path) -> Result<Vec<ClaimRow>, PanelError> {
    let (mut reader, headers) = open(path)?;
    let rr = RowReader::new(path, &headers, &["town_id", "year", "claims", "cost"])?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| schema_err(path, e.to_string()))?;
        rows.push(ClaimRow {
            town_id: rr.get(&record, 0).to_string(),
            year: rr.parse_i32(&record, line, 1)?,
            claims: rr.parse_u64(&record, line, 2)?,
            cost_cents: rr.parse_cents(&record, line, 3)?,
        });
    }
    Ok(rows)
}

/// Writes the claims file sorted by (town, year).
pub fn write_claims_csv(path: &Path, rows: &[ClaimRow]) -> Result<(), PanelError> {
    let mut sorted: Vec<&ClaimRow> = rows.iter().collect();
    sorted.sort_by(|a, b| (&a.town_id, a.year).cmp(&(&b.town_id, b.year)));
    let mut w = csv::Writer::from_path(path).map_err(|e| schema_err(path, e.to_string()))?;
    w.write_record(["town_id", "year", "claims", "cost"])
        .map_err(|e| schema_err(path, e.to_string()))?;
    for r in sorted {
        w.write_record([
            r.town_id.as_str(),
            &r.year.to_string(),
            &r.claims.to_string(),
            &cents_to_decimal(r.cost_cents),
        ])
        .map_err(|e| schema_err(path, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads the request-history file (`town_id,year`).
pub fn read_cat_history_csv(path: &Path) -> Result<CatHistory, PanelError> {
    let (mut reader, headers) = open(path)?;
    let rr = RowReader::new(path, &headers, &["town_id", "year"])?;
    let mut requests = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| schema_err(path, e.to_string()))?;
        requests.push((
            rr.get(&record, 0).to_string(),
            rr.parse_i32(&record, line, 1)?,
        ));
    }
    Ok(CatHistory::from_requests(requests))
}

/// Writes a request-history file sorted by (town, year).
pub fn write_cat_history_csv(path: &Path, requests: &[(String, i32)]) -> Result<(), PanelError> {
    let mut sorted: Vec<&(String, i32)> = requests.iter().collect();
    sorted.sort();
    let mut w = csv::Writer::from_path(path).map_err(|e| schema_err(path, e.to_string()))?;
    w.write_record(["town_id", "year"])
        .map_err(|e| schema_err(path, e.to_string()))?;
    for (town, year) in sorted {
        w.write_record([town.as_str(), &year.to_string()])
            .map_err(|e| schema_err(path, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads geometry weights (`town_id,cell_id,weight`) grouped per town.
pub fn read_geometry_csv(path: &Path) -> Result<Vec<TownGeometry>, PanelError> {
    let (mut reader, headers) = open(path)?;
    let rr = RowReader::new(path, &headers, &["town_id", "cell_id", "weight"])?;
    let mut by_town: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| schema_err(path, e.to_string()))?;
        by_town
            .entry(rr.get(&record, 0).to_string())
            .or_default()
            .push((
                rr.get(&record, 1).to_string(),
                rr.parse_f64(&record, line, 2)?,
            ));
    }
    let mut out = Vec::with_capacity(by_town.len());
    for (town_id, cells) in by_town {
        let g = TownGeometry { town_id, cells };
        g.validate()?;
        out.push(g);
    }
    Ok(out)
}

/// Writes geometry weights sorted by (town, cell).
pub fn write_geometry_csv(path: &Path, geometries: &[TownGeometry]) -> Result<(), PanelError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| schema_err(path, e.to_string()))?;
    w.write_record(["town_id", "cell_id", "weight"])
        .map_err(|e| schema_err(path, e.to_string()))?;
    let mut sorted: Vec<&TownGeometry> = geometries.iter().collect();
    sorted.sort_by(|a, b| a.town_id.cmp(&b.town_id));
    for g in sorted {
        let mut cells: Vec<&(String, f64)> = g.cells.iter().collect();
        cells.sort_by(|a, b| a.0.cmp(&b.0));
        for (cell, weight) in cells {
            w.write_record([g.town_id.as_str(), cell.as_str(), &sig9(*weight)])
                .map_err(|e| schema_err(path, e.to_string()))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads per-cell clay values (`cell_id,clay`).
pub fn read_clay_csv(path: &Path) -> Result<BTreeMap<String, f64>, PanelError> {
    let (mut reader, headers) = open(path)?;
    let rr = RowReader::new(path, &headers, &["cell_id", "clay"])?;
    let mut out = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| schema_err(path, e.to_string()))?;
        out.insert(
            rr.get(&record, 0).to_string(),
            rr.parse_f64(&record, line, 1)?,
        );
    }
    Ok(out)
}

/// Writes per-cell clay values sorted by cell.
pub fn write_clay_csv(path: &Path, clay: &BTreeMap<String, f64>) -> Result<(), PanelError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| schema_err(path, e.to_string()))?;
    w.write_record(["cell_id", "clay"])
        .map_err(|e| schema_err(path, e.to_string()))?;
    for (cell, v) in clay {
        w.write_record([cell.as_str(), &sig9(*v)])
            .map_err(|e| schema_err(path, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(town: &str, year: i32, claims: u64, cost_cents: i64) -> TownYearRecord {
        TownYearRecord {
            town_id: town.to_string(),
            year,
            exposure: 100,
            claims,
            cost_cents,
            sums_insured_cents: 100_000_000,
            espi: -0.25,
            esswi: -1.5,
            essti: 0.75,
            clay: 33.0,
            cat: 0,
        }
    }

    #[test]
    fn panel_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        let records = vec![record("T2", 2001, 0, 0), record("T1", 2002, 3, 4_890_000)];
        write_panel_csv(&path, &records).unwrap();
        let back = read_panel_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].town_id, "T1");
        assert_eq!(back[0].cost_cents, 4_890_000);
        assert_eq!(back[1].town_id, "T2");
        // A second write of the parsed records is byte-identical.
        let path2 = dir.path().join("panel2.csv");
        write_panel_csv(&path2, &back).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn panel_read_rejects_duplicates_and_violations() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        write_panel_csv(&path, &[record("T1", 2001, 0, 0), record("T1", 2001, 0, 0)]).unwrap();
        assert!(matches!(
            read_panel_csv(&path),
            Err(PanelError::DuplicateKey { .. })
        ));
        let mut bad = record("T1", 2001, 0, 500);
        bad.claims = 0;
        write_panel_csv(&path, &[bad]).unwrap();
        assert!(matches!(
            read_panel_csv(&path),
            Err(PanelError::InvariantViolation { .. })
        ));
    }

    #[test]
    fn geometry_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("geometry.csv");
        let gs = vec![TownGeometry {
            town_id: "T1".to_string(),
            cells: vec![("B".to_string(), 0.25), ("A".to_string(), 0.75)],
        }];
        write_geometry_csv(&path, &gs).unwrap();
        let back = read_geometry_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].cells.len(), 2);
        assert_eq!(back[0].cells[0].0, "A");
    }
}
