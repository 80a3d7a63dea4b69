//! Cell-to-town aggregation of clay and drought indices.

use std::collections::BTreeMap;

use super::PanelError;
use crate::climate::ExtremeYearIndex;

/// Area weights of the grid cells overlapping one town.
#[derive(Debug, Clone, PartialEq)]
pub struct TownGeometry {
    pub town_id: String,
    /// (cell_id, weight) pairs; weights are positive and sum to 1.
    pub cells: Vec<(String, f64)>,
}

impl TownGeometry {
    pub fn validate(&self) -> Result<(), PanelError> {
        if self.cells.is_empty() {
            return Err(PanelError::BadGeometry {
                town_id: self.town_id.clone(),
                message: "no member cells".to_string(),
            });
        }
        let total: f64 = self.cells.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(PanelError::BadGeometry {
                town_id: self.town_id.clone(),
                message: format!("weights sum to {total}, expected 1"),
            });
        }
        if self.cells.iter().any(|(_, w)| *w < 0.0) {
            return Err(PanelError::BadGeometry {
                town_id: self.town_id.clone(),
                message: "negative weight".to_string(),
            });
        }
        Ok(())
    }
}

/// Town clay content: the maximum over member cells, matching the principle
/// that the most shrink-swell-prone soil in a town drives its risk.
pub fn aggregate_clay(
    cell_clay: &BTreeMap<String, f64>,
    geometry: &TownGeometry,
) -> Result<f64, PanelError> {
    geometry.validate()?;
    let mut max = f64::NEG_INFINITY;
    for (cell_id, _) in &geometry.cells {
        let v = cell_clay.get(cell_id).ok_or_else(|| PanelError::MissingCell {
            town_id: geometry.town_id.clone(),
            cell_id: cell_id.clone(),
            what: "clay".to_string(),
        })?;
        max = max.max(*v);
    }
    Ok(max)
}

/// Town extreme indices: the area-weighted mean of member-cell indices for
/// each year covered by every member cell.
pub fn aggregate_indices(
    cell_indices: &[ExtremeYearIndex],
    geometry: &TownGeometry,
) -> Result<Vec<ExtremeYearIndex>, PanelError> {
    geometry.validate()?;
    let mut by_cell_year: BTreeMap<(&str, i32), &ExtremeYearIndex> = BTreeMap::new();
    for idx in cell_indices {
        by_cell_year.insert((idx.id.as_str(), idx.year), idx);
    }
    let years: Vec<i32> = {
        let mut ys: Vec<i32> = cell_indices
            .iter()
            .filter(|i| geometry.cells.iter().any(|(c, _)| *c == i.id))
            .map(|i| i.year)
            .collect();
        ys.sort_unstable();
        ys.dedup();
        ys
    };
    let mut out = Vec::with_capacity(years.len());
    for year in years {
        let mut espi = 0.0;
        let mut esswi = 0.0;
        let mut essti = 0.0;
        for (cell_id, weight) in &geometry.cells {
            let idx = by_cell_year
                .get(&(cell_id.as_str(), year))
                .ok_or_else(|| PanelError::MissingCell {
                    town_id: geometry.town_id.clone(),
                    cell_id: cell_id.clone(),
                    what: format!("indices for {year}"),
                })?;
            espi += weight * idx.espi;
            esswi += weight * idx.esswi;
            essti += weight * idx.essti;
        }
        out.push(ExtremeYearIndex {
            id: geometry.town_id.clone(),
            year,
            espi,
            esswi,
            essti,
        });
    }
    Ok(out)
}
