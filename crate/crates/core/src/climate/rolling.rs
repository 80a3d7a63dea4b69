//! 3-month rolling aggregation of monthly climate series.

use super::{ClimateError, ClimateVariable, GridMonthlySeries};

/// One 3-month aggregate, labelled by the window's final month.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollingEntry {
    pub year: i32,
    pub month: u8,
    pub value: f64,
}

/// Rolling aggregates for one cell and one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct RollingSeries {
    pub entries: Vec<RollingEntry>,
    /// Windows dropped because a gap left them incomplete. Skipping is
    /// flagged here rather than aborting the series.
    pub skipped_windows: usize,
}

impl RollingSeries {
    /// Value of the window ending at (year, month), if present.
    pub fn value_at(&self, year: i32, month: u8) -> Option<f64> {
        self.entries
            .binary_search_by_key(&(year, month), |e| (e.year, e.month))
            .ok()
            .map(|i| self.entries[i].value)
    }
}

fn linear_month(year: i32, month: u8) -> i64 {
    year as i64 * 12 + (month as i64 - 1)
}

/// Computes 3-month aggregates: the sum for precipitation and the mean for
/// soil water and soil temperature, labelled by the window's final month.
/// Windows whose two predecessor months are missing are skipped and counted.
pub fn rolling_3month(
    series: &GridMonthlySeries,
    variable: ClimateVariable,
) -> Result<RollingSeries, ClimateError> {
    if series.months.is_empty() {
        return Err(ClimateError::EmptySeries {
            cell_id: series.cell_id.clone(),
        });
    }
    let values: Vec<(i64, f64)> = series
        .months
        .iter()
        .map(|m| (linear_month(m.year, m.month), variable.pick(m)))
        .collect();
    let mut entries = Vec::with_capacity(values.len());
    let mut skipped = 0usize;
    for (i, &(t, v)) in values.iter().enumerate() {
        if i < 2 {
            continue;
        }
        let (t1, v1) = values[i - 1];
        let (t2, v2) = values[i - 2];
        if t1 != t - 1 || t2 != t - 2 {
            skipped += 1;
            continue;
        }
        let agg = match variable {
            ClimateVariable::Precipitation => v2 + v1 + v,
            ClimateVariable::SoilWater | ClimateVariable::SoilTemperature => (v2 + v1 + v) / 3.0,
        };
        let year = (t.div_euclid(12)) as i32;
        let month = (t.rem_euclid(12) + 1) as u8;
        entries.push(RollingEntry { year, month, value: agg });
    }
    Ok(RollingSeries {
        entries,
        skipped_windows: skipped,
    })
}
