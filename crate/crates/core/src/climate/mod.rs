//! Standardized drought indices from gridded monthly climate series.
//!
//! Raw monthly precipitation, soil water and soil temperature are aggregated
//! over 3-month windows, calibrated month-wise against a gamma distribution
//! over a reference period, and mapped to standard-normal quantiles (SPI,
//! SSWI, SSTI). Seasonal values are the windows ending in February, May,
//! August and November; yearly extremes take the minimum over seasons for
//! SPI/SSWI and the maximum for SSTI.

mod gamma;
pub mod io;
mod rolling;

pub use gamma::{fit_gamma_mle, fit_standardizer, standardize, trigamma, GammaStandardizer, ShiftPolicy};
pub use rolling::{rolling_3month, RollingEntry, RollingSeries};

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClimateError {
    #[error("empty climate series for cell {cell_id}")]
    EmptySeries { cell_id: String },
    #[error("cell {cell_id}: months not strictly increasing at {year}-{month:02}")]
    UnorderedMonths { cell_id: String, year: i32, month: u8 },
    #[error("out of range: {message}")]
    OutOfRange { message: String },
    #[error("degenerate sample: {message}")]
    DegenerateSample { message: String },
    #[error("gamma fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("no standardizer for calendar month {month}")]
    MissingStandardizer { month: u8 },
    #[error("year {year} has only {present} of 4 seasons")]
    IncompleteYear { year: i32, present: usize },
    #[error("schema error in {path}: {message}")]
    Schema { path: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One month of raw climate data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonthRecord {
    pub year: i32,
    pub month: u8,
    /// Daily-average precipitation for the month, mm/day.
    pub precipitation: f64,
    /// Volumetric soil water content in [0, 1].
    pub soil_water: f64,
    /// Soil temperature, kelvin.
    pub soil_temperature: f64,
}

/// Monthly climate series for one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMonthlySeries {
    pub cell_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub months: Vec<MonthRecord>,
}

impl GridMonthlySeries {
    /// Checks ordering and physical ranges.
    pub fn validate(&self) -> Result<(), ClimateError> {
        if self.months.is_empty() {
            return Err(ClimateError::EmptySeries {
                cell_id: self.cell_id.clone(),
            });
        }
        let mut prev: Option<(i32, u8)> = None;
        for m in &self.months {
            if !(1..=12).contains(&m.month) {
                return Err(ClimateError::OutOfRange {
                    message: format!("cell {}: month {} out of 1-12", self.cell_id, m.month),
                });
            }
            if let Some(p) = prev {
                if (m.year, m.month) <= p {
                    return Err(ClimateError::UnorderedMonths {
                        cell_id: self.cell_id.clone(),
                        year: m.year,
                        month: m.month,
                    });
                }
            }
            prev = Some((m.year, m.month));
            if m.precipitation < 0.0 {
                return Err(ClimateError::OutOfRange {
                    message: format!(
                        "cell {}: negative precipitation at {}-{:02}",
                        self.cell_id, m.year, m.month
                    ),
                });
            }
            if !(0.0..=1.0).contains(&m.soil_water) {
                return Err(ClimateError::OutOfRange {
                    message: format!(
                        "cell {}: soil water {} outside [0,1] at {}-{:02}",
                        self.cell_id, m.soil_water, m.year, m.month
                    ),
                });
            }
        }
        Ok(())
    }
}

/// The three standardized variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClimateVariable {
    Precipitation,
    SoilWater,
    SoilTemperature,
}

impl ClimateVariable {
    fn pick(self, m: &MonthRecord) -> f64 {
        match self {
            ClimateVariable::Precipitation => m.precipitation,
            ClimateVariable::SoilWater => m.soil_water,
            ClimateVariable::SoilTemperature => m.soil_temperature,
        }
    }

    fn shift_policy(self) -> ShiftPolicy {
        match self {
            ClimateVariable::SoilTemperature => ShiftPolicy::MinMinusOne,
            _ => ShiftPolicy::None,
        }
    }
}

/// Meteorological seasons, each identified by the final month of its 3-month
/// window: DJF ends in February, MAM in May, JJA in August, SON in November.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Autumn,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Winter, Season::Spring, Season::Summer, Season::Autumn];

    /// Final month of the season's 3-month window.
    pub fn end_month(self) -> u8 {
        match self {
            Season::Winter => 2,
            Season::Spring => 5,
            Season::Summer => 8,
            Season::Autumn => 11,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Season::Winter => "winter",
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Autumn => "autumn",
        }
    }
}

/// One seasonal triple of standardized indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeasonalEntry {
    pub year: i32,
    pub season: Season,
    pub spi: f64,
    pub sswi: f64,
    pub ssti: f64,
}

/// Seasonal standardized indices for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalIndexSeries {
    pub cell_id: String,
    pub entries: Vec<SeasonalEntry>,
}

/// Yearly extreme indices: minima of seasonal SPI/SSWI, maximum of SSTI.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremeYearIndex {
    /// Cell id, or town id after spatial aggregation.
    pub id: String,
    pub year: i32,
    pub espi: f64,
    pub esswi: f64,
    pub essti: f64,
}

/// Month-wise standardizers for the three variables of one cell. Index 0
/// holds January.
#[derive(Debug, Clone)]
pub struct CellStandardizers {
    pub precipitation: Vec<GammaStandardizer>,
    pub soil_water: Vec<GammaStandardizer>,
    pub soil_temperature: Vec<GammaStandardizer>,
}

impl CellStandardizers {
    fn for_variable(&self, v: ClimateVariable) -> &[GammaStandardizer] {
        match v {
            ClimateVariable::Precipitation => &self.precipitation,
            ClimateVariable::SoilWater => &self.soil_water,
            ClimateVariable::SoilTemperature => &self.soil_temperature,
        }
    }
}

/// Calibrates standardizers for all 12 calendar months of all three
/// variables, using windows whose final month falls inside `reference_years`.
pub fn fit_cell_standardizers(
    series: &GridMonthlySeries,
    reference_years: (i32, i32),
) -> Result<CellStandardizers, ClimateError> {
    series.validate()?;
    let mut out: Vec<Vec<GammaStandardizer>> = Vec::with_capacity(3);
    for variable in [
        ClimateVariable::Precipitation,
        ClimateVariable::SoilWater,
        ClimateVariable::SoilTemperature,
    ] {
        let rolled = rolling_3month(series, variable)?;
        let mut by_month: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
        for e in &rolled.entries {
            if e.year >= reference_years.0 && e.year <= reference_years.1 {
                by_month.entry(e.month).or_default().push(e.value);
            }
        }
        let mut fits = Vec::with_capacity(12);
        for month in 1..=12u8 {
            let values = by_month
                .get(&month)
                .ok_or(ClimateError::MissingStandardizer { month })?;
            fits.push(fit_standardizer(
                values,
                variable.shift_policy(),
                month,
                reference_years,
            )?);
        }
        out.push(fits);
    }
    let soil_temperature = out.pop().expect("three variables fitted");
    let soil_water = out.pop().expect("three variables fitted");
    let precipitation = out.pop().expect("three variables fitted");
    Ok(CellStandardizers {
        precipitation,
        soil_water,
        soil_temperature,
    })
}

/// Standardizes the windows ending in each season's final month.
///
/// A season is emitted only when all three variables have a complete window
/// for that month; gaps are skipped silently here and surface later as
/// incomplete years.
pub fn seasonal_index(
    series: &GridMonthlySeries,
    standardizers: &CellStandardizers,
) -> Result<SeasonalIndexSeries, ClimateError> {
    series.validate()?;
    for v in [
        ClimateVariable::Precipitation,
        ClimateVariable::SoilWater,
        ClimateVariable::SoilTemperature,
    ] {
        let fits = standardizers.for_variable(v);
        if fits.len() != 12 {
            return Err(ClimateError::MissingStandardizer {
                month: fits.len() as u8 + 1,
            });
        }
    }
    let precip = rolling_3month(series, ClimateVariable::Precipitation)?;
    let water = rolling_3month(series, ClimateVariable::SoilWater)?;
    let temp = rolling_3month(series, ClimateVariable::SoilTemperature)?;
    let years: Vec<i32> = {
        let mut ys: Vec<i32> = precip.entries.iter().map(|e| e.year).collect();
        ys.dedup();
        ys
    };
    let mut entries = Vec::new();
    for year in years {
        for season in Season::ALL {
            let month = season.end_month();
            let (Some(p), Some(w), Some(t)) = (
                precip.value_at(year, month),
                water.value_at(year, month),
                temp.value_at(year, month),
            ) else {
                continue;
            };
            let idx = (month - 1) as usize;
            entries.push(SeasonalEntry {
                year,
                season,
                spi: standardize(p, &standardizers.precipitation[idx]),
                sswi: standardize(w, &standardizers.soil_water[idx]),
                ssti: standardize(t, &standardizers.soil_temperature[idx]),
            });
        }
    }
    Ok(SeasonalIndexSeries {
        cell_id: series.cell_id.clone(),
        entries,
    })
}

/// Result of collapsing seasons to yearly extremes; partial years are
/// skipped and reported, not fatal.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremeYearOutcome {
    pub indices: Vec<ExtremeYearIndex>,
    pub incomplete_years: Vec<i32>,
}

/// Collapses seasonal indices to yearly extremes: minimum over seasons for
/// SPI and SSWI, maximum for SSTI. Years missing a season are skipped and
/// listed in the outcome.
pub fn extreme_year_index(seasonal: &SeasonalIndexSeries) -> ExtremeYearOutcome {
    let mut by_year: BTreeMap<i32, Vec<&SeasonalEntry>> = BTreeMap::new();
    for e in &seasonal.entries {
        by_year.entry(e.year).or_default().push(e);
    }
    let mut indices = Vec::new();
    let mut incomplete = Vec::new();
    for (year, entries) in by_year {
        if entries.len() != 4 {
            incomplete.push(year);
            continue;
        }
        let espi = entries.iter().map(|e| e.spi).fold(f64::INFINITY, f64::min);
        let esswi = entries.iter().map(|e| e.sswi).fold(f64::INFINITY, f64::min);
        let essti = entries
            .iter()
            .map(|e| e.ssti)
            .fold(f64::NEG_INFINITY, f64::max);
        indices.push(ExtremeYearIndex {
            id: seasonal.cell_id.clone(),
            year,
            espi,
            esswi,
            essti,
        });
    }
    ExtremeYearOutcome {
        indices,
        incomplete_years: incomplete,
    }
}

/// Full chain for one cell: calibrate over the reference period, standardize
/// every seasonal window, and collapse to yearly extremes.
pub fn compute_cell_extremes(
    series: &GridMonthlySeries,
    reference_years: (i32, i32),
) -> Result<ExtremeYearOutcome, ClimateError> {
    let standardizers = fit_cell_standardizers(series, reference_years)?;
    let seasonal = seasonal_index(series, &standardizers)?;
    Ok(extreme_year_index(&seasonal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn synthetic_series(cell: &str, seed: u64, years: std::ops::RangeInclusive<i32>) -> GridMonthlySeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut months = Vec::new();
        for year in years {
            for month in 1..=12u8 {
                let seasonal = (month as f64 / 12.0 * std::f64::consts::TAU).sin();
                let precip = (2.0 + seasonal + rng.random::<f64>() * 2.0).max(0.0);
                let water = (0.3 + 0.1 * seasonal + rng.random::<f64>() * 0.2).clamp(0.0, 1.0);
                let temp = 278.0 + 8.0 * seasonal + rng.random::<f64>() * 3.0;
                months.push(MonthRecord {
                    year,
                    month,
                    precipitation: precip,
                    soil_water: water,
                    soil_temperature: temp,
                });
            }
        }
        GridMonthlySeries {
            cell_id: cell.to_string(),
            latitude: 45.0,
            longitude: 3.0,
            months,
        }
    }

    #[test]
    fn validate_rejects_disorder_and_ranges() {
        let mut s = synthetic_series("C1", 1, 2001..=2002);
        s.months.swap(3, 4);
        assert!(matches!(s.validate(), Err(ClimateError::UnorderedMonths { .. })));
        let mut s = synthetic_series("C1", 1, 2001..=2002);
        s.months[0].soil_water = 1.5;
        assert!(matches!(s.validate(), Err(ClimateError::OutOfRange { .. })));
    }

    #[test]
    fn seasonal_indices_near_zero_for_symmetric_record() {
        let s = synthetic_series("C1", 7, 1981..=2020);
        let stds = fit_cell_standardizers(&s, (1981, 2020)).unwrap();
        let seasonal = seasonal_index(&s, &stds).unwrap();
        assert!(!seasonal.entries.is_empty());
        let mean_spi: f64 = seasonal.entries.iter().map(|e| e.spi).sum::<f64>()
            / seasonal.entries.len() as f64;
        assert!(mean_spi.abs() < 0.2, "mean SPI {mean_spi}");
    }

    #[test]
    fn standardization_yields_near_normal_moments() {
        for seed in [3u64, 11, 29] {
            let s = synthetic_series("C1", seed, 1981..=2020);
            let stds = fit_cell_standardizers(&s, (1981, 2020)).unwrap();
            let seasonal = seasonal_index(&s, &stds).unwrap();
            for pick in [|e: &SeasonalEntry| e.spi, |e: &SeasonalEntry| e.sswi, |e: &SeasonalEntry| e.ssti] {
                let xs: Vec<f64> = seasonal.entries.iter().map(pick).collect();
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                assert!(mean.abs() <= 0.15, "seed {seed}: mean {mean}");
                assert!((0.7..=1.3).contains(&var), "seed {seed}: variance {var}");
            }
        }
    }

    #[test]
    fn spi_is_invariant_under_precipitation_rescaling() {
        let base = synthetic_series("C1", 13, 1981..=2020);
        let mut scaled = base.clone();
        for m in &mut scaled.months {
            m.precipitation *= 3.7;
        }
        let a = {
            let stds = fit_cell_standardizers(&base, (1981, 2020)).unwrap();
            seasonal_index(&base, &stds).unwrap()
        };
        let b = {
            let stds = fit_cell_standardizers(&scaled, (1981, 2020)).unwrap();
            seasonal_index(&scaled, &stds).unwrap()
        };
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert_relative_eq!(x.spi, y.spi, epsilon = 1e-6);
        }
    }

    #[test]
    fn extremes_are_order_statistics() {
        let seasonal = SeasonalIndexSeries {
            cell_id: "C1".to_string(),
            entries: vec![
                SeasonalEntry { year: 2001, season: Season::Winter, spi: 0.5, sswi: 0.1, ssti: 0.1 },
                SeasonalEntry { year: 2001, season: Season::Spring, spi: -1.2, sswi: -0.5, ssti: 2.3 },
                SeasonalEntry { year: 2001, season: Season::Summer, spi: 0.3, sswi: -2.0, ssti: 1.0 },
                SeasonalEntry { year: 2001, season: Season::Autumn, spi: 0.0, sswi: 0.4, ssti: -0.4 },
            ],
        };
        let out = extreme_year_index(&seasonal);
        assert_eq!(out.indices.len(), 1);
        let idx = &out.indices[0];
        assert_relative_eq!(idx.espi, -1.2);
        assert_relative_eq!(idx.esswi, -2.0);
        assert_relative_eq!(idx.essti, 2.3);

        // Permuting season labels leaves extremes unchanged.
        let mut shuffled = seasonal.clone();
        shuffled.entries.reverse();
        let out2 = extreme_year_index(&shuffled);
        assert_eq!(out.indices, out2.indices);
    }

    #[test]
    fn partial_years_are_skipped_and_reported() {
        let seasonal = SeasonalIndexSeries {
            cell_id: "C1".to_string(),
            entries: vec![SeasonalEntry {
                year: 2001,
                season: Season::Summer,
                spi: 0.0,
                sswi: 0.0,
                ssti: 0.0,
            }],
        };
        let out = extreme_year_index(&seasonal);
        assert!(out.indices.is_empty());
        assert_eq!(out.incomplete_years, vec![2001]);
    }

    #[test]
    fn full_chain_produces_extremes_inside_coverage() {
        let s = synthetic_series("C1", 5, 1981..=2020);
        let out = compute_cell_extremes(&s, (1981, 2020)).unwrap();
        // 1981 lacks a complete winter window (needs Dec 1980).
        assert_eq!(out.indices.first().unwrap().year, 1982);
        assert_eq!(out.indices.last().unwrap().year, 2020);
        for idx in &out.indices {
            assert!(idx.espi.is_finite() && idx.esswi.is_finite() && idx.essti.is_finite());
            assert!((-5.0..=5.0).contains(&idx.espi));
        }
        assert_eq!(out.incomplete_years, vec![1981]);
    }

    #[test]
    fn driest_year_attains_minimum_summer_spi() {
        let mut s = synthetic_series("C1", 17, 1981..=2020);
        for m in &mut s.months {
            if m.year == 2003 && (6..=8).contains(&m.month) {
                m.precipitation = 0.01;
            }
        }
        let stds = fit_cell_standardizers(&s, (1981, 2020)).unwrap();
        let seasonal = seasonal_index(&s, &stds).unwrap();
        let summer_2003 = seasonal
            .entries
            .iter()
            .find(|e| e.year == 2003 && e.season == Season::Summer)
            .unwrap()
            .spi;
        let min_summer = seasonal
            .entries
            .iter()
            .filter(|e| e.season == Season::Summer)
            .map(|e| e.spi)
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(summer_2003, min_summer);
    }
}
