//! Town-year panel: the canonical model-input table.
//!
//! The panel joins insurance exposure and claims files with town-level
//! drought indices, clay content, and the historical catastrophe-request
//! flag. One row per (town, year) present in the exposure file; every row
//! satisfies the structural invariants checked by [`TownYearRecord::check`].

mod aggregate;
mod build;
pub mod io;

pub use aggregate::{aggregate_clay, aggregate_indices, TownGeometry};
pub use build::{build_panel, update_cat_flag, CatHistory, ClaimRow, ExposureRow};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("schema error in {path}: {message}")]
    Schema { path: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate key ({town_id}, {year}) in {context}")]
    DuplicateKey {
        town_id: String,
        year: i32,
        context: String,
    },
    #[error("town {town_id}: missing {what} for cell {cell_id}")]
    MissingCell {
        town_id: String,
        cell_id: String,
        what: String,
    },
    #[error("town {town_id} year {year}: no index coverage")]
    IncompleteCoverage { town_id: String, year: i32 },
    #[error("geometry for town {town_id}: {message}")]
    BadGeometry { town_id: String, message: String },
    #[error("{} row(s) violate panel invariants; first: {first}", .count)]
    InvariantViolation { count: usize, first: String },
}

/// One town-year observation with responses and covariates.
///
/// Currency amounts are integer cents. Invariants: no claims without
/// exposure, no cost without claims, `clay` a percentage, `cat` binary and
/// non-decreasing over years within a town.
#[derive(Debug, Clone, PartialEq)]
pub struct TownYearRecord {
    pub town_id: String,
    pub year: i32,
    /// Insured houses.
    pub exposure: u64,
    /// Claim count.
    pub claims: u64,
    /// Total claim cost, cents.
    pub cost_cents: i64,
    /// Total sums insured, cents.
    pub sums_insured_cents: i64,
    pub espi: f64,
    pub esswi: f64,
    pub essti: f64,
    /// Clay concentration, percent in [0, 100].
    pub clay: f64,
    /// 1 when the town made a catastrophe request in any earlier year.
    pub cat: u8,
}

impl TownYearRecord {
    /// Validates the single-row invariants; returns a human-readable
    /// violation description on failure.
    pub fn check(&self) -> Result<(), String> {
        let key = format!("({}, {})", self.town_id, self.year);
        if self.exposure == 0 && self.claims > 0 {
            return Err(format!("{key}: {} claims with zero exposure", self.claims));
        }
        if self.claims == 0 && self.cost_cents != 0 {
            return Err(format!("{key}: nonzero cost with zero claims"));
        }
        if self.cost_cents < 0 || self.sums_insured_cents < 0 {
            return Err(format!("{key}: negative currency amount"));
        }
        if !(0.0..=100.0).contains(&self.clay) {
            return Err(format!("{key}: clay {} outside [0, 100]", self.clay));
        }
        if self.cat > 1 {
            return Err(format!("{key}: cat flag {} not binary", self.cat));
        }
        for (name, v) in [("espi", self.espi), ("esswi", self.esswi), ("essti", self.essti)] {
            if !v.is_finite() {
                return Err(format!("{key}: non-finite {name}"));
            }
        }
        Ok(())
    }

    /// Average claim cost in currency units; `None` when there are no claims.
    pub fn severity(&self) -> Option<f64> {
        if self.claims == 0 {
            None
        } else {
            Some(self.cost_cents as f64 / 100.0 / self.claims as f64)
        }
    }
}

/// Checks cross-row invariants (cat monotone within towns) plus every row's
/// own invariants. `records` must be sorted by (town, year).
pub fn check_panel(records: &[TownYearRecord]) -> Result<(), PanelError> {
    let mut violations: Vec<String> = Vec::new();
    for r in records {
        if let Err(v) = r.check() {
            violations.push(v);
        }
    }
    for pair in records.windows(2) {
        if pair[0].town_id == pair[1].town_id && pair[0].cat > pair[1].cat {
            violations.push(format!(
                "({}, {}): cat flag decreases from previous year",
                pair[1].town_id, pair[1].year
            ));
        }
    }
    if let Some(first) = violations.first() {
        return Err(PanelError::InvariantViolation {
            count: violations.len(),
            first: first.clone(),
        });
    }
    Ok(())
}
