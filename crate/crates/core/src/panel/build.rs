//! Panel assembly from exposure, claims, indices, clay and request history.

use std::collections::{BTreeMap, BTreeSet};

use super::{check_panel, PanelError, TownYearRecord};
use crate::climate::ExtremeYearIndex;

/// One exposure-file row.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureRow {
    pub town_id: String,
    pub year: i32,
    pub exposure: u64,
    pub sums_insured_cents: i64,
}

/// One claims-file row.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimRow {
    pub town_id: String,
    pub year: i32,
    pub claims: u64,
    pub cost_cents: i64,
}

/// Catastrophe-request history: the years each town filed a request.
#[derive(Debug, Clone, Default)]
pub struct CatHistory {
    /// Earliest request year per town; later requests never change the flag.
    first_request: BTreeMap<String, i32>,
}

impl CatHistory {
    pub fn from_requests<I: IntoIterator<Item = (String, i32)>>(requests: I) -> Self {
        let mut first_request: BTreeMap<String, i32> = BTreeMap::new();
        for (town, year) in requests {
            first_request
                .entry(town)
                .and_modify(|y| *y = (*y).min(year))
                .or_insert(year);
        }
        CatHistory { first_request }
    }

    /// Flag for (town, year): 1 iff a request happened strictly before `year`.
    pub fn flag(&self, town_id: &str, year: i32) -> u8 {
        match self.first_request.get(town_id) {
            Some(first) if *first < year => 1,
            _ => 0,
        }
    }
}

/// Recomputes the cat column of an existing panel from a request history.
pub fn update_cat_flag(panel: &mut [TownYearRecord], history: &CatHistory) {
    for r in panel.iter_mut() {
        r.cat = history.flag(&r.town_id, r.year);
    }
}

/// Joins the inputs into the canonical panel: one record per exposure row,
/// missing claim rows meaning zero claims. Claims with no matching exposure
/// row, duplicate keys, missing covariate coverage, and invariant violations
/// are all reported as errors.
pub fn build_panel(
    exposure: &[ExposureRow],
    claims: &[ClaimRow],
    town_indices: &[ExtremeYearIndex],
    town_clay: &BTreeMap<String, f64>,
    history: &CatHistory,
) -> Result<Vec<TownYearRecord>, PanelError> {
    let mut claim_map: BTreeMap<(&str, i32), &ClaimRow> = BTreeMap::new();
    for c in claims {
        if claim_map.insert((c.town_id.as_str(), c.year), c).is_some() {
            return Err(PanelError::DuplicateKey {
                town_id: c.town_id.clone(),
                year: c.year,
                context: "claims file".to_string(),
            });
        }
    }
    let mut index_map: BTreeMap<(&str, i32), &ExtremeYearIndex> = BTreeMap::new();
    for idx in town_indices {
        index_map.insert((idx.id.as_str(), idx.year), idx);
    }
    let mut seen: BTreeSet<(&str, i32)> = BTreeSet::new();
    let mut matched_claims: BTreeSet<(&str, i32)> = BTreeSet::new();
    let mut records = Vec::with_capacity(exposure.len());
    for e in exposure {
        let key = (e.town_id.as_str(), e.year);
        if !seen.insert(key) {
            return Err(PanelError::DuplicateKey {
                town_id: e.town_id.clone(),
                year: e.year,
                context: "exposure file".to_string(),
            });
        }
        let idx = index_map
            .get(&key)
            .ok_or_else(|| PanelError::IncompleteCoverage {
                town_id: e.town_id.clone(),
                year: e.year,
            })?;
        let clay = town_clay
            .get(&e.town_id)
            .ok_or_else(|| PanelError::MissingCell {
                town_id: e.town_id.clone(),
                cell_id: "-".to_string(),
                what: "clay".to_string(),
            })?;
        let (claims_n, cost_cents) = match claim_map.get(&key) {
            Some(c) => {
                matched_claims.insert(key);
                (c.claims, c.cost_cents)
            }
            None => (0, 0),
        };
        records.push(TownYearRecord {
            town_id: e.town_id.clone(),
            year: e.year,
            exposure: e.exposure,
            claims: claims_n,
            cost_cents,
            sums_insured_cents: e.sums_insured_cents,
            espi: idx.espi,
            esswi: idx.esswi,
            essti: idx.essti,
            clay: *clay,
            cat: history.flag(&e.town_id, e.year),
        });
    }
    if matched_claims.len() != claim_map.len() {
        let dangling: Vec<String> = claim_map
            .keys()
            .filter(|k| !matched_claims.contains(*k))
            .map(|(t, y)| format!("({t}, {y})"))
            .collect();
        return Err(PanelError::InvariantViolation {
            count: dangling.len(),
            first: format!("claim row without exposure row: {}", dangling[0]),
        });
    }
    records.sort_by(|a, b| (&a.town_id, a.year).cmp(&(&b.town_id, b.year)));
    check_panel(&records)?;
    Ok(records)
}
