//! Analytical cost estimates for the sparse index.
//!
//! All functions are pure. The filter probability treats the number of
//! predicate-hit buckets as `max(1, ceil(SF * H))` (a predicate hits at
//! least one bucket) and caps at 1. Expected tuples per entry is the
//! coupon-collector expectation of drawing `round(D * H)` distinct buckets
//! uniformly from `H`, which the equi-depth histogram makes realistic for
//! arbitrary key distributions.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    pub resolution: u32,
    pub density: f64,
    pub selectivity: f64,
    pub cardinality: u64,
    pub page_card: u32,
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidCostParam(msg));
        if self.resolution < 1 {
            return fail("resolution must be >= 1".into());
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return fail(format!("density {} outside (0, 1]", self.density));
        }
        if !(self.selectivity > 0.0 && self.selectivity <= 1.0) {
            return fail(format!("selectivity {} outside (0, 1]", self.selectivity));
        }
        if self.cardinality < 1 || self.page_card < 1 {
            return fail("cardinality and page_card must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    /// Probability that one entry's pages are selected for inspection.
    pub prob_selected: f64,
    /// Expected tuples inspected per query.
    pub est_query_tuples: f64,
    /// Expected tuples summarized per entry (T).
    pub tuples_per_entry: f64,
    /// Expected pages summarized per entry (P), fractional.
    pub pages_per_entry: f64,
    /// Expected number of index entries.
    pub num_entries: f64,
    /// Initialization cost in I/O operations.
    pub init_cost: f64,
    /// Per-insert maintenance cost in I/O operations.
    pub insert_cost: f64,
}

/// Probability that a query predicate has joint buckets with one entry's
/// partial histogram: `min(1, max(1, ceil(SF * H)) * D)`.
pub fn prob_selected(selectivity: f64, resolution: u32, density: f64) -> f64 {
    let hit_buckets = (selectivity * f64::from(resolution)).ceil().max(1.0);
    (hit_buckets * density).min(1.0)
}

/// Expected tuples inspected by one query: `prob_selected * Card`.
pub fn est_query_tuples(params: &CostParams) -> f64 {
    prob_selected(params.selectivity, params.resolution, params.density) * params.cardinality as f64
}

/// Coupon-collector expectation of tuples needed for one entry to gather
/// `round(D * H)` distinct buckets: `H * (1/H + 1/(H-1) + ... + 1/(H-k+1))`.
pub fn est_tuples_per_entry(resolution: u32, density: f64) -> Result<f64> {
    let h = f64::from(resolution);
    let k = (density * h).round() as i64;
    if k < 1 || k > i64::from(resolution) {
        return Err(Error::InvalidCostParam(format!(
            "D*H = {k} outside 1..={resolution}"
        )));
    }
    let mut sum = 0.0;
    for i in 0..k {
        sum += 1.0 / (h - i as f64);
    }
    Ok(h * sum)
}

/// Expected pages per entry: `T / pageCard`. Requires `D >= pageCard / H`,
/// the regime where one page cannot hit more distinct buckets than the
/// entry keeps.
pub fn est_pages_per_entry(resolution: u32, density: f64, page_card: u32) -> Result<f64> {
    if density < f64::from(page_card) / f64::from(resolution) {
        return Err(Error::InvalidCostParam(format!(
            "density {density} below pageCard/H = {}/{resolution}",
            page_card
        )));
    }
    Ok(est_tuples_per_entry(resolution, density)? / f64::from(page_card))
}

/// Expected entry count: `Card / T`.
pub fn est_num_entries(cardinality: u64, resolution: u32, density: f64) -> Result<f64> {
    Ok(cardinality as f64 / est_tuples_per_entry(resolution, density)?)
}

/// Initialization cost in I/Os: one read per tuple plus one write per entry.
pub fn est_init_cost(cardinality: u64, resolution: u32, density: f64) -> Result<f64> {
    Ok(cardinality as f64 + est_num_entries(cardinality, resolution, density)?)
}

/// Per-insert cost in I/Os: a binary search over the entries plus four
/// constant-cost steps.
pub fn est_insert_cost(num_entries: f64) -> f64 {
    num_entries.log2() + 4.0
}

pub fn estimate(params: &CostParams) -> Result<CostEstimate> {
    params.validate()?;
    let prob = prob_selected(params.selectivity, params.resolution, params.density);
    let tuples_per_entry = est_tuples_per_entry(params.resolution, params.density)?;
    let pages_per_entry = est_pages_per_entry(params.resolution, params.density, params.page_card)?;
    let num_entries = params.cardinality as f64 / tuples_per_entry;
    Ok(CostEstimate {
        prob_selected: prob,
        est_query_tuples: prob * params.cardinality as f64,
        tuples_per_entry,
        pages_per_entry,
        num_entries,
        init_cost: params.cardinality as f64 + num_entries,
        insert_cost: est_insert_cost(num_entries),
    })
}
