//! Customer-behavior indicators over the recommended population: customers
//! who received at least one hit. Clicks and buys here are raw actions by
//! that population, not window-attributed ones — these indicators describe
//! site-level behavior.

use crate::events::{ActionKind, EventLog};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

/// Artifact default, not a measured value; tune per site.
pub const DEFAULT_BOUNCE_THRESHOLD: f64 = 1.5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BehaviorError {
    #[error("no customer received a hit")]
    EmptyPopulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorReport {
    /// Distinct customers with at least one hit.
    pub customers: u64,
    pub hits_per_customer: f64,
    /// Fraction of the population with at least one buy; a buyer counts once
    /// regardless of purchase count, so bulk buyers cannot skew it.
    pub buyers_per_customer: f64,
    pub clicks_per_customer: f64,
    /// Undefined (null) when the population made no buys.
    pub clicks_per_buy: Option<f64>,
    /// Hits-per-customer reads on session length only when widgets cover
    /// most pages; that premise is not checkable from the log.
    pub caveat: String,
}

pub fn behavior_report(log: &EventLog) -> Result<BehaviorReport, BehaviorError> {
    let population: HashSet<&str> = log.hits.iter().map(|h| h.customer.as_str()).collect();
    if population.is_empty() {
        return Err(BehaviorError::EmptyPopulation);
    }

    let mut clicks = 0u64;
    let mut buys = 0u64;
    let mut buyers: HashSet<&str> = HashSet::new();
    for a in &log.actions {
        if !population.contains(a.customer.as_str()) {
            continue;
        }
        match a.kind {
            ActionKind::Click => clicks += 1,
            ActionKind::Buy => {
                buys += 1;
                buyers.insert(a.customer.as_str());
            }
            ActionKind::AddToCart => {}
        }
    }

    let n = population.len() as f64;
    Ok(BehaviorReport {
        customers: population.len() as u64,
        hits_per_customer: log.hits.len() as f64 / n,
        buyers_per_customer: buyers.len() as f64 / n,
        clicks_per_customer: clicks as f64 / n,
        clicks_per_buy: (buys > 0).then(|| clicks as f64 / buys as f64),
        caveat: "hits-per-customer assumes recommendation widgets appear on most pages".into(),
    })
}

/// Advisory bounce signal: clicks per customer below the threshold suggests
/// a large share of customers never interact.
pub fn bounce_indicator(report: &BehaviorReport, threshold: f64) -> bool {
    report.clicks_per_customer < threshold
}
