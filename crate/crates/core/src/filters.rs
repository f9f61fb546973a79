//! Recommendation-list filters and their counterfactual impact on a log.
//!
//! Two filters prune a proposed recommendation list against the customer's
//! own history: products already clicked by them on the current calendar
//! day, and products added to cart within a trailing rolling window of days.
//! The cart filter is a toggle because widgets sometimes serve deliberately
//! as purchase reminders (grocery-style sites).

use crate::attribution::{attribute, AttributionConfig};
use crate::events::{ActionKind, CustomerId, EventLog, Hit, ProductId, Timestamp};
use crate::metrics::{compute_metric, MetricKind, MetricValue};
use chrono::TimeDelta;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct FilterConfig {
    /// Remove products the customer clicked on the same calendar day.
    pub clicked_today: bool,
    /// Rolling add-to-cart window in days; 0 disables the cart filter.
    pub atc_window_days: u32,
    pub atc_filter_enabled: bool,
    /// Fixed UTC offset defining the calendar day.
    pub tz_offset: TimeDelta,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            clicked_today: true,
            atc_window_days: 7,
            atc_filter_enabled: true,
            tz_offset: TimeDelta::zero(),
        }
    }
}

impl FilterConfig {
    pub fn disabled() -> Self {
        FilterConfig {
            clicked_today: false,
            atc_filter_enabled: false,
            ..Default::default()
        }
    }

    fn atc_active(&self) -> bool {
        self.atc_filter_enabled && self.atc_window_days > 0
    }
}

/// One customer's interaction history; timestamps non-decreasing per list.
#[derive(Debug, Clone, Default)]
pub struct CustomerHistory {
    pub clicks: Vec<(ProductId, Timestamp)>,
    pub atcs: Vec<(ProductId, Timestamp)>,
}

impl CustomerHistory {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Prunes `products` against the history as of `now`; survivor order is
/// preserved. The click filter removes products clicked earlier the same
/// calendar day; the cart filter removes products carted within the trailing
/// `atc_window_days` × 24 h window (both ends inclusive).
pub fn filter_recommendations(
    products: &[ProductId],
    history: &CustomerHistory,
    now: Timestamp,
    cfg: &FilterConfig,
) -> Vec<ProductId> {
    products
        .iter()
        .filter(|p| !click_filtered(p, history, now, cfg) && !atc_filtered(p, history, now, cfg))
        .cloned()
        .collect()
}

fn click_filtered(
    product: &ProductId,
    history: &CustomerHistory,
    now: Timestamp,
    cfg: &FilterConfig,
) -> bool {
    if !cfg.clicked_today {
        return false;
    }
    let today = now.date_with_offset(cfg.tz_offset);
    history
        .clicks
        .iter()
        .any(|(p, ts)| p == product && *ts <= now && ts.date_with_offset(cfg.tz_offset) == today)
}

fn atc_filtered(
    product: &ProductId,
    history: &CustomerHistory,
    now: Timestamp,
    cfg: &FilterConfig,
) -> bool {
    if !cfg.atc_active() {
        return false;
    }
    let window = TimeDelta::hours(24 * cfg.atc_window_days as i64);
    history
        .atcs
        .iter()
        .any(|(p, ts)| p == product && *ts <= now && now.signed_duration_since(*ts) <= window)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualMetrics {
    /// None when every hit was emptied and no denominator remains.
    pub ctr: Option<MetricValue>,
    pub ctr_norepeat: Option<MetricValue>,
}

/// Effect of replaying the filters over a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterImpactReport {
    pub hits: u64,
    pub pairs: u64,
    pub pairs_removed: u64,
    /// Per-filter attributions; a pair removable by both filters counts in
    /// both, so these may sum to more than `pairs_removed`.
    pub pairs_removed_by_click_filter: u64,
    pub pairs_removed_by_atc_filter: u64,
    pub hits_emptied: u64,
    pub pairs_removed_fraction: f64,
    pub hits_emptied_fraction: f64,
    pub original: CounterfactualMetrics,
    pub counterfactual: CounterfactualMetrics,
}

/// Replays the log chronologically, pruning each hit's products against the
/// customer's history up to (strictly before) the hit instant, then rates
/// the counterfactual log in which emptied hits are dropped and removed
/// products cannot receive credited actions.
pub fn simulate_filters(
    log: &EventLog,
    cfg: &FilterConfig,
    attr_cfg: &AttributionConfig,
) -> FilterImpactReport {
    let mut pairs = 0u64;
    let mut pairs_removed = 0u64;
    let mut by_click = 0u64;
    let mut by_atc = 0u64;
    let mut hits_emptied = 0u64;
    let mut surviving_hits: Vec<Hit> = Vec::with_capacity(log.hits.len());

    // replay per customer; history never crosses customers
    let mut histories: HashMap<&str, CustomerHistory> = HashMap::new();
    let mut cursors: HashMap<&str, usize> = HashMap::new();
    let mut actions_of: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, a) in log.actions.iter().enumerate() {
        actions_of.entry(a.customer.as_str()).or_default().push(i);
    }

    for hit in &log.hits {
        let customer = hit.customer.as_str();
        let history = histories.entry(customer).or_default();
        let cursor = cursors.entry(customer).or_insert(0);
        if let Some(action_ids) = actions_of.get(customer) {
            while *cursor < action_ids.len() {
                let a = &log.actions[action_ids[*cursor]];
                if a.ts >= hit.ts {
                    break;
                }
                match a.kind {
                    ActionKind::Click => history.clicks.push((a.product.clone(), a.ts)),
                    ActionKind::AddToCart => history.atcs.push((a.product.clone(), a.ts)),
                    ActionKind::Buy => {}
                }
                *cursor += 1;
            }
        }

        pairs += hit.products.len() as u64;
        let mut survivors = Vec::with_capacity(hit.products.len());
        for p in &hit.products {
            let click_hit = click_filtered(p, history, hit.ts, cfg);
            let atc_hit = atc_filtered(p, history, hit.ts, cfg);
            if click_hit {
                by_click += 1;
            }
            if atc_hit {
                by_atc += 1;
            }
            if click_hit || atc_hit {
                pairs_removed += 1;
            } else {
                survivors.push(p.clone());
            }
        }
        if survivors.is_empty() {
            hits_emptied += 1;
        } else {
            surviving_hits.push(Hit {
                products: survivors,
                ..hit.clone()
            });
        }
    }

    let rate_pair = |log: &EventLog| -> CounterfactualMetrics {
        let attr = attribute(log, attr_cfg);
        CounterfactualMetrics {
            ctr: compute_metric(&attr, MetricKind::Ctr).ok(),
            ctr_norepeat: compute_metric(&attr, MetricKind::CtrNoRepeat).ok(),
        }
    };
    let counterfactual_log =
        EventLog::from_parts(surviving_hits, log.actions.clone(), log.source_name.clone());

    FilterImpactReport {
        hits: log.hits.len() as u64,
        pairs,
        pairs_removed,
        pairs_removed_by_click_filter: by_click,
        pairs_removed_by_atc_filter: by_atc,
        hits_emptied,
        pairs_removed_fraction: if pairs > 0 {
            pairs_removed as f64 / pairs as f64
        } else {
            0.0
        },
        hits_emptied_fraction: if log.hits.is_empty() {
            0.0
        } else {
            hits_emptied as f64 / log.hits.len() as f64
        },
        original: rate_pair(log),
        counterfactual: rate_pair(&counterfactual_log),
    }
}

/// Convenience for building histories in tests and callers.
pub fn history_of(customer: &CustomerId, log: &EventLog) -> CustomerHistory {
    let mut h = CustomerHistory::new();
    for a in &log.actions {
        if &a.customer != customer {
            continue;
        }
        match a.kind {
            ActionKind::Click => h.clicks.push((a.product.clone(), a.ts)),
            ActionKind::AddToCart => h.atcs.push((a.product.clone(), a.ts)),
            ActionKind::Buy => {}
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::read_log;
    use std::io::Cursor;

    fn pid(s: &str) -> ProductId {
        ProductId::new(s).unwrap()
    }

    fn ts(s: &str) -> Timestamp {
        Timestamp::parse(s).unwrap()
    }

    fn products(names: &[&str]) -> Vec<ProductId> {
        names.iter().map(|n| pid(n)).collect()
    }

    #[test]
    fn same_day_click_removes_product() {
        let history = CustomerHistory {
            clicks: vec![(pid("p1"), ts("2023-01-05T09:00:00Z"))],
            atcs: vec![],
        };
        let out = filter_recommendations(
            &products(&["p1", "p2"]),
            &history,
            ts("2023-01-05T18:00:00Z"),
            &FilterConfig::default(),
        );
        assert_eq!(out, products(&["p2"]));
    }

    #[test]
    fn yesterday_click_survives() {
        let history = CustomerHistory {
            clicks: vec![(pid("p1"), ts("2023-01-04T23:00:00Z"))],
            atcs: vec![],
        };
        let out = filter_recommendations(
            &products(&["p1"]),
            &history,
            ts("2023-01-05T08:00:00Z"),
            &FilterConfig::default(),
        );
        assert_eq!(out, products(&["p1"]));
    }

    #[test]
    fn atc_rolling_window() {
        let history = CustomerHistory {
            clicks: vec![],
            atcs: vec![
                (pid("p1"), ts("2023-01-04T12:00:00Z")), // 6 days before now
                (pid("p2"), ts("2023-01-02T12:00:00Z")), // 8 days before now
            ],
        };
        let out = filter_recommendations(
            &products(&["p1", "p2"]),
            &history,
            ts("2023-01-10T12:00:00Z"),
            &FilterConfig::default(),
        );
        assert_eq!(out, products(&["p2"]));
    }

    #[test]
    fn disabled_filters_are_identity() {
        let history = CustomerHistory {
            clicks: vec![(pid("p1"), ts("2023-01-05T09:00:00Z"))],
            atcs: vec![(pid("p2"), ts("2023-01-05T09:00:00Z"))],
        };
        let input = products(&["p1", "p2", "p3"]);
        let out = filter_recommendations(
            &input,
            &history,
            ts("2023-01-05T10:00:00Z"),
            &FilterConfig::disabled(),
        );
        assert_eq!(out, input);
    }

    #[test]
    fn output_is_a_subsequence() {
        let history = CustomerHistory {
            clicks: vec![(pid("p2"), ts("2023-01-05T09:00:00Z"))],
            atcs: vec![(pid("p4"), ts("2023-01-03T09:00:00Z"))],
        };
        let input = products(&["p1", "p2", "p3", "p4", "p5"]);
        let out = filter_recommendations(
            &input,
            &history,
            ts("2023-01-05T10:00:00Z"),
            &FilterConfig::default(),
        );
        assert_eq!(out, products(&["p1", "p3", "p5"]));
    }

    #[test]
    fn widening_atc_window_never_grows_survivors() {
        let history = CustomerHistory {
            clicks: vec![],
            atcs: vec![
                (pid("p1"), ts("2023-01-08T12:00:00Z")),
                (pid("p2"), ts("2023-01-05T12:00:00Z")),
                (pid("p3"), ts("2023-01-01T12:00:00Z")),
            ],
        };
        let input = products(&["p1", "p2", "p3"]);
        let now = ts("2023-01-10T12:00:00Z");
        let mut last = usize::MAX;
        for days in [0u32, 1, 3, 5, 7, 10, 30] {
            let cfg = FilterConfig {
                atc_window_days: days,
                ..Default::default()
            };
            let n = filter_recommendations(&input, &history, now, &cfg).len();
            assert!(n <= last);
            last = n;
        }
    }

    fn reshow_log() -> EventLog {
        // every product is re-shown shortly after a same-day click on it
        let data = "\
{\"type\":\"hit\",\"hit_id\":\"h1\",\"customer\":\"c1\",\"widget\":\"w\",\"ts\":\"2023-01-01T10:00:00Z\",\"products\":[\"p1\"]}
{\"type\":\"click\",\"customer\":\"c1\",\"product\":\"p1\",\"ts\":\"2023-01-01T10:01:00Z\"}
{\"type\":\"hit\",\"hit_id\":\"h2\",\"customer\":\"c1\",\"widget\":\"w\",\"ts\":\"2023-01-01T11:00:00Z\",\"products\":[\"p1\"]}
{\"type\":\"click\",\"customer\":\"c1\",\"product\":\"p1\",\"ts\":\"2023-01-01T11:01:00Z\"}
{\"type\":\"hit\",\"hit_id\":\"h3\",\"customer\":\"c2\",\"widget\":\"w\",\"ts\":\"2023-01-01T10:00:00Z\",\"products\":[\"p2\"]}
{\"type\":\"click\",\"customer\":\"c2\",\"product\":\"p2\",\"ts\":\"2023-01-01T10:02:00Z\"}
{\"type\":\"hit\",\"hit_id\":\"h4\",\"customer\":\"c2\",\"widget\":\"w\",\"ts\":\"2023-01-01T12:00:00Z\",\"products\":[\"p2\"]}
{\"type\":\"click\",\"customer\":\"c2\",\"product\":\"p2\",\"ts\":\"2023-01-01T12:02:00Z\"}
";
        read_log(Cursor::new(data), "reshow").unwrap()
    }

    #[test]
    fn simulate_removes_all_same_day_reshows() {
        let log = reshow_log();
        let report = simulate_filters(
            &log,
            &FilterConfig::default(),
            &AttributionConfig::default(),
        );
        // h2 and h4 re-show a product clicked earlier the same day
        assert_eq!(report.pairs, 4);
        assert_eq!(report.pairs_removed, 2);
        assert_eq!(report.pairs_removed_by_click_filter, 2);
        assert_eq!(report.pairs_removed_by_atc_filter, 0);
        assert_eq!(report.hits_emptied, 2);
        // with the repeat hits gone, the counterfactual has no repeat credit
        let cf = report.counterfactual;
        assert_eq!(cf.ctr.unwrap().trials, 2);
        assert_eq!(cf.ctr.unwrap().rate, 1.0);
        assert_eq!(cf.ctr_norepeat.unwrap().rate, 1.0);
    }

    #[test]
    fn simulate_with_disabled_filters_reproduces_original_exactly() {
        let log = reshow_log();
        let report = simulate_filters(
            &log,
            &FilterConfig::disabled(),
            &AttributionConfig::default(),
        );
        assert_eq!(report.pairs_removed, 0);
        assert_eq!(report.hits_emptied, 0);
        assert_eq!(report.original, report.counterfactual);
    }

    #[test]
    fn simulate_without_repeated_interactions_changes_nothing() {
        let data = "\
{\"type\":\"hit\",\"hit_id\":\"h1\",\"customer\":\"c1\",\"widget\":\"w\",\"ts\":\"2023-01-01T10:00:00Z\",\"products\":[\"p1\",\"p2\"]}
{\"type\":\"click\",\"customer\":\"c1\",\"product\":\"p1\",\"ts\":\"2023-01-01T10:01:00Z\"}
{\"type\":\"hit\",\"hit_id\":\"h2\",\"customer\":\"c1\",\"widget\":\"w\",\"ts\":\"2023-01-01T11:00:00Z\",\"products\":[\"p3\",\"p4\"]}
{\"type\":\"buy\",\"customer\":\"c1\",\"product\":\"p3\",\"ts\":\"2023-01-01T12:00:00Z\"}
";
        let log = read_log(Cursor::new(data), "fresh").unwrap();
        let report = simulate_filters(
            &log,
            &FilterConfig::default(),
            &AttributionConfig::default(),
        );
        assert_eq!(report.pairs_removed, 0);
        assert_eq!(report.hits_emptied, 0);
        assert_eq!(report.original, report.counterfactual);
    }

    #[test]
    fn atc_filter_off_means_no_atc_removals() {
        let data = "\
{\"type\":\"atc\",\"customer\":\"c1\",\"product\":\"p1\",\"ts\":\"2023-01-01T09:00:00Z\"}
{\"type\":\"hit\",\"hit_id\":\"h1\",\"customer\":\"c1\",\"widget\":\"w\",\"ts\":\"2023-01-02T10:00:00Z\",\"products\":[\"p1\"]}
";
        let log = read_log(Cursor::new(data), "grocery").unwrap();
        let cfg = FilterConfig {
            atc_filter_enabled: false,
            ..Default::default()
        };
        let report = simulate_filters(&log, &cfg, &AttributionConfig::default());
        assert_eq!(report.pairs_removed_by_atc_filter, 0);
        assert_eq!(report.pairs_removed, 0);
        let on = simulate_filters(
            &log,
            &FilterConfig::default(),
            &AttributionConfig::default(),
        );
        assert_eq!(on.pairs_removed_by_atc_filter, 1);
    }

    #[test]
    fn history_stops_strictly_before_hit() {
        // click at exactly the hit instant is not yet history
        let data = "\
{\"type\":\"click\",\"customer\":\"c1\",\"product\":\"p1\",\"ts\":\"2023-01-01T10:00:00Z\"}
{\"type\":\"hit\",\"hit_id\":\"h1\",\"customer\":\"c1\",\"widget\":\"w\",\"ts\":\"2023-01-01T10:00:00Z\",\"products\":[\"p1\"]}
";
        let log = read_log(Cursor::new(data), "edge").unwrap();
        let report = simulate_filters(
            &log,
            &FilterConfig::default(),
            &AttributionConfig::default(),
        );
        assert_eq!(report.pairs_removed, 0);
    }
}
