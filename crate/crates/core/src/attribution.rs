//! Joins actions to hits under per-kind time windows and produces one
//! attribution record per hit.
//!
//! Crediting rules:
//!
//! - An action on product `p` by customer `c` is credited to the most recent
//!   prior hit for `c` whose product list contains `p` and whose timestamp
//!   satisfies `0 < action.ts − hit.ts ≤ window` (last-touch). The window is
//!   half-open at the hit instant: an action at exactly the hit timestamp
//!   cannot have been caused by it; an action exactly at the window edge is
//!   credited. Each action is credited to at most one hit.
//! - `clicked_norepeat` marks only the hit carrying the first credited click
//!   on a `(customer, product)` pair; later credited clicks on that pair set
//!   `clicked` but not `clicked_norepeat`. Same rule for `atc_norepeat`. The
//!   dedup scope is the whole log by default, or re-arms per calendar day.
//! - `clicked_and_bought` marks a hit with a credited click on `p` when the
//!   same customer buys `p` within the buy window of the hit, with the click
//!   strictly before the buy. Each buy satisfies the condition for at most
//!   one hit: the hit the buy was credited to when that hit qualifies,
//!   otherwise the earliest qualifying hit. The satisfied hit also counts as
//!   bought, so `clicked_and_bought` implies `bought` on every hit. Sites
//!   where carting precedes the first click can run the chain off credited
//!   add-to-carts instead.
//!
//! Attribution never crosses customers, so a log may be partitioned by
//! customer and the partitions processed in any order or in parallel; the
//! result is identical to the sequential one.

use crate::events::{ActionKind, EventLog, ProductId, Timestamp};
use chrono::{NaiveDate, TimeDelta};
use compact_str::CompactString;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error("invalid windows: {0}")]
    InvalidWindows(String),
}

/// Attribution windows per action kind. Defaults are 5 minutes for clicks,
/// 30 minutes for add-to-carts, and 24 hours for buys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowConfig {
    pub click_window: TimeDelta,
    pub atc_window: TimeDelta,
    pub buy_window: TimeDelta,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            click_window: TimeDelta::minutes(5),
            atc_window: TimeDelta::minutes(30),
            buy_window: TimeDelta::hours(24),
        }
    }
}

impl WindowConfig {
    pub fn new(
        click_window: TimeDelta,
        atc_window: TimeDelta,
        buy_window: TimeDelta,
    ) -> Result<Self, AttributionError> {
        let cfg = WindowConfig {
            click_window,
            atc_window,
            buy_window,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), AttributionError> {
        if self.click_window <= TimeDelta::zero() {
            return Err(AttributionError::InvalidWindows(
                "click window must be positive".into(),
            ));
        }
        if self.click_window > self.atc_window || self.atc_window > self.buy_window {
            return Err(AttributionError::InvalidWindows(
                "windows must satisfy click <= atc <= buy".into(),
            ));
        }
        Ok(())
    }

    fn window_for(&self, kind: ActionKind) -> TimeDelta {
        match kind {
            ActionKind::Click => self.click_window,
            ActionKind::AddToCart => self.atc_window,
            ActionKind::Buy => self.buy_window,
        }
    }
}

/// Scope of first-interaction dedup for the NoRepeat variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NorepeatScope {
    #[default]
    Log,
    Day,
}

/// Which credited action arms the click-and-buy chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandBLeg {
    #[default]
    Click,
    Atc,
}

#[derive(Debug, Clone)]
pub struct AttributionConfig {
    pub windows: WindowConfig,
    pub norepeat_scope: NorepeatScope,
    pub candb_leg: CandBLeg,
    /// Fixed UTC offset defining the day boundary when `norepeat_scope` is
    /// per-day.
    pub tz_offset: TimeDelta,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            windows: WindowConfig::default(),
            norepeat_scope: NorepeatScope::Log,
            candb_leg: CandBLeg::Click,
            tz_offset: TimeDelta::zero(),
        }
    }
}

impl AttributionConfig {
    pub fn with_windows(windows: WindowConfig) -> Self {
        AttributionConfig {
            windows,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreditedAction {
    pub kind: ActionKind,
    pub product: ProductId,
    pub ts: Timestamp,
}

/// Which downstream actions were credited to one hit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributedActions {
    pub hit_id: CompactString,
    pub clicked: bool,
    pub clicked_norepeat: bool,
    pub atc: bool,
    pub atc_norepeat: bool,
    pub bought: bool,
    pub clicked_and_bought: bool,
    pub credited: Vec<CreditedAction>,
}

impl AttributedActions {
    fn empty(hit_id: &str) -> Self {
        AttributedActions {
            hit_id: hit_id.into(),
            clicked: false,
            clicked_norepeat: false,
            atc: false,
            atc_norepeat: false,
            bought: false,
            clicked_and_bought: false,
            credited: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UnattributedCounts {
    pub clicks: u64,
    pub atcs: u64,
    pub buys: u64,
}

/// Per-hit attribution records in hit order, plus counts of actions no hit
/// could claim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub per_hit: Vec<AttributedActions>,
    pub unattributed: UnattributedCounts,
}

/// Dedup key for the NoRepeat variants: the product, plus the action's
/// calendar day when the scope re-arms daily.
type NorepeatKey<'a> = (&'a str, Option<NaiveDate>);

fn norepeat_key<'a>(cfg: &AttributionConfig, product: &'a str, ts: Timestamp) -> NorepeatKey<'a> {
    match cfg.norepeat_scope {
        NorepeatScope::Log => (product, None),
        NorepeatScope::Day => (product, Some(ts.date_with_offset(cfg.tz_offset))),
    }
}

/// Attributes a normalized log. Unmatched actions are counted, never errors.
pub fn attribute(log: &EventLog, cfg: &AttributionConfig) -> AttributionResult {
    let mut per_hit: Vec<AttributedActions> = log
        .hits
        .iter()
        .map(|h| AttributedActions::empty(&h.hit_id))
        .collect();

    // Partition by customer; hit/action index lists inherit the normalized
    // (ts, input order) ordering.
    let mut by_customer: HashMap<&str, (Vec<usize>, Vec<usize>)> = HashMap::new();
    for (i, h) in log.hits.iter().enumerate() {
        by_customer
            .entry(h.customer.as_str())
            .or_default()
            .0
            .push(i);
    }
    for (i, a) in log.actions.iter().enumerate() {
        by_customer
            .entry(a.customer.as_str())
            .or_default()
            .1
            .push(i);
    }

    let partitions: Vec<&(Vec<usize>, Vec<usize>)> = by_customer.values().collect();
    let outputs: Vec<(Vec<(usize, AttributedActions)>, UnattributedCounts)> = partitions
        .par_iter()
        .map(|(hit_idx, action_idx)| attribute_customer(log, cfg, hit_idx, action_idx))
        .collect();

    let mut unattributed = UnattributedCounts::default();
    for (records, counts) in outputs {
        for (idx, rec) in records {
            per_hit[idx] = rec;
        }
        unattributed.clicks += counts.clicks;
        unattributed.atcs += counts.atcs;
        unattributed.buys += counts.buys;
    }

    AttributionResult {
        per_hit,
        unattributed,
    }
}

/// One credited leg action (click or atc) on a given product at a given hit;
/// used to resolve the click-and-buy chain.
#[derive(Clone, Copy)]
struct LegEntry {
    hit_local: usize,
    hit_ts: Timestamp,
    first_leg_ts: Timestamp,
}

fn attribute_customer(
    log: &EventLog,
    cfg: &AttributionConfig,
    hit_idx: &[usize],
    action_idx: &[usize],
) -> (Vec<(usize, AttributedActions)>, UnattributedCounts) {
    let mut records: Vec<AttributedActions> = hit_idx
        .iter()
        .map(|&i| AttributedActions::empty(&log.hits[i].hit_id))
        .collect();
    let mut unattributed = UnattributedCounts::default();

    // product -> (hit ts, local hit position), in hit order; binary-searchable
    // because hits are already sorted by (ts, input order).
    let mut hits_by_product: HashMap<&str, Vec<(Timestamp, usize)>> = HashMap::new();
    for (local, &gidx) in hit_idx.iter().enumerate() {
        let hit = &log.hits[gidx];
        for p in &hit.products {
            hits_by_product
                .entry(p.as_str())
                .or_default()
                .push((hit.ts, local));
        }
    }

    let leg_kind = match cfg.candb_leg {
        CandBLeg::Click => ActionKind::Click,
        CandBLeg::Atc => ActionKind::AddToCart,
    };

    let mut seen_clicks: HashMap<NorepeatKey, ()> = HashMap::new();
    let mut seen_atcs: HashMap<NorepeatKey, ()> = HashMap::new();
    // Credited leg actions per product, in hit order (the credited hit is
    // non-decreasing as action time grows, so plain appends keep it sorted).
    let mut leg_credits: HashMap<&str, Vec<LegEntry>> = HashMap::new();
    // (product, buy ts, local hit the buy was credited to)
    let mut buys: Vec<(&str, Timestamp, Option<usize>)> = Vec::new();

    for &aidx in action_idx {
        let action = &log.actions[aidx];
        let window = cfg.windows.window_for(action.kind);
        let product = action.product.as_str();

        // Most recent prior hit containing the product and within the window.
        let credited = hits_by_product.get(product).and_then(|entries| {
            let before = entries.partition_point(|(ts, _)| *ts < action.ts);
            if before == 0 {
                return None;
            }
            let (hit_ts, local) = entries[before - 1];
            (action.ts.signed_duration_since(hit_ts) <= window).then_some(local)
        });

        match credited {
            Some(local) => {
                let rec = &mut records[local];
                rec.credited.push(CreditedAction {
                    kind: action.kind,
                    product: action.product.clone(),
                    ts: action.ts,
                });
                match action.kind {
                    ActionKind::Click => {
                        rec.clicked = true;
                        let key = norepeat_key(cfg, product, action.ts);
                        if seen_clicks.insert(key, ()).is_none() {
                            rec.clicked_norepeat = true;
                        }
                    }
                    ActionKind::AddToCart => {
                        rec.atc = true;
                        let key = norepeat_key(cfg, product, action.ts);
                        if seen_atcs.insert(key, ()).is_none() {
                            rec.atc_norepeat = true;
                        }
                    }
                    ActionKind::Buy => {
                        rec.bought = true;
                    }
                }
                if action.kind == leg_kind {
                    let hit_ts = log.hits[hit_idx[local]].ts;
                    let credits = leg_credits.entry(product).or_default();
                    if credits.last().map(|e| e.hit_local) != Some(local) {
                        credits.push(LegEntry {
                            hit_local: local,
                            hit_ts,
                            first_leg_ts: action.ts,
                        });
                    }
                }
                if action.kind == ActionKind::Buy {
                    buys.push((product, action.ts, Some(local)));
                }
            }
            None => {
                match action.kind {
                    ActionKind::Click => unattributed.clicks += 1,
                    ActionKind::AddToCart => unattributed.atcs += 1,
                    ActionKind::Buy => unattributed.buys += 1,
                }
                if action.kind == ActionKind::Buy {
                    buys.push((product, action.ts, None));
                }
            }
        }
    }

    // Click-and-buy chain: each buy satisfies at most one hit.
    let buy_window = cfg.windows.buy_window;
    for (product, buy_ts, receiver) in buys {
        let Some(entries) = leg_credits.get(product) else {
            continue;
        };
        let qualifies = |e: &LegEntry| {
            e.first_leg_ts < buy_ts && {
                let gap = buy_ts.signed_duration_since(e.hit_ts);
                gap > TimeDelta::zero() && gap <= buy_window
            }
        };
        let consumer = receiver
            .and_then(|local| {
                entries
                    .binary_search_by_key(&local, |e| e.hit_local)
                    .ok()
                    .map(|i| entries[i])
                    .filter(qualifies)
            })
            .or_else(|| entries.iter().copied().find(qualifies));
        if let Some(e) = consumer {
            records[e.hit_local].clicked_and_bought = true;
            records[e.hit_local].bought = true;
        }
    }

    (hit_idx.iter().copied().zip(records).collect(), unattributed)
}

/// Naive reference attribution: full scans with explicit rule checks, no
/// index structures. Contract-identical to [`attribute`]; intended for logs
/// of at most a few thousand events and used to cross-validate the indexed
/// implementation.
pub fn attribution_oracle(log: &EventLog, cfg: &AttributionConfig) -> AttributionResult {
    let mut per_hit: Vec<AttributedActions> = log
        .hits
        .iter()
        .map(|h| AttributedActions::empty(&h.hit_id))
        .collect();
    let mut unattributed = UnattributedCounts::default();

    // action index -> hit index it was credited to
    let mut credit_of: Vec<Option<usize>> = vec![None; log.actions.len()];
    for (aidx, action) in log.actions.iter().enumerate() {
        let window = cfg.windows.window_for(action.kind);
        let mut best: Option<usize> = None;
        for (hidx, hit) in log.hits.iter().enumerate() {
            if hit.customer != action.customer {
                continue;
            }
            if !hit.products.contains(&action.product) {
                continue;
            }
            let gap = action.ts.signed_duration_since(hit.ts);
            if gap <= TimeDelta::zero() || gap > window {
                continue;
            }
            // later index among candidates == most recent (ties resolved by
            // input order because hits are normalized)
            best = Some(hidx);
        }
        credit_of[aidx] = best;
        match best {
            Some(hidx) => {
                let rec = &mut per_hit[hidx];
                rec.credited.push(CreditedAction {
                    kind: action.kind,
                    product: action.product.clone(),
                    ts: action.ts,
                });
                match action.kind {
                    ActionKind::Click => rec.clicked = true,
                    ActionKind::AddToCart => rec.atc = true,
                    ActionKind::Buy => rec.bought = true,
                }
            }
            None => match action.kind {
                ActionKind::Click => unattributed.clicks += 1,
                ActionKind::AddToCart => unattributed.atcs += 1,
                ActionKind::Buy => unattributed.buys += 1,
            },
        }
    }

    // NoRepeat: walk credited clicks/atcs in action order and keep the first
    // per (customer, product[, day]).
    let mut seen_clicks: HashMap<(String, NorepeatKey), ()> = HashMap::new();
    let mut seen_atcs: HashMap<(String, NorepeatKey), ()> = HashMap::new();
    for (aidx, action) in log.actions.iter().enumerate() {
        let Some(hidx) = credit_of[aidx] else {
            continue;
        };
        let key = (
            action.customer.as_str().to_owned(),
            norepeat_key(cfg, action.product.as_str(), action.ts),
        );
        match action.kind {
            ActionKind::Click => {
                if seen_clicks.insert(key, ()).is_none() {
                    per_hit[hidx].clicked_norepeat = true;
                }
            }
            ActionKind::AddToCart => {
                if seen_atcs.insert(key, ()).is_none() {
                    per_hit[hidx].atc_norepeat = true;
                }
            }
            ActionKind::Buy => {}
        }
    }

    // Click-and-buy: for each buy, prefer the hit the buy was credited to,
    // otherwise the earliest qualifying hit.
    let leg_kind = match cfg.candb_leg {
        CandBLeg::Click => ActionKind::Click,
        CandBLeg::Atc => ActionKind::AddToCart,
    };
    let hit_qualifies = |hidx: usize, buy: &crate::events::Action| -> bool {
        let hit = &log.hits[hidx];
        if hit.customer != buy.customer {
            return false;
        }
        let gap = buy.ts.signed_duration_since(hit.ts);
        if gap <= TimeDelta::zero() || gap > cfg.windows.buy_window {
            return false;
        }
        per_hit[hidx]
            .credited
            .iter()
            .any(|c| c.kind == leg_kind && c.product == buy.product && c.ts < buy.ts)
    };
    let mut satisfied: Vec<usize> = Vec::new();
    for (aidx, action) in log.actions.iter().enumerate() {
        if action.kind != ActionKind::Buy {
            continue;
        }
        let consumer = match credit_of[aidx] {
            Some(hidx) if hit_qualifies(hidx, action) => Some(hidx),
            _ => (0..log.hits.len()).find(|&hidx| hit_qualifies(hidx, action)),
        };
        if let Some(hidx) = consumer {
            satisfied.push(hidx);
        }
    }
    for hidx in satisfied {
        per_hit[hidx].clicked_and_bought = true;
        per_hit[hidx].bought = true;
    }

    AttributionResult {
        per_hit,
        unattributed,
    }
}
