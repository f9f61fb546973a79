//! Turns an attribution result into the six through-rate metrics, as
//! whole-log values and as daily series.
//!
//! Every metric is a hit-level Bernoulli rate: the fraction of hits whose
//! attribution record has the metric's flag set. Alongside the rate each
//! value carries the backing counts and the variance of the mean,
//! `p(1 - p) / n`.

use crate::attribution::{AttributedActions, AttributionResult};
use crate::events::EventLog;
use chrono::{NaiveDate, TimeDelta};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("empty denominator: no hits to rate")]
    EmptyDenominator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "ctr")]
    Ctr,
    #[serde(rename = "ctr_norepeat")]
    CtrNoRepeat,
    #[serde(rename = "atc_tr")]
    AtcTr,
    #[serde(rename = "atc_tr_norepeat")]
    AtcTrNoRepeat,
    #[serde(rename = "btr")]
    Btr,
    #[serde(rename = "click_and_buy")]
    ClickAndBuy,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] = [
        MetricKind::Ctr,
        MetricKind::CtrNoRepeat,
        MetricKind::AtcTr,
        MetricKind::AtcTrNoRepeat,
        MetricKind::Btr,
        MetricKind::ClickAndBuy,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            MetricKind::Ctr => "CTR",
            MetricKind::CtrNoRepeat => "CTR-NoRepeat",
            MetricKind::AtcTr => "ATC-TR",
            MetricKind::AtcTrNoRepeat => "ATC-TR-NoRepeat",
            MetricKind::Btr => "BTR",
            MetricKind::ClickAndBuy => "Click & Buy rate",
        }
    }

    /// Whether the hit counts as a success for this metric.
    pub fn flag(&self, rec: &AttributedActions) -> bool {
        match self {
            MetricKind::Ctr => rec.clicked,
            MetricKind::CtrNoRepeat => rec.clicked_norepeat,
            MetricKind::AtcTr => rec.atc,
            MetricKind::AtcTrNoRepeat => rec.atc_norepeat,
            MetricKind::Btr => rec.bought,
            MetricKind::ClickAndBuy => rec.clicked_and_bought,
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One metric's rate with the Bernoulli counts backing it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub kind: MetricKind,
    pub successes: u64,
    pub trials: u64,
    pub rate: f64,
    pub variance_of_mean: f64,
}

impl MetricValue {
    pub fn from_counts(
        kind: MetricKind,
        successes: u64,
        trials: u64,
    ) -> Result<Self, MetricsError> {
        if trials == 0 {
            return Err(MetricsError::EmptyDenominator);
        }
        debug_assert!(successes <= trials);
        let rate = successes as f64 / trials as f64;
        Ok(MetricValue {
            kind,
            successes,
            trials,
            rate,
            variance_of_mean: rate * (1.0 - rate) / trials as f64,
        })
    }

    pub fn std_dev(&self) -> f64 {
        self.variance_of_mean.sqrt()
    }
}

pub fn compute_metric(
    attr: &AttributionResult,
    kind: MetricKind,
) -> Result<MetricValue, MetricsError> {
    let successes = attr.per_hit.iter().filter(|h| kind.flag(h)).count() as u64;
    MetricValue::from_counts(kind, successes, attr.per_hit.len() as u64)
}

/// All six metrics in canonical order.
pub fn compute_all(attr: &AttributionResult) -> Result<Vec<MetricValue>, MetricsError> {
    MetricKind::ALL
        .iter()
        .map(|&kind| compute_metric(attr, kind))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyPoint {
    pub date: NaiveDate,
    pub value: MetricValue,
}

/// Per-day values of one metric. Dates are strictly increasing and days
/// without hits are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyMetricSeries {
    pub kind: MetricKind,
    pub days: Vec<DailyPoint>,
}

impl DailyMetricSeries {
    pub fn rates(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.value.rate).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.days.iter().map(|d| d.date).collect()
    }

    /// Whole-series counts: the sum over days equals the whole-log counts.
    pub fn totals(&self) -> (u64, u64) {
        self.days.iter().fold((0, 0), |(s, t), d| {
            (s + d.value.successes, t + d.value.trials)
        })
    }
}

/// Buckets hits by the calendar date of `hit.ts + tz_offset` and rates each
/// day's hits. `attr` must correspond to `log` (same hits, same order).
pub fn bucket_daily(
    attr: &AttributionResult,
    log: &EventLog,
    kind: MetricKind,
    tz_offset: TimeDelta,
) -> Result<DailyMetricSeries, MetricsError> {
    if attr.per_hit.is_empty() {
        return Err(MetricsError::EmptyDenominator);
    }
    debug_assert_eq!(attr.per_hit.len(), log.hits.len());
    let mut buckets: BTreeMap<NaiveDate, (u64, u64)> = BTreeMap::new();
    for (rec, hit) in attr.per_hit.iter().zip(&log.hits) {
        let date = hit.ts.date_with_offset(tz_offset);
        let entry = buckets.entry(date).or_insert((0, 0));
        entry.1 += 1;
        if kind.flag(rec) {
            entry.0 += 1;
        }
    }
    let days = buckets
        .into_iter()
        .map(|(date, (successes, trials))| {
            Ok(DailyPoint {
                date,
                value: MetricValue::from_counts(kind, successes, trials)?,
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    Ok(DailyMetricSeries { kind, days })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{attribute, AttributionConfig};
    use crate::events::read_log;
    use std::io::Cursor;

    fn fake_attr(flags: &[(bool, bool)]) -> AttributionResult {
        // (clicked, clicked_norepeat) per hit
        let per_hit = flags
            .iter()
            .enumerate()
            .map(|(i, &(clicked, norepeat))| AttributedActions {
                hit_id: compact_str::format_compact!("h{i}"),
                clicked,
                clicked_norepeat: norepeat,
                atc: false,
                atc_norepeat: false,
                bought: false,
                clicked_and_bought: false,
                credited: vec![],
            })
            .collect();
        AttributionResult {
            per_hit,
            unattributed: Default::default(),
        }
    }

    #[test]
    fn zero_successes_zero_rate() {
        let attr = fake_attr(&[(false, false); 10]);
        let v = compute_metric(&attr, MetricKind::Ctr).unwrap();
        assert_eq!(v.rate, 0.0);
        assert_eq!(v.successes, 0);
        assert_eq!(v.trials, 10);
        assert_eq!(v.variance_of_mean, 0.0);
    }

    #[test]
    fn half_rate() {
        let attr = fake_attr(&[(true, true), (true, false), (false, false), (false, false)]);
        let v = compute_metric(&attr, MetricKind::Ctr).unwrap();
        assert_eq!(v.rate, 0.5);
        let nr = compute_metric(&attr, MetricKind::CtrNoRepeat).unwrap();
        assert_eq!(nr.rate, 0.25);
        assert!(nr.rate <= v.rate);
    }

    #[test]
    fn empty_denominator() {
        let attr = fake_attr(&[]);
        assert_eq!(
            compute_metric(&attr, MetricKind::Ctr),
            Err(MetricsError::EmptyDenominator)
        );
    }

    #[test]
    fn compute_all_yields_six() {
        let attr = fake_attr(&[(false, false); 3]);
        let all = compute_all(&attr).unwrap();
        assert_eq!(all.len(), 6);
        assert!(all.iter().all(|v| v.rate == 0.0));
    }

    #[test]
    fn variance_zero_iff_rate_degenerate() {
        for (flags, expect_zero) in [
            (vec![(true, true); 4], true),
            (vec![(false, false); 4], true),
            (vec![(true, true), (false, false)], false),
        ] {
            let attr = fake_attr(&flags);
            let v = compute_metric(&attr, MetricKind::Ctr).unwrap();
            assert_eq!(v.variance_of_mean == 0.0, expect_zero);
        }
    }

    fn daily_log() -> (AttributionResult, EventLog) {
        let data = "\
{\"type\":\"hit\",\"hit_id\":\"h1\",\"customer\":\"c1\",\"widget\":\"w\",\"ts\":\"2023-01-01T10:00:00Z\",\"products\":[\"p1\"]}
{\"type\":\"click\",\"customer\":\"c1\",\"product\":\"p1\",\"ts\":\"2023-01-01T10:01:00Z\"}
{\"type\":\"hit\",\"hit_id\":\"h2\",\"customer\":\"c1\",\"widget\":\"w\",\"ts\":\"2023-01-02T10:00:00Z\",\"products\":[\"p2\"]}
{\"type\":\"hit\",\"hit_id\":\"h3\",\"customer\":\"c1\",\"widget\":\"w\",\"ts\":\"2023-01-04T10:00:00Z\",\"products\":[\"p3\"]}
";
        let log = read_log(Cursor::new(data), "daily").unwrap();
        let attr = attribute(&log, &AttributionConfig::default());
        (attr, log)
    }

    #[test]
    fn daily_buckets_skip_empty_days() {
        let (attr, log) = daily_log();
        let series = bucket_daily(&attr, &log, MetricKind::Ctr, TimeDelta::zero()).unwrap();
        assert_eq!(series.days.len(), 3); // Jan 3 has no hits and is omitted
        let dates = series.dates();
        assert!(dates.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(series.days[0].value.rate, 1.0);
        assert_eq!(series.days[1].value.rate, 0.0);
    }

    #[test]
    fn daily_totals_match_whole_log() {
        let (attr, log) = daily_log();
        let whole = compute_metric(&attr, MetricKind::Ctr).unwrap();
        let series = bucket_daily(&attr, &log, MetricKind::Ctr, TimeDelta::zero()).unwrap();
        assert_eq!(series.totals(), (whole.successes, whole.trials));
    }

    #[test]
    fn tz_offset_shifts_bucket_date() {
        let data = "\
{\"type\":\"hit\",\"hit_id\":\"h1\",\"customer\":\"c1\",\"widget\":\"w\",\"ts\":\"2023-01-01T23:59:00Z\",\"products\":[\"p1\"]}
";
        let log = read_log(Cursor::new(data), "tz").unwrap();
        let attr = attribute(&log, &AttributionConfig::default());
        let utc = bucket_daily(&attr, &log, MetricKind::Ctr, TimeDelta::zero()).unwrap();
        assert_eq!(
            utc.days[0].date,
            NaiveDate::from_ymd_opt(2023, 1, 1).unwrap()
        );
        let shifted = bucket_daily(&attr, &log, MetricKind::Ctr, TimeDelta::hours(2)).unwrap();
        assert_eq!(
            shifted.days[0].date,
            NaiveDate::from_ymd_opt(2023, 1, 2).unwrap()
        );
    }

    #[test]
    fn single_day_series_equals_whole_log_value() {
        let data = "\
{\"type\":\"hit\",\"hit_id\":\"h1\",\"customer\":\"c1\",\"widget\":\"w\",\"ts\":\"2023-01-01T10:00:00Z\",\"products\":[\"p1\"]}
{\"type\":\"hit\",\"hit_id\":\"h2\",\"customer\":\"c1\",\"widget\":\"w\",\"ts\":\"2023-01-01T12:00:00Z\",\"products\":[\"p2\"]}
{\"type\":\"click\",\"customer\":\"c1\",\"product\":\"p1\",\"ts\":\"2023-01-01T10:01:00Z\"}
";
        let log = read_log(Cursor::new(data), "one-day").unwrap();
        let attr = attribute(&log, &AttributionConfig::default());
        let series = bucket_daily(&attr, &log, MetricKind::Ctr, TimeDelta::zero()).unwrap();
        assert_eq!(series.days.len(), 1);
        let whole = compute_metric(&attr, MetricKind::Ctr).unwrap();
        assert_eq!(series.days[0].value, whole);
    }
}
