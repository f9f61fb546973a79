//! Assembles the full evaluation report and renders it as canonical JSON or
//! as fixed-width text tables shaped like the usual evaluation write-ups.
//!
//! JSON is the machine contract: stable field order, full-precision values,
//! lossless round-trips. The text table is display-only.

use crate::attribution::{attribute, AttributionConfig};
use crate::behavior::{behavior_report, bounce_indicator, BehaviorError, BehaviorReport};
use crate::events::EventLog;
use crate::filters::{simulate_filters, FilterConfig, FilterImpactReport};
use crate::metrics::{
    bucket_daily, compute_all, DailyMetricSeries, MetricKind, MetricValue, MetricsError,
};
use crate::stats::{
    compare_metrics, correlation_matrix, CorrelationMatrix, StatsError, TTestReport,
};
use chrono::{NaiveDate, TimeDelta};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// The metric pairs the evaluation always tests: each corrected variant
/// against its parent.
pub const DEFAULT_TTEST_PAIRS: [(MetricKind, MetricKind); 2] = [
    (MetricKind::Ctr, MetricKind::CtrNoRepeat),
    (MetricKind::Btr, MetricKind::ClickAndBuy),
];

/// The four metrics whose daily series enter the correlation matrix.
pub const CORRELATION_METRICS: [MetricKind; 4] = [
    MetricKind::Ctr,
    MetricKind::CtrNoRepeat,
    MetricKind::Btr,
    MetricKind::ClickAndBuy,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub first: NaiveDate,
    pub last: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTTest {
    pub metric_a: MetricKind,
    pub metric_b: MetricKind,
    pub test: TTestReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub source_name: String,
    pub hits: u64,
    pub date_range: DateRange,
    pub metrics: Vec<MetricValue>,
    pub daily: Vec<DailyMetricSeries>,
    pub ttests: Vec<LabeledTTest>,
    pub correlation: CorrelationMatrix,
    pub behavior: BehaviorReport,
    pub bounce_flag: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub filter_impact: Option<FilterImpactReport>,
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub attribution: AttributionConfig,
    pub tz_offset: TimeDelta,
    /// Tested in addition to [`DEFAULT_TTEST_PAIRS`].
    pub extra_pairs: Vec<(MetricKind, MetricKind)>,
    /// When set, a filter simulation is replayed and included.
    pub filters: Option<FilterConfig>,
    pub bounce_threshold: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            attribution: AttributionConfig::default(),
            tz_offset: TimeDelta::zero(),
            extra_pairs: Vec::new(),
            filters: None,
            bounce_threshold: crate::behavior::DEFAULT_BOUNCE_THRESHOLD,
        }
    }
}

/// Runs the whole pipeline over a normalized log.
pub fn build_report(log: &EventLog, opts: &ReportOptions) -> Result<EvaluationReport, ReportError> {
    let attr = attribute(log, &opts.attribution);
    let metrics = compute_all(&attr)?;
    let daily: Vec<DailyMetricSeries> = MetricKind::ALL
        .iter()
        .map(|&kind| bucket_daily(&attr, log, kind, opts.tz_offset))
        .collect::<Result<_, _>>()?;
    let series_for = |kind: MetricKind| {
        daily
            .iter()
            .find(|s| s.kind == kind)
            .expect("all six series present")
    };

    let mut ttests = Vec::new();
    for &(a, b) in DEFAULT_TTEST_PAIRS.iter().chain(opts.extra_pairs.iter()) {
        ttests.push(LabeledTTest {
            metric_a: a,
            metric_b: b,
            test: compare_metrics(series_for(a), series_for(b))?,
        });
    }

    let corr_input: Vec<DailyMetricSeries> = CORRELATION_METRICS
        .iter()
        .map(|&k| series_for(k).clone())
        .collect();
    let correlation = correlation_matrix(&corr_input)?;

    let behavior = behavior_report(log)?;
    let bounce_flag = bounce_indicator(&behavior, opts.bounce_threshold);
    let filter_impact = opts
        .filters
        .as_ref()
        .map(|f| simulate_filters(log, f, &opts.attribution));

    let first = daily[0].days.first().expect("non-empty series").date;
    let last = daily[0].days.last().expect("non-empty series").date;

    Ok(EvaluationReport {
        source_name: log.source_name.clone(),
        hits: log.hits.len() as u64,
        date_range: DateRange { first, last },
        metrics,
        daily,
        ttests,
        correlation,
        behavior,
        bounce_flag,
        filter_impact,
    })
}

/// Canonical JSON: pretty-printed, stable field order, trailing newline.
pub fn render_json(report: &EvaluationReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn parse_json(text: &str) -> Result<EvaluationReport, serde_json::Error> {
    serde_json::from_str(text)
}

/// Formats with `digits` significant digits, decimal where readable and
/// scientific elsewhere. Rust's formatter rounds ties to even.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return format!("{:.*}", digits - 1, 0.0);
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (digits as i32 - 1 - mag).max(0) as usize;
        format!("{:.*}", decimals, x)
    } else {
        format!("{:.*e}", digits - 1, x)
    }
}

/// P-values print with 3 significant digits, floored at "<1e-12".
pub fn fmt_p(p: f64) -> String {
    if p < 1e-12 {
        "<1e-12".into()
    } else {
        fmt_sig(p, 3)
    }
}

fn fmt_opt_rate(v: &Option<MetricValue>) -> String {
    match v {
        Some(m) => fmt_sig(m.rate, 4),
        None => "n/a".into(),
    }
}

/// Fixed-width text rendering of the whole report; every quantity in the
/// JSON form appears here too.
pub fn render_table(report: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "source: {}", report.source_name);
    let _ = writeln!(
        out,
        "hits: {}   dates: {}..{}",
        report.hits, report.date_range.first, report.date_range.last
    );
    let _ = writeln!(out);

    let _ = writeln!(
        out,
        "{:<18} {:>10} {:>12} {:>10}",
        "metric", "mean", "std.dev", "n"
    );
    for m in &report.metrics {
        let _ = writeln!(
            out,
            "{:<18} {:>10} {:>12} {:>10}",
            m.kind.label(),
            fmt_sig(m.rate, 4),
            fmt_sig(m.std_dev(), 4),
            m.trials
        );
    }
    let _ = writeln!(out);

    for lt in &report.ttests {
        out.push_str(&render_ttest_table(lt));
        let _ = writeln!(out);
    }

    out.push_str(&render_correlation(&report.correlation));
    let _ = writeln!(out);

    out.push_str(&render_behavior(&report.behavior, report.bounce_flag));

    let _ = writeln!(out);
    let _ = writeln!(out, "daily series (rate by date)");
    let dates = report.daily[0].dates();
    let mut header = format!("{:<12}", "date");
    for s in &report.daily {
        let _ = write!(header, " {:>16}", s.kind.label());
    }
    let _ = writeln!(out, "{header}");
    for (i, date) in dates.iter().enumerate() {
        let mut row = format!("{:<12}", date.to_string());
        for s in &report.daily {
            let _ = write!(row, " {:>16}", fmt_sig(s.days[i].value.rate, 4));
        }
        let _ = writeln!(out, "{row}");
    }

    if let Some(fi) = &report.filter_impact {
        let _ = writeln!(out);
        out.push_str(&render_filter_impact(fi));
    }
    out
}

/// One two-row table in the style of the published pooled-test summaries:
/// both metrics' summaries, with the statistic on the first row.
pub fn render_ttest_table(lt: &LabeledTTest) -> String {
    let t = &lt.test;
    let mut out = String::new();
    let title_variant = match t.variant {
        crate::stats::TestVariant::Pooled => "Pooled",
        crate::stats::TestVariant::Unpooled => "Welch",
    };
    let degenerate = if t.degenerate { " (degenerate)" } else { "" };
    let _ = writeln!(
        out,
        "{} t-test for {} and {}{}",
        title_variant,
        lt.metric_a.label(),
        lt.metric_b.label(),
        degenerate
    );
    let _ = writeln!(
        out,
        "{:<18} {:>10} {:>12} {:>10} {:>12} {:>10}",
        "metric", "mean", "std.dev", "n", "t", "p-value"
    );
    let _ = writeln!(
        out,
        "{:<18} {:>10} {:>12} {:>10} {:>12} {:>10}",
        lt.metric_a.label(),
        fmt_sig(t.a.mean, 4),
        fmt_sig(t.a.std_dev, 4),
        t.a.n,
        fmt_sig(t.t, 4),
        fmt_p(t.p_value)
    );
    let _ = writeln!(
        out,
        "{:<18} {:>10} {:>12} {:>10}",
        lt.metric_b.label(),
        fmt_sig(t.b.mean, 4),
        fmt_sig(t.b.std_dev, 4),
        t.b.n,
    );
    let _ = writeln!(
        out,
        "df = {}   sd ratio = {}   reject H0 at 0.05: {}",
        fmt_sig(t.df, 6),
        fmt_sig(t.sd_ratio, 4),
        if t.reject_at_05 { "yes" } else { "no" }
    );
    out
}

/// Symmetric matrix with unit diagonal, two-decimal entries.
pub fn render_correlation(m: &CorrelationMatrix) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Pearson correlation of daily rates");
    let mut header = format!("{:<18}", "");
    for k in &m.labels {
        let _ = write!(header, " {:>16}", k.label());
    }
    let _ = writeln!(out, "{header}");
    for (i, k) in m.labels.iter().enumerate() {
        let mut row = format!("{:<18}", k.label());
        for j in 0..m.labels.len() {
            let cell = match m.r[i][j] {
                Some(v) => format!("{v:.2}"),
                None => "n/a".into(),
            };
            let _ = write!(row, " {cell:>16}");
        }
        let _ = writeln!(out, "{row}");
    }
    out
}

pub fn render_behavior(b: &BehaviorReport, bounce_flag: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "customer behavior (customers with at least one hit)");
    let _ = writeln!(out, "{:<22} {}", "customers", b.customers);
    let _ = writeln!(
        out,
        "{:<22} {}",
        "hits/customer",
        fmt_sig(b.hits_per_customer, 4)
    );
    let _ = writeln!(
        out,
        "{:<22} {}",
        "buyers/customer",
        fmt_sig(b.buyers_per_customer, 4)
    );
    let _ = writeln!(
        out,
        "{:<22} {}   bounce flag: {}",
        "clicks/customer",
        fmt_sig(b.clicks_per_customer, 4),
        if bounce_flag { "yes" } else { "no" }
    );
    let _ = writeln!(
        out,
        "{:<22} {}",
        "clicks/buy",
        b.clicks_per_buy.map_or("n/a".into(), |v| fmt_sig(v, 4))
    );
    let _ = writeln!(out, "note: {}", b.caveat);
    out
}

pub fn render_filter_impact(f: &FilterImpactReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "filter simulation");
    let _ = writeln!(
        out,
        "hit-product pairs removed: {}/{} ({})",
        f.pairs_removed,
        f.pairs,
        fmt_sig(f.pairs_removed_fraction, 4)
    );
    let _ = writeln!(
        out,
        "  by click-today filter: {}   by cart-window filter: {}",
        f.pairs_removed_by_click_filter, f.pairs_removed_by_atc_filter
    );
    let _ = writeln!(
        out,
        "hits fully emptied: {}/{} ({})",
        f.hits_emptied,
        f.hits,
        fmt_sig(f.hits_emptied_fraction, 4)
    );
    let _ = writeln!(
        out,
        "{:<22} {:>12} {:>16}",
        "", "original", "counterfactual"
    );
    let _ = writeln!(
        out,
        "{:<22} {:>12} {:>16}",
        "CTR",
        fmt_opt_rate(&f.original.ctr),
        fmt_opt_rate(&f.counterfactual.ctr)
    );
    let _ = writeln!(
        out,
        "{:<22} {:>12} {:>16}",
        "CTR-NoRepeat",
        fmt_opt_rate(&f.original.ctr_norepeat),
        fmt_opt_rate(&f.counterfactual.ctr_norepeat)
    );
    out
}

pub fn render_validation(v: &crate::events::ValidationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "hits: {}  clicks: {}  atcs: {}  buys: {}  customers: {}",
        v.hits, v.clicks, v.atcs, v.buys, v.customers
    );
    match (&v.first_ts, &v.last_ts) {
        (Some(a), Some(b)) => {
            let _ = writeln!(out, "span: {a} .. {b}");
        }
        _ => {
            let _ = writeln!(out, "span: empty log");
        }
    }
    if v.warnings.is_empty() {
        let _ = writeln!(out, "no warnings");
    } else {
        for w in &v.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
    }
    out
}

pub fn render_ground_truth(r: &crate::generator::GroundTruthReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<18} {:>10} {:>10} {:>10} {:>6}",
        "metric", "expected", "measured", "band", "pass"
    );
    for c in &r.checks {
        let _ = writeln!(
            out,
            "{:<18} {:>10} {:>10} {:>10} {:>6}",
            c.kind.label(),
            fmt_sig(c.expected, 4),
            fmt_sig(c.measured, 4),
            fmt_sig(c.band, 4),
            if c.pass { "yes" } else { "no" }
        );
    }
    let _ = writeln!(out, "all pass: {}", if r.all_pass { "yes" } else { "no" });
    out
}
