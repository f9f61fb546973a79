//! Two-sample significance tests between metric pairs and Pearson
//! correlation across daily metric series.
//!
//! Hit-level metrics are Bernoulli means, so a metric summary is
//! `(mean p, std dev sqrt(p(1-p)/n), n)` and two metrics are compared with a
//! two-sample t-test. The pooled statistic is used when the sample standard
//! deviations are within a factor of two of each other (boundary inclusive),
//! Welch's statistic with Welch-Satterthwaite degrees of freedom otherwise.
//! P-values are two-sided, computed from the Student-t CDF through the
//! regularized incomplete beta function.

use crate::metrics::{DailyMetricSeries, MetricKind, MetricValue};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("sample too small: n = {n} (need at least 2)")]
    InvalidSample { n: u64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("constant series has no defined correlation")]
    ConstantSeries,
    #[error("series do not share the same date axis")]
    DateAxisMismatch,
}

/// Serializes possibly non-finite floats: JSON number when finite, the
/// strings "inf" / "-inf" / "nan" otherwise, so reports round-trip.
mod maybe_nonfinite {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("bad float literal {other:?}"))),
            },
        }
    }
}

/// Summary of one Bernoulli-mean sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub mean: f64,
    pub std_dev: f64,
    pub n: u64,
}

impl SampleSummary {
    pub fn new(mean: f64, std_dev: f64, n: u64) -> Result<Self, StatsError> {
        if n < 2 {
            return Err(StatsError::InvalidSample { n });
        }
        Ok(SampleSummary { mean, std_dev, n })
    }

    /// Builds the summary from pooled Bernoulli counts:
    /// mean = successes/trials, sd = sqrt(p(1-p)/n), n = trials.
    pub fn from_counts(successes: u64, trials: u64) -> Result<Self, StatsError> {
        if trials < 2 {
            return Err(StatsError::InvalidSample { n: trials });
        }
        let p = successes as f64 / trials as f64;
        Ok(SampleSummary {
            mean: p,
            std_dev: (p * (1.0 - p) / trials as f64).sqrt(),
            n: trials,
        })
    }

    pub fn from_metric(value: &MetricValue) -> Result<Self, StatsError> {
        Self::from_counts(value.successes, value.trials)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestVariant {
    Pooled,
    Unpooled,
}

impl fmt::Display for TestVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestVariant::Pooled => "pooled",
            TestVariant::Unpooled => "unpooled",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestChoice {
    pub variant: TestVariant,
    /// Set when a zero standard deviation forced the choice.
    pub degenerate: bool,
}

/// Pooled when the sd ratio lies in [1/2, 2], boundaries included. A single
/// zero sd falls back to unpooled with the degeneracy flag; two zero sds are
/// flagged and treated as pooled (ratio read as 1).
pub fn choose_test(a: &SampleSummary, b: &SampleSummary) -> TestChoice {
    if a.std_dev == 0.0 && b.std_dev == 0.0 {
        return TestChoice {
            variant: TestVariant::Pooled,
            degenerate: true,
        };
    }
    if a.std_dev == 0.0 || b.std_dev == 0.0 {
        return TestChoice {
            variant: TestVariant::Unpooled,
            degenerate: true,
        };
    }
    let ratio = a.std_dev / b.std_dev;
    let variant = if (0.5..=2.0).contains(&ratio) {
        TestVariant::Pooled
    } else {
        TestVariant::Unpooled
    };
    TestChoice {
        variant,
        degenerate: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestReport {
    pub a: SampleSummary,
    pub b: SampleSummary,
    pub variant: TestVariant,
    #[serde(with = "maybe_nonfinite")]
    pub sd_ratio: f64,
    #[serde(with = "maybe_nonfinite")]
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub reject_at_05: bool,
    /// True when a zero-variance input degenerated the statistic (t is then
    /// 0 with p = 1 for equal means, infinite with p = 0 otherwise).
    pub degenerate: bool,
}

fn finish_report(
    a: &SampleSummary,
    b: &SampleSummary,
    variant: TestVariant,
    se: f64,
    df: f64,
    degenerate_choice: bool,
) -> TTestReport {
    let diff = a.mean - b.mean;
    let (t, p_value, degenerate) = if se == 0.0 {
        if diff == 0.0 {
            (0.0, 1.0, true)
        } else {
            (diff.signum() * f64::INFINITY, 0.0, true)
        }
    } else {
        let t = diff / se;
        (t, student_t_p_two_sided(t, df), false)
    };
    TTestReport {
        a: *a,
        b: *b,
        variant,
        sd_ratio: a.std_dev / b.std_dev,
        t,
        df,
        p_value,
        reject_at_05: p_value < 0.05,
        degenerate: degenerate || degenerate_choice,
    }
}

/// Common arithmetic for the pooled statistic; Welch delegates here for
/// equal sizes and spreads, where the two formulas coincide.
fn pooled_parts(a: &SampleSummary, b: &SampleSummary) -> (f64, f64) {
    let (n1, n2) = (a.n as f64, b.n as f64);
    let df = n1 + n2 - 2.0;
    let sp2 = ((n1 - 1.0) * a.std_dev * a.std_dev + (n2 - 1.0) * b.std_dev * b.std_dev) / df;
    let se = (sp2 * (1.0 / n1 + 1.0 / n2)).sqrt();
    (se, df)
}

/// Two-sample pooled t-test: s_p² = ((n₁−1)s₁² + (n₂−1)s₂²)/(n₁+n₂−2),
/// t = (ȳ₁−ȳ₂)/(s_p·√(1/n₁+1/n₂)), df = n₁+n₂−2.
pub fn pooled_ttest(a: &SampleSummary, b: &SampleSummary) -> Result<TTestReport, StatsError> {
    check_sizes(a, b)?;
    let (se, df) = pooled_parts(a, b);
    Ok(finish_report(a, b, TestVariant::Pooled, se, df, false))
}

/// Welch's two-sample t-test: t = (ȳ₁−ȳ₂)/√(s₁²/n₁+s₂²/n₂) with
/// Welch-Satterthwaite degrees of freedom.
pub fn unpooled_ttest(a: &SampleSummary, b: &SampleSummary) -> Result<TTestReport, StatsError> {
    check_sizes(a, b)?;
    if a.n == b.n && a.std_dev == b.std_dev {
        let (se, df) = pooled_parts(a, b);
        return Ok(finish_report(a, b, TestVariant::Unpooled, se, df, false));
    }
    let (n1, n2) = (a.n as f64, b.n as f64);
    let v1 = a.std_dev * a.std_dev / n1;
    let v2 = b.std_dev * b.std_dev / n2;
    let se = (v1 + v2).sqrt();
    let df = if se == 0.0 {
        n1 + n2 - 2.0
    } else {
        (v1 + v2) * (v1 + v2) / (v1 * v1 / (n1 - 1.0) + v2 * v2 / (n2 - 1.0))
    };
    Ok(finish_report(a, b, TestVariant::Unpooled, se, df, false))
}

fn check_sizes(a: &SampleSummary, b: &SampleSummary) -> Result<(), StatsError> {
    for s in [a, b] {
        if s.n < 2 {
            return Err(StatsError::InvalidSample { n: s.n });
        }
    }
    Ok(())
}

/// Chooses pooled or Welch from the sd ratio and runs it.
pub fn ttest(a: &SampleSummary, b: &SampleSummary) -> Result<TTestReport, StatsError> {
    let choice = choose_test(a, b);
    let mut report = match choice.variant {
        TestVariant::Pooled => pooled_ttest(a, b)?,
        TestVariant::Unpooled => unpooled_ttest(a, b)?,
    };
    report.degenerate |= choice.degenerate;
    Ok(report)
}

/// Compares two metrics over the same log: each side is summarized from its
/// whole-log pooled counts, then the sd-ratio rule picks the test.
pub fn compare_metrics(
    series_a: &DailyMetricSeries,
    series_b: &DailyMetricSeries,
) -> Result<TTestReport, StatsError> {
    let (sa, ta) = series_a.totals();
    let (sb, tb) = series_b.totals();
    let a = SampleSummary::from_counts(sa, ta)?;
    let b = SampleSummary::from_counts(sb, tb)?;
    ttest(&a, &b)
}

/// Sample Pearson correlation coefficient, clamped to [-1, 1] against
/// floating-point overshoot.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len() as f64;
    if x.len() < 2 {
        return Err(StatsError::ConstantSeries);
    }
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let (mut cov, mut var_x, mut var_y) = (0.0, 0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mean_x;
        let dy = yi - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(StatsError::ConstantSeries);
    }
    // sqrt of the product keeps self-correlation at exactly 1; fall back to
    // the factored form if the product underflows
    let mut denom = (var_x * var_y).sqrt();
    if denom == 0.0 {
        denom = var_x.sqrt() * var_y.sqrt();
    }
    Ok((cov / denom).clamp(-1.0, 1.0))
}

/// Pairwise Pearson coefficients over daily rate values. Entries are `None`
/// where a constant series leaves the coefficient undefined; the diagonal is
/// forced to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<MetricKind>,
    pub r: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.r[i][j]
    }
}

pub fn correlation_matrix(series: &[DailyMetricSeries]) -> Result<CorrelationMatrix, StatsError> {
    if let Some(first) = series.first() {
        let axis = first.dates();
        if series.iter().any(|s| s.dates() != axis) {
            return Err(StatsError::DateAxisMismatch);
        }
    }
    let rates: Vec<Vec<f64>> = series.iter().map(|s| s.rates()).collect();
    let k = series.len();
    let mut r = vec![vec![None; k]; k];
    for i in 0..k {
        r[i][i] = Some(1.0);
        for j in (i + 1)..k {
            let value = match pearson(&rates[i], &rates[j]) {
                Ok(v) => Some(v),
                Err(StatsError::ConstantSeries) => None,
                Err(e) => return Err(e),
            };
            r[i][j] = value;
            r[j][i] = value;
        }
    }
    Ok(CorrelationMatrix {
        labels: series.iter().map(|s| s.kind).collect(),
        r,
    })
}

/// Two-sided Student-t p-value: I_{df/(df+t²)}(df/2, 1/2). Exact for every
/// df; agrees with the limiting normal to well under 1e-8 above df 1000.
pub fn student_t_p_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if !t.is_finite() {
        return 0.0;
    }
    // x and its complement are each formed directly so neither loses
    // precision when t²/df is tiny
    let tt = t * t;
    let denom = df + tt;
    incomplete_beta_pair(df / 2.0, 0.5, df / denom, tt / denom).clamp(0.0, 1.0)
}

/// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction.
pub fn incomplete_beta_reg(a: f64, b: f64, x: f64) -> f64 {
    incomplete_beta_pair(a, b, x, 1.0 - x)
}

/// As [`incomplete_beta_reg`], with the complement `xc = 1 - x` supplied by
/// the caller so values of x extremely close to 1 keep full precision.
fn incomplete_beta_pair(a: f64, b: f64, x: f64, xc: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if xc <= 0.0 {
        return 1.0;
    }
    // With a huge first parameter the direct fraction consumes x, whose
    // half-ulp is amplified by a. When x is near 1 and the mass above it is
    // not tiny (a·xc small), evaluating the complement from the exact xc is
    // far more accurate; the complement fraction itself degrades once a·xc
    // grows, so beyond that the direct route is the double-precision floor.
    if a >= 1e4 && x > 0.5 && a * xc <= 4.5 {
        return 1.0 - beta_front(b, a, xc, x) * beta_cf(b, a, xc) / b;
    }
    if x < (a + 1.0) / (a + b + 2.0) {
        beta_front(a, b, x, xc) * beta_cf(a, b, x) / a
    } else {
        1.0 - beta_front(b, a, xc, x) * beta_cf(b, a, xc) / b
    }
}

/// exp(a·ln x + b·ln xc − ln B(a, b)); each log is taken on whichever of the
/// pair is below one half, where it is exact.
fn beta_front(a: f64, b: f64, x: f64, xc: f64) -> f64 {
    let ln_x = if x <= 0.5 { x.ln() } else { (-xc).ln_1p() };
    let ln_xc = if xc <= 0.5 { xc.ln() } else { (-x).ln_1p() };
    (a * ln_x + b * ln_xc - ln_beta(a, b)).exp()
}

/// ln B(a, b). The naive three-term ln-gamma form loses absolute precision
/// when one argument is large (two huge values cancel), so the large-argument
/// side goes through a Stirling difference instead.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    let (p, q) = if a >= b { (a, b) } else { (b, a) };
    if p >= 15.0 {
        ln_gamma(q) - lgamma_diff(p, q)
    } else {
        ln_gamma(p) + ln_gamma(q) - ln_gamma(p + q)
    }
}

/// lnΓ(p + q) − lnΓ(p) for p ≥ 15, evaluated without forming the two large
/// ln-gamma values.
fn lgamma_diff(p: f64, q: f64) -> f64 {
    (p - 0.5) * (q / p).ln_1p() + q * (p + q).ln() - q + stirling_series(p + q) - stirling_series(p)
}

/// Correction series S(x) with lnΓ(x) = (x−1/2)ln x − x + ln(2π)/2 + S(x);
/// truncation below 3e-14 for x ≥ 15.
fn stirling_series(x: f64) -> f64 {
    let x2 = x * x;
    (((-1.0 / 1680.0 / x2 + 1.0 / 1260.0) / x2 - 1.0 / 360.0) / x2 + 1.0 / 12.0) / x
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    // convergence needs O(sqrt(a)) terms when x sits near the distribution
    // mean with a huge a (million-hit t-tests); the early exit keeps small
    // cases at a few dozen iterations
    const MAX_ITER: usize = 40_000;
    const EPS: f64 = 1e-16;
    const FPMIN: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() <= EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation (g = 7, 9 terms), accurate to ~1e-14 relative.
pub fn ln_gamma(x: f64) -> f64 {
    #[allow(clippy::excessive_precision)] // the coefficients need every digit
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    const G: f64 = 7.0;
    if x < 0.5 {
        // reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let base = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * base.ln() - base + sum.ln()
}
