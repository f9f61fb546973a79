//! `reclens` — evaluate recommendation-widget impact from event logs.
//!
//! Subcommands: `validate`, `metrics`, `ttest`, `correlate`, `behavior`,
//! `filter-sim`, `generate`, `report`. Logs are JSON lines; `-` means
//! standard input or output. Identical arguments and input bytes always
//! produce identical output bytes.

use chrono::TimeDelta;
use clap::{Args, Parser, Subcommand};
use reclens_core::attribution::{
    attribute, AttributionConfig, CandBLeg, NorepeatScope, WindowConfig,
};
use reclens_core::behavior::{behavior_report, bounce_indicator, DEFAULT_BOUNCE_THRESHOLD};
use reclens_core::events::{read_log, validate_log, EventLog};
use reclens_core::filters::{simulate_filters, FilterConfig};
use reclens_core::generator::{generate, verify_ground_truth, GeneratorConfig, GeneratorPreset};
use reclens_core::metrics::{
    bucket_daily, compute_all, DailyMetricSeries, MetricKind, MetricValue,
};
use reclens_core::report::{
    build_report, fmt_sig, render_behavior, render_correlation, render_filter_impact,
    render_ground_truth, render_json, render_table, render_ttest_table, render_validation,
    LabeledTTest, ReportOptions,
};
use reclens_core::stats::{compare_metrics, correlation_matrix};
use serde::Serialize;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::process::ExitCode;

#[derive(Debug)]
enum CliError {
    /// Bad flags or flag values: exit 2.
    Usage(String),
    /// I/O, parse, or data errors: exit 1.
    Data(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Parser)]
#[command(
    name = "reclens",
    version,
    about = "Windowed-attribution analytics for recommendation widgets"
)]
struct Cli {
    /// Worker threads (default: machine parallelism; env RECLENS_THREADS).
    /// Never affects output bytes.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a log and report counts, span, and warnings
    Validate(ValidateArgs),
    /// Attribute a log and print the six through-rate metrics
    Metrics(MetricsArgs),
    /// Two-sample t-tests between metric pairs
    Ttest(TtestArgs),
    /// Pearson correlation matrix of daily metric rates
    Correlate(CorrelateArgs),
    /// Customer-behavior indicators
    Behavior(BehaviorArgs),
    /// Replay recommendation filters and report their impact
    FilterSim(FilterSimArgs),
    /// Generate a synthetic log with known behavior parameters
    Generate(GenerateArgs),
    /// Full evaluation report (metrics, t-tests, correlation, behavior)
    Report(ReportArgs),
}

#[derive(Args)]
struct IoArgs {
    /// Input log path; '-' reads standard input
    #[arg(long, short = 'i')]
    input: String,
    /// Output path; '-' or absent writes standard output
    #[arg(long, short = 'o', default_value = "-")]
    output: String,
    /// Output format (default: table, except filter-sim which emits json)
    #[arg(long, value_parser = ["json", "table", "both"])]
    format: Option<String>,
}

impl IoArgs {
    fn format_or(&self, default: &str) -> String {
        self.format.clone().unwrap_or_else(|| default.to_owned())
    }
}

#[derive(Args)]
struct WindowArgs {
    /// Click attribution window (e.g. 5m, 90s, 1h)
    #[arg(long, default_value = "5m")]
    click_window: String,
    /// Add-to-cart attribution window
    #[arg(long, default_value = "30m")]
    atc_window: String,
    /// Buy attribution window
    #[arg(long, default_value = "24h")]
    buy_window: String,
    /// Fixed UTC offset for day bucketing (e.g. +2h, -5h30m)
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    tz_offset: String,
    /// First-interaction dedup scope for the NoRepeat variants
    #[arg(long, value_parser = ["log", "day"], default_value = "log")]
    norepeat_scope: String,
    /// Which credited action arms the click-and-buy chain
    #[arg(long, value_parser = ["click", "atc"], default_value = "click")]
    candb_leg: String,
}

impl WindowArgs {
    fn attribution(&self) -> Result<AttributionConfig, CliError> {
        let windows = WindowConfig::new(
            parse_duration(&self.click_window)?,
            parse_duration(&self.atc_window)?,
            parse_duration(&self.buy_window)?,
        )
        .map_err(|e| usage(e.to_string()))?;
        Ok(AttributionConfig {
            windows,
            norepeat_scope: match self.norepeat_scope.as_str() {
                "day" => NorepeatScope::Day,
                _ => NorepeatScope::Log,
            },
            candb_leg: match self.candb_leg.as_str() {
                "atc" => CandBLeg::Atc,
                _ => CandBLeg::Click,
            },
            tz_offset: parse_signed_duration(&self.tz_offset)?,
        })
    }

    fn tz(&self) -> Result<TimeDelta, CliError> {
        parse_signed_duration(&self.tz_offset)
    }
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args)]
struct MetricsArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    windows: WindowArgs,
}

#[derive(Args)]
struct TtestArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    windows: WindowArgs,
    /// Metric pair "A,B"; repeatable. Defaults to CTR,CTR-NoRepeat and
    /// BTR,ClickAndBuy
    #[arg(long)]
    pair: Vec<String>,
}

#[derive(Args)]
struct CorrelateArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    windows: WindowArgs,
}

#[derive(Args)]
struct BehaviorArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Clicks-per-customer level under which the bounce flag raises
    #[arg(long, default_value_t = DEFAULT_BOUNCE_THRESHOLD)]
    bounce_threshold: f64,
}

#[derive(Args)]
struct FilterSimArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    windows: WindowArgs,
    /// Disable the clicked-on-the-same-day filter
    #[arg(long)]
    no_clicked_today: bool,
    /// Rolling add-to-cart filter window in days (0 disables)
    #[arg(long, default_value_t = 7)]
    atc_days: u32,
    /// Disable the add-to-cart filter
    #[arg(long)]
    no_atc_filter: bool,
}

impl FilterSimArgs {
    fn filter_config(&self) -> Result<FilterConfig, CliError> {
        Ok(FilterConfig {
            clicked_today: !self.no_clicked_today,
            atc_window_days: self.atc_days,
            atc_filter_enabled: !self.no_atc_filter,
            tz_offset: self.windows.tz()?,
        })
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Output path; '-' writes standard output
    #[arg(long, short = 'o', default_value = "-")]
    output: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Behavioral preset
    #[arg(long, value_parser = ["default", "table1", "table2"], default_value = "default")]
    preset: String,
    /// JSON file with generator parameters (overrides the preset)
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    customers: Option<u32>,
    #[arg(long)]
    days: Option<u32>,
    /// After writing, verify measured rates against the analytic ground
    /// truth; verification failures exit 1
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    windows: WindowArgs,
    /// Extra metric pair "A,B" to test; repeatable
    #[arg(long)]
    pair: Vec<String>,
    /// Include a filter simulation in the report
    #[arg(long)]
    filter_sim: bool,
    #[arg(long, default_value_t = DEFAULT_BOUNCE_THRESHOLD)]
    bounce_threshold: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads.or_else(|| {
        std::env::var("RECLENS_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    }) {
        // deliberately ignore a second initialization (tests call run twice)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate(a) => {
            let log = load_input(&a.io.input)?;
            let report = validate_log(&log);
            emit(&a.io, "table", &report, render_validation)
        }
        Command::Metrics(a) => {
            let attr_cfg = a.windows.attribution()?;
            let log = load_input(&a.io.input)?;
            let attr = attribute(&log, &attr_cfg);
            let metrics = compute_all(&attr).map_err(data)?;
            let tz = a.windows.tz()?;
            let daily: Vec<DailyMetricSeries> = MetricKind::ALL
                .iter()
                .map(|&k| bucket_daily(&attr, &log, k, tz))
                .collect::<Result<_, _>>()
                .map_err(data)?;
            let out = MetricsOutput { metrics, daily };
            emit(&a.io, "table", &out, render_metrics_output)
        }
        Command::Ttest(a) => {
            let attr_cfg = a.windows.attribution()?;
            let pairs = parse_pairs(&a.pair)?;
            let log = load_input(&a.io.input)?;
            let attr = attribute(&log, &attr_cfg);
            let tz = a.windows.tz()?;
            let mut tests = Vec::new();
            for (ka, kb) in pairs {
                let sa = bucket_daily(&attr, &log, ka, tz).map_err(data)?;
                let sb = bucket_daily(&attr, &log, kb, tz).map_err(data)?;
                tests.push(LabeledTTest {
                    metric_a: ka,
                    metric_b: kb,
                    test: compare_metrics(&sa, &sb).map_err(data)?,
                });
            }
            emit(&a.io, "table", &tests, |ts| {
                ts.iter()
                    .map(render_ttest_table)
                    .collect::<Vec<_>>()
                    .join("\n")
            })
        }
        Command::Correlate(a) => {
            let attr_cfg = a.windows.attribution()?;
            let log = load_input(&a.io.input)?;
            let attr = attribute(&log, &attr_cfg);
            let tz = a.windows.tz()?;
            let series: Vec<DailyMetricSeries> = reclens_core::report::CORRELATION_METRICS
                .iter()
                .map(|&k| bucket_daily(&attr, &log, k, tz))
                .collect::<Result<_, _>>()
                .map_err(data)?;
            let matrix = correlation_matrix(&series).map_err(data)?;
            emit(&a.io, "table", &matrix, render_correlation)
        }
        Command::Behavior(a) => {
            let log = load_input(&a.io.input)?;
            let report = behavior_report(&log).map_err(data)?;
            let flag = bounce_indicator(&report, a.bounce_threshold);
            let out = BehaviorOutput {
                bounce_flag: flag,
                bounce_threshold: a.bounce_threshold,
                report,
            };
            emit(&a.io, "table", &out, |o| {
                render_behavior(&o.report, o.bounce_flag)
            })
        }
        Command::FilterSim(a) => {
            let attr_cfg = a.windows.attribution()?;
            let filter_cfg = a.filter_config()?;
            let log = load_input(&a.io.input)?;
            let report = simulate_filters(&log, &filter_cfg, &attr_cfg);
            emit(&a.io, "json", &report, render_filter_impact)
        }
        Command::Generate(a) => {
            let mut cfg = match &a.config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| CliError::Data(format!("{path}: {e}")))?;
                    serde_json::from_str::<GeneratorConfig>(&text)
                        .map_err(|e| CliError::Data(format!("{path}: {e}")))?
                }
                None => {
                    let preset: GeneratorPreset = a.preset.parse().map_err(usage)?;
                    GeneratorConfig::preset(preset, a.seed)
                }
            };
            cfg.seed = a.seed;
            if let Some(c) = a.customers {
                cfg.customers = c;
            }
            if let Some(d) = a.days {
                cfg.days = d;
            }
            let (log, truth) = generate(&cfg).map_err(data)?;
            write_output(&a.output, &log.to_jsonl())?;
            if a.verify {
                let report = verify_ground_truth(&log, &truth, WindowConfig::default());
                eprint!("{}", render_ground_truth(&report));
                if !report.all_pass {
                    return Err(CliError::Data("ground-truth verification failed".into()));
                }
            }
            Ok(())
        }
        Command::Report(a) => {
            let opts = ReportOptions {
                attribution: a.windows.attribution()?,
                tz_offset: a.windows.tz()?,
                extra_pairs: parse_extra_pairs(&a.pair)?,
                filters: a.filter_sim.then(|| FilterConfig {
                    tz_offset: TimeDelta::zero(),
                    ..Default::default()
                }),
                bounce_threshold: a.bounce_threshold,
            };
            let mut opts = opts;
            if let Some(f) = &mut opts.filters {
                f.tz_offset = a.windows.tz()?;
            }
            let log = load_input(&a.io.input)?;
            let report = build_report(&log, &opts).map_err(data)?;
            let text = match a.io.format_or("table").as_str() {
                "json" => render_json(&report),
                "table" => render_table(&report),
                _ => format!("{}\n{}", render_table(&report), render_json(&report)),
            };
            write_output(&a.io.output, &text)
        }
    }
}

#[derive(Serialize)]
struct MetricsOutput {
    metrics: Vec<MetricValue>,
    daily: Vec<DailyMetricSeries>,
}

#[derive(Serialize)]
struct BehaviorOutput {
    bounce_flag: bool,
    bounce_threshold: f64,
    #[serde(flatten)]
    report: reclens_core::behavior::BehaviorReport,
}

fn render_metrics_output(out: &MetricsOutput) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<18} {:>10} {:>12} {:>10}",
        "metric", "mean", "std.dev", "n"
    );
    for m in &out.metrics {
        let _ = writeln!(
            s,
            "{:<18} {:>10} {:>12} {:>10}",
            m.kind.label(),
            fmt_sig(m.rate, 4),
            fmt_sig(m.std_dev(), 4),
            m.trials
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "daily series (rate by date)");
    if let Some(first) = out.daily.first() {
        let mut header = format!("{:<12}", "date");
        for series in &out.daily {
            let _ = write!(header, " {:>16}", series.kind.label());
        }
        let _ = writeln!(s, "{header}");
        for i in 0..first.days.len() {
            let mut row = format!("{:<12}", first.days[i].date.to_string());
            for series in &out.daily {
                let _ = write!(row, " {:>16}", fmt_sig(series.days[i].value.rate, 4));
            }
            let _ = writeln!(s, "{row}");
        }
    }
    s
}

/// "A,B" pairs for ttest; empty input falls back to the default pairs.
fn parse_pairs(raw: &[String]) -> Result<Vec<(MetricKind, MetricKind)>, CliError> {
    if raw.is_empty() {
        return Ok(reclens_core::report::DEFAULT_TTEST_PAIRS.to_vec());
    }
    parse_extra_pairs(raw)
}

fn parse_extra_pairs(raw: &[String]) -> Result<Vec<(MetricKind, MetricKind)>, CliError> {
    raw.iter()
        .map(|s| {
            let (a, b) = s
                .split_once(',')
                .ok_or_else(|| usage(format!("--pair wants \"A,B\", got {s:?}")))?;
            Ok((parse_metric(a)?, parse_metric(b)?))
        })
        .collect()
}

fn parse_metric(name: &str) -> Result<MetricKind, CliError> {
    let key: String = name
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase();
    match key.as_str() {
        "ctr" => Ok(MetricKind::Ctr),
        "ctrnorepeat" => Ok(MetricKind::CtrNoRepeat),
        "atctr" => Ok(MetricKind::AtcTr),
        "atctrnorepeat" => Ok(MetricKind::AtcTrNoRepeat),
        "btr" => Ok(MetricKind::Btr),
        "clickandbuy" | "candb" | "clickbuy" => Ok(MetricKind::ClickAndBuy),
        _ => Err(usage(format!(
            "unknown metric {name:?} (CTR, CTR-NoRepeat, ATC-TR, ATC-TR-NoRepeat, BTR, ClickAndBuy)"
        ))),
    }
}

fn load_input(path: &str) -> Result<EventLog, CliError> {
    if path == "-" {
        let stdin = io::stdin();
        read_log(stdin.lock(), "stdin").map_err(data)
    } else {
        let file = File::open(path).map_err(|e| CliError::Data(format!("{path}: {e}")))?;
        read_log(BufReader::new(file), path).map_err(data)
    }
}

fn write_output(path: &str, text: &str) -> Result<(), CliError> {
    if path == "-" {
        io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Data(e.to_string()))
    } else {
        std::fs::write(path, text).map_err(|e| CliError::Data(format!("{path}: {e}")))
    }
}

/// Serializes as canonical JSON or renders as text, per --format.
fn emit<T: Serialize>(
    io_args: &IoArgs,
    default_format: &str,
    value: &T,
    table: impl Fn(&T) -> String,
) -> Result<(), CliError> {
    let json = || {
        let mut s = serde_json::to_string_pretty(value).expect("output serializes");
        s.push('\n');
        s
    };
    let text = match io_args.format_or(default_format).as_str() {
        "json" => json(),
        "table" => table(value),
        _ => format!("{}\n{}", table(value), json()),
    };
    write_output(&io_args.output, &text)
}

/// Durations like "90s", "5m", "24h", "1d", "1h30m", or bare seconds.
fn parse_duration(s: &str) -> Result<TimeDelta, CliError> {
    let s = s.trim();
    if s.is_empty() {
        return Err(usage("empty duration"));
    }
    if let Ok(secs) = s.parse::<i64>() {
        return Ok(TimeDelta::seconds(secs));
    }
    let mut total: i64 = 0;
    let mut digits = String::new();
    for c in s.chars() {
        if c.is_ascii_digit() {
            digits.push(c);
        } else {
            let n: i64 = digits
                .parse()
                .map_err(|_| usage(format!("bad duration {s:?}")))?;
            digits.clear();
            let unit = match c {
                's' => 1,
                'm' => 60,
                'h' => 3600,
                'd' => 86_400,
                _ => return Err(usage(format!("bad duration unit {c:?} in {s:?}"))),
            };
            total += n * unit;
        }
    }
    if !digits.is_empty() {
        return Err(usage(format!("trailing digits without unit in {s:?}")));
    }
    Ok(TimeDelta::seconds(total))
}

/// A duration with an optional leading sign, for timezone offsets.
fn parse_signed_duration(s: &str) -> Result<TimeDelta, CliError> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix('-') {
        Ok(-parse_duration(rest)?)
    } else if let Some(rest) = s.strip_prefix('+') {
        parse_duration(rest)
    } else {
        parse_duration(s)
    }
}
