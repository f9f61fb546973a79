//! Event data model, the canonical JSON-lines log format, parsing,
//! validation, and canonical ordering.
//!
//! A log holds two record families: a `Hit` (one display of a recommendation
//! widget, carrying the product list that was shown) and an `Action`
//! (a click, add-to-cart, or buy on a single product). Records are one JSON
//! object per line; `#`-prefixed lines are comments.

use chrono::{DateTime, NaiveDate, SecondsFormat, TimeDelta, Utc};
use compact_str::CompactString;
use serde::{de::Deserializer, Deserialize, Serialize, Serializer};
use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::ops::Add;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate hit_id {0:?}")]
    DuplicateHitId(String),
}

/// UTC instant, second precision or finer. Totally ordered; serialized as
/// RFC 3339 with a `Z` suffix and round-trips losslessly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(DateTime<Utc>);

impl Timestamp {
    pub fn new(instant: DateTime<Utc>) -> Self {
        Timestamp(instant)
    }

    /// Parses an RFC 3339 string. The offset (`Z` or `+hh:mm`) is required;
    /// naive timestamps are rejected so day bucketing stays unambiguous.
    pub fn parse(s: &str) -> Result<Self, String> {
        DateTime::parse_from_rfc3339(s)
            .map(|dt| Timestamp(dt.with_timezone(&Utc)))
            .map_err(|e| format!("bad timestamp {s:?}: {e}"))
    }

    pub fn to_rfc3339(&self) -> String {
        self.0.to_rfc3339_opts(SecondsFormat::AutoSi, true)
    }

    pub fn signed_duration_since(&self, earlier: Timestamp) -> TimeDelta {
        self.0.signed_duration_since(earlier.0)
    }

    /// Calendar date after shifting by a fixed UTC offset.
    pub fn date_with_offset(&self, tz_offset: TimeDelta) -> NaiveDate {
        (self.0 + tz_offset).date_naive()
    }

    pub fn instant(&self) -> DateTime<Utc> {
        self.0
    }
}

impl Add<TimeDelta> for Timestamp {
    type Output = Timestamp;
    fn add(self, rhs: TimeDelta) -> Timestamp {
        Timestamp(self.0 + rhs)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_rfc3339())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct TsVisitor;
        impl serde::de::Visitor<'_> for TsVisitor {
            type Value = Timestamp;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an RFC 3339 timestamp with offset")
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<Timestamp, E> {
                Timestamp::parse(v).map_err(E::custom)
            }
        }
        deserializer.deserialize_str(TsVisitor)
    }
}

/// Opaque customer identifier; non-empty after trimming. Stored inline up
/// to 24 bytes, so typical ids never touch the heap.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CustomerId(CompactString);

/// Opaque product identifier; non-empty after trimming.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProductId(CompactString);

macro_rules! opaque_id {
    ($ty:ident, $what:literal) => {
        impl $ty {
            pub fn new(id: impl Into<CompactString>) -> Result<Self, String> {
                let id = id.into();
                if id.trim().is_empty() {
                    Err(format!("empty {}", $what))
                } else {
                    Ok($ty(id))
                }
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

opaque_id!(CustomerId, "customer id");
opaque_id!(ProductId, "product id");

/// One display of a recommendation widget: an ordered, duplicate-free list
/// of products shown to a customer at an instant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hit {
    pub hit_id: CompactString,
    pub customer: CustomerId,
    pub widget_id: CompactString,
    pub ts: Timestamp,
    pub products: Vec<ProductId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    AddToCart,
    Buy,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionKind::Click => "click",
            ActionKind::AddToCart => "atc",
            ActionKind::Buy => "buy",
        })
    }
}

/// A customer interaction with one product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    pub kind: ActionKind,
    pub customer: CustomerId,
    pub product: ProductId,
    pub ts: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Hit(Hit),
    Action(Action),
}

impl Event {
    pub fn ts(&self) -> Timestamp {
        match self {
            Event::Hit(h) => h.ts,
            Event::Action(a) => a.ts,
        }
    }
}

/// A normalized event log: hits and actions each sorted by
/// `(ts, original input order)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventLog {
    pub hits: Vec<Hit>,
    pub actions: Vec<Action>,
    pub source_name: String,
}

impl EventLog {
    /// Builds a normalized log from unordered parts. The stable sort keeps
    /// input order among equal timestamps, which makes downstream
    /// tie-breaking deterministic.
    pub fn from_parts(
        mut hits: Vec<Hit>,
        mut actions: Vec<Action>,
        source_name: impl Into<String>,
    ) -> Self {
        hits.sort_by_key(|h| h.ts);
        actions.sort_by_key(|a| a.ts);
        EventLog {
            hits,
            actions,
            source_name: source_name.into(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty() && self.actions.is_empty()
    }

    /// All events merged into one stream ordered by `(ts, hit-before-action
    /// at equal instants, input order)`; used by the canonical writer.
    pub fn to_jsonl(&self) -> String {
        let mut records: Vec<(Timestamp, usize, String)> = Vec::new();
        for (i, h) in self.hits.iter().enumerate() {
            records.push((h.ts, i, serialize_event_line(&Event::Hit(h.clone()))));
        }
        let base = self.hits.len();
        for (i, a) in self.actions.iter().enumerate() {
            records.push((
                a.ts,
                base + i,
                serialize_event_line(&Event::Action(a.clone())),
            ));
        }
        records.sort_by_key(|(ts, i, _)| (*ts, *i));
        let mut out = String::new();
        for (_, _, line) in records {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

/// Wire schema. Field names are the canonical format and must not change.
#[derive(Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum RawRecord<'a> {
    Hit {
        hit_id: &'a str,
        customer: &'a str,
        widget: &'a str,
        ts: String,
        products: Vec<&'a str>,
    },
    Click {
        customer: &'a str,
        product: &'a str,
        ts: String,
    },
    Atc {
        customer: &'a str,
        product: &'a str,
        ts: String,
    },
    Buy {
        customer: &'a str,
        product: &'a str,
        ts: String,
    },
}

/// Single-pass record reader. A derived internally-tagged enum would buffer
/// every object into a generic value tree, which dominates load time on
/// million-line logs; this visitor walks the map once, in any field order,
/// with allocation-free keys and type tags, skipping unknown fields.
#[derive(Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawKind {
    Hit,
    Click,
    Atc,
    Buy,
}

enum RawField {
    Kind,
    HitId,
    Customer,
    Widget,
    Ts,
    Product,
    Products,
    Other,
}

impl<'de> Deserialize<'de> for RawField {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct KeyVisitor;
        impl serde::de::Visitor<'_> for KeyVisitor {
            type Value = RawField;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a field name")
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<RawField, E> {
                Ok(match v {
                    "type" => RawField::Kind,
                    "hit_id" => RawField::HitId,
                    "customer" => RawField::Customer,
                    "widget" => RawField::Widget,
                    "ts" => RawField::Ts,
                    "product" => RawField::Product,
                    "products" => RawField::Products,
                    _ => RawField::Other,
                })
            }
        }
        deserializer.deserialize_identifier(KeyVisitor)
    }
}

#[derive(Default)]
struct RawFields {
    kind: Option<RawKind>,
    hit_id: Option<CompactString>,
    customer: Option<CompactString>,
    widget: Option<CompactString>,
    ts: Option<Timestamp>,
    product: Option<CompactString>,
    products: Option<Vec<CompactString>>,
}

impl<'de> Deserialize<'de> for RawFields {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct FieldsVisitor;
        impl<'de> serde::de::Visitor<'de> for FieldsVisitor {
            type Value = RawFields;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an event record object")
            }

            fn visit_map<A: serde::de::MapAccess<'de>>(
                self,
                mut map: A,
            ) -> Result<RawFields, A::Error> {
                let mut out = RawFields::default();
                while let Some(key) = map.next_key::<RawField>()? {
                    match key {
                        RawField::Kind => out.kind = Some(map.next_value()?),
                        RawField::HitId => out.hit_id = Some(map.next_value()?),
                        RawField::Customer => out.customer = Some(map.next_value()?),
                        RawField::Widget => out.widget = Some(map.next_value()?),
                        RawField::Ts => out.ts = Some(map.next_value()?),
                        RawField::Product => out.product = Some(map.next_value()?),
                        RawField::Products => out.products = Some(map.next_value()?),
                        RawField::Other => {
                            map.next_value::<serde::de::IgnoredAny>()?;
                        }
                    }
                }
                Ok(out)
            }
        }
        deserializer.deserialize_map(FieldsVisitor)
    }
}

/// Decodes one canonical JSONL record. Unknown fields are ignored.
pub fn parse_event_line(line: &str, line_no: usize) -> Result<Event, EventError> {
    let err = |reason: String| EventError::MalformedRecord {
        line: line_no,
        reason,
    };
    let missing = |field: &str| EventError::MalformedRecord {
        line: line_no,
        reason: format!("missing field `{field}`"),
    };
    let raw: RawFields = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
    let kind = raw.kind.ok_or_else(|| missing("type"))?;
    match kind {
        RawKind::Hit => {
            let hit_id = raw.hit_id.ok_or_else(|| missing("hit_id"))?;
            if hit_id.trim().is_empty() {
                return Err(err("empty hit_id".into()));
            }
            let products = raw.products.ok_or_else(|| missing("products"))?;
            if products.is_empty() {
                return Err(err("empty products".into()));
            }
            let products = products
                .into_iter()
                .map(ProductId::new)
                .collect::<Result<Vec<_>, _>>()
                .map_err(err)?;
            let mut seen = HashSet::new();
            for p in &products {
                if !seen.insert(p.as_str()) {
                    return Err(err(format!("duplicate product {p} in hit")));
                }
            }
            Ok(Event::Hit(Hit {
                hit_id,
                customer: CustomerId::new(raw.customer.ok_or_else(|| missing("customer"))?)
                    .map_err(err)?,
                widget_id: raw.widget.ok_or_else(|| missing("widget"))?,
                ts: raw.ts.ok_or_else(|| missing("ts"))?,
                products,
            }))
        }
        RawKind::Click | RawKind::Atc | RawKind::Buy => {
            let action_kind = match kind {
                RawKind::Click => ActionKind::Click,
                RawKind::Atc => ActionKind::AddToCart,
                _ => ActionKind::Buy,
            };
            Ok(Event::Action(Action {
                kind: action_kind,
                customer: CustomerId::new(raw.customer.ok_or_else(|| missing("customer"))?)
                    .map_err(err)?,
                product: ProductId::new(raw.product.ok_or_else(|| missing("product"))?)
                    .map_err(err)?,
                ts: raw.ts.ok_or_else(|| missing("ts"))?,
            }))
        }
    }
}

/// Encodes one event as a canonical JSONL record.
pub fn serialize_event_line(event: &Event) -> String {
    let raw = match event {
        Event::Hit(h) => RawRecord::Hit {
            hit_id: &h.hit_id,
            customer: h.customer.as_str(),
            widget: &h.widget_id,
            ts: h.ts.to_rfc3339(),
            products: h.products.iter().map(|p| p.as_str()).collect(),
        },
        Event::Action(a) => {
            let customer = a.customer.as_str();
            let product = a.product.as_str();
            let ts = a.ts.to_rfc3339();
            match a.kind {
                ActionKind::Click => RawRecord::Click {
                    customer,
                    product,
                    ts,
                },
                ActionKind::AddToCart => RawRecord::Atc {
                    customer,
                    product,
                    ts,
                },
                ActionKind::Buy => RawRecord::Buy {
                    customer,
                    product,
                    ts,
                },
            }
        }
    };
    serde_json::to_string(&raw).expect("record serialization cannot fail")
}

/// Reads a normalized log from any buffered reader. Line numbers are
/// physical (comments and blank lines count).
pub fn read_log<R: BufRead>(mut reader: R, source_name: &str) -> Result<EventLog, EventError> {
    let mut hits = Vec::new();
    let mut actions = Vec::new();
    let mut buf = String::new();
    let mut line_no = 0usize;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(|e| EventError::Io {
            path: source_name.to_owned(),
            source: e,
        })?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let trimmed = buf.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match parse_event_line(trimmed, line_no)? {
            Event::Hit(h) => hits.push(h),
            Event::Action(a) => actions.push(a),
        }
    }
    let mut ids: Vec<&str> = hits.iter().map(|h| h.hit_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(pair) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(EventError::DuplicateHitId(pair[0].to_owned()));
    }
    drop(ids);
    Ok(EventLog::from_parts(hits, actions, source_name))
}

/// Loads and normalizes a log file; rejects the first malformed line or
/// duplicate hit id.
pub fn load_log(path: impl AsRef<Path>) -> Result<EventLog, EventError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| EventError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_log(BufReader::new(file), &path.display().to_string())
}

/// Counts, population, time span, and advisory warnings for a log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub hits: u64,
    pub clicks: u64,
    pub atcs: u64,
    pub buys: u64,
    pub customers: u64,
    pub first_ts: Option<Timestamp>,
    pub last_ts: Option<Timestamp>,
    pub warnings: Vec<String>,
}

/// Reports per-kind counts, distinct customers, time span, and warnings.
/// Actions before the first hit and actions on products never shown are
/// legal but flagged.
pub fn validate_log(log: &EventLog) -> ValidationReport {
    let mut clicks = 0u64;
    let mut atcs = 0u64;
    let mut buys = 0u64;
    let mut customers: HashSet<&str> = HashSet::new();
    let mut shown: HashSet<&str> = HashSet::new();
    for h in &log.hits {
        customers.insert(h.customer.as_str());
        for p in &h.products {
            shown.insert(p.as_str());
        }
    }
    let first_hit_ts = log.hits.first().map(|h| h.ts);
    let mut before_first_hit = 0u64;
    let mut unattributable = 0u64;
    for a in &log.actions {
        customers.insert(a.customer.as_str());
        match a.kind {
            ActionKind::Click => clicks += 1,
            ActionKind::AddToCart => atcs += 1,
            ActionKind::Buy => buys += 1,
        }
        if first_hit_ts.is_none_or(|t| a.ts < t) {
            before_first_hit += 1;
        }
        if !shown.contains(a.product.as_str()) {
            unattributable += 1;
        }
    }

    let mut warnings = Vec::new();
    if before_first_hit > 0 {
        warnings.push(format!(
            "{before_first_hit} action(s) precede the first hit"
        ));
    }
    if unattributable > 0 {
        warnings.push(format!(
            "{unattributable} action(s) on unattributable products never shown in any hit"
        ));
    }

    let first_ts = log
        .hits
        .first()
        .map(|h| h.ts)
        .into_iter()
        .chain(log.actions.first().map(|a| a.ts))
        .min();
    let last_ts = log
        .hits
        .last()
        .map(|h| h.ts)
        .into_iter()
        .chain(log.actions.last().map(|a| a.ts))
        .max();

    ValidationReport {
        hits: log.hits.len() as u64,
        clicks,
        atcs,
        buys,
        customers: customers.len() as u64,
        first_ts,
        last_ts,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn ts(s: &str) -> Timestamp {
        Timestamp::parse(s).unwrap()
    }

    #[test]
    fn parses_hit_record() {
        let line = r#"{"type":"hit","hit_id":"h1","customer":"c1","widget":"w1","ts":"2023-01-01T10:00:00Z","products":["p1","p2"]}"#;
        match parse_event_line(line, 1).unwrap() {
            Event::Hit(h) => {
                assert_eq!(h.hit_id, "h1");
                assert_eq!(h.customer.as_str(), "c1");
                assert_eq!(h.widget_id, "w1");
                assert_eq!(h.ts, ts("2023-01-01T10:00:00Z"));
                assert_eq!(h.products.len(), 2);
            }
            other => panic!("expected hit, got {other:?}"),
        }
    }

    #[test]
    fn parses_click_record() {
        let line = r#"{"type":"click","customer":"c1","product":"p1","ts":"2023-01-01T10:03:00Z"}"#;
        match parse_event_line(line, 1).unwrap() {
            Event::Action(a) => {
                assert_eq!(a.kind, ActionKind::Click);
                assert_eq!(a.customer.as_str(), "c1");
                assert_eq!(a.product.as_str(), "p1");
                assert_eq!(a.ts, ts("2023-01-01T10:03:00Z"));
            }
            other => panic!("expected action, got {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_products() {
        let line = r#"{"type":"hit","hit_id":"h2","customer":"c1","widget":"w1","ts":"2023-01-01T10:00:00Z","products":[]}"#;
        match parse_event_line(line, 7) {
            Err(EventError::MalformedRecord { line, reason }) => {
                assert_eq!(line, 7);
                assert!(reason.contains("empty products"), "{reason}");
            }
            other => panic!("expected malformed record, got {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicate_product_in_hit() {
        let line = r#"{"type":"hit","hit_id":"h1","customer":"c1","widget":"w1","ts":"2023-01-01T10:00:00Z","products":["p1","p1"]}"#;
        assert!(matches!(
            parse_event_line(line, 1),
            Err(EventError::MalformedRecord { .. })
        ));
    }

    #[test]
    fn rejects_naive_timestamp() {
        let line = r#"{"type":"click","customer":"c1","product":"p1","ts":"2023-01-01T10:03:00"}"#;
        match parse_event_line(line, 3) {
            Err(EventError::MalformedRecord { reason, .. }) => {
                assert!(reason.contains("bad timestamp"), "{reason}");
            }
            other => panic!("expected malformed record, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_type_tag() {
        let line = r#"{"type":"view","customer":"c1","product":"p1","ts":"2023-01-01T10:03:00Z"}"#;
        assert!(matches!(
            parse_event_line(line, 1),
            Err(EventError::MalformedRecord { .. })
        ));
    }

    #[test]
    fn ignores_unknown_fields() {
        let line = r#"{"type":"buy","customer":"c1","product":"p1","ts":"2023-01-01T10:03:00Z","price":10.5}"#;
        assert!(parse_event_line(line, 1).is_ok());
    }

    #[test]
    fn offset_timestamps_normalize_to_utc() {
        let line =
            r#"{"type":"click","customer":"c1","product":"p1","ts":"2023-01-01T12:00:00+02:00"}"#;
        match parse_event_line(line, 1).unwrap() {
            Event::Action(a) => assert_eq!(a.ts, ts("2023-01-01T10:00:00Z")),
            _ => unreachable!(),
        }
    }

    #[test]
    fn read_log_sorts_and_counts() {
        let data = "\
# comment line
{\"type\":\"click\",\"customer\":\"c1\",\"product\":\"p1\",\"ts\":\"2023-01-01T10:03:00Z\"}

{\"type\":\"hit\",\"hit_id\":\"h2\",\"customer\":\"c1\",\"widget\":\"w1\",\"ts\":\"2023-01-01T11:00:00Z\",\"products\":[\"p1\"]}
{\"type\":\"hit\",\"hit_id\":\"h1\",\"customer\":\"c1\",\"widget\":\"w1\",\"ts\":\"2023-01-01T10:00:00Z\",\"products\":[\"p1\"]}
";
        let log = read_log(Cursor::new(data), "test").unwrap();
        assert_eq!(log.hits.len(), 2);
        assert_eq!(log.actions.len(), 1);
        assert_eq!(log.hits[0].hit_id, "h1");
        assert_eq!(log.hits[1].hit_id, "h2");
    }

    #[test]
    fn read_log_empty_file() {
        let log = read_log(Cursor::new(""), "empty").unwrap();
        assert!(log.is_empty());
    }

    #[test]
    fn read_log_rejects_duplicate_hit_id() {
        let data = "\
{\"type\":\"hit\",\"hit_id\":\"h1\",\"customer\":\"c1\",\"widget\":\"w1\",\"ts\":\"2023-01-01T10:00:00Z\",\"products\":[\"p1\"]}
{\"type\":\"hit\",\"hit_id\":\"h1\",\"customer\":\"c2\",\"widget\":\"w1\",\"ts\":\"2023-01-01T11:00:00Z\",\"products\":[\"p2\"]}
";
        match read_log(Cursor::new(data), "dup") {
            Err(EventError::DuplicateHitId(id)) => assert_eq!(id, "h1"),
            other => panic!("expected duplicate hit id, got {other:?}"),
        }
    }

    #[test]
    fn read_log_reports_first_bad_line_number() {
        let data = "\
# header
{\"type\":\"click\",\"customer\":\"c1\",\"product\":\"p1\",\"ts\":\"2023-01-01T10:03:00Z\"}
{\"type\":\"click\",\"customer\":\"\",\"product\":\"p1\",\"ts\":\"2023-01-01T10:03:00Z\"}
";
        match read_log(Cursor::new(data), "bad") {
            Err(EventError::MalformedRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed record, got {other:?}"),
        }
    }

    #[test]
    fn equal_timestamps_keep_input_order() {
        let data = "\
{\"type\":\"hit\",\"hit_id\":\"a\",\"customer\":\"c1\",\"widget\":\"w\",\"ts\":\"2023-01-01T10:00:00Z\",\"products\":[\"p1\"]}
{\"type\":\"hit\",\"hit_id\":\"b\",\"customer\":\"c1\",\"widget\":\"w\",\"ts\":\"2023-01-01T10:00:00Z\",\"products\":[\"p1\"]}
";
        let log = read_log(Cursor::new(data), "ties").unwrap();
        assert_eq!(log.hits[0].hit_id, "a");
        assert_eq!(log.hits[1].hit_id, "b");
    }

    #[test]
    fn validate_counts_and_warnings() {
        let data = "\
{\"type\":\"click\",\"customer\":\"c9\",\"product\":\"p9\",\"ts\":\"2023-01-01T09:00:00Z\"}
{\"type\":\"hit\",\"hit_id\":\"h1\",\"customer\":\"c1\",\"widget\":\"w\",\"ts\":\"2023-01-01T10:00:00Z\",\"products\":[\"p1\"]}
{\"type\":\"hit\",\"hit_id\":\"h2\",\"customer\":\"c2\",\"widget\":\"w\",\"ts\":\"2023-01-01T11:00:00Z\",\"products\":[\"p1\",\"p2\"]}
{\"type\":\"click\",\"customer\":\"c1\",\"product\":\"p1\",\"ts\":\"2023-01-01T10:01:00Z\"}
{\"type\":\"buy\",\"customer\":\"c1\",\"product\":\"p7\",\"ts\":\"2023-01-01T12:00:00Z\"}
";
        let log = read_log(Cursor::new(data), "v").unwrap();
        let report = validate_log(&log);
        assert_eq!(report.hits, 2);
        assert_eq!(report.clicks, 2);
        assert_eq!(report.atcs, 0);
        assert_eq!(report.buys, 1);
        assert_eq!(report.customers, 3);
        assert!(report
            .warnings
            .iter()
            .any(|w| w.contains("precede the first hit")));
        assert!(report.warnings.iter().any(|w| w.contains("unattributable")));
    }

    #[test]
    fn validate_no_warnings_on_clean_log() {
        let data = "\
{\"type\":\"hit\",\"hit_id\":\"h1\",\"customer\":\"c1\",\"widget\":\"w\",\"ts\":\"2023-01-01T10:00:00Z\",\"products\":[\"p1\"]}
{\"type\":\"click\",\"customer\":\"c1\",\"product\":\"p1\",\"ts\":\"2023-01-01T10:01:00Z\"}
";
        let log = read_log(Cursor::new(data), "v").unwrap();
        let report = validate_log(&log);
        assert_eq!(report.hits, 1);
        assert_eq!(report.clicks, 1);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn serialize_parse_round_trip() {
        let lines = [
            r#"{"type":"hit","hit_id":"h1","customer":"c 1","widget":"w\"x","ts":"2023-01-01T10:00:00Z","products":["p1","p2"]}"#,
            r#"{"type":"atc","customer":"c1","product":"p1","ts":"2023-06-30T23:59:59Z"}"#,
            r#"{"type":"buy","customer":"c1","product":"p1","ts":"2023-01-01T10:00:00.250Z"}"#,
        ];
        for line in lines {
            let event = parse_event_line(line, 1).unwrap();
            let out = serialize_event_line(&event);
            let again = parse_event_line(&out, 1).unwrap();
            assert_eq!(event, again);
        }
    }
}
