//! Core event data types, validation, and bit-exact text file I/O.
//!
//! File format (UTF-8, LF line endings, trailing newline required):
//!
//! ```text
//! <width> <height>
//! t,x,y,p
//! t,x,y,p,label
//! ```
//!
//! with `t` in decimal microseconds, `p` either `1` or `-1`, and the label
//! column (all lines or none) one of `OA`, `OO`, `AA`, `N`.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One asynchronous brightness-change sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    /// Timestamp in microseconds.
    pub t: u64,
    /// Column index, `0 <= x < width`.
    pub x: u32,
    /// Row index, `0 <= y < height`.
    pub y: u32,
    /// Polarity, exactly `+1` or `-1`.
    pub p: i8,
}

impl Event {
    pub fn new(t: u64, x: u32, y: u32, p: i8) -> Self {
        Self { t, x, y, p }
    }
}

/// Provenance of an event in a simulated stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventLabel {
    /// Occluder/scene boundary crossing: carries target light information.
    SignalOa,
    /// Occluder texture change.
    NoiseOo,
    /// Scene (target or background) texture change.
    NoiseAa,
    /// Sensor noise.
    NoisePhysical,
}

impl EventLabel {
    /// Two-letter file code.
    pub fn code(self) -> &'static str {
        match self {
            EventLabel::SignalOa => "OA",
            EventLabel::NoiseOo => "OO",
            EventLabel::NoiseAa => "AA",
            EventLabel::NoisePhysical => "N",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "OA" => Some(EventLabel::SignalOa),
            "OO" => Some(EventLabel::NoiseOo),
            "AA" => Some(EventLabel::NoiseAa),
            "N" => Some(EventLabel::NoisePhysical),
            _ => None,
        }
    }
}

/// Rule breached by a stream [`Violation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// Polarity must be exactly +1 or -1.
    Polarity,
    /// Coordinates must lie within the declared sensor bounds.
    Bounds,
    /// Timestamps must be non-decreasing.
    Ordering,
    /// Labels, when present, must parallel the event sequence.
    LabelLength,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Rule::Polarity => "polarity",
            Rule::Bounds => "bounds",
            Rule::Ordering => "ordering",
            Rule::LabelLength => "label-length",
        };
        f.write_str(name)
    }
}

/// One invariant violation found by [`validate_parts`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Offending event index; `None` for stream-level violations.
    pub index: Option<usize>,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "event {}: {} rule: {}", i, self.rule, self.detail),
            None => write!(f, "{} rule: {}", self.rule, self.detail),
        }
    }
}

/// A validated, time-sorted sequence of events on a fixed sensor.
///
/// Immutable after construction; safe to share read-only across workers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    width: u32,
    height: u32,
    events: Vec<Event>,
    labels: Option<Vec<EventLabel>>,
}

impl EventStream {
    /// Build a stream, checking every invariant. Violations are reported,
    /// never repaired.
    pub fn new(
        width: u32,
        height: u32,
        events: Vec<Event>,
        labels: Option<Vec<EventLabel>>,
    ) -> Result<Self> {
        // An empty label list carries no information; normalize so the text
        // format round-trips field-for-field.
        let labels = labels.filter(|l| !l.is_empty() || !events.is_empty());
        let violations = validate_parts(width, height, &events, labels.as_deref());
        if violations.is_empty() {
            Ok(Self { width, height, events, labels })
        } else {
            let msg = violations
                .iter()
                .map(Violation::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::Validation(msg))
        }
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self { width, height, events: Vec::new(), labels: None }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn labels(&self) -> Option<&[EventLabel]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Iterate events together with their labels, if labeled.
    pub fn iter_labeled(&self) -> impl Iterator<Item = (Event, Option<EventLabel>)> + '_ {
        self.events
            .iter()
            .enumerate()
            .map(move |(i, &e)| (e, self.labels.as_ref().map(|l| l[i])))
    }
}

/// Check all stream invariants over raw parts; empty iff everything holds.
pub fn validate_parts(
    width: u32,
    height: u32,
    events: &[Event],
    labels: Option<&[EventLabel]>,
) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut prev_t: Option<u64> = None;
    for (i, e) in events.iter().enumerate() {
        if e.p != 1 && e.p != -1 {
            violations.push(Violation {
                index: Some(i),
                rule: Rule::Polarity,
                detail: format!("p = {} (must be +1 or -1)", e.p),
            });
        }
        if e.x >= width || e.y >= height {
            violations.push(Violation {
                index: Some(i),
                rule: Rule::Bounds,
                detail: format!("({}, {}) outside {}x{}", e.x, e.y, width, height),
            });
        }
        if let Some(p) = prev_t {
            if e.t < p {
                violations.push(Violation {
                    index: Some(i),
                    rule: Rule::Ordering,
                    detail: format!("t = {} after t = {}", e.t, p),
                });
            }
        }
        prev_t = Some(e.t);
    }
    if let Some(l) = labels {
        if l.len() != events.len() {
            violations.push(Violation {
                index: None,
                rule: Rule::LabelLength,
                detail: format!("{} labels for {} events", l.len(), events.len()),
            });
        }
    }
    violations
}

/// Re-check a constructed stream; a stream built through [`EventStream::new`]
/// always yields an empty list.
pub fn validate_stream(stream: &EventStream) -> Vec<Violation> {
    validate_parts(stream.width, stream.height, &stream.events, stream.labels())
}

/// Parse an event file. Sortedness and bounds errors name the offending line.
pub fn load_events(path: impl AsRef<Path>) -> Result<EventStream> {
    let text = fs::read_to_string(path.as_ref())?;
    parse_events(&text)
}

/// Parse event-file text; see the module docs for the format.
pub fn parse_events(text: &str) -> Result<EventStream> {
    if text.is_empty() {
        return Err(Error::Format("empty file".into()));
    }
    let Some(body) = text.strip_suffix('\n') else {
        return Err(Error::Format("missing trailing newline".into()));
    };
    let mut lines = body.split('\n');
    let header = lines.next().unwrap_or("");
    let (width, height) = parse_header(header)?;

    let mut events = Vec::new();
    let mut labels: Option<Vec<EventLabel>> = None;
    let mut prev_t: Option<u64> = None;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2; // header is line 1
        let (event, label) = parse_body_line(line, line_no)?;
        match (&mut labels, label, events.is_empty()) {
            (None, None, _) => {}
            (None, Some(l), true) => labels = Some(vec![l]),
            (None, Some(_), false) => {
                return Err(Error::Format(format!(
                    "line {}: label column appears after unlabeled lines",
                    line_no
                )));
            }
            (Some(ls), Some(l), _) => ls.push(l),
            (Some(_), None, _) => {
                return Err(Error::Format(format!(
                    "line {}: missing label column on a labeled stream",
                    line_no
                )));
            }
        }
        if event.x >= width || event.y >= height {
            return Err(Error::Validation(format!(
                "line {}: coordinate ({}, {}) outside {}x{}",
                line_no, event.x, event.y, width, height
            )));
        }
        if event.p != 1 && event.p != -1 {
            return Err(Error::Validation(format!(
                "line {}: polarity {} (must be +1 or -1)",
                line_no, event.p
            )));
        }
        if let Some(p) = prev_t {
            if event.t < p {
                return Err(Error::Validation(format!(
                    "line {}: timestamp {} decreases below {}",
                    line_no, event.t, p
                )));
            }
        }
        prev_t = Some(event.t);
        events.push(event);
    }
    EventStream::new(width, height, events, labels)
}

fn parse_header(header: &str) -> Result<(u32, u32)> {
    let mut parts = header.split(' ');
    let w = parts.next().and_then(|s| s.parse::<u32>().ok());
    let h = parts.next().and_then(|s| s.parse::<u32>().ok());
    match (w, h, parts.next()) {
        (Some(w), Some(h), None) if w > 0 && h > 0 => Ok((w, h)),
        _ => Err(Error::Format(format!(
            "line 1: header must be \"<width> <height>\", got {:?}",
            header
        ))),
    }
}

fn parse_body_line(line: &str, line_no: usize) -> Result<(Event, Option<EventLabel>)> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 4 && fields.len() != 5 {
        return Err(Error::Format(format!(
            "line {}: expected 4 or 5 comma-separated fields, got {}",
            line_no,
            fields.len()
        )));
    }
    let t = fields[0]
        .parse::<u64>()
        .map_err(|_| Error::Format(format!("line {}: bad timestamp {:?}", line_no, fields[0])))?;
    let x = fields[1]
        .parse::<u32>()
        .map_err(|_| Error::Format(format!("line {}: bad x {:?}", line_no, fields[1])))?;
    let y = fields[2]
        .parse::<u32>()
        .map_err(|_| Error::Format(format!("line {}: bad y {:?}", line_no, fields[2])))?;
    let p = fields[3]
        .parse::<i8>()
        .map_err(|_| Error::Format(format!("line {}: bad polarity {:?}", line_no, fields[3])))?;
    let label = if fields.len() == 5 {
        Some(EventLabel::from_code(fields[4]).ok_or_else(|| {
            Error::Format(format!("line {}: unknown label {:?}", line_no, fields[4]))
        })?)
    } else {
        None
    };
    Ok((Event::new(t, x, y, p), label))
}

/// Serialize a stream to its text form; `load` of the result round-trips
/// field-for-field.
pub fn format_events(stream: &EventStream) -> String {
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", stream.width(), stream.height()));
    for (e, label) in stream.iter_labeled() {
        match label {
            Some(l) => out.push_str(&format!("{},{},{},{},{}\n", e.t, e.x, e.y, e.p, l.code())),
            None => out.push_str(&format!("{},{},{},{}\n", e.t, e.x, e.y, e.p)),
        }
    }
    out
}

/// Write a stream to disk in the event text format.
pub fn save_events(stream: &EventStream, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), format_events(stream))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_record_parse() {
        let s = parse_events("346 260\n100,5,7,1\n").unwrap();
        assert_eq!(s.width(), 346);
        assert_eq!(s.height(), 260);
        assert_eq!(s.events(), &[Event::new(100, 5, 7, 1)]);
        assert!(s.labels().is_none());
    }

    #[test]
    fn empty_body() {
        let s = parse_events("346 260\n").unwrap();
        assert!(s.is_empty());
        assert_eq!(s.width(), 346);
        assert_eq!(s.height(), 260);
    }

    #[test]
    fn non_monotone_names_line() {
        let err = parse_events("10 10\n200,0,0,1\n100,0,0,1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "got: {msg}");
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn out_of_bounds_names_line() {
        let err = parse_events("10 10\n5,10,0,1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn malformed_header() {
        for h in ["", "10", "10  10", "10 10 10", "a b"] {
            let err = parse_events(&format!("{h}\n")).unwrap_err();
            assert!(matches!(err, Error::Format(_)), "header {h:?}");
        }
    }

    #[test]
    fn missing_trailing_newline_rejected() {
        assert!(matches!(parse_events("10 10\n1,0,0,1"), Err(Error::Format(_))));
    }

    #[test]
    fn labels_parsed() {
        let s = parse_events("10 10\n1,0,0,1,OA\n2,1,1,-1,N\n").unwrap();
        assert_eq!(
            s.labels().unwrap(),
            &[EventLabel::SignalOa, EventLabel::NoisePhysical]
        );
    }

    #[test]
    fn mixed_label_columns_rejected() {
        assert!(parse_events("10 10\n1,0,0,1,OA\n2,1,1,-1\n").is_err());
        assert!(parse_events("10 10\n1,0,0,1\n2,1,1,-1,OA\n").is_err());
    }

    #[test]
    fn save_empty_stream_is_header_only() {
        assert_eq!(format_events(&EventStream::empty(346, 260)), "346 260\n");
    }

    #[test]
    fn save_orders_and_labels() {
        let s = EventStream::new(
            10,
            10,
            vec![Event::new(1, 2, 3, 1), Event::new(2, 0, 0, -1), Event::new(2, 1, 1, 1)],
            Some(vec![EventLabel::SignalOa, EventLabel::NoiseOo, EventLabel::NoiseAa]),
        )
        .unwrap();
        assert_eq!(format_events(&s), "10 10\n1,2,3,1,OA\n2,0,0,-1,OO\n2,1,1,1,AA\n");
    }

    #[test]
    fn violation_polarity() {
        let v = validate_parts(10, 10, &[Event::new(0, 0, 0, 0)], None);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::Polarity);
        assert_eq!(v[0].index, Some(0));
    }

    #[test]
    fn violation_bounds_at_width() {
        let v = validate_parts(10, 10, &[Event::new(0, 10, 0, 1)], None);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::Bounds);
    }

    #[test]
    fn sorted_in_bounds_stream_is_clean() {
        let events = vec![Event::new(0, 0, 0, 1), Event::new(0, 1, 1, -1), Event::new(5, 2, 2, 1)];
        assert!(validate_parts(10, 10, &events, None).is_empty());
        let s = EventStream::new(10, 10, events, None).unwrap();
        assert!(validate_stream(&s).is_empty());
    }

    fn arb_stream() -> impl Strategy<Value = EventStream> {
        (
            2u32..64,
            2u32..64,
            prop::collection::vec((0u64..10_000, 0u32..64, 0u32..64, prop::bool::ANY), 0..64),
            prop::bool::ANY,
        )
            .prop_map(|(w, h, raw, labeled)| {
                let mut events: Vec<Event> = raw
                    .into_iter()
                    .map(|(t, x, y, p)| Event::new(t, x % w, y % h, if p { 1 } else { -1 }))
                    .collect();
                events.sort_by_key(|e| e.t);
                let labels = labeled.then(|| {
                    events
                        .iter()
                        .map(|e| match (e.x + e.y) % 4 {
                            0 => EventLabel::SignalOa,
                            1 => EventLabel::NoiseOo,
                            2 => EventLabel::NoiseAa,
                            _ => EventLabel::NoisePhysical,
                        })
                        .collect()
                });
                EventStream::new(w, h, events, labels).unwrap()
            })
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(s in arb_stream()) {
            let parsed = parse_events(&format_events(&s)).unwrap();
            prop_assert_eq!(parsed, s);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.evt");
        let s = EventStream::new(
            4,
            4,
            vec![Event::new(0, 0, 0, 1), Event::new(7, 3, 3, -1)],
            None,
        )
        .unwrap();
        save_events(&s, &path).unwrap();
        assert_eq!(load_events(&path).unwrap(), s);
    }
}
