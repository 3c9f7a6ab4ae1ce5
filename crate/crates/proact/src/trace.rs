//! Sensor-trace data model: line-delimited event format, parsing with
//! invariant checks, validation reports, and deterministic replay.

use std::collections::HashSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("empty trace")]
    Empty,
    #[error("malformed line {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid event at line {line}: {reason}")]
    Invalid { line: usize, reason: String },
    #[error("unsorted at line {line}")]
    Unsorted { line: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionState {
    Static,
    Moving,
}

impl std::fmt::Display for MotionState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MotionState::Static => write!(f, "static"),
            MotionState::Moving => write!(f, "moving"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePayload {
    pub frame_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objects: Option<Vec<String>>,
}

/// Either raw acceleration samples or a precomputed motion state,
/// never both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuPayload {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accel: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub motion_state: Option<MotionState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsPayload {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioPayload {
    pub vad: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthToolCall {
    pub name: String,
    #[serde(default)]
    pub args: std::collections::BTreeMap<String, String>,
}

fn default_window_s() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationPayload {
    pub need: bool,
    #[serde(default)]
    pub tools: Vec<GroundTruthToolCall>,
    #[serde(default = "default_window_s")]
    pub window_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Payload {
    Frame(FramePayload),
    Imu(ImuPayload),
    Gps(GpsPayload),
    Audio(AudioPayload),
    Annotation(AnnotationPayload),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Frame(_) => "frame",
            Payload::Imu(_) => "imu",
            Payload::Gps(_) => "gps",
            Payload::Audio(_) => "audio",
            Payload::Annotation(_) => "annotation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: f64,
    #[serde(flatten)]
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
    pub duration_s: f64,
}

impl Trace {
    /// Builds a trace from pre-sorted events; duration defaults to the
    /// last event timestamp.
    pub fn new(events: Vec<TraceEvent>) -> Self {
        let duration_s = events.last().map(|e| e.t).unwrap_or(0.0);
        Trace { events, duration_s }
    }

    pub fn with_duration(mut self, duration_s: f64) -> Self {
        self.duration_s = duration_s.max(self.duration_s);
        self
    }

    /// Yields events exactly once, in timestamp order with file-order
    /// tie-break. Deterministic: the same trace always yields the same
    /// sequence.
    pub fn replay_iter(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter()
    }

    pub fn annotations(&self) -> impl Iterator<Item = (f64, &AnnotationPayload)> {
        self.events.iter().filter_map(|e| match &e.payload {
            Payload::Annotation(a) => Some((e.t, a)),
            _ => None,
        })
    }

    pub fn serialize_to_string(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("trace event serializes"));
            out.push('\n');
        }
        out
    }
}

fn check_event(event: &TraceEvent) -> Result<(), String> {
    if !event.t.is_finite() || event.t < 0.0 {
        return Err(format!("timestamp {} out of range", event.t));
    }
    match &event.payload {
        Payload::Frame(f) => {
            if f.frame_id.is_empty() {
                return Err("empty frame_id".into());
            }
            if f.image_ref.is_none() && f.objects.is_none() {
                return Err("frame needs image_ref or objects".into());
            }
            if let Some(objects) = &f.objects {
                if objects.iter().any(|o| o.is_empty()) {
                    return Err("empty object label".into());
                }
            }
        }
        Payload::Imu(i) => match (&i.accel, &i.motion_state) {
            (Some(_), Some(_)) => return Err("imu has both accel and motion_state".into()),
            (None, None) => return Err("imu has neither accel nor motion_state".into()),
            _ => {}
        },
        Payload::Gps(g) => {
            if !(-90.0..=90.0).contains(&g.lat) {
                return Err(format!("lat {} out of range", g.lat));
            }
            if !(-180.0..=180.0).contains(&g.lon) {
                return Err(format!("lon {} out of range", g.lon));
            }
        }
        Payload::Audio(a) => {
            if a.transcript.is_some() && !a.vad {
                return Err("transcript without voice activity".into());
            }
        }
        Payload::Annotation(a) => {
            if !a.need {
                return Err("annotation with need=false".into());
            }
            if a.window_s <= 0.0 {
                return Err(format!("annotation window_s {} must be > 0", a.window_s));
            }
            if a.tools.iter().any(|t| t.name.is_empty()) {
                return Err("annotation tool with empty name".into());
            }
        }
    }
    Ok(())
}

/// Parses a line-delimited trace stream; events must arrive sorted
/// non-decreasing by `t` (ties keep file order). Blank lines are skipped.
pub fn parse_trace<R: BufRead>(source: R) -> Result<Trace, TraceError> {
    let mut events = Vec::new();
    let mut prev_t = f64::NEG_INFINITY;
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: TraceEvent = serde_json::from_str(&line).map_err(|source| {
            TraceError::Malformed { line: line_no, source }
        })?;
        check_event(&event).map_err(|reason| TraceError::Invalid { line: line_no, reason })?;
        if event.t < prev_t {
            return Err(TraceError::Unsorted { line: line_no });
        }
        prev_t = event.t;
        events.push(event);
    }
    if events.is_empty() {
        return Err(TraceError::Empty);
    }
    Ok(Trace::new(events))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub event_counts: std::collections::BTreeMap<String, usize>,
    pub annotation_count: usize,
    /// Inter-event gaps wider than the configured threshold, as
    /// (from_t, to_t) pairs.
    pub gaps: Vec<(f64, f64)>,
    pub violations: Vec<String>,
}

/// Re-checks every event invariant on an in-memory trace and reports
/// per-modality counts and large timeline gaps. `ok` is true iff there
/// are zero violations.
pub fn validate_trace(trace: &Trace, gap_threshold_s: f64) -> ValidationReport {
    let mut event_counts = std::collections::BTreeMap::new();
    let mut violations = Vec::new();
    let mut gaps = Vec::new();
    let mut seen_frames = HashSet::new();
    let mut prev_t: Option<f64> = None;

    for (idx, event) in trace.events.iter().enumerate() {
        *event_counts.entry(event.payload.kind().to_string()).or_insert(0) += 1;
        if let Err(reason) = check_event(event) {
            violations.push(format!("event {}: {}", idx, reason));
        }
        if let Payload::Frame(f) = &event.payload {
            if !seen_frames.insert(f.frame_id.clone()) {
                violations.push(format!("event {}: duplicate frame_id {}", idx, f.frame_id));
            }
        }
        if let Some(p) = prev_t {
            if event.t < p {
                violations.push(format!("event {}: unsorted timestamp", idx));
            }
            if event.t - p > gap_threshold_s {
                gaps.push((p, event.t));
            }
        }
        prev_t = Some(event.t);
    }
    if let Some(last) = prev_t {
        if trace.duration_s < last {
            violations.push(format!(
                "duration {} shorter than last event at {}",
                trace.duration_s, last
            ));
        }
    }
    let annotation_count = *event_counts.get("annotation").unwrap_or(&0);
    ValidationReport {
        ok: violations.is_empty(),
        event_counts,
        annotation_count,
        gaps,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(s: &str) -> Result<Trace, TraceError> {
        parse_trace(Cursor::new(s.as_bytes()))
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse(""), Err(TraceError::Empty)));
    }

    #[test]
    fn single_frame_event() {
        let trace = parse(r#"{"t":0,"kind":"frame","frame_id":"f0","objects":["shelf"]}"#).unwrap();
        assert_eq!(trace.events.len(), 1);
        assert_eq!(trace.duration_s, 0.0);
    }

    #[test]
    fn unsorted_timestamps_rejected_with_line() {
        let input = concat!(
            r#"{"t":2,"kind":"gps","lat":0,"lon":0}"#, "\n",
            r#"{"t":1,"kind":"gps","lat":0,"lon":0}"#, "\n",
            r#"{"t":3,"kind":"gps","lat":0,"lon":0}"#, "\n",
        );
        match parse(input) {
            Err(TraceError::Unsorted { line }) => assert_eq!(line, 2),
            other => panic!("expected unsorted error, got {:?}", other),
        }
    }

    #[test]
    fn unknown_kind_rejected() {
        let err = parse(r#"{"t":0,"kind":"lidar","range":1}"#).unwrap_err();
        assert!(matches!(err, TraceError::Malformed { line: 1, .. }));
    }

    #[test]
    fn out_of_range_gps_rejected() {
        let err = parse(r#"{"t":0,"kind":"gps","lat":95.0,"lon":0}"#).unwrap_err();
        assert!(matches!(err, TraceError::Invalid { line: 1, .. }));
    }

    #[test]
    fn annotation_defaults_window_to_five_seconds() {
        let trace = parse(r#"{"t":1,"kind":"annotation","need":true,"tools":[{"name":"GetDateTime","args":{}}]}"#).unwrap();
        match &trace.events[0].payload {
            Payload::Annotation(a) => assert_eq!(a.window_s, 5.0),
            _ => panic!("expected annotation"),
        }
    }

    #[test]
    fn replay_yields_all_events_in_order_twice() {
        let input = concat!(
            r#"{"t":0,"kind":"imu","motion_state":"static"}"#, "\n",
            r#"{"t":1,"kind":"gps","lat":1,"lon":2}"#, "\n",
            r#"{"t":1,"kind":"audio","vad":false}"#, "\n",
            r#"{"t":2,"kind":"frame","frame_id":"f","objects":["cup"]}"#, "\n",
            r#"{"t":3,"kind":"audio","vad":true,"transcript":"hi"}"#, "\n",
        );
        let trace = parse(input).unwrap();
        let first: Vec<_> = trace.replay_iter().collect();
        let second: Vec<_> = trace.replay_iter().collect();
        assert_eq!(first.len(), 5);
        assert_eq!(first, second);
        for pair in first.windows(2) {
            assert!(pair[0].t <= pair[1].t);
        }
    }

    #[test]
    fn equal_timestamps_keep_file_order() {
        // Oracle: stable sort by t must be a no-op on the parsed order.
        let input = concat!(
            r#"{"t":1,"kind":"frame","frame_id":"a","objects":["x"]}"#, "\n",
            r#"{"t":1,"kind":"frame","frame_id":"b","objects":["y"]}"#, "\n",
            r#"{"t":1,"kind":"frame","frame_id":"c","objects":["z"]}"#, "\n",
        );
        let trace = parse(input).unwrap();
        let mut oracle = trace.events.clone();
        oracle.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
        assert_eq!(oracle, trace.events);
        let ids: Vec<_> = trace
            .events
            .iter()
            .map(|e| match &e.payload {
                Payload::Frame(f) => f.frame_id.clone(),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
    }

    #[test]
    fn round_trip_preserves_trace() {
        let input = concat!(
            r#"{"t":0.5,"kind":"imu","accel":[0.0,0.0,9.81]}"#, "\n",
            r#"{"t":1,"kind":"audio","vad":true,"transcript":"when is the next bus"}"#, "\n",
            r#"{"t":2,"kind":"annotation","need":true,"tools":[{"name":"BusSchedule","args":{"stop":"central"}}],"window_s":5.0}"#, "\n",
        );
        let trace = parse(input).unwrap();
        let reparsed = parse(&trace.serialize_to_string()).unwrap();
        assert_eq!(trace, reparsed);
    }

    #[test]
    fn validate_flags_transcript_without_vad() {
        let mut trace = parse(r#"{"t":0,"kind":"gps","lat":0,"lon":0}"#).unwrap();
        trace.events.push(TraceEvent {
            t: 1.0,
            payload: Payload::Audio(AudioPayload {
                vad: false,
                transcript: Some("oops".into()),
            }),
        });
        let report = validate_trace(&trace, 60.0);
        assert!(!report.ok);
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("transcript without voice activity")));
    }

    #[test]
    fn validate_flags_zero_annotation_window() {
        let mut trace = parse(r#"{"t":0,"kind":"gps","lat":0,"lon":0}"#).unwrap();
        trace.events.push(TraceEvent {
            t: 1.0,
            payload: Payload::Annotation(AnnotationPayload {
                need: true,
                tools: vec![],
                window_s: 0.0,
            }),
        });
        let report = validate_trace(&trace, 60.0);
        assert!(!report.ok);
    }

    #[test]
    fn validate_counts_modalities() {
        let input = concat!(
            r#"{"t":0,"kind":"gps","lat":0,"lon":0}"#, "\n",
            r#"{"t":1,"kind":"gps","lat":0,"lon":0}"#, "\n",
            r#"{"t":2,"kind":"audio","vad":false}"#, "\n",
        );
        let trace = parse(input).unwrap();
        let report = validate_trace(&trace, 60.0);
        assert!(report.ok);
        assert_eq!(report.event_counts["gps"], 2);
        assert_eq!(report.event_counts["audio"], 1);
        assert_eq!(report.annotation_count, 0);
    }
}
