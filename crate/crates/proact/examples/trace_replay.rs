//! Trace basics: parse a small hand-written trace, validate it, and
//! iterate events in replay order.
//!
//!   cargo run --example trace_replay

use std::io::Cursor;

use proact::trace::{parse_trace, validate_trace};

fn main() {
    let raw = concat!(
        r#"{"t": 0.0, "kind": "gps", "lat": 22.3000, "lon": 114.1000}"#, "\n",
        r#"{"t": 0.0, "kind": "imu", "accel": [0.0, 0.0, 9.81]}"#, "\n",
        r#"{"t": 1.0, "kind": "frame", "frame_id": "f1", "objects": ["shelf", "price tag"]}"#, "\n",
        r#"{"t": 2.0, "kind": "audio", "vad": true, "transcript": "do we need milk"}"#, "\n",
        r#"{"t": 3.0, "kind": "annotation", "need": true, "tools": [{"name": "PriceCompare", "args": {"product": "milk"}}]}"#, "\n",
    );
    let trace = parse_trace(Cursor::new(raw.as_bytes())).unwrap();
    println!("parsed {} events, duration {} s", trace.events.len(), trace.duration_s);

    for event in trace.replay_iter() {
        println!("  t={:>4}  {}", event.t, event.payload.kind());
    }

    for (t, ann) in trace.annotations() {
        println!(
            "annotation at t={t}: need={} tools={:?} window={}s",
            ann.need,
            ann.tools.iter().map(|c| c.name.as_str()).collect::<Vec<_>>(),
            ann.window_s
        );
    }

    let report = validate_trace(&trace, 10.0);
    println!("\nvalidation: {}", serde_json::to_string_pretty(&report).unwrap());
}
