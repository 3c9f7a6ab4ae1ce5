//! Seeded synthetic trace generator: scenario segments with 1 Hz sensor
//! events, scenario-consistent frame objects drawn from the bank, and
//! ground-truth annotations inside active segments. A sidecar summary
//! records segment boundaries and annotation ground truth, from which a
//! perfectly-scripted reasoner backend can be constructed.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persona::BankEntry;
use crate::reasoner::{ScriptEntry, ScriptMatch, ScriptedBackend};
use crate::tools::{ToolKind, ToolRegistry};
use crate::trace::{
    AnnotationPayload, AudioPayload, FramePayload, GpsPayload, GroundTruthToolCall, ImuPayload,
    Payload, Trace, TraceEvent,
};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("empty scenario mix")]
    EmptyMix,
    #[error("segment duration must be > 0, got {0}")]
    BadDuration(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSegment {
    pub scenario: String,
    pub duration_s: f64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarSegment {
    pub scenario: String,
    pub start_s: f64,
    pub end_s: f64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarAnnotation {
    pub t: f64,
    pub tools: Vec<GroundTruthToolCall>,
}

/// Ground-truth summary written next to a generated trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub seed: u64,
    pub duration_s: f64,
    pub segments: Vec<SidecarSegment>,
    pub annotations: Vec<SidecarAnnotation>,
    pub event_counts: BTreeMap<String, usize>,
}

// Annotation placement inside an active segment: first at start+20 s,
// then every 30 s, stopping 30 s short of the segment end so reflection
// and audio spill past the boundary stay bounded.
const ANNOTATION_LEAD_S: f64 = 20.0;
const ANNOTATION_STEP_S: f64 = 30.0;
const ANNOTATION_TAIL_S: f64 = 30.0;
// Conversations stop well before the segment end so the trailing audio
// window does not keep the cue high into the next segment.
const CONVERSATION_TAIL_S: f64 = 35.0;

const GRAVITY: f64 = 9.81;
const BASE_LAT: f64 = 22.30;
const BASE_LON: f64 = 114.10;

fn scenario_objects<'a>(
    bank: &'a [BankEntry],
    scenario: &str,
    rng: &mut ChaCha8Rng,
) -> Vec<String> {
    let candidates: Vec<&BankEntry> = bank
        .iter()
        .filter(|e| e.scenario.as_str() == scenario)
        .collect();
    match candidates.choose(rng) {
        Some(entry) => entry.objects.iter().cloned().collect(),
        None => vec![scenario.to_string()],
    }
}

fn annotation_tools(registry: &ToolRegistry, index: usize) -> Vec<GroundTruthToolCall> {
    let retrieval: Vec<_> = registry
        .specs
        .iter()
        .filter(|s| s.kind == ToolKind::Retrieval)
        .collect();
    if retrieval.is_empty() {
        return vec![];
    }
    let spec = retrieval[index % retrieval.len()];
    let args = spec
        .args
        .iter()
        .filter(|a| a.required)
        .map(|a| (a.key.clone(), format!("demo-{}", a.key)))
        .collect();
    vec![GroundTruthToolCall { name: spec.name.clone(), args }]
}

/// Generates a deterministic trace from a scenario mix. 1 Hz imu, gps,
/// audio, and frame events; active segments carry moving-accelerometer
/// patterns, early-segment conversations, and annotations with tool
/// ground truth drawn from the manifest.
pub fn gen_trace(
    mix: &[MixSegment],
    seed: u64,
    bank: &[BankEntry],
    registry: &ToolRegistry,
) -> Result<(Trace, Sidecar), GenError> {
    if mix.is_empty() {
        return Err(GenError::EmptyMix);
    }
    for seg in mix {
        if seg.duration_s <= 0.0 {
            return Err(GenError::BadDuration(seg.duration_s));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events: Vec<TraceEvent> = Vec::new();
    let mut segments = Vec::new();
    let mut annotations = Vec::new();
    let mut annotation_index = 0usize;
    let mut start = 0.0f64;

    for seg in mix {
        let end = start + seg.duration_s;
        segments.push(SidecarSegment {
            scenario: seg.scenario.clone(),
            start_s: start,
            end_s: end,
            active: seg.active,
        });
        let objects = scenario_objects(bank, &seg.scenario, &mut rng);

        let mut ann_times = Vec::new();
        if seg.active {
            let mut t_ann = start + ANNOTATION_LEAD_S;
            while t_ann <= end - ANNOTATION_TAIL_S {
                ann_times.push(t_ann);
                t_ann += ANNOTATION_STEP_S;
            }
        }

        let mut t = start;
        while t < end {
            let tick = t as i64;
            // IMU: alternating magnitude while active (window std-dev 2.0),
            // constant gravity while idle.
            let accel = if seg.active {
                let delta = if tick % 2 == 0 { 2.0 } else { -2.0 };
                [0.0, 0.0, GRAVITY + delta]
            } else {
                [0.0, 0.0, GRAVITY]
            };
            events.push(TraceEvent {
                t,
                payload: Payload::Imu(ImuPayload { accel: Some(accel), motion_state: None }),
            });
            events.push(TraceEvent {
                t,
                payload: Payload::Gps(GpsPayload {
                    lat: BASE_LAT + 0.0001 * (tick % 7) as f64,
                    lon: BASE_LON,
                }),
            });
            let conversing = seg.active && t < end - CONVERSATION_TAIL_S && tick % 15 == 0;
            events.push(TraceEvent {
                t,
                payload: Payload::Audio(AudioPayload {
                    vad: conversing,
                    transcript: conversing.then(|| {
                        format!("talking about {} at {}", seg.scenario, tick)
                    }),
                }),
            });
            events.push(TraceEvent {
                t,
                payload: Payload::Frame(FramePayload {
                    frame_id: format!("f{tick}"),
                    image_ref: None,
                    objects: Some(objects.clone()),
                }),
            });
            if let Some(t_ann) = ann_times.first().copied() {
                if (t - t_ann).abs() < 0.5 {
                    let tools = annotation_tools(registry, annotation_index);
                    annotation_index += 1;
                    annotations.push(SidecarAnnotation { t: t_ann, tools: tools.clone() });
                    events.push(TraceEvent {
                        t,
                        payload: Payload::Annotation(AnnotationPayload {
                            need: true,
                            tools,
                            window_s: 5.0,
                        }),
                    });
                    ann_times.remove(0);
                }
            }
            t += 1.0;
        }
        start = end;
    }

    let trace = Trace::new(events).with_duration(start);
    let mut event_counts = BTreeMap::new();
    for e in &trace.events {
        *event_counts.entry(e.payload.kind().to_string()).or_insert(0) += 1;
    }
    let sidecar = Sidecar {
        seed,
        duration_s: start,
        segments,
        annotations,
        event_counts,
    };
    Ok((trace, sidecar))
}

/// The default desk-scale mix: 10 minutes, 30% active time.
pub fn default_mix() -> Vec<MixSegment> {
    vec![
        MixSegment { scenario: "others".into(), duration_s: 120.0, active: false },
        MixSegment { scenario: "shopping".into(), duration_s: 90.0, active: true },
        MixSegment { scenario: "others".into(), duration_s: 120.0, active: false },
        MixSegment { scenario: "travel".into(), duration_s: 90.0, active: true },
        MixSegment { scenario: "others".into(), duration_s: 180.0, active: false },
    ]
}

/// Builds a scripted backend that replays the ground truth: inside
/// +/- tolerance of each annotation it answers with score 5 and the
/// annotated tool calls, elsewhere with score 1.
pub fn script_from_sidecar(sidecar: &Sidecar, tolerance_s: f64) -> ScriptedBackend {
    let entries = sidecar
        .annotations
        .iter()
        .map(|ann| {
            let tool_calls: Vec<serde_json::Value> = ann
                .tools
                .iter()
                .map(|t| serde_json::json!({"name": t.name, "args": t.args}))
                .collect();
            let raw = serde_json::json!({
                "thoughts": format!("the user needs help around t={}", ann.t),
                "proactive_score": 5,
                "tool_calls": tool_calls,
                "assistance": format!("assistance-for-moment-{}", ann.t),
            })
            .to_string();
            ScriptEntry {
                matcher: ScriptMatch::Window {
                    t_min: ann.t - tolerance_s,
                    t_max: ann.t + tolerance_s,
                },
                raw,
            }
        })
        .collect();
    ScriptedBackend {
        entries,
        default: Some(
            serde_json::json!({
                "thoughts": "nothing notable",
                "proactive_score": 1,
                "tool_calls": [],
                "assistance": "",
            })
            .to_string(),
        ),
    }
}

/// Serializes a scripted backend to its line-delimited file form.
pub fn script_to_jsonl(script: &ScriptedBackend) -> String {
    let mut out = String::new();
    for entry in &script.entries {
        let matcher = match &entry.matcher {
            ScriptMatch::Frame { frame_id } => serde_json::json!({"frame_id": frame_id}),
            ScriptMatch::Window { t_min, t_max } => {
                serde_json::json!({"t_min": t_min, "t_max": t_max})
            }
        };
        out.push_str(&serde_json::json!({"match": matcher, "raw": entry.raw}).to_string());
        out.push('\n');
    }
    if let Some(default) = &script.default {
        out.push_str(&serde_json::json!({"default": default}).to_string());
        out.push('\n');
    }
    out
}
