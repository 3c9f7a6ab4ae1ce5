//! Evaluation harness: run-log model, invocation/annotation alignment,
//! the full metric suite (Acc-P, MD, tool F1, Acc-Args, sampling recall,
//! sampling ratio), and baseline samplers for comparison curves.

use std::collections::BTreeSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::derive_motion_context;
use crate::tools::{validate_call, ToolCall, ToolRegistry};
use crate::trace::{GroundTruthToolCall, MotionState, Payload, Trace};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    NothingToEvaluate,
    #[error("zero denominator for {0}")]
    ZeroDenominator(&'static str),
    #[error("empty pair list")]
    EmptyPairs,
    #[error("zero annotations")]
    ZeroAnnotations,
    #[error("unknown baseline: {0}")]
    UnknownBaseline(String),
    #[error("run log line {line}: {reason}")]
    RunLogFile { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One reasoner invocation as recorded during replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub t: f64,
    pub proactive_score: i64,
    pub decided_proactive: bool,
    pub tool_calls: Vec<ToolCall>,
    pub assistance: String,
    pub delivered: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunLog {
    pub invocations: Vec<Invocation>,
    pub samples: Vec<f64>,
    pub dropped_frames: usize,
    pub duration_s: f64,
    /// Serialized pipeline configuration snapshot.
    pub config: serde_json::Value,
}

impl RunLog {
    /// Line-delimited form: a config line, one line per sample, one per
    /// invocation, and a trailing summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        out.push_str(
            &serde_json::json!({"kind": "config", "config": self.config}).to_string(),
        );
        out.push('\n');
        for t in &self.samples {
            out.push_str(&serde_json::json!({"kind": "sample", "t": t}).to_string());
            out.push('\n');
        }
        for inv in &self.invocations {
            let mut v = serde_json::to_value(inv).expect("invocation serializes");
            v["kind"] = "invocation".into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out.push_str(
            &serde_json::json!({
                "kind": "summary",
                "dropped_frames": self.dropped_frames,
                "duration_s": self.duration_s,
            })
            .to_string(),
        );
        out.push('\n');
        out
    }

    pub fn from_jsonl<R: BufRead>(source: R) -> Result<RunLog, EvalError> {
        let mut log = RunLog::default();
        for (idx, line) in source.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(&line).map_err(|e| EvalError::RunLogFile {
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            match value.get("kind").and_then(|k| k.as_str()) {
                Some("config") => log.config = value["config"].clone(),
                Some("sample") => {
                    log.samples.push(value["t"].as_f64().ok_or(EvalError::RunLogFile {
                        line: idx + 1,
                        reason: "sample without t".into(),
                    })?)
                }
                Some("invocation") => {
                    let inv: Invocation =
                        serde_json::from_value(value).map_err(|e| EvalError::RunLogFile {
                            line: idx + 1,
                            reason: e.to_string(),
                        })?;
                    log.invocations.push(inv);
                }
                Some("summary") => {
                    log.dropped_frames = value["dropped_frames"].as_u64().unwrap_or(0) as usize;
                    log.duration_s = value["duration_s"].as_f64().unwrap_or(0.0);
                }
                other => {
                    return Err(EvalError::RunLogFile {
                        line: idx + 1,
                        reason: format!("unknown record kind {:?}", other),
                    })
                }
            }
        }
        Ok(log)
    }
}

/// A matched (annotation, nearest proactive invocation) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub annotation_t: f64,
    pub invocation_t: f64,
    pub predicted: Vec<ToolCall>,
    pub truth: Vec<GroundTruthToolCall>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchSet {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub pairs: Vec<MatchedPair>,
}

/// Aligns invocations with annotations: an annotation is a TP when a
/// proactive invocation lies within +/- tolerance (the nearest one
/// becomes its pair), else an FN. Proactive invocations outside every
/// annotation window are FPs; non-proactive invocations outside every
/// window are TNs.
pub fn match_invocations(
    run: &RunLog,
    truth: &Trace,
    tolerance_s: f64,
) -> Result<MatchSet, EvalError> {
    let annotations: Vec<(f64, &crate::trace::AnnotationPayload)> = truth.annotations().collect();
    if run.invocations.is_empty() && annotations.is_empty() {
        return Err(EvalError::NothingToEvaluate);
    }
    let mut set = MatchSet::default();
    let mut paired: Vec<bool> = vec![false; run.invocations.len()];

    for (ann_t, ann) in &annotations {
        let mut best: Option<(usize, f64)> = None;
        for (i, inv) in run.invocations.iter().enumerate() {
            if !inv.decided_proactive {
                continue;
            }
            let dist = (inv.t - ann_t).abs();
            if dist <= tolerance_s {
                let closer = match best {
                    None => true,
                    Some((_, best_dist)) => dist < best_dist,
                };
                if closer {
                    best = Some((i, dist));
                }
            }
        }
        match best {
            Some((i, _)) => {
                set.tp += 1;
                paired[i] = true;
                set.pairs.push(MatchedPair {
                    annotation_t: *ann_t,
                    invocation_t: run.invocations[i].t,
                    predicted: run.invocations[i].tool_calls.clone(),
                    truth: ann.tools.clone(),
                });
            }
            None => set.fn_ += 1,
        }
    }

    for (i, inv) in run.invocations.iter().enumerate() {
        let in_window = annotations
            .iter()
            .any(|(ann_t, _)| (inv.t - ann_t).abs() <= tolerance_s);
        if inv.decided_proactive {
            if !paired[i] && !in_window {
                set.fp += 1;
            }
        } else if !in_window {
            set.tn += 1;
        }
    }
    Ok(set)
}

/// (tp + tn) / (tp + tn + fp + fn).
pub fn acc_p(m: &MatchSet) -> Result<f64, EvalError> {
    let denom = m.tp + m.tn + m.fp + m.fn_;
    if denom == 0 {
        return Err(EvalError::ZeroDenominator("acc_p"));
    }
    Ok((m.tp + m.tn) as f64 / denom as f64)
}

/// fn / (tp + fn).
pub fn missed_detection(m: &MatchSet) -> Result<f64, EvalError> {
    let denom = m.tp + m.fn_;
    if denom == 0 {
        return Err(EvalError::ZeroDenominator("missed_detection"));
    }
    Ok(m.fn_ as f64 / denom as f64)
}

fn name_set_predicted(calls: &[ToolCall]) -> BTreeSet<&str> {
    calls.iter().map(|c| c.name.as_str()).collect()
}

fn name_set_truth(calls: &[GroundTruthToolCall]) -> BTreeSet<&str> {
    calls.iter().map(|c| c.name.as_str()).collect()
}

/// Macro F1 over matched pairs, comparing tool-name sets. Both-empty
/// pairs score 1.0; pairs with zero precision and recall score 0.
pub fn tool_f1(pairs: &[MatchedPair]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyPairs);
    }
    let mut sum = 0.0;
    for pair in pairs {
        let predicted = name_set_predicted(&pair.predicted);
        let truth = name_set_truth(&pair.truth);
        let f1 = if predicted.is_empty() && truth.is_empty() {
            1.0
        } else {
            let inter = predicted.intersection(&truth).count() as f64;
            let p = if predicted.is_empty() { 0.0 } else { inter / predicted.len() as f64 };
            let r = if truth.is_empty() { 0.0 } else { inter / truth.len() as f64 };
            if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }
        };
        sum += f1;
    }
    Ok(sum / pairs.len() as f64)
}

fn canonical_calls(calls: &[ToolCall]) -> Vec<(String, Vec<(String, String)>)> {
    let mut v: Vec<(String, Vec<(String, String)>)> = calls
        .iter()
        .map(|c| {
            (
                c.name.clone(),
                c.args.iter().map(|(k, val)| (k.clone(), val.clone())).collect(),
            )
        })
        .collect();
    v.sort();
    v
}

fn truth_as_calls(calls: &[GroundTruthToolCall]) -> Vec<ToolCall> {
    calls
        .iter()
        .map(|c| ToolCall { name: c.name.clone(), args: c.args.clone() })
        .collect()
}

/// Fraction of matched pairs whose predicted calls exactly equal the
/// ground truth as multisets (names and full argument maps) and pass
/// registry validation. Any name, format, or parameter error counts the
/// pair incorrect.
pub fn acc_args(
    pairs: &[MatchedPair],
    registry: &ToolRegistry,
    strict: bool,
) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyPairs);
    }
    let correct = pairs
        .iter()
        .filter(|pair| {
            let all_valid = pair
                .predicted
                .iter()
                .all(|c| validate_call(c, registry, strict).is_ok());
            all_valid
                && canonical_calls(&pair.predicted)
                    == canonical_calls(&truth_as_calls(&pair.truth))
        })
        .count();
    Ok(correct as f64 / pairs.len() as f64)
}

/// Fraction of annotations with at least one sample within +/- tolerance.
pub fn recall_sampling(samples: &[f64], truth: &Trace, tolerance_s: f64) -> Result<f64, EvalError> {
    let annotations: Vec<f64> = truth.annotations().map(|(t, _)| t).collect();
    if annotations.is_empty() {
        return Err(EvalError::ZeroAnnotations);
    }
    let hit = annotations
        .iter()
        .filter(|ann_t| samples.iter().any(|s| (s - **ann_t).abs() <= tolerance_s))
        .count();
    Ok(hit as f64 / annotations.len() as f64)
}

/// Sample count relative to a 1 s periodic reference over [0, duration)
/// with a sample at t=0, i.e. ceil(duration) reference samples.
pub fn sampling_ratio(samples: &[f64], duration_s: f64) -> f64 {
    let reference = duration_s.ceil().max(1.0);
    samples.len() as f64 / reference
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub period_s: f64,
    pub high_interval_s: f64,
    pub low_interval_s: f64,
    pub jaccard_threshold: f64,
    /// Window and threshold for accel-derived motion in motion-trigger.
    pub motion_window_s: f64,
    pub motion_threshold: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            period_s: 10.0,
            high_interval_s: 5.0,
            low_interval_s: 60.0,
            jaccard_threshold: 0.5,
            motion_window_s: 2.0,
            motion_threshold: 0.5,
        }
    }
}

fn periodic(duration_s: f64, period_s: f64) -> Vec<f64> {
    let mut samples = Vec::new();
    let mut t = 0.0;
    while t < duration_s {
        samples.push(t);
        t += period_s;
    }
    samples
}

// Per-tick trigger state derived from trace events, then duty-cycled
// between high/low intervals.
fn trigger_sampler<F>(trace: &Trace, params: &BaselineParams, mut is_high: F) -> Vec<f64>
where
    F: FnMut(&Trace, f64) -> bool,
{
    let mut samples = Vec::new();
    let mut last: Option<f64> = None;
    let mut t = 0.0;
    while t < trace.duration_s {
        let interval = if is_high(trace, t) {
            params.high_interval_s
        } else {
            params.low_interval_s
        };
        let due = last.map_or(true, |l| t - l >= interval);
        if due {
            samples.push(t);
            last = Some(t);
        }
        t += 1.0;
    }
    samples
}

fn motion_state_at(trace: &Trace, now: f64, window_s: f64, threshold: f64) -> MotionState {
    let mut precomputed = None;
    let mut window = Vec::new();
    for event in &trace.events {
        if event.t > now {
            break;
        }
        if let Payload::Imu(imu) = &event.payload {
            if let Some(state) = imu.motion_state {
                precomputed = Some(state);
            }
            if let Some(accel) = imu.accel {
                if now - event.t <= window_s {
                    window.push(accel);
                }
            }
        }
    }
    if !window.is_empty() {
        return derive_motion_context(&window, threshold)
            .map(|m| m.state)
            .unwrap_or(MotionState::Static);
    }
    precomputed.unwrap_or(MotionState::Static)
}

fn vad_at(trace: &Trace, now: f64) -> bool {
    let mut vad = false;
    for event in &trace.events {
        if event.t > now {
            break;
        }
        if let Payload::Audio(a) = &event.payload {
            vad = a.vad;
        }
    }
    vad
}

fn objects_at(trace: &Trace, now: f64) -> BTreeSet<String> {
    let mut objects = BTreeSet::new();
    for event in &trace.events {
        if event.t > now {
            break;
        }
        if let Payload::Frame(f) = &event.payload {
            objects = f
                .objects
                .as_deref()
                .unwrap_or_default()
                .iter()
                .map(|o| o.to_lowercase())
                .collect();
        }
    }
    objects
}

fn jaccard_distance(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    1.0 - inter / union
}

/// Baseline samplers: `periodic-<x>`, `motion-trigger`,
/// `conversation-trigger`, and `diff-filter` (change-gated 1 s
/// candidates).
pub fn run_baseline(
    name: &str,
    trace: &Trace,
    params: &BaselineParams,
) -> Result<Vec<f64>, EvalError> {
    if let Some(x) = name.strip_prefix("periodic-") {
        let period: f64 = x
            .parse()
            .map_err(|_| EvalError::UnknownBaseline(name.to_string()))?;
        return Ok(periodic(trace.duration_s, period));
    }
    match name {
        "motion-trigger" => Ok(trigger_sampler(trace, params, |tr, t| {
            motion_state_at(tr, t, params.motion_window_s, params.motion_threshold)
                == MotionState::Moving
        })),
        "conversation-trigger" => Ok(trigger_sampler(trace, params, |tr, t| vad_at(tr, t))),
        "diff-filter" => {
            let mut samples = Vec::new();
            let mut prev: Option<BTreeSet<String>> = None;
            let mut t = 0.0;
            while t < trace.duration_s {
                let objects = objects_at(trace, t);
                let emit = match &prev {
                    None => true,
                    Some(p) => jaccard_distance(p, &objects) > params.jaccard_threshold,
                };
                if emit {
                    samples.push(t);
                }
                prev = Some(objects);
                t += 1.0;
            }
            Ok(samples)
        }
        other => Err(EvalError::UnknownBaseline(other.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub matched_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub name: String,
    pub recall: Option<f64>,
    pub sampling_ratio: f64,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc_p: f64,
    pub md: f64,
    pub f1: f64,
    pub acc_args: f64,
    pub recall: f64,
    pub sampling_ratio: f64,
    pub counts: Counts,
    pub delivered_count: usize,
    pub tolerance_s: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub baselines: Vec<BaselineResult>,
}

/// Computes the full metric suite for a run against its ground truth.
pub fn evaluate(
    run: &RunLog,
    truth: &Trace,
    registry: &ToolRegistry,
    tolerance_s: f64,
    strict_args: bool,
) -> Result<EvalReport, EvalError> {
    let matches = match_invocations(run, truth, tolerance_s)?;
    let acc = acc_p(&matches)?;
    let md = missed_detection(&matches)?;
    let (f1, args_acc) = if matches.pairs.is_empty() {
        (0.0, 0.0)
    } else {
        (
            tool_f1(&matches.pairs)?,
            acc_args(&matches.pairs, registry, strict_args)?,
        )
    };
    let recall = recall_sampling(&run.samples, truth, tolerance_s)?;
    let ratio = sampling_ratio(&run.samples, truth.duration_s);
    Ok(EvalReport {
        acc_p: acc,
        md,
        f1,
        acc_args: args_acc,
        recall,
        sampling_ratio: ratio,
        counts: Counts {
            tp: matches.tp,
            fp: matches.fp,
            tn: matches.tn,
            fn_: matches.fn_,
            matched_pairs: matches.pairs.len(),
        },
        delivered_count: run.invocations.iter().filter(|i| i.delivered).count(),
        tolerance_s,
        baselines: Vec::new(),
    })
}
