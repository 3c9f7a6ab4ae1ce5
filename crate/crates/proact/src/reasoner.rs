//! Proactive reasoning: prompt assembly from hierarchical contexts,
//! pluggable backends (scripted lookup file or a remote chat endpoint),
//! tolerant structured-output parsing, and the proactive-score gate.

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{render_sensory_text, ContextBundle};
use crate::persona::Persona;
use crate::tools::{ToolCall, ToolRegistry};

#[derive(Debug, Error)]
pub enum ReasonerError {
    #[error("parse failure: no structured output in backend text")]
    ParseFailure { raw: String },
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("script file line {line}: {reason}")]
    ScriptFile { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Default task-instruction text. A paraphrased placeholder, replaceable
/// via configuration for real deployments.
pub const DEFAULT_TASK_INSTRUCTIONS: &str = "You are a proactive assistant. You receive sensory \
contexts (location, motion, audio), user personas, and an egocentric image. First write a short \
thought describing the situation, then rate the user's need for proactive assistance from 1 \
(lowest) to 5 (highest), select any tool calls that would help, and draft the assistance message. \
Respond with a single JSON object with keys \"thoughts\", \"proactive_score\", \"tool_calls\" \
(array of {\"name\", \"args\"}), and \"assistance\".";

pub const FORMAT_REMINDER: &str = "Reminder: respond with exactly one JSON object containing \
\"thoughts\", \"proactive_score\" (integer 1-5), \"tool_calls\", and \"assistance\".";

/// Assembled prompt, fixed section order: Task Instructions, Tool Set,
/// Personas, Sensory Contexts.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub task_instructions: String,
    pub tool_manifest_text: String,
    pub personas_text: String,
    pub sensory_text: String,
    pub image_ref: Option<String>,
    /// Trace time of the invocation; used by scripted backends for
    /// time-window matching.
    pub at_t: f64,
}

impl PromptBundle {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("Task Instructions:\n");
        out.push_str(&self.task_instructions);
        out.push_str("\n\nTool Set:\n");
        out.push_str(&self.tool_manifest_text);
        out.push_str("\nPersonas:");
        out.push_str(&self.personas_text);
        out.push_str("\n\nSensory Contexts:\n");
        out.push_str(&self.sensory_text);
        if self.image_ref.is_some() {
            out.push_str("\n<IMAGE>");
        }
        out.push('\n');
        out
    }
}

/// Deterministic prompt assembly. Personas are listed one per line;
/// with none retrieved the section reads "Personas: (none)". The
/// `<IMAGE>` placeholder appears exactly once when a frame is attached.
pub fn assemble_prompt(
    bundle: &ContextBundle,
    personas: &[Persona],
    registry: &ToolRegistry,
    task_instructions: &str,
    max_pois: usize,
) -> PromptBundle {
    let personas_text = if personas.is_empty() {
        " (none)".to_string()
    } else {
        let mut text = String::new();
        for p in personas {
            text.push_str("\n- ");
            text.push_str(&p.text);
        }
        text
    };
    let image_ref = bundle.visual.as_ref().map(|v| v.frame_id.clone());
    PromptBundle {
        task_instructions: task_instructions.to_string(),
        tool_manifest_text: registry.manifest_text(),
        personas_text,
        sensory_text: render_sensory_text(bundle, max_pois),
        image_ref,
        at_t: bundle.at_t,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerOutput {
    pub thoughts: String,
    pub proactive_score: i64,
    pub tool_calls: Vec<ToolCall>,
    pub assistance: String,
    #[serde(skip)]
    pub raw: String,
}

impl ReasonerOutput {
    /// Sentinel used after unrecoverable parse failures: lowest score,
    /// no calls, no assistance.
    pub fn sentinel(raw: String) -> Self {
        ReasonerOutput {
            thoughts: String::new(),
            proactive_score: 1,
            tool_calls: Vec::new(),
            assistance: String::new(),
            raw,
        }
    }

    /// Canonical single-object serialization; re-parses to an equal value.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("reasoner output serializes")
    }
}

#[derive(Deserialize)]
struct RawOutput {
    #[serde(default)]
    thoughts: String,
    proactive_score: serde_json::Value,
    #[serde(default)]
    tool_calls: Vec<ToolCall>,
    #[serde(default)]
    assistance: String,
}

// Scans for balanced top-level JSON objects, respecting string literals.
fn candidate_objects(raw: &str) -> Vec<&str> {
    let bytes = raw.as_bytes();
    let mut candidates = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let mut depth = 0usize;
            let mut in_string = false;
            let mut escaped = false;
            let mut end = None;
            for (j, &b) in bytes[i..].iter().enumerate() {
                if in_string {
                    if escaped {
                        escaped = false;
                    } else if b == b'\\' {
                        escaped = true;
                    } else if b == b'"' {
                        in_string = false;
                    }
                    continue;
                }
                match b {
                    b'"' => in_string = true,
                    b'{' => depth += 1,
                    b'}' => {
                        depth -= 1;
                        if depth == 0 {
                            end = Some(i + j + 1);
                            break;
                        }
                    }
                    _ => {}
                }
            }
            if let Some(end) = end {
                candidates.push(&raw[i..end]);
                i = end;
                continue;
            }
        }
        i += 1;
    }
    candidates
}

/// Extracts the first well-formed output object from arbitrary backend
/// text, tolerating surrounding prose and code fences. Out-of-range
/// integer scores are clamped into [1, 5] with a warning; a non-integer
/// score or no parseable object is a `ParseFailure`. Never panics.
pub fn parse_output(raw: &str) -> Result<ReasonerOutput, ReasonerError> {
    for candidate in candidate_objects(raw) {
        let Ok(parsed) = serde_json::from_str::<RawOutput>(candidate) else {
            continue;
        };
        let score = match parsed.proactive_score.as_i64() {
            Some(s) => s,
            None => {
                // An object with the right keys but a fractional or
                // non-numeric score is still a failure.
                return Err(ReasonerError::ParseFailure { raw: raw.to_string() });
            }
        };
        let clamped = score.clamp(1, 5);
        if clamped != score {
            log::warn!("proactive score {} out of range, clamped to {}", score, clamped);
        }
        return Ok(ReasonerOutput {
            thoughts: parsed.thoughts,
            proactive_score: clamped,
            tool_calls: parsed.tool_calls,
            assistance: parsed.assistance,
            raw: raw.to_string(),
        });
    }
    Err(ReasonerError::ParseFailure { raw: raw.to_string() })
}

/// Proactive iff score >= threshold (default reading), or > threshold in
/// strict mode.
pub fn decide_proactive(output: &ReasonerOutput, threshold: i64, strict: bool) -> bool {
    if strict {
        output.proactive_score > threshold
    } else {
        output.proactive_score >= threshold
    }
}

pub trait ReasonerBackend: Send + Sync {
    /// Produces the raw backend text for a prompt. `reminder` carries the
    /// format reminder appended on parse-failure retries.
    fn invoke(&self, prompt: &PromptBundle, reminder: Option<&str>) -> Result<String, ReasonerError>;
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ScriptMatch {
    Frame { frame_id: String },
    Window { t_min: f64, t_max: f64 },
}

#[derive(Debug, Clone)]
pub struct ScriptEntry {
    pub matcher: ScriptMatch,
    pub raw: String,
}

/// Deterministic scripted backend: first matching entry wins, with an
/// optional default raw output.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    pub entries: Vec<ScriptEntry>,
    pub default: Option<String>,
}

impl ScriptedBackend {
    pub fn load<R: BufRead>(source: R) -> Result<Self, ReasonerError> {
        #[derive(Deserialize)]
        struct RawLine {
            #[serde(rename = "match")]
            matcher: Option<ScriptMatch>,
            raw: Option<String>,
            default: Option<String>,
        }
        let mut backend = ScriptedBackend::default();
        for (idx, line) in source.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawLine = serde_json::from_str(&line).map_err(|e| ReasonerError::ScriptFile {
                line: idx + 1,
                reason: e.to_string(),
            })?;
            match (raw.matcher, raw.raw, raw.default) {
                (Some(matcher), Some(text), None) => {
                    backend.entries.push(ScriptEntry { matcher, raw: text });
                }
                (None, None, Some(default)) => backend.default = Some(default),
                _ => {
                    return Err(ReasonerError::ScriptFile {
                        line: idx + 1,
                        reason: "expected {match, raw} or {default}".into(),
                    })
                }
            }
        }
        Ok(backend)
    }
}

impl ReasonerBackend for ScriptedBackend {
    fn invoke(&self, prompt: &PromptBundle, _reminder: Option<&str>) -> Result<String, ReasonerError> {
        for entry in &self.entries {
            let hit = match &entry.matcher {
                ScriptMatch::Frame { frame_id } => {
                    prompt.image_ref.as_deref() == Some(frame_id.as_str())
                }
                ScriptMatch::Window { t_min, t_max } => {
                    prompt.at_t >= *t_min && prompt.at_t <= *t_max
                }
            };
            if hit {
                return Ok(entry.raw.clone());
            }
        }
        self.default
            .clone()
            .ok_or_else(|| ReasonerError::BackendUnavailable("no script match and no default".into()))
    }
}

/// Remote chat-style JSON-over-HTTP backend: a single user message per
/// invocation with an optional image attachment by reference.
pub struct RemoteBackend {
    pub url: String,
    pub model: String,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(url: impl Into<String>, model: impl Into<String>, timeout_s: f64) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs_f64(timeout_s))
            .build()
            .expect("http client");
        RemoteBackend { url: url.into(), model: model.into(), client }
    }
}

#[derive(Deserialize)]
struct RemoteResponse {
    content: String,
}

impl ReasonerBackend for RemoteBackend {
    fn invoke(&self, prompt: &PromptBundle, reminder: Option<&str>) -> Result<String, ReasonerError> {
        let mut content = prompt.render();
        if let Some(reminder) = reminder {
            content.push('\n');
            content.push_str(reminder);
        }
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": content}],
            "image_ref": prompt.image_ref,
        });
        let resp = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .map_err(|e| ReasonerError::BackendUnavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(ReasonerError::BackendUnavailable(format!("status {}", resp.status())));
        }
        let parsed: RemoteResponse = resp
            .json()
            .map_err(|e| ReasonerError::BackendUnavailable(e.to_string()))?;
        Ok(parsed.content)
    }
}

/// Invokes the backend and parses its output. Parse failures retry up to
/// `retry` times with a format reminder; after the final failure the
/// sentinel non-proactive output is returned. Transport errors retry the
/// same number of times before surfacing `BackendUnavailable`.
pub fn invoke_and_reason(
    backend: &dyn ReasonerBackend,
    prompt: &PromptBundle,
    retry: usize,
) -> Result<ReasonerOutput, ReasonerError> {
    let mut last_raw = String::new();
    let mut transport_err = None;
    for attempt in 0..=retry {
        let reminder = if attempt > 0 { Some(FORMAT_REMINDER) } else { None };
        match backend.invoke(prompt, reminder) {
            Ok(raw) => {
                transport_err = None;
                match parse_output(&raw) {
                    Ok(output) => return Ok(output),
                    Err(_) => last_raw = raw,
                }
            }
            Err(e) => transport_err = Some(e),
        }
    }
    if let Some(e) = transport_err {
        return Err(ReasonerError::BackendUnavailable(e.to_string()));
    }
    log::warn!("reasoner output unparseable after {} retries, using sentinel", retry);
    Ok(ReasonerOutput::sentinel(last_raw))
}

/// One fine-tuning record emitted by the distillation export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillationRecord {
    pub image_ref: String,
    pub sensory_text: String,
    pub personas_text: String,
    pub thoughts: String,
    pub proactive_score: i64,
    pub tool_calls: Vec<ToolCall>,
}
