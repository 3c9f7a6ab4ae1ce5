//! Tool registry with the retrieval/execution split, call validation,
//! and fixture-backed execution. Execution-kind tools are never run
//! automatically; they come back as pending confirmation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("fixture line {line}: {reason}")]
    Fixture { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolKind {
    Retrieval,
    Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgSpec {
    pub key: String,
    #[serde(default)]
    pub required: bool,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub kind: ToolKind,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub args: Vec<ArgSpec>,
    /// Free-form provenance note for reconstructed manifest entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ToolRegistry {
    pub specs: Vec<ToolSpec>,
    by_name: HashMap<String, usize>,
}

impl ToolRegistry {
    pub fn from_specs(specs: Vec<ToolSpec>) -> Result<Self, ToolError> {
        let mut by_name = HashMap::new();
        for (i, spec) in specs.iter().enumerate() {
            if spec.name.is_empty() {
                return Err(ToolError::Manifest { line: i + 1, reason: "empty tool name".into() });
            }
            if by_name.insert(spec.name.clone(), i).is_some() {
                return Err(ToolError::Manifest {
                    line: i + 1,
                    reason: format!("duplicate tool name {}", spec.name),
                });
            }
        }
        Ok(ToolRegistry { specs, by_name })
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.by_name.get(name).map(|i| &self.specs[*i])
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Deterministic text block for prompt assembly: one block per tool
    /// with name, description, and argument list, in manifest order.
    pub fn manifest_text(&self) -> String {
        let mut out = String::new();
        for spec in &self.specs {
            out.push_str(&format!(
                "- {} [{}]: {}\n",
                spec.name,
                match spec.kind {
                    ToolKind::Retrieval => "retrieval",
                    ToolKind::Execution => "execution",
                },
                spec.description
            ));
            for arg in &spec.args {
                out.push_str(&format!(
                    "    {} ({}): {}\n",
                    arg.key,
                    if arg.required { "required" } else { "optional" },
                    arg.description
                ));
            }
        }
        out
    }
}

/// Loads the tool manifest (one JSON object per line).
pub fn load_registry<R: BufRead>(source: R) -> Result<ToolRegistry, ToolError> {
    let mut specs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let spec: ToolSpec = serde_json::from_str(&line).map_err(|e| ToolError::Manifest {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        if !seen.insert(spec.name.clone()) {
            return Err(ToolError::Manifest {
                line: idx + 1,
                reason: format!("duplicate tool name {}", spec.name),
            });
        }
        specs.push(spec);
    }
    ToolRegistry::from_specs(specs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    #[serde(default)]
    pub args: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationResult {
    Ok,
    Errors(Vec<String>),
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        matches!(self, ValidationResult::Ok)
    }
}

/// Checks a call against the registry and collects every violation:
/// unknown tool, missing required args, unknown extra args (strict mode).
pub fn validate_call(call: &ToolCall, registry: &ToolRegistry, strict: bool) -> ValidationResult {
    let mut errors = Vec::new();
    let Some(spec) = registry.get(&call.name) else {
        return ValidationResult::Errors(vec![format!("unknown tool: {}", call.name)]);
    };
    let known: HashSet<&str> = spec.args.iter().map(|a| a.key.as_str()).collect();
    for arg in &spec.args {
        if arg.required && !call.args.contains_key(&arg.key) {
            errors.push(format!("missing required arg: {}", arg.key));
        }
    }
    if strict {
        for key in call.args.keys() {
            if !known.contains(key.as_str()) {
                errors.push(format!("unknown arg: {}", key));
            }
        }
    }
    if errors.is_empty() {
        ValidationResult::Ok
    } else {
        ValidationResult::Errors(errors)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolStatus {
    Ok,
    PendingConfirmation,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub name: String,
    pub status: ToolStatus,
    pub payload: String,
}

/// Fixture key: tool name plus args with keys sorted, values verbatim.
/// Args maps with the same pairs in any order resolve identically.
pub fn canonical_key(name: &str, args: &BTreeMap<String, String>) -> String {
    let mut key = String::from(name);
    for (k, v) in args {
        key.push('\u{1}');
        key.push_str(k);
        key.push('=');
        key.push_str(v);
    }
    key
}

/// Offline execution providers: exact (name, canonical-args) fixtures
/// plus optional per-tool defaults.
#[derive(Debug, Clone, Default)]
pub struct ProviderSet {
    fixtures: HashMap<String, String>,
    defaults: HashMap<String, String>,
}

impl ProviderSet {
    pub fn add_fixture(&mut self, tool: &str, args: &BTreeMap<String, String>, payload: &str) {
        self.fixtures.insert(canonical_key(tool, args), payload.to_string());
    }

    pub fn add_default(&mut self, tool: &str, payload: &str) {
        self.defaults.insert(tool.to_string(), payload.to_string());
    }

    fn lookup(&self, call: &ToolCall) -> Option<&str> {
        self.fixtures
            .get(&canonical_key(&call.name, &call.args))
            .or_else(|| self.defaults.get(&call.name))
            .map(|s| s.as_str())
    }
}

/// Loads fixtures: lines are either {"tool","args":{..},"payload"} or
/// {"tool","default": payload}.
pub fn load_fixtures<R: BufRead>(source: R) -> Result<ProviderSet, ToolError> {
    #[derive(Deserialize)]
    struct RawFixture {
        tool: String,
        #[serde(default)]
        args: Option<BTreeMap<String, String>>,
        #[serde(default)]
        payload: Option<String>,
        #[serde(default)]
        default: Option<String>,
    }
    let mut providers = ProviderSet::default();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawFixture = serde_json::from_str(&line).map_err(|e| ToolError::Fixture {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        match (raw.args, raw.payload, raw.default) {
            (args, Some(payload), None) => {
                providers.add_fixture(&raw.tool, &args.unwrap_or_default(), &payload);
            }
            (None, None, Some(default)) => providers.add_default(&raw.tool, &default),
            _ => {
                return Err(ToolError::Fixture {
                    line: idx + 1,
                    reason: "expected either payload (with optional args) or default".into(),
                })
            }
        }
    }
    Ok(providers)
}

/// Executes a validated call. Retrieval tools resolve through the
/// providers; execution tools always come back pending confirmation and
/// are never run automatically.
pub fn execute(call: &ToolCall, registry: &ToolRegistry, providers: &ProviderSet) -> ToolResult {
    let validation = validate_call(call, registry, true);
    if let ValidationResult::Errors(errors) = validation {
        return ToolResult {
            name: call.name.clone(),
            status: ToolStatus::Error,
            payload: errors.join("; "),
        };
    }
    let spec = registry.get(&call.name).expect("validated call has a spec");
    match spec.kind {
        ToolKind::Execution => ToolResult {
            name: call.name.clone(),
            status: ToolStatus::PendingConfirmation,
            payload: "awaiting user confirmation".to_string(),
        },
        ToolKind::Retrieval => match providers.lookup(call) {
            Some(payload) => ToolResult {
                name: call.name.clone(),
                status: ToolStatus::Ok,
                payload: payload.to_string(),
            },
            None => ToolResult {
                name: call.name.clone(),
                status: ToolStatus::Error,
                payload: format!("no fixture for {}", canonical_key(&call.name, &call.args)),
            },
        },
    }
}
