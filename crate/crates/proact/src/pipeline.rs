//! End-to-end orchestration: drives the tick loop over a trace, wiring
//! scheduler -> context extraction -> persona retrieval -> reasoner ->
//! tools -> delivery, and records a complete run log. Also hosts the
//! CoT-distillation export, which reuses the same context path.

use std::io::BufReader;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::context::{
    derive_audio_context, derive_location_context, derive_motion_context,
    extract_coarse_visual_context, precomputed_motion_context, render_sensory_text, AudioContext,
    ContextBundle, LocationContext, MotionContext, Poi,
};
use crate::delivery::{gate, DeliveryRecord};
use crate::embed::{BagOfWordsEmbedder, Embedder, RemoteEmbedder};
use crate::eval::{Invocation, RunLog};
use crate::persona::{
    predict_scenario, retrieve_personas, BankEntry, PersonaStore, ScenarioCategory, ScenarioSet,
    FALLBACK_SCENARIO,
};
use crate::reasoner::{
    assemble_prompt, decide_proactive, invoke_and_reason, DistillationRecord, ReasonerBackend,
    ReasonerError, ReasonerOutput, RemoteBackend, ScriptedBackend,
};
use crate::scheduler::{cue_mode, Scheduler};
use crate::tools::{execute, validate_call, ProviderSet, ToolRegistry, ToolStatus};
use crate::trace::{FramePayload, MotionState, Payload, Trace};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Trace(#[from] crate::trace::TraceError),
    #[error(transparent)]
    Context(#[from] crate::context::ContextError),
    #[error(transparent)]
    Persona(#[from] crate::persona::PersonaError),
    #[error(transparent)]
    Scheduler(#[from] crate::scheduler::SchedulerError),
    #[error(transparent)]
    Reasoner(#[from] crate::reasoner::ReasonerError),
    #[error(transparent)]
    Tools(#[from] crate::tools::ToolError),
    #[error("backend spec {0:?} not recognized (expected scripted:<path> or remote:<url>)")]
    BadBackendSpec(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Derives the hierarchical contexts at any instant of a trace.
pub struct ContextEngine<'a> {
    trace: &'a Trace,
    pois: &'a [Poi],
    config: &'a PipelineConfig,
}

impl<'a> ContextEngine<'a> {
    pub fn new(trace: &'a Trace, pois: &'a [Poi], config: &'a PipelineConfig) -> Self {
        ContextEngine { trace, pois, config }
    }

    fn motion_at(&self, now: f64) -> MotionContext {
        let mut window = Vec::new();
        let mut precomputed = None;
        for event in &self.trace.events {
            if event.t > now {
                break;
            }
            if let Payload::Imu(imu) = &event.payload {
                if let Some(accel) = imu.accel {
                    if now - event.t <= self.config.motion.window_s {
                        window.push(accel);
                    }
                }
                if let Some(state) = imu.motion_state {
                    precomputed = Some(state);
                }
            }
        }
        if !window.is_empty() {
            derive_motion_context(&window, self.config.motion.threshold)
                .expect("non-empty window")
        } else {
            precomputed_motion_context(precomputed.unwrap_or(MotionState::Static))
        }
    }

    fn location_at(&self, now: f64) -> LocationContext {
        let mut fix = None;
        for event in &self.trace.events {
            if event.t > now {
                break;
            }
            if let Payload::Gps(g) = &event.payload {
                fix = Some(g.clone());
            }
        }
        match fix {
            Some(fix) => derive_location_context(&fix, self.pois, self.config.location.radius_m),
            None => LocationContext::empty(),
        }
    }

    fn audio_at(&self, now: f64) -> AudioContext {
        let mut window = Vec::new();
        for event in &self.trace.events {
            if event.t > now {
                break;
            }
            if let Payload::Audio(a) = &event.payload {
                if now - event.t <= self.config.audio.window_s {
                    window.push(a.clone());
                }
            }
        }
        derive_audio_context(&window)
    }

    fn latest_frame_at(&self, now: f64) -> Option<&'a FramePayload> {
        let mut frame = None;
        for event in &self.trace.events {
            if event.t > now {
                break;
            }
            if let Payload::Frame(f) = &event.payload {
                frame = Some(f);
            }
        }
        frame
    }

    /// Sensory contexts only (no visual, no personas).
    pub fn sensory_bundle_at(&self, now: f64) -> ContextBundle {
        ContextBundle {
            at_t: now,
            location: self.location_at(now),
            motion: self.motion_at(now),
            audio: self.audio_at(now),
            visual: None,
            personas: Vec::new(),
        }
    }
}

/// Everything loaded and ready to replay.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub trace: Trace,
    pub pois: Vec<Poi>,
    pub bank: Vec<BankEntry>,
    pub personas: PersonaStore,
    pub registry: ToolRegistry,
    pub providers: ProviderSet,
    pub backend: Box<dyn ReasonerBackend>,
    pub embedder: Box<dyn Embedder>,
}

fn open(path: &Path) -> Result<BufReader<std::fs::File>, PipelineError> {
    Ok(BufReader::new(std::fs::File::open(path)?))
}

pub fn backend_from_spec(
    spec: &str,
    model: &str,
    timeout_s: f64,
) -> Result<Box<dyn ReasonerBackend>, PipelineError> {
    if let Some(path) = spec.strip_prefix("scripted:") {
        let backend = ScriptedBackend::load(open(Path::new(path))?)?;
        Ok(Box::new(backend))
    } else if let Some(url) = spec.strip_prefix("remote:") {
        Ok(Box::new(RemoteBackend::new(url, model, timeout_s)))
    } else {
        Err(PipelineError::BadBackendSpec(spec.to_string()))
    }
}

impl Pipeline {
    /// Loads every data file referenced by the configuration.
    pub fn from_config(config: PipelineConfig) -> Result<Self, PipelineError> {
        let scenarios = ScenarioSet::default();
        let trace = match &config.paths.trace {
            Some(path) => crate::trace::parse_trace(open(path)?)?,
            None => {
                return Err(PipelineError::Config(crate::config::ConfigError::Invalid(
                    "paths.trace is required for replay".into(),
                )))
            }
        };
        let pois = match &config.paths.pois {
            Some(path) => crate::context::load_pois(open(path)?)?,
            None => Vec::new(),
        };
        let bank = match &config.paths.bank {
            Some(path) => crate::persona::load_bank(open(path)?, &scenarios)?,
            None => Vec::new(),
        };
        let personas = match &config.paths.personas {
            Some(path) => crate::persona::load_personas(open(path)?, &scenarios)?,
            None => PersonaStore::default(),
        };
        let registry = match &config.paths.tools {
            Some(path) => crate::tools::load_registry(open(path)?)?,
            None => ToolRegistry::default(),
        };
        let providers = match &config.paths.fixtures {
            Some(path) => crate::tools::load_fixtures(open(path)?)?,
            None => ProviderSet::default(),
        };
        let backend = backend_from_spec(
            &config.reasoner.backend,
            &config.reasoner.model,
            config.reasoner.timeout_s,
        )?;
        // The temporal constraint reuses the embedding abstraction; the
        // deterministic bag-of-words backend is the desk-scale default.
        let embedder: Box<dyn Embedder> = Box::new(BagOfWordsEmbedder);
        Ok(Pipeline {
            config,
            trace,
            pois,
            bank,
            personas,
            registry,
            providers,
            backend,
            embedder,
        })
    }

    pub fn with_remote_embedder(mut self, url: &str, timeout_s: f64) -> Self {
        self.embedder = Box::new(RemoteEmbedder::new(url, timeout_s));
        self
    }

    fn predict_scenario_for(&self, bundle: &ContextBundle) -> ScenarioCategory {
        match (&bundle.visual, self.bank.is_empty()) {
            (Some(visual), false) => {
                predict_scenario(visual, &self.bank, self.config.retrieval.k, self.embedder.as_ref())
                    .unwrap_or_else(|e| {
                        log::warn!("scenario prediction failed ({e}), using fallback");
                        ScenarioCategory(self.config.retrieval.fallback_scenario.clone())
                    })
            }
            _ => ScenarioCategory(FALLBACK_SCENARIO.to_string()),
        }
    }

    /// Replays the trace through the full pipeline and returns the run
    /// log. Deterministic for scripted backends: the same config always
    /// produces an identical log.
    pub fn replay(&self) -> Result<RunLog, PipelineError> {
        let engine = ContextEngine::new(&self.trace, &self.pois, &self.config);
        let mut scheduler = Scheduler::new(self.config.sampling);
        // Reflections are applied at the start of the next tick, never
        // within the tick that produced them.
        let mut pending_reflection: Option<bool> = None;
        let mut history: Vec<DeliveryRecord> = Vec::new();
        let mut samples = Vec::new();
        let mut invocations = Vec::new();

        let mut now = 0.0f64;
        while now < self.trace.duration_s {
            if let Some(proactive) = pending_reflection.take() {
                scheduler.apply_reflection(proactive, now);
            }
            let mut bundle = engine.sensory_bundle_at(now);
            let cue = cue_mode(&bundle.location, &bundle.motion, &bundle.audio);
            let decision = scheduler.tick(now, cue)?;
            if decision.sample {
                samples.push(now);
                if let Some(frame) = engine.latest_frame_at(now) {
                    bundle.visual = Some(extract_coarse_visual_context(frame, None)?);
                }
                let scenario = self.predict_scenario_for(&bundle);
                bundle.personas = retrieve_personas(&scenario, &self.personas);
                let prompt = assemble_prompt(
                    &bundle,
                    &bundle.personas,
                    &self.registry,
                    &self.config.reasoner.task_instructions,
                    self.config.location.max_pois,
                );
                let output =
                    match invoke_and_reason(self.backend.as_ref(), &prompt, self.config.reasoner.retry)
                    {
                        Ok(output) => output,
                        Err(ReasonerError::BackendUnavailable(reason)) => {
                            log::warn!("backend unavailable at t={now}: {reason}");
                            ReasonerOutput::sentinel(String::new())
                        }
                        Err(e) => return Err(e.into()),
                    };
                let proactive = decide_proactive(
                    &output,
                    self.config.reasoner.threshold,
                    self.config.reasoner.strict,
                );
                pending_reflection = Some(proactive);

                let mut delivered = false;
                let mut assistance = output.assistance.clone();
                if proactive {
                    for call in &output.tool_calls {
                        if validate_call(call, &self.registry, self.config.eval.strict_args).is_ok() {
                            let result = execute(call, &self.registry, &self.providers);
                            if result.status == ToolStatus::Ok {
                                assistance.push_str(&format!(" [{}: {}]", result.name, result.payload));
                            }
                        }
                    }
                    let record =
                        gate(&assistance, &history, now, &self.config.delivery, self.embedder.as_ref());
                    delivered = record.delivered;
                    history.push(record);
                }
                invocations.push(Invocation {
                    t: now,
                    proactive_score: output.proactive_score,
                    decided_proactive: proactive,
                    tool_calls: output.tool_calls,
                    assistance,
                    delivered,
                });
            }
            now += self.config.sampling.tick_s;
        }

        Ok(RunLog {
            invocations,
            samples,
            dropped_frames: 0,
            duration_s: self.trace.duration_s,
            config: self.config.snapshot(),
        })
    }

    /// Emits CoT-distillation training records: one score-5 record per
    /// annotated moment (sensory/persona text built exactly as the
    /// runtime would, thoughts from the thought backend) plus seeded
    /// score-1 negatives at `negative_ratio` per positive. Annotations
    /// without a frame inside their window are skipped with a warning.
    pub fn export_distillation(
        &self,
        thought_backend: &dyn ReasonerBackend,
        negative_ratio: f64,
    ) -> Result<Vec<DistillationRecord>, PipelineError> {
        let engine = ContextEngine::new(&self.trace, &self.pois, &self.config);
        let mut records = Vec::new();
        let annotations: Vec<(f64, crate::trace::AnnotationPayload)> = self
            .trace
            .annotations()
            .map(|(t, a)| (t, a.clone()))
            .collect();

        let make_record = |t: f64,
                               frame: &FramePayload,
                               score: i64,
                               tools: Vec<crate::tools::ToolCall>|
         -> Result<DistillationRecord, PipelineError> {
            let mut bundle = engine.sensory_bundle_at(t);
            bundle.visual = Some(extract_coarse_visual_context(frame, None)?);
            let scenario = self.predict_scenario_for(&bundle);
            bundle.personas = retrieve_personas(&scenario, &self.personas);
            let prompt = assemble_prompt(
                &bundle,
                &bundle.personas,
                &self.registry,
                &self.config.reasoner.task_instructions,
                self.config.location.max_pois,
            );
            let thoughts = thought_backend.invoke(&prompt, None)?;
            Ok(DistillationRecord {
                image_ref: frame
                    .image_ref
                    .clone()
                    .unwrap_or_else(|| frame.frame_id.clone()),
                sensory_text: render_sensory_text(&bundle, self.config.location.max_pois),
                personas_text: prompt.personas_text.clone(),
                thoughts,
                proactive_score: score,
                tool_calls: tools,
            })
        };

        let frame_near = |t: f64, window_s: f64| -> Option<&FramePayload> {
            let half = window_s / 2.0;
            self.trace
                .events
                .iter()
                .filter_map(|e| match &e.payload {
                    Payload::Frame(f) if (e.t - t).abs() <= half => Some((e.t, f)),
                    _ => None,
                })
                .min_by(|a, b| {
                    ((a.0 - t).abs()).partial_cmp(&(b.0 - t).abs()).unwrap()
                })
                .map(|(_, f)| f)
        };

        for (t, ann) in &annotations {
            match frame_near(*t, ann.window_s) {
                Some(frame) => {
                    let tools = ann
                        .tools
                        .iter()
                        .map(|g| crate::tools::ToolCall { name: g.name.clone(), args: g.args.clone() })
                        .collect();
                    records.push(make_record(*t, frame, 5, tools)?);
                }
                None => {
                    log::warn!("annotation at t={t} has no frame within its window, skipped");
                }
            }
        }

        let positives = records.len();
        let negatives_wanted = (positives as f64 * negative_ratio).round() as usize;
        if negatives_wanted > 0 && self.trace.duration_s > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
            let mut found = 0usize;
            let mut attempts = 0usize;
            while found < negatives_wanted && attempts < negatives_wanted * 100 {
                attempts += 1;
                let t = rng.gen_range(0.0..self.trace.duration_s);
                let clear = annotations
                    .iter()
                    .all(|(ann_t, ann)| (t - ann_t).abs() > ann.window_s);
                if !clear {
                    continue;
                }
                if let Some(frame) = frame_near(t, self.config.annotation.window_s) {
                    records.push(make_record(t, frame, 1, Vec::new())?);
                    found += 1;
                }
            }
        }
        Ok(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{default_mix, gen_trace, script_from_sidecar};
    use crate::persona::DEFAULT_SCENARIOS;
    use crate::tools::{ArgSpec, ToolKind, ToolSpec};

    fn test_registry() -> ToolRegistry {
        ToolRegistry::from_specs(vec![
            ToolSpec {
                name: "CityWeather".into(),
                kind: ToolKind::Retrieval,
                description: "weather".into(),
                args: vec![ArgSpec { key: "city".into(), required: true, description: String::new() }],
                comment: None,
            },
            ToolSpec {
                name: "GetDateTime".into(),
                kind: ToolKind::Retrieval,
                description: "date/time".into(),
                args: vec![],
                comment: None,
            },
        ])
        .unwrap()
    }

    fn test_bank() -> Vec<BankEntry> {
        vec![
            BankEntry {
                objects: ["shelf".to_string(), "price tag".to_string()].into_iter().collect(),
                scenario: ScenarioCategory("shopping".into()),
            },
            BankEntry {
                objects: ["bus".to_string(), "bench".to_string()].into_iter().collect(),
                scenario: ScenarioCategory("travel".into()),
            },
        ]
    }

    fn test_personas() -> PersonaStore {
        let mut store = PersonaStore::default();
        for scenario in DEFAULT_SCENARIOS {
            store.insert(crate::persona::Persona {
                id: format!("p-{scenario}"),
                scenario: ScenarioCategory(scenario.into()),
                text: format!("cares about {scenario}"),
            });
        }
        store
    }

    fn pipeline_with_script() -> Pipeline {
        let config = PipelineConfig::default();
        let (trace, sidecar) = gen_trace(&default_mix(), 42, &test_bank(), &test_registry()).unwrap();
        let backend = script_from_sidecar(&sidecar, config.eval.tolerance_s);
        let mut providers = ProviderSet::default();
        providers.add_default("CityWeather", "sunny");
        providers.add_default("GetDateTime", "2025-05-01 09:30");
        Pipeline {
            config,
            trace,
            pois: Vec::new(),
            bank: test_bank(),
            personas: test_personas(),
            registry: test_registry(),
            providers,
            backend: Box::new(backend),
            embedder: Box::new(BagOfWordsEmbedder),
        }
    }

    #[test]
    fn scripted_replay_covers_every_annotation() {
        let p = pipeline_with_script();
        let run = p.replay().unwrap();
        let tolerance = p.config.eval.tolerance_s;
        for (ann_t, _) in p.trace.annotations() {
            let covered = run
                .invocations
                .iter()
                .any(|i| i.decided_proactive && (i.t - ann_t).abs() <= tolerance);
            assert!(covered, "annotation at {ann_t} has no proactive invocation");
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let a = pipeline_with_script().replay().unwrap().to_jsonl();
        let b = pipeline_with_script().replay().unwrap().to_jsonl();
        assert_eq!(a, b);
    }

    #[test]
    fn invocations_are_subset_of_samples() {
        let run = pipeline_with_script().replay().unwrap();
        for inv in &run.invocations {
            assert!(run.samples.contains(&inv.t));
        }
    }

    struct AlwaysLow;
    impl ReasonerBackend for AlwaysLow {
        fn invoke(&self, _: &crate::reasoner::PromptBundle, _: Option<&str>) -> Result<String, ReasonerError> {
            Ok(r#"{"thoughts":"","proactive_score":1,"tool_calls":[],"assistance":"quiet"}"#.into())
        }
    }

    #[test]
    fn always_low_backend_delivers_nothing() {
        let mut p = pipeline_with_script();
        p.backend = Box::new(AlwaysLow);
        let run = p.replay().unwrap();
        assert!(run.invocations.iter().all(|i| !i.delivered));
        assert!(run.invocations.iter().all(|i| !i.decided_proactive));
    }

    #[test]
    fn distillation_emits_one_record_per_annotation() {
        let p = pipeline_with_script();
        let thought_backend = ScriptedBackend {
            entries: vec![],
            default: Some("a user browsing items".into()),
        };
        let records = p.export_distillation(&thought_backend, 0.0).unwrap();
        assert_eq!(records.len(), p.trace.annotations().count());
        assert!(records.iter().all(|r| r.proactive_score == 5));
        assert!(records.iter().all(|r| r.thoughts == "a user browsing items"));
    }

    #[test]
    fn distillation_negative_ratio_one_doubles_records() {
        let p = pipeline_with_script();
        let thought_backend = ScriptedBackend { entries: vec![], default: Some("desc".into()) };
        let records = p.export_distillation(&thought_backend, 1.0).unwrap();
        let positives = records.iter().filter(|r| r.proactive_score == 5).count();
        let negatives = records.iter().filter(|r| r.proactive_score == 1).count();
        assert_eq!(positives, p.trace.annotations().count());
        assert_eq!(negatives, positives);
        assert!(records
            .iter()
            .filter(|r| r.proactive_score == 1)
            .all(|r| r.tool_calls.is_empty()));
    }

    #[test]
    fn distillation_preserves_annotation_tools() {
        let p = pipeline_with_script();
        let thought_backend = ScriptedBackend { entries: vec![], default: Some("desc".into()) };
        let records = p.export_distillation(&thought_backend, 0.0).unwrap();
        let annotations: Vec<_> = p.trace.annotations().collect();
        for (record, (_, ann)) in records.iter().zip(annotations.iter()) {
            let names: Vec<&str> = record.tool_calls.iter().map(|c| c.name.as_str()).collect();
            let truth: Vec<&str> = ann.tools.iter().map(|t| t.name.as_str()).collect();
            assert_eq!(names, truth);
        }
    }
}
