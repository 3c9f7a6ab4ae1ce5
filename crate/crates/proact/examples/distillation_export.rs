//! Builds chain-of-thought fine-tuning records from a generated trace:
//! one positive per annotated moment plus seeded negatives.
//!
//!   cargo run --example distillation_export

use std::io::Cursor;
use std::path::Path;

use proact::config::PipelineConfig;
use proact::embed::BagOfWordsEmbedder;
use proact::gen::{default_mix, gen_trace, script_from_sidecar};
use proact::pipeline::Pipeline;
use proact::reasoner::ScriptedBackend;

fn data(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name);
    std::fs::read_to_string(path).unwrap()
}

fn main() {
    let config = PipelineConfig::default();
    let scenarios = proact::persona::ScenarioSet::default();
    let bank =
        proact::persona::load_bank(Cursor::new(data("bank.jsonl").into_bytes()), &scenarios)
            .unwrap();
    let registry =
        proact::tools::load_registry(Cursor::new(data("tools.jsonl").into_bytes())).unwrap();
    let (trace, sidecar) = gen_trace(&default_mix(), 42, &bank, &registry).unwrap();

    let pipeline = Pipeline {
        backend: Box::new(script_from_sidecar(&sidecar, config.eval.tolerance_s)),
        config,
        trace,
        pois: Vec::new(),
        bank,
        personas: proact::persona::load_personas(
            Cursor::new(data("personas.jsonl").into_bytes()),
            &scenarios,
        )
        .unwrap(),
        registry,
        providers: Default::default(),
        embedder: Box::new(BagOfWordsEmbedder),
    };

    // In production the thoughts come from a strong teacher model; here a
    // canned description stands in.
    let teacher = ScriptedBackend {
        entries: vec![],
        default: Some("the user appears to need help with the item in view".into()),
    };
    let records = pipeline.export_distillation(&teacher, 1.0).unwrap();

    let positives = records.iter().filter(|r| r.proactive_score == 5).count();
    println!("{} records ({} positive, {} negative)\n", records.len(), positives, records.len() - positives);
    for record in records.iter().take(2) {
        println!("{}\n", serde_json::to_string_pretty(record).unwrap());
    }
}
