//! Full loop at desk scale: generate a synthetic day fragment, replay
//! it through the pipeline with a scripted backend, and score the run.
//!
//!   cargo run --example end_to_end

use std::io::Cursor;
use std::path::Path;

use proact::config::PipelineConfig;
use proact::embed::BagOfWordsEmbedder;
use proact::eval::{evaluate, run_baseline, recall_sampling, sampling_ratio, BaselineParams};
use proact::gen::{default_mix, gen_trace, script_from_sidecar};
use proact::pipeline::Pipeline;

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
    let personas =
        proact::persona::load_personas(Cursor::new(data("personas.jsonl").into_bytes()), &scenarios)
            .unwrap();
    let registry =
        proact::tools::load_registry(Cursor::new(data("tools.jsonl").into_bytes())).unwrap();
    let providers =
        proact::tools::load_fixtures(Cursor::new(data("fixtures.jsonl").into_bytes())).unwrap();

    let (trace, sidecar) = gen_trace(&default_mix(), 42, &bank, &registry).unwrap();
    println!(
        "generated {} events over {} s with {} annotated moments",
        trace.events.len(),
        sidecar.duration_s,
        sidecar.annotations.len()
    );

    let backend = script_from_sidecar(&sidecar, config.eval.tolerance_s);
    let pipeline = Pipeline {
        config,
        trace,
        pois: Vec::new(),
        bank,
        personas,
        registry,
        providers,
        backend: Box::new(backend),
        embedder: Box::new(BagOfWordsEmbedder),
    };

    let run = pipeline.replay().unwrap();
    let proactive = run.invocations.iter().filter(|i| i.decided_proactive).count();
    let delivered = run.invocations.iter().filter(|i| i.delivered).count();
    println!(
        "replay: {} samples, {} invocations, {proactive} proactive, {delivered} delivered",
        run.samples.len(),
        run.invocations.len()
    );

    let report = evaluate(
        &run,
        &pipeline.trace,
        &pipeline.registry,
        pipeline.config.eval.tolerance_s,
        pipeline.config.eval.strict_args,
    )
    .unwrap();
    println!(
        "\nacc_p {:.3}  md {:.3}  f1 {:.3}  acc_args {:.3}  recall {:.3}  ratio {:.3}",
        report.acc_p, report.md, report.f1, report.acc_args, report.recall, report.sampling_ratio
    );

    println!("\nbaselines (recall / ratio):");
    let params = BaselineParams::default();
    for name in ["periodic-5", "periodic-20", "periodic-60", "motion-trigger", "conversation-trigger", "diff-filter"] {
        let samples = run_baseline(name, &pipeline.trace, &params).unwrap();
        let recall = recall_sampling(&samples, &pipeline.trace, 5.0).unwrap();
        let ratio = sampling_ratio(&samples, pipeline.trace.duration_s);
        println!("  {name:<20} {recall:.2} / {ratio:.3}  ({} samples)", samples.len());
    }
}
