//! Maps detected objects to a scenario via the bundled object bank,
//! then pulls only that scenario's persona group into context.
//!
//!   cargo run --example persona_retrieval

use std::io::Cursor;
use std::path::Path;

use proact::context::CoarseVisualContext;
use proact::embed::BagOfWordsEmbedder;
use proact::persona::{predict_scenario, retrieve_personas, ScenarioSet};

fn data(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name);
    std::fs::read_to_string(path).unwrap()
}

fn main() {
    let scenarios = ScenarioSet::default();
    let bank =
        proact::persona::load_bank(Cursor::new(data("bank.jsonl").into_bytes()), &scenarios)
            .unwrap();
    let store =
        proact::persona::load_personas(Cursor::new(data("personas.jsonl").into_bytes()), &scenarios)
            .unwrap();
    println!("bank: {} entries, personas: {}", bank.len(), store.total());

    for objects in [
        vec!["shelf", "price tag", "shopping cart"],
        vec!["bus", "timetable"],
        vec!["cutting board", "onion"],
        vec![],
    ] {
        let visual = CoarseVisualContext {
            objects: objects.iter().map(|o| o.to_string()).collect(),
            frame_id: "demo".into(),
        };
        let scenario = predict_scenario(&visual, &bank, 30, &BagOfWordsEmbedder).unwrap();
        let personas = retrieve_personas(&scenario, &store);
        println!("\nobjects {objects:?} -> scenario {:?}", scenario.as_str());
        for p in &personas {
            println!("  - {}", p.text);
        }
    }
}
