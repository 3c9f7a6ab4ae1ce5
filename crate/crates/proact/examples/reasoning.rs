//! Assembles a full prompt, runs it through a scripted backend, and
//! shows the parse/threshold decision, including recovery from a
//! malformed reply.
//!
//!   cargo run --example reasoning

use std::io::Cursor;
use std::path::Path;

use proact::context::{AudioContext, ContextBundle, LocationContext, MotionContext};
use proact::persona::Persona;
use proact::reasoner::{
    assemble_prompt, decide_proactive, invoke_and_reason, ScriptedBackend,
    DEFAULT_TASK_INSTRUCTIONS,
};
use proact::trace::MotionState;

fn main() {
    let tools_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/tools.jsonl");
    let registry = proact::tools::load_registry(Cursor::new(
        std::fs::read_to_string(tools_path).unwrap().into_bytes(),
    ))
    .unwrap();

    let bundle = ContextBundle {
        at_t: 42.0,
        location: LocationContext::empty(),
        motion: MotionContext { state: MotionState::Moving, window_stddev: Some(1.8) },
        audio: AudioContext {
            conversation_active: true,
            transcript_window: vec!["we still need eggs".into()],
        },
        visual: Some(proact::context::CoarseVisualContext {
            objects: ["shelf".to_string(), "price tag".to_string()].into_iter().collect(),
            frame_id: "f42".into(),
        }),
        personas: Vec::new(),
    };
    let personas = vec![Persona {
        id: "shopping-list".into(),
        scenario: proact::persona::ScenarioCategory("shopping".into()),
        text: "Keeps a running grocery list and appreciates reminders.".into(),
    }];
    let prompt = assemble_prompt(&bundle, &personas, &registry, DEFAULT_TASK_INSTRUCTIONS, 5);
    println!("=== prompt ===\n{}\n", prompt.render());

    // A script with one canned reply for this frame.
    let script = concat!(
        r#"{"match": {"frame_id": "f42"}, "raw": "{\"thoughts\": \"user is shopping and mentioned eggs\", \"proactive_score\": 4, \"tool_calls\": [{\"name\": \"PriceCompare\", \"args\": {\"product\": \"eggs\"}}], \"assistance\": \"Eggs are on your list; this store has them.\"}"}"#,
        "\n",
        r#"{"default": "{\"thoughts\": \"nothing notable\", \"proactive_score\": 1, \"tool_calls\": [], \"assistance\": \"\"}"}"#,
        "\n",
    );
    let backend = ScriptedBackend::load(Cursor::new(script.as_bytes())).unwrap();

    let output = invoke_and_reason(&backend, &prompt, 1).unwrap();
    println!("score: {} thoughts: {}", output.proactive_score, output.thoughts);
    println!("proactive (threshold 3): {}", decide_proactive(&output, 3, false));
    for call in &output.tool_calls {
        println!("tool call: {} {:?}", call.name, call.args);
    }

    // A backend that never produces valid JSON falls back to the sentinel.
    let garbled = ScriptedBackend { entries: vec![], default: Some("¯\\_(ツ)_/¯".into()) };
    let output = invoke_and_reason(&garbled, &prompt, 1).unwrap();
    println!(
        "\ngarbled backend -> sentinel score {} proactive {}",
        output.proactive_score,
        decide_proactive(&output, 3, false)
    );
}
