//! The temporal constraint in action: near-duplicate assistance within
//! the window is suppressed, fresh content goes through.
//!
//!   cargo run --example delivery_gating

use proact::delivery::{gate, DeliveryConfig};
use proact::embed::BagOfWordsEmbedder;

fn main() {
    let config = DeliveryConfig::default(); // 0.5 similarity, 300 s window
    let embedder = BagOfWordsEmbedder;
    let mut history = Vec::new();

    let candidates = [
        (0.0, "the next bus to town leaves in 4 minutes"),
        (20.0, "the next bus to town leaves in 3 minutes"), // near-duplicate
        (40.0, "rain expected this evening, take an umbrella"),
        (60.0, "the next bus to town leaves in 2 minutes"), // still a repeat
        (400.0, "the next bus to town leaves in 5 minutes"), // window expired
    ];

    for (t, text) in candidates {
        let record = gate(text, &history, t, &config, &embedder);
        let verdict = if record.delivered { "DELIVER " } else { "suppress" };
        match (&record.similarity_to_prev, &record.suppressed_reason) {
            (Some(sim), Some(reason)) => println!("t={t:>5}  {verdict}  sim {sim:.2}  ({reason})"),
            (Some(sim), None) => println!("t={t:>5}  {verdict}  sim {sim:.2}  {text:?}"),
            _ => println!("t={t:>5}  {verdict}  first delivery  {text:?}"),
        }
        history.push(record);
    }
}
