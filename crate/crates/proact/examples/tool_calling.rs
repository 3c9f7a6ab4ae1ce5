//! Tool registry walkthrough: validation, fixture-backed retrieval, and
//! the execution-tool confirmation barrier.
//!
//!   cargo run --example tool_calling

use std::io::Cursor;
use std::path::Path;

use proact::tools::{execute, validate_call, ToolCall};

fn data(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name);
    std::fs::read_to_string(path).unwrap()
}

fn call(name: &str, args: &[(&str, &str)]) -> ToolCall {
    ToolCall {
        name: name.into(),
        args: args.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
    }
}

fn main() {
    let registry =
        proact::tools::load_registry(Cursor::new(data("tools.jsonl").into_bytes())).unwrap();
    let providers =
        proact::tools::load_fixtures(Cursor::new(data("fixtures.jsonl").into_bytes())).unwrap();
    println!("{} tools registered\n", registry.specs.len());

    // A well-formed retrieval call, served from a fixture.
    let weather = call("CityWeather", &[("city", "Hong Kong")]);
    let result = execute(&weather, &registry, &providers);
    println!("CityWeather -> {:?}: {}", result.status, result.payload);

    // Execution-kind tools never run without user confirmation, even
    // when a fixture exists for them.
    let email = call("SendEmail", &[("to", "sam@example.com"), ("subject", "running late")]);
    let result = execute(&email, &registry, &providers);
    println!("SendEmail -> {:?}: {}", result.status, result.payload);

    // Validation catches unknown tools, missing args, and extras.
    for bad in [
        call("TimeMachine", &[]),
        call("CityWeather", &[]),
        call("GetDateTime", &[("timezone", "UTC")]),
    ] {
        match validate_call(&bad, &registry, true) {
            proact::tools::ValidationResult::Ok => {
                println!("{} unexpectedly valid", bad.name)
            }
            proact::tools::ValidationResult::Errors(violations) => {
                println!("{} rejected: {violations:?}", bad.name)
            }
        }
    }
}
