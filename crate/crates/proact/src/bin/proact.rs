use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use proact::config::PipelineConfig;
use proact::eval::{
    evaluate, recall_sampling, run_baseline, sampling_ratio, BaselineParams, BaselineResult, RunLog,
};
use proact::gen::{default_mix, gen_trace, script_from_sidecar, script_to_jsonl, MixSegment};
use proact::pipeline::{backend_from_spec, Pipeline};
use proact::trace::{parse_trace, validate_trace};

#[derive(Parser)]
#[command(name = "proact", about = "Trace-driven proactive assistant pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace (plus sidecar ground truth and a
    /// matching reasoner script) from a scenario mix.
    GenTrace {
        /// JSON file holding an array of {scenario, duration_s, active}
        /// segments; omitted = built-in default mix.
        #[arg(long)]
        mix: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output trace path (JSONL).
        #[arg(long)]
        out: PathBuf,
        /// Sidecar output path; defaults to <out>.sidecar.json.
        #[arg(long)]
        sidecar: Option<PathBuf>,
        /// Reasoner script output path; defaults to <out>.script.jsonl.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Config supplying the bank/tools the generator draws from.
        #[arg(long)]
        config: PathBuf,
    },
    /// Replay a trace through the full pipeline and write the run log.
    Replay {
        #[arg(long)]
        config: PathBuf,
        /// Run-log output path (JSONL).
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a run log against sidecar ground truth.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Run log produced by `replay`.
        #[arg(long)]
        run: PathBuf,
        /// Ground-truth trace (its annotation events are the truth).
        #[arg(long)]
        truth: PathBuf,
        /// Report output path (JSON); stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export chain-of-thought distillation records for annotated moments.
    ExportDistill {
        #[arg(long)]
        config: PathBuf,
        /// Backend spec for generating thoughts (scripted:<path> or
        /// remote:<url>); defaults to the reasoner backend.
        #[arg(long)]
        thoughts: Option<String>,
        /// Negatives emitted per positive record.
        #[arg(long, default_value_t = 1.0)]
        negative_ratio: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a trace file for structural problems.
    Validate {
        #[arg(long)]
        trace: PathBuf,
        /// Report sensor gaps longer than this many seconds.
        #[arg(long, default_value_t = 10.0)]
        gap_threshold_s: f64,
    },
}

fn open(path: &PathBuf) -> std::io::Result<BufReader<std::fs::File>> {
    Ok(BufReader::new(std::fs::File::open(path)?))
}

fn write_file(path: &PathBuf, contents: &str) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(contents.as_bytes())
}

/// 0 = ok, 1 = usage, 2 = validation failure, 3 = runtime failure.
fn run(cli: Cli) -> Result<(), (u8, String)> {
    let validation = |e: String| (2u8, e);
    let runtime = |e: String| (3u8, e);
    match cli.command {
        Command::GenTrace { mix, seed, out, sidecar, script, config } => {
            let config = PipelineConfig::load(&config).map_err(|e| validation(e.to_string()))?;
            let mix: Vec<MixSegment> = match mix {
                Some(path) => {
                    let text =
                        std::fs::read_to_string(&path).map_err(|e| runtime(e.to_string()))?;
                    serde_json::from_str(&text).map_err(|e| validation(e.to_string()))?
                }
                None => default_mix(),
            };
            let bank = match &config.paths.bank {
                Some(path) => proact::persona::load_bank(
                    open(path).map_err(|e| runtime(e.to_string()))?,
                    &proact::persona::ScenarioSet::default(),
                )
                .map_err(|e| validation(e.to_string()))?,
                None => Vec::new(),
            };
            let registry = match &config.paths.tools {
                Some(path) => proact::tools::load_registry(
                    open(path).map_err(|e| runtime(e.to_string()))?,
                )
                .map_err(|e| validation(e.to_string()))?,
                None => proact::tools::ToolRegistry::default(),
            };
            let (trace, side) =
                gen_trace(&mix, seed, &bank, &registry).map_err(|e| runtime(e.to_string()))?;
            write_file(&out, &trace.serialize_to_string())
                .map_err(|e| runtime(e.to_string()))?;
            let sidecar_path =
                sidecar.unwrap_or_else(|| out.with_extension("sidecar.json"));
            write_file(
                &sidecar_path,
                &serde_json::to_string_pretty(&side).expect("sidecar serializes"),
            )
            .map_err(|e| runtime(e.to_string()))?;
            let script_path = script.unwrap_or_else(|| out.with_extension("script.jsonl"));
            let scripted = script_from_sidecar(&side, config.eval.tolerance_s);
            write_file(&script_path, &script_to_jsonl(&scripted))
                .map_err(|e| runtime(e.to_string()))?;
            println!(
                "wrote {} ({} events, {}s), sidecar {}, script {}",
                out.display(),
                trace.events.len(),
                side.duration_s,
                sidecar_path.display(),
                script_path.display()
            );
            Ok(())
        }
        Command::Replay { config, out } => {
            let config = PipelineConfig::load(&config).map_err(|e| validation(e.to_string()))?;
            let pipeline = Pipeline::from_config(config).map_err(|e| validation(e.to_string()))?;
            let run = pipeline.replay().map_err(|e| runtime(e.to_string()))?;
            write_file(&out, &run.to_jsonl()).map_err(|e| runtime(e.to_string()))?;
            let proactive = run.invocations.iter().filter(|i| i.decided_proactive).count();
            let delivered = run.invocations.iter().filter(|i| i.delivered).count();
            println!(
                "replayed {}s: {} samples, {} invocations ({} proactive, {} delivered) -> {}",
                run.duration_s,
                run.samples.len(),
                run.invocations.len(),
                proactive,
                delivered,
                out.display()
            );
            Ok(())
        }
        Command::Eval { config, run: run_path, truth, out } => {
            let config = PipelineConfig::load(&config).map_err(|e| validation(e.to_string()))?;
            let run = RunLog::from_jsonl(open(&run_path).map_err(|e| runtime(e.to_string()))?)
                .map_err(|e| validation(e.to_string()))?;
            let truth_trace = parse_trace(open(&truth).map_err(|e| runtime(e.to_string()))?)
                .map_err(|e| validation(e.to_string()))?;
            let registry = match &config.paths.tools {
                Some(path) => proact::tools::load_registry(
                    open(path).map_err(|e| runtime(e.to_string()))?,
                )
                .map_err(|e| validation(e.to_string()))?,
                None => proact::tools::ToolRegistry::default(),
            };
            let mut report = evaluate(
                &run,
                &truth_trace,
                &registry,
                config.eval.tolerance_s,
                config.eval.strict_args,
            )
            .map_err(|e| validation(e.to_string()))?;
            let params = BaselineParams::default();
            for name in [
                "periodic-5",
                "periodic-20",
                "periodic-60",
                "motion-trigger",
                "conversation-trigger",
                "diff-filter",
            ] {
                let samples = run_baseline(name, &truth_trace, &params)
                    .map_err(|e| runtime(e.to_string()))?;
                let recall =
                    recall_sampling(&samples, &truth_trace, config.eval.tolerance_s).ok();
                report.baselines.push(BaselineResult {
                    name: name.to_string(),
                    recall,
                    sampling_ratio: sampling_ratio(&samples, truth_trace.duration_s),
                    sample_count: samples.len(),
                });
            }
            let rendered = serde_json::to_string_pretty(&report).expect("report serializes");
            match out {
                Some(path) => {
                    write_file(&path, &rendered).map_err(|e| runtime(e.to_string()))?;
                    println!("wrote report to {}", path.display());
                }
                None => println!("{rendered}"),
            }
            Ok(())
        }
        Command::ExportDistill { config, thoughts, negative_ratio, out } => {
            let config = PipelineConfig::load(&config).map_err(|e| validation(e.to_string()))?;
            let model = config.reasoner.model.clone();
            let timeout_s = config.reasoner.timeout_s;
            let backend_spec = thoughts.unwrap_or_else(|| config.reasoner.backend.clone());
            let pipeline = Pipeline::from_config(config).map_err(|e| validation(e.to_string()))?;
            let thought_backend = backend_from_spec(&backend_spec, &model, timeout_s)
                .map_err(|e| validation(e.to_string()))?;
            let records = pipeline
                .export_distillation(thought_backend.as_ref(), negative_ratio)
                .map_err(|e| runtime(e.to_string()))?;
            let mut buffer = String::new();
            for record in &records {
                buffer.push_str(&serde_json::to_string(record).expect("record serializes"));
                buffer.push('\n');
            }
            write_file(&out, &buffer).map_err(|e| runtime(e.to_string()))?;
            println!("wrote {} distillation records to {}", records.len(), out.display());
            Ok(())
        }
        Command::Validate { trace, gap_threshold_s } => {
            let parsed =
                parse_trace(open(&trace).map_err(|e| runtime(e.to_string()))?).map_err(|e| {
                    validation(format!("trace failed validation: {e}"))
                })?;
            let report = validate_trace(&parsed, gap_threshold_s);
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            if report.ok {
                Ok(())
            } else {
                Err(validation("trace failed validation (see report above)".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    // Clap exits with 2 on usage errors by default; this tool reserves 2
    // for validation failures, so usage problems are remapped to 1.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            // --help / --version render to stdout and exit cleanly.
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
