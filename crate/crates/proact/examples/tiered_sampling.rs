//! Shows the dual-rate sampler reacting to cheap-sensor cues and to
//! reflection from the reasoner.
//!
//!   cargo run --example tiered_sampling

use proact::scheduler::{Mode, SamplingConfig, Scheduler};

fn main() {
    let config = SamplingConfig::default(); // 5 s high / 60 s low
    let mut scheduler = Scheduler::new(config);

    // Cue pattern: idle for 2 min, then 1 min of activity, then idle.
    let cue_at = |t: f64| if (120.0..180.0).contains(&t) { Mode::High } else { Mode::Low };

    let mut samples = Vec::new();
    let duration = 300.0;
    let mut t = 0.0;
    while t < duration {
        let decision = scheduler.tick(t, cue_at(t)).unwrap();
        if decision.sample {
            samples.push(t);
            // Pretend the reasoner found something during the active minute.
            scheduler.apply_reflection(cue_at(t) == Mode::High, t);
        }
        t += config.tick_s;
    }

    println!("sampled {} frames over {duration} s:", samples.len());
    println!("  {samples:?}");
    println!(
        "ratio vs 1 s periodic: {:.3}",
        proact::eval::sampling_ratio(&samples, duration)
    );
    println!(
        "ratio vs 5 s periodic: {:.3}",
        samples.len() as f64 / (duration / 5.0)
    );
}
