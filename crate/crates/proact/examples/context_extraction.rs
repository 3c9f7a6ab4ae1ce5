//! Derives the three low-cost sensory contexts from raw readings and
//! prints the rendered text block the reasoner would see.
//!
//!   cargo run --example context_extraction

use proact::context::{
    derive_audio_context, derive_location_context, derive_motion_context, haversine_m,
    ContextBundle, Poi,
};
use proact::trace::{AudioPayload, GpsPayload};

fn main() {
    // Walking: acceleration magnitude fluctuates around gravity.
    let window = [
        [0.0, 0.0, 9.81 + 2.0],
        [0.0, 0.0, 9.81 - 2.0],
        [0.0, 0.0, 9.81 + 2.0],
        [0.0, 0.0, 9.81 - 2.0],
    ];
    let motion = derive_motion_context(&window, 0.5).unwrap();
    println!("motion: {:?} (stddev {:?})", motion.state, motion.window_stddev);

    let pois = vec![
        Poi { name: "Harbour Supermarket".into(), category: "grocery".into(), lat: 22.3001, lon: 114.1002 },
        Poi { name: "Ridge Trailhead".into(), category: "outdoors".into(), lat: 22.3100, lon: 114.1100 },
    ];
    let fix = GpsPayload { lat: 22.3000, lon: 114.1000 };
    println!(
        "distance to supermarket: {:.1} m",
        haversine_m(fix.lat, fix.lon, pois[0].lat, pois[0].lon)
    );
    let location = derive_location_context(&fix, &pois, 100.0);
    println!("near a POI: {} ({} listed)", location.near_poi, location.nearby.len());

    let audio = derive_audio_context(&[AudioPayload {
        vad: true,
        transcript: Some("should we get eggs on the way home".into()),
    }]);

    let bundle = ContextBundle {
        at_t: 0.0,
        location,
        motion,
        audio,
        visual: None,
        personas: Vec::new(),
    };
    println!("\n{}", proact::context::render_sensory_text(&bundle, 5));
}
