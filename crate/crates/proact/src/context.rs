//! Hierarchical sensory-context extraction: location context from an
//! offline POI table, motion context from IMU windows, audio context
//! from VAD/transcript events, and the coarse visual object set from
//! frame events. All operations are pure.

use std::collections::BTreeSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persona::Persona;
use crate::trace::{AudioPayload, FramePayload, GpsPayload, MotionState};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("no motion samples")]
    NoMotionSamples,
    #[error("no detector backend")]
    NoDetectorBackend,
    #[error("detector failed: {0}")]
    Detector(String),
    #[error("poi table line {line}: {reason}")]
    PoiTable { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub name: String,
    pub category: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NearbyPoi {
    pub poi: Poi,
    pub distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocationContext {
    /// POIs within 5x the proximity radius, sorted ascending by distance.
    pub nearby: Vec<NearbyPoi>,
    /// True iff any POI lies within the proximity radius itself.
    pub near_poi: bool,
}

impl LocationContext {
    pub fn empty() -> Self {
        LocationContext { nearby: Vec::new(), near_poi: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MotionContext {
    pub state: MotionState,
    /// Std-dev of acceleration magnitude over the window; absent when the
    /// state came precomputed from the trace.
    pub window_stddev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AudioContext {
    pub conversation_active: bool,
    pub transcript_window: Vec<String>,
}

impl AudioContext {
    pub fn silent() -> Self {
        AudioContext { conversation_active: false, transcript_window: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoarseVisualContext {
    /// Lowercased, deduplicated object labels.
    pub objects: BTreeSet<String>,
    pub frame_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextBundle {
    pub at_t: f64,
    pub location: LocationContext,
    pub motion: MotionContext,
    pub audio: AudioContext,
    pub visual: Option<CoarseVisualContext>,
    pub personas: Vec<Persona>,
}

/// Great-circle (haversine) distance in meters.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().asin()
}

/// Classifies motion over an acceleration window: moving iff the
/// population std-dev of |accel| exceeds the threshold.
pub fn derive_motion_context(
    accel_window: &[[f64; 3]],
    threshold: f64,
) -> Result<MotionContext, ContextError> {
    if accel_window.is_empty() {
        return Err(ContextError::NoMotionSamples);
    }
    let mags: Vec<f64> = accel_window
        .iter()
        .map(|a| (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt())
        .collect();
    let mean = mags.iter().sum::<f64>() / mags.len() as f64;
    let var = mags.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / mags.len() as f64;
    let stddev = var.sqrt();
    let state = if stddev > threshold { MotionState::Moving } else { MotionState::Static };
    Ok(MotionContext { state, window_stddev: Some(stddev) })
}

/// Pass-through for traces carrying a precomputed motion state.
pub fn precomputed_motion_context(state: MotionState) -> MotionContext {
    MotionContext { state, window_stddev: None }
}

/// Lists POIs within 5x `radius_m` sorted ascending by distance (stable
/// on ties); `near_poi` fires within `radius_m` itself.
pub fn derive_location_context(fix: &GpsPayload, pois: &[Poi], radius_m: f64) -> LocationContext {
    let mut nearby: Vec<NearbyPoi> = pois
        .iter()
        .map(|poi| NearbyPoi {
            distance_m: haversine_m(fix.lat, fix.lon, poi.lat, poi.lon),
            poi: poi.clone(),
        })
        .filter(|n| n.distance_m <= 5.0 * radius_m)
        .collect();
    nearby.sort_by(|a, b| a.distance_m.partial_cmp(&b.distance_m).unwrap());
    let near_poi = nearby.iter().any(|n| n.distance_m <= radius_m);
    LocationContext { nearby, near_poi }
}

/// Folds the audio events of the trailing window (already in time order)
/// into a conversation flag plus the transcripts in time order.
pub fn derive_audio_context(audio_events: &[AudioPayload]) -> AudioContext {
    let conversation_active = audio_events.iter().any(|a| a.vad);
    let transcript_window = audio_events
        .iter()
        .filter_map(|a| a.transcript.clone())
        .collect();
    AudioContext { conversation_active, transcript_window }
}

pub trait ObjectDetector: Send + Sync {
    fn detect(&self, image_ref: &str) -> Result<Vec<String>, ContextError>;
}

/// Builds the coarse visual context from a frame. Trace-provided labels
/// are the default desk-scale detector; a real detector backend may be
/// plugged in for frames carrying only an image_ref.
pub fn extract_coarse_visual_context(
    frame: &FramePayload,
    detector: Option<&dyn ObjectDetector>,
) -> Result<CoarseVisualContext, ContextError> {
    let labels = match (&frame.objects, &frame.image_ref) {
        (Some(objects), _) => objects.clone(),
        (None, Some(image_ref)) => match detector {
            Some(d) => d.detect(image_ref)?,
            None => return Err(ContextError::NoDetectorBackend),
        },
        (None, None) => return Err(ContextError::NoDetectorBackend),
    };
    let objects = labels.iter().map(|l| l.to_lowercase()).collect();
    Ok(CoarseVisualContext { objects, frame_id: frame.frame_id.clone() })
}

/// Deterministic text rendering of the sensory contexts, used verbatim in
/// prompt assembly. At most `max_pois` nearest POIs are listed.
pub fn render_sensory_text(bundle: &ContextBundle, max_pois: usize) -> String {
    let motion = format!("Motion: {}.", bundle.motion.state);
    let location = if bundle.location.nearby.is_empty() {
        "Location: no nearby POIs.".to_string()
    } else {
        let listed: Vec<String> = bundle
            .location
            .nearby
            .iter()
            .take(max_pois)
            .map(|n| format!("{} ({} m)", n.poi.name, n.distance_m.round() as i64))
            .collect();
        format!("Location: {}.", listed.join(", "))
    };
    let audio = if !bundle.audio.conversation_active && bundle.audio.transcript_window.is_empty() {
        "Audio: no conversation.".to_string()
    } else {
        let mut line = "Audio: conversation active.".to_string();
        if !bundle.audio.transcript_window.is_empty() {
            let quoted: Vec<String> = bundle
                .audio
                .transcript_window
                .iter()
                .map(|t| format!("\"{}\"", t))
                .collect();
            line.push_str(&format!(" Transcripts: {}.", quoted.join(" | ")));
        }
        line
    };
    format!("{} {} {}", motion, location, audio)
}

/// Loads the offline POI table (one JSON object per line).
pub fn load_pois<R: BufRead>(source: R) -> Result<Vec<Poi>, ContextError> {
    let mut pois = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let poi: Poi = serde_json::from_str(&line).map_err(|e| ContextError::PoiTable {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        if poi.name.is_empty() {
            return Err(ContextError::PoiTable { line: idx + 1, reason: "empty name".into() });
        }
        if !(-90.0..=90.0).contains(&poi.lat) || !(-180.0..=180.0).contains(&poi.lon) {
            return Err(ContextError::PoiTable {
                line: idx + 1,
                reason: "coordinates out of range".into(),
            });
        }
        pois.push(poi);
    }
    Ok(pois)
}
