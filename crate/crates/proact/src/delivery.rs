//! Temporal-constraint gate: suppresses proactive outputs semantically
//! similar to recently delivered assistance.

use serde::{Deserialize, Serialize};

use crate::embed::{cosine, Embedder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeliveryMode {
    /// Compare against every delivery within the time window.
    Window,
    /// Compare only against the most recent delivery within the window.
    Consecutive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeliveryConfig {
    pub sim_threshold: f64,
    pub window_s: f64,
    pub mode: DeliveryMode,
}

impl Default for DeliveryConfig {
    fn default() -> Self {
        DeliveryConfig { sim_threshold: 0.5, window_s: 300.0, mode: DeliveryMode::Window }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub t: f64,
    pub assistance: String,
    pub delivered: bool,
    pub similarity_to_prev: Option<f64>,
    pub suppressed_reason: Option<String>,
}

/// Gates one candidate against the delivery history. The candidate is
/// delivered iff its maximum similarity to the in-window deliveries
/// stays below the threshold (or there is none). Suppressed records are
/// returned for logging, never shown to the user.
pub fn gate(
    candidate: &str,
    history: &[DeliveryRecord],
    now: f64,
    config: &DeliveryConfig,
    embedder: &dyn Embedder,
) -> DeliveryRecord {
    let recent: Vec<&DeliveryRecord> = history
        .iter()
        .filter(|r| r.delivered && now - r.t <= config.window_s)
        .collect();
    let compare: Vec<&DeliveryRecord> = match config.mode {
        DeliveryMode::Window => recent,
        DeliveryMode::Consecutive => recent.last().copied().into_iter().collect(),
    };

    let mut max_sim: Option<(f64, f64)> = None; // (similarity, delivery t)
    if !compare.is_empty() {
        let candidate_emb = embedder.embed(candidate).unwrap_or_else(|e| {
            log::warn!("delivery embedder failed ({e}), treating candidate as dissimilar");
            crate::embed::Embedding::zero()
        });
        for record in compare {
            let emb = embedder
                .embed(&record.assistance)
                .unwrap_or_else(|_| crate::embed::Embedding::zero());
            let sim = cosine(&candidate_emb, &emb);
            if max_sim.map_or(true, |(best, _)| sim > best) {
                max_sim = Some((sim, record.t));
            }
        }
    }

    match max_sim {
        Some((sim, prev_t)) if sim >= config.sim_threshold => DeliveryRecord {
            t: now,
            assistance: candidate.to_string(),
            delivered: false,
            similarity_to_prev: Some(sim),
            suppressed_reason: Some(format!(
                "similarity {:.3} to assistance delivered at t={:.1} exceeds threshold {}",
                sim, prev_t, config.sim_threshold
            )),
        },
        other => DeliveryRecord {
            t: now,
            assistance: candidate.to_string(),
            delivered: true,
            similarity_to_prev: other.map(|(sim, _)| sim),
            suppressed_reason: None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::BagOfWordsEmbedder;
    use proptest::prelude::*;

    fn gate_seq(candidates: &[(&str, f64)], config: &DeliveryConfig) -> Vec<DeliveryRecord> {
        let mut history = Vec::new();
        for (text, t) in candidates {
            let record = gate(text, &history, *t, config, &BagOfWordsEmbedder);
            history.push(record);
        }
        history
    }

    #[test]
    fn first_candidate_is_delivered() {
        let records = gate_seq(&[("take the 7pm bus", 0.0)], &DeliveryConfig::default());
        assert!(records[0].delivered);
        assert_eq!(records[0].similarity_to_prev, None);
    }

    #[test]
    fn identical_candidate_within_window_is_suppressed() {
        let records = gate_seq(
            &[("take the 7pm bus", 0.0), ("take the 7pm bus", 10.0)],
            &DeliveryConfig::default(),
        );
        assert!(!records[1].delivered);
        assert!((records[1].similarity_to_prev.unwrap() - 1.0).abs() < 1e-12);
        assert!(records[1].suppressed_reason.is_some());
    }

    #[test]
    fn token_disjoint_candidate_is_delivered() {
        let records = gate_seq(
            &[("take the 7pm bus", 0.0), ("umbrella rain forecast", 10.0)],
            &DeliveryConfig::default(),
        );
        assert!(records[1].delivered);
        assert_eq!(records[1].similarity_to_prev, Some(0.0));
    }

    #[test]
    fn window_expiry_allows_redelivery() {
        let records = gate_seq(
            &[("take the 7pm bus", 0.0), ("take the 7pm bus", 301.0)],
            &DeliveryConfig::default(),
        );
        assert!(records[1].delivered);
    }

    #[test]
    fn aba_pattern_caught_by_window_mode() {
        let config = DeliveryConfig::default();
        let records = gate_seq(
            &[
                ("bus leaves at seven", 0.0),
                ("umbrella rain forecast", 10.0),
                ("bus leaves at seven", 20.0),
            ],
            &config,
        );
        assert!(!records[2].delivered, "A,B,A must not evade window suppression");

        // Consecutive-only mode compares against B alone and lets A through.
        let consecutive = DeliveryConfig { mode: DeliveryMode::Consecutive, ..config };
        let records = gate_seq(
            &[
                ("bus leaves at seven", 0.0),
                ("umbrella rain forecast", 10.0),
                ("bus leaves at seven", 20.0),
            ],
            &consecutive,
        );
        assert!(records[2].delivered);
    }

    #[test]
    fn suppressed_records_do_not_feed_future_comparisons() {
        let config = DeliveryConfig::default();
        let mut history = gate_seq(&[("alpha beta", 0.0), ("alpha beta", 5.0)], &config);
        assert!(!history[1].delivered);
        // A candidate similar only to the suppressed record is delivered.
        let r = gate("gamma delta", &history, 10.0, &config, &BagOfWordsEmbedder);
        assert!(r.delivered);
        history.push(r);
    }

    proptest! {
        #[test]
        fn idempotent_suppression(text in "[a-f]{1,6}( [a-f]{1,6}){0,5}", dt in 0.0f64..300.0) {
            let config = DeliveryConfig::default();
            let first = gate(&text, &[], 0.0, &config, &BagOfWordsEmbedder);
            prop_assert!(first.delivered);
            let second = gate(&text, &[first], dt, &config, &BagOfWordsEmbedder);
            prop_assert!(!second.delivered);
        }

        #[test]
        fn threshold_monotone(
            a in "[a-d]{1,4}( [a-d]{1,4}){0,3}",
            b in "[a-d]{1,4}( [a-d]{1,4}){0,3}",
            t1 in 0.0f64..1.0,
            t2 in 0.0f64..1.0,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let base = DeliveryConfig::default();
            let first = gate(&a, &[], 0.0, &base, &BagOfWordsEmbedder);
            let low = gate(&b, &[first.clone()], 10.0, &DeliveryConfig { sim_threshold: lo, ..base.clone() }, &BagOfWordsEmbedder);
            let high = gate(&b, &[first], 10.0, &DeliveryConfig { sim_threshold: hi, ..base }, &BagOfWordsEmbedder);
            // Raising the threshold never converts delivered into suppressed.
            if low.delivered {
                prop_assert!(high.delivered);
            }
        }
    }
}
