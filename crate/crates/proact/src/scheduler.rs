//! On-demand tiered perception: always-on cue evaluation, dual-mode
//! sampling intervals, agent-reflection override, and the per-tick
//! sampling decision.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{AudioContext, LocationContext, MotionContext};
use crate::trace::MotionState;

#[derive(Debug, Error)]
pub enum SchedulerError {
    #[error("time went backwards: {now} < {last}")]
    TimeWentBackwards { now: f64, last: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub high_interval_s: f64,
    pub low_interval_s: f64,
    pub tick_s: f64,
    pub reflection_ttl_s: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            high_interval_s: 5.0,
            low_interval_s: 60.0,
            tick_s: 1.0,
            reflection_ttl_s: 60.0,
        }
    }
}

impl SamplingConfig {
    pub fn interval(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Low => self.low_interval_s,
            Mode::High => self.high_interval_s,
        }
    }
}

/// The last reasoner decision fed back into the sampler, valid for
/// `ttl_s` seconds after `set_at`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    pub proactive: bool,
    pub set_at: f64,
    pub ttl_s: f64,
}

impl Reflection {
    pub fn valid_at(&self, now: f64) -> bool {
        now - self.set_at <= self.ttl_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickDecision {
    pub sample: bool,
    pub mode: Mode,
}

/// High rate fires when the user is moving, near a POI, or in a
/// conversation.
pub fn cue_mode(location: &LocationContext, motion: &MotionContext, audio: &AudioContext) -> Mode {
    if motion.state == MotionState::Moving || location.near_poi || audio.conversation_active {
        Mode::High
    } else {
        Mode::Low
    }
}

/// OR-combination: high wins whenever either the low-cost cues or a
/// still-valid proactive reflection asks for it.
pub fn combine_modes(cue: Mode, reflection: Option<&Reflection>, now: f64) -> Mode {
    let reflected_high = reflection.map_or(false, |r| r.valid_at(now) && r.proactive);
    if cue == Mode::High || reflected_high {
        Mode::High
    } else {
        Mode::Low
    }
}

#[derive(Debug, Clone, Default)]
pub struct Scheduler {
    pub config: SamplingConfig,
    pub last_sample_t: Option<f64>,
    pub reflection: Option<Reflection>,
    pub current_mode: Option<Mode>,
    last_now: Option<f64>,
}

impl Scheduler {
    pub fn new(config: SamplingConfig) -> Self {
        Scheduler { config, ..Default::default() }
    }

    /// One scheduler tick. Mode changes take effect immediately; a sample
    /// fires when the interval of the current mode has elapsed since the
    /// last sample (always on the first tick).
    pub fn tick(&mut self, now: f64, cue: Mode) -> Result<TickDecision, SchedulerError> {
        if let Some(last) = self.last_now {
            if now < last {
                return Err(SchedulerError::TimeWentBackwards { now, last });
            }
        }
        self.last_now = Some(now);
        let mode = combine_modes(cue, self.reflection.as_ref(), now);
        self.current_mode = Some(mode);
        let sample = match self.last_sample_t {
            None => true,
            Some(last) => now - last >= self.config.interval(mode),
        };
        if sample {
            self.last_sample_t = Some(now);
        }
        Ok(TickDecision { sample, mode })
    }

    /// Records the latest reasoner decision; replaces any previous
    /// reflection.
    pub fn apply_reflection(&mut self, proactive: bool, now: f64) {
        self.reflection = Some(Reflection {
            proactive,
            set_at: now,
            ttl_s: self.config.reflection_ttl_s,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx(moving: bool, near_poi: bool, conversation: bool) -> (LocationContext, MotionContext, AudioContext) {
        (
            LocationContext { nearby: vec![], near_poi },
            MotionContext {
                state: if moving { MotionState::Moving } else { MotionState::Static },
                window_stddev: None,
            },
            AudioContext { conversation_active: conversation, transcript_window: vec![] },
        )
    }

    #[test]
    fn all_triggers_false_is_low() {
        let (l, m, a) = ctx(false, false, false);
        assert_eq!(cue_mode(&l, &m, &a), Mode::Low);
    }

    #[test]
    fn any_single_trigger_is_high() {
        for (moving, near, conv) in [(true, false, false), (false, true, false), (false, false, true)] {
            let (l, m, a) = ctx(moving, near, conv);
            assert_eq!(cue_mode(&l, &m, &a), Mode::High);
        }
    }

    #[test]
    fn valid_proactive_reflection_forces_high() {
        let r = Reflection { proactive: true, set_at: 10.0, ttl_s: 60.0 };
        assert_eq!(combine_modes(Mode::Low, Some(&r), 30.0), Mode::High);
    }

    #[test]
    fn expired_reflection_is_ignored() {
        let r = Reflection { proactive: true, set_at: 10.0, ttl_s: 60.0 };
        assert_eq!(combine_modes(Mode::Low, Some(&r), 70.5), Mode::Low);
    }

    #[test]
    fn cue_high_wins_over_non_proactive_reflection() {
        // OR-combination: the reflection never forces low.
        let r = Reflection { proactive: false, set_at: 10.0, ttl_s: 60.0 };
        assert_eq!(combine_modes(Mode::High, Some(&r), 20.0), Mode::High);
    }

    #[test]
    fn first_tick_always_samples() {
        let mut s = Scheduler::new(SamplingConfig::default());
        let d = s.tick(0.0, Mode::Low).unwrap();
        assert!(d.sample);
    }

    #[test]
    fn high_mode_respects_five_second_interval() {
        let mut s = Scheduler::new(SamplingConfig::default());
        assert!(s.tick(10.0, Mode::High).unwrap().sample);
        assert!(!s.tick(12.0, Mode::High).unwrap().sample);
        assert!(s.tick(15.0, Mode::High).unwrap().sample);
    }

    #[test]
    fn low_to_high_switch_fires_promptly() {
        let mut s = Scheduler::new(SamplingConfig::default());
        assert!(s.tick(70.0, Mode::Low).unwrap().sample);
        // Emulate a last sample at t=70, then a switch at t=100: the 30 s
        // already elapsed exceed the 5 s high interval.
        assert!(!s.tick(99.0, Mode::Low).unwrap().sample);
        let d = s.tick(100.0, Mode::High).unwrap();
        assert!(d.sample);
        assert_eq!(d.mode, Mode::High);
    }

    #[test]
    fn time_going_backwards_errors() {
        let mut s = Scheduler::new(SamplingConfig::default());
        s.tick(5.0, Mode::Low).unwrap();
        assert!(matches!(
            s.tick(4.0, Mode::Low),
            Err(SchedulerError::TimeWentBackwards { .. })
        ));
    }

    #[test]
    fn reflection_valid_through_ttl() {
        let mut s = Scheduler::new(SamplingConfig::default());
        s.apply_reflection(true, 50.0);
        let r = s.reflection.unwrap();
        assert!(r.valid_at(110.0));
        assert!(!r.valid_at(110.1));
    }

    #[test]
    fn second_reflection_replaces_first() {
        let mut s = Scheduler::new(SamplingConfig::default());
        s.apply_reflection(true, 10.0);
        s.apply_reflection(false, 20.0);
        let r = s.reflection.unwrap();
        assert!(!r.proactive);
        assert_eq!(r.set_at, 20.0);
    }

    #[test]
    fn non_proactive_reflection_never_forces_high() {
        let mut s = Scheduler::new(SamplingConfig::default());
        s.apply_reflection(false, 0.0);
        s.tick(0.0, Mode::Low).unwrap();
        for t in 1..59 {
            let d = s.tick(t as f64, Mode::Low).unwrap();
            assert!(!d.sample, "unexpected sample at t={t}");
            assert_eq!(d.mode, Mode::Low);
        }
    }

    fn run(config: SamplingConfig, cues: &[Mode], reflect_always: Option<bool>) -> Vec<f64> {
        let mut s = Scheduler::new(config);
        let mut samples = Vec::new();
        for (i, cue) in cues.iter().enumerate() {
            let now = i as f64;
            if let Some(p) = reflect_always {
                s.apply_reflection(p, now);
            }
            if s.tick(now, *cue).unwrap().sample {
                samples.push(now);
            }
        }
        samples
    }

    #[test]
    fn always_proactive_reflection_equals_pinned_high() {
        let cfg = SamplingConfig::default();
        let cues = vec![Mode::Low; 300];
        let reflected = run(cfg, &cues, Some(true));
        let pinned = run(cfg, &vec![Mode::High; 300], None);
        assert_eq!(reflected, pinned);
    }

    proptest! {
        #[test]
        fn inter_sample_gap_respects_interval(
            cues in proptest::collection::vec(proptest::bool::ANY, 10..200),
        ) {
            let cfg = SamplingConfig::default();
            let modes: Vec<Mode> = cues.iter().map(|&h| if h { Mode::High } else { Mode::Low }).collect();
            let mut s = Scheduler::new(cfg);
            let mut last: Option<(f64, Mode)> = None;
            for (i, m) in modes.iter().enumerate() {
                let now = i as f64;
                let d = s.tick(now, *m).unwrap();
                if d.sample {
                    if let Some((lt, lm)) = last {
                        if lm == d.mode {
                            prop_assert!(now - lt >= cfg.interval(d.mode) - 1e-9);
                        }
                    }
                    last = Some((now, d.mode));
                }
            }
        }

        #[test]
        fn sample_count_bounds(
            cues in proptest::collection::vec(proptest::bool::ANY, 60..400),
        ) {
            let cfg = SamplingConfig::default();
            let modes: Vec<Mode> = cues.iter().map(|&h| if h { Mode::High } else { Mode::Low }).collect();
            let duration = modes.len() as f64;
            let mut s = Scheduler::new(cfg);
            let mut count = 0usize;
            for (i, m) in modes.iter().enumerate() {
                if s.tick(i as f64, *m).unwrap().sample {
                    count += 1;
                }
            }
            let upper = (duration / cfg.high_interval_s).ceil() as usize + 1;
            let lower = (duration / cfg.low_interval_s).floor() as usize;
            prop_assert!(count <= upper, "count {} > upper {}", count, upper);
            prop_assert!(count >= lower, "count {} < lower {}", count, lower);
        }

        #[test]
        fn determinism_identical_inputs_identical_samples(
            cues in proptest::collection::vec(proptest::bool::ANY, 10..100),
        ) {
            let modes: Vec<Mode> = cues.iter().map(|&h| if h { Mode::High } else { Mode::Low }).collect();
            let a = run(SamplingConfig::default(), &modes, None);
            let b = run(SamplingConfig::default(), &modes, None);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn cue_monotonicity(moving in proptest::bool::ANY, near in proptest::bool::ANY, conv in proptest::bool::ANY) {
            let (l, m, a) = ctx(moving, near, conv);
            let base = cue_mode(&l, &m, &a);
            // Forcing any single trigger true never drops high to low.
            let (l2, m2, a2) = ctx(true, near, conv);
            let (l3, m3, a3) = ctx(moving, true, conv);
            let (l4, m4, a4) = ctx(moving, near, true);
            for forced in [cue_mode(&l2, &m2, &a2), cue_mode(&l3, &m3, &a3), cue_mode(&l4, &m4, &a4)] {
                if base == Mode::High {
                    prop_assert_eq!(forced, Mode::High);
                }
            }
        }
    }
}
