//! Deterministic offline scorer.
//!
//! Three sub-scores in `[0, 1]` (safety, efficiency, comfort) are mixed with
//! mode-dependent weights into one score out of 10. Only the overall score
//! and the suggestions leave this module through [`evaluate_rubric`].

use serde::{Deserialize, Serialize};

use crate::eval::{EvalResult, EvalSource, PriorKnowledge, Suggestion, SuggestionId};
use crate::metrics::{DriveMode, EpisodeMetrics};
use crate::sim::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub safety: f64,
    pub efficiency: f64,
    pub comfort: f64,
}

/// `(safety, efficiency, comfort)` weights.
pub fn mode_weights(mode: DriveMode) -> [f64; 3] {
    match mode {
        DriveMode::Hurry => [0.4, 0.4, 0.2],
        DriveMode::Medium => [0.4, 0.3, 0.3],
        DriveMode::Relax => [0.4, 0.2, 0.4],
    }
}

fn unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// 1 up to the low end of the band, 0.5 at its high end, 0 at twice the high
/// end, piecewise linear in between.
fn time_credit(t: f64, band: [f64; 2]) -> f64 {
    let [lo, hi] = band;
    if t <= lo {
        1.0
    } else if t <= hi {
        1.0 - 0.5 * (t - lo) / (hi - lo)
    } else {
        unit(0.5 * (1.0 - (t - hi) / hi))
    }
}

fn speed_ratio(m: &EpisodeMetrics) -> Option<f64> {
    (m.others_avg_speed > 1e-9).then(|| m.avg_speed / m.others_avg_speed)
}

/// Full credit inside the band, linear fall-off on either side.
fn speed_credit(m: &EpisodeMetrics, band: [f64; 2]) -> f64 {
    let Some(r) = speed_ratio(m) else {
        // no traffic to compare against
        return 1.0;
    };
    let [lo, hi] = band;
    if r < lo {
        unit(r / lo)
    } else if r <= hi {
        1.0
    } else {
        unit(1.0 - (r - hi) / hi)
    }
}

fn safe_gap(m: &EpisodeMetrics, p: &PriorKnowledge) -> f64 {
    (m.avg_speed * p.safe_time_gap).max(0.1)
}

pub fn rubric_components(m: &EpisodeMetrics, p: &PriorKnowledge) -> Components {
    let safety = unit(m.min_gap / safe_gap(m, p));
    let efficiency = match m.outcome {
        Outcome::Merged { .. } | Outcome::Collision { .. } => {
            0.5 * (time_credit(m.total_time, p.efficient_time_band) + speed_credit(m, p.efficient_speed_band))
        }
        _ => 0.0,
    };
    let j = p.comfort_jerk_max;
    let comfort = 0.5 * unit(1.0 - m.avg_jerk / j) + 0.5 * unit(1.0 - m.max_jerk / (3.0 * j));
    Components {
        safety,
        efficiency: unit(efficiency),
        comfort,
    }
}

pub fn score_of(c: &Components, mode: DriveMode, collided: bool) -> f64 {
    let [ws, we, wc] = mode_weights(mode);
    let s = 10.0 * (ws * c.safety + we * c.efficiency + wc * c.comfort);
    let s = s.clamp(0.0, 10.0);
    // a collision maps the whole scale onto [0, 1]
    if collided {
        s / 10.0
    } else {
        s
    }
}

fn describe(v: f64) -> &'static str {
    if v >= 0.8 {
        "good"
    } else if v >= 0.5 {
        "fair"
    } else {
        "poor"
    }
}

pub fn evaluate_rubric(m: &EpisodeMetrics, p: &PriorKnowledge, mode: DriveMode) -> EvalResult {
    let c = rubric_components(m, p);
    let collided = matches!(m.outcome, Outcome::Collision { .. });
    let score = score_of(&c, mode, collided);

    let mut suggestions = Vec::new();
    let mut push = |id: SuggestionId, detail: &str| {
        suggestions.push(Suggestion {
            id,
            text: format!("{}: {detail}", id.phrase()),
        })
    };
    if collided {
        push(SuggestionId::MaintainSafeGap, "the merge ended in a collision");
    }
    if m.min_gap < safe_gap(m, p) {
        push(SuggestionId::EnhanceAwareness, "the closest approach fell below the safe time gap");
    }
    if c.comfort < 0.5 {
        push(SuggestionId::SmoothAcceleration, "jerk exceeded the comfortable range");
    }
    if matches!(m.outcome, Outcome::Timeout { .. } | Outcome::Stagnation { .. }) {
        push(SuggestionId::ImproveGapSeeking, "the vehicle never completed the merge");
    }
    if matches!(m.outcome, Outcome::Merged { .. })
        && speed_ratio(m).is_some_and(|r| r < p.efficient_speed_band[0])
    {
        push(SuggestionId::ReduceHesitation, "the vehicle was slower than the surrounding traffic");
    }

    let analysis = format!(
        "Outcome {} in {} mode. Safety is {}, efficiency is {}, comfort is {}.",
        m.outcome.label(),
        mode,
        describe(c.safety),
        describe(c.efficiency),
        describe(c.comfort)
    );
    EvalResult {
        score,
        analysis,
        suggestions,
        source: EvalSource::Rubric,
        clamped: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::prompt::tests::data1;
    use proptest::prelude::*;

    fn perfect() -> EpisodeMetrics {
        EpisodeMetrics {
            total_time: 4.0,
            avg_speed: 4.0,
            min_gap: 10.0,
            avg_gap: 12.0,
            avg_jerk: 0.0,
            max_jerk: 0.0,
            others_avg_speed: 4.0,
            ..data1()
        }
    }

    #[test]
    fn saturated_components_give_ten() {
        let p = PriorKnowledge::default();
        for mode in DriveMode::ALL {
            let r = evaluate_rubric(&perfect(), &p, mode);
            assert!((r.score - 10.0).abs() < 1e-12, "{mode}: {}", r.score);
            assert!(r.suggestions.is_empty());
        }
    }

    #[test]
    fn faster_merge_scores_higher() {
        let p = PriorKnowledge::default();
        let d1 = data1();
        let d2 = EpisodeMetrics {
            total_time: 7.0,
            ..data1()
        };
        assert!(evaluate_rubric(&d2, &p, DriveMode::Hurry).score > evaluate_rubric(&d1, &p, DriveMode::Hurry).score);
    }

    #[test]
    fn jerk_hurts_relax_most() {
        let p = PriorKnowledge::default();
        let calm = EpisodeMetrics {
            max_jerk: 0.5,
            avg_jerk: 0.3,
            ..data1()
        };
        let rough = EpisodeMetrics { max_jerk: 5.0, ..calm.clone() };
        let drop = |mode| evaluate_rubric(&calm, &p, mode).score - evaluate_rubric(&rough, &p, mode).score;
        for mode in DriveMode::ALL {
            assert!(drop(mode) > 0.0);
        }
        assert!(drop(DriveMode::Relax) > drop(DriveMode::Hurry));
    }

    #[test]
    fn collision_and_timeout() {
        let p = PriorKnowledge::default();
        let crash = EpisodeMetrics {
            outcome: Outcome::Collision {
                tick: 30,
                vehicle_id: 0,
                other_id: 3,
            },
            ..perfect()
        };
        let r = evaluate_rubric(&crash, &p, DriveMode::Medium);
        assert!(r.score <= 1.0);
        assert!(r.suggestion_ids().contains(&SuggestionId::MaintainSafeGap));
        let stuck = EpisodeMetrics {
            outcome: Outcome::Timeout { tick: 300 },
            merging_point_x: None,
            ..perfect()
        };
        assert_eq!(rubric_components(&stuck, &p).efficiency, 0.0);
        let r = evaluate_rubric(&stuck, &p, DriveMode::Hurry);
        assert_eq!(r.suggestion_ids(), vec![SuggestionId::ImproveGapSeeking]);
    }

    #[test]
    fn threshold_suggestions() {
        let p = PriorKnowledge::default();
        let close = EpisodeMetrics { min_gap: 1.0, ..perfect() };
        assert_eq!(evaluate_rubric(&close, &p, DriveMode::Hurry).suggestion_ids(), vec![SuggestionId::EnhanceAwareness]);
        let jerky = EpisodeMetrics {
            avg_jerk: 2.0,
            max_jerk: 6.0,
            ..perfect()
        };
        assert_eq!(evaluate_rubric(&jerky, &p, DriveMode::Hurry).suggestion_ids(), vec![SuggestionId::SmoothAcceleration]);
        let slow = EpisodeMetrics {
            avg_speed: 2.0,
            min_gap: 10.0,
            ..perfect()
        };
        assert_eq!(evaluate_rubric(&slow, &p, DriveMode::Hurry).suggestion_ids(), vec![SuggestionId::ReduceHesitation]);
    }

    fn arb_metrics() -> impl Strategy<Value = EpisodeMetrics> {
        (0.0f64..40.0, 0.0f64..8.0, 0.0f64..20.0, 0.0f64..10.0, 0.0f64..10.0, 0.0f64..6.0, 0..3usize).prop_map(
            |(t, v, gap, j1, j2, vo, o)| {
                let outcome = match o {
                    0 => Outcome::Merged { at_x: 100.0, at_tick: 50 },
                    1 => Outcome::Timeout { tick: 300 },
                    _ => Outcome::Collision {
                        tick: 20,
                        vehicle_id: 0,
                        other_id: 1,
                    },
                };
                EpisodeMetrics {
                    total_time: t,
                    avg_speed: v,
                    min_gap: gap,
                    avg_gap: gap + 1.0,
                    avg_jerk: j1.min(j2),
                    max_jerk: j1.max(j2),
                    others_avg_speed: vo,
                    outcome,
                    ..data1()
                }
            },
        )
    }

    proptest! {
        #[test]
        fn bounded_and_mode_sign(m in arb_metrics()) {
            let p = PriorKnowledge::default();
            let c = rubric_components(&m, &p);
            for mode in DriveMode::ALL {
                let s = evaluate_rubric(&m, &p, mode).score;
                prop_assert!((0.0..=10.0).contains(&s));
                if matches!(m.outcome, Outcome::Collision { .. }) {
                    prop_assert!(s <= 1.0);
                }
            }
            let d = evaluate_rubric(&m, &p, DriveMode::Hurry).score - evaluate_rubric(&m, &p, DriveMode::Relax).score;
            let e = c.efficiency - c.comfort;
            prop_assert!(e.abs() < 1e-9 || d.signum() == e.signum());
        }

        #[test]
        fn improving_a_metric_never_hurts(m in arb_metrics(), k in 0..4usize, f in 0.0f64..1.0) {
            let p = PriorKnowledge::default();
            let mut better = m.clone();
            match k {
                0 => better.min_gap += 5.0 * f,
                1 => better.total_time *= f,
                2 => better.avg_jerk *= f,
                _ => better.max_jerk = better.avg_jerk + (better.max_jerk - better.avg_jerk) * f,
            }
            for mode in DriveMode::ALL {
                prop_assert!(evaluate_rubric(&better, &p, mode).score >= evaluate_rubric(&m, &p, mode).score - 1e-12);
            }
        }
    }
}
