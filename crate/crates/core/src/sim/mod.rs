//! 10 Hz closed loop: environment replanning, ego control, integration,
//! collision checks and termination.
//!
//! Each tick runs in a fixed order: every main-lane vehicle builds its sample
//! from the last ten snapshots and adopts the next frame of its plan, then the
//! ego planner acts on the pre-tick scene and is integrated, then collisions
//! and termination are checked on the post-integration states.

pub mod log_io;
pub mod planners;
pub mod termination;

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::check_collision;
use crate::dynamics::{apply_trajectory_step, step_bicycle};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::policy::idm::IdmParams;
use crate::policy::model::{predict, ModelWeights};
use crate::policy::rule::{rule_policy_plan, MAX_LATERAL_OFFSET};
use crate::policy::weights_io::load_weights;
use crate::policy::PlannedTrajectory;
use crate::road::{point_at_extended, project, RoadGeometry};
use crate::sample::{build_sample, Snapshot, T_HIS};
use crate::scenario::{DensityClass, Scenario};
use crate::types::{Control, PlannedFrame, VehicleId, VehicleState, DT, MAX_SPEED};

pub use planners::{GapAcceptanceParams, IdmGapAcceptance, ObsFrame, Planner, Scripted, TrajectoryFollower};
pub use termination::{check_termination, Outcome, TerminationConfig, TerminationTracker};

pub const EGO_ID: VehicleId = 0;

/// Which policy drives the main-lane vehicles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "weights", rename_all = "snake_case")]
pub enum EnvPolicyKind {
    RuleBased,
    Neural(PathBuf),
    IdmBaseline,
}

impl EnvPolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnvPolicyKind::RuleBased => "rule",
            EnvPolicyKind::Neural(_) => "neural",
            EnvPolicyKind::IdmBaseline => "idm",
        }
    }
}

/// A resolved environment policy, ready to share across episodes.
#[derive(Debug, Clone)]
pub enum EnvPolicy {
    RuleBased,
    Neural(Arc<ModelWeights>),
    IdmBaseline,
}

impl EnvPolicy {
    pub fn load(kind: &EnvPolicyKind) -> Result<Self> {
        Ok(match kind {
            EnvPolicyKind::RuleBased => EnvPolicy::RuleBased,
            EnvPolicyKind::IdmBaseline => EnvPolicy::IdmBaseline,
            EnvPolicyKind::Neural(path) => EnvPolicy::Neural(Arc::new(load_weights(path)?)),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvPolicy::RuleBased => "rule",
            EnvPolicy::Neural(_) => "neural",
            EnvPolicy::IdmBaseline => "idm",
        }
    }

    fn plan(&self, history: &[Snapshot], id: VehicleId, road: &RoadGeometry, rng: &mut ChaCha8Rng) -> Result<PlannedTrajectory> {
        let sample = build_sample(history, id, road)?;
        let local = match self {
            EnvPolicy::RuleBased => rule_policy_plan(&sample, &IdmParams::for_style(sample.label), rng),
            EnvPolicy::IdmBaseline => rule_policy_plan(&sample, &IdmParams::baseline(), rng),
            EnvPolicy::Neural(w) => predict(w, &sample)?.target,
        };
        let current = &history[history.len() - 1][&id];
        Ok(local.to_global(&Frame::of_vehicle(current)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub termination: TerminationConfig,
    /// Environment vehicles replan every this many ticks.
    pub replan_every: usize,
    /// Wall-clock budget for one ego planner call.
    pub tick_budget_ms: Option<u64>,
    /// Check every vehicle pair instead of ego-vs-all plus consecutive main-lane pairs.
    pub full_pairwise: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            termination: TerminationConfig::default(),
            replan_every: 1,
            tick_budget_ms: Some(50),
            full_pairwise: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replan_every == 0 || self.termination.timeout_ticks == 0 || self.termination.merged_hold == 0 {
            return Err(Error::validation("replan_every, timeout_ticks and merged_hold must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub scenario_seed: u64,
    pub density: DensityClass,
    pub seed: u64,
    pub planner: String,
    pub env_policy: String,
    pub config: SimConfig,
    pub road: RoadGeometry,
    /// One snapshot per tick starting with the initial scene; id 0 is the ego.
    pub snapshots: Vec<Snapshot>,
    /// `controls[k]` moved the ego from tick `k` to tick `k + 1`.
    pub controls: Vec<Control>,
    pub outcome: Outcome,
}

impl EpisodeLog {
    pub fn ticks(&self) -> usize {
        self.snapshots.len().saturating_sub(1)
    }

    pub fn ego_track(&self) -> Vec<VehicleState> {
        self.snapshots.iter().map(|s| s[&EGO_ID]).collect()
    }
}

/// Keeps an environment vehicle's next frame inside its lane.
fn clamp_to_lane(frame: PlannedFrame, road: &RoadGeometry) -> PlannedFrame {
    let line = &road.main_centerline;
    let p = project(line, [frame.x, frame.y]);
    let lateral = p.lateral.clamp(-MAX_LATERAL_OFFSET, MAX_LATERAL_OFFSET);
    if lateral == p.lateral && frame.speed <= MAX_SPEED {
        return frame;
    }
    let (c, _) = point_at_extended(line, p.s);
    let (s, cs) = p.heading.sin_cos();
    PlannedFrame {
        x: c[0] - s * lateral,
        y: c[1] + cs * lateral,
        theta: frame.theta,
        speed: frame.speed.min(MAX_SPEED),
    }
}

fn collisions(snapshot: &Snapshot, full: bool) -> Option<(VehicleId, VehicleId)> {
    let ego = &snapshot[&EGO_ID];
    if full {
        let all: Vec<(&VehicleId, &VehicleState)> = snapshot.iter().collect();
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                if check_collision(all[i].1, all[j].1) {
                    return Some((*all[i].0, *all[j].0));
                }
            }
        }
        return None;
    }
    for (id, v) in snapshot.iter().filter(|(id, _)| **id != EGO_ID) {
        if check_collision(ego, v) {
            return Some((EGO_ID, *id));
        }
    }
    let mut main: Vec<(&VehicleId, &VehicleState)> = snapshot.iter().filter(|(id, _)| **id != EGO_ID).collect();
    main.sort_by(|a, b| a.1.x.total_cmp(&b.1.x).then(a.0.cmp(b.0)));
    main.windows(2)
        .find(|w| check_collision(w[0].1, w[1].1))
        .map(|w| (*w[0].0.min(w[1].0), *w[0].0.max(w[1].0)))
}

fn episode_rng(scenario_seed: u64, seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(scenario_seed);
    rng
}

/// Runs one episode to its outcome. Deterministic in `(scenario, cfg.seed)`
/// unless the planner's wall-clock budget is hit.
pub fn run_episode(scenario: &Scenario, ego: &mut dyn Planner, env: &EnvPolicy, cfg: &SimConfig) -> Result<EpisodeLog> {
    scenario.validate()?;
    cfg.validate()?;
    let road = &scenario.road;
    let mut rng = episode_rng(scenario.seed, cfg.seed);

    let mut initial = Snapshot::new();
    initial.insert(EGO_ID, scenario.ego);
    for (i, v) in scenario.main_vehicles.iter().enumerate() {
        initial.insert(i as VehicleId + 1, *v);
    }
    let env_ids: Vec<VehicleId> = initial.keys().copied().filter(|id| *id != EGO_ID).collect();

    let mut snapshots = vec![initial.clone()];
    let mut controls = Vec::new();
    let mut history: VecDeque<Snapshot> = VecDeque::from([initial]);
    let mut plans: Vec<(PlannedTrajectory, usize)> = Vec::new();
    let mut tracker = TerminationTracker::default();
    let budget = cfg.tick_budget_ms.map(Duration::from_millis);

    let mut outcome = tracker.update(0, &scenario.ego, road, &cfg.termination);
    let mut tick = 0;
    while outcome.is_none() {
        tick += 1;
        let prev = history.back().expect("history is never empty").clone();
        let hist: Vec<Snapshot> = history.iter().cloned().collect();

        // (1)-(2) environment vehicles
        if (tick - 1) % cfg.replan_every == 0 {
            plans.clear();
            for id in &env_ids {
                plans.push((env.plan(&hist, *id, road, &mut rng)?, 0));
            }
        }
        let mut next = prev.clone();
        let mut invalid = None;
        for (id, (plan, step)) in env_ids.iter().zip(plans.iter_mut()) {
            let frame = plan.frames[(*step).min(plan.frames.len() - 1)];
            *step += 1;
            match apply_trajectory_step(&prev[id], &clamp_to_lane(frame, road)) {
                Ok(s) => {
                    next.insert(*id, s);
                }
                Err(e) => {
                    invalid = Some(format!("vehicle {id}: {e}"));
                    break;
                }
            }
        }
        if let Some(message) = invalid {
            outcome = Some(Outcome::Invalid { tick, message });
            break;
        }

        // (3) ego
        let ego_prev = prev[&EGO_ID];
        let others: Vec<(VehicleId, VehicleState)> = env_ids.iter().map(|id| (*id, prev[id])).collect();
        let obs = ObsFrame {
            ego: &ego_prev,
            others: &others,
            road,
            tick: tick - 1,
        };
        let started = Instant::now();
        let decided = ego.observe(&obs);
        let elapsed = started.elapsed();
        let u = match decided {
            Ok(u) if !u.is_finite() => Err("non-finite control".to_string()),
            Ok(_) if budget.is_some_and(|b| elapsed > b) => Err(format!("tick budget exceeded ({elapsed:?})")),
            Ok(u) => Ok(u),
            Err(e) => Err(e.to_string()),
        };
        let u = match u {
            Ok(u) => u,
            Err(message) => {
                outcome = Some(Outcome::PlannerFault { tick, message });
                break;
            }
        };
        let mut ego_next = step_bicycle(&ego_prev, u, DT)?;
        ego_next.lane = road.lane_of(ego_next.x, ego_next.y);
        next.insert(EGO_ID, ego_next);
        controls.push(u.clipped());

        // (4) collisions, (5) termination
        outcome = match collisions(&next, cfg.full_pairwise) {
            Some((a, b)) => Some(Outcome::Collision {
                tick,
                vehicle_id: a,
                other_id: b,
            }),
            None => tracker.update(tick, &ego_next, road, &cfg.termination),
        };
        snapshots.push(next.clone());
        history.push_back(next);
        if history.len() > T_HIS {
            history.pop_front();
        }
    }

    Ok(EpisodeLog {
        scenario_seed: scenario.seed,
        density: scenario.density,
        seed: cfg.seed,
        planner: ego.name(),
        env_policy: env.name().to_string(),
        config: cfg.clone(),
        road: road.clone(),
        snapshots,
        controls,
        outcome: outcome.expect("loop exits with an outcome"),
    })
}

/// Environment-only rollout with no ego on the road, for data generation.
/// Returns one snapshot per tick including the initial one.
pub fn rollout_environment(scenario: &Scenario, env: &EnvPolicy, ticks: usize, seed: u64) -> Result<Vec<Snapshot>> {
    scenario.validate()?;
    let road = &scenario.road;
    let mut rng = episode_rng(scenario.seed, seed);
    let mut initial = Snapshot::new();
    for (i, v) in scenario.main_vehicles.iter().enumerate() {
        initial.insert(i as VehicleId + 1, *v);
    }
    let mut out = vec![initial.clone()];
    let mut history: VecDeque<Snapshot> = VecDeque::from([initial]);
    for _ in 0..ticks {
        let hist: Vec<Snapshot> = history.iter().cloned().collect();
        let prev = &hist[hist.len() - 1];
        let mut next = Snapshot::new();
        for (id, state) in prev {
            let plan = env.plan(&hist, *id, road, &mut rng)?;
            next.insert(*id, apply_trajectory_step(state, &clamp_to_lane(plan.frames[0], road))?);
        }
        out.push(next.clone());
        history.push_back(next);
        if history.len() > T_HIS {
            history.pop_front();
        }
    }
    Ok(out)
}

/// Like [`rollout_environment`] but with an ego driven by `ego` sharing the
/// road, so main-lane vehicles react to a merging vehicle.
pub fn rollout_with_ego(
    scenario: &Scenario,
    ego: &mut dyn Planner,
    env: &EnvPolicy,
    ticks: usize,
    seed: u64,
) -> Result<Vec<Snapshot>> {
    let cfg = SimConfig {
        seed,
        termination: TerminationConfig {
            timeout_ticks: ticks,
            // keep rolling after the ego merges or stalls
            merged_hold: usize::MAX / 2,
            stagnation_ticks: usize::MAX / 2,
            ..Default::default()
        },
        tick_budget_ms: None,
        ..Default::default()
    };
    let log = run_episode(scenario, ego, env, &cfg)?;
    Ok(log.snapshots)
}

/// One unit of batch work.
#[derive(Debug, Clone)]
pub struct EpisodeJob {
    pub index: usize,
    pub scenario: Scenario,
    pub seed: u64,
}

/// Runs jobs in parallel; results come back in job order.
pub fn run_batch<F>(jobs: &[EpisodeJob], make_planner: F, env: &EnvPolicy, cfg: &SimConfig) -> Vec<Result<EpisodeLog>>
where
    F: Fn(&EpisodeJob) -> Box<dyn Planner> + Sync,
{
    jobs.par_iter()
        .map(|job| {
            let mut planner = make_planner(job);
            let cfg = SimConfig {
                seed: job.seed,
                ..cfg.clone()
            };
            run_episode(&job.scenario, &mut planner, env, &cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{sample_scenario, ScenarioParams};
    use crate::types::{Lane, StyleLabel};

    fn open_ramp() -> Scenario {
        let mut s = sample_scenario(3, DensityClass::LowerDense, &ScenarioParams::default()).unwrap();
        // move traffic far ahead of the ego
        for v in s.main_vehicles.iter_mut() {
            v.x += 100.0;
        }
        s.main_vehicles.retain(|v| v.x < 195.0);
        s
    }

    #[test]
    fn braking_ego_stagnates() {
        let s = open_ramp();
        let log = run_episode(&s, &mut Scripted::brake_to_stop(), &EnvPolicy::RuleBased, &SimConfig::default()).unwrap();
        // 3 m/s at 3 m/s^2 stops on tick 10, then 50 more still ticks
        assert_eq!(log.outcome, Outcome::Stagnation { tick: 60 });
        assert_eq!(log.snapshots.len(), 61);
        assert_eq!(log.controls.len(), 60);
    }

    #[test]
    fn steering_into_occupied_lane_collides() {
        let mut s = open_ramp();
        s.main_vehicles.push(VehicleState::new(33.0, 0.0, 0.0, 3.0, StyleLabel::Long, Lane::Main));
        s.main_vehicles.sort_by(|a, b| b.x.total_cmp(&a.x));
        let road = s.road.clone();
        let mut p = Scripted::from_fn("swerve", move |obs| {
            Control::new(0.0, planners::lane_tracking_steer(obs.ego, &road, Lane::Main, 0.0))
        });
        let log = run_episode(&s, &mut p, &EnvPolicy::IdmBaseline, &SimConfig::default()).unwrap();
        let Outcome::Collision { tick, vehicle_id, .. } = log.outcome else {
            panic!("{:?}", log.outcome)
        };
        assert_eq!(vehicle_id, EGO_ID);
        // no earlier tick overlapped
        for snap in &log.snapshots[..tick] {
            let ego = &snap[&EGO_ID];
            assert!(snap.iter().filter(|(id, _)| **id != EGO_ID).all(|(_, v)| !check_collision(ego, v)));
        }
    }

    #[test]
    fn deterministic_replay() {
        let s = sample_scenario(11, DensityClass::HighlyDense, &ScenarioParams::default()).unwrap();
        let cfg = SimConfig {
            tick_budget_ms: None,
            seed: 5,
            ..Default::default()
        };
        let a = run_episode(&s, &mut IdmGapAcceptance::default(), &EnvPolicy::RuleBased, &cfg).unwrap();
        let b = run_episode(&s, &mut IdmGapAcceptance::default(), &EnvPolicy::RuleBased, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.ticks() <= cfg.termination.timeout_ticks);
    }

    #[test]
    fn env_vehicles_stay_in_lane() {
        let s = sample_scenario(4, DensityClass::HighlyDense, &ScenarioParams::default()).unwrap();
        let log = run_episode(&s, &mut IdmGapAcceptance::default(), &EnvPolicy::RuleBased, &SimConfig::default()).unwrap();
        for snap in &log.snapshots {
            for (id, v) in snap.iter().filter(|(id, _)| **id != EGO_ID) {
                let off = s.road.main_offset(v.x, v.y).abs();
                assert!(off <= MAX_LATERAL_OFFSET + 1e-9, "vehicle {id} offset {off}");
            }
        }
    }

    #[test]
    fn env_policy_switch_keeps_initial_state() {
        let s = sample_scenario(8, DensityClass::MediumDense, &ScenarioParams::default()).unwrap();
        let cfg = SimConfig::default();
        let a = run_episode(&s, &mut IdmGapAcceptance::default(), &EnvPolicy::RuleBased, &cfg).unwrap();
        let b = run_episode(&s, &mut IdmGapAcceptance::default(), &EnvPolicy::IdmBaseline, &cfg).unwrap();
        assert_eq!(a.snapshots[0], b.snapshots[0]);
        assert_eq!(a.road, b.road);
    }

    #[test]
    fn batch_keeps_job_order() {
        let jobs: Vec<EpisodeJob> = (0..6)
            .map(|i| EpisodeJob {
                index: i,
                scenario: sample_scenario(i as u64, DensityClass::HighlyDense, &ScenarioParams::default()).unwrap(),
                seed: i as u64,
            })
            .collect();
        let cfg = SimConfig {
            tick_budget_ms: None,
            ..Default::default()
        };
        let logs = run_batch(&jobs, |_| Box::new(IdmGapAcceptance::default()), &EnvPolicy::RuleBased, &cfg);
        for (job, log) in jobs.iter().zip(&logs) {
            assert_eq!(log.as_ref().unwrap().scenario_seed, job.scenario.seed);
        }
    }
}
