//! Goal-reaching evaluation: per-goal rollouts, aggregate metrics and
//! plot-ready exports.

use std::path::{Path, PathBuf};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::write_file;
use crate::dynamics::{trace_to_csv, SnakeModel, TracePoint};
use crate::env::{compute_reward, wrap_angle, Action, EpisodeConfig, GoalRegion, Observation, SnakeEnv};
use crate::error::{Error, Result};
use crate::kinematics::Vec2;
use crate::seeding::{derive_seed, rng_for};

/// Anything that can drive the robot.
pub trait Controller: Sync {
    /// `sample_rng` is `Some` for stochastic evaluation; deterministic
    /// controllers ignore it.
    fn act(&self, obs: &Observation, sample_rng: Option<&mut dyn RngCore>) -> Result<Action>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalProtocol {
    pub train_region: GoalRegion,
    pub test_regions: Vec<GoalRegion>,
    pub n_goals: usize,
    pub seed: u64,
    /// Act with the policy mean instead of sampling.
    pub deterministic: bool,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        use crate::env::RegionKind;
        let left = GoalRegion::new(RegionKind::LeftHalf, 0.3, 0.6);
        EvalProtocol {
            train_region: left,
            test_regions: vec![left, GoalRegion::new(RegionKind::RightHalf, 0.3, 0.6)],
            n_goals: 500,
            seed: 0,
            deterministic: true,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.n_goals == 0 {
            return Err(Error::Config("evaluation.n_goals must be > 0".into()));
        }
        if self.test_regions.is_empty() {
            return Err(Error::Config("evaluation.test_regions must not be empty".into()));
        }
        self.train_region.validate()?;
        self.test_regions.iter().try_for_each(GoalRegion::validate)
    }

    /// Goals for one region. They depend only on the seed and the region
    /// kind, so every algorithm sees the same set.
    pub fn goals(&self, region: &GoalRegion) -> Vec<Vec2> {
        let base = derive_seed(self.seed, region.kind as u64);
        (0..self.n_goals)
            .map(|i| region.sample(&mut rng_for(base, i as u64)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    Timeout,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalRecord {
    pub goal_x: f64,
    pub goal_y: f64,
    pub success: bool,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub steps: usize,
    pub final_distance: f64,
    pub failure: Option<Failure>,
    /// Error message for numeric failures.
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub success_rate: f64,
    pub avg_reward: f64,
    pub avg_steps: f64,
}

impl Aggregates {
    pub fn of(records: &[GoalRecord]) -> Self {
        let n = records.len().max(1) as f64;
        Aggregates {
            success_rate: records.iter().filter(|r| r.success).count() as f64 / n,
            avg_reward: records.iter().map(|r| r.episode_return).sum::<f64>() / n,
            avg_steps: records.iter().map(|r| r.steps as f64).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub region: String,
    pub aggregates: Aggregates,
    pub records: Vec<GoalRecord>,
    /// COM path per goal, one point per MDP step including the start.
    #[serde(skip)]
    pub trajectories: Vec<Vec<TracePoint>>,
}

/// Rolls out one episode towards `goal`.
///
/// Simulator errors end the episode as a tagged failure instead of
/// propagating. A goal already within the success radius counts as reached
/// at step 0 with the reward of the start state.
pub fn run_episode(
    controller: &dyn Controller,
    env: &mut SnakeEnv,
    goal: Vec2,
    mut sample_rng: Option<&mut dyn RngCore>,
) -> Result<(GoalRecord, Vec<TracePoint>)> {
    let mut obs = env.reset_with_goal(goal)?;
    let cfg = *env.config();
    let mut trace = vec![env.trace_point()];
    let mut record = GoalRecord {
        goal_x: goal.x,
        goal_y: goal.y,
        success: false,
        episode_return: 0.0,
        steps: 0,
        final_distance: obs.distance(),
        failure: None,
        detail: None,
    };
    if obs.distance() <= cfg.epsilon {
        record.success = true;
        record.episode_return = compute_reward(obs.distance(), env.initial_distance(), obs.dtheta, true, &cfg)?;
        return Ok((record, trace));
    }
    loop {
        let rng: Option<&mut dyn RngCore> = match &mut sample_rng {
            Some(r) => Some(&mut **r),
            None => None,
        };
        let outcome = controller.act(&obs, rng).and_then(|a| env.step(&a));
        match outcome {
            Ok(step) => {
                trace.push(env.trace_point());
                record.steps += 1;
                record.episode_return += step.reward;
                record.final_distance = step.observation.distance();
                obs = step.observation;
                if step.done {
                    record.success = step.success;
                    if !step.success {
                        record.failure = Some(Failure::Timeout);
                    }
                    return Ok((record, trace));
                }
            }
            Err(e) => {
                record.failure = Some(Failure::Numeric);
                record.detail = Some(e.to_string());
                return Ok((record, trace));
            }
        }
    }
}

/// Recomputes an episode's return from its exported trajectory alone.
pub fn recompute_return(goal: Vec2, trace: &[TracePoint], cfg: &EpisodeConfig) -> Result<f64> {
    let start = trace.first().ok_or_else(|| Error::Contract("empty trajectory".into()))?;
    let d0 = (goal - Vec2::new(start.com_x, start.com_y)).norm().max(1e-9);
    let reward_at = |p: &TracePoint| {
        let delta = goal - Vec2::new(p.com_x, p.com_y);
        let d = delta.norm();
        let dtheta = wrap_angle(delta.y.atan2(delta.x) - p.heading);
        compute_reward(d, d0, dtheta, d <= cfg.epsilon, cfg)
    };
    if trace.len() == 1 {
        return reward_at(start);
    }
    trace[1..].iter().map(reward_at).sum()
}

pub fn evaluate_region(
    controller: &dyn Controller,
    model: &SnakeModel,
    episode: &EpisodeConfig,
    protocol: &EvalProtocol,
    region: &GoalRegion,
) -> Result<EvalReport> {
    let template = SnakeEnv::new(*model, *episode)?;
    let goals = protocol.goals(region);
    let base = derive_seed(protocol.seed ^ 0x5EED, region.kind as u64);
    let results = goals
        .par_iter()
        .enumerate()
        .map_init(
            || template.clone(),
            |env, (i, &goal)| {
                let mut rng = rng_for(base, i as u64);
                let sample: Option<&mut dyn RngCore> = if protocol.deterministic { None } else { Some(&mut rng) };
                run_episode(controller, env, goal, sample)
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let (records, trajectories): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(EvalReport {
        region: region.kind.name().to_string(),
        aggregates: Aggregates::of(&records),
        records,
        trajectories,
    })
}

/// One report per test region, in protocol order.
pub fn evaluate(
    controller: &dyn Controller,
    model: &SnakeModel,
    episode: &EpisodeConfig,
    protocol: &EvalProtocol,
) -> Result<Vec<EvalReport>> {
    protocol.validate()?;
    protocol
        .test_regions
        .iter()
        .map(|r| evaluate_region(controller, model, episode, protocol, r))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

pub const RECORD_CSV_HEADER: &str = "goal_x,goal_y,success,return,steps,final_distance,failure";

pub fn records_to_csv(records: &[GoalRecord]) -> String {
    let mut out = String::from(RECORD_CSV_HEADER);
    out.push('\n');
    for r in records {
        let failure = match r.failure {
            None => "",
            Some(Failure::Timeout) => "timeout",
            Some(Failure::Numeric) => "numeric",
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.goal_x, r.goal_y, r.success as u8, r.episode_return, r.steps, r.final_distance, failure
        ));
    }
    out
}

/// Writes the per-goal table, the aggregate block and one trajectory CSV per
/// goal under `dir`. Returns the written paths.
pub fn export_report(report: &EvalReport, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let stem = &report.region;
    match format {
        ReportFormat::Csv => {
            let table = dir.join(format!("{stem}.csv"));
            write_file(&table, records_to_csv(&report.records).as_bytes())?;
            let a = &report.aggregates;
            let summary = dir.join(format!("{stem}_summary.csv"));
            write_file(
                &summary,
                format!(
                    "region,n_goals,success_rate,avg_reward,avg_steps\n{stem},{},{},{},{}\n",
                    report.records.len(),
                    a.success_rate,
                    a.avg_reward,
                    a.avg_steps
                )
                .as_bytes(),
            )?;
            written.extend([table, summary]);
        }
        ReportFormat::Json => {
            let path = dir.join(format!("{stem}.json"));
            let body = serde_json::to_string_pretty(report).expect("report serializes");
            write_file(&path, body.as_bytes())?;
            written.push(path);
        }
    }
    for (i, trace) in report.trajectories.iter().enumerate() {
        let path = dir.join("trajectories").join(stem).join(format!("goal_{i:04}.csv"));
        write_file(&path, trace_to_csv(trace).as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

pub fn load_json_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::ScriptedSteering;
    use crate::env::RegionKind;
    use crate::kinematics::BodyGrid;

    fn model() -> SnakeModel {
        SnakeModel {
            grid: BodyGrid::new(33, 0.5).unwrap(),
            ..SnakeModel::default()
        }
    }

    struct Scripted;

    impl Controller for Scripted {
        fn act(&self, obs: &Observation, _: Option<&mut dyn RngCore>) -> Result<Action> {
            Ok(ScriptedSteering::default().nominal(obs))
        }
    }

    struct Idle;

    impl Controller for Idle {
        fn act(&self, obs: &Observation, _: Option<&mut dyn RngCore>) -> Result<Action> {
            let _ = obs;
            Ok(Action {
                bias: [0.0; 4],
                direction: 1.0,
            })
        }
    }

    struct Broken;

    impl Controller for Broken {
        fn act(&self, _: &Observation, _: Option<&mut dyn RngCore>) -> Result<Action> {
            Ok(Action {
                bias: [f64::NAN; 4],
                direction: 1.0,
            })
        }
    }

    fn env(max_steps: usize) -> SnakeEnv {
        SnakeEnv::new(
            model(),
            EpisodeConfig {
                max_steps,
                ..EpisodeConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn degenerate_goal_succeeds_immediately() {
        let mut e = env(10);
        let (r, trace) = run_episode(&Idle, &mut e, Vec2::new(0.01, 0.0), None).unwrap();
        assert!(r.success);
        assert_eq!(r.steps, 0);
        assert_eq!(trace.len(), 1);
        let cfg = EpisodeConfig::default();
        assert!(r.episode_return >= cfg.r_success - cfg.alpha_w - cfg.beta_w);
    }

    #[test]
    fn timeout_is_tagged() {
        let mut e = env(7);
        let (r, trace) = run_episode(&Idle, &mut e, Vec2::new(-0.5, 0.0), None).unwrap();
        assert!(!r.success);
        assert_eq!(r.steps, 7);
        assert_eq!(trace.len(), 8);
        assert_eq!(r.failure, Some(Failure::Timeout));
    }

    #[test]
    fn numeric_failure_is_recorded_not_raised() {
        let mut e = env(7);
        let (r, _) = run_episode(&Broken, &mut e, Vec2::new(-0.5, 0.0), None).unwrap();
        assert!(!r.success);
        assert_eq!(r.failure, Some(Failure::Numeric));
        assert!(r.detail.is_some());
    }

    #[test]
    fn return_recomputes_from_trajectory() {
        let cfg = EpisodeConfig {
            max_steps: 40,
            ..EpisodeConfig::default()
        };
        let mut e = SnakeEnv::new(model(), cfg).unwrap();
        for goal in [Vec2::new(0.3, 0.1), Vec2::new(-0.2, 0.3), Vec2::new(0.01, 0.0)] {
            let (r, trace) = run_episode(&Scripted, &mut e, goal, None).unwrap();
            let again = recompute_return(goal, &trace, &cfg).unwrap();
            assert!((again - r.episode_return).abs() < 1e-9);
            if r.success {
                let last = trace.last().unwrap();
                assert!((goal - Vec2::new(last.com_x, last.com_y)).norm() <= cfg.epsilon);
            }
        }
    }

    #[test]
    fn ood_protocol_structure_and_bookkeeping() {
        let protocol = EvalProtocol {
            n_goals: 6,
            seed: 3,
            ..EvalProtocol::default()
        };
        let ep = EpisodeConfig {
            max_steps: 5,
            ..EpisodeConfig::default()
        };
        let reports = evaluate(&Idle, &model(), &ep, &protocol).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].region, "left_half");
        assert_eq!(reports[1].region, "right_half");
        for (report, region) in reports.iter().zip(&protocol.test_regions) {
            assert_eq!(report.records.len(), 6);
            for r in &report.records {
                assert!(region.contains(Vec2::new(r.goal_x, r.goal_y)));
            }
            let hand = Aggregates::of(&report.records);
            assert_eq!(hand, report.aggregates);
            let n = report.records.len() as f64;
            let sum: f64 = report.records.iter().map(|r| r.episode_return).sum();
            assert_eq!(report.aggregates.avg_reward, sum / n);
            assert!(report.aggregates.avg_steps <= 5.0);
        }
        let left = &protocol.test_regions[0];
        let right = &protocol.test_regions[1];
        assert!(protocol.goals(left).iter().all(|&g| !right.contains(g)));
    }

    #[test]
    fn all_success_stub() {
        struct Teleport;
        impl Controller for Teleport {
            fn act(&self, _: &Observation, _: Option<&mut dyn RngCore>) -> Result<Action> {
                unreachable!("goals start inside the success radius")
            }
        }
        let protocol = EvalProtocol {
            n_goals: 5,
            test_regions: vec![GoalRegion::new(RegionKind::FullAnnulus, 0.001, 0.02)],
            ..EvalProtocol::default()
        };
        let reports = evaluate(&Teleport, &model(), &EpisodeConfig::default(), &protocol).unwrap();
        assert_eq!(reports[0].aggregates.success_rate, 1.0);
        assert!(reports[0].aggregates.avg_steps <= 150.0);
    }

    #[test]
    fn export_round_trip_and_schema() {
        let protocol = EvalProtocol {
            n_goals: 4,
            test_regions: vec![GoalRegion::new(RegionKind::RightHalf, 0.3, 0.6)],
            ..EvalProtocol::default()
        };
        let ep = EpisodeConfig {
            max_steps: 3,
            ..EpisodeConfig::default()
        };
        let report = evaluate(&Idle, &model(), &ep, &protocol).unwrap().remove(0);
        let dir = tempfile::tempdir().unwrap();
        let written = export_report(&report, dir.path(), ReportFormat::Json).unwrap();
        let back = load_json_report(&written[0]).unwrap();
        assert_eq!(back.aggregates, report.aggregates);
        assert_eq!(back.records, report.records);

        export_report(&report, dir.path(), ReportFormat::Csv).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("right_half.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4 + 1);
        assert_eq!(csv.lines().next(), Some(RECORD_CSV_HEADER));
        let traj = std::fs::read_to_string(dir.path().join("trajectories/right_half/goal_0003.csv")).unwrap();
        assert_eq!(traj.lines().count(), 1 + 4);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let protocol = EvalProtocol {
            n_goals: 3,
            ..EvalProtocol::default()
        };
        let ep = EpisodeConfig {
            max_steps: 4,
            ..EpisodeConfig::default()
        };
        let a = evaluate(&Scripted, &model(), &ep, &protocol).unwrap();
        let b = evaluate(&Scripted, &model(), &ep, &protocol).unwrap();
        assert_eq!(a, b);
    }
}
