//! Goal-reaching MDP on top of the snake simulator.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{SnakeModel, SnakeState, TracePoint};
use crate::error::{Error, Result};
use crate::kinematics::{ChannelState, Direction, Vec2, N_CHANNELS};

pub const OBS_DIM: usize = 11;
pub const ACT_DIM: usize = 5;

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    PI - (PI - a).rem_euclid(2.0 * PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
    pub bias: [f64; N_CHANNELS],
    pub bias_prev: [f64; N_CHANNELS],
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        let mut out = [0.0; OBS_DIM];
        out[0] = self.dx;
        out[1] = self.dy;
        out[2] = self.dtheta;
        out[3..7].copy_from_slice(&self.bias);
        out[7..11].copy_from_slice(&self.bias_prev);
        out
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        crate::error::check_len("observation", OBS_DIM, v.len())?;
        let mut bias = [0.0; N_CHANNELS];
        let mut bias_prev = [0.0; N_CHANNELS];
        bias.copy_from_slice(&v[3..7]);
        bias_prev.copy_from_slice(&v[7..11]);
        Ok(Observation {
            dx: v[0],
            dy: v[1],
            dtheta: v[2],
            bias,
            bias_prev,
        })
    }

    pub fn distance(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

/// Four chamber biases in `[0, 1]` and a continuous propagation direction in
/// `[−1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub bias: [f64; N_CHANNELS],
    pub direction: f64,
}

impl Action {
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        crate::error::check_len("action", ACT_DIM, v.len())?;
        let mut bias = [0.0; N_CHANNELS];
        bias.copy_from_slice(&v[..4]);
        Ok(Action {
            bias,
            direction: v[4],
        })
    }

    pub fn to_array(&self) -> [f64; ACT_DIM] {
        [
            self.bias[0],
            self.bias[1],
            self.bias[2],
            self.bias[3],
            self.direction,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.bias.iter().all(|b| b.is_finite()) && self.direction.is_finite()
    }

    pub fn clamped(&self) -> Action {
        Action {
            bias: self.bias.map(|b| b.clamp(0.0, 1.0)),
            direction: self.direction.clamp(-1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    FullAnnulus,
    LeftHalf,
    RightHalf,
}

impl RegionKind {
    /// Half-open polar-angle interval `[start, start + width)`.
    fn angle_range(self) -> (f64, f64) {
        match self {
            RegionKind::FullAnnulus => (-PI, 2.0 * PI),
            RegionKind::LeftHalf => (FRAC_PI_2, PI),
            RegionKind::RightHalf => (-FRAC_PI_2, PI),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RegionKind::FullAnnulus => "full_annulus",
            RegionKind::LeftHalf => "left_half",
            RegionKind::RightHalf => "right_half",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalRegion {
    pub kind: RegionKind,
    pub r_min: f64,
    pub r_max: f64,
    #[serde(default)]
    pub center: Vec2,
}

impl GoalRegion {
    pub fn new(kind: RegionKind, r_min: f64, r_max: f64) -> Self {
        GoalRegion {
            kind,
            r_min,
            r_max,
            center: Vec2::ZERO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_min > 0.0 && self.r_min < self.r_max && self.r_max.is_finite()) {
            return Err(Error::Config(format!(
                "goal region needs 0 < r_min < r_max, got r_min = {}, r_max = {}",
                self.r_min, self.r_max
            )));
        }
        Ok(())
    }

    /// Uniform sample over the region's area.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec2 {
        let (start, width) = self.kind.angle_range();
        let r2 = rng.random_range(self.r_min * self.r_min..self.r_max * self.r_max);
        let phi = start + width * rng.random::<f64>();
        self.center + Vec2::from_angle(phi) * r2.sqrt()
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let rel = p - self.center;
        let r = rel.norm();
        if r < self.r_min || r > self.r_max {
            return false;
        }
        let (start, width) = self.kind.angle_range();
        let phi = rel.y.atan2(rel.x);
        (phi - start).rem_euclid(2.0 * PI) < width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    /// Success radius around the goal, meters.
    pub epsilon: f64,
    pub max_steps: usize,
    pub r_success: f64,
    pub alpha_w: f64,
    pub beta_w: f64,
    pub gamma: f64,
    /// Simulated seconds per MDP step.
    pub control_interval: f64,
    /// Integrator step, seconds.
    pub dt: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            epsilon: 0.03,
            max_steps: 150,
            r_success: 50.0,
            alpha_w: 0.15,
            beta_w: 1.0,
            gamma: 0.99,
            control_interval: 1.0,
            dt: 0.01,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be > 0".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must be in (0, 1), got {}", self.gamma)));
        }
        if !(self.dt > 0.0 && self.control_interval >= self.dt) {
            return Err(Error::Config(format!(
                "need 0 < dt <= control_interval, got dt = {}, control_interval = {}",
                self.dt, self.control_interval
            )));
        }
        Ok(())
    }

    pub fn substeps(&self) -> usize {
        ((self.control_interval / self.dt).round() as usize).max(1)
    }
}

/// `r = −(α d_t/d_0 + β |Δθ|/π) + [success] R_success`.
pub fn compute_reward(d_t: f64, d_0: f64, dtheta: f64, success: bool, cfg: &EpisodeConfig) -> Result<f64> {
    if !(d_0 > 0.0) {
        return Err(Error::domain("initial distance", format!("d_0 = {d_0} must be > 0")));
    }
    let shaping = -(cfg.alpha_w * d_t / d_0 + cfg.beta_w * dtheta.abs() / PI);
    Ok(if success { shaping + cfg.r_success } else { shaping })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

/// Single goal-reaching episode driver. Not shared across threads; run one
/// instance per worker.
#[derive(Debug, Clone)]
pub struct SnakeEnv {
    model: SnakeModel,
    cfg: EpisodeConfig,
    state: SnakeState,
    channel: ChannelState,
    goal: Vec2,
    d0: f64,
    steps: usize,
    done: bool,
}

impl SnakeEnv {
    pub fn new(model: SnakeModel, cfg: EpisodeConfig) -> Result<Self> {
        model.validate()?;
        cfg.validate()?;
        let channel = ChannelState::default();
        let state = SnakeState::at_rest(Vec2::ZERO, 0.0, model.initial_curvature(&channel)?);
        Ok(SnakeEnv {
            model,
            cfg,
            state,
            channel,
            goal: Vec2::new(1.0, 0.0),
            d0: 1.0,
            steps: 0,
            done: true,
        })
    }

    pub fn model(&self) -> &SnakeModel {
        &self.model
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn state(&self) -> &SnakeState {
        &self.state
    }

    pub fn goal(&self) -> Vec2 {
        self.goal
    }

    pub fn initial_distance(&self) -> f64 {
        self.d0
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Starts an episode with a goal drawn from `region`.
    pub fn reset(&mut self, region: &GoalRegion, seed: u64) -> Result<(Observation, Vec2)> {
        region.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let goal = region.sample(&mut rng);
        Ok((self.reset_with_goal(goal)?, goal))
    }

    pub fn reset_with_goal(&mut self, goal: Vec2) -> Result<Observation> {
        if !goal.is_finite() {
            return Err(Error::domain("goal", "non-finite coordinates"));
        }
        self.channel = ChannelState::default();
        self.state = SnakeState::at_rest(Vec2::ZERO, 0.0, self.model.initial_curvature(&self.channel)?);
        self.goal = goal;
        // A goal on top of the start would make d_t/d_0 undefined.
        self.d0 = (goal - self.state.com).norm().max(1e-9);
        self.steps = 0;
        self.done = false;
        Ok(self.observe())
    }

    pub fn observe(&self) -> Observation {
        let delta = self.goal - self.state.com;
        let goal_bearing = delta.y.atan2(delta.x);
        Observation {
            dx: delta.x,
            dy: delta.y,
            dtheta: wrap_angle(goal_bearing - self.state.heading),
            bias: self.channel.bias,
            bias_prev: self.channel.bias_prev,
        }
    }

    pub fn trace_point(&self) -> TracePoint {
        TracePoint::of(&self.state)
    }

    pub fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        if !action.is_finite() {
            return Err(Error::Numeric {
                what: "action".into(),
                index: self.steps,
            });
        }
        let action = action.clamped();
        self.channel = self
            .channel
            .advance(action.bias, Direction::from_continuous(action.direction));
        let dt = self.cfg.dt;
        for _ in 0..self.cfg.substeps() {
            self.state = self.model.step(&self.state, &self.channel, dt)?;
        }
        self.steps += 1;

        let observation = self.observe();
        let d_t = observation.distance();
        let success = d_t <= self.cfg.epsilon;
        let reward = compute_reward(d_t, self.d0, observation.dtheta, success, &self.cfg)?;
        self.done = success || self.steps >= self.cfg.max_steps;
        Ok(StepOutcome {
            observation,
            reward,
            done: self.done,
            success,
        })
    }
}
