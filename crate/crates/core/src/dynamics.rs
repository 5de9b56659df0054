//! Bulk rigid-body dynamics of the snake under anisotropic Coulomb friction.
//!
//! Integrating the per-point balance `ρ ẍ = f_fric + f_int` over the body
//! cancels the internal forces, leaving
//!
//! ```text
//! M · a_com = ∫ f_fric ds
//! I · α     = ∫ (x − x̄) × f_fric ds
//! ```
//!
//! with `M = ρL` and a shape-dependent rotational inertia. The shape itself
//! is prescribed by the actuation; only the centre of mass and mean heading
//! are dynamic.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::kinematics::{
    body_positions, curvature_at, mean_zero_antiderivative, reconstruct_shape, ActuationConfig,
    BodyGrid, ChannelState, ShapeField, Vec2,
};

/// Speed regularization for the slip direction, m/s.
pub const SLIP_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalParams {
    /// Linear density, kg/m.
    pub rho: f64,
    pub g: f64,
    pub mu_f: f64,
    pub mu_b: f64,
    pub mu_t: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            rho: 0.6,
            g: 9.81,
            mu_f: 0.1,
            mu_b: 0.15,
            mu_t: 0.2,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("rho", self.rho),
            ("g", self.g),
            ("mu_f", self.mu_f),
            ("mu_b", self.mu_b),
            ("mu_t", self.mu_t),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.mu_f > self.mu_b {
            return Err(Error::Config(format!(
                "forward friction ({}) must not exceed backward friction ({})",
                self.mu_f, self.mu_b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnakeState {
    pub com: Vec2,
    pub com_velocity: Vec2,
    pub heading: f64,
    pub heading_rate: f64,
    pub curvature: Vec<f64>,
    pub curvature_prev: Vec<f64>,
    pub sim_time: f64,
}

impl SnakeState {
    /// Robot at rest at `com`, with `curvature` as both current and previous
    /// shape so the first step sees no shape velocity.
    pub fn at_rest(com: Vec2, heading: f64, curvature: Vec<f64>) -> Self {
        SnakeState {
            com,
            com_velocity: Vec2::ZERO,
            heading,
            heading_rate: 0.0,
            curvature_prev: curvature.clone(),
            curvature,
            sim_time: 0.0,
        }
    }

    pub fn shape(&self, grid: &BodyGrid) -> Result<ShapeField> {
        reconstruct_shape(&self.curvature, self.heading, self.com, grid)
    }

    /// Translational plus rotational kinetic energy of the bulk motion.
    pub fn kinetic_energy(&self, grid: &BodyGrid, params: &PhysicalParams) -> Result<f64> {
        let shape = self.shape(grid)?;
        let inertia = rotational_inertia(&shape, self.com, grid, params);
        let mass = params.rho * grid.length;
        Ok(0.5 * mass * self.com_velocity.norm_sq() + 0.5 * inertia * self.heading_rate.powi(2))
    }
}

/// Friction force density at one body point.
///
/// `unit_velocity` is the (regularized) slip direction and `forward` the unit
/// tangent towards the head. A zero slip direction yields zero force.
pub fn friction_at_point(unit_velocity: Vec2, forward: Vec2, params: &PhysicalParams) -> Result<Vec2> {
    if !unit_velocity.is_finite() || !forward.is_finite() {
        return Err(Error::Numeric {
            what: "friction input".into(),
            index: 0,
        });
    }
    let transverse = forward.perp();
    let along = unit_velocity.dot(forward);
    let mu_l = if along >= 0.0 { params.mu_f } else { params.mu_b };
    let across = unit_velocity.dot(transverse);
    Ok((transverse * (params.mu_t * across) + forward * (mu_l * along)) * (-params.rho * params.g))
}

/// Regularized slip direction `v / (‖v‖ + ε)`.
pub fn slip_direction(v: Vec2) -> Vec2 {
    v * (1.0 / (v.norm() + SLIP_EPSILON))
}

/// Velocity of every body point: rigid translation, rigid rotation about the
/// centre of mass, and the mean-zero shape-change velocity.
pub fn velocity_field(
    state: &SnakeState,
    shape: &ShapeField,
    grid: &BodyGrid,
    dt: f64,
) -> Result<Vec<Vec2>> {
    if !(dt > 0.0) {
        return Err(Error::domain("time step", format!("dt = {dt} must be > 0")));
    }
    check_len("velocity_field shape", grid.n_points, shape.positions.len())?;
    check_len("velocity_field curvature_prev", grid.n_points, state.curvature_prev.len())?;

    let mut prev_angles = mean_zero_antiderivative(&state.curvature_prev, grid)?;
    prev_angles.iter_mut().for_each(|a| *a += state.heading);
    let prev_positions = body_positions(&prev_angles, state.com, grid.ds());

    let inv_dt = 1.0 / dt;
    Ok(shape
        .positions
        .iter()
        .zip(&prev_positions)
        .map(|(&x, &x_prev)| {
            let rel = x - state.com;
            state.com_velocity + rel.perp() * state.heading_rate + (x - x_prev) * inv_dt
        })
        .collect())
}

fn rotational_inertia(shape: &ShapeField, com: Vec2, grid: &BodyGrid, params: &PhysicalParams) -> f64 {
    params.rho
        * shape
            .positions
            .iter()
            .map(|&x| (x - com).norm_sq())
            .sum::<f64>()
        * grid.ds()
}

/// Diagnostics of one integration step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub com_acceleration: Vec2,
    pub angular_acceleration: f64,
    /// Friction force density at every sample, N/m.
    pub friction: Vec<Vec2>,
}

/// The simulated robot: geometry, actuation and ground contact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SnakeModel {
    pub grid: BodyGrid,
    pub actuation: ActuationConfig,
    pub params: PhysicalParams,
}

impl SnakeModel {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.actuation.validate()?;
        self.params.validate()
    }

    /// Position within the current actuation period at the end of a step,
    /// taken in `(0, T]` so the last substep of a period still sees that
    /// period's bias ramp.
    pub fn period_phase(&self, sim_time: f64) -> f64 {
        let period = self.actuation.period;
        let cycles = (sim_time / period - 1e-9).ceil() - 1.0;
        (sim_time - cycles * period).clamp(0.0, period)
    }

    /// Curvature at the start of a period for the given channels.
    pub fn initial_curvature(&self, ch: &ChannelState) -> Result<Vec<f64>> {
        curvature_at(0.0, &self.actuation, ch, &self.grid)
    }

    pub fn step(&self, state: &SnakeState, channel: &ChannelState, dt: f64) -> Result<SnakeState> {
        self.step_with_report(state, channel, dt).map(|(s, _)| s)
    }

    /// One semi-implicit Euler step: friction → accelerations → velocities →
    /// pose, then the prescribed shape is advanced.
    pub fn step_with_report(
        &self,
        state: &SnakeState,
        channel: &ChannelState,
        dt: f64,
    ) -> Result<(SnakeState, StepReport)> {
        if !(dt > 0.0) {
            return Err(Error::domain("time step", format!("dt = {dt} must be > 0")));
        }
        if dt > self.actuation.period / 20.0 * (1.0 + 1e-12) {
            return Err(Error::domain(
                "time step",
                format!(
                    "dt = {dt} is larger than T/20 = {}",
                    self.actuation.period / 20.0
                ),
            ));
        }
        check_len("state curvature", self.grid.n_points, state.curvature.len())?;

        let grid = &self.grid;
        let params = &self.params;
        let ds = grid.ds();
        let shape = state.shape(grid)?;
        let velocities = velocity_field(state, &shape, grid, dt)?;

        let mut friction = Vec::with_capacity(grid.n_points);
        let mut force = Vec2::ZERO;
        let mut torque = 0.0;
        for (i, ((&x, &v), &theta)) in shape
            .positions
            .iter()
            .zip(&velocities)
            .zip(&shape.angles)
            .enumerate()
        {
            let f = friction_at_point(slip_direction(v), Vec2::from_angle(theta), params)
                .map_err(|_| Error::Numeric {
                    what: "point velocity".into(),
                    index: i,
                })?;
            if !f.is_finite() {
                return Err(Error::Numeric {
                    what: "friction force".into(),
                    index: i,
                });
            }
            force += f * ds;
            torque += (x - state.com).cross(f) * ds;
            friction.push(f);
        }

        let mass = params.rho * grid.length;
        let inertia = rotational_inertia(&shape, state.com, grid, params);
        let com_acceleration = force * (1.0 / mass);
        let angular_acceleration = torque / inertia;
        if !com_acceleration.is_finite() || !angular_acceleration.is_finite() {
            return Err(Error::Numeric {
                what: "bulk acceleration".into(),
                index: grid.n_points,
            });
        }

        let com_velocity = state.com_velocity + com_acceleration * dt;
        let heading_rate = state.heading_rate + angular_acceleration * dt;
        let sim_time = state.sim_time + dt;
        let curvature = curvature_at(self.period_phase(sim_time), &self.actuation, channel, grid)?;

        let next = SnakeState {
            com: state.com + com_velocity * dt,
            com_velocity,
            heading: state.heading + heading_rate * dt,
            heading_rate,
            curvature_prev: state.curvature.clone(),
            curvature,
            sim_time,
        };
        Ok((
            next,
            StepReport {
                com_acceleration,
                angular_acceleration,
                friction,
            },
        ))
    }
}

/// One row of the optional per-step trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub time: f64,
    pub com_x: f64,
    pub com_y: f64,
    pub heading: f64,
}

impl TracePoint {
    pub fn of(state: &SnakeState) -> Self {
        TracePoint {
            time: state.sim_time,
            com_x: state.com.x,
            com_y: state.com.y,
            heading: state.heading,
        }
    }
}

pub const TRACE_CSV_HEADER: &str = "time,com_x,com_y,heading";

pub fn trace_to_csv(trace: &[TracePoint]) -> String {
    let mut out = String::with_capacity(trace.len() * 64 + 32);
    out.push_str(TRACE_CSV_HEADER);
    out.push('\n');
    for p in trace {
        out.push_str(&format!("{},{},{},{}\n", p.time, p.com_x, p.com_y, p.heading));
    }
    out
}
