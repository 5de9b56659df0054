//! Backbone geometry of the planar soft snake.
//!
//! The body is an inextensible curve parameterized by arc length `s ∈ [0, L]`
//! measured from the tail. Bulk pose (centre of mass and mean heading) and
//! shape are decoupled with the mean-zero anti-derivative `I₀`:
//!
//! ```text
//! θ(s) = θ̄ + I₀[κ](s)
//! X(s) = X̄ + I₀[(cos θ, sin θ)](s)
//! ```
//!
//! Curvature comes from the pressure difference across the body,
//! `κ = K_b · Δp`, and the four channel pressures follow a sinusoidal
//! schedule with a per-period linear bias ramp.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub const N_CHANNELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Vec2 { x: c, y: s }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the planar cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    /// Rotation by +90°.
    pub fn perp(self) -> Vec2 {
        Vec2 {
            x: -self.y,
            y: self.x,
        }
    }

    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2 {
            x: c * self.x - s * self.y,
            y: s * self.x + c * self.y,
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Uniform arc-length samples over `[0, L]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyGrid {
    pub n_points: usize,
    pub length: f64,
}

impl Default for BodyGrid {
    fn default() -> Self {
        BodyGrid {
            n_points: 129,
            length: 0.5,
        }
    }
}

impl BodyGrid {
    pub fn new(n_points: usize, length: f64) -> Result<Self> {
        let grid = BodyGrid { n_points, length };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 3 {
            return Err(Error::Config(format!(
                "body grid needs at least 3 points, got {}",
                self.n_points
            )));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::Config(format!(
                "body length must be positive, got {}",
                self.length
            )));
        }
        Ok(())
    }

    pub fn ds(&self) -> f64 {
        self.length / (self.n_points - 1) as f64
    }

    pub fn arc_position(&self, index: usize) -> f64 {
        // Exact at both ends.
        if index + 1 == self.n_points {
            self.length
        } else {
            index as f64 * self.ds()
        }
    }

    pub fn arc_positions(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.arc_position(i))
    }
}

/// Backbone shape sampled on a [`BodyGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeField {
    pub positions: Vec<Vec2>,
    pub angles: Vec<f64>,
    pub curvature: Vec<f64>,
}

impl ShapeField {
    pub fn mean_position(&self) -> Vec2 {
        let n = self.positions.len() as f64;
        let sum = self
            .positions
            .iter()
            .fold(Vec2::ZERO, |acc, &p| acc + p);
        sum * (1.0 / n)
    }

    pub fn mean_angle(&self) -> f64 {
        self.angles.iter().sum::<f64>() / self.angles.len() as f64
    }

    /// Polyline length of the sampled backbone.
    pub fn polyline_length(&self) -> f64 {
        self.positions
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .sum()
    }

    pub fn head(&self) -> Vec2 {
        *self.positions.last().expect("shape has at least 3 points")
    }
}

/// Magnitude, period and elasticity of the pneumatic actuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActuationConfig {
    /// Pressure magnitude `p_m` (normalized units).
    pub p_m: f64,
    /// Actuation period `T` in seconds.
    pub period: f64,
    /// Curvature per unit pressure difference, `K_b`.
    pub k_b: f64,
}

impl Default for ActuationConfig {
    fn default() -> Self {
        ActuationConfig {
            p_m: 0.5,
            period: 1.0,
            k_b: 16.0,
        }
    }
}

impl ActuationConfig {
    /// `p_m = 0` is accepted: it switches the travelling wave off entirely.
    pub fn validate(&self) -> Result<()> {
        if !(self.p_m >= 0.0 && self.p_m.is_finite()) {
            return Err(Error::Config(format!("p_m must be >= 0, got {}", self.p_m)));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::Config(format!(
                "actuation period must be > 0, got {}",
                self.period
            )));
        }
        if !(self.k_b > 0.0 && self.k_b.is_finite()) {
            return Err(Error::Config(format!("K_b must be > 0, got {}", self.k_b)));
        }
        Ok(())
    }
}

/// Wave propagation direction `c ∈ {−1, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Direction {
    #[default]
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    /// Discretizes a continuous direction command; ties go forward.
    pub fn from_continuous(c: f64) -> Self {
        if c >= 0.0 {
            Direction::Forward
        } else {
            Direction::Backward
        }
    }
}

/// Per-channel pressure biases for the current period and the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelState {
    pub bias: [f64; N_CHANNELS],
    pub bias_prev: [f64; N_CHANNELS],
    pub direction: Direction,
}

impl ChannelState {
    pub fn validate(&self) -> Result<()> {
        for (i, &b) in self.bias.iter().chain(self.bias_prev.iter()).enumerate() {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::domain(
                    "channel bias",
                    format!("entry {i} = {b} is outside [0, 1]"),
                ));
            }
        }
        Ok(())
    }

    /// Installs new biases for the next period, rolling the current ones
    /// into the history slot.
    pub fn advance(&self, bias: [f64; N_CHANNELS], direction: Direction) -> ChannelState {
        ChannelState {
            bias,
            bias_prev: self.bias,
            direction,
        }
    }
}

/// Mean-zero anti-derivative `I₀[f]` on the grid: cumulative trapezoidal
/// integral from the tail with its discrete mean removed.
pub fn mean_zero_antiderivative(f: &[f64], grid: &BodyGrid) -> Result<Vec<f64>> {
    check_len("mean_zero_antiderivative input", grid.n_points, f.len())?;
    let ds = grid.ds();
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in f.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * ds;
        out.push(acc);
    }
    remove_mean(&mut out);
    Ok(out)
}

fn remove_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Channel pressure `p_i(t_r)` within one actuation period. `channel` is
/// 1-based.
pub fn pressure_schedule(
    t_r: f64,
    channel: usize,
    cfg: &ActuationConfig,
    ch: &ChannelState,
) -> Result<f64> {
    if !(0.0..=cfg.period).contains(&t_r) {
        return Err(Error::domain(
            "time within period",
            format!("t_r = {t_r} is outside [0, {}]", cfg.period),
        ));
    }
    if !(1..=N_CHANNELS).contains(&channel) {
        return Err(Error::Index {
            what: "pressure channel (1-based)",
            index: channel,
        });
    }
    let i = channel - 1;
    let phase = ch.direction.sign() * 2.0 * PI * t_r / cfg.period + i as f64 * FRAC_PI_2;
    let ramp = t_r / cfg.period;
    Ok(cfg.p_m * phase.sin() + ch.bias_prev[i] + (ch.bias[i] - ch.bias_prev[i]) * ramp)
}

/// All four channel pressures at `t_r`.
pub fn channel_pressures(
    t_r: f64,
    cfg: &ActuationConfig,
    ch: &ChannelState,
) -> Result<[f64; N_CHANNELS]> {
    let mut p = [0.0; N_CHANNELS];
    for (i, slot) in p.iter_mut().enumerate() {
        *slot = pressure_schedule(t_r, i + 1, cfg, ch)?;
    }
    Ok(p)
}

/// Spatial weight of channel `i` (0-based) at arc position `s`.
///
/// Quarter-phase sinusoids, halved so that the zero-bias schedule gives
/// `max |Δp| = p_m`. Channels `i` and `i + 2` are antagonistic.
fn channel_weight(i: usize, s: f64, length: f64) -> f64 {
    0.5 * (2.0 * PI * s / length - i as f64 * FRAC_PI_2).sin()
}

/// Local pressure difference `Δp(s)` across the body.
pub fn pressure_difference(s: f64, pressures: &[f64; N_CHANNELS], grid: &BodyGrid) -> Result<f64> {
    if !(0.0..=grid.length).contains(&s) {
        return Err(Error::domain(
            "arc position",
            format!("s = {s} is outside [0, {}]", grid.length),
        ));
    }
    Ok(pressures
        .iter()
        .enumerate()
        .map(|(i, &p)| channel_weight(i, s, grid.length) * p)
        .sum())
}

/// `Δp` sampled at every grid point.
pub fn pressure_difference_field(pressures: &[f64; N_CHANNELS], grid: &BodyGrid) -> Vec<f64> {
    grid.arc_positions()
        .map(|s| {
            pressures
                .iter()
                .enumerate()
                .map(|(i, &p)| channel_weight(i, s, grid.length) * p)
                .sum()
        })
        .collect()
}

/// `κ = K_b · Δp`, elementwise.
pub fn curvature_from_pressure(delta_p: &[f64], k_b: f64) -> Vec<f64> {
    delta_p.iter().map(|&dp| k_b * dp).collect()
}

/// Curvature field produced by the actuation at `t_r` into the period.
pub fn curvature_at(
    t_r: f64,
    cfg: &ActuationConfig,
    ch: &ChannelState,
    grid: &BodyGrid,
) -> Result<Vec<f64>> {
    let p = channel_pressures(t_r, cfg, ch)?;
    Ok(curvature_from_pressure(
        &pressure_difference_field(&p, grid),
        cfg.k_b,
    ))
}

/// Rebuilds the backbone from curvature and bulk pose.
///
/// Angles use `I₀[κ]` directly. Positions integrate the tangent with the
/// segment-midpoint angle, which keeps every segment exactly `ds` long, and
/// then remove the mean so the discrete centroid equals `com`.
pub fn reconstruct_shape(
    curvature: &[f64],
    heading_mean: f64,
    com: Vec2,
    grid: &BodyGrid,
) -> Result<ShapeField> {
    let mut angles = mean_zero_antiderivative(curvature, grid)?;
    angles.iter_mut().for_each(|a| *a += heading_mean);
    let positions = body_positions(&angles, com, grid.ds());
    Ok(ShapeField {
        positions,
        angles,
        curvature: curvature.to_vec(),
    })
}

pub(crate) fn body_positions(angles: &[f64], com: Vec2, ds: f64) -> Vec<Vec2> {
    let mut pos = Vec::with_capacity(angles.len());
    let mut acc = Vec2::ZERO;
    pos.push(acc);
    for w in angles.windows(2) {
        acc += Vec2::from_angle(0.5 * (w[0] + w[1])) * ds;
        pos.push(acc);
    }
    let n = pos.len() as f64;
    let mean = pos.iter().fold(Vec2::ZERO, |a, &p| a + p) * (1.0 / n);
    let shift = com - mean;
    pos.iter_mut().for_each(|p| *p += shift);
    pos
}
