//! Behavior policies used to populate offline datasets.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{Action, Observation};

/// Something that maps observations to actions, possibly stochastically.
pub trait BehaviorPolicy: Sync {
    fn act(&self, obs: &Observation, rng: &mut dyn rand::RngCore) -> Action;
}

/// Proportional steering on the heading error.
///
/// Left turns load channels 2 and 3, right turns channels 1 and 4; the
/// travelling wave always runs forward. Zero-mean Gaussian noise is added to
/// every action component before clamping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScriptedSteering {
    /// Turn command per radian of heading error.
    pub gain: f64,
    /// Bias applied at full turn command.
    pub max_bias: f64,
    pub noise_std: f64,
}

impl Default for ScriptedSteering {
    fn default() -> Self {
        ScriptedSteering {
            gain: 2.0,
            max_bias: 1.0,
            noise_std: 0.1,
        }
    }
}

impl ScriptedSteering {
    pub fn nominal(&self, obs: &Observation) -> Action {
        let turn = (self.gain * obs.dtheta).clamp(-1.0, 1.0) * self.max_bias;
        let bias = if turn >= 0.0 {
            [0.0, turn, turn, 0.0]
        } else {
            [-turn, 0.0, 0.0, -turn]
        };
        Action {
            bias,
            direction: 1.0,
        }
    }
}

impl BehaviorPolicy for ScriptedSteering {
    fn act(&self, obs: &Observation, rng: &mut dyn rand::RngCore) -> Action {
        let mut a = self.nominal(obs);
        if self.noise_std > 0.0 {
            let noise = Normal::new(0.0, self.noise_std).expect("finite noise std");
            for b in a.bias.iter_mut() {
                *b += noise.sample(rng);
            }
            a.direction += noise.sample(rng);
        }
        a.clamped()
    }
}

/// Uniformly random actions over the full action box.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformRandom;

impl BehaviorPolicy for UniformRandom {
    fn act(&self, _obs: &Observation, rng: &mut dyn rand::RngCore) -> Action {
        Action {
            bias: [rng.random(), rng.random(), rng.random(), rng.random()],
            direction: rng.random_range(-1.0..=1.0),
        }
    }
}
