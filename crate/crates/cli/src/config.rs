//! The run configuration: one JSON document covering every pipeline stage.
//!
//! Missing keys take their defaults, unknown keys are rejected, and the
//! fully materialized copy is written next to every artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use softsnake::algo::TrainerConfig;
use softsnake::behavior::ScriptedSteering;
use softsnake::dataset::CollectConfig;
use softsnake::disa::{CounterConfig, DisaConfig, PenaltyConfig};
use softsnake::dynamics::{PhysicalParams, SnakeModel};
use softsnake::env::{EpisodeConfig, GoalRegion};
use softsnake::eval::EvalProtocol;
use softsnake::kinematics::{ActuationConfig, BodyGrid};
use softsnake::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetBlock {
    pub n_episodes: usize,
    pub random_fraction: f64,
    pub behavior: ScriptedSteering,
}

impl Default for DatasetBlock {
    fn default() -> Self {
        let c = CollectConfig::default();
        DatasetBlock {
            n_episodes: c.n_episodes,
            random_fraction: c.random_fraction,
            behavior: ScriptedSteering::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationBlock {
    /// Region the dataset is collected in.
    pub train_region: GoalRegion,
    pub test_regions: Vec<GoalRegion>,
    pub n_goals: usize,
    /// Seeds the goal sets, shared by every algorithm and training seed.
    pub seed: u64,
    pub deterministic: bool,
    /// Write one COM trajectory CSV per goal.
    pub write_trajectories: bool,
}

impl Default for EvaluationBlock {
    fn default() -> Self {
        let p = EvalProtocol::default();
        EvaluationBlock {
            train_region: p.train_region,
            test_regions: p.test_regions,
            n_goals: p.n_goals,
            seed: p.seed,
            deterministic: p.deterministic,
            write_trajectories: true,
        }
    }
}

impl EvaluationBlock {
    pub fn protocol(&self) -> EvalProtocol {
        EvalProtocol {
            train_region: self.train_region,
            test_regions: self.test_regions.clone(),
            n_goals: self.n_goals,
            seed: self.seed,
            deterministic: self.deterministic,
        }
    }
}

/// Open-loop gait rollout settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateBlock {
    /// Integrator steps of `environment.dt`.
    pub steps: usize,
    pub bias: [f64; 4],
    /// Wave direction, positive for forward.
    pub direction: f64,
}

impl Default for SimulateBlock {
    fn default() -> Self {
        SimulateBlock {
            steps: 500,
            bias: [0.0; 4],
            direction: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Seeds data collection and training.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub physics: PhysicalParams,
    pub body: BodyGrid,
    pub actuation: ActuationConfig,
    pub environment: EpisodeConfig,
    pub simulate: SimulateBlock,
    pub dataset: DatasetBlock,
    pub trainer: TrainerConfig,
    pub penalty: PenaltyConfig,
    pub counter: CounterConfig,
    pub evaluation: EvaluationBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            physics: PhysicalParams::default(),
            body: BodyGrid::default(),
            actuation: ActuationConfig::default(),
            environment: EpisodeConfig::default(),
            simulate: SimulateBlock::default(),
            dataset: DatasetBlock::default(),
            trainer: TrainerConfig::default(),
            penalty: PenaltyConfig::default(),
            counter: CounterConfig::default(),
            evaluation: EvaluationBlock::default(),
        }
    }
}

impl RunConfig {
    /// Reads `path` (or starts from defaults), applies `key=value`
    /// overrides and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, Error> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let raw: Value = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                let parsed: RunConfig = serde_json::from_value(raw)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                serde_json::to_value(parsed).expect("config serializes")
            }
            None => serde_json::to_value(RunConfig::default()).expect("config serializes"),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every problem at once, joined into one config error.
    pub fn validate(&self) -> Result<(), Error> {
        let mut problems = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            problems.push(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let mut check = |block: &str, r: Result<(), Error>| {
            if let Err(e) = r {
                problems.push(format!("{block}: {e}"));
            }
        };
        check("physics", self.physics.validate());
        check("body", self.body.validate());
        check("actuation", self.actuation.validate());
        check("environment", self.environment.validate());
        check("dataset", self.collect_config().validate());
        check("trainer", self.trainer.validate());
        check("penalty", self.penalty.validate());
        check("evaluation", self.evaluation.protocol().validate());
        if self.simulate.bias.iter().any(|b| !(0.0..=1.0).contains(b)) {
            problems.push("simulate.bias entries must lie in [0, 1]".into());
        }
        if !(self.counter.bin_width > 0.0 && self.counter.bin_width.is_finite()) {
            problems.push(format!("counter.bin_width must be > 0, got {}", self.counter.bin_width));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn model(&self) -> SnakeModel {
        SnakeModel {
            grid: self.body,
            actuation: self.actuation,
            params: self.physics,
        }
    }

    pub fn collect_config(&self) -> CollectConfig {
        CollectConfig {
            n_episodes: self.dataset.n_episodes,
            random_fraction: self.dataset.random_fraction,
        }
    }

    /// Trainer settings with the run seed installed.
    pub fn disa_config(&self) -> DisaConfig {
        DisaConfig {
            trainer: TrainerConfig {
                seed: self.seed,
                ..self.trainer.clone()
            },
            penalty: self.penalty.clone(),
            counter: self.counter.clone(),
        }
    }

    /// The materialized configuration as written to disk.
    pub fn effective(&self) -> RunConfig {
        let mut c = self.clone();
        c.trainer.seed = self.seed;
        c
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Sets `a.b.c=value` in a JSON tree. The path must already exist, so typos
/// are caught. The value is parsed as JSON and falls back to a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), Error> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not of the form key.path=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for key in path.split('.') {
        node = match node {
            Value::Object(map) => map
                .get_mut(key)
                .ok_or_else(|| Error::Config(format!("unknown config key {path:?}")))?,
            Value::Array(items) => {
                let i: usize = key
                    .parse()
                    .map_err(|_| Error::Config(format!("{path:?}: {key:?} is not an array index")))?;
                let len = items.len();
                items
                    .get_mut(i)
                    .ok_or_else(|| Error::Config(format!("{path:?}: index {i} out of range for {len} items")))?
            }
            _ => return Err(Error::Config(format!("unknown config key {path:?}"))),
        };
    }
    *node = value;
    Ok(())
}
