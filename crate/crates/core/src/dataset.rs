//! Offline transition datasets: collection, normalization, storage and
//! minibatch sampling.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::behavior::{BehaviorPolicy, UniformRandom};
use crate::container;
use crate::dynamics::SnakeModel;
use crate::env::{compute_reward, EpisodeConfig, GoalRegion, Observation, SnakeEnv, ACT_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::seeding::rng_for;

const MAGIC: &[u8; 4] = b"SSDS";
const VERSION: u32 = 1;
const FIELDS_PER_TRANSITION: usize = 2 * OBS_DIM + ACT_DIM + 3;
/// Lower bound on a standard deviation used for scaling.
pub const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observation: [f64; OBS_DIM],
    pub action: [f64; ACT_DIM],
    pub reward: f64,
    pub next_observation: [f64; OBS_DIM],
    /// True terminal (goal reached); timeouts are not terminal.
    pub terminal: bool,
    pub success: bool,
}

impl Transition {
    fn is_finite(&self) -> bool {
        self.observation.iter().all(|v| v.is_finite())
            && self.action.iter().all(|v| v.is_finite())
            && self.reward.is_finite()
            && self.next_observation.iter().all(|v| v.is_finite())
    }

    fn write_fields(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.observation);
        out.extend_from_slice(&self.action);
        out.push(self.reward);
        out.extend_from_slice(&self.next_observation);
        out.push(self.terminal as u8 as f64);
        out.push(self.success as u8 as f64);
    }

    fn read_fields(f: &[f64]) -> Result<Self> {
        let flag = |v: f64| match v {
            0.0 => Ok(false),
            1.0 => Ok(true),
            _ => Err(Error::Format(format!("flag field holds {v}"))),
        };
        let mut t = Transition {
            observation: [0.0; OBS_DIM],
            action: [0.0; ACT_DIM],
            reward: f[OBS_DIM + ACT_DIM],
            next_observation: [0.0; OBS_DIM],
            terminal: flag(f[FIELDS_PER_TRANSITION - 2])?,
            success: flag(f[FIELDS_PER_TRANSITION - 1])?,
        };
        t.observation.copy_from_slice(&f[..OBS_DIM]);
        t.action.copy_from_slice(&f[OBS_DIM..OBS_DIM + ACT_DIM]);
        t.next_observation
            .copy_from_slice(&f[OBS_DIM + ACT_DIM + 1..2 * OBS_DIM + ACT_DIM + 1]);
        Ok(t)
    }
}

/// Affine maps between raw and normalized units.
///
/// Actions are standardized per dimension and rewards divided by their
/// range. Observation statistics are recorded too; learners standardize
/// network inputs with them but the stored observations stay raw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub action_mean: [f64; ACT_DIM],
    pub action_std: [f64; ACT_DIM],
    pub reward_scale: f64,
    pub obs_mean: [f64; OBS_DIM],
    pub obs_std: [f64; OBS_DIM],
}

impl NormStats {
    pub fn identity() -> Self {
        NormStats {
            action_mean: [0.0; ACT_DIM],
            action_std: [1.0; ACT_DIM],
            reward_scale: 1.0,
            obs_mean: [0.0; OBS_DIM],
            obs_std: [1.0; OBS_DIM],
        }
    }

    /// Dimensions whose spread sits at the variance floor map to 0.
    pub fn normalize_action(&self, a: &[f64; ACT_DIM]) -> [f64; ACT_DIM] {
        std::array::from_fn(|i| standardize(a[i], self.action_mean[i], self.action_std[i]))
    }

    pub fn denormalize_action(&self, a: &[f64]) -> [f64; ACT_DIM] {
        std::array::from_fn(|i| a[i] * self.action_std[i] + self.action_mean[i])
    }

    pub fn normalize_obs(&self, o: &[f64; OBS_DIM]) -> [f64; OBS_DIM] {
        std::array::from_fn(|i| standardize(o[i], self.obs_mean[i], self.obs_std[i]))
    }
}

fn standardize(x: f64, mean: f64, std: f64) -> f64 {
    if std <= VARIANCE_FLOOR {
        0.0
    } else {
        (x - mean) / std
    }
}

fn mean_std<const D: usize>(rows: impl Iterator<Item = [f64; D]> + Clone) -> ([f64; D], [f64; D]) {
    let n = rows.clone().count() as f64;
    let mut mean = [0.0; D];
    for r in rows.clone() {
        for i in 0..D {
            mean[i] += r[i];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; D];
    for r in rows {
        for i in 0..D {
            var[i] += (r[i] - mean[i]).powi(2);
        }
    }
    let std = var.map(|v| (v / n).sqrt().max(VARIANCE_FLOOR));
    (mean, std)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    obs_dim: usize,
    act_dim: usize,
    n_transitions: usize,
    episode_starts: Vec<usize>,
    stats: Option<NormStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    transitions: Vec<Transition>,
    episode_starts: Vec<usize>,
    stats: Option<NormStats>,
}

impl OfflineDataset {
    pub fn empty() -> Self {
        OfflineDataset {
            transitions: Vec::new(),
            episode_starts: Vec::new(),
            stats: None,
        }
    }

    /// Concatenates episodes in order.
    pub fn from_episodes(episodes: Vec<Vec<Transition>>) -> Result<Self> {
        let mut ds = Self::empty();
        for ep in episodes {
            if ep.is_empty() {
                return Err(Error::Contract("episodes must be nonempty".into()));
            }
            ds.episode_starts.push(ds.transitions.len());
            ds.transitions.extend(ep);
        }
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.transitions.is_empty() != self.episode_starts.is_empty()
            || self.episode_starts.first().is_some_and(|&s| s != 0)
            || self.episode_starts.windows(2).any(|w| w[0] >= w[1])
            || self.episode_starts.last().is_some_and(|&s| s >= self.transitions.len())
        {
            return Err(Error::Contract("episode boundaries do not partition the dataset".into()));
        }
        for (i, t) in self.transitions.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::Data {
                    index: i,
                    detail: "non-finite field".into(),
                });
            }
        }
        for (e, range) in self.episode_ranges().enumerate() {
            if let Some(i) = (range.start..range.end - 1).find(|&i| self.transitions[i].terminal) {
                return Err(Error::Data {
                    index: i,
                    detail: format!("terminal transition inside episode {e}"),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn episode_starts(&self) -> &[usize] {
        &self.episode_starts
    }

    pub fn n_episodes(&self) -> usize {
        self.episode_starts.len()
    }

    pub fn episode_ranges(&self) -> impl ExactSizeIterator<Item = std::ops::Range<usize>> + '_ {
        let n = self.transitions.len();
        (0..self.episode_starts.len()).map(move |e| {
            let end = self.episode_starts.get(e + 1).copied().unwrap_or(n);
            self.episode_starts[e]..end
        })
    }

    /// Fraction of episodes whose final transition reached the goal.
    pub fn success_fraction(&self) -> f64 {
        if self.episode_starts.is_empty() {
            return 0.0;
        }
        let hits = self
            .episode_ranges()
            .filter(|r| self.transitions[r.end - 1].success)
            .count();
        hits as f64 / self.n_episodes() as f64
    }

    pub fn stats(&self) -> Option<&NormStats> {
        self.stats.as_ref()
    }

    pub fn is_normalized(&self) -> bool {
        self.stats.is_some()
    }

    /// Returns a copy with actions standardized and rewards scaled by the
    /// inverse of their range.
    pub fn normalize(&self) -> Result<OfflineDataset> {
        if self.is_empty() {
            return Err(Error::Contract("cannot normalize an empty dataset".into()));
        }
        if self.is_normalized() {
            return Err(Error::Contract("dataset is already normalized".into()));
        }
        let (action_mean, action_std) = mean_std(self.transitions.iter().map(|t| t.action));
        let (obs_mean, obs_std) = mean_std(self.transitions.iter().map(|t| t.observation));
        let (lo, hi) = self
            .transitions
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                (lo.min(t.reward), hi.max(t.reward))
            });
        let range = hi - lo;
        let reward_scale = if range > VARIANCE_FLOOR { 1.0 / range } else { 1.0 };
        let stats = NormStats {
            action_mean,
            action_std,
            reward_scale,
            obs_mean,
            obs_std,
        };
        let transitions = self
            .transitions
            .iter()
            .map(|t| Transition {
                action: stats.normalize_action(&t.action),
                reward: t.reward * reward_scale,
                ..*t
            })
            .collect();
        Ok(OfflineDataset {
            transitions,
            episode_starts: self.episode_starts.clone(),
            stats: Some(stats),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            obs_dim: OBS_DIM,
            act_dim: ACT_DIM,
            n_transitions: self.len(),
            episode_starts: self.episode_starts.clone(),
            stats: self.stats.clone(),
        };
        let mut payload = Vec::with_capacity(self.len() * FIELDS_PER_TRANSITION);
        for t in &self.transitions {
            t.write_fields(&mut payload);
        }
        container::encode(
            MAGIC,
            VERSION,
            &serde_json::to_value(header).expect("header serializes"),
            &payload,
        )
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = container::decode(bytes, MAGIC, VERSION)?;
        let header: Header = serde_json::from_value(header)
            .map_err(|e| Error::Format(format!("dataset header: {e}")))?;
        if header.obs_dim != OBS_DIM || header.act_dim != ACT_DIM {
            return Err(Error::Format(format!(
                "dataset dimensions {}/{} do not match {OBS_DIM}/{ACT_DIM}",
                header.obs_dim, header.act_dim
            )));
        }
        if payload.len() != header.n_transitions * FIELDS_PER_TRANSITION {
            return Err(Error::Format("payload length disagrees with header".into()));
        }
        let transitions = payload
            .chunks_exact(FIELDS_PER_TRANSITION)
            .map(Transition::read_fields)
            .collect::<Result<Vec<_>>>()?;
        let ds = OfflineDataset {
            transitions,
            episode_starts: header.episode_starts,
            stats: header.stats,
        };
        ds.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(ds)
    }

    /// Writes the dataset; returns the hex SHA-256 of the file.
    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes();
        container::write_file(path, &bytes)?;
        Ok(container::sha256_hex(&bytes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&container::read_file(path)?)
    }

    pub fn checksum(&self) -> String {
        container::sha256_hex(&self.to_bytes())
    }

    /// One transition per row with an `episode` column.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut cols: Vec<String> = vec!["episode".into()];
        cols.extend((0..OBS_DIM).map(|i| format!("obs_{i}")));
        cols.extend((0..ACT_DIM).map(|i| format!("act_{i}")));
        cols.push("reward".into());
        cols.extend((0..OBS_DIM).map(|i| format!("next_obs_{i}")));
        cols.push("terminal".into());
        cols.push("success".into());
        out.push_str(&cols.join(","));
        out.push('\n');
        for (e, range) in self.episode_ranges().enumerate() {
            for t in &self.transitions[range] {
                let _ = write!(out, "{e}");
                for v in t.observation.iter().chain(&t.action).chain([&t.reward]).chain(&t.next_observation) {
                    let _ = write!(out, ",{v}");
                }
                let _ = writeln!(out, ",{},{}", t.terminal as u8, t.success as u8);
            }
        }
        out
    }

    /// Arrays ready for minibatch gathering, with observations standardized
    /// by the dataset statistics.
    pub fn prepare(&self) -> Result<PreparedData> {
        let stats = self
            .stats
            .as_ref()
            .ok_or_else(|| Error::Contract("training requires a normalized dataset".into()))?;
        if self.is_empty() {
            return Err(Error::Contract("training requires a nonempty dataset".into()));
        }
        let n = self.len();
        let mut obs = Array2::zeros((n, OBS_DIM));
        let mut next_obs = Array2::zeros((n, OBS_DIM));
        let mut act = Array2::zeros((n, ACT_DIM));
        let mut rew = Array2::zeros((n, 1));
        let mut done = Array2::zeros((n, 1));
        for (i, t) in self.transitions.iter().enumerate() {
            for (j, v) in stats.normalize_obs(&t.observation).into_iter().enumerate() {
                obs[[i, j]] = v;
            }
            for (j, v) in stats.normalize_obs(&t.next_observation).into_iter().enumerate() {
                next_obs[[i, j]] = v;
            }
            for (j, v) in t.action.into_iter().enumerate() {
                act[[i, j]] = v;
            }
            rew[[i, 0]] = t.reward;
            done[[i, 0]] = t.terminal as u8 as f64;
        }
        Ok(PreparedData {
            obs,
            act,
            rew,
            next_obs,
            done,
        })
    }
}

/// Row-aligned training arrays in normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub obs: Array2<f64>,
    pub act: Array2<f64>,
    pub rew: Array2<f64>,
    pub next_obs: Array2<f64>,
    /// 1 for terminal transitions, else 0.
    pub done: Array2<f64>,
}

/// A minibatch; rows follow `indices`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub obs: Array2<f64>,
    pub act: Array2<f64>,
    pub rew: Array2<f64>,
    pub next_obs: Array2<f64>,
    pub done: Array2<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

impl PreparedData {
    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn gather(&self, indices: Vec<usize>) -> Batch {
        let pick = |a: &Array2<f64>| a.select(ndarray::Axis(0), &indices);
        Batch {
            obs: pick(&self.obs),
            act: pick(&self.act),
            rew: pick(&self.rew),
            next_obs: pick(&self.next_obs),
            done: pick(&self.done),
            indices,
        }
    }

    /// Uniform sampling with replacement.
    pub fn sample_batch<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch> {
        if batch_size == 0 || batch_size > self.len() {
            return Err(Error::Contract(format!(
                "batch size {batch_size} must be in 1..={}",
                self.len()
            )));
        }
        let indices = (0..batch_size).map(|_| rng.random_range(0..self.len())).collect();
        Ok(self.gather(indices))
    }
}

/// How a dataset is collected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollectConfig {
    pub n_episodes: usize,
    /// Fraction of episodes driven by uniformly random actions.
    pub random_fraction: f64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig {
            n_episodes: 500,
            random_fraction: 0.1,
        }
    }
}

impl CollectConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_episodes == 0 {
            return Err(Error::Config("dataset.n_episodes must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.random_fraction) {
            return Err(Error::Config(format!(
                "dataset.random_fraction must be in [0, 1], got {}",
                self.random_fraction
            )));
        }
        Ok(())
    }
}

fn collect_episode(
    behavior: &dyn BehaviorPolicy,
    env: &mut SnakeEnv,
    region: &GoalRegion,
    random_fraction: f64,
    seed: u64,
    index: usize,
) -> Result<Vec<Transition>> {
    let mut rng = rng_for(seed, 2 * index as u64 + 1);
    let random = rng.random::<f64>() < random_fraction;
    let policy: &dyn BehaviorPolicy = if random { &UniformRandom } else { behavior };
    let (mut obs, _) = env.reset(region, crate::seeding::derive_seed(seed, 2 * index as u64))?;
    let mut out = Vec::new();
    loop {
        let action = policy.act(&obs, &mut rng);
        if !action.is_finite() {
            return Err(Error::Data {
                index,
                detail: "behavior policy emitted a non-finite action".into(),
            });
        }
        let action = action.clamped();
        let step = env.step(&action).map_err(|e| Error::Data {
            index,
            detail: format!("simulation failed during collection: {e}"),
        })?;
        out.push(Transition {
            observation: obs.to_array(),
            action: action.to_array(),
            reward: step.reward,
            next_observation: step.observation.to_array(),
            terminal: step.success,
            success: step.success,
        });
        obs = step.observation;
        if step.done {
            return Ok(out);
        }
    }
}

/// Rolls out `cfg.n_episodes` episodes with goals from `region`. Episodes run
/// in parallel and are merged in index order, so the result depends only on
/// the inputs and `seed`.
pub fn collect(
    behavior: &dyn BehaviorPolicy,
    model: &SnakeModel,
    episode: &EpisodeConfig,
    region: &GoalRegion,
    cfg: &CollectConfig,
    seed: u64,
) -> Result<OfflineDataset> {
    cfg.validate()?;
    region.validate()?;
    let template = SnakeEnv::new(*model, *episode)?;
    let episodes = (0..cfg.n_episodes)
        .into_par_iter()
        .map_init(
            || template.clone(),
            |env, i| collect_episode(behavior, env, region, cfg.random_fraction, seed, i),
        )
        .collect::<Result<Vec<_>>>()?;
    OfflineDataset::from_episodes(episodes)
}

/// Re-evaluates the reward of transition `index` from its geometry, using
/// the episode's first observation as the initial distance. Only valid for
/// raw (unnormalized) datasets.
pub fn recompute_reward(ds: &OfflineDataset, index: usize, cfg: &EpisodeConfig) -> Result<f64> {
    let start = match ds.episode_starts.binary_search(&index) {
        Ok(e) => ds.episode_starts[e],
        Err(0) => return Err(Error::Index { what: "transition", index }),
        Err(e) => ds.episode_starts[e - 1],
    };
    let t = ds.transitions.get(index).ok_or(Error::Index { what: "transition", index })?;
    let first = Observation::from_slice(&ds.transitions[start].observation)?;
    let next = Observation::from_slice(&t.next_observation)?;
    compute_reward(next.distance(), first.distance().max(1e-9), next.dtheta, t.success, cfg)
}
