//! Count-penalized implicit Q-learning.
//!
//! Visits to each cell of a uniform grid over the normalized `(s, a)` space
//! are counted once from the dataset. Rarely visited pairs receive a
//! penalty that shrinks with the count; the penalty is subtracted from the
//! bootstrapped value in the critic target and from the advantage that
//! weights the policy regression. Its strength decays linearly to zero over
//! training.
//!
//! A k-nearest-neighbor pseudo-count is a drop-in alternative to the grid
//! when bin widths are hard to choose; only the grid is implemented.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::algo::{implicit_update, run_training, Algorithm, EvalHook, Learner, Penalty, TrainOutcome, TrainerConfig};
use crate::dataset::{OfflineDataset, PreparedData};
use crate::env::{ACT_DIM, OBS_DIM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    Wasserstein,
    #[default]
    Kl,
    ChiSquare,
    /// Same closed form as chi-square.
    TotalVariation,
}

impl PenaltyKind {
    pub const ALL: [PenaltyKind; 4] = [
        PenaltyKind::Wasserstein,
        PenaltyKind::Kl,
        PenaltyKind::ChiSquare,
        PenaltyKind::TotalVariation,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyConfig {
    pub kind: PenaltyKind,
    pub alpha0: f64,
    /// Decay horizon in gradient steps; `None` means the run length.
    pub t_max: Option<usize>,
    pub in_target: bool,
    pub in_advantage: bool,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            kind: PenaltyKind::Kl,
            alpha0: 0.1,
            t_max: None,
            in_target: true,
            in_advantage: true,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 >= 0.0 && self.alpha0.is_finite()) {
            return Err(Error::Config(format!("penalty.alpha0 must be >= 0, got {}", self.alpha0)));
        }
        if self.t_max == Some(0) {
            return Err(Error::Config("penalty.t_max must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CounterConfig {
    /// Cell width in normalized units, shared by every dimension. One
    /// standard deviation keeps the median cell above a single visit on a
    /// 500-episode dataset; much finer and nearly every pair is unique.
    pub bin_width: f64,
}

impl Default for CounterConfig {
    fn default() -> Self {
        CounterConfig { bin_width: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisaConfig {
    pub trainer: TrainerConfig,
    pub penalty: PenaltyConfig,
    pub counter: CounterConfig,
}

impl DisaConfig {
    pub fn validate(&self) -> Result<()> {
        self.trainer.validate()?;
        self.penalty.validate()?;
        if !(self.counter.bin_width > 0.0 && self.counter.bin_width.is_finite()) {
            return Err(Error::Config(format!(
                "counter.bin_width must be > 0, got {}",
                self.counter.bin_width
            )));
        }
        Ok(())
    }

    pub fn t_max(&self) -> usize {
        self.penalty.t_max.unwrap_or(self.trainer.total_steps).max(1)
    }
}

const JOINT_DIM: usize = OBS_DIM + ACT_DIM;

/// Sparse visit counts over grid cells of the joint `(s, a)` space.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitationCounter {
    bin_widths: [f64; JOINT_DIM],
    counts: HashMap<[i64; JOINT_DIM], u64>,
    total: u64,
}

impl VisitationCounter {
    pub fn new(bin_width: f64) -> Result<Self> {
        Self::with_widths([bin_width; JOINT_DIM])
    }

    pub fn with_widths(bin_widths: [f64; JOINT_DIM]) -> Result<Self> {
        if let Some(w) = bin_widths.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::Config(format!("counter bin width must be > 0, got {w}")));
        }
        Ok(VisitationCounter {
            bin_widths,
            counts: HashMap::new(),
            total: 0,
        })
    }

    /// Counts every `(observation, action)` row of normalized data once.
    pub fn build(data: &PreparedData, bin_width: f64) -> Result<Self> {
        let mut c = Self::new(bin_width)?;
        for (i, (o, a)) in data.obs.rows().into_iter().zip(data.act.rows()).enumerate() {
            if o.iter().chain(a.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Data {
                    index: i,
                    detail: "non-finite observation or action".into(),
                });
            }
            c.insert(o, a);
        }
        Ok(c)
    }

    pub fn cell(&self, obs: ArrayView1<f64>, act: ArrayView1<f64>) -> [i64; JOINT_DIM] {
        let mut key = [0i64; JOINT_DIM];
        for (k, (x, w)) in key.iter_mut().zip(obs.iter().chain(act.iter()).zip(&self.bin_widths)) {
            *k = (x / w).floor() as i64;
        }
        key
    }

    pub fn insert(&mut self, obs: ArrayView1<f64>, act: ArrayView1<f64>) {
        *self.counts.entry(self.cell(obs, act)).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn count(&self, obs: ArrayView1<f64>, act: ArrayView1<f64>) -> u64 {
        self.counts.get(&self.cell(obs, act)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn occupied_cells(&self) -> usize {
        self.counts.len()
    }

    pub fn cell_counts(&self) -> impl Iterator<Item = u64> + '_ {
        self.counts.values().copied()
    }

    /// Counts for every row of `data`, in row order.
    pub fn counts_for(&self, data: &PreparedData) -> Vec<u64> {
        data.obs
            .rows()
            .into_iter()
            .zip(data.act.rows())
            .map(|(o, a)| self.count(o, a))
            .collect()
    }
}

/// Penalty for a pair visited `n` times.
pub fn penalty(n: u64, kind: PenaltyKind, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::domain("penalty", format!("alpha = {alpha} is negative")));
    }
    let m = n as f64 + 1.0;
    Ok(match kind {
        PenaltyKind::Wasserstein => alpha / m.sqrt(),
        PenaltyKind::Kl => alpha * (2.0 / m).sqrt(),
        PenaltyKind::ChiSquare | PenaltyKind::TotalVariation => alpha / m,
    })
}

/// `α₀ (1 − t / T_max)`, clamped at zero past the horizon.
pub fn alpha_at(t: f64, alpha0: f64, t_max: usize) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain("alpha_at", format!("step t = {t} is negative")));
    }
    if t_max == 0 {
        return Err(Error::domain("alpha_at", "t_max must be > 0"));
    }
    Ok((alpha0 * (1.0 - t / t_max as f64)).max(0.0))
}

/// One penalized update with strength `alpha`. `counts` holds the visit
/// count of each batch row. Returns `[value, q, policy]` losses.
pub fn disa_update(
    learner: &mut Learner,
    batch: &crate::dataset::Batch,
    counts: &[u64],
    cfg: &PenaltyConfig,
    alpha: f64,
) -> Result<[f64; 3]> {
    if counts.len() != batch.len() {
        return Err(Error::Dimension {
            what: "penalty counts",
            expected: batch.len(),
            got: counts.len(),
        });
    }
    let values = counts
        .iter()
        .map(|&n| penalty(n, cfg.kind, alpha))
        .collect::<Result<Vec<_>>>()?;
    let values = Array2::from_shape_vec((values.len(), 1), values).expect("column");
    implicit_update(
        learner,
        batch,
        Some(Penalty {
            values: &values,
            in_target: cfg.in_target,
            in_advantage: cfg.in_advantage,
        }),
    )
}

/// Trains the penalized learner. The log gains an `alpha_t` column.
pub fn train_disa(dataset: &OfflineDataset, cfg: &DisaConfig, eval: Option<&EvalHook>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut trainer = cfg.trainer.clone();
    trainer.algorithm = Algorithm::DisaIql;
    let data = dataset.prepare()?;
    let counter = VisitationCounter::build(&data, cfg.counter.bin_width)?;
    let counts = counter.counts_for(&data);
    let t_max = cfg.t_max();
    let hash = crate::container::sha256_hex(&serde_json::to_vec(cfg).expect("config serializes"));
    run_training(dataset, &trainer, hash, eval, &["alpha_t"], |learner, batch| {
        let alpha = alpha_at(learner.step as f64, cfg.penalty.alpha0, t_max)?;
        let batch_counts: Vec<u64> = batch.indices.iter().map(|&i| counts[i]).collect();
        let losses = disa_update(learner, batch, &batch_counts, &cfg.penalty, alpha)?;
        Ok((losses.to_vec(), vec![alpha]))
    })
}

/// Trains `cfg.trainer.algorithm`; the penalty and counter blocks only
/// matter for the count-penalized learner.
pub fn train_configured(dataset: &OfflineDataset, cfg: &DisaConfig, eval: Option<&EvalHook>) -> Result<TrainOutcome> {
    match cfg.trainer.algorithm {
        Algorithm::DisaIql => train_disa(dataset, cfg, eval),
        _ => crate::algo::train(dataset, &cfg.trainer, eval),
    }
}
