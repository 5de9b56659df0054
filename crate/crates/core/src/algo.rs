//! Offline learners: behavior cloning, conservative Q-learning and implicit
//! Q-learning, plus the training loop shared with the count-penalized
//! variant in [`crate::disa`].
//!
//! All learners work in normalized units: standardized observations,
//! standardized actions and range-scaled rewards. Critics are a pair of Q
//! networks over the concatenated `(s, a)` vector; their elementwise minimum
//! is used wherever a single estimate is needed.

use std::fmt::Write as _;

use ndarray::{concatenate, Array2, Axis, Zip};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::container::sha256_hex;
use crate::dataset::{Batch, NormStats, OfflineDataset, PreparedData};
use crate::dynamics::SnakeModel;
use crate::env::{Action, EpisodeConfig, GoalRegion, Observation, ACT_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::eval::{evaluate_region, Controller, EvalProtocol};
use crate::nn::fd::{check_gradient, FdReport};
use crate::nn::{Adam, Checkpoint, GaussianPolicy, Mlp, Module, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Bc,
    Cql,
    Iql,
    DisaIql,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Bc, Algorithm::Cql, Algorithm::Iql, Algorithm::DisaIql];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bc => "bc",
            Algorithm::Cql => "cql",
            Algorithm::Iql => "iql",
            Algorithm::DisaIql => "disa_iql",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}; expected one of bc, cql, iql, disa_iql")))
    }

    /// Loss components reported by one update, in order.
    pub fn loss_columns(self) -> &'static [&'static str] {
        match self {
            Algorithm::Bc => &["policy_loss"],
            Algorithm::Cql => &["bellman_loss", "conservative_loss", "policy_loss"],
            Algorithm::Iql | Algorithm::DisaIql => &["value_loss", "q_loss", "policy_loss"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub algorithm: Algorithm,
    pub batch_size: usize,
    pub total_steps: usize,
    /// Hidden layer widths shared by the policy, Q and V networks.
    pub hidden: Vec<usize>,
    pub lr_policy: f64,
    pub lr_q: f64,
    pub lr_v: f64,
    pub gamma: f64,
    /// Value expectile; below 0.5 biases V towards underestimation.
    pub tau_expectile: f64,
    /// Advantage temperature in `exp(A / β)`.
    pub beta_temperature: f64,
    pub weight_clip: f64,
    /// Polyak factor for the target critics.
    pub target_mix: f64,
    pub cql_alpha: f64,
    pub n_sampled_actions: usize,
    /// Fixed entropy weight of the reparameterized actor used with CQL.
    pub cql_entropy: f64,
    /// Steps between training-log rows (each row carries an evaluation).
    pub eval_every: usize,
    /// Goals per periodic evaluation; 0 disables evaluation.
    pub eval_goals: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            algorithm: Algorithm::Iql,
            batch_size: 256,
            total_steps: 200_000,
            hidden: vec![256, 256],
            lr_policy: 3e-4,
            lr_q: 3e-4,
            lr_v: 3e-4,
            gamma: 0.99,
            tau_expectile: 0.3,
            beta_temperature: 3.0,
            weight_clip: 100.0,
            target_mix: 0.005,
            cql_alpha: 1.0,
            n_sampled_actions: 10,
            cql_entropy: 0.1,
            eval_every: 20_000,
            eval_goals: 20,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.batch_size == 0 {
            problems.push("trainer.batch_size must be > 0".to_string());
        }
        if self.hidden.contains(&0) {
            problems.push("trainer.hidden widths must be > 0".to_string());
        }
        if !(self.tau_expectile > 0.0 && self.tau_expectile < 1.0) {
            problems.push(format!("trainer.tau_expectile must be in (0, 1), got {}", self.tau_expectile));
        }
        if !(self.beta_temperature > 0.0) {
            problems.push(format!("trainer.beta_temperature must be > 0, got {}", self.beta_temperature));
        }
        if !(self.weight_clip > 0.0) {
            problems.push(format!("trainer.weight_clip must be > 0, got {}", self.weight_clip));
        }
        if !(self.cql_alpha >= 0.0) {
            problems.push(format!("trainer.cql_alpha must be >= 0, got {}", self.cql_alpha));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            problems.push(format!("trainer.gamma must be in (0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.target_mix) {
            problems.push(format!("trainer.target_mix must be in [0, 1], got {}", self.target_mix));
        }
        if self.n_sampled_actions == 0 {
            problems.push("trainer.n_sampled_actions must be > 0".to_string());
        }
        for (name, lr) in [("lr_policy", self.lr_policy), ("lr_q", self.lr_q), ("lr_v", self.lr_v)] {
            if !(lr > 0.0) {
                problems.push(format!("trainer.{name} must be > 0, got {lr}"));
            }
        }
        if self.eval_every == 0 {
            problems.push("trainer.eval_every must be > 0".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

/// Two independent Q networks over `[s, a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QPair {
    pub q1: Mlp,
    pub q2: Mlp,
}

impl QPair {
    fn new<R: Rng + ?Sized>(hidden: &[usize], rng: &mut R) -> Result<Self> {
        let sizes = layer_sizes(OBS_DIM + ACT_DIM, hidden, 1);
        Ok(QPair {
            q1: Mlp::new(&sizes, 1.0, rng)?,
            q2: Mlp::new(&sizes, 1.0, rng)?,
        })
    }

    fn split(vars: &[Var]) -> (&[Var], &[Var]) {
        vars.split_at(vars.len() / 2)
    }

    pub fn forward(&self, sa: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        Ok((self.q1.forward(sa)?, self.q2.forward(sa)?))
    }

    /// Elementwise minimum of the two estimates.
    pub fn min(&self, sa: &Array2<f64>) -> Result<Array2<f64>> {
        let (mut a, b) = self.forward(sa)?;
        Zip::from(&mut a).and(&b).for_each(|x, &y| *x = x.min(y));
        Ok(a)
    }

    fn forward_tape(&self, tape: &mut Tape, vars: &[Var], sa: Var) -> (Var, Var) {
        let (v1, v2) = Self::split(vars);
        (self.q1.forward_tape(tape, v1, sa), self.q2.forward_tape(tape, v2, sa))
    }

    pub fn soft_update_from(&mut self, source: &QPair, k: f64) {
        self.q1.soft_update_from(&source.q1, k);
        self.q2.soft_update_from(&source.q2, k);
    }
}

impl Module for QPair {
    fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut t = self.q1.tensors();
        t.extend(self.q2.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut t = self.q1.tensors_mut();
        t.extend(self.q2.tensors_mut());
        t
    }
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

pub fn state_action(obs: &Array2<f64>, act: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[obs.view(), act.view()]).expect("batch rows agree")
}

/// Loss value and parameter gradients of `f` evaluated at `module`.
pub fn differentiate<M, F>(module: &M, f: F) -> Result<(f64, Vec<Array2<f64>>)>
where
    M: Module,
    F: FnOnce(&M, &mut Tape, &[Var]) -> Result<Var>,
{
    crate::nn::gradient(module, |tape, vars| f(module, tape, vars))
}

/// Forward-only evaluation of the same loss, for finite differences.
pub fn evaluate_loss<M, F>(module: &M, f: F) -> Result<f64>
where
    M: Module,
    F: FnOnce(&M, &mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = module.register(&mut tape);
    let root = f(module, &mut tape, &vars)?;
    Ok(tape.scalar(root))
}

// ---- losses --------------------------------------------------------------

/// Negative mean log-likelihood of the batch actions.
pub fn bc_loss(policy: &GaussianPolicy, tape: &mut Tape, vars: &[Var], obs: &Array2<f64>, act: &Array2<f64>) -> Var {
    let o = tape.constant(obs.clone());
    let a = tape.constant(act.clone());
    let lp = policy.log_prob_tape(tape, vars, o, a);
    let m = tape.mean(lp);
    tape.scale(m, -1.0)
}

/// Advantage-weighted negative log-likelihood with fixed per-row weights.
pub fn awr_loss(
    policy: &GaussianPolicy,
    tape: &mut Tape,
    vars: &[Var],
    obs: &Array2<f64>,
    act: &Array2<f64>,
    weights: &Array2<f64>,
) -> Var {
    let o = tape.constant(obs.clone());
    let a = tape.constant(act.clone());
    let lp = policy.log_prob_tape(tape, vars, o, a);
    let weighted = tape.mul_const(lp, weights.clone());
    let m = tape.mean(weighted);
    tape.scale(m, -1.0)
}

/// Expectile regression of `V(s)` towards fixed Q estimates.
pub fn value_loss(v: &Mlp, tape: &mut Tape, vars: &[Var], obs: &Array2<f64>, q: &Array2<f64>, tau: f64) -> Var {
    let o = tape.constant(obs.clone());
    let pred = v.forward_tape(tape, vars, o);
    let target = tape.constant(q.clone());
    let u = tape.sub(target, pred);
    let e = tape.expectile(u, tau);
    tape.mean(e)
}

/// Sum over both critics of the mean squared error to fixed targets.
pub fn q_regression_loss(q: &QPair, tape: &mut Tape, vars: &[Var], sa: &Array2<f64>, y: &Array2<f64>) -> Var {
    let x = tape.constant(sa.clone());
    let (q1, q2) = q.forward_tape(tape, vars, x);
    regression_to(tape, q1, q2, y)
}

fn regression_to(tape: &mut Tape, q1: Var, q2: Var, y: &Array2<f64>) -> Var {
    let t = tape.constant(y.clone());
    let d1 = tape.sub(q1, t);
    let d2 = tape.sub(q2, t);
    let s1 = tape.square(d1);
    let s2 = tape.square(d2);
    let m1 = tape.mean(s1);
    let m2 = tape.mean(s2);
    tape.add(m1, m2)
}

/// Bellman regression plus `α·(E_π Q − E_D Q)` for each critic. Returns
/// `(total, bellman, conservative)`.
pub fn cql_critic_loss(
    q: &QPair,
    tape: &mut Tape,
    vars: &[Var],
    sa: &Array2<f64>,
    y: &Array2<f64>,
    sa_policy: &Array2<f64>,
    alpha: f64,
) -> (Var, Var, Var) {
    let x = tape.constant(sa.clone());
    let (d1, d2) = q.forward_tape(tape, vars, x);
    let bellman = regression_to(tape, d1, d2, y);
    let x_pi = tape.constant(sa_policy.clone());
    let (p1, p2) = q.forward_tape(tape, vars, x_pi);
    let mp1 = tape.mean(p1);
    let mp2 = tape.mean(p2);
    let md1 = tape.mean(d1);
    let md2 = tape.mean(d2);
    let g1 = tape.sub(mp1, md1);
    let g2 = tape.sub(mp2, md2);
    let gap = tape.add(g1, g2);
    let conservative = tape.scale(gap, alpha);
    (tape.add(bellman, conservative), bellman, conservative)
}

/// Reparameterized actor objective `E[λ log π(a|s) − min Q(s, a)]` with the
/// critics held fixed.
pub fn cql_actor_loss(
    policy: &GaussianPolicy,
    tape: &mut Tape,
    vars: &[Var],
    obs: &Array2<f64>,
    noise: &Array2<f64>,
    q: &QPair,
    entropy: f64,
) -> Var {
    let o = tape.constant(obs.clone());
    let (a, lp) = policy.rsample_tape(tape, vars, o, noise.clone());
    let sa = tape.concat(o, a);
    let qv = q.register_constant(tape);
    let (q1, q2) = q.forward_tape(tape, &qv, sa);
    let qmin = tape.min(q1, q2);
    let ent = tape.scale(lp, entropy);
    let diff = tape.sub(ent, qmin);
    tape.mean(diff)
}

// ---- learner -------------------------------------------------------------

/// Everything one training run owns.
#[derive(Debug, Clone)]
pub struct Learner {
    pub cfg: TrainerConfig,
    pub policy: GaussianPolicy,
    pub q: QPair,
    pub q_target: QPair,
    pub v: Mlp,
    opt_policy: Adam,
    opt_q: Adam,
    opt_v: Adam,
    rng: ChaCha8Rng,
    pub step: usize,
}

fn training_error(step: usize, component: &'static str, value: f64) -> Error {
    Error::Training {
        step,
        component,
        detail: format!("loss is {value}"),
    }
}

fn finite(step: usize, component: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(training_error(step, component, value))
    }
}

impl Learner {
    pub fn new(cfg: &TrainerConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let policy = GaussianPolicy::new(OBS_DIM, &cfg.hidden, ACT_DIM, &mut rng)?;
        let q = QPair::new(&cfg.hidden, &mut rng)?;
        let v = Mlp::new(&layer_sizes(OBS_DIM, &cfg.hidden, 1), 1.0, &mut rng)?;
        Ok(Learner {
            cfg: cfg.clone(),
            opt_policy: Adam::new(&policy, cfg.lr_policy),
            opt_q: Adam::new(&q, cfg.lr_q),
            opt_v: Adam::new(&v, cfg.lr_v),
            q_target: q.clone(),
            policy,
            q,
            v,
            rng,
            step: 0,
        })
    }

    pub fn sample_batch(&mut self, data: &PreparedData) -> Result<Batch> {
        data.sample_batch(self.cfg.batch_size, &mut self.rng)
    }

    fn normal_noise(&mut self, rows: usize) -> Array2<f64> {
        let rng = &mut self.rng;
        Array2::from_shape_fn((rows, ACT_DIM), |_| rng.sample(StandardNormal))
    }

    /// Every trained tensor under a stable name, for checkpoints.
    pub fn named_tensors(&self) -> Vec<(String, Array2<f64>)> {
        let mut out = Vec::new();
        let mut push = |prefix: &str, m: &dyn ModuleTensors| {
            for (i, t) in m.list().into_iter().enumerate() {
                out.push((format!("{prefix}.{i}"), t.clone()));
            }
        };
        push("policy", &self.policy);
        push("q1", &self.q.q1);
        push("q2", &self.q.q2);
        push("q1_target", &self.q_target.q1);
        push("q2_target", &self.q_target.q2);
        push("v", &self.v);
        out
    }
}

trait ModuleTensors {
    fn list(&self) -> Vec<&Array2<f64>>;
}

impl<M: Module> ModuleTensors for M {
    fn list(&self) -> Vec<&Array2<f64>> {
        self.tensors()
    }
}

pub fn bc_update(learner: &mut Learner, batch: &Batch) -> Result<f64> {
    let (loss, g) = differentiate(&learner.policy, |p, tape, vars| {
        Ok(bc_loss(p, tape, vars, &batch.obs, &batch.act))
    })?;
    finite(learner.step, "policy", loss)?;
    learner.opt_policy.step(&mut learner.policy, &g)?;
    learner.step += 1;
    Ok(loss)
}

/// Loss components of one CQL update and the policy actions used for the
/// conservative term (`n_sampled_actions` blocks of `batch` rows each).
#[derive(Debug, Clone, PartialEq)]
pub struct CqlReport {
    pub bellman: f64,
    pub conservative: f64,
    pub policy: f64,
    pub sampled_actions: Array2<f64>,
}

/// Policy samples `μ(s) + σ ⊙ noise` without recording a tape.
fn sample_actions(policy: &GaussianPolicy, obs: &Array2<f64>, noise: &Array2<f64>) -> Result<Array2<f64>> {
    let mut a = policy.mean_batch(obs)?;
    let std: Vec<f64> = policy.clamped_log_std().iter().map(|s| s.exp()).collect();
    for (mut row, nrow) in a.rows_mut().into_iter().zip(noise.rows()) {
        for j in 0..row.len() {
            row[j] += std[j] * nrow[j];
        }
    }
    Ok(a)
}

fn repeat_rows(x: &Array2<f64>, times: usize) -> Array2<f64> {
    let views: Vec<_> = (0..times).map(|_| x.view()).collect();
    concatenate(Axis(0), &views).expect("same width")
}

/// Inputs of the CQL critic loss for one batch.
pub struct CqlCriticInputs {
    pub sa: Array2<f64>,
    pub y: Array2<f64>,
    pub sa_policy: Array2<f64>,
}

fn cql_critic_inputs(learner: &mut Learner, batch: &Batch) -> Result<CqlCriticInputs> {
    let b = batch.len();
    let n = learner.cfg.n_sampled_actions;
    let next_noise = learner.normal_noise(b);
    let next_act = sample_actions(&learner.policy, &batch.next_obs, &next_noise)?;
    let q_next = learner.q_target.min(&state_action(&batch.next_obs, &next_act))?;
    let gamma = learner.cfg.gamma;
    let y = Zip::from(&batch.rew)
        .and(&batch.done)
        .and(&q_next)
        .map_collect(|&r, &d, &q| r + gamma * (1.0 - d) * q);
    let obs_rep = repeat_rows(&batch.obs, n);
    let pi_noise = learner.normal_noise(b * n);
    let pi_act = sample_actions(&learner.policy, &obs_rep, &pi_noise)?;
    Ok(CqlCriticInputs {
        sa: state_action(&batch.obs, &batch.act),
        y,
        sa_policy: state_action(&obs_rep, &pi_act),
    })
}

pub fn cql_update(learner: &mut Learner, batch: &Batch) -> Result<CqlReport> {
    let inputs = cql_critic_inputs(learner, batch)?;
    let alpha = learner.cfg.cql_alpha;
    let mut parts = (0.0, 0.0);
    let (_, gq) = differentiate(&learner.q, |q, tape, vars| {
        let (total, bellman, conservative) =
            cql_critic_loss(q, tape, vars, &inputs.sa, &inputs.y, &inputs.sa_policy, alpha);
        parts = (tape.scalar(bellman), tape.scalar(conservative));
        Ok(total)
    })?;
    let step = learner.step;
    finite(step, "bellman", parts.0)?;
    finite(step, "conservative", parts.1)?;
    learner.opt_q.step(&mut learner.q, &gq)?;

    let noise = learner.normal_noise(batch.len());
    let entropy = learner.cfg.cql_entropy;
    let q = &learner.q;
    let (policy_loss, gp) = differentiate(&learner.policy, |p, tape, vars| {
        Ok(cql_actor_loss(p, tape, vars, &batch.obs, &noise, q, entropy))
    })?;
    finite(step, "policy", policy_loss)?;
    learner.opt_policy.step(&mut learner.policy, &gp)?;
    learner.q_target.soft_update_from(&learner.q, learner.cfg.target_mix);
    learner.step += 1;
    Ok(CqlReport {
        bellman: parts.0,
        conservative: parts.1,
        policy: policy_loss,
        sampled_actions: inputs.sa_policy.slice(ndarray::s![.., OBS_DIM..]).to_owned(),
    })
}

/// Per-row penalty and where it applies, for the count-penalized update.
pub struct Penalty<'a> {
    pub values: &'a Array2<f64>,
    pub in_target: bool,
    pub in_advantage: bool,
}

/// Advantage weights `min(exp(A / β), clip)`.
pub fn advantage_weights(adv: &Array2<f64>, beta: f64, clip: f64) -> Array2<f64> {
    adv.mapv(|a| (a / beta).exp().min(clip))
}

/// Loss components `[value, q, policy]` of one implicit update.
///
/// Order: V by expectile regression towards the target critics, then the
/// policy by advantage-weighted regression using the new V, then both
/// critics towards `r + γ(1 − d)(V(s′) − P)`, then the target critics.
pub(crate) fn implicit_update(learner: &mut Learner, batch: &Batch, penalty: Option<Penalty<'_>>) -> Result<[f64; 3]> {
    let step = learner.step;
    let cfg = learner.cfg.clone();
    let sa = state_action(&batch.obs, &batch.act);
    let q_t = learner.q_target.min(&sa)?;

    let (value_loss_v, gv) = differentiate(&learner.v, |v, tape, vars| {
        Ok(value_loss(v, tape, vars, &batch.obs, &q_t, cfg.tau_expectile))
    })?;
    finite(step, "value", value_loss_v)?;
    learner.opt_v.step(&mut learner.v, &gv)?;

    let mut adv = &q_t - &learner.v.forward(&batch.obs)?;
    if let Some(p) = penalty.as_ref().filter(|p| p.in_advantage) {
        adv -= p.values;
    }
    let weights = advantage_weights(&adv, cfg.beta_temperature, cfg.weight_clip);
    let (policy_loss, gp) = differentiate(&learner.policy, |p, tape, vars| {
        Ok(awr_loss(p, tape, vars, &batch.obs, &batch.act, &weights))
    })?;
    finite(step, "policy", policy_loss)?;
    learner.opt_policy.step(&mut learner.policy, &gp)?;

    let mut v_next = learner.v.forward(&batch.next_obs)?;
    if let Some(p) = penalty.as_ref().filter(|p| p.in_target) {
        v_next -= p.values;
    }
    let y = Zip::from(&batch.rew)
        .and(&batch.done)
        .and(&v_next)
        .map_collect(|&r, &d, &v| r + cfg.gamma * (1.0 - d) * v);
    let (q_loss, gq) = differentiate(&learner.q, |q, tape, vars| Ok(q_regression_loss(q, tape, vars, &sa, &y)))?;
    finite(step, "q", q_loss)?;
    learner.opt_q.step(&mut learner.q, &gq)?;
    learner.q_target.soft_update_from(&learner.q, cfg.target_mix);
    learner.step += 1;
    Ok([value_loss_v, q_loss, policy_loss])
}

pub fn iql_update(learner: &mut Learner, batch: &Batch) -> Result<[f64; 3]> {
    implicit_update(learner, batch, None)
}

/// Finite-difference checks of every loss the given algorithm differentiates,
/// evaluated at the learner's current parameters. `penalty` is used by the
/// count-penalized variant.
pub fn check_loss_gradients(
    learner: &Learner,
    batch: &Batch,
    algorithm: Algorithm,
    penalty: Option<&Array2<f64>>,
) -> Result<Vec<(&'static str, FdReport)>> {
    let cfg = &learner.cfg;
    let mut out = Vec::new();
    let check_policy = |f: &dyn Fn(&GaussianPolicy, &mut Tape, &[Var]) -> Var| -> Result<FdReport> {
        let (_, g) = differentiate(&learner.policy, |p, t, v| Ok(f(p, t, v)))?;
        check_gradient(&learner.policy, &g, |p| evaluate_loss(p, |p, t, v| Ok(f(p, t, v))))
    };
    let sa = state_action(&batch.obs, &batch.act);
    match algorithm {
        Algorithm::Bc => out.push(("bc_policy", check_policy(&|p, t, v| bc_loss(p, t, v, &batch.obs, &batch.act))?)),
        Algorithm::Cql => {
            let mut probe = learner.clone();
            let inputs = cql_critic_inputs(&mut probe, batch)?;
            let noise = probe.normal_noise(batch.len());
            let q = learner.q.clone();
            let r = check_policy(&|p, t, v| cql_actor_loss(p, t, v, &batch.obs, &noise, &q, cfg.cql_entropy))?;
            out.push(("cql_actor", r));
            let f = |q: &QPair, t: &mut Tape, v: &[Var]| {
                Ok(cql_critic_loss(q, t, v, &inputs.sa, &inputs.y, &inputs.sa_policy, cfg.cql_alpha).0)
            };
            let (_, g) = differentiate(&learner.q, f)?;
            out.push(("cql_critic", check_gradient(&learner.q, &g, |q| evaluate_loss(q, f))?));
        }
        Algorithm::Iql | Algorithm::DisaIql => {
            let zero = Array2::zeros((batch.len(), 1));
            let p = if algorithm == Algorithm::DisaIql { penalty.unwrap_or(&zero) } else { &zero };
            let q_t = learner.q_target.min(&sa)?;
            let fv = |v: &Mlp, t: &mut Tape, vars: &[Var]| Ok(value_loss(v, t, vars, &batch.obs, &q_t, cfg.tau_expectile));
            let (_, g) = differentiate(&learner.v, fv)?;
            out.push(("value", check_gradient(&learner.v, &g, |v| evaluate_loss(v, fv))?));

            let adv = &q_t - &learner.v.forward(&batch.obs)? - p;
            let w = advantage_weights(&adv, cfg.beta_temperature, cfg.weight_clip);
            let r = check_policy(&|pol, t, v| awr_loss(pol, t, v, &batch.obs, &batch.act, &w))?;
            out.push(("awr_policy", r));

            let v_next = learner.v.forward(&batch.next_obs)? - p;
            let y = Zip::from(&batch.rew)
                .and(&batch.done)
                .and(&v_next)
                .map_collect(|&r, &d, &v| r + cfg.gamma * (1.0 - d) * v);
            let fq = |q: &QPair, t: &mut Tape, vars: &[Var]| Ok(q_regression_loss(q, t, vars, &sa, &y));
            let (_, g) = differentiate(&learner.q, fq)?;
            out.push(("q_regression", check_gradient(&learner.q, &g, |q| evaluate_loss(q, fq))?));
        }
    }
    Ok(out)
}

// ---- trained policy and checkpoints --------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub algorithm: Algorithm,
    pub config_hash: String,
    pub dataset_hash: String,
}

/// A policy ready to act in raw units.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPolicy {
    pub policy: GaussianPolicy,
    pub stats: NormStats,
    pub provenance: Provenance,
}

impl TrainedPolicy {
    /// Normalized-space mean action for a raw observation.
    fn raw_action(&self, obs: &Observation, sample_rng: Option<&mut dyn RngCore>) -> Result<Vec<f64>> {
        let o = self.stats.normalize_obs(&obs.to_array());
        match sample_rng {
            None => self.policy.mean_action(&o),
            Some(rng) => self.policy.sample(&o, rng),
        }
    }
}

impl Controller for TrainedPolicy {
    /// Mean (or sampled) action mapped back to raw units and clamped into
    /// the action box.
    fn act(&self, obs: &Observation, sample_rng: Option<&mut dyn RngCore>) -> Result<Action> {
        let a = self.raw_action(obs, sample_rng)?;
        let raw = self.stats.denormalize_action(&a);
        let action = Action::from_slice(&raw)?;
        if !action.is_finite() {
            return Err(Error::Numeric {
                what: "policy action".into(),
                index: 0,
            });
        }
        Ok(action.clamped())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointMeta {
    provenance: Provenance,
    stats: NormStats,
    hidden: Vec<usize>,
    step: usize,
}

pub fn learner_checkpoint(learner: &Learner, provenance: &Provenance, stats: &NormStats) -> Checkpoint {
    let meta = CheckpointMeta {
        provenance: provenance.clone(),
        stats: stats.clone(),
        hidden: learner.cfg.hidden.clone(),
        step: learner.step,
    };
    Checkpoint {
        meta: serde_json::to_value(meta).expect("meta serializes"),
        tensors: learner.named_tensors(),
    }
}

impl TrainedPolicy {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta: CheckpointMeta = serde_json::from_value(ck.meta.clone())
            .map_err(|e| Error::Format(format!("checkpoint metadata: {e}")))?;
        let mut tensors = ck.group("policy");
        let log_std = tensors
            .pop()
            .ok_or_else(|| Error::Format("checkpoint has no policy tensors".into()))?;
        let sizes = layer_sizes(OBS_DIM, &meta.hidden, ACT_DIM);
        let mean = Mlp::from_tensors(sizes, tensors).map_err(|e| Error::Format(e.to_string()))?;
        if log_std.dim() != (1, ACT_DIM) {
            return Err(Error::Format("policy log-std has the wrong shape".into()));
        }
        Ok(TrainedPolicy {
            policy: GaussianPolicy { mean, log_std },
            stats: meta.stats,
            provenance: meta.provenance,
        })
    }
}

// ---- training loop -------------------------------------------------------

/// Periodic evaluation during training.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalHook {
    pub model: SnakeModel,
    pub episode: EpisodeConfig,
    pub region: GoalRegion,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TrainingLog {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

pub struct TrainOutcome {
    pub policy: TrainedPolicy,
    pub learner: Learner,
    pub log: TrainingLog,
    pub checkpoint: Checkpoint,
}

/// Drives `update` for `cfg.total_steps` steps and logs averaged losses,
/// any `extra` scheduled values and a periodic evaluation every
/// `cfg.eval_every` steps.
pub(crate) fn run_training(
    dataset: &OfflineDataset,
    cfg: &TrainerConfig,
    config_hash: String,
    eval: Option<&EvalHook>,
    extra_columns: &[&str],
    mut update: impl FnMut(&mut Learner, &Batch) -> Result<(Vec<f64>, Vec<f64>)>,
) -> Result<TrainOutcome> {
    let stats = dataset
        .stats()
        .cloned()
        .ok_or_else(|| Error::Contract("training requires a normalized dataset".into()))?;
    let data = dataset.prepare()?;
    if cfg.batch_size > data.len() {
        return Err(Error::Config(format!(
            "trainer.batch_size {} exceeds the dataset size {}",
            cfg.batch_size,
            data.len()
        )));
    }
    let provenance = Provenance {
        algorithm: cfg.algorithm,
        config_hash,
        dataset_hash: dataset.checksum(),
    };
    let mut learner = Learner::new(cfg)?;
    let loss_names = cfg.algorithm.loss_columns();
    let mut columns: Vec<String> = vec!["step".into()];
    columns.extend(loss_names.iter().map(|s| s.to_string()));
    columns.extend(extra_columns.iter().map(|s| s.to_string()));
    columns.extend(["eval_reward".to_string(), "eval_success".to_string()]);
    let mut log = TrainingLog { columns, rows: Vec::new() };
    let mut window = vec![0.0; loss_names.len()];
    let mut last_extra = vec![f64::NAN; extra_columns.len()];
    let mut window_len = 0usize;

    for t in 0..cfg.total_steps {
        let batch = learner.sample_batch(&data)?;
        let (losses, extra) = update(&mut learner, &batch)?;
        for (w, l) in window.iter_mut().zip(&losses) {
            *w += l;
        }
        last_extra = extra;
        window_len += 1;
        if (t + 1) % cfg.eval_every == 0 {
            let mut row = vec![(t + 1) as f64];
            row.extend(window.iter().map(|w| w / window_len as f64));
            row.extend(&last_extra);
            let (reward, success) = match eval {
                Some(hook) if cfg.eval_goals > 0 => {
                    let policy = TrainedPolicy {
                        policy: learner.policy.clone(),
                        stats: stats.clone(),
                        provenance: provenance.clone(),
                    };
                    let protocol = EvalProtocol {
                        train_region: hook.region,
                        test_regions: vec![hook.region],
                        n_goals: cfg.eval_goals,
                        seed: hook.seed,
                        deterministic: true,
                    };
                    let r = evaluate_region(&policy, &hook.model, &hook.episode, &protocol, &hook.region)?;
                    (r.aggregates.avg_reward, r.aggregates.success_rate)
                }
                _ => (f64::NAN, f64::NAN),
            };
            row.extend([reward, success]);
            log.rows.push(row);
            window.iter_mut().for_each(|w| *w = 0.0);
            window_len = 0;
        }
    }
    let checkpoint = learner_checkpoint(&learner, &provenance, &stats);
    Ok(TrainOutcome {
        policy: TrainedPolicy {
            policy: learner.policy.clone(),
            stats,
            provenance,
        },
        learner,
        log,
        checkpoint,
    })
}

/// Trains one of the baseline learners.
pub fn train(dataset: &OfflineDataset, cfg: &TrainerConfig, eval: Option<&EvalHook>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let hash = cfg.hash();
    match cfg.algorithm {
        Algorithm::Bc => run_training(dataset, cfg, hash, eval, &[], |l, b| Ok((vec![bc_update(l, b)?], vec![]))),
        Algorithm::Cql => run_training(dataset, cfg, hash, eval, &[], |l, b| {
            let r = cql_update(l, b)?;
            Ok((vec![r.bellman, r.conservative, r.policy], vec![]))
        }),
        Algorithm::Iql => run_training(dataset, cfg, hash, eval, &[], |l, b| Ok((iql_update(l, b)?.to_vec(), vec![]))),
        Algorithm::DisaIql => Err(Error::Config(
            "disa_iql needs penalty settings; train it through the count-penalized trainer".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Transition;
    use ndarray::array;

    fn tiny_cfg(algorithm: Algorithm) -> TrainerConfig {
        TrainerConfig {
            algorithm,
            batch_size: 8,
            total_steps: 40,
            hidden: vec![8, 8],
            eval_every: 10,
            eval_goals: 0,
            seed: 5,
            ..TrainerConfig::default()
        }
    }

    fn random_dataset(n_eps: usize, len: usize, seed: u64) -> OfflineDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps = (0..n_eps)
            .map(|_| {
                let mut obs: [f64; OBS_DIM] = std::array::from_fn(|_| rng.random_range(-0.5..0.5));
                (0..len)
                    .map(|k| {
                        let next: [f64; OBS_DIM] = std::array::from_fn(|_| rng.random_range(-0.5..0.5));
                        let success = k + 1 == len && rng.random::<bool>();
                        let t = Transition {
                            observation: obs,
                            action: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
                            reward: if success { 50.0 } else { -rng.random_range(0.0..1.2) },
                            next_observation: next,
                            terminal: success,
                            success,
                        };
                        obs = next;
                        t
                    })
                    .collect()
            })
            .collect();
        OfflineDataset::from_episodes(eps).unwrap().normalize().unwrap()
    }

    fn batch_of(ds: &OfflineDataset, idx: Vec<usize>) -> Batch {
        ds.prepare().unwrap().gather(idx)
    }

    #[test]
    fn config_validation() {
        assert!(TrainerConfig::default().validate().is_ok());
        let bad = TrainerConfig {
            tau_expectile: 1.0,
            beta_temperature: 0.0,
            cql_alpha: -1.0,
            ..TrainerConfig::default()
        };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("tau_expectile") && msg.contains("beta_temperature") && msg.contains("cql_alpha"));
        assert_eq!(Algorithm::parse("disa_iql").unwrap(), Algorithm::DisaIql);
        assert!(Algorithm::parse("sac").is_err());
    }

    #[test]
    fn bc_overfits_a_single_pair() {
        let mut t = random_dataset(1, 1, 1).transitions()[0];
        t.action = [0.3, -1.2, 0.8, 0.0, 0.5];
        let stats = NormStats::identity();
        let data = PreparedData {
            obs: Array2::from_shape_vec((1, OBS_DIM), stats.normalize_obs(&t.observation).to_vec()).unwrap(),
            act: Array2::from_shape_vec((1, ACT_DIM), t.action.to_vec()).unwrap(),
            rew: array![[0.0]],
            next_obs: Array2::zeros((1, OBS_DIM)),
            done: array![[0.0]],
        };
        let mut learner = Learner::new(&TrainerConfig {
            batch_size: 1,
            hidden: vec![16, 16],
            lr_policy: 1e-3,
            ..tiny_cfg(Algorithm::Bc)
        })
        .unwrap();
        for _ in 0..2000 {
            let b = learner.sample_batch(&data).unwrap();
            bc_update(&mut learner, &b).unwrap();
        }
        let mean = learner.policy.mean_action(data.obs.row(0).as_slice().unwrap()).unwrap();
        for (m, a) in mean.iter().zip(&t.action) {
            assert!((m - a).abs() < 0.01, "{mean:?}");
        }
    }

    #[test]
    fn bc_loss_trends_down() {
        let ds = random_dataset(4, 8, 2);
        let data = ds.prepare().unwrap();
        let mut learner = Learner::new(&tiny_cfg(Algorithm::Bc)).unwrap();
        let mut losses = Vec::new();
        for _ in 0..600 {
            let b = learner.sample_batch(&data).unwrap();
            losses.push(bc_update(&mut learner, &b).unwrap());
        }
        let avg = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let windows: Vec<f64> = losses.chunks(100).map(avg).collect();
        for w in windows.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{windows:?}");
        }
    }

    #[test]
    fn bc_symmetric_pair_keeps_midpoint() {
        let mut learner = Learner::new(&tiny_cfg(Algorithm::Bc)).unwrap();
        // Zero the mean head so the prediction is the output bias.
        let n = learner.policy.mean.tensors().len();
        for t in learner.policy.mean.tensors_mut().into_iter().skip(n - 2) {
            t.fill(0.0);
        }
        let obs = Array2::zeros((2, OBS_DIM));
        let act = array![[1.0, -1.0, 0.5, 2.0, 0.0], [-1.0, 1.0, -0.5, -2.0, 0.0]];
        let batch = Batch {
            indices: vec![0, 1],
            obs,
            act,
            rew: Array2::zeros((2, 1)),
            next_obs: Array2::zeros((2, OBS_DIM)),
            done: Array2::zeros((2, 1)),
        };
        for _ in 0..50 {
            bc_update(&mut learner, &batch).unwrap();
        }
        let m = learner.policy.mean_action(&[0.0; OBS_DIM]).unwrap();
        assert!(m.iter().all(|v| v.abs() < 1e-12), "{m:?}");
    }

    #[test]
    fn cql_without_penalty_is_plain_bellman() {
        let ds = random_dataset(3, 6, 3);
        let batch = batch_of(&ds, (0..8).collect());
        let cfg = TrainerConfig {
            cql_alpha: 0.0,
            ..tiny_cfg(Algorithm::Cql)
        };
        let mut learner = Learner::new(&cfg).unwrap();
        let inputs = cql_critic_inputs(&mut learner, &batch).unwrap();
        let (_, g_cql) = differentiate(&learner.q, |q, t, v| {
            Ok(cql_critic_loss(q, t, v, &inputs.sa, &inputs.y, &inputs.sa_policy, 0.0).0)
        })
        .unwrap();
        let (_, g_ql) = differentiate(&learner.q, |q, t, v| Ok(q_regression_loss(q, t, v, &inputs.sa, &inputs.y))).unwrap();
        assert_eq!(g_cql, g_ql);
    }

    #[test]
    fn cql_conservative_term_recomputes_and_pushes_down() {
        let ds = random_dataset(3, 6, 4);
        let batch = batch_of(&ds, (0..8).collect());
        let cfg = TrainerConfig {
            cql_alpha: 2.0,
            ..tiny_cfg(Algorithm::Cql)
        };
        let learner = Learner::new(&cfg).unwrap();
        let before = learner.q.clone();
        let mut with = learner.clone();
        let report = cql_update(&mut with, &batch).unwrap();

        // Independent pass over the same sampled actions.
        let n = cfg.n_sampled_actions;
        let obs_rep = repeat_rows(&batch.obs, n);
        let sa_pi = state_action(&obs_rep, &report.sampled_actions);
        let sa = state_action(&batch.obs, &batch.act);
        let mean = |a: Array2<f64>| a.mean().unwrap();
        let gap = mean(before.q1.forward(&sa_pi).unwrap()) - mean(before.q1.forward(&sa).unwrap())
            + mean(before.q2.forward(&sa_pi).unwrap())
            - mean(before.q2.forward(&sa).unwrap());
        assert!((report.conservative - 2.0 * gap).abs() < 1e-9);

        // Paired control: same batch and noise without the penalty.
        let mut without = Learner::new(&TrainerConfig { cql_alpha: 0.0, ..cfg.clone() }).unwrap();
        cql_update(&mut without, &batch).unwrap();
        let q_pi = |q: &QPair| q.min(&sa_pi).unwrap().mean().unwrap();
        assert!(q_pi(&with.q) < q_pi(&without.q));
    }

    #[test]
    fn iql_value_tracks_mean_with_symmetric_expectile() {
        let cfg = TrainerConfig {
            tau_expectile: 0.5,
            lr_v: 1e-2,
            ..tiny_cfg(Algorithm::Iql)
        };
        let learner = Learner::new(&cfg).unwrap();
        let mut v = learner.v.clone();
        let mut opt = Adam::new(&v, 1e-2);
        let obs = Array2::from_elem((4, OBS_DIM), 0.2);
        let q = array![[1.0], [2.0], [-0.5], [3.5]];
        for _ in 0..3000 {
            let (_, g) = differentiate(&v, |v, t, vars| Ok(value_loss(v, t, vars, &obs, &q, 0.5))).unwrap();
            opt.step(&mut v, &g).unwrap();
        }
        let pred = v.forward(&obs.slice(ndarray::s![0..1, ..]).to_owned()).unwrap()[[0, 0]];
        assert!((pred - 1.5).abs() < 1e-3, "{pred}");
    }

    #[test]
    fn huge_temperature_matches_bc_direction() {
        let ds = random_dataset(3, 6, 6);
        let batch = batch_of(&ds, (0..10).collect());
        let learner = Learner::new(&tiny_cfg(Algorithm::Iql)).unwrap();
        let sa = state_action(&batch.obs, &batch.act);
        let adv = learner.q_target.min(&sa).unwrap() - learner.v.forward(&batch.obs).unwrap();
        let w = advantage_weights(&adv, 1e6, 100.0);
        let (_, g_awr) = differentiate(&learner.policy, |p, t, v| Ok(awr_loss(p, t, v, &batch.obs, &batch.act, &w))).unwrap();
        let (_, g_bc) = differentiate(&learner.policy, |p, t, v| Ok(bc_loss(p, t, v, &batch.obs, &batch.act))).unwrap();
        let flat = |g: &[Array2<f64>]| g.iter().flat_map(|t| t.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>();
        let (a, b) = (flat(&g_awr), flat(&g_bc));
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(1.0 - dot / (na * nb) < 1e-6);
    }

    #[test]
    fn terminal_target_is_reward() {
        let ds = random_dataset(2, 3, 7);
        let mut batch = batch_of(&ds, vec![0, 1, 2]);
        batch.done = array![[1.0], [0.0], [1.0]];
        let learner = Learner::new(&tiny_cfg(Algorithm::Iql)).unwrap();
        let v_next = learner.v.forward(&batch.next_obs).unwrap();
        let y = Zip::from(&batch.rew)
            .and(&batch.done)
            .and(&v_next)
            .map_collect(|&r, &d, &v| r + 0.99 * (1.0 - d) * v);
        assert_eq!(y[[0, 0]], batch.rew[[0, 0]]);
        assert_eq!(y[[2, 0]], batch.rew[[2, 0]]);
        assert_ne!(y[[1, 0]], batch.rew[[1, 0]]);
    }

    #[test]
    fn weights_positive_and_clipped() {
        let adv = array![[-1e6], [0.0], [1e6], [3.0]];
        let w = advantage_weights(&adv, 1.0, 100.0);
        assert!(w.iter().all(|&x| x >= 0.0));
        assert!(w.iter().all(|&x| x <= 100.0));
        assert_eq!(w[[2, 0]], 100.0);
        assert_eq!(w[[1, 0]], 1.0);
    }

    #[test]
    fn double_q_minimum_is_below_both() {
        let ds = random_dataset(2, 6, 8);
        let batch = batch_of(&ds, (0..12).collect());
        let learner = Learner::new(&tiny_cfg(Algorithm::Iql)).unwrap();
        let sa = state_action(&batch.obs, &batch.act);
        let (a, b) = learner.q.forward(&sa).unwrap();
        let m = learner.q.min(&sa).unwrap();
        for ((m, a), b) in m.iter().zip(&a).zip(&b) {
            assert!(m <= a && m <= b);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let ds = random_dataset(3, 6, 9);
        let batch = batch_of(&ds, (0..8).collect());
        for alg in [Algorithm::Bc, Algorithm::Cql, Algorithm::Iql] {
            let learner = Learner::new(&tiny_cfg(alg)).unwrap();
            for (name, r) in check_loss_gradients(&learner, &batch, alg, None).unwrap() {
                assert!(r.passes(), "{alg:?} {name}: {r:?}");
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_logged() {
        let ds = random_dataset(4, 8, 10);
        let before = ds.checksum();
        for alg in [Algorithm::Bc, Algorithm::Cql, Algorithm::Iql] {
            let cfg = tiny_cfg(alg);
            let a = train(&ds, &cfg, None).unwrap();
            let b = train(&ds, &cfg, None).unwrap();
            assert_eq!(a.checkpoint.checksum(), b.checkpoint.checksum());
            assert_eq!(a.log.rows.len(), cfg.total_steps / cfg.eval_every);
            assert_eq!(a.log.columns.len(), 1 + alg.loss_columns().len() + 2);
            let back = TrainedPolicy::from_checkpoint(&Checkpoint::from_bytes(&a.checkpoint.to_bytes()).unwrap()).unwrap();
            assert_eq!(back, a.policy);
        }
        assert_eq!(ds.checksum(), before);
        assert!(train(&ds, &tiny_cfg(Algorithm::DisaIql), None).is_err());
    }

    #[test]
    fn unnormalized_dataset_is_rejected() {
        let raw = OfflineDataset::from_episodes(vec![vec![random_dataset(1, 1, 0).transitions()[0]]]).unwrap();
        assert!(matches!(train(&raw, &tiny_cfg(Algorithm::Bc), None), Err(Error::Contract(_))));
    }

    #[test]
    fn non_finite_loss_aborts_with_step() {
        let ds = random_dataset(2, 6, 11);
        let data = ds.prepare().unwrap();
        let mut learner = Learner::new(&tiny_cfg(Algorithm::Bc)).unwrap();
        learner.policy.log_std.fill(f64::NAN);
        let b = learner.sample_batch(&data).unwrap();
        assert!(matches!(
            bc_update(&mut learner, &b),
            Err(Error::Training { step: 0, component: "policy", .. })
        ));
    }
}
