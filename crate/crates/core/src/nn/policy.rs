use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::{Mlp, Module};
use super::tape::{Tape, Var};
use crate::error::{check_len, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Diagonal Gaussian over actions with a state-dependent mean and a
/// state-independent learnable log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    /// `1×action_dim`, clamped to `[LOG_STD_MIN, LOG_STD_MAX]` when used.
    pub log_std: Array2<f64>,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], act_dim: usize, rng: &mut R) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(act_dim);
        Ok(GaussianPolicy {
            mean: Mlp::new(&sizes, 0.01, rng)?,
            log_std: Array2::zeros((1, act_dim)),
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.mean.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.mean.output_dim()
    }

    pub fn clamped_log_std(&self) -> Vec<f64> {
        self.log_std
            .iter()
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect()
    }

    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.mean.forward_one(obs)
    }

    pub fn mean_batch(&self, obs: &Array2<f64>) -> Result<Array2<f64>> {
        self.mean.forward(obs)
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mu = self.mean_action(obs)?;
        Ok(mu
            .iter()
            .zip(self.clamped_log_std())
            .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect())
    }

    /// Log-density of `action` under the policy at `obs`.
    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        check_len("policy action", self.act_dim(), action.len())?;
        let mu = self.mean_action(obs)?;
        let ls = self.clamped_log_std();
        let mut lp = -0.5 * self.act_dim() as f64 * (2.0 * PI).ln();
        for ((a, m), s) in action.iter().zip(&mu).zip(&ls) {
            let z = (a - m) / s.exp();
            lp -= 0.5 * z * z + s;
        }
        Ok(lp)
    }

    /// Batched log-density on the tape, `B×1`. `vars` are this policy's
    /// registered tensors.
    pub fn log_prob_tape(&self, tape: &mut Tape, vars: &[Var], obs: Var, actions: Var) -> Var {
        let (mean_vars, ls_var) = vars.split_at(vars.len() - 1);
        let mu = self.mean.forward_tape(tape, mean_vars, obs);
        let ls = tape.clamp(ls_var[0], LOG_STD_MIN, LOG_STD_MAX);
        let neg_ls = tape.scale(ls, -1.0);
        let inv_std = tape.exp(neg_ls);
        let diff = tape.sub(actions, mu);
        let z = tape.mul_row(diff, inv_std);
        let z2 = tape.square(z);
        let quad = tape.sum_cols(z2);
        let half_quad = tape.scale(quad, -0.5);
        let log_det = tape.sum_cols(neg_ls);
        let lp = tape.add_row(half_quad, log_det);
        tape.offset(lp, -0.5 * self.act_dim() as f64 * (2.0 * PI).ln())
    }

    /// Reparameterized samples `μ(s) + σ ⊙ noise` and their log-density,
    /// both on the tape. `noise` is `B×action_dim` standard normal.
    pub fn rsample_tape(&self, tape: &mut Tape, vars: &[Var], obs: Var, noise: Array2<f64>) -> (Var, Var) {
        let (mean_vars, ls_var) = vars.split_at(vars.len() - 1);
        let k = self.act_dim() as f64;
        let quad = -0.5 * noise.mapv(|e| e * e).sum_axis(ndarray::Axis(1)).insert_axis(ndarray::Axis(1));
        let mu = self.mean.forward_tape(tape, mean_vars, obs);
        let ls = tape.clamp(ls_var[0], LOG_STD_MIN, LOG_STD_MAX);
        let std = tape.exp(ls);
        let eps = tape.constant(noise);
        let spread = tape.mul_row(eps, std);
        let action = tape.add(mu, spread);
        let quad = tape.constant(quad);
        let neg_ls = tape.scale(ls, -1.0);
        let log_det = tape.sum_cols(neg_ls);
        let lp = tape.add_row(quad, log_det);
        (action, tape.offset(lp, -0.5 * k * (2.0 * PI).ln()))
    }

    /// Policy parameters with the log standard deviation last.
    pub fn split_vars(vars: &[Var]) -> (&[Var], Var) {
        (&vars[..vars.len() - 1], vars[vars.len() - 1])
    }
}

impl Module for GaussianPolicy {
    fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut t = self.mean.tensors();
        t.push(&self.log_std);
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut t = self.mean.tensors_mut();
        t.push(&mut self.log_std);
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy(seed: u64) -> GaussianPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = GaussianPolicy::new(11, &[16, 16], 5, &mut rng).unwrap();
        p.mean = Mlp::new(&[11, 16, 16, 5], 1.0, &mut rng).unwrap();
        for (i, v) in p.log_std.iter_mut().enumerate() {
            *v = -0.4 + 0.2 * i as f64;
        }
        p
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    // Independent oracle: product of one-dimensional normal densities.
    fn oracle_log_density(x: &[f64], mu: &[f64], sigma: &[f64]) -> f64 {
        x.iter()
            .zip(mu)
            .zip(sigma)
            .map(|((x, m), s)| {
                let d = (-(x - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt());
                d.ln()
            })
            .sum()
    }

    #[test]
    fn density_at_mode() {
        let p = policy(1);
        let obs = vec![0.3; 11];
        let mu = p.mean_action(&obs).unwrap();
        let expected = -p.clamped_log_std().iter().sum::<f64>() - 2.5 * (2.0 * PI).ln();
        assert!((p.log_prob(&obs, &mu).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn density_decreases_away_from_mean() {
        let p = policy(2);
        let obs = vec![-0.1; 11];
        let mu = p.mean_action(&obs).unwrap();
        let mut prev = p.log_prob(&obs, &mu).unwrap();
        for k in 1..20 {
            let a: Vec<f64> = mu.iter().map(|m| m + 0.1 * k as f64).collect();
            let lp = p.log_prob(&obs, &a).unwrap();
            assert!(lp < prev);
            prev = lp;
        }
    }

    #[test]
    fn matches_independent_density() {
        let p = policy(3);
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let sigma: Vec<f64> = p.clamped_log_std().iter().map(|s| s.exp()).collect();
        for _ in 0..50 {
            let obs = random_vec(&mut rng, 11);
            let a = random_vec(&mut rng, 5);
            let mu = p.mean_action(&obs).unwrap();
            let want = oracle_log_density(&a, &mu, &sigma);
            assert!((p.log_prob(&obs, &a).unwrap() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn tape_matches_scalar() {
        let p = policy(4);
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let obs: Vec<f64> = random_vec(&mut rng, 3 * 11);
        let act: Vec<f64> = random_vec(&mut rng, 3 * 5);
        let mut tape = Tape::new();
        let vars = p.register(&mut tape);
        let o = tape.constant(Array2::from_shape_vec((3, 11), obs.clone()).unwrap());
        let a = tape.constant(Array2::from_shape_vec((3, 5), act.clone()).unwrap());
        let lp = p.log_prob_tape(&mut tape, &vars, o, a);
        for r in 0..3 {
            let want = p.log_prob(&obs[r * 11..][..11], &act[r * 5..][..5]).unwrap();
            assert!((tape.value(lp)[[r, 0]] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn rsample_log_prob_matches_density() {
        let p = policy(5);
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let obs = random_vec(&mut rng, 2 * 11);
        let noise = Array2::from_shape_vec((2, 5), random_vec(&mut rng, 10)).unwrap();
        let mut tape = Tape::new();
        let vars = p.register(&mut tape);
        let o = tape.constant(Array2::from_shape_vec((2, 11), obs.clone()).unwrap());
        let (a, lp) = p.rsample_tape(&mut tape, &vars, o, noise);
        for r in 0..2 {
            let act: Vec<f64> = tape.value(a).row(r).to_vec();
            let want = p.log_prob(&obs[r * 11..][..11], &act).unwrap();
            assert!((tape.value(lp)[[r, 0]] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn log_std_is_clamped() {
        let mut p = policy(6);
        p.log_std.fill(10.0);
        assert!(p.clamped_log_std().iter().all(|&s| s == LOG_STD_MAX));
        p.log_std.fill(-10.0);
        assert!(p.clamped_log_std().iter().all(|&s| s == LOG_STD_MIN && s.exp() > 0.0));
    }

    #[test]
    fn wrong_action_length() {
        let p = policy(7);
        assert!(matches!(
            p.log_prob(&[0.0; 11], &[0.0; 4]),
            Err(Error::Dimension { .. })
        ));
    }
}
