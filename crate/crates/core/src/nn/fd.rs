//! Central finite-difference checks of reverse-mode gradients.

use ndarray::Array2;

use super::mlp::Module;
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-5;
pub const FD_ABS_TOL: f64 = 1e-4;
pub const FD_REL_TOL: f64 = 1e-3;

/// Worst coordinate found by [`check_gradient`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    pub checked: usize,
    /// `|analytic − numeric| − tolerance`; the check passes when ≤ 0.
    pub worst_excess: f64,
    pub worst_tensor: usize,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

impl FdReport {
    pub fn passes(&self) -> bool {
        self.worst_excess <= 0.0
    }
}

pub fn tolerance(numeric: f64) -> f64 {
    FD_ABS_TOL.max(FD_REL_TOL * numeric.abs())
}

/// Compares `analytic` against central differences of `loss` in every
/// coordinate of `module`.
pub fn check_gradient<M, F>(module: &M, analytic: &[Array2<f64>], loss: F) -> Result<FdReport>
where
    M: Module + Clone,
    F: Fn(&M) -> Result<f64>,
{
    let shapes: Vec<_> = module.tensors().iter().map(|t| t.dim()).collect();
    if shapes.len() != analytic.len() || shapes.iter().zip(analytic).any(|(s, g)| *s != g.dim()) {
        return Err(Error::Contract("analytic gradient does not match module shapes".into()));
    }
    let mut probe = module.clone();
    let mut report = FdReport {
        checked: 0,
        worst_excess: f64::NEG_INFINITY,
        worst_tensor: 0,
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for (ti, grad) in analytic.iter().enumerate() {
        for (k, &a) in grad.iter().enumerate() {
            let base = probe.tensors()[ti].as_slice().expect("standard layout")[k];
            set(&mut probe, ti, k, base + FD_STEP);
            let up = loss(&probe)?;
            set(&mut probe, ti, k, base - FD_STEP);
            let down = loss(&probe)?;
            set(&mut probe, ti, k, base);
            let numeric = (up - down) / (2.0 * FD_STEP);
            let excess = (a - numeric).abs() - tolerance(numeric);
            report.checked += 1;
            if excess > report.worst_excess {
                report.worst_excess = excess;
                report.worst_tensor = ti;
                report.worst_index = k;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}

fn set<M: Module>(m: &mut M, tensor: usize, index: usize, value: f64) {
    m.tensors_mut()[tensor].as_slice_mut().expect("standard layout")[index] = value;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gradient, Mlp};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_layer_squared_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let net = Mlp::new(&[3, 6, 2], 1.0, &mut rng).unwrap();
        let x = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_fn((4, 2), |_| rng.random_range(-1.0..1.0));
        let (loss, g) = gradient(&net, |tape, vars| {
            let xv = tape.constant(x.clone());
            let out = net.forward_tape(tape, vars, xv);
            let yv = tape.constant(y.clone());
            let d = tape.sub(out, yv);
            let sq = tape.square(d);
            Ok(tape.mean(sq))
        })
        .unwrap();
        let direct = (net.forward(&x).unwrap() - &y).mapv(|v| v * v).mean().unwrap();
        assert!((loss - direct).abs() < 1e-14);
        let report = check_gradient(&net, &g, |m| {
            Ok((m.forward(&x)? - &y).mapv(|v| v * v).mean().unwrap())
        })
        .unwrap();
        assert_eq!(report.checked, net.num_params());
        assert!(report.passes(), "{report:?}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let net = Mlp::new(&[2, 2], 1.0, &mut rng).unwrap();
        let x = ndarray::array![[1.0, 2.0]];
        let bogus: Vec<_> = net.tensors().iter().map(|t| t.mapv(|_| 1.0)).collect();
        let report = check_gradient(&net, &bogus, |m| Ok(m.forward(&x)?.sum())).unwrap();
        assert!(!report.passes());
    }
}
