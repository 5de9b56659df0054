use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::mlp::Module;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Loss value and gradients of `module`'s tensors for a scalar loss built
/// by `loss_fn` on a fresh tape.
pub fn gradient<M, F>(module: &M, loss_fn: F) -> Result<(f64, Vec<Array2<f64>>)>
where
    M: Module + ?Sized,
    F: FnOnce(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = module.register(&mut tape);
    let root = loss_fn(&mut tape, &vars)?;
    let grads = tape.backward(root)?;
    let loss = tape.scalar(root);
    Ok((loss, vars.iter().map(|&v| grads.of(&tape, v)).collect()))
}

/// `|τ − 1[u<0]| · u²`.
pub fn expectile_loss(u: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::domain("expectile", format!("tau = {tau} is outside (0, 1)")));
    }
    Ok(super::tape::expectile_weight(u, tau) * u * u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for one module.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub cfg: AdamConfig,
    step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new<M: Module + ?Sized>(module: &M, lr: f64) -> Self {
        Self::with_config(module, lr, AdamConfig::default())
    }

    pub fn with_config<M: Module + ?Sized>(module: &M, lr: f64, cfg: AdamConfig) -> Self {
        let zeros: Vec<_> = module
            .tensors()
            .iter()
            .map(|t| Array2::zeros(t.raw_dim()))
            .collect();
        Adam {
            lr,
            cfg,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step<M: Module + ?Sized>(&mut self, module: &mut M, grads: &[Array2<f64>]) -> Result<()> {
        let mut params = module.tensors_mut();
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Dimension {
                what: "adam tensor count",
                expected: self.m.len(),
                got: grads.len(),
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.dim() != g.dim() || p.dim() != m.dim() {
                return Err(Error::Dimension {
                    what: "adam tensor shape",
                    expected: p.len(),
                    got: g.len(),
                });
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let lr = self.lr;
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            ndarray::Zip::from(&mut **p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    struct Scalar(Array2<f64>);

    impl Module for Scalar {
        fn tensors(&self) -> Vec<&Array2<f64>> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn expectile_values() {
        assert_eq!(expectile_loss(2.0, 0.5).unwrap(), 2.0);
        assert!((expectile_loss(1.0, 0.7).unwrap() - 0.7).abs() < 1e-15);
        assert!((expectile_loss(-1.0, 0.7).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(expectile_loss(0.0, 0.2).unwrap(), 0.0);
        assert!(expectile_loss(1.0, 0.0).is_err());
        assert!(expectile_loss(1.0, 1.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn expectile_reflection(u in -1e3f64..1e3, tau in 0.001f64..0.999) {
            // Mirroring the residual swaps the two asymmetric weights, which
            // sum to one; mirroring both residual and level is a symmetry.
            let pair = expectile_loss(u, tau).unwrap() + expectile_loss(-u, tau).unwrap();
            proptest::prop_assert!((pair - u * u).abs() <= 1e-12 * (1.0 + u * u));
            let mirrored = expectile_loss(-u, 1.0 - tau).unwrap();
            proptest::prop_assert!((mirrored - expectile_loss(u, tau).unwrap()).abs() <= 1e-12 * (1.0 + u * u));
        }

        #[test]
        fn expectile_is_convex(a in -10f64..10.0, b in -10f64..10.0, tau in 0.01f64..0.99, w in 0f64..1.0) {
            let mid = expectile_loss(w * a + (1.0 - w) * b, tau).unwrap();
            let chord = w * expectile_loss(a, tau).unwrap() + (1.0 - w) * expectile_loss(b, tau).unwrap();
            proptest::prop_assert!(mid <= chord + 1e-9);
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = Scalar(array![[1.5, -2.0]]);
        let mut adam = Adam::new(&s, 0.1);
        for _ in 0..10 {
            adam.step(&mut s, &[Array2::zeros((1, 2))]).unwrap();
        }
        assert_eq!(s.0, array![[1.5, -2.0]]);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut s = Scalar(array![[0.0, 0.0]]);
        let mut adam = Adam::new(&s, 0.01);
        for _ in 0..100 {
            adam.step(&mut s, &[array![[3.0, -0.5]]]).unwrap();
        }
        assert!(s.0[[0, 0]] < 0.0);
        assert!(s.0[[0, 1]] > 0.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut s = Scalar(array![[0.0, 0.0]]);
        let mut adam = Adam::new(&s, 0.01);
        assert!(adam.step(&mut s, &[array![[1.0]]]).is_err());
        assert!(adam.step(&mut s, &[]).is_err());
    }

    #[test]
    fn quadratic_bowl_converges() {
        let target = array![[1.0, -2.0, 0.5]];
        let mut s = Scalar(array![[0.0, 0.0, 0.0]]);
        let mut adam = Adam::new(&s, 1e-2);
        let loss_of = |p: &Array2<f64>| (p - &target).mapv(|x| x * x).sum();
        let initial = loss_of(&s.0);
        for _ in 0..500 {
            let t = target.clone();
            let (_, g) = gradient(&s, |tape, vars| {
                let c = tape.constant(t);
                let d = tape.sub(vars[0], c);
                let sq = tape.square(d);
                let m = tape.mean(sq);
                Ok(tape.scale(m, 3.0))
            })
            .unwrap();
            adam.step(&mut s, &g).unwrap();
        }
        assert!(loss_of(&s.0) < 1e-4 * initial, "{}", loss_of(&s.0));
    }
}
