//! Reverse-mode differentiation over batched 2-D tensors.
//!
//! A [`Tape`] records every operation of one loss evaluation. Rows are batch
//! elements, columns are features; scalars are `1×1` tensors. Leaves created
//! with [`Tape::constant`] never receive gradients, which lets the backward
//! pass skip work such as the input gradient of a first layer.

use ndarray::{Array2, Axis, Zip};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `x · w + b` with `b` a `1×n` row.
    Linear(Var, Var, Var),
    Tanh(Var),
    Exp(Var),
    Square(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a + row`, row broadcast over the batch.
    AddRow(Var, Var),
    /// `a ⊙ row`, row broadcast over the batch.
    MulRow(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    /// Elementwise product with a constant tensor.
    MulConst(Var, Array2<f64>),
    Min(Var, Var),
    Clamp(Var, f64, f64),
    /// Per-element `|τ − 1[u<0]| · u²`.
    Expectile(Var, f64),
    /// Column-wise concatenation.
    Concat(Var, Var),
    /// Sum over columns: `B×n → B×1`.
    SumCols(Var),
    /// Mean over all entries: `→ 1×1`.
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let value = self.value(x).dot(self.value(w)) + self.value(b);
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(value, Op::Linear(x, w, b), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(tanh);
        let ng = self.ng(a);
        self.push(value, Op::Tanh(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::exp);
        let ng = self.ng(a);
        self.push(value, Op::Exp(a), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x * x);
        let ng = self.ng(a);
        self.push(value, Op::Square(a), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Mul(a, b), ng)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let value = self.value(a) + self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(value, Op::AddRow(a, row), ng)
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let value = self.value(a) * self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(value, Op::MulRow(a, row), ng)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a) * k;
        let ng = self.ng(a);
        self.push(value, Op::Scale(a, k), ng)
    }

    pub fn offset(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a) + k;
        let ng = self.ng(a);
        self.push(value, Op::Offset(a), ng)
    }

    pub fn mul_const(&mut self, a: Var, c: Array2<f64>) -> Var {
        let value = self.value(a) * &c;
        let ng = self.ng(a);
        self.push(value, Op::MulConst(a, c), ng)
    }

    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let mut value = self.value(a).clone();
        Zip::from(&mut value)
            .and(self.value(b))
            .for_each(|x, &y| *x = x.min(y));
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Min(a, b), ng)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).mapv(|x| x.clamp(lo, hi));
        let ng = self.ng(a);
        self.push(value, Op::Clamp(a, lo, hi), ng)
    }

    pub fn expectile(&mut self, u: Var, tau: f64) -> Var {
        let value = self.value(u).mapv(|x| expectile_weight(x, tau) * x * x);
        let ng = self.ng(u);
        self.push(value, Op::Expectile(u, tau), ng)
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let value = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("concat operands share the batch dimension");
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Concat(a, b), ng)
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ng = self.ng(a);
        self.push(value, Op::SumCols(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let value = Array2::from_elem((1, 1), v.sum() / v.len() as f64);
        let ng = self.ng(a);
        self.push(value, Op::Mean(a), ng)
    }

    /// Back-propagates from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let shape = self.value(root).dim();
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got a {}x{} tensor",
                shape.0, shape.1
            )));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Array2::ones((1, 1)));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let mut acc = |v: Var, d: Array2<f64>| {
            if !self.ng(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &d,
                slot @ None => *slot = Some(d),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Linear(x, w, b) => {
                if self.ng(*x) {
                    acc(*x, g.dot(&self.value(*w).t()));
                }
                if self.ng(*w) {
                    acc(*w, self.value(*x).t().dot(g));
                }
                if self.ng(*b) {
                    acc(*b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::Tanh(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(&node.value)
                    .for_each(|d, &y| *d *= 1.0 - y * y);
                acc(*a, d);
            }
            Op::Exp(a) => acc(*a, g * &node.value),
            Op::Square(a) => acc(*a, g * self.value(*a) * 2.0),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    acc(*a, g * self.value(*b));
                }
                if self.ng(*b) {
                    acc(*b, g * self.value(*a));
                }
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                if self.ng(*row) {
                    acc(*row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::MulRow(a, row) => {
                if self.ng(*a) {
                    acc(*a, g * self.value(*row));
                }
                if self.ng(*row) {
                    let d = (g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(*row, d);
                }
            }
            Op::Scale(a, k) => acc(*a, g * *k),
            Op::Offset(a) => acc(*a, g.clone()),
            Op::MulConst(a, c) => acc(*a, g * c),
            Op::Min(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let mut da = g.clone();
                let mut db = g.clone();
                Zip::from(&mut da)
                    .and(&mut db)
                    .and(va)
                    .and(vb)
                    .for_each(|da, db, &x, &y| {
                        // ties route to the first operand
                        if x <= y {
                            *db = 0.0;
                        } else {
                            *da = 0.0;
                        }
                    });
                acc(*a, da);
                acc(*b, db);
            }
            Op::Clamp(a, lo, hi) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .for_each(|d, &x| {
                        if x < *lo || x > *hi {
                            *d = 0.0;
                        }
                    });
                acc(*a, d);
            }
            Op::Expectile(u, tau) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*u))
                    .for_each(|d, &x| *d *= 2.0 * expectile_weight(x, *tau) * x);
                acc(*u, d);
            }
            Op::Concat(a, b) => {
                let na = self.value(*a).ncols();
                if self.ng(*a) {
                    acc(*a, g.slice(ndarray::s![.., ..na]).to_owned());
                }
                if self.ng(*b) {
                    acc(*b, g.slice(ndarray::s![.., na..]).to_owned());
                }
            }
            Op::SumCols(a) => {
                let shape = self.value(*a).raw_dim();
                let d = g
                    .broadcast(shape)
                    .expect("column gradient broadcasts over features")
                    .to_owned();
                acc(*a, d);
            }
            Op::Mean(a) => {
                let v = self.value(*a);
                let k = g[[0, 0]] / v.len() as f64;
                acc(*a, Array2::from_elem(v.raw_dim(), k));
            }
        }
    }
}

/// `tanh` through a single `exp`. libm's version goes through `expm1` and
/// dominated training time; this one agrees to a few ulps away from zero
/// and to about 1e-16 absolute near it.
pub fn tanh(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

pub(crate) fn expectile_weight(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        1.0 - tau
    } else {
        tau
    }
}

/// Gradients of a scalar root with respect to every differentiable node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros shaped like its value if it did not
    /// influence the root.
    pub fn of(&self, tape: &Tape, v: Var) -> Array2<f64> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Array2::zeros(tape.value(v).raw_dim()))
    }
}
