//! Forward ops and their backward rules.
//!
//! Each op validates shapes, computes its output eagerly, and — when a tape
//! is active and any input requires gradients — records a closure that pulls
//! the output gradient and accumulates into the inputs that require it.
//! Ops are exposed as methods on [`Tensor`]; [`op_forward`] is a uniform
//! dispatcher over [`OpKind`] used by the gradient-check suites.

use std::rc::Rc;

use super::kernels;
use super::tape;
use super::{Inner, Tensor, TensorError};

/// Operation kinds understood by [`op_forward`].
///
/// Variants carry the op's scalar attribute where one exists. The
/// straight-through threshold is the single non-differentiable kind: its
/// backward rule passes gradients to the soft input as identity (off the
/// diagonal) and is therefore excluded from finite-difference checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OpKind {
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    ScalarMul(f64),
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Abs,
    Powf(f64),
    RowSoftmax,
    RowLogSoftmax,
    Sum,
    Mean,
    MaskedMeanRows,
    RowSum,
    MulColVec,
    MulRowVec,
    ConcatRows,
    ConcatCols,
    ThresholdStraightThrough(f64),
}

/// Applies `kind` to `inputs`, rejecting wrong arity or non-conforming shapes.
pub fn op_forward(kind: OpKind, inputs: &[&Tensor]) -> Result<Tensor, TensorError> {
    fn one<'a>(op: &'static str, inputs: &[&'a Tensor]) -> Result<&'a Tensor, TensorError> {
        match inputs {
            [t] => Ok(t),
            _ => Err(TensorError::Arity {
                op,
                expected: "1",
                got: inputs.len(),
            }),
        }
    }
    fn two<'a>(
        op: &'static str,
        inputs: &[&'a Tensor],
    ) -> Result<(&'a Tensor, &'a Tensor), TensorError> {
        match inputs {
            [a, b] => Ok((a, b)),
            _ => Err(TensorError::Arity {
                op,
                expected: "2",
                got: inputs.len(),
            }),
        }
    }

    match kind {
        OpKind::MatMul => two("matmul", inputs).and_then(|(a, b)| a.matmul(b)),
        OpKind::Transpose => one("transpose", inputs).and_then(|a| a.transpose()),
        OpKind::Add => two("add", inputs).and_then(|(a, b)| a.add(b)),
        OpKind::Sub => two("sub", inputs).and_then(|(a, b)| a.sub(b)),
        OpKind::Mul => two("mul", inputs).and_then(|(a, b)| a.mul(b)),
        OpKind::ScalarMul(c) => one("scale", inputs).and_then(|a| a.scale(c)),
        OpKind::Relu => one("relu", inputs).and_then(|a| a.relu()),
        OpKind::LeakyRelu(s) => one("leaky_relu", inputs).and_then(|a| a.leaky_relu(s)),
        OpKind::Tanh => one("tanh", inputs).and_then(|a| a.tanh()),
        OpKind::Sigmoid => one("sigmoid", inputs).and_then(|a| a.sigmoid()),
        OpKind::Exp => one("exp", inputs).and_then(|a| a.exp()),
        OpKind::Log => one("log", inputs).and_then(|a| a.ln()),
        OpKind::Abs => one("abs", inputs).and_then(|a| a.abs()),
        OpKind::Powf(p) => one("powf", inputs).and_then(|a| a.powf(p)),
        OpKind::RowSoftmax => one("row_softmax", inputs).and_then(|a| a.row_softmax()),
        OpKind::RowLogSoftmax => one("row_log_softmax", inputs).and_then(|a| a.row_log_softmax()),
        OpKind::Sum => one("sum", inputs).and_then(|a| a.sum()),
        OpKind::Mean => one("mean", inputs).and_then(|a| a.mean()),
        OpKind::MaskedMeanRows => {
            two("masked_mean_rows", inputs).and_then(|(a, m)| a.masked_mean_rows(m))
        }
        OpKind::RowSum => one("row_sum", inputs).and_then(|a| a.row_sum()),
        OpKind::MulColVec => two("mul_col_vec", inputs).and_then(|(a, v)| a.mul_col_vec(v)),
        OpKind::MulRowVec => two("mul_row_vec", inputs).and_then(|(a, v)| a.mul_row_vec(v)),
        OpKind::ConcatRows => Tensor::concat_rows(inputs),
        OpKind::ConcatCols => Tensor::concat_cols(inputs),
        OpKind::ThresholdStraightThrough(tau) => {
            one("threshold_straight_through", inputs).and_then(|a| a.threshold_straight_through(tau))
        }
    }
}

fn finish(
    shape: Vec<usize>,
    values: Vec<f64>,
    inputs: &[&Tensor],
    make_rule: impl FnOnce(Rc<Inner>) -> Box<dyn Fn()>,
) -> Tensor {
    let track = tape::tape_active() && inputs.iter().any(|t| t.requires_grad());
    let out = Tensor::from_parts(shape, values, track);
    if track {
        let rule = make_rule(out.inner().clone());
        tape::record(&out, rule);
    }
    out
}

/// Consumes the output's pass-local flow; absent means this op did not feed
/// the loss. After the body has distributed contributions to the inputs, the
/// flow is folded into the output's persistent grad buffer, so intermediates
/// reachable from the loss end up with populated gradients too.
macro_rules! out_grad {
    ($out:ident, $g:ident, $body:block) => {
        let Some(flow) = $out.take_flow() else { return };
        let $g: &[f64] = &flow;
        $body
        $out.accumulate(&flow);
    };
}

fn require_rank2(op: &'static str, t: &Tensor) -> Result<(), TensorError> {
    if !t.is_rank2() {
        return Err(TensorError::InvalidShape {
            op,
            expected: "a rank-2 tensor",
            shape: t.shape().to_vec(),
        });
    }
    Ok(())
}

impl Tensor {
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        require_rank2("matmul", self)?;
        require_rank2("matmul", rhs)?;
        if self.cols() != rhs.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape().to_vec(),
                rhs: rhs.shape().to_vec(),
            });
        }
        let (m, k, n) = (self.rows(), self.cols(), rhs.cols());
        let values = kernels::matmul(self.values(), rhs.values(), m, k, n);
        Ok(finish(vec![m, n], values, &[self, rhs], |out| {
            let (a, b) = (self.inner().clone(), rhs.inner().clone());
            Box::new(move || {
                out_grad!(out, g, {
                    if a.requires_grad {
                        a.with_route_buf(|buf| kernels::matmul_nt_acc(buf, g, &b.values, m, n, k));
                    }
                    if b.requires_grad {
                        b.with_route_buf(|buf| kernels::matmul_tn_acc(buf, &a.values, g, m, k, n));
                    }
                });
            })
        }))
    }

    pub fn transpose(&self) -> Result<Tensor, TensorError> {
        require_rank2("transpose", self)?;
        let (m, n) = (self.rows(), self.cols());
        let values = kernels::transpose(self.values(), m, n);
        Ok(finish(vec![n, m], values, &[self], |out| {
            let a = self.inner().clone();
            Box::new(move || {
                out_grad!(out, g, {
                    if a.requires_grad {
                        a.with_route_buf(|buf| {
                            for i in 0..m {
                                for j in 0..n {
                                    buf[i * n + j] += g[j * m + i];
                                }
                            }
                        });
                    }
                });
            })
        }))
    }

    /// Elementwise add, or row-broadcast add when `rhs` is a length-`cols`
    /// vector (bias rows).
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        if self.shape() == rhs.shape() {
            let values = self
                .values()
                .iter()
                .zip(rhs.values())
                .map(|(a, b)| a + b)
                .collect();
            return Ok(finish(self.shape().to_vec(), values, &[self, rhs], |out| {
                let (a, b) = (self.inner().clone(), rhs.inner().clone());
                Box::new(move || {
                    out_grad!(out, g, {
                        if a.requires_grad {
                            a.route_accumulate(g);
                        }
                        if b.requires_grad {
                            b.route_accumulate(g);
                        }
                    });
                })
            }));
        }
        // Row broadcast: [m,n] + [n] (or [1,n]).
        let row_broadcast = self.is_rank2()
            && rhs.numel() == self.cols()
            && (rhs.shape().len() == 1 || (rhs.is_rank2() && rhs.rows() == 1));
        if !row_broadcast {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                lhs: self.shape().to_vec(),
                rhs: rhs.shape().to_vec(),
            });
        }
        let (m, n) = (self.rows(), self.cols());
        let mut values = self.values().to_vec();
        for i in 0..m {
            for (vj, bj) in values[i * n..(i + 1) * n].iter_mut().zip(rhs.values()) {
                *vj += bj;
            }
        }
        Ok(finish(vec![m, n], values, &[self, rhs], |out| {
            let (a, b) = (self.inner().clone(), rhs.inner().clone());
            Box::new(move || {
                out_grad!(out, g, {
                    if a.requires_grad {
                        a.route_accumulate(g);
                    }
                    if b.requires_grad {
                        b.with_route_buf(|buf| {
                            for i in 0..m {
                                for (bufj, gj) in buf.iter_mut().zip(&g[i * n..(i + 1) * n]) {
                                    *bufj += gj;
                                }
                            }
                        });
                    }
                });
            })
        }))
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        if self.shape() != rhs.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "sub",
                lhs: self.shape().to_vec(),
                rhs: rhs.shape().to_vec(),
            });
        }
        let values = self
            .values()
            .iter()
            .zip(rhs.values())
            .map(|(a, b)| a - b)
            .collect();
        Ok(finish(self.shape().to_vec(), values, &[self, rhs], |out| {
            let (a, b) = (self.inner().clone(), rhs.inner().clone());
            Box::new(move || {
                out_grad!(out, g, {
                    if a.requires_grad {
                        a.route_accumulate(g);
                    }
                    if b.requires_grad {
                        b.with_route_buf(|buf| {
                            for (bufj, gj) in buf.iter_mut().zip(g) {
                                *bufj -= gj;
                            }
                        });
                    }
                });
            })
        }))
    }

    /// Elementwise product of same-shape tensors.
    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        if self.shape() != rhs.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mul",
                lhs: self.shape().to_vec(),
                rhs: rhs.shape().to_vec(),
            });
        }
        let values = self
            .values()
            .iter()
            .zip(rhs.values())
            .map(|(a, b)| a * b)
            .collect();
        Ok(finish(self.shape().to_vec(), values, &[self, rhs], |out| {
            let (a, b) = (self.inner().clone(), rhs.inner().clone());
            Box::new(move || {
                out_grad!(out, g, {
                    if a.requires_grad {
                        a.with_route_buf(|buf| {
                            for ((bufj, gj), bj) in buf.iter_mut().zip(g).zip(&b.values) {
                                *bufj += gj * bj;
                            }
                        });
                    }
                    if b.requires_grad {
                        b.with_route_buf(|buf| {
                            for ((bufj, gj), aj) in buf.iter_mut().zip(g).zip(&a.values) {
                                *bufj += gj * aj;
                            }
                        });
                    }
                });
            })
        }))
    }

    pub fn scale(&self, c: f64) -> Result<Tensor, TensorError> {
        let values = self.values().iter().map(|v| v * c).collect();
        Ok(finish(self.shape().to_vec(), values, &[self], |out| {
            let a = self.inner().clone();
            Box::new(move || {
                out_grad!(out, g, {
                    if a.requires_grad {
                        a.with_route_buf(|buf| {
                            for (bufj, gj) in buf.iter_mut().zip(g) {
                                *bufj += c * gj;
                            }
                        });
                    }
                });
            })
        }))
    }

    fn unary_elementwise(
        &self,
        values: Vec<f64>,
        // derivative as a function of (input value, output value)
        dfdx: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Tensor {
        finish(self.shape().to_vec(), values, &[self], |out| {
            let a = self.inner().clone();
            Box::new(move || {
                out_grad!(out, g, {
                    if a.requires_grad {
                        a.with_route_buf(|buf| {
                            for i in 0..g.len() {
                                buf[i] += g[i] * dfdx(a.values[i], out.values[i]);
                            }
                        });
                    }
                });
            })
        })
    }

    pub fn relu(&self) -> Result<Tensor, TensorError> {
        let values = self.values().iter().map(|v| v.max(0.0)).collect();
        Ok(self.unary_elementwise(values, |x, _| if x > 0.0 { 1.0 } else { 0.0 }))
    }

    pub fn leaky_relu(&self, slope: f64) -> Result<Tensor, TensorError> {
        let values = self
            .values()
            .iter()
            .map(|&v| if v > 0.0 { v } else { slope * v })
            .collect();
        Ok(self.unary_elementwise(values, move |x, _| if x > 0.0 { 1.0 } else { slope }))
    }

    pub fn tanh(&self) -> Result<Tensor, TensorError> {
        let values = self.values().iter().map(|v| v.tanh()).collect();
        Ok(self.unary_elementwise(values, |_, y| 1.0 - y * y))
    }

    pub fn sigmoid(&self) -> Result<Tensor, TensorError> {
        let values = self
            .values()
            .iter()
            .map(|v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        Ok(self.unary_elementwise(values, |_, y| y * (1.0 - y)))
    }

    pub fn exp(&self) -> Result<Tensor, TensorError> {
        let values = self.values().iter().map(|v| v.exp()).collect();
        Ok(self.unary_elementwise(values, |_, y| y))
    }

    /// Natural log; the caller guarantees strictly positive inputs.
    pub fn ln(&self) -> Result<Tensor, TensorError> {
        let values = self.values().iter().map(|v| v.ln()).collect();
        Ok(self.unary_elementwise(values, |x, _| 1.0 / x))
    }

    /// Absolute value with subgradient 0 at the kink.
    pub fn abs(&self) -> Result<Tensor, TensorError> {
        let values = self.values().iter().map(|v| v.abs()).collect();
        Ok(self.unary_elementwise(values, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        }))
    }

    /// Elementwise power; the caller guarantees a positive domain for
    /// non-integer exponents (degree vectors here are always >= 1 or > 0).
    pub fn powf(&self, p: f64) -> Result<Tensor, TensorError> {
        let values = self.values().iter().map(|v| v.powf(p)).collect();
        Ok(self.unary_elementwise(values, move |x, _| p * x.powf(p - 1.0)))
    }

    pub fn row_softmax(&self) -> Result<Tensor, TensorError> {
        require_rank2("row_softmax", self)?;
        let (m, n) = (self.rows(), self.cols());
        let values = kernels::row_softmax(self.values(), m, n);
        Ok(finish(vec![m, n], values, &[self], |out| {
            let a = self.inner().clone();
            Box::new(move || {
                out_grad!(out, g, {
                    if a.requires_grad {
                        a.with_route_buf(|buf| {
                            for i in 0..m {
                                let s = &out.values[i * n..(i + 1) * n];
                                let gr = &g[i * n..(i + 1) * n];
                                let dot: f64 = gr.iter().zip(s).map(|(gj, sj)| gj * sj).sum();
                                for ((bufj, gj), sj) in
                                    buf[i * n..(i + 1) * n].iter_mut().zip(gr).zip(s)
                                {
                                    *bufj += sj * (gj - dot);
                                }
                            }
                        });
                    }
                });
            })
        }))
    }

    pub fn row_log_softmax(&self) -> Result<Tensor, TensorError> {
        require_rank2("row_log_softmax", self)?;
        let (m, n) = (self.rows(), self.cols());
        let values = kernels::row_log_softmax(self.values(), m, n);
        Ok(finish(vec![m, n], values, &[self], |out| {
            let a = self.inner().clone();
            Box::new(move || {
                out_grad!(out, g, {
                    if a.requires_grad {
                        a.with_route_buf(|buf| {
                            for i in 0..m {
                                let y = &out.values[i * n..(i + 1) * n];
                                let gr = &g[i * n..(i + 1) * n];
                                let gsum: f64 = gr.iter().sum();
                                for ((bufj, gj), yj) in
                                    buf[i * n..(i + 1) * n].iter_mut().zip(gr).zip(y)
                                {
                                    *bufj += gj - yj.exp() * gsum;
                                }
                            }
                        });
                    }
                });
            })
        }))
    }

    /// Sum of all elements as a rank-0 scalar.
    pub fn sum(&self) -> Result<Tensor, TensorError> {
        let total: f64 = self.values().iter().sum();
        Ok(finish(vec![], vec![total], &[self], |out| {
            let a = self.inner().clone();
            Box::new(move || {
                out_grad!(out, g, {
                    if a.requires_grad {
                        let g0 = g[0];
                        a.with_route_buf(|buf| {
                            for bufj in buf.iter_mut() {
                                *bufj += g0;
                            }
                        });
                    }
                });
            })
        }))
    }

    /// Mean of all elements as a rank-0 scalar.
    pub fn mean(&self) -> Result<Tensor, TensorError> {
        let n = self.numel();
        if n == 0 {
            return Err(TensorError::InvalidShape {
                op: "mean",
                expected: "a non-empty tensor",
                shape: self.shape().to_vec(),
            });
        }
        let total: f64 = self.values().iter().sum();
        let inv = 1.0 / n as f64;
        Ok(finish(vec![], vec![total * inv], &[self], |out| {
            let a = self.inner().clone();
            Box::new(move || {
                out_grad!(out, g, {
                    if a.requires_grad {
                        let g0 = g[0] * inv;
                        a.with_route_buf(|buf| {
                            for bufj in buf.iter_mut() {
                                *bufj += g0;
                            }
                        });
                    }
                });
            })
        }))
    }

    /// Mean over the rows selected by a 0/1 mask, returned as `[1, n]`.
    ///
    /// The mask is a constant selector; gradients never flow into it.
    pub fn masked_mean_rows(&self, mask: &Tensor) -> Result<Tensor, TensorError> {
        require_rank2("masked_mean_rows", self)?;
        if mask.numel() != self.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "masked_mean_rows",
                lhs: self.shape().to_vec(),
                rhs: mask.shape().to_vec(),
            });
        }
        if mask.requires_grad() {
            return Err(TensorError::Unsupported {
                op: "masked_mean_rows",
                msg: "mask must be a constant selector".into(),
            });
        }
        let count: f64 = mask.values().iter().sum();
        if count <= 0.0 {
            return Err(TensorError::Unsupported {
                op: "masked_mean_rows",
                msg: "mask selects no rows".into(),
            });
        }
        let (m, n) = (self.rows(), self.cols());
        let inv = 1.0 / count;
        let mut values = vec![0.0; n];
        for i in 0..m {
            let w = mask.values()[i];
            if w == 0.0 {
                continue;
            }
            for (vj, aj) in values.iter_mut().zip(&self.values()[i * n..(i + 1) * n]) {
                *vj += w * aj;
            }
        }
        for vj in values.iter_mut() {
            *vj *= inv;
        }
        Ok(finish(vec![1, n], values, &[self], |out| {
            let a = self.inner().clone();
            let mask = mask.inner().clone();
            Box::new(move || {
                out_grad!(out, g, {
                    if a.requires_grad {
                        a.with_route_buf(|buf| {
                            for i in 0..m {
                                let w = mask.values[i] * inv;
                                if w == 0.0 {
                                    continue;
                                }
                                for (bufj, gj) in buf[i * n..(i + 1) * n].iter_mut().zip(g) {
                                    *bufj += w * gj;
                                }
                            }
                        });
                    }
                });
            })
        }))
    }

    /// Row sums of an `[m, n]` matrix as `[m, 1]`.
    pub fn row_sum(&self) -> Result<Tensor, TensorError> {
        require_rank2("row_sum", self)?;
        let (m, n) = (self.rows(), self.cols());
        let values = (0..m)
            .map(|i| self.values()[i * n..(i + 1) * n].iter().sum())
            .collect();
        Ok(finish(vec![m, 1], values, &[self], |out| {
            let a = self.inner().clone();
            Box::new(move || {
                out_grad!(out, g, {
                    if a.requires_grad {
                        a.with_route_buf(|buf| {
                            for i in 0..m {
                                let gi = g[i];
                                for bufj in buf[i * n..(i + 1) * n].iter_mut() {
                                    *bufj += gi;
                                }
                            }
                        });
                    }
                });
            })
        }))
    }

    /// Scales row `i` of an `[m, n]` matrix by `v[i]` (any numel-`m` vector).
    pub fn mul_col_vec(&self, v: &Tensor) -> Result<Tensor, TensorError> {
        require_rank2("mul_col_vec", self)?;
        if v.numel() != self.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "mul_col_vec",
                lhs: self.shape().to_vec(),
                rhs: v.shape().to_vec(),
            });
        }
        let (m, n) = (self.rows(), self.cols());
        let mut values = self.values().to_vec();
        for i in 0..m {
            let w = v.values()[i];
            for vj in values[i * n..(i + 1) * n].iter_mut() {
                *vj *= w;
            }
        }
        Ok(finish(vec![m, n], values, &[self, v], |out| {
            let (a, vv) = (self.inner().clone(), v.inner().clone());
            Box::new(move || {
                out_grad!(out, g, {
                    if a.requires_grad {
                        a.with_route_buf(|buf| {
                            for i in 0..m {
                                let w = vv.values[i];
                                for (bufj, gj) in
                                    buf[i * n..(i + 1) * n].iter_mut().zip(&g[i * n..(i + 1) * n])
                                {
                                    *bufj += w * gj;
                                }
                            }
                        });
                    }
                    if vv.requires_grad {
                        vv.with_route_buf(|buf| {
                            for i in 0..m {
                                let mut s = 0.0;
                                for (gj, aj) in
                                    g[i * n..(i + 1) * n].iter().zip(&a.values[i * n..(i + 1) * n])
                                {
                                    s += gj * aj;
                                }
                                buf[i] += s;
                            }
                        });
                    }
                });
            })
        }))
    }

    /// Scales column `j` of an `[m, n]` matrix by `v[j]` (any numel-`n` vector).
    pub fn mul_row_vec(&self, v: &Tensor) -> Result<Tensor, TensorError> {
        require_rank2("mul_row_vec", self)?;
        if v.numel() != self.cols() {
            return Err(TensorError::ShapeMismatch {
                op: "mul_row_vec",
                lhs: self.shape().to_vec(),
                rhs: v.shape().to_vec(),
            });
        }
        let (m, n) = (self.rows(), self.cols());
        let mut values = self.values().to_vec();
        for i in 0..m {
            for (vj, wj) in values[i * n..(i + 1) * n].iter_mut().zip(v.values()) {
                *vj *= wj;
            }
        }
        Ok(finish(vec![m, n], values, &[self, v], |out| {
            let (a, vv) = (self.inner().clone(), v.inner().clone());
            Box::new(move || {
                out_grad!(out, g, {
                    if a.requires_grad {
                        a.with_route_buf(|buf| {
                            for i in 0..m {
                                for ((bufj, gj), wj) in buf[i * n..(i + 1) * n]
                                    .iter_mut()
                                    .zip(&g[i * n..(i + 1) * n])
                                    .zip(&vv.values)
                                {
                                    *bufj += wj * gj;
                                }
                            }
                        });
                    }
                    if vv.requires_grad {
                        vv.with_route_buf(|buf| {
                            for i in 0..m {
                                for ((bufj, gj), aj) in buf
                                    .iter_mut()
                                    .zip(&g[i * n..(i + 1) * n])
                                    .zip(&a.values[i * n..(i + 1) * n])
                                {
                                    *bufj += gj * aj;
                                }
                            }
                        });
                    }
                });
            })
        }))
    }

    /// Stacks rank-2 tensors with equal column counts along the row axis.
    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Arity {
                op: "concat_rows",
                expected: ">= 1",
                got: 0,
            });
        }
        let n = parts[0].shape().last().copied().unwrap_or(0);
        let mut total_rows = 0;
        for p in parts {
            require_rank2("concat_rows", p)?;
            if p.cols() != n {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: parts[0].shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            total_rows += p.rows();
        }
        let mut values = Vec::with_capacity(total_rows * n);
        for p in parts {
            values.extend_from_slice(p.values());
        }
        let inners: Vec<Rc<Inner>> = parts.iter().map(|p| p.inner().clone()).collect();
        Ok(finish(vec![total_rows, n], values, parts, move |out| {
            Box::new(move || {
                out_grad!(out, g, {
                    let mut offset = 0;
                    for inner in &inners {
                        let len = inner.values.len();
                        if inner.requires_grad {
                            inner.route_accumulate(&g[offset..offset + len]);
                        }
                        offset += len;
                    }
                });
            })
        }))
    }

    /// Stacks rank-2 tensors with equal row counts along the column axis.
    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Arity {
                op: "concat_cols",
                expected: ">= 1",
                got: 0,
            });
        }
        let m = parts[0].shape().first().copied().unwrap_or(0);
        let mut widths = Vec::with_capacity(parts.len());
        let mut total_cols = 0;
        for p in parts {
            require_rank2("concat_cols", p)?;
            if p.rows() != m {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: parts[0].shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            widths.push(p.cols());
            total_cols += p.cols();
        }
        let mut values = Vec::with_capacity(m * total_cols);
        for i in 0..m {
            for p in parts {
                let w = p.cols();
                values.extend_from_slice(&p.values()[i * w..(i + 1) * w]);
            }
        }
        let inners: Vec<Rc<Inner>> = parts.iter().map(|p| p.inner().clone()).collect();
        Ok(finish(vec![m, total_cols], values, parts, move |out| {
            Box::new(move || {
                out_grad!(out, g, {
                    let mut col = 0;
                    for (inner, &w) in inners.iter().zip(&widths) {
                        if inner.requires_grad {
                            inner.with_route_buf(|buf| {
                                for i in 0..m {
                                    let src = &g[i * total_cols + col..i * total_cols + col + w];
                                    for (bufj, gj) in buf[i * w..(i + 1) * w].iter_mut().zip(src) {
                                        *bufj += gj;
                                    }
                                }
                            });
                        }
                        col += w;
                    }
                });
            })
        }))
    }

    /// Binarizes a square soft adjacency: 1 where the value strictly exceeds
    /// `tau` off the diagonal, 0 elsewhere (the diagonal is forced to 0).
    ///
    /// The backward rule is the straight-through estimator: gradients pass to
    /// the soft input unchanged on off-diagonal entries and are dropped on
    /// the diagonal, which the forward output never depends on.
    pub fn threshold_straight_through(&self, tau: f64) -> Result<Tensor, TensorError> {
        require_rank2("threshold_straight_through", self)?;
        if self.rows() != self.cols() {
            return Err(TensorError::InvalidShape {
                op: "threshold_straight_through",
                expected: "a square matrix",
                shape: self.shape().to_vec(),
            });
        }
        let n = self.rows();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j && self.values()[i * n + j] > tau {
                    values[i * n + j] = 1.0;
                }
            }
        }
        Ok(finish(vec![n, n], values, &[self], |out| {
            let a = self.inner().clone();
            Box::new(move || {
                out_grad!(out, g, {
                    if a.requires_grad {
                        a.with_route_buf(|buf| {
                            for i in 0..n {
                                for j in 0..n {
                                    if i != j {
                                        buf[i * n + j] += g[i * n + j];
                                    }
                                }
                            }
                        });
                    }
                });
            })
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{backward, Tape};

    fn t2(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity_is_a_noop() {
        let a = t2(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let out = a.matmul(&Tensor::eye(2)).unwrap();
        assert_eq!(out.values(), a.values());
    }

    #[test]
    fn matmul_rejects_inner_dim_mismatch() {
        let a = t2(&[vec![1.0, 2.0]]);
        let b = t2(&[vec![1.0], vec![2.0], vec![3.0]]);
        let err = a.matmul(&b).unwrap_err();
        match err {
            TensorError::ShapeMismatch { lhs, rhs, .. } => {
                assert_eq!(lhs, vec![1, 2]);
                assert_eq!(rhs, vec![3, 1]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let x = Tensor::zeros(&[3]);
        let y = x.sigmoid().unwrap();
        assert_eq!(y.values(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn row_softmax_of_constant_row_is_uniform() {
        let x = t2(&[vec![0.0, 0.0, 0.0]]);
        let s = x.row_softmax().unwrap();
        for v in s.values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mean_abs_matches_hand_computation() {
        let x = t2(&[vec![1.0, -3.0], vec![0.0, 2.0]]);
        let y = x.abs().unwrap().mean().unwrap();
        assert_eq!(y.item().unwrap(), 1.5);
    }

    #[test]
    fn sum_backward_is_all_ones() {
        let tape = Tape::new().unwrap();
        let x = Tensor::param(&[4], vec![0.5, -1.0, 2.0, 3.0]).unwrap();
        let loss = x.sum().unwrap();
        backward(&loss).unwrap();
        drop(tape);
        assert_eq!(x.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn mae_backward_is_sign_over_n() {
        let tape = Tape::new().unwrap();
        let x = Tensor::param(&[2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let c = Tensor::from_vec(&[2, 2], vec![0.0, 0.0, 4.0, 0.5]).unwrap();
        let loss = x.sub(&c).unwrap().abs().unwrap().mean().unwrap();
        backward(&loss).unwrap();
        drop(tape);
        // diffs: 1, -2, -1, 0  -> signs 1, -1, -1, 0, each / 4
        assert_eq!(x.grad().unwrap(), vec![0.25, -0.25, -0.25, 0.0]);
    }

    #[test]
    fn gradients_accumulate_across_backward_calls() {
        let tape = Tape::new().unwrap();
        let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        let loss = x.sum().unwrap();
        backward(&loss).unwrap();
        backward(&loss).unwrap();
        drop(tape);
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn constant_inputs_receive_no_grad() {
        let tape = Tape::new().unwrap();
        let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        let c = Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap();
        let loss = x.mul(&c).unwrap().sum().unwrap();
        backward(&loss).unwrap();
        drop(tape);
        assert_eq!(x.grad().unwrap(), vec![3.0, 4.0]);
        assert!(c.grad().is_none());
    }

    #[test]
    fn broadcast_add_backward_sums_columns() {
        let tape = Tape::new().unwrap();
        let a = Tensor::from_vec(&[3, 2], vec![0.0; 6]).unwrap();
        let b = Tensor::param(&[2], vec![1.0, -1.0]).unwrap();
        let loss = a.add(&b).unwrap().sum().unwrap();
        backward(&loss).unwrap();
        drop(tape);
        assert_eq!(b.grad().unwrap(), vec![3.0, 3.0]);
    }

    #[test]
    fn masked_mean_rows_selects_and_averages() {
        let a = t2(&[vec![1.0, 2.0], vec![10.0, 20.0], vec![100.0, 200.0]]);
        let mask = Tensor::from_vec(&[3], vec![1.0, 0.0, 1.0]).unwrap();
        let m = a.masked_mean_rows(&mask).unwrap();
        assert_eq!(m.shape(), &[1, 2]);
        assert_eq!(m.values(), &[50.5, 101.0]);
    }

    #[test]
    fn masked_mean_rows_rejects_empty_mask() {
        let a = t2(&[vec![1.0, 2.0]]);
        let mask = Tensor::zeros(&[1]);
        assert!(a.masked_mean_rows(&mask).is_err());
    }

    #[test]
    fn concat_rows_then_backward_slices_gradient() {
        let tape = Tape::new().unwrap();
        let a = Tensor::param(&[1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::param(&[2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let cat = Tensor::concat_rows(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), &[3, 2]);
        let loss = cat.mul(&cat.detached()).unwrap().sum().unwrap();
        backward(&loss).unwrap();
        drop(tape);
        assert_eq!(a.grad().unwrap(), vec![1.0, 2.0]);
        assert_eq!(b.grad().unwrap(), vec![3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn straight_through_threshold_binarizes_and_zeroes_diagonal() {
        let a = t2(&[vec![0.9, 0.6], vec![0.6, 0.9]]);
        let h = a.threshold_straight_through(0.5).unwrap();
        assert_eq!(h.values(), &[0.0, 1.0, 1.0, 0.0]);
        let h2 = a.threshold_straight_through(0.7).unwrap();
        assert_eq!(h2.values(), &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn straight_through_passes_gradient_off_diagonal() {
        let tape = Tape::new().unwrap();
        let soft = Tensor::param(&[2, 2], vec![0.9, 0.6, 0.6, 0.9]).unwrap();
        let hard = soft.threshold_straight_through(0.5).unwrap();
        let loss = hard.sum().unwrap();
        backward(&loss).unwrap();
        drop(tape);
        assert_eq!(soft.grad().unwrap(), vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn op_forward_dispatches_and_checks_arity() {
        let a = t2(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let out = op_forward(OpKind::MatMul, &[&a, &Tensor::eye(2)]).unwrap();
        assert_eq!(out.values(), a.values());
        assert!(matches!(
            op_forward(OpKind::MatMul, &[&a]),
            Err(TensorError::Arity { .. })
        ));
    }
}
