//! Adam with decoupled weight decay, plus the step learning-rate schedule.

use super::{ParamSet, Tensor, TensorError};

/// Adam optimizer state: per-parameter moment buffers and a step counter.
///
/// Parameters are updated functionally: each step replaces the tensor behind
/// every parameter with a fresh leaf, which also leaves the new tensor with
/// an empty gradient buffer (the "grads are zeroed after the step" rule).
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }
}

/// One Adam update over every parameter in the set.
///
/// Requires a populated gradient on each parameter (the error names the
/// offender). Applies bias correction, then decoupled weight decay as an
/// extra `-lr * wd * value` term. Gradients are zeroed by the replacement.
pub fn adam_step(state: &mut AdamState, params: &mut ParamSet) -> Result<(), TensorError> {
    if state.first_moment.is_empty() {
        for p in params.iter() {
            state.first_moment.push(vec![0.0; p.tensor.numel()]);
            state.second_moment.push(vec![0.0; p.tensor.numel()]);
        }
    }

    // Validate everything up front so a failed step leaves params untouched.
    let mut grads = Vec::with_capacity(params.len());
    for (idx, p) in params.iter().enumerate() {
        let grad = p.tensor.grad().ok_or_else(|| TensorError::MissingGrad {
            name: p.name.clone(),
        })?;
        if state.first_moment[idx].len() != grad.len() {
            return Err(TensorError::MomentMismatch {
                name: p.name.clone(),
            });
        }
        grads.push(grad);
    }

    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    let lr = state.learning_rate;
    let wd = state.weight_decay;

    for (idx, (p, grad)) in params.iter_mut().zip(&grads).enumerate() {
        let m = &mut state.first_moment[idx];
        let v = &mut state.second_moment[idx];
        let old = p.tensor.values();
        let mut updated = Vec::with_capacity(old.len());
        for i in 0..old.len() {
            let g = grad[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            let mut x = old[i] - lr * m_hat / (v_hat.sqrt() + state.epsilon);
            if wd > 0.0 {
                x -= lr * wd * old[i];
            }
            updated.push(x);
        }
        p.tensor = Tensor::param(p.tensor.shape(), updated)?;
    }
    Ok(())
}

/// Step schedule: multiplies the learning rate by `factor` once per milestone
/// fraction of the total epoch count that has been reached.
#[derive(Clone, Debug)]
pub struct LrSchedule {
    pub milestones: Vec<f64>,
    pub factor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            milestones: vec![0.10, 0.30, 0.50],
            factor: 0.3,
        }
    }
}

impl LrSchedule {
    /// Learning rate in effect for 0-based `epoch` out of `total_epochs`.
    pub fn lr_at(&self, base_lr: f64, epoch: usize, total_epochs: usize) -> f64 {
        let hits = self
            .milestones
            .iter()
            .filter(|&&f| {
                let milestone = (f * total_epochs as f64).floor() as usize;
                epoch >= milestone
            })
            .count();
        base_lr * self.factor.powi(hits as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{backward, Tape};

    fn single_param(v: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.push("p", Tensor::param(&[1], vec![v]).unwrap());
        ps
    }

    #[test]
    fn first_step_moves_by_roughly_lr_times_sign() {
        let mut ps = single_param(1.0);
        ps.get("p").unwrap(); // grad set manually below
        {
            let tape = Tape::new().unwrap();
            let loss = ps.get("p").unwrap().sum().unwrap(); // d loss / d p = 1
            backward(&loss).unwrap();
            drop(tape);
        }
        let mut state = AdamState::new(0.1, 0.0);
        adam_step(&mut state, &mut ps).unwrap();
        // Bias correction makes m_hat = v_hat = 1 on the first step, so the
        // update is lr / (1 + eps).
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        let got = ps.get("p").unwrap().values()[0];
        assert!((got - expected).abs() < 1e-15, "got {got}");
        assert!((got - 0.9).abs() < 1e-8);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut ps = single_param(2.5);
        {
            let tape = Tape::new().unwrap();
            let loss = ps.get("p").unwrap().scale(0.0).unwrap().sum().unwrap();
            backward(&loss).unwrap();
            drop(tape);
        }
        assert_eq!(ps.get("p").unwrap().grad().unwrap(), vec![0.0]);
        let mut state = AdamState::new(0.1, 0.0);
        adam_step(&mut state, &mut ps).unwrap();
        assert_eq!(ps.get("p").unwrap().values()[0], 2.5);
    }

    #[test]
    fn missing_grad_is_rejected_by_name() {
        let mut ps = single_param(1.0);
        let mut state = AdamState::new(0.1, 0.0);
        match adam_step(&mut state, &mut ps) {
            Err(TensorError::MissingGrad { name }) => assert_eq!(name, "p"),
            other => panic!("expected MissingGrad, got {other:?}"),
        }
    }

    #[test]
    fn step_replaces_tensors_and_clears_grads() {
        let mut ps = single_param(1.0);
        {
            let tape = Tape::new().unwrap();
            let loss = ps.get("p").unwrap().sum().unwrap();
            backward(&loss).unwrap();
            drop(tape);
        }
        let mut state = AdamState::new(0.1, 0.0);
        adam_step(&mut state, &mut ps).unwrap();
        assert!(ps.get("p").unwrap().grad().is_none());
    }

    #[test]
    fn successive_steps_decrease_a_quadratic() {
        // loss(p) = (p - 3)^2, starting at p = 0
        let mut ps = single_param(0.0);
        let mut state = AdamState::new(0.1, 0.0);
        let mut losses = Vec::new();
        for _ in 0..2 {
            let tape = Tape::new().unwrap();
            let p = ps.get("p").unwrap().clone();
            let diff = p.sub(&Tensor::from_vec(&[1], vec![3.0]).unwrap()).unwrap();
            let loss = diff.mul(&diff).unwrap().sum().unwrap();
            losses.push(loss.item().unwrap());
            backward(&loss).unwrap();
            drop(tape);
            adam_step(&mut state, &mut ps).unwrap();
        }
        // Evaluate once more after the second step.
        let p = ps.get("p").unwrap().values()[0];
        losses.push((p - 3.0) * (p - 3.0));
        assert!(losses[1] < losses[0]);
        assert!(losses[2] < losses[1]);
    }

    #[test]
    fn weight_decay_shrinks_even_with_zero_grad() {
        let mut ps = single_param(2.0);
        {
            let tape = Tape::new().unwrap();
            let loss = ps.get("p").unwrap().scale(0.0).unwrap().sum().unwrap();
            backward(&loss).unwrap();
            drop(tape);
        }
        let mut state = AdamState::new(0.1, 0.5);
        adam_step(&mut state, &mut ps).unwrap();
        // pure decay: p - lr * wd * p = 2.0 - 0.1 * 0.5 * 2.0
        assert!((ps.get("p").unwrap().values()[0] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn schedule_hits_all_milestones() {
        let s = LrSchedule::default();
        let base = 1.0;
        assert_eq!(s.lr_at(base, 0, 100), 1.0);
        assert_eq!(s.lr_at(base, 9, 100), 1.0);
        assert!((s.lr_at(base, 10, 100) - 0.3).abs() < 1e-15);
        assert!((s.lr_at(base, 30, 100) - 0.09).abs() < 1e-15);
        assert!((s.lr_at(base, 50, 100) - 0.027).abs() < 1e-15);
        // After all milestones the factor is exactly 0.3^3.
        assert_eq!(s.lr_at(base, 99, 100), base * 0.3f64.powi(3));
    }
}
