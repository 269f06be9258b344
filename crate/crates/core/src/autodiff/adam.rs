//! Adam with bias correction.

use super::tensor::{Scalar, Tensor};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("parameter {index}: gradient shape {grad:?} does not match parameter {param:?}")]
    ShapeMismatch {
        index: usize,
        param: Vec<usize>,
        grad: Vec<usize>,
    },
    #[error("parameter {0}: non-finite gradient")]
    NonFiniteGradient(usize),
    #[error("optimizer state tracks {state} parameters, got {given}")]
    WrongParamCount { state: usize, given: usize },
}

/// Hyperparameters; the defaults are the usual ones.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators for one parameter group.
#[derive(Clone, Debug)]
pub struct AdamState<S: Scalar> {
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
    pub step: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(shapes: &[&[usize]]) -> Self {
        Self {
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            step: 0,
        }
    }

    /// One update across the whole group. `grads[i]` of `None` counts as a
    /// zero gradient.
    pub fn step(
        &mut self,
        hp: &AdamParams,
        params: &mut [&mut Tensor<S>],
        grads: &[Option<&Tensor<S>>],
    ) -> Result<(), OptimError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(OptimError::WrongParamCount {
                state: self.m.len(),
                given: params.len().max(grads.len()),
            });
        }
        for (index, (p, g)) in params.iter().zip(grads).enumerate() {
            if let Some(g) = g {
                if g.shape() != p.shape() {
                    return Err(OptimError::ShapeMismatch {
                        index,
                        param: p.shape().to_vec(),
                        grad: g.shape().to_vec(),
                    });
                }
                if !g.all_finite() {
                    return Err(OptimError::NonFiniteGradient(index));
                }
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = S::from_f64(hp.beta1);
        let b2 = S::from_f64(hp.beta2);
        let one_minus_b1 = S::from_f64(1.0 - hp.beta1);
        let one_minus_b2 = S::from_f64(1.0 - hp.beta2);
        let corr1 = S::from_f64(1.0 / (1.0 - hp.beta1.powi(t)));
        let corr2 = S::from_f64(1.0 / (1.0 - hp.beta2.powi(t)));
        let lr = S::from_f64(hp.lr);
        let eps = S::from_f64(hp.eps);

        for (index, param) in params.iter_mut().enumerate() {
            let m = self.m[index].data_mut();
            let v = self.v[index].data_mut();
            let pd = param.data_mut();
            match grads[index] {
                Some(g) => {
                    for ((p, (mm, vv)), &gg) in
                        pd.iter_mut().zip(m.iter_mut().zip(v.iter_mut())).zip(g.data())
                    {
                        *mm = b1 * *mm + one_minus_b1 * gg;
                        *vv = b2 * *vv + one_minus_b2 * gg * gg;
                        let mhat = *mm * corr1;
                        let vhat = *vv * corr2;
                        *p = *p - lr * mhat / (vhat.sqrt() + eps);
                    }
                }
                None => {
                    // moments decay, parameters keep their values
                    for (mm, vv) in m.iter_mut().zip(v.iter_mut()) {
                        *mm = b1 * *mm;
                        *vv = b2 * *vv;
                    }
                }
            }
        }
        Ok(())
    }
}
