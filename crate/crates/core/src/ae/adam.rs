//! Adam with bias correction over a flat view of all trainable blocks.

use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone)]
pub struct AdamState<F> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    pub step: u64,
    m: Vec<F>,
    v: Vec<F>,
}

impl<F: Real> AdamState<F> {
    pub fn new(n_params: usize, lr: F) -> Self {
        Self {
            lr,
            beta1: F::of(0.9),
            beta2: F::of(0.999),
            eps: F::of(1e-8),
            step: 0,
            m: vec![F::zero(); n_params],
            v: vec![F::zero(); n_params],
        }
    }

    pub fn n_params(&self) -> usize {
        self.m.len()
    }
}

/// One Adam update. `params` and `grads` are parallel lists of blocks
/// whose concatenated length must equal the state size; the blocks are
/// visited in order, so the same assembly order must be used every step.
pub fn adam_step<F: Real>(
    state: &mut AdamState<F>,
    params: &mut [&mut [F]],
    grads: &[&[F]],
) -> Result<()> {
    let total: usize = params.iter().map(|p| p.len()).sum();
    let total_g: usize = grads.iter().map(|g| g.len()).sum();
    if total != state.n_params() || total_g != state.n_params() {
        return Err(Error::DimMismatch {
            expected: state.n_params(),
            got: total.max(total_g),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = F::one() - state.beta1.powi(t);
    let bc2 = F::one() - state.beta2.powi(t);
    let mut off = 0;
    for (block, gblock) in params.iter_mut().zip(grads) {
        debug_assert_eq!(block.len(), gblock.len());
        for (p, &g) in block.iter_mut().zip(gblock.iter()) {
            let m = &mut state.m[off];
            let v = &mut state.v[off];
            *m = state.beta1 * *m + (F::one() - state.beta1) * g;
            *v = state.beta2 * *v + (F::one() - state.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p = *p - state.lr * m_hat / (v_hat.sqrt() + state.eps);
            off += 1;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut st = AdamState::<f64>::new(3, 1e-3);
        let mut p = vec![0.5, -1.0, 2.0];
        let orig = p.clone();
        let g = vec![0.0; 3];
        adam_step(&mut st, &mut [&mut p], &[&g]).unwrap();
        assert_eq!(p, orig);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        // t = 1: m̂ = g, v̂ = g², so Δθ = −lr·g/(|g| + ε).
        let lr = 1e-3;
        let mut st = AdamState::<f64>::new(2, lr);
        let mut p = vec![1.0, 1.0];
        let g = vec![0.37, -42.0];
        adam_step(&mut st, &mut [&mut p], &[&g]).unwrap();
        for (i, (&pi, &gi)) in p.iter().zip(&g).enumerate() {
            let expect = 1.0 - lr * gi / (gi.abs() + 1e-8);
            assert!((pi - expect).abs() < 1e-15, "param {i}");
        }
    }

    #[test]
    fn constant_gradient_approaches_signed_rate() {
        let lr = 1e-3;
        let mut st = AdamState::<f64>::new(1, lr);
        let mut p = vec![0.0];
        let g = vec![5.0];
        let mut prev = p[0];
        for _ in 0..200 {
            prev = p[0];
            adam_step(&mut st, &mut [&mut p], &[&g]).unwrap();
        }
        let delta = prev - p[0];
        assert!((delta - lr).abs() < 1e-6, "step magnitude {delta}");
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut st = AdamState::<f64>::new(4, 1e-3);
        let mut p = vec![0.0; 3];
        let g = vec![0.0; 3];
        assert!(adam_step(&mut st, &mut [&mut p], &[&g]).is_err());
    }
}
