//! Fully-connected networks with ReLU hidden layers.
//!
//! Small enough (widest layer 512) that plain loops over `Vec<F>` beat
//! any dependency. The output head is linear for pre-coders and softmax
//! for detectors; training code works on pre-head logits and uses the
//! fused softmax/cross-entropy gradient.

use rand::Rng;

use crate::error::{Error, Result};
use crate::num::{log_sum_exp, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputHead {
    Linear,
    Softmax,
}

/// Layered weights/biases; `weights[l]` is `dims[l+1]×dims[l]` row major.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<F> {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<F>>,
    pub biases: Vec<Vec<F>>,
    pub head: OutputHead,
}

/// Cached activations of one forward pass: `inputs[0]` is the network
/// input, `inputs[l]` for hidden `l` the post-ReLU activation, and the
/// final entry the pre-head logits.
#[derive(Debug, Clone, Default)]
pub struct MlpCache<F> {
    pub inputs: Vec<Vec<F>>,
}

/// Parameter gradients, mirroring the model shapes.
#[derive(Debug, Clone)]
pub struct MlpGrads<F> {
    pub dw: Vec<Vec<F>>,
    pub db: Vec<Vec<F>>,
}

impl<F: Real> MlpModel<F> {
    pub fn zeros(layer_dims: Vec<usize>, head: OutputHead) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("bad layer dims {layer_dims:?}")));
        }
        let weights = layer_dims
            .windows(2)
            .map(|w| vec![F::zero(); w[0] * w[1]])
            .collect();
        let biases = layer_dims[1..]
            .iter()
            .map(|&d| vec![F::zero(); d])
            .collect();
        Ok(Self {
            layer_dims,
            weights,
            biases,
        head,
        })
    }

    /// He-uniform weights (`U[±√(6/fan_in)]`), zero biases.
    pub fn he_uniform<R: Rng + ?Sized>(
        layer_dims: Vec<usize>,
        head: OutputHead,
        rng: &mut R,
    ) -> Result<Self> {
        let mut model = Self::zeros(layer_dims, head)?;
        for (l, w) in model.weights.iter_mut().enumerate() {
            let fan_in = model.layer_dims[l] as f64;
            let bound = F::of((6.0 / fan_in).sqrt());
            for v in w.iter_mut() {
                *v = (F::unit_uniform(rng) * F::of(2.0) - F::one()) * bound;
            }
        }
        Ok(model)
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("at least two layer dims")
    }

    /// Forward pass applying the output head.
    pub fn forward(&self, x: &[F]) -> Result<Vec<F>> {
        let mut cache = MlpCache::default();
        let logits = self.forward_cached(x, &mut cache)?;
        Ok(match self.head {
            OutputHead::Linear => logits,
            OutputHead::Softmax => softmax(&logits),
        })
    }

    /// Forward pass returning pre-head logits and filling the cache.
    pub fn forward_cached(&self, x: &[F], cache: &mut MlpCache<F>) -> Result<Vec<F>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        cache.inputs.clear();
        cache.inputs.push(x.to_vec());
        let last = self.n_layers() - 1;
        for l in 0..self.n_layers() {
            let n_in = self.layer_dims[l];
            let prev = cache.inputs.last().expect("pushed above");
            let w = &self.weights[l];
            let mut out = self.biases[l].clone();
            for (i, o) in out.iter_mut().enumerate() {
                let row = &w[i * n_in..(i + 1) * n_in];
                let mut acc = F::zero();
                for (a, b) in row.iter().zip(prev) {
                    acc += *a * *b;
                }
                *o += acc;
            }
            if l < last {
                for v in &mut out {
                    if *v < F::zero() {
                        *v = F::zero();
                    }
                }
            }
            cache.inputs.push(out);
        }
        Ok(cache.inputs.last().expect("one entry per layer").clone())
    }

    /// Backpropagate `d_logits` (gradient at the pre-head output),
    /// accumulating parameter gradients into `grads` and returning the
    /// gradient w.r.t. the network input.
    pub fn backward(
        &self,
        cache: &MlpCache<F>,
        d_logits: &[F],
        grads: &mut MlpGrads<F>,
    ) -> Vec<F> {
        debug_assert_eq!(cache.inputs.len(), self.n_layers() + 1);
        debug_assert_eq!(d_logits.len(), self.output_dim());
        let mut d = d_logits.to_vec();
        for l in (0..self.n_layers()).rev() {
            let n_in = self.layer_dims[l];
            let input = &cache.inputs[l];
            let dw = &mut grads.dw[l];
            for (i, &di) in d.iter().enumerate() {
                grads.db[l][i] += di;
                let row = &mut dw[i * n_in..(i + 1) * n_in];
                for (r, &xj) in row.iter_mut().zip(input) {
                    *r += di * xj;
                }
            }
            let w = &self.weights[l];
            let mut d_prev = vec![F::zero(); n_in];
            for (i, &di) in d.iter().enumerate() {
                let row = &w[i * n_in..(i + 1) * n_in];
                for (dp, &wij) in d_prev.iter_mut().zip(row) {
                    *dp += di * wij;
                }
            }
            if l > 0 {
                // ReLU mask from the cached post-activation.
                for (dp, &a) in d_prev.iter_mut().zip(&cache.inputs[l]) {
                    if a <= F::zero() {
                        *dp = F::zero();
                    }
                }
            }
            d = d_prev;
        }
        d
    }

    /// Mutable views of every parameter block, weights before biases,
    /// layer by layer. Order is what Adam state indexes.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .map(Vec::as_mut_slice)
            .collect()
    }

    pub fn grad_slices<'a>(grads: &'a MlpGrads<F>) -> Vec<&'a [F]> {
        grads
            .dw
            .iter()
            .chain(grads.db.iter())
            .map(Vec::as_slice)
            .collect()
    }
}

impl<F: Real> MlpGrads<F> {
    pub fn zeros_like(model: &MlpModel<F>) -> Self {
        Self {
            dw: model.weights.iter().map(|w| vec![F::zero(); w.len()]).collect(),
            db: model.biases.iter().map(|b| vec![F::zero(); b.len()]).collect(),
        }
    }

    pub fn clear(&mut self) {
        for v in self.dw.iter_mut().chain(self.db.iter_mut()) {
            v.iter_mut().for_each(|x| *x = F::zero());
        }
    }
}

pub fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let z = log_sum_exp(logits);
    logits.iter().map(|&l| (l - z).exp()).collect()
}

/// Cross entropy `-ln q[label]` in nats for a softmax over `logits`.
pub fn cross_entropy_nats<F: Real>(logits: &[F], label: usize) -> F {
    log_sum_exp(logits) - logits[label]
}

/// Fused gradient of [`cross_entropy_nats`] w.r.t. the logits, scaled:
/// `scale·(softmax(logits) − onehot(label))`.
pub fn cross_entropy_grad<F: Real>(logits: &[F], label: usize, scale: F, out: &mut [F]) {
    let q = softmax(logits);
    for (o, &qi) in out.iter_mut().zip(&q) {
        *o = scale * qi;
    }
    out[label] -= scale;
}
