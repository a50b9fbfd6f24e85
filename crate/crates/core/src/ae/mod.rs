//! End-to-end learned pre-coding and detection.
//!
//! The trainable chain per sample is: symbol indices → pre-coder →
//! modulator (cos² transfer at the current power allocation) → a fresh
//! channel draw → additive noise → detector(s). Everything differentiable
//! is trained jointly by Adam through the analytic MZM derivative, with
//! the channel matrix held constant per sample; the power allocation is a
//! softmax over raw parameters so the total-power constraint holds by
//! construction.
//!
//! Pre-coders: `Prec1` is the plain PAM scaling `v = V_π·x/(M−1)` (power
//! allocation is then the only transmit-side freedom), `Prec2` an affine
//! map of the normalized indices, `Prec3` a small ReLU network.
//! Detectors: `Det1` is one network per mode on its own photocurrent
//! (trained on the worst-mode cross entropy, which targets equal rates),
//! `Det2` one joint network over all modes. The Gaussian auxiliary
//! receiver replaces the networks at evaluation time with a
//! moment-matched Gaussian likelihood per mode, the short-reach status
//! quo; training then still uses the `Det1` networks to shape the
//! pre-coder.

pub mod adam;
pub mod mlp;

use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::channel::{LinkConfig, TransferMatrix};
use crate::error::{Error, Result};
use crate::num::{log_sum_exp, Real};
use crate::seed::stream_rng;

pub use adam::{adam_step, AdamState};
pub use mlp::{cross_entropy_grad, cross_entropy_nats, softmax, MlpCache, MlpGrads, MlpModel, OutputHead};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecoderKind {
    /// Equidistant drive voltages `v = V_π·x/(M−1)` (the trivial map;
    /// levels bunch at the intensity rails through the cos² transfer).
    Prec1,
    /// Equidistant intensity levels via the pre-distorted drive
    /// `v = (2V_π/π)·arccos(√(x/(M−1)))` — the conventional PAM eye and
    /// the reference system for crosstalk-tolerance comparisons.
    Prec1Lin,
    /// Trainable affine map of the normalized indices.
    Prec2,
    /// Trainable nonlinear map.
    Prec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    Det1,
    Det2,
    /// Gaussian auxiliary receiver at evaluation time; `Det1` networks
    /// are still trained as the pre-coder's cost function.
    GaussianAux,
}

impl PrecoderKind {
    pub fn label(self) -> &'static str {
        match self {
            PrecoderKind::Prec1 => "prec1",
            PrecoderKind::Prec1Lin => "prec1lin",
            PrecoderKind::Prec2 => "prec2",
            PrecoderKind::Prec3 => "prec3",
        }
    }
}

impl DetectorKind {
    pub fn label(self) -> &'static str {
        match self {
            DetectorKind::Det1 => "det1",
            DetectorKind::Det2 => "det2",
            DetectorKind::GaussianAux => "gaussian",
        }
    }
}

/// Training hyperparameters. The defaults mirror the experimental
/// protocol (batch 200, 10⁶ training and 10⁵ test symbols); desk-scale
/// runs shrink `n_train_symbols`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub n_train_symbols: usize,
    pub n_test_symbols: usize,
    pub precoder: PrecoderKind,
    pub detector: DetectorKind,
    pub learn_power: bool,
    pub learning_rate: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(precoder: PrecoderKind, detector: DetectorKind, seed: u64) -> Self {
        Self {
            batch_size: 200,
            n_train_symbols: 1_000_000,
            n_test_symbols: 100_000,
            precoder,
            detector,
            learn_power: true,
            learning_rate: 1e-3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.n_train_symbols == 0 || self.n_test_symbols == 0 {
            return Err(Error::Config("batch and symbol counts must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Transmit-side mapping from symbol indices to modulator voltages.
#[derive(Debug, Clone, PartialEq)]
pub enum Precoder<F> {
    /// `v = V_π·x/(M−1)`; no trainable parameters.
    Scale,
    /// `v = (2V_π/π)·arccos(√(x/(M−1)))`: drive pre-distortion giving
    /// equidistant intensity levels `s = P·x/(M−1)`; the drive does not
    /// depend on the carrier power. No trainable parameters.
    ScaleIntensity,
    /// Affine/nonlinear network on `x̃ = x/(M−1)` with a linear head.
    Mlp(MlpModel<F>),
}

/// Receive-side networks.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorBank<F> {
    /// One classifier per mode over its scalar photocurrent.
    PerMode(Vec<MlpModel<F>>),
    /// One joint classifier over all photocurrents (`M^N` classes).
    Joint(MlpModel<F>),
}

/// Frozen per-mode affine conditioning of detector inputs, estimated on
/// a warm-up stream before training.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<F> {
    pub mean: Vec<F>,
    pub scale: Vec<F>,
}

/// Everything the transmitter/receiver pair needs at run time.
#[derive(Debug, Clone)]
pub struct TrainedSystem<F> {
    pub link: LinkConfig<F>,
    pub cfg: TrainConfig,
    pub precoder: Precoder<F>,
    pub detector: DetectorBank<F>,
    pub power_theta: Vec<F>,
    pub standardizer: Standardizer<F>,
}

/// Moment-matched Gaussian likelihood per mode:
/// `q(x_i = m | y) ∝ prior[i][m]·exp(−0.5·(y − mu[i][m])²/sigma_hat[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianReceiverParams<F> {
    pub mu: Vec<Vec<F>>,
    pub sigma_hat: Vec<F>,
    pub prior: Vec<Vec<F>>,
}

/// Achievable-rate estimate and the settings it belongs to.
#[derive(Debug, Clone)]
pub struct RateReport<F> {
    /// `log2 M − CE_i` per mode (empty for joint detection).
    pub per_mode_rate: Vec<F>,
    /// `N·min_i rate_i` for per-mode receivers, `N·log2 M − CE_joint`
    /// for the joint one; clamped at zero.
    pub reported_rate: F,
    pub precoder: PrecoderKind,
    pub detector_label: String,
    pub mod_order: usize,
    pub snr_db: F,
    pub seed: u64,
    pub power_dbm: Vec<F>,
    pub n_test_symbols: usize,
}

/// Result of [`train`]: the system, the Gaussian receiver fit when the
/// configuration evaluates with one, and the test-set rate.
#[derive(Debug, Clone)]
pub struct TrainOutput<F> {
    pub system: TrainedSystem<F>,
    pub gaussian: Option<GaussianReceiverParams<F>>,
    pub report: RateReport<F>,
}

/// Per-mode detector topology `[1, M², M², M]` (Table-style sizing:
/// 8-PAM → 1×64×64×8, 16-PAM → 1×256×256×16).
pub fn det1_dims(m: usize) -> Vec<usize> {
    vec![1, m * m, m * m, m]
}

/// Joint detector topology `[N, 2M², 2M², M^N]`.
pub fn det2_dims(n_modes: usize, m: usize) -> Vec<usize> {
    vec![n_modes, 2 * m * m, 2 * m * m, m.pow(n_modes as u32)]
}

/// Nonlinear pre-coder topology `[N, 16, 16, N]`.
pub fn prec3_dims(n_modes: usize) -> Vec<usize> {
    vec![n_modes, 16, 16, n_modes]
}

/// Pre-coder forward: symbol indices to modulator voltages. The output
/// is intentionally unconstrained; the modulator cos² transfer enforces
/// the amplitude limits downstream.
pub fn precode<F: Real>(
    precoder: &Precoder<F>,
    x: &[usize],
    m: usize,
    v_pi: F,
) -> Result<Vec<F>> {
    for &xi in x {
        if xi >= m {
            return Err(Error::Domain(format!("symbol {xi} outside 0..{m}")));
        }
    }
    let denom = F::of((m - 1) as f64);
    match precoder {
        Precoder::Scale => Ok(x.iter().map(|&xi| v_pi * F::of(xi as f64) / denom).collect()),
        Precoder::ScaleIntensity => Ok(x
            .iter()
            .map(|&xi| {
                (F::of(2.0) * v_pi / F::PI()) * (F::of(xi as f64) / denom).sqrt().acos()
            })
            .collect()),
        Precoder::Mlp(model) => {
            if model.input_dim() != x.len() {
                return Err(Error::Config(format!(
                    "pre-coder expects {} modes, got {}",
                    model.input_dim(),
                    x.len()
                )));
            }
            let x_tilde: Vec<F> = x.iter().map(|&xi| F::of(xi as f64) / denom).collect();
            model.forward(&x_tilde)
        }
    }
}

/// `P = softmax(θ)·P_tot`: differentiable allocation satisfying the
/// total-power constraint by construction.
pub fn power_allocation_forward<F: Real>(theta: &[F], p_tot_mw: F) -> Vec<F> {
    softmax(theta).into_iter().map(|s| s * p_tot_mw).collect()
}

/// Gradient pull-back through [`power_allocation_forward`]:
/// `dθ_j = P_tot·σ_j·(dP_j − Σ_i dP_i·σ_i)`.
pub fn power_allocation_backward<F: Real>(theta: &[F], p_tot_mw: F, d_p: &[F]) -> Vec<F> {
    let s = softmax(theta);
    let inner: F = d_p.iter().zip(&s).map(|(&d, &si)| d * si).sum();
    s.iter()
        .zip(d_p)
        .map(|(&si, &di)| p_tot_mw * si * (di - inner))
        .collect()
}

/// Worst-mode cost: `max_i CE_i`, ties to the lowest index. Returns the
/// value and the mode the (sub)gradient routes through.
pub fn loss_det1<F: Real>(ce_per_mode: &[F]) -> (F, usize) {
    let mut best = 0usize;
    for (i, &ce) in ce_per_mode.iter().enumerate() {
        if ce > ce_per_mode[best] {
            best = i;
        }
    }
    (ce_per_mode[best], best)
}

/// Joint cost: categorical cross entropy of the `M^N`-way softmax, nats.
pub fn loss_det2<F: Real>(joint_logits: &[F], joint_label: usize) -> Result<F> {
    if joint_label >= joint_logits.len() {
        return Err(Error::Domain(format!(
            "label {joint_label} outside 0..{}",
            joint_logits.len()
        )));
    }
    Ok(cross_entropy_nats(joint_logits, joint_label))
}

/// Fixed randomness for one batch: symbols, one channel draw per sample,
/// one noise vector per sample. Holding this fixed makes the batch loss
/// a deterministic function of the parameters (finite-difference
/// checkable).
#[derive(Debug, Clone)]
pub struct PreparedBatch<F> {
    pub x: Vec<usize>,
    pub h: Vec<TransferMatrix<F>>,
    pub eps: Vec<F>,
    pub n_modes: usize,
}

impl<F: Real> PreparedBatch<F> {
    pub fn draw<R: Rng + ?Sized>(
        link: &LinkConfig<F>,
        batch_size: usize,
        rng: &mut R,
    ) -> Self {
        let n = link.n_modes;
        let m = link.mod_order;
        let mut x = Vec::with_capacity(batch_size * n);
        let mut h = Vec::with_capacity(batch_size);
        let mut eps = Vec::with_capacity(batch_size * n);
        for _ in 0..batch_size {
            for _ in 0..n {
                x.push(rng.gen_range(0..m));
            }
            h.push(link.draw_channel(rng));
            for _ in 0..n {
                eps.push(F::std_normal(rng));
            }
        }
        Self {
            x,
            h,
            eps,
            n_modes: n,
        }
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

struct SampleForward<F> {
    prec_cache: Option<MlpCache<F>>,
    det_caches: Vec<MlpCache<F>>,
    det_logits: Vec<Vec<F>>,
    v: Vec<F>,
    y_hat: Vec<F>,
}

/// Gradients of every trainable block.
pub struct GradBuffers<F> {
    pub precoder: Option<MlpGrads<F>>,
    pub detectors: Vec<MlpGrads<F>>,
    pub theta: Vec<F>,
}

impl<F: Real> GradBuffers<F> {
    pub fn zeros_like(system: &TrainedSystem<F>) -> Self {
        let precoder = match &system.precoder {
            Precoder::Scale | Precoder::ScaleIntensity => None,
            Precoder::Mlp(m) => Some(MlpGrads::zeros_like(m)),
        };
        let detectors = match &system.detector {
            DetectorBank::PerMode(ds) => ds.iter().map(MlpGrads::zeros_like).collect(),
            DetectorBank::Joint(d) => vec![MlpGrads::zeros_like(d)],
        };
        Self {
            precoder,
            detectors,
            theta: vec![F::zero(); system.power_theta.len()],
        }
    }

    pub fn clear(&mut self) {
        if let Some(p) = &mut self.precoder {
            p.clear();
        }
        for d in &mut self.detectors {
            d.clear();
        }
        self.theta.iter_mut().for_each(|t| *t = F::zero());
    }
}

fn forward_sample<F: Real>(
    system: &TrainedSystem<F>,
    powers: &[F],
    x: &[usize],
    h: &TransferMatrix<F>,
    eps: &[F],
) -> Result<SampleForward<F>> {
    let link = &system.link;
    let n = link.n_modes;
    let denom = F::of((link.mod_order - 1) as f64);
    let c = F::FRAC_PI_2() / link.v_pi;

    let (v, prec_cache) = match &system.precoder {
        Precoder::Scale => (
            x.iter()
                .map(|&xi| link.v_pi * F::of(xi as f64) / denom)
                .collect::<Vec<F>>(),
            None,
        ),
        Precoder::ScaleIntensity => (
            x.iter()
                .map(|&xi| {
                    (F::of(2.0) * link.v_pi / F::PI()) * (F::of(xi as f64) / denom).sqrt().acos()
                })
                .collect::<Vec<F>>(),
            None,
        ),
        Precoder::Mlp(model) => {
            let x_tilde: Vec<F> = x.iter().map(|&xi| F::of(xi as f64) / denom).collect();
            let mut cache = MlpCache::default();
            let v = model.forward_cached(&x_tilde, &mut cache)?;
            (v, Some(cache))
        }
    };

    let sigma = link.sigma_w();
    let mut y_hat = vec![F::zero(); n];
    let mut s = vec![F::zero(); n];
    for i in 0..n {
        let cos = (c * v[i]).cos();
        s[i] = powers[i] * cos * cos;
    }
    let y_raw = h.mat_vec(&s);
    for i in 0..n {
        let y = y_raw[i] + sigma * eps[i];
        y_hat[i] = (y - system.standardizer.mean[i]) / system.standardizer.scale[i];
    }

    let (det_caches, det_logits) = match &system.detector {
        DetectorBank::PerMode(dets) => {
            let mut caches = Vec::with_capacity(n);
            let mut logits = Vec::with_capacity(n);
            for (i, det) in dets.iter().enumerate() {
                let mut cache = MlpCache::default();
                let l = det.forward_cached(&[y_hat[i]], &mut cache)?;
                caches.push(cache);
                logits.push(l);
            }
            (caches, logits)
        }
        DetectorBank::Joint(det) => {
            let mut cache = MlpCache::default();
            let l = det.forward_cached(&y_hat, &mut cache)?;
            (vec![cache], vec![l])
        }
    };

    Ok(SampleForward {
        prec_cache,
        det_caches,
        det_logits,
        v,
        y_hat,
    })
}

fn joint_label(x: &[usize], m: usize) -> usize {
    x.iter().fold(0, |acc, &xi| acc * m + xi)
}

/// Batch loss in nats (worst-mode CE for per-mode detection, joint CE
/// otherwise) as a deterministic function of the parameters.
pub fn batch_loss<F: Real>(system: &TrainedSystem<F>, batch: &PreparedBatch<F>) -> Result<F> {
    let powers = power_allocation_forward(&system.power_theta, system.link.p_tot_mw());
    let n = batch.n_modes;
    let b = batch.len();
    let m = system.link.mod_order;
    match &system.detector {
        DetectorBank::PerMode(_) => {
            let mut ce = vec![F::zero(); n];
            for idx in 0..b {
                let x = &batch.x[idx * n..(idx + 1) * n];
                let f = forward_sample(system, &powers, x, &batch.h[idx], &batch.eps[idx * n..(idx + 1) * n])?;
                for i in 0..n {
                    ce[i] += cross_entropy_nats(&f.det_logits[i], x[i]);
                }
            }
            let scale = F::of(b as f64);
            for c in &mut ce {
                *c /= scale;
            }
            Ok(loss_det1(&ce).0)
        }
        DetectorBank::Joint(_) => {
            let mut total = F::zero();
            for idx in 0..b {
                let x = &batch.x[idx * n..(idx + 1) * n];
                let f = forward_sample(system, &powers, x, &batch.h[idx], &batch.eps[idx * n..(idx + 1) * n])?;
                total += loss_det2(&f.det_logits[0], joint_label(x, m))?;
            }
            Ok(total / F::of(b as f64))
        }
    }
}

/// Loss plus gradients of every trainable block (accumulated into
/// `grads`, which the caller clears). Two passes for per-mode detection:
/// the worst mode is only known after the whole batch is forwarded.
pub fn batch_loss_and_grads<F: Real>(
    system: &TrainedSystem<F>,
    batch: &PreparedBatch<F>,
    grads: &mut GradBuffers<F>,
) -> Result<F> {
    let link = &system.link;
    let powers = power_allocation_forward(&system.power_theta, link.p_tot_mw());
    let n = batch.n_modes;
    let b = batch.len();
    let m = link.mod_order;
    let c = F::FRAC_PI_2() / link.v_pi;
    let inv_b = F::one() / F::of(b as f64);

    let mut forwards = Vec::with_capacity(b);
    let mut ce = vec![F::zero(); n.max(1)];
    let mut joint_total = F::zero();
    for idx in 0..b {
        let x = &batch.x[idx * n..(idx + 1) * n];
        let f = forward_sample(system, &powers, x, &batch.h[idx], &batch.eps[idx * n..(idx + 1) * n])?;
        match &system.detector {
            DetectorBank::PerMode(_) => {
                for i in 0..n {
                    ce[i] += cross_entropy_nats(&f.det_logits[i], x[i]) * inv_b;
                }
            }
            DetectorBank::Joint(_) => {
                joint_total += loss_det2(&f.det_logits[0], joint_label(x, m))? * inv_b;
            }
        }
        forwards.push(f);
    }

    let (loss, chosen_mode) = match &system.detector {
        DetectorBank::PerMode(_) => loss_det1(&ce[..n]),
        DetectorBank::Joint(_) => (joint_total, 0),
    };

    let mut d_p_total = vec![F::zero(); n];
    for idx in 0..b {
        let x = &batch.x[idx * n..(idx + 1) * n];
        let f = &forwards[idx];
        // Gradient w.r.t. the raw photocurrents y.
        let mut d_y = vec![F::zero(); n];
        match &system.detector {
            DetectorBank::PerMode(dets) => {
                let det = &dets[chosen_mode];
                let mut d_logits = vec![F::zero(); det.output_dim()];
                cross_entropy_grad(&f.det_logits[chosen_mode], x[chosen_mode], inv_b, &mut d_logits);
                let d_in = det.backward(&f.det_caches[chosen_mode], &d_logits, &mut grads.detectors[chosen_mode]);
                d_y[chosen_mode] = d_in[0] / system.standardizer.scale[chosen_mode];
            }
            DetectorBank::Joint(det) => {
                let mut d_logits = vec![F::zero(); det.output_dim()];
                cross_entropy_grad(&f.det_logits[0], joint_label(x, m), inv_b, &mut d_logits);
                let d_in = det.backward(&f.det_caches[0], &d_logits, &mut grads.detectors[0]);
                for i in 0..n {
                    d_y[i] = d_in[i] / system.standardizer.scale[i];
                }
            }
        }
        // ds = Hᵀ·dy, then through the modulator.
        let h = &batch.h[idx];
        let mut d_v = vec![F::zero(); n];
        for i in 0..n {
            let mut d_s = F::zero();
            for r in 0..n {
                d_s += h.entry(r, i) * d_y[r];
            }
            let cos = (c * f.v[i]).cos();
            // s = P·cos²(c·v): ∂s/∂v = −P·c·sin(2cv), ∂s/∂P = cos².
            d_v[i] = -d_s * powers[i] * c * (F::of(2.0) * c * f.v[i]).sin();
            d_p_total[i] += d_s * cos * cos;
        }
        if let (Precoder::Mlp(model), Some(cache), Some(pg)) =
            (&system.precoder, f.prec_cache.as_ref(), grads.precoder.as_mut())
        {
            model.backward(cache, &d_v, pg);
        }
    }

    let d_theta = power_allocation_backward(&system.power_theta, link.p_tot_mw(), &d_p_total);
    for (g, d) in grads.theta.iter_mut().zip(d_theta) {
        *g += d;
    }
    Ok(loss)
}

/// Freshly initialized (untrained) system: seeded weight init, the
/// Prec1-equivalent pre-coder starting point, equal-split power
/// parameters and the frozen input standardization.
pub fn init_system<F: Real>(link: &LinkConfig<F>, cfg: &TrainConfig) -> Result<TrainedSystem<F>> {
    let n = link.n_modes;
    let m = link.mod_order;
    let mut init_rng = stream_rng(cfg.seed, "ae-init");

    let precoder = match cfg.precoder {
        PrecoderKind::Prec1 => Precoder::Scale,
        PrecoderKind::Prec1Lin => Precoder::ScaleIntensity,
        PrecoderKind::Prec2 => {
            // Affine map started at the Prec1 behavior: v = V_π·x̃.
            let mut model = MlpModel::zeros(vec![n, n], OutputHead::Linear)?;
            for i in 0..n {
                model.weights[0][i * n + i] = link.v_pi;
            }
            Precoder::Mlp(model)
        }
        PrecoderKind::Prec3 => {
            let mut model =
                MlpModel::he_uniform(prec3_dims(n), OutputHead::Linear, &mut init_rng)?;
            fit_output_layer_to_scale(&mut model, n, m, link.v_pi)?;
            Precoder::Mlp(model)
        }
    };

    let detector = match cfg.detector {
        DetectorKind::Det2 => DetectorBank::Joint(MlpModel::he_uniform(
            det2_dims(n, m),
            OutputHead::Softmax,
            &mut init_rng,
        )?),
        // Per-mode networks; also the training auxiliary for the
        // Gaussian receiver configuration.
        DetectorKind::Det1 | DetectorKind::GaussianAux => {
            let mut dets = Vec::with_capacity(n);
            for _ in 0..n {
                dets.push(MlpModel::he_uniform(
                    det1_dims(m),
                    OutputHead::Softmax,
                    &mut init_rng,
                )?);
            }
            DetectorBank::PerMode(dets)
        }
    };

    let mut system = TrainedSystem {
        link: link.clone(),
        cfg: cfg.clone(),
        precoder,
        detector,
        power_theta: vec![F::zero(); n],
        standardizer: Standardizer {
            mean: vec![F::zero(); n],
            scale: vec![F::one(); n],
        },
    };
    system.standardizer = estimate_standardizer(&system)?;
    Ok(system)
}

/// Start the nonlinear pre-coder at the trivial scaling (same principle
/// as the affine pre-coder's identity init): ridge least squares fits
/// the output layer over the random hidden features so the initial map
/// is `v ≈ V_π·x̃` on every symbol combination. Random output layers
/// collapse constellation points onto each other, which the training
/// rarely untangles.
fn fit_output_layer_to_scale<F: Real>(
    model: &mut MlpModel<F>,
    n_modes: usize,
    m: usize,
    v_pi: F,
) -> Result<()> {
    let hidden = model.layer_dims[model.n_layers() - 1 - 1];
    let n_aug = hidden + 1;
    let denom = F::of((m - 1) as f64);
    let n_inputs = m.pow(n_modes as u32).min(4096);

    let mut gram = vec![F::zero(); n_aug * n_aug];
    let mut rhs = vec![vec![F::zero(); n_aug]; n_modes];
    let mut cache = MlpCache::default();
    let mut idx = vec![0usize; n_modes];
    for _ in 0..n_inputs {
        let x_tilde: Vec<F> = idx.iter().map(|&xi| F::of(xi as f64) / denom).collect();
        model.forward_cached(&x_tilde, &mut cache)?;
        // Penultimate activations with a bias slot appended.
        let mut phi: Vec<F> = cache.inputs[model.n_layers() - 1].clone();
        phi.push(F::one());
        for a in 0..n_aug {
            for b in 0..n_aug {
                gram[a * n_aug + b] += phi[a] * phi[b];
            }
            for (d, r) in rhs.iter_mut().enumerate() {
                r[a] += phi[a] * v_pi * x_tilde[d];
            }
        }
        let mut d = n_modes;
        loop {
            if d == 0 {
                break;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < m {
                break;
            }
            idx[d] = 0;
        }
        if idx.iter().all(|&i| i == 0) {
            break;
        }
    }
    let ridge = F::of(1e-6) * gram[0].max(F::one());
    for a in 0..n_aug {
        gram[a * n_aug + a] += ridge;
    }
    let last = model.n_layers() - 1;
    for d in 0..n_modes {
        let sol = crate::linalg::solve(n_aug, gram.clone(), rhs[d].clone())
            .ok_or_else(|| Error::Config("pre-coder init fit is singular".into()))?;
        for hcol in 0..hidden {
            model.weights[last][d * hidden + hcol] = sol[hcol];
        }
        model.biases[last][d] = sol[hidden];
    }
    Ok(())
}

/// Number of warm-up samples behind the frozen detector-input
/// standardization.
const WARMUP_SAMPLES: usize = 4096;

fn estimate_standardizer<F: Real>(system: &TrainedSystem<F>) -> Result<Standardizer<F>> {
    let link = &system.link;
    let n = link.n_modes;
    let mut rng = stream_rng(system.cfg.seed, "ae-warmup");
    let powers = power_allocation_forward(&system.power_theta, link.p_tot_mw());
    let sigma = link.sigma_w();
    let c = F::FRAC_PI_2() / link.v_pi;
    let denom = F::of((link.mod_order - 1) as f64);

    let mut mean = vec![F::zero(); n];
    let mut m2 = vec![F::zero(); n];
    for count in 0..WARMUP_SAMPLES {
        let x: Vec<usize> = (0..n).map(|_| rng.gen_range(0..link.mod_order)).collect();
        let v = match &system.precoder {
            Precoder::Scale => x
                .iter()
                .map(|&xi| link.v_pi * F::of(xi as f64) / denom)
                .collect::<Vec<F>>(),
            Precoder::ScaleIntensity => x
                .iter()
                .map(|&xi| {
                    (F::of(2.0) * link.v_pi / F::PI()) * (F::of(xi as f64) / denom).sqrt().acos()
                })
                .collect::<Vec<F>>(),
            Precoder::Mlp(model) => {
                let x_tilde: Vec<F> = x.iter().map(|&xi| F::of(xi as f64) / denom).collect();
                model.forward(&x_tilde)?
            }
        };
        let s: Vec<F> = (0..n)
            .map(|i| {
                let cos = (c * v[i]).cos();
                powers[i] * cos * cos
            })
            .collect();
        let h = link.draw_channel(&mut rng);
        let y = h.mat_vec(&s);
        for i in 0..n {
            let yi = y[i] + sigma * F::std_normal(&mut rng);
            let delta = yi - mean[i];
            mean[i] += delta / F::of((count + 1) as f64);
            m2[i] += delta * (yi - mean[i]);
        }
    }
    let scale: Vec<F> = m2
        .iter()
        .map(|&v| (v / F::of(WARMUP_SAMPLES as f64)).sqrt().max(F::of(1e-9)))
        .collect();
    Ok(Standardizer { mean, scale })
}

/// Train the configured pre-coder/detector pair end to end and evaluate
/// it on a disjoint test stream.
pub fn train<F: Real>(link: &LinkConfig<F>, cfg: &TrainConfig) -> Result<TrainOutput<F>> {
    link.validate()?;
    cfg.validate()?;
    let mut system = init_system(link, cfg)?;
    let mut grads = GradBuffers::zeros_like(&system);

    let n_params = trainable_param_count(&system);
    let mut adam = AdamState::new(n_params, F::of(cfg.learning_rate));
    let mut rng = stream_rng(cfg.seed, "ae-train");
    let steps = (cfg.n_train_symbols / cfg.batch_size).max(1);

    for step in 0..steps {
        let batch = PreparedBatch::draw(link, cfg.batch_size, &mut rng);
        grads.clear();
        let loss = batch_loss_and_grads(&system, &batch, &mut grads)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                step,
                what: format!("batch loss = {loss}"),
            });
        }
        if !cfg.learn_power {
            grads.theta.iter_mut().for_each(|g| *g = F::zero());
        }
        apply_adam(&mut system, &grads, &mut adam)?;
    }

    let (gaussian, report) = match cfg.detector {
        DetectorKind::GaussianAux => {
            let params = fit_gaussian_receiver(&system, cfg.n_test_symbols.max(100 * link.mod_order))?;
            let report = evaluate_rate(&system, Receiver::Gaussian(&params), cfg.n_test_symbols)?;
            (Some(params), report)
        }
        _ => (None, evaluate_rate(&system, Receiver::Nn, cfg.n_test_symbols)?),
    };
    Ok(TrainOutput {
        system,
        gaussian,
        report,
    })
}

fn trainable_param_count<F: Real>(system: &TrainedSystem<F>) -> usize {
    let prec = match &system.precoder {
        Precoder::Scale | Precoder::ScaleIntensity => 0,
        Precoder::Mlp(m) => m.n_params(),
    };
    let det = match &system.detector {
        DetectorBank::PerMode(ds) => ds.iter().map(MlpModel::n_params).sum(),
        DetectorBank::Joint(d) => d.n_params(),
    };
    prec + det + system.power_theta.len()
}

fn apply_adam<F: Real>(
    system: &mut TrainedSystem<F>,
    grads: &GradBuffers<F>,
    adam: &mut AdamState<F>,
) -> Result<()> {
    let mut params: Vec<&mut [F]> = Vec::new();
    let mut gslices: Vec<&[F]> = Vec::new();
    if let (Precoder::Mlp(m), Some(g)) = (&mut system.precoder, grads.precoder.as_ref()) {
        params.extend(m.param_slices_mut());
        gslices.extend(MlpModel::grad_slices(g));
    }
    match &mut system.detector {
        DetectorBank::PerMode(ds) => {
            for (d, g) in ds.iter_mut().zip(&grads.detectors) {
                params.extend(d.param_slices_mut());
                gslices.extend(MlpModel::grad_slices(g));
            }
        }
        DetectorBank::Joint(d) => {
            params.extend(d.param_slices_mut());
            gslices.extend(MlpModel::grad_slices(&grads.detectors[0]));
        }
    }
    params.push(system.power_theta.as_mut_slice());
    gslices.push(grads.theta.as_slice());
    adam_step(adam, &mut params, &gslices)
}

/// Fit the Gaussian auxiliary receiver on fresh draws through the
/// trained transmitter: per-(mode, symbol) empirical means of the
/// photocurrent, a pooled conditional variance per mode (crosstalk and
/// drift land in it alongside the thermal noise), and empirical priors.
pub fn fit_gaussian_receiver<F: Real>(
    system: &TrainedSystem<F>,
    n_fit_symbols: usize,
) -> Result<GaussianReceiverParams<F>> {
    let link = &system.link;
    let m = link.mod_order;
    let n = link.n_modes;
    if n_fit_symbols < 100 * m {
        return Err(Error::Config(format!(
            "n_fit_symbols = {n_fit_symbols} below 100·M = {}",
            100 * m
        )));
    }
    let mut rng = stream_rng(system.cfg.seed, "ae-fit");
    let powers = power_allocation_forward(&system.power_theta, link.p_tot_mw());

    let mut count = vec![vec![0usize; m]; n];
    let mut mu = vec![vec![F::zero(); m]; n];
    let mut m2 = vec![vec![F::zero(); m]; n];
    for _ in 0..n_fit_symbols {
        let batch = PreparedBatch::draw(link, 1, &mut rng);
        let f = forward_sample(system, &powers, &batch.x, &batch.h[0], &batch.eps)?;
        // Undo the standardization: the receiver works on raw y.
        for i in 0..n {
            let y = f.y_hat[i] * system.standardizer.scale[i] + system.standardizer.mean[i];
            let sym = batch.x[i];
            count[i][sym] += 1;
            let delta = y - mu[i][sym];
            mu[i][sym] += delta / F::of(count[i][sym] as f64);
            m2[i][sym] += delta * (y - mu[i][sym]);
        }
    }

    let mut sigma_hat = vec![F::zero(); n];
    let mut prior = vec![vec![F::zero(); m]; n];
    for i in 0..n {
        let mut pooled = F::zero();
        for sym in 0..m {
            if count[i][sym] == 0 {
                return Err(Error::GaussianFit(format!(
                    "no samples for symbol {sym} on mode {i}"
                )));
            }
            pooled += m2[i][sym];
            prior[i][sym] = F::of(count[i][sym] as f64 / n_fit_symbols as f64);
        }
        sigma_hat[i] = pooled / F::of(n_fit_symbols as f64);
        if !(sigma_hat[i] > F::zero()) {
            return Err(Error::GaussianFit(format!(
                "degenerate variance on mode {i}"
            )));
        }
    }
    Ok(GaussianReceiverParams {
        mu,
        sigma_hat,
        prior,
    })
}

/// Log posterior of the Gaussian auxiliary receiver for one mode, nats.
///
/// The exponent divides by `σ̂` once; `σ̂` is therefore a variance
/// estimate, and this function is the single place that convention
/// lives.
pub fn gaussian_log_posterior<F: Real>(
    params: &GaussianReceiverParams<F>,
    mode: usize,
    y: F,
) -> Vec<F> {
    let mu = &params.mu[mode];
    let prior = &params.prior[mode];
    let sig = params.sigma_hat[mode];
    let logs: Vec<F> = mu
        .iter()
        .zip(prior)
        .map(|(&mui, &pi)| {
            let d = y - mui;
            pi.ln() - F::of(0.5) * d * d / sig
        })
        .collect();
    let z = log_sum_exp(&logs);
    logs.into_iter().map(|l| l - z).collect()
}

/// Which receiver evaluates the rate.
#[derive(Debug, Clone, Copy)]
pub enum Receiver<'a, F> {
    /// The trained detector network(s).
    Nn,
    /// The Gaussian auxiliary receiver.
    Gaussian(&'a GaussianReceiverParams<F>),
}

/// Test-set chunk size for parallel evaluation; fixed so results do not
/// depend on the worker count.
const EVAL_CHUNK: usize = 2048;

/// Achievable rate on a fresh test stream (disjoint seed stream from
/// training): `rate_i = log2 M − CE_i` per mode with `N·min_i rate_i`
/// reported, or `N·log2 M − CE` for joint detection. Rates clamp at 0.
pub fn evaluate_rate<F: Real>(
    system: &TrainedSystem<F>,
    receiver: Receiver<'_, F>,
    n_test_symbols: usize,
) -> Result<RateReport<F>> {
    if n_test_symbols == 0 {
        return Err(Error::Config("n_test_symbols must be >= 1".into()));
    }
    let link = &system.link;
    let n = link.n_modes;
    let m = link.mod_order;
    let powers = power_allocation_forward(&system.power_theta, link.p_tot_mw());

    // Pre-draw all randomness sequentially, then score chunks in
    // parallel with a fixed reduction order.
    let mut rng = stream_rng(system.cfg.seed, "ae-test");
    let batches: Vec<PreparedBatch<F>> = {
        let mut out = Vec::new();
        let mut left = n_test_symbols;
        while left > 0 {
            let take = left.min(EVAL_CHUNK);
            out.push(PreparedBatch::draw(link, take, &mut rng));
            left -= take;
        }
        out
    };

    let per_chunk: Vec<Result<(Vec<F>, F)>> = batches
        .par_iter()
        .map(|batch| {
            let mut ce = vec![F::zero(); n];
            let mut joint = F::zero();
            for idx in 0..batch.len() {
                let x = &batch.x[idx * n..(idx + 1) * n];
                let f = forward_sample(system, &powers, x, &batch.h[idx], &batch.eps[idx * n..(idx + 1) * n])?;
                match (&receiver, &system.detector) {
                    (Receiver::Nn, DetectorBank::PerMode(_)) => {
                        for i in 0..n {
                            ce[i] += cross_entropy_nats(&f.det_logits[i], x[i]);
                        }
                    }
                    (Receiver::Nn, DetectorBank::Joint(_)) => {
                        joint += loss_det2(&f.det_logits[0], joint_label(x, m))?;
                    }
                    (Receiver::Gaussian(params), _) => {
                        for i in 0..n {
                            let y = f.y_hat[i] * system.standardizer.scale[i]
                                + system.standardizer.mean[i];
                            let logq = gaussian_log_posterior(params, i, y);
                            ce[i] += -logq[x[i]];
                        }
                    }
                }
            }
            Ok((ce, joint))
        })
        .collect();

    let mut ce = vec![F::zero(); n];
    let mut joint = F::zero();
    for r in per_chunk {
        let (c, j) = r?;
        for (a, b) in ce.iter_mut().zip(c) {
            *a += b;
        }
        joint += j;
    }
    let total = F::of(n_test_symbols as f64);
    let log2m = F::of((m as f64).log2());
    let ln2 = F::LN_2();

    let (per_mode_rate, reported, label): (Vec<F>, F, String) = match (&receiver, &system.detector)
    {
        (Receiver::Nn, DetectorBank::Joint(_)) => {
            let ce_bits = joint / total / ln2;
            let rate = (F::of(n as f64) * log2m - ce_bits).max(F::zero());
            (Vec::new(), rate, "det2".to_string())
        }
        _ => {
            let rates: Vec<F> = ce
                .iter()
                .map(|&c| (log2m - c / total / ln2).max(F::zero()))
                .collect();
            let min = rates.iter().copied().fold(F::infinity(), F::min);
            let label = match receiver {
                Receiver::Nn => "det1".to_string(),
                Receiver::Gaussian(_) => "gaussian".to_string(),
            };
            (rates, (F::of(n as f64) * min).max(F::zero()), label)
        }
    };

    Ok(RateReport {
        per_mode_rate,
        reported_rate: reported,
        precoder: system.cfg.precoder,
        detector_label: label,
        mod_order: m,
        snr_db: link.snr_db,
        seed: system.cfg.seed,
        power_dbm: powers.iter().map(|&p| crate::num::mw_to_dbm(p)).collect(),
        n_test_symbols,
    })
}

/// Serialize a trained system as a line-oriented text checkpoint:
/// a header, the scalar blocks, then one `model` section per network
/// with its layer dims followed by row-major `weights`/`biases` lines
/// per layer. Floats use Rust's shortest round-trip formatting.
pub fn write_checkpoint<F: Real, W: Write>(
    system: &TrainedSystem<F>,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "fmflab-checkpoint v1")?;
    writeln!(out, "precoder {}", system.cfg.precoder.label())?;
    writeln!(out, "detector {}", system.cfg.detector.label())?;
    writeln!(out, "n_modes {}", system.link.n_modes)?;
    writeln!(out, "mod_order {}", system.link.mod_order)?;
    write_floats(&mut out, "power_theta", &system.power_theta)?;
    write_floats(&mut out, "standardize_mean", &system.standardizer.mean)?;
    write_floats(&mut out, "standardize_scale", &system.standardizer.scale)?;
    let write_model = |out: &mut W, name: &str, model: &MlpModel<F>| -> std::io::Result<()> {
        let dims: Vec<String> = model.layer_dims.iter().map(|d| d.to_string()).collect();
        let head = match model.head {
            OutputHead::Linear => "linear",
            OutputHead::Softmax => "softmax",
        };
        writeln!(out, "model {name} {head} {}", dims.join(" "))?;
        for (l, w) in model.weights.iter().enumerate() {
            write_floats(out, &format!("weights {l}"), w)?;
        }
        for (l, b) in model.biases.iter().enumerate() {
            write_floats(out, &format!("biases {l}"), b)?;
        }
        Ok(())
    };
    if let Precoder::Mlp(model) = &system.precoder {
        write_model(&mut out, "precoder", model)?;
    }
    match &system.detector {
        DetectorBank::PerMode(ds) => {
            for (i, d) in ds.iter().enumerate() {
                write_model(&mut out, &format!("det{i}"), d)?;
            }
        }
        DetectorBank::Joint(d) => write_model(&mut out, "det_joint", d)?,
    }
    writeln!(out, "end")
}

fn write_floats<F: Real, W: Write>(out: &mut W, tag: &str, vals: &[F]) -> std::io::Result<()> {
    let rendered: Vec<String> = vals.iter().map(|v| format!("{:?}", v.to_f64_lossy())).collect();
    writeln!(out, "{tag} {}", rendered.join(" "))
}

/// Parsed checkpoint contents; model sections in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointData<F> {
    pub precoder: String,
    pub detector: String,
    pub n_modes: usize,
    pub mod_order: usize,
    pub power_theta: Vec<F>,
    pub standardize_mean: Vec<F>,
    pub standardize_scale: Vec<F>,
    pub models: Vec<(String, MlpModel<F>)>,
}

pub fn read_checkpoint<F: Real, R: BufRead>(reader: R) -> Result<CheckpointData<F>> {
    let mut lines = reader.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Format("unexpected end of checkpoint".into()))?
            .map_err(|e| Error::Format(e.to_string()))
    };
    let header = next()?;
    if header != "fmflab-checkpoint v1" {
        return Err(Error::Format(format!("bad header: {header}")));
    }
    let field = |line: &str, tag: &str| -> Result<String> {
        line.strip_prefix(tag)
            .and_then(|r| r.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| Error::Format(format!("expected `{tag}`, got `{line}`")))
    };
    let precoder = field(&next()?, "precoder")?;
    let detector = field(&next()?, "detector")?;
    let n_modes: usize = field(&next()?, "n_modes")?
        .parse()
        .map_err(|_| Error::Format("bad n_modes".into()))?;
    let mod_order: usize = field(&next()?, "mod_order")?
        .parse()
        .map_err(|_| Error::Format("bad mod_order".into()))?;
    let power_theta = parse_floats::<F>(&field(&next()?, "power_theta")?)?;
    let standardize_mean = parse_floats::<F>(&field(&next()?, "standardize_mean")?)?;
    let standardize_scale = parse_floats::<F>(&field(&next()?, "standardize_scale")?)?;

    let mut models = Vec::new();
    loop {
        let line = next()?;
        if line == "end" {
            break;
        }
        let rest = field(&line, "model")?;
        let mut parts = rest.split_whitespace();
        let name = parts
            .next()
            .ok_or_else(|| Error::Format("model line missing name".into()))?
            .to_string();
        let head = match parts.next() {
            Some("linear") => OutputHead::Linear,
            Some("softmax") => OutputHead::Softmax,
            other => return Err(Error::Format(format!("bad head {other:?}"))),
        };
        let dims: Vec<usize> = parts
            .map(|p| p.parse().map_err(|_| Error::Format("bad dim".into())))
            .collect::<Result<_>>()?;
        let mut model = MlpModel::<F>::zeros(dims, head)?;
        for l in 0..model.n_layers() {
            let w = parse_floats::<F>(&field(&next()?, &format!("weights {l}"))?)?;
            if w.len() != model.weights[l].len() {
                return Err(Error::Format(format!("weights {l} length mismatch")));
            }
            model.weights[l] = w;
        }
        for l in 0..model.n_layers() {
            let b = parse_floats::<F>(&field(&next()?, &format!("biases {l}"))?)?;
            if b.len() != model.biases[l].len() {
                return Err(Error::Format(format!("biases {l} length mismatch")));
            }
            model.biases[l] = b;
        }
        models.push((name, model));
    }
    Ok(CheckpointData {
        precoder,
        detector,
        n_modes,
        mod_order,
        power_theta,
        standardize_mean,
        standardize_scale,
        models,
    })
}

fn parse_floats<F: Real>(s: &str) -> Result<Vec<F>> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map(F::of)
                .map_err(|_| Error::Format(format!("bad float `{t}`")))
        })
        .collect()
}

/// Deterministic RNG for auxiliary AE streams.
pub fn ae_stream(seed: u64, tag: &str) -> ChaCha12Rng {
    stream_rng(seed, tag)
}
