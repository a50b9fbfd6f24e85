//! Constructive capacity lower bounds via Blahut-Arimoto.
//!
//! The input distribution is a set of mass points on the MZM-constrained
//! intensity hypercube `[0,P_1]×…×[0,P_N]`, initialized on the image of a
//! uniform voltage grid. Only the weights move: the iteration
//! `a_k ← a_k·exp(D̄_k)/Σ_j a_j·exp(D̄_j)` is the classical unconstrained
//! update (the power constraint is enforced by the modulator transfer
//! function and the initial point placement), with `D̄_k` averaged over a
//! fixed seeded ensemble of channel realizations. Weights are free to
//! decay to exact zero; no flooring is applied, so the support set can
//! shrink.
//!
//! The ergodic mutual information `Σ_k a_k·D̄_k` is nondecreasing across
//! iterations and, at convergence, estimates the constrained capacity for
//! the given power allocation.

pub mod engine;
pub mod quadrature;

use std::io::Write;

use crate::bounds::{allocation_grid, PowerAllocation};
use crate::channel::{draw_ensemble, mzm_modulate, LinkConfig, TransferMatrix};
use crate::error::{Error, Result};
use crate::num::{log_sum_exp, Real};

pub use quadrature::{default_scheme, QuadratureScheme, DEFAULT_NODES, DEFAULT_TRUNC_SIGMAS};

/// Default absolute MI-gain convergence threshold in bits.
pub const DEFAULT_TOL_BITS: f64 = 1e-6;
/// Default iteration cap.
pub const DEFAULT_MAX_ITER: usize = 5000;
/// Channel draws used while iterating (direction is robust to ensemble
/// noise; the reported number is not, hence the larger evaluation set).
pub const DEFAULT_ITER_DRAWS: usize = 32;
/// Channel draws used for the reported MI.
pub const DEFAULT_EVAL_DRAWS: usize = 200;
/// Mass points above this are refused by [`init_uniform_grid`].
pub const DEFAULT_SUPPORT_CAP: usize = 16384;

/// Mass points on the intensity hypercube with simplex weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution<F> {
    points: Vec<F>,
    weights: Vec<F>,
    n_dims: usize,
}

impl<F: Real> DiscreteDistribution<F> {
    /// Simplex tolerance on the weight sum.
    pub const SIMPLEX_TOL: f64 = 1e-12;

    /// `points` is row-major `K×n_dims`.
    pub fn new(points: Vec<F>, weights: Vec<F>, n_dims: usize) -> Result<Self> {
        if n_dims == 0 || points.len() != weights.len() * n_dims {
            return Err(Error::DimMismatch {
                expected: weights.len() * n_dims,
                got: points.len(),
            });
        }
        for &w in &weights {
            if !(w >= F::zero()) {
                return Err(Error::Domain(format!("weight {w} must be >= 0")));
            }
        }
        let sum: F = weights.iter().copied().sum();
        if (sum - F::one()).abs() > F::of(Self::SIMPLEX_TOL) {
            return Err(Error::Domain(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self {
            points,
            weights,
            n_dims,
        })
    }

    pub fn n_points(&self) -> usize {
        self.weights.len()
    }

    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    pub fn point(&self, k: usize) -> &[F] {
        &self.points[k * self.n_dims..(k + 1) * self.n_dims]
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    /// Number of points carrying nonzero weight.
    pub fn support_size(&self) -> usize {
        self.weights.iter().filter(|&&w| w > F::zero()).count()
    }

    /// Entropy of the weights in bits (an upper bound on the MI).
    pub fn weight_entropy_bits(&self) -> F {
        -self
            .weights
            .iter()
            .filter(|&&w| w > F::zero())
            .map(|&w| w * w.log2())
            .sum::<F>()
    }
}

/// Per-iteration state and outcome of a Blahut-Arimoto run.
#[derive(Debug, Clone)]
pub struct BaaResult<F> {
    pub distribution: DiscreteDistribution<F>,
    /// Ergodic MI in bits at each iteration (entry 0 is the uniform
    /// initialization, i.e. the equidistant-PAM baseline), evaluated on
    /// the iteration ensemble.
    pub mi_trace: Vec<F>,
    pub alloc: PowerAllocation<F>,
    pub converged: bool,
    /// Final MI re-evaluated on the (larger) evaluation ensemble.
    pub reported_mi_bits: F,
}

/// Tuning knobs for [`baa_capacity`] / [`baa_power_search`].
#[derive(Debug, Clone)]
pub struct BaaParams<F> {
    pub m_per_dim: usize,
    pub tol_bits: F,
    pub max_iter: usize,
    pub quad: QuadratureScheme<F>,
    pub n_iter_draws: usize,
    pub n_eval_draws: usize,
    pub seed: u64,
}

impl<F: Real> BaaParams<F> {
    pub fn new(m_per_dim: usize, seed: u64) -> Self {
        Self {
            m_per_dim,
            tol_bits: F::of(DEFAULT_TOL_BITS),
            max_iter: DEFAULT_MAX_ITER,
            quad: default_scheme(),
            n_iter_draws: DEFAULT_ITER_DRAWS,
            n_eval_draws: DEFAULT_EVAL_DRAWS,
            seed,
        }
    }
}

/// Per-dimension intensity levels of the uniform-voltage grid: mode `i`
/// maps the equidistant drive levels `{0, V_π/(M−1), …, V_π}` through the
/// modulator at power `P_i`.
pub fn grid_axes<F: Real>(
    m_per_dim: usize,
    alloc: &PowerAllocation<F>,
    v_pi: F,
) -> Result<Vec<Vec<F>>> {
    if m_per_dim < 2 {
        return Err(Error::Config(format!("m_per_dim = {m_per_dim} must be >= 2")));
    }
    let step = v_pi / F::of((m_per_dim - 1) as f64);
    alloc
        .powers()
        .iter()
        .map(|&p| {
            let v: Vec<F> = (0..m_per_dim).map(|a| step * F::of(a as f64)).collect();
            mzm_modulate(&v, &vec![p; m_per_dim], v_pi)
        })
        .collect()
}

/// Uniformly weighted grid distribution with `K = M^N` mass points.
pub fn init_uniform_grid<F: Real>(
    m_per_dim: usize,
    alloc: &PowerAllocation<F>,
    v_pi: F,
) -> Result<DiscreteDistribution<F>> {
    init_uniform_grid_with_cap(m_per_dim, alloc, v_pi, DEFAULT_SUPPORT_CAP)
}

pub fn init_uniform_grid_with_cap<F: Real>(
    m_per_dim: usize,
    alloc: &PowerAllocation<F>,
    v_pi: F,
    cap: usize,
) -> Result<DiscreteDistribution<F>> {
    let n = alloc.n_modes();
    let k_total = m_per_dim
        .checked_pow(n as u32)
        .filter(|&k| k <= cap)
        .ok_or(Error::SizeCap {
            requested: m_per_dim.pow(n as u32),
            cap,
        })?;
    let axes = grid_axes(m_per_dim, alloc, v_pi)?;
    let mut points = Vec::with_capacity(k_total * n);
    let mut idx = vec![0usize; n];
    loop {
        for d in 0..n {
            points.push(axes[d][idx[d]]);
        }
        // Row-major advance, last dimension fastest.
        let mut d = n;
        loop {
            if d == 0 {
                let w = F::one() / F::of(k_total as f64);
                return DiscreteDistribution::new(points, vec![w; k_total], n);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < m_per_dim {
                break;
            }
            idx[d] = 0;
        }
        if idx.iter().all(|&i| i == 0) {
            unreachable!("loop exits via the dimension carry");
        }
    }
}

/// `D_k(H)` in nats for mass point `k`: the expected log-ratio between the
/// conditional output density at `s_k` and the mixture, under the
/// quadrature scheme.
pub fn kl_divergence_term<F: Real>(
    k: usize,
    dist: &DiscreteDistribution<F>,
    h: &TransferMatrix<F>,
    sigma_w: F,
    quad: &QuadratureScheme<F>,
) -> Result<F> {
    if k >= dist.n_points() {
        return Err(Error::Domain(format!(
            "point index {k} out of range 0..{}",
            dist.n_points()
        )));
    }
    check_channel(dist, h, sigma_w)?;
    Ok(engine::kl_direct_one_channel(dist, h, sigma_w, quad, true)[k])
}

/// One Blahut-Arimoto weight update over the fading ensemble; points are
/// unchanged and weights may decay to exact zero.
pub fn baa_iterate<F: Real>(
    dist: &DiscreteDistribution<F>,
    h_samples: &[TransferMatrix<F>],
    sigma_w: F,
    quad: &QuadratureScheme<F>,
) -> Result<DiscreteDistribution<F>> {
    ensemble_checks(dist, h_samples, sigma_w)?;
    let dbar = engine::mean_kl_direct(dist, h_samples, sigma_w, quad, false);
    let mut weights = dist.weights().to_vec();
    update_weights(&mut weights, &dbar);
    DiscreteDistribution::new(dist.points.clone(), weights, dist.n_dims)
}

/// Ergodic MI estimate `E_H[I(Y;S|H)] = Σ_k a_k·D̄_k` in bits.
pub fn ergodic_mi<F: Real>(
    dist: &DiscreteDistribution<F>,
    h_samples: &[TransferMatrix<F>],
    sigma_w: F,
    quad: &QuadratureScheme<F>,
) -> Result<F> {
    ensemble_checks(dist, h_samples, sigma_w)?;
    let dbar = engine::mean_kl_direct(dist, h_samples, sigma_w, quad, false);
    Ok(mi_bits(dist.weights(), &dbar))
}

fn ensemble_checks<F: Real>(
    dist: &DiscreteDistribution<F>,
    h_samples: &[TransferMatrix<F>],
    sigma_w: F,
) -> Result<()> {
    if h_samples.is_empty() {
        return Err(Error::Config("empty channel ensemble".into()));
    }
    for h in h_samples {
        check_channel(dist, h, sigma_w)?;
    }
    Ok(())
}

fn check_channel<F: Real>(
    dist: &DiscreteDistribution<F>,
    h: &TransferMatrix<F>,
    sigma_w: F,
) -> Result<()> {
    if h.n() != dist.n_dims() {
        return Err(Error::DimMismatch {
            expected: dist.n_dims(),
            got: h.n(),
        });
    }
    if !(sigma_w > F::zero()) {
        return Err(Error::Config(format!("sigma_w = {sigma_w} must be > 0")));
    }
    Ok(())
}

fn mi_bits<F: Real>(weights: &[F], dbar: &[F]) -> F {
    let nats: F = weights
        .iter()
        .zip(dbar)
        .filter(|(&w, _)| w > F::zero())
        .map(|(&w, &d)| w * d)
        .sum();
    (nats / F::LN_2()).max(F::zero())
}

fn update_weights<F: Real>(weights: &mut [F], dbar: &[F]) {
    let logits: Vec<F> = weights
        .iter()
        .zip(dbar)
        .map(|(&w, &d)| if w > F::zero() { w.ln() + d } else { F::neg_infinity() })
        .collect();
    let z = log_sum_exp(&logits);
    for (w, l) in weights.iter_mut().zip(&logits) {
        *w = (*l - z).exp();
    }
}

enum RunEngine<F: Real> {
    Sep2(engine::Sep2Engine<F>),
    Direct(DiscreteDistribution<F>, Vec<TransferMatrix<F>>),
}

impl<F: Real> RunEngine<F> {
    fn build(
        axes: &[Vec<F>],
        dist: &DiscreteDistribution<F>,
        h_samples: &[TransferMatrix<F>],
        sigma_w: F,
        quad: &QuadratureScheme<F>,
    ) -> Self {
        if axes.len() == 2 {
            let pair = [axes[0].clone(), axes[1].clone()];
            RunEngine::Sep2(engine::Sep2Engine::build(&pair, h_samples, sigma_w, quad))
        } else {
            RunEngine::Direct(dist.clone(), h_samples.to_vec())
        }
    }

    fn mean_kl(&self, weights: &[F], sigma_w: F, quad: &QuadratureScheme<F>) -> Vec<F> {
        match self {
            RunEngine::Sep2(e) => e.mean_kl(weights, quad),
            RunEngine::Direct(dist, hs) => {
                let d = DiscreteDistribution {
                    points: dist.points.clone(),
                    weights: weights.to_vec(),
                    n_dims: dist.n_dims,
                };
                engine::mean_kl_direct(&d, hs, sigma_w, quad, false)
            }
        }
    }
}

struct RunOutcome<F> {
    weights: Vec<F>,
    mi_trace: Vec<F>,
    converged: bool,
}

fn run_iterations<F: Real>(
    axes: &[Vec<F>],
    dist0: &DiscreteDistribution<F>,
    h_iter: &[TransferMatrix<F>],
    sigma_w: F,
    params: &BaaParams<F>,
) -> RunOutcome<F> {
    let eng = RunEngine::build(axes, dist0, h_iter, sigma_w, &params.quad);
    let mut weights = dist0.weights().to_vec();
    let mut mi_trace: Vec<F> = Vec::new();
    let mut converged = false;
    for iter in 0.. {
        let dbar = eng.mean_kl(&weights, sigma_w, &params.quad);
        let mi = mi_bits(&weights, &dbar);
        if let Some(&prev) = mi_trace.last() {
            if mi - prev < params.tol_bits {
                mi_trace.push(mi);
                converged = true;
                break;
            }
        }
        mi_trace.push(mi);
        if iter == params.max_iter {
            break;
        }
        update_weights(&mut weights, &dbar);
    }
    RunOutcome {
        weights,
        mi_trace,
        converged,
    }
}

/// MI of a grid distribution over an arbitrary ensemble, using the
/// separable evaluator when the grid is two-dimensional.
fn grid_mi<F: Real>(
    axes: &[Vec<F>],
    dist: &DiscreteDistribution<F>,
    h_samples: &[TransferMatrix<F>],
    sigma_w: F,
    quad: &QuadratureScheme<F>,
) -> F {
    let eng = RunEngine::build(axes, dist, h_samples, sigma_w, quad);
    let dbar = eng.mean_kl(dist.weights(), sigma_w, quad);
    mi_bits(dist.weights(), &dbar)
}

/// Run Blahut-Arimoto from the uniform grid initialization for one power
/// allocation. Iterates on the first `n_iter_draws` of the seeded
/// ensemble, reports the final MI on `n_eval_draws`.
pub fn baa_capacity<F: Real>(
    link: &LinkConfig<F>,
    alloc: &PowerAllocation<F>,
    params: &BaaParams<F>,
) -> Result<BaaResult<F>> {
    link.validate()?;
    validate_params(params)?;
    let dist0 = init_uniform_grid(params.m_per_dim, alloc, link.v_pi)?;
    let axes = grid_axes(params.m_per_dim, alloc, link.v_pi)?;
    let n_draws = params.n_eval_draws.max(params.n_iter_draws);
    let h_all = draw_ensemble(link, n_draws, params.seed);
    let sigma = link.sigma_w();

    let out = run_iterations(&axes, &dist0, &h_all[..params.n_iter_draws], sigma, params);
    let dist = DiscreteDistribution {
        points: dist0.points.clone(),
        weights: out.weights,
        n_dims: dist0.n_dims,
    };
    let reported = grid_mi(&axes, &dist, &h_all[..params.n_eval_draws], sigma, &params.quad);
    Ok(BaaResult {
        distribution: dist,
        mi_trace: out.mi_trace,
        alloc: alloc.clone(),
        converged: out.converged,
        reported_mi_bits: reported,
    })
}

/// Ergodic MI of the uniform (equidistant-PAM) initialization on the
/// evaluation ensemble — the shaping-gain baseline.
pub fn uniform_mi<F: Real>(
    link: &LinkConfig<F>,
    alloc: &PowerAllocation<F>,
    params: &BaaParams<F>,
) -> Result<F> {
    let mut p = params.clone();
    p.max_iter = 0;
    baa_capacity(link, alloc, &p).map(|r| r.reported_mi_bits)
}

/// Line/grid search of [`baa_capacity`] over the power allocation.
///
/// All candidate allocations share the same seeded iteration ensemble, so
/// the argmax is a paired comparison. To keep the scan affordable, each
/// allocation's iteration is warm-started from a blend of the previous
/// allocation's converged weights and the uniform grid (mass points
/// rescale with the allocation, so weight indices carry over); the
/// winning allocation is then rerun cold from the uniform initialization,
/// which is what the returned result reports.
pub fn baa_power_search<F: Real>(
    link: &LinkConfig<F>,
    grid_step_db: F,
    params: &BaaParams<F>,
) -> Result<BaaResult<F>> {
    link.validate()?;
    validate_params(params)?;
    let grid = allocation_grid(link.p_tot_mw(), link.n_modes, grid_step_db)?;
    let n_draws = params.n_eval_draws.max(params.n_iter_draws);
    let h_all = draw_ensemble(link, n_draws, params.seed);
    let sigma = link.sigma_w();

    let mut carry: Option<Vec<F>> = None;
    let mut best: Option<(F, PowerAllocation<F>)> = None;
    for alloc in grid {
        let mut dist0 = init_uniform_grid(params.m_per_dim, &alloc, link.v_pi)?;
        if let Some(prev) = &carry {
            // 0.9 converged + 0.1 uniform keeps the full support alive.
            let k = dist0.n_points();
            let uni = F::one() / F::of(k as f64);
            for (w, &p) in dist0.weights.iter_mut().zip(prev) {
                *w = F::of(0.9) * p + F::of(0.1) * uni;
            }
        }
        let axes = grid_axes(params.m_per_dim, &alloc, link.v_pi)?;
        let out = run_iterations(&axes, &dist0, &h_all[..params.n_iter_draws], sigma, params);
        let mi = *out.mi_trace.last().expect("trace has at least one entry");
        carry = Some(out.weights);
        let better = match &best {
            None => true,
            Some((b, _)) => mi > *b,
        };
        if better {
            best = Some((mi, alloc));
        }
    }
    let (_, alloc) = best.expect("allocation grid verified nonempty");
    let mut result = baa_capacity(link, &alloc, params)?;
    result.alloc = alloc;
    Ok(result)
}

fn validate_params<F: Real>(params: &BaaParams<F>) -> Result<()> {
    if !(params.tol_bits > F::zero()) {
        return Err(Error::Config("tol_bits must be > 0".into()));
    }
    if params.n_iter_draws == 0 || params.n_eval_draws == 0 {
        return Err(Error::Config("ensemble sizes must be >= 1".into()));
    }
    if params.n_iter_draws > params.n_eval_draws {
        return Err(Error::Config(
            "iteration ensemble larger than evaluation ensemble".into(),
        ));
    }
    Ok(())
}

/// Distribution snapshot as CSV (one row per mass point: coordinates,
/// then weight).
pub fn write_distribution_csv<F: Real, W: Write>(
    dist: &DiscreteDistribution<F>,
    mut out: W,
) -> std::io::Result<()> {
    let cols: Vec<String> = (1..=dist.n_dims()).map(|d| format!("s_{d}_mw")).collect();
    writeln!(out, "{},weight", cols.join(","))?;
    for k in 0..dist.n_points() {
        let coords: Vec<String> = dist
            .point(k)
            .iter()
            .map(|v| format!("{:.9}", v.to_f64_lossy()))
            .collect();
        writeln!(
            out,
            "{},{:.12}",
            coords.join(","),
            dist.weights()[k].to_f64_lossy()
        )?;
    }
    Ok(())
}

/// Per-iteration MI trace as CSV.
pub fn write_mi_trace_csv<F: Real, W: Write>(trace: &[F], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iteration,mi_bits")?;
    for (i, v) in trace.iter().enumerate() {
        writeln!(out, "{},{:.9}", i, v.to_f64_lossy())?;
    }
    Ok(())
}
