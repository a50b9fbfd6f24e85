//! Brute-force mutual-information oracles.
//!
//! Ground truth for the Blahut-Arimoto module, the QR bounds and the
//! detector rates on small instances. Deliberately shares no quadrature
//! or mixture-evaluation code with [`crate::baa`]: nodes come from a
//! Golub–Welsch eigensolve rather than Newton iteration, and densities
//! are evaluated densely in the log domain, so agreement between the two
//! modules is evidence rather than tautology.

use rand::Rng;

use crate::baa::DiscreteDistribution;
use crate::channel::TransferMatrix;
use crate::error::{Error, Result};
use crate::num::{log_sum_exp, Real};

/// How an estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiMethod {
    Quadrature,
    MonteCarlo,
}

/// MI value in bits, with a 95% confidence interval for the sampling
/// path (`error_bar` is zero for quadrature).
#[derive(Debug, Clone, Copy)]
pub struct MiEstimate<F> {
    pub value_bits: F,
    pub method: MiMethod,
    pub error_bar: F,
}

/// Cost guards: the oracle is for small instances only.
pub const MAX_ORACLE_DIMS: usize = 2;
pub const MAX_ORACLE_POINTS: usize = 4096;

/// Default quadrature density (per dimension); twice the iterative
/// module's default.
pub const DEFAULT_ORACLE_NODES: usize = 32;

/// `I(Y;S|H)` in bits by dense Gauss–Hermite quadrature.
pub fn mi_quadrature<F: Real>(
    dist: &DiscreteDistribution<F>,
    h: &TransferMatrix<F>,
    sigma_w: F,
    nodes: usize,
) -> Result<MiEstimate<F>> {
    guard(dist, h, sigma_w)?;
    let (x, w) = golub_welsch_hermite(nodes)?;
    let n_dims = dist.n_dims();
    let means = conditional_means(dist, h, sigma_w);
    let ln_w = log_weights(dist);

    let mut value = F::zero();
    for (k, &ak) in dist.weights().iter().enumerate() {
        if !(ak > F::zero()) {
            continue;
        }
        value += ak * point_divergence(&means, &ln_w, k, n_dims, &x, &w);
    }
    Ok(MiEstimate {
        value_bits: (value / F::LN_2()).max(F::zero()),
        method: MiMethod::Quadrature,
        error_bar: F::zero(),
    })
}

/// Per-mode MI `I(Y_i; X_i)` in bits, where `labels[k]` assigns each mass
/// point its symbol on mode `i` and the other modes are marginalized.
/// Used to validate independent-detection rates.
pub fn mi_marginal_quadrature<F: Real>(
    dist: &DiscreteDistribution<F>,
    labels: &[usize],
    mode: usize,
    h: &TransferMatrix<F>,
    sigma_w: F,
    nodes: usize,
) -> Result<MiEstimate<F>> {
    guard(dist, h, sigma_w)?;
    if labels.len() != dist.n_points() {
        return Err(Error::DimMismatch {
            expected: dist.n_points(),
            got: labels.len(),
        });
    }
    if mode >= dist.n_dims() {
        return Err(Error::Domain(format!("mode {mode} out of range")));
    }
    let (x, w) = golub_welsch_hermite(nodes)?;
    // Scalar conditional means (y_i / σ) per mass point.
    let mu: Vec<F> = (0..dist.n_points())
        .map(|k| h.mat_vec(dist.point(k))[mode] / sigma_w)
        .collect();
    let ln_w = log_weights(dist);
    let n_labels = labels.iter().copied().max().unwrap_or(0) + 1;
    let mut label_mass = vec![F::zero(); n_labels];
    for (k, &l) in labels.iter().enumerate() {
        label_mass[l] += dist.weights()[k];
    }

    let sqrt2 = F::of(std::f64::consts::SQRT_2);
    let mut value = F::zero();
    let mut num = Vec::new();
    let mut den = Vec::new();
    for (k, &ak) in dist.weights().iter().enumerate() {
        if !(ak > F::zero()) {
            continue;
        }
        let lbl = labels[k];
        let ln_mass = label_mass[lbl].ln();
        let mut dk = F::zero();
        for (q, &xq) in x.iter().enumerate() {
            let y = mu[k] + sqrt2 * xq;
            num.clear();
            den.clear();
            for (j, &lw) in ln_w.iter().enumerate() {
                if lw == F::neg_infinity() {
                    continue;
                }
                let d = y - mu[j];
                let e = lw - d * d / F::of(2.0);
                den.push(e);
                if labels[j] == lbl {
                    num.push(e);
                }
            }
            dk += w[q] * (log_sum_exp(&num) - ln_mass - log_sum_exp(&den));
        }
        value += ak * dk;
    }
    Ok(MiEstimate {
        value_bits: (value / F::LN_2()).max(F::zero()),
        method: MiMethod::Quadrature,
        error_bar: F::zero(),
    })
}

/// `E_H[I(Y;S|H)]` in bits by sampling `(k, H, w)` triples.
pub fn mi_monte_carlo<F, R, S>(
    dist: &DiscreteDistribution<F>,
    mut h_sampler: S,
    sigma_w: F,
    n_samples: usize,
    rng: &mut R,
) -> Result<MiEstimate<F>>
where
    F: Real,
    R: Rng + ?Sized,
    S: FnMut(&mut R) -> TransferMatrix<F>,
{
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be >= 1".into()));
    }
    if !(sigma_w > F::zero()) {
        return Err(Error::Config(format!("sigma_w = {sigma_w} must be > 0")));
    }
    let n_dims = dist.n_dims();
    let ln_w = log_weights(dist);
    // Inverse-CDF sampling of the mass-point index.
    let mut cdf = Vec::with_capacity(dist.n_points());
    let mut acc = F::zero();
    for &w in dist.weights() {
        acc += w;
        cdf.push(acc);
    }

    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    let mut terms = Vec::with_capacity(dist.n_points());
    let mut y = vec![F::zero(); n_dims];
    for i in 0..n_samples {
        let u = F::unit_uniform(rng);
        let k = cdf.partition_point(|&c| c < u).min(dist.n_points() - 1);
        let h = h_sampler(rng);
        debug_assert_eq!(h.n(), n_dims);
        let t = h.mat_vec(dist.point(k));
        for (yd, td) in y.iter_mut().zip(&t) {
            *yd = *td + sigma_w * F::std_normal(rng);
        }
        terms.clear();
        let mut own = F::zero();
        for (j, &lw) in ln_w.iter().enumerate() {
            if lw == F::neg_infinity() {
                continue;
            }
            let tj = h.mat_vec(dist.point(j));
            let mut e = lw;
            for d in 0..n_dims {
                let diff = (y[d] - tj[d]) / sigma_w;
                e = e - diff * diff / F::of(2.0);
            }
            terms.push(e);
            if j == k {
                own = e - lw;
            }
        }
        let info = (own - log_sum_exp(&terms)).to_f64_lossy();
        // Welford running mean/variance.
        let delta = info - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (info - mean);
    }
    let ln2 = std::f64::consts::LN_2;
    let var = if n_samples > 1 {
        m2 / (n_samples - 1) as f64
    } else {
        0.0
    };
    let ci = 1.96 * (var / n_samples as f64).sqrt() / ln2;
    Ok(MiEstimate {
        value_bits: F::of(mean / ln2),
        method: MiMethod::MonteCarlo,
        error_bar: F::of(ci),
    })
}

/// Exact Bayes posterior over the mass points given an observation.
pub fn posterior_exact<F: Real>(
    dist: &DiscreteDistribution<F>,
    h: &TransferMatrix<F>,
    sigma_w: F,
    y: &[F],
) -> Result<Vec<F>> {
    guard(dist, h, sigma_w)?;
    if y.len() != dist.n_dims() {
        return Err(Error::DimMismatch {
            expected: dist.n_dims(),
            got: y.len(),
        });
    }
    let ln_w = log_weights(dist);
    let logs: Vec<F> = (0..dist.n_points())
        .map(|k| {
            if ln_w[k] == F::neg_infinity() {
                return F::neg_infinity();
            }
            let t = h.mat_vec(dist.point(k));
            let mut e = ln_w[k];
            for d in 0..dist.n_dims() {
                let diff = (y[d] - t[d]) / sigma_w;
                e = e - diff * diff / F::of(2.0);
            }
            e
        })
        .collect();
    let z = log_sum_exp(&logs);
    Ok(logs.into_iter().map(|l| (l - z).exp()).collect())
}

fn guard<F: Real>(
    dist: &DiscreteDistribution<F>,
    h: &TransferMatrix<F>,
    sigma_w: F,
) -> Result<()> {
    if dist.n_dims() > MAX_ORACLE_DIMS {
        return Err(Error::Config(format!(
            "oracle supports at most {MAX_ORACLE_DIMS} dimensions"
        )));
    }
    if dist.n_points() > MAX_ORACLE_POINTS {
        return Err(Error::SizeCap {
            requested: dist.n_points(),
            cap: MAX_ORACLE_POINTS,
        });
    }
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

fn conditional_means<F: Real>(
    dist: &DiscreteDistribution<F>,
    h: &TransferMatrix<F>,
    sigma_w: F,
) -> Vec<Vec<F>> {
    (0..dist.n_points())
        .map(|k| {
            h.mat_vec(dist.point(k))
                .into_iter()
                .map(|v| v / sigma_w)
                .collect()
        })
        .collect()
}

fn log_weights<F: Real>(dist: &DiscreteDistribution<F>) -> Vec<F> {
    dist.weights()
        .iter()
        .map(|&w| if w > F::zero() { w.ln() } else { F::neg_infinity() })
        .collect()
}

/// `D_k = E_{y~N(μ_k, I)}[ ln p(y|k) − ln p(y) ]` (per-σ coordinates).
fn point_divergence<F: Real>(
    means: &[Vec<F>],
    ln_w: &[F],
    k: usize,
    n_dims: usize,
    x: &[F],
    w: &[F],
) -> F {
    let sqrt2 = F::of(std::f64::consts::SQRT_2);
    let nodes = x.len();
    let mut total = F::zero();
    let mut multi = vec![0usize; n_dims];
    let mut terms = Vec::with_capacity(means.len());
    let mut y = vec![F::zero(); n_dims];
    loop {
        let mut qw = F::one();
        for (d, &m) in multi.iter().enumerate() {
            qw = qw * w[m];
            y[d] = means[k][d] + sqrt2 * x[m];
        }
        terms.clear();
        let mut own = F::zero();
        for (j, &lw) in ln_w.iter().enumerate() {
            if lw == F::neg_infinity() && j != k {
                continue;
            }
            let mut e = F::zero();
            for d in 0..n_dims {
                let diff = y[d] - means[j][d];
                e = e - diff * diff / F::of(2.0);
            }
            if j == k {
                own = e;
            }
            if lw > F::neg_infinity() {
                terms.push(e + lw);
            }
        }
        total += qw * (own - log_sum_exp(&terms));

        let mut d = n_dims;
        loop {
            if d == 0 {
                return total;
            }
            d -= 1;
            multi[d] += 1;
            if multi[d] < nodes {
                break;
            }
            multi[d] = 0;
        }
    }
}

/// Gauss–Hermite nodes and normalized weights by Golub–Welsch: the
/// eigenvalues of the Jacobi matrix with off-diagonals `√(k/2)` are the
/// nodes, the squared first eigenvector components the weights.
pub fn golub_welsch_hermite<F: Real>(n: usize) -> Result<(Vec<F>, Vec<F>)> {
    if n == 0 || n > 256 {
        return Err(Error::Config(format!("node count {n} outside 1..=256")));
    }
    let mut d = vec![0.0f64; n];
    let mut e: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    e.push(0.0);
    let mut z = vec![0.0f64; n];
    z[0] = 1.0;
    imtqlx(&mut d, &mut e, &mut z)?;
    // Weights are √π·z², normalized here to sum to one.
    let norm: f64 = z.iter().map(|v| v * v).sum();
    Ok((
        d.iter().map(|&v| F::of(v)).collect(),
        z.iter().map(|&v| F::of(v * v / norm)).collect(),
    ))
}

/// Implicit-shift QL sweep for a symmetric tridiagonal matrix, tracking
/// the first row of the eigenvector matrix (the classic IMTQLX routine).
fn imtqlx(d: &mut [f64], e: &mut [f64], z: &mut [f64]) -> Result<()> {
    let n = d.len();
    if n == 1 {
        return Ok(());
    }
    let prec = f64::EPSILON;
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iters = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                if e[m].abs() <= prec * (d[m].abs() + d[m + 1].abs()) {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iters += 1;
            if iters > 50 {
                return Err(Error::Config("quadrature eigensolve failed".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = (g * g + 1.0).sqrt();
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = (f * f + g * g).sqrt();
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    // Sort ascending, permuting z alongside.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("finite eigenvalues"));
    let ds: Vec<f64> = idx.iter().map(|&i| d[i]).collect();
    let zs: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
    d.copy_from_slice(&ds);
    z.copy_from_slice(&zs);
    Ok(())
}
