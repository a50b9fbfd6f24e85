//! Few-mode IM/DD MIMO channel model.
//!
//! A link is MZM modulators (one optical carrier per spatial mode), a mode
//! multiplexer, two splices, a demultiplexer and per-mode photodetection
//! with additive Gaussian noise. Mode crosstalk in the MUX/splice/DEMUX
//! components is polarization dependent and therefore drifts; each
//! component draw samples its crosstalk uniformly in dB around the
//! component's expected value. Losses are constant.
//!
//! All powers are linear mW internally; dB/dBm appear only at
//! configuration boundaries.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::num::{db_to_lin, dbm_to_mw, Real};
use crate::seed::stream_rng;

/// Stochastic description of one MUX/splice/DEMUX component.
///
/// `mean_xt_db[i]` is the expected crosstalk leaking *out of* mode `i`
/// into the other modes, in dB (negative). `xt_range_db` is the width of
/// the uniform drift window in dB. `loss_db[i]` is the constant insertion
/// loss of mode `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSpec<F> {
    pub mean_xt_db: Vec<F>,
    pub xt_range_db: F,
    pub loss_db: Vec<F>,
}

/// Default drift window width in dB.
pub const DEFAULT_XT_RANGE_DB: f64 = 6.0;

impl<F: Real> ComponentSpec<F> {
    pub fn new(mean_xt_db: Vec<F>, xt_range_db: F, loss_db: Vec<F>) -> Result<Self> {
        let spec = Self {
            mean_xt_db,
            xt_range_db,
            loss_db,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn n_modes(&self) -> usize {
        self.mean_xt_db.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean_xt_db.is_empty() || self.mean_xt_db.len() != self.loss_db.len() {
            return Err(Error::Config(format!(
                "component vectors disagree: {} crosstalk means vs {} losses",
                self.mean_xt_db.len(),
                self.loss_db.len()
            )));
        }
        for &m in &self.mean_xt_db {
            // -inf encodes "no crosstalk" and is allowed.
            if !(m < F::zero()) {
                return Err(Error::Config(format!("mean crosstalk {m} dB must be negative")));
            }
        }
        if !(self.xt_range_db >= F::zero()) {
            return Err(Error::Config(format!(
                "crosstalk range {} dB must be nonnegative",
                self.xt_range_db
            )));
        }
        for &l in &self.loss_db {
            if !(l >= F::zero()) || !l.is_finite() {
                return Err(Error::Config(format!("loss {l} dB must be finite and >= 0")));
            }
        }
        // The drift window must stay below 0 dB so linear crosstalk stays in [0, 1).
        for &m in &self.mean_xt_db {
            if m + self.xt_range_db / F::of(2.0) >= F::zero() {
                return Err(Error::Config(format!(
                    "crosstalk window around {m} dB reaches 0 dB"
                )));
            }
        }
        Ok(())
    }
}

/// Nonnegative N×N transfer matrix, row major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix<F> {
    n: usize,
    data: Vec<F>,
}

impl<F: Real> TransferMatrix<F> {
    pub fn from_rows(n: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            data: linalg::identity(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, row: usize, col: usize) -> F {
        self.data[row * self.n + col]
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    /// Sum of each column; for a component matrix this equals `1/α_i`.
    pub fn column_sums(&self) -> Vec<F> {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.entry(i, j)).sum())
            .collect()
    }

    pub fn mat_vec(&self, x: &[F]) -> Vec<F> {
        linalg::mat_vec(self.n, &self.data, x)
    }

    pub fn mat_mul(&self, rhs: &Self) -> Result<Self> {
        if self.n != rhs.n {
            return Err(Error::DimMismatch {
                expected: self.n,
                got: rhs.n,
            });
        }
        Ok(Self {
            n: self.n,
            data: linalg::mat_mul(self.n, &self.data, &rhs.data),
        })
    }
}

/// Per-mode additive Gaussian noise at the photodetector.
///
/// `sigma_w` is the standard deviation in mW; zero is allowed and makes
/// the channel deterministic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel<F> {
    pub sigma_w: F,
}

impl<F: Real> NoiseModel<F> {
    pub fn new(sigma_w: F) -> Result<Self> {
        if !(sigma_w >= F::zero()) || !sigma_w.is_finite() {
            return Err(Error::Config(format!("sigma_w = {sigma_w} must be finite and >= 0")));
        }
        Ok(Self { sigma_w })
    }
}

/// Everything needed to instantiate the link: mode count, modulation
/// order, modulator half-wave voltage, power budget, SNR and the three
/// component specs.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig<F> {
    pub n_modes: usize,
    pub mod_order: usize,
    pub v_pi: F,
    pub p_tot_dbm: F,
    pub snr_db: F,
    pub mux: ComponentSpec<F>,
    pub spl: ComponentSpec<F>,
    pub demux: ComponentSpec<F>,
    /// When set, the two splice matrices reuse a single draw (the literal
    /// "squared" reading); by default they drift independently.
    pub tied_splices: bool,
}

impl<F: Real> LinkConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.n_modes < 1 {
            return Err(Error::Config("n_modes must be >= 1".into()));
        }
        if self.mod_order < 2 {
            return Err(Error::Config("mod_order must be >= 2".into()));
        }
        if !(self.v_pi > F::zero()) {
            return Err(Error::Config(format!("v_pi = {} must be > 0", self.v_pi)));
        }
        if !self.p_tot_dbm.is_finite() || !self.snr_db.is_finite() {
            return Err(Error::Config("p_tot_dbm and snr_db must be finite".into()));
        }
        for (name, spec) in [("mux", &self.mux), ("spl", &self.spl), ("demux", &self.demux)] {
            spec.validate()?;
            if spec.n_modes() != self.n_modes {
                return Err(Error::Config(format!(
                    "{name} spec covers {} modes, link has {}",
                    spec.n_modes(),
                    self.n_modes
                )));
            }
        }
        if !(self.sigma_w() > F::zero()) {
            return Err(Error::Config("derived sigma_w must be > 0".into()));
        }
        Ok(())
    }

    /// Total optical power in mW.
    pub fn p_tot_mw(&self) -> F {
        dbm_to_mw(self.p_tot_dbm)
    }

    /// Noise standard deviation in mW implied by the configured SNR.
    pub fn sigma_w(&self) -> F {
        snr_to_sigma(self.snr_db, self.p_tot_dbm, self.n_modes)
    }

    pub fn noise_model(&self) -> NoiseModel<F> {
        NoiseModel {
            sigma_w: self.sigma_w(),
        }
    }

    /// One end-to-end channel realization (MUX, two splices, DEMUX).
    pub fn draw_channel<R: Rng + ?Sized>(&self, rng: &mut R) -> TransferMatrix<F> {
        let mux = draw_component_matrix(&self.mux, rng);
        let spl_a = draw_component_matrix(&self.spl, rng);
        let spl_b = if self.tied_splices {
            spl_a.clone()
        } else {
            draw_component_matrix(&self.spl, rng)
        };
        let demux = draw_component_matrix(&self.demux, rng);
        compose_channel(&mux, &spl_a, &spl_b, &demux)
            .expect("component draws share the link dimension")
    }

    /// Channel at the expected component parameters (zero drift).
    pub fn expected_channel(&self) -> TransferMatrix<F> {
        let mux = expected_component_matrix(&self.mux);
        let spl = expected_component_matrix(&self.spl);
        let demux = expected_component_matrix(&self.demux);
        compose_channel(&mux, &spl, &spl, &demux)
            .expect("component specs share the link dimension")
    }
}

/// Seeded ensemble of channel realizations. Bounds and Blahut-Arimoto
/// evaluations that are compared against each other must share one
/// ensemble so the comparison is paired.
pub fn draw_ensemble<F: Real>(link: &LinkConfig<F>, count: usize, seed: u64) -> Vec<TransferMatrix<F>> {
    let mut rng = stream_rng(seed, "channel-ensemble");
    (0..count).map(|_| link.draw_channel(&mut rng)).collect()
}

/// MZM intensity output `s_i = P_i · cos²((π/2)(v_i/V_π))` per mode.
///
/// The drive voltage is unrestricted; the cos² transfer keeps the output
/// inside `[0, P_i]` regardless.
pub fn mzm_modulate<F: Real>(v: &[F], powers: &[F], v_pi: F) -> Result<Vec<F>> {
    if v.len() != powers.len() {
        return Err(Error::DimMismatch {
            expected: powers.len(),
            got: v.len(),
        });
    }
    if !(v_pi > F::zero()) {
        return Err(Error::Config(format!("v_pi = {v_pi} must be > 0")));
    }
    for &p in powers {
        if !(p > F::zero()) {
            return Err(Error::Config(format!("carrier power {p} mW must be > 0")));
        }
    }
    Ok(v.iter()
        .zip(powers)
        .map(|(&vi, &pi)| {
            let c = (F::FRAC_PI_2() * vi / v_pi).cos();
            pi * c * c
        })
        .collect())
}

/// Inverse of [`mzm_modulate`] onto the principal branch `[0, V_π]`:
/// `v = (2V_π/π)·arccos(√(s/P))`.
pub fn mzm_invert<F: Real>(s: &[F], powers: &[F], v_pi: F) -> Result<Vec<F>> {
    if s.len() != powers.len() {
        return Err(Error::DimMismatch {
            expected: powers.len(),
            got: s.len(),
        });
    }
    s.iter()
        .zip(powers)
        .map(|(&si, &pi)| {
            if si < F::zero() || si > pi {
                return Err(Error::Domain(format!(
                    "intensity {si} mW outside [0, {pi}]"
                )));
            }
            Ok((F::of(2.0) * v_pi / F::PI()) * (si / pi).sqrt().acos())
        })
        .collect()
}

/// One random component matrix: each mode's crosstalk is drawn uniformly
/// in dB over `mean ± range/2`, converted to linear, and the column for
/// mode `i` gets `(1 − xt_i)/α_i` on the diagonal with `xt_i` split
/// evenly over the other modes (the 2×2 case is the familiar
/// `[(1−xt_1)/α_1, xt_2/α_2; xt_1/α_1, (1−xt_2)/α_2]`).
pub fn draw_component_matrix<F: Real, R: Rng + ?Sized>(
    spec: &ComponentSpec<F>,
    rng: &mut R,
) -> TransferMatrix<F> {
    let n = spec.n_modes();
    let mut data = vec![F::zero(); n * n];
    for col in 0..n {
        let u = F::unit_uniform(rng);
        let xt_db = spec.mean_xt_db[col] + spec.xt_range_db * (u - F::of(0.5));
        let xt = db_to_lin(xt_db);
        let alpha = db_to_lin(spec.loss_db[col]);
        fill_column(&mut data, n, col, xt, alpha);
    }
    TransferMatrix { n, data }
}

/// Component matrix at the expected crosstalk (no drift).
pub fn expected_component_matrix<F: Real>(spec: &ComponentSpec<F>) -> TransferMatrix<F> {
    let n = spec.n_modes();
    let mut data = vec![F::zero(); n * n];
    for col in 0..n {
        let xt = db_to_lin(spec.mean_xt_db[col]);
        let alpha = db_to_lin(spec.loss_db[col]);
        fill_column(&mut data, n, col, xt, alpha);
    }
    TransferMatrix { n, data }
}

fn fill_column<F: Real>(data: &mut [F], n: usize, col: usize, xt: F, alpha: F) {
    if n == 1 {
        // Single mode: crosstalk has nowhere to leak.
        data[0] = F::one() / alpha;
        return;
    }
    let off = xt / (F::of((n - 1) as f64) * alpha);
    for row in 0..n {
        data[row * n + col] = if row == col { (F::one() - xt) / alpha } else { off };
    }
}

/// End-to-end channel `H = H_DEMUX · H_SPL_b · H_SPL_a · H_MUX`.
pub fn compose_channel<F: Real>(
    mux: &TransferMatrix<F>,
    spl_a: &TransferMatrix<F>,
    spl_b: &TransferMatrix<F>,
    demux: &TransferMatrix<F>,
) -> Result<TransferMatrix<F>> {
    demux.mat_mul(spl_b)?.mat_mul(spl_a)?.mat_mul(mux)
}

/// Noise scale implied by `SNR = 10·log10(Σ_i P_i / (2N·σ_w))`.
pub fn snr_to_sigma<F: Real>(snr_db: F, p_tot_dbm: F, n_modes: usize) -> F {
    dbm_to_mw(p_tot_dbm) / (F::of(2.0 * n_modes as f64) * db_to_lin(snr_db))
}

/// Inverse of [`snr_to_sigma`].
pub fn sigma_to_snr<F: Real>(sigma_w: F, p_tot_dbm: F, n_modes: usize) -> F {
    crate::num::lin_to_db(dbm_to_mw(p_tot_dbm) / (F::of(2.0 * n_modes as f64) * sigma_w))
}

/// `y = H·s + w` with `w_i ~ N(0, σ_w²)` i.i.d.
pub fn apply_channel<F: Real, R: Rng + ?Sized>(
    s: &[F],
    h: &TransferMatrix<F>,
    noise: &NoiseModel<F>,
    rng: &mut R,
) -> Vec<F> {
    let mut y = h.mat_vec(s);
    if noise.sigma_w > F::zero() {
        for yi in &mut y {
            *yi += noise.sigma_w * F::std_normal(rng);
        }
    }
    y
}

/// Table I expected parameters of the reference 2-mode components
/// (MUX, splice, DEMUX) with the 6 dB drift window.
pub fn reference_link<F: Real>(mod_order: usize, snr_db: F) -> LinkConfig<F> {
    LinkConfig {
        n_modes: 2,
        mod_order,
        v_pi: F::one(),
        p_tot_dbm: F::of(3.0),
        snr_db,
        mux: ComponentSpec {
            mean_xt_db: vec![F::of(-18.0), F::of(-15.0)],
            xt_range_db: F::of(DEFAULT_XT_RANGE_DB),
            loss_db: vec![F::of(0.7), F::of(1.4)],
        },
        spl: ComponentSpec {
            mean_xt_db: vec![F::of(-25.0), F::of(-25.0)],
            xt_range_db: F::of(DEFAULT_XT_RANGE_DB),
            loss_db: vec![F::of(0.04), F::of(0.04)],
        },
        demux: ComponentSpec {
            mean_xt_db: vec![F::of(-11.0), F::of(-11.0)],
            xt_range_db: F::of(DEFAULT_XT_RANGE_DB),
            loss_db: vec![F::of(1.5), F::of(3.0)],
        },
        tied_splices: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream_rng;

    fn spec2(xt1: f64, xt2: f64, range: f64, l1: f64, l2: f64) -> ComponentSpec<f64> {
        ComponentSpec::new(vec![xt1, xt2], range, vec![l1, l2]).unwrap()
    }

    #[test]
    fn mzm_endpoints_and_quadrature() {
        assert_eq!(
            mzm_modulate(&[0.0f64, 0.0], &[1.0, 1.0], 1.0).unwrap(),
            vec![1.0, 1.0]
        );
        let s = mzm_modulate(&[1.0f64, 1.0], &[1.0, 1.0], 1.0).unwrap();
        assert!(s[0].abs() < 1e-30 && s[1].abs() < 1e-30);
        let s = mzm_modulate(&[0.5f64], &[2.0], 1.0).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mzm_rejects_bad_config() {
        assert!(matches!(
            mzm_modulate(&[0.0], &[0.0], 1.0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            mzm_modulate(&[0.0], &[1.0], 0.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn mzm_invert_endpoints() {
        assert_eq!(mzm_invert(&[1.0f64], &[1.0], 1.0).unwrap(), vec![0.0]);
        assert!((mzm_invert(&[0.0f64], &[1.0], 1.0).unwrap()[0] - 1.0).abs() < 1e-12);
        assert!((mzm_invert(&[0.5f64], &[1.0], 1.0).unwrap()[0] - 0.5).abs() < 1e-12);
        assert!(matches!(
            mzm_invert(&[1.5f64], &[1.0], 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            mzm_invert(&[-0.1f64], &[1.0], 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn mzm_round_trips() {
        let powers = [1.3, 0.4];
        for k in 0..=20 {
            let v = vec![k as f64 / 20.0, 1.0 - k as f64 / 20.0];
            let s = mzm_modulate(&v, &powers, 1.0).unwrap();
            let v2 = mzm_invert(&s, &powers, 1.0).unwrap();
            for (a, b) in v.iter().zip(&v2) {
                assert!((a - b).abs() < 1e-12);
            }
            let s2 = mzm_modulate(&v2, &powers, 1.0).unwrap();
            for (a, b) in s.iter().zip(&s2) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn no_crosstalk_no_loss_gives_identity() {
        let spec = spec2(f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0, 0.0, 0.0);
        let mut rng = stream_rng(1, "test");
        let m = draw_component_matrix(&spec, &mut rng);
        assert_eq!(m.as_slice(), TransferMatrix::<f64>::identity(2).as_slice());
    }

    #[test]
    fn table_one_mux_row_zero_drift() {
        // Hand arithmetic on the expected MUX parameters:
        // (1,1) = (1-10^-1.8)/10^0.07, (2,1) = 10^-1.8/10^0.07.
        let spec = spec2(-18.0, -15.0, 0.0, 0.7, 1.4);
        let mut rng = stream_rng(2, "test");
        let m = draw_component_matrix(&spec, &mut rng);
        let e11 = (1.0 - 10f64.powf(-1.8)) / 10f64.powf(0.07);
        let e21 = 10f64.powf(-1.8) / 10f64.powf(0.07);
        assert!((m.entry(0, 0) - e11).abs() < 1e-12);
        assert!((m.entry(1, 0) - e21).abs() < 1e-12);
        // Spec-sheet rounded values.
        assert!((m.entry(0, 0) - 0.8375).abs() < 5e-4);
        assert!((m.entry(1, 0) - 0.01349).abs() < 5e-6);
    }

    #[test]
    fn column_sums_equal_inverse_loss() {
        let spec = spec2(-18.0, -15.0, 6.0, 0.7, 1.4);
        let mut rng = stream_rng(3, "test");
        for _ in 0..100 {
            let m = draw_component_matrix(&spec, &mut rng);
            let sums = m.column_sums();
            assert!((sums[0] - 10f64.powf(-0.07)).abs() < 1e-12);
            assert!((sums[1] - 10f64.powf(-0.14)).abs() < 1e-12);
        }
    }

    #[test]
    fn compose_identity_and_scaling() {
        let id = TransferMatrix::<f64>::identity(2);
        let h = compose_channel(&id, &id, &id, &id).unwrap();
        assert_eq!(h.as_slice(), id.as_slice());

        let two = TransferMatrix::from_rows(2, vec![2.0, 0.0, 0.0, 2.0]).unwrap();
        let h = compose_channel(&two, &id, &id, &id).unwrap();
        assert_eq!(h.as_slice(), two.as_slice());
    }

    #[test]
    fn compose_matches_independent_product() {
        // Oracle: accumulate y = D(Sb(Sa(M x))) column by column, which
        // never forms a matrix product explicitly.
        let link = reference_link::<f64>(8, 15.0);
        let mux = expected_component_matrix(&link.mux);
        let spl = expected_component_matrix(&link.spl);
        let demux = expected_component_matrix(&link.demux);
        let h = compose_channel(&mux, &spl, &spl, &demux).unwrap();
        for col in 0..2 {
            let e: Vec<f64> = (0..2).map(|r| if r == col { 1.0 } else { 0.0 }).collect();
            let y = demux.mat_vec(&spl.mat_vec(&spl.mat_vec(&mux.mat_vec(&e))));
            for row in 0..2 {
                assert!((h.entry(row, col) - y[row]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn compose_rejects_dimension_mismatch() {
        let a = TransferMatrix::<f64>::identity(2);
        let b = TransferMatrix::<f64>::identity(3);
        assert!(matches!(
            compose_channel(&a, &b, &a, &a),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn snr_sigma_conversions() {
        // 4 mW total, 0 dB SNR, two modes -> sigma 1 mW.
        let p_tot_dbm = 10.0 * 4.0f64.log10();
        assert!((snr_to_sigma(0.0, p_tot_dbm, 2) - 1.0).abs() < 1e-12);
        // 3 dBm, 20 dB, two modes.
        let s = snr_to_sigma(20.0f64, 3.0, 2);
        assert!((s - 4.988e-3).abs() < 1e-6);
        // Round trip and the high-SNR limit.
        assert!((sigma_to_snr(s, 3.0, 2) - 20.0).abs() < 1e-12);
        assert!(snr_to_sigma(300.0, 3.0, 2) < 1e-28);
    }

    #[test]
    fn apply_channel_noiseless() {
        let mut rng = stream_rng(4, "test");
        let noise = NoiseModel { sigma_w: 0.0 };
        let h = TransferMatrix::<f64>::identity(2);
        assert_eq!(apply_channel(&[1.0, 0.0], &h, &noise, &mut rng), vec![1.0, 0.0]);
        let h = TransferMatrix::from_rows(2, vec![0.9, 0.1, 0.1, 0.9]).unwrap();
        let y = apply_channel(&[1.0, 1.0], &h, &noise, &mut rng);
        assert!((y[0] - 1.0).abs() < 1e-15 && (y[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn apply_channel_is_reproducible() {
        let h = TransferMatrix::<f64>::identity(2);
        let noise = NoiseModel { sigma_w: 0.3 };
        let mut r1 = stream_rng(5, "noise");
        let mut r2 = stream_rng(5, "noise");
        for _ in 0..100 {
            let y1 = apply_channel(&[0.5, 0.5], &h, &noise, &mut r1);
            let y2 = apply_channel(&[0.5, 0.5], &h, &noise, &mut r2);
            assert_eq!(y1, y2);
        }
    }

    #[test]
    fn expected_channel_is_deterministic() {
        let link = reference_link::<f64>(8, 20.0);
        assert_eq!(
            link.expected_channel().as_slice(),
            link.expected_channel().as_slice()
        );
        link.validate().unwrap();
        // Total power: 3 dBm in mW.
        assert!((link.p_tot_mw() - 1.9952623149688795).abs() < 1e-12);
    }

    #[test]
    fn tied_splices_reuses_one_draw() {
        let mut link = reference_link::<f64>(8, 20.0);
        link.tied_splices = true;
        // With zero drift the tied and untied channels coincide.
        link.mux.xt_range_db = 0.0;
        link.spl.xt_range_db = 0.0;
        link.demux.xt_range_db = 0.0;
        let mut rng = stream_rng(6, "test");
        let h_tied = link.draw_channel(&mut rng);
        let expect = link.expected_channel();
        for (a, b) in h_tied.as_slice().iter().zip(expect.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn component_validation_errors() {
        assert!(ComponentSpec::new(vec![-3.0f64], 0.0, vec![0.1, 0.2]).is_err());
        assert!(ComponentSpec::new(vec![0.5f64], 0.0, vec![0.1]).is_err());
        assert!(ComponentSpec::new(vec![-3.0f64], -1.0, vec![0.1]).is_err());
        assert!(ComponentSpec::new(vec![-3.0f64], 0.0, vec![-0.1]).is_err());
        // Window reaching 0 dB is rejected.
        assert!(ComponentSpec::new(vec![-2.0f64], 6.0, vec![0.0]).is_err());
    }
}
