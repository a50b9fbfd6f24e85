//! Cross-module invariants: channel statistics, factorization residuals,
//! Blahut-Arimoto structure, oracle agreement and achievable-rate
//! ordering.

use fmflab::ae::{self, evaluate_rate, fit_gaussian_receiver, DetectorKind, PrecoderKind, Receiver, TrainConfig};
use fmflab::baa::{self, default_scheme, BaaParams, DiscreteDistribution, QuadratureScheme};
use fmflab::bounds::{qr_decompose, ub_mimo, PowerAllocation};
use fmflab::channel::{
    self, apply_channel, draw_component_matrix, draw_ensemble, mzm_modulate, reference_link,
    ComponentSpec, LinkConfig, NoiseModel, TransferMatrix,
};
use fmflab::linalg;
use fmflab::mi;
use fmflab::seed::stream_rng;
use proptest::prelude::*;
use rand::Rng;

/// One-mode link for scalar-channel studies.
fn scalar_link(mod_order: usize, snr_db: f64) -> LinkConfig<f64> {
    LinkConfig {
        n_modes: 1,
        mod_order,
        v_pi: 1.0,
        p_tot_dbm: 3.0,
        snr_db,
        mux: ComponentSpec {
            mean_xt_db: vec![-18.0],
            xt_range_db: 0.0,
            loss_db: vec![0.7],
        },
        spl: ComponentSpec {
            mean_xt_db: vec![-25.0],
            xt_range_db: 0.0,
            loss_db: vec![0.04],
        },
        demux: ComponentSpec {
            mean_xt_db: vec![-11.0],
            xt_range_db: 0.0,
            loss_db: vec![1.5],
        },
        tied_splices: false,
    }
}

#[test]
fn drawn_channels_are_nonnegative_and_full_rank() {
    let link = reference_link::<f64>(8, 15.0);
    let mut rng = stream_rng(101, "props-channel");
    for _ in 0..10_000 {
        let h = link.draw_channel(&mut rng);
        assert!(h.as_slice().iter().all(|&v| v >= 0.0));
        qr_decompose(&h).expect("reference-scale channels are full rank");
    }
}

#[test]
fn crosstalk_draw_statistics_match_the_window() {
    let spec = ComponentSpec {
        mean_xt_db: vec![-18.0, -15.0],
        xt_range_db: 6.0,
        loss_db: vec![0.7, 1.4],
    };
    let alpha = [10f64.powf(0.07), 10f64.powf(0.14)];
    let mut rng = stream_rng(102, "props-xt");
    let n = 100_000;
    let mut sums = [0.0f64; 2];
    let mut mins = [f64::INFINITY; 2];
    let mut maxs = [f64::NEG_INFINITY; 2];
    for _ in 0..n {
        let m = draw_component_matrix(&spec, &mut rng);
        for col in 0..2 {
            let xt_lin = m.entry(1 - col, col) * alpha[col];
            let xt_db = 10.0 * xt_lin.log10();
            sums[col] += xt_db;
            mins[col] = mins[col].min(xt_db);
            maxs[col] = maxs[col].max(xt_db);
        }
    }
    for col in 0..2 {
        let mean = sums[col] / n as f64;
        let nominal = spec.mean_xt_db[col];
        assert!((mean - nominal).abs() < 0.05, "col {col}: mean {mean}");
        assert!(mins[col] >= nominal - 3.0 - 1e-9);
        assert!(maxs[col] <= nominal + 3.0 + 1e-9);
        // The window is actually explored.
        assert!(mins[col] < nominal - 2.8);
        assert!(maxs[col] > nominal + 2.8);
    }
}

#[test]
fn noise_sampling_matches_law_of_large_numbers() {
    let h = TransferMatrix::<f64>::identity(2);
    let noise = NoiseModel { sigma_w: 1.0 };
    let mut rng = stream_rng(103, "props-noise");
    let n = 1_000_000;
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..n {
        let y = apply_channel(&[0.0, 0.0], &h, &noise, &mut rng);
        sum += y[0];
        sum2 += y[0] * y[0];
    }
    let mean = sum / n as f64;
    let var = sum2 / n as f64 - mean * mean;
    assert!(mean.abs() < 4e-3, "mean {mean}");
    assert!((var - 1.0).abs() < 0.01, "var {var}");
}

#[test]
fn qr_residuals_over_random_ensembles() {
    let link = reference_link::<f64>(8, 15.0);
    let mut rng = stream_rng(104, "props-qr");
    for i in 0..10_000 {
        // Alternate drawn channels with unstructured random matrices.
        let h = if i % 2 == 0 {
            link.draw_channel(&mut rng)
        } else {
            let data: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
            TransferMatrix::from_rows(2, data).unwrap()
        };
        let f = match qr_decompose(&h) {
            Ok(f) => f,
            Err(_) => continue,
        };
        let prod = linalg::mat_mul(2, &f.q, &f.r);
        let qtq = linalg::mat_mul(2, &linalg::transpose(2, &f.q), &f.q);
        let id = linalg::identity::<f64>(2);
        for k in 0..4 {
            assert!((prod[k] - h.as_slice()[k]).abs() < 1e-10);
            assert!((qtq[k] - id[k]).abs() < 1e-10);
        }
    }
}

proptest! {
    #[test]
    fn mzm_output_is_always_amplitude_constrained(
        v in prop::collection::vec(-25.0f64..25.0, 2),
        p1 in 0.05f64..4.0,
        p2 in 0.05f64..4.0,
    ) {
        let s = mzm_modulate(&v, &[p1, p2], 1.0).unwrap();
        prop_assert!(s[0] >= 0.0 && s[0] <= p1);
        prop_assert!(s[1] >= 0.0 && s[1] <= p2);
    }

    #[test]
    fn mzm_round_trip_on_principal_branch(
        v in prop::collection::vec(0.0f64..=1.0, 2),
        p in 0.05f64..4.0,
    ) {
        let s = mzm_modulate(&v, &[p, p], 1.0).unwrap();
        let v2 = channel::mzm_invert(&s, &[p, p], 1.0).unwrap();
        for (a, b) in v.iter().zip(&v2) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn snr_sigma_round_trip(snr in -20.0f64..40.0, p in -10.0f64..10.0) {
        let sigma = channel::snr_to_sigma(snr, p, 2);
        let back = channel::sigma_to_snr(sigma, p, 2);
        prop_assert!((snr - back).abs() < 1e-10);
    }

    #[test]
    fn baa_iterate_preserves_the_simplex(
        raw in prop::collection::vec(0.01f64..1.0, 4),
        sigma in 0.05f64..0.5,
    ) {
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let dist = DiscreteDistribution::new(vec![0.0, 0.33, 0.7, 1.0], weights, 1).unwrap();
        let quad = default_scheme::<f64>();
        let h = TransferMatrix::identity(1);
        let next = baa::baa_iterate(&dist, &[h], sigma, &quad).unwrap();
        let sum: f64 = next.weights().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(next.weights().iter().all(|&w| w >= 0.0));
    }
}

#[test]
fn baa_matches_brute_force_on_three_points() {
    // Brute force over the weight simplex using the oracle confirms the
    // crowded interior point carries no mass at the optimum, and the
    // iteration reaches the same MI.
    let points = vec![0.0, 0.05, 1.0];
    let sigma = 0.2;
    let h = TransferMatrix::identity(1);
    let quad = default_scheme::<f64>();

    let mut best = (f64::MIN, 0.0, 0.0);
    let steps = 200;
    for i in 0..=steps {
        for j in 0..=(steps - i) {
            let w1 = i as f64 / steps as f64;
            let w2 = j as f64 / steps as f64;
            let w = vec![w1, w2, (1.0 - w1 - w2).max(0.0)];
            let dist = DiscreteDistribution::new(points.clone(), w, 1).unwrap();
            let v = mi::mi_quadrature(&dist, &h, sigma, 48).unwrap().value_bits;
            if v > best.0 {
                best = (v, w1, w2);
            }
        }
    }
    // From the uniform start the crowded point sheds weight (checked in
    // the unit tests); the simplex optimum keeps it well below 1/3.
    assert!(best.2 < 0.32, "brute-force optimal middle weight {}", best.2);

    let mut dist =
        DiscreteDistribution::new(points.clone(), vec![1.0 / 3.0; 3], 1).unwrap();
    for _ in 0..4000 {
        dist = baa::baa_iterate(&dist, std::slice::from_ref(&h), sigma, &quad).unwrap();
    }
    let mi_baa = baa::ergodic_mi(&dist, std::slice::from_ref(&h), sigma, &quad).unwrap();
    assert!(
        (mi_baa - best.0).abs() < 2e-3,
        "baa {mi_baa} vs brute force {}",
        best.0
    );
    assert!(
        (dist.weights()[1] - best.2).abs() < 0.02,
        "baa middle weight {} vs brute-force argmax {}",
        dist.weights()[1],
        best.2
    );
}

#[test]
fn baa_weights_can_decay_to_zero_without_flooring() {
    // Binary-optimal regime (A/σ ≈ 2.2): the interior point is strictly
    // suboptimal, so its weight must be free to fall indefinitely (no
    // renormalization floor).
    let points = vec![0.0, 0.2, 1.0];
    let sigma = 0.45;
    let h = TransferMatrix::identity(1);
    let quad = default_scheme::<f64>();
    let mut dist = DiscreteDistribution::new(points, vec![1.0 / 3.0; 3], 1).unwrap();
    for _ in 0..3000 {
        dist = baa::baa_iterate(&dist, std::slice::from_ref(&h), sigma, &quad).unwrap();
    }
    assert!(
        dist.weights()[1] < 1e-40,
        "dominated weight {} kept a floor",
        dist.weights()[1]
    );
    assert!(dist.support_size() >= 2);
}

#[test]
fn grid_refinement_does_not_lose_mi() {
    // Doubling the per-dimension grid size never loses MI (beyond
    // tolerance): scalar case across the full ladder, two-mode case for
    // the small sizes.
    let mut prev = f64::MIN;
    for m in [2usize, 4, 8, 16, 32] {
        let link = scalar_link(m, 12.0);
        let alloc = PowerAllocation::new(vec![link.p_tot_mw()], link.p_tot_mw()).unwrap();
        let mut params = BaaParams::new(m, 7);
        params.n_iter_draws = 1;
        params.n_eval_draws = 1;
        let r = baa::baa_capacity(&link, &alloc, &params).unwrap();
        assert!(
            r.reported_mi_bits >= prev - 1e-6,
            "m {m}: {} < {prev}",
            r.reported_mi_bits
        );
        prev = r.reported_mi_bits;
    }

    let mut prev = f64::MIN;
    for m in [2usize, 4, 8, 16] {
        let link = reference_link::<f64>(m, 12.0);
        let alloc = PowerAllocation::equal_split(link.p_tot_mw(), 2);
        let mut params = BaaParams::new(m, 7);
        params.n_iter_draws = 16;
        params.n_eval_draws = 16;
        let r = baa::baa_capacity(&link, &alloc, &params).unwrap();
        assert!(
            r.reported_mi_bits >= prev - 1e-6,
            "m {m}: {} < {prev}",
            r.reported_mi_bits
        );
        prev = r.reported_mi_bits;
    }
}

#[test]
fn quadrature_consistency_under_node_doubling() {
    let link = reference_link::<f64>(8, 18.0);
    let alloc = PowerAllocation::equal_split(link.p_tot_mw(), 2);
    let h = draw_ensemble(&link, 8, 9);
    let dist = baa::init_uniform_grid(8, &alloc, link.v_pi).unwrap();
    let sigma = link.sigma_w();
    let coarse = baa::ergodic_mi(&dist, &h, sigma, &default_scheme()).unwrap();
    let fine_quad = QuadratureScheme::gauss_hermite(32).unwrap();
    let fine = baa::ergodic_mi(&dist, &h, sigma, &fine_quad).unwrap();
    assert!(
        (coarse - fine).abs() < 1e-4,
        "16 nodes {coarse} vs 32 nodes {fine}"
    );
}

#[test]
fn scalar_bound_is_tight_against_dense_grid_iteration() {
    // Dense-grid scalar capacity estimate at A/σ = 100 brackets UB1
    // together with the analytic asymptote.
    let quad = default_scheme::<f64>();
    let sigma = 0.01;
    let m = 64;
    let points: Vec<f64> = (0..m).map(|k| k as f64 / (m - 1) as f64).collect();
    let h = TransferMatrix::identity(1);
    let mut dist = DiscreteDistribution::new(points, vec![1.0 / m as f64; m], 1).unwrap();
    let mut prev = 0.0;
    for _ in 0..4000 {
        dist = baa::baa_iterate(&dist, std::slice::from_ref(&h), sigma, &quad).unwrap();
        let cur = baa::ergodic_mi(&dist, std::slice::from_ref(&h), sigma, &quad).unwrap();
        if (cur - prev).abs() < 1e-7 {
            break;
        }
        prev = cur;
    }
    let cap = baa::ergodic_mi(&dist, std::slice::from_ref(&h), sigma, &quad).unwrap();
    let ub1 = fmflab::bounds::ub_scalar(fmflab::bounds::UbKind::Ub1, 1.0, sigma);
    let asym = 100.0f64.log2() - 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).log2();
    assert!(cap <= ub1 + 1e-6, "dense-grid capacity {cap} above UB1 {ub1}");
    assert!(ub1 - cap < 0.15, "UB1 slack {:.4} vs dense grid", ub1 - cap);
    assert!((cap - asym).abs() < 0.15, "capacity {cap} far from asymptote {asym}");
}

#[test]
fn sandwich_holds_on_a_desk_instance() {
    let link = reference_link::<f64>(8, 15.0);
    let alloc = PowerAllocation::equal_split(link.p_tot_mw(), 2);
    let h = draw_ensemble(&link, 200, 11);
    let mut params = BaaParams::new(8, 11);
    params.tol_bits = 1e-5;
    let baa_mi = baa::baa_capacity(&link, &alloc, &params)
        .unwrap()
        .reported_mi_bits;
    let ub = ub_mimo(&h, &alloc, link.sigma_w()).unwrap();
    assert!(
        baa_mi <= ub + 1e-3,
        "baa {baa_mi} exceeds upper bound {ub}"
    );
}

#[test]
fn internal_mi_agrees_with_both_oracles() {
    let mut rng = stream_rng(105, "props-oracle");
    let quad = default_scheme::<f64>();
    for trial in 0..6 {
        let m = [2usize, 3, 4][trial % 3];
        let link = reference_link::<f64>(m, rng.gen_range(5.0..22.0));
        let alloc = PowerAllocation::equal_split(link.p_tot_mw(), 2);
        let dist = baa::init_uniform_grid(m, &alloc, link.v_pi).unwrap();
        let h = link.draw_channel(&mut rng);
        let sigma = link.sigma_w();

        let internal = baa::ergodic_mi(&dist, std::slice::from_ref(&h), sigma, &quad).unwrap();
        let quad_oracle = mi::mi_quadrature(&dist, &h, sigma, 48).unwrap().value_bits;
        assert!(
            (internal - quad_oracle).abs() < 0.01,
            "trial {trial}: internal {internal} vs quadrature {quad_oracle}"
        );
        let mc = mi::mi_monte_carlo(&dist, |_: &mut _| h.clone(), sigma, 400_000, &mut rng)
            .unwrap();
        assert!(
            (internal - mc.value_bits).abs() < mc.error_bar.max(0.01),
            "trial {trial}: internal {internal} vs mc {} ± {}",
            mc.value_bits,
            mc.error_bar
        );
    }
}

#[test]
fn precoded_intensities_respect_the_amplitude_constraint() {
    // Wild pre-coder outputs still land inside [0, P] after the
    // modulator; no clipping anywhere in the chain.
    let mut rng = stream_rng(106, "props-mzm");
    let mut model = fmflab::ae::MlpModel::<f64>::he_uniform(
        vec![2, 16, 16, 2],
        fmflab::ae::OutputHead::Linear,
        &mut rng,
    )
    .unwrap();
    for w in &mut model.weights {
        for v in w.iter_mut() {
            *v *= 10.0;
        }
    }
    let precoder = ae::Precoder::Mlp(model);
    let powers = [1.3f64, 0.7];
    for x1 in 0..8 {
        for x2 in 0..8 {
            let v = ae::precode(&precoder, &[x1, x2], 8, 1.0).unwrap();
            let s = mzm_modulate(&v, &powers, 1.0).unwrap();
            assert!(s[0] >= 0.0 && s[0] <= powers[0]);
            assert!(s[1] >= 0.0 && s[1] <= powers[1]);
        }
    }
}

/// Trained detectors can never report more than the true mutual
/// information of the precoded constellation (mismatched decoding), up
/// to the estimator tolerance.
#[test]
fn reported_rates_are_below_true_mi() {
    let link = reference_link::<f64>(4, 14.0);
    let mut cfg = TrainConfig::new(PrecoderKind::Prec3, DetectorKind::Det1, 41);
    cfg.n_train_symbols = 100_000;
    cfg.n_test_symbols = 50_000;
    let out = ae::train(&link, &cfg).unwrap();
    let system = &out.system;

    // Constellation induced by the trained pre-coder and powers.
    let m = link.mod_order;
    let powers = ae::power_allocation_forward(&system.power_theta, link.p_tot_mw());
    let mut points = Vec::new();
    let mut labels_mode0 = Vec::new();
    let mut labels_mode1 = Vec::new();
    for x1 in 0..m {
        for x2 in 0..m {
            let v = ae::precode(&system.precoder, &[x1, x2], m, link.v_pi).unwrap();
            let s = mzm_modulate(&v, &powers, link.v_pi).unwrap();
            points.extend_from_slice(&s);
            labels_mode0.push(x1);
            labels_mode1.push(x2);
        }
    }
    let k = m * m;
    let dist = DiscreteDistribution::new(points, vec![1.0 / k as f64; k], 2).unwrap();

    // Ensemble-averaged per-mode oracle MI.
    let h_set = draw_ensemble(&link, 48, cfg.seed);
    let sigma = link.sigma_w();
    let mut mi_mode = [0.0f64; 2];
    for h in &h_set {
        mi_mode[0] += mi::mi_marginal_quadrature(&dist, &labels_mode0, 0, h, sigma, 40)
            .unwrap()
            .value_bits;
        mi_mode[1] += mi::mi_marginal_quadrature(&dist, &labels_mode1, 1, h, sigma, 40)
            .unwrap()
            .value_bits;
    }
    mi_mode[0] /= h_set.len() as f64;
    mi_mode[1] /= h_set.len() as f64;

    // Detector rates per mode (NN and Gaussian receivers).
    let nn = evaluate_rate(system, Receiver::Nn, 50_000).unwrap();
    let gp = fit_gaussian_receiver(system, 50_000).unwrap();
    let gauss = evaluate_rate(system, Receiver::Gaussian(&gp), 50_000).unwrap();
    for i in 0..2 {
        assert!(
            nn.per_mode_rate[i] <= mi_mode[i] + 0.02,
            "mode {i}: nn rate {} vs oracle {}",
            nn.per_mode_rate[i],
            mi_mode[i]
        );
        assert!(
            gauss.per_mode_rate[i] <= mi_mode[i] + 0.02,
            "mode {i}: gaussian rate {} vs oracle {}",
            gauss.per_mode_rate[i],
            mi_mode[i]
        );
    }
}

/// More transmit-side knowledge cannot hurt (statistical, Gaussian
/// receiver everywhere): trivial scaling <= affine <= nonlinear.
#[test]
fn knowledge_ordering_of_precoders() {
    let link = reference_link::<f64>(8, 20.0);
    let seeds = [1u64, 2, 3];
    let mut means = Vec::new();
    for precoder in [PrecoderKind::Prec1, PrecoderKind::Prec2, PrecoderKind::Prec3] {
        let mut acc = 0.0;
        for &seed in &seeds {
            let mut cfg = TrainConfig::new(precoder, DetectorKind::Det1, seed);
            cfg.n_train_symbols = 400_000;
            cfg.n_test_symbols = 50_000;
            let out = ae::train(&link, &cfg).unwrap();
            let gp = fit_gaussian_receiver(&out.system, 50_000).unwrap();
            acc += evaluate_rate(&out.system, Receiver::Gaussian(&gp), 50_000)
                .unwrap()
                .reported_rate;
        }
        means.push(acc / seeds.len() as f64);
    }
    assert!(
        means[1] >= means[0] - 0.05,
        "affine {} below trivial {}",
        means[1],
        means[0]
    );
    assert!(
        means[2] >= means[1] - 0.05,
        "nonlinear {} below affine {}",
        means[2],
        means[1]
    );
}
