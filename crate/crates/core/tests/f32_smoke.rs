//! Spot checks that the numeric core really is scalar-generic: the same
//! code paths run in `f32` and land near the `f64` values.

use fmflab::baa::{self, BaaParams};
use fmflab::bounds::{qr_decompose, ub_scalar, PowerAllocation, UbKind};
use fmflab::channel::{mzm_invert, mzm_modulate, reference_link, snr_to_sigma};

#[test]
fn channel_ops_in_f32() {
    let s = mzm_modulate(&[0.25f32, 0.75], &[1.0, 2.0], 1.0).unwrap();
    let v = mzm_invert(&s, &[1.0f32, 2.0], 1.0).unwrap();
    assert!((v[0] - 0.25).abs() < 1e-5 && (v[1] - 0.75).abs() < 1e-5);
    let sigma = snr_to_sigma(20.0f32, 3.0, 2);
    assert!((sigma - 4.988e-3).abs() < 1e-5);
}

#[test]
fn bounds_in_f32_track_f64() {
    for kind in [UbKind::Ub1, UbKind::Ub2] {
        let a32 = ub_scalar(kind, 10.0f32, 0.5);
        let a64 = ub_scalar(kind, 10.0f64, 0.5);
        assert!((a32 as f64 - a64).abs() < 1e-5);
    }
    let link = reference_link::<f32>(4, 15.0);
    let h = link.expected_channel();
    let f = qr_decompose(&h).unwrap();
    assert!(f.r_diag(0) > 0.0 && f.r_diag(1) > 0.0);
}

#[test]
fn baa_in_f32_tracks_f64() {
    let run = |snr: f64| -> (f64, f64) {
        let link64 = reference_link::<f64>(4, snr);
        let alloc64 = PowerAllocation::equal_split(link64.p_tot_mw(), 2);
        let mut p64 = BaaParams::new(4, 5);
        p64.n_iter_draws = 4;
        p64.n_eval_draws = 8;
        p64.tol_bits = 1e-4;
        let r64 = baa::baa_capacity(&link64, &alloc64, &p64).unwrap();

        let link32 = reference_link::<f32>(4, snr as f32 as f64 as f32);
        let alloc32 = PowerAllocation::equal_split(link32.p_tot_mw(), 2);
        let mut p32 = BaaParams::new(4, 5);
        p32.n_iter_draws = 4;
        p32.n_eval_draws = 8;
        p32.tol_bits = 1e-4f32;
        let r32 = baa::baa_capacity(&link32, &alloc32, &p32).unwrap();
        (r64.reported_mi_bits, r32.reported_mi_bits as f64)
    };
    for snr in [8.0, 14.0] {
        let (a, b) = run(snr);
        // Different RNG streams per scalar type; agreement is statistical.
        assert!((a - b).abs() < 0.05, "f64 {a} vs f32 {b}");
    }
}
