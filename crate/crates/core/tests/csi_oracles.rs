//! Independent oracles and properties for the Stage-II preprocessing chain.

// Oracles are written as plain index loops on purpose.
#![allow(clippy::needless_range_loop)]

use fallsense::csi::{
    amplitude, dwt_decompose, dwt_reconstruct, phase, rate_of_change, AmplitudeMatrix, DwtConfig, Wavelet, TENSOR_STEPS,
};
use fallsense::sensor_model::{CsiFrame, N_CHANNELS, N_SUBCARRIERS};
use fallsense::synth::{csi_motion_statistic, gen_csi};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_frame(rng: &mut ChaCha8Rng) -> CsiFrame {
    let mut f = CsiFrame::zeros(0.0);
    for a in 0..2 {
        for k in 0..N_SUBCARRIERS {
            f.re[a][k] = rng.random_range(-500.0..500.0);
            f.im[a][k] = rng.random_range(-500.0..500.0);
        }
    }
    f
}

#[test]
fn amplitude_matches_complex_modulus() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let f = random_frame(&mut rng);
        let amp = amplitude(&f);
        let ph = phase(&f);
        for a in 0..2 {
            for k in 0..N_SUBCARRIERS {
                let (re, im) = (f.re[a][k], f.im[a][k]);
                assert!((amp[a * N_SUBCARRIERS + k] - re.hypot(im)).abs() < 1e-12);
                assert!((ph[a * N_SUBCARRIERS + k] - im.atan2(re)).abs() < 1e-12);
            }
        }
    }
    let mut q = CsiFrame::zeros(0.0);
    q.re[0][0] = -1.0;
    q.im[0][0] = -1.0;
    assert!((phase(&q)[0] + 3.0 * std::f64::consts::FRAC_PI_4).abs() < 1e-12);
}

#[test]
fn zero_threshold_round_trip_on_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for wavelet in [Wavelet::Db4, Wavelet::Haar] {
        for _ in 0..100 {
            let x: Vec<f64> = (0..30).map(|_| rng.random_range(-50.0..50.0)).collect();
            let y = dwt_reconstruct(&dwt_decompose(&x, wavelet, 2).unwrap());
            let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "{err}");
        }
    }
}

#[test]
fn rate_of_change_is_columnwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let rows: Vec<[f64; N_CHANNELS]> = (0..30)
        .map(|_| std::array::from_fn(|_| rng.random_range(50.0..300.0)))
        .collect();
    let mut perm: Vec<usize> = (0..N_CHANNELS).collect();
    perm.shuffle(&mut rng);
    let permuted: Vec<[f64; N_CHANNELS]> = rows.iter().map(|r| std::array::from_fn(|k| r[perm[k]])).collect();
    let cfg = DwtConfig::default();
    let a = rate_of_change(&AmplitudeMatrix::from_rows(rows, 0.0).unwrap(), &cfg).unwrap();
    let b = rate_of_change(&AmplitudeMatrix::from_rows(permuted, 0.0).unwrap(), &cfg).unwrap();
    assert_eq!(a.values().len(), TENSOR_STEPS * N_CHANNELS);
    for t in 0..TENSOR_STEPS {
        for k in 0..N_CHANNELS {
            assert_eq!(b.get(t, k), a.get(t, perm[k]));
        }
    }
}

#[test]
fn wrong_window_lengths_are_rejected() {
    let frames: Vec<CsiFrame> = (0..29).map(|i| CsiFrame::zeros(i as f64)).collect();
    assert!(AmplitudeMatrix::from_frames(&frames).is_err());
}

#[test]
fn synthetic_static_and_motion_are_separated() {
    let cfg = DwtConfig::default();
    for seed in 0..1000 {
        let s = csi_motion_statistic(gen_csi(false, seed, 30).samples(), &cfg).unwrap();
        let m = csi_motion_statistic(gen_csi(true, seed, 30).samples(), &cfg).unwrap();
        assert!(s < 50.0, "seed {seed}: static {s}");
        assert!(m > 100.0, "seed {seed}: motion {m}");
    }
}
