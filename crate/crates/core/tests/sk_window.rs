//! Small-n SK values from the exhaustive oracle, frozen once measured.

use sclab::models::{sample_quiet_planted_sk, Observation};
use sclab::skcert::*;
use sclab::stats::welford;
use sclab::RngStream;

// Measured by sk_bruteforce over sandwich_sweep(18, 30, RngStream::new(30, 0)):
// mean 1.30760, stderr 0.02773. Finite-n SK approaches 1.5264 from below, so a
// window centred above the limit would not hold at n = 18.
const N18_MEAN: f64 = 1.30760;
const N18_STDERR: f64 = 0.02773;

// P(N(3, 2/16) ≥ 2.8): the planted x alone clears the threshold this often.
const PLANTED_CLEAR_P: f64 = 0.7141961775233342;

fn matrix(c: f64, n: usize, s: RngStream) -> sclab::linalg::SymMatrix {
    match sample_quiet_planted_sk(n, c, s).unwrap().observation {
        Observation::Matrix(m) => m,
        _ => unreachable!(),
    }
}

#[test]
fn n18_mean_matches_frozen_value() {
    let d = sandwich_sweep(18, 30, RngStream::new(30, 0)).unwrap();
    let b: Vec<f64> = d.iter().map(|x| x.brute.unwrap()).collect();
    let est = welford(&b).estimate();
    assert!((est.mean - N18_MEAN).abs() < 1e-5, "{est:?}");
    assert!((est.stderr - N18_STDERR).abs() < 1e-5, "{est:?}");
    assert!(est.mean + 3.0 * est.stderr < PARISI_SK);
    assert!(d.iter().all(|x| x.ordered()));
}

#[test]
fn n18_sits_below_slepian_plus_slack() {
    let d = sandwich_sweep(18, 30, RngStream::new(32, 0)).unwrap();
    let ok = d.iter().filter(|x| x.brute.unwrap() <= slepian_bound_constant() + 0.15).count();
    assert!(ok as f64 >= 0.9 * d.len() as f64, "{ok}/{}", d.len());
}

#[test]
fn n16_certificates_and_rounding_bracket_brute_force() {
    let s = RngStream::new(33, 0);
    for i in 0..50 {
        let w = matrix(0.0, 16, s.child(i));
        let brute = sk_bruteforce(&w).unwrap().value;
        assert!(abssum_cert(&w).value >= brute);
        assert!(spectral_cert(&w).unwrap().value >= brute);
        let r = sign_rounding_search(&w).unwrap();
        assert!(r.value <= brute);
        assert_eq!(r.x.len(), 16);
    }
}

#[test]
fn c3_planting_at_n16_clears_threshold_at_the_gaussian_rate() {
    let s = RngStream::new(31, 0);
    let draws = 20;
    let hits = (0..draws).filter(|&i| sk_bruteforce(&matrix(3.0, 16, s.child(i))).unwrap().value >= 2.8).count();
    let sd = (PLANTED_CLEAR_P * (1.0 - PLANTED_CLEAR_P) / draws as f64).sqrt();
    let frac = hits as f64 / draws as f64;
    assert!((frac - PLANTED_CLEAR_P).abs() <= 3.0 * sd, "{hits}/{draws}");
}
