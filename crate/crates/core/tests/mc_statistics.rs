mod common;

use std::f64::consts::FRAC_1_SQRT_2;

use common::mean_se;
use cvqkd::finite_size::adc_mean_distance;
use cvqkd::gaussian::{shared_cm, SymmetricLink, TwoModeCM};
use cvqkd::mc::{discretize, energy_test, estimate_tq, pe_statistics, sample_rounds, sift, Basis};

const ROUNDS: usize = 1_000_000;

fn within(value: f64, expected: f64, se: f64) -> bool {
    (value - expected).abs() <= 5.0 * se
}

#[test]
fn vacuum_variance() {
    let cm = TwoModeCM::new(1.0, 1.0, 0.0).unwrap();
    let rounds = sample_rounds(&cm, ROUNDS, 1);
    let (m2, se) = mean_se(rounds.iter().map(|r| r.x_a * r.x_a));
    assert!(within(m2, 1.0, se), "{m2} +- {se}");
}

#[test]
fn sampled_covariance_matches_state() {
    let cm = TwoModeCM::new(1.5, 1.5, 0.866).unwrap();
    let rounds = sample_rounds(&cm, ROUNDS, 2);
    let checks = [
        (
            "x_a x_b",
            mean_se(rounds.iter().map(|r| r.x_a * r.x_b)),
            0.866,
        ),
        (
            "p_a p_b",
            mean_se(rounds.iter().map(|r| r.p_a * r.p_b)),
            -0.866,
        ),
        ("x_a^2", mean_se(rounds.iter().map(|r| r.x_a * r.x_a)), 1.5),
        ("p_b^2", mean_se(rounds.iter().map(|r| r.p_b * r.p_b)), 1.5),
        (
            "x_a p_b",
            mean_se(rounds.iter().map(|r| r.x_a * r.p_b)),
            0.0,
        ),
    ];
    for (name, (mean, se), expected) in checks {
        assert!(within(mean, expected, se), "{name}: {mean} +- {se}");
    }
}

#[test]
fn sift_keeps_half() {
    let cm = TwoModeCM::new(2.0, 2.0, 1.0).unwrap();
    let kept = sift(&sample_rounds(&cm, ROUNDS, 3)).len() as f64;
    let se = (0.25 / ROUNDS as f64).sqrt();
    assert!(within(kept / ROUNDS as f64, 0.5, se));
}

#[test]
fn rescaling_factor_converges() {
    let symmetric = shared_cm(&SymmetricLink::at_distance(5.0).params().unwrap()).unwrap();
    let pairs = sift(&sample_rounds(&symmetric, ROUNDS, 4));
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let t = estimate_tq(&a, &b).unwrap();
    assert!((t - 1.0).abs() < 1e-2, "{t}");

    let asymmetric = TwoModeCM::new(4.0, 1.0, 0.0).unwrap();
    let pairs = sift(&sample_rounds(&asymmetric, ROUNDS, 5));
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let t = estimate_tq(&a, &b).unwrap();
    // sd of the variance ratio estimate is about sqrt(4 / n) relative
    assert!(
        (t - 0.5).abs() < 5.0 * 0.5 * (1.0 / a.len() as f64).sqrt(),
        "{t}"
    );
}

#[test]
fn discretized_samples_in_range() {
    let cm = TwoModeCM::new(3.0, 3.0, 2.0).unwrap();
    let (alpha, delta) = (1.0, 0.25);
    for r in sample_rounds(&cm, ROUNDS, 6) {
        let s = discretize(r.x_b, alpha, delta).unwrap();
        assert!((1..=8).contains(&s));
    }
}

/// Simulated estimation data at the figure operating point (5 km,
/// V = 1e5): rescale, bin, and compare the average distance with the
/// numerically integrated expectation (most of Bob's values fall outside
/// the ADC range here, so the clipping matters).
#[test]
fn average_distance_matches_integral() {
    let (alpha, delta) = (52.0, 0.05);
    let cm = shared_cm(&SymmetricLink::at_distance(5.0).params().unwrap()).unwrap();
    let pairs: Vec<(f64, f64)> = sample_rounds(&cm, ROUNDS, 7)
        .iter()
        .filter(|r| r.basis_a == r.basis_b)
        .map(|r| match r.basis_a {
            Basis::X => (r.x_a * FRAC_1_SQRT_2, r.x_b * FRAC_1_SQRT_2),
            Basis::P => (-r.p_a * FRAC_1_SQRT_2, r.p_b * FRAC_1_SQRT_2),
        })
        .collect();
    let (q_a, q_b): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
    let t = estimate_tq(&q_a, &q_b).unwrap();
    let x_a: Vec<u32> = q_a
        .iter()
        .map(|v| discretize(t * v, alpha, delta).unwrap())
        .collect();
    let x_b: Vec<u32> = q_b
        .iter()
        .map(|v| discretize(*v, alpha, delta).unwrap())
        .collect();
    let stats = pe_statistics(&x_a, &x_b, alpha, delta).unwrap();
    let (mean, se) = mean_se(
        x_a.iter()
            .zip(&x_b)
            .map(|(a, b)| (*a as f64 - *b as f64).abs()),
    );
    assert_eq!(mean, stats.d_pe);
    let expected = adc_mean_distance(&cm, alpha, delta).unwrap();
    assert!(
        within(stats.d_pe, expected, se),
        "{} vs {expected} +- {se}",
        stats.d_pe
    );
    assert!(stats.d_pe.powi(2) <= stats.v_d_pe);
}

#[test]
fn energy_test_honest_source_has_no_aborts() {
    let link = SymmetricLink {
        epr_variance: 20.0,
        ..SymmetricLink::at_distance(0.0)
    };
    let cm = shared_cm(&link.params().unwrap()).unwrap();
    let rounds = sample_rounds(&cm, ROUNDS, 8);
    let x: Vec<f64> = rounds.iter().map(|r| r.x_b * FRAC_1_SQRT_2).collect();
    let p: Vec<f64> = rounds.iter().map(|r| r.p_b * FRAC_1_SQRT_2).collect();
    let out = energy_test(&x, &p, 0.8, 12.0, 9).unwrap();
    assert_eq!(out.failures, 0);
}
