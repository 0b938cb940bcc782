#![allow(dead_code)]

use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cvqkd::finite_size::xi_stat;
use cvqkd::gaussian::{max_attack_correlation, shared_cm, ProtocolParams, TwoModeCM};

/// Symplectic eigenvalues from the spectrum of `i Omega gamma`, sorted
/// descending.
pub fn symplectic_oracle(cm: &TwoModeCM) -> [f64; 2] {
    let (a, b, c) = (cm.a(), cm.b(), cm.c());
    #[rustfmt::skip]
    let gamma = Matrix4::new(
        a, 0.0, c, 0.0,
        0.0, a, 0.0, -c,
        c, 0.0, b, 0.0,
        0.0, -c, 0.0, b,
    );
    #[rustfmt::skip]
    let omega = Matrix4::new(
        0.0, 1.0, 0.0, 0.0,
        -1.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, -1.0, 0.0,
    );
    // eigenvalues of Omega gamma are +-i lambda_k
    let mut mags: Vec<f64> = (omega * gamma)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.im.abs())
        .collect();
    mags.sort_by(|x, y| y.partial_cmp(x).unwrap());
    [(mags[0] + mags[1]) / 2.0, (mags[2] + mags[3]) / 2.0]
}

/// A random physical parameter set.
pub fn random_params(rng: &mut ChaCha8Rng) -> ProtocolParams {
    let v = 10f64.powf(rng.random_range(0.0..5.0)) + 1.0;
    let tau_a = rng.random_range(0.05..1.0);
    let tau_b = rng.random_range(0.05..1.0);
    let omega_a = 1.0 + rng.random_range(0.0..5.0);
    let omega_b = 1.0 + rng.random_range(0.0..5.0);
    let bound = max_attack_correlation(omega_a, omega_b);
    let g = rng.random_range(-1.0..=1.0) * bound;
    ProtocolParams {
        epr_variance: v,
        tau_a,
        tau_b,
        omega_a,
        omega_b,
        g,
        g_prime: -g,
        excess_noise: 0.0,
        beta: 1.0,
        attenuation_db_per_km: 0.2,
    }
}

pub fn random_cms(count: usize, seed: u64) -> Vec<TwoModeCM> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| shared_cm(&random_params(&mut rng)).unwrap())
        .collect()
}

/// Smallest `nu` with `xi(nu) > 0`, by bisection.
#[allow(clippy::too_many_arguments)]
pub fn min_nu_bisection(
    eps_s: f64,
    eps_1: f64,
    n: f64,
    gamma: f64,
    alpha: f64,
    n_total: f64,
    m: f64,
) -> f64 {
    let xi = |nu: f64| xi_stat(eps_s, eps_1, n, gamma, nu, alpha, n_total, m).unwrap();
    let (mut lo, mut hi) = (0.0, alpha);
    while xi(hi) <= 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if xi(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

pub fn rel_err(x: f64, y: f64) -> f64 {
    (x - y).abs() / y.abs()
}

/// Sample mean and standard error.
pub fn mean_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
