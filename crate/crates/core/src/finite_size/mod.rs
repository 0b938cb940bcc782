//! Composable finite-size key length against coherent attacks.
//!
//! The smooth min-entropy of Bob's key is bounded through the entropic
//! uncertainty relation for binned quadratures, the max-entropy through the
//! average distance between Alice's and Bob's binned data, and sampling
//! fluctuations through a Serfling-type bound. ADC range `alpha`, bin width
//! `delta` and the energy-test threshold are expressed in quadrature units
//! with vacuum variance 1/2.

mod model;

pub use model::{
    adc_mean_distance, adc_second_moment, best_over_delta, expected_statistics, key_rate_coherent,
    key_rate_coherent_asymptotic, lattice_difference, lattice_entropy, model_cm, CoherentOptions,
    DifferenceDistribution, EntropyConvention, ModelStatistics, DELTA_CANDIDATES,
    SNU_TO_QUADRATURE,
};

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest bin width for which `c(delta) ~ delta^2 / 2pi` is used.
pub const MAX_APPROX_DELTA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteSizeParams {
    pub n_total: u64,
    pub m_pe: u64,
    pub n_key: u64,
    pub alpha: f64,
    pub delta: f64,
    pub m_th: f64,
    pub t_split: f64,
    pub eps_s: f64,
    pub eps_c: f64,
    pub eps_1: f64,
    /// Overall security budget `eps_s + eps_c` must fit in.
    pub eps_budget: f64,
    /// Parameter-estimation threshold on the average distance, in bins.
    pub d0: f64,
    pub p_pass: f64,
}

impl FiniteSizeParams {
    /// Defaults for the figure-reproduction operating point with `n_total`
    /// signals split evenly between key and parameter estimation.
    pub fn with_block_size(n_total: u64) -> Self {
        let eps_budget = 1e-20;
        let eps_s = eps_budget / 2.0;
        let m_pe = n_total / 2;
        FiniteSizeParams {
            n_total,
            m_pe,
            n_key: n_total - m_pe,
            alpha: 52.0,
            delta: 0.05,
            m_th: 12.0,
            t_split: 0.75,
            eps_s,
            eps_c: eps_budget / 2.0,
            eps_1: eps_s / 2.0,
            eps_budget,
            d0: 0.0,
            p_pass: 0.99,
        }
    }

    /// Re-split the block so that a fraction `pe_fraction` goes to parameter
    /// estimation.
    pub fn with_pe_fraction(mut self, pe_fraction: f64) -> Result<Self> {
        if !(pe_fraction > 0.0 && pe_fraction < 1.0) {
            return Err(Error::config(format!(
                "pe_fraction must lie in (0, 1), got {pe_fraction}"
            )));
        }
        self.m_pe = (self.n_total as f64 * pe_fraction).round() as u64;
        self.n_key = self.n_total.saturating_sub(self.m_pe);
        Ok(self)
    }

    /// Number of ADC symbols `2 alpha / delta`.
    pub fn alphabet_size(&self) -> Result<u32> {
        alphabet_size(self.alpha, self.delta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_key + self.m_pe != self.n_total {
            return Err(Error::config(format!(
                "n ({}) + m ({}) must equal N ({})",
                self.n_key, self.m_pe, self.n_total
            )));
        }
        if self.m_pe < 2 || self.n_key < 1 {
            return Err(Error::config("need at least 2 estimation and 1 key signal"));
        }
        self.alphabet_size()?;
        if !(self.m_th > 0.0) {
            return Err(Error::config("m_th must be positive"));
        }
        if !(self.t_split > 0.5 && self.t_split < 1.0) {
            return Err(Error::config(format!(
                "t_split must lie in (1/2, 1), got {}",
                self.t_split
            )));
        }
        for (name, eps) in [
            ("eps_s", self.eps_s),
            ("eps_c", self.eps_c),
            ("eps_1", self.eps_1),
        ] {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::config(format!(
                    "{name} must lie in (0, 1), got {eps}"
                )));
            }
        }
        if self.eps_1 >= self.eps_s {
            return Err(Error::config("eps_1 must be smaller than eps_s"));
        }
        if self.eps_s + self.eps_c > self.eps_budget * (1.0 + 1e-12) {
            return Err(Error::config(format!(
                "eps_s + eps_c = {} exceeds the budget {}",
                self.eps_s + self.eps_c,
                self.eps_budget
            )));
        }
        if !(self.d0 >= 0.0) {
            return Err(Error::config("d0 must be nonnegative"));
        }
        if !(self.p_pass > 0.0 && self.p_pass <= 1.0) {
            return Err(Error::config("p_pass must lie in (0, 1]"));
        }
        Ok(())
    }
}

pub(crate) fn alphabet_size(alpha: f64, delta: f64) -> Result<u32> {
    if !(alpha > 0.0 && delta > 0.0) || !alpha.is_finite() || !delta.is_finite() {
        return Err(Error::config("alpha and delta must be positive"));
    }
    let ratio = 2.0 * alpha / delta;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio || rounded > u32::MAX as f64 {
        return Err(Error::config(format!(
            "2 alpha / delta must be a positive integer, got {ratio}"
        )));
    }
    Ok(rounded as u32)
}

/// Aggregates computed on the parameter-estimation subset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PEStatistics {
    /// Average distance between Alice's and Bob's symbols.
    pub d_pe: f64,
    /// Average squared distance.
    pub v_d_pe: f64,
    pub v_xa_pe: f64,
    pub v_xb_pe: f64,
    pub p_pass_emp: f64,
    pub t_q_hat: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbortReason {
    /// `eps_s - eps_1 - 2 sqrt(2 n Gamma) <= 0`.
    EnergyTestBudget,
    /// A simulated round exceeded the energy-test threshold.
    EnergyTestFailed,
    /// `d_pe > d0`.
    ParameterEstimation,
    /// No fluctuation parameter gives a usable `xi` in (0, 1).
    NoValidNu,
    DataIntegrity,
}

impl AbortReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            AbortReason::EnergyTestBudget => "energy-test-budget",
            AbortReason::EnergyTestFailed => "energy-test-failed",
            AbortReason::ParameterEstimation => "parameter-estimation",
            AbortReason::NoValidNu => "no-valid-nu",
            AbortReason::DataIntegrity => "data-integrity",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            AbortReason::EnergyTestBudget => "security budget exhausted by energy test",
            AbortReason::EnergyTestFailed => "energy test rejected a round",
            AbortReason::ParameterEstimation => "average distance above threshold d0",
            AbortReason::NoValidNu => "no nu makes the fluctuation parameter positive",
            AbortReason::DataIntegrity => "estimation statistics are inconsistent",
        }
    }
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentRateBreakdown {
    pub delta: f64,
    pub d0: f64,
    /// `log2(1 / c(delta))`, bits per symbol.
    pub overlap_term: f64,
    /// `log2 gamma(d0 + mu)`, bits per symbol.
    pub gamma_term: Option<f64>,
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    pub sigma_star_sq: Option<f64>,
    pub xi_stat: Option<f64>,
    pub big_gamma: f64,
    pub eps_tilde: f64,
    /// Largest smoothing parameter allowed by the security budget.
    pub eps_smooth_max: f64,
    pub leak_ec_per_symbol: f64,
    /// Total error-correction leakage in bits (absent in the asymptotic limit).
    pub leak_ec: Option<f64>,
    pub ell_low: Option<f64>,
    /// Rate before clamping at zero; absent when the protocol aborted.
    pub unclamped_rate: Option<f64>,
    pub key_rate: f64,
    pub abort_reason: Option<AbortReason>,
    /// Estimation statistics the bound was evaluated on.
    pub pe: Option<PEStatistics>,
    pub h_b: Option<f64>,
    pub mutual_info: Option<f64>,
}

/// Overlap of the binned x and p measurements, `c(delta) ~ delta^2 / 2pi`.
pub fn overlap_c(delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if delta > MAX_APPROX_DELTA {
        return Err(Error::config(format!(
            "delta = {delta} is too coarse for the delta^2/2pi overlap approximation; \
             evaluate the prolate spheroidal form instead"
        )));
    }
    Ok(delta * delta / (2.0 * PI))
}

/// Large-deviation function `gamma(t)`.
pub fn gamma_dev(t: f64) -> Result<f64> {
    Ok(log2_gamma_dev(t)?.exp2())
}

/// `log2 gamma(t)`, stable for large `t`.
pub fn log2_gamma_dev(t: f64) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::domain(format!("gamma(t) requires t >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let root = t.hypot(1.0);
    // t / (sqrt(t^2 + 1) - 1) == (sqrt(t^2 + 1) + 1) / t
    Ok((t + root).log2() + t * ((root + 1.0) / t).log2())
}

/// Bound on the probability that Bob's homodyne outcome leaves the ADC range
/// given a passed energy test.
pub fn energy_gamma(alpha: f64, t_split: f64, m_th: f64) -> Result<f64> {
    if !(t_split > 0.5 && t_split < 1.0) {
        return Err(Error::config(format!(
            "energy-test transmissivity must lie in (1/2, 1), got {t_split}"
        )));
    }
    let mu = ((1.0 - t_split) / (2.0 * t_split)).sqrt();
    let margin = mu * alpha - m_th;
    if !(margin > 0.0) {
        return Err(Error::config(format!(
            "energy-test bound vacuous for this geometry: mu * alpha = {} <= M_th = {m_th}",
            mu * alpha
        )));
    }
    let lambda = ((2.0 * t_split - 1.0) / t_split).powi(2);
    let prefactor = ((1.0 + lambda).sqrt() + (1.0 + 1.0 / lambda).sqrt()) / 2.0;
    Ok(prefactor * (-margin * margin / (t_split * (1.0 + lambda) / 2.0)).exp())
}

/// Smoothing contributed by the energy test, `sqrt(2 n Gamma / p_pass)`.
pub fn energy_smoothness(n: f64, big_gamma: f64, p_pass: f64) -> f64 {
    (2.0 * n * big_gamma / p_pass).sqrt()
}

/// `eps_s - eps_1 - 2 sqrt(2 n Gamma)`, the budget left after the energy test.
pub fn budget_margin(eps_s: f64, eps_1: f64, n: f64, big_gamma: f64) -> f64 {
    eps_s - eps_1 - 2.0 * (2.0 * n * big_gamma).sqrt()
}

fn serfling_exponent(nu: f64, alpha: f64, n_total: f64, n: f64, m: f64) -> f64 {
    2.0 * (nu / alpha).powi(2) * n * m * m / (n_total * (m + 1.0))
}

/// Statistical parameter `xi(nu)`; the fluctuation bound needs `xi > 0`.
#[allow(clippy::too_many_arguments)]
pub fn xi_stat(
    eps_s: f64,
    eps_1: f64,
    n: f64,
    big_gamma: f64,
    nu: f64,
    alpha: f64,
    n_total: f64,
    m: f64,
) -> Result<f64> {
    let margin = budget_margin(eps_s, eps_1, n, big_gamma);
    if !(margin > 0.0) {
        return Err(Error::domain(AbortReason::EnergyTestBudget.description()));
    }
    Ok(margin * margin - 2.0 * (-serfling_exponent(nu, alpha, n_total, n, m)).exp())
}

/// Infimum of the `nu` values that make `xi` positive, in closed form.
pub fn find_min_nu(
    eps_s: f64,
    eps_1: f64,
    n: f64,
    big_gamma: f64,
    alpha: f64,
    n_total: f64,
    m: f64,
) -> Result<f64> {
    let margin = budget_margin(eps_s, eps_1, n, big_gamma);
    if !(margin > 0.0) {
        return Err(Error::domain(AbortReason::EnergyTestBudget.description()));
    }
    let margin_sq = margin * margin;
    if margin_sq >= 2.0 {
        return Ok(0.0);
    }
    let scale = n_total * (m + 1.0) / (2.0 * n * m * m);
    Ok(alpha * (scale * (2.0 / margin_sq).ln()).sqrt())
}

/// Variance proxy `sigma_*^2` of the sampled distance, in squared bins.
pub fn sigma_star_sq(pe: &PEStatistics, n_total: f64, m: f64, nu: f64, delta: f64) -> Result<f64> {
    let frac = m / n_total;
    let shift = nu / (delta * delta);
    let cross = (pe.v_xa_pe + shift) * (pe.v_xb_pe + shift);
    if cross < 0.0 || !cross.is_finite() {
        return Err(Error::data(format!(
            "negative radicand in sigma_*^2 (v_xa = {}, v_xb = {})",
            pe.v_xa_pe, pe.v_xb_pe
        )));
    }
    let value = frac * (pe.v_d_pe - frac * pe.d_pe * pe.d_pe)
        + frac * (pe.v_xa_pe + pe.v_xb_pe + 2.0 * shift)
        + 2.0 * frac * cross.sqrt();
    if value < 0.0 {
        return Err(Error::data(format!("sigma_*^2 is negative: {value}")));
    }
    Ok(value)
}

/// Fluctuation `mu` of the key-data distance above the estimated one, in bins.
pub fn mu_fluctuation(
    sigma_star_sq: f64,
    xi: f64,
    n_total: f64,
    n: f64,
    m: f64,
    alpha: f64,
    delta: f64,
) -> Result<f64> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::domain(format!("xi must lie in (0, 1), got {xi}")));
    }
    if !(n > 0.0 && m > 0.0 && n_total > 0.0) {
        return Err(Error::domain("signal counts must be positive"));
    }
    let log_inv = -xi.log2();
    let sampling = (2.0 * log_inv).sqrt() * n_total * sigma_star_sq.sqrt() / (m * n.sqrt());
    let range = 4.0 * (alpha / delta) * log_inv / 3.0 * n_total / (n * m);
    Ok(sampling + range)
}

/// The `nu` actually used: the value above [`find_min_nu`] minimizing `mu`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluctuationChoice {
    pub nu_min: f64,
    pub nu: f64,
    pub xi: f64,
    pub sigma_star_sq: f64,
    pub mu: f64,
}

pub fn optimal_fluctuation(
    fs: &FiniteSizeParams,
    pe: &PEStatistics,
    big_gamma: f64,
) -> Result<FluctuationChoice> {
    let n_total = fs.n_total as f64;
    let n = fs.n_key as f64;
    let m = fs.m_pe as f64;
    let nu_min = find_min_nu(fs.eps_s, fs.eps_1, n, big_gamma, fs.alpha, n_total, m)?;

    let evaluate = |nu: f64| -> Option<FluctuationChoice> {
        let xi = xi_stat(fs.eps_s, fs.eps_1, n, big_gamma, nu, fs.alpha, n_total, m).ok()?;
        let sigma = sigma_star_sq(pe, n_total, m, nu, fs.delta).ok()?;
        let mu = mu_fluctuation(sigma, xi, n_total, n, m, fs.alpha, fs.delta).ok()?;
        mu.is_finite().then_some(FluctuationChoice {
            nu_min,
            nu,
            xi,
            sigma_star_sq: sigma,
            mu,
        })
    };
    // nu = nu_min (1 + e^s) when nu_min > 0, otherwise nu = alpha e^s.
    let nu_of = |s: f64| {
        if nu_min > 0.0 {
            nu_min * (1.0 + s.exp())
        } else {
            fs.alpha * s.exp()
        }
    };
    let objective = |s: f64| evaluate(nu_of(s)).map_or(f64::INFINITY, |c| c.mu);
    let best = golden_section_min(objective, -40.0, 12.0, 200);
    evaluate(nu_of(best)).ok_or_else(|| Error::Numerical("no nu yields a finite mu".into()))
}

fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
        if (hi - lo).abs() < 1e-12 {
            break;
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

/// Shannon entropy in bits of a probability vector.
pub fn shannon_entropy(probs: &[f64]) -> Result<f64> {
    let total: f64 = probs.iter().sum();
    if probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::domain(format!(
            "not a probability distribution (sum = {total})"
        )));
    }
    Ok(probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.log2())
        .sum())
}

/// Entropy of binned data with the resolution offset, `-sum p log2 p - log2 delta`.
pub fn discrete_entropy(histogram: &[f64], delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::domain("delta must be positive"));
    }
    Ok(shannon_entropy(histogram)? - delta.log2())
}

/// Error-correction leakage `n (H(X_B) - beta I(X_B:X_A))` in bits. A
/// negative estimate is clamped to zero.
pub fn ec_leakage(h_b: f64, mutual_info: f64, beta: f64, n: f64) -> Result<f64> {
    if !(h_b >= 0.0 && mutual_info >= 0.0 && n >= 0.0) {
        return Err(Error::domain(
            "entropies and block length must be nonnegative",
        ));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::domain("beta must lie in [0, 1]"));
    }
    let leak = n * (h_b - beta * mutual_info);
    if leak < 0.0 {
        log::warn!("negative error-correction leakage {leak} clamped to 0");
        return Ok(0.0);
    }
    Ok(leak)
}

/// `log2(1 / (eps_1^2 eps_c))`.
fn hashing_cost(eps_1: f64, eps_c: f64) -> f64 {
    -(2.0 * eps_1.log2() + eps_c.log2())
}

/// Breakdown fields that do not depend on the estimation outcome, with a
/// zero rate and no abort reason.
pub(crate) fn breakdown_base(fs: &FiniteSizeParams, leak: f64) -> Result<CoherentRateBreakdown> {
    fs.validate()?;
    let big_gamma = energy_gamma(fs.alpha, fs.t_split, fs.m_th)?;
    let overlap_term = -overlap_c(fs.delta)?.log2();
    let n = fs.n_key as f64;
    let eps_tilde = energy_smoothness(n, big_gamma, fs.p_pass);
    Ok(CoherentRateBreakdown {
        delta: fs.delta,
        d0: fs.d0,
        overlap_term,
        gamma_term: None,
        mu: None,
        nu: None,
        sigma_star_sq: None,
        xi_stat: None,
        big_gamma,
        eps_tilde,
        eps_smooth_max: (fs.eps_s - fs.eps_1) / (2.0 * fs.p_pass - 2.0 * eps_tilde),
        leak_ec_per_symbol: leak / n,
        leak_ec: Some(leak),
        ell_low: None,
        unclamped_rate: None,
        key_rate: 0.0,
        abort_reason: None,
        pe: None,
        h_b: None,
        mutual_info: None,
    })
}

/// Lower bound on the secure key length and the resulting rate.
///
/// Configuration problems (invalid parameters, a vacuous energy-test bound)
/// are errors. Protocol aborts produce a zero rate with `abort_reason` set.
pub fn key_length_low(
    fs: &FiniteSizeParams,
    pe: &PEStatistics,
    leak: f64,
) -> Result<CoherentRateBreakdown> {
    let mut out = breakdown_base(fs, leak)?;
    out.pe = Some(*pe);
    let big_gamma = out.big_gamma;
    let overlap_term = out.overlap_term;
    let n_total = fs.n_total as f64;
    let n = fs.n_key as f64;
    let abort = |mut out: CoherentRateBreakdown, reason| {
        out.abort_reason = Some(reason);
        Ok(out)
    };

    if pe.d_pe > fs.d0 {
        return abort(out, AbortReason::ParameterEstimation);
    }
    // The printed validity condition omits the factor n; the version with n is
    // stricter, and both must hold.
    let literal = fs.eps_s - fs.eps_1 + 2.0 * (2.0 * big_gamma).sqrt();
    if !(budget_margin(fs.eps_s, fs.eps_1, n, big_gamma) > 0.0) || !(literal > 0.0) {
        return abort(out, AbortReason::EnergyTestBudget);
    }
    let choice = match optimal_fluctuation(fs, pe, big_gamma) {
        Ok(choice) => choice,
        Err(Error::Data(_)) => return abort(out, AbortReason::DataIntegrity),
        Err(_) => return abort(out, AbortReason::NoValidNu),
    };
    out.nu = Some(choice.nu);
    out.xi_stat = Some(choice.xi);
    out.sigma_star_sq = Some(choice.sigma_star_sq);
    out.mu = Some(choice.mu);

    let gamma_term = log2_gamma_dev(fs.d0 + choice.mu)?;
    out.gamma_term = Some(gamma_term);
    let ell_low = n * (overlap_term - gamma_term) - leak - hashing_cost(fs.eps_1, fs.eps_c) + 2.0;
    out.ell_low = Some(ell_low);
    out.unclamped_rate = Some(ell_low / n_total);
    out.key_rate = (ell_low / n_total).max(0.0);
    Ok(out)
}
