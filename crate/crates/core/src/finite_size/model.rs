//! Expected parameter-estimation statistics of the Gaussian model, and the
//! coherent-attack key rates built from them.
//!
//! Alice rescales her outcomes by `t_q = sqrt(var_b / var_a)` before binning,
//! so the symbol difference is approximately a Gaussian of variance
//! `sigma_D^2 = 2 var_b - 2 t_q cov` observed on a lattice of spacing `delta`
//! with independent uniform offsets. The difference law is then the Gaussian
//! convolved with the triangular kernel, which has a closed form.

use std::f64::consts::{E, FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use super::{
    alphabet_size, ec_leakage, energy_gamma, key_length_low, log2_gamma_dev, overlap_c,
    CoherentRateBreakdown, FiniteSizeParams, PEStatistics,
};
use crate::error::{Error, Result};
use crate::gaussian::{shared_cm, ProtocolParams, TwoModeCM};

/// Quadrature value per shot-noise-unit value (vacuum variance 1 -> 1/2).
pub const SNU_TO_QUADRATURE: f64 = FRAC_1_SQRT_2;

/// Bin widths tried when optimizing over `delta`.
pub const DELTA_CANDIDATES: [f64; 6] = [0.05, 0.1, 0.2, 0.25, 0.4, 0.5];

/// How `H(X_B)` enters the error-correction leakage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyConvention {
    /// Plain Shannon entropy of the symbols.
    #[default]
    Shannon,
    /// Shannon entropy minus `log2 delta`.
    ResolutionOffset,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentOptions {
    /// Fixed estimation threshold; when absent it is the model's expected
    /// distance times `d0_safety`.
    pub d0: Option<f64>,
    pub d0_safety: f64,
    /// Include the energy-test tap loss in the model state.
    pub tap_in_model: bool,
    pub entropy: EntropyConvention,
}

impl Default for CoherentOptions {
    fn default() -> Self {
        CoherentOptions {
            d0: None,
            d0_safety: 1.05,
            tap_in_model: false,
            entropy: EntropyConvention::Shannon,
        }
    }
}

fn upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Probability that a centered Gaussian of standard deviation `s` lies in `(lo, hi]`.
fn interval_prob(lo: f64, hi: f64, s: f64) -> f64 {
    if s == 0.0 {
        return if lo < 0.0 && 0.0 <= hi { 1.0 } else { 0.0 };
    }
    let (zl, zh) = (lo / s, hi / s);
    if zl >= 0.0 {
        upper_tail(zl) - upper_tail(zh)
    } else if zh <= 0.0 {
        upper_tail(-zh) - upper_tail(-zl)
    } else {
        1.0 - upper_tail(-zl) - upper_tail(zh)
    }
}

/// Law of the integer difference between two lattice roundings.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferenceDistribution {
    /// `probs[k]` is `P(|K| = k)` split evenly between `k` and `-k`; only
    /// `k >= 0` is stored.
    probs: Vec<f64>,
}

impl DifferenceDistribution {
    pub fn prob(&self, k: i64) -> f64 {
        let idx = k.unsigned_abs() as usize;
        self.probs.get(idx).copied().unwrap_or(0.0)
    }

    pub fn support_radius(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn mean_abs(&self) -> f64 {
        2.0 * self
            .probs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, p)| k as f64 * p)
            .sum::<f64>()
    }

    pub fn second_moment(&self) -> f64 {
        2.0 * self
            .probs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, p)| (k * k) as f64 * p)
            .sum::<f64>()
    }

    pub fn entropy(&self) -> f64 {
        let h = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
        h(self.probs[0]) + 2.0 * self.probs.iter().skip(1).map(|p| h(*p)).sum::<f64>()
    }
}

/// Difference `K` of two lattice roundings whose continuous difference is
/// Gaussian with standard deviation `sigma_bins` (in units of the lattice
/// spacing). `P(K = k) = E[tri(Y - k)]` with the unit triangular kernel.
pub fn lattice_difference(sigma_bins: f64) -> Result<DifferenceDistribution> {
    if !(sigma_bins >= 0.0) || !sigma_bins.is_finite() {
        return Err(Error::domain(format!(
            "lattice spread must be finite and nonnegative, got {sigma_bins}"
        )));
    }
    let s = sigma_bins;
    // E[(Y - x)_+] for x >= 0; the second difference of E[(x - Y)_+] equals
    // that of this tail function because the linear part cancels.
    let tail = |x: f64| {
        if s == 0.0 {
            0.0
        } else {
            s * std_normal_pdf(x / s) - x * upper_tail(x / s)
        }
    };
    let radius = (12.0 * s).ceil() as usize + 3;
    let mut probs = Vec::with_capacity(radius + 1);
    probs.push((1.0 + 2.0 * tail(1.0) - 2.0 * tail(0.0)).max(0.0));
    for k in 1..=radius {
        let k = k as f64;
        probs.push((tail(k + 1.0) - 2.0 * tail(k) + tail(k - 1.0)).max(0.0));
    }
    Ok(DifferenceDistribution { probs })
}

const LATTICE_SUM_LIMIT: f64 = 64.0;

/// Shannon entropy in bits of `ceil(Y / delta)` for `Y` centered Gaussian
/// with standard deviation `sigma_bins * delta`, without range clipping.
pub fn lattice_entropy(sigma_bins: f64) -> Result<f64> {
    if !(sigma_bins >= 0.0) || !sigma_bins.is_finite() {
        return Err(Error::domain(
            "lattice spread must be finite and nonnegative",
        ));
    }
    if sigma_bins >= LATTICE_SUM_LIMIT {
        // differential entropy plus the leading discretization correction
        let s_sq = sigma_bins * sigma_bins;
        return Ok(0.5 * (2.0 * PI * E * s_sq).log2() + std::f64::consts::LOG2_E / (24.0 * s_sq));
    }
    let reach = (12.0 * sigma_bins).ceil() as i64 + 2;
    let mut h = 0.0;
    for j in -reach..=reach {
        let p = interval_prob((j - 1) as f64, j as f64, sigma_bins);
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    Ok(h)
}

/// Second moment of `X - alpha/delta` where `X` is the ADC symbol (1-based,
/// tails merged into the end symbols) of a centered Gaussian with the given
/// variance.
pub fn adc_second_moment(variance: f64, alpha: f64, delta: f64) -> Result<f64> {
    if !(variance >= 0.0) {
        return Err(Error::domain("variance must be nonnegative"));
    }
    let symbols = alphabet_size(alpha, delta)? as i64;
    let s = variance.sqrt();
    let centre = alpha / delta;
    let mut m2 = 0.0;
    for k in 1..=symbols {
        let lo = if k == 1 {
            f64::NEG_INFINITY
        } else {
            -alpha + (k - 1) as f64 * delta
        };
        let hi = if k == symbols {
            f64::INFINITY
        } else {
            -alpha + k as f64 * delta
        };
        let p = interval_prob(lo, hi, s);
        let offset = k as f64 - centre;
        m2 += p * offset * offset;
    }
    Ok(m2)
}

/// Exact `E|X_A - X_B|` for ADC symbols with merged tails, Alice's data
/// rescaled by `t_q = sqrt(b / a)`. Integrates over Bob's value bin by bin
/// (composite Simpson) with Alice's conditional symbol law in closed form.
pub fn adc_mean_distance(cm: &TwoModeCM, alpha: f64, delta: f64) -> Result<f64> {
    let symbols = alphabet_size(alpha, delta)? as usize;
    let var_a = cm.a() / 2.0;
    let var_b = cm.b() / 2.0;
    let cov = cm.c() / 2.0;
    let t_q = (var_b / var_a).sqrt();
    // t_q X_A given X_B = y is N(kappa y, s^2)
    let kappa = t_q * cov / var_b;
    let s = t_q * (cm.det() / (2.0 * cm.b())).max(0.0).sqrt();
    let sd_b = var_b.sqrt();
    let edge = |k: usize| -alpha + k as f64 * delta;
    let reach = ((12.0 * s) / delta).ceil() as i64 + 2;

    // E|X_A - j| given Y_B = y
    let conditional = |y: f64, j: usize| -> f64 {
        let centre = kappa * y;
        let lo = (((centre + alpha) / delta).floor() as i64 - reach).max(1) as usize;
        let hi = (((centre + alpha) / delta).ceil() as i64 + reach).min(symbols as i64 - 1);
        let cdf = |k: usize| {
            if s == 0.0 {
                if edge(k) >= centre {
                    1.0
                } else {
                    0.0
                }
            } else {
                1.0 - upper_tail((edge(k) - centre) / s)
            }
        };
        let mut acc = 0.0;
        // sum_{k < j} P(X <= k) + sum_{k >= j} P(X > k), dropping terms
        // outside the window where they are 0 or 1
        for k in 1..symbols {
            if k < j {
                if (k as i64) < lo as i64 {
                    continue;
                }
                if k as i64 > hi {
                    acc += (j - k) as f64;
                    break;
                }
                acc += cdf(k);
            } else {
                if k as i64 > hi {
                    break;
                }
                if k < lo {
                    acc += 1.0;
                    continue;
                }
                acc += 1.0 - cdf(k);
            }
        }
        acc
    };

    let width = 20.0 * s + 10.0 * delta;
    let mut total = 0.0;
    for j in 1..=symbols {
        let lo = if j == 1 {
            -alpha - width - 8.0 * sd_b.min(width)
        } else {
            edge(j - 1)
        };
        let hi = if j == symbols {
            alpha + width + 8.0 * sd_b.min(width)
        } else {
            edge(j)
        };
        let panels = 2 * (((hi - lo) / delta).ceil() as usize * 8).max(8);
        let h = (hi - lo) / panels as f64;
        let f = |y: f64| std_normal_pdf(y / sd_b) / sd_b * conditional(y, j);
        let mut acc = f(lo) + f(hi);
        for i in 1..panels {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(lo + i as f64 * h);
        }
        total += acc * h / 3.0;
    }
    Ok(total)
}

/// Expected estimation statistics and entropies for a state, in bins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelStatistics {
    pub pe: PEStatistics,
    /// Shannon entropy of Bob's symbols.
    pub h_b: f64,
    /// `H(X_B | X_A)`, approximated by the entropy of the difference.
    pub h_b_given_a: f64,
    pub mutual_info: f64,
}

/// Statistics of homodyne data drawn from `cm` (shot-noise units) after
/// binning with width `delta` on range `[-alpha, alpha]`.
pub fn expected_statistics(
    cm: &TwoModeCM,
    alpha: f64,
    delta: f64,
    p_pass: f64,
) -> Result<ModelStatistics> {
    alphabet_size(alpha, delta)?;
    let var_a = cm.a() / 2.0;
    let var_b = cm.b() / 2.0;
    let cov = cm.c() / 2.0;
    let t_q = (var_b / var_a).sqrt();
    let spread_sq = (2.0 * var_b - 2.0 * t_q * cov).max(0.0);
    let diff = lattice_difference(spread_sq.sqrt() / delta)?;
    let v_x = adc_second_moment(var_b, alpha, delta)?;
    let h_b = lattice_entropy(var_b.sqrt() / delta)?;
    let h_b_given_a = diff.entropy();
    Ok(ModelStatistics {
        pe: PEStatistics {
            d_pe: diff.mean_abs(),
            v_d_pe: diff.second_moment(),
            v_xa_pe: v_x,
            v_xb_pe: v_x,
            p_pass_emp: p_pass,
            t_q_hat: t_q,
        },
        h_b,
        h_b_given_a,
        mutual_info: (h_b - h_b_given_a).max(0.0),
    })
}

/// Alice-Bob state used by the coherent-attack model.
pub fn model_cm(
    params: &ProtocolParams,
    t_split: f64,
    opts: &CoherentOptions,
) -> Result<TwoModeCM> {
    let cm = shared_cm(params)?;
    if opts.tap_in_model {
        cm.after_bob_loss(t_split)
    } else {
        Ok(cm)
    }
}

struct Prepared {
    fs: FiniteSizeParams,
    stats: ModelStatistics,
    h_b: f64,
}

fn prepare(
    params: &ProtocolParams,
    fs: &FiniteSizeParams,
    opts: &CoherentOptions,
) -> Result<Prepared> {
    let cm = model_cm(params, fs.t_split, opts)?;
    let stats = expected_statistics(&cm, fs.alpha, fs.delta, fs.p_pass)?;
    let d0 = match opts.d0 {
        Some(d0) => d0,
        None => stats.pe.d_pe * opts.d0_safety,
    };
    let h_b = match opts.entropy {
        EntropyConvention::Shannon => stats.h_b,
        EntropyConvention::ResolutionOffset => stats.h_b - fs.delta.log2(),
    };
    Ok(Prepared {
        fs: FiniteSizeParams { d0, ..*fs },
        stats,
        h_b,
    })
}

/// Finite-size rate against coherent attacks, using the model's expected
/// statistics as the estimation outcome.
pub fn key_rate_coherent(
    params: &ProtocolParams,
    fs: &FiniteSizeParams,
    opts: &CoherentOptions,
) -> Result<CoherentRateBreakdown> {
    let prep = prepare(params, fs, opts)?;
    let leak = ec_leakage(
        prep.h_b,
        prep.stats.mutual_info,
        params.beta,
        prep.fs.n_key as f64,
    )?;
    let mut out = key_length_low(&prep.fs, &prep.stats.pe, leak)?;
    out.h_b = Some(prep.h_b);
    out.mutual_info = Some(prep.stats.mutual_info);
    Ok(out)
}

/// Limit of [`key_rate_coherent`] for infinitely long blocks: all signals
/// contribute, `mu -> 0` and the hashing terms vanish per symbol.
pub fn key_rate_coherent_asymptotic(
    params: &ProtocolParams,
    fs: &FiniteSizeParams,
    opts: &CoherentOptions,
) -> Result<CoherentRateBreakdown> {
    let prep = prepare(params, fs, opts)?;
    let fs = &prep.fs;
    let overlap_term = -overlap_c(fs.delta)?.log2();
    let gamma_term = log2_gamma_dev(fs.d0)?;
    let leak = ec_leakage(prep.h_b, prep.stats.mutual_info, params.beta, 1.0)?;
    let unclamped = overlap_term - gamma_term - leak;
    Ok(CoherentRateBreakdown {
        delta: fs.delta,
        d0: fs.d0,
        overlap_term,
        gamma_term: Some(gamma_term),
        mu: Some(0.0),
        nu: None,
        sigma_star_sq: None,
        xi_stat: None,
        big_gamma: energy_gamma(fs.alpha, fs.t_split, fs.m_th)?,
        eps_tilde: 0.0,
        eps_smooth_max: (fs.eps_s - fs.eps_1) / (2.0 * fs.p_pass),
        leak_ec_per_symbol: leak,
        leak_ec: None,
        ell_low: None,
        unclamped_rate: Some(unclamped),
        key_rate: unclamped.max(0.0),
        abort_reason: None,
        pe: Some(prep.stats.pe),
        h_b: Some(prep.h_b),
        mutual_info: Some(prep.stats.mutual_info),
    })
}

/// Evaluates `rate` for every candidate bin width compatible with the ADC
/// range and keeps the best one. Ties (typically all zero) go to the larger
/// unclamped rate.
pub fn best_over_delta<F>(
    fs: &FiniteSizeParams,
    candidates: &[f64],
    rate: F,
) -> Result<CoherentRateBreakdown>
where
    F: Fn(&FiniteSizeParams) -> Result<CoherentRateBreakdown>,
{
    let score =
        |b: &CoherentRateBreakdown| (b.key_rate, b.unclamped_rate.unwrap_or(f64::NEG_INFINITY));
    let mut best: Option<CoherentRateBreakdown> = None;
    for &delta in candidates {
        if alphabet_size(fs.alpha, delta).is_err() {
            continue;
        }
        let out = rate(&FiniteSizeParams { delta, ..*fs })?;
        if best.as_ref().is_none_or(|b| score(&out) > score(b)) {
            best = Some(out);
        }
    }
    best.ok_or_else(|| {
        Error::config(format!(
            "no candidate bin width divides the ADC range 2 alpha = {}",
            2.0 * fs.alpha
        ))
    })
}
