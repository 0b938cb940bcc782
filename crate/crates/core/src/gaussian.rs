//! Gaussian model of the entanglement-in-the-middle link.
//!
//! All variances are in shot-noise units (vacuum variance 1). The EPR source
//! sits between Alice and Bob; each arm is a lossy channel whose environment
//! modes are held by the adversary with a correlated two-mode attack.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used for physicality checks.
pub const PHYSICALITY_TOL: f64 = 1e-9;

/// Channel transmissivity of `distance_km` of fiber with the given loss.
pub fn distance_to_transmissivity(distance_km: f64, attenuation_db_per_km: f64) -> Result<f64> {
    if !(distance_km >= 0.0) || !distance_km.is_finite() {
        return Err(Error::domain(format!(
            "distance must be a nonnegative finite number, got {distance_km}"
        )));
    }
    if !(attenuation_db_per_km >= 0.0) || !attenuation_db_per_km.is_finite() {
        return Err(Error::domain(format!(
            "attenuation must be nonnegative, got {attenuation_db_per_km}"
        )));
    }
    Ok(10f64.powf(-attenuation_db_per_km * distance_km / 10.0))
}

/// Attack variance `1 + T xi / (1 - T)` for excess noise `xi` and total
/// transmissivity `T`. At `T = 1` the channel is the identity and the attack
/// mode never couples in, so the vacuum value is returned.
pub fn attack_variance(total_transmissivity: f64, excess_noise: f64) -> f64 {
    if total_transmissivity >= 1.0 {
        1.0
    } else {
        1.0 + total_transmissivity * excess_noise / (1.0 - total_transmissivity)
    }
}

/// Largest attack correlation compatible with a physical attack state; the
/// optimal (coherent-mode) attack saturates it.
pub fn max_attack_correlation(omega_a: f64, omega_b: f64) -> f64 {
    let first = ((omega_a - 1.0) * (omega_b + 1.0)).max(0.0).sqrt();
    let second = ((omega_a + 1.0) * (omega_b - 1.0)).max(0.0).sqrt();
    first.min(second)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Attack {
    /// Correlated two-mode attack with `g` at its physical maximum.
    #[default]
    Optimal,
    /// Independent entangling cloners, `g = 0`.
    Individual,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub epr_variance: f64,
    pub tau_a: f64,
    pub tau_b: f64,
    pub omega_a: f64,
    pub omega_b: f64,
    /// x-quadrature correlation of the attack modes.
    pub g: f64,
    /// p-quadrature correlation of the attack modes.
    pub g_prime: f64,
    pub excess_noise: f64,
    pub beta: f64,
    pub attenuation_db_per_km: f64,
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.epr_variance,
            self.tau_a,
            self.tau_b,
            self.omega_a,
            self.omega_b,
            self.g,
            self.g_prime,
            self.excess_noise,
            self.beta,
            self.attenuation_db_per_km,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::model("protocol parameters must be finite"));
        }
        if self.epr_variance < 1.0 {
            return Err(Error::model(format!(
                "EPR variance must be >= 1, got {}",
                self.epr_variance
            )));
        }
        for (name, tau) in [("tau_a", self.tau_a), ("tau_b", self.tau_b)] {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::model(format!(
                    "{name} must lie in (0, 1], got {tau}"
                )));
            }
        }
        for (name, omega) in [("omega_a", self.omega_a), ("omega_b", self.omega_b)] {
            if omega < 1.0 {
                return Err(Error::model(format!("{name} must be >= 1, got {omega}")));
            }
        }
        let bound = max_attack_correlation(self.omega_a, self.omega_b);
        for (name, g) in [("g", self.g), ("g_prime", self.g_prime)] {
            if g.abs() > bound * (1.0 + PHYSICALITY_TOL) + PHYSICALITY_TOL {
                return Err(Error::model(format!(
                    "|{name}| = {} exceeds the attack physicality bound {bound}",
                    g.abs()
                )));
            }
        }
        if self.excess_noise < 0.0 {
            return Err(Error::model("excess noise must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::model(format!(
                "reconciliation efficiency must lie in [0, 1], got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Total transmissivity of the two arms.
    pub fn total_transmissivity(&self) -> f64 {
        self.tau_a * self.tau_b
    }
}

/// A symmetric link: the source sits halfway, both arms carry half the
/// distance, so `tau_a = tau_b = sqrt(T)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetricLink {
    pub distance_km: f64,
    pub attenuation_db_per_km: f64,
    pub epr_variance: f64,
    pub excess_noise: f64,
    pub beta: f64,
    pub attack: Attack,
    /// Overrides the attack variance derived from the excess noise.
    pub omega: Option<f64>,
}

impl Default for SymmetricLink {
    fn default() -> Self {
        SymmetricLink {
            distance_km: 0.0,
            attenuation_db_per_km: 0.2,
            epr_variance: 1e5,
            excess_noise: 1e-3,
            beta: 1.0,
            attack: Attack::Optimal,
            omega: None,
        }
    }
}

impl SymmetricLink {
    pub fn at_distance(distance_km: f64) -> Self {
        SymmetricLink {
            distance_km,
            ..Default::default()
        }
    }

    pub fn total_transmissivity(&self) -> Result<f64> {
        distance_to_transmissivity(self.distance_km, self.attenuation_db_per_km)
    }

    pub fn params(&self) -> Result<ProtocolParams> {
        let total = self.total_transmissivity()?;
        let tau = total.sqrt();
        let omega = self
            .omega
            .unwrap_or_else(|| attack_variance(total, self.excess_noise));
        let g = match self.attack {
            Attack::Optimal => max_attack_correlation(omega, omega),
            Attack::Individual => 0.0,
        };
        let params = ProtocolParams {
            epr_variance: self.epr_variance,
            tau_a: tau,
            tau_b: tau,
            omega_a: omega,
            omega_b: omega,
            g,
            g_prime: -g,
            excess_noise: self.excess_noise,
            beta: self.beta,
            attenuation_db_per_km: self.attenuation_db_per_km,
        };
        params.validate()?;
        Ok(params)
    }
}

/// Reduced covariance matrix `[[a I, c Z], [c Z, b I]]` of the Alice-Bob state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoModeCM {
    a: f64,
    b: f64,
    c: f64,
}

impl TwoModeCM {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        let cm = TwoModeCM { a, b, c };
        cm.check()?;
        Ok(cm)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// `ab - c^2`, evaluated with a compensated product so that nearly pure
    /// states with huge variances keep their relative accuracy.
    pub fn det(&self) -> f64 {
        let c_sq = self.c * self.c;
        let c_sq_err = self.c.mul_add(self.c, -c_sq);
        self.a.mul_add(self.b, -c_sq) - c_sq_err
    }

    /// `a^2 + b^2 - 2c^2`, written as `(a - b)^2 + 2 det` to avoid cancellation.
    pub fn delta(&self) -> f64 {
        let diff = self.a - self.b;
        diff * diff + 2.0 * self.det()
    }

    /// State seen after Bob's mode passes a beam splitter of transmissivity
    /// `t` whose other input is vacuum.
    pub fn after_bob_loss(&self, t: f64) -> Result<Self> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::domain(format!(
                "transmissivity must lie in (0, 1], got {t}"
            )));
        }
        TwoModeCM::new(self.a, t * self.b + (1.0 - t), t.sqrt() * self.c)
    }

    /// Allowed shortfall below 1 for symplectic eigenvalues: the configured
    /// tolerance plus the rounding floor of `ab - c^2` when `c` itself was
    /// rounded.
    fn slack(&self) -> f64 {
        PHYSICALITY_TOL + 8.0 * f64::EPSILON * (self.a * self.b).abs()
    }

    fn check(&self) -> Result<()> {
        let TwoModeCM { a, b, c } = *self;
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::model("covariance entries must be finite"));
        }
        if a < 1.0 - PHYSICALITY_TOL || b < 1.0 - PHYSICALITY_TOL {
            return Err(Error::model(format!(
                "local variances must be >= 1, got a = {a}, b = {b}"
            )));
        }
        if self.det() <= 0.0 {
            return Err(Error::model(format!(
                "covariance matrix is not positive definite (a = {a}, b = {b}, c = {c})"
            )));
        }
        let spectrum = symplectic_spectrum_unchecked(self);
        if spectrum.lambda2 < 1.0 - self.slack() {
            return Err(Error::model(format!(
                "uncertainty principle violated: smallest symplectic eigenvalue {}",
                spectrum.lambda2
            )));
        }
        Ok(())
    }
}

/// The covariance matrix shared by Alice and Bob after both channels.
pub fn shared_cm(params: &ProtocolParams) -> Result<TwoModeCM> {
    params.validate()?;
    let ProtocolParams {
        epr_variance: v,
        tau_a,
        tau_b,
        omega_a,
        omega_b,
        g,
        ..
    } = *params;
    let a = tau_a * v + (1.0 - tau_a) * omega_a;
    let b = tau_b * v + (1.0 - tau_b) * omega_b;
    // sqrt(V^2 - 1) as sqrt((V - 1)(V + 1)) keeps precision for V near 1.
    let epr_corr = ((v - 1.0) * (v + 1.0)).sqrt();
    let c = (tau_a * tau_b).sqrt() * epr_corr - g * (1.0 - tau_a).sqrt() * (1.0 - tau_b).sqrt();
    TwoModeCM::new(a, b, c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymplecticSpectrum {
    pub lambda1: f64,
    pub lambda2: f64,
    pub delta: f64,
    pub d_det: f64,
}

fn symplectic_spectrum_unchecked(cm: &TwoModeCM) -> SymplecticSpectrum {
    let d_det = cm.det();
    let delta = cm.delta();
    // delta^2 - 4 D^2 factors exactly as (a - b)^2 ((a - b)^2 + 4 D).
    let diff_sq = (cm.a - cm.b) * (cm.a - cm.b);
    let disc = (diff_sq * (diff_sq + 4.0 * d_det)).max(0.0).sqrt();
    let lambda1_sq = 0.5 * (delta + disc);
    let lambda2_sq = if lambda1_sq > 0.0 {
        d_det * d_det / lambda1_sq
    } else {
        0.0
    };
    SymplecticSpectrum {
        lambda1: lambda1_sq.sqrt(),
        lambda2: lambda2_sq.sqrt(),
        delta,
        d_det,
    }
}

/// Symplectic eigenvalues `lambda1 >= lambda2` of the two-mode matrix.
pub fn symplectic_eigenvalues(cm: &TwoModeCM) -> Result<SymplecticSpectrum> {
    let d_det = cm.det();
    let delta = cm.delta();
    if delta * delta < 4.0 * d_det * d_det * (1.0 - PHYSICALITY_TOL) {
        return Err(Error::Numerical(format!(
            "negative discriminant in symplectic spectrum (delta = {delta}, D = {d_det})"
        )));
    }
    Ok(symplectic_spectrum_unchecked(cm))
}

/// Symplectic eigenvalue of Alice's mode conditioned on Bob's homodyne
/// outcome, `sqrt(a (a - c^2 / b))`.
pub fn conditional_eigenvalue_homodyne(cm: &TwoModeCM) -> Result<f64> {
    if !(cm.b > 0.0) {
        return Err(Error::domain("Bob's variance must be positive"));
    }
    // a - c^2/b == det / b
    let lambda3_sq = cm.a * cm.det() / cm.b;
    let lambda3 = lambda3_sq.max(0.0).sqrt();
    if lambda3 < 1.0 - cm.slack() {
        return Err(Error::model(format!(
            "conditional state is unphysical: lambda3 = {lambda3}"
        )));
    }
    Ok(lambda3)
}

/// Entropy function `G(x) = (x+1) log2(x+1) - x log2 x` in bits.
pub fn g_von_neumann(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain(format!("G(x) requires x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok((x + 1.0) * (x + 1.0).log2() - x * x.log2())
}

/// `G((lambda - 1) / 2)` with round-off below 1 clamped to zero.
pub(crate) fn entropy_of_eigenvalue(lambda: f64) -> Result<f64> {
    g_von_neumann(((lambda - 1.0) / 2.0).max(0.0))
}
