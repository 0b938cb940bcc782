//! Asymptotic key rate under collective attacks with reverse reconciliation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{
    conditional_eigenvalue_homodyne, entropy_of_eigenvalue, shared_cm, symplectic_eigenvalues,
    ProtocolParams, TwoModeCM,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectiveRateBreakdown {
    pub mutual_info: f64,
    pub s_ab: f64,
    pub s_a_given_b: f64,
    pub holevo: f64,
    /// `beta I - chi` before clamping at zero.
    pub unclamped_rate: f64,
    pub key_rate: f64,
}

/// Shannon mutual information between Alice's and Bob's homodyne outcomes.
pub fn mutual_information(cm: &TwoModeCM) -> Result<f64> {
    let det = cm.det();
    if !(cm.b() > 0.0) || !(det > 0.0) {
        return Err(Error::domain(
            "mutual information needs b > 0 and a - c^2/b > 0",
        ));
    }
    // a / (a - c^2/b) == ab / det
    Ok(0.5 * (cm.a() * cm.b() / det).log2())
}

/// `S(AB)` and `S(A|B)` for the purified state, in bits.
fn eve_entropies(cm: &TwoModeCM) -> Result<(f64, f64)> {
    let spectrum = symplectic_eigenvalues(cm)?;
    let lambda3 = conditional_eigenvalue_homodyne(cm)?;
    let s_ab = entropy_of_eigenvalue(spectrum.lambda1)? + entropy_of_eigenvalue(spectrum.lambda2)?;
    let s_a_given_b = entropy_of_eigenvalue(lambda3)?;
    Ok((s_ab, s_a_given_b))
}

/// Holevo bound on Eve's information about Bob's data.
pub fn holevo_b_e(cm: &TwoModeCM) -> Result<f64> {
    let (s_ab, s_a_given_b) = eve_entropies(cm)?;
    Ok(s_ab - s_a_given_b)
}

pub fn key_rate_collective(params: &ProtocolParams) -> Result<CollectiveRateBreakdown> {
    let cm = shared_cm(params)?;
    let mutual_info = mutual_information(&cm)?;
    let (s_ab, s_a_given_b) = eve_entropies(&cm)?;
    let holevo = s_ab - s_a_given_b;
    let unclamped_rate = params.beta * mutual_info - holevo;
    Ok(CollectiveRateBreakdown {
        mutual_info,
        s_ab,
        s_a_given_b,
        holevo,
        unclamped_rate,
        key_rate: unclamped_rate.max(0.0),
    })
}

/// Repeaterless capacity bound `-log2(1 - T)` of a pure-loss channel.
/// Returns infinity for a lossless channel.
pub fn plob_bound(transmissivity: f64) -> Result<f64> {
    if transmissivity.is_nan() || transmissivity <= 0.0 {
        return Err(Error::domain(format!(
            "transmissivity must be positive, got {transmissivity}"
        )));
    }
    if transmissivity >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-(-transmissivity).ln_1p() / std::f64::consts::LN_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{g_von_neumann, SymmetricLink};

    fn half_cm() -> TwoModeCM {
        TwoModeCM::new(1.5, 1.5, 3f64.sqrt() / 2.0).unwrap()
    }

    #[test]
    fn mutual_information_examples() {
        assert!((mutual_information(&half_cm()).unwrap() - 0.5 * 1.5f64.log2()).abs() < 1e-12);
        assert!((mutual_information(&half_cm()).unwrap() - 0.2925).abs() < 1e-4);
        let uncorrelated = TwoModeCM::new(3.0, 2.0, 0.0).unwrap();
        assert_eq!(mutual_information(&uncorrelated).unwrap(), 0.0);
        let v: f64 = 1e5;
        let pure = TwoModeCM::new(v, v, (v * v - 1.0).sqrt()).unwrap();
        assert!((mutual_information(&pure).unwrap() - v.log2()).abs() < 1e-4);
    }

    #[test]
    fn holevo_examples() {
        let v: f64 = 1e3;
        let pure = TwoModeCM::new(v, v, (v * v - 1.0).sqrt()).unwrap();
        assert!(holevo_b_e(&pure).unwrap().abs() < 1e-6);

        let x = (1.5f64.sqrt() - 1.0) / 2.0;
        let expected = g_von_neumann(x).unwrap();
        assert!((holevo_b_e(&half_cm()).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.525).abs() < 1e-3, "{expected}");

        // No correlation: lambda = {a, b}, lambda3 = a.
        let cm = TwoModeCM::new(3.0, 2.0, 0.0).unwrap();
        let expected = g_von_neumann(0.5).unwrap();
        assert!((holevo_b_e(&cm).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn lossless_rate_is_log_v() {
        let link = SymmetricLink {
            excess_noise: 0.0,
            ..SymmetricLink::at_distance(0.0)
        };
        let rate = key_rate_collective(&link.params().unwrap()).unwrap();
        assert!((rate.key_rate - 1e5f64.log2()).abs() < 1e-3, "{rate:?}");
    }

    #[test]
    fn half_transmission_rate_clamps_to_zero() {
        let params = ProtocolParams {
            epr_variance: 2.0,
            tau_a: 0.5,
            tau_b: 0.5,
            omega_a: 1.0,
            omega_b: 1.0,
            g: 0.0,
            g_prime: 0.0,
            excess_noise: 0.0,
            beta: 1.0,
            attenuation_db_per_km: 0.2,
        };
        let rate = key_rate_collective(&params).unwrap();
        assert_eq!(rate.key_rate, 0.0);
        assert!((rate.unclamped_rate - (0.2925 - 0.525)).abs() < 2e-3);
    }

    #[test]
    fn zero_beta_gives_zero_rate() {
        for d in [0.0, 3.0, 12.0] {
            let link = SymmetricLink {
                beta: 0.0,
                ..SymmetricLink::at_distance(d)
            };
            assert_eq!(
                key_rate_collective(&link.params().unwrap())
                    .unwrap()
                    .key_rate,
                0.0
            );
        }
    }

    #[test]
    fn plob_examples() {
        assert!((plob_bound(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((plob_bound(0.9).unwrap() - 10f64.log2()).abs() < 1e-12);
        assert!((plob_bound(0.99).unwrap() - 6.6439).abs() < 1e-4);
        assert_eq!(plob_bound(1.0).unwrap(), f64::INFINITY);
        assert!(plob_bound(0.0).is_err());
    }
}
