//! Closed-form regret and latency bounds.
//!
//! All functions are pure; `D` is the feasible-set diameter, `L` the
//! gradient-Lipschitz constant and `σ²` the gradient variance bound.

use crate::{Error, Result};

/// Serial regret bound `ψ(σ², m) = 2D²L + 2Dσ√m`.
pub fn serial_psi_bound(diameter: f64, smoothness: f64, variance: f64, m: u64) -> f64 {
    2.0 * diameter * diameter * smoothness + 2.0 * diameter * libm::sqrt(variance) * libm::sqrt(m as f64)
}

/// Synchronous mini-batch bound `(b+μ)·ψ(σ²/b, ⌈m/(b+μ)⌉)`.
pub fn dmb_regret_bound(b: u64, mu: u64, diameter: f64, smoothness: f64, variance: f64, m: u64) -> f64 {
    assert!(b >= 1, "batch size must be at least one");
    let period = b + mu;
    let rounds = m.div_ceil(period);
    period as f64 * serial_psi_bound(diameter, smoothness, variance / b as f64, rounds)
}

/// Inputs that can be dropped around one master update: `M(T + 2τ_c + τ_u)`.
pub fn mawo_mu_bound(rate: u64, send_period: f64, max_latency: f64, update_time: f64) -> f64 {
    rate as f64 * (send_period + 2.0 * max_latency + update_time)
}

/// Time for a predictor to reach every node of a good component: `(t+2)d'`.
pub fn propagation_bound(send_period: f64, diameter: u64) -> f64 {
    (send_period + 2.0) * diameter as f64
}

/// Examples a good component processes before every node updates again:
/// `b + 2(t+2)d'M`.
pub fn good_period_examples_bound(b: u64, send_period: f64, diameter: u64, rate: u64) -> f64 {
    b as f64 + 2.0 * propagation_bound(send_period, diameter) * rate as f64
}

/// Both forms of the asynchronous regret bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmbBound {
    /// `μ = b + 2(t+2)d'M`.
    pub period: f64,
    /// `Σ_{j=1}^{⌈m/μ⌉} (μ/j)·ψ(σ²/b, j)`.
    pub exact_sum: f64,
    /// `2D²Lμ(1 + ln m) + 4Dσ√((1 + 2(t+2)d'M/b)·m)`.
    pub closed_form: f64,
}

/// Evaluates the asynchronous regret bound for `m ≥ 1` good-period examples.
///
/// The closed form dominates the exact sum whenever `m ≥ μ`, which is always
/// the case for examples collected in whole good periods.
#[allow(clippy::too_many_arguments)]
pub fn admb_regret_bound(
    b: u64,
    send_period: f64,
    diameter: u64,
    rate: u64,
    set_diameter: f64,
    smoothness: f64,
    variance: f64,
    m: u64,
) -> AdmbBound {
    assert!(b >= 1 && m >= 1, "batch size and example count must be positive");
    let period = good_period_examples_bound(b, send_period, diameter, rate);
    let terms = libm::ceil(m as f64 / period) as u64;
    let exact_sum = (1..=terms)
        .map(|j| period / j as f64 * serial_psi_bound(set_diameter, smoothness, variance / b as f64, j))
        .sum();
    let extra = 2.0 * propagation_bound(send_period, diameter) * rate as f64;
    let closed_form = 2.0 * set_diameter * set_diameter * smoothness * period * (1.0 + libm::log(m as f64))
        + 4.0 * set_diameter * libm::sqrt(variance) * libm::sqrt((1.0 + extra / b as f64) * m as f64);
    AdmbBound {
        period,
        exact_sum,
        closed_form,
    }
}

/// Batch size `⌈m^ρ⌉` (at least one) for `ρ ∈ (0, 1/2)`.
pub fn batch_size_policy(m: u64, rho: f64) -> Result<u64> {
    if !(rho > 0.0 && rho < 0.5) {
        return Err(Error::config(
            "batch exponent rho must lie in the open interval (0, 1/2)",
        ));
    }
    let x = libm::pow(m as f64, rho);
    // Exact integer powers such as 10^4^(1/4) come back as 10.000000000000002.
    let r = libm::round(x);
    let b = if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r
    } else {
        libm::ceil(x)
    };
    Ok((b as u64).max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn psi_examples() {
        assert_eq!(serial_psi_bound(1.5, 2.0, 0.0, 12345), 2.0 * 1.5 * 1.5 * 2.0);
        assert_eq!(serial_psi_bound(1.0, 1.0, 1.0, 0), 2.0);
        assert_eq!(serial_psi_bound(1.0, 1.0, 1.0, 100), 22.0);
    }

    #[test]
    fn dmb_examples() {
        for m in [1, 7, 1000] {
            assert_eq!(
                dmb_regret_bound(1, 0, 2.0, 1.0, 0.5, m),
                serial_psi_bound(2.0, 1.0, 0.5, m)
            );
        }
        // 100 · (2 + 2·√(1/100)·√100)
        assert!((dmb_regret_bound(100, 0, 1.0, 1.0, 1.0, 10_000) - 400.0).abs() < 1e-9);
    }

    #[test]
    fn dmb_bound_is_monotone_in_mu_on_a_grid() {
        for b in [1u64, 4, 32] {
            for m in [10u64, 1_000, 100_000] {
                let mut prev = 0.0;
                for mu in 0..60 {
                    let v = dmb_regret_bound(b, mu, 2.0, 1.0, 0.5, m);
                    assert!(v >= prev - 1e-9, "b={b} m={m} mu={mu}");
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn mawo_mu_examples() {
        assert_eq!(mawo_mu_bound(0, 3.0, 1.0, 1.0), 0.0);
        assert_eq!(mawo_mu_bound(5, 2.0, 1.0, 1.0), 25.0);
        assert_eq!(mawo_mu_bound(7, 1.5, 0.0, 0.0), 7.0 * 1.5);
    }

    #[test]
    fn propagation_examples() {
        assert_eq!(propagation_bound(4.0, 0), 0.0);
        assert_eq!(propagation_bound(1.0, 2), 6.0);
        assert_eq!(propagation_bound(3.0, 4), 20.0);
    }

    #[test]
    fn good_period_examples() {
        assert_eq!(good_period_examples_bound(10, 1.0, 2, 0), 10.0);
        assert_eq!(good_period_examples_bound(10, 1.0, 2, 5), 70.0);
        assert_eq!(good_period_examples_bound(10, 1.0, 0, 5), 10.0);
    }

    #[test]
    fn admb_single_period_has_one_term() {
        let bnd = admb_regret_bound(10, 1.0, 2, 5, 1.0, 1.0, 1.0, 70);
        assert_eq!(bnd.period, 70.0);
        assert!((bnd.exact_sum - 70.0 * serial_psi_bound(1.0, 1.0, 0.1, 1)).abs() < 1e-12);
    }

    #[test]
    fn admb_closed_form_example() {
        let bnd = admb_regret_bound(10, 1.0, 2, 5, 1.0, 1.0, 1.0, 100);
        let expected = 2.0 * 70.0 * (1.0 + 100f64.ln()) + 4.0 * (700f64).sqrt();
        assert!((bnd.closed_form - expected).abs() < 1e-9);
        assert!((bnd.closed_form - 890.5).abs() < 0.1);
        // Two terms: 70·ψ(0.1, 1) + 35·ψ(0.1, 2)
        let sum = 70.0 * (2.0 + 2.0 * 0.1f64.sqrt()) + 35.0 * (2.0 + 2.0 * 0.1f64.sqrt() * 2f64.sqrt());
        assert!((bnd.exact_sum - sum).abs() < 1e-9);
    }

    #[test]
    fn batch_policy_examples() {
        assert_eq!(batch_size_policy(1, 0.3).unwrap(), 1);
        assert_eq!(batch_size_policy(100_000, 0.3).unwrap(), 32);
        assert_eq!(batch_size_policy(10_000, 0.25).unwrap(), 10);
        assert!(batch_size_policy(100, 0.5).is_err());
        assert!(batch_size_policy(100, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn psi_is_monotone_in_m_and_sigma(
            d in 0.1f64..5.0, l in 0.1f64..3.0, s in 0.0f64..4.0, m in 0u64..1_000_000,
            dm in 0u64..1000, ds in 0.0f64..1.0,
        ) {
            let base = serial_psi_bound(d, l, s * s, m);
            prop_assert!(serial_psi_bound(d, l, s * s, m + dm) >= base);
            prop_assert!(serial_psi_bound(d, l, (s + ds) * (s + ds), m) >= base);
        }

        #[test]
        fn admb_sum_is_dominated_by_closed_form(
            b in 1u64..200, t in 0.1f64..5.0, dp in 0u64..16, rate in 0u64..40,
            d in 0.1f64..5.0, l in 0.1f64..3.0, s in 0.0f64..3.0, periods in 1u64..2000,
        ) {
            let mu = good_period_examples_bound(b, t, dp, rate);
            let m = (periods as f64 * mu).ceil() as u64;
            let bnd = admb_regret_bound(b, t, dp, rate, d, l, s * s, m);
            prop_assert!(bnd.exact_sum <= bnd.closed_form * (1.0 + 1e-12));
        }
    }
}
