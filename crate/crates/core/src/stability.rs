//! Mean-drift stability test and the four-phase cubic analysis.
//!
//! At large levels the phase process cycles `1 -> 2 -> ... -> m -> 1`
//! deterministically, spending an `Exp(v_i)` time in phase `i`, where
//! `v_i = lambda + mu_i` for working phases and `v_m = lambda / 2`. The
//! long-run service rate is the sojourn-weighted mean of the `mu_i`, and the
//! queue is stable when it exceeds `lambda`.

use serde::Serialize;

use crate::model::VacationModel;
use crate::{Error, Result};

/// Tolerance on `4b - a - 1` below which the quadratic case is reported.
pub const QUADRATIC_CASE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityProfile {
    pub arrival_rate: f64,
    /// Total outflow rate per phase at large levels.
    pub total_rates: Vec<f64>,
    /// Fraction of time spent in each phase at large levels.
    pub sojourn_weights: Vec<f64>,
    pub mean_service_rate: f64,
    pub stable: bool,
}

/// Drift profile of `model`'s phase structure evaluated at arrival rate
/// `lambda` (the model's own arrival rate is ignored).
pub fn stability_profile(model: &VacationModel, lambda: f64) -> StabilityProfile {
    let mu = model.service_rates();
    let m = mu.len();
    let total_rates: Vec<f64> = mu
        .iter()
        .enumerate()
        .map(|(i, &r)| if i + 1 == m { lambda / 2.0 } else { lambda + r })
        .collect();
    let inv_total: f64 = total_rates.iter().map(|v| 1.0 / v).sum();
    let sojourn_weights: Vec<f64> = total_rates.iter().map(|v| (1.0 / v) / inv_total).collect();
    let mean_service_rate = sojourn_weights.iter().zip(&mu).map(|(w, r)| w * r).sum();
    StabilityProfile {
        arrival_rate: lambda,
        total_rates,
        sojourn_weights,
        mean_service_rate,
        stable: lambda < mean_service_rate,
    }
}

pub fn is_stable(model: &VacationModel) -> bool {
    stability_profile(model, model.arrival_rate()).stable
}

/// Normalized drift `sum_i (k - d_i)/(k + d_i) + 2` at load `k = lambda/mu`;
/// negative exactly when `lambda < g(lambda)`. Increasing in `k`.
fn drift_indicator(decay: &[f64], k: f64) -> f64 {
    decay.iter().map(|d| (k - d) / (k + d)).sum::<f64>() + 2.0
}

/// The load `lambda / mu` at which the drift vanishes, or `None` when no
/// load is stable (three phases: two services cannot outpace the two
/// customers every vacation brings).
pub fn critical_load(decay: &[f64]) -> Option<f64> {
    if drift_indicator(decay, f64::MIN_POSITIVE) >= 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while drift_indicator(decay, hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if drift_indicator(decay, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Stability polynomial of the five-phase model in `k = lambda / mu`:
/// `k^2 (ab + ac + bc + a + b + c) + 2 k^3 (a + b + c + 1) + 3 k^4 - abc`.
/// Negative exactly on the stable side.
pub fn stability_polynomial_5ph(model: &VacationModel, lambda: f64) -> Result<f64> {
    if model.phase_count() != 5 {
        return Err(Error::WrongPhaseCount {
            expected: 5,
            actual: model.phase_count(),
        });
    }
    let d = model.decay();
    let (a, b, c) = (d[1], d[2], d[3]);
    Ok(polynomial_5ph(a, b, c, lambda / model.base_rate()))
}

pub(crate) fn polynomial_5ph(a: f64, b: f64, c: f64, k: f64) -> f64 {
    let k2 = k * k;
    k2 * (a * b + a * c + b * c + a + b + c) + 2.0 * k2 * k * (a + b + c + 1.0) + 3.0 * k2 * k2
        - a * b * c
}

fn check_four_phase(a: f64, b: f64, mu: f64) -> Result<()> {
    if !(0.0 < b && b < a && a < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < b < a < 1, got a = {a}, b = {b}"
        )));
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mu must be positive, got {mu}"
        )));
    }
    Ok(())
}

/// `g(lambda) - b mu` for the four-phase model. Negative whenever the
/// model is stable.
pub fn theorem2_gap(a: f64, b: f64, mu: f64, lambda: f64) -> Result<f64> {
    check_four_phase(a, b, mu)?;
    let model = VacationModel::four_phase(lambda, mu, a, b)?;
    Ok(stability_profile(&model, lambda).mean_service_rate - b * mu)
}

/// Coefficients of the four-phase cubic
/// `f(l) = (4b-a-1) l^3 + 2mu(ab+b-a+2b^2) l^2 + 3mu^2 b^2 (a+1) l + 2ab^2 mu^3`,
/// highest power first. `g(l) - b mu` has the opposite sign of `f(l)`.
pub fn cubic_coefficients(a: f64, b: f64, mu: f64) -> [f64; 4] {
    [
        4.0 * b - a - 1.0,
        2.0 * mu * (a * b + b - a + 2.0 * b * b),
        3.0 * mu * mu * b * b * (a + 1.0),
        2.0 * a * b * b * mu * mu * mu,
    ]
}

pub fn cubic_f(a: f64, b: f64, mu: f64, lambda: f64) -> f64 {
    cubic_coefficients(a, b, mu)
        .iter()
        .fold(0.0, |acc, c| acc * lambda + c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CubicCase {
    /// `4b - a - 1 = 0`
    Quadratic,
    /// `4b - a - 1 < 0`
    NegativeCubic,
    /// `4b - a - 1 > 0`
    PositiveCubic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem2Report {
    pub a: f64,
    pub b: f64,
    pub mu: f64,
    /// Highest power first.
    pub f_coefficients: [f64; 4],
    /// `sqrt(9a^2b^2 - 4a^2b - 14ab^2 + 4a^2 - 4ab + 9b^2)`; `None` when the
    /// radicand is negative and the cofactor quadratic has complex roots.
    pub discriminant_a: Option<f64>,
    /// `3ab - 2a + 3b`, the (scaled) linear coefficient of the quadratic
    /// left after dividing out `l + b mu`.
    pub cofactor_linear: f64,
    pub case: CubicCase,
    /// Real roots of `f`, ascending.
    pub roots: Vec<f64>,
}

impl Theorem2Report {
    pub fn largest_root(&self) -> f64 {
        *self.roots.last().expect("-b mu is always a root")
    }

    pub fn all_roots_negative(&self) -> bool {
        self.roots.iter().all(|r| *r < 0.0)
    }
}

/// Root structure of the four-phase cubic. `-b mu` is factored out exactly
/// and the remaining quadratic `(4b-a-1) l^2 + mu(3ab-2a+3b) l + 2ab mu^2`
/// is solved in cancellation-free form.
pub fn theorem2_report(a: f64, b: f64, mu: f64) -> Result<Theorem2Report> {
    check_four_phase(a, b, mu)?;
    let f_coefficients = cubic_coefficients(a, b, mu);
    let lead = f_coefficients[0];
    let cofactor_linear = 3.0 * a * b - 2.0 * a + 3.0 * b;
    let radicand = 9.0 * a * a * b * b - 4.0 * a * a * b - 14.0 * a * b * b + 4.0 * a * a
        - 4.0 * a * b
        + 9.0 * b * b;
    let discriminant_a = (radicand >= 0.0).then(|| radicand.sqrt());

    let qa = lead;
    let qb = mu * cofactor_linear;
    let qc = 2.0 * a * b * mu * mu;

    let mut roots = vec![-b * mu];
    let case = if lead.abs() <= QUADRATIC_CASE_TOL {
        roots.push(-qc / qb);
        CubicCase::Quadratic
    } else {
        if let Some(sq) = discriminant_a {
            let q = -0.5 * (qb + qb.signum() * mu * sq);
            roots.push(q / qa);
            roots.push(qc / q);
        }
        if lead < 0.0 {
            CubicCase::NegativeCubic
        } else {
            CubicCase::PositiveCubic
        }
    };
    roots.sort_by(f64::total_cmp);
    Ok(Theorem2Report {
        a,
        b,
        mu,
        f_coefficients,
        discriminant_a,
        cofactor_linear,
        case,
        roots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// The closed fraction for four phases, written out term by term.
    fn theorem1_fraction(mu: f64, a: f64, b: f64, l: f64) -> f64 {
        let num = mu / (l + mu) + a * mu / (l + a * mu) + b * mu / (l + b * mu);
        let den = 1.0 / (l + mu) + 1.0 / (l + a * mu) + 1.0 / (l + b * mu) + 2.0 / l;
        num / den
    }

    #[test]
    fn closed_fraction_matches_weighted_average() {
        let model = VacationModel::four_phase(0.3, 1.0, 0.9, 0.5).unwrap();
        let p = stability_profile(&model, 0.3);
        assert!((p.mean_service_rate - theorem1_fraction(1.0, 0.9, 0.5, 0.3)).abs() < 1e-12);
        assert_eq!(p.total_rates, vec![1.3, 0.3 + 0.9, 0.8, 0.15]);
    }

    #[test]
    fn small_load_is_stable() {
        let model = VacationModel::five_phase(1.0, 1.0, 0.99, 0.98, 0.1).unwrap();
        for lambda in [1e-3, 1e-6, 1e-9] {
            let p = stability_profile(&model, lambda);
            assert!(p.mean_service_rate < 10.0 * lambda);
            assert!(p.stable);
        }
    }

    #[test]
    fn three_phases_are_never_stable() {
        assert_eq!(critical_load(&[1.0, 0.5]), None);
        let model = VacationModel::new(1e-4, 1.0, vec![1.0, 0.5]).unwrap();
        assert!(!is_stable(&model));
    }

    #[test]
    fn critical_load_matches_polynomial_root() {
        let k = critical_load(&[1.0, 0.99, 0.98, 0.1]).unwrap();
        assert!(polynomial_5ph(0.99, 0.98, 0.1, k).abs() < 1e-12);
        assert!((0.15..0.152).contains(&k));
    }

    #[test]
    fn polynomial_examples() {
        let model = VacationModel::five_phase(1.0, 100.0, 0.99, 0.98, 0.1).unwrap();
        assert_eq!(polynomial_5ph(0.99, 0.98, 0.1, 0.0), -0.99 * 0.98 * 0.1);
        // load 0.1 is inside the vacation system's stable range
        assert!(stability_polynomial_5ph(&model, 10.0).unwrap() < 0.0);
        let four = VacationModel::four_phase(1.0, 1.0, 0.9, 0.5).unwrap();
        assert_eq!(
            stability_polynomial_5ph(&four, 1.0),
            Err(Error::WrongPhaseCount {
                expected: 5,
                actual: 4
            })
        );
    }

    #[test]
    fn polynomial_sign_follows_drift_on_fine_grid() {
        let model = VacationModel::five_phase(1.0, 1.0, 0.99, 0.98, 0.1).unwrap();
        for i in 1..=5000 {
            let k = i as f64 * 1e-4;
            let p = stability_polynomial_5ph(&model, k).unwrap();
            let profile = stability_profile(&model, k);
            assert_eq!(p < 0.0, profile.stable, "k = {k}");
        }
    }

    #[test]
    fn gap_examples() {
        let gap = theorem2_gap(0.9, 0.5, 1.0, 0.2).unwrap();
        assert!(gap < 0.0);
        let near_zero = theorem2_gap(0.9, 0.5, 1.0, 1e-9).unwrap();
        assert!((near_zero + 0.5).abs() < 1e-8);
        assert!(theorem2_gap(0.5, 0.9, 1.0, 0.2).is_err());
    }

    #[test]
    fn report_cases() {
        let r = theorem2_report(0.9, 0.475, 1.0).unwrap();
        assert_eq!(r.case, CubicCase::Quadratic);
        assert_eq!(r.roots.len(), 2);
        assert!(r.all_roots_negative());
        let b = 0.475;
        let expected = -b * (4.0 * b - 1.0) / (6.0 * b * b - 4.0 * b + 1.0);
        assert!(r.roots.iter().any(|x| (x - expected).abs() < 1e-12));

        let r = theorem2_report(0.9, 0.4, 1.0).unwrap();
        assert_eq!(r.case, CubicCase::NegativeCubic);
        assert_eq!(r.roots.len(), 3);

        let r = theorem2_report(0.5, 0.45, 1.0).unwrap();
        assert_eq!(r.case, CubicCase::PositiveCubic);
        assert!(r.cofactor_linear > 0.0);
        assert!(r.all_roots_negative());
        for i in 1..=100_000 {
            let lambda = i as f64 * 1e-4;
            assert!(cubic_f(0.5, 0.45, 1.0, lambda) > 0.0);
        }
    }

    #[test]
    fn negative_cubic_roots_match_displayed_formula() {
        let (a, b, mu) = (0.9, 0.4, 2.0);
        let r = theorem2_report(a, b, mu).unwrap();
        let big_a = r.discriminant_a.unwrap();
        let lead = 4.0 * b - a - 1.0;
        let plus = -mu * (3.0 * a * b - 2.0 * a + 3.0 * b + big_a) / (2.0 * lead);
        let minus = -mu * (3.0 * a * b - 2.0 * a + 3.0 * b - big_a) / (2.0 * lead);
        for x in [plus, minus, -b * mu] {
            assert!(
                r.roots.iter().any(|y| (x - y).abs() < 1e-12 * mu),
                "{x} not in {:?}",
                r.roots
            );
        }
        assert_eq!(r.largest_root(), plus);
    }

    proptest! {
        #[test]
        fn weights_are_normalized(
            lambda in 1e-3f64..50.0,
            mu in 1e-2f64..100.0,
            mut tail in proptest::collection::vec(0.01f64..0.99, 2..7),
        ) {
            tail.sort_by(|x, y| y.total_cmp(x));
            tail.dedup();
            let mut decay = vec![1.0];
            decay.extend(tail);
            let model = VacationModel::new(lambda, mu, decay).unwrap();
            let p = stability_profile(&model, lambda);
            let total: f64 = p.sojourn_weights.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(p.sojourn_weights.iter().all(|w| *w > 0.0));
            prop_assert!(p.mean_service_rate < mu);
        }

        #[test]
        fn profile_is_scale_covariant(
            lambda in 1e-3f64..5.0,
            mu in 0.1f64..10.0,
            t in 0.01f64..100.0,
        ) {
            let model = VacationModel::five_phase(lambda, mu, 0.99, 0.98, 0.1).unwrap();
            let p = stability_profile(&model, lambda);
            let q = stability_profile(&model.scaled(t).unwrap(), lambda * t);
            prop_assert!((q.mean_service_rate - t * p.mean_service_rate).abs() <= 1e-12 * t * mu);
            prop_assert_eq!(p.stable, q.stable);
        }

        #[test]
        fn cubic_structure(b in 0.001f64..0.999, frac in 0.001f64..0.999, mu in 0.01f64..100.0) {
            let a = b + frac * (1.0 - b);
            prop_assume!(b < a && a < 1.0);
            let scale = mu * mu * mu;
            prop_assert!((cubic_f(a, b, mu, 0.0) - 2.0 * a * b * b * scale).abs() <= 1e-12 * scale);
            prop_assert!(cubic_f(a, b, mu, -b * mu).abs() <= 1e-9 * scale);
            let report = theorem2_report(a, b, mu).unwrap();
            for r in &report.roots {
                prop_assert!(cubic_f(a, b, mu, *r).abs() < 1e-6 * scale);
            }
            if report.case == CubicCase::PositiveCubic {
                prop_assert!(report.all_roots_negative());
                prop_assert!(report.cofactor_linear > 0.0);
            }
        }
    }
}
