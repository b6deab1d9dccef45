//! Seeded invariant suites behind `vacq verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::model::VacationModel;
use crate::oracles::{simulate, truncated_direct_solve, SimulationConfig};
use crate::qbd::{solve_model, SolverOptions};
use crate::stability::{
    critical_load, cubic_f, polynomial_5ph, stability_profile, theorem2_gap, theorem2_report,
};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    pub max_level: usize,
    pub horizon: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub checks: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn total_failures(&self) -> usize {
        self.suites.iter().map(|s| s.failures).sum()
    }
}

struct Tally {
    name: &'static str,
    checks: usize,
    failures: usize,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checks: 0,
            failures: 0,
        }
    }

    fn check(&mut self, ok: bool) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
        }
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            name: self.name,
            checks: self.checks,
            failures: self.failures,
        }
    }
}

/// Uniform point of `{0 < b < a < 1}`.
fn sample_ab(rng: &mut ChaCha8Rng) -> (f64, f64) {
    loop {
        let (u, v): (f64, f64) = (rng.random(), rng.random());
        let (a, b) = (u.max(v), u.min(v));
        if 0.0 < b && b < a && a < 1.0 {
            return (a, b);
        }
    }
}

pub fn run_verification(options: &VerifyOptions) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut suites = Vec::new();

    let mut gap = Tally::new("theorem2-gap");
    let mut sign = Tally::new("theorem2-sign");
    for _ in 0..options.samples {
        let (a, b) = sample_ab(&mut rng);
        let limit = critical_load(&[1.0, a, b]).expect("four phases have a stable range");
        for _ in 0..20 {
            let lambda = limit * (1.0 - rng.random::<f64>());
            let g = theorem2_gap(a, b, 1.0, lambda)?;
            gap.check(g < 0.0);
            let f = cubic_f(a, b, 1.0, lambda);
            if f.abs() > 1e-12 {
                sign.check(g.signum() == -f.signum());
            }
        }
    }
    suites.push(gap.finish());
    suites.push(sign.finish());

    let mut cubic = Tally::new("cubic-structure");
    for _ in 0..options.samples {
        let (a, b) = sample_ab(&mut rng);
        let mu = rng.random_range(0.01..100.0);
        let scale = mu * mu * mu;
        cubic.check((cubic_f(a, b, mu, 0.0) - 2.0 * a * b * b * scale).abs() <= 1e-12 * scale);
        cubic.check(cubic_f(a, b, mu, -b * mu).abs() <= 1e-9 * scale);
        let report = theorem2_report(a, b, mu)?;
        for r in &report.roots {
            cubic.check(cubic_f(a, b, mu, *r).abs() < 1e-6 * scale);
        }
    }
    suites.push(cubic.finish());

    let mut poly = Tally::new("polynomial-drift");
    for _ in 0..options.samples {
        let mut d: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        d.sort_by(|x, y| y.total_cmp(x));
        let [a, b, c] = d;
        if !(0.0 < c && c < b && b < a && a < 1.0) {
            continue;
        }
        let mu = rng.random_range(0.1..100.0);
        let limit = critical_load(&[1.0, a, b, c]).expect("five phases have a stable range");
        let lambda = rng.random_range(0.0..2.0 * limit) * mu;
        if lambda <= 0.0 {
            continue;
        }
        let model = VacationModel::five_phase(lambda, mu, a, b, c)?;
        let p = polynomial_5ph(a, b, c, lambda / mu);
        if p.abs() > 1e-10 {
            let drift = stability_profile(&model, lambda);
            poly.check((p < 0.0) == drift.stable);
        }
    }
    suites.push(poly.finish());

    let mut triangle = Tally::new("oracle-triangle");
    for (i, rho) in [0.01, 0.03, 0.08].into_iter().enumerate() {
        let model = VacationModel::five_phase(rho * 100.0, 100.0, 0.99, 0.98, 0.1)?;
        let exact = solve_model(&model, &SolverOptions::default())?.expected_customers_exact();
        let direct = truncated_direct_solve(&model, options.max_level)?;
        triangle.check((exact - direct.expected_customers).abs() < 1e-8 * exact);
        let sim = simulate(
            &model,
            &SimulationConfig {
                horizon: options.horizon,
                warmup: 0.01 * options.horizon,
                seed: options.seed.wrapping_add(i as u64),
                replications: options.replications,
            },
        )?;
        triangle.check((sim.mean_customers - exact).abs() < 3.0 * sim.std_error);
    }
    suites.push(triangle.finish());

    Ok(VerifyReport { suites })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_passes_and_is_deterministic() {
        let opts = VerifyOptions {
            samples: 40,
            seed: 7,
            max_level: 200,
            horizon: 2_000.0,
            replications: 5,
        };
        let a = run_verification(&opts).unwrap();
        let b = run_verification(&opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.total_failures(), 0, "{a:?}");
        assert!(a.suites.iter().all(|s| s.checks > 0));
    }
}
