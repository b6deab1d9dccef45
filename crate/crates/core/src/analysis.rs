//! Comparison with the M/M/1 queue served at the slowest working rate `c mu`.

use rayon::prelude::*;
use serde::Serialize;

use crate::model::build_blocks;
use crate::model::VacationModel;
use crate::qbd::{solve_boundary, solve_rate_matrix, SolverOptions};
use crate::stability::polynomial_5ph;
use crate::{Error, Result};

/// Points whose rate matrix has spectral radius above this are reported as
/// near-critical instead of evaluated.
pub const NEAR_CRITICAL_RADIUS: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    Unstable,
    NearCritical,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Unstable => "unstable",
            Status::NearCritical => "near-critical",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `lambda / (service_rate - lambda)`.
pub fn mm1_expected_customers(lambda: f64, service_rate: f64) -> Result<f64> {
    if !(lambda >= 0.0) || !(service_rate > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need lambda >= 0 and a positive service rate, got {lambda}, {service_rate}"
        )));
    }
    if lambda >= service_rate {
        return Err(Error::UnstableMm1 {
            arrival_rate: lambda,
            service_rate,
        });
    }
    Ok(lambda / (service_rate - lambda))
}

/// The decay triple `(a, b, c)` of the five-phase model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FivePhase {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl FivePhase {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(0.0 < c && c < b && b < a && a < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < c < b < a < 1, got a = {a}, b = {b}, c = {c}"
            )));
        }
        Ok(Self { a, b, c })
    }

    /// `(0.99, 0.98, 0.1)`, the standard comparison case.
    pub fn reference() -> Self {
        Self {
            a: 0.99,
            b: 0.98,
            c: 0.1,
        }
    }

    pub fn model(&self, lambda: f64, mu: f64) -> Result<VacationModel> {
        VacationModel::five_phase(lambda, mu, self.a, self.b, self.c)
    }

    pub fn polynomial(&self, load: f64) -> f64 {
        polynomial_5ph(self.a, self.b, self.c, load)
    }
}

/// Both E(L) variants of the vacation queue at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VacationPoint {
    pub status: Status,
    pub paper: Option<f64>,
    pub exact: Option<f64>,
    pub spectral_radius: Option<f64>,
}

impl VacationPoint {
    fn unavailable(status: Status, spectral_radius: Option<f64>) -> Self {
        Self {
            status,
            paper: None,
            exact: None,
            spectral_radius,
        }
    }
}

/// Evaluates the five-phase queue, guarded by the stability polynomial.
pub fn evaluate_vacation(
    params: FivePhase,
    lambda: f64,
    mu: f64,
    options: &SolverOptions,
) -> Result<VacationPoint> {
    if params.polynomial(lambda / mu) >= 0.0 {
        return Ok(VacationPoint::unavailable(Status::Unstable, None));
    }
    let blocks = build_blocks(&params.model(lambda, mu)?);
    let rate = match solve_rate_matrix(&blocks, options) {
        Ok(rate) => rate,
        Err(Error::NonConvergence { .. }) => {
            return Ok(VacationPoint::unavailable(Status::NearCritical, None))
        }
        Err(e) => return Err(e),
    };
    let radius = rate.spectral_radius;
    if radius > NEAR_CRITICAL_RADIUS {
        return Ok(VacationPoint::unavailable(
            Status::NearCritical,
            Some(radius),
        ));
    }
    let sol = solve_boundary(&blocks, rate)?;
    Ok(VacationPoint {
        status: Status::Ok,
        paper: Some(sol.expected_customers_paper()),
        exact: Some(sol.expected_customers_exact()),
        spectral_radius: Some(radius),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRecord {
    pub rho: f64,
    pub el_vacation: Option<f64>,
    pub el_mm1: Option<f64>,
    pub status_vacation: Status,
    pub status_mm1: Status,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceRecord {
    pub lambda: f64,
    pub mu: f64,
    pub el_vacation: Option<f64>,
    pub el_mm1: Option<f64>,
    pub status_vacation: Status,
    pub status_mm1: Status,
}

fn record(params: FivePhase, lambda: f64, mu: f64, options: &SolverOptions) -> Result<SweepRecord> {
    let point = evaluate_vacation(params, lambda, mu, options)?;
    let (el_mm1, status_mm1) = match mm1_expected_customers(lambda, params.c * mu) {
        Ok(v) => (Some(v), Status::Ok),
        Err(Error::UnstableMm1 { .. }) => (None, Status::Unstable),
        Err(e) => return Err(e),
    };
    Ok(SweepRecord {
        rho: lambda / mu,
        el_vacation: point.paper,
        el_mm1,
        status_vacation: point.status,
        status_mm1,
    })
}

/// One record per load in `rho_grid`, in grid order.
pub fn sweep_rho(
    params: FivePhase,
    mu: f64,
    rho_grid: &[f64],
    options: &SolverOptions,
) -> Result<Vec<SweepRecord>> {
    rho_grid
        .par_iter()
        .map(|&rho| {
            let mut r = record(params, rho * mu, mu, options)?;
            r.rho = rho;
            Ok(r)
        })
        .collect()
}

/// Records over the `(lambda, mu)` product grid, `lambda`-major.
pub fn sweep_surface(
    params: FivePhase,
    lambda_grid: &[f64],
    mu_grid: &[f64],
    options: &SolverOptions,
) -> Result<Vec<SurfaceRecord>> {
    let cells: Vec<(f64, f64)> = lambda_grid
        .iter()
        .flat_map(|&l| mu_grid.iter().map(move |&m| (l, m)))
        .collect();
    cells
        .par_iter()
        .map(|&(lambda, mu)| {
            let r = record(params, lambda, mu, options)?;
            Ok(SurfaceRecord {
                lambda,
                mu,
                el_vacation: r.el_vacation,
                el_mm1: r.el_mm1,
                status_vacation: r.status_vacation,
                status_mm1: r.status_mm1,
            })
        })
        .collect()
}

/// `(rho, difference)` on either side of a sign change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bracket {
    pub lower: (f64, f64),
    pub upper: (f64, f64),
}

impl Bracket {
    /// Linear interpolation of the zero inside the bracket.
    pub fn interpolate(&self) -> f64 {
        let (r0, d0) = self.lower;
        let (r1, d1) = self.upper;
        r0 + (r1 - r0) * d0 / (d0 - d1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossoverResult {
    /// Interpolated load where the closed-form E(L) meets the M/M/1 value.
    pub k1: f64,
    /// M/M/1 stability limit, `c`.
    pub k2: f64,
    pub grid_step: f64,
    pub bracket: Bracket,
    /// `k1` refined by bisection on the difference.
    pub k1_refined: f64,
    /// Number of sign changes seen on the grid.
    pub sign_changes: usize,
    /// Same construction with the exact E(L).
    pub k1_exact: Option<f64>,
    pub bracket_exact: Option<Bracket>,
}

/// Scans `rho = step, 2 step, ...` below `c`, computing
/// `d(rho) = E(L)_vacation - E(L)_mm1`, and interpolates linearly inside
/// the first cell where `d` changes sign.
pub fn find_crossover_k1(
    params: FivePhase,
    mu: f64,
    grid_step: f64,
    options: &SolverOptions,
) -> Result<CrossoverResult> {
    if !(grid_step > 0.0 && grid_step < params.c) {
        return Err(Error::InvalidParameter(format!(
            "grid step must lie in (0, c), got {grid_step}"
        )));
    }
    let steps = (params.c / grid_step).ceil() as usize;
    let grid: Vec<f64> = (1..steps)
        .map(|i| i as f64 * grid_step)
        .filter(|rho| *rho < params.c)
        .collect();
    let points: Vec<(f64, Option<f64>, Option<f64>)> = grid
        .par_iter()
        .map(|&rho| {
            let lambda = rho * mu;
            let point = evaluate_vacation(params, lambda, mu, options)?;
            let mm1 = mm1_expected_customers(lambda, params.c * mu)?;
            Ok((
                rho,
                point.paper.map(|v| v - mm1),
                point.exact.map(|v| v - mm1),
            ))
        })
        .collect::<Result<_>>()?;

    let paper: Vec<(f64, Option<f64>)> = points.iter().map(|p| (p.0, p.1)).collect();
    let exact: Vec<(f64, Option<f64>)> = points.iter().map(|p| (p.0, p.2)).collect();
    let (bracket, sign_changes) = first_sign_change(&paper);
    let bracket = bracket.ok_or(Error::NoCrossover)?;
    let k1 = bracket.interpolate();
    let k1_refined = bisect(bracket, |rho| {
        let lambda = rho * mu;
        let point = evaluate_vacation(params, lambda, mu, options)?;
        let mm1 = mm1_expected_customers(lambda, params.c * mu)?;
        point.paper.map(|v| v - mm1).ok_or(Error::NoCrossover)
    })?;
    let bracket_exact = first_sign_change(&exact).0;
    Ok(CrossoverResult {
        k1,
        k2: params.c,
        grid_step,
        bracket,
        k1_refined,
        sign_changes,
        k1_exact: bracket_exact.map(|b| b.interpolate()),
        bracket_exact,
    })
}

fn first_sign_change(points: &[(f64, Option<f64>)]) -> (Option<Bracket>, usize) {
    let mut first = None;
    let mut count = 0;
    for w in points.windows(2) {
        if let ((r0, Some(d0)), (r1, Some(d1))) = (w[0], w[1]) {
            if d0 * d1 < 0.0 {
                count += 1;
                first.get_or_insert(Bracket {
                    lower: (r0, d0),
                    upper: (r1, d1),
                });
            }
        }
    }
    (first, count)
}

fn bisect(bracket: Bracket, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let ((mut lo, mut f_lo), (mut hi, _)) = (bracket.lower, bracket.upper);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..100 {
        mid = 0.5 * (lo + hi);
        let f_mid = f(mid)?;
        if f_mid.abs() < 1e-8 || hi - lo < 1e-15 {
            break;
        }
        if f_mid * f_lo < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    Ok(mid)
}

/// `start, start + step, ...` up to and including `stop` (within rounding).
pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0);
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mm1_values() {
        assert_eq!(mm1_expected_customers(0.0, 3.0).unwrap(), 0.0);
        assert_eq!(mm1_expected_customers(5.0, 10.0).unwrap(), 1.0);
        assert!((mm1_expected_customers(9.0, 10.0).unwrap() - 9.0).abs() < 1e-12);
        assert!(matches!(
            mm1_expected_customers(10.0, 10.0),
            Err(Error::UnstableMm1 { .. })
        ));
        assert!(mm1_expected_customers(-1.0, 10.0).is_err());
    }

    #[test]
    fn mm1_matches_truncated_birth_death() {
        // geometric stationary law computed by detailed balance on 0..2000
        let (lambda, mu) = (9.0, 10.0);
        let mut p = vec![1.0f64];
        for _ in 0..2000 {
            let last = *p.last().unwrap();
            p.push(last * lambda / mu);
        }
        let total: f64 = p.iter().sum();
        let mean: f64 = p.iter().enumerate().map(|(n, x)| n as f64 * x).sum::<f64>() / total;
        assert!((mean - mm1_expected_customers(lambda, mu).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_triples() {
        assert!(FivePhase::new(0.9, 0.95, 0.1).is_err());
        assert!(FivePhase::new(0.99, 0.98, 0.0).is_err());
        assert!(FivePhase::new(0.99, 0.98, 0.1).is_ok());
    }

    #[test]
    fn sweep_marks_unstable_points() {
        let params = FivePhase::reference();
        let rows = sweep_rho(
            params,
            100.0,
            &[0.02, 0.1, 0.12, 0.16],
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(rows[0].status_vacation, Status::Ok);
        assert_eq!(rows[0].status_mm1, Status::Ok);
        assert_eq!(rows[1].status_mm1, Status::Unstable);
        assert!(rows[1].el_mm1.is_none());
        assert_eq!(rows[2].status_vacation, Status::Ok);
        assert_eq!(rows[3].status_vacation, Status::Unstable);
        assert!(rows[3].el_vacation.is_none());
        assert_eq!(
            rows.iter().map(|r| r.rho).collect::<Vec<_>>(),
            vec![0.02, 0.1, 0.12, 0.16]
        );
    }

    #[test]
    fn surface_agrees_with_rho_sweep() {
        let params = FivePhase::reference();
        let opts = SolverOptions::default();
        let surface = sweep_surface(params, &[1.0, 2.0], &[50.0, 100.0], &opts).unwrap();
        assert_eq!(surface.len(), 4);
        let cell = surface
            .iter()
            .find(|r| r.lambda == 2.0 && r.mu == 100.0)
            .unwrap();
        let row = sweep_rho(params, 100.0, &[0.02], &opts).unwrap()[0];
        assert_eq!(cell.el_vacation, row.el_vacation);
        assert_eq!(cell.el_mm1, row.el_mm1);
        // (1, 50) has the same load
        let other = surface
            .iter()
            .find(|r| r.lambda == 1.0 && r.mu == 50.0)
            .unwrap();
        let (x, y) = (other.el_vacation.unwrap(), cell.el_vacation.unwrap());
        assert!((x - y).abs() < 1e-10 * y);
    }

    #[test]
    fn grid_is_inclusive() {
        let g = grid(0.0, 0.15, 1e-4);
        assert_eq!(g.len(), 1501);
        assert!((g[1500] - 0.15).abs() < 1e-12);
    }
}
