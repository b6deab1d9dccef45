//! R-matrix solution of the level-paired QBD.
//!
//! The stationary vector splits into the boundary part `pi0` over
//! `(0,3..m), (1,2..m)` and repeating blocks `pi_j = pi1 R^(j-1)`, where
//! block `j` covers levels `2j` and `2j + 1` and `R` is the minimal
//! nonnegative solution of `R^2 A2 + R A1 + A0 = 0`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::linalg::{max_abs, spectral_radius};
use crate::model::{build_blocks, in_recurrent_class, BlockSet, State, VacationModel};
use crate::stability::stability_profile;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Stop when the max-abs difference of successive iterates drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-14,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateMatrixSolution {
    #[serde(skip)]
    pub r: DMatrix<f64>,
    /// `max |R^2 A2 + R A1 + A0|`.
    pub residual: f64,
    pub iterations: usize,
    /// Max-abs difference between the last two iterates.
    pub last_difference: f64,
    pub spectral_radius: f64,
}

/// The fixed-point map `R <- -(A0 + R^2 A2) A1^-1`, started from zero.
///
/// Iterates are entrywise nondecreasing and converge to the minimal
/// nonnegative solution.
#[derive(Debug, Clone)]
pub struct RateIteration {
    a0_n: DMatrix<f64>,
    a2_n: DMatrix<f64>,
    current: DMatrix<f64>,
    iterations: usize,
}

impl RateIteration {
    pub fn new(blocks: &BlockSet) -> Result<Self> {
        // -A1 is a nonsingular M-matrix, so N = (-A1)^-1 >= 0; clearing the
        // rounding noise keeps every product below free of cancellation.
        let mut n_mat = (-&blocks.big_a1)
            .try_inverse()
            .ok_or(Error::Singular("A1"))?;
        n_mat.apply(|x| *x = x.max(0.0));
        let n = blocks.repeating_len();
        Ok(Self {
            a0_n: &blocks.big_a0 * &n_mat,
            a2_n: &blocks.big_a2 * &n_mat,
            current: DMatrix::zeros(n, n),
            iterations: 0,
        })
    }

    /// Advances one step, `R <- (A0 + R^2 A2) (-A1)^-1`, and returns the
    /// max-abs change.
    pub fn step(&mut self) -> f64 {
        let r2 = &self.current * &self.current;
        let next = &self.a0_n + r2 * &self.a2_n;
        let diff = max_abs(&(&next - &self.current));
        self.current = next;
        self.iterations += 1;
        diff
    }

    pub fn current(&self) -> &DMatrix<f64> {
        &self.current
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.current
    }
}

pub fn rate_residual(blocks: &BlockSet, r: &DMatrix<f64>) -> f64 {
    max_abs(&(r * r * &blocks.big_a2 + r * &blocks.big_a1 + &blocks.big_a0))
}

pub fn solve_rate_matrix(blocks: &BlockSet, options: &SolverOptions) -> Result<RateMatrixSolution> {
    solve_rate_matrix_with(blocks, options, |_, _| {})
}

/// Like [`solve_rate_matrix`], calling `observe(n, R(n))` after every step.
pub fn solve_rate_matrix_with(
    blocks: &BlockSet,
    options: &SolverOptions,
    mut observe: impl FnMut(usize, &DMatrix<f64>),
) -> Result<RateMatrixSolution> {
    if !(options.tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {}",
            options.tol
        )));
    }
    let mut iteration = RateIteration::new(blocks)?;
    let mut diff = f64::INFINITY;
    while iteration.iterations() < options.max_iter {
        diff = iteration.step();
        observe(iteration.iterations(), iteration.current());
        if diff < options.tol {
            break;
        }
    }
    if !(diff < options.tol) {
        return Err(Error::NonConvergence {
            iterations: iteration.iterations(),
            last_residual: diff,
        });
    }
    let iterations = iteration.iterations();
    let r = iteration.into_inner();
    Ok(RateMatrixSolution {
        residual: rate_residual(blocks, &r),
        spectral_radius: spectral_radius(&r),
        iterations,
        last_difference: diff,
        r,
    })
}

/// Boundary vector, first repeating block and the rate matrix.
#[derive(Debug, Clone, Serialize)]
pub struct StationarySolution {
    #[serde(skip)]
    pub pi0: DVector<f64>,
    #[serde(skip)]
    pub pi1: DVector<f64>,
    pub rate_matrix: RateMatrixSolution,
    pub boundary_states: Vec<State>,
    pub phase_count: usize,
    /// Offsets of the closed-form E(L) sum (`m` ones, `m` twos).
    pub repeating_state_offsets: Vec<f64>,
    #[serde(skip)]
    fundamental: DMatrix<f64>,
}

pub fn solve_boundary(blocks: &BlockSet, rate: RateMatrixSolution) -> Result<StationarySolution> {
    let nb = blocks.boundary_len();
    let nr = blocks.repeating_len();
    let n = nb + nr;
    let r = &rate.r;

    let mut system = DMatrix::zeros(n, n);
    system.view_mut((0, 0), (nb, nb)).copy_from(&blocks.b11);
    system.view_mut((0, nb), (nb, nr)).copy_from(&blocks.b12);
    system.view_mut((nb, 0), (nr, nb)).copy_from(&blocks.b21);
    system
        .view_mut((nb, nb), (nr, nr))
        .copy_from(&(&blocks.big_a1 + r * &blocks.big_a2));

    let fundamental = (DMatrix::identity(nr, nr) - r)
        .try_inverse()
        .ok_or(Error::Singular("I - R"))?;
    let mut normalizer = DVector::from_element(n, 1.0);
    normalizer
        .rows_mut(nb, nr)
        .copy_from(&(&fundamental * DVector::from_element(nr, 1.0)));

    // The other closed class (odd m) gets no mass; on the anchor class
    // x M = 0 must have a one-dimensional solution space.
    let support: Vec<usize> = blocks
        .boundary_states
        .iter()
        .copied()
        .chain(blocks.repeating_states(1))
        .enumerate()
        .filter(|&(_, s)| in_recurrent_class(blocks.phase_count, s))
        .map(|(i, _)| i)
        .collect();
    let k = support.len();
    let sub = DMatrix::from_fn(k, k, |i, j| system[(support[i], support[j])]);
    let svd = sub.clone().svd(false, true);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let largest = svd.singular_values[order[k - 1]];
    let smallest = svd.singular_values[order[0]];
    let second = svd.singular_values[order[1]];
    if smallest > 1e-9 * largest || second <= 1e-12 * largest {
        return Err(Error::RankDeficiency { smallest, second });
    }
    // Right null vector of M: the columns it weighs most are the ones
    // whose removal leaves the remaining balance equations independent.
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let null_right = v_t.row(order[0]);
    let dropped = (0..k)
        .max_by(|&i, &j| null_right[i].abs().total_cmp(&null_right[j].abs()))
        .expect("nonempty");

    let mut square = sub;
    square.set_column(dropped, &DVector::from_fn(k, |i, _| normalizer[support[i]]));
    let mut rhs = DVector::zeros(k);
    rhs[dropped] = 1.0;
    let y = square
        .transpose()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::IllConditioned("boundary system is singular".into()))?;
    let mut x = DVector::zeros(n);
    for (i, &at) in support.iter().enumerate() {
        x[at] = y[i];
    }

    // every balance equation, including the dropped one
    let scale = max_abs(&system);
    let residual = (x.transpose() * &system).amax();
    if residual > 1e-10 * scale {
        return Err(Error::IllConditioned(format!(
            "boundary balance equations have residual {residual:e}"
        )));
    }
    for (index, value) in x.iter_mut().enumerate() {
        if *value < -1e-10 {
            return Err(Error::NegativeMass {
                index,
                value: *value,
            });
        }
        if *value < 0.0 {
            *value = 0.0;
        }
    }

    Ok(StationarySolution {
        pi0: x.rows(0, nb).into_owned(),
        pi1: x.rows(nb, nr).into_owned(),
        rate_matrix: rate,
        boundary_states: blocks.boundary_states.clone(),
        phase_count: blocks.phase_count,
        repeating_state_offsets: blocks.repeating_state_offsets.clone(),
        fundamental,
    })
}

/// Builds the blocks, checks the drift condition, and solves.
pub fn solve_model(model: &VacationModel, options: &SolverOptions) -> Result<StationarySolution> {
    let profile = stability_profile(model, model.arrival_rate());
    if !profile.stable {
        return Err(Error::Unstable {
            arrival_rate: model.arrival_rate(),
            mean_service_rate: profile.mean_service_rate,
        });
    }
    let blocks = build_blocks(model);
    let rate = solve_rate_matrix(&blocks, options)?;
    solve_boundary(&blocks, rate)
}

impl StationarySolution {
    pub fn r(&self) -> &DMatrix<f64> {
        &self.rate_matrix.r
    }

    /// `(I - R)^-1`.
    pub fn fundamental(&self) -> &DMatrix<f64> {
        &self.fundamental
    }

    /// `pi_j = pi1 R^(j-1)` for `j >= 1`.
    pub fn block(&self, j: usize) -> DVector<f64> {
        assert!(j >= 1, "repeating blocks start at 1");
        let mut v = self.pi1.transpose();
        for _ in 1..j {
            v = &v * self.r();
        }
        v.transpose()
    }

    /// Labels of repeating block `j` (levels `2j`, `2j + 1`).
    pub fn repeating_states(&self, j: usize) -> Vec<State> {
        let m = self.phase_count;
        (0..2 * m)
            .map(|k| State::new(2 * j + k / m, k % m + 1))
            .collect()
    }

    pub fn probability(&self, state: State) -> f64 {
        let m = self.phase_count;
        if let Some(i) = self.boundary_states.iter().position(|s| *s == state) {
            return self.pi0[i];
        }
        if state.level < 2 {
            return 0.0;
        }
        let j = state.level / 2;
        self.block(j)[(state.level % 2) * m + state.phase - 1]
    }

    /// `pi0 e + pi1 (I - R)^-1 e - 1`.
    pub fn normalization_error(&self) -> f64 {
        let nr = self.pi1.len();
        let tail = self
            .pi1
            .dot(&(&self.fundamental * DVector::from_element(nr, 1.0)));
        self.pi0.sum() + tail - 1.0
    }

    /// Max-abs entry of `(pi0, pi1) [[B11, B12], [B21, A1 + R A2]]`.
    pub fn balance_residual(&self, blocks: &BlockSet) -> f64 {
        let r = self.r();
        let left = self.pi0.transpose() * &blocks.b11 + self.pi1.transpose() * &blocks.b21;
        let right = self.pi0.transpose() * &blocks.b12
            + self.pi1.transpose() * (&blocks.big_a1 + r * &blocks.big_a2);
        left.amax().max(right.amax())
    }

    /// Expected number of customers from the closed form
    /// `pi1 ((I - R)^-2 e + (I - R)^-1 h)` with `h` = `m` ones then `m` twos,
    /// the variant behind the reference crossover load. It counts block `j` at levels
    /// `j + 1` and `j + 2` and leaves out the boundary, so it underestimates
    /// the true mean; see [`Self::expected_customers_exact`].
    pub fn expected_customers_paper(&self) -> f64 {
        let nr = self.pi1.len();
        let e = DVector::from_element(nr, 1.0);
        let h = DVector::from_column_slice(&self.repeating_state_offsets);
        let n = &self.fundamental;
        self.pi1.dot(&(n * (n * &e) + n * h))
    }

    /// True stationary mean of the level: boundary mass at level 1 plus
    /// `sum_j pi_j (2j e + (0,..,0,1,..,1))`, i.e.
    /// `pi1 (2 (I - R)^-2 e + (I - R)^-1 h0)`.
    pub fn expected_customers_exact(&self) -> f64 {
        let m = self.phase_count;
        let e = DVector::from_element(2 * m, 1.0);
        let h0 = DVector::from_fn(2 * m, |k, _| if k < m { 0.0 } else { 1.0 });
        let n = &self.fundamental;
        self.boundary_level_mass() + self.pi1.dot(&(n * (n * &e) * 2.0 + n * h0))
    }

    /// `pi0 . l0`: probability-weighted level of the boundary states.
    pub fn boundary_level_mass(&self) -> f64 {
        self.boundary_states
            .iter()
            .zip(self.pi0.iter())
            .map(|(s, p)| s.level as f64 * p)
            .sum()
    }

    /// `P(level = n)` for `n = 0..=max_level`.
    pub fn level_distribution(&self, max_level: usize) -> Vec<f64> {
        let m = self.phase_count;
        let mut out = vec![0.0; max_level + 1];
        for (s, p) in self.boundary_states.iter().zip(self.pi0.iter()) {
            if s.level <= max_level {
                out[s.level] += p;
            }
        }
        let mut block = self.pi1.transpose();
        let mut j = 1;
        while 2 * j <= max_level {
            for (k, p) in block.iter().enumerate() {
                let level = 2 * j + k / m;
                if level <= max_level {
                    out[level] += p;
                }
            }
            block = &block * self.r();
            j += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_blocks(lambda: f64, mu: f64) -> BlockSet {
        build_blocks(&VacationModel::five_phase(lambda, mu, 0.99, 0.98, 0.1).unwrap())
    }

    #[test]
    fn zero_upward_block_gives_zero_rate_matrix() {
        let mut blocks = reference_blocks(2.0, 100.0);
        blocks.big_a0.fill(0.0);
        let sol = solve_rate_matrix(&blocks, &SolverOptions::default()).unwrap();
        assert_eq!(sol.r, DMatrix::zeros(10, 10));
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.spectral_radius, 0.0);
    }

    #[test]
    fn converged_residual_is_small() {
        let blocks = reference_blocks(2.0, 100.0);
        let sol = solve_rate_matrix(&blocks, &SolverOptions::default()).unwrap();
        assert!(sol.residual < 1e-10, "residual {}", sol.residual);
        assert!(sol.r.iter().all(|x| *x >= 0.0));
        assert!(sol.spectral_radius < 1.0);
    }

    #[test]
    fn iterates_are_monotone() {
        let blocks = reference_blocks(2.0, 100.0);
        let mut previous = DMatrix::<f64>::zeros(10, 10);
        let mut steps = 0;
        solve_rate_matrix_with(&blocks, &SolverOptions::default(), |_, r| {
            for (new, old) in r.iter().zip(previous.iter()) {
                assert!(*new >= *old - 1e-15 * old.abs().max(1.0));
            }
            previous = r.clone();
            steps += 1;
        })
        .unwrap();
        assert!(steps > 2);
    }

    #[test]
    fn reports_non_convergence() {
        let blocks = reference_blocks(2.0, 100.0);
        let opts = SolverOptions {
            max_iter: 3,
            ..Default::default()
        };
        assert!(matches!(
            solve_rate_matrix(&blocks, &opts),
            Err(Error::NonConvergence { iterations: 3, .. })
        ));
        let bad = SolverOptions {
            tol: 0.0,
            ..Default::default()
        };
        assert!(solve_rate_matrix(&blocks, &bad).is_err());
    }

    #[test]
    fn boundary_solution_is_a_distribution() {
        let blocks = reference_blocks(2.0, 100.0);
        let rate = solve_rate_matrix(&blocks, &SolverOptions::default()).unwrap();
        let sol = solve_boundary(&blocks, rate).unwrap();
        assert!(sol.pi0.iter().chain(sol.pi1.iter()).all(|p| *p >= 0.0));
        assert!(sol.normalization_error().abs() < 1e-10);
        assert!(sol.balance_residual(&blocks) < 1e-10);
        for j in 1..=10 {
            assert!(sol.block(j).iter().all(|p| *p >= -1e-14));
        }
    }

    #[test]
    fn closed_form_mean_matches_series() {
        let model = VacationModel::five_phase(2.0, 100.0, 0.99, 0.98, 0.1).unwrap();
        let sol = solve_model(&model, &SolverOptions::default()).unwrap();
        let h = DVector::from_column_slice(&sol.repeating_state_offsets);
        let mut series = 0.0;
        let mut j = 1;
        loop {
            let block = sol.block(j);
            let term = block.dot(&(DVector::from_element(10, j as f64) + &h));
            series += term;
            if block.sum() < 1e-16 && term < 1e-12 {
                break;
            }
            j += 1;
        }
        assert!((series - sol.expected_customers_paper()).abs() < 1e-12);
    }

    #[test]
    fn exact_mean_matches_level_distribution() {
        let model = VacationModel::five_phase(5.0, 100.0, 0.99, 0.98, 0.1).unwrap();
        let sol = solve_model(&model, &SolverOptions::default()).unwrap();
        let dist = sol.level_distribution(2000);
        let total: f64 = dist.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let mean: f64 = dist.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        assert!((mean - sol.expected_customers_exact()).abs() < 1e-10 * mean);
        assert!(sol.expected_customers_exact() >= sol.expected_customers_paper());
        // the gap is the boundary mass plus pi1 R (I - R)^-2 e
        let n = sol.fundamental();
        let extra = sol
            .pi1
            .dot(&(n * n * sol.r() * DVector::from_element(10, 1.0)));
        let gap = sol.expected_customers_exact() - sol.expected_customers_paper();
        assert!((gap - sol.boundary_level_mass() - extra).abs() < 1e-12);
    }

    #[test]
    fn unstable_models_are_rejected() {
        let model = VacationModel::five_phase(20.0, 100.0, 0.99, 0.98, 0.1).unwrap();
        assert!(matches!(
            solve_model(&model, &SolverOptions::default()),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn probability_lookup() {
        let model = VacationModel::five_phase(2.0, 100.0, 0.99, 0.98, 0.1).unwrap();
        let sol = solve_model(&model, &SolverOptions::default()).unwrap();
        assert_eq!(sol.probability(State::new(0, 1)), 0.0);
        assert_eq!(sol.probability(State::new(1, 1)), 0.0);
        assert_eq!(sol.probability(State::new(0, 3)), sol.pi0[0]);
        assert_eq!(sol.probability(State::new(3, 2)), sol.pi1[6]);
        assert_eq!(sol.probability(State::new(4, 1)), sol.block(2)[0]);
    }
}
