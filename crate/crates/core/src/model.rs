//! The m-phase working-vacation queue and its generator blocks.
//!
//! States are `(level, phase)` pairs: `level` is the number of customers and
//! `phase` runs from 1 (fresh server) to `m` (vacation). Transition rules:
//!
//! * `(n, i)`, `n > 0`, `i < m`: service to `(n - 1, i + 1)` at `mu_i`,
//!   arrival to `(n + 1, i + 1)` at `lambda`;
//! * `(0, i)`, `i < m`: arrival to `(1, i + 1)` at `lambda`;
//! * `(n, m)`: end of vacation to `(n + 2, 1)` at `lambda / 2`.
//!
//! The states `(0,1)`, `(0,2)` and `(1,1)` are never entered from a
//! recurrent state. Removing them and grouping levels in pairs
//! `(2j, 2j + 1)` turns the chain into a level-independent QBD whose
//! boundary holds `(0,3..m)` and `(1,2..m)`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::{Error, Result};

/// A `(level, phase)` state label. Phases are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct State {
    pub level: usize,
    pub phase: usize,
}

impl State {
    pub const fn new(level: usize, phase: usize) -> Self {
        Self { level, phase }
    }
}

impl std::fmt::Display for State {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.level, self.phase)
    }
}

/// Parameters of the working-vacation queue.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VacationModel {
    arrival_rate: f64,
    base_rate: f64,
    decay: Vec<f64>,
}

impl VacationModel {
    /// `decay` holds the service-rate multipliers of the working phases
    /// `1..m-1`; its first entry must be 1 and the sequence strictly
    /// decreasing and positive. The phase count is `decay.len() + 1`.
    pub fn new(arrival_rate: f64, base_rate: f64, decay: Vec<f64>) -> Result<Self> {
        if !(arrival_rate.is_finite() && arrival_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "arrival rate must be positive and finite, got {arrival_rate}"
            )));
        }
        if !(base_rate.is_finite() && base_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "base service rate must be positive and finite, got {base_rate}"
            )));
        }
        if decay.len() + 1 < 3 {
            return Err(Error::TooFewPhases(decay.len() + 1));
        }
        let monotone = decay[0] == 1.0
            && decay.windows(2).all(|w| w[1] < w[0])
            && decay.iter().all(|d| d.is_finite() && *d > 0.0);
        if !monotone {
            return Err(Error::NonMonotoneDecay(decay));
        }
        Ok(Self {
            arrival_rate,
            base_rate,
            decay,
        })
    }

    /// Four phases: rates `mu, a mu, b mu`, then the vacation.
    pub fn four_phase(arrival_rate: f64, base_rate: f64, a: f64, b: f64) -> Result<Self> {
        Self::new(arrival_rate, base_rate, vec![1.0, a, b])
    }

    /// Five phases: rates `mu, a mu, b mu, c mu`, then the vacation.
    pub fn five_phase(arrival_rate: f64, base_rate: f64, a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(arrival_rate, base_rate, vec![1.0, a, b, c])
    }

    pub fn with_arrival_rate(&self, arrival_rate: f64) -> Result<Self> {
        Self::new(arrival_rate, self.base_rate, self.decay.clone())
    }

    /// Same decay, both rates multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.arrival_rate * factor,
            self.base_rate * factor,
            self.decay.clone(),
        )
    }

    pub fn arrival_rate(&self) -> f64 {
        self.arrival_rate
    }

    pub fn base_rate(&self) -> f64 {
        self.base_rate
    }

    pub fn decay(&self) -> &[f64] {
        &self.decay
    }

    pub fn phase_count(&self) -> usize {
        self.decay.len() + 1
    }

    /// `lambda / mu`.
    pub fn load(&self) -> f64 {
        self.arrival_rate / self.base_rate
    }

    /// Service rate of a 1-based phase; zero in the vacation phase.
    pub fn service_rate(&self, phase: usize) -> f64 {
        assert!(
            (1..=self.phase_count()).contains(&phase),
            "phase {phase} out of range"
        );
        if phase == self.phase_count() {
            0.0
        } else {
            self.decay[phase - 1] * self.base_rate
        }
    }

    /// Service rates of all phases, vacation phase last (zero).
    pub fn service_rates(&self) -> Vec<f64> {
        (1..=self.phase_count())
            .map(|p| self.service_rate(p))
            .collect()
    }

    /// Outgoing transitions of `state` in the untruncated chain.
    pub fn transitions(&self, state: State) -> Vec<(State, f64)> {
        let m = self.phase_count();
        let State { level, phase } = state;
        assert!((1..=m).contains(&phase), "phase {phase} out of range");
        let lambda = self.arrival_rate;
        if phase == m {
            return vec![(State::new(level + 2, 1), lambda / 2.0)];
        }
        let mut out = Vec::with_capacity(2);
        if level > 0 {
            out.push((State::new(level - 1, phase + 1), self.service_rate(phase)));
        }
        out.push((State::new(level + 1, phase + 1), lambda));
        out
    }
}

/// Every generator block of the level-paired QBD.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSet {
    pub phase_count: usize,
    /// Level-0 diagonal block.
    pub a00: DMatrix<f64>,
    /// One level up.
    pub a01: DMatrix<f64>,
    /// Two levels up (end of vacation).
    pub a02: DMatrix<f64>,
    /// One level down.
    pub a10: DMatrix<f64>,
    /// Diagonal block for levels >= 1.
    pub a11: DMatrix<f64>,
    /// Paired-level block to the next pair up.
    pub big_a0: DMatrix<f64>,
    /// Paired-level diagonal block.
    pub big_a1: DMatrix<f64>,
    /// Paired-level block to the next pair down.
    pub big_a2: DMatrix<f64>,
    pub b11: DMatrix<f64>,
    pub b12: DMatrix<f64>,
    pub b21: DMatrix<f64>,
    /// Row labels of `b11`: `(0,3..m)` then `(1,2..m)`.
    pub boundary_states: Vec<State>,
    /// Per-column offsets used by the closed-form E(L) sum:
    /// `m` ones followed by `m` twos.
    pub repeating_state_offsets: Vec<f64>,
}

impl BlockSet {
    pub fn boundary_len(&self) -> usize {
        self.boundary_states.len()
    }

    pub fn repeating_len(&self) -> usize {
        2 * self.phase_count
    }

    /// Labels of the `j`-th repeating block (`j >= 1`), covering levels
    /// `2j` and `2j + 1`.
    pub fn repeating_states(&self, j: usize) -> Vec<State> {
        assert!(j >= 1, "repeating blocks start at 1");
        let m = self.phase_count;
        (0..2 * m)
            .map(|k| State::new(2 * j + k / m, k % m + 1))
            .collect()
    }

    /// Position of a state in the boundary ordering.
    pub fn boundary_index(&self, state: State) -> Option<usize> {
        boundary_index(self.phase_count, state)
    }
}

fn boundary_index(m: usize, state: State) -> Option<usize> {
    match (state.level, state.phase) {
        (0, p) if (3..=m).contains(&p) => Some(p - 3),
        (1, p) if (2..=m).contains(&p) => Some(m - 2 + p - 2),
        _ => None,
    }
}

/// The states that carry no stationary mass. Phase 1 is entered only from
/// a vacation two levels below, so levels 0 and 1 never see it, and
/// `(0,2)` is fed only by `(1,1)`.
pub fn transient_states(model: &VacationModel) -> Vec<State> {
    debug_assert!(model.phase_count() >= 3);
    vec![State::new(0, 1), State::new(0, 2), State::new(1, 1)]
}

/// Start state of simulations and the reference point for the class below.
pub const ANCHOR: State = State::new(0, 3);

/// Whether `state` is a recurrent state communicating with [`ANCHOR`].
///
/// Arrivals and services change level and phase by one each, and the
/// vacation jump changes the level by 2 and the phase by `1 - m`. For odd
/// `m` the parity of `level + phase` is therefore conserved and the chain
/// has two closed classes; results are reported for the one holding
/// `(0,3)`. For even `m` this is every non-transient state.
pub fn in_recurrent_class(phase_count: usize, state: State) -> bool {
    let transient = matches!((state.level, state.phase), (0, 1) | (0, 2) | (1, 1));
    !transient && (phase_count.is_multiple_of(2) || (state.level + state.phase) % 2 == 1)
}

fn stack(blocks: [[&DMatrix<f64>; 2]; 2]) -> DMatrix<f64> {
    let n = blocks[0][0].nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for (bi, row) in blocks.iter().enumerate() {
        for (bj, block) in row.iter().enumerate() {
            out.view_mut((bi * n, bj * n), (n, n)).copy_from(*block);
        }
    }
    out
}

pub fn build_blocks(model: &VacationModel) -> BlockSet {
    let m = model.phase_count();
    let lambda = model.arrival_rate();
    let half = lambda / 2.0;
    let mu = model.service_rates();

    let mut a00 = DMatrix::zeros(m, m);
    let mut a01 = DMatrix::zeros(m, m);
    let mut a02 = DMatrix::zeros(m, m);
    let mut a10 = DMatrix::zeros(m, m);
    let mut a11 = DMatrix::zeros(m, m);
    for i in 0..m - 1 {
        a00[(i, i)] = -lambda;
        a01[(i, i + 1)] = lambda;
        a10[(i, i + 1)] = mu[i];
        a11[(i, i)] = -(lambda + mu[i]);
    }
    a00[(m - 1, m - 1)] = -half;
    a11[(m - 1, m - 1)] = -half;
    a02[(m - 1, 0)] = half;

    let zero = DMatrix::zeros(m, m);
    let big_a0 = stack([[&a02, &zero], [&a01, &a02]]);
    let big_a1 = stack([[&a11, &a01], [&a10, &a11]]);
    let big_a2 = stack([[&zero, &a10], [&zero, &zero]]);

    let boundary_states: Vec<State> = (3..=m)
        .map(|p| State::new(0, p))
        .chain((2..=m).map(|p| State::new(1, p)))
        .collect();
    let nb = boundary_states.len();
    let bidx = |level, phase| boundary_index(m, State::new(level, phase)).unwrap();
    // column of a level-2/3 state inside the first repeating block
    let ridx = |level: usize, phase: usize| (level - 2) * m + phase - 1;

    let mut b11 = DMatrix::zeros(nb, nb);
    let mut b12 = DMatrix::zeros(nb, 2 * m);
    let mut b21 = DMatrix::zeros(2 * m, nb);
    for p in 3..m {
        let r = bidx(0, p);
        b11[(r, r)] = -lambda;
        b11[(r, bidx(1, p + 1))] = lambda;
    }
    let r = bidx(0, m);
    b11[(r, r)] = -half;
    b12[(r, ridx(2, 1))] = half;
    for p in 2..m {
        let r = bidx(1, p);
        b11[(r, r)] = -(lambda + mu[p - 1]);
        b11[(r, bidx(0, p + 1))] = mu[p - 1];
        b12[(r, ridx(2, p + 1))] = lambda;
    }
    let r = bidx(1, m);
    b11[(r, r)] = -half;
    b12[(r, ridx(3, 1))] = half;
    for p in 1..m {
        b21[(ridx(2, p), bidx(1, p + 1))] = mu[p - 1];
    }

    let repeating_state_offsets = (0..2 * m).map(|k| if k < m { 1.0 } else { 2.0 }).collect();

    BlockSet {
        phase_count: m,
        a00,
        a01,
        a02,
        a10,
        a11,
        big_a0,
        big_a1,
        big_a2,
        b11,
        b12,
        b21,
        boundary_states,
        repeating_state_offsets,
    }
}

/// Generator of the chain restricted to levels `0..=max_level`, stored by
/// rows of off-diagonal rates. Jumps above `max_level` land on `max_level`
/// with the same target phase.
#[derive(Debug, Clone)]
pub struct TruncatedGenerator {
    pub phase_count: usize,
    pub max_level: usize,
    pub labels: Vec<State>,
    /// Off-diagonal `(column, rate)` pairs per row, merged by column.
    pub rows: Vec<Vec<(usize, f64)>>,
}

pub const MIN_TRUNCATION_LEVEL: usize = 4;

impl TruncatedGenerator {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, state: State) -> usize {
        state.level * self.phase_count + state.phase - 1
    }

    /// Total outflow rate of a row (minus its diagonal).
    pub fn outflow(&self, row: usize) -> f64 {
        self.rows[row].iter().map(|&(_, r)| r).sum()
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut q = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, rate) in row {
                q[(i, j)] += rate;
            }
            q[(i, i)] = -self.outflow(i);
        }
        q
    }
}

pub fn build_truncated_generator(
    model: &VacationModel,
    max_level: usize,
) -> Result<TruncatedGenerator> {
    if max_level < MIN_TRUNCATION_LEVEL {
        return Err(Error::TruncationTooSmall {
            requested: max_level,
            minimum: MIN_TRUNCATION_LEVEL,
        });
    }
    let m = model.phase_count();
    let labels: Vec<State> = (0..=max_level)
        .flat_map(|n| (1..=m).map(move |p| State::new(n, p)))
        .collect();
    let rows = labels
        .iter()
        .map(|&s| {
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(2);
            for (target, rate) in model.transitions(s) {
                let target = State::new(target.level.min(max_level), target.phase);
                let j = target.level * m + target.phase - 1;
                match row.iter_mut().find(|(c, _)| *c == j) {
                    Some(entry) => entry.1 += rate,
                    None => row.push((j, rate)),
                }
            }
            row
        })
        .collect();
    Ok(TruncatedGenerator {
        phase_count: m,
        max_level,
        labels,
        rows,
    })
}
