use std::collections::BTreeMap;

use crate::linalg::CompensatedSum;
use crate::model::{
    build_truncated_generator, in_recurrent_class, State, TruncatedGenerator, VacationModel,
};
use crate::stability::stability_profile;
use crate::{Error, Result};

pub const MIN_ORACLE_LEVEL: usize = 20;

/// Results with more probability than this on the top two levels are
/// flagged unreliable.
pub const TAIL_MASS_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct TruncatedSolveResult {
    pub phase_count: usize,
    pub max_level: usize,
    pub labels: Vec<State>,
    /// Indexed like `labels`.
    pub probabilities: Vec<f64>,
    /// Probability of the top two levels.
    pub tail_mass: f64,
    pub expected_customers: f64,
}

impl TruncatedSolveResult {
    pub fn probability(&self, state: State) -> f64 {
        if state.level > self.max_level {
            return 0.0;
        }
        self.probabilities[state.level * self.phase_count + state.phase - 1]
    }

    pub fn reliable(&self) -> bool {
        self.tail_mass <= TAIL_MASS_LIMIT
    }

    pub fn level_distribution(&self) -> Vec<f64> {
        self.probabilities
            .chunks(self.phase_count)
            .map(|c| c.iter().sum())
            .collect()
    }
}

/// A censored state: index, incoming rates at elimination time, outflow.
type Eliminated = (usize, Vec<(usize, f64)>, f64);

/// Stationary distribution by Grassmann-Taksar-Heyman state reduction.
///
/// Only the states listed in `order` take part; transitions to any other
/// state are dropped and those states get probability zero. States are
/// censored out in `order`; every state except the last must still have
/// positive outflow to the remaining ones when its turn comes. The
/// reduction only adds and multiplies nonnegative numbers, so there is no
/// cancellation.
pub fn gth_stationary(generator: &TruncatedGenerator, order: &[usize]) -> Result<Vec<f64>> {
    let n = generator.len();
    let mut kept = vec![false; n];
    for &k in order {
        assert!(!kept[k], "state {k} listed twice");
        kept[k] = true;
    }
    let mut out: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    let mut inc: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for (i, row) in generator.rows.iter().enumerate() {
        for &(j, rate) in row {
            if rate > 0.0 && i != j && kept[i] && kept[j] {
                *out[i].entry(j).or_default() += rate;
                *inc[j].entry(i).or_default() += rate;
            }
        }
    }

    let Some((&last, rest)) = order.split_last() else {
        return Ok(vec![0.0; n]);
    };
    let mut eliminated: Vec<Eliminated> = Vec::with_capacity(rest.len());
    for &k in rest {
        let outflow: f64 = out[k].values().sum();
        if !(outflow > 0.0) {
            return Err(Error::IllConditioned(format!(
                "state {} has no outflow to the remaining states",
                generator.labels[k]
            )));
        }
        let preds: Vec<(usize, f64)> = std::mem::take(&mut inc[k]).into_iter().collect();
        let succs: Vec<(usize, f64)> = std::mem::take(&mut out[k]).into_iter().collect();
        for &(j, _) in &succs {
            inc[j].remove(&k);
        }
        for &(i, r_ik) in &preds {
            out[i].remove(&k);
            for &(j, r_kj) in &succs {
                if j != i {
                    let add = r_ik * r_kj / outflow;
                    *out[i].entry(j).or_default() += add;
                    *inc[j].entry(i).or_default() += add;
                }
            }
        }
        eliminated.push((k, preds, outflow));
    }

    let mut pi = vec![0.0; n];
    pi[last] = 1.0;
    for (k, preds, outflow) in eliminated.iter().rev() {
        pi[*k] = preds.iter().map(|&(i, r)| pi[i] * r).sum::<f64>() / outflow;
    }
    let total = pi.iter().copied().collect::<CompensatedSum>().value();
    for p in &mut pi {
        *p /= total;
    }
    Ok(pi)
}

/// Solves `pi Q = 0, pi e = 1` on the chain truncated at `max_level`.
pub fn truncated_direct_solve(
    model: &VacationModel,
    max_level: usize,
) -> Result<TruncatedSolveResult> {
    if max_level < MIN_ORACLE_LEVEL {
        return Err(Error::TruncationTooSmall {
            requested: max_level,
            minimum: MIN_ORACLE_LEVEL,
        });
    }
    let profile = stability_profile(model, model.arrival_rate());
    if !profile.stable {
        return Err(Error::Unstable {
            arrival_rate: model.arrival_rate(),
            mean_service_rate: profile.mean_service_rate,
        });
    }
    let generator = build_truncated_generator(model, max_level)?;
    // Truncation links the two parity classes of odd m at the top level;
    // keeping only the anchor class undoes that. Top-down order keeps the
    // fill-in banded.
    let m = generator.phase_count;
    let order: Vec<usize> = (0..generator.len())
        .rev()
        .filter(|&i| in_recurrent_class(m, generator.labels[i]))
        .collect();
    let probabilities = gth_stationary(&generator, &order)?;

    let tail_mass = probabilities[(max_level - 1) * m..].iter().sum();
    let expected_customers = generator
        .labels
        .iter()
        .zip(&probabilities)
        .map(|(s, p)| s.level as f64 * p)
        .collect::<CompensatedSum>()
        .value();
    Ok(TruncatedSolveResult {
        phase_count: m,
        max_level,
        labels: generator.labels,
        probabilities,
        tail_mass,
        expected_customers,
    })
}
