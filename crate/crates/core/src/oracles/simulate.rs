//! Event-by-event simulation of the `(level, phase)` chain.
//!
//! Each replication draws from its own ChaCha8 stream: the generator is
//! seeded with the user seed and the stream number is the replication
//! index, so results do not depend on how replications are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::linalg::CompensatedSum;
use crate::model::{State, VacationModel};
use crate::{Error, Result};

/// Batches per replication used for the single-replication error estimate.
const BATCHES: usize = 10;

/// Raw transition rates of the chain. Unlike [`VacationModel`] this allows
/// a zero arrival rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRates {
    pub arrival_rate: f64,
    /// Rates of the working phases `1..m-1`.
    pub service_rates: Vec<f64>,
}

impl From<&VacationModel> for ChainRates {
    fn from(model: &VacationModel) -> Self {
        let mut service_rates = model.service_rates();
        service_rates.pop();
        Self {
            arrival_rate: model.arrival_rate(),
            service_rates,
        }
    }
}

impl ChainRates {
    fn phase_count(&self) -> usize {
        self.service_rates.len() + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationConfig {
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
    pub replications: usize,
}

impl SimulationConfig {
    /// Horizon sized for about `events` transitions per replication, with
    /// 1% warmup.
    pub fn for_model(model: &VacationModel, events: f64, seed: u64, replications: usize) -> Self {
        let horizon = events / (2.0 * model.arrival_rate());
        Self {
            horizon,
            warmup: 0.01 * horizon,
            seed,
            replications,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.warmup >= 0.0 && self.horizon > self.warmup && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need horizon > warmup >= 0, got horizon {} warmup {}",
                self.horizon, self.warmup
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParameter(
                "need at least one replication".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationEstimate {
    /// Time-average number in system after warmup, averaged over replications.
    pub mean_customers: f64,
    pub std_error: f64,
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
    pub replications: usize,
    pub replication_means: Vec<f64>,
    pub events: u64,
    /// Set when the drift condition fails and the estimate grows with the horizon.
    pub drift_warning: Option<String>,
}

/// One jump of a simulated trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub time: f64,
    pub from: State,
    pub to: State,
}

struct Replication {
    mean: f64,
    batch_means: Vec<f64>,
    events: u64,
}

fn run_replication(
    rates: &ChainRates,
    horizon: f64,
    warmup: f64,
    rng: &mut ChaCha8Rng,
    observe: &mut dyn FnMut(Transition),
) -> Replication {
    let m = rates.phase_count();
    let lambda = rates.arrival_rate;
    let window = horizon - warmup;
    let batch_len = window / BATCHES as f64;
    let mut batches = [CompensatedSum::default(); BATCHES];

    // level * time over [from, to] spread across the batch windows
    let mut accumulate = |level: usize, from: f64, to: f64| {
        if level == 0 {
            return;
        }
        let (from, to) = (from.max(warmup), to.min(horizon));
        if to <= from {
            return;
        }
        let first = (((from - warmup) / batch_len) as usize).min(BATCHES - 1);
        let last = (((to - warmup) / batch_len) as usize).min(BATCHES - 1);
        for (b, sum) in batches.iter_mut().enumerate().take(last + 1).skip(first) {
            let lo = from.max(warmup + b as f64 * batch_len);
            let hi = to.min(warmup + (b + 1) as f64 * batch_len);
            if hi > lo {
                sum.add(level as f64 * (hi - lo));
            }
        }
    };

    let mut state = State::new(0, 3.min(m));
    let mut time = 0.0;
    let mut events = 0u64;
    loop {
        let (up, down) = if state.phase == m {
            (lambda / 2.0, 0.0)
        } else if state.level == 0 {
            (lambda, 0.0)
        } else {
            (lambda, rates.service_rates[state.phase - 1])
        };
        let total = up + down;
        if total <= 0.0 {
            accumulate(state.level, time, horizon);
            break;
        }
        let hold: f64 = rng.sample::<f64, _>(Exp1) / total;
        let next_time = time + hold;
        accumulate(state.level, time, next_time);
        if next_time >= horizon {
            break;
        }
        let u: f64 = rng.random::<f64>() * total;
        let next = if state.phase == m {
            State::new(state.level + 2, 1)
        } else if u < down {
            State::new(state.level - 1, state.phase + 1)
        } else {
            State::new(state.level + 1, state.phase + 1)
        };
        observe(Transition {
            time: next_time,
            from: state,
            to: next,
        });
        state = next;
        time = next_time;
        events += 1;
    }
    let batch_means: Vec<f64> = batches.iter().map(|s| s.value() / batch_len).collect();
    let mean = batches
        .iter()
        .map(|s| s.value())
        .collect::<CompensatedSum>()
        .value()
        / window;
    Replication {
        mean,
        batch_means,
        events,
    }
}

fn replication_rng(seed: u64, replication: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication as u64);
    rng
}

fn summarize(
    reps: Vec<Replication>,
    config: &SimulationConfig,
    drift_warning: Option<String>,
) -> SimulationEstimate {
    let n = reps.len() as f64;
    let means: Vec<f64> = reps.iter().map(|r| r.mean).collect();
    let mean = means.iter().copied().collect::<CompensatedSum>().value() / n;
    let spread = |xs: &[f64], center: f64| {
        xs.iter()
            .map(|x| (x - center).powi(2))
            .collect::<CompensatedSum>()
            .value()
            / (xs.len() as f64 - 1.0)
    };
    let std_error = if reps.len() > 1 {
        (spread(&means, mean) / n).sqrt()
    } else {
        let batches = &reps[0].batch_means;
        (spread(batches, mean) / batches.len() as f64).sqrt()
    };
    SimulationEstimate {
        mean_customers: mean,
        std_error,
        horizon: config.horizon,
        warmup: config.warmup,
        seed: config.seed,
        replications: config.replications,
        replication_means: means,
        events: reps.iter().map(|r| r.events).sum(),
        drift_warning,
    }
}

fn drift_warning(rates: &ChainRates) -> Option<String> {
    let lambda = rates.arrival_rate;
    if lambda <= 0.0 {
        return None;
    }
    let served: f64 = rates
        .service_rates
        .iter()
        .map(|mu| mu / (lambda + mu))
        .sum();
    let sojourn: f64 = rates
        .service_rates
        .iter()
        .map(|mu| 1.0 / (lambda + mu))
        .sum::<f64>()
        + 2.0 / lambda;
    let mean_service_rate = served / sojourn;
    (lambda >= mean_service_rate).then(|| {
        format!(
            "arrival rate {lambda} is not below the mean service rate {mean_service_rate}; the estimate grows with the horizon"
        )
    })
}

/// Runs the replications in parallel; the result is identical to a
/// sequential run with the same configuration.
pub fn simulate_rates(rates: &ChainRates, config: &SimulationConfig) -> Result<SimulationEstimate> {
    config.validate()?;
    if rates.service_rates.len() < 2 || rates.arrival_rate < 0.0 {
        return Err(Error::InvalidParameter(
            "need at least two working phases and a nonnegative arrival rate".into(),
        ));
    }
    let reps: Vec<Replication> = (0..config.replications)
        .into_par_iter()
        .map(|i| {
            let mut rng = replication_rng(config.seed, i);
            run_replication(rates, config.horizon, config.warmup, &mut rng, &mut |_| {})
        })
        .collect();
    Ok(summarize(reps, config, drift_warning(rates)))
}

pub fn simulate(model: &VacationModel, config: &SimulationConfig) -> Result<SimulationEstimate> {
    simulate_rates(&ChainRates::from(model), config)
}

/// Sequential run that reports every transition as `observe(replication, t)`.
pub fn simulate_observed(
    model: &VacationModel,
    config: &SimulationConfig,
    mut observe: impl FnMut(usize, Transition),
) -> Result<SimulationEstimate> {
    config.validate()?;
    let rates = ChainRates::from(model);
    let reps = (0..config.replications)
        .map(|i| {
            let mut rng = replication_rng(config.seed, i);
            run_replication(&rates, config.horizon, config.warmup, &mut rng, &mut |t| {
                observe(i, t)
            })
        })
        .collect();
    Ok(summarize(reps, config, drift_warning(&rates)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(horizon: f64, seed: u64, replications: usize) -> SimulationConfig {
        SimulationConfig {
            horizon,
            warmup: 0.01 * horizon,
            seed,
            replications,
        }
    }

    #[test]
    fn no_arrivals_means_empty_system() {
        let rates = ChainRates {
            arrival_rate: 0.0,
            service_rates: vec![1.0, 0.5, 0.2],
        };
        let est = simulate_rates(&rates, &config(100.0, 1, 3)).unwrap();
        assert_eq!(est.mean_customers, 0.0);
        assert_eq!(est.events, 0);
        assert!(est.drift_warning.is_none());
    }

    #[test]
    fn same_seed_same_result() {
        let model = VacationModel::five_phase(2.0, 100.0, 0.99, 0.98, 0.1).unwrap();
        let a = simulate(&model, &config(2_000.0, 42, 4)).unwrap();
        let b = simulate(&model, &config(2_000.0, 42, 4)).unwrap();
        assert_eq!(a, b);
        let c = simulate(&model, &config(2_000.0, 43, 4)).unwrap();
        assert_ne!(a.mean_customers, c.mean_customers);
        let observed = simulate_observed(&model, &config(2_000.0, 42, 4), |_, _| {}).unwrap();
        assert_eq!(a, observed);
    }

    #[test]
    fn single_replication_has_batch_error() {
        let model = VacationModel::five_phase(2.0, 100.0, 0.99, 0.98, 0.1).unwrap();
        let est = simulate(&model, &config(5_000.0, 7, 1)).unwrap();
        assert!(est.std_error > 0.0);
        assert!(est.mean_customers > 0.0);
    }

    #[test]
    fn trajectory_follows_phase_cycle() {
        let model = VacationModel::new(3.0, 10.0, vec![1.0, 0.7, 0.5, 0.3, 0.1]).unwrap();
        let m = model.phase_count();
        simulate_observed(&model, &config(1_000.0, 9, 2), |_, t| {
            if t.from.phase == m {
                assert_eq!(t.to, State::new(t.from.level + 2, 1));
            } else {
                assert_eq!(t.to.phase, t.from.phase + 1);
                assert!(t.to.level + 1 == t.from.level || t.to.level == t.from.level + 1);
            }
        })
        .unwrap();
    }

    #[test]
    fn unstable_model_gets_warning() {
        let model = VacationModel::five_phase(20.0, 100.0, 0.99, 0.98, 0.1).unwrap();
        let est = simulate(&model, &config(100.0, 1, 2)).unwrap();
        assert!(est.drift_warning.is_some());
    }

    #[test]
    fn rejects_bad_config() {
        let model = VacationModel::five_phase(2.0, 100.0, 0.99, 0.98, 0.1).unwrap();
        let mut bad = config(100.0, 1, 2);
        bad.warmup = 200.0;
        assert!(simulate(&model, &bad).is_err());
        assert!(simulate(&model, &config(100.0, 1, 0)).is_err());
    }
}
