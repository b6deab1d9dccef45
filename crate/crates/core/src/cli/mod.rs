//! Command-line front end. Every analysis is a subcommand writing CSV (or
//! JSON lines) to stdout or `--output`.

mod output;
mod verify;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    find_crossover_k1, grid, mm1_expected_customers, sweep_rho, sweep_surface, FivePhase, Status,
};
use crate::model::VacationModel;
use crate::oracles::{simulate, SimulationConfig};
use crate::qbd::{solve_model, SolverOptions};
use crate::stability::{stability_polynomial_5ph, stability_profile, theorem2_report};
use crate::Error;

pub use output::{format_number, OutputFormat, Table};
pub use verify::{run_verification, VerifyOptions, VerifyReport};

pub const EXIT_INVALID: u8 = 2;
pub const EXIT_UNSTABLE: u8 = 3;
pub const EXIT_VERIFY_FAILED: u8 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Unstable(String),
    #[error("{0}")]
    VerificationFailed(String),
    #[error("{0}")]
    Solver(Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Unstable(_) => EXIT_UNSTABLE,
            CliError::VerificationFailed(_) => EXIT_VERIFY_FAILED,
            CliError::Solver(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_)
            | Error::TooFewPhases(_)
            | Error::NonMonotoneDecay(_)
            | Error::WrongPhaseCount { .. }
            | Error::TruncationTooSmall { .. } => CliError::Invalid(e.to_string()),
            Error::Unstable { .. } | Error::UnstableMm1 { .. } => CliError::Unstable(e.to_string()),
            other => CliError::Solver(other),
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "vacq",
    version,
    about = "Working-vacation queue solver and M/M/1 comparison"
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,

    /// Write results here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Stability verdicts, E(L) of both variants and the M/M/1 comparison.
    Analyze {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Drift profile and the four-phase cubic report for (a, b).
    Stability {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// E(L) of both systems over a load grid.
    Scan {
        #[command(flatten)]
        decay: DecayArgs,
        #[arg(long, default_value_t = 100.0)]
        mu: f64,
        #[arg(long, default_value_t = 1e-4)]
        rho_step: f64,
        #[arg(long, default_value_t = 0.15)]
        rho_max: f64,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// E(L) of both systems over a (lambda, mu) grid.
    Surface {
        #[command(flatten)]
        decay: DecayArgs,
        #[arg(long, default_value_t = 1.0)]
        lambda_min: f64,
        #[arg(long, default_value_t = 200.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda_step: f64,
        #[arg(long, default_value_t = 1.0)]
        mu_min: f64,
        #[arg(long, default_value_t = 200.0)]
        mu_max: f64,
        #[arg(long, default_value_t = 1.0)]
        mu_step: f64,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Load k1 above which the vacation system beats M/M/1 (up to k2 = c).
    Crossover {
        #[command(flatten)]
        decay: DecayArgs,
        #[arg(long, default_value_t = 100.0)]
        mu: f64,
        #[arg(long, default_value_t = 1e-4)]
        grid_step: f64,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Discrete-event estimate of E(L).
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Model time per replication; defaults to about 1e6 events.
        #[arg(long)]
        horizon: Option<f64>,
        /// Defaults to 1% of the horizon.
        #[arg(long)]
        warmup: Option<f64>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        replications: usize,
    },
    /// Sampled invariant suites and the oracle comparison.
    Verify {
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 400)]
        max_level: usize,
        #[arg(long, default_value_t = 2e4)]
        horizon: f64,
        #[arg(long, default_value_t = 10)]
        replications: usize,
    },
}

#[derive(Debug, Clone, Args)]
pub struct DecayArgs {
    #[arg(long, default_value_t = 0.99)]
    pub a: f64,
    #[arg(long, default_value_t = 0.98)]
    pub b: f64,
    #[arg(long, default_value_t = 0.1)]
    pub c: f64,
}

impl DecayArgs {
    fn params(&self) -> Result<FivePhase, CliError> {
        Ok(FivePhase::new(self.a, self.b, self.c)?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 2.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 100.0)]
    pub mu: f64,
    #[command(flatten)]
    pub decay: DecayArgs,
    /// Full decay list `1,d2,...` (overrides --a/--b/--c); phases = len + 1.
    #[arg(long, value_delimiter = ',')]
    pub decay_list: Option<Vec<f64>>,
}

impl ModelArgs {
    pub fn model(&self) -> Result<VacationModel, CliError> {
        let decay = match &self.decay_list {
            Some(list) => list.clone(),
            None => vec![1.0, self.decay.a, self.decay.b, self.decay.c],
        };
        Ok(VacationModel::new(self.lambda, self.mu, decay)?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-14)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
}

impl SolverArgs {
    fn options(&self) -> Result<SolverOptions, CliError> {
        if !(self.tol > 0.0) {
            return Err(CliError::Invalid(format!(
                "--tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        })
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

pub fn run(config: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let table = execute(&config.command)?;
    match &config.output {
        Some(path) => {
            let mut file = BufWriter::new(File::create(path)?);
            table.result.write(&mut file, config.format)?;
            file.flush()?;
        }
        None => table.result.write(stdout, config.format)?,
    }
    table.status
}

struct Outcome {
    result: Table,
    status: Result<(), CliError>,
}

impl From<Table> for Outcome {
    fn from(result: Table) -> Self {
        Self {
            result,
            status: Ok(()),
        }
    }
}

fn execute(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Analyze { model, solver } => analyze(&model.model()?, &solver.options()?),
        Command::Stability { model } => stability(&model.model()?).map(Into::into),
        Command::Scan {
            decay,
            mu,
            rho_step,
            rho_max,
            solver,
        } => {
            positive("--rho-step", *rho_step)?;
            positive("--mu", *mu)?;
            let rho_grid: Vec<f64> = grid(0.0, *rho_max, *rho_step).into_iter().skip(1).collect();
            let rows = sweep_rho(decay.params()?, *mu, &rho_grid, &solver.options()?)?;
            let mut t = Table::new(&[
                "rho",
                "el_vacation",
                "el_mm1",
                "status_vacation",
                "status_mm1",
            ]);
            for r in rows {
                t.push(vec![
                    format_number(r.rho),
                    opt(r.el_vacation),
                    opt(r.el_mm1),
                    r.status_vacation.to_string(),
                    r.status_mm1.to_string(),
                ]);
            }
            Ok(t.into())
        }
        Command::Surface {
            decay,
            lambda_min,
            lambda_max,
            lambda_step,
            mu_min,
            mu_max,
            mu_step,
            solver,
        } => {
            positive("--lambda-min", *lambda_min)?;
            positive("--mu-min", *mu_min)?;
            positive("--lambda-step", *lambda_step)?;
            positive("--mu-step", *mu_step)?;
            let lambdas = grid(*lambda_min, *lambda_max, *lambda_step);
            let mus = grid(*mu_min, *mu_max, *mu_step);
            let rows = sweep_surface(decay.params()?, &lambdas, &mus, &solver.options()?)?;
            let mut t = Table::new(&[
                "lambda",
                "mu",
                "el_vacation",
                "el_mm1",
                "status_vacation",
                "status_mm1",
            ]);
            for r in rows {
                t.push(vec![
                    format_number(r.lambda),
                    format_number(r.mu),
                    opt(r.el_vacation),
                    opt(r.el_mm1),
                    r.status_vacation.to_string(),
                    r.status_mm1.to_string(),
                ]);
            }
            Ok(t.into())
        }
        Command::Crossover {
            decay,
            mu,
            grid_step,
            solver,
        } => {
            positive("--mu", *mu)?;
            let params = decay.params()?;
            let mut t = Table::key_value();
            match find_crossover_k1(params, *mu, *grid_step, &solver.options()?) {
                Ok(c) => {
                    t.kv("k1", format_number(c.k1));
                    t.kv("k2", format_number(c.k2));
                    t.kv("k1_refined", format_number(c.k1_refined));
                    t.kv("grid_step", format_number(c.grid_step));
                    t.kv("sign_changes", c.sign_changes.to_string());
                    t.kv("bracket_lower_rho", format_number(c.bracket.lower.0));
                    t.kv("bracket_lower_difference", format_number(c.bracket.lower.1));
                    t.kv("bracket_upper_rho", format_number(c.bracket.upper.0));
                    t.kv("bracket_upper_difference", format_number(c.bracket.upper.1));
                    t.kv("k1_exact", opt(c.k1_exact));
                    t.kv(
                        "bracket_exact_lower_rho",
                        opt(c.bracket_exact.map(|b| b.lower.0)),
                    );
                    t.kv(
                        "bracket_exact_upper_rho",
                        opt(c.bracket_exact.map(|b| b.upper.0)),
                    );
                }
                Err(Error::NoCrossover) => {
                    t.kv("k1", String::new());
                    t.kv("k2", format_number(params.c));
                    t.kv("status", "no-crossover".into());
                }
                Err(e) => return Err(e.into()),
            }
            Ok(t.into())
        }
        Command::Simulate {
            model,
            horizon,
            warmup,
            seed,
            replications,
        } => {
            let model = model.model()?;
            let mut cfg = SimulationConfig::for_model(&model, 1e6, *seed, *replications);
            if let Some(h) = horizon {
                cfg.horizon = *h;
                cfg.warmup = 0.01 * h;
            }
            if let Some(w) = warmup {
                cfg.warmup = *w;
            }
            let est = simulate(&model, &cfg)?;
            let mut t = Table::key_value();
            t.kv("mean_customers", format_number(est.mean_customers));
            t.kv("std_error", format_number(est.std_error));
            t.kv("horizon", format_number(est.horizon));
            t.kv("warmup", format_number(est.warmup));
            t.kv("seed", est.seed.to_string());
            t.kv("replications", est.replications.to_string());
            t.kv("events", est.events.to_string());
            t.kv("drift_warning", est.drift_warning.unwrap_or_default());
            Ok(t.into())
        }
        Command::Verify {
            samples,
            seed,
            max_level,
            horizon,
            replications,
        } => {
            let report = run_verification(&VerifyOptions {
                samples: *samples,
                seed: *seed,
                max_level: *max_level,
                horizon: *horizon,
                replications: *replications,
            })?;
            let mut t = Table::new(&["suite", "checks", "failures", "status"]);
            for s in &report.suites {
                t.push(vec![
                    s.name.to_string(),
                    s.checks.to_string(),
                    s.failures.to_string(),
                    if s.failures == 0 { "pass" } else { "fail" }.to_string(),
                ]);
            }
            let failures = report.total_failures();
            Ok(Outcome {
                result: t,
                status: if failures == 0 {
                    Ok(())
                } else {
                    Err(CliError::VerificationFailed(format!(
                        "{failures} verification checks failed"
                    )))
                },
            })
        }
    }
}

fn positive(flag: &str, value: f64) -> Result<(), CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(CliError::Invalid(format!(
            "{flag} must be positive, got {value}"
        )))
    }
}

fn analyze(model: &VacationModel, options: &SolverOptions) -> Result<Outcome, CliError> {
    let lambda = model.arrival_rate();
    let mu = model.base_rate();
    let profile = stability_profile(model, lambda);
    let mut t = Table::key_value();
    t.kv("lambda", format_number(lambda));
    t.kv("mu", format_number(mu));
    t.kv("phases", model.phase_count().to_string());
    t.kv(
        "mean_service_rate",
        format_number(profile.mean_service_rate),
    );
    t.kv("stable_drift", profile.stable.to_string());
    if model.phase_count() == 5 {
        let p = stability_polynomial_5ph(model, lambda)?;
        t.kv("stability_polynomial", format_number(p));
        t.kv("stable_polynomial", (p < 0.0).to_string());
    }
    let slowest = *model.decay().last().expect("at least two working phases") * mu;
    let (mm1, mm1_status) = match mm1_expected_customers(lambda, slowest) {
        Ok(v) => (Some(v), Status::Ok),
        Err(Error::UnstableMm1 { .. }) => (None, Status::Unstable),
        Err(e) => return Err(e.into()),
    };
    let mut status = Ok(());
    if profile.stable {
        let sol = solve_model(model, options)?;
        t.kv(
            "spectral_radius",
            format_number(sol.rate_matrix.spectral_radius),
        );
        t.kv("rate_iterations", sol.rate_matrix.iterations.to_string());
        t.kv("rate_residual", format_number(sol.rate_matrix.residual));
        t.kv("el_paper", format_number(sol.expected_customers_paper()));
        t.kv("el_exact", format_number(sol.expected_customers_exact()));
        t.kv("status_vacation", Status::Ok.to_string());
    } else {
        t.kv("el_paper", String::new());
        t.kv("el_exact", String::new());
        t.kv("status_vacation", Status::Unstable.to_string());
        status = Err(CliError::Unstable(format!(
            "arrival rate {lambda} is not below the mean service rate {}",
            profile.mean_service_rate
        )));
    }
    t.kv("mm1_service_rate", format_number(slowest));
    t.kv("el_mm1", opt(mm1));
    t.kv("status_mm1", mm1_status.to_string());
    Ok(Outcome { result: t, status })
}

fn stability(model: &VacationModel) -> Result<Table, CliError> {
    let lambda = model.arrival_rate();
    let profile = stability_profile(model, lambda);
    let mut t = Table::key_value();
    t.kv("lambda", format_number(lambda));
    for (i, (v, w)) in profile
        .total_rates
        .iter()
        .zip(&profile.sojourn_weights)
        .enumerate()
    {
        t.kv(&format!("total_rate_{}", i + 1), format_number(*v));
        t.kv(&format!("sojourn_weight_{}", i + 1), format_number(*w));
    }
    t.kv(
        "mean_service_rate",
        format_number(profile.mean_service_rate),
    );
    t.kv("stable", profile.stable.to_string());
    if let Some(k) = crate::stability::critical_load(model.decay()) {
        t.kv("critical_load", format_number(k));
    }
    let d = model.decay();
    let (a, b) = (d[1], d[2]);
    if let Ok(report) = theorem2_report(a, b, model.base_rate()) {
        t.kv("cubic_a", format_number(a));
        t.kv("cubic_b", format_number(b));
        for (i, c) in report.f_coefficients.iter().enumerate() {
            t.kv(&format!("f_coefficient_lambda{}", 3 - i), format_number(*c));
        }
        t.kv("discriminant_a", opt(report.discriminant_a));
        t.kv("case", format!("{:?}", report.case));
        let roots: Vec<String> = report.roots.iter().map(|r| format_number(*r)).collect();
        t.kv("roots", roots.join(";"));
        t.kv(
            "gap_at_lambda",
            format_number(crate::stability::theorem2_gap(
                a,
                b,
                model.base_rate(),
                lambda,
            )?),
        );
    }
    Ok(t)
}
