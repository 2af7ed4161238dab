//! Observation records sampled through the innovations representation,
//! record replay, ensembles and innovation statistics.
//!
//! A homodyne record is dY = trace((L+L*)ρ_t)dt + dW with dW Gaussian of
//! variance (1+κ²)dt; a counting record jumps with probability
//! trace(L*Lρ_t)dt per step. In both cases ρ_t is the normalized filter
//! driven by the record itself, so sampling and filtering share one loop.

use rayon::prelude::*;

use crate::error::{Error, Result};
use log::warn;

use crate::filters::{Feedback, FilterKind, FilterState, MeasurementScheme, StepOperators, POSITIVITY_WARN};
use crate::lindblad::SystemModel;
use crate::operator::{DensityState, Operator, C64};
use crate::rng::{trajectory_seed, NoiseSource};

/// Largest jump probability per step a counting simulation accepts.
pub const MAX_JUMP_PROBABILITY: f64 = 0.1;

const NORMALIZED_TRACE_TOL: f64 = 1e-9;
const ENSEMBLE_CHUNK: usize = 64;

/// Uniform time grid t_k = k·dt, k = 0..=steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub dt: f64,
    pub steps: usize,
}

impl Grid {
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid("dt", format!("must be positive and finite, got {dt}")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid(
                "T",
                format!("must be positive and finite, got {horizon}"),
            ));
        }
        let steps = (horizon / dt).round();
        if steps < 1.0 || (steps * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::invalid(
                "T",
                format!("T = {horizon} is not a whole number of steps dt = {dt}"),
            ));
        }
        Ok(Grid {
            dt,
            steps: steps as usize,
        })
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps)
    }
}

/// Per-step measurement increments. Entry k is Y(t_{k+1}) − Y(t_k) and is
/// timestamped t_k.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationRecord {
    pub scheme: MeasurementScheme,
    pub dt: f64,
    pub increments: Vec<f64>,
    pub seed: u64,
}

impl ObservationRecord {
    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.increments.len() as f64
    }

    /// Y at the grid times, starting from Y(0) = 0.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        std::iter::once(0.0)
            .chain(self.increments.iter().map(|d| {
                acc += d;
                acc
            }))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid("dt", "record time step must be positive"));
        }
        for (k, &d) in self.increments.iter().enumerate() {
            if !d.is_finite() {
                return Err(Error::invalid("record", format!("entry {k} is not finite")));
            }
            if self.scheme.is_counting() && d != 0.0 && d != 1.0 {
                return Err(Error::invalid(
                    "record",
                    format!("counting entry {k} is {d}, expected 0 or 1"),
                ));
            }
        }
        Ok(())
    }
}

/// Sampling and replay for one model under one measurement scheme,
/// optionally with feedback.
pub struct Simulator<'a> {
    model: &'a SystemModel,
    scheme: MeasurementScheme,
    feedback: Option<&'a Feedback>,
    positivity_floor: Option<f64>,
    static_ops: StepOperators,
}

/// Worst filter-state health seen during a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunHealth {
    pub min_eigenvalue: f64,
    /// max |1 − trace| over normalized states; 0 for unnormalized runs
    pub max_trace_defect: f64,
    pub max_hermiticity_defect: f64,
    /// First step whose min eigenvalue fell below the warning level.
    pub first_breach: Option<usize>,
}

impl Default for RunHealth {
    fn default() -> Self {
        RunHealth {
            min_eigenvalue: f64::INFINITY,
            max_trace_defect: 0.0,
            max_hermiticity_defect: 0.0,
            first_breach: None,
        }
    }
}

impl RunHealth {
    pub fn merge(&mut self, other: &RunHealth) {
        self.min_eigenvalue = self.min_eigenvalue.min(other.min_eigenvalue);
        self.max_trace_defect = self.max_trace_defect.max(other.max_trace_defect);
        self.max_hermiticity_defect = self.max_hermiticity_defect.max(other.max_hermiticity_defect);
        self.first_breach = match (self.first_breach, other.first_breach) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
}

impl<'a> Simulator<'a> {
    pub fn new(model: &'a SystemModel, scheme: MeasurementScheme) -> Result<Self> {
        Ok(Simulator {
            model,
            scheme,
            feedback: None,
            positivity_floor: None,
            static_ops: StepOperators::new(model, &scheme)?,
        })
    }

    pub fn with_feedback(mut self, feedback: &'a Feedback) -> Self {
        self.feedback = Some(feedback);
        self
    }

    /// Makes runs fail with [`Error::PositivityBreach`] once the filter's
    /// min eigenvalue drops below `floor`. Without a floor, breaches are
    /// logged and reported through [`RunHealth`].
    pub fn with_positivity_floor(mut self, floor: Option<f64>) -> Self {
        self.positivity_floor = floor;
        self
    }

    pub fn scheme(&self) -> &MeasurementScheme {
        &self.scheme
    }

    fn ops_at(&self, t: f64, dt: f64, prefix: &[f64]) -> Result<Option<StepOperators>> {
        match self.feedback {
            None => Ok(None),
            Some(fb) => {
                let model = fb.model_at(self.model, t, dt, prefix)?;
                StepOperators::new(&model, &self.scheme).map(Some)
            }
        }
    }

    fn check_state(&self, state: &FilterState, step: usize, health: &mut RunHealth) -> Result<()> {
        let h = state.health();
        if state.normalized {
            let defect = (h.trace - 1.0).abs();
            if defect > NORMALIZED_TRACE_TOL {
                return Err(Error::Numerical(format!(
                    "normalized trace drifted to {} at step {step}",
                    h.trace
                )));
            }
            health.max_trace_defect = health.max_trace_defect.max(defect);
        }
        health.max_hermiticity_defect = health.max_hermiticity_defect.max(h.hermiticity_defect);
        health.min_eigenvalue = health.min_eigenvalue.min(h.min_eigenvalue);
        if let Some(floor) = self.positivity_floor {
            if h.min_eigenvalue < floor {
                return Err(Error::PositivityBreach {
                    min_eig: h.min_eigenvalue,
                    step,
                });
            }
        }
        if h.min_eigenvalue < POSITIVITY_WARN && health.first_breach.is_none() {
            health.first_breach = Some(step);
        }
        Ok(())
    }

    /// Samples a record while co-evolving the normalized filter. The
    /// observer sees the state at every grid time, starting with ρ0.
    pub fn simulate(
        &self,
        rho0: &DensityState,
        grid: Grid,
        seed: u64,
        observer: impl FnMut(usize, &FilterState),
    ) -> Result<ObservationRecord> {
        self.simulate_monitored(rho0, grid, seed, observer).map(|(r, _)| r)
    }

    pub fn simulate_monitored(
        &self,
        rho0: &DensityState,
        grid: Grid,
        seed: u64,
        observer: impl FnMut(usize, &FilterState),
    ) -> Result<(ObservationRecord, RunHealth)> {
        let out = self.sample(rho0, grid, seed, observer)?;
        log_breach(&out.1);
        Ok(out)
    }

    fn sample(
        &self,
        rho0: &DensityState,
        grid: Grid,
        seed: u64,
        mut observer: impl FnMut(usize, &FilterState),
    ) -> Result<(ObservationRecord, RunHealth)> {
        rho0.op().check_dim(self.model.dim(), "rho0")?;
        let dt = grid.dt;
        let mut noise = NoiseSource::new(seed);
        let mut increments = Vec::with_capacity(grid.steps);
        let mut state = FilterState::normalized(rho0);
        let sd = (self.scheme.noise_variance() * dt).sqrt();
        let mut health = RunHealth::default();
        self.check_state(&state, 0, &mut health)?;
        observer(0, &state);
        for k in 0..grid.steps {
            let t = grid.time(k);
            let dynamic = self.ops_at(t, dt, &increments)?;
            let ops = dynamic.as_ref().unwrap_or(&self.static_ops);
            let dy = if self.scheme.is_counting() {
                let prob = ops.counting_rate(&state.rho) * dt;
                if prob > MAX_JUMP_PROBABILITY {
                    return Err(Error::RateBoundExceeded {
                        prob,
                        limit: MAX_JUMP_PROBABILITY,
                    });
                }
                if noise.uniform() < prob {
                    1.0
                } else {
                    0.0
                }
            } else {
                ops.homodyne_rate(&state.rho) * dt + sd * noise.standard_normal()
            };
            state = ops.step(FilterKind::Bks, &self.scheme, &state, dy, dt)?;
            increments.push(dy);
            self.check_state(&state, k + 1, &mut health)?;
            observer(k + 1, &state);
        }
        let record = ObservationRecord {
            scheme: self.scheme,
            dt,
            increments,
            seed,
        };
        Ok((record, health))
    }

    /// Runs a filter over an existing record. Returns the final state.
    pub fn replay(
        &self,
        record: &ObservationRecord,
        kind: FilterKind,
        rho0: &DensityState,
        observer: impl FnMut(usize, &FilterState),
    ) -> Result<FilterState> {
        self.replay_monitored(record, kind, rho0, observer).map(|(s, _)| s)
    }

    pub fn replay_monitored(
        &self,
        record: &ObservationRecord,
        kind: FilterKind,
        rho0: &DensityState,
        mut observer: impl FnMut(usize, &FilterState),
    ) -> Result<(FilterState, RunHealth)> {
        record.validate()?;
        if record.scheme != self.scheme {
            return Err(Error::invalid(
                "record",
                format!(
                    "record was taken with scheme {} (kappa {}, phase {}), configuration expects {} (kappa {}, phase {})",
                    record.scheme.kind,
                    record.scheme.kappa,
                    record.scheme.phase,
                    self.scheme.kind,
                    self.scheme.kappa,
                    self.scheme.phase
                ),
            ));
        }
        rho0.op().check_dim(self.model.dim(), "rho0")?;
        let dt = record.dt;
        let mut state = match kind {
            FilterKind::Bks => FilterState::normalized(rho0),
            FilterKind::Zakai => FilterState::unnormalized(rho0),
        };
        let mut health = RunHealth::default();
        self.check_state(&state, 0, &mut health)?;
        observer(0, &state);
        for (k, &dy) in record.increments.iter().enumerate() {
            let dynamic = self.ops_at(k as f64 * dt, dt, &record.increments[..k])?;
            let ops = dynamic.as_ref().unwrap_or(&self.static_ops);
            state = ops.step(kind, &self.scheme, &state, dy, dt)?;
            self.check_state(&state, k + 1, &mut health)?;
            observer(k + 1, &state);
        }
        log_breach(&health);
        Ok((state, health))
    }

    /// Runs `n` independent trajectories and reports mean and standard
    /// error of trace(ρ_t X) every `stride` steps.
    pub fn ensemble(
        &self,
        rho0: &DensityState,
        grid: Grid,
        n: usize,
        seed: u64,
        observables: &[Operator],
        stride: usize,
    ) -> Result<EnsembleSummary> {
        if n == 0 {
            return Err(Error::invalid("n_trajectories", "must be at least 1"));
        }
        let stride = stride.max(1);
        for (i, x) in observables.iter().enumerate() {
            if x.dim() != self.model.dim() {
                return Err(Error::invalid(
                    format!("observables[{i}]"),
                    "dimension does not match the model",
                ));
            }
        }
        let sample_steps: Vec<usize> = (0..=grid.steps).filter(|k| k % stride == 0).collect();
        let mut acc = vec![Welford::default(); sample_steps.len() * observables.len()];
        let mut health = RunHealth::default();
        let mut start = 0;
        while start < n {
            let end = (start + ENSEMBLE_CHUNK).min(n);
            let runs: Vec<Result<(Vec<C64>, RunHealth)>> = (start..end)
                .into_par_iter()
                .map(|i| {
                    let mut samples = Vec::with_capacity(acc.len());
                    let (_, h) = self.sample(rho0, grid, trajectory_seed(seed, i as u64), |k, s| {
                        if k % stride == 0 {
                            samples.extend(observables.iter().map(|x| s.functional(x)));
                        }
                    })?;
                    Ok((samples, h))
                })
                .collect();
            for run in runs {
                let (samples, h) = run?;
                health.merge(&h);
                for (w, z) in acc.iter_mut().zip(samples) {
                    w.push(z);
                }
            }
            start = end;
        }
        log_breach(&health);
        let per_obs = observables.len();
        let summaries = (0..per_obs)
            .map(|j| {
                let cells: Vec<&Welford> = (0..sample_steps.len()).map(|s| &acc[s * per_obs + j]).collect();
                ObservableSummary {
                    mean: cells.iter().map(|w| w.mean).collect(),
                    stderr_re: cells.iter().map(|w| w.stderr().0).collect(),
                    stderr_im: cells.iter().map(|w| w.stderr().1).collect(),
                }
            })
            .collect();
        Ok(EnsembleSummary {
            times: sample_steps.iter().map(|&k| grid.time(k)).collect(),
            steps: sample_steps,
            observables: summaries,
            trajectories: n,
            health,
        })
    }
}

fn log_breach(health: &RunHealth) {
    if let Some(step) = health.first_breach {
        warn!(
            "filter state lost positivity (first at step {step}, min eigenvalue {:.3e})",
            health.min_eigenvalue
        );
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Welford {
    count: usize,
    mean: C64,
    m2_re: f64,
    m2_im: f64,
}

impl Welford {
    fn push(&mut self, z: C64) {
        self.count += 1;
        let delta = z - self.mean;
        self.mean += delta / self.count as f64;
        let delta2 = z - self.mean;
        self.m2_re += delta.re * delta2.re;
        self.m2_im += delta.im * delta2.im;
    }

    fn stderr(&self) -> (f64, f64) {
        if self.count < 2 {
            return (0.0, 0.0);
        }
        let n = self.count as f64;
        let se = |m2: f64| (m2.max(0.0) / (n - 1.0) / n).sqrt();
        (se(self.m2_re), se(self.m2_im))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSummary {
    pub mean: Vec<C64>,
    pub stderr_re: Vec<f64>,
    pub stderr_im: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    /// Grid indices of `times`.
    pub steps: Vec<usize>,
    /// One entry per requested observable.
    pub observables: Vec<ObservableSummary>,
    pub trajectories: usize,
    /// Worst health over all trajectories.
    pub health: RunHealth,
}

fn run_with_path(
    model: &SystemModel,
    scheme: MeasurementScheme,
    rho0: &DensityState,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<(ObservationRecord, Vec<Operator>)> {
    let grid = Grid::new(horizon, dt)?;
    let sim = Simulator::new(model, scheme)?;
    let mut path = Vec::with_capacity(grid.steps + 1);
    let record = sim.simulate(rho0, grid, seed, |_, s| path.push(s.rho.clone()))?;
    Ok((record, path))
}

/// Homodyne record and the co-evolved normalized filter path.
pub fn simulate_homodyne(
    model: &SystemModel,
    rho0: &DensityState,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<(ObservationRecord, Vec<Operator>)> {
    run_with_path(model, MeasurementScheme::homodyne(), rho0, horizon, dt, seed)
}

/// Counting record and the co-evolved normalized filter path.
pub fn simulate_counting(
    model: &SystemModel,
    rho0: &DensityState,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<(ObservationRecord, Vec<Operator>)> {
    run_with_path(model, MeasurementScheme::counting(), rho0, horizon, dt, seed)
}

#[allow(clippy::too_many_arguments)]
pub fn ensemble_average(
    model: &SystemModel,
    scheme: MeasurementScheme,
    rho0: &DensityState,
    observables: &[Operator],
    n: usize,
    seed: u64,
    horizon: f64,
    dt: f64,
) -> Result<EnsembleSummary> {
    let grid = Grid::new(horizon, dt)?;
    Simulator::new(model, scheme)?.ensemble(rho0, grid, n, seed, observables, 1)
}

/// Innovation increments dZ̄_k of one record together with per-path
/// statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct InnovationReport {
    pub increments: Vec<f64>,
    /// Z̄_T
    pub terminal: f64,
    /// Σ_k dZ̄_k²
    pub quadratic_variation: f64,
    /// Σ_k dZ̄_k dZ̄_{k+1}
    pub lag1_product: f64,
    /// Sample correlation of consecutive increments.
    pub lag1_correlation: f64,
}

/// dZ̄ = dY − trace((L+L*)ρ)dt (homodyne) or dY − trace(L*Lρ)dt
/// (counting), with ρ the filter state at the start of each step.
pub fn innovations_stats(
    record: &ObservationRecord,
    path: &[Operator],
    model: &SystemModel,
) -> Result<InnovationReport> {
    record.validate()?;
    if path.len() < record.steps() {
        return Err(Error::invalid(
            "path",
            format!("{} states for {} record entries", path.len(), record.steps()),
        ));
    }
    let ops = StepOperators::new(model, &record.scheme)?;
    let dt = record.dt;
    let increments: Vec<f64> = record
        .increments
        .iter()
        .zip(path)
        .map(|(&dy, rho)| {
            let compensator = if record.scheme.is_counting() {
                ops.counting_rate(rho)
            } else {
                ops.homodyne_rate(rho)
            };
            dy - compensator * dt
        })
        .collect();
    let terminal = increments.iter().sum();
    let quadratic_variation = increments.iter().map(|z| z * z).sum();
    let lag1_product = increments.windows(2).map(|w| w[0] * w[1]).sum();
    Ok(InnovationReport {
        lag1_product,
        lag1_correlation: lag1_correlation(&increments),
        increments,
        terminal,
        quadratic_variation,
    })
}

fn lag1_correlation(xs: &[f64]) -> f64 {
    if xs.len() < 3 {
        return 0.0;
    }
    let a = &xs[..xs.len() - 1];
    let b = &xs[1..];
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Ensemble-level view of many [`InnovationReport`]s.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnovationSummary {
    pub paths: usize,
    pub terminal_mean: f64,
    pub terminal_stderr: f64,
    pub quadratic_variation_mean: f64,
    /// Pooled lag-1 correlation mean(Σ dZ̄_k dZ̄_{k+1}) / mean(Σ dZ̄_k²).
    pub lag1_mean: f64,
    pub lag1_stderr: f64,
}

pub fn summarize_innovations(reports: &[InnovationReport]) -> InnovationSummary {
    let stats = |values: Vec<f64>| {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        (mean, (var / n).sqrt())
    };
    let (terminal_mean, terminal_stderr) = stats(reports.iter().map(|r| r.terminal).collect());
    let (quadratic_variation_mean, _) = stats(reports.iter().map(|r| r.quadratic_variation).collect());
    let (product_mean, product_stderr) = stats(reports.iter().map(|r| r.lag1_product).collect());
    let (lag1_mean, lag1_stderr) = if quadratic_variation_mean > 0.0 {
        (
            product_mean / quadratic_variation_mean,
            product_stderr / quadratic_variation_mean,
        )
    } else {
        (0.0, 0.0)
    };
    InnovationSummary {
        paths: reports.len(),
        terminal_mean,
        terminal_stderr,
        quadratic_variation_mean,
        lag1_mean,
        lag1_stderr,
    }
}
