//! Discrete-time Belavkin filters.
//!
//! The filters are stated for functionals σ_t(X), π_t(X); here we
//! propagate the matrix ϖ with σ_t(X) = trace(ϖX), using the trace dual
//! 𝓛' of the Lindblad generator. Every step is forward Euler in dt; the
//! normalized filters renormalize the trace after each step.

pub mod control;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lindblad::SystemModel;
use crate::operator::{DensityState, Operator, C64, I};

pub use control::{ControlLaw, ExpressionLaw, FnControl};

/// Min eigenvalue below which a warning is logged.
pub const POSITIVITY_WARN: f64 = -1e-8;
/// Default failure floor for runs that opt into fatal positivity checks.
pub const POSITIVITY_FAIL: f64 = -1e-6;
/// Smallest trace `normalize` accepts.
pub const COLLAPSE_TRACE: f64 = 1e-300;
/// Smallest jump rate for which a counting jump is accepted.
pub const MIN_JUMP_RATE: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeKind {
    Homodyne,
    Imperfect,
    Counting,
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::Homodyne => "homodyne",
            SchemeKind::Imperfect => "imperfect",
            SchemeKind::Counting => "counting",
        })
    }
}

impl FromStr for SchemeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "homodyne" => Ok(SchemeKind::Homodyne),
            "imperfect" => Ok(SchemeKind::Imperfect),
            "counting" => Ok(SchemeKind::Counting),
            other => Err(Error::invalid("scheme", format!("unknown scheme `{other}`"))),
        }
    }
}

/// How the field is observed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementScheme {
    pub kind: SchemeKind,
    /// Strength of the corrupting noise (imperfect homodyne only).
    pub kappa: f64,
    /// Homodyne quadrature phase φ; the channel enters as e^{iφ}L.
    pub phase: f64,
}

impl MeasurementScheme {
    pub fn homodyne() -> Self {
        MeasurementScheme {
            kind: SchemeKind::Homodyne,
            kappa: 0.0,
            phase: 0.0,
        }
    }

    pub fn imperfect(kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::invalid(
                "kappa",
                format!("must be finite and nonnegative, got {kappa}"),
            ));
        }
        Ok(MeasurementScheme {
            kind: SchemeKind::Imperfect,
            kappa,
            phase: 0.0,
        })
    }

    pub fn counting() -> Self {
        MeasurementScheme {
            kind: SchemeKind::Counting,
            kappa: 0.0,
            phase: 0.0,
        }
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(Error::invalid("kappa", "must be finite and nonnegative"));
        }
        if !self.phase.is_finite() {
            return Err(Error::invalid("phase", "must be finite"));
        }
        Ok(())
    }

    /// (1 + κ²)⁻¹ for imperfect detection, 1 otherwise.
    pub fn gain(&self) -> f64 {
        match self.kind {
            SchemeKind::Imperfect => 1.0 / (1.0 + self.kappa * self.kappa),
            _ => 1.0,
        }
    }

    /// Variance of the observation noise per unit time.
    pub fn noise_variance(&self) -> f64 {
        match self.kind {
            SchemeKind::Imperfect => 1.0 + self.kappa * self.kappa,
            _ => 1.0,
        }
    }

    pub fn is_counting(&self) -> bool {
        self.kind == SchemeKind::Counting
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterKind {
    /// Unnormalized (Belavkin-Zakai).
    Zakai,
    /// Normalized (Belavkin-Kushner-Stratonovich).
    Bks,
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Zakai => "zakai",
            FilterKind::Bks => "bks",
        })
    }
}

impl FromStr for FilterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zakai" => Ok(FilterKind::Zakai),
            "bks" => Ok(FilterKind::Bks),
            other => Err(Error::invalid(
                "filter",
                format!("unknown filter `{other}` (zakai | bks)"),
            )),
        }
    }
}

/// The propagated matrix ϖ.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    pub rho: Operator,
    pub normalized: bool,
    /// trace(ϖ) for unnormalized runs; for normalized runs built by
    /// per-step normalization, the product of the discarded traces.
    pub likelihood: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Health {
    pub trace: f64,
    pub hermiticity_defect: f64,
    pub min_eigenvalue: f64,
}

impl FilterState {
    pub fn normalized(rho0: &DensityState) -> Self {
        FilterState {
            rho: rho0.op().clone(),
            normalized: true,
            likelihood: 1.0,
        }
    }

    pub fn unnormalized(rho0: &DensityState) -> Self {
        FilterState {
            rho: rho0.op().clone(),
            normalized: false,
            likelihood: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    /// trace(ϖX)
    pub fn functional(&self, x: &Operator) -> C64 {
        self.rho.trace_product(x)
    }

    /// trace(ϖX)/trace(ϖ)
    pub fn expectation(&self, x: &Operator) -> C64 {
        let tr = self.rho.trace().re;
        self.rho.trace_product(x) / tr
    }

    pub fn health(&self) -> Health {
        Health {
            trace: self.rho.trace().re,
            hermiticity_defect: self.rho.hermiticity_defect(),
            min_eigenvalue: self.rho.min_eigenvalue() / self.rho.trace().re.abs().max(f64::MIN_POSITIVE),
        }
    }
}

/// Operators needed by every step, computed once per model.
#[derive(Clone, Debug)]
pub struct StepOperators {
    h: Operator,
    l: Operator,
    ld: Operator,
    ldl: Operator,
}

impl StepOperators {
    pub fn new(model: &SystemModel, scheme: &MeasurementScheme) -> Result<Self> {
        scheme.validate()?;
        let l = model.channel()?.scale(C64::new(0.0, scheme.phase).exp());
        let ld = l.adjoint();
        let ldl = &ld * &l;
        Ok(StepOperators {
            h: model.hamiltonian().clone(),
            l,
            ld,
            ldl,
        })
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    /// The (phase-rotated) coupling operator.
    pub fn channel(&self) -> &Operator {
        &self.l
    }

    /// 𝓛'(ρ) for Hermitian ρ, assembled as K + K* + LρL* so the result is
    /// Hermitian to the last bit.
    fn adjoint_generator(&self, rho: &Operator) -> Operator {
        let k = self.h.scale(-I) * rho - (&self.ldl * rho).scale_re(0.5);
        let jump = (&self.l * rho * &self.ld).hermitian_part();
        k.adjoint() + k + jump
    }

    /// Lρ + ρL*
    fn homodyne_innovation(&self, rho: &Operator) -> Operator {
        let m = &self.l * rho;
        m.adjoint() + m
    }

    /// trace((L + L*)ρ)
    pub fn homodyne_rate(&self, rho: &Operator) -> f64 {
        2.0 * self.l.trace_product(rho).re
    }

    /// trace(L*Lρ)
    pub fn counting_rate(&self, rho: &Operator) -> f64 {
        self.ldl.trace_product(rho).re
    }
}

fn check_step(state: &FilterState, ops: &StepOperators, dt: f64, dy: f64) -> Result<()> {
    state.rho.check_dim(ops.dim(), "filter state")?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", format!("must be positive and finite, got {dt}")));
    }
    if !dy.is_finite() {
        return Err(Error::invalid("dY", "non-finite increment"));
    }
    Ok(())
}

fn check_count(dy: f64) -> Result<bool> {
    if dy == 0.0 {
        Ok(false)
    } else if dy == 1.0 {
        Ok(true)
    } else {
        Err(Error::invalid(
            "dY",
            format!("counting increments must be 0 or 1, got {dy}"),
        ))
    }
}

fn renormalized(rho: Operator) -> Result<Operator> {
    let tr = rho.trace().re;
    if !(tr > COLLAPSE_TRACE) || !tr.is_finite() {
        return Err(Error::FilterCollapse { trace: tr });
    }
    Ok(rho.scale_re(1.0 / tr).hermitian_part())
}

impl StepOperators {
    pub fn zakai_homodyne(&self, state: &FilterState, dy: f64, gain: f64, dt: f64) -> Result<FilterState> {
        check_step(state, self, dt, dy)?;
        let rho = &state.rho;
        let next = (rho + self.adjoint_generator(rho).scale_re(dt) + self.homodyne_innovation(rho).scale_re(gain * dy))
            .hermitian_part();
        let likelihood = next.trace().re;
        Ok(FilterState {
            rho: next,
            normalized: false,
            likelihood,
        })
    }

    pub fn bks_homodyne(&self, state: &FilterState, dy: f64, dt: f64) -> Result<FilterState> {
        check_step(state, self, dt, dy)?;
        let rho = &state.rho;
        let m = self.homodyne_rate(rho);
        let innovation = self.homodyne_innovation(rho) - rho.scale_re(m);
        let next = rho + self.adjoint_generator(rho).scale_re(dt) + innovation.scale_re(dy - m * dt);
        Ok(FilterState {
            rho: renormalized(next)?,
            normalized: true,
            likelihood: state.likelihood,
        })
    }

    pub fn zakai_counting(&self, state: &FilterState, dy: f64, dt: f64) -> Result<FilterState> {
        check_step(state, self, dt, dy)?;
        check_count(dy)?;
        let rho = &state.rho;
        let jump = (&self.l * rho * &self.ld).hermitian_part() - rho;
        let next = (rho + self.adjoint_generator(rho).scale_re(dt) + jump.scale_re(dy - dt)).hermitian_part();
        let likelihood = next.trace().re;
        Ok(FilterState {
            rho: next,
            normalized: false,
            likelihood,
        })
    }

    pub fn bks_counting(&self, state: &FilterState, dy: f64, dt: f64) -> Result<FilterState> {
        check_step(state, self, dt, dy)?;
        let jumped = check_count(dy)?;
        let rho = &state.rho;
        let rate = self.counting_rate(rho);
        let next = if jumped {
            if !(rate > MIN_JUMP_RATE) {
                return Err(Error::ZeroRateJump { rate });
            }
            (&self.l * rho * &self.ld).scale_re(1.0 / rate)
        } else {
            let sandwich = (&self.l * rho * &self.ld).hermitian_part();
            rho + (self.adjoint_generator(rho) - sandwich + rho.scale_re(rate)).scale_re(dt)
        };
        Ok(FilterState {
            rho: renormalized(next)?,
            normalized: true,
            likelihood: state.likelihood,
        })
    }

    /// One step of the requested filter under the given scheme. The
    /// normalized imperfect-detection filter is the per-step normalized
    /// Zakai filter.
    pub fn step(
        &self,
        kind: FilterKind,
        scheme: &MeasurementScheme,
        state: &FilterState,
        dy: f64,
        dt: f64,
    ) -> Result<FilterState> {
        match (kind, scheme.kind) {
            (FilterKind::Zakai, SchemeKind::Counting) => self.zakai_counting(state, dy, dt),
            (FilterKind::Zakai, _) => self.zakai_homodyne(state, dy, scheme.gain(), dt),
            (FilterKind::Bks, SchemeKind::Counting) => self.bks_counting(state, dy, dt),
            (FilterKind::Bks, SchemeKind::Homodyne) => self.bks_homodyne(state, dy, dt),
            (FilterKind::Bks, SchemeKind::Imperfect) => {
                let raw = self.zakai_homodyne(state, dy, scheme.gain(), dt)?;
                let (mut next, tr) = normalize(&raw)?;
                next.likelihood = state.likelihood * tr;
                Ok(next)
            }
        }
    }
}

/// ϖ ← ϖ + 𝓛'(ϖ)dt + η(Lϖ + ϖL*)dY with η the scheme gain.
pub fn zakai_step_homodyne(
    state: &FilterState,
    dy: f64,
    model: &SystemModel,
    scheme: &MeasurementScheme,
    dt: f64,
) -> Result<FilterState> {
    if scheme.is_counting() {
        return Err(Error::invalid(
            "scheme",
            "homodyne step requested for a counting scheme",
        ));
    }
    StepOperators::new(model, scheme)?.zakai_homodyne(state, dy, scheme.gain(), dt)
}

/// ρ ← ρ + 𝓛'(ρ)dt + (Lρ + ρL* − mρ)(dY − m dt), m = trace((L+L*)ρ),
/// followed by renormalization.
pub fn bks_step_homodyne(
    state: &FilterState,
    dy: f64,
    model: &SystemModel,
    scheme: &MeasurementScheme,
    dt: f64,
) -> Result<FilterState> {
    if !state.normalized {
        return Err(Error::invalid(
            "state",
            "normalized filter step needs a normalized state",
        ));
    }
    if scheme.is_counting() {
        return Err(Error::invalid(
            "scheme",
            "homodyne step requested for a counting scheme",
        ));
    }
    StepOperators::new(model, scheme)?.step(FilterKind::Bks, scheme, state, dy, dt)
}

/// ϖ ← ϖ + 𝓛'(ϖ)dt + (LϖL* − ϖ)(dY − dt).
pub fn zakai_step_counting(state: &FilterState, dy: f64, model: &SystemModel, dt: f64) -> Result<FilterState> {
    StepOperators::new(model, &MeasurementScheme::counting())?.zakai_counting(state, dy, dt)
}

/// No jump: ρ ← ρ + (𝓛'(ρ) − LρL* + rρ)dt; jump: ρ ← LρL*/r, with
/// r = trace(L*Lρ). Renormalized.
pub fn bks_step_counting(state: &FilterState, dy: f64, model: &SystemModel, dt: f64) -> Result<FilterState> {
    if !state.normalized {
        return Err(Error::invalid(
            "state",
            "normalized filter step needs a normalized state",
        ));
    }
    StepOperators::new(model, &MeasurementScheme::counting())?.bks_counting(state, dy, dt)
}

/// Kallianpur-Striebel normalization: (ϖ/trace ϖ, trace ϖ).
pub fn normalize(state: &FilterState) -> Result<(FilterState, f64)> {
    let tr = state.rho.trace().re;
    let rho = renormalized(state.rho.clone())?;
    Ok((
        FilterState {
            rho,
            normalized: true,
            likelihood: tr,
        },
        tr,
    ))
}

/// Time-varying channel map t ↦ L_t.
pub type ChannelMap = dyn Fn(f64) -> Operator + Send + Sync;

/// H_t = H0 + u_t·H1 with u_t from a causal control law, and optionally a
/// time-dependent channel.
pub struct Feedback {
    pub law: Box<dyn ControlLaw>,
    pub h0: Operator,
    pub h1: Operator,
    pub channel: Option<Box<ChannelMap>>,
}

impl Feedback {
    pub fn new(law: Box<dyn ControlLaw>, h0: Operator, h1: Operator) -> Result<Self> {
        if h0.dim() != h1.dim() {
            return Err(Error::invalid(
                "control_hamiltonian",
                "dimension differs from hamiltonian",
            ));
        }
        for (name, h) in [("hamiltonian", &h0), ("control_hamiltonian", &h1)] {
            if h.hermiticity_defect() > crate::operator::VALIDATION_TOL {
                return Err(Error::invalid(name, "not Hermitian"));
            }
        }
        Ok(Feedback {
            law,
            h0,
            h1,
            channel: None,
        })
    }

    pub fn with_channel(mut self, channel: Box<ChannelMap>) -> Self {
        self.channel = Some(channel);
        self
    }

    /// The model in force at time t given the record strictly before t.
    pub fn model_at(&self, base: &SystemModel, t: f64, dt: f64, prefix: &[f64]) -> Result<SystemModel> {
        let allowed = (t / dt).round().max(0.0) as usize;
        if prefix.len() > allowed {
            return Err(Error::Causality {
                t,
                len: prefix.len(),
                allowed,
            });
        }
        let u = self.law.control(t, dt, prefix);
        if !u.is_finite() {
            return Err(Error::Numerical(format!("control law returned {u} at t = {t}")));
        }
        let h = &self.h0 + self.h1.scale_re(u);
        let channels = match &self.channel {
            Some(map) => vec![map(t)],
            None => base.channels().to_vec(),
        };
        SystemModel::new(h, channels)
    }
}

/// One filter step with time-frozen feedback coefficients. `prefix` holds
/// the record entries with timestamps before `t`.
#[allow(clippy::too_many_arguments)]
pub fn feedback_step(
    state: &FilterState,
    dy: f64,
    feedback: &Feedback,
    base: &SystemModel,
    prefix: &[f64],
    scheme: &MeasurementScheme,
    kind: FilterKind,
    t: f64,
    dt: f64,
) -> Result<FilterState> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    let model = feedback.model_at(base, t, dt, prefix)?;
    StepOperators::new(&model, scheme)?.step(kind, scheme, state, dy, dt)
}
