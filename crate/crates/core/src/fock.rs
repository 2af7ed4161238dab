//! Single-mode truncated Fock space.
//!
//! A test function f enters the vacuum statistics only through inner
//! products ⟨f, g⟩, so each statistic is computed on one oscillator
//! truncated at `cutoff` photons, with the amplitude α standing in for f and
//! ⟨f, g⟩ ↦ ᾱβ.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::operator::{Operator, C64, I, ONE, ZERO};

pub const DEFAULT_CUTOFF: usize = 30;
pub const DEFAULT_RADIUS: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeTruncation {
    cutoff: usize,
    amplitude: C64,
    radius: f64,
}

impl ModeTruncation {
    pub fn new(cutoff: usize, amplitude: C64) -> Result<Self> {
        Self::with_radius(cutoff, amplitude, DEFAULT_RADIUS)
    }

    pub fn with_radius(cutoff: usize, amplitude: C64, radius: f64) -> Result<Self> {
        if cutoff < 1 {
            return Err(Error::invalid("cutoff", "must be at least 1"));
        }
        if !amplitude.re.is_finite() || !amplitude.im.is_finite() {
            return Err(Error::invalid("amplitude", "non-finite"));
        }
        if amplitude.norm() > radius {
            return Err(Error::TruncationRadius {
                value: amplitude.norm(),
                radius,
            });
        }
        Ok(ModeTruncation {
            cutoff,
            amplitude,
            radius,
        })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn amplitude(&self) -> C64 {
        self.amplitude
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// ⟨f, g⟩ = ᾱβ
    pub fn inner(&self, other: &ModeTruncation) -> C64 {
        self.amplitude.conj() * other.amplitude
    }

    /// The same truncation with amplitude α + β. The radius is not enforced
    /// for derived amplitudes.
    fn with_amplitude(&self, amplitude: C64) -> ModeTruncation {
        ModeTruncation { amplitude, ..*self }
    }
}

/// Coefficients c_0..c_N of a vector in the truncated Fock space.
#[derive(Clone, Debug, PartialEq)]
pub struct FockVector {
    pub coefficients: Vec<C64>,
}

impl FockVector {
    pub fn vacuum(cutoff: usize) -> Self {
        let mut c = vec![ZERO; cutoff + 1];
        c[0] = ONE;
        FockVector { coefficients: c }
    }

    /// |c_N|, the weight left in the top layer.
    pub fn tail(&self) -> f64 {
        self.coefficients.last().map_or(0.0, |c| c.norm())
    }

    pub fn inner(&self, other: &FockVector) -> C64 {
        self.coefficients
            .iter()
            .zip(&other.coefficients)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn apply(op: &Operator, v: &FockVector) -> FockVector {
        let n = v.coefficients.len();
        let coefficients = (0..n)
            .map(|i| (0..n).map(|j| op.get(i, j) * v.coefficients[j]).sum())
            .collect();
        FockVector { coefficients }
    }

    pub fn scale(&self, z: C64) -> FockVector {
        FockVector {
            coefficients: self.coefficients.iter().map(|c| c * z).collect(),
        }
    }
}

/// e(f) with layers αⁿ/√(n!).
pub fn exponential_vector(mode: &ModeTruncation) -> FockVector {
    let mut c = Vec::with_capacity(mode.cutoff + 1);
    let mut term = ONE;
    c.push(term);
    for n in 1..=mode.cutoff {
        term = term * mode.amplitude / (n as f64).sqrt();
        c.push(term);
    }
    FockVector { coefficients: c }
}

/// Truncated annihilation operator, a|n⟩ = √n|n−1⟩.
pub fn annihilation(cutoff: usize) -> Operator {
    let n = cutoff + 1;
    Operator::from_matrix_unchecked(DMatrix::from_fn(n, n, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            ZERO
        }
    }))
}

/// Λ = diag(0, 1, …, N)
pub fn number_operator(cutoff: usize) -> Operator {
    let d: Vec<f64> = (0..=cutoff).map(|k| k as f64).collect();
    Operator::from_real_diagonal(&d)
}

/// B(f) = −i(αa* − ᾱa), Hermitian.
pub fn field_operator(mode: &ModeTruncation) -> Operator {
    let a = annihilation(mode.cutoff);
    let gen = a.adjoint().scale(mode.amplitude) - a.scale(mode.amplitude.conj());
    gen.scale(-I).hermitian_part()
}

/// W(f) = exp(αa* − ᾱa) = exp(iB(f)).
pub fn weyl_matrix(mode: &ModeTruncation) -> Operator {
    field_operator(mode).hermitian_function(|e| C64::new(0.0, e).exp())
}

/// ⟨Φ, exp(ixB(f))Φ⟩, the vacuum characteristic function of the
/// quadrature B(f).
pub fn quadrature_char_function(mode: &ModeTruncation, x: f64) -> Result<C64> {
    let reach = x.abs() * mode.amplitude.norm();
    if !(reach <= mode.radius) {
        return Err(Error::TruncationRadius {
            value: reach,
            radius: mode.radius,
        });
    }
    let u = field_operator(mode).hermitian_function(|e| C64::new(0.0, x * e).exp());
    Ok(u.get(0, 0))
}

/// ⟨ψ(f), exp(ixΛ)ψ(f)⟩ for the coherent vector ψ(f) = W(f)Φ.
pub fn counting_char_function(mode: &ModeTruncation, x: f64) -> C64 {
    let psi = coherent_vector(mode);
    psi.coefficients
        .iter()
        .enumerate()
        .map(|(k, c)| C64::new(0.0, x * k as f64).exp() * c.norm_sqr())
        .sum()
}

/// ψ(f) = W(f)Φ computed from the Weyl matrix.
pub fn coherent_vector(mode: &ModeTruncation) -> FockVector {
    let w = weyl_matrix(mode);
    FockVector {
        coefficients: (0..=mode.cutoff).map(|i| w.get(i, 0)).collect(),
    }
}

/// max |(W(f)W(g) − e^{−i Im⟨f,g⟩}W(f+g))_{mn}| over photon layers
/// m, n ≤ N/2.
pub fn weyl_relation_residual(f: &ModeTruncation, g: &ModeTruncation) -> f64 {
    let wf = weyl_matrix(f);
    let wg = weyl_matrix(g);
    let wfg = weyl_matrix(&f.with_amplitude(f.amplitude + g.amplitude));
    let phase = C64::new(0.0, -f.inner(g).im).exp();
    let diff = &wf * &wg - wfg.scale(phase);
    low_layer_max(&diff, f.cutoff / 2)
}

/// max |(W(f)* − W(−f))_{mn}| over all layers.
pub fn weyl_adjoint_residual(f: &ModeTruncation) -> f64 {
    let w = weyl_matrix(f);
    let wm = weyl_matrix(&f.with_amplitude(-f.amplitude));
    (w.adjoint() - wm).max_abs()
}

/// max |([B(f), B(g)] − 2i Im⟨f,g⟩)_{mn}| over layers m, n ≤ N/2.
pub fn ccr_residual(f: &ModeTruncation, g: &ModeTruncation) -> f64 {
    let comm = field_operator(f).commutator(&field_operator(g));
    let expected = Operator::identity(f.cutoff + 1).scale(C64::new(0.0, 2.0 * f.inner(g).im));
    low_layer_max(&(comm - expected), f.cutoff / 2)
}

/// |⟨ψ(g), (W(f)*ΛW(f) − Λ − B(if) − |α|²)ψ(g)⟩|: the coherent-state
/// expectation of the displaced-counting identity.
pub fn poisson_identity_residual(f: &ModeTruncation, probe: &ModeTruncation) -> f64 {
    let cutoff = f.cutoff;
    let w = weyl_matrix(f);
    let lambda = number_operator(cutoff);
    let b_if = field_operator(&f.with_amplitude(f.amplitude * I));
    let shift = Operator::identity(cutoff + 1).scale_re(f.amplitude.norm_sqr());
    let diff = w.adjoint() * &lambda * &w - &lambda - b_if - shift;
    let psi = coherent_vector(probe);
    // the identity holds as quadratic forms; the top layers carry the
    // truncation defect of a and a*, so compare on the low-layer restriction
    let half = cutoff / 2;
    let mut acc = ZERO;
    for i in 0..=half {
        for j in 0..=half {
            acc += psi.coefficients[i].conj() * diff.get(i, j) * psi.coefficients[j];
        }
    }
    acc.norm()
}

fn low_layer_max(op: &Operator, layers: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..=layers {
        for j in 0..=layers {
            worst = worst.max(op.get(i, j).norm());
        }
    }
    worst
}

/// Piecewise-constant function: `values[i]` on [breaks[i], breaks[i+1]),
/// zero elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct StepFunction {
    breaks: Vec<f64>,
    values: Vec<C64>,
}

impl StepFunction {
    pub fn new(breaks: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        if breaks.len() != values.len() + 1 {
            return Err(Error::invalid("step function", "need one more break than values"));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("step function", "breaks must be finite and increasing"));
        }
        Ok(StepFunction { breaks, values })
    }

    pub fn zero() -> Self {
        StepFunction {
            breaks: vec![0.0, 1.0],
            values: vec![ZERO],
        }
    }

    pub fn constant(value: C64, from: f64, to: f64) -> Result<Self> {
        Self::new(vec![from, to], vec![value])
    }

    pub fn eval(&self, t: f64) -> C64 {
        if t < self.breaks[0] || t >= *self.breaks.last().unwrap() {
            return ZERO;
        }
        let idx = self.breaks.partition_point(|&b| b <= t) - 1;
        self.values[idx]
    }

    /// ∫_lo^hi conj(self)·other ds, exact for step functions.
    pub fn inner_on(&self, other: &StepFunction, lo: f64, hi: f64) -> C64 {
        let mut points: Vec<f64> = self
            .breaks
            .iter()
            .chain(&other.breaks)
            .copied()
            .filter(|&b| b > lo && b < hi)
            .collect();
        points.push(lo);
        points.push(hi);
        points.sort_by(f64::total_cmp);
        points.dedup();
        points
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                self.eval(mid).conj() * other.eval(mid) * (w[1] - w[0])
            })
            .sum()
    }

    /// ⟨self, other⟩ over the whole line.
    pub fn inner(&self, other: &StepFunction) -> C64 {
        let lo = self.breaks[0].min(other.breaks[0]);
        let hi = self.breaks.last().unwrap().max(*other.breaks.last().unwrap());
        self.inner_on(other, lo, hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeylQsdeReport {
    pub dts: Vec<f64>,
    pub max_errors: Vec<f64>,
    /// max_errors[i+1] / max_errors[i]
    pub ratios: Vec<f64>,
}

/// Closed form of φ(t) = ⟨e(g), W(f_{t]})e(h)⟩.
pub fn weyl_matrix_element(f: &StepFunction, g: &StepFunction, h: &StepFunction, t: f64) -> C64 {
    let gf = g.inner_on(f, 0.0, t);
    let fh = f.inner_on(h, 0.0, t);
    let ff = f.inner_on(f, 0.0, t).re;
    (gf - fh - 0.5 * ff + g.inner(h)).exp()
}

/// Forward-Euler integration of the matrix-element ODE of the Weyl QSDE on
/// [0, horizon] with `steps`, 2·`steps`, … grid points, compared against
/// the closed form.
pub fn weyl_qsde_check(
    f: &StepFunction,
    g: &StepFunction,
    h: &StepFunction,
    horizon: f64,
    steps: usize,
    halvings: usize,
) -> Result<WeylQsdeReport> {
    if steps < 2 {
        return Err(Error::invalid("steps", "need at least 2 grid steps"));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid("horizon", "must be positive"));
    }
    let start = g.inner(h).exp();
    let mut dts = Vec::new();
    let mut max_errors = Vec::new();
    for level in 0..=halvings {
        let m = steps << level;
        let dt = horizon / m as f64;
        let mut phi = start;
        let mut worst: f64 = 0.0;
        for k in 0..m {
            let t = k as f64 * dt;
            let (fv, gv, hv) = (f.eval(t), g.eval(t), h.eval(t));
            let rate = gv.conj() * fv - fv.conj() * hv - 0.5 * fv.norm_sqr();
            phi += rate * phi * dt;
            let t_next = (k + 1) as f64 * dt;
            worst = worst.max((phi - weyl_matrix_element(f, g, h, t_next)).norm());
        }
        dts.push(dt);
        max_errors.push(worst);
    }
    let ratios = max_errors
        .windows(2)
        .map(|w| if w[0] == 0.0 { 0.0 } else { w[1] / w[0] })
        .collect();
    Ok(WeylQsdeReport {
        dts,
        max_errors,
        ratios,
    })
}
