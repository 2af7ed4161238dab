//! Coefficient-level quantum Itô calculus.
//!
//! A differential dX = B dΛ + C dA + D dA* + E dt is stored as its four
//! coefficient matrices. Products are contracted immediately through the
//! Itô table; the processes the coefficients stand for are not modelled.

use std::fmt;

use crate::error::{Error, Result};
use crate::lindblad::SystemModel;
use crate::operator::{Operator, C64, I, ONE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Differential {
    Lambda,
    A,
    AStar,
    Dt,
}

impl Differential {
    pub const ALL: [Differential; 4] = [
        Differential::Lambda,
        Differential::A,
        Differential::AStar,
        Differential::Dt,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Differential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Differential::Lambda => "dΛ",
            Differential::A => "dA",
            Differential::AStar => "dA*",
            Differential::Dt => "dt",
        })
    }
}

/// The quantum Itô table; `None` is the zero differential.
pub fn ito_product(a: Differential, b: Differential) -> Option<Differential> {
    use Differential::*;
    match (a, b) {
        (A, Lambda) => Some(A),
        (A, AStar) => Some(Dt),
        (Lambda, Lambda) => Some(Lambda),
        (Lambda, AStar) => Some(AStar),
        _ => None,
    }
}

/// Coefficients of dX with respect to dΛ, dA, dA*, dt. Absent entries are
/// zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ItoSpec {
    dim: usize,
    coefficients: [Option<Operator>; 4],
    /// Coefficients stand for their flowed images j_t(·).
    pub flowed: bool,
}

impl ItoSpec {
    pub fn zero(dim: usize) -> Self {
        ItoSpec {
            dim,
            coefficients: [None, None, None, None],
            flowed: false,
        }
    }

    pub fn with(mut self, d: Differential, coefficient: Operator) -> Result<Self> {
        coefficient.check_dim(self.dim, "ito coefficient")?;
        self.coefficients[d.index()] = Some(coefficient);
        Ok(self)
    }

    /// Scalar differential (1×1 coefficients).
    pub fn scalar(entries: &[(Differential, C64)]) -> Self {
        let mut spec = ItoSpec::zero(1);
        for &(d, z) in entries {
            spec.coefficients[d.index()] = Some(Operator::identity(1).scale(z));
        }
        spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, d: Differential) -> Option<&Operator> {
        self.coefficients[d.index()].as_ref()
    }

    pub fn coefficient(&self, d: Differential) -> Operator {
        self.get(d).cloned().unwrap_or_else(|| Operator::zeros(self.dim))
    }

    fn accumulate(&mut self, d: Differential, term: Operator) {
        let slot = &mut self.coefficients[d.index()];
        *slot = Some(match slot.take() {
            Some(existing) => existing + term,
            None => term,
        });
    }

    fn check_same_dim(&self, other: &ItoSpec) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
                context: "ito spec",
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &ItoSpec) -> Result<ItoSpec> {
        self.check_same_dim(other)?;
        let mut out = self.clone();
        for d in Differential::ALL {
            if let Some(c) = other.get(d) {
                out.accumulate(d, c.clone());
            }
        }
        Ok(out)
    }

    pub fn scale(&self, z: C64) -> ItoSpec {
        let mut out = self.clone();
        for c in out.coefficients.iter_mut().flatten() {
            *c = c.scale(z);
        }
        out
    }

    /// X·dY
    pub fn left_mul(&self, x: &Operator) -> Result<ItoSpec> {
        x.check_dim(self.dim, "ito left factor")?;
        let mut out = self.clone();
        for c in out.coefficients.iter_mut().flatten() {
            *c = x * &*c;
        }
        Ok(out)
    }

    /// dX·Y
    pub fn right_mul(&self, y: &Operator) -> Result<ItoSpec> {
        y.check_dim(self.dim, "ito right factor")?;
        let mut out = self.clone();
        for c in out.coefficients.iter_mut().flatten() {
            *c = &*c * y;
        }
        Ok(out)
    }

    /// Largest coefficient entry, zero for the zero differential.
    pub fn max_abs(&self) -> f64 {
        self.coefficients
            .iter()
            .flatten()
            .map(Operator::max_abs)
            .fold(0.0, f64::max)
    }

    pub fn max_abs_difference(&self, other: &ItoSpec) -> Result<f64> {
        self.add(&other.scale(-ONE)).map(|d| d.max_abs())
    }
}

/// The Itô correction dX·dY, contracted through the table with coefficient
/// order preserved.
pub fn ito_correction(x: &ItoSpec, y: &ItoSpec) -> Result<ItoSpec> {
    x.check_same_dim(y)?;
    let mut out = ItoSpec::zero(x.dim);
    for a in Differential::ALL {
        let Some(ca) = x.get(a) else { continue };
        for b in Differential::ALL {
            let Some(cb) = y.get(b) else { continue };
            if let Some(d) = ito_product(a, b) {
                out.accumulate(d, ca * cb);
            }
        }
    }
    Ok(out)
}

/// d(XY) = X dY + (dX) Y + dX dY at the point where X = `x0`, Y = `y0`.
pub fn product_rule(x: &ItoSpec, y: &ItoSpec, x0: &Operator, y0: &Operator) -> Result<ItoSpec> {
    x.check_same_dim(y)?;
    y.left_mul(x0)?.add(&x.right_mul(y0)?)?.add(&ito_correction(x, y)?)
}

/// de^M = e^M (dM + ½ dM·dM) for a differential dM with commuting
/// coefficients; returns the bracket.
pub fn exponential_differential(dm: &ItoSpec) -> Result<ItoSpec> {
    dm.add(&ito_correction(dm, dm)?.scale(C64::new(0.5, 0.0)))
}

/// dB(e^{iα}χ) = i e^{−iα} dA − i e^{iα} dA*.
pub fn quadrature_differential(alpha: f64) -> ItoSpec {
    let phase = C64::new(0.0, alpha).exp();
    ItoSpec::scalar(&[(Differential::A, I * phase.conj()), (Differential::AStar, -I * phase)])
}

/// dΛ^f = dΛ + f̄ dA + f dA* + |f|² dt.
pub fn poisson_differential(f: C64) -> ItoSpec {
    ItoSpec::scalar(&[
        (Differential::Lambda, ONE),
        (Differential::A, f.conj()),
        (Differential::AStar, f),
        (Differential::Dt, C64::new(f.norm_sqr(), 0.0)),
    ])
}

/// f dA* − f̄ dA, whose exponential is the Weyl process.
pub fn weyl_exponent_differential(f: C64) -> ItoSpec {
    ItoSpec::scalar(&[(Differential::AStar, f), (Differential::A, -f.conj())])
}

/// dU = {L dA* − L* dA − (½L*L + iH) dt} U; coefficients of the bracket.
pub fn hp_differential(model: &SystemModel) -> Result<ItoSpec> {
    let l = model.channel()?;
    let ld = l.adjoint();
    let h = model.hamiltonian();
    ItoSpec::zero(model.dim())
        .with(Differential::AStar, l.clone())?
        .with(Differential::A, -&ld)?
        .with(Differential::Dt, (&ld * l).scale_re(-0.5) - h.scale(I))
}

/// dU* = U* {L* dA − L dA* − (½L*L − iH) dt}; coefficients of the bracket.
pub fn hp_adjoint_differential(model: &SystemModel) -> Result<ItoSpec> {
    let l = model.channel()?;
    let ld = l.adjoint();
    let h = model.hamiltonian();
    ItoSpec::zero(model.dim())
        .with(Differential::A, ld.clone())?
        .with(Differential::AStar, -l)?
        .with(Differential::Dt, (&ld * l).scale_re(-0.5) + h.scale(I))
}

/// Coefficients of d(U*U); identically zero when U is unitary.
pub fn unitarity_differential(model: &SystemModel) -> Result<ItoSpec> {
    let n = model.dim();
    let id = Operator::identity(n);
    product_rule(&hp_adjoint_differential(model)?, &hp_differential(model)?, &id, &id)
}

/// Coefficients of dj_t(X) = d(U*XU), obtained from the product rule with U
/// left symbolic.
pub fn flow_coefficients(x: &Operator, model: &SystemModel) -> Result<ItoSpec> {
    x.check_dim(model.dim(), "flow_coefficients")?;
    let n = model.dim();
    let x_du = hp_differential(model)?.left_mul(x)?;
    let mut out = product_rule(&hp_adjoint_differential(model)?, &x_du, &Operator::identity(n), x)?;
    out.flowed = true;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservationKind {
    Quadrature,
    Counting,
}

impl std::str::FromStr for ObservationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadrature" | "homodyne" => Ok(ObservationKind::Quadrature),
            "counting" => Ok(ObservationKind::Counting),
            other => Err(Error::invalid(
                "scheme",
                format!("unknown observation scheme `{other}`"),
            )),
        }
    }
}

/// The field noise Z whose flowed image is the observation: A + A* for
/// homodyne detection, Λ for photon counting.
pub fn field_noise(kind: ObservationKind, dim: usize) -> ItoSpec {
    let id = Operator::identity(dim);
    let spec = ItoSpec::zero(dim);
    match kind {
        ObservationKind::Quadrature => spec
            .with(Differential::A, id.clone())
            .and_then(|s| s.with(Differential::AStar, id)),
        ObservationKind::Counting => spec.with(Differential::Lambda, id),
    }
    .expect("identity has the right dimension")
}

/// dY = d(U*ZU) for the field noise Z of the scheme. Z commutes with the
/// system and with future increments, so only the Itô corrections
/// dU*·dZ, dZ·dU and dU*·dZ·dU survive next to dZ.
pub fn observation_coefficients(kind: ObservationKind, model: &SystemModel) -> Result<ItoSpec> {
    let dz = field_noise(kind, model.dim());
    let du = hp_differential(model)?;
    let dud = hp_adjoint_differential(model)?;
    let left = ito_correction(&dud, &dz)?;
    let right = ito_correction(&dz, &du)?;
    let both = ito_correction(&left, &du)?;
    let mut out = dz.add(&left)?.add(&right)?.add(&both)?;
    out.flowed = true;
    Ok(out)
}

/// A field operator sits in the system algebra as the identity; its flow
/// must have vanishing coefficients for the observations to commute with
/// one another. Returns the largest such coefficient.
pub fn self_nondemolition_defect(model: &SystemModel) -> Result<f64> {
    Ok(flow_coefficients(&Operator::identity(model.dim()), model)?.max_abs())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EssentialCommutativity {
    /// ‖(L + L*)/2‖
    pub plus_norm: f64,
    /// ‖(L − L*)/2i‖
    pub minus_norm: f64,
    pub commutative: bool,
}

/// Reports whether the coupling is driven by only one of the two
/// quadrature noises.
pub fn essential_commutativity(l: &Operator, tol: f64) -> EssentialCommutativity {
    let ld = l.adjoint();
    let plus = (l + &ld).scale_re(0.5).norm();
    let minus = (l - &ld).scale(C64::new(0.0, -0.5)).norm();
    EssentialCommutativity {
        plus_norm: plus,
        minus_norm: minus,
        commutative: plus <= tol || minus <= tol,
    }
}
