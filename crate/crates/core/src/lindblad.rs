//! System models, the Lindblad generator in both pictures, and the
//! dissipative semigroup it generates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::operator::{DensityState, Operator, C64, I, VALIDATION_TOL};

/// Hamiltonian plus coupling channels L_j on ℂⁿ.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemModel {
    hamiltonian: Operator,
    channels: Vec<Operator>,
}

impl SystemModel {
    pub fn new(hamiltonian: Operator, channels: Vec<Operator>) -> Result<Self> {
        let n = hamiltonian.dim();
        let defect = hamiltonian.hermiticity_defect();
        if defect > VALIDATION_TOL {
            return Err(Error::invalid(
                "hamiltonian",
                format!("not Hermitian (max |H - H*| = {defect:.3e})"),
            ));
        }
        for (j, l) in channels.iter().enumerate() {
            if l.dim() != n {
                return Err(Error::invalid(
                    format!("channels[{j}]"),
                    format!("dimension {} does not match hamiltonian dimension {n}", l.dim()),
                ));
            }
        }
        Ok(SystemModel { hamiltonian, channels })
    }

    /// Convenience constructor for the single-channel models the filters use.
    pub fn single(hamiltonian: Operator, channel: Operator) -> Result<Self> {
        Self::new(hamiltonian, vec![channel])
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[Operator] {
        &self.channels
    }

    /// The coupling operator of a single-channel model.
    pub fn channel(&self) -> Result<&Operator> {
        match self.channels.as_slice() {
            [l] => Ok(l),
            other => Err(Error::invalid(
                "channels",
                format!("filtering needs exactly one channel, model has {}", other.len()),
            )),
        }
    }

    pub fn with_hamiltonian(&self, hamiltonian: Operator) -> Result<Self> {
        Self::new(hamiltonian, self.channels.clone())
    }

    pub fn with_channels(&self, channels: Vec<Operator>) -> Result<Self> {
        Self::new(self.hamiltonian.clone(), channels)
    }
}

/// 𝓛(X) = i[H,X] + Σ_j (L_j* X L_j − ½{L_j* L_j, X}).
pub fn lindblad_heisenberg(x: &Operator, model: &SystemModel) -> Result<Operator> {
    x.check_dim(model.dim(), "lindblad_heisenberg")?;
    let mut out = model.hamiltonian().commutator(x).scale(I);
    for l in model.channels() {
        let ld = l.adjoint();
        let ldl = &ld * l;
        out += &(&ld * x * l - ldl.anticommutator(x).scale_re(0.5));
    }
    Ok(out)
}

/// 𝓛'(ϖ) = −i[H,ϖ] + Σ_j (L_j ϖ L_j* − ½{L_j* L_j, ϖ}), the trace dual of
/// [`lindblad_heisenberg`].
pub fn lindblad_adjoint(rho: &Operator, model: &SystemModel) -> Result<Operator> {
    rho.check_dim(model.dim(), "lindblad_adjoint")?;
    let mut out = model.hamiltonian().commutator(rho).scale(-I);
    for l in model.channels() {
        let ld = l.adjoint();
        let ldl = &ld * l;
        out += &(l * rho * &ld - ldl.anticommutator(rho).scale_re(0.5));
    }
    Ok(out)
}

// column-stacking vectorisation
fn vectorize(op: &Operator) -> DVector<C64> {
    let n = op.dim();
    DVector::from_fn(n * n, |k, _| op.get(k % n, k / n))
}

fn unvectorize(v: &DVector<C64>, n: usize) -> Operator {
    Operator::from_matrix_unchecked(DMatrix::from_fn(n, n, |i, j| v[j * n + i]))
}

fn superoperator(n: usize, apply: impl Fn(&Operator) -> Result<Operator>) -> Result<DMatrix<C64>> {
    let mut sup = DMatrix::zeros(n * n, n * n);
    for j in 0..n {
        for i in 0..n {
            let mut basis = Operator::zeros(n).into_matrix();
            basis[(i, j)] = C64::new(1.0, 0.0);
            let image = vectorize(&apply(&Operator::from_matrix_unchecked(basis))?);
            sup.set_column(j * n + i, &image);
        }
    }
    Ok(sup)
}

/// n²×n² matrix of 𝓛' acting on column-stacked density matrices.
pub fn adjoint_superoperator(model: &SystemModel) -> Result<DMatrix<C64>> {
    superoperator(model.dim(), |x| lindblad_adjoint(x, model))
}

/// n²×n² matrix of 𝓛 acting on column-stacked observables.
pub fn heisenberg_superoperator(model: &SystemModel) -> Result<DMatrix<C64>> {
    superoperator(model.dim(), |x| lindblad_heisenberg(x, model))
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::invalid("t", format!("must be finite and nonnegative, got {t}")));
    }
    Ok(())
}

/// exp(t𝓛')(ρ0).
pub fn semigroup_evolve(rho0: &DensityState, model: &SystemModel, t: f64) -> Result<DensityState> {
    check_time(t)?;
    rho0.op().check_dim(model.dim(), "semigroup_evolve")?;
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let prop = SemigroupPropagator::new(model, t)?;
    prop.apply(rho0)
}

/// T_t(X) = exp(t𝓛)(X), the Heisenberg-picture semigroup.
pub fn heisenberg_evolve(x: &Operator, model: &SystemModel, t: f64) -> Result<Operator> {
    check_time(t)?;
    x.check_dim(model.dim(), "heisenberg_evolve")?;
    let n = model.dim();
    let sup = heisenberg_superoperator(model)? * C64::new(t, 0.0);
    Ok(unvectorize(&(expm(&sup)? * vectorize(x)), n))
}

/// The one-interval propagator exp(Δt𝓛'), reused to step a density matrix
/// along a uniform grid.
#[derive(Clone, Debug)]
pub struct SemigroupPropagator {
    dim: usize,
    matrix: DMatrix<C64>,
}

impl SemigroupPropagator {
    pub fn new(model: &SystemModel, dt: f64) -> Result<Self> {
        check_time(dt)?;
        let sup = adjoint_superoperator(model)? * C64::new(dt, 0.0);
        Ok(SemigroupPropagator {
            dim: model.dim(),
            matrix: expm(&sup)?,
        })
    }

    pub fn apply_operator(&self, rho: &Operator) -> Operator {
        unvectorize(&(&self.matrix * vectorize(rho)), self.dim).hermitian_part()
    }

    pub fn apply(&self, rho: &DensityState) -> Result<DensityState> {
        rho.op().check_dim(self.dim, "semigroup propagator")?;
        DensityState::new(self.apply_operator(rho.op()))
            .map_err(|e| Error::Numerical(format!("semigroup output is not a valid density state: {e}")))
    }

    /// States at t = 0, Δt, …, steps·Δt.
    pub fn trajectory(&self, rho0: &DensityState, steps: usize) -> Vec<Operator> {
        let mut out = Vec::with_capacity(steps + 1);
        let mut rho = rho0.op().clone();
        out.push(rho.clone());
        for _ in 0..steps {
            rho = self.apply_operator(&rho);
            out.push(rho.clone());
        }
        out
    }
}
