//! Commutative subalgebras of the n×n matrices and conditional expectations
//! onto them.
//!
//! A commutative *-subalgebra is represented by its minimal projections
//! {P_k}: mutually orthogonal, summing to the identity. Every element is a
//! combination Σ c_k P_k, and the commutant consists of the block-diagonal
//! operators.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::operator::{DensityState, Operator, C64, ZERO};

const PROJECTION_TOL: f64 = 1e-10;
const COMMUTE_TOL: f64 = 1e-9;
const CLUSTER_TOL: f64 = 1e-8;
const RESOLUTION_TOL: f64 = 1e-8;

/// Blocks whose probability does not exceed this get coefficient zero.
pub const NULL_BLOCK: f64 = 1e-14;

/// A joint spectral resolution {P_k} with the eigenvalue of every generator
/// on every block.
#[derive(Clone, Debug)]
pub struct CommutativeAlgebra {
    dim: usize,
    projections: Vec<Operator>,
    ranks: Vec<usize>,
    /// labels[k][j]: eigenvalue of generator j on block k
    labels: Vec<Vec<C64>>,
}

impl CommutativeAlgebra {
    /// The trivial algebra ℂ·I.
    pub fn trivial(dim: usize) -> Self {
        CommutativeAlgebra {
            dim,
            projections: vec![Operator::identity(dim)],
            ranks: vec![dim],
            labels: vec![vec![]],
        }
    }

    /// Validates a family of projections as a resolution of the identity.
    pub fn from_projections(projections: Vec<Operator>) -> Result<Self> {
        let Some(first) = projections.first() else {
            return Err(Error::invalid("projections", "empty family"));
        };
        let n = first.dim();
        let mut total = Operator::zeros(n);
        let mut ranks = Vec::with_capacity(projections.len());
        for (k, p) in projections.iter().enumerate() {
            p.check_dim(n, "projection")?;
            let herm = p.hermiticity_defect();
            let idem = (p * p - p).max_abs();
            if herm > PROJECTION_TOL || idem > PROJECTION_TOL {
                return Err(Error::invalid(
                    format!("projections[{k}]"),
                    format!("not an orthogonal projection (P - P* {herm:.2e}, P² - P {idem:.2e})"),
                ));
            }
            for (l, q) in projections.iter().enumerate().skip(k + 1) {
                let overlap = (p * q).max_abs();
                if overlap > PROJECTION_TOL {
                    return Err(Error::invalid(
                        format!("projections[{k}]"),
                        format!("not orthogonal to projections[{l}] ({overlap:.2e})"),
                    ));
                }
            }
            total += p;
            ranks.push(p.trace().re.round() as usize);
        }
        let defect = (total - Operator::identity(n)).max_abs();
        if defect > PROJECTION_TOL {
            return Err(Error::invalid(
                "projections",
                format!("do not sum to the identity ({defect:.2e})"),
            ));
        }
        let labels = vec![vec![]; projections.len()];
        Ok(CommutativeAlgebra {
            dim: n,
            projections,
            ranks,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn projections(&self) -> &[Operator] {
        &self.projections
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn labels(&self) -> &[Vec<C64>] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.projections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projections.is_empty()
    }

    /// Σ_k c_k P_k
    pub fn element(&self, coefficients: &[C64]) -> Result<Operator> {
        if coefficients.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: coefficients.len(),
                context: "algebra coefficients",
            });
        }
        let mut out = Operator::zeros(self.dim);
        for (p, &c) in self.projections.iter().zip(coefficients) {
            out += &p.scale(c);
        }
        Ok(out)
    }

    /// Block averages trace(P_k A)/rank(P_k). For A in the algebra this is
    /// its classical representative k ↦ ι(A)(k).
    pub fn coordinates(&self, a: &Operator) -> Vec<C64> {
        self.projections
            .iter()
            .zip(&self.ranks)
            .map(|(p, &r)| p.trace_product(a) / r as f64)
            .collect()
    }

    /// Distance from A to Σ_k coordinates_k P_k.
    pub fn membership_defect(&self, a: &Operator) -> f64 {
        let c = self.coordinates(a);
        (a - self.element(&c).expect("coordinate count matches")).max_abs()
    }

    /// max_k ‖[A, P_k]‖; zero exactly when A is in the commutant.
    pub fn commutant_defect(&self, a: &Operator) -> f64 {
        self.projections
            .iter()
            .map(|p| a.commutator(p).norm())
            .fold(0.0, f64::max)
    }

    /// Merges blocks into a coarser algebra. `groups` must partition the
    /// block indices.
    pub fn coarsen(&self, groups: &[Vec<usize>]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        let mut projections = Vec::with_capacity(groups.len());
        for g in groups {
            let mut p = Operator::zeros(self.dim);
            for &k in g {
                if k >= self.len() || seen[k] {
                    return Err(Error::invalid("groups", format!("block {k} missing or repeated")));
                }
                seen[k] = true;
                p += &self.projections[k];
            }
            projections.push(p);
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("groups", "do not cover every block"));
        }
        Self::from_projections(projections)
    }
}

/// Orthonormal basis of a block together with its rank.
struct Block {
    basis: DMatrix<C64>,
    labels: Vec<C64>,
}

/// Splits `block` into the eigenspaces of the Hermitian operator `h`
/// compressed to it. Returns (eigenvalue, sub-basis) pairs.
fn split_hermitian(basis: &DMatrix<C64>, h: &Operator) -> Vec<(f64, DMatrix<C64>)> {
    let compressed = Operator::from_matrix_unchecked(basis.adjoint() * h.matrix() * basis);
    let (values, vectors) = compressed.eigh();
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = CLUSTER_TOL * scale;
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, v) in values.iter().enumerate() {
        match clusters.last_mut() {
            Some(c) if (v - values[*c.last().unwrap()]).abs() <= tol => c.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    clusters
        .into_iter()
        .map(|c| {
            let mean = c.iter().map(|&i| values[i]).sum::<f64>() / c.len() as f64;
            let sub = DMatrix::from_fn(vectors.nrows(), c.len(), |r, s| vectors[(r, c[s])]);
            (mean, basis * sub)
        })
        .collect()
}

/// Minimal joint spectral resolution of a family of commuting normal
/// matrices.
pub fn joint_spectral_projections(generators: &[Operator]) -> Result<CommutativeAlgebra> {
    let Some(first) = generators.first() else {
        return Err(Error::invalid("generators", "need at least one generator"));
    };
    let n = first.dim();
    for g in generators {
        g.check_dim(n, "generators")?;
    }
    let mut worst: f64 = 0.0;
    for (i, g) in generators.iter().enumerate() {
        let normality = g.commutator(&g.adjoint()).norm();
        if normality > COMMUTE_TOL {
            return Err(Error::NonNormal {
                index: i,
                norm: normality,
            });
        }
        for h in &generators[i + 1..] {
            worst = worst.max(g.commutator(h).norm());
            worst = worst.max(g.commutator(&h.adjoint()).norm());
        }
    }
    if worst > COMMUTE_TOL {
        return Err(Error::NonCommuting { max_norm: worst });
    }

    let mut blocks = vec![Block {
        basis: DMatrix::identity(n, n),
        labels: vec![],
    }];
    for g in generators {
        let re = g.hermitian_part();
        let im = (g - g.adjoint()).scale(C64::new(0.0, -0.5));
        let mut next = Vec::new();
        for block in blocks {
            for (a, by_re) in split_hermitian(&block.basis, &re) {
                for (b, basis) in split_hermitian(&by_re, &im) {
                    let mut labels = block.labels.clone();
                    labels.push(C64::new(a, b));
                    next.push(Block { basis, labels });
                }
            }
        }
        blocks = next;
    }

    let projections: Vec<Operator> = blocks
        .iter()
        .map(|b| Operator::from_matrix_unchecked(&b.basis * b.basis.adjoint()).hermitian_part())
        .collect();
    let ranks: Vec<usize> = blocks.iter().map(|b| b.basis.ncols()).collect();
    // refine labels from the projections rather than the cluster means
    let labels: Vec<Vec<C64>> = projections
        .iter()
        .zip(&ranks)
        .map(|(p, &r)| generators.iter().map(|g| p.trace_product(g) / r as f64).collect())
        .collect();
    let algebra = CommutativeAlgebra {
        dim: n,
        projections,
        ranks,
        labels,
    };
    for (j, g) in generators.iter().enumerate() {
        let coeffs: Vec<C64> = algebra.labels.iter().map(|l| l[j]).collect();
        let residual = (g - algebra.element(&coeffs)?).max_abs();
        if residual > RESOLUTION_TOL {
            return Err(Error::Numerical(format!(
                "joint diagonalisation residual {residual:.2e} for generator {j}"
            )));
        }
    }
    Ok(algebra)
}

/// Block coefficients of 𝑬(A|𝓒): trace(ρP_kA)/p_k on non-null blocks, 0
/// on null blocks.
pub fn conditional_coefficients(a: &Operator, algebra: &CommutativeAlgebra, rho: &DensityState) -> Result<Vec<C64>> {
    a.check_dim(algebra.dim(), "conditional_expectation")?;
    rho.op().check_dim(algebra.dim(), "conditional_expectation state")?;
    let defect = algebra.commutant_defect(a);
    if defect > COMMUTE_TOL {
        return Err(Error::NotInCommutant { max_norm: defect });
    }
    Ok(algebra
        .projections()
        .iter()
        .map(|p| {
            let prob = rho.op().trace_product(p).re;
            if prob > NULL_BLOCK {
                let rho_p = rho.op() * p;
                rho_p.trace_product(a) / prob
            } else {
                ZERO
            }
        })
        .collect())
}

/// The conditional expectation 𝑬(A|𝓒) of an operator in the commutant of
/// 𝓒 with respect to the state ρ.
pub fn conditional_expectation(a: &Operator, algebra: &CommutativeAlgebra, rho: &DensityState) -> Result<Operator> {
    let coeffs = conditional_coefficients(a, algebra, rho)?;
    algebra.element(&coeffs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub index: usize,
    pub probability: f64,
    pub values: Vec<C64>,
}

/// The finite probability space (Ω, 𝐏) carried by a commutative algebra in
/// a state.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalRepresentation {
    pub outcomes: Vec<Outcome>,
}

impl ClassicalRepresentation {
    /// Σ_k p_k f(k)
    pub fn expectation(&self, f: impl Fn(&Outcome) -> C64) -> C64 {
        self.outcomes.iter().map(|o| f(o) * o.probability).sum()
    }

    /// Σ_k p_k a_k b_k for classical representatives a, b.
    pub fn moment(&self, a: &[C64], b: &[C64]) -> C64 {
        self.outcomes
            .iter()
            .map(|o| a[o.index] * b[o.index] * o.probability)
            .sum()
    }
}

pub fn classical_representation(algebra: &CommutativeAlgebra, rho: &DensityState) -> Result<ClassicalRepresentation> {
    rho.op().check_dim(algebra.dim(), "classical_representation")?;
    let outcomes = algebra
        .projections()
        .iter()
        .enumerate()
        .map(|(k, p)| Outcome {
            index: k,
            probability: rho.op().trace_product(p).re,
            values: algebra.labels()[k].clone(),
        })
        .collect();
    Ok(ClassicalRepresentation { outcomes })
}
