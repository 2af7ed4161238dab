//! Random operators, states and models for property checks.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::lindblad::SystemModel;
use crate::operator::{DensityState, Operator, C64};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Entries i.i.d. standard complex Gaussian, scaled by 1/√n.
pub fn operator<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Operator {
    let s = 1.0 / (n as f64).sqrt();
    Operator::from_matrix_unchecked(DMatrix::from_fn(n, n, |_, _| gaussian(rng) * s))
}

pub fn hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Operator {
    operator(rng, n).hermitian_part()
}

/// A full-rank density matrix G G*/trace(G G*).
pub fn density<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DensityState {
    let g = operator(rng, n);
    let p = &g * g.adjoint();
    let tr = p.trace().re;
    DensityState::new(p.scale_re(1.0 / tr).hermitian_part()).expect("G G* is a state")
}

pub fn unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Operator {
    let h = hermitian(rng, n);
    h.hermitian_function(|e| C64::new(0.0, 3.0 * e).exp())
}

/// Random Hermitian Hamiltonian with `channels` random coupling operators.
pub fn model<R: Rng + ?Sized>(rng: &mut R, n: usize, channels: usize) -> SystemModel {
    let h = hermitian(rng, n);
    let ls = (0..channels).map(|_| operator(rng, n)).collect();
    SystemModel::new(h, ls).expect("random model is valid")
}
