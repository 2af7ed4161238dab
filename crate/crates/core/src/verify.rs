//! Self-checks run by `qfilt verify`: a compact property suite per module,
//! on seeded random instances.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::cond::{conditional_coefficients, conditional_expectation, joint_spectral_projections};
use crate::error::Result;
use crate::filters::{normalize, FilterKind, FilterState, MeasurementScheme, StepOperators};
use crate::fock::{self, ModeTruncation};
use crate::ito::{self, ito_product, Differential, ItoSpec};
use crate::lindblad::{heisenberg_evolve, lindblad_heisenberg, semigroup_evolve};
use crate::operator::{Operator, C64};
use crate::persist::{parse_record, record_to_csv, Metadata};
use crate::random;
use crate::trajectory::{Grid, Simulator};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    /// Worst measured value against the bound, or the failure message.
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<11} {:<36} {:<4}  {}",
            self.module,
            self.name,
            if self.passed { "pass" } else { "FAIL" },
            self.detail
        )
    }
}

fn bounded(module: &'static str, name: &'static str, value: Result<f64>, bound: f64) -> CheckResult {
    match value {
        Ok(v) => CheckResult {
            module,
            name,
            passed: v <= bound,
            detail: format!("{v:.2e} (≤ {bound:.0e})"),
        },
        Err(e) => CheckResult {
            module,
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn qp_core() -> Vec<CheckResult> {
    let m = "qp-core";
    let semigroup = || -> Result<f64> {
        let mut r = rng(1);
        let mut worst: f64 = 0.0;
        for n in 2..=4 {
            let model = random::model(&mut r, n, 2);
            let rho = random::density(&mut r, n);
            let a = semigroup_evolve(&semigroup_evolve(&rho, &model, 0.3)?, &model, 0.4)?;
            let b = semigroup_evolve(&rho, &model, 0.7)?;
            worst = worst.max((a.op() - b.op()).max_abs());
        }
        Ok(worst)
    };
    let duality = || -> Result<f64> {
        let mut r = rng(2);
        let mut worst: f64 = 0.0;
        for n in 2..=4 {
            let model = random::model(&mut r, n, 2);
            let rho = random::density(&mut r, n);
            let x = random::hermitian(&mut r, n);
            let lhs = semigroup_evolve(&rho, &model, 0.5)?.expect(&x);
            let rhs = rho.expect(&heisenberg_evolve(&x, &model, 0.5)?);
            worst = worst.max((lhs - rhs).norm());
        }
        Ok(worst)
    };
    let unital = || -> Result<f64> {
        let mut r = rng(3);
        let model = random::model(&mut r, 4, 3);
        Ok(lindblad_heisenberg(&Operator::identity(4), &model)?.max_abs())
    };
    let trace = || -> Result<f64> {
        let mut r = rng(4);
        let model = random::model(&mut r, 3, 2);
        let rho = random::density(&mut r, 3);
        Ok((semigroup_evolve(&rho, &model, 2.0)?.op().trace() - 1.0).norm())
    };
    vec![
        bounded(m, "semigroup property", semigroup(), 1e-8),
        bounded(m, "Schrödinger/Heisenberg duality", duality(), 1e-8),
        bounded(m, "generator annihilates identity", unital(), 1e-12),
        bounded(m, "trace preservation", trace(), 1e-10),
    ]
}

fn qp_cond() -> Vec<CheckResult> {
    let m = "qp-cond";
    let mut r = rng(5);
    let n = 6;
    let u = random::unitary(&mut r, n);
    let diag = |vals: &[f64]| &(&u * &Operator::from_real_diagonal(vals)) * &u.adjoint();
    let y = diag(&[0.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
    let coarse_y = diag(&[0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    let rho = random::density(&mut r, n);
    let setup = || -> Result<_> {
        let fine = joint_spectral_projections(std::slice::from_ref(&y))?;
        let coarse = joint_spectral_projections(std::slice::from_ref(&coarse_y))?;
        Ok((fine, coarse))
    };
    let (fine, coarse) = match setup() {
        Ok(v) => v,
        Err(e) => {
            return vec![CheckResult {
                module: m,
                name: "joint spectral resolution",
                passed: false,
                detail: e.to_string(),
            }]
        }
    };
    // operators in the commutant: block-diagonal w.r.t. the fine projections
    let commutant = |r: &mut ChaCha20Rng| {
        let z = random::operator(r, n);
        fine.projections()
            .iter()
            .fold(Operator::zeros(n), |acc, p| &acc + &(&(p * &z) * p))
    };
    let defining = {
        let mut worst: f64 = 0.0;
        let mut res = Ok(());
        for _ in 0..5 {
            let a = commutant(&mut r);
            match conditional_expectation(&a, &fine, &rho) {
                Ok(e) => {
                    for p in fine.projections() {
                        let lhs = rho.op().trace_product(&(p * &a));
                        let rhs = rho.op().trace_product(&(p * &e));
                        worst = worst.max((lhs - rhs).norm());
                    }
                }
                Err(err) => res = Err(err),
            }
        }
        res.map(|_| worst)
    };
    let tower = (|| -> Result<f64> {
        let a = commutant(&mut r);
        let inner = conditional_expectation(&a, &fine, &rho)?;
        let twice = conditional_expectation(&inner, &coarse, &rho)?;
        let direct = conditional_expectation(&a, &coarse, &rho)?;
        Ok((&twice - &direct).max_abs())
    })();
    let invariance = (|| -> Result<f64> {
        let a = commutant(&mut r);
        let e = conditional_expectation(&a, &fine, &rho)?;
        Ok((rho.expect(&e) - rho.expect(&a)).norm())
    })();
    let least_squares = (|| -> Result<f64> {
        let a = commutant(&mut r);
        let c = conditional_coefficients(&a, &fine, &rho)?;
        let e = fine.element(&c)?;
        let err = |b: &Operator| {
            let d = &a - b;
            rho.expect(&(&d.adjoint() * &d)).re
        };
        let best = err(&e);
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let coeffs: Vec<C64> = c.iter().map(|z| z + random::operator(&mut r, 1).get(0, 0)).collect();
            worst = worst.max(best - err(&fine.element(&coeffs)?));
        }
        Ok(worst.max(0.0))
    })();
    vec![
        bounded(m, "defining property", defining, 1e-10),
        bounded(m, "tower property", tower, 1e-11),
        bounded(m, "state invariance", invariance, 1e-11),
        bounded(m, "least-squares optimality", least_squares, 1e-11),
    ]
}

fn fock_checks() -> Vec<CheckResult> {
    let m = "fock";
    let n = fock::DEFAULT_CUTOFF;
    let weyl = (|| -> Result<f64> {
        let f = ModeTruncation::new(n, C64::new(0.3, -0.2))?;
        let g = ModeTruncation::new(n, C64::new(-0.1, 0.4))?;
        Ok(fock::weyl_relation_residual(&f, &g))
    })();
    let gaussian = (|| -> Result<f64> {
        let f = ModeTruncation::new(n, C64::new(0.3, 0.35))?;
        let norm2 = f.amplitude().norm_sqr();
        let mut worst: f64 = 0.0;
        for k in 0..=40 {
            let x = -2.0 + 0.1 * k as f64;
            let z = fock::quadrature_char_function(&f, x)?;
            worst = worst.max((z - C64::new((-0.5 * x * x * norm2).exp(), 0.0)).norm());
        }
        Ok(worst)
    })();
    let poisson = (|| -> Result<f64> {
        let f = ModeTruncation::new(n, C64::new(0.6, 0.8))?;
        let a2 = f.amplitude().norm_sqr();
        let mut worst: f64 = 0.0;
        for k in 0..=40 {
            let x = -2.0 + 0.1 * k as f64;
            let closed = (a2 * (C64::new(0.0, x).exp() - 1.0)).exp();
            worst = worst.max((fock::counting_char_function(&f, x) - closed).norm());
        }
        Ok(worst)
    })();
    let qsde = (|| -> Result<f64> {
        let f = fock::StepFunction::new(vec![0.0, 0.5, 1.0], vec![C64::new(0.4, 0.1), C64::new(-0.2, 0.3)])?;
        let g = fock::StepFunction::constant(C64::new(0.2, -0.1), 0.0, 1.0)?;
        let h = fock::StepFunction::constant(C64::new(-0.3, 0.2), 0.0, 1.0)?;
        let report = fock::weyl_qsde_check(&f, &g, &h, 1.0, 200, 2)?;
        Ok(report.ratios.iter().map(|r| (r - 0.5).abs()).fold(0.0, f64::max))
    })();
    vec![
        bounded(m, "Weyl relations (low photon layers)", weyl, 1e-8),
        bounded(m, "Gaussian quadrature law", gaussian, 1e-8),
        bounded(m, "Poisson counting law", poisson, 1e-8),
        bounded(m, "Weyl QSDE first-order (|ratio − ½|)", qsde, 0.1),
    ]
}

fn ito_checks() -> Vec<CheckResult> {
    use Differential::*;
    let m = "ito";
    let expected = |a, b| match (a, b) {
        (A, Lambda) => Some(A),
        (A, AStar) => Some(Dt),
        (Lambda, Lambda) => Some(Lambda),
        (Lambda, AStar) => Some(AStar),
        _ => None,
    };
    let mismatches = Differential::ALL
        .iter()
        .flat_map(|&a| Differential::ALL.iter().map(move |&b| (a, b)))
        .filter(|&(a, b)| ito_product(a, b) != expected(a, b))
        .count();
    let unitarity = (|| -> Result<f64> {
        let mut r = rng(6);
        let mut worst: f64 = 0.0;
        for n in 2..=4 {
            let model = random::model(&mut r, n, 1);
            worst = worst.max(ito::unitarity_differential(&model)?.max_abs());
        }
        Ok(worst)
    })();
    let quadrature = (|| -> Result<f64> {
        let db = ito::quadrature_differential(0.7);
        let sq = ito::ito_correction(&db, &db)?;
        sq.max_abs_difference(&ItoSpec::scalar(&[(Dt, C64::new(1.0, 0.0))]))
    })();
    let poisson = (|| -> Result<f64> {
        let dl = ito::poisson_differential(C64::new(0.3, -0.5));
        ito::ito_correction(&dl, &dl)?.max_abs_difference(&dl)
    })();
    vec![
        CheckResult {
            module: m,
            name: "Itô table (16 products)",
            passed: mismatches == 0,
            detail: format!("{mismatches} mismatches"),
        },
        bounded(m, "d(U*U) = 0 for HP coefficients", unitarity, 1e-12),
        bounded(m, "(dB)² = dt", quadrature, 0.0),
        bounded(m, "(dΛ^f)² = dΛ^f", poisson, 1e-15),
    ]
}

fn filter_checks() -> Vec<CheckResult> {
    let m = "filters";
    let dt = 1e-3;
    let duality = (|| -> Result<f64> {
        let mut r = rng(7);
        let model = random::model(&mut r, 3, 1);
        let scheme = MeasurementScheme::homodyne();
        let ops = StepOperators::new(&model, &scheme)?;
        let l = model.channel()?.clone();
        let state = FilterState::unnormalized(&random::density(&mut r, 3));
        let dy = 0.04;
        let next = ops.step(FilterKind::Zakai, &scheme, &state, dy, dt)?;
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let x = random::operator(&mut r, 3);
            let drift = lindblad_heisenberg(&x, &model)?;
            let gain = &(&l.adjoint() * &x) + &(&x * &l);
            let heis = &(&x + &drift.scale_re(dt)) + &gain.scale_re(dy);
            worst = worst.max((next.functional(&x) - state.functional(&heis)).norm());
        }
        Ok(worst)
    })();
    let consistency = (|| -> Result<f64> {
        let mut r = rng(8);
        let model = random::model(&mut r, 2, 1);
        let scheme = MeasurementScheme::homodyne();
        let ops = StepOperators::new(&model, &scheme)?;
        let rho = random::density(&mut r, 2);
        let z = ops.step(FilterKind::Zakai, &scheme, &FilterState::unnormalized(&rho), 0.0, dt)?;
        let b = ops.step(FilterKind::Bks, &scheme, &FilterState::normalized(&rho), 0.0, dt)?;
        Ok((&normalize(&z)?.0.rho - &b.rho).max_abs() / dt)
    })();
    let kappa_zero = (|| -> Result<f64> {
        let mut r = rng(9);
        let model = random::model(&mut r, 2, 1);
        let rho = random::density(&mut r, 2);
        let grid = Grid::new(0.2, dt)?;
        let vac = Simulator::new(&model, MeasurementScheme::homodyne())?;
        let imp = Simulator::new(&model, MeasurementScheme::imperfect(0.0)?)?;
        let record = vac.simulate(&rho, grid, 1, |_, _| {})?;
        let mut a = Vec::new();
        vac.replay(&record, FilterKind::Zakai, &rho, |_, s| a.push(s.rho.clone()))?;
        let mut b = Vec::new();
        let mut imperfect = record.clone();
        imperfect.scheme = MeasurementScheme::imperfect(0.0)?;
        imp.replay(&imperfect, FilterKind::Zakai, &rho, |_, s| b.push(s.rho.clone()))?;
        Ok(a.iter().zip(&b).map(|(x, y)| (x - y).max_abs()).fold(0.0, f64::max))
    })();
    vec![
        bounded(m, "Zakai step / Heisenberg duality", duality, 1e-12),
        bounded(m, "KS consistency at dY = 0 (per dt)", consistency, 10.0),
        bounded(m, "imperfect κ = 0 equals vacuum", kappa_zero, 1e-12),
    ]
}

fn trajectory_checks() -> Vec<CheckResult> {
    let m = "trajectory";
    let mut r = rng(10);
    let model = random::model(&mut r, 2, 1);
    let rho = random::density(&mut r, 2);
    let replay = (|| -> Result<f64> {
        let mut worst: f64 = 0.0;
        for scheme in [MeasurementScheme::homodyne(), MeasurementScheme::counting()] {
            let sim = Simulator::new(&model, scheme)?;
            let grid = Grid::new(0.5, 1e-3)?;
            let mut a = Vec::new();
            let record = sim.simulate(&rho, grid, 3, |_, s| a.push(s.rho.clone()))?;
            let record = parse_record(&record_to_csv(&record, Metadata::new(None, 3)))?.0;
            let mut b = Vec::new();
            sim.replay(&record, FilterKind::Bks, &rho, |_, s| b.push(s.rho.clone()))?;
            worst = worst.max(if a == b { 0.0 } else { 1.0 });
        }
        Ok(worst)
    })();
    let determinism = (|| -> Result<f64> {
        let sim = Simulator::new(&model, MeasurementScheme::homodyne())?;
        let grid = Grid::new(0.5, 1e-3)?;
        let a = sim.simulate(&rho, grid, 42, |_, _| {})?;
        let b = sim.simulate(&rho, grid, 42, |_, _| {})?;
        Ok(if a == b { 0.0 } else { 1.0 })
    })();
    let wiener = (|| -> Result<f64> {
        let free = crate::lindblad::SystemModel::single(model.hamiltonian().clone(), Operator::zeros(2))?;
        let sim = Simulator::new(&free, MeasurementScheme::homodyne())?;
        let record = sim.simulate(&rho, Grid::new(1.0, 1e-4)?, 5, |_, _| {})?;
        let qv: f64 = record.increments.iter().map(|d| d * d).sum();
        Ok((qv - 1.0).abs())
    })();
    vec![
        bounded(m, "record round trip + replay bit-exact", replay, 0.0),
        bounded(m, "seed determinism", determinism, 0.0),
        bounded(m, "uncoupled record quadratic variation", wiener, 0.05),
    ]
}

/// Runs every suite.
pub fn run_all() -> Vec<CheckResult> {
    [
        qp_core(),
        qp_cond(),
        fock_checks(),
        ito_checks(),
        filter_checks(),
        trajectory_checks(),
    ]
    .concat()
}

pub fn render(results: &[CheckResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    out.push_str(&format!("{} checks, {} failed\n", results.len(), failed));
    out
}
