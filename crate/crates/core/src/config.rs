//! Run configuration in TOML.
//!
//! ```toml
//! dim = 2
//! dt = 1e-3
//! T = 2.0
//! n_trajectories = 200
//! seed = 7
//! hamiltonian = [[0, 1, 0.5, 0.0], [1, 0, 0.5, 0.0]]
//! channels = [[[0, 1, 1.0, 0.0]]]
//! rho0 = [[0, 0, 0.5, 0.0], [1, 1, 0.5, 0.0]]
//! filter = "bks"
//!
//! [scheme]
//! kind = "homodyne"   # homodyne | imperfect | counting
//! kappa = 0.0
//! phase = 0.0
//!
//! [observables]
//! sz = [[0, 0, -1.0, 0.0], [1, 1, 1.0, 0.0]]
//!
//! [control]
//! expression = "clip(ma(Y, 0.1), -1, 1)"
//! hamiltonian = [[0, 1, 1.0, 0.0], [1, 0, 1.0, 0.0]]
//! ```
//!
//! Matrices are lists of `[row, col, re, im]` entries; repeated positions
//! add up. Validation errors name the offending key.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filters::{ExpressionLaw, Feedback, FilterKind, MeasurementScheme, SchemeKind, POSITIVITY_FAIL};
use crate::lindblad::SystemModel;
use crate::operator::{DensityState, Operator};
use crate::persist::read_text;
use crate::trajectory::Grid;

pub type SparseEntry = (usize, usize, f64, f64);

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub kind: String,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub expression: String,
    pub hamiltonian: Vec<SparseEntry>,
}

/// The file as written, before validation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub dim: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default = "default_trajectories")]
    pub n_trajectories: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub filter: Option<String>,
    /// Output every `stride`-th grid point in ensemble and master tables.
    #[serde(default)]
    pub stride: Option<usize>,
    /// Min eigenvalue below which a run aborts; `-inf` disables.
    #[serde(default)]
    pub positivity_floor: Option<f64>,
    pub hamiltonian: Vec<SparseEntry>,
    #[serde(default)]
    pub channels: Vec<Vec<SparseEntry>>,
    pub rho0: Vec<SparseEntry>,
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub observables: BTreeMap<String, Vec<SparseEntry>>,
    #[serde(default)]
    pub control: Option<ControlConfig>,
}

fn default_trajectories() -> usize {
    1
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::Parse {
                line,
                message: e.message().to_string(),
            }
        })
    }

    /// SHA-256 over the canonical serialization; formatting and comments
    /// do not change it.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn validate(&self) -> Result<RunConfig> {
        RunConfig::from_raw(self)
    }
}

/// A validated configuration.
pub struct RunConfig {
    pub dim: usize,
    pub model: SystemModel,
    pub scheme: MeasurementScheme,
    pub rho0: DensityState,
    pub grid: Grid,
    pub n_trajectories: usize,
    pub seed: u64,
    pub filter: FilterKind,
    pub stride: usize,
    pub positivity_floor: Option<f64>,
    /// Sorted by name.
    pub observables: Vec<(String, Operator)>,
    pub feedback: Option<Feedback>,
    pub hash: String,
}

fn sparse(dim: usize, entries: &[SparseEntry], field: &str) -> Result<Operator> {
    for (k, &(r, c, re, im)) in entries.iter().enumerate() {
        if r >= dim || c >= dim {
            return Err(Error::invalid(
                field,
                format!("entry {k} at ({r}, {c}) lies outside a {dim}x{dim} matrix"),
            ));
        }
        if !re.is_finite() || !im.is_finite() {
            return Err(Error::invalid(field, format!("entry {k} is not finite")));
        }
    }
    Operator::from_sparse(dim, entries).map_err(|e| Error::invalid(field, e.to_string()))
}

fn hermitian(dim: usize, entries: &[SparseEntry], field: &str) -> Result<Operator> {
    let op = sparse(dim, entries, field)?;
    let defect = op.hermiticity_defect();
    if defect > crate::operator::VALIDATION_TOL {
        return Err(Error::invalid(
            field,
            format!("not Hermitian (‖A − A*‖ = {defect:.3e})"),
        ));
    }
    Ok(op)
}

fn rename(field: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Invalid { message, .. } => Error::invalid(field, message),
        other => Error::invalid(field, other.to_string()),
    }
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let dim = raw.dim;
        if dim == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        let grid = Grid::new(raw.horizon, raw.dt)?;
        if raw.n_trajectories == 0 {
            return Err(Error::invalid("n_trajectories", "must be at least 1"));
        }
        let h = hermitian(dim, &raw.hamiltonian, "hamiltonian")?;
        let channels = raw
            .channels
            .iter()
            .enumerate()
            .map(|(j, c)| sparse(dim, c, &format!("channels[{j}]")))
            .collect::<Result<Vec<_>>>()?;
        let model = SystemModel::new(h.clone(), channels)?;
        let rho = sparse(dim, &raw.rho0, "rho0")?;
        let rho0 = DensityState::new(rho).map_err(rename("rho0"))?;
        let kind: SchemeKind = raw.scheme.kind.parse().map_err(rename("scheme.kind"))?;
        if !raw.scheme.phase.is_finite() {
            return Err(Error::invalid("scheme.phase", "must be finite"));
        }
        let scheme = match kind {
            SchemeKind::Homodyne | SchemeKind::Counting if raw.scheme.kappa != 0.0 => {
                return Err(Error::invalid("scheme.kappa", "only the imperfect scheme takes kappa"));
            }
            SchemeKind::Homodyne => MeasurementScheme::homodyne(),
            SchemeKind::Counting => MeasurementScheme::counting(),
            SchemeKind::Imperfect => MeasurementScheme::imperfect(raw.scheme.kappa).map_err(rename("scheme.kappa"))?,
        }
        .with_phase(raw.scheme.phase);
        if model.channels().len() != 1 {
            return Err(Error::invalid(
                "channels",
                format!("filtering needs exactly one channel, found {}", model.channels().len()),
            ));
        }
        let filter = match &raw.filter {
            None => FilterKind::Bks,
            Some(f) => f.parse().map_err(rename("filter"))?,
        };
        let stride = raw.stride.unwrap_or(1);
        if stride == 0 {
            return Err(Error::invalid("stride", "must be at least 1"));
        }
        let positivity_floor = match raw.positivity_floor {
            None => Some(POSITIVITY_FAIL),
            Some(f) if f == f64::NEG_INFINITY => None,
            Some(f) if f.is_finite() && f <= 0.0 => Some(f),
            Some(f) => {
                return Err(Error::invalid(
                    "positivity_floor",
                    format!("must be ≤ 0 or -inf, got {f}"),
                ))
            }
        };
        let observables = raw
            .observables
            .iter()
            .map(|(name, entries)| {
                if name.is_empty() || name.contains([',', '\n']) {
                    return Err(Error::invalid("observables", format!("unusable name `{name}`")));
                }
                Ok((name.clone(), sparse(dim, entries, &format!("observables.{name}"))?))
            })
            .collect::<Result<Vec<_>>>()?;
        let feedback = match &raw.control {
            None => None,
            Some(c) => {
                let law: ExpressionLaw = c.expression.parse().map_err(rename("control.expression"))?;
                let h1 = hermitian(dim, &c.hamiltonian, "control.hamiltonian")?;
                Some(Feedback::new(Box::new(law), h, h1)?)
            }
        };
        Ok(RunConfig {
            dim,
            model,
            scheme,
            rho0,
            grid,
            n_trajectories: raw.n_trajectories,
            seed: raw.seed,
            filter,
            stride,
            positivity_floor,
            observables,
            feedback,
            hash: raw.hash(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        RawConfig::parse(&read_text(path)?)?.validate()
    }
}
