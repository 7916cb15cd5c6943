//! Run configuration: the JSON schema, defaults and resolution.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::output::{read_checkpoint, Checkpoint};
use super::CliError;
use crate::dirac::EigenMethod;
use crate::flow::{validate_schedule, Flow, FlowConfig};
use crate::geometry::{
    smooth_random_field, Geometry, MapField, SpinStructure, TargetKind, TargetManifold, TorusDomain,
};

/// Tag of the run-configuration schema.
pub const RUN_FORMAT: &str = "dhflow-run/1";

fn two_pi() -> f64 {
    TAU
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub n1: usize,
    pub n2: usize,
    #[serde(default = "two_pi")]
    pub l1: f64,
    #[serde(default = "two_pi")]
    pub l2: f64,
    #[serde(default)]
    pub spin: SpinStructure,
}

fn default_max_mode() -> i64 {
    2
}

/// Named generator of the initial map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// Constant map; the default point is the target's base point.
    Constant {
        #[serde(default)]
        point: Option<Vec<f64>>,
    },
    /// Linear winding `e^{i(k1 x + k2 y)}` in the first circle of the target.
    Winding { k1: i64, k2: i64 },
    /// `π(base + amplitude · η)` for a smooth random `η` with unit C⁰ norm.
    Perturbed {
        base: Box<InitialData>,
        amplitude: f64,
        /// Defaults to the run seed.
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "default_max_mode")]
        max_mode: i64,
    },
    /// Resume from a checkpoint written by `flow`.
    Checkpoint { path: PathBuf },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Constant { point: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub count: usize,
    /// Defaults to `1e-6` times the free spectral radius.
    pub kernel_tol: Option<f64>,
    pub method: EigenMethod,
    /// Dump the eigenvectors next to the report.
    pub eigenvectors: bool,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            count: 8,
            kernel_tol: None,
            method: EigenMethod::Auto,
            eigenvectors: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationConfig {
    /// Strictly decreasing α values.
    pub schedule: Vec<f64>,
    /// Local-energy threshold; defaults to a tenth of the initial energy.
    pub threshold: Option<f64>,
}

/// Allowed values of the validation checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub hermiticity: f64,
    pub spectral_pairing: f64,
    pub transport_isometry: f64,
    pub lipschitz_drift: f64,
    pub energy_identity_ratio: f64,
    pub variational: f64,
    /// Smallest Richardson ratio of the difference quotients (4 at second order).
    pub variational_improvement: f64,
    pub curvature_pairing: f64,
    pub projection_lower: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermiticity: 1e-11,
            spectral_pairing: 1e-8,
            transport_isometry: 1e-10,
            lipschitz_drift: 0.25,
            energy_identity_ratio: 1.8,
            variational: 1e-4,
            variational_improvement: 3.0,
            curvature_pairing: 1e-6,
            projection_lower: 0.5f64.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    /// Random maps per operator check.
    pub maps: usize,
    /// Amplitude of the random maps around the initial map.
    pub map_amplitude: f64,
    /// Largest Fourier mode of the random maps, spinors and directions.
    pub max_mode: i64,
    pub distance_pairs: usize,
    pub transport_pairs: usize,
    /// Largest perturbation amplitude of the Lipschitz suite (halved once).
    pub lipschitz_amplitude: f64,
    pub lipschitz_trials: usize,
    /// Finite-difference step; the error is measured at half of it and the
    /// convergence order from the steps `h, h/2, h/4`.
    pub fd_step: f64,
    pub curvature_fd_step: f64,
    /// Time step of the energy-identity runs (halved once).
    pub energy_dt: f64,
    pub energy_time: f64,
    pub tolerances: Tolerances,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            maps: 4,
            map_amplitude: 0.3,
            max_mode: 1,
            distance_pairs: 10_000,
            transport_pairs: 1000,
            lipschitz_amplitude: 1e-2,
            lipschitz_trials: 3,
            fd_step: 2e-3,
            curvature_fd_step: 1e-4,
            energy_dt: 2e-3,
            energy_time: 0.1,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Overridden by `--out`.
    pub directory: Option<PathBuf>,
    /// Write every k-th row of the time series (rows with events always).
    pub sample_stride: usize,
    /// Checkpoint every k-th step; 0 keeps only the final state.
    pub checkpoint_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: None,
            sample_stride: 1,
            checkpoint_stride: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub format: Option<String>,
    pub domain: DomainConfig,
    pub target: TargetKind,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub initial: InitialData,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub continuation: ContinuationConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Single source of randomness; falls back to `flow.seed`.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn config_error(message: impl Into<String>) -> CliError {
    CliError::Config {
        message: message.into(),
        line: None,
        column: None,
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config {
            message: e.to_string(),
            line: Some(e.line()),
            column: Some(e.column()),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn geometry(&self) -> Result<Geometry, CliError> {
        let d = &self.domain;
        let domain = TorusDomain::new(d.n1, d.n2, d.l1, d.l2, d.spin)
            .map_err(|e| config_error(format!("domain: {e}")))?;
        let target =
            TargetManifold::new(self.target).map_err(|e| config_error(format!("target: {e}")))?;
        Ok(Geometry::new(domain, target))
    }

    /// Applies the command-line overrides, checks every block and fills in
    /// all defaults that depend on the geometry.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self, CliError> {
        if let Some(f) = &self.format {
            if f != RUN_FORMAT {
                return Err(config_error(format!(
                    "format: expected {RUN_FORMAT}, got {f}"
                )));
            }
        }
        self.format = Some(RUN_FORMAT.into());
        let seed = seed.or(self.seed).unwrap_or(self.flow.seed);
        self.seed = Some(seed);
        self.flow.seed = seed;
        if out.is_some() {
            self.output.directory = out;
        }
        let geometry = self.geometry()?;
        let flow = Flow::new(geometry.clone(), self.flow.clone())
            .map_err(|e| config_error(format!("flow: {e}")))?;
        self.flow.stationary_tol = Some(flow.stationary_tol());
        self.flow.kernel_tol = Some(flow.kernel_tol());
        self.flow.ball_radius = Some(flow.ball_radius());
        if self.spectrum.count < 4 {
            return Err(config_error("spectrum.count: must be at least 4"));
        }
        match self.spectrum.kernel_tol {
            Some(t) if !(t > 0.0 && t.is_finite()) => {
                return Err(config_error("spectrum.kernel_tol: must be positive"))
            }
            Some(_) => {}
            None => self.spectrum.kernel_tol = Some(flow.kernel_tol()),
        }
        if !self.continuation.schedule.is_empty() {
            validate_schedule(&self.continuation.schedule)
                .map_err(|e| config_error(format!("continuation.schedule: {e}")))?;
        }
        if self.validate.max_mode < 1 {
            return Err(config_error("validate.max_mode: must be at least 1"));
        }
        if self.output.sample_stride == 0 {
            return Err(config_error("output.sample_stride: must be at least 1"));
        }
        self.check_initial(&self.initial, &geometry)?;
        Ok(self)
    }

    fn check_initial(&self, init: &InitialData, geometry: &Geometry) -> Result<(), CliError> {
        match init {
            InitialData::Constant { point: Some(p) } if p.len() != geometry.q() => {
                Err(config_error(format!(
                    "initial.point: expected {} coordinates, got {}",
                    geometry.q(),
                    p.len()
                )))
            }
            InitialData::Winding { .. } => {
                let [l1, l2] = geometry.domain.lengths();
                if (l1 - TAU).abs() > 1e-12 || (l2 - TAU).abs() > 1e-12 {
                    return Err(config_error("initial: winding maps need side lengths 2π"));
                }
                Ok(())
            }
            InitialData::Perturbed {
                base,
                amplitude,
                max_mode,
                ..
            } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(config_error("initial.amplitude: must be non-negative"));
                }
                if *max_mode < 1 {
                    return Err(config_error("initial.max_mode: must be at least 1"));
                }
                if matches!(**base, InitialData::Checkpoint { .. }) {
                    return Err(config_error("initial.base: cannot perturb a checkpoint"));
                }
                self.check_initial(base, geometry)
            }
            _ => Ok(()),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.flow.seed)
    }

    /// Hash of everything that determines a trajectory from a given state.
    pub fn config_hash(&self) -> String {
        let key = serde_json::json!({
            "domain": self.domain,
            "target": self.target,
            "flow": self.flow,
        });
        let digest = Sha256::digest(key.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Builds the initial map (projected onto the target), or loads the
    /// checkpoint it names.
    pub fn initial_data(&self, geometry: &Geometry) -> Result<Start, CliError> {
        match &self.initial {
            InitialData::Checkpoint { path } => {
                let ckpt = read_checkpoint(path, geometry)?;
                if ckpt.header.config_hash != self.config_hash() {
                    return Err(config_error(format!(
                        "initial.path: checkpoint {} was written with a different configuration",
                        path.display()
                    )));
                }
                Ok(Start::Checkpoint(Box::new(ckpt)))
            }
            init => Ok(Start::Map(self.build_map(init, geometry)?)),
        }
    }

    fn build_map(&self, init: &InitialData, geometry: &Geometry) -> Result<MapField, CliError> {
        let domain = &geometry.domain;
        let target = &geometry.target;
        let q = geometry.q();
        let raw = match init {
            InitialData::Constant { point } => {
                let p = point.clone().unwrap_or_else(|| base_point(target));
                MapField::constant(domain, &p)
            }
            InitialData::Winding { k1, k2 } => {
                let r = target.radius();
                let circle = MapField::winding(domain, [*k1, *k2], r);
                let mut rest = match target.kind() {
                    TargetKind::Sphere { .. } => vec![0.0; q],
                    TargetKind::Torus { .. } => base_point(target),
                };
                rest[..2].fill(0.0);
                MapField::from_fn(domain, q, |_| rest.clone()).axpy(1.0, &embed(&circle, q))
            }
            InitialData::Perturbed {
                base,
                amplitude,
                seed,
                max_mode,
            } => {
                let base = self.build_map(base, geometry)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(self.seed()));
                let eta = smooth_random_field(domain, q, *max_mode, &mut rng);
                base.axpy(*amplitude, &eta)
            }
            InitialData::Checkpoint { .. } => {
                return Err(config_error("initial: a checkpoint cannot be nested"))
            }
        };
        raw.project(target)
            .map_err(|e| config_error(format!("initial: {e}")))
    }
}

/// Where a run starts.
pub enum Start {
    Map(MapField),
    Checkpoint(Box<Checkpoint>),
}

/// The last coordinate axis scaled to the radius for spheres, and
/// `(r, 0)` in every factor for circle products.
fn base_point(target: &TargetManifold) -> Vec<f64> {
    let q = target.ambient_dim();
    let r = target.radius();
    match target.kind() {
        TargetKind::Sphere { dim: 1, .. } => vec![r, 0.0],
        TargetKind::Sphere { .. } => {
            let mut p = vec![0.0; q];
            p[q - 1] = r;
            p
        }
        TargetKind::Torus { .. } => (0..q).map(|a| if a % 2 == 0 { r } else { 0.0 }).collect(),
    }
}

/// Pads a planar field with zeros to `q` components, keeping it in the
/// first two.
fn embed(circle: &MapField, q: usize) -> MapField {
    let mut out = MapField::from_values(q, vec![0.0; circle.node_count() * q]);
    for i in 0..circle.node_count() {
        out.node_mut(i)[..2].copy_from_slice(circle.node(i));
    }
    out
}
