use serde::{Deserialize, Serialize};

use super::FlowError;
use crate::dirac::{default_kernel_tol, EigenMethod};
use crate::geometry::{Geometry, TubeConstants};

/// Whether the spinor constraint is solved along the flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpinorMode {
    /// `ψ` is re-solved after every step and feeds the curvature source.
    #[default]
    Coupled,
    /// `ψ ≡ 0`: the α-harmonic map flow.
    Disabled,
}

/// Perturb-and-test restart sampler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RestartPolicy {
    /// Candidates tried per singular time (each draw is used with both signs).
    pub max_attempts: usize,
    /// C⁰ amplitudes of the perturbation relative to the target radius,
    /// cycled through draw by draw.
    pub amplitudes: Vec<f64>,
    /// Largest Fourier mode of the perturbation.
    pub max_mode: i64,
    /// Restarts per run before giving up.
    pub max_restarts: usize,
}

impl Default for RestartPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 64,
            amplitudes: vec![0.05, 0.025, 0.0125, 0.00625],
            max_mode: 2,
            max_restarts: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub alpha: f64,
    pub dt: f64,
    pub t_max: f64,
    pub max_steps: usize,
    /// Threshold on `∫|∂_t u|²`; defaults to `1e-8 · Area`.
    pub stationary_tol: Option<f64>,
    /// Allowed energy increase per step relative to `E^α(u₀)`.
    pub energy_tol_rel: f64,
    /// Kernel threshold; defaults to `1e-6` times the free spectral radius.
    pub kernel_tol: Option<f64>,
    /// Smallest admissible spectral gap `Λ_min`.
    pub gap_min: f64,
    pub spinor: SpinorMode,
    pub spectrum_count: usize,
    pub eigen_method: EigenMethod,
    /// Operators up to this dimension are assembled densely.
    pub dense_limit: usize,
    pub max_dt_halvings: usize,
    pub restart: RestartPolicy,
    /// C⁰ radius `R` of admissible perturbations; defaults to the tube radius.
    pub ball_radius: Option<f64>,
    /// Start every continuation stage from the previous stage's endpoint.
    pub warm_start: bool,
    /// Keep every `sample_stride`-th accepted state in the trajectory.
    pub sample_stride: usize,
    pub seed: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            alpha: 1.1,
            dt: 1e-2,
            t_max: 1.0,
            max_steps: 100_000,
            stationary_tol: None,
            energy_tol_rel: 1e-10,
            kernel_tol: None,
            gap_min: 1e-3,
            spinor: SpinorMode::Coupled,
            spectrum_count: 8,
            eigen_method: EigenMethod::Auto,
            dense_limit: 600,
            max_dt_halvings: 10,
            restart: RestartPolicy::default(),
            ball_radius: None,
            warm_start: true,
            sample_stride: 10,
            seed: 0,
        }
    }
}

fn positive(name: &str, value: f64) -> Result<(), FlowError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(FlowError::InvalidConfig(format!(
            "{name} must be positive and finite, got {value}"
        )))
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.alpha.is_finite() && self.alpha >= 1.0) {
            return Err(FlowError::InvalidConfig(format!(
                "alpha must be at least 1, got {}",
                self.alpha
            )));
        }
        positive("dt", self.dt)?;
        positive("t_max", self.t_max)?;
        positive("energy_tol_rel", self.energy_tol_rel)?;
        positive("gap_min", self.gap_min)?;
        if let Some(v) = self.stationary_tol {
            positive("stationary_tol", v)?;
        }
        if let Some(v) = self.kernel_tol {
            positive("kernel_tol", v)?;
        }
        if let Some(v) = self.ball_radius {
            positive("ball_radius", v)?;
        }
        if self.spectrum_count < 4 {
            return Err(FlowError::InvalidConfig(
                "spectrum_count must be at least 4".into(),
            ));
        }
        if self.sample_stride == 0 {
            return Err(FlowError::InvalidConfig(
                "sample_stride must be at least 1".into(),
            ));
        }
        if self.restart.amplitudes.is_empty() {
            return Err(FlowError::InvalidConfig(
                "restart.amplitudes must not be empty".into(),
            ));
        }
        for &a in &self.restart.amplitudes {
            positive("restart amplitude", a)?;
        }
        if self.restart.max_mode < 1 {
            return Err(FlowError::InvalidConfig(
                "restart.max_mode must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn resolve(&self, geometry: &Geometry) -> Resolved {
        let kernel_tol = self
            .kernel_tol
            .unwrap_or_else(|| default_kernel_tol(geometry));
        Resolved {
            stationary_tol: self.stationary_tol.unwrap_or(1e-8 * geometry.domain.area()),
            kernel_tol,
            gap_threshold: (10.0 * kernel_tol).max(self.gap_min),
            ball_radius: self
                .ball_radius
                .unwrap_or_else(|| TubeConstants::for_target(&geometry.target).ball_radius),
        }
    }
}

/// Thresholds with defaults filled in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Resolved {
    pub stationary_tol: f64,
    pub kernel_tol: f64,
    /// The gap below which a time counts as singular.
    pub gap_threshold: f64,
    pub ball_radius: f64,
}
