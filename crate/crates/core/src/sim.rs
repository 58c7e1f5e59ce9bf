//! Scenario-driven closed-loop episodes.
//!
//! The plant integrates `Ḣ = A φ(ξ) − m g e3 + d` with RK4 at `plant_dt_s`;
//! the controller runs every `controller_dt_s` and holds `ξ̇` in between.
//! Measured wrenches, which feed `Ḣ̃`, are the true `φ(ξ)` plus an optional
//! bias and Gaussian noise.

use std::fmt::Write as _;

use nalgebra::{DVector, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::control::{
    compute_xi_d, fb_lin_xidot, lyapunov_fb_lin, lyapunov_integral, momentum_jerk_xidot, regularized_xidot,
    xi0_torque_min, zeta_identity_residual, GainConfig, GainSet, LawOutput, MomentumContext, ReferenceSample,
    ThetaDot, TorqueMap,
};
use crate::error::{Error, Result};
use crate::momentum::{geometries, plant_step_held, ContactFrame, MomentumState, DEFAULT_GRAVITY};
use crate::sot::DynamicsSample;
use crate::wrench::{
    check_constraints, stack_gradient, stack_phi, stack_phi_inverse, ContactGeometry, GeometryConfig,
    SaturationPolicy, Wrench, WrenchStack,
};

/// `‖H̃‖` above this multiple of its initial value marks divergence.
pub const DIVERGENCE_RATIO: f64 = 1e3;

/// One spline knot of a momentum reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplineKnot {
    pub t_s: f64,
    pub h_d: [f64; 6],
}

/// Momentum reference `H_d(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceConfig {
    Constant {
        h_d: [f64; 6],
    },
    /// `offset + amplitude · sin(2π f t + phase)` per component.
    Sinusoid {
        offset: [f64; 6],
        amplitude: [f64; 6],
        frequency_hz: f64,
        #[serde(default)]
        phase_rad: f64,
    },
    /// Natural cubic spline through the knots, held constant outside them.
    Spline {
        knots: Vec<SplineKnot>,
    },
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig::Constant { h_d: [0.0; 6] }
    }
}

/// Evaluable reference trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Constant(Vector6<f64>),
    Sinusoid {
        offset: Vector6<f64>,
        amplitude: Vector6<f64>,
        omega: f64,
        phase: f64,
    },
    Spline {
        t: Vec<f64>,
        y: Vec<Vector6<f64>>,
        /// Second derivatives at the knots.
        m: Vec<Vector6<f64>>,
    },
}

impl ReferenceConfig {
    fn issues(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            ReferenceConfig::Constant { h_d } => {
                if !finite(h_d) {
                    out.push(format!("{path}.h_d: must be finite"));
                }
            }
            ReferenceConfig::Sinusoid { offset, amplitude, frequency_hz, phase_rad } => {
                if !finite(offset) || !finite(amplitude) || !phase_rad.is_finite() {
                    out.push(format!("{path}: offset, amplitude and phase_rad must be finite"));
                }
                if !(*frequency_hz >= 0.0) || !frequency_hz.is_finite() {
                    out.push(format!("{path}.frequency_hz: must be finite and >= 0, got {frequency_hz}"));
                }
            }
            ReferenceConfig::Spline { knots } => {
                if knots.len() < 2 {
                    out.push(format!("{path}.knots: at least two knots required"));
                }
                for (i, k) in knots.iter().enumerate() {
                    if !k.t_s.is_finite() || !finite(&k.h_d) {
                        out.push(format!("{path}.knots[{i}]: must be finite"));
                    }
                }
                if knots.windows(2).any(|w| !(w[1].t_s > w[0].t_s)) {
                    out.push(format!("{path}.knots: t_s must be strictly increasing"));
                }
            }
        }
        out
    }

    fn build(&self) -> Reference {
        match self {
            ReferenceConfig::Constant { h_d } => Reference::Constant(Vector6::from_column_slice(h_d)),
            ReferenceConfig::Sinusoid { offset, amplitude, frequency_hz, phase_rad } => Reference::Sinusoid {
                offset: Vector6::from_column_slice(offset),
                amplitude: Vector6::from_column_slice(amplitude),
                omega: std::f64::consts::TAU * frequency_hz,
                phase: *phase_rad,
            },
            ReferenceConfig::Spline { knots } => {
                let t: Vec<f64> = knots.iter().map(|k| k.t_s).collect();
                let y: Vec<Vector6<f64>> = knots.iter().map(|k| Vector6::from_column_slice(&k.h_d)).collect();
                let m = natural_spline_second_derivatives(&t, &y);
                Reference::Spline { t, y, m }
            }
        }
    }
}

/// Thomas algorithm for the natural-spline moment equations.
fn natural_spline_second_derivatives(t: &[f64], y: &[Vector6<f64>]) -> Vec<Vector6<f64>> {
    let n = t.len();
    let mut m = vec![Vector6::zeros(); n];
    if n < 3 {
        return m;
    }
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    // Interior unknowns 1..n-1: h[i-1] M[i-1] + 2(h[i-1]+h[i]) M[i] + h[i] M[i+1] = rhs[i]
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut rhs = vec![Vector6::zeros(); k];
    for j in 0..k {
        let i = j + 1;
        diag[j] = 2.0 * (h[i - 1] + h[i]);
        rhs[j] = ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]) * 6.0;
    }
    for j in 1..k {
        let w = h[j] / diag[j - 1];
        diag[j] -= w * h[j];
        let prev = rhs[j - 1];
        rhs[j] -= prev * w;
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for j in (0..k - 1).rev() {
        m[j + 1] = (rhs[j] - m[j + 2] * h[j + 1]) / diag[j];
    }
    m
}

impl Reference {
    pub fn sample(&self, t: f64) -> ReferenceSample {
        match self {
            Reference::Constant(h) => ReferenceSample { h_d: *h, ..Default::default() },
            Reference::Sinusoid { offset, amplitude, omega, phase } => {
                let (s, c) = (omega * t + phase).sin_cos();
                ReferenceSample {
                    h_d: offset + amplitude * s,
                    h_d_dot: amplitude * (omega * c),
                    h_d_ddot: amplitude * (-omega * omega * s),
                }
            }
            Reference::Spline { t: knots, y, m } => {
                let last = knots.len() - 1;
                if t <= knots[0] {
                    return ReferenceSample { h_d: y[0], ..Default::default() };
                }
                if t >= knots[last] {
                    return ReferenceSample { h_d: y[last], ..Default::default() };
                }
                let i = knots.partition_point(|&k| k <= t) - 1;
                let h = knots[i + 1] - knots[i];
                let a = (knots[i + 1] - t) / h;
                let b = (t - knots[i]) / h;
                ReferenceSample {
                    h_d: y[i] * a + y[i + 1] * b + (m[i] * (a * a * a - a) + m[i + 1] * (b * b * b - b)) * (h * h / 6.0),
                    h_d_dot: (y[i + 1] - y[i]) / h - m[i] * ((3.0 * a * a - 1.0) * h / 6.0)
                        + m[i + 1] * ((3.0 * b * b - 1.0) * h / 6.0),
                    h_d_ddot: m[i] * a + m[i + 1] * b,
                }
            }
        }
    }
}

/// Control law selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Law {
    /// `Ḧ* = Ḧ_d − K_d Ḣ̃ − K_p H̃`.
    #[serde(rename = "feedback-linearization")]
    FeedbackLinearization,
    /// Feedback linearization with an additional `− K_i I` term.
    #[serde(rename = "feedback-linearization-integral")]
    FeedbackLinearizationIntegral,
    /// Integral-augmented law with the `(I, H̃, ζ)` Lyapunov function.
    #[serde(rename = "integral-lyapunov")]
    IntegralLyapunov,
    /// Integral-augmented law plus `−k_e (ξ − ξ_d)`.
    #[serde(rename = "integral-lyapunov-regularized")]
    IntegralLyapunovRegularized,
}

impl Law {
    fn uses_integral_lyapunov(self) -> bool {
        matches!(self, Law::IntegralLyapunov | Law::IntegralLyapunovRegularized)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub law: Law,
    pub gains: GainConfig,
    /// Re-initialize `ξ ← φ⁻¹(f_measured)` every this many cycles.
    #[serde(default)]
    pub resync_every: Option<usize>,
    /// Add the torque-minimizing null-space term (needs `dynamics`).
    #[serde(default)]
    pub torque_min: bool,
    #[serde(default)]
    pub saturation: SaturationPolicy,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementConfig {
    /// Per-contact constant offsets `[fx fy fz Mx My Mz]` (N, N·m); empty for none.
    #[serde(default)]
    pub bias: Vec<[f64; 6]>,
    /// Standard deviation of additive Gaussian noise on every wrench component.
    #[serde(default)]
    pub noise_std: f64,
}

/// Additive momentum-rate disturbance active on `[start_s, stop_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    pub start_s: f64,
    pub stop_s: f64,
    pub wrench: [f64; 6],
}

/// Synthetic constant rigid-contact dynamics used for torque reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub joints: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactConfig {
    pub origin_m: [f64; 3],
    pub geometry: GeometryConfig,
}

fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}
fn default_plant_dt() -> f64 {
    1e-3
}
fn default_controller_dt() -> f64 {
    1e-2
}
fn default_floor() -> f64 {
    1e-2
}
fn default_name() -> String {
    "episode".into()
}

/// Scenario file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    /// Seed of the episode's random generator; required when noise is on.
    #[serde(default)]
    pub seed: Option<u64>,
    pub mass_kg: f64,
    #[serde(default = "default_gravity")]
    pub gravity_m_s2: f64,
    pub com_m: [f64; 3],
    /// `H(0)`: linear (kg·m/s) then angular (kg·m²/s).
    #[serde(default)]
    pub initial_momentum: [f64; 6],
    /// `I(0)`, the initial momentum-error integral.
    #[serde(default)]
    pub initial_integral: [f64; 6],
    /// `f(0)` per contact (N, N·m); defaults to the minimum-norm wrench
    /// realizing `Ḣ_d(0)`.
    #[serde(default)]
    pub initial_wrenches: Option<Vec<[f64; 6]>>,
    pub contacts: Vec<ContactConfig>,
    #[serde(default)]
    pub reference: ReferenceConfig,
    pub controller: ControllerConfig,
    #[serde(default)]
    pub measurement: MeasurementConfig,
    #[serde(default)]
    pub disturbances: Vec<DisturbanceConfig>,
    #[serde(default)]
    pub dynamics: Option<DynamicsConfig>,
    pub horizon_s: f64,
    #[serde(default = "default_plant_dt")]
    pub plant_dt_s: f64,
    #[serde(default = "default_controller_dt")]
    pub controller_dt_s: f64,
    /// Lower bound on the initial `‖H̃‖` used by the divergence threshold.
    #[serde(default = "default_floor")]
    pub divergence_floor: f64,
}

/// A validated, ready-to-run scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub frames: Vec<ContactFrame>,
    pub gains: GainSet,
    pub reference: Reference,
    pub dynamics: Option<DynamicsSample>,
    pub substeps: usize,
    pub cycles: usize,
}

fn ratio_as_integer(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let k = r.round();
    ((r - k).abs() <= 1e-9 * r.max(1.0) && k >= 1.0).then_some(k as usize)
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("parse error: {e}")]))
    }

    /// Validates every field and builds the runnable scenario; the error
    /// lists every violated constraint.
    pub fn validate(&self) -> Result<Scenario> {
        let mut issues = Vec::new();
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(self.mass_kg > 0.0) || !self.mass_kg.is_finite() {
            issues.push(format!("mass_kg: must be > 0, got {}", self.mass_kg));
        }
        if !(self.gravity_m_s2 >= 0.0) || !self.gravity_m_s2.is_finite() {
            issues.push(format!("gravity_m_s2: must be finite and >= 0, got {}", self.gravity_m_s2));
        }
        if !finite(&self.com_m) {
            issues.push("com_m: must be finite".into());
        }
        if !finite(&self.initial_momentum) {
            issues.push("initial_momentum: must be finite".into());
        }
        if !finite(&self.initial_integral) {
            issues.push("initial_integral: must be finite".into());
        }
        if self.contacts.is_empty() {
            issues.push("contacts: at least one contact is required".into());
        }
        let mut frames = Vec::new();
        for (i, c) in self.contacts.iter().enumerate() {
            let path = format!("contacts[{i}]");
            if !finite(&c.origin_m) {
                issues.push(format!("{path}.origin_m: must be finite"));
            }
            let g = c.geometry.issues(&format!("{path}.geometry"));
            if g.is_empty() {
                let geometry = ContactGeometry::try_from(c.geometry).expect("validated geometry");
                frames.push(ContactFrame::rigid(Vector3::from_column_slice(&c.origin_m), geometry));
            }
            issues.extend(g);
        }
        let n_c = self.contacts.len();
        if let Some(w) = &self.initial_wrenches {
            if w.len() != n_c {
                issues.push(format!("initial_wrenches: {} entries for {n_c} contacts", w.len()));
            }
            if !w.iter().all(|x| finite(x)) {
                issues.push("initial_wrenches: must be finite".into());
            }
        }
        issues.extend(self.reference.issues("reference"));

        let joints = self.dynamics.map(|d| d.joints).unwrap_or(0);
        let gains = match self.controller.gains.build(joints, "controller.gains") {
            Ok(g) => Some(g),
            Err(e) => {
                issues.extend(e);
                None
            }
        };
        if let Some(g) = &gains {
            if self.controller.law == Law::FeedbackLinearizationIntegral && g.ki.is_none() {
                issues.push("controller.gains.ki: required by feedback-linearization-integral".into());
            }
        }
        if self.controller.resync_every == Some(0) {
            issues.push("controller.resync_every: must be >= 1".into());
        }
        if self.controller.torque_min {
            if self.dynamics.is_none() {
                issues.push("controller.torque_min: requires dynamics".into());
            }
            if self.controller.gains.k_tau.is_none() {
                issues.push("controller.gains.k_tau: required by torque_min".into());
            }
        }
        let sat = &self.controller.saturation;
        if !(sat.eps_z > 0.0) || !(sat.atanh_margin > 0.0 && sat.atanh_margin < 1.0) || !(sat.tanh_sq_margin > 0.0 && sat.tanh_sq_margin < 1.0) {
            issues.push("controller.saturation: eps_z must be > 0 and margins in (0, 1)".into());
        }

        let m = &self.measurement;
        if !m.bias.is_empty() && m.bias.len() != n_c {
            issues.push(format!("measurement.bias: {} entries for {n_c} contacts", m.bias.len()));
        }
        if !m.bias.iter().all(|b| finite(b)) {
            issues.push("measurement.bias: must be finite".into());
        }
        if !(m.noise_std >= 0.0) || !m.noise_std.is_finite() {
            issues.push(format!("measurement.noise_std: must be finite and >= 0, got {}", m.noise_std));
        }
        if m.noise_std > 0.0 && self.seed.is_none() {
            issues.push("seed: required when measurement.noise_std > 0".into());
        }
        for (i, d) in self.disturbances.iter().enumerate() {
            if !(d.stop_s > d.start_s) || !finite(&[d.start_s, d.stop_s]) || !finite(&d.wrench) {
                issues.push(format!("disturbances[{i}]: needs finite values and stop_s > start_s"));
            }
        }
        if let Some(d) = &self.dynamics {
            if d.joints == 0 {
                issues.push("dynamics.joints: must be >= 1".into());
            }
        }

        if !(self.horizon_s > 0.0) || !self.horizon_s.is_finite() {
            issues.push(format!("horizon_s: must be > 0, got {}", self.horizon_s));
        }
        if !(self.plant_dt_s > 0.0) || !self.plant_dt_s.is_finite() {
            issues.push(format!("plant_dt_s: must be > 0, got {}", self.plant_dt_s));
        }
        if !(self.controller_dt_s > 0.0) || !self.controller_dt_s.is_finite() {
            issues.push(format!("controller_dt_s: must be > 0, got {}", self.controller_dt_s));
        }
        let substeps = ratio_as_integer(self.controller_dt_s, self.plant_dt_s);
        if substeps.is_none() {
            issues.push(format!(
                "controller_dt_s: must be an integer multiple of plant_dt_s ({} / {})",
                self.controller_dt_s, self.plant_dt_s
            ));
        }
        let cycles = ratio_as_integer(self.horizon_s, self.controller_dt_s);
        if cycles.is_none() {
            issues.push(format!(
                "horizon_s: must be an integer multiple of controller_dt_s ({} / {})",
                self.horizon_s, self.controller_dt_s
            ));
        }
        if !(self.divergence_floor > 0.0) || !self.divergence_floor.is_finite() {
            issues.push(format!("divergence_floor: must be > 0, got {}", self.divergence_floor));
        }

        let dynamics = match self.dynamics {
            Some(d) if d.joints > 0 && n_c > 0 => match DynamicsSample::synthetic(d.joints, n_c, d.seed) {
                Ok(s) => Some(s),
                Err(e) => {
                    issues.push(format!("dynamics: {e}"));
                    None
                }
            },
            _ => None,
        };
        if let Some(s) = &dynamics {
            if let Err(e) = TorqueMap::new(s, None) {
                issues.push(format!("dynamics: {e}"));
            }
        }

        if !issues.is_empty() {
            return Err(Error::Config(issues));
        }
        Ok(Scenario {
            config: self.clone(),
            frames,
            gains: gains.expect("validated gains"),
            reference: self.reference.build(),
            dynamics,
            substeps: substeps.expect("validated"),
            cycles: cycles.expect("validated"),
        })
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        ScenarioConfig::from_json(text)?.validate()
    }

    pub fn n_contacts(&self) -> usize {
        self.frames.len()
    }

    fn disturbance(&self, t: f64) -> Vector6<f64> {
        self.config
            .disturbances
            .iter()
            .filter(|d| t >= d.start_s && t < d.stop_s)
            .fold(Vector6::zeros(), |acc, d| acc + Vector6::from_column_slice(&d.wrench))
    }
}

/// One controller cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub h: Vector6<f64>,
    pub h_d: Vector6<f64>,
    pub h_err: Vector6<f64>,
    pub hdot_err: Vector6<f64>,
    pub i_err: Vector6<f64>,
    pub zeta: Vector6<f64>,
    /// Lyapunov value of the active law.
    pub v: f64,
    pub xi: Vec<f64>,
    /// True wrenches `φ(ξ)`.
    pub f: Vec<f64>,
    /// Five margins per contact, in [`crate::wrench::ConstraintReport`] order.
    pub margins: Vec<f64>,
    /// `‖τ‖`, NaN without dynamics.
    pub tau_norm: f64,
    pub xi_norm: f64,
    pub xi_dot_norm: f64,
    /// Frobenius norm of the stacked `Φ(ξ)`.
    pub phi_norm: f64,
    pub law_residual: f64,
    /// `‖ζ̇ + ζ + K_o⁻¹H̃‖`, NaN for the feedback-linearizing laws.
    pub zeta_identity_residual: f64,
    pub saturated: bool,
    pub rank_degraded: bool,
    pub diverged: bool,
}

/// Per-cycle log of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub n_contacts: usize,
    pub rows: Vec<LogRow>,
    pub completed: bool,
    pub diverged: bool,
    pub seed: u64,
}

const MARGIN_NAMES: [&str; 5] = ["unilateral", "friction", "cop_y", "cop_x", "torsional"];
const WRENCH_NAMES: [&str; 6] = ["fx", "fy", "fz", "mx", "my", "mz"];

impl EpisodeLog {
    pub fn header(n_contacts: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for name in ["h", "h_d", "h_err", "hdot_err", "i_err", "zeta"] {
            h.extend((0..6).map(|i| format!("{name}_{i}")));
        }
        h.push("v".into());
        for k in 0..n_contacts {
            h.extend((0..6).map(|i| format!("xi{k}_{i}")));
        }
        for k in 0..n_contacts {
            h.extend(WRENCH_NAMES.iter().map(|w| format!("f{k}_{w}")));
        }
        for k in 0..n_contacts {
            h.extend(MARGIN_NAMES.iter().map(|m| format!("margin{k}_{m}")));
        }
        for name in [
            "tau_norm",
            "xi_norm",
            "xi_dot_norm",
            "phi_norm",
            "law_residual",
            "zeta_identity_residual",
            "saturated",
            "rank_degraded",
            "diverged",
        ] {
            h.push(name.into());
        }
        h
    }

    /// CSV text: one header row, then one row per cycle, floats with 17
    /// significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = Self::header(self.n_contacts).join(",");
        out.push('\n');
        for r in &self.rows {
            let mut vals: Vec<f64> = vec![r.t];
            for v in [&r.h, &r.h_d, &r.h_err, &r.hdot_err, &r.i_err, &r.zeta] {
                vals.extend(v.iter());
            }
            vals.push(r.v);
            vals.extend(&r.xi);
            vals.extend(&r.f);
            vals.extend(&r.margins);
            vals.extend([r.tau_norm, r.xi_norm, r.xi_dot_norm, r.phi_norm, r.law_residual, r.zeta_identity_residual]);
            let mut line = String::new();
            for (i, v) in vals.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                let _ = write!(line, "{v:.16e}");
            }
            for flag in [r.saturated, r.rank_degraded, r.diverged] {
                line.push_str(if flag { ",1" } else { ",0" });
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn summary(&self, name: &str) -> Summary {
        let last = self.rows.last();
        let max = |f: fn(&LogRow) -> f64| self.rows.iter().map(f).fold(0.0, f64::max);
        Summary {
            name: name.to_string(),
            seed: self.seed,
            completed: self.completed,
            diverged: self.diverged,
            success: self.completed && !self.diverged,
            cycles: self.rows.len(),
            final_t: last.map_or(0.0, |r| r.t),
            final_h_err_norm: last.map_or(f64::NAN, |r| r.h_err.norm()),
            max_h_err_norm: max(|r| r.h_err.norm()),
            max_xi_norm: max(|r| r.xi_norm),
            final_tau_norm: last.map(|r| r.tau_norm).filter(|v| !v.is_nan()),
            min_margin: self
                .rows
                .iter()
                .flat_map(|r| r.margins.iter().cloned())
                .fold(f64::INFINITY, f64::min),
            any_saturation: self.rows.iter().any(|r| r.saturated),
            any_rank_degraded: self.rows.iter().any(|r| r.rank_degraded),
        }
    }
}

/// Episode outcome at a glance.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub name: String,
    pub seed: u64,
    pub completed: bool,
    pub diverged: bool,
    /// Horizon reached without divergence.
    pub success: bool,
    pub cycles: usize,
    pub final_t: f64,
    pub final_h_err_norm: f64,
    pub max_h_err_norm: f64,
    pub max_xi_norm: f64,
    /// `‖τ‖` at the last cycle, when dynamics are configured.
    pub final_tau_norm: Option<f64>,
    pub min_margin: f64,
    pub any_saturation: bool,
    pub any_rank_degraded: bool,
}

impl Summary {
    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let tau = self.final_tau_norm.map_or("none".to_string(), |v| format!("{v:e}"));
        let fields: [(&str, String); 14] = [
            ("name", self.name.clone()),
            ("seed", self.seed.to_string()),
            ("completed", self.completed.to_string()),
            ("diverged", self.diverged.to_string()),
            ("success", self.success.to_string()),
            ("cycles", self.cycles.to_string()),
            ("final_t", format!("{:e}", self.final_t)),
            ("final_h_err_norm", format!("{:e}", self.final_h_err_norm)),
            ("max_h_err_norm", format!("{:e}", self.max_h_err_norm)),
            ("max_xi_norm", format!("{:e}", self.max_xi_norm)),
            ("final_tau_norm", tau),
            ("min_margin", format!("{:e}", self.min_margin)),
            ("any_saturation", self.any_saturation.to_string()),
            ("any_rank_degraded", self.any_rank_degraded.to_string()),
        ];
        fields.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn add_measurement(f: &WrenchStack, bias: &[[f64; 6]], noise: Option<(&Normal<f64>, &mut ChaCha8Rng)>) -> WrenchStack {
    let mut out = f.clone();
    for (k, w) in out.0.iter_mut().enumerate() {
        if let Some(b) = bias.get(k) {
            w.0 += Vector6::from_column_slice(b);
        }
    }
    if let Some((dist, rng)) = noise {
        for w in out.0.iter_mut() {
            for v in w.0.iter_mut() {
                *v += dist.sample(rng);
            }
        }
    }
    out
}

/// Runs one episode to the horizon or until divergence.
pub fn run_episode(s: &Scenario) -> Result<EpisodeLog> {
    let cfg = &s.config;
    let geoms = geometries(&s.frames);
    let n_c = s.n_contacts();
    let policy = cfg.controller.saturation;
    let seed = cfg.seed.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (cfg.measurement.noise_std > 0.0)
        .then(|| Normal::new(0.0, cfg.measurement.noise_std).expect("validated noise"));
    let dt_c = cfg.controller_dt_s;
    let dt_p = dt_c / s.substeps as f64;

    let mut state = MomentumState {
        h: Vector6::from_column_slice(&cfg.initial_momentum),
        com: Vector3::from_column_slice(&cfg.com_m),
        i_err: Vector6::from_column_slice(&cfg.initial_integral),
        zeta: Vector6::zeros(),
        mass: cfg.mass_kg,
        gravity: cfg.gravity_m_s2,
    };
    let r0 = s.reference.sample(0.0);
    let f0 = match &cfg.initial_wrenches {
        Some(w) => WrenchStack(w.iter().map(|x| Wrench(Vector6::from_column_slice(x))).collect()),
        None => compute_xi_d(&r0.h_d_dot, &s.frames, &state.com, state.mass, state.gravity, &policy)?.1,
    };
    let (mut xis, mut saturated_init) = stack_phi_inverse(&f0, &geoms, &policy)?;
    let threshold = DIVERGENCE_RATIO * (state.h - r0.h_d).norm().max(cfg.divergence_floor);
    let torque_map = match &s.dynamics {
        Some(d) => Some(TorqueMap::new(d, None)?),
        None => None,
    };
    let href = |t: f64| s.reference.sample(t).h_d;

    let mut rows = Vec::with_capacity(s.cycles + 1);
    let mut diverged = false;
    for k in 0..=s.cycles {
        let t = k as f64 * dt_c;
        let r = s.reference.sample(t);
        let mut saturated = std::mem::take(&mut saturated_init);

        let f_true = stack_phi(&xis, &geoms)?;
        let mut f_meas = add_measurement(&f_true, &cfg.measurement.bias, noise.as_ref().map(|d| (d, &mut rng)));
        let resync = matches!(cfg.controller.resync_every, Some(every) if k > 0 && k % every == 0);
        let f_true = if resync {
            let (x, sat) = stack_phi_inverse(&f_meas, &geoms, &policy)?;
            xis = x;
            saturated |= sat;
            let f = stack_phi(&xis, &geoms)?;
            f_meas = add_measurement(&f, &cfg.measurement.bias, None);
            f
        } else {
            f_true
        };

        let ctx = MomentumContext::new(&state, &s.frames, &xis, &f_meas, &r)?;
        state.zeta = ctx.zeta(&s.gains);
        let mut rank_degraded = false;
        let law = match cfg.controller.law {
            Law::FeedbackLinearization => fb_lin_xidot(&ctx, &s.gains, false, None),
            Law::FeedbackLinearizationIntegral => fb_lin_xidot(&ctx, &s.gains, true, None),
            Law::IntegralLyapunov => momentum_jerk_xidot(&ctx, &s.gains, None),
            Law::IntegralLyapunovRegularized => {
                let (xi_d, _, sat) = compute_xi_d(&r.h_d_dot, &s.frames, &state.com, state.mass, state.gravity, &policy)?;
                saturated |= sat;
                regularized_xidot(&ctx, &s.gains, None, &xis, &xi_d)
            }
        };
        let (mut xi_dot, law_residual, nullspace) = match law {
            Ok(LawOutput { xi_dot, residual, nullspace, .. }) => (xi_dot, residual, Some(nullspace)),
            Err(Error::DegradedAuthority { residual, xi_dot, .. }) => {
                rank_degraded = true;
                (DVector::from_vec(xi_dot), residual, None)
            }
            Err(e) => return Err(e),
        };

        let f_vec = f_true.to_dvector();
        let mut tau_norm = f64::NAN;
        if let Some(map) = &torque_map {
            let tau = map.torque(&f_vec)?.tau;
            if let (true, Some(n)) = (cfg.controller.torque_min, &nullspace) {
                let xi0 = xi0_torque_min(map, &f_vec, &ctx.phi, n, &xi_dot, &tau, s.gains.k_tau.as_ref(), &ThetaDot::Zero)?;
                xi_dot += n * xi0;
            }
            tau_norm = tau.norm();
        }

        let (v, zeta_res) = if cfg.controller.law.uses_integral_lyapunov() {
            (
                lyapunov_integral(&state.i_err, &ctx.h_err, &state.zeta, &s.gains),
                zeta_identity_residual(&ctx, &s.gains, &xi_dot)?.norm(),
            )
        } else {
            (lyapunov_fb_lin(&ctx.h_err, &ctx.hdot_err, &s.gains), f64::NAN)
        };

        let margins: Vec<f64> = f_true.0.iter().zip(&geoms).flat_map(|(w, g)| check_constraints(w, g).margins()).collect();
        let xi_vec = xis.to_dvector();
        let finite = xi_vec.iter().chain(xi_dot.iter()).chain(state.h.iter()).all(|x| x.is_finite());
        if !finite || ctx.h_err.norm() > threshold {
            diverged = true;
        }
        rows.push(LogRow {
            t,
            h: state.h,
            h_d: r.h_d,
            h_err: ctx.h_err,
            hdot_err: ctx.hdot_err,
            i_err: state.i_err,
            zeta: state.zeta,
            v,
            xi: xi_vec.as_slice().to_vec(),
            f: f_vec.as_slice().to_vec(),
            margins,
            tau_norm,
            xi_norm: xi_vec.norm(),
            xi_dot_norm: xi_dot.norm(),
            phi_norm: stack_gradient(&xis, &geoms)?.norm(),
            law_residual,
            zeta_identity_residual: zeta_res,
            saturated,
            rank_degraded,
            diverged,
        });
        if diverged || k == s.cycles {
            break;
        }

        for j in 0..s.substeps {
            let tp = t + j as f64 * dt_p;
            let (next, next_xi) =
                plant_step_held(&state, &s.frames, &xis, &xi_dot, dt_p, &s.disturbance(tp), Some((&href, tp)))?;
            state = next;
            xis = next_xi;
        }
    }
    debug_assert_eq!(n_c, rows[0].f.len() / 6);
    Ok(EpisodeLog {
        n_contacts: n_c,
        completed: !diverged,
        diverged,
        rows,
        seed,
    })
}

/// Outcome of one suite entry; failures are captured, not propagated.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: String,
    pub outcome: Result<(EpisodeLog, Summary)>,
}

/// Runs independent episodes on `parallelism` threads (0 = all cores).
/// Results keep the input order.
pub fn run_suite(scenarios: &[Scenario], parallelism: usize) -> Result<Vec<SuiteResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        scenarios
            .par_iter()
            .map(|s| SuiteResult {
                name: s.config.name.clone(),
                outcome: run_episode(s).map(|log| {
                    let summary = log.summary(&s.config.name);
                    (log, summary)
                }),
            })
            .collect()
    }))
}

/// Suite file: a base scenario and merge-patch variants applied to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub base: Value,
    #[serde(default)]
    pub variants: Vec<Value>,
}

impl SuiteConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("parse error: {e}")]))
    }

    /// One scenario per variant (the base alone when there are none). Every
    /// variant is validated; errors are prefixed with the variant index.
    pub fn expand(&self) -> Result<Vec<Scenario>> {
        let patches: Vec<Value> = if self.variants.is_empty() {
            vec![Value::Object(Default::default())]
        } else {
            self.variants.clone()
        };
        let mut out = Vec::new();
        let mut issues = Vec::new();
        for (i, patch) in patches.iter().enumerate() {
            let mut doc = self.base.clone();
            json_patch::merge(&mut doc, patch);
            let parsed = serde_json::from_value::<ScenarioConfig>(doc)
                .map_err(|e| Error::Config(vec![format!("parse error: {e}")]))
                .and_then(|c| c.validate());
            match parsed {
                Ok(s) => out.push(s),
                Err(Error::Config(list)) => issues.extend(list.into_iter().map(|m| format!("variants[{i}]: {m}"))),
                Err(e) => issues.push(format!("variants[{i}]: {e}")),
            }
        }
        if !issues.is_empty() {
            return Err(Error::Config(issues));
        }
        Ok(out)
    }
}
