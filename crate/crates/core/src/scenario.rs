//! Scenario files: a TOML document describing one experiment.
//!
//! Unknown keys are rejected. Omitted optional sections fall back to the
//! defaults documented on each field.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::attitude::{self, Quat};
use crate::dynamics::ContactParams;
use crate::error::{Error, Result};
use crate::model::{DumbbellConfig, Radii};
use crate::mpc::{GyroscopicTerm, SolverSettings, Weights};

/// Standard gravity (m/s²).
pub const STANDARD_GRAVITY: f64 = 9.80665;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// End of the simulated interval (s).
    pub t_end: f64,
    /// Seed for randomized scenarios; deterministic runs ignore it.
    #[serde(default)]
    pub seed: u64,
    pub sim: SimSection,
    pub dumbbell: DumbbellConfig,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub mpc: MpcSection,
    #[serde(default)]
    pub gait: Option<GaitSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    /// Integrator step (s).
    #[serde(default = "SimSection::default_dt")]
    pub dt: f64,
    /// Gravitational acceleration vector; `[0, 0, g]` pulls toward `-z`.
    #[serde(default)]
    pub gravity: [f64; 3],
    /// Linear damping coefficient (N·s/m).
    #[serde(default)]
    pub damping: f64,
    /// Ground contact; absent means free flight.
    #[serde(default)]
    pub contact: Option<ContactParams>,
}

impl SimSection {
    fn default_dt() -> f64 {
        0.005
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    #[serde(default)]
    pub omega: [f64; 3],
    /// Roll, pitch, yaw in degrees (intrinsic Z-Y-X). Ignored when
    /// `quaternion` is given.
    #[serde(default)]
    pub orientation_deg: [f64; 3],
    /// `[w, x, y, z]`, normalized on load.
    #[serde(default)]
    pub quaternion: Option<[f64; 4]>,
    #[serde(default)]
    pub position: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
}

impl Default for InitialState {
    fn default() -> Self {
        Self {
            omega: [0.0; 3],
            orientation_deg: [0.0; 3],
            quaternion: None,
            position: [0.0; 3],
            velocity: [0.0; 3],
        }
    }
}

impl InitialState {
    pub fn orientation(&self) -> Quat {
        match self.quaternion {
            Some([w, x, y, z]) => attitude::normalized(&Quat::new(w, x, y, z)),
            None => attitude::from_euler_degrees(self.orientation_deg),
        }
    }
}

/// Piecewise-constant angular velocity reference: each entry holds from `t`
/// until the next entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferencePoint {
    pub t: f64,
    pub omega: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcSection {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Time between solves (s); an integer multiple of `sim.dt`.
    #[serde(default = "MpcSection::default_solve_period")]
    pub solve_period: f64,
    /// Prediction step (s); an integer multiple of `sim.dt`.
    #[serde(default = "MpcSection::default_dt_pred")]
    pub dt_pred: f64,
    #[serde(default = "MpcSection::default_horizon")]
    pub horizon: usize,
    #[serde(default = "MpcSection::default_omega_ref")]
    pub omega_ref: [f64; 3],
    /// Optional schedule overriding `omega_ref` from each point's `t` on.
    #[serde(default)]
    pub omega_ref_schedule: Vec<ReferencePoint>,
    #[serde(default = "Weights::regulation")]
    pub weights: Weights,
    /// Explicit per-axis bound on `|ΔI|` per prediction step (kg·m²).
    #[serde(default)]
    pub di_max: Option<[f64; 3]>,
    /// Radius actuator speed caps (m/s) used to derive `di_max` when it is
    /// not given explicitly.
    #[serde(default = "MpcSection::default_radius_speed")]
    pub radius_speed: Radii,
    #[serde(default)]
    pub gyroscopic_term: GyroscopicTerm,
    /// Constrain predicted inertias to those the radius ranges can realize,
    /// instead of the per-axis box alone.
    #[serde(default)]
    pub realizable_bounds: bool,
    #[serde(default)]
    pub solver: SolverSettings,
}

fn yes() -> bool {
    true
}

impl MpcSection {
    fn default_solve_period() -> f64 {
        0.1
    }
    fn default_dt_pred() -> f64 {
        0.01
    }
    fn default_horizon() -> usize {
        50
    }
    fn default_omega_ref() -> [f64; 3] {
        [0.0, 1.0, 0.0]
    }
    pub fn default_radius_speed() -> Radii {
        Radii::new(1.0, 0.5, 0.5)
    }

    /// Angular velocity reference in effect at time `t`.
    pub fn omega_ref_at(&self, t: f64) -> Vector3<f64> {
        let mut r = self.omega_ref;
        for p in &self.omega_ref_schedule {
            if t + 1e-12 >= p.t {
                r = p.omega;
            }
        }
        Vector3::from(r)
    }

    /// Per-step increment bound for `dumbbell`.
    pub fn di_max_for(&self, dumbbell: &DumbbellConfig) -> Vector3<f64> {
        match self.di_max {
            Some(d) => Vector3::from(d),
            None => dumbbell.morph_step_limit(&self.radius_speed, self.dt_pred),
        }
    }
}

impl Default for MpcSection {
    fn default() -> Self {
        Self {
            enabled: true,
            solve_period: Self::default_solve_period(),
            dt_pred: Self::default_dt_pred(),
            horizon: Self::default_horizon(),
            omega_ref: Self::default_omega_ref(),
            omega_ref_schedule: Vec::new(),
            weights: Weights::regulation(),
            di_max: None,
            radius_speed: Self::default_radius_speed(),
            gyroscopic_term: GyroscopicTerm::default(),
            realizable_bounds: false,
            solver: SolverSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitSection {
    /// World-frame thrust applied at the contacting end mass (N).
    #[serde(default = "GaitSection::default_thrust")]
    pub thrust: [f64; 3],
    #[serde(default = "GaitSection::default_min_contact_normal")]
    pub min_contact_normal: f64,
    #[serde(default = "GaitSection::default_max_thrust_duration")]
    pub max_thrust_duration: f64,
    /// Velocity added at launch (m/s). Defaults to the impulse of `thrust`
    /// over `max_thrust_duration` divided by the total mass.
    #[serde(default)]
    pub launch_velocity: Option<[f64; 3]>,
    /// Number of touchdowns that trigger a thrusting jump; unlimited when
    /// absent.
    #[serde(default)]
    pub max_jumps: Option<usize>,
    /// Minimum airborne time before a touchdown can trigger a jump (s). Keeps
    /// chattering contact from registering as repeated jumps.
    #[serde(default = "GaitSection::default_min_flight_time")]
    pub min_flight_time: f64,
    /// Time after which the gait enters the landing phase (s).
    #[serde(default)]
    pub landing_time: Option<f64>,
    /// Angular velocity reference handed to the controller during landing.
    #[serde(default)]
    pub landing_omega_ref: [f64; 3],
    /// The run stops in landing once `|ω|` falls below this (rad/s)...
    #[serde(default = "GaitSection::default_landing_omega")]
    pub landing_omega_threshold: f64,
    /// ...and the descent rate below this (m/s).
    #[serde(default = "GaitSection::default_landing_descent")]
    pub landing_descent_threshold: f64,
}

impl GaitSection {
    fn default_thrust() -> [f64; 3] {
        [40.0, 0.0, 40.0]
    }
    fn default_min_contact_normal() -> f64 {
        1.0
    }
    fn default_max_thrust_duration() -> f64 {
        0.3
    }
    fn default_min_flight_time() -> f64 {
        0.5
    }
    fn default_landing_omega() -> f64 {
        0.05
    }
    fn default_landing_descent() -> f64 {
        0.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "OutputSection::default_csv")]
    pub csv: PathBuf,
    #[serde(default = "OutputSection::default_summary")]
    pub summary: PathBuf,
}

impl OutputSection {
    fn default_csv() -> PathBuf {
        PathBuf::from("trajectory.csv")
    }
    fn default_summary() -> PathBuf {
        PathBuf::from("summary.txt")
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            csv: Self::default_csv(),
            summary: Self::default_summary(),
        }
    }
}

fn is_multiple(a: f64, b: f64) -> bool {
    let r = a / b;
    r >= 1.0 - 1e-9 && (r - r.round()).abs() < 1e-9
}

impl ScenarioConfig {
    /// Parses and validates a scenario from TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::validation("<root>", "scenario file is empty"));
        }
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::validation("t_end", "must be positive"));
        }
        if !(self.sim.dt > 0.0) {
            return Err(Error::validation("sim.dt", "must be positive"));
        }
        if self.sim.gravity.iter().any(|g| !g.is_finite()) {
            return Err(Error::validation("sim.gravity", "must be finite"));
        }
        if !(self.sim.damping >= 0.0) {
            return Err(Error::validation("sim.damping", "must be >= 0"));
        }
        if let Some(c) = &self.sim.contact {
            c.validate()?;
        }
        self.dumbbell.validate()?;
        let all_finite = self
            .initial
            .omega
            .iter()
            .chain(&self.initial.position)
            .chain(&self.initial.velocity)
            .chain(&self.initial.orientation_deg)
            .all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::validation("initial", "entries must be finite"));
        }
        if let Some(q) = self.initial.quaternion {
            let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::validation("initial.quaternion", "must be non-zero"));
            }
        }
        let m = &self.mpc;
        if !is_multiple(m.solve_period, self.sim.dt) {
            return Err(Error::validation(
                "mpc.solve_period",
                format!(
                    "solve period {} is not an integer multiple of sim.dt {}",
                    m.solve_period, self.sim.dt
                ),
            ));
        }
        if !is_multiple(m.dt_pred, self.sim.dt) {
            return Err(Error::validation(
                "mpc.dt_pred",
                format!(
                    "prediction step {} must be an integer multiple of sim.dt {} (and >= it)",
                    m.dt_pred, self.sim.dt
                ),
            ));
        }
        if m.horizon == 0 {
            return Err(Error::validation("mpc.horizon", "must be >= 1"));
        }
        m.weights.validate()?;
        if let Some(d) = m.di_max {
            if d.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return Err(Error::validation("mpc.di_max", "must be >= 0"));
            }
        }
        let speeds = [m.radius_speed.x, m.radius_speed.y, m.radius_speed.z];
        if speeds.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::validation("mpc.radius_speed", "must be >= 0"));
        }
        if !(m.solver.tolerance > 0.0) || m.solver.max_iters == 0 {
            return Err(Error::validation(
                "mpc.solver",
                "need tolerance > 0 and max_iters >= 1",
            ));
        }
        if !(m.solver.stall_tolerance >= 0.0) {
            return Err(Error::validation(
                "mpc.solver.stall_tolerance",
                "must be >= 0",
            ));
        }
        let mut last = f64::NEG_INFINITY;
        for p in &m.omega_ref_schedule {
            if !(p.t > last) {
                return Err(Error::validation(
                    "mpc.omega_ref_schedule",
                    "times must be strictly increasing",
                ));
            }
            last = p.t;
        }
        if let Some(g) = &self.gait {
            if g.thrust.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation("gait.thrust", "must be finite"));
            }
            if !(g.max_thrust_duration > 0.0) {
                return Err(Error::validation(
                    "gait.max_thrust_duration",
                    "must be positive",
                ));
            }
            if !(g.min_flight_time >= 0.0) {
                return Err(Error::validation("gait.min_flight_time", "must be >= 0"));
            }
            if !(g.min_contact_normal >= 0.0) {
                return Err(Error::validation("gait.min_contact_normal", "must be >= 0"));
            }
            if self.sim.contact.is_none() {
                return Err(Error::validation(
                    "gait",
                    "a gait needs sim.contact to detect touchdowns",
                ));
            }
        }
        Ok(())
    }

    pub fn gravity(&self) -> Vector3<f64> {
        Vector3::from(self.sim.gravity)
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ScenarioConfig::from_toml(&text)
}

/// Scenario files shipped with the crate.
pub const PRESETS: &[(&str, &str)] = &[
    (
        "table1_regulation",
        include_str!("../presets/table1_regulation.toml"),
    ),
    (
        "table2_orientation",
        include_str!("../presets/table2_orientation.toml"),
    ),
    (
        "table2_velocity_only",
        include_str!("../presets/table2_velocity_only.toml"),
    ),
    ("open_loop", include_str!("../presets/open_loop.toml")),
    ("full_gait", include_str!("../presets/full_gait.toml")),
    ("miniature", include_str!("../presets/miniature.toml")),
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let text = preset_text(name)
        .ok_or_else(|| Error::validation("preset", format!("unknown preset `{name}`")))?;
    ScenarioConfig::from_toml(text)
}
