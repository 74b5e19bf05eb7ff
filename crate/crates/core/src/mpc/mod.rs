//! Inertial-morphing model predictive control.
//!
//! The controller plans a sequence of principal-inertia increments over a
//! finite horizon. The prediction model propagates body angular momentum
//! with an explicit Euler step, integrates the quaternion kinematics, and
//! accumulates the inertia increments. The objective tracks an angular
//! velocity reference and, optionally, a quaternion reference while
//! penalizing control effort.

mod solver;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::attitude::{self, Quat};
use crate::error::{Error, Result};
use crate::model::{DumbbellConfig, Radii};

pub use solver::{gradient, objective, rollout, solve, Rollout};

/// Sign of the gyroscopic term in the momentum prediction
/// `I⁺ω⁺ = Iω + Δt·τ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GyroscopicTerm {
    /// `τ = +ω × (Iω)`.
    #[default]
    Plus,
    /// `τ = −ω × (Iω)`, the torque-free Euler equations.
    Minus,
}

impl GyroscopicTerm {
    fn sign(self) -> f64 {
        match self {
            GyroscopicTerm::Plus => 1.0,
            GyroscopicTerm::Minus => -1.0,
        }
    }
}

/// Prediction state: body rate, orientation and principal inertia.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcState {
    pub omega: Vector3<f64>,
    pub q: Quat,
    pub inertia: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    /// Diagonal of the angular velocity tracking weight.
    pub q_omega: [f64; 3],
    /// Quaternion tracking weight.
    #[serde(default)]
    pub q_quat: f64,
    /// Diagonal of the terminal angular velocity weight.
    pub q_terminal: [f64; 3],
    #[serde(default)]
    pub q_terminal_quat: f64,
    /// Diagonal of the control effort weight.
    pub r: [f64; 3],
}

impl Weights {
    /// Angular-velocity regulation weights of the reference experiment.
    pub fn regulation() -> Self {
        Self {
            q_omega: [100.0, 100.0, 100.0],
            q_quat: 0.0,
            q_terminal: [100.0, 10.0, 100.0],
            q_terminal_quat: 0.0,
            r: [0.01, 1.0, 1.0],
        }
    }

    pub fn zero() -> Self {
        Self {
            q_omega: [0.0; 3],
            q_quat: 0.0,
            q_terminal: [0.0; 3],
            q_terminal_quat: 0.0,
            r: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .q_omega
            .iter()
            .chain(&self.q_terminal)
            .chain(&self.r)
            .chain([&self.q_quat, &self.q_terminal_quat]);
        for w in all {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::validation(
                    "weights",
                    format!("weight {w} must be >= 0"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default = "SolverSettings::default_max_iters")]
    pub max_iters: usize,
    /// Tolerance on the infinity norm of the scaled projected gradient.
    #[serde(default = "SolverSettings::default_tolerance")]
    pub tolerance: f64,
    /// Stop when the cost fell by less than this fraction over the line
    /// search memory window.
    #[serde(default = "SolverSettings::default_stall_tolerance")]
    pub stall_tolerance: f64,
}

impl SolverSettings {
    fn default_max_iters() -> usize {
        200
    }
    fn default_tolerance() -> f64 {
        1e-8
    }
    fn default_stall_tolerance() -> f64 {
        1e-9
    }
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iters: Self::default_max_iters(),
            tolerance: Self::default_tolerance(),
            stall_tolerance: Self::default_stall_tolerance(),
        }
    }
}

/// Inertias a geometry can reach: `I = A·s` with `s_min ≤ s ≤ s_max`, where
/// `s` holds the squared radii. `A` must be invertible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizableSet {
    pub a: Matrix3<f64>,
    pub s_min: Vector3<f64>,
    pub s_max: Vector3<f64>,
}

impl RealizableSet {
    pub fn for_dumbbell(cfg: &DumbbellConfig) -> Self {
        let m = &cfg.masses;
        let big = m.total();
        let (ym, zm) = (4.0 * m.m_y, 4.0 * m.m_z);
        let sq = |r: &Radii| Vector3::new(r.x * r.x, r.y * r.y, r.z * r.z);
        Self {
            a: Matrix3::new(0.0, ym, zm, big, 0.0, zm, big, ym, 0.0),
            s_min: sq(&cfg.r_min),
            s_max: sq(&cfg.r_max),
        }
    }

    pub fn contains(&self, inertia: &Vector3<f64>, tol: f64) -> bool {
        match self.a.try_inverse() {
            Some(inv) => {
                let s = inv * inertia;
                (0..3).all(|j| s[j] >= self.s_min[j] - tol && s[j] <= self.s_max[j] + tol)
            }
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    pub x0: MpcState,
    /// Angular velocity reference for steps `0..=N`.
    pub omega_ref: Vec<Vector3<f64>>,
    /// Quaternion reference for steps `0..=N`.
    pub q_ref: Vec<Quat>,
    pub weights: Weights,
    pub horizon: usize,
    pub dt_pred: f64,
    /// Per-axis bound on `|ΔI|` per prediction step.
    pub di_max: Vector3<f64>,
    pub inertia_min: Vector3<f64>,
    pub inertia_max: Vector3<f64>,
    /// Additional coupled bound keeping every predicted inertia realizable.
    pub realizable: Option<RealizableSet>,
    pub gyroscopic: GyroscopicTerm,
    pub settings: SolverSettings,
    /// Initial guess, `N` increments; zeros when absent.
    pub warm_start: Option<Vec<Vector3<f64>>>,
}

impl MpcProblem {
    pub fn validate(&self) -> Result<()> {
        let n = self.horizon;
        if n == 0 {
            return Err(Error::validation("mpc.horizon", "horizon must be >= 1"));
        }
        if !(self.dt_pred > 0.0) {
            return Err(Error::validation("mpc.dt_pred", "must be positive"));
        }
        if self.omega_ref.len() != n + 1 || self.q_ref.len() != n + 1 {
            return Err(Error::validation(
                "mpc.reference",
                format!("references must have N + 1 = {} entries", n + 1),
            ));
        }
        self.weights.validate()?;
        if self.di_max.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::validation("mpc.di_max", "must be >= 0"));
        }
        if self.inertia_max.iter().any(|d| !(*d > 0.0))
            || self.inertia_min.iter().any(|d| !(*d > 0.0))
            || (self.inertia_max - self.inertia_min)
                .iter()
                .any(|d| *d < 0.0)
        {
            return Err(Error::validation(
                "mpc.inertia_bounds",
                "need 0 < I_min <= I_max",
            ));
        }
        if let Some(r) = &self.realizable {
            if r.a.try_inverse().is_none() || (r.s_max - r.s_min).iter().any(|d| *d < 0.0) {
                return Err(Error::validation(
                    "mpc.realizable",
                    "singular map or empty box",
                ));
            }
        }
        if let Some(w) = &self.warm_start {
            if w.len() != n {
                return Err(Error::validation(
                    "mpc.warm_start",
                    "length must equal horizon",
                ));
            }
        }
        if self.x0.inertia.iter().any(|i| !(i.is_finite() && *i > 0.0)) {
            return Err(Error::InfeasibleInertia(format!(
                "initial inertia {:?}",
                self.x0.inertia
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Converged,
    /// No meaningful decrease left, typically at a kink of the saturation.
    Stalled,
    MaxIters,
    Infeasible,
}

impl SolverStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverStatus::Converged => "converged",
            SolverStatus::Stalled => "stalled",
            SolverStatus::MaxIters => "max_iters",
            SolverStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    /// Applied increments, `N` entries, each within `±di_max`.
    pub di: Vec<Vector3<f64>>,
    /// Predicted states, `N + 1` entries starting at `x0`.
    pub predicted: Vec<MpcState>,
    pub cost: f64,
    pub status: SolverStatus,
    pub iterations: usize,
    pub residual: f64,
    pub cost_trace: Vec<f64>,
}

/// One step of the prediction model.
pub fn predict_step(
    x: &MpcState,
    di: &Vector3<f64>,
    dt: f64,
    gyro: GyroscopicTerm,
) -> Result<MpcState> {
    let inertia = x.inertia + di;
    if inertia.iter().any(|i| !(*i > 0.0)) {
        return Err(Error::InfeasibleInertia(format!(
            "predicted inertia {inertia:?} is not positive"
        )));
    }
    let h = x.inertia.component_mul(&x.omega);
    let tau = x.omega.cross(&h) * gyro.sign();
    let omega = (h + tau * dt).component_div(&inertia);
    Ok(MpcState {
        omega,
        q: attitude::integrate(&x.q, &x.omega, dt),
        inertia,
    })
}

fn quat_term(q_ref: &Quat, q: &Quat) -> f64 {
    attitude::orientation_error(q_ref, q)
}

fn quadratic(w: &[f64; 3], e: &Vector3<f64>) -> f64 {
    w[0] * e.x * e.x + w[1] * e.y * e.y + w[2] * e.z * e.z
}

/// Running cost of one horizon step.
pub fn stage_cost(
    x: &MpcState,
    di: &Vector3<f64>,
    omega_ref: &Vector3<f64>,
    q_ref: &Quat,
    w: &Weights,
) -> f64 {
    let mut c = quadratic(&w.q_omega, &(x.omega - omega_ref)) + quadratic(&w.r, di);
    if w.q_quat != 0.0 {
        c += w.q_quat * quat_term(q_ref, &x.q);
    }
    c
}

pub fn terminal_cost(x: &MpcState, omega_ref: &Vector3<f64>, q_ref: &Quat, w: &Weights) -> f64 {
    let mut c = quadratic(&w.q_terminal, &(x.omega - omega_ref));
    if w.q_terminal_quat != 0.0 {
        c += w.q_terminal_quat * quat_term(q_ref, &x.q);
    }
    c
}

/// Orientation reference obtained by integrating a body-rate reference from
/// `q0`; returns `n + 1` quaternions starting with `q0`.
pub fn reference_quaternion_trajectory(
    q0: &Quat,
    omega_ref: &Vector3<f64>,
    n: usize,
    dt: f64,
) -> Vec<Quat> {
    let mut out = Vec::with_capacity(n + 1);
    let mut q = attitude::normalized(q0);
    out.push(q);
    for _ in 0..n {
        q = attitude::integrate(&q, omega_ref, dt);
        out.push(q);
    }
    out
}
