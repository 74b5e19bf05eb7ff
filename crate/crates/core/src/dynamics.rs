//! 6-DoF rigid-body propagation of the dumbbell under gravity, linear
//! damping, ground contact and applied forces.
//!
//! Inertia is constant within a step. Morphing happens between steps through
//! [`apply_morph`], which keeps the body-frame angular momentum unchanged.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::attitude::{self, Quat};
use crate::error::{Error, Result};
use crate::model::{radii_from_inertia, LumpedMasses, PrincipalInertia};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidState {
    /// Body-frame angular velocity (rad/s).
    pub omega: Vector3<f64>,
    /// Unit quaternion, body to world.
    pub q: Quat,
    pub pos: Vector3<f64>,
    pub vel: Vector3<f64>,
    pub inertia: PrincipalInertia,
}

impl RigidState {
    pub fn at_rest(inertia: PrincipalInertia) -> Self {
        Self {
            omega: Vector3::zeros(),
            q: attitude::identity(),
            pos: Vector3::zeros(),
            vel: Vector3::zeros(),
            inertia,
        }
    }

    pub fn body_momentum(&self) -> Vector3<f64> {
        self.inertia.apply(&self.omega)
    }

    pub fn world_momentum(&self) -> Vector3<f64> {
        attitude::rotate(&self.q, &self.body_momentum())
    }

    pub fn rotational_energy(&self) -> f64 {
        0.5 * self.omega.dot(&self.body_momentum())
    }

    pub fn is_finite(&self) -> bool {
        self.omega.iter().all(|x| x.is_finite())
            && self.q.coords.iter().all(|x| x.is_finite())
            && self.pos.iter().all(|x| x.is_finite())
            && self.vel.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactParams {
    /// Ground stiffness (N/m).
    #[serde(default = "ContactParams::default_stiffness")]
    pub stiffness: f64,
    /// Ground damping (N·s/m).
    #[serde(default = "ContactParams::default_damping")]
    pub damping: f64,
    /// Coulomb friction coefficient.
    #[serde(default = "ContactParams::default_mu")]
    pub mu: f64,
    #[serde(default)]
    pub ground_z: f64,
    /// Viscous gain (N·s/m) of the sliding force before the cone clamp.
    #[serde(default = "ContactParams::default_tangential_damping")]
    pub tangential_damping: f64,
}

impl ContactParams {
    fn default_stiffness() -> f64 {
        5000.0
    }
    fn default_damping() -> f64 {
        100.0
    }
    fn default_mu() -> f64 {
        0.6
    }
    fn default_tangential_damping() -> f64 {
        1000.0
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.stiffness > 0.0
            && self.damping >= 0.0
            && self.mu >= 0.0
            && self.tangential_damping >= 0.0
            && self.ground_z.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::validation(
                "contact",
                "need stiffness > 0, damping >= 0, mu >= 0, tangential_damping >= 0",
            ))
        }
    }
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            stiffness: Self::default_stiffness(),
            damping: Self::default_damping(),
            mu: Self::default_mu(),
            ground_z: 0.0,
            tangential_damping: Self::default_tangential_damping(),
        }
    }
}

/// A world-frame force applied at a world-frame point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalWrench {
    pub force: Vector3<f64>,
    pub application_point: Vector3<f64>,
}

/// Everything the integrator needs besides the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams {
    pub masses: LumpedMasses,
    /// Linear damping coefficient `B` (N·s/m).
    pub damping: f64,
    /// Gravitational acceleration, subtracted from `v̇` (so `+z` means "down").
    pub gravity: Vector3<f64>,
    pub contact: Option<ContactParams>,
}

impl PlantParams {
    pub fn free(masses: LumpedMasses) -> Self {
        Self {
            masses,
            damping: 0.0,
            gravity: Vector3::zeros(),
            contact: None,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.total()
    }
}

/// `ω̇ = I⁻¹(𝓜 − ω × Iω)` for a diagonal inertia.
pub fn rotational_derivative(state: &RigidState, torque_body: &Vector3<f64>) -> Vector3<f64> {
    let h = state.body_momentum();
    state.inertia.solve(&(torque_body - state.omega.cross(&h)))
}

/// `v̇ = (F − B v)/M − g`.
pub fn translational_derivative(
    vel: &Vector3<f64>,
    total_force: &Vector3<f64>,
    total_mass: f64,
    damping: f64,
    gravity: &Vector3<f64>,
) -> Vector3<f64> {
    (total_force - vel * damping) / total_mass - gravity
}

pub fn quaternion_derivative(q: &Quat, omega: &Vector3<f64>) -> Quat {
    attitude::quaternion_derivative(q, omega)
}

/// Limits a tangential force to the friction cone `|F_t| ≤ μ F_n`, keeping
/// its direction.
pub fn friction_cone_clamp(requested: Vector2<f64>, normal: f64, mu: f64) -> Vector2<f64> {
    let limit = mu * normal.max(0.0);
    let n = requested.norm();
    if n <= limit {
        requested
    } else {
        requested * (limit / n)
    }
}

/// Spring-damper ground reaction at a single point.
///
/// The normal force never pulls (no adhesion) and friction opposes the
/// tangential velocity inside the Coulomb cone.
pub fn contact_force(
    point_z: f64,
    point_vz: f64,
    tangential_v: &Vector2<f64>,
    params: &ContactParams,
) -> Vector3<f64> {
    if point_z >= params.ground_z {
        return Vector3::zeros();
    }
    let depth = params.ground_z - point_z;
    let normal = (params.stiffness * depth - params.damping * point_vz).max(0.0);
    let requested = -tangential_v * params.tangential_damping;
    let f = friction_cone_clamp(requested, normal, params.mu);
    Vector3::new(f.x, f.y, normal)
}

/// World positions of the two end masses, `+x` end first.
pub fn end_mass_positions(state: &RigidState, r_x: f64) -> [Vector3<f64>; 2] {
    let arm = attitude::rotate(&state.q, &Vector3::new(r_x, 0.0, 0.0));
    [state.pos + arm, state.pos - arm]
}

/// World velocities of the two end masses (rigid motion only).
pub fn end_mass_velocities(state: &RigidState, r_x: f64) -> [Vector3<f64>; 2] {
    let spin = attitude::rotate(&state.q, &state.omega.cross(&Vector3::new(r_x, 0.0, 0.0)));
    [state.vel + spin, state.vel - spin]
}

/// Ground reaction at each end mass, `+x` end first.
pub fn contact_forces(state: &RigidState, r_x: f64, params: &ContactParams) -> [Vector3<f64>; 2] {
    let p = end_mass_positions(state, r_x);
    let v = end_mass_velocities(state, r_x);
    [0, 1].map(|i| contact_force(p[i].z, v[i].z, &Vector2::new(v[i].x, v[i].y), params))
}

fn tether_radius(state: &RigidState, masses: &LumpedMasses) -> Result<f64> {
    Ok(radii_from_inertia(&state.inertia, masses)?.x)
}

#[derive(Clone, Copy)]
struct Derivative {
    omega: Vector3<f64>,
    q: Quat,
    pos: Vector3<f64>,
    vel: Vector3<f64>,
}

fn derivative(
    s: &RigidState,
    wrenches: &[ExternalWrench],
    params: &PlantParams,
    r_x: f64,
) -> Derivative {
    let mut force = Vector3::zeros();
    let mut torque_world = Vector3::zeros();
    for w in wrenches {
        force += w.force;
        torque_world += (w.application_point - s.pos).cross(&w.force);
    }
    if let Some(contact) = &params.contact {
        let points = end_mass_positions(s, r_x);
        let reactions = contact_forces(s, r_x, contact);
        for (p, f) in points.iter().zip(reactions.iter()) {
            force += f;
            torque_world += (p - s.pos).cross(f);
        }
    }
    let torque_body = attitude::rotate_inverse(&s.q, &torque_world);
    Derivative {
        omega: rotational_derivative(s, &torque_body),
        q: quaternion_derivative(&s.q, &s.omega),
        pos: s.vel,
        vel: translational_derivative(
            &s.vel,
            &force,
            params.total_mass(),
            params.damping,
            &params.gravity,
        ),
    }
}

fn offset(s: &RigidState, d: &Derivative, h: f64) -> RigidState {
    RigidState {
        omega: s.omega + d.omega * h,
        q: s.q + d.q * h,
        pos: s.pos + d.pos * h,
        vel: s.vel + d.vel * h,
        inertia: s.inertia,
    }
}

/// Classical fourth-order Runge-Kutta step with quaternion renormalization.
///
/// `wrenches` are held constant across the step; contact forces are
/// re-evaluated at each stage.
pub fn rk4_step(
    state: &RigidState,
    wrenches: &[ExternalWrench],
    params: &PlantParams,
    dt: f64,
) -> Result<RigidState> {
    let r_x = match params.contact {
        Some(_) => tether_radius(state, &params.masses)?,
        None => 0.0,
    };
    let k1 = derivative(state, wrenches, params, r_x);
    let k2 = derivative(&offset(state, &k1, 0.5 * dt), wrenches, params, r_x);
    let k3 = derivative(&offset(state, &k2, 0.5 * dt), wrenches, params, r_x);
    let k4 = derivative(&offset(state, &k3, dt), wrenches, params, r_x);
    let w = dt / 6.0;
    let q = state.q + (k1.q + k2.q * 2.0 + k3.q * 2.0 + k4.q) * w;
    let next = RigidState {
        omega: state.omega + (k1.omega + k2.omega * 2.0 + k3.omega * 2.0 + k4.omega) * w,
        q: attitude::normalized(&q),
        pos: state.pos + (k1.pos + k2.pos * 2.0 + k3.pos * 2.0 + k4.pos) * w,
        vel: state.vel + (k1.vel + k2.vel * 2.0 + k3.vel * 2.0 + k4.vel) * w,
        inertia: state.inertia,
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NonFiniteState(format!(
            "rk4 step produced {:?} from {:?}",
            next, state
        )))
    }
}

/// Swaps in a new inertia while preserving body-frame angular momentum.
pub fn apply_morph(state: &RigidState, new_inertia: PrincipalInertia) -> Result<RigidState> {
    new_inertia.check()?;
    Ok(RigidState {
        omega: new_inertia.solve(&state.body_momentum()),
        inertia: new_inertia,
        ..*state
    })
}
