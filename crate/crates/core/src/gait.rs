//! Jumping-flight gait: phase machine and the closed-loop driver that ties
//! the simulator, the morphing controller and ground contact together.

use nalgebra::Vector3;

use crate::attitude::{self, Quat};
use crate::dynamics::{
    self, apply_morph, rk4_step, ContactParams, ExternalWrench, PlantParams, RigidState,
};
use crate::error::{Error, Result};
use crate::log::{JumpEvent, LogRow, SolveRecord, Termination, TrajectoryLog};
use crate::model::{DumbbellConfig, Radii};
use crate::mpc::{self, MpcProblem, MpcSolution, MpcState, RealizableSet, SolverStatus};
use crate::scenario::{GaitSection, ScenarioConfig, STANDARD_GRAVITY};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaitPhase {
    Launch,
    InFlight,
    Jump,
    Landing,
}

impl GaitPhase {
    pub fn code(self) -> u8 {
        match self {
            GaitPhase::Launch => 0,
            GaitPhase::InFlight => 1,
            GaitPhase::Jump => 2,
            GaitPhase::Landing => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GaitPhase::Launch => "launch",
            GaitPhase::InFlight => "in_flight",
            GaitPhase::Jump => "jump",
            GaitPhase::Landing => "landing",
        }
    }

    /// Whether `self → next` is allowed: Launch → InFlight → (Jump → InFlight)*
    /// → Landing, with self-loops.
    pub fn allows(self, next: GaitPhase) -> bool {
        use GaitPhase::*;
        self == next
            || matches!(
                (self, next),
                (Launch, InFlight) | (InFlight, Jump) | (Jump, InFlight) | (InFlight, Landing)
            )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpCommand {
    pub thrust_force: Vector3<f64>,
    pub min_contact_normal: f64,
    pub max_thrust_duration: f64,
}

impl From<&GaitSection> for JumpCommand {
    fn from(g: &GaitSection) -> Self {
        Self {
            thrust_force: Vector3::from(g.thrust),
            min_contact_normal: g.min_contact_normal,
            max_thrust_duration: g.max_thrust_duration,
        }
    }
}

/// Which end mass touches the ground.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndMass {
    /// At `pos + R(q)·(r_x, 0, 0)`.
    Positive,
    /// At `pos − R(q)·(r_x, 0, 0)`.
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub end: EndMass,
    pub normal: f64,
    pub point: Vector3<f64>,
}

/// The end mass whose normal force exceeds `min_normal`; when both do, the
/// lower one.
pub fn detect_contact(
    state: &RigidState,
    r_x: f64,
    params: &ContactParams,
    min_normal: f64,
) -> Option<Contact> {
    let points = dynamics::end_mass_positions(state, r_x);
    let forces = dynamics::contact_forces(state, r_x, params);
    let candidates = [EndMass::Positive, EndMass::Negative]
        .into_iter()
        .enumerate()
        .filter(|(i, _)| forces[*i].z > min_normal)
        .map(|(i, end)| Contact {
            end,
            normal: forces[i].z,
            point: points[i],
        });
    candidates.fold(None, |best: Option<Contact>, c| match best {
        Some(b) if b.point.z <= c.point.z => Some(b),
        _ => Some(c),
    })
}

/// Inputs to one phase decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseContext {
    pub contact: Option<Contact>,
    /// Time spent thrusting since the current Launch/Jump began (s).
    pub thrust_elapsed: f64,
    pub jumps_allowed: bool,
    pub landing_due: bool,
}

/// Decides the next phase and the thrust wrench for the coming step.
pub fn phase_step(
    phase: GaitPhase,
    ctx: &PhaseContext,
    cmd: &JumpCommand,
) -> (GaitPhase, Vec<ExternalWrench>) {
    let thrust_at = |c: &Contact, elapsed: f64| {
        if elapsed < cmd.max_thrust_duration {
            vec![ExternalWrench {
                force: cmd.thrust_force,
                application_point: c.point,
            }]
        } else {
            Vec::new()
        }
    };
    match phase {
        GaitPhase::Launch => match &ctx.contact {
            Some(c) if ctx.thrust_elapsed < cmd.max_thrust_duration => {
                (GaitPhase::Launch, thrust_at(c, ctx.thrust_elapsed))
            }
            _ => (GaitPhase::InFlight, Vec::new()),
        },
        GaitPhase::InFlight => {
            if ctx.landing_due {
                return (GaitPhase::Landing, Vec::new());
            }
            match &ctx.contact {
                Some(c) if ctx.jumps_allowed => (GaitPhase::Jump, thrust_at(c, 0.0)),
                _ => (GaitPhase::InFlight, Vec::new()),
            }
        }
        GaitPhase::Jump => match &ctx.contact {
            Some(c) => (GaitPhase::Jump, thrust_at(c, ctx.thrust_elapsed)),
            None => (GaitPhase::InFlight, Vec::new()),
        },
        GaitPhase::Landing => (GaitPhase::Landing, Vec::new()),
    }
}

/// Receding-horizon wrapper around [`mpc::solve`].
struct Controller {
    horizon: usize,
    dt_pred: f64,
    sub_steps: usize,
    shift: usize,
    di_max: Vector3<f64>,
    inertia_min: Vector3<f64>,
    inertia_max: Vector3<f64>,
    realizable: Option<RealizableSet>,
    plan: Vec<Vector3<f64>>,
    plan_start: usize,
}

impl Controller {
    fn warm_start(&self) -> Option<Vec<Vector3<f64>>> {
        if self.plan.is_empty() {
            return None;
        }
        let mut w: Vec<Vector3<f64>> = self.plan.iter().skip(self.shift).copied().collect();
        w.resize(self.horizon, Vector3::zeros());
        Some(w)
    }

    /// Increment to apply during simulation step `step`.
    fn increment(&self, step: usize) -> Vector3<f64> {
        if self.plan.is_empty() || step < self.plan_start {
            return Vector3::zeros();
        }
        let k = (step - self.plan_start) / self.sub_steps;
        match self.plan.get(k) {
            Some(d) => d / self.sub_steps as f64,
            None => Vector3::zeros(),
        }
    }
}

fn radius_excess(wanted: &Radii, cfg: &DumbbellConfig) -> f64 {
    let w = [wanted.x, wanted.y, wanted.z];
    let lo = [cfg.r_min.x, cfg.r_min.y, cfg.r_min.z];
    let hi = [cfg.r_max.x, cfg.r_max.y, cfg.r_max.z];
    (0..3)
        .map(|i| (lo[i] - w[i]).max(w[i] - hi[i]).max(0.0))
        .fold(0.0, f64::max)
}

fn proper_end_accel(
    before: &RigidState,
    after: &RigidState,
    r_x: f64,
    gravity: &Vector3<f64>,
    dt: f64,
) -> f64 {
    let a_com = (after.vel - before.vel) / dt + gravity;
    let alpha = (after.omega - before.omega) / dt;
    let w = before.omega;
    [1.0, -1.0]
        .iter()
        .map(|s| {
            let r = Vector3::new(s * r_x, 0.0, 0.0);
            let rel = alpha.cross(&r) + w.cross(&w.cross(&r));
            (a_com + attitude::rotate(&before.q, &rel)).norm()
        })
        .fold(0.0, f64::max)
        / STANDARD_GRAVITY
}

/// Plant state of one sample; controller and contact columns start at zero.
fn row(t: f64, phase: GaitPhase, s: &RigidState, radii: &Radii, q_ref: &Quat) -> LogRow {
    let e = attitude::to_euler(&s.q);
    LogRow {
        t,
        phase,
        omega: s.omega.into(),
        q: [s.q.w, s.q.i, s.q.j, s.q.k],
        euler_deg: [e.x.to_degrees(), e.y.to_degrees(), e.z.to_degrees()],
        pos: s.pos.into(),
        vel: s.vel.into(),
        inertia: s.inertia.to_vector().into(),
        radii: [radii.x, radii.y, radii.z],
        di: [0.0; 3],
        contact_pos: [0.0; 3],
        contact_neg: [0.0; 3],
        thrust: [0.0; 3],
        cost: 0.0,
        solver_iters: 0,
        end_mass_accel_g: 0.0,
        momentum_world: s.world_momentum().norm(),
        rotational_energy: s.rotational_energy(),
        quat_error: attitude::orientation_error(q_ref, &s.q),
    }
}

/// Initial plant state of a scenario, launch velocity included.
pub fn initial_state(cfg: &ScenarioConfig) -> RigidState {
    let mut vel = Vector3::from(cfg.initial.velocity);
    if let Some(g) = &cfg.gait {
        vel += launch_velocity(g, cfg.dumbbell.masses.total());
    }
    RigidState {
        omega: Vector3::from(cfg.initial.omega),
        q: cfg.initial.orientation(),
        pos: Vector3::from(cfg.initial.position),
        vel,
        inertia: cfg.dumbbell.principal_inertia(),
    }
}

/// Launch velocity: explicit, or the thrust impulse over the maximum thrust
/// duration spread over the whole mass.
pub fn launch_velocity(g: &GaitSection, total_mass: f64) -> Vector3<f64> {
    match g.launch_velocity {
        Some(v) => Vector3::from(v),
        None => Vector3::from(g.thrust) * (g.max_thrust_duration / total_mass),
    }
}

fn horizon_references(
    cfg: &ScenarioConfig,
    t: f64,
    q_now: &Quat,
    landing: bool,
) -> (Vec<Vector3<f64>>, Vec<Quat>) {
    let m = &cfg.mpc;
    let landing_ref = cfg
        .gait
        .as_ref()
        .map(|g| Vector3::from(g.landing_omega_ref));
    let omega_at = |tk: f64| match (landing, landing_ref) {
        (true, Some(r)) => r,
        _ => m.omega_ref_at(tk),
    };
    let omegas: Vec<Vector3<f64>> = (0..=m.horizon)
        .map(|k| omega_at(t + k as f64 * m.dt_pred))
        .collect();
    let mut quats = Vec::with_capacity(m.horizon + 1);
    let mut q = *q_now;
    quats.push(q);
    for w in omegas.iter().take(m.horizon) {
        q = attitude::integrate(&q, w, m.dt_pred);
        quats.push(q);
    }
    (omegas, quats)
}

/// Runs a scenario to `t_end` (or landing), returning the full trajectory.
///
/// A non-finite plant state ends the run early and is reported through
/// [`TrajectoryLog::termination`]; a controller failure is an error.
pub fn run_closed_loop(cfg: &ScenarioConfig) -> Result<TrajectoryLog> {
    cfg.validate()?;
    let dt = cfg.sim.dt;
    let steps = (cfg.t_end / dt).round() as usize;
    let gravity = cfg.gravity();
    let plant = PlantParams {
        masses: cfg.dumbbell.masses,
        damping: cfg.sim.damping,
        gravity,
        contact: cfg.sim.contact,
    };
    let (i_min, i_max) = cfg.dumbbell.inertia_bounds();
    let m = &cfg.mpc;
    let solve_every = (m.solve_period / dt).round() as usize;
    let sub_steps = (m.dt_pred / dt).round() as usize;
    let mut ctl = Controller {
        horizon: m.horizon,
        dt_pred: m.dt_pred,
        sub_steps,
        shift: solve_every / sub_steps,
        di_max: m.di_max_for(&cfg.dumbbell),
        inertia_min: i_min.to_vector(),
        inertia_max: i_max.to_vector(),
        realizable: m
            .realizable_bounds
            .then(|| RealizableSet::for_dumbbell(&cfg.dumbbell)),
        plan: Vec::new(),
        plan_start: 0,
    };
    let cmd = cfg.gait.as_ref().map(JumpCommand::from);

    let mut state = initial_state(cfg);
    let mut radii = cfg.dumbbell.radii;
    let mut q_ref = state.q;
    let mut phase = GaitPhase::Launch;
    let mut thrust_elapsed = 0.0;
    let mut jumps_done = 0usize;
    let mut airborne_since: Option<f64> = None;
    let mut last_cost = 0.0;

    let mut log = TrajectoryLog {
        rows: Vec::with_capacity(steps + 1),
        solves: Vec::new(),
        jumps: Vec::new(),
        termination: Termination::Completed,
        max_radius_excess: 0.0,
    };
    if cmd.is_some() {
        log.jumps.push(JumpEvent {
            t: 0.0,
            phase: GaitPhase::Launch,
        });
    }
    let zero = Vector3::zeros();
    let initial_contact = match &plant.contact {
        Some(c) => dynamics::contact_forces(&state, radii.x, c),
        None => [zero; 2],
    };
    log.rows.push(LogRow {
        contact_pos: initial_contact[0].into(),
        contact_neg: initial_contact[1].into(),
        ..row(0.0, phase, &state, &radii, &q_ref)
    });

    for step in 0..steps {
        let t = step as f64 * dt;
        let mut iters = 0;

        if m.enabled && step % solve_every == 0 {
            let landing = phase == GaitPhase::Landing;
            let (omega_ref, q_refs) = horizon_references(cfg, t, &q_ref, landing);
            let problem = MpcProblem {
                x0: MpcState {
                    omega: state.omega,
                    q: state.q,
                    inertia: state.inertia.to_vector(),
                },
                omega_ref,
                q_ref: q_refs,
                weights: m.weights,
                horizon: ctl.horizon,
                dt_pred: ctl.dt_pred,
                di_max: ctl.di_max,
                inertia_min: ctl.inertia_min,
                inertia_max: ctl.inertia_max,
                realizable: ctl.realizable,
                gyroscopic: m.gyroscopic_term,
                settings: m.solver,
                warm_start: ctl.warm_start(),
            };
            let sol: MpcSolution = mpc::solve(&problem)?;
            if sol.status == SolverStatus::Infeasible {
                return Err(Error::Solver(format!(
                    "infeasible horizon problem at t = {t}"
                )));
            }
            iters = sol.iterations;
            last_cost = sol.cost;
            log.solves.push(SolveRecord {
                t,
                iterations: sol.iterations,
                residual: sol.residual,
                cost: sol.cost,
                status: sol.status.as_str(),
                cost_trace: sol.cost_trace,
            });
            ctl.plan = sol.di;
            ctl.plan_start = step;
        }

        // Morph toward the planned inertia, saturated to realizable radii.
        let before_morph = state.inertia.to_vector();
        let increment = ctl.increment(step);
        if increment != zero {
            let wanted = crate::model::PrincipalInertia::from_vector(before_morph + increment);
            let raw = cfg.dumbbell.realize_unclamped(&wanted);
            log.max_radius_excess = log
                .max_radius_excess
                .max(radius_excess(&raw, &cfg.dumbbell));
            let (r, inertia) = cfg.dumbbell.realize(&wanted);
            state = apply_morph(&state, inertia)?;
            radii = r;
        }
        let applied = state.inertia.to_vector() - before_morph;

        // Gait decisions.
        let mut wrenches = Vec::new();
        if let (Some(cmd), Some(contact)) = (&cmd, &plant.contact) {
            let gait = cfg.gait.as_ref().expect("gait section present");
            let touching = detect_contact(&state, radii.x, contact, cmd.min_contact_normal);
            let airborne_long_enough =
                airborne_since.is_some_and(|t0| t - t0 >= gait.min_flight_time);
            airborne_since = match (touching, airborne_since) {
                (Some(_), _) => None,
                (None, None) => Some(t),
                (None, since) => since,
            };
            let ctx = PhaseContext {
                contact: touching,
                thrust_elapsed,
                jumps_allowed: airborne_long_enough
                    && gait.max_jumps.is_none_or(|n| jumps_done < n),
                landing_due: gait.landing_time.is_some_and(|tl| t >= tl),
            };
            let (next, w) = phase_step(phase, &ctx, cmd);
            debug_assert!(phase.allows(next));
            if next == GaitPhase::Jump && phase != GaitPhase::Jump {
                jumps_done += 1;
                thrust_elapsed = 0.0;
                log.jumps.push(JumpEvent {
                    t,
                    phase: GaitPhase::Jump,
                });
            }
            if !w.is_empty() {
                thrust_elapsed += dt;
            }
            phase = next;
            wrenches = w;
        } else if phase == GaitPhase::Launch {
            phase = GaitPhase::InFlight;
        }
        let thrust: Vector3<f64> = wrenches.iter().map(|w| w.force).sum();
        let contact_now = match &plant.contact {
            Some(c) => dynamics::contact_forces(&state, radii.x, c),
            None => [zero; 2],
        };

        let next = match rk4_step(&state, &wrenches, &plant, dt) {
            Ok(s) => s,
            Err(Error::NonFiniteState(msg)) => {
                log.termination = Termination::NonFinite(format!("t = {t}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let accel = proper_end_accel(&state, &next, radii.x, &gravity, dt);
        state = next;

        let omega_ref_now = match (phase, &cfg.gait) {
            (GaitPhase::Landing, Some(g)) => Vector3::from(g.landing_omega_ref),
            _ => m.omega_ref_at(t),
        };
        q_ref = attitude::integrate(&q_ref, &omega_ref_now, dt);

        let t_next = (step + 1) as f64 * dt;
        log.rows.push(LogRow {
            di: applied.into(),
            contact_pos: contact_now[0].into(),
            contact_neg: contact_now[1].into(),
            thrust: thrust.into(),
            cost: last_cost,
            solver_iters: iters,
            end_mass_accel_g: accel,
            ..row(t_next, phase, &state, &radii, &q_ref)
        });

        if phase == GaitPhase::Landing {
            let g = cfg.gait.as_ref().expect("landing implies a gait");
            if state.omega.norm() < g.landing_omega_threshold
                && -state.vel.z < g.landing_descent_threshold
            {
                log.termination = Termination::Landed;
                break;
            }
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PrincipalInertia;

    fn contact() -> ContactParams {
        ContactParams {
            stiffness: 1000.0,
            ..ContactParams::default()
        }
    }

    fn level_state(z: f64) -> RigidState {
        RigidState {
            pos: Vector3::new(0.0, 0.0, z),
            ..RigidState::at_rest(PrincipalInertia::new(0.48, 141.36, 141.36))
        }
    }

    fn cmd() -> JumpCommand {
        JumpCommand {
            thrust_force: Vector3::new(40.0, 0.0, 40.0),
            min_contact_normal: 1.0,
            max_thrust_duration: 0.3,
        }
    }

    #[test]
    fn no_contact_above_ground() {
        assert!(detect_contact(&level_state(1.0), 2.8, &contact(), 1.0).is_none());
    }

    #[test]
    fn single_end_contact() {
        // Pitched so that the +x end dips 1 cm below the ground.
        let pitch = (0.01f64 / 2.8).asin();
        let s = RigidState {
            q: attitude::from_euler(0.0, pitch, 0.0),
            ..level_state(0.0)
        };
        let c = detect_contact(&s, 2.8, &contact(), 1.0).unwrap();
        assert_eq!(c.end, EndMass::Positive);
        assert!((c.normal - 10.0).abs() < 1e-9);
    }

    #[test]
    fn simultaneous_contact_picks_lower_end() {
        let pitch = (0.002f64 / 2.8).asin();
        let s = RigidState {
            q: attitude::from_euler(0.0, -pitch, 0.0),
            ..level_state(-0.01)
        };
        let c = detect_contact(&s, 2.8, &contact(), 1.0).unwrap();
        assert_eq!(c.end, EndMass::Negative);
    }

    #[test]
    fn in_flight_without_contact_is_unchanged() {
        let ctx = PhaseContext {
            contact: None,
            thrust_elapsed: 0.0,
            jumps_allowed: true,
            landing_due: false,
        };
        let (next, w) = phase_step(GaitPhase::InFlight, &ctx, &cmd());
        assert_eq!(next, GaitPhase::InFlight);
        assert!(w.is_empty());
    }

    #[test]
    fn jump_ends_when_contact_is_lost() {
        let ctx = PhaseContext {
            contact: None,
            thrust_elapsed: 0.1,
            jumps_allowed: true,
            landing_due: false,
        };
        assert_eq!(
            phase_step(GaitPhase::Jump, &ctx, &cmd()).0,
            GaitPhase::InFlight
        );
    }

    #[test]
    fn touchdown_starts_a_thrusting_jump() {
        let c = Contact {
            end: EndMass::Negative,
            normal: 20.0,
            point: Vector3::new(1.0, 0.0, -0.01),
        };
        let ctx = PhaseContext {
            contact: Some(c),
            thrust_elapsed: 0.0,
            jumps_allowed: true,
            landing_due: false,
        };
        let (next, w) = phase_step(GaitPhase::InFlight, &ctx, &cmd());
        assert_eq!(next, GaitPhase::Jump);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].application_point, c.point);

        let spent = PhaseContext {
            thrust_elapsed: 0.3,
            ..ctx
        };
        let (next, w) = phase_step(GaitPhase::Jump, &spent, &cmd());
        assert_eq!(next, GaitPhase::Jump);
        assert!(w.is_empty());

        let exhausted = PhaseContext {
            jumps_allowed: false,
            ..ctx
        };
        let (next, w) = phase_step(GaitPhase::InFlight, &exhausted, &cmd());
        assert_eq!(next, GaitPhase::InFlight);
        assert!(w.is_empty());
    }

    #[test]
    fn landing_is_terminal() {
        let ctx = PhaseContext {
            contact: None,
            thrust_elapsed: 0.0,
            jumps_allowed: true,
            landing_due: true,
        };
        assert_eq!(
            phase_step(GaitPhase::InFlight, &ctx, &cmd()).0,
            GaitPhase::Landing
        );
        assert_eq!(
            phase_step(GaitPhase::Landing, &ctx, &cmd()).0,
            GaitPhase::Landing
        );
        assert!(!GaitPhase::Landing.allows(GaitPhase::InFlight));
        assert!(!GaitPhase::Launch.allows(GaitPhase::Jump));
    }
}
