//! Single-shooting solver: rollout, adjoint gradient and a spectral projected
//! gradient method over the box `|ΔI_k| ≤ ΔI_max`.
//!
//! Inertia saturation `I_min ≤ I_k ≤ I_max` is enforced inside the rollout by
//! clipping each increment, so the effective increments always stay inside
//! the box and the predicted inertia inside its bounds.

use std::collections::VecDeque;

use nalgebra::{Matrix3, Vector3};

use super::{
    stage_cost, terminal_cost, GyroscopicTerm, MpcProblem, MpcSolution, MpcState, SolverStatus,
};
use crate::attitude::{self, Quat};
use crate::error::Result;

/// Forward pass of the prediction model for a candidate control sequence.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub states: Vec<MpcState>,
    /// Increments actually applied after saturation.
    pub applied: Vec<Vector3<f64>>,
    /// ∂I⁺/∂u per step.
    d_control: Vec<Matrix3<f64>>,
    /// ∂I⁺/∂I per step.
    d_inertia: Vec<Matrix3<f64>>,
    /// Unnormalized quaternion before projection, per step.
    raw_q: Vec<Quat>,
    /// ∂(clip penalty)/∂u per step.
    clip_grad: Vec<Vector3<f64>>,
    pub cost: f64,
}

/// Weight of the squared clipped-away part of each control, in units of
/// `ΔI_max²`.
///
/// Saturation inside the rollout leaves the objective flat in controls that
/// push past a bound, so a first-order method can stall there. The penalty
/// restores a gradient back toward the feasible set. It vanishes whenever the
/// controls are feasible, so it never changes the optimal value.
const CLIP_PENALTY: f64 = 1.0;

fn clip_penalty(
    u: &Vector3<f64>,
    applied: &Vector3<f64>,
    scale: &Vector3<f64>,
) -> (f64, Vector3<f64>) {
    let mut value = 0.0;
    let mut grad = Vector3::zeros();
    for i in 0..3 {
        if scale[i] > 0.0 {
            let rho = CLIP_PENALTY / (scale[i] * scale[i]);
            let e = u[i] - applied[i];
            value += rho * e * e;
            grad[i] = 2.0 * rho * e;
        }
    }
    (value, grad)
}

/// Linear bounds `lo ≤ row·I ≤ hi` on the next inertia.
struct Bounds {
    rows: Vec<(Vector3<f64>, f64, f64)>,
}

impl Bounds {
    fn new(p: &MpcProblem) -> Self {
        let mut rows: Vec<_> = (0..3)
            .map(|i| (Vector3::ith(i, 1.0), p.inertia_min[i], p.inertia_max[i]))
            .collect();
        if let Some(set) = &p.realizable {
            let inv = set.a.try_inverse().expect("validated invertible");
            for j in 0..3 {
                rows.push((inv.row(j).transpose(), set.s_min[j], set.s_max[j]));
            }
        }
        Self { rows }
    }
}

struct Saturated {
    applied: Vector3<f64>,
    d_control: Matrix3<f64>,
    d_inertia: Matrix3<f64>,
}

/// Clips `u` axis by axis, first to `±ΔI_max` and then to the slice of the
/// bound set through the partially updated inertia. Every intermediate point
/// stays inside the set when `inertia` does, so the result is feasible.
fn saturate(inertia: &Vector3<f64>, u: &Vector3<f64>, p: &MpcProblem, b: &Bounds) -> Saturated {
    let mut w = *inertia;
    // Rows of ∂w/∂I and ∂w/∂u.
    let mut j_i = Matrix3::identity();
    let mut j_u = Matrix3::zeros();
    for i in 0..3 {
        let d = p.di_max[i];
        let (rate_lo, rate_hi) = (inertia[i] - d, inertia[i] + d);
        let mut lo = (f64::NEG_INFINITY, None);
        let mut hi = (f64::INFINITY, None);
        for (c, (row, c_lo, c_hi)) in b.rows.iter().enumerate() {
            let coef = row[i];
            if coef == 0.0 {
                continue;
            }
            let rest: f64 = (0..3).filter(|&l| l != i).map(|l| row[l] * w[l]).sum();
            let (a, z) = ((c_lo - rest) / coef, (c_hi - rest) / coef);
            let (a, z) = if coef > 0.0 { (a, z) } else { (z, a) };
            if a > lo.0 {
                lo = (a, Some(c));
            }
            if z < hi.0 {
                hi = (z, Some(c));
            }
        }
        if lo.0 > hi.0 {
            // Rounding left the point just outside the set; the gap is the slice.
            std::mem::swap(&mut lo, &mut hi);
        }
        let target = inertia[i] + u[i];
        // Active bound: None for the rate box, Some(c) for row c.
        let (value, active) = if lo.0 > rate_hi {
            (rate_hi, Some(None))
        } else if hi.0 < rate_lo {
            (rate_lo, Some(None))
        } else if target < lo.0.max(rate_lo) {
            if lo.0 >= rate_lo {
                (lo.0, Some(lo.1))
            } else {
                (rate_lo, Some(None))
            }
        } else if target > hi.0.min(rate_hi) {
            if hi.0 <= rate_hi {
                (hi.0, Some(hi.1))
            } else {
                (rate_hi, Some(None))
            }
        } else {
            (target, None)
        };
        match active {
            None => {
                j_u.row_mut(i).copy_from(&Vector3::ith(i, 1.0).transpose());
            }
            Some(None) => {}
            Some(Some(c)) => {
                let row = &b.rows[c].0;
                let mut gi = nalgebra::RowVector3::zeros();
                let mut gu = nalgebra::RowVector3::zeros();
                for l in (0..3).filter(|&l| l != i) {
                    gi -= j_i.row(l) * (row[l] / row[i]);
                    gu -= j_u.row(l) * (row[l] / row[i]);
                }
                j_i.set_row(i, &gi);
                j_u.set_row(i, &gu);
            }
        }
        w[i] = value;
    }
    Saturated {
        applied: w - inertia,
        d_control: j_u,
        d_inertia: j_i,
    }
}

fn step(x: &MpcState, di: &Vector3<f64>, dt: f64, gyro: GyroscopicTerm) -> (MpcState, Quat) {
    let inertia = x.inertia + di;
    let h = x.inertia.component_mul(&x.omega);
    let tau = x.omega.cross(&h) * gyro_sign(gyro);
    let omega = (h + tau * dt).component_div(&inertia);
    let raw = x.q + attitude::quaternion_derivative(&x.q, &x.omega) * dt;
    (
        MpcState {
            omega,
            q: attitude::normalized(&raw),
            inertia,
        },
        raw,
    )
}

fn gyro_sign(g: GyroscopicTerm) -> f64 {
    g.sign()
}

/// Simulates the prediction model for controls `u` (clipped to the box and the
/// inertia bounds) and evaluates the objective.
pub fn rollout(p: &MpcProblem, u: &[Vector3<f64>]) -> Rollout {
    let n = p.horizon;
    let mut states = Vec::with_capacity(n + 1);
    let mut applied = Vec::with_capacity(n);
    let mut d_control = Vec::with_capacity(n);
    let mut d_inertia = Vec::with_capacity(n);
    let mut raw_q = Vec::with_capacity(n);
    let mut clip_grad = Vec::with_capacity(n);
    let bounds = Bounds::new(p);
    let mut x = p.x0;
    let mut cost = 0.0;
    states.push(x);
    for (k, uk) in u.iter().enumerate().take(n) {
        let sat = saturate(&x.inertia, uk, p, &bounds);
        let di = sat.applied;
        cost += stage_cost(&x, &di, &p.omega_ref[k], &p.q_ref[k], &p.weights);
        let (penalty, penalty_grad) = clip_penalty(uk, &di, &p.di_max);
        cost += penalty;
        clip_grad.push(penalty_grad);
        let (next, raw) = step(&x, &di, p.dt_pred, p.gyroscopic);
        x = next;
        states.push(x);
        applied.push(di);
        d_control.push(sat.d_control);
        d_inertia.push(sat.d_inertia);
        raw_q.push(raw);
    }
    cost += terminal_cost(&x, &p.omega_ref[n], &p.q_ref[n], &p.weights);
    Rollout {
        states,
        applied,
        d_control,
        d_inertia,
        raw_q,
        clip_grad,
        cost,
    }
}

pub fn objective(p: &MpcProblem, u: &[Vector3<f64>]) -> f64 {
    rollout(p, u).cost
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn diag(w: &[f64; 3]) -> Vector3<f64> {
    Vector3::new(w[0], w[1], w[2])
}

/// d(1 − |q_ref·q|)/dq for a unit `q`.
fn quat_term_grad(q_ref: &Quat, q: &Quat) -> Quat {
    let d = q_ref.coords.dot(&q.coords);
    if d >= 0.0 {
        -*q_ref
    } else {
        *q_ref
    }
}

/// Objective gradient with respect to the raw controls `u` via the adjoint
/// recursion on a completed rollout.
pub fn gradient(p: &MpcProblem, r: &Rollout) -> Vec<Vector3<f64>> {
    let n = p.horizon;
    let w = &p.weights;
    let s = gyro_sign(p.gyroscopic);
    let dt = p.dt_pred;

    let xn = &r.states[n];
    let mut lam_omega = diag(&w.q_terminal).component_mul(&(xn.omega - p.omega_ref[n])) * 2.0;
    let mut lam_q = if w.q_terminal_quat != 0.0 {
        quat_term_grad(&p.q_ref[n], &xn.q) * w.q_terminal_quat
    } else {
        Quat::new(0.0, 0.0, 0.0, 0.0)
    };
    let mut lam_inertia = Vector3::zeros();
    let mut grad = vec![Vector3::zeros(); n];

    for k in (0..n).rev() {
        let x = &r.states[k];
        let next = &r.states[k + 1];
        let di = &r.applied[k];

        let h = x.inertia.component_mul(&x.omega);
        let h_next = next.inertia.component_mul(&next.omega);

        // ω⁺ = h⁺ / I⁺
        let g_h = lam_omega.component_div(&next.inertia);
        // Gradient with respect to the applied increment, which also enters
        // the clip penalty with the opposite sign of the raw control.
        let g_applied = diag(&w.r).component_mul(di) * 2.0 - r.clip_grad[k];
        let g_inertia_next = lam_inertia + g_applied
            - h_next
                .component_div(&next.inertia.component_mul(&next.inertia))
                .component_mul(&lam_omega);

        grad[k] = r.d_control[k].tr_mul(&g_inertia_next) + r.clip_grad[k];

        // h⁺ = h + s·dt·ω × h, h = I∘ω
        let inertia_m = Matrix3::from_diagonal(&x.inertia);
        let omega_m = Matrix3::from_diagonal(&x.omega);
        let dh_domega = inertia_m + (skew(&x.omega) * inertia_m - skew(&h)) * (s * dt);
        let dh_dinertia = omega_m + skew(&x.omega) * omega_m * (s * dt);

        // q⁺ = normalize(q + ½dt q ⊗ (0, ω))
        let raw = &r.raw_q[k];
        let unit = &next.q;
        let proj = lam_q.coords - unit.coords * unit.coords.dot(&lam_q.coords);
        let g_raw = Quat::from(proj / raw.norm());
        let g_q_dyn = g_raw + (g_raw * attitude::pure(&(-x.omega))) * (0.5 * dt);
        let g_omega_q = (x.q.conjugate() * g_raw).imag() * (0.5 * dt);

        let new_omega = dh_domega.transpose() * g_h
            + g_omega_q
            + diag(&w.q_omega).component_mul(&(x.omega - p.omega_ref[k])) * 2.0;
        let new_inertia =
            dh_dinertia.transpose() * g_h + r.d_inertia[k].tr_mul(&g_inertia_next) - g_applied;
        let mut new_q = g_q_dyn;
        if w.q_quat != 0.0 {
            new_q += quat_term_grad(&p.q_ref[k], &x.q) * w.q_quat;
        }
        lam_omega = new_omega;
        lam_inertia = new_inertia;
        lam_q = new_q;
    }
    grad
}

/// Solves the horizon problem from `problem.x0`.
pub fn solve(problem: &MpcProblem) -> Result<MpcSolution> {
    problem.validate()?;
    let n = problem.horizon;
    let scale = problem.di_max;
    let fixed: Vec<bool> = (0..3).map(|i| scale[i] == 0.0).collect();

    // Work in normalized controls v = u / ΔI_max ∈ [-1, 1].
    let to_u = |v: &[Vector3<f64>]| -> Vec<Vector3<f64>> {
        v.iter().map(|vk| vk.component_mul(&scale)).collect()
    };
    let scaled_grad = |g: &[Vector3<f64>]| -> Vec<Vector3<f64>> {
        g.iter().map(|gk| gk.component_mul(&scale)).collect()
    };
    let project = |v: &mut [Vector3<f64>]| {
        for vk in v.iter_mut() {
            for i in 0..3 {
                vk[i] = if fixed[i] {
                    0.0
                } else {
                    vk[i].clamp(-1.0, 1.0)
                };
            }
        }
    };

    let mut v: Vec<Vector3<f64>> = match &problem.warm_start {
        Some(w) => w
            .iter()
            .map(|wk| Vector3::from_fn(|i, _| if fixed[i] { 0.0 } else { wk[i] / scale[i] }))
            .collect(),
        None => vec![Vector3::zeros(); n],
    };
    project(&mut v);

    let mut roll = rollout(problem, &to_u(&v));
    let mut g = scaled_grad(&gradient(problem, &roll));
    let mut cost_trace = vec![roll.cost];
    let mut history: VecDeque<f64> = VecDeque::from([roll.cost]);
    const MEMORY: usize = 10;
    const SUFFICIENT: f64 = 1e-4;
    const STEP_MIN: f64 = 1e-12;
    const STEP_MAX: f64 = 1e12;
    const STALL_WINDOW: usize = 2 * MEMORY;

    let residual_of = |v: &[Vector3<f64>], g: &[Vector3<f64>]| -> f64 {
        let mut trial: Vec<Vector3<f64>> = v.iter().zip(g).map(|(a, b)| a - b).collect();
        project(&mut trial);
        trial
            .iter()
            .zip(v)
            .map(|(t, a)| (t - a).amax())
            .fold(0.0, f64::max)
    };

    let mut residual = residual_of(&v, &g);
    let mut lambda = if residual > 0.0 {
        (1.0 / residual).clamp(STEP_MIN, STEP_MAX)
    } else {
        1.0
    };
    let mut iterations = 0;
    let mut status = SolverStatus::MaxIters;
    let mut best = roll.clone();
    let mut since_best = 0;

    while iterations < problem.settings.max_iters {
        if residual <= problem.settings.tolerance {
            status = SolverStatus::Converged;
            break;
        }
        iterations += 1;

        let mut trial: Vec<Vector3<f64>> = v.iter().zip(&g).map(|(a, b)| a - b * lambda).collect();
        project(&mut trial);
        let d: Vec<Vector3<f64>> = trial.iter().zip(&v).map(|(t, a)| t - a).collect();
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a.dot(b)).sum();
        let reference = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

        let mut alpha = 1.0;
        let (v_new, roll_new) = loop {
            let cand: Vec<Vector3<f64>> = v.iter().zip(&d).map(|(a, b)| a + b * alpha).collect();
            let r = rollout(problem, &to_u(&cand));
            if r.cost <= reference + SUFFICIENT * alpha * slope || alpha < 1e-10 {
                break (cand, r);
            }
            // Safeguarded quadratic interpolation.
            let denom = 2.0 * (r.cost - roll.cost - alpha * slope);
            let a_q = if denom > 0.0 {
                -slope * alpha * alpha / denom
            } else {
                0.5 * alpha
            };
            alpha = a_q.clamp(0.1 * alpha, 0.5 * alpha);
        };
        if roll_new.cost > roll.cost && alpha < 1e-10 {
            // No descent available at machine precision.
            status = SolverStatus::Stalled;
            break;
        }

        let g_new = scaled_grad(&gradient(problem, &roll_new));
        let mut ss = 0.0;
        let mut sy = 0.0;
        for k in 0..n {
            let sk = v_new[k] - v[k];
            let yk = g_new[k] - g[k];
            ss += sk.dot(&sk);
            sy += sk.dot(&yk);
        }
        lambda = if sy <= 0.0 {
            STEP_MAX
        } else {
            (ss / sy).clamp(STEP_MIN, STEP_MAX)
        };

        v = v_new;
        g = g_new;
        roll = roll_new;
        cost_trace.push(roll.cost);
        history.push_back(roll.cost);
        if history.len() > MEMORY {
            history.pop_front();
        }
        residual = residual_of(&v, &g);

        if roll.cost < best.cost - problem.settings.stall_tolerance * best.cost.abs().max(1.0) {
            best = roll.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if roll.cost < best.cost {
                best = roll.clone();
            }
            if since_best >= STALL_WINDOW {
                status = SolverStatus::Stalled;
                break;
            }
        }
    }
    if status != SolverStatus::Converged && residual <= problem.settings.tolerance {
        status = SolverStatus::Converged;
    }

    if roll.cost < best.cost {
        best = roll;
    }
    Ok(MpcSolution {
        di: best.applied,
        predicted: best.states,
        cost: best.cost,
        status,
        iterations,
        residual,
        cost_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::{reference_quaternion_trajectory, SolverSettings, Weights};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(omega0: Vector3<f64>, n: usize, weights: Weights) -> MpcProblem {
        let q0 = attitude::identity();
        let omega_ref = Vector3::new(0.0, 1.0, 0.0);
        MpcProblem {
            x0: MpcState {
                omega: omega0,
                q: q0,
                inertia: Vector3::new(0.48, 141.36, 141.36),
            },
            omega_ref: vec![omega_ref; n + 1],
            q_ref: reference_quaternion_trajectory(&q0, &omega_ref, n, 0.01),
            weights,
            horizon: n,
            dt_pred: 0.01,
            di_max: Vector3::new(0.02, 0.5, 0.5),
            inertia_min: Vector3::new(0.12, 40.0, 40.0),
            inertia_max: Vector3::new(1.92, 142.08, 142.08),
            realizable: None,
            gyroscopic: GyroscopicTerm::Plus,
            settings: SolverSettings::default(),
            warm_start: None,
        }
    }

    fn fd_gradient(p: &MpcProblem, u: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        let mut out = vec![Vector3::zeros(); u.len()];
        for k in 0..u.len() {
            for i in 0..3 {
                let h = 1e-6 * p.di_max[i].max(1e-3);
                let mut up = u.to_vec();
                let mut dn = u.to_vec();
                up[k][i] += h;
                dn[k][i] -= h;
                out[k][i] = (objective(p, &up) - objective(p, &dn)) / (2.0 * h);
            }
        }
        out
    }

    #[test]
    fn gradient_matches_finite_differences_on_realizable_boundary() {
        use crate::model::DumbbellConfig;
        let cfg = DumbbellConfig::reference();
        let set = crate::mpc::RealizableSet::for_dumbbell(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = problem(Vector3::new(-0.3, -0.9, 0.9), 5, Weights::regulation());
        p.gyroscopic = GyroscopicTerm::Minus;
        p.realizable = Some(set);
        // r = (2.8, 0.1, 0.4): on the r_x, r_y and r_z limits at once.
        p.x0.inertia =
            crate::model::principal_inertia(&cfg.masses, &crate::model::Radii::new(2.8, 0.1, 0.4))
                .to_vector();
        p.di_max = Vector3::new(0.05, 0.05, 0.05);
        let mut hits = 0;
        for _ in 0..20 {
            let u: Vec<_> = (0..5)
                .map(|_| Vector3::from_fn(|i, _| rng.gen_range(-1.5..1.5) * p.di_max[i]))
                .collect();
            let r = rollout(&p, &u);
            for s in &r.states {
                assert!(set.contains(&s.inertia, 1e-9));
            }
            hits += r
                .applied
                .iter()
                .zip(&u)
                .filter(|(a, b)| (*a - *b).amax() > 1e-9)
                .count();
            let g = gradient(&p, &r);
            let fd = fd_gradient(&p, &u);
            for (a, b) in g.iter().zip(&fd) {
                for i in 0..3 {
                    let scale = b[i].abs().max(1e-3);
                    assert!((a[i] - b[i]).abs() / scale < 1e-5, "{a:?} vs {b:?}");
                }
            }
        }
        assert!(hits > 0);
    }

    #[test]
    fn gradient_matches_finite_differences_with_quaternion_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut w = Weights::regulation();
        w.q_quat = 50.0;
        w.q_terminal_quat = 80.0;
        let mut p = problem(Vector3::new(-0.3, -0.9, 0.9), 4, w);
        p.x0.q = attitude::from_euler(0.2, -0.4, 0.9);
        p.gyroscopic = GyroscopicTerm::Minus;
        let u: Vec<_> = (0..4)
            .map(|_| Vector3::from_fn(|i, _| rng.gen_range(-0.5..0.5) * p.di_max[i]))
            .collect();
        let g = gradient(&p, &rollout(&p, &u));
        let fd = fd_gradient(&p, &u);
        for (a, b) in g.iter().zip(&fd) {
            for i in 0..3 {
                let scale = b[i].abs().max(1e-3);
                assert!((a[i] - b[i]).abs() / scale < 1e-5, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn at_reference_solution_is_zero() {
        let mut p = problem(Vector3::new(0.0, 1.0, 0.0), 10, Weights::regulation());
        p.q_ref = vec![attitude::identity(); 11];
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, SolverStatus::Converged);
        assert!(sol.cost.abs() < 1e-12);
        assert!(sol.di.iter().all(|d| d.norm() < 1e-12));
    }

    #[test]
    fn solution_respects_bounds_and_reduces_cost() {
        let p = problem(Vector3::new(-0.3, -0.9, 0.9), 20, Weights::regulation());
        let zero_cost = objective(&p, &vec![Vector3::zeros(); 20]);
        let sol = solve(&p).unwrap();
        assert!(sol.cost < zero_cost);
        for d in &sol.di {
            for i in 0..3 {
                assert!(d[i].abs() <= p.di_max[i] * (1.0 + 1e-12));
            }
        }
        for x in &sol.predicted {
            for i in 0..3 {
                assert!(x.inertia[i] > 0.0 && x.inertia[i] <= p.inertia_max[i] * (1.0 + 1e-12));
            }
        }
        assert_eq!(sol.predicted.len(), 21);
        assert_eq!(sol.cost_trace.first().copied(), Some(zero_cost));
    }

    #[test]
    fn predicted_states_match_predict_step() {
        let p = problem(Vector3::new(-0.3, -0.9, 0.9), 15, Weights::regulation());
        let sol = solve(&p).unwrap();
        let mut x = p.x0;
        for (k, d) in sol.di.iter().enumerate() {
            x = crate::mpc::predict_step(&x, d, p.dt_pred, p.gyroscopic).unwrap();
            assert!((x.omega - sol.predicted[k + 1].omega).norm() < 1e-12);
            assert!((x.inertia - sol.predicted[k + 1].inertia).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_bound_axis_never_moves() {
        let mut p = problem(Vector3::new(-0.3, -0.9, 0.9), 10, Weights::regulation());
        p.di_max = Vector3::new(0.0, 0.3, 0.0);
        let sol = solve(&p).unwrap();
        assert!(sol.di.iter().all(|d| d.x == 0.0 && d.z == 0.0));
    }
}
