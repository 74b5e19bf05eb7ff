//! Trajectory recording, CSV serialization, run summaries and log comparison.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::gait::GaitPhase;
use crate::scenario::STANDARD_GRAVITY;

/// Column names of the trajectory CSV, in order.
pub const COLUMNS: &[&str] = &[
    "t",
    "phase",
    "omega_x",
    "omega_y",
    "omega_z",
    "q_w",
    "q_x",
    "q_y",
    "q_z",
    "roll_deg",
    "pitch_deg",
    "yaw_deg",
    "pos_x",
    "pos_y",
    "pos_z",
    "vel_x",
    "vel_y",
    "vel_z",
    "i_xx",
    "i_yy",
    "i_zz",
    "r_x",
    "r_y",
    "r_z",
    "di_xx",
    "di_yy",
    "di_zz",
    "contact_pos_fx",
    "contact_pos_fy",
    "contact_pos_fz",
    "contact_neg_fx",
    "contact_neg_fy",
    "contact_neg_fz",
    "thrust_fx",
    "thrust_fy",
    "thrust_fz",
    "cost",
    "solver_iters",
    "end_mass_accel_g",
    "momentum_world",
    "rotational_energy",
    "quat_error",
];

/// One sample of the closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub phase: GaitPhase,
    pub omega: [f64; 3],
    pub q: [f64; 4],
    pub euler_deg: [f64; 3],
    pub pos: [f64; 3],
    pub vel: [f64; 3],
    pub inertia: [f64; 3],
    pub radii: [f64; 3],
    /// Inertia change applied during the step that ended at `t`.
    pub di: [f64; 3],
    pub contact_pos: [f64; 3],
    pub contact_neg: [f64; 3],
    pub thrust: [f64; 3],
    /// Objective of the most recent solve.
    pub cost: f64,
    /// Iterations of a solve issued during this step, 0 otherwise.
    pub solver_iters: usize,
    /// Proper acceleration of the harder-pushed end mass, in standard g.
    pub end_mass_accel_g: f64,
    pub momentum_world: f64,
    pub rotational_energy: f64,
    /// `1 − Re(q_ref* ⊗ q)` against the integrated reference orientation.
    pub quat_error: f64,
}

impl LogRow {
    fn values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(COLUMNS.len());
        v.push(self.t);
        v.push(self.phase.code() as f64);
        v.extend_from_slice(&self.omega);
        v.extend_from_slice(&self.q);
        v.extend_from_slice(&self.euler_deg);
        v.extend_from_slice(&self.pos);
        v.extend_from_slice(&self.vel);
        v.extend_from_slice(&self.inertia);
        v.extend_from_slice(&self.radii);
        v.extend_from_slice(&self.di);
        v.extend_from_slice(&self.contact_pos);
        v.extend_from_slice(&self.contact_neg);
        v.extend_from_slice(&self.thrust);
        v.push(self.cost);
        v.push(self.solver_iters as f64);
        v.push(self.end_mass_accel_g);
        v.push(self.momentum_world);
        v.push(self.rotational_energy);
        v.push(self.quat_error);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveRecord {
    pub t: f64,
    pub iterations: usize,
    pub residual: f64,
    pub cost: f64,
    pub status: &'static str,
    pub cost_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub t: f64,
    pub phase: GaitPhase,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    Landed,
    NonFinite(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub rows: Vec<LogRow>,
    pub solves: Vec<SolveRecord>,
    pub jumps: Vec<JumpEvent>,
    pub termination: Termination,
    /// Largest distance by which radii implied by the commanded inertia fell
    /// outside their actuation range before saturation (m).
    pub max_radius_excess: f64,
}

impl TrajectoryLog {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", COLUMNS.join(","))?;
        let mut line = String::new();
        for row in &self.rows {
            line.clear();
            for (i, v) in row.values().iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                write!(line, "{v}").expect("write to string");
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Solver diagnostics, one line per solve.
    pub fn write_solver_records<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,iterations,residual,cost,status")?;
        for s in &self.solves {
            writeln!(
                out,
                "{},{},{},{},{}",
                s.t, s.iterations, s.residual, s.cost, s.status
            )?;
        }
        Ok(())
    }
}

/// Aggregate metrics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub name: String,
    pub termination: String,
    pub t_end: f64,
    pub final_omega: [f64; 3],
    /// Last time the angular velocity left the 2 % band around its final
    /// value (s).
    pub settling_time: f64,
    /// Mean `ω_y` over the final second.
    pub steady_state_omega_y: f64,
    pub jump_times: Vec<f64>,
    /// Peak `v_x` within each jump interval.
    pub peak_vx_per_jump: Vec<f64>,
    pub final_vx: f64,
    pub peak_end_mass_accel_g: f64,
    pub max_omega_norm: f64,
    pub initial_energy: f64,
    pub final_energy: f64,
    /// Largest relative deviation of the world angular momentum magnitude.
    pub momentum_drift: f64,
    pub energy_ratio: f64,
    pub final_quat_error: f64,
    pub radius_min: [f64; 3],
    pub radius_max: [f64; 3],
    pub max_radius_excess: f64,
    pub solves: usize,
    pub converged_solves: usize,
    pub mean_iterations: f64,
}

fn column(rows: &[LogRow], f: impl Fn(&LogRow) -> f64) -> Vec<f64> {
    rows.iter().map(f).collect()
}

/// Last time `|x(t) − x(t_end)|` exceeded `band · |x(t_end)|`, `0` if never.
pub fn settling_time(t: &[f64], x: &[[f64; 3]], band: f64) -> f64 {
    let Some(last) = x.last() else { return 0.0 };
    let final_norm = last.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tol = band * final_norm;
    let mut settle = 0.0;
    for (ti, xi) in t.iter().zip(x) {
        let d = (0..3)
            .map(|i| (xi[i] - last[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        if d > tol {
            settle = *ti;
        }
    }
    settle
}

impl Summary {
    pub fn from_log(name: &str, log: &TrajectoryLog) -> Summary {
        let rows = &log.rows;
        let first = rows.first().expect("log has the initial sample");
        let last = rows.last().expect("log has the initial sample");
        let t = column(rows, |r| r.t);
        let omegas: Vec<[f64; 3]> = rows.iter().map(|r| r.omega).collect();

        let window_start = last.t - 1.0;
        let tail: Vec<f64> = rows
            .iter()
            .filter(|r| r.t >= window_start)
            .map(|r| r.omega[1])
            .collect();
        let steady = tail.iter().sum::<f64>() / tail.len() as f64;

        let jump_times: Vec<f64> = log.jumps.iter().map(|j| j.t).collect();
        let mut peak_vx = Vec::new();
        for (i, start) in jump_times.iter().enumerate() {
            let end = jump_times.get(i + 1).copied().unwrap_or(f64::INFINITY);
            let peak = rows
                .iter()
                .filter(|r| r.t >= *start && r.t < end)
                .map(|r| r.vel[0])
                .fold(f64::NEG_INFINITY, f64::max);
            peak_vx.push(peak);
        }

        let l0 = first.momentum_world;
        let momentum_drift = rows
            .iter()
            .map(|r| (r.momentum_world - l0).abs() / l0.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);

        let mut rmin = [f64::INFINITY; 3];
        let mut rmax = [f64::NEG_INFINITY; 3];
        for r in rows {
            for i in 0..3 {
                rmin[i] = rmin[i].min(r.radii[i]);
                rmax[i] = rmax[i].max(r.radii[i]);
            }
        }
        let converged = log
            .solves
            .iter()
            .filter(|s| s.status == "converged")
            .count();
        let mean_iters = if log.solves.is_empty() {
            0.0
        } else {
            log.solves.iter().map(|s| s.iterations as f64).sum::<f64>() / log.solves.len() as f64
        };

        Summary {
            name: name.to_string(),
            termination: match &log.termination {
                Termination::Completed => "completed".into(),
                Termination::Landed => "landed".into(),
                Termination::NonFinite(m) => format!("non_finite: {m}"),
            },
            t_end: last.t,
            final_omega: last.omega,
            settling_time: settling_time(&t, &omegas, 0.02),
            steady_state_omega_y: steady,
            jump_times,
            peak_vx_per_jump: peak_vx,
            final_vx: last.vel[0],
            peak_end_mass_accel_g: rows.iter().map(|r| r.end_mass_accel_g).fold(0.0, f64::max),
            max_omega_norm: omegas
                .iter()
                .map(|w| (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt())
                .fold(0.0, f64::max),
            initial_energy: first.rotational_energy,
            final_energy: last.rotational_energy,
            momentum_drift,
            energy_ratio: last.rotational_energy / first.rotational_energy,
            final_quat_error: last.quat_error,
            radius_min: rmin,
            radius_max: rmax,
            max_radius_excess: log.max_radius_excess,
            solves: log.solves.len(),
            converged_solves: converged,
            mean_iterations: mean_iters,
        }
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        fn list(v: &[f64]) -> String {
            let items: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
            format!("[{}]", items.join(", "))
        }
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            writeln!(s, "{k} = {v}").expect("write to string");
        };
        kv("name", format!("\"{}\"", self.name));
        kv("termination", format!("\"{}\"", self.termination));
        kv("t_end", self.t_end.to_string());
        kv("residual_omega", list(&self.final_omega));
        kv("settling_time_2pct", self.settling_time.to_string());
        kv(
            "steady_state_omega_y",
            self.steady_state_omega_y.to_string(),
        );
        kv("jump_times", list(&self.jump_times));
        kv("peak_vx_per_jump", list(&self.peak_vx_per_jump));
        kv("final_vx", self.final_vx.to_string());
        kv(
            "peak_end_mass_accel_g",
            self.peak_end_mass_accel_g.to_string(),
        );
        kv("max_omega_norm", self.max_omega_norm.to_string());
        kv("rotational_energy_initial", self.initial_energy.to_string());
        kv("rotational_energy_final", self.final_energy.to_string());
        kv("rotational_energy_ratio", self.energy_ratio.to_string());
        kv("final_quat_error", self.final_quat_error.to_string());
        kv("momentum_drift_rel", self.momentum_drift.to_string());
        kv("radius_min", list(&self.radius_min));
        kv("radius_max", list(&self.radius_max));
        kv("max_radius_excess", self.max_radius_excess.to_string());
        kv("solves", self.solves.to_string());
        kv("converged_solves", self.converged_solves.to_string());
        kv("mean_solver_iterations", self.mean_iterations.to_string());
        kv("standard_gravity", STANDARD_GRAVITY.to_string());
        s
    }
}

/// Numeric CSV table as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_csv<R: BufRead>(input: R) -> Result<Table> {
    let mut lines = input.lines();
    let header: Vec<String> = match lines.next() {
        Some(h) => h?.split(',').map(|s| s.trim().to_string()).collect(),
        None => return Err(Error::SchemaMismatch("empty file".into())),
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::SchemaMismatch(format!(
                "row {} has {} fields, header has {}",
                i + 1,
                fields.len(),
                header.len()
            )));
        }
        let values = fields
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    Error::SchemaMismatch(format!("row {}: `{f}` is not a number", i + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    Ok(Table { header, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDiff {
    pub column: String,
    pub rms: f64,
    pub max_abs: f64,
}

/// Per-column RMS and maximum absolute difference of two logs with the same
/// schema and length.
pub fn compare(a: &Table, b: &Table) -> Result<Vec<ColumnDiff>> {
    if a.header != b.header {
        return Err(Error::SchemaMismatch("headers differ".into()));
    }
    if a.rows.len() != b.rows.len() {
        return Err(Error::SchemaMismatch(format!(
            "row counts differ: {} vs {}",
            a.rows.len(),
            b.rows.len()
        )));
    }
    let n = a.rows.len().max(1) as f64;
    Ok(a.header
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut sq = 0.0;
            let mut max_abs: f64 = 0.0;
            for (ra, rb) in a.rows.iter().zip(&b.rows) {
                let d = ra[j] - rb[j];
                sq += d * d;
                max_abs = max_abs.max(d.abs());
            }
            ColumnDiff {
                column: name.clone(),
                rms: (sq / n).sqrt(),
                max_abs,
            }
        })
        .collect())
}

pub fn format_diff(diffs: &[ColumnDiff]) -> String {
    let mut s = String::from("column,rms,max_abs\n");
    for d in diffs {
        writeln!(s, "{},{},{}", d.column, d.rms, d.max_abs).expect("write to string");
    }
    s
}
