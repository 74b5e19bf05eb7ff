//! Actuator sizing for a jumping limbed sub-robot.
//!
//! The takeoff is modeled as constant acceleration over one limb length. The
//! force is shared evenly by the legs and the hip torque acts through a moment
//! arm of `moment_arm_fraction * limb_length`. The hip speed uses the same arm
//! projected by the leg angle at liftoff. The defaults are calibrated so the
//! published per-leg force, hip torque and hip speed are reproduced within a
//! few percent.

use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lunar surface gravity.
pub const MOON_GRAVITY: f64 = 1.62;

const RAD_S_TO_RPM: f64 = 60.0 / (2.0 * std::f64::consts::PI);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SizingInput {
    /// Mass of one sub-robot in kg.
    pub robot_mass: f64,
    pub limb_length: f64,
    pub jump_height: f64,
    pub gravity: f64,
    pub legs: u32,
    /// Fraction of the limb length acting as the hip torque arm.
    pub moment_arm_fraction: f64,
    /// Leg angle from vertical at liftoff, in radians.
    pub liftoff_leg_angle: f64,
}

impl Default for SizingInput {
    fn default() -> Self {
        Self {
            robot_mass: 10.0,
            limb_length: 0.4,
            jump_height: 5.0,
            gravity: MOON_GRAVITY,
            legs: 4,
            moment_arm_fraction: 0.5,
            liftoff_leg_angle: FRAC_PI_4,
        }
    }
}

impl SizingInput {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("robot_mass", self.robot_mass),
            ("limb_length", self.limb_length),
            ("gravity", self.gravity),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(
                    field,
                    format!("must be positive, got {v}"),
                ));
            }
        }
        if !(self.jump_height.is_finite() && self.jump_height >= 0.0) {
            return Err(Error::validation(
                "jump_height",
                format!("must be non-negative, got {}", self.jump_height),
            ));
        }
        if self.legs == 0 {
            return Err(Error::validation("legs", "need at least one leg"));
        }
        let f = self.moment_arm_fraction;
        if !(f.is_finite() && f > 0.0 && f <= 1.0) {
            return Err(Error::validation(
                "moment_arm_fraction",
                format!("must lie in (0, 1], got {f}"),
            ));
        }
        let a = self.liftoff_leg_angle;
        if !(a.is_finite() && (0.0..std::f64::consts::FRAC_PI_2).contains(&a)) {
            return Err(Error::validation(
                "liftoff_leg_angle",
                format!("must lie in [0, pi/2), got {a}"),
            ));
        }
        Ok(())
    }

    pub fn moment_arm(&self) -> f64 {
        self.moment_arm_fraction * self.limb_length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftoffRequirements {
    /// Takeoff speed in m/s.
    pub v0: f64,
    /// Mean acceleration over the push-off stroke, gravity included.
    pub accel: f64,
    pub force_per_leg: f64,
    /// Peak hip torque during push-off in N·m.
    pub hip_torque: f64,
    /// Hip torque needed to stand still in N·m.
    pub standing_torque: f64,
    /// Hip speed at liftoff in RPM.
    pub hip_speed: f64,
}

pub fn liftoff_requirements(input: &SizingInput) -> Result<LiftoffRequirements> {
    input.validate()?;
    let v0 = (2.0 * input.gravity * input.jump_height).sqrt();
    let accel = v0 * v0 / (2.0 * input.limb_length) + input.gravity;
    let legs = f64::from(input.legs);
    let force_per_leg = input.robot_mass * accel / legs;
    let arm = input.moment_arm();
    let speed_arm = arm * input.liftoff_leg_angle.cos();
    Ok(LiftoffRequirements {
        v0,
        accel,
        force_per_leg,
        hip_torque: force_per_leg * arm,
        standing_torque: input.robot_mass * input.gravity / legs * arm,
        hip_speed: v0 / speed_arm * RAD_S_TO_RPM,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorSpec {
    /// Motor-side continuous stall torque in N·m.
    pub continuous_torque: f64,
    pub peak_torque: f64,
    /// Motor-side no-load speed in RPM.
    pub max_speed: f64,
    pub gear_ratio: f64,
    pub mass: f64,
}

impl MotorSpec {
    /// TBM2G-07613A frameless motor with a 10:1 gearbox.
    pub const TBM2G: MotorSpec = MotorSpec {
        continuous_torque: 1.23,
        peak_torque: 3.43,
        max_speed: 8000.0,
        gear_ratio: 10.0,
        mass: 0.321,
    };

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("continuous_torque", self.continuous_torque),
            ("peak_torque", self.peak_torque),
            ("max_speed", self.max_speed),
            ("gear_ratio", self.gear_ratio),
            ("mass", self.mass),
        ];
        for (field, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(
                    field,
                    format!("must be positive, got {v}"),
                ));
            }
        }
        if self.peak_torque < self.continuous_torque {
            return Err(Error::validation(
                "peak_torque",
                "peak torque below continuous torque",
            ));
        }
        Ok(())
    }

    pub fn geared_continuous_torque(&self) -> f64 {
        self.continuous_torque * self.gear_ratio
    }

    pub fn geared_peak_torque(&self) -> f64 {
        self.peak_torque * self.gear_ratio
    }

    pub fn geared_speed(&self) -> f64 {
        self.max_speed / self.gear_ratio
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub name: &'static str,
    pub required: f64,
    pub available: f64,
    pub unit: &'static str,
}

impl CheckItem {
    pub fn pass(&self) -> bool {
        self.available >= self.required
    }

    pub fn margin(&self) -> f64 {
        self.available / self.required
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotorReport {
    pub items: Vec<CheckItem>,
}

impl MotorReport {
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(CheckItem::pass)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<18} {:>12} {:>12} {:>8}  {}\n",
            "item", "required", "available", "margin", "result"
        );
        for it in &self.items {
            let margin = if it.required > 0.0 {
                format!("{:.2}x", it.margin())
            } else {
                "-".to_string()
            };
            out.push_str(&format!(
                "{:<18} {:>8.2} {:<3} {:>8.2} {:<3} {:>8}  {}\n",
                it.name,
                it.required,
                it.unit,
                it.available,
                it.unit,
                margin,
                if it.pass() { "PASS" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Compares geared motor output against liftoff and standing requirements.
pub fn check_motor(req: &LiftoffRequirements, spec: &MotorSpec) -> Result<MotorReport> {
    spec.validate()?;
    Ok(MotorReport {
        items: vec![
            CheckItem {
                name: "standing torque",
                required: req.standing_torque,
                available: spec.geared_continuous_torque(),
                unit: "N·m",
            },
            CheckItem {
                name: "liftoff torque",
                required: req.hip_torque,
                available: spec.geared_peak_torque(),
                unit: "N·m",
            },
            CheckItem {
                name: "liftoff speed",
                required: req.hip_speed,
                available: spec.geared_speed(),
                unit: "RPM",
            },
        ],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub static_payload: f64,
    pub dynamic_payload: f64,
}

/// Extra mass one sub-robot can carry beyond its own.
///
/// Static: all legs holding the load against gravity at continuous torque.
/// Dynamic: all legs pushing off at peak torque with the liftoff acceleration.
pub fn payload_estimate(spec: &MotorSpec, input: &SizingInput) -> Result<Payload> {
    let req = liftoff_requirements(input)?;
    let legs = f64::from(input.legs);
    let arm = input.moment_arm();
    let carried = |torque: f64, accel: f64| {
        let total = legs * torque * spec.gear_ratio / arm / accel;
        (total - input.robot_mass).max(0.0)
    };
    Ok(Payload {
        static_payload: carried(spec.continuous_torque, input.gravity),
        dynamic_payload: carried(spec.peak_torque, req.accel),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standing_load_when_not_jumping() {
        let input = SizingInput {
            jump_height: 0.0,
            ..SizingInput::default()
        };
        let r = liftoff_requirements(&input).unwrap();
        assert_eq!(r.v0, 0.0);
        assert_eq!(r.accel, input.gravity);
        assert!((r.force_per_leg - 10.0 * 1.62 / 4.0).abs() < 1e-12);
        assert_eq!(r.hip_torque, r.standing_torque);
    }

    #[test]
    fn requirements_grow_with_height_and_gravity() {
        let base = liftoff_requirements(&SizingInput::default()).unwrap();
        let higher = liftoff_requirements(&SizingInput {
            jump_height: 6.0,
            ..SizingInput::default()
        })
        .unwrap();
        let heavier = liftoff_requirements(&SizingInput {
            gravity: 3.7,
            ..SizingInput::default()
        })
        .unwrap();
        for r in [higher, heavier] {
            assert!(r.v0 > base.v0 && r.accel > base.accel);
        }
    }

    #[test]
    fn force_and_torque_linear_in_mass() {
        let a = liftoff_requirements(&SizingInput::default()).unwrap();
        let b = liftoff_requirements(&SizingInput {
            robot_mass: 30.0,
            ..SizingInput::default()
        })
        .unwrap();
        assert!((b.force_per_leg - 3.0 * a.force_per_leg).abs() < 1e-9);
        assert!((b.hip_torque - 3.0 * a.hip_torque).abs() < 1e-9);
        assert_eq!(a.hip_speed, b.hip_speed);
    }

    #[test]
    fn zero_requirement_passes() {
        let req = LiftoffRequirements {
            v0: 0.0,
            accel: 0.0,
            force_per_leg: 0.0,
            hip_torque: 0.0,
            standing_torque: 0.0,
            hip_speed: 0.0,
        };
        assert!(check_motor(&req, &MotorSpec::TBM2G).unwrap().all_pass());
    }

    #[test]
    fn torque_above_geared_peak_fails() {
        let mut req = liftoff_requirements(&SizingInput::default()).unwrap();
        req.hip_torque = 40.0;
        let report = check_motor(&req, &MotorSpec::TBM2G).unwrap();
        assert!(!report.all_pass());
        assert!(report.to_text().contains("FAIL"));
    }

    #[test]
    fn zero_torque_carries_nothing() {
        let weak = MotorSpec {
            continuous_torque: 1e-9,
            peak_torque: 1e-9,
            ..MotorSpec::TBM2G
        };
        let p = payload_estimate(&weak, &SizingInput::default()).unwrap();
        assert_eq!(p.static_payload, 0.0);
        assert_eq!(p.dynamic_payload, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let bad = [
            SizingInput {
                legs: 0,
                ..SizingInput::default()
            },
            SizingInput {
                moment_arm_fraction: 1.5,
                ..SizingInput::default()
            },
            SizingInput {
                robot_mass: -1.0,
                ..SizingInput::default()
            },
            SizingInput {
                jump_height: f64::NAN,
                ..SizingInput::default()
            },
        ];
        for input in bad {
            assert!(liftoff_requirements(&input).is_err());
        }
        let spec = MotorSpec {
            peak_torque: 1.0,
            ..MotorSpec::TBM2G
        };
        assert!(spec.validate().is_err());
    }
}
