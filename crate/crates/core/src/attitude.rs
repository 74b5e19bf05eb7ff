//! Quaternion kinematics helpers. Quaternions are `(w, x, y, z)` with the
//! body-to-world convention: `v_world = q ⊗ v_body ⊗ q*`.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

pub type Quat = Quaternion<f64>;

pub fn identity() -> Quat {
    Quaternion::new(1.0, 0.0, 0.0, 0.0)
}

pub fn pure(v: &Vector3<f64>) -> Quat {
    Quaternion::from_parts(0.0, *v)
}

/// `q̇ = ½ q ⊗ (0, ω)` with `ω` in the body frame.
pub fn quaternion_derivative(q: &Quat, omega: &Vector3<f64>) -> Quat {
    (q * pure(omega)) * 0.5
}

pub fn normalized(q: &Quat) -> Quat {
    q / q.norm()
}

/// One explicit Euler step of the quaternion kinematics followed by
/// renormalization.
pub fn integrate(q: &Quat, omega: &Vector3<f64>, dt: f64) -> Quat {
    normalized(&(q + quaternion_derivative(q, omega) * dt))
}

/// Rotation matrix applied to a body-frame vector.
pub fn rotate(q: &Quat, v: &Vector3<f64>) -> Vector3<f64> {
    UnitQuaternion::new_unchecked(*q).transform_vector(v)
}

pub fn rotate_inverse(q: &Quat, v: &Vector3<f64>) -> Vector3<f64> {
    UnitQuaternion::new_unchecked(*q).inverse_transform_vector(v)
}

/// `q_ref* ⊗ q`, sign-flipped so the scalar part is non-negative.
pub fn error(q_ref: &Quat, q: &Quat) -> Quat {
    let e = q_ref.conjugate() * q;
    if e.w < 0.0 {
        -e
    } else {
        e
    }
}

/// `1 − Re(e_q)` on the canonical hemisphere; zero iff same orientation.
pub fn orientation_error(q_ref: &Quat, q: &Quat) -> f64 {
    1.0 - error(q_ref, q).w
}

/// Intrinsic Z-Y-X (yaw, pitch, roll) angles, returned as `(roll, pitch, yaw)`
/// in radians.
pub fn to_euler(q: &Quat) -> Vector3<f64> {
    let (roll, pitch, yaw) = UnitQuaternion::new_normalize(*q).euler_angles();
    Vector3::new(roll, pitch, yaw)
}

pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Quat {
    UnitQuaternion::from_euler_angles(roll, pitch, yaw).into_inner()
}

pub fn from_euler_degrees(rpy: [f64; 3]) -> Quat {
    from_euler(
        rpy[0].to_radians(),
        rpy[1].to_radians(),
        rpy[2].to_radians(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn derivative_of_identity_about_z() {
        let d = quaternion_derivative(&identity(), &Vector3::new(0.0, 0.0, 2.0));
        assert_eq!(d, Quaternion::new(0.0, 0.0, 0.0, 1.0));
        assert_eq!(
            quaternion_derivative(&identity(), &Vector3::zeros()),
            Quaternion::new(0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn integrate_stays_unit() {
        let mut q = from_euler(0.1, 0.2, 0.3);
        for _ in 0..1000 {
            q = integrate(&q, &Vector3::new(3.0, -2.0, 5.0), 0.01);
            assert!((q.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn antipodal_error_is_zero() {
        let q = from_euler(0.4, -0.3, 1.2);
        assert!(orientation_error(&q, &-q).abs() < 1e-15);
        assert!(orientation_error(&q, &q).abs() < 1e-15);
    }

    #[test]
    fn euler_round_trip() {
        let q = from_euler_degrees([5.0, 5.0, 15.0]);
        let e = to_euler(&q);
        assert_relative_eq!(e.x.to_degrees(), 5.0, epsilon = 1e-10);
        assert_relative_eq!(e.y.to_degrees(), 5.0, epsilon = 1e-10);
        assert_relative_eq!(e.z.to_degrees(), 15.0, epsilon = 1e-10);
    }

    #[test]
    fn rotation_about_z_maps_x_to_y() {
        let q = from_euler(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        let v = rotate(&q, &Vector3::x());
        assert_relative_eq!(v, Vector3::y(), epsilon = 1e-15);
        assert_relative_eq!(rotate_inverse(&q, &v), Vector3::x(), epsilon = 1e-15);
    }
}
