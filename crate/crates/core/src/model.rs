//! Five-lumped-mass dumbbell inertia model.
//!
//! Two end masses `m_x` sit on the tether axis at `±r_x`; four masses `m_y`
//! and four masses `m_z` represent limb end-effectors at `r_y` and `r_z`.
//! Off-diagonal inertia terms vanish by symmetry, so only the principal
//! moments are stored.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radicands in `[-RADICAND_EPS, 0)` are treated as zero.
pub const RADICAND_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LumpedMasses {
    pub m_x: f64,
    pub m_y: f64,
    pub m_z: f64,
}

impl LumpedMasses {
    /// Mass of the whole system: 2 end bodies plus 4 + 4 limb masses.
    pub fn total(&self) -> f64 {
        2.0 * self.m_x + 4.0 * self.m_y + 4.0 * self.m_z
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("m_x", self.m_x), ("m_y", self.m_y), ("m_z", self.m_z)] {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::validation(
                    format!("masses.{name}"),
                    format!("mass must be positive and finite, got {m}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Radii {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Radii {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    /// Componentwise clamp into `[lo, hi]`.
    pub fn clamp(self, lo: Radii, hi: Radii) -> Radii {
        Radii::new(
            self.x.clamp(lo.x, hi.x),
            self.y.clamp(lo.y, hi.y),
            self.z.clamp(lo.z, hi.z),
        )
    }

    pub fn within(&self, lo: &Radii, hi: &Radii, tol: f64) -> bool {
        [
            (self.x, lo.x, hi.x),
            (self.y, lo.y, hi.y),
            (self.z, lo.z, hi.z),
        ]
        .iter()
        .all(|&(r, l, h)| r >= l - tol && r <= h + tol)
    }
}

/// Geometry and mass distribution of the dumbbell, including the actuation
/// range of every radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumbbellConfig {
    pub masses: LumpedMasses,
    pub radii: Radii,
    #[serde(default = "DumbbellConfig::default_r_min")]
    pub r_min: Radii,
    #[serde(default = "DumbbellConfig::default_r_max")]
    pub r_max: Radii,
}

impl DumbbellConfig {
    pub fn default_r_min() -> Radii {
        Radii::new(1.5, 0.1, 0.1)
    }

    pub fn default_r_max() -> Radii {
        Radii::new(2.8, 0.4, 0.4)
    }

    /// Masses and initial radii used throughout the reference experiments.
    pub fn reference() -> Self {
        Self {
            masses: LumpedMasses {
                m_x: 3.0,
                m_y: 1.5,
                m_z: 1.5,
            },
            radii: Radii::new(2.8, 0.2, 0.2),
            r_min: Self::default_r_min(),
            r_max: Self::default_r_max(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.masses.validate()?;
        let axes = [
            ("x", self.radii.x, self.r_min.x, self.r_max.x),
            ("y", self.radii.y, self.r_min.y, self.r_max.y),
            ("z", self.radii.z, self.r_min.z, self.r_max.z),
        ];
        for (axis, r, lo, hi) in axes {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return Err(Error::validation(
                    format!("dumbbell.r_min.{axis}"),
                    format!("need 0 < r_min <= r_max, got [{lo}, {hi}]"),
                ));
            }
            if !(r.is_finite() && r >= lo && r <= hi) {
                return Err(Error::validation(
                    format!("dumbbell.radii.{axis}"),
                    format!("radius {r} outside actuation range [{lo}, {hi}]"),
                ));
            }
        }
        Ok(())
    }

    pub fn principal_inertia(&self) -> PrincipalInertia {
        principal_inertia(&self.masses, &self.radii)
    }

    /// Inertia bounds obtained by evaluating the model at the radius limits.
    pub fn inertia_bounds(&self) -> (PrincipalInertia, PrincipalInertia) {
        (
            principal_inertia(&self.masses, &self.r_min),
            principal_inertia(&self.masses, &self.r_max),
        )
    }

    /// Nearest realizable geometry: radii recovered from `inertia` (negative
    /// radicands read as zero) and clamped into the actuation range.
    pub fn realize(&self, inertia: &PrincipalInertia) -> (Radii, PrincipalInertia) {
        let r = radii_from_inertia_clamped(inertia, &self.masses).clamp(self.r_min, self.r_max);
        (r, principal_inertia(&self.masses, &r))
    }

    /// Radii recovered from `inertia` before any clamping to the actuation
    /// range; negative radicands read as zero.
    pub fn realize_unclamped(&self, inertia: &PrincipalInertia) -> Radii {
        radii_from_inertia_clamped(inertia, &self.masses)
    }

    /// Per-step inertia increment bound for a given actuator speed cap.
    ///
    /// Each axis takes the smallest rate among the radii it depends on, with
    /// the partial derivative evaluated at the upper radius limit. This is the
    /// rate the slowest contributing actuator can deliver alone.
    pub fn morph_step_limit(&self, radius_speed: &Radii, dt: f64) -> Vector3<f64> {
        let m = &self.masses;
        let r = &self.r_max;
        let big = m.total();
        let d_xx = f64::min(
            8.0 * m.m_y * r.y * radius_speed.y,
            8.0 * m.m_z * r.z * radius_speed.z,
        );
        let d_yy = f64::min(
            2.0 * big * r.x * radius_speed.x,
            8.0 * m.m_z * r.z * radius_speed.z,
        );
        let d_zz = f64::min(
            2.0 * big * r.x * radius_speed.x,
            8.0 * m.m_y * r.y * radius_speed.y,
        );
        Vector3::new(d_xx, d_yy, d_zz) * dt
    }
}

/// Diagonal of the inertia tensor in the body principal frame (kg·m²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrincipalInertia {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
}

impl PrincipalInertia {
    pub const fn new(xx: f64, yy: f64, zz: f64) -> Self {
        Self { xx, yy, zz }
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.xx, self.yy, self.zz)
    }

    /// `I·v` for the diagonal tensor.
    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.to_vector().component_mul(v)
    }

    /// `I⁻¹·v` for the diagonal tensor.
    pub fn solve(&self, v: &Vector3<f64>) -> Vector3<f64> {
        v.component_div(&self.to_vector())
    }

    /// Positive entries and the triangle inequality on every permutation.
    pub fn check(&self) -> Result<()> {
        let v = [self.xx, self.yy, self.zz];
        if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InfeasibleInertia(format!(
                "entries must be positive and finite: {self:?}"
            )));
        }
        for i in 0..3 {
            let (a, b, c) = (v[i], v[(i + 1) % 3], v[(i + 2) % 3]);
            if b + c - a < -RADICAND_EPS {
                return Err(Error::InfeasibleInertia(format!(
                    "triangle inequality violated: {self:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.xx * s, self.yy * s, self.zz * s)
    }
}

pub fn principal_inertia(m: &LumpedMasses, r: &Radii) -> PrincipalInertia {
    let big = m.total();
    let (ry2, rz2, rx2) = (r.y * r.y, r.z * r.z, r.x * r.x);
    PrincipalInertia {
        xx: 4.0 * m.m_y * ry2 + 4.0 * m.m_z * rz2,
        yy: big * rx2 + 4.0 * m.m_z * rz2,
        zz: big * rx2 + 4.0 * m.m_y * ry2,
    }
}

fn radicands(i: &PrincipalInertia, m: &LumpedMasses) -> [f64; 3] {
    [
        (i.zz - i.xx + i.yy) / (4.0 * (m.m_x + 2.0 * m.m_y + 2.0 * m.m_z)),
        (i.zz - i.yy + i.xx) / (8.0 * m.m_y),
        (i.yy - i.zz + i.xx) / (8.0 * m.m_z),
    ]
}

/// Inverts [`principal_inertia`] for fixed masses.
pub fn radii_from_inertia(i: &PrincipalInertia, m: &LumpedMasses) -> Result<Radii> {
    let rad = radicands(i, m);
    if rad.iter().any(|x| !x.is_finite() || *x < -RADICAND_EPS) {
        return Err(Error::InfeasibleInertia(format!(
            "negative radicand {rad:?} for {i:?}"
        )));
    }
    Ok(Radii::new(
        rad[0].max(0.0).sqrt(),
        rad[1].max(0.0).sqrt(),
        rad[2].max(0.0).sqrt(),
    ))
}

fn radii_from_inertia_clamped(i: &PrincipalInertia, m: &LumpedMasses) -> Radii {
    let rad = radicands(i, m);
    Radii::new(
        rad[0].max(0.0).sqrt(),
        rad[1].max(0.0).sqrt(),
        rad[2].max(0.0).sqrt(),
    )
}

/// Tether tension for a planar dumbbell spinning at `omega_y` at angle `theta`.
pub fn tether_tension(cfg: &DumbbellConfig, omega_y: f64, g: f64, theta: f64) -> f64 {
    let m_x = cfg.masses.m_x;
    m_x * omega_y * omega_y * cfg.radii.x + m_x * g * theta.sin()
}

/// The rigid dumbbell assumption holds only while the tether is in tension.
pub fn is_taut(tension: f64) -> bool {
    tension >= 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn masses(m_x: f64, m_y: f64, m_z: f64) -> LumpedMasses {
        LumpedMasses { m_x, m_y, m_z }
    }

    #[test]
    fn reference_geometry_inertia() {
        let i = DumbbellConfig::reference().principal_inertia();
        assert_relative_eq!(i.xx, 0.48, max_relative = 1e-12);
        assert_relative_eq!(i.yy, 141.36, max_relative = 1e-12);
        assert_relative_eq!(i.zz, 141.36, max_relative = 1e-12);
    }

    #[test]
    fn zero_geometry_is_rejected() {
        let i = principal_inertia(&masses(3.0, 1.5, 1.5), &Radii::new(0.0, 0.0, 0.0));
        assert_eq!(i, PrincipalInertia::new(0.0, 0.0, 0.0));
        assert!(matches!(i.check(), Err(Error::InfeasibleInertia(_))));
    }

    #[test]
    fn reference_inversion() {
        let m = masses(3.0, 1.5, 1.5);
        let r = radii_from_inertia(&PrincipalInertia::new(0.48, 141.36, 141.36), &m).unwrap();
        assert_relative_eq!(r.x, 2.8, max_relative = 1e-12);
        assert_relative_eq!(r.y, 0.2, max_relative = 1e-12);
        assert_relative_eq!(r.z, 0.2, max_relative = 1e-12);
    }

    #[test]
    fn triangle_violation_is_infeasible() {
        let m = masses(3.0, 1.5, 1.5);
        let bad = PrincipalInertia::new(10.0, 2.0, 3.0);
        assert!(matches!(
            radii_from_inertia(&bad, &m),
            Err(Error::InfeasibleInertia(_))
        ));
        assert!(bad.check().is_err());
    }

    #[test]
    fn near_zero_radicand_clamps() {
        let m = masses(1.0, 1.0, 1.0);
        // I_xx = I_yy + I_zz - 1e-13: radicand for r_x is slightly negative.
        let i = PrincipalInertia::new(2.0 + 1e-13, 1.0, 1.0);
        let r = radii_from_inertia(&i, &m).unwrap();
        assert_eq!(r.x, 0.0);
    }

    #[test]
    fn tension_examples() {
        let cfg = DumbbellConfig::reference();
        assert_relative_eq!(
            tether_tension(&cfg, 1.0, 0.0, 0.7),
            8.4,
            max_relative = 1e-12
        );
        assert_eq!(tether_tension(&cfg, 0.0, 1.62, 0.0), 0.0);
        assert_relative_eq!(
            tether_tension(&cfg, 0.0, 1.62, std::f64::consts::FRAC_PI_2),
            4.86,
            max_relative = 1e-12
        );
        assert!(is_taut(8.4));
        assert!(is_taut(0.0));
        assert!(!is_taut(-1.0));
    }

    #[test]
    fn realize_clamps_into_range() {
        let cfg = DumbbellConfig::reference();
        let (_, i_max) = cfg.inertia_bounds();
        // Low I_xx with maxed I_yy, I_zz asks for r_x beyond its limit.
        let ask = PrincipalInertia::new(0.48, i_max.yy, i_max.zz);
        let (r, i) = cfg.realize(&ask);
        assert!(r.within(&cfg.r_min, &cfg.r_max, 0.0));
        assert!(i.check().is_ok());
        assert_relative_eq!(r.x, cfg.r_max.x);
    }

    #[test]
    fn validation_rejects_out_of_range_radius() {
        let mut cfg = DumbbellConfig::reference();
        cfg.radii.y = 0.5;
        assert!(matches!(cfg.validate(), Err(Error::Validation { .. })));
        cfg = DumbbellConfig::reference();
        cfg.masses.m_z = 0.0;
        assert!(cfg.validate().is_err());
    }

    fn feasible() -> impl Strategy<Value = (LumpedMasses, Radii)> {
        (
            0.5..5.0f64,
            0.5..5.0f64,
            0.5..5.0f64,
            0.1..3.0f64,
            0.1..3.0f64,
            0.1..3.0f64,
        )
            .prop_map(|(a, b, c, x, y, z)| (masses(a, b, c), Radii::new(x, y, z)))
    }

    proptest! {
        #[test]
        fn generated_inertia_is_feasible((m, r) in feasible()) {
            prop_assert!(principal_inertia(&m, &r).check().is_ok());
        }

        #[test]
        fn y_z_symmetry((m, r) in feasible()) {
            let i = principal_inertia(&m, &r);
            let swapped = principal_inertia(
                &masses(m.m_x, m.m_z, m.m_y),
                &Radii::new(r.x, r.z, r.y),
            );
            // Total mass sums in a different order, so compare to rounding.
            prop_assert!((i.xx - swapped.xx).abs() <= 1e-14 * i.xx);
            prop_assert!((i.yy - swapped.zz).abs() <= 1e-14 * i.yy);
            prop_assert!((i.zz - swapped.yy).abs() <= 1e-14 * i.zz);
        }

        #[test]
        fn inertia_is_monotone_in_radii((m, r) in feasible(), dr in 0.01..0.5f64) {
            let base = principal_inertia(&m, &r);
            let gx = principal_inertia(&m, &Radii::new(r.x + dr, r.y, r.z));
            let gy = principal_inertia(&m, &Radii::new(r.x, r.y + dr, r.z));
            let gz = principal_inertia(&m, &Radii::new(r.x, r.y, r.z + dr));
            prop_assert!(gx.yy > base.yy && gx.zz > base.zz);
            prop_assert!(gy.xx > base.xx && gy.zz > base.zz);
            prop_assert!(gz.xx > base.xx && gz.yy > base.yy);
        }

        #[test]
        fn infeasible_inertia_always_rejected(
            a in 0.1..10.0f64, b in 0.1..10.0f64, excess in 1e-6..10.0f64,
        ) {
            let m = masses(1.0, 1.0, 1.0);
            let i = PrincipalInertia::new(a + b + excess, a, b);
            prop_assert!(radii_from_inertia(&i, &m).is_err());
            let i = PrincipalInertia::new(a, a + b + excess, b);
            prop_assert!(radii_from_inertia(&i, &m).is_err());
        }
    }
}
