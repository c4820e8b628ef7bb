//! Physical constants, time handling and the Moon-fixed rotating frame.
//!
//! All positions in this crate live in a Moon-centered, Moon-fixed frame that
//! rotates uniformly at [`LunarConstants::omega_m`] about +z, with +z through
//! the North Pole. Angles are radians internally; degrees appear only at the
//! CLI boundary. Units are km, km/s, Hz, seconds.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Seconds per day.
pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Sidereal month in days; fixes the lunar rotation rate.
pub const SIDEREAL_MONTH_DAYS: f64 = 27.321661;

/// A scenario time tag: seconds since the scenario epoch, continuous.
///
/// Differences of two epochs are durations in seconds. Totally ordered for
/// finite values.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Epoch(pub f64);

impl Epoch {
    pub fn as_secs(self) -> f64 {
        self.0
    }

    /// Offset this epoch by `dt` seconds.
    pub fn offset(self, dt: f64) -> Epoch {
        Epoch(self.0 + dt)
    }
}

impl std::ops::Sub for Epoch {
    type Output = f64;
    fn sub(self, rhs: Epoch) -> f64 {
        self.0 - rhs.0
    }
}

impl From<f64> for Epoch {
    fn from(t: f64) -> Self {
        Epoch(t)
    }
}

/// Physical constants shared by all modules.
///
/// Defaults are the values used throughout: S-band carrier at 2050 MHz, the
/// conventional lunar radius and GM, and the rotation rate fixed by the
/// sidereal month. `lambda0` is always derived as `c / f0`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LunarConstants {
    /// Speed of light (km/s).
    pub c: f64,
    /// Lunar radius (km).
    pub r_m: f64,
    /// Nominal carrier frequency (Hz).
    pub f0: f64,
    /// Nominal carrier wavelength (km); always c / f0.
    pub lambda0: f64,
    /// Lunar rotation rate (rad/s).
    pub omega_m: f64,
    /// Lunar gravitational parameter (km^3/s^2).
    pub mu_m: f64,
}

impl Default for LunarConstants {
    fn default() -> Self {
        LunarConstants::new(
            299_792.458,
            1737.4,
            2050.0e6,
            std::f64::consts::TAU / (SIDEREAL_MONTH_DAYS * SECONDS_PER_DAY),
            4902.800066,
        )
        .expect("default constants are valid")
    }
}

impl LunarConstants {
    /// Build a constants set; `lambda0` is derived from `c / f0`.
    pub fn new(c: f64, r_m: f64, f0: f64, omega_m: f64, mu_m: f64) -> Result<Self> {
        for (name, v) in [("c", c), ("r_m", r_m), ("f0", f0), ("omega_m", omega_m), ("mu_m", mu_m)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("constant {name} must be finite and > 0, got {v}")));
            }
        }
        Ok(LunarConstants { c, r_m, f0, lambda0: c / f0, omega_m, mu_m })
    }

    /// Rotation of the Moon-fixed frame accumulated over `dt` seconds.
    ///
    /// Returns the z-axis direction-cosine matrix with positive sine in the
    /// (1,2) entry and negative sine in the (2,1) entry; applied to an
    /// inertial vector it yields Moon-fixed components after `dt` of frame
    /// rotation, and applied with `dt` equal to the propagation delay it
    /// compensates the frame rotation during signal flight.
    pub fn moon_rotation_matrix(&self, dt: f64) -> Matrix3<f64> {
        rotation_z_compensating(self.omega_m * dt)
    }

    /// Cartesian point on (or above) the spherical Moon.
    ///
    /// `lat` in [-pi/2, pi/2], `lon` unrestricted (wraps), `alt_km` offset
    /// from the `r_m` sphere. +z through the North Pole, lon 0 along +x.
    pub fn surface_point(&self, lat: f64, lon: f64, alt_km: f64) -> Result<Vector3<f64>> {
        if !(lat.is_finite() && (-std::f64::consts::FRAC_PI_2..=std::f64::consts::FRAC_PI_2).contains(&lat)) {
            return Err(Error::LatitudeOutOfRange(lat));
        }
        let r = self.r_m + alt_km;
        Ok(Vector3::new(
            r * lat.cos() * lon.cos(),
            r * lat.cos() * lon.sin(),
            r * lat.sin(),
        ))
    }
}

/// Z-axis rotation by angle `theta` with the compensating sign convention:
/// `[cos, sin, 0; -sin, cos, 0; 0, 0, 1]`.
pub fn rotation_z_compensating(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Derivative of [`rotation_z_compensating`] with respect to `theta`.
pub fn rotation_z_compensating_deriv(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(-s, c, 0.0, -c, -s, 0.0, 0.0, 0.0, 0.0)
}

/// Degrees to radians.
pub fn deg2rad(d: f64) -> f64 {
    d.to_radians()
}

/// Radians to degrees.
pub fn rad2deg(r: f64) -> f64 {
    r.to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lc() -> LunarConstants {
        LunarConstants::default()
    }

    #[test]
    fn lambda0_is_c_over_f0() {
        let k = lc();
        assert_eq!(k.lambda0, k.c / k.f0);
    }

    #[test]
    fn omega_matches_sidereal_month() {
        let k = lc();
        let expected = std::f64::consts::TAU / (27.321661 * 86_400.0);
        assert_eq!(k.omega_m, expected);
    }

    #[test]
    fn rotation_zero_is_identity() {
        let m = lc().moon_rotation_matrix(0.0);
        assert_eq!(m, Matrix3::identity());
    }

    #[test]
    fn rotation_full_sidereal_month_is_identity() {
        let m = lc().moon_rotation_matrix(27.321661 * 86_400.0);
        let err = (m - Matrix3::identity()).abs().max();
        assert!(err < 1e-12, "max deviation {err}");
    }

    #[test]
    fn rotation_quarter_turn_rows() {
        // omega*dt = pi/2 evaluated by hand in the printed matrix.
        let k = lc();
        let dt = std::f64::consts::FRAC_PI_2 / k.omega_m;
        let m = k.moon_rotation_matrix(dt);
        let expected = Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((m - expected).abs().max() < 1e-12);
    }

    #[test]
    fn surface_point_pole_and_equator() {
        let k = lc();
        let pole = k.surface_point(std::f64::consts::FRAC_PI_2, 1.234, 0.0).unwrap();
        assert!((pole - Vector3::new(0.0, 0.0, k.r_m)).norm() < 1e-9);
        let eq = k.surface_point(0.0, 0.0, 0.0).unwrap();
        assert!((eq - Vector3::new(k.r_m, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn surface_point_norm_with_altitude() {
        let k = lc();
        let p = k.surface_point(70f64.to_radians(), 45f64.to_radians(), 10.0).unwrap();
        assert!((p.norm() - (k.r_m + 10.0)).abs() < 1e-9);
    }

    #[test]
    fn surface_point_rejects_bad_latitude() {
        assert!(lc().surface_point(2.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn epoch_difference_is_duration() {
        assert_eq!(Epoch(12.5) - Epoch(2.0), 10.5);
        assert!(Epoch(1.0) < Epoch(2.0));
    }

    proptest! {
        #[test]
        fn rotation_composition(a in -2.0e6f64..2.0e6, b in -2.0e6f64..2.0e6) {
            let k = lc();
            let lhs = k.moon_rotation_matrix(a) * k.moon_rotation_matrix(b);
            let rhs = k.moon_rotation_matrix(a + b);
            prop_assert!((lhs - rhs).abs().max() < 1e-12);
        }

        #[test]
        fn rotation_orthonormal(dt in -5.0e6f64..5.0e6) {
            let m = lc().moon_rotation_matrix(dt);
            let err = (m.transpose() * m - Matrix3::identity()).abs().max();
            prop_assert!(err < 1e-12);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn surface_point_norm(lat in -1.5f64..1.5, lon in 0.0f64..6.28, alt in -10.0f64..10.0) {
            let k = lc();
            let p = k.surface_point(lat, lon, alt).unwrap();
            prop_assert!((p.norm() - (k.r_m + alt)).abs() < 1e-9);
        }
    }
}
