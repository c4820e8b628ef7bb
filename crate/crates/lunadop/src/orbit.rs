//! Two-body truth orbit and visibility passes.
//!
//! The truth trajectory is unperturbed Keplerian motion about the lunar GM,
//! propagated in the inertial frame and rotated into the Moon-fixed frame.
//! Orbit-determination error is injected statistically downstream (see
//! [`crate::ephemeris`]), so the truth propagator only has to get geometry
//! and dynamics scales right.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::frames::{Epoch, LunarConstants};
use crate::Result;

/// Kepler solve tolerance on eccentric anomaly (rad).
const KEPLER_TOL: f64 = 1e-12;
/// Kepler solve iteration cap.
const KEPLER_MAX_ITER: usize = 50;

/// Classical orbital elements. Angles in radians.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KeplerianElements {
    /// Semi-major axis (km).
    pub a: f64,
    /// Eccentricity.
    pub e: f64,
    /// Inclination (rad).
    pub i: f64,
    /// Argument of perilune (rad).
    pub omega: f64,
    /// Right ascension of the ascending node (rad).
    pub raan: f64,
    /// Mean anomaly at epoch (rad).
    pub m0: f64,
}

impl KeplerianElements {
    /// The proposed low lunar orbit: 1860.52 km semi-major axis,
    /// e = 0.0359457, polar, perilune argument 270 deg, node 0,
    /// mean anomaly 180 deg at epoch.
    pub fn proposed_llo() -> Self {
        KeplerianElements {
            a: 1860.52,
            e: 0.035_945_7,
            i: 90f64.to_radians(),
            omega: 270f64.to_radians(),
            raan: 0.0,
            m0: 180f64.to_radians(),
        }
    }

    pub fn validate(&self, constants: &LunarConstants) -> Result<()> {
        if !(self.a.is_finite() && self.a > constants.r_m) {
            return Err(Error::invalid(format!("semi-major axis {} must exceed the lunar radius", self.a)));
        }
        if !(0.0..1.0).contains(&self.e) {
            return Err(Error::invalid(format!("eccentricity {} must be in [0, 1)", self.e)));
        }
        Ok(())
    }

    /// Orbital period 2*pi*sqrt(a^3/mu) (s).
    pub fn period(&self, constants: &LunarConstants) -> f64 {
        std::f64::consts::TAU * (self.a.powi(3) / constants.mu_m).sqrt()
    }
}

/// Solve Kepler's equation M = E - e sin E by Newton iteration.
fn solve_kepler(mean_anomaly: f64, e: f64) -> Result<f64> {
    let m = mean_anomaly.rem_euclid(std::f64::consts::TAU);
    let mut ecc_anomaly = if e < 0.8 { m } else { std::f64::consts::PI };
    for _ in 0..KEPLER_MAX_ITER {
        let f = ecc_anomaly - e * ecc_anomaly.sin() - m;
        let fp = 1.0 - e * ecc_anomaly.cos();
        let step = f / fp;
        ecc_anomaly -= step;
        if step.abs() < KEPLER_TOL {
            return Ok(ecc_anomaly);
        }
    }
    Err(Error::KeplerNonConvergence { iterations: KEPLER_MAX_ITER, eccentricity: e })
}

/// Perifocal-to-inertial rotation Rz(raan) * Rx(i) * Rz(omega).
fn perifocal_to_inertial(elements: &KeplerianElements) -> Matrix3<f64> {
    let rz = |t: f64| {
        let (s, c) = t.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    };
    let rx = |t: f64| {
        let (s, c) = t.sin_cos();
        Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
    };
    rz(elements.raan) * rx(elements.i) * rz(elements.omega)
}

/// Two-body state at `t` in the inertial frame (km, km/s).
pub fn propagate_inertial(
    elements: &KeplerianElements,
    constants: &LunarConstants,
    t: Epoch,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let n = (constants.mu_m / elements.a.powi(3)).sqrt();
    let ecc_anomaly = solve_kepler(elements.m0 + n * t.as_secs(), elements.e)?;
    let (sin_e, cos_e) = ecc_anomaly.sin_cos();
    let sq = (1.0 - elements.e * elements.e).sqrt();
    let r_pf = Vector3::new(elements.a * (cos_e - elements.e), elements.a * sq * sin_e, 0.0);
    let e_dot = n / (1.0 - elements.e * cos_e);
    let v_pf = Vector3::new(-elements.a * sin_e * e_dot, elements.a * sq * cos_e * e_dot, 0.0);
    let rot = perifocal_to_inertial(elements);
    Ok((rot * r_pf, rot * v_pf))
}

/// Two-body state at `t` in the Moon-fixed frame (km, km/s).
///
/// The inertial state is rotated by the accumulated frame rotation; the
/// Moon-fixed velocity carries the transport term -omega x r.
pub fn propagate(
    elements: &KeplerianElements,
    constants: &LunarConstants,
    t: Epoch,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let (r_i, v_i) = propagate_inertial(elements, constants, t)?;
    let rot = constants.moon_rotation_matrix(t.as_secs());
    let omega_cross_r = Vector3::new(-constants.omega_m * r_i.y, constants.omega_m * r_i.x, 0.0);
    Ok((rot * r_i, rot * (v_i - omega_cross_r)))
}

/// Time-tagged true satellite trajectory in the Moon-fixed frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SatelliteStateSeries {
    pub times: Vec<Epoch>,
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
}

impl SatelliteStateSeries {
    pub fn new(times: Vec<Epoch>, positions: Vec<Vector3<f64>>, velocities: Vec<Vector3<f64>>) -> Result<Self> {
        if times.len() != positions.len() || times.len() != velocities.len() {
            return Err(Error::invalid("series component lengths differ"));
        }
        if times.windows(2).any(|w| w[1].as_secs() <= w[0].as_secs()) {
            return Err(Error::invalid("series times must be strictly increasing"));
        }
        Ok(SatelliteStateSeries { times, positions, velocities })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Contiguous sub-series over a half-open index range.
    pub fn slice(&self, range: std::ops::Range<usize>) -> SatelliteStateSeries {
        SatelliteStateSeries {
            times: self.times[range.clone()].to_vec(),
            positions: self.positions[range.clone()].to_vec(),
            velocities: self.velocities[range].to_vec(),
        }
    }
}

/// Sample the truth orbit at fixed cadence over [t0, t1].
pub fn truth_series(
    elements: &KeplerianElements,
    constants: &LunarConstants,
    t0: Epoch,
    t1: Epoch,
    step_s: f64,
) -> Result<SatelliteStateSeries> {
    elements.validate(constants)?;
    if !(step_s > 0.0 && t1.as_secs() >= t0.as_secs()) {
        return Err(Error::invalid("bad sampling window"));
    }
    let n = ((t1 - t0) / step_s).floor() as usize + 1;
    let mut times = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n);
    for k in 0..n {
        let t = t0.offset(k as f64 * step_s);
        let (r, v) = propagate(elements, constants, t)?;
        times.push(t);
        positions.push(r);
        velocities.push(v);
    }
    SatelliteStateSeries::new(times, positions, velocities)
}

/// Elevation of `satellite` above the local horizon at `receiver` (rad).
///
/// The horizontal plane normal is the receiver radial on the spherical Moon;
/// positive above the horizon, -pi/2 at nadir.
pub fn elevation_angle(receiver: &Vector3<f64>, satellite: &Vector3<f64>) -> Result<f64> {
    let rn = receiver.norm();
    if rn <= 0.0 {
        return Err(Error::DegenerateGeometry("zero-norm receiver".into()));
    }
    let los = satellite - receiver;
    let ln = los.norm();
    if ln <= 0.0 {
        return Err(Error::DegenerateGeometry("satellite coincides with receiver".into()));
    }
    Ok((receiver.dot(&los) / (rn * ln)).clamp(-1.0, 1.0).asin())
}

/// One contiguous visibility window against an elevation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PassWindow {
    pub start: Epoch,
    pub end: Epoch,
    /// Half-open index range into the series that produced the pass.
    pub samples: std::ops::Range<usize>,
}

impl PassWindow {
    pub fn duration_s(&self) -> f64 {
        self.end - self.start
    }
}

/// Maximal contiguous runs of samples with elevation above `mask` (rad).
///
/// Windows are ordered by start time and disjoint. Runs touching the series
/// boundary are returned as-is (they may be truncated passes).
pub fn find_passes(
    series: &SatelliteStateSeries,
    receiver: &Vector3<f64>,
    mask: f64,
) -> Result<Vec<PassWindow>> {
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&mask) {
        return Err(Error::invalid(format!("mask {mask} rad outside [0, pi/2)")));
    }
    let mut passes = Vec::new();
    let mut run_start: Option<usize> = None;
    for (idx, pos) in series.positions.iter().enumerate() {
        let visible = elevation_angle(receiver, pos)? > mask;
        match (visible, run_start) {
            (true, None) => run_start = Some(idx),
            (false, Some(s)) => {
                passes.push(PassWindow {
                    start: series.times[s],
                    end: series.times[idx - 1],
                    samples: s..idx,
                });
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        passes.push(PassWindow {
            start: series.times[s],
            end: series.times[series.len() - 1],
            samples: s..series.len(),
        });
    }
    Ok(passes)
}
