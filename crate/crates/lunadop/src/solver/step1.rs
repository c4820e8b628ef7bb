//! Algebraic initialization from Doppler cone angles.
//!
//! Over the middle 100 seconds of a pass the trajectory is treated as a
//! straight line flown at constant speed V and altitude h. Each Doppler
//! sample fixes the cone angle between the velocity and the sightline to the
//! receiver, pairwise cone intersections locate the point of closest
//! approach, and the cotangent spread of the angles fixes the cross-track
//! distance. The cross-track sign is ambiguous; both candidates are formed
//! and the cheaper one under the unweighted cost is preferred.

use nalgebra::Vector3;

use crate::error::Error;
use crate::frames::LunarConstants;
use crate::Result;

use super::{cost, PassData};

/// Samples used around the pass midpoint.
const SLICE_LEN: usize = 100;
/// Pairwise estimates with |sin(alpha_j - alpha_1)| below this are skipped.
const MIN_PAIR_SIN: f64 = 1e-9;
/// Samples with |sin(alpha)| below this are excluded from the cotangent sum.
const MIN_ANGLE_SIN: f64 = 1e-6;

/// Outcome of the algebraic step.
#[derive(Debug, Clone)]
pub struct Step1Solution {
    /// Candidate preferred by the unweighted cost, on the lunar surface.
    pub position: Vector3<f64>,
    /// Both cross-track candidates, surface-projected, cost-ordered.
    pub candidates: [Vector3<f64>; 2],
    /// Unweighted costs of the two candidates.
    pub candidate_costs: [f64; 2],
    /// Estimated point of closest approach.
    pub pca: Vector3<f64>,
    /// Estimated cross-track distance (km).
    pub cross_track_km: f64,
    /// Doppler cone angles clamped into the arccos domain.
    pub clamped_angles: usize,
    /// Degenerate pairwise estimates skipped.
    pub skipped_pairs: usize,
}

/// Rough receiver estimate from one pass, on the lunar surface.
pub fn step1_algebraic(pass: &PassData, constants: &LunarConstants) -> Result<Step1Solution> {
    if pass.observations.len() < 2 {
        return Err(Error::EmptyInput("step 1 needs at least 2 observations".into()));
    }

    // Middle-of-pass slice: highest C/N0, most symmetric geometry.
    let n_obs = pass.observations.len();
    let take = SLICE_LEN.min(n_obs);
    let start = (n_obs - take) / 2;
    let slice = &pass.observations[start..start + take];

    // Satellite states over the slice from the broadcast ephemeris.
    let mut positions = Vec::with_capacity(take);
    let mut speed_sum = 0.0;
    let mut radius_sum = 0.0;
    for obs in slice {
        let (p, v) = pass.ephemeris.state_at(obs.t_r)?;
        speed_sum += v.norm();
        radius_sum += p.norm();
        positions.push(p);
    }
    let speed = speed_sum / take as f64;
    let altitude = radius_sum / take as f64 - constants.r_m;

    // Doppler cone angles: cos(alpha_j) = c D_j / (f0 V).
    let mut clamped = 0usize;
    let angles: Vec<f64> = slice
        .iter()
        .map(|obs| {
            let mut c = constants.c * obs.doppler_hz / (constants.f0 * speed);
            if !(-1.0..=1.0).contains(&c) {
                clamped += 1;
                c = c.clamp(-1.0, 1.0);
            }
            c.acos()
        })
        .collect();

    // Pairwise point-of-closest-approach estimates against the first sample.
    let mut pca_sum = Vector3::zeros();
    let mut pairs = 0usize;
    let mut skipped = 0usize;
    let (x1, a1) = (positions[0], angles[0]);
    for j in 1..take {
        let denom = (angles[j] - a1).sin();
        if denom.abs() < MIN_PAIR_SIN {
            skipped += 1;
            continue;
        }
        let est = (positions[j] - x1) * (a1.sin() * angles[j].cos() / denom) + positions[j];
        pca_sum += est;
        pairs += 1;
    }
    if pairs == 0 {
        return Err(Error::DegenerateGeometry("all pairwise cone intersections degenerate".into()));
    }
    let pca = pca_sum / pairs as f64;

    // Cross-track distance from the cotangent spread, less the altitude leg.
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..take {
        let s = angles[j].sin();
        if s.abs() < MIN_ANGLE_SIN {
            continue;
        }
        num += (pca - positions[j]).norm_squared();
        let cot = angles[j].cos() / s;
        den += cot * cot;
    }
    if den <= 0.0 {
        return Err(Error::DegenerateGeometry("cotangent sum vanished".into()));
    }
    let cross_track = (num / den - altitude * altitude).max(0.0).sqrt();

    // Drop from the PCA to the surface along the radial, then offset
    // cross-track toward either side; project both onto the sphere.
    let pca_norm = pca.norm();
    if pca_norm <= altitude {
        return Err(Error::DegenerateGeometry("PCA estimate inside the Moon".into()));
    }
    let track_dir = positions[take - 1] - positions[0];
    let cross_dir = track_dir.cross(&pca);
    let cross_norm = cross_dir.norm();
    if cross_norm <= 0.0 {
        return Err(Error::DegenerateGeometry("track direction parallel to PCA radial".into()));
    }
    let cross_unit = cross_dir / cross_norm;
    let foot = pca * ((pca_norm - altitude) / pca_norm);
    let surface = |p: Vector3<f64>| p * (constants.r_m / p.norm());
    let plus = surface(foot + cross_unit * cross_track);
    let minus = surface(foot - cross_unit * cross_track);

    let single = std::slice::from_ref(pass);
    let cost_plus = cost(&plus, single, false, constants)?;
    let cost_minus = cost(&minus, single, false, constants)?;
    let (candidates, candidate_costs) = if cost_plus <= cost_minus {
        ([plus, minus], [cost_plus, cost_minus])
    } else {
        ([minus, plus], [cost_minus, cost_plus])
    };

    Ok(Step1Solution {
        position: candidates[0],
        candidates,
        candidate_costs,
        pca,
        cross_track_km: cross_track,
        clamped_angles: clamped,
        skipped_pairs: skipped,
    })
}
