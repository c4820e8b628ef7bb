//! Geometric dilution of precision for the Doppler solution.
//!
//! Each observation contributes a row `lambda0 * R / sigma_tot` built from
//! the same range-rate gradient the solver linearizes with; GDOP is the
//! square root of the trace of the inverse normal matrix. Cells that never
//! see the satellite, or whose geometry leaves the normal matrix effectively
//! singular, report the infinity sentinel.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::frames::LunarConstants;
use crate::measurement::{cn0, sigma_meas, sigma_tot, ClockModel, ErrorBudgetConfig, LinkBudgetParams};
use crate::orbit::{elevation_angle, SatelliteStateSeries};
use crate::Result;

/// Condition-number cutoff beyond which the geometry counts as singular.
const CONDITION_LIMIT: f64 = 1e12;

/// One observation's contribution to the DOP geometry.
#[derive(Debug, Clone, Copy)]
pub struct DopSample {
    /// Rotation-corrected satellite position (km).
    pub sat_pos: Vector3<f64>,
    /// Rotation-corrected satellite velocity (km/s).
    pub sat_vel: Vector3<f64>,
    /// Total per-sample error (km/s).
    pub sigma_tot_kmps: f64,
}

/// Range-rate gradient row for a receiver/satellite pair (1/s).
fn geometry_row(receiver: &Vector3<f64>, sat_pos: &Vector3<f64>, sat_vel: &Vector3<f64>) -> Vector3<f64> {
    let rel = receiver - sat_pos;
    let rho2 = rel.norm_squared();
    -(sat_vel - rel * (sat_vel.dot(&rel) / rho2)) / rho2.sqrt()
}

/// GDOP from explicit weighted rows: `sqrt(trace((H^T H)^-1))`. Returns
/// `f64::INFINITY` for singular or near-singular geometry.
pub fn gdop_from_rows(rows: &[Vector3<f64>]) -> Result<f64> {
    if rows.len() < 3 {
        return Err(Error::DegenerateGeometry(format!("GDOP needs >= 3 observations, got {}", rows.len())));
    }
    let mut normal = Matrix3::zeros();
    for row in rows {
        normal += row * row.transpose();
    }
    let eigen = normal.symmetric_eigen();
    let max = eigen.eigenvalues.max();
    let min = eigen.eigenvalues.min();
    if !(min > 0.0) || max / min > CONDITION_LIMIT {
        return Ok(f64::INFINITY);
    }
    match normal.try_inverse() {
        Some(inv) => Ok(inv.trace().sqrt()),
        None => Ok(f64::INFINITY),
    }
}

/// GDOP at a receiver from per-observation geometry samples, with rows
/// `lambda0 * R_j / sigma_j`.
pub fn gdop(receiver: &Vector3<f64>, samples: &[DopSample], constants: &LunarConstants) -> Result<f64> {
    let rows: Vec<Vector3<f64>> = samples
        .iter()
        .map(|s| geometry_row(receiver, &s.sat_pos, &s.sat_vel) * (constants.lambda0 / s.sigma_tot_kmps))
        .collect();
    gdop_from_rows(&rows)
}

/// Polar GDOP map: 1 deg latitude cells from 70 to 90, 5 deg longitude cells
/// around the circle, evaluated at cell centers on the surface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GdopGrid {
    pub lat_edges_deg: Vec<f64>,
    pub lon_edges_deg: Vec<f64>,
    /// Row-major [lat][lon], `f64::INFINITY` where no solution geometry exists.
    pub values: Vec<f64>,
}

impl GdopGrid {
    pub fn n_lat(&self) -> usize {
        self.lat_edges_deg.len() - 1
    }

    pub fn n_lon(&self) -> usize {
        self.lon_edges_deg.len() - 1
    }

    pub fn value(&self, lat_idx: usize, lon_idx: usize) -> f64 {
        self.values[lat_idx * self.n_lon() + lon_idx]
    }

    pub fn cell_center_deg(&self, lat_idx: usize, lon_idx: usize) -> (f64, f64) {
        (
            0.5 * (self.lat_edges_deg[lat_idx] + self.lat_edges_deg[lat_idx + 1]),
            0.5 * (self.lon_edges_deg[lon_idx] + self.lon_edges_deg[lon_idx + 1]),
        )
    }
}

/// Scenario inputs for the GDOP map.
#[derive(Debug, Clone, Copy)]
pub struct GdopMapConfig {
    /// Elevation mask (rad).
    pub mask_rad: f64,
    /// Ephemeris velocity-error component of sigma_tot (km/s).
    pub sigma_vel_kmps: f64,
    pub clock_model: ClockModel,
    pub link: LinkBudgetParams,
    pub budget: ErrorBudgetConfig,
}

/// Build the 20 x 72 polar grid from a truth series spanning the requested
/// passes. Every cell collects its visible samples and their per-sample
/// sigma, then evaluates [`gdop`]; cells are independent and run in parallel.
pub fn gdop_map(
    series: &SatelliteStateSeries,
    config: &GdopMapConfig,
    constants: &LunarConstants,
) -> Result<GdopGrid> {
    let lat_edges_deg: Vec<f64> = (70..=90).map(|d| d as f64).collect();
    let lon_edges_deg: Vec<f64> = (0..=72).map(|d| 5.0 * d as f64).collect();
    let n_lat = lat_edges_deg.len() - 1;
    let n_lon = lon_edges_deg.len() - 1;

    let sigma_fixed = [
        if config.budget.ephemeris { config.sigma_vel_kmps } else { 0.0 },
        if config.budget.satellite_clock { config.clock_model.sigma_clk_sat_kmps(constants) } else { 0.0 },
        if config.budget.receiver_clock { config.clock_model.sigma_clk_rec_kmps(constants) } else { 0.0 },
    ];

    let cells: Vec<(usize, usize)> =
        (0..n_lat).flat_map(|i| (0..n_lon).map(move |j| (i, j))).collect();
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            let lat = 0.5 * (lat_edges_deg[i] + lat_edges_deg[i + 1]);
            let lon = 0.5 * (lon_edges_deg[j] + lon_edges_deg[j + 1]);
            let receiver = constants
                .surface_point(lat.to_radians(), lon.to_radians(), 0.0)
                .expect("cell latitude in range");
            let mut samples = Vec::new();
            for idx in 0..series.len() {
                let pos = &series.positions[idx];
                if elevation_angle(&receiver, pos).map(|e| e > config.mask_rad).unwrap_or(false) {
                    let range = (receiver - pos).norm();
                    let meas = match cn0(&config.link, range, constants) {
                        Ok(db) => sigma_meas(&config.link, db, constants),
                        Err(_) => continue,
                    };
                    let sigma = sigma_tot(&[
                        sigma_fixed[0],
                        sigma_fixed[1],
                        sigma_fixed[2],
                        if config.budget.carrier_tracking { meas } else { 0.0 },
                    ])
                    .expect("non-negative components")
                    .max(crate::measurement::SIGMA_TOT_FLOOR_KMPS);
                    samples.push(DopSample {
                        sat_pos: *pos,
                        sat_vel: series.velocities[idx],
                        sigma_tot_kmps: sigma,
                    });
                }
            }
            if samples.len() < 3 {
                return f64::INFINITY;
            }
            gdop(&receiver, &samples, constants).unwrap_or(f64::INFINITY)
        })
        .collect();

    Ok(GdopGrid { lat_edges_deg, lon_edges_deg, values })
}
