//! Subtrack plane fitting and mirror-location reflection.
//!
//! A single pass constrains the receiver to two cost minima symmetric about
//! the plane of the satellite subtrack. Reflecting an estimate across that
//! plane jumps between them.

use nalgebra::{Matrix3, Vector3};

use crate::error::Error;
use crate::Result;

/// Least-squares plane through the Moon center containing the pass geometry:
/// the unit normal minimizing sum of squared out-of-plane components of the
/// normalized satellite positions.
pub fn fit_subtrack_plane(positions: &[Vector3<f64>]) -> Result<Vector3<f64>> {
    if positions.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "plane fit needs at least 3 positions, got {}",
            positions.len()
        )));
    }
    let mut scatter = Matrix3::zeros();
    for p in positions {
        let n = p.norm();
        if n <= 0.0 {
            return Err(Error::DegenerateGeometry("zero-norm satellite position".into()));
        }
        let u = p / n;
        scatter += u * u.transpose();
    }
    let eigen = scatter.symmetric_eigen();
    // Smallest eigenvalue's eigenvector is the plane normal.
    let mut idx = 0;
    for k in 1..3 {
        if eigen.eigenvalues[k] < eigen.eigenvalues[idx] {
            idx = k;
        }
    }
    let mut vals: Vec<f64> = eigen.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // A plane needs two spread directions (collinear samples have a single
    // nonzero eigenvalue), and the normal must be well separated from the
    // in-plane pair.
    if vals[1] < 1e-9 * vals[2] || vals[0] > 0.5 * vals[1] {
        return Err(Error::DegenerateGeometry(format!(
            "pass positions do not define a plane (eigenvalues {vals:?})"
        )));
    }
    Ok(eigen.eigenvectors.column(idx).into_owned().normalize())
}

/// Reflect `r` across the plane through the origin with unit normal `normal`.
/// Norm-preserving and involutive.
pub fn mirror_reflect(r: &Vector3<f64>, normal: &Vector3<f64>) -> Vector3<f64> {
    r - 2.0 * r.dot(normal) * normal
}
