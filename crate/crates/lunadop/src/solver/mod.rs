//! Three-step geolocation pipeline.
//!
//! Step 1 ([`step1_algebraic`]) turns Doppler cone angles into a rough
//! surface estimate. Step 2 ([`step2_constrained_gn`]) runs Gauss-Newton on
//! the (x, y) chart of the lunar sphere with Armijo backtracking, driving the
//! estimate to within the full problem's convergence basin. Step 3
//! ([`step3_unconstrained_gn`]) releases the surface constraint and minimizes
//! the sigma-weighted cost with a soft line search. A single pass leaves a
//! mirror ambiguity across the subtrack plane; [`disambiguate_multipass`]
//! resolves it by cross-pass consistency of the candidate pairs.
//!
//! The residual for observation j is `f_j = lambda0 D_j + d(ADR_j)/dt`
//! evaluated against the broadcast ephemeris; its position gradient is the
//! projection row of [`jacobian_row_from_geometry`]. The Gauss-Newton update
//! solves the normal equations for `-(H^T H)^{-1} H^T f`.

mod line_search;
mod mirror;
mod step1;

pub use line_search::{armijo_refine, soft_line_search, ArmijoParams, SoftLineSearchParams, ARMIJO_UNDERFLOW};
pub use mirror::{fit_subtrack_plane, mirror_reflect};
pub use step1::{step1_algebraic, Step1Solution};

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::ephemeris::ChebyshevEphemeris;
use crate::error::Error;
use crate::frames::LunarConstants;
use crate::measurement::{adr_rate, los_geometry, ClockBiases, DopplerObservation, LosGeometry};
use crate::Result;

/// Stopping thresholds, iteration caps and line-search parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Step-2 stop threshold on the refined step length (km); coarse on
    /// purpose, this step only has to reach the step-3 basin.
    pub step2_threshold_km: f64,
    /// Step-3 stop threshold on the refined step length (km).
    pub step3_threshold_km: f64,
    /// Iteration cap per step.
    pub max_iterations: usize,
    pub armijo: ArmijoParams,
    pub sls: SoftLineSearchParams,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            step2_threshold_km: 1.0e-3,
            step3_threshold_km: 1.0e-5,
            max_iterations: 100,
            armijo: ArmijoParams::default(),
            sls: SoftLineSearchParams::default(),
        }
    }
}

/// One pass worth of solver input: the broadcast ephemeris and the Doppler
/// observations taken against it.
#[derive(Debug, Clone)]
pub struct PassData {
    pub pass_id: u32,
    pub ephemeris: ChebyshevEphemeris,
    pub observations: Vec<DopplerObservation>,
}

/// Anomaly flags accumulated during a descent step.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct StepFlags {
    /// Step-2 chart left the sphere and was clipped back.
    pub clipped: bool,
    /// Armijo backtracking underflowed to a zero step.
    pub armijo_underflow: bool,
    /// Normal matrix was singular; returned the best iterate so far.
    pub singular_normal: bool,
}

/// Result of one descent step.
#[derive(Debug, Clone, Copy)]
pub struct StepRun {
    pub position: Vector3<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Cost at the final iterate, in the step's own objective.
    pub cost: f64,
    pub flags: StepFlags,
}

/// Per-step record kept in the estimate history.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u8,
    pub position_km: [f64; 3],
    pub cost: f64,
}

/// Refined mirror-side solution.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MirrorCandidate {
    pub position_km: [f64; 3],
    pub cost: f64,
}

/// Receiver position estimate with per-step history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverEstimate {
    pub position_km: [f64; 3],
    pub step_history: Vec<StepRecord>,
    pub iterations_step2: usize,
    pub iterations_step3: usize,
    pub converged: bool,
    pub cost_final: f64,
    pub mirror: Option<MirrorCandidate>,
}

impl SolverEstimate {
    pub fn position(&self) -> Vector3<f64> {
        Vector3::from_row_slice(&self.position_km)
    }

    pub fn mirror_position(&self) -> Option<Vector3<f64>> {
        self.mirror.map(|m| Vector3::from_row_slice(&m.position_km))
    }
}

/// Residual of one observation: `lambda0 D + d(ADR)/dt` (km/s).
pub fn residual(
    receiver: &Vector3<f64>,
    obs: &DopplerObservation,
    ephemeris: &ChebyshevEphemeris,
    constants: &LunarConstants,
) -> Result<f64> {
    let model = adr_rate(receiver, obs.t_r, ephemeris, ClockBiases::default(), constants)?;
    Ok(constants.lambda0 * obs.doppler_hz + model)
}

/// Position gradient of the modeled range rate with the satellite state
/// frozen at the solved light-time geometry:
/// `R = -(v - <v, r_sr> r_sr / |r_sr|^2) / |r_sr|`.
pub fn jacobian_row_from_geometry(geom: &LosGeometry) -> Vector3<f64> {
    let v = geom.sat_vel;
    let r = geom.r_sr;
    let rho2 = geom.range_km * geom.range_km;
    -(v - r * (v.dot(&r) / rho2)) / geom.range_km
}

/// [`jacobian_row_from_geometry`] at an observation epoch.
pub fn jacobian_row(
    receiver: &Vector3<f64>,
    obs: &DopplerObservation,
    ephemeris: &ChebyshevEphemeris,
    constants: &LunarConstants,
) -> Result<Vector3<f64>> {
    let geom = los_geometry(receiver, obs.t_r, ephemeris, ClockBiases::default(), constants)?;
    Ok(jacobian_row_from_geometry(&geom))
}

struct System {
    residuals: Vec<f64>,
    rows: Vec<Vector3<f64>>,
    sigmas: Vec<f64>,
}

fn build_system(
    receiver: &Vector3<f64>,
    passes: &[PassData],
    constants: &LunarConstants,
) -> Result<System> {
    let n: usize = passes.iter().map(|p| p.observations.len()).sum();
    if n == 0 {
        return Err(Error::EmptyInput("no observations".into()));
    }
    let mut residuals = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    let mut sigmas = Vec::with_capacity(n);
    for pass in passes {
        for obs in &pass.observations {
            residuals.push(residual(receiver, obs, &pass.ephemeris, constants)?);
            rows.push(jacobian_row(receiver, obs, &pass.ephemeris, constants)?);
            sigmas.push(obs.sigma_tot_kmps);
        }
    }
    Ok(System { residuals, rows, sigmas })
}

/// Cost over all passes: half the sum of squared residuals, each residual
/// divided by `lambda0 * sigma_tot` when `weighted`.
pub fn cost(
    receiver: &Vector3<f64>,
    passes: &[PassData],
    weighted: bool,
    constants: &LunarConstants,
) -> Result<f64> {
    let mut total = 0.0;
    let mut any = false;
    for pass in passes {
        for obs in &pass.observations {
            any = true;
            let f = residual(receiver, obs, &pass.ephemeris, constants)?;
            let scaled = if weighted { f / (constants.lambda0 * obs.sigma_tot_kmps) } else { f };
            total += scaled * scaled;
        }
    }
    if !any {
        return Err(Error::EmptyInput("no observations".into()));
    }
    Ok(0.5 * total)
}

/// Cost and its position gradient in the same weighting.
pub fn cost_and_gradient(
    receiver: &Vector3<f64>,
    passes: &[PassData],
    weighted: bool,
    constants: &LunarConstants,
) -> Result<(f64, Vector3<f64>)> {
    let sys = build_system(receiver, passes, constants)?;
    let mut value = 0.0;
    let mut grad = Vector3::zeros();
    for ((f, row), sigma) in sys.residuals.iter().zip(&sys.rows).zip(&sys.sigmas) {
        let w2 = if weighted { 1.0 / (constants.lambda0 * sigma).powi(2) } else { 1.0 };
        value += 0.5 * w2 * f * f;
        grad += row * (w2 * f);
    }
    Ok((value, grad))
}

/// Map a chart point to the sphere of radius `r_m`, keeping the hemisphere of
/// `z_sign`; clips chart points that leave the disc.
fn to_sphere(xy: Vector2<f64>, r_m: f64, z_sign: f64) -> (Vector3<f64>, bool) {
    let mut xy = xy;
    let mut clipped = false;
    let norm = xy.norm();
    if norm >= r_m {
        xy *= (r_m * (1.0 - 1e-12)) / norm;
        clipped = true;
    }
    let z = (r_m * r_m - xy.norm_squared()).sqrt() * z_sign;
    (Vector3::new(xy.x, xy.y, z), clipped)
}

/// Step 2: surface-constrained Gauss-Newton on the (x, y) chart with Armijo
/// refinement; stops when the refined step length drops below the step-2
/// threshold. The unweighted cost is used throughout.
pub fn step2_constrained_gn(
    r0: &Vector3<f64>,
    passes: &[PassData],
    config: &SolverConfig,
    constants: &LunarConstants,
) -> Result<StepRun> {
    let z_sign = if r0.z < 0.0 { -1.0 } else { 1.0 };
    let mut xy = Vector2::new(r0.x, r0.y);
    let mut flags = StepFlags::default();
    let mut converged = false;
    let mut iterations = 0;
    let mut position = to_sphere(xy, constants.r_m, z_sign).0;
    let mut current_cost = f64::NAN;

    for iter in 1..=config.max_iterations {
        iterations = iter;
        let (r, clipped) = to_sphere(xy, constants.r_m, z_sign);
        flags.clipped |= clipped;
        position = r;
        let sys = build_system(&r, passes, constants)?;

        let mut ata = Matrix2::zeros();
        let mut atb = Vector2::zeros();
        let mut cost0 = 0.0;
        for (f, row) in sys.residuals.iter().zip(&sys.rows) {
            let rxy = Vector2::new(row.x, row.y);
            ata += rxy * rxy.transpose();
            atb += rxy * *f;
            cost0 += 0.5 * f * f;
        }
        current_cost = cost0;

        let scale = ata.trace();
        let Some(inv) = ata.try_inverse().filter(|_| ata.determinant() > 1e-14 * scale * scale)
        else {
            flags.singular_normal = true;
            break;
        };
        let delta = -(inv * atb);
        let grad_dot_step = atb.dot(&delta);

        let (epsilon, underflow) = armijo_refine(
            cost0,
            grad_dot_step,
            |e| cost(&to_sphere(xy + delta * e, constants.r_m, z_sign).0, passes, false, constants),
            &config.armijo,
        )?;
        flags.armijo_underflow |= underflow;

        xy += delta * epsilon;
        let (r_new, clipped_new) = to_sphere(xy, constants.r_m, z_sign);
        flags.clipped |= clipped_new;
        position = r_new;

        if (delta * epsilon).norm() < config.step2_threshold_km {
            converged = true;
            current_cost = cost(&position, passes, false, constants)?;
            break;
        }
    }

    Ok(StepRun { position, iterations, converged, cost: current_cost, flags })
}

/// Step 3: unconstrained weighted Gauss-Newton with the soft line search;
/// weights are `1/sqrt(sigma_tot)` in the normal equations and the
/// `1/(lambda0 sigma_tot)^2` cost of the weighted objective drives the line
/// search. Stops when the refined step length drops below the step-3
/// threshold; a singular normal matrix returns the best iterate, flagged.
pub fn step3_unconstrained_gn(
    r0: &Vector3<f64>,
    passes: &[PassData],
    config: &SolverConfig,
    constants: &LunarConstants,
) -> Result<StepRun> {
    let mut r = *r0;
    let mut flags = StepFlags::default();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=config.max_iterations {
        iterations = iter;
        let sys = build_system(&r, passes, constants)?;

        let mut ata = Matrix3::zeros();
        let mut atb = Vector3::zeros();
        for ((f, row), sigma) in sys.residuals.iter().zip(&sys.rows).zip(&sys.sigmas) {
            let w2 = 1.0 / sigma;
            ata += row * row.transpose() * w2;
            atb += row * (*f * w2);
        }
        let scale = ata.trace();
        let Some(inv) =
            ata.try_inverse().filter(|_| ata.determinant().abs() > 1e-30 * scale.powi(3))
        else {
            flags.singular_normal = true;
            break;
        };
        let delta = -(inv * atb);

        let alpha = soft_line_search(
            |a| cost(&(r + delta * a), passes, true, constants),
            |a| {
                let (_, grad) = cost_and_gradient(&(r + delta * a), passes, true, constants)?;
                Ok(delta.dot(&grad))
            },
            &config.sls,
        )?;

        r += delta * alpha;
        if (delta * alpha).norm() < config.step3_threshold_km {
            converged = true;
            break;
        }
    }

    let final_cost = cost(&r, passes, true, constants)?;
    Ok(StepRun { position: r, iterations, converged, cost: final_cost, flags })
}

/// Satellite positions seen by the receiver over a pass, for the subtrack
/// plane fit.
fn pass_track_positions(pass: &PassData) -> Result<Vec<Vector3<f64>>> {
    pass.observations
        .iter()
        .step_by(10.max(pass.observations.len() / 64))
        .map(|obs| Ok(pass.ephemeris.position_at(obs.t_r)?))
        .collect()
}

/// Run steps 2 and 3 from a surface initialization over any set of passes.
pub fn solve_from(
    r0_surface: &Vector3<f64>,
    passes: &[PassData],
    config: &SolverConfig,
    constants: &LunarConstants,
) -> Result<(StepRun, StepRun)> {
    let s2 = step2_constrained_gn(r0_surface, passes, config, constants)?;
    let s3 = step3_unconstrained_gn(&s2.position, passes, config, constants)?;
    Ok((s2, s3))
}

/// Full single-pass product: the cost-preferred minimum plus the other side.
#[derive(Debug, Clone)]
pub struct SinglePassSolution {
    pub estimate: SolverEstimate,
    pub step1: Step1Solution,
}

/// Three-step solve of one pass.
///
/// The cascade runs from the step-1 candidate the unweighted cost prefers,
/// then the converged estimate is reflected across the subtrack plane and
/// re-refined with step 3, and the two local minima are compared: the
/// cheaper weighted cost becomes the reported position, the other the mirror
/// candidate. On a single pass the minima are nearly symmetric, so this
/// comparison is only as reliable as the measurement noise allows; multiple
/// passes resolve it robustly.
///
/// `step_history` records the cascade branch; when the reflected minimum
/// wins the comparison, `position_km` differs from the step-3 record.
pub fn solve_single_pass(
    pass: &PassData,
    config: &SolverConfig,
    constants: &LunarConstants,
) -> Result<SinglePassSolution> {
    let passes = std::slice::from_ref(pass);
    let s1 = step1_algebraic(pass, constants)?;
    let (s2, s3) = solve_from(&s1.position, passes, config, constants)?;

    let plane = fit_subtrack_plane(&pass_track_positions(pass)?)?;
    let mirror_start = mirror_reflect(&s3.position, &plane);
    let m3 = step3_unconstrained_gn(&mirror_start, passes, config, constants)?;

    let (winner, loser) = if s3.cost <= m3.cost { (&s3, &m3) } else { (&m3, &s3) };
    let estimate = SolverEstimate {
        position_km: winner.position.into(),
        step_history: vec![
            StepRecord { step: 1, position_km: s1.position.into(), cost: s1.candidate_costs[0] },
            StepRecord { step: 2, position_km: s2.position.into(), cost: s2.cost },
            StepRecord { step: 3, position_km: s3.position.into(), cost: s3.cost },
        ],
        iterations_step2: s2.iterations,
        iterations_step3: s3.iterations,
        converged: s2.converged && s3.converged,
        cost_final: winner.cost,
        mirror: Some(MirrorCandidate { position_km: loser.position.into(), cost: loser.cost }),
    };
    Ok(SinglePassSolution { estimate, step1: s1 })
}

/// Multi-pass disambiguation product.
#[derive(Debug, Clone)]
pub struct MultiPassSolution {
    /// Joint solve over all passes from the consistent cluster.
    pub estimate: SolverEstimate,
    /// Per-pass single-pass solutions feeding the clustering.
    pub per_pass: Vec<SinglePassSolution>,
    /// Clustering was ambiguous and the joint-cost fallback decided.
    pub ambiguous: bool,
}

/// Candidate spread threshold below which clustering is called ambiguous (km).
const AMBIGUITY_THRESHOLD_KM: f64 = 1.0;

/// Resolve the mirror ambiguity with two or more passes.
///
/// Each pass contributes a (primary, mirror) candidate pair. The true
/// location repeats across passes while the mirrors drift with the subtrack
/// orientation, so the seed whose per-pass nearest candidates cluster
/// tightest wins; the final estimate is a weighted joint solve over all
/// passes from that cluster's mean. If both seeds cluster within
/// [`AMBIGUITY_THRESHOLD_KM`] per pass of each other, the joint costs of the
/// two sides decide instead, flagged as ambiguous.
pub fn disambiguate_multipass(
    passes: &[PassData],
    config: &SolverConfig,
    constants: &LunarConstants,
) -> Result<MultiPassSolution> {
    if passes.len() < 2 {
        return Err(Error::EmptyInput("disambiguation needs at least 2 passes".into()));
    }
    let per_pass: Vec<SinglePassSolution> =
        passes.iter().map(|p| solve_single_pass(p, config, constants)).collect::<Result<_>>()?;

    let pair = |sp: &SinglePassSolution| -> (Vector3<f64>, Vector3<f64>) {
        (sp.estimate.position(), sp.estimate.mirror_position().unwrap_or_else(|| sp.estimate.position()))
    };

    let seeds = pair(&per_pass[0]);
    let score = |seed: &Vector3<f64>| -> f64 {
        per_pass[1..]
            .iter()
            .map(|sp| {
                let (p, m) = pair(sp);
                (p - seed).norm().min((m - seed).norm())
            })
            .sum::<f64>()
    };
    let (score_a, score_b) = (score(&seeds.0), score(&seeds.1));
    let mean_gap = (score_a - score_b).abs() / (passes.len() - 1) as f64;
    let ambiguous = mean_gap < AMBIGUITY_THRESHOLD_KM;

    // Mean of the seed-consistent candidates, preferring converged members.
    let cluster_mean = |seed: Vector3<f64>| -> Vector3<f64> {
        let mut sum = Vector3::zeros();
        let mut count = 0.0;
        for sp in &per_pass {
            let (p, m) = pair(sp);
            let member = if (p - seed).norm() <= (m - seed).norm() { p } else { m };
            if sp.estimate.converged {
                sum += member;
                count += 1.0;
            }
        }
        if count > 0.0 {
            sum / count
        } else {
            seed
        }
    };

    // Final estimate: weighted joint solve over all passes, started from the
    // winning cluster's mean.
    let joint = |seed: Vector3<f64>| -> Result<StepRun> {
        step3_unconstrained_gn(&cluster_mean(seed), passes, config, constants)
    };
    let (final_pos, final_cost, final_converged) = if ambiguous {
        let run_a = joint(seeds.0)?;
        let run_b = joint(seeds.1)?;
        let best = if run_a.cost <= run_b.cost { run_a } else { run_b };
        (best.position, best.cost, best.converged)
    } else {
        let seed = if score_a <= score_b { seeds.0 } else { seeds.1 };
        let run = joint(seed)?;
        (run.position, run.cost, run.converged)
    };

    // The rejected side: the combined solution reflected across the first
    // pass's subtrack, with its joint cost.
    let plane = fit_subtrack_plane(&pass_track_positions(&passes[0])?)?;
    let mirror_pos = mirror_reflect(&final_pos, &plane);
    let mirror_cost = cost(&mirror_pos, passes, true, constants)?;

    let mut step_history: Vec<StepRecord> = per_pass
        .iter()
        .map(|sp| StepRecord {
            step: 3,
            position_km: sp.estimate.position_km,
            cost: sp.estimate.cost_final,
        })
        .collect();
    step_history.push(StepRecord { step: 3, position_km: final_pos.into(), cost: final_cost });

    let estimate = SolverEstimate {
        position_km: final_pos.into(),
        step_history,
        iterations_step2: per_pass.iter().map(|sp| sp.estimate.iterations_step2).sum::<usize>()
            / per_pass.len(),
        iterations_step3: per_pass.iter().map(|sp| sp.estimate.iterations_step3).sum::<usize>()
            / per_pass.len(),
        converged: final_converged && per_pass.iter().any(|sp| sp.estimate.converged),
        cost_final: final_cost,
        mirror: Some(MirrorCandidate { position_km: mirror_pos.into(), cost: mirror_cost }),
    };

    Ok(MultiPassSolution { estimate, per_pass, ambiguous })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ephemeris::{corrupt_orbit, fit_chebyshev, EphemerisMethod};
    use crate::frames::Epoch;
    use crate::measurement::{
        ClockModel, ErrorBudgetConfig, LinkBudgetParams, PassSynthesizer, TruthOrbit,
    };
    use crate::orbit::{find_passes, truth_series, KeplerianElements};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn lc() -> LunarConstants {
        LunarConstants::default()
    }

    /// Noiseless pass over `receiver` with a Perfect-method ephemeris.
    fn noiseless_pass(receiver: &Vector3<f64>, nth_full: usize) -> PassData {
        let k = lc();
        let el = KeplerianElements::proposed_llo();
        let truth = TruthOrbit { elements: el, constants: k };
        let series = truth_series(&el, &k, Epoch(0.0), Epoch(30_000.0), 1.0).unwrap();
        let mask = 5f64.to_radians();
        let passes = find_passes(&series, receiver, mask).unwrap();
        let full: Vec<_> = passes
            .iter()
            .filter(|p| p.samples.start > 0 && p.samples.end < series.len())
            .collect();
        let pass = full[nth_full];

        // Pad the fit window so the stencil margin stays covered.
        let pad = 5;
        let lo = pass.samples.start.saturating_sub(pad);
        let hi = (pass.samples.end + pad).min(series.len());
        let segment = series.slice(lo..hi);
        let predicted = corrupt_orbit(&segment, EphemerisMethod::Perfect, 0).unwrap();
        let eph = fit_chebyshev(&predicted).unwrap().ephemeris;

        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut synth = PassSynthesizer::new(
            *receiver,
            &ClockModel::default(),
            &LinkBudgetParams::default(),
            &ErrorBudgetConfig::all_off(),
            0.0,
            mask,
            0,
            k,
        );
        let observations = series.times[pass.samples.clone()]
            .iter()
            .map(|&t| synth.observe(&truth, t, &mut rng).unwrap())
            .collect();
        PassData { pass_id: 0, ephemeris: eph, observations }
    }

    fn test_receiver() -> Vector3<f64> {
        lc().surface_point(82f64.to_radians(), 25f64.to_radians(), 0.0).unwrap()
    }

    #[test]
    fn cost_vanishes_at_truth_and_grows_off_truth() {
        let k = lc();
        let r = test_receiver();
        let pass = noiseless_pass(&r, 0);
        let passes = std::slice::from_ref(&pass);
        let at_truth = cost(&r, passes, false, &k).unwrap();
        assert!(at_truth < 1e-12, "cost at truth {at_truth}");
        let off = r + Vector3::new(10.0, 0.0, 0.0);
        assert!(cost(&off, passes, false, &k).unwrap() > 1e-3);
    }

    #[test]
    fn weighted_cost_reduces_to_scaled_unweighted_for_equal_sigma() {
        let k = lc();
        let r = test_receiver();
        let mut pass = noiseless_pass(&r, 0);
        let sigma = 3.2e-5;
        for obs in &mut pass.observations {
            obs.sigma_tot_kmps = sigma;
        }
        let passes = std::slice::from_ref(&pass);
        let probe = r + Vector3::new(2.0, -1.0, 0.5);
        let unweighted = cost(&probe, passes, false, &k).unwrap();
        let weighted = cost(&probe, passes, true, &k).unwrap();
        let expected = unweighted / (k.lambda0 * sigma).powi(2);
        assert!(((weighted - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn jacobian_row_is_perpendicular_to_sightline() {
        let k = lc();
        let r = test_receiver();
        let pass = noiseless_pass(&r, 0);
        for obs in pass.observations.iter().step_by(50) {
            let geom =
                los_geometry(&r, obs.t_r, &pass.ephemeris, ClockBiases::default(), &k).unwrap();
            let row = jacobian_row_from_geometry(&geom);
            let cosine = row.dot(&geom.r_sr) / (row.norm() * geom.range_km);
            assert!(cosine.abs() < 1e-12, "cosine {cosine}");
        }
    }

    #[test]
    fn jacobian_row_vanishes_for_radial_motion() {
        use crate::measurement::SatelliteSource;
        struct Radial;
        impl SatelliteSource for Radial {
            fn state_at(&self, _t: Epoch) -> crate::Result<(Vector3<f64>, Vector3<f64>)> {
                // Velocity parallel to the receiver-satellite line.
                Ok((Vector3::new(0.0, 0.0, 1900.0), Vector3::new(0.0, 0.0, 1.5)))
            }
        }
        let k = lc();
        let r = Vector3::new(0.0, 0.0, k.r_m);
        let geom = los_geometry(&r, Epoch(0.0), &Radial, ClockBiases::default(), &k).unwrap();
        let row = jacobian_row_from_geometry(&geom);
        assert!(row.norm() < 1e-10, "row {row:?}");
    }

    #[test]
    fn jacobian_matches_frozen_geometry_finite_differences() {
        // The row is the exact gradient of the instantaneous range rate with
        // the satellite state frozen; central differences of that model must
        // agree to 1e-6 relative.
        let k = lc();
        let r = test_receiver();
        let pass = noiseless_pass(&r, 0);
        let h = 1e-3;
        for obs in pass.observations.iter().step_by(40) {
            let geom =
                los_geometry(&r, obs.t_r, &pass.ephemeris, ClockBiases::default(), &k).unwrap();
            let row = jacobian_row_from_geometry(&geom);
            let model = |p: Vector3<f64>| {
                let rel = p - geom.sat_pos;
                rel.dot(&geom.sat_vel) / rel.norm() * (-1.0f64)
            };
            // rate model: d|r - s|/dt = <unit(r - s), -v>; gradient wrt r.
            let mut fd = Vector3::zeros();
            for axis in 0..3 {
                let mut dp = Vector3::zeros();
                dp[axis] = h;
                fd[axis] = (model(r + dp) - model(r - dp)) / (2.0 * h);
            }
            let rel_err = (row - fd).norm() / fd.norm();
            assert!(rel_err < 1e-6, "relative error {rel_err}");
        }
    }

    #[test]
    fn jacobian_close_to_full_residual_finite_differences() {
        // Against the full light-time residual the row differs only by v/c
        // scale terms; 1e-4 relative catches sign and factor errors.
        let k = lc();
        let r = test_receiver();
        let pass = noiseless_pass(&r, 0);
        let h = 1e-2;
        for obs in pass.observations.iter().step_by(120) {
            let row = jacobian_row(&r, obs, &pass.ephemeris, &k).unwrap();
            let mut fd = Vector3::zeros();
            for axis in 0..3 {
                let mut dp = Vector3::zeros();
                dp[axis] = h;
                let fp = residual(&(r + dp), obs, &pass.ephemeris, &k).unwrap();
                let fm = residual(&(r - dp), obs, &pass.ephemeris, &k).unwrap();
                fd[axis] = (fp - fm) / (2.0 * h);
            }
            let rel_err = (row - fd).norm() / fd.norm();
            assert!(rel_err < 1e-4, "relative error {rel_err}");
        }
    }

    #[test]
    fn step2_is_a_fixed_point_at_truth() {
        let k = lc();
        let r = test_receiver();
        let pass = noiseless_pass(&r, 0);
        let run = step2_constrained_gn(&r, std::slice::from_ref(&pass), &SolverConfig::default(), &k)
            .unwrap();
        assert!(run.converged);
        assert!(run.iterations <= 2, "iterations {}", run.iterations);
        assert!((run.position - r).norm() < 1e-3);
        assert!((run.position.norm() - k.r_m).abs() < 1e-9);
    }

    #[test]
    fn step2_converges_from_300_km_offset() {
        let k = lc();
        let r = test_receiver();
        let pass = noiseless_pass(&r, 0);
        // Move 300 km along the surface, stay on the sphere.
        let tangent = Vector3::new(-r.y, r.x, 0.0).normalize();
        let angle = 300.0 / k.r_m;
        let start = (r * angle.cos() + tangent * (k.r_m * angle.sin())).normalize() * k.r_m;
        assert!((start - r).norm() > 290.0);
        let run = step2_constrained_gn(&start, std::slice::from_ref(&pass), &SolverConfig::default(), &k)
            .unwrap();
        assert!(run.converged, "flags {:?}", run.flags);
        assert!((run.position - r).norm() < 20.0, "landed {} km away", (run.position - r).norm());
        assert!((run.position.norm() - k.r_m).abs() < 1e-9);
    }

    #[test]
    fn step3_recovers_truth_to_millimeters() {
        let k = lc();
        let r = test_receiver();
        let pass = noiseless_pass(&r, 0);
        let passes = std::slice::from_ref(&pass);
        let s2 = step2_constrained_gn(&r, passes, &SolverConfig::default(), &k).unwrap();
        let s3 = step3_unconstrained_gn(&s2.position, passes, &SolverConfig::default(), &k).unwrap();
        assert!(s3.converged);
        let err_mm = (s3.position - r).norm() * 1e6;
        assert!(err_mm < 1.0, "error {err_mm} mm");
    }

    #[test]
    fn single_pass_pipeline_closes_the_loop() {
        let k = lc();
        let r = test_receiver();
        let pass = noiseless_pass(&r, 0);
        let sol = solve_single_pass(&pass, &SolverConfig::default(), &k).unwrap();
        // One step-1 candidate lands within the rough-estimate scale; the
        // cross-track sign may point at the mirror side.
        let s1_best =
            sol.step1.candidates.iter().map(|c| (c - r).norm()).fold(f64::MAX, f64::min);
        assert!(s1_best < 100.0, "best step-1 candidate error {s1_best} km");
        // The final cost comparison between the two refined minima lands on
        // the receiver for noiseless data.
        let err_m = (sol.estimate.position() - r).norm() * 1e3;
        assert!(err_m < 1.0, "pipeline error {err_m} m");
        assert!(sol.estimate.converged);
        // Cascading from the candidate nearer the truth, every step improves.
        let passes = std::slice::from_ref(&pass);
        let start = sol
            .step1
            .candidates
            .iter()
            .min_by(|a, b| (*a - r).norm().partial_cmp(&(*b - r).norm()).unwrap())
            .copied()
            .unwrap();
        let (s2, s3) = solve_from(&start, passes, &SolverConfig::default(), &k).unwrap();
        let errs = [(start - r).norm(), (s2.position - r).norm(), (s3.position - r).norm()];
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "per-step errors {errs:?}");
    }

    #[test]
    fn mirror_candidate_sits_at_a_second_minimum() {
        let k = lc();
        let r = test_receiver();
        let pass = noiseless_pass(&r, 0);
        let sol = solve_single_pass(&pass, &SolverConfig::default(), &k).unwrap();
        let mirror = sol.estimate.mirror.unwrap();
        let mirror_pos = Vector3::from_row_slice(&mirror.position_km);
        // Two distinct minima with near-equal (tiny) costs relative to a
        // 10 km offset point, related by the subtrack reflection.
        assert!((mirror_pos - sol.estimate.position()).norm() > 1.0);
        let off_cost = cost(&(r + Vector3::new(10.0, 0.0, 0.0)), std::slice::from_ref(&pass), true, &k)
            .unwrap();
        assert!(mirror.cost < off_cost * 1e-2, "mirror cost {} vs offset cost {off_cost}", mirror.cost);
        assert!(sol.estimate.cost_final <= mirror.cost);
        // The winner is the truth side.
        assert!((sol.estimate.position() - r).norm() * 1e3 < 1.0);
    }

    #[test]
    fn two_passes_disambiguate_the_mirror() {
        let k = lc();
        let r = test_receiver();
        let p0 = noiseless_pass(&r, 0);
        let mut p1 = noiseless_pass(&r, 1);
        p1.pass_id = 1;
        for obs in &mut p1.observations {
            obs.pass_id = 1;
        }
        let sol = disambiguate_multipass(&[p0, p1], &SolverConfig::default(), &k).unwrap();
        assert!(!sol.ambiguous);
        let err_m = (sol.estimate.position() - r).norm() * 1e3;
        assert!(err_m < 1.0, "joint error {err_m} m");
        // The mirrors of the two passes differ by km while the primaries agree.
        let m0 = sol.per_pass[0].estimate.mirror_position().unwrap();
        let m1 = sol.per_pass[1].estimate.mirror_position().unwrap();
        let mirror_gap = (m0 - m1).norm();
        assert!((0.5..20.0).contains(&mirror_gap), "mirror gap {mirror_gap} km");
        let p_gap =
            (sol.per_pass[0].estimate.position() - sol.per_pass[1].estimate.position()).norm();
        assert!(p_gap < 0.1, "primary gap {p_gap} km");
    }

    #[test]
    fn step1_on_subtrack_receiver_sees_small_cross_track() {
        // The cone-angle construction assumes straight-line constant-speed
        // motion, so test it on exactly that: a level track directly over the
        // receiver gives cross-track distance ~0 (the altitude leg absorbs
        // the whole perpendicular separation).
        let k = lc();
        let receiver = Vector3::new(0.0, 0.0, k.r_m);
        let speed = 1.63;
        let altitude = 200.0;
        let n = 101;
        let times: Vec<Epoch> = (0..n).map(|i| Epoch(i as f64)).collect();
        let half = (n / 2) as f64;
        let positions: Vec<Vector3<f64>> = times
            .iter()
            .map(|t| Vector3::new(speed * (t.as_secs() - half), 0.0, k.r_m + altitude))
            .collect();
        let velocities = vec![Vector3::new(speed, 0.0, 0.0); n];
        let series =
            crate::orbit::SatelliteStateSeries::new(times.clone(), positions.clone(), velocities)
                .unwrap();
        let eph = crate::ephemeris::fit_chebyshev(&series).unwrap().ephemeris;
        let observations: Vec<_> = times
            .iter()
            .zip(&positions)
            .map(|(t, p)| {
                let cos_alpha = (receiver - p).normalize().x; // v parallel +x
                crate::measurement::DopplerObservation {
                    t_r: *t,
                    doppler_hz: k.f0 * speed * cos_alpha / k.c,
                    cn0_dbhz: 80.0,
                    sigma_tot_kmps: 1e-6,
                    pass_id: 0,
                }
            })
            .collect();
        let pass = PassData { pass_id: 0, ephemeris: eph, observations };
        let s1 = step1_algebraic(&pass, &k).unwrap();
        assert!(s1.cross_track_km < 5.0, "cross-track {} km", s1.cross_track_km);
        assert!((s1.pca - Vector3::new(0.0, 0.0, k.r_m + altitude)).norm() < 5.0);
    }
}
