//! Doppler synthesis and the accumulated-delta-range forward model.
//!
//! The observable is the carrier Doppler shift D. Its deterministic part is
//! the line-of-sight relative speed between the rotation-corrected satellite
//! and the stationary receiver; `-lambda0 * D` must equal the time derivative
//! of the accumulated delta range computed from the ephemeris, which this
//! module evaluates two independent ways:
//!
//! * [`adr_rate`] — five-point central difference of
//!   [`accumulated_delta_range`] at 0.1 s spacing (the solver's forward
//!   model);
//! * [`range_rate_analytic`] — closed-form implicit derivative of the
//!   light-time equation, including the Moon-rotation rate term and the
//!   relativistic ratio correction (used to synthesize measurements).
//!
//! The two routes agreeing at truth is the core consistency contract and is
//! enforced by tests here and in the acceptance suite.
//!
//! Error model: ephemeris velocity error, satellite clock (white frequency
//! noise at LRO stability), receiver clock (power-law oscillator model at the
//! sampling time), and carrier tracking noise from the link budget, combined
//! root-sum-square into a per-sample total.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ephemeris::ChebyshevEphemeris;
use crate::error::Error;
use crate::frames::{rotation_z_compensating, rotation_z_compensating_deriv, Epoch, LunarConstants};
use crate::orbit::{propagate, KeplerianElements};
use crate::Result;

/// Five-point stencil spacing for the ADR derivative (s).
pub const STENCIL_DT_S: f64 = 0.1;

/// Light-time fixed-point convergence tolerance (s).
const LIGHT_TIME_TOL_S: f64 = 1e-12;
/// Light-time fixed-point iteration cap.
const LIGHT_TIME_MAX_ITER: usize = 10;

/// Floor applied to recorded per-sample sigma so weights stay finite when
/// every error source is switched off (km/s).
pub const SIGMA_TOT_FLOOR_KMPS: f64 = 1e-9;

/// Anything that can report a Moon-fixed satellite state at a time tag.
pub trait SatelliteSource {
    fn state_at(&self, t: Epoch) -> Result<(Vector3<f64>, Vector3<f64>)>;
}

/// Truth orbit as a satellite source (exact two-body propagation).
#[derive(Debug, Clone, Copy)]
pub struct TruthOrbit {
    pub elements: KeplerianElements,
    pub constants: LunarConstants,
}

impl SatelliteSource for TruthOrbit {
    fn state_at(&self, t: Epoch) -> Result<(Vector3<f64>, Vector3<f64>)> {
        propagate(&self.elements, &self.constants, t)
    }
}

impl SatelliteSource for ChebyshevEphemeris {
    fn state_at(&self, t: Epoch) -> Result<(Vector3<f64>, Vector3<f64>)> {
        ChebyshevEphemeris::state_at(self, t)
    }
}

/// Constant clock biases entering the emission-time and range model (s).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClockBiases {
    pub receiver_s: f64,
    pub satellite_s: f64,
}

/// Oscillator stability model for both ends of the link.
///
/// The satellite carries an LRO-class clock characterized by a single
/// fractional-frequency deviation; the receiver a rubidium standard
/// characterized by power-law coefficients evaluated at the sampling time.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClockModel {
    /// Satellite fractional frequency deviation (s/s).
    pub sat_frac_stability: f64,
    /// Receiver white-frequency coefficient h0 (s^2/s).
    pub rec_h0: f64,
    /// Receiver flicker-frequency coefficient h-1 (s^2/s^2).
    pub rec_h_minus_1: f64,
    /// Receiver random-walk coefficient h-2 (s^2/s^3).
    pub rec_h_minus_2: f64,
    /// Sampling time (s).
    pub sampling_time_s: f64,
}

impl Default for ClockModel {
    fn default() -> Self {
        ClockModel {
            sat_frac_stability: 2e-13,
            rec_h0: 1.3e-22,
            rec_h_minus_1: 2.3e-26,
            rec_h_minus_2: 3.3e-31,
            sampling_time_s: 1.0,
        }
    }
}

impl ClockModel {
    /// Receiver fractional-frequency deviation at the sampling time (s/s):
    /// sqrt(h0/(2 Ts) + 4 h-1 + (4/3) pi^2 Ts h-2).
    pub fn receiver_frac_stability(&self) -> f64 {
        let ts = self.sampling_time_s;
        (self.rec_h0 / (2.0 * ts)
            + 4.0 * self.rec_h_minus_1
            + 4.0 / 3.0 * std::f64::consts::PI.powi(2) * ts * self.rec_h_minus_2)
            .sqrt()
    }

    /// Satellite clock error in velocity units (km/s).
    pub fn sigma_clk_sat_kmps(&self, constants: &LunarConstants) -> f64 {
        constants.c * self.sat_frac_stability
    }

    /// Receiver clock error in velocity units (km/s).
    pub fn sigma_clk_rec_kmps(&self, constants: &LunarConstants) -> f64 {
        constants.c * self.receiver_frac_stability()
    }
}

/// Receive-chain and transmit parameters for the carrier-to-noise budget.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinkBudgetParams {
    /// Receiver antenna gain (dB).
    pub gain_rx_db: f64,
    /// System noise temperature (K).
    pub t_sys_k: f64,
    /// LNA noise figure (dB).
    pub nf_lna_db: f64,
    /// PLL bandwidth (Hz).
    pub b_pll_hz: f64,
    /// Coherent integration time (s).
    pub coherent_time_s: f64,
    /// Transmit EIRP (dBW).
    pub eirp_dbw: f64,
    /// Boltzmann constant (dBW/(K Hz)).
    pub boltzmann_dbw: f64,
}

impl Default for LinkBudgetParams {
    fn default() -> Self {
        LinkBudgetParams {
            gain_rx_db: 22.0,
            t_sys_k: 113.0,
            nf_lna_db: 1.0,
            b_pll_hz: 10.0,
            coherent_time_s: 0.02,
            eirp_dbw: 0.0,
            boltzmann_dbw: -228.6,
        }
    }
}

/// Carrier-to-noise density at `range_km` (dB-Hz): free-space path loss on an
/// omnidirectional link plus the receiver gain-to-temperature ratio.
pub fn cn0(link: &LinkBudgetParams, range_km: f64, constants: &LunarConstants) -> Result<f64> {
    if !(range_km > 0.0) {
        return Err(Error::invalid(format!("range must be > 0, got {range_km}")));
    }
    let fspl_db = 20.0
        * (4.0 * std::f64::consts::PI * constants.f0 * range_km / constants.c).log10();
    let p_r = link.eirp_dbw - fspl_db;
    let t_eq = 10.0 * (link.t_sys_k + 290.0 * (10f64.powf(link.nf_lna_db / 10.0) - 1.0)).log10();
    let g_t = link.gain_rx_db - t_eq;
    Ok(p_r + g_t - link.boltzmann_dbw)
}

/// Carrier-tracking noise in velocity units (km/s) from the PLL model, with
/// C/N0 converted to a linear ratio-Hz before entering the formula.
pub fn sigma_meas(link: &LinkBudgetParams, cn0_dbhz: f64, constants: &LunarConstants) -> f64 {
    let cn0_lin = 10f64.powf(cn0_dbhz / 10.0);
    constants.c / (std::f64::consts::TAU * constants.f0 * link.coherent_time_s)
        * (link.b_pll_hz / cn0_lin).sqrt()
        * (1.0 + 1.0 / (2.0 * link.coherent_time_s * cn0_lin))
}

/// On/off switches for the four error sources.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ErrorBudgetConfig {
    pub ephemeris: bool,
    pub satellite_clock: bool,
    pub receiver_clock: bool,
    pub carrier_tracking: bool,
}

impl ErrorBudgetConfig {
    pub fn all_on() -> Self {
        ErrorBudgetConfig { ephemeris: true, satellite_clock: true, receiver_clock: true, carrier_tracking: true }
    }

    pub fn all_off() -> Self {
        ErrorBudgetConfig { ephemeris: false, satellite_clock: false, receiver_clock: false, carrier_tracking: false }
    }
}

impl Default for ErrorBudgetConfig {
    fn default() -> Self {
        ErrorBudgetConfig::all_on()
    }
}

/// Root-sum-square of the four error components (km/s each).
pub fn sigma_tot(components: &[f64; 4]) -> Result<f64> {
    if components.iter().any(|&c| !(c >= 0.0)) {
        return Err(Error::invalid(format!("negative error component in {components:?}")));
    }
    Ok(components.iter().map(|c| c * c).sum::<f64>().sqrt())
}

/// One timestamped Doppler measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopplerObservation {
    /// Receive time.
    pub t_r: Epoch,
    /// Measured carrier Doppler shift (Hz).
    pub doppler_hz: f64,
    /// Carrier-to-noise density at this sample (dB-Hz).
    pub cn0_dbhz: f64,
    /// Total per-sample error (km/s).
    pub sigma_tot_kmps: f64,
    /// Pass the sample belongs to.
    pub pass_id: u32,
}

/// Light-time-solved geometry between receiver and satellite at `t_r`.
#[derive(Debug, Clone, Copy)]
pub struct LosGeometry {
    /// Converged propagation delay (s).
    pub delay_s: f64,
    /// Fixed-point iterations used.
    pub iterations: usize,
    /// Satellite position at emission, uncorrected (km).
    pub sat_pos_raw: Vector3<f64>,
    /// Satellite velocity at emission, uncorrected (km/s).
    pub sat_vel_raw: Vector3<f64>,
    /// Rotation-corrected satellite position A(omega dt) r_s (km).
    pub sat_pos: Vector3<f64>,
    /// Rotation-corrected satellite velocity A(omega dt) v_s (km/s).
    pub sat_vel: Vector3<f64>,
    /// Receiver-minus-satellite vector r - A r_s (km).
    pub r_sr: Vector3<f64>,
    /// Geometric range (km).
    pub range_km: f64,
    /// Unit line of sight from satellite to receiver.
    pub unit_los: Vector3<f64>,
}

/// Solve the implicit light-time equation
/// `dt = |r - A(omega dt) r_s(t_r - d_r - dt)| / c` by fixed-point iteration
/// from `dt = 0`.
pub fn los_geometry<S: SatelliteSource>(
    receiver: &Vector3<f64>,
    t_r: Epoch,
    source: &S,
    clocks: ClockBiases,
    constants: &LunarConstants,
) -> Result<LosGeometry> {
    let mut delay = 0.0f64;
    for iteration in 0..LIGHT_TIME_MAX_ITER {
        let t_e = t_r.offset(-clocks.receiver_s - delay);
        let (s_raw, v_raw) = source.state_at(t_e)?;
        let rot = rotation_z_compensating(constants.omega_m * delay);
        let sat_pos = rot * s_raw;
        let r_sr = receiver - sat_pos;
        let range = r_sr.norm();
        let new_delay = range / constants.c;
        if (new_delay - delay).abs() < LIGHT_TIME_TOL_S {
            let unit_los = if range > 0.0 { r_sr / range } else { Vector3::zeros() };
            return Ok(LosGeometry {
                delay_s: new_delay,
                iterations: iteration + 1,
                sat_pos_raw: s_raw,
                sat_vel_raw: v_raw,
                sat_pos,
                sat_vel: rot * v_raw,
                r_sr,
                range_km: range,
                unit_los,
            });
        }
        delay = new_delay;
    }
    Err(Error::LightTimeNonConvergence(LIGHT_TIME_MAX_ITER))
}

/// Propagation delay (s) between `receiver` and the satellite at `t_r`.
pub fn propagation_delay<S: SatelliteSource>(
    receiver: &Vector3<f64>,
    t_r: Epoch,
    source: &S,
    clocks: ClockBiases,
    constants: &LunarConstants,
) -> Result<f64> {
    Ok(los_geometry(receiver, t_r, source, clocks, constants)?.delay_s)
}

/// Accumulated delta range (km): rotation-corrected geometric range plus the
/// clock-bias term c (d_r - d_s).
pub fn accumulated_delta_range<S: SatelliteSource>(
    receiver: &Vector3<f64>,
    t_r: Epoch,
    source: &S,
    clocks: ClockBiases,
    constants: &LunarConstants,
) -> Result<f64> {
    let geom = los_geometry(receiver, t_r, source, clocks, constants)?;
    Ok(geom.range_km + constants.c * (clocks.receiver_s - clocks.satellite_s))
}

/// Five-point central difference `(f(t-2h) - 8f(t-h) + 8f(t+h) - f(t+2h)) / (12h)`.
///
/// Exact through degree four; the truncation error is O(h^4 f^(5)).
pub fn five_point_derivative<F>(f: F, t: Epoch, dt: f64) -> Result<f64>
where
    F: Fn(Epoch) -> Result<f64>,
{
    let fm2 = f(t.offset(-2.0 * dt))?;
    let fm1 = f(t.offset(-dt))?;
    let fp1 = f(t.offset(dt))?;
    let fp2 = f(t.offset(2.0 * dt))?;
    Ok((fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * dt))
}

/// Time derivative of the accumulated delta range (km/s), five-point stencil
/// at [`STENCIL_DT_S`]. This is the solver's forward model for `-lambda0 D`.
pub fn adr_rate<S: SatelliteSource>(
    receiver: &Vector3<f64>,
    t_r: Epoch,
    source: &S,
    clocks: ClockBiases,
    constants: &LunarConstants,
) -> Result<f64> {
    adr_rate_with_dt(receiver, t_r, source, clocks, constants, STENCIL_DT_S)
}

/// [`adr_rate`] with an explicit stencil spacing (convergence studies).
pub fn adr_rate_with_dt<S: SatelliteSource>(
    receiver: &Vector3<f64>,
    t_r: Epoch,
    source: &S,
    clocks: ClockBiases,
    constants: &LunarConstants,
    dt: f64,
) -> Result<f64> {
    five_point_derivative(
        |t| accumulated_delta_range(receiver, t, source, clocks, constants),
        t_r,
        dt,
    )
}

/// Closed-form range rate (km/s): the implicit derivative of the light-time
/// equation. With u the line-of-sight satellite speed and w the rotation-rate
/// term, `drho/dt = -u / (1 + (w - u)/c)`.
pub fn range_rate_analytic<S: SatelliteSource>(
    receiver: &Vector3<f64>,
    t_r: Epoch,
    source: &S,
    clocks: ClockBiases,
    constants: &LunarConstants,
) -> Result<f64> {
    let geom = los_geometry(receiver, t_r, source, clocks, constants)?;
    Ok(range_rate_from_geometry(&geom, constants))
}

/// Range rate from an already-solved geometry.
pub fn range_rate_from_geometry(geom: &LosGeometry, constants: &LunarConstants) -> f64 {
    let u = geom.unit_los.dot(&geom.sat_vel);
    let theta = constants.omega_m * geom.delay_s;
    let rot_rate = rotation_z_compensating_deriv(theta) * geom.sat_pos_raw * constants.omega_m;
    let w = geom.unit_los.dot(&rot_rate);
    -u / (1.0 + (w - u) / constants.c)
}

/// Per-sample clock drift draws (fractional frequency, dimensionless).
#[derive(Debug, Clone, Copy, Default)]
struct ClockDrifts {
    receiver: f64,
    satellite: f64,
}

/// Synthesize one noisy Doppler observation from truth geometry.
///
/// The deterministic part is the analytic range rate scaled by -1/lambda0;
/// clock drifts enter as -f0 (dd_r/dt - dd_s/dt); carrier tracking noise is
/// zero-mean Gaussian with the PLL sigma at the sample's C/N0. Sources can be
/// switched off individually through `budget`.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_doppler<S: SatelliteSource, R: Rng>(
    receiver: &Vector3<f64>,
    t_r: Epoch,
    truth: &S,
    clock_model: &ClockModel,
    link: &LinkBudgetParams,
    budget: &ErrorBudgetConfig,
    sigma_vel_kmps: f64,
    mask_rad: f64,
    pass_id: u32,
    constants: &LunarConstants,
    rng: &mut R,
) -> Result<DopplerObservation> {
    let mut state = PassSynthesizer::new(*receiver, clock_model, link, budget, sigma_vel_kmps, mask_rad, pass_id, *constants);
    state.observe(truth, t_r, rng)
}

/// Sequential per-pass synthesis: clock biases integrate across samples and
/// the per-axis ephemeris velocity-error series is consumed in call order.
pub struct PassSynthesizer {
    receiver: Vector3<f64>,
    clock_model: ClockModel,
    link: LinkBudgetParams,
    budget: ErrorBudgetConfig,
    sigma_vel_kmps: f64,
    mask_rad: f64,
    pass_id: u32,
    constants: LunarConstants,
    biases: ClockBiases,
    ephemeris_vel_noise_kmps: Vec<Vector3<f64>>,
    next_sample: usize,
}

impl PassSynthesizer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        receiver: Vector3<f64>,
        clock_model: &ClockModel,
        link: &LinkBudgetParams,
        budget: &ErrorBudgetConfig,
        sigma_vel_kmps: f64,
        mask_rad: f64,
        pass_id: u32,
        constants: LunarConstants,
    ) -> Self {
        PassSynthesizer {
            receiver,
            clock_model: *clock_model,
            link: *link,
            budget: *budget,
            sigma_vel_kmps,
            mask_rad,
            pass_id,
            constants,
            biases: ClockBiases::default(),
            ephemeris_vel_noise_kmps: Vec::new(),
            next_sample: 0,
        }
    }

    /// Attach the per-pass ephemeris velocity-error realization: one 3-axis
    /// sample per observation, consumed in call order and projected on the
    /// line of sight. Samples beyond the series length fall back to zero.
    pub fn with_ephemeris_noise(mut self, series_kmps: Vec<Vector3<f64>>) -> Self {
        self.ephemeris_vel_noise_kmps = series_kmps;
        self
    }

    fn draw_drifts<R: Rng>(&mut self, rng: &mut R) -> ClockDrifts {
        let mut drifts = ClockDrifts::default();
        if self.budget.receiver_clock {
            let y: f64 = StandardNormal.sample(rng);
            drifts.receiver = y * self.clock_model.receiver_frac_stability();
            self.biases.receiver_s += drifts.receiver * self.clock_model.sampling_time_s;
        }
        if self.budget.satellite_clock {
            let y: f64 = StandardNormal.sample(rng);
            drifts.satellite = y * self.clock_model.sat_frac_stability;
            self.biases.satellite_s += drifts.satellite * self.clock_model.sampling_time_s;
        }
        drifts
    }

    /// Synthesize the observation at `t_r`, advancing the clock random walks.
    pub fn observe<S: SatelliteSource, R: Rng>(
        &mut self,
        truth: &S,
        t_r: Epoch,
        rng: &mut R,
    ) -> Result<DopplerObservation> {
        let k = self.constants;
        let k = &k;
        let (sat_now, _) = truth.state_at(t_r)?;
        let elevation = crate::orbit::elevation_angle(&self.receiver, &sat_now)?;
        if elevation <= self.mask_rad {
            return Err(Error::DegenerateGeometry(format!(
                "satellite below mask at t = {} s (elevation {:.2} deg)",
                t_r.as_secs(),
                elevation.to_degrees()
            )));
        }

        let drifts = self.draw_drifts(rng);
        let geom = los_geometry(&self.receiver, t_r, truth, self.biases, k)?;
        let rho_dot = range_rate_from_geometry(&geom, k);

        let cn0_dbhz = cn0(&self.link, geom.range_km, k)?;
        let sigma_meas_kmps = sigma_meas(&self.link, cn0_dbhz, k);

        let mut doppler = -rho_dot / k.lambda0 - k.f0 * (drifts.receiver - drifts.satellite);
        if self.budget.ephemeris {
            let vel_err = self
                .ephemeris_vel_noise_kmps
                .get(self.next_sample)
                .map(|v| geom.unit_los.dot(v))
                .unwrap_or(0.0);
            doppler += vel_err / k.lambda0;
        }
        self.next_sample += 1;
        if self.budget.carrier_tracking {
            let y: f64 = StandardNormal.sample(rng);
            doppler += y * sigma_meas_kmps / k.lambda0;
        }
        debug_assert!(doppler.abs() <= k.f0 * 3.0 / k.c, "Doppler {doppler} Hz beyond LLO bound");

        let components = [
            if self.budget.ephemeris { self.sigma_vel_kmps } else { 0.0 },
            if self.budget.satellite_clock { self.clock_model.sigma_clk_sat_kmps(k) } else { 0.0 },
            if self.budget.receiver_clock { self.clock_model.sigma_clk_rec_kmps(k) } else { 0.0 },
            if self.budget.carrier_tracking { sigma_meas_kmps } else { 0.0 },
        ];
        let sigma = sigma_tot(&components)?.max(SIGMA_TOT_FLOOR_KMPS);

        Ok(DopplerObservation {
            t_r,
            doppler_hz: doppler,
            cn0_dbhz,
            sigma_tot_kmps: sigma,
            pass_id: self.pass_id,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::{find_passes, truth_series};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn lc() -> LunarConstants {
        LunarConstants::default()
    }

    fn truth() -> TruthOrbit {
        TruthOrbit { elements: KeplerianElements::proposed_llo(), constants: lc() }
    }

    /// Satellite pinned at a fixed Moon-fixed state.
    struct StaticSource {
        pos: Vector3<f64>,
        vel: Vector3<f64>,
    }

    impl SatelliteSource for StaticSource {
        fn state_at(&self, _t: Epoch) -> Result<(Vector3<f64>, Vector3<f64>)> {
            Ok((self.pos, self.vel))
        }
    }

    #[test]
    fn propagation_delay_at_120_km() {
        let k = lc();
        let receiver = Vector3::new(0.0, 0.0, k.r_m);
        let src = StaticSource { pos: Vector3::new(0.0, 0.0, k.r_m + 120.0), vel: Vector3::zeros() };
        let d = propagation_delay(&receiver, Epoch(0.0), &src, ClockBiases::default(), &k).unwrap();
        assert!((d - 120.0 / 299_792.458).abs() < 1e-10, "delay {d}");
    }

    #[test]
    fn propagation_delay_zero_range() {
        let k = lc();
        let p = Vector3::new(0.0, 0.0, k.r_m + 50.0);
        let src = StaticSource { pos: p, vel: Vector3::zeros() };
        let d = propagation_delay(&p, Epoch(0.0), &src, ClockBiases::default(), &k).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn light_time_converges_fast_for_lunar_ranges() {
        let k = lc();
        let t = truth();
        let receiver = k.surface_point(80f64.to_radians(), 10f64.to_radians(), 0.0).unwrap();
        let mut checked = 0;
        for step in 0..40 {
            let t_r = Epoch(step as f64 * 180.0);
            let geom = los_geometry(&receiver, t_r, &t, ClockBiases::default(), &k).unwrap();
            if geom.range_km < 3000.0 {
                assert!(geom.iterations <= 3, "iterations {} at {:?}", geom.iterations, t_r);
                checked += 1;
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn adr_clock_bias_term_is_exact() {
        let k = lc();
        let t = truth();
        let receiver = k.surface_point(85f64.to_radians(), 0.0, 0.0).unwrap();
        let biases = ClockBiases { receiver_s: 1e-6, satellite_s: 0.0 };
        let geom = los_geometry(&receiver, Epoch(100.0), &t, biases, &k).unwrap();
        let adr = accumulated_delta_range(&receiver, Epoch(100.0), &t, biases, &k).unwrap();
        // adr = range + c * 1e-6 s = range + 0.299792458 km, up to one
        // rounding of the ~1e2 km sum.
        assert!((adr - geom.range_km - 0.299_792_458).abs() < 1e-12);
    }

    #[test]
    fn adr_zero_for_coincident_geometry() {
        let k = lc();
        let p = Vector3::new(500.0, 600.0, 1800.0);
        let src = StaticSource { pos: p, vel: Vector3::zeros() };
        let adr = accumulated_delta_range(&p, Epoch(0.0), &src, ClockBiases::default(), &k).unwrap();
        assert_eq!(adr, 0.0);
    }

    #[test]
    fn adr_matches_brute_force_light_time_root() {
        // Independent oracle: bisect g(d) = d - |r - A(w d) r_s(t - d)|/c.
        let k = lc();
        let t = truth();
        let receiver = k.surface_point(80f64.to_radians(), 30f64.to_radians(), 0.0).unwrap();
        for t_r in [50.0, 500.0, 3000.0] {
            let g = |d: f64| -> f64 {
                let (s, _) = t.state_at(Epoch(t_r - d)).unwrap();
                let rot = rotation_z_compensating(k.omega_m * d);
                d - (receiver - rot * s).norm() / k.c
            };
            let (mut lo, mut hi) = (0.0f64, 0.05f64);
            assert!(g(lo) <= 0.0 && g(hi) > 0.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid) <= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let d_oracle = 0.5 * (lo + hi);
            let range_oracle = d_oracle * k.c;
            let adr =
                accumulated_delta_range(&receiver, Epoch(t_r), &t, ClockBiases::default(), &k).unwrap();
            assert!((adr - range_oracle).abs() < 1e-9, "t_r {t_r}: {adr} vs {range_oracle}");
        }
    }

    #[test]
    fn stencil_is_exact_through_degree_four() {
        let quartic = |t: Epoch| Ok(t.as_secs().powi(4));
        for t in [-2.0, 0.3, 5.0] {
            let d = five_point_derivative(quartic, Epoch(t), 0.1).unwrap();
            assert!((d - 4.0 * t.powi(3)).abs() < 1e-9, "t {t}: {d}");
        }
        let constant = |_: Epoch| Ok(42.0);
        assert!(five_point_derivative(constant, Epoch(1.0), 0.1).unwrap().abs() < 1e-12);
    }

    #[test]
    fn adr_rate_matches_analytic_range_rate() {
        let k = lc();
        let t = truth();
        let receiver = k.surface_point(82f64.to_radians(), 15f64.to_radians(), 0.0).unwrap();
        let clocks = ClockBiases::default();
        for t_r in [60.0, 200.0, 350.0, 600.0] {
            let numeric = adr_rate(&receiver, Epoch(t_r), &t, clocks, &k).unwrap();
            let analytic = range_rate_analytic(&receiver, Epoch(t_r), &t, clocks, &k).unwrap();
            assert!((numeric - analytic).abs() < 1e-7, "t_r {t_r}: {numeric} vs {analytic}");
        }
    }

    #[test]
    fn adr_rate_converges_at_fourth_order() {
        let k = lc();
        let t = truth();
        let receiver = k.surface_point(85f64.to_radians(), 5f64.to_radians(), 0.0).unwrap();
        let clocks = ClockBiases::default();
        let t_r = Epoch(120.0);
        let exact = range_rate_analytic(&receiver, t_r, &t, clocks, &k).unwrap();
        let spacings = [12.8, 6.4, 3.2, 1.6];
        let errors: Vec<f64> = spacings
            .iter()
            .map(|&h| (adr_rate_with_dt(&receiver, t_r, &t, clocks, &k, h).unwrap() - exact).abs())
            .collect();
        for w in errors.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((slope - 4.0).abs() <= 0.3, "slope {slope}, errors {errors:?}");
        }
    }

    fn first_pass_times(k: &LunarConstants, receiver: &Vector3<f64>) -> Vec<Epoch> {
        let el = KeplerianElements::proposed_llo();
        let series = truth_series(&el, k, Epoch(0.0), Epoch(14_400.0), 1.0).unwrap();
        let passes = find_passes(&series, receiver, 5f64.to_radians()).unwrap();
        // First full pass: skip runs truncated by the series boundary.
        let p = passes
            .iter()
            .find(|p| p.samples.start > 0 && p.samples.end < series.len() && p.samples.len() > 300)
            .expect("full pass");
        series.times[p.samples.clone()].to_vec()
    }

    #[test]
    fn noiseless_doppler_matches_adr_rate_everywhere() {
        // The core consistency contract: -lambda0 D == d(ADR)/dt at truth.
        let k = lc();
        let t = truth();
        let receiver = k.surface_point(85f64.to_radians(), 20f64.to_radians(), 0.0).unwrap();
        let times = first_pass_times(&k, &receiver);
        let budget = ErrorBudgetConfig::all_off();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut synth = PassSynthesizer::new(
            receiver,
            &ClockModel::default(),
            &LinkBudgetParams::default(),
            &budget,
            0.0,
            5f64.to_radians(),
            0,
            k,
        );
        let mut worst = 0.0f64;
        for &tr in times.iter().step_by(20) {
            let obs = synth.observe(&t, tr, &mut rng).unwrap();
            let model = adr_rate(&receiver, tr, &t, ClockBiases::default(), &k).unwrap();
            worst = worst.max((-k.lambda0 * obs.doppler_hz - model).abs());
        }
        assert!(worst < 1e-6, "worst |{worst}| km/s");
    }

    #[test]
    fn doppler_crosses_zero_at_closest_approach() {
        let k = lc();
        let t = truth();
        let receiver = k.surface_point(88f64.to_radians(), 0.0, 0.0).unwrap();
        let times = first_pass_times(&k, &receiver);
        let budget = ErrorBudgetConfig::all_off();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut synth = PassSynthesizer::new(
            receiver, &ClockModel::default(), &LinkBudgetParams::default(), &budget, 0.0,
            5f64.to_radians(), 0, k,
        );
        let mut min_range = f64::MAX;
        let mut doppler_at_min = f64::NAN;
        let mut max_abs = 0.0f64;
        let mut prev_sign = None;
        let mut crossed = false;
        for &tr in &times {
            let obs = synth.observe(&t, tr, &mut rng).unwrap();
            let geom = los_geometry(&receiver, tr, &t, ClockBiases::default(), &k).unwrap();
            if geom.range_km < min_range {
                min_range = geom.range_km;
                doppler_at_min = obs.doppler_hz;
            }
            max_abs = max_abs.max(obs.doppler_hz.abs());
            let sign = obs.doppler_hz > 0.0;
            if let Some(p) = prev_sign {
                if p != sign {
                    crossed = true;
                }
            }
            prev_sign = Some(sign);
        }
        assert!(crossed, "no Doppler sign change over the pass");
        // At 1 Hz cadence the sample nearest the PCA sits within ~0.5 s of the
        // zero crossing; the Doppler slope there is a few tens of Hz/s.
        assert!(doppler_at_min.abs() < 60.0, "Doppler at PCA {doppler_at_min} Hz");
        // Peak geometric Doppler is (f0/c) * line-of-sight speed, ~10.9 kHz at
        // the ~1.6 km/s LLO relative speed; masked geometry sees most of it.
        assert!((8_000.0..11_500.0).contains(&max_abs), "max |D| {max_abs} Hz");
    }

    #[test]
    fn synthesis_is_reproducible_and_rejects_below_mask() {
        let k = lc();
        let t = truth();
        let receiver = k.surface_point(85f64.to_radians(), 0.0, 0.0).unwrap();
        let times = first_pass_times(&k, &receiver);
        let make = |seed| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut synth = PassSynthesizer::new(
                receiver, &ClockModel::default(), &LinkBudgetParams::default(),
                &ErrorBudgetConfig::all_on(), 60e-6, 5f64.to_radians(), 0, k,
            );
            times.iter().step_by(30).map(|&tr| synth.observe(&t, tr, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(make(7), make(7));
        // A time far outside any pass over the receiver: satellite below mask.
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut synth = PassSynthesizer::new(
            receiver, &ClockModel::default(), &LinkBudgetParams::default(),
            &ErrorBudgetConfig::all_on(), 60e-6, 5f64.to_radians(), 0, k,
        );
        let below = Epoch(times[0].as_secs() - 1500.0);
        assert!(synth.observe(&t, below, &mut rng).is_err());
    }

    #[test]
    fn cn0_inverse_square_law() {
        let k = lc();
        let link = LinkBudgetParams::default();
        let a = cn0(&link, 120.0, &k).unwrap();
        let b = cn0(&link, 240.0, &k).unwrap();
        assert!((a - b - 6.020_599_913_279_624).abs() < 1e-9, "delta {}", a - b);
        assert!(cn0(&link, 0.0, &k).is_err());
    }

    #[test]
    fn sigma_meas_matches_hand_evaluated_chain() {
        // Independent spreadsheet-style evaluation of the printed chain at
        // the default link budget and 120 km range.
        let k = lc();
        let link = LinkBudgetParams::default();
        let fspl = 20.0 * (4.0 * std::f64::consts::PI * 2050.0e6 * 120.0 / 299_792.458).log10();
        let p_r = 0.0 - fspl;
        let t_eq = 10.0 * (113.0 + 290.0 * (10f64.powf(0.1) - 1.0)).log10();
        let g_t = 22.0 - t_eq;
        let cn0_db = p_r + g_t + 228.6;
        let cn0_lin = 10f64.powf(cn0_db / 10.0);
        let expected = 299_792.458 / (std::f64::consts::TAU * 2050.0e6 * 0.02)
            * (10.0 / cn0_lin).sqrt()
            * (1.0 + 1.0 / (2.0 * 0.02 * cn0_lin));
        let got = sigma_meas(&link, cn0(&link, 120.0, &k).unwrap(), &k);
        assert!(((got - expected) / expected).abs() < 1e-12);
        // Magnitude sanity: sub-mm/s carrier tracking noise at 120 km.
        assert!((1e-8..1e-6).contains(&got), "sigma_meas {got} km/s");
    }

    #[test]
    fn sigma_meas_decreases_with_cn0() {
        let k = lc();
        let link = LinkBudgetParams::default();
        let mut prev = f64::MAX;
        for cn0_db in [40.0, 50.0, 60.0, 70.0, 80.0, 90.0] {
            let s = sigma_meas(&link, cn0_db, &k);
            assert!(s < prev);
            prev = s;
        }
    }

    #[test]
    fn satellite_clock_sigma_matches_stated_value() {
        let k = lc();
        let m = ClockModel::default();
        let sigma_mps = m.sigma_clk_sat_kmps(&k) * 1e3;
        assert!((sigma_mps - 6.0e-5).abs() / 6.0e-5 < 0.01, "{sigma_mps} m/s");
    }

    #[test]
    fn receiver_clock_stability_matches_quoted_rubidium() {
        // h-coefficients at Ts = 1 s reproduce the ~8e-12 s/s stability.
        let m = ClockModel::default();
        let s = m.receiver_frac_stability();
        assert!((s - 8e-12).abs() / 8e-12 < 0.02, "{s}");
    }

    #[test]
    fn sigma_tot_edge_cases() {
        assert_eq!(sigma_tot(&[0.0; 4]).unwrap(), 0.0);
        assert_eq!(sigma_tot(&[0.0, 3.0, 0.0, 4.0]).unwrap(), 5.0);
        assert_eq!(sigma_tot(&[7.0, 0.0, 0.0, 0.0]).unwrap(), 7.0);
        assert!(sigma_tot(&[-1.0, 0.0, 0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn sigma_tot_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, d in 0.0f64..1.0, bump in 0.0f64..1.0) {
            let base = sigma_tot(&[a, b, c, d]).unwrap();
            let bigger = sigma_tot(&[a + bump, b, c, d]).unwrap();
            prop_assert!(bigger >= base);
        }
    }
}
