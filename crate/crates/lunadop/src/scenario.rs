//! Scenario configuration file: a TOML document with every knob optional.
//!
//! Unknown keys are rejected, physical values are range-checked when the
//! document is resolved into a [`Scenario`], and angles/thresholds use
//! degrees and meters at this boundary only.

use serde::{Deserialize, Serialize};

use crate::ephemeris::EphemerisMethod;
use crate::error::Error;
use crate::frames::{LunarConstants, SECONDS_PER_DAY};
use crate::measurement::{ClockModel, ErrorBudgetConfig, LinkBudgetParams};
use crate::montecarlo::Scenario;
use crate::orbit::KeplerianElements;
use crate::solver::{ArmijoParams, SoftLineSearchParams, SolverConfig};
use crate::Result;

pub const CONFIG_SCHEMA: &str = "lunadop/config/v1";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Format tag; must be [`CONFIG_SCHEMA`] when present.
    pub schema: Option<String>,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub errors: ErrorsSection,
    #[serde(default)]
    pub constants: ConstantsSection,
    #[serde(default)]
    pub orbit: OrbitSection,
    #[serde(default)]
    pub clock: ClockSection,
    #[serde(default)]
    pub link: LinkSection,
    #[serde(default)]
    pub solver: SolverSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub seed: u64,
    pub trials: usize,
    pub passes: usize,
    /// "method1" | "method2" | "perfect" (or "1" | "2").
    pub ephemeris: String,
    pub mask_deg: f64,
    pub receiver: ReceiverSection,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            seed: 1,
            trials: 100,
            passes: 1,
            ephemeris: "method1".into(),
            mask_deg: 5.0,
            receiver: ReceiverSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReceiverSection {
    pub lat_deg: [f64; 2],
    pub lon_deg: [f64; 2],
    pub alt_km: [f64; 2],
}

impl Default for ReceiverSection {
    fn default() -> Self {
        ReceiverSection { lat_deg: [70.0, 90.0], lon_deg: [0.0, 360.0], alt_km: [-10.0, 10.0] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorsSection {
    pub ephemeris: bool,
    pub satellite_clock: bool,
    pub receiver_clock: bool,
    pub carrier_tracking: bool,
}

impl Default for ErrorsSection {
    fn default() -> Self {
        ErrorsSection { ephemeris: true, satellite_clock: true, receiver_clock: true, carrier_tracking: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsSection {
    pub c_kmps: f64,
    pub r_moon_km: f64,
    pub f0_hz: f64,
    pub mu_moon_km3ps2: f64,
    pub sidereal_month_days: f64,
}

impl Default for ConstantsSection {
    fn default() -> Self {
        ConstantsSection {
            c_kmps: 299_792.458,
            r_moon_km: 1737.4,
            f0_hz: 2050.0e6,
            mu_moon_km3ps2: 4902.800066,
            sidereal_month_days: 27.321661,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrbitSection {
    pub a_km: f64,
    pub e: f64,
    pub i_deg: f64,
    pub omega_deg: f64,
    pub raan_deg: f64,
    pub m0_deg: f64,
}

impl Default for OrbitSection {
    fn default() -> Self {
        OrbitSection { a_km: 1860.52, e: 0.035_945_7, i_deg: 90.0, omega_deg: 270.0, raan_deg: 0.0, m0_deg: 180.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClockSection {
    pub sat_frac_stability: f64,
    pub rec_h0: f64,
    pub rec_h_minus_1: f64,
    pub rec_h_minus_2: f64,
    pub sampling_time_s: f64,
}

impl Default for ClockSection {
    fn default() -> Self {
        let m = ClockModel::default();
        ClockSection {
            sat_frac_stability: m.sat_frac_stability,
            rec_h0: m.rec_h0,
            rec_h_minus_1: m.rec_h_minus_1,
            rec_h_minus_2: m.rec_h_minus_2,
            sampling_time_s: m.sampling_time_s,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    pub gain_rx_db: f64,
    pub t_sys_k: f64,
    pub nf_lna_db: f64,
    pub b_pll_hz: f64,
    pub coherent_time_s: f64,
    pub eirp_dbw: f64,
    pub boltzmann_dbw: f64,
}

impl Default for LinkSection {
    fn default() -> Self {
        let l = LinkBudgetParams::default();
        LinkSection {
            gain_rx_db: l.gain_rx_db,
            t_sys_k: l.t_sys_k,
            nf_lna_db: l.nf_lna_db,
            b_pll_hz: l.b_pll_hz,
            coherent_time_s: l.coherent_time_s,
            eirp_dbw: l.eirp_dbw,
            boltzmann_dbw: l.boltzmann_dbw,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub step2_threshold_m: f64,
    pub step3_threshold_m: f64,
    pub max_iterations: usize,
    pub armijo_alpha: f64,
    pub armijo_epsilon0: f64,
    pub armijo_beta: f64,
    pub sls_alpha_max: f64,
    pub sls_k_max: usize,
    pub sls_beta_curvature: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            step2_threshold_m: 1.0,
            step3_threshold_m: 0.01,
            max_iterations: 100,
            armijo_alpha: 0.1,
            armijo_epsilon0: 1.0,
            armijo_beta: 0.5,
            sls_alpha_max: 10.0,
            sls_k_max: 100,
            sls_beta_curvature: 0.99,
        }
    }
}

/// Parse an ephemeris method name ("method1"/"1", "method2"/"2", "perfect").
pub fn parse_method(name: &str) -> Result<EphemerisMethod> {
    match name.to_ascii_lowercase().as_str() {
        "method1" | "1" => Ok(EphemerisMethod::Method1),
        "method2" | "2" => Ok(EphemerisMethod::Method2),
        "perfect" => Ok(EphemerisMethod::Perfect),
        other => Err(Error::Config(format!("unknown ephemeris method {other:?}"))),
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(schema) = &config.schema {
            if schema != CONFIG_SCHEMA {
                return Err(Error::Config(format!(
                    "unsupported config schema {schema:?}, expected {CONFIG_SCHEMA:?}"
                )));
            }
        }
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Resolve into a validated runtime scenario.
    pub fn to_scenario(&self) -> Result<Scenario> {
        let c = &self.constants;
        for (name, v) in [
            ("c_kmps", c.c_kmps),
            ("r_moon_km", c.r_moon_km),
            ("f0_hz", c.f0_hz),
            ("mu_moon_km3ps2", c.mu_moon_km3ps2),
            ("sidereal_month_days", c.sidereal_month_days),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("constants.{name} must be positive, got {v}")));
            }
        }
        let omega_m = std::f64::consts::TAU / (c.sidereal_month_days * SECONDS_PER_DAY);
        let constants = LunarConstants::new(c.c_kmps, c.r_moon_km, c.f0_hz, omega_m, c.mu_moon_km3ps2)?;

        let o = &self.orbit;
        let elements = KeplerianElements {
            a: o.a_km,
            e: o.e,
            i: o.i_deg.to_radians(),
            omega: o.omega_deg.to_radians(),
            raan: o.raan_deg.to_radians(),
            m0: o.m0_deg.to_radians(),
        };
        elements.validate(&constants)?;

        let cl = &self.clock;
        for (name, v) in [
            ("sat_frac_stability", cl.sat_frac_stability),
            ("rec_h0", cl.rec_h0),
            ("rec_h_minus_1", cl.rec_h_minus_1),
            ("rec_h_minus_2", cl.rec_h_minus_2),
            ("sampling_time_s", cl.sampling_time_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("clock.{name} must be positive, got {v}")));
            }
        }
        let clock_model = ClockModel {
            sat_frac_stability: cl.sat_frac_stability,
            rec_h0: cl.rec_h0,
            rec_h_minus_1: cl.rec_h_minus_1,
            rec_h_minus_2: cl.rec_h_minus_2,
            sampling_time_s: cl.sampling_time_s,
        };

        let l = &self.link;
        if !(l.b_pll_hz > 0.0 && l.coherent_time_s > 0.0 && l.t_sys_k > 0.0) {
            return Err(Error::Config("link bandwidth, integration time and noise temperature must be positive".into()));
        }
        let link = LinkBudgetParams {
            gain_rx_db: l.gain_rx_db,
            t_sys_k: l.t_sys_k,
            nf_lna_db: l.nf_lna_db,
            b_pll_hz: l.b_pll_hz,
            coherent_time_s: l.coherent_time_s,
            eirp_dbw: l.eirp_dbw,
            boltzmann_dbw: l.boltzmann_dbw,
        };

        let s = &self.solver;
        if !(s.step2_threshold_m > 0.0 && s.step3_threshold_m > 0.0) {
            return Err(Error::Config("solver thresholds must be positive".into()));
        }
        if !((0.0..1.0).contains(&s.armijo_alpha) && (0.0..1.0).contains(&s.armijo_beta)) {
            return Err(Error::Config("armijo alpha and beta must be in (0, 1)".into()));
        }
        if !((0.0..1.0).contains(&s.sls_beta_curvature) && s.sls_alpha_max > 0.0) {
            return Err(Error::Config("soft line search parameters out of range".into()));
        }
        let solver = SolverConfig {
            step2_threshold_km: s.step2_threshold_m * 1e-3,
            step3_threshold_km: s.step3_threshold_m * 1e-3,
            max_iterations: s.max_iterations,
            armijo: ArmijoParams { alpha: s.armijo_alpha, epsilon0: s.armijo_epsilon0, beta: s.armijo_beta },
            sls: SoftLineSearchParams {
                alpha_max: s.sls_alpha_max,
                k_max: s.sls_k_max,
                beta_curvature: s.sls_beta_curvature,
            },
        };

        let sc = &self.scenario;
        let e = &self.errors;
        let scenario = Scenario {
            seed: sc.seed,
            n_trials: sc.trials,
            ephemeris_method: parse_method(&sc.ephemeris)?,
            n_passes: sc.passes,
            receiver_lat_deg: (sc.receiver.lat_deg[0], sc.receiver.lat_deg[1]),
            receiver_lon_deg: (sc.receiver.lon_deg[0], sc.receiver.lon_deg[1]),
            receiver_alt_km: (sc.receiver.alt_km[0], sc.receiver.alt_km[1]),
            mask_rad: sc.mask_deg.to_radians(),
            error_budget: ErrorBudgetConfig {
                ephemeris: e.ephemeris,
                satellite_clock: e.satellite_clock,
                receiver_clock: e.receiver_clock,
                carrier_tracking: e.carrier_tracking,
            },
            constants,
            elements,
            clock_model,
            link,
            solver,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// FNV-1a hash of the resolved scenario, used to key outputs.
pub fn scenario_hash(scenario: &Scenario) -> u64 {
    let canonical = serde_json::to_string(scenario).expect("scenario serializes");
    let mut h: u64 = 0xcbf29ce484222325;
    for b in canonical.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
