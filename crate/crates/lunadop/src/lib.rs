//! Single-satellite Doppler geolocation for a stationary receiver near the
//! lunar North Pole.
//!
//! A low lunar orbiter broadcasts a carrier; a surface receiver measures the
//! Doppler shift profile over one or more passes and recovers its own 3D
//! position with a three-step nonlinear least-squares pipeline. This crate
//! contains both sides of that loop plus the analysis machinery:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`frames`] | Lunar constants, epochs, Moon-fixed rotating-frame corrections |
//! | [`orbit`] | Two-body truth propagation, elevation masks, visibility passes |
//! | [`ephemeris`] | Colored-noise orbit corruption, per-pass Chebyshev fits |
//! | [`measurement`] | Doppler synthesis, accumulated delta range, link budget, error model |
//! | [`solver`] | Algebraic init, constrained + weighted Gauss-Newton, line searches, mirror handling |
//! | [`dop`] | Geometric dilution of precision and polar GDOP maps |
//! | [`montecarlo`] | Seeded trial orchestration, summaries, error-budget attribution |
//! | [`scenario`] | Scenario configuration (TOML) and validation |
//! | [`formats`] | Versioned CSV/JSON file formats shared with the CLI |

pub mod dop;
pub mod ephemeris;
pub mod error;
pub mod formats;
pub mod frames;
pub mod measurement;
pub mod montecarlo;
pub mod orbit;
pub mod scenario;
pub mod solver;

pub use error::Error;
pub use frames::{Epoch, LunarConstants};
pub use orbit::{KeplerianElements, PassWindow, SatelliteStateSeries};

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;
