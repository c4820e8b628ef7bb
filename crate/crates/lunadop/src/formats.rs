//! Versioned on-disk formats shared by the CLI, tests and external tools.
//!
//! CSV files carry a `# schema` comment line before the column header; JSON
//! documents carry a `schema` field. Floats are written in shortest
//! round-trip form, so rereading reproduces the exact values and reruns with
//! the same seed produce byte-identical files. All writes go through a
//! temp-file-plus-rename so readers never observe partial output.
//!
//! | File | Schema | Producer |
//! |------|--------|----------|
//! | observations CSV | `lunadop/observations/v1` | simulate |
//! | ephemeris JSON | `lunadop/ephemeris/v1` | simulate |
//! | truth series CSV | `lunadop/truth/v1` | simulate (optional) |
//! | solution JSON | `lunadop/solution/v1` | solve |
//! | results CSV | `lunadop/results/v1` | montecarlo |
//! | summary JSON | `lunadop/summary/v1` | montecarlo |
//! | GDOP CSV | `lunadop/gdop/v1` | gdop |
//! | manifest JSON | `lunadop/manifest/v1` | simulate |

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dop::GdopGrid;
use crate::ephemeris::{ChebyshevEphemeris, CHEBYSHEV_ORDER};
use crate::error::Error;
use crate::frames::Epoch;
use crate::measurement::DopplerObservation;
use crate::montecarlo::{Summary, TrialResult};
use crate::orbit::SatelliteStateSeries;
use crate::solver::{PassData, SolverEstimate};
use crate::Result;

pub const OBSERVATIONS_SCHEMA: &str = "lunadop/observations/v1";
pub const EPHEMERIS_SCHEMA: &str = "lunadop/ephemeris/v1";
pub const TRUTH_SCHEMA: &str = "lunadop/truth/v1";
pub const SOLUTION_SCHEMA: &str = "lunadop/solution/v1";
pub const RESULTS_SCHEMA: &str = "lunadop/results/v1";
pub const SUMMARY_SCHEMA: &str = "lunadop/summary/v1";
pub const GDOP_SCHEMA: &str = "lunadop/gdop/v1";
pub const MANIFEST_SCHEMA: &str = "lunadop/manifest/v1";

/// Write bytes atomically: temp file in the target directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

fn check_header(path: &Path, lines: &mut std::iter::Enumerate<std::str::Lines>, schema: &str, columns: &str) -> Result<()> {
    match lines.next() {
        Some((_, l)) if l.trim() == format!("# {schema}") => {}
        Some((i, l)) => return Err(parse_err(path, i + 1, format!("expected schema line '# {schema}', got {l:?}"))),
        None => return Err(parse_err(path, 1, "empty file")),
    }
    match lines.next() {
        Some((_, l)) if l.trim() == columns => Ok(()),
        Some((i, l)) => Err(parse_err(path, i + 1, format!("expected header {columns:?}, got {l:?}"))),
        None => Err(parse_err(path, 2, "missing column header")),
    }
}

// ---------------------------------------------------------------- observations

const OBS_COLUMNS: &str = "t_s,doppler_hz,cn0_dbhz,sigma_tot_kmps,pass_id";

pub fn observations_to_csv(observations: &[DopplerObservation]) -> String {
    let mut out = format!("# {OBSERVATIONS_SCHEMA}\n{OBS_COLUMNS}\n");
    for o in observations {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            o.t_r.as_secs(),
            o.doppler_hz,
            o.cn0_dbhz,
            o.sigma_tot_kmps,
            o.pass_id
        ));
    }
    out
}

pub fn write_observations_csv(path: &Path, observations: &[DopplerObservation]) -> Result<()> {
    atomic_write(path, observations_to_csv(observations).as_bytes())
}

pub fn read_observations_csv(path: &Path) -> Result<Vec<DopplerObservation>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    check_header(path, &mut lines, OBSERVATIONS_SCHEMA, OBS_COLUMNS)?;
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err(path, line_no, format!("expected 5 fields, got {}", fields.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| parse_err(path, line_no, format!("bad {what}: {e}")))
        };
        let obs = DopplerObservation {
            t_r: Epoch(num(fields[0], "t_s")?),
            doppler_hz: num(fields[1], "doppler_hz")?,
            cn0_dbhz: num(fields[2], "cn0_dbhz")?,
            sigma_tot_kmps: num(fields[3], "sigma_tot_kmps")?,
            pass_id: fields[4]
                .trim()
                .parse::<u32>()
                .map_err(|e| parse_err(path, line_no, format!("bad pass_id: {e}")))?,
        };
        if !(obs.sigma_tot_kmps > 0.0) {
            return Err(parse_err(path, line_no, "sigma_tot_kmps must be > 0"));
        }
        out.push(obs);
    }
    Ok(out)
}

// ------------------------------------------------------------------- ephemeris

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EphemerisRecord {
    pub pass_id: u32,
    pub t_start_s: f64,
    pub t_end_s: f64,
    /// 3 x 11 Chebyshev coefficients (km), axes x, y, z.
    pub coeffs_km: [[f64; CHEBYSHEV_ORDER + 1]; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EphemerisFile {
    pub schema: String,
    pub passes: Vec<EphemerisRecord>,
}

impl EphemerisFile {
    pub fn from_passes(passes: &[PassData]) -> Self {
        EphemerisFile {
            schema: EPHEMERIS_SCHEMA.into(),
            passes: passes
                .iter()
                .map(|p| EphemerisRecord {
                    pass_id: p.pass_id,
                    t_start_s: p.ephemeris.t_start,
                    t_end_s: p.ephemeris.t_end,
                    coeffs_km: p.ephemeris.coeffs_km,
                })
                .collect(),
        }
    }
}

pub fn write_ephemeris_json(path: &Path, file: &EphemerisFile) -> Result<()> {
    atomic_write(path, serde_json::to_string_pretty(file)?.as_bytes())
}

pub fn read_ephemeris_json(path: &Path) -> Result<EphemerisFile> {
    let text = std::fs::read_to_string(path)?;
    let file: EphemerisFile = serde_json::from_str(&text)?;
    if file.schema != EPHEMERIS_SCHEMA {
        return Err(Error::Config(format!(
            "unsupported ephemeris schema {:?}, expected {EPHEMERIS_SCHEMA:?}",
            file.schema
        )));
    }
    Ok(file)
}

/// Join an ephemeris file with observations into per-pass solver input.
pub fn assemble_passes(
    ephemerides: &EphemerisFile,
    observations: &[DopplerObservation],
) -> Result<Vec<PassData>> {
    let mut by_id: BTreeMap<u32, PassData> = BTreeMap::new();
    for rec in &ephemerides.passes {
        by_id.insert(
            rec.pass_id,
            PassData {
                pass_id: rec.pass_id,
                ephemeris: ChebyshevEphemeris {
                    t_start: rec.t_start_s,
                    t_end: rec.t_end_s,
                    coeffs_km: rec.coeffs_km,
                },
                observations: Vec::new(),
            },
        );
    }
    for obs in observations {
        match by_id.get_mut(&obs.pass_id) {
            Some(p) => p.observations.push(*obs),
            None => {
                return Err(Error::Config(format!(
                    "observation at t = {} s references pass {} with no ephemeris",
                    obs.t_r.as_secs(),
                    obs.pass_id
                )))
            }
        }
    }
    let passes: Vec<PassData> = by_id.into_values().filter(|p| !p.observations.is_empty()).collect();
    if passes.is_empty() {
        return Err(Error::EmptyInput("no observations matched any ephemeris pass".into()));
    }
    Ok(passes)
}

// ---------------------------------------------------------------- truth series

const TRUTH_COLUMNS: &str = "t_s,x_km,y_km,z_km,vx_kmps,vy_kmps,vz_kmps";

pub fn series_to_csv(series: &SatelliteStateSeries) -> String {
    let mut out = format!("# {TRUTH_SCHEMA}\n{TRUTH_COLUMNS}\n");
    for i in 0..series.len() {
        let (p, v) = (series.positions[i], series.velocities[i]);
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            series.times[i].as_secs(),
            p.x, p.y, p.z, v.x, v.y, v.z
        ));
    }
    out
}

pub fn write_series_csv(path: &Path, series: &SatelliteStateSeries) -> Result<()> {
    atomic_write(path, series_to_csv(series).as_bytes())
}

pub fn read_series_csv(path: &Path) -> Result<SatelliteStateSeries> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    check_header(path, &mut lines, TRUTH_SCHEMA, TRUTH_COLUMNS)?;
    let mut times = Vec::new();
    let mut positions = Vec::new();
    let mut velocities = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        if fields.len() != 7 {
            return Err(parse_err(path, line_no, format!("expected 7 fields, got {}", fields.len())));
        }
        times.push(Epoch(fields[0]));
        positions.push(Vector3::new(fields[1], fields[2], fields[3]));
        velocities.push(Vector3::new(fields[4], fields[5], fields[6]));
    }
    SatelliteStateSeries::new(times, positions, velocities)
}

// -------------------------------------------------------------------- solution

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionFile {
    pub schema: String,
    pub scenario_hash: Option<String>,
    pub n_passes: usize,
    /// Multi-pass clustering fell back to joint-cost comparison.
    pub ambiguous_clustering: Option<bool>,
    #[serde(flatten)]
    pub estimate: SolverEstimate,
}

pub fn write_solution_json(path: &Path, solution: &SolutionFile) -> Result<()> {
    atomic_write(path, serde_json::to_string_pretty(solution)?.as_bytes())
}

pub fn read_solution_json(path: &Path) -> Result<SolutionFile> {
    let text = std::fs::read_to_string(path)?;
    let file: SolutionFile = serde_json::from_str(&text)?;
    if file.schema != SOLUTION_SCHEMA {
        return Err(Error::Config(format!("unsupported solution schema {:?}", file.schema)));
    }
    Ok(file)
}

// --------------------------------------------------------------------- results

const RESULTS_COLUMNS: &str = "trial,lat_deg,lon_deg,alt_km,error_m,step1_err_km,step2_err_km,step3_err_km,iters_step2,iters_step3,cost_pick_correct,disambiguation_correct,failure";

fn opt_bool(b: Option<bool>) -> &'static str {
    match b {
        Some(true) => "1",
        Some(false) => "0",
        None => "",
    }
}

pub fn results_to_csv(results: &[TrialResult]) -> String {
    let mut out = format!("# {RESULTS_SCHEMA}\n{RESULTS_COLUMNS}\n");
    for r in results {
        let steps = r.per_step_errors_km.map(|s| (s[0].to_string(), s[1].to_string(), s[2].to_string()));
        let (s1, s2, s3) = steps.unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.trial,
            r.receiver_lat_deg,
            r.receiver_lon_deg,
            r.receiver_alt_km,
            r.error_km * 1e3,
            s1,
            s2,
            s3,
            r.iterations_step2,
            r.iterations_step3,
            opt_bool(r.cost_pick_correct),
            opt_bool(r.disambiguation_correct),
            r.failure.as_deref().unwrap_or("").replace(',', ";"),
        ));
    }
    out
}

pub fn write_results_csv(path: &Path, results: &[TrialResult]) -> Result<()> {
    atomic_write(path, results_to_csv(results).as_bytes())
}

// --------------------------------------------------------------------- summary

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryFile {
    pub schema: String,
    pub scenario_hash: String,
    pub seed: u64,
    #[serde(flatten)]
    pub summary: Summary,
}

pub fn write_summary_json(path: &Path, file: &SummaryFile) -> Result<()> {
    atomic_write(path, serde_json::to_string_pretty(file)?.as_bytes())
}

// ------------------------------------------------------------------------ gdop

const GDOP_COLUMNS: &str = "lat_deg,lon_deg,gdop";

pub fn gdop_to_csv(grid: &GdopGrid) -> String {
    let mut out = format!("# {GDOP_SCHEMA}\n{GDOP_COLUMNS}\n");
    for i in 0..grid.n_lat() {
        for j in 0..grid.n_lon() {
            let (lat, lon) = grid.cell_center_deg(i, j);
            let v = grid.value(i, j);
            let v_str = if v.is_finite() { v.to_string() } else { "inf".to_string() };
            out.push_str(&format!("{lat},{lon},{v_str}\n"));
        }
    }
    out
}

pub fn write_gdop_csv(path: &Path, grid: &GdopGrid) -> Result<()> {
    atomic_write(path, gdop_to_csv(grid).as_bytes())
}

// -------------------------------------------------------------------- manifest

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFile {
    pub schema: String,
    pub scenario_hash: String,
    pub seed: u64,
    /// True receiver position used by the simulator (km).
    pub receiver_true_km: Option<[f64; 3]>,
    pub outputs: Vec<String>,
}

pub fn write_manifest_json(path: &Path, manifest: &ManifestFile) -> Result<()> {
    atomic_write(path, serde_json::to_string_pretty(manifest)?.as_bytes())
}
