//! Command-line front end: simulate Doppler passes, solve for the receiver,
//! run Monte Carlo campaigns, and export GDOP maps. Data goes to files,
//! progress to stderr. Exit codes: 0 success, 1 validation error, 2 runtime
//! error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lunadop::error::Error;
use lunadop::formats;
use lunadop::frames::Epoch;
use lunadop::montecarlo::{self, build_trial_geometry, error_budget_attribution, trial_rng, Scenario};
use lunadop::orbit::truth_series;
use lunadop::scenario::{parse_method, scenario_hash, ScenarioConfig};
use lunadop::solver::{disambiguate_multipass, solve_single_pass};
use lunadop::{dop, Result};

#[derive(Parser)]
#[command(name = "lunadop", version, about = "Single-satellite lunar Doppler geolocation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand that consumes a scenario.
#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario configuration file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the number of passes.
    #[arg(long)]
    passes: Option<usize>,
    /// Override the ephemeris method: method1 | method2 | perfect (or 1 | 2).
    #[arg(long)]
    ephemeris: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl ScenarioArgs {
    fn scenario(&self) -> Result<Scenario> {
        let config = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        let mut scenario = config.to_scenario()?;
        if let Some(seed) = self.seed {
            scenario.seed = seed;
        }
        if let Some(trials) = self.trials {
            scenario.n_trials = trials;
        }
        if let Some(passes) = self.passes {
            scenario.n_passes = passes;
        }
        if let Some(method) = &self.ephemeris {
            scenario.ephemeris_method = parse_method(method)?;
        }
        scenario.validate()?;
        Ok(scenario)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize one scenario realization: broadcast ephemeris JSON plus
    /// observation CSV (and a manifest with the scenario hash and truth).
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Also export the sampled truth trajectory as CSV.
        #[arg(long)]
        truth_csv: bool,
    },
    /// Solve a receiver position from an ephemeris JSON and observation CSV.
    Solve {
        /// Broadcast ephemeris file from `simulate` (or a conformant producer).
        #[arg(long)]
        ephemeris_file: PathBuf,
        /// Observation CSV from `simulate` (or a conformant producer).
        #[arg(long)]
        observations: PathBuf,
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Run the randomized-receiver campaign: per-trial results CSV and a
    /// summary JSON, plus the per-source error attribution when requested.
    Montecarlo {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Also run the four single-source attribution campaigns.
        #[arg(long)]
        attribution: bool,
    },
    /// Export the polar GDOP grid for the configured number of passes.
    Gdop {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
}

fn cmd_simulate(args: &ScenarioArgs, truth_csv: bool) -> Result<()> {
    let scenario = args.scenario()?;
    let hash = format!("{:016x}", scenario_hash(&scenario));
    eprintln!("simulate: seed {} passes {} hash {hash}", scenario.seed, scenario.n_passes);

    let mut rng = trial_rng(scenario.seed, 0);
    let (geometry, lat, lon, alt) = build_trial_geometry(&scenario, &mut rng)?;
    eprintln!(
        "simulate: receiver at lat {lat:.3} deg lon {lon:.3} deg alt {alt:.3} km, {} observations",
        geometry.passes.iter().map(|p| p.observations.len()).sum::<usize>()
    );

    let eph_path = args.out.join("ephemeris.json");
    let obs_path = args.out.join("observations.csv");
    formats::write_ephemeris_json(&eph_path, &formats::EphemerisFile::from_passes(&geometry.passes))?;
    let all_obs: Vec<_> = geometry.passes.iter().flat_map(|p| p.observations.iter().copied()).collect();
    formats::write_observations_csv(&obs_path, &all_obs)?;

    let mut outputs = vec!["ephemeris.json".to_string(), "observations.csv".to_string()];
    if truth_csv {
        let last = geometry
            .passes
            .iter()
            .map(|p| p.ephemeris.t_end)
            .fold(0.0f64, f64::max);
        let series = truth_series(
            &geometry.truth.elements,
            &scenario.constants,
            Epoch(0.0),
            Epoch(last),
            1.0,
        )?;
        formats::write_series_csv(&args.out.join("truth.csv"), &series)?;
        outputs.push("truth.csv".to_string());
    }

    formats::write_manifest_json(
        &args.out.join("manifest.json"),
        &formats::ManifestFile {
            schema: formats::MANIFEST_SCHEMA.into(),
            scenario_hash: hash,
            seed: scenario.seed,
            receiver_true_km: Some(geometry.receiver.into()),
            outputs,
        },
    )?;
    eprintln!("simulate: wrote {}", args.out.display());
    Ok(())
}

fn cmd_solve(eph_path: &PathBuf, obs_path: &PathBuf, args: &ScenarioArgs) -> Result<()> {
    let scenario = args.scenario()?;
    let ephemerides = formats::read_ephemeris_json(eph_path)?;
    let observations = formats::read_observations_csv(obs_path)?;
    let passes = formats::assemble_passes(&ephemerides, &observations)?;
    eprintln!("solve: {} passes, {} observations", passes.len(), observations.len());

    let (estimate, ambiguous) = if passes.len() == 1 {
        let sol = solve_single_pass(&passes[0], &scenario.solver, &scenario.constants)?;
        (sol.estimate, None)
    } else {
        let sol = disambiguate_multipass(&passes, &scenario.solver, &scenario.constants)?;
        (sol.estimate, Some(sol.ambiguous))
    };
    eprintln!(
        "solve: position [{:.6}, {:.6}, {:.6}] km, cost {:.6e}, converged {}",
        estimate.position_km[0],
        estimate.position_km[1],
        estimate.position_km[2],
        estimate.cost_final,
        estimate.converged
    );

    formats::write_solution_json(
        &args.out.join("solution.json"),
        &formats::SolutionFile {
            schema: formats::SOLUTION_SCHEMA.into(),
            scenario_hash: Some(format!("{:016x}", scenario_hash(&scenario))),
            n_passes: passes.len(),
            ambiguous_clustering: ambiguous,
            estimate,
        },
    )?;
    eprintln!("solve: wrote {}", args.out.join("solution.json").display());
    Ok(())
}

fn cmd_montecarlo(args: &ScenarioArgs, attribution: bool) -> Result<()> {
    let scenario = args.scenario()?;
    let hash = format!("{:016x}", scenario_hash(&scenario));
    eprintln!(
        "montecarlo: {} trials, {} passes, method {:?}, seed {}",
        scenario.n_trials, scenario.n_passes, scenario.ephemeris_method, scenario.seed
    );
    let results = montecarlo::run_trials(&scenario)?;
    let summary = montecarlo::summarize(&results)?;
    eprintln!(
        "montecarlo: mean {:.3} m, p99 {:.3} m, {} failed",
        summary.mean_error_m, summary.p99_error_m, summary.n_failed
    );

    formats::write_results_csv(&args.out.join("results.csv"), &results)?;
    formats::write_summary_json(
        &args.out.join("summary.json"),
        &formats::SummaryFile {
            schema: formats::SUMMARY_SCHEMA.into(),
            scenario_hash: hash,
            seed: scenario.seed,
            summary,
        },
    )?;

    if attribution {
        eprintln!("montecarlo: running per-source attribution");
        let contributions = error_budget_attribution(&scenario)?;
        for c in &contributions {
            eprintln!("montecarlo: {:>16}: mean {:.3} m", c.source, c.mean_error_m);
        }
        formats::atomic_write(
            &args.out.join("attribution.json"),
            serde_json::to_string_pretty(&contributions)
                .map_err(Error::from)?
                .as_bytes(),
        )?;
    }
    eprintln!("montecarlo: wrote {}", args.out.display());
    Ok(())
}

fn cmd_gdop(args: &ScenarioArgs) -> Result<()> {
    let scenario = args.scenario()?;
    let period = scenario.elements.period(&scenario.constants);
    let horizon = period * scenario.n_passes as f64;
    eprintln!("gdop: {} passes ({:.1} h of geometry)", scenario.n_passes, horizon / 3600.0);
    let series = truth_series(&scenario.elements, &scenario.constants, Epoch(0.0), Epoch(horizon), 1.0)?;
    let config = dop::GdopMapConfig {
        mask_rad: scenario.mask_rad,
        sigma_vel_kmps: scenario.ephemeris_method.sigma_vel_kmps(),
        clock_model: scenario.clock_model,
        link: scenario.link,
        budget: scenario.error_budget,
    };
    let grid = dop::gdop_map(&series, &config, &scenario.constants)?;
    formats::write_gdop_csv(&args.out.join("gdop.csv"), &grid)?;
    eprintln!("gdop: wrote {}", args.out.join("gdop.csv").display());
    Ok(())
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { scenario, truth_csv } => cmd_simulate(&scenario, truth_csv),
        Command::Solve { ephemeris_file, observations, scenario } => {
            cmd_solve(&ephemeris_file, &observations, &scenario)
        }
        Command::Montecarlo { scenario, attribution } => cmd_montecarlo(&scenario, attribution),
        Command::Gdop { scenario } => cmd_gdop(&scenario),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_)
                | Error::Config(_)
                | Error::Parse { .. }
                | Error::LatitudeOutOfRange(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
