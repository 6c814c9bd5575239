use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use radwave::grid::RadialGrid;
use radwave::io;
use radwave::par;
use radwave::plot::emit_plots;
use radwave::radiation::{invert_radiation, inversion_r_max};
use radwave::scenario::{self, default_t_match, load_scenario, Axis, Observable, Scenario, Summary};

/// Radial semilinear wave laboratory.
///
/// Exit status: 0 when every verdict passes, 1 when a verdict fails,
/// 2 on usage, input or I/O errors.
#[derive(Parser, Debug)]
#[command(name = "radwave", version)]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve a scenario and write all artifacts.
    Run,
    /// Evolve a scenario and print its verdicts; writes artifacts only with --out.
    Verify,
    /// Evolve a scenario and write its radiation profile.
    ExtractRadiation,
    /// Build free-wave initial data from a radiation profile.
    InvertRadiation {
        /// Profile CSV (eta,g[,quality]).
        #[arg(long)]
        profile: PathBuf,
        /// Matching time; defaults to 50 times the profile support radius.
        #[arg(long)]
        t_match: Option<f64>,
        /// Radial step; defaults to the profile spacing.
        #[arg(long)]
        h: Option<f64>,
    },
    /// Run the Cartesian product of axes over a template scenario.
    Sweep {
        /// `name=v1,v2,...` with name in d, p, kappa, epsilon, h. Repeatable.
        #[arg(long = "axis", required = true)]
        axes: Vec<Axis>,
    },
    /// Render plots for a run directory (--out).
    Plot,
}

enum Outcome {
    Pass,
    Fail,
}

fn scenario_arg(cli: &Cli) -> Result<Scenario> {
    let path = cli.scenario.as_deref().context("--scenario is required for this command")?;
    let mut sc = load_scenario(path)?;
    if let Some(seed) = cli.seed {
        sc.seed = seed;
    }
    Ok(sc)
}

fn out_dir(cli: &Cli, sc: &Scenario) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| sc.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&sc.name))
}

fn print_summary(s: &Summary) {
    println!("{} (d = {}, p = {}, zeta = {}), {} snapshots", s.name, s.params.d, s.params.p, s.params.zeta, s.snapshots);
    println!("energy {:.8e} -> {:.8e}, drift {:.2e}", s.energy_initial, s.energy_final, s.energy_drift);
    for v in &s.verdicts {
        println!(
            "  {} {:<28} {:>12.4e}  bound {:>12.4e}  {}",
            if v.passed { "pass" } else { "FAIL" },
            v.name,
            v.value,
            v.bound,
            v.detail
        );
    }
    for (name, f) in &s.fits {
        println!("  fit {name}: exponent {:.4}, r^2 {:.3}, window [{}, {}]", f.exponent, f.r2, f.window.0, f.window.1);
    }
}

fn verdict(s: &Summary) -> Outcome {
    if s.passed {
        Outcome::Pass
    } else {
        Outcome::Fail
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Run => {
            let sc = scenario_arg(cli)?;
            let dir = out_dir(cli, &sc);
            let summary = scenario::run(&sc, &dir)?;
            print_summary(&summary);
            println!("artifacts in {}", dir.display());
            Ok(verdict(&summary))
        }
        Command::Verify => {
            let sc = scenario_arg(cli)?;
            let outcome = scenario::execute(&sc)?;
            if let Some(dir) = &cli.out {
                scenario::write_outcome(&sc, &outcome, dir)?;
            }
            print_summary(&outcome.summary);
            Ok(verdict(&outcome.summary))
        }
        Command::ExtractRadiation => {
            let mut sc = scenario_arg(cli)?;
            if !sc.wants(Observable::Radiation) {
                sc.diagnostics.requests.push(Observable::Radiation);
            }
            let dir = out_dir(cli, &sc);
            let outcome = scenario::execute(&sc)?;
            let g = outcome.profile.as_ref().context("no radiation profile was extracted")?;
            let path = dir.join("radiation.csv");
            io::write_profile(&path, g, Some(&sc.model))?;
            println!(
                "radiation profile at t = {}: {} samples, |g|^2 = {:.6e}, max quality {:.2e} -> {}",
                g.t_extract.unwrap_or(f64::NAN),
                g.eta.len(),
                g.norm_sq(),
                g.max_quality(),
                path.display()
            );
            Ok(verdict(&outcome.summary))
        }
        Command::InvertRadiation { profile, t_match, h } => invert(cli, profile, *t_match, *h),
        Command::Sweep { axes } => {
            let sc = scenario_arg(cli)?;
            let dir = out_dir(cli, &sc);
            let table = scenario::sweep(&sc, axes, &dir, cli.threads.unwrap_or(1))?;
            for r in &table.rows {
                match &r.error {
                    Some(e) => println!("  cell {:03} {:?}: error {e}", r.cell, r.values),
                    None => println!(
                        "  cell {:03} {:?}: {}",
                        r.cell,
                        r.values,
                        if r.passed == Some(true) { "pass" } else { "FAIL" }
                    ),
                }
            }
            for o in &table.orders {
                println!("  order {} h {} -> {}: {:.3}", o.quantity, o.h_coarse, o.h_fine, o.order);
            }
            println!("sweep table in {}", dir.display());
            let all = table.rows.iter().all(|r| r.ok && r.passed == Some(true));
            Ok(if all { Outcome::Pass } else { Outcome::Fail })
        }
        Command::Plot => {
            let dir = cli.out.as_deref().context("--out (the run directory) is required for plot")?;
            let report = emit_plots(dir)?;
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            for n in &report.notes {
                println!("note: {n}");
            }
            Ok(Outcome::Pass)
        }
    }
}

fn invert(cli: &Cli, profile: &Path, t_match: Option<f64>, h: Option<f64>) -> Result<Outcome> {
    let g = io::read_profile(profile)?;
    let header: Option<io::ProfileHeader> = io::read_json(&profile.with_extension("json")).ok();
    let params = match (cli.scenario.as_deref(), header.as_ref().and_then(|h| h.params)) {
        (Some(_), _) => scenario_arg(cli)?.model,
        (None, Some(p)) => p,
        (None, None) => bail!("model parameters are needed: pass --scenario or a profile with a header"),
    };
    let t_match = t_match.unwrap_or_else(|| default_t_match(&g));
    let h = h.unwrap_or(g.eta.d_eta);
    let grid = RadialGrid::with_spacing(inversion_r_max(&g, t_match), h)?;
    let data = invert_radiation(&g, t_match, &grid, &params)?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let path = dir.join("initial_data.csv");
    io::write_field_state(&path, &data, &grid, &params)?;
    println!("free-wave data at t = 0 (t_match = {t_match}, r_max = {}) -> {}", grid.r_max, path.display());
    Ok(Outcome::Pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = par::configure_threads(n) {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
