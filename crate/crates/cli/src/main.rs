//! `jerkctl` command-line simulator.
//!
//! Exit codes: 0 success, 1 configuration or runtime error, 2 divergence.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use jerkctl::sim::{run_episode, run_suite, EpisodeLog, Scenario, ScenarioConfig, SuiteConfig, Summary};
use jerkctl::verify::{run_verification, Profile};
use jerkctl::wrench::{
    check_constraints, cone_coverage_estimate, in_image, phi, phi_gradient, phi_gradient_det, phi_inverse_checked,
    GeometryConfig, SaturationPolicy,
};
use jerkctl::{ContactGeometry, Error, Wrench, Xi};

#[derive(Parser)]
#[command(name = "jerkctl", version, about = "Momentum jerk-control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write episode.csv and summary.txt.
    Run(RunArgs),
    /// Run a base scenario with merge-patch variants.
    Suite(SuiteArgs),
    /// Run the built-in property suites.
    Verify(VerifyArgs),
    /// Estimate the tangential coverage of the parametrization.
    Coverage(CoverageArgs),
    /// Print φ, φ⁻¹, Φ and constraint margins for one point.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write plot.gp, a gnuplot script for the momentum error.
    #[arg(long)]
    gnuplot: bool,
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    parallel: usize,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "quick")]
    profile: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CoverageArgs {
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Geometry JSON; the default geometry otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// Six comma-separated ξ entries.
    #[arg(long, value_delimiter = ',', conflicts_with = "wrench", required_unless_present = "wrench", allow_hyphen_values = true)]
    xi: Option<Vec<f64>>,
    /// Six comma-separated wrench entries `fx,fy,fz,mx,my,mz`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    wrench: Option<Vec<f64>>,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Outcome that maps onto the exit code contract.
enum Outcome {
    Ok,
    Diverged,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Suite(a) => cmd_suite(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Coverage(a) => cmd_coverage(&a).map(|_| Outcome::Ok),
        Command::Inspect(a) => cmd_inspect(&a).map(|_| Outcome::Ok),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Diverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn describe(e: Error) -> anyhow::Error {
    match e {
        Error::Config(issues) => anyhow::anyhow!("invalid configuration:\n  {}", issues.join("\n  ")),
        other => other.into(),
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_scenario(path: &Path, seed: Option<u64>) -> anyhow::Result<Scenario> {
    let mut cfg = ScenarioConfig::from_json(&read(path)?).map_err(describe)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    cfg.validate().map_err(describe)
}

fn write_episode(dir: &Path, log: &EpisodeLog, summary: &Summary) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("episode.csv"), log.to_csv()).context("writing episode.csv")?;
    fs::write(dir.join("summary.txt"), summary.to_text()).context("writing summary.txt")?;
    Ok(())
}

fn gnuplot_script() -> String {
    // h_err columns follow t, h and h_d.
    [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set xlabel 't [s]'",
        "set ylabel 'momentum error'",
        "plot for [i=14:19] 'episode.csv' using 1:i with lines",
        "pause -1",
        "",
    ]
    .join("\n")
}

fn cmd_run(a: &RunArgs) -> anyhow::Result<Outcome> {
    let scenario = load_scenario(&a.config, a.seed)?;
    let log = run_episode(&scenario).map_err(describe)?;
    let summary = log.summary(&scenario.config.name);
    write_episode(&a.out, &log, &summary)?;
    if a.gnuplot {
        fs::write(a.out.join("plot.gp"), gnuplot_script()).context("writing plot.gp")?;
    }
    print!("{}", summary.to_text());
    Ok(if log.diverged { Outcome::Diverged } else { Outcome::Ok })
}

fn cmd_suite(a: &SuiteArgs) -> anyhow::Result<Outcome> {
    let mut suite = SuiteConfig::from_json(&read(&a.config)?).map_err(describe)?;
    if let (Some(seed), Some(base)) = (a.seed, suite.base.as_object_mut()) {
        base.insert("seed".into(), seed.into());
        for v in suite.variants.iter_mut().filter_map(|v| v.as_object_mut()) {
            v.remove("seed");
        }
    }
    let scenarios = suite.expand().map_err(describe)?;
    let results = run_suite(&scenarios, a.parallel).map_err(describe)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let mut table = String::from("index,name,success,diverged,final_h_err_norm,max_xi_norm,error\n");
    let mut all_ok = true;
    for (i, r) in results.iter().enumerate() {
        match &r.outcome {
            Ok((log, summary)) => {
                write_episode(&a.out.join(format!("{i:03}-{}", r.name)), log, summary)?;
                all_ok &= summary.success;
                table.push_str(&format!(
                    "{i},{},{},{},{:e},{:e},\n",
                    r.name, summary.success, summary.diverged, summary.final_h_err_norm, summary.max_xi_norm
                ));
            }
            Err(e) => {
                all_ok = false;
                table.push_str(&format!("{i},{},false,false,,,\"{}\"\n", r.name, e.to_string().replace('"', "'")));
            }
        }
    }
    fs::write(a.out.join("suite.csv"), &table).context("writing suite.csv")?;
    print!("{table}");
    Ok(if all_ok { Outcome::Ok } else { Outcome::Diverged })
}

fn cmd_verify(a: &VerifyArgs) -> anyhow::Result<Outcome> {
    let profile: Profile = a.profile.parse().map_err(describe)?;
    let report = run_verification(profile, a.seed).map_err(describe)?;
    print!("{report}");
    if !report.passed() {
        bail!("verification failed");
    }
    Ok(Outcome::Ok)
}

fn load_geometry(path: Option<&PathBuf>) -> anyhow::Result<ContactGeometry> {
    let Some(path) = path else { return Ok(ContactGeometry::default()) };
    let cfg: GeometryConfig = serde_json::from_str(&read(path)?).context("parsing geometry")?;
    let issues = cfg.issues("geometry");
    if !issues.is_empty() {
        return Err(describe(Error::Config(issues)));
    }
    ContactGeometry::try_from(cfg).map_err(describe)
}

fn cmd_coverage(a: &CoverageArgs) -> anyhow::Result<()> {
    let geom = load_geometry(a.config.as_ref())?;
    let c = cone_coverage_estimate(&geom, a.samples, a.seed).map_err(describe)?;
    let (lo, hi) = c.interval(1.96);
    println!("samples = {}", c.samples);
    println!("seed = {}", a.seed);
    println!("coverage = {:.6}", c.ratio);
    println!("std_error = {:.3e}", c.std_error);
    println!("ci95 = [{lo:.6}, {hi:.6}]");
    Ok(())
}

fn cmd_inspect(a: &InspectArgs) -> anyhow::Result<()> {
    let geom = load_geometry(a.config.as_ref())?;
    for v in [&a.xi, &a.wrench].into_iter().flatten() {
        if v.len() != 6 {
            bail!("expected 6 comma-separated values, got {}", v.len());
        }
    }
    let xi = match (&a.xi, &a.wrench) {
        (Some(x), _) => Xi::from_slice(x),
        (None, Some(w)) => {
            let w = Wrench::new(w[0], w[1], w[2], w[3], w[4], w[5]);
            println!("in_image = {}", in_image(&w, &geom, 1e-9));
            let inv = phi_inverse_checked(&w, &geom, &SaturationPolicy::default()).map_err(describe)?;
            println!("saturated = {}", inv.saturated);
            inv.xi
        }
        (None, None) => bail!("one of --xi or --wrench is required"),
    };
    let w = phi(&xi, &geom);
    let report = check_constraints(&w, &geom);
    println!("xi = {:?}", xi.0.as_slice());
    println!("phi = {:?}", w.0.as_slice());
    println!("det_gradient = {:e}", phi_gradient_det(&xi, &geom));
    println!("gradient =");
    for row in phi_gradient(&xi, &geom).row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>13.6e}")).collect();
        println!("  {}", cells.join(" "));
    }
    let names = ["unilateral", "friction", "cop_y", "cop_x", "torsional"];
    for (name, s) in names.iter().zip(report.statuses()) {
        println!("margin_{name} = {:e} ({})", s.margin, if s.satisfied { "ok" } else { "violated" });
    }
    Ok(())
}
