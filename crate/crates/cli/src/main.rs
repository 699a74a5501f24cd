use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use yaf_core::config::{parse_config, MaxPrincipleConfig};
use yaf_core::exhaustion::{exhaustion_study, ExhaustionPlan};
use yaf_core::flow::{manufactured_study, Form};
use yaf_core::io::{run, write_atomic};
use yaf_core::maxprinciple::{admissible_eta, beta_lower_bound, induction_cover, theta_constant};

/// Yamabe flow on rotationally symmetric, asymptotically flat manifolds.
///
/// Exit status: 0 on success, 1 when a monitor or check fails, 2 on invalid
/// input or a runtime error. Set YAF_LOG (error, warn, info, debug) for logs.
#[derive(Parser)]
#[command(name = "yaf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a scenario and write snapshots, series, events and a manifest.
    Run {
        config: PathBuf,
        /// Output directory (default: `[output] dir`, else runs/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve on nested balls and tabulate differences on a compact set.
    Exhaustion {
        config: PathBuf,
        /// Comma-separated domain radii.
        #[arg(long, value_delimiter = ',', required = true)]
        radii: Vec<f64>,
        /// Radius of the comparison set.
        #[arg(long, default_value_t = 10.0)]
        compact: f64,
        /// End time (default: the scenario's t_end).
        #[arg(long)]
        t_end: Option<f64>,
        /// Also write exhaustion.csv into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maximum-principle constants and numerical verification.
    #[command(subcommand)]
    Maxprinciple(MaxPrinciple),
    /// Manufactured-solution order study of the implicit scheme.
    MmsConvergence {
        /// Comma-separated dimensions.
        #[arg(long, value_delimiter = ',', default_value = "3")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 4)]
        refinements: usize,
        #[arg(long, value_enum, default_value_t = FormArg::U)]
        form: FormArg,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum MaxPrinciple {
    /// Evaluate eta, the stage count and (when given enough inputs) theta and beta.
    Constants(ConstantsArgs),
    /// Run the discrete nonpositivity check described by a TOML file.
    Verify { config: PathBuf },
}

#[derive(Args)]
struct ConstantsArgs {
    #[arg(long = "T")]
    t: f64,
    #[arg(long = "K0")]
    k0: f64,
    #[arg(long)]
    alpha4: f64,
    #[arg(long)]
    alpha5: f64,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m0: Option<f64>,
    #[arg(long)]
    alpha1_prime: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    #[arg(long)]
    alpha3: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    U,
    W,
}

impl From<FormArg> for Form {
    fn from(f: FormArg) -> Form {
        match f {
            FormArg::U => Form::U,
            FormArg::W => Form::W,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("YAF_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` means the command ran but a check failed.
fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Run { config, out } => cmd_run(&config, out),
        Command::Exhaustion {
            config,
            radii,
            compact,
            t_end,
            out,
        } => cmd_exhaustion(&config, radii, compact, t_end, out),
        Command::Maxprinciple(MaxPrinciple::Constants(a)) => cmd_constants(&a),
        Command::Maxprinciple(MaxPrinciple::Verify { config }) => {
            let cfg = MaxPrincipleConfig::load(&config).with_context(|| format!("reading {}", config.display()))?;
            let outcome = cfg.run()?;
            println!("{}", serde_json::to_string_pretty(&outcome)?);
            Ok(outcome.report.passed && outcome.volume_growth.passed)
        }
        Command::MmsConvergence {
            dims,
            refinements,
            form,
            json,
        } => cmd_mms(&dims, refinements, form.into(), json),
    }
}

fn cmd_run(config: &Path, out: Option<PathBuf>) -> Result<bool> {
    let scenario = parse_config(config)?;
    let dir = out
        .or_else(|| scenario.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("runs").join(&scenario.name));
    let manifest = run(&scenario, &dir)?;
    println!("scenario {} ({})", manifest.scenario, manifest.grid);
    println!("steps {} wall time {:.3} s", manifest.steps, manifest.wall_time_s);
    for (name, v) in &manifest.verdicts {
        println!("monitor {name}: {:?} (last value {:e})", v.status, v.last_value);
    }
    if let Some(e) = &manifest.error {
        println!("solver failed: {e}");
    }
    if let Some(a) = &manifest.aborted {
        println!("aborted: {a}");
    }
    if !manifest.failed_monitors.is_empty() {
        println!("failed monitors: {}", manifest.failed_monitors.join(", "));
    }
    println!("outputs in {}", dir.display());
    Ok(manifest.success())
}

fn cmd_exhaustion(config: &Path, radii: Vec<f64>, compact: f64, t_end: Option<f64>, out: Option<PathBuf>) -> Result<bool> {
    let scenario = parse_config(config)?;
    let t_end = t_end.unwrap_or(scenario.t_end);
    let cfg = scenario.solver.clone();
    let plan = ExhaustionPlan::new(scenario, radii, compact)?;
    let table = exhaustion_study(&plan, t_end, &cfg)?;
    print!("{}", table.to_text());
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        write_atomic(&dir.join("exhaustion.csv"), &buf)?;
    }
    let ok = table.strictly_decreasing();
    if !ok {
        println!("differences are not strictly decreasing");
    }
    Ok(ok)
}

fn cmd_constants(a: &ConstantsArgs) -> Result<bool> {
    let eta = admissible_eta(a.t, a.k0, a.alpha4, a.alpha5)?;
    println!("eta = {eta:.17e}");
    println!("stages = {}", induction_cover(a.t, eta)?);
    if let Some(alpha1) = a.alpha1 {
        println!("theta = {:.17e}", theta_constant(alpha1)?);
    }
    let beta_inputs = (a.n, a.m0, a.alpha1_prime, a.alpha2, a.alpha3);
    match beta_inputs {
        (Some(n), Some(m0), Some(a1p), Some(a2), Some(a3)) => {
            println!("beta_min = {:.17e}", beta_lower_bound(n, m0, a.alpha5, a3, a2, a1p)?);
        }
        (None, None, None, None, None) => {}
        _ => bail!("the beta bound needs --n, --m0, --alpha1-prime, --alpha2 and --alpha3 together"),
    }
    Ok(true)
}

fn cmd_mms(dims: &[usize], refinements: usize, form: Form, json: bool) -> Result<bool> {
    let mut ok = true;
    let mut reports = Vec::new();
    for &n in dims {
        let rep = manufactured_study(n, refinements, form)?;
        let sp = rep.spatial.final_order();
        let tm = rep.temporal.final_order();
        ok &= (sp - 2.0).abs() <= 0.2 && (tm - 1.0).abs() <= 0.2;
        reports.push(rep);
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    } else {
        for rep in &reports {
            println!("n = {} ({:?} form)", rep.n, rep.form);
            println!("{:>12}  {:>14}  {:>8}", "h", "error", "order");
            for (k, (h, e)) in rep.spatial.steps.iter().zip(&rep.spatial.errors).enumerate() {
                let o = if k == 0 { "-".to_string() } else { format!("{:.3}", rep.spatial.orders[k - 1]) };
                println!("{h:>12.5e}  {e:>14.6e}  {o:>8}");
            }
            println!("{:>12}  {:>14}  {:>8}", "dt", "difference", "order");
            for (k, (h, e)) in rep.temporal.steps.iter().zip(&rep.temporal.errors).enumerate() {
                let o = if k == 0 { "-".to_string() } else { format!("{:.3}", rep.temporal.orders[k - 1]) };
                println!("{h:>12.5e}  {e:>14.6e}  {o:>8}");
            }
        }
    }
    if !ok {
        println!("observed orders outside 2.0 +- 0.2 (space) or 1.0 +- 0.2 (time)");
    }
    Ok(ok)
}
