use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use robustdrift_cli::config::ModeName;
use robustdrift_cli::{
    cmd_filter, cmd_simulate, cmd_solve, cmd_study, parse_config, CliError, Overrides, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "robustdrift",
    version,
    about = "Robust portfolio choice under drift uncertainty"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of simulated scenarios.
    #[arg(long)]
    paths: Option<usize>,
    /// Grid steps over the horizon.
    #[arg(long)]
    steps: Option<usize>,
    /// Comma-separated filtrations, e.g. N,R,E,C.
    #[arg(long, value_delimiter = ',')]
    kinds: Option<Vec<String>>,
    /// plug_in or sde_mc.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<ModeName>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Worst-case drift and robust strategy for one constant ellipsoid.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Cross-check against the brute-force boundary scan (d = 2).
        #[arg(long)]
        oracle: bool,
    },
    /// Filter trajectories for one scenario.
    Filter {
        #[command(flatten)]
        common: Common,
    },
    /// One scenario through the full pipeline, with traces.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Utility study over all configured filtrations.
    Study {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_mode(s: &str) -> Result<ModeName, String> {
    match s {
        "plug_in" => Ok(ModeName::PlugIn),
        "sde_mc" => Ok(ModeName::SdeMc),
        other => Err(format!(
            "unknown mode '{other}', expected plug_in or sde_mc"
        )),
    }
}

fn load(c: &Common) -> Result<RunConfig, CliError> {
    let overrides = Overrides {
        seed: c.seed,
        paths: c.paths,
        steps: c.steps,
        kinds: c.kinds.clone(),
        mode: c.mode,
        out: c.out.clone(),
    };
    Ok(parse_config(&c.config)?.with_overrides(&overrides))
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { common, oracle } => {
            let run = load(&common)?.validate()?;
            let out = run.output_dir();
            let r = cmd_solve(&run, oracle, &out)?;
            println!("mu*     = {}", fmt_vec(&r.mu_star));
            println!("pi*     = {}", fmt_vec(&r.pi_star));
            println!("psi     = {:.6e}", r.psi);
            println!("lambda  = {}", fmt_vec(&r.lambdas));
            println!("value   = {:.8}", r.value);
            println!("residual= {:.3e}", r.boundary_residual);
            println!(
                "saddle  = max violation {:.3e} over {} samples",
                r.saddle.max_violation, r.saddle.samples
            );
            if let Some(o) = &r.oracle {
                println!(
                    "oracle  = mu {} value {:.8} (|dmu| = {:.3e}, rel value error = {:.3e})",
                    fmt_vec(&o.mu),
                    o.value,
                    o.mu_distance,
                    o.value_rel_error
                );
            }
            println!("wrote {}", out.join("solve.json").display());
        }
        Command::Filter { common } => {
            let run = load(&common)?.validate_drift()?;
            for p in cmd_filter(&run, &PathBuf::from(&run.config.output_dir))? {
                println!("wrote {}", p.display());
            }
        }
        Command::Simulate { common } => {
            let run = load(&common)?.validate()?;
            for s in cmd_simulate(&run, &run.output_dir())? {
                println!("{} {}", s.kind, fmt_vec(&s.values));
            }
        }
        Command::Study { common } => {
            let run = load(&common)?.validate()?;
            let b = cmd_study(&run, &run.output_dir())?;
            println!("H      n  robust_worst  naive_worst  robust_ref  naive_ref");
            for r in &b.report.rows {
                println!(
                    "{}  {:5}  {:>12.4}  {:>11.4}  {:>10.4}  {:>9.4}",
                    r.kind, r.n, r.mean[0], r.mean[1], r.mean[2], r.mean[3]
                );
                println!(
                    "          {:>12}  {:>11}  {:>10}  {:>9}",
                    format!("({:.4})", r.std[0]),
                    format!("({:.4})", r.std[1]),
                    format!("({:.4})", r.std[2]),
                    format!("({:.4})", r.std[3])
                );
            }
            println!("wrote {}", run.output_dir().display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
