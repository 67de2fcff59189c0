use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use openmhd::config::{write_config, ScenarioConfig};
use openmhd::run::{convergence_study, output_dir, run_scenario};
use openmhd::scenarios::{scenario, scenario_names};
use openmhd::Result;

#[derive(Parser)]
#[command(name = "openmhd", version, about = "Fixed-point solver for compressible MHD with inflow boundaries")]
struct Cli {
    /// Worker threads for the solvers (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Accept norm exponents that violate the exponent condition.
    #[arg(long, global = true)]
    override_exponent_check: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write report.json plus field dumps.
    Run {
        /// Config file, or the name of a built-in scenario.
        config: String,
        /// Output directory (default: config, then $OPENMHD_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Validate a config without running it.
    Check { config: String },
    /// Grid-refinement study against the scenario's exact solution.
    Convergence {
        config: String,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// Also write the table as convergence.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a built-in scenario as a config file.
    DumpScenario {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// `println!` that tolerates a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

/// Loads a file, falling back to a built-in of that name.
fn resolve(arg: &str, override_check: bool) -> Result<(ScenarioConfig, Vec<String>)> {
    let path = Path::new(arg);
    let mut cfg = if path.exists() { ScenarioConfig::from_json(&std::fs::read_to_string(path)?)? } else { scenario(arg)? };
    cfg.override_exponent_check |= override_check;
    let warnings = cfg.validate()?;
    Ok((cfg, warnings))
}

fn execute(cli: Cli) -> Result<bool> {
    let ov = cli.override_exponent_check;
    match cli.command {
        Command::ListScenarios => {
            for name in scenario_names() {
                say!("{name}");
            }
            Ok(true)
        }
        Command::DumpScenario { name, out } => {
            let cfg = scenario(&name)?;
            match out {
                Some(p) => write_config(&cfg, &p)?,
                None => say!("{}", cfg.to_json()?),
            }
            Ok(true)
        }
        Command::Check { config } => {
            let (cfg, warnings) = resolve(&config, ov)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            say!("{}: ok", cfg.name);
            Ok(true)
        }
        Command::Run { config, out } => {
            let (cfg, warnings) = resolve(&config, ov)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            let dir = output_dir(out.as_deref(), &cfg);
            let outcome = run_scenario(&cfg, dir.as_deref())?;
            let r = &outcome.report;
            say!("scenario {}: converged={} final_time={} iterations={} shrinks={}", r.scenario, r.converged, r.final_time, r.iterations, r.shrinks);
            if let Some(d) = &r.diagnostics {
                for c in &d.checks {
                    let tag = if c.pass { "PASS" } else if c.mandatory { "FAIL" } else { "WARN" };
                    say!("  {tag} {} lhs={:.6e} rhs={:.6e}", c.name, c.lhs, c.rhs);
                }
            }
            if let Some(e) = &r.error {
                eprintln!("error: {e}");
            }
            if let Some(d) = &dir {
                say!("report written to {}", d.join("report.json").display());
            }
            Ok(outcome.success())
        }
        Command::Convergence { config, levels, out } => {
            let (cfg, _) = resolve(&config, ov)?;
            let table = convergence_study(&cfg, levels)?;
            say!("{}", table.render().trim_end());
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                let json = serde_json::to_string_pretty(&table).map_err(|e| openmhd::Error::Parse(e.to_string()))?;
                std::fs::write(dir.join("convergence.json"), json + "\n")?;
            }
            Ok(table.levels.iter().all(|l| l.converged))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            if let openmhd::Error::InvalidConfig(issues) = &e {
                for i in issues {
                    eprintln!("  - {i}");
                }
            }
            ExitCode::from(2)
        }
    }
}
