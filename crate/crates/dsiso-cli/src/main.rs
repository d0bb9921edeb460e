//! Command-line surface for synthesis, verification, simulation, and
//! reporting.

use std::fs;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dsiso_core::observer::RunPolicy;
use dsiso_core::optim::write_lp;
use dsiso_core::synthesis::export_milp;
use dsiso_core::{Error, Result};

use dsiso_cli::config::{build_scenario, parse_config, render_config, Config};
use dsiso_cli::driver::{
    certified_bounds, run_observer, synthesize_cpdn, synthesize_milp,
};
use dsiso_cli::gains_io::{parse_gains, render_gains};
use dsiso_cli::trace::{read_trace, write_trace};

#[derive(Parser)]
#[command(name = "dsiso", about = "Distributed resilient interval observer toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design observer gains for the configured scenario.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured method (`milp` or `cpdn`).
        #[arg(long)]
        method: Option<String>,
        /// Write the resulting gains document here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the distributed detectability check and print the verdict.
    VerifyCpdn {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate the truth and run the observer, writing a CSV trace.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Gains document produced by `synthesize`.
        #[arg(long)]
        gains: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a trace against the certified error bounds.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        gains: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Export the gain-design program in LP text format.
    ExportLp {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and re-render a configuration (schema check).
    CheckConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_config(path: &PathBuf) -> Result<Config> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn write_out(path: &PathBuf, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synthesize {
            config,
            method,
            out,
        } => {
            let cfg = load_config(&config)?;
            let scenario = build_scenario(&cfg)?;
            let method = method.unwrap_or_else(|| cfg.synthesis.method.clone());
            let solution = match method.as_str() {
                "milp" => synthesize_milp(&scenario, &cfg.synthesis.milp_config())?,
                "cpdn" => synthesize_cpdn(&scenario)?.0,
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unknown synthesis method `{other}`"
                    )))
                }
            };
            match solution.gamma_star {
                Some(g) => println!("gamma_star: {g:.9}"),
                None => println!("gamma_star: n/a"),
            }
            println!("rho_star: {:.9}", solution.rho_star);
            if let Some(path) = out {
                write_out(&path, &render_gains(&scenario, &method, &solution)?)?;
                println!("gains written to {}", path.display());
            }
            Ok(())
        }
        Command::VerifyCpdn { config } => {
            let cfg = load_config(&config)?;
            let scenario = build_scenario(&cfg)?;
            let (_, cert) = match synthesize_cpdn(&scenario) {
                Ok(ok) => ok,
                Err(Error::Infeasible(msg)) => {
                    println!("verified: false");
                    return Err(Error::Infeasible(msg));
                }
                Err(e) => return Err(e),
            };
            println!("verified: {}", cert.verified);
            for (i, js) in cert.j_sets.iter().enumerate() {
                println!("agent {i}: contractive rows {js:?}");
            }
            Ok(())
        }
        Command::Simulate { config, gains, out } => {
            let cfg = load_config(&config)?;
            let scenario = build_scenario(&cfg)?;
            let text = fs::read_to_string(&gains)
                .map_err(|e| Error::InvalidInput(format!("{}: {e}", gains.display())))?;
            let (_, solution) = parse_gains(&scenario, &text)?;
            let policy = match cfg.simulate.policy.as_str() {
                "permissive" => RunPolicy::Permissive,
                _ => RunPolicy::Halt,
            };
            let (records, truth) =
                run_observer(&scenario, &solution.gains, cfg.simulate.run_seed, policy)?;
            let flat: Vec<_> = records.into_iter().flatten().collect();
            let mut buf = Vec::new();
            write_trace(&mut buf, &scenario, cfg.simulate.run_seed, &flat, &truth)?;
            fs::write(&out, buf)
                .map_err(|e| Error::InvalidInput(format!("{}: {e}", out.display())))?;
            println!("trace written to {} ({} records)", out.display(), flat.len());
            Ok(())
        }
        Command::Report {
            config,
            gains,
            trace,
        } => {
            let cfg = load_config(&config)?;
            let scenario = build_scenario(&cfg)?;
            let text = fs::read_to_string(&gains)
                .map_err(|e| Error::InvalidInput(format!("{}: {e}", gains.display())))?;
            let (_, solution) = parse_gains(&scenario, &text)?;
            let file = fs::File::open(&trace)
                .map_err(|e| Error::InvalidInput(format!("{}: {e}", trace.display())))?;
            let (_, rows) = read_trace(BufReader::new(file))?;
            let (_, bounds) =
                certified_bounds(&scenario, &solution.gains, &solution.sigma_star)?;
            let mut max_ex = 0.0f64;
            let mut max_ed = 0.0f64;
            let mut violations = 0usize;
            for r in &rows {
                if r.x_true < r.x_lo || r.x_true > r.x_hi {
                    violations += 1;
                }
                max_ex = max_ex.max((r.x_true - r.x_lo).max(r.x_hi - r.x_true));
                if let (Some(lo), Some(hi), Some(t)) = (r.d_lo, r.d_hi, r.d_true) {
                    if t < lo || t > hi {
                        violations += 1;
                    }
                    max_ed = max_ed.max((t - lo).max(hi - t));
                }
            }
            println!("rows: {}", rows.len());
            println!("containment violations: {violations}");
            println!("max state error: {max_ex:.6}");
            println!("max input error: {max_ed:.6}");
            println!("steady-state state bound: {:.6}", bounds.steady_state_x);
            println!("steady-state input bound: {:.6}", bounds.steady_state_d);
            if violations > 0 {
                return Err(Error::Inconsistency {
                    agent: 0,
                    round: 0,
                    coordinate: 0,
                });
            }
            Ok(())
        }
        Command::ExportLp { config, out } => {
            let cfg = load_config(&config)?;
            let scenario = build_scenario(&cfg)?;
            let agents = scenario.synthesis_data()?;
            let lp = export_milp(&agents, &scenario.graph, &cfg.synthesis.milp_config())?;
            write_out(&out, &write_lp(&lp))?;
            println!("program written to {}", out.display());
            Ok(())
        }
        Command::CheckConfig { config } => {
            let cfg = load_config(&config)?;
            print!("{}", render_config(&cfg)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Infeasible(_) => 2,
                Error::AssumptionViolated(_) => 3,
                Error::Inconsistency { .. } => 4,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
