use std::path::PathBuf;
use std::process::ExitCode;

use backlab_core::PerturbedKdvKind;
use backlab_lab::acceptance::{self, CriterionResult};
use backlab_lab::report::{constants_ledger, constants_table, emit_report, load_runs};
use backlab_lab::{
    run_and_persist, run_sweep, LabError, ScenarioConfig, SweepSpec, EXIT_FAILED, EXIT_OK,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "lab", version, about = "Backward-in-time experiments for dissipative PDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and persist its artifacts.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a parameter sweep.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize run directories into a markdown and JSON report.
    Report {
        #[arg(required = false)]
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
        /// Attach the constants ledger.
        #[arg(long)]
        constants: bool,
    },
    /// Run the acceptance suite.
    Accept {
        /// Comma-separated criterion ids.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        /// Also write the results as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Print every sub-check.
        #[arg(short, long)]
        verbose: bool,
    },
    /// Print the constants ledger.
    Constants,
}

fn warn_epsilon(cfg: &ScenarioConfig) {
    if let Some(w) = cfg.model.epsilon.and_then(PerturbedKdvKind::epsilon_warning) {
        eprintln!("warning: {w}");
    }
}

fn run(cmd: Command) -> Result<i32, LabError> {
    match cmd {
        Command::Run { config, out } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if out.is_some() {
                cfg.output_dir = out;
            }
            warn_epsilon(&cfg);
            let (outcome, manifest) = run_and_persist(&cfg)?;
            println!("{} {} verdict {}", cfg.scenario, &manifest.config_hash[..12], manifest.verdict.label());
            for c in &outcome.checks {
                println!("  [{}] {}: {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if outcome.passed() { EXIT_OK } else { EXIT_FAILED })
        }
        Command::Sweep { spec, out } => {
            let mut spec = SweepSpec::load(&spec)?;
            if out.is_some() {
                spec.base.output_dir = out;
            }
            warn_epsilon(&spec.base);
            let rep = run_sweep(&spec)?;
            for c in &rep.cells {
                let params: Vec<String> = c.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                match &c.error {
                    Some(e) => println!("cell {:>4} {} error: {e}", c.index, params.join(" ")),
                    None => println!(
                        "cell {:>4} {} {} {}",
                        c.index,
                        params.join(" "),
                        c.verdict.as_deref().unwrap_or("-"),
                        if c.passed { "pass" } else { "FAIL" }
                    ),
                }
            }
            for f in &rep.fits {
                let bound = f.bound.map_or(String::new(), |b| format!(" (bound {b})"));
                println!("{} vs {}: slope {:.4} ± {:.4}{bound}", f.metric, f.param, f.slope, f.stderr);
            }
            Ok(if rep.passed() { EXIT_OK } else { EXIT_FAILED })
        }
        Command::Report { dirs, out, constants } => {
            let runs = load_runs(&dirs)?;
            let bundle = emit_report(&runs, Some(&out), constants)?;
            for f in bundle.failures() {
                println!("failed: {f}");
            }
            println!("report written to {}", out.join("report.md").display());
            Ok(if bundle.passed() { EXIT_OK } else { EXIT_FAILED })
        }
        Command::Accept { only, json, verbose } => {
            let mut results: Vec<CriterionResult> = Vec::new();
            let ids: Vec<u8> = acceptance::CRITERIA
                .iter()
                .map(|(id, _)| *id)
                .filter(|id| only.is_empty() || only.contains(id))
                .collect();
            if ids.is_empty() {
                return Err(LabError::Config(format!("no criteria among {only:?}")));
            }
            for id in ids {
                let r = acceptance::run_criterion(id)?;
                println!("{}", r.line());
                if verbose || !r.passed {
                    for d in &r.detail {
                        println!("    {d}");
                    }
                }
                results.push(r);
            }
            if let Some(p) = json {
                std::fs::write(p, serde_json::to_vec_pretty(&results).expect("serializable"))?;
            }
            Ok(acceptance::exit_code(&results))
        }
        Command::Constants => {
            print!("{}", constants_table(&constants_ledger()?));
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
