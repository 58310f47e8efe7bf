use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gapdiff::harness::{
    self, describe, parse_config, ExperimentConfig, HarnessError, Table,
};

/// Solvers and samplers for generalized diffusions with measure-valued speed.
///
/// Exit codes: 0 success, 1 tolerance breach or failed property, 2 invalid
/// configuration or usage, 3 numerical or I/O failure.
#[derive(Debug, Parser)]
#[command(name = "gapdiff", version)]
struct Cli {
    /// Experiment file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV output (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Overrides the configured Monte-Carlo seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Size of the worker pool (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the configuration and the measure, and print a summary.
    Validate,
    /// Tabulate Phi, Psi and the flattened payoff on the grid.
    Phipsi,
    /// Monte-Carlo estimates at the probes.
    Simulate,
    /// PDE solution at every probe time.
    Solve,
    /// PDE, Monte-Carlo and closed form at the probes.
    Compare,
    /// Refinement study of the PDE and the Monte-Carlo standard error.
    Converge,
    /// Randomized property battery.
    Properties {
        /// Number of random cases (default: the configured `property_pairs`, else 24).
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Slope jumps and time regularity at the latest probe time.
    Regularity,
}

enum Failure {
    Breach(String),
    Error(HarnessError),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Error(e)
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| HarnessError::Usage("this command needs --config".into()))?;
    let mut cfg = parse_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    for w in cfg.growth_warnings() {
        eprintln!("{w}");
    }
    Ok(cfg)
}

fn write(table: &impl Table, out: &Path, name: &str) -> Result<(), HarnessError> {
    let path = out.join(name);
    table.write_csv_file(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    std::fs::create_dir_all(&cli.out).map_err(HarnessError::from)?;
    match &cli.command {
        Command::Validate => {
            let cfg = load(cli)?;
            println!("{}", describe(&cfg));
            match cfg.measure.growth_constant() {
                Ok(c) => println!("growth constant C1 = {c}"),
                Err(e) => println!("growth constant: {e}"),
            }
            println!("support gaps: {:?}", cfg.measure.support_gaps().gaps());
        }
        Command::Phipsi => {
            let cfg = load(cli)?;
            let rep = harness::run_phipsi(&cfg);
            match rep.growth_constant {
                Some(c) => println!("growth constant C1 = {c}"),
                None => println!("growth constant unbounded"),
            }
            write(&rep, &cli.out, "phipsi.csv")?;
        }
        Command::Simulate => {
            let cfg = load(cli)?;
            let rep = harness::run_simulate(&cfg)?;
            for e in &rep.estimates {
                println!(
                    "x = {}, t = {}: {} +/- {}{}",
                    e.x,
                    e.t,
                    e.mean,
                    e.stderr,
                    if e.flagged { " (boundary exits above threshold)" } else { "" }
                );
            }
            write(&rep, &cli.out, "simulate.csv")?;
        }
        Command::Solve => {
            let cfg = load(cli)?;
            write(&harness::run_solve(&cfg)?, &cli.out, "solve.csv")?;
        }
        Command::Compare => {
            let cfg = load(cli)?;
            let rep = harness::run_compare(&cfg)?;
            println!("{}", describe(&cfg));
            write(&rep, &cli.out, "compare.csv")?;
            let breaches = rep.breaches();
            if !breaches.is_empty() {
                let lines: Vec<String> = breaches
                    .iter()
                    .map(|r| {
                        format!(
                            "x = {}, t = {}: z = {:.3}, pde error = {:?}",
                            r.x, r.t, r.z_score_mc, r.abs_error_pde
                        )
                    })
                    .collect();
                return Err(Failure::Breach(lines.join("\n")));
            }
        }
        Command::Converge => {
            let cfg = load(cli)?;
            let rep = harness::run_convergence(&cfg)?;
            for r in &rep.rows {
                println!(
                    "{:?} level {}: metric {:.3e}, order {}",
                    r.kind,
                    r.level,
                    r.metric,
                    r.order.map(|o| format!("{o:.3}")).unwrap_or_else(|| "-".into())
                );
            }
            write(&rep, &cli.out, "convergence.csv")?;
        }
        Command::Properties { pairs } => {
            let cfg = cli.config.as_ref().map(|_| load(cli)).transpose()?;
            let pairs = pairs
                .or(cfg.as_ref().map(|c| c.property_pairs))
                .unwrap_or(24);
            let seed = cli.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
            let rep = harness::run_properties(pairs, seed)?;
            for s in rep.suites() {
                println!(
                    "{s}: {}",
                    if rep.suite_passed(s) { "pass" } else { "FAIL" }
                );
            }
            write(&rep, &cli.out, "properties.csv")?;
            if !rep.all_passed() {
                let dump = rep.counterexamples.join("\n");
                std::fs::write(cli.out.join("counterexamples.txt"), &dump)
                    .map_err(HarnessError::from)?;
                return Err(Failure::Breach(dump));
            }
        }
        Command::Regularity => {
            let cfg = load(cli)?;
            write(&harness::run_regularity(&cfg)?, &cli.out, "regularity.csv")?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Breach(msg)) => {
            eprintln!("tolerance breach:\n{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            match e {
                HarnessError::Config(_) | HarnessError::Usage(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
