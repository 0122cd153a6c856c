//! Command-line front end.
//!
//! Exit status: 0 on success, 1 on configuration or I/O errors, 2 when a
//! modelling assumption is violated.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dynmax::bounds::{admc_bounds, admc_min_bounds, applicability_condition, edmc_bounds, edmc_min_bounds};
use dynmax::protocols::{Mode, ProtocolParams};
use dynmax::scenario::{load_scenario_file, Scenario};
use dynmax::simulator::{
    run, run_size_estimation, sweep, write_dse_outputs, write_run_outputs, write_sweep_csv, SweepGrid,
};
use dynmax::{Error, Result};

#[derive(Parser)]
#[command(name = "dynmax", version, about = "Dynamic min/max-consensus over open networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trace.csv, summary.json and plotdata/.
    Run(RunArgs),
    /// Print the closed-form bounds of one protocol.
    Bounds(BoundsArgs),
    /// Run a size-estimation scenario and compare with the expected estimate.
    SizeEst(SizeEstArgs),
    /// Re-run a scenario over a parameter grid.
    Sweep(SweepArgs),
    /// Load and check a scenario without running it.
    Validate(ScenarioArg),
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario file or preset name (line6_admc, line6_edmc, ba100_dse_admc, ba100_dse_edmc).
    #[arg(long = "scenario", value_name = "PATH")]
    flag: Option<String>,
    #[arg(value_name = "SCENARIO", conflicts_with = "flag")]
    positional: Option<String>,
}

impl ScenarioArg {
    fn load(&self) -> Result<Scenario> {
        let name = self
            .flag
            .as_deref()
            .or(self.positional.as_deref())
            .ok_or_else(|| Error::Config("no scenario given".into()))?;
        load_scenario_file(name)
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Output directory.
    #[arg(long, env = "DYNMAX_OUT", default_value = "dynmax-out")]
    out: PathBuf,
    /// Root seed override: an integer, or `auto` for a fresh random seed.
    #[arg(long)]
    seed: Option<String>,
}

impl OutputArgs {
    fn apply_seed(&self, scenario: &mut Scenario) -> Result<()> {
        match self.seed.as_deref() {
            None => {}
            Some("auto") => {
                scenario.seed = rand::random();
                eprintln!("seed: {}", scenario.seed);
                log::info!("using fresh seed {}", scenario.seed);
            }
            Some(s) => {
                scenario.seed = s
                    .parse()
                    .map_err(|_| Error::Config(format!("seed {s:?} is neither an integer nor `auto`")))?;
            }
        }
        // Seed-dependent checks (topology, random walks) run again.
        scenario.validate()
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SizeEstArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[command(flatten)]
    output: OutputArgs,
    /// Worst-case Monte Carlo trials for the first window (0 to skip).
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[command(flatten)]
    output: OutputArgs,
    /// Parameter grid, e.g. `alpha=0.03,0.06,0.12`, `depth=5,6,8` or `p=2,10,50`.
    #[arg(long)]
    grid: SweepGrid,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolName {
    Admc,
    Admin,
    Edmc,
    Edmin,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, value_enum)]
    protocol: ProtocolName,
    /// Network diameter.
    #[arg(long)]
    diameter: Option<usize>,
    /// Cascade depth of the exact protocols.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Per-tick slope bound of the inputs.
    #[arg(long, default_value_t = 0.0)]
    slope: f64,
    /// Largest initial distance of a state beyond the target extremum.
    #[arg(long, default_value_t = 0.0)]
    overshoot: f64,
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let mut scenario = args.scenario.load()?;
    args.output.apply_seed(&mut scenario)?;
    if scenario.is_size_estimation() {
        return size_estimation(&scenario, &args.output.out, 0);
    }
    let (trace, summary) = run(&scenario)?;
    write_run_outputs(&args.output.out, &scenario, &trace, &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary.bounds).expect("serializable"));
    println!(
        "empirical: transient {} convergence {} max error after convergence {}",
        summary.empirical_transient_time,
        summary
            .empirical_convergence_time
            .map_or("never".into(), |t| t.to_string()),
        summary
            .max_error_after_convergence
            .map_or("n/a".into(), |e| e.to_string()),
    );
    println!("wrote {}", args.output.out.display());
    Ok(())
}

fn size_estimation(scenario: &Scenario, out: &Path, trials: usize) -> Result<()> {
    let (trace, mut summary) = run_size_estimation(scenario)?;
    if trials > 0 {
        summary = summary.with_monte_carlo(trials)?;
    }
    write_dse_outputs(out, scenario, &trace, &summary)?;
    println!("protocol: {}", summary.protocol);
    println!("expected_closed_form: {}", summary.expected_closed_form);
    if let (Some(mean), Some((lo, hi))) = (summary.monte_carlo_mean, summary.ci99) {
        println!("monte_carlo_mean: {mean} (99% CI [{lo}, {hi}])");
    }
    for w in &summary.windows {
        println!(
            "window [{}, {}): n = {}, steady mean = {}",
            w.start,
            w.end,
            w.n_active,
            w.steady_mean.map_or("n/a".into(), |m| format!("{m:.3}"))
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_size_est(args: &SizeEstArgs) -> Result<()> {
    let mut scenario = args.scenario.load()?;
    args.output.apply_seed(&mut scenario)?;
    size_estimation(&scenario, &args.output.out, args.trials)
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let mut scenario = args.scenario.load()?;
    args.output.apply_seed(&mut scenario)?;
    let rows = sweep(&scenario, &args.grid);
    std::fs::create_dir_all(&args.output.out).map_err(|e| Error::Io {
        path: args.output.out.display().to_string(),
        source: e,
    })?;
    let path = args.output.out.join("sweep.csv");
    write_sweep_csv(&path, &args.grid, &rows)?;
    for r in &rows {
        match &r.error {
            Some(e) => println!("{}: failed: {e}", r.value),
            None => println!(
                "{}: eps_theory {:?} eps_emp {:?} tc_theory {:?} tc_emp {:?}",
                r.value, r.eps_theory, r.eps_emp, r.tc_theory, r.tc_emp
            ),
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_bounds(args: &BoundsArgs) -> Result<()> {
    let need = |v: Option<usize>, name: &str| v.ok_or_else(|| Error::Config(format!("--{name} is required")));
    let (params, report) = match args.protocol {
        ProtocolName::Admc | ProtocolName::Admin => {
            let alpha = args.alpha.ok_or_else(|| Error::Config("--alpha is required".into()))?;
            let diameter = need(args.diameter, "diameter")?;
            let (mode, report) = match args.protocol {
                ProtocolName::Admc => (Mode::Max, admc_bounds(diameter, alpha, args.slope, &[args.overshoot], 0.0)),
                _ => (Mode::Min, admc_min_bounds(diameter, alpha, args.slope, &[-args.overshoot], 0.0)),
            };
            (ProtocolParams::approximate(mode, alpha), report)
        }
        ProtocolName::Edmc | ProtocolName::Edmin => {
            let depth = need(args.depth, "depth")?;
            let (mode, mut report) = match args.protocol {
                ProtocolName::Edmc => (Mode::Max, edmc_bounds(depth, args.slope)),
                _ => (Mode::Min, edmc_min_bounds(depth, args.slope)),
            };
            if let Some(diameter) = args.diameter {
                report = report.with_dwell(u64::MAX, diameter, Some(depth));
            }
            (ProtocolParams::exact(mode, depth), report)
        }
    };
    println!("protocol: {}", params.label());
    println!("transient_time: {}", report.transient_time);
    match report.convergence_time {
        Some(t) => println!("convergence_time: {t}"),
        None => println!("convergence_time: unbounded"),
    }
    println!("tracking_bound: {}", report.tracking_bound);
    println!("steady_bound: {}", report.steady_bound);
    println!("assumptions_ok: {}", report.assumptions_ok);
    println!("applies_when: {}", applicability_condition(&params));
    for note in &report.assumption_notes {
        println!("note: {note}");
    }
    if report.assumptions_ok {
        Ok(())
    } else {
        Err(Error::Assumption(report.assumption_notes.join("; ")))
    }
}

fn cmd_validate(args: &ScenarioArg) -> Result<()> {
    let scenario = args.load()?;
    let timeline = scenario.realize()?;
    println!(
        "{}: {} ({} agents, diameter {}, {} network changes) ok",
        scenario.name,
        scenario.protocol.label(),
        timeline.initial.node_count(),
        timeline.initial.diameter()?,
        timeline.changes.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::SizeEst(a) => cmd_size_est(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_assumption_violation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
