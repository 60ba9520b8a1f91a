use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seir_oc::direct::{finite_difference_partial, Control};
use seir_oc::io::{plot_script, read_solution, summary_path, write_csv, write_solution};
use seir_oc::scenario::DEFAULT_STEP;
use seir_oc::{
    compare_solutions, objective_gradient, parse_scenario, simulate, solve_fbsm,
    solve_projected_gradient, ControlVariant, DirectConfig, FbsmConfig, InitialGuess, ProblemId,
    Scenario, SolutionFeatures, TimeGrid,
};

const EXIT_INPUT: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;
const EXIT_GRADCHECK: u8 = 5;
const EXIT_NUMERICAL: u8 = 6;

#[derive(Parser)]
#[command(name = "seir-oc", version, about = "Optimal vaccination and plasma control of an SEIR epidemic")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the uncontrolled model.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Solve one of the optimal control problems.
    Solve {
        #[arg(long, value_parser = parse_problem)]
        problem: ProblemId,
        #[arg(long, value_enum, default_value_t = MethodArg::Fbsm)]
        method: MethodArg,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        output: OutputArgs,
        #[arg(long, value_enum, default_value_t = InitArg::Zero)]
        init: InitArg,
        /// Seed for `--init random`.
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Weight of the new controls in each sweep update.
        #[arg(long, default_value_t = 0.5)]
        fbsm_damping: f64,
        /// Stopping tolerance (default 1e-4 for fbsm, 1e-5 for direct).
        #[arg(long)]
        tol: Option<f64>,
        /// Sweep or gradient-step limit (default 1000 for fbsm, 5000 for direct).
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Compare two solution CSVs written by `solve`.
    Compare { a: PathBuf, b: PathBuf },
    /// Check adjoint gradients against central finite differences.
    Gradcheck {
        /// Problem to check; all five when omitted.
        #[arg(long, value_parser = parse_problem)]
        problem: Option<ProblemId>,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Random coordinates per problem.
        #[arg(long, default_value_t = 20)]
        coords: usize,
        #[arg(long, default_value_t = 1e-5)]
        delta: f64,
        /// Largest acceptable relative error.
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// `key = value` scenario file; defaults apply to omitted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the final time; the step stays 0.01.
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Args)]
struct OutputArgs {
    /// Solution CSV; summary and scenario files are written next to it.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write a matplotlib script that plots the CSV.
    #[arg(long)]
    plot: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Fbsm,
    Direct,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Zero,
    Max,
    Random,
}

fn parse_problem(s: &str) -> Result<ProblemId, String> {
    s.parse().map_err(|_| format!("expected one of oc1..oc5, got `{s}`"))
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<seir_oc::Error>() {
            Some(seir_oc::Error::SimplexDrift { .. } | seir_oc::Error::AdjointDivergence { .. }) => {
                EXIT_NUMERICAL
            }
            _ => EXIT_INPUT,
        };
        Self { code, error }
    }
}

impl From<seir_oc::Error> for Failure {
    fn from(error: seir_oc::Error) -> Self {
        anyhow::Error::from(error).into()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate { scenario, output } => run_simulate(&load_scenario(&scenario)?, &output),
        Command::Solve {
            problem,
            method,
            scenario,
            output,
            init,
            seed,
            fbsm_damping,
            tol,
            max_iter,
        } => {
            let scenario = load_scenario(&scenario)?;
            let initial = match init {
                InitArg::Zero => InitialGuess::Zero,
                InitArg::Max => InitialGuess::Max,
                InitArg::Random => InitialGuess::Random { seed },
            };
            let report = match method {
                MethodArg::Fbsm => {
                    let defaults = FbsmConfig::default();
                    let cfg = FbsmConfig {
                        damping: fbsm_damping,
                        tol: tol.unwrap_or(defaults.tol),
                        max_sweeps: max_iter.unwrap_or(defaults.max_sweeps),
                        initial,
                    };
                    solve_fbsm(&scenario, problem, &cfg)?
                }
                MethodArg::Direct => {
                    let defaults = DirectConfig::default();
                    let cfg = DirectConfig {
                        tol: tol.unwrap_or(defaults.tol),
                        max_iter: max_iter.unwrap_or(defaults.max_iter),
                        initial,
                        ..defaults
                    };
                    solve_projected_gradient(&scenario, problem, &cfg)?
                }
            };
            let csv = output
                .output
                .clone()
                .unwrap_or_else(|| PathBuf::from(format!("{problem}_{}.csv", report.method)));
            let summary = write_solution(&report, &csv).with_context(|| format!("writing {}", csv.display()))?;
            write_extras(&scenario, &csv, &output, &format!("{problem} ({})", report.method))?;
            println!("objective = {:e}", report.objective);
            println!("converged = {}", report.converged);
            println!("iterations = {}", report.iterations);
            println!("stationarity_residual = {:e}", report.stationarity_residual);
            println!("wrote {} and {}", csv.display(), summary.display());
            if !report.converged {
                return Err(Failure {
                    code: EXIT_NOT_CONVERGED,
                    error: anyhow!(
                        "{problem} did not converge in {} iterations (residual {:e})",
                        report.iterations,
                        report.stationarity_residual
                    ),
                });
            }
            Ok(())
        }
        Command::Compare { a, b } => {
            let load = |p: &Path| {
                read_solution(p).with_context(|| {
                    format!("reading {} and {}", p.display(), summary_path(p).display())
                })
            };
            let (ra, rb) = (load(&a)?, load(&b)?);
            let m = compare_solutions(&ra, &rb)?;
            println!("objective_gap = {:e}", m.objective_gap);
            println!("control_l2_distance = {:e}", m.control_l2_distance);
            print_features("a", &m.a);
            print_features("b", &m.b);
            Ok(())
        }
        Command::Gradcheck {
            problem,
            scenario,
            seed,
            coords,
            delta,
            threshold,
        } => {
            let scenario = load_scenario(&scenario)?;
            let problems = problem.map_or(ProblemId::ALL.to_vec(), |p| vec![p]);
            let worst = gradcheck(&scenario, &problems, seed, coords, delta)?;
            println!("max_relative_error = {worst:e}");
            if worst >= threshold {
                return Err(Failure {
                    code: EXIT_GRADCHECK,
                    error: anyhow!("relative error {worst:e} exceeds {threshold:e}"),
                });
            }
            Ok(())
        }
    }
}

fn load_scenario(args: &ScenarioArgs) -> anyhow::Result<Scenario> {
    let mut scenario = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_scenario(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => Scenario::default(),
    };
    if let Some(t_end) = args.horizon {
        let t0 = scenario.grid.t0();
        let n_steps = ((t_end - t0) / DEFAULT_STEP).round().max(1.0) as usize;
        scenario.grid = TimeGrid::new(t0, t_end, n_steps).context("--horizon")?;
    }
    Ok(scenario)
}

fn write_extras(scenario: &Scenario, csv: &Path, output: &OutputArgs, title: &str) -> anyhow::Result<()> {
    let echo = csv.with_extension("scenario");
    fs::write(&echo, scenario.to_config()).with_context(|| format!("writing {}", echo.display()))?;
    if output.plot {
        let script = csv.with_extension("plot.py");
        let name = csv.file_name().and_then(|n| n.to_str()).unwrap_or("solution.csv");
        fs::write(&script, plot_script(name, title))
            .with_context(|| format!("writing {}", script.display()))?;
        println!("plot script: {}", script.display());
    }
    Ok(())
}

fn run_simulate(scenario: &Scenario, output: &OutputArgs) -> Result<(), Failure> {
    let (traj, signal) = simulate(scenario)?;
    let csv = output.output.clone().unwrap_or_else(|| PathBuf::from("simulate.csv"));
    let file = fs::File::create(&csv).with_context(|| format!("writing {}", csv.display()))?;
    write_csv(std::io::BufWriter::new(file), &traj, &signal, None)?;
    let end = traj.terminal();
    let summary = format!(
        "t_end = {}\ns = {:e}\ne = {:e}\ni = {:e}\nr = {:e}\nmax_i = {:e}\n",
        traj.grid.t_end(),
        end.s,
        end.e,
        end.i,
        end.r,
        traj.max_infected()
    );
    let summary_file = summary_path(&csv);
    fs::write(&summary_file, &summary).with_context(|| format!("writing {}", summary_file.display()))?;
    write_extras(scenario, &csv, output, "uncontrolled")?;
    print!("{summary}");
    println!("wrote {} and {}", csv.display(), summary_file.display());
    Ok(())
}

fn print_features(tag: &str, f: &SolutionFeatures) {
    println!("peak_time_u_{tag} = {}", f.peak_time_u);
    println!("peak_time_p_{tag} = {}", f.peak_time_p);
    println!("max_i_{tag} = {:e}", f.max_i);
    println!("terminal_r_{tag} = {:e}", f.terminal_r);
}

fn gradcheck(
    scenario: &Scenario,
    problems: &[ProblemId],
    seed: u64,
    coords: usize,
    delta: f64,
) -> anyhow::Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for &id in problems {
        let signal = InitialGuess::Random { seed: rng.gen() }.build(scenario.grid, id, &scenario.params);
        let grad = objective_gradient(&signal, scenario, id)?;
        let mut local = 0.0f64;
        for _ in 0..coords {
            let node = rng.gen_range(0..scenario.grid.len());
            let control = match id.variant() {
                ControlVariant::PlasmaOnly => Control::Plasma,
                ControlVariant::Both if rng.gen_bool(0.5) => Control::Plasma,
                _ => Control::Vaccination,
            };
            let fd = finite_difference_partial(&signal, scenario, id, control, node, delta)?;
            let analytic = match control {
                Control::Vaccination => grad.du[node],
                Control::Plasma => grad.dp[node],
            };
            let scale = analytic.abs().max(fd.abs());
            let rel = if scale == 0.0 { 0.0 } else { (analytic - fd).abs() / scale };
            local = local.max(rel);
        }
        println!("{id}: max_relative_error = {local:e} over {coords} coordinates");
        worst = worst.max(local);
    }
    Ok(worst)
}
