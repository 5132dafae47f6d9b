use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gridform::bench::compare;
use gridform::env::Scenario;
use gridform::grid::load_case;
use gridform::qnet::gradient_check;
use gridform::train::{evaluate, evaluation_scenarios, train, TrainConfig};
use gridform::{QNetwork64, TransformedGraph};

#[derive(Parser)]
#[command(
    name = "gridform",
    version,
    about = "Multi-microgrid formation with a convolutional deep Q-network"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write the training log and checkpoint.
    Train {
        #[arg(long)]
        case: PathBuf,
        /// Training configuration JSON; defaults apply to omitted fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on random scenarios and print summary metrics.
    Eval {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        scenarios: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Disable the do-nothing guard for infeasible proposals.
        #[arg(long)]
        no_guard: bool,
        /// Training configuration supplying reward and scenario settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the metrics JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Enumerate all switch configurations and count the feasible ones.
    Enumerate {
        #[arg(long)]
        case: PathBuf,
        /// Write the feasible configurations as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Compare the learned policy with the best static configuration.
    Compare {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Random scenario seed; the expected trajectories are used when omitted.
        #[arg(long)]
        scenario_seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for comparison.csv, comparison.json and voltage_profiles.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check Q-network gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        coordinates: usize,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn graph(path: &Path) -> Result<TransformedGraph> {
    let case = load_case(&read(path)?).with_context(|| format!("cannot load case {}", path.display()))?;
    Ok(TransformedGraph::new(case))
}

fn config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => {
            TrainConfig::from_json(&read(p)?).with_context(|| format!("cannot parse config {}", p.display()))
        }
        None => Ok(TrainConfig::default()),
    }
}

fn checkpoint(path: &Path) -> Result<QNetwork64> {
    QNetwork64::from_checkpoint(&read(path)?)
        .with_context(|| format!("cannot load checkpoint {}", path.display()))
}

fn check_shape(net: &QNetwork64, tg: &TransformedGraph) -> Result<()> {
    let expected = gridform::train::architecture_for(tg, gridform::qnet::KernelPreset::K3);
    if net.arch.width != expected.width || net.arch.outputs != expected.outputs {
        bail!(
            "checkpoint expects width {} and {} switches, case has width {} and {} switches",
            net.arch.width,
            net.arch.outputs,
            expected.width,
            expected.outputs
        );
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train {
            case,
            config: cfg,
            out,
            seed,
        } => {
            let tg = graph(&case)?;
            let mut cfg = config(cfg.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let trained = train::<f64>(&tg, &cfg)?;
            fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
            write(&out.join("training_log.csv"), &trained.log.to_csv_string())?;
            write(&out.join("checkpoint.json"), &trained.online.to_checkpoint())?;
            write(&out.join("config.json"), &serde_json::to_string_pretty(&cfg)?)?;
            let horizon = tg.case().horizon_steps;
            let last = trained.log.episodes.last().expect("at least one episode");
            println!("episodes: {}", trained.log.episodes.len());
            println!("gradient steps: {}", trained.gradient_steps);
            println!("final epsilon: {}", last.epsilon);
            match trained.log.sustained_at(horizon, 20) {
                Some(e) => println!("sustained {horizon}/{horizon} greedy survival from episode {e}"),
                None => println!("greedy survival not sustained"),
            }
            println!("wrote {}", out.display());
        }
        Command::Eval {
            case,
            checkpoint: ckpt,
            scenarios,
            seed,
            no_guard,
            config: cfg,
            out,
        } => {
            let tg = graph(&case)?;
            let net = checkpoint(&ckpt)?;
            check_shape(&net, &tg)?;
            let cfg = config(cfg.as_deref())?;
            let set = evaluation_scenarios::<f64>(&tg, scenarios, seed, &cfg.scenario);
            let metrics = evaluate(&net, &tg, &cfg.reward, &set, !no_guard)?;
            let json = metrics.to_json();
            println!("{json}");
            if let Some(p) = out {
                write(&p, &json)?;
            }
        }
        Command::Enumerate { case, csv } => {
            let tg = graph(&case)?;
            let k = tg.required_closed_count()?;
            let e = tg.enumerate_feasible()?;
            println!("switches: {}", tg.switch_count());
            println!("required closed: {k}");
            println!("total configurations: {}", e.tested);
            println!("feasible configurations: {}", e.count());
            if let Some(p) = csv {
                let file = fs::File::create(&p).with_context(|| format!("cannot write {}", p.display()))?;
                tg.write_configs_csv(file, &e.feasible)?;
            }
        }
        Command::Compare {
            case,
            checkpoint: ckpt,
            scenario_seed,
            config: cfg,
            out,
        } => {
            let tg = graph(&case)?;
            let net = checkpoint(&ckpt)?;
            check_shape(&net, &tg)?;
            let cfg = config(cfg.as_deref())?;
            let scenario = match scenario_seed {
                Some(s) => gridform::env::generate_scenario(&tg, s, &cfg.scenario),
                None => Scenario::nominal(&tg),
            };
            let report = compare(&net, &tg, &cfg.reward, &scenario)?;
            print!("{}", report.to_csv_string());
            println!("static topology: {}", report.static_topology);
            println!("shed energy dynamic: {} MWh", report.shed_energy_dynamic_mwh);
            println!("shed energy static: {} MWh", report.shed_energy_static_mwh);
            if let Some(dir) = out {
                fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
                write(&dir.join("comparison.csv"), &report.to_csv_string())?;
                write(&dir.join("comparison.json"), &report.summary_json())?;
                write(&dir.join("voltage_profiles.json"), &report.profiles_json())?;
            }
        }
        Command::Gradcheck { seed, coordinates } => {
            let g = gradient_check(seed, coordinates)?;
            println!(
                "coordinates: {} ({} in idle fc rows)",
                g.coordinates, g.zero_coordinates
            );
            println!("max relative error: {:e}", g.max_relative_error);
            println!("max idle-row gradient: {:e}", g.max_zero_gradient);
            if g.max_relative_error >= 1e-4 || g.max_zero_gradient != 0.0 {
                println!("FAIL");
                return Ok(ExitCode::FAILURE);
            }
            println!("PASS");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
