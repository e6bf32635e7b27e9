//! `relayflow` command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::eval::{evaluate, fmt6, mfl_fidelity, EvalReport};
use super::pipeline::{dataset_options, gl_hyper, mfl_hyper, run_trajectories};
use super::synth::{synth_check, SynthFunction, SynthOptions};
use super::train::{mfl_relative_errors, split_by_deployment, train_gl, train_mfl};
use super::{gen_testset, read_scenarios, sample_scenarios, write_scenarios, ExperimentConfig, HarnessError, Scenario};
use crate::datagen::{generate_dataset_file, read_dataset, train_ppo, PpoAgent, Strategy};
use crate::models::{ActorModel, ConvKind, GlModel, MflModel, Model};
use crate::optimize::{deployment_max_flow, read_trajectories, write_trajectories, Method, Models, Trajectory};
use crate::rng::{stream, Purpose};

#[derive(Debug, Parser)]
#[command(name = "relayflow", version, about = "Relay placement against a jammer by max-flow learning")]
pub struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Flat TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set zeta=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Rlgp,
    Rw,
    Wcc,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TrainTarget {
    Mfl,
    Gl,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LayerArg {
    Graphconv,
    FirstOrder,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Mfl,
    Gl,
    Wcc,
    Hybrid,
    Rl,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthArg {
    F1,
    F2,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample test deployments (jammer positions outside the guard zones).
    GenTestset {
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a labelled snapshot dataset.
    Datagen {
        strategy: StrategyArg,
        /// Number of training deployments (defaults to the config value).
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Keep deployments already complete in `out`.
        #[arg(long)]
        resume: bool,
        /// For RLGP: where to store the trained actor/critic checkpoints.
        #[arg(long)]
        agent_dir: Option<PathBuf>,
    },
    /// Train the MFL or GL network on a dataset.
    Train {
        target: TrainTarget,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "graphconv")]
        layer: LayerArg,
        #[arg(long)]
        epochs: Option<usize>,
        /// Per-epoch loss log (CSV).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Train a PPO actor/critic pair.
    PpoTrain {
        /// Start deployments; sampled training scenarios when absent.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run one placement method on every test deployment.
    Optimize {
        method: MethodArg,
        #[arg(long)]
        testset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mfl: Option<PathBuf>,
        #[arg(long)]
        gl: Option<PathBuf>,
        #[arg(long)]
        actor: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Compare trajectory files against a baseline.
    Evaluate {
        /// `LABEL=PATH`, or a bare path labelled by its method.
        #[arg(long = "traj", required = true)]
        trajectories: Vec<String>,
        #[arg(long, default_value = "wcc")]
        baseline: String,
        /// MFL checkpoint for the model-fidelity statistics.
        #[arg(long)]
        mfl: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit a synthetic function and report value/derivative errors.
    Synthcheck {
        function: SynthArg,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Print the exact max-flow of each deployment in a file.
    Maxflow {
        #[arg(long)]
        deployments: PathBuf,
    },
    /// Train GraphConv and first-order MFL variants and compare them.
    Ablation {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        testset: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Parses `argv`, runs the command, and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, body).map_err(|e| HarnessError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn load_model<M: Model>(path: &Path) -> Result<M, HarnessError> {
    if !path.exists() {
        return Err(HarnessError::Usage(format!("{}: file not found", path.display())));
    }
    Ok(M::load(path, None)?)
}

fn loss_csv(losses: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", fmt6(*l)));
    }
    out
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    let mut cfg = ExperimentConfig::load(cli.global.config.as_deref(), &cli.global.overrides)?;
    if let Some(seed) = cli.global.seed {
        cfg.seed = seed;
    }
    let params = cfg.channel();
    match cli.command {
        Command::GenTestset { count, out } => {
            let set = gen_testset(&cfg, count.unwrap_or(cfg.test_deployments))?;
            write_scenarios(&out, &set)?;
            println!("wrote {} deployments to {}", set.len(), out.display());
        }
        Command::Datagen { strategy, count, out, resume, agent_dir } => {
            let scenarios = sample_scenarios(&cfg, Purpose::TrainSet, count.unwrap_or(cfg.train_deployments))?;
            let strategy = match strategy {
                StrategyArg::Rlgp => Strategy::Rlgp,
                StrategyArg::Rw => Strategy::Rw,
                StrategyArg::Wcc => Strategy::Wcc,
            };
            let agent = if strategy == Strategy::Rlgp {
                let agent = train_agent(&cfg, &scenarios)?;
                if let Some(dir) = &agent_dir {
                    save_agent(&agent, dir)?;
                }
                Some(agent)
            } else {
                None
            };
            let opts = dataset_options(&cfg);
            let n = generate_dataset_file(&out, strategy, &params, &scenarios, &opts, agent.as_ref(), resume)?;
            println!("wrote {n} samples to {}", out.display());
        }
        Command::Train { target, data, out, layer, epochs, log } => {
            let samples = read_dataset(&data)?;
            let kind = match layer {
                LayerArg::Graphconv => ConvKind::GraphConv,
                LayerArg::FirstOrder => ConvKind::FirstOrder,
            };
            let mut rng = stream(cfg.seed, Purpose::ModelInit, 0);
            let report = match target {
                TrainTarget::Mfl => {
                    let (train, held) = split_by_deployment(&samples, cfg.holdout_fraction, cfg.seed);
                    let mut hyper = mfl_hyper(&cfg);
                    hyper.epochs = epochs.unwrap_or(hyper.epochs);
                    let mut model = MflModel::new(kind, &mut rng);
                    let report = train_mfl(&mut model, &params, &train, &hyper, |_, _| {})?;
                    model.save(&out)?;
                    if !held.is_empty() {
                        let errs = mfl_relative_errors(&model, &params, &held)?;
                        let f = super::eval::fidelity_from(&errs);
                        println!(
                            "held-out samples {}: median rel err {}, avg rel err {}",
                            f.count,
                            fmt6(f.median_rel_err),
                            fmt6(f.avg_rel_err)
                        );
                    }
                    report
                }
                TrainTarget::Gl => {
                    let mut hyper = gl_hyper(&cfg);
                    hyper.epochs = epochs.unwrap_or(hyper.epochs);
                    let mut model = GlModel::new(kind, &mut rng);
                    let report = train_gl(&mut model, &params, &samples, &hyper, |_, _| {})?;
                    model.save(&out)?;
                    report
                }
            };
            if let Some(log) = log {
                write_file(&log, &loss_csv(&report.epoch_losses))?;
            }
            if let Some(last) = report.epoch_losses.last() {
                println!("final training loss {}", fmt6(*last));
            }
        }
        Command::PpoTrain { scenarios, count, epochs, out_dir } => {
            let pool = match scenarios {
                Some(p) => read_scenarios(&p)?,
                None => sample_scenarios(&cfg, Purpose::TrainSet, count.unwrap_or(cfg.train_deployments))?,
            };
            if let Some(e) = epochs {
                cfg.ppo_max_epochs = e;
            }
            let agent = train_agent(&cfg, &pool)?;
            save_agent(&agent, &out_dir)?;
        }
        Command::Optimize { method, testset, out, mfl, gl, actor, steps } => {
            let scenarios = read_scenarios(&testset)?;
            if let Some(s) = steps {
                cfg.horizon = s;
            }
            let method = match method {
                MethodArg::Mfl => Method::Mfl,
                MethodArg::Gl => Method::Gl,
                MethodArg::Wcc => Method::Wcc,
                MethodArg::Hybrid => Method::Hybrid,
                MethodArg::Rl => Method::Rl,
            };
            let mfl: Option<MflModel> = mfl.as_deref().map(load_model).transpose()?;
            let gl: Option<GlModel> = gl.as_deref().map(load_model).transpose()?;
            let actor: Option<ActorModel> = actor.as_deref().map(load_model).transpose()?;
            let models = Models { mfl: mfl.as_ref(), gl: gl.as_ref(), actor: actor.as_ref() };
            let trajs = run_trajectories(&cfg, method, models, &scenarios)?;
            write_trajectories(&out, &trajs)?;
            let mean_final = trajs.iter().map(Trajectory::final_flow).sum::<f64>() / trajs.len().max(1) as f64;
            println!("{method}: {} trajectories, mean final max-flow {}", trajs.len(), fmt6(mean_final));
        }
        Command::Evaluate { trajectories, baseline, mfl, out_dir } => {
            let mut runs: Vec<(String, Vec<Trajectory>)> = Vec::new();
            for spec in &trajectories {
                let (label, path) = match spec.split_once('=') {
                    Some((l, p)) => (Some(l.to_string()), PathBuf::from(p)),
                    None => (None, PathBuf::from(spec)),
                };
                let trajs = read_trajectories(&path)?;
                let label = label
                    .or_else(|| trajs.first().map(|t| t.method.name().to_string()))
                    .ok_or_else(|| HarnessError::Data(format!("{}: no trajectories", path.display())))?;
                runs.push((label, trajs));
            }
            let baseline = if runs.iter().any(|(l, _)| *l == baseline) {
                baseline
            } else if runs.len() == 1 {
                runs[0].0.clone()
            } else {
                return Err(HarnessError::Usage(format!("baseline {baseline:?} not among the trajectory labels")));
            };
            let mut report: EvalReport = evaluate(&runs, &baseline)?;
            if let Some(path) = mfl {
                let model: MflModel = load_model(&path)?;
                let mfl_runs = runs
                    .iter()
                    .find(|(_, t)| t.first().is_some_and(|t| t.method == Method::Mfl))
                    .unwrap_or(&runs[0]);
                report.fidelity = Some(mfl_fidelity(&model, &params, &mfl_runs.1)?);
            }
            report.write(&out_dir)?;
            print!("{}", report.summary_text());
        }
        Command::Synthcheck { function, samples, epochs, out_dir } => {
            let f = match function {
                SynthArg::F1 => SynthFunction::F1,
                SynthArg::F2 => SynthFunction::F2,
            };
            let opts = SynthOptions {
                samples: samples.unwrap_or(cfg.synth_samples),
                test_samples: cfg.synth_test_samples,
                epochs: epochs.unwrap_or(cfg.synth_epochs),
                lr: cfg.lr_synth,
                batch_size: cfg.batch_size,
                seed: cfg.seed,
            };
            let r = synth_check(f, &opts, |_, _| {})?;
            let text = format!(
                "function {f}\nvalue rel err: mean {} max {}\nderivative rel err: max {} fraction <= 0.15 {}\n",
                fmt6(r.mean_value_error()),
                fmt6(r.max_value_error()),
                fmt6(r.max_derivative_error()),
                fmt6(r.derivative_fraction_within(0.15))
            );
            if let Some(dir) = out_dir {
                ensure_dir(&dir)?;
                write_file(&dir.join("synth_summary.txt"), &text)?;
                let mut csv = String::from("sample,value_rel_err\n");
                for (i, e) in r.value_rel_errors.iter().enumerate() {
                    csv.push_str(&format!("{i},{}\n", fmt6(*e)));
                }
                write_file(&dir.join("synth_values.csv"), &csv)?;
                write_file(&dir.join("synth_loss.csv"), &loss_csv(&r.epoch_losses))?;
            }
            print!("{text}");
        }
        Command::Maxflow { deployments } => {
            for s in read_scenarios(&deployments)? {
                println!("{} {}", s.id, deployment_max_flow(&params, &s.deployment)?);
            }
        }
        Command::Ablation { data, testset, out_dir } => {
            let samples = read_dataset(&data)?;
            let scenarios = read_scenarios(&testset)?;
            let report = super::ablation::ablation_layer(&cfg, &samples, &scenarios)?;
            report.write(&out_dir)?;
            print!("{}", report.summary_text());
        }
    }
    Ok(())
}

fn train_agent(cfg: &ExperimentConfig, pool: &[Scenario]) -> Result<PpoAgent, HarnessError> {
    let ppo = cfg.ppo();
    let deployments: Vec<_> = pool.iter().map(|s| s.deployment.clone()).collect();
    let mut agent = PpoAgent::new(cfg.relay_init.len(), &ppo);
    let report = train_ppo(&mut agent, &cfg.channel(), &deployments, &ppo, |e, r| {
        eprintln!("ppo epoch {e}: mean reward {}", fmt6(r));
    })?;
    eprintln!(
        "ppo finished after {} epochs ({})",
        report.epoch_rewards.len(),
        if report.converged { "converged" } else { "epoch cap" }
    );
    Ok(agent)
}

fn save_agent(agent: &PpoAgent, dir: &Path) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    agent.actor.save(&dir.join("actor.ckpt"))?;
    agent.critic.save(&dir.join("critic.ckpt"))?;
    Ok(())
}

