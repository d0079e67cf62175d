mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mqms_core::alpha::{build_vhat, wn_count};
use mqms_core::fairness::{FairnessProblem, FwOptions, StepRule, Utility, UtilitySpec};
use mqms_core::fluid::{boundary_trace, TraceOptions};
use mqms_core::model::{parse_arrivals, ModelDescriptor};
use mqms_core::oracle::oracle_check;
use mqms_core::sim::{delay_bound, run, summarize, ArrivalModel, Policy, SimConfig};
use mqms_core::{
    build_region, exec, membership_margin, Caps, ChannelModel, ContinuousChannelModel,
    DiscreteChannelModel, Error, Execution, RegionOptions, TieRule, Verdict,
};
use serde_json::{json, Value};

use output::{cell, emit, RunConfig};

/// Stability regions, Max-Weight simulation and fair rate allocation for
/// multi-queue multi-server systems.
#[derive(Parser)]
#[command(name = "mqms", version)]
struct Cli {
    /// Worker threads for parallel stages (outputs do not depend on it).
    #[arg(long, env = "MQMS_THREADS", global = true)]
    threads: Option<usize>,

    /// Cap on enumerated channel states.
    #[arg(long, global = true, default_value_t = Caps::default().state_space)]
    state_cap: u64,

    /// Cap on candidate directions scanned while building V̂.
    #[arg(long, global = true, default_value_t = Caps::default().vhat_candidates)]
    vhat_cap: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the direction set V̂ for N queues and capacity M.
    Vhat {
        #[arg(long = "N")]
        n: usize,
        #[arg(long = "M")]
        m: u32,
    },
    /// Compute every inequality of the stability region.
    Region {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report the margin and verdict for a rate vector.
    Check {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated arrival rates.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        lambda: Vec<f64>,
    },
    /// Simulate the queues under a scheduling policy.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        arrivals: PathBuf,
        #[arg(long, value_enum, default_value_t = PolicyArg::Mw)]
        policy: PolicyArg,
        #[arg(long, default_value_t = 100_000)]
        slots: u64,
        /// Base seed; replication r uses seed + r.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, value_enum, default_value_t = TieArg::Lowest)]
        tie: TieArg,
        /// Per-slot CSV trace of replication 0.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the summary to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the average-occupancy bound for an arrival model.
    DelayBound {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        arrivals: PathBuf,
    },
    /// Trace the upper boundary of a two-queue fluid region.
    FluidBoundary {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 181)]
        directions: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of λ₁ grid points.
        #[arg(long, default_value_t = 201)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maximize a sum of utilities over the stability region.
    Fairness {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = UtilityArg::Log)]
        utility: UtilityArg,
        /// Per-queue weights for the linear utility.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        /// Shift inside the logarithm.
        #[arg(long, default_value_t = Utility::DEFAULT_LOG_EPS)]
        eps: f64,
        /// Fairness exponent for alpha-fair utilities.
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        /// Per-queue admission caps (default uncapped).
        #[arg(long, value_delimiter = ',')]
        caps: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iters: usize,
        #[arg(long, value_enum, default_value_t = StepArg::LineSearch)]
        step: StepArg,
    },
    /// Cross-check the support function against brute force.
    OracleCheck {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Mw,
    AsLcq,
}

#[derive(Clone, Copy, ValueEnum)]
enum TieArg {
    Lowest,
    Highest,
}

#[derive(Clone, Copy, ValueEnum)]
enum UtilityArg {
    Log,
    Linear,
    AlphaFair,
}

#[derive(Clone, Copy, ValueEnum)]
enum StepArg {
    LineSearch,
    Fixed,
}

#[derive(Debug)]
pub enum Failure {
    /// Bad input; exit code 2.
    Validation(String),
    /// Anything else; exit code 1.
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFiniteGradient(_) => Failure::Internal(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::Validation(format!("cannot read {}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<(ModelDescriptor, ChannelModel), Failure> {
    let desc = ModelDescriptor::from_json(&read(path)?)?;
    let model = desc.into_model()?;
    Ok((desc, model))
}

fn load_discrete(path: &Path) -> Result<(ModelDescriptor, DiscreteChannelModel), Failure> {
    match load_model(path)? {
        (desc, ChannelModel::Discrete(m)) => Ok((desc, m)),
        _ => Err(Failure::Validation(
            "this command needs a discrete channel model".into(),
        )),
    }
}

fn load_continuous(path: &Path) -> Result<(ModelDescriptor, ContinuousChannelModel), Failure> {
    match load_model(path)? {
        (desc, ChannelModel::Continuous(m)) => Ok((desc, m)),
        _ => Err(Failure::Validation(
            "this command needs a continuous channel model".into(),
        )),
    }
}

fn load_arrivals(path: &Path) -> Result<ArrivalModel, Failure> {
    Ok(parse_arrivals(&read(path)?)?)
}

fn descriptor_json(desc: &ModelDescriptor) -> Value {
    serde_json::to_value(desc).expect("descriptor serializes")
}

fn start(command: &str, caps: &Caps, fields: Value) -> RunConfig {
    let mut value = json!({ "command": command, "caps": caps });
    if let (Value::Object(base), Value::Object(extra)) = (&mut value, fields) {
        base.extend(extra);
    }
    let cfg = RunConfig::new(value);
    cfg.announce();
    cfg
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        exec::set_thread_count(threads);
    }
    let caps = Caps {
        state_space: cli.state_cap,
        vhat_candidates: cli.vhat_cap,
    };
    match dispatch(cli.command, &caps) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command, caps: &Caps) -> Outcome {
    match command {
        Command::Vhat { n, m } => vhat(n, m, caps),
        Command::Region { model, format, out } => region(&model, format, out.as_deref(), caps),
        Command::Check { model, lambda } => check(&model, &lambda, caps),
        Command::Simulate {
            model,
            arrivals,
            policy,
            slots,
            seed,
            reps,
            tie,
            trace,
            out,
        } => {
            let policy = match policy {
                PolicyArg::Mw => Policy::Mw,
                PolicyArg::AsLcq => Policy::AsLcq,
            };
            let tie = match tie {
                TieArg::Lowest => TieRule::LowestIndex,
                TieArg::Highest => TieRule::HighestIndex,
            };
            let cfg = SimConfig {
                slots,
                seed,
                replications: reps,
                tie,
                exec: Execution::default(),
                trace: trace.is_some(),
            };
            simulate(
                &model,
                &arrivals,
                policy,
                &cfg,
                trace.as_deref(),
                out.as_deref(),
                caps,
            )
        }
        Command::DelayBound { model, arrivals } => delay(&model, &arrivals, caps),
        Command::FluidBoundary {
            model,
            directions,
            samples,
            seed,
            grid,
            out,
        } => {
            let opts = TraceOptions {
                directions,
                samples,
                seed,
                grid,
                exec: Execution::default(),
            };
            fluid(&model, &opts, out.as_deref(), caps)
        }
        Command::Fairness {
            model,
            utility,
            weights,
            eps,
            alpha,
            caps: rate_caps,
            tol,
            max_iters,
            step,
        } => {
            let (desc, model) = load_discrete(&model)?;
            let n = model.num_queues();
            let utilities = match utility {
                UtilityArg::Log => vec![Utility::LogShifted { eps }; n],
                UtilityArg::AlphaFair => vec![Utility::AlphaFair { a: alpha }; n],
                UtilityArg::Linear => weights
                    .unwrap_or_else(|| vec![1.0; n])
                    .into_iter()
                    .map(|weight| Utility::WeightedLinear { weight })
                    .collect(),
            };
            let rate_caps = rate_caps.unwrap_or_else(|| vec![f64::INFINITY; n]);
            let opts = FwOptions {
                tol,
                max_iters,
                step: match step {
                    StepArg::LineSearch => StepRule::LineSearch,
                    StepArg::Fixed => StepRule::Fixed,
                },
                caps: *caps,
            };
            let cfg = start(
                "fairness",
                caps,
                json!({
                    "model": descriptor_json(&desc),
                    "utilities": utilities,
                    "rate_caps": rate_caps.iter().map(|c| c.is_finite().then_some(*c)).collect::<Vec<_>>(),
                    "tol": tol,
                    "max_iters": max_iters,
                    "step": format!("{:?}", opts.step),
                }),
            );
            let spec = UtilitySpec::new(utilities, rate_caps)?;
            let sol = FairnessProblem::new(&model, spec, caps)?.solve(&opts)?;
            if !sol.converged {
                eprintln!(
                    "warning: stopped after {} iterations with gap {}",
                    sol.iterations, sol.gap
                );
            }
            emit(
                &cfg.json(json!({
                    "r_star": sol.r_star.rates(),
                    "objective": sol.objective,
                    "gap": sol.gap,
                    "iterations": sol.iterations,
                    "converged": sol.converged,
                    "binding_constraints": sol.binding_constraints,
                })),
                None,
            )
        }
        Command::OracleCheck { model } => oracle(&model, caps),
    }
}

fn vhat(n: usize, m: u32, caps: &Caps) -> Outcome {
    let cfg = start("vhat", caps, json!({ "N": n, "M": m }));
    let set = build_vhat(m, n, caps, Execution::default())?;
    let wn = if n >= 2 { wn_count(m, n)? - 1 } else { 1 };
    emit(
        &cfg.json(json!({
            "N": n,
            "M": m,
            "vhat_size": set.len(),
            "wn_minus_zero": u64::try_from(wn).map_or_else(|_| Value::String(wn.to_string()), Value::from),
            "vhat": set,
        })),
        None,
    )
}

fn region(path: &Path, format: Format, out: Option<&Path>, caps: &Caps) -> Outcome {
    let (desc, model) = load_discrete(path)?;
    let cfg = start("region", caps, json!({ "model": descriptor_json(&desc) }));
    let opts = RegionOptions {
        caps: *caps,
        ..RegionOptions::default()
    };
    let region = build_region(&model, &opts)?;
    let text = match format {
        Format::Json => cfg.json(json!({
            "N": region.n,
            "inequalities": region
                .inequalities
                .iter()
                .map(|i| json!({ "alpha": i.alpha, "beta": i.beta }))
                .collect::<Vec<_>>(),
        })),
        Format::Csv => {
            let mut header: Vec<String> = (1..=region.n).map(|i| format!("alpha_{i}")).collect();
            header.push("beta".into());
            cfg.csv(
                &header,
                region.inequalities.iter().map(|i| {
                    let mut row: Vec<String> =
                        i.alpha.coords().iter().map(u64::to_string).collect();
                    row.push(cell(i.beta));
                    row
                }),
            )
        }
    };
    emit(&text, out)
}

fn check(path: &Path, lambda: &[f64], caps: &Caps) -> Outcome {
    let (desc, model) = load_discrete(path)?;
    let cfg = start(
        "check",
        caps,
        json!({ "model": descriptor_json(&desc), "lambda": lambda }),
    );
    let opts = RegionOptions {
        caps: *caps,
        ..RegionOptions::default()
    };
    let region = build_region(&model, &opts)?;
    let delta = membership_margin(&region, lambda)?;
    emit(
        &cfg.json(json!({
            "lambda": lambda,
            "delta": delta,
            "verdict": Verdict::from_margin(delta).as_str(),
        })),
        None,
    )
}

fn simulate(
    model_path: &Path,
    arrivals_path: &Path,
    policy: Policy,
    sim: &SimConfig,
    trace: Option<&Path>,
    out: Option<&Path>,
    caps: &Caps,
) -> Outcome {
    let (desc, model) = load_discrete(model_path)?;
    let arrivals = load_arrivals(arrivals_path)?;
    let cfg = start(
        "simulate",
        caps,
        json!({
            "model": descriptor_json(&desc),
            "arrivals": arrivals,
            "policy": format!("{policy:?}"),
            "slots": sim.slots,
            "seed": sim.seed,
            "reps": sim.replications,
            "tie": sim.tie,
        }),
    );
    let region = build_region(
        &model,
        &RegionOptions {
            caps: *caps,
            ..RegionOptions::default()
        },
    )?;
    let report = run(&model, &arrivals, policy, sim)?;
    let summary = summarize(&report, &region, &model, &arrivals)?;
    if let (Some(path), Some(rows)) = (trace, &report.trace) {
        let n = model.num_queues();
        let mut header = vec!["t".to_string()];
        for prefix in ["X", "served", "arrived"] {
            header.extend((1..=n).map(|i| format!("{prefix}_{i}")));
        }
        let text = cfg.csv(
            &header,
            rows.iter().map(|r| {
                std::iter::once(r.t)
                    .chain(r.queues.iter().copied())
                    .chain(r.served.iter().copied())
                    .chain(r.arrived.iter().copied())
                    .map(|v| v.to_string())
                    .collect()
            }),
        );
        emit(&text, Some(path))?;
    }
    let mut body = json!({
        "avg_aggregate_occupancy": summary.avg_aggregate_occupancy,
        "stderr_avg_aggregate_occupancy": summary.stderr_avg_aggregate_occupancy,
        "per_queue_avgs": summary.per_queue_avgs,
        "throughput": summary.throughput,
        "arrival_means": summary.arrival_means,
        "delta": summary.delta,
        "verdict": summary.verdict.as_str(),
        "replications": sim.replications,
        "slots": sim.slots,
        "seed": sim.seed,
    });
    if let Some(bound) = summary.bound {
        body["bound"] = json!(bound);
        body["bound_respected"] = json!(summary.bound_respected);
    }
    emit(&cfg.json(body), out)
}

fn delay(model_path: &Path, arrivals_path: &Path, caps: &Caps) -> Outcome {
    let (desc, model) = load_discrete(model_path)?;
    let arrivals = load_arrivals(arrivals_path)?;
    let cfg = start(
        "delay-bound",
        caps,
        json!({ "model": descriptor_json(&desc), "arrivals": arrivals }),
    );
    let region = build_region(
        &model,
        &RegionOptions {
            caps: *caps,
            ..RegionOptions::default()
        },
    )?;
    let delta = membership_margin(&region, &arrivals.means())?;
    let bound = delay_bound(
        model.num_queues(),
        arrivals.a_max_sq(),
        model.max_capacity(),
        model.num_servers(),
        delta,
    )?;
    emit(
        &cfg.json(json!({
            "delta": delta,
            "a_max_sq": arrivals.a_max_sq(),
            "bound": bound,
        })),
        None,
    )
}

fn fluid(path: &Path, opts: &TraceOptions, out: Option<&Path>, caps: &Caps) -> Outcome {
    let (desc, model) = load_continuous(path)?;
    let cfg = start(
        "fluid-boundary",
        caps,
        json!({
            "model": descriptor_json(&desc),
            "directions": opts.directions,
            "samples": opts.samples,
            "seed": opts.seed,
            "grid": opts.grid,
        }),
    );
    let curve = boundary_trace(&model, opts)?;
    let header = ["lambda1", "lambda2", "stderr"].map(String::from);
    let text = cfg.csv(
        &header,
        curve
            .points
            .iter()
            .map(|p| vec![cell(p.lambda1), cell(p.lambda2), cell(p.stderr)]),
    );
    emit(&text, out)
}

fn oracle(path: &Path, caps: &Caps) -> Outcome {
    let (desc, model) = load_discrete(path)?;
    let cfg = start(
        "oracle-check",
        caps,
        json!({ "model": descriptor_json(&desc) }),
    );
    let report = oracle_check(&model, caps)?;
    println!(
        "support_function == brute_force on {}/{} directions",
        report.agreeing, report.directions
    );
    println!(
        "max_abs_dev_brute_force {:e}",
        report.max_abs_dev_brute_force
    );
    if let Some(dev) = report.max_abs_dev_closed_form {
        println!("max_abs_dev_closed_form {dev:e}");
    }
    println!("config_hash {}", cfg.hash());
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Internal(
            "support function disagrees with the oracle".into(),
        ))
    }
}
