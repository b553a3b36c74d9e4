//! Command-line driver for the 3D floorplanning engine.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (parse/schema/IO),
//! 3 runtime failure.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sgf_core::config::RunConfig;
use sgf_core::env::{CanvasConfig, Env};
use sgf_core::model::{Mlp, Role, RtgStats};
use sgf_core::netlist::{parse_canonical, parse_gsrc, serialize_canonical, Netlist};
use sgf_core::pipeline::{
    best_of_n, bound_check, critic_error_study, dataset_stats, error_curve_csv, gen_random,
    make_prompt, read_trajectories, rollout, train, write_trajectories, Policy, TrainConfig,
    Trajectory,
};
use sgf_core::render::{render_svg, Placement};
use sgf_core::SgfError;

#[derive(Parser)]
#[command(name = "sgf", version, about = "3D floorplanning via spatially generalizing policies")]
struct Cli {
    /// TOML run configuration; command-line flags override file values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker count (accepted for interface stability; execution is serial).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CanvasArgs {
    /// Canvas dimensions as WxHxZ, e.g. 48x48x3.
    #[arg(long, value_name = "WxHxZ")]
    canvas: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate random complete-placement trajectories.
    Gen {
        #[arg(long, value_name = "FILE")]
        netlist: PathBuf,
        /// Number of episodes.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[command(flatten)]
        canvas: CanvasArgs,
    },
    /// Summarize the episode returns of a trajectory file.
    Stats {
        #[arg(long, value_name = "FILE")]
        traj: PathBuf,
        /// Write the mean/stddev summary as JSON.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Train the actor or critic on a trajectory file.
    Train {
        /// "actor" or "critic".
        #[arg(long)]
        role: String,
        #[arg(long, value_name = "FILE")]
        netlist: PathBuf,
        #[arg(long, value_name = "FILE")]
        traj: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        /// Learning rate; defaults to 5e-4 (actor) / 5e-3 (critic).
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[command(flatten)]
        canvas: CanvasArgs,
    },
    /// Place a netlist with trained models (best-of-n rollouts).
    Place {
        #[arg(long, value_name = "FILE")]
        netlist: PathBuf,
        #[arg(long, value_name = "FILE")]
        actor: PathBuf,
        #[arg(long, value_name = "FILE")]
        critic: PathBuf,
        /// Return statistics JSON from `stats --out`; defaults to mean 0 /
        /// stddev 1 (raw returns) when omitted.
        #[arg(long, value_name = "FILE")]
        stats: Option<PathBuf>,
        /// Candidate-set size of the nearest-neighbor projection.
        #[arg(long)]
        k: Option<usize>,
        /// Best-of-n rollout count.
        #[arg(long)]
        samples: Option<usize>,
        /// Return prompt as w,c,h; defaults to mean + 3 stddev on the
        /// wirelength component.
        #[arg(long, value_name = "W,C,H")]
        prompt: Option<String>,
        /// Placement JSON output.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// SVG floorplan output.
        #[arg(long, value_name = "FILE")]
        svg: Option<PathBuf>,
        #[command(flatten)]
        canvas: CanvasArgs,
    },
    /// Per-timestep critic error on held-out trajectories (CSV).
    Eval {
        #[arg(long, value_name = "FILE")]
        netlist: PathBuf,
        #[arg(long, value_name = "FILE")]
        critic: PathBuf,
        #[arg(long, value_name = "FILE")]
        traj: PathBuf,
        /// Return statistics JSON; defaults to statistics of `--traj`.
        #[arg(long, value_name = "FILE")]
        stats: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[command(flatten)]
        canvas: CanvasArgs,
    },
    /// Empirically check the action-similarity value bound (toy scale).
    BoundCheck {
        #[arg(long, value_name = "FILE")]
        netlist: PathBuf,
        #[arg(long, value_name = "FILE")]
        actor: PathBuf,
        #[arg(long, value_name = "FILE")]
        critic: PathBuf,
        #[arg(long, value_name = "FILE")]
        stats: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        /// Reward component the scalar objective sums: w, c, or h.
        #[arg(long, default_value = "w")]
        component: String,
        /// Number of seeded rollouts to check.
        #[arg(long, default_value_t = 20)]
        rollouts: usize,
        #[arg(long, value_name = "W,C,H")]
        prompt: Option<String>,
        /// CSV output; stdout when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[command(flatten)]
        canvas: CanvasArgs,
    },
    /// Render a placement JSON as an SVG floorplan.
    Render {
        #[arg(long, value_name = "FILE")]
        netlist: PathBuf,
        #[arg(long, value_name = "FILE")]
        placement: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Convert a GSRC bookshelf block/net pair to the canonical JSON format.
    Convert {
        #[arg(long, value_name = "FILE")]
        blocks: PathBuf,
        #[arg(long, value_name = "FILE")]
        nets: PathBuf,
        /// Maximum module dimension in cells after scaling.
        #[arg(long, default_value_t = 12)]
        max_dim: usize,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    return ExitCode::SUCCESS;
                }
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Engine(e)) => {
            eprintln!("error: {e}");
            let code = match e {
                SgfError::Parse { .. } | SgfError::Invalid(_) | SgfError::Io { .. } => 2,
                SgfError::IllegalAction(_) | SgfError::Runtime(_) => 3,
            };
            ExitCode::from(code)
        }
    }
}

enum CliError {
    Usage(String),
    Engine(SgfError),
}

impl From<SgfError> for CliError {
    fn from(e: SgfError) -> Self {
        CliError::Engine(e)
    }
}

type CliResult = Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read_file(path: &Path) -> Result<String, SgfError> {
    fs::read_to_string(path).map_err(|e| SgfError::io(path.display().to_string(), e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), SgfError> {
    fs::write(path, contents).map_err(|e| SgfError::io(path.display().to_string(), e))
}

fn load_netlist(path: &Path) -> Result<Netlist, SgfError> {
    parse_canonical(&read_file(path)?)
}

fn load_trajectories(path: &Path) -> Result<Vec<Trajectory>, SgfError> {
    let f = fs::File::open(path).map_err(|e| SgfError::io(path.display().to_string(), e))?;
    read_trajectories(BufReader::new(f))
}

fn load_model(path: &Path, role: Role) -> Result<Mlp, SgfError> {
    let net = Mlp::from_checkpoint(&read_file(path)?)?;
    if net.role() != role {
        return Err(SgfError::Invalid(format!(
            "{} holds a {} checkpoint, expected {}",
            path.display(),
            net.role().as_str(),
            role.as_str()
        )));
    }
    Ok(net)
}

fn load_stats(path: Option<&PathBuf>) -> Result<RtgStats, SgfError> {
    match path {
        Some(p) => serde_json::from_str(&read_file(p)?)
            .map_err(|e| SgfError::Invalid(format!("stats file: {e}"))),
        None => Ok(RtgStats::new([0.0; 3], [1.0; 3])),
    }
}

fn parse_canvas(spec: &str) -> Result<CanvasConfig, CliError> {
    let parts: Vec<&str> = spec.split('x').collect();
    if parts.len() != 3 {
        return Err(usage(format!("--canvas expects WxHxZ, got {spec:?}")));
    }
    let dims: Vec<usize> = parts
        .iter()
        .map(|p| p.parse().map_err(|_| usage(format!("--canvas expects integers, got {spec:?}"))))
        .collect::<Result<_, _>>()?;
    Ok(CanvasConfig::new(dims[0], dims[1], dims[2])?)
}

fn parse_prompt(spec: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 3 {
        return Err(usage(format!("--prompt expects w,c,h, got {spec:?}")));
    }
    let mut out = [0.0; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| usage(format!("--prompt expects numbers, got {spec:?}")))?;
    }
    Ok(out)
}

/// Effective run configuration: defaults, then the file, then global flags.
fn effective_config(cli_config: &Option<PathBuf>, seed: Option<u64>, jobs: Option<usize>) -> Result<RunConfig, CliError> {
    let mut cfg = match cli_config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = jobs {
        if jobs < 1 {
            return Err(usage("--jobs must be >= 1"));
        }
        cfg.jobs = jobs;
    }
    Ok(cfg)
}

fn canvas_of(args: &CanvasArgs, cfg: &RunConfig) -> Result<CanvasConfig, CliError> {
    match &args.canvas {
        Some(spec) => parse_canvas(spec),
        None => Ok(cfg.canvas()?),
    }
}

fn run(cli: Cli) -> CliResult {
    let cfg = effective_config(&cli.config, cli.seed, cli.jobs)?;
    match cli.cmd {
        Cmd::Gen { netlist, count, out, canvas } => {
            let count = count.unwrap_or(cfg.trajectories);
            if count < 1 {
                return Err(usage("--count must be >= 1"));
            }
            let env = Env::new(load_netlist(&netlist)?, canvas_of(&canvas, &cfg)?)?;
            let trajs = gen_random(&env, count, cfg.seed)?;
            let mut buf = Vec::new();
            write_trajectories(&mut buf, &trajs)?;
            fs::write(&out, &buf).map_err(|e| SgfError::io(out.display().to_string(), e))?;
            let stats = dataset_stats(&trajs)?;
            println!("episodes: {}", trajs.len());
            println!(
                "return mean: {} {} {}",
                stats.mu[0], stats.mu[1], stats.mu[2]
            );
            println!(
                "return stddev: {} {} {}",
                stats.sigma[0], stats.sigma[1], stats.sigma[2]
            );
            Ok(())
        }
        Cmd::Stats { traj, out } => {
            let trajs = load_trajectories(&traj)?;
            let stats = dataset_stats(&trajs)?;
            println!("episodes: {}", trajs.len());
            println!("failed: {}", trajs.iter().filter(|t| t.failed).count());
            println!("return mean: {} {} {}", stats.mu[0], stats.mu[1], stats.mu[2]);
            println!(
                "return stddev: {} {} {}",
                stats.sigma[0], stats.sigma[1], stats.sigma[2]
            );
            if let Some(out) = out {
                let json = serde_json::to_string_pretty(&stats)
                    .map_err(|e| SgfError::Runtime(format!("stats encode: {e}")))?;
                write_file(&out, &(json + "\n"))?;
            }
            Ok(())
        }
        Cmd::Train { role, netlist, traj, epochs, batch, lr, out, canvas } => {
            let role = Role::parse(&role).map_err(|_| usage(format!("--role must be actor or critic, got {role:?}")))?;
            let epochs = epochs.unwrap_or(cfg.epochs);
            if epochs < 1 {
                return Err(usage("--epochs must be >= 1"));
            }
            let env = Env::new(load_netlist(&netlist)?, canvas_of(&canvas, &cfg)?)?;
            let trajs = load_trajectories(&traj)?;
            let stats = dataset_stats(&trajs)?;
            let mut tc = TrainConfig::for_role(role, cfg.seed);
            tc.epochs = epochs;
            tc.batch = batch.unwrap_or(cfg.batch);
            if let Some(lr) = lr {
                if !(lr > 0.0) {
                    return Err(usage("--lr must be positive"));
                }
                tc.lr = lr;
            }
            let (net, curve) = train(role, &env, &trajs, &stats, &tc)?;
            for (i, loss) in curve.iter().enumerate() {
                println!("epoch {} loss {}", i + 1, loss);
            }
            write_file(&out, &net.to_checkpoint())?;
            Ok(())
        }
        Cmd::Place { netlist, actor, critic, stats, k, samples, prompt, out, svg, canvas } => {
            let k = k.unwrap_or(cfg.k);
            let samples = samples.unwrap_or(cfg.rollouts);
            if k < 1 || samples < 1 {
                return Err(usage("--k and --samples must be >= 1"));
            }
            let canvas = canvas_of(&canvas, &cfg)?;
            let env = Env::new(load_netlist(&netlist)?, canvas)?;
            let actor = load_model(&actor, Role::Actor)?;
            let critic = load_model(&critic, Role::Critic)?;
            let stats = load_stats(stats.as_ref())?;
            let prompt = match prompt {
                Some(p) => parse_prompt(&p)?,
                None => make_prompt(&stats),
            };
            let policy = Policy {
                actor: &actor,
                critic: &critic,
                stats,
                k,
                weights: cfg.selection_weights,
            };
            let mut results = Vec::with_capacity(samples);
            for i in 0..samples as u64 {
                results.push(rollout(&policy, &env, prompt, cfg.seed.wrapping_add(i))?);
            }
            let trajs: Vec<Trajectory> = results.iter().map(|(t, _)| t.clone()).collect();
            let best = best_of_n(&trajs)?;
            let placement = Placement::from_state(&env, &results[best].1);
            println!("rollouts: {samples} best: {best}");
            println!("wirelength: {}", placement.metrics.wirelength);
            println!("max congestion: {}", placement.metrics.max_congestion);
            println!("max heat: {}", placement.metrics.max_heat);
            if let Some(out) = out {
                write_file(&out, &placement.to_json())?;
            }
            if let Some(svg_path) = svg {
                let text = render_svg(&placement, env.netlist(), &env.cfg())?;
                write_file(&svg_path, &text)?;
            }
            Ok(())
        }
        Cmd::Eval { netlist, critic, traj, stats, out, canvas } => {
            let env = Env::new(load_netlist(&netlist)?, canvas_of(&canvas, &cfg)?)?;
            let critic = load_model(&critic, Role::Critic)?;
            let trajs = load_trajectories(&traj)?;
            let stats = match stats {
                Some(p) => load_stats(Some(&p))?,
                None => dataset_stats(&trajs)?,
            };
            let curve = critic_error_study(&critic, &env, &trajs, &stats)?;
            let csv = error_curve_csv(&curve);
            match out {
                Some(path) => write_file(&path, &csv)?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        Cmd::BoundCheck {
            netlist,
            actor,
            critic,
            stats,
            k,
            component,
            rollouts,
            prompt,
            out,
            canvas,
        } => {
            let component = match component.as_str() {
                "w" => 0,
                "c" => 1,
                "h" => 2,
                other => return Err(usage(format!("--component must be w, c, or h, got {other:?}"))),
            };
            if rollouts < 1 {
                return Err(usage("--rollouts must be >= 1"));
            }
            let k = k.unwrap_or(cfg.k);
            let env = Env::new(load_netlist(&netlist)?, canvas_of(&canvas, &cfg)?)?;
            let actor = load_model(&actor, Role::Actor)?;
            let critic = load_model(&critic, Role::Critic)?;
            let stats = load_stats(stats.as_ref())?;
            let prompt = match prompt {
                Some(p) => parse_prompt(&p)?,
                None => make_prompt(&stats),
            };
            let policy = Policy {
                actor: &actor,
                critic: &critic,
                stats,
                k,
                weights: cfg.selection_weights,
            };
            let seeds: Vec<u64> =
                (0..rollouts as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
            let report = bound_check(&policy, &env, prompt, &seeds, component)?;
            let csv = report.to_csv();
            match out {
                Some(path) => write_file(&path, &csv)?,
                None => print!("{csv}"),
            }
            println!("steps: {}", report.steps.len());
            println!("holds fraction: {}", report.holds_fraction());
            println!("triangle fraction: {}", report.triangle_fraction());
            Ok(())
        }
        Cmd::Render { netlist, placement, out } => {
            let n = load_netlist(&netlist)?;
            let placement = Placement::from_json(&read_file(&placement)?)?;
            let canvas = CanvasConfig::new(
                placement.canvas[0],
                placement.canvas[1],
                placement.canvas[2],
            )?;
            let svg = render_svg(&placement, &n, &canvas)?;
            write_file(&out, &svg)?;
            Ok(())
        }
        Cmd::Convert { blocks, nets, max_dim, out } => {
            if max_dim < 1 {
                return Err(usage("--max-dim must be >= 1"));
            }
            let netlist = parse_gsrc(&read_file(&blocks)?, &read_file(&nets)?, max_dim)?;
            write_file(&out, &serialize_canonical(&netlist))?;
            println!("modules: {}", netlist.modules.len());
            println!("nets: {}", netlist.nets.len());
            Ok(())
        }
    }
}
