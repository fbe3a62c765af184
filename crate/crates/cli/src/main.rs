use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use osc_reservoir::experiments::{
    degree_sweep, error_sweep, length_sweep, mode_sweep, order_sweeps, prepare_run_dir,
    reproduce_figure, Chart, ExperimentConfig, LambdaChoice, Model, Scale, SweepResult, Topology, FIGURES,
};
use osc_reservoir::order::{detect_critical, onset, write_sweep_csv, Direction, Transition};
use osc_reservoir::pipeline::simulate;
use osc_reservoir::signals::{lorenz_series, mackey_glass_series, multisine_series, TaskKind, TaskSpec};
use osc_reservoir::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "osc-reservoir", version, about = "Reservoir computing with networks of Kuramoto oscillators")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Common {
    /// Seeds, comma separated (network, frequencies, phases and input).
    #[arg(long, global = true, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Output root; results go to <out>/<run-id>/.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Experiment config file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run id (output subdirectory name).
    #[arg(long, global = true)]
    id: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Coupling model; sets the natural topology.
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Number of oscillators.
    #[arg(long)]
    n: Option<usize>,
    /// Mean degree of the Erdős-Rényi graph.
    #[arg(long = "mean-degree")]
    mean_degree: Option<f64>,
    /// desk (N=200, t<=1000) or full (N=500, t<=5000) defaults.
    #[arg(long, value_enum, default_value = "desk")]
    scale: ScaleArg,
}

#[derive(Args, Debug, Clone)]
struct TaskArgs {
    /// Task kinds, comma separated: filter, predict, multisine.
    #[arg(long, value_delimiter = ',')]
    task: Vec<String>,
    /// Task lengths: a list `5,10`, a range `a:b:step` or a doubling range `a:b`.
    #[arg(long)]
    m: Option<String>,
    /// Ridge penalty (0 gives the minimum-norm least-squares fit).
    #[arg(long)]
    ridge: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Rs,
    Es,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScaleArg {
    Desk,
    Full,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DirectionArg {
    Forward,
    Backward,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SignalArg {
    Lorenz,
    MackeyGlass,
    Multisine,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Order parameters r and r_var along an adiabatic coupling sweep.
    SweepOrder {
        #[command(flatten)]
        model: ModelArgs,
        /// Coupling grid `start:stop:step`.
        #[arg(long)]
        lambda: Option<String>,
        /// Sweep direction; `both` runs the two directions independently.
        #[arg(long, value_enum, default_value = "forward")]
        direction: DirectionArg,
    },
    /// Train and test error against coupling strength.
    SweepError {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        task: TaskArgs,
        /// Coupling grid `start:stop:step`.
        #[arg(long)]
        lambda: Option<String>,
    },
    /// Test error against task length at a fixed coupling.
    TaskLength {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        task: TaskArgs,
        /// A coupling value or `critical`.
        #[arg(long, default_value = "critical")]
        lambda: String,
        /// Grid used to locate the critical coupling.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Test error against the number of modes of a multi-sine input.
    Modes {
        #[command(flatten)]
        model: ModelArgs,
        /// Mode counts (list or range).
        #[arg(long, default_value = "1,2,4,8,16")]
        modes: String,
        /// Ridge penalty (0 gives the minimum-norm least-squares fit).
        #[arg(long)]
        ridge: Option<f64>,
        /// A coupling value or `critical`.
        #[arg(long, default_value = "critical")]
        lambda: String,
        /// Grid used to locate the critical coupling.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Test error against the mean degree of Erdős-Rényi networks.
    Degree {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        task: TaskArgs,
        /// Mean degrees (list or range; `3:96` doubles).
        #[arg(long, default_value = "3:96")]
        k: String,
        /// A coupling value or `critical`.
        #[arg(long, default_value = "critical")]
        lambda: String,
        /// Grid used to locate the critical coupling.
        #[arg(long)]
        grid: Option<String>,
    },
    /// A single experiment; prints one report line and saves the readout.
    Run {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        task: TaskArgs,
        /// Coupling strength.
        #[arg(long)]
        lambda: f64,
    },
    /// Writes a benchmark input signal as CSV.
    GenSignal {
        /// Signal generator.
        #[arg(long, value_enum)]
        signal: SignalArg,
        /// Length in time units.
        #[arg(long, default_value_t = 1000.0)]
        duration: f64,
        /// Sampling interval.
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        /// Number of modes (multisine only).
        #[arg(long, default_value_t = 5)]
        modes: usize,
    },
    /// Runs a figure preset and checks its qualitative claim.
    Reproduce {
        /// Figure number, 1-8.
        #[arg(long)]
        fig: u8,
        /// Preset scale.
        #[arg(long, value_enum, default_value = "desk")]
        scale: ScaleArg,
    },
}

/// Parses `a,b,c`, `start:stop:step` or the doubling range `start:stop`.
fn parse_values(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| p.trim().parse::<f64>().map_err(|_| anyhow!(Error::Config(format!("bad number `{p}` in `{s}`"))));
    let values = match parts.len() {
        1 => s.split(',').map(num).collect::<Result<Vec<_>>>()?,
        2 => {
            let (mut v, stop) = (num(parts[0])?, num(parts[1])?);
            if !(v > 0.0) || stop < v {
                bail!(Error::Config(format!("bad doubling range `{s}`")));
            }
            let mut out = Vec::new();
            while v <= stop * (1.0 + 1e-12) {
                out.push(v);
                v *= 2.0;
            }
            out
        }
        3 => osc_reservoir::order::lambda_grid(num(parts[0])?, num(parts[1])?, num(parts[2])?)?,
        _ => bail!(Error::Config(format!("cannot parse `{s}`"))),
    };
    if values.is_empty() {
        bail!(Error::Config(format!("empty value list `{s}`")));
    }
    Ok(values)
}

fn parse_counts(s: &str) -> Result<Vec<usize>> {
    parse_values(s)?
        .into_iter()
        .map(|v| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(anyhow!(Error::Config(format!("`{v}` is not a positive integer"))))
            }
        })
        .collect()
}

fn set_grid(cfg: &mut ExperimentConfig, spec: &str) -> Result<()> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!(Error::Config(format!("coupling grid must be start:stop:step, got `{spec}`")));
    }
    let v = parse_values(spec)?;
    cfg.sweep.lambda_start = v[0];
    cfg.sweep.lambda_stop = *v.last().unwrap();
    cfg.sweep.lambda_step = parts[2].parse().map_err(|_| anyhow!(Error::Config(format!("bad step in `{spec}`"))))?;
    Ok(())
}

/// Config from file or preset, with command-line overrides applied.
fn build_config(common: &Common, model: &ModelArgs, default_id: &str) -> Result<ExperimentConfig> {
    let scale = match model.scale {
        ScaleArg::Desk => Scale::Desk,
        ScaleArg::Full => Scale::Full,
    };
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => {
            let m = model.model.map_or(Model::Rs, to_model);
            let mut cfg = ExperimentConfig::preset(m, scale);
            cfg.run.id = default_id.to_string();
            cfg
        }
    };
    if let Some(m) = model.model {
        let m = to_model(m);
        if m != cfg.network.model {
            cfg.network.model = m;
            cfg.network.topology = m.natural_topology();
        }
    }
    if let Some(n) = model.n {
        cfg.network.n = n;
    }
    if let Some(k) = model.mean_degree {
        cfg.network.mean_degree = k;
    }
    apply_common(common, &mut cfg);
    Ok(cfg)
}

fn apply_common(common: &Common, cfg: &mut ExperimentConfig) {
    if !common.seed.is_empty() {
        cfg.run.seeds = common.seed.clone();
    }
    if let Some(out) = &common.out {
        cfg.run.output_dir = out.clone();
    }
    if let Some(w) = common.workers {
        cfg.run.workers = w;
    }
    if let Some(id) = &common.id {
        cfg.run.id = id.clone();
    }
}

fn apply_task(cfg: &mut ExperimentConfig, task: &TaskArgs) -> Result<()> {
    if !task.task.is_empty() {
        cfg.task.kinds = task.task.iter().map(|t| TaskKind::parse(t)).collect::<Result<_, _>>()?;
    }
    if let Some(m) = &task.m {
        cfg.task.lengths = parse_counts(m)?;
    }
    if let Some(r) = task.ridge {
        cfg.readout.ridge = r;
    }
    Ok(())
}

fn to_model(m: ModelArg) -> Model {
    match m {
        ModelArg::Rs => Model::Rs,
        ModelArg::Es => Model::Es,
    }
}

/// Validates, prints warnings and prepares the run directory.
fn start(cfg: &ExperimentConfig) -> Result<PathBuf> {
    for w in cfg.validate()? {
        eprintln!("warning: {w}");
    }
    prepare_run_dir(&cfg.run_dir(), &[cfg]).map_err(|e| anyhow!(Error::Config(format!("cannot write to {}: {e}", cfg.run_dir().display()))))
}

fn write_result(dir: &Path, res: &SweepResult, expected: usize, chart: Chart) -> Result<()> {
    let file = fs::File::create(dir.join("data.csv"))?;
    res.write_csv(BufWriter::new(file), expected)?;
    fs::write(dir.join("plot.svg"), chart.to_svg())?;
    Ok(())
}

fn print_table(res: &SweepResult) {
    println!(
        "{:<6}{:>6}  {:<14}{:>10}{:>8}{:>8}{:>8}{:>12}{:>12}",
        "model", "seed", "task", res.param.name(), "lambda", "r", "r_var", "train_mse", "test_mse"
    );
    for r in &res.rows {
        println!(
            "{:<6}{:>6}  {:<14}{:>10}{:>8.3}{:>8.3}{:>8.3}{:>12.4e}{:>12.4e}",
            r.model.name(),
            r.seed,
            r.task,
            r.value,
            r.lambda,
            r.r,
            r.r_var,
            r.train_mse,
            r.test_mse
        );
    }
}

fn chart_of(res: &SweepResult, title: &str) -> Chart {
    let mut chart = Chart::new(title, res.param.name(), "test MSE", true);
    for model in res.models() {
        for seed in res.seeds() {
            for task in res.tasks() {
                let pts = res.curve(model, seed, &task).iter().map(|r| (r.value, r.test_mse)).collect();
                chart.add(format!("{} {task} seed {seed}", model.name()), pts);
            }
        }
    }
    chart
}

fn run(cli: Cli) -> Result<u8> {
    let common = &cli.common;
    match cli.cmd {
        Cmd::SweepOrder { model, lambda, direction } => {
            let mut cfg = build_config(common, &model, "sweep-order")?;
            if let Some(l) = &lambda {
                set_grid(&mut cfg, l)?;
            }
            let dir = start(&cfg)?;
            let dirs: &[Direction] = match direction {
                DirectionArg::Forward => &[Direction::Forward],
                DirectionArg::Backward => &[Direction::Backward],
                DirectionArg::Both => &[Direction::Forward, Direction::Backward],
            };
            let rows = order_sweeps(&cfg, dirs)?;
            let expected = cfg.lambda_grid()?.len() * cfg.run.seeds.len() * dirs.len();
            if rows.len() != expected {
                bail!("sweep produced {} rows, expected {expected}", rows.len());
            }
            write_sweep_csv(BufWriter::new(fs::File::create(dir.join("data.csv"))?), &rows)?;
            let mut chart = Chart::new("order parameters", "coupling strength", "r, r_var", false);
            println!("{:>6}  {:<9}{:>8}{:>16}", "seed", "direction", "onset", "r_var jump at");
            for &seed in &cfg.run.seeds {
                for &d in dirs {
                    let samples: Vec<_> = rows.iter().filter(|(s, o)| *s == seed && o.direction == d).map(|(_, o)| *o).collect();
                    chart.add(format!("r {} seed {seed}", d.name()), samples.iter().map(|s| (s.lambda, s.r)).collect());
                    chart.add(format!("r_var {} seed {seed}", d.name()), samples.iter().map(|s| (s.lambda, s.r_var)).collect());
                    let crit = match detect_critical(&samples) {
                        Ok(Transition::At { lambda, .. }) => format!("{lambda:.3}"),
                        _ => "none".into(),
                    };
                    let on = onset(&samples, 0.3).map_or("none".into(), |l| format!("{l:.2}"));
                    println!("{seed:>6}  {:<9}{on:>8}{crit:>16}", d.name());
                }
            }
            fs::write(dir.join("plot.svg"), chart.to_svg())?;
            eprintln!("wrote {} rows to {}", rows.len(), dir.join("data.csv").display());
        }
        Cmd::SweepError { model, task, lambda } => {
            let mut cfg = build_config(common, &model, "sweep-error")?;
            apply_task(&mut cfg, &task)?;
            if let Some(l) = &lambda {
                set_grid(&mut cfg, l)?;
            }
            let dir = start(&cfg)?;
            let res = error_sweep(&cfg)?;
            let expected = cfg.lambda_grid()?.len() * cfg.run.seeds.len() * cfg.task.kinds.len() * cfg.task.lengths.len();
            write_result(&dir, &res, expected, chart_of(&res, "error vs coupling"))?;
            print_table(&res);
        }
        Cmd::TaskLength { model, task, lambda, grid } => {
            let mut cfg = build_config(common, &model, "task-length")?;
            apply_task(&mut cfg, &task)?;
            let lengths = cfg.task.lengths.clone();
            if let Some(g) = &grid {
                set_grid(&mut cfg, g)?;
            }
            let dir = start(&cfg)?;
            let res = length_sweep(&cfg, &lengths, LambdaChoice::parse(&lambda)?)?;
            let expected = lengths.len() * cfg.run.seeds.len() * cfg.task.kinds.len();
            write_result(&dir, &res, expected, chart_of(&res, "error vs task length"))?;
            print_table(&res);
        }
        Cmd::Modes { model, modes, ridge, lambda, grid } => {
            let mut cfg = build_config(common, &model, "modes")?;
            if let Some(r) = ridge {
                cfg.readout.ridge = r;
            }
            if let Some(g) = &grid {
                set_grid(&mut cfg, g)?;
            }
            let modes = parse_counts(&modes)?;
            let dir = start(&cfg)?;
            let res = mode_sweep(&cfg, &modes, LambdaChoice::parse(&lambda)?)?;
            write_result(&dir, &res, modes.len() * cfg.run.seeds.len(), chart_of(&res, "error vs modes"))?;
            print_table(&res);
        }
        Cmd::Degree { model, task, k, lambda, grid } => {
            let mut cfg = build_config(common, &model, "degree")?;
            if cfg.network.topology != Topology::Er {
                bail!(Error::Config("degree sweeps need --model es (Erdős-Rényi topology)".into()));
            }
            apply_task(&mut cfg, &task)?;
            if let Some(g) = &grid {
                set_grid(&mut cfg, g)?;
            }
            let degrees = parse_values(&k)?;
            let dir = start(&cfg)?;
            let res = degree_sweep(&cfg, &degrees, LambdaChoice::parse(&lambda)?)?;
            let expected = degrees.len() * cfg.run.seeds.len() * cfg.task.kinds.len() * cfg.task.lengths.len();
            write_result(&dir, &res, expected, chart_of(&res, "error vs mean degree"))?;
            print_table(&res);
        }
        Cmd::Run { model, task, lambda } => {
            let mut cfg = build_config(common, &model, "run")?;
            apply_task(&mut cfg, &task)?;
            if task.task.is_empty() {
                cfg.task.kinds.truncate(1);
            }
            if task.m.is_none() {
                cfg.task.lengths.truncate(1);
            }
            if cfg.task.kinds.len() != 1 || cfg.task.lengths.len() != 1 {
                bail!(Error::Config("run takes exactly one task and one length".into()));
            }
            let dir = start(&cfg)?;
            for &seed in &cfg.run.seeds {
                let net = Arc::new(cfg.network(seed)?);
                let spec = cfg.experiment(net, seed, lambda)?;
                let task: TaskSpec = cfg.tasks(seed)?.remove(0);
                let sim = simulate(&spec, &task)?;
                let (model, rep) = sim.fit_targets(&task.target(&sim.input)?, cfg.readout.ridge)?;
                let file = fs::File::create(dir.join(format!("weights_seed{seed}.csv")))?;
                model.write(BufWriter::new(file))?;
                println!(
                    "model={} seed={seed} task={}-m{} lambda={lambda} locked={} train_mse={:.6e} test_mse={:.6e} n_train={} n_test={} condition={:.3e}",
                    cfg.network.model.name(),
                    task.kind.name(),
                    task.m,
                    rep.locked,
                    rep.train_mse,
                    rep.test_mse,
                    rep.n_train,
                    rep.n_test,
                    rep.condition_estimate
                );
            }
        }
        Cmd::GenSignal { signal, duration, dt, modes } => {
            let seed = common.seed.first().copied().unwrap_or(1);
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let dir = out.join(common.id.clone().unwrap_or_else(|| "gen-signal".into()));
            fs::create_dir_all(&dir).map_err(|e| anyhow!(Error::Config(format!("cannot write to {}: {e}", dir.display()))))?;
            let series = match signal {
                SignalArg::Lorenz => lorenz_series(duration, dt, seed)?,
                SignalArg::MackeyGlass => mackey_glass_series(duration, dt, seed)?,
                SignalArg::Multisine => multisine_series(duration, dt, modes, seed)?,
            };
            let path = dir.join("data.csv");
            series.write_csv(BufWriter::new(fs::File::create(&path)?), None)?;
            eprintln!("wrote {} samples to {}", series.len(), path.display());
        }
        Cmd::Reproduce { fig, scale } => {
            if !FIGURES.contains(&fig) {
                bail!(Error::Config(format!("no figure {fig}; choose 1-8")));
            }
            let scale = match scale {
                ScaleArg::Desk => Scale::Desk,
                ScaleArg::Full => Scale::Full,
            };
            let seeds = (!common.seed.is_empty()).then_some(common.seed.as_slice());
            let report = reproduce_figure(fig, scale, seeds, common.workers.unwrap_or(0))?;
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let dir = report.write(&out)?;
            print!("{}", report.summary());
            eprintln!("wrote {}", dir.display());
            if !report.passed() {
                return Ok(EXIT_CHECK);
            }
        }
    }
    Ok(0)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) | Some(Error::Parse { .. }) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => {
            let _ = io::stdout().flush();
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_lists() {
        assert_eq!(parse_values("1,2.5").unwrap(), vec![1.0, 2.5]);
        assert_eq!(parse_values("3:48").unwrap(), vec![3.0, 6.0, 12.0, 24.0, 48.0]);
        assert_eq!(parse_values("0:1:0.5").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_values("0:5:0.1").unwrap().len(), 51);
        assert!(parse_values("a,b").is_err());
        assert!(parse_values("0:1:2:3").is_err());
        assert!(parse_counts("1.5").is_err());
        assert_eq!(parse_counts("5:15:5").unwrap(), vec![5, 10, 15]);
    }

    #[test]
    fn config_errors_map_to_exit_two() {
        let e = parse_values("x").unwrap_err();
        assert_eq!(exit_code(&e), EXIT_CONFIG);
        assert_eq!(exit_code(&anyhow!("boom")), EXIT_RUNTIME);
    }
}
