//! The `lambda` command line.

use std::fs;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lambda_env::engine::SPACE_STREAM;
use lambda_env::evaluation::{run_suite, SuiteSpec};
use lambda_env::generation::generate_space;
use lambda_env::trace::write_trace;
use lambda_env::{
    derive_seed, run_session, stream_rng, AgentSpec, Connectivity, GenerationLimits,
    GeneratorBehavior, Relocation, SessionConfig, Space, SpaceSource, StopCondition, TimeBounds,
};

#[derive(Debug, Parser)]
#[command(name = "lambda", version, about = "Reward-trail test environments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random space and print its description.
    GenSpace(GenSpaceArgs),
    /// Check a space description.
    Validate(ValidateArgs),
    /// Run synthetic agents and print per-session scores as CSV.
    Run(Box<RunArgs>),
    /// Run an experiment suite and write its table as CSV.
    Suite(SuiteArgs),
    /// Serve the HTTP session API.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConnectivityArg {
    Connected,
    Strong,
}

impl From<ConnectivityArg> for Connectivity {
    fn from(c: ConnectivityArg) -> Self {
        match c {
            ConnectivityArg::Connected => Connectivity::Connected,
            ConnectivityArg::Strong => Connectivity::StronglyConnected,
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct LimitArgs {
    #[arg(long, default_value_t = 2)]
    pub min_cells: usize,
    /// Unbounded when absent.
    #[arg(long)]
    pub max_cells: Option<usize>,
    /// Total action count, stay included. Drawn at random when absent.
    #[arg(long)]
    pub actions: Option<usize>,
    #[arg(long, value_enum, default_value = "connected")]
    pub connectivity: ConnectivityArg,
}

impl LimitArgs {
    fn limits(&self) -> Result<GenerationLimits> {
        let mut limits = GenerationLimits {
            min_cells: self.min_cells,
            max_cells: self.max_cells,
            connectivity: self.connectivity.into(),
            ..GenerationLimits::default()
        };
        if let Some(a) = self.actions {
            limits.min_actions = a;
            limits.max_actions = a;
        }
        limits.validate()?;
        Ok(limits)
    }
}

#[derive(Debug, Args)]
pub struct GenSpaceArgs {
    #[command(flatten)]
    pub limits: LimitArgs,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub desc: String,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Space description. A random space is drawn when absent.
    #[arg(long, conflicts_with = "auto")]
    pub desc: Option<String>,
    /// Draw a random space per session.
    #[arg(long)]
    pub auto: bool,
    #[command(flatten)]
    pub limits: LimitArgs,
    /// `random` or `observer`; repeat to place several agents in one space.
    #[arg(long = "agent", default_value = "random")]
    pub agents: Vec<String>,
    #[arg(long, conflicts_with = "time")]
    pub iterations: Option<u64>,
    /// Stop once the first agent's summed decision time reaches this many
    /// milliseconds. Needs `--latency`.
    #[arg(long)]
    pub time: Option<u64>,
    /// Per-decision latency range `MIN,MAX` in milliseconds.
    #[arg(long, value_parser = parse_latency)]
    pub latency: Option<TimeBounds>,
    #[arg(long, default_value_t = 1)]
    pub sessions: usize,
    /// `never`, `auto` or an interval.
    #[arg(long, default_value = "never")]
    pub relocate: Relocation,
    /// Behaviour of Good and Evil, e.g. `random`, `random-any` or `pattern:1,2`.
    #[arg(long, default_value = "random")]
    pub generator: GeneratorBehavior,
    #[arg(long)]
    pub good: Option<GeneratorBehavior>,
    #[arg(long)]
    pub evil: Option<GeneratorBehavior>,
    #[arg(long)]
    pub moves: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub max_reward: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write a per-interaction trace; with several sessions, `-<s>` is
    /// added before the extension.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

fn parse_latency(text: &str) -> std::result::Result<TimeBounds, String> {
    let (lo, hi) = text.split_once(',').unwrap_or((text, text));
    let ms = |v: &str| v.trim().parse::<u64>().map_err(|e| format!("{v:?}: {e}"));
    let (lo, hi) = (ms(lo)?, ms(hi)?);
    if lo > hi {
        return Err(format!("min {lo} above max {hi}"));
    }
    Ok(TimeBounds::millis(lo, hi))
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    /// A built-in suite.
    #[arg(long, required_unless_present_any = ["config", "list"])]
    pub name: Option<String>,
    /// A `key = value` suite file; its `base` key may name a built-in.
    #[arg(long, conflicts_with = "name")]
    pub config: Option<PathBuf>,
    /// Defaults to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the number of sessions per point.
    #[arg(long)]
    pub sessions: Option<usize>,
    /// Print the built-in suite names.
    #[arg(long)]
    pub list: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Seconds before an untouched session is dropped.
    #[arg(long, default_value_t = 1800)]
    pub idle_timeout: u64,
}

/// Runs every command except `serve`, writing results to `out`.
pub fn execute(command: &Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::GenSpace(args) => gen_space(args, out),
        Command::Validate(args) => validate(args, out),
        Command::Run(args) => run(args, out),
        Command::Suite(args) => suite(args, out),
        Command::Serve(_) => bail!("serve needs a runtime; use serve_blocking"),
    }
}

pub fn serve_blocking(args: &ServeArgs) -> Result<()> {
    let addr = SocketAddr::new(args.host, args.port);
    tokio::runtime::Runtime::new()?.block_on(crate::http::serve(
        addr,
        Duration::from_secs(args.idle_timeout),
    ))?;
    Ok(())
}

fn gen_space(args: &GenSpaceArgs, out: &mut dyn Write) -> Result<()> {
    let generated = generate_space(
        &args.limits.limits()?,
        &mut stream_rng(args.seed, SPACE_STREAM),
    )?;
    writeln!(out, "{}", generated.description)?;
    eprintln!(
        "{} cells, {} actions, {}, {} rejected",
        generated.space.cell_count(),
        generated.space.action_count(),
        generated.space.connectivity(),
        generated.rejections
    );
    Ok(())
}

fn validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<()> {
    let space = Space::parse(&args.desc).context("invalid space description")?;
    writeln!(out, "{}", space.describe())?;
    writeln!(
        out,
        "{} cells, {} actions, {}",
        space.cell_count(),
        space.action_count(),
        space.connectivity()
    )?;
    Ok(())
}

fn agent(name: &str) -> Result<AgentSpec> {
    Ok(match name {
        "random" => AgentSpec::random(),
        "observer" => AgentSpec::observer(),
        other => bail!("unknown agent {other:?}; expected random or observer"),
    })
}

impl RunArgs {
    /// The configuration of session 0; later sessions differ only in seed.
    pub fn config(&self) -> Result<SessionConfig> {
        let space = match (&self.desc, self.auto) {
            (Some(desc), false) => SpaceSource::Manual(desc.clone()),
            (None, _) => SpaceSource::Generated(self.limits.limits()?),
            (Some(_), true) => bail!("--desc and --auto are exclusive"),
        };
        let latency = self.latency.unwrap_or(TimeBounds::ZERO);
        let agents = self
            .agents
            .iter()
            .map(|a| Ok(agent(a)?.with_time(latency)))
            .collect::<Result<Vec<_>>>()?;
        let stop = match (self.iterations, self.time) {
            (_, Some(ms)) => StopCondition::TimeBudget(Duration::from_millis(ms)),
            (Some(n), None) => StopCondition::Interactions(n),
            (None, None) => StopCondition::Interactions(1_000),
        };
        let mut good = self.good.clone().unwrap_or_else(|| self.generator.clone());
        let mut evil = self.evil.clone().unwrap_or_else(|| self.generator.clone());
        if let Some(k) = self.moves {
            good.moves_per_interaction = k;
            evil.moves_per_interaction = k;
        }
        Ok(SessionConfig {
            good,
            evil,
            stop,
            relocation: self.relocate,
            max_reward: self.max_reward,
            seed: derive_seed(self.seed, &[0]),
            record_trace: self.trace.is_some(),
            ..SessionConfig::new(space, agents)
        })
    }
}

fn trace_path(base: &std::path::Path, session: usize, sessions: usize) -> PathBuf {
    if sessions <= 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().unwrap_or_default().to_string_lossy();
    let name = match base.extension() {
        Some(ext) => format!("{stem}-{session}.{}", ext.to_string_lossy()),
        None => format!("{stem}-{session}"),
    };
    base.with_file_name(name)
}

fn run(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    if args.sessions == 0 {
        bail!("--sessions must be at least 1");
    }
    let template = args.config()?;
    writeln!(
        out,
        "session,seed,space,agent,cumulative,interactions,average"
    )?;
    let mut totals = vec![0.0; template.agents.len()];
    let mut names = Vec::new();
    for s in 0..args.sessions {
        let seed = derive_seed(args.seed, &[s as u64]);
        let result = run_session(SessionConfig {
            seed,
            ..template.clone()
        })?;
        names = result.scores.iter().map(|a| a.name.clone()).collect();
        for (i, score) in result.scores.iter().enumerate() {
            totals[i] += score.average();
            writeln!(
                out,
                "{s},{seed},{},{},{},{},{}",
                result.space_description,
                score.name,
                score.cumulative,
                score.interactions,
                score.average()
            )?;
        }
        if let (Some(base), Some(rows)) = (&args.trace, &result.trace) {
            let path = trace_path(base, s, args.sessions);
            let file =
                fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write_trace(std::io::BufWriter::new(file), &names, rows)?;
        }
    }
    for (name, total) in names.iter().zip(totals) {
        writeln!(out, "mean,,,{name},,,{}", total / args.sessions as f64)?;
    }
    Ok(())
}

fn suite(args: &SuiteArgs, out: &mut dyn Write) -> Result<()> {
    if args.list {
        for name in SuiteSpec::builtin_names() {
            writeln!(out, "{name}")?;
        }
        return Ok(());
    }
    let mut spec = match (&args.name, &args.config) {
        (Some(name), None) => SuiteSpec::builtin(name)?,
        (None, Some(path)) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SuiteSpec::parse(&text)?
        }
        _ => bail!("give exactly one of --name and --config"),
    };
    if let Some(n) = args.sessions {
        spec.sessions = n;
    }
    let csv = run_suite(&spec)?.to_csv();
    match &args.out {
        Some(path) => {
            fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => out.write_all(csv.as_bytes())?,
    }
    Ok(())
}
