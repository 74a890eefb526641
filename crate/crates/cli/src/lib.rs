//! Command-line front end: CSV tables of expected phases, capacities and
//! simulation reports.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use relayfb::phases::MAX_TREE_RELAYS;
use relayfb::{
    build_phase_tree, capacity, expected_phases, expected_phases_matrix, expected_phases_tree,
    snr_from_db, BscParam, CapacityProtocol, ChannelParams, DecodeProfile, FeedbackObservation,
    OutageTarget, Rate, SimConfig, Strategy,
};
use thiserror::Error;

/// Routes that should agree exactly may differ by at most this much.
pub const ROUTE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Internal(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Internal(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<relayfb::Error> for CliError {
    fn from(err: relayfb::Error) -> Self {
        match err {
            relayfb::Error::NoConvergence { .. } => CliError::Solver(err.to_string()),
            relayfb::Error::InconsistentTree { .. } => CliError::Internal(err.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(err))
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "relayfb",
    version,
    about = "Incremental relaying under noisy one-bit feedback"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Random seed for simulations
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; `stdout` or omitted writes to standard output
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// Flat `key = value` file; command-line flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expected phases for one parameter point, by every analytic route
    Phases(PhaseArgs),
    /// Expected phases over a grid of feedback reliabilities and direct-link failure rates
    Sweep(SweepArgs),
    /// ε-outage capacity of the one-relay network
    Capacity(CapacityArgs),
    /// Monte Carlo simulation of the protocol
    Simulate(SimulateArgs),
}

#[derive(Debug, Args, Default)]
pub struct PhaseArgs {
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub p_bar_sd: Option<f64>,
    #[arg(long)]
    pub relays: Option<usize>,
    /// Decode probabilities of relay levels 1.., comma separated
    #[arg(long)]
    pub profile: Option<Grid>,
}

#[derive(Debug, Args, Default)]
pub struct SweepArgs {
    /// Comma list or `start:stop:count`
    #[arg(long)]
    pub p_grid: Option<Grid>,
    #[arg(long)]
    pub p_bar_grid: Option<Grid>,
    #[arg(long)]
    pub relays: Option<usize>,
    #[arg(long)]
    pub profile: Option<Grid>,
}

#[derive(Debug, Args, Default)]
pub struct CapacityArgs {
    /// df or baf
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Linear SNR
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
    #[arg(long)]
    pub var_sd: Option<f64>,
    #[arg(long)]
    pub var_sr: Option<f64>,
    #[arg(long)]
    pub var_rd: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct SimulateArgs {
    #[arg(long)]
    pub relays: Option<usize>,
    /// df or af
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
    #[arg(long)]
    pub var_sd: Option<f64>,
    /// One value for every relay or one per relay
    #[arg(long)]
    pub var_sr: Option<Grid>,
    #[arg(long)]
    pub var_rd: Option<Grid>,
    #[arg(long)]
    pub blocks: Option<u64>,
    #[arg(long)]
    pub partitions: Option<usize>,
    /// shared or independent
    #[arg(long)]
    pub feedback: Option<String>,
}

/// List of numbers given as `a,b,c` or as an inclusive `start:stop:count` range.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err("empty list".into());
        }
        if let [start, stop, count] = s.split(':').collect::<Vec<_>>()[..] {
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("bad range `{s}`: {e}"))
            };
            let (start, stop) = (parse(start)?, parse(stop)?);
            let count: usize = count
                .trim()
                .parse()
                .map_err(|e| format!("bad range `{s}`: {e}"))?;
            return match count {
                0 => Err(format!("range `{s}` has no points")),
                1 => Ok(Grid(vec![start])),
                n => Ok(Grid(
                    (0..n)
                        .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
                        .collect(),
                )),
            };
        }
        s.split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("bad number `{v}`: {e}"))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Grid)
    }
}

/// Decimal rendering with 12 significant digits, independent of locale.
pub fn format_decimal(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return format!("{:.11}", 0.0);
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (11 - exponent).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Parsed `key = value` configuration file.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (number, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "config line {}: expected key = value",
                    number + 1
                )));
            };
            let key = key.trim().trim_start_matches("--").replace('_', "-");
            entries.insert(key, value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn check_keys(&self, allowed: &[&str]) -> CliResult<()> {
        for key in self.entries.keys() {
            if !allowed.contains(&key.as_str()) && !["seed", "out"].contains(&key.as_str()) {
                return Err(CliError::Usage(format!("unknown config key `{key}`")));
            }
        }
        Ok(())
    }

    /// Flag value if given, else the config entry for `key`.
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.entries
            .get(key)
            .map(|raw| {
                raw.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))
            })
            .transpose()
    }

    fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        self.pick(flag, key)?
            .ok_or_else(|| CliError::Usage(format!("missing required --{key}")))
    }
}

fn parse_choice<T: FromStr<Err = String>>(raw: &str) -> CliResult<T> {
    raw.parse().map_err(CliError::Usage)
}

/// Output table: header plus rows of already formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: Vec<&'static str>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> CliResult<()> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        writer.write_record(&self.header)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Writes tables one after another, separated by an empty line.
pub fn render(tables: &[Table]) -> CliResult<String> {
    let mut buffer = Vec::new();
    for (i, table) in tables.iter().enumerate() {
        if i > 0 {
            buffer.push(b'\n');
        }
        table.write_csv(&mut buffer)?;
    }
    Ok(String::from_utf8(buffer).expect("csv output is utf-8"))
}

/// Profile for a depth-`relays` tree: level 0 from `p_bar_sd`, relay levels
/// from `upper` or, when absent, repeating the direct-link success probability.
pub fn build_profile(
    p_bar_sd: f64,
    relays: usize,
    upper: Option<&[f64]>,
) -> CliResult<DecodeProfile> {
    let p_sd = 1.0 - p_bar_sd;
    let mut levels = vec![p_sd];
    match upper {
        Some(values) => {
            if values.len() + 1 < relays {
                return Err(CliError::Usage(format!(
                    "--profile lists {} relay levels but {} relays need {}",
                    values.len(),
                    relays,
                    relays - 1
                )));
            }
            levels.extend_from_slice(values);
        }
        None => levels.extend(std::iter::repeat_n(p_sd, relays.saturating_sub(1))),
    }
    DecodeProfile::from_source_outage(p_bar_sd)?;
    Ok(DecodeProfile::new(levels)?)
}

pub fn phases_table(args: PhaseArgs, config: &ConfigFile) -> CliResult<Table> {
    config.check_keys(&["p", "p-bar-sd", "relays", "profile"])?;
    let p = BscParam::new(config.require(args.p, "p")?)?;
    let p_bar_sd: f64 = config.require(args.p_bar_sd, "p-bar-sd")?;
    let relays = config.pick(args.relays, "relays")?.unwrap_or(1);
    let upper = config.pick(args.profile, "profile")?;
    let profile = build_profile(p_bar_sd, relays, upper.as_ref().map(|g| g.0.as_slice()))?;

    let value = expected_phases(&profile, p, relays)?;
    let (matrix_cell, tree_cell) = if relays == 0 {
        (String::new(), String::new())
    } else {
        let matrix = expected_phases_matrix(&profile, p, relays)?;
        check_route("matrix", matrix, value)?;
        let tree_cell = if relays <= MAX_TREE_RELAYS {
            let tree = expected_phases_tree(&build_phase_tree(&profile, p, relays)?)?;
            check_route("tree", tree, value)?;
            format_decimal(tree)
        } else {
            String::new()
        };
        (format_decimal(matrix), tree_cell)
    };

    let mut table = Table::new(vec![
        "p",
        "p_bar_sd",
        "relays",
        "expected_phases",
        "matrix_expected_phases",
        "tree_expected_phases",
    ]);
    table.rows.push(vec![
        format_decimal(p.value()),
        format_decimal(p_bar_sd),
        relays.to_string(),
        format_decimal(value),
        matrix_cell,
        tree_cell,
    ]);
    Ok(table)
}

fn check_route(name: &str, value: f64, reference: f64) -> CliResult<()> {
    if (value - reference).abs() > ROUTE_TOLERANCE {
        Err(CliError::Internal(format!(
            "{name} route gives {value}, recurrence gives {reference}"
        )))
    } else {
        Ok(())
    }
}

pub fn sweep_table(args: SweepArgs, config: &ConfigFile) -> CliResult<Table> {
    config.check_keys(&["p-grid", "p-bar-grid", "relays", "profile"])?;
    let p_grid: Grid = config.require(args.p_grid, "p-grid")?;
    let p_bar_grid: Grid = config.require(args.p_bar_grid, "p-bar-grid")?;
    let relays = config.pick(args.relays, "relays")?.unwrap_or(1);
    let upper = config.pick(args.profile, "profile")?;

    let feedback = p_grid
        .0
        .iter()
        .map(|&p| BscParam::new(p))
        .collect::<Result<Vec<_>, _>>()?;
    let profiles = p_bar_grid
        .0
        .iter()
        .map(|&pb| {
            build_profile(pb, relays, upper.as_ref().map(|g| g.0.as_slice())).map(|prof| (pb, prof))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut table = Table::new(vec!["p", "p_bar_sd", "relays", "expected_phases"]);
    for &p in &feedback {
        for (p_bar, profile) in &profiles {
            let value = expected_phases(profile, p, relays)?;
            table.rows.push(vec![
                format_decimal(p.value()),
                format_decimal(*p_bar),
                relays.to_string(),
                format_decimal(value),
            ]);
        }
    }
    Ok(table)
}

fn resolve_snr(config: &ConfigFile, snr: Option<f64>, snr_db: Option<f64>) -> CliResult<f64> {
    match (config.pick(snr, "snr")?, config.pick(snr_db, "snr-db")?) {
        (Some(_), Some(_)) => Err(CliError::Usage(
            "give either --snr or --snr-db, not both".into(),
        )),
        (Some(linear), None) => Ok(linear),
        (None, Some(db)) => Ok(snr_from_db(db)),
        (None, None) => Err(CliError::Usage("missing required --snr or --snr-db".into())),
    }
}

pub fn capacity_table(args: CapacityArgs, config: &ConfigFile) -> CliResult<Table> {
    config.check_keys(&[
        "strategy", "epsilon", "p", "snr", "snr-db", "var-sd", "var-sr", "var-rd",
    ])?;
    let protocol: CapacityProtocol = parse_choice(
        &config
            .pick(args.strategy, "strategy")?
            .unwrap_or_else(|| "df".into()),
    )?;
    let epsilon: f64 = config.require(args.epsilon, "epsilon")?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(CliError::Usage(format!(
            "--epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let p = BscParam::new(config.require(args.p, "p")?)?;
    let snr = resolve_snr(config, args.snr, args.snr_db)?;
    let params = ChannelParams::one_relay(
        config.pick(args.var_sd, "var-sd")?.unwrap_or(1.0),
        config.pick(args.var_sr, "var-sr")?.unwrap_or(1.0),
        config.pick(args.var_rd, "var-rd")?.unwrap_or(1.0),
        snr,
    )?;
    let result = capacity(&params, OutageTarget::new(epsilon)?, p, protocol)?;

    let mut table = Table::new(vec![
        "strategy",
        "epsilon",
        "p",
        "snr",
        "rate",
        "expected_phases",
        "residual",
    ]);
    table.rows.push(vec![
        protocol.to_string(),
        format_decimal(epsilon),
        format_decimal(p.value()),
        format_decimal(snr),
        format_decimal(result.rate),
        format_decimal(result.expected_phases),
        format_decimal(result.residual),
    ]);
    Ok(table)
}

fn per_relay(values: Option<Grid>, relays: usize, name: &str) -> CliResult<Vec<f64>> {
    match values {
        None => Ok(vec![1.0; relays]),
        Some(Grid(v)) if v.len() == 1 => Ok(vec![v[0]; relays]),
        Some(Grid(v)) if v.len() == relays => Ok(v),
        Some(Grid(v)) => Err(CliError::Usage(format!(
            "--{name} has {} values for {relays} relays",
            v.len()
        ))),
    }
}

/// Builds the simulation configuration from flags and config file.
pub fn simulate_config(
    args: SimulateArgs,
    seed: Option<u64>,
    config: &ConfigFile,
) -> CliResult<SimConfig> {
    config.check_keys(&[
        "relays",
        "strategy",
        "rate",
        "p",
        "snr",
        "snr-db",
        "var-sd",
        "var-sr",
        "var-rd",
        "blocks",
        "partitions",
        "feedback",
    ])?;
    let relays = config.pick(args.relays, "relays")?.unwrap_or(1);
    let strategy: Strategy = parse_choice(
        &config
            .pick(args.strategy, "strategy")?
            .unwrap_or_else(|| "df".into()),
    )?;
    let observation: FeedbackObservation = parse_choice(
        &config
            .pick(args.feedback, "feedback")?
            .unwrap_or_else(|| "shared".into()),
    )?;
    let snr = resolve_snr(config, args.snr, args.snr_db)?;
    let channel = ChannelParams::new(
        config.pick(args.var_sd, "var-sd")?.unwrap_or(1.0),
        per_relay(config.pick(args.var_sr, "var-sr")?, relays, "var-sr")?,
        per_relay(config.pick(args.var_rd, "var-rd")?, relays, "var-rd")?,
        snr,
    )?;
    let sim = SimConfig::new(
        channel,
        Rate::new(config.require(args.rate, "rate")?)?,
        BscParam::new(config.require(args.p, "p")?)?,
        strategy,
    )
    .with_blocks(config.pick(args.blocks, "blocks")?.unwrap_or(100_000))
    .with_seed(config.pick(seed, "seed")?.unwrap_or(0))
    .with_partitions(config.pick(args.partitions, "partitions")?.unwrap_or(1))
    .with_observation(observation);
    sim.validate()?;
    Ok(sim)
}

/// Closed-form `E(N)` where one exists: no relays, one relay, or worthless feedback.
pub fn analytic_phases(config: &SimConfig) -> Option<f64> {
    let relays = config.channel.num_relays();
    let p = config.feedback;
    if relays == 0 {
        Some(1.0)
    } else if relays == 1 {
        let p_bar = relayfb::source_outage_prob(&config.channel, config.rate);
        relayfb::expected_phases_one_relay(p_bar, p).ok()
    } else if p.value() == 0.5 {
        Some(2.0 - 0.5f64.powi(relays as i32))
    } else {
        None
    }
}

pub fn simulate_tables(config: &SimConfig) -> CliResult<Vec<Table>> {
    let report = relayfb::run(config)?;
    let (analytic, z) = match analytic_phases(config) {
        Some(value) => {
            let diff = report.mean_phases - value;
            let z = if report.phases_stderr > 0.0 {
                format_decimal(diff / report.phases_stderr)
            } else if diff == 0.0 {
                format_decimal(0.0)
            } else {
                String::new()
            };
            (format_decimal(value), z)
        }
        None => (String::new(), String::new()),
    };
    let observation = match config.observation {
        FeedbackObservation::Shared => "shared",
        FeedbackObservation::IndependentPerNode => "independent",
    };

    let mut summary = Table::new(vec![
        "blocks",
        "relays",
        "strategy",
        "feedback",
        "p",
        "rate",
        "snr",
        "seed",
        "partitions",
        "mean_phases",
        "phases_stderr",
        "outage_rate",
        "outage_stderr",
        "collisions",
        "analytic_phases",
        "z_score",
    ]);
    summary.rows.push(vec![
        report.blocks_run.to_string(),
        config.channel.num_relays().to_string(),
        config.strategy.to_string(),
        observation.to_string(),
        format_decimal(config.feedback.value()),
        format_decimal(config.rate.bits()),
        format_decimal(config.channel.snr()),
        config.seed.to_string(),
        config.partitions.to_string(),
        format_decimal(report.mean_phases),
        format_decimal(report.phases_stderr),
        format_decimal(report.outage_rate),
        format_decimal(report.outage_stderr),
        report.collisions.to_string(),
        analytic,
        z,
    ]);

    let mut histogram = Table::new(vec!["phases", "count"]);
    for (i, count) in report.phase_histogram.iter().enumerate() {
        histogram
            .rows
            .push(vec![(i + 1).to_string(), count.to_string()]);
    }
    Ok(vec![summary, histogram])
}

/// Executes a parsed command line and returns the CSV text it produces.
pub fn execute(cli: Cli) -> CliResult<String> {
    let config = match &cli.common.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let tables = match cli.command {
        Command::Phases(args) => vec![phases_table(args, &config)?],
        Command::Sweep(args) => vec![sweep_table(args, &config)?],
        Command::Capacity(args) => vec![capacity_table(args, &config)?],
        Command::Simulate(args) => {
            let sim = simulate_config(args, cli.common.seed, &config)?;
            simulate_tables(&sim)?
        }
    };
    render(&tables)
}

/// Destination from `--out` or the config file; `None` means standard output.
pub fn output_path(cli: &Cli) -> CliResult<Option<PathBuf>> {
    let config = match &cli.common.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let out: Option<String> = config.pick(cli.common.out.clone(), "out")?;
    Ok(out.filter(|o| o != "stdout" && o != "-").map(PathBuf::from))
}

pub fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(path) => fs::write(path, text).map_err(CliError::from),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush().map_err(CliError::from)
        }
    }
}
