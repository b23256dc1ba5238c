//! `ipg`: generate instances, compute equilibria, run benchmark batches.

mod batch;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ipg_core::bruteforce::all_pnes;
use ipg_core::io::InstanceFile;
use ipg_core::kpg::{dominance_cuts, generate_kpg, payoff_cuts, reduce_bkp, BkpInstance, Distribution};
use ipg_core::master::{CutBatch, Mode, SolveConfig, Solver};
use ipg_core::models::cfld::generate_cfld;
use ipg_core::models::qipg::generate_qipg;
use ipg_core::nfg::{generate_grid_with, GridOptions, WeightScheme};
use ipg_core::rational::{self, Rational};
use ipg_core::report::{SolveReport, Status, CSV_HEADER};
use ipg_core::IpgError;

#[derive(Parser)]
#[command(name = "ipg", version, about = "Pure Nash equilibria of integer programming games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance.
    Gen {
        #[command(subcommand)]
        family: GenFamily,
    },
    /// Find the welfare-best equilibrium (or run the mode given by --mode).
    Solve(SolveArgs),
    /// Enumerate equilibria in welfare order.
    Enumerate(SolveArgs),
    /// Find an approximate equilibrium.
    Epsilon(SolveArgs),
    /// Print every equilibrium by exhaustive enumeration.
    Oracle {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve every instance of a directory and aggregate the results.
    Batch(batch::BatchArgs),
    /// Reduce a problem to a knapsack game.
    Reduce {
        #[command(subcommand)]
        problem: ReduceProblem,
    },
}

#[derive(Subcommand)]
enum GenFamily {
    Kpg {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 25)]
        m: usize,
        #[arg(long, default_value = "B", value_parser = parse_dist)]
        dist: Distribution,
        /// Capacity as tenths of the total weight.
        #[arg(long, default_value_t = 5)]
        tenths: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Nfg {
        /// Target number of vertices.
        #[arg(long, default_value_t = 50)]
        v: usize,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value = "shapley", value_parser = parse_weights)]
        weights: WeightScheme,
        /// One source and sink row per player instead of shared endpoints.
        #[arg(long)]
        separate: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Qipg {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// Fixed lower bound; random in [-1000, 0] when omitted.
        #[arg(long, allow_hyphen_values = true, requires = "ub")]
        lb: Option<i64>,
        #[arg(long, allow_hyphen_values = true, requires = "lb")]
        ub: Option<i64>,
        #[arg(long)]
        convex: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Cfld {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        locations: usize,
        #[arg(long, default_value_t = 5)]
        customers: usize,
        #[arg(long, default_value_t = 2)]
        designs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ReduceProblem {
    /// Bilevel knapsack to a two-player knapsack game.
    Bkp {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Select,
    Enumerate,
    Epsilon,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BatchArg {
    All,
    One,
}

#[derive(Args, Clone, Debug)]
pub struct RunFlags {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Seconds.
    #[arg(long, default_value_t = 1800.0)]
    pub time_limit: f64,
    /// Absolute epsilon, e.g. `1` or `1/2`.
    #[arg(long, value_parser = parse_rational)]
    pub epsilon: Option<Rational>,
    /// Relative epsilon in (0, 1].
    #[arg(long, value_parser = parse_rational, conflicts_with = "epsilon")]
    pub epsilon_rel: Option<Rational>,
    /// Stop enumerating after this many equilibria.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Knapsack dominance and payoff inequalities.
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    pub strategic_cuts: Toggle,
    #[arg(long, value_enum, default_value_t = BatchArg::All)]
    pub cut_batch: BatchArg,
    /// Solve the best-response problems of all players concurrently.
    #[arg(long)]
    pub parallel_oracle: bool,
    /// Append one CSV row per instance to this file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    file: PathBuf,
    #[command(flatten)]
    flags: RunFlags,
    /// Report JSON destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_rational(s: &str) -> std::result::Result<Rational, String> {
    rational::parse(s).ok_or_else(|| format!("{s:?} is not a rational number"))
}

fn parse_dist(s: &str) -> std::result::Result<Distribution, String> {
    s.parse()
}

fn parse_weights(s: &str) -> std::result::Result<WeightScheme, String> {
    s.parse()
}

impl RunFlags {
    pub fn config(&self, default_mode: ModeArg) -> Result<SolveConfig> {
        let mode = match self.mode.unwrap_or(default_mode) {
            ModeArg::Select => Mode::Select,
            ModeArg::Enumerate => Mode::Enumerate { limit: self.limit },
            ModeArg::Epsilon => match (self.epsilon, self.epsilon_rel) {
                (Some(e), _) => Mode::EpsilonAbs(e),
                (None, Some(r)) => Mode::EpsilonRel(r),
                (None, None) => Mode::EpsilonMin { bound: None },
            },
        };
        if !(self.time_limit > 0.0 && self.time_limit.is_finite()) {
            bail!(IpgError::Input("time limit must be a positive number of seconds".into()));
        }
        Ok(SolveConfig {
            mode,
            time_limit: Some(Duration::from_secs_f64(self.time_limit)),
            cut_batch: match self.cut_batch {
                BatchArg::All => CutBatch::All,
                BatchArg::One => CutBatch::One,
            },
            parallel_oracle: self.parallel_oracle,
        })
    }
}

/// Loads and solves one instance file.
pub fn solve_file(path: &Path, flags: &RunFlags, default_mode: ModeArg) -> Result<SolveReport> {
    let config = flags.config(default_mode)?;
    let file = InstanceFile::load(path)?;
    let game = file.to_game()?;
    let mut solver = Solver::new(&game)?;
    let exact = matches!(config.mode, Mode::Select | Mode::Enumerate { .. });
    if exact && flags.strategic_cuts == Toggle::On {
        if let Some(kpg) = file.knapsack()? {
            let dom = dominance_cuts(&kpg, solver.lifted());
            let pay = payoff_cuts(&kpg, solver.lifted());
            solver.add_pool(dom);
            solver.add_pool(pay);
        }
    }
    Ok(solver.run(&config)?)
}

pub fn instance_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Appends rows, writing the header first if the file is new or empty.
pub fn append_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut w = csv::Writer::from_writer(f);
    if fresh {
        w.write_record(header)?;
    }
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, format!("{text}\n")).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").context("cannot write to standard output")
        }
    }
}

fn status_code(status: Status) -> u8 {
    match status {
        Status::TimeLimit => 2,
        _ => 0,
    }
}

fn run_solve(args: &SolveArgs, default_mode: ModeArg) -> Result<u8> {
    let report = solve_file(&args.file, &args.flags, default_mode)?;
    emit(&serde_json::to_string_pretty(&report)?, args.out.as_deref())?;
    if let Some(csv) = &args.flags.csv {
        append_csv(csv, &CSV_HEADER, &[report.csv_row(&instance_name(&args.file))])?;
    }
    Ok(status_code(report.status))
}

fn run_gen(family: &GenFamily) -> Result<u8> {
    let (file, out) = match family {
        GenFamily::Kpg {
            n,
            m,
            dist,
            tenths,
            seed,
            out,
        } => (InstanceFile::Kpg(generate_kpg(*n, *m, *dist, *tenths, *seed)), out),
        GenFamily::Nfg {
            v,
            n,
            weights,
            separate,
            seed,
            out,
        } => {
            let opts = GridOptions {
                weights: *weights,
                separate_endpoints: *separate,
            };
            (InstanceFile::Nfg(generate_grid_with(*v, *n, opts, *seed)), out)
        }
        GenFamily::Qipg {
            n,
            m,
            lb,
            ub,
            convex,
            seed,
            out,
        } => {
            if !(1..=6).contains(n) || !(1..=10).contains(m) {
                bail!(IpgError::Input("qipg generation needs n in 1..=6 and m in 1..=10".into()));
            }
            let bounds = lb.zip(*ub);
            (InstanceFile::Qipg(generate_qipg(*n, *m, bounds, *convex, *seed)), out)
        }
        GenFamily::Cfld {
            n,
            locations,
            customers,
            designs,
            seed,
            out,
        } => (
            InstanceFile::Cfld(generate_cfld(*n, *locations, *customers, *designs, *seed)),
            out,
        ),
    };
    emit(&file.to_json(), out.as_deref())?;
    Ok(0)
}

fn run_oracle(file: &Path, out: Option<&Path>) -> Result<u8> {
    let game = InstanceFile::load(file)?.to_game()?;
    let result = all_pnes(&game)?;
    let json = serde_json::json!({
        "profiles": result.profiles.to_string(),
        "osw": rational::to_string(&result.osw),
        "pos": result.pos.map(|r| rational::to_string(&r)),
        "poa": result.poa.map(|r| rational::to_string(&r)),
        "pnes": result.pnes,
    });
    emit(&serde_json::to_string_pretty(&json)?, out)?;
    Ok(0)
}

fn run_reduce(problem: &ReduceProblem) -> Result<u8> {
    match problem {
        ReduceProblem::Bkp { file, out } => {
            let text = fs::read_to_string(file).with_context(|| format!("cannot read {}", file.display()))?;
            let bkp: BkpInstance = serde_json::from_str(&text).map_err(|e| IpgError::Input(format!("{e}")))?;
            let kpg = reduce_bkp(&bkp)?;
            emit(&serde_json::to_string_pretty(&kpg)?, out.as_deref())?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn,highs=error")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen { family } => run_gen(family),
        Command::Solve(a) => run_solve(a, ModeArg::Select),
        Command::Enumerate(a) => run_solve(a, ModeArg::Enumerate),
        Command::Epsilon(a) => run_solve(a, ModeArg::Epsilon),
        Command::Oracle { file, out } => run_oracle(file, out.as_deref()),
        Command::Batch(a) => batch::run(a),
        Command::Reduce { problem } => run_reduce(problem),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
