//! Experiment runner behind the `cellhom` binary.

pub mod commands;
pub mod config;
pub mod store;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::{CommandKind, Output};
pub use config::{ExperimentConfig, IntegrandId, XiSpec};
pub use store::{key_hash, store_key, ResultStore, VERSION_TAG};

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "cellhom", version, about = "Cell-formula homogenization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Results directory [default: the config's `out`, else `results`].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Recompute even when the store holds a result for this key.
    #[arg(long, global = true)]
    pub no_cache: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Pointwise G, g, Φ and W on the ξ list.
    Eval,
    /// One cell problem per ξ.
    Cell,
    /// Homogenized density over the ξ set.
    Homogenize,
    /// Radial extension along the t list.
    Radial,
    /// Sampled radial moduli.
    Delta,
    /// Structural checks of the example.
    Verify,
    /// Local Dirichlet convergence diagnostic.
    Gamma,
    /// Quasiconvex envelope bound at a frozen x.
    Qcx,
}

impl From<Command> for CommandKind {
    fn from(c: Command) -> Self {
        match c {
            Command::Eval => CommandKind::Eval,
            Command::Cell => CommandKind::Cell,
            Command::Homogenize => CommandKind::Homogenize,
            Command::Radial => CommandKind::Radial,
            Command::Delta => CommandKind::Delta,
            Command::Verify => CommandKind::Verify,
            Command::Gamma => CommandKind::Gamma,
            Command::Qcx => CommandKind::Qcx,
        }
    }
}

/// Result of [`execute`].
pub struct RunReport {
    pub output: Output,
    pub cached: bool,
    pub hash: String,
    pub out_dir: PathBuf,
}

/// Runs `kind` on `cfg`, consulting the store in `out` unless `use_cache` is off,
/// and writes the artifacts into `out`.
pub fn execute(kind: CommandKind, cfg: &ExperimentConfig, out: &Path, use_cache: bool) -> Result<RunReport> {
    let store = ResultStore::open(out)?;
    let key = store_key(kind.name(), &kind.config_slice(cfg)?)?;
    let hash = key_hash(&key);
    let cached = if use_cache { store.lookup(&key)? } else { None };
    let (output, was_cached) = match cached {
        Some(files) => (restore(files), true),
        None => {
            let output = kind.run(cfg)?;
            let mut files = output.artifacts.clone();
            files.push(("exit".into(), output.exit.to_string().into_bytes()));
            files.push(("summary.txt".into(), output.summary.clone().into_bytes()));
            store.save(
                &key,
                &format!("{} ({} points)", kind.name(), cfg.xi.points().map_or(0, |p| p.len())),
                &files,
            )?;
            (output, false)
        }
    };
    for (name, bytes) in &output.artifacts {
        std::fs::write(out.join(name), bytes)?;
    }
    Ok(RunReport { output, cached: was_cached, hash, out_dir: out.to_path_buf() })
}

fn restore(files: store::Artifacts) -> Output {
    let mut exit = 0;
    let mut summary = String::new();
    let mut artifacts = Vec::new();
    for (name, bytes) in files {
        match name.as_str() {
            "exit" => exit = String::from_utf8_lossy(&bytes).trim().parse().unwrap_or(1),
            "summary.txt" => summary = String::from_utf8_lossy(&bytes).into_owned(),
            _ => artifacts.push((name, bytes)),
        }
    }
    Output { artifacts, exit, summary }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn run(cli: &Cli) -> Result<i32> {
    let mut cfg = match &cli.common.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| match e {
            crate::Error::Io(io) => crate::Error::Config { field: path.display().to_string(), message: io.to_string() },
            other => other,
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    let out = cli.common.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("results"));
    std::fs::create_dir_all(&out)?;
    let kind = CommandKind::from(cli.command);
    let job = || execute(kind, &cfg, &out, !cli.common.no_cache);
    let report = match cli.common.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| crate::Error::InvalidArgument(e.to_string()))?
            .install(job)?,
        None => job()?,
    };
    // a closed pipe on stdout is not an error for the run
    let mut so = std::io::stdout().lock();
    let _ = writeln!(
        so,
        "{} [{}{}]\n{}",
        kind.name(),
        &report.hash[..12],
        if report.cached { ", cached" } else { "" },
        report.output.summary.trim_end()
    );
    for (name, _) in &report.output.artifacts {
        let _ = writeln!(so, "wrote {}", report.out_dir.join(name).display());
    }
    Ok(report.output.exit)
}
