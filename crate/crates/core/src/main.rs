use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use svdrec::app::{self, DirLock, Layout, Recorder};
use svdrec::config::{RunConfig, SWEEP_DIMS};
use svdrec::embed::Method;
use svdrec::Result;

#[derive(Parser)]
#[command(name = "svdrec", version, about = "SVD graph embeddings for top-K recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and cache the normalized interaction graph.
    Prepare(Opts),
    /// Compute SVD embeddings from the cached graph.
    Embed(Opts),
    /// Train the scoring head on stored embeddings.
    Train(Opts),
    /// Evaluate the stored checkpoint.
    Eval(Opts),
    /// prepare, embed, train and eval in one go.
    Run {
        #[command(flatten)]
        opts: Opts,
        /// Repeat the run for each embedding width in 64..=1024.
        #[arg(long)]
        sweep: bool,
    },
}

#[derive(Args)]
struct Opts {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train_file: Option<PathBuf>,
    #[arg(long)]
    test_file: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    svd_dim: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Extra `key=value` overrides using config-file keys.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Opts {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                svdrec::Error::InvalidParam(format!("--set expects KEY=VALUE, got {kv:?}"))
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(p) = &self.train_file {
            cfg.train_file = p.clone();
        }
        if let Some(p) = &self.test_file {
            cfg.test_file = p.clone();
        }
        if let Some(p) = &self.out_dir {
            cfg.out_dir = p.clone();
        }
        if let Some(v) = self.seed {
            cfg.train.seed = v;
        }
        if let Some(v) = self.method {
            cfg.method = v;
        }
        if let Some(v) = self.svd_dim {
            cfg.svd_dim = v;
        }
        if let Some(v) = self.hidden {
            cfg.train.hidden = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.set("batch_size", &v.to_string())?;
        }
        if let Some(v) = self.k {
            cfg.train.eval_k = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<()> {
    let (opts, sweep) = match &cli.command {
        Command::Prepare(o) | Command::Embed(o) | Command::Train(o) | Command::Eval(o) => (o, false),
        Command::Run { opts, sweep } => (opts, *sweep),
    };
    let cfg = opts.resolve()?;
    let _lock = DirLock::acquire(&cfg.out_dir)?;
    let layout = Layout::new(&cfg.out_dir);
    let mut stdout = io::stdout().lock();
    let mut stderr = io::stderr().lock();
    let mut rec = Recorder::new(&mut stdout, &layout)?;
    match cli.command {
        Command::Prepare(_) => {
            let out = app::prepare(&cfg, &mut rec)?;
            if out.cache_hit {
                writeln!(stderr, "prepare: cache hit, nothing to do")?;
            }
        }
        Command::Embed(_) => {
            let out = app::embed(&cfg, &mut rec)?;
            writeln!(stderr, "embed: svd took {:.3}s", out.svd_seconds)?;
        }
        Command::Train(_) => {
            app::train(&cfg, &mut rec)?;
        }
        Command::Eval(_) => {
            app::eval(&cfg, &mut rec, &mut stderr)?;
        }
        Command::Run { .. } if sweep => {
            app::sweep(&cfg, &SWEEP_DIMS, &mut rec, &mut stderr)?;
        }
        Command::Run { .. } => {
            app::run(&cfg, &mut rec, &mut stderr)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
