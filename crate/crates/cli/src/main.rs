//! `fairvfl`: train, sweep, verify and report.
//!
//! Settings come from the experiment file given with `--config`. Flags
//! override the file; for the data directory the order is `--data-dir`,
//! then `FAIRVFL_DATA_DIR`, then the file.
//!
//! Exit codes: 0 ok, 1 verify failure, 2 configuration or argument error,
//! 3 security guard, 4 divergence, 5 data error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fairvfl_core::experiment::{
    run_eps_sweep, run_experiment, run_q_sweep, run_verify, write_eps_sweep, write_experiment, write_q_sweep,
    ExperimentConfig, VerifyOptions,
};
use fairvfl_core::numfmt::g6;

#[derive(Parser)]
#[command(name = "fairvfl", version, about = "Fairness-constrained vertical federated learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the fair model (and the baseline) for every seed and write artifacts.
    Train(RunArgs),
    /// Train once per value of epsilon or Q and write the sweep tables.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values; defaults to the `[sweep]` list of the config.
        #[arg(long)]
        values: Option<String>,
    },
    /// Run the synthetic property suite.
    Verify {
        /// Print the results as JSON.
        #[arg(long)]
        json: bool,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Combine the `table1.csv` files of several artifact directories.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write the combined table here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Epsilon,
    Q,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run only this seed instead of the config's list.
    #[arg(long)]
    seed: Option<u64>,
    /// Run parties one after another (results are identical either way).
    #[arg(long)]
    deterministic: bool,
    /// Warn instead of failing when a party holds at most 2 features.
    #[arg(long)]
    allow_insecure: bool,
    /// Keep raw message payloads in the transcripts.
    #[arg(long)]
    debug_payloads: bool,
    /// Output directory (default: the config's `out`, else `runs/<name>`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Override `train.max_rounds`.
    #[arg(long)]
    rounds: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.override_data_dir(self.data_dir.as_deref());
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(r) = self.rounds {
            cfg.train.max_rounds = r;
        }
        cfg.train.deterministic |= self.deterministic;
        cfg.train.allow_insecure |= self.allow_insecure;
        cfg.train.debug_payloads |= self.debug_payloads;
        if let Some(o) = &self.out {
            cfg.out = Some(std::path::absolute(o)?);
        }
        let out = cfg.out_dir();
        Ok((cfg, out))
    }
}

fn parse_list<T: std::str::FromStr>(raw: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    let items: Vec<&str> = raw.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        bail!(UsageError("--values is empty".into()));
    }
    items.iter().map(|s| s.parse::<T>().with_context(|| format!("bad value `{s}`"))).collect()
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn train(args: &RunArgs) -> anyhow::Result<()> {
    let (cfg, out) = args.load()?;
    log::info!("training {} on seeds {:?}", cfg.name, cfg.seeds);
    let outcome = run_experiment(&cfg)?;
    write_experiment(&outcome, &out)?;
    print!("{}", std::fs::read_to_string(out.join("report.txt"))?);
    println!("artifacts: {}", out.display());
    Ok(())
}

fn sweep(args: &RunArgs, axis: Axis, values: Option<&str>) -> anyhow::Result<()> {
    let (cfg, out) = args.load()?;
    match axis {
        Axis::Epsilon => {
            let values = match values {
                Some(v) => parse_list::<f64>(v)?,
                None => cfg.sweep.epsilon.clone(),
            };
            if values.is_empty() {
                bail!(UsageError("no epsilon values: pass --values or set `sweep.epsilon`".into()));
            }
            let s = run_eps_sweep(&cfg, &values)?;
            write_eps_sweep(&s, &out)?;
        }
        Axis::Q => {
            let values = match values {
                Some(v) => parse_list::<usize>(v)?,
                None => cfg.sweep.q.clone(),
            };
            if values.is_empty() {
                bail!(UsageError("no Q values: pass --values or set `sweep.q`".into()));
            }
            let s = run_q_sweep(&cfg, &values, &cfg.sweep.q_epsilon)?;
            write_q_sweep(&s, &out)?;
        }
    }
    print!("{}", std::fs::read_to_string(out.join("report.txt"))?);
    println!("artifacts: {}", out.display());
    Ok(())
}

fn verify(json: bool, corrupt_gradient: bool) -> anyhow::Result<bool> {
    let report = run_verify(VerifyOptions { corrupt_gradient });
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.render());
    }
    let failed = report.failed();
    if !failed.is_empty() {
        eprintln!("failed properties: {}", failed.join(", "));
    }
    Ok(failed.is_empty())
}

fn report(dirs: &[PathBuf], csv_out: Option<&Path>) -> anyhow::Result<()> {
    let mut rows: Vec<csv::StringRecord> = Vec::new();
    let mut header = None;
    for d in dirs {
        let path = d.join("table1.csv");
        let mut r = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
        header.get_or_insert(r.headers()?.clone());
        for rec in r.records() {
            rows.push(rec?);
        }
    }
    let header = header.expect("at least one directory");
    let col = |name: &str| header.iter().position(|h| h == name).with_context(|| format!("no `{name}` column"));
    let (ds, me, ac, acs, fr, frs, hm) = (
        col("dataset")?,
        col("method")?,
        col("accuracy_mean")?,
        col("accuracy_std")?,
        col("fairness_mean")?,
        col("fairness_std")?,
        col("harmonic_mean")?,
    );
    println!("{:<14}  {:<10}  {:>18}  {:>18}  {:>8}", "dataset", "method", "AC (%)", "FR (%)", "HM (%)");
    for r in &rows {
        let num = |j: usize| r[j].parse::<f64>().map(g6).unwrap_or_else(|_| r[j].to_string());
        println!(
            "{:<14}  {:<10}  {:>18}  {:>18}  {:>8}",
            &r[ds],
            &r[me],
            format!("{} ± {}", num(ac), num(acs)),
            format!("{} ± {}", num(fr), num(frs)),
            num(hm)
        );
    }
    if let Some(p) = csv_out {
        let mut w = csv::Writer::from_path(p)?;
        w.write_record(&header)?;
        for r in &rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(core) = e.downcast_ref::<fairvfl_core::Error>() {
        return core.exit_code() as u8;
    }
    if e.downcast_ref::<std::io::Error>().is_some() || e.downcast_ref::<csv::Error>().is_some() {
        return 5;
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => train(a).map(|()| true),
        Command::Sweep { run, axis, values } => sweep(run, *axis, values.as_deref()).map(|()| true),
        Command::Verify { json, corrupt_gradient } => verify(*json, *corrupt_gradient),
        Command::Report { dirs, csv } => report(dirs, csv.as_deref()).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
