use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{ExperimentConfig, Prepared, Source};
use crate::data::DatasetInfo;
use crate::error::{Error, Result};
use crate::fedsim::{audit_transcript, write_transcript};
use crate::metrics::{aggregate, compare_runs, evaluate, Aggregate, Comparison, EvalReport, MeanStd, RunMeta, Split};
use crate::numfmt::{g6, round_json};
use crate::optimizer::{run_training, write_trace_csv, RunTrace, TrainConfig, TrainSummary};

/// One trained model with its evaluations.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub config: TrainConfig,
    pub trace: RunTrace,
    pub train: EvalReport,
    pub test: EvalReport,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub info: DatasetInfo,
    pub fair: MethodRun,
    pub baseline: Option<MethodRun>,
}

/// Trains on `p.train`, audits the transcript and evaluates on both splits.
pub fn train_and_evaluate(p: &Prepared, cfg: TrainConfig, seed: u64) -> Result<MethodRun> {
    let trace = run_training(&p.train, &cfg)?;
    if let Err(v) = audit_transcript(&trace.transcript, p.train.n(), p.train.parties()) {
        return Err(Error::Invariant(format!(
            "transcript audit found {} violations, first: round {}: {}",
            v.len(),
            v[0].round,
            v[0].reason
        )));
    }
    let meta = RunMeta { seed, epsilon: cfg.epsilon, q: cfg.async_schedule.max_steps, constrained: cfg.constrained };
    let train = evaluate(&p.train, &trace.theta, Split::Train, meta)?;
    let test = evaluate(&p.test, &trace.theta, Split::Test, meta)?;
    Ok(MethodRun { config: cfg, trace, train, test })
}

pub fn run_seed(src: &Source, cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let p = src.prepare(cfg.split.train_count, seed)?;
    let fair = train_and_evaluate(&p, cfg.train_for_seed(seed), seed)?;
    let baseline = if cfg.baseline {
        let mut b = cfg.train_for_seed(seed);
        b.constrained = false;
        Some(train_and_evaluate(&p, b, seed)?)
    } else {
        None
    };
    Ok(SeedRun { seed, info: p.info, fair, baseline })
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub runs: Vec<SeedRun>,
    pub fair: Aggregate,
    pub baseline: Option<Aggregate>,
}

impl ExperimentOutcome {
    pub fn comparisons(&self) -> Vec<Comparison> {
        self.runs.iter().filter_map(|r| r.baseline.as_ref().map(|b| compare_runs(&r.fair.test, &b.test))).collect()
    }

    pub fn table(&self) -> Vec<TableRow> {
        let dataset = self.runs.first().map(|r| r.info.name.clone()).unwrap_or_default();
        let mut rows = vec![TableRow::new(&dataset, "fair_vfl", &self.fair)];
        if let Some(b) = &self.baseline {
            rows.push(TableRow::new(&dataset, "baseline", b));
        }
        rows
    }
}

/// Runs every seed (in parallel) on data loaded once.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let src = Source::load(cfg)?;
    let runs: Vec<SeedRun> = cfg.seeds.par_iter().map(|&s| run_seed(&src, cfg, s)).collect::<Result<_>>()?;
    let fair = aggregate(&runs.iter().map(|r| r.fair.test).collect::<Vec<_>>());
    let baseline = cfg
        .baseline
        .then(|| aggregate(&runs.iter().filter_map(|r| r.baseline.as_ref().map(|b| b.test)).collect::<Vec<_>>()));
    Ok(ExperimentOutcome { config: cfg.clone(), runs, fair, baseline })
}

/// One line of `table1.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub dataset: String,
    pub method: String,
    pub runs: usize,
    pub accuracy: MeanStd,
    pub fairness: MeanStd,
    pub harmonic_mean: f64,
    pub deo: MeanStd,
}

impl TableRow {
    fn new(dataset: &str, method: &str, a: &Aggregate) -> Self {
        Self {
            dataset: dataset.into(),
            method: method.into(),
            runs: a.runs,
            accuracy: a.accuracy,
            fairness: a.fairness,
            harmonic_mean: a.harmonic_mean,
            deo: a.deo,
        }
    }
}

pub(super) fn write_rounded_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut v = serde_json::to_value(value)?;
    round_json(&mut v);
    crate::optimizer::write_json(path, &v)
}

pub(super) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_method(dir: &Path, run: &MethodRun, seed: u64) -> Result<()> {
    create_dir(dir)?;
    write_trace_csv(&dir.join("trace.csv"), &run.trace)?;
    write_transcript(&dir.join("transcript.ndjson"), &run.trace.transcript)?;
    #[derive(Serialize)]
    struct MethodSummary<'a> {
        #[serde(flatten)]
        training: TrainSummary<'a>,
        train: EvalReport,
        test: EvalReport,
    }
    let s = MethodSummary { training: TrainSummary::new(&run.trace, &run.config, seed), train: run.train, test: run.test };
    write_rounded_json(&dir.join("summary.json"), &s)
}

fn write_table(path: &Path, rows: &[TableRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "dataset",
        "method",
        "runs",
        "accuracy_mean",
        "accuracy_std",
        "fairness_mean",
        "fairness_std",
        "harmonic_mean",
        "deo_mean",
    ])?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.method.clone(),
            r.runs.to_string(),
            g6(r.accuracy.mean),
            g6(r.accuracy.std),
            g6(r.fairness.mean),
            g6(r.fairness.std),
            g6(r.harmonic_mean),
            g6(r.deo.mean),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(super) fn describe_setup(cfg: &ExperimentConfig, info: &DatasetInfo) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "dataset {}: {} usable rows ({} dropped for missing values, {} filtered out), train {} / test {}",
        info.name, info.usable_rows, info.dropped_missing, info.filtered_out, info.train_rows, info.test_rows
    );
    let widths: Vec<String> = info.widths.iter().map(usize::to_string).collect();
    let _ = writeln!(s, "parties {}, block widths {}", info.widths.len(), widths.join(" "));
    let t = &cfg.train;
    let _ = writeln!(
        s,
        "epsilon {}, Q {} ({:?}), max rounds {}, schedule {}",
        g6(t.epsilon),
        t.async_schedule.max_steps,
        t.async_schedule.mode,
        t.max_rounds,
        serde_json::to_string(&t.schedule).unwrap_or_default()
    );
    let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(s, "seeds {}", seeds.join(" "));
    for w in &info.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

fn pm(m: MeanStd) -> String {
    format!("{} ± {}", g6(m.mean), g6(m.std))
}

pub fn render_report(o: &ExperimentOutcome) -> String {
    let mut s = format!("experiment {}\n", o.config.name);
    if let Some(r) = o.runs.first() {
        s.push_str(&describe_setup(&o.config, &r.info));
    }
    let _ = writeln!(s, "\n{:<10}  {:>20}  {:>20}  {:>10}  {:>12}", "method", "AC (%)", "FR (%)", "HM (%)", "test |D|");
    for row in o.table() {
        let _ = writeln!(
            s,
            "{:<10}  {:>20}  {:>20}  {:>10}  {:>12}",
            row.method,
            pm(row.accuracy),
            pm(row.fairness),
            g6(row.harmonic_mean),
            g6(row.deo.mean)
        );
    }
    let _ = writeln!(
        s,
        "\n{:>6}  {:<10}  {:>9}  {:>9}  {:>9}  {:>10}  {:>10}  {:>10}  {:>10}",
        "seed", "method", "AC", "FR", "HM", "train |D|", "loss", "lambda1", "lambda2"
    );
    for r in &o.runs {
        for (name, m) in std::iter::once(("fair_vfl", &r.fair)).chain(r.baseline.as_ref().map(|b| ("baseline", b))) {
            let last = m.trace.last();
            let _ = writeln!(
                s,
                "{:>6}  {:<10}  {:>9}  {:>9}  {:>9}  {:>10}  {:>10}  {:>10}  {:>10}",
                r.seed,
                name,
                g6(m.test.accuracy),
                g6(m.test.fairness),
                g6(m.test.harmonic_mean),
                g6(m.train.deo),
                g6(last.loss),
                g6(last.lambda1),
                g6(last.lambda2)
            );
        }
    }
    let cmp = o.comparisons();
    if !cmp.is_empty() {
        let dominated = cmp.iter().filter(|c| c.fair_dominates_hm).count();
        let _ = writeln!(s, "\nfair run has the higher HM on {dominated} of {} seeds", cmp.len());
    }
    for r in &o.runs {
        for w in r.fair.trace.warnings.iter().chain(r.baseline.iter().flat_map(|b| &b.trace.warnings)) {
            let _ = writeln!(s, "seed {}: {w}", r.seed);
        }
    }
    s
}

/// Writes the whole artifact directory: config echo, per-seed traces,
/// transcripts and summaries, `summary.json`, `table1.csv`, `report.txt`.
pub fn write_experiment(o: &ExperimentOutcome, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let echo = o.config.to_toml()?;
    std::fs::write(dir.join("config.toml"), echo).map_err(|e| Error::io(dir.join("config.toml"), e))?;
    for r in &o.runs {
        let seed_dir = dir.join(format!("seed-{}", r.seed));
        write_method(&seed_dir.join("fair_vfl"), &r.fair, r.seed)?;
        if let Some(b) = &r.baseline {
            write_method(&seed_dir.join("baseline"), b, r.seed)?;
        }
    }

    #[derive(Serialize)]
    struct SeedEntry<'a> {
        seed: u64,
        fair_vfl: &'a EvalReport,
        baseline: Option<&'a EvalReport>,
        fair_rounds: usize,
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        name: &'a str,
        seeds: &'a [u64],
        dataset: Option<&'a DatasetInfo>,
        fair_vfl: &'a Aggregate,
        baseline: Option<&'a Aggregate>,
        runs: Vec<SeedEntry<'a>>,
        comparisons: Vec<Comparison>,
        config: &'a ExperimentConfig,
    }
    let summary = Summary {
        name: &o.config.name,
        seeds: &o.config.seeds,
        dataset: o.runs.first().map(|r| &r.info),
        fair_vfl: &o.fair,
        baseline: o.baseline.as_ref(),
        runs: o
            .runs
            .iter()
            .map(|r| SeedEntry {
                seed: r.seed,
                fair_vfl: &r.fair.test,
                baseline: r.baseline.as_ref().map(|b| &b.test),
                fair_rounds: r.fair.trace.rounds(),
            })
            .collect(),
        comparisons: o.comparisons(),
        config: &o.config,
    };
    write_rounded_json(&dir.join("summary.json"), &summary)?;
    write_table(&dir.join("table1.csv"), &o.table())?;
    let report = render_report(o);
    std::fs::write(dir.join("report.txt"), report).map_err(|e| Error::io(dir.join("report.txt"), e))
}
