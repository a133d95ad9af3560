use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use feddpc_core::orchestrator::default_workers;
use feddpc_core::report::{comparison_csv, metrics_csv, sweep_csv, ComparisonRow, Summary};
use feddpc_core::{dirichlet_partition, grid_search, run, Dataset, RunConfig, RunResult};

use crate::config::{fairness_mismatch, ConfigError, ConfigFile};

/// Failure classes with distinct exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

struct Prepared {
    train: Dataset,
    test: Dataset,
    run_cfg: RunConfig,
}

fn prepare(cfg: &ConfigFile) -> anyhow::Result<Prepared> {
    let (train, test) = cfg.datasets().context("loading data")?;
    if train.n_features() != test.n_features() {
        anyhow::bail!(
            "train has {} features but test has {}",
            train.n_features(),
            test.n_features()
        );
    }
    let n_classes = train.n_classes().max(test.n_classes());
    let run_cfg = cfg.run_config(train.n_features(), n_classes);
    Ok(Prepared { train, test, run_cfg })
}

fn write(dir: &Path, file: &str, contents: &str) -> anyhow::Result<PathBuf> {
    let path = dir.join(file);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn summary(cfg: &ConfigFile, result: &RunResult) -> Summary {
    Summary {
        best_accuracy: result.best_accuracy,
        best_round: result.best_round,
        rounds: cfg.rounds,
        strategy: cfg.strategy.kind,
        lambda: cfg.strategy.lambda,
        seed: cfg.run_seed,
    }
}

/// Runs one experiment and writes its artifacts into `cfg.run_dir()`.
fn execute(cfg: &ConfigFile) -> anyhow::Result<RunResult> {
    let Prepared { train, test, run_cfg } = prepare(cfg)?;
    let dir = cfg.run_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write(&dir, "resolved_config.toml", &cfg.to_toml())?;

    log::info!("{}: {} rounds of {}", cfg.name, cfg.rounds, cfg.strategy.kind);
    let result = run(&run_cfg, &train, &test).with_context(|| format!("run `{}`", cfg.name))?;

    write(&dir, "metrics.csv", &metrics_csv(&result, cfg.wall_clock))?;
    let json = serde_json::to_string_pretty(&summary(cfg, &result))?;
    write(&dir, "summary.json", &(json + "\n"))?;
    if cfg.save_partition {
        let partition = dirichlet_partition(&train, &run_cfg.partition)?;
        let map: std::collections::BTreeMap<String, &[usize]> = partition
            .clients
            .iter()
            .map(|c| (c.client_id.to_string(), c.sample_indices.as_slice()))
            .collect();
        write(&dir, "partition.json", &serde_json::to_string(&map)?)?;
    }
    Ok(result)
}

pub fn cmd_run(config: &Path, overrides: &[String]) -> CliResult<()> {
    let cfg = ConfigFile::load(config, overrides)?;
    let result = execute(&cfg)?;
    println!(
        "{}: best accuracy {} at round {} -> {}",
        cfg.name,
        result.best_accuracy,
        result.best_round,
        cfg.run_dir().display()
    );
    Ok(())
}

pub fn cmd_compare(configs: &[PathBuf], overrides: &[String], out: Option<&Path>) -> CliResult<()> {
    if configs.len() < 2 {
        return Err(CliError::Usage("compare needs at least two configs".into()));
    }
    let cfgs = configs
        .iter()
        .map(|p| ConfigFile::load(p, overrides))
        .collect::<Result<Vec<_>, _>>()?;
    for (i, cfg) in cfgs.iter().enumerate().skip(1) {
        if let Some(field) = fairness_mismatch(&cfgs[0], cfg) {
            return Err(CliError::Usage(format!(
                "{} and {} differ in `{field}`; compared runs must share data, partition, model and seeds",
                configs[0].display(),
                configs[i].display()
            )));
        }
        if cfgs[..i].iter().any(|c| c.run_dir() == cfg.run_dir()) {
            return Err(CliError::Usage(format!("duplicate experiment name `{}`", cfg.name)));
        }
    }

    let mut rows = Vec::with_capacity(cfgs.len());
    for cfg in &cfgs {
        let result = execute(cfg)?;
        rows.push(ComparisonRow {
            name: cfg.name.clone(),
            best_accuracy: result.best_accuracy,
            best_round: result.best_round,
            avg_round_wall_ms: result.mean_round_wall_ms(),
        });
    }
    let out = out.map_or_else(|| cfgs[0].output_dir.clone(), Path::to_path_buf);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let path = write(&out, "comparison.csv", &comparison_csv(&rows))?;
    for row in &rows {
        println!("{}: best accuracy {} at round {}", row.name, row.best_accuracy, row.best_round);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn parse_grid(flag: &str, raw: Option<&str>, fallback: f64) -> CliResult<Vec<f64>> {
    let Some(raw) = raw else {
        return Ok(vec![fallback]);
    };
    let grid = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Usage(format!("{flag}: `{s}` is not a number")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    if grid.is_empty() {
        return Err(CliError::Usage(format!("{flag} is empty")));
    }
    Ok(grid)
}

pub fn cmd_sweep(
    config: &Path,
    overrides: &[String],
    lambda_grid: Option<&str>,
    lr_grid: Option<&str>,
) -> CliResult<()> {
    let cfg = ConfigFile::load(config, overrides)?;
    let lambdas = parse_grid("--lambda-grid", lambda_grid, cfg.strategy.lambda)?;
    let lrs = parse_grid("--lr-grid", lr_grid, cfg.client.local_lr)?;
    let Prepared { train, test, run_cfg } = prepare(&cfg)?;

    let rows = grid_search(&run_cfg, &lambdas, &lrs, &train, &test, default_workers())
        .context("grid search")?;
    let dir = cfg.run_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write(&dir, "resolved_config.toml", &cfg.to_toml())?;
    let path = write(&dir, "sweep.csv", &sweep_csv(&rows))?;
    if let Some((best, acc)) = rows.first().and_then(|r| Some((r, r.best_accuracy()?))) {
        println!("best: lambda={} lr={} accuracy {acc}", best.lambda, best.lr);
    }
    println!("wrote {}", path.display());
    Ok(())
}
