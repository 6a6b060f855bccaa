use std::io::{BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::config::{Algo, ConfigFlags, EncodingArg, RunConfig};
use crate::error::{io_err, CliError};
use crate::metrics::{write_summary, MetricsWriter, SummaryRow};
use searchassist_core::a3c::{run_sweep, sweep_grid, train_a3c_with, LstmPolicy, MetricRow};
use searchassist_core::env::{run_validation, RandomPolicy, ValidationSummary};
use searchassist_core::neural::{load_checkpoint, save_checkpoint};
use searchassist_core::par::Execution;
use searchassist_core::qagent::{q_from_json, q_to_json, train_q_with, GreedyQ, QTrainOptions};
use searchassist_core::synth::{synthetic_catalog, synthetic_logs};
use searchassist_core::usersim::{read_log_rows, sessions_to_sequences, ConditionalTable};
use searchassist_serve::session::SessionStore;
use searchassist_serve::{Assistant, Model};

pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const Q_TABLE_FILE: &str = "q_table.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const SUMMARY_FILE: &str = "summary.csv";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(io_err(path))
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    /// Session log as JSON lines.
    #[arg(long)]
    pub logs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn ingest(a: &IngestArgs) -> Result<(), CliError> {
    let file = std::fs::File::open(&a.logs).map_err(io_err(&a.logs))?;
    let rows = read_log_rows(BufReader::new(file))?;
    let sequences: Vec<_> = sessions_to_sequences(&rows)?.into_values().collect();
    if sequences.is_empty() {
        return Err(CliError::Data("no sessions".into()));
    }
    let table = ConditionalTable::build(&sequences)?;
    write_file(&a.out, &table.to_json())?;
    println!("rows {} sequences {} keys {}", rows.len(), sequences.len(), table.len());
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct SynthLogsArgs {
    #[arg(long, default_value_t = 3000)]
    pub sessions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Log output, JSON lines.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a matching synthetic catalog here.
    #[arg(long)]
    pub catalog_out: Option<PathBuf>,
    #[arg(long, default_value_t = 400)]
    pub assets: usize,
}

pub fn synth_logs(a: &SynthLogsArgs) -> Result<(), CliError> {
    if a.sessions == 0 {
        return Err(CliError::Usage("--sessions must be at least 1".into()));
    }
    let rows = synthetic_logs(a.sessions, a.seed);
    let mut out = String::new();
    for r in &rows {
        out.push_str(&serde_json::to_string(r).expect("log rows serialize"));
        out.push('\n');
    }
    write_file(&a.out, &out)?;
    if let Some(path) = &a.catalog_out {
        write_file(path, &synthetic_catalog(a.assets, a.seed).to_jsonl())?;
    }
    println!("sessions {} rows {}", a.sessions, rows.len());
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub algo: Option<Algo>,
    #[command(flatten)]
    pub flags: ConfigFlags,
    /// Run directory for the checkpoint, metrics and resolved config.
    #[arg(long)]
    pub out: PathBuf,
}

fn q_row(episode: usize, s: &ValidationSummary) -> MetricRow {
    MetricRow::from_summary(episode, 0, s)
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&a.flags, a.algo)?;
    let env = cfg.env()?;
    create_dir(&a.out)?;
    write_file(&a.out.join(CONFIG_FILE), &cfg.to_json())?;
    let mut metrics = MetricsWriter::create(&a.out.join(METRICS_FILE))?;
    let mut failed = None;
    let mut record = |row: &MetricRow| {
        if failed.is_none() {
            failed = metrics.write(row).err();
        }
    };
    let rows = match cfg.algo {
        Algo::A3c => {
            let run = train_a3c_with(&cfg.a3c, &env, &mut record)?;
            save_checkpoint(&a.out.join(CHECKPOINT_DIR), &run.params, cfg.a3c.encoding)?;
            run.metrics.rows
        }
        Algo::Q => {
            let opts = QTrainOptions {
                episodes: cfg.q_episodes,
                validation_episodes: cfg.validation_episodes,
                seed: cfg.seed,
            };
            let mut rows = Vec::new();
            let (table, _) = train_q_with(&env, &cfg.q, &opts, Execution::Sequential, |ep, s| {
                let row = q_row(ep, s);
                record(&row);
                rows.push(row);
            })?;
            write_file(&a.out.join(Q_TABLE_FILE), &q_to_json(&table, &cfg.q))?;
            rows
        }
    };
    if let Some(e) = failed {
        return Err(e);
    }
    metrics.finish()?;
    let tail = &rows[rows.len().saturating_sub(50)..];
    let mean = tail.iter().map(|r| r.avg_reward).sum::<f64>() / tail.len().max(1) as f64;
    println!("seed {} validations {} last-{} mean reward {mean:.3}", cfg.seed, rows.len(), tail.len());
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub flags: ConfigFlags,
    #[arg(long, value_delimiter = ',', default_values_t = [0.9])]
    pub gammas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [250])]
    pub lstm_sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_enum, default_values_t = [EncodingArg::Full])]
    pub encodings: Vec<EncodingArg>,
    #[arg(long, value_delimiter = ',', default_values_t = [0])]
    pub seeds: Vec<u64>,
    /// Episodes per worker skipped before window statistics.
    #[arg(long, default_value_t = 100)]
    pub warmup: usize,
    /// Run cells one after another instead of concurrently.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn cell_name(row: &SummaryRow) -> String {
    format!("cell-g{:.2}-h{}-{}-s{}.csv", row.gamma, row.hidden, row.encoding, row.seed)
}

pub fn sweep(a: &SweepArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&a.flags, Some(Algo::A3c))?;
    let encodings: Vec<_> = a.encodings.iter().map(|&e| e.into()).collect();
    let cells = sweep_grid(&a.gammas, &a.lstm_sizes, &encodings, &a.seeds);
    if cells.is_empty() {
        return Err(CliError::Usage("sweep grid is empty".into()));
    }
    for c in &cells {
        searchassist_core::a3c::A3CConfig { gamma: c.gamma, hidden: c.hidden, ..cfg.a3c.clone() }.validate()?;
    }
    let env = cfg.env()?;
    create_dir(&a.out)?;
    write_file(&a.out.join(CONFIG_FILE), &cfg.to_json())?;
    let exec = if a.sequential { Execution::Sequential } else { Execution::Parallel };
    let results = run_sweep(&cfg.a3c, &env, &cells, a.warmup, exec)?;
    let mut summary = Vec::with_capacity(results.len());
    for r in &results {
        let row = SummaryRow::from(r);
        let mut w = MetricsWriter::create(&a.out.join(cell_name(&row)))?;
        for m in &r.metrics.rows {
            w.write(m)?;
        }
        w.finish()?;
        summary.push(row);
    }
    write_summary(&a.out.join(SUMMARY_FILE), &summary)?;
    println!(
        "{:>6} {:>6} {:>10} {:>5} {:>10} {:>10} {:>10}",
        "gamma", "lstm", "encoding", "seed", "reward", "variance", "value"
    );
    for r in &summary {
        println!(
            "{:>6.2} {:>6} {:>10} {:>5} {:>10.3} {:>10.3} {:>10.3}",
            r.gamma, r.hidden, r.encoding, r.seed, r.reward_mean, r.reward_variance, r.mean_state_value
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    A3c,
    Q,
    Random,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long, value_enum, default_value_t = PolicyKind::A3c)]
    pub algo: PolicyKind,
    /// A run directory, a checkpoint directory or a Q-table file.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub validation_episodes_total: usize,
    /// Use argmax instead of sampling for LSTM policies.
    #[arg(long)]
    pub greedy: bool,
    #[command(flatten)]
    pub flags: ConfigFlags,
}

#[derive(Debug, Serialize)]
struct ValidationReport {
    algo: String,
    episodes: usize,
    mean_reward: f64,
    mean_length: f64,
    completion_rate: f64,
    mean_state_value: f64,
}

fn locate(path: &Path, inner: &str) -> PathBuf {
    let candidate = path.join(inner);
    if candidate.exists() {
        candidate
    } else {
        path.to_path_buf()
    }
}

pub fn validate(a: &ValidateArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&a.flags, None)?;
    let env = cfg.env()?;
    let n = a.validation_episodes_total;
    if n == 0 {
        return Err(CliError::Usage("--validation-episodes-total must be at least 1".into()));
    }
    let checkpoint = || a.checkpoint.clone().ok_or_else(|| CliError::Usage("--checkpoint is required".into()));
    let exec = Execution::Parallel;
    let summary = match a.algo {
        PolicyKind::Random => run_validation(&env, &RandomPolicy, n, exec)?,
        PolicyKind::A3c => {
            let (params, manifest) = load_checkpoint(&locate(&checkpoint()?, CHECKPOINT_DIR))?;
            run_validation(
                &env,
                &LstmPolicy { params: &params, encoding: manifest.encoding, greedy: a.greedy },
                n,
                exec,
            )?
        }
        PolicyKind::Q => {
            let path = locate(&checkpoint()?, Q_TABLE_FILE);
            let (table, _) = q_from_json(&std::fs::read_to_string(&path).map_err(io_err(&path))?)?;
            run_validation(&env, &GreedyQ(&table), n, exec)?
        }
    };
    let report = ValidationReport {
        algo: format!("{:?}", a.algo).to_lowercase(),
        episodes: n,
        mean_reward: summary.mean_reward,
        mean_length: summary.mean_length,
        completion_rate: summary.completion_rate,
        mean_state_value: summary.mean_state_value,
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, value_enum, default_value_t = Algo::A3c)]
    pub algo: Algo,
    /// A run directory, a checkpoint directory or a Q-table file.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Catalog as JSON lines; defaults to the synthetic workbench catalog.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub workbench_seed: u64,
    /// Expected LSTM hidden size; startup fails if the checkpoint differs.
    #[arg(long)]
    pub lstm: Option<usize>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Session store file; sessions live in memory when omitted.
    #[arg(long)]
    pub sessions: Option<PathBuf>,
    /// Per-turn JSONL trace.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, default_value_t = 60)]
    pub session_ttl_minutes: u64,
}

/// Loads everything `serve` needs without binding a socket.
pub fn build_assistant(a: &ServeArgs) -> Result<Assistant, CliError> {
    let model = match a.algo {
        Algo::A3c => Model::load_lstm(&locate(&a.checkpoint, CHECKPOINT_DIR), a.lstm)?,
        Algo::Q => Model::load_q(&locate(&a.checkpoint, Q_TABLE_FILE))?,
    };
    let data =
        crate::config::DataConfig { user_model: None, catalog: a.catalog.clone(), workbench_seed: a.workbench_seed };
    let cfg = RunConfig { data, ..RunConfig::default() };
    cfg.validate()?;
    let catalog = Arc::new(cfg.catalog()?);
    let ttl = Duration::from_secs(a.session_ttl_minutes * 60);
    let store = match &a.sessions {
        Some(p) => SessionStore::open(p, ttl)?,
        None => SessionStore::in_memory(ttl),
    };
    let mut assistant = Assistant::new(model, catalog, store);
    if let Some(t) = &a.trace {
        assistant = assistant.with_trace(t)?;
    }
    Ok(assistant)
}

pub fn serve(a: &ServeArgs) -> Result<(), CliError> {
    let assistant = Arc::new(build_assistant(a)?);
    let addr: SocketAddr =
        format!("{}:{}", a.host, a.port).parse().map_err(|e| CliError::Usage(format!("bad address: {e}")))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("serving model {} on http://{addr}", assistant.model.version());
    std::io::stdout().flush().ok();
    rt.block_on(searchassist_serve::serve(assistant, addr)).map_err(|e| CliError::Runtime(format!("{addr}: {e}")))
}
