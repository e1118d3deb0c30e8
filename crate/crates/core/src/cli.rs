//! The `odd` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid configuration or input,
//! 3 runtime failure.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::drift::{run_online, HarnessConfig, ItemRecord};
use crate::error::{Error, Result};
use crate::fusion::Strategy;
use crate::lm::serve;
use crate::metrics::{aggregate, results_table, MetricBundle};
use crate::scenario::{Experiment, Scenario, StreamRecord};
use crate::trie::PrefixTrie;
use crate::vocab::{TokenId, Vocab};

#[derive(Debug, Parser)]
#[command(name = "odd", version, about = "Trie-prior fusion decoding experiments under domain drift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Run configuration (TOML); falls back to $ODD_CONFIG.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the scenario and config seeds.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the drift stream and write it as JSON lines.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the online loop for one strategy.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Keep per-step diagnostics and prior dumps in the records.
        #[arg(long)]
        trace: bool,
        /// Output directory.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Also write the final trie snapshot.
        #[arg(long)]
        save_trie: bool,
    },
    /// Run all strategies on the same stream and write one results table.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Inspect trie snapshots.
    Trie {
        #[command(subcommand)]
        action: TrieAction,
    },
    /// Train the n-gram base model on the scenario's training concepts.
    TrainLm {
        #[command(flatten)]
        common: Common,
        /// Model output (JSON).
        #[arg(short, long)]
        out: PathBuf,
        /// Vocabulary output; defaults to the model path with a `.vocab` extension.
        #[arg(long)]
        vocab_out: Option<PathBuf>,
    },
    /// Serve the configured base model over the external logits protocol.
    ServeLm {
        #[command(flatten)]
        common: Common,
        /// TCP address to listen on; stdio when omitted.
        #[arg(long)]
        listen: Option<String>,
        /// Stop after this many TCP connections.
        #[arg(long)]
        max_connections: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
enum TrieAction {
    /// Print header statistics as JSON.
    Inspect { snapshot: PathBuf },
    /// Print every node as a JSON line.
    Dump {
        snapshot: PathBuf,
        /// Vocabulary file for printing tokens as text.
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                3
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate { common, out } => simulate(&common, out.as_deref()),
        Command::Run { common, strategy, trace, out, save_trie } => {
            let (config, experiment) = load(&common)?;
            let strategy = strategy.unwrap_or(config.strategy);
            let dir = out.unwrap_or_else(|| config.output.dir.clone());
            fs::create_dir_all(&dir)?;
            write_vocab(&experiment.vocab, &dir.join("vocab.txt"))?;
            let (records, trie) = run_strategy(&config, &experiment, strategy, trace || config.trace)?;
            write_records(&records, &dir.join(format!("{strategy}.jsonl")))?;
            if save_trie {
                fs::write(dir.join(format!("{strategy}.trie")), trie.snapshot())?;
            }
            print!("{}", results_table(&[(strategy.to_string(), mean_metrics(&records)?)]));
            Ok(())
        }
        Command::Compare { common, trace, out } => {
            let (config, experiment) = load(&common)?;
            let dir = out.unwrap_or_else(|| config.output.dir.clone());
            fs::create_dir_all(&dir)?;
            write_vocab(&experiment.vocab, &dir.join("vocab.txt"))?;
            let mut rows = Vec::new();
            for strategy in Strategy::ALL {
                let (records, _) = run_strategy(&config, &experiment, strategy, trace || config.trace)?;
                write_records(&records, &dir.join(format!("{strategy}.jsonl")))?;
                rows.push((strategy.to_string(), mean_metrics(&records)?));
            }
            let table = results_table(&rows);
            fs::write(dir.join("results.tsv"), &table)?;
            print!("{table}");
            Ok(())
        }
        Command::Trie { action } => trie_command(action),
        Command::TrainLm { common, out, vocab_out } => {
            let (config, experiment) = load(&common)?;
            let model = experiment.train_ngram(config.base_lm.order, config.base_lm.smoothing)?;
            fs::write(&out, model.to_json()?)?;
            write_vocab(&experiment.vocab, &vocab_out.unwrap_or_else(|| out.with_extension("vocab")))?;
            Ok(())
        }
        Command::ServeLm { common, listen, max_connections } => {
            let (config, experiment) = load(&common)?;
            let mut model = config.base_model(&experiment)?;
            match listen {
                None => serve(model.as_mut(), io::stdin().lock(), io::stdout().lock()),
                Some(addr) => {
                    let listener = TcpListener::bind(&addr)?;
                    eprintln!("listening on {}", listener.local_addr()?);
                    for (served, stream) in listener.incoming().enumerate() {
                        let stream = stream?;
                        let reader = BufReader::new(stream.try_clone()?);
                        if let Err(e) = serve(model.as_mut(), reader, BufWriter::new(stream)) {
                            eprintln!("connection closed: {e}");
                        }
                        if max_connections.is_some_and(|m| served + 1 >= m) {
                            break;
                        }
                    }
                    Ok(())
                }
            }
        }
    }
}

fn load(common: &Common) -> Result<(RunConfig, Experiment)> {
    let config = RunConfig::resolve(common.config.as_deref())?;
    let mut scenario = Scenario::load(&common.scenario)?;
    if let Some(seed) = common.seed.or(config.seed) {
        scenario.seed = seed;
    }
    Ok((config, Experiment::prepare(scenario)?))
}

fn simulate(common: &Common, out: Option<&Path>) -> Result<()> {
    let (_, experiment) = load(common)?;
    let records: Vec<StreamRecord> =
        experiment.stream.iter().map(|i| StreamRecord::from_item(i, &experiment.vocab)).collect::<Result<_>>()?;
    match out {
        Some(path) => write_jsonl(&records, BufWriter::new(File::create(path)?)),
        None => write_jsonl(&records, io::stdout().lock()),
    }
}

/// Runs one strategy from a fresh trie and base model.
pub fn run_strategy(
    config: &RunConfig,
    experiment: &Experiment,
    strategy: Strategy,
    trace: bool,
) -> Result<(Vec<ItemRecord>, PrefixTrie)> {
    let mut trie = experiment.initial_trie(config.trie_config(), config.trie.warm_start)?;
    let mut provider = config.base_model(experiment)?;
    let harness = HarnessConfig {
        fusion: config.fusion_config(strategy),
        weights: config.scoring,
        max_new_tokens: experiment.scenario.max_new_tokens,
        end_marker: Some(experiment.end_marker),
        trace,
    };
    let records = run_online(&experiment.stream, &mut trie, provider.as_mut(), &harness, &experiment.vocab)?;
    Ok((records, trie))
}

fn mean_metrics(records: &[ItemRecord]) -> Result<MetricBundle> {
    aggregate(&records.iter().map(|r| r.metrics).collect::<Vec<_>>())
}

fn write_jsonl<T: Serialize>(items: &[T], mut w: impl Write) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn write_records(records: &[ItemRecord], path: &Path) -> Result<()> {
    write_jsonl(records, BufWriter::new(File::create(path)?))
}

fn write_vocab(vocab: &Vocab, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    vocab.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SnapshotInfo {
    n_max: usize,
    nodes: usize,
    total_insertions: u64,
    last_timestamp: Option<u64>,
}

#[derive(Serialize)]
struct NodeLine {
    path: Vec<TokenId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    frequency: u64,
    depth: u32,
    recency: u64,
}

fn trie_command(action: TrieAction) -> Result<()> {
    let read = |p: &Path| -> Result<PrefixTrie> {
        let bytes = fs::read(p).map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", p.display())))?;
        PrefixTrie::restore(&bytes)
    };
    let mut out = io::stdout().lock();
    match action {
        TrieAction::Inspect { snapshot } => {
            let trie = read(&snapshot)?;
            let stats = trie.stats();
            let info = SnapshotInfo {
                n_max: trie.n_max(),
                nodes: stats.nodes,
                total_insertions: stats.total_insertions,
                last_timestamp: trie.last_timestamp(),
            };
            writeln!(out, "{}", serde_json::to_string_pretty(&info).map_err(io::Error::from)?)?;
        }
        TrieAction::Dump { snapshot, vocab } => {
            let trie = read(&snapshot)?;
            let vocab = match vocab {
                Some(p) => Some(Vocab::read_from(BufReader::new(
                    File::open(&p).map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", p.display())))?,
                ))?),
                None => None,
            };
            let mut lines = Vec::new();
            let mut failed = None;
            trie.walk(|path, f| {
                let text = match vocab.as_ref().map(|v| v.detokenize(path)).transpose() {
                    Ok(t) => t,
                    Err(e) => {
                        failed.get_or_insert(e);
                        None
                    }
                };
                lines.push(NodeLine {
                    path: path.to_vec(),
                    text,
                    frequency: f.frequency,
                    depth: f.depth,
                    recency: f.recency,
                });
            });
            if let Some(e) = failed {
                return Err(e);
            }
            write_jsonl(&lines, &mut out)?;
        }
    }
    Ok(())
}
