//! Command-line pipeline: preprocess treebanks into supervision matrices,
//! train BPE vocabularies and supervised models, evaluate on minimal-pair
//! suites and word-level perplexity, sweep head/layer/weight grids, and
//! inspect a checkpoint's word-level attention.
//!
//! Stdout carries machine-readable results (JSON/CSV); progress and logs go
//! to stderr or to JSONL files next to the outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use treeplant::eval::{evaluate, inspect, ModelScorer, SyntacticSuite};
use treeplant::model::checkpoint::Checkpoint;
use treeplant::tokenizer::{train_vocab, Vocabulary};
use treeplant::trainer::{
    load_trees, prepare_dataset, preprocess, run_sweep, sweep_csv, train_with_observer,
    SupervisionKind, SweepSpec, TreeFile, TreePlantConfig,
};
use treeplant::treebank::Sentence;

#[derive(Parser)]
#[command(
    name = "treeplant",
    about = "Tree-guided attention supervision for small causal language models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a treebank into per-sentence supervision records (JSONL).
    Preprocess(PreprocessArgs),
    /// Learn a byte-level BPE vocabulary from treebank sentences.
    TrainVocab(TrainVocabArgs),
    /// Train a model per a TOML config file.
    Train(TrainArgs),
    /// Score a checkpoint on syntactic suites and word-level perplexity.
    Evaluate(EvaluateArgs),
    /// Train and evaluate across a head/layer/weight grid; emit CSV.
    Sweep(SweepArgs),
    /// Dump a checkpoint's word-level attention on one sentence.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Treebank file (CoNLL-U or one bracketed tree per line).
    #[arg(long)]
    trees: PathBuf,
    /// Supervision kind: dep, cons, bin, seq, rand, or zero.
    #[arg(long)]
    kind: String,
    /// Output JSONL path.
    #[arg(long)]
    out: PathBuf,
    /// Seed for the rand baseline.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainVocabArgs {
    /// Treebank files contributing sentences.
    #[arg(long, required = true, num_args = 1..)]
    trees: Vec<PathBuf>,
    /// Total vocabulary size (bytes + specials + merges).
    #[arg(long)]
    vocab_size: usize,
    /// Output vocabulary JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// TOML config mirroring the training configuration.
    #[arg(long)]
    config: PathBuf,
    /// Training treebank.
    #[arg(long)]
    trees: PathBuf,
    /// Vocabulary JSON from train-vocab.
    #[arg(long)]
    vocab: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Per-step JSONL training log (default: <out>.log.jsonl).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Overrides the config file's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Suite JSON files (repeatable).
    #[arg(long = "suite", required = true, num_args = 1..)]
    suites: Vec<PathBuf>,
    /// Treebank whose sentences form the perplexity corpus.
    #[arg(long)]
    ppl_trees: PathBuf,
    /// Report JSON output path (stdout always gets the report too).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep axis: heads, layers, or weight.
    #[arg(long)]
    axis: String,
    /// Comma-separated grid values, e.g. "0,1,2,4" or "0,0.25,0.5,1.0".
    #[arg(long)]
    grid: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    trees: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long = "suite", required = true, num_args = 1..)]
    suites: Vec<PathBuf>,
    #[arg(long)]
    ppl_trees: PathBuf,
    /// CSV output path (stdout always gets the CSV too).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Sentence text (whitespace-separated words, no BOS/EOS). Defaults to
    /// the tree's words when --tree is given.
    #[arg(long)]
    sentence: Option<String>,
    /// Single-sentence treebank file; enables per-row KL against the
    /// supervision derived from it.
    #[arg(long)]
    tree: Option<PathBuf>,
    /// Supervision kind for --tree (defaults to dep for CoNLL-U input,
    /// cons for bracketed).
    #[arg(long)]
    kind: Option<String>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Preprocess(args) => cmd_preprocess(args),
        Command::TrainVocab(args) => cmd_train_vocab(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Inspect(args) => cmd_inspect(args),
    }
}

fn read_trees(path: &Path) -> Result<TreeFile> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading treebank {}", path.display()))?;
    load_trees(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading vocabulary {}", path.display()))?;
    Ok(Vocabulary::from_json(&text)?)
}

fn read_suites(paths: &[PathBuf]) -> Result<Vec<SyntacticSuite>> {
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading suite {}", p.display()))?;
            SyntacticSuite::from_json(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect()
}

fn corpus_sentences(trees: &TreeFile) -> Result<Vec<Sentence>> {
    Ok(match trees {
        TreeFile::Dependency(ts) => ts.iter().map(|t| t.sentence.clone()).collect(),
        TreeFile::Constituency(ts) => ts
            .iter()
            .map(|t| t.sentence())
            .collect::<treeplant::Result<_>>()?,
    })
}

fn parse_kind(kind: &str) -> Result<SupervisionKind> {
    Ok(kind.parse::<SupervisionKind>()?)
}

/// Config files may leave `model.vocab_size = 0`; it is filled from the
/// vocabulary here.
fn load_config(path: &Path, vocab: &Vocabulary, seed: Option<u64>) -> Result<TreePlantConfig> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut config: TreePlantConfig =
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if config.model.vocab_size == 0 {
        config.model.vocab_size = vocab.size();
    } else if config.model.vocab_size != vocab.size() {
        bail!(
            "config vocab_size {} does not match vocabulary ({} tokens)",
            config.model.vocab_size,
            vocab.size()
        );
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_preprocess(args: PreprocessArgs) -> Result<()> {
    let kind = parse_kind(&args.kind)?;
    let trees = read_trees(&args.trees)?;
    let records = preprocess(&trees, kind, args.seed)?;
    let mut out = std::io::BufWriter::new(
        fs::File::create(&args.out)
            .with_context(|| format!("creating {}", args.out.display()))?,
    );
    for rec in &records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    eprintln!("wrote {} records to {}", records.len(), args.out.display());
    Ok(())
}

fn cmd_train_vocab(args: TrainVocabArgs) -> Result<()> {
    let mut sentences = Vec::new();
    for path in &args.trees {
        let trees = read_trees(path)?;
        sentences.extend(corpus_sentences(&trees)?);
    }
    let vocab = train_vocab(&sentences, args.vocab_size)?;
    fs::write(&args.out, vocab.to_json()?)
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!(
        "trained vocabulary of {} tokens ({} merges) from {} sentences",
        vocab.size(),
        vocab.merges().len(),
        sentences.len()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let vocab = read_vocab(&args.vocab)?;
    let config = load_config(&args.config, &vocab, args.seed)?;
    let trees = read_trees(&args.trees)?;
    let dataset = prepare_dataset(&trees, config.kind, &vocab, config.seed)?;

    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| args.out.with_extension("log.jsonl"));
    let mut log_file = std::io::BufWriter::new(
        fs::File::create(&log_path)
            .with_context(|| format!("creating {}", log_path.display()))?,
    );
    let outcome = train_with_observer(&config, &dataset, &vocab, |entry| {
        if let Ok(line) = serde_json::to_string(entry) {
            let _ = writeln!(log_file, "{line}");
        }
    })?;
    outcome.checkpoint.save(&args.out)?;
    let last = outcome.log.last().expect("at least one step");
    println!(
        "{}",
        serde_json::json!({
            "checkpoint": args.out,
            "steps": last.step,
            "final_nwp": last.nwp,
            "final_tree": last.tree,
            "final_total": last.total,
        })
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let vocab = read_vocab(&args.vocab)?;
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    ckpt.verify_vocab(&vocab)?;
    let suites = read_suites(&args.suites)?;
    let ppl_trees = read_trees(&args.ppl_trees)?;
    let corpus = corpus_sentences(&ppl_trees)?;
    let scorer = ModelScorer::new(&ckpt.model);
    let report = evaluate(&scorer, &vocab, &suites, &corpus)?;

    eprintln!("circuit accuracies:");
    for c in &report.circuits {
        eprintln!("  {:<28} {:.3}", c.circuit, c.accuracy);
    }
    eprintln!("overall {:.3}  ppl {:.3}", report.overall, report.ppl);

    let json = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &args.out {
        fs::write(out, &json).with_context(|| format!("writing {}", out.display()))?;
    }
    println!("{json}");
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let vocab = read_vocab(&args.vocab)?;
    let config = load_config(&args.config, &vocab, None)?;
    let trees = read_trees(&args.trees)?;
    let dataset = prepare_dataset(&trees, config.kind, &vocab, config.seed)?;
    let suites = read_suites(&args.suites)?;
    let ppl_trees = read_trees(&args.ppl_trees)?;
    let corpus = corpus_sentences(&ppl_trees)?;

    let spec = match args.axis.as_str() {
        "heads" => SweepSpec::Heads(parse_grid(&args.grid)?),
        "layers" => SweepSpec::Layers(parse_grid(&args.grid)?),
        "weight" => {
            let values = args
                .grid
                .split(',')
                .map(|v| v.trim().parse::<f64>().context("parsing weight grid"))
                .collect::<Result<Vec<_>>>()?;
            SweepSpec::Weight(values)
        }
        other => bail!("unknown sweep axis {other:?} (expected heads, layers, or weight)"),
    };

    let outcome = run_sweep(&spec, &config, &dataset, &vocab, &suites, &corpus)?;
    for (value, err) in &outcome.failures {
        eprintln!("grid point {value} failed: {err}");
    }
    let csv = sweep_csv(&outcome.rows);
    if let Some(out) = &args.out {
        fs::write(out, &csv).with_context(|| format!("writing {}", out.display()))?;
    }
    print!("{csv}");
    if !outcome.failures.is_empty() {
        bail!("{} grid point(s) failed", outcome.failures.len());
    }
    Ok(())
}

fn parse_grid(grid: &str) -> Result<Vec<usize>> {
    grid.split(',')
        .map(|v| v.trim().parse::<usize>().context("parsing grid value"))
        .collect()
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let vocab = read_vocab(&args.vocab)?;
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    ckpt.verify_vocab(&vocab)?;

    let (words, sup) = match &args.tree {
        Some(path) => {
            let trees = read_trees(path)?;
            let kind = match &args.kind {
                Some(k) => parse_kind(k)?,
                None => match &trees {
                    TreeFile::Dependency(_) => SupervisionKind::Dep,
                    TreeFile::Constituency(_) => SupervisionKind::Cons,
                },
            };
            let mut records = preprocess(&trees, kind, 0)?;
            if records.len() != 1 {
                bail!("--tree file must hold exactly one sentence");
            }
            let record = records.remove(0);
            let content = record.words[1..record.words.len() - 1].to_vec();
            if let Some(text) = &args.sentence {
                let given: Vec<String> =
                    text.split_whitespace().map(str::to_string).collect();
                if given != content {
                    bail!("--sentence does not match the words of --tree");
                }
            }
            (content, record.s)
        }
        None => {
            let text = args
                .sentence
                .as_ref()
                .context("either --sentence or --tree is required")?;
            let words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
            (words, None)
        }
    };
    if words.is_empty() {
        bail!("empty sentence");
    }

    let heads = inspect(&ckpt, &vocab, &words, sup.as_ref())?;
    if sup.is_some() {
        // Row-mean KL per head to stderr for a quick read.
        for h in &heads {
            if let Some(rows) = &h.kl_rows {
                let mean = rows.iter().sum::<f64>() / rows.len() as f64;
                eprintln!("layer {} head {}: mean row KL {:.5}", h.layer, h.head, mean);
            }
        }
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "words": words,
            "heads": heads,
        }))?
    );
    Ok(())
}
