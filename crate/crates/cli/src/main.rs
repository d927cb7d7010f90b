mod config;

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use treesum_core::ast::{ast_from_json, ast_to_json, parse_source};
use treesum_core::linearize::{linearize, preorder};
use treesum_core::model::{load_checkpoint, save_checkpoint, EncoderInput};
use treesum_core::relations::{bench_row, build_head_masks, RelationMatrices};
use treesum_core::train_eval::{
    evaluate, load_corpus, train_with, BaselineTable, CorpusError, Decoding, TrainError,
    Vocabulary,
};
use treesum_core::{Ast, Checkpoint, SourceUnit, Traversal};

use config::RunConfig;

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

const EXIT_TRAIN: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_CONFIG: u8 = 4;
const EXIT_DATA: u8 = 5;
const EXIT_CHECKPOINT: u8 = 6;

fn fail<T>(code: u8, message: impl ToString) -> Result<T, Failure> {
    Err(Failure {
        code,
        message: message.to_string(),
    })
}

type CmdResult = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "treesum", version, about = "Summarize code from its syntax tree")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON); flags override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the model seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Source {
    /// MiniLang source file (stdin when omitted)
    #[arg(long = "in", conflicts_with = "ast")]
    input: Option<PathBuf>,
    /// AST JSON file instead of source
    #[arg(long)]
    ast: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse MiniLang and print the AST as JSON
    Parse {
        #[command(flatten)]
        source: Source,
    },
    /// Print the POT or SBT token sequence as JSON
    Linearize {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        traversal: Option<Traversal>,
    },
    /// Print relation matrices and per-head allowed-pair counts as JSON
    Relations {
        #[command(flatten)]
        source: Source,
    },
    /// Train a model and write checkpoint, vocabularies and log
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Print a one-line summary for a source file or AST
    Summarize {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        source: Source,
        /// Beam width (1 = greedy)
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Score the test split and print the comparison table
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        beam: Option<usize>,
        /// Print the JSON report instead of the table
        #[arg(long)]
        json: bool,
    },
    /// Attention sparsity on perfect binary trees, as CSV
    Bench {
        /// Depth range `a..b` (inclusive)
        #[arg(long, default_value = "2..6")]
        depths: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p).or_else(|e| fail(EXIT_CONFIG, e))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        cfg.model.seed = seed;
    }
    if let Some(out) = cli.common.out {
        cfg.out = Some(out);
    }
    match cli.command {
        Command::Parse { source } => {
            let ast = read_tree(&source)?;
            emit(&ast_to_json(&ast))
        }
        Command::Linearize { source, traversal } => {
            let ast = read_tree(&source)?;
            let seq = linearize(&ast, traversal.unwrap_or(cfg.traversal));
            emit(&to_pretty(&seq))
        }
        Command::Relations { source } => cmd_relations(&read_tree(&source)?, &cfg),
        Command::Train { data, epochs } => {
            if let Some(d) = data {
                cfg.data = Some(d);
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            cmd_train(&cfg)
        }
        Command::Summarize {
            checkpoint,
            source,
            beam,
        } => {
            let ckpt = read_checkpoint(checkpoint.or(cfg.checkpoint.clone()))?;
            let ast = read_tree(&source)?;
            cmd_summarize(&ckpt, ast, beam.unwrap_or(cfg.beam))
        }
        Command::Eval {
            checkpoint,
            data,
            beam,
            json,
        } => {
            let ckpt = read_checkpoint(checkpoint.or(cfg.checkpoint.clone()))?;
            let data = data.or(cfg.data.clone());
            cmd_eval(&ckpt, data, beam.unwrap_or(cfg.beam), json, cfg.out.as_deref())
        }
        Command::Bench { depths } => cmd_bench(&depths),
    }
}

fn to_pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable output")
}

fn emit(text: &str) -> CmdResult {
    let mut out = io::stdout().lock();
    writeln!(out, "{text}").or_else(|e| fail(EXIT_IO, e))
}

fn read_text(path: Option<&Path>) -> Result<String, Failure> {
    match path {
        Some(p) => fs::read_to_string(p).or_else(|e| fail(EXIT_IO, format!("{}: {e}", p.display()))),
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).or_else(|e| fail(EXIT_IO, e))?;
            Ok(s)
        }
    }
}

fn read_tree(source: &Source) -> Result<Ast, Failure> {
    match &source.ast {
        Some(p) => ast_from_json(&read_text(Some(p))?).or_else(|e| fail(EXIT_PARSE, e)),
        None => parse_source(&read_text(source.input.as_deref())?).or_else(|e| fail(EXIT_PARSE, e)),
    }
}

fn read_checkpoint(path: Option<PathBuf>) -> Result<Checkpoint, Failure> {
    let Some(path) = path else {
        return fail(EXIT_CHECKPOINT, "no checkpoint given (--checkpoint)");
    };
    load_checkpoint(&path).or_else(|e| fail(EXIT_CHECKPOINT, format!("{}: {e}", path.display())))
}

fn cmd_relations(ast: &Ast, cfg: &RunConfig) -> CmdResult {
    let seq = preorder(ast);
    let rel = RelationMatrices::new(ast, &seq).or_else(|e| fail(EXIT_DATA, e))?;
    let patterns = build_head_masks(&rel, &cfg.model.head_layout()).or_else(|e| fail(EXIT_CONFIG, e))?;
    let heads: Vec<_> = patterns
        .iter()
        .map(|p| json!({"head": p.head, "relation": p.relation, "delta": p.delta, "allowed": p.allowed_count()}))
        .collect();
    emit(&to_pretty(&json!({
        "n": ast.len(),
        "tokens": seq.tokens,
        "ancestor": rel.ancestor.rows(),
        "sibling": rel.sibling.rows(),
        "heads": heads,
    })))
}

fn data_error(e: TrainError) -> Failure {
    let code = match e {
        TrainError::Corpus(_) => EXIT_DATA,
        TrainError::Config(_) => EXIT_CONFIG,
        TrainError::Model(treesum_core::model::ModelError::Config(_)) => EXIT_CONFIG,
        _ => EXIT_TRAIN,
    };
    Failure {
        code,
        message: e.to_string(),
    }
}

fn cmd_train(cfg: &RunConfig) -> CmdResult {
    let options = cfg.train_options().or_else(|e| fail(EXIT_CONFIG, e))?;
    let Some(data) = &cfg.data else {
        return fail(EXIT_CONFIG, "no training data given (--data)");
    };
    let Some(out) = &cfg.out else {
        return fail(EXIT_CONFIG, "no output directory given (--out)");
    };
    let corpus = load_corpus(data).or_else(|e| fail(EXIT_DATA, format!("{}: {e}", data.display())))?;
    if corpus.train().is_empty() {
        return fail(EXIT_DATA, CorpusError::EmptyCorpus);
    }
    fs::create_dir_all(out).or_else(|e| fail(EXIT_IO, e))?;

    let log_path = out.join("train_log.jsonl");
    let mut log = fs::File::create(&log_path).or_else(|e| fail(EXIT_IO, e))?;
    let mut io_err = None;
    let outcome = train_with::<f64>(&options, &corpus, |entry| {
        if let Err(e) = writeln!(log, "{}", serde_json::to_string(entry).expect("log line")) {
            io_err.get_or_insert(e);
        }
    })
    .map_err(data_error)?;
    if let Some(e) = io_err {
        return fail(EXIT_IO, e);
    }

    let ckpt = &outcome.checkpoint;
    save_checkpoint(out.join("checkpoint.json"), ckpt).or_else(|e| fail(EXIT_IO, e))?;
    for (name, tokens) in [("vocab_src.json", &ckpt.vocab_src), ("vocab_tgt.json", &ckpt.vocab_tgt)] {
        fs::write(out.join(name), to_pretty(tokens)).or_else(|e| fail(EXIT_IO, e))?;
    }
    let last = outcome.log.last().expect("at least one epoch");
    let best = outcome.log[outcome.best_epoch - 1];
    emit(&format!(
        "epochs={} best_epoch={} final_train_loss={:.6} best_train_loss={:.6} best_valid_loss={}",
        last.epoch,
        outcome.best_epoch,
        last.train_loss,
        best.train_loss,
        best.valid_loss.map_or("null".to_string(), |v| format!("{v:.6}")),
    ))
}

fn decoding(beam: usize) -> Result<Decoding, Failure> {
    match beam {
        0 => fail(EXIT_CONFIG, "beam width must be >= 1"),
        1 => Ok(Decoding::Greedy),
        k => Ok(Decoding::Beam(k)),
    }
}

fn cmd_summarize(ckpt: &Checkpoint, ast: Ast, beam: usize) -> CmdResult {
    let decoding = decoding(beam)?;
    let bad = |e: String| Failure {
        code: EXIT_CHECKPOINT,
        message: e,
    };
    let src = Vocabulary::from_tokens(ckpt.vocab_src.clone()).map_err(bad)?;
    let tgt = Vocabulary::from_tokens(ckpt.vocab_tgt.clone()).map_err(bad)?;
    let model = ckpt.model();
    let seq = preorder(&ast);
    let input = EncoderInput::new(&ast, &seq, src.encode(&seq.tokens), &model.config)
        .or_else(|e| fail(EXIT_DATA, e))?;
    let enc = model.encode(&input).or_else(|e| fail(EXIT_TRAIN, e))?;
    let ids = match decoding {
        Decoding::Greedy => model.decode_greedy(&enc),
        Decoding::Beam(k) => model.decode_beam(&enc, k),
    }
    .or_else(|e| fail(EXIT_TRAIN, e))?;
    emit(&tgt.decode(&ids).join(" "))
}

fn cmd_eval(ckpt: &Checkpoint, data: Option<PathBuf>, beam: usize, as_json: bool, out: Option<&Path>) -> CmdResult {
    let decoding = decoding(beam)?;
    let Some(data) = data else {
        return fail(EXIT_DATA, "no evaluation data given (--data)");
    };
    let corpus = load_corpus(&data).or_else(|e| fail(EXIT_DATA, format!("{}: {e}", data.display())))?;
    let units: Vec<&SourceUnit> = corpus.split(treesum_core::ast::Split::Test);
    if units.is_empty() {
        return fail(EXIT_DATA, "test split is empty");
    }
    let report = evaluate(ckpt, &units, decoding).map_err(|e| Failure {
        code: EXIT_DATA,
        message: e.to_string(),
    })?;
    let table = BaselineTable::bundled();
    let text = report.render_text(&table);
    let doc = to_pretty(&report.to_json(&table));
    if let Some(dir) = out {
        fs::create_dir_all(dir).or_else(|e| fail(EXIT_IO, e))?;
        fs::write(dir.join("eval_report.txt"), &text).or_else(|e| fail(EXIT_IO, e))?;
        fs::write(dir.join("eval_report.json"), &doc).or_else(|e| fail(EXIT_IO, e))?;
    }
    if as_json {
        emit(&doc)
    } else {
        emit(text.trim_end())
    }
}

fn parse_range(spec: &str) -> Option<(usize, usize)> {
    let (a, b) = spec.split_once("..")?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let (a, b) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
    (1 <= a && a <= b && b <= 20).then_some((a, b))
}

fn cmd_bench(depths: &str) -> CmdResult {
    let Some((lo, hi)) = parse_range(depths) else {
        return fail(EXIT_CONFIG, format!("bad depth range `{depths}` (expected a..b with 1 <= a <= b <= 20)"));
    };
    let mut csv = String::from("depth,n,n2,ancestor,sibling,ancestor_ratio,sibling_ratio");
    for d in lo..=hi {
        let r = bench_row(d);
        csv.push_str(&format!(
            "\n{},{},{},{},{},{:.6},{:.6}",
            r.depth, r.n, r.n2, r.ancestor, r.sibling, r.ancestor_ratio, r.sibling_ratio
        ));
    }
    emit(&csv)
}
