mod output;

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use serde::Serialize;
use serde_json::{json, Value};

use sigbasis::basis::{construct_family, is_basis_of_words, necessary_filter, FamilyKind, FilterOutcome};
use sigbasis::freealg::shuffle;
use sigbasis::io::{read_paths, write_binary, write_csv};
use sigbasis::regress::{algorithm1, timing_harness, BetaPreset, ExperimentConfig, ProcessKind, TimingConfig};
use sigbasis::signature::{sig_batch, Direction, PiecewisePath};
use sigbasis::stochastic::{gram_report, phi_relation_residual, simulate_range};
use sigbasis::words::{enumerate, Word, WordClass, WordSet};
use sigbasis::{Error, Result};

use output::{exit_code, unwrap_envelope, Rendered};

#[derive(Parser, Debug, Serialize)]
#[command(name = "sigbasis", version, about = "Bases of words and sparse signatures of time-augmented paths")]
struct Cli {
    /// Default seed for every random draw.
    #[arg(long, global = true, env = "SIGBASIS_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads for batch work; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Output format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Shuffle product of two words, e.g. `shuffle 1 21`.
    Shuffle(ShuffleArgs),
    /// Generate or certify bases of words.
    #[command(subcommand)]
    Basis(BasisCommand),
    /// Signature components of paths read from a file.
    #[command(subcommand)]
    Sig(SigCommand),
    /// Sample SDE paths on a uniform grid.
    Simulate(SimulateArgs),
    /// Regression and timing experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Gram-matrix diagnostics of signature features.
    Gram(GramArgs),
}

#[derive(Args, Debug, Serialize)]
struct ShuffleArgs {
    left: String,
    right: String,
    /// Space dimension; defaults to the largest letter used (at least 1).
    #[arg(long)]
    dim: Option<u8>,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum BasisCommand {
    Gen(BasisGenArgs),
    Check(BasisCheckArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Family {
    Prefix,
    Suffix,
    PrefixPadded,
    SuffixPadded,
}

#[derive(Args, Debug, Serialize)]
struct BasisGenArgs {
    #[arg(long, value_enum)]
    family: Family,
    #[arg(long)]
    order: usize,
    #[arg(long, default_value_t = 1)]
    dim: u8,
    /// Zero padding per base word, e.g. `1=2,01=1`; unspecified words get a
    /// random padding drawn from the seed.
    #[arg(long)]
    pad: Option<String>,
}

#[derive(Args, Debug, Serialize)]
struct BasisCheckArgs {
    /// Truncation order; defaults to the one stored in the input.
    #[arg(long)]
    order: Option<usize>,
    /// Word set as JSON (bare or wrapped) or as whitespace-separated words;
    /// reads stdin when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Alphabet size for plain word lists.
    #[arg(long, default_value_t = 1)]
    dim: u8,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum SigCommand {
    Compute(SigArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Dir {
    Fwd,
    Bwd,
}

#[derive(Args, Debug, Serialize)]
struct SigArgs {
    /// CSV (`t,x1,…`) or binary path file.
    #[arg(long)]
    paths: PathBuf,
    #[arg(long)]
    order: usize,
    /// `all`, `prefix`, `suffix` or a word-set JSON file.
    #[arg(long, default_value = "all")]
    words: String,
    #[arg(long, value_enum, default_value_t = Dir::Fwd)]
    direction: Dir,
    #[arg(long, value_enum)]
    emit: Option<Format>,
    /// Include the elementary-operation counter.
    #[arg(long)]
    count_ops: bool,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = Process::Bm)]
    process: Process,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Output file; `.csv` is written as CSV, anything else as binary.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Process {
    Bm,
    Ou,
}

impl From<Process> for ProcessKind {
    fn from(p: Process) -> Self {
        match p {
            Process::Bm => ProcessKind::Bm,
            Process::Ou => ProcessKind::Ou,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Beta {
    Ones,
    GeomUp,
    GeomDown,
}

impl From<Beta> for BetaPreset {
    fn from(b: Beta) -> Self {
        match b {
            Beta::Ones => BetaPreset::Ones,
            Beta::GeomUp => BetaPreset::GeomUp,
            Beta::GeomDown => BetaPreset::GeomDown,
        }
    }
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum ExperimentCommand {
    Regression(RegressionArgs),
    Timing(TimingArgs),
}

#[derive(Args, Debug, Serialize)]
struct RegressionArgs {
    #[arg(long, value_enum, default_value_t = Process::Bm)]
    process: Process,
    #[arg(long, default_value_t = 2)]
    order: usize,
    #[arg(long, value_enum, default_value_t = Beta::Ones)]
    beta: Beta,
    #[arg(long, default_value_t = 500)]
    n_train: usize,
    #[arg(long, default_value_t = 10_000)]
    n_test: usize,
    #[arg(long, default_value_t = 20)]
    batches: usize,
    #[arg(long, default_value_t = 10)]
    n_true: usize,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 1)]
    dim: u8,
    #[arg(long, value_enum)]
    emit: Option<Format>,
}

#[derive(Args, Debug, Serialize)]
struct TimingArgs {
    #[arg(long, value_enum, default_value_t = Process::Bm)]
    process: Process,
    #[arg(long, default_value_t = 1)]
    dim: u8,
    #[arg(long, value_delimiter = ',', default_values_t = vec![2, 3, 4, 5, 6])]
    orders: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, value_enum)]
    emit: Option<Format>,
}

#[derive(Args, Debug, Serialize)]
struct GramArgs {
    /// Path file; simulates when omitted.
    #[arg(long)]
    paths: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Process::Bm)]
    process: Process,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long)]
    order: usize,
    /// `all`, `prefix`, `suffix` or a word-set JSON file.
    #[arg(long, default_value = "suffix")]
    words: String,
}

fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::InvalidInput(format!("{}: {e}", p.display()))),
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn parse_word_set(text: &str, dim: u8, order: Option<usize>) -> Result<WordSet> {
    let set = match serde_json::from_str::<Value>(text) {
        Ok(v) => serde_json::from_value::<WordSet>(unwrap_envelope(v))
            .map_err(|e| Error::InvalidInput(format!("not a word set: {e}")))?,
        Err(_) => {
            let words = text
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(|s| Word::parse(dim, s))
                .collect::<Result<Vec<_>>>()?;
            let n = order.unwrap_or_else(|| words.iter().map(Word::len).max().unwrap_or(0));
            WordSet::new(dim, n, words)?
        }
    };
    match order {
        Some(n) => set.with_order(n),
        None => Ok(set),
    }
}

fn select_words(spec: &str, order: usize, d: u8) -> Result<WordSet> {
    match spec {
        "all" => enumerate(&WordClass::AllUpTo, order, d),
        "prefix" => enumerate(&WordClass::PrefixesUpTo, order, d),
        "suffix" => enumerate(&WordClass::SuffixesUpTo, order, d),
        file => {
            let set = parse_word_set(&read_input(Some(Path::new(file)))?, d, Some(order))?;
            if set.dim() != d {
                return Err(Error::AlphabetMismatch { left: set.dim(), right: d });
            }
            Ok(set)
        }
    }
}

fn load_paths(path: &Path) -> Result<Vec<PiecewisePath>> {
    let bytes = std::fs::read(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    read_paths(&bytes)
}

fn paths_dim(paths: &[PiecewisePath]) -> Result<u8> {
    let d = paths[0].dim();
    if paths.iter().any(|p| p.dim() != d) {
        return Err(Error::invalid("paths have different dimensions"));
    }
    u8::try_from(d).map_err(|_| Error::invalid("dimension too large"))
}

fn cmd_shuffle(cli: &Cli, a: &ShuffleArgs) -> Result<Rendered> {
    let max_letter = a
        .left
        .chars()
        .chain(a.right.chars())
        .filter_map(|c| c.to_digit(10))
        .max()
        .unwrap_or(1) as u8;
    let d = a.dim.unwrap_or(max_letter.max(1));
    let p = shuffle(&Word::parse(d, &a.left)?, &Word::parse(d, &a.right)?)?;
    match cli.format.unwrap_or(Format::Text) {
        Format::Text => Ok(Rendered::Text(p.to_string())),
        Format::Json => Rendered::json("shuffle", a, &json!({ "d": d, "display": p.to_string(), "terms": p })),
        Format::Csv => Rendered::csv(
            "shuffle",
            a,
            vec!["word".into(), "coefficient".into()],
            p.terms().map(|(w, c)| vec![w.to_string(), c.to_string()]).collect(),
        ),
    }
}

fn parse_pad(spec: &str, d: u8) -> Result<BTreeMap<Word, usize>> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (w, m) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("padding '{item}' is not of the form word=count")))?;
            let m = m.trim().parse::<usize>().map_err(|_| Error::InvalidInput(format!("bad padding count in '{item}'")))?;
            Ok((Word::parse(d, w.trim())?, m))
        })
        .collect()
}

fn cmd_basis_gen(cli: &Cli, a: &BasisGenArgs) -> Result<Rendered> {
    let set = match a.family {
        Family::Prefix => enumerate(&WordClass::PrefixesUpTo, a.order, a.dim)?,
        Family::Suffix => enumerate(&WordClass::SuffixesUpTo, a.order, a.dim)?,
        Family::PrefixPadded | Family::SuffixPadded => {
            let (kind, class) = match a.family {
                Family::PrefixPadded => (FamilyKind::PrefixPadded, WordClass::PrefixesUpTo),
                _ => (FamilyKind::SuffixPadded, WordClass::SuffixesUpTo),
            };
            let mut pad = a.pad.as_deref().map(|s| parse_pad(s, a.dim)).transpose()?.unwrap_or_default();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cli.seed);
            for w in enumerate(&class, a.order, a.dim)?.iter() {
                let m = rng.gen_range(0..=a.order - w.len());
                pad.entry(w.clone()).or_insert(m);
            }
            construct_family(kind, a.order, a.dim, &pad)?
        }
    };
    match cli.format.unwrap_or(Format::Json) {
        Format::Text => Ok(Rendered::Text(set.to_strings().join(" "))),
        Format::Json => Rendered::json("basis gen", &json!({ "seed": cli.seed, "args": a }), &set),
        Format::Csv => Rendered::csv(
            "basis gen",
            a,
            vec!["word".into(), "length".into()],
            set.iter().map(|w| vec![w.to_string(), w.len().to_string()]).collect(),
        ),
    }
}

fn cmd_basis_check(cli: &Cli, a: &BasisCheckArgs) -> Result<Rendered> {
    let set = parse_word_set(&read_input(a.input.as_deref())?, a.dim, a.order)?;
    let order = set.order();
    let cert = is_basis_of_words(&set, order)?;
    let filter = necessary_filter(&set, order)?;
    let filter_json = match &filter {
        FilterOutcome::Pass => json!({ "passed": true }),
        FilterOutcome::Fail(reason) => json!({ "passed": false, "reason": reason }),
    };
    let required: u64 = cert.blocks.iter().map(|b| b.required).sum();
    match cli.format.unwrap_or(Format::Json) {
        Format::Text => Ok(Rendered::Text(format!(
            "verdict: {}\nrank: {} of {}\nfilter: {}",
            if cert.is_basis() { "basis" } else { "not_basis" },
            cert.rank,
            required,
            if filter.passed() { "pass" } else { "fail" }
        ))),
        Format::Json => Rendered::json(
            "basis check",
            &json!({ "N": order, "d": set.dim(), "words": set.len() }),
            &json!({ "certificate": cert, "necessary_filter": filter_json }),
        ),
        Format::Csv => Rendered::csv(
            "basis check",
            &json!({ "N": order, "d": set.dim() }),
            vec!["gamma".into(), "cardinality".into(), "required".into(), "rank".into()],
            cert.blocks
                .iter()
                .map(|b| vec![b.gamma.to_string(), b.cardinality.to_string(), b.required.to_string(), b.rank.to_string()])
                .collect(),
        ),
    }
}

fn cmd_sig(cli: &Cli, a: &SigArgs) -> Result<Rendered> {
    let paths = load_paths(&a.paths)?;
    let d = paths_dim(&paths)?;
    let words = select_words(&a.words, a.order, d)?;
    let dir = match a.direction {
        Dir::Fwd => Direction::Forward,
        Dir::Bwd => Direction::Backward,
    };
    let sigs = sig_batch(&paths, &words, dir, cli.workers)?;
    match a.emit.or(cli.format).unwrap_or(Format::Csv) {
        Format::Json | Format::Text => {
            let result: Vec<Value> = sigs
                .iter()
                .enumerate()
                .map(|(i, (s, c))| {
                    let values: serde_json::Map<String, Value> = s.iter().map(|(w, v)| (w.to_string(), json!(v))).collect();
                    let mut obj = json!({ "path": i, "values": values });
                    if a.count_ops {
                        obj["elementary_ops"] = json!(c.elementary_ops);
                    }
                    obj
                })
                .collect();
            Rendered::json("sig compute", a, &json!({ "words": words, "signatures": result }))
        }
        Format::Csv => {
            let mut header = vec!["path".to_string()];
            header.extend(words.iter().map(|w| w.to_string()));
            if a.count_ops {
                header.push("elementary_ops".into());
            }
            let rows = sigs
                .iter()
                .enumerate()
                .map(|(i, (s, c))| {
                    let mut r = vec![i.to_string()];
                    r.extend(s.values().iter().map(|v| v.to_string()));
                    if a.count_ops {
                        r.push(c.elementary_ops.to_string());
                    }
                    r
                })
                .collect();
            Rendered::csv("sig compute", a, header, rows)
        }
    }
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Result<Rendered> {
    let spec = ProcessKind::from(a.process).spec(a.dim);
    let paths = simulate_range(&spec, a.steps, 0, a.n, cli.seed, cli.workers)?;
    let csv = match &a.out {
        Some(p) => p.extension().is_some_and(|e| e == "csv"),
        None => true,
    };
    let mut buf = Vec::new();
    if csv {
        write_csv(&paths, &mut buf)?;
    } else {
        write_binary(&paths, &mut buf)?;
    }
    match &a.out {
        Some(p) => {
            std::fs::write(p, &buf)?;
            Rendered::json(
                "simulate",
                &json!({ "seed": cli.seed, "args": a }),
                &json!({ "file": p, "paths": paths.len(), "format": if csv { "csv" } else { "binary" } }),
            )
        }
        None => Ok(Rendered::Bytes(buf)),
    }
}

fn cmd_regression(cli: &Cli, a: &RegressionArgs) -> Result<Rendered> {
    let cfg = ExperimentConfig {
        process: a.process.into(),
        dim: a.dim,
        order: a.order,
        n_true: a.n_true,
        steps: a.steps,
        n_train: a.n_train,
        n_test: a.n_test,
        batches: a.batches,
        beta: a.beta.into(),
        seed: cli.seed,
    };
    let report = algorithm1(&cfg, cli.workers)?;
    match a.emit.or(cli.format).unwrap_or(Format::Json) {
        Format::Csv => {
            let header = ["batch", "lambda_all", "lambda_suffix", "mse_all", "mse_suffix", "delta", "r2_all", "r2_suffix"];
            let rows = report
                .batches
                .iter()
                .map(|b| {
                    vec![
                        b.index.to_string(),
                        b.lambda_all.to_string(),
                        b.lambda_suffix.to_string(),
                        b.mse_all.to_string(),
                        b.mse_suffix.to_string(),
                        b.delta.to_string(),
                        b.r2_all.to_string(),
                        b.r2_suffix.to_string(),
                    ]
                })
                .collect();
            Rendered::csv("experiment regression", &cfg, header.iter().map(|s| s.to_string()).collect(), rows)
        }
        _ => Rendered::json("experiment regression", &cfg, &report),
    }
}

fn cmd_timing(cli: &Cli, a: &TimingArgs) -> Result<Rendered> {
    let cfg = TimingConfig {
        process: a.process.into(),
        dim: a.dim,
        orders: a.orders.clone(),
        steps: a.steps,
        n: a.n,
        repeats: a.repeats,
        seed: cli.seed,
    };
    let rows = timing_harness(&cfg)?;
    match a.emit.or(cli.format).unwrap_or(Format::Json) {
        Format::Csv => {
            let header = [
                "N", "p_all", "p_suffix", "sig_all_seconds", "sig_suffix_seconds", "sig_ratio", "counter_all",
                "counter_suffix", "counter_ratio", "fit_all_seconds", "fit_suffix_seconds", "fit_ratio",
            ];
            let body = rows
                .iter()
                .map(|r| {
                    vec![
                        r.order.to_string(),
                        r.p_all.to_string(),
                        r.p_suffix.to_string(),
                        r.sig_all_seconds.to_string(),
                        r.sig_suffix_seconds.to_string(),
                        r.sig_ratio.to_string(),
                        r.counter_all.to_string(),
                        r.counter_suffix.to_string(),
                        r.counter_ratio.to_string(),
                        r.fit_all_seconds.to_string(),
                        r.fit_suffix_seconds.to_string(),
                        r.fit_ratio.to_string(),
                    ]
                })
                .collect();
            Rendered::csv("experiment timing", &cfg, header.iter().map(|s| s.to_string()).collect(), body)
        }
        _ => Rendered::json("experiment timing", &cfg, &rows),
    }
}

fn cmd_gram(cli: &Cli, a: &GramArgs) -> Result<Rendered> {
    let paths = match &a.paths {
        Some(p) => load_paths(p)?,
        None => {
            let spec = ProcessKind::from(a.process).spec(a.dim);
            simulate_range(&spec, a.steps, 0, a.n, cli.seed, cli.workers)?
        }
    };
    let d = paths_dim(&paths)?;
    let words = select_words(&a.words, a.order, d)?;
    let report = gram_report(&paths, &words, cli.workers)?;
    let horizon = paths[0].horizon();
    let same_horizon = paths.iter().all(|p| (p.horizon() - horizon).abs() <= 1e-12 * horizon.abs());
    let residual = if same_horizon {
        Some(phi_relation_residual(&words, &report.null_direction, horizon)?)
    } else {
        None
    };
    let mut result = serde_json::to_value(&report)?;
    result["null_direction_relation_residual"] = json!(residual);
    match cli.format.unwrap_or(Format::Json) {
        Format::Csv => Rendered::csv(
            "gram",
            &json!({ "seed": cli.seed, "args": a }),
            vec!["index".into(), "eigenvalue".into()],
            report.eigenvalues.iter().enumerate().map(|(i, v)| vec![i.to_string(), v.to_string()]).collect(),
        ),
        _ => Rendered::json("gram", &json!({ "seed": cli.seed, "args": a }), &result),
    }
}

fn run(cli: &Cli) -> Result<Rendered> {
    match &cli.command {
        Command::Shuffle(a) => cmd_shuffle(cli, a),
        Command::Basis(BasisCommand::Gen(a)) => cmd_basis_gen(cli, a),
        Command::Basis(BasisCommand::Check(a)) => cmd_basis_check(cli, a),
        Command::Sig(SigCommand::Compute(a)) => cmd_sig(cli, a),
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Experiment(ExperimentCommand::Regression(a)) => cmd_regression(cli, a),
        Command::Experiment(ExperimentCommand::Timing(a)) => cmd_timing(cli, a),
        Command::Gram(a) => cmd_gram(cli, a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let outcome = run(&cli).and_then(|r| r.emit(cli.output.as_deref()));
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
