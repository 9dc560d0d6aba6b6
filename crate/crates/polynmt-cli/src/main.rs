//! Command-line front end: BPE learning, training, translation, scoring,
//! parameter counting, and toy-corpus generation.

mod config;

use std::collections::HashMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use polynmt::data::{
    bpe_encode_line, bpe_learn, join_subwords, load_parallel_corpus, prepare_corpus,
    prepare_example, read_lines, subword_frequencies, word_frequencies, BpeModel, Vocabulary,
    DEFAULT_MARKER,
};
use polynmt::decode::{beam_search, hypothesis_subwords, BeamConfig};
use polynmt::error::Error;
use polynmt::eval::{bleu, fmeasure_buckets, DEFAULT_BUCKET_BOUNDS};
use polynmt::sharing::{count_parameters, ParameterTable, SharingPlan, Strategy};
use polynmt::tensor::Scalar;
use polynmt::toy::{toy_corpus, ToyTask};
use polynmt::training::{
    init_parameters, load_checkpoint, train, vocab_fingerprint, Checkpoint, DevSentence,
};

use config::{Precision, RunConfig};

#[derive(Parser)]
#[command(
    name = "polynmt",
    about = "One-to-many transformer translation with configurable decoder parameter sharing",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn byte-pair merge operations from raw text.
    LearnBpe(LearnBpeArgs),
    /// Train a model as described by a run config.
    Train(TrainArgs),
    /// Translate a file of raw sentences with a trained checkpoint.
    Translate(TranslateArgs),
    /// Score hypotheses against references (BLEU, optional F-measure).
    Score(ScoreArgs),
    /// Print parameter counts per sharing strategy.
    CountParams(CountParamsArgs),
    /// Generate a deterministic toy parallel corpus.
    GenToy(GenToyArgs),
}

#[derive(Args)]
struct LearnBpeArgs {
    /// Input text files (all lines pooled).
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Number of merge operations to learn.
    #[arg(long)]
    merges: usize,
    /// Where to write the merge file.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Raw source text, one sentence per line.
    #[arg(long)]
    input: PathBuf,
    /// Target language to decode into.
    #[arg(long)]
    lang: String,
    /// Vocabulary file written by `train`.
    #[arg(long)]
    vocab: PathBuf,
    /// BPE merge file used at training time.
    #[arg(long)]
    bpe: PathBuf,
    #[arg(long, default_value_t = 5)]
    beam: usize,
    /// Length-normalization strength.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Divide by raw length instead of the ((5+len)/6)^alpha penalty.
    #[arg(long)]
    plain_length_norm: bool,
    /// Output file (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Language label used in the CSV output.
    #[arg(long, default_value = "all")]
    lang: String,
    /// Write `metric,language,value` rows here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also compute word F-measure by training frequency.
    #[arg(long)]
    fmeasure: bool,
    /// Training corpus for the frequency buckets (required with --fmeasure).
    #[arg(long)]
    train_corpus: Option<PathBuf>,
    /// Write the per-bucket F-measure CSV here.
    #[arg(long)]
    fmeasure_csv: Option<PathBuf>,
}

#[derive(Args)]
struct CountParamsArgs {
    /// Run configuration supplying the model shape and target list.
    #[arg(long)]
    config: PathBuf,
    /// Strategy name, or "all" for every built-in.
    #[arg(long)]
    strategy: Option<String>,
}

#[derive(Args)]
struct GenToyArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// Language/task pairs like `cp=copy rev=reverse srt=sort`.
    #[arg(long, required = true, num_args = 1..)]
    pair: Vec<String>,
    #[arg(long, default_value_t = 64)]
    sentences: usize,
    #[arg(long, default_value_t = 16)]
    dev_sentences: usize,
    #[arg(long, default_value_t = 3)]
    min_len: usize,
    #[arg(long, default_value_t = 8)]
    max_len: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::LearnBpe(args) => cmd_learn_bpe(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Translate(args) => cmd_translate(&args),
        Command::Score(args) => cmd_score(&args),
        Command::CountParams(args) => cmd_count_params(&args),
        Command::GenToy(args) => cmd_gen_toy(&args),
    }
}

// ---------------------------------------------------------------------------
// learn-bpe
// ---------------------------------------------------------------------------

fn cmd_learn_bpe(args: &LearnBpeArgs) -> Result<()> {
    let mut lines = Vec::new();
    for path in &args.input {
        lines.extend(read_lines(path)?);
    }
    let freqs = word_frequencies(lines.iter().map(|s| s.as_str()));
    let model = bpe_learn(&freqs, args.merges, DEFAULT_MARKER)?;
    model.save(&args.output)?;
    println!(
        "learned {} merges from {} lines -> {}",
        model.merges().len(),
        lines.len(),
        args.output.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct PreparedData {
    vocab: Vocabulary,
    examples: Vec<polynmt::data::Example>,
    dev: Vec<DevSentence>,
}

/// Assemble training data: segment with the BPE model, build the joint
/// vocabulary over all training text, and numericize train/dev corpora.
fn prepare_data(config: &RunConfig, bpe: &BpeModel) -> Result<PreparedData> {
    let langs = config.langs();
    let mut train_pairs = Vec::with_capacity(config.pairs.len());
    let mut all_lines: Vec<String> = Vec::new();
    for pair in &config.pairs {
        let pairs = load_parallel_corpus(&pair.train_src, &pair.train_tgt)?;
        for (s, t) in &pairs {
            all_lines.push(s.clone());
            all_lines.push(t.clone());
        }
        train_pairs.push(pairs);
    }
    let subs = subword_frequencies(all_lines.iter().map(|s| s.as_str()), bpe);
    let vocab = Vocabulary::build(&subs, &langs)?;

    let mut examples = Vec::new();
    for (pair, pairs) in config.pairs.iter().zip(&train_pairs) {
        examples.extend(prepare_corpus(pairs, &pair.lang, bpe, &vocab)?);
    }

    let mut dev = Vec::new();
    for pair in &config.pairs {
        let (Some(dev_src), Some(dev_tgt)) = (&pair.dev_src, &pair.dev_tgt) else {
            continue;
        };
        for (src, tgt) in load_parallel_corpus(dev_src, dev_tgt)? {
            let s = bpe_encode_line(&src, bpe);
            let t = bpe_encode_line(&tgt, bpe);
            if let Some(example) = prepare_example(&s, &t, &pair.lang, &vocab)? {
                dev.push(DevSentence {
                    example,
                    ref_words: tgt.split_whitespace().map(str::to_string).collect(),
                });
            }
        }
    }
    Ok(PreparedData { vocab, examples, dev })
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut config = RunConfig::load(&args.config)?;
    // surface configuration mistakes before any corpus reading or compute
    let plan = config.resolve_plan()?;
    config.training.validate()?;
    let bpe_path = config
        .bpe_model
        .clone()
        .ok_or_else(|| anyhow!("config needs bpe_model for training"))?;
    let bpe = BpeModel::load(&bpe_path)?;
    let data = prepare_data(&config, &bpe)?;
    config.model.vocab_size = data.vocab.len();
    config.model.validate()?;

    std::fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("cannot create {}", config.out_dir.display()))?;
    data.vocab.save(&config.out_dir.join("vocab.txt"))?;
    let resolved = toml::to_string_pretty(&config).context("cannot serialize resolved config")?;
    std::fs::write(config.out_dir.join("config.resolved.toml"), resolved)
        .with_context(|| format!("cannot write into {}", config.out_dir.display()))?;

    match config.precision {
        Precision::F32 => run_train::<f32>(&config, &plan, &data),
        Precision::F64 => run_train::<f64>(&config, &plan, &data),
    }
}

fn run_train<T: Scalar>(config: &RunConfig, plan: &SharingPlan, data: &PreparedData) -> Result<()> {
    let mut table = ParameterTable::<T>::resolve(&config.model, plan)?;
    init_parameters(&mut table, config.training.seed);
    println!(
        "training {} ({} cells, {} examples, {} dev sentences)",
        plan.strategy_name(),
        table.cells().len(),
        data.examples.len(),
        data.dev.len()
    );
    let outcome = train(
        &mut table,
        &data.examples,
        &data.dev,
        &data.vocab,
        DEFAULT_MARKER,
        &config.training,
        &config.out_dir,
    )?;
    println!("stopped after {} steps ({:?})", outcome.final_step, outcome.stop);
    match (outcome.best_step, outcome.best_mean_bleu) {
        (Some(step), Some(score)) => println!("best mean dev BLEU {score:.2} at step {step}"),
        _ => println!("no dev evaluations ran; final state saved"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// translate
// ---------------------------------------------------------------------------

enum AnyCheckpoint {
    F32(Checkpoint<f32>),
    F64(Checkpoint<f64>),
}

/// Checkpoints record their dtype per tensor; try single precision first
/// and fall back to double.
fn load_any_checkpoint(path: &Path) -> Result<AnyCheckpoint> {
    match load_checkpoint::<f32>(path) {
        Ok(ckpt) => Ok(AnyCheckpoint::F32(ckpt)),
        Err(first) => match load_checkpoint::<f64>(path) {
            Ok(ckpt) => Ok(AnyCheckpoint::F64(ckpt)),
            Err(_) => Err(first.into()),
        },
    }
}

fn cmd_translate(args: &TranslateArgs) -> Result<()> {
    let vocab = Vocabulary::load(&args.vocab)?;
    let bpe = BpeModel::load(&args.bpe)?;
    let lines = read_lines(&args.input)?;
    let beam = BeamConfig {
        width: args.beam,
        alpha: args.alpha,
        plain_length_norm: args.plain_length_norm,
        ..BeamConfig::default()
    };
    let outputs = match load_any_checkpoint(&args.checkpoint)? {
        AnyCheckpoint::F32(ckpt) => translate_lines(&ckpt, &vocab, &bpe, &lines, &args.lang, &beam)?,
        AnyCheckpoint::F64(ckpt) => translate_lines(&ckpt, &vocab, &bpe, &lines, &args.lang, &beam)?,
    };
    match &args.output {
        Some(path) => {
            let mut text = outputs.join("\n");
            text.push('\n');
            std::fs::write(path, text)
                .with_context(|| format!("cannot write {}", path.display()))?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            for line in &outputs {
                writeln!(lock, "{line}")?;
            }
        }
    }
    Ok(())
}

fn translate_lines<T: Scalar>(
    ckpt: &Checkpoint<T>,
    vocab: &Vocabulary,
    bpe: &BpeModel,
    lines: &[String],
    lang: &str,
    beam: &BeamConfig,
) -> Result<Vec<String>> {
    let plan = &ckpt.plan;
    if !plan.targets.iter().any(|t| t == lang) {
        return Err(Error::UnknownTarget(lang.to_string()).into());
    }
    let hash = vocab_fingerprint(vocab);
    ckpt.verify_compatible(&ckpt.config, plan, &hash)?;
    let mut table = ParameterTable::<T>::resolve(&ckpt.config, plan)?;
    ckpt.restore_table(&mut table)?;
    let lang_tok = vocab.lang_token_id(lang)?;

    let mut out = Vec::with_capacity(lines.len());
    for line in lines {
        let mut src = vec![lang_tok];
        src.extend(bpe_encode_line(line, bpe).iter().map(|t| vocab.id_or_unk(t)));
        let hyp = beam_search(&table, lang, &src, beam)?;
        let words = join_subwords(&hypothesis_subwords(&hyp, vocab), bpe.marker());
        out.push(words.join(" "));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

fn split_words(lines: &[String]) -> Vec<Vec<String>> {
    lines
        .iter()
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect()
}

fn cmd_score(args: &ScoreArgs) -> Result<()> {
    let hyps = split_words(&read_lines(&args.hyp)?);
    let refs = split_words(&read_lines(&args.reference)?);
    let score = bleu(&hyps, &refs, 4)?;
    println!("BLEU = {score:.2}");
    if let Some(path) = &args.csv {
        let text = format!("metric,language,value\nbleu,{},{score}\n", args.lang);
        std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    }

    if args.fmeasure {
        let train = args
            .train_corpus
            .as_ref()
            .ok_or_else(|| anyhow!("--fmeasure needs --train-corpus"))?;
        let train_lines = read_lines(train)?;
        let freqs: HashMap<String, u64> = word_frequencies(train_lines.iter().map(|s| s.as_str()))
            .into_iter()
            .collect();
        let buckets = fmeasure_buckets(&hyps, &refs, &freqs, &DEFAULT_BUCKET_BOUNDS)?;
        let mut csv = String::from("bucket_low,bucket_high,match,hyp_count,ref_count,f\n");
        for b in &buckets {
            let high = b.high.map_or("inf".to_string(), |h| h.to_string());
            println!(
                "freq [{}, {}] F = {:.4} (match {}, hyp {}, ref {})",
                b.low, high, b.f(), b.match_count, b.hyp_count, b.ref_count
            );
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                b.low, high, b.match_count, b.hyp_count, b.ref_count, b.f()
            ));
        }
        if let Some(path) = &args.fmeasure_csv {
            std::fs::write(path, csv)
                .with_context(|| format!("cannot write {}", path.display()))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// count-params
// ---------------------------------------------------------------------------

fn cmd_count_params(args: &CountParamsArgs) -> Result<()> {
    let config = RunConfig::load(&args.config)?;
    let langs = config.langs();
    let plans: Vec<SharingPlan> = match args.strategy.as_deref() {
        Some("all") => Strategy::ALL
            .iter()
            .map(|&s| SharingPlan::from_strategy(s, &langs))
            .collect::<polynmt::Result<_>>()?,
        Some(name) => vec![SharingPlan::from_strategy(Strategy::from_name(name)?, &langs)?],
        None => vec![config.resolve_plan()?],
    };
    println!(
        "{:<12} {:>14} {:>14} {:>9} {:>9}",
        "strategy", "weights", "all_params", "weights_M", "all_M"
    );
    for plan in &plans {
        let counts = count_parameters(&config.model, plan)?;
        println!(
            "{:<12} {:>14} {:>14} {:>9} {:>9}",
            plan.strategy_name(),
            counts.weights_only,
            counts.total,
            counts.weights_millions(),
            counts.total_millions()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// gen-toy
// ---------------------------------------------------------------------------

fn cmd_gen_toy(args: &GenToyArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    for (idx, spec) in args.pair.iter().enumerate() {
        let (lang, task_name) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("--pair wants lang=task, got '{spec}'"))?;
        let task: ToyTask = task_name.parse()?;
        let total = args.sentences + args.dev_sentences;
        let corpus = toy_corpus(task, total, args.min_len, args.max_len, args.seed + idx as u64)?;
        let write = |name: String, lines: &[String]| -> Result<()> {
            let path = args.out_dir.join(name);
            let mut text = lines.join("\n");
            text.push('\n');
            std::fs::write(&path, text)
                .with_context(|| format!("cannot write {}", path.display()))
        };
        write(format!("train.src.{lang}"), &corpus.src[..args.sentences])?;
        write(format!("train.{lang}"), &corpus.tgt[..args.sentences])?;
        if args.dev_sentences > 0 {
            write(format!("dev.src.{lang}"), &corpus.src[args.sentences..])?;
            write(format!("dev.{lang}"), &corpus.tgt[args.sentences..])?;
        }
        println!(
            "{lang}: {} train / {} dev sentences ({task_name})",
            args.sentences, args.dev_sentences
        );
    }
    Ok(())
}
