//! The training loop: teacher-forced steps over token-budgeted batches, the
//! warmup/decay schedule, periodic dev evaluation with beam decoding, and
//! best-checkpoint selection with patience-based stopping.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{
    join_subwords, make_batches, Batch, BatchMode, Example, Vocabulary, PAD,
};
use crate::decode::{beam_search, hypothesis_subwords, BeamConfig};
use crate::error::{Error, Result};
use crate::eval::bleu;
use crate::model::{decoder_forward, encoder_forward, output_logits};
use crate::rng::mix_seed;
use crate::sharing::ParameterTable;
use crate::tensor::graph::Graph;
use crate::tensor::Scalar;
use crate::training::{lr_at, save_checkpoint, token_accuracy, vocab_fingerprint, AdamState};

pub const METRICS_FILE: &str = "metrics.csv";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";

/// Stream id separating epoch-level batch shuffling from per-step graph rng.
const BATCH_STREAM: u64 = 0x6261_7463;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub warmup: u64,
    pub label_smoothing: f64,
    /// Real-token budget per batch, applied to source and target separately.
    pub token_budget: usize,
    pub batch_mode: BatchMode,
    pub max_steps: u64,
    pub eval_interval: u64,
    /// Stop after this many consecutive dev evaluations without improvement.
    pub patience: usize,
    pub seed: u64,
    /// Average per-sentence mean losses instead of pooling tokens batch-wide.
    pub sentence_mean: bool,
    /// Beam width for dev-set decoding.
    pub beam_width: usize,
    /// Optional early stop once teacher-forced training accuracy over a full
    /// epoch reaches this fraction (useful for overfit smoke runs).
    pub stop_train_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta1: 0.9,
            beta2: 0.997,
            adam_eps: 1e-9,
            warmup: 16000,
            label_smoothing: 0.1,
            token_budget: 3000,
            batch_mode: BatchMode::BalancedMultilingual,
            max_steps: 100_000,
            eval_interval: 1000,
            patience: 10,
            seed: 1,
            sentence_mean: false,
            beam_width: 5,
            stop_train_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("adam betas ({}, {}) outside [0, 1)", self.beta1, self.beta2));
        }
        if self.adam_eps <= 0.0 {
            return bad(format!("adam eps {} must be positive", self.adam_eps));
        }
        if self.warmup == 0 {
            return bad("warmup must be at least 1 step".into());
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad(format!("label smoothing {} outside [0, 1)", self.label_smoothing));
        }
        if self.token_budget == 0 || self.max_steps == 0 || self.eval_interval == 0 {
            return bad("token_budget, max_steps, and eval_interval must be positive".into());
        }
        if self.patience == 0 || self.beam_width == 0 {
            return bad("patience and beam_width must be positive".into());
        }
        if let Some(acc) = self.stop_train_accuracy {
            if !(0.0..=1.0).contains(&acc) {
                return bad(format!("stop_train_accuracy {acc} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StepStats {
    pub step: u64,
    pub lr: f64,
    /// Batch loss (pooled token mean by default).
    pub loss: f64,
    /// Non-pad gold tokens in the batch.
    pub tokens: usize,
    /// Teacher-forced argmax hits among those tokens.
    pub correct: usize,
    /// Per-language (loss sum, token count).
    pub per_lang: Vec<(f64, usize)>,
}

/// One optimizer step on one batch: forward every sentence in stored row
/// order, pool the losses, backpropagate, and apply Adam at the scheduled
/// learning rate. Sentences are processed individually with their padding
/// trimmed; shared cells accumulate gradient contributions from every row
/// that touches them.
pub fn train_step<T: Scalar>(
    table: &mut ParameterTable<T>,
    adam: &mut AdamState<T>,
    batch: &Batch,
    langs: &[String],
    tc: &TrainConfig,
    step: u64,
) -> Result<StepStats> {
    let mut g = Graph::training(mix_seed(tc.seed, step));
    let mut sentence_losses = Vec::with_capacity(batch.sentences);
    let mut sentence_tokens = Vec::with_capacity(batch.sentences);
    let mut per_lang = vec![(0.0f64, 0usize); langs.len()];
    let mut correct = 0usize;

    for i in 0..batch.sentences {
        let src = &batch.src_row(i)[..batch.src_lens[i]];
        let tgt_in = &batch.tgt_in_row(i)[..batch.tgt_lens[i]];
        let tgt_out = &batch.tgt_out_row(i)[..batch.tgt_lens[i]];
        let lang_idx = batch.langs[i];
        let lang = langs.get(lang_idx).ok_or_else(|| {
            Error::InvalidData(format!("batch references language index {lang_idx}"))
        })?;
        let enc = encoder_forward(&mut g, table, lang, src, Some(PAD))?;
        let dec = decoder_forward(&mut g, table, lang, tgt_in, enc, src, Some(PAD))?;
        let logits = output_logits(&mut g, table, lang, dec)?;
        let (ce_sum, count) = g.ce_loss(logits, tgt_out, tc.label_smoothing, Some(PAD))?;
        per_lang[lang_idx].0 += g.value(ce_sum).data()[0].to_f64_exact();
        per_lang[lang_idx].1 += count;
        let (hits, _) = token_accuracy(g.value(logits), tgt_out, PAD);
        correct += hits;
        sentence_losses.push(ce_sum);
        sentence_tokens.push(count);
    }

    let total_tokens: usize = sentence_tokens.iter().sum();
    if total_tokens == 0 {
        return Err(Error::Numeric(format!("step {step}: batch contains no gold tokens")));
    }
    let loss = if tc.sentence_mean {
        let mut acc = None;
        for (node, count) in sentence_losses.iter().zip(&sentence_tokens) {
            let mean = g.scale(*node, T::from_f64(1.0 / *count as f64));
            acc = Some(match acc {
                None => mean,
                Some(prev) => g.add(prev, mean)?,
            });
        }
        g.scale(acc.unwrap(), T::from_f64(1.0 / batch.sentences as f64))
    } else {
        // summing in row order keeps the reduction independent of how the
        // sentences are distributed over languages
        let mut acc = None;
        for node in &sentence_losses {
            acc = Some(match acc {
                None => *node,
                Some(prev) => g.add(prev, *node)?,
            });
        }
        g.scale(acc.unwrap(), T::from_f64(1.0 / total_tokens as f64))
    };
    let loss_value = g.value(loss).data()[0].to_f64_exact();

    g.backward(loss)?;
    table.accumulate_grads(g.param_grads());
    let lr = lr_at(step, table.config().d_m, tc.warmup)?;
    adam.step(table, lr)?;

    Ok(StepStats { step, lr, loss: loss_value, tokens: total_tokens, correct, per_lang })
}

// ---------------------------------------------------------------------------
// dev evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DevSentence {
    pub example: Example,
    /// Reference as whole words (subword markers already joined).
    pub ref_words: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct DevReport {
    /// BLEU per language; `None` when the dev set has no sentences for it.
    pub per_lang_bleu: Vec<Option<f64>>,
    /// Mean over the languages that were present.
    pub mean_bleu: f64,
    /// Pooled teacher-forced token-mean loss over the whole dev set.
    pub dev_loss: f64,
}

/// Decode the dev set with beam search and score per-language BLEU; also
/// compute the teacher-forced dev loss used for tie-breaking.
pub fn evaluate_dev<T: Scalar>(
    table: &ParameterTable<T>,
    dev: &[DevSentence],
    langs: &[String],
    vocab: &Vocabulary,
    marker: &str,
    tc: &TrainConfig,
) -> Result<DevReport> {
    if dev.is_empty() {
        return Err(Error::InvalidData("dev evaluation needs at least one sentence".into()));
    }
    let beam = BeamConfig { width: tc.beam_width, ..BeamConfig::default() };
    let mut hyps: Vec<Vec<Vec<String>>> = vec![Vec::new(); langs.len()];
    let mut refs: Vec<Vec<Vec<String>>> = vec![Vec::new(); langs.len()];
    let mut loss_sum = 0.0f64;
    let mut token_sum = 0usize;

    for sent in dev {
        let ex = &sent.example;
        let lang = langs.get(ex.lang).ok_or_else(|| {
            Error::InvalidData(format!("dev sentence references language index {}", ex.lang))
        })?;
        let hyp = beam_search(table, lang, &ex.src, &beam)?;
        let words = join_subwords(&hypothesis_subwords(&hyp, vocab), marker);
        hyps[ex.lang].push(words);
        refs[ex.lang].push(sent.ref_words.clone());

        let mut g = Graph::inference();
        let enc = encoder_forward(&mut g, table, lang, &ex.src, Some(PAD))?;
        let dec = decoder_forward(&mut g, table, lang, &ex.tgt_in, enc, &ex.src, Some(PAD))?;
        let logits = output_logits(&mut g, table, lang, dec)?;
        let (ce_sum, count) = g.ce_loss(logits, &ex.tgt_out, tc.label_smoothing, Some(PAD))?;
        loss_sum += g.value(ce_sum).data()[0].to_f64_exact();
        token_sum += count;
    }

    let mut per_lang_bleu = Vec::with_capacity(langs.len());
    let mut mean = 0.0;
    let mut present = 0usize;
    for l in 0..langs.len() {
        if hyps[l].is_empty() {
            per_lang_bleu.push(None);
        } else {
            let score = bleu(&hyps[l], &refs[l], 4)?;
            per_lang_bleu.push(Some(score));
            mean += score;
            present += 1;
        }
    }
    if token_sum == 0 || present == 0 {
        return Err(Error::InvalidData("dev set has no scorable sentences".into()));
    }
    Ok(DevReport {
        per_lang_bleu,
        mean_bleu: mean / present as f64,
        dev_loss: loss_sum / token_sum as f64,
    })
}

// ---------------------------------------------------------------------------
// the full loop
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxSteps,
    Patience,
    TrainAccuracy,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_step: u64,
    pub best_step: Option<u64>,
    pub best_mean_bleu: Option<f64>,
    pub stop: StopReason,
}

struct Interval {
    loss_sum: f64,
    tokens: usize,
    started: Instant,
}

impl Interval {
    fn new() -> Interval {
        Interval { loss_sum: 0.0, tokens: 0, started: Instant::now() }
    }

    fn absorb(&mut self, stats: &StepStats) {
        self.loss_sum += stats.loss * stats.tokens as f64;
        self.tokens += stats.tokens;
    }

    fn train_loss(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.loss_sum / self.tokens as f64
        }
    }

    fn tokens_per_sec(&self) -> f64 {
        self.tokens as f64 / self.started.elapsed().as_secs_f64().max(1e-9)
    }
}

fn write_metrics_row(
    out: &mut impl std::io::Write,
    step: u64,
    lr: f64,
    interval: &Interval,
    num_langs: usize,
    report: Option<&DevReport>,
) -> std::io::Result<()> {
    let mut row = format!("{step},{lr},{}", interval.train_loss());
    for l in 0..num_langs {
        match report.and_then(|r| r.per_lang_bleu[l]) {
            Some(score) => row.push_str(&format!(",{score}")),
            None => row.push(','),
        }
    }
    row.push_str(&format!(",{:.1}", interval.tokens_per_sec()));
    writeln!(out, "{row}")
}

/// Run the training loop until max steps, patience exhaustion, or the
/// optional training-accuracy stop. The table is updated in place; the best
/// checkpoint (by mean dev BLEU, ties broken by dev loss) and the final
/// state are written into `out_dir` alongside a metrics CSV.
pub fn train<T: Scalar>(
    table: &mut ParameterTable<T>,
    examples: &[Example],
    dev: &[DevSentence],
    vocab: &Vocabulary,
    marker: &str,
    tc: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    tc.validate()?;
    if examples.is_empty() {
        return Err(Error::InvalidData("training corpus is empty".into()));
    }
    let langs: Vec<String> = vocab.targets().to_vec();
    let vocab_hash = vocab_fingerprint(vocab);
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let metrics_path = out_dir.join(METRICS_FILE);
    let mut metrics = fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let mut header = String::from("step,lr,train_loss");
    for lang in &langs {
        header.push_str(&format!(",dev_bleu_{lang}"));
    }
    header.push_str(",tokens_per_sec");
    writeln!(metrics, "{header}").map_err(|e| Error::io(&metrics_path, e))?;

    let mut adam = AdamState::new(table, tc.beta1, tc.beta2, tc.adam_eps);
    let mut step = 0u64;
    let mut interval = Interval::new();
    let mut best: Option<(f64, f64, u64)> = None; // (mean bleu, dev loss, step)
    let mut evals_since_improvement = 0usize;
    let mut last_eval_step = 0u64;
    let mut stop = StopReason::MaxSteps;

    'training: for epoch in 0u64.. {
        let batches = make_batches(
            examples,
            tc.token_budget,
            tc.batch_mode,
            langs.len(),
            mix_seed(mix_seed(tc.seed, BATCH_STREAM), epoch),
        );
        if batches.is_empty() {
            return Err(Error::InvalidData("training corpus produced no batches".into()));
        }
        let mut epoch_correct = 0usize;
        let mut epoch_tokens = 0usize;

        for batch in &batches {
            step += 1;
            let stats = train_step(table, &mut adam, batch, &langs, tc, step)?;
            interval.absorb(&stats);
            epoch_correct += stats.correct;
            epoch_tokens += stats.tokens;

            if step % tc.eval_interval == 0 {
                let report = if dev.is_empty() {
                    None
                } else {
                    Some(evaluate_dev(table, dev, &langs, vocab, marker, tc)?)
                };
                write_metrics_row(&mut metrics, step, stats.lr, &interval, langs.len(), report.as_ref())
                    .map_err(|e| Error::io(&metrics_path, e))?;
                interval = Interval::new();
                last_eval_step = step;
                if let Some(r) = &report {
                    let improved = match best {
                        None => true,
                        Some((bb, bl, _)) => {
                            r.mean_bleu > bb || (r.mean_bleu == bb && r.dev_loss < bl)
                        }
                    };
                    if improved {
                        best = Some((r.mean_bleu, r.dev_loss, step));
                        evals_since_improvement = 0;
                        save_checkpoint(
                            table,
                            Some(&adam),
                            &vocab_hash,
                            step,
                            Some(r.mean_bleu),
                            &out_dir.join(BEST_CHECKPOINT),
                        )?;
                    } else {
                        evals_since_improvement += 1;
                        if evals_since_improvement >= tc.patience {
                            stop = StopReason::Patience;
                            break 'training;
                        }
                    }
                }
            }
            if step >= tc.max_steps {
                stop = StopReason::MaxSteps;
                break 'training;
            }
        }

        if let Some(target) = tc.stop_train_accuracy {
            if epoch_tokens > 0 && epoch_correct as f64 / epoch_tokens as f64 >= target {
                stop = StopReason::TrainAccuracy;
                break 'training;
            }
        }
    }

    // close out the log (and best tracking) if we stopped between evals
    if step > last_eval_step {
        let report = if dev.is_empty() {
            None
        } else {
            Some(evaluate_dev(table, dev, &langs, vocab, marker, tc)?)
        };
        let lr = lr_at(step, table.config().d_m, tc.warmup)?;
        write_metrics_row(&mut metrics, step, lr, &interval, langs.len(), report.as_ref())
            .map_err(|e| Error::io(&metrics_path, e))?;
        if let Some(r) = &report {
            let improved = match best {
                None => true,
                Some((bb, bl, _)) => r.mean_bleu > bb || (r.mean_bleu == bb && r.dev_loss < bl),
            };
            if improved {
                best = Some((r.mean_bleu, r.dev_loss, step));
                save_checkpoint(
                    table,
                    Some(&adam),
                    &vocab_hash,
                    step,
                    Some(r.mean_bleu),
                    &out_dir.join(BEST_CHECKPOINT),
                )?;
            }
        }
    }

    save_checkpoint(
        table,
        Some(&adam),
        &vocab_hash,
        step,
        best.map(|(b, _, _)| b),
        &out_dir.join(LAST_CHECKPOINT),
    )?;

    Ok(TrainOutcome {
        final_step: step,
        best_step: best.map(|(_, _, s)| s),
        best_mean_bleu: best.map(|(b, _, _)| b),
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{
        bpe_learn, prepare_corpus, subword_frequencies, word_frequencies, BatchMode, Vocabulary,
        DEFAULT_MARKER,
    };
    use crate::model::ModelConfig;
    use crate::sharing::{SharingPlan, Strategy};
    use crate::toy::{toy_corpus, ToyTask};
    use crate::training::init_parameters;

    struct Pipeline {
        examples: Vec<Example>,
        dev: Vec<DevSentence>,
        vocab: Vocabulary,
    }

    /// Full data pipeline over toy corpora: joint BPE, joint vocabulary,
    /// encoded examples per task/language.
    fn toy_pipeline(tasks: &[(&str, ToyTask)], sentences: usize, dev_take: usize) -> Pipeline {
        let corpora: Vec<_> = tasks
            .iter()
            .map(|&(_, task)| toy_corpus(task, sentences, 3, 8, 11).unwrap())
            .collect();
        let mut all_lines: Vec<String> = Vec::new();
        for c in &corpora {
            all_lines.extend(c.src.iter().cloned());
            all_lines.extend(c.tgt.iter().cloned());
        }
        let words = word_frequencies(all_lines.iter().map(|s| s.as_str()));
        let model = bpe_learn(&words, 60, DEFAULT_MARKER).unwrap();
        let subs = subword_frequencies(all_lines.iter().map(|s| s.as_str()), &model);
        let langs: Vec<String> = tasks.iter().map(|&(name, _)| name.to_string()).collect();
        let vocab = Vocabulary::build(&subs, &langs).unwrap();

        let mut examples = Vec::new();
        let mut dev = Vec::new();
        for (lang_idx, corpus) in corpora.iter().enumerate() {
            let pairs: Vec<(String, String)> = corpus
                .src
                .iter()
                .cloned()
                .zip(corpus.tgt.iter().cloned())
                .collect();
            let encoded = prepare_corpus(&pairs, &langs[lang_idx], &model, &vocab).unwrap();
            assert_eq!(encoded.len(), pairs.len());
            for (i, ex) in encoded.iter().enumerate() {
                if i < dev_take {
                    dev.push(DevSentence {
                        example: ex.clone(),
                        ref_words: pairs[i].1.split_whitespace().map(str::to_string).collect(),
                    });
                }
                examples.push(ex.clone());
            }
        }
        Pipeline { examples, dev, vocab }
    }

    fn tiny_config(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            num_layers: 1,
            d_m: 32,
            d_h: 64,
            heads: 4,
            vocab_size,
            p_drop: 0.0,
            ..ModelConfig::default()
        }
    }

    fn toy_train_config(max_steps: u64) -> TrainConfig {
        TrainConfig {
            warmup: 400,
            token_budget: 400,
            batch_mode: BatchMode::BalancedMultilingual,
            max_steps,
            eval_interval: 10_000,
            seed: 3,
            beam_width: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn loss_falls_on_the_copy_task() {
        let pipe = toy_pipeline(&[("cp", ToyTask::Copy)], 32, 0);
        let config = tiny_config(pipe.vocab.len());
        let plan = SharingPlan::from_strategy(Strategy::Full, pipe.vocab.targets()).unwrap();
        let mut table = ParameterTable::<f64>::resolve(&config, &plan).unwrap();
        init_parameters(&mut table, 7);
        let mut adam = AdamState::new(&table, 0.9, 0.997, 1e-9);
        let tc = toy_train_config(60);
        let langs = pipe.vocab.targets().to_vec();
        let batches = make_batches(&pipe.examples, 400, BatchMode::Bilingual, 1, 5);
        let mut losses = Vec::new();
        let mut step = 0;
        'outer: loop {
            for b in &batches {
                step += 1;
                let stats = train_step(&mut table, &mut adam, b, &langs, &tc, step).unwrap();
                losses.push(stats.loss);
                if step >= 60 {
                    break 'outer;
                }
            }
        }
        let early: f64 = losses[..10].iter().sum::<f64>() / 10.0;
        let late: f64 = losses[50..].iter().sum::<f64>() / 10.0;
        assert!(late < early * 0.7, "loss did not fall: {early} -> {late}");
    }

    #[test]
    fn per_language_stats_add_up() {
        let pipe = toy_pipeline(&[("cp", ToyTask::Copy), ("rev", ToyTask::Reverse)], 12, 0);
        let config = tiny_config(pipe.vocab.len());
        let plan = SharingPlan::from_strategy(Strategy::None, pipe.vocab.targets()).unwrap();
        let mut table = ParameterTable::<f64>::resolve(&config, &plan).unwrap();
        init_parameters(&mut table, 7);
        let mut adam = AdamState::new(&table, 0.9, 0.997, 1e-9);
        let tc = toy_train_config(10);
        let langs = pipe.vocab.targets().to_vec();
        let batches =
            make_batches(&pipe.examples, 4000, BatchMode::BalancedMultilingual, 2, 5);
        let stats = train_step(&mut table, &mut adam, &batches[0], &langs, &tc, 1).unwrap();
        assert_eq!(stats.per_lang.len(), 2);
        assert!(stats.per_lang.iter().all(|&(_, n)| n > 0));
        let total: usize = stats.per_lang.iter().map(|&(_, n)| n).sum();
        assert_eq!(total, stats.tokens);
        // pooled loss is the token-weighted combination of per-language sums
        let pooled: f64 =
            stats.per_lang.iter().map(|&(s, _)| s).sum::<f64>() / stats.tokens as f64;
        assert!((pooled - stats.loss).abs() < 1e-9);
    }

    #[test]
    fn identical_seeds_reproduce_the_metrics_log() {
        let pipe = toy_pipeline(&[("cp", ToyTask::Copy)], 16, 2);
        let config = tiny_config(pipe.vocab.len());
        let plan = SharingPlan::from_strategy(Strategy::Full, pipe.vocab.targets()).unwrap();
        let tc = TrainConfig {
            max_steps: 12,
            eval_interval: 6,
            ..toy_train_config(12)
        };
        let mut logs = Vec::new();
        for _ in 0..2 {
            let mut table = ParameterTable::<f64>::resolve(&config, &plan).unwrap();
            init_parameters(&mut table, 7);
            let dir = tempfile::tempdir().unwrap();
            let outcome = train(
                &mut table,
                &pipe.examples,
                &pipe.dev,
                &pipe.vocab,
                DEFAULT_MARKER,
                &tc,
                dir.path(),
            )
            .unwrap();
            assert_eq!(outcome.final_step, 12);
            let text = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
            // drop the wall-clock throughput column before comparing
            let stripped: Vec<String> = text
                .lines()
                .map(|l| l.rsplit_once(',').unwrap().0.to_string())
                .collect();
            assert!(stripped.len() >= 3, "expected header and two eval rows");
            logs.push(stripped);
        }
        assert_eq!(logs[0], logs[1]);
    }

    #[test]
    fn overfit_run_stops_on_train_accuracy_and_translates() {
        let pipe = toy_pipeline(&[("cp", ToyTask::Copy)], 24, 6);
        let config = tiny_config(pipe.vocab.len());
        let plan = SharingPlan::from_strategy(Strategy::Full, pipe.vocab.targets()).unwrap();
        let mut table = ParameterTable::<f64>::resolve(&config, &plan).unwrap();
        init_parameters(&mut table, 7);
        let tc = TrainConfig {
            stop_train_accuracy: Some(0.995),
            max_steps: 1500,
            eval_interval: 100_000,
            ..toy_train_config(1500)
        };
        let dir = tempfile::tempdir().unwrap();
        let outcome = train(
            &mut table,
            &pipe.examples,
            &pipe.dev,
            &pipe.vocab,
            DEFAULT_MARKER,
            &tc,
            dir.path(),
        )
        .unwrap();
        assert_eq!(outcome.stop, StopReason::TrainAccuracy, "no overfit by step {}", outcome.final_step);
        // final eval ran at the stopping step and kept a best checkpoint
        assert!(outcome.best_step.is_some());
        assert!(dir.path().join(BEST_CHECKPOINT).exists());
        assert!(dir.path().join(LAST_CHECKPOINT).exists());
        let report = evaluate_dev(
            &table,
            &pipe.dev,
            &pipe.vocab.targets().to_vec(),
            &pipe.vocab,
            DEFAULT_MARKER,
            &tc,
        )
        .unwrap();
        assert!(report.mean_bleu > 95.0, "dev BLEU {}", report.mean_bleu);
    }

    #[test]
    fn rejects_bad_configs_and_empty_corpora() {
        let pipe = toy_pipeline(&[("cp", ToyTask::Copy)], 4, 0);
        let config = tiny_config(pipe.vocab.len());
        let plan = SharingPlan::from_strategy(Strategy::Full, pipe.vocab.targets()).unwrap();
        let mut table = ParameterTable::<f64>::resolve(&config, &plan).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let tc = toy_train_config(10);
        let empty: Vec<Example> = Vec::new();
        assert!(train(&mut table, &empty, &[], &pipe.vocab, DEFAULT_MARKER, &tc, dir.path())
            .is_err());
        let bad = TrainConfig { warmup: 0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        assert!(TrainConfig { label_smoothing: 1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { patience: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
