//! Token-budgeted batching. Similar-length sentences are grouped so padding
//! stays cheap; in balanced multilingual mode sentences are drawn
//! round-robin across target languages so each batch carries roughly equal
//! sentence counts per language.

use serde::{Deserialize, Serialize};

use crate::data::{Example, PAD};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    Bilingual,
    BalancedMultilingual,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub sentences: usize,
    pub src_len: usize,
    pub tgt_len: usize,
    /// sentences × src_len, right-padded with the pad id.
    pub src: Vec<usize>,
    /// sentences × tgt_len decoder input rows ([bos] + target ids).
    pub tgt_in: Vec<usize>,
    /// sentences × tgt_len gold rows (target ids + [eos]).
    pub tgt_out: Vec<usize>,
    /// Per-sentence true (unpadded) lengths.
    pub src_lens: Vec<usize>,
    pub tgt_lens: Vec<usize>,
    /// Per-sentence target-language index.
    pub langs: Vec<usize>,
    /// Real (unpadded) token totals per side.
    pub src_tokens: usize,
    pub tgt_tokens: usize,
}

impl Batch {
    fn from_examples(examples: &[&Example]) -> Batch {
        let sentences = examples.len();
        let src_len = examples.iter().map(|e| e.src.len()).max().unwrap_or(0);
        let tgt_len = examples.iter().map(|e| e.tgt_in.len()).max().unwrap_or(0);
        let mut src = vec![PAD; sentences * src_len];
        let mut tgt_in = vec![PAD; sentences * tgt_len];
        let mut tgt_out = vec![PAD; sentences * tgt_len];
        let mut src_lens = Vec::with_capacity(sentences);
        let mut tgt_lens = Vec::with_capacity(sentences);
        let mut langs = Vec::with_capacity(sentences);
        let (mut src_tokens, mut tgt_tokens) = (0, 0);
        for (i, ex) in examples.iter().enumerate() {
            src[i * src_len..i * src_len + ex.src.len()].copy_from_slice(&ex.src);
            tgt_in[i * tgt_len..i * tgt_len + ex.tgt_in.len()].copy_from_slice(&ex.tgt_in);
            tgt_out[i * tgt_len..i * tgt_len + ex.tgt_out.len()].copy_from_slice(&ex.tgt_out);
            src_lens.push(ex.src.len());
            tgt_lens.push(ex.tgt_in.len());
            langs.push(ex.lang);
            src_tokens += ex.src.len();
            tgt_tokens += ex.tgt_in.len();
        }
        Batch {
            sentences,
            src_len,
            tgt_len,
            src,
            tgt_in,
            tgt_out,
            src_lens,
            tgt_lens,
            langs,
            src_tokens,
            tgt_tokens,
        }
    }

    pub fn src_row(&self, i: usize) -> &[usize] {
        &self.src[i * self.src_len..(i + 1) * self.src_len]
    }

    pub fn tgt_in_row(&self, i: usize) -> &[usize] {
        &self.tgt_in[i * self.tgt_len..(i + 1) * self.tgt_len]
    }

    pub fn tgt_out_row(&self, i: usize) -> &[usize] {
        &self.tgt_out[i * self.tgt_len..(i + 1) * self.tgt_len]
    }

    /// True for positions holding a real token (row i, column j).
    pub fn src_mask(&self, i: usize, j: usize) -> bool {
        j < self.src_lens[i]
    }

    pub fn tgt_mask(&self, i: usize, j: usize) -> bool {
        j < self.tgt_lens[i]
    }

    pub fn sentences_per_lang(&self, num_langs: usize) -> Vec<usize> {
        let mut counts = vec![0; num_langs];
        for &l in &self.langs {
            counts[l] += 1;
        }
        counts
    }
}

/// Build one epoch of batches. Batches fill until *either* side would
/// exceed `token_budget` real tokens (every batch holds at least one
/// sentence); batch order is then shuffled by the seed. Composition is a
/// pure function of (examples, budget, mode, num_langs), so a fixed seed
/// reproduces the epoch exactly.
pub fn make_batches(
    examples: &[Example],
    token_budget: usize,
    mode: BatchMode,
    num_langs: usize,
    seed: u64,
) -> Vec<Batch> {
    let order: Vec<usize> = match mode {
        BatchMode::Bilingual => sorted_by_length(examples, |_| true),
        BatchMode::BalancedMultilingual => {
            // per-language length-sorted queues, drawn round-robin
            let queues: Vec<Vec<usize>> = (0..num_langs)
                .map(|lang| sorted_by_length(examples, |e| e.lang == lang))
                .collect();
            let mut order = Vec::with_capacity(examples.len());
            let mut cursors = vec![0usize; num_langs];
            loop {
                let mut drew = false;
                for (lang, q) in queues.iter().enumerate() {
                    if cursors[lang] < q.len() {
                        order.push(q[cursors[lang]]);
                        cursors[lang] += 1;
                        drew = true;
                    }
                }
                if !drew {
                    break;
                }
            }
            order
        }
    };

    let budget = token_budget.max(1);
    let mut batches = Vec::new();
    let mut current: Vec<&Example> = Vec::new();
    let (mut src_sum, mut tgt_sum) = (0usize, 0usize);
    for &i in &order {
        let ex = &examples[i];
        if !current.is_empty()
            && (src_sum + ex.src.len() > budget || tgt_sum + ex.tgt_in.len() > budget)
        {
            batches.push(Batch::from_examples(&current));
            current.clear();
            src_sum = 0;
            tgt_sum = 0;
        }
        src_sum += ex.src.len();
        tgt_sum += ex.tgt_in.len();
        current.push(ex);
    }
    if !current.is_empty() {
        batches.push(Batch::from_examples(&current));
    }

    let mut rng = Rng::new(seed);
    rng.shuffle(&mut batches);
    batches
}

/// Indices of the selected examples, longest-first so a batch's length
/// spread stays small; ties keep corpus order.
fn sorted_by_length(examples: &[Example], keep: impl Fn(&Example) -> bool) -> Vec<usize> {
    let mut idx: Vec<usize> =
        (0..examples.len()).filter(|&i| keep(&examples[i])).collect();
    idx.sort_by_key(|&i| {
        let e = &examples[i];
        std::cmp::Reverse(e.src.len().max(e.tgt_in.len()))
    });
    idx
}
