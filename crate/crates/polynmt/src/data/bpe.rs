//! Byte-pair encoding over pre-tokenized text. Symbols start as characters
//! (the last character of a word carries an end-of-word tag) and the most
//! frequent adjacent pair is merged repeatedly; frequency ties break
//! lexicographically so learning is deterministic.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Internal end-of-word tag. Never leaves this module: encoded output uses
/// the continuation marker convention instead.
const EOW: &str = "</w>";

pub const DEFAULT_MARKER: &str = "@@";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeModel {
    marker: String,
    merges: Vec<(String, String)>,
}

impl BpeModel {
    pub fn marker(&self) -> &str {
        &self.marker
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }
}

fn word_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    chars
        .iter()
        .enumerate()
        .map(|(i, c)| if i + 1 == n { format!("{c}{EOW}") } else { c.to_string() })
        .collect()
}

/// Count token frequencies of whitespace-separated lines.
pub fn word_frequencies<'a>(lines: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, u64> {
    let mut freqs = BTreeMap::new();
    for line in lines {
        for tok in line.split_whitespace() {
            *freqs.entry(tok.to_string()).or_insert(0) += 1;
        }
    }
    freqs
}

/// Learn `n_merges` merge operations from a word frequency table. Stops
/// early if the corpus runs out of distinct adjacent pairs.
pub fn bpe_learn(
    freqs: &BTreeMap<String, u64>,
    n_merges: usize,
    marker: &str,
) -> Result<BpeModel> {
    if freqs.is_empty() {
        return Err(Error::InvalidData("cannot learn BPE from an empty corpus".into()));
    }
    if marker.is_empty() || marker.contains(char::is_whitespace) {
        return Err(Error::InvalidData(format!("bad continuation marker '{marker}'")));
    }
    let mut words: Vec<(Vec<String>, u64)> = freqs
        .iter()
        .filter(|(w, _)| !w.is_empty())
        .map(|(w, &f)| (word_symbols(w), f))
        .collect();
    let mut merges = Vec::with_capacity(n_merges);
    for _ in 0..n_merges {
        let mut counts: BTreeMap<(&str, &str), u64> = BTreeMap::new();
        for (syms, f) in &words {
            for pair in syms.windows(2) {
                *counts.entry((pair[0].as_str(), pair[1].as_str())).or_insert(0) += f;
            }
        }
        // max count; ties keep the lexicographically smallest pair, which is
        // the earliest BTreeMap entry with that count
        let best = counts.iter().fold(None, |acc: Option<(&(&str, &str), u64)>, (p, &c)| {
            match acc {
                Some((_, bc)) if bc >= c => acc,
                _ => Some((p, c)),
            }
        });
        let Some((&(left, right), _)) = best else { break };
        let (left, right) = (left.to_string(), right.to_string());
        for (syms, _) in &mut words {
            merge_pair(syms, &left, &right);
        }
        merges.push((left, right));
    }
    Ok(BpeModel { marker: marker.to_string(), merges })
}

/// Replace non-overlapping occurrences of the pair, left to right.
fn merge_pair(syms: &mut Vec<String>, left: &str, right: &str) {
    let mut i = 0;
    while i + 1 < syms.len() {
        if syms[i] == left && syms[i + 1] == right {
            let joined = format!("{}{}", syms[i], syms[i + 1]);
            syms[i] = joined;
            syms.remove(i + 1);
        }
        i += 1;
    }
}

/// Segment one word. Every word is representable — characters that never
/// merged simply stay single — so unknown tokens can only arise later, at
/// vocabulary lookup, for characters absent from training data.
pub fn bpe_encode(word: &str, model: &BpeModel) -> Vec<String> {
    if word.is_empty() {
        return Vec::new();
    }
    let mut syms = word_symbols(word);
    for (left, right) in &model.merges {
        if syms.len() < 2 {
            break;
        }
        merge_pair(&mut syms, left, right);
    }
    let n = syms.len();
    syms.into_iter()
        .enumerate()
        .map(|(i, s)| {
            if i + 1 == n {
                s.strip_suffix(EOW).unwrap_or(&s).to_string()
            } else {
                format!("{}{}", s, model.marker)
            }
        })
        .collect()
}

/// Segment a whole pre-tokenized line.
pub fn bpe_encode_line(line: &str, model: &BpeModel) -> Vec<String> {
    line.split_whitespace().flat_map(|w| bpe_encode(w, model)).collect()
}

/// Subword occurrence counts over a segmented corpus — the input for
/// vocabulary construction.
pub fn subword_frequencies<'a>(
    lines: impl IntoIterator<Item = &'a str>,
    model: &BpeModel,
) -> BTreeMap<String, u64> {
    let mut freqs = BTreeMap::new();
    for line in lines {
        for sub in bpe_encode_line(line, model) {
            *freqs.entry(sub).or_insert(0) += 1;
        }
    }
    freqs
}

/// Undo segmentation: a token ending in the marker glues onto its successor.
pub fn join_subwords(tokens: &[String], marker: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    for tok in tokens {
        match tok.strip_suffix(marker) {
            Some(stem) => current.push_str(stem),
            None => {
                current.push_str(tok);
                words.push(std::mem::take(&mut current));
            }
        }
    }
    if !current.is_empty() {
        words.push(current); // dangling marker at end of line
    }
    words
}

impl BpeModel {
    /// File format: a header line `<marker> <merge count>`, then one merge
    /// pair per line, space-separated, in learned order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "{} {}", self.marker, self.merges.len()).expect("vec write");
        for (l, r) in &self.merges {
            writeln!(out, "{l} {r}").expect("vec write");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<BpeModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidData(format!("{}: empty BPE file", path.display())))?;
        let mut parts = header.split_whitespace();
        let (marker, count) = match (parts.next(), parts.next(), parts.next()) {
            (Some(m), Some(c), None) => (
                m.to_string(),
                c.parse::<usize>().map_err(|_| {
                    Error::InvalidData(format!("{}: bad merge count '{c}'", path.display()))
                })?,
            ),
            _ => {
                return Err(Error::InvalidData(format!(
                    "{}: malformed BPE header '{header}'",
                    path.display()
                )))
            }
        };
        let mut merges = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) => merges.push((l.to_string(), r.to_string())),
                _ => {
                    return Err(Error::InvalidData(format!(
                        "{}: malformed merge on line {}",
                        path.display(),
                        i + 2
                    )))
                }
            }
        }
        if merges.len() != count {
            return Err(Error::InvalidData(format!(
                "{}: header says {} merges, file has {}",
                path.display(),
                count,
                merges.len()
            )));
        }
        Ok(BpeModel { marker, merges })
    }
}
