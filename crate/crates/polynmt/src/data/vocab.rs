//! Joint vocabulary over the combined corpus of all language pairs:
//! reserved control tokens, one `<2xx>` token per target language, then the
//! subword inventory ordered by frequency (ties lexicographic).

use std::collections::{BTreeMap, HashMap};
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    targets: Vec<String>,
}

fn lang_token(lang: &str) -> String {
    format!("<2{lang}>")
}

impl Vocabulary {
    /// Reserved tokens, then `<2xx>` per target (in the given order), then
    /// subwords by descending frequency, ties by token text.
    pub fn build(subword_freqs: &BTreeMap<String, u64>, targets: &[String]) -> Result<Vocabulary> {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for t in targets {
            if !crate::sharing::is_valid_target_name(t) {
                return Err(Error::InvalidData(format!("bad target language name '{t}'")));
            }
            tokens.push(lang_token(t));
        }
        let mut subwords: Vec<(&String, &u64)> = subword_freqs.iter().collect();
        subwords.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        for (w, _) in subwords {
            tokens.push(w.clone());
        }
        Self::from_tokens(tokens, targets.to_vec())
    }

    fn from_tokens(tokens: Vec<String>, targets: Vec<String>) -> Result<Vocabulary> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidData(format!("duplicate vocabulary token '{t}'")));
            }
        }
        Ok(Vocabulary { tokens, index, targets })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn lang_token_id(&self, lang: &str) -> Result<usize> {
        self.id(&lang_token(lang)).ok_or_else(|| Error::UnknownTarget(lang.to_string()))
    }

    pub fn lang_index(&self, lang: &str) -> Result<usize> {
        self.targets
            .iter()
            .position(|t| t == lang)
            .ok_or_else(|| Error::UnknownTarget(lang.to_string()))
    }

    /// One token per line; the line number is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for t in &self.tokens {
            writeln!(out, "{t}").expect("vec write");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = text.lines().map(|l| l.to_string()).collect();
        if tokens.len() < RESERVED.len() {
            return Err(Error::InvalidData(format!(
                "{}: vocabulary too small for reserved tokens",
                path.display()
            )));
        }
        for (i, want) in RESERVED.iter().enumerate() {
            if tokens[i] != *want {
                return Err(Error::InvalidData(format!(
                    "{}: reserved token {} is '{}', expected '{}'",
                    path.display(),
                    i,
                    tokens[i],
                    want
                )));
            }
        }
        // target tokens sit directly after the reserved block
        let mut targets = Vec::new();
        for t in &tokens[RESERVED.len()..] {
            match t.strip_prefix("<2").and_then(|r| r.strip_suffix('>')) {
                Some(lang) => targets.push(lang.to_string()),
                None => break,
            }
        }
        Self::from_tokens(tokens, targets)
    }
}
