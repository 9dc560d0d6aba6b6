//! Corpus ingestion: BPE subwords, the joint vocabulary, example
//! preparation (language token, bos/eos, length filter) and batching.

pub mod batch;
pub mod bpe;
pub mod vocab;

pub use batch::{make_batches, Batch, BatchMode};
pub use bpe::{
    bpe_encode, bpe_encode_line, bpe_learn, join_subwords, subword_frequencies, word_frequencies,
    BpeModel, DEFAULT_MARKER,
};
pub use vocab::{Vocabulary, BOS, EOS, PAD, UNK};

use std::path::Path;

use crate::error::{Error, Result};

/// Sentences longer than this many subwords (per side, before specials) are
/// dropped.
pub const MAX_SUBWORDS: usize = 70;

/// One training sentence pair, numeric and ready for the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    /// `<2xx>` language token followed by source subword ids.
    pub src: Vec<usize>,
    /// bos followed by target subword ids (decoder input).
    pub tgt_in: Vec<usize>,
    /// Target subword ids followed by eos (decoder gold).
    pub tgt_out: Vec<usize>,
    /// Index of the target language in the vocabulary's target list.
    pub lang: usize,
}

/// Numericize one subword-encoded sentence pair. Returns `Ok(None)` when
/// the pair is filtered out (either side empty or longer than
/// [`MAX_SUBWORDS`]); unknown subwords map to unk, but an unknown target
/// *language* is an error.
pub fn prepare_example(
    src_subwords: &[String],
    tgt_subwords: &[String],
    lang: &str,
    vocab: &Vocabulary,
) -> Result<Option<Example>> {
    let lang_tok = vocab.lang_token_id(lang)?;
    let lang_idx = vocab.lang_index(lang)?;
    if src_subwords.is_empty() || tgt_subwords.is_empty() {
        return Ok(None);
    }
    if src_subwords.len() > MAX_SUBWORDS || tgt_subwords.len() > MAX_SUBWORDS {
        return Ok(None);
    }
    let mut src = Vec::with_capacity(src_subwords.len() + 1);
    src.push(lang_tok);
    src.extend(src_subwords.iter().map(|t| vocab.id_or_unk(t)));
    let tgt: Vec<usize> = tgt_subwords.iter().map(|t| vocab.id_or_unk(t)).collect();
    let mut tgt_in = Vec::with_capacity(tgt.len() + 1);
    tgt_in.push(BOS);
    tgt_in.extend_from_slice(&tgt);
    let mut tgt_out = tgt;
    tgt_out.push(EOS);
    Ok(Some(Example { src, tgt_in, tgt_out, lang: lang_idx }))
}

/// Read a UTF-8 text file into lines (one sentence per line).
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(|l| l.to_string()).collect())
}

/// Load two line-aligned files into sentence pairs.
pub fn load_parallel_corpus(src_path: &Path, tgt_path: &Path) -> Result<Vec<(String, String)>> {
    let src = read_lines(src_path)?;
    let tgt = read_lines(tgt_path)?;
    if src.len() != tgt.len() {
        return Err(Error::InvalidData(format!(
            "parallel files disagree: {} has {} lines, {} has {}",
            src_path.display(),
            src.len(),
            tgt_path.display(),
            tgt.len()
        )));
    }
    Ok(src.into_iter().zip(tgt).collect())
}

/// Segment and numericize a whole parallel corpus for one target language,
/// silently dropping filtered pairs.
pub fn prepare_corpus(
    pairs: &[(String, String)],
    lang: &str,
    bpe: &BpeModel,
    vocab: &Vocabulary,
) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(pairs.len());
    for (src, tgt) in pairs {
        let s = bpe_encode_line(src, bpe);
        let t = bpe_encode_line(tgt, bpe);
        if let Some(ex) = prepare_example(&s, &t, lang, vocab)? {
            out.push(ex);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn tiny_vocab() -> Vocabulary {
        let mut f = BTreeMap::new();
        for (w, c) in [("hello", 5u64), ("wereld", 3), ("welt", 3), ("x", 1)] {
            f.insert(w.to_string(), c);
        }
        Vocabulary::build(&f, &["de".to_string(), "nl".to_string()]).unwrap()
    }

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn source_starts_with_the_language_token() {
        let v = tiny_vocab();
        let ex = prepare_example(&toks(&["hello"]), &toks(&["welt"]), "de", &v)
            .unwrap()
            .unwrap();
        assert_eq!(ex.src[0], v.lang_token_id("de").unwrap());
        assert_eq!(ex.src.len(), 2);
        assert_eq!(ex.lang, 0);
        let ex = prepare_example(&toks(&["hello"]), &toks(&["wereld"]), "nl", &v)
            .unwrap()
            .unwrap();
        assert_eq!(ex.src[0], v.lang_token_id("nl").unwrap());
        assert_eq!(ex.lang, 1);
    }

    #[test]
    fn bos_eos_bracket_the_target() {
        let v = tiny_vocab();
        let ex = prepare_example(&toks(&["hello"]), &toks(&["welt", "x"]), "de", &v)
            .unwrap()
            .unwrap();
        assert_eq!(ex.tgt_in[0], BOS);
        assert_eq!(*ex.tgt_out.last().unwrap(), EOS);
        assert_eq!(ex.tgt_in.len(), 3);
        assert_eq!(&ex.tgt_in[1..], &ex.tgt_out[..2]);
    }

    #[test]
    fn long_sides_are_filtered() {
        let v = tiny_vocab();
        let long = vec!["x".to_string(); MAX_SUBWORDS + 1];
        let ok = vec!["x".to_string(); MAX_SUBWORDS];
        assert!(prepare_example(&long, &ok, "de", &v).unwrap().is_none());
        assert!(prepare_example(&ok, &long, "de", &v).unwrap().is_none());
        assert!(prepare_example(&ok, &ok, "de", &v).unwrap().is_some());
    }

    #[test]
    fn empty_sides_are_filtered() {
        let v = tiny_vocab();
        assert!(prepare_example(&[], &toks(&["x"]), "de", &v).unwrap().is_none());
        assert!(prepare_example(&toks(&["x"]), &[], "de", &v).unwrap().is_none());
    }

    #[test]
    fn unknown_language_is_an_error() {
        let v = tiny_vocab();
        let r = prepare_example(&toks(&["x"]), &toks(&["x"]), "fr", &v);
        assert!(matches!(r, Err(Error::UnknownTarget(_))));
    }

    #[test]
    fn unknown_subwords_become_unk() {
        let v = tiny_vocab();
        let ex = prepare_example(&toks(&["zzz"]), &toks(&["x"]), "de", &v)
            .unwrap()
            .unwrap();
        assert_eq!(ex.src[1], UNK);
    }

    #[test]
    fn misaligned_corpus_files_error() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("train.en");
        let b = dir.path().join("train.de");
        std::fs::write(&a, "one\ntwo\n").unwrap();
        std::fs::write(&b, "eins\n").unwrap();
        assert!(load_parallel_corpus(&a, &b).is_err());
        std::fs::write(&b, "eins\nzwei\n").unwrap();
        let pairs = load_parallel_corpus(&a, &b).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[1], ("two".to_string(), "zwei".to_string()));
    }

    #[test]
    fn prepared_corpus_respects_the_length_cap() {
        let mut f = BTreeMap::new();
        f.insert("a".to_string(), 10u64);
        let v = Vocabulary::build(&f, &["de".to_string()]).unwrap();
        let model = bpe_learn(&f, 0, DEFAULT_MARKER).unwrap();
        let long_line = vec!["a"; 80].join(" ");
        let pairs = vec![
            ("a a".to_string(), "a".to_string()),
            (long_line.clone(), "a".to_string()),
            ("a".to_string(), long_line),
        ];
        let examples = prepare_corpus(&pairs, "de", &model, &v).unwrap();
        assert_eq!(examples.len(), 1);
        assert!(examples
            .iter()
            .all(|e| e.src.len() <= MAX_SUBWORDS + 1 && e.tgt_in.len() <= MAX_SUBWORDS + 1));
    }
}
