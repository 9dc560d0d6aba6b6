//! Checkpoint files: magic, format version, a structured-text header
//! (model config, sharing plan, vocabulary hash, counters), then one
//! checksummed record per named tensor — parameter cells first, optimizer
//! moments after. Loading is byte-exact: save∘load∘save is the identity on
//! files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::sharing::{plan_from_text, plan_to_text, ParameterTable, SharingPlan};
use crate::tensor::{Scalar, Tensor};
use crate::training::adam::AdamState;

const MAGIC: &[u8; 8] = b"PNMTCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct HeaderDoc {
    step: u64,
    adam_step: Option<u64>,
    best_metric: Option<f64>,
    vocab_hash: String,
    plan: String,
    model: ModelConfig,
}

#[derive(Debug, Clone)]
pub struct Checkpoint<T: Scalar> {
    pub config: ModelConfig,
    pub plan: SharingPlan,
    pub vocab_hash: String,
    pub step: u64,
    pub best_metric: Option<f64>,
    pub cells: Vec<(String, Tensor<T>)>,
    /// (optimizer step, first moments, second moments), cell order.
    pub adam: Option<(u64, Vec<Tensor<T>>, Vec<Tensor<T>>)>,
}

/// Stable fingerprint of a vocabulary (order-sensitive, as ids must match).
pub fn vocab_fingerprint(vocab: &Vocabulary) -> String {
    let mut h = Sha256::new();
    for i in 0..vocab.len() {
        h.update(vocab.token(i).as_bytes());
        h.update(b"\n");
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn record_checksum<T: Scalar>(name: &str, t: &Tensor<T>) -> [u8; 8] {
    let mut h = Sha256::new();
    h.update(name.as_bytes());
    h.update([T::DTYPE, t.rank() as u8]);
    for &e in t.shape() {
        h.update((e as u64).to_le_bytes());
    }
    let mut payload = Vec::with_capacity(t.len() * T::BYTE_WIDTH);
    for &v in t.data() {
        v.write_le(&mut payload);
    }
    h.update(&payload);
    let digest = h.finalize();
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    out
}

fn write_record<T: Scalar>(out: &mut Vec<u8>, name: &str, t: &Tensor<T>) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(T::DTYPE);
    out.push(t.rank() as u8);
    for &e in t.shape() {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(out);
    }
    out.extend_from_slice(&record_checksum(name, t));
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "{}: truncated at byte {}",
                self.path.display(),
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

fn read_record<T: Scalar>(r: &mut Reader) -> Result<(String, Tensor<T>)> {
    let name_len = r.u32()? as usize;
    let name = String::from_utf8(r.take(name_len)?.to_vec())
        .map_err(|_| Error::Checkpoint(format!("{}: record name not UTF-8", r.path.display())))?;
    let dtype = r.u8()?;
    if dtype != T::DTYPE {
        return Err(Error::Checkpoint(format!(
            "{}: record '{}' has dtype code {}, expected {}",
            r.path.display(),
            name,
            dtype,
            T::DTYPE
        )));
    }
    let rank = r.u8()? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.u64()? as usize);
    }
    let elems: usize = shape.iter().product();
    let payload = r.take(elems * T::BYTE_WIDTH)?;
    let data: Vec<T> =
        payload.chunks_exact(T::BYTE_WIDTH).map(|c| T::read_le(c)).collect();
    let tensor = Tensor::new(shape, data).expect("shape/data agree by construction");
    let stored: [u8; 8] = r.take(8)?.try_into().expect("8 bytes");
    if stored != record_checksum(&name, &tensor) {
        return Err(Error::Checkpoint(format!(
            "{}: checksum mismatch in record '{}'",
            r.path.display(),
            name
        )));
    }
    Ok((name, tensor))
}

pub fn save_checkpoint<T: Scalar>(
    table: &ParameterTable<T>,
    adam: Option<&AdamState<T>>,
    vocab_hash: &str,
    step: u64,
    best_metric: Option<f64>,
    path: &Path,
) -> Result<()> {
    let header = HeaderDoc {
        step,
        adam_step: adam.map(|a| a.step_count()),
        best_metric,
        vocab_hash: vocab_hash.to_string(),
        plan: plan_to_text(table.plan()),
        model: table.config().clone(),
    };
    let header_text = toml::to_string(&header)
        .map_err(|e| Error::Checkpoint(format!("cannot serialize header: {e}")))?;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_text.len() as u32).to_le_bytes());
    out.extend_from_slice(header_text.as_bytes());

    let adam_records = adam.map(|a| a.moments()).map(|(m, v)| (m, v));
    let num_records =
        table.cells().len() + adam_records.map_or(0, |(m, v)| m.len() + v.len());
    out.extend_from_slice(&(num_records as u32).to_le_bytes());
    for cell in table.cells() {
        write_record(&mut out, &cell.name, &cell.value);
    }
    if let Some((m, v)) = adam_records {
        for (moment, cell) in m.iter().zip(table.cells()) {
            write_record(&mut out, &format!("adam.m.{}", cell.name), moment);
        }
        for (moment, cell) in v.iter().zip(table.cells()) {
            write_record(&mut out, &format!("adam.v.{}", cell.name), moment);
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { buf: &buf, pos: 0, path };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint(format!("{}: not a checkpoint file", path.display())));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: format version {} unsupported (this build reads {})",
            path.display(),
            version,
            VERSION
        )));
    }
    let header_len = r.u32()? as usize;
    let header_text = String::from_utf8(r.take(header_len)?.to_vec())
        .map_err(|_| Error::Checkpoint(format!("{}: header not UTF-8", path.display())))?;
    let header: HeaderDoc = toml::from_str(&header_text)
        .map_err(|e| Error::Checkpoint(format!("{}: bad header: {e}", path.display())))?;
    let plan = plan_from_text(&header.plan)?;

    let num_records = r.u32()? as usize;
    let mut cells = Vec::new();
    let mut adam_m = Vec::new();
    let mut adam_v = Vec::new();
    for _ in 0..num_records {
        let (name, tensor) = read_record::<T>(&mut r)?;
        if let Some(rest) = name.strip_prefix("adam.m.") {
            adam_m.push((rest.to_string(), tensor));
        } else if let Some(rest) = name.strip_prefix("adam.v.") {
            adam_v.push((rest.to_string(), tensor));
        } else {
            cells.push((name, tensor));
        }
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint(format!(
            "{}: {} trailing bytes after last record",
            path.display(),
            buf.len() - r.pos
        )));
    }
    let adam = match header.adam_step {
        None => None,
        Some(step) => {
            if adam_m.len() != cells.len() || adam_v.len() != cells.len() {
                return Err(Error::Checkpoint(format!(
                    "{}: optimizer records incomplete ({} cells, {} m, {} v)",
                    path.display(),
                    cells.len(),
                    adam_m.len(),
                    adam_v.len()
                )));
            }
            for ((mn, _), (cn, _)) in adam_m.iter().zip(&cells) {
                if mn != cn {
                    return Err(Error::Checkpoint(format!(
                        "{}: optimizer record order diverges at '{}'",
                        path.display(),
                        mn
                    )));
                }
            }
            Some((
                step,
                adam_m.into_iter().map(|(_, t)| t).collect(),
                adam_v.into_iter().map(|(_, t)| t).collect(),
            ))
        }
    };
    Ok(Checkpoint {
        config: header.model,
        plan,
        vocab_hash: header.vocab_hash,
        step: header.step,
        best_metric: header.best_metric,
        cells,
        adam,
    })
}

impl<T: Scalar> Checkpoint<T> {
    /// Guard against resuming into a different setup.
    pub fn verify_compatible(
        &self,
        config: &ModelConfig,
        plan: &SharingPlan,
        vocab_hash: &str,
    ) -> Result<()> {
        if &self.config != config {
            return Err(Error::Checkpoint("model configuration mismatch".into()));
        }
        if plan_to_text(&self.plan) != plan_to_text(plan) {
            return Err(Error::Checkpoint("sharing plan mismatch".into()));
        }
        if self.vocab_hash != vocab_hash {
            return Err(Error::Checkpoint("vocabulary hash mismatch".into()));
        }
        Ok(())
    }

    /// Copy saved cell tensors into a freshly resolved table. Names and
    /// shapes must match the table exactly.
    pub fn restore_table(&self, table: &mut ParameterTable<T>) -> Result<()> {
        if self.cells.len() != table.cells().len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} cells, table has {}",
                self.cells.len(),
                table.cells().len()
            )));
        }
        for (i, (name, tensor)) in self.cells.iter().enumerate() {
            if table.cells()[i].name != *name {
                return Err(Error::Checkpoint(format!(
                    "cell {} is '{}' in the checkpoint but '{}' in the table",
                    i, name, table.cells()[i].name
                )));
            }
            if table.cells()[i].value.shape() != tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "cell '{}' shape {:?} does not match table shape {:?}",
                    name,
                    tensor.shape(),
                    table.cells()[i].value.shape()
                )));
            }
            *table.cell_value_mut(i) = tensor.clone();
        }
        Ok(())
    }

    pub fn restore_adam(&self, adam: &mut AdamState<T>) -> Result<()> {
        match &self.adam {
            None => Err(Error::Checkpoint("checkpoint carries no optimizer state".into())),
            Some((step, m, v)) => adam.restore(*step, m.clone(), v.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sharing::Strategy;
    use crate::training::init_parameters;

    fn setup() -> (ParameterTable<f32>, AdamState<f32>) {
        let config = ModelConfig {
            num_layers: 1,
            d_m: 8,
            d_h: 16,
            heads: 2,
            vocab_size: 19,
            ..ModelConfig::default()
        };
        let plan = SharingPlan::from_strategy(
            Strategy::KqBoth,
            &["de".to_string(), "nl".to_string()],
        )
        .unwrap();
        let mut table = ParameterTable::resolve(&config, &plan).unwrap();
        init_parameters(&mut table, 11);
        let adam = AdamState::new(&table, 0.9, 0.997, 1e-9);
        (table, adam)
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        let (table, adam) = setup();
        save_checkpoint(&table, Some(&adam), "hash123", 42, Some(17.5), &p1).unwrap();
        let ckpt = load_checkpoint::<f32>(&p1).unwrap();
        assert_eq!(ckpt.step, 42);
        assert_eq!(ckpt.best_metric, Some(17.5));
        assert_eq!(ckpt.vocab_hash, "hash123");

        // loading into a fresh table reproduces it, and re-saving from the
        // restored state reproduces the bytes
        let mut table2 = ParameterTable::<f32>::resolve(&ckpt.config, &ckpt.plan).unwrap();
        let mut adam2 = AdamState::new(&table2, 0.9, 0.997, 1e-9);
        ckpt.restore_table(&mut table2).unwrap();
        ckpt.restore_adam(&mut adam2).unwrap();
        save_checkpoint(&table2, Some(&adam2), &ckpt.vocab_hash, ckpt.step, ckpt.best_metric, &p2)
            .unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn restored_cells_match_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ckpt");
        let (table, _) = setup();
        save_checkpoint(&table, None, "h", 7, None, &p).unwrap();
        let ckpt = load_checkpoint::<f32>(&p).unwrap();
        let mut table2 = ParameterTable::<f32>::resolve(&ckpt.config, &ckpt.plan).unwrap();
        ckpt.restore_table(&mut table2).unwrap();
        for (a, b) in table.cells().iter().zip(table2.cells()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value.data(), b.value.data());
        }
    }

    #[test]
    fn truncation_and_corruption_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.ckpt");
        let (table, adam) = setup();
        save_checkpoint(&table, Some(&adam), "h", 1, None, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();

        // truncate
        std::fs::write(&p, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&p), Err(Error::Checkpoint(_))));

        // flip a payload byte somewhere in the middle
        let mut corrupt = bytes.clone();
        let mid = corrupt.len() / 2;
        corrupt[mid] ^= 0x40;
        std::fs::write(&p, &corrupt).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&p), Err(Error::Checkpoint(_))));

        // bad magic
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&p), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn plan_and_vocab_mismatches_are_guarded() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.ckpt");
        let (table, _) = setup();
        save_checkpoint(&table, None, "hash-a", 1, None, &p).unwrap();
        let ckpt = load_checkpoint::<f32>(&p).unwrap();
        assert!(ckpt
            .verify_compatible(table.config(), table.plan(), "hash-a")
            .is_ok());
        assert!(ckpt
            .verify_compatible(table.config(), table.plan(), "hash-b")
            .is_err());
        let other = SharingPlan::from_strategy(
            Strategy::Full,
            &["de".to_string(), "nl".to_string()],
        )
        .unwrap();
        assert!(ckpt.verify_compatible(table.config(), &other, "hash-a").is_err());
        let mut other_cfg = table.config().clone();
        other_cfg.num_layers = 2;
        assert!(ckpt.verify_compatible(&other_cfg, table.plan(), "hash-a").is_err());

        // restoring into a table resolved under a different plan fails
        let mut wrong = ParameterTable::<f32>::resolve(table.config(), &other).unwrap();
        assert!(ckpt.restore_table(&mut wrong).is_err());
    }

    #[test]
    fn wrong_dtype_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.ckpt");
        let (table, _) = setup();
        save_checkpoint(&table, None, "h", 1, None, &p).unwrap();
        assert!(matches!(load_checkpoint::<f64>(&p), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn vocab_fingerprint_tracks_content_and_order() {
        use std::collections::BTreeMap;
        let mut f = BTreeMap::new();
        f.insert("aa".to_string(), 3u64);
        f.insert("bb".to_string(), 3u64);
        let t = vec!["de".to_string()];
        let v1 = Vocabulary::build(&f, &t).unwrap();
        let v2 = Vocabulary::build(&f, &t).unwrap();
        assert_eq!(vocab_fingerprint(&v1), vocab_fingerprint(&v2));
        f.insert("cc".to_string(), 1);
        let v3 = Vocabulary::build(&f, &t).unwrap();
        assert_ne!(vocab_fingerprint(&v1), vocab_fingerprint(&v3));
    }

    #[test]
    fn checkpoint_rng_and_trajectory_survive_roundtrip() {
        // training continuation equivalence: step a model, checkpoint, step
        // again; reload the checkpoint and re-run the second step — the
        // parameters must agree bit-exactly
        use crate::tensor::graph::Graph;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.ckpt");
        let (mut table, mut adam) = setup();

        let one_step = |table: &mut ParameterTable<f32>, adam: &mut AdamState<f32>, step: u64| {
            let mut g = Graph::<f32>::training(crate::rng::mix_seed(99, step));
            let idx = 0usize;
            let prm = g.param(idx, &table.cells()[idx].value);
            let loss = g.sum_all(prm);
            g.backward(loss).unwrap();
            table.accumulate_grads(g.param_grads());
            adam.step(table, 1e-3).unwrap();
        };

        one_step(&mut table, &mut adam, 1);
        save_checkpoint(&table, Some(&adam), "h", 1, None, &p).unwrap();
        one_step(&mut table, &mut adam, 2);
        let direct: Vec<f32> = table.cells()[0].value.data().to_vec();

        let ckpt = load_checkpoint::<f32>(&p).unwrap();
        let mut table2 = ParameterTable::<f32>::resolve(&ckpt.config, &ckpt.plan).unwrap();
        let mut adam2 = AdamState::new(&table2, 0.9, 0.997, 1e-9);
        ckpt.restore_table(&mut table2).unwrap();
        ckpt.restore_adam(&mut adam2).unwrap();
        one_step(&mut table2, &mut adam2, 2);
        assert_eq!(direct, table2.cells()[0].value.data());
    }
}
