//! Versioned single-file checkpoint: magic, version, a JSON metadata block,
//! then every tensor as little-endian `f64`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::latent::LatentSpec;
use super::model::{DiscriminatorQ, Generator};
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::nn::{Adam, Param, Parameterized};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"ICKP";
pub const FORMAT_VERSION: u32 = 1;

/// Full training state. `disc_q` holds D and Q over one trunk, so the trunk
/// tensors of [`GanCheckpoint::d_params`] and [`GanCheckpoint::q_params`]
/// are the same storage.
#[derive(Debug, Clone)]
pub struct GanCheckpoint<T> {
    pub config: TrainConfig,
    pub latent: LatentSpec,
    pub epoch: usize,
    pub generator: Generator<T>,
    pub disc_q: DiscriminatorQ<T>,
    pub opt_d: Adam<T>,
    pub opt_gq: Adam<T>,
    pub rng: ChaCha8Rng,
}

#[derive(Debug, Serialize, Deserialize)]
struct RngState {
    seed: String,
    stream: u64,
    /// `u128` does not round-trip through JSON numbers.
    word_pos: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    dtype: String,
    config: TrainConfig,
    latent: LatentSpec,
    epoch: usize,
    rng_state: RngState,
    opt_d_step: u64,
    opt_gq_step: u64,
    tensors: Vec<TensorEntry>,
}

fn ckpt_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

fn moment_tensors<'a, T>(prefix: &str, opt: &'a Adam<T>) -> Vec<(String, Vec<usize>, &'a [T])> {
    let mut v = Vec::new();
    for (i, m) in opt.first.iter().enumerate() {
        v.push((format!("{prefix}.m{i}"), vec![m.len()], m.as_slice()));
    }
    for (i, s) in opt.second.iter().enumerate() {
        v.push((format!("{prefix}.v{i}"), vec![s.len()], s.as_slice()));
    }
    v
}

impl<T: Scalar> GanCheckpoint<T> {
    pub fn g_params(&self) -> Vec<&Param<T>> {
        self.generator.params()
    }

    pub fn d_params(&self) -> Vec<&Param<T>> {
        self.disc_q.d_params()
    }

    pub fn q_params(&self) -> Vec<&Param<T>> {
        self.disc_q.q_params()
    }

    pub fn all_finite(&self) -> bool {
        self.generator
            .params()
            .into_iter()
            .chain(self.generator.buffers())
            .chain(self.disc_q.params())
            .chain(self.disc_q.trunk.buffers())
            .all(|p| p.all_finite())
    }

    fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut v: Vec<(String, Vec<usize>, &[T])> = self
            .generator
            .params()
            .into_iter()
            .chain(self.generator.buffers())
            .chain(self.disc_q.params())
            .chain(self.disc_q.trunk.buffers())
            .map(|p| (p.name.clone(), p.shape.clone(), p.value.as_slice()))
            .collect();
        v.extend(moment_tensors("opt_d", &self.opt_d));
        v.extend(moment_tensors("opt_gq", &self.opt_gq));
        v
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tensors = self.named_tensors();
        let mut index = Vec::with_capacity(tensors.len());
        let mut offset = 0usize;
        for (name, shape, data) in &tensors {
            index.push(TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
                offset,
            });
            offset += data.len();
        }
        let meta = Meta {
            format_version: FORMAT_VERSION,
            dtype: T::DTYPE.to_string(),
            config: self.config,
            latent: self.latent,
            epoch: self.epoch,
            rng_state: RngState {
                seed: hex::encode(self.rng.get_seed()),
                stream: self.rng.get_stream(),
                word_pos: self.rng.get_word_pos().to_string(),
            },
            opt_d_step: self.opt_d.step,
            opt_gq_step: self.opt_gq.step,
            tensors: index,
        };
        let meta = serde_json::to_vec(&meta)?;
        let mut buf = Vec::with_capacity(16 + meta.len() + offset * 8);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        buf.extend_from_slice(&meta);
        for (_, _, data) in &tensors {
            for v in data.iter() {
                buf.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
            }
        }
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(ckpt_err(path, "not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(ckpt_err(path, format!("unsupported format version {version}")));
        }
        let meta_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let meta_end = 16usize
            .checked_add(meta_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| ckpt_err(path, "truncated metadata"))?;
        let meta: Meta = serde_json::from_slice(&bytes[16..meta_end])?;
        let body = &bytes[meta_end..];
        let n_values = body.len() / 8;

        let mut store: BTreeMap<&str, (&[usize], usize)> = BTreeMap::new();
        for e in &meta.tensors {
            store.insert(e.name.as_str(), (e.shape.as_slice(), e.offset));
        }
        let read = |name: &str, shape: &[usize]| -> Result<Vec<T>> {
            let (s, off) = store
                .get(name)
                .ok_or_else(|| ckpt_err(path, format!("missing tensor `{name}`")))?;
            if *s != shape {
                return Err(ckpt_err(
                    path,
                    format!("tensor `{name}` has shape {s:?}, expected {shape:?}"),
                ));
            }
            let len: usize = shape.iter().product();
            if off + len > n_values {
                return Err(ckpt_err(path, format!("tensor `{name}` is truncated")));
            }
            Ok(body[off * 8..(off + len) * 8]
                .chunks_exact(8)
                .map(|c| T::from_f64_lossy(f64::from_le_bytes(c.try_into().unwrap())))
                .collect())
        };

        let mut ck = Self::init(meta.config, meta.latent)?;
        for p in ck.generator.params_mut() {
            p.value = read(&p.name, &p.shape)?;
        }
        for p in ck.generator.buffers_mut() {
            p.value = read(&p.name, &p.shape)?;
        }
        for p in ck.disc_q.params_mut() {
            p.value = read(&p.name, &p.shape)?;
        }
        for p in ck.disc_q.trunk.buffers_mut() {
            p.value = read(&p.name, &p.shape)?;
        }
        let d_lens: Vec<usize> = ck.disc_q.d_params().iter().map(|p| p.len()).collect();
        let gq_lens: Vec<usize> = ck
            .generator
            .params()
            .into_iter()
            .chain(ck.disc_q.q_head.params())
            .map(|p| p.len())
            .collect();
        for (prefix, opt, step, lens) in [
            ("opt_d", &mut ck.opt_d, meta.opt_d_step, d_lens),
            ("opt_gq", &mut ck.opt_gq, meta.opt_gq_step, gq_lens),
        ] {
            opt.step = step;
            if step > 0 {
                opt.first = Vec::with_capacity(lens.len());
                opt.second = Vec::with_capacity(lens.len());
                for (i, &l) in lens.iter().enumerate() {
                    opt.first.push(read(&format!("{prefix}.m{i}"), &[l])?);
                    opt.second.push(read(&format!("{prefix}.v{i}"), &[l])?);
                }
            }
        }
        ck.epoch = meta.epoch;
        let seed: [u8; 32] = hex::decode(&meta.rng_state.seed)
            .ok()
            .and_then(|v| v.try_into().ok())
            .ok_or_else(|| ckpt_err(path, "bad rng seed"))?;
        let word_pos: u128 = meta
            .rng_state
            .word_pos
            .parse()
            .map_err(|_| ckpt_err(path, "bad rng position"))?;
        ck.rng = ChaCha8Rng::from_seed(seed);
        ck.rng.set_stream(meta.rng_state.stream);
        ck.rng.set_word_pos(word_pos);
        if !ck.all_finite() {
            return Err(ckpt_err(path, "non-finite parameter values"));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth::{generate_synthetic, Factor, SynthSpec};
    use rand::RngCore;

    fn cfg() -> TrainConfig {
        TrainConfig {
            batch: 4,
            epochs: 1,
            width: 4,
            depth: 2,
            image_size: (8, 16),
            seed: 9,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn round_trip_restores_state_exactly() {
        let mut s = SynthSpec::new(8, &[(Factor::ColorSystem, 2)], 3);
        s.image_size = (8, 16);
        let corpus = generate_synthetic::<f64>(&s).unwrap();
        let spec = LatentSpec::new(3, 1, 2).unwrap();
        let mut ck = GanCheckpoint::<f64>::init(cfg(), spec).unwrap();
        ck.train_epoch(&corpus).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ickp");
        ck.save(&path).unwrap();
        let back = GanCheckpoint::<f64>::load(&path).unwrap();
        // Gradients are scratch space and are not persisted.
        ck.generator.zero_grad();
        ck.disc_q.zero_grad();
        assert_eq!(back.generator, ck.generator);
        assert_eq!(back.disc_q, ck.disc_q);
        assert_eq!(back.opt_d, ck.opt_d);
        assert_eq!(back.opt_gq, ck.opt_gq);
        assert_eq!(back.epoch, 1);
        assert_eq!(back.rng.clone().next_u64(), ck.rng.clone().next_u64());
        // Training resumes identically.
        let a = ck.train_epoch(&corpus).unwrap();
        let mut back2 = GanCheckpoint::<f64>::load(&path).unwrap();
        let b = back2.train_epoch(&corpus).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fresh_checkpoint_round_trips_and_rejects_garbage() {
        let spec = LatentSpec::new(3, 1, 2).unwrap();
        let ck = GanCheckpoint::<f32>::init(cfg(), spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.ickp");
        ck.save(&path).unwrap();
        let back = GanCheckpoint::<f32>::load(&path).unwrap();
        assert_eq!(back.disc_q, ck.disc_q);
        assert_eq!(back.opt_d.step, 0);
        let bad = dir.path().join("c.ickp");
        fs::write(&bad, b"nope").unwrap();
        assert!(matches!(
            GanCheckpoint::<f32>::load(&bad),
            Err(Error::Checkpoint { .. })
        ));
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        fs::write(&bad, &bytes).unwrap();
        assert!(GanCheckpoint::<f32>::load(&bad).is_err());
    }
}
