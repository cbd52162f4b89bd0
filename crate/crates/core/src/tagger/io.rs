//! Versioned binary model files.
//!
//! Layout (all integers and floats little-endian; strings are a u32 byte
//! length followed by UTF-8 bytes; see docs/model_format.md for the full
//! byte-level description):
//!
//! ```text
//! magic  b"MTAGMDL\0"
//! u32    format version (currently 1)
//! config mode u8, flags u8, eight u32 dims, base_rate f64, decay f64,
//!        grad_clip (u8 flag + f64), seed u64
//! tags   u32 count + strings, in index order
//! coarse u32 count + u32 code points, in index order
//! labels u8 flag + (u32 count + strings)
//! vocab  u32 count + word strings; u32 count + u32 char code points
//! params u32 tensor count + (name string, u8 rank, u64 dims…, f64 data…)
//! coarse-model  u8 flag + recursively embedded model
//! ```
//!
//! Round trips are value-exact: floats are stored bit-for-bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::lexicon::LabelInventory;
use crate::neural::{Affine, BiEncoderParams, Tensor};
use crate::tagger::{Mode, ModelConfig, TaggerModel, TaggerParams};
use crate::tagset::{CoarseInventory, TagInventory};

const MAGIC: &[u8; 8] = b"MTAGMDL\0";
const FORMAT_VERSION: u32 = 1;

const MAX_STR_LEN: u32 = 1 << 20;
const MAX_COUNT: u32 = 1 << 24;

impl TaggerModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut writer = BufWriter::new(file);
        self.save_to(&mut writer)
            .and_then(|_| {
                writer
                    .flush()
                    .map_err(|e| Error::io(path.display().to_string(), e))
            })
    }

    pub fn save_to(&self, w: &mut impl Write) -> Result<()> {
        w_bytes(w, MAGIC)?;
        w_u32(w, FORMAT_VERSION)?;
        write_config(w, &self.config)?;

        w_u32(w, self.tags.len() as u32)?;
        for tag in self.tags.iter() {
            w_str(w, tag.as_str())?;
        }
        w_u32(w, self.coarse.len() as u32)?;
        for c in self.coarse.iter() {
            w_u32(w, c as u32)?;
        }
        match &self.labels {
            Some(labels) => {
                w_u8(w, 1)?;
                w_u32(w, labels.len() as u32)?;
                for label in labels.labels() {
                    w_str(w, label)?;
                }
            }
            None => w_u8(w, 0)?,
        }

        w_u32(w, self.vocab.words().len() as u32)?;
        for word in self.vocab.words() {
            w_str(w, word)?;
        }
        w_u32(w, self.vocab.chars().len() as u32)?;
        for &c in self.vocab.chars() {
            w_u32(w, c as u32)?;
        }

        let mut tensors: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
        self.params.visit(&mut |name, t| {
            tensors.push((name, t.shape().to_vec(), t.as_slice().to_vec()));
        });
        w_u32(w, tensors.len() as u32)?;
        for (name, shape, data) in tensors {
            w_str(w, &name)?;
            w_u8(w, shape.len() as u8)?;
            for dim in shape {
                w_u64(w, dim as u64)?;
            }
            for v in data {
                w_f64(w, v)?;
            }
        }

        match &self.coarse_model {
            Some(sub) => {
                w_u8(w, 1)?;
                sub.save_to(w)?;
            }
            None => w_u8(w, 0)?,
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut reader = BufReader::new(file);
        Self::load_from(&mut reader)
    }

    pub fn load_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::ModelFormat(
                "bad magic bytes: not a model file".into(),
            ));
        }
        let version = r_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let config = read_config(r)?;

        let n_tags = r_count(r)?;
        let mut tag_strings = Vec::with_capacity(n_tags);
        for _ in 0..n_tags {
            tag_strings.push(r_str(r)?);
        }
        let tags = TagInventory::build(&tag_strings)?;
        if tags.len() != n_tags {
            return Err(Error::ModelFormat("duplicate tags in model file".into()));
        }

        let n_coarse = r_count(r)?;
        let mut coarse_chars = Vec::with_capacity(n_coarse);
        for _ in 0..n_coarse {
            coarse_chars.push(r_char(r)?);
        }
        let coarse = CoarseInventory::from_fine(&tags);
        let stored: Vec<char> = coarse_chars;
        let derived: Vec<char> = coarse.iter().collect();
        if stored != derived {
            return Err(Error::ModelFormat(
                "coarse inventory does not match the tag inventory".into(),
            ));
        }

        let labels = if r_u8(r)? == 1 {
            let n = r_count(r)?;
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                labels.push(r_str(r)?);
            }
            Some(LabelInventory::build(labels)?)
        } else {
            None
        };

        let n_words = r_count(r)?;
        let mut words = Vec::with_capacity(n_words);
        for _ in 0..n_words {
            words.push(r_str(r)?);
        }
        let n_chars = r_count(r)?;
        let mut chars = Vec::with_capacity(n_chars);
        for _ in 0..n_chars {
            chars.push(r_char(r)?);
        }
        let vocab = Vocabulary::from_parts(words, chars);

        let n_tensors = r_count(r)?;
        let mut stored: std::collections::BTreeMap<String, Tensor> =
            std::collections::BTreeMap::new();
        for _ in 0..n_tensors {
            let name = r_str(r)?;
            let rank = r_u8(r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r_u64(r)? as usize);
            }
            let len: usize = shape.iter().product();
            if len > (MAX_COUNT as usize) * 64 {
                return Err(Error::ModelFormat(format!(
                    "tensor `{name}` implausibly large"
                )));
            }
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                data.push(r_f64(r)?);
            }
            if stored.insert(name.clone(), Tensor::from_vec(&shape, data)?).is_some() {
                return Err(Error::ModelFormat(format!("duplicate tensor `{name}`")));
            }
        }

        let mut params = zeros_shaped(&config, vocab.n_words(), vocab.n_chars(), tags.len(), coarse.len());
        let mut fill_error: Option<Error> = None;
        params.visit_mut(&mut |name, t| {
            if fill_error.is_some() {
                return;
            }
            match stored.remove(&name) {
                Some(loaded) if loaded.shape() == t.shape() => *t = loaded,
                Some(loaded) => {
                    fill_error = Some(Error::ModelFormat(format!(
                        "tensor `{name}` has shape {:?}, expected {:?}",
                        loaded.shape(),
                        t.shape()
                    )))
                }
                None => fill_error = Some(Error::ModelFormat(format!("missing tensor `{name}`"))),
            }
        });
        if let Some(e) = fill_error {
            return Err(e);
        }
        if let Some((name, _)) = stored.into_iter().next() {
            return Err(Error::ModelFormat(format!("unexpected tensor `{name}`")));
        }

        let coarse_model = if r_u8(r)? == 1 {
            Some(Box::new(TaggerModel::load_from(r)?))
        } else {
            None
        };

        Ok(TaggerModel {
            config,
            vocab,
            tags,
            coarse,
            labels,
            params,
            coarse_model,
        })
    }
}

fn zeros_shaped(
    config: &ModelConfig,
    n_words: usize,
    n_chars: usize,
    n_tags: usize,
    n_coarse: usize,
) -> TaggerParams {
    TaggerParams {
        word_emb: Tensor::zeros(&[n_words, config.word_dim]),
        char_emb: Tensor::zeros(&[n_chars, config.char_dim]),
        char_encoder: BiEncoderParams::zeros(config.char_dim, config.char_hidden),
        sent_encoder: BiEncoderParams::zeros(config.input_width(), config.sent_hidden),
        hidden: Affine::zeros(2 * config.sent_hidden, config.ff_hidden),
        output: Affine::zeros(config.ff_hidden, n_tags),
        coarse_emb: config
            .embed_coarse
            .then(|| Tensor::zeros(&[n_coarse, config.coarse_dim])),
    }
}

fn write_config(w: &mut impl Write, c: &ModelConfig) -> Result<()> {
    let mode = match c.mode {
        Mode::Baseline => 0u8,
        Mode::WithLexicon => 1,
        Mode::WithLexiconAndCoarse => 2,
    };
    w_u8(w, mode)?;
    let mut flags = 0u8;
    if c.gold_coarse_hints {
        flags |= 1;
    }
    if c.embed_coarse {
        flags |= 2;
    }
    w_u8(w, flags)?;
    for dim in [
        c.word_dim,
        c.char_dim,
        c.char_hidden,
        c.sent_hidden,
        c.ff_hidden,
        c.lexicon_dim,
        c.coarse_dim,
        c.epochs,
    ] {
        w_u32(w, dim as u32)?;
    }
    w_f64(w, c.base_rate)?;
    w_f64(w, c.decay)?;
    match c.grad_clip {
        Some(limit) => {
            w_u8(w, 1)?;
            w_f64(w, limit)?;
        }
        None => w_u8(w, 0)?,
    }
    w_u64(w, c.seed)
}

fn read_config(r: &mut impl Read) -> Result<ModelConfig> {
    let mode = match r_u8(r)? {
        0 => Mode::Baseline,
        1 => Mode::WithLexicon,
        2 => Mode::WithLexiconAndCoarse,
        other => return Err(Error::ModelFormat(format!("unknown mode byte {other}"))),
    };
    let flags = r_u8(r)?;
    let mut dims = [0usize; 8];
    for d in dims.iter_mut() {
        *d = r_u32(r)? as usize;
    }
    let base_rate = r_f64(r)?;
    let decay = r_f64(r)?;
    let grad_clip = if r_u8(r)? == 1 { Some(r_f64(r)?) } else { None };
    let seed = r_u64(r)?;
    Ok(ModelConfig {
        mode,
        word_dim: dims[0],
        char_dim: dims[1],
        char_hidden: dims[2],
        sent_hidden: dims[3],
        ff_hidden: dims[4],
        lexicon_dim: dims[5],
        coarse_dim: dims[6],
        epochs: dims[7],
        base_rate,
        decay,
        seed,
        gold_coarse_hints: flags & 1 != 0,
        embed_coarse: flags & 2 != 0,
        grad_clip,
    })
}

fn w_bytes(w: &mut impl Write, bytes: &[u8]) -> Result<()> {
    w.write_all(bytes)
        .map_err(|e| Error::ModelFormat(format!("write failed: {e}")))
}

fn w_u8(w: &mut impl Write, v: u8) -> Result<()> {
    w_bytes(w, &[v])
}

fn w_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w_bytes(w, &v.to_le_bytes())
}

fn w_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w_bytes(w, &v.to_le_bytes())
}

fn w_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w_bytes(w, &v.to_le_bytes())
}

fn w_str(w: &mut impl Write, s: &str) -> Result<()> {
    w_u32(w, s.len() as u32)?;
    w_bytes(w, s.as_bytes())
}

fn r_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::ModelFormat(format!("truncated model file: {e}")))
}

fn r_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r_exact(r, &mut b)?;
    Ok(b[0])
}

fn r_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn r_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn r_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn r_count(r: &mut impl Read) -> Result<usize> {
    let n = r_u32(r)?;
    if n > MAX_COUNT {
        return Err(Error::ModelFormat(format!("implausible count {n}")));
    }
    Ok(n as usize)
}

fn r_char(r: &mut impl Read) -> Result<char> {
    let code = r_u32(r)?;
    char::from_u32(code)
        .ok_or_else(|| Error::ModelFormat(format!("invalid character code point {code}")))
}

fn r_str(r: &mut impl Read) -> Result<String> {
    let len = r_u32(r)?;
    if len > MAX_STR_LEN {
        return Err(Error::ModelFormat(format!("implausible string length {len}")));
    }
    let mut buf = vec![0u8; len as usize];
    r_exact(r, &mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::ModelFormat("invalid UTF-8 in string".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Sentence, TaggedCorpus, Token};
    use crate::tagset::MnemonicTag;

    fn sample_model(seed: u64) -> TaggerModel {
        let corpus = TaggedCorpus::from_sentences(
            vec![Sentence {
                tokens: vec![
                    Token {
                        form: "þetta".into(),
                        tag: MnemonicTag::parse("fa").unwrap(),
                    },
                    Token {
                        form: "orð".into(),
                        tag: MnemonicTag::parse("nh").unwrap(),
                    },
                ],
            }],
            1,
        )
        .unwrap();
        let vocab = Vocabulary::build(&corpus);
        let tags = TagInventory::build(["fa", "nh", "sf"]).unwrap();
        let labels = LabelInventory::build(["no", "kk", "et"]).unwrap();
        TaggerModel::new(
            ModelConfig {
                mode: Mode::WithLexicon,
                word_dim: 6,
                char_dim: 4,
                char_hidden: 3,
                sent_hidden: 5,
                ff_hidden: 4,
                seed,
                ..ModelConfig::default()
            },
            vocab,
            tags,
            Some(labels),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_value_exact() {
        let model = sample_model(7);
        let mut bytes = Vec::new();
        model.save_to(&mut bytes).unwrap();
        let loaded = TaggerModel::load_from(&mut bytes.as_slice()).unwrap();

        assert_eq!(loaded.config, model.config);
        assert_eq!(loaded.params, model.params);
        assert_eq!(loaded.vocab, model.vocab);
        assert_eq!(loaded.tags.len(), model.tags.len());
        assert_eq!(
            loaded.labels.as_ref().unwrap().labels(),
            model.labels.as_ref().unwrap().labels()
        );

        // Saving the loaded model reproduces the same bytes.
        let mut again = Vec::new();
        loaded.save_to(&mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn different_seeds_produce_different_files() {
        let mut a = Vec::new();
        sample_model(7).save_to(&mut a).unwrap();
        let mut b = Vec::new();
        sample_model(8).save_to(&mut b).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn version_mismatch_is_reported_explicitly() {
        let model = sample_model(7);
        let mut bytes = Vec::new();
        model.save_to(&mut bytes).unwrap();
        bytes[8] = 9; // bump the version field
        match TaggerModel::load_from(&mut bytes.as_slice()) {
            Err(Error::ModelFormat(msg)) => assert!(msg.contains("version 9")),
            other => panic!("expected ModelFormat error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let bytes = b"NOTAMODL rest".to_vec();
        assert!(matches!(
            TaggerModel::load_from(&mut bytes.as_slice()),
            Err(Error::ModelFormat(_))
        ));
    }

    #[test]
    fn truncated_file_rejected() {
        let model = sample_model(7);
        let mut bytes = Vec::new();
        model.save_to(&mut bytes).unwrap();
        bytes.truncate(bytes.len() / 2);
        assert!(matches!(
            TaggerModel::load_from(&mut bytes.as_slice()),
            Err(Error::ModelFormat(_))
        ));
    }
}
