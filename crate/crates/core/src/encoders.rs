//! Vision encoder φ (flattened-pixel MLP) and language encoder ψ
//! (mean-pooled token embeddings followed by an MLP), both into ℝ^K.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::diffnet::{self, mlp_forward_batch, mlp_tape, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::worldgen::{rng_from_seed, Image, CHANNELS, IMAGE_SIDE, VOCABULARY};

pub const VISION_PREFIX: &str = "vision";
pub const TEXT_PREFIX: &str = "text";
pub const TOKEN_TABLE: &str = "text.embed";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub k: usize,
    pub vision_hidden: Vec<usize>,
    pub token_width: usize,
    pub text_hidden: Vec<usize>,
    pub vocab_size: usize,
    /// Side of the square average-pooling window applied to frames before
    /// flattening; 1 feeds all 3072 pixel values.
    pub downsample: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            k: 32,
            vision_hidden: vec![256, 128],
            token_width: 32,
            text_hidden: vec![64],
            vocab_size: VOCABULARY.len(),
            downsample: 1,
        }
    }
}

impl EncoderConfig {
    /// A sub-5k-parameter configuration for dense finite-difference checks.
    pub fn tiny(k: usize) -> Self {
        EncoderConfig {
            k,
            vision_hidden: vec![16],
            token_width: 8,
            text_hidden: vec![8],
            vocab_size: VOCABULARY.len(),
            downsample: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidConfig(format!("K must be ≥ 2, got {}", self.k)));
        }
        if self.downsample == 0 || IMAGE_SIDE % self.downsample != 0 {
            return Err(Error::InvalidConfig(format!(
                "downsample {} must divide {IMAGE_SIDE}",
                self.downsample
            )));
        }
        let widths = self.vision_hidden.iter().chain(&self.text_hidden);
        if self.token_width == 0 || self.vocab_size == 0 || widths.clone().any(|&w| w == 0) {
            return Err(Error::InvalidConfig("encoder widths must be positive".into()));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        let side = IMAGE_SIDE / self.downsample;
        side * side * CHANNELS
    }

    pub fn init_params(&self, seed: u64) -> Result<ParamStore> {
        self.validate()?;
        let mut rng = rng_from_seed(seed);
        let mut params = ParamStore::new();
        let mut vision = vec![self.input_width()];
        vision.extend(&self.vision_hidden);
        vision.push(self.k);
        params.init_mlp(VISION_PREFIX, &vision, &mut rng)?;
        params.init_table(TOKEN_TABLE, self.vocab_size, self.token_width, 1.0, &mut rng)?;
        let mut text = vec![self.token_width];
        text.extend(&self.text_hidden);
        text.push(self.k);
        params.init_mlp(TEXT_PREFIX, &text, &mut rng)?;
        Ok(params)
    }

    /// Frame pixels scaled to [0,1], average-pooled, flattened row-major.
    pub fn preprocess(&self, frame: &Image) -> Vec<f64> {
        let f = self.downsample;
        let side = IMAGE_SIDE / f;
        let bytes = frame.as_bytes();
        if f == 1 {
            return bytes.iter().map(|&b| b as f64 / 255.0).collect();
        }
        let norm = 1.0 / (255.0 * (f * f) as f64);
        let mut out = vec![0.0; side * side * CHANNELS];
        for row in 0..IMAGE_SIDE {
            for col in 0..IMAGE_SIDE {
                let dst = ((row / f) * side + col / f) * CHANNELS;
                let src = (row * IMAGE_SIDE + col) * CHANNELS;
                for c in 0..CHANNELS {
                    out[dst + c] += bytes[src + c] as f64 * norm;
                }
            }
        }
        out
    }

    pub fn preprocess_batch(&self, frames: &[&Image]) -> Array2<f64> {
        let w = self.input_width();
        let mut data = Vec::with_capacity(frames.len() * w);
        for f in frames {
            data.extend(self.preprocess(f));
        }
        Array2::from_shape_vec((frames.len(), w), data).expect("width matches")
    }
}

/// Vision embeddings for a batch of frames on a tape, one row per frame.
pub fn vision_tape(tape: &mut Tape, params: &ParamStore, cfg: &EncoderConfig, frames: &[&Image]) -> Result<Var> {
    let x = tape.constant(cfg.preprocess_batch(frames));
    mlp_tape(tape, params, VISION_PREFIX, x)
}

/// Text embeddings for a batch of token sequences on a tape.
pub fn text_tape(tape: &mut Tape, params: &ParamStore, texts: &[&[usize]]) -> Result<Var> {
    let table = tape.param(params, TOKEN_TABLE)?;
    let lists: Vec<Vec<usize>> = texts.iter().map(|t| t.to_vec()).collect();
    let pooled = tape.mean_pool_rows(table, &lists)?;
    mlp_tape(tape, params, TEXT_PREFIX, pooled)
}

/// Frozen encoder pair: parameters plus the configuration that built them.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoders {
    pub config: EncoderConfig,
    pub params: ParamStore,
}

impl Encoders {
    pub fn new(config: EncoderConfig, params: ParamStore) -> Self {
        Encoders { config, params }
    }

    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self> {
        let params = config.init_params(seed)?;
        Ok(Encoders { config, params })
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn encode_image(&self, frame: &Image) -> Result<Vec<f64>> {
        Ok(self.encode_images(&[frame])?.into_raw_vec_and_offset().0)
    }

    pub fn encode_images(&self, frames: &[&Image]) -> Result<Array2<f64>> {
        let x = self.config.preprocess_batch(frames);
        mlp_forward_batch(&self.params, VISION_PREFIX, x.view())
    }

    pub fn encode_text(&self, token_ids: &[usize]) -> Result<Vec<f64>> {
        if token_ids.is_empty() {
            return Err(Error::EmptyAnnotation);
        }
        let table = self
            .params
            .get(TOKEN_TABLE)
            .ok_or_else(|| Error::shape(TOKEN_TABLE, "missing token table"))?;
        let (vocab, width) = table.matrix_dims();
        let mut pooled = vec![0.0; width];
        for &id in token_ids {
            if id >= vocab {
                return Err(Error::TokenOutOfRange { id, vocab });
            }
            for (p, v) in pooled.iter_mut().zip(&table.data[id * width..(id + 1) * width]) {
                *p += v;
            }
        }
        let n = token_ids.len() as f64;
        pooled.iter_mut().for_each(|p| *p /= n);
        diffnet::mlp_forward(&self.params, TEXT_PREFIX, &pooled)
    }

    pub fn metadata(&self) -> Value {
        json!({
            "encoder": self.config,
            "K": self.config.k,
            "vocabulary_hash": crate::worldgen::vocabulary_hash(&crate::worldgen::vocabulary()),
        })
    }

    pub fn from_checkpoint(dir: &Path) -> Result<(Self, Value)> {
        let (params, meta) = diffnet::load_checkpoint(dir)?;
        let config: EncoderConfig = meta
            .get("encoder")
            .cloned()
            .ok_or_else(|| Error::corrupt(dir, "manifest metadata lacks encoder config"))
            .and_then(|v| serde_json::from_value(v).map_err(|e| Error::corrupt(dir, e.to_string())))?;
        let fresh = config.init_params(0)?;
        if !fresh.same_layout(&params) {
            return Err(Error::corrupt(dir, "tensor layout does not match encoder config"));
        }
        Ok((Encoders { config, params }, meta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_embed_to_zero() {
        let enc = Encoders::init(EncoderConfig::tiny(4), 0).unwrap();
        let zero = Encoders::new(enc.config.clone(), enc.params.zeros_like());
        assert_eq!(zero.encode_image(&Image::filled([9, 9, 9])).unwrap(), vec![0.0; 4]);
        assert_eq!(zero.encode_text(&[1, 2]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn image_embedding_is_deterministic_and_distinguishes_frames() {
        let enc = Encoders::init(EncoderConfig::default(), 5).unwrap();
        let black = Image::black();
        let white = Image::filled([255, 255, 255]);
        let a = enc.encode_image(&black).unwrap();
        assert_eq!(a.len(), 32);
        assert_eq!(a, enc.encode_image(&black).unwrap());
        assert_ne!(a, enc.encode_image(&white).unwrap());
    }

    #[test]
    fn text_embedding_is_order_invariant() {
        let enc = Encoders::init(EncoderConfig::default(), 2).unwrap();
        let ab = enc.encode_text(&[1, 6]).unwrap();
        let ba = enc.encode_text(&[6, 1]).unwrap();
        for (x, y) in ab.iter().zip(&ba) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(matches!(enc.encode_text(&[]), Err(Error::EmptyAnnotation)));
        assert!(matches!(enc.encode_text(&[8]), Err(Error::TokenOutOfRange { .. })));
    }

    #[test]
    fn single_token_pools_to_its_row() {
        let enc = Encoders::init(EncoderConfig::tiny(3), 1).unwrap();
        let table = enc.params.get(TOKEN_TABLE).unwrap();
        let row = table.data[4 * 8..5 * 8].to_vec();
        let direct = diffnet::mlp_forward(&enc.params, TEXT_PREFIX, &row).unwrap();
        assert_eq!(enc.encode_text(&[4]).unwrap(), direct);
    }

    #[test]
    fn pooling_averages_blocks() {
        let cfg = EncoderConfig::tiny(2);
        let x = cfg.preprocess(&Image::filled([255, 0, 51]));
        assert_eq!(x.len(), 48);
        assert!((x[0] - 1.0).abs() < 1e-12 && x[1] == 0.0 && (x[2] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn tape_and_plain_paths_agree() {
        let enc = Encoders::init(EncoderConfig::tiny(5), 3).unwrap();
        let frames = [Image::filled([10, 200, 30]), Image::black()];
        let refs: Vec<&Image> = frames.iter().collect();
        let mut tape = Tape::new();
        let v = vision_tape(&mut tape, &enc.params, &enc.config, &refs).unwrap();
        let plain = enc.encode_images(&refs).unwrap();
        assert_eq!(tape.value(v), &plain);
        let t = text_tape(&mut tape, &enc.params, &[&[0, 1, 3]]).unwrap();
        let direct = enc.encode_text(&[0, 1, 3]).unwrap();
        for (a, b) in tape.value(t).iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
