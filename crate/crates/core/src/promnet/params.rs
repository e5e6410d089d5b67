use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::tensor::Mat;
use crate::error::{Error, Result};

/// Named parameter arrays. Gradients use the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Params {
    pub arrays: BTreeMap<String, Mat>,
}

#[derive(Clone, Copy)]
enum Init {
    /// Normal with std `1/sqrt(fan_in)`.
    Scaled(usize),
    Zero,
    One,
}

fn layout(cfg: &ModelConfig) -> Vec<(String, usize, usize, Init)> {
    let d = cfg.model_dim;
    let ff = cfg.feedforward_dim;
    let mut out: Vec<(String, usize, usize, Init)> = vec![
        ("tok_emb".into(), cfg.vocab_size, d, Init::Scaled(d)),
        ("pos_src".into(), cfg.max_src_len, d, Init::Scaled(d)),
        ("pos_tgt".into(), cfg.max_tgt_len, d, Init::Scaled(d)),
    ];
    let attn = |out: &mut Vec<(String, usize, usize, Init)>, p: &str| {
        for w in ["q", "k", "v", "o"] {
            out.push((format!("{p}.w{w}"), d, d, Init::Scaled(d)));
            out.push((format!("{p}.b{w}"), 1, d, Init::Zero));
        }
    };
    let norm = |out: &mut Vec<(String, usize, usize, Init)>, p: &str| {
        out.push((format!("{p}.g"), 1, d, Init::One));
        out.push((format!("{p}.b"), 1, d, Init::Zero));
    };
    let feed = |out: &mut Vec<(String, usize, usize, Init)>, p: &str| {
        out.push((format!("{p}.w1"), d, ff, Init::Scaled(d)));
        out.push((format!("{p}.b1"), 1, ff, Init::Zero));
        out.push((format!("{p}.w2"), ff, d, Init::Scaled(ff)));
        out.push((format!("{p}.b2"), 1, d, Init::Zero));
    };
    for l in 0..cfg.encoder_layers {
        attn(&mut out, &format!("enc.{l}.self"));
        norm(&mut out, &format!("enc.{l}.ln1"));
        feed(&mut out, &format!("enc.{l}.ff"));
        norm(&mut out, &format!("enc.{l}.ln2"));
    }
    for l in 0..cfg.decoder_layers {
        attn(&mut out, &format!("dec.{l}.self"));
        norm(&mut out, &format!("dec.{l}.ln1"));
        attn(&mut out, &format!("dec.{l}.cross"));
        norm(&mut out, &format!("dec.{l}.ln2"));
        feed(&mut out, &format!("dec.{l}.ff"));
        norm(&mut out, &format!("dec.{l}.ln3"));
    }
    out.push(("lm.w".into(), d, cfg.vocab_size, Init::Scaled(d)));
    out.push(("lm.b".into(), 1, cfg.vocab_size, Init::Zero));
    out.push(("ind.w".into(), d, 1, Init::Scaled(d)));
    out.push(("ind.b".into(), 1, 1, Init::Zero));
    let fuse = if cfg.fusion { Init::Scaled(1) } else { Init::Zero };
    out.push(("fuse.w".into(), 1, 1, fuse));
    out.push(("fuse.b".into(), 1, 1, Init::Zero));
    out.push(("gate.w".into(), 3 * d, 1, Init::Scaled(3 * d)));
    out.push(("gate.b".into(), 1, 1, Init::Zero));
    out
}

/// Names excluded from training under `cfg`.
pub fn frozen_names(cfg: &ModelConfig) -> Vec<&'static str> {
    if cfg.fusion {
        Vec::new()
    } else {
        vec!["fuse.w"]
    }
}

/// Standard deviation used for `name` at initialization, `None` for arrays
/// initialized to a constant.
pub fn init_std(cfg: &ModelConfig, name: &str) -> Option<f64> {
    layout(cfg).into_iter().find(|(n, ..)| n == name).and_then(|(.., init)| match init {
        Init::Scaled(fan_in) => Some(1.0 / (fan_in as f64).sqrt()),
        _ => None,
    })
}

pub fn init_model(cfg: &ModelConfig) -> Result<Params> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut arrays = BTreeMap::new();
    for (name, rows, cols, init) in layout(cfg) {
        let m = match init {
            Init::Zero => Mat::zeros(rows, cols),
            Init::One => Mat::filled(rows, cols, 1.0),
            Init::Scaled(fan_in) => {
                let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt())
                    .map_err(|e| Error::Config(e.to_string()))?;
                let data = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
                Mat::from_vec(rows, cols, data)
            }
        };
        arrays.insert(name, m);
    }
    Ok(Params { arrays })
}

impl Params {
    pub fn get(&self, name: &str) -> Result<&Mat> {
        self.arrays
            .get(name)
            .ok_or_else(|| Error::Shape(format!("missing parameter `{name}`")))
    }

    pub fn zeros_like(&self) -> Params {
        Params {
            arrays: self
                .arrays
                .iter()
                .map(|(k, v)| (k.clone(), Mat::zeros(v.rows, v.cols)))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.arrays.values().map(Mat::len).sum()
    }

    /// Name of the first array holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.arrays
            .iter()
            .find(|(_, m)| !m.is_finite())
            .map(|(k, _)| k.as_str())
    }

    /// `self += coef * other`, array by array.
    pub fn axpy(&mut self, coef: f64, other: &Params) {
        for (k, m) in self.arrays.iter_mut() {
            if let Some(o) = other.arrays.get(k) {
                for (a, b) in m.data.iter_mut().zip(&o.data) {
                    *a += coef * b;
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for m in self.arrays.values_mut() {
            m.scale_assign(s);
        }
    }

    /// Checks every expected array is present with the configured shape.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let want = layout(cfg);
        if want.len() != self.arrays.len() {
            return Err(Error::Shape(format!(
                "expected {} arrays, found {}",
                want.len(),
                self.arrays.len()
            )));
        }
        for (name, rows, cols, _) in want {
            let m = self.get(&name)?;
            if m.shape() != (rows, cols) {
                return Err(Error::Shape(format!(
                    "`{name}` is {:?}, expected {:?}",
                    m.shape(),
                    (rows, cols)
                )));
            }
        }
        Ok(())
    }
}
