use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use super::EncoderConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
}

/// Every trainable tensor of the encoder and its heads.
///
/// The same type doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `[vocab × hidden]`
    pub tok_emb: Array2<f64>,
    /// `[max_seq_len × hidden]`
    pub pos_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    /// `[vocab]`
    pub mlm_bias: Array1<f64>,
    /// `[hidden × vocab]`, present only when the output projection is untied.
    pub mlm_w: Option<Array2<f64>>,
    /// `[hidden × classes]`
    pub typing_w: Option<Array2<f64>>,
    pub typing_b: Option<Array1<f64>>,
}

fn normal_matrix(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_fn((rows, cols), |_| n.sample(rng))
}

impl LayerParams {
    fn init(cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        let (m, f, s) = (cfg.hidden, cfg.ffn, cfg.init_std);
        LayerParams {
            wq: normal_matrix(m, m, s, rng),
            bq: Array1::zeros(m),
            wk: normal_matrix(m, m, s, rng),
            bk: Array1::zeros(m),
            wv: normal_matrix(m, m, s, rng),
            bv: Array1::zeros(m),
            wo: normal_matrix(m, m, s, rng),
            bo: Array1::zeros(m),
            ln1_g: Array1::ones(m),
            ln1_b: Array1::zeros(m),
            w1: normal_matrix(m, f, s, rng),
            b1: Array1::zeros(f),
            w2: normal_matrix(f, m, s, rng),
            b2: Array1::zeros(m),
            ln2_g: Array1::ones(m),
            ln2_b: Array1::zeros(m),
        }
    }
}

macro_rules! layer_fields {
    ($mac:ident) => {
        $mac!(wq, bq, wk, bk, wv, bv, wo, bo, ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b)
    };
}

impl ModelParams {
    pub fn init(cfg: &EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (v, m) = (cfg.vocab_size, cfg.hidden);
        let tok_emb = normal_matrix(v, m, cfg.embed_init_std, &mut rng);
        let pos_emb = normal_matrix(cfg.max_seq_len, m, cfg.embed_init_std, &mut rng);
        let layers = (0..cfg.layers).map(|_| LayerParams::init(cfg, &mut rng)).collect();
        let mlm_w = (!cfg.tie_mlm_head).then(|| normal_matrix(m, v, cfg.init_std, &mut rng));
        let (typing_w, typing_b) = if cfg.n_classes > 0 {
            (
                Some(normal_matrix(m, cfg.n_classes, cfg.init_std, &mut rng)),
                Some(Array1::zeros(cfg.n_classes)),
            )
        } else {
            (None, None)
        };
        let mut p = ModelParams {
            tok_emb,
            pos_emb,
            layers,
            mlm_bias: Array1::zeros(v),
            mlm_w,
            typing_w,
            typing_b,
        };
        p.round_to_f32();
        p
    }

    /// Replaces (or adds) the typing head with a fresh one for `n_classes`.
    pub fn reset_typing_head(&mut self, n_classes: usize, std: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7479_7069_6e67);
        let m = self.tok_emb.ncols();
        let mut w = normal_matrix(m, n_classes, std, &mut rng);
        w.mapv_inplace(|x| x as f32 as f64);
        self.typing_w = Some(w);
        self.typing_b = Some(Array1::zeros(n_classes));
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, mut t| t.fill(0.0));
        z
    }

    /// Named views of every tensor in a fixed order.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out: Vec<(String, ArrayViewD<'_, f64>)> = vec![
            ("tok_emb".into(), self.tok_emb.view().into_dyn()),
            ("pos_emb".into(), self.pos_emb.view().into_dyn()),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            macro_rules! push {
                ($($f:ident),*) => {
                    $(out.push((format!("layer.{i}.{}", stringify!($f)), l.$f.view().into_dyn()));)*
                };
            }
            layer_fields!(push);
        }
        out.push(("mlm.bias".into(), self.mlm_bias.view().into_dyn()));
        if let Some(w) = &self.mlm_w {
            out.push(("mlm.weight".into(), w.view().into_dyn()));
        }
        if let Some(w) = &self.typing_w {
            out.push(("typing.weight".into(), w.view().into_dyn()));
        }
        if let Some(b) = &self.typing_b {
            out.push(("typing.bias".into(), b.view().into_dyn()));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out: Vec<(String, ArrayViewMutD<'_, f64>)> = vec![
            ("tok_emb".into(), self.tok_emb.view_mut().into_dyn()),
            ("pos_emb".into(), self.pos_emb.view_mut().into_dyn()),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            macro_rules! push {
                ($($f:ident),*) => {
                    $(out.push((format!("layer.{i}.{}", stringify!($f)), l.$f.view_mut().into_dyn()));)*
                };
            }
            layer_fields!(push);
        }
        out.push(("mlm.bias".into(), self.mlm_bias.view_mut().into_dyn()));
        if let Some(w) = &mut self.mlm_w {
            out.push(("mlm.weight".into(), w.view_mut().into_dyn()));
        }
        if let Some(w) = &mut self.typing_w {
            out.push(("typing.weight".into(), w.view_mut().into_dyn()));
        }
        if let Some(b) = &mut self.typing_b {
            out.push(("typing.bias".into(), b.view_mut().into_dyn()));
        }
        out
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, ArrayViewMutD<'_, f64>)) {
        for (name, t) in self.tensors_mut() {
            f(&name, t);
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &ModelParams) {
        let theirs = other.tensors();
        for ((_, mut mine), (_, t)) in self.tensors_mut().into_iter().zip(theirs) {
            Zip::from(&mut mine).and(&t).for_each(|a, &b| *a += b);
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.for_each_mut(|_, mut t| t.mapv_inplace(|x| x * c));
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    /// Rounds every value to the nearest 32-bit float, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        self.for_each_mut(|_, mut t| t.mapv_inplace(|x| x as f32 as f64));
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter().map(|x| x.abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }
}

/// Inverted-dropout keep mask, or `None` when dropout is inactive.
pub(crate) fn dropout_mask<R: rand::RngCore + ?Sized>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Option<Array2<f64>> {
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(Array2::from_shape_fn((rows, cols), |_| {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    }))
}
