//! The dual-domain transformer encoder.
//!
//! Masked time and frequency inputs are projected separately to the model
//! dimension and summed with a fixed sinusoidal positional encoding. A stack
//! of post-norm encoder layers (bidirectional softmax attention, GELU FFN)
//! produces output embeddings, from which two affine heads reconstruct the
//! time and frequency targets and an optional mean-pool + affine head emits
//! class logits.
//!
//! Forward passes record a [`Tape`]; backward passes replay it and return
//! exact analytic gradients for every parameter. All math is f64; checkpoints
//! store f32 (see [`checkpoint`]).

pub mod checkpoint;
pub mod layers;
pub mod loss;

use ndarray::{Array1, Array2, Array3, Axis, s};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive2, stream, Stream};
use layers::{
    gelu, gelu_prime, sinusoidal_encoding, softmax_rows_backward, softmax_rows_inplace, LayerNorm,
    Linear, LinearGrad, LnCache,
};

/// Which input domains feed the encoder (and which reconstruction heads are
/// scored).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Joint,
    Time,
    Freq,
}

impl Encoding {
    pub fn uses_time(self) -> bool {
        matches!(self, Encoding::Joint | Encoding::Time)
    }

    pub fn uses_freq(self) -> bool {
        matches!(self, Encoding::Joint | Encoding::Freq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    /// Input channels per position (the aligned `c_out`).
    pub c_in: usize,
    /// Sequence length (the aligned `l_out`).
    pub seq_len: usize,
    pub n_classes: Option<usize>,
    pub encoding: Encoding,
    /// Dropout probability on each sublayer output during training.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 128,
            n_layers: 6,
            n_heads: 8,
            ffn_dim: 512,
            c_in: 32,
            seq_len: 256,
            n_classes: None,
            encoding: Encoding::Joint,
            dropout: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0
            || self.n_layers == 0
            || self.n_heads == 0
            || self.ffn_dim == 0
            || self.c_in == 0
            || self.seq_len == 0
        {
            return Err(Error::validation("model: all dimensions must be positive"));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::validation(format!(
                "model: d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if let Some(n) = self.n_classes {
            if n < 2 {
                return Err(Error::validation("model: n_classes must be >= 2"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::validation("model: dropout must be in [0, 1)"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone)]
pub struct EncoderLayerParams {
    pub attn_q: Linear,
    pub attn_k: Linear,
    pub attn_v: Linear,
    pub attn_o: Linear,
    pub ln1: LayerNorm,
    pub ffn1: Linear,
    pub ffn2: Linear,
    pub ln2: LayerNorm,
}

/// All learnable tensors. Doubles as the gradient container: a backward pass
/// returns a `ModelParams` of the same shapes holding `dL/dp`.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub proj_t: Linear,
    pub proj_f: Linear,
    pub layers: Vec<EncoderLayerParams>,
    pub head_t: Linear,
    pub head_f: Linear,
    pub classifier: Option<Linear>,
}

/// Borrowed view of one parameter tensor.
pub enum TensorRef<'a> {
    Mat(&'a Array2<f64>),
    Vec1(&'a Array1<f64>),
}

pub enum TensorMut<'a> {
    Mat(&'a mut Array2<f64>),
    Vec1(&'a mut Array1<f64>),
}

impl TensorRef<'_> {
    pub fn dims(&self) -> Vec<usize> {
        match self {
            TensorRef::Mat(m) => vec![m.nrows(), m.ncols()],
            TensorRef::Vec1(v) => vec![v.len()],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            TensorRef::Mat(m) => m.as_slice().expect("parameter tensors are contiguous"),
            TensorRef::Vec1(v) => v.as_slice().expect("parameter tensors are contiguous"),
        }
    }
}

impl TensorMut<'_> {
    pub fn dims(&self) -> Vec<usize> {
        match self {
            TensorMut::Mat(m) => vec![m.nrows(), m.ncols()],
            TensorMut::Vec1(v) => vec![v.len()],
        }
    }

    pub fn as_slice_mut(&mut self) -> &mut [f64] {
        match self {
            TensorMut::Mat(m) => m.as_slice_mut().expect("parameter tensors are contiguous"),
            TensorMut::Vec1(v) => v.as_slice_mut().expect("parameter tensors are contiguous"),
        }
    }
}

impl ModelParams {
    fn zeros(config: &ModelConfig) -> Self {
        let d = config.d_model;
        let layers = (0..config.n_layers)
            .map(|_| EncoderLayerParams {
                attn_q: Linear::zeros(d, d),
                attn_k: Linear::zeros(d, d),
                attn_v: Linear::zeros(d, d),
                attn_o: Linear::zeros(d, d),
                ln1: LayerNorm { gamma: Array1::zeros(d), beta: Array1::zeros(d) },
                ffn1: Linear::zeros(d, config.ffn_dim),
                ffn2: Linear::zeros(config.ffn_dim, d),
                ln2: LayerNorm { gamma: Array1::zeros(d), beta: Array1::zeros(d) },
            })
            .collect();
        Self {
            proj_t: Linear::zeros(config.c_in, d),
            proj_f: Linear::zeros(config.c_in, d),
            layers,
            head_t: Linear::zeros(d, config.c_in),
            head_f: Linear::zeros(d, config.c_in),
            classifier: config.n_classes.map(|n| Linear::zeros(d, n)),
        }
    }

    fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = stream(seed, Stream::Init);
        let d = config.d_model;
        let layers = (0..config.n_layers)
            .map(|_| EncoderLayerParams {
                attn_q: Linear::xavier(d, d, &mut rng),
                attn_k: Linear::xavier(d, d, &mut rng),
                attn_v: Linear::xavier(d, d, &mut rng),
                attn_o: Linear::xavier(d, d, &mut rng),
                ln1: LayerNorm::identity(d),
                ffn1: Linear::xavier(d, config.ffn_dim, &mut rng),
                ffn2: Linear::xavier(config.ffn_dim, d, &mut rng),
                ln2: LayerNorm::identity(d),
            })
            .collect();
        Self {
            proj_t: Linear::xavier(config.c_in, d, &mut rng),
            proj_f: Linear::xavier(config.c_in, d, &mut rng),
            layers,
            head_t: Linear::xavier(d, config.c_in, &mut rng),
            head_f: Linear::xavier(d, config.c_in, &mut rng),
            classifier: config.n_classes.map(|n| Linear::xavier(d, n, &mut rng)),
        }
    }

    /// Named tensors in declaration order. This order is the checkpoint
    /// layout and the optimizer-state layout.
    pub fn visit(&self) -> Vec<(String, TensorRef<'_>)> {
        let mut out: Vec<(String, TensorRef<'_>)> = Vec::new();
        macro_rules! lin {
            ($prefix:expr, $l:expr) => {
                out.push((format!("{}.weight", $prefix), TensorRef::Mat(&$l.w)));
                out.push((format!("{}.bias", $prefix), TensorRef::Vec1(&$l.b)));
            };
        }
        lin!("proj_t", self.proj_t);
        lin!("proj_f", self.proj_f);
        for (i, layer) in self.layers.iter().enumerate() {
            lin!(format!("layer{i}.attn_q"), layer.attn_q);
            lin!(format!("layer{i}.attn_k"), layer.attn_k);
            lin!(format!("layer{i}.attn_v"), layer.attn_v);
            lin!(format!("layer{i}.attn_o"), layer.attn_o);
            out.push((format!("layer{i}.ln1.gamma"), TensorRef::Vec1(&layer.ln1.gamma)));
            out.push((format!("layer{i}.ln1.beta"), TensorRef::Vec1(&layer.ln1.beta)));
            lin!(format!("layer{i}.ffn1"), layer.ffn1);
            lin!(format!("layer{i}.ffn2"), layer.ffn2);
            out.push((format!("layer{i}.ln2.gamma"), TensorRef::Vec1(&layer.ln2.gamma)));
            out.push((format!("layer{i}.ln2.beta"), TensorRef::Vec1(&layer.ln2.beta)));
        }
        lin!("head_t", self.head_t);
        lin!("head_f", self.head_f);
        if let Some(c) = &self.classifier {
            lin!("classifier", c);
        }
        out
    }

    /// Mutable counterpart of [`visit`](Self::visit), same order.
    pub fn visit_mut(&mut self) -> Vec<(String, TensorMut<'_>)> {
        let mut out: Vec<(String, TensorMut<'_>)> = Vec::new();
        macro_rules! lin {
            ($prefix:expr, $l:expr) => {
                out.push((format!("{}.weight", $prefix), TensorMut::Mat(&mut $l.w)));
                out.push((format!("{}.bias", $prefix), TensorMut::Vec1(&mut $l.b)));
            };
        }
        lin!("proj_t", self.proj_t);
        lin!("proj_f", self.proj_f);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            lin!(format!("layer{i}.attn_q"), layer.attn_q);
            lin!(format!("layer{i}.attn_k"), layer.attn_k);
            lin!(format!("layer{i}.attn_v"), layer.attn_v);
            lin!(format!("layer{i}.attn_o"), layer.attn_o);
            out.push((format!("layer{i}.ln1.gamma"), TensorMut::Vec1(&mut layer.ln1.gamma)));
            out.push((format!("layer{i}.ln1.beta"), TensorMut::Vec1(&mut layer.ln1.beta)));
            lin!(format!("layer{i}.ffn1"), layer.ffn1);
            lin!(format!("layer{i}.ffn2"), layer.ffn2);
            out.push((format!("layer{i}.ln2.gamma"), TensorMut::Vec1(&mut layer.ln2.gamma)));
            out.push((format!("layer{i}.ln2.beta"), TensorMut::Vec1(&mut layer.ln2.beta)));
        }
        lin!("head_t", self.head_t);
        lin!("head_f", self.head_f);
        if let Some(c) = &mut self.classifier {
            lin!("classifier", c);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.visit().iter().map(|(_, t)| t.as_slice().len()).sum()
    }
}

/// Seeded dropout applied during training forward passes.
#[derive(Debug, Clone, Copy)]
pub struct DropoutCtx {
    pub prob: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
struct LayerTape {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Attention probabilities per (batch, head), row-stochastic `(L, L)`.
    attn: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    attn_mask: Option<Array2<f64>>,
    ln1: LnCache,
    u: Array2<f64>,
    h_pre: Array2<f64>,
    h: Array2<f64>,
    ffn_mask: Option<Array2<f64>>,
    ln2: LnCache,
}

/// Everything a backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    batch: usize,
    xt: Array2<f64>,
    xf: Array2<f64>,
    layers: Vec<LayerTape>,
    e_o: Array2<f64>,
    /// Mean-pooled embeddings, present on classification passes.
    pool: Option<Array2<f64>>,
}

impl Tape {
    /// Attention probabilities of one layer, indexed `batch * n_heads + head`.
    pub fn attention(&self, layer: usize) -> &[Array2<f64>] {
        &self.layers[layer].attn
    }

    pub fn output_embeddings(&self) -> &Array2<f64> {
        &self.e_o
    }

    pub fn pooled(&self) -> Option<&Array2<f64>> {
        self.pool.as_ref()
    }
}

#[derive(Debug, Clone)]
pub struct ReconForward {
    pub pred_time: Array3<f64>,
    pub pred_freq: Array3<f64>,
    pub tape: Tape,
}

#[derive(Debug, Clone)]
pub struct ClassifyForward {
    pub logits: Array2<f64>,
    pub tape: Tape,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
    pe: Array2<f64>,
}

fn flatten(x: &Array3<f64>) -> Array2<f64> {
    let (b, l, c) = x.dim();
    x.to_shape((b * l, c)).expect("contiguous input").to_owned()
}

fn unflatten(x: Array2<f64>, b: usize, l: usize) -> Array3<f64> {
    let c = x.ncols();
    x.into_shape_with_order((b, l, c)).expect("contiguous output")
}

impl Model {
    /// Freshly initialized model (Xavier-uniform affine maps, identity
    /// layer norms).
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(&config, seed);
        let pe = sinusoidal_encoding(config.seq_len, config.d_model);
        Ok(Self { config, params, pe })
    }

    /// Zero-parameter model of the right structure (checkpoint loading).
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::zeros(&config);
        let pe = sinusoidal_encoding(config.seq_len, config.d_model);
        Ok(Self { config, params, pe })
    }

    pub fn positional_encoding(&self) -> &Array2<f64> {
        &self.pe
    }

    /// Attach a fresh zero-initialized classifier head for `n_classes`
    /// (fine-tuning a pretrained checkpoint). Replaces any existing head.
    /// Zero weights mean the encoder sees no classification gradient until
    /// the head itself has grown, which keeps early fine-tuning from
    /// disturbing the pretrained features.
    pub fn attach_classifier(&mut self, n_classes: usize) -> Result<()> {
        if n_classes < 2 {
            return Err(Error::validation("classifier needs at least 2 classes"));
        }
        self.params.classifier = Some(Linear::zeros(self.config.d_model, n_classes));
        self.config.n_classes = Some(n_classes);
        Ok(())
    }

    fn check_input(&self, x: &Array3<f64>, what: &str) {
        let (_, l, c) = x.dim();
        assert_eq!(
            (l, c),
            (self.config.seq_len, self.config.c_in),
            "{what}: expected (*, {}, {}), got (*, {l}, {c})",
            self.config.seq_len,
            self.config.c_in
        );
    }

    /// Input embeddings: per-domain projections summed with the positional
    /// encoding. Domains outside the configured encoding are ignored.
    pub fn embed(&self, input_time: &Array3<f64>, input_freq: &Array3<f64>) -> Array3<f64> {
        self.check_input(input_time, "embed(time)");
        self.check_input(input_freq, "embed(freq)");
        let (b, l, _) = input_time.dim();
        let e = self.embed_flat(&flatten(input_time), &flatten(input_freq), l);
        unflatten(e, b, l)
    }

    fn embed_flat(&self, xt: &Array2<f64>, xf: &Array2<f64>, l: usize) -> Array2<f64> {
        let mut e = match self.config.encoding {
            Encoding::Joint => self.params.proj_t.forward(xt) + self.params.proj_f.forward(xf),
            Encoding::Time => self.params.proj_t.forward(xt),
            Encoding::Freq => self.params.proj_f.forward(xf),
        };
        for (r, mut row) in e.rows_mut().into_iter().enumerate() {
            row += &self.pe.row(r % l);
        }
        e
    }

    /// Run the encoder stack on embeddings. Pure convenience wrapper; the
    /// training paths keep the tape.
    pub fn encode(&self, e_i: &Array3<f64>) -> Array3<f64> {
        let (b, l, d) = e_i.dim();
        assert_eq!(d, self.config.d_model, "encode: embedding dim mismatch");
        let (e_o, _) = self.encode_flat(flatten(e_i), b, l, None);
        unflatten(e_o, b, l)
    }

    fn encode_flat(
        &self,
        e_i: Array2<f64>,
        b: usize,
        l: usize,
        dropout: Option<DropoutCtx>,
    ) -> (Array2<f64>, Vec<LayerTape>) {
        let mut x = e_i;
        let mut tapes = Vec::with_capacity(self.config.n_layers);
        for (li, layer) in self.params.layers.iter().enumerate() {
            let (y, tape) = self.layer_forward(layer, x, b, l, li, dropout);
            tapes.push(tape);
            x = y;
        }
        (x, tapes)
    }

    fn dropout_mask(&self, ctx: DropoutCtx, tag: u64, shape: (usize, usize)) -> Array2<f64> {
        use rand::Rng;
        let keep = 1.0 - ctx.prob;
        let mut rng = stream(derive2(ctx.seed, 0xD0, tag), Stream::Init);
        Array2::from_shape_fn(shape, |_| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        })
    }

    fn layer_forward(
        &self,
        layer: &EncoderLayerParams,
        x: Array2<f64>,
        b: usize,
        l: usize,
        layer_index: usize,
        dropout: Option<DropoutCtx>,
    ) -> (Array2<f64>, LayerTape) {
        let h = self.config.n_heads;
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        let q = layer.attn_q.forward(&x);
        let k = layer.attn_k.forward(&x);
        let v = layer.attn_v.forward(&x);

        let mut ctx = Array2::zeros(x.raw_dim());
        let mut attn = Vec::with_capacity(b * h);
        for bi in 0..b {
            let r0 = bi * l;
            for hi in 0..h {
                let c0 = hi * dh;
                let qs = q.slice(s![r0..r0 + l, c0..c0 + dh]);
                let ks = k.slice(s![r0..r0 + l, c0..c0 + dh]);
                let vs = v.slice(s![r0..r0 + l, c0..c0 + dh]);
                let mut scores = qs.dot(&ks.t());
                scores *= scale;
                softmax_rows_inplace(&mut scores);
                let head_ctx = scores.dot(&vs);
                ctx.slice_mut(s![r0..r0 + l, c0..c0 + dh]).assign(&head_ctx);
                attn.push(scores);
            }
        }

        let mut attn_out = layer.attn_o.forward(&ctx);
        let attn_mask = dropout.map(|d| {
            let m = self.dropout_mask(d, (layer_index * 2) as u64, attn_out.dim());
            attn_out *= &m;
            m
        });

        let r1 = &x + &attn_out;
        let (u, ln1) = layer.ln1.forward(&r1);

        let h_pre = layer.ffn1.forward(&u);
        let h_act = h_pre.mapv(gelu);
        let mut f = layer.ffn2.forward(&h_act);
        let ffn_mask = dropout.map(|d| {
            let m = self.dropout_mask(d, (layer_index * 2 + 1) as u64, f.dim());
            f *= &m;
            m
        });

        let r2 = &u + &f;
        let (y, ln2) = layer.ln2.forward(&r2);

        (y, LayerTape { x, q, k, v, attn, ctx, attn_mask, ln1, u, h_pre, h: h_act, ffn_mask, ln2 })
    }

    fn layer_backward(
        &self,
        layer: &EncoderLayerParams,
        tape: &LayerTape,
        dy: &Array2<f64>,
        b: usize,
        l: usize,
        grads: &mut EncoderLayerParams,
    ) -> Array2<f64> {
        let h = self.config.n_heads;
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        let (dr2, dg2, db2) = layer.ln2.backward(&tape.ln2, dy);
        grads.ln2.gamma += &dg2;
        grads.ln2.beta += &db2;

        let mut df = dr2.clone();
        if let Some(m) = &tape.ffn_mask {
            df *= m;
        }
        let (dh_act, g_ffn2) = layer.ffn2.backward(&tape.h, &df);
        grads.ffn2.w += &g_ffn2.dw;
        grads.ffn2.b += &g_ffn2.db;
        let dh_pre = &dh_act * &tape.h_pre.mapv(gelu_prime);
        let (du_ffn, g_ffn1) = layer.ffn1.backward(&tape.u, &dh_pre);
        grads.ffn1.w += &g_ffn1.dw;
        grads.ffn1.b += &g_ffn1.db;
        let du = &dr2 + &du_ffn;

        let (dr1, dg1, db1) = layer.ln1.backward(&tape.ln1, &du);
        grads.ln1.gamma += &dg1;
        grads.ln1.beta += &db1;

        let mut dattn_out = dr1.clone();
        if let Some(m) = &tape.attn_mask {
            dattn_out *= m;
        }
        let (dctx, g_o) = layer.attn_o.backward(&tape.ctx, &dattn_out);
        grads.attn_o.w += &g_o.dw;
        grads.attn_o.b += &g_o.db;

        let mut dq = Array2::zeros(tape.q.raw_dim());
        let mut dk = Array2::zeros(tape.k.raw_dim());
        let mut dv = Array2::zeros(tape.v.raw_dim());
        for bi in 0..b {
            let r0 = bi * l;
            for hi in 0..h {
                let c0 = hi * dh;
                let a = &tape.attn[bi * h + hi];
                let dctx_s = dctx.slice(s![r0..r0 + l, c0..c0 + dh]);
                let vs = tape.v.slice(s![r0..r0 + l, c0..c0 + dh]);
                let da = dctx_s.dot(&vs.t());
                let dv_blk = a.t().dot(&dctx_s);
                let mut ds = softmax_rows_backward(a, &da);
                ds *= scale;
                let ks = tape.k.slice(s![r0..r0 + l, c0..c0 + dh]);
                let qs = tape.q.slice(s![r0..r0 + l, c0..c0 + dh]);
                let dq_blk = ds.dot(&ks);
                let dk_blk = ds.t().dot(&qs);
                dq.slice_mut(s![r0..r0 + l, c0..c0 + dh]).assign(&dq_blk);
                dk.slice_mut(s![r0..r0 + l, c0..c0 + dh]).assign(&dk_blk);
                dv.slice_mut(s![r0..r0 + l, c0..c0 + dh]).assign(&dv_blk);
            }
        }

        let (dx_q, g_q) = layer.attn_q.backward(&tape.x, &dq);
        let (dx_k, g_k) = layer.attn_k.backward(&tape.x, &dk);
        let (dx_v, g_v) = layer.attn_v.backward(&tape.x, &dv);
        grads.attn_q.w += &g_q.dw;
        grads.attn_q.b += &g_q.db;
        grads.attn_k.w += &g_k.dw;
        grads.attn_k.b += &g_k.db;
        grads.attn_v.w += &g_v.dw;
        grads.attn_v.b += &g_v.db;

        dr1 + dx_q + dx_k + dx_v
    }

    /// Full forward pass for the reconstruction objective.
    pub fn forward_recon(
        &self,
        input_time: &Array3<f64>,
        input_freq: &Array3<f64>,
        dropout: Option<DropoutCtx>,
    ) -> ReconForward {
        self.check_input(input_time, "forward_recon(time)");
        self.check_input(input_freq, "forward_recon(freq)");
        let (b, l, _) = input_time.dim();
        let xt = flatten(input_time);
        let xf = flatten(input_freq);
        let e_i = self.embed_flat(&xt, &xf, l);
        let (e_o, layers) = self.encode_flat(e_i, b, l, dropout);
        let pred_time = unflatten(self.params.head_t.forward(&e_o), b, l);
        let pred_freq = unflatten(self.params.head_f.forward(&e_o), b, l);
        ReconForward { pred_time, pred_freq, tape: Tape { batch: b, xt, xf, layers, e_o, pool: None } }
    }

    /// Affine reconstruction heads applied to given output embeddings.
    pub fn reconstruct(&self, e_o: &Array3<f64>) -> (Array3<f64>, Array3<f64>) {
        let (b, l, d) = e_o.dim();
        assert_eq!(d, self.config.d_model, "reconstruct: embedding dim mismatch");
        let flat = flatten(e_o);
        (
            unflatten(self.params.head_t.forward(&flat), b, l),
            unflatten(self.params.head_f.forward(&flat), b, l),
        )
    }

    /// Mean-pool output embeddings over positions and apply the classifier.
    pub fn classify(&self, e_o: &Array3<f64>) -> Result<Array2<f64>> {
        let classifier = self
            .params
            .classifier
            .as_ref()
            .ok_or_else(|| Error::validation("classify: no classifier head configured"))?;
        let pool = e_o.mean_axis(Axis(1)).expect("non-empty seq");
        Ok(classifier.forward(&pool))
    }

    /// Gradients of the reconstruction loss for every parameter, given the
    /// loss gradients w.r.t. the two prediction tensors.
    pub fn backward_recon(
        &self,
        tape: &Tape,
        d_pred_time: &Array3<f64>,
        d_pred_freq: &Array3<f64>,
    ) -> ModelParams {
        let b = tape.batch;
        let l = self.config.seq_len;
        let mut grads = ModelParams::zeros(&self.config);

        let dpt = flatten(d_pred_time);
        let dpf = flatten(d_pred_freq);
        let (de_t, g_ht) = self.params.head_t.backward(&tape.e_o, &dpt);
        let (de_f, g_hf) = self.params.head_f.backward(&tape.e_o, &dpf);
        grads.head_t.w += &g_ht.dw;
        grads.head_t.b += &g_ht.db;
        grads.head_f.w += &g_hf.dw;
        grads.head_f.b += &g_hf.db;
        let de_o = de_t + de_f;

        let d_e_i = self.encoder_backward(tape, de_o, b, l, &mut grads);
        self.embed_backward(tape, &d_e_i, &mut grads);
        grads
    }

    fn encoder_backward(
        &self,
        tape: &Tape,
        de_o: Array2<f64>,
        b: usize,
        l: usize,
        grads: &mut ModelParams,
    ) -> Array2<f64> {
        let mut dy = de_o;
        for (layer, (ltape, lgrads)) in self
            .params
            .layers
            .iter()
            .zip(tape.layers.iter().zip(grads.layers.iter_mut()))
            .rev()
        {
            dy = self.layer_backward(layer, ltape, &dy, b, l, lgrads);
        }
        dy
    }

    fn embed_backward(&self, tape: &Tape, d_e_i: &Array2<f64>, grads: &mut ModelParams) {
        if self.config.encoding.uses_time() {
            let (_, g_t) = self.params.proj_t.backward(&tape.xt, d_e_i);
            grads.proj_t.w += &g_t.dw;
            grads.proj_t.b += &g_t.db;
        }
        if self.config.encoding.uses_freq() {
            let (_, g_f) = self.params.proj_f.backward(&tape.xf, d_e_i);
            grads.proj_f.w += &g_f.dw;
            grads.proj_f.b += &g_f.db;
        }
    }

    /// Forward pass for classification: embed, encode, mean-pool, classify.
    pub fn forward_classify(
        &self,
        input_time: &Array3<f64>,
        input_freq: &Array3<f64>,
        dropout: Option<DropoutCtx>,
    ) -> Result<ClassifyForward> {
        let classifier = self
            .params
            .classifier
            .as_ref()
            .ok_or_else(|| Error::validation("classify: no classifier head configured"))?;
        self.check_input(input_time, "forward_classify(time)");
        self.check_input(input_freq, "forward_classify(freq)");
        let (b, l, _) = input_time.dim();
        let xt = flatten(input_time);
        let xf = flatten(input_freq);
        let e_i = self.embed_flat(&xt, &xf, l);
        let (e_o, layers) = self.encode_flat(e_i, b, l, dropout);
        let e_o3 = unflatten(e_o.clone(), b, l);
        let pool = e_o3.mean_axis(Axis(1)).expect("non-empty seq");
        let logits = classifier.forward(&pool);
        Ok(ClassifyForward {
            logits,
            tape: Tape { batch: b, xt, xf, layers, e_o, pool: Some(pool) },
        })
    }

    /// Gradients of the classification loss for every parameter.
    pub fn backward_classify(&self, tape: &Tape, d_logits: &Array2<f64>) -> Result<ModelParams> {
        let classifier = self
            .params
            .classifier
            .as_ref()
            .ok_or_else(|| Error::validation("classify: no classifier head configured"))?;
        let pool = tape.pool.as_ref().expect("classification tape");
        let b = tape.batch;
        let l = self.config.seq_len;
        let mut grads = ModelParams::zeros(&self.config);

        let (dpool, g_c) = classifier.backward(pool, d_logits);
        let gc = grads.classifier.as_mut().expect("grads mirror params");
        gc.w += &g_c.dw;
        gc.b += &g_c.db;

        // Mean pool spreads each item's gradient evenly over its positions.
        let mut de_o = Array2::zeros(tape.e_o.raw_dim());
        for bi in 0..b {
            for pos in 0..l {
                let mut row = de_o.row_mut(bi * l + pos);
                row.assign(&dpool.row(bi));
                row /= l as f64;
            }
        }

        let d_e_i = self.encoder_backward(tape, de_o, b, l, &mut grads);
        self.embed_backward(tape, &d_e_i, &mut grads);
        Ok(grads)
    }

    /// Classifier-only gradients (frozen-encoder fine-tuning). No encoder
    /// gradients are computed or allocated.
    pub fn backward_classify_frozen(&self, tape: &Tape, d_logits: &Array2<f64>) -> LinearGrad {
        let classifier = self.params.classifier.as_ref().expect("classifier head");
        let pool = tape.pool.as_ref().expect("classification tape");
        let (_, g_c) = classifier.backward(pool, d_logits);
        g_c
    }
}
