//! The fusion model: three two-layer Elman encoders (one per modality),
//! three cross-attention heads queried by the current-frame face feature,
//! and a concat + fully-connected classifier over 8 expression classes.
//!
//! Four modes select what reaches the classifier:
//! * `CurrentFaceOnly` — the current face vector alone;
//! * `VideoOnly`       — the face modality's attention context alone;
//! * `ConcatFusion`    — current face + each encoder's final hidden state;
//! * `AttentionFusion` — current face + the three attention contexts.
//!
//! Parameters live in plain matrices with a fixed, documented enumeration
//! order (see [`PARAM_NAMES`]), which is what the optimizer, the checkpoint
//! format, and the finite-difference gradient checks all walk.

mod checkpoint;
mod pass;

pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CheckpointHeader};
pub use pass::{
    backward, cross_attention, forward, predict, rnn_forward, rnn_layer_forward, AttentionCache,
    EncoderCache, ForwardCache,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datamodel::{FeatureDims, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::numerics::{xavier_init, Matrix, Rng};

pub const NUM_MODALITIES: usize = 3;
pub const MODALITY_NAMES: [&str; NUM_MODALITIES] = ["face", "audio", "pose"];

/// What the classifier consumes; the four rows of the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    CurrentFaceOnly,
    VideoOnly,
    ConcatFusion,
    AttentionFusion,
}

pub const ALL_MODES: [FusionMode; 4] = [
    FusionMode::CurrentFaceOnly,
    FusionMode::VideoOnly,
    FusionMode::ConcatFusion,
    FusionMode::AttentionFusion,
];

impl FusionMode {
    /// Identifier used on the command line and in file headers.
    pub fn key(self) -> &'static str {
        match self {
            FusionMode::CurrentFaceOnly => "current_face_only",
            FusionMode::VideoOnly => "video_only",
            FusionMode::ConcatFusion => "concat_fusion",
            FusionMode::AttentionFusion => "attention_fusion",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FusionMode::CurrentFaceOnly => "current face",
            FusionMode::VideoOnly => "only video",
            FusionMode::ConcatFusion => "concat fusion",
            FusionMode::AttentionFusion => "attention fusion",
        };
        f.write_str(s)
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "current_face_only" => Ok(FusionMode::CurrentFaceOnly),
            "video_only" => Ok(FusionMode::VideoOnly),
            "concat_fusion" => Ok(FusionMode::ConcatFusion),
            "attention_fusion" => Ok(FusionMode::AttentionFusion),
            other => Err(Error::invalid(format!(
                "unknown mode '{other}' (expected one of current_face_only, video_only, concat_fusion, attention_fusion)"
            ))),
        }
    }
}

/// Model widths: the three input feature dims plus the shared RNN hidden
/// width and attention width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionDims {
    pub face: usize,
    pub audio: usize,
    pub pose: usize,
    pub hidden: usize,
    pub attn: usize,
}

impl Default for FusionDims {
    fn default() -> Self {
        FusionDims {
            face: 512,
            audio: 1024,
            pose: 50,
            hidden: 128,
            attn: 128,
        }
    }
}

impl FusionDims {
    pub fn for_corpus(dims: &FeatureDims, hidden: usize, attn: usize) -> Self {
        FusionDims {
            face: dims.face,
            audio: dims.audio,
            pose: dims.pose,
            hidden,
            attn,
        }
    }

    pub fn input_dim(&self, modality: usize) -> usize {
        match modality {
            0 => self.face,
            1 => self.audio,
            2 => self.pose,
            _ => unreachable!("modality index {modality}"),
        }
    }

    /// Width of the vector fed to the FC layer for `mode`.
    pub fn fc_input_width(&self, mode: FusionMode) -> usize {
        match mode {
            FusionMode::CurrentFaceOnly => self.face,
            FusionMode::VideoOnly => self.attn,
            FusionMode::ConcatFusion => self.face + NUM_MODALITIES * self.hidden,
            FusionMode::AttentionFusion => self.face + NUM_MODALITIES * self.attn,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("face", self.face),
            ("audio", self.audio),
            ("pose", self.pose),
            ("hidden", self.hidden),
            ("attn", self.attn),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("dimension '{name}' must be >= 1")));
            }
        }
        Ok(())
    }
}

/// One Elman layer: `h_t = tanh(w_in · x_t + w_rec · h_{t−1} + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnLayerParams {
    pub w_in: Matrix,  // hidden × input
    pub w_rec: Matrix, // hidden × hidden
    pub b: Matrix,     // hidden × 1
}

impl RnnLayerParams {
    fn zeros(input: usize, hidden: usize) -> Self {
        RnnLayerParams {
            w_in: Matrix::zeros(hidden, input),
            w_rec: Matrix::zeros(hidden, hidden),
            b: Matrix::zeros(hidden, 1),
        }
    }

    fn init(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        RnnLayerParams {
            w_in: xavier_init(hidden, input, rng),
            w_rec: xavier_init(hidden, hidden, rng),
            b: Matrix::zeros(hidden, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_in.rows()
    }
}

/// Two stacked Elman layers; layer 2 consumes layer 1's full hidden sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layer1: RnnLayerParams,
    pub layer2: RnnLayerParams,
}

impl EncoderParams {
    fn zeros(input: usize, hidden: usize) -> Self {
        EncoderParams {
            layer1: RnnLayerParams::zeros(input, hidden),
            layer2: RnnLayerParams::zeros(hidden, hidden),
        }
    }

    fn init(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        EncoderParams {
            layer1: RnnLayerParams::init(input, hidden, rng),
            layer2: RnnLayerParams::init(hidden, hidden, rng),
        }
    }
}

/// One single-head scaled dot-product cross-attention block. The query
/// projection reads the current face vector; keys and values read the
/// encoder's hidden sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w_q: Matrix, // attn × face
    pub w_k: Matrix, // attn × hidden
    pub w_v: Matrix, // attn × hidden
}

impl AttentionParams {
    fn zeros(face: usize, hidden: usize, attn: usize) -> Self {
        AttentionParams {
            w_q: Matrix::zeros(attn, face),
            w_k: Matrix::zeros(attn, hidden),
            w_v: Matrix::zeros(attn, hidden),
        }
    }

    fn init(face: usize, hidden: usize, attn: usize, rng: &mut Rng) -> Self {
        AttentionParams {
            w_q: xavier_init(attn, face, rng),
            w_k: xavier_init(attn, hidden, rng),
            w_v: xavier_init(attn, hidden, rng),
        }
    }
}

/// Names of the 29 parameter matrices, in enumeration order. The optimizer
/// state, the flat checkpoint payload, and the gradient checker all follow
/// this order exactly.
pub const PARAM_NAMES: [&str; 29] = [
    "encoder.face.layer1.w_in",
    "encoder.face.layer1.w_rec",
    "encoder.face.layer1.bias",
    "encoder.face.layer2.w_in",
    "encoder.face.layer2.w_rec",
    "encoder.face.layer2.bias",
    "encoder.audio.layer1.w_in",
    "encoder.audio.layer1.w_rec",
    "encoder.audio.layer1.bias",
    "encoder.audio.layer2.w_in",
    "encoder.audio.layer2.w_rec",
    "encoder.audio.layer2.bias",
    "encoder.pose.layer1.w_in",
    "encoder.pose.layer1.w_rec",
    "encoder.pose.layer1.bias",
    "encoder.pose.layer2.w_in",
    "encoder.pose.layer2.w_rec",
    "encoder.pose.layer2.bias",
    "attention.face.w_q",
    "attention.face.w_k",
    "attention.face.w_v",
    "attention.audio.w_q",
    "attention.audio.w_k",
    "attention.audio.w_v",
    "attention.pose.w_q",
    "attention.pose.w_k",
    "attention.pose.w_v",
    "fc.weight",
    "fc.bias",
];

/// Every learnable weight of the model. The same struct doubles as the
/// gradient container returned by [`backward`]: gradients use the identical
/// layout, matrix for matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub dims: FusionDims,
    pub mode: FusionMode,
    pub encoders: [EncoderParams; NUM_MODALITIES],
    pub heads: [AttentionParams; NUM_MODALITIES],
    pub fc_w: Matrix, // NUM_CLASSES × fc_input_width(mode)
    pub fc_b: Matrix, // NUM_CLASSES × 1
}

impl FusionParams {
    /// All-zero parameters (the gradient accumulator shape).
    pub fn zeros(dims: FusionDims, mode: FusionMode) -> Self {
        let enc = |m: usize| EncoderParams::zeros(dims.input_dim(m), dims.hidden);
        let head = || AttentionParams::zeros(dims.face, dims.hidden, dims.attn);
        FusionParams {
            dims,
            mode,
            encoders: [enc(0), enc(1), enc(2)],
            heads: [head(), head(), head()],
            fc_w: Matrix::zeros(NUM_CLASSES, dims.fc_input_width(mode)),
            fc_b: Matrix::zeros(NUM_CLASSES, 1),
        }
    }

    /// Xavier-initialized parameters. Weights are drawn in enumeration order
    /// from the single `rng` stream; biases start at zero and consume no
    /// draws. Encoders and heads therefore get identical initial values
    /// across modes for the same seed.
    pub fn init(dims: FusionDims, mode: FusionMode, rng: &mut Rng) -> Result<Self> {
        dims.validate()?;
        let encoders = [
            EncoderParams::init(dims.face, dims.hidden, rng),
            EncoderParams::init(dims.audio, dims.hidden, rng),
            EncoderParams::init(dims.pose, dims.hidden, rng),
        ];
        let heads = [
            AttentionParams::init(dims.face, dims.hidden, dims.attn, rng),
            AttentionParams::init(dims.face, dims.hidden, dims.attn, rng),
            AttentionParams::init(dims.face, dims.hidden, dims.attn, rng),
        ];
        Ok(FusionParams {
            dims,
            mode,
            encoders,
            heads,
            fc_w: xavier_init(NUM_CLASSES, dims.fc_input_width(mode), rng),
            fc_b: Matrix::zeros(NUM_CLASSES, 1),
        })
    }

    /// Parameter matrices in enumeration order, paired with their names.
    pub fn param_views(&self) -> Vec<(&'static str, &Matrix)> {
        let mut v: Vec<&Matrix> = Vec::with_capacity(PARAM_NAMES.len());
        for e in &self.encoders {
            for layer in [&e.layer1, &e.layer2] {
                v.push(&layer.w_in);
                v.push(&layer.w_rec);
                v.push(&layer.b);
            }
        }
        for h in &self.heads {
            v.push(&h.w_q);
            v.push(&h.w_k);
            v.push(&h.w_v);
        }
        v.push(&self.fc_w);
        v.push(&self.fc_b);
        PARAM_NAMES.iter().copied().zip(v).collect()
    }

    pub fn param_views_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let mut v: Vec<&mut Matrix> = Vec::with_capacity(PARAM_NAMES.len());
        for e in &mut self.encoders {
            for layer in [&mut e.layer1, &mut e.layer2] {
                v.push(&mut layer.w_in);
                v.push(&mut layer.w_rec);
                v.push(&mut layer.b);
            }
        }
        for h in &mut self.heads {
            v.push(&mut h.w_q);
            v.push(&mut h.w_k);
            v.push(&mut h.w_v);
        }
        v.push(&mut self.fc_w);
        v.push(&mut self.fc_b);
        PARAM_NAMES.iter().copied().zip(v).collect()
    }

    /// Total scalar parameter count.
    pub fn n_params(&self) -> usize {
        self.param_views().iter().map(|(_, m)| m.data().len()).sum()
    }

    /// Flattens all parameters into one vector, in enumeration order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (_, m) in self.param_views() {
            out.extend_from_slice(m.data());
        }
        out
    }

    /// Rebuilds parameters from a flat vector produced by [`Self::to_flat`].
    pub fn from_flat(dims: FusionDims, mode: FusionMode, flat: &[f64]) -> Result<Self> {
        let mut p = FusionParams::zeros(dims, mode);
        p.assign_flat(flat)?;
        Ok(p)
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        let need = self.n_params();
        if flat.len() != need {
            return Err(Error::shape(
                "FusionParams::assign_flat",
                format!("{} values for {need} parameters", flat.len()),
            ));
        }
        let mut offset = 0;
        for (_, m) in self.param_views_mut() {
            let n = m.data().len();
            m.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Mutable access to the flat-index-`idx` scalar, with the owning matrix
    /// name. Used by the finite-difference gradient checker.
    pub fn flat_entry_mut(&mut self, idx: usize) -> Option<(&'static str, &mut f64)> {
        let mut offset = 0;
        for (name, m) in self.param_views_mut() {
            let n = m.data().len();
            if idx < offset + n {
                return Some((name, &mut m.data_mut()[idx - offset]));
            }
            offset += n;
        }
        None
    }

    /// Element-wise `self += other`; both sides must share layout.
    pub fn accumulate(&mut self, other: &FusionParams) -> Result<()> {
        if self.dims != other.dims || self.mode != other.mode {
            return Err(Error::shape(
                "FusionParams::accumulate",
                "layout mismatch".to_string(),
            ));
        }
        let theirs = other.param_views();
        for ((_, a), (_, b)) in self.param_views_mut().into_iter().zip(theirs) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for (_, m) in self.param_views_mut() {
            m.scale(s);
        }
    }

    /// Sum of squares across all parameters (for gradient clipping).
    pub fn sq_norm(&self) -> f64 {
        self.param_views()
            .iter()
            .map(|(_, m)| m.data().iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    /// `name[rows x cols]` for each matrix, in enumeration order.
    pub fn param_order(&self) -> Vec<String> {
        self.param_views()
            .iter()
            .map(|(name, m)| format!("{name}[{}x{}]", m.rows(), m.cols()))
            .collect()
    }
}
