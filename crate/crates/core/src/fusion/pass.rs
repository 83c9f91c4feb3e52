//! Forward and backward passes.
//!
//! The forward pass records every intermediate it produces into a
//! [`ForwardCache`]; [`backward`] replays the graph in reverse from that
//! cache and returns exact gradients for every parameter, with untouched
//! parameters (those a mode never uses) left at exactly zero.

use crate::datamodel::{AlignedWindow, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::numerics::{
    add_assign_slice, axpy, dot, softmax, softmax_backward, tanh_bwd, tanh_fwd, Matrix,
};

use super::{AttentionParams, FusionDims, FusionMode, FusionParams, RnnLayerParams, NUM_MODALITIES};

/// Intermediates of one encoder: the input sequence and both hidden
/// sequences (T × hidden each).
#[derive(Debug, Clone)]
pub struct EncoderCache {
    pub x: Matrix,
    pub h1: Matrix,
    pub h2: Matrix,
}

/// Intermediates of one attention head.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub query: Vec<f64>,
    pub keys: Matrix,   // T × attn
    pub values: Matrix, // T × attn
    pub scores: Vec<f64>,
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
}

/// Everything [`backward`] needs to compute gradients without recomputation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub mode: FusionMode,
    pub dims: FusionDims,
    pub current_face: Vec<f64>,
    pub encoders: [Option<EncoderCache>; NUM_MODALITIES],
    pub attention: [Option<AttentionCache>; NUM_MODALITIES],
    pub fused: Vec<f64>,
    pub logits: Vec<f64>,
}

/// One Elman layer over a sequence: `h_t = tanh(w_in·x_t + w_rec·h_{t−1} + b)`
/// with `h_0 = 0`. Returns the T × hidden sequence.
pub fn rnn_layer_forward(seq: &Matrix, layer: &RnnLayerParams) -> Result<Matrix> {
    let t_len = seq.rows();
    if t_len == 0 {
        return Err(Error::invalid("rnn over empty sequence"));
    }
    let hidden = layer.hidden();
    if layer.w_in.cols() != seq.cols() || layer.w_rec.rows() != hidden || layer.w_rec.cols() != hidden
    {
        return Err(Error::shape(
            "rnn_layer_forward",
            format!(
                "seq {}x{}, w_in {}x{}, w_rec {}x{}",
                seq.rows(),
                seq.cols(),
                layer.w_in.rows(),
                layer.w_in.cols(),
                layer.w_rec.rows(),
                layer.w_rec.cols()
            ),
        ));
    }
    let mut h = Matrix::zeros(t_len, hidden);
    let mut prev = vec![0.0; hidden];
    for t in 0..t_len {
        let mut a = layer.w_in.matvec(seq.row(t))?;
        let rec = layer.w_rec.matvec(&prev)?;
        add_assign_slice(&mut a, &rec);
        add_assign_slice(&mut a, layer.b.data());
        for (hv, av) in h.row_mut(t).iter_mut().zip(&a) {
            *hv = tanh_fwd(*av);
        }
        prev.copy_from_slice(h.row(t));
    }
    Ok(h)
}

/// Two stacked layers; layer 2 consumes layer 1's full hidden sequence.
/// Returns (layer-2 sequence, layer-1 sequence).
pub fn rnn_forward(
    seq: &Matrix,
    layer1: &RnnLayerParams,
    layer2: &RnnLayerParams,
) -> Result<(Matrix, Matrix)> {
    let h1 = rnn_layer_forward(seq, layer1)?;
    let h2 = rnn_layer_forward(&h1, layer2)?;
    Ok((h2, h1))
}

/// Scaled dot-product cross-attention of a raw query vector against a hidden
/// sequence: `q = w_q·q_raw`, `k_t = w_k·h_t`, `v_t = w_v·h_t`,
/// `s_t = q·k_t / √A`, `w = softmax(s)`, `context = Σ w_t v_t`.
pub fn cross_attention(
    q_raw: &[f64],
    hidden: &Matrix,
    params: &AttentionParams,
) -> Result<AttentionCache> {
    let t_len = hidden.rows();
    if t_len == 0 {
        return Err(Error::invalid("attention over empty sequence"));
    }
    let attn = params.w_q.rows();
    let query = params.w_q.matvec(q_raw)?;
    let mut keys = Matrix::zeros(t_len, attn);
    let mut values = Matrix::zeros(t_len, attn);
    let mut scores = Vec::with_capacity(t_len);
    let scale = 1.0 / (attn as f64).sqrt();
    for t in 0..t_len {
        let k = params.w_k.matvec(hidden.row(t))?;
        let v = params.w_v.matvec(hidden.row(t))?;
        scores.push(dot(&query, &k) * scale);
        keys.row_mut(t).copy_from_slice(&k);
        values.row_mut(t).copy_from_slice(&v);
    }
    let weights = softmax(&scores)?;
    let mut context = vec![0.0; attn];
    for t in 0..t_len {
        axpy(&mut context, weights[t], values.row(t));
    }
    Ok(AttentionCache {
        query,
        keys,
        values,
        scores,
        weights,
        context,
    })
}

fn check_window(window: &AlignedWindow, dims: &FusionDims) -> Result<usize> {
    let t_len = window.face_seq.rows();
    if t_len == 0 {
        return Err(Error::invalid("window has no rows"));
    }
    if window.audio_seq.rows() != t_len || window.pose_seq.rows() != t_len {
        return Err(Error::shape(
            "forward",
            format!(
                "sequence lengths differ: face {}, audio {}, pose {}",
                t_len,
                window.audio_seq.rows(),
                window.pose_seq.rows()
            ),
        ));
    }
    for (name, got, want) in [
        ("face", window.face_seq.cols(), dims.face),
        ("audio", window.audio_seq.cols(), dims.audio),
        ("pose", window.pose_seq.cols(), dims.pose),
        ("current_face", window.current_face.len(), dims.face),
    ] {
        if got != want {
            return Err(Error::shape(
                "forward",
                format!("{name} width {got}, model expects {want}"),
            ));
        }
    }
    Ok(t_len)
}

/// Which encoders / heads a mode runs, in modality order.
fn mode_uses(mode: FusionMode) -> ([bool; NUM_MODALITIES], [bool; NUM_MODALITIES]) {
    match mode {
        FusionMode::CurrentFaceOnly => ([false; 3], [false; 3]),
        FusionMode::VideoOnly => ([true, false, false], [true, false, false]),
        FusionMode::ConcatFusion => ([true; 3], [false; 3]),
        FusionMode::AttentionFusion => ([true; 3], [true; 3]),
    }
}

/// Full forward pass. Returns the 8 class logits and the cache for
/// [`backward`].
pub fn forward(window: &AlignedWindow, params: &FusionParams) -> Result<(Vec<f64>, ForwardCache)> {
    let dims = params.dims;
    let t_len = check_window(window, &dims)?;
    let (enc_used, attn_used) = mode_uses(params.mode);

    let seqs = [&window.face_seq, &window.audio_seq, &window.pose_seq];
    let mut encoders: [Option<EncoderCache>; NUM_MODALITIES] = [None, None, None];
    let mut attention: [Option<AttentionCache>; NUM_MODALITIES] = [None, None, None];
    for m in 0..NUM_MODALITIES {
        if !enc_used[m] {
            continue;
        }
        let enc = &params.encoders[m];
        let (h2, h1) = rnn_forward(seqs[m], &enc.layer1, &enc.layer2)?;
        if attn_used[m] {
            attention[m] = Some(cross_attention(&window.current_face, &h2, &params.heads[m])?);
        }
        encoders[m] = Some(EncoderCache {
            x: seqs[m].clone(),
            h1,
            h2,
        });
    }

    let mut fused: Vec<f64> = Vec::with_capacity(dims.fc_input_width(params.mode));
    match params.mode {
        FusionMode::CurrentFaceOnly => fused.extend_from_slice(&window.current_face),
        FusionMode::VideoOnly => {
            fused.extend_from_slice(&attention[0].as_ref().unwrap().context)
        }
        FusionMode::ConcatFusion => {
            fused.extend_from_slice(&window.current_face);
            for enc in encoders.iter().flatten() {
                fused.extend_from_slice(enc.h2.row(t_len - 1));
            }
        }
        FusionMode::AttentionFusion => {
            fused.extend_from_slice(&window.current_face);
            for att in attention.iter().flatten() {
                fused.extend_from_slice(&att.context);
            }
        }
    }
    if fused.len() != params.fc_w.cols() {
        return Err(Error::shape(
            "forward",
            format!(
                "fused width {} vs fc input {} (mode {})",
                fused.len(),
                params.fc_w.cols(),
                params.mode.key()
            ),
        ));
    }

    let mut logits = params.fc_w.matvec(&fused)?;
    add_assign_slice(&mut logits, params.fc_b.data());

    let cache = ForwardCache {
        mode: params.mode,
        dims,
        current_face: window.current_face.clone(),
        encoders,
        attention,
        fused,
        logits: logits.clone(),
    };
    Ok((logits, cache))
}

/// Argmax of the logits; ties resolve to the lowest class index.
pub fn predict(window: &AlignedWindow, params: &FusionParams) -> Result<usize> {
    let (logits, _) = forward(window, params)?;
    Ok(argmax(&logits))
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Backward through one Elman layer. `x`/`h` are the cached input and hidden
/// sequences, `dh` the gradient arriving at every hidden step. Accumulates
/// parameter gradients into `grad` and returns dL/dx.
fn rnn_layer_backward(
    x: &Matrix,
    h: &Matrix,
    layer: &RnnLayerParams,
    dh: &Matrix,
    grad: &mut RnnLayerParams,
) -> Result<Matrix> {
    let t_len = h.rows();
    let hidden = layer.hidden();
    let mut dx = Matrix::zeros(t_len, x.cols());
    let mut carry = vec![0.0; hidden];
    for t in (0..t_len).rev() {
        // total gradient at h_t: direct + through h_{t+1}
        let mut da: Vec<f64> = dh.row(t).to_vec();
        add_assign_slice(&mut da, &carry);
        for (i, d) in da.iter_mut().enumerate() {
            *d = tanh_bwd(h.get(t, i), *d);
        }
        add_assign_slice(grad.b.data_mut(), &da);
        grad.w_in.add_outer(&da, x.row(t))?;
        if t > 0 {
            grad.w_rec.add_outer(&da, h.row(t - 1))?;
        }
        carry = layer.w_rec.matvec_t(&da)?;
        dx.row_mut(t).copy_from_slice(&layer.w_in.matvec_t(&da)?);
    }
    Ok(dx)
}

/// Backward through one attention head. Accumulates parameter gradients and
/// returns dL/dh2 (T × hidden). The query-side gradient flows only into w_q;
/// the raw query is an input feature, not a parameter.
fn attention_backward(
    cache: &AttentionCache,
    q_raw: &[f64],
    h2: &Matrix,
    params: &AttentionParams,
    d_ctx: &[f64],
    grad: &mut AttentionParams,
) -> Result<Matrix> {
    let t_len = h2.rows();
    let attn = params.w_q.rows();
    let scale = 1.0 / (attn as f64).sqrt();

    let mut d_weights = vec![0.0; t_len];
    for t in 0..t_len {
        // context = Σ w_t v_t
        d_weights[t] = dot(d_ctx, cache.values.row(t));
        let dv: Vec<f64> = d_ctx.iter().map(|d| d * cache.weights[t]).collect();
        grad.w_v.add_outer(&dv, h2.row(t))?;
    }
    let d_scores = softmax_backward(&cache.weights, &d_weights);

    let mut d_query = vec![0.0; attn];
    let mut dh2 = Matrix::zeros(t_len, h2.cols());
    for t in 0..t_len {
        axpy(&mut d_query, d_scores[t] * scale, cache.keys.row(t));
        let dk: Vec<f64> = cache.query.iter().map(|q| q * d_scores[t] * scale).collect();
        grad.w_k.add_outer(&dk, h2.row(t))?;

        // dL/dh2_t through keys and values
        let from_k = params.w_k.matvec_t(&dk)?;
        let dv: Vec<f64> = d_ctx.iter().map(|d| d * cache.weights[t]).collect();
        let from_v = params.w_v.matvec_t(&dv)?;
        let row = dh2.row_mut(t);
        for (o, (a, b)) in row.iter_mut().zip(from_k.iter().zip(&from_v)) {
            *o = a + b;
        }
    }
    grad.w_q.add_outer(&d_query, q_raw)?;
    Ok(dh2)
}

/// Exact gradients of every parameter by backpropagation through time, given
/// the upstream gradient at the logits. The cache must come from a forward
/// pass with the same mode and dims; parameters are not modified.
pub fn backward(
    cache: &ForwardCache,
    params: &FusionParams,
    grad_logits: &[f64],
) -> Result<FusionParams> {
    if cache.mode != params.mode || cache.dims != params.dims {
        return Err(Error::invalid(
            "forward cache does not match these parameters (mode or dims differ)",
        ));
    }
    if grad_logits.len() != NUM_CLASSES {
        return Err(Error::shape(
            "backward",
            format!("grad_logits has length {}, expected {NUM_CLASSES}", grad_logits.len()),
        ));
    }
    let dims = params.dims;
    let mut grads = FusionParams::zeros(dims, params.mode);

    // FC layer
    grads.fc_w.add_outer(grad_logits, &cache.fused)?;
    add_assign_slice(grads.fc_b.data_mut(), grad_logits);
    let d_fused = params.fc_w.matvec_t(grad_logits)?;

    // Split d_fused according to the mode's concat layout, then run each
    // used head/encoder backward. Gradient into current_face is dropped:
    // it is an input, not a parameter.
    let (enc_used, _) = mode_uses(params.mode);
    let mut d_h2: [Option<Matrix>; NUM_MODALITIES] = [None, None, None];
    match params.mode {
        FusionMode::CurrentFaceOnly => {}
        FusionMode::VideoOnly => {
            let ac = cache.attention[0].as_ref().ok_or_else(stale_cache)?;
            let ec = cache.encoders[0].as_ref().ok_or_else(stale_cache)?;
            d_h2[0] = Some(attention_backward(
                ac,
                &cache.current_face,
                &ec.h2,
                &params.heads[0],
                &d_fused,
                &mut grads.heads[0],
            )?);
        }
        FusionMode::ConcatFusion => {
            let mut off = dims.face;
            for m in 0..NUM_MODALITIES {
                let ec = cache.encoders[m].as_ref().ok_or_else(stale_cache)?;
                let t_len = ec.h2.rows();
                let mut dh = Matrix::zeros(t_len, dims.hidden);
                dh.row_mut(t_len - 1)
                    .copy_from_slice(&d_fused[off..off + dims.hidden]);
                d_h2[m] = Some(dh);
                off += dims.hidden;
            }
        }
        FusionMode::AttentionFusion => {
            let mut off = dims.face;
            for m in 0..NUM_MODALITIES {
                let ac = cache.attention[m].as_ref().ok_or_else(stale_cache)?;
                let ec = cache.encoders[m].as_ref().ok_or_else(stale_cache)?;
                d_h2[m] = Some(attention_backward(
                    ac,
                    &cache.current_face,
                    &ec.h2,
                    &params.heads[m],
                    &d_fused[off..off + dims.attn],
                    &mut grads.heads[m],
                )?);
                off += dims.attn;
            }
        }
    }

    for m in 0..NUM_MODALITIES {
        if !enc_used[m] {
            continue;
        }
        let ec = cache.encoders[m].as_ref().ok_or_else(stale_cache)?;
        let dh2 = d_h2[m].take().ok_or_else(stale_cache)?;
        let dh1 = rnn_layer_backward(
            &ec.h1,
            &ec.h2,
            &params.encoders[m].layer2,
            &dh2,
            &mut grads.encoders[m].layer2,
        )?;
        rnn_layer_backward(
            &ec.x,
            &ec.h1,
            &params.encoders[m].layer1,
            &dh1,
            &mut grads.encoders[m].layer1,
        )?;
    }

    Ok(grads)
}

fn stale_cache() -> Error {
    Error::invalid("forward cache is missing intermediates for this mode (stale cache?)")
}
