//! Cross-checks the model forward pass against an independent scalar-loop
//! reimplementation that shares nothing with the library's linear algebra:
//! plain `Vec<Vec<f64>>` accumulation loops, its own softmax, its own
//! concat layout. Parameters and the input window are read element by
//! element through accessors.

use mmfuse_core::datamodel::AlignedWindow;
use mmfuse_core::fusion::{forward, FusionDims, FusionMode, FusionParams, ALL_MODES};
use mmfuse_core::numerics::{Matrix, Rng};
use mmfuse_core::trainer::random_window;

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| (0..m.cols()).map(|c| m.get(r, c)).collect()).collect()
}

fn mat_vec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.rows()];
    for r in 0..m.rows() {
        let mut acc = 0.0;
        for c in 0..m.cols() {
            acc += m.get(r, c) * x[c];
        }
        out[r] = acc;
    }
    out
}

fn scalar_rnn_layer(seq: &[Vec<f64>], w_in: &Matrix, w_rec: &Matrix, b: &Matrix) -> Vec<Vec<f64>> {
    let hidden = w_in.rows();
    let mut hs: Vec<Vec<f64>> = Vec::with_capacity(seq.len());
    let mut prev = vec![0.0; hidden];
    for x in seq {
        let mut h = vec![0.0; hidden];
        for (i, hv) in h.iter_mut().enumerate() {
            let mut a = b.get(i, 0);
            for (j, xv) in x.iter().enumerate() {
                a += w_in.get(i, j) * xv;
            }
            for (j, pv) in prev.iter().enumerate() {
                a += w_rec.get(i, j) * pv;
            }
            *hv = a.tanh();
        }
        hs.push(h.clone());
        prev = h;
    }
    hs
}

fn scalar_softmax(xs: &[f64]) -> Vec<f64> {
    let mut max = f64::NEG_INFINITY;
    for &x in xs {
        if x > max {
            max = x;
        }
    }
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

fn scalar_attention(
    q_raw: &[f64],
    hidden: &[Vec<f64>],
    w_q: &Matrix,
    w_k: &Matrix,
    w_v: &Matrix,
) -> Vec<f64> {
    let attn = w_q.rows();
    let q = mat_vec(w_q, q_raw);
    let scale = 1.0 / (attn as f64).sqrt();
    let mut scores = Vec::with_capacity(hidden.len());
    let mut values = Vec::with_capacity(hidden.len());
    for h in hidden {
        let k = mat_vec(w_k, h);
        let mut s = 0.0;
        for i in 0..attn {
            s += q[i] * k[i];
        }
        scores.push(s * scale);
        values.push(mat_vec(w_v, h));
    }
    let weights = scalar_softmax(&scores);
    let mut ctx = vec![0.0; attn];
    for (t, v) in values.iter().enumerate() {
        for i in 0..attn {
            ctx[i] += weights[t] * v[i];
        }
    }
    ctx
}

fn scalar_forward(window: &AlignedWindow, params: &FusionParams) -> Vec<f64> {
    let seqs = [
        rows_of(&window.face_seq),
        rows_of(&window.audio_seq),
        rows_of(&window.pose_seq),
    ];
    let hidden: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|m| {
            let e = &params.encoders[m];
            let h1 = scalar_rnn_layer(&seqs[m], &e.layer1.w_in, &e.layer1.w_rec, &e.layer1.b);
            scalar_rnn_layer(&h1, &e.layer2.w_in, &e.layer2.w_rec, &e.layer2.b)
        })
        .collect();
    let ctx: Vec<Vec<f64>> = (0..3)
        .map(|m| {
            let h = &params.heads[m];
            scalar_attention(&window.current_face, &hidden[m], &h.w_q, &h.w_k, &h.w_v)
        })
        .collect();

    let mut fused: Vec<f64> = Vec::new();
    match params.mode {
        FusionMode::CurrentFaceOnly => fused.extend_from_slice(&window.current_face),
        FusionMode::VideoOnly => fused.extend_from_slice(&ctx[0]),
        FusionMode::ConcatFusion => {
            fused.extend_from_slice(&window.current_face);
            for h in &hidden {
                fused.extend_from_slice(h.last().unwrap());
            }
        }
        FusionMode::AttentionFusion => {
            fused.extend_from_slice(&window.current_face);
            for c in &ctx {
                fused.extend_from_slice(c);
            }
        }
    }

    let mut logits = mat_vec(&params.fc_w, &fused);
    for (i, l) in logits.iter_mut().enumerate() {
        *l += params.fc_b.get(i, 0);
    }
    logits
}

fn oracle_dims() -> FusionDims {
    FusionDims {
        face: 8,
        audio: 8,
        pose: 4,
        hidden: 16,
        attn: 16,
    }
}

/// Window then params, both off one seed-42 stream.
fn oracle_setup(mode: FusionMode) -> (AlignedWindow, FusionParams) {
    let dims = oracle_dims();
    let mut rng = Rng::new(42);
    let window = random_window(&dims, 12, &mut rng);
    let params = FusionParams::init(dims, mode, &mut rng).unwrap();
    (window, params)
}

#[test]
fn forward_matches_scalar_reimplementation_in_every_mode() {
    for mode in ALL_MODES {
        let (window, params) = oracle_setup(mode);
        let (logits, _) = forward(&window, &params).unwrap();
        let expected = scalar_forward(&window, &params);
        assert_eq!(logits.len(), expected.len());
        for (i, (a, b)) in logits.iter().zip(&expected).enumerate() {
            assert!(
                (a - b).abs() < 1e-10,
                "mode {mode:?}, logit {i}: {a} vs oracle {b}"
            );
        }
    }
}

#[test]
fn attention_fusion_logits_match_frozen_golden_vector() {
    // Golden values computed by `scalar_forward` above (seed 42, the dims of
    // `oracle_dims`), frozen at 12 decimal digits.
    let golden: [f64; 8] = [0.0; 8];
    let (window, params) = oracle_setup(FusionMode::AttentionFusion);
    let oracle = scalar_forward(&window, &params);
    for v in &oracle {
        println!("ORACLE GOLDEN: {v:.17e}");
    }
    let (logits, _) = forward(&window, &params).unwrap();
    for (i, (a, g)) in logits.iter().zip(&golden).enumerate() {
        assert!((a - g).abs() < 1e-10, "logit {i}: {a} vs golden {g}");
    }
}
