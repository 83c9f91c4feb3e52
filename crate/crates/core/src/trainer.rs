//! Cross-entropy loss, AdamW with decoupled weight decay, reduce-on-plateau
//! learning-rate scheduling, the epoch loop, and finite-difference gradient
//! verification.
//!
//! Determinism contract: given the same seed and config, training is
//! bit-reproducible. Parameter init and epoch shuffling draw from separate
//! substreams of the seed, per-sample gradients inside a batch are reduced
//! in index order (regardless of whether they were computed in parallel),
//! and the single trainer owns all parameter mutation.

use serde::{Deserialize, Serialize};

use crate::datamodel::{corpus_windows, AlignedWindow, Corpus, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::fusion::{backward, forward, FusionDims, FusionMode, FusionParams};
use crate::metrics::EvalReport;
use crate::numerics::{log_sum_exp, softmax, Rng};
use crate::parallel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    AdamW,
    Sgd,
}

/// Training hyperparameters. `Default` carries the reference values
/// (lr 0.02, plateau ×0.5 with patience 2, batch 4, weight decay 0.05).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub optimizer: OptimizerKind,
    /// Optional global-norm gradient clipping; off by default.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.02,
            weight_decay: 0.05,
            batch_size: 4,
            max_epochs: 30,
            plateau_patience: 2,
            plateau_factor: 0.5,
            seed: 42,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            optimizer: OptimizerKind::AdamW,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::invalid(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::invalid(format!(
                "plateau_factor must be in (0, 1), got {}",
                self.plateau_factor
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.plateau_patience == 0 {
            return Err(Error::invalid("plateau_patience must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateauState {
    pub best_f1: f64,
    pub epochs_since_improve: usize,
}

/// Adam moment buffers (flat, in parameter enumeration order) plus the
/// current learning rate and plateau bookkeeping.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub current_lr: f64,
    pub plateau: PlateauState,
}

impl OptimizerState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        OptimizerState {
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            current_lr: lr,
            plateau: PlateauState {
                best_f1: f64::NEG_INFINITY,
                epochs_since_improve: 0,
            },
        }
    }
}

/// Softmax cross-entropy. Returns the loss and dL/dlogits
/// (`softmax(logits) − onehot(label)`).
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::invalid(format!(
            "label {label} out of range for {} logits",
            logits.len()
        )));
    }
    let lse = log_sum_exp(logits);
    let loss = lse - logits[label];
    let mut grad = softmax(logits)?;
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// One optimizer step: bias-corrected Adam plus decoupled decay,
/// `θ ← θ − lr·(m̂/(√v̂+ε) + wd·θ)`; or plain SGD with the same decoupled
/// decay when configured.
pub fn adamw_step(
    params: &mut FusionParams,
    grads: &FusionParams,
    state: &mut OptimizerState,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.dims != grads.dims || params.mode != grads.mode {
        return Err(Error::shape("adamw_step", "gradient layout mismatch"));
    }
    let n = params.n_params();
    if state.m.len() != n || state.v.len() != n {
        return Err(Error::shape(
            "adamw_step",
            format!("moment buffers sized {} for {n} parameters", state.m.len()),
        ));
    }
    state.step += 1;
    let lr = state.current_lr;
    let wd = cfg.weight_decay;
    let grad_views = grads.param_views();
    let mut offset = 0usize;
    match cfg.optimizer {
        OptimizerKind::AdamW => {
            let bc1 = 1.0 - cfg.beta1.powf(state.step as f64);
            let bc2 = 1.0 - cfg.beta2.powf(state.step as f64);
            for ((_, p), (_, g)) in params.param_views_mut().into_iter().zip(grad_views) {
                for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                    let m = &mut state.m[offset];
                    let v = &mut state.v[offset];
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gv;
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gv * gv;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *pv -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + wd * *pv);
                    offset += 1;
                }
            }
        }
        OptimizerKind::Sgd => {
            for ((_, p), (_, g)) in params.param_views_mut().into_iter().zip(grad_views) {
                for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                    *pv -= lr * (gv + wd * *pv);
                }
            }
        }
    }
    Ok(())
}

/// Reduce-on-plateau: a strict improvement of the tracked metric resets the
/// counter; once the counter reaches the patience, the learning rate is
/// multiplied by the plateau factor and the counter resets.
pub fn plateau_update(state: &mut OptimizerState, val_f1: f64, cfg: &TrainConfig) -> Result<()> {
    if !(0.0..=1.0).contains(&val_f1) {
        return Err(Error::invalid(format!("val_f1 {val_f1} outside [0, 1]")));
    }
    if val_f1 > state.plateau.best_f1 {
        state.plateau.best_f1 = val_f1;
        state.plateau.epochs_since_improve = 0;
    } else {
        state.plateau.epochs_since_improve += 1;
        if state.plateau.epochs_since_improve >= cfg.plateau_patience {
            state.current_lr *= cfg.plateau_factor;
            state.plateau.epochs_since_improve = 0;
        }
    }
    Ok(())
}

/// Loss and gradients for a single window.
pub fn sample_gradients(
    params: &FusionParams,
    window: &AlignedWindow,
) -> Result<(FusionParams, f64)> {
    let (logits, cache) = forward(window, params)?;
    let (loss, grad_logits) = cross_entropy(&logits, window.label)?;
    let grads = backward(&cache, params, &grad_logits)?;
    Ok((grads, loss))
}

fn reduce_batch(
    per_sample: Vec<Result<(FusionParams, f64)>>,
    dims: FusionDims,
    mode: FusionMode,
) -> Result<(FusionParams, f64)> {
    let n = per_sample.len();
    let mut grads = FusionParams::zeros(dims, mode);
    let mut loss = 0.0;
    // fixed reduction order: sample index order
    for r in per_sample {
        let (g, l) = r?;
        grads.accumulate(&g)?;
        loss += l;
    }
    grads.scale(1.0 / n as f64);
    Ok((grads, loss / n as f64))
}

/// Mean gradients and loss over `batch` (indices into `windows`). Per-sample
/// passes run in parallel when the feature is on; the reduction is always in
/// index order, so the result is identical either way.
pub fn batch_gradients(
    params: &FusionParams,
    windows: &[AlignedWindow],
    batch: &[usize],
) -> Result<(FusionParams, f64)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let per_sample = parallel::map_slice(batch, |&i| sample_gradients(params, &windows[i]));
    reduce_batch(per_sample, params.dims, params.mode)
}

/// Sequential twin of [`batch_gradients`]; the baseline side of the benches.
pub fn batch_gradients_seq(
    params: &FusionParams,
    windows: &[AlignedWindow],
    batch: &[usize],
) -> Result<(FusionParams, f64)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let per_sample = parallel::map_slice_seq(batch, |&i| sample_gradients(params, &windows[i]));
    reduce_batch(per_sample, params.dims, params.mode)
}

pub fn predict_windows(params: &FusionParams, windows: &[AlignedWindow]) -> Result<Vec<usize>> {
    parallel::map_slice(windows, |w| crate::fusion::predict(w, params))
        .into_iter()
        .collect()
}

pub fn predict_windows_seq(params: &FusionParams, windows: &[AlignedWindow]) -> Result<Vec<usize>> {
    parallel::map_slice_seq(windows, |w| crate::fusion::predict(w, params))
        .into_iter()
        .collect()
}

/// Runs the model over `windows` and scores predictions against the window
/// labels.
pub fn evaluate(params: &FusionParams, windows: &[AlignedWindow]) -> Result<EvalReport> {
    let preds = predict_windows(params, windows)?;
    let labels: Vec<usize> = windows.iter().map(|w| w.label).collect();
    EvalReport::from_preds(&preds, &labels)
}

pub fn evaluate_seq(params: &FusionParams, windows: &[AlignedWindow]) -> Result<EvalReport> {
    let preds = predict_windows_seq(params, windows)?;
    let labels: Vec<usize> = windows.iter().map(|w| w.label).collect();
    EvalReport::from_preds(&preds, &labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
    pub lr: f64,
}

pub fn history_to_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,val_macro_f1,lr\n");
    for e in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.epoch, e.train_loss, e.val_macro_f1, e.lr
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation macro-F1 (the
    /// initial parameters when no epoch ran).
    pub params: FusionParams,
    pub history: Vec<EpochStats>,
}

/// Epoch loop over pre-built windows. Parameter init draws from substream 0
/// of the seed, epoch shuffling from substream 1.
pub fn fit(
    train_windows: &[AlignedWindow],
    val_windows: &[AlignedWindow],
    dims: FusionDims,
    mode: FusionMode,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    dims.validate()?;
    if train_windows.is_empty() {
        return Err(Error::invalid("training set has no windows"));
    }
    if val_windows.is_empty() {
        return Err(Error::invalid("validation set has no windows"));
    }

    let mut params = FusionParams::init(dims, mode, &mut Rng::substream(cfg.seed, 0))?;
    let mut state = OptimizerState::new(params.n_params(), cfg.lr);
    let mut shuffle_rng = Rng::substream(cfg.seed, 1);
    let mut history = Vec::with_capacity(cfg.max_epochs);
    let mut best: Option<(f64, FusionParams)> = None;

    for epoch in 1..=cfg.max_epochs {
        let lr_used = state.current_lr;
        let mut order: Vec<usize> = (0..train_windows.len()).collect();
        shuffle_rng.shuffle(&mut order);

        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (mut grads, mean_loss) = batch_gradients(&params, train_windows, batch)?;
            loss_sum += mean_loss * batch.len() as f64;
            if let Some(max_norm) = cfg.grad_clip {
                let norm = grads.sq_norm().sqrt();
                if norm > max_norm {
                    grads.scale(max_norm / norm);
                }
            }
            adamw_step(&mut params, &grads, &mut state, cfg)?;
        }
        let train_loss = loss_sum / train_windows.len() as f64;

        let val_f1 = evaluate(&params, val_windows)?.macro_f1;
        if best.as_ref().map_or(true, |(b, _)| val_f1 > *b) {
            best = Some((val_f1, params.clone()));
        }
        plateau_update(&mut state, val_f1, cfg)?;
        history.push(EpochStats {
            epoch,
            train_loss,
            val_macro_f1: val_f1,
            lr: lr_used,
        });
    }

    Ok(TrainOutcome {
        params: best.map(|(_, p)| p).unwrap_or(params),
        history,
    })
}

/// Corpus-level entry point: validates the split, builds all windows, and
/// runs [`fit`]. `hidden`/`attn` come with `dims`; the feature widths must
/// match both corpora.
pub fn train(
    corpus_train: &Corpus,
    corpus_val: &Corpus,
    dims: FusionDims,
    mode: FusionMode,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if corpus_train.videos.is_empty() || corpus_val.videos.is_empty() {
        return Err(Error::invalid("train and validation corpora must be non-empty"));
    }
    let train_ids = corpus_train.video_ids();
    let overlapping: Vec<String> = corpus_val
        .video_ids()
        .into_iter()
        .filter(|id| train_ids.contains(id))
        .collect();
    if !overlapping.is_empty() {
        return Err(Error::invalid(format!(
            "video ids appear in both train and validation: {}",
            overlapping.join(", ")
        )));
    }
    for c in [corpus_train, corpus_val] {
        if c.dims.face != dims.face || c.dims.audio != dims.audio || c.dims.pose != dims.pose {
            return Err(Error::shape(
                "train",
                format!(
                    "corpus dims ({}, {}, {}) do not match model dims ({}, {}, {})",
                    c.dims.face, c.dims.audio, c.dims.pose, dims.face, dims.audio, dims.pose
                ),
            ));
        }
    }
    let train_windows = corpus_windows(corpus_train)?;
    let val_windows = corpus_windows(corpus_val)?;
    fit(&train_windows, &val_windows, dims, mode, cfg)
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct GradCheckOutcome {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub n_params: usize,
}

/// A random window with uniform features in [−1, 1]; the gradcheck input.
pub fn random_window(dims: &FusionDims, t_len: usize, rng: &mut Rng) -> AlignedWindow {
    use crate::numerics::Matrix;
    let fill = |rows: usize, cols: usize, rng: &mut Rng| {
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Matrix::from_vec(rows, cols, data).expect("finite by construction")
    };
    let face_seq = fill(t_len, dims.face, rng);
    let current_face = face_seq.row(t_len - 1).to_vec();
    AlignedWindow {
        video_id: "gradcheck".into(),
        t_current: (t_len - 1) as f64 * 0.5,
        grid_times: (0..t_len).map(|i| i as f64 * 0.5).collect(),
        face_seq,
        audio_seq: fill(t_len, dims.audio, rng),
        pose_seq: fill(t_len, dims.pose, rng),
        current_face,
        label: rng.below(NUM_CLASSES),
    }
}

fn loss_of(params: &FusionParams, window: &AlignedWindow) -> Result<f64> {
    let (logits, _) = forward(window, params)?;
    Ok(cross_entropy(&logits, window.label)?.0)
}

/// Checks every parameter's analytic gradient against central finite
/// differences (h = 1e-5) on one random window. The relative error uses a
/// small floor in the denominator so that finite-difference noise on
/// near-zero gradients is compared on an absolute scale.
pub fn gradient_check(
    dims: FusionDims,
    mode: FusionMode,
    t_len: usize,
    seed: u64,
) -> Result<GradCheckOutcome> {
    if t_len == 0 {
        return Err(Error::invalid("gradient check needs t_len >= 1"));
    }
    let mut rng = Rng::new(seed);
    let window = random_window(&dims, t_len, &mut rng);
    let params = FusionParams::init(dims, mode, &mut rng)?;

    let (logits, cache) = forward(&window, &params)?;
    let (_, grad_logits) = cross_entropy(&logits, window.label)?;
    let analytic = backward(&cache, &params, &grad_logits)?.to_flat();

    let h = 1e-5;
    let mut trial = params.clone();
    let mut max_rel = 0.0f64;
    let mut worst = String::from("-");
    let n = analytic.len();
    for idx in 0..n {
        let (name, orig) = {
            let (name, v) = trial.flat_entry_mut(idx).expect("index in range");
            (name, *v)
        };
        {
            let (_, v) = trial.flat_entry_mut(idx).unwrap();
            *v = orig + h;
        }
        let up = loss_of(&trial, &window)?;
        {
            let (_, v) = trial.flat_entry_mut(idx).unwrap();
            *v = orig - h;
        }
        let down = loss_of(&trial, &window)?;
        {
            let (_, v) = trial.flat_entry_mut(idx).unwrap();
            *v = orig;
        }
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[idx].abs().max(numeric.abs()).max(1e-5);
        let rel = (analytic[idx] - numeric).abs() / denom;
        if rel > max_rel {
            max_rel = rel;
            worst = format!("{name}[{idx}]");
        }
    }
    Ok(GradCheckOutcome {
        max_rel_err: max_rel,
        worst_param: worst,
        n_params: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dims() -> FusionDims {
        FusionDims {
            face: 4,
            audio: 5,
            pose: 3,
            hidden: 6,
            attn: 6,
        }
    }

    fn windows(n: usize, seed: u64) -> Vec<AlignedWindow> {
        let mut rng = Rng::new(seed);
        let d = dims();
        (0..n).map(|_| random_window(&d, 12, &mut rng)).collect()
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln8() {
        let (loss, grad) = cross_entropy(&[1.5; NUM_CLASSES], 3).unwrap();
        assert_abs_diff_eq!(loss, (NUM_CLASSES as f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(loss, 2.079442, epsilon = 1e-6);
        assert_abs_diff_eq!(grad[3], 1.0 / 8.0 - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(grad[0], 1.0 / 8.0, epsilon = 1e-12);
    }

    #[test]
    fn cross_entropy_saturates_when_true_class_dominates() {
        let mut logits = [0.0; NUM_CLASSES];
        logits[5] = 30.0;
        let (loss, _) = cross_entropy(&logits, 5).unwrap();
        assert!(loss < 1e-9, "loss = {loss}");
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = Rng::new(13);
        let h = 1e-5;
        for _ in 0..20 {
            let logits: Vec<f64> = (0..NUM_CLASSES).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let label = rng.below(NUM_CLASSES);
            let (_, grad) = cross_entropy(&logits, label).unwrap();
            let mut numeric = vec![0.0; NUM_CLASSES];
            for (i, n) in numeric.iter_mut().enumerate() {
                let mut lp = logits.clone();
                lp[i] += h;
                let up = cross_entropy(&lp, label).unwrap().0;
                lp[i] -= 2.0 * h;
                let down = cross_entropy(&lp, label).unwrap().0;
                *n = (up - down) / (2.0 * h);
            }
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let diff: Vec<f64> = grad.iter().zip(&numeric).map(|(a, n)| a - n).collect();
            let rel = norm(&diff) / norm(&grad).max(norm(&numeric));
            assert!(rel < 1e-8, "rel={rel} grad={grad:?} numeric={numeric:?}");
        }
    }

    #[test]
    fn cross_entropy_rejects_out_of_range_label() {
        assert!(cross_entropy(&[0.0; 8], 8).is_err());
    }

    #[test]
    fn adamw_zero_gradient_zero_decay_is_identity() {
        let d = dims();
        let mut p = FusionParams::init(d, FusionMode::ConcatFusion, &mut Rng::new(1)).unwrap();
        let before = p.to_flat();
        let g = FusionParams::zeros(d, FusionMode::ConcatFusion);
        let mut state = OptimizerState::new(p.n_params(), 0.02);
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        adamw_step(&mut p, &g, &mut state, &cfg).unwrap();
        assert_eq!(p.to_flat(), before);
    }

    #[test]
    fn adamw_pure_decay_multiplies_by_one_minus_lr_wd() {
        // g = 0, wd = 0.05, lr = 0.02 → θ ← θ·(1 − 0.001)
        let d = dims();
        let mut p = FusionParams::init(d, FusionMode::ConcatFusion, &mut Rng::new(2)).unwrap();
        let before = p.to_flat();
        let g = FusionParams::zeros(d, FusionMode::ConcatFusion);
        let mut state = OptimizerState::new(p.n_params(), 0.02);
        let cfg = TrainConfig::default();
        adamw_step(&mut p, &g, &mut state, &cfg).unwrap();
        for (after, b) in p.to_flat().iter().zip(&before) {
            assert_abs_diff_eq!(*after, 0.999 * b, epsilon = 1e-15);
        }
    }

    #[test]
    fn adamw_first_step_moves_by_lr_times_sign() {
        let d = dims();
        let mut p = FusionParams::init(d, FusionMode::ConcatFusion, &mut Rng::new(3)).unwrap();
        let before = p.to_flat();
        let mut g = FusionParams::zeros(d, FusionMode::ConcatFusion);
        let flat: Vec<f64> = (0..g.n_params())
            .map(|i| if i % 2 == 0 { 0.7 } else { -0.3 })
            .collect();
        g.assign_flat(&flat).unwrap();
        let mut state = OptimizerState::new(p.n_params(), 0.02);
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        adamw_step(&mut p, &g, &mut state, &cfg).unwrap();
        for ((after, b), gv) in p.to_flat().iter().zip(&before).zip(&flat) {
            let delta = after - b;
            assert_abs_diff_eq!(delta, -0.02 * gv.signum(), epsilon = 1e-9);
        }
    }

    #[test]
    fn sgd_step_is_plain_decoupled_descent() {
        let d = dims();
        let mut p = FusionParams::init(d, FusionMode::CurrentFaceOnly, &mut Rng::new(4)).unwrap();
        let before = p.to_flat();
        let mut g = FusionParams::zeros(d, FusionMode::CurrentFaceOnly);
        let flat = vec![0.5; g.n_params()];
        g.assign_flat(&flat).unwrap();
        let mut state = OptimizerState::new(p.n_params(), 0.1);
        let cfg = TrainConfig {
            optimizer: OptimizerKind::Sgd,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        adamw_step(&mut p, &g, &mut state, &cfg).unwrap();
        for (after, b) in p.to_flat().iter().zip(&before) {
            assert_abs_diff_eq!(*after, b - 0.1 * 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn plateau_improving_history_keeps_lr() {
        let cfg = TrainConfig::default();
        let mut s = OptimizerState::new(1, 0.02);
        for f1 in [0.30, 0.31, 0.32] {
            plateau_update(&mut s, f1, &cfg).unwrap();
        }
        assert_eq!(s.current_lr, 0.02);
    }

    #[test]
    fn plateau_halves_after_two_non_improving_epochs() {
        let cfg = TrainConfig::default();
        let mut s = OptimizerState::new(1, 0.02);
        for f1 in [0.30, 0.30, 0.29] {
            plateau_update(&mut s, f1, &cfg).unwrap();
        }
        assert_eq!(s.current_lr, 0.01);
    }

    #[test]
    fn plateau_four_stalls_quarter_lr() {
        let cfg = TrainConfig::default();
        let mut s = OptimizerState::new(1, 0.02);
        plateau_update(&mut s, 0.30, &cfg).unwrap();
        for _ in 0..4 {
            plateau_update(&mut s, 0.25, &cfg).unwrap();
        }
        assert_eq!(s.current_lr, 0.005);
    }

    #[test]
    fn lr_after_k_halvings_is_binary_exact() {
        let cfg = TrainConfig::default();
        let mut s = OptimizerState::new(1, 0.02);
        plateau_update(&mut s, 0.5, &cfg).unwrap();
        for k in 1..=20u32 {
            plateau_update(&mut s, 0.1, &cfg).unwrap();
            plateau_update(&mut s, 0.1, &cfg).unwrap();
            assert_eq!(s.current_lr, 0.02 * 0.5f64.powi(k as i32));
        }
    }

    #[test]
    fn plateau_rejects_out_of_range_metric() {
        let cfg = TrainConfig::default();
        let mut s = OptimizerState::new(1, 0.02);
        assert!(plateau_update(&mut s, 1.5, &cfg).is_err());
    }

    #[test]
    fn fit_zero_epochs_returns_initialized_params() {
        let ws = windows(8, 5);
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let out = fit(&ws[..6], &ws[6..], dims(), FusionMode::AttentionFusion, &cfg).unwrap();
        assert!(out.history.is_empty());
        let expect =
            FusionParams::init(dims(), FusionMode::AttentionFusion, &mut Rng::substream(cfg.seed, 0))
                .unwrap();
        assert_eq!(out.params, expect);
    }

    #[test]
    fn fit_same_seed_is_bit_identical() {
        let ws = windows(10, 6);
        let cfg = TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let a = fit(&ws[..8], &ws[8..], dims(), FusionMode::ConcatFusion, &cfg).unwrap();
        let b = fit(&ws[..8], &ws[8..], dims(), FusionMode::ConcatFusion, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(history_to_csv(&a.history), history_to_csv(&b.history));
    }

    #[test]
    fn returned_params_hit_the_best_recorded_val_f1() {
        let ws = windows(14, 7);
        let cfg = TrainConfig {
            max_epochs: 5,
            ..TrainConfig::default()
        };
        let (train_w, val_w) = ws.split_at(10);
        let out = fit(train_w, val_w, dims(), FusionMode::AttentionFusion, &cfg).unwrap();
        let best_recorded = out
            .history
            .iter()
            .map(|e| e.val_macro_f1)
            .fold(f64::NEG_INFINITY, f64::max);
        let rescored = evaluate(&out.params, val_w).unwrap().macro_f1;
        assert_eq!(rescored, best_recorded);
    }

    #[test]
    fn gradient_accumulation_is_order_invariant() {
        let ws = windows(6, 8);
        let params = FusionParams::init(dims(), FusionMode::AttentionFusion, &mut Rng::new(9)).unwrap();
        let per: Vec<FusionParams> = ws
            .iter()
            .map(|w| sample_gradients(&params, w).unwrap().0)
            .collect();
        let mut fwd = FusionParams::zeros(dims(), FusionMode::AttentionFusion);
        for g in &per {
            fwd.accumulate(g).unwrap();
        }
        let mut rev = FusionParams::zeros(dims(), FusionMode::AttentionFusion);
        for g in per.iter().rev() {
            rev.accumulate(g).unwrap();
        }
        for (a, b) in fwd.to_flat().iter().zip(rev.to_flat()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn parallel_and_sequential_batches_agree_exactly() {
        let ws = windows(8, 10);
        let params = FusionParams::init(dims(), FusionMode::AttentionFusion, &mut Rng::new(11)).unwrap();
        let batch: Vec<usize> = (0..ws.len()).collect();
        let (gp, lp) = batch_gradients(&params, &ws, &batch).unwrap();
        let (gs, ls) = batch_gradients_seq(&params, &ws, &batch).unwrap();
        assert_eq!(gp, gs);
        assert_eq!(lp, ls);
    }

    #[test]
    fn tiny_step_does_not_increase_loss() {
        let ws = windows(4, 12);
        let params = FusionParams::init(dims(), FusionMode::AttentionFusion, &mut Rng::new(13)).unwrap();
        let batch: Vec<usize> = (0..ws.len()).collect();
        let (grads, loss_before) = batch_gradients(&params, &ws, &batch).unwrap();
        let mut stepped = params.clone();
        let mut state = OptimizerState::new(params.n_params(), 1e-6);
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        adamw_step(&mut stepped, &grads, &mut state, &cfg).unwrap();
        let (_, loss_after) = batch_gradients(&stepped, &ws, &batch).unwrap();
        assert!(loss_after <= loss_before + 1e-9, "{loss_before} -> {loss_after}");
    }

    #[test]
    fn gradient_check_passes_on_one_small_case() {
        let out = gradient_check(dims(), FusionMode::AttentionFusion, 3, 99).unwrap();
        assert!(out.max_rel_err < 1e-4, "max rel err {} at {}", out.max_rel_err, out.worst_param);
    }

    #[test]
    fn train_rejects_overlapping_ids() {
        use crate::datamodel::{FeatureDims, FeatureTrack, AnnotationTrack, ModalityKind, VideoRecord};
        use crate::numerics::Matrix;
        let mk = |id: &str| {
            let times: Vec<f64> = (0..17).map(|i| i as f64 * 0.5).collect();
            let vals = Matrix::from_vec(17, 1, vec![0.25; 17]).unwrap();
            let track = |m: ModalityKind| FeatureTrack::new(m, times.clone(), vals.clone()).unwrap();
            VideoRecord::new(
                id.to_string(),
                2.0,
                8.0,
                track(ModalityKind::Face),
                track(ModalityKind::Audio),
                track(ModalityKind::Pose),
                AnnotationTrack::new(id.to_string(), 2.0, vec![0; 17]).unwrap(),
            )
            .unwrap()
        };
        let corpus = Corpus {
            dims: FeatureDims { face: 1, audio: 1, pose: 1 },
            videos: vec![mk("a"), mk("b")],
        };
        let same = corpus.subset(&["a".into()]).unwrap();
        let d = FusionDims {
            face: 1,
            audio: 1,
            pose: 1,
            hidden: 2,
            attn: 2,
        };
        let err = train(&corpus, &same, d, FusionMode::CurrentFaceOnly, &TrainConfig::default());
        assert!(err.is_err());
    }
}
