//! Corpus tooling: 5-fold re-splitting, train/validation overlap removal,
//! and a deterministic synthetic multimodal corpus generator.
//!
//! The generator plants a cross-modal signal: each video is segmented into
//! latent blocks per modality, and under [`SignalRule::CrossModal`] a frame's
//! class combines one bit read off the current face vector with one bit each
//! from the trailing 6 s means of audio channel 0 and pose channel 0 — the
//! exact statistics a trailing attention window can recover but a single
//! frame cannot. Labels are computed from the clean signals with the same
//! window arithmetic the model uses; noise is then added to the features.

use serde::{Deserialize, Serialize};

use crate::datamodel::{
    trailing_grid_indices, AnnotationTrack, Corpus, FeatureDims, FeatureTrack, ModalityKind,
    VideoRecord, FRAME_STRIDE, GRID_STEP_S, NUM_CLASSES, WINDOW_LEN,
};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};
use crate::parallel;
use crate::util;
use std::path::Path;

/// Frame rate of generated videos.
pub const SYNTH_FPS: f64 = 30.0;

// Grid points sit every `SYNTH_FPS / GRID_HZ` = 15 frames.
const FRAMES_PER_GRID: f64 = 15.0;

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

/// One train/validation split over video ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub name: String,
    #[serde(rename = "train")]
    pub train_ids: Vec<String>,
    #[serde(rename = "val")]
    pub val_ids: Vec<String>,
}

impl SplitSpec {
    pub fn validate_against(&self, corpus_ids: &[String]) -> Result<()> {
        for id in self.train_ids.iter().chain(&self.val_ids) {
            if !corpus_ids.contains(id) {
                return Err(Error::invalid(format!(
                    "split '{}' references unknown video '{id}'",
                    self.name
                )));
            }
        }
        if self.train_ids.iter().any(|id| self.val_ids.contains(id)) {
            return Err(Error::invalid(format!(
                "split '{}' has overlapping train/val ids",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitsFile {
    pub splits: Vec<SplitSpec>,
}

impl SplitsFile {
    pub fn find(&self, name: &str) -> Result<&SplitSpec> {
        self.splits.iter().find(|s| s.name == name).ok_or_else(|| {
            let known: Vec<&str> = self.splits.iter().map(|s| s.name.as_str()).collect();
            Error::invalid(format!(
                "no split named '{name}' (available: {})",
                known.join(", ")
            ))
        })
    }
}

pub fn save_splits(splits: &SplitsFile, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(splits).map_err(|e| Error::json(path, e))?;
    util::write_atomic(path, format!("{json}\n").as_bytes())
}

pub fn load_splits(path: &Path) -> Result<SplitsFile> {
    serde_json::from_str(&util::read_to_string(path)?).map_err(|e| Error::json(path, e))
}

/// Removes every id that also appears in train from the validation list;
/// train is untouched.
pub fn dedup_overlap(train_ids: &[String], val_ids: &[String]) -> Vec<String> {
    val_ids
        .iter()
        .filter(|id| !train_ids.contains(id))
        .cloned()
        .collect()
}

/// Seeded k-fold split at video granularity. Fold sizes differ by at most
/// one (the first `n mod k` folds take the extra element); split *i* uses
/// fold *i* for validation and the rest for training.
pub fn make_kfold(ids: &[String], k: usize, seed: u64) -> Result<Vec<SplitSpec>> {
    if k < 2 {
        return Err(Error::invalid(format!("k must be >= 2, got {k}")));
    }
    if ids.len() < k {
        return Err(Error::invalid(format!(
            "need at least {k} ids for {k} folds, got {}",
            ids.len()
        )));
    }
    for (i, id) in ids.iter().enumerate() {
        if ids[..i].contains(id) {
            return Err(Error::invalid(format!("duplicate id '{id}'")));
        }
    }
    let mut shuffled = ids.to_vec();
    Rng::new(seed).shuffle(&mut shuffled);

    let base = shuffled.len() / k;
    let rem = shuffled.len() % k;
    let mut folds: Vec<Vec<String>> = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < rem);
        folds.push(shuffled[start..start + size].to_vec());
        start += size;
    }

    Ok((0..k)
        .map(|i| {
            let mut train = Vec::with_capacity(shuffled.len() - folds[i].len());
            for (j, fold) in folds.iter().enumerate() {
                if j != i {
                    train.extend(fold.iter().cloned());
                }
            }
            SplitSpec {
                name: format!("Split{}", i + 1),
                train_ids: train,
                val_ids: folds[i].clone(),
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Synthetic corpus generation
// ---------------------------------------------------------------------------

/// How frame labels are derived from the planted signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalRule {
    /// label = 4·face_bit + 2·audio_bit + pose_bit, where face_bit is the
    /// argmax of the current face vector's first two components and the
    /// audio/pose bits are signs of the trailing 6 s channel-0 means.
    CrossModal,
    /// label = argmax of the current face vector's first eight components.
    FaceOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_videos: usize,
    pub duration_s: f64,
    pub dims: FeatureDims,
    pub signal_rule: SignalRule,
    pub noise_std: f64,
    pub label_balance: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_videos: 40,
            duration_s: 20.0,
            dims: FeatureDims {
                face: 16,
                audio: 12,
                pose: 8,
            },
            signal_rule: SignalRule::CrossModal,
            noise_std: 0.5,
            label_balance: false,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_videos == 0 {
            return Err(Error::invalid("n_videos must be >= 1"));
        }
        if self.duration_s < 6.0 {
            return Err(Error::invalid(format!(
                "duration_s must be >= 6 (one full window), got {}",
                self.duration_s
            )));
        }
        if self.noise_std < 0.0 {
            return Err(Error::invalid("noise_std must be >= 0"));
        }
        let min_face = match self.signal_rule {
            SignalRule::CrossModal => 2,
            SignalRule::FaceOnly => NUM_CLASSES,
        };
        if self.dims.face < min_face {
            return Err(Error::invalid(format!(
                "face dim must be >= {min_face} for this signal rule"
            )));
        }
        if self.dims.audio == 0 || self.dims.pose == 0 {
            return Err(Error::invalid("audio and pose dims must be >= 1"));
        }
        Ok(())
    }
}

/// Constant-on-segments series of `n` values; segment lengths are drawn
/// uniformly from `min_len..=max_len` grid points.
fn piecewise<T: Copy>(
    n: usize,
    min_len: usize,
    max_len: usize,
    rng: &mut Rng,
    mut draw: impl FnMut(&mut Rng) -> T,
) -> Vec<T> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let len = min_len + rng.below(max_len - min_len + 1);
        let v = draw(rng);
        for _ in 0..len {
            if out.len() == n {
                break;
            }
            out.push(v);
        }
    }
    out
}

/// Mean of the trailing window ending at grid point `m`, with the same
/// left-edge clamping the model's windows use.
fn trailing_mean(series: &[f64], m: usize) -> f64 {
    let idxs = trailing_grid_indices(m as i64, 0);
    idxs.iter().map(|&g| series[g as usize]).sum::<f64>() / WINDOW_LEN as f64
}

fn pm_one(rng: &mut Rng) -> f64 {
    if rng.below(2) == 0 {
        -1.0
    } else {
        1.0
    }
}

/// One synthetic video. RNG draws happen in a fixed order — face, audio, and
/// pose segmentations, then noise over face, audio, pose tracks — from a
/// substream of (seed, index), so per-video generation can run in parallel
/// without changing output.
fn synth_video(cfg: &SynthConfig, idx: usize) -> Result<VideoRecord> {
    let mut rng = Rng::substream(cfg.seed, idx as u64);
    let n_frames = (cfg.duration_s * SYNTH_FPS).round() as usize;
    let n_grid = (n_frames - 1) / FRAMES_PER_GRID as usize + 1;

    let face_classes = match cfg.signal_rule {
        SignalRule::CrossModal => 2,
        SignalRule::FaceOnly => NUM_CLASSES,
    };
    // Face blocks are short (1–3 s): the face bit is read instantaneously.
    // Audio/pose blocks span at least one full window (6–10 s) so trailing
    // means settle inside each block.
    let face_lat: Vec<usize> = piecewise(n_grid, 2, 6, &mut rng, |r| r.below(face_classes));
    let audio_lat: Vec<f64> = piecewise(n_grid, 12, 20, &mut rng, pm_one);
    let pose_lat: Vec<f64> = piecewise(n_grid, 12, 20, &mut rng, pm_one);

    let grid_labels: Vec<usize> = (0..n_grid)
        .map(|m| match cfg.signal_rule {
            SignalRule::FaceOnly => face_lat[m],
            SignalRule::CrossModal => {
                let audio_bit = usize::from(trailing_mean(&audio_lat, m) > 0.0);
                let pose_bit = usize::from(trailing_mean(&pose_lat, m) > 0.0);
                4 * face_lat[m] + 2 * audio_bit + pose_bit
            }
        })
        .collect();

    let grid_of_frame = |k: usize| ((k as f64 / FRAMES_PER_GRID).round() as usize).min(n_grid - 1);

    // Face track: one sample per kept frame (every 5th of 30 fps).
    let face_frames: Vec<usize> = (0..n_frames).step_by(FRAME_STRIDE).collect();
    let mut face_vals = Matrix::zeros(face_frames.len(), cfg.dims.face);
    for (row, &k) in face_frames.iter().enumerate() {
        let lat = face_lat[grid_of_frame(k)];
        match cfg.signal_rule {
            SignalRule::CrossModal => {
                face_vals.set(row, lat, 1.0);
                face_vals.set(row, 1 - lat, 0.25);
            }
            SignalRule::FaceOnly => {
                for j in 0..NUM_CLASSES {
                    face_vals.set(row, j, if j == lat { 1.0 } else { 0.25 });
                }
            }
        }
    }
    let face_times: Vec<f64> = face_frames.iter().map(|&k| k as f64 / SYNTH_FPS).collect();

    // Audio and pose tracks: natively on the 2 Hz grid, channel 0 carries
    // the latent, the remaining channels are pure noise.
    let grid_times: Vec<f64> = (0..n_grid).map(|m| m as f64 * GRID_STEP_S).collect();
    let mut audio_vals = Matrix::zeros(n_grid, cfg.dims.audio);
    let mut pose_vals = Matrix::zeros(n_grid, cfg.dims.pose);
    for m in 0..n_grid {
        audio_vals.set(m, 0, audio_lat[m]);
        pose_vals.set(m, 0, pose_lat[m]);
    }

    for vals in [&mut face_vals, &mut audio_vals, &mut pose_vals] {
        for v in vals.data_mut() {
            *v += rng.normal(0.0, cfg.noise_std);
        }
    }

    let labels: Vec<i32> = (0..n_frames)
        .map(|k| grid_labels[grid_of_frame(k)] as i32)
        .collect();

    let id = format!("v{idx:04}");
    VideoRecord::new(
        id.clone(),
        SYNTH_FPS,
        cfg.duration_s,
        FeatureTrack::new(ModalityKind::Face, face_times, face_vals)?,
        FeatureTrack::new(ModalityKind::Audio, grid_times.clone(), audio_vals)?,
        FeatureTrack::new(ModalityKind::Pose, grid_times, pose_vals)?,
        AnnotationTrack::new(id, SYNTH_FPS, labels)?,
    )
}

/// Marks surplus frames invalid (label −1) so every class keeps exactly the
/// same number of valid frames corpus-wide.
fn balance_labels(videos: &mut [VideoRecord]) -> Result<()> {
    let mut counts = [0usize; NUM_CLASSES];
    for v in videos.iter() {
        for &l in &v.annotations.labels {
            counts[l as usize] += 1;
        }
    }
    if let Some(absent) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!(
            "class {absent} never occurs; increase n_videos or duration_s before balancing"
        )));
    }
    let target = *counts.iter().min().unwrap();
    let mut kept = [0usize; NUM_CLASSES];
    for v in videos.iter_mut() {
        for l in &mut v.annotations.labels {
            let c = *l as usize;
            if kept[c] < target {
                kept[c] += 1;
            } else {
                *l = -1;
            }
        }
    }
    Ok(())
}

/// Generates the full corpus; per-video work fans out in parallel when the
/// feature is on.
pub fn generate_synthetic_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let results = parallel::map_range(cfg.n_videos, |i| synth_video(cfg, i));
    assemble(cfg, results)
}

/// Sequential twin of [`generate_synthetic_corpus`].
pub fn generate_synthetic_corpus_seq(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let results = parallel::map_range_seq(cfg.n_videos, |i| synth_video(cfg, i));
    assemble(cfg, results)
}

fn assemble(cfg: &SynthConfig, results: Vec<Result<VideoRecord>>) -> Result<Corpus> {
    let mut videos = Vec::with_capacity(results.len());
    for r in results {
        videos.push(r?);
    }
    if cfg.label_balance {
        balance_labels(&mut videos)?;
    }
    Ok(Corpus {
        dims: cfg.dims,
        videos,
    })
}

/// Re-evaluates the planted rule on a window's (possibly noisy) features.
/// On a noise-free corpus this reproduces the window label exactly.
pub fn planted_rule_label(window: &crate::datamodel::AlignedWindow, rule: SignalRule) -> usize {
    let argmax = |xs: &[f64]| {
        let mut best = 0;
        for (i, &v) in xs.iter().enumerate().skip(1) {
            if v > xs[best] {
                best = i;
            }
        }
        best
    };
    match rule {
        SignalRule::FaceOnly => argmax(&window.current_face[..NUM_CLASSES]),
        SignalRule::CrossModal => {
            let face_bit = argmax(&window.current_face[..2]);
            let mean = |m: &Matrix| {
                (0..m.rows()).map(|r| m.get(r, 0)).sum::<f64>() / m.rows() as f64
            };
            let audio_bit = usize::from(mean(&window.audio_seq) > 0.0);
            let pose_bit = usize::from(mean(&window.pose_seq) > 0.0);
            4 * face_bit + 2 * audio_bit + pose_bit
        }
    }
}
