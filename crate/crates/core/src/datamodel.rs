//! Feature tracks, frame annotations, multirate alignment, and corpus I/O.
//!
//! Each video carries three feature tracks at their native rates (face
//! features per kept frame, audio features at a 500 ms hop, pose features at
//! 2 Hz). Everything is snapped onto a common 2 Hz grid, and the model input
//! is a trailing window of [`WINDOW_LEN`] grid samples per modality ending at
//! the predicted frame, plus that frame's face vector.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::parallel;
use crate::util;

pub const NUM_CLASSES: usize = 8;

/// Fixed class order; also the required header of `labels.txt`.
pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "Neutral",
    "Anger",
    "Disgust",
    "Fear",
    "Happiness",
    "Sadness",
    "Surprise",
    "Other",
];

/// Samples per aligned window (6 s of context at 2 samples/s).
pub const WINDOW_LEN: usize = 12;
/// Common grid rate all tracks are resampled to.
pub const GRID_HZ: f64 = 2.0;
pub const GRID_STEP_S: f64 = 0.5;
/// Image downsampling: one frame kept out of every five.
pub const FRAME_STRIDE: usize = 5;
/// Timestamps within this distance of a grid point count as on-grid.
pub const GRID_TOL_S: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModalityKind {
    Face,
    Audio,
    Pose,
}

pub const MODALITIES: [ModalityKind; 3] = [ModalityKind::Face, ModalityKind::Audio, ModalityKind::Pose];

impl ModalityKind {
    pub fn csv_name(self) -> &'static str {
        match self {
            ModalityKind::Face => "face.csv",
            ModalityKind::Audio => "audio.csv",
            ModalityKind::Pose => "pose.csv",
        }
    }

    pub fn index(self) -> usize {
        match self {
            ModalityKind::Face => 0,
            ModalityKind::Audio => 1,
            ModalityKind::Pose => 2,
        }
    }
}

impl fmt::Display for ModalityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModalityKind::Face => "face",
            ModalityKind::Audio => "audio",
            ModalityKind::Pose => "pose",
        };
        f.write_str(s)
    }
}

/// Feature widths per modality, as recorded in the corpus manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDims {
    pub face: usize,
    pub audio: usize,
    pub pose: usize,
}

impl Default for FeatureDims {
    fn default() -> Self {
        FeatureDims {
            face: 512,
            audio: 1024,
            pose: 50,
        }
    }
}

impl FeatureDims {
    pub fn of(&self, m: ModalityKind) -> usize {
        match m {
            ModalityKind::Face => self.face,
            ModalityKind::Audio => self.audio,
            ModalityKind::Pose => self.pose,
        }
    }
}

/// One modality's timestamped feature vectors for one video, at its native
/// rate. Timestamps are strictly increasing; every row has width `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrack {
    pub modality: ModalityKind,
    pub dim: usize,
    pub timestamps: Vec<f64>,
    pub values: Matrix,
}

impl FeatureTrack {
    pub fn new(modality: ModalityKind, timestamps: Vec<f64>, values: Matrix) -> Result<Self> {
        if values.rows() != timestamps.len() {
            return Err(Error::shape(
                "FeatureTrack::new",
                format!("{} timestamps vs {} rows", timestamps.len(), values.rows()),
            ));
        }
        for w in timestamps.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::invalid(format!(
                    "{modality} track timestamps not strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(FeatureTrack {
            modality,
            dim: values.cols(),
            timestamps,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Index of the sample nearest in time to `t`; ties pick the earlier one.
    pub fn nearest_index(&self, t: f64) -> usize {
        debug_assert!(!self.is_empty());
        let right = self.timestamps.partition_point(|&ts| ts < t);
        if right == 0 {
            return 0;
        }
        if right == self.timestamps.len() {
            return right - 1;
        }
        let left = right - 1;
        let d_left = t - self.timestamps[left];
        let d_right = self.timestamps[right] - t;
        if d_left <= d_right {
            left
        } else {
            right
        }
    }
}

/// Per-frame expression labels for one video; −1 marks an invalid annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationTrack {
    pub video_id: String,
    pub fps: f64,
    pub labels: Vec<i32>,
}

impl AnnotationTrack {
    pub fn new(video_id: String, fps: f64, labels: Vec<i32>) -> Result<Self> {
        if !(fps > 0.0) {
            return Err(Error::invalid(format!("fps must be positive, got {fps}")));
        }
        if let Some(&bad) = labels.iter().find(|&&l| !(-1..NUM_CLASSES as i32).contains(&l)) {
            return Err(Error::invalid(format!(
                "label {bad} outside -1..{}",
                NUM_CLASSES - 1
            )));
        }
        Ok(AnnotationTrack { video_id, fps, labels })
    }
}

/// All tracks and annotations for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    pub fps: f64,
    pub duration_s: f64,
    pub face: FeatureTrack,
    pub audio: FeatureTrack,
    pub pose: FeatureTrack,
    pub annotations: AnnotationTrack,
}

impl VideoRecord {
    pub fn new(
        video_id: String,
        fps: f64,
        duration_s: f64,
        face: FeatureTrack,
        audio: FeatureTrack,
        pose: FeatureTrack,
        annotations: AnnotationTrack,
    ) -> Result<Self> {
        let v = VideoRecord {
            video_id,
            fps,
            duration_s,
            face,
            audio,
            pose,
            annotations,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn track(&self, m: ModalityKind) -> &FeatureTrack {
        match m {
            ModalityKind::Face => &self.face,
            ModalityKind::Audio => &self.audio,
            ModalityKind::Pose => &self.pose,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) || !(self.duration_s > 0.0) {
            return Err(Error::invalid(format!(
                "video {}: fps and duration must be positive",
                self.video_id
            )));
        }
        for m in MODALITIES {
            if self.track(m).is_empty() {
                return Err(Error::invalid(format!(
                    "video {}: empty {m} track",
                    self.video_id
                )));
            }
        }
        let expect = self.fps * self.duration_s;
        let got = self.annotations.labels.len() as f64;
        if (got - expect).abs() > 1.0 + GRID_TOL_S {
            return Err(Error::invalid(format!(
                "video {}: {} labels inconsistent with fps*duration = {:.1}",
                self.video_id, got, expect
            )));
        }
        Ok(())
    }

    /// Label of the frame nearest to time `t` via frame-index rounding.
    pub fn label_at(&self, t: f64) -> Option<i32> {
        let idx = (t * self.fps).round();
        if idx < 0.0 || idx as usize >= self.annotations.labels.len() {
            return None;
        }
        Some(self.annotations.labels[idx as usize])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub dims: FeatureDims,
    pub videos: Vec<VideoRecord>,
}

impl Corpus {
    pub fn video(&self, id: &str) -> Option<&VideoRecord> {
        self.videos.iter().find(|v| v.video_id == id)
    }

    pub fn video_ids(&self) -> Vec<String> {
        self.videos.iter().map(|v| v.video_id.clone()).collect()
    }

    /// New corpus holding `ids` in the given order. Unknown ids are rejected.
    pub fn subset(&self, ids: &[String]) -> Result<Corpus> {
        let mut videos = Vec::with_capacity(ids.len());
        for id in ids {
            match self.video(id) {
                Some(v) => videos.push(v.clone()),
                None => return Err(Error::invalid(format!("corpus has no video '{id}'"))),
            }
        }
        Ok(Corpus {
            dims: self.dims,
            videos,
        })
    }
}

// ---------------------------------------------------------------------------
// Grid arithmetic
// ---------------------------------------------------------------------------

/// Grid index of `t` if `t` lies on the 0.5 s grid (within tolerance).
pub fn grid_index_of(t: f64) -> Option<i64> {
    let g = (t / GRID_STEP_S).round();
    if (t - g * GRID_STEP_S).abs() <= GRID_TOL_S {
        Some(g as i64)
    } else {
        None
    }
}

/// The 12 grid indices of a trailing window ending at `g_t`, left-clamped at
/// `g_min` (edge padding repeats the earliest available sample).
pub fn trailing_grid_indices(g_t: i64, g_min: i64) -> [i64; WINDOW_LEN] {
    let mut out = [0i64; WINDOW_LEN];
    for (i, o) in out.iter_mut().enumerate() {
        *o = (g_t - (WINDOW_LEN as i64 - 1) + i as i64).max(g_min);
    }
    out
}

// ---------------------------------------------------------------------------
// Operations on tracks and annotations
// ---------------------------------------------------------------------------

/// Snaps a track onto the uniform `grid_hz` grid spanning its extent. Each
/// output sample copies the input sample nearest in time (ties pick the
/// earlier sample). A track whose extent contains no grid point yields one
/// sample at the grid point nearest its first timestamp.
pub fn resample_track(track: &FeatureTrack, grid_hz: f64) -> Result<FeatureTrack> {
    if track.is_empty() {
        return Err(Error::invalid(format!("cannot resample empty {} track", track.modality)));
    }
    if !(grid_hz > 0.0) {
        return Err(Error::invalid(format!("grid rate must be positive, got {grid_hz}")));
    }
    let step = 1.0 / grid_hz;
    let t0 = track.timestamps[0];
    let t1 = *track.timestamps.last().unwrap();
    let mut g_min = ((t0 - GRID_TOL_S) / step).ceil() as i64;
    let mut g_max = ((t1 + GRID_TOL_S) / step).floor() as i64;
    if g_min > g_max {
        let g = (t0 / step).round() as i64;
        g_min = g;
        g_max = g;
    }
    let n = (g_max - g_min + 1) as usize;
    let mut timestamps = Vec::with_capacity(n);
    let mut values = Matrix::zeros(n, track.dim);
    for (i, g) in (g_min..=g_max).enumerate() {
        let t = g as f64 * step;
        timestamps.push(t);
        let src = track.nearest_index(t);
        values.row_mut(i).copy_from_slice(track.values.row(src));
    }
    FeatureTrack::new(track.modality, timestamps, values)
}

/// Indices of frames whose annotation is valid (label ≠ −1), in order.
pub fn filter_invalid(annotations: &AnnotationTrack) -> Vec<usize> {
    annotations
        .labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l != -1)
        .map(|(i, _)| i)
        .collect()
}

/// Keeps every `stride`-th element of an ordered index list, starting at the
/// first.
pub fn downsample_frames(valid_indices: &[usize], stride: usize) -> Result<Vec<usize>> {
    if stride == 0 {
        return Err(Error::invalid("frame stride must be >= 1"));
    }
    Ok(valid_indices.iter().step_by(stride).copied().collect())
}

// ---------------------------------------------------------------------------
// Aligned windows
// ---------------------------------------------------------------------------

/// Whether the context window trails the predicted frame or is centered on
/// it. The pipeline uses trailing windows; centered placement is kept as an
/// option.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPlacement {
    Trailing,
    Centered,
}

/// The model's input unit: `WINDOW_LEN` aligned grid samples per modality,
/// the current-frame face vector, and the frame label.
///
/// `grid_times` are the nominal window grid times (`t_current − 5.5 … t_current`
/// for trailing placement); where they fall before the start of a track the
/// corresponding rows repeat the earliest available sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedWindow {
    pub video_id: String,
    pub t_current: f64,
    pub grid_times: Vec<f64>,
    pub face_seq: Matrix,
    pub audio_seq: Matrix,
    pub pose_seq: Matrix,
    pub current_face: Vec<f64>,
    pub label: usize,
}

impl AlignedWindow {
    pub fn seq(&self, m: ModalityKind) -> &Matrix {
        match m {
            ModalityKind::Face => &self.face_seq,
            ModalityKind::Audio => &self.audio_seq,
            ModalityKind::Pose => &self.pose_seq,
        }
    }
}

/// Quick structural check that a track is already on the grid: endpoints on
/// grid and a sample for every grid point in between. Strict monotonicity is
/// guaranteed by construction.
fn gridded_range(track: &FeatureTrack) -> Result<(i64, i64)> {
    let err = || {
        Error::invalid(format!(
            "{} track is not resampled to the {GRID_HZ} Hz grid",
            track.modality
        ))
    };
    if track.is_empty() {
        return Err(err());
    }
    let g0 = grid_index_of(track.timestamps[0]).ok_or_else(err)?;
    let g1 = grid_index_of(*track.timestamps.last().unwrap()).ok_or_else(err)?;
    if (g1 - g0 + 1) as usize != track.len() {
        return Err(err());
    }
    Ok((g0, g1))
}

/// Resamples all three tracks of a video onto the common grid.
pub fn resample_video(video: &VideoRecord) -> Result<VideoRecord> {
    Ok(VideoRecord {
        video_id: video.video_id.clone(),
        fps: video.fps,
        duration_s: video.duration_s,
        face: resample_track(&video.face, GRID_HZ)?,
        audio: resample_track(&video.audio, GRID_HZ)?,
        pose: resample_track(&video.pose, GRID_HZ)?,
        annotations: video.annotations.clone(),
    })
}

/// Builds the trailing window ending at `t_current`. Requires a video whose
/// tracks are already on the grid (see [`resample_video`]).
pub fn build_window(video: &VideoRecord, t_current: f64) -> Result<AlignedWindow> {
    build_window_with(video, t_current, WindowPlacement::Trailing)
}

pub fn build_window_with(
    video: &VideoRecord,
    t_current: f64,
    placement: WindowPlacement,
) -> Result<AlignedWindow> {
    if t_current < -GRID_TOL_S || t_current > video.duration_s + GRID_TOL_S {
        return Err(Error::invalid(format!(
            "t_current {t_current} outside video {} (duration {})",
            video.video_id, video.duration_s
        )));
    }
    let g_t = grid_index_of(t_current).ok_or_else(|| {
        Error::invalid(format!("t_current {t_current} is not on the {GRID_HZ} Hz grid"))
    })?;
    let label = match video.label_at(t_current) {
        None => {
            return Err(Error::invalid(format!(
                "t_current {t_current} has no annotated frame in video {}",
                video.video_id
            )))
        }
        Some(-1) => {
            return Err(Error::invalid(format!(
                "invalid annotation at t_current {t_current} in video {}",
                video.video_id
            )))
        }
        Some(l) => l as usize,
    };

    // Row grid indices per placement. Trailing clamps only on the left;
    // centered clamps on both sides and places the current frame at row 6.
    let nominal: Vec<i64> = match placement {
        WindowPlacement::Trailing => (0..WINDOW_LEN as i64)
            .map(|i| g_t - (WINDOW_LEN as i64 - 1) + i)
            .collect(),
        WindowPlacement::Centered => (0..WINDOW_LEN as i64)
            .map(|i| g_t - WINDOW_LEN as i64 / 2 + i)
            .collect(),
    };

    let mut seqs: Vec<Matrix> = Vec::with_capacity(3);
    let mut current_face: Vec<f64> = Vec::new();
    for m in MODALITIES {
        let track = video.track(m);
        let (g_min, g_max) = gridded_range(track)?;
        if g_t < g_min || g_t > g_max {
            return Err(Error::invalid(format!(
                "t_current {t_current} outside the {m} track of video {} ({}..{})",
                video.video_id,
                g_min as f64 * GRID_STEP_S,
                g_max as f64 * GRID_STEP_S
            )));
        }
        let mut seq = Matrix::zeros(WINDOW_LEN, track.dim);
        for (i, &g) in nominal.iter().enumerate() {
            let clamped = g.clamp(g_min, g_max);
            seq.row_mut(i)
                .copy_from_slice(track.values.row((clamped - g_min) as usize));
        }
        if m == ModalityKind::Face {
            current_face = track.values.row((g_t - g_min) as usize).to_vec();
        }
        seqs.push(seq);
    }
    let pose_seq = seqs.pop().unwrap();
    let audio_seq = seqs.pop().unwrap();
    let face_seq = seqs.pop().unwrap();

    Ok(AlignedWindow {
        video_id: video.video_id.clone(),
        t_current: g_t as f64 * GRID_STEP_S,
        grid_times: nominal.iter().map(|&g| g as f64 * GRID_STEP_S).collect(),
        face_seq,
        audio_seq,
        pose_seq,
        current_face,
        label,
    })
}

/// Times at which windows can be built: frames that are valid, survive the
/// 1-in-[`FRAME_STRIDE`] downsampling, land on the grid, and are covered by
/// every (gridded) track.
pub fn window_anchors(video: &VideoRecord) -> Result<Vec<f64>> {
    let mut ranges = Vec::with_capacity(3);
    for m in MODALITIES {
        ranges.push(gridded_range(video.track(m))?);
    }
    let valid = filter_invalid(&video.annotations);
    let kept = downsample_frames(&valid, FRAME_STRIDE)?;
    let mut anchors = Vec::new();
    for idx in kept {
        let t = idx as f64 / video.fps;
        if let Some(g) = grid_index_of(t) {
            if ranges.iter().all(|&(lo, hi)| g >= lo && g <= hi) {
                anchors.push(g as f64 * GRID_STEP_S);
            }
        }
    }
    Ok(anchors)
}

/// Resamples a raw video and builds every available window.
pub fn extract_windows(video: &VideoRecord) -> Result<Vec<AlignedWindow>> {
    let gridded = resample_video(video)?;
    let anchors = window_anchors(&gridded)?;
    anchors.iter().map(|&t| build_window(&gridded, t)).collect()
}

/// All windows of a corpus, video by video. Videos are processed in parallel
/// when the `parallel` feature is on; output order is independent of that.
pub fn corpus_windows(corpus: &Corpus) -> Result<Vec<AlignedWindow>> {
    let per_video = parallel::map_slice(&corpus.videos, extract_windows);
    let mut out = Vec::new();
    for ws in per_video {
        out.extend(ws?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Corpus directory I/O
//
// Layout:
//   manifest.json                  {"videos":[{"id","fps","duration_s"}],
//                                   "dims":{"face","audio","pose"}}
//   <id>/face.csv|audio.csv|pose.csv   lines "timestamp,v1,...,vD"
//   <id>/labels.txt                class-name header, then one label per frame
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestVideo {
    id: String,
    fps: f64,
    duration_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CorpusManifest {
    videos: Vec<ManifestVideo>,
    dims: FeatureDims,
}

fn parse_track_csv(path: &Path, modality: ModalityKind, dim: usize) -> Result<FeatureTrack> {
    let text = util::read_to_string(path)?;
    let mut timestamps = Vec::new();
    let mut data = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let ts: f64 = fields
            .next()
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::parse(path, Some(lineno), "bad timestamp"))?;
        let mut width = 0usize;
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(path, Some(lineno), format!("bad float '{f}'")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, Some(lineno), "non-finite feature value"));
            }
            data.push(v);
            width += 1;
        }
        if width != dim {
            return Err(Error::parse(
                path,
                Some(lineno),
                format!("row has {width} values, manifest declares dim {dim}"),
            ));
        }
        if let Some(&prev) = timestamps.last() {
            if !(ts > prev) {
                return Err(Error::parse(
                    path,
                    Some(lineno),
                    format!("timestamps not strictly increasing: {prev} then {ts}"),
                ));
            }
        }
        timestamps.push(ts);
    }
    if timestamps.is_empty() {
        return Err(Error::parse(path, None, "empty feature track"));
    }
    let n = timestamps.len();
    FeatureTrack::new(modality, timestamps, Matrix::from_vec(n, dim, data)?)
}

fn parse_labels(path: &Path, video_id: &str, fps: f64) -> Result<AnnotationTrack> {
    let text = util::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let expect = CLASS_NAMES.join(",");
    if header != expect {
        return Err(Error::parse(
            path,
            Some(1),
            format!("label header must be '{expect}'"),
        ));
    }
    let mut labels = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let lineno = lineno + 2;
        if line.is_empty() {
            continue;
        }
        let l: i32 = line
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, Some(lineno), format!("bad label '{line}'")))?;
        if !(-1..NUM_CLASSES as i32).contains(&l) {
            return Err(Error::parse(
                path,
                Some(lineno),
                format!("label {l} outside -1..{}", NUM_CLASSES - 1),
            ));
        }
        labels.push(l);
    }
    AnnotationTrack::new(video_id.to_string(), fps, labels)
}

pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let manifest_path = dir.join("manifest.json");
    let manifest: CorpusManifest = serde_json::from_str(&util::read_to_string(&manifest_path)?)
        .map_err(|e| Error::json(&manifest_path, e))?;
    let mut videos = Vec::with_capacity(manifest.videos.len());
    for mv in &manifest.videos {
        let vdir = dir.join(&mv.id);
        let face = parse_track_csv(&vdir.join("face.csv"), ModalityKind::Face, manifest.dims.face)?;
        let audio = parse_track_csv(&vdir.join("audio.csv"), ModalityKind::Audio, manifest.dims.audio)?;
        let pose = parse_track_csv(&vdir.join("pose.csv"), ModalityKind::Pose, manifest.dims.pose)?;
        let annotations = parse_labels(&vdir.join("labels.txt"), &mv.id, mv.fps)?;
        videos.push(VideoRecord::new(
            mv.id.clone(),
            mv.fps,
            mv.duration_s,
            face,
            audio,
            pose,
            annotations,
        )?);
    }
    Ok(Corpus {
        dims: manifest.dims,
        videos,
    })
}

fn track_to_csv(track: &FeatureTrack) -> String {
    let mut out = String::new();
    for i in 0..track.len() {
        out.push_str(&format!("{}", track.timestamps[i]));
        for v in track.values.row(i) {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    util::create_dir_all(dir)?;
    let manifest = CorpusManifest {
        videos: corpus
            .videos
            .iter()
            .map(|v| ManifestVideo {
                id: v.video_id.clone(),
                fps: v.fps,
                duration_s: v.duration_s,
            })
            .collect(),
        dims: corpus.dims,
    };
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&manifest_path, e))?;
    util::write_atomic(&manifest_path, format!("{json}\n").as_bytes())?;

    for v in &corpus.videos {
        let vdir = dir.join(&v.video_id);
        util::create_dir_all(&vdir)?;
        for m in MODALITIES {
            util::write_atomic(&vdir.join(m.csv_name()), track_to_csv(v.track(m)).as_bytes())?;
        }
        let mut labels = CLASS_NAMES.join(",");
        labels.push('\n');
        for l in &v.annotations.labels {
            labels.push_str(&format!("{l}\n"));
        }
        util::write_atomic(&vdir.join("labels.txt"), labels.as_bytes())?;
    }
    Ok(())
}
