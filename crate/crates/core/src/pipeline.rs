//! End-to-end measurement: frames in, report out.
//!
//! Each view is averaged, outlier-filled, masked and rounded to whole
//! millimeters. The back frame is then aligned to the front, both become
//! denoised clouds, the clouds are merged with the configured gap, and the
//! merged cloud is sliced into the volume report.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::circumference::CircumferenceConfig;
use crate::error::{Error, Result};
use crate::filtering::{average_frames, denoise_cloud, fill_outliers, mask_background, DenoiseConfig, OutlierFillConfig};
use crate::frame::DepthFrame;
use crate::reconstruct::{calibrate_gap, frame_to_cloud, merge_front_back, PointCloud, ViewTag};
use crate::registration::{align_back_to_front, NccMode, DEFAULT_MAX_SHIFT};
use crate::volumetry::{measure_volume, MeasurementReport, REPORT_SCHEMA_VERSION};

/// Every tunable of the pipeline. Missing fields in a config file take
/// their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Overrides the frames' own scale when set.
    pub mm_per_pixel: Option<f64>,
    pub outlier: OutlierFillConfig,
    pub near_mm: f64,
    pub far_mm: f64,
    pub align_back: bool,
    pub max_shift_px: usize,
    pub ncc_mode: NccMode,
    pub denoise: DenoiseConfig,
    pub gap_mm: f64,
    pub dy_mm: f64,
    pub prominence_fraction: f64,
    pub circumference: CircumferenceConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mm_per_pixel: None,
            outlier: OutlierFillConfig::default(),
            near_mm: 500.0,
            far_mm: 1500.0,
            align_back: true,
            max_shift_px: DEFAULT_MAX_SHIFT,
            ncc_mode: NccMode::default(),
            denoise: DenoiseConfig::default(),
            gap_mm: 0.0,
            dy_mm: 5.0,
            prominence_fraction: 0.5,
            circumference: CircumferenceConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.outlier.validate()?;
        self.denoise.validate()?;
        if !(self.near_mm > 0.0 && self.near_mm < self.far_mm) {
            return Err(Error::InvalidConfig("need 0 < near_mm < far_mm".into()));
        }
        if !(self.gap_mm.is_finite() && self.gap_mm >= 0.0) {
            return Err(Error::InvalidConfig("gap_mm must be >= 0".into()));
        }
        if !(self.dy_mm > 0.0) {
            return Err(Error::InvalidConfig("dy_mm must be positive".into()));
        }
        if !(self.prominence_fraction > 0.0 && self.prominence_fraction <= 1.0) {
            return Err(Error::InvalidConfig("prominence_fraction must be in (0, 1]".into()));
        }
        if let Some(s) = self.mm_per_pixel {
            if !(s > 0.0) {
                return Err(Error::InvalidConfig("mm_per_pixel must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    /// Names of the fields whose values differ between two configs.
    pub fn differing_fields(&self, other: &PipelineConfig) -> Vec<String> {
        let a = serde_json::to_value(self).unwrap_or_default();
        let b = serde_json::to_value(other).unwrap_or_default();
        let mut out = Vec::new();
        diff_values("", &a, &b, &mut out);
        out
    }
}

fn diff_values(prefix: &str, a: &serde_json::Value, b: &serde_json::Value, out: &mut Vec<String>) {
    match (a, b) {
        (serde_json::Value::Object(x), serde_json::Value::Object(y)) => {
            for (k, va) in x {
                let name = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                match y.get(k) {
                    Some(vb) => diff_values(&name, va, vb, out),
                    None => out.push(name),
                }
            }
        }
        _ if a != b => out.push(prefix.to_string()),
        _ => {}
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessed {
    pub frame: DepthFrame,
    pub replaced: usize,
    pub all_outlier_columns: Vec<usize>,
}

fn rescale(frame: &DepthFrame, scale: Option<f64>) -> Result<DepthFrame> {
    match scale {
        Some(s) if s != frame.mm_per_pixel() => {
            DepthFrame::new(frame.width(), frame.height(), frame.samples().to_vec(), s)
        }
        _ => Ok(frame.clone()),
    }
}

/// Mask each capture, average, fill outliers, mask again and round to whole
/// millimeters. Masking first keeps out-of-range returns out of the average.
pub fn preprocess_view(frames: &[DepthFrame], cfg: &PipelineConfig) -> Result<Preprocessed> {
    let frames = frames
        .iter()
        .map(|f| mask_background(&rescale(f, cfg.mm_per_pixel)?, cfg.near_mm, cfg.far_mm))
        .collect::<Result<Vec<_>>>()?;
    let avg = average_frames(&frames)?;
    let filled = fill_outliers(&avg, &cfg.outlier)?;
    let masked = mask_background(&filled.frame, cfg.near_mm, cfg.far_mm)?;
    Ok(Preprocessed {
        frame: masked.quantized(),
        replaced: filled.replaced,
        all_outlier_columns: filled.all_outlier_columns,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergedViews {
    pub cloud: PointCloud,
    pub back_shift: (i64, i64),
    pub front_points: usize,
    pub back_points: usize,
}

fn denoised_views(front: &DepthFrame, back: &DepthFrame, cfg: &PipelineConfig) -> Result<(PointCloud, PointCloud, (i64, i64))> {
    cfg.validate()?;
    let (back, back_shift) = if cfg.align_back {
        let a = align_back_to_front(front, back, cfg.max_shift_px)?;
        (a.frame, a.shift)
    } else {
        (back.clone(), (0, 0))
    };
    let f = denoise_cloud(&frame_to_cloud(front, ViewTag::Front)?, &cfg.denoise)?;
    let b = denoise_cloud(&frame_to_cloud(&back, ViewTag::Back)?, &cfg.denoise)?;
    Ok((f, b, back_shift))
}

/// Aligns the back frame to the front, converts both to denoised clouds and
/// merges them with `cfg.gap_mm`.
pub fn merge_views(front: &DepthFrame, back: &DepthFrame, cfg: &PipelineConfig) -> Result<MergedViews> {
    let (f, b, back_shift) = denoised_views(front, back, cfg)?;
    let cloud = merge_front_back(&f, &b, cfg.gap_mm)?;
    Ok(MergedViews {
        cloud,
        back_shift,
        front_points: f.len(),
        back_points: b.len(),
    })
}

/// Gap that makes the merged depth of a reference pair equal `thickness_mm`.
///
/// The frames go through the same alignment and denoising as in
/// [`merge_views`], so points lost at the silhouette rim are accounted for.
/// Calibrate once on a reference body of known thickness and keep the
/// result fixed for every later session.
pub fn calibrate_gap_frames(front: &DepthFrame, back: &DepthFrame, thickness_mm: f64, cfg: &PipelineConfig) -> Result<f64> {
    let (f, b, _) = denoised_views(front, back, cfg)?;
    calibrate_gap(&f, &b, thickness_mm)
}

/// Short stable identifier of a cloud: the first 16 hex digits of the
/// SHA-256 of its coordinates.
pub fn session_id_for(cloud: &PointCloud) -> String {
    let mut h = Sha256::new();
    for p in cloud.points() {
        h.update(p.x.to_le_bytes());
        h.update(p.y.to_le_bytes());
        h.update(p.z.to_le_bytes());
    }
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReportOptions {
    /// Leave the timestamp out so identical inputs give identical bytes.
    pub deterministic: bool,
    pub session_id: Option<String>,
}

pub fn volume_report(cloud: &PointCloud, cfg: &PipelineConfig, opts: &ReportOptions) -> Result<MeasurementReport> {
    cfg.validate()?;
    let (profile, bounds, volume) = measure_volume(cloud, cfg.dy_mm, cfg.prominence_fraction)?;
    Ok(MeasurementReport {
        schema_version: REPORT_SCHEMA_VERSION,
        volume_liters: volume.liters,
        bounds,
        profile,
        degenerate_warning: volume.degenerate_warning,
        parameters: cfg.clone(),
        timestamp: (!opts.deterministic).then(|| chrono::Utc::now().to_rfc3339()),
        session_id: opts.session_id.clone().unwrap_or_else(|| session_id_for(cloud)),
    })
}

/// The whole two-view pipeline on raw captures.
pub fn measure_two_view(
    front_frames: &[DepthFrame],
    back_frames: &[DepthFrame],
    cfg: &PipelineConfig,
    opts: &ReportOptions,
) -> Result<MeasurementReport> {
    cfg.validate()?;
    let front = preprocess_view(front_frames, cfg)?;
    let back = preprocess_view(back_frames, cfg)?;
    let merged = merge_views(&front.frame, &back.frame, cfg)?;
    volume_report(&merged.cloud, cfg, opts)
}
