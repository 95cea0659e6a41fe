//! Frames to point clouds, and the front/back merge.
//!
//! Cloud coordinates are millimeters: `x` lateral (image columns), `y`
//! vertical and growing upward (image rows grow downward), `z` the raw
//! distance from the camera.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::DepthFrame;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance_squared(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        dx * dx + dy * dy + dz * dz
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        self.distance_squared(other).sqrt()
    }

    pub fn translated(&self, t: [f64; 3]) -> Point3 {
        Point3::new(self.x + t[0], self.y + t[1], self.z + t[2])
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewTag {
    Front,
    Back,
    Merged,
}

impl std::fmt::Display for ViewTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ViewTag::Front => "front",
            ViewTag::Back => "back",
            ViewTag::Merged => "merged",
        })
    }
}

impl std::str::FromStr for ViewTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "front" => Ok(ViewTag::Front),
            "back" => Ok(ViewTag::Back),
            "merged" => Ok(ViewTag::Merged),
            other => Err(Error::InvalidConfig(format!("unknown view tag {other:?}"))),
        }
    }
}

/// Bookkeeping recorded on merged clouds so the merge can be replayed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeInfo {
    pub gap_mm: f64,
    /// Translation applied to the front cloud (always zero: the front is the reference).
    pub front_translation: [f64; 3],
    /// Mean-equalizing translation applied to the back cloud before rotation.
    pub back_translation: [f64; 3],
    /// Number of leading points that came from the front view.
    pub front_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    view: ViewTag,
    /// Row pitch of the raster the cloud was sampled from, if any.
    pitch_mm: Option<f64>,
    merge: Option<MergeInfo>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, view: ViewTag) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig(format!("point {i} is not finite")));
        }
        Ok(Self {
            points,
            view,
            pitch_mm: None,
            merge: None,
        })
    }

    pub fn with_pitch(mut self, pitch_mm: Option<f64>) -> Self {
        self.pitch_mm = pitch_mm;
        self
    }

    pub(crate) fn with_merge(mut self, info: MergeInfo) -> Self {
        self.merge = Some(info);
        self
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn view(&self) -> ViewTag {
        self.view
    }

    pub fn pitch_mm(&self) -> Option<f64> {
        self.pitch_mm
    }

    pub fn merge_info(&self) -> Option<&MergeInfo> {
        self.merge.as_ref()
    }

    pub fn gap_mm(&self) -> Option<f64> {
        self.merge.map(|m| m.gap_mm)
    }

    /// Same metadata, different points.
    pub(crate) fn with_points(&self, points: Vec<Point3>) -> PointCloud {
        PointCloud {
            points,
            view: self.view,
            pitch_mm: self.pitch_mm,
            merge: self.merge,
        }
    }

    pub fn centroid(&self) -> Option<[f64; 3]> {
        if self.points.is_empty() {
            return None;
        }
        let n = self.points.len() as f64;
        let mut s = [0.0; 3];
        for p in &self.points {
            s[0] += p.x;
            s[1] += p.y;
            s[2] += p.z;
        }
        Some([s[0] / n, s[1] / n, s[2] / n])
    }

    /// `(min, max)` of the `z` coordinate.
    pub fn z_range(&self) -> Option<(f64, f64)> {
        self.points.iter().fold(None, |acc, p| match acc {
            None => Some((p.z, p.z)),
            Some((lo, hi)) => Some((lo.min(p.z), hi.max(p.z))),
        })
    }

    pub fn z_extent(&self) -> Option<f64> {
        self.z_range().map(|(lo, hi)| hi - lo)
    }

    pub fn translated(&self, t: [f64; 3]) -> PointCloud {
        self.with_points(self.points.iter().map(|p| p.translated(t)).collect())
    }

    pub fn scaled(&self, factor: f64) -> PointCloud {
        let pts = self
            .points
            .iter()
            .map(|p| Point3::new(p.x * factor, p.y * factor, p.z * factor))
            .collect();
        let mut out = self.with_points(pts);
        out.pitch_mm = self.pitch_mm.map(|p| p * factor);
        out
    }
}

/// One point per nonzero sample at `(col·s, −row·s, depth)`.
pub fn frame_to_cloud(frame: &DepthFrame, view: ViewTag) -> Result<PointCloud> {
    let s = frame.mm_per_pixel();
    let mut points = Vec::with_capacity(frame.valid_count());
    for r in 0..frame.height() {
        for (c, &d) in frame.row(r).iter().enumerate() {
            if d > 0.0 {
                points.push(Point3::new(c as f64 * s, -(r as f64) * s, d));
            }
        }
    }
    if points.is_empty() {
        return Err(Error::Empty("frame has no valid samples"));
    }
    Ok(PointCloud::new(points, view)?.with_pitch(Some(s)))
}

/// Angle of a rotation about the vertical axis, normalized to `[0, 360)` degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationAngle(f64);

impl RotationAngle {
    pub fn degrees(theta: f64) -> Self {
        let t = theta.rem_euclid(360.0);
        // rem_euclid can round up to exactly 360 for tiny negative inputs
        Self(if t >= 360.0 { 0.0 } else { t })
    }

    pub fn half_turn() -> Self {
        Self(180.0)
    }

    pub fn as_degrees(&self) -> f64 {
        self.0
    }

    /// `(cos θ, sin θ)`, exact at multiples of 90°.
    fn cos_sin(&self) -> (f64, f64) {
        match self.0 {
            t if t == 0.0 => (1.0, 0.0),
            t if t == 90.0 => (0.0, 1.0),
            t if t == 180.0 => (-1.0, 0.0),
            t if t == 270.0 => (0.0, -1.0),
            t => {
                let r = t.to_radians();
                (r.cos(), r.sin())
            }
        }
    }
}

/// Applies `R_y(θ) = [[cos, 0, sin], [0, 1, 0], [−sin, 0, cos]]` to every point.
pub fn rotate_y(cloud: &PointCloud, angle: RotationAngle) -> PointCloud {
    let (c, s) = angle.cos_sin();
    cloud.with_points(
        cloud
            .points
            .iter()
            .map(|p| Point3::new(c * p.x + s * p.z, p.y, -s * p.x + c * p.z))
            .collect(),
    )
}

/// Translates `back` so its centroid coincides with `front`'s.
pub fn equalize_means(front: &PointCloud, back: &PointCloud) -> Result<PointCloud> {
    Ok(back.translated(mean_offset(front, back)?))
}

fn mean_offset(front: &PointCloud, back: &PointCloud) -> Result<[f64; 3]> {
    let f = front.centroid().ok_or(Error::Empty("front cloud"))?;
    let b = back.centroid().ok_or(Error::Empty("back cloud"))?;
    Ok([f[0] - b[0], f[1] - b[1], f[2] - b[2]])
}

/// Merges a front cloud and the cloud captured after a half turn.
///
/// Steps: equalize the back cloud's centroid onto the front's; move it into
/// a local frame whose origin is the front's lateral centroid and the back
/// cloud's farthest depth; rotate by 180° about `y`; take `|z|`; push it
/// `gap_mm` further along `z`; return it to the front's far plane and append
/// it after the front points.
///
/// In the local frame every back point sits at `z <= 0`, so the rotated cloud
/// lies at `z >= 0` and `|z|` leaves it untouched. With `gap_mm = 0` the
/// nearest back point lands exactly on the farthest front depth.
pub fn merge_front_back(front: &PointCloud, back: &PointCloud, gap_mm: f64) -> Result<PointCloud> {
    if !(gap_mm.is_finite() && gap_mm >= 0.0) {
        return Err(Error::InvalidConfig(format!("gap_mm must be >= 0, got {gap_mm}")));
    }
    let offset = mean_offset(front, back)?;
    let back_eq = back.translated(offset);
    let centroid = front.centroid().ok_or(Error::Empty("front cloud"))?;
    let (_, front_far) = front.z_range().ok_or(Error::Empty("front cloud"))?;
    let (_, back_far) = back_eq.z_range().ok_or(Error::Empty("back cloud"))?;

    let local = back_eq.translated([-centroid[0], 0.0, -back_far]);
    let rotated = rotate_y(&local, RotationAngle::half_turn());
    let placed = rotated
        .points
        .iter()
        .map(|p| Point3::new(p.x + centroid[0], p.y, p.z.abs() + gap_mm + front_far));

    let mut points = Vec::with_capacity(front.len() + back.len());
    points.extend_from_slice(&front.points);
    points.extend(placed);
    let info = MergeInfo {
        gap_mm,
        front_translation: [0.0; 3],
        back_translation: offset,
        front_count: front.len(),
    };
    Ok(PointCloud::new(points, ViewTag::Merged)?
        .with_pitch(front.pitch_mm)
        .with_merge(info))
}

/// Gap that makes the merged depth extent equal a known body thickness:
/// `thickness − (front extent + back extent)`, clamped at zero.
pub fn calibrate_gap(front: &PointCloud, back: &PointCloud, thickness_mm: f64) -> Result<f64> {
    let f = front.z_extent().ok_or(Error::Empty("front cloud"))?;
    let b = back.z_extent().ok_or(Error::Empty("back cloud"))?;
    Ok((thickness_mm - (f + b)).max(0.0))
}
