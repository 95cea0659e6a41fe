//! Synthetic depth sensor.
//!
//! A phantom is a vertical neck cylinder standing on a shoulder box and
//! capped by an ellipsoidal head, optionally with a spherical bump on the
//! front of the neck. Body coordinates are millimeters with `y` up,
//! the neck axis on `x = z = 0` from `y = 0` to `y = neck_height_mm`, and `z`
//! pointing away from the camera. Rendering is orthographic: a pixel's depth
//! is `pose_distance · 1000 + z` of the first surface along its ray, so the
//! body's central plane sits exactly at the pose distance.
//!
//! The back view renders the body turned by 180° about its vertical axis.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::DepthFrame;
use crate::reconstruct::ViewTag;

/// Depth added by a salt spike.
pub const SPIKE_MM: f64 = 2000.0;

/// Background pixels kept around the body on every free side.
pub const MARGIN_PX: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Front,
    Back,
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            View::Front => "front",
            View::Back => "back",
        })
    }
}

impl FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "front" => Ok(View::Front),
            "back" => Ok(View::Back),
            other => Err(Error::InvalidConfig(format!("unknown view {other:?}"))),
        }
    }
}

impl From<View> for ViewTag {
    fn from(v: View) -> Self {
        match v {
            View::Front => ViewTag::Front,
            View::Back => ViewTag::Back,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShoulderSpec {
    pub halfwidth_mm: f64,
    pub depth_mm: f64,
    pub height_mm: f64,
}

/// A ball fused to the front of the neck. The sphere (radius `radius_mm`,
/// centered at height `center_y_mm`) stands `protrusion_mm` proud of the
/// neck surface at its front-most point; the bump is the part of the sphere
/// outside the neck cylinder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub center_y_mm: f64,
    pub radius_mm: f64,
    pub protrusion_mm: f64,
}

/// Area shared by two disks of radii `r1`, `r2` whose centers are `d` apart.
fn disk_overlap(r1: f64, r2: f64, d: f64) -> f64 {
    if d >= r1 + r2 {
        return 0.0;
    }
    if d <= (r1 - r2).abs() {
        return PI * r1.min(r2).powi(2);
    }
    let a1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0).acos();
    let a2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0).acos();
    let k = ((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)).max(0.0);
    r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * k.sqrt()
}

const BUMP_QUADRATURE_INTERVALS: usize = 4096;

impl BumpSpec {
    pub fn is_empty(&self) -> bool {
        self.radius_mm == 0.0 || self.protrusion_mm == 0.0
    }

    /// Body `z` of the sphere's center for a neck of radius `neck_radius_mm`.
    pub fn center_z_mm(&self, neck_radius_mm: f64) -> f64 {
        -neck_radius_mm - self.protrusion_mm + self.radius_mm
    }

    /// Area of the bump's horizontal cross-section at height `y`.
    pub fn slice_area_mm2(&self, neck_radius_mm: f64, y: f64) -> f64 {
        let rho2 = self.radius_mm.powi(2) - (y - self.center_y_mm).powi(2);
        if self.is_empty() || rho2 <= 0.0 {
            return 0.0;
        }
        let rho = rho2.sqrt();
        let d = self.center_z_mm(neck_radius_mm).abs();
        (PI * rho2 - disk_overlap(rho, neck_radius_mm, d)).max(0.0)
    }

    /// Volume outside the neck, in cubic millimeters (Simpson's rule over
    /// the closed-form cross-sections).
    pub fn volume_mm3(&self, neck_radius_mm: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let n = BUMP_QUADRATURE_INTERVALS;
        let lo = self.center_y_mm - self.radius_mm;
        let h = 2.0 * self.radius_mm / n as f64;
        let sum: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * self.slice_area_mm2(neck_radius_mm, lo + i as f64 * h)
            })
            .sum();
        sum * h / 3.0
    }

    /// Bump of sphere radius `radius_mm` on a neck of radius `neck_radius_mm`
    /// whose volume is `volume_ml`.
    pub fn with_volume(center_y_mm: f64, radius_mm: f64, neck_radius_mm: f64, volume_ml: f64) -> Result<BumpSpec> {
        let target = volume_ml * 1000.0;
        let bump = |p: f64| BumpSpec {
            center_y_mm,
            radius_mm,
            protrusion_mm: p,
        };
        if !(radius_mm > 0.0 && radius_mm < neck_radius_mm && target > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < bump radius < neck radius and a positive volume, got {radius_mm} mm and {volume_ml} ml"
            )));
        }
        let largest = bump(radius_mm).volume_mm3(neck_radius_mm);
        if target >= largest {
            return Err(Error::InvalidConfig(format!(
                "a {radius_mm} mm sphere holds at most {:.2} ml outside the neck",
                largest / 1000.0
            )));
        }
        // the volume grows with the protrusion
        let (mut lo, mut hi) = (0.0, radius_mm);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if bump(mid).volume_mm3(neck_radius_mm) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(bump(0.5 * (lo + hi)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub neck_radius_mm: f64,
    pub neck_height_mm: f64,
    /// Ellipsoid semi-axes `(a, b, c)` along `x`, `y`, `z`. The ellipsoid is
    /// centered `b / 2` above the top of the neck and clipped at the neck top.
    #[serde(default)]
    pub head_radii_mm: Option<[f64; 3]>,
    #[serde(default)]
    pub shoulders: Option<ShoulderSpec>,
    #[serde(default)]
    pub bump: Option<BumpSpec>,
    #[serde(default = "default_distance")]
    pub pose_distance_m: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise_sigma_mm: f64,
    #[serde(default)]
    pub spike_rate: f64,
}

fn default_distance() -> f64 {
    1.0
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            neck_radius_mm: 50.0,
            neck_height_mm: 120.0,
            head_radii_mm: Some([75.0, 110.0, 90.0]),
            shoulders: Some(ShoulderSpec {
                halfwidth_mm: 180.0,
                depth_mm: 120.0,
                height_mm: 100.0,
            }),
            bump: None,
            pose_distance_m: 1.0,
            seed: 0,
            noise_sigma_mm: 2.0,
            spike_rate: 0.005,
        }
    }
}

impl PhantomSpec {
    /// A bare neck cylinder with no head, shoulders or noise.
    pub fn cylinder(radius_mm: f64, height_mm: f64) -> Self {
        Self {
            neck_radius_mm: radius_mm,
            neck_height_mm: height_mm,
            head_radii_mm: None,
            shoulders: None,
            bump: None,
            pose_distance_m: 1.0,
            seed: 0,
            noise_sigma_mm: 0.0,
            spike_rate: 0.0,
        }
    }

    pub fn noiseless(&self) -> Self {
        Self {
            noise_sigma_mm: 0.0,
            spike_rate: 0.0,
            ..self.clone()
        }
    }

    pub fn with_bump(&self, bump: Option<BumpSpec>) -> Self {
        Self {
            bump,
            ..self.clone()
        }
    }

    /// This body with a bump of `volume_ml` at mid-neck.
    pub fn with_bump_volume(&self, radius_mm: f64, volume_ml: f64) -> Result<Self> {
        let b = BumpSpec::with_volume(0.5 * self.neck_height_mm, radius_mm, self.neck_radius_mm, volume_ml)?;
        Ok(self.with_bump(Some(b)))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.neck_radius_mm) || !pos(self.neck_height_mm) {
            return bad("neck radius and height must be positive".into());
        }
        if let Some(h) = self.head_radii_mm {
            if !h.iter().all(|v| pos(*v)) {
                return bad("head radii must be positive".into());
            }
        }
        if let Some(s) = &self.shoulders {
            if !(pos(s.halfwidth_mm) && pos(s.depth_mm) && pos(s.height_mm)) {
                return bad("shoulder dimensions must be positive".into());
            }
        }
        if let Some(b) = &self.bump {
            if !(b.radius_mm >= 0.0 && b.protrusion_mm >= 0.0) {
                return bad("bump dimensions must be non-negative".into());
            }
            if !b.is_empty() {
                if b.protrusion_mm >= b.radius_mm {
                    return bad("bump protrusion must be smaller than its radius".into());
                }
                if b.radius_mm >= self.neck_radius_mm {
                    return bad("bump radius must be smaller than the neck radius".into());
                }
                if b.center_y_mm - b.radius_mm < 0.0 || b.center_y_mm + b.radius_mm > self.neck_height_mm {
                    return bad("bump must lie within the neck's height".into());
                }
            }
        }
        if !pos(self.pose_distance_m) {
            return bad("pose distance must be positive".into());
        }
        if !(self.noise_sigma_mm >= 0.0 && self.noise_sigma_mm.is_finite()) {
            return bad("noise sigma must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.spike_rate) {
            return bad(format!("spike rate must be in [0, 1), got {}", self.spike_rate));
        }
        Ok(())
    }

    fn active_bump(&self) -> Option<&BumpSpec> {
        self.bump.as_ref().filter(|b| !b.is_empty())
    }

    fn head_center_y(&self, b: f64) -> f64 {
        self.neck_height_mm + 0.5 * b
    }

    /// Lowest body point (the shoulders are cut by the frame there).
    pub fn bottom_y_mm(&self) -> f64 {
        self.shoulders.map_or(0.0, |s| -s.height_mm)
    }

    pub fn top_y_mm(&self) -> f64 {
        match self.head_radii_mm {
            Some([_, b, _]) => self.head_center_y(b) + b,
            None => self.neck_height_mm,
        }
    }

    pub fn half_width_mm(&self) -> f64 {
        let mut w = self.neck_radius_mm;
        if let Some([a, _, _]) = self.head_radii_mm {
            w = w.max(a);
        }
        if let Some(s) = &self.shoulders {
            w = w.max(s.halfwidth_mm);
        }
        w
    }

    /// Largest front-to-back thickness of the body, bump excluded.
    pub fn body_thickness_mm(&self) -> f64 {
        let mut t = 2.0 * self.neck_radius_mm;
        if let Some([_, _, c]) = self.head_radii_mm {
            t = t.max(2.0 * c);
        }
        if let Some(s) = &self.shoulders {
            t = t.max(s.depth_mm);
        }
        t
    }

    /// Nearest and farthest body `z` along the ray at `(x, y)`.
    fn z_span(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        const EPS: f64 = 1e-9;
        let mut span: Option<(f64, f64)> = None;
        let mut add = |lo: f64, hi: f64| {
            span = Some(match span {
                Some((a, b)) => (a.min(lo), b.max(hi)),
                None => (lo, hi),
            });
        };
        let r = self.neck_radius_mm;
        if (0.0..=self.neck_height_mm).contains(&y) && x.abs() <= r + EPS {
            let w = (r * r - x * x).max(0.0).sqrt();
            add(-w, w);
        }
        if let Some([a, b, c]) = self.head_radii_mm {
            let yc = self.head_center_y(b);
            if y >= self.neck_height_mm {
                let t = 1.0 - (x / a).powi(2) - ((y - yc) / b).powi(2);
                if t >= -EPS {
                    let w = c * t.max(0.0).sqrt();
                    add(-w, w);
                }
            }
        }
        if let Some(s) = &self.shoulders {
            if (-s.height_mm..=0.0).contains(&y) && x.abs() <= s.halfwidth_mm + EPS {
                add(-0.5 * s.depth_mm, 0.5 * s.depth_mm);
            }
        }
        if let Some(bump) = self.active_bump() {
            let rho2 = x * x + (y - bump.center_y_mm).powi(2);
            let big_r = bump.radius_mm;
            if rho2 <= big_r * big_r {
                let zc = bump.center_z_mm(r);
                let s = (big_r * big_r - rho2).sqrt();
                add(zc - s, zc + s);
            }
        }
        span
    }

    /// Depth of the first surface seen at body-frame pixel position `x`, `y`.
    fn clean_depth(&self, view: View, x: f64, y: f64) -> f64 {
        let d = self.pose_distance_m * 1000.0;
        match view {
            View::Front => self.z_span(x, y).map_or(0.0, |(near, _)| d + near),
            View::Back => self.z_span(-x, y).map_or(0.0, |(_, far)| d - far),
        }
    }

    /// Projected silhouette area in mm², closed form.
    pub fn projected_area_mm2(&self) -> f64 {
        let mut area = 2.0 * self.neck_radius_mm * self.neck_height_mm;
        if let Some(s) = &self.shoulders {
            area += 2.0 * s.halfwidth_mm * s.height_mm;
        }
        if let Some([a, b, _]) = self.head_radii_mm {
            // ellipse minus the segment below the clipping chord at half the semi-axis
            let k: f64 = 0.5;
            let segment = k.acos() - k * (1.0 - k * k).sqrt();
            area += a * b * (PI - segment);
        }
        area
    }
}

/// Neck volume in liters: the cylinder plus the bump.
pub fn analytic_neck_volume(spec: &PhantomSpec) -> f64 {
    let r = spec.neck_radius_mm;
    let cap = spec.active_bump().map_or(0.0, |b| b.volume_mm3(r));
    (PI * r * r * spec.neck_height_mm + cap) * 1e-6
}

/// Raster placement of a render. Column `(width − 1) / 2` looks down the neck
/// axis; the bottom edge of the frame is at body height `bottom_y_mm`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameGeometry {
    pub width: usize,
    pub height: usize,
    pub mm_per_pixel: f64,
    pub bottom_y_mm: f64,
}

impl FrameGeometry {
    /// Smallest odd-width frame holding the phantom with [`MARGIN_PX`] of
    /// background at the sides and top. The frame's bottom edge cuts the body
    /// at its lowest point.
    pub fn fit(spec: &PhantomSpec, mm_per_pixel: f64) -> Result<FrameGeometry> {
        if !(mm_per_pixel.is_finite() && mm_per_pixel > 0.0) {
            return Err(Error::InvalidConfig(format!("mm_per_pixel must be positive, got {mm_per_pixel}")));
        }
        let half = (spec.half_width_mm() / mm_per_pixel - 1e-9).ceil() as usize + MARGIN_PX;
        let bottom = spec.bottom_y_mm();
        let rows = ((spec.top_y_mm() - bottom) / mm_per_pixel - 1e-9).ceil() as usize + MARGIN_PX;
        Ok(FrameGeometry {
            width: 2 * half + 1,
            height: rows,
            mm_per_pixel,
            bottom_y_mm: bottom,
        })
    }

    pub fn center_col(&self) -> f64 {
        (self.width as f64 - 1.0) / 2.0
    }

    pub fn col_x(&self, col: usize) -> f64 {
        (col as f64 - self.center_col()) * self.mm_per_pixel
    }

    pub fn row_y(&self, row: usize) -> f64 {
        self.bottom_y_mm + (self.height as f64 - row as f64 - 0.5) * self.mm_per_pixel
    }

    /// First row (from the top) whose center lies at or below body height `y`.
    pub fn first_row_below(&self, y: f64) -> usize {
        (0..self.height).find(|&r| self.row_y(r) <= y).unwrap_or(self.height)
    }

    fn check(&self, spec: &PhantomSpec) -> Result<()> {
        let s = self.mm_per_pixel;
        let room = (self.center_col() - 1.0) * s;
        if self.width == 0 || self.height == 0 {
            return Err(Error::ZeroDimension {
                width: self.width,
                height: self.height,
            });
        }
        if spec.half_width_mm() > room {
            return Err(Error::PhantomOutOfFrame(format!(
                "half width {} mm exceeds the {room} mm available",
                spec.half_width_mm()
            )));
        }
        let top = self.bottom_y_mm + self.height as f64 * s;
        if spec.top_y_mm() >= top - s {
            return Err(Error::PhantomOutOfFrame(format!(
                "body top at {} mm reaches the frame top at {top} mm",
                spec.top_y_mm()
            )));
        }
        if self.bottom_y_mm > spec.bottom_y_mm() + 1e-9 && self.bottom_y_mm > 0.0 {
            return Err(Error::PhantomOutOfFrame("frame starts above the neck".into()));
        }
        let d = spec.pose_distance_m * 1000.0;
        let reach = spec.body_thickness_mm() / 2.0
            + spec.active_bump().map_or(0.0, |b| b.protrusion_mm);
        if d - reach < 1.0 || d + reach + SPIKE_MM > u16::MAX as f64 {
            return Err(Error::PhantomOutOfFrame(format!(
                "depths around {d} mm do not fit the 16-bit range"
            )));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed fan-out: hashes a sequence of words into one seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6E65_636B_766F_6C00, |h, &p| splitmix64(h ^ splitmix64(p)))
}

fn view_word(view: View) -> u64 {
    match view {
        View::Front => 1,
        View::Back => 2,
    }
}

/// Noiseless render with depths rounded to whole millimeters.
pub fn render_clean(spec: &PhantomSpec, view: View, geom: &FrameGeometry) -> Result<DepthFrame> {
    render_with(spec, view, geom, None)
}

/// Frame `index` of a capture. Noise for each pixel comes from its own
/// counter-based stream, so the result does not depend on thread count.
pub fn render_frame(spec: &PhantomSpec, view: View, geom: &FrameGeometry, index: u64) -> Result<DepthFrame> {
    let seed = derive_seed(&[spec.seed, view_word(view), index]);
    render_with(spec, view, geom, Some(seed))
}

pub fn render(spec: &PhantomSpec, view: View, geom: &FrameGeometry) -> Result<DepthFrame> {
    render_frame(spec, view, geom, 0)
}

pub fn render_frames(spec: &PhantomSpec, view: View, geom: &FrameGeometry, count: usize) -> Result<Vec<DepthFrame>> {
    (0..count as u64)
        .map(|i| render_frame(spec, view, geom, i))
        .collect()
}

fn render_with(spec: &PhantomSpec, view: View, geom: &FrameGeometry, seed: Option<u64>) -> Result<DepthFrame> {
    spec.validate()?;
    geom.check(spec)?;
    let w = geom.width;
    let noisy = seed.is_some() && (spec.noise_sigma_mm > 0.0 || spec.spike_rate > 0.0);
    let samples: Vec<f64> = (0..geom.height)
        .into_par_iter()
        .flat_map_iter(|row| {
            let y = geom.row_y(row);
            (0..w).map(move |col| (row, col, y))
        })
        .map(|(row, col, y)| {
            let clean = spec.clean_depth(view, geom.col_x(col), y);
            if clean <= 0.0 {
                return 0.0;
            }
            if !noisy {
                return clean.round();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
            rng.set_stream((row * w + col) as u64);
            let z: f64 = StandardNormal.sample(&mut rng);
            let spike = rng.random::<f64>() < spec.spike_rate;
            let mut v = clean + spec.noise_sigma_mm * z;
            if spike {
                v += SPIKE_MM;
            }
            v.round().clamp(1.0, u16::MAX as f64)
        })
        .collect();
    DepthFrame::new(w, geom.height, samples, geom.mm_per_pixel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(spec: &PhantomSpec) -> FrameGeometry {
        FrameGeometry::fit(spec, 2.5).unwrap()
    }

    #[test]
    fn cylinder_volume_closed_form() {
        let v = analytic_neck_volume(&PhantomSpec::cylinder(50.0, 120.0));
        assert!((v - 0.942_477_796).abs() < 1e-8);
    }

    #[test]
    fn disk_overlap_cases() {
        assert_eq!(disk_overlap(1.0, 2.0, 3.5), 0.0);
        assert_eq!(disk_overlap(1.0, 3.0, 0.5), PI);
        // two unit disks one radius apart: 2π/3 − √3/2
        let lens = 2.0 * PI / 3.0 - 3f64.sqrt() / 2.0;
        assert!((disk_overlap(1.0, 1.0, 1.0) - lens).abs() < 1e-12);
    }

    #[test]
    fn bump_on_a_flat_neck_is_a_cap() {
        // against a nearly flat neck the bump is the cap πp²(3R − p)/3
        let b = BumpSpec {
            center_y_mm: 60.0,
            radius_mm: 30.0,
            protrusion_mm: 12.0,
        };
        let cap = PI * 144.0 * (90.0 - 12.0) / 3.0;
        let v = b.volume_mm3(1e5);
        assert!((v - cap).abs() / cap < 1e-3, "{v} vs {cap}");
        // a curved neck takes less of the sphere away
        assert!(b.volume_mm3(50.0) > v);
    }

    #[test]
    fn bump_volume_by_counting_cells() {
        let b = BumpSpec {
            center_y_mm: 60.0,
            radius_mm: 35.0,
            protrusion_mm: 20.0,
        };
        let r = 50.0;
        let zc = b.center_z_mm(r);
        let step = 0.5;
        let mut count = 0u64;
        let n = (2.0 * b.radius_mm / step) as i64;
        for i in 0..n {
            let x = -b.radius_mm + (i as f64 + 0.5) * step;
            for j in 0..n {
                let y = b.center_y_mm - b.radius_mm + (j as f64 + 0.5) * step;
                for k in 0..n {
                    let z = zc - b.radius_mm + (k as f64 + 0.5) * step;
                    let in_sphere = x * x + (y - b.center_y_mm).powi(2) + (z - zc).powi(2) <= b.radius_mm.powi(2);
                    if in_sphere && x * x + z * z > r * r {
                        count += 1;
                    }
                }
            }
        }
        let cells = count as f64 * step.powi(3);
        let v = b.volume_mm3(r);
        assert!((cells - v).abs() / v < 0.01, "{cells} vs {v}");
    }

    #[test]
    fn solved_bump_is_sixty_ml() {
        let s = PhantomSpec::default().with_bump_volume(35.0, 60.0).unwrap();
        let b = s.bump.unwrap();
        assert!((b.volume_mm3(50.0) - 60_000.0).abs() < 1e-6);
        assert!(b.protrusion_mm < b.radius_mm);
        assert!((analytic_neck_volume(&s) - analytic_neck_volume(&PhantomSpec::default()) - 0.06).abs() < 1e-12);
        assert!(BumpSpec::with_volume(60.0, 20.0, 50.0, 60.0).is_err());
        s.validate().unwrap();
    }

    #[test]
    fn zero_bump_changes_nothing() {
        let spec = PhantomSpec::default().noiseless();
        let zero = spec.with_bump(Some(BumpSpec {
            center_y_mm: 60.0,
            radius_mm: 0.0,
            protrusion_mm: 0.0,
        }));
        assert_eq!(analytic_neck_volume(&zero), analytic_neck_volume(&spec));
        let g = geom(&spec);
        assert_eq!(
            render_clean(&zero, View::Front, &g).unwrap(),
            render_clean(&spec, View::Front, &g).unwrap()
        );
    }

    #[test]
    fn cylinder_silhouette_width() {
        let spec = PhantomSpec::cylinder(50.0, 120.0);
        let g = geom(&spec);
        let f = render_clean(&spec, View::Front, &g).unwrap();
        let expected = 2.0 * 50.0 / 2.5;
        let mut neck_rows = 0;
        for r in 0..f.height() {
            let n = f.row(r).iter().filter(|v| **v > 0.0).count();
            if n > 0 {
                neck_rows += 1;
                assert!((n as f64 - expected).abs() <= 1.0, "row {r}: {n}");
            }
        }
        assert_eq!(neck_rows, 48);
        // the rim pixels sit exactly on the central plane
        let row = f.row(10);
        let first = row.iter().position(|v| *v > 0.0).unwrap();
        assert_eq!(row[first], 1000.0);
        assert_eq!(row[first + 20], 950.0);
    }

    #[test]
    fn render_is_deterministic() {
        let spec = PhantomSpec {
            seed: 42,
            ..PhantomSpec::default()
        };
        let g = geom(&spec);
        let a = render(&spec, View::Front, &g).unwrap();
        let b = render(&spec, View::Front, &g).unwrap();
        assert_eq!(a, b);
        let c = render_frame(&spec, View::Front, &g, 1).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let spec = PhantomSpec {
            seed: 9,
            noise_sigma_mm: 3.0,
            spike_rate: 0.02,
            ..PhantomSpec::default()
        };
        let g = geom(&spec);
        let par = render(&spec, View::Back, &g).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let ser = pool.install(|| render(&spec, View::Back, &g).unwrap());
        assert_eq!(par, ser);
    }

    #[test]
    fn back_is_mirrored_front_for_symmetric_body() {
        let spec = PhantomSpec::default().noiseless();
        let g = geom(&spec);
        let front = render_clean(&spec, View::Front, &g).unwrap();
        let back = render_clean(&spec, View::Back, &g).unwrap();
        assert_eq!(back.mirrored_horizontally(), front);
    }

    #[test]
    fn bump_only_in_front_view() {
        let spec = PhantomSpec::default().noiseless();
        let bumped = spec.with_bump_volume(35.0, 60.0).unwrap();
        let g = geom(&spec);
        let f0 = render_clean(&spec, View::Front, &g).unwrap();
        let f1 = render_clean(&bumped, View::Front, &g).unwrap();
        let b0 = render_clean(&spec, View::Back, &g).unwrap();
        let b1 = render_clean(&bumped, View::Back, &g).unwrap();
        assert_eq!(b0, b1);
        let mut closer = 0;
        for (a, b) in f0.samples().iter().zip(f1.samples()) {
            assert!(b <= a);
            if b < a {
                closer += 1;
            }
        }
        assert!(closer > 100);
    }

    #[test]
    fn silhouette_area_matches_projection() {
        let spec = PhantomSpec::default().noiseless();
        for s in [1.0, 1.5, 2.0] {
            let g = FrameGeometry::fit(&spec, s).unwrap();
            let f = render_clean(&spec, View::Front, &g).unwrap();
            let area = f.valid_count() as f64 * s * s;
            let rel = (area - spec.projected_area_mm2()).abs() / spec.projected_area_mm2();
            assert!(rel < 0.01, "s = {s}: {rel}");
        }
    }

    #[test]
    fn too_small_frame_is_refused() {
        let spec = PhantomSpec::default();
        let mut g = geom(&spec);
        g.width = 101;
        assert!(matches!(
            render(&spec, View::Front, &g),
            Err(Error::PhantomOutOfFrame(_))
        ));
        let far = PhantomSpec {
            pose_distance_m: 70.0,
            ..spec.clone()
        };
        assert!(render(&far, View::Front, &geom(&far)).is_err());
    }

    #[test]
    fn invalid_specs() {
        let mut s = PhantomSpec::default();
        s.spike_rate = 1.0;
        assert!(s.validate().is_err());
        let mut s = PhantomSpec::default();
        s.bump = Some(BumpSpec {
            center_y_mm: 60.0,
            radius_mm: 20.0,
            protrusion_mm: 25.0,
        });
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = PhantomSpec::default().with_bump_volume(35.0, 60.0).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<PhantomSpec>(&text).unwrap(), s);
        let minimal: PhantomSpec = serde_json::from_str(r#"{"neck_radius_mm": 40, "neck_height_mm": 90}"#).unwrap();
        assert_eq!(minimal.pose_distance_m, 1.0);
        assert!(minimal.head_radii_mm.is_none());
    }
}
