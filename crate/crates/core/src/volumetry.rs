//! Slice areas, the neck's minimum-area slice, its bounds and its volume.
//!
//! Areas are in square decimeters and volumes in liters, so a slice of area
//! `A` and thickness `dy` mm contributes `A · dy / 100` liters.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::peaks::prominence;
use crate::pipeline::PipelineConfig;
use crate::reconstruct::PointCloud;

const MM2_PER_DM2: f64 = 1e4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceArea {
    pub area_dm2: f64,
    /// Fewer than three points: no polygon, area reported as 0.
    pub degenerate: bool,
}

/// Sorts points by polar angle about their centroid (ties by radius). The
/// input is put in canonical order first so the result does not depend on it,
/// and angles are compared at nanoradian resolution so points on one ray tie
/// regardless of rounding.
pub fn angular_order(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let cz = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut keyed: Vec<(i64, f64, (f64, f64))> = pts
        .into_iter()
        .map(|p| {
            let (dx, dz) = (p.0 - cx, p.1 - cz);
            ((dz.atan2(dx) * 1e9).round() as i64, dx.hypot(dz), p)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keyed.into_iter().map(|k| k.2).collect()
}

/// Shoelace area of a closed ring, `½ |Σ (x_n + x_{n+1})(z_n − z_{n+1})|`.
fn ring_area(ring: &[(f64, f64)]) -> f64 {
    let n = ring.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            (a.0 + b.0) * (a.1 - b.1)
        })
        .sum();
    0.5 * twice.abs()
}

/// Area of the polygon through `(x, z)` points (mm) ordered by angle.
pub fn slice_area(points: &[(f64, f64)]) -> SliceArea {
    if points.len() < 3 {
        return SliceArea {
            area_dm2: 0.0,
            degenerate: true,
        };
    }
    SliceArea {
        area_dm2: ring_area(&angular_order(points)) / MM2_PER_DM2,
        degenerate: false,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaProfile {
    pub slice_centers: Vec<f64>,
    pub areas: Vec<f64>,
    pub degenerate: Vec<bool>,
    pub dy_mm: f64,
}

impl AreaProfile {
    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }

    /// Lower and upper `y` of the slices `start..=end`.
    pub fn y_range(&self, start: usize, end: usize) -> (f64, f64) {
        let h = 0.5 * self.dy_mm;
        (self.slice_centers[start] - h, self.slice_centers[end] + h)
    }

    /// Areas with every degenerate slice replaced by linear interpolation
    /// between the nearest good slices (constant beyond the last one).
    pub fn filled_areas(&self) -> Vec<f64> {
        let good: Vec<usize> = (0..self.len()).filter(|&i| !self.degenerate[i]).collect();
        if good.is_empty() {
            return self.areas.clone();
        }
        (0..self.len())
            .map(|i| {
                if !self.degenerate[i] {
                    return self.areas[i];
                }
                let k = good.partition_point(|&g| g < i);
                match (k.checked_sub(1).map(|j| good[j]), good.get(k).copied()) {
                    (Some(a), Some(b)) => {
                        let t = (i - a) as f64 / (b - a) as f64;
                        self.areas[a] + t * (self.areas[b] - self.areas[a])
                    }
                    (Some(a), None) => self.areas[a],
                    (None, Some(b)) => self.areas[b],
                    (None, None) => 0.0,
                }
            })
            .collect()
    }

    /// `y_mm,area_dm2` lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("y_mm,area_dm2\n");
        for (y, a) in self.slice_centers.iter().zip(&self.areas) {
            out.push_str(&format!("{y},{a}\n"));
        }
        out
    }
}

fn bin_origin(cloud: &PointCloud) -> Result<(f64, f64)> {
    let pts = cloud.points();
    if pts.is_empty() {
        return Err(Error::Empty("cloud has no points"));
    }
    let (lo, hi) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.y), b.max(p.y)));
    // with a known row pitch, bin edges fall midway between rows
    let origin = lo - cloud.pitch_mm().map_or(0.0, |p| 0.5 * p);
    Ok((origin, hi))
}

/// Cuts the cloud into horizontal slabs of height `dy_mm` and measures the
/// `(x, z)` polygon area of each.
pub fn area_profile(cloud: &PointCloud, dy_mm: f64) -> Result<AreaProfile> {
    if !(dy_mm.is_finite() && dy_mm > 0.0) {
        return Err(Error::InvalidConfig(format!("dy_mm must be positive, got {dy_mm}")));
    }
    let (origin, top) = bin_origin(cloud)?;
    let n = ((top - origin) / dy_mm).floor() as usize + 1;
    let mut bins: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n];
    for p in cloud.points() {
        let i = (((p.y - origin) / dy_mm).floor() as usize).min(n - 1);
        bins[i].push((p.x, p.z));
    }
    let slices: Vec<SliceArea> = bins.par_iter().map(|b| slice_area(b)).collect();
    Ok(AreaProfile {
        slice_centers: (0..n).map(|i| origin + (i as f64 + 0.5) * dy_mm).collect(),
        areas: slices.iter().map(|s| s.area_dm2).collect(),
        degenerate: slices.iter().map(|s| s.degenerate).collect(),
        dy_mm,
    })
}

/// Index of the lowest local minimum of the (gap-filled) profile, ignoring
/// the top and bottom 10% of slices. A flat-bottomed minimum counts once, at
/// its highest slice; equal minima prefer the higher slice.
pub fn find_neck_minimum(profile: &AreaProfile) -> Result<usize> {
    let good = profile.degenerate.iter().filter(|d| !**d).count();
    if good < 3 {
        return Err(Error::TooFewPoints { needed: 3, have: good });
    }
    let a = profile.filled_areas();
    let n = a.len();
    let skip = n / 10;
    let mut best: Option<usize> = None;
    let mut i = 1;
    while i + 1 < n {
        let mut j = i;
        while j + 1 < n && a[j + 1] == a[i] {
            j += 1;
        }
        let is_min = a[i - 1] > a[i] && j + 1 < n && a[j + 1] > a[i];
        if is_min && j >= skip && j < n - skip {
            let better = best.is_none_or(|b| a[j].total_cmp(&a[b]) != Ordering::Greater);
            if better {
                best = Some(j);
            }
        }
        i = j + 1;
    }
    best.ok_or(Error::NoLocalMinimum)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeckBounds {
    pub min_index: usize,
    pub start_index: usize,
    pub end_index: usize,
    pub prominence_fraction: f64,
    /// Prominence of the minimum in dm², and the area level that bounds the neck.
    pub prominence_dm2: f64,
    pub cut_level_dm2: f64,
}

/// Grows a contiguous run of slices around `min_index` while their area stays
/// at or below `area_min + fraction · prominence`, where the prominence is that
/// of the minimum seen as a peak of the negated profile.
pub fn neck_bounds(profile: &AreaProfile, min_index: usize, prominence_fraction: f64) -> Result<NeckBounds> {
    if !(prominence_fraction > 0.0 && prominence_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "prominence fraction must be in (0, 1], got {prominence_fraction}"
        )));
    }
    let a = profile.filled_areas();
    if min_index >= a.len() {
        return Err(Error::InvalidConfig(format!(
            "minimum index {min_index} outside a profile of {} slices",
            a.len()
        )));
    }
    let negated: Vec<f64> = a.iter().map(|v| -v).collect();
    let p = prominence(&negated, min_index);
    if p <= 0.0 {
        return Err(Error::ZeroProminence);
    }
    let cut = a[min_index] + prominence_fraction * p;
    let mut start = min_index;
    while start > 0 && a[start - 1] <= cut {
        start -= 1;
    }
    let mut end = min_index;
    while end + 1 < a.len() && a[end + 1] <= cut {
        end += 1;
    }
    Ok(NeckBounds {
        min_index,
        start_index: start,
        end_index: end,
        prominence_fraction,
        prominence_dm2: p,
        cut_level_dm2: cut,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeckVolume {
    pub liters: f64,
    pub degenerate_slices: usize,
    /// More than 20% of the bounded slices had to be interpolated.
    pub degenerate_warning: bool,
}

/// `Σ A_n · dy / 100` over the bounded slices, in liters.
pub fn neck_volume(profile: &AreaProfile, bounds: &NeckBounds) -> Result<NeckVolume> {
    if bounds.start_index > bounds.min_index || bounds.min_index > bounds.end_index || bounds.end_index >= profile.len() {
        return Err(Error::InvalidConfig("neck bounds do not fit the profile".into()));
    }
    let a = profile.filled_areas();
    let range = bounds.start_index..=bounds.end_index;
    let liters = a[range.clone()].iter().sum::<f64>() * profile.dy_mm / 100.0;
    let degenerate_slices = profile.degenerate[range].iter().filter(|d| **d).count();
    let count = bounds.end_index - bounds.start_index + 1;
    Ok(NeckVolume {
        liters,
        degenerate_slices,
        degenerate_warning: degenerate_slices * 5 > count,
    })
}

fn inside(ring: &[(f64, f64)], x: f64, z: f64) -> bool {
    let mut c = false;
    let n = ring.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, zi) = ring[i];
        let (xj, zj) = ring[j];
        if (zi > z) != (zj > z) && x < (xj - xi) * (z - zi) / (zj - zi) + xi {
            c = !c;
        }
        j = i;
    }
    c
}

/// Independent volume estimate: splits `[low, high)` into layers of height
/// `voxel_mm`, turns each layer's points into an angle-ordered polygon (an
/// empty layer borrows its nearest populated neighbor) and counts the
/// `voxel_mm`-sized cells whose centers fall inside. Returns liters.
pub fn voxel_volume_oracle(cloud: &PointCloud, bounds_y: (f64, f64), voxel_mm: f64) -> Result<f64> {
    let (low, high) = bounds_y;
    if !(voxel_mm > 0.0 && high > low) {
        return Err(Error::InvalidConfig("voxel oracle needs voxel_mm > 0 and high > low".into()));
    }
    let layers = ((high - low) / voxel_mm).round().max(1.0) as usize;
    let mut bins: Vec<Vec<(f64, f64)>> = vec![Vec::new(); layers];
    let (mut xmin, mut xmax, mut zmin, mut zmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in cloud.points() {
        if p.y < low || p.y >= high {
            continue;
        }
        let i = (((p.y - low) / voxel_mm).floor() as usize).min(layers - 1);
        bins[i].push((p.x, p.z));
        xmin = xmin.min(p.x);
        xmax = xmax.max(p.x);
        zmin = zmin.min(p.z);
        zmax = zmax.max(p.z);
    }
    let populated: Vec<usize> = (0..layers).filter(|&i| bins[i].len() >= 3).collect();
    if populated.is_empty() {
        return Err(Error::Empty("no layer inside the bounds has three points"));
    }
    let extent = (xmax - xmin).min(zmax - zmin);
    if voxel_mm > extent / 4.0 {
        return Err(Error::VoxelTooCoarse {
            voxel_mm,
            extent_mm: extent,
        });
    }
    let counts: Vec<usize> = (0..layers)
        .into_par_iter()
        .map(|i| {
            let k = populated.partition_point(|&g| g < i);
            let src = match (k.checked_sub(1).map(|j| populated[j]), populated.get(k).copied()) {
                (_, Some(b)) if b == i => b,
                (Some(a), Some(b)) => if i - a <= b - i { a } else { b },
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => unreachable!("populated is non-empty"),
            };
            let ring = angular_order(&bins[src]);
            let (x0, x1) = ring.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
            let (z0, z1) = ring.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
            // cells on a fixed lattice anchored at the origin
            let c0 = (x0 / voxel_mm).floor() as i64;
            let c1 = (x1 / voxel_mm).ceil() as i64;
            let r0 = (z0 / voxel_mm).floor() as i64;
            let r1 = (z1 / voxel_mm).ceil() as i64;
            let mut count = 0;
            for r in r0..r1 {
                let z = (r as f64 + 0.5) * voxel_mm;
                for c in c0..c1 {
                    if inside(&ring, (c as f64 + 0.5) * voxel_mm, z) {
                        count += 1;
                    }
                }
            }
            count
        })
        .collect();
    let total: usize = counts.iter().sum();
    Ok(total as f64 * voxel_mm.powi(3) * 1e-6)
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementReport {
    pub schema_version: u32,
    pub volume_liters: f64,
    pub bounds: NeckBounds,
    pub profile: AreaProfile,
    pub degenerate_warning: bool,
    pub parameters: PipelineConfig,
    /// RFC 3339; absent in deterministic mode.
    pub timestamp: Option<String>,
    pub session_id: String,
}

/// Profile, minimum, bounds and volume in one pass.
pub fn measure_volume(cloud: &PointCloud, dy_mm: f64, prominence_fraction: f64) -> Result<(AreaProfile, NeckBounds, NeckVolume)> {
    let profile = area_profile(cloud, dy_mm)?;
    let min = find_neck_minimum(&profile)?;
    let bounds = neck_bounds(&profile, min, prominence_fraction)?;
    let volume = neck_volume(&profile, &bounds)?;
    Ok((profile, bounds, volume))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconstruct::{Point3, ViewTag};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn circle(n: usize, r: f64) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let t = i as f64 * 2.0 * PI / n as f64;
                (r * t.cos(), r * t.sin())
            })
            .collect()
    }

    fn profile(areas: &[f64]) -> AreaProfile {
        AreaProfile {
            slice_centers: (0..areas.len()).map(|i| i as f64 * 5.0 + 2.5).collect(),
            areas: areas.to_vec(),
            degenerate: vec![false; areas.len()],
            dy_mm: 5.0,
        }
    }

    #[test]
    fn square_is_one_dm2() {
        let sq = [(0.0, 0.0), (100.0, 0.0), (100.0, 100.0), (0.0, 100.0)];
        assert_eq!(slice_area(&sq).area_dm2, 1.0);
        let shuffled = [sq[2], sq[0], sq[3], sq[1]];
        assert_eq!(slice_area(&shuffled), slice_area(&sq));
    }

    #[test]
    fn unclosed_ring_misses_the_square() {
        let sq = angular_order(&[(100.0, 0.0), (200.0, 0.0), (200.0, 100.0), (100.0, 100.0)]);
        let open: f64 = (0..3).map(|i| (sq[i].0 + sq[i + 1].0) * (sq[i].1 - sq[i + 1].1)).sum::<f64>() * 0.5;
        assert_eq!(slice_area(&sq).area_dm2, 1.0);
        assert_ne!(open.abs() / MM2_PER_DM2, 1.0);
    }

    #[test]
    fn dense_circle() {
        let a = slice_area(&circle(1000, 50.0)).area_dm2;
        let exact = PI * 2500.0 / MM2_PER_DM2;
        assert!((a - exact).abs() / exact < 0.002);
    }

    #[test]
    fn degenerate_slices() {
        let s = slice_area(&[(0.0, 0.0), (1.0, 1.0)]);
        assert!(s.degenerate);
        assert_eq!(s.area_dm2, 0.0);
    }

    #[test]
    fn minimum_cases() {
        assert_eq!(find_neck_minimum(&profile(&[3.0, 2.0, 1.0, 2.0, 3.0])).unwrap(), 2);
        assert!(matches!(
            find_neck_minimum(&profile(&[1.0, 2.0, 3.0, 4.0, 5.0])),
            Err(Error::NoLocalMinimum)
        ));
        // equal minima: the higher slice wins; plateaus resolve to their top
        assert_eq!(find_neck_minimum(&profile(&[3.0, 1.0, 3.0, 1.0, 3.0])).unwrap(), 3);
        assert_eq!(find_neck_minimum(&profile(&[3.0, 1.0, 1.0, 2.0, 3.0])).unwrap(), 2);
    }

    #[test]
    fn bounds_rule() {
        let p = profile(&[5.0, 3.0, 1.0, 3.0, 5.0]);
        let b = neck_bounds(&p, 2, 1.0).unwrap();
        assert_eq!((b.start_index, b.end_index), (0, 4));
        assert_eq!(b.cut_level_dm2, 5.0);
        let b = neck_bounds(&p, 2, 1e-9).unwrap();
        assert_eq!((b.start_index, b.end_index), (2, 2));
        assert!(matches!(
            neck_bounds(&profile(&[2.0; 5]), 2, 0.5),
            Err(Error::ZeroProminence)
        ));
        assert!(neck_bounds(&p, 2, 0.0).is_err());
    }

    #[test]
    fn unit_cube_volume() {
        let p = AreaProfile {
            slice_centers: vec![50.0],
            areas: vec![1.0],
            degenerate: vec![false],
            dy_mm: 100.0,
        };
        let b = NeckBounds {
            min_index: 0,
            start_index: 0,
            end_index: 0,
            prominence_fraction: 1.0,
            prominence_dm2: 0.0,
            cut_level_dm2: 1.0,
        };
        assert_eq!(neck_volume(&p, &b).unwrap().liters, 1.0);
    }

    #[test]
    fn gaps_are_interpolated() {
        let mut p = profile(&[4.0, 2.0, 0.0, 1.0, 0.0, 3.0]);
        p.degenerate[2] = true;
        p.degenerate[4] = true;
        assert_eq!(p.filled_areas(), vec![4.0, 2.0, 1.5, 1.0, 2.0, 3.0]);
    }

    fn cube_surface(side: f64, step: f64) -> PointCloud {
        let mut pts = Vec::new();
        let n = (side / step) as usize;
        for k in 0..n {
            let y = (k as f64 + 0.5) * step;
            for i in 0..n {
                let t = i as f64 * step;
                pts.push(Point3::new(t, y, 0.0));
                pts.push(Point3::new(side, y, t));
                pts.push(Point3::new(side - t, y, side));
                pts.push(Point3::new(0.0, y, side - t));
            }
        }
        PointCloud::new(pts, ViewTag::Merged).unwrap()
    }

    #[test]
    fn cube_oracle() {
        let c = cube_surface(100.0, 1.0);
        let v = voxel_volume_oracle(&c, (0.0, 100.0), 2.0).unwrap();
        assert!((v - 1.0).abs() < 0.02, "{v}");
        assert!(matches!(
            voxel_volume_oracle(&c, (0.0, 100.0), 30.0),
            Err(Error::VoxelTooCoarse { .. })
        ));
    }

    #[test]
    fn single_bin_profile_matches_projection() {
        let c = cube_surface(100.0, 5.0);
        let p = area_profile(&c, 1000.0).unwrap();
        assert_eq!(p.len(), 1);
        let proj: Vec<(f64, f64)> = c.points().iter().map(|q| (q.x, q.z)).collect();
        assert_eq!(p.areas[0], slice_area(&proj).area_dm2);
    }

    #[test]
    fn neck_volume_is_additive() {
        let p = profile(&[5.0, 3.2, 1.1, 0.9, 1.3, 3.7, 5.0]);
        let whole = NeckBounds {
            min_index: 3,
            start_index: 1,
            end_index: 5,
            prominence_fraction: 1.0,
            prominence_dm2: 1.0,
            cut_level_dm2: 5.0,
        };
        let a = NeckBounds { end_index: 3, ..whole };
        let b = NeckBounds { start_index: 4, min_index: 4, ..whole };
        let sum = neck_volume(&p, &a).unwrap().liters + neck_volume(&p, &b).unwrap().liters;
        assert!((sum - neck_volume(&p, &whole).unwrap().liters).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn area_ignores_order_and_translation(
            n in 8usize..200,
            r in 10f64..200.0,
            tx in -1e3f64..1e3,
            tz in 500f64..2000.0,
            seed in any::<u64>(),
        ) {
            let pts = circle(n, r);
            let base = slice_area(&pts).area_dm2;
            let mut moved: Vec<(f64, f64)> = pts.iter().map(|p| (p.0 + tx, p.1 + tz)).collect();
            // deterministic shuffle
            let mut s = seed;
            for i in (1..moved.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                moved.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert!((slice_area(&moved).area_dm2 - base).abs() <= 1e-9 * base);
        }

        #[test]
        fn rotating_a_dense_slice(theta in 0f64..6.283) {
            let pts: Vec<(f64, f64)> = circle(720, 1.0).iter().map(|p| (60.0 * p.0, 35.0 * p.1)).collect();
            let base = slice_area(&pts).area_dm2;
            let (c, s) = (theta.cos(), theta.sin());
            let rot: Vec<(f64, f64)> = pts.iter().map(|p| (c * p.0 - s * p.1, s * p.0 + c * p.1)).collect();
            prop_assert!((slice_area(&rot).area_dm2 - base).abs() < 0.005 * base);
        }

        #[test]
        fn volume_scales_cubically(c in 0.5f64..3.0) {
            // an hourglass of stacked ellipses, rows on a 2.5 mm pitch
            let mut pts = Vec::new();
            for row in 0..40 {
                let y = row as f64 * 2.5;
                let r = 40.0 + 0.02 * (y - 50.0).powi(2);
                for k in 0..90 {
                    let t = k as f64 * PI / 45.0;
                    pts.push(Point3::new(r * t.cos(), y, 0.8 * r * t.sin()));
                }
            }
            let cloud = PointCloud::new(pts, ViewTag::Merged).unwrap().with_pitch(Some(2.5));
            let scaled = cloud.scaled(c);
            let p1 = area_profile(&cloud, 5.0).unwrap();
            let p2 = area_profile(&scaled, 5.0 * c).unwrap();
            let b = neck_bounds(&p1, find_neck_minimum(&p1).unwrap(), 0.5).unwrap();
            let v1 = neck_volume(&p1, &b).unwrap().liters;
            let v2 = neck_volume(&p2, &b).unwrap().liters;
            prop_assert!((v2 - c.powi(3) * v1).abs() <= 1e-6 * v2, "{} {} {:?} {:?}", v1, v2, p1.areas, p2.areas);
        }
    }
}
