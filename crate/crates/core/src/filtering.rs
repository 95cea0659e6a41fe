//! Noise suppression for frames and clouds.
//!
//! Zeros are "no data" everywhere in this module: they are skipped by the
//! frame average, left out of every moving window and never flagged as
//! outliers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::DepthFrame;
use crate::reconstruct::PointCloud;
use crate::spatial::KdTree;

/// Consistency constant turning a MAD into a standard-deviation estimate for Gaussian data.
pub const GAUSSIAN_MAD_SCALE: f64 = 1.4826;

/// Median of a non-empty slice; even lengths average the two central order statistics.
/// Reorders the slice.
pub fn median_in_place(values: &mut [f64]) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        return Some(upper);
    }
    let lower = values[..mid]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Some(0.5 * (lower + upper))
}

pub fn median(values: &[f64]) -> Result<f64> {
    let mut v = values.to_vec();
    median_in_place(&mut v).ok_or(Error::Empty("median of an empty list"))
}

/// `median(|a_i − median(a)|)`.
pub fn mad(values: &[f64]) -> Result<f64> {
    let mut v = values.to_vec();
    let m = median_in_place(&mut v).ok_or(Error::Empty("MAD of an empty list"))?;
    for x in v.iter_mut() {
        *x = (*x - m).abs();
    }
    Ok(median_in_place(&mut v).unwrap_or(0.0))
}

/// Per-pixel mean over the frames, skipping zeros. A pixel that is zero in
/// every frame stays zero.
pub fn average_frames(frames: &[DepthFrame]) -> Result<DepthFrame> {
    let first = frames.first().ok_or(Error::Empty("no frames to average"))?;
    if let Some(bad) = frames.iter().find(|f| !f.same_shape(first)) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} @ {} mm/px vs {}x{} @ {} mm/px",
            first.width(),
            first.height(),
            first.mm_per_pixel(),
            bad.width(),
            bad.height(),
            bad.mm_per_pixel()
        )));
    }
    let n = first.samples().len();
    let samples = (0..n)
        .map(|i| {
            let (sum, count) = frames.iter().fold((0.0, 0usize), |(s, c), f| {
                let v = f.samples()[i];
                if v > 0.0 {
                    (s + v, c + 1)
                } else {
                    (s, c)
                }
            });
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        })
        .collect();
    Ok(DepthFrame::from_parts_unchecked(
        first.width(),
        first.height(),
        samples,
        first.mm_per_pixel(),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierFillConfig {
    /// Odd moving-window length in pixels.
    pub window: usize,
    pub mad_scale_k: f64,
    pub threshold_sigmas: f64,
}

impl Default for OutlierFillConfig {
    fn default() -> Self {
        Self {
            window: 9,
            mad_scale_k: GAUSSIAN_MAD_SCALE,
            threshold_sigmas: 3.0,
        }
    }
}

impl OutlierFillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "outlier window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.mad_scale_k > 0.0) || !(self.threshold_sigmas > 0.0) {
            return Err(Error::InvalidConfig(
                "mad_scale_k and threshold_sigmas must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FillReport {
    pub frame: DepthFrame,
    pub replaced: usize,
    /// Columns where every valid sample was flagged; those are left untouched.
    pub all_outlier_columns: Vec<usize>,
}

/// Flags samples of one column whose distance from the moving-window median
/// exceeds `threshold_sigmas · k · MAD`. Windows shrink at the ends.
pub fn column_outliers(column: &[f64], cfg: &OutlierFillConfig) -> Vec<bool> {
    let half = cfg.window / 2;
    let n = column.len();
    let mut flags = vec![false; n];
    let mut buf = Vec::with_capacity(cfg.window);
    for i in 0..n {
        let x = column[i];
        if x <= 0.0 {
            continue;
        }
        buf.clear();
        buf.extend(
            column[i.saturating_sub(half)..(i + half + 1).min(n)]
                .iter()
                .copied()
                .filter(|v| *v > 0.0),
        );
        if buf.len() < 3 {
            continue;
        }
        let med = median_in_place(&mut buf).unwrap_or(x);
        for v in buf.iter_mut() {
            *v = (*v - med).abs();
        }
        let spread = median_in_place(&mut buf).unwrap_or(0.0);
        flags[i] = (x - med).abs() > cfg.threshold_sigmas * cfg.mad_scale_k * spread;
    }
    flags
}

/// Replaces flagged samples by linear interpolation (in row index) between
/// the nearest unflagged samples above and below within the same run of
/// valid samples; a flagged sample with a good neighbor on one side only
/// takes that neighbor's value. Returns `None` if every valid sample is flagged.
fn repair_column(column: &mut [f64], flags: &[bool]) -> Option<usize> {
    let valid = column.iter().filter(|v| **v > 0.0).count();
    let flagged = flags.iter().filter(|f| **f).count();
    if flagged == 0 {
        return Some(0);
    }
    if flagged == valid {
        return None;
    }
    let n = column.len();
    let original = column.to_vec();
    let mut replaced = 0;
    let mut i = 0;
    while i < n {
        if original[i] <= 0.0 {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && original[i] > 0.0 {
            i += 1;
        }
        let run = start..i;
        let good: Vec<usize> = run.clone().filter(|&r| !flags[r]).collect();
        if good.is_empty() {
            continue;
        }
        for r in run.filter(|&r| flags[r]) {
            let above = good.partition_point(|&g| g < r);
            let lo = above.checked_sub(1).map(|k| good[k]);
            let hi = good.get(above).copied();
            column[r] = match (lo, hi) {
                (Some(a), Some(b)) => {
                    let t = (r - a) as f64 / (b - a) as f64;
                    original[a] + t * (original[b] - original[a])
                }
                (Some(a), None) => original[a],
                (None, Some(b)) => original[b],
                (None, None) => unreachable!("run has good samples"),
            };
            replaced += 1;
        }
    }
    Some(replaced)
}

/// Column-wise moving-window MAD outlier detection with linear-interpolation fill.
pub fn fill_outliers(frame: &DepthFrame, cfg: &OutlierFillConfig) -> Result<FillReport> {
    cfg.validate()?;
    let (w, h) = (frame.width(), frame.height());
    let columns: Vec<(Vec<f64>, Option<usize>)> = (0..w)
        .into_par_iter()
        .map(|c| {
            let mut col = frame.column(c);
            let flags = column_outliers(&col, cfg);
            let outcome = repair_column(&mut col, &flags);
            (col, outcome)
        })
        .collect();
    let mut samples = vec![0.0; w * h];
    let mut replaced = 0;
    let mut all_outlier_columns = Vec::new();
    for (c, (col, outcome)) in columns.into_iter().enumerate() {
        match outcome {
            Some(k) => replaced += k,
            None => all_outlier_columns.push(c),
        }
        for (r, v) in col.into_iter().enumerate() {
            samples[r * w + c] = v;
        }
    }
    Ok(FillReport {
        frame: DepthFrame::from_parts_unchecked(w, h, samples, frame.mm_per_pixel()),
        replaced,
        all_outlier_columns,
    })
}

/// Zeroes every sample outside `[near_mm, far_mm]`.
pub fn mask_background(frame: &DepthFrame, near_mm: f64, far_mm: f64) -> Result<DepthFrame> {
    if !(near_mm > 0.0 && near_mm < far_mm) {
        return Err(Error::InvalidConfig(format!(
            "background band requires 0 < near < far, got ({near_mm}, {far_mm})"
        )));
    }
    Ok(frame.map_samples(|v| if v >= near_mm && v <= far_mm { v } else { 0.0 }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiseConfig {
    pub num_neighbors: usize,
    pub threshold_sigmas: f64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            num_neighbors: 8,
            threshold_sigmas: 5.0,
        }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_neighbors == 0 || !(self.threshold_sigmas > 0.0) {
            return Err(Error::InvalidConfig(
                "denoise needs num_neighbors >= 1 and threshold_sigmas > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Mean distance from each point to its `k` nearest neighbors.
pub fn mean_neighbor_distances(cloud: &PointCloud, k: usize) -> Vec<f64> {
    let pts = cloud.points();
    let tree = KdTree::build(pts);
    pts.par_iter()
        .enumerate()
        .map(|(i, p)| {
            let nn = tree.nearest_sq(p, k, Some(i));
            nn.iter().map(|(d, _)| d.sqrt()).sum::<f64>() / nn.len() as f64
        })
        .collect()
}

/// Statistical outlier removal: drops points whose mean k-neighbor distance
/// exceeds `μ + threshold_sigmas · σ` of those distances over the cloud
/// (σ with the `n − 1` denominator). Input order is preserved.
pub fn denoise_cloud(cloud: &PointCloud, cfg: &DenoiseConfig) -> Result<PointCloud> {
    cfg.validate()?;
    if cloud.len() <= cfg.num_neighbors {
        return Err(Error::TooFewPoints {
            needed: cfg.num_neighbors,
            have: cloud.len(),
        });
    }
    let d = mean_neighbor_distances(cloud, cfg.num_neighbors);
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let cut = mean + cfg.threshold_sigmas * var.sqrt();
    let kept = cloud
        .points()
        .iter()
        .zip(&d)
        .filter(|(_, v)| **v <= cut)
        .map(|(p, _)| *p)
        .collect();
    Ok(cloud.with_points(kept))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconstruct::{Point3, ViewTag};
    use proptest::prelude::*;

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.5);
        assert!(median(&[]).is_err());
    }

    #[test]
    fn mad_values() {
        assert_eq!(mad(&[7.0; 6]).unwrap(), 0.0);
        // median 3, deviations {2,1,0,1,2}
        assert_eq!(mad(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), 1.0);
        assert!(matches!(mad(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn average_of_identical_frames() {
        let f = DepthFrame::from_fn(6, 4, 1.0, |r, c| 900.0 + (r * 6 + c) as f64).unwrap();
        let frames = vec![f.clone(); 10];
        assert_eq!(average_frames(&frames).unwrap(), f);
    }

    #[test]
    fn average_two_point_mean_and_zero_skipping() {
        let a = DepthFrame::new(3, 1, vec![1000.0, 0.0, 0.0], 1.0).unwrap();
        let b = DepthFrame::new(3, 1, vec![2000.0, 800.0, 0.0], 1.0).unwrap();
        let avg = average_frames(&[a, b]).unwrap();
        assert_eq!(avg.samples(), &[1500.0, 800.0, 0.0]);
    }

    #[test]
    fn average_errors() {
        assert!(matches!(average_frames(&[]), Err(Error::Empty(_))));
        let a = DepthFrame::filled(3, 2, 1.0, 1.0).unwrap();
        let b = DepthFrame::filled(2, 3, 1.0, 1.0).unwrap();
        assert!(matches!(
            average_frames(&[a.clone(), b]),
            Err(Error::DimensionMismatch(_))
        ));
        let c = DepthFrame::filled(3, 2, 1.0, 2.0).unwrap();
        assert!(average_frames(&[a, c]).is_err());
    }

    #[test]
    fn average_is_permutation_invariant() {
        let frames: Vec<_> = (0..5)
            .map(|k| DepthFrame::from_fn(4, 4, 1.0, |r, c| ((r * 7 + c * 3 + k * 11) % 13) as f64 * 100.0).unwrap())
            .collect();
        let mut rev = frames.clone();
        rev.reverse();
        rev.swap(0, 2);
        let a = average_frames(&frames).unwrap();
        let b = average_frames(&rev).unwrap();
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    fn column_frame(col: &[f64]) -> DepthFrame {
        DepthFrame::new(1, col.len(), col.to_vec(), 1.0).unwrap()
    }

    #[test]
    fn clean_ramp_is_a_fixpoint() {
        let col: Vec<f64> = (0..40).map(|i| 900.0 + 2.0 * i as f64).collect();
        let f = column_frame(&col);
        let out = fill_outliers(&f, &OutlierFillConfig::default()).unwrap();
        assert_eq!(out.frame, f);
        assert_eq!(out.replaced, 0);
    }

    #[test]
    fn single_spike_with_zero_mad() {
        let f = column_frame(&[1000.0, 1000.0, 5000.0, 1000.0, 1000.0]);
        let cfg = OutlierFillConfig {
            window: 5,
            ..Default::default()
        };
        let out = fill_outliers(&f, &cfg).unwrap();
        assert_eq!(out.frame.samples(), &[1000.0; 5]);
        assert_eq!(out.replaced, 1);
    }

    #[test]
    fn interpolates_linearly_and_extrapolates_constantly() {
        let mut col: Vec<f64> = (0..20).map(|i| 1000.0 + 10.0 * i as f64).collect();
        col[7] = 3000.0;
        col[0] = 3000.0;
        let out = fill_outliers(&column_frame(&col), &OutlierFillConfig::default()).unwrap();
        assert!((out.frame.get(7, 0) - 1070.0).abs() < 1e-9);
        assert_eq!(out.frame.get(0, 0), 1010.0);
    }

    #[test]
    fn non_outliers_untouched_and_zeros_kept() {
        let col = vec![0.0, 0.0, 950.0, 951.0, 949.0, 4000.0, 950.0, 952.0, 0.0, 948.0];
        let cfg = OutlierFillConfig::default();
        let flags = column_outliers(&col, &cfg);
        let out = fill_outliers(&column_frame(&col), &cfg).unwrap();
        for (i, (&before, &after)) in col.iter().zip(out.frame.samples()).enumerate() {
            if !flags[i] {
                assert_eq!(before, after, "row {i}");
            }
        }
        assert!(flags[5]);
        assert_eq!(out.frame.get(0, 0), 0.0);
        assert_eq!(out.frame.get(8, 0), 0.0);
    }

    #[test]
    fn all_outlier_column_is_reported() {
        let mut flags = vec![true; 3];
        let mut col = vec![10.0, 20.0, 30.0];
        assert_eq!(repair_column(&mut col, &flags), None);
        assert_eq!(col, vec![10.0, 20.0, 30.0]);
        flags[1] = false;
        assert_eq!(repair_column(&mut col, &flags), Some(2));
        assert_eq!(col, vec![20.0, 20.0, 20.0]);
    }

    #[test]
    fn config_validation() {
        let bad = OutlierFillConfig {
            window: 4,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let f = column_frame(&[1.0; 5]);
        assert!(fill_outliers(&f, &bad).is_err());
        assert!(DenoiseConfig {
            num_neighbors: 0,
            threshold_sigmas: 1.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn mask_band() {
        let f = DepthFrame::filled(4, 4, 1000.0, 1.0).unwrap();
        assert_eq!(mask_background(&f, 500.0, 1500.0).unwrap(), f);
        let g = DepthFrame::filled(4, 4, 2000.0, 1.0).unwrap();
        assert_eq!(mask_background(&g, 500.0, 1500.0).unwrap().valid_count(), 0);
        assert!(mask_background(&f, 1500.0, 500.0).is_err());
        assert!(mask_background(&f, 0.0, 500.0).is_err());
    }

    #[test]
    fn mask_is_idempotent() {
        let f = DepthFrame::from_fn(10, 10, 1.0, |r, c| (r * 10 + c) as f64 * 25.0).unwrap();
        let once = mask_background(&f, 500.0, 1500.0).unwrap();
        assert_eq!(mask_background(&once, 500.0, 1500.0).unwrap(), once);
    }

    fn grid_with_far_point() -> PointCloud {
        let mut pts: Vec<Point3> = (0..10)
            .flat_map(|i| (0..10).map(move |j| Point3::new(i as f64, j as f64, 0.0)))
            .collect();
        pts.push(Point3::new(4.5, 4.5, 500.0));
        PointCloud::new(pts, ViewTag::Front).unwrap()
    }

    /// Exhaustive pairwise distances, independent of the k-d tree.
    fn brute_mean_knn(points: &[Point3], k: usize) -> Vec<f64> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut d: Vec<f64> = points
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| p.distance(q))
                    .collect();
                d.sort_by(f64::total_cmp);
                d[..k].iter().sum::<f64>() / k as f64
            })
            .collect()
    }

    #[test]
    fn knn_distances_match_brute_force() {
        let c = grid_with_far_point();
        let fast = mean_neighbor_distances(&c, 4);
        let slow = brute_mean_knn(c.points(), 4);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn far_point_removed() {
        let c = grid_with_far_point();
        let cfg = DenoiseConfig {
            num_neighbors: 4,
            threshold_sigmas: 1.0,
        };
        let out = denoise_cloud(&c, &cfg).unwrap();
        assert_eq!(out.len(), 100);
        assert!(out.points().iter().all(|p| p.z == 0.0));
    }

    #[test]
    fn second_pass_on_the_bare_grid() {
        // Oracle (brute force, k = 4) on the bare 10x10 grid: corners average
        // (1 + 1 + √2 + 2)/4, edges (3 + √2)/4, interior 1. The corners sit
        // about 3.9 standard deviations above the mean, so a threshold of 1
        // strips them on a second pass while 4 keeps everything.
        let c = grid_with_far_point();
        let strict = DenoiseConfig {
            num_neighbors: 4,
            threshold_sigmas: 1.0,
        };
        let once = denoise_cloud(&c, &strict).unwrap();
        let d = brute_mean_knn(once.points(), 4);
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let corner_z = ((1.0 + 1.0 + 2f64.sqrt() + 2.0) / 4.0 - mean) / sd;
        assert!(corner_z > 3.8 && corner_z < 4.0, "{corner_z}");

        let twice = denoise_cloud(&once, &strict).unwrap();
        assert_eq!(twice.len(), 96);

        let lenient = DenoiseConfig {
            num_neighbors: 4,
            threshold_sigmas: 4.0,
        };
        let once = denoise_cloud(&c, &lenient).unwrap();
        assert_eq!(once.len(), 100);
        assert_eq!(denoise_cloud(&once, &lenient).unwrap(), once);
    }

    #[test]
    fn homogeneous_cloud_keeps_everything() {
        // cube corners: every point has three neighbors at exactly 1 mm
        let pts = (0..8)
            .map(|i| Point3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        let c = PointCloud::new(pts, ViewTag::Front).unwrap();
        for sig in [0.1, 1.0, 3.0] {
            let cfg = DenoiseConfig {
                num_neighbors: 3,
                threshold_sigmas: sig,
            };
            assert_eq!(denoise_cloud(&c, &cfg).unwrap().len(), 8);
        }
    }

    #[test]
    fn too_few_points() {
        let c = PointCloud::new(vec![Point3::default(); 3], ViewTag::Front).unwrap();
        assert!(matches!(
            denoise_cloud(&c, &DenoiseConfig::default()),
            Err(Error::TooFewPoints { .. })
        ));
    }

    proptest! {
        #[test]
        fn mad_translation_and_scale(
            values in proptest::collection::vec(-1e3f64..1e3, 1..60),
            shift in -1e3f64..1e3,
            scale in -20f64..20.0,
        ) {
            let base = mad(&values).unwrap();
            let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
            prop_assert!((mad(&shifted).unwrap() - base).abs() <= 1e-9 * (1.0 + base.abs() + shift.abs()));
            let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
            prop_assert!((mad(&scaled).unwrap() - scale.abs() * base).abs() <= 1e-9 * (1.0 + scale.abs() * base));
        }

        #[test]
        fn denoise_returns_a_subset(pts in proptest::collection::vec((-50f64..50.0, -50f64..50.0, 900f64..1100.0), 6..80)) {
            let cloud = PointCloud::new(pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect(), ViewTag::Front).unwrap();
            let out = denoise_cloud(&cloud, &DenoiseConfig { num_neighbors: 3, threshold_sigmas: 1.0 }).unwrap();
            let mut it = cloud.points().iter();
            for p in out.points() {
                prop_assert!(it.any(|q| q == p));
            }
        }
    }
}
