//! Single-view half circumference.
//!
//! For every row of a neck frame the two strongest depth discontinuities mark
//! the silhouette. Both ends are then moved to the columns whose depth is
//! closest to the mean edge depth, and the depth profile between them is
//! integrated as a polyline. That length is half of the neck's circumference.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::DepthFrame;
use crate::peaks::most_prominent;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowEdgePoints {
    pub row: usize,
    pub left_col: usize,
    pub right_col: usize,
    pub left_depth: f64,
    pub right_depth: f64,
    /// `|Δdepth|` of the derivative peak that produced each end.
    #[serde(default)]
    pub left_strength: f64,
    #[serde(default)]
    pub right_strength: f64,
    /// Subpixel position of each end relative to its column (interpolation only).
    #[serde(default)]
    pub left_offset: f64,
    #[serde(default)]
    pub right_offset: f64,
}

impl RowEdgePoints {
    pub fn left_pos(&self) -> f64 {
        self.left_col as f64 + self.left_offset
    }

    pub fn right_pos(&self) -> f64 {
        self.right_col as f64 + self.right_offset
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircumferenceProfile {
    pub rows: Vec<usize>,
    /// Half circumference per row, millimeters.
    pub lengths: Vec<f64>,
    pub neck_end_row: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothed: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing_window: Option<usize>,
}

impl CircumferenceProfile {
    /// `row,length_mm` lines; the smoothed series when present, else the raw one.
    pub fn to_csv(&self, smoothed: bool) -> String {
        let values = match (&self.smoothed, smoothed) {
            (Some(s), true) => s,
            _ => &self.lengths,
        };
        let mut out = String::from("row,length_mm\n");
        for (r, v) in self.rows.iter().zip(values) {
            out.push_str(&format!("{r},{v}\n"));
        }
        out
    }
}

fn row_edges(row: usize, x: &[f64]) -> Option<RowEdgePoints> {
    if x.len() < 3 {
        return None;
    }
    // zero padding lets a step at the frame border still form a peak
    let mut d = Vec::with_capacity(x.len() + 1);
    d.push(0.0);
    d.extend(x.windows(2).map(|w| (w[1] - w[0]).abs()));
    d.push(0.0);
    let mut top = most_prominent(&d, 2);
    if top.len() < 2 {
        return None;
    }
    top.sort_by_key(|p| p.0);
    let (li, ri) = (top[0].0 - 1, top[1].0 - 1);
    // pick the object side of each step
    let left_col = if x[li + 1] > 0.0 { li + 1 } else { li };
    let right_col = if x[ri] > 0.0 { ri } else { ri + 1 };
    if left_col >= right_col || x[left_col] <= 0.0 || x[right_col] <= 0.0 {
        return None;
    }
    Some(RowEdgePoints {
        row,
        left_col,
        right_col,
        left_depth: x[left_col],
        right_depth: x[right_col],
        left_strength: d[li + 1],
        right_strength: d[ri + 1],
        left_offset: 0.0,
        right_offset: 0.0,
    })
}

/// Per row, the two most prominent peaks of `|x[n+1] − x[n]|`. Rows without
/// two peaks are left out.
pub fn edge_points_by_derivative(frame: &DepthFrame) -> Result<Vec<RowEdgePoints>> {
    let edges: Vec<RowEdgePoints> = (0..frame.height())
        .into_par_iter()
        .filter_map(|r| row_edges(r, frame.row(r)))
        .collect();
    if edges.is_empty() {
        return Err(Error::NoEdges);
    }
    Ok(edges)
}

/// Mean depth over every edge point.
pub fn mean_edge_depth(edges: &[RowEdgePoints]) -> Option<f64> {
    if edges.is_empty() {
        return None;
    }
    let sum: f64 = edges.iter().map(|e| e.left_depth + e.right_depth).sum();
    Some(sum / (2 * edges.len()) as f64)
}

/// Subpixel crossing of `mu` next to column `c`, outer neighbor first.
fn crossing(x: &[f64], c: usize, mu: f64, outward: i64) -> Option<f64> {
    let xc = x[c] - mu;
    if xc == 0.0 {
        return None;
    }
    for step in [outward, -outward] {
        let n = c as i64 + step;
        if n < 0 || n as usize >= x.len() || x[n as usize] <= 0.0 {
            continue;
        }
        let xn = x[n as usize] - mu;
        if xc * xn < 0.0 {
            return Some(step as f64 * xc / (xc - xn));
        }
    }
    None
}

/// Moves each end to the column, within the derivative-stage bounds and on
/// its own half of the frame, whose depth is nearest the mean edge depth `μ`.
/// Ties go to the outermost column. With `interpolate`, each end then slides
/// to where the profile crosses `μ` between it and a neighbor.
pub fn refine_to_mean_depth(frame: &DepthFrame, edges: &[RowEdgePoints], interpolate: bool) -> Result<Vec<RowEdgePoints>> {
    let mu = mean_edge_depth(edges).ok_or(Error::Empty("no edge points to refine"))?;
    let mid = frame.width() / 2;
    edges
        .par_iter()
        .map(|e| {
            let x = frame.row(e.row);
            let nearest = |cols: &mut dyn Iterator<Item = usize>| {
                let mut best: Option<(usize, f64)> = None;
                for c in cols {
                    if x[c] <= 0.0 {
                        continue;
                    }
                    let dev = (x[c] - mu).abs();
                    if best.is_none_or(|(_, b)| dev < b) {
                        best = Some((c, dev));
                    }
                }
                best.map(|b| b.0)
            };
            let l = nearest(&mut (e.left_col..(e.right_col + 1).min(mid)))
                .ok_or(Error::EmptyHalfRow { row: e.row, side: "left" })?;
            let r = nearest(&mut (e.left_col.max(mid)..=e.right_col).rev())
                .ok_or(Error::EmptyHalfRow { row: e.row, side: "right" })?;
            let mut out = RowEdgePoints {
                left_col: l,
                right_col: r,
                left_depth: x[l],
                right_depth: x[r],
                left_offset: 0.0,
                right_offset: 0.0,
                ..e.clone()
            };
            if interpolate {
                if let Some(t) = crossing(x, l, mu, -1) {
                    out.left_offset = t;
                    out.left_depth = mu;
                }
                if let Some(t) = crossing(x, r, mu, 1) {
                    out.right_offset = t;
                    out.right_depth = mu;
                }
            }
            Ok(out)
        })
        .collect()
}

/// Length of the polyline through the row's depth samples between the two
/// ends, `Σ sqrt(s² + Δdepth²)` with `s` the pixel pitch. Runs of at most two
/// invalid samples are bridged.
pub fn row_half_circumference(frame: &DepthFrame, e: &RowEdgePoints) -> Result<f64> {
    let s = frame.mm_per_pixel();
    let x = frame.row(e.row);
    let (pl, pr) = (e.left_pos(), e.right_pos());
    let mut prev = (pl, e.left_depth);
    let mut length = 0.0;
    let mut gap = 0;
    let first = pl.floor() as usize + 1;
    let last = pr.ceil() as usize;
    for c in first..last {
        if x[c] <= 0.0 {
            gap += 1;
            if gap > 2 {
                return Err(Error::DepthGap { row: e.row, gap });
            }
            continue;
        }
        gap = 0;
        let (dc, dd) = ((c as f64 - prev.0) * s, x[c] - prev.1);
        length += (dc * dc + dd * dd).sqrt();
        prev = (c as f64, x[c]);
    }
    let (dc, dd) = ((pr - prev.0) * s, e.right_depth - prev.1);
    length += (dc * dc + dd * dd).sqrt();
    Ok(length)
}

pub fn half_circumference(frame: &DepthFrame, edges: &[RowEdgePoints]) -> Result<CircumferenceProfile> {
    let lengths = edges
        .par_iter()
        .map(|e| row_half_circumference(frame, e))
        .collect::<Result<Vec<f64>>>()?;
    Ok(CircumferenceProfile {
        rows: edges.iter().map(|e| e.row).collect(),
        lengths,
        neck_end_row: None,
        smoothed: None,
        smoothing_window: None,
    })
}

/// Centered moving mean; near the ends the window is truncated to the
/// samples that exist.
pub fn moving_average(signal: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("moving-average window must be odd, got {window}")));
    }
    if window > signal.len() {
        return Err(Error::InvalidConfig(format!(
            "moving-average window {window} exceeds signal length {}",
            signal.len()
        )));
    }
    let half = window / 2;
    let n = signal.len();
    Ok((0..n)
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(half), (i + half + 1).min(n));
            signal[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeckEnd {
    pub row: usize,
    pub detected: bool,
}

/// Scans downward from the first edge row for the first row where both
/// edge-peak magnitudes drop below `threshold` times the median magnitude of
/// the upper half of the edge rows. Rows without edges count as magnitude 0.
/// Without a crossing the last edge row is returned, flagged as not detected.
pub fn detect_neck_end(edges: &[RowEdgePoints], frame: &DepthFrame, threshold: f64) -> Result<NeckEnd> {
    let first = edges.first().ok_or(Error::NoEdges)?;
    let last = edges.last().ok_or(Error::NoEdges)?;
    let upper = &edges[..edges.len().div_ceil(2)];
    let mut mags: Vec<f64> = upper
        .iter()
        .flat_map(|e| [e.left_strength, e.right_strength])
        .collect();
    let median = crate::filtering::median_in_place(&mut mags).unwrap_or(0.0);
    let cut = threshold * median;
    let by_row: HashMap<usize, &RowEdgePoints> = edges.iter().map(|e| (e.row, e)).collect();
    for row in first.row..frame.height() {
        let (a, b) = by_row
            .get(&row)
            .map_or((0.0, 0.0), |e| (e.left_strength, e.right_strength));
        if a < cut && b < cut {
            return Ok(NeckEnd { row, detected: true });
        }
    }
    Ok(NeckEnd {
        row: last.row,
        detected: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircumferenceConfig {
    pub end_threshold: f64,
    pub smoothing_window: usize,
    pub interpolate: bool,
}

impl Default for CircumferenceConfig {
    fn default() -> Self {
        Self {
            end_threshold: 0.25,
            smoothing_window: 11,
            interpolate: false,
        }
    }
}

/// Edge detection, neck-end cut, refinement, arc length and smoothing in one call.
pub fn measure_circumference(frame: &DepthFrame, cfg: &CircumferenceConfig) -> Result<CircumferenceProfile> {
    let edges = edge_points_by_derivative(frame)?;
    let end = detect_neck_end(&edges, frame, cfg.end_threshold)?;
    let neck: Vec<RowEdgePoints> = edges
        .into_iter()
        .filter(|e| !end.detected || e.row < end.row)
        .collect();
    if neck.is_empty() {
        return Err(Error::NoEdges);
    }
    let refined = refine_to_mean_depth(frame, &neck, cfg.interpolate)?;
    let mut profile = half_circumference(frame, &refined)?;
    profile.neck_end_row = end.detected.then_some(end.row);
    let n = profile.lengths.len();
    let window = cfg.smoothing_window.min(if n % 2 == 1 { n } else { n - 1 });
    if window >= 1 {
        profile.smoothed = Some(moving_average(&profile.lengths, window)?);
        profile.smoothing_window = Some(window);
    }
    Ok(profile)
}
