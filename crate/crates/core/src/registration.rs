//! Template matching and front/back alignment by normalized correlation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{DepthFrame, NeckTemplate};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NccMode {
    /// Pearson correlation of window and template; always in `[-1, 1]`.
    #[default]
    Normalized,
    /// `Σ x·t / sqrt(Σ x² − (Σ x)² / N)`: normalized by the window energy only.
    WindowEnergyOnly,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPolicy {
    /// Only pixel pairs where both image and template are nonzero take part;
    /// placements covering fewer than half of the template's valid pixels are skipped.
    #[default]
    ExcludeZeros,
    /// Zeros are ordinary samples, so silhouettes themselves are correlated.
    IncludeZeros,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NccOptions {
    pub mode: NccMode,
    pub mask: MaskPolicy,
    pub keep_map: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreMap {
    pub rows: usize,
    pub cols: usize,
    /// Row-major scores; skipped placements hold `None`.
    pub scores: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Top-left corner of the best placement.
    pub row: usize,
    pub col: usize,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_map: Option<ScoreMap>,
}

#[derive(Default)]
struct Sums {
    n: f64,
    x: f64,
    t: f64,
    xx: f64,
    tt: f64,
    xt: f64,
}

impl Sums {
    fn add(&mut self, x: f64, t: f64) {
        self.n += 1.0;
        self.x += x;
        self.t += t;
        self.xx += x * x;
        self.tt += t * t;
        self.xt += x * t;
    }

    fn score(&self, mode: NccMode) -> Option<f64> {
        let sxx = self.xx - self.x * self.x / self.n;
        match mode {
            NccMode::Normalized => {
                let stt = self.tt - self.t * self.t / self.n;
                let sxt = self.xt - self.x * self.t / self.n;
                let den = (sxx * stt).sqrt();
                (den > 1e-12 * (self.xx * self.tt).sqrt() && den > 0.0).then(|| sxt / den)
            }
            NccMode::WindowEnergyOnly => {
                (sxx > 1e-12 * self.xx && sxx > 0.0).then(|| self.xt / sxx.sqrt())
            }
        }
    }
}

fn score_at(image: &DepthFrame, patch: &DepthFrame, m: usize, n: usize, opts: &NccOptions, min_pairs: f64) -> Option<f64> {
    let mut s = Sums::default();
    for i in 0..patch.height() {
        let img = &image.row(m + i)[n..n + patch.width()];
        for (&x, &t) in img.iter().zip(patch.row(i)) {
            match opts.mask {
                MaskPolicy::ExcludeZeros if x <= 0.0 || t <= 0.0 => {}
                _ => s.add(x, t),
            }
        }
    }
    if s.n < min_pairs || s.n == 0.0 {
        return None;
    }
    s.score(opts.mode)
}

/// Correlates the template at every placement fully inside the image and
/// returns the best one. Ties go to the smallest row, then the smallest column.
pub fn ncc_match(image: &DepthFrame, template: &NeckTemplate) -> Result<MatchResult> {
    ncc_match_with(image, template, &NccOptions::default())
}

pub fn ncc_match_with(image: &DepthFrame, template: &NeckTemplate, opts: &NccOptions) -> Result<MatchResult> {
    let patch = template.patch();
    let (k, l) = (patch.height(), patch.width());
    if k >= image.height() || l >= image.width() {
        return Err(Error::TemplateTooLarge {
            template_height: k,
            template_width: l,
            image_height: image.height(),
            image_width: image.width(),
        });
    }
    let min_pairs = match opts.mask {
        MaskPolicy::ExcludeZeros => 0.5 * patch.valid_count() as f64,
        MaskPolicy::IncludeZeros => 0.0,
    };
    let rows = image.height() - k + 1;
    let cols = image.width() - l + 1;
    let scores: Vec<Option<f64>> = (0..rows * cols)
        .into_par_iter()
        .map(|p| score_at(image, patch, p / cols, p % cols, opts, min_pairs))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (p, s) in scores.iter().enumerate() {
        if let Some(v) = *s {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((p, v));
            }
        }
    }
    let (p, score) = best.ok_or_else(|| {
        Error::DegenerateMatch("correlation is undefined at every placement (no variance)".into())
    })?;
    Ok(MatchResult {
        row: p / cols,
        col: p % cols,
        score,
        score_map: opts.keep_map.then(|| ScoreMap { rows, cols, scores }),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub frame: DepthFrame,
    /// Shift applied to the back frame, `(rows down, columns right)`.
    pub shift: (i64, i64),
    pub score: f64,
}

/// Default search radius in pixels for [`align_back_to_front`].
pub const DEFAULT_MAX_SHIFT: usize = 12;

/// Shifts `back` by whole pixels (zero fill) to maximize the correlation of
/// the two frames, zeros included, over shifts up to `max_shift` in each
/// direction. Equal scores prefer the smaller shift.
pub fn align_back_to_front(front: &DepthFrame, back: &DepthFrame, max_shift: usize) -> Result<Alignment> {
    if !front.same_shape(back) {
        return Err(Error::DimensionMismatch(format!(
            "front {}x{} vs back {}x{}",
            front.width(),
            front.height(),
            back.width(),
            back.height()
        )));
    }
    if front.valid_count() == 0 || back.valid_count() == 0 {
        return Err(Error::DegenerateMatch("all-zero frame".into()));
    }
    let m = max_shift as i64;
    let mut shifts: Vec<(i64, i64)> = (-m..=m).flat_map(|dy| (-m..=m).map(move |dx| (dy, dx))).collect();
    shifts.sort_by_key(|&(dy, dx)| (dy.abs() + dx.abs(), dy, dx));
    let scores: Vec<Option<f64>> = shifts
        .par_iter()
        .map(|&(dy, dx)| {
            let moved = back.shifted(dy, dx);
            let mut s = Sums::default();
            for (&x, &t) in front.samples().iter().zip(moved.samples()) {
                s.add(x, t);
            }
            s.score(NccMode::Normalized)
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(v) = *s {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    let (i, score) = best.ok_or_else(|| Error::DegenerateMatch("frames have no variance".into()))?;
    let shift = shifts[i];
    Ok(Alignment {
        frame: back.shifted(shift.0, shift.1),
        shift,
        score,
    })
}
