//! Accuracy and precision runs on phantoms, and session comparison.
//!
//! An experiment measures a body `n` times without and `n` times with a
//! bump, each run on freshly seeded noisy captures. The difference of the two
//! mean volumes, set against the bump's known volume, gives the accuracy;
//! the spread within each condition gives the precision.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phantom::{analytic_neck_volume, derive_seed, render_frames, FrameGeometry, PhantomSpec, View};
use crate::pipeline::{calibrate_gap_frames, measure_two_view, preprocess_view, PipelineConfig, ReportOptions};
use crate::volumetry::MeasurementReport;

pub const RESULT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Baseline,
    Augmented,
}

impl Condition {
    fn word(self) -> u64 {
        match self {
            Condition::Baseline => 0,
            Condition::Augmented => 1,
        }
    }

    /// Stream reserved for the gap calibration capture.
    const CALIBRATION_WORD: u64 = 2;

    fn name(self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::Augmented => "augmented",
        }
    }
}

/// Seed of run `index` under `condition`.
pub fn run_seed(master_seed: u64, condition: Condition, index: usize) -> u64 {
    derive_seed(&[master_seed, condition.word(), index as u64])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub runs: usize,
    /// Captures averaged per view in each run.
    pub frames_per_view: usize,
    pub mm_per_pixel: f64,
    pub master_seed: u64,
    /// Replace the pipeline's gap with one calibrated on a separate capture
    /// of the baseline body.
    pub calibrate_gap: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            runs: 10,
            frames_per_view: 10,
            mm_per_pixel: 2.5,
            master_seed: 0,
            calibrate_gap: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub baseline_volumes: Vec<f64>,
    pub augmented_volumes: Vec<f64>,
    pub baseline_seeds: Vec<u64>,
    pub augmented_seeds: Vec<u64>,
    pub true_delta_liters: f64,
    pub mean_delta_liters: f64,
    pub delta_error_percent: f64,
    pub mean_baseline_liters: f64,
    pub mean_augmented_liters: f64,
    pub std_baseline_liters: f64,
    pub std_augmented_liters: f64,
    pub gap_mm: f64,
    pub experiment: ExperimentConfig,
    pub parameters: PipelineConfig,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (`n − 1` denominator).
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

fn same_body(a: &PhantomSpec, b: &PhantomSpec) -> bool {
    let strip = |s: &PhantomSpec| PhantomSpec {
        seed: 0,
        bump: None,
        ..s.clone()
    };
    strip(a) == strip(b)
}

/// Gap for `spec` from one front/back capture of its bump-free body, run
/// through the same preprocessing and denoising as a measurement.
pub fn calibrate_phantom_gap(
    spec: &PhantomSpec,
    geom: &FrameGeometry,
    frames: usize,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<f64> {
    let body = PhantomSpec {
        seed,
        bump: None,
        ..spec.clone()
    };
    let front = preprocess_view(&render_frames(&body, View::Front, geom, frames)?, cfg)?;
    let back = preprocess_view(&render_frames(&body, View::Back, geom, frames)?, cfg)?;
    calibrate_gap_frames(&front.frame, &back.frame, body.body_thickness_mm(), cfg)
}

/// One noisy measurement of `spec` reseeded with `seed`.
pub fn measure_phantom(
    spec: &PhantomSpec,
    geom: &FrameGeometry,
    frames: usize,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<MeasurementReport> {
    let spec = PhantomSpec {
        seed,
        ..spec.clone()
    };
    let front = render_frames(&spec, View::Front, geom, frames)?;
    let back = render_frames(&spec, View::Back, geom, frames)?;
    measure_two_view(
        &front,
        &back,
        cfg,
        &ReportOptions {
            deterministic: true,
            session_id: None,
        },
    )
}

fn run_condition(
    spec: &PhantomSpec,
    condition: Condition,
    geom: &FrameGeometry,
    cfg: &PipelineConfig,
    exp: &ExperimentConfig,
) -> Result<(Vec<f64>, Vec<u64>)> {
    let seeds: Vec<u64> = (0..exp.runs)
        .map(|i| run_seed(exp.master_seed, condition, i))
        .collect();
    let volumes = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            measure_phantom(spec, geom, exp.frames_per_view, seed, cfg)
                .map(|r| r.volume_liters)
                .map_err(|e| Error::RunFailed {
                    run: i,
                    condition: condition.name(),
                    seed,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((volumes, seeds))
}

/// Measures `spec` and `bump_spec` `exp.runs` times each.
pub fn run_experiment(
    spec: &PhantomSpec,
    bump_spec: &PhantomSpec,
    cfg: &PipelineConfig,
    exp: &ExperimentConfig,
) -> Result<ExperimentResult> {
    if exp.runs < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 runs, got {}", exp.runs)));
    }
    if exp.frames_per_view == 0 {
        return Err(Error::InvalidConfig("frames_per_view must be at least 1".into()));
    }
    if !same_body(spec, bump_spec) {
        return Err(Error::InvalidConfig("the two phantoms must differ only in their bump".into()));
    }
    spec.validate()?;
    bump_spec.validate()?;
    cfg.validate()?;
    let geom = FrameGeometry::fit(spec, exp.mm_per_pixel)?;
    let mut cfg = cfg.clone();
    if exp.calibrate_gap {
        let seed = derive_seed(&[exp.master_seed, Condition::CALIBRATION_WORD]);
        cfg.gap_mm = calibrate_phantom_gap(spec, &geom, exp.frames_per_view, seed, &cfg)?;
    }
    let (baseline_volumes, baseline_seeds) = run_condition(spec, Condition::Baseline, &geom, &cfg, exp)?;
    let (augmented_volumes, augmented_seeds) = run_condition(bump_spec, Condition::Augmented, &geom, &cfg, exp)?;
    let true_delta = analytic_neck_volume(bump_spec) - analytic_neck_volume(spec);
    let mean_baseline = mean(&baseline_volumes);
    let mean_augmented = mean(&augmented_volumes);
    let mean_delta = mean_augmented - mean_baseline;
    let delta_error_percent = if true_delta != 0.0 {
        100.0 * (mean_delta - true_delta).abs() / true_delta.abs()
    } else {
        f64::NAN
    };
    Ok(ExperimentResult {
        schema_version: RESULT_SCHEMA_VERSION,
        std_baseline_liters: sample_std(&baseline_volumes),
        std_augmented_liters: sample_std(&augmented_volumes),
        baseline_volumes,
        augmented_volumes,
        baseline_seeds,
        augmented_seeds,
        true_delta_liters: true_delta,
        mean_delta_liters: mean_delta,
        delta_error_percent,
        mean_baseline_liters: mean_baseline,
        mean_augmented_liters: mean_augmented,
        gap_mm: cfg.gap_mm,
        experiment: exp.clone(),
        parameters: cfg,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionDelta {
    pub schema_version: u32,
    pub reference_session: String,
    pub current_session: String,
    pub reference_liters: f64,
    pub current_liters: f64,
    pub delta_liters: f64,
    pub delta_percent: f64,
    /// Length of `y` shared by the two neck bounds, and that length as a
    /// fraction of the longer of the two.
    pub bounds_overlap_mm: f64,
    pub bounds_overlap_fraction: f64,
}

/// Volume change from `reference` to `current`. Refuses reports made with
/// different parameters.
pub fn compare_sessions(reference: &MeasurementReport, current: &MeasurementReport) -> Result<SessionDelta> {
    let diff = reference.parameters.differing_fields(&current.parameters);
    if !diff.is_empty() {
        return Err(Error::ParameterMismatch(diff));
    }
    let span = |r: &MeasurementReport| r.profile.y_range(r.bounds.start_index, r.bounds.end_index);
    let (a0, a1) = span(reference);
    let (b0, b1) = span(current);
    let overlap = (a1.min(b1) - a0.max(b0)).max(0.0);
    let longest = (a1 - a0).max(b1 - b0);
    let delta = current.volume_liters - reference.volume_liters;
    Ok(SessionDelta {
        schema_version: RESULT_SCHEMA_VERSION,
        reference_session: reference.session_id.clone(),
        current_session: current.session_id.clone(),
        reference_liters: reference.volume_liters,
        current_liters: current.volume_liters,
        delta_liters: delta,
        delta_percent: 100.0 * delta / reference.volume_liters,
        bounds_overlap_mm: overlap,
        bounds_overlap_fraction: if longest > 0.0 { overlap / longest } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (PhantomSpec, PhantomSpec) {
        let spec = PhantomSpec::default();
        let bump = spec.with_bump_volume(35.0, 60.0).unwrap();
        (spec, bump)
    }

    #[test]
    fn std_uses_n_minus_one() {
        assert_eq!(sample_std(&[1.0, 3.0]), 2f64.sqrt());
        assert_eq!(sample_std(&[5.0; 4]), 0.0);
        assert_eq!(mean(&[1.0, 2.0, 6.0]), 3.0);
    }

    #[test]
    fn seeds_differ_by_condition_and_index() {
        let a = run_seed(7, Condition::Baseline, 0);
        assert_ne!(a, run_seed(7, Condition::Augmented, 0));
        assert_ne!(a, run_seed(7, Condition::Baseline, 1));
        assert_eq!(a, run_seed(7, Condition::Baseline, 0));
    }

    #[test]
    fn noiseless_runs_have_zero_spread() {
        let (spec, bump) = small();
        let exp = ExperimentConfig {
            runs: 2,
            frames_per_view: 1,
            ..Default::default()
        };
        let r = run_experiment(&spec.noiseless(), &bump.noiseless(), &PipelineConfig::default(), &exp).unwrap();
        assert_eq!(r.std_baseline_liters, 0.0);
        assert_eq!(r.std_augmented_liters, 0.0);
        assert_eq!(r.baseline_volumes.len(), 2);
        assert!(r.mean_delta_liters > 0.0);
        let expect = 100.0 * (r.mean_delta_liters - r.true_delta_liters).abs() / r.true_delta_liters;
        assert_eq!(r.delta_error_percent, expect);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (spec, bump) = small();
        let cfg = PipelineConfig::default();
        let one = ExperimentConfig {
            runs: 1,
            ..Default::default()
        };
        assert!(matches!(run_experiment(&spec, &bump, &cfg, &one), Err(Error::InvalidConfig(_))));
        let other = PhantomSpec {
            neck_radius_mm: 55.0,
            ..bump.clone()
        };
        assert!(run_experiment(&spec, &other, &cfg, &ExperimentConfig::default()).is_err());
    }

    #[test]
    fn failing_run_names_its_seed() {
        let (spec, bump) = small();
        let cfg = PipelineConfig {
            far_mm: 600.0,
            ..Default::default()
        };
        let exp = ExperimentConfig {
            runs: 2,
            frames_per_view: 1,
            calibrate_gap: false,
            ..Default::default()
        };
        match run_experiment(&spec, &bump, &cfg, &exp) {
            Err(Error::RunFailed { run, condition, seed, .. }) => {
                assert_eq!(condition, "baseline");
                assert_eq!(seed, run_seed(0, Condition::Baseline, run));
            }
            other => panic!("expected a run failure, got {other:?}"),
        }
    }

    fn report(spec: &PhantomSpec, cfg: &PipelineConfig) -> MeasurementReport {
        let g = FrameGeometry::fit(spec, 2.5).unwrap();
        measure_phantom(spec, &g, 1, 3, cfg).unwrap()
    }

    #[test]
    fn session_against_itself() {
        let (spec, _) = small();
        let r = report(&spec.noiseless(), &PipelineConfig::default());
        let d = compare_sessions(&r, &r).unwrap();
        assert_eq!(d.delta_liters, 0.0);
        assert_eq!(d.delta_percent, 0.0);
        assert_eq!(d.bounds_overlap_fraction, 1.0);
    }

    #[test]
    fn mismatched_gap_is_refused() {
        let (spec, _) = small();
        let spec = spec.noiseless();
        let a = report(&spec, &PipelineConfig::default());
        let b = report(
            &spec,
            &PipelineConfig {
                gap_mm: 10.0,
                ..Default::default()
            },
        );
        match compare_sessions(&a, &b) {
            Err(Error::ParameterMismatch(f)) => assert_eq!(f, vec!["gap_mm".to_string()]),
            other => panic!("{other:?}"),
        }
    }
}
