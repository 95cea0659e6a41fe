//! Two sessions of the same subject, the second with swelling on the neck.

use neckvol::phantom::{render_frames, FrameGeometry};
use neckvol::pipeline::{measure_two_view, ReportOptions};
use neckvol::stats::compare_sessions;
use neckvol::{PhantomSpec, PipelineConfig, View};

fn session(spec: &PhantomSpec, cfg: &PipelineConfig) -> neckvol::Result<neckvol::volumetry::MeasurementReport> {
    let geom = FrameGeometry::fit(spec, 2.5)?;
    let front = render_frames(spec, View::Front, &geom, 10)?;
    let back = render_frames(spec, View::Back, &geom, 10)?;
    measure_two_view(&front, &back, cfg, &ReportOptions::default())
}

fn main() -> neckvol::Result<()> {
    let cfg = PipelineConfig::default();
    let before = PhantomSpec { seed: 1, ..PhantomSpec::default() };
    let after = PhantomSpec { seed: 2, ..before.with_bump_volume(35.0, 40.0)? };
    let delta = compare_sessions(&session(&before, &cfg)?, &session(&after, &cfg)?)?;
    println!("{}", serde_json::to_string_pretty(&delta)?);
    Ok(())
}
