//! Merge front and back views into one cloud, calibrating the gap on the
//! known body thickness, and write it as PLY.
//!
//! `cargo run --example merge_views -- cloud.ply`

use std::path::PathBuf;

use neckvol::io::write_cloud;
use neckvol::phantom::{render_frames, FrameGeometry};
use neckvol::pipeline::{calibrate_gap_frames, merge_views, preprocess_view};
use neckvol::{PhantomSpec, PipelineConfig, View};

fn main() -> neckvol::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "cloud.ply".into()));
    let spec = PhantomSpec::default();
    let geom = FrameGeometry::fit(&spec, 2.5)?;
    let mut cfg = PipelineConfig::default();
    let front = preprocess_view(&render_frames(&spec, View::Front, &geom, 10)?, &cfg)?;
    let back = preprocess_view(&render_frames(&spec, View::Back, &geom, 10)?, &cfg)?;
    cfg.gap_mm = calibrate_gap_frames(&front.frame, &back.frame, spec.body_thickness_mm(), &cfg)?;
    let merged = merge_views(&front.frame, &back.frame, &cfg)?;
    write_cloud(&merged.cloud, &out)?;
    println!(
        "gap {:.2} mm, back shifted by {:?}, {} + {} points -> {}",
        cfg.gap_mm,
        merged.back_shift,
        merged.front_points,
        merged.back_points,
        out.display()
    );
    Ok(())
}
