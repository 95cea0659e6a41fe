//! Render a noisy front capture of the default phantom and write it as PGM.
//!
//! `cargo run --example phantom_render -- out_dir`

use std::path::PathBuf;

use neckvol::io::{write_frame_with_meta, FrameMeta};
use neckvol::phantom::{analytic_neck_volume, render_frame, FrameGeometry};
use neckvol::{PhantomSpec, View};

fn main() -> neckvol::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "phantom_out".into()));
    std::fs::create_dir_all(&dir).map_err(|e| neckvol::Error::Io { path: dir.clone(), source: e })?;
    let spec = PhantomSpec::default();
    let geom = FrameGeometry::fit(&spec, 2.5)?;
    let frame = render_frame(&spec, View::Front, &geom, 0)?;
    let path = dir.join("front_000.pgm");
    write_frame_with_meta(&frame, &path, &FrameMeta::new(geom.mm_per_pixel, spec.pose_distance_m, Some(View::Front)))?;
    println!("{}x{} frame written to {}", frame.width(), frame.height(), path.display());
    println!("analytic neck volume {:.4} L", analytic_neck_volume(&spec));
    Ok(())
}
