//! Average ten noisy captures, repair spikes and mask the background, then
//! compare against the noiseless render.

use neckvol::phantom::{render_clean, render_frames, FrameGeometry};
use neckvol::pipeline::preprocess_view;
use neckvol::{PhantomSpec, PipelineConfig, View};

fn main() -> neckvol::Result<()> {
    let spec = PhantomSpec::default();
    let geom = FrameGeometry::fit(&spec, 2.5)?;
    let frames = render_frames(&spec, View::Front, &geom, 10)?;
    let clean = render_clean(&spec, View::Front, &geom)?;
    let out = preprocess_view(&frames, &PipelineConfig::default())?;

    let error = |f: &neckvol::DepthFrame| {
        let d: Vec<f64> = f
            .samples()
            .iter()
            .zip(clean.samples())
            .filter(|(a, c)| **a > 0.0 && **c > 0.0)
            .map(|(a, c)| (a - c).abs())
            .collect();
        d.iter().sum::<f64>() / d.len() as f64
    };
    println!("mean |error| of one raw frame: {:.2} mm", error(&frames[0]));
    println!("mean |error| after filtering:  {:.2} mm", error(&out.frame));
    println!("{} samples replaced as outliers", out.replaced);
    Ok(())
}
