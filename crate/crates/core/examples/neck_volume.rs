//! Full two-view measurement of a noiseless phantom against its analytic
//! volume, with the area profile as CSV on stdout.

use neckvol::phantom::{analytic_neck_volume, render_clean, FrameGeometry};
use neckvol::pipeline::{measure_two_view, ReportOptions};
use neckvol::{PhantomSpec, PipelineConfig, View};

fn main() -> neckvol::Result<()> {
    let spec = PhantomSpec::default().noiseless();
    let geom = FrameGeometry::fit(&spec, 2.5)?;
    let front = render_clean(&spec, View::Front, &geom)?;
    let back = render_clean(&spec, View::Back, &geom)?;
    let report = measure_two_view(&[front], &[back], &PipelineConfig::default(), &ReportOptions::default())?;
    print!("{}", report.profile.to_csv());
    let (lo, hi) = report.profile.y_range(report.bounds.start_index, report.bounds.end_index);
    eprintln!("neck bounds span {:.1} mm", hi - lo);
    eprintln!("measured {:.4} L, analytic {:.4} L", report.volume_liters, analytic_neck_volume(&spec));
    Ok(())
}
