//! Single-view half circumference per row, printed as CSV.

use neckvol::circumference::{measure_circumference, CircumferenceConfig};
use neckvol::phantom::{render_clean, FrameGeometry};
use neckvol::{PhantomSpec, View};

fn main() -> neckvol::Result<()> {
    let spec = PhantomSpec::cylinder(50.0, 120.0);
    let geom = FrameGeometry::fit(&spec, 2.5)?;
    let frame = render_clean(&spec, View::Front, &geom)?;
    let profile = measure_circumference(&frame, &CircumferenceConfig::default())?;
    print!("{}", profile.to_csv(true));
    eprintln!("π·r = {:.2} mm", std::f64::consts::PI * spec.neck_radius_mm);
    Ok(())
}
