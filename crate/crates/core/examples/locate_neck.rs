//! Cut a neck template from a reference session and find it again in a
//! later capture where the subject stands a little off.

use neckvol::phantom::{render_clean, FrameGeometry};
use neckvol::registration::ncc_match;
use neckvol::{NeckTemplate, PhantomSpec, Rect, View};

fn main() -> neckvol::Result<()> {
    let spec = PhantomSpec::default().noiseless();
    let geom = FrameGeometry::fit(&spec, 2.5)?;
    let reference = render_clean(&spec, View::Front, &geom)?;
    let rect = Rect { row: 40, col: 50, height: 40, width: 60 };
    let template = NeckTemplate::from_reference(&reference, rect)?;

    let later = reference.shifted(4, -6);
    let m = ncc_match(&later, &template)?;
    println!("template at ({}, {}), found at ({}, {}), score {:.4}", rect.row, rect.col, m.row, m.col, m.score);
    Ok(())
}
