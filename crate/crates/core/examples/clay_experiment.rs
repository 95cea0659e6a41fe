//! Ten measurements with and without a 60 ml bump on the neck, then the
//! accuracy of the mean difference and the spread of each set.

use neckvol::stats::{run_experiment, ExperimentConfig};
use neckvol::{PhantomSpec, PipelineConfig};

fn main() -> neckvol::Result<()> {
    let spec = PhantomSpec::default();
    let bump = spec.with_bump_volume(35.0, 60.0)?;
    let r = run_experiment(&spec, &bump, &PipelineConfig::default(), &ExperimentConfig::default())?;
    println!("run  baseline L  with bump L");
    for (i, (a, b)) in r.baseline_volumes.iter().zip(&r.augmented_volumes).enumerate() {
        println!("{i:>3}  {a:>10.4}  {b:>11.4}");
    }
    println!(
        "mean delta {:.1} ml (true {:.1} ml, error {:.1}%)",
        1000.0 * r.mean_delta_liters,
        1000.0 * r.true_delta_liters,
        r.delta_error_percent
    );
    println!("std {:.1} ml / {:.1} ml, gap {:.2} mm", 1000.0 * r.std_baseline_liters, 1000.0 * r.std_augmented_liters, r.gap_mm);
    Ok(())
}
