//! The desk-scale convergence study: tracked transition layers against the
//! particle reference over a decreasing ladder of layer widths.

use peierls::analysis::{self, SweepScenario};
use peierls::potential::Potential;
use peierls::profiles::{self, GridSpec};
use std::f64::consts::PI;

fn main() -> peierls::Result<()> {
    let potential = Potential::builtin_sine().scale(1.0 / (PI * PI))?;
    let layer = profiles::solve_layer(&potential, &GridSpec::default_for(&potential))?;

    let scenario = SweepScenario::two_particle();
    let report = analysis::convergence_sweep(&scenario, &potential, &layer)?;
    println!(
        "two-particle scenario, reference collision at {:?}:",
        report.reference_collision_times
    );
    println!("  eps     err(t=0.2)   collision est.   plateau err(0.35)");
    for m in &report.per_epsilon {
        let e02 = m.tracking_errors.iter().find(|(t, _)| (*t - 0.2).abs() < 1e-9).unwrap().1;
        println!(
            "  {:<6}  {:.4e}   {:?}   {:.4e}",
            m.epsilon,
            e02,
            m.collision_time_estimates,
            m.plateau_error.unwrap()
        );
    }

    let report = analysis::convergence_sweep(&SweepScenario::three_particle(), &potential, &layer)?;
    println!("\nthree-particle scenario (one surviving up-crossing at the origin):");
    for m in &report.per_epsilon {
        println!("  eps = {:<6}: final crossings {:?}", m.epsilon, m.final_crossings);
    }
    Ok(())
}
