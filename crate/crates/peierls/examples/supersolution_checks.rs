//! The supersolution ansatz and the two patching inequalities at work: the
//! evolution-operator residual of the traveling ansatz around a repulsive
//! pair, and the fitted constants of the layer-overlap bounds.

use peierls::analysis;
use peierls::potential::Potential;
use peierls::profiles;

fn main() -> peierls::Result<()> {
    let (potential, layer) = profiles::normalize_for_corrector(&Potential::builtin_sine())?;
    let corrector = profiles::solve_corrector(&layer, &potential)?;
    println!(
        "unit-mobility sine: layer residual {:.2e}, corrector residual {:.2e}",
        layer.residual, corrector.residual
    );

    let eps = 0.01f64;
    let theta = eps.powf(0.4);
    let delta = analysis::tune_delta(&potential, &layer, &corrector, eps, theta)?;
    println!("tuned delta = {delta:.3e} at eps = {eps}, theta = eps^0.4 = {theta:.4}");
    let scan = analysis::repulsive_pair_residual(
        &potential, &layer, &corrector, eps, theta, delta + 0.05, delta,
    )?;
    println!(
        "repulsive-pair ansatz residual: min {:.3e} at x = {:.3} (supersolution iff >= 0)",
        scan.min, scan.argmin
    );

    // patching bounds with the two-harmonic potential's nontrivial corrector
    let bumpy = Potential::from_fourier(vec![0.575, -0.5, -0.075], vec![], 0.5)?;
    let (bw, bl) = profiles::normalize_for_corrector(&bumpy)?;
    let bc = profiles::solve_corrector(&bl, &bw)?;
    println!("\nlayer-overlap bounds, eps ladder at theta = eps^0.4, c = c' = 1/theta:");
    for eps in [1e-2f64, 1e-3, 1e-4] {
        let theta = eps.powf(0.4);
        let z = theta / eps;
        let c = 1.0 / theta;
        let pat = analysis::check_patching_inequality(c, c, eps, theta, z, &bl, &bc, 1.0)?;
        let dip = analysis::check_dipole_removal(c, c, eps, theta, z, &bl, &bc, 1.0)?;
        println!(
            "  eps = {eps:<6}: ordering slack {:+.2e} (K = {:.3}), dipole excess {:+.2e} (K = {:.3})",
            pat.min_slack, pat.fitted_k, dip.max_excess, dip.fitted_k
        );
    }
    Ok(())
}
