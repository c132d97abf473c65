//! Solve the standing layer for the prototype potential, report the
//! mobility and tail constants, then rescale to unit mobility and solve the
//! corrector cell problem.

use peierls::potential::Potential;
use peierls::profiles::{self, GridSpec};
use std::f64::consts::PI;

fn main() -> peierls::Result<()> {
    let sine = Potential::builtin_sine();
    let layer = profiles::solve_layer(&sine, &GridSpec::default_for(&sine))?;
    println!("sine potential: alpha = {:.6}", layer.alpha);
    println!("  residual          {:.3e}", layer.residual);
    println!("  c0 = 1/int(u')^2  {:.8}   (1/pi = {:.8})", layer.c0, 1.0 / PI);
    println!("  effective c0/pi   {:.8}", profiles::effective_mobility(&layer));
    println!(
        "  fitted 1/x tail   {:.6e} (expected -1/(alpha pi) = {:.6e})",
        layer.fitted_tail.right_coeff1,
        -1.0 / (layer.alpha * PI)
    );
    println!("  K1 sup bound      {:.3e}", layer.fitted_tail.sup_constant);
    for x in [0.0, 0.5, 1.0, 5.0] {
        println!(
            "  u({x}) = {:.6}   analytic {:.6}",
            layer.eval(x),
            0.5 + (layer.alpha * x).atan() / PI
        );
    }

    // corrector work happens at unit mobility; for the sine potential the
    // cell problem's right-hand side then cancels and psi vanishes
    let (unit, unit_layer) = profiles::normalize_for_corrector(&sine)?;
    let corr = profiles::solve_corrector(&unit_layer, &unit)?;
    println!("\nunit-mobility sine: alpha = {:.6}, c0 = {:.8}", unit.alpha(), unit_layer.c0);
    println!("  corrector residual   {:.3e}", corr.residual);
    println!("  solvability defect   {:.3e}", corr.multiplier);
    println!("  sup |psi|            {:.3e} (identically zero in the limit)", 
        corr.psi.iter().fold(0.0f64, |m, &v| m.max(v.abs())));

    // a two-harmonic potential has a genuine corrector
    let bumpy = Potential::from_fourier(vec![0.575, -0.5, -0.075], vec![], 0.5)?;
    let (unit_b, layer_b) = profiles::normalize_for_corrector(&bumpy)?;
    let corr_b = profiles::solve_corrector(&layer_b, &unit_b)?;
    println!("\ntwo-harmonic potential: alpha = {:.6}", unit_b.alpha());
    println!("  corrector residual   {:.3e}", corr_b.residual);
    println!("  sup |psi|            {:.4}", corr_b.psi.iter().fold(0.0f64, |m, &v| m.max(v.abs())));
    println!("  tail fit K2 = {:.5}, K3 = {:.5}", corr_b.k2, corr_b.k3);
    Ok(())
}
