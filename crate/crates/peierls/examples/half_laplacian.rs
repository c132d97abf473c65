//! The two discretizations of `-(-Delta)^{1/2}` side by side: the Fourier
//! multiplier on a periodic grid against the periodized real-space
//! quadrature, and the graded-grid principal-value quadrature against the
//! harmonic-extension value of `I[arctan]`.

use peierls::halflap::{
    apply_periodic_quadrature, apply_quadrature, apply_spectral, cross_validate, CrossCheckInput,
    FarFieldModel, SampledFunction,
};
use std::f64::consts::PI;

fn main() -> peierls::Result<()> {
    // periodic route: I[cos] = -cos
    let n = 512;
    let l = 2.0 * PI;
    let values: Vec<f64> = (0..n).map(|j| (j as f64 * l / n as f64).cos()).collect();
    let spectral = apply_spectral(&values, l)?;
    let realspace = apply_periodic_quadrature(&values, l)?;
    let err_s = spectral.iter().zip(&values).map(|(a, b)| (a + b).abs()).fold(0.0f64, f64::max);
    let err_q = realspace.iter().zip(&values).map(|(a, b)| (a + b).abs()).fold(0.0f64, f64::max);
    println!("I[cos] + cos, spectral route:   max {err_s:.3e}");
    println!("I[cos] + cos, real-space route: max {err_q:.3e}");
    let report = cross_validate(CrossCheckInput::Periodic { values: &values, domain_length: l }, 1e-8)?;
    println!("cross-validation discrepancy:   {:.3e} (pass: {})", report.max_discrepancy, report.pass);

    // graded route: arctan with 1/x tails, oracle I[arctan](x) = -x/(1+x^2)
    let mut nodes = vec![0.0f64];
    let (mut x, mut h) = (0.0, 0.01);
    while x < 200.0 {
        if x >= 2.0 {
            h *= 1.05;
        }
        x += h;
        nodes.push(x);
    }
    let mut grid: Vec<f64> = nodes.iter().skip(1).map(|&v| -v).rev().collect();
    grid.extend(nodes);
    let samples: Vec<f64> = grid.iter().map(|&x| x.atan()).collect();
    let tails = FarFieldModel {
        left_constant: -PI / 2.0,
        right_constant: PI / 2.0,
        left_coeff1: -1.0,
        right_coeff1: -1.0,
        left_coeff2: 0.0,
        right_coeff2: 0.0,
        cutoff_radius: 200.0,
    };
    let f = SampledFunction::new(grid, samples, Some(tails))?;
    let queries: Vec<f64> = (-100..=100).map(|i| i as f64 * 0.1).collect();
    let iq = apply_quadrature(&f, &queries, None)?;
    let worst = iq
        .iter()
        .zip(&queries)
        .map(|(v, &x)| (v + x / (1.0 + x * x)).abs())
        .fold(0.0f64, f64::max);
    println!("graded PV quadrature vs harmonic-extension oracle on [-10,10]: max {worst:.3e}");
    Ok(())
}
