//! Periodic multi-well potentials.
//!
//! A potential is stored as a truncated Fourier series of a 1-periodic
//! function,
//!
//! ```text
//! W(v) = c0 + sum_k  a_k cos(2 pi k v) + b_k sin(2 pi k v),
//! ```
//!
//! which makes the period exact and both derivatives analytic. The
//! prototype `sin^2(pi v)` is the series `1/2 - (1/2) cos(2 pi v)`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A periodic multi-well potential with analytic derivatives.
///
/// Immutable after construction and safe to share across threads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Potential {
    /// Cosine coefficients; index k multiplies `cos(2 pi k v)`. Index 0 is the
    /// constant term.
    cos_coeffs: Vec<f64>,
    /// Sine coefficients; index k multiplies `sin(2 pi k v)` (index 0 unused).
    sin_coeffs: Vec<f64>,
    /// Well curvature `alpha = W''(0)`.
    alpha: f64,
    /// Regularity tag `beta` in (0,1). Stored, never used by the numerics.
    holder_exponent: f64,
}

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

impl Potential {
    /// Build a potential from Fourier coefficients of a 1-periodic function.
    pub fn from_fourier(cos_coeffs: Vec<f64>, sin_coeffs: Vec<f64>, holder_exponent: f64) -> Result<Self> {
        if cos_coeffs.is_empty() && sin_coeffs.is_empty() {
            return Err(Error::InvalidInput("potential needs at least one coefficient".into()));
        }
        if !(0.0..1.0).contains(&holder_exponent) || holder_exponent <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "holder exponent must lie in (0,1), got {holder_exponent}"
            )));
        }
        let mut p = Potential {
            cos_coeffs,
            sin_coeffs,
            alpha: 0.0,
            holder_exponent,
        };
        p.alpha = p.deriv2(0.0);
        Ok(p)
    }

    /// The prototype potential `W(v) = sin^2(pi v)` with `alpha = 2 pi^2`.
    pub fn builtin_sine() -> Self {
        // sin^2(pi v) = 1/2 - cos(2 pi v)/2
        Potential::from_fourier(vec![0.5, -0.5], vec![], 0.5).expect("valid coefficients")
    }

    /// `W(v)`.
    pub fn eval(&self, v: f64) -> f64 {
        let mut w = 0.0;
        for (k, &a) in self.cos_coeffs.iter().enumerate() {
            w += a * (TWO_PI * k as f64 * v).cos();
        }
        for (k, &b) in self.sin_coeffs.iter().enumerate().skip(1) {
            w += b * (TWO_PI * k as f64 * v).sin();
        }
        w
    }

    /// `W'(v)`.
    pub fn deriv1(&self, v: f64) -> f64 {
        let mut w = 0.0;
        for (k, &a) in self.cos_coeffs.iter().enumerate().skip(1) {
            let om = TWO_PI * k as f64;
            w -= a * om * (om * v).sin();
        }
        for (k, &b) in self.sin_coeffs.iter().enumerate().skip(1) {
            let om = TWO_PI * k as f64;
            w += b * om * (om * v).cos();
        }
        w
    }

    /// `W''(v)`.
    pub fn deriv2(&self, v: f64) -> f64 {
        let mut w = 0.0;
        for (k, &a) in self.cos_coeffs.iter().enumerate().skip(1) {
            let om = TWO_PI * k as f64;
            w -= a * om * om * (om * v).cos();
        }
        for (k, &b) in self.sin_coeffs.iter().enumerate().skip(1) {
            let om = TWO_PI * k as f64;
            w -= b * om * om * (om * v).sin();
        }
        w
    }

    /// Well curvature `alpha = W''(0)`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The period is fixed at 1 by the representation.
    pub fn period(&self) -> f64 {
        1.0
    }

    pub fn holder_exponent(&self) -> f64 {
        self.holder_exponent
    }

    /// Largest `|W''|` over one period, used for explicit time-step bounds.
    pub fn max_abs_deriv2(&self) -> f64 {
        let n = 512;
        (0..n)
            .map(|i| self.deriv2(i as f64 / n as f64).abs())
            .fold(0.0, f64::max)
    }

    /// Multiply the potential (and hence `alpha`) by `factor > 0`.
    pub fn scale(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::InvalidInput(format!("scale factor must be positive, got {factor}")));
        }
        let mut p = self.clone();
        for a in &mut p.cos_coeffs {
            *a *= factor;
        }
        for b in &mut p.sin_coeffs {
            *b *= factor;
        }
        p.alpha = p.deriv2(0.0);
        Ok(p)
    }

    /// Check the multi-well conditions on a sample grid; failures are
    /// reported, not thrown.
    pub fn validate(&self, samples: usize) -> Result<ValidationReport> {
        if samples < 16 {
            return Err(Error::InvalidInput(format!("need at least 16 samples, got {samples}")));
        }
        let mut checks = Vec::new();

        // W(v+1) = W(v)
        let mut worst = 0.0f64;
        for i in 0..samples {
            let v = -1.5 + 3.0 * i as f64 / (samples - 1) as f64;
            worst = worst.max((self.eval(v + 1.0) - self.eval(v)).abs());
        }
        checks.push(Check::new("periodicity", worst, worst <= 1e-9));

        // W(0) = 0
        let w0 = self.eval(0.0).abs();
        checks.push(Check::new("zero_at_integers", w0, w0 <= 1e-12));

        // W > 0 on (0,1): uniform samples plus midpoint refinement around the
        // smallest values found.
        let mut min_val = f64::INFINITY;
        let mut min_at = 0.0;
        for i in 1..samples {
            let v = i as f64 / samples as f64;
            let w = self.eval(v);
            if w < min_val {
                min_val = w;
                min_at = v;
            }
        }
        // Refine around the smallest sample; stay a quarter-cell away from the
        // wells, where W vanishes by assumption and cancellation dominates.
        let h = 1.0 / samples as f64;
        let refine = 64;
        for j in 0..=refine {
            let v = (min_at - h + 2.0 * h * j as f64 / refine as f64).clamp(0.25 * h, 1.0 - 0.25 * h);
            min_val = min_val.min(self.eval(v));
        }
        checks.push(Check::new("positivity_inside_period", min_val, min_val > 0.0));

        // alpha > 0
        checks.push(Check::new("positive_curvature_at_wells", self.alpha, self.alpha > 0.0));

        // Derivative consistency against central differences, relative to
        // the derivative scale so the outcome is invariant under scaling.
        let step = 1e-5;
        let sup1 = (0..samples)
            .map(|i| self.deriv1(i as f64 / samples as f64).abs())
            .fold(1e-300, f64::max);
        let sup2 = (0..samples)
            .map(|i| self.deriv2(i as f64 / samples as f64).abs())
            .fold(1e-300, f64::max);
        let mut worst1 = 0.0f64;
        let mut worst2 = 0.0f64;
        for i in 0..samples {
            let v = i as f64 / samples as f64;
            let fd1 = (self.eval(v + step) - self.eval(v - step)) / (2.0 * step);
            let fd2 = (self.eval(v + step) - 2.0 * self.eval(v) + self.eval(v - step)) / (step * step);
            worst1 = worst1.max((fd1 - self.deriv1(v)).abs() / sup1);
            worst2 = worst2.max((fd2 - self.deriv2(v)).abs() / sup2);
        }
        checks.push(Check::new("first_derivative_consistency", worst1, worst1 <= 1e-6));
        checks.push(Check::new("second_derivative_consistency", worst2, worst2 <= 1e-4));

        Ok(ValidationReport { checks })
    }

    /// Short identifier used in file headers and manifests.
    pub fn describe(&self) -> String {
        if self.cos_coeffs == [0.5, -0.5] && self.sin_coeffs.is_empty() {
            "sine".to_string()
        } else if self.sin_coeffs.is_empty() && self.cos_coeffs.len() == 2 && self.cos_coeffs[0] == -self.cos_coeffs[1]
        {
            format!("sine*{:.6e}", -2.0 * self.cos_coeffs[1])
        } else {
            format!("fourier[{} cos, {} sin]", self.cos_coeffs.len(), self.sin_coeffs.len())
        }
    }
}

/// One validated condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Worst-case residual (meaning depends on the check).
    pub residual: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: &str, residual: f64, pass: bool) -> Self {
        Check { name: name.to_string(), residual, pass }
    }
}

/// Outcome of [`Potential::validate`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}
