//! Standing layer profiles, the corrector, and the mobility constant.
//!
//! The layer `u` solves `I[u] = W'(u)` with `u(-inf) = 0`, `u(inf) = 1`,
//! `u(0) = 1/2`, discretized on a graded grid (uniform core, geometric
//! stretching) with the far-field pinned to `H(x) - 1/(alpha pi x)` tails.
//! The corrector `psi` solves the linearized cell problem
//! `I[psi] - W''(u) psi = (W''(u) - W''(0))/alpha + u'` with zero far-field.
//!
//! Both solvers work against one dense quadrature matrix for `I` assembled
//! once per grid; the layer uses a damped Newton iteration with the
//! translation left as an explicit unknown so that `u(0) = 1/2` holds
//! exactly, and the corrector uses a bordered system that pins the
//! translation mode `u'` (the kernel of the linearized operator).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::halflap::{FarFieldModel, SampledFunction};
use crate::interp;
use crate::potential::Potential;
use crate::{Error, Result};

/// Geometry of the graded solver grid: uniform spacing in the core, then a
/// geometric stretch out to the truncation radius.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub core_half_width: f64,
    pub core_spacing: f64,
    pub stretch_ratio: f64,
    pub max_extent: f64,
}

impl GridSpec {
    /// Spacing tuned so that the layer core (width `~1/alpha`) is resolved.
    pub fn default_for(potential: &Potential) -> Self {
        let alpha = potential.alpha().max(1e-6);
        GridSpec {
            core_half_width: 2.0,
            core_spacing: (0.08 / alpha).min(0.01).max(1e-4),
            stretch_ratio: 1.05,
            max_extent: 200.0,
        }
    }

    /// Symmetric node set containing 0.
    pub fn nodes(&self) -> Vec<f64> {
        let mut right = Vec::new();
        let mut x = 0.0;
        let mut h = self.core_spacing;
        while x < self.max_extent {
            if x >= self.core_half_width {
                h *= self.stretch_ratio;
            }
            x += h;
            right.push(x);
        }
        let mut nodes: Vec<f64> = right.iter().rev().map(|&v| -v).collect();
        nodes.push(0.0);
        nodes.extend(&right);
        nodes
    }
}

/// How many nodes at each grid end are pinned to the far-field model instead
/// of carrying a quadrature row.
const PINNED: usize = 2;

/// Dense discretization of `I` on a fixed grid: `I[f] = A f + tail(model)`.
struct HalfLapSystem {
    nodes: Vec<f64>,
    matrix: DMatrix<f64>,
    /// Distances from each node to the two grid ends.
    z_left: Vec<f64>,
    z_right: Vec<f64>,
}

impl HalfLapSystem {
    fn assemble(nodes: &[f64]) -> Self {
        let n = nodes.len();
        let mut matrix = DMatrix::<f64>::zeros(n, n);
        let z_left: Vec<f64> = nodes.iter().map(|&x| x - nodes[0]).collect();
        let z_right: Vec<f64> = nodes.iter().map(|&x| nodes[n - 1] - x).collect();

        for i in PINNED..n - PINNED {
            let x = nodes[i];
            let r = inner_radius(nodes, i);
            let row = &mut matrix.row_mut(i);

            // |z| < r: curvature term from the local cubic at x
            {
                let cell = interp::locate_cell(nodes, x);
                let s = interp::stencil_start(n, cell);
                let xs = [nodes[s], nodes[s + 1], nodes[s + 2], nodes[s + 3]];
                for m in 0..4 {
                    let mut ys = [0.0; 4];
                    ys[m] = 1.0;
                    let c = interp::cubic_coeffs(&xs, &ys, x);
                    row[s + m] += 2.0 * c[2] * r / PI;
                }
            }

            // sampled cells on both sides
            let mut add_cell = |cell: usize, za: f64, zb: f64, side: f64| {
                let zm = 0.5 * (za + zb);
                let s = interp::stencil_start(n, cell);
                let xs = [nodes[s], nodes[s + 1], nodes[s + 2], nodes[s + 3]];
                let mom = if side > 0.0 {
                    cell_moments(za, zb, zm)
                } else {
                    cell_moments(-zb, -za, -zm)
                };
                for m in 0..4 {
                    let mut ys = [0.0; 4];
                    ys[m] = 1.0;
                    let c = interp::cubic_coeffs(&xs, &ys, x + side * zm);
                    row[s + m] +=
                        (c[0] * mom[0] + c[1] * mom[1] + c[2] * mom[2] + c[3] * mom[3]) / PI;
                }
                // the subtracted phi(x)
                row[i] -= mom[0] / PI;
            };
            let mut cell = interp::locate_cell(nodes, x + r);
            while cell + 1 < n {
                let za = (nodes[cell] - x).max(r);
                let zb = nodes[cell + 1] - x;
                if zb > za {
                    add_cell(cell, za, zb, 1.0);
                }
                cell += 1;
            }
            let mut cell = interp::locate_cell(nodes, x - r) as isize;
            while cell >= 0 {
                let c = cell as usize;
                let za = (x - nodes[c + 1]).max(r);
                let zb = x - nodes[c];
                if zb > za {
                    add_cell(c, za, zb, -1.0);
                }
                cell -= 1;
            }

            // the subtracted phi(x) under the tail integrals
            row[i] -= (1.0 / z_right[i] + 1.0 / z_left[i]) / PI;
        }

        HalfLapSystem { nodes: nodes.to_vec(), matrix, z_left, z_right }
    }

    /// Tail contribution at node `i` for a model translated to `center`.
    fn tail_at(&self, i: usize, model: &FarFieldModel, center: f64) -> f64 {
        let x = self.nodes[i] - center;
        let zr = self.z_right[i];
        let zl = self.z_left[i];
        (model.right_constant / zr
            + model.right_coeff1 * crate::halflap::tail_j1(x, zr)
            + model.right_coeff2 * crate::halflap::tail_j2(x, zr)
            + model.left_constant / zl
            - model.left_coeff1 * crate::halflap::tail_j1(-x, zl)
            + model.left_coeff2 * crate::halflap::tail_j2(-x, zl))
            / PI
    }

    fn tails(&self, model: &FarFieldModel, center: f64) -> DVector<f64> {
        let n = self.nodes.len();
        DVector::from_fn(n, |i, _| {
            if i < PINNED || i >= n - PINNED {
                0.0
            } else {
                self.tail_at(i, model, center)
            }
        })
    }
}

fn inner_radius(nodes: &[f64], i: usize) -> f64 {
    let left = if i > 0 { nodes[i] - nodes[i - 1] } else { nodes[1] - nodes[0] };
    let right = if i + 1 < nodes.len() { nodes[i + 1] - nodes[i] } else { left };
    2.0 * left.max(right)
}

/// Moments `int (z - zm)^k z^{-2} dz` over a same-sign interval `[za, zb]`.
pub(crate) fn cell_moments(za: f64, zb: f64, zm: f64) -> [f64; 4] {
    let i0 = 1.0 / za - 1.0 / zb;
    let lg = (zb / za).ln();
    [
        i0,
        lg - zm * i0,
        (zb - za) - 2.0 * zm * lg + zm * zm * i0,
        0.5 * (zb * zb - za * za) - 3.0 * zm * (zb - za) + 3.0 * zm * zm * lg - zm.powi(3) * i0,
    ]
}

/// Per-side least-squares tail coefficients of `f - plateau ~ A/x + B/x^2`,
/// fitted on `|x|` in `[fit_lo, fit_hi]`, plus the sup-bound constant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailFit {
    pub left_coeff1: f64,
    pub right_coeff1: f64,
    pub left_coeff2: f64,
    pub right_coeff2: f64,
    /// `sup |x^2 (f - model_without_quadratic)|` over the fit range.
    pub sup_constant: f64,
    pub fit_range: (f64, f64),
}

/// The upward standing layer with its derivative, quadrature image,
/// far-field description, and mobility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerProfile {
    pub grid: Vec<f64>,
    pub u: Vec<f64>,
    pub u_prime: Vec<f64>,
    /// Quadrature image `I[u]` on the grid (equals `W'(u)` up to the solver
    /// residual); kept so ansatz residuals can reuse the exact discretization.
    pub iu: Vec<f64>,
    /// Nodewise defect `I[u] - W'(u)` of the discrete solution; evaluation of
    /// `I[u]` off the nodes goes through `W'(u(x)) + defect(x)` so that the
    /// defining equation cancels exactly against the interpolated layer.
    pub iu_defect: Vec<f64>,
    pub tail: FarFieldModel,
    pub fitted_tail: TailFit,
    pub c0: f64,
    pub alpha: f64,
    /// Max interior residual of the discrete layer equation.
    pub residual: f64,
    pub potential_id: String,
}

/// The corrector profile `psi` with its fitted tail law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectorProfile {
    pub grid: Vec<f64>,
    pub psi: Vec<f64>,
    pub psi_prime: Vec<f64>,
    /// Quadrature image `I[psi]` on the grid.
    pub ipsi: Vec<f64>,
    /// Nodewise defect of the discrete corrector equation (includes the
    /// solvability multiplier term).
    pub ipsi_defect: Vec<f64>,
    pub tail: FarFieldModel,
    /// Shared `1/x` coefficient of the two tails.
    pub k2: f64,
    /// Sup bound for `|x^2 (psi - K2/x)|` on the fit range.
    pub k3: f64,
    /// Max interior residual of the discrete corrector equation.
    pub residual: f64,
    /// Solvability multiplier along the translation mode; zero for an
    /// exactly unit-mobility potential.
    pub multiplier: f64,
}

fn layer_model(alpha: f64, b_left: f64, b_right: f64, extent: f64) -> FarFieldModel {
    FarFieldModel {
        left_constant: 0.0,
        right_constant: 1.0,
        left_coeff1: -1.0 / (alpha * PI),
        right_coeff1: -1.0 / (alpha * PI),
        left_coeff2: b_left,
        right_coeff2: b_right,
        cutoff_radius: extent,
    }
}

fn model_shifted(model: &FarFieldModel, x: f64, center: f64) -> f64 {
    model.eval(x - center)
}

/// Solve the layer equation by damped Newton iteration.
///
/// The normalization `u(0) = 1/2` is imposed by translation: after the first
/// solve the 1/2-crossing is located by monotone interpolation, the
/// far-field center moves there, the system is solved once more, and any
/// residual offset is removed by resampling the profile (the equation is
/// translation invariant, so the resample preserves the residual).
pub fn solve_layer(potential: &Potential, spec: &GridSpec) -> Result<LayerProfile> {
    let report = potential.validate(64)?;
    if !report.all_pass() {
        return Err(Error::InvalidInput(format!(
            "potential fails multi-well validation: {:?}",
            report.failed().iter().map(|c| c.name.clone()).collect::<Vec<_>>()
        )));
    }
    let alpha = potential.alpha();
    let nodes = spec.nodes();
    let system = HalfLapSystem::assemble(&nodes);

    let mut model = layer_model(alpha, 0.0, 0.0, *nodes.last().unwrap());
    let mut u = newton_layer(potential, &system, &model, 0.0, None)?;

    // Re-center on the measured crossing, refit the quadratic tail
    // corrections, and solve again; iterate because translating the samples
    // of a converged profile costs a commutator error proportional to the
    // shift, so the last resample must be tiny.
    let mut center = locate_crossing(&nodes, &u)?;
    let fit = fit_tails(&nodes, &u, &[0.0, 1.0], -1.0 / (alpha * PI), spec);
    model.left_coeff2 = fit.left_coeff2;
    model.right_coeff2 = fit.right_coeff2;
    for _ in 0..5 {
        u = resample(&nodes, &u, &model, center, center);
        u = newton_layer(potential, &system, &model, 0.0, Some(&u))?;
        center = locate_crossing(&nodes, &u)?;
        if center.abs() <= 1e-10 {
            break;
        }
    }

    // exact normalization: translate the samples by the leftover offset
    let n = nodes.len();
    let i0 = nodes.iter().position(|&x| x == 0.0).expect("grid contains 0");
    if center.abs() > 0.0 {
        u = resample(&nodes, &u, &model, 0.0, center);
    }
    u[i0] = 0.5;
    // For symmetric wells, W(1-v) = W(v), the layer obeys u(-x) = 1 - u(x);
    // enforce it to the bit so that symmetric multi-layer configurations do
    // not inherit a symmetry-breaking seed (collisions amplify one).
    let symmetric_wells = (0..33).all(|k| {
        let v = k as f64 / 32.0;
        (potential.eval(v) - potential.eval(1.0 - v)).abs() <= 1e-12
    });
    if symmetric_wells {
        for i in 0..n / 2 {
            let avg = 0.5 * (u[i] + 1.0 - u[n - 1 - i]);
            u[i] = avg;
            u[n - 1 - i] = 1.0 - avg;
        }
    }
    if u.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Numerical("monotonicity lost while re-centering the layer".into()));
    }

    let fitted_tail = fit_tails(&nodes, &u, &[0.0, 1.0], -1.0 / (alpha * PI), spec);
    let mut u_prime: Vec<f64> = nodes.iter().map(|&x| interp::deriv_cubic(&nodes, &u, x)).collect();
    if symmetric_wells {
        for i in 0..n / 2 {
            let avg = 0.5 * (u_prime[i] + u_prime[n - 1 - i]);
            u_prime[i] = avg;
            u_prime[n - 1 - i] = avg;
        }
    }
    let uv = DVector::from_column_slice(&u);
    let iu_vec = &system.matrix * &uv + system.tails(&model, 0.0);
    let mut iu: Vec<f64> = iu_vec.iter().copied().collect();
    let mut residual = 0.0f64;
    let mut residual_at = 0.0f64;
    for i in 0..n {
        if i < PINNED || i >= n - PINNED {
            iu[i] = potential.deriv1(u[i]);
        } else {
            let r = (iu[i] - potential.deriv1(u[i])).abs();
            if r > residual {
                residual = r;
                residual_at = nodes[i];
            }
        }
    }
    if std::env::var("PEIERLS_TRACE").is_ok() {
        eprintln!("  [solve_layer] residual {residual:.3e} at x = {residual_at:.3}, crossing offset was {center:.3e}");
    }

    let iu_defect: Vec<f64> = iu.iter().zip(&u).map(|(i, &v)| i - potential.deriv1(v)).collect();
    let mut layer = LayerProfile {
        grid: nodes,
        u,
        u_prime,
        iu,
        iu_defect,
        tail: model,
        fitted_tail,
        c0: 0.0,
        alpha,
        residual,
        potential_id: potential.describe(),
    };
    layer.c0 = mobility(&layer);
    Ok(layer)
}

/// The far-field model translated by `center`, folded into the quadratic
/// coefficients; `a/(x-c) = a/x + ac/x^2 + O(c^2/x^3)`.
fn shifted_model(model: &FarFieldModel, center: f64) -> FarFieldModel {
    let mut m = model.clone();
    m.left_coeff2 += m.left_coeff1 * center;
    m.right_coeff2 += m.right_coeff1 * center;
    m
}

/// 1/2-crossing of a monotone profile.
fn locate_crossing(nodes: &[f64], u: &[f64]) -> Result<f64> {
    let cell = (0..nodes.len() - 1)
        .find(|&i| u[i] <= 0.5 && u[i + 1] > 0.5)
        .ok_or_else(|| Error::Numerical("layer has no 1/2-crossing".into()))?;
    Ok(interp::crossing_in_cell(nodes, u, cell, 0.5))
}

/// One damped-Newton run with the far-field center held fixed; returns the
/// node values.
fn newton_layer(
    potential: &Potential,
    system: &HalfLapSystem,
    model: &FarFieldModel,
    center: f64,
    warm_start: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let nodes = &system.nodes;
    let n = nodes.len();
    let alpha = potential.alpha();

    let mut u = match warm_start {
        Some(w) => DVector::from_column_slice(w),
        None => DVector::from_fn(n, |i, _| 0.5 + (alpha * (nodes[i] - center)).atan() / PI),
    };
    let tails = system.tails(model, center);

    let residual_vec = |u: &DVector<f64>| -> DVector<f64> {
        let mut f = &system.matrix * u + &tails;
        for i in 0..n {
            if i < PINNED || i >= n - PINNED {
                f[i] = u[i] - model_shifted(model, nodes[i], center);
            } else {
                f[i] -= potential.deriv1(u[i]);
            }
        }
        f
    };

    let mut prev_norm = f64::INFINITY;
    let mut slow_iterations = 0;
    for iteration in 0..60 {
        let f = residual_vec(&u);
        let norm = f.amax();
        if norm <= 1e-11 {
            break;
        }
        // stagnation at the discretization floor counts as convergence; the
        // caller checks the reported residual against its own contract
        if norm > 0.9 * prev_norm {
            slow_iterations += 1;
            if slow_iterations >= 4 {
                break;
            }
        } else {
            slow_iterations = 0;
        }
        prev_norm = norm;
        if iteration == 59 {
            return Err(Error::Numerical(format!(
                "layer Newton failed to converge, residual {norm:.3e}"
            )));
        }

        let mut jac = system.matrix.clone();
        for i in 0..n {
            if i < PINNED || i >= n - PINNED {
                for j in 0..n {
                    jac[(i, j)] = 0.0;
                }
                jac[(i, i)] = 1.0;
            } else {
                jac[(i, i)] -= potential.deriv2(u[i]);
            }
        }
        // one round of iterative refinement; the translation mode makes the
        // Jacobian ill-conditioned and a bare LU solve floors the residual
        // around machine epsilon times the condition number
        let rhs = -&f;
        let lu = jac.clone().lu();
        let mut delta = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("singular layer Jacobian".into()))?;
        let lin_res = &rhs - &jac * &delta;
        if let Some(corr) = lu.solve(&lin_res) {
            delta += corr;
        }
        // Project out the translation mode: the residual is flat along the
        // layer family (the normalization is restored afterwards by
        // re-centering), while a translation component in the step only
        // triggers the quadratic terms and stalls the line search.
        let uprime = DVector::from_fn(n, |i, _| interp::deriv_cubic(nodes, u.as_slice(), nodes[i]));
        let coeff = delta.dot(&uprime) / uprime.dot(&uprime);
        delta -= &uprime * coeff;
        let dmax = delta.amax();
        if dmax > 0.25 {
            delta *= 0.25 / dmax;
        }

        // backtracking: residual must drop and monotonicity must survive
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let u_try = &u + &delta * step;
            let monotone = (1..n).all(|i| u_try[i] > u_try[i - 1] - 1e-12);
            if monotone {
                let f_try = residual_vec(&u_try);
                if f_try.amax() < norm {
                    u = u_try;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            // no decrease left: the discretization floor; report it honestly
            break;
        }
    }
    Ok(u.iter().copied().collect())
}

/// Values of the profile translated by `t` (crossing moves by `-t`),
/// resampled on the same grid; the far-field model (centered at `center`)
/// continues the samples past the edges.
fn resample(nodes: &[f64], values: &[f64], model: &FarFieldModel, center: f64, t: f64) -> Vec<f64> {
    let view = SampledFunction {
        nodes: nodes.to_vec(),
        values: values.to_vec(),
        farfield: Some(shifted_model(model, center)),
    };
    nodes.iter().map(|&x| view.eval(x + t)).collect()
}

fn fit_tails(
    nodes: &[f64],
    values: &[f64],
    plateaus: &[f64; 2],
    expected_coeff1: f64,
    spec: &GridSpec,
) -> TailFit {
    let hi = 0.5 * spec.max_extent;
    let lo = 5.0f64.min(hi / 4.0);
    let fit_side = |side: f64| -> (f64, f64) {
        // least squares for  g(x) = A/x + B/x^2
        let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, &x) in nodes.iter().enumerate() {
            if x * side < lo || x * side > hi {
                continue;
            }
            let plateau = if side > 0.0 { plateaus[1] } else { plateaus[0] };
            let g = values[i] - plateau;
            let (p, q) = (1.0 / x, 1.0 / (x * x));
            s11 += p * p;
            s12 += p * q;
            s22 += q * q;
            b1 += p * g;
            b2 += q * g;
        }
        let det = s11 * s22 - s12 * s12;
        if det.abs() < 1e-30 {
            return (0.0, 0.0);
        }
        ((s22 * b1 - s12 * b2) / det, (s11 * b2 - s12 * b1) / det)
    };
    let (a_r, b_r) = fit_side(1.0);
    let (a_l, b_l) = fit_side(-1.0);
    let mut sup = 0.0f64;
    for (i, &x) in nodes.iter().enumerate() {
        if x.abs() < 1.0 || x.abs() > hi {
            continue;
        }
        let plateau = if x > 0.0 { plateaus[1] } else { plateaus[0] };
        sup = sup.max(((values[i] - plateau - expected_coeff1 / x) * x * x).abs());
    }
    TailFit {
        left_coeff1: a_l,
        right_coeff1: a_r,
        left_coeff2: b_l,
        right_coeff2: b_r,
        sup_constant: sup,
        fit_range: (lo, hi),
    }
}

/// Composite integral of the local cubic interpolant over the grid.
pub(crate) fn integrate(nodes: &[f64], values: &[f64]) -> f64 {
    let n = nodes.len();
    let mut acc = 0.0;
    for cell in 0..n - 1 {
        let h = nodes[cell + 1] - nodes[cell];
        let mid = 0.5 * (nodes[cell] + nodes[cell + 1]);
        let s = interp::stencil_start(n, cell);
        let xs = [nodes[s], nodes[s + 1], nodes[s + 2], nodes[s + 3]];
        let ys = [values[s], values[s + 1], values[s + 2], values[s + 3]];
        let c = interp::cubic_coeffs(&xs, &ys, mid);
        acc += c[0] * h + c[2] * h * h * h / 12.0;
    }
    acc
}

/// Mobility `c0 = (int (u')^2)^{-1}`, including the `x^{-4}` tail mass
/// beyond the grid.
pub fn mobility(profile: &LayerProfile) -> f64 {
    let sq: Vec<f64> = profile.u_prime.iter().map(|d| d * d).collect();
    let mut total = integrate(&profile.grid, &sq);
    let a = 1.0 / (profile.alpha * PI);
    let ends = [profile.grid[0].abs(), profile.grid.last().unwrap().abs()];
    for x in ends {
        total += a * a / (3.0 * x * x * x);
    }
    1.0 / total
}

/// Scale the potential to unit mobility: `W -> c0 W`, `eps -> sqrt(c0) eps`.
pub fn rescale_to_unit_mobility(potential: &Potential, epsilon: f64) -> Result<(Potential, f64)> {
    let layer = solve_layer(potential, &GridSpec::default_for(potential))?;
    let scaled = potential.scale(layer.c0)?;
    Ok((scaled, layer.c0.sqrt() * epsilon))
}

/// Interaction coefficient of the sharp-interface particle limit under this
/// operator normalization (symbol `-|xi|`): transition layers of the
/// evolution follow `dx_i/dt = (c0/pi) sum b_i b_j / (x_i - x_j)`.
pub fn effective_mobility(layer: &LayerProfile) -> f64 {
    layer.c0 / PI
}

/// Scale the potential so the *effective* mobility is one, i.e. so tracked
/// transitions follow the unit-coefficient particle system:
/// `W -> (c0/pi) W`, `eps -> sqrt(c0/pi) eps`.
pub fn rescale_to_unit_effective_mobility(
    potential: &Potential,
    epsilon: f64,
) -> Result<(Potential, f64)> {
    let layer = solve_layer(potential, &GridSpec::default_for(potential))?;
    let kappa = layer.c0 / PI;
    let scaled = potential.scale(kappa)?;
    Ok((scaled, kappa.sqrt() * epsilon))
}

/// Scale the potential until the discrete solvability defect of the
/// corrector equation vanishes, i.e. until the discretized mobility is one
/// to near machine precision. Secant iteration on the scale factor; each
/// step re-solves the layer.
///
/// The corrector right-hand side is orthogonal to the translation mode
/// exactly when `c0 = 1`, so corrector work starts here.
pub fn normalize_for_corrector(potential: &Potential) -> Result<(Potential, LayerProfile)> {
    let mut scale = {
        let layer = solve_layer(potential, &GridSpec::default_for(potential))?;
        layer.c0
    };
    let defect_of = |s: f64| -> Result<(f64, Potential, LayerProfile)> {
        let p = potential.scale(s)?;
        let layer = solve_layer(&p, &GridSpec::default_for(&p))?;
        Ok((corrector_defect(&layer, &p), p, layer))
    };
    let (mut d0, mut p0, mut l0) = defect_of(scale)?;
    if d0.abs() < 1e-10 {
        return Ok((p0, l0));
    }
    // d(scale) is close to scale/c0(W) - 1, so secant converges in a step or two
    let mut prev = (scale, d0);
    scale *= 1.0 - d0;
    for _ in 0..8 {
        let (d1, p1, l1) = defect_of(scale)?;
        if d1.abs() < 1e-10 {
            return Ok((p1, l1));
        }
        let slope = (d1 - prev.1) / (scale - prev.0);
        prev = (scale, d1);
        scale -= d1 / slope;
        d0 = d1;
        p0 = p1;
        l0 = l1;
    }
    if d0.abs() < 1e-7 {
        Ok((p0, l0))
    } else {
        Err(Error::Numerical(format!(
            "mobility normalization stalled at defect {d0:.3e}"
        )))
    }
}

/// Discrete `<rhs, u'> / <u', u'>` for the corrector right-hand side.
fn corrector_defect(layer: &LayerProfile, potential: &Potential) -> f64 {
    let alpha = potential.alpha();
    let rhs_up: Vec<f64> = layer
        .grid
        .iter()
        .enumerate()
        .map(|(i, _)| {
            ((potential.deriv2(layer.u[i]) - alpha) / alpha + layer.u_prime[i]) * layer.u_prime[i]
        })
        .collect();
    let up_sq: Vec<f64> = layer.u_prime.iter().map(|d| d * d).collect();
    integrate(&layer.grid, &rhs_up) / integrate(&layer.grid, &up_sq)
}

/// Solve the corrector equation on the layer's grid.
///
/// The linearized operator has the translation mode `u'` in its kernel, so
/// the system is solved in bordered form: the returned `multiplier` is the
/// component of the right-hand side along that mode (the solvability
/// defect), and `psi` is the representative orthogonal to `u'`.
pub fn solve_corrector(layer: &LayerProfile, potential: &Potential) -> Result<CorrectorProfile> {
    if layer.residual > 1e-6 {
        return Err(Error::InvalidInput(format!(
            "layer residual {:.3e} too large for corrector work",
            layer.residual
        )));
    }
    let nodes = &layer.grid;
    let n = nodes.len();
    let alpha = potential.alpha();
    let system = HalfLapSystem::assemble(nodes);

    let mut model = FarFieldModel::constants(0.0, 0.0, *nodes.last().unwrap());
    let mut solution = corrector_pass(layer, potential, &system, &model)?;

    // fit the 1/x tail and fold it back into the far field once
    let (k2, _) = fit_k2(nodes, &solution.0, layer);
    model.left_coeff1 = k2;
    model.right_coeff1 = k2;
    let fit = fit_tails(nodes, &solution.0, &[0.0, 0.0], k2, &spec_like(nodes));
    model.left_coeff2 = fit.left_coeff2;
    model.right_coeff2 = fit.right_coeff2;
    solution = corrector_pass(layer, potential, &system, &model)?;
    let (psi, multiplier, residual) = solution;

    let (k2, k3) = fit_k2(nodes, &psi, layer);
    let psi_prime: Vec<f64> = nodes.iter().map(|&x| interp::deriv_cubic(nodes, &psi, x)).collect();
    let pv = DVector::from_column_slice(&psi);
    let ipsi_vec = &system.matrix * &pv + system.tails(&model, 0.0);
    let mut ipsi: Vec<f64> = ipsi_vec.iter().copied().collect();
    for i in 0..n {
        if i < PINNED || i >= n - PINNED {
            ipsi[i] = potential.deriv2(layer.u[i]) * psi[i]
                + (potential.deriv2(layer.u[i]) - alpha) / alpha
                + layer.u_prime[i];
        }
    }

    let ipsi_defect: Vec<f64> = (0..n)
        .map(|i| {
            ipsi[i]
                - potential.deriv2(layer.u[i]) * psi[i]
                - (potential.deriv2(layer.u[i]) - alpha) / alpha
                - layer.u_prime[i]
        })
        .collect();
    Ok(CorrectorProfile {
        grid: nodes.clone(),
        psi,
        psi_prime,
        ipsi,
        ipsi_defect,
        tail: model,
        k2,
        k3,
        residual,
        multiplier,
    })
}

fn spec_like(nodes: &[f64]) -> GridSpec {
    GridSpec {
        core_half_width: 2.0,
        core_spacing: 0.01,
        stretch_ratio: 1.05,
        max_extent: *nodes.last().unwrap(),
    }
}

fn corrector_pass(
    layer: &LayerProfile,
    potential: &Potential,
    system: &HalfLapSystem,
    model: &FarFieldModel,
) -> Result<(Vec<f64>, f64, f64)> {
    let nodes = &system.nodes;
    let n = nodes.len();
    let alpha = potential.alpha();

    // quadrature weights of the discrete inner product <u', .>
    let mut weights = vec![0.0; n];
    for cell in 0..n - 1 {
        let h = nodes[cell + 1] - nodes[cell];
        weights[cell] += 0.5 * h;
        weights[cell + 1] += 0.5 * h;
    }

    let mut mat = DMatrix::<f64>::zeros(n + 1, n + 1);
    mat.view_mut((0, 0), (n, n)).copy_from(&system.matrix);
    let tails = system.tails(model, 0.0);
    let mut rhs = DVector::<f64>::zeros(n + 1);
    for i in 0..n {
        if i < PINNED || i >= n - PINNED {
            for j in 0..n {
                mat[(i, j)] = 0.0;
            }
            mat[(i, i)] = 1.0;
            rhs[i] = model.eval(nodes[i]);
        } else {
            mat[(i, i)] -= potential.deriv2(layer.u[i]);
            mat[(i, n)] = layer.u_prime[i];
            rhs[i] = (potential.deriv2(layer.u[i]) - alpha) / alpha + layer.u_prime[i] - tails[i];
        }
        mat[(n, i)] = weights[i] * layer.u_prime[i];
    }

    let sol = mat
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("corrector system is singular; refine the grid".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("corrector solve produced non-finite values".into()));
    }
    let psi: Vec<f64> = sol.rows(0, n).iter().copied().collect();
    let multiplier = sol[n];

    // honest residual of the stated equation (the multiplier term included)
    let pv = DVector::from_column_slice(&psi);
    let image = &system.matrix * &pv + &tails;
    let mut residual = 0.0f64;
    for i in PINNED..n - PINNED {
        let r = image[i]
            - potential.deriv2(layer.u[i]) * psi[i]
            - (potential.deriv2(layer.u[i]) - alpha) / alpha
            - layer.u_prime[i];
        residual = residual.max(r.abs());
    }
    Ok((psi, multiplier, residual))
}

/// Joint least squares of `psi ~ K2/x` over both tails (shared K2), plus the
/// sup constant `K3` for the quadratic remainder.
fn fit_k2(nodes: &[f64], psi: &[f64], layer: &LayerProfile) -> (f64, f64) {
    let hi = 0.5 * *nodes.last().unwrap();
    let lo = 5.0f64.min(hi / 4.0);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &x) in nodes.iter().enumerate() {
        if x.abs() < lo || x.abs() > hi {
            continue;
        }
        num += psi[i] / x;
        den += 1.0 / (x * x);
    }
    let k2 = if den > 0.0 { num / den } else { 0.0 };
    let mut k3 = 0.0f64;
    for (i, &x) in nodes.iter().enumerate() {
        if x.abs() < 1.0 || x.abs() > hi {
            continue;
        }
        k3 = k3.max(((psi[i] - k2 / x) * x * x).abs());
    }
    let _ = layer;
    (k2, k3)
}

impl LayerProfile {
    fn sampled(&self) -> SampledFunction {
        SampledFunction {
            nodes: self.grid.clone(),
            values: self.u.clone(),
            farfield: Some(self.tail.clone()),
        }
    }

    /// `u(x)` with tail-model continuation beyond the grid.
    pub fn eval(&self, x: f64) -> f64 {
        self.sampled_eval(&self.u, x, |y| self.tail.eval(y))
    }

    /// `u'(x)`.
    pub fn deriv(&self, x: f64) -> f64 {
        self.sampled_eval(&self.u_prime, x, |y| {
            let (a, b) = if y > 0.0 {
                (self.tail.right_coeff1, self.tail.right_coeff2)
            } else {
                (self.tail.left_coeff1, self.tail.left_coeff2)
            };
            -a / (y * y) - 2.0 * b / (y * y * y)
        })
    }

    /// Quadrature image `I[u](x)`: the defining equation on the interpolated
    /// layer plus the interpolated nodewise defect; beyond the grid the tail
    /// model alone.
    pub fn eval_iu(&self, x: f64, potential: &Potential) -> f64 {
        let defect = self.sampled_eval(&self.iu_defect, x, |_| 0.0);
        potential.deriv1(self.eval(x)) + defect
    }

    fn sampled_eval(&self, values: &[f64], x: f64, beyond: impl Fn(f64) -> f64) -> f64 {
        if x < self.grid[0] || x > *self.grid.last().unwrap() {
            beyond(x)
        } else {
            interp::eval_cubic(&self.grid, values, x)
        }
    }

    /// Oriented layer `u(x; b)`: `u(bx) + (b-1)/2`.
    pub fn oriented(&self, x: f64, b: i8) -> f64 {
        let bf = b as f64;
        self.eval(bf * x) + (bf - 1.0) / 2.0
    }

    /// `d/dx u(x; b) = b u'(bx)`.
    pub fn oriented_deriv(&self, x: f64, b: i8) -> f64 {
        let bf = b as f64;
        bf * self.deriv(bf * x)
    }

    /// `I[u(.; b)](x) = I[u](bx)`.
    pub fn oriented_iu(&self, x: f64, b: i8, potential: &Potential) -> f64 {
        self.eval_iu(b as f64 * x, potential)
    }

    /// Borrowed view for the quadrature operator.
    pub fn as_sampled(&self) -> SampledFunction {
        self.sampled()
    }
}

impl CorrectorProfile {
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.grid[0] || x > *self.grid.last().unwrap() {
            self.tail.eval(x)
        } else {
            interp::eval_cubic(&self.grid, &self.psi, x)
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        if x < self.grid[0] || x > *self.grid.last().unwrap() {
            let b = if x > 0.0 { self.tail.right_coeff2 } else { self.tail.left_coeff2 };
            -self.k2 / (x * x) - 2.0 * b / (x * x * x)
        } else {
            interp::eval_cubic(&self.grid, &self.psi_prime, x)
        }
    }

    pub fn eval_ipsi(&self, x: f64, layer: &LayerProfile, potential: &Potential) -> f64 {
        let defect = if x < self.grid[0] || x > *self.grid.last().unwrap() {
            0.0
        } else {
            interp::eval_cubic(&self.grid, &self.ipsi_defect, x)
        };
        let u = layer.eval(x);
        potential.deriv2(u) * self.eval(x)
            + (potential.deriv2(u) - potential.alpha()) / potential.alpha()
            + layer.deriv(x)
            + defect
    }

    /// Oriented corrector `psi(x; b) = b psi(bx)`.
    pub fn oriented(&self, x: f64, b: i8) -> f64 {
        let bf = b as f64;
        bf * self.eval(bf * x)
    }

    /// `d/dx psi(x; b) = psi'(bx)`.
    pub fn oriented_deriv(&self, x: f64, b: i8) -> f64 {
        self.deriv(b as f64 * x)
    }

    /// `I[psi(.; b)](x) = b I[psi](bx)`.
    pub fn oriented_ipsi(&self, x: f64, b: i8, layer: &LayerProfile, potential: &Potential) -> f64 {
        b as f64 * self.eval_ipsi(b as f64 * x, layer, potential)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil;

    #[test]
    fn sine_layer_matches_analytic_solution() {
        let layer = testutil::sine_layer();
        assert!(layer.residual <= 1e-8, "residual {}", layer.residual);
        let alpha = 2.0 * PI * PI;
        let mut worst = 0.0f64;
        for i in 0..=800 {
            let x = -20.0 + 0.05 * i as f64;
            worst = worst.max((layer.eval(x) - (0.5 + (alpha * x).atan() / PI)).abs());
        }
        assert!(worst <= 1e-4, "max deviation {worst}");
        // normalization is exact, not approximate
        let i0 = layer.grid.iter().position(|&x| x == 0.0).unwrap();
        assert_eq!(layer.u[i0], 0.5);
        // monotone along the grid
        assert!(layer.u.windows(2).all(|w| w[1] > w[0]));
        // u(1) from the analytic solution
        assert!((layer.eval(1.0) - 0.98388).abs() < 1e-4);
        // ends near the limits
        assert!(layer.u[0] <= 0.05 && layer.u[layer.u.len() - 1] >= 0.95);
    }

    #[test]
    fn sine_layer_antisymmetry() {
        // W(1-v) = W(v) forces u(-x) = 1 - u(x)
        let layer = testutil::sine_layer();
        let n = layer.grid.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            worst = worst.max((layer.u[i] + layer.u[n - 1 - i] - 1.0).abs());
        }
        assert!(worst < 1e-6, "antisymmetry violated by {worst}");
    }

    #[test]
    fn sine_mobility_and_tail_constants() {
        let layer = testutil::sine_layer();
        assert!((layer.c0 * PI - 1.0).abs() <= 1e-3, "c0 = {}", layer.c0);
        let want = -1.0 / (2.0 * PI.powi(3));
        for a in [layer.fitted_tail.left_coeff1, layer.fitted_tail.right_coeff1] {
            assert!((a / want - 1.0).abs() <= 0.05, "tail coeff {a} vs {want}");
        }
    }

    #[test]
    fn mobility_of_unit_curvature_potential() {
        // alpha = 1 gives the layer 1/2 + arctan(x)/pi and c0 = 2 pi
        let w = Potential::builtin_sine().scale(1.0 / (2.0 * PI * PI)).unwrap();
        let layer = solve_layer(&w, &GridSpec::default_for(&w)).unwrap();
        assert!((layer.c0 / (2.0 * PI) - 1.0).abs() < 1e-3, "c0 = {}", layer.c0);
    }

    #[test]
    fn mobility_quadrature_converges_under_refinement() {
        let w = Potential::builtin_sine();
        let mut spec = GridSpec::default_for(&w);
        let c_coarse = solve_layer(&w, &spec).unwrap().c0;
        spec.core_spacing *= 0.5;
        let c_fine = solve_layer(&w, &spec).unwrap().c0;
        assert!(
            (c_coarse / c_fine - 1.0).abs() <= 1e-4,
            "c0 moved from {c_coarse} to {c_fine}"
        );
    }

    #[test]
    fn rescale_to_unit_mobility_examples() {
        let w = Potential::builtin_sine();
        let (scaled, eps_hat) = rescale_to_unit_mobility(&w, 0.1).unwrap();
        assert!((eps_hat - 0.1 / PI.sqrt()).abs() < 1e-4, "eps_hat {eps_hat}");
        let layer = solve_layer(&scaled, &GridSpec::default_for(&scaled)).unwrap();
        assert!((layer.c0 - 1.0).abs() <= 1e-3);
        // near idempotence
        let (_, eps_hat2) = rescale_to_unit_mobility(&scaled, 0.1).unwrap();
        assert!((eps_hat2 - 0.1).abs() < 1e-3);
    }

    #[test]
    fn corrector_vanishes_for_unit_sine() {
        // the sine rhs (W''(u)-alpha)/alpha + u' cancels identically at c0 = 1
        let corr = testutil::unit_sine_corrector();
        assert!(corr.residual <= 1e-6, "residual {}", corr.residual);
        assert!(corr.multiplier.abs() <= 1e-6);
        let sup = corr.psi.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(sup <= 1e-4, "psi should vanish up to discretization, sup {sup}");
        assert!(corr.k2.abs() <= 1e-4, "k2 {}", corr.k2);
    }

    #[test]
    fn corrector_nontrivial_for_two_harmonic_potential() {
        let (w, layer) = testutil::unit_bumpy();
        let corr = testutil::unit_bumpy_corrector();
        assert!(corr.residual <= 1e-6, "residual {}", corr.residual);
        let sup = corr.psi.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(sup > 1e-3, "expected a nontrivial corrector, sup {sup}");
        assert!(sup.is_finite());
        // decay at the ends
        let n = corr.psi.len();
        assert!(corr.psi[0].abs() <= 0.05 && corr.psi[n - 1].abs() <= 0.05);
        // defining-equation residual re-checked from the stored image
        let alpha = w.alpha();
        let mut worst = 0.0f64;
        for i in 0..n {
            let r = corr.ipsi[i]
                - w.deriv2(layer.u[i]) * corr.psi[i]
                - (w.deriv2(layer.u[i]) - alpha) / alpha
                - layer.u_prime[i];
            worst = worst.max(r.abs());
        }
        assert!(worst <= 1e-6, "stored-image residual {worst}");
    }

    #[test]
    fn oriented_evaluations() {
        let layer = testutil::sine_layer();
        assert!((layer.oriented(0.0, 1) - 0.5).abs() < 1e-13);
        assert!((layer.oriented(0.0, -1) + 0.5).abs() < 1e-13);
        for &x in &[-3.0, -0.4, 0.0, 1.7, 10.0] {
            let lhs = layer.oriented(x, -1) + 1.0;
            let rhs = layer.oriented(-x, 1);
            assert!((lhs - rhs).abs() < 1e-14);
        }
        let corr = testutil::unit_bumpy_corrector();
        for &x in &[-2.0, 0.0, 0.3, 5.0] {
            assert_eq!(corr.oriented(x, 1), corr.eval(x));
            assert!((corr.oriented(x, -1) + corr.eval(-x)).abs() < 1e-15);
        }
    }

    #[test]
    fn layer_tail_law_is_stable_under_extent_doubling() {
        let w = Potential::builtin_sine();
        let spec = GridSpec::default_for(&w);
        let k1_base = testutil::sine_layer().fitted_tail.sup_constant;
        let mut wide = spec.clone();
        wide.max_extent = 400.0;
        let k1_wide = solve_layer(&w, &wide).unwrap().fitted_tail.sup_constant;
        assert!(k1_base.is_finite() && k1_wide.is_finite());
        let ratio = (k1_wide / k1_base).max(k1_base / k1_wide);
        assert!(ratio <= 2.0, "K1 moved {k1_base} -> {k1_wide}");
    }
}
