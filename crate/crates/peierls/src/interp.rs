//! Local polynomial interpolation on strictly increasing grids.
//!
//! Everything here works with the cubic through the four nodes nearest a
//! point (clamped at the ends of the array). Coefficients are produced in
//! monomial form about a caller-chosen center so that singular weights can
//! be integrated in closed form against them.

/// Index `i` such that `nodes[i] <= x < nodes[i+1]`, clamped to valid cells.
pub fn locate_cell(nodes: &[f64], x: f64) -> usize {
    debug_assert!(nodes.len() >= 2);
    match nodes.binary_search_by(|n| n.partial_cmp(&x).unwrap()) {
        Ok(i) => i.min(nodes.len() - 2),
        Err(0) => 0,
        Err(i) => (i - 1).min(nodes.len() - 2),
    }
}

/// First index of the 4-node stencil around cell `cell`.
pub fn stencil_start(len: usize, cell: usize) -> usize {
    if len < 4 {
        return 0;
    }
    cell.saturating_sub(1).min(len - 4)
}

/// Coefficients `c` of the Newton-form cubic through `(xs[k], ys[k])`
/// expanded in powers of `t = x - about`.
pub fn cubic_coeffs(xs: &[f64; 4], ys: &[f64; 4], about: f64) -> [f64; 4] {
    // divided differences
    let mut dd = *ys;
    for order in 1..4 {
        for k in (order..4).rev() {
            dd[k] = (dd[k] - dd[k - 1]) / (xs[k] - xs[k - order]);
        }
    }
    // expand dd[0] + (t-t0)(dd[1] + (t-t1)(dd[2] + (t-t2) dd[3])) by Horner;
    // the degree grows by one per pass, so the shift below never overflows.
    let t = [xs[0] - about, xs[1] - about, xs[2] - about];
    let mut c = [dd[3], 0.0, 0.0, 0.0];
    for k in (0..3).rev() {
        let mut next = [0.0; 4];
        for i in 0..3 {
            next[i + 1] += c[i];
        }
        for i in 0..4 {
            next[i] -= t[k] * c[i];
        }
        next[0] += dd[k];
        c = next;
    }
    c
}

/// Evaluate the local cubic interpolant at `x`.
pub fn eval_cubic(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    let (xs, ys) = stencil(nodes, values, x);
    let c = cubic_coeffs(&xs, &ys, x);
    c[0]
}

/// Derivative of the local cubic interpolant at `x`.
pub fn deriv_cubic(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    let (xs, ys) = stencil(nodes, values, x);
    let c = cubic_coeffs(&xs, &ys, x);
    c[1]
}

/// Second derivative of the local cubic interpolant at `x`.
pub fn second_deriv_cubic(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    let (xs, ys) = stencil(nodes, values, x);
    let c = cubic_coeffs(&xs, &ys, x);
    2.0 * c[2]
}

fn stencil(nodes: &[f64], values: &[f64], x: f64) -> ([f64; 4], [f64; 4]) {
    let cell = locate_cell(nodes, x);
    let s = stencil_start(nodes.len(), cell);
    (
        [nodes[s], nodes[s + 1], nodes[s + 2], nodes[s + 3]],
        [values[s], values[s + 1], values[s + 2], values[s + 3]],
    )
}

/// Find the root of `interp(x) = level` inside a bracketing cell by
/// monotone bisection of the local cubic.
pub fn crossing_in_cell(nodes: &[f64], values: &[f64], cell: usize, level: f64) -> f64 {
    let (mut a, mut b) = (nodes[cell], nodes[cell + 1]);
    let fa = values[cell] - level;
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        let fm = eval_cubic(nodes, values, m) - level;
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_reproduces_cubics_exactly() {
        let f = |x: f64| 2.0 - 3.0 * x + 0.5 * x * x - 0.125 * x * x * x;
        let nodes: Vec<f64> = (0..30).map(|i| -2.0 + 0.31 * i as f64 + 0.01 * (i as f64).sin()).collect();
        let values: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
        for i in 0..200 {
            let x = -1.9 + i as f64 * 0.04;
            assert!((eval_cubic(&nodes, &values, x) - f(x)).abs() < 1e-12);
            let d = -3.0 + x - 0.375 * x * x;
            assert!((deriv_cubic(&nodes, &values, x) - d).abs() < 1e-11);
            let dd = 1.0 - 0.75 * x;
            assert!((second_deriv_cubic(&nodes, &values, x) - dd).abs() < 1e-10);
        }
    }

    #[test]
    fn locate_handles_boundaries() {
        let nodes = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(locate_cell(&nodes, -5.0), 0);
        assert_eq!(locate_cell(&nodes, 0.5), 0);
        assert_eq!(locate_cell(&nodes, 1.0), 1);
        assert_eq!(locate_cell(&nodes, 2.7), 2);
        assert_eq!(locate_cell(&nodes, 9.0), 2);
    }

    #[test]
    fn crossing_finds_root() {
        let nodes: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let values: Vec<f64> = nodes.iter().map(|&x| (x - 2.34).tanh()).collect();
        let cell = (0..49).find(|&i| values[i] <= 0.0 && values[i + 1] > 0.0).unwrap();
        let x = crossing_in_cell(&nodes, &values, cell, 0.0);
        assert!((x - 2.34).abs() < 1e-6);
    }
}
