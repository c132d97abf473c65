//! IMEX pseudospectral solver for the rescaled evolution
//! `eps v_t = I[v] - W'(v)/eps` on a truncated domain, with
//! transition-layer tracking.
//!
//! The field is split as `v = background + w`, where the background is a
//! fixed superposition of unit-width arctan ramps carrying the integer jump
//! structure. Its half Laplacian is known in closed form, and `w` decays at
//! both ends, so after a sponge taper the operator can act on `w` through
//! the periodic Fourier symbol. The reaction term is explicit, the operator
//! implicit:
//!
//! ```text
//! w_{n+1} = F^{-1}[ (1 + (dt/eps)|xi|)^{-1} F[ C (w_n + (dt/eps)(I[bg] - W'(v_n)/eps)) ] ].
//! ```
//!
//! The resolvent kernel is positive and the explicit part is monotone under
//! the step bound `dt <= 0.2 eps^2 / max|W''|`, so two states sharing a
//! background keep their nodewise ordering — the discrete form of the
//! comparison principle.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::potential::Potential;
use crate::profiles::LayerProfile;
use crate::{Error, Result};

/// Uniform periodic grid on `[-X, X)`; the right endpoint is the wrap-around
/// image of the left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub half_width: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if n < 16 || n % 2 != 0 {
            return Err(Error::InvalidInput(format!("grid size must be even and >= 16, got {n}")));
        }
        if !(half_width > 0.0) {
            return Err(Error::InvalidInput("half width must be positive".into()));
        }
        Ok(Grid { half_width, n })
    }

    /// Grid with spacing at most `dx_max` and a fast FFT length.
    pub fn with_spacing(half_width: f64, dx_max: f64) -> Result<Self> {
        let mut n = (2.0 * half_width / dx_max).ceil() as usize;
        n = n.max(16);
        if n % 2 == 1 {
            n += 1;
        }
        // round up to a 7-smooth even length
        while !is_smooth(n) {
            n += 2;
        }
        Grid::new(half_width, n)
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Start of the sponge zones: the outer 10% of each side.
    pub fn sponge_start(&self) -> f64 {
        0.9 * self.half_width
    }
}

fn is_smooth(mut n: usize) -> bool {
    for p in [2usize, 3, 5, 7] {
        while n % p == 0 {
            n /= p;
        }
    }
    n == 1
}

/// Fixed smooth reference field carrying the net jump: a constant offset
/// plus unit-width arctan ramps, one per initial center. Its half Laplacian
/// is closed-form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Background {
    pub offset: f64,
    pub centers: Vec<(f64, i8)>,
}

impl Background {
    pub fn eval(&self, x: f64) -> f64 {
        let mut v = self.offset;
        for &(c, b) in &self.centers {
            let bf = b as f64;
            let y = bf * (x - c);
            v += 0.5 + y.atan() / PI + (bf - 1.0) / 2.0;
        }
        v
    }

    /// `I[background](x)`; each oriented ramp contributes
    /// `-b (x-c) / (pi (1 + (x-c)^2))`.
    pub fn half_laplacian(&self, x: f64) -> f64 {
        let mut v = 0.0;
        for &(c, b) in &self.centers {
            let y = x - c;
            v -= b as f64 * y / (PI * (1.0 + y * y));
        }
        v
    }
}

/// Phase-field snapshot on the truncated domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseFieldState {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub epsilon: f64,
    pub time: f64,
    pub background: Background,
    pub plateau_left: f64,
    pub plateau_right: f64,
}

/// Initial data: layer centers with orientations plus an optional bounded
/// perturbation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialDataSpec {
    pub centers: Vec<f64>,
    pub orientations: Vec<i8>,
    pub perturbation: Perturbation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Perturbation {
    None,
    /// `amplitude * exp(-((x-center)/width)^2)`
    Gaussian { amplitude: f64, center: f64, width: f64 },
}

impl Perturbation {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Perturbation::None => 0.0,
            Perturbation::Gaussian { amplitude, center, width } => {
                let s = (x - center) / width;
                amplitude * (-s * s).exp()
            }
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            Perturbation::None => 0.0,
            Perturbation::Gaussian { amplitude, .. } => amplitude.abs(),
        }
    }
}

impl InitialDataSpec {
    pub fn validate(&self) -> Result<()> {
        if self.centers.len() != self.orientations.len() {
            return Err(Error::InvalidInput("centers/orientations length mismatch".into()));
        }
        if self.centers.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("centers must be strictly increasing".into()));
        }
        if self.orientations.iter().any(|&b| b != 1 && b != -1) {
            return Err(Error::InvalidInput("orientations must be +1 or -1".into()));
        }
        Ok(())
    }

    /// Default truncation radius `max|center| + 4 + 20 eps`.
    pub fn default_half_width(&self, epsilon: f64) -> f64 {
        let m = self.centers.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
        m + 4.0 + 20.0 * epsilon
    }
}

/// Sample the well-prepared initial condition
/// `v0 = sum_i u((x - c_i)/eps; b_i) + phi0` onto the grid.
pub fn build_initial(
    spec: &InitialDataSpec,
    layer: &LayerProfile,
    epsilon: f64,
    grid: Grid,
) -> Result<PhaseFieldState> {
    spec.validate()?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput("epsilon must be positive".into()));
    }
    let margin = 20.0 * epsilon;
    for &c in &spec.centers {
        if c.abs() + margin > grid.half_width {
            return Err(Error::InvalidInput(format!(
                "center {c} too close to the boundary (need {margin} margin of X = {})",
                grid.half_width
            )));
        }
    }
    let values: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&x| {
            let mut v = spec.perturbation.eval(x);
            for (k, &c) in spec.centers.iter().enumerate() {
                v += layer.oriented((x - c) / epsilon, spec.orientations[k]);
            }
            v
        })
        .collect();
    let background = Background {
        offset: 0.0,
        centers: spec.centers.iter().copied().zip(spec.orientations.iter().copied()).collect(),
    };
    let mut state = PhaseFieldState {
        grid,
        values,
        epsilon,
        time: 0.0,
        background,
        plateau_left: 0.0,
        plateau_right: 0.0,
    };
    let (pl, pr) = plateau_estimates(&state);
    state.plateau_left = pl;
    state.plateau_right = pr;
    Ok(state)
}

/// A spatially constant state (the background absorbs the constant).
pub fn constant_state(value: f64, epsilon: f64, grid: Grid) -> PhaseFieldState {
    PhaseFieldState {
        values: vec![value; grid.n],
        epsilon,
        time: 0.0,
        background: Background { offset: value, centers: Vec::new() },
        plateau_left: value,
        plateau_right: value,
        grid,
    }
}

fn plateau_estimates(state: &PhaseFieldState) -> (f64, f64) {
    let n = state.grid.n;
    let lo = n / 20;
    let hi = n / 8;
    let left: f64 = state.values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
    let right: f64 = state.values[n - hi..n - lo].iter().sum::<f64>() / (hi - lo) as f64;
    (left, right)
}

/// Monotonicity bound of the explicit reaction term; steps at or below it
/// keep the discrete comparison principle.
pub fn dt_max(epsilon: f64, potential: &Potential) -> f64 {
    0.2 * epsilon * epsilon / potential.max_abs_deriv2()
}

/// Default production step: the monotonicity bound shrunk by `min(1, 0.6 eps)`
/// so the first-order splitting error stays subordinate to the physical
/// `eps`-corrections of the layer dynamics and below the tracking tolerance.
pub fn default_dt(epsilon: f64, potential: &Potential) -> f64 {
    dt_max(epsilon, potential) * (0.6 * epsilon).min(1.0)
}

/// Reusable solver: cached FFT plans, symbol, sponge and background arrays.
pub struct Stepper {
    grid: Grid,
    epsilon: f64,
    dt: f64,
    fft: Arc<dyn rustfft::Fft<f64>>,
    ifft: Arc<dyn rustfft::Fft<f64>>,
    resolvent: Vec<f64>,
    sponge: Vec<f64>,
    ibg: Vec<f64>,
    bg: Vec<f64>,
}

impl Stepper {
    pub fn new(state: &PhaseFieldState, dt: f64, potential: &Potential) -> Result<Self> {
        let bound = dt_max(state.epsilon, potential);
        if dt > bound * (1.0 + 1e-12) {
            return Err(Error::InvalidInput(format!(
                "dt = {dt} violates the reaction bound {bound}"
            )));
        }
        let n = state.grid.n;
        let l = 2.0 * state.grid.half_width;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let lam = dt / state.epsilon;
        let resolvent: Vec<f64> = (0..n)
            .map(|k| {
                let ks = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
                let xi = 2.0 * PI * ks / l;
                1.0 / (1.0 + lam * xi.abs())
            })
            .collect();
        let s0 = state.grid.sponge_start();
        let sponge: Vec<f64> = state
            .grid
            .nodes()
            .iter()
            .map(|&x| {
                if x.abs() <= s0 {
                    1.0
                } else {
                    let s = (x.abs() - s0) / (state.grid.half_width - s0);
                    (0.5 * PI * s.min(1.0)).cos().powi(2)
                }
            })
            .collect();
        let ibg: Vec<f64> =
            state.grid.nodes().iter().map(|&x| state.background.half_laplacian(x)).collect();
        let bg: Vec<f64> = state.grid.nodes().iter().map(|&x| state.background.eval(x)).collect();
        Ok(Stepper {
            grid: state.grid.clone(),
            epsilon: state.epsilon,
            dt,
            fft,
            ifft,
            resolvent,
            sponge,
            ibg,
            bg,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance the state by one step in place.
    pub fn advance(&self, state: &mut PhaseFieldState, potential: &Potential) -> Result<()> {
        if state.grid != self.grid || state.epsilon != self.epsilon {
            return Err(Error::InvalidInput("state does not match the stepper geometry".into()));
        }
        let n = self.grid.n;
        let lam = self.dt / self.epsilon;
        let mut buf: Vec<Complex<f64>> = Vec::with_capacity(n);
        for j in 0..n {
            let v = state.values[j];
            let w = v - self.bg[j];
            let forcing = self.ibg[j] - potential.deriv1(v) / self.epsilon;
            buf.push(Complex::new(self.sponge[j] * (w + lam * forcing), 0.0));
        }
        self.fft.process(&mut buf);
        for (c, r) in buf.iter_mut().zip(&self.resolvent) {
            *c *= *r;
        }
        self.ifft.process(&mut buf);
        let scale = 1.0 / n as f64;
        for j in 0..n {
            let w = buf[j].re * scale;
            let v = w + self.bg[j];
            if !v.is_finite() {
                return Err(Error::Numerical(format!("non-finite field value at t = {}", state.time)));
            }
            state.values[j] = v;
        }
        state.time += self.dt;
        Ok(())
    }
}

/// One IMEX step (convenience wrapper building a throwaway [`Stepper`]).
pub fn step(state: &PhaseFieldState, dt: f64, potential: &Potential) -> Result<PhaseFieldState> {
    let stepper = Stepper::new(state, dt, potential)?;
    let mut out = state.clone();
    stepper.advance(&mut out, potential)?;
    Ok(out)
}

/// One detected level crossing.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Crossing {
    pub position: f64,
    /// Half-integer level.
    pub level: f64,
    /// +1 for an up crossing, -1 for down.
    pub direction: i8,
}

/// Locate all half-integer level crossings between the rounded plateaus.
pub fn track_transitions(state: &PhaseFieldState, _layer: &LayerProfile) -> Result<Vec<Crossing>> {
    let (pl, pr) = plateau_estimates(state);
    for p in [pl, pr] {
        if (p - p.round()).abs() > 0.25 {
            return Err(Error::Numerical(format!(
                "plateau {p} drifted beyond 0.25 of an integer; field no longer well-prepared"
            )));
        }
    }
    let nodes = state.grid.nodes();
    let n = state.grid.n;
    let lo_i = n / 20;
    let hi_i = n - n / 20;
    let vmin = state.values[lo_i..hi_i].iter().cloned().fold(f64::INFINITY, f64::min);
    let vmax = state.values[lo_i..hi_i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut crossings = Vec::new();
    let mut level = vmin.floor() + 0.5;
    while level < vmax {
        for j in lo_i..hi_i - 1 {
            let (a, b) = (state.values[j] - level, state.values[j + 1] - level);
            if a == 0.0 {
                // node exactly on the level: count it once, direction by neighbor
                if b != 0.0 {
                    crossings.push(Crossing {
                        position: nodes[j],
                        level,
                        direction: if b > 0.0 { 1 } else { -1 },
                    });
                }
            } else if a * b < 0.0 {
                let frac = a / (a - b);
                crossings.push(Crossing {
                    position: nodes[j] + frac * state.grid.dx(),
                    level,
                    direction: if b > a { 1 } else { -1 },
                });
            }
        }
        level += 1.0;
    }
    crossings.sort_by(|p, q| p.position.partial_cmp(&q.position).unwrap());
    Ok(crossings)
}

/// The path of one tracked transition layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerTrack {
    pub id: usize,
    pub level: f64,
    pub direction: i8,
    /// Index into `TransitionTrack::times` of the first sample.
    pub first_sample: usize,
    pub positions: Vec<f64>,
    pub annihilated_at: Option<f64>,
}

impl LayerTrack {
    pub fn position_at_sample(&self, sample: usize) -> Option<f64> {
        if sample < self.first_sample {
            return None;
        }
        self.positions.get(sample - self.first_sample).copied()
    }
}

/// Crossing positions sampled over a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionTrack {
    pub times: Vec<f64>,
    pub layers: Vec<LayerTrack>,
}

impl TransitionTrack {
    /// Tracks alive at the final sample.
    pub fn alive(&self) -> Vec<&LayerTrack> {
        self.layers.iter().filter(|l| l.annihilated_at.is_none()).collect()
    }
}

/// Field snapshots kept by [`run`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub values: Vec<f64>,
}

pub struct RunOutput {
    pub track: TransitionTrack,
    pub snapshots: Vec<Snapshot>,
    pub final_state: PhaseFieldState,
}

/// Advance to `t_end`, recording crossings every `sample_dt` and a field
/// snapshot every `snapshot_every` samples (0 disables snapshots beyond the
/// initial and final fields).
pub fn run(
    state: &PhaseFieldState,
    t_end: f64,
    sample_dt: f64,
    potential: &Potential,
    layer: &LayerProfile,
    snapshot_every: usize,
) -> Result<RunOutput> {
    if !(t_end > state.time) {
        return Err(Error::InvalidInput("t_end must exceed the state time".into()));
    }
    let bound = default_dt(state.epsilon, potential);
    let substeps = (sample_dt / bound).ceil().max(1.0) as usize;
    let dt = sample_dt / substeps as f64;
    let stepper = Stepper::new(state, dt, potential)?;
    let mut st = state.clone();

    let mut times = vec![st.time];
    let mut layers: Vec<LayerTrack> = Vec::new();
    let mut snapshots = vec![Snapshot { time: st.time, values: st.values.clone() }];
    let mut next_id = 0;

    let initial = track_transitions(&st, layer)?;
    for c in &initial {
        layers.push(LayerTrack {
            id: next_id,
            level: c.level,
            direction: c.direction,
            first_sample: 0,
            positions: vec![c.position],
            annihilated_at: None,
        });
        next_id += 1;
    }

    let total_samples = ((t_end - state.time) / sample_dt).round() as usize;
    for sample in 1..=total_samples {
        for _ in 0..substeps {
            stepper.advance(&mut st, potential)?;
        }
        let crossings = track_transitions(&st, layer)?;
        link_crossings(&mut layers, &crossings, &times, st.time, sample, &mut next_id);
        times.push(st.time);

        // boundedness: comparison with integer constants caps the field
        let bound = st.background.centers.len() as f64 + 1.0 + 0.25;
        if st.values.iter().any(|v| v.abs() > bound) {
            return Err(Error::Numerical(format!(
                "field left the comparison bound |v| <= {bound} at t = {}",
                st.time
            )));
        }

        // margin bookkeeping: tracked layers must stay out of the sponge zones
        let margin = 20.0 * st.epsilon;
        for c in &crossings {
            if c.position.abs() + margin > st.grid.half_width {
                return Err(Error::Numerical(format!(
                    "transition at {} ran into the boundary margin",
                    c.position
                )));
            }
            if c.position.abs() > st.grid.sponge_start() {
                return Err(Error::Numerical(format!(
                    "transition at {} entered the sponge zone",
                    c.position
                )));
            }
        }

        if snapshot_every > 0 && sample % snapshot_every == 0 {
            snapshots.push(Snapshot { time: st.time, values: st.values.clone() });
        }
    }
    if snapshots.last().map(|s| s.time) != Some(st.time) {
        snapshots.push(Snapshot { time: st.time, values: st.values.clone() });
    }
    let (pl, pr) = plateau_estimates(&st);
    st.plateau_left = pl;
    st.plateau_right = pr;

    Ok(RunOutput { track: TransitionTrack { times, layers }, snapshots, final_state: st })
}

/// Nearest-position matching of new crossings to the active tracks, with
/// consistent level and direction; unmatched tracks are closed with the
/// midpoint annihilation estimate.
fn link_crossings(
    layers: &mut [LayerTrack],
    crossings: &[Crossing],
    times: &[f64],
    t_now: f64,
    sample: usize,
    _next_id: &mut usize,
) {
    let mut taken = vec![false; crossings.len()];
    // active tracks claim their nearest compatible crossing, closest first
    let mut order: Vec<usize> = (0..layers.len())
        .filter(|&i| layers[i].annihilated_at.is_none() && layers[i].first_sample < sample)
        .collect();
    // deterministic order: by current position
    order.sort_by(|&a, &b| {
        let pa = *layers[a].positions.last().unwrap();
        let pb = *layers[b].positions.last().unwrap();
        pa.partial_cmp(&pb).unwrap()
    });
    for &ti in &order {
        let last = *layers[ti].positions.last().unwrap();
        let mut best: Option<(usize, f64)> = None;
        for (ci, c) in crossings.iter().enumerate() {
            if taken[ci] || c.level != layers[ti].level || c.direction != layers[ti].direction {
                continue;
            }
            let d = (c.position - last).abs();
            if best.map(|(_, bd)| d < bd).unwrap_or(true) {
                best = Some((ci, d));
            }
        }
        match best {
            Some((ci, _)) => {
                taken[ci] = true;
                layers[ti].positions.push(crossings[ci].position);
            }
            None => {
                let t_prev = *times.last().unwrap();
                layers[ti].annihilated_at = Some(0.5 * (t_prev + t_now));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil;

    fn unit() -> (&'static Potential, &'static LayerProfile) {
        let (w, l) = testutil::unit_sine();
        (w, l)
    }

    #[test]
    fn integer_constants_are_fixed_points() {
        let (w, _) = unit();
        let grid = Grid::with_spacing(5.0, 0.01).unwrap();
        for k in [-1.0, 0.0, 2.0] {
            let st = constant_state(k, 0.05, grid.clone());
            let out = step(&st, dt_max(0.05, w), w).unwrap();
            let worst = out
                .values
                .iter()
                .map(|v| (v - k).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-14, "constant {k} moved by {worst}");
        }
    }

    #[test]
    fn half_level_constant_is_stationary_for_sine() {
        // W'(1/2) = 0: unstable equilibrium but exactly stationary
        let (w, _) = unit();
        let grid = Grid::with_spacing(5.0, 0.01).unwrap();
        let st = constant_state(0.5, 0.05, grid);
        let out = step(&st, dt_max(0.05, w), w).unwrap();
        let worst = out.values.iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-14, "moved by {worst}");
    }

    #[test]
    fn single_layer_value_and_plateaus() {
        let (w, layer) = unit();
        let _ = w;
        let eps = 0.05;
        let spec = InitialDataSpec {
            centers: vec![0.0],
            orientations: vec![1],
            perturbation: Perturbation::None,
        };
        let grid = Grid::with_spacing(spec.default_half_width(eps), eps / 8.0).unwrap();
        let st = build_initial(&spec, layer, eps, grid).unwrap();
        // u(0) = 1/2 at the center node
        let j0 = st.grid.n / 2;
        assert_eq!(st.grid.node(j0), 0.0);
        assert!((st.values[j0] - 0.5).abs() < 1e-12);
        assert!(st.plateau_left.abs() < 0.02, "left plateau {}", st.plateau_left);
        assert!((st.plateau_right - 1.0).abs() < 0.02, "right plateau {}", st.plateau_right);
    }

    #[test]
    fn stationary_layer_does_not_drift() {
        let (w, layer) = unit();
        let eps = 0.05;
        let spec = InitialDataSpec {
            centers: vec![0.0],
            orientations: vec![1],
            perturbation: Perturbation::None,
        };
        let grid = Grid::with_spacing(spec.default_half_width(eps), eps / 8.0).unwrap();
        let st = build_initial(&spec, layer, eps, grid).unwrap();
        let out = run(&st, 0.2, 5e-3, w, layer, 0).unwrap();
        assert_eq!(out.track.layers.len(), 1);
        let track = &out.track.layers[0];
        assert!(track.annihilated_at.is_none());
        let drift = track.positions.iter().fold(0.0f64, |m, &p| m.max(p.abs()));
        assert!(drift <= 1e-3, "drift {drift}");
    }

    #[test]
    fn track_transitions_on_fresh_pair() {
        let (_, layer) = unit();
        let eps = 0.05;
        let spec = InitialDataSpec {
            centers: vec![-0.5, 0.5],
            orientations: vec![1, -1],
            perturbation: Perturbation::None,
        };
        let grid = Grid::with_spacing(spec.default_half_width(eps), eps / 8.0).unwrap();
        let st = build_initial(&spec, layer, eps, grid).unwrap();
        let crossings = track_transitions(&st, layer).unwrap();
        assert_eq!(crossings.len(), 2);
        assert!((crossings[0].position + 0.5).abs() <= 0.01);
        assert!((crossings[1].position - 0.5).abs() <= 0.01);
        assert_eq!(crossings[0].direction, 1);
        assert_eq!(crossings[1].direction, -1);
        assert_eq!(crossings[0].level, 0.5);
    }

    #[test]
    fn integer_shift_equivariance() {
        let (w, layer) = unit();
        let eps = 0.1;
        let spec = InitialDataSpec {
            centers: vec![-0.4, 0.6],
            orientations: vec![1, -1],
            perturbation: Perturbation::Gaussian { amplitude: 0.05, center: 0.2, width: 0.7 },
        };
        let grid = Grid::with_spacing(spec.default_half_width(eps), eps / 8.0).unwrap();
        let st = build_initial(&spec, layer, eps, grid).unwrap();
        let dt = dt_max(eps, w);
        let a = step(&st, dt, w).unwrap();
        let mut shifted = st.clone();
        for v in &mut shifted.values {
            *v += 3.0;
        }
        shifted.background.offset += 3.0;
        let b = step(&shifted, dt, w).unwrap();
        for j in 0..st.grid.n {
            assert!((b.values[j] - a.values[j] - 3.0).abs() <= 1e-13);
        }
    }

    #[test]
    fn spatial_shift_equivariance_away_from_sponges() {
        // net-zero jump, compact bump, background-free
        let (w, _) = unit();
        let grid = Grid::with_spacing(6.0, 0.01).unwrap();
        let n = grid.n;
        let values: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&x| 0.4 * (-(x * x)).exp())
            .collect();
        let st = PhaseFieldState {
            grid: grid.clone(),
            values,
            epsilon: 0.1,
            time: 0.0,
            background: Background { offset: 0.0, centers: vec![] },
            plateau_left: 0.0,
            plateau_right: 0.0,
        };
        let shift = (0.5 / grid.dx()).round() as usize;
        let mut st2 = st.clone();
        for j in 0..n {
            st2.values[j] = st.values[(j + n - shift) % n];
        }
        let dt = dt_max(0.1, w);
        let a = step(&st, dt, w).unwrap();
        let b = step(&st2, dt, w).unwrap();
        let mut worst = 0.0f64;
        for j in 0..n {
            if st.grid.node(j).abs() < 4.0 {
                worst = worst.max((b.values[(j + shift) % n] - a.values[j]).abs());
            }
        }
        assert!(worst <= 1e-12, "equivariance violated by {worst}");
    }

    #[test]
    fn comparison_principle_for_ordered_pairs() {
        use rand::{Rng, SeedableRng};
        let (w, layer) = unit();
        let eps = 0.1;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let spec = InitialDataSpec {
                centers: vec![-0.5, 0.5],
                orientations: vec![1, -1],
                perturbation: Perturbation::None,
            };
            let grid = Grid::with_spacing(spec.default_half_width(eps), eps / 6.0).unwrap();
            let lower = build_initial(&spec, layer, eps, grid.clone()).unwrap();
            let mut upper = lower.clone();
            let a = rng.random_range(0.05..0.3);
            let c = rng.random_range(-1.0..1.0);
            let s = rng.random_range(0.5..2.0);
            for (j, v) in upper.values.iter_mut().enumerate() {
                let x = grid.node(j);
                *v += a * (-((x - c) / s).powi(2)).exp() + 0.02;
            }
            let dt = dt_max(eps, w);
            let lo = step(&lower, dt, w).unwrap();
            let hi = step(&upper, dt, w).unwrap();
            let worst = lo
                .values
                .iter()
                .zip(&hi.values)
                .map(|(l, h)| l - h)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(worst <= 1e-12, "ordering violated by {worst}");
        }
    }

    #[test]
    fn refinement_convergence_of_a_moving_crossing() {
        // halving dx and dt moves the tracked crossing of an attracting
        // pair at t = 0.2 by no more than 1e-3
        let (w, layer) = testutil::effective_unit();
        let eps = 0.05;
        let spec = InitialDataSpec {
            centers: vec![-0.5, 0.5],
            orientations: vec![1, -1],
            perturbation: Perturbation::None,
        };
        let mut crossings = Vec::new();
        for refine in [1.0, 2.0] {
            let grid = Grid::with_spacing(spec.default_half_width(eps), eps / (8.0 * refine)).unwrap();
            let mut st = build_initial(&spec, layer, eps, grid).unwrap();
            let dt = default_dt(eps, w) / refine;
            let steps = (0.2 / dt).round() as usize;
            let stepper = Stepper::new(&st, 0.2 / steps as f64, w).unwrap();
            for _ in 0..steps {
                stepper.advance(&mut st, w).unwrap();
            }
            let cs = track_transitions(&st, layer).unwrap();
            crossings.push(cs[1].position);
        }
        let diff = (crossings[0] - crossings[1]).abs();
        assert!(diff <= 1e-3, "crossing moved by {diff} under refinement");
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(Grid::new(5.0, 7).is_err());
        assert!(Grid::new(0.0, 64).is_err());
        assert!(Grid::with_spacing(5.0, 0.01).is_ok());
    }

    #[test]
    fn cfl_violation_is_an_error() {
        let (w, _) = unit();
        let grid = Grid::with_spacing(5.0, 0.05).unwrap();
        let st = constant_state(0.0, 0.05, grid);
        let dt = 10.0 * dt_max(0.05, w);
        assert!(step(&st, dt, w).is_err());
    }
}
