//! Signed point particles on the line with `1/x` interactions and
//! annihilation on contact.
//!
//! The velocity law is
//!
//! ```text
//! dx_i/dt = c0 * sum_{j != i} b_i b_j / (x_i - x_j)  -  b_i sigma,
//! ```
//!
//! summed over the surviving particles. Opposite neighbors attract and meet
//! in finite time with the square-root gap law `D^2 = D0^2 - 4 c0 t`; the
//! integrator caps its step with that scale, bisects nothing — the event
//! time is closed off by the same two-body law — and applies the parity
//! rule: an even colliding cluster vanishes, an odd one leaves a single
//! particle carrying the cluster's net orientation.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Positions, orientations and the surviving index set at one time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticleState {
    pub time: f64,
    /// Positions by original index; annihilated entries keep their final
    /// (collision-point) value.
    pub positions: Vec<f64>,
    /// Orientations `b_i`, each +1 or -1.
    pub orientations: Vec<i8>,
    /// Ordered original indices of the surviving particles.
    pub survivors: Vec<usize>,
    /// Mobility constant multiplying the interaction force.
    pub mobility: f64,
    /// Constant external force `sigma`; positive pushes positive particles
    /// to the left.
    pub external_force: f64,
}

impl ParticleState {
    pub fn new(positions: Vec<f64>, orientations: Vec<i8>, mobility: f64, external_force: f64) -> Result<Self> {
        if positions.len() != orientations.len() || positions.is_empty() {
            return Err(Error::InvalidInput("need matching nonempty positions/orientations".into()));
        }
        if positions.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("initial positions must be strictly increasing".into()));
        }
        if orientations.iter().any(|&b| b != 1 && b != -1) {
            return Err(Error::InvalidInput("orientations must be +1 or -1".into()));
        }
        if !(mobility > 0.0) {
            return Err(Error::InvalidInput("mobility must be positive".into()));
        }
        let survivors = (0..positions.len()).collect();
        Ok(ParticleState { time: 0.0, positions, orientations, survivors, mobility, external_force })
    }

    /// Net orientation `B`, conserved by annihilation.
    pub fn net_orientation(&self) -> i64 {
        self.survivors.iter().map(|&i| self.orientations[i] as i64).sum()
    }

    fn survivor_positions(&self) -> Vec<f64> {
        self.survivors.iter().map(|&i| self.positions[i]).collect()
    }
}

/// Velocities of the surviving particles, in survivor order.
///
/// Pair forces are accumulated antisymmetrically so that the total is
/// exactly zero in floating point when `sigma = 0`.
pub fn rhs(state: &ParticleState) -> Result<Vec<f64>> {
    let xs = state.survivor_positions();
    let bs: Vec<f64> = state.survivors.iter().map(|&i| state.orientations[i] as f64).collect();
    rhs_raw(&xs, &bs, state.mobility, state.external_force)
}

fn rhs_raw(xs: &[f64], bs: &[f64], c0: f64, sigma: f64) -> Result<Vec<f64>> {
    let k = xs.len();
    let mut v: Vec<f64> = bs.iter().map(|b| -b * sigma).collect();
    for a in 0..k {
        for b in a + 1..k {
            let gap = xs[a] - xs[b];
            if gap == 0.0 {
                return Err(Error::Numerical("coincident survivor positions".into()));
            }
            let w = c0 * bs[a] * bs[b] / gap;
            v[a] += w;
            v[b] -= w;
        }
    }
    Ok(v)
}

/// One logged collision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub time: f64,
    pub location: f64,
    /// Original indices of the colliding cluster, left to right.
    pub cluster: Vec<usize>,
    pub removed: Vec<usize>,
    /// Surviving index and its orientation for odd clusters.
    pub survivor: Option<(usize, i8)>,
}

/// Sampled trajectories plus the event log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub sample_times: Vec<f64>,
    /// Per sample, per original index; `None` once annihilated.
    pub samples: Vec<Vec<Option<f64>>>,
    pub events: Vec<CollisionEvent>,
    pub orientations: Vec<i8>,
    pub mobility: f64,
    pub external_force: f64,
    /// Death time and final position per original index.
    pub death: Vec<Option<(f64, f64)>>,
    pub final_state: ParticleState,
}

impl TrajectoryRecord {
    pub fn n(&self) -> usize {
        self.orientations.len()
    }

    pub fn t_end(&self) -> f64 {
        *self.sample_times.last().unwrap()
    }

    /// Surviving original indices at time `t` (right-continuous in `t`).
    pub fn survivors_at(&self, t: f64) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| match self.death[i] {
                Some((td, _)) => t < td,
                None => true,
            })
            .collect()
    }

    /// Position of particle `i` at `t`, extended past its annihilation time
    /// by its final value.
    pub fn position(&self, i: usize, t: f64) -> f64 {
        if let Some((td, xd)) = self.death[i] {
            if t >= td {
                return xd;
            }
        }
        let times = &self.sample_times;
        let t = t.clamp(times[0], *times.last().unwrap());
        let k = match times.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(k) => return self.samples[k][i].unwrap_or_else(|| self.death[i].unwrap().1),
            Err(0) => return self.samples[0][i].expect("alive at start"),
            Err(k) => k - 1,
        };
        let (t0, t1) = (times[k], times[k + 1]);
        let x0 = self.samples[k][i].expect("alive on the left bracket");
        // the right bracket can postdate the death; use the death point then
        let (t1, x1) = match self.samples[k + 1][i] {
            Some(x1) => (t1, x1),
            None => self.death[i].expect("dead on the right bracket"),
        };
        if t1 <= t0 {
            return x0;
        }
        x0 + (x1 - x0) * (t - t0) / (t1 - t0)
    }

    /// Velocities of the survivors at `t` (survivor order), reconstructed
    /// from the interpolated positions.
    pub fn velocities_at(&self, t: f64) -> Result<Vec<f64>> {
        let surv = self.survivors_at(t);
        let xs: Vec<f64> = surv.iter().map(|&i| self.position(i, t)).collect();
        let bs: Vec<f64> = surv.iter().map(|&i| self.orientations[i] as f64).collect();
        rhs_raw(&xs, &bs, self.mobility, self.external_force)
    }

    /// First collision time, if any collision was logged.
    pub fn first_collision(&self) -> Option<&CollisionEvent> {
        self.events.first()
    }
}

/// Integration controls; the defaults follow the module contract.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolveControls {
    /// Absolute adjacent-gap threshold that triggers a collision.
    pub collision_threshold: f64,
    /// Multiple of the threshold within which near-simultaneous collisions
    /// are grouped into one cluster.
    pub cluster_radius_factor: f64,
    /// Per-step error tolerance of the embedded pair.
    pub step_error_tol: f64,
    /// Hard step cap `dt <= cap * gap_min^2 / c0`.
    pub gap_cap_factor: f64,
    /// Recording interval.
    pub sample_dt: f64,
    /// With annihilation disabled the run stops at the first collision
    /// (the perturbed-system convention).
    pub annihilation: bool,
}

impl Default for EvolveControls {
    fn default() -> Self {
        EvolveControls {
            collision_threshold: 1e-6,
            cluster_radius_factor: 10.0,
            step_error_tol: 1e-10,
            gap_cap_factor: 0.05,
            sample_dt: 1e-3,
            annihilation: true,
        }
    }
}

// Dormand-Prince 5(4) tableau
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Evolve the system to `t_end`, detecting collisions and applying the
/// annihilation rule.
pub fn evolve(state: &ParticleState, t_end: f64, controls: &EvolveControls) -> Result<TrajectoryRecord> {
    if !(t_end > state.time) {
        return Err(Error::InvalidInput("t_end must exceed the state time".into()));
    }
    let n = state.positions.len();
    let mut st = state.clone();
    let mut events: Vec<CollisionEvent> = Vec::new();
    let mut death: Vec<Option<(f64, f64)>> = vec![None; n];

    let mut sample_times = vec![st.time];
    let mut samples = vec![snapshot(&st, &death)];
    let mut next_sample = st.time + controls.sample_dt;

    let threshold = controls.collision_threshold;
    let cluster_radius = controls.cluster_radius_factor * threshold;
    let mut dt = controls.sample_dt.min(1e-3);

    'outer: while st.time < t_end {
        // frozen regime: nothing left to move
        let moving = st.survivors.len() > 1 || st.external_force != 0.0;
        if st.survivors.is_empty() || !moving {
            while next_sample <= t_end + 1e-15 {
                st.time = next_sample;
                sample_times.push(st.time);
                samples.push(snapshot(&st, &death));
                next_sample += controls.sample_dt;
            }
            st.time = t_end;
            break;
        }

        // collision detection on adjacent opposite pairs
        let xs = st.survivor_positions();
        let k = xs.len();
        let mut gap_min = f64::INFINITY;
        let mut opposite_hit = false;
        for a in 0..k.saturating_sub(1) {
            let (i, j) = (st.survivors[a], st.survivors[a + 1]);
            let gap = xs[a + 1] - xs[a];
            gap_min = gap_min.min(gap);
            let opposite = st.orientations[i] != st.orientations[j];
            if gap <= threshold {
                if !opposite {
                    return Err(Error::Numerical(format!(
                        "same-sign pair ({i},{j}) reached the collision threshold at t = {}",
                        st.time
                    )));
                }
                opposite_hit = true;
            }
        }

        if opposite_hit {
            // close the event with the local two-body law and group clusters
            let t_event = st.time + gap_min * gap_min / (4.0 * st.mobility);
            let clusters = gather_clusters(&st, cluster_radius, threshold);
            if clusters.is_empty() {
                return Err(Error::Numerical("collision detected but no cluster formed".into()));
            }
            st.time = t_event;
            let (new_state, mut evs) = annihilate(&st, &clusters)?;
            for ev in &evs {
                for &i in &ev.removed {
                    death[i] = Some((ev.time, ev.location));
                }
            }
            events.append(&mut evs);
            st = new_state;
            sample_times.push(st.time);
            samples.push(snapshot(&st, &death));
            if !controls.annihilation {
                // perturbed-system convention: stop at the first collision
                break 'outer;
            }
            dt = controls.sample_dt.min(1e-3);
            continue;
        }

        // adaptive step, capped by the blow-up scale and the next boundary
        let cap = controls.gap_cap_factor * gap_min * gap_min / st.mobility;
        let boundary = next_sample.min(t_end);
        let mut h = dt.min(cap).min(boundary - st.time).max(1e-15);
        let bs: Vec<f64> = st.survivors.iter().map(|&i| st.orientations[i] as f64).collect();

        let mut accepted = false;
        for _ in 0..60 {
            match dp_step(&xs, &bs, st.mobility, st.external_force, h) {
                Ok((x_new, err)) => {
                    let ordered = x_new.windows(2).all(|w| w[1] > w[0]);
                    if err <= controls.step_error_tol && ordered {
                        for (a, &i) in st.survivors.iter().enumerate() {
                            st.positions[i] = x_new[a];
                        }
                        st.time += h;
                        // step-size update with the usual safety clamp
                        let grow = if err > 0.0 {
                            0.9 * (controls.step_error_tol / err).powf(0.2)
                        } else {
                            5.0
                        };
                        dt = (h * grow.clamp(0.2, 5.0)).min(1.0);
                        accepted = true;
                        break;
                    }
                    h *= 0.5;
                }
                Err(_) => h *= 0.5,
            }
            if h < 1e-16 {
                return Err(Error::Numerical(format!("step underflow at t = {}", st.time)));
            }
        }
        if !accepted {
            return Err(Error::Numerical(format!("no acceptable step at t = {}", st.time)));
        }

        if (st.time - next_sample).abs() < 1e-13 || st.time >= next_sample {
            sample_times.push(st.time);
            samples.push(snapshot(&st, &death));
            next_sample += controls.sample_dt;
        }
    }

    if (sample_times.last().unwrap() - st.time).abs() > 1e-15 {
        sample_times.push(st.time);
        samples.push(snapshot(&st, &death));
    }

    Ok(TrajectoryRecord {
        sample_times,
        samples,
        events,
        orientations: st.orientations.clone(),
        mobility: st.mobility,
        external_force: st.external_force,
        death,
        final_state: st,
    })
}

fn snapshot(st: &ParticleState, death: &[Option<(f64, f64)>]) -> Vec<Option<f64>> {
    (0..st.positions.len())
        .map(|i| if death[i].is_some() { None } else { Some(st.positions[i]) })
        .collect()
}

/// One Dormand-Prince step; returns new positions and the max error
/// estimate component.
fn dp_step(xs: &[f64], bs: &[f64], c0: f64, sigma: f64, h: f64) -> Result<(Vec<f64>, f64)> {
    let k = xs.len();
    let mut ks: Vec<Vec<f64>> = Vec::with_capacity(7);
    for s in 0..7 {
        let mut xt = xs.to_vec();
        for (si, kvec) in ks.iter().enumerate() {
            let a = DP_A[s][si];
            if a != 0.0 {
                for i in 0..k {
                    xt[i] += h * a * kvec[i];
                }
            }
        }
        let _ = DP_C[s];
        ks.push(rhs_raw(&xt, bs, c0, sigma)?);
    }
    let mut x_new = xs.to_vec();
    let mut err = 0.0f64;
    for i in 0..k {
        let mut d5 = 0.0;
        let mut d4 = 0.0;
        for s in 0..7 {
            d5 += DP_B5[s] * ks[s][i];
            d4 += DP_B4[s] * ks[s][i];
        }
        x_new[i] += h * d5;
        err = err.max((h * (d5 - d4)).abs());
        if !x_new[i].is_finite() {
            return Err(Error::Numerical("non-finite position".into()));
        }
    }
    Ok((x_new, err))
}

/// Group adjacent survivors into collision clusters: chains of adjacent
/// opposite-sign pairs with gaps within the cluster radius, containing at
/// least one pair at the trigger threshold.
fn gather_clusters(st: &ParticleState, cluster_radius: f64, threshold: f64) -> Vec<Vec<usize>> {
    let xs = st.survivor_positions();
    let k = xs.len();
    let mut clusters = Vec::new();
    let mut a = 0;
    while a + 1 < k {
        let chained = |p: usize| -> bool {
            let (i, j) = (st.survivors[p], st.survivors[p + 1]);
            xs[p + 1] - xs[p] <= cluster_radius && st.orientations[i] != st.orientations[j]
        };
        if !chained(a) {
            a += 1;
            continue;
        }
        let mut b = a;
        let mut triggered = xs[a + 1] - xs[a] <= threshold;
        while b + 1 < k && chained(b) {
            triggered |= xs[b + 1] - xs[b] <= threshold;
            b += 1;
        }
        if triggered {
            clusters.push(st.survivors[a..=b].to_vec());
        }
        a = b + 1;
    }
    clusters
}

/// Apply the annihilation rule to the given clusters of adjacent survivors.
///
/// Even clusters are removed entirely; odd clusters keep one particle at the
/// cluster's position mean, the lowest index whose orientation equals the
/// cluster's orientation sum.
pub fn annihilate(state: &ParticleState, clusters: &[Vec<usize>]) -> Result<(ParticleState, Vec<CollisionEvent>)> {
    let mut st = state.clone();
    let mut events = Vec::new();
    for cluster in clusters {
        if cluster.len() < 2 {
            return Err(Error::InvalidInput("a collision cluster needs at least two particles".into()));
        }
        for w in cluster.windows(2) {
            if st.orientations[w[0]] == st.orientations[w[1]] {
                return Err(Error::Numerical(format!(
                    "non-alternating cluster {:?} (orientations {:?})",
                    cluster,
                    cluster.iter().map(|&i| st.orientations[i]).collect::<Vec<_>>()
                )));
            }
        }
        let location = cluster.iter().map(|&i| st.positions[i]).sum::<f64>() / cluster.len() as f64;
        let net: i64 = cluster.iter().map(|&i| st.orientations[i] as i64).sum();
        let survivor = if cluster.len() % 2 == 0 {
            None
        } else {
            let b = net as i8;
            let idx = *cluster
                .iter()
                .find(|&&i| st.orientations[i] == b)
                .expect("alternating odd cluster contains its net orientation");
            Some((idx, b))
        };
        let removed: Vec<usize> =
            cluster.iter().copied().filter(|&i| Some(i) != survivor.map(|s| s.0)).collect();
        for &i in cluster {
            st.positions[i] = location;
        }
        st.survivors.retain(|i| !removed.contains(i));
        events.push(CollisionEvent {
            time: st.time,
            location,
            cluster: cluster.clone(),
            removed,
            survivor,
        });
    }
    // ordering must survive (at most one member of each cluster remains)
    let xs = st.survivor_positions();
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Numerical("survivor ordering broken by annihilation".into()));
    }
    Ok((st, events))
}

/// The piecewise-integer step function `v(t,x)` with `H(0) := 0`.
pub fn step_function(record: &TrajectoryRecord, t: f64, x: f64) -> i64 {
    record
        .survivors_at(t)
        .iter()
        .map(|&i| {
            let xi = record.position(i, t);
            if x > xi {
                record.orientations[i] as i64
            } else {
                0
            }
        })
        .sum()
}

/// The upper semicontinuous envelope `v*(t,x)`, including the collision
/// indicator: 1 at an even-cluster collision point whose leftmost particle
/// is positive.
pub fn upper_envelope(record: &TrajectoryRecord, t: f64, x: f64) -> i64 {
    let mut v: i64 = record
        .survivors_at(t)
        .iter()
        .map(|&i| {
            let xi = record.position(i, t);
            let b = record.orientations[i] as i64;
            if x > xi {
                b
            } else if x == xi {
                // (bH)*(0): 1 for b = +1, 0 for b = -1
                (b + 1) / 2
            } else {
                0
            }
        })
        .sum();
    for ev in &record.events {
        let same_time = (t - ev.time).abs() <= 1e-12 * ev.time.abs().max(1.0);
        let same_place = (x - ev.location).abs() <= 1e-12 * ev.location.abs().max(1.0);
        if same_time && same_place && ev.cluster.len() % 2 == 0 {
            let leftmost = ev.cluster[0];
            if record.orientations[leftmost] == 1 {
                v += 1;
            }
        }
    }
    v
}
