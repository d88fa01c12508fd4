//! Bohmian velocity field and trajectory integration.

mod crossing;
mod ensemble;
mod sampling;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::branchstate::{BranchState, NODE_EPS};
use crate::{Error, Result};

pub use crossing::{count_inversions, no_crossing_check, no_crossing_check_by};
pub use ensemble::{
    run_ensemble, tally, EnsemblePlan, EnsembleRun, Event, Frame, FreePropagator, Histogram, Propagator, ScheduledEvent,
};
pub use sampling::{chi_square_equiprobable, ks_distance, sample_initial, ChiSquare, GridCdf, InitialSampler};

/// Maximum number of recursive step halvings near a node.
pub const MAX_HALVINGS: u32 = 8;
/// Step-doubling error bound per step; steep velocity gradients near
/// interference minima otherwise let neighbouring trajectories swap order.
pub const STEP_TOL: f64 = 1e-9;
/// Speed cap in units of grid span per scenario step.
pub const SPEED_CAP_SPANS: f64 = 10.0;
const MAX_COORDS: usize = 8;

/// Positions of every flat coordinate at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub t: f64,
    pub coords: Vec<f64>,
}

/// Recorded history of one ensemble member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: usize,
    /// Uniformly spaced records; stops early if the trajectory left the grid.
    pub samples: Vec<Configuration>,
    /// Occupied branch per record, `-1` for mixed or node configurations.
    pub occupancy: Vec<i64>,
    /// Whether node regularization fired since the previous record.
    pub node_flags: Vec<bool>,
    pub node_events: usize,
    /// Time at which the trajectory left the grid.
    pub boundary_exit: Option<f64>,
    /// Configuration just before each scheduled event, in schedule order.
    pub event_configs: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn final_config(&self) -> &Configuration {
        self.samples.last().expect("trajectory has an initial record")
    }

    pub fn final_occupancy(&self) -> i64 {
        *self.occupancy.last().expect("trajectory has an initial record")
    }

    pub fn terminated(&self) -> bool {
        self.boundary_exit.is_some()
    }

    /// Largest deviation of coordinate `coord` from `other` over the common
    /// records; infinite when only one of them terminated.
    pub fn max_deviation(&self, other: &Trajectory, coord: usize) -> f64 {
        if self.terminated() != other.terminated() || self.samples.len() != other.samples.len() {
            return f64::INFINITY;
        }
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a.coords[coord] - b.coords[coord]).abs())
            .fold(0.0, f64::max)
    }
}

/// Summary of an ensemble run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n: usize,
    pub seed: u64,
    /// Final occupancy tallied by branch label.
    pub arrivals: std::collections::BTreeMap<String, usize>,
    pub mixed: usize,
    pub boundary: usize,
    pub node_trajectories: usize,
    pub node_events: usize,
    /// Scenario-defined path labels.
    pub paths: std::collections::BTreeMap<String, usize>,
    pub histograms: std::collections::BTreeMap<String, Histogram>,
}

impl EnsembleStats {
    /// Fraction of the ensemble that ended in branch `label`.
    pub fn fraction(&self, label: &str) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.arrivals.get(label).copied().unwrap_or(0) as f64 / self.n as f64
    }
}

/// Time-dependent velocity field in configuration space.
pub trait VelocityField: Sync {
    fn n_coords(&self) -> usize;
    /// Velocity at `(t, q)`; [`Error::NodeConfiguration`] near nodes and
    /// [`Error::OutsideGrid`] off the grid.
    fn velocity(&self, t: f64, q: &[f64], out: &mut [f64]) -> Result<()>;
    /// Velocity without the node threshold; non-finite components are zero.
    fn raw_velocity(&self, t: f64, q: &[f64], out: &mut [f64]) -> Result<()>;
}

fn guidance(state: &BranchState, q: &[f64], out: &mut [f64], regularize: bool) -> Result<()> {
    let n = q.len();
    assert!(n <= MAX_COORDS, "at most {MAX_COORDS} coordinates");
    let mut grad = [Complex64::new(0.0, 0.0); MAX_COORDS];
    let psi = state.amplitude_and_gradient(q, &mut grad[..n])?;
    let rho = psi.norm_sqr();
    if !regularize && !(rho >= NODE_EPS * state.peak_density() && rho > 0.0) {
        return Err(Error::NodeConfiguration { density: rho });
    }
    let reg = state.registry();
    let mut k = 0;
    for s in reg.subsystems() {
        for _ in 0..s.grid.dims() {
            let v = (grad[k] / psi).im / s.mass;
            out[k] = if v.is_finite() { v } else { 0.0 };
            k += 1;
        }
    }
    Ok(())
}

/// `v_i = Im(∂_iΨ/Ψ)/m_i` at `config`.
pub fn velocity(state: &BranchState, config: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; config.len()];
    guidance(state, config, &mut out, false)?;
    Ok(out)
}

/// Velocity field of one fixed state.
pub struct Frozen<'a>(pub &'a BranchState);

impl VelocityField for Frozen<'_> {
    fn n_coords(&self) -> usize {
        self.0.registry().n_coords()
    }
    fn velocity(&self, _t: f64, q: &[f64], out: &mut [f64]) -> Result<()> {
        guidance(self.0, q, out, false)
    }
    fn raw_velocity(&self, _t: f64, q: &[f64], out: &mut [f64]) -> Result<()> {
        guidance(self.0, q, out, true)
    }
}

/// Snapshots at `t0`, `t0 + h/2` and `t0 + h`; velocities in between are
/// interpolated linearly in time.
pub struct StateWindow<'a> {
    pub t0: f64,
    pub h: f64,
    pub states: [&'a BranchState; 3],
}

impl StateWindow<'_> {
    fn eval(&self, t: f64, q: &[f64], out: &mut [f64], raw: bool) -> Result<()> {
        let s = ((t - self.t0) / (0.5 * self.h)).clamp(0.0, 2.0);
        let i = (s.floor() as usize).min(1);
        let w = s - i as f64;
        const SNAP: f64 = 1e-9;
        if w < SNAP {
            return guidance(self.states[i], q, out, raw);
        }
        if w > 1.0 - SNAP {
            return guidance(self.states[i + 1], q, out, raw);
        }
        let n = q.len();
        let mut a = [0.0; MAX_COORDS];
        guidance(self.states[i], q, &mut a[..n], raw)?;
        guidance(self.states[i + 1], q, out, raw)?;
        for k in 0..n {
            out[k] = (1.0 - w) * a[k] + w * out[k];
        }
        Ok(())
    }
}

impl VelocityField for StateWindow<'_> {
    fn n_coords(&self) -> usize {
        self.states[0].registry().n_coords()
    }
    fn velocity(&self, t: f64, q: &[f64], out: &mut [f64]) -> Result<()> {
        self.eval(t, q, out, false)
    }
    fn raw_velocity(&self, t: f64, q: &[f64], out: &mut [f64]) -> Result<()> {
        self.eval(t, q, out, true)
    }
}

fn rk4(field: &dyn VelocityField, t: f64, q: &[f64], h: f64, v_max: &[f64], raw: bool) -> Result<Vec<f64>> {
    let n = q.len();
    let eval = |t: f64, x: &[f64], out: &mut [f64]| -> Result<()> {
        if raw {
            field.raw_velocity(t, x, out)?;
        } else {
            field.velocity(t, x, out)?;
        }
        for (v, m) in out.iter_mut().zip(v_max) {
            *v = v.clamp(-m, *m);
        }
        Ok(())
    };
    let mut k = [[0.0; MAX_COORDS]; 4];
    let mut tmp = [0.0; MAX_COORDS];
    eval(t, q, &mut k[0][..n])?;
    for i in 0..n {
        tmp[i] = q[i] + 0.5 * h * k[0][i];
    }
    eval(t + 0.5 * h, &tmp[..n], &mut k[1][..n])?;
    for i in 0..n {
        tmp[i] = q[i] + 0.5 * h * k[1][i];
    }
    eval(t + 0.5 * h, &tmp[..n], &mut k[2][..n])?;
    for i in 0..n {
        tmp[i] = q[i] + h * k[2][i];
    }
    eval(t + h, &tmp[..n], &mut k[3][..n])?;
    Ok((0..n).map(|i| q[i] + h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i])).collect())
}

fn regularized(field: &dyn VelocityField, t: f64, q: &[f64], h: f64, v_max: &[f64], depth: u32) -> Result<Vec<f64>> {
    match rk4(field, t, q, h, v_max, false) {
        Err(Error::NodeConfiguration { .. }) if depth < MAX_HALVINGS => {
            let mid = regularized(field, t, q, 0.5 * h, v_max, depth + 1)?;
            regularized(field, t + 0.5 * h, &mid, 0.5 * h, v_max, depth + 1)
        }
        Err(Error::NodeConfiguration { .. }) => rk4(field, t, q, h, v_max, true),
        other => other,
    }
}

/// Result of one integration step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub q: Vec<f64>,
    /// Node regularization was needed.
    pub node: bool,
}

/// RK4 with step doubling: halves until one step and two half steps agree
/// within [`STEP_TOL`], then returns the two-half-step result.
fn controlled(field: &dyn VelocityField, t: f64, q: &[f64], h: f64, v_max: &[f64], depth: u32) -> Result<Vec<f64>> {
    let full = rk4(field, t, q, h, v_max, false)?;
    let mid = rk4(field, t, q, 0.5 * h, v_max, false)?;
    let two = rk4(field, t + 0.5 * h, &mid, 0.5 * h, v_max, false)?;
    let err = full.iter().zip(&two).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if err <= STEP_TOL || depth >= MAX_HALVINGS {
        return Ok(two);
    }
    let m = controlled(field, t, q, 0.5 * h, v_max, depth + 1)?;
    controlled(field, t + 0.5 * h, &m, 0.5 * h, v_max, depth + 1)
}

/// One error-controlled RK4 step of size `dt` from `(t, q)`. Near a node the
/// step is halved recursively and speeds are capped at `v_max` per
/// coordinate. Leaving the grid is reported as [`Error::OutsideGrid`].
pub fn step_trajectory(field: &dyn VelocityField, t: f64, q: &[f64], dt: f64, v_max: &[f64]) -> Result<StepOutcome> {
    match controlled(field, t, q, dt, v_max, 0) {
        Ok(q) => Ok(StepOutcome { q, node: false }),
        Err(Error::NodeConfiguration { .. }) => {
            let mid = regularized(field, t, q, 0.5 * dt, v_max, 1)?;
            let q = regularized(field, t + 0.5 * dt, &mid, 0.5 * dt, v_max, 1)?;
            Ok(StepOutcome { q, node: true })
        }
        Err(e) => Err(e),
    }
}

/// Per-coordinate speed cap `10·span/dt`.
pub fn speed_caps(state: &BranchState, dt: f64) -> Vec<f64> {
    state
        .registry()
        .subsystems()
        .iter()
        .flat_map(|s| s.grid.axes().iter().map(move |a| SPEED_CAP_SPANS * a.span() / dt.abs()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branchstate::{Factor, Potentials, Registry, Subsystem};
    use crate::fields::{gaussian_packet, make_grid, ComplexField, PacketSpec};

    fn single(n: usize, l: f64, f: impl Fn(&crate::Grid) -> ComplexField) -> BranchState {
        let g = make_grid(1, n, -l, l).unwrap();
        let reg = Registry::new(vec![Subsystem::new("x", g.clone(), 1.0)]).unwrap();
        BranchState::product(reg.clone(), vec![Factor::new(&reg, &["x"], f(&g)).unwrap()], "psi").unwrap()
    }

    #[test]
    fn plane_wave_moves_at_k() {
        let s = single(128, std::f64::consts::PI, |g| {
            ComplexField::from_fn(g.clone(), |p| Complex64::from_polar(1.0, 2.0 * p[0])).normalized().unwrap()
        });
        let v = velocity(&s, &[0.3]).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn real_field_has_no_velocity() {
        let s = single(128, 10.0, |g| gaussian_packet(g, &PacketSpec::new(0.0, 1.0, 0.0)).unwrap());
        for x in [-2.0, 0.0, 0.77, 3.1] {
            assert!(velocity(&s, &[x]).unwrap()[0].abs() < 1e-12);
        }
    }

    #[test]
    fn spreading_gaussian_velocity_is_analytic() {
        let s = single(1024, 16.0, |g| gaussian_packet(g, &PacketSpec::new(0.0, 1.0, 0.0)).unwrap());
        let t = 1.3;
        let e = s.evolve_free(t, 1, &Potentials::none(), 0.0).unwrap();
        let g = e.registry().get(0).grid.clone();
        for j in [480, 500, 530, 560] {
            let x = g.axis(0).coord(j);
            let v = velocity(&e, &[x]).unwrap()[0];
            let expect = x * t / (4.0 + t * t);
            assert!((v - expect).abs() < 1e-6, "{x}: {v} vs {expect}");
        }
    }

    #[test]
    fn stationary_state_does_not_move() {
        let s = single(128, 10.0, |g| gaussian_packet(g, &PacketSpec::new(0.0, 1.0, 0.0)).unwrap());
        let caps = speed_caps(&s, 0.01);
        let w = StateWindow { t0: 0.0, h: 0.01, states: [&s, &s, &s] };
        let mut q = vec![1.234];
        for k in 0..100 {
            q = step_trajectory(&w, k as f64 * 0.01, &q, 0.01, &caps).unwrap().q;
        }
        assert!((q[0] - 1.234).abs() < 1e-12);
    }

    struct Linear;
    impl VelocityField for Linear {
        fn n_coords(&self) -> usize {
            1
        }
        // free-Gaussian guidance v = x t / (4 + t²), σ₀ = 1
        fn velocity(&self, t: f64, q: &[f64], out: &mut [f64]) -> Result<()> {
            out[0] = q[0] * t / (4.0 + t * t);
            Ok(())
        }
        fn raw_velocity(&self, t: f64, q: &[f64], out: &mut [f64]) -> Result<()> {
            self.velocity(t, q, out)
        }
    }

    fn integrate(field: &dyn VelocityField, x0: f64, dt: f64, t_end: f64, fixed: bool) -> f64 {
        let n = (t_end / dt).round() as usize;
        let mut q = vec![x0];
        for k in 0..n {
            let t = k as f64 * dt;
            q = if fixed {
                rk4(field, t, &q, dt, &[f64::INFINITY], false).unwrap()
            } else {
                step_trajectory(field, t, &q, dt, &[f64::INFINITY]).unwrap().q
            };
        }
        q[0]
    }

    #[test]
    fn rk4_error_shrinks_fourth_order() {
        let exact = 0.7 * (1.0f64 + 4.0 / 4.0).sqrt(); // σ(2)/σ₀ = √2
        let e1 = (integrate(&Linear, 0.7, 0.2, 2.0, true) - exact).abs();
        let e2 = (integrate(&Linear, 0.7, 0.1, 2.0, true) - exact).abs();
        assert!(e1 / e2 > 8.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn controlled_step_meets_tolerance_at_coarse_dt() {
        let exact = 0.7 * 2f64.sqrt();
        let e = (integrate(&Linear, 0.7, 0.5, 2.0, false) - exact).abs();
        assert!(e < 1e-8, "error {e}");
    }

    struct Node;
    impl VelocityField for Node {
        fn n_coords(&self) -> usize {
            1
        }
        fn velocity(&self, _t: f64, q: &[f64], out: &mut [f64]) -> Result<()> {
            if q[0].abs() < 1e-3 {
                return Err(Error::NodeConfiguration { density: 0.0 });
            }
            out[0] = 1.0 / q[0];
            Ok(())
        }
        fn raw_velocity(&self, _t: f64, q: &[f64], out: &mut [f64]) -> Result<()> {
            let v = 1.0 / q[0];
            out[0] = if v.is_finite() { v } else { 0.0 };
            Ok(())
        }
    }

    #[test]
    fn node_passage_is_regularized_and_capped() {
        let out = step_trajectory(&Node, 0.0, &[0.0005], 0.01, &[50.0]).unwrap();
        assert!(out.node);
        assert!(out.q[0].is_finite());
        assert!((out.q[0] - 0.0005).abs() <= 50.0 * 0.01 + 1e-12);
    }

    #[test]
    fn leaving_the_grid_is_an_error() {
        let s = single(256, 8.0, |g| {
            ComplexField::from_fn(g.clone(), |p| Complex64::from_polar((-(p[0] - 6.0).powi(2)).exp(), 5.0 * p[0]))
                .normalized()
                .unwrap()
        });
        let caps = speed_caps(&s, 0.2);
        let w = StateWindow { t0: 0.0, h: 0.2, states: [&s, &s, &s] };
        let r = step_trajectory(&w, 0.0, &[7.5], 0.2, &caps);
        assert!(matches!(r, Err(Error::OutsideGrid { .. })));
    }
}
