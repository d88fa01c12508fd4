//! Brute-force propagation of two coordinates on the full joint grid, used
//! to check the branch-level shortcuts against explicit Hamiltonians.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::branchstate::{BranchState, Factor, Registry, Subsystem};
use crate::fields::spectral::{fft_all, fft_axis};
use crate::fields::{gaussian_packet, momentum_expectation, wavenumbers, ComplexField, Grid, PacketSpec};
use crate::interactions::{impulsive_measure, ImpulsiveMeasurement, Schedule};
use crate::{Error, Result};

/// Largest joint grid accepted, 1024².
pub const JOINT_GRID_BUDGET: usize = 1 << 20;
/// Tolerated norm drift over a whole propagation.
pub const NORM_DRIFT_TOL: f64 = 1e-9;
/// Excited-state population at which the protective oracle gives up.
pub const MAX_EXCITED: f64 = 0.05;

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone, Default)]
pub enum JointPotential {
    #[default]
    Zero,
    /// Sampled on the joint grid, row-major in `(x, y)`.
    Static(Arc<Vec<f64>>),
    TimeDependent(Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>),
}

#[derive(Clone, Default)]
pub enum JointCoupling {
    #[default]
    None,
    /// `g(t)·y·W(x)`, applied in position space. `window` samples `W` on the x axis.
    Position { g: TimeFn, window: Vec<f64> },
    /// `f·A(x)·p_y`, applied in the x-position, y-momentum representation.
    Momentum { f: f64, a: Vec<f64> },
}

impl fmt::Debug for JointCoupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JointCoupling::None => write!(f, "None"),
            JointCoupling::Position { .. } => write!(f, "Position"),
            JointCoupling::Momentum { f: s, .. } => write!(f, "Momentum(f = {s})"),
        }
    }
}

/// Two one-dimensional coordinates `x`, `y` and their Hamiltonian. An
/// infinite mass switches that kinetic term off.
#[derive(Clone)]
pub struct JointSystem {
    pub grid: Grid,
    pub masses: [f64; 2],
    pub potential: JointPotential,
    pub coupling: JointCoupling,
    pub start_time: f64,
}

impl JointSystem {
    pub fn new(x: &Grid, y: &Grid, masses: [f64; 2]) -> Result<Self> {
        if x.dims() != 1 || y.dims() != 1 {
            return Err(Error::InvalidGrid("joint system needs two 1-D grids".into()));
        }
        if x.len() * y.len() > JOINT_GRID_BUDGET {
            return Err(Error::MemoryBudget(format!("joint grid {}x{} exceeds 1024²", x.len(), y.len())));
        }
        if !masses.iter().all(|m| *m > 0.0) {
            return Err(Error::InvalidState("masses must be positive".into()));
        }
        Ok(Self {
            grid: Grid::product(x, y)?,
            masses,
            potential: JointPotential::Zero,
            coupling: JointCoupling::None,
            start_time: 0.0,
        })
    }

    pub fn with_potential(mut self, v: JointPotential) -> Self {
        self.potential = v;
        self
    }

    pub fn with_coupling(mut self, c: JointCoupling) -> Self {
        self.coupling = c;
        self
    }

    fn potential_at(&self, t: f64) -> Option<Vec<f64>> {
        match &self.potential {
            JointPotential::Zero => None,
            JointPotential::Static(v) => Some(v.to_vec()),
            JointPotential::TimeDependent(f) => {
                let (xs, ys) = (self.grid.axis(0).coords(), self.grid.axis(1).coords());
                Some(xs.iter().flat_map(|&x| ys.iter().map(move |&y| f(x, y, t))).collect())
            }
        }
    }
}

fn apply_phase(values: &mut [Complex64], v: &[f64], scale: f64) {
    values.iter_mut().zip(v).for_each(|(c, &p)| *c *= Complex64::from_polar(1.0, -p * scale));
}

/// Strang splitting `K/2 · V/2 · C · V/2 · K/2` with potential and coupling
/// taken at the step midpoint.
pub fn propagate_joint(system: &JointSystem, initial: &ComplexField, dt: f64, n_steps: usize) -> Result<ComplexField> {
    let grid = &system.grid;
    if initial.grid() != grid {
        return Err(Error::GridMismatch("initial field is not on the joint grid".into()));
    }
    let norm0 = initial.norm_sqr();
    if (norm0 - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidState(format!("initial joint field has norm² {norm0}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidState(format!("time step must be positive, got {dt}")));
    }
    let (nx, ny) = (grid.axis(0).n, grid.axis(1).n);
    let (kx, ky) = (wavenumbers(grid.axis(0)), wavenumbers(grid.axis(1)));
    let kinetic_on = system.masses.iter().any(|m| m.is_finite());
    let kinetic: Vec<f64> = kx
        .iter()
        .flat_map(|&a| {
            let ky = &ky;
            ky.iter().map(move |&b| {
                let tx = if system.masses[0].is_finite() { a * a / (2.0 * system.masses[0]) } else { 0.0 };
                let ty = if system.masses[1].is_finite() { b * b / (2.0 * system.masses[1]) } else { 0.0 };
                tx + ty
            })
        })
        .collect();
    let static_v = match &system.potential {
        JointPotential::Static(v) if v.len() != grid.len() => {
            return Err(Error::GridMismatch("static potential has the wrong length".into()))
        }
        JointPotential::Static(v) => Some(v.to_vec()),
        _ => None,
    };
    match &system.coupling {
        JointCoupling::Position { window: w, .. } | JointCoupling::Momentum { a: w, .. } if w.len() != nx => {
            return Err(Error::GridMismatch("coupling profile must match the x axis".into()));
        }
        _ => {}
    }
    let ys = grid.axis(1).coords();
    let mut psi = initial.values().to_vec();

    let half_kinetic = |psi: &mut Vec<Complex64>| {
        if kinetic_on {
            fft_all(psi, grid, false);
            apply_phase(psi, &kinetic, 0.5 * dt);
            fft_all(psi, grid, true);
        }
    };

    for step in 0..n_steps {
        let tm = system.start_time + (step as f64 + 0.5) * dt;
        half_kinetic(&mut psi);
        let v = static_v.clone().or_else(|| system.potential_at(tm));
        if let Some(v) = &v {
            if v.iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFinite { step });
            }
            apply_phase(&mut psi, v, 0.5 * dt);
        }
        match &system.coupling {
            JointCoupling::None => {}
            JointCoupling::Position { g, window } => {
                let gt = g(tm);
                if gt != 0.0 {
                    for (i, w) in window.iter().enumerate() {
                        let row = &mut psi[i * ny..(i + 1) * ny];
                        row.iter_mut().zip(&ys).for_each(|(c, y)| *c *= Complex64::from_polar(1.0, -gt * y * w * dt));
                    }
                }
            }
            JointCoupling::Momentum { f, a } => {
                fft_axis(&mut psi, grid, 1, false);
                for (i, ai) in a.iter().enumerate() {
                    let row = &mut psi[i * ny..(i + 1) * ny];
                    row.iter_mut().zip(&ky).for_each(|(c, k)| *c *= Complex64::from_polar(1.0 / ny as f64, -f * ai * k * dt));
                }
                fft_axis(&mut psi, grid, 1, true);
            }
        }
        if let Some(v) = &v {
            apply_phase(&mut psi, v, 0.5 * dt);
        }
        half_kinetic(&mut psi);
        if psi.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite { step });
        }
    }
    let out = ComplexField::new(grid.clone(), psi)?;
    let drift = (out.norm_sqr() - norm0).abs();
    if drift > NORM_DRIFT_TOL {
        return Err(Error::NonUnitary(drift));
    }
    Ok(out)
}

/// L² distance between two fields on the same grid.
pub fn l2_distance(a: &ComplexField, b: &ComplexField) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch("l2_distance".into()));
    }
    let s: f64 = a.values().iter().zip(b.values()).map(|(p, q)| (p - q).norm_sqr()).sum();
    Ok((s * a.grid().dv()).sqrt())
}

/// Impulsive-limit comparison: object `x` in `c₋ψ₋ + c₊ψ₊` with packets at
/// `∓separation`, pointer `z`, interaction `f·sign(x)·p_z` with `f·T` fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpulsiveCheck {
    pub x: Grid,
    pub z: Grid,
    pub separation: f64,
    pub object_width: f64,
    pub object_mass: f64,
    pub pointer_width: f64,
    pub pointer_mass: f64,
    pub coeffs: [Complex64; 2],
    /// `f·T`.
    pub kick: f64,
    pub duration: f64,
    pub steps: usize,
}

impl Default for ImpulsiveCheck {
    fn default() -> Self {
        Self {
            x: Grid::line(256, -24.0, 24.0).expect("static grid"),
            z: Grid::line(256, -16.0, 16.0).expect("static grid"),
            separation: 8.0,
            object_width: 1.0,
            object_mass: 1.0,
            pointer_width: 0.5,
            pointer_mass: 10.0,
            coeffs: [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)],
            kick: 5.0,
            duration: 1e-3,
            steps: 10,
        }
    }
}

impl ImpulsiveCheck {
    pub fn halved(&self) -> Self {
        Self { duration: 0.5 * self.duration, ..self.clone() }
    }

    fn branch_state(&self) -> Result<(BranchState, ImpulsiveMeasurement)> {
        let reg = Registry::new(vec![
            Subsystem::new("x", self.x.clone(), self.object_mass),
            Subsystem::new("z", self.z.clone(), self.pointer_mass),
        ])?;
        let psi: Vec<ComplexField> = [-self.separation, self.separation]
            .iter()
            .map(|&c| gaussian_packet(&self.x, &PacketSpec::new(c, self.object_width, 0.0)))
            .collect::<Result<_>>()?;
        let obj = psi[0].combine(self.coeffs[0], &psi[1], self.coeffs[1])?;
        let pointer = gaussian_packet(&self.z, &PacketSpec::new(0.0, self.pointer_width, 0.0))?;
        let state = BranchState::product(
            reg.clone(),
            vec![Factor::new(&reg, &["x"], obj)?, Factor::new(&reg, &["z"], pointer)?],
            "psi",
        )?;
        let meas = ImpulsiveMeasurement {
            object: "x".into(),
            pointer: "z".into(),
            eigenvalues: vec![-1.0, 1.0],
            coupling: self.kick / self.duration,
            duration: self.duration,
            eigenfunctions: psi,
        };
        Ok((state, meas))
    }
}

/// L² discrepancy between the branch construction and explicit propagation
/// with the step observable `A(x) = sign(x)`.
pub fn impulsive_equivalence(check: &ImpulsiveCheck) -> Result<f64> {
    let (state, meas) = check.branch_state()?;
    let analytic = impulsive_measure(&state, &meas)?.expand()?;
    let a = check.x.axis(0).coords().iter().map(|&x| if x > 0.0 { 1.0 } else { -1.0 }).collect();
    let system = JointSystem::new(&check.x, &check.z, [check.object_mass, check.pointer_mass])?
        .with_coupling(JointCoupling::Momentum { f: meas.coupling, a });
    let joint = propagate_joint(&system, &state.expand()?, check.duration / check.steps as f64, check.steps)?;
    l2_distance(&analytic, &joint)
}

/// Harmonically trapped `x` probed by a meter `y` through `g(t)·y·W(x)`, with
/// `W` a normalized Gaussian window around `probe`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtectiveOracleSpec {
    pub x: Grid,
    pub y: Grid,
    pub omega: f64,
    pub mass: f64,
    pub meter_mass: f64,
    pub meter_width: f64,
    pub probe: f64,
    /// Defaults to four x spacings.
    pub window_width: Option<f64>,
    pub schedule: Schedule,
    pub dt: f64,
}

impl ProtectiveOracleSpec {
    /// Unit trap probed at its centre over `periods` trap periods.
    pub fn standard(periods: f64) -> Self {
        Self {
            x: Grid::line(128, -8.0, 8.0).expect("static grid"),
            y: Grid::line(128, -32.0, 32.0).expect("static grid"),
            omega: 1.0,
            mass: 1.0,
            meter_mass: 100.0,
            meter_width: 2.0,
            probe: 0.0,
            window_width: None,
            schedule: Schedule::SinSquared { start: 0.0, duration: periods * 2.0 * PI },
            dt: 0.05,
        }
    }

    pub fn window_width(&self) -> f64 {
        self.window_width.unwrap_or(4.0 * self.x.axis(0).dx())
    }

    fn window(&self, w: f64) -> Vec<f64> {
        let norm = 1.0 / ((2.0 * PI).sqrt() * w);
        self.x.axis(0).coords().iter().map(|x| norm * (-(x - self.probe).powi(2) / (2.0 * w * w)).exp()).collect()
    }

    fn ground_state(&self) -> Result<ComplexField> {
        // σ of |α|² is 1/√(2mω)
        let sigma = 1.0 / (2.0 * self.mass * self.omega).sqrt();
        gaussian_packet(&self.x, &PacketSpec::new(0.0, sigma, 0.0))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProtectiveOracleReport {
    /// `-∫g dt · ⟨W⟩`.
    pub predicted: f64,
    pub measured: f64,
    pub relative_error: f64,
    /// Ground-state population of the probed coordinate at the end.
    pub fidelity: f64,
    pub max_excited: f64,
    pub window_width: f64,
    /// `⟨W⟩` at half, nominal and double window width.
    pub window_sensitivity: Vec<(f64, f64)>,
    pub duration: f64,
    pub steps: usize,
}

/// Population of `ground` in the reduced state of coordinate 0.
fn ground_population(joint: &[Complex64], ground: &[Complex64], ny: usize, dx: f64, dy: f64) -> f64 {
    (0..ny)
        .map(|j| {
            let amp: Complex64 = ground.iter().enumerate().map(|(i, g)| g.conj() * joint[i * ny + j]).sum();
            (amp * dx).norm_sqr() * dy
        })
        .sum()
}

/// Runs the adiabatic coupling on the joint grid and reports the meter's
/// momentum shift next to the effective-phase prediction.
pub fn protective_oracle(spec: &ProtectiveOracleSpec) -> Result<ProtectiveOracleReport> {
    spec.schedule.validate()?;
    let w0 = spec.window_width();
    let alpha = spec.ground_state()?;
    let density = alpha.density();
    let dx = spec.x.dv();
    let expect_w = |w: f64| -> f64 { spec.window(w).iter().zip(&density).map(|(a, b)| a * b).sum::<f64>() * dx };
    let window_sensitivity = [0.5 * w0, w0, 2.0 * w0].iter().map(|&w| (w, expect_w(w))).collect();
    let integral = if spec.schedule.window().is_some() { 1.0 } else { 0.0 };
    let predicted = -integral * expect_w(w0);

    let meter = gaussian_packet(&spec.y, &PacketSpec::new(0.0, spec.meter_width, 0.0))?;
    let initial = ComplexField::outer(&alpha, &meter)?;
    let before = momentum_expectation(&initial, 1)?;
    let Some((start, end)) = spec.schedule.window() else {
        return Ok(ProtectiveOracleReport {
            predicted,
            measured: 0.0,
            relative_error: 0.0,
            fidelity: 1.0,
            max_excited: 0.0,
            window_width: w0,
            window_sensitivity,
            duration: 0.0,
            steps: 0,
        });
    };
    let steps = ((end - start) / spec.dt).round().max(1.0) as usize;
    let dt = (end - start) / steps as f64;
    let (xs, k) = (spec.x.axis(0).coords(), 0.5 * spec.mass * spec.omega * spec.omega);
    let ny = spec.y.axis(0).n;
    let v: Vec<f64> = xs.iter().flat_map(|x| std::iter::repeat_n(k * x * x, ny)).collect();
    let schedule = spec.schedule.clone();
    let mut system = JointSystem::new(&spec.x, &spec.y, [spec.mass, spec.meter_mass])?
        .with_potential(JointPotential::Static(Arc::new(v)))
        .with_coupling(JointCoupling::Position { g: Arc::new(move |t| schedule.g(t)), window: spec.window(w0) });

    let chunks = 50.min(steps);
    let dy = spec.y.dv();
    let mut field = initial;
    let mut max_excited = 0.0f64;
    let mut done = 0;
    for c in 0..chunks {
        let n = steps * (c + 1) / chunks - done;
        system.start_time = start + done as f64 * dt;
        field = propagate_joint(&system, &field, dt, n)?;
        done += n;
        let excited = 1.0 - ground_population(field.values(), alpha.values(), ny, dx, dy);
        max_excited = max_excited.max(excited);
        if excited > MAX_EXCITED {
            return Err(Error::Adiabaticity(excited));
        }
    }
    let measured = momentum_expectation(&field, 1)? - before;
    Ok(ProtectiveOracleReport {
        predicted,
        measured,
        relative_error: if predicted != 0.0 { ((measured - predicted) / predicted).abs() } else { measured.abs() },
        fidelity: ground_population(field.values(), alpha.values(), ny, dx, dy),
        max_excited,
        window_width: w0,
        window_sensitivity,
        duration: end - start,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_grid, SplitStep, Potential};

    fn packet(g: &Grid, x: f64, s: f64, k: f64) -> ComplexField {
        gaussian_packet(g, &PacketSpec::new(x, s, k)).unwrap()
    }

    #[test]
    fn uncoupled_system_factorizes() {
        let gx = make_grid(1, 128, -10.0, 10.0).unwrap();
        let gy = make_grid(1, 64, -20.0, 20.0).unwrap();
        let (a, b) = (packet(&gx, 1.0, 1.0, 0.5), packet(&gy, -1.0, 1.5, 0.0));
        let vx: Vec<f64> = gx.axis(0).coords().iter().map(|x| 0.5 * x * x).collect();
        let v: Vec<f64> = vx.iter().flat_map(|&p| std::iter::repeat_n(p, 64)).collect();
        let sys = JointSystem::new(&gx, &gy, [1.0, 3.0])
            .unwrap()
            .with_potential(JointPotential::Static(Arc::new(v)))
            .with_coupling(JointCoupling::Momentum { f: 0.0, a: vec![1.0; 128] });
        let joint = propagate_joint(&sys, &ComplexField::outer(&a, &b).unwrap(), 0.01, 100).unwrap();
        let ax = SplitStep::new(0.01).mass(1.0).run(&a, &Potential::Static(Arc::new(vx)), 100).unwrap();
        let by = SplitStep::new(0.01).mass(3.0).run(&b, &Potential::Zero, 100).unwrap();
        let reference = ComplexField::outer(&ax, &by).unwrap();
        assert!(l2_distance(&joint, &reference).unwrap() < 1e-10);
    }

    #[test]
    fn shift_generator_matches_exact_map() {
        // f·x·p_y with kinetics off: Φ(x, y) = ψ(x) φ(y − f x T)
        let gx = make_grid(1, 128, -8.0, 8.0).unwrap();
        let gy = make_grid(1, 256, -20.0, 20.0).unwrap();
        let (psi, phi) = (packet(&gx, 0.0, 0.5, 0.0), PacketSpec::new(0.0, 0.7, 0.0));
        let (f, t) = (2.0, 0.5);
        let sys = JointSystem::new(&gx, &gy, [f64::INFINITY, f64::INFINITY])
            .unwrap()
            .with_coupling(JointCoupling::Momentum { f, a: gx.axis(0).coords() });
        let out = propagate_joint(&sys, &ComplexField::outer(&psi, &packet(&gy, 0.0, 0.7, 0.0)).unwrap(), t / 7.0, 7).unwrap();
        let exact = ComplexField::from_fn(sys.grid.clone(), |p| {
            let i = ((p[0] + 8.0) / gx.axis(0).dx()).round() as usize;
            psi.values()[i] * phi.amplitude(p[1] - f * p[0] * t)
        });
        let err = l2_distance(&out, &exact).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn impulsive_branch_matches_joint_propagation() {
        let check = ImpulsiveCheck::default();
        let mut errs = vec![impulsive_equivalence(&check).unwrap()];
        let mut c = check.clone();
        for _ in 0..3 {
            c = c.halved();
            errs.push(impulsive_equivalence(&c).unwrap());
        }
        assert!(errs[0] < 1e-3, "{errs:?}");
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn oversized_joint_grid_is_rejected() {
        let g = make_grid(1, 2048, -1.0, 1.0).unwrap();
        let h = make_grid(1, 1024, -1.0, 1.0).unwrap();
        assert!(matches!(JointSystem::new(&g, &h, [1.0, 1.0]), Err(Error::MemoryBudget(_))));
    }

    #[test]
    fn unnormalized_input_is_rejected() {
        let g = make_grid(1, 32, -12.0, 12.0).unwrap();
        let sys = JointSystem::new(&g, &g, [1.0, 1.0]).unwrap();
        let f = ComplexField::outer(&packet(&g, 0.0, 1.0, 0.0), &packet(&g, 0.0, 1.0, 0.0)).unwrap().scaled(Complex64::new(2.0, 0.0));
        assert!(propagate_joint(&sys, &f, 0.1, 1).is_err());
    }

    #[test]
    fn zero_schedule_gives_zero_shift() {
        let spec = ProtectiveOracleSpec { schedule: Schedule::Zero, ..ProtectiveOracleSpec::standard(1.0) };
        let r = protective_oracle(&spec).unwrap();
        assert!(r.measured.abs() < 1e-10);
        // a switched-on coupling with vanishing window still conserves p_y
        let spec = ProtectiveOracleSpec { probe: 7.5, window_width: Some(0.05), ..ProtectiveOracleSpec::standard(1.0) };
        assert!(protective_oracle(&spec).unwrap().measured.abs() < 1e-10);
    }

    #[test]
    fn abrupt_coupling_trips_adiabaticity_monitor() {
        let spec = ProtectiveOracleSpec {
            schedule: Schedule::Constant { start: 0.0, duration: 0.2 },
            window_width: Some(0.5),
            probe: 0.5,
            dt: 0.005,
            ..ProtectiveOracleSpec::standard(1.0)
        };
        assert!(matches!(protective_oracle(&spec), Err(Error::Adiabaticity(_))));
    }

    #[test]
    fn slow_coupling_reproduces_effective_phase() {
        let r = protective_oracle(&ProtectiveOracleSpec::standard(50.0)).unwrap();
        assert!(r.relative_error < 0.05, "{r:?}");
        assert!(r.fidelity > 0.99, "{r:?}");
    }
}
