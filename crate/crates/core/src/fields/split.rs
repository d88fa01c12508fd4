//! Symmetric (Strang) split-operator propagation.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use super::spectral::{fft_all, wavenumbers};
use super::{ComplexField, Grid};
use crate::{Error, Result};

/// External potential sampled on the field's grid.
#[derive(Clone, Default)]
pub enum Potential {
    #[default]
    Zero,
    Static(Arc<Vec<f64>>),
    /// Evaluated once per step at the midpoint time.
    TimeDependent(Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>),
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Zero => write!(f, "Zero"),
            Potential::Static(v) => write!(f, "Static({} points)", v.len()),
            Potential::TimeDependent(_) => write!(f, "TimeDependent"),
        }
    }
}

impl Potential {
    pub fn from_fn(grid: &Grid, v: impl Fn(&[f64]) -> f64) -> Self {
        Potential::Static(Arc::new((0..grid.len()).map(|i| v(&grid.point(i))).collect()))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Potential::Zero)
    }

    fn sample(&self, t: f64) -> Option<std::borrow::Cow<'_, [f64]>> {
        match self {
            Potential::Zero => None,
            Potential::Static(v) => Some(std::borrow::Cow::Borrowed(v.as_slice())),
            Potential::TimeDependent(f) => Some(std::borrow::Cow::Owned(f(t))),
        }
    }
}

/// Split-step propagator configuration.
#[derive(Clone, Debug)]
pub struct SplitStep {
    dt: f64,
    masses: Option<Vec<f64>>,
    t0: f64,
}

/// Propagates `field` for `n_steps` of size `dt` with unit mass.
pub fn split_step(field: &ComplexField, potential: &Potential, dt: f64, n_steps: usize) -> Result<ComplexField> {
    SplitStep::new(dt).run(field, potential, n_steps)
}

impl SplitStep {
    pub fn new(dt: f64) -> Self {
        Self { dt, masses: None, t0: 0.0 }
    }

    /// One mass per grid axis; `f64::INFINITY` freezes an axis.
    pub fn masses(mut self, masses: &[f64]) -> Self {
        self.masses = Some(masses.to_vec());
        self
    }

    pub fn mass(self, m: f64) -> Self {
        self.masses(&[m, m])
    }

    pub fn start_time(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    fn kinetic_phase(&self, grid: &Grid, tau: f64) -> Vec<Complex64> {
        let shape = grid.shape();
        let k: Vec<Vec<f64>> = grid.axes().iter().map(wavenumbers).collect();
        let mass = |axis: usize| self.masses.as_ref().and_then(|m| m.get(axis).copied()).unwrap_or(1.0);
        let coef: Vec<f64> = (0..shape.len()).map(|a| 0.5 / mass(a)).collect();
        match shape.len() {
            1 => k[0].iter().map(|&k0| Complex64::from_polar(1.0, -coef[0] * k0 * k0 * tau)).collect(),
            _ => {
                let mut out = Vec::with_capacity(grid.len());
                for &k0 in &k[0] {
                    for &k1 in &k[1] {
                        let e = coef[0] * k0 * k0 + coef[1] * k1 * k1;
                        out.push(Complex64::from_polar(1.0, -e * tau));
                    }
                }
                out
            }
        }
    }

    pub fn run(&self, field: &ComplexField, potential: &Potential, n_steps: usize) -> Result<ComplexField> {
        if self.dt == 0.0 || n_steps == 0 {
            return Ok(field.clone());
        }
        let grid = field.grid();
        let mut v = field.values().to_vec();
        if let Potential::Static(p) = potential {
            if p.len() != grid.len() {
                return Err(Error::GridMismatch(format!("potential has {} points, grid {}", p.len(), grid.len())));
            }
        }

        if potential.is_zero() {
            // free evolution is diagonal in k-space: one exact transform
            let phase = self.kinetic_phase(grid, self.dt * n_steps as f64);
            fft_all(&mut v, grid, false);
            v.iter_mut().zip(&phase).for_each(|(a, p)| *a *= p);
            fft_all(&mut v, grid, true);
            check_finite(&v, n_steps)?;
            return Ok(ComplexField::from_parts(grid.clone(), v));
        }

        let half = self.kinetic_phase(grid, 0.5 * self.dt);
        let full = self.kinetic_phase(grid, self.dt);
        fft_all(&mut v, grid, false);
        v.iter_mut().zip(&half).for_each(|(a, p)| *a *= p);
        for step in 0..n_steps {
            fft_all(&mut v, grid, true);
            let t_mid = self.t0 + (step as f64 + 0.5) * self.dt;
            if let Some(pot) = potential.sample(t_mid) {
                if pot.len() != grid.len() {
                    return Err(Error::GridMismatch("potential sample size".into()));
                }
                v.iter_mut()
                    .zip(pot.iter())
                    .for_each(|(a, &u)| *a *= Complex64::from_polar(1.0, -u * self.dt));
            }
            check_finite(&v, step)?;
            fft_all(&mut v, grid, false);
            let k = if step + 1 == n_steps { &half } else { &full };
            v.iter_mut().zip(k).for_each(|(a, p)| *a *= p);
        }
        fft_all(&mut v, grid, true);
        check_finite(&v, n_steps)?;
        Ok(ComplexField::from_parts(grid.clone(), v))
    }
}

fn check_finite(v: &[Complex64], step: usize) -> Result<()> {
    let s: f64 = v.iter().map(|c| c.re.abs() + c.im.abs()).sum();
    if s.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { step })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{gaussian_packet, inner, make_grid, PacketSpec};

    fn width(f: &ComplexField) -> f64 {
        let g = f.grid();
        let xs = g.axis(0).coords();
        let d = f.density();
        let w: f64 = d.iter().sum();
        let m: f64 = d.iter().zip(&xs).map(|(p, x)| p * x).sum::<f64>() / w;
        let v: f64 = d.iter().zip(&xs).map(|(p, x)| p * (x - m) * (x - m)).sum::<f64>() / w;
        v.sqrt()
    }

    #[test]
    fn zero_step_is_identity() {
        let g = make_grid(1, 128, -10.0, 10.0).unwrap();
        let f = gaussian_packet(&g, &PacketSpec::new(0.0, 1.0, 1.0)).unwrap();
        assert_eq!(split_step(&f, &Potential::Zero, 0.0, 10).unwrap(), f);
        let v = Potential::from_fn(&g, |p| p[0] * p[0]);
        assert_eq!(split_step(&f, &v, 0.1, 0).unwrap(), f);
    }

    #[test]
    fn free_gaussian_disperses() {
        let g = make_grid(1, 512, -20.0, 20.0).unwrap();
        let f = gaussian_packet(&g, &PacketSpec::new(0.0, 1.0, 0.0)).unwrap();
        let out = split_step(&f, &Potential::Zero, 0.01, 200).unwrap();
        let expect = 2f64.sqrt();
        assert!(((width(&out) - expect) / expect).abs() < 1e-6);
    }

    #[test]
    fn harmonic_ground_state_returns_after_period() {
        let g = make_grid(1, 256, -12.0, 12.0).unwrap();
        let ground = gaussian_packet(&g, &PacketSpec::new(0.0, std::f64::consts::FRAC_1_SQRT_2, 0.0)).unwrap();
        let v = Potential::from_fn(&g, |p| 0.5 * p[0] * p[0]);
        let n = 2000;
        let out = split_step(&ground, &v, 2.0 * std::f64::consts::PI / n as f64, n).unwrap();
        let fid = inner(&ground, &out).unwrap().norm();
        assert!(fid > 1.0 - 1e-6, "fidelity {fid}");
    }

    #[test]
    fn norm_is_conserved_with_potential() {
        let g = make_grid(1, 256, -15.0, 15.0).unwrap();
        let f = gaussian_packet(&g, &PacketSpec::new(-2.0, 1.0, 1.5)).unwrap();
        let v = Potential::from_fn(&g, |p| 2.0 * (-(p[0] * p[0])).exp() + 0.05 * p[0] * p[0]);
        let out = split_step(&f, &v, 0.005, 1000).unwrap();
        assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn backwards_step_recovers_field() {
        let g = make_grid(1, 256, -15.0, 15.0).unwrap();
        let f = gaussian_packet(&g, &PacketSpec::new(-2.0, 1.0, 1.5)).unwrap();
        let v = Potential::from_fn(&g, |p| 0.1 * p[0] * p[0]);
        let fwd = split_step(&f, &v, 0.01, 300).unwrap();
        let back = split_step(&fwd, &v, -0.01, 300).unwrap();
        let err: f64 = back.values().iter().zip(f.values()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() * g.dv();
        assert!(err.sqrt() < 1e-8);
    }

    #[test]
    fn time_dependent_potential_is_sampled_at_midpoints() {
        let g = make_grid(1, 64, -10.0, 10.0).unwrap();
        let f = gaussian_packet(&g, &PacketSpec::new(0.0, 1.0, 0.0)).unwrap();
        // spatially uniform V(t) = t only contributes a global phase -∫V dt
        let n = g.len();
        let pot = Potential::TimeDependent(Arc::new(move |t| vec![t; n]));
        let out = SplitStep::new(0.1).start_time(1.0).run(&f, &pot, 10).unwrap();
        let free = split_step(&f, &Potential::Zero, 0.1, 10).unwrap();
        let phase = inner(&free, &out).unwrap();
        // ∫_1^2 t dt = 1.5
        assert!((phase.arg() + 1.5).abs() < 1e-10);
    }
}
