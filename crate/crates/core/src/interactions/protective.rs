//! Adiabatic protective coupling `H = g(t)·y·B̂` in its effective form: the
//! meter picks up the phase `exp(-i g(t) y ⟨B̂⟩ dt)` each step while the
//! probed state is left alone.

use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::branchstate::{BranchState, Factor, Potentials};
use crate::fields::ComplexField;
use crate::guidance::Propagator;
use crate::{Error, Result};

/// Coupling strength `g(t)`, normalized so that `∫g dt = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Zero,
    /// `(2/T) sin²(π(t - start)/T)` on `[start, start + T]`.
    SinSquared { start: f64, duration: f64 },
    Constant { start: f64, duration: f64 },
}

impl Schedule {
    pub fn g(&self, t: f64) -> f64 {
        match *self {
            Schedule::Zero => 0.0,
            Schedule::SinSquared { start, duration } => {
                let s = (t - start) / duration;
                if (0.0..=1.0).contains(&s) {
                    2.0 / duration * (std::f64::consts::PI * s).sin().powi(2)
                } else {
                    0.0
                }
            }
            Schedule::Constant { start, duration } => {
                if t >= start && t <= start + duration {
                    1.0 / duration
                } else {
                    0.0
                }
            }
        }
    }

    /// `[start, end]` of the coupling, if any.
    pub fn window(&self) -> Option<(f64, f64)> {
        match *self {
            Schedule::Zero => None,
            Schedule::SinSquared { start, duration } | Schedule::Constant { start, duration } => {
                Some((start, start + duration))
            }
        }
    }

    /// Checks `∫g dt = 1` within 1e-10 by composite Simpson quadrature.
    pub fn validate(&self) -> Result<()> {
        let Some((a, b)) = self.window() else {
            return Ok(());
        };
        if !(b > a) {
            return Err(Error::ScheduleNormalization(0.0));
        }
        let n = 20_000;
        let h = (b - a) / n as f64;
        let mut s = self.g(a) + self.g(b);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * self.g(a + i as f64 * h);
        }
        let integral = s * h / 3.0;
        if (integral - 1.0).abs() > 1e-10 {
            return Err(Error::ScheduleNormalization(integral));
        }
        Ok(())
    }
}

/// Whether `⟨B̂⟩` carries the branch weight `|c|²`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoeffConvention {
    /// Full-state expectation value, `|c_{a'}|²` included.
    #[default]
    Full,
    /// Branch amplitudes with unit coefficients, summed over branches.
    Bare,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtectiveCoupling {
    pub meter: String,
    /// Probe points by subsystem; `B̂` projects onto all of them.
    pub probes: Vec<(String, Vec<f64>)>,
    pub schedule: Schedule,
    pub convention: CoeffConvention,
}

impl ProtectiveCoupling {
    /// `⟨B̂⟩` in `state` under the coupling's convention.
    pub fn expectation(&self, state: &BranchState) -> Result<f64> {
        let probes: Vec<(&str, Vec<f64>)> = self.probes.iter().map(|(n, p)| (n.as_str(), p.clone())).collect();
        match self.convention {
            CoeffConvention::Full => state.probe_density(&probes),
            CoeffConvention::Bare => {
                let mut total = 0.0;
                for b in state.branches() {
                    let mut unit = b.clone();
                    unit.coeff = Complex64::new(1.0, 0.0);
                    total += state.with_branches(vec![unit])?.probe_density(&probes)?;
                }
                Ok(total)
            }
        }
    }

    /// Multiplies every meter factor by `exp(-i·phase·y)`.
    fn kick(&self, state: &BranchState, phase: f64) -> Result<BranchState> {
        let reg = state.registry();
        let s = reg.index(&self.meter)?;
        if reg.get(s).grid.dims() != 1 {
            return Err(Error::InvalidState("meter must be one-dimensional".into()));
        }
        let mut done: Vec<(*const Factor, Arc<Factor>)> = Vec::new();
        let mut branches = state.branches().to_vec();
        for b in &mut branches {
            let k = b.factor_of(s).unwrap();
            if b.factors[k].subsystems().len() != 1 {
                return Err(Error::InvalidState(format!("meter is entangled in branch {}", b.label)));
            }
            let key = Arc::as_ptr(&b.factors[k]);
            if let Some((_, f)) = done.iter().find(|(p, _)| *p == key) {
                b.factors[k] = f.clone();
                continue;
            }
            let f = b.factors[k].field();
            let ys = f.grid().axis(0).coords();
            let values = f.values().iter().zip(&ys).map(|(v, &y)| v * Complex64::from_polar(1.0, -phase * y)).collect();
            let nf = Arc::new(Factor::from_indices(reg, vec![s], ComplexField::new(f.grid().clone(), values)?)?);
            done.push((key, nf.clone()));
            b.factors[k] = nf;
        }
        state.with_branches(branches)
    }
}

/// Quadrature record of `∫g⟨B̂⟩dt`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProtectiveRecord {
    pub quadrature: f64,
    pub times: Vec<f64>,
    pub g: Vec<f64>,
    pub expectation: Vec<f64>,
}

/// Meter momentum bookkeeping for one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeterShift {
    /// `-∫g⟨B̂⟩dt`.
    pub expected: f64,
    pub before: f64,
    pub after: f64,
    pub z_score: f64,
}

impl MeterShift {
    pub fn measured(&self) -> f64 {
        self.after - self.before
    }
}

/// Free evolution with the protective kick applied at each step midpoint.
pub struct ProtectivePropagator {
    pub coupling: ProtectiveCoupling,
    pub potentials: Potentials,
    record: Mutex<ProtectiveRecord>,
}

impl ProtectivePropagator {
    pub fn new(coupling: ProtectiveCoupling, potentials: Potentials) -> Result<Self> {
        coupling.schedule.validate()?;
        Ok(Self { coupling, potentials, record: Mutex::new(ProtectiveRecord::default()) })
    }

    pub fn record(&self) -> ProtectiveRecord {
        self.record.lock().expect("record lock").clone()
    }
}

impl Propagator for ProtectivePropagator {
    fn advance(&self, state: &BranchState, t: f64, h: f64) -> Result<BranchState> {
        let tm = t + 0.5 * h;
        let g = self.coupling.schedule.g(tm);
        if g == 0.0 {
            return state.evolve_free(h, 1, &self.potentials, t);
        }
        let mid = state.evolve_free(0.5 * h, 1, &self.potentials, t)?;
        let b = self.coupling.expectation(&mid)?;
        let kicked = self.coupling.kick(&mid, g * b * h)?;
        let mut rec = self.record.lock().expect("record lock");
        rec.quadrature += g * b * h;
        rec.times.push(tm);
        rec.g.push(g);
        rec.expectation.push(b);
        drop(rec);
        kicked.evolve_free(0.5 * h, 1, &self.potentials, tm)
    }
}

/// Runs the whole coupling window in steps of `dt` and returns the final
/// state with the quadrature record. A zero schedule returns the input.
pub fn protective_phase(
    state: &BranchState,
    coupling: &ProtectiveCoupling,
    dt: f64,
    potentials: &Potentials,
) -> Result<(BranchState, ProtectiveRecord)> {
    coupling.schedule.validate()?;
    let Some((a, b)) = coupling.schedule.window() else {
        return Ok((state.clone(), ProtectiveRecord::default()));
    };
    // fail early on off-grid probes
    coupling.expectation(state)?;
    let n = ((b - a) / dt).round().max(1.0) as usize;
    let h = (b - a) / n as f64;
    let prop = ProtectivePropagator::new(coupling.clone(), potentials.clone())?;
    let mut s = state.clone();
    for k in 0..n {
        s = prop.advance(&s, a + k as f64 * h, h)?;
    }
    Ok((s, prop.record()))
}
