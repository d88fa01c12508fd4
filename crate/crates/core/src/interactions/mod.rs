//! Measurement primitives as branch-state transformations.
//!
//! Each primitive has a state map and, where the configuration moves during
//! an instantaneous interaction, the matching configuration map so ensembles
//! can be carried across it.

mod protective;

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::branchstate::{Branch, BranchState, Factor, DISJOINT_EPS};
use crate::fields::{inner, momentum_expectation, support_overlap, translate, ComplexField, Grid};
use crate::guidance::Event;
use crate::{Error, Result};

pub use protective::{
    protective_phase, CoeffConvention, MeterShift, ProtectiveCoupling, ProtectivePropagator, ProtectiveRecord, Schedule,
};

/// Tolerance on the part of an object factor outside the eigenbasis.
pub const RESIDUAL_TOL: f64 = 1e-6;
/// Largest joint factor built by [`pairwise_entangle`].
pub const JOINT_BUDGET: usize = 2048 * 2048;

fn single_factor(b: &Branch, s: usize, what: &str) -> Result<usize> {
    let k = b.factor_of(s).expect("branches partition the registry");
    if b.factors[k].subsystems().len() != 1 {
        return Err(Error::Measurement(format!("{what} is entangled in branch {}", b.label)));
    }
    Ok(k)
}

/// Checks that subsystem `s` carries the same factor in every branch and
/// returns it.
fn common_factor(state: &BranchState, s: usize, what: &str) -> Result<Arc<Factor>> {
    let first = state.branches()[0].clone();
    let f0 = first.factors[single_factor(&first, s, what)?].clone();
    for b in state.branches() {
        let f = &b.factors[single_factor(b, s, what)?];
        if !Arc::ptr_eq(f, &f0) && f.field() != f0.field() {
            return Err(Error::Measurement(format!("{what} factor differs between branches")));
        }
    }
    Ok(f0)
}

/// Index of the branch with the largest local density at `q`.
fn dominant_branch(state: &BranchState, q: &[f64]) -> Result<usize> {
    let terms = state.branch_terms(q)?;
    Ok(terms
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
        .map(|(i, _)| i)
        .unwrap_or(0))
}

/// Impulsive von Neumann coupling `H = f·Â·p_z` acting for `duration`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpulsiveMeasurement {
    pub object: String,
    pub pointer: String,
    pub eigenvalues: Vec<f64>,
    pub coupling: f64,
    pub duration: f64,
    pub eigenfunctions: Vec<ComplexField>,
}

impl ImpulsiveMeasurement {
    pub fn shift(&self, a: usize) -> f64 {
        self.coupling * self.eigenvalues[a] * self.duration
    }

    pub fn validate(&self) -> Result<()> {
        if self.eigenvalues.len() != self.eigenfunctions.len() || self.eigenvalues.is_empty() {
            return Err(Error::Measurement("one eigenfunction per eigenvalue required".into()));
        }
        for (i, fi) in self.eigenfunctions.iter().enumerate() {
            for (j, fj) in self.eigenfunctions.iter().enumerate().skip(i) {
                let o = inner(fi, fj)?;
                let expect = if i == j { 1.0 } else { 0.0 };
                if (o - Complex64::new(expect, 0.0)).norm() > 1e-8 {
                    return Err(Error::Measurement(format!("eigenfunctions {i},{j} not orthonormal: {o}")));
                }
            }
        }
        if self.coupling != 0.0 {
            for i in 0..self.eigenvalues.len() {
                for j in i + 1..self.eigenvalues.len() {
                    if self.shift(i) == self.shift(j) {
                        return Err(Error::Measurement("pointer shifts are not distinct".into()));
                    }
                }
            }
        }
        Ok(())
    }

    fn outcome_at(&self, x: &[f64]) -> usize {
        self.eigenfunctions
            .iter()
            .enumerate()
            .map(|(a, f)| (a, crate::fields::interpolate(f.grid(), f.values(), x).norm_sqr()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(a, _)| a)
            .unwrap_or(0)
    }
}

/// Splits every branch over the eigenbasis of the object and translates the
/// pointer by `f·a·T` per outcome. Free evolution during the interaction is
/// neglected.
pub fn impulsive_measure(state: &BranchState, meas: &ImpulsiveMeasurement) -> Result<BranchState> {
    meas.validate()?;
    if meas.coupling == 0.0 || meas.duration == 0.0 {
        return Ok(state.clone());
    }
    let reg = state.registry();
    let (xo, zp) = (reg.index(&meas.object)?, reg.index(&meas.pointer)?);
    let pointer = common_factor(state, zp, "pointer")?;
    let span = reg.get(zp).grid.axis(0).span();
    let mut shifted = Vec::with_capacity(meas.eigenvalues.len());
    for a in 0..meas.eigenvalues.len() {
        let d = meas.shift(a);
        if d.abs() >= span {
            return Err(Error::Measurement(format!("pointer shift {d} exceeds the grid")));
        }
        let moved = translate(pointer.field(), 0, d);
        if moved.leaks() {
            return Err(Error::Measurement(format!("pointer shift {d} pushes the packet off the grid")));
        }
        shifted.push(Arc::new(Factor::from_indices(reg, vec![zp], moved)?));
    }
    let eig: Vec<Arc<Factor>> = meas
        .eigenfunctions
        .iter()
        .map(|f| Factor::from_indices(reg, vec![xo], f.clone()).map(Arc::new))
        .collect::<Result<_>>()?;

    let mut out = Vec::new();
    for b in state.branches() {
        let ko = single_factor(b, xo, "object")?;
        let kp = b.factor_of(zp).unwrap();
        let obj = b.factors[ko].field();
        let amps: Vec<Complex64> = meas.eigenfunctions.iter().map(|f| inner(f, obj)).collect::<Result<_>>()?;
        let captured: f64 = amps.iter().map(|c| c.norm_sqr()).sum();
        let residual = (obj.norm_sqr() - captured).abs();
        if residual > RESIDUAL_TOL {
            return Err(Error::Measurement(format!(
                "object in branch {} is outside the eigenbasis (residual {residual:.2e})",
                b.label
            )));
        }
        for (a, amp) in amps.iter().enumerate() {
            if amp.norm_sqr() < 1e-14 {
                continue;
            }
            let mut nb = b.clone();
            nb.coeff = b.coeff * amp;
            nb.factors[ko] = eig[a].clone();
            nb.factors[kp] = shifted[a].clone();
            nb.label = format!("{}/a{a}", b.label);
            out.push(nb);
        }
    }
    state.with_branches(out)
}

impl Event for ImpulsiveMeasurement {
    fn name(&self) -> String {
        format!("measure({}->{})", self.object, self.pointer)
    }

    fn apply(&self, state: &BranchState) -> Result<BranchState> {
        impulsive_measure(state, self)
    }

    /// The pointer moves by `f·a·T` for the eigenfunction that carries `x`.
    fn transport(&self, before: &BranchState, q: &mut [f64]) -> Result<()> {
        let reg = before.registry();
        let (xo, zp) = (reg.index(&self.object)?, reg.index(&self.pointer)?);
        let (ox, oz) = (reg.offset(xo), reg.offset(zp));
        let a = self.outcome_at(&q[ox..ox + 1]);
        q[oz] += self.shift(a);
        Ok(())
    }
}

/// Keeps branch `surviving` only, with coefficient one.
pub fn collapse(state: &BranchState, surviving: usize) -> Result<BranchState> {
    if surviving >= state.branches().len() {
        return Err(Error::InvalidState(format!(
            "branch {surviving} out of range ({} branches)",
            state.branches().len()
        )));
    }
    state.branch_weights()?;
    let mut b = state.branches()[surviving].clone();
    b.coeff = Complex64::new(1.0, 0.0);
    state.with_branches(vec![b])
}

/// Which-path detector: branches whose object factor lies inside `window`
/// get the detector packet displaced by `displacement`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorCoupling {
    pub object: String,
    pub detector: String,
    pub window: (f64, f64),
    pub displacement: f64,
}

impl DetectorCoupling {
    /// Default displacement: twelve packet widths, enough for a Bhattacharyya overlap below 1e-6.
    pub fn new(object: &str, detector: &str, window: (f64, f64), detector_width: f64) -> Self {
        Self { object: object.into(), detector: detector.into(), window, displacement: 12.0 * detector_width }
    }

    fn window_mass(&self, f: &ComplexField) -> f64 {
        let g = f.grid();
        let xs = g.axis(0).coords();
        let total = f.norm_sqr();
        let inside: f64 = f
            .values()
            .iter()
            .zip(&xs)
            .filter(|(_, &x)| x >= self.window.0 && x <= self.window.1)
            .map(|(v, _)| v.norm_sqr())
            .sum::<f64>()
            * g.dv();
        if total > 0.0 {
            inside / total
        } else {
            0.0
        }
    }

    fn selected(&self, state: &BranchState) -> Result<Vec<bool>> {
        let xo = state.registry().index(&self.object)?;
        state
            .branches()
            .iter()
            .map(|b| {
                let k = single_factor(b, xo, "object")?;
                Ok(self.window_mass(b.factors[k].field()) > 1.0 - 1e-3)
            })
            .collect()
    }
}

/// `ψ₁φ + ψ₂φ → ψ₁φ′ + ψ₂φ` for the branches selected by the window.
pub fn detector_couple(state: &BranchState, det: &DetectorCoupling) -> Result<BranchState> {
    let reg = state.registry();
    let yd = reg.index(&det.detector)?;
    let phi = common_factor(state, yd, "detector")?;
    let excited = translate(phi.field(), 0, det.displacement);
    let overlap = support_overlap(phi.field(), &excited, DISJOINT_EPS)?;
    if !overlap.disjoint {
        return Err(Error::NotDisjoint { overlap: overlap.overlap_mass });
    }
    if excited.leaks() {
        return Err(Error::Measurement("excited detector packet leaves the grid".into()));
    }
    let excited = Arc::new(Factor::from_indices(reg, vec![yd], excited)?);
    let sel = det.selected(state)?;
    if !sel.iter().any(|&s| s) {
        return Err(Error::NoBranchCoupled);
    }
    let branches = state
        .branches()
        .iter()
        .zip(&sel)
        .map(|(b, &s)| {
            let mut nb = b.clone();
            if s {
                let k = nb.factor_of(yd).unwrap();
                nb.factors[k] = excited.clone();
                nb.label = format!("{}/exc", b.label);
            }
            nb
        })
        .collect();
    state.with_branches(branches)
}

impl Event for DetectorCoupling {
    fn name(&self) -> String {
        format!("detect({}->{})", self.object, self.detector)
    }

    fn apply(&self, state: &BranchState) -> Result<BranchState> {
        detector_couple(state, self)
    }

    fn transport(&self, before: &BranchState, q: &mut [f64]) -> Result<()> {
        let sel = self.selected(before)?;
        if sel[dominant_branch(before, q)?] {
            let yd = before.registry().index(&self.detector)?;
            q[before.registry().offset(yd)] += self.displacement;
        }
        Ok(())
    }
}

/// Unitary map on a joint `(a, b)` field.
pub type JointKernel = Arc<dyn Fn(&ComplexField) -> ComplexField + Send + Sync>;

/// Merges the `a` and `b` factors of one branch into a joint factor.
#[derive(Clone)]
pub struct PairwiseEntangle {
    pub target: String,
    pub a: String,
    pub b: String,
    /// Default kernel `exp(-iλ a·p_b)`, shifting `b` by `λa`.
    pub lambda: f64,
    pub kernel: Option<JointKernel>,
}

impl std::fmt::Debug for PairwiseEntangle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PairwiseEntangle")
            .field("target", &self.target)
            .field("a", &self.a)
            .field("b", &self.b)
            .field("lambda", &self.lambda)
            .field("custom_kernel", &self.kernel.is_some())
            .finish()
    }
}

impl PairwiseEntangle {
    pub fn shift(target: &str, a: &str, b: &str, lambda: f64) -> Self {
        Self { target: target.into(), a: a.into(), b: b.into(), lambda, kernel: None }
    }
}

/// `ψ(a)ξ(b) → β(a,b)` in the target branch; other branches are untouched.
pub fn pairwise_entangle(state: &BranchState, op: &PairwiseEntangle) -> Result<BranchState> {
    let reg = state.registry();
    let (sa, sb) = (reg.index(&op.a)?, reg.index(&op.b)?);
    let bi = state
        .branch_index(&op.target)
        .ok_or_else(|| Error::InvalidState(format!("no branch labelled {:?}", op.target)))?;
    let br = &state.branches()[bi];
    let (ka, kb) = (single_factor(br, sa, &op.a)?, single_factor(br, sb, &op.b)?);
    let (fa, fb) = (br.factors[ka].field(), br.factors[kb].field());
    if fa.grid().dims() != 1 || fb.grid().dims() != 1 {
        return Err(Error::InvalidState("pairwise entanglement needs 1D subsystems".into()));
    }
    let (na, nb) = (fa.grid().len(), fb.grid().len());
    if na * nb > JOINT_BUDGET {
        return Err(Error::MemoryBudget(format!("joint grid {na}x{nb} exceeds 2048²")));
    }
    // rows indexed by a, columns by b
    let joint = match &op.kernel {
        None => {
            let xs = fa.grid().axis(0).coords();
            let mut values = Vec::with_capacity(na * nb);
            for (i, &x) in xs.iter().enumerate() {
                let row = translate(fb, 0, op.lambda * x);
                values.extend(row.values().iter().map(|v| fa.values()[i] * v));
            }
            ComplexField::new(Grid::product(fa.grid(), fb.grid())?, values)?
        }
        Some(k) => {
            let start = ComplexField::outer(fa, fb)?;
            let out = k(&start);
            let change = (out.norm_sqr() - start.norm_sqr()).abs();
            if change > 1e-6 {
                return Err(Error::NonUnitary(change));
            }
            out
        }
    };
    let (subs, field) = if sa < sb { (vec![sa, sb], joint) } else { (vec![sb, sa], transpose(&joint)?) };
    let merged = Arc::new(Factor::from_indices(reg, subs, field)?);
    let mut nbr = br.clone();
    let (lo, hi) = (ka.min(kb), ka.max(kb));
    nbr.factors.remove(hi);
    nbr.factors[lo] = merged;
    let mut branches = state.branches().to_vec();
    branches[bi] = nbr;
    state.with_branches(branches)
}

fn transpose(f: &ComplexField) -> Result<ComplexField> {
    let g = f.grid();
    let (n0, n1) = (g.axis(0).n, g.axis(1).n);
    let mut v = vec![Complex64::new(0.0, 0.0); f.values().len()];
    for i in 0..n0 {
        for j in 0..n1 {
            v[j * n0 + i] = f.values()[i * n1 + j];
        }
    }
    ComplexField::new(Grid::from_axes(vec![g.axis(1).clone(), g.axis(0).clone()])?, v)
}

impl Event for PairwiseEntangle {
    fn name(&self) -> String {
        format!("entangle({},{} in {})", self.a, self.b, self.target)
    }

    fn apply(&self, state: &BranchState) -> Result<BranchState> {
        pairwise_entangle(state, self)
    }

    /// `b += λa` when the configuration sits in the target branch; only the
    /// default shift kernel has a known configuration map.
    fn transport(&self, before: &BranchState, q: &mut [f64]) -> Result<()> {
        if self.kernel.is_some() {
            return Ok(());
        }
        let bi = dominant_branch(before, q)?;
        if before.branches()[bi].label == self.target {
            let reg = before.registry();
            let (oa, ob) = (reg.offset(reg.index(&self.a)?), reg.offset(reg.index(&self.b)?));
            q[ob] += self.lambda * q[oa];
        }
        Ok(())
    }
}

/// Sets one branch coefficient to zero; used for empty-wave removal runs.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroBranch {
    pub label: String,
}

impl Event for ZeroBranch {
    fn name(&self) -> String {
        format!("zero({})", self.label)
    }

    fn apply(&self, state: &BranchState) -> Result<BranchState> {
        let i = state
            .branch_index(&self.label)
            .ok_or_else(|| Error::InvalidState(format!("no branch labelled {:?}", self.label)))?;
        state.with_coefficient(i, Complex64::new(0.0, 0.0))
    }
}

/// `⟨p⟩` of the meter, weighted over branches when the meter factor differs
/// between disjoint branches.
pub fn meter_momentum(state: &BranchState, meter: &str) -> Result<f64> {
    let s = state.registry().index(meter)?;
    if let Ok(f) = common_factor(state, s, "meter") {
        return momentum_expectation(f.field(), 0);
    }
    let weights = state
        .branch_weights()
        .map_err(|_| Error::Measurement("meter momentum undefined for overlapping branches".into()))?;
    let mut p = 0.0;
    for (b, w) in state.branches().iter().zip(weights) {
        let k = single_factor(b, s, "meter")?;
        p += w * momentum_expectation(b.factors[k].field(), 0)?;
    }
    Ok(p)
}
