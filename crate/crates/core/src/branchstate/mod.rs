//! Configuration-space wavefunctions as sums of weighted product branches.
//!
//! A [`BranchState`] is `Σ_b c_b Π_f f(subsystems of f)`, where every branch
//! partitions the registered subsystems among its factors and each factor
//! covers one or two subsystems. Factors are reference counted, so branches
//! that share an untouched factor (a fresh apparatus, say) also share its
//! storage and its evolution.

mod contract;

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fields::{derivative, interpolate, ComplexField, Grid, Potential, SplitStep};
use crate::{Error, Result};

pub use contract::CONTRACTION_BUDGET;
use contract::{contract, Tensor};

/// Pairwise overlap below which two branches count as disjoint.
pub const DISJOINT_EPS: f64 = 1e-6;
/// Dominance tolerance for [`BranchState::occupied_branch`].
pub const OCCUPANCY_EPS: f64 = 1e-3;
/// Node threshold relative to the state's peak density.
pub const NODE_EPS: f64 = 1e-12;

/// A named coordinate block (x, y, z, w, …) with its own grid and mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subsystem {
    pub name: String,
    pub grid: Grid,
    pub mass: f64,
}

impl Subsystem {
    pub fn new(name: impl Into<String>, grid: Grid, mass: f64) -> Self {
        Self { name: name.into(), grid, mass }
    }
}

/// Ordered set of subsystems shared by every branch of a state. The flat
/// configuration vector lists each subsystem's coordinates in this order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    subsystems: Vec<Subsystem>,
}

impl Registry {
    pub fn new(subsystems: Vec<Subsystem>) -> Result<Arc<Self>> {
        if subsystems.is_empty() {
            return Err(Error::InvalidState("empty subsystem registry".into()));
        }
        for (i, s) in subsystems.iter().enumerate() {
            if subsystems[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::InvalidState(format!("duplicate subsystem name {:?}", s.name)));
            }
            if !(s.mass > 0.0) {
                return Err(Error::InvalidState(format!("subsystem {} has non-positive mass", s.name)));
            }
        }
        Ok(Arc::new(Self { subsystems }))
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn get(&self, i: usize) -> &Subsystem {
        &self.subsystems[i]
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.subsystems
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::InvalidState(format!("unknown subsystem {name:?}")))
    }

    /// Offset of subsystem `i` in the flat configuration vector.
    pub fn offset(&self, i: usize) -> usize {
        self.subsystems[..i].iter().map(|s| s.grid.dims()).sum()
    }

    pub fn n_coords(&self) -> usize {
        self.subsystems.iter().map(|s| s.grid.dims()).sum()
    }

    /// Mass attached to each flat coordinate.
    pub fn coord_masses(&self) -> Vec<f64> {
        self.subsystems.iter().flat_map(|s| std::iter::repeat_n(s.mass, s.grid.dims())).collect()
    }

    /// Column names for the flat configuration (`x`, or `x0`, `x1` for 2D).
    pub fn coord_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for s in &self.subsystems {
            if s.grid.dims() == 1 {
                out.push(s.name.clone());
            } else {
                out.extend((0..s.grid.dims()).map(|a| format!("{}{a}", s.name)));
            }
        }
        out
    }

    pub fn contains(&self, config: &[f64]) -> bool {
        config.len() == self.n_coords()
            && self.subsystems.iter().enumerate().all(|(i, s)| {
                let o = self.offset(i);
                s.grid.contains(&config[o..o + s.grid.dims()])
            })
    }

    fn check(&self, config: &[f64]) -> Result<()> {
        if self.contains(config) {
            Ok(())
        } else {
            Err(Error::OutsideGrid { point: config.to_vec() })
        }
    }
}

/// One factor of a branch: a field over one subsystem or over the product
/// grid of two 1D subsystems (listed in registry order).
pub struct Factor {
    subsystems: Vec<usize>,
    coords: Vec<usize>,
    field: ComplexField,
    grads: OnceLock<Vec<ComplexField>>,
    peak: OnceLock<f64>,
}

impl fmt::Debug for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Factor").field("subsystems", &self.subsystems).field("grid", self.field.grid()).finish()
    }
}

impl Clone for Factor {
    fn clone(&self) -> Self {
        Self {
            subsystems: self.subsystems.clone(),
            coords: self.coords.clone(),
            field: self.field.clone(),
            grads: self.grads.clone(),
            peak: self.peak.clone(),
        }
    }
}

impl PartialEq for Factor {
    fn eq(&self, other: &Self) -> bool {
        self.subsystems == other.subsystems && self.field == other.field
    }
}

impl Factor {
    pub fn new(registry: &Registry, names: &[&str], field: ComplexField) -> Result<Self> {
        let idx = names.iter().map(|n| registry.index(n)).collect::<Result<Vec<_>>>()?;
        Self::from_indices(registry, idx, field)
    }

    pub fn from_indices(registry: &Registry, subsystems: Vec<usize>, field: ComplexField) -> Result<Self> {
        let expected = match subsystems.as_slice() {
            [a] => registry.get(*a).grid.clone(),
            [a, b] if a < b => {
                let (ga, gb) = (&registry.get(*a).grid, &registry.get(*b).grid);
                if ga.dims() != 1 || gb.dims() != 1 {
                    return Err(Error::InvalidState("two-subsystem factors need 1D subsystems".into()));
                }
                Grid::product(ga, gb)?
            }
            [_, _] => return Err(Error::InvalidState("factor subsystems must follow registry order".into())),
            _ => return Err(Error::InvalidState("a factor covers one or two subsystems".into())),
        };
        if field.grid() != &expected {
            return Err(Error::GridMismatch(format!(
                "factor over {:?} has grid {:?}",
                subsystems.iter().map(|&i| &registry.get(i).name).collect::<Vec<_>>(),
                field.grid().axes()
            )));
        }
        let coords = subsystems
            .iter()
            .flat_map(|&s| {
                let o = registry.offset(s);
                o..o + registry.get(s).grid.dims()
            })
            .collect();
        Ok(Self { subsystems, coords, field, grads: OnceLock::new(), peak: OnceLock::new() })
    }

    pub fn subsystems(&self) -> &[usize] {
        &self.subsystems
    }

    pub fn field(&self) -> &ComplexField {
        &self.field
    }

    pub fn covers(&self, s: usize) -> bool {
        self.subsystems.contains(&s)
    }

    /// Spectral derivative fields, one per field axis, computed once.
    pub fn gradients(&self) -> &[ComplexField] {
        self.grads.get_or_init(|| (0..self.field.grid().dims()).map(|a| derivative(&self.field, a)).collect())
    }

    pub fn peak(&self) -> f64 {
        *self.peak.get_or_init(|| self.field.max_abs())
    }

    fn local_point(&self, config: &[f64]) -> [f64; 2] {
        let mut p = [0.0; 2];
        for (k, &c) in self.coords.iter().enumerate() {
            p[k] = config[c];
        }
        p
    }

    fn value_at(&self, config: &[f64]) -> Complex64 {
        let p = self.local_point(config);
        interpolate(self.field.grid(), self.field.values(), &p[..self.coords.len()])
    }

    fn tensor(&self, registry: &Registry) -> Tensor {
        let dims = self.subsystems.iter().map(|&s| registry.get(s).grid.len()).collect();
        Tensor::new(self.subsystems.clone(), dims, self.field.values().to_vec())
    }

    /// Tensor with the subsystems listed in `probes` pinned to their probe
    /// points by interpolation.
    fn probed_tensor(&self, registry: &Registry, probes: &[(usize, Vec<f64>)]) -> Tensor {
        let pin = |s: usize| probes.iter().find(|(p, _)| *p == s).map(|(_, pt)| pt.as_slice());
        let grid = self.field.grid();
        let values = self.field.values();
        match self.subsystems.as_slice() {
            [a] => match pin(*a) {
                Some(pt) => Tensor::scalar(interpolate(grid, values, pt)),
                None => self.tensor(registry),
            },
            [a, b] => {
                let (n0, n1) = (grid.axis(0).n, grid.axis(1).n);
                match (pin(*a), pin(*b)) {
                    (Some(pa), Some(pb)) => Tensor::scalar(interpolate(grid, values, &[pa[0], pb[0]])),
                    (Some(pa), None) => {
                        let row = |i: usize| &values[i * n1..(i + 1) * n1];
                        let line = Grid::from_axes(vec![grid.axis(0).clone()]).expect("axis is valid");
                        let data = (0..n1)
                            .map(|j| {
                                let col: Vec<Complex64> = (0..n0).map(|i| row(i)[j]).collect();
                                interpolate(&line, &col, pa)
                            })
                            .collect();
                        Tensor::new(vec![*b], vec![n1], data)
                    }
                    (None, Some(pb)) => {
                        let line = Grid::from_axes(vec![grid.axis(1).clone()]).expect("axis is valid");
                        let data = (0..n0).map(|i| interpolate(&line, &values[i * n1..(i + 1) * n1], pb)).collect();
                        Tensor::new(vec![*a], vec![n0], data)
                    }
                    (None, None) => self.tensor(registry),
                }
            }
            _ => unreachable!("factor arity checked at construction"),
        }
    }

    /// Marginal density of this factor on subsystem `s`, normalized to one.
    fn marginal(&self, registry: &Registry, s: usize) -> Vec<f64> {
        let d = self.field.density();
        let mut out = match self.subsystems.as_slice() {
            [_] => d,
            [a, _] => {
                let g = self.field.grid();
                let (n0, n1) = (g.axis(0).n, g.axis(1).n);
                if *a == s {
                    (0..n0).map(|i| d[i * n1..(i + 1) * n1].iter().sum()).collect()
                } else {
                    (0..n1).map(|j| (0..n0).map(|i| d[i * n1 + j]).sum()).collect()
                }
            }
            _ => unreachable!(),
        };
        let dv = registry.get(s).grid.dv();
        let total: f64 = out.iter().sum::<f64>() * dv;
        if total > 0.0 {
            out.iter_mut().for_each(|v| *v /= total);
        }
        out
    }
}

/// One summand `c_b Π f` of a branch state.
#[derive(Clone, Debug)]
pub struct Branch {
    pub coeff: Complex64,
    pub factors: Vec<Arc<Factor>>,
    /// Lineage label, e.g. `psi1` or `psi1/a0`.
    pub label: String,
}

impl Branch {
    pub fn new(coeff: Complex64, factors: Vec<Factor>, label: impl Into<String>) -> Self {
        Self { coeff, factors: factors.into_iter().map(Arc::new).collect(), label: label.into() }
    }

    /// Index of the factor that covers subsystem `s`.
    pub fn factor_of(&self, s: usize) -> Option<usize> {
        self.factors.iter().position(|f| f.covers(s))
    }

    fn term(&self, config: &[f64]) -> Complex64 {
        self.factors.iter().fold(self.coeff, |acc, f| acc * f.value_at(config))
    }
}

/// Which branch carries the configuration point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Occupancy {
    Branch(usize),
    Mixed,
}

impl Occupancy {
    /// Branch index, or -1 when mixed.
    pub fn code(self) -> i64 {
        match self {
            Occupancy::Branch(i) => i as i64,
            Occupancy::Mixed => -1,
        }
    }
}

/// Potential for one subsystem as a function of its coordinates and time.
pub type PotentialFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

#[derive(Clone)]
struct Term {
    f: PotentialFn,
    time_dependent: bool,
}

/// Potentials keyed by subsystem name, plus optional pair potentials acting
/// on two-subsystem factors.
#[derive(Clone, Default)]
pub struct Potentials {
    single: HashMap<String, Term>,
    pair: HashMap<(String, String), Term>,
}

impl fmt::Debug for Potentials {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut keys: Vec<_> = self.single.keys().collect();
        keys.sort();
        f.debug_struct("Potentials").field("subsystems", &keys).field("pairs", &self.pair.len()).finish()
    }
}

impl Potentials {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with_static(mut self, name: &str, v: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.single.insert(name.into(), Term { f: Arc::new(move |p, _| v(p)), time_dependent: false });
        self
    }

    pub fn with_time_dependent(mut self, name: &str, v: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        self.single.insert(name.into(), Term { f: Arc::new(v), time_dependent: true });
        self
    }

    /// Static interaction `V(a, b)` applied to factors covering both subsystems.
    pub fn with_pair(mut self, a: &str, b: &str, v: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.pair.insert((a.into(), b.into()), Term { f: Arc::new(move |p, _| v(p[0], p[1])), time_dependent: false });
        self
    }

    pub fn is_empty(&self) -> bool {
        self.single.is_empty() && self.pair.is_empty()
    }

    fn for_factor(&self, registry: &Registry, factor: &Factor) -> Potential {
        let names: Vec<&str> = factor.subsystems.iter().map(|&s| registry.get(s).name.as_str()).collect();
        // (term, range of field axes it reads)
        let mut terms: Vec<(Term, std::ops::Range<usize>)> = Vec::new();
        let mut axis = 0;
        for &s in &factor.subsystems {
            let sub = registry.get(s);
            let d = sub.grid.dims();
            if let Some(t) = self.single.get(&sub.name) {
                terms.push((t.clone(), axis..axis + d));
            }
            axis += d;
        }
        if names.len() == 2 {
            let key = (names[0].to_string(), names[1].to_string());
            if let Some(t) = self.pair.get(&key) {
                terms.push((t.clone(), 0..2));
            }
            let rev = (names[1].to_string(), names[0].to_string());
            if let Some(t) = self.pair.get(&rev) {
                let f = t.f.clone();
                let swapped = Term { f: Arc::new(move |p, t| f(&[p[1], p[0]], t)), time_dependent: t.time_dependent };
                terms.push((swapped, 0..2));
            }
        }
        if terms.is_empty() {
            return Potential::Zero;
        }
        let grid = factor.field.grid().clone();
        let points: Arc<Vec<Vec<f64>>> = Arc::new((0..grid.len()).map(|i| grid.point(i)).collect());
        let eval = move |t: f64| -> Vec<f64> {
            points.iter().map(|p| terms.iter().map(|(term, r)| (term.f)(&p[r.clone()], t)).sum()).collect()
        };
        if self.time_dependent_for(registry, factor) {
            Potential::TimeDependent(Arc::new(eval))
        } else {
            Potential::Static(Arc::new(eval(0.0)))
        }
    }

    fn time_dependent_for(&self, registry: &Registry, factor: &Factor) -> bool {
        factor
            .subsystems
            .iter()
            .filter_map(|&s| self.single.get(&registry.get(s).name))
            .chain(self.pair.values())
            .any(|t| t.time_dependent)
    }
}

/// Immutable sum of product branches over a shared subsystem registry.
#[derive(Clone, Debug)]
pub struct BranchState {
    registry: Arc<Registry>,
    branches: Vec<Branch>,
}

impl BranchState {
    pub fn new(registry: Arc<Registry>, branches: Vec<Branch>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::InvalidState("a state needs at least one branch".into()));
        }
        for b in &branches {
            let mut seen = vec![0usize; registry.len()];
            for f in &b.factors {
                for &s in &f.subsystems {
                    if s >= registry.len() {
                        return Err(Error::InvalidState(format!("branch {} references unknown subsystem", b.label)));
                    }
                    seen[s] += 1;
                }
            }
            if seen.iter().any(|&c| c != 1) {
                return Err(Error::InvalidState(format!(
                    "branch {} factors do not partition the subsystems",
                    b.label
                )));
            }
        }
        Ok(Self { registry, branches })
    }

    /// Single product branch with coefficient 1.
    pub fn product(registry: Arc<Registry>, factors: Vec<Factor>, label: &str) -> Result<Self> {
        Self::new(registry, vec![Branch::new(Complex64::new(1.0, 0.0), factors, label)])
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn labels(&self) -> Vec<String> {
        self.branches.iter().map(|b| b.label.clone()).collect()
    }

    pub fn branch_index(&self, label: &str) -> Option<usize> {
        self.branches.iter().position(|b| b.label == label)
    }

    /// Copy with branch `i`'s coefficient replaced.
    pub fn with_coefficient(&self, i: usize, coeff: Complex64) -> Result<Self> {
        let mut out = self.clone();
        out.branches
            .get_mut(i)
            .ok_or_else(|| Error::InvalidState(format!("branch {i} out of range")))?
            .coeff = coeff;
        Ok(out)
    }

    pub fn with_branches(&self, branches: Vec<Branch>) -> Result<Self> {
        Self::new(self.registry.clone(), branches)
    }

    /// Computes every factor's derivative fields so later read-only use is
    /// lock-free.
    pub fn prepare(&self) {
        for b in &self.branches {
            for f in &b.factors {
                f.gradients();
                f.peak();
            }
        }
    }

    /// `Σ_b |c_b|² Π max|f|²`, the reference for the node threshold.
    pub fn peak_density(&self) -> f64 {
        self.branches
            .iter()
            .map(|b| b.coeff.norm_sqr() * b.factors.iter().map(|f| f.peak().powi(2)).product::<f64>())
            .sum()
    }

    /// `Ψ(config)`.
    pub fn total_amplitude(&self, config: &[f64]) -> Result<Complex64> {
        self.registry.check(config)?;
        Ok(self.branches.iter().map(|b| b.term(config)).sum())
    }

    /// Per-branch terms `c_b Π f(config)`.
    pub fn branch_terms(&self, config: &[f64]) -> Result<Vec<Complex64>> {
        self.registry.check(config)?;
        Ok(self.branches.iter().map(|b| b.term(config)).collect())
    }

    /// `Ψ(config)` and `∂Ψ/∂q` for every flat coordinate, written to `grad`.
    pub fn amplitude_and_gradient(&self, config: &[f64], grad: &mut [Complex64]) -> Result<Complex64> {
        self.registry.check(config)?;
        grad.iter_mut().for_each(|g| *g = Complex64::new(0.0, 0.0));
        let mut psi = Complex64::new(0.0, 0.0);
        let mut vals: Vec<Complex64> = Vec::with_capacity(4);
        for b in &self.branches {
            if b.coeff == Complex64::new(0.0, 0.0) {
                continue;
            }
            vals.clear();
            vals.extend(b.factors.iter().map(|f| f.value_at(config)));
            psi += vals.iter().fold(b.coeff, |a, v| a * v);
            for (k, f) in b.factors.iter().enumerate() {
                let others = vals.iter().enumerate().filter(|(j, _)| *j != k).fold(b.coeff, |a, (_, v)| a * v);
                if others == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let p = f.local_point(config);
                let p = &p[..f.coords.len()];
                for (axis, g) in f.gradients().iter().enumerate() {
                    grad[f.coords[axis]] += others * interpolate(g.grid(), g.values(), p);
                }
            }
        }
        Ok(psi)
    }

    /// `∇Ψ` restricted to the coordinates of `subsystem`.
    pub fn gradient_amplitude(&self, config: &[f64], subsystem: &str) -> Result<Vec<Complex64>> {
        let s = self.registry.index(subsystem)?;
        let mut grad = vec![Complex64::new(0.0, 0.0); self.registry.n_coords()];
        self.amplitude_and_gradient(config, &mut grad)?;
        let o = self.registry.offset(s);
        Ok(grad[o..o + self.registry.get(s).grid.dims()].to_vec())
    }

    /// Branch whose local density exceeds `(1 - eps)` of the summed branch
    /// densities at `config`.
    pub fn occupied_branch(&self, config: &[f64], eps: f64) -> Result<Occupancy> {
        let terms = self.branch_terms(config)?;
        let total = terms.iter().sum::<Complex64>().norm_sqr();
        if !(total >= NODE_EPS * self.peak_density()) || total == 0.0 {
            return Err(Error::NodeConfiguration { density: total });
        }
        let d: Vec<f64> = terms.iter().map(|t| t.norm_sqr()).collect();
        let sum: f64 = d.iter().sum();
        Ok(d.iter()
            .position(|&x| x > (1.0 - eps) * sum)
            .map_or(Occupancy::Mixed, Occupancy::Branch))
    }

    /// Advances every distinct factor by `n_steps` split-operator steps; shared
    /// factors are propagated once and stay shared.
    pub fn evolve_free(&self, dt: f64, n_steps: usize, potentials: &Potentials, t0: f64) -> Result<Self> {
        if dt == 0.0 || n_steps == 0 {
            return Ok(self.clone());
        }
        let mut done: Vec<(*const Factor, Arc<Factor>)> = Vec::new();
        let mut branches = self.branches.clone();
        for b in &mut branches {
            for f in &mut b.factors {
                let key = Arc::as_ptr(f);
                if let Some((_, out)) = done.iter().find(|(k, _)| *k == key) {
                    *f = out.clone();
                    continue;
                }
                let evolved = Arc::new(self.evolve_factor(f, dt, n_steps, potentials, t0)?);
                done.push((key, evolved.clone()));
                *f = evolved;
            }
        }
        Ok(Self { registry: self.registry.clone(), branches })
    }

    fn evolve_factor(&self, f: &Factor, dt: f64, n_steps: usize, potentials: &Potentials, t0: f64) -> Result<Factor> {
        let masses: Vec<f64> = f
            .subsystems
            .iter()
            .flat_map(|&s| {
                let sub = self.registry.get(s);
                std::iter::repeat_n(sub.mass, sub.grid.dims())
            })
            .collect();
        let pot = potentials.for_factor(&self.registry, f);
        let field = SplitStep::new(dt).masses(&masses).start_time(t0).run(&f.field, &pot, n_steps)?;
        Factor::from_indices(&self.registry, f.subsystems.clone(), field)
    }

    /// Replaces factor `k` of branch `b`.
    pub fn replace_factor(&self, b: usize, k: usize, factor: Arc<Factor>) -> Result<Self> {
        let mut out = self.clone();
        let branch = out
            .branches
            .get_mut(b)
            .ok_or_else(|| Error::InvalidState(format!("branch {b} out of range")))?;
        if branch.factors.get(k).map(|f| f.subsystems.as_slice()) != Some(factor.subsystems.as_slice()) {
            return Err(Error::InvalidState("replacement factor covers different subsystems".into()));
        }
        branch.factors[k] = factor;
        Ok(out)
    }

    fn contract_pair(&self, a: &Branch, b: &Branch, open: &[usize], probes: &[(usize, Vec<f64>)]) -> Result<Tensor> {
        let reg = &self.registry;
        let mut ts: Vec<Tensor> = a.factors.iter().map(|f| f.probed_tensor(reg, probes).conj()).collect();
        ts.extend(b.factors.iter().map(|f| f.probed_tensor(reg, probes)));
        let mut t = contract(ts, open, &|v| reg.get(v).grid.dv(), &|v| reg.get(v).grid.len())?;
        let c = a.coeff.conj() * b.coeff;
        t.data.iter_mut().for_each(|x| *x *= c);
        Ok(t)
    }

    /// `⟨a|b⟩` between two branches including their coefficients.
    pub fn branch_overlap(&self, a: usize, b: usize) -> Result<Complex64> {
        Ok(self.contract_pair(&self.branches[a], &self.branches[b], &[], &[])?.data[0])
    }

    /// `‖Ψ‖²` through the full Gram matrix, cross terms included.
    pub fn norm_sqr(&self) -> Result<f64> {
        let n = self.branches.len();
        let mut total = 0.0;
        for a in 0..n {
            total += self.branch_overlap(a, a)?.re;
            for b in a + 1..n {
                total += 2.0 * self.branch_overlap(a, b)?.re;
            }
        }
        Ok(total)
    }

    /// `∫|Ψ|²` over every subsystem except `subsystem`, on its grid.
    pub fn marginal_density(&self, subsystem: &str) -> Result<Vec<f64>> {
        let s = self.registry.index(subsystem)?;
        let mut out = vec![0.0; self.registry.get(s).grid.len()];
        let n = self.branches.len();
        for a in 0..n {
            for b in a..n {
                let t = self.contract_pair(&self.branches[a], &self.branches[b], &[s], &[])?;
                let w = if a == b { 1.0 } else { 2.0 };
                out.iter_mut().zip(&t.data).for_each(|(o, v)| *o += w * v.re);
            }
        }
        Ok(out)
    }

    /// `⟨B̂⟩` for the projector onto the probe points: `|Ψ|²` with the probed
    /// subsystems pinned and the rest integrated out.
    pub fn probe_density(&self, probes: &[(&str, Vec<f64>)]) -> Result<f64> {
        let mut pins = Vec::with_capacity(probes.len());
        for (name, pt) in probes {
            let s = self.registry.index(name)?;
            if !self.registry.get(s).grid.contains(pt) {
                return Err(Error::OutsideGrid { point: pt.clone() });
            }
            pins.push((s, pt.clone()));
        }
        let n = self.branches.len();
        let mut total = 0.0;
        for a in 0..n {
            for b in a..n {
                let t = self.contract_pair(&self.branches[a], &self.branches[b], &[], &pins)?;
                total += if a == b { t.data[0].re } else { 2.0 * t.data[0].re };
            }
        }
        Ok(total)
    }

    /// Overlap mass between the marginals of branches `a` and `b` on
    /// subsystem `s`: `Σ √(ρ_a ρ_b)·dV`.
    pub fn marginal_overlap(&self, a: usize, b: usize, s: usize) -> f64 {
        let fa = &self.branches[a].factors[self.branches[a].factor_of(s).expect("partition")];
        let fb = &self.branches[b].factors[self.branches[b].factor_of(s).expect("partition")];
        let (ma, mb) = (fa.marginal(&self.registry, s), fb.marginal(&self.registry, s));
        ma.iter().zip(&mb).map(|(x, y)| (x * y).sqrt()).sum::<f64>() * self.registry.get(s).grid.dv()
    }

    /// Smallest marginal overlap over subsystems, i.e. how disjoint the pair is.
    pub fn pair_overlap(&self, a: usize, b: usize) -> f64 {
        (0..self.registry.len()).map(|s| self.marginal_overlap(a, b, s)).fold(f64::INFINITY, f64::min)
    }

    /// `|c_b|²` normalized to sum one; requires pairwise disjoint branches.
    pub fn branch_weights(&self) -> Result<Vec<f64>> {
        let n = self.branches.len();
        for a in 0..n {
            for b in a + 1..n {
                let overlap = self.pair_overlap(a, b);
                if overlap >= DISJOINT_EPS {
                    return Err(Error::NotDisjoint { overlap });
                }
            }
        }
        let w: Vec<f64> = self.branches.iter().map(|b| b.coeff.norm_sqr()).collect();
        let s: f64 = w.iter().sum();
        if s == 0.0 {
            return Err(Error::InvalidState("all branch coefficients vanish".into()));
        }
        Ok(w.into_iter().map(|x| x / s).collect())
    }

    /// Drops branches with `|c_b|² < eta`. Returns the pruned state and the
    /// dropped weight.
    pub fn prune(&self, eta: f64, occupied: Option<usize>, renormalize: bool) -> Result<(Self, f64)> {
        if !(eta >= 0.0) {
            return Err(Error::InvalidState(format!("prune threshold {eta} must be non-negative")));
        }
        let drop: Vec<bool> = self.branches.iter().map(|b| b.coeff.norm_sqr() < eta).collect();
        if let Some(o) = occupied {
            if drop.get(o).copied().unwrap_or(false) {
                return Err(Error::PruneOccupied(o));
            }
        }
        let dropped: f64 = self.branches.iter().zip(&drop).filter(|(_, d)| **d).map(|(b, _)| b.coeff.norm_sqr()).sum();
        let mut kept: Vec<Branch> =
            self.branches.iter().zip(&drop).filter(|(_, d)| !**d).map(|(b, _)| b.clone()).collect();
        if dropped > 0.0 {
            log::info!("pruned {} branch(es), dropped mass {dropped:.3e}", drop.iter().filter(|d| **d).count());
        }
        if renormalize && dropped > 0.0 {
            let keep: f64 = kept.iter().map(|b| b.coeff.norm_sqr()).sum();
            let s = 1.0 / keep.sqrt();
            kept.iter_mut().for_each(|b| b.coeff *= s);
        }
        Ok((Self::new(self.registry.clone(), kept)?, dropped))
    }

    /// Full wavefunction on the joint grid; only for states whose subsystems
    /// span at most two dimensions.
    pub fn expand(&self) -> Result<ComplexField> {
        let reg = &self.registry;
        let joint = match reg.len() {
            1 => reg.get(0).grid.clone(),
            2 if reg.get(0).grid.dims() == 1 && reg.get(1).grid.dims() == 1 => {
                Grid::product(&reg.get(0).grid, &reg.get(1).grid)?
            }
            _ => return Err(Error::InvalidState("expand needs at most two coordinates".into())),
        };
        let mut values = vec![Complex64::new(0.0, 0.0); joint.len()];
        for b in &self.branches {
            let term = match b.factors.as_slice() {
                [f] => f.field.clone(),
                [f, g] => {
                    let (f, g) = if f.subsystems[0] == 0 { (f, g) } else { (g, f) };
                    ComplexField::outer(&f.field, &g.field)?
                }
                _ => unreachable!("partition of at most two subsystems"),
            };
            values.iter_mut().zip(term.values()).for_each(|(v, t)| *v += b.coeff * t);
        }
        ComplexField::new(joint, values)
    }
}
