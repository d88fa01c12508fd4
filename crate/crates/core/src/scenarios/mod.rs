//! Declarative catalog of measurement gedanken experiments.
//!
//! A [`ScenarioSpec`] pins every number of an experiment: grids, packets,
//! branches, scheduled interactions and the assertions checked afterwards.
//! [`run_scenario`] compiles it into an ensemble plan, runs the main ensemble
//! plus any comparison sub-runs, and returns a [`RunReport`].

mod analysis;
mod catalog;

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::branchstate::{Branch, BranchState, Factor, Potentials, Registry, Subsystem};
use crate::fields::{gaussian_packet, gaussian_packet_2d, Axis, ComplexField, Grid, PacketSpec, Potential, SplitStep};
use crate::guidance::{EnsemblePlan, EnsembleRun, EnsembleStats, Event, FreePropagator, ScheduledEvent};
use crate::interactions::{
    collapse, pairwise_entangle, CoeffConvention, DetectorCoupling, ImpulsiveMeasurement, PairwiseEntangle,
    ProtectiveCoupling, ProtectivePropagator, Schedule,
};
use crate::{Error, Result};

pub use catalog::{
    born_measurement, catalog, eq44_reversed_roles, fig1_two_slit, fig3a_overlap, fig3b_swap, fig4_no_influence,
    lookup, protective_discriminate, protective_empty_wave, CatalogEntry,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub n: usize,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsystemSpec {
    pub name: String,
    pub axes: Vec<AxisSpec>,
    pub mass: f64,
}

impl SubsystemSpec {
    pub fn line(name: &str, n: usize, min: f64, max: f64, mass: f64) -> Self {
        Self { name: name.into(), axes: vec![AxisSpec { n, min, max }], mass }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::from_axes(self.axes.iter().map(|a| Axis::new(a.n, a.min, a.max)).collect::<Result<_>>()?)
    }
}

/// Gaussian packet on one subsystem, one entry per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacketDecl {
    pub name: String,
    pub subsystem: String,
    pub center: Vec<f64>,
    pub width: Vec<f64>,
    pub momentum: Vec<f64>,
}

/// Product branch: one packet per subsystem, coefficient `√weight·e^{iφ}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchDecl {
    pub label: String,
    pub weight: f64,
    pub phase: f64,
    pub packets: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventDecl {
    /// Eigenfunctions are the named packets evolved freely to `t`.
    Impulsive {
        t: f64,
        object: String,
        pointer: String,
        outcomes: Vec<String>,
        eigenvalues: Vec<f64>,
        coupling: f64,
        duration: f64,
    },
    Detector { t: f64, object: String, detector: String, window: [f64; 2], displacement: f64 },
    /// Skipped when no branch carries `target`.
    Pairwise { t: f64, target: String, a: String, b: String, lambda: f64 },
    Collapse { t: f64, label: String },
}

impl EventDecl {
    pub fn time(&self) -> f64 {
        match self {
            EventDecl::Impulsive { t, .. }
            | EventDecl::Detector { t, .. }
            | EventDecl::Pairwise { t, .. }
            | EventDecl::Collapse { t, .. } => *t,
        }
    }

    fn subsystems(&self) -> Vec<&str> {
        match self {
            EventDecl::Impulsive { object, pointer, .. } => vec![object, pointer],
            EventDecl::Detector { object, detector, .. } => vec![object, detector],
            EventDecl::Pairwise { a, b, .. } => vec![a, b],
            EventDecl::Collapse { .. } => vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtectiveDecl {
    pub meter: String,
    pub probes: Vec<(String, Vec<f64>)>,
    pub schedule: Schedule,
}

/// Labels a trajectory by the sign of one coordinate at a given time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathPredicate {
    pub name: String,
    pub coord: String,
    pub time: f64,
    pub positive: String,
    pub negative: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssertionSpec {
    pub name: String,
    pub description: String,
    pub threshold: f64,
}

/// Model switches that change what a scenario computes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOptions {
    #[serde(default)]
    pub collapse_comparator: bool,
    #[serde(default)]
    pub coeff_convention: CoeffConvention,
    /// Outcome weights `|c_a|²` for the measurement scenarios.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub summary: String,
    pub anchor: String,
    pub n: usize,
    pub seed: u64,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
    pub subsystems: Vec<SubsystemSpec>,
    pub packets: Vec<PacketDecl>,
    pub branches: Vec<BranchDecl>,
    pub events: Vec<EventDecl>,
    pub protective: Option<ProtectiveDecl>,
    pub predicates: Vec<PathPredicate>,
    /// Scenario-specific pinned numbers.
    pub params: BTreeMap<String, f64>,
    pub assertions: Vec<AssertionSpec>,
    pub snapshot_times: Vec<f64>,
    /// Coordinate shown in plots.
    pub plot_coord: String,
    pub options: ScenarioOptions,
}

impl ScenarioSpec {
    pub fn param(&self, key: &str) -> f64 {
        *self.params.get(key).unwrap_or_else(|| panic!("scenario {} has no parameter {key}", self.name))
    }

    pub fn threshold(&self, name: &str) -> f64 {
        self.assertions
            .iter()
            .find(|a| a.name == name)
            .unwrap_or_else(|| panic!("scenario {} has no assertion {name}", self.name))
            .threshold
    }

    pub fn subsystem(&self, name: &str) -> Result<&SubsystemSpec> {
        self.subsystems
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Scenario(format!("unknown subsystem {name:?}")))
    }

    fn packet(&self, name: &str) -> Result<&PacketDecl> {
        self.packets
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Scenario(format!("unknown packet {name:?}")))
    }

    fn coord_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for s in &self.subsystems {
            if s.axes.len() == 1 {
                out.push(s.name.clone());
            } else {
                out.extend((0..s.axes.len()).map(|i| format!("{}{i}", s.name)));
            }
        }
        out
    }

    /// Index of a coordinate name in the flat configuration.
    pub fn coord_index(&self, name: &str) -> Result<usize> {
        self.coord_names()
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Scenario(format!("unknown coordinate {name:?}")))
    }

    /// Structural checks that need no propagation.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(format!("{}: {m}", self.name)));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        for s in &self.subsystems {
            if s.axes.is_empty() || s.axes.len() > 2 {
                return bad(format!("subsystem {} needs one or two axes", s.name));
            }
            s.grid()?;
        }
        for p in &self.packets {
            let s = self.subsystem(&p.subsystem)?;
            let d = s.axes.len();
            if p.center.len() != d || p.width.len() != d || p.momentum.len() != d {
                return bad(format!("packet {} has the wrong dimension", p.name));
            }
        }
        if self.branches.is_empty() {
            return bad("no branches".into());
        }
        for b in &self.branches {
            let mut covered: Vec<&str> = Vec::new();
            for name in &b.packets {
                covered.push(&self.packet(name)?.subsystem);
            }
            covered.sort();
            let mut all: Vec<&str> = self.subsystems.iter().map(|s| s.name.as_str()).collect();
            all.sort();
            if covered != all {
                return bad(format!("branch {} must give one packet per subsystem", b.label));
            }
            if !(b.weight >= 0.0) {
                return bad(format!("branch {} has negative weight", b.label));
            }
        }
        if self.events.windows(2).any(|w| w[1].time() < w[0].time()) {
            return bad("events are not time-ordered".into());
        }
        for e in &self.events {
            for s in e.subsystems() {
                self.subsystem(s)?;
            }
            if let EventDecl::Impulsive { outcomes, eigenvalues, .. } = e {
                if outcomes.len() != eigenvalues.len() {
                    return bad("impulsive event needs one eigenvalue per outcome".into());
                }
                for o in outcomes {
                    self.packet(o)?;
                }
            }
            if e.time() > self.t_end {
                return bad(format!("event at {} after t_end", e.time()));
            }
        }
        if let Some(p) = &self.protective {
            self.subsystem(&p.meter)?;
            for (s, _) in &p.probes {
                self.subsystem(s)?;
            }
            p.schedule.validate()?;
        }
        for p in &self.predicates {
            self.coord_index(&p.coord)?;
        }
        self.coord_index(&self.plot_coord)?;
        let mut names: Vec<&str> = self.assertions.iter().map(|a| a.name.as_str()).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate assertion name".into());
        }
        Ok(())
    }

    /// Applies a grid override to subsystem `name`.
    pub fn override_grid(&mut self, name: &str, axes: Vec<AxisSpec>) -> Result<()> {
        let s = self
            .subsystems
            .iter_mut()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Scenario(format!("unknown subsystem {name:?}")))?;
        if axes.len() != s.axes.len() {
            return Err(Error::Scenario(format!("subsystem {name} has {} axes", s.axes.len())));
        }
        s.axes = axes;
        Ok(())
    }
}

/// Outcome of one assertion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssertionResult {
    pub name: String,
    pub description: String,
    pub passed: bool,
    /// `None` when the quantity could not be evaluated.
    pub measured: Option<f64>,
    pub threshold: f64,
    /// One of `<`, `<=`, `>`, `>=`, `==`.
    pub relation: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub n: usize,
    pub passed: bool,
    pub assertions: Vec<AssertionResult>,
    pub metrics: BTreeMap<String, f64>,
    pub stats: EnsembleStats,
    pub artifacts: Vec<String>,
    pub spec: ScenarioSpec,
}

/// A stored wavefunction: the joint field when the state has at most two
/// coordinates, otherwise one entry per distinct branch factor.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub name: String,
    pub field: ComplexField,
}

/// Marginal density of one coordinate over time, with trajectory traces.
#[derive(Clone, Debug, Default)]
pub struct PlotData {
    pub coord: String,
    pub axis: Vec<f64>,
    pub times: Vec<f64>,
    pub density: Vec<Vec<f64>>,
    pub traces: Vec<Vec<(f64, f64)>>,
}

#[derive(Clone, Debug)]
pub struct ScenarioOutput {
    pub report: RunReport,
    pub run: EnsembleRun,
    pub coord_names: Vec<String>,
    pub snapshots: Vec<Snapshot>,
    pub plot: Option<PlotData>,
}

/// Initial state plus the pieces needed to build plan variants.
pub(crate) struct Compiled {
    pub initial: BranchState,
    pub events: Vec<ScheduledEvent>,
}

/// Pairwise coupling that does nothing when its target branch is absent.
struct OptionalPairwise(PairwiseEntangle);

impl Event for OptionalPairwise {
    fn name(&self) -> String {
        self.0.name()
    }
    fn apply(&self, state: &BranchState) -> Result<BranchState> {
        if state.branch_index(&self.0.target).is_none() {
            return Ok(state.clone());
        }
        pairwise_entangle(state, &self.0)
    }
    fn transport(&self, before: &BranchState, q: &mut [f64]) -> Result<()> {
        if before.branch_index(&self.0.target).is_none() {
            return Ok(());
        }
        self.0.transport(before, q)
    }
}

struct CollapseTo(String);

impl Event for CollapseTo {
    fn name(&self) -> String {
        format!("collapse({})", self.0)
    }
    fn apply(&self, state: &BranchState) -> Result<BranchState> {
        let i = state
            .branch_index(&self.0)
            .ok_or_else(|| Error::Scenario(format!("no branch {:?} to collapse onto", self.0)))?;
        collapse(state, i)
    }
}

fn packet_field(grid: &Grid, p: &PacketDecl) -> Result<ComplexField> {
    let specs: Vec<PacketSpec> =
        (0..p.center.len()).map(|i| PacketSpec::new(p.center[i], p.width[i], p.momentum[i])).collect();
    match specs.as_slice() {
        [a] => gaussian_packet(grid, a),
        [a, b] => gaussian_packet_2d(grid, [a, b]),
        _ => Err(Error::Scenario(format!("packet {} must be 1-D or 2-D", p.name))),
    }
}

pub(crate) fn compile(spec: &ScenarioSpec) -> Result<Compiled> {
    spec.validate()?;
    let subs = spec.subsystems.iter().map(|s| Ok(Subsystem::new(s.name.clone(), s.grid()?, s.mass))).collect::<Result<_>>()?;
    let reg = Registry::new(subs)?;
    let mut fields: BTreeMap<&str, ComplexField> = BTreeMap::new();
    let mut factors: BTreeMap<&str, Arc<Factor>> = BTreeMap::new();
    for p in &spec.packets {
        let grid = reg.get(reg.index(&p.subsystem)?).grid.clone();
        let f = packet_field(&grid, p)?;
        factors.insert(&p.name, Arc::new(Factor::new(&reg, &[p.subsystem.as_str()], f.clone())?));
        fields.insert(&p.name, f);
    }
    let branches = spec
        .branches
        .iter()
        .map(|b| Branch {
            coeff: Complex64::from_polar(b.weight.sqrt(), b.phase),
            factors: b.packets.iter().map(|p| factors[p.as_str()].clone()).collect(),
            label: b.label.clone(),
        })
        .collect();
    let initial = BranchState::new(reg.clone(), branches)?;

    let mut events: Vec<ScheduledEvent> = Vec::new();
    for e in &spec.events {
        let event: Arc<dyn Event> = match e {
            EventDecl::Impulsive { t, object, pointer, outcomes, eigenvalues, coupling, duration } => {
                let mass = spec.subsystem(object)?.mass;
                let steps = (2.0 * t / spec.dt).round() as usize;
                let eigenfunctions = outcomes
                    .iter()
                    .map(|o| SplitStep::new(0.5 * spec.dt).mass(mass).run(&fields[o.as_str()], &Potential::Zero, steps))
                    .collect::<Result<_>>()?;
                Arc::new(ImpulsiveMeasurement {
                    object: object.clone(),
                    pointer: pointer.clone(),
                    eigenvalues: eigenvalues.clone(),
                    coupling: *coupling,
                    duration: *duration,
                    eigenfunctions,
                })
            }
            EventDecl::Detector { object, detector, window, displacement, .. } => Arc::new(DetectorCoupling {
                object: object.clone(),
                detector: detector.clone(),
                window: (window[0], window[1]),
                displacement: *displacement,
            }),
            EventDecl::Pairwise { target, a, b, lambda, .. } => {
                Arc::new(OptionalPairwise(PairwiseEntangle::shift(target, a, b, *lambda)))
            }
            EventDecl::Collapse { label, .. } => Arc::new(CollapseTo(label.clone())),
        };
        events.push(ScheduledEvent { t: e.time(), event });
    }
    Ok(Compiled { initial, events })
}

impl Compiled {
    /// Plan over the spec's time axis with the given events and propagator.
    pub fn plan(&self, spec: &ScenarioSpec, initial: BranchState, protective: Option<Arc<ProtectivePropagator>>) -> EnsemblePlan {
        let mut plan = EnsemblePlan::new(initial, spec.t_end, spec.dt);
        plan.events = self.events.clone();
        plan.record_every = spec.record_every;
        if let Some(p) = protective {
            plan.propagator = p;
        } else {
            plan.propagator = Arc::new(FreePropagator { potentials: Potentials::none(), substeps: 1 });
        }
        plan
    }

    pub fn protective(&self, spec: &ScenarioSpec, schedule: Option<Schedule>, probes: Option<Vec<(String, Vec<f64>)>>) -> Result<Option<Arc<ProtectivePropagator>>> {
        let Some(p) = &spec.protective else {
            return Ok(None);
        };
        let coupling = ProtectiveCoupling {
            meter: p.meter.clone(),
            probes: probes.unwrap_or_else(|| p.probes.clone()),
            schedule: schedule.unwrap_or_else(|| p.schedule.clone()),
            convention: spec.options.coeff_convention,
        };
        Ok(Some(Arc::new(ProtectivePropagator::new(coupling, Potentials::none())?)))
    }

    /// Initial state with the named branches' coefficients set to zero.
    pub fn zeroed(&self, labels: &[&str]) -> Result<BranchState> {
        let mut s = self.initial.clone();
        for l in labels {
            let i = s.branch_index(l).ok_or_else(|| Error::Scenario(format!("no branch {l:?}")))?;
            s = s.with_coefficient(i, Complex64::new(0.0, 0.0))?;
        }
        Ok(s)
    }

    pub fn with_collapse(&self, t: f64, label: &str) -> Vec<ScheduledEvent> {
        let mut ev = self.events.clone();
        let at = ev.iter().position(|e| e.t > t).unwrap_or(ev.len());
        ev.insert(at, ScheduledEvent { t, event: Arc::new(CollapseTo(label.into())) });
        ev
    }
}

/// Density of one coordinate with everything else integrated out.
pub fn coord_marginal(state: &BranchState, coord: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let reg = state.registry();
    for (i, s) in reg.subsystems().iter().enumerate() {
        let o = reg.offset(i);
        if coord < o || coord >= o + s.grid.dims() {
            continue;
        }
        let m = state.marginal_density(&s.name)?;
        let axis_i = coord - o;
        let axis = s.grid.axis(axis_i);
        if s.grid.dims() == 1 {
            return Ok((axis.coords(), m));
        }
        let (n0, n1) = (s.grid.axis(0).n, s.grid.axis(1).n);
        let mut out = vec![0.0; axis.n];
        let other = s.grid.axis(1 - axis_i).dx();
        for i0 in 0..n0 {
            for i1 in 0..n1 {
                out[if axis_i == 0 { i0 } else { i1 }] += m[i0 * n1 + i1] * other;
            }
        }
        return Ok((axis.coords(), out));
    }
    Err(Error::Scenario(format!("coordinate {coord} out of range")))
}

fn snapshot_fields(t: f64, state: &BranchState) -> Result<Vec<Snapshot>> {
    if let Ok(field) = state.expand() {
        return Ok(vec![Snapshot { t, name: "joint".into(), field }]);
    }
    let reg = state.registry();
    let mut seen: Vec<*const Factor> = Vec::new();
    let mut out = Vec::new();
    for (bi, b) in state.branches().iter().enumerate() {
        for f in &b.factors {
            if seen.contains(&Arc::as_ptr(f)) {
                continue;
            }
            seen.push(Arc::as_ptr(f));
            let names: Vec<&str> = f.subsystems().iter().map(|&s| reg.get(s).name.as_str()).collect();
            let field = f.field().scaled(b.coeff);
            out.push(Snapshot { t, name: format!("b{bi}_{}", names.join("")), field });
        }
    }
    Ok(out)
}

/// Step-aligned times used for plot frames.
fn plot_times(spec: &ScenarioSpec, frames: usize) -> Vec<f64> {
    let steps = (spec.t_end / spec.dt).round() as usize;
    let mut ks: Vec<usize> = (0..=frames).map(|i| i * steps / frames).collect();
    ks.dedup();
    ks.into_iter().map(|k| k as f64 * spec.dt).collect()
}

/// Compiles and runs a scenario with all its sub-runs.
pub fn run_scenario(spec: &ScenarioSpec, plots: bool) -> Result<ScenarioOutput> {
    let compiled = compile(spec)?;
    let mut captures = spec.snapshot_times.clone();
    let frames = if plots { plot_times(spec, 40) } else { Vec::new() };
    captures.extend(frames.iter().copied());
    captures.sort_by(f64::total_cmp);
    captures.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let (run, checks) = analysis::analyze(spec, &compiled, &captures)?;
    let mut snapshots = Vec::new();
    for &t in &spec.snapshot_times {
        if let Some((_, s)) = run.captured.iter().find(|(tc, _)| (tc - t).abs() < 1e-9) {
            snapshots.extend(snapshot_fields(t, s)?);
        }
    }
    let plot = if plots {
        let c = spec.coord_index(&spec.plot_coord)?;
        let mut pd = PlotData { coord: spec.plot_coord.clone(), ..Default::default() };
        for &t in &frames {
            if let Some((_, s)) = run.captured.iter().find(|(tc, _)| (tc - t).abs() < 1e-9) {
                let (axis, d) = coord_marginal(s, c)?;
                pd.axis = axis;
                pd.times.push(t);
                pd.density.push(d);
            }
        }
        pd.traces = run
            .trajectories
            .iter()
            .take(64)
            .map(|tr| tr.samples.iter().map(|s| (s.t, s.coords[c])).collect())
            .collect();
        Some(pd)
    } else {
        None
    };
    let report = checks.finish(spec, run.stats.clone());
    Ok(ScenarioOutput { report, coord_names: spec.coord_names(), run, snapshots, plot })
}

#[cfg(test)]
mod tests;
