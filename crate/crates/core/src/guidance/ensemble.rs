//! Ensemble execution through a shared series of state snapshots.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampling::InitialSampler;
use super::{speed_caps, step_trajectory, Configuration, EnsembleStats, StateWindow, Trajectory};
use crate::branchstate::{BranchState, Potentials, OCCUPANCY_EPS};
use crate::{Error, Result};

/// Instantaneous transformation of the state at a scheduled time.
pub trait Event: Send + Sync {
    fn name(&self) -> String;
    fn apply(&self, state: &BranchState) -> Result<BranchState>;
    /// Configuration update carried by the event, given the state before it.
    fn transport(&self, _before: &BranchState, _q: &mut [f64]) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone)]
pub struct ScheduledEvent {
    pub t: f64,
    pub event: Arc<dyn Event>,
}

impl fmt::Debug for ScheduledEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.event.name(), self.t)
    }
}

/// Advances the state between records; the default is free evolution.
pub trait Propagator: Send + Sync {
    fn advance(&self, state: &BranchState, t: f64, h: f64) -> Result<BranchState>;
}

#[derive(Clone, Debug, Default)]
pub struct FreePropagator {
    pub potentials: Potentials,
    /// Split-operator steps per advance.
    pub substeps: usize,
}

impl Propagator for FreePropagator {
    fn advance(&self, state: &BranchState, t: f64, h: f64) -> Result<BranchState> {
        let n = self.substeps.max(1);
        state.evolve_free(h / n as f64, n, &self.potentials, t)
    }
}

/// Everything needed to integrate an ensemble.
#[derive(Clone)]
pub struct EnsemblePlan {
    pub initial: BranchState,
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub propagator: Arc<dyn Propagator>,
    pub events: Vec<ScheduledEvent>,
    /// Record every `record_every` steps; the final time is always recorded.
    pub record_every: usize,
    /// Times at which the state itself is kept.
    pub capture_times: Vec<f64>,
    /// Fixed starting configurations instead of |Ψ₀|² draws.
    pub initial_configs: Option<Vec<Vec<f64>>>,
}

impl EnsemblePlan {
    pub fn new(initial: BranchState, t_end: f64, dt: f64) -> Self {
        Self {
            initial,
            t0: 0.0,
            t_end,
            dt,
            propagator: Arc::new(FreePropagator::default()),
            events: Vec::new(),
            record_every: 1,
            capture_times: Vec::new(),
            initial_configs: None,
        }
    }

    pub fn n_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.t_end >= self.t0) {
            return Err(Error::Scenario(format!("bad time axis t0={} t_end={} dt={}", self.t0, self.t_end, self.dt)));
        }
        let n = ((self.t_end - self.t0) / self.dt).round() as usize;
        if ((self.t0 + n as f64 * self.dt) - self.t_end).abs() > 1e-9 * self.t_end.abs().max(1.0) {
            return Err(Error::Scenario(format!("duration {} is not a multiple of dt {}", self.t_end - self.t0, self.dt)));
        }
        Ok(n)
    }

    fn step_of(&self, t: f64) -> Result<usize> {
        let k = ((t - self.t0) / self.dt).round();
        if k < 0.0 || ((self.t0 + k * self.dt) - t).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(Error::Scenario(format!("time {t} is not on the step grid")));
        }
        Ok(k as usize)
    }
}

/// Branch labels valid at one record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub labels: Vec<String>,
}

/// Integrated ensemble with the state history it saw.
#[derive(Clone, Debug)]
pub struct EnsembleRun {
    pub trajectories: Vec<Trajectory>,
    pub stats: EnsembleStats,
    pub frames: Vec<Frame>,
    pub final_state: BranchState,
    pub captured: Vec<(f64, BranchState)>,
    pub event_times: Vec<(f64, String)>,
}

impl EnsembleRun {
    /// Label of the branch trajectory `i` occupied at record `k`.
    pub fn label_at(&self, i: usize, k: usize) -> Option<&str> {
        let code = *self.trajectories[i].occupancy.get(k)?;
        if code < 0 {
            return None;
        }
        self.frames[k].labels.get(code as usize).map(String::as_str)
    }

    pub fn final_label(&self, i: usize) -> Option<&str> {
        let k = self.trajectories[i].occupancy.len().checked_sub(1)?;
        self.label_at(i, k)
    }
}

/// Summary bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn build(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let w = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + i as f64 * w).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            if v >= lo && v < hi {
                counts[(((v - lo) / w) as usize).min(bins - 1)] += 1;
            }
        }
        Self { edges, counts }
    }
}

struct Walker {
    q: Vec<f64>,
    alive: bool,
    node_since_record: bool,
    traj: Trajectory,
}

fn occupancy_code(state: &BranchState, q: &[f64]) -> i64 {
    state.occupied_branch(q, OCCUPANCY_EPS).map_or(-1, |o| o.code())
}

/// Integrates `n` trajectories (or the plan's fixed configurations) through
/// the plan. Trajectory `i` uses RNG stream `i` of `seed`, so results do not
/// depend on the number of worker threads.
pub fn run_ensemble(plan: &EnsemblePlan, n: usize, seed: u64) -> Result<EnsembleRun> {
    let n_steps = plan.n_steps()?;
    let mut schedule: Vec<(usize, &ScheduledEvent)> = Vec::with_capacity(plan.events.len());
    for e in &plan.events {
        schedule.push((plan.step_of(e.t)?, e));
    }
    if schedule.windows(2).any(|w| w[1].1.t < w[0].1.t) {
        return Err(Error::Scenario("events are not time-ordered".into()));
    }
    let captures = plan.capture_times.iter().map(|&t| plan.step_of(t)).collect::<Result<Vec<_>>>()?;
    let record_every = plan.record_every.max(1);

    let starts: Vec<Vec<f64>> = match &plan.initial_configs {
        Some(c) => c.clone(),
        None if n == 0 => Vec::new(),
        None => {
            let sampler = InitialSampler::new(&plan.initial)?;
            (0..n as u64).into_par_iter().map(|i| sampler.draw(seed, i)).collect()
        }
    };
    let n = starts.len();
    let mut walkers: Vec<Walker> = starts
        .into_iter()
        .enumerate()
        .map(|(id, q)| Walker {
            q,
            alive: true,
            node_since_record: false,
            traj: Trajectory {
                id,
                samples: Vec::new(),
                occupancy: Vec::new(),
                node_flags: Vec::new(),
                node_events: 0,
                boundary_exit: None,
                event_configs: Vec::new(),
            },
        })
        .collect();
    for w in &mut walkers {
        if !plan.initial.registry().contains(&w.q) {
            return Err(Error::OutsideGrid { point: w.q.clone() });
        }
    }

    let caps = speed_caps(&plan.initial, plan.dt);
    let mut state = plan.initial.clone();
    state.prepare();
    let mut frames = Vec::new();
    let mut captured = Vec::new();
    let mut event_times = Vec::new();
    let mut next_event = 0;

    for k in 0..=n_steps {
        let t = plan.t0 + k as f64 * plan.dt;
        while next_event < schedule.len() && schedule[next_event].0 == k {
            let ev = &schedule[next_event].1.event;
            let before = &state;
            walkers.par_iter_mut().for_each(|w| {
                w.traj.event_configs.push(w.q.clone());
                if w.alive && (ev.transport(before, &mut w.q).is_err() || !before.registry().contains(&w.q)) {
                    w.alive = false;
                    w.traj.boundary_exit = Some(t);
                }
            });
            state = ev.apply(&state)?;
            state.prepare();
            log::debug!("t={t:.4}: applied {} -> {} branch(es)", ev.name(), state.branches().len());
            event_times.push((t, ev.name()));
            next_event += 1;
        }
        if captures.contains(&k) {
            captured.push((t, state.clone()));
        }
        if k % record_every == 0 || k == n_steps {
            frames.push(Frame { t, labels: state.labels() });
            let st = &state;
            walkers.par_iter_mut().filter(|w| w.alive).for_each(|w| {
                w.traj.samples.push(Configuration { t, coords: w.q.clone() });
                w.traj.occupancy.push(occupancy_code(st, &w.q));
                w.traj.node_flags.push(w.node_since_record);
                w.node_since_record = false;
            });
        }
        if k == n_steps {
            break;
        }
        let half = plan.propagator.advance(&state, t, 0.5 * plan.dt)?;
        half.prepare();
        let full = plan.propagator.advance(&half, t + 0.5 * plan.dt, 0.5 * plan.dt)?;
        full.prepare();
        let window = StateWindow { t0: t, h: plan.dt, states: [&state, &half, &full] };
        walkers.par_iter_mut().filter(|w| w.alive).try_for_each(|w| -> Result<()> {
            match step_trajectory(&window, t, &w.q, plan.dt, &caps) {
                Ok(out) if plan.initial.registry().contains(&out.q) => {
                    w.q = out.q;
                    if out.node {
                        w.node_since_record = true;
                        w.traj.node_events += 1;
                    }
                    Ok(())
                }
                Ok(_) | Err(Error::OutsideGrid { .. }) => {
                    w.alive = false;
                    w.traj.boundary_exit = Some(t + plan.dt);
                    Ok(())
                }
                Err(e) => Err(e),
            }
        })?;
        state = full;
    }

    let trajectories: Vec<Trajectory> = walkers.into_iter().map(|w| w.traj).collect();
    let mut stats = EnsembleStats { n, seed, ..Default::default() };
    let last = frames.last().expect("at least one record");
    for tr in &trajectories {
        stats.node_events += tr.node_events;
        stats.node_trajectories += (tr.node_events > 0) as usize;
        if tr.terminated() {
            stats.boundary += 1;
            continue;
        }
        match tr.final_occupancy() {
            c if c >= 0 => *stats.arrivals.entry(last.labels[c as usize].clone()).or_insert(0) += 1,
            _ => stats.mixed += 1,
        }
    }
    if stats.boundary > 0 {
        log::warn!("{} trajectories left the grid", stats.boundary);
    }
    Ok(EnsembleRun { trajectories, stats, frames, final_state: state, captured, event_times })
}

/// Arrival counts keyed by label, for reports.
pub fn tally<'a>(labels: impl Iterator<Item = &'a str>) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for l in labels {
        *m.entry(l.to_string()).or_insert(0) += 1;
    }
    m
}
