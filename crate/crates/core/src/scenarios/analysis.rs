//! Per-scenario sub-runs and assertion evaluation.

use std::collections::BTreeMap;

use super::{coord_marginal, AssertionResult, Compiled, RunReport, ScenarioSpec};
use crate::branchstate::BranchState;
use crate::fields::{momentum_variance, probe_amplitude, Axis};
use crate::guidance::{
    chi_square_equiprobable, no_crossing_check_by, run_ensemble, tally, EnsembleRun, EnsembleStats,
    GridCdf, Histogram,
};
use crate::interactions::{meter_momentum, CoeffConvention, Schedule};
use crate::{Error, Result};

/// Collected assertion outcomes and metrics for one scenario run.
#[derive(Default)]
pub(crate) struct Checks {
    results: Vec<AssertionResult>,
    metrics: BTreeMap<String, f64>,
    paths: BTreeMap<String, usize>,
    histograms: BTreeMap<String, Histogram>,
}

impl Checks {
    /// Compares `measured` with the spec threshold. NaN never passes;
    /// non-finite values are reported as unevaluated.
    fn record(&mut self, spec: &ScenarioSpec, name: &str, measured: f64, relation: &str) {
        let Some(a) = spec.assertions.iter().find(|a| a.name == name) else {
            return;
        };
        let thr = a.threshold;
        let passed = match relation {
            "<" => measured < thr,
            "<=" => measured <= thr,
            ">" => measured > thr,
            ">=" => measured >= thr,
            "==" => measured == thr,
            _ => false,
        };
        self.results.retain(|r| r.name != name);
        self.results.push(AssertionResult {
            name: name.into(),
            description: a.description.clone(),
            passed,
            measured: measured.is_finite().then_some(measured),
            threshold: thr,
            relation: relation.into(),
        });
    }

    fn metric(&mut self, key: &str, v: f64) {
        self.metrics.insert(key.into(), v);
    }

    /// Report with results in spec order; assertions never evaluated fail.
    pub fn finish(mut self, spec: &ScenarioSpec, mut stats: EnsembleStats) -> RunReport {
        let assertions: Vec<AssertionResult> = spec
            .assertions
            .iter()
            .map(|a| {
                self.results.iter().find(|r| r.name == a.name).cloned().unwrap_or_else(|| AssertionResult {
                    name: a.name.clone(),
                    description: a.description.clone(),
                    passed: false,
                    measured: None,
                    threshold: a.threshold,
                    relation: "not evaluated".into(),
                })
            })
            .collect();
        stats.paths.append(&mut self.paths);
        stats.histograms.append(&mut self.histograms);
        RunReport {
            scenario: spec.name.clone(),
            seed: spec.seed,
            n: spec.n,
            passed: assertions.iter().all(|a| a.passed),
            assertions,
            metrics: self.metrics,
            stats,
            artifacts: Vec::new(),
            spec: spec.clone(),
        }
    }
}

pub(crate) fn analyze(spec: &ScenarioSpec, c: &Compiled, captures: &[f64]) -> Result<(EnsembleRun, Checks)> {
    let mut ch = Checks::default();
    let run = match spec.name.as_str() {
        "fig1_two_slit" => fig1(spec, c, captures, &mut ch)?,
        "born_measurement" => born(spec, c, captures, &mut ch)?,
        "fig3a_overlap" | "fig3b_swap" => fig3(spec, c, captures, &mut ch)?,
        "fig4_no_influence" => fig4(spec, c, captures, &mut ch)?,
        "eq44_reversed_roles" => eq44(spec, c, captures, &mut ch)?,
        "protective_discriminate" => discriminate(spec, c, captures, &mut ch)?,
        "protective_empty_wave" => empty_wave(spec, c, captures, &mut ch)?,
        other => return Err(Error::Scenario(format!("no analysis for scenario {other:?}"))),
    };
    if let Ok(k) = spec.coord_index(&spec.plot_coord) {
        let axis = coord_axis(&run.final_state, k);
        let finals = finals(&run, k);
        ch.histograms.insert(spec.plot_coord.clone(), Histogram::build(&finals, axis.min, axis.max, 40));
    }
    ch.metric("boundary_exits", run.stats.boundary as f64);
    ch.metric("node_trajectories", run.stats.node_trajectories as f64);
    Ok((run, ch))
}

fn main_run(spec: &ScenarioSpec, c: &Compiled, captures: &[f64], prot: bool) -> Result<EnsembleRun> {
    let p = if prot { c.protective(spec, None, None)? } else { None };
    let mut plan = c.plan(spec, c.initial.clone(), p);
    plan.capture_times = captures.to_vec();
    run_ensemble(&plan, spec.n, spec.seed)
}

fn coord_axis(state: &BranchState, coord: usize) -> Axis {
    let reg = state.registry();
    for (i, s) in reg.subsystems().iter().enumerate() {
        let o = reg.offset(i);
        if coord >= o && coord < o + s.grid.dims() {
            return s.grid.axis(coord - o).clone();
        }
    }
    panic!("coordinate {coord} out of range")
}

/// Final values of one coordinate over trajectories still on the grid.
fn finals(run: &EnsembleRun, coord: usize) -> Vec<f64> {
    run.trajectories.iter().filter(|t| !t.terminated()).map(|t| t.final_config().coords[coord]).collect()
}

fn starts(run: &EnsembleRun, keep: &[usize]) -> Vec<Vec<f64>> {
    keep.iter().map(|&i| run.trajectories[i].samples[0].coords.clone()).collect()
}

/// Equiprobable chi-square p-value of final positions against the final marginal.
fn equivariance_p(run: &EnsembleRun, coord: usize, bins: usize) -> Result<f64> {
    let samples = finals(run, coord);
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let (_, density) = coord_marginal(&run.final_state, coord)?;
    let cdf = GridCdf::new(&coord_axis(&run.final_state, coord), &density)?;
    Ok(chi_square_equiprobable(&samples, &cdf, bins)?.p_value)
}

/// Largest deviation over several coordinates, index-matched trajectories.
fn deviation(a: &EnsembleRun, ia: usize, b: &EnsembleRun, ib: usize, coords: &[usize]) -> f64 {
    coords.iter().map(|&k| a.trajectories[ia].max_deviation(&b.trajectories[ib], k)).fold(0.0, f64::max)
}

/// `(|ψ|² at q, max |ψ|²)` of the factor of branch `b` that covers subsystem `s`.
fn factor_support(state: &BranchState, b: usize, s: usize, q: &[f64]) -> Result<(f64, f64)> {
    let reg = state.registry();
    let br = &state.branches()[b];
    let f = &br.factors[br.factor_of(s).expect("branches partition the registry")];
    let mut point = Vec::new();
    for &t in f.subsystems() {
        let o = reg.offset(t);
        point.extend_from_slice(&q[o..o + reg.get(t).grid.dims()]);
    }
    let at = probe_amplitude(f.field(), &point).map(|a| a.norm_sqr()).unwrap_or(0.0);
    let max = f.field().density().into_iter().fold(0.0, f64::max);
    Ok((at, max))
}

/// Index into the trajectory's event configurations for the event at `t`.
fn event_slot(spec: &ScenarioSpec, t: f64) -> Option<usize> {
    spec.events.iter().position(|e| (e.time() - t).abs() < 1e-9)
}

fn fig1(spec: &ScenarioSpec, c: &Compiled, captures: &[f64], ch: &mut Checks) -> Result<EnsembleRun> {
    let v = spec.coord_index("v")?;
    let overlap_t = spec.param("overlap_time");
    let mut caps = captures.to_vec();
    caps.push(overlap_t);
    let run = main_run(spec, c, &caps, false)?;
    let fin = &run.final_state;
    let (axis, total) = coord_marginal(fin, v)?;
    let i1 = fin.branch_index("psi1").ok_or_else(|| Error::Scenario("fig1: psi1 missing".into()))?;
    let only1 = fin.with_branches(vec![fin.branches()[i1].clone()])?;
    let (_, d1) = coord_marginal(&only1, v)?;
    let m1 = d1.iter().cloned().fold(0.0, f64::max);
    let mt = total.iter().cloned().fold(0.0, f64::max);
    let (ratio, frac) = (spec.param("region_density_ratio"), spec.param("region_total_fraction"));
    let in_r: Vec<bool> = (0..axis.len()).map(|j| d1[j] < ratio * m1 && total[j] > frac * mt).collect();
    let ax = coord_axis(fin, v);
    let dx = ax.dx();
    let width = in_r.iter().filter(|&&b| b).count() as f64 * dx;
    ch.record(spec, "region_r_width", width, ">");
    let lo = in_r.iter().position(|&b| b).map(|j| axis[j]);
    let hi = in_r.iter().rposition(|&b| b).map(|j| axis[j]);
    if let (Some(lo), Some(hi)) = (lo, hi) {
        ch.metric("region_r_lo", lo);
        ch.metric("region_r_hi", hi);
    }
    let in_region = |x: f64| {
        let j = ((x - axis[0]) / dx).round();
        j >= 0.0 && (j as usize) < in_r.len() && in_r[j as usize]
    };

    // nodes: local minima well below both neighbouring maxima, where the packets overlap
    let depth = spec.param("node_depth");
    let (_, at_overlap) = run
        .captured
        .iter()
        .find(|(t, _)| (t - overlap_t).abs() < 1e-9)
        .ok_or_else(|| Error::Scenario("fig1: overlap state not captured".into()))?;
    let (_, total) = coord_marginal(at_overlap, v)?;
    let mt = total.iter().cloned().fold(0.0, f64::max);
    let mut nodes = 0usize;
    for j in 1..total.len() - 1 {
        if !(total[j] <= total[j - 1] && total[j] < total[j + 1]) {
            continue;
        }
        let mut l = j;
        while l > 0 && total[l - 1] >= total[l] {
            l -= 1;
        }
        let mut r = j;
        while r + 1 < total.len() && total[r + 1] >= total[r] {
            r += 1;
        }
        let peak = total[l].min(total[r]);
        if peak > 1e-3 * mt && total[j] < depth * peak {
            nodes += 1;
        }
    }
    ch.record(spec, "screen_nodes", nodes as f64, ">=");

    let starters: Vec<usize> = (0..run.trajectories.len()).filter(|&i| run.label_at(i, 0) == Some("psi1")).collect();
    let landed = starters
        .iter()
        .filter(|&&i| !run.trajectories[i].terminated() && in_region(run.trajectories[i].final_config().coords[v]))
        .count();
    ch.metric("psi1_starters", starters.len() as f64);
    ch.metric("psi1_landed_in_r", landed as f64);
    let f = if starters.is_empty() { f64::NAN } else { landed as f64 / starters.len() as f64 };
    ch.record(spec, "empty_wave_arrivals", f, ">=");

    let zplan = c.plan(spec, c.zeroed(&["psi2"])?, None);
    let zrun = run_ensemble(&zplan, spec.n, spec.seed)?;
    let zlanded = zrun.trajectories.iter().filter(|t| !t.terminated() && in_region(t.final_config().coords[v])).count();
    ch.record(spec, "zeroed_arrivals", zlanded as f64, "==");

    let crossings = run
        .trajectories
        .iter()
        .filter(|t| t.samples[0].coords[v].signum() != t.final_config().coords[v].signum())
        .count();
    ch.record(spec, "axis_crossings", crossings as f64, "==");
    let inv = no_crossing_check_by(&run.trajectories, |q| q[v]);
    ch.record(spec, "transverse_inversions", inv as f64, "==");
    let p = equivariance_p(&run, v, spec.param("chi_square_bins") as usize)?;
    ch.record(spec, "equivariance_p", p, ">");

    let pred = &spec.predicates[0];
    let k = spec.coord_index(&pred.coord)?;
    ch.paths = tally(run.trajectories.iter().map(|t| {
        if t.samples[0].coords[k] >= 0.0 {
            pred.positive.as_str()
        } else {
            pred.negative.as_str()
        }
    }));
    Ok(run)
}

fn born(spec: &ScenarioSpec, c: &Compiled, captures: &[f64], ch: &mut Checks) -> Result<EnsembleRun> {
    let z = spec.coord_index("z")?;
    let run = main_run(spec, c, captures, false)?;
    let n = run.stats.n as f64;
    for (i, b) in spec.branches.iter().enumerate() {
        let label = format!("{}/a{i}", b.label);
        let frac = run.stats.fraction(&label);
        let p = b.weight;
        let sigma = (p * (1.0 - p) / n).sqrt();
        let score = if sigma > 0.0 {
            (frac - p).abs() / sigma
        } else if frac == p {
            0.0
        } else {
            f64::INFINITY
        };
        ch.metric(&format!("fraction_{}", b.label), frac);
        ch.record(spec, &format!("frequency_{}", b.label), score, "<=");
    }
    let fin = &run.final_state;
    let zs = fin.registry().index("z")?;
    let nb = fin.branches().len();
    let mut overlap: f64 = 0.0;
    for a in 0..nb {
        for b in a + 1..nb {
            overlap = overlap.max(fin.marginal_overlap(a, b, zs));
        }
    }
    ch.record(spec, "pointer_disjoint", overlap, "<");
    let p = equivariance_p(&run, z, spec.param("chi_square_bins") as usize)?;
    ch.record(spec, "equivariance_p", p, ">");

    if spec.options.collapse_comparator {
        let t_meas = spec.events[0].time();
        let coords: Vec<usize> = (0..fin.registry().n_coords()).collect();
        let mut worst: f64 = 0.0;
        for label in fin.labels() {
            let keep: Vec<usize> = (0..run.trajectories.len())
                .filter(|&i| !run.trajectories[i].terminated() && run.final_label(i) == Some(label.as_str()))
                .collect();
            if keep.is_empty() {
                continue;
            }
            let mut plan = c.plan(spec, c.initial.clone(), None);
            plan.events = c.with_collapse(t_meas, &label);
            plan.initial_configs = Some(starts(&run, &keep));
            let crun = run_ensemble(&plan, 0, spec.seed)?;
            for (j, &i) in keep.iter().enumerate() {
                let same = crun.final_label(j) == Some(label.as_str());
                let d = if same { deviation(&run, i, &crun, j, &coords) } else { f64::INFINITY };
                worst = worst.max(d);
            }
        }
        ch.record(spec, "collapse_comparator", worst, "<");
    }
    Ok(run)
}

fn fig3(spec: &ScenarioSpec, c: &Compiled, captures: &[f64], ch: &mut Checks) -> Result<EnsembleRun> {
    let run = main_run(spec, c, captures, false)?;
    let pred = &spec.predicates[0];
    let k = spec.coord_index(&pred.coord)?;
    let slot = event_slot(spec, pred.time).ok_or_else(|| Error::Scenario("path predicate has no event".into()))?;
    let path = |i: usize| -> &str {
        if run.trajectories[i].event_configs[slot][k] >= 0.0 {
            &pred.positive
        } else {
            &pred.negative
        }
    };
    let expected = format!("{}", spec.param("expected_path") as usize);
    let alive: Vec<usize> = (0..run.trajectories.len()).filter(|&i| !run.trajectories[i].terminated()).collect();
    let excited: Vec<usize> =
        alive.iter().copied().filter(|&i| run.final_label(i).is_some_and(|l| l.ends_with("/exc"))).collect();
    let on_expected = excited.iter().filter(|&&i| path(i) == expected).count();
    let f = if excited.is_empty() { f64::NAN } else { on_expected as f64 / excited.len() as f64 };
    ch.metric("excited", excited.len() as f64);
    ch.metric("excited_on_expected_path", on_expected as f64);
    ch.record(spec, "excited_path", f, ">=");

    let path1: Vec<usize> = alive.iter().copied().filter(|&i| path(i) == pred.positive).collect();
    let unexc = path1.iter().filter(|&&i| run.final_label(i).is_some_and(|l| !l.ends_with("/exc"))).count();
    let f = if path1.is_empty() { f64::NAN } else { unexc as f64 / path1.len() as f64 };
    ch.metric("path1_unexcited", unexc as f64);
    ch.record(spec, "detector_region_unexcited", f, ">=");

    let fin = &run.final_state;
    let xs = fin.registry().index(&pred.coord)?;
    let ratio = spec.param("support_ratio");
    let mut exceptions = 0usize;
    for &i in &alive {
        let q = &run.trajectories[i].final_config().coords;
        let ok = match run.trajectories[i].final_occupancy() {
            b if b >= 0 => {
                let (at, max) = factor_support(fin, b as usize, xs, q)?;
                at >= ratio * max
            }
            _ => false,
        };
        exceptions += (!ok) as usize;
    }
    ch.record(spec, "inference_exceptions", exceptions as f64, "==");
    ch.metric("x_inversions", no_crossing_check_by(&run.trajectories, |q| q[k]) as f64);
    ch.paths = tally(alive.iter().map(|&i| path(i)));
    Ok(run)
}

/// Re-runs `keep` with the named branches zeroed.
fn zeroed_rerun(spec: &ScenarioSpec, c: &Compiled, run: &EnsembleRun, keep: &[usize], zero: &[&str]) -> Result<EnsembleRun> {
    let mut plan = c.plan(spec, c.zeroed(zero)?, None);
    plan.initial_configs = Some(starts(run, keep));
    run_ensemble(&plan, 0, spec.seed)
}

fn fig4(spec: &ScenarioSpec, c: &Compiled, captures: &[f64], ch: &mut Checks) -> Result<EnsembleRun> {
    let (x, w) = (spec.coord_index("x")?, spec.coord_index("w")?);
    let run = main_run(spec, c, captures, false)?;
    let alive = |i: usize| !run.trajectories[i].terminated();
    let first: Vec<usize> = (0..run.trajectories.len()).filter(|&i| alive(i) && run.final_label(i) == Some("psi1/a0")).collect();
    let controls: Vec<usize> = (0..run.trajectories.len())
        .filter(|&i| run.final_label(i) == Some("psi2/a1"))
        .take(spec.param("control_count") as usize)
        .collect();
    let keep: Vec<usize> = first.iter().chain(&controls).copied().collect();
    let zrun = zeroed_rerun(spec, c, &run, &keep, &["psi2"])?;
    let worst = |coord: usize| {
        if first.is_empty() {
            return f64::NAN;
        }
        (0..first.len()).map(|j| deviation(&run, keep[j], &zrun, j, &[coord])).fold(0.0, f64::max)
    };
    ch.record(spec, "w_invisible", worst(w), "<");
    ch.record(spec, "x_invisible", worst(x), "<");
    let ctrl = (first.len()..keep.len())
        .map(|j| deviation(&run, keep[j], &zrun, j, &[x, w]))
        .fold(f64::INFINITY, f64::min);
    ch.record(spec, "control_changed", if controls.is_empty() { f64::NAN } else { ctrl }, ">");
    ch.metric("first_summand", first.len() as f64);
    ch.metric("controls", controls.len() as f64);
    Ok(run)
}

fn eq44(spec: &ScenarioSpec, c: &Compiled, captures: &[f64], ch: &mut Checks) -> Result<EnsembleRun> {
    let run = main_run(spec, c, captures, false)?;
    let fin = &run.final_state;
    let reg = fin.registry().clone();
    let (ys, ws) = (reg.index("y")?, reg.index("w")?);
    let ratio = spec.param("support_ratio");
    let n = run.trajectories.len();
    let alive = |i: usize| !run.trajectories[i].terminated();
    let first: Vec<usize> =
        (0..n).filter(|&i| alive(i) && run.final_label(i).is_some_and(|l| l.starts_with("psi1"))).collect();
    // the unexcited y factor lives in the second summand
    let other = fin
        .labels()
        .iter()
        .position(|l| l.starts_with("psi2"))
        .ok_or_else(|| Error::Scenario("eq44: second summand missing".into()))?;
    let mut exceptions = 0usize;
    for &i in &first {
        let q = &run.trajectories[i].final_config().coords;
        let b = run.trajectories[i].final_occupancy() as usize;
        let (y_own, y_max) = factor_support(fin, b, ys, q)?;
        let (y_other, _) = factor_support(fin, other, ys, q)?;
        let (w_own, w_max) = factor_support(fin, b, ws, q)?;
        let ok = y_own >= ratio * y_max && y_own > y_other && w_own >= ratio * w_max;
        exceptions += (!ok) as usize;
    }
    ch.record(spec, "final_occupancy_exceptions", exceptions as f64, "==");

    let mut lineage = 0usize;
    for i in (0..n).filter(|&i| alive(i)) {
        let labels: Vec<Option<&str>> = (0..run.trajectories[i].occupancy.len()).map(|k| run.label_at(i, k)).collect();
        let ok = labels.iter().all(Option::is_some)
            && labels.windows(2).all(|p| {
                let (a, b) = (p[0].unwrap(), p[1].unwrap());
                a == b || b.strip_prefix(a).is_some_and(|rest| rest.starts_with('/'))
            });
        lineage += (!ok) as usize;
    }
    ch.record(spec, "lineage_exceptions", lineage as f64, "==");

    let controls: Vec<usize> = (0..n)
        .filter(|&i| run.final_label(i).is_some_and(|l| l.starts_with("psi2")))
        .take(spec.param("control_count") as usize)
        .collect();
    let keep: Vec<usize> = first.iter().chain(&controls).copied().collect();
    let zrun = zeroed_rerun(spec, c, &run, &keep, &["psi2"])?;
    let coords: Vec<usize> = (0..reg.n_coords()).collect();
    let worst = if first.is_empty() {
        f64::NAN
    } else {
        (0..first.len()).map(|j| deviation(&run, keep[j], &zrun, j, &coords)).fold(0.0, f64::max)
    };
    ch.record(spec, "first_summand_unchanged", worst, "<");
    let ctrl = (first.len()..keep.len()).map(|j| deviation(&run, keep[j], &zrun, j, &coords)).fold(f64::INFINITY, f64::min);
    ch.record(spec, "control_changed", if controls.is_empty() { f64::NAN } else { ctrl }, ">");
    ch.metric("first_summand", first.len() as f64);
    ch.metric("x_inversions", no_crossing_check_by(&run.trajectories, |q| q[0]) as f64);
    Ok(run)
}

/// Meter momentum shift of an `n = 0` run with optional collapse and probe override.
fn meter_shift(
    spec: &ScenarioSpec,
    c: &Compiled,
    collapse_to: Option<&str>,
    probes: Option<Vec<(String, Vec<f64>)>>,
    schedule: Option<Schedule>,
) -> Result<(f64, f64)> {
    let meter = &spec.protective.as_ref().expect("protective scenario").meter;
    let prot = c.protective(spec, schedule, probes)?.expect("protective scenario");
    let mut plan = c.plan(spec, c.initial.clone(), Some(prot.clone()));
    if let Some(label) = collapse_to {
        plan.events = c.with_collapse(spec.events[0].time(), label);
    }
    let run = run_ensemble(&plan, 0, spec.seed)?;
    let shift = meter_momentum(&run.final_state, meter)? - meter_momentum(&c.initial, meter)?;
    Ok((shift, prot.record().quadrature))
}

fn discriminate(spec: &ScenarioSpec, c: &Compiled, captures: &[f64], ch: &mut Checks) -> Result<EnsembleRun> {
    let decl = spec.protective.as_ref().expect("protective scenario");
    let prot = c.protective(spec, None, None)?.expect("protective scenario");
    let mut plan = c.plan(spec, c.initial.clone(), Some(prot.clone()));
    plan.capture_times = captures.to_vec();
    let run = run_ensemble(&plan, spec.n, spec.seed)?;
    let before = meter_momentum(&c.initial, &decl.meter)?;
    let a = meter_momentum(&run.final_state, &decl.meter)? - before;
    let q = prot.record().quadrature;
    ch.metric("model_a_shift", a);
    ch.metric("predicted_shift", -q);
    ch.record(spec, "model_a_shift", (a + q).abs() / q.abs(), "<");

    let occ = spec.param("occupied") as usize;
    let occupied = format!("{}/a{occ}", spec.branches[occ].label);
    let (b, _) = meter_shift(spec, c, Some(&occupied), None, None)?;
    ch.metric("model_b_shift", b);
    ch.record(spec, "model_b_ratio", b.abs() / a.abs(), "<");

    let reg = c.initial.registry();
    let ms = reg.index(&decl.meter)?;
    let br = &c.initial.branches()[0];
    let sigma_p = momentum_variance(br.factors[br.factor_of(ms).unwrap()].field(), 0)?.sqrt();
    let z = (a - b).abs() / sigma_p;
    ch.metric("meter_momentum_spread", sigma_p);
    ch.metric("z_score", z);
    ch.record(spec, "z_score", z, ">");

    let probes = vec![("x".to_string(), vec![spec.param("control_x0")]), ("z".to_string(), vec![spec.param("control_z0")])];
    let (ac, _) = meter_shift(spec, c, None, Some(probes.clone()), None)?;
    let (bc, _) = meter_shift(spec, c, Some(&occupied), Some(probes), None)?;
    let scale = match spec.options.coeff_convention {
        CoeffConvention::Full => spec.branches[occ].weight,
        CoeffConvention::Bare => 1.0,
    };
    ch.metric("control_a_shift", ac);
    ch.metric("control_b_shift", bc);
    ch.record(spec, "control_occupied_probe", (ac - scale * bc).abs() / bc.abs(), "<");
    ch.metric("occupied_fraction", run.stats.fraction(&occupied));
    Ok(run)
}

fn empty_wave(spec: &ScenarioSpec, c: &Compiled, captures: &[f64], ch: &mut Checks) -> Result<EnsembleRun> {
    let decl = spec.protective.as_ref().expect("protective scenario");
    let prot = c.protective(spec, None, None)?.expect("protective scenario");
    let mut plan = c.plan(spec, c.initial.clone(), Some(prot.clone()));
    plan.capture_times = captures.to_vec();
    let run = run_ensemble(&plan, spec.n, spec.seed)?;
    let shift = meter_momentum(&run.final_state, &decl.meter)? - meter_momentum(&c.initial, &decl.meter)?;
    let q = prot.record().quadrature;
    ch.metric("meter_shift", shift);
    ch.metric("quadrature", q);
    ch.record(spec, "w_shift_consistency", (shift + q).abs(), "<");

    let (start, _) = decl.schedule.window().expect("coupled schedule");
    let k0 = run.frames.iter().position(|f| f.t >= start - 1e-9).unwrap_or(0);
    let alive: Vec<usize> = (0..run.trajectories.len()).filter(|&i| !run.trajectories[i].terminated()).collect();
    let same = alive
        .iter()
        .filter(|&&i| run.label_at(i, k0).is_some() && run.label_at(i, k0) == run.final_label(i))
        .count();
    let f = if alive.is_empty() { f64::NAN } else { same as f64 / alive.len() as f64 };
    ch.record(spec, "occupancy_unchanged", f, ">=");

    let (zero, _) = meter_shift(spec, c, None, None, Some(Schedule::Zero))?;
    ch.metric("zero_schedule_shift", zero);
    ch.record(spec, "zero_schedule_shift", zero.abs(), "<");
    Ok(run)
}
