//! Pinned geometries for every scenario.

use std::collections::BTreeMap;

use super::{
    AssertionSpec, BranchDecl, EventDecl, PacketDecl, PathPredicate, ProtectiveDecl, ScenarioOptions, ScenarioSpec,
    SubsystemSpec,
};
use crate::interactions::Schedule;
use crate::{Error, Result};

/// One catalog line.
#[derive(Clone, Copy, Debug)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub anchor: &'static str,
    pub build: fn(&ScenarioOptions) -> Result<ScenarioSpec>,
}

/// Every scenario in a fixed order.
pub fn catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "fig1_two_slit",
            summary: "Two converging packets: an empty wave steers trajectories into an otherwise inaccessible region",
            anchor: "Fig. 1",
            build: fig1_two_slit,
        },
        CatalogEntry {
            name: "born_measurement",
            summary: "Impulsive measurement of a superposition; outcome frequencies follow the branch weights",
            anchor: "Eq. (2.1)",
            build: born_measurement,
        },
        CatalogEntry {
            name: "fig3a_overlap",
            summary: "Which-path detector on path 1, halted while the packets overlap",
            anchor: "Fig. 3(a)",
            build: fig3a_overlap,
        },
        CatalogEntry {
            name: "fig3b_swap",
            summary: "Which-path detector on path 1, packets allowed to pass through each other",
            anchor: "Fig. 3(b)",
            build: fig3b_swap,
        },
        CatalogEntry {
            name: "fig4_no_influence",
            summary: "A system coupled only to an empty branch leaves occupied-branch trajectories untouched",
            anchor: "Fig. 4, Eqs. (4.1)-(4.3)",
            build: fig4_no_influence,
        },
        CatalogEntry {
            name: "eq44_reversed_roles",
            summary: "Detector chain on the crossed-packet layout with a late coupling to the empty branch",
            anchor: "Eq. (4.4)",
            build: eq44_reversed_roles,
        },
        CatalogEntry {
            name: "protective_discriminate",
            summary: "Protective probe of an empty measurement branch, with and without collapse",
            anchor: "Eq. (5.2)",
            build: protective_discriminate,
        },
        CatalogEntry {
            name: "protective_empty_wave",
            summary: "Protective meter reads the empty wave while the system point stays put",
            anchor: "Eq. (5.3)",
            build: protective_empty_wave,
        },
    ]
}

/// Builds the named scenario.
pub fn lookup(name: &str, options: &ScenarioOptions) -> Result<ScenarioSpec> {
    let entry = catalog()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::Scenario(format!("unknown scenario {name:?}")))?;
    (entry.build)(options)
}

fn meta(name: &str) -> (String, String) {
    let e = catalog().into_iter().find(|e| e.name == name).expect("catalog entry");
    (e.summary.into(), e.anchor.into())
}

fn packet(name: &str, sub: &str, center: f64, width: f64, momentum: f64) -> PacketDecl {
    PacketDecl { name: name.into(), subsystem: sub.into(), center: vec![center], width: vec![width], momentum: vec![momentum] }
}

fn branch(label: &str, weight: f64, packets: &[&str]) -> BranchDecl {
    BranchDecl { label: label.into(), weight, phase: 0.0, packets: packets.iter().map(|p| p.to_string()).collect() }
}

fn check(name: &str, description: &str, threshold: f64) -> AssertionSpec {
    AssertionSpec { name: name.into(), description: description.into(), threshold }
}

fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn weights(options: &ScenarioOptions, default: &[f64], max: usize) -> Result<Vec<f64>> {
    let w = options.weights.clone().unwrap_or_else(|| default.to_vec());
    if w.len() < 2 || w.len() > max {
        return Err(Error::Scenario(format!("need between 2 and {max} outcome weights, got {}", w.len())));
    }
    if w.iter().any(|x| !(*x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Scenario(format!("outcome weights {w:?} must be non-negative and sum to 1")));
    }
    Ok(w)
}

fn no_weights(name: &str, options: &ScenarioOptions) -> Result<()> {
    if options.weights.is_some() {
        return Err(Error::Scenario(format!("{name} takes no outcome weights")));
    }
    Ok(())
}

pub fn fig1_two_slit(options: &ScenarioOptions) -> Result<ScenarioSpec> {
    no_weights("fig1_two_slit", options)?;
    let (summary, anchor) = meta("fig1_two_slit");
    // Frame moving with the beam: u is longitudinal, v transverse.
    Ok(ScenarioSpec {
        name: "fig1_two_slit".into(),
        summary,
        anchor,
        n: 1000,
        seed: 7,
        dt: 0.01,
        t_end: 4.0,
        record_every: 4,
        subsystems: vec![SubsystemSpec::line("u", 64, -20.0, 20.0, 1.0), SubsystemSpec::line("v", 2048, -32.0, 32.0, 1.0)],
        packets: vec![packet("beam", "u", 0.0, 1.0, 0.0), packet("psi1", "v", 11.5, 1.0, -4.0), packet("psi2", "v", -11.5, 1.0, 4.0)],
        branches: vec![branch("psi1", 0.5, &["beam", "psi1"]), branch("psi2", 0.5, &["beam", "psi2"])],
        events: vec![],
        protective: None,
        predicates: vec![PathPredicate {
            name: "side".into(),
            coord: "v".into(),
            time: 0.0,
            positive: "above".into(),
            negative: "below".into(),
        }],
        params: params(&[
            ("region_density_ratio", 1e-6),
            ("region_total_fraction", 0.1),
            ("node_depth", 0.05),
            ("overlap_time", 2.88),
            ("chi_square_bins", 20.0),
        ]),
        assertions: vec![
            check("screen_nodes", "nodes of the transverse density while the packets overlap", 1.0),
            check("region_r_width", "a region R exists where psi1 alone is negligible but the total density is large", 0.0),
            check("empty_wave_arrivals", "fraction of psi1-starting trajectories landing in R with psi2 present", 0.01),
            check("zeroed_arrivals", "trajectories landing in R with psi2 removed", 0.0),
            check("axis_crossings", "trajectories ending on the other side of the symmetry axis", 0.0),
            check("transverse_inversions", "order inversions of the transverse coordinate", 0.0),
            check("equivariance_p", "chi-square p-value of the screen positions against |psi|^2", 0.001),
        ],
        snapshot_times: vec![0.0, 4.0],
        plot_coord: "v".into(),
        options: options.clone(),
    })
}

pub fn born_measurement(options: &ScenarioOptions) -> Result<ScenarioSpec> {
    let (summary, anchor) = meta("born_measurement");
    let w = weights(options, &[0.36, 0.64], 4)?;
    let k = w.len();
    let mid = (k as f64 - 1.0) / 2.0;
    let mut packets: Vec<PacketDecl> =
        (0..k).map(|i| packet(&format!("o{i}"), "x", 14.0 * (i as f64 - mid), 1.0, 0.0)).collect();
    packets.push(packet("phi", "z", 0.0, 0.5, 0.0));
    let branches = (0..k).map(|i| branch(&format!("psi{i}"), w[i], &[&format!("o{i}"), "phi"])).collect();
    let mut assertions: Vec<AssertionSpec> = (0..k)
        .map(|i| {
            check(
                &format!("frequency_psi{i}"),
                &format!("|fraction - {}| in binomial standard deviations", w[i]),
                3.0,
            )
        })
        .collect();
    assertions.push(check("pointer_disjoint", "largest pointer overlap between outcome branches", 1e-6));
    assertions.push(check("equivariance_p", "chi-square p-value of final pointer positions against |psi|^2", 0.001));
    if options.collapse_comparator {
        assertions.push(check("collapse_comparator", "largest trajectory deviation after collapsing onto the occupied branch", 1e-6));
    }
    Ok(ScenarioSpec {
        name: "born_measurement".into(),
        summary,
        anchor,
        n: 10_000,
        seed: 42,
        dt: 0.01,
        t_end: 1.5,
        record_every: 5,
        subsystems: vec![SubsystemSpec::line("x", 512, -32.0, 32.0, 1.0), SubsystemSpec::line("z", 512, -32.0, 32.0, 10.0)],
        packets,
        branches,
        events: vec![EventDecl::Impulsive {
            t: 0.5,
            object: "x".into(),
            pointer: "z".into(),
            outcomes: (0..k).map(|i| format!("o{i}")).collect(),
            eigenvalues: (0..k).map(|i| i as f64 - mid).collect(),
            coupling: 10.0,
            duration: 1.0,
        }],
        protective: None,
        predicates: vec![],
        params: params(&[("chi_square_bins", 20.0)]),
        assertions,
        snapshot_times: vec![0.0, 1.5],
        plot_coord: "z".into(),
        options: options.clone(),
    })
}

fn fig3(name: &str, t_end: f64, expected_path: f64, options: &ScenarioOptions) -> Result<ScenarioSpec> {
    no_weights(name, options)?;
    let (summary, anchor) = meta(name);
    let mut assertions = vec![check(
        "excited_path",
        &format!("fraction of excited-detector trajectories that took path {expected_path}"),
        1.0,
    )];
    if expected_path == 2.0 {
        assertions.push(check(
            "detector_region_unexcited",
            "fraction of path-1 trajectories that end in the unexcited detector branch",
            1.0,
        ));
    }
    assertions.push(check("inference_exceptions", "trajectories whose detector reading misplaces x", 0.0));
    Ok(ScenarioSpec {
        name: name.into(),
        summary,
        anchor,
        n: 2000,
        seed: 11,
        dt: 0.01,
        t_end,
        record_every: 10,
        subsystems: vec![SubsystemSpec::line("x", 1024, -64.0, 64.0, 1.0), SubsystemSpec::line("y", 256, -16.0, 16.0, 100.0)],
        packets: vec![packet("psi1", "x", 12.0, 2.0, -3.0), packet("psi2", "x", -12.0, 2.0, 3.0), packet("phi", "y", 0.0, 0.5, 0.0)],
        branches: vec![branch("psi1", 0.5, &["psi1", "phi"]), branch("psi2", 0.5, &["psi2", "phi"])],
        events: vec![EventDecl::Detector {
            t: 1.0,
            object: "x".into(),
            detector: "y".into(),
            window: [0.0, 64.0],
            displacement: 6.0,
        }],
        protective: None,
        predicates: vec![PathPredicate {
            name: "path".into(),
            coord: "x".into(),
            time: 1.0,
            positive: "1".into(),
            negative: "2".into(),
        }],
        params: params(&[("expected_path", expected_path), ("support_ratio", 1e-6)]),
        assertions,
        snapshot_times: vec![0.0, t_end],
        plot_coord: "x".into(),
        options: options.clone(),
    })
}

pub fn fig3a_overlap(options: &ScenarioOptions) -> Result<ScenarioSpec> {
    fig3("fig3a_overlap", 4.0, 1.0, options)
}

pub fn fig3b_swap(options: &ScenarioOptions) -> Result<ScenarioSpec> {
    fig3("fig3b_swap", 8.0, 2.0, options)
}

pub fn fig4_no_influence(options: &ScenarioOptions) -> Result<ScenarioSpec> {
    no_weights("fig4_no_influence", options)?;
    let (summary, anchor) = meta("fig4_no_influence");
    Ok(ScenarioSpec {
        name: "fig4_no_influence".into(),
        summary,
        anchor,
        n: 1000,
        seed: 5,
        dt: 0.01,
        t_end: 2.0,
        record_every: 1,
        subsystems: vec![
            SubsystemSpec::line("x", 256, -24.0, 24.0, 1.0),
            SubsystemSpec::line("z", 256, -16.0, 16.0, 10.0),
            SubsystemSpec::line("w", 256, -16.0, 16.0, 1.0),
        ],
        packets: vec![
            packet("psi1", "x", 7.0, 1.0, 1.0),
            packet("psi2", "x", -7.0, 1.0, -1.0),
            packet("phi", "z", 0.0, 0.5, 0.0),
            packet("xi", "w", 0.0, 1.0, 0.0),
        ],
        branches: vec![branch("psi1", 0.5, &["psi1", "phi", "xi"]), branch("psi2", 0.5, &["psi2", "phi", "xi"])],
        events: vec![
            EventDecl::Impulsive {
                t: 0.5,
                object: "x".into(),
                pointer: "z".into(),
                outcomes: vec!["psi1".into(), "psi2".into()],
                eigenvalues: vec![1.0, 0.0],
                coupling: 6.0,
                duration: 1.0,
            },
            EventDecl::Pairwise { t: 1.0, target: "psi2/a1".into(), a: "x".into(), b: "w".into(), lambda: 0.5 },
        ],
        protective: None,
        predicates: vec![],
        params: params(&[("control_count", 5.0)]),
        assertions: vec![
            check("w_invisible", "largest |w_with - w_without| over first-summand trajectories", 1e-6),
            check("x_invisible", "largest |x_with - x_without| over first-summand trajectories", 1e-6),
            check("control_changed", "smallest deviation of control trajectories in the zeroed branch", 1e-2),
        ],
        snapshot_times: vec![0.0, 2.0],
        plot_coord: "w".into(),
        options: options.clone(),
    })
}

pub fn eq44_reversed_roles(options: &ScenarioOptions) -> Result<ScenarioSpec> {
    no_weights("eq44_reversed_roles", options)?;
    let (summary, anchor) = meta("eq44_reversed_roles");
    Ok(ScenarioSpec {
        name: "eq44_reversed_roles".into(),
        summary,
        anchor,
        n: 1000,
        seed: 13,
        dt: 0.02,
        t_end: 10.0,
        record_every: 5,
        subsystems: vec![
            SubsystemSpec::line("x", 1024, -64.0, 64.0, 1.0),
            SubsystemSpec::line("y", 256, -16.0, 16.0, 100.0),
            // pointers heavy enough to stay narrow, and disjoint, until the end
            SubsystemSpec::line("z", 256, -16.0, 16.0, 100.0),
            SubsystemSpec::line("w", 256, -16.0, 16.0, 10.0),
        ],
        packets: vec![
            // wider separation than fig3 so the summands stay disjoint to 1e-17
            packet("psi1", "x", 16.0, 2.0, -3.0),
            packet("psi2", "x", -16.0, 2.0, 3.0),
            packet("phi_y", "y", 0.0, 0.5, 0.0),
            packet("phi_z", "z", 0.0, 0.5, 0.0),
            packet("xi", "w", 0.0, 1.0, 0.0),
        ],
        branches: vec![
            branch("psi1", 0.5, &["psi1", "phi_y", "phi_z", "xi"]),
            branch("psi2", 0.5, &["psi2", "phi_y", "phi_z", "xi"]),
        ],
        events: vec![
            EventDecl::Detector { t: 1.0, object: "x".into(), detector: "y".into(), window: [0.0, 64.0], displacement: 6.0 },
            EventDecl::Detector { t: 9.0, object: "x".into(), detector: "z".into(), window: [-64.0, 0.0], displacement: 6.0 },
            EventDecl::Pairwise { t: 9.5, target: "psi2".into(), a: "x".into(), b: "w".into(), lambda: 0.5 },
        ],
        protective: None,
        predicates: vec![],
        params: params(&[("control_count", 5.0), ("support_ratio", 1e-6)]),
        assertions: vec![
            check("final_occupancy_exceptions", "first-summand trajectories with y outside phi' or w outside xi", 0.0),
            check("lineage_exceptions", "trajectories whose occupied branch switches lineage", 0.0),
            check("first_summand_unchanged", "largest coordinate deviation of first-summand trajectories with the second summand removed", 1e-6),
            check("control_changed", "smallest deviation of control trajectories in the removed summand", 1e-2),
        ],
        snapshot_times: vec![],
        plot_coord: "x".into(),
        options: options.clone(),
    })
}

pub fn protective_discriminate(options: &ScenarioOptions) -> Result<ScenarioSpec> {
    let (summary, anchor) = meta("protective_discriminate");
    let w = weights(options, &[0.36, 0.64], 2)?;
    // probe the branch the system is taken not to occupy
    let (a_prime, occupied) = (1usize, 0usize);
    let x = |a: usize| if a == 0 { -7.0 } else { 7.0 };
    let z = |a: usize| if a == 0 { -5.0 } else { 5.0 };
    Ok(ScenarioSpec {
        name: "protective_discriminate".into(),
        summary,
        anchor,
        n: 1000,
        seed: 3,
        dt: 0.01,
        t_end: 1.3,
        record_every: 5,
        subsystems: vec![
            SubsystemSpec::line("x", 256, -16.0, 16.0, 10.0),
            SubsystemSpec::line("z", 256, -16.0, 16.0, 10.0),
            SubsystemSpec::line("y", 512, -256.0, 256.0, 100.0),
        ],
        packets: vec![
            packet("o0", "x", -7.0, 0.5, 0.0),
            packet("o1", "x", 7.0, 0.5, 0.0),
            packet("phi", "z", 0.0, 0.5, 0.0),
            packet("meter", "y", 0.0, 25.0, 0.0),
        ],
        branches: vec![branch("psi0", w[0], &["o0", "phi", "meter"]), branch("psi1", w[1], &["o1", "phi", "meter"])],
        events: vec![EventDecl::Impulsive {
            t: 0.1,
            object: "x".into(),
            pointer: "z".into(),
            outcomes: vec!["o0".into(), "o1".into()],
            eigenvalues: vec![-0.5, 0.5],
            coupling: 10.0,
            duration: 1.0,
        }],
        protective: Some(ProtectiveDecl {
            meter: "y".into(),
            probes: vec![("x".into(), vec![x(a_prime)]), ("z".into(), vec![z(a_prime)])],
            schedule: Schedule::SinSquared { start: 0.2, duration: 1.0 },
        }),
        predicates: vec![],
        params: params(&[
            ("a_prime", a_prime as f64),
            ("occupied", occupied as f64),
            ("control_x0", x(occupied)),
            ("control_z0", z(occupied)),
        ]),
        assertions: vec![
            check("model_a_shift", "relative error of the no-collapse meter shift against -integral g<B> dt", 0.05),
            check("model_b_ratio", "collapse-model shift as a fraction of the no-collapse shift", 0.01),
            check("z_score", "shift difference in units of the meter momentum spread", 10.0),
            check("control_occupied_probe", "relative mismatch of the two models when probing the occupied branch", 0.01),
        ],
        snapshot_times: vec![],
        plot_coord: "y".into(),
        options: options.clone(),
    })
}

pub fn protective_empty_wave(options: &ScenarioOptions) -> Result<ScenarioSpec> {
    no_weights("protective_empty_wave", options)?;
    let (summary, anchor) = meta("protective_empty_wave");
    Ok(ScenarioSpec {
        name: "protective_empty_wave".into(),
        summary,
        anchor,
        n: 1000,
        seed: 17,
        dt: 0.01,
        t_end: 1.7,
        record_every: 1,
        subsystems: vec![
            SubsystemSpec::line("x", 256, -24.0, 24.0, 1.0),
            SubsystemSpec::line("z", 256, -16.0, 16.0, 10.0),
            SubsystemSpec::line("w", 256, -32.0, 32.0, 100.0),
        ],
        packets: vec![
            packet("psi1", "x", 7.0, 1.0, 1.0),
            packet("psi2", "x", -7.0, 1.0, -1.0),
            packet("phi", "z", 0.0, 0.5, 0.0),
            packet("xi", "w", 0.0, 2.0, 0.0),
        ],
        branches: vec![branch("psi1", 0.5, &["psi1", "phi", "xi"]), branch("psi2", 0.5, &["psi2", "phi", "xi"])],
        events: vec![EventDecl::Impulsive {
            t: 0.5,
            object: "x".into(),
            pointer: "z".into(),
            outcomes: vec!["psi1".into(), "psi2".into()],
            eigenvalues: vec![1.0, 0.0],
            coupling: 6.0,
            duration: 1.0,
        }],
        // the psi2 packet centre at mid-coupling
        protective: Some(ProtectiveDecl {
            meter: "w".into(),
            probes: vec![("x".into(), vec![-8.1]), ("z".into(), vec![0.0])],
            schedule: Schedule::SinSquared { start: 0.6, duration: 1.0 },
        }),
        predicates: vec![],
        params: params(&[]),
        assertions: vec![
            check("w_shift_consistency", "|meter momentum shift + recorded quadrature|", 1e-6),
            check("occupancy_unchanged", "fraction of trajectories whose occupied branch is the same before and after coupling", 1.0),
            check("zero_schedule_shift", "meter momentum shift with g = 0", 1e-10),
        ],
        snapshot_times: vec![],
        plot_coord: "x".into(),
        options: options.clone(),
    })
}
