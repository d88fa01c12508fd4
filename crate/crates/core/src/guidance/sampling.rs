//! |Ψ₀|² sampling on the grid and goodness-of-fit helpers.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::branchstate::BranchState;
use crate::fields::Axis;
use crate::{Error, Result};

/// Trapezoid cumulative distribution of a density sampled on an axis.
#[derive(Clone, Debug)]
pub struct GridCdf {
    x0: f64,
    dx: f64,
    cum: Vec<f64>,
}

impl GridCdf {
    pub fn new(axis: &Axis, density: &[f64]) -> Result<Self> {
        if density.len() != axis.n {
            return Err(Error::GridMismatch(format!("density has {} points, axis {}", density.len(), axis.n)));
        }
        let dx = axis.dx();
        let mut cum = Vec::with_capacity(density.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in density.windows(2) {
            acc += 0.5 * (w[0].max(0.0) + w[1].max(0.0)) * dx;
            cum.push(acc);
        }
        if !(acc > 0.0) || !acc.is_finite() {
            return Err(Error::InvalidState("density has no mass to sample".into()));
        }
        Ok(Self { x0: axis.min, dx, cum })
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Point whose cumulative probability is `u ∈ [0, 1]`, inverting the
    /// cumulative linearly within each cell.
    pub fn inverse(&self, u: f64) -> f64 {
        let target = u.clamp(0.0, 1.0) * self.total();
        let j = self.cum.partition_point(|&c| c <= target).clamp(1, self.cum.len() - 1) - 1;
        let (c0, c1) = (self.cum[j], self.cum[j + 1]);
        let frac = if c1 > c0 { ((target - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.0 };
        self.x0 + (j as f64 + frac) * self.dx
    }

    /// Cumulative probability at `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        let s = (x - self.x0) / self.dx;
        if s <= 0.0 {
            return 0.0;
        }
        let j = s.floor() as usize;
        if j + 1 >= self.cum.len() {
            return 1.0;
        }
        let frac = s - j as f64;
        (self.cum[j] + frac * (self.cum[j + 1] - self.cum[j])) / self.total()
    }
}

enum Marginal {
    Line { offset: usize, cdf: GridCdf },
    /// 2D subsystem: axis-0 marginal, then the axis-1 conditional
    /// interpolated between neighbouring rows.
    Plane { offset: usize, rows: GridCdf, density: Arc<Vec<f64>>, a0: Axis, a1: Axis },
}

/// Draws independent configurations from a product initial state.
pub struct InitialSampler {
    marginals: Vec<Marginal>,
    n_coords: usize,
}

impl InitialSampler {
    /// Accepts states that are products over subsystems: every factor covers a
    /// single subsystem and branches differ in at most one subsystem.
    pub fn new(state: &BranchState) -> Result<Self> {
        let reg = state.registry();
        let branches = state.branches();
        if branches.iter().any(|b| b.factors.iter().any(|f| f.subsystems().len() != 1)) {
            return Err(Error::EntangledInitialState);
        }
        let mut varying = 0;
        for s in 0..reg.len() {
            let first = &branches[0].factors[branches[0].factor_of(s).unwrap()];
            let differs = branches.iter().any(|b| {
                let f = &b.factors[b.factor_of(s).unwrap()];
                !Arc::ptr_eq(f, first) && **f != **first
            });
            varying += differs as usize;
        }
        if varying > 1 {
            return Err(Error::EntangledInitialState);
        }
        let mut marginals = Vec::with_capacity(reg.len());
        for (i, sub) in reg.subsystems().iter().enumerate() {
            let rho = state.marginal_density(&sub.name)?;
            let offset = reg.offset(i);
            match sub.grid.dims() {
                1 => marginals.push(Marginal::Line { offset, cdf: GridCdf::new(sub.grid.axis(0), &rho)? }),
                _ => {
                    let (a0, a1) = (sub.grid.axis(0).clone(), sub.grid.axis(1).clone());
                    let rows: Vec<f64> = rho.chunks(a1.n).map(|r| r.iter().sum::<f64>() * a1.dx()).collect();
                    marginals.push(Marginal::Plane {
                        offset,
                        rows: GridCdf::new(&a0, &rows)?,
                        density: Arc::new(rho),
                        a0,
                        a1,
                    });
                }
            }
        }
        Ok(Self { marginals, n_coords: reg.n_coords() })
    }

    /// Configuration number `index` of the stream seeded by `seed`; the
    /// result does not depend on how many others are drawn.
    pub fn draw(&self, seed: u64, index: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let mut q = vec![0.0; self.n_coords];
        for m in &self.marginals {
            match m {
                Marginal::Line { offset, cdf } => q[*offset] = cdf.inverse(rng.random()),
                Marginal::Plane { offset, rows, density, a0, a1 } => {
                    let u = rows.inverse(rng.random());
                    let s = ((u - a0.min) / a0.dx()).clamp(0.0, (a0.n - 1) as f64);
                    let i0 = s.floor() as usize;
                    let i1 = (i0 + 1).min(a0.n - 1);
                    let w = s - i0 as f64;
                    let row: Vec<f64> = (0..a1.n)
                        .map(|j| (1.0 - w) * density[i0 * a1.n + j] + w * density[i1 * a1.n + j])
                        .collect();
                    let cond = GridCdf::new(a1, &row).expect("row inside the sampled support has mass");
                    q[*offset] = u;
                    q[*offset + 1] = cond.inverse(rng.random());
                }
            }
        }
        q
    }
}

/// `n` independent draws from `|Ψ₀|²`, deterministic in `seed`.
pub fn sample_initial(state: &BranchState, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let sampler = InitialSampler::new(state)?;
    Ok((0..n as u64).map(|i| sampler.draw(seed, i)).collect())
}

/// Outcome of a chi-square goodness-of-fit test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub counts: Vec<usize>,
}

/// Chi-square test of `samples` against `cdf` over `bins` equiprobable bins.
pub fn chi_square_equiprobable(samples: &[f64], cdf: &GridCdf, bins: usize) -> Result<ChiSquare> {
    if bins < 2 || samples.is_empty() {
        return Err(Error::InvalidState("chi-square needs samples and at least two bins".into()));
    }
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let b = ((cdf.cdf(x) * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let expect = samples.len() as f64 / bins as f64;
    let statistic: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    let dof = bins - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidState(e.to_string()))?;
    Ok(ChiSquare { statistic, dof, p_value: 1.0 - dist.cdf(statistic), counts })
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `samples` and `cdf`.
pub fn ks_distance(samples: &[f64], cdf: &GridCdf) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branchstate::{Branch, Factor, Registry, Subsystem};
    use crate::fields::{gaussian_packet, gaussian_packet_2d, make_grid, ComplexField, Grid, PacketSpec};
    use num_complex::Complex64;

    fn gaussian_state(c: f64, s: f64) -> BranchState {
        let g = make_grid(1, 512, -20.0, 20.0).unwrap();
        let reg = Registry::new(vec![Subsystem::new("x", g.clone(), 1.0)]).unwrap();
        let f = gaussian_packet(&g, &PacketSpec::new(c, s, 0.0)).unwrap();
        BranchState::product(reg.clone(), vec![Factor::new(&reg, &["x"], f).unwrap()], "psi").unwrap()
    }

    #[test]
    fn gaussian_moments_within_standard_errors() {
        let n = 10_000;
        let (c, s) = (1.5, 1.2);
        let xs: Vec<f64> = sample_initial(&gaussian_state(c, s), n, 7).unwrap().into_iter().map(|q| q[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let rn = (n as f64).sqrt();
        assert!((mean - c).abs() < 4.0 * s / rn, "mean {mean}");
        assert!((var - s * s).abs() < 4.0 * 2f64.sqrt() * s * s / rn, "var {var}");
    }

    #[test]
    fn ks_distance_below_one_percent_critical_value() {
        let n = 10_000;
        let st = gaussian_state(-2.0, 0.8);
        let xs: Vec<f64> = sample_initial(&st, n, 11).unwrap().into_iter().map(|q| q[0]).collect();
        let g = st.registry().get(0).grid.clone();
        let cdf = GridCdf::new(g.axis(0), &st.marginal_density("x").unwrap()).unwrap();
        assert!(ks_distance(&xs, &cdf) < 1.63 / (n as f64).sqrt());
        let chi = chi_square_equiprobable(&xs, &cdf, 20).unwrap();
        assert!(chi.p_value > 0.001);
    }

    #[test]
    fn same_seed_is_bit_identical_and_streams_are_independent_of_n() {
        let st = gaussian_state(0.0, 1.0);
        let a = sample_initial(&st, 100, 42).unwrap();
        let b = sample_initial(&st, 100, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_initial(&st, 10, 42).unwrap();
        assert_eq!(&a[..10], &c[..]);
        assert_ne!(a, sample_initial(&st, 100, 43).unwrap());
    }

    #[test]
    fn entangled_state_is_rejected() {
        let g = make_grid(1, 32, -10.0, 10.0).unwrap();
        let reg = Registry::new(vec![Subsystem::new("x", g.clone(), 1.0), Subsystem::new("w", g.clone(), 1.0)]).unwrap();
        let joint = ComplexField::from_fn(Grid::product(&g, &g).unwrap(), |p| {
            Complex64::new((-(p[0] * p[0]) / 2.0 - (p[1] - p[0]).powi(2) / 2.0).exp(), 0.0)
        });
        let st = BranchState::product(reg.clone(), vec![Factor::new(&reg, &["x", "w"], joint).unwrap()], "j").unwrap();
        assert_eq!(sample_initial(&st, 1, 0).unwrap_err(), Error::EntangledInitialState);

        // branches differing in two subsystems are not a product either
        let p = |c| gaussian_packet(&g, &PacketSpec::new(c, 0.7, 0.0)).unwrap();
        let b = |c: f64, l: &str| {
            Branch::new(
                Complex64::new(0.5f64.sqrt(), 0.0),
                vec![Factor::new(&reg, &["x"], p(c)).unwrap(), Factor::new(&reg, &["w"], p(c)).unwrap()],
                l,
            )
        };
        let st = BranchState::new(reg.clone(), vec![b(-2.0, "a"), b(2.0, "b")]).unwrap();
        assert_eq!(sample_initial(&st, 1, 0).unwrap_err(), Error::EntangledInitialState);
    }

    #[test]
    fn plane_sampling_follows_both_marginals() {
        let g = make_grid(2, 64, -12.0, 12.0).unwrap();
        let reg = Registry::new(vec![Subsystem::new("r", g.clone(), 1.0)]).unwrap();
        let f = gaussian_packet_2d(&g, [&PacketSpec::new(2.0, 1.0, 0.0), &PacketSpec::new(-1.0, 0.5, 0.0)]).unwrap();
        let st = BranchState::product(reg.clone(), vec![Factor::new(&reg, &["r"], f).unwrap()], "p").unwrap();
        let n = 10_000;
        let qs = sample_initial(&st, n, 3).unwrap();
        let m0 = qs.iter().map(|q| q[0]).sum::<f64>() / n as f64;
        let m1 = qs.iter().map(|q| q[1]).sum::<f64>() / n as f64;
        let rn = (n as f64).sqrt();
        assert!((m0 - 2.0).abs() < 4.0 / rn && (m1 + 1.0).abs() < 4.0 * 0.5 / rn, "{m0} {m1}");
    }
}
