//! Grids, complex fields on them, Gaussian packets and unitary propagation.

pub(crate) mod spectral;
mod split;

pub use spectral::{derivative, momentum_expectation, momentum_variance, translate, wavenumbers};
pub use split::{split_step, Potential, SplitStep};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of edge cells inspected by the boundary-leak monitor.
pub const LEAK_CELLS: usize = 3;
/// Amplitude above which the boundary-leak monitor warns.
pub const LEAK_THRESHOLD: f64 = 1e-6;

/// One periodic axis: `n` points at `min + j·dx`, `dx = (max - min) / n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub n: usize,
    pub min: f64,
    pub max: f64,
}

impl Axis {
    pub fn new(n: usize, min: f64, max: f64) -> Result<Self> {
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n_points must be a power of two >= 16, got {n}"
            )));
        }
        if !(min.is_finite() && max.is_finite()) || max <= min {
            return Err(Error::InvalidGrid(format!(
                "degenerate interval [{min}, {max})"
            )));
        }
        Ok(Self { n, min, max })
    }

    pub fn dx(&self) -> f64 {
        (self.max - self.min) / self.n as f64
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn coord(&self, j: usize) -> f64 {
        self.min + j as f64 * self.dx()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.coord(j)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }

    /// Lower bracketing index and fractional offset for interpolation. The
    /// upper neighbour wraps periodically.
    fn bracket(&self, x: f64) -> (usize, usize, f64) {
        let s = (x - self.min) / self.dx();
        let i0 = (s.floor() as isize).clamp(0, self.n as isize - 1) as usize;
        let frac = (s - i0 as f64).clamp(0.0, 1.0);
        (i0, (i0 + 1) % self.n, frac)
    }
}

/// A 1D or 2D periodic grid. Values are stored row-major, the last axis
/// varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Axis>,
}

/// Builds a grid with identical axes.
pub fn make_grid(dims: usize, n: usize, x_min: f64, x_max: f64) -> Result<Grid> {
    if dims == 0 || dims > 2 {
        return Err(Error::InvalidGrid(format!("dims must be 1 or 2, got {dims}")));
    }
    let axis = Axis::new(n, x_min, x_max)?;
    Grid::from_axes(vec![axis; dims])
}

impl Grid {
    pub fn from_axes(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidGrid(format!(
                "dims must be 1 or 2, got {}",
                axes.len()
            )));
        }
        for a in &axes {
            Axis::new(a.n, a.min, a.max)?;
        }
        Ok(Self { axes })
    }

    pub fn line(n: usize, min: f64, max: f64) -> Result<Self> {
        Self::from_axes(vec![Axis::new(n, min, max)?])
    }

    /// Product of two grids whose combined dimension is at most 2.
    pub fn product(a: &Grid, b: &Grid) -> Result<Self> {
        let mut axes = a.axes.clone();
        axes.extend(b.axes.iter().cloned());
        Self::from_axes(axes)
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &Axis {
        &self.axes[i]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume element `Π dx`.
    pub fn dv(&self) -> f64 {
        self.axes.iter().map(Axis::dx).product()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n).collect()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dims() && self.axes.iter().zip(point).all(|(a, &x)| a.contains(x))
    }

    /// Coordinates of the flat index `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        match self.dims() {
            1 => vec![self.axes[0].coord(idx)],
            _ => {
                let n1 = self.axes[1].n;
                vec![self.axes[0].coord(idx / n1), self.axes[1].coord(idx % n1)]
            }
        }
    }
}

/// Complex amplitudes sampled on a [`Grid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexField {
    grid: Grid,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite { step: 0 });
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_parts(grid: Grid, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        Self::from_parts(grid, vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self::from_parts(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.dv()
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self::from_parts(self.grid.clone(), self.values.iter().map(|v| v * s).collect())
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidState(format!("cannot normalize field with norm² {n}")));
        }
        Ok(self.scaled(Complex64::new(1.0 / n.sqrt(), 0.0)))
    }

    /// Pointwise sum `a·self + b·other` on a shared grid.
    pub fn combine(&self, a: Complex64, other: &Self, b: Complex64) -> Result<Self> {
        same_grid(self, other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self::from_parts(self.grid.clone(), values))
    }

    /// Outer product of two 1D fields onto their 2D product grid.
    pub fn outer(a: &Self, b: &Self) -> Result<Self> {
        if a.grid.dims() != 1 || b.grid.dims() != 1 {
            return Err(Error::InvalidGrid("outer product needs two 1D fields".into()));
        }
        let grid = Grid::product(&a.grid, &b.grid)?;
        let mut values = Vec::with_capacity(grid.len());
        for va in &a.values {
            values.extend(b.values.iter().map(|vb| va * vb));
        }
        Ok(Self::from_parts(grid, values))
    }

    /// Largest amplitude within [`LEAK_CELLS`] cells of any grid edge.
    pub fn boundary_amplitude(&self) -> f64 {
        let shape = self.grid.shape();
        let near_edge = |j: usize, n: usize| j < LEAK_CELLS || j + LEAK_CELLS >= n;
        let mut worst = 0.0f64;
        for (idx, v) in self.values.iter().enumerate() {
            let edge = match shape.len() {
                1 => near_edge(idx, shape[0]),
                _ => near_edge(idx / shape[1], shape[0]) || near_edge(idx % shape[1], shape[1]),
            };
            if edge {
                worst = worst.max(v.norm());
            }
        }
        worst
    }

    pub fn leaks(&self) -> bool {
        self.boundary_amplitude() > LEAK_THRESHOLD
    }
}

fn same_grid(f: &ComplexField, g: &ComplexField) -> Result<()> {
    if f.grid != g.grid {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", f.grid.axes, g.grid.axes)));
    }
    Ok(())
}

/// `Σ conj(f)·g·dV`.
pub fn inner(f: &ComplexField, g: &ComplexField) -> Result<Complex64> {
    same_grid(f, g)?;
    let s: Complex64 = f.values.iter().zip(&g.values).map(|(a, b)| a.conj() * b).sum();
    Ok(s * f.grid.dv())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisjointnessReport {
    pub overlap_mass: f64,
    pub disjoint: bool,
}

/// `Σ |f||g|·dV`, with `disjoint` set when the mass is below `eps`.
pub fn support_overlap(f: &ComplexField, g: &ComplexField, eps: f64) -> Result<DisjointnessReport> {
    same_grid(f, g)?;
    let overlap_mass =
        f.values.iter().zip(&g.values).map(|(a, b)| a.norm() * b.norm()).sum::<f64>() * f.grid.dv();
    Ok(DisjointnessReport { overlap_mass, disjoint: overlap_mass < eps })
}

/// Multilinear interpolation of the field at `point`.
pub fn probe_amplitude(field: &ComplexField, point: &[f64]) -> Result<Complex64> {
    let grid = &field.grid;
    if !grid.contains(point) {
        return Err(Error::OutsideGrid { point: point.to_vec() });
    }
    Ok(interpolate(grid, &field.values, point))
}

/// Interpolates `values` (laid out on `grid`) without bounds checks beyond
/// clamping; callers check containment.
pub(crate) fn interpolate(grid: &Grid, values: &[Complex64], point: &[f64]) -> Complex64 {
    match grid.dims() {
        1 => {
            let (i0, i1, s) = grid.axes[0].bracket(point[0]);
            if s == 0.0 {
                return values[i0];
            }
            values[i0] * (1.0 - s) + values[i1] * s
        }
        _ => {
            let n1 = grid.axes[1].n;
            let (a0, a1, s) = grid.axes[0].bracket(point[0]);
            let (b0, b1, r) = grid.axes[1].bracket(point[1]);
            let v00 = values[a0 * n1 + b0];
            let v01 = values[a0 * n1 + b1];
            let v10 = values[a1 * n1 + b0];
            let v11 = values[a1 * n1 + b1];
            (v00 * (1.0 - r) + v01 * r) * (1.0 - s) + (v10 * (1.0 - r) + v11 * r) * s
        }
    }
}

/// Parameters of a 1D Gaussian packet
/// `(2πσ²)^(-1/4)·exp(-(x-c)²/4σ² + ikx)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacketSpec {
    pub center: f64,
    pub width: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default = "unit_mass")]
    pub mass: f64,
}

fn unit_mass() -> f64 {
    1.0
}

impl PacketSpec {
    pub fn new(center: f64, width: f64, momentum: f64) -> Self {
        Self { center, width, momentum, mass: 1.0 }
    }

    pub fn with_mass(mut self, mass: f64) -> Self {
        self.mass = mass;
        self
    }

    pub fn validate(&self, axis: &Axis) -> Result<()> {
        if !(self.width > 0.0) || !self.width.is_finite() {
            return Err(Error::InvalidPacket(format!("width must be positive, got {}", self.width)));
        }
        if !(self.mass > 0.0) {
            return Err(Error::InvalidPacket(format!("mass must be positive, got {}", self.mass)));
        }
        let lo = self.center - 5.0 * self.width;
        let hi = self.center + 5.0 * self.width;
        if lo < axis.min || hi > axis.max {
            return Err(Error::InvalidPacket(format!(
                "center ± 5σ = [{lo}, {hi}] outside [{}, {}]",
                axis.min, axis.max
            )));
        }
        Ok(())
    }

    /// Closed-form amplitude at `x`.
    pub fn amplitude(&self, x: f64) -> Complex64 {
        let s2 = self.width * self.width;
        let norm = (2.0 * std::f64::consts::PI * s2).powf(-0.25);
        let d = x - self.center;
        Complex64::from_polar(norm * (-d * d / (4.0 * s2)).exp(), self.momentum * x)
    }
}

/// Samples a Gaussian packet on a 1D grid and normalizes it on the grid.
pub fn gaussian_packet(grid: &Grid, spec: &PacketSpec) -> Result<ComplexField> {
    if grid.dims() != 1 {
        return Err(Error::InvalidGrid("gaussian_packet needs a 1D grid".into()));
    }
    let axis = grid.axis(0);
    spec.validate(axis)?;
    let tail = |x: f64| {
        let d = x - spec.center;
        (-d * d / (4.0 * spec.width * spec.width)).exp()
    };
    let ratio = tail(axis.min).max(tail(axis.max));
    if ratio > 1e-8 {
        return Err(Error::PacketLeak { ratio });
    }
    ComplexField::from_fn(grid.clone(), |p| spec.amplitude(p[0])).normalized()
}

/// Product of two 1D packets on a 2D grid.
pub fn gaussian_packet_2d(grid: &Grid, specs: [&PacketSpec; 2]) -> Result<ComplexField> {
    if grid.dims() != 2 {
        return Err(Error::InvalidGrid("gaussian_packet_2d needs a 2D grid".into()));
    }
    let a = gaussian_packet(&Grid::from_axes(vec![grid.axis(0).clone()])?, specs[0])?;
    let b = gaussian_packet(&Grid::from_axes(vec![grid.axis(1).clone()])?, specs[1])?;
    ComplexField::outer(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line() -> Grid {
        make_grid(1, 512, -20.0, 20.0).unwrap()
    }

    #[test]
    fn grid_spacing() {
        assert_eq!(line().axis(0).dx(), 0.078125);
        let g = make_grid(2, 128, -10.0, 10.0).unwrap();
        assert_eq!(g.shape(), vec![128, 128]);
        assert_eq!(g.axis(1).dx(), 0.15625);
        assert_eq!(g.point(129), vec![-10.0 + 0.15625, -10.0 + 0.15625]);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(make_grid(1, 8, 0.0, 1.0).is_err());
        assert!(make_grid(1, 48, 0.0, 1.0).is_err());
        assert!(make_grid(1, 64, 1.0, 1.0).is_err());
        assert!(make_grid(3, 64, 0.0, 1.0).is_err());
    }

    #[test]
    fn packet_normalization_and_peak() {
        let f = gaussian_packet(&line(), &PacketSpec::new(0.0, 1.0, 0.0)).unwrap();
        assert_relative_eq!(f.norm_sqr(), 1.0, epsilon = 1e-12);
        let peak = probe_amplitude(&f, &[0.0]).unwrap().norm_sqr();
        assert_relative_eq!(peak, (2.0 * std::f64::consts::PI).powf(-0.5), epsilon = 1e-10);
    }

    #[test]
    fn packet_rejects_leaks() {
        let g = line();
        assert!(matches!(
            gaussian_packet(&g, &PacketSpec::new(17.0, 1.0, 0.0)),
            Err(Error::InvalidPacket(_))
        ));
        // fits by the 5σ rule but not by the tail-amplitude rule
        assert!(matches!(
            gaussian_packet(&g, &PacketSpec::new(13.0, 1.0, 0.0)),
            Err(Error::PacketLeak { .. })
        ));
        assert!(gaussian_packet(&g, &PacketSpec::new(0.0, -1.0, 0.0)).is_err());
    }

    #[test]
    fn inner_product_properties() {
        let g = line();
        let f = gaussian_packet(&g, &PacketSpec::new(-1.0, 1.0, 0.5)).unwrap();
        let h = gaussian_packet(&g, &PacketSpec::new(1.5, 0.7, -1.0)).unwrap();
        assert_relative_eq!(inner(&f, &f).unwrap().re, 1.0, epsilon = 1e-10);
        let a = inner(&f, &h).unwrap();
        let b = inner(&h, &f).unwrap();
        assert_relative_eq!(a.re, b.re, epsilon = 1e-15);
        assert_relative_eq!(a.im, -b.im, epsilon = 1e-15);
    }

    #[test]
    fn separated_narrow_packets_are_orthogonal() {
        // closed form |<f|g>| = exp(-d²/8σ²) = exp(-50)
        let g = line();
        let f = gaussian_packet(&g, &PacketSpec::new(-5.0, 0.5, 0.0)).unwrap();
        let h = gaussian_packet(&g, &PacketSpec::new(5.0, 0.5, 0.0)).unwrap();
        assert!(inner(&f, &h).unwrap().norm() < 1e-12);
    }

    #[test]
    fn overlap_reports() {
        let g = make_grid(1, 1024, -40.0, 40.0).unwrap();
        let f = gaussian_packet(&g, &PacketSpec::new(-10.0, 1.0, 0.0)).unwrap();
        let same = support_overlap(&f, &f, 1e-6).unwrap();
        assert_relative_eq!(same.overlap_mass, 1.0, epsilon = 1e-12);
        assert!(!same.disjoint);
        let h = gaussian_packet(&g, &PacketSpec::new(10.0, 1.0, 0.0)).unwrap();
        assert!(support_overlap(&f, &h, 1e-6).unwrap().disjoint);

        let left = ComplexField::from_fn(g.clone(), |p| Complex64::new((p[0] < 0.0) as u8 as f64, 0.0));
        let right = ComplexField::from_fn(g.clone(), |p| Complex64::new((p[0] >= 0.0) as u8 as f64, 0.0));
        assert_eq!(support_overlap(&left, &right, 1e-6).unwrap().overlap_mass, 0.0);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let f = ComplexField::zeros(line());
        let h = ComplexField::zeros(make_grid(1, 256, -20.0, 20.0).unwrap());
        assert!(matches!(inner(&f, &h), Err(Error::GridMismatch(_))));
        assert!(support_overlap(&f, &h, 1e-6).is_err());
    }

    #[test]
    fn probe_interpolates() {
        let g = line();
        let f = gaussian_packet(&g, &PacketSpec::new(0.3, 1.0, 1.0)).unwrap();
        let x5 = g.axis(0).coord(5);
        assert_eq!(probe_amplitude(&f, &[x5]).unwrap(), f.values()[5]);
        let mid = x5 + 0.5 * g.axis(0).dx();
        let expect = (f.values()[5] + f.values()[6]) * 0.5;
        let got = probe_amplitude(&f, &[mid]).unwrap();
        assert_relative_eq!(got.re, expect.re, epsilon = 1e-15);
        assert_relative_eq!(got.im, expect.im, epsilon = 1e-15);
        assert!(probe_amplitude(&f, &[25.0]).is_err());
    }

    #[test]
    fn probe_center_of_unit_gaussian() {
        let f = gaussian_packet(&line(), &PacketSpec::new(0.0, 1.0, 0.0)).unwrap();
        let v = probe_amplitude(&f, &[0.0]).unwrap();
        assert!((v.re - (2.0 * std::f64::consts::PI).powf(-0.25)).abs() < 1e-4);
    }

    #[test]
    fn bilinear_probe_on_product() {
        let g2 = make_grid(2, 64, -10.0, 10.0).unwrap();
        let a = PacketSpec::new(0.0, 1.0, 0.0);
        let b = PacketSpec::new(0.5, 0.8, 0.0);
        let f = gaussian_packet_2d(&g2, [&a, &b]).unwrap();
        assert_relative_eq!(f.norm_sqr(), 1.0, epsilon = 1e-12);
        let p = g2.point(64 * 30 + 33);
        let v = probe_amplitude(&f, &p).unwrap();
        assert_eq!(v, f.values()[64 * 30 + 33]);
    }

    #[test]
    fn boundary_monitor() {
        let g = line();
        let f = gaussian_packet(&g, &PacketSpec::new(0.0, 1.0, 0.0)).unwrap();
        assert!(!f.leaks());
        let wide = ComplexField::from_fn(g, |_| Complex64::new(0.1, 0.0));
        assert!(wide.leaks());
    }
}
