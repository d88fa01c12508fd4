//! FFT helpers: axis transforms, spectral derivatives, exact translations and
//! momentum moments.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Axis, ComplexField, Grid};
use crate::{Error, Result};

type Plan = Arc<dyn Fft<f64>>;

fn plan(n: usize, inverse: bool) -> Plan {
    static PLANS: OnceLock<Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Plan>)>> = OnceLock::new();
    let cell = PLANS.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cell.lock().expect("fft plan cache poisoned");
    let (planner, cache) = &mut *guard;
    cache
        .entry((n, inverse))
        .or_insert_with(|| {
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

/// Angular wavenumbers in FFT order, `2π/L·(0, 1, …, n/2-1, -n/2, …, -1)`.
pub fn wavenumbers(axis: &Axis) -> Vec<f64> {
    let n = axis.n as isize;
    let dk = 2.0 * PI / axis.span();
    (0..n).map(|j| if j < n / 2 { j } else { j - n } as f64 * dk).collect()
}

/// Unnormalized in-place transform along `axis`.
pub(crate) fn fft_axis(values: &mut [Complex64], grid: &Grid, axis: usize, inverse: bool) {
    let shape = grid.shape();
    match (shape.len(), axis) {
        (1, 0) => plan(shape[0], inverse).process(values),
        (2, 1) => plan(shape[1], inverse).process(values),
        (2, 0) => {
            let (n0, n1) = (shape[0], shape[1]);
            let mut t = transpose(values, n0, n1);
            plan(n0, inverse).process(&mut t);
            let back = transpose(&t, n1, n0);
            values.copy_from_slice(&back);
        }
        _ => unreachable!("axis {axis} out of range for {}-D grid", shape.len()),
    }
}

fn transpose(v: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = v[r * cols + c];
        }
    }
    out
}

/// Forward transform over every axis.
pub(crate) fn fft_all(values: &mut [Complex64], grid: &Grid, inverse: bool) {
    for axis in (0..grid.dims()).rev() {
        fft_axis(values, grid, axis, inverse);
    }
    if inverse {
        let scale = 1.0 / grid.len() as f64;
        values.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Multiplies the transform along `axis` by `mult(k)` and transforms back.
fn spectral_multiply(field: &ComplexField, axis: usize, mult: impl Fn(f64, usize) -> Complex64) -> ComplexField {
    let grid = field.grid();
    let shape = grid.shape();
    let ks = wavenumbers(grid.axis(axis));
    let n_axis = shape[axis];
    let mut v = field.values().to_vec();
    fft_axis(&mut v, grid, axis, false);
    let inner = if axis + 1 < shape.len() { shape[axis + 1] } else { 1 };
    for (idx, val) in v.iter_mut().enumerate() {
        let j = (idx / inner) % n_axis;
        *val *= mult(ks[j], j);
    }
    fft_axis(&mut v, grid, axis, true);
    let scale = 1.0 / n_axis as f64;
    v.iter_mut().for_each(|x| *x *= scale);
    ComplexField::from_parts(grid.clone(), v)
}

/// Spectral first derivative along `axis`; the Nyquist mode is dropped.
pub fn derivative(field: &ComplexField, axis: usize) -> ComplexField {
    let n = field.grid().axis(axis).n;
    spectral_multiply(field, axis, |k, j| {
        if j == n / 2 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, k)
        }
    })
}

/// Exact band-limited translation `f(x) -> f(x - d)` along `axis`.
pub fn translate(field: &ComplexField, axis: usize, d: f64) -> ComplexField {
    if d == 0.0 {
        return field.clone();
    }
    let n = field.grid().axis(axis).n;
    spectral_multiply(field, axis, |k, j| {
        // keep the Nyquist mode real so real fields stay real
        if j == n / 2 {
            Complex64::new((k * d).cos(), 0.0)
        } else {
            Complex64::from_polar(1.0, -k * d)
        }
    })
}

fn momentum_moments(field: &ComplexField, axis: usize) -> (f64, f64, f64) {
    let grid = field.grid();
    let shape = grid.shape();
    let ks = wavenumbers(grid.axis(axis));
    let mut v = field.values().to_vec();
    fft_axis(&mut v, grid, axis, false);
    let inner = if axis + 1 < shape.len() { shape[axis + 1] } else { 1 };
    let (mut w, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (idx, val) in v.iter().enumerate() {
        let k = ks[(idx / inner) % shape[axis]];
        let p = val.norm_sqr();
        w += p;
        m1 += p * k;
        m2 += p * k * k;
    }
    (w, m1, m2)
}

/// `⟨p⟩` along `axis`, normalized by the field's own norm.
pub fn momentum_expectation(field: &ComplexField, axis: usize) -> Result<f64> {
    if axis >= field.grid().dims() {
        return Err(Error::InvalidGrid(format!("axis {axis} out of range")));
    }
    let (w, m1, _) = momentum_moments(field, axis);
    if w == 0.0 {
        return Err(Error::InvalidState("momentum of a zero field".into()));
    }
    Ok(m1 / w)
}

/// `⟨p²⟩ - ⟨p⟩²` along `axis`.
pub fn momentum_variance(field: &ComplexField, axis: usize) -> Result<f64> {
    if axis >= field.grid().dims() {
        return Err(Error::InvalidGrid(format!("axis {axis} out of range")));
    }
    let (w, m1, m2) = momentum_moments(field, axis);
    if w == 0.0 {
        return Err(Error::InvalidState("momentum of a zero field".into()));
    }
    let mean = m1 / w;
    Ok(m2 / w - mean * mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{gaussian_packet, make_grid, probe_amplitude, PacketSpec};

    #[test]
    fn packet_momentum_matches_k() {
        let g = make_grid(1, 512, -20.0, 20.0).unwrap();
        let f = gaussian_packet(&g, &PacketSpec::new(0.0, 1.0, 2.0)).unwrap();
        assert!((momentum_expectation(&f, 0).unwrap() - 2.0).abs() < 1e-8);
        // σ_p = 1/(2σ)
        assert!((momentum_variance(&f, 0).unwrap() - 0.25).abs() < 1e-8);
    }

    #[test]
    fn derivative_of_plane_wave() {
        let g = make_grid(1, 64, 0.0, 2.0 * PI).unwrap();
        let f = ComplexField::from_fn(g, |p| Complex64::from_polar(1.0, 3.0 * p[0]));
        let d = derivative(&f, 0);
        for (a, b) in d.values().iter().zip(f.values()) {
            let r = a / b;
            assert!((r - Complex64::new(0.0, 3.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn derivative_along_each_axis_of_2d_field() {
        let g = make_grid(2, 32, 0.0, 2.0 * PI).unwrap();
        let f = ComplexField::from_fn(g, |p| Complex64::from_polar(1.0, 2.0 * p[0] - 5.0 * p[1]));
        let d0 = derivative(&f, 0);
        let d1 = derivative(&f, 1);
        for i in 0..f.values().len() {
            assert!((d0.values()[i] / f.values()[i] - Complex64::new(0.0, 2.0)).norm() < 1e-10);
            assert!((d1.values()[i] / f.values()[i] - Complex64::new(0.0, -5.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn translation_is_exact_for_band_limited_packets() {
        let g = make_grid(1, 512, -20.0, 20.0).unwrap();
        let f = gaussian_packet(&g, &PacketSpec::new(-3.0, 0.8, 1.0)).unwrap();
        let moved = translate(&f, 0, 4.321);
        let expect = gaussian_packet(&g, &PacketSpec::new(1.321, 0.8, 1.0)).unwrap();
        // the plane-wave factor picks up a constant phase exp(-ik·d)
        let phase = Complex64::from_polar(1.0, -4.321);
        for x in [-1.0, 0.5, 1.321, 2.9] {
            let a = probe_amplitude(&moved, &[x]).unwrap();
            let b = probe_amplitude(&expect, &[x]).unwrap() * phase;
            assert!((a - b).norm() < 2e-3, "{x}: {a} vs {b}");
        }
        let err: f64 = moved
            .values()
            .iter()
            .zip(expect.values())
            .map(|(a, b)| (a - b * phase).norm_sqr())
            .sum::<f64>()
            * g.dv();
        assert!(err.sqrt() < 1e-10);
    }
}
