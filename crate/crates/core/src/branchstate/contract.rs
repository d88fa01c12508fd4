//! Dense variable-elimination contraction over subsystem indices.
//!
//! Every subsystem is one index whose size is the number of points on its
//! grid. Branch overlaps, marginals and probe expectations all reduce to
//! summing products of factor tensors over shared indices, weighted by the
//! subsystem volume element.

use num_complex::Complex64;

use crate::{Error, Result};

/// Largest intermediate tensor the eliminator will build.
pub const CONTRACTION_BUDGET: usize = 1 << 24;

#[derive(Clone, Debug)]
pub struct Tensor {
    pub vars: Vec<usize>,
    pub dims: Vec<usize>,
    pub data: Vec<Complex64>,
}

impl Tensor {
    pub fn scalar(v: Complex64) -> Self {
        Self { vars: vec![], dims: vec![], data: vec![v] }
    }

    pub fn new(vars: Vec<usize>, dims: Vec<usize>, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { vars, dims, data }
    }

    pub fn conj(mut self) -> Self {
        self.data.iter_mut().for_each(|v| *v = v.conj());
        self
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.dims[i + 1];
        }
        s
    }
}

/// Multiplies `group` over the union of its indices and sums out `eliminate`
/// (if any) with weight `weight`.
fn combine(group: &[Tensor], eliminate: Option<usize>, weight: f64, dim_of: &dyn Fn(usize) -> usize) -> Result<Tensor> {
    let mut union: Vec<usize> = Vec::new();
    for t in group {
        for &v in &t.vars {
            if !union.contains(&v) {
                union.push(v);
            }
        }
    }
    // eliminated index last so the result index is a prefix
    if let Some(e) = eliminate {
        union.retain(|&v| v != e);
        union.push(e);
    }
    let udims: Vec<usize> = union.iter().map(|&v| dim_of(v)).collect();
    let total: usize = udims.iter().product();
    if total > CONTRACTION_BUDGET {
        return Err(Error::MemoryBudget(format!("contraction intermediate of {total} entries")));
    }
    let keep = if eliminate.is_some() { union.len() - 1 } else { union.len() };
    let inner = if eliminate.is_some() { *udims.last().unwrap() } else { 1 };
    let out_len = total / inner;

    // per tensor, stride of each union position
    let maps: Vec<Vec<usize>> = group
        .iter()
        .map(|t| {
            let st = t.strides();
            union
                .iter()
                .map(|u| t.vars.iter().position(|v| v == u).map_or(0, |p| st[p]))
                .collect()
        })
        .collect();

    let mut out = vec![Complex64::new(0.0, 0.0); out_len];
    let mut idx = vec![0usize; union.len()];
    let mut offs = vec![0usize; group.len()];
    for slot in out.iter_mut() {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..inner {
            if eliminate.is_some() {
                idx[keep] = j;
            }
            for (o, m) in offs.iter_mut().zip(&maps) {
                *o = idx.iter().zip(m).map(|(i, s)| i * s).sum();
            }
            let mut p = Complex64::new(1.0, 0.0);
            for (t, &o) in group.iter().zip(&offs) {
                p *= t.data[o];
            }
            acc += p;
        }
        *slot = if eliminate.is_some() { acc * weight } else { acc };
        // advance the kept multi-index
        for pos in (0..keep).rev() {
            idx[pos] += 1;
            if idx[pos] < udims[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }
    Ok(Tensor::new(union[..keep].to_vec(), udims[..keep].to_vec(), out))
}

/// Contracts `tensors` over every index not in `open`. `weight(v)` is the
/// volume element of index `v`, `dim(v)` its size. The result carries the
/// open indices in the order given.
pub fn contract(
    mut tensors: Vec<Tensor>,
    open: &[usize],
    weight: &dyn Fn(usize) -> f64,
    dim: &dyn Fn(usize) -> usize,
) -> Result<Tensor> {
    loop {
        let mut candidates: Vec<usize> = tensors.iter().flat_map(|t| t.vars.iter().copied()).collect();
        candidates.sort_unstable();
        candidates.dedup();
        candidates.retain(|v| !open.contains(v));
        if candidates.is_empty() {
            break;
        }
        // cheapest elimination first
        let cost = |v: usize| -> usize {
            let mut u: Vec<usize> = tensors
                .iter()
                .filter(|t| t.vars.contains(&v))
                .flat_map(|t| t.vars.iter().copied())
                .collect();
            u.sort_unstable();
            u.dedup();
            u.iter().map(|&x| dim(x)).product()
        };
        let v = *candidates.iter().min_by_key(|&&v| (cost(v), v)).unwrap();
        let (group, rest): (Vec<Tensor>, Vec<Tensor>) = tensors.into_iter().partition(|t| t.vars.contains(&v));
        let reduced = combine(&group, Some(v), weight(v), dim)?;
        tensors = rest;
        tensors.push(reduced);
    }
    let out = combine(&tensors, None, 1.0, dim)?;
    if out.vars == open {
        return Ok(out);
    }
    // reorder to the requested open order; an open index absent from every
    // tensor is broadcast
    let dims: Vec<usize> = open.iter().map(|&v| dim(v)).collect();
    let mut t = Tensor::new(open.to_vec(), dims.clone(), vec![Complex64::new(0.0, 0.0); dims.iter().product()]);
    let src_strides = out.strides();
    let dst_strides = t.strides();
    for flat in 0..t.data.len() {
        let mut rem = flat;
        let mut src = 0;
        for (k, &var) in open.iter().enumerate() {
            let i = rem / dst_strides[k];
            rem %= dst_strides[k];
            if let Some(p) = out.vars.iter().position(|&x| x == var) {
                src += i * src_strides[p];
            }
        }
        t.data[flat] = out.data[src];
    }
    Ok(t)
}
