//! Order-inversion counting for the 1D no-crossing property.

use super::Trajectory;

/// Number of pairs `i < j` with `v[i] > v[j]`, by merge sort.
pub fn count_inversions(v: &[f64]) -> u64 {
    fn sort(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
        let n = v.len();
        if n < 2 {
            return 0;
        }
        let mid = n / 2;
        let mut inv = sort(&mut v[..mid], buf) + sort(&mut v[mid..], buf);
        buf.clear();
        let (mut i, mut j) = (0, mid);
        while i < mid && j < n {
            if v[j] < v[i] {
                inv += (mid - i) as u64;
                buf.push(v[j]);
                j += 1;
            } else {
                buf.push(v[i]);
                i += 1;
            }
        }
        buf.extend_from_slice(&v[i..mid]);
        buf.extend_from_slice(&v[j..n]);
        v.copy_from_slice(buf);
        inv
    }
    let mut w = v.to_vec();
    sort(&mut w, &mut Vec::with_capacity(v.len()))
}

/// Order inversions of `proj(q)` relative to the initial ordering, summed over
/// every stored record. Trajectories that stopped early drop out of later
/// records.
pub fn no_crossing_check_by(trajectories: &[Trajectory], proj: impl Fn(&[f64]) -> f64) -> u64 {
    let mut order: Vec<usize> = (0..trajectories.len()).filter(|&i| !trajectories[i].samples.is_empty()).collect();
    order.sort_by(|&a, &b| {
        proj(&trajectories[a].samples[0].coords).total_cmp(&proj(&trajectories[b].samples[0].coords))
    });
    let frames = trajectories.iter().map(|t| t.samples.len()).max().unwrap_or(0);
    let mut total = 0;
    for k in 1..frames {
        let row: Vec<f64> = order
            .iter()
            .filter_map(|&i| trajectories[i].samples.get(k).map(|c| proj(&c.coords)))
            .collect();
        total += count_inversions(&row);
    }
    total
}

/// [`no_crossing_check_by`] on the first coordinate.
pub fn no_crossing_check(trajectories: &[Trajectory]) -> u64 {
    no_crossing_check_by(trajectories, |q| q[0])
}
