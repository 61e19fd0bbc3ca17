//! Discretized reservoir state space and tables sampled on it.
//!
//! Reservoir `j` is sampled at the `d_j` levels `0, dq_j, ..., Qbar_j`. States
//! are flattened row-major with the last reservoir varying fastest.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::scenario::Reservoir;

/// Relative tolerance under which a coordinate snaps to a grid node.
const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    levels: Vec<usize>,
    steps: Vec<f64>,
    capacities: Vec<f64>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(levels: &[usize], capacities: &[f64]) -> Result<Self> {
        if levels.len() != capacities.len() || levels.is_empty() {
            return Err(Error::Domain("grid needs one capacity per level count".into()));
        }
        if levels.iter().any(|&d| d < 2) {
            return Err(Error::Domain("every reservoir needs at least 2 levels".into()));
        }
        let steps = levels
            .iter()
            .zip(capacities)
            .map(|(&d, &cap)| cap / (d - 1) as f64)
            .collect();
        let mut strides = vec![1; levels.len()];
        for j in (0..levels.len() - 1).rev() {
            strides[j] = strides[j + 1] * levels[j + 1];
        }
        Ok(Grid {
            levels: levels.to_vec(),
            steps,
            capacities: capacities.to_vec(),
            strides,
        })
    }

    pub fn for_reservoirs(reservoirs: &[Reservoir]) -> Result<Self> {
        let levels: Vec<_> = reservoirs.iter().map(|r| r.level_count).collect();
        let caps: Vec<_> = reservoirs.iter().map(|r| r.capacity).collect();
        Grid::new(&levels, &caps)
    }

    pub fn dims(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    /// Total number of grid states, the product of the level counts.
    pub fn state_count(&self) -> usize {
        self.levels.iter().product()
    }

    /// Store of reservoir `j` at level `k`; the top level is exactly `Qbar`.
    pub fn level_store(&self, j: usize, k: usize) -> f64 {
        if k + 1 == self.levels[j] {
            self.capacities[j]
        } else {
            k as f64 * self.steps[j]
        }
    }

    pub fn coords(&self, mut index: usize) -> Vec<usize> {
        self.strides
            .iter()
            .map(|s| {
                let c = index / s;
                index %= s;
                c
            })
            .collect()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.strides).map(|(k, s)| k * s).sum()
    }

    pub fn stores(&self, index: usize) -> Vec<f64> {
        self.coords(index)
            .into_iter()
            .enumerate()
            .map(|(j, k)| self.level_store(j, k))
            .collect()
    }

    /// Interpolation weights of the grid nodes surrounding `stores`.
    ///
    /// Returns `(node index, weight)` pairs with nonzero weight; a query on a
    /// node yields that single node with weight one.
    pub fn stencil(&self, stores: &[f64]) -> Result<Vec<(usize, f64)>> {
        if stores.len() != self.dims() {
            return Err(Error::Domain(format!(
                "query has {} components, grid has {}",
                stores.len(),
                self.dims()
            )));
        }
        let mut out = vec![(0usize, 1.0f64)];
        for (j, &q) in stores.iter().enumerate() {
            let cap = self.capacities[j];
            let tol = SNAP * cap.max(1.0);
            if !(q >= -tol && q <= cap + tol) {
                return Err(Error::Domain(format!(
                    "store {q} of reservoir {j} outside [0, {cap}]"
                )));
            }
            let t = q.clamp(0.0, cap) / self.steps[j];
            let top = self.levels[j] - 1;
            let nearest = t.round();
            let stride = self.strides[j];
            if (t - nearest).abs() <= SNAP * t.max(1.0) {
                let k = (nearest as usize).min(top);
                for e in out.iter_mut() {
                    e.0 += k * stride;
                }
                continue;
            }
            let lo = (t.floor() as usize).min(top - 1);
            let frac = t - lo as f64;
            let mut next = Vec::with_capacity(out.len() * 2);
            for &(idx, w) in &out {
                next.push((idx + lo * stride, w * (1.0 - frac)));
                next.push((idx + (lo + 1) * stride, w * frac));
            }
            out = next;
        }
        Ok(out)
    }
}

/// `f_i` sampled on the grid; Markov models add an axis over the previous
/// inflow bin (`values[bin * D + state]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub stage: usize,
    pub bins: usize,
    pub values: Vec<f64>,
}

impl ValueTable {
    /// Slice for one previous-inflow bin (the whole table when `bins == 1`).
    pub fn layer(&self, bin: usize) -> &[f64] {
        let d = self.values.len() / self.bins;
        &self.values[bin * d..(bin + 1) * d]
    }
}

/// Minimizing control(s) per state; `width` controls per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub stage: usize,
    pub bins: usize,
    pub width: usize,
    pub controls: Vec<f64>,
}

impl PolicyTable {
    pub fn control(&self, entry: usize) -> &[f64] {
        &self.controls[entry * self.width..(entry + 1) * self.width]
    }

    pub fn entries(&self) -> usize {
        self.controls.len() / self.width
    }
}

/// Multilinear interpolation of grid values at `stores`.
pub fn value_at(values: &[f64], grid: &Grid, stores: &[f64]) -> Result<f64> {
    if values.len() != grid.state_count() {
        return Err(Error::Domain(format!(
            "table has {} entries, grid has {} states",
            values.len(),
            grid.state_count()
        )));
    }
    Ok(grid
        .stencil(stores)?
        .into_iter()
        .map(|(i, w)| w * values[i])
        .sum())
}

/// [`value_at`] that also counts queries landing off the grid nodes.
pub(crate) fn value_at_counted(
    values: &[f64],
    grid: &Grid,
    stores: &[f64],
    off_grid: &AtomicUsize,
) -> Result<f64> {
    let stencil = grid.stencil(stores)?;
    if stencil.len() > 1 {
        off_grid.fetch_add(1, Ordering::Relaxed);
    }
    Ok(stencil.into_iter().map(|(i, w)| w * values[i]).sum())
}

/// Candidate controls `0, step, 2 step, ...` up to `upper`, plus `upper`
/// itself when it falls between lattice points.
pub fn control_lattice(upper: f64, step: f64) -> Vec<f64> {
    if upper.is_nan() || upper <= 0.0 {
        return vec![0.0];
    }
    let ratio = upper / step;
    let count = (ratio + SNAP * ratio.max(1.0)).floor() as usize;
    let mut out: Vec<f64> = (0..=count).map(|k| (k as f64 * step).min(upper)).collect();
    let last = *out.last().unwrap();
    if upper - last > SNAP * step {
        out.push(upper);
    } else {
        *out.last_mut().unwrap() = upper.max(last);
    }
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn state_count_is_product_of_levels() {
        let g = Grid::new(&[5, 3, 4], &[4.0, 2.0, 3.0]).unwrap();
        assert_eq!(g.state_count(), 60);
        for i in 0..60 {
            assert_eq!(g.index(&g.coords(i)), i);
        }
        assert_eq!(g.stores(59), vec![4.0, 2.0, 3.0]);
        assert_eq!(g.stores(g.index(&[1, 1, 2])), vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn identity_at_nodes() {
        let g = Grid::new(&[4], &[3.0]).unwrap();
        let v = [7.0, 3.0, 2.0, 1.5];
        for k in 0..4 {
            assert_eq!(value_at(&v, &g, &[k as f64]).unwrap(), v[k]);
        }
    }

    #[test]
    fn midpoint_is_linear() {
        let g = Grid::new(&[2], &[1.0]).unwrap();
        assert_eq!(value_at(&[10.0, 20.0], &g, &[0.5]).unwrap(), 15.0);
    }

    #[test]
    fn out_of_range_is_domain_error() {
        let g = Grid::new(&[3], &[2.0]).unwrap();
        assert!(value_at(&[0.0; 3], &g, &[2.5]).is_err());
        assert!(value_at(&[0.0; 3], &g, &[-0.1]).is_err());
    }

    #[test]
    fn lattice_includes_off_lattice_bound() {
        assert_eq!(control_lattice(2.0, 1.0), vec![0.0, 1.0, 2.0]);
        assert_eq!(control_lattice(2.5, 1.0), vec![0.0, 1.0, 2.0, 2.5]);
        assert_eq!(control_lattice(0.0, 1.0), vec![0.0]);
        assert_eq!(control_lattice(0.4, 1.0), vec![0.0, 0.4]);
        assert_eq!(control_lattice(1.0, 1.0 / 3.0).len(), 4);
    }

    proptest! {
        #[test]
        fn reproduces_affine_functions(q1 in 0.0..4.0f64, q2 in 0.0..3.0f64) {
            let g = Grid::new(&[5, 4], &[4.0, 3.0]).unwrap();
            let values: Vec<f64> = (0..g.state_count())
                .map(|i| { let s = g.stores(i); s[0] + s[1] })
                .collect();
            let v = value_at(&values, &g, &[q1, q2]).unwrap();
            prop_assert!((v - (q1 + q2)).abs() < 1e-12);
        }

        #[test]
        fn interpolation_is_a_convex_combination(
            values in proptest::collection::vec(-50.0..50.0f64, 12),
            q1 in 0.0..2.0f64,
            q2 in 0.0..6.0f64,
        ) {
            let g = Grid::new(&[3, 4], &[2.0, 6.0]).unwrap();
            let v = value_at(&values, &g, &[q1, q2]).unwrap();
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
    }
}
