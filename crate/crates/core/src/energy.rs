//! Water-to-energy conversion through a tabulated head curve.
//!
//! The energy produced by releasing `u` over a period of `tau` days samples
//! the head at the end of each day while the store moves linearly from
//! `Q` towards `Q + x - u`:
//!
//! ```text
//! N = 9.8 * eta * sum_{t=1..tau} H(min(Q + t * (x - u) / tau, Qbar)) * u / tau
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gravitational constant folded into the energy formula.
pub const GRAVITY: f64 = 9.8;

/// Tabulated head `H(Q)` of a reservoir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadCurve {
    #[serde(rename = "eta")]
    pub efficiency: f64,
    #[serde(rename = "H_max")]
    pub max_head: f64,
    /// `(store, head)` pairs with stores strictly increasing from zero.
    pub points: Vec<[f64; 2]>,
}

impl HeadCurve {
    pub fn new(efficiency: f64, max_head: f64, points: Vec<[f64; 2]>) -> Self {
        HeadCurve {
            efficiency,
            max_head,
            points,
        }
    }

    pub(crate) fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            out.push(format!("efficiency {} must lie in (0, 1]", self.efficiency));
        }
        if self.points.len() < 2 {
            out.push("at least two points are required".into());
            return out;
        }
        if self.points[0][0] != 0.0 {
            out.push("first point must be at store 0".into());
        }
        if self.points.windows(2).any(|w| w[0][0] >= w[1][0]) {
            out.push("stores must be strictly increasing".into());
        }
        if self.points.windows(2).any(|w| w[0][1] > w[1][1]) {
            out.push("heads must be non-decreasing".into());
        }
        if self.points.iter().any(|p| p[1] < 0.0 || p[1] > self.max_head) {
            out.push(format!("heads must lie in [0, H_max = {}]", self.max_head));
        }
        out
    }
}

/// Head at `store`, linear between tabulated points and flat past the last.
pub fn head_at(curve: &HeadCurve, store: f64) -> Result<f64> {
    if store.is_nan() || store < 0.0 {
        return Err(Error::Domain(format!("negative store {store}")));
    }
    let pts = &curve.points;
    let last = pts[pts.len() - 1];
    if store >= last[0] {
        return Ok(last[1].min(curve.max_head));
    }
    // first index whose store exceeds the query
    let hi = pts.partition_point(|p| p[0] <= store);
    let (a, b) = (pts[hi - 1], pts[hi]);
    let t = (store - a[0]) / (b[0] - a[0]);
    Ok((a[1] + t * (b[1] - a[1])).min(curve.max_head))
}

/// Energy obtained from releasing `release` during one period of `tau_days`
/// days, starting from `start_store` with `inflow` arriving uniformly.
pub fn energy_of_release(
    curve: &HeadCurve,
    start_store: f64,
    inflow: f64,
    release: f64,
    capacity: f64,
    tau_days: usize,
) -> Result<f64> {
    if tau_days == 0 {
        return Err(Error::Domain("period must span at least one day".into()));
    }
    if release.is_nan() || release < 0.0 || release > start_store + inflow {
        return Err(Error::Domain(format!(
            "release {release} outside [0, {}]",
            start_store + inflow
        )));
    }
    if release == 0.0 {
        return Ok(0.0);
    }
    let tau = tau_days as f64;
    let daily = release / tau;
    let drift = (inflow - release) / tau;
    let mut total = 0.0;
    for t in 1..=tau_days {
        let store = (start_store + t as f64 * drift).min(capacity).max(0.0);
        total += head_at(curve, store)? * daily;
    }
    Ok(GRAVITY * curve.efficiency * total)
}

/// Energy-equivalent of a water volume: the energy of turbining `volume`
/// out of a store that holds exactly that volume.
pub fn energy_content(curve: &HeadCurve, volume: f64, capacity: f64, tau_days: usize) -> Result<f64> {
    energy_of_release(curve, volume, 0.0, volume, capacity.max(volume), tau_days)
}
