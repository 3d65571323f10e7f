//! Kernel estimate of the joint hazard of dying while being a responder,
//! `lambda_XT(t) dt = P(X = 1, t <= T < t + dt | T >= t)`.
//!
//! The estimate smooths the responder event increments `dN_X(u) / Y(u)` with
//! an Epanechnikov kernel and a single global bandwidth. Within one bandwidth
//! of either window edge the kernel is replaced by the linear boundary kernel
//! `K(z) (c0 + c1 z)` whose zeroth and first moments over the truncated
//! support are 1 and 0. Negative values produced by boundary kernels are
//! clipped to zero.

use crate::dataset::{Arm, TrialDataset};
use crate::error::{Error, Result};

pub const GRID_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bandwidth {
    /// One eighth of the window length.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HazardEstimate {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
    /// The requested bandwidth exceeded the window and was halved to fit.
    pub shrunk: bool,
}

impl HazardEstimate {
    /// Trapezoidal integral of `weight(t) * lambda(t)` over the grid.
    pub fn integrate_weighted(&self, weight: impl Fn(f64) -> f64) -> f64 {
        let f: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.values)
            .map(|(&t, &v)| if v == 0.0 { 0.0 } else { weight(t) * v })
            .collect();
        self.grid
            .windows(2)
            .zip(f.windows(2))
            .map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1]))
            .sum()
    }

    pub fn integral(&self) -> f64 {
        self.integrate_weighted(|_| 1.0)
    }

    /// Linear interpolation on the grid; 0 outside it.
    pub fn value_at(&self, t: f64) -> f64 {
        let (lo, hi) = (self.grid[0], *self.grid.last().unwrap());
        if t < lo || t > hi {
            return 0.0;
        }
        let k = self
            .grid
            .partition_point(|&g| g <= t)
            .clamp(1, self.grid.len() - 1);
        let (t0, t1) = (self.grid[k - 1], self.grid[k]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        self.values[k - 1] * (1.0 - w) + self.values[k] * w
    }
}

fn epanechnikov(z: f64) -> f64 {
    if z.abs() <= 1.0 {
        0.75 * (1.0 - z * z)
    } else {
        0.0
    }
}

/// Integrals of `z^j K(z)` over `[l, u]` for `j = 0, 1, 2`.
fn moments(l: f64, u: f64) -> [f64; 3] {
    let m0 = |z: f64| 0.75 * (z - z.powi(3) / 3.0);
    let m1 = |z: f64| 0.75 * (z * z / 2.0 - z.powi(4) / 4.0);
    let m2 = |z: f64| 0.75 * (z.powi(3) / 3.0 - z.powi(5) / 5.0);
    [m0(u) - m0(l), m1(u) - m1(l), m2(u) - m2(l)]
}

/// Coefficients `(c0, c1)` of the linear boundary kernel on `[l, u]`.
fn boundary_coefficients(l: f64, u: f64) -> (f64, f64) {
    if l <= -1.0 && u >= 1.0 {
        return (1.0, 0.0);
    }
    let [m0, m1, m2] = moments(l, u);
    let det = m0 * m2 - m1 * m1;
    (m2 / det, -m1 / det)
}

/// Joint responder hazard of one arm on `window = (lo, hi)`, evaluated on
/// [`GRID_POINTS`] equally spaced points.
pub fn hazard_xt(
    ds: &TrialDataset,
    arm: Arm,
    window: (f64, f64),
    bandwidth: Bandwidth,
) -> Result<HazardEstimate> {
    let (lo, hi) = window;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::InvalidInput(format!(
            "hazard window [{lo}, {hi}] is empty"
        )));
    }
    let len = hi - lo;
    let (mut b, mut shrunk) = match bandwidth {
        Bandwidth::Auto => (len / 8.0, false),
        Bandwidth::Fixed(b) if b.is_finite() && b > 0.0 => (b, false),
        Bandwidth::Fixed(b) => {
            return Err(Error::Config(format!(
                "bandwidth must be positive, got {b}"
            )))
        }
    };
    if b > len {
        log::warn!(
            "bandwidth {b} exceeds hazard window length {len}; using {}",
            len / 2.0
        );
        b = len / 2.0;
        shrunk = true;
    }

    let mut times: Vec<(f64, bool)> = ds
        .arm(arm)
        .map(|r| (r.time, r.event && r.responder))
        .collect();
    times.sort_by(|a, b| a.0.total_cmp(&b.0));

    // increments dN_X(u) / Y(u) at distinct responder event times in the window
    let mut increments: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < times.len() {
        let t = times[i].0;
        let at_risk = times.len() - i;
        let mut d = 0usize;
        while i < times.len() && times[i].0 == t {
            d += usize::from(times[i].1);
            i += 1;
        }
        if d > 0 && t >= lo && t <= hi {
            increments.push((t, d as f64 / at_risk as f64));
        }
    }

    let step = len / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|k| {
            if k == GRID_POINTS - 1 {
                hi
            } else {
                lo + k as f64 * step
            }
        })
        .collect();
    let values = grid
        .iter()
        .map(|&t| {
            // z = (t - u) / b ranges over [(t - hi) / b, (t - lo) / b]
            let l = ((t - hi) / b).max(-1.0);
            let u = ((t - lo) / b).min(1.0);
            let (c0, c1) = boundary_coefficients(l, u);
            let first = increments.partition_point(|&(x, _)| x < t - b);
            let est: f64 = increments[first..]
                .iter()
                .take_while(|&&(x, _)| x <= t + b)
                .map(|&(x, inc)| {
                    let z = (t - x) / b;
                    epanechnikov(z) * (c0 + c1 * z) * inc
                })
                .sum::<f64>()
                / b;
            est.max(0.0)
        })
        .collect();

    Ok(HazardEstimate {
        grid,
        values,
        bandwidth: b,
        shrunk,
    })
}
