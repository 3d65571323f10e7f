//! Piecewise-constant functions of time and exact integration over them.
//!
//! Every estimator integrand in this crate (Kaplan-Meier curves, weight
//! functions, their products) is constant between consecutive breakpoints of
//! the functions involved. Integrals are therefore evaluated exactly by
//! merging breakpoints into a partition and summing `width * value(midpoint)`.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Right-continuous step function on `[0, inf)`.
///
/// `value(t)` is the value at the largest breakpoint `<= t`, or
/// `initial_value` before the first breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    initial: f64,
}

impl StepFunction {
    pub fn new(initial: f64, breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "step function has {} breakpoints but {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("non-finite breakpoint".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            values,
            initial,
        })
    }

    /// Caller guarantees strictly increasing breakpoints of matching length.
    pub(crate) fn from_parts(initial: f64, breakpoints: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert_eq!(breakpoints.len(), values.len());
        debug_assert!(breakpoints.windows(2).all(|w| w[0] < w[1]));
        Self {
            breakpoints,
            values,
            initial,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::from_parts(value, Vec::new(), Vec::new())
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn initial_value(&self) -> f64 {
        self.initial
    }

    pub fn last_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(self.initial)
    }

    pub fn value(&self, t: f64) -> f64 {
        match self.breakpoints.partition_point(|&b| b <= t) {
            0 => self.initial,
            k => self.values[k - 1],
        }
    }

    /// Value strictly before `t`.
    pub fn left_limit(&self, t: f64) -> f64 {
        match self.breakpoints.partition_point(|&b| b < t) {
            0 => self.initial,
            k => self.values[k - 1],
        }
    }

    /// `value(t) - left_limit(t)`; nonzero only at breakpoints.
    pub fn jump(&self, t: f64) -> f64 {
        self.value(t) - self.left_limit(t)
    }

    /// Breakpoints in `(lo, hi]` together with the left limit and the value there.
    pub fn jumps_in(&self, lo: f64, hi: f64) -> impl Iterator<Item = Jump> + '_ {
        let start = self.breakpoints.partition_point(|&b| b <= lo);
        let end = self.breakpoints.partition_point(|&b| b <= hi);
        (start..end).map(move |k| Jump {
            time: self.breakpoints[k],
            before: if k == 0 {
                self.initial
            } else {
                self.values[k - 1]
            },
            after: self.values[k],
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(
            f(self.initial),
            self.breakpoints.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Pointwise combination of several step functions on the union of their
    /// breakpoints. Consecutive equal values are kept; the result is exact.
    pub fn combine(parts: &[&StepFunction], f: impl Fn(&[f64]) -> f64) -> Self {
        let mut knots: Vec<f64> = parts
            .iter()
            .flat_map(|p| p.breakpoints.iter().copied())
            .collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let mut args: Vec<f64> = parts.iter().map(|p| p.initial).collect();
        let initial = f(&args);
        let values = knots
            .iter()
            .map(|&t| {
                for (slot, p) in args.iter_mut().zip(parts) {
                    *slot = p.value(t);
                }
                f(&args)
            })
            .collect();
        Self::from_parts(initial, knots, values)
    }

    /// Tab-separated `t\tvalue` dump, one row per breakpoint preceded by `t = 0`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("t\tvalue\n");
        let _ = writeln!(out, "0\t{}", self.initial);
        for (t, v) in self.breakpoints.iter().zip(&self.values) {
            let _ = writeln!(out, "{t}\t{v}");
        }
        out
    }
}

/// Discontinuity of a step function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub before: f64,
    pub after: f64,
}

impl Jump {
    pub fn delta(&self) -> f64 {
        self.after - self.before
    }
}

/// Anything that is constant between the points it reports as breakpoints.
pub trait Piecewise {
    fn eval(&self, t: f64) -> f64;

    /// Append breakpoints lying strictly inside `(lo, hi)` to `out`.
    fn push_breaks(&self, lo: f64, hi: f64, out: &mut Vec<f64>);
}

impl Piecewise for StepFunction {
    fn eval(&self, t: f64) -> f64 {
        self.value(t)
    }

    fn push_breaks(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        let start = self.breakpoints.partition_point(|&b| b <= lo);
        let end = self.breakpoints.partition_point(|&b| b < hi);
        out.extend_from_slice(&self.breakpoints[start..end]);
    }
}

/// Sorted partition `lo = x0 < x1 < ... < xm = hi` containing every breakpoint
/// of `parts` inside `(lo, hi)`. Empty when `hi <= lo`.
pub fn partition(lo: f64, hi: f64, parts: &[&dyn Piecewise]) -> Vec<f64> {
    if !(hi > lo) {
        return Vec::new();
    }
    let mut pts = vec![lo];
    for p in parts {
        p.push_breaks(lo, hi, &mut pts);
    }
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Exact integral over `[lo, hi]` of a function that is constant on each cell
/// of `parts`' joint partition. `integrand` is sampled at cell midpoints.
pub fn integrate(
    lo: f64,
    hi: f64,
    parts: &[&dyn Piecewise],
    integrand: impl Fn(f64) -> f64,
) -> f64 {
    let pts = partition(lo, hi, parts);
    pts.windows(2)
        .map(|w| (w[1] - w[0]) * integrand(0.5 * (w[0] + w[1])))
        .sum()
}

/// `t -> int_t^upper h(u) du` for a piecewise-constant `h`; piecewise linear.
#[derive(Debug, Clone)]
pub struct TailIntegral {
    knots: Vec<f64>,
    /// `tail[k] = int_{knots[k]}^{upper} h`
    tail: Vec<f64>,
    /// value of `h` on `[knots[k], knots[k+1])`
    level: Vec<f64>,
    upper: f64,
}

impl TailIntegral {
    /// Tabulates the tail integral of `integrand` over `[lower, upper]`.
    pub fn new(
        lower: f64,
        upper: f64,
        parts: &[&dyn Piecewise],
        integrand: impl Fn(f64) -> f64,
    ) -> Self {
        let knots = partition(lower, upper, parts);
        let level: Vec<f64> = knots
            .windows(2)
            .map(|w| integrand(0.5 * (w[0] + w[1])))
            .collect();
        let mut tail = vec![0.0; knots.len()];
        for k in (0..level.len()).rev() {
            tail[k] = tail[k + 1] + (knots[k + 1] - knots[k]) * level[k];
        }
        Self {
            knots,
            tail,
            level,
            upper,
        }
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Zero at and beyond `upper`. Points below the tabulated range are clamped
    /// to the lower end.
    pub fn at(&self, t: f64) -> f64 {
        if t >= self.upper || self.knots.is_empty() {
            return 0.0;
        }
        let k = self.knots.partition_point(|&x| x <= t);
        if k == 0 {
            return self.tail[0];
        }
        let k = k - 1;
        self.tail[k + 1] + (self.knots[k + 1] - t) * self.level[k]
    }
}
