//! Weight functions for the integrated survival difference.
//!
//! Data-driven weights are evaluated at left limits, `Q(t) = h(S(t-), G(t-))`,
//! so they are predictable with respect to the event history. A
//! [`WeightFunction`] stores `h` as a right-continuous step function and
//! evaluates it through [`StepFunction::left_limit`].

use serde::{Deserialize, Serialize};

use crate::dataset::{Arm, StudyConfig, TrialDataset};
use crate::error::{Error, Result};
use crate::km;
use crate::step::{Piecewise, StepFunction};

/// Exponents and options of `Q(t) = C(t-)^eta * S(t-)^rho * (1 - S(t-))^gamma * f(t)`.
///
/// `C` is the pooled censoring estimate, or the Pepe-Fleming weight
/// `n G0 G1 / (n0 G0 + n1 G1)` when `use_vc` is set (so `eta = 0.5` gives its
/// square root). `f` is `a` before `tau_b` and `1 - a` from `tau_b` on when
/// `piecewise_a` is set, otherwise 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct WeightSpec {
    pub eta: f64,
    pub rho: f64,
    pub gamma: f64,
    pub piecewise_a: Option<f64>,
    pub use_vc: bool,
}

impl WeightSpec {
    pub fn new(eta: f64, rho: f64, gamma: f64) -> Self {
        Self {
            eta,
            rho,
            gamma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta", self.eta), ("rho", self.rho), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if let Some(a) = self.piecewise_a {
            if !(0.0..0.5).contains(&a) {
                return Err(Error::Config(format!(
                    "piecewise weight a must lie in [0, 0.5), got {a}"
                )));
            }
        }
        Ok(())
    }
}

/// `base^e` with `0^0 = 1`.
pub fn pow0(base: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        base.powf(e)
    }
}

/// Two-level emphasis `a` on `[0, tau_b)`, `1 - a` on `[tau_b, inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevel {
    pub a: f64,
    pub tau_b: f64,
}

impl TwoLevel {
    pub fn factor(&self, t: f64) -> f64 {
        if t < self.tau_b {
            self.a
        } else {
            1.0 - self.a
        }
    }
}

/// Nonnegative piecewise-constant weight `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFunction {
    steps: StepFunction,
    emphasis: Option<TwoLevel>,
}

impl WeightFunction {
    /// Weight whose value at `t` is `steps.left_limit(t)`.
    pub fn from_left_limits(steps: StepFunction) -> Self {
        Self {
            steps,
            emphasis: None,
        }
    }

    pub fn constant(v: f64) -> Self {
        Self::from_left_limits(StepFunction::constant(v))
    }

    pub fn with_emphasis(mut self, emphasis: Option<TwoLevel>) -> Self {
        self.emphasis = emphasis;
        self
    }

    pub fn value(&self, t: f64) -> f64 {
        let base = self.steps.left_limit(t);
        match &self.emphasis {
            Some(e) => base * e.factor(t),
            None => base,
        }
    }

    /// Underlying right-continuous step function `h`.
    pub fn steps(&self) -> &StepFunction {
        &self.steps
    }

    pub fn breakpoint_count(&self) -> usize {
        self.steps.breakpoints().len() + usize::from(self.emphasis.is_some())
    }

    pub fn sqrt(&self) -> Self {
        Self {
            steps: self.steps.map(f64::sqrt),
            emphasis: self.emphasis.map(|e| TwoLevel { a: e.a.sqrt(), ..e }),
        }
    }
}

impl Piecewise for WeightFunction {
    fn eval(&self, t: f64) -> f64 {
        self.value(t)
    }

    fn push_breaks(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        self.steps.push_breaks(lo, hi, out);
        if let Some(e) = &self.emphasis {
            if e.tau_b > lo && e.tau_b < hi {
                out.push(e.tau_b);
            }
        }
    }
}

/// `S(t-)^rho (1 - S(t-))^gamma` from a pooled survival estimate.
pub fn fh_weight(s_pooled: &StepFunction, rho: f64, gamma: f64) -> WeightFunction {
    WeightFunction::from_left_limits(s_pooled.map(|s| pow0(s, rho) * pow0(1.0 - s, gamma)))
}

/// Pepe-Fleming weight `n G0(t-) G1(t-) / (n0 G0(t-) + n1 G1(t-))` from the
/// per-arm censoring estimates. Fails if the denominator vanishes before
/// `horizon`; beyond `horizon` such points are set to 0.
pub fn vc_weight(ds: &TrialDataset, horizon: f64) -> Result<WeightFunction> {
    let g = Arm::BOTH.map(|arm| {
        let (t, e) = ds.columns(arm);
        km::censoring_km(&t, &e)
    });
    let [g0, g1] = g;
    vc_from_censoring(ds, &g0?, &g1?, horizon)
}

pub(crate) fn vc_from_censoring(
    ds: &TrialDataset,
    g0: &StepFunction,
    g1: &StepFunction,
    horizon: f64,
) -> Result<WeightFunction> {
    let steps = vc_steps(ds, g0, g1);
    // the weight at t reads the step value at breakpoints < t
    for (&t, &v) in steps.breakpoints().iter().zip(steps.values()) {
        if t < horizon && v.is_nan() {
            return Err(Error::SupportExhausted(t));
        }
    }
    Ok(WeightFunction::from_left_limits(steps.map(|v| {
        if v.is_nan() {
            0.0
        } else {
            v
        }
    })))
}

fn vc_steps(ds: &TrialDataset, g0: &StepFunction, g1: &StepFunction) -> StepFunction {
    let n0 = ds.n(Arm::Control) as f64;
    let n1 = ds.n(Arm::Treatment) as f64;
    let n = n0 + n1;
    StepFunction::combine(&[g0, g1], |g| {
        let den = n0 * g[0] + n1 * g[1];
        if den > 0.0 {
            n * g[0] * g[1] / den
        } else {
            f64::NAN
        }
    })
}

/// `Y(t-) / n`, the pooled fraction still at risk, normalised so that it stays
/// bounded as the sample grows.
pub fn at_risk_weight(ds: &TrialDataset) -> WeightFunction {
    let n = ds.n_total() as f64;
    let mut times: Vec<f64> = ds.records().iter().map(|r| r.time).collect();
    times.sort_by(f64::total_cmp);
    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut i = 0;
    while i < times.len() {
        let t = times[i];
        while i < times.len() && times[i] == t {
            i += 1;
        }
        knots.push(t);
        values.push((times.len() - i) as f64 / n);
    }
    // fraction with time > t is right-continuous; its left limit is Y(t)/n
    WeightFunction::from_left_limits(StepFunction::from_parts(1.0, knots, values))
}

/// Builds the weight from precomputed pooled and per-arm curves.
pub(crate) fn assemble_q(
    ds: &TrialDataset,
    cfg: &StudyConfig,
    s_pooled: &StepFunction,
    g_pooled: &StepFunction,
    g_arms: [&StepFunction; 2],
) -> Result<WeightFunction> {
    let spec = &cfg.weights;
    let censoring = if spec.use_vc {
        vc_from_censoring(ds, g_arms[0], g_arms[1], cfg.tau)?
            .steps()
            .clone()
    } else {
        g_pooled.clone()
    };
    let (eta, rho, gamma) = (spec.eta, spec.rho, spec.gamma);
    let steps = StepFunction::combine(&[&censoring, s_pooled], |v| {
        pow0(v[0], eta) * pow0(v[1], rho) * pow0(1.0 - v[1], gamma)
    });
    let emphasis = spec.piecewise_a.map(|a| TwoLevel {
        a,
        tau_b: cfg.tau_b,
    });
    Ok(WeightFunction::from_left_limits(steps).with_emphasis(emphasis))
}

/// `Q(t) = C(t-)^eta S(t-)^rho (1 - S(t-))^gamma f(t)` from pooled estimates.
pub fn build_q(ds: &TrialDataset, cfg: &StudyConfig) -> Result<WeightFunction> {
    cfg.weights.validate()?;
    let (s, g) = km::pooled_km(ds)?;
    let g_arms = Arm::BOTH.map(|arm| {
        let (t, e) = ds.columns(arm);
        km::censoring_km(&t, &e).expect("arms hold at least two subjects")
    });
    assemble_q(ds, cfg, &s, &g, [&g_arms[0], &g_arms[1]])
}
