//! The combined binary + survival statistic, its component scores, variance
//! and covariance estimators, and the noncentrality under local alternatives.
//!
//! Component scores (group 1 minus group 0):
//!
//! ```text
//! U_b = sqrt(n0 n1 / n) (p1 - p0)
//! U_s = sqrt(n0 n1 / n) int_{tau0}^{tau} Q(t) (S1(t) - S0(t)) dt
//! L   = w_b U_b / sigma_b + w_s U_s / sigma_s
//! Var = w_b^2 + w_s^2 + 2 w_b w_s rho,   rho = sigma_bs / (sigma_b sigma_s)
//! ```
//!
//! and `z = L / sqrt(Var)` is referred to the standard normal (one-sided,
//! large `z` favours group 1).
//!
//! The pooled survival variance uses the factor
//! `(n0 G0(t-) + n1 G1(t-)) / (n G0(t-) G1(t-))`, i.e. `sum_i (1 - pi_i) / G_i`,
//! which keeps the estimate O(1) and consistent for the limiting variance.
//! The unpooled estimators plug per-arm curves into the same expressions.

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::dataset::{
    Arm, CovarianceForm, Strictness, StudyConfig, SubjectRecord, TrialDataset, ValidationReport,
    VarianceMode,
};
use crate::error::{Error, Result};
use crate::kernelhaz::{self, Bandwidth, HazardEstimate};
use crate::km;
use crate::quad;
use crate::step::{self, StepFunction, TailIntegral};
use crate::weights::{self, WeightFunction};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub u_b: f64,
    pub u_s: f64,
    pub sigma_b_hat: f64,
    pub sigma_s_hat: f64,
    pub sigma_bs_hat: f64,
    pub rho_hat: f64,
    pub l_stat: f64,
    pub var_l: f64,
    pub z: f64,
    pub p_value: f64,
    pub variance_mode: VarianceMode,
    pub p_hat: [f64; 2],
}

/// Upper-tail standard normal probability.
pub fn upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Kaplan-Meier curves shared by all estimators.
#[derive(Debug, Clone)]
pub struct Curves {
    pub survival: [StepFunction; 2],
    pub censoring: [StepFunction; 2],
    pub responder_survival: [Option<StepFunction>; 2],
    pub pooled_survival: StepFunction,
    pub pooled_censoring: StepFunction,
}

impl Curves {
    pub fn new(ds: &TrialDataset) -> Result<Self> {
        let mut survival = Vec::with_capacity(2);
        let mut censoring = Vec::with_capacity(2);
        let mut responder_survival = Vec::with_capacity(2);
        for arm in Arm::BOTH {
            let (t, e) = ds.columns(arm);
            let tallies = km::tally(&t, &e)?;
            survival.push(km::survival_from_tally(&tallies));
            censoring.push(km::censoring_from_tally(&tallies));
            let (t, e) = ds.responder_columns(arm);
            responder_survival.push(if t.is_empty() {
                None
            } else {
                Some(km::km_estimate(&t, &e)?)
            });
        }
        let (pooled_survival, pooled_censoring) = km::pooled_km(ds)?;
        let pair = |v: Vec<StepFunction>| -> [StepFunction; 2] { v.try_into().expect("two arms") };
        Ok(Self {
            survival: pair(survival),
            censoring: pair(censoring),
            responder_survival: responder_survival.try_into().expect("two arms"),
            pooled_survival,
            pooled_censoring,
        })
    }

    pub fn validation(
        &self,
        ds: &TrialDataset,
        tau: f64,
        strictness: Strictness,
    ) -> ValidationReport {
        ValidationReport::from_curves(
            ds,
            tau,
            strictness,
            [&self.survival[0], &self.survival[1]],
            [&self.censoring[0], &self.censoring[1]],
            [
                self.responder_survival[0].as_ref(),
                self.responder_survival[1].as_ref(),
            ],
        )
    }
}

fn root_n(ds: &TrialDataset) -> f64 {
    let n0 = ds.n(Arm::Control) as f64;
    let n1 = ds.n(Arm::Treatment) as f64;
    (n0 * n1 / (n0 + n1)).sqrt()
}

/// `(U_b, p0, p1)`.
pub fn u_binary(ds: &TrialDataset) -> (f64, f64, f64) {
    let p0 = ds.p_hat(Arm::Control);
    let p1 = ds.p_hat(Arm::Treatment);
    (root_n(ds) * (p1 - p0), p0, p1)
}

fn integrated_difference(
    ds: &TrialDataset,
    s: [&StepFunction; 2],
    tau0: f64,
    tau: f64,
    q: &WeightFunction,
) -> f64 {
    let integral = step::integrate(tau0, tau, &[q, s[0], s[1]], |t| {
        q.value(t) * (s[1].value(t) - s[0].value(t))
    });
    root_n(ds) * integral
}

/// `U_s` for weight `q` over `[tau0, tau]`. Fails when `tau` lies beyond the
/// last observation of both arms.
pub fn u_survival(ds: &TrialDataset, tau0: f64, tau: f64, q: &WeightFunction) -> Result<f64> {
    let reach = ds.max_time(Arm::Control).max(ds.max_time(Arm::Treatment));
    if tau > reach {
        return Err(Error::AssumptionAt(format!(
            "tau = {tau} lies beyond the last observation ({reach}) of both groups"
        )));
    }
    let s = Arm::BOTH.map(|arm| {
        let (t, e) = ds.columns(arm);
        km::km_estimate(&t, &e)
    });
    let [s0, s1] = s;
    Ok(integrated_difference(ds, [&s0?, &s1?], tau0, tau, q))
}

/// `K(t) = int_t^{tau_star} Q(u) S(u) du`, exact; zero for `t >= tau_star`.
pub fn k_hat(q: &WeightFunction, s_pooled: &StepFunction, t: f64, tau_star: f64) -> f64 {
    step::integrate(t, tau_star, &[q, s_pooled], |u| {
        q.value(u) * s_pooled.value(u)
    })
}

fn tail_of(q: &WeightFunction, s: &StepFunction, lo: f64, hi: f64) -> TailIntegral {
    TailIntegral::new(lo, hi, &[q, s], |u| q.value(u) * s.value(u))
}

/// Variance of the binary score.
pub fn sigma_b2_hat(ds: &TrialDataset, mode: VarianceMode) -> Result<f64> {
    let v = match mode {
        VarianceMode::Pooled => {
            let p = ds.p_hat_pooled();
            p * (1.0 - p)
        }
        VarianceMode::Unpooled => Arm::BOTH
            .iter()
            .map(|&arm| {
                let p = ds.p_hat(arm);
                (1.0 - ds.pi_hat(arm)) * p * (1.0 - p)
            })
            .sum(),
    };
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::DegenerateVariance(
            "responder proportion is 0 or 1".into(),
        ))
    }
}

/// `sum over jumps u of s in (lo, hi]` of `-K(u)^2 / (S(u) S(u-)) * factor(u) * dS(u)`.
/// `factor` is infinite where a censoring estimate is exhausted. With
/// `lenient`, terms with a vanishing denominator are dropped instead of
/// raising an error.
fn product_limit_variance(
    s: &StepFunction,
    k: &TailIntegral,
    lo: f64,
    hi: f64,
    lenient: bool,
    factor: impl Fn(f64) -> f64,
) -> Result<f64> {
    let mut total = 0.0;
    for jump in s.jumps_in(lo, hi) {
        let kv = k.at(jump.time);
        if kv == 0.0 {
            continue;
        }
        if jump.after <= 0.0 {
            if lenient {
                continue;
            }
            return Err(Error::AssumptionAt(format!(
                "survival estimate reaches 0 at t = {} inside the window",
                jump.time
            )));
        }
        let f = factor(jump.time);
        if !f.is_finite() {
            if lenient {
                continue;
            }
            return Err(Error::SupportExhausted(jump.time));
        }
        total -= kv * kv / (jump.after * jump.before) * f * jump.delta();
    }
    Ok(total)
}

fn sigma_s2(
    ds: &TrialDataset,
    curves: &Curves,
    tau0: f64,
    tau: f64,
    q: &WeightFunction,
    mode: VarianceMode,
    lenient: bool,
) -> Result<f64> {
    match mode {
        VarianceMode::Pooled => {
            let s = &curves.pooled_survival;
            let k = tail_of(q, s, tau0, tau);
            let n0 = ds.n(Arm::Control) as f64;
            let n1 = ds.n(Arm::Treatment) as f64;
            let [g0, g1] = &curves.censoring;
            product_limit_variance(s, &k, tau0, tau, lenient, |t| {
                let (a, b) = (g0.left_limit(t), g1.left_limit(t));
                if a > 0.0 && b > 0.0 {
                    (n0 * a + n1 * b) / ((n0 + n1) * a * b)
                } else {
                    f64::INFINITY
                }
            })
        }
        VarianceMode::Unpooled => {
            let mut total = 0.0;
            for arm in Arm::BOTH {
                let i = arm.index();
                let s = &curves.survival[i];
                let g = &curves.censoring[i];
                let k = tail_of(q, s, tau0, tau);
                let v =
                    product_limit_variance(s, &k, tau0, tau, lenient, |t| 1.0 / g.left_limit(t))?;
                total += (1.0 - ds.pi_hat(arm)) * v;
            }
            Ok(total)
        }
    }
}

/// Variance of the survival score for weight `q` over `[tau0, tau]`.
pub fn sigma_s2_hat(
    ds: &TrialDataset,
    tau0: f64,
    tau: f64,
    q: &WeightFunction,
    mode: VarianceMode,
) -> Result<f64> {
    sigma_s2(ds, &Curves::new(ds)?, tau0, tau, q, mode, false)
}

/// One arm's (or the pooled) contribution to the covariance estimate.
struct CovarianceInputs<'a> {
    survival: &'a StepFunction,
    p: f64,
}

fn sigma_bs(
    ds: &TrialDataset,
    curves: &Curves,
    cfg: &StudyConfig,
    q: &WeightFunction,
    hazards: Option<&[HazardEstimate; 2]>,
    mode: VarianceMode,
    lenient: bool,
) -> Result<f64> {
    if cfg.covariance == CovarianceForm::RiskSet {
        return Ok(sigma_bs_risk_set(ds, curves, cfg, q, mode));
    }
    let (tau0, tau_b, tau) = (cfg.tau0, cfg.tau_b, cfg.tau);
    let tau_max = cfg.tau_max();
    let weight = |arm: Arm| 1.0 - ds.pi_hat(arm);

    let drop_term = |inp: &CovarianceInputs, k: &TailIntegral, lo: f64, hi: f64| -> Result<f64> {
        let mut total = 0.0;
        for jump in inp.survival.jumps_in(lo, hi) {
            let kv = k.at(jump.time);
            if kv == 0.0 {
                continue;
            }
            if jump.after <= 0.0 {
                if lenient {
                    continue;
                }
                return Err(Error::AssumptionAt(format!(
                    "survival estimate reaches 0 at t = {}",
                    jump.time
                )));
            }
            total -= kv * inp.p * jump.delta() / jump.after;
        }
        Ok(total)
    };
    let responder_term =
        |inp: &CovarianceInputs, k: &TailIntegral, sx: &StepFunction| -> Result<f64> {
            let mut total = 0.0;
            for jump in sx.jumps_in(tau_max, tau) {
                let kv = k.at(jump.time);
                if kv == 0.0 {
                    continue;
                }
                if jump.after <= 0.0 {
                    if lenient {
                        continue;
                    }
                    return Err(Error::AssumptionAt(format!(
                        "responder survival estimate reaches 0 at t = {}",
                        jump.time
                    )));
                }
                let s_before = inp.survival.left_limit(jump.time);
                total += kv * inp.p * jump.before * jump.delta() / (s_before * jump.after);
            }
            Ok(total)
        };
    let responder_curve = |arm: Arm| -> Result<&StepFunction> {
        curves.responder_survival[arm.index()]
            .as_ref()
            .ok_or_else(|| Error::InsufficientData(format!("{arm} has no responders")))
    };
    let needs_second = tau > tau_max;

    match mode {
        VarianceMode::Pooled => {
            let inp = CovarianceInputs {
                survival: &curves.pooled_survival,
                p: ds.p_hat_pooled(),
            };
            let mut total = 0.0;
            if tau0 < tau_b {
                let hz = hazards.ok_or_else(|| {
                    Error::InvalidInput("joint hazard estimates required when tau0 < tau_b".into())
                })?;
                let k_b = tail_of(q, inp.survival, tau0, tau_b);
                for arm in Arm::BOTH {
                    total -= weight(arm) * hz[arm.index()].integrate_weighted(|t| k_b.at(t));
                }
                total += drop_term(&inp, &k_b, tau0, tau_b)?;
            }
            if needs_second {
                let k = tail_of(q, inp.survival, tau0, tau);
                total += drop_term(&inp, &k, tau_max, tau)?;
                for arm in Arm::BOTH {
                    total += weight(arm) * responder_term(&inp, &k, responder_curve(arm)?)?;
                }
            }
            Ok(total)
        }
        VarianceMode::Unpooled => {
            let mut total = 0.0;
            for arm in Arm::BOTH {
                let i = arm.index();
                let inp = CovarianceInputs {
                    survival: &curves.survival[i],
                    p: ds.p_hat(arm),
                };
                let mut part = 0.0;
                if tau0 < tau_b {
                    let hz = hazards.ok_or_else(|| {
                        Error::InvalidInput(
                            "joint hazard estimates required when tau0 < tau_b".into(),
                        )
                    })?;
                    let k_b = tail_of(q, inp.survival, tau0, tau_b);
                    part -= hz[i].integrate_weighted(|t| k_b.at(t));
                    part += drop_term(&inp, &k_b, tau0, tau_b)?;
                }
                if needs_second {
                    let k = tail_of(q, inp.survival, tau0, tau);
                    part += drop_term(&inp, &k, tau_max, tau)?;
                    part += responder_term(&inp, &k, responder_curve(arm)?)?;
                }
                total += weight(arm) * part;
            }
            Ok(total)
        }
    }
}

/// `-sum_u K(u) (dN_X(u) - Y_X(u) / Y(u) dN(u)) / Y(u)` over event times in
/// `(0, tau]`, where `Y_X` counts responders at risk.
fn risk_set_covariance<'r>(
    records: impl Iterator<Item = &'r SubjectRecord>,
    k: &TailIntegral,
    tau: f64,
) -> f64 {
    let mut obs: Vec<(f64, bool, bool)> = records.map(|r| (r.time, r.event, r.responder)).collect();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut at_risk = obs.len() as f64;
    let mut responders_at_risk = obs.iter().filter(|o| o.2).count() as f64;
    let mut total = 0.0;
    let mut i = 0;
    while i < obs.len() && obs[i].0 <= tau {
        let t = obs[i].0;
        let (mut d, mut dx, mut left, mut left_x) = (0.0, 0.0, 0.0, 0.0);
        while i < obs.len() && obs[i].0 == t {
            let (_, event, responder) = obs[i];
            left += 1.0;
            if responder {
                left_x += 1.0;
            }
            if event {
                d += 1.0;
                if responder {
                    dx += 1.0;
                }
            }
            i += 1;
        }
        if d > 0.0 {
            let kv = k.at(t);
            if kv != 0.0 {
                total -= kv * (dx - responders_at_risk / at_risk * d) / at_risk;
            }
        }
        at_risk -= left;
        responders_at_risk -= left_x;
    }
    total
}

fn sigma_bs_risk_set(
    ds: &TrialDataset,
    curves: &Curves,
    cfg: &StudyConfig,
    q: &WeightFunction,
    mode: VarianceMode,
) -> f64 {
    match mode {
        VarianceMode::Pooled => {
            let k = tail_of(q, &curves.pooled_survival, cfg.tau0, cfg.tau);
            risk_set_covariance(ds.records().iter(), &k, cfg.tau)
        }
        VarianceMode::Unpooled => Arm::BOTH
            .iter()
            .map(|&arm| {
                let k = tail_of(q, &curves.survival[arm.index()], cfg.tau0, cfg.tau);
                (1.0 - ds.pi_hat(arm)) * risk_set_covariance(ds.arm(arm), &k, cfg.tau)
            })
            .sum(),
    }
}

/// Joint responder hazards of both arms on `[tau0, tau_b]`, or `None` when the
/// binary assessment does not fall after the survival origin or the
/// covariance form does not use them.
pub fn joint_hazards(ds: &TrialDataset, cfg: &StudyConfig) -> Result<Option<[HazardEstimate; 2]>> {
    if cfg.tau0 >= cfg.tau_b || cfg.covariance != CovarianceForm::Kernel {
        return Ok(None);
    }
    let bw = cfg.bandwidth.map_or(Bandwidth::Auto, Bandwidth::Fixed);
    let h0 = kernelhaz::hazard_xt(ds, Arm::Control, (cfg.tau0, cfg.tau_b), bw)?;
    let h1 = kernelhaz::hazard_xt(ds, Arm::Treatment, (cfg.tau0, cfg.tau_b), bw)?;
    Ok(Some([h0, h1]))
}

/// Covariance between the binary and survival scores.
pub fn sigma_bs_hat(
    ds: &TrialDataset,
    cfg: &StudyConfig,
    q: &WeightFunction,
    hazards: Option<&[HazardEstimate; 2]>,
    mode: VarianceMode,
) -> Result<f64> {
    sigma_bs(ds, &Curves::new(ds)?, cfg, q, hazards, mode, false)
}

/// Everything estimated from one dataset under one configuration. Both
/// variance modes can be evaluated from the same fit.
#[derive(Debug, Clone)]
pub struct Fitted<'a> {
    ds: &'a TrialDataset,
    cfg: &'a StudyConfig,
    curves: Curves,
    q: WeightFunction,
    hazards: Option<[HazardEstimate; 2]>,
    strictness: Strictness,
}

impl<'a> Fitted<'a> {
    pub fn new(ds: &'a TrialDataset, cfg: &'a StudyConfig) -> Result<Self> {
        Self::with_strictness(ds, cfg, Strictness::Assumptions)
    }

    /// Under [`Strictness::Computable`] variance terms with a vanishing
    /// denominator are dropped rather than reported as errors.
    pub fn with_strictness(
        ds: &'a TrialDataset,
        cfg: &'a StudyConfig,
        strictness: Strictness,
    ) -> Result<Self> {
        cfg.validate()?;
        let curves = Curves::new(ds)?;
        let q = weights::assemble_q(
            ds,
            cfg,
            &curves.pooled_survival,
            &curves.pooled_censoring,
            [&curves.censoring[0], &curves.censoring[1]],
        )?;
        let hazards = joint_hazards(ds, cfg)?;
        Ok(Self {
            ds,
            cfg,
            curves,
            q,
            hazards,
            strictness,
        })
    }

    pub fn curves(&self) -> &Curves {
        &self.curves
    }

    pub fn weight(&self) -> &WeightFunction {
        &self.q
    }

    pub fn hazards(&self) -> Option<&[HazardEstimate; 2]> {
        self.hazards.as_ref()
    }

    pub fn validation(&self, strictness: Strictness) -> ValidationReport {
        self.curves.validation(self.ds, self.cfg.tau, strictness)
    }

    fn lenient(&self) -> bool {
        self.strictness == Strictness::Computable
    }

    pub fn u_binary(&self) -> f64 {
        u_binary(self.ds).0
    }

    pub fn u_survival(&self) -> f64 {
        let [s0, s1] = &self.curves.survival;
        integrated_difference(self.ds, [s0, s1], self.cfg.tau0, self.cfg.tau, &self.q)
    }

    /// `U_s` with a deterministic weight in place of the estimated one.
    /// `splits` lists discontinuities of `weight`.
    pub fn u_survival_fixed(&self, weight: impl Fn(f64) -> f64, splits: &[f64]) -> f64 {
        let [s0, s1] = &self.curves.survival;
        let mut pts = step::partition(self.cfg.tau0, self.cfg.tau, &[s0, s1]);
        pts.extend(
            splits
                .iter()
                .copied()
                .filter(|&x| x > self.cfg.tau0 && x < self.cfg.tau),
        );
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let integral: f64 = pts
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let diff = s1.value(mid) - s0.value(mid);
                if diff == 0.0 {
                    0.0
                } else {
                    diff * quad::integrate(&weight, w[0], w[1], 1e-10)
                }
            })
            .sum();
        root_n(self.ds) * integral
    }

    pub fn sigma_b2(&self, mode: VarianceMode) -> Result<f64> {
        sigma_b2_hat(self.ds, mode)
    }

    pub fn sigma_s2(&self, mode: VarianceMode) -> Result<f64> {
        sigma_s2(
            self.ds,
            &self.curves,
            self.cfg.tau0,
            self.cfg.tau,
            &self.q,
            mode,
            self.lenient(),
        )
    }

    pub fn sigma_bs(&self, mode: VarianceMode) -> Result<f64> {
        sigma_bs(
            self.ds,
            &self.curves,
            self.cfg,
            &self.q,
            self.hazards.as_ref(),
            mode,
            self.lenient(),
        )
    }

    pub fn result(&self, mode: VarianceMode) -> Result<TestResult> {
        let u_b = self.u_binary();
        let u_s = self.u_survival();
        let sigma_b = self.sigma_b2(mode)?.sqrt();
        let var_s = self.sigma_s2(mode)?;
        if !(var_s > 0.0) {
            return Err(Error::DegenerateVariance(format!(
                "survival score variance is {var_s}"
            )));
        }
        let sigma_s = var_s.sqrt();
        let sigma_bs = self.sigma_bs(mode)?;
        let rho_hat = (sigma_bs / (sigma_b * sigma_s)).clamp(-1.0, 1.0);
        let (wb, ws) = (self.cfg.omega_b, self.cfg.omega_s);
        let l_stat = wb * u_b / sigma_b + ws * u_s / sigma_s;
        let var_l = wb * wb + ws * ws + 2.0 * wb * ws * rho_hat;
        if var_l <= 1e-12 {
            return Err(Error::DegenerateVariance(format!(
                "variance of the combined statistic is {var_l}"
            )));
        }
        let z = l_stat / var_l.sqrt();
        Ok(TestResult {
            u_b,
            u_s,
            sigma_b_hat: sigma_b,
            sigma_s_hat: sigma_s,
            sigma_bs_hat: sigma_bs,
            rho_hat,
            l_stat,
            var_l,
            z,
            p_value: upper_tail(z),
            variance_mode: mode,
            p_hat: [self.ds.p_hat(Arm::Control), self.ds.p_hat(Arm::Treatment)],
        })
    }

    /// Combined statistic with `U_s` computed from a deterministic weight and
    /// every standard deviation taken from the estimated-weight fit.
    pub fn l_stat_fixed_weight(
        &self,
        mode: VarianceMode,
        weight: impl Fn(f64) -> f64,
        splits: &[f64],
    ) -> Result<f64> {
        let sigma_b = self.sigma_b2(mode)?.sqrt();
        let sigma_s = self.sigma_s2(mode)?.sqrt();
        let u_s = self.u_survival_fixed(weight, splits);
        Ok(self.cfg.omega_b * self.u_binary() / sigma_b + self.cfg.omega_s * u_s / sigma_s)
    }

    pub fn report(&self, mode: VarianceMode) -> Result<Report> {
        let c = &self.curves;
        Ok(Report {
            result: self.result(mode)?,
            config: self.cfg.clone(),
            breakpoints: BreakpointCounts {
                survival: [
                    c.survival[0].breakpoints().len(),
                    c.survival[1].breakpoints().len(),
                ],
                censoring: [
                    c.censoring[0].breakpoints().len(),
                    c.censoring[1].breakpoints().len(),
                ],
                responder_survival: [
                    c.responder_survival[0]
                        .as_ref()
                        .map_or(0, |s| s.breakpoints().len()),
                    c.responder_survival[1]
                        .as_ref()
                        .map_or(0, |s| s.breakpoints().len()),
                ],
                pooled_survival: c.pooled_survival.breakpoints().len(),
                pooled_censoring: c.pooled_censoring.breakpoints().len(),
                weight: self.q.breakpoint_count(),
            },
            warnings: self
                .validation(Strictness::Assumptions)
                .issues
                .iter()
                .map(|i| i.to_string())
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BreakpointCounts {
    pub survival: [usize; 2],
    pub censoring: [usize; 2],
    pub responder_survival: [usize; 2],
    pub pooled_survival: usize,
    pub pooled_censoring: usize,
    pub weight: usize,
}

/// Serializable test outcome with the configuration that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    #[serde(flatten)]
    pub result: TestResult,
    pub config: StudyConfig,
    pub breakpoints: BreakpointCounts,
    pub warnings: Vec<String>,
}

/// Combined standardized statistic; refuses data failing any assumption check.
pub fn l_statistic(ds: &TrialDataset, cfg: &StudyConfig) -> Result<TestResult> {
    l_statistic_with(ds, cfg, Strictness::Assumptions)
}

pub fn l_statistic_with(
    ds: &TrialDataset,
    cfg: &StudyConfig,
    strictness: Strictness,
) -> Result<TestResult> {
    let fit = Fitted::with_strictness(ds, cfg, strictness)?;
    let report = fit.validation(strictness);
    if report.is_blocking() {
        return Err(Error::Assumption(Box::new(report)));
    }
    fit.result(cfg.variance_mode)
}

/// Local alternative: binary drift `g` and survival drift `drift(t)`.
pub struct NoncentralitySpec<'a> {
    pub g: f64,
    pub drift: &'a dyn Fn(f64) -> f64,
    pub weight: &'a dyn Fn(f64) -> f64,
}

/// `w_b g + w_s int_{tau0}^{tau} Q(t) drift(t) dt`, trapezoidal on 1001 points.
pub fn noncentrality(spec: &NoncentralitySpec, cfg: &StudyConfig) -> Result<f64> {
    const POINTS: usize = 1001;
    if !(spec.g.is_finite() && spec.g >= 0.0) {
        return Err(Error::Config(format!(
            "binary drift must be nonnegative, got {}",
            spec.g
        )));
    }
    let h = (cfg.tau - cfg.tau0) / (POINTS - 1) as f64;
    let mut integral = 0.0;
    for k in 0..POINTS {
        let t = cfg.tau0 + k as f64 * h;
        let d = (spec.drift)(t);
        if !(d.is_finite() && d >= 0.0) {
            return Err(Error::Config(format!(
                "survival drift must be finite and nonnegative, got {d} at t = {t}"
            )));
        }
        let end = k == 0 || k == POINTS - 1;
        integral += if end { 0.5 } else { 1.0 } * (spec.weight)(t) * d;
    }
    Ok(cfg.omega_b * spec.g + cfg.omega_s * integral * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SubjectRecord;
    use crate::weights::WeightSpec;

    fn rec(arm: usize, responder: bool, time: f64, event: bool) -> SubjectRecord {
        SubjectRecord {
            arm: Arm::from_index(arm).unwrap(),
            responder,
            time,
            event,
        }
    }

    #[test]
    fn binary_score_example() {
        let mut records = Vec::new();
        for k in 0..100 {
            records.push(rec(0, k < 20, 1.0 + k as f64, true));
            records.push(rec(1, k < 30, 1.0 + k as f64, true));
        }
        let ds = TrialDataset::new(records).unwrap();
        let (u, p0, p1) = u_binary(&ds);
        assert_eq!((p0, p1), (0.2, 0.3));
        assert!((u - 50f64.sqrt() * 0.1).abs() < 1e-12);
        assert!((u - 0.707_11).abs() < 1e-5);
        assert!((u_binary(&ds.swapped()).0 + u).abs() < 1e-15);
    }

    #[test]
    fn binary_score_equal_proportions() {
        let ds = TrialDataset::new(vec![
            rec(0, true, 1.0, true),
            rec(0, false, 2.0, true),
            rec(1, false, 1.5, true),
            rec(1, true, 2.5, true),
        ])
        .unwrap();
        assert_eq!(u_binary(&ds).0, 0.0);
    }

    #[test]
    fn survival_score_identical_groups() {
        let mut records = Vec::new();
        for arm in 0..2 {
            records.push(rec(arm, true, 0.5, true));
            records.push(rec(arm, false, 1.5, false));
            records.push(rec(arm, true, 2.0, true));
        }
        let ds = TrialDataset::new(records).unwrap();
        let q = WeightFunction::constant(1.0);
        assert_eq!(u_survival(&ds, 0.0, 2.0, &q).unwrap(), 0.0);
    }

    #[test]
    fn survival_score_constant_gap() {
        // group 0: 5 of 50 fail at 0.001, group 1 never fails before 1
        let mut records = Vec::new();
        for k in 0..50 {
            records.push(rec(0, false, if k < 5 { 1e-3 } else { 2.0 }, true));
            records.push(rec(1, false, 2.0, false));
        }
        let ds = TrialDataset::new(records).unwrap();
        let q = WeightFunction::constant(1.0);
        // the gap is 0.1 on [1e-3, 1]; integrate from there so it is constant
        let u = u_survival(&ds, 1e-3, 1.0 + 1e-3, &q).unwrap();
        assert!((u - 25f64.sqrt() * 0.1 * 1.0).abs() < 1e-12, "{u}");
    }

    #[test]
    fn survival_score_horizon_error() {
        let ds = TrialDataset::new(vec![
            rec(0, true, 1.0, true),
            rec(0, false, 2.0, false),
            rec(1, true, 1.0, true),
            rec(1, false, 2.0, false),
        ])
        .unwrap();
        assert!(u_survival(&ds, 0.0, 3.0, &WeightFunction::constant(1.0)).is_err());
    }

    #[test]
    fn k_hat_examples() {
        let q = WeightFunction::constant(1.0);
        let s = StepFunction::new(1.0, vec![1.0], vec![0.5]).unwrap();
        assert_eq!(k_hat(&q, &s, 2.0, 2.0), 0.0);
        assert_eq!(k_hat(&q, &s, 3.0, 2.0), 0.0);
        let flat = StepFunction::constant(1.0);
        assert!((k_hat(&q, &flat, 0.25, 1.0) - 0.75).abs() < 1e-15);
        // rectangles [0.5, 1) at height 1 and [1, 2) at 0.5
        assert!((k_hat(&q, &s, 0.5, 2.0) - (0.5 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn sigma_b_modes() {
        let mut records = Vec::new();
        for k in 0..8 {
            records.push(rec(0, k < 2, 1.0 + k as f64, true));
            records.push(rec(1, k < 2, 1.0 + k as f64, true));
        }
        let ds = TrialDataset::new(records).unwrap();
        let pooled = sigma_b2_hat(&ds, VarianceMode::Pooled).unwrap();
        assert!((pooled - 0.1875).abs() < 1e-15);
        let unpooled = sigma_b2_hat(&ds, VarianceMode::Unpooled).unwrap();
        assert!((unpooled - pooled).abs() < 1e-15);

        let none = TrialDataset::new(vec![
            rec(0, false, 1.0, true),
            rec(0, false, 2.0, true),
            rec(1, false, 1.5, true),
            rec(1, false, 2.5, true),
        ])
        .unwrap();
        assert!(matches!(
            sigma_b2_hat(&none, VarianceMode::Pooled),
            Err(Error::DegenerateVariance(_))
        ));
    }

    #[test]
    fn no_events_means_zero_variance_and_covariance() {
        let ds = TrialDataset::new(vec![
            rec(0, true, 3.0, false),
            rec(0, false, 4.0, true),
            rec(1, true, 3.5, false),
            rec(1, false, 5.0, true),
        ])
        .unwrap();
        let cfg = StudyConfig::default();
        let q = weights::build_q(&ds, &cfg).unwrap();
        for mode in [VarianceMode::Pooled, VarianceMode::Unpooled] {
            assert_eq!(sigma_s2_hat(&ds, 0.0, 1.0, &q, mode).unwrap(), 0.0);
            let hz = joint_hazards(&ds, &cfg).unwrap();
            assert_eq!(sigma_bs_hat(&ds, &cfg, &q, hz.as_ref(), mode).unwrap(), 0.0);
        }
    }

    #[test]
    fn uncensored_balanced_factor_is_one() {
        // without censoring the pooled variance is the plain KM-integral form
        let times = [0.2, 0.4, 0.5, 0.9, 1.3, 0.3, 0.45, 0.7, 1.1, 1.6];
        let records: Vec<_> = times
            .iter()
            .enumerate()
            .map(|(k, &t)| rec(k / 5, k % 2 == 0, t, true))
            .collect();
        let ds = TrialDataset::new(records).unwrap();
        let q = WeightFunction::constant(1.0);
        let v = sigma_s2_hat(&ds, 0.0, 1.0, &q, VarianceMode::Pooled).unwrap();
        let (t, e) = ds.all_columns();
        let s = km::km_estimate(&t, &e).unwrap();
        let expected: f64 = s
            .jumps_in(0.0, 1.0)
            .map(|j| {
                let k = k_hat(&q, &s, j.time, 1.0);
                -k * k / (j.after * j.before) * j.delta()
            })
            .sum();
        assert!((v - expected).abs() < 1e-14);
    }

    #[test]
    fn combined_result_identities() {
        let ds = crate::copsim::demo_dataset();
        let cfg = StudyConfig::default();
        for mode in [VarianceMode::Pooled, VarianceMode::Unpooled] {
            let fit = Fitted::new(&ds, &cfg).unwrap();
            let r = fit.result(mode).unwrap();
            let (wb, ws) = (cfg.omega_b, cfg.omega_s);
            assert_eq!(r.var_l, wb * wb + ws * ws + 2.0 * wb * ws * r.rho_hat);
            assert_eq!(r.z, r.l_stat / r.var_l.sqrt());
            assert!((-1.0..=1.0).contains(&r.rho_hat));
            assert!(r.p_value > 0.0 && r.p_value < 1.0);
            assert!(r.sigma_b_hat > 0.0 && r.sigma_s_hat > 0.0);
        }
    }

    #[test]
    fn small_survival_weight_approaches_binary_test() {
        let ds = crate::copsim::demo_dataset();
        let mut cfg = StudyConfig {
            omega_b: 1.0 - 1e-9,
            omega_s: 1e-9,
            ..StudyConfig::default()
        };
        cfg.weights = WeightSpec::new(0.0, 0.0, 1.0);
        let r = l_statistic(&ds, &cfg).unwrap();
        let zb = r.u_b / r.sigma_b_hat;
        assert!((r.z - zb).abs() < 1e-6, "{} vs {zb}", r.z);
    }

    #[test]
    fn global_configuration_is_equal_weight_sum() {
        let ds = crate::copsim::demo_dataset();
        let cfg = StudyConfig {
            tau0: 0.0,
            tau_b: 1.0,
            tau: 1.0,
            ..StudyConfig::default()
        };
        let r = l_statistic(&ds, &cfg).unwrap();
        let sum = 0.5 * (r.u_b / r.sigma_b_hat + r.u_s / r.sigma_s_hat);
        assert!((r.l_stat - sum).abs() < 1e-14);
    }

    #[test]
    fn risk_set_covariance_matches_influence_products() {
        // (1/n) sum_j (X_j - p) * (-sum_u K(u) dM_j(u) / (Y(u) / n))
        let ds = crate::copsim::demo_dataset();
        let cfg = StudyConfig {
            covariance: CovarianceForm::RiskSet,
            ..StudyConfig::default()
        };
        let fit = Fitted::new(&ds, &cfg).unwrap();
        let s = &fit.curves().pooled_survival;
        let n = ds.n_total() as f64;
        let p = ds.p_hat_pooled();
        let recs = ds.records();
        let mut times: Vec<f64> = recs
            .iter()
            .filter(|r| r.event && r.time <= cfg.tau)
            .map(|r| r.time)
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut expected = 0.0;
        for r in recs {
            let mut phi = 0.0;
            for &u in &times {
                let y = recs.iter().filter(|o| o.time >= u).count() as f64;
                let d = recs.iter().filter(|o| o.time == u && o.event).count() as f64;
                let dn = f64::from(u8::from(r.time == u && r.event));
                let dm = dn - f64::from(u8::from(r.time >= u)) * d / y;
                phi -= k_hat(fit.weight(), s, u, cfg.tau) * dm / (y / n);
            }
            expected += (f64::from(u8::from(r.responder)) - p) * phi / n;
        }
        let got = fit.sigma_bs(VarianceMode::Pooled).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        assert!(fit.hazards().is_none());
    }

    #[test]
    fn covariance_forms_agree_without_events() {
        let ds = TrialDataset::new(vec![
            rec(0, true, 3.0, false),
            rec(0, false, 4.0, true),
            rec(1, true, 3.5, false),
            rec(1, false, 5.0, true),
        ])
        .unwrap();
        for covariance in [CovarianceForm::Kernel, CovarianceForm::RiskSet] {
            let cfg = StudyConfig {
                covariance,
                ..StudyConfig::default()
            };
            let fit = Fitted::new(&ds, &cfg).unwrap();
            for mode in [VarianceMode::Pooled, VarianceMode::Unpooled] {
                assert_eq!(fit.sigma_bs(mode).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn noncentrality_examples() {
        let cfg = StudyConfig {
            omega_b: 0.3,
            omega_s: 0.7,
            ..StudyConfig::default()
        };
        let zero = |_: f64| 0.0;
        let one = |_: f64| 1.0;
        let ident = |t: f64| t;
        let spec = NoncentralitySpec {
            g: 0.0,
            drift: &zero,
            weight: &one,
        };
        assert_eq!(noncentrality(&spec, &cfg).unwrap(), 0.0);
        let d = |_: f64| 2.0;
        let spec = NoncentralitySpec {
            g: 1.5,
            drift: &d,
            weight: &one,
        };
        assert!((noncentrality(&spec, &cfg).unwrap() - (0.3 * 1.5 + 0.7 * 2.0)).abs() < 1e-12);
        let spec = NoncentralitySpec {
            g: 1.5,
            drift: &one,
            weight: &ident,
        };
        assert!((noncentrality(&spec, &cfg).unwrap() - (0.3 * 1.5 + 0.7 * 0.5)).abs() < 1e-12);
        let neg = |_: f64| -1.0;
        let spec = NoncentralitySpec {
            g: 1.0,
            drift: &neg,
            weight: &one,
        };
        assert!(noncentrality(&spec, &cfg).is_err());
    }
}
