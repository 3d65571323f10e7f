use serde::{Deserialize, Serialize};

use crate::dataset::{Arm, StudyConfig};
use crate::error::{Error, Result};
use crate::quad;
use crate::weights::{pow0, WeightSpec};

/// True curves of a simulated trial: Weibull survival
/// `S_i(t) = exp(-(t / b_i)^a)` and censoring `G(t) = 1 - t / c` on `[0, c]`
/// (`G = 1` without censoring).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalModel {
    pub a: f64,
    pub b: [f64; 2],
    pub p: [f64; 2],
    pub c: Option<f64>,
    pub pi: [f64; 2],
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoreticalSigma {
    pub sigma_b2: f64,
    pub sigma_s2: f64,
    pub sigma_bs: f64,
}

impl TheoreticalModel {
    pub fn survival(&self, arm: Arm, t: f64) -> f64 {
        (-(t / self.b[arm.index()]).powf(self.a)).exp()
    }

    pub fn hazard(&self, arm: Arm, t: f64) -> f64 {
        let b = self.b[arm.index()];
        self.a / b * (t / b).powf(self.a - 1.0)
    }

    pub fn censoring(&self, t: f64) -> f64 {
        match self.c {
            Some(c) => (1.0 - t / c).max(0.0),
            None => 1.0,
        }
    }

    pub fn pooled_survival(&self, t: f64) -> f64 {
        self.pi[0] * self.survival(Arm::Control, t) + self.pi[1] * self.survival(Arm::Treatment, t)
    }

    pub fn is_independent(&self) -> bool {
        self.theta.abs() <= 1e-3
    }

    /// Limit of the estimated weight: `G^eta S^rho (1 - S)^gamma f` with the
    /// pooled true survival.
    pub fn true_weight(
        &self,
        spec: &WeightSpec,
        tau_b: f64,
    ) -> Result<impl Fn(f64) -> f64 + Sync + '_> {
        spec.validate()?;
        if spec.use_vc {
            return Err(Error::Unsupported(
                "true weight for the variance-stabilizing option".into(),
            ));
        }
        let (eta, rho, gamma, emphasis) = (spec.eta, spec.rho, spec.gamma, spec.piecewise_a);
        Ok(move |t: f64| {
            let s = self.pooled_survival(t);
            let f = match emphasis {
                Some(a) if t < tau_b => a,
                Some(a) => 1.0 - a,
                None => 1.0,
            };
            pow0(self.censoring(t), eta) * pow0(s, rho) * pow0(1.0 - s, gamma) * f
        })
    }

    pub fn sigma_b2(&self) -> f64 {
        (0..2)
            .map(|i| (1.0 - self.pi[i]) * self.p[i] * (1.0 - self.p[i]))
            .sum()
    }

    /// `sum_i (1 - pi_i) int K_i(t)^2 lambda_i(t) / (S_i(t) G(t)) dt` over
    /// `[tau0, tau]`, with `K_i(t) = int_t^tau q S_i`.
    pub fn sigma_s2(&self, cfg: &StudyConfig, q: &(dyn Fn(f64) -> f64 + Sync)) -> Result<f64> {
        if let Some(c) = self.c {
            if cfg.tau >= c {
                return Err(Error::SupportExhausted(c));
            }
        }
        let splits = [cfg.tau_b];
        let mut total = 0.0;
        for arm in Arm::BOTH {
            let k = |t: f64| {
                quad::integrate_split(|u| q(u) * self.survival(arm, u), t, cfg.tau, &splits, 1e-11)
            };
            let integrand = |t: f64| {
                let kv = k(t);
                kv * kv * self.hazard(arm, t) / (self.survival(arm, t) * self.censoring(t))
            };
            let v = quad::integrate_split(integrand, cfg.tau0, cfg.tau, &splits, 1e-6);
            total += (1.0 - self.pi[arm.index()]) * v;
        }
        Ok(total)
    }
}

/// Limiting variances of the binary and survival scores and their
/// covariance. The covariance is available only for the independence model,
/// where it vanishes.
pub fn theoretical_sigma(
    model: &TheoreticalModel,
    cfg: &StudyConfig,
    q_true: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<TheoreticalSigma> {
    if !model.is_independent() {
        return Err(Error::Unsupported(format!(
            "limiting covariance for association theta = {}",
            model.theta
        )));
    }
    Ok(TheoreticalSigma {
        sigma_b2: model.sigma_b2(),
        sigma_s2: model.sigma_s2(cfg, q_true)?,
        sigma_bs: 0.0,
    })
}
