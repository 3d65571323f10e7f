//! Frank-copula simulation of two-arm trials with a binary and a
//! time-to-event endpoint.
//!
//! Each subject draws a Frank pair `(U, V)` by conditional sampling. The
//! binary endpoint is `X = 1{U <= p}` and the survival time is the Weibull
//! quantile `T = b (-ln V)^{1/a}`, so `V` plays the role of `S(T)`. With
//! positive association small `U` goes with small `V`: responders live longer.
//! Censoring is `Uniform(0, c)` and independent of both.

mod size;
mod theory;

pub use size::{
    empirical_size, empirical_sizes, map_replicates, replicate_dataset, replicate_rng, sizes_tsv,
    ModeSize, SizeReport,
};
pub use theory::{theoretical_sigma, TheoreticalModel, TheoreticalSigma};

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Arm, StudyConfig, SubjectRecord, TrialDataset};
use crate::error::{Error, Result};
use crate::weights::WeightSpec;

/// Conditional-sampling draw from the Frank copula: `u` is kept and `v` is
/// the inverse of `P(V <= v | U = u)` at `w`.
pub fn frank_pair(theta: f64, u: f64, w: f64) -> Result<(f64, f64)> {
    if theta == 0.0 || !theta.is_finite() {
        return Err(Error::InvalidInput(format!(
            "Frank association must be finite and nonzero, got {theta}"
        )));
    }
    let ratio = w * (-theta).exp_m1() / (w + (1.0 - w) * (-theta * u).exp());
    let v = -ratio.ln_1p() / theta;
    Ok((u, v.clamp(0.0, 1.0)))
}

/// One simulation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub id: Option<String>,
    pub theta: f64,
    /// Weibull shape.
    pub a: f64,
    /// Weibull scale of group 0 (and of group 1 unless `b1` is set).
    pub b: f64,
    #[serde(default)]
    pub b1: Option<f64>,
    pub p0: f64,
    pub p1: f64,
    /// Upper bound of the uniform censoring law; `None` means no censoring.
    pub c: Option<f64>,
    pub n_per_arm: usize,
    #[serde(default)]
    pub cfg: StudyConfig,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("a", self.a)?;
        positive("b", self.b)?;
        if let Some(b1) = self.b1 {
            positive("b1", b1)?;
        }
        if let Some(c) = self.c {
            positive("c", c)?;
        }
        for (name, p) in [("p0", self.p0), ("p1", self.p1)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {p}")));
            }
        }
        if self.theta == 0.0 || !self.theta.is_finite() {
            return Err(Error::Config(format!(
                "theta must be finite and nonzero (use 0.001 for independence), got {}",
                self.theta
            )));
        }
        if self.n_per_arm < 2 {
            return Err(Error::Config("n_per_arm must be at least 2".into()));
        }
        self.cfg.validate()
    }

    pub fn label(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            let c = self.c.map_or("inf".to_string(), |c| c.to_string());
            format!(
                "theta={} a={} p0={} c={} taub={} tau={}",
                self.theta, self.a, self.p0, c, self.cfg.tau_b, self.cfg.tau
            )
        })
    }

    pub fn scale(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Control => self.b,
            Arm::Treatment => self.b1.unwrap_or(self.b),
        }
    }

    pub fn p(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Control => self.p0,
            Arm::Treatment => self.p1,
        }
    }

    pub fn model(&self) -> TheoreticalModel {
        TheoreticalModel {
            a: self.a,
            b: [self.scale(Arm::Control), self.scale(Arm::Treatment)],
            p: [self.p0, self.p1],
            c: self.c,
            pi: [0.5, 0.5],
            theta: self.theta,
        }
    }
}

/// Draws one trial: `n_per_arm` subjects in group 0, then group 1.
pub fn gen_trial(sc: &Scenario, rng: &mut impl Rng) -> Result<TrialDataset> {
    sc.validate()?;
    let mut records = Vec::with_capacity(2 * sc.n_per_arm);
    for arm in Arm::BOTH {
        let (p, b) = (sc.p(arm), sc.scale(arm));
        for _ in 0..sc.n_per_arm {
            let u: f64 = rng.sample(Open01);
            let w: f64 = rng.sample(Open01);
            let (u, v) = frank_pair(sc.theta, u, w)?;
            let t = (b * (-v.ln()).powf(1.0 / sc.a)).max(f64::MIN_POSITIVE);
            let cens = match sc.c {
                Some(c) => c * rng.sample::<f64, _>(Open01),
                None => f64::INFINITY,
            };
            records.push(SubjectRecord {
                arm,
                responder: u <= p,
                time: t.min(cens),
                event: t <= cens,
            });
        }
    }
    TrialDataset::new(records)
}

/// Weight exponents `(eta, rho, gamma)` in {0, 1}^3 with at least one set.
pub const WEIGHT_COMBOS: [(f64, f64, f64); 7] = [
    (0.0, 1.0, 0.0),
    (0.0, 1.0, 1.0),
    (1.0, 0.0, 0.0),
    (1.0, 1.0, 0.0),
    (1.0, 1.0, 1.0),
    (0.0, 0.0, 1.0),
    (1.0, 0.0, 1.0),
];

/// The type-I-error grid: theta x a x p0 x c x (tau_b, tau), b = 1,
/// equal weights, all under the null.
///
/// With `all_weights` every cell is crossed with each of [`WEIGHT_COMBOS`];
/// otherwise cell `k` uses combination `k mod 7`, which keeps every
/// combination represented at a seventh of the cost.
pub fn size_grid(n_per_arm: usize, seed: u64, all_weights: bool) -> Vec<Scenario> {
    let mut out = Vec::new();
    let mut k = 0usize;
    for theta in [0.001, 2.0, 3.0] {
        for a in [0.5, 1.0, 2.0] {
            for p0 in [0.2, 0.4] {
                for c in [1.0, 3.0] {
                    for (tau_b, tau) in [(0.5, 1.0), (1.0, 1.0)] {
                        let combos: Vec<(f64, f64, f64)> = if all_weights {
                            WEIGHT_COMBOS.to_vec()
                        } else {
                            vec![WEIGHT_COMBOS[k % WEIGHT_COMBOS.len()]]
                        };
                        for (eta, rho, gamma) in combos {
                            let cfg = StudyConfig {
                                tau0: 0.0,
                                tau_b,
                                tau,
                                weights: WeightSpec::new(eta, rho, gamma),
                                ..StudyConfig::default()
                            };
                            out.push(Scenario {
                                id: Some(format!(
                                    "theta={theta} a={a} p0={p0} c={c} taub={tau_b} tau={tau} \
                                     eta={eta} rho={rho} gamma={gamma}"
                                )),
                                theta,
                                a,
                                b: 1.0,
                                b1: None,
                                p0,
                                p1: p0,
                                c: Some(c),
                                n_per_arm,
                                cfg,
                                seed: seed.wrapping_add(out.len() as u64),
                            });
                        }
                        k += 1;
                    }
                }
            }
        }
    }
    out
}

/// Parses a JSON array of scenarios and validates each one.
pub fn load_grid(json: &str) -> Result<Vec<Scenario>> {
    let grid: Vec<Scenario> = serde_json::from_str(json)?;
    if grid.is_empty() {
        return Err(Error::Config("scenario grid is empty".into()));
    }
    for sc in &grid {
        sc.validate()
            .map_err(|e| Error::Config(format!("scenario {}: {e}", sc.label())))?;
    }
    Ok(grid)
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

#[cfg(test)]
pub(crate) fn demo_dataset() -> TrialDataset {
    let sc = Scenario {
        id: None,
        theta: 2.0,
        a: 1.0,
        b: 1.0,
        b1: Some(1.3),
        p0: 0.3,
        p1: 0.4,
        c: Some(3.0),
        n_per_arm: 80,
        cfg: StudyConfig::default(),
        seed: 11,
    };
    replicate_dataset(&sc, 0).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(theta: f64, c: Option<f64>, n: usize) -> Scenario {
        Scenario {
            id: None,
            theta,
            a: 1.0,
            b: 1.0,
            b1: None,
            p0: 0.3,
            p1: 0.3,
            c,
            n_per_arm: n,
            cfg: StudyConfig::default(),
            seed: 5,
        }
    }

    #[test]
    fn frank_center_symmetry() {
        let (u, v) = frank_pair(2.0, 0.5, 0.5).unwrap();
        assert_eq!(u, 0.5);
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn frank_independence_limit() {
        for i in 0..100 {
            for j in 0..100 {
                let u = (i as f64 + 0.5) / 100.0;
                let w = (j as f64 + 0.5) / 100.0;
                let (_, v) = frank_pair(0.001, u, w).unwrap();
                assert!((v - w).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn frank_rejects_zero() {
        assert!(frank_pair(0.0, 0.3, 0.3).is_err());
    }

    #[test]
    fn frank_inverts_conditional_cdf() {
        // C(v | u) = e^{-theta u} (e^{-theta v} - 1) / ((e^{-theta} - 1) + (e^{-theta u} - 1)(e^{-theta v} - 1))
        let theta = 3.0f64;
        for &(u, w) in &[(0.1, 0.2), (0.7, 0.9), (0.5, 0.01)] {
            let (_, v) = frank_pair(theta, u, w).unwrap();
            let eu = (-theta * u).exp();
            let ev = (-theta * v).exp_m1();
            let cdf = eu * ev / ((-theta).exp_m1() + (-theta * u).exp_m1() * ev);
            assert!((cdf - w).abs() < 1e-12, "{cdf} vs {w}");
        }
    }

    #[test]
    fn censoring_fraction_matches_integral() {
        // P(C < T) = (1/c) int_0^c S(t) dt = (1 - e^{-3}) / 3 for c = 3, S = e^{-t}
        let sc = scenario(0.001, Some(3.0), 50_000);
        let ds = replicate_dataset(&sc, 0).unwrap();
        let cens = ds.records().iter().filter(|r| !r.event).count() as f64 / ds.n_total() as f64;
        let oracle = crate::quad::integrate(|t: f64| (-t).exp() / 3.0, 0.0, 3.0, 1e-12);
        assert!((oracle - (1.0 - (-3.0f64).exp()) / 3.0).abs() < 1e-12);
        assert!((cens - oracle).abs() < 0.01, "{cens} vs {oracle}");
    }

    #[test]
    fn responders_live_longer_under_positive_association() {
        let sc = scenario(3.0, None, 20_000);
        let ds = replicate_dataset(&sc, 1).unwrap();
        let x: Vec<f64> = ds
            .records()
            .iter()
            .map(|r| f64::from(u8::from(r.responder)))
            .collect();
        let t: Vec<f64> = ds.records().iter().map(|r| r.time).collect();
        assert!(pearson(&x, &t) > 0.05);
    }

    #[test]
    fn size_grid_shape() {
        let g = size_grid(500, 1, false);
        assert_eq!(g.len(), 72);
        assert_eq!(size_grid(500, 1, true).len(), 72 * 7);
        assert!(g.iter().all(|s| s.validate().is_ok() && s.p0 == s.p1));
    }

    #[test]
    fn grid_json_round_trip() {
        let g = size_grid(100, 3, false);
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(load_grid(&json).unwrap(), g);
        assert!(load_grid("[]").is_err());
        let bad = json.replacen("\"theta\":0.001", "\"theta\":0.0", 1);
        assert!(load_grid(&bad).is_err());
    }

    #[test]
    fn spearman_of_monotone_map_is_one() {
        let x = [3.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| v.exp()).collect();
        assert!((spearman(&x, &y) - 1.0).abs() < 1e-15);
        assert_eq!(ranks(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
    }
}
