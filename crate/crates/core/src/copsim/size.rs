use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{gen_trial, Scenario};
use crate::dataset::{Strictness, TrialDataset, VarianceMode};
use crate::error::{Error, Result};
use crate::lstat::Fitted;

/// Largest tolerated share of replicates excluded by assumption checks.
pub const MAX_EXCLUDED_SHARE: f64 = 0.05;

/// Generator for replicate `r`: the scenario seed picks the key and the
/// replicate index the stream, so replicates are independent of scheduling.
pub fn replicate_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

pub fn replicate_dataset(sc: &Scenario, r: usize) -> Result<TrialDataset> {
    gen_trial(sc, &mut replicate_rng(sc.seed, r))
}

/// Applies `f` to replicates `0..n_reps` in parallel; results are in
/// replicate order.
pub fn map_replicates<T, F>(sc: &Scenario, n_reps: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &TrialDataset) -> T + Sync,
{
    sc.validate()?;
    (0..n_reps)
        .into_par_iter()
        .map(|r| replicate_dataset(sc, r).map(|ds| f(r, &ds)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSize {
    pub variance_mode: VarianceMode,
    pub n_reps: usize,
    pub excluded: usize,
    pub rejections: usize,
    pub size: f64,
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeReport {
    pub scenario: String,
    pub pooled: ModeSize,
    pub unpooled: ModeSize,
}

impl SizeReport {
    pub fn mode(&self, mode: VarianceMode) -> &ModeSize {
        match mode {
            VarianceMode::Pooled => &self.pooled,
            VarianceMode::Unpooled => &self.unpooled,
        }
    }
}

/// `None`: excluded; `Some(reject)` otherwise.
type Outcome = Option<bool>;

fn replicate_outcomes(ds: &TrialDataset, sc: &Scenario, alpha: f64) -> Result<[Outcome; 2]> {
    let fit = Fitted::with_strictness(ds, &sc.cfg, Strictness::Computable)?;
    if fit.validation(Strictness::Computable).is_blocking() {
        return Ok([None, None]);
    }
    let mut out = [None, None];
    for (slot, mode) in out
        .iter_mut()
        .zip([VarianceMode::Pooled, VarianceMode::Unpooled])
    {
        *slot = match fit.result(mode) {
            Ok(r) => Some(r.p_value <= alpha),
            Err(e) if e.is_assumption_violation() => None,
            Err(e) => return Err(e),
        };
    }
    Ok(out)
}

fn summarize(mode: VarianceMode, outcomes: impl Iterator<Item = Outcome>) -> Result<ModeSize> {
    let (mut n_reps, mut excluded, mut rejections) = (0, 0, 0);
    for o in outcomes {
        n_reps += 1;
        match o {
            None => excluded += 1,
            Some(true) => rejections += 1,
            Some(false) => {}
        }
    }
    if excluded as f64 > MAX_EXCLUDED_SHARE * n_reps as f64 || excluded == n_reps {
        return Err(Error::TooManyExclusions {
            excluded,
            total: n_reps,
        });
    }
    let used = (n_reps - excluded) as f64;
    let size = rejections as f64 / used;
    Ok(ModeSize {
        variance_mode: mode,
        n_reps,
        excluded,
        rejections,
        size,
        mc_se: (size * (1.0 - size) / used).sqrt(),
    })
}

/// Rejection rates at level `alpha` for both variance modes, computed on the
/// same replicates. Replicates failing an assumption check needed for the
/// statistic to exist are excluded; more than 5% exclusions is an error.
pub fn empirical_sizes(sc: &Scenario, n_reps: usize, alpha: f64) -> Result<SizeReport> {
    if n_reps == 0 {
        return Err(Error::Config(
            "number of replicates must be positive".into(),
        ));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    let outcomes: Vec<[Outcome; 2]> =
        map_replicates(sc, n_reps, |_, ds| replicate_outcomes(ds, sc, alpha))?
            .into_iter()
            .collect::<Result<_>>()?;
    Ok(SizeReport {
        scenario: sc.label(),
        pooled: summarize(VarianceMode::Pooled, outcomes.iter().map(|o| o[0]))?,
        unpooled: summarize(VarianceMode::Unpooled, outcomes.iter().map(|o| o[1]))?,
    })
}

/// Rejection rate for the scenario's configured variance mode.
pub fn empirical_size(sc: &Scenario, n_reps: usize, alpha: f64) -> Result<f64> {
    Ok(empirical_sizes(sc, n_reps, alpha)?
        .mode(sc.cfg.variance_mode)
        .size)
}

/// One row per scenario and variance mode.
pub fn sizes_tsv(reports: &[SizeReport]) -> String {
    let mut out = String::from("scenario\tvariance_mode\tn_reps\texcluded\tsize\tmc_se\n");
    for r in reports {
        for m in [&r.pooled, &r.unpooled] {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                r.scenario, m.variance_mode, m.n_reps, m.excluded, m.size, m.mc_se
            ));
        }
    }
    out
}
