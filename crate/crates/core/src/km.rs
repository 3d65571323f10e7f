//! Product-limit estimators and risk tables.
//!
//! Ties: at a time shared by events and censorings the events are processed
//! first, so censored subjects still count as at risk for those events and
//! are not at risk for the censoring "events" of the censoring estimator.

use crate::dataset::{Arm, TrialDataset};
use crate::error::{Error, Result};
use crate::step::StepFunction;

/// Counts at one distinct observed time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tally {
    pub time: f64,
    pub at_risk: usize,
    pub events: usize,
    pub censored: usize,
}

/// Collapses observations into distinct sorted times with risk-set counts.
pub fn tally(times: &[f64], events: &[bool]) -> Result<Vec<Tally>> {
    if times.len() != events.len() {
        return Err(Error::InvalidInput(format!(
            "{} times but {} status flags",
            times.len(),
            events.len()
        )));
    }
    if times.is_empty() {
        return Err(Error::InvalidInput("no observations".into()));
    }
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "observation times must be positive and finite, got {t}"
        )));
    }
    let mut obs: Vec<(f64, bool)> = times.iter().copied().zip(events.iter().copied()).collect();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut out: Vec<Tally> = Vec::new();
    let mut remaining = obs.len();
    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].0;
        let mut d = 0;
        let mut c = 0;
        while i < obs.len() && obs[i].0 == t {
            if obs[i].1 {
                d += 1;
            } else {
                c += 1;
            }
            i += 1;
        }
        out.push(Tally {
            time: t,
            at_risk: remaining,
            events: d,
            censored: c,
        });
        remaining -= d + c;
    }
    Ok(out)
}

fn product_limit(tallies: &[Tally], deaths: impl Fn(&Tally) -> (usize, usize)) -> StepFunction {
    let mut s = 1.0;
    let mut knots = Vec::new();
    let mut values = Vec::new();
    for row in tallies {
        let (d, y) = deaths(row);
        if d > 0 {
            s *= 1.0 - d as f64 / y as f64;
            knots.push(row.time);
            values.push(s);
        }
    }
    StepFunction::from_parts(1.0, knots, values)
}

pub(crate) fn survival_from_tally(tallies: &[Tally]) -> StepFunction {
    product_limit(tallies, |r| (r.events, r.at_risk))
}

pub(crate) fn censoring_from_tally(tallies: &[Tally]) -> StepFunction {
    product_limit(tallies, |r| (r.censored, r.at_risk - r.events))
}

/// Kaplan-Meier estimate of the event-time survival function. Breakpoints are
/// the distinct event times; the curve stays flat after the last observation.
pub fn km_estimate(times: &[f64], events: &[bool]) -> Result<StepFunction> {
    Ok(survival_from_tally(&tally(times, events)?))
}

/// Kaplan-Meier estimate of the censoring survival function.
pub fn censoring_km(times: &[f64], events: &[bool]) -> Result<StepFunction> {
    Ok(censoring_from_tally(&tally(times, events)?))
}

/// Event-time and censoring estimators over both arms combined.
pub fn pooled_km(ds: &TrialDataset) -> Result<(StepFunction, StepFunction)> {
    let (t, e) = ds.all_columns();
    let tallies = tally(&t, &e)?;
    Ok((
        survival_from_tally(&tallies),
        censoring_from_tally(&tallies),
    ))
}

/// Survival estimate among the responders of one arm.
pub fn responders_km(ds: &TrialDataset, arm: Arm) -> Result<StepFunction> {
    let (t, e) = ds.responder_columns(arm);
    if t.is_empty() {
        return Err(Error::InsufficientData(format!("{arm} has no responders")));
    }
    km_estimate(&t, &e)
}

pub fn left_limit(f: &StepFunction, t: f64) -> f64 {
    f.left_limit(t)
}

/// One row per distinct observed time across both arms.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskRow {
    pub time: f64,
    pub at_risk: usize,
    pub events: usize,
    pub at_risk_by_arm: [usize; 2],
    pub events_by_arm: [usize; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskTable {
    pub rows: Vec<RiskRow>,
}

impl RiskTable {
    pub fn new(ds: &TrialDataset) -> Self {
        let mut obs: Vec<(f64, usize, bool)> = ds
            .records()
            .iter()
            .map(|r| (r.time, r.arm.index(), r.event))
            .collect();
        obs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut remaining = [ds.n(Arm::Control), ds.n(Arm::Treatment)];
        let mut rows = Vec::new();
        let mut i = 0;
        while i < obs.len() {
            let t = obs[i].0;
            let mut leaving = [0usize; 2];
            let mut events = [0usize; 2];
            while i < obs.len() && obs[i].0 == t {
                leaving[obs[i].1] += 1;
                events[obs[i].1] += usize::from(obs[i].2);
                i += 1;
            }
            rows.push(RiskRow {
                time: t,
                at_risk: remaining[0] + remaining[1],
                events: events[0] + events[1],
                at_risk_by_arm: remaining,
                events_by_arm: events,
            });
            remaining[0] -= leaving[0];
            remaining[1] -= leaving[1];
        }
        Self { rows }
    }

    /// Rows with at least one event.
    pub fn event_rows(&self) -> impl Iterator<Item = &RiskRow> {
        self.rows.iter().filter(|r| r.events > 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SubjectRecord;

    #[test]
    fn all_events() {
        let s = km_estimate(&[1.0, 2.0, 3.0], &[true, true, true]).unwrap();
        assert_eq!(s.value(1.0), 1.0 - 1.0 / 3.0);
        assert_eq!(s.value(2.0), (1.0 - 1.0 / 3.0) * (1.0 - 1.0 / 2.0));
        assert!((s.value(2.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.value(3.0), 0.0);
        assert_eq!(s.value(0.5), 1.0);
    }

    #[test]
    fn no_events_is_flat() {
        let s = km_estimate(&[1.0, 2.0, 3.0], &[false, false, false]).unwrap();
        for t in [0.0, 1.0, 2.5, 10.0] {
            assert_eq!(s.value(t), 1.0);
        }
        assert!(s.breakpoints().is_empty());
    }

    #[test]
    fn censored_middle() {
        let s = km_estimate(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap();
        assert_eq!(s.value(1.0), 1.0 - 1.0 / 3.0);
        assert_eq!(s.value(2.0), 1.0 - 1.0 / 3.0);
        assert_eq!(s.value(3.0), 0.0);
    }

    #[test]
    fn empty_input_errors() {
        assert!(km_estimate(&[], &[]).is_err());
        assert!(censoring_km(&[], &[]).is_err());
        assert!(km_estimate(&[1.0], &[true, false]).is_err());
    }

    #[test]
    fn censoring_estimator() {
        let g = censoring_km(&[1.0, 2.0, 3.0], &[true, true, true]).unwrap();
        assert_eq!(g.value(5.0), 1.0);
        let g = censoring_km(&[1.0, 2.0], &[true, false]).unwrap();
        assert_eq!(g.value(1.9), 1.0);
        assert_eq!(g.value(2.0), 0.0);
    }

    #[test]
    fn censoring_mirrors_survival_without_ties() {
        let t = [0.5, 1.0, 1.5, 2.0, 4.0];
        let e = [true, false, false, true, false];
        let flipped: Vec<bool> = e.iter().map(|x| !x).collect();
        assert_eq!(
            censoring_km(&t, &e).unwrap(),
            km_estimate(&t, &flipped).unwrap()
        );
    }

    #[test]
    fn tie_puts_events_first() {
        // event and censoring at t = 1: the censored subject is at risk for the event,
        // but the censoring risk set at 1 excludes the failed subject
        let s = km_estimate(&[1.0, 1.0, 2.0], &[true, false, true]).unwrap();
        assert_eq!(s.value(1.0), 1.0 - 1.0 / 3.0);
        let g = censoring_km(&[1.0, 1.0, 2.0], &[true, false, true]).unwrap();
        assert_eq!(g.value(1.0), 0.5);
    }

    fn rec(arm: usize, responder: bool, time: f64, event: bool) -> SubjectRecord {
        SubjectRecord {
            arm: Arm::from_index(arm).unwrap(),
            responder,
            time,
            event,
        }
    }

    #[test]
    fn pooled_of_identical_groups() {
        let mut records = Vec::new();
        for arm in 0..2 {
            records.push(rec(arm, true, 1.0, true));
            records.push(rec(arm, false, 2.0, false));
            records.push(rec(arm, true, 3.0, true));
        }
        let ds = TrialDataset::new(records).unwrap();
        let (s, _) = pooled_km(&ds).unwrap();
        let (t, e) = ds.columns(Arm::Control);
        let s0 = km_estimate(&t, &e).unwrap();
        assert_eq!(s, s0);
    }

    #[test]
    fn pooled_half_fail_at_one() {
        let n = 5;
        let mut records = Vec::new();
        for _ in 0..n {
            records.push(rec(0, false, 3.0, false));
            records.push(rec(1, false, 1.0, true));
        }
        let ds = TrialDataset::new(records).unwrap();
        let (s, g) = pooled_km(&ds).unwrap();
        assert_eq!(s.value(1.0), 0.5);
        assert_eq!(g.value(2.0), 1.0);
        assert_eq!(g.value(3.0), 0.0);
    }

    #[test]
    fn responders_subsample() {
        let ds = TrialDataset::new(vec![
            rec(0, true, 2.0, true),
            rec(0, false, 1.0, true),
            rec(0, true, 4.0, true),
            rec(0, false, 3.0, false),
            rec(1, false, 1.0, true),
            rec(1, false, 2.0, true),
        ])
        .unwrap();
        let sx = responders_km(&ds, Arm::Control).unwrap();
        assert_eq!(sx.value(2.0), 0.5);
        assert_eq!(sx.value(4.0), 0.0);
        assert!(responders_km(&ds, Arm::Treatment).is_err());
    }

    #[test]
    fn all_responders_equals_group_curve() {
        let ds = TrialDataset::new(vec![
            rec(0, true, 2.0, true),
            rec(0, true, 1.0, false),
            rec(0, true, 4.0, true),
            rec(1, false, 1.0, true),
            rec(1, false, 2.0, true),
        ])
        .unwrap();
        let (t, e) = ds.columns(Arm::Control);
        assert_eq!(
            responders_km(&ds, Arm::Control).unwrap(),
            km_estimate(&t, &e).unwrap()
        );
    }

    #[test]
    fn left_limits() {
        let s = km_estimate(&[1.0, 2.0], &[true, false]).unwrap();
        assert_eq!(left_limit(&s, 1.0), 1.0);
        assert_eq!(s.value(1.0), 0.5);
        assert_eq!(left_limit(&s, 0.1), 1.0);
        assert_eq!(left_limit(&s, 9.0), 0.5);
    }

    #[test]
    fn risk_table_counts() {
        let ds = TrialDataset::new(vec![
            rec(0, true, 1.0, true),
            rec(0, false, 2.0, false),
            rec(1, true, 1.0, true),
            rec(1, false, 3.0, true),
        ])
        .unwrap();
        let rt = RiskTable::new(&ds);
        assert_eq!(rt.rows.len(), 3);
        assert_eq!(rt.rows[0].at_risk, 4);
        assert_eq!(rt.rows[0].events, 2);
        assert_eq!(rt.rows[1].at_risk_by_arm, [1, 1]);
        assert_eq!(rt.rows[2].events_by_arm, [0, 1]);
        assert_eq!(rt.event_rows().count(), 2);
    }
}
