//! Two-sample binary + right-censored survival data, study configuration,
//! and assumption checks.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::km;
use crate::step::StepFunction;
use crate::weights::WeightSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Control,
    Treatment,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treatment];

    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Treatment => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Arm> {
        match i {
            0 => Some(Arm::Control),
            1 => Some(Arm::Treatment),
            _ => None,
        }
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::Control => Arm::Treatment,
            Arm::Treatment => Arm::Control,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "group {}", self.index())
    }
}

/// One subject: arm, binary response, observed time `min(T, C)` and event flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectRecord {
    pub arm: Arm,
    pub responder: bool,
    pub time: f64,
    pub event: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    records: Vec<SubjectRecord>,
    counts: [usize; 2],
}

impl TrialDataset {
    /// Requires at least two subjects per arm and positive finite times.
    pub fn new(records: Vec<SubjectRecord>) -> Result<Self> {
        if let Some((i, r)) = records
            .iter()
            .enumerate()
            .find(|(_, r)| !(r.time.is_finite() && r.time > 0.0))
        {
            return Err(Error::Row {
                row: i + 1,
                message: format!("time must be positive and finite, got {}", r.time),
            });
        }
        let mut counts = [0usize; 2];
        for r in &records {
            counts[r.arm.index()] += 1;
        }
        for arm in Arm::BOTH {
            if counts[arm.index()] < 2 {
                return Err(Error::InsufficientData(format!(
                    "{arm} has {} subjects, need at least 2",
                    counts[arm.index()]
                )));
            }
        }
        Ok(Self { records, counts })
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn n(&self, arm: Arm) -> usize {
        self.counts[arm.index()]
    }

    pub fn n_total(&self) -> usize {
        self.records.len()
    }

    /// Fraction of the total sample allocated to `arm`.
    pub fn pi_hat(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Control => self.counts[0] as f64 / self.n_total() as f64,
            // computed as a complement so the two fractions sum to exactly one
            Arm::Treatment => 1.0 - self.pi_hat(Arm::Control),
        }
    }

    pub fn arm(&self, arm: Arm) -> impl Iterator<Item = &SubjectRecord> + '_ {
        self.records.iter().filter(move |r| r.arm == arm)
    }

    /// Times and event flags of one arm.
    pub fn columns(&self, arm: Arm) -> (Vec<f64>, Vec<bool>) {
        self.arm(arm).map(|r| (r.time, r.event)).unzip()
    }

    /// Times and event flags of the responders of one arm.
    pub fn responder_columns(&self, arm: Arm) -> (Vec<f64>, Vec<bool>) {
        self.arm(arm)
            .filter(|r| r.responder)
            .map(|r| (r.time, r.event))
            .unzip()
    }

    pub fn all_columns(&self) -> (Vec<f64>, Vec<bool>) {
        self.records.iter().map(|r| (r.time, r.event)).unzip()
    }

    pub fn responders(&self, arm: Arm) -> usize {
        self.arm(arm).filter(|r| r.responder).count()
    }

    /// Observed responder fraction in `arm`.
    pub fn p_hat(&self, arm: Arm) -> f64 {
        self.responders(arm) as f64 / self.n(arm) as f64
    }

    /// Responder fraction over both arms combined.
    pub fn p_hat_pooled(&self) -> f64 {
        self.records.iter().filter(|r| r.responder).count() as f64 / self.n_total() as f64
    }

    /// Number in `arm` with observed time `>= t`.
    pub fn at_risk(&self, arm: Arm, t: f64) -> usize {
        self.arm(arm).filter(|r| r.time >= t).count()
    }

    pub fn max_time(&self, arm: Arm) -> f64 {
        self.arm(arm).map(|r| r.time).fold(0.0, f64::max)
    }

    /// Same subjects with arm labels exchanged.
    pub fn swapped(&self) -> Self {
        let records = self
            .records
            .iter()
            .map(|r| SubjectRecord {
                arm: r.arm.other(),
                ..*r
            })
            .collect();
        Self {
            records,
            counts: [self.counts[1], self.counts[0]],
        }
    }

    /// Same subjects with every time multiplied by `k > 0`.
    pub fn rescaled(&self, k: f64) -> Self {
        let records = self
            .records
            .iter()
            .map(|r| SubjectRecord {
                time: r.time * k,
                ..*r
            })
            .collect();
        Self {
            records,
            counts: self.counts,
        }
    }
}

const COLUMNS: [&str; 4] = ["time", "status", "binary", "treat"];

/// Reads `time,status,binary,treat` CSV (any column order, case-insensitive
/// header).
pub fn parse_csv(text: &str) -> Result<TrialDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(COLUMNS) {
        *slot = header
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Schema(name.to_string()))?;
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Row {
            row: row_no,
            message: e.to_string(),
        })?;
        let field = |k: usize| -> Result<f64> {
            let raw = row.get(idx[k]).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::Row {
                row: row_no,
                message: format!("column `{}`: `{raw}` is not a number", COLUMNS[k]),
            })
        };
        let flag = |k: usize| -> Result<bool> {
            match field(k)? {
                v if v == 0.0 => Ok(false),
                v if v == 1.0 => Ok(true),
                v => Err(Error::Row {
                    row: row_no,
                    message: format!("column `{}` must be 0 or 1, got {v}", COLUMNS[k]),
                }),
            }
        };
        let time = field(0)?;
        if !(time.is_finite() && time > 0.0) {
            return Err(Error::Row {
                row: row_no,
                message: format!("time must be positive and finite, got {time}"),
            });
        }
        records.push(SubjectRecord {
            time,
            event: flag(1)?,
            responder: flag(2)?,
            arm: if flag(3)? {
                Arm::Treatment
            } else {
                Arm::Control
            },
        });
    }
    TrialDataset::new(records)
}

pub fn to_csv(ds: &TrialDataset) -> String {
    let mut out = String::from("time,status,binary,treat\n");
    for r in ds.records() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.time,
            u8::from(r.event),
            u8::from(r.responder),
            r.arm.index()
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceMode {
    #[default]
    Pooled,
    Unpooled,
}

impl std::str::FromStr for VarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pooled" => Ok(VarianceMode::Pooled),
            "unpooled" => Ok(VarianceMode::Unpooled),
            other => Err(Error::Config(format!(
                "variance mode must be `pooled` or `unpooled`, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for VarianceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarianceMode::Pooled => "pooled",
            VarianceMode::Unpooled => "unpooled",
        })
    }
}

/// Estimator of the covariance between the binary and survival scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceForm {
    /// Kernel joint-hazard term over `(tau0, tau_b]` with `K_{tau_b}` and a
    /// responder-KM term over `(max(tau0, tau_b), tau]`.
    #[default]
    Kernel,
    /// Counting-process form `-sum_u K(u) (dN_X(u) - Y_X(u) / Y(u) dN(u)) / Y(u)`
    /// over `(0, tau]`, using the responder share of each risk set.
    RiskSet,
}

impl std::str::FromStr for CovarianceForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "kernel" => Ok(CovarianceForm::Kernel),
            "risk_set" | "riskset" => Ok(CovarianceForm::RiskSet),
            other => Err(Error::Config(format!(
                "covariance form must be `kernel` or `risk-set`, got `{other}`"
            ))),
        }
    }
}

/// Follow-up configuration, endpoint weights and survival weight function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    /// Start of the survival window.
    pub tau0: f64,
    /// Time at which the binary endpoint is assessed.
    pub tau_b: f64,
    /// End of follow-up.
    pub tau: f64,
    pub omega_b: f64,
    pub omega_s: f64,
    #[serde(flatten)]
    pub weights: WeightSpec,
    pub variance_mode: VarianceMode,
    /// Kernel bandwidth for the joint-hazard estimate; `None` selects
    /// `(tau_b - tau0) / 8`.
    pub bandwidth: Option<f64>,
    pub covariance: CovarianceForm,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            tau0: 0.0,
            tau_b: 0.5,
            tau: 1.0,
            omega_b: 0.5,
            omega_s: 0.5,
            weights: WeightSpec::default(),
            variance_mode: VarianceMode::Pooled,
            bandwidth: None,
            covariance: CovarianceForm::Kernel,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let Self {
            tau0, tau_b, tau, ..
        } = *self;
        if ![tau0, tau_b, tau, self.omega_b, self.omega_s]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Config("non-finite time point or weight".into()));
        }
        if !(0.0 <= tau0 && tau0 < tau) {
            return Err(Error::Config(format!(
                "need 0 <= tau0 < tau, got tau0 = {tau0}, tau = {tau}"
            )));
        }
        if !(0.0 < tau_b && tau_b <= tau) {
            return Err(Error::Config(format!(
                "need 0 < tau_b <= tau, got tau_b = {tau_b}, tau = {tau}"
            )));
        }
        for (name, w) in [("omega_b", self.omega_b), ("omega_s", self.omega_s)] {
            if !(w > 0.0 && w < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {w}")));
            }
        }
        if (self.omega_b + self.omega_s - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "endpoint weights must sum to 1, got {} + {}",
                self.omega_b, self.omega_s
            )));
        }
        if let Some(b) = self.bandwidth {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::Config(format!(
                    "bandwidth must be positive, got {b}"
                )));
            }
        }
        self.weights.validate()
    }

    /// `max(tau0, tau_b)`
    pub fn tau_max(&self) -> f64 {
        self.tau0.max(self.tau_b)
    }
}

/// Which failed checks stop the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    /// Every failed assumption blocks.
    #[default]
    Assumptions,
    /// Only an arm without responders blocks. Estimates exhausted before
    /// `tau` are reported but tolerated: curves are carried flat past the
    /// last observation and variance terms whose denominators vanish at the
    /// end of follow-up are dropped.
    Computable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    SurvivalExhausted,
    CensoringExhausted,
    ResponderSurvivalExhausted,
    NoResponders,
    NoneAtRisk,
}

impl IssueKind {
    fn describe(self) -> &'static str {
        match self {
            IssueKind::SurvivalExhausted => "survival estimate is 0 at tau",
            IssueKind::CensoringExhausted => "censoring survival estimate is 0 at tau",
            IssueKind::ResponderSurvivalExhausted => "responder survival estimate is 0 at tau",
            IssueKind::NoResponders => "no responders, responder survival undefined",
            IssueKind::NoneAtRisk => "no subject at risk at tau",
        }
    }

    fn blocks_under(self, strictness: Strictness) -> bool {
        match strictness {
            Strictness::Assumptions => true,
            Strictness::Computable => self == IssueKind::NoResponders,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    pub arm: Arm,
    pub kind: IssueKind,
    pub blocking: bool,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.arm, self.kind.describe())
    }
}

/// Per-arm quantities at `tau` checked by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmCheck {
    pub survival_at_tau: f64,
    pub censoring_at_tau: f64,
    pub responder_survival_at_tau: Option<f64>,
    pub responders: usize,
    pub at_risk_at_tau: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub arms: [ArmCheck; 2],
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_blocking(&self) -> bool {
        self.issues.iter().any(|i| i.blocking)
    }

    pub fn summary(&self) -> String {
        if self.issues.is_empty() {
            return "no issues".into();
        }
        self.issues
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join("; ")
    }

    pub(crate) fn from_curves(
        ds: &TrialDataset,
        tau: f64,
        strictness: Strictness,
        survival: [&StepFunction; 2],
        censoring: [&StepFunction; 2],
        responder_survival: [Option<&StepFunction>; 2],
    ) -> Self {
        let mut issues = Vec::new();
        let arms = Arm::BOTH.map(|arm| {
            let i = arm.index();
            let check = ArmCheck {
                survival_at_tau: survival[i].value(tau),
                censoring_at_tau: censoring[i].value(tau),
                responder_survival_at_tau: responder_survival[i].map(|s| s.value(tau)),
                responders: ds.responders(arm),
                at_risk_at_tau: ds.at_risk(arm, tau),
            };
            let mut flag = |kind: IssueKind| {
                issues.push(Issue {
                    arm,
                    kind,
                    blocking: kind.blocks_under(strictness),
                })
            };
            if check.survival_at_tau <= 0.0 {
                flag(IssueKind::SurvivalExhausted);
            }
            if check.censoring_at_tau <= 0.0 {
                flag(IssueKind::CensoringExhausted);
            }
            match check.responder_survival_at_tau {
                None => flag(IssueKind::NoResponders),
                Some(s) if s <= 0.0 => flag(IssueKind::ResponderSurvivalExhausted),
                Some(_) => {}
            }
            if check.at_risk_at_tau == 0 {
                flag(IssueKind::NoneAtRisk);
            }
            check
        });
        Self { arms, issues }
    }
}

/// Checks the positivity assumptions at `tau` for both arms. Never fails; the
/// caller decides whether a blocking report stops the analysis.
pub fn validate(ds: &TrialDataset, cfg: &StudyConfig) -> ValidationReport {
    validate_with(ds, cfg, Strictness::Assumptions)
}

pub fn validate_with(
    ds: &TrialDataset,
    cfg: &StudyConfig,
    strictness: Strictness,
) -> ValidationReport {
    let curves = Arm::BOTH.map(|arm| {
        let (t, e) = ds.columns(arm);
        // both arms hold at least two subjects, so neither estimator can fail
        let s = km::km_estimate(&t, &e).expect("non-empty arm");
        let g = km::censoring_km(&t, &e).expect("non-empty arm");
        let sx = km::responders_km(ds, arm).ok();
        (s, g, sx)
    });
    ValidationReport::from_curves(
        ds,
        cfg.tau,
        strictness,
        [&curves[0].0, &curves[1].0],
        [&curves[0].1, &curves[1].1],
        [curves[0].2.as_ref(), curves[1].2.as_ref()],
    )
}
